use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use levnet::sweep::{AssetClassTarget, SweepSpec};
use levnet::reconstruct::ReconstructionConfig;
use levnet::Model;
use serde::{Deserialize, Serialize};

/// Keys accepted in the `--config` TOML file. Every key mirrors a flag.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub ensemble_size: Option<usize>,
    pub density: Option<f64>,
    pub models: Option<Vec<String>>,
    pub asset_class: Option<String>,
    pub shock: Option<Vec<f64>>,
    pub recovery: Option<Vec<f64>>,
    pub rv_beta: Option<f64>,
    pub cdr_max_iterations: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub panel: Option<PathBuf>,
    pub synthetic: Option<usize>,
    pub quarter: Option<String>,
    pub ensemble_dir: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text)
            .map_err(|e| InvalidInput(format!("{}: {e}", path.display())))
            .map_err(Into::into)
    }
}

/// Input that fails validation; mapped to exit code 2.
#[derive(Debug)]
pub struct InvalidInput(pub String);

impl std::fmt::Display for InvalidInput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InvalidInput {}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Panel CSV with quarterly balance sheets
    #[arg(long)]
    pub panel: Option<PathBuf>,
    /// Use a synthetic panel with this many banks instead of --panel
    #[arg(long)]
    pub synthetic: Option<usize>,
    /// Quarter (YYYY-Qn) to reconstruct; defaults to the first one
    #[arg(long)]
    pub quarter: Option<String>,
    /// Directory written by `reconstruct`; used instead of reconstructing
    #[arg(long)]
    pub ensemble_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub ensemble_size: Option<usize>,
    /// Target link density of reconstructed networks
    #[arg(long)]
    pub density: Option<f64>,
    /// Comma-separated model codes (EN, RV, DC, aDR, cDR)
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<String>>,
    /// all_external, derivatives or impaired_loans
    #[arg(long)]
    pub asset_class: Option<String>,
    /// Comma-separated shock sizes in [0, 1]
    #[arg(long, value_delimiter = ',')]
    pub shock: Option<Vec<f64>>,
    /// Comma-separated recovery rates in [0, 1]
    #[arg(long, value_delimiter = ',')]
    pub recovery: Option<Vec<f64>>,
    /// Rogers-Veraart recovery coefficient; defaults to the recovery rate
    #[arg(long)]
    pub rv_beta: Option<f64>,
    #[arg(long)]
    pub cdr_max_iterations: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Fully resolved parameters of one invocation, recorded in the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct Settings {
    pub seed: u64,
    pub ensemble_size: usize,
    pub density: f64,
    pub models: Vec<Model>,
    pub asset_class: AssetClassTarget,
    pub shock: Vec<f64>,
    pub recovery: Vec<f64>,
    pub rv_beta: Option<f64>,
    pub cdr_max_iterations: Option<usize>,
    pub out_dir: PathBuf,
    pub panel: Option<PathBuf>,
    pub synthetic: Option<usize>,
    pub quarter: Option<String>,
    pub ensemble_dir: Option<PathBuf>,
}

fn parse_models(codes: &[String]) -> anyhow::Result<Vec<Model>> {
    let mut out = Vec::new();
    for c in codes {
        let m: Model = c.trim().parse().map_err(InvalidInput)?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(out)
}

impl Settings {
    /// Flags win over the config file, which wins over defaults.
    pub fn resolve(args: &RunArgs, file: &FileConfig) -> anyhow::Result<Self> {
        let models = match args.models.as_ref().or(file.models.as_ref()) {
            Some(codes) => parse_models(codes)?,
            None => Model::ALL.to_vec(),
        };
        let asset_class = match args.asset_class.as_ref().or(file.asset_class.as_ref()) {
            Some(s) => s.parse().map_err(InvalidInput)?,
            None => AssetClassTarget::AllExternal,
        };
        let settings = Settings {
            seed: args.seed.or(file.seed).unwrap_or(0),
            ensemble_size: args.ensemble_size.or(file.ensemble_size).unwrap_or(1000),
            density: args.density.or(file.density).unwrap_or(0.2),
            models,
            asset_class,
            shock: args.shock.clone().or_else(|| file.shock.clone()).unwrap_or_else(|| vec![0.01]),
            recovery: args.recovery.clone().or_else(|| file.recovery.clone()).unwrap_or_else(|| vec![0.0]),
            rv_beta: args.rv_beta.or(file.rv_beta),
            cdr_max_iterations: args.cdr_max_iterations.or(file.cdr_max_iterations),
            out_dir: args
                .out_dir
                .clone()
                .or_else(|| file.out_dir.clone())
                .unwrap_or_else(|| PathBuf::from("out")),
            panel: args.panel.clone().or_else(|| file.panel.clone()),
            synthetic: args.synthetic.or(file.synthetic),
            quarter: args.quarter.clone().or_else(|| file.quarter.clone()),
            ensemble_dir: args.ensemble_dir.clone().or_else(|| file.ensemble_dir.clone()),
        };
        settings.spec().validate().map_err(|e| InvalidInput(e.to_string()))?;
        if settings.panel.is_some() && settings.synthetic.is_some() {
            return Err(InvalidInput("--panel and --synthetic are mutually exclusive".into()).into());
        }
        Ok(settings)
    }

    pub fn reconstruction(&self) -> ReconstructionConfig {
        ReconstructionConfig {
            target_density: self.density,
            ensemble_size: self.ensemble_size,
            rng_seed: self.seed,
            ..ReconstructionConfig::default()
        }
    }

    pub fn spec(&self) -> SweepSpec {
        SweepSpec {
            models: self.models.clone(),
            shock_grid: self.shock.clone(),
            recovery_grid: self.recovery.clone(),
            rv_beta: self.rv_beta,
            asset_class: self.asset_class,
            ensemble: self.reconstruction(),
            cdr_max_iterations: self.cdr_max_iterations,
        }
    }
}
