mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use levnet::analysis::{self, AnalysisError};
use levnet::ingest::{self, IngestError, Panel, SynthConfig};
use levnet::reconstruct::{self, EnsembleManifest, ReconstructError};
use levnet::sweep::{self, SweepError};
use levnet::{fixtures, LiabilityNetwork, ModelConfig};
use serde::Serialize;

use config::{FileConfig, InvalidInput, RunArgs, Settings};

const EXIT_VALIDATION: u8 = 2;
const EXIT_PROVED_VIOLATION: u8 = 3;

#[derive(Parser)]
#[command(name = "levnet", version, about = "Stress tests on leverage networks of banks")]
struct Cli {
    /// TOML file with default values for the run flags
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Repeat for more log output
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check or generate balance-sheet panels
    #[command(subcommand)]
    Ingest(IngestCmd),
    /// Reconstruct an ensemble of interbank networks for one quarter
    Reconstruct(RunArgs),
    #[command(subcommand)]
    Run(RunCmd),
    #[command(subcommand)]
    Sweep(SweepCmd),
    #[command(subcommand)]
    Audit(AuditCmd),
    #[command(subcommand)]
    Fixtures(FixturesCmd),
}

#[derive(Subcommand)]
enum IngestCmd {
    /// Load a panel, fill gaps and report what cannot be used
    Validate {
        panel: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Write a synthetic panel
    Synthesize {
        #[arg(long, default_value_t = 50)]
        banks: usize,
        #[arg(long, default_value_t = 8)]
        quarters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Probability that a value cell is left blank
        #[arg(long, default_value_t = 0.0)]
        missingness: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum RunCmd {
    /// Median H(inf) per model for every quarter of a panel
    Timeseries(RunArgs),
}

#[derive(Subcommand)]
enum SweepCmd {
    /// H(inf) and default fractions along a shock grid
    Shock(RunArgs),
    /// H(inf) over a grid of recovery rates and shocks
    Recovery(RunArgs),
}

#[derive(Subcommand)]
enum AuditCmd {
    /// Check the proved model orderings on every network and report the rest
    Ordering(RunArgs),
}

#[derive(Subcommand)]
enum FixturesCmd {
    /// Run the small hand-built networks against their known outcomes
    Run {
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    git_describe: Option<String>,
    settings: &'a Settings,
    seeds: Vec<u64>,
    outputs: Vec<String>,
    findings: Vec<String>,
}

fn git_describe() -> Option<String> {
    let out = std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()?;
    out.status
        .success()
        .then(|| String::from_utf8_lossy(&out.stdout).trim().to_string())
        .filter(|s| !s.is_empty())
}

fn write_manifest(settings: &Settings, command: &str, seeds: Vec<u64>, outputs: Vec<String>, findings: Vec<String>) -> Result<()> {
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        git_describe: git_describe(),
        settings,
        seeds,
        outputs,
        findings,
    };
    let path = settings.out_dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<String> {
    let path = dir.join(name);
    let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    sweep::write_rows(file, rows)?;
    Ok(name.to_string())
}

fn load_panel(settings: &Settings) -> Result<Panel> {
    match (&settings.panel, settings.synthetic) {
        (Some(path), _) => Ok(ingest::load_panel(path).with_context(|| format!("loading {}", path.display()))?),
        (None, Some(n)) => {
            if n < 2 {
                bail!(InvalidInput("--synthetic needs at least 2 banks".into()));
            }
            Ok(ingest::synthesize_panel(&SynthConfig {
                n_banks: n,
                seed: settings.seed,
                ..SynthConfig::default()
            }))
        }
        (None, None) => bail!(InvalidInput("one of --panel or --synthetic is required".into())),
    }
}

fn quarter_aggregates(settings: &Settings) -> Result<ingest::QuarterAggregates> {
    let panel = ingest::interpolate_missing(&load_panel(settings)?).panel;
    let quarter = match &settings.quarter {
        Some(q) => sweep::parse_quarter(q)?,
        None => *panel
            .quarters()
            .first()
            .ok_or_else(|| InvalidInput("panel has no records".into()))?,
    };
    if !panel.quarters().contains(&quarter) {
        bail!(InvalidInput(format!("quarter {quarter} not in panel")));
    }
    let qa = ingest::to_aggregates(&panel, quarter);
    for d in &qa.dropped {
        log::warn!("{quarter}: bank {} dropped ({:?})", d.bank, d.reason);
    }
    Ok(qa)
}

/// Networks for sweeps and audits: read from `--ensemble-dir` or freshly reconstructed.
fn networks(settings: &Settings) -> Result<(Vec<LiabilityNetwork>, Vec<u64>)> {
    if let Some(dir) = &settings.ensemble_dir {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let manifest: EnsembleManifest = serde_json::from_str(&text)?;
        let nets = manifest
            .members
            .iter()
            .map(|m| reconstruct::read_network(&dir.join(&m.liabilities_file), &dir.join(&m.balance_sheet_file)))
            .collect::<Result<Vec<_>, _>>()?;
        let seeds = manifest.members.iter().map(|m| m.seed).collect();
        return Ok((nets, seeds));
    }
    let qa = quarter_aggregates(settings)?;
    let ensemble = reconstruct::generate_ensemble(&qa.aggregates, &settings.reconstruction())?;
    let seeds = ensemble.members.iter().map(|m| m.seed).collect();
    Ok((ensemble.members.into_iter().map(|m| m.network).collect(), seeds))
}

fn prepare(args: &RunArgs, file: &FileConfig) -> Result<Settings> {
    let settings = Settings::resolve(args, file)?;
    fs::create_dir_all(&settings.out_dir).with_context(|| format!("creating {}", settings.out_dir.display()))?;
    Ok(settings)
}

fn ingest_validate(panel_path: &Path, out_dir: Option<&Path>) -> Result<()> {
    let panel = ingest::load_panel(panel_path).with_context(|| format!("loading {}", panel_path.display()))?;
    let filled = ingest::interpolate_missing(&panel);
    println!(
        "{} records, {} banks, {} quarters, {} missing cells",
        panel.len(),
        panel.banks().len(),
        panel.quarters().len(),
        panel.missing_cells()
    );
    println!(
        "filled {} cells ({} by extrapolation), {} left missing",
        filled.imputed.len(),
        filled.imputed.iter().filter(|c| c.extrapolated).count(),
        filled.issues.len()
    );
    let per_quarter: Vec<_> = filled
        .panel
        .quarters()
        .into_iter()
        .map(|q| ingest::to_aggregates(&filled.panel, q))
        .collect();
    for qa in &per_quarter {
        println!("{}: {} banks usable, {} dropped", qa.quarter, qa.aggregates.n(), qa.dropped.len());
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        #[derive(Serialize)]
        struct Report<'a> {
            imputed: &'a [ingest::ImputedCell],
            issues: &'a [ingest::InterpolationIssue],
            dropped: Vec<(String, &'a [ingest::DroppedBank])>,
        }
        let report = Report {
            imputed: &filled.imputed,
            issues: &filled.issues,
            dropped: per_quarter.iter().map(|qa| (qa.quarter.to_string(), qa.dropped.as_slice())).collect(),
        };
        fs::write(dir.join("validation.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    }
    Ok(())
}

fn reconstruct_cmd(settings: &Settings) -> Result<()> {
    let qa = quarter_aggregates(settings)?;
    let ensemble = reconstruct::generate_ensemble(&qa.aggregates, &settings.reconstruction())?;
    let manifest = reconstruct::write_ensemble(&settings.out_dir, &qa.aggregates, &ensemble)?;
    println!(
        "{}: {} networks over {} banks, mean density {:.4}, {} skipped",
        qa.quarter,
        manifest.members.len(),
        qa.aggregates.n(),
        ensemble.mean_density(),
        manifest.skipped.len()
    );
    Ok(())
}

fn timeseries_cmd(settings: &Settings) -> Result<()> {
    let panel = load_panel(settings)?;
    let table = sweep::run_timeseries(&panel, &settings.spec())?;
    let outputs = vec![
        write_csv(&settings.out_dir, "timeseries.csv", &table.rows)?,
        write_csv(&settings.out_dir, "quarters.csv", &table.quarters)?,
    ];
    let seeds = table.quarters.iter().map(|q| q.seed).collect();
    write_manifest(settings, "run timeseries", seeds, outputs, table.findings.clone())?;
    println!("{} quarters, {} rows", table.quarters.len(), table.rows.len());
    Ok(())
}

fn shock_cmd(settings: &Settings) -> Result<()> {
    let (nets, seeds) = networks(settings)?;
    let refs: Vec<&LiabilityNetwork> = nets.iter().collect();
    let table = sweep::run_shock_sweep(&refs, &settings.spec())?;
    let outputs = vec![write_csv(&settings.out_dir, "shock_sweep.csv", &table.rows)?];
    write_manifest(settings, "sweep shock", seeds, outputs, table.findings.clone())?;
    for f in &table.findings {
        println!("finding: {f}");
    }
    println!("{} networks, {} rows", nets.len(), table.rows.len());
    Ok(())
}

fn recovery_cmd(settings: &Settings) -> Result<()> {
    let (nets, seeds) = networks(settings)?;
    let refs: Vec<&LiabilityNetwork> = nets.iter().collect();
    let table = sweep::run_recovery_sweep(&refs, &settings.spec())?;
    let outputs = vec![write_csv(&settings.out_dir, "recovery_sweep.csv", &table.rows)?];
    write_manifest(settings, "sweep recovery", seeds, outputs, table.findings.clone())?;
    for f in &table.findings {
        println!("finding: {f}");
    }
    println!("{} networks, {} rows", nets.len(), table.rows.len());
    Ok(())
}

#[derive(Serialize)]
struct AuditRow {
    network: usize,
    shock: f64,
    recovery: f64,
    #[serde(rename = "H_EN")]
    h_en: f64,
    #[serde(rename = "H_RV")]
    h_rv: f64,
    #[serde(rename = "H_DC")]
    h_dc: f64,
    #[serde(rename = "H_aDR")]
    h_adr: f64,
    #[serde(rename = "H_cDR")]
    h_cdr: f64,
    empirical_chain_holds: bool,
    dc_exceeds_adr: bool,
    en_exceeds_adr: bool,
    leading_eigenvalue: f64,
}

fn audit_cmd(settings: &Settings) -> Result<()> {
    let (nets, seeds) = networks(settings)?;
    let mut rows = Vec::new();
    for (k, net) in nets.iter().enumerate() {
        for &s in &settings.shock {
            let shock = settings.asset_class.shock(net, s)?;
            for &r in &settings.recovery {
                let cfg = ModelConfig::new(levnet::Model::EisenbergNoe)
                    .with_recovery(r)
                    .with_rv_beta(settings.rv_beta.unwrap_or(r));
                let report = analysis::ordering_audit(net, &shock, &cfg)
                    .with_context(|| format!("network {k}, s = {s}, R = {r}"))?;
                let g = |m| report.global(m).unwrap_or(f64::NAN);
                use levnet::Model::*;
                rows.push(AuditRow {
                    network: k,
                    shock: s,
                    recovery: r,
                    h_en: g(EisenbergNoe),
                    h_rv: g(RogersVeraart),
                    h_dc: g(DefaultCascade),
                    h_adr: g(AcyclicDebtRank),
                    h_cdr: g(CyclicDebtRank),
                    empirical_chain_holds: report.empirical_chain_holds,
                    dc_exceeds_adr: report.dc_exceeds_adr,
                    en_exceeds_adr: report.en_exceeds_adr,
                    leading_eigenvalue: report.leading_eigenvalue,
                });
            }
        }
    }
    let broken = rows.iter().filter(|r| !r.empirical_chain_holds).count();
    let findings = vec![format!(
        "empirical chain EN <= DC <= RV <= aDR <= cDR broken in {broken} of {} cases",
        rows.len()
    )];
    let outputs = vec![write_csv(&settings.out_dir, "ordering_audit.csv", &rows)?];
    write_manifest(settings, "audit ordering", seeds, outputs, findings.clone())?;
    println!("{} cases checked; proved orderings hold; {}", rows.len(), findings[0]);
    Ok(())
}

fn fixtures_cmd(out_dir: Option<&Path>) -> Result<bool> {
    let checks = fixtures::golden_checks();
    for c in &checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        println!("{status} {}: expected {}, got {} (tol {:e})", c.name, c.expected, c.actual, c.tolerance);
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} of {} checks pass", checks.len() - failed, checks.len());
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("fixtures.json"), serde_json::to_string_pretty(&checks)? + "\n")?;
    }
    Ok(failed == 0)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Ingest(IngestCmd::Validate { panel, out_dir }) => ingest_validate(&panel, out_dir.as_deref())?,
        Command::Ingest(IngestCmd::Synthesize {
            banks,
            quarters,
            seed,
            missingness,
            out,
        }) => {
            if banks < 2 || !(0.0..1.0).contains(&missingness) {
                bail!(InvalidInput("need at least 2 banks and missingness in [0, 1)".into()));
            }
            let panel = ingest::synthesize_panel(&SynthConfig {
                n_banks: banks,
                n_quarters: quarters,
                seed,
                missingness,
                ..SynthConfig::default()
            });
            ingest::save_panel(&out, &panel)?;
            println!("wrote {} records to {}", panel.len(), out.display());
        }
        Command::Reconstruct(args) => reconstruct_cmd(&prepare(&args, &file)?)?,
        Command::Run(RunCmd::Timeseries(args)) => timeseries_cmd(&prepare(&args, &file)?)?,
        Command::Sweep(SweepCmd::Shock(args)) => shock_cmd(&prepare(&args, &file)?)?,
        Command::Sweep(SweepCmd::Recovery(args)) => recovery_cmd(&prepare(&args, &file)?)?,
        Command::Audit(AuditCmd::Ordering(args)) => audit_cmd(&prepare(&args, &file)?)?,
        Command::Fixtures(FixturesCmd::Run { out_dir }) => {
            if !fixtures_cmd(out_dir.as_deref())? {
                return Ok(ExitCode::from(EXIT_VALIDATION));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<SweepError>() {
            if e.is_proved_violation() {
                return EXIT_PROVED_VIOLATION;
            }
            if matches!(e, SweepError::Invalid(_) | SweepError::UnknownAssetClass(_)) {
                return EXIT_VALIDATION;
            }
        }
        if let Some(e) = cause.downcast_ref::<AnalysisError>() {
            if matches!(
                e,
                AnalysisError::ProvedOrderingViolated { .. } | AnalysisError::PaymentOrderingViolated { .. }
            ) {
                return EXIT_PROVED_VIOLATION;
            }
        }
        if cause.downcast_ref::<InvalidInput>().is_some()
            || cause.downcast_ref::<IngestError>().is_some()
            || matches!(
                cause.downcast_ref::<ReconstructError>(),
                Some(ReconstructError::InvalidConfig(_) | ReconstructError::UnreachableDensity { .. })
            )
        {
            return EXIT_VALIDATION;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
