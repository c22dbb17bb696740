//! Experiment drivers: vulnerability over quarters, over shock sizes and
//! over recovery rates, summarized across reconstructed ensembles.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{self, equity_weights, weighted_sum, AnalysisError};
use crate::ingest::{self, Panel, Quarter};
use crate::models::{self, Model, ModelConfig, ModelError, Trajectory};
use crate::network::{LiabilityNetwork, ShockSpec};
use crate::reconstruct::{self, ReconstructError, ReconstructionConfig};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep specification: {0}")]
    Invalid(String),
    #[error("network has no `{0}` asset class")]
    UnknownAssetClass(String),
    #[error("proved ordering violated: {0}")]
    ProvedOrdering(AnalysisError),
    #[error("{quarter}: EN second round exceeds its upper bound by {excess}")]
    BoundExceeded { quarter: String, excess: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{quarter}: {source}")]
    Reconstruct {
        quarter: String,
        #[source]
        source: ReconstructError,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SweepError {
    /// True when a proved relation failed, which indicates an implementation bug.
    pub fn is_proved_violation(&self) -> bool {
        matches!(self, SweepError::ProvedOrdering(_) | SweepError::BoundExceeded { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AssetClassTarget {
    #[default]
    AllExternal,
    Derivatives,
    ImpairedLoans,
}

impl AssetClassTarget {
    pub fn class_name(self) -> Option<&'static str> {
        match self {
            AssetClassTarget::AllExternal => None,
            AssetClassTarget::Derivatives => Some("derivatives"),
            AssetClassTarget::ImpairedLoans => Some("impaired_loans"),
        }
    }

    /// Shock of size `s` on the targeted assets of `network`.
    pub fn shock(self, network: &LiabilityNetwork, s: f64) -> Result<ShockSpec, SweepError> {
        let m = network.asset_classes().len();
        match self.class_name() {
            None => Ok(ShockSpec::PerClass(vec![s; m])),
            Some(name) => {
                let k = network
                    .class_index(name)
                    .ok_or_else(|| SweepError::UnknownAssetClass(name.to_string()))?;
                Ok(ShockSpec::single_class(m, k, s))
            }
        }
    }
}

impl std::str::FromStr for AssetClassTarget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "all_external" | "all" => Ok(AssetClassTarget::AllExternal),
            "derivatives" => Ok(AssetClassTarget::Derivatives),
            "impaired_loans" => Ok(AssetClassTarget::ImpairedLoans),
            other => Err(format!("unknown asset class `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub models: Vec<Model>,
    pub shock_grid: Vec<f64>,
    /// Exogenous recovery rates; Rogers-Veraart uses the same value as its
    /// `β` unless `rv_beta` is set. Shock sweeps and time series use the
    /// first entry.
    pub recovery_grid: Vec<f64>,
    pub rv_beta: Option<f64>,
    pub asset_class: AssetClassTarget,
    pub ensemble: ReconstructionConfig,
    pub cdr_max_iterations: Option<usize>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            models: Model::ALL.to_vec(),
            shock_grid: vec![0.01],
            recovery_grid: vec![0.0],
            rv_beta: None,
            asset_class: AssetClassTarget::AllExternal,
            ensemble: ReconstructionConfig::default(),
            cdr_max_iterations: None,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), SweepError> {
        if self.models.is_empty() {
            return Err(SweepError::Invalid("no models selected".into()));
        }
        for (name, grid) in [("shock_grid", &self.shock_grid), ("recovery_grid", &self.recovery_grid)] {
            if grid.is_empty() {
                return Err(SweepError::Invalid(format!("{name} is empty")));
            }
            if let Some(v) = grid.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(SweepError::Invalid(format!("{name} value {v} outside [0, 1]")));
            }
        }
        if let Some(b) = self.rv_beta {
            if !(0.0..=1.0).contains(&b) {
                return Err(SweepError::Invalid(format!("rv_beta {b} outside [0, 1]")));
            }
        }
        self.ensemble
            .validate()
            .map_err(|e| SweepError::Invalid(e.to_string()))
    }

    pub fn model_config(&self, model: Model, recovery: f64) -> ModelConfig {
        let mut cfg = ModelConfig::new(model)
            .with_recovery(recovery)
            .with_rv_beta(self.rv_beta.unwrap_or(recovery));
        cfg.max_iterations = self.cdr_max_iterations;
        cfg
    }
}

/// Sample quantile with linear interpolation between order statistics.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let h = (v.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Outcome of all requested models on one network and shock.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub h1: f64,
    pub default_fraction_first: f64,
    pub runs: Vec<(Model, Trajectory)>,
    pub weights: Vec<f64>,
}

impl Evaluation {
    pub fn h_inf(&self, model: Model) -> Option<f64> {
        self.runs
            .iter()
            .find(|(m, _)| *m == model)
            .map(|(_, t)| weighted_sum(t.final_h(), &self.weights))
    }

    pub fn default_fraction_final(&self, model: Model) -> Option<f64> {
        self.runs
            .iter()
            .find(|(m, _)| *m == model)
            .map(|(_, t)| t.default_fraction(t.converged_at))
    }
}

/// Runs `models` and enforces the proved orderings among those present:
/// EN ≤ RV (states and payments), and RV ≤ cDR when cDR runs at zero recovery.
pub fn evaluate(
    network: &LiabilityNetwork,
    shock: &ShockSpec,
    spec: &SweepSpec,
    models: &[Model],
    recovery: f64,
) -> Result<Evaluation, SweepError> {
    let mut runs = Vec::with_capacity(models.len());
    for &m in models {
        let t = models::run(network, shock, &spec.model_config(m, recovery))?;
        if t.hit_iteration_cap() {
            log::warn!("{m} stopped at its iteration cap");
        }
        runs.push((m, t));
    }
    let find = |m: Model| runs.iter().find(|(x, _)| *x == m).map(|(_, t)| t);
    if let (Some(en), Some(rv)) = (find(Model::EisenbergNoe), find(Model::RogersVeraart)) {
        analysis::check_componentwise(en, rv).map_err(SweepError::ProvedOrdering)?;
        analysis::check_payments(en, rv).map_err(SweepError::ProvedOrdering)?;
    }
    if recovery == 0.0 {
        if let (Some(rv), Some(cdr)) = (find(Model::RogersVeraart), find(Model::CyclicDebtRank)) {
            analysis::check_componentwise(rv, cdr).map_err(SweepError::ProvedOrdering)?;
        }
    }
    let weights = equity_weights(network);
    let first = runs.first().map(|(_, t)| t).expect("at least one model");
    Ok(Evaluation {
        h1: weighted_sum(first.first_round_h(), &weights),
        default_fraction_first: first.default_fraction(1),
        runs,
        weights,
    })
}

fn evaluate_all(
    networks: &[&LiabilityNetwork],
    s: f64,
    spec: &SweepSpec,
    models: &[Model],
    recovery: f64,
) -> Result<Vec<Evaluation>, SweepError> {
    networks
        .par_iter()
        .map(|net| {
            let shock = spec.asset_class.shock(net, s)?;
            evaluate(net, &shock, spec, models, recovery)
        })
        .collect()
}

struct Summary {
    median: f64,
    q25: f64,
    q75: f64,
}

fn summarize(values: &[f64]) -> Summary {
    Summary {
        median: quantile(values, 0.5),
        q25: quantile(values, 0.25),
        q75: quantile(values, 0.75),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeseriesRow {
    pub quarter: String,
    pub model: Model,
    #[serde(rename = "H1")]
    pub h1: f64,
    #[serde(rename = "H_inf_median")]
    pub h_inf_median: f64,
    #[serde(rename = "H_inf_q25")]
    pub h_inf_q25: f64,
    #[serde(rename = "H_inf_q75")]
    pub h_inf_q75: f64,
    /// Largest per-realization gap `H(∞) − H(1)` minus the second-round bound (EN only).
    #[serde(skip)]
    pub en_bound_slack: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarterInfo {
    pub quarter: String,
    pub banks: usize,
    pub dropped: usize,
    pub members: usize,
    pub skipped: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeseriesTable {
    pub rows: Vec<TimeseriesRow>,
    pub quarters: Vec<QuarterInfo>,
    pub findings: Vec<String>,
}

/// Seed of the ensemble reconstructed for quarter number `k`.
pub fn quarter_seed(rng_seed: u64, k: usize) -> u64 {
    reconstruct::member_seed(rng_seed, k, u32::MAX)
}

/// Reconstructs an ensemble per quarter and reports median `H(∞)` per model.
pub fn run_timeseries(panel: &Panel, spec: &SweepSpec) -> Result<TimeseriesTable, SweepError> {
    spec.validate()?;
    let filled = ingest::interpolate_missing(panel);
    let s = spec.shock_grid[0];
    let recovery = spec.recovery_grid[0];
    let mut table = TimeseriesTable {
        rows: Vec::new(),
        quarters: Vec::new(),
        findings: Vec::new(),
    };
    for (k, quarter) in filled.panel.quarters().into_iter().enumerate() {
        let qa = ingest::to_aggregates(&filled.panel, quarter);
        let seed = quarter_seed(spec.ensemble.rng_seed, k);
        let config = ReconstructionConfig {
            rng_seed: seed,
            ..spec.ensemble.clone()
        };
        let ensemble = reconstruct::generate_ensemble(&qa.aggregates, &config).map_err(|source| {
            SweepError::Reconstruct {
                quarter: quarter.to_string(),
                source,
            }
        })?;
        table.quarters.push(QuarterInfo {
            quarter: quarter.to_string(),
            banks: qa.aggregates.n(),
            dropped: qa.dropped.len(),
            members: ensemble.members.len(),
            skipped: ensemble.skipped.len(),
            seed,
        });
        let nets: Vec<&LiabilityNetwork> = ensemble.networks().collect();
        let evals = evaluate_all(&nets, s, spec, &spec.models, recovery)?;
        let h1 = quantile(&evals.iter().map(|e| e.h1).collect::<Vec<_>>(), 0.5);
        for &m in &spec.models {
            let hs: Vec<f64> = evals.iter().filter_map(|e| e.h_inf(m)).collect();
            let sm = summarize(&hs);
            let mut slack = None;
            if m == Model::EisenbergNoe {
                let mut worst = f64::NEG_INFINITY;
                for (e, net) in evals.iter().zip(&nets) {
                    let shock = spec.asset_class.shock(net, s)?;
                    let bound = analysis::en_second_round_bound(net, &shock).map_err(SweepError::ProvedOrdering)?;
                    worst = worst.max(e.h_inf(m).unwrap_or(0.0) - e.h1 - bound);
                }
                if worst > analysis::ORDERING_TOLERANCE {
                    return Err(SweepError::BoundExceeded {
                        quarter: quarter.to_string(),
                        excess: worst,
                    });
                }
                slack = Some(worst);
            }
            table.rows.push(TimeseriesRow {
                quarter: quarter.to_string(),
                model: m,
                h1,
                h_inf_median: sm.median,
                h_inf_q25: sm.q25,
                h_inf_q75: sm.q75,
                en_bound_slack: slack,
            });
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockRow {
    pub shock: f64,
    pub model: Model,
    #[serde(rename = "H1")]
    pub h1: f64,
    #[serde(rename = "H_inf_median")]
    pub h_inf_median: f64,
    #[serde(rename = "H_inf_q25")]
    pub h_inf_q25: f64,
    #[serde(rename = "H_inf_q75")]
    pub h_inf_q75: f64,
    pub defaulted_first: f64,
    pub defaulted_final: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockTable {
    pub rows: Vec<ShockRow>,
    pub findings: Vec<String>,
}

impl ShockTable {
    pub fn row(&self, shock: f64, model: Model) -> Option<&ShockRow> {
        self.rows.iter().find(|r| r.shock == shock && r.model == model)
    }
}

/// Median `H(∞)` and default fractions per model along the shock grid.
pub fn run_shock_sweep(networks: &[&LiabilityNetwork], spec: &SweepSpec) -> Result<ShockTable, SweepError> {
    spec.validate()?;
    if networks.is_empty() {
        return Err(SweepError::Invalid("no networks to sweep".into()));
    }
    let recovery = spec.recovery_grid[0];
    let mut rows = Vec::new();
    for &s in &spec.shock_grid {
        let evals = evaluate_all(networks, s, spec, &spec.models, recovery)?;
        let h1 = quantile(&evals.iter().map(|e| e.h1).collect::<Vec<_>>(), 0.5);
        let d1 = quantile(&evals.iter().map(|e| e.default_fraction_first).collect::<Vec<_>>(), 0.5);
        for &m in &spec.models {
            let sm = summarize(&evals.iter().filter_map(|e| e.h_inf(m)).collect::<Vec<_>>());
            let df = quantile(
                &evals.iter().filter_map(|e| e.default_fraction_final(m)).collect::<Vec<_>>(),
                0.5,
            );
            rows.push(ShockRow {
                shock: s,
                model: m,
                h1,
                h_inf_median: sm.median,
                h_inf_q25: sm.q25,
                h_inf_q75: sm.q75,
                defaulted_first: d1,
                defaulted_final: df,
            });
        }
    }
    let mut findings = Vec::new();
    for &m in &spec.models {
        let series: Vec<&ShockRow> = rows.iter().filter(|r| r.model == m).collect();
        for w in series.windows(2) {
            if w[1].shock > w[0].shock && w[1].h_inf_median + analysis::ORDERING_TOLERANCE < w[0].h_inf_median {
                let msg = format!(
                    "{m}: median H(inf) decreases from {} at s = {} to {} at s = {}",
                    w[0].h_inf_median, w[0].shock, w[1].h_inf_median, w[1].shock
                );
                log::warn!("{msg}");
                findings.push(msg);
            }
        }
    }
    Ok(ShockTable { rows, findings })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub recovery: f64,
    pub shock: f64,
    pub model: Model,
    #[serde(rename = "H1")]
    pub h1: f64,
    #[serde(rename = "H_inf_median")]
    pub h_inf_median: f64,
    #[serde(rename = "H_inf_q25")]
    pub h_inf_q25: f64,
    #[serde(rename = "H_inf_q75")]
    pub h_inf_q75: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryTable {
    pub rows: Vec<RecoveryRow>,
    pub findings: Vec<String>,
    /// `|aDR − RV|` of median `H(∞)` at the smallest and largest shock, per recovery rate.
    pub adr_rv_gap: Vec<(f64, f64, f64)>,
}

impl RecoveryTable {
    pub fn row(&self, recovery: f64, shock: f64, model: Model) -> Option<&RecoveryRow> {
        self.rows
            .iter()
            .find(|r| r.recovery == recovery && r.shock == shock && r.model == model)
    }
}

/// Median `H(∞)` over the `(R, s)` grid.
pub fn run_recovery_sweep(networks: &[&LiabilityNetwork], spec: &SweepSpec) -> Result<RecoveryTable, SweepError> {
    spec.validate()?;
    if networks.is_empty() {
        return Err(SweepError::Invalid("no networks to sweep".into()));
    }
    let mut rows = Vec::new();
    for &r in &spec.recovery_grid {
        for &s in &spec.shock_grid {
            let evals = evaluate_all(networks, s, spec, &spec.models, r)?;
            let h1 = quantile(&evals.iter().map(|e| e.h1).collect::<Vec<_>>(), 0.5);
            for &m in &spec.models {
                let sm = summarize(&evals.iter().filter_map(|e| e.h_inf(m)).collect::<Vec<_>>());
                rows.push(RecoveryRow {
                    recovery: r,
                    shock: s,
                    model: m,
                    h1,
                    h_inf_median: sm.median,
                    h_inf_q25: sm.q25,
                    h_inf_q75: sm.q75,
                });
            }
        }
    }
    let mut table = RecoveryTable {
        rows,
        findings: Vec::new(),
        adr_rv_gap: Vec::new(),
    };
    if spec.models.contains(&Model::AcyclicDebtRank) {
        let mut grid = spec.recovery_grid.clone();
        grid.sort_by(f64::total_cmp);
        for &s in &spec.shock_grid {
            for w in grid.windows(2) {
                let a = table.row(w[0], s, Model::AcyclicDebtRank).map(|r| r.h_inf_median);
                let b = table.row(w[1], s, Model::AcyclicDebtRank).map(|r| r.h_inf_median);
                if let (Some(a), Some(b)) = (a, b) {
                    if b > a + analysis::ORDERING_TOLERANCE {
                        let msg = format!("aDR: median H(inf) increases from R = {} to R = {} at s = {s}", w[0], w[1]);
                        log::warn!("{msg}");
                        table.findings.push(msg);
                    }
                }
            }
        }
        if spec.models.contains(&Model::RogersVeraart) {
            let lo = spec.shock_grid.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = spec.shock_grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for &r in &spec.recovery_grid {
                let gap = |s: f64| {
                    let a = table.row(r, s, Model::AcyclicDebtRank).map_or(0.0, |x| x.h_inf_median);
                    let b = table.row(r, s, Model::RogersVeraart).map_or(0.0, |x| x.h_inf_median);
                    (a - b).abs()
                };
                let (g_lo, g_hi) = (gap(lo), gap(hi));
                if g_hi > g_lo + analysis::ORDERING_TOLERANCE {
                    let msg = format!("R = {r}: |aDR - RV| grows from {g_lo} at s = {lo} to {g_hi} at s = {hi}");
                    log::warn!("{msg}");
                    table.findings.push(msg);
                }
                table.adr_rv_gap.push((r, g_lo, g_hi));
            }
        }
    }
    Ok(table)
}

pub fn write_rows<W: Write, T: Serialize>(writer: W, rows: &[T]) -> Result<(), SweepError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Quarter parsed from a `YYYY-Qn` string, for callers that pick one quarter.
pub fn parse_quarter(s: &str) -> Result<Quarter, SweepError> {
    s.parse().map_err(SweepError::Invalid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_quantiles() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert_eq!(quantile(&[7.0], 0.3), 7.0);
    }

    #[test]
    fn spec_validation() {
        let mut spec = SweepSpec::default();
        assert!(spec.validate().is_ok());
        spec.shock_grid = vec![];
        assert!(spec.validate().is_err());
        spec.shock_grid = vec![1.5];
        assert!(spec.validate().is_err());
    }

    #[test]
    fn rv_beta_follows_recovery() {
        let spec = SweepSpec::default();
        assert_eq!(spec.model_config(Model::RogersVeraart, 0.4).rv_beta, 0.4);
        let spec = SweepSpec {
            rv_beta: Some(0.9),
            ..SweepSpec::default()
        };
        assert_eq!(spec.model_config(Model::RogersVeraart, 0.4).rv_beta, 0.9);
    }
}
