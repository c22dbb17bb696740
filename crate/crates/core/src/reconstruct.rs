//! Interbank network reconstruction from per-bank aggregates.
//!
//! Links are drawn from a fitness model calibrated to a target density, and
//! weights are fitted to the interbank marginals by iterative proportional
//! fitting on the sampled support.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;
use crate::network::{build_network, BalanceSheet, LiabilityNetwork, NetworkError};

#[derive(Debug, Error)]
pub enum ReconstructError {
    #[error("total interbank assets or liabilities is zero")]
    AllZeroTotals,
    #[error("target density {target} is not reachable (supremum {supremum})")]
    UnreachableDensity { target: f64, supremum: f64 },
    #[error("bank {bank} has a positive {side} target but no sampled links")]
    InfeasibleSupport { bank: usize, side: &'static str },
    #[error("IPF did not reach tolerance after {sweeps} sweeps (residual {residual})")]
    IpfNonConvergence { sweeps: usize, residual: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{skipped} of {size} ensemble members were infeasible")]
    TooManySkips { skipped: usize, size: usize },
    #[error("ensemble member {index}: {source}")]
    Member {
        index: usize,
        #[source]
        source: NetworkError,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconstructionConfig {
    pub target_density: f64,
    pub ensemble_size: usize,
    pub ipf_marginal_tolerance: f64,
    pub ipf_max_sweeps: usize,
    pub rng_seed: u64,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        Self {
            target_density: 0.20,
            ensemble_size: 1000,
            ipf_marginal_tolerance: 0.01,
            ipf_max_sweeps: 10_000,
            rng_seed: 0,
        }
    }
}

impl ReconstructionConfig {
    pub fn validate(&self) -> Result<(), ReconstructError> {
        if !(self.target_density > 0.0 && self.target_density <= 1.0) {
            return Err(ReconstructError::InvalidConfig(format!(
                "target_density {} outside (0, 1]",
                self.target_density
            )));
        }
        if self.ensemble_size == 0 {
            return Err(ReconstructError::InvalidConfig("ensemble_size must be positive".into()));
        }
        if !(self.ipf_marginal_tolerance > 0.0) {
            return Err(ReconstructError::InvalidConfig("ipf_marginal_tolerance must be positive".into()));
        }
        if self.ipf_max_sweeps == 0 {
            return Err(ReconstructError::InvalidConfig("ipf_max_sweeps must be positive".into()));
        }
        Ok(())
    }
}

/// Per-bank balance sheets without the bilateral matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub asset_classes: Vec<String>,
    pub bank_ids: Vec<String>,
    pub sheets: Vec<BalanceSheet>,
}

impl Aggregates {
    pub fn n(&self) -> usize {
        self.sheets.len()
    }

    pub fn interbank_assets(&self) -> Vec<f64> {
        self.sheets.iter().map(|s| s.interbank_assets).collect()
    }

    pub fn interbank_liabilities(&self) -> Vec<f64> {
        self.sheets.iter().map(|s| s.interbank_liabilities).collect()
    }
}

/// Scales the larger of total interbank assets and liabilities down to the
/// smaller one, keeping per-bank proportions.
pub fn rebalance_totals(assets: &[f64], liabilities: &[f64]) -> Result<(Vec<f64>, Vec<f64>), ReconstructError> {
    let ta: f64 = assets.iter().sum();
    let tl: f64 = liabilities.iter().sum();
    if !(ta > 0.0 && tl > 0.0) {
        return Err(ReconstructError::AllZeroTotals);
    }
    let total = ta.min(tl);
    let a = if ta > total { assets.iter().map(|v| v * total / ta).collect() } else { assets.to_vec() };
    let l = if tl > total { liabilities.iter().map(|v| v * total / tl).collect() } else { liabilities.to_vec() };
    Ok((a, l))
}

/// `x_i = ½ (A^b_i / A^b + L^b_i / L^b)`.
pub fn fitness(assets: &[f64], liabilities: &[f64]) -> Result<Vec<f64>, ReconstructError> {
    let ta: f64 = assets.iter().sum();
    let tl: f64 = liabilities.iter().sum();
    if !(ta > 0.0 && tl > 0.0) {
        return Err(ReconstructError::AllZeroTotals);
    }
    Ok(assets.iter().zip(liabilities).map(|(a, l)| 0.5 * (a / ta + l / tl)).collect())
}

#[inline]
pub fn link_probability(z: f64, xi: f64, xj: f64) -> f64 {
    let v = z * xi * xj;
    v / (1.0 + v)
}

/// Expected density `(1/(n(n-1))) Σ_{i≠j} p_ij(z)`.
pub fn expected_density(x: &[f64], z: f64) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += link_probability(z, x[i], x[j]);
            }
        }
    }
    sum / (n * (n - 1)) as f64
}

/// Solves `expected_density(x, z) = ρ` for `z` by bisection on `ln z`.
pub fn calibrate_z(x: &[f64], target_density: f64) -> Result<f64, ReconstructError> {
    let n = x.len();
    let positive = x.iter().filter(|&&v| v > 0.0).count();
    let supremum = if n < 2 {
        0.0
    } else {
        (positive * positive.saturating_sub(1)) as f64 / (n * (n - 1)) as f64
    };
    if !(target_density > 0.0) || target_density >= supremum {
        return Err(ReconstructError::UnreachableDensity {
            target: target_density,
            supremum,
        });
    }
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    while expected_density(x, lo.exp()) > target_density {
        lo -= 8.0;
    }
    while expected_density(x, hi.exp()) < target_density {
        hi += 8.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let d = expected_density(x, mid.exp());
        if (d - target_density).abs() < 1e-12 {
            return Ok(mid.exp());
        }
        if d < target_density {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// Independent Bernoulli draws of each off-diagonal link, row-major `n × n`.
pub fn sample_adjacency<R: Rng + ?Sized>(x: &[f64], z: f64, rng: &mut R) -> Vec<bool> {
    let n = x.len();
    let mut adj = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let p = link_probability(z, x[i], x[j]);
                adj[i * n + j] = p > 0.0 && rng.random::<f64>() < p;
            }
        }
    }
    adj
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IpfStats {
    pub sweeps: usize,
    /// Largest absolute deviation of row or column sums from their targets.
    pub absolute_residual: f64,
    /// Largest deviation relative to the target, over positive targets.
    pub relative_residual: f64,
}

fn marginal_residuals(pi: &Matrix, rows: &[f64], cols: &[f64]) -> (f64, f64) {
    let mut abs = 0.0f64;
    let mut rel = 0.0f64;
    for (sums, targets) in [(pi.row_sums(), rows), (pi.col_sums(), cols)] {
        for (s, t) in sums.iter().zip(targets) {
            let d = (s - t).abs();
            abs = abs.max(d);
            if *t > 0.0 {
                rel = rel.max(d / t);
            }
        }
    }
    (abs, rel)
}

/// Fits weights on the support of `adjacency` so that row sums match
/// `row_targets` and column sums match `col_targets`. Starts from
/// `π_ij ∝ prior_i prior_j` on the support and alternates row and column
/// scaling until both the absolute and the relative marginal deviations are
/// below `tolerance`.
pub fn ipf_weights(
    adjacency: &[bool],
    prior: &[f64],
    row_targets: &[f64],
    col_targets: &[f64],
    tolerance: f64,
    max_sweeps: usize,
) -> Result<(Matrix, IpfStats), ReconstructError> {
    let n = row_targets.len();
    if adjacency.len() != n * n || col_targets.len() != n || prior.len() != n {
        return Err(ReconstructError::DimensionMismatch(format!(
            "adjacency {} / prior {} / targets {} and {}",
            adjacency.len(),
            prior.len(),
            n,
            col_targets.len()
        )));
    }
    for i in 0..n {
        if row_targets[i] > 0.0 && !(0..n).any(|j| adjacency[i * n + j]) {
            return Err(ReconstructError::InfeasibleSupport { bank: i, side: "asset" });
        }
        if col_targets[i] > 0.0 && !(0..n).any(|j| adjacency[j * n + i]) {
            return Err(ReconstructError::InfeasibleSupport { bank: i, side: "liability" });
        }
    }
    let mut pi = Matrix::from_fn(n, n, |i, j| {
        if adjacency[i * n + j] && row_targets[i] > 0.0 && col_targets[j] > 0.0 {
            prior[i].max(f64::MIN_POSITIVE) * prior[j].max(f64::MIN_POSITIVE)
        } else {
            0.0
        }
    });
    let mut residual = (f64::INFINITY, f64::INFINITY);
    for sweep in 1..=max_sweeps {
        for (i, s) in pi.row_sums().into_iter().enumerate() {
            if s > 0.0 {
                let f = row_targets[i] / s;
                for j in 0..n {
                    pi.set(i, j, pi.get(i, j) * f);
                }
            }
        }
        for (j, s) in pi.col_sums().into_iter().enumerate() {
            if s > 0.0 {
                let f = col_targets[j] / s;
                for i in 0..n {
                    pi.set(i, j, pi.get(i, j) * f);
                }
            }
        }
        residual = marginal_residuals(&pi, row_targets, col_targets);
        if residual.0 < tolerance && residual.1 < tolerance {
            return Ok((
                pi,
                IpfStats {
                    sweeps: sweep,
                    absolute_residual: residual.0,
                    relative_residual: residual.1,
                },
            ));
        }
    }
    Err(ReconstructError::IpfNonConvergence {
        sweeps: max_sweeps,
        residual: residual.0.max(residual.1),
    })
}

/// Assembles a validated network from aggregates and a fitted asset matrix
/// (entry `(i, j)` is `i`'s claim on `j`). Equity and external assets are
/// kept; interbank totals come from the matrix and external liabilities close
/// the identity. A negative closing entry is absorbed by raising the last
/// external asset class.
pub fn network_from_asset_matrix(aggregates: &Aggregates, assets: &Matrix) -> Result<LiabilityNetwork, NetworkError> {
    let liabilities = assets.transpose();
    let held = assets.row_sums();
    let owed = liabilities.row_sums();
    let sheets = aggregates
        .sheets
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut ext = s.external_assets.clone();
            let mut le = ext.iter().sum::<f64>() + held[i] - owed[i] - s.equity;
            if le < 0.0 {
                if let Some(last) = ext.last_mut() {
                    *last -= le;
                }
                le = 0.0;
            }
            BalanceSheet {
                external_assets: ext,
                interbank_assets: held[i],
                interbank_liabilities: owed[i],
                external_liabilities: le,
                equity: s.equity,
            }
        })
        .collect();
    build_network(aggregates.asset_classes.clone(), sheets, liabilities)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of ensemble member `index` on its `attempt`-th draw.
pub fn member_seed(rng_seed: u64, index: usize, attempt: u32) -> u64 {
    splitmix64(splitmix64(splitmix64(rng_seed) ^ index as u64) ^ attempt as u64)
}

#[derive(Debug, Clone)]
pub struct EnsembleMember {
    pub index: usize,
    pub seed: u64,
    pub attempts: u32,
    pub density: f64,
    pub ipf: IpfStats,
    pub network: LiabilityNetwork,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedMember {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Ensemble {
    pub config: ReconstructionConfig,
    pub z: f64,
    pub fitness: Vec<f64>,
    pub members: Vec<EnsembleMember>,
    pub skipped: Vec<SkippedMember>,
}

impl Ensemble {
    pub fn mean_density(&self) -> f64 {
        if self.members.is_empty() {
            return 0.0;
        }
        self.members.iter().map(|m| m.density).sum::<f64>() / self.members.len() as f64
    }

    pub fn networks(&self) -> impl Iterator<Item = &LiabilityNetwork> {
        self.members.iter().map(|m| &m.network)
    }
}

struct Calibrated {
    x: Vec<f64>,
    z: f64,
    rows: Vec<f64>,
    cols: Vec<f64>,
    total: f64,
}

fn calibrate(aggregates: &Aggregates, config: &ReconstructionConfig) -> Result<Calibrated, ReconstructError> {
    let (a, l) = rebalance_totals(&aggregates.interbank_assets(), &aggregates.interbank_liabilities())?;
    let x = fitness(&a, &l)?;
    let z = calibrate_z(&x, config.target_density)?;
    let total: f64 = a.iter().sum();
    let tl: f64 = l.iter().sum();
    Ok(Calibrated {
        rows: a.iter().map(|v| v / total).collect(),
        cols: l.iter().map(|v| v / tl).collect(),
        x,
        z,
        total,
    })
}

fn draw_member(
    aggregates: &Aggregates,
    config: &ReconstructionConfig,
    cal: &Calibrated,
    index: usize,
) -> Result<Result<EnsembleMember, SkippedMember>, ReconstructError> {
    let n = aggregates.n();
    let mut last_reason = String::new();
    for attempt in 0..2u32 {
        let seed = member_seed(config.rng_seed, index, attempt);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let adj = sample_adjacency(&cal.x, cal.z, &mut rng);
        let links = adj.iter().filter(|&&b| b).count();
        if links == 0 {
            last_reason = "empty adjacency".into();
            continue;
        }
        let fitted = ipf_weights(
            &adj,
            &cal.x,
            &cal.rows,
            &cal.cols,
            config.ipf_marginal_tolerance,
            config.ipf_max_sweeps,
        );
        let (pi, ipf) = match fitted {
            Ok(v) => v,
            Err(e @ (ReconstructError::InfeasibleSupport { .. } | ReconstructError::IpfNonConvergence { .. })) => {
                last_reason = e.to_string();
                continue;
            }
            Err(e) => return Err(e),
        };
        let assets = Matrix::from_fn(n, n, |i, j| pi.get(i, j) * cal.total);
        let network = network_from_asset_matrix(aggregates, &assets)
            .map_err(|source| ReconstructError::Member { index, source })?;
        let density = network.density();
        return Ok(Ok(EnsembleMember {
            index,
            seed,
            attempts: attempt + 1,
            density,
            ipf,
            network,
        }));
    }
    Ok(Err(SkippedMember {
        index,
        reason: last_reason,
    }))
}

/// Draws `ensemble_size` networks. Members are generated in parallel but
/// each depends only on `(rng_seed, index)`, so the result is identical to a
/// serial run. Infeasible draws are retried once and then skipped; more
/// than 1% skips abort.
pub fn generate_ensemble(aggregates: &Aggregates, config: &ReconstructionConfig) -> Result<Ensemble, ReconstructError> {
    config.validate()?;
    let cal = calibrate(aggregates, config)?;
    let results: Vec<_> = (0..config.ensemble_size)
        .into_par_iter()
        .map(|index| draw_member(aggregates, config, &cal, index))
        .collect();
    let mut members = Vec::with_capacity(config.ensemble_size);
    let mut skipped = Vec::new();
    for r in results {
        match r? {
            Ok(m) => members.push(m),
            Err(s) => {
                log::warn!("ensemble member {} skipped: {}", s.index, s.reason);
                skipped.push(s);
            }
        }
    }
    if skipped.len() * 100 > config.ensemble_size {
        return Err(ReconstructError::TooManySkips {
            skipped: skipped.len(),
            size: config.ensemble_size,
        });
    }
    Ok(Ensemble {
        config: config.clone(),
        z: cal.z,
        fitness: cal.x,
        members,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestMember {
    pub index: usize,
    pub seed: u64,
    pub attempts: u32,
    pub density: f64,
    pub ipf_sweeps: usize,
    pub liabilities_file: String,
    pub balance_sheet_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub config: ReconstructionConfig,
    pub z: f64,
    pub asset_classes: Vec<String>,
    pub bank_ids: Vec<String>,
    pub members: Vec<ManifestMember>,
    pub skipped: Vec<SkippedMember>,
}

/// Writes `(i, j, L_ij)` triples for the positive entries of the liability matrix.
pub fn write_liabilities_csv(path: &Path, network: &LiabilityNetwork) -> Result<(), ReconstructError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["i", "j", "liability"])?;
    let l = network.liabilities();
    for i in 0..l.rows() {
        for j in 0..l.cols() {
            let v = l.get(i, j);
            if v > 0.0 {
                w.write_record([i.to_string(), j.to_string(), v.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_balance_sheet_csv(path: &Path, bank_ids: &[String], network: &LiabilityNetwork) -> Result<(), ReconstructError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["bank".to_string(), "bank_id".to_string(), "equity".to_string()];
    header.extend(network.asset_classes().iter().map(|c| format!("external_assets:{c}")));
    header.extend(
        ["interbank_assets", "interbank_liabilities", "external_liabilities"]
            .iter()
            .map(|s| s.to_string()),
    );
    w.write_record(&header)?;
    for (i, s) in network.balance_sheets().iter().enumerate() {
        let mut row = vec![
            i.to_string(),
            bank_ids.get(i).cloned().unwrap_or_else(|| i.to_string()),
            s.equity.to_string(),
        ];
        row.extend(s.external_assets.iter().map(|v| v.to_string()));
        row.push(s.interbank_assets.to_string());
        row.push(s.interbank_liabilities.to_string());
        row.push(s.external_liabilities.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads back a network written by [`write_liabilities_csv`] and [`write_balance_sheet_csv`].
pub fn read_network(liabilities: &Path, balance_sheets: &Path) -> Result<LiabilityNetwork, ReconstructError> {
    let mut r = csv::Reader::from_path(balance_sheets)?;
    let header = r.headers()?.clone();
    let classes: Vec<String> = header
        .iter()
        .filter_map(|h| h.strip_prefix("external_assets:").map(str::to_string))
        .collect();
    let m = classes.len();
    let parse = |s: &str| -> Result<f64, ReconstructError> {
        s.parse::<f64>()
            .map_err(|e| ReconstructError::DimensionMismatch(format!("bad number `{s}`: {e}")))
    };
    let mut sheets = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 6 + m {
            return Err(ReconstructError::DimensionMismatch(format!("balance-sheet row has {} fields", rec.len())));
        }
        sheets.push(BalanceSheet {
            equity: parse(&rec[2])?,
            external_assets: (0..m).map(|k| parse(&rec[3 + k])).collect::<Result<_, _>>()?,
            interbank_assets: parse(&rec[3 + m])?,
            interbank_liabilities: parse(&rec[4 + m])?,
            external_liabilities: parse(&rec[5 + m])?,
        });
    }
    let n = sheets.len();
    let mut l = Matrix::zeros(n, n);
    let mut r = csv::Reader::from_path(liabilities)?;
    for rec in r.records() {
        let rec = rec?;
        let idx = |s: &str| {
            s.parse::<usize>()
                .ok()
                .filter(|&v| v < n)
                .ok_or_else(|| ReconstructError::DimensionMismatch(format!("bad bank index `{s}`")))
        };
        l.set(idx(&rec[0])?, idx(&rec[1])?, parse(&rec[2])?);
    }
    build_network(classes, sheets, l).map_err(|source| ReconstructError::Member { index: 0, source })
}

/// Writes every member plus `manifest.json` into `dir`.
pub fn write_ensemble(dir: &Path, aggregates: &Aggregates, ensemble: &Ensemble) -> Result<EnsembleManifest, ReconstructError> {
    fs::create_dir_all(dir)?;
    let mut members = Vec::with_capacity(ensemble.members.len());
    for m in &ensemble.members {
        let lf = format!("network_{:05}_liabilities.csv", m.index);
        let bf = format!("network_{:05}_balance_sheets.csv", m.index);
        write_liabilities_csv(&dir.join(&lf), &m.network)?;
        write_balance_sheet_csv(&dir.join(&bf), &aggregates.bank_ids, &m.network)?;
        members.push(ManifestMember {
            index: m.index,
            seed: m.seed,
            attempts: m.attempts,
            density: m.density,
            ipf_sweeps: m.ipf.sweeps,
            liabilities_file: lf,
            balance_sheet_file: bf,
        });
    }
    let manifest = EnsembleManifest {
        config: ensemble.config.clone(),
        z: ensemble.z,
        asset_classes: aggregates.asset_classes.clone(),
        bank_ids: aggregates.bank_ids.clone(),
        members,
        skipped: ensemble.skipped.clone(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}
