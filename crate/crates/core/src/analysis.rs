//! Global vulnerability, Eisenberg-Noe loss accounting and model-ordering audits.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{self, Model, ModelConfig, ModelError, Trajectory};
use crate::network::{apply_first_round, LiabilityNetwork, NetworkError, ShockSpec};

/// Componentwise slack allowed when comparing trajectories across models.
pub const ORDERING_TOLERANCE: f64 = 1e-9;
/// Relative tolerance of the aggregate loss-conservation residual.
pub const CONSERVATION_TOLERANCE: f64 = 1e-6;

const ROUNDOFF: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("time index {t} outside trajectory of length {len}")]
    IndexOutOfRange { t: usize, len: usize },
    #[error("trajectory from {found} carries no payment vectors")]
    ModelMismatch { found: Model },
    #[error("bank {bank} has financial connectivity {beta} < 1")]
    PreconditionViolated { bank: usize, beta: f64 },
    #[error("network {network} differs from the first at bank {bank}")]
    AggregateMismatch { network: usize, bank: usize },
    #[error("{lower} exceeds {upper} at bank {bank}, t = {t} by {gap}")]
    ProvedOrderingViolated {
        lower: Model,
        upper: Model,
        bank: usize,
        t: usize,
        gap: f64,
    },
    #[error("RV payment of bank {bank} exceeds EN payment at t = {t} by {gap}")]
    PaymentOrderingViolated { bank: usize, t: usize, gap: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// `w_i = E_i(0) / Σ_j E_j(0)`.
pub fn equity_weights(network: &LiabilityNetwork) -> Vec<f64> {
    let total = network.total_equity();
    network.equity().iter().map(|e| e / total).collect()
}

pub fn weighted_sum(h: &[f64], weights: &[f64]) -> f64 {
    h.iter().zip(weights).map(|(h, w)| h * w).sum()
}

/// `H(t) = Σ_i w_i h_i(t)`.
pub fn global_vulnerability(trajectory: &Trajectory, network: &LiabilityNetwork, t: usize) -> Result<f64, AnalysisError> {
    let h = trajectory.h.get(t).ok_or(AnalysisError::IndexOutOfRange {
        t,
        len: trajectory.h.len(),
    })?;
    Ok(weighted_sum(h, &equity_weights(network)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VulnerabilityReport {
    pub model: Model,
    pub h1: f64,
    pub h_inf: f64,
    pub second_round: f64,
    pub equity_weights: Vec<f64>,
    /// Banks whose first-round loss reaches their equity.
    pub defaulted_first_round: Vec<usize>,
    /// Members of the first-round default set whose loss equals equity exactly.
    pub boundary_first_round: Vec<usize>,
    pub defaulted_final: Vec<usize>,
    pub converged_at: usize,
}

pub fn vulnerability_report(
    network: &LiabilityNetwork,
    shock: &ShockSpec,
    trajectory: &Trajectory,
) -> Result<VulnerabilityReport, AnalysisError> {
    let weights = equity_weights(network);
    let (d1, boundary) = first_round_defaults(network, shock)?;
    let h1 = weighted_sum(trajectory.first_round_h(), &weights);
    let h_inf = weighted_sum(trajectory.final_h(), &weights);
    if !boundary.is_empty() {
        log::info!("first-round default set includes {} boundary bank(s)", boundary.len());
    }
    Ok(VulnerabilityReport {
        model: trajectory.model,
        h1,
        h_inf,
        second_round: h_inf - h1,
        equity_weights: weights,
        defaulted_first_round: d1,
        boundary_first_round: boundary,
        defaulted_final: trajectory.default_sets[trajectory.converged_at].clone(),
        converged_at: trajectory.converged_at,
    })
}

/// `𝒟(1) = {i : A^e_i s_i ≥ E_i(0)}` and the subset where equality holds.
pub fn first_round_defaults(
    network: &LiabilityNetwork,
    shock: &ShockSpec,
) -> Result<(Vec<usize>, Vec<usize>), AnalysisError> {
    let first = apply_first_round(network, shock)?;
    let equity = network.equity();
    let mut d1 = Vec::new();
    let mut boundary = Vec::new();
    for (i, (&loss, &e)) in first.external_loss.iter().zip(&equity).enumerate() {
        if loss >= e {
            d1.push(i);
            if loss == e {
                boundary.push(i);
            }
        }
    }
    Ok((d1, boundary))
}

fn require_payments(trajectory: &Trajectory) -> Result<&[f64], AnalysisError> {
    trajectory
        .final_payments()
        .ok_or(AnalysisError::ModelMismatch { found: trajectory.model })
}

/// `Σ_i (1 - β_i)(p̄_i - p_i(∞))`: value lost to outside creditors.
fn externalized_shortfall(network: &LiabilityNetwork, payments: &[f64]) -> f64 {
    let rel = network.relative_liabilities();
    rel.total_obligations
        .iter()
        .zip(&rel.financial_connectivity)
        .zip(payments)
        .map(|((pbar, beta), p)| (1.0 - beta) * (pbar - p))
        .sum()
}

/// `(1/ΣE(0)) Σ_i [A^e_i s_i − (1−β_i)(p̄_i − p_i(∞))]`.
pub fn en_closed_form_h(
    network: &LiabilityNetwork,
    shock: &ShockSpec,
    en_trajectory: &Trajectory,
) -> Result<f64, AnalysisError> {
    let payments = require_payments(en_trajectory)?;
    let first = apply_first_round(network, shock)?;
    let loss: f64 = first.external_loss.iter().sum();
    Ok((loss - externalized_shortfall(network, payments)) / network.total_equity())
}

/// `(1/ΣE(0)) [Σ_{i∈𝒟(1)} (A^e_i s_i − E_i(0)) − Σ_i (1−β_i)(p̄_i − p_i(∞))]`.
pub fn en_second_round_exact(
    network: &LiabilityNetwork,
    shock: &ShockSpec,
    en_trajectory: &Trajectory,
) -> Result<f64, AnalysisError> {
    let payments = require_payments(en_trajectory)?;
    let first = apply_first_round(network, shock)?;
    let (d1, _) = first_round_defaults(network, shock)?;
    let equity = network.equity();
    let excess: f64 = d1.iter().map(|&i| first.external_loss[i] - equity[i]).sum();
    Ok((excess - externalized_shortfall(network, payments)) / network.total_equity())
}

/// `(1/ΣE(0)) Σ_{i∈𝒟(1)} β_i (A^e_i s_i − E_i(0))`. Needs no model run.
pub fn en_second_round_bound(network: &LiabilityNetwork, shock: &ShockSpec) -> Result<f64, AnalysisError> {
    let first = apply_first_round(network, shock)?;
    let (d1, _) = first_round_defaults(network, shock)?;
    let beta = network.relative_liabilities().financial_connectivity;
    let equity = network.equity();
    let sum: f64 = d1
        .iter()
        .map(|&i| beta[i] * (first.external_loss[i] - equity[i]))
        .sum();
    Ok(sum / network.total_equity())
}

/// The same bound written with leverages: `Σ_{i∈𝒟(1)} β_i w_i (l^e_i · s_i − 1)`.
pub fn en_second_round_bound_leverage_form(
    network: &LiabilityNetwork,
    shock: &ShockSpec,
) -> Result<f64, AnalysisError> {
    let (d1, _) = first_round_defaults(network, shock)?;
    let beta = network.relative_liabilities().financial_connectivity;
    let lev = network.leverage_decomposition();
    let weights = equity_weights(network);
    let shocked_leverage = |i: usize| -> f64 {
        match shock {
            ShockSpec::PerClass(s) => lev.external_leverage.row(i).iter().zip(s).map(|(l, s)| l * s).sum(),
            ShockSpec::PerBank(s) => lev.external_leverage_total(i) * s[i],
        }
    };
    Ok(d1
        .iter()
        .map(|&i| beta[i] * weights[i] * (shocked_leverage(i) - 1.0))
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    /// `|ΣE(0) − ΣE(∞) − Σ_i s_i A^e_i|`.
    pub residual: f64,
    /// `residual / ΣE(0)`.
    pub relative_residual: f64,
    pub holds: bool,
}

/// Checks that a system without outside creditors neither creates nor
/// destroys value: the aggregate equity loss equals the external-asset loss.
/// Banks with no obligations at all are exempt from the `β_i = 1` requirement;
/// external liabilities below round-off of the balance sheet count as zero.
pub fn conservation_check(
    network: &LiabilityNetwork,
    shock: &ShockSpec,
    en_trajectory: &Trajectory,
) -> Result<ConservationReport, AnalysisError> {
    let rel = network.relative_liabilities();
    for (bank, (pbar, sheet)) in rel.total_obligations.iter().zip(network.balance_sheets()).enumerate() {
        let scale = sheet.external_assets_total() + sheet.interbank_assets + sheet.equity;
        if *pbar > 0.0 && sheet.external_liabilities > ROUNDOFF * scale {
            return Err(AnalysisError::PreconditionViolated {
                bank,
                beta: rel.financial_connectivity[bank],
            });
        }
    }
    let first = apply_first_round(network, shock)?;
    let equity = network.equity();
    let e0: f64 = equity.iter().sum();
    let e_inf: f64 = equity
        .iter()
        .zip(en_trajectory.final_h())
        .map(|(e, h)| e * (1.0 - h))
        .sum();
    let loss: f64 = first.external_loss.iter().sum();
    let residual = (e0 - e_inf - loss).abs();
    let relative_residual = residual / e0;
    Ok(ConservationReport {
        residual,
        relative_residual,
        holds: relative_residual < CONSERVATION_TOLERANCE,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyReport {
    pub h_en: Vec<f64>,
    pub max_gap: f64,
    pub holds: bool,
    /// Per bank, `max − min` of `h_i(∞)` across the networks.
    pub per_bank_dispersion: Vec<f64>,
}

/// Runs Eisenberg-Noe on each network and compares `H(∞)`. Networks must
/// share the bank count and per-bank equity; with `strict`, every
/// balance-sheet entry must match.
pub fn topology_invariance_check(
    networks: &[LiabilityNetwork],
    shock: &ShockSpec,
    strict: bool,
) -> Result<TopologyReport, AnalysisError> {
    let Some(base) = networks.first() else {
        return Ok(TopologyReport {
            h_en: Vec::new(),
            max_gap: 0.0,
            holds: true,
            per_bank_dispersion: Vec::new(),
        });
    };
    for (k, net) in networks.iter().enumerate().skip(1) {
        if net.n() != base.n() {
            return Err(AnalysisError::AggregateMismatch {
                network: k,
                bank: net.n().min(base.n()),
            });
        }
        for (bank, (a, b)) in base.balance_sheets().iter().zip(net.balance_sheets()).enumerate() {
            let same = if strict { a == b } else { a.equity == b.equity };
            if !same {
                return Err(AnalysisError::AggregateMismatch { network: k, bank });
            }
        }
    }
    let cfg = ModelConfig::new(Model::EisenbergNoe);
    let mut h_en = Vec::with_capacity(networks.len());
    let mut lo = vec![f64::INFINITY; base.n()];
    let mut hi = vec![f64::NEG_INFINITY; base.n()];
    for net in networks {
        let t = models::run_eisenberg_noe(net, shock, &cfg)?;
        h_en.push(weighted_sum(t.final_h(), &equity_weights(net)));
        for (i, &h) in t.final_h().iter().enumerate() {
            lo[i] = lo[i].min(h);
            hi[i] = hi[i].max(h);
        }
    }
    let max_gap = h_en.iter().map(|h| (h - h_en[0]).abs()).fold(0.0, f64::max);
    Ok(TopologyReport {
        holds: max_gap <= ORDERING_TOLERANCE,
        max_gap,
        h_en,
        per_bank_dispersion: hi.iter().zip(&lo).map(|(h, l)| h - l).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutcome {
    pub model: Model,
    pub h_final: Vec<f64>,
    pub global_final: f64,
    pub converged_at: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingReport {
    pub outcomes: Vec<ModelOutcome>,
    /// Cyclic DebtRank at zero recovery, the reference for the proved `RV ≤ cDR` bound.
    pub cdr_zero_recovery_final: f64,
    /// `H(∞)` follows EN ≤ DC ≤ RV ≤ aDR ≤ cDR (within tolerance).
    pub empirical_chain_holds: bool,
    /// Adjacent pairs of the empirical chain that are violated.
    pub empirical_chain_violations: Vec<(Model, Model)>,
    pub dc_exceeds_adr: bool,
    pub en_exceeds_adr: bool,
    /// Largest modulus among eigenvalues of the interbank leverage matrix.
    pub leading_eigenvalue: f64,
}

impl OrderingReport {
    pub fn global(&self, model: Model) -> Option<f64> {
        self.outcomes.iter().find(|o| o.model == model).map(|o| o.global_final)
    }
}

/// Checks `lower.h(t) ≤ upper.h(t)` for every bank and time step.
pub fn check_componentwise(lower: &Trajectory, upper: &Trajectory) -> Result<(), AnalysisError> {
    let horizon = lower.converged_at.max(upper.converged_at);
    for t in 0..=horizon {
        for (bank, (a, b)) in lower.h_at(t).iter().zip(upper.h_at(t)).enumerate() {
            if a - b > ORDERING_TOLERANCE {
                return Err(AnalysisError::ProvedOrderingViolated {
                    lower: lower.model,
                    upper: upper.model,
                    bank,
                    t,
                    gap: a - b,
                });
            }
        }
    }
    Ok(())
}

/// Checks `p^RV(t) ≤ p^EN(t)` at every step.
pub fn check_payments(en: &Trajectory, rv: &Trajectory) -> Result<(), AnalysisError> {
    let (Some(pe), Some(pr)) = (&en.payments, &rv.payments) else {
        return Ok(());
    };
    let horizon = pe.len().max(pr.len());
    for t in 0..horizon {
        let a = &pr[t.min(pr.len() - 1)];
        let b = &pe[t.min(pe.len() - 1)];
        for (bank, (r, e)) in a.iter().zip(b).enumerate() {
            let tol = ORDERING_TOLERANCE * e.abs().max(1.0);
            if r - e > tol {
                return Err(AnalysisError::PaymentOrderingViolated { bank, t, gap: r - e });
            }
        }
    }
    Ok(())
}

pub fn leading_eigenvalue(network: &LiabilityNetwork) -> f64 {
    let lev = network.leverage_decomposition().interbank_leverage;
    let n = network.n();
    if n == 0 {
        return 0.0;
    }
    let m = DMatrix::from_row_slice(n, n, lev.as_slice());
    m.complex_eigenvalues().iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Runs all five models with `config` and audits their ordering. The proved
/// relations EN ≤ RV (states and payments) and RV ≤ cDR at zero recovery
/// are enforced; the rest of the empirical chain is only reported.
pub fn ordering_audit(
    network: &LiabilityNetwork,
    shock: &ShockSpec,
    config: &ModelConfig,
) -> Result<OrderingReport, AnalysisError> {
    let weights = equity_weights(network);
    let mut runs = Vec::with_capacity(Model::ALL.len());
    for model in Model::ALL {
        runs.push(models::run(network, shock, &config.for_model(model))?);
    }
    let cdr0 = models::run(
        network,
        shock,
        &config.for_model(Model::CyclicDebtRank).with_recovery(0.0),
    )?;
    let [en, rv, dc, adr, cdr] = [0, 1, 2, 3, 4].map(|k| &runs[k]);
    check_componentwise(en, rv)?;
    check_payments(en, rv)?;
    check_componentwise(rv, &cdr0)?;
    if config.recovery_rate == 0.0 {
        check_componentwise(rv, cdr)?;
    }

    let global = |t: &Trajectory| weighted_sum(t.final_h(), &weights);
    let chain = [en, dc, rv, adr, cdr];
    let empirical_chain_violations: Vec<(Model, Model)> = chain
        .windows(2)
        .filter(|w| global(w[0]) > global(w[1]) + ORDERING_TOLERANCE)
        .map(|w| (w[0].model, w[1].model))
        .collect();
    Ok(OrderingReport {
        outcomes: runs
            .iter()
            .map(|t| ModelOutcome {
                model: t.model,
                h_final: t.final_h().to_vec(),
                global_final: global(t),
                converged_at: t.converged_at,
            })
            .collect(),
        cdr_zero_recovery_final: global(&cdr0),
        empirical_chain_holds: empirical_chain_violations.is_empty(),
        empirical_chain_violations,
        dc_exceeds_adr: global(dc) > global(adr) + ORDERING_TOLERANCE,
        en_exceeds_adr: global(en) > global(adr) + ORDERING_TOLERANCE,
        leading_eigenvalue: leading_eigenvalue(network),
    })
}
