//! Distress propagation dynamics.
//!
//! Every model follows the same timeline: `t = 0` is the unshocked
//! allocation, `t = 1` the first-round loss from [`apply_first_round`], and
//! `t >= 2` the second round, iterated until the model's own stopping rule.
//! Trajectories always start with `h(0) = 0` and `h(1)` equal to the shared
//! first-round vector.

mod cascade;
mod clearing;
mod debtrank;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{apply_first_round, LiabilityNetwork, NetworkError, ShockSpec};

pub use cascade::{run_acyclic_debtrank, run_default_cascade};
pub use clearing::{en_vulnerability_form, run_eisenberg_noe, run_rogers_veraart};
pub use debtrank::run_cyclic_debtrank;

/// Default stopping threshold on `max_i |h_i(t) - h_i(t-1)|` for cyclic DebtRank.
pub const DEFAULT_CDR_TOLERANCE: f64 = 1e-10;
/// Default cyclic DebtRank iteration cap, as a multiple of the bank count.
pub const DEFAULT_CDR_ITERATIONS_PER_BANK: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Model {
    #[serde(rename = "EN")]
    EisenbergNoe,
    #[serde(rename = "RV")]
    RogersVeraart,
    #[serde(rename = "DC")]
    DefaultCascade,
    #[serde(rename = "aDR")]
    AcyclicDebtRank,
    #[serde(rename = "cDR")]
    CyclicDebtRank,
}

impl Model {
    pub const ALL: [Model; 5] = [
        Model::EisenbergNoe,
        Model::RogersVeraart,
        Model::DefaultCascade,
        Model::AcyclicDebtRank,
        Model::CyclicDebtRank,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Model::EisenbergNoe => "EN",
            Model::RogersVeraart => "RV",
            Model::DefaultCascade => "DC",
            Model::AcyclicDebtRank => "aDR",
            Model::CyclicDebtRank => "cDR",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Model {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "en" | "eisenberg-noe" => Ok(Model::EisenbergNoe),
            "rv" | "rogers-veraart" => Ok(Model::RogersVeraart),
            "dc" | "default-cascade" => Ok(Model::DefaultCascade),
            "adr" | "acyclic-debtrank" => Ok(Model::AcyclicDebtRank),
            "cdr" | "cyclic-debtrank" => Ok(Model::CyclicDebtRank),
            other => Err(format!("unknown model `{other}`")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("parameter {name} = {value} is out of range")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("Rogers-Veraart alpha ({alpha}) differs from beta ({beta}) without the override flag")]
    UnequalRecoveryCoefficients { alpha: f64, beta: f64 },
    #[error("fictitious default algorithm did not settle after {sweeps} sweeps")]
    NonConvergence { sweeps: usize },
}

/// Run parameters. Each field is only read by the models that define it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model: Model,
    /// Exogenous recovery rate `R` (DC, aDR, cDR).
    pub recovery_rate: f64,
    /// Rogers-Veraart recovery coefficient on interbank assets.
    pub rv_beta: f64,
    /// Rogers-Veraart coefficient on external assets; `None` means equal to `rv_beta`.
    pub rv_alpha: Option<f64>,
    /// Must be set to run Rogers-Veraart with `rv_alpha != rv_beta`.
    pub allow_unequal_alpha: bool,
    /// Iteration cap for cyclic DebtRank; `None` means `10 n`.
    pub max_iterations: Option<usize>,
    pub cdr_tolerance: f64,
}

impl ModelConfig {
    pub fn new(model: Model) -> Self {
        Self {
            model,
            recovery_rate: 0.0,
            rv_beta: 1.0,
            rv_alpha: None,
            allow_unequal_alpha: false,
            max_iterations: None,
            cdr_tolerance: DEFAULT_CDR_TOLERANCE,
        }
    }

    pub fn with_recovery(mut self, recovery_rate: f64) -> Self {
        self.recovery_rate = recovery_rate;
        self
    }

    pub fn with_rv_beta(mut self, beta: f64) -> Self {
        self.rv_beta = beta;
        self
    }

    pub fn with_max_iterations(mut self, cap: usize) -> Self {
        self.max_iterations = Some(cap);
        self
    }

    pub fn for_model(&self, model: Model) -> Self {
        Self { model, ..self.clone() }
    }

    pub(crate) fn checked_recovery(&self) -> Result<f64, ModelError> {
        unit_interval("recovery_rate", self.recovery_rate)
    }

    /// `(alpha, beta)` for the Rogers-Veraart payment rule.
    pub(crate) fn checked_rv(&self) -> Result<(f64, f64), ModelError> {
        let beta = unit_interval("rv_beta", self.rv_beta)?;
        let alpha = match self.rv_alpha {
            None => beta,
            Some(a) => {
                let a = unit_interval("rv_alpha", a)?;
                if a != beta && !self.allow_unequal_alpha {
                    return Err(ModelError::UnequalRecoveryCoefficients { alpha: a, beta });
                }
                a
            }
        };
        Ok((alpha, beta))
    }

    pub(crate) fn checked_cdr(&self, n: usize) -> Result<(f64, usize), ModelError> {
        if !(self.cdr_tolerance > 0.0 && self.cdr_tolerance.is_finite()) {
            return Err(ModelError::InvalidParameter {
                name: "cdr_tolerance",
                value: self.cdr_tolerance,
            });
        }
        let cap = self
            .max_iterations
            .unwrap_or(DEFAULT_CDR_ITERATIONS_PER_BANK * n.max(1));
        if cap == 0 {
            return Err(ModelError::InvalidParameter {
                name: "max_iterations",
                value: 0.0,
            });
        }
        Ok((self.cdr_tolerance, cap))
    }
}

fn unit_interval(name: &'static str, value: f64) -> Result<f64, ModelError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(ModelError::InvalidParameter { name, value })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Converged,
    /// Cyclic DebtRank hit `max_iterations`; the last iterate is kept.
    IterationCap,
}

/// Time series produced by one model run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub model: Model,
    /// `h[t][i]`, with `h[0] = 0` and `h[1]` the first-round losses.
    pub h: Vec<Vec<f64>>,
    /// Clearing models only: `payments[t]` is the payment vector behind the
    /// equities at time `t` (`payments[0] = payments[1] = p̄`).
    pub payments: Option<Vec<Vec<f64>>>,
    /// `{i : h_i(t) = 1}` for each `t`.
    pub default_sets: Vec<Vec<usize>>,
    /// Default cascades and acyclic DebtRank only: banks propagating at `t`.
    pub active_sets: Option<Vec<Vec<usize>>>,
    /// Index of the last recorded time step, i.e. `t = ∞`.
    pub converged_at: usize,
    pub stop: StopReason,
    /// FDA sweeps (including the final confirming one), propagation rounds
    /// with a non-empty active set, or cyclic DebtRank update steps.
    pub iterations: usize,
    /// Clearing models only: `p_j(∞) / p̄_j` (1 when `p̄_j = 0`).
    pub recovery_rates: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn n(&self) -> usize {
        self.h.first().map_or(0, Vec::len)
    }

    pub fn final_h(&self) -> &[f64] {
        &self.h[self.converged_at]
    }

    pub fn first_round_h(&self) -> &[f64] {
        &self.h[1]
    }

    /// `h(t)`, holding the converged value for `t` past convergence.
    pub fn h_at(&self, t: usize) -> &[f64] {
        &self.h[t.min(self.converged_at)]
    }

    pub fn payments_at(&self, t: usize) -> Option<&[f64]> {
        self.payments
            .as_ref()
            .map(|p| p[t.min(p.len() - 1)].as_slice())
    }

    pub fn final_payments(&self) -> Option<&[f64]> {
        self.payments.as_ref().and_then(|p| p.last()).map(Vec::as_slice)
    }

    pub fn default_fraction(&self, t: usize) -> f64 {
        let n = self.n();
        if n == 0 {
            return 0.0;
        }
        self.default_sets[t.min(self.converged_at)].len() as f64 / n as f64
    }

    pub fn hit_iteration_cap(&self) -> bool {
        self.stop == StopReason::IterationCap
    }
}

pub(crate) fn default_set(h: &[f64]) -> Vec<usize> {
    h.iter()
        .enumerate()
        .filter(|(_, &v)| v >= 1.0)
        .map(|(i, _)| i)
        .collect()
}

/// Runs the model named in `config`.
pub fn run(network: &LiabilityNetwork, shock: &ShockSpec, config: &ModelConfig) -> Result<Trajectory, ModelError> {
    match config.model {
        Model::EisenbergNoe => run_eisenberg_noe(network, shock, config),
        Model::RogersVeraart => run_rogers_veraart(network, shock, config),
        Model::DefaultCascade => run_default_cascade(network, shock, config),
        Model::AcyclicDebtRank => run_acyclic_debtrank(network, shock, config),
        Model::CyclicDebtRank => run_cyclic_debtrank(network, shock, config),
    }
}

pub(crate) fn first_round_h(network: &LiabilityNetwork, shock: &ShockSpec) -> Result<Vec<f64>, ModelError> {
    Ok(apply_first_round(network, shock)?.h)
}
