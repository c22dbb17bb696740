//! Default cascades and acyclic DebtRank.

use super::{default_set, first_round_h, ModelConfig, ModelError, Model, StopReason, Trajectory};
use crate::network::{LiabilityNetwork, ShockSpec};

/// Shared propagation loop. A bank is active at `t` the first time
/// `triggers(h_j(t))` holds; each active bank passes `(1 - R) l^b_ij h_j(t)`
/// to every creditor `i` exactly once.
fn propagate_once(
    model: Model,
    network: &LiabilityNetwork,
    shock: &ShockSpec,
    config: &ModelConfig,
    triggers: fn(f64) -> bool,
) -> Result<Trajectory, ModelError> {
    let recovery = config.checked_recovery()?;
    let n = network.n();
    let lev = network.leverage_decomposition().interbank_leverage;
    let mut h = vec![vec![0.0; n], first_round_h(network, shock)?];
    let mut active_sets = vec![Vec::new()];
    let mut propagated = vec![false; n];
    let mut rounds = 0;
    loop {
        let t = h.len() - 1;
        let current = &h[t];
        let active: Vec<usize> = (0..n).filter(|&j| !propagated[j] && triggers(current[j])).collect();
        if active.is_empty() {
            active_sets.push(active);
            break;
        }
        rounds += 1;
        let next: Vec<f64> = (0..n)
            .map(|i| {
                let add: f64 = active.iter().map(|&j| lev.get(i, j) * current[j]).sum();
                (current[i] + (1.0 - recovery) * add).min(1.0)
            })
            .collect();
        for &j in &active {
            propagated[j] = true;
        }
        active_sets.push(active);
        h.push(next);
    }
    let converged_at = h.len() - 1;
    Ok(Trajectory {
        model,
        default_sets: h.iter().map(|v| default_set(v)).collect(),
        h,
        payments: None,
        active_sets: Some(active_sets),
        converged_at,
        stop: StopReason::Converged,
        iterations: rounds,
        recovery_rates: None,
    })
}

/// Only banks that reach `h = 1` propagate, once, on the round they default.
pub fn run_default_cascade(
    network: &LiabilityNetwork,
    shock: &ShockSpec,
    config: &ModelConfig,
) -> Result<Trajectory, ModelError> {
    propagate_once(Model::DefaultCascade, network, shock, config, |h| h >= 1.0)
}

/// Every distressed bank (`h > 0`) propagates once, on the round it first becomes distressed.
pub fn run_acyclic_debtrank(
    network: &LiabilityNetwork,
    shock: &ShockSpec,
    config: &ModelConfig,
) -> Result<Trajectory, ModelError> {
    propagate_once(Model::AcyclicDebtRank, network, shock, config, |h| h > 0.0)
}
