//! Cyclic DebtRank: distress increments propagate along every walk.

use super::{default_set, first_round_h, ModelConfig, ModelError, Model, StopReason, Trajectory};
use crate::network::{LiabilityNetwork, ShockSpec};

/// `h(t+1) = min(1, h(t) + (1 - R) l^b (h(t) - h(t-1)))`, stopping once
/// `max |h(t) - h(t-1)| < ε` or after `max_iterations` updates.
pub fn run_cyclic_debtrank(
    network: &LiabilityNetwork,
    shock: &ShockSpec,
    config: &ModelConfig,
) -> Result<Trajectory, ModelError> {
    let recovery = config.checked_recovery()?;
    let n = network.n();
    let (eps, cap) = config.checked_cdr(n)?;
    let lev = network.leverage_decomposition().interbank_leverage;
    let mut h = vec![vec![0.0; n], first_round_h(network, shock)?];
    let mut steps = 0;
    let stop = loop {
        let t = h.len() - 1;
        let delta: Vec<f64> = h[t].iter().zip(&h[t - 1]).map(|(a, b)| a - b).collect();
        if delta.iter().all(|d| d.abs() < eps) {
            break StopReason::Converged;
        }
        if steps >= cap {
            log::warn!("cyclic DebtRank stopped at the iteration cap ({cap})");
            break StopReason::IterationCap;
        }
        let next: Vec<f64> = (0..n)
            .map(|i| {
                let add: f64 = lev.row(i).iter().zip(&delta).map(|(l, d)| l * d).sum();
                (h[t][i] + (1.0 - recovery) * add).min(1.0)
            })
            .collect();
        h.push(next);
        steps += 1;
    };
    let converged_at = h.len() - 1;
    Ok(Trajectory {
        model: Model::CyclicDebtRank,
        default_sets: h.iter().map(|v| default_set(v)).collect(),
        h,
        payments: None,
        active_sets: None,
        converged_at,
        stop,
        iterations: steps,
        recovery_rates: None,
    })
}
