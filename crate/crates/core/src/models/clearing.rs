//! Eisenberg-Noe and Rogers-Veraart clearing via the fictitious default algorithm.

use nalgebra::{DMatrix, DVector};

use super::{default_set, ModelConfig, ModelError, Model, StopReason, Trajectory};
use crate::network::{apply_first_round, LiabilityNetwork, ShockSpec};

const PICARD_MAX_STEPS: usize = 100_000;

struct Clearing {
    /// FDA iterates; `iterates[0] = p̄`.
    iterates: Vec<Vec<f64>>,
    /// Default set after each iterate.
    defaulted: Vec<Vec<bool>>,
    sweeps: usize,
}

fn default_tolerance(pbar: f64) -> f64 {
    1e-12 * pbar.max(1.0)
}

/// Payments into each bank: `Σ_j Π_ji p_j`.
fn inflow(pi: &crate::Matrix, p: &[f64]) -> Vec<f64> {
    let n = p.len();
    let mut out = vec![0.0; n];
    for j in 0..n {
        if p[j] == 0.0 {
            continue;
        }
        for (i, o) in out.iter_mut().enumerate() {
            let w = pi.get(j, i);
            if w != 0.0 {
                *o += w * p[j];
            }
        }
    }
    out
}

/// Runs the fictitious default algorithm. Defaulted banks pay
/// `beta * inflow + alpha * a`, everyone else pays `p̄`.
fn fictitious_default(
    network: &LiabilityNetwork,
    shocked_assets: &[f64],
    alpha: f64,
    beta: f64,
) -> Result<Clearing, ModelError> {
    let n = network.n();
    let rel = network.relative_liabilities();
    let pbar = &rel.total_obligations;
    let pi = &rel.pi_matrix;

    let mut p = pbar.clone();
    let mut defaulted = vec![false; n];
    let mut out = Clearing {
        iterates: vec![p.clone()],
        defaulted: vec![defaulted.clone()],
        sweeps: 0,
    };

    loop {
        out.sweeps += 1;
        if out.sweeps > n + 1 {
            return Err(ModelError::NonConvergence { sweeps: out.sweeps });
        }
        let inc = inflow(pi, &p);
        let mut grew = false;
        for i in 0..n {
            if !defaulted[i] && inc[i] + shocked_assets[i] < pbar[i] - default_tolerance(pbar[i]) {
                defaulted[i] = true;
                grew = true;
            }
        }
        if !grew {
            return Ok(out);
        }
        let d: Vec<usize> = (0..n).filter(|&i| defaulted[i]).collect();
        let next = solve_defaulted(pi, pbar, &p, &d, &defaulted, shocked_assets, alpha, beta);
        p = next;
        out.iterates.push(p.clone());
        out.defaulted.push(defaulted.clone());
    }
}

#[allow(clippy::too_many_arguments)]
fn solve_defaulted(
    pi: &crate::Matrix,
    pbar: &[f64],
    prev: &[f64],
    d: &[usize],
    defaulted: &[bool],
    a: &[f64],
    alpha: f64,
    beta: f64,
) -> Vec<f64> {
    let n = pbar.len();
    let k = d.len();
    let mut m = DMatrix::<f64>::zeros(k, k);
    let mut rhs = DVector::<f64>::zeros(k);
    for (r, &i) in d.iter().enumerate() {
        m[(r, r)] = 1.0;
        for (c, &j) in d.iter().enumerate() {
            m[(r, c)] -= beta * pi.get(j, i);
        }
        let fixed: f64 = (0..n)
            .filter(|&j| !defaulted[j])
            .map(|j| pi.get(j, i) * pbar[j])
            .sum();
        rhs[r] = beta * fixed + alpha * a[i];
    }

    let mut p = prev.to_vec();
    let solved = m.lu().solve(&rhs).filter(|x| {
        x.iter().zip(d).all(|(&v, &i)| {
            let tol = default_tolerance(pbar[i]) * 1e3;
            v.is_finite() && v >= -tol && v <= prev[i] + tol
        })
    });
    match solved {
        Some(x) => {
            for (r, &i) in d.iter().enumerate() {
                p[i] = x[r].clamp(0.0, prev[i]);
            }
        }
        None => {
            log::debug!("linear clearing solve rejected; falling back to fixed-point iteration");
            for _ in 0..PICARD_MAX_STEPS {
                let inc = inflow(pi, &p);
                let mut change = 0.0f64;
                for &i in d {
                    let v = (beta * inc[i] + alpha * a[i]).clamp(0.0, prev[i]);
                    change = change.max((v - p[i]).abs());
                    p[i] = v;
                }
                if change <= 1e-15 * pbar.iter().cloned().fold(1.0, f64::max) {
                    break;
                }
            }
        }
    }
    p
}

fn clearing_trajectory(
    model: Model,
    network: &LiabilityNetwork,
    shock: &ShockSpec,
    alpha: f64,
    beta: f64,
) -> Result<Trajectory, ModelError> {
    let n = network.n();
    let first = apply_first_round(network, shock)?;
    let run = fictitious_default(network, &first.shocked_external_assets, alpha, beta)?;
    let rel = network.relative_liabilities();
    let pbar = &rel.total_obligations;
    let equity = network.equity();

    let mut payments = vec![pbar.clone(), pbar.clone()];
    let mut h = vec![vec![0.0; n], first.h.clone()];
    for (p, d) in run.iterates.iter().zip(&run.defaulted).skip(1) {
        let shortfall: Vec<f64> = pbar.iter().zip(p).map(|(b, p)| b - p).collect();
        let lost = inflow(&rel.pi_matrix, &shortfall);
        let ht = (0..n)
            .map(|i| {
                if d[i] {
                    1.0
                } else {
                    ((first.external_loss[i] + lost[i]) / equity[i]).min(1.0)
                }
            })
            .collect();
        h.push(ht);
        payments.push(p.clone());
    }
    let final_p = payments.last().expect("non-empty");
    let recovery_rates = final_p
        .iter()
        .zip(pbar)
        .map(|(p, b)| if *b > 0.0 { p / b } else { 1.0 })
        .collect();
    let converged_at = h.len() - 1;
    Ok(Trajectory {
        model,
        default_sets: h.iter().map(|v| default_set(v)).collect(),
        h,
        payments: Some(payments),
        active_sets: None,
        converged_at,
        stop: StopReason::Converged,
        iterations: run.sweeps,
        recovery_rates: Some(recovery_rates),
    })
}

/// Eisenberg-Noe clearing: defaulted banks pass on all they receive plus
/// their shocked external assets.
pub fn run_eisenberg_noe(
    network: &LiabilityNetwork,
    shock: &ShockSpec,
    _config: &ModelConfig,
) -> Result<Trajectory, ModelError> {
    clearing_trajectory(Model::EisenbergNoe, network, shock, 1.0, 1.0)
}

/// Rogers-Veraart clearing: defaulted banks recover only `β` of interbank
/// inflows and `α` of external assets. With `α = β = 1` it coincides with
/// Eisenberg-Noe bit for bit.
pub fn run_rogers_veraart(
    network: &LiabilityNetwork,
    shock: &ShockSpec,
    config: &ModelConfig,
) -> Result<Trajectory, ModelError> {
    let (alpha, beta) = config.checked_rv()?;
    clearing_trajectory(Model::RogersVeraart, network, shock, alpha, beta)
}

/// Recomputes `h(t)` of a clearing trajectory from its payment vectors using
/// the interbank leverage matrix:
/// `h_i(t+1) = min(1, h_i(t) + Σ_j l^b_ij (p_j(t) - p_j(t+1)) / p̄_j)`.
pub fn en_vulnerability_form(network: &LiabilityNetwork, trajectory: &Trajectory) -> Option<Vec<Vec<f64>>> {
    let payments = trajectory.payments.as_ref()?;
    let n = network.n();
    let lev = network.leverage_decomposition().interbank_leverage;
    let pbar = network.relative_liabilities().total_obligations;
    let mut h = vec![trajectory.h[0].clone(), trajectory.h[1].clone()];
    for t in 1..payments.len() - 1 {
        let prev = &h[t];
        let next = (0..n)
            .map(|i| {
                let mut v = prev[i];
                for j in 0..n {
                    if pbar[j] > 0.0 {
                        v += lev.get(i, j) * (payments[t][j] - payments[t + 1][j]) / pbar[j];
                    }
                }
                v.min(1.0)
            })
            .collect();
        h.push(next);
    }
    Some(h)
}
