#![allow(dead_code)]

use levnet::{LiabilityNetwork, Matrix, ShockSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

pub struct Instance {
    pub network: LiabilityNetwork,
    pub shock: ShockSpec,
    pub recovery: f64,
    pub beta: f64,
}

pub struct Family {
    /// Banks keep no external liabilities, so every indebted bank has β = 1.
    pub no_outside_creditors: bool,
    pub common_shock: bool,
}

/// Random balance sheets: total leverage 5 to 30, interbank share of assets
/// 5% to 35%, link density 5% to 50%, lognormal link weights.
pub fn random_network(rng: &mut ChaCha8Rng, n: usize, no_outside_creditors: bool) -> LiabilityNetwork {
    let density: f64 = rng.random_range(0.05..0.5);
    let weight = LogNormal::new(0.0, 1.0).unwrap();
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random::<f64>() < density {
                a.set(i, j, weight.sample(rng));
            }
        }
    }
    let held = a.row_sums();
    let owed = a.col_sums();
    let mut ext = Vec::with_capacity(n);
    let mut equity = Vec::with_capacity(n);
    for i in 0..n {
        let leverage: f64 = rng.random_range(5.0..30.0);
        let share: f64 = rng.random_range(0.05..0.35);
        let total = if held[i] > 0.0 { held[i] / share } else { weight.sample(rng) * 3.0 };
        let e = total / leverage;
        let mut ae = total - held[i];
        if no_outside_creditors {
            // A^e chosen so that L^e = 0 exactly.
            ae = e + owed[i] - held[i];
            if ae < 0.0 {
                // needs more equity instead
                equity.push(held[i] - owed[i] + 1e-3 + e);
                ext.push(1e-3 + e);
                continue;
            }
        } else if ae + held[i] - owed[i] - e < 0.0 {
            ae = owed[i] + e - held[i] + rng.random_range(0.0..1.0) * e;
        }
        ext.push(ae);
        equity.push(e);
    }
    LiabilityNetwork::from_exposures(&ext, &equity, &a).expect("random network is consistent")
}

pub fn random_shock(rng: &mut ChaCha8Rng, n: usize, common: bool) -> ShockSpec {
    if common || rng.random::<bool>() {
        ShockSpec::uniform(n, rng.random_range(0.0..0.25))
    } else {
        ShockSpec::PerBank((0..n).map(|_| rng.random_range(0.0..0.3)).collect())
    }
}

pub fn instance(seed: u64, family: &Family) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..=50);
    let network = random_network(&mut rng, n, family.no_outside_creditors);
    let shock = random_shock(&mut rng, n, family.common_shock);
    Instance {
        network,
        shock,
        recovery: rng.random_range(0.0..1.0),
        beta: rng.random_range(0.0..1.0),
    }
}

pub fn general_instance(seed: u64) -> Instance {
    instance(
        seed,
        &Family {
            no_outside_creditors: false,
            common_shock: false,
        },
    )
}

/// Moves weight `delta` around a 2×2 rectangle `(i,j),(i,l),(k,j),(k,l)`,
/// keeping every row and column sum of the liability matrix.
pub fn rewire(network: &LiabilityNetwork, rng: &mut ChaCha8Rng, moves: usize) -> LiabilityNetwork {
    let n = network.n();
    let mut l = network.liabilities().clone();
    let mut done = 0;
    let mut tries = 0;
    while done < moves && tries < 10_000 {
        tries += 1;
        let (i, k) = (rng.random_range(0..n), rng.random_range(0..n));
        let (j, m) = (rng.random_range(0..n), rng.random_range(0..n));
        if i == k || j == m || i == j || i == m || k == j || k == m {
            continue;
        }
        let room = l.get(i, j).min(l.get(k, m));
        if room <= 0.0 {
            continue;
        }
        let delta = room * rng.random_range(0.1..1.0);
        l.set(i, j, l.get(i, j) - delta);
        l.set(k, m, l.get(k, m) - delta);
        l.set(i, m, l.get(i, m) + delta);
        l.set(k, j, l.get(k, j) + delta);
        done += 1;
    }
    network.with_liabilities(l).expect("rewiring keeps marginals")
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
