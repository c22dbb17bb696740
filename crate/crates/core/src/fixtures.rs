//! Small hand-built networks with known outcomes.
//!
//! Banks are 0-indexed here; "bank 1" of the usual textbook presentation is
//! index 0.

use serde::Serialize;

use crate::analysis::{self, global_vulnerability};
use crate::matrix::Matrix;
use crate::models::{self, Model, ModelConfig};
use crate::network::{build_network, BalanceSheet, LiabilityNetwork, ShockSpec};

/// Recovery rate used for the DebtRank runs on the four-bank fixtures.
pub const FOUR_BANK_DEBTRANK_RECOVERY: f64 = 0.5;

fn sheet(ae: f64, ab: f64, lb: f64, le: f64, e: f64) -> BalanceSheet {
    BalanceSheet {
        external_assets: vec![ae],
        interbank_assets: ab,
        interbank_liabilities: lb,
        external_liabilities: le,
        equity: e,
    }
}

fn network(sheets: Vec<BalanceSheet>, edges: &[(usize, usize, f64)]) -> LiabilityNetwork {
    let n = sheets.len();
    let mut l = Matrix::zeros(n, n);
    for &(i, j, w) in edges {
        l.set(i, j, w);
    }
    build_network(vec!["external".to_string()], sheets, l).expect("fixture balance sheets are consistent")
}

/// Fragile bank: `A^e = 80, L^e = 60, L^b = 15, E = 5`.
pub fn fragile_bank_sheet() -> BalanceSheet {
    sheet(80.0, 0.0, 15.0, 60.0, 5.0)
}

fn sound_bank(ab: f64, lb: f64) -> BalanceSheet {
    sheet(50.0, ab, lb, 50.0 + ab - lb - 10.0, 10.0)
}

/// Fragile bank 0 owes 15 to bank 1, which owes 15 to bank 2, which owes 15 to bank 3.
pub fn chain() -> LiabilityNetwork {
    network(
        vec![
            fragile_bank_sheet(),
            sound_bank(15.0, 15.0),
            sound_bank(15.0, 15.0),
            sound_bank(15.0, 0.0),
        ],
        &[(0, 1, 15.0), (1, 2, 15.0), (2, 3, 15.0)],
    )
}

/// Fragile bank 0 owes 5 to each of banks 1, 2, 3.
pub fn star() -> LiabilityNetwork {
    network(
        vec![
            fragile_bank_sheet(),
            sound_bank(5.0, 0.0),
            sound_bank(5.0, 0.0),
            sound_bank(5.0, 0.0),
        ],
        &[(0, 1, 5.0), (0, 2, 5.0), (0, 3, 5.0)],
    )
}

/// Chain closed by bank 3 owing 15 back to bank 0. Bank 0 holds that claim,
/// so its external side is `A^e = 90, L^e = 85` to keep `E = 5`.
pub fn cycle() -> LiabilityNetwork {
    network(
        vec![
            sheet(90.0, 15.0, 15.0, 85.0, 5.0),
            sound_bank(15.0, 15.0),
            sound_bank(15.0, 15.0),
            sound_bank(15.0, 15.0),
        ],
        &[(0, 1, 15.0), (1, 2, 15.0), (2, 3, 15.0), (3, 0, 15.0)],
    )
}

/// 10% write-down of bank 0's external assets.
pub fn four_bank_shock() -> ShockSpec {
    ShockSpec::single_bank(4, 0, 0.1)
}

/// Three banks where default cascades end above acyclic DebtRank
/// (10% shock on everyone, zero recovery).
pub fn dc_above_adr() -> (LiabilityNetwork, ShockSpec) {
    let mut a = Matrix::zeros(3, 3);
    a.set(0, 2, 20.0);
    a.set(1, 0, 20.0);
    a.set(2, 1, 15.0);
    let net = LiabilityNetwork::from_exposures(&[100.0, 100.0, 100.0], &[5.0, 15.0, 25.0], &a)
        .expect("consistent exposures");
    (net, ShockSpec::uniform(3, 0.1))
}

/// Three banks where Eisenberg-Noe ends above acyclic DebtRank
/// (total loss of external assets, zero recovery).
pub fn en_above_adr() -> (LiabilityNetwork, ShockSpec) {
    let mut a = Matrix::zeros(3, 3);
    a.set(1, 0, 50.0);
    a.set(2, 1, 20.0);
    let net = LiabilityNetwork::from_exposures(&[100.0, 5.0, 20.0], &[15.0, 35.0, 35.0], &a)
        .expect("consistent exposures");
    (net, ShockSpec::uniform(3, 1.0))
}

/// Wheel with `n` banks: the fragile centre (bank 0) owes 10 to each of the
/// `n - 1` rim banks, and for `n >= 3` the rim banks form a directed cycle of
/// 15 claims. Centre: `A^e = 75(n-1), E = 5(n-1), L^e = 60(n-1)`; rim:
/// `A^e = 50(n-1), E = 10(n-1)`, external liabilities close the identity.
pub fn wheel(n: usize) -> LiabilityNetwork {
    assert!(n >= 2, "wheel needs a centre and at least one rim bank");
    let k = (n - 1) as f64;
    let mut edges: Vec<(usize, usize, f64)> = (1..n).map(|j| (0, j, 10.0)).collect();
    if n >= 3 {
        for j in 1..n {
            let next = if j + 1 == n { 1 } else { j + 1 };
            edges.push((j, next, 15.0));
        }
    }
    let rim_ring = if n >= 3 { 15.0 } else { 0.0 };
    let mut sheets = vec![sheet(75.0 * k, 0.0, 10.0 * k, 60.0 * k, 5.0 * k)];
    for _ in 1..n {
        let ab = 10.0 + rim_ring;
        let lb = rim_ring;
        sheets.push(sheet(50.0 * k, ab, lb, 50.0 * k + ab - lb - 10.0 * k, 10.0 * k));
    }
    network(sheets, &edges)
}

pub fn wheel_shock(n: usize) -> ShockSpec {
    ShockSpec::single_bank(n, 0, 0.1)
}

/// Rim-bank vulnerability predicted by equal sharing of the centre's excess loss.
pub fn wheel_rim_vulnerability(n: usize) -> f64 {
    2.5 / (70.0 * (n - 1) as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct GoldenCheck {
    pub name: String,
    pub expected: f64,
    pub actual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl GoldenCheck {
    fn new(name: impl Into<String>, expected: f64, actual: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            expected,
            actual,
            tolerance,
            passed: (expected - actual).abs() <= tolerance,
        }
    }
}

/// Runs every fixture against its expected values.
pub fn golden_checks() -> Vec<GoldenCheck> {
    let mut out = Vec::new();
    let en_cfg = ModelConfig::new(Model::EisenbergNoe);
    let adr_cfg = ModelConfig::new(Model::AcyclicDebtRank).with_recovery(FOUR_BANK_DEBTRANK_RECOVERY);
    let shock = four_bank_shock();
    let cases: [(&str, LiabilityNetwork, [f64; 4], f64); 3] = [
        ("chain", chain(), [1.0, 0.06, 0.0, 0.0], 0.64),
        ("star", star(), [1.0, 0.02, 0.02, 0.02], 0.79),
        ("cycle", cycle(), [1.0, 0.06, 0.0, 0.0], 0.64),
    ];
    for (name, net, h_expected, adr_expected) in cases {
        let en = models::run(&net, &shock, &en_cfg).expect("fixture runs");
        for (i, (&e, &a)) in h_expected.iter().zip(en.final_h()).enumerate() {
            out.push(GoldenCheck::new(format!("{name}: EN h_{i}(inf)"), e, a, 1e-9));
        }
        let h_inf = global_vulnerability(&en, &net, en.converged_at).expect("in range");
        out.push(GoldenCheck::new(format!("{name}: EN H(inf)"), 0.16, h_inf, 1e-9));
        let second = analysis::en_second_round_exact(&net, &shock, &en).expect("EN payments");
        out.push(GoldenCheck::new(format!("{name}: EN second round"), 0.6 / 35.0, second, 1e-9));
        let bound = analysis::en_second_round_bound(&net, &shock).expect("valid shock");
        out.push(GoldenCheck::new(format!("{name}: second-round bound"), 0.6 / 35.0, bound, 1e-9));
        let adr = models::run(&net, &shock, &adr_cfg).expect("fixture runs");
        let h_adr = global_vulnerability(&adr, &net, adr.converged_at).expect("in range");
        out.push(GoldenCheck::new(format!("{name}: aDR H(inf)"), adr_expected, h_adr, 0.005));
    }

    let zero = |m| ModelConfig::new(m);
    let (net, shock) = dc_above_adr();
    let dc = models::run(&net, &shock, &zero(Model::DefaultCascade)).expect("fixture runs");
    let adr = models::run(&net, &shock, &zero(Model::AcyclicDebtRank)).expect("fixture runs");
    for (i, (&e, &a)) in [1.0, 1.0, 1.0].iter().zip(dc.final_h()).enumerate() {
        out.push(GoldenCheck::new(format!("DC above aDR: DC h_{i}(inf)"), e, a, 1e-12));
    }
    for (i, (&e, &a)) in [1.0, 1.0, 0.8].iter().zip(adr.final_h()).enumerate() {
        out.push(GoldenCheck::new(format!("DC above aDR: aDR h_{i}(inf)"), e, a, 1e-12));
    }

    let (net, shock) = en_above_adr();
    let en = models::run(&net, &shock, &zero(Model::EisenbergNoe)).expect("fixture runs");
    let adr = models::run(&net, &shock, &zero(Model::AcyclicDebtRank)).expect("fixture runs");
    for (i, (&e, &a)) in [1.0, 1.0, 1.0].iter().zip(en.final_h()).enumerate() {
        out.push(GoldenCheck::new(format!("EN above aDR: EN h_{i}(inf)"), e, a, 1e-12));
    }
    for (i, (&e, &a)) in [1.0, 1.0, 32.0 / 49.0].iter().zip(adr.final_h()).enumerate() {
        out.push(GoldenCheck::new(format!("EN above aDR: aDR h_{i}(inf)"), e, a, 1e-12));
    }

    for n in [2, 4, 8, 16] {
        let net = wheel(n);
        let en = models::run(&net, &wheel_shock(n), &en_cfg).expect("fixture runs");
        let worst = en.final_h()[1..]
            .iter()
            .map(|h| (h - wheel_rim_vulnerability(n)).abs())
            .fold(0.0, f64::max);
        out.push(GoldenCheck::new(format!("wheel n={n}: rim h(inf) deviation"), 0.0, worst, 1e-12));
    }
    out
}
