//! Balance sheets, the interbank liability matrix and the first-round shock.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;

/// Absolute tolerance on the balance-sheet identity, scaled by `max(1, total assets)`.
pub const IDENTITY_TOLERANCE: f64 = 1e-6;
/// Relative tolerance for matrix marginals against the balance-sheet totals.
pub const MARGINAL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("balance-sheet identity violated for bank {bank}: residual {residual}")]
    IdentityViolation { bank: usize, residual: f64 },
    #[error("bank {bank} has non-positive equity {equity}")]
    NonPositiveEquity { bank: usize, equity: f64 },
    #[error("negative entry {value} at ({i}, {j})")]
    NegativeEntry { i: usize, j: usize, value: f64 },
    #[error("bank {bank} has a self-exposure of {value}")]
    SelfExposure { bank: usize, value: f64 },
    #[error("bank {bank}: matrix {side} total {matrix} differs from balance sheet {sheet}")]
    MarginalMismatch {
        bank: usize,
        side: &'static str,
        matrix: f64,
        sheet: f64,
    },
    #[error("bank {bank}: {field} is negative or not finite ({value})")]
    InvalidQuantity {
        bank: usize,
        field: &'static str,
        value: f64,
    },
    #[error("shock component {index} = {value} outside [0, 1]")]
    ShockOutOfRange { index: usize, value: f64 },
    #[error("both per-class and per-bank shocks were given")]
    AmbiguousShock,
    #[error("no shock vector was given")]
    EmptyShock,
}

/// Book values of one bank at t = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceSheet {
    /// Holdings per external asset class, in the order of the network's class list.
    pub external_assets: Vec<f64>,
    pub interbank_assets: f64,
    pub interbank_liabilities: f64,
    pub external_liabilities: f64,
    pub equity: f64,
}

impl BalanceSheet {
    pub fn external_assets_total(&self) -> f64 {
        self.external_assets.iter().sum()
    }

    pub fn total_assets(&self) -> f64 {
        self.external_assets_total() + self.interbank_assets
    }

    pub fn total_liabilities(&self) -> f64 {
        self.external_liabilities + self.interbank_liabilities
    }

    /// `E - (A^e + A^b - L^e - L^b)`.
    pub fn identity_residual(&self) -> f64 {
        self.equity - (self.total_assets() - self.total_liabilities())
    }
}

/// The system at t = 0: balance sheets plus the nominal liability matrix,
/// where entry `(i, j)` is what bank `i` owes bank `j`.
///
/// Immutable once built; every constructor runs the full validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiabilityNetwork {
    asset_classes: Vec<String>,
    liabilities: Matrix,
    sheets: Vec<BalanceSheet>,
}

/// Validates and assembles a [`LiabilityNetwork`].
pub fn build_network(
    asset_classes: Vec<String>,
    balance_sheets: Vec<BalanceSheet>,
    liabilities: Matrix,
) -> Result<LiabilityNetwork, NetworkError> {
    let n = balance_sheets.len();
    if liabilities.rows() != n {
        return Err(NetworkError::DimensionMismatch {
            what: "liability matrix rows",
            expected: n,
            found: liabilities.rows(),
        });
    }
    if liabilities.cols() != n {
        return Err(NetworkError::DimensionMismatch {
            what: "liability matrix columns",
            expected: n,
            found: liabilities.cols(),
        });
    }
    for (bank, sheet) in balance_sheets.iter().enumerate() {
        if sheet.external_assets.len() != asset_classes.len() {
            return Err(NetworkError::DimensionMismatch {
                what: "external asset classes",
                expected: asset_classes.len(),
                found: sheet.external_assets.len(),
            });
        }
        let fields = sheet
            .external_assets
            .iter()
            .map(|&v| ("external_assets", v))
            .chain([
                ("interbank_assets", sheet.interbank_assets),
                ("interbank_liabilities", sheet.interbank_liabilities),
                ("external_liabilities", sheet.external_liabilities),
            ]);
        for (field, value) in fields {
            if !value.is_finite() || value < 0.0 {
                return Err(NetworkError::InvalidQuantity { bank, field, value });
            }
        }
        if !sheet.equity.is_finite() {
            return Err(NetworkError::InvalidQuantity {
                bank,
                field: "equity",
                value: sheet.equity,
            });
        }
        if sheet.equity <= 0.0 {
            return Err(NetworkError::NonPositiveEquity {
                bank,
                equity: sheet.equity,
            });
        }
        let residual = sheet.identity_residual();
        if residual.abs() > IDENTITY_TOLERANCE * sheet.total_assets().max(1.0) {
            return Err(NetworkError::IdentityViolation { bank, residual });
        }
    }
    for i in 0..n {
        for j in 0..n {
            let value = liabilities.get(i, j);
            if !value.is_finite() || value < 0.0 {
                return Err(NetworkError::NegativeEntry { i, j, value });
            }
            if i == j && value != 0.0 {
                return Err(NetworkError::SelfExposure { bank: i, value });
            }
        }
    }
    let close = |a: f64, b: f64| (a - b).abs() <= MARGINAL_TOLERANCE * a.abs().max(b.abs()).max(1.0);
    for (bank, (row, sheet)) in liabilities.row_sums().iter().zip(&balance_sheets).enumerate() {
        if !close(*row, sheet.interbank_liabilities) {
            return Err(NetworkError::MarginalMismatch {
                bank,
                side: "liabilities",
                matrix: *row,
                sheet: sheet.interbank_liabilities,
            });
        }
    }
    for (bank, (col, sheet)) in liabilities.col_sums().iter().zip(&balance_sheets).enumerate() {
        if !close(*col, sheet.interbank_assets) {
            return Err(NetworkError::MarginalMismatch {
                bank,
                side: "assets",
                matrix: *col,
                sheet: sheet.interbank_assets,
            });
        }
    }
    Ok(LiabilityNetwork {
        asset_classes,
        liabilities,
        sheets: balance_sheets,
    })
}

impl LiabilityNetwork {
    /// Builds a single-asset-class network from equities, external assets and
    /// the interbank *asset* matrix (entry `(i, j)` is `i`'s claim on `j`).
    /// Interbank totals come from the matrix and external liabilities close
    /// the balance-sheet identity.
    pub fn from_exposures(
        external_assets: &[f64],
        equity: &[f64],
        asset_matrix: &Matrix,
    ) -> Result<Self, NetworkError> {
        let n = equity.len();
        if external_assets.len() != n {
            return Err(NetworkError::DimensionMismatch {
                what: "external assets",
                expected: n,
                found: external_assets.len(),
            });
        }
        if asset_matrix.rows() != n || asset_matrix.cols() != n {
            return Err(NetworkError::DimensionMismatch {
                what: "asset matrix",
                expected: n,
                found: asset_matrix.rows(),
            });
        }
        let liabilities = asset_matrix.transpose();
        let owed = liabilities.row_sums();
        let held = liabilities.col_sums();
        let mut sheets = Vec::with_capacity(n);
        for bank in 0..n {
            let mut external_liabilities = external_assets[bank] + held[bank] - owed[bank] - equity[bank];
            if external_liabilities < 0.0 {
                let scale = (external_assets[bank] + held[bank]).max(1.0);
                if external_liabilities < -IDENTITY_TOLERANCE * scale {
                    return Err(NetworkError::InvalidQuantity {
                        bank,
                        field: "external_liabilities",
                        value: external_liabilities,
                    });
                }
                external_liabilities = 0.0;
            }
            sheets.push(BalanceSheet {
                external_assets: vec![external_assets[bank]],
                interbank_assets: held[bank],
                interbank_liabilities: owed[bank],
                external_liabilities,
                equity: equity[bank],
            });
        }
        build_network(vec!["external".to_string()], sheets, liabilities)
    }

    /// Same balance sheets, different liability matrix (e.g. a rewiring).
    pub fn with_liabilities(&self, liabilities: Matrix) -> Result<Self, NetworkError> {
        build_network(self.asset_classes.clone(), self.sheets.clone(), liabilities)
    }

    pub fn n(&self) -> usize {
        self.sheets.len()
    }

    pub fn asset_classes(&self) -> &[String] {
        &self.asset_classes
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.asset_classes.iter().position(|c| c == name)
    }

    pub fn balance_sheets(&self) -> &[BalanceSheet] {
        &self.sheets
    }

    /// Entry `(i, j)`: nominal liability of `i` to `j`.
    pub fn liabilities(&self) -> &Matrix {
        &self.liabilities
    }

    /// Entry `(i, j)`: nominal claim of `i` on `j`.
    pub fn asset_matrix(&self) -> Matrix {
        self.liabilities.transpose()
    }

    pub fn equity(&self) -> Vec<f64> {
        self.sheets.iter().map(|s| s.equity).collect()
    }

    pub fn total_equity(&self) -> f64 {
        self.sheets.iter().map(|s| s.equity).sum()
    }

    pub fn external_assets(&self) -> Vec<f64> {
        self.sheets.iter().map(BalanceSheet::external_assets_total).collect()
    }

    pub fn external_liabilities(&self) -> Vec<f64> {
        self.sheets.iter().map(|s| s.external_liabilities).collect()
    }

    /// Fraction of edges present among the `n(n-1)` ordered pairs.
    pub fn density(&self) -> f64 {
        let n = self.n();
        if n < 2 {
            return 0.0;
        }
        let links = self.liabilities.as_slice().iter().filter(|&&v| v > 0.0).count();
        links as f64 / (n * (n - 1)) as f64
    }

    pub fn relative_liabilities(&self) -> RelativeLiabilities {
        let n = self.n();
        let owed = self.liabilities.row_sums();
        let total_obligations: Vec<f64> = owed
            .iter()
            .zip(&self.sheets)
            .map(|(l, s)| l + s.external_liabilities)
            .collect();
        let pi_matrix = Matrix::from_fn(n, n, |i, j| {
            let pbar = total_obligations[i];
            if pbar > 0.0 {
                self.liabilities.get(i, j) / pbar
            } else {
                0.0
            }
        });
        // Row sums of Π, clipped at 1 against the last-ulp overshoot when L^e = 0.
        let financial_connectivity = pi_matrix.row_sums().into_iter().map(|b| b.min(1.0)).collect();
        RelativeLiabilities {
            total_obligations,
            pi_matrix,
            financial_connectivity,
        }
    }

    pub fn leverage_decomposition(&self) -> LeverageDecomposition {
        let n = self.n();
        let m = self.asset_classes.len();
        let external_leverage =
            Matrix::from_fn(n, m, |i, k| self.sheets[i].external_assets[k] / self.sheets[i].equity);
        let interbank_leverage =
            Matrix::from_fn(n, n, |i, j| self.liabilities.get(j, i) / self.sheets[i].equity);
        let held = self.liabilities.col_sums();
        let total_leverage = self
            .sheets
            .iter()
            .zip(&held)
            .map(|(s, ab)| (s.external_assets_total() + ab) / s.equity)
            .collect();
        let external_total: f64 = self.sheets.iter().map(BalanceSheet::external_assets_total).sum();
        LeverageDecomposition {
            external_leverage,
            interbank_leverage,
            total_leverage,
            system_external_leverage: external_total / self.total_equity(),
        }
    }
}

/// Clearing-model view of the liability side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeLiabilities {
    /// `p̄_i`: interbank plus external obligations.
    pub total_obligations: Vec<f64>,
    /// `Π_ij = L_ij / p̄_i`, zero rows when `p̄_i = 0`.
    pub pi_matrix: Matrix,
    /// `β_i`, the row sums of `Π`.
    pub financial_connectivity: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeverageDecomposition {
    /// `A^e_ik / E_i`, banks by asset classes.
    pub external_leverage: Matrix,
    /// `A^b_ij / E_i`.
    pub interbank_leverage: Matrix,
    /// `(A^e_i + A^b_i) / E_i`.
    pub total_leverage: Vec<f64>,
    /// `Σ A^e / Σ E`.
    pub system_external_leverage: f64,
}

impl LeverageDecomposition {
    pub fn external_leverage_total(&self, bank: usize) -> f64 {
        self.external_leverage.row(bank).iter().sum()
    }
}

/// Relative write-downs of external assets at t = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ShockSpec {
    /// One fraction per asset class, applied to every bank's holdings of that class.
    PerClass(Vec<f64>),
    /// One fraction per bank, applied to its total external assets.
    PerBank(Vec<f64>),
}

impl ShockSpec {
    /// Builds a shock from optional per-class and per-bank vectors; exactly one must be given.
    pub fn new(per_class: Option<Vec<f64>>, per_bank: Option<Vec<f64>>) -> Result<Self, NetworkError> {
        let shock = match (per_class, per_bank) {
            (Some(_), Some(_)) => return Err(NetworkError::AmbiguousShock),
            (Some(c), None) => ShockSpec::PerClass(c),
            (None, Some(b)) => ShockSpec::PerBank(b),
            (None, None) => return Err(NetworkError::EmptyShock),
        };
        shock.check_range()?;
        Ok(shock)
    }

    pub fn uniform(n: usize, s: f64) -> Self {
        ShockSpec::PerBank(vec![s; n])
    }

    pub fn single_bank(n: usize, bank: usize, s: f64) -> Self {
        let mut v = vec![0.0; n];
        v[bank] = s;
        ShockSpec::PerBank(v)
    }

    pub fn single_class(m: usize, class: usize, s: f64) -> Self {
        let mut v = vec![0.0; m];
        v[class] = s;
        ShockSpec::PerClass(v)
    }

    pub fn components(&self) -> &[f64] {
        match self {
            ShockSpec::PerClass(v) | ShockSpec::PerBank(v) => v,
        }
    }

    fn check_range(&self) -> Result<(), NetworkError> {
        for (index, &value) in self.components().iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(NetworkError::ShockOutOfRange { index, value });
            }
        }
        Ok(())
    }

    /// Checks the component range and the length against `network`.
    pub fn validate(&self, network: &LiabilityNetwork) -> Result<(), NetworkError> {
        self.check_range()?;
        let (what, expected) = match self {
            ShockSpec::PerClass(_) => ("per-class shock", network.asset_classes().len()),
            ShockSpec::PerBank(_) => ("per-bank shock", network.n()),
        };
        let found = self.components().len();
        if found != expected {
            return Err(NetworkError::DimensionMismatch { what, expected, found });
        }
        Ok(())
    }
}

/// State right after the external shock (t = 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstRound {
    /// Effective shock on each bank's total external assets.
    pub per_bank_shock: Vec<f64>,
    /// `A^e_i s_i`.
    pub external_loss: Vec<f64>,
    /// `A^e_i (1 - s_i)`.
    pub shocked_external_assets: Vec<f64>,
    /// `h_i(1) = min(1, A^e_i s_i / E_i(0))`.
    pub h: Vec<f64>,
}

impl FirstRound {
    /// Banks whose first-round loss reaches their equity (`h_i(1) = 1`).
    pub fn defaulted(&self) -> Vec<usize> {
        self.h
            .iter()
            .enumerate()
            .filter(|(_, &h)| h >= 1.0)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Applies the external shock. Shared by every model so that `h(1)` is
/// bitwise identical across them.
pub fn apply_first_round(network: &LiabilityNetwork, shock: &ShockSpec) -> Result<FirstRound, NetworkError> {
    shock.validate(network)?;
    let sheets = network.balance_sheets();
    let external_loss: Vec<f64> = match shock {
        ShockSpec::PerClass(s) => sheets
            .iter()
            .map(|sheet| sheet.external_assets.iter().zip(s).map(|(a, s)| a * s).sum())
            .collect(),
        ShockSpec::PerBank(s) => sheets
            .iter()
            .zip(s)
            .map(|(sheet, s)| sheet.external_assets_total() * s)
            .collect(),
    };
    let mut per_bank_shock = Vec::with_capacity(sheets.len());
    let mut shocked_external_assets = Vec::with_capacity(sheets.len());
    let mut h = Vec::with_capacity(sheets.len());
    for (sheet, &loss) in sheets.iter().zip(&external_loss) {
        let total = sheet.external_assets_total();
        per_bank_shock.push(if total > 0.0 { loss / total } else { 0.0 });
        shocked_external_assets.push((total - loss).max(0.0));
        h.push((loss / sheet.equity).min(1.0));
    }
    Ok(FirstRound {
        per_bank_shock,
        external_loss,
        shocked_external_assets,
        h,
    })
}
