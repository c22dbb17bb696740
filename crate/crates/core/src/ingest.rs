//! Quarterly balance-sheet panels: CSV loading, gap filling, conversion to
//! reconstruction aggregates, and a synthetic panel generator.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::BalanceSheet;
use crate::reconstruct::Aggregates;

/// Longest run of consecutive missing quarters that may be filled.
pub const MAX_GAP: i64 = 3;

pub const COLUMNS: [&str; 9] = [
    "bank_id",
    "quarter",
    "total_equity",
    "total_assets",
    "interbank_assets",
    "interbank_liabilities",
    "total_loans",
    "impaired_loans",
    "derivatives",
];

/// External asset classes produced by [`to_aggregates`].
pub const ASSET_CLASSES: [&str; 3] = ["derivatives", "impaired_loans", "other"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing column `{column}`")]
    SchemaMismatch { column: String },
    #[error("row {row}, column `{column}`: cannot parse `{value}`")]
    ParseError { row: usize, column: String, value: String },
    #[error("duplicate record for bank {bank} in {quarter}")]
    DuplicateRecord { bank: String, quarter: Quarter },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Quarter {
    pub year: i32,
    pub q: u8,
}

impl Quarter {
    pub fn new(year: i32, q: u8) -> Option<Self> {
        (1..=4).contains(&q).then_some(Self { year, q })
    }

    pub fn ordinal(self) -> i64 {
        self.year as i64 * 4 + (self.q as i64 - 1)
    }

    pub fn from_ordinal(ord: i64) -> Self {
        Self {
            year: ord.div_euclid(4) as i32,
            q: (ord.rem_euclid(4) + 1) as u8,
        }
    }

    pub fn next(self) -> Self {
        Self::from_ordinal(self.ordinal() + 1)
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-Q{}", self.year, self.q)
    }
}

impl FromStr for Quarter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (y, q) = s.trim().split_once("-Q").ok_or_else(|| format!("bad quarter `{s}`"))?;
        let year = y.parse().map_err(|_| format!("bad year in `{s}`"))?;
        let q = q.parse().map_err(|_| format!("bad quarter number in `{s}`"))?;
        Quarter::new(year, q).ok_or_else(|| format!("quarter out of range in `{s}`"))
    }
}

impl Serialize for Quarter {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Quarter {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    TotalEquity,
    TotalAssets,
    InterbankAssets,
    InterbankLiabilities,
    TotalLoans,
    ImpairedLoans,
    Derivatives,
}

impl Field {
    pub const ALL: [Field; 7] = [
        Field::TotalEquity,
        Field::TotalAssets,
        Field::InterbankAssets,
        Field::InterbankLiabilities,
        Field::TotalLoans,
        Field::ImpairedLoans,
        Field::Derivatives,
    ];

    pub fn column(self) -> &'static str {
        COLUMNS[2 + self as usize]
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRecord {
    pub bank_id: String,
    pub quarter: Quarter,
    pub total_equity: Option<f64>,
    pub total_assets: Option<f64>,
    pub interbank_assets: Option<f64>,
    pub interbank_liabilities: Option<f64>,
    pub total_loans: Option<f64>,
    pub impaired_loans: Option<f64>,
    pub derivatives: Option<f64>,
}

impl PanelRecord {
    pub fn empty(bank_id: impl Into<String>, quarter: Quarter) -> Self {
        Self {
            bank_id: bank_id.into(),
            quarter,
            total_equity: None,
            total_assets: None,
            interbank_assets: None,
            interbank_liabilities: None,
            total_loans: None,
            impaired_loans: None,
            derivatives: None,
        }
    }

    pub fn get(&self, field: Field) -> Option<f64> {
        match field {
            Field::TotalEquity => self.total_equity,
            Field::TotalAssets => self.total_assets,
            Field::InterbankAssets => self.interbank_assets,
            Field::InterbankLiabilities => self.interbank_liabilities,
            Field::TotalLoans => self.total_loans,
            Field::ImpairedLoans => self.impaired_loans,
            Field::Derivatives => self.derivatives,
        }
    }

    pub fn set(&mut self, field: Field, value: Option<f64>) {
        let slot = match field {
            Field::TotalEquity => &mut self.total_equity,
            Field::TotalAssets => &mut self.total_assets,
            Field::InterbankAssets => &mut self.interbank_assets,
            Field::InterbankLiabilities => &mut self.interbank_liabilities,
            Field::TotalLoans => &mut self.total_loans,
            Field::ImpairedLoans => &mut self.impaired_loans,
            Field::Derivatives => &mut self.derivatives,
        };
        *slot = value;
    }
}

/// Records ordered by `(bank_id, quarter)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Panel {
    pub records: Vec<PanelRecord>,
}

impl Panel {
    /// Sorts the records and rejects duplicate `(bank, quarter)` pairs.
    pub fn new(mut records: Vec<PanelRecord>) -> Result<Self, IngestError> {
        records.sort_by(|a, b| (&a.bank_id, a.quarter).cmp(&(&b.bank_id, b.quarter)));
        for w in records.windows(2) {
            if w[0].bank_id == w[1].bank_id && w[0].quarter == w[1].quarter {
                return Err(IngestError::DuplicateRecord {
                    bank: w[0].bank_id.clone(),
                    quarter: w[0].quarter,
                });
            }
        }
        Ok(Self { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn quarters(&self) -> Vec<Quarter> {
        let mut q: Vec<Quarter> = self.records.iter().map(|r| r.quarter).collect();
        q.sort();
        q.dedup();
        q
    }

    pub fn banks(&self) -> Vec<String> {
        let mut b: Vec<String> = self.records.iter().map(|r| r.bank_id.clone()).collect();
        b.dedup();
        b
    }

    pub fn missing_cells(&self) -> usize {
        self.records
            .iter()
            .map(|r| Field::ALL.iter().filter(|&&f| r.get(f).is_none()).count())
            .sum()
    }

    /// Contiguous per-bank slices, in bank order.
    fn by_bank(&self) -> Vec<&[PanelRecord]> {
        self.records
            .chunk_by(|a, b| a.bank_id == b.bank_id)
            .collect()
    }
}

pub fn read_panel<R: Read>(reader: R) -> Result<Panel, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut index = [0usize; 9];
    for (k, col) in COLUMNS.iter().enumerate() {
        index[k] = headers
            .iter()
            .position(|h| h == *col)
            .ok_or_else(|| IngestError::SchemaMismatch { column: col.to_string() })?;
    }
    let mut records = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = row + 2;
        let cell = |k: usize| rec.get(index[k]).unwrap_or("");
        let quarter = cell(1).parse::<Quarter>().map_err(|_| IngestError::ParseError {
            row,
            column: COLUMNS[1].into(),
            value: cell(1).into(),
        })?;
        let mut r = PanelRecord::empty(cell(0), quarter);
        for (k, field) in Field::ALL.iter().enumerate() {
            let raw = cell(k + 2);
            let value = if raw.is_empty() || raw.eq_ignore_ascii_case("na") {
                None
            } else {
                Some(raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    IngestError::ParseError {
                        row,
                        column: COLUMNS[k + 2].into(),
                        value: raw.into(),
                    }
                })?)
            };
            r.set(*field, value);
        }
        records.push(r);
    }
    Panel::new(records)
}

pub fn load_panel(path: &Path) -> Result<Panel, IngestError> {
    read_panel(std::fs::File::open(path)?)
}

pub fn write_panel<W: Write>(writer: W, panel: &Panel) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COLUMNS)?;
    for r in &panel.records {
        let mut row = vec![r.bank_id.clone(), r.quarter.to_string()];
        row.extend(Field::ALL.iter().map(|&f| r.get(f).map_or_else(String::new, |v| v.to_string())));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_panel(path: &Path, panel: &Panel) -> Result<(), IngestError> {
    write_panel(std::fs::File::create(path)?, panel)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IssueKind {
    GapTooLong,
    InsufficientAnchors,
}

/// A cell that could not be filled. It stays missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolationIssue {
    pub bank: String,
    pub field: Field,
    pub quarter: Quarter,
    pub kind: IssueKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputedCell {
    pub bank: String,
    pub field: Field,
    pub quarter: Quarter,
    /// Filled from a single neighbouring anchor outside the observed range.
    pub extrapolated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interpolated {
    pub panel: Panel,
    pub imputed: Vec<ImputedCell>,
    pub issues: Vec<InterpolationIssue>,
}

enum Fill {
    Known,
    Filled { value: f64, extrapolated: bool },
    Failed(IssueKind),
}

/// Fills missing values of a series indexed by quarter ordinals: linear
/// between anchors at most `MAX_GAP` quarters apart, constant beyond the
/// first/last anchor within `MAX_GAP` quarters.
fn fill_series(ords: &[i64], values: &[Option<f64>]) -> Vec<Fill> {
    let anchors: Vec<(i64, f64)> = ords
        .iter()
        .zip(values)
        .filter_map(|(&o, v)| v.map(|v| (o, v)))
        .collect();
    ords.iter()
        .zip(values)
        .map(|(&o, v)| {
            if v.is_some() {
                return Fill::Known;
            }
            if anchors.is_empty() {
                return Fill::Failed(IssueKind::InsufficientAnchors);
            }
            let after = anchors.partition_point(|&(ao, _)| ao < o);
            match (after.checked_sub(1).map(|k| anchors[k]), anchors.get(after).copied()) {
                (Some((o0, v0)), Some((o1, v1))) => {
                    if o1 - o0 - 1 > MAX_GAP {
                        Fill::Failed(IssueKind::GapTooLong)
                    } else {
                        let t = (o - o0) as f64 / (o1 - o0) as f64;
                        Fill::Filled {
                            value: v0 + t * (v1 - v0),
                            extrapolated: false,
                        }
                    }
                }
                (Some((o0, v0)), None) | (None, Some((o0, v0))) => {
                    if (o - o0).abs() > MAX_GAP {
                        Fill::Failed(IssueKind::GapTooLong)
                    } else {
                        Fill::Filled {
                            value: v0,
                            extrapolated: true,
                        }
                    }
                }
                (None, None) => Fill::Failed(IssueKind::InsufficientAnchors),
            }
        })
        .collect()
}

struct BankFill {
    records: Vec<PanelRecord>,
    imputed: Vec<ImputedCell>,
    issues: Vec<InterpolationIssue>,
}

fn divide(num: Option<f64>, den: Option<f64>) -> Option<f64> {
    match (num, den) {
        (Some(n), Some(d)) if d != 0.0 => Some(n / d),
        _ => None,
    }
}

fn fill_bank(records: &[PanelRecord]) -> BankFill {
    let mut out = BankFill {
        records: records.to_vec(),
        imputed: Vec::new(),
        issues: Vec::new(),
    };
    let ords: Vec<i64> = records.iter().map(|r| r.quarter.ordinal()).collect();

    let apply = |out: &mut BankFill, field: Field, fills: Vec<Fill>, scale: &dyn Fn(&PanelRecord) -> Option<f64>| {
        for (k, fill) in fills.into_iter().enumerate() {
            let rec = &out.records[k];
            match fill {
                Fill::Known => {}
                Fill::Filled { value, extrapolated } => match scale(rec) {
                    Some(s) => {
                        let (bank, quarter) = (rec.bank_id.clone(), rec.quarter);
                        out.records[k].set(field, Some(value * s));
                        out.imputed.push(ImputedCell {
                            bank,
                            field,
                            quarter,
                            extrapolated,
                        });
                    }
                    None => out.issues.push(InterpolationIssue {
                        bank: rec.bank_id.clone(),
                        field,
                        quarter: rec.quarter,
                        kind: IssueKind::InsufficientAnchors,
                    }),
                },
                Fill::Failed(kind) => out.issues.push(InterpolationIssue {
                    bank: rec.bank_id.clone(),
                    field,
                    quarter: rec.quarter,
                    kind,
                }),
            }
        }
    };

    for field in [Field::TotalEquity, Field::TotalAssets, Field::TotalLoans] {
        let values: Vec<Option<f64>> = out.records.iter().map(|r| r.get(field)).collect();
        let fills = fill_series(&ords, &values);
        apply(&mut out, field, fills, &|_| Some(1.0));
    }

    type Scale = fn(&PanelRecord) -> Option<f64>;
    let ratio_fields: [(Field, Scale); 4] = [
        (Field::InterbankAssets, |r| r.total_equity),
        (Field::InterbankLiabilities, |r| match (r.total_assets, r.total_equity) {
            (Some(a), Some(e)) => Some(a - e),
            _ => None,
        }),
        (Field::ImpairedLoans, |r| r.total_loans),
        (Field::Derivatives, |r| r.total_assets),
    ];
    for (field, scale) in ratio_fields {
        if out.records.iter().all(|r| r.get(field).is_some()) {
            continue;
        }
        let ratios: Vec<Option<f64>> = out.records.iter().map(|r| divide(r.get(field), scale(r))).collect();
        // A present value whose denominator is missing still counts as known.
        let fills = fill_series(&ords, &ratios)
            .into_iter()
            .zip(&out.records)
            .map(|(f, r)| match r.get(field) {
                Some(_) => Fill::Known,
                None => f,
            })
            .collect();
        apply(&mut out, field, fills, &scale);
    }
    out
}

/// Fills missing cells bank by bank. Observed values are never changed;
/// cells that cannot be filled stay missing and are reported as issues.
pub fn interpolate_missing(panel: &Panel) -> Interpolated {
    let banks: Vec<BankFill> = panel.by_bank().into_par_iter().map(fill_bank).collect();
    let mut records = Vec::with_capacity(panel.len());
    let mut imputed = Vec::new();
    let mut issues = Vec::new();
    for b in banks {
        records.extend(b.records);
        imputed.extend(b.imputed);
        issues.extend(b.issues);
    }
    for issue in &issues {
        log::debug!("{} {} {}: {:?}", issue.bank, issue.quarter, issue.field, issue.kind);
    }
    Interpolated {
        panel: Panel { records },
        imputed,
        issues,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DropReason {
    MissingField(Field),
    NonPositiveEquity(f64),
    /// A derived quantity (`external_assets`, `other`, `total_liabilities`,
    /// `external_liabilities`) came out negative.
    NegativeDerived { field: String, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedBank {
    pub bank: String,
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarterAggregates {
    pub quarter: Quarter,
    pub aggregates: Aggregates,
    pub dropped: Vec<DroppedBank>,
}

fn derive_sheet(r: &PanelRecord) -> Result<BalanceSheet, DropReason> {
    let need = |f: Field| r.get(f).ok_or(DropReason::MissingField(f));
    let equity = need(Field::TotalEquity)?;
    let assets = need(Field::TotalAssets)?;
    let ab = need(Field::InterbankAssets)?;
    let lb = need(Field::InterbankLiabilities)?;
    let impaired = need(Field::ImpairedLoans)?;
    let derivatives = need(Field::Derivatives)?;
    if equity <= 0.0 {
        return Err(DropReason::NonPositiveEquity(equity));
    }
    let negative = |field: &str, value: f64| DropReason::NegativeDerived {
        field: field.into(),
        value,
    };
    for (name, v) in [
        ("total_assets", assets),
        ("interbank_assets", ab),
        ("interbank_liabilities", lb),
        ("impaired_loans", impaired),
        ("derivatives", derivatives),
    ] {
        if v < 0.0 {
            return Err(negative(name, v));
        }
    }
    let external = assets - ab;
    if external < 0.0 {
        return Err(negative("external_assets", external));
    }
    let other = external - derivatives - impaired;
    if other < 0.0 {
        return Err(negative("other", other));
    }
    let liabilities = assets - equity;
    if liabilities < 0.0 {
        return Err(negative("total_liabilities", liabilities));
    }
    let le = liabilities - lb;
    if le < 0.0 {
        return Err(negative("external_liabilities", le));
    }
    Ok(BalanceSheet {
        external_assets: vec![derivatives, impaired, other],
        interbank_assets: ab,
        interbank_liabilities: lb,
        external_liabilities: le,
        equity,
    })
}

/// Per-bank balance sheets for one quarter. Banks with missing fields,
/// non-positive equity or negative derived quantities are dropped and listed.
pub fn to_aggregates(panel: &Panel, quarter: Quarter) -> QuarterAggregates {
    let mut bank_ids = Vec::new();
    let mut sheets = Vec::new();
    let mut dropped = Vec::new();
    for r in panel.records.iter().filter(|r| r.quarter == quarter) {
        match derive_sheet(r) {
            Ok(s) => {
                bank_ids.push(r.bank_id.clone());
                sheets.push(s);
            }
            Err(reason) => {
                log::info!("{quarter}: dropping bank {} ({reason:?})", r.bank_id);
                dropped.push(DroppedBank {
                    bank: r.bank_id.clone(),
                    reason,
                });
            }
        }
    }
    QuarterAggregates {
        quarter,
        aggregates: Aggregates {
            asset_classes: ASSET_CLASSES.iter().map(|s| s.to_string()).collect(),
            bank_ids,
            sheets,
        },
        dropped,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_banks: usize,
    pub n_quarters: usize,
    pub start: Quarter,
    pub seed: u64,
    /// Probability that a value cell is blanked (runs capped at three quarters).
    pub missingness: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_banks: 50,
            n_quarters: 8,
            start: Quarter { year: 2008, q: 1 },
            seed: 0,
            missingness: 0.0,
        }
    }
}

const MEDIAN_ASSETS: f64 = 1e5;
const INTERBANK_SIZE_ELASTICITY: f64 = 0.7;

struct BankState {
    assets: f64,
    leverage: f64,
    interbank_share: f64,
    lending_ratio: f64,
    loan_share: f64,
    impaired_share: f64,
    derivative_share: f64,
}

fn drift(rng: &mut ChaCha8Rng, value: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let step: f64 = Normal::new(0.0, sd).expect("positive sd").sample(rng);
    (value * step.exp()).clamp(lo, hi)
}

/// Deterministic panel with heavy-tailed total assets, leverage between 10
/// and 30 and every bank a net interbank borrower.
pub fn synthesize_panel(config: &SynthConfig) -> Panel {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let size = LogNormal::new(MEDIAN_ASSETS.ln(), 0.7).expect("valid lognormal");
    let width = (config.n_banks.max(1) as f64).log10().ceil() as usize + 1;
    let mut records = Vec::with_capacity(config.n_banks * config.n_quarters);
    for b in 0..config.n_banks {
        let id = format!("B{:0width$}", b + 1);
        let assets: f64 = size.sample(&mut rng);
        // smaller banks lean more on the interbank market
        let relative_size = (assets / MEDIAN_ASSETS).powf(-INTERBANK_SIZE_ELASTICITY);
        let mut s = BankState {
            assets,
            leverage: rng.random_range(10.0..30.0),
            interbank_share: (rng.random_range(0.06..0.10) * relative_size).clamp(0.02, 0.3),
            lending_ratio: rng.random_range(0.6..0.92),
            loan_share: rng.random_range(0.4..0.7),
            impaired_share: rng.random_range(0.01..0.08),
            derivative_share: rng.random_range(0.02..0.15),
        };
        let mut q = config.start;
        for _ in 0..config.n_quarters {
            let equity = s.assets / s.leverage;
            let lb = s.interbank_share * s.assets;
            let ab = s.lending_ratio * lb;
            let loans = s.loan_share * s.assets;
            let mut r = PanelRecord::empty(id.clone(), q);
            r.total_equity = Some(equity);
            r.total_assets = Some(s.assets);
            r.interbank_assets = Some(ab);
            r.interbank_liabilities = Some(lb);
            r.total_loans = Some(loans);
            r.impaired_loans = Some(s.impaired_share * loans);
            r.derivatives = Some(s.derivative_share * s.assets);
            records.push(r);

            s.assets = drift(&mut rng, s.assets, 0.03, 1.0, f64::MAX);
            s.leverage = drift(&mut rng, s.leverage, 0.03, 10.0, 30.0);
            s.interbank_share = drift(&mut rng, s.interbank_share, 0.03, 0.02, 0.3);
            s.lending_ratio = drift(&mut rng, s.lending_ratio, 0.03, 0.5, 0.95);
            s.loan_share = drift(&mut rng, s.loan_share, 0.02, 0.3, 0.75);
            s.impaired_share = drift(&mut rng, s.impaired_share, 0.05, 0.005, 0.1);
            s.derivative_share = drift(&mut rng, s.derivative_share, 0.05, 0.01, 0.15);
            q = q.next();
        }
    }
    if config.missingness > 0.0 {
        blank_cells(&mut records, config, &mut rng);
    }
    Panel::new(records).expect("generated ids and quarters are unique")
}

fn blank_cells(records: &mut [PanelRecord], config: &SynthConfig, rng: &mut ChaCha8Rng) {
    for bank in records.chunks_mut(config.n_quarters.max(1)) {
        for field in Field::ALL {
            let mut mask = vec![false; bank.len()];
            let mut run = 0;
            for m in mask.iter_mut() {
                if run < MAX_GAP && rng.random::<f64>() < config.missingness {
                    *m = true;
                    run += 1;
                } else {
                    run = 0;
                }
            }
            if mask.iter().all(|&m| m) {
                mask[0] = false;
            }
            for (r, m) in bank.iter_mut().zip(mask) {
                if m {
                    r.set(field, None);
                }
            }
        }
    }
}

/// Groups records of every quarter, in quarter order.
pub fn quarters_map(panel: &Panel) -> BTreeMap<Quarter, Vec<&PanelRecord>> {
    let mut map: BTreeMap<Quarter, Vec<&PanelRecord>> = BTreeMap::new();
    for r in &panel.records {
        map.entry(r.quarter).or_default().push(r);
    }
    map
}
