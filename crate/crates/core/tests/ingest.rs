use levnet::ingest::{
    self, DropReason, Field, IngestError, IssueKind, Panel, PanelRecord, Quarter, SynthConfig,
};
use levnet::{fixtures, LiabilityNetwork, Matrix};
use proptest::prelude::*;

const HEADER: &str = "bank_id,quarter,total_equity,total_assets,interbank_assets,interbank_liabilities,total_loans,impaired_loans,derivatives";

fn q(s: &str) -> Quarter {
    s.parse().unwrap()
}

fn parse(body: &str) -> Result<Panel, IngestError> {
    ingest::read_panel(format!("{HEADER}\n{body}").as_bytes())
}

fn record(bank: &str, quarter: &str, equity: Option<f64>, ab: Option<f64>) -> PanelRecord {
    let mut r = PanelRecord::empty(bank, q(quarter));
    r.total_equity = equity;
    r.total_assets = Some(200.0);
    r.interbank_assets = ab;
    r.interbank_liabilities = Some(30.0);
    r.total_loans = Some(100.0);
    r.impaired_loans = Some(5.0);
    r.derivatives = Some(10.0);
    r
}

#[test]
fn loads_well_formed_file_with_blank_cells() {
    let panel = parse(
        "A,2010-Q1,10,100,20,30,50,2,5\n\
         A,2010-Q2,11,,21,31,51,2,5\n\
         B,2010-Q1,8,90,10,20,40,1,\n\
         B,2010-Q2,9,95,11,21,41,1,4\n",
    )
    .unwrap();
    assert_eq!(panel.len(), 4);
    assert_eq!(panel.banks(), vec!["A", "B"]);
    assert_eq!(panel.quarters(), vec![q("2010-Q1"), q("2010-Q2")]);
    assert_eq!(panel.missing_cells(), 2);
    assert_eq!(panel.records[1].total_assets, None);
}

#[test]
fn duplicate_bank_quarter_is_rejected() {
    let err = parse("A,2010-Q1,10,100,20,30,50,2,5\nA,2010-Q1,10,100,20,30,50,2,5\n").unwrap_err();
    assert!(matches!(err, IngestError::DuplicateRecord { .. }), "{err}");
}

#[test]
fn missing_column_is_a_schema_error() {
    let header = HEADER.trim_end_matches(",derivatives");
    let err = ingest::read_panel(format!("{header}\nA,2010-Q1,10,100,20,30,50,2\n").as_bytes()).unwrap_err();
    match err {
        IngestError::SchemaMismatch { column } => assert_eq!(column, "derivatives"),
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn unparseable_cell_reports_row() {
    let err = parse("A,2010-Q1,10,abc,20,30,50,2,5\n").unwrap_err();
    // rows are file lines, header included
    assert!(matches!(err, IngestError::ParseError { row: 2, .. }), "{err}");
}

#[test]
fn quarter_strings_round_trip() {
    let quarter = q("2009-Q4");
    assert_eq!(quarter.to_string(), "2009-Q4");
    assert_eq!(quarter.next(), q("2010-Q1"));
    assert_eq!(Quarter::from_ordinal(quarter.ordinal()), quarter);
    assert!("2009-Q5".parse::<Quarter>().is_err());
    assert!("2009Q1".parse::<Quarter>().is_err());
}

#[test]
fn equity_midpoint_is_linear() {
    let panel = Panel::new(vec![
        record("A", "2010-Q1", Some(10.0), Some(20.0)),
        record("A", "2010-Q2", None, Some(20.0)),
        record("A", "2010-Q3", Some(14.0), Some(20.0)),
    ])
    .unwrap();
    let out = ingest::interpolate_missing(&panel);
    assert_eq!(out.panel.records[1].total_equity, Some(12.0));
    assert_eq!(out.imputed.len(), 1);
    assert!(out.issues.is_empty());
}

#[test]
fn interbank_assets_follow_the_leverage_ratio() {
    // A^b/E = 2 at q1 and 3 at q3, E = 10 at q2: ratio 2.5 times 10.
    let panel = Panel::new(vec![
        record("A", "2010-Q1", Some(10.0), Some(20.0)),
        record("A", "2010-Q2", Some(10.0), None),
        record("A", "2010-Q3", Some(10.0), Some(30.0)),
    ])
    .unwrap();
    let out = ingest::interpolate_missing(&panel);
    assert_eq!(out.panel.records[1].interbank_assets, Some(25.0));
}

#[test]
fn long_gaps_are_reported_not_filled() {
    let mut records = vec![record("A", "2010-Q1", Some(10.0), Some(20.0))];
    let mut quarter = q("2010-Q1");
    for _ in 0..4 {
        quarter = quarter.next();
        records.push(record("A", &quarter.to_string(), None, Some(20.0)));
    }
    records.push(record("A", &quarter.next().to_string(), Some(16.0), Some(20.0)));
    let out = ingest::interpolate_missing(&Panel::new(records).unwrap());
    assert_eq!(out.issues.len(), 4);
    assert!(out
        .issues
        .iter()
        .all(|i| i.kind == IssueKind::GapTooLong && i.field == Field::TotalEquity));
    assert!(out.panel.records[1..5].iter().all(|r| r.total_equity.is_none()));
}

#[test]
fn boundary_gaps_use_the_nearest_anchor_and_are_flagged() {
    let panel = Panel::new(vec![
        record("A", "2010-Q1", None, Some(20.0)),
        record("A", "2010-Q2", Some(10.0), Some(20.0)),
        record("A", "2010-Q3", Some(12.0), None),
    ])
    .unwrap();
    let out = ingest::interpolate_missing(&panel);
    assert_eq!(out.panel.records[0].total_equity, Some(10.0));
    // ratio 2 carried forward and multiplied by equity 12
    assert_eq!(out.panel.records[2].interbank_assets, Some(24.0));
    assert!(out.imputed.iter().all(|c| c.extrapolated));
}

#[test]
fn a_bank_with_no_anchor_reports_insufficient_anchors() {
    let panel = Panel::new(vec![
        record("A", "2010-Q1", None, Some(20.0)),
        record("A", "2010-Q2", None, Some(20.0)),
    ])
    .unwrap();
    let out = ingest::interpolate_missing(&panel);
    assert!(out.issues.iter().any(|i| i.kind == IssueKind::InsufficientAnchors));
}

#[test]
fn aggregates_follow_the_balance_sheet_identity() {
    let mut r = PanelRecord::empty("A", q("2010-Q1"));
    r.total_assets = Some(100.0);
    r.interbank_assets = Some(20.0);
    r.total_equity = Some(10.0);
    r.interbank_liabilities = Some(30.0);
    r.total_loans = Some(40.0);
    r.impaired_loans = Some(4.0);
    r.derivatives = Some(6.0);
    let qa = ingest::to_aggregates(&Panel::new(vec![r.clone()]).unwrap(), q("2010-Q1"));
    let sheet = &qa.aggregates.sheets[0];
    assert_eq!(sheet.external_assets, vec![6.0, 4.0, 70.0]);
    assert_eq!(sheet.external_assets_total(), 80.0);
    assert_eq!(sheet.external_liabilities, 60.0);

    r.derivatives = Some(90.0);
    let qa = ingest::to_aggregates(&Panel::new(vec![r]).unwrap(), q("2010-Q1"));
    assert!(qa.aggregates.sheets.is_empty());
    match &qa.dropped[0].reason {
        DropReason::NegativeDerived { field, .. } => assert_eq!(field, "other"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn fragile_bank_round_trips_through_a_panel() {
    let sheet = fixtures::fragile_bank_sheet();
    let mut r = PanelRecord::empty("F", q("2008-Q3"));
    r.total_equity = Some(sheet.equity);
    r.total_assets = Some(sheet.external_assets_total() + sheet.interbank_assets);
    r.interbank_assets = Some(sheet.interbank_assets);
    r.interbank_liabilities = Some(sheet.interbank_liabilities);
    r.total_loans = Some(0.0);
    r.impaired_loans = Some(0.0);
    r.derivatives = Some(0.0);
    let mut buf = Vec::new();
    ingest::write_panel(&mut buf, &Panel::new(vec![r]).unwrap()).unwrap();
    let panel = ingest::read_panel(buf.as_slice()).unwrap();
    let got = &ingest::to_aggregates(&panel, q("2008-Q3")).aggregates.sheets[0];
    assert_eq!(got.external_assets_total(), 80.0);
    assert_eq!(got.external_liabilities, 60.0);
    assert_eq!(got.interbank_liabilities, 15.0);
    assert_eq!(got.equity, 5.0);
}

#[test]
fn synthetic_panel_is_deterministic() {
    let config = SynthConfig {
        seed: 17,
        missingness: 0.1,
        ..SynthConfig::default()
    };
    let a = ingest::synthesize_panel(&config);
    let b = ingest::synthesize_panel(&config);
    assert_eq!(a, b);
    let mut buf_a = Vec::new();
    let mut buf_b = Vec::new();
    ingest::write_panel(&mut buf_a, &a).unwrap();
    ingest::write_panel(&mut buf_b, &b).unwrap();
    assert_eq!(buf_a, buf_b);
    assert_ne!(a, ingest::synthesize_panel(&SynthConfig { seed: 18, ..config }));
}

#[test]
fn complete_panel_is_unchanged_by_interpolation() {
    let panel = ingest::synthesize_panel(&SynthConfig::default());
    let out = ingest::interpolate_missing(&panel);
    assert_eq!(out.panel, panel);
    assert!(out.imputed.is_empty() && out.issues.is_empty());
}

#[test]
fn synthetic_banks_are_partly_funded_by_outside_creditors() {
    let panel = ingest::synthesize_panel(&SynthConfig::default());
    for quarter in panel.quarters() {
        let qa = ingest::to_aggregates(&panel, quarter);
        assert!(qa.dropped.is_empty());
        assert_eq!(qa.aggregates.n(), 50);
        for s in &qa.aggregates.sheets {
            let beta = s.interbank_liabilities / (s.interbank_liabilities + s.external_liabilities);
            assert!(beta > 0.0 && beta < 1.0);
            let leverage = (s.external_assets_total() + s.interbank_assets) / s.equity;
            assert!((10.0 - 1e-9..=30.0 + 1e-9).contains(&leverage), "{leverage}");
        }
    }
}

#[test]
fn synthetic_aggregates_build_valid_networks() {
    let panel = ingest::synthesize_panel(&SynthConfig {
        n_banks: 5,
        ..SynthConfig::default()
    });
    let qa = ingest::to_aggregates(&panel, panel.quarters()[0]);
    // an empty interbank matrix with the aggregates' external sides must be consistent
    let sheets = &qa.aggregates.sheets;
    let ext: Vec<f64> = sheets.iter().map(|s| s.external_assets_total()).collect();
    let eq: Vec<f64> = sheets.iter().map(|s| s.equity).collect();
    assert!(LiabilityNetwork::from_exposures(&ext, &eq, &Matrix::zeros(5, 5)).is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn interpolation_is_idempotent_and_keeps_observed_values(seed in any::<u64>(), rate in 0.0f64..0.4) {
        let panel = ingest::synthesize_panel(&SynthConfig {
            n_banks: 8,
            n_quarters: 10,
            seed,
            missingness: rate,
            ..SynthConfig::default()
        });
        let once = ingest::interpolate_missing(&panel);
        let twice = ingest::interpolate_missing(&once.panel);
        prop_assert_eq!(&twice.panel, &once.panel);
        for (orig, filled) in panel.records.iter().zip(&once.panel.records) {
            for f in Field::ALL {
                if let Some(v) = orig.get(f) {
                    prop_assert_eq!(filled.get(f), Some(v));
                }
            }
        }
        prop_assert_eq!(once.panel.missing_cells(), 0);
    }

    #[test]
    fn aggregates_close_the_identity(seed in any::<u64>()) {
        let panel = ingest::synthesize_panel(&SynthConfig { n_banks: 10, n_quarters: 2, seed, ..SynthConfig::default() });
        for quarter in panel.quarters() {
            let qa = ingest::to_aggregates(&panel, quarter);
            for (id, s) in qa.aggregates.bank_ids.iter().zip(&qa.aggregates.sheets) {
                let r = panel.records.iter().find(|r| &r.bank_id == id && r.quarter == quarter).unwrap();
                let lhs = s.external_assets_total() + s.interbank_assets;
                let rhs = s.external_liabilities + s.interbank_liabilities + s.equity;
                prop_assert!((lhs - r.total_assets.unwrap()).abs() <= 1e-9 * lhs);
                prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs);
            }
        }
    }
}
