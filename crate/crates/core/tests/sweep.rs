use levnet::ingest::{self, SynthConfig};
use levnet::models::Model;
use levnet::reconstruct::{self, ReconstructionConfig};
use levnet::sweep::{self, AssetClassTarget, SweepError, SweepSpec};
use levnet::{fixtures, LiabilityNetwork, ShockSpec};

fn small_spec() -> SweepSpec {
    SweepSpec {
        ensemble: ReconstructionConfig {
            ensemble_size: 8,
            target_density: 0.4,
            rng_seed: 3,
            ..ReconstructionConfig::default()
        },
        ..SweepSpec::default()
    }
}

fn small_panel() -> ingest::Panel {
    ingest::synthesize_panel(&SynthConfig {
        n_banks: 20,
        n_quarters: 3,
        seed: 4,
        missingness: 0.05,
        ..SynthConfig::default()
    })
}

#[test]
fn quantiles_interpolate_between_order_statistics() {
    let v = [10.0, 40.0, 20.0, 30.0];
    assert_eq!(sweep::quantile(&v, 0.0), 10.0);
    assert_eq!(sweep::quantile(&v, 0.25), 17.5);
    assert_eq!(sweep::quantile(&v, 0.5), 25.0);
    assert_eq!(sweep::quantile(&v, 1.0), 40.0);
    assert!(sweep::quantile(&[], 0.5).is_nan());
}

#[test]
fn asset_class_shock_hits_one_class() {
    let panel = small_panel();
    let qa = ingest::to_aggregates(&ingest::interpolate_missing(&panel).panel, panel.quarters()[0]);
    let ens = reconstruct::generate_ensemble(&qa.aggregates, &small_spec().ensemble).unwrap();
    let net = ens.networks().next().unwrap();
    let shock = AssetClassTarget::Derivatives.shock(net, 0.05).unwrap();
    assert_eq!(shock, ShockSpec::PerClass(vec![0.05, 0.0, 0.0]));
    let all = AssetClassTarget::AllExternal.shock(net, 0.05).unwrap();
    assert_eq!(all, ShockSpec::PerClass(vec![0.05; 3]));
    // single-class fixtures have no derivatives book
    assert!(matches!(
        AssetClassTarget::Derivatives.shock(&fixtures::chain(), 0.05),
        Err(SweepError::UnknownAssetClass(_))
    ));
    assert_eq!("impaired-loans".parse::<AssetClassTarget>().unwrap(), AssetClassTarget::ImpairedLoans);
}

#[test]
fn timeseries_has_one_row_per_quarter_and_model() {
    let panel = small_panel();
    let spec = small_spec();
    let table = sweep::run_timeseries(&panel, &spec).unwrap();
    assert_eq!(table.quarters.len(), 3);
    assert_eq!(table.rows.len(), 3 * Model::ALL.len());
    for r in &table.rows {
        assert!(r.h_inf_q25 <= r.h_inf_median && r.h_inf_median <= r.h_inf_q75);
        assert!(r.h1 <= r.h_inf_median + 1e-12);
    }
    let en_rows = table.rows.iter().filter(|r| r.model == Model::EisenbergNoe);
    assert!(en_rows.clone().all(|r| r.en_bound_slack.unwrap() <= 1e-9));
    let seeds: Vec<u64> = table.quarters.iter().map(|q| q.seed).collect();
    assert_eq!(seeds, (0..3).map(|k| sweep::quarter_seed(3, k)).collect::<Vec<_>>());
    assert_eq!(table, sweep::run_timeseries(&panel, &spec).unwrap());
}

#[test]
fn timeseries_csv_has_documented_columns() {
    let table = sweep::run_timeseries(&small_panel(), &small_spec()).unwrap();
    let mut buf = Vec::new();
    sweep::write_rows(&mut buf, &table.rows).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "quarter,model,H1,H_inf_median,H_inf_q25,H_inf_q75");
    assert_eq!(text.lines().count(), 1 + table.rows.len());
}

#[test]
fn shock_sweep_is_monotone_on_fixtures() {
    let nets = [fixtures::chain(), fixtures::star(), fixtures::cycle()];
    let refs: Vec<&LiabilityNetwork> = nets.iter().collect();
    let spec = SweepSpec {
        shock_grid: vec![0.0, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0],
        ..SweepSpec::default()
    };
    let table = sweep::run_shock_sweep(&refs, &spec).unwrap();
    assert!(table.findings.is_empty(), "{:?}", table.findings);
    assert_eq!(table.rows.len(), 7 * Model::ALL.len());
    for m in Model::ALL {
        assert_eq!(table.row(0.0, m).unwrap().h_inf_median, 0.0);
        assert!((table.row(1.0, m).unwrap().h_inf_median - 1.0).abs() < 1e-12);
    }
}

#[test]
fn recovery_sweep_reports_gaps_per_rate() {
    let nets = [fixtures::chain(), fixtures::cycle()];
    let refs: Vec<&LiabilityNetwork> = nets.iter().collect();
    let spec = SweepSpec {
        models: vec![Model::AcyclicDebtRank, Model::RogersVeraart],
        shock_grid: vec![0.05, 0.1],
        recovery_grid: vec![0.0, 0.5, 1.0],
        ..SweepSpec::default()
    };
    let table = sweep::run_recovery_sweep(&refs, &spec).unwrap();
    assert_eq!(table.rows.len(), 3 * 2 * 2);
    assert_eq!(table.adr_rv_gap.len(), 3);
    assert!(table.findings.iter().all(|f| !f.starts_with("aDR")));
    for s in [0.05, 0.1] {
        let at = |r| table.row(r, s, Model::AcyclicDebtRank).unwrap().h_inf_median;
        assert!(at(0.0) >= at(0.5) && at(0.5) >= at(1.0));
    }
}

#[test]
fn invalid_specs_are_rejected() {
    let nets = [fixtures::chain()];
    let refs: Vec<&LiabilityNetwork> = nets.iter().collect();
    let bad = SweepSpec {
        shock_grid: vec![1.5],
        ..SweepSpec::default()
    };
    assert!(matches!(sweep::run_shock_sweep(&refs, &bad), Err(SweepError::Invalid(_))));
    let none = SweepSpec {
        models: vec![],
        ..SweepSpec::default()
    };
    assert!(matches!(sweep::run_shock_sweep(&refs, &none), Err(SweepError::Invalid(_))));
    assert!(matches!(sweep::run_shock_sweep(&[], &SweepSpec::default()), Err(SweepError::Invalid(_))));
    assert!(sweep::parse_quarter("2010-Q3").is_ok());
    assert!(sweep::parse_quarter("2010-3").is_err());
}

#[test]
fn spec_round_trips_through_json() {
    let spec = SweepSpec {
        models: vec![Model::EisenbergNoe, Model::CyclicDebtRank],
        rv_beta: Some(0.4),
        asset_class: AssetClassTarget::Derivatives,
        ..SweepSpec::default()
    };
    let json = serde_json::to_string(&spec).unwrap();
    assert_eq!(serde_json::from_str::<SweepSpec>(&json).unwrap(), spec);
    let partial: SweepSpec = serde_json::from_str(r#"{"shock_grid": [0.07]}"#).unwrap();
    assert_eq!(partial.shock_grid, vec![0.07]);
    assert_eq!(partial.models, Model::ALL.to_vec());
}
