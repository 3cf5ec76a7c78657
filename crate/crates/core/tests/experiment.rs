use accel_alloc::experiment::{self, metrics, render_svg, ExperimentConfig, Metric, MetricsRecord, SvgOptions};
use accel_alloc::graph;

fn tiny() -> ExperimentConfig {
    experiment::preset("fig1")
        .unwrap()
        .with_overrides(&["n=8", "demand=400", "steps=200", "graph.p=0.6"])
        .unwrap()
}

fn rec(label: &str, step: u64, residual: f64) -> MetricsRecord {
    MetricsRecord {
        method_label: label.to_string(),
        step,
        time: step as f64 * 0.1,
        residual,
        feasibility_gap: 0.0,
        dispersion: 1.0,
    }
}

fn svg(records: &[MetricsRecord], log_y: bool) -> String {
    render_svg(
        records,
        &SvgOptions {
            log_y,
            title: "t".into(),
            which: Metric::Residual,
        },
    )
    .unwrap()
}

#[test]
fn presets_carry_the_published_parameters() {
    for name in experiment::PRESET_NAMES {
        let cfg = experiment::preset(name).unwrap();
        assert_eq!((cfg.n, cfg.demand, cfg.graph.p), (50, 3000.0, 0.2));
        assert_eq!((cfg.cost.a_min, cfg.cost.a_max, cfg.cost.c_min, cfg.cost.c_max), (0.0, 0.3, 0.0, 10.0));
        let pen = &cfg.penalty;
        assert_eq!((pen.sigma, pen.rho, pen.lower, pen.upper), (1.0, 1.0, 20.0, 105.0));
    }
    let fig1 = experiment::preset("fig1").unwrap();
    let comp = fig1.methods.iter().find(|m| m.label == "composite").unwrap();
    assert_eq!(comp.nonlinearity.to_string(), "composite:0.3:1.7");
    assert_eq!(comp.eta, 0.2);
    let fig2 = experiment::preset("fig2").unwrap();
    assert_eq!(fig2.methods.len(), 9);
    assert!(fig2.methods.iter().all(|m| m.eta == 0.1));
    assert_eq!((fig2.graph.schedule_len, fig2.graph.dwell, fig2.graph.partitioned), (6, 1.0, true));
}

#[test]
fn presets_round_trip_through_toml() {
    for name in experiment::PRESET_NAMES {
        let cfg = experiment::preset(name).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}

#[test]
fn overrides_address_nested_and_array_keys() {
    let cfg = tiny()
        .with_overrides(&["methods.1.eta=0.5", "penalty.kind=\"power\"", "penalty.c=3", "seeds.cost=9", "methods.*.mode=rk4:0.01"])
        .unwrap();
    assert_eq!(cfg.methods[1].eta, 0.5);
    assert_eq!(cfg.methods[0].eta, 0.2);
    assert_eq!(cfg.penalty.c, 3);
    assert_eq!(cfg.seeds.cost, Some(9));
    assert!(cfg.methods.iter().all(|m| m.mode.to_string() == "rk4:0.01"));
    assert!(tiny().with_overrides(&["cost.zzz=1"]).is_err());
    assert!(tiny().with_overrides(&["methods.x.eta=1"]).is_err());
    assert!(tiny().with_overrides(&["no_equals_sign"]).is_err());
}

#[test]
fn invalid_configs_are_rejected() {
    for bad in [
        "n=0",
        "cost.a_max=0.0",
        "cost.c_min=20.0",
        "graph.p=1.5",
        "graph.schedule_len=0",
        "output.stride=0",
        "methods.1.label=\"composite\"",
        "methods.0.sample_period=0.1",
    ] {
        assert!(tiny().with_overrides(&[bad]).is_err(), "{bad}");
    }
}

#[test]
fn methods_share_model_schedule_and_start() {
    let cfg = tiny();
    let a = experiment::run_experiment(&cfg).unwrap();
    let b = experiment::run_experiment(&cfg).unwrap();
    assert_eq!(a.records(), b.records());
    let firsts: Vec<f64> = a.outcomes.iter().map(|o| o.records[0].residual).collect();
    // one step from the same start: all residuals are close to F(x0) - F*
    let spread = firsts.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - firsts.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread < 0.05 * firsts[0].abs());
    for o in &a.outcomes {
        assert_eq!(o.records.len(), 200);
        assert!(o.max_feasibility_gap <= 1e-6 * cfg.demand);
        assert!(o.records.iter().all(|r| r.feasibility_gap >= 0.0 && r.dispersion >= 0.0));
    }
}

#[test]
fn zero_steps_give_empty_series() {
    let cfg = tiny().with_overrides(&["steps=0"]).unwrap();
    let r = experiment::run_experiment(&cfg).unwrap();
    assert!(r.outcomes.iter().all(|o| o.records.is_empty()));
}

#[test]
fn decimation_is_dense_then_strided() {
    let cfg = tiny().with_overrides(&["steps=125", "output.dense_steps=20", "output.stride=50", "methods=[{label=\"l\",nonlinearity=\"linear\",eta=0.2,mode=\"euler:0.001\"}]"]).unwrap();
    let r = experiment::run_experiment(&cfg).unwrap();
    let steps: Vec<u64> = r.outcomes[0].records.iter().map(|r| r.step).collect();
    let mut expected: Vec<u64> = (1..=20).collect();
    expected.extend([50, 100, 125]);
    assert_eq!(steps, expected);
}

#[test]
fn seeds_split_into_independent_components() {
    let base = tiny();
    let a = experiment::build_scenario(&base).unwrap();
    let b = experiment::build_scenario(&base.with_overrides(&[format!("seeds.init={}", a.seeds.init + 1)]).unwrap()).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.schedule, b.schedule);
    assert_ne!(a.x0, b.x0);
    let big = base.with_overrides(&[format!("seeds.cost={}", u64::MAX)]).unwrap();
    assert_eq!(big.seeds.cost, Some(u64::MAX));
    assert_eq!(ExperimentConfig::from_toml(&big.to_toml()).unwrap(), big);
    assert!(base.with_overrides(&["seed=-1"]).is_err());
    let c = experiment::build_scenario(&base.with_overrides(&["seed=77"]).unwrap()).unwrap();
    assert_ne!(a.model, c.model);
}

#[test]
fn fig2_schedule_has_disconnected_snapshots() {
    let s = experiment::build_scenario(&experiment::preset("fig2").unwrap()).unwrap();
    assert_eq!(s.schedule.graphs().len(), 6);
    assert!(s.schedule.graphs().iter().all(|g| !graph::is_connected(g)));
    assert!(graph::is_uniformly_connected(&s.schedule, 6).unwrap());
}

#[test]
fn discrete_sampling_period_scales_step_time_and_dwell() {
    let cfg = experiment::preset("tradeoff").unwrap();
    let m = &cfg.methods[0];
    assert_eq!(m.step_params().unwrap().eta, m.eta * 0.01);
    assert_eq!(m.time_per_step(), 0.01);
    let s = experiment::build_scenario(&cfg.with_overrides(&["n=10"]).unwrap()).unwrap();
    assert_eq!(s.schedule_for(m).unwrap().dwell(), 100.0);
}

#[test]
fn sweep_expands_the_grid() {
    let cfg = tiny();
    let grid = experiment::SweepConfig {
        alpha: Some(vec![0.3, 0.6]),
        beta: Some(vec![1.0, 1.7]),
        eta: Some(vec![0.1, 0.2, 0.3]),
    };
    let swept = experiment::expand_sweep(&cfg, &grid).unwrap();
    assert_eq!(swept.methods.len(), 12);
    assert_eq!(swept.methods[0].label, "alpha=0.3 beta=1 eta=0.1");
    let empty = experiment::SweepConfig {
        beta: Some(vec![]),
        ..Default::default()
    };
    assert!(experiment::expand_sweep(&cfg, &empty).is_err());
}

#[test]
fn csv_shapes() {
    let mut buf = Vec::new();
    metrics::write_csv_to(&[], &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "method,step,time,residual,feasibility_gap,dispersion\n");
    let mut buf = Vec::new();
    metrics::write_csv_to(&[rec("b", 2, 0.5), rec("a", 3, 1.0), rec("b", 1, 0.25)], &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let labels: Vec<&str> = text.lines().skip(1).map(|l| &l[..3]).collect();
    assert_eq!(labels, ["a,3", "b,1", "b,2"]);
    assert!(text.contains("5.0000000000000000e-1"));
}

#[test]
fn terminal_residual_and_time_to_reach() {
    let recs: Vec<MetricsRecord> = (1..=100).map(|k| rec("m", k, 1.0 / k as f64)).collect();
    let expected = (91..=100).map(|k| 1.0 / k as f64).sum::<f64>() / 10.0;
    assert!((metrics::terminal_residual(&recs).unwrap() - expected).abs() < 1e-15);
    assert_eq!(metrics::time_to_reach(&recs, 0.1), Some(1.0));
    assert_eq!(metrics::time_to_reach(&recs, 1e-3), None);
    assert_eq!(metrics::terminal_residual(&[]), None);
}

#[test]
fn svg_rendering() {
    assert!(render_svg(
        &[],
        &SvgOptions {
            log_y: true,
            title: String::new(),
            which: Metric::Residual
        }
    )
    .is_err());

    let flat: Vec<MetricsRecord> = (1..=5).map(|k| rec("flat", k, 2.0)).collect();
    let doc = svg(&flat, false);
    assert!(doc.starts_with("<?xml") && doc.trim_end().ends_with("</svg>"));
    let line = doc.lines().find(|l| l.starts_with("<polyline")).unwrap();
    let pts = line.split("points=\"").nth(1).unwrap().trim_end_matches("\"/>");
    let ys: Vec<&str> = pts.split(' ').map(|p| p.split(',').nth(1).unwrap()).collect();
    assert!(ys.windows(2).all(|w| w[0] == w[1]));

    let two = vec![rec("a<b", 1, 1.0), rec("a<b", 2, 0.0), rec("c", 1, 1e-3), rec("c", 2, 1e-5)];
    let doc = svg(&two, true);
    assert_eq!(doc.matches("<polyline").count(), 2);
    assert!(doc.contains("a&lt;b"));
    assert!(doc.contains("values &lt;= 0 drawn at 1.000e-5"));
    assert_eq!(doc, svg(&two, true));
}
