use bbm_core::experiments::{run, write_output, ExperimentConfig, ExperimentReport, Tolerance};

fn config(json: &str) -> ExperimentConfig {
    ExperimentConfig::from_json_str(json).unwrap()
}

const UNIT: &str =
    r#""model": {"beta": 1.0, "beta0": 1.0, "p_dist": [[2, 1.0]], "q_dist": [[2, 1.0]]}"#;

fn with_model(rest: &str) -> String {
    format!("{{{UNIT}, {rest}}}")
}

fn assert_passed(r: &ExperimentReport) {
    for m in &r.metrics {
        assert_ne!(m.pass, Some(false), "{}: {m:?}", r.experiment);
    }
    assert!(r.passed);
}

#[test]
fn expect_needs_no_simulation() {
    let cfg = config(&with_model(r#""experiment": {"kind": "expect"}"#));
    let out = run(&cfg).unwrap();
    assert_passed(&out.report);
    let lc = out.report.metric("lambda_crit").unwrap();
    assert!((lc.estimate - 2f64.sqrt()).abs() < 1e-15);
    let csv = std::str::from_utf8(&out.artifacts[0].contents).unwrap();
    assert!(csv.starts_with("lambda,delta,optimal_split,split_exponent\n"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn simulate_writes_replica_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&with_model(&format!(
        r#""sim": {{"horizon": 1.0, "record_times": [0.5, 1.0], "step_h": 0.01}},
            "experiment": {{"kind": "simulate", "csv_replicas": 2}},
            "replicas": 40, "master_seed": 3, "output_dir": {:?}"#,
        dir.path()
    )));
    let out = run(&cfg).unwrap();
    assert_passed(&out.report);
    let names: Vec<&str> = out.artifacts.iter().map(|a| a.name.as_str()).collect();
    for n in [
        "snapshots_0.csv",
        "events_0.csv",
        "snapshots_1.csv",
        "events_1.csv",
        "population.csv",
    ] {
        assert!(names.contains(&n), "{names:?}");
    }
    let path = write_output(&cfg, &out).unwrap();
    assert!(path.ends_with("simulate/3"));
    let json = std::fs::read_to_string(path.join("report.json")).unwrap();
    let back = ExperimentReport::from_json_str(&json).unwrap();
    assert_eq!(back.metrics.len(), out.report.metrics.len());
    let snaps = std::fs::read(path.join("snapshots_0.csv")).unwrap();
    let parsed = bbm_core::population::snapshot::read_snapshots_csv(&snaps[..]).unwrap();
    assert_eq!(parsed.len(), 2);
}

#[test]
fn verify_mean_small() {
    let cfg = config(&with_model(
        r#""sim": {"horizon": 1.0, "step_h": 0.05, "track_genealogy": false},
           "experiment": {"kind": "verify_mean", "points": [[0.5, 0.0], [1.0, 0.25]]},
           "replicas": 2000, "master_seed": 11"#,
    ));
    let out = run(&cfg).unwrap();
    assert_passed(&out.report);
    assert_eq!(out.report.metrics.len(), 4);
    let counts = &out
        .artifacts
        .iter()
        .find(|a| a.name == "counts.csv")
        .unwrap()
        .contents;
    let header = std::str::from_utf8(counts)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    assert_eq!(
        header,
        "replica,above_t0.5_x0,total_t0.5,above_t1_x0.25,total_t1"
    );
}

#[test]
fn growth_reports_slope_band() {
    let cfg = config(&with_model(
        r#""sim": {"horizon": 4.0, "step_h": 1.0},
           "experiment": {"kind": "growth", "t_lo": 2.0, "t_hi": 4.0, "record_step": 0.5, "band": [0.0, 5.0]},
           "replicas": 20, "master_seed": 1"#,
    ));
    let out = run(&cfg).unwrap();
    let m = &out.report.metrics[0];
    assert!(m.name.starts_with("growth slope"));
    assert_eq!(m.reference, Some(1.5));
    assert!(matches!(m.tolerance, Tolerance::Band { .. }));
    assert!(m.estimate > 0.5 && m.estimate < 3.0, "{m:?}");
}

#[test]
fn rare_survival_without_successes_fails_visibly() {
    let cfg = config(&with_model(
        r#""sim": {"horizon": 3.0, "step_h": 1.0},
           "experiment": {"kind": "rare_survival", "lambda": 3.0, "times": [1.0, 2.0, 3.0], "min_successes": 1000000},
           "replicas": 50"#,
    ));
    let out = run(&cfg).unwrap();
    assert!(!out.report.passed);
    assert!(out.report.flags.iter().any(|f| f == "no_estimate"));
    let json = out.report.to_json().unwrap();
    assert!(!json.contains("NaN"));
    ExperimentReport::from_json_str(&json).unwrap();
}

#[test]
fn martingale_limit_diagnostic_written() {
    let cfg = config(&with_model(
        r#""sim": {"horizon": 1.0, "step_h": 0.05, "track_genealogy": false},
           "experiment": {"kind": "martingale", "martingale": {"kind": "pm"}, "times": [0.5, 1.0]},
           "replicas": 400, "master_seed": 2"#,
    ));
    let out = run(&cfg).unwrap();
    assert_passed(&out.report);
    let doc = out
        .artifacts
        .iter()
        .find(|a| a.name == "martingale.json")
        .unwrap();
    let v: serde_json::Value = serde_json::from_slice(&doc.contents).unwrap();
    assert_eq!(v["t"].as_array().unwrap().len(), 2);
    assert_eq!(v["frac_below_eps"][0].as_array().unwrap().len(), 3);
}

#[test]
fn spine_toward_origin() {
    let cfg = config(&with_model(
        r#""experiment": {"kind": "spine", "measure": {"kind": "toward_origin_pm"}, "horizon": 5.0,
                          "step_h": 0.05, "rel_band": 0.2,
                          "many_to_one": {"t": 1.0, "x": 0.5, "samples": 20000}},
           "replicas": 200, "master_seed": 9"#,
    ));
    let out = run(&cfg).unwrap();
    assert_passed(&out.report);
    for n in ["spine.csv", "fissions.csv", "summary.csv"] {
        assert!(out.artifacts.iter().any(|a| a.name == n));
    }
}

#[test]
fn kernels_test_small() {
    let cfg = config(&with_model(
        r#""experiment": {"kind": "kernels_test", "samples": 20000, "grid": 8}"#,
    ));
    let out = run(&cfg).unwrap();
    assert_passed(&out.report);
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    let cfg = config(&with_model(
        r#""sim": {"horizon": 2.0, "step_h": 0.05},
           "experiment": {"kind": "growth", "t_lo": 0.5, "t_hi": 2.0, "record_step": 0.5},
           "replicas": 24, "master_seed": 77"#,
    ));
    let go = |threads| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| run(&cfg).unwrap())
    };
    let (a, b) = (go(1), go(3));
    assert_eq!(
        a.report.to_json_without_runtime().unwrap(),
        b.report.to_json_without_runtime().unwrap()
    );
    assert_eq!(a.artifacts, b.artifacts);
}

#[test]
fn rightmost_median_matches_fkpp() {
    // P(R_6 <= x) solves w_t = w_xx / 2 + w^2 - w from w(0, .) = 1{x >= 0};
    // finite differences (dx = 0.005, Richardson-stable to 1e-4) give median 5.276560
    let cfg = config(&with_model(
        r#""sim": {"horizon": 6.0, "step_h": 1.0, "track_genealogy": false, "homogeneous_only": true},
           "experiment": {"kind": "rightmost"},
           "replicas": 4000, "master_seed": 12"#,
    ));
    let out = run(&cfg).unwrap();
    let m = out.report.metric("median R_t/t at t=6").unwrap();
    assert!((m.estimate - 5.276560 / 6.0).abs() < 0.02, "{m:?}");
}
