//! Feeds the checked-in fuzz seeds through every parser entry point, so the
//! seeds stay parseable (or cleanly rejected) without a fuzzing toolchain.

use std::path::PathBuf;

use bbm_core::experiments::{ExperimentConfig, ExperimentReport};
use bbm_core::population::snapshot::{read_events_csv, read_snapshots_csv};
use bbm_core::population::ParticleLabel;
use bbm_core::spine::{read_spine_csv, SpineMeasure};
use bbm_core::ModelParams;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn text(b: &[u8]) -> &str {
    std::str::from_utf8(b).unwrap()
}

#[test]
fn model_params_seeds() {
    for (name, data) in seeds("model_params_json") {
        let r = ModelParams::from_json_str(text(&data));
        assert_eq!(r.is_ok(), !name.starts_with("invalid"), "{name}");
    }
}

#[test]
fn experiment_config_seeds() {
    for (name, data) in seeds("experiment_config_json") {
        let cfg =
            ExperimentConfig::from_json_str(text(&data)).unwrap_or_else(|e| panic!("{name}: {e}"));
        cfg.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn snapshot_seeds() {
    for (name, data) in seeds("snapshot_csv") {
        let snaps = read_snapshots_csv(&data[..]).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(!snaps.is_empty());
    }
}

#[test]
fn event_seeds() {
    for (name, data) in seeds("events_csv") {
        read_events_csv(&data[..]).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn spine_seeds() {
    for (name, data) in seeds("spine_csv") {
        let split = data.iter().position(|&b| b == 0).expect("NUL separator");
        let path = read_spine_csv(
            &data[..split],
            &data[split + 1..],
            SpineMeasure::TowardOriginPm,
        )
        .unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(!path.points.is_empty());
    }
}

#[test]
fn report_seeds() {
    for (name, data) in seeds("report_json") {
        ExperimentReport::from_json_str(text(&data)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn label_seeds() {
    for (name, data) in seeds("label_parse") {
        let r = text(&data).parse::<ParticleLabel>();
        assert_eq!(r.is_ok(), name != "bad", "{name}");
    }
}
