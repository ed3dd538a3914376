use bbm_core::analytics::{expected_count_above, expected_population, Estimate};
use bbm_core::population::{simulate, simulate_traced, DeathKind, SimConfig};
use bbm_core::{ModelParams, OffspringDistribution, RandomStream};

fn unit() -> ModelParams {
    ModelParams::binary(1.0, 1.0).unwrap()
}

fn replicate<F: Fn(&bbm_core::population::SimOutcome) -> Vec<f64>>(
    params: &ModelParams,
    cfg: &SimConfig,
    seed: u64,
    n: u64,
    f: F,
) -> Vec<Estimate> {
    let root = RandomStream::new(seed);
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for r in 0..n {
        let out = simulate(params, cfg, root.derive(r)).unwrap();
        assert!(!out.truncated);
        let v = f(&out);
        if cols.is_empty() {
            cols = vec![Vec::with_capacity(n as usize); v.len()];
        }
        for (c, x) in cols.iter_mut().zip(v) {
            c.push(x);
        }
    }
    cols.iter().map(|c| Estimate::from_samples(c)).collect()
}

fn quick_cfg(horizon: f64, record: Vec<f64>) -> SimConfig {
    let mut cfg = SimConfig::new(horizon);
    cfg.record_times = record;
    cfg.track_genealogy = false;
    cfg
}

#[test]
fn full_model_means_match_closed_form() {
    let p = unit();
    let d = p.derive();
    let cfg = quick_cfg(1.0, vec![0.5, 1.0]);
    let est = replicate(&p, &cfg, 11, 20_000, |o| {
        vec![
            o.snapshots[0].count_above(0.0) as f64,
            o.snapshots[1].count_above(0.0) as f64,
            o.snapshots[1].count_above(0.5) as f64,
            o.snapshots[1].len() as f64,
        ]
    });
    let refs = [
        expected_count_above(&d, 0.5, 0.0).unwrap(),
        expected_count_above(&d, 1.0, 0.0).unwrap(),
        expected_count_above(&d, 1.0, 0.5).unwrap(),
        expected_population(&d, 1.0).unwrap(),
    ];
    for (e, r) in est.iter().zip(refs) {
        let z = e.z_against(r);
        println!("{} ± {} vs {r} (z = {z:.2})", e.mean, e.std_error);
        assert!(z.abs() <= 4.0);
    }
}

#[test]
fn homogeneous_only_is_yule() {
    let p = unit();
    let mut cfg = quick_cfg(1.0, vec![1.0]);
    cfg.homogeneous_only = true;
    let est = replicate(&p, &cfg, 12, 20_000, |o| vec![o.snapshots[0].len() as f64]);
    let z = est[0].z_against(std::f64::consts::E);
    assert!(z.abs() <= 4.0, "{:?}", est[0]);
}

#[test]
fn catalytic_births_sit_at_origin() {
    let p = ModelParams::new(
        1e-12,
        1.0,
        OffspringDistribution::point_mass(2).unwrap(),
        OffspringDistribution::point_mass(2).unwrap(),
    )
    .unwrap();
    let mut cfg = SimConfig::new(1.0);
    cfg.record_events = true;
    let root = RandomStream::new(13);
    let mut seen = 0;
    for r in 0..200 {
        let out = simulate(&p, &cfg, root.derive(r)).unwrap();
        for e in &out.events {
            assert_eq!(e.kind, DeathKind::Catalytic);
            assert_eq!(e.position, 0.0);
            seen += 1;
        }
    }
    assert!(seen > 50);
}

#[test]
fn determinism_and_invariants() {
    let p = unit();
    let mut cfg = SimConfig::new(2.0);
    cfg.record_times = vec![0.0, 0.5, 1.0, 1.5, 2.0];
    cfg.record_events = true;
    let a = simulate(&p, &cfg, RandomStream::new(5)).unwrap();
    let b = simulate(&p, &cfg, RandomStream::new(5)).unwrap();
    assert_eq!(a.snapshots, b.snapshots);
    assert_eq!(a.events, b.events);
    assert_eq!(a.snapshots[0].len(), 1);
    assert_eq!(a.snapshots[0].particles[0].position, 0.0);
    for w in a.snapshots.windows(2) {
        assert!(w[1].len() >= w[0].len());
    }
    for s in &a.snapshots {
        s.check_antichain().unwrap();
        let rm = s.rightmost().unwrap();
        assert_eq!(s.count_above(rm), 0);
    }
}

#[test]
fn traced_counts_are_consistent() {
    let p = unit();
    let mut cfg = SimConfig::new(3.0);
    cfg.step_h = 0.005;
    let root = RandomStream::new(21);
    for r in 0..20 {
        let traj = simulate_traced(&p, &cfg, root.derive(r), 2).unwrap();
        let n_end = traj.alive_at_end().len();
        let ends: Vec<f64> = traj.alive_at_end().iter().map(|a| a.1).collect();
        assert_eq!(traj.count_path_above(-1e12, 2).unwrap(), n_end);
        assert_eq!(traj.count_envelope(1e12, 2).unwrap(), 0);
        assert_eq!(traj.count_path_above(1e12, 2).unwrap(), 0);
        for lambda in [0.0, 0.25, 0.5, 1.0] {
            let env = traj.count_envelope(lambda, 2).unwrap();
            let above_end = ends.iter().filter(|&&x| x > lambda * 3.0).count();
            assert!(env >= above_end);
            let path = traj.count_path_above(lambda, 2).unwrap();
            let above = ends.iter().filter(|&&x| x > lambda * 2.0).count();
            assert!(path <= above);
        }
        assert!(traj.count_envelope(0.5, 1).is_err());
    }
}
