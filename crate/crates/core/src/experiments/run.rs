//! Experiment runners.
//!
//! Replica `r` always draws from `RandomStream::new(master_seed).derive(r)`
//! and results are gathered in replica order before any reduction, so a
//! report depends only on its config, never on the number of worker threads.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde_json::json;

use crate::analytics::{
    expected_count_above, expected_population, least_squares, median, survival_estimate, Estimate,
};
use crate::error::Result;
use crate::martingales::{evaluate_positions, limit_diagnostic, MartingaleKind};
use crate::params::{DerivedRates, ModelParams};
use crate::population::snapshot::{format_g17, write_events_csv, write_snapshots_csv};
use crate::population::{simulate, simulate_with, Observer, ParticleState, RunSummary, SimConfig};
use crate::rng::RandomStream;
use crate::spine::{
    many_to_one_estimate, simulate_spine, spine_decomposition_series, write_fissions_csv,
    write_spine_csv, SpineMeasure,
};

use super::config::{Experiment, ExperimentConfig, ManyToOneCheck};
use super::gof::kernel_checks;
use super::report::{ExperimentReport, Metric, Tolerance, TruncationStats};

/// A file produced next to the report.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub artifacts: Vec<Artifact>,
}

/// `output_dir/<experiment>/<seed>/`.
pub fn output_path(config: &ExperimentConfig) -> Result<PathBuf> {
    Ok(config
        .output_dir
        .join(config.experiment()?.name())
        .join(config.master_seed.to_string()))
}

/// Writes `report.json` and every artifact; returns the directory.
pub fn write_output(config: &ExperimentConfig, out: &ExperimentOutput) -> Result<PathBuf> {
    let dir = output_path(config)?;
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("report.json"), out.report.to_json()?)?;
    for a in &out.artifacts {
        std::fs::write(dir.join(&a.name), &a.contents)?;
    }
    Ok(dir)
}

/// Validates the config and runs its experiment.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let start = Instant::now();
    let exp = config.experiment()?.clone();
    let mut ctx = Ctx::new(config);
    match &exp {
        Experiment::Expect { lambdas } => expect(&mut ctx, lambdas)?,
        Experiment::Simulate { csv_replicas } => simulate_exp(&mut ctx, *csv_replicas)?,
        Experiment::VerifyMean { points, z_tol } => verify_mean(&mut ctx, points, *z_tol)?,
        Experiment::Growth {
            t_lo,
            t_hi,
            record_step,
            band,
        } => growth(&mut ctx, None, *t_lo, *t_hi, *record_step, *band)?,
        Experiment::GrowthAbove {
            lambda,
            t_lo,
            t_hi,
            record_step,
            band,
        } => growth(&mut ctx, Some(*lambda), *t_lo, *t_hi, *record_step, *band)?,
        Experiment::Rightmost {
            record_step,
            fit_fraction,
            band,
        } => rightmost(&mut ctx, *record_step, *fit_fraction, *band)?,
        Experiment::RareSurvival {
            lambda,
            times,
            slope_tolerance,
            min_successes,
        } => rare_survival(&mut ctx, *lambda, times, *slope_tolerance, *min_successes)?,
        Experiment::Martingale {
            martingale,
            times,
            z_tol,
        } => martingale_exp(&mut ctx, martingale, times, *z_tol)?,
        Experiment::Spine {
            measure,
            horizon,
            step_h,
            rel_band,
            decomposition_bound,
            many_to_one,
            z_tol,
        } => spine(
            &mut ctx,
            *measure,
            *horizon,
            *step_h,
            *rel_band,
            *decomposition_bound,
            many_to_one.as_ref(),
            *z_tol,
        )?,
        Experiment::KernelsTest {
            samples,
            grid,
            p_min,
        } => {
            let (metrics, table) = kernel_checks(ctx.root, *samples, *grid, *p_min)?;
            ctx.metrics.extend(metrics);
            ctx.artifacts.push(Artifact {
                name: "gof.csv".into(),
                contents: table.into_bytes(),
            });
        }
    }
    let mut report = ExperimentReport {
        experiment: exp.name().to_string(),
        config: config.clone(),
        derived: ctx.derived,
        metrics: ctx.metrics,
        tables: ctx.tables,
        truncation: ctx.truncation,
        flags: ctx.flags,
        passed: false,
        runtime_seconds: 0.0,
    };
    if report.derived.degenerate {
        report.flags.push("degenerate_rates".into());
    }
    report.recompute_passed();
    report.runtime_seconds = start.elapsed().as_secs_f64();
    Ok(ExperimentOutput {
        report,
        artifacts: ctx.artifacts,
    })
}

struct Ctx<'a> {
    config: &'a ExperimentConfig,
    params: &'a ModelParams,
    derived: DerivedRates,
    root: RandomStream,
    metrics: Vec<Metric>,
    tables: BTreeMap<String, serde_json::Value>,
    truncation: TruncationStats,
    flags: Vec<String>,
    artifacts: Vec<Artifact>,
}

impl<'a> Ctx<'a> {
    fn new(config: &'a ExperimentConfig) -> Self {
        Self {
            config,
            params: &config.model,
            derived: config.model.derive(),
            root: RandomStream::new(config.master_seed),
            metrics: Vec::new(),
            tables: BTreeMap::new(),
            truncation: TruncationStats::default(),
            flags: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    fn sim(&self) -> SimConfig {
        self.config.sim.clone().expect("validated")
    }

    fn replicas(&self) -> u64 {
        self.config.replicas
    }

    fn artifact(&mut self, name: &str, contents: impl Into<Vec<u8>>) {
        self.artifacts.push(Artifact {
            name: name.into(),
            contents: contents.into(),
        });
    }

    fn note_truncation(&mut self, truncated: u64) {
        self.truncation = TruncationStats::new(self.replicas(), truncated);
        if truncated > 0 {
            self.flags.push("truncated_replicas".into());
        }
    }
}

/// Runs `f(r)` for every replica in parallel and returns results in replica
/// order.
fn par_replicas<T, F>(n: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Observer evaluating a statistic of the alive set at each record time.
struct Recorder<F> {
    f: F,
    rows: Vec<(f64, Vec<f64>)>,
}

impl<F: FnMut(f64, &[ParticleState]) -> Vec<f64>> Observer for Recorder<F> {
    fn on_record(
        &mut self,
        time: f64,
        alive: &[ParticleState],
        _: Option<&crate::population::Genealogy>,
    ) {
        let v = (self.f)(time, alive);
        self.rows.push((time, v));
    }
}

struct Recorded {
    rows: Vec<(f64, Vec<f64>)>,
    summary: RunSummary,
}

fn run_recorded<F>(
    params: &ModelParams,
    sim: &SimConfig,
    stream: RandomStream,
    f: F,
) -> Result<Recorded>
where
    F: FnMut(f64, &[ParticleState]) -> Vec<f64>,
{
    let mut rec = Recorder {
        f,
        rows: Vec::new(),
    };
    let summary = simulate_with(params, sim, stream, &mut rec)?;
    Ok(Recorded {
        rows: rec.rows,
        summary,
    })
}

/// `start, start + step, …` up to `end` inclusive, landing exactly on `end`.
fn grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    let n = ((end - start) / step + 1e-9).floor() as usize;
    let mut v: Vec<f64> = (0..=n).map(|k| start + k as f64 * step).collect();
    if let Some(last) = v.last_mut() {
        if (end - *last).abs() < 1e-9 * step {
            *last = end;
        }
    }
    v
}

fn sim_for(base: &SimConfig, record_times: Vec<f64>) -> SimConfig {
    let mut sim = base.clone();
    sim.horizon = *record_times.last().expect("non-empty");
    sim.record_times = record_times;
    sim.track_genealogy = false;
    sim.record_events = false;
    sim
}

fn fmt_num(x: f64) -> String {
    let s = format!("{x}");
    s
}

// ---------------------------------------------------------------- expect --

/// Root of the decreasing function `Δ_λ` by bisection.
fn delta_root(d: &DerivedRates) -> f64 {
    if d.delta_lambda(0.0) <= 0.0 {
        return 0.0;
    }
    let mut hi = 1.0;
    while d.delta_lambda(hi) > 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if d.delta_lambda(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn expect(ctx: &mut Ctx, lambdas: &[f64]) -> Result<()> {
    let d = ctx.derived;
    ctx.metrics.push(Metric::absolute(
        "lambda_crit",
        d.lambda_crit,
        delta_root(&d),
        1e-9,
        "bisection root of Δ_λ",
    ));
    ctx.metrics.push(Metric::absolute(
        "delta at lambda_crit",
        d.delta_lambda(d.lambda_crit),
        0.0,
        1e-12,
        "root property of λ_crit",
    ));
    ctx.metrics.push(Metric::info(
        "growth_exponent",
        d.growth_exponent,
        "β̂₀²/2 + β̂",
    ));
    let mut rows = Vec::new();
    let mut csv = String::from("lambda,delta,optimal_split,split_exponent\n");
    for &l in lambda_list(lambdas) {
        let delta = d.delta_lambda(l);
        let (p_star, best) = if l > 0.0 {
            let p = d.optimal_split(l);
            (p, d.split_exponent(l, p)?)
        } else {
            (1.0, d.growth_exponent)
        };
        ctx.metrics.push(Metric::absolute(
            format!("delta({})", fmt_num(l)),
            delta,
            best,
            1e-12,
            "maximised (1-p)-split exponent",
        ));
        rows.push(json!({"lambda": l, "delta": delta, "optimal_split": p_star}));
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            format_g17(l),
            format_g17(delta),
            format_g17(p_star),
            format_g17(best)
        );
    }
    ctx.tables.insert("delta".into(), json!(rows));
    ctx.artifact("delta.csv", csv);
    Ok(())
}

fn lambda_list(l: &[f64]) -> &[f64] {
    l
}

// -------------------------------------------------------------- simulate --

fn simulate_exp(ctx: &mut Ctx, csv_replicas: u64) -> Result<()> {
    let mut sim = ctx.sim();
    if sim.record_times.is_empty() {
        sim.record_times = vec![sim.horizon];
    }
    let params = ctx.params;
    let root = ctx.root;
    let outs = par_replicas(ctx.replicas(), |r| {
        let mut s = sim.clone();
        if r < csv_replicas {
            s.track_genealogy = true;
            s.record_events = true;
        }
        simulate(params, &s, root.derive(r))
    })?;
    let truncated = outs.iter().filter(|o| o.truncated).count() as u64;
    ctx.note_truncation(truncated);

    let mut monotone = true;
    let mut antichain = true;
    for o in &outs {
        monotone &= o.snapshots.windows(2).all(|w| w[1].len() >= w[0].len());
    }
    for (r, o) in outs.iter().enumerate().take(csv_replicas as usize) {
        for s in &o.snapshots {
            antichain &= s.check_antichain().is_ok();
        }
        let mut buf = Vec::new();
        write_snapshots_csv(&mut buf, &o.snapshots)?;
        ctx.artifact(&format!("snapshots_{r}.csv"), buf);
        let mut buf = Vec::new();
        write_events_csv(&mut buf, &o.events, o.genealogy.as_ref().expect("tracked"))?;
        ctx.artifact(&format!("events_{r}.csv"), buf);
    }
    ctx.metrics.push(Metric::band(
        "population non-decreasing",
        if monotone { 1.0 } else { 0.0 },
        None,
        Some(1.0),
        [1.0, 1.0],
        "offspring counts are >= 1",
    ));
    if csv_replicas > 0 {
        ctx.metrics.push(Metric::band(
            "alive labels form an antichain",
            if antichain { 1.0 } else { 0.0 },
            None,
            Some(1.0),
            [1.0, 1.0],
            "Ulam-Harris genealogy",
        ));
    }

    let mut csv = String::from("t,mean_population,std_error,mean_above_zero\n");
    let mut table = Vec::new();
    for (k, &t) in sim.record_times.iter().enumerate() {
        let sizes: Vec<f64> = outs
            .iter()
            .filter(|o| !o.truncated)
            .filter_map(|o| o.snapshots.get(k).map(|s| s.len() as f64))
            .collect();
        let above: Vec<f64> = outs
            .iter()
            .filter(|o| !o.truncated)
            .filter_map(|o| o.snapshots.get(k).map(|s| s.count_above(0.0) as f64))
            .collect();
        if sizes.is_empty() {
            continue;
        }
        let est = Estimate::from_samples(&sizes);
        let ab = Estimate::from_samples(&above);
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            format_g17(t),
            format_g17(est.mean),
            format_g17(est.std_error),
            format_g17(ab.mean)
        );
        table.push(json!({"t": t, "mean": est.mean, "se": finite(est.std_error)}));
        if t > 0.0 && sizes.len() >= 30 && !sim.homogeneous_only {
            ctx.metrics.push(Metric::z_test(
                format!("E|N_t| at t={}", fmt_num(t)),
                &est,
                expected_population(&ctx.derived, t)?,
                4.0,
                "closed-form E|N_t|",
            ));
        } else {
            ctx.metrics.push(Metric::info(
                format!("mean |N_t| at t={}", fmt_num(t)),
                est.mean,
                "Monte Carlo",
            ));
        }
    }
    ctx.tables.insert("population".into(), json!(table));
    ctx.artifact("population.csv", csv);
    Ok(())
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

// ----------------------------------------------------------- verify-mean --

fn verify_mean(ctx: &mut Ctx, points: &[[f64; 2]], z_tol: f64) -> Result<()> {
    let mut times: Vec<f64> = points.iter().map(|p| p[0]).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let sim = sim_for(&ctx.sim(), times.clone());
    let params = ctx.params;
    let root = ctx.root;
    let pts = points.to_vec();
    let tt = times.clone();
    let results = par_replicas(ctx.replicas(), |r| {
        let rec = run_recorded(params, &sim, root.derive(r), |t, alive| {
            let mut v: Vec<f64> = pts
                .iter()
                .filter(|p| p[0] == t)
                .map(|p| alive.iter().filter(|a| a.position() > p[1]).count() as f64)
                .collect();
            v.push(alive.len() as f64);
            v
        })?;
        Ok((rec.rows, rec.summary.truncated))
    })?;
    let truncated = results.iter().filter(|r| r.1).count() as u64;
    ctx.note_truncation(truncated);
    let good: Vec<&Vec<(f64, Vec<f64>)>> = results.iter().filter(|r| !r.1).map(|r| &r.0).collect();
    if good.len() < 2 {
        ctx.metrics.push(Metric::band(
            "complete replicas",
            good.len() as f64,
            None,
            None,
            [2.0, f64::MAX],
            "need two or more",
        ));
        return Ok(());
    }

    let mut header = String::from("replica");
    let mut columns: Vec<(String, usize, usize)> = Vec::new();
    for (k, &t) in tt.iter().enumerate() {
        let here: Vec<&[f64; 2]> = pts.iter().filter(|p| p[0] == t).collect();
        for (j, p) in here.iter().enumerate() {
            columns.push((format!("above_t{}_x{}", fmt_num(t), fmt_num(p[1])), k, j));
        }
        columns.push((format!("total_t{}", fmt_num(t)), k, here.len()));
    }
    for (name, _, _) in &columns {
        header.push(',');
        header.push_str(name);
    }
    let mut csv = header + "\n";
    for (r, rows) in good.iter().enumerate() {
        csv.push_str(&r.to_string());
        for &(_, k, j) in &columns {
            csv.push(',');
            csv.push_str(&format_g17(rows[k].1[j]));
        }
        csv.push('\n');
    }
    ctx.artifact("counts.csv", csv);

    for (k, &t) in tt.iter().enumerate() {
        let here: Vec<&[f64; 2]> = pts.iter().filter(|p| p[0] == t).collect();
        for (j, p) in here.iter().enumerate() {
            let xs: Vec<f64> = good.iter().map(|rows| rows[k].1[j]).collect();
            ctx.metrics.push(Metric::z_test(
                format!("E|N_t^x| at t={} x={}", fmt_num(t), fmt_num(p[1])),
                &Estimate::from_samples(&xs),
                expected_count_above(&ctx.derived, t, p[1])?,
                z_tol,
                "closed-form E|N_t^x|",
            ));
        }
        let xs: Vec<f64> = good.iter().map(|rows| rows[k].1[here.len()]).collect();
        let reference = if sim.homogeneous_only {
            (ctx.derived.beta_hat * t).exp()
        } else {
            expected_population(&ctx.derived, t)?
        };
        ctx.metrics.push(Metric::z_test(
            format!("E|N_t| at t={}", fmt_num(t)),
            &Estimate::from_samples(&xs),
            reference,
            z_tol,
            if sim.homogeneous_only {
                "Yule mean e^{β̂t}"
            } else {
                "closed-form E|N_t|"
            },
        ));
    }
    if sim.homogeneous_only {
        ctx.flags
            .push("homogeneous_only: E|N_t^x| references assume catalytic branching".into());
    }
    Ok(())
}

// ---------------------------------------------------------------- growth --

fn growth(
    ctx: &mut Ctx,
    lambda: Option<f64>,
    t_lo: f64,
    t_hi: f64,
    step: f64,
    band: Option<[f64; 2]>,
) -> Result<()> {
    let times = grid(t_lo, t_hi, step);
    let sim = sim_for(&ctx.sim(), times.clone());
    let params = ctx.params;
    let root = ctx.root;
    let results = par_replicas(ctx.replicas(), |r| {
        let rec = run_recorded(params, &sim, root.derive(r), |t, alive| {
            let n = match lambda {
                None => alive.len(),
                Some(l) => alive.iter().filter(|a| a.position() > l * t).count(),
            };
            vec![n as f64]
        })?;
        Ok((rec.rows, rec.summary.truncated))
    })?;
    let truncated = results.iter().filter(|r| r.1).count() as u64;
    ctx.note_truncation(truncated);
    if truncated * 2 > ctx.replicas() {
        ctx.flags.push("underpowered".into());
    }

    let reference = match lambda {
        None => ctx.derived.growth_exponent,
        Some(l) => ctx.derived.delta_lambda(l.max(0.0)),
    };
    let mut csv = String::from("replica,t,count\n");
    let mut slopes = Vec::new();
    let mut zero_count = 0;
    let mut censored = 0;
    for (r, (rows, trunc)) in results.iter().enumerate() {
        for (t, v) in rows {
            let _ = writeln!(csv, "{r},{},{}", format_g17(*t), v[0]);
        }
        // a truncated replica is censored: fit what it reached of the window
        if *trunc {
            if rows.len() < 4 {
                continue;
            }
            censored += 1;
        }
        if rows.iter().any(|(_, v)| v[0] <= 0.0) {
            zero_count += 1;
            continue;
        }
        let pts: Vec<(f64, f64)> = rows.iter().map(|(t, v)| (*t, v[0].ln())).collect();
        slopes.push(least_squares(&pts)?.0);
    }
    ctx.artifact("series.csv", csv);
    if zero_count > 0 {
        ctx.flags.push(format!(
            "{zero_count} replicas had an empty count in the window"
        ));
    }
    let (name, default_half) = match lambda {
        None => ("growth slope of log|N_t|".to_string(), 0.15),
        Some(l) => (
            format!("growth slope of log|N_t^(λt)| at λ={}", fmt_num(l)),
            0.15,
        ),
    };
    let band = band.unwrap_or([reference - default_half, reference + default_half]);
    if slopes.is_empty() {
        ctx.metrics.push(Metric::band(
            "usable replicas",
            0.0,
            None,
            None,
            [1.0, f64::MAX],
            "need one or more",
        ));
        return Ok(());
    }
    let est = Estimate::from_samples(&slopes);
    ctx.metrics.push(Metric::band(
        name,
        est.mean,
        finite(est.std_error),
        Some(reference),
        band,
        match lambda {
            None => "growth exponent β̂₀²/2 + β̂; band from pilot runs",
            Some(_) => "Δ_λ; band from pilot runs",
        },
    ));
    ctx.metrics.push(Metric::info(
        "median replica slope",
        median(&slopes),
        "Monte Carlo",
    ));
    ctx.metrics.push(Metric::info(
        "usable replicas",
        slopes.len() as f64,
        "non-empty in the window",
    ));
    ctx.metrics.push(Metric::info(
        "censored replicas",
        censored as f64,
        "truncated, fitted on the record times reached",
    ));
    let per_t: Vec<serde_json::Value> = times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let xs: Vec<f64> = results
                .iter()
                .filter(|r| !r.1)
                .filter_map(|r| r.0.get(k).map(|row| row.1[0]))
                .collect();
            let e = Estimate::from_samples(&xs);
            json!({"t": t, "mean_count": finite(e.mean), "se": finite(e.std_error)})
        })
        .collect();
    ctx.tables.insert("counts".into(), json!(per_t));
    ctx.tables.insert("slopes".into(), json!(slopes));
    Ok(())
}

// ------------------------------------------------------------- rightmost --

fn rightmost(ctx: &mut Ctx, step: f64, fit_fraction: f64, band: Option<[f64; 2]>) -> Result<()> {
    let base = ctx.sim();
    let mut times = grid(step, base.horizon, step);
    if times.last() != Some(&base.horizon) {
        times.push(base.horizon);
    }
    let sim = sim_for(&base, times.clone());
    let params = ctx.params;
    let root = ctx.root;
    let results = par_replicas(ctx.replicas(), |r| {
        let rec = run_recorded(params, &sim, root.derive(r), |_, alive| {
            vec![alive
                .iter()
                .map(|a| a.position())
                .fold(f64::NEG_INFINITY, f64::max)]
        })?;
        Ok((rec.rows, rec.summary.truncated))
    })?;
    let truncated = results.iter().filter(|r| r.1).count() as u64;
    ctx.note_truncation(truncated);
    if truncated * 2 > ctx.replicas() {
        ctx.flags.push("underpowered".into());
    }
    let horizon = sim.horizon;
    let fit_from = horizon * (1.0 - fit_fraction);
    let mut csv = String::from("replica,t,rightmost\n");
    let mut ratios = Vec::new();
    let mut speeds = Vec::new();
    for (r, (rows, trunc)) in results.iter().enumerate() {
        for (t, v) in rows {
            let _ = writeln!(csv, "{r},{},{}", format_g17(*t), format_g17(v[0]));
        }
        if *trunc {
            continue;
        }
        let (t_end, r_end) = (
            rows.last().expect("horizon recorded").0,
            rows.last().unwrap().1[0],
        );
        ratios.push(r_end / t_end);
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|(t, _)| *t >= fit_from)
            .map(|(t, v)| (*t, v[0]))
            .collect();
        if let Ok((s, _, _)) = least_squares(&pts) {
            speeds.push(s);
        }
    }
    ctx.artifact("rightmost.csv", csv);
    let lc = ctx.derived.lambda_crit;
    if ratios.is_empty() {
        ctx.metrics.push(Metric::band(
            "usable replicas",
            0.0,
            None,
            None,
            [1.0, f64::MAX],
            "need one or more",
        ));
        return Ok(());
    }
    ctx.metrics.push(Metric::band(
        format!("median R_t/t at t={}", fmt_num(horizon)),
        median(&ratios),
        None,
        Some(lc),
        band.unwrap_or([lc - 0.2, lc + 0.2]),
        "λ_crit; band from pilot runs",
    ));
    let e = Estimate::from_samples(&ratios);
    let mut m = Metric::info(
        format!("mean R_t/t at t={}", fmt_num(horizon)),
        e.mean,
        "Monte Carlo",
    );
    m.std_error = finite(e.std_error);
    m.reference = Some(lc);
    ctx.metrics.push(m);
    if !speeds.is_empty() {
        let e = Estimate::from_samples(&speeds);
        let mut m = Metric::info(
            "mean fitted speed of R_t",
            e.mean,
            "trailing-window least squares",
        );
        m.std_error = finite(e.std_error);
        m.reference = Some(lc);
        ctx.metrics.push(m);
    }
    ctx.metrics.push(Metric::info(
        "usable replicas",
        ratios.len() as f64,
        "non-truncated",
    ));
    ctx.tables.insert("ratios".into(), json!(ratios));
    Ok(())
}

// --------------------------------------------------------- rare survival --

fn rare_survival(
    ctx: &mut Ctx,
    lambda: f64,
    times: &[f64],
    tol: f64,
    min_successes: u64,
) -> Result<()> {
    let sim = sim_for(&ctx.sim(), times.to_vec());
    let params = ctx.params;
    let root = ctx.root;
    let results = par_replicas(ctx.replicas(), |r| {
        let rec = run_recorded(params, &sim, root.derive(r), |t, alive| {
            let hit = alive.iter().any(|a| a.position() > lambda * t);
            vec![if hit { 1.0 } else { 0.0 }]
        })?;
        Ok((rec.rows, rec.summary.truncated))
    })?;
    let truncated = results.iter().filter(|r| r.1).count() as u64;
    ctx.note_truncation(truncated);
    if ctx.replicas() < 10_000 {
        ctx.flags
            .push("underpowered: fewer than 10^4 replicas per time".into());
    }
    let good: Vec<&Vec<(f64, Vec<f64>)>> = results.iter().filter(|r| !r.1).map(|r| &r.0).collect();
    let trials = good.len() as u64;
    let delta = ctx.derived.delta_lambda(lambda);
    let mut table = Vec::new();
    let mut csv = String::from("t,successes,trials,p_hat,ci_lo,ci_hi\n");
    let mut pts = Vec::new();
    let mut vars = Vec::new();
    for (k, &t) in times.iter().enumerate() {
        let successes = good.iter().filter(|rows| rows[k].1[0] > 0.0).count() as u64;
        if trials == 0 {
            break;
        }
        let s = survival_estimate(successes, trials)?;
        let _ = writeln!(
            csv,
            "{},{successes},{trials},{},{},{}",
            format_g17(t),
            format_g17(s.p_hat),
            format_g17(s.ci_lo),
            format_g17(s.ci_hi)
        );
        table.push(json!({"t": t, "successes": successes, "trials": trials, "p_hat": s.p_hat, "ci": [s.ci_lo, s.ci_hi]}));
        if successes >= min_successes {
            pts.push((t, s.p_hat.ln()));
            // delta-method variance of ln p̂
            vars.push((1.0 - s.p_hat) / (trials as f64 * s.p_hat));
        }
    }
    ctx.artifact("survival.csv", csv);
    ctx.tables.insert("survival".into(), json!(table));
    ctx.metrics.push(Metric::band(
        "usable time points",
        pts.len() as f64,
        None,
        None,
        [2.0, times.len() as f64],
        "times with enough successes for a log fit",
    ));
    if pts.len() < 2 {
        ctx.flags.push("no_estimate".into());
        return Ok(());
    }
    let (slope, _, _) = least_squares(&pts)?;
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let var: f64 = pts
        .iter()
        .zip(&vars)
        .map(|(p, v)| ((p.0 - mt) / sxx).powi(2) * v)
        .sum();
    let mut m = Metric::absolute(
        format!(
            "decay slope of log P(|N_t^(λt)| > 0) at λ={}",
            fmt_num(lambda)
        ),
        slope,
        delta,
        tol,
        "Δ_λ; tolerance from pilot runs",
    );
    m.std_error = finite(var.sqrt());
    ctx.metrics.push(m);
    Ok(())
}

// ------------------------------------------------------------ martingale --

fn martingale_exp(ctx: &mut Ctx, kind: &MartingaleKind, times: &[f64], z_tol: f64) -> Result<()> {
    let sim = sim_for(&ctx.sim(), times.to_vec());
    let params = ctx.params;
    let root = ctx.root;
    let d = ctx.derived;
    let ge = d.growth_exponent;
    let results = par_replicas(ctx.replicas(), |r| {
        let rec = run_recorded(params, &sim, root.derive(r), |t, alive| {
            let m = evaluate_positions(kind, alive.iter().map(|a| a.position()), t, &d);
            vec![m, alive.len() as f64 * (-ge * t).exp()]
        })?;
        Ok((rec.rows, rec.summary.truncated))
    })?;
    let truncated = results.iter().filter(|r| r.1).count() as u64;
    ctx.note_truncation(truncated);
    let good: Vec<Vec<(f64, f64)>> = results
        .iter()
        .filter(|r| !r.1)
        .map(|r| r.0.iter().map(|(t, v)| (*t, v[0])).collect())
        .collect();
    let mut csv = String::from("replica,t,value\n");
    for (r, traj) in good.iter().enumerate() {
        for (t, v) in traj {
            let _ = writeln!(csv, "{r},{},{}", format_g17(*t), format_g17(*v));
        }
    }
    ctx.artifact("values.csv", csv);
    if good.len() < 2 {
        ctx.metrics.push(Metric::band(
            "usable replicas",
            good.len() as f64,
            None,
            None,
            [2.0, f64::MAX],
            "need two or more",
        ));
        return Ok(());
    }
    for (k, &t) in times.iter().enumerate() {
        let xs: Vec<f64> = good.iter().map(|g| g[k].1).collect();
        ctx.metrics.push(Metric::z_test(
            format!("mean {} martingale at t={}", kind.name(), fmt_num(t)),
            &Estimate::from_samples(&xs),
            1.0,
            z_tol,
            "unit mean of an additive martingale",
        ));
    }
    if matches!(kind, MartingaleKind::Pm) {
        let violations = results
            .iter()
            .flat_map(|r| r.0.iter())
            .filter(|(_, v)| v[0] > v[1] * (1.0 + 1e-12))
            .count();
        ctx.metrics.push(Metric::band(
            "lower-bound violations |N_t|e^{-(β̂₀²/2+β̂)t} < M",
            violations as f64,
            None,
            Some(0.0),
            [0.0, 0.0],
            "termwise bound e^{-β̂₀|x|} <= 1",
        ));
    }
    if good.len() >= 100 {
        let diag = limit_diagnostic(*kind, &good)?;
        let doc = json!({
            "kind": kind,
            "replicas": diag.replicas,
            "eps": diag.eps,
            "t": diag.points.iter().map(|p| p.t).collect::<Vec<_>>(),
            "mean": diag.points.iter().map(|p| p.mean).collect::<Vec<_>>(),
            "se": diag.points.iter().map(|p| finite(p.se)).collect::<Vec<_>>(),
            "median": diag.points.iter().map(|p| p.median).collect::<Vec<_>>(),
            "frac_below_eps": diag.points.iter().map(|p| p.frac_below_eps).collect::<Vec<_>>(),
        });
        ctx.artifact("martingale.json", serde_json::to_string_pretty(&doc)?);
        ctx.tables.insert("limit_diagnostic".into(), doc);
    } else {
        ctx.flags
            .push("limit diagnostic skipped: fewer than 100 replicas".into());
    }
    Ok(())
}

// ----------------------------------------------------------------- spine --

struct SpineSummary {
    off_origin: f64,
    at_origin: f64,
    local_time: f64,
    xi: f64,
    max_decomposition: f64,
}

#[allow(clippy::too_many_arguments)]
fn spine(
    ctx: &mut Ctx,
    measure: SpineMeasure,
    horizon: f64,
    step_h: f64,
    rel_band: f64,
    bound: f64,
    m2o: Option<&ManyToOneCheck>,
    z_tol: f64,
) -> Result<()> {
    let params = ctx.params;
    let root = ctx.root;
    let mut first = None;
    let summaries = par_replicas(ctx.replicas(), |r| {
        let path = simulate_spine(measure, params, horizon, step_h, root.derive(r))?;
        let series = spine_decomposition_series(&path, params);
        let end = path.end();
        let s = SpineSummary {
            off_origin: path.off_origin_count(horizon) as f64,
            at_origin: path.at_origin_count(horizon) as f64,
            local_time: end.local_time,
            xi: end.xi,
            max_decomposition: series.iter().map(|p| p.1).fold(0.0, f64::max),
        };
        Ok((s, (r == 0).then_some(path)))
    })?;
    let mut csv = String::from("replica,off_origin,at_origin,local_time,xi,max_decomposition\n");
    for (r, (s, p)) in summaries.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{r},{},{},{},{},{}",
            s.off_origin,
            s.at_origin,
            format_g17(s.local_time),
            format_g17(s.xi),
            format_g17(s.max_decomposition)
        );
        if let Some(p) = p {
            first = Some(p.clone());
        }
    }
    ctx.artifact("summary.csv", csv);
    if let Some(path) = first {
        let mut buf = Vec::new();
        write_spine_csv(&mut buf, &path)?;
        ctx.artifact("spine.csv", buf);
        let mut buf = Vec::new();
        write_fissions_csv(&mut buf, &path)?;
        ctx.artifact("fissions.csv", buf);
    }
    ctx.note_truncation(0);
    let (m, m0) = (params.p_dist.mean(), params.q_dist.mean());
    let (hom_rate, cat_rate) = match measure {
        SpineMeasure::Original => (params.beta, params.beta0),
        SpineMeasure::ConstantDrift { .. } => (m * params.beta, 0.0),
        _ => (m * params.beta, m0 * params.beta0),
    };
    let sums: Vec<&SpineSummary> = summaries.iter().map(|s| &s.0).collect();
    let n = sums.len();
    if n >= 2 {
        let per_time: Vec<f64> = sums.iter().map(|s| s.off_origin / horizon).collect();
        ctx.metrics.push(Metric::z_test(
            "off-origin fissions per unit time",
            &Estimate::from_samples(&per_time),
            hom_rate,
            z_tol,
            "Poisson clock rate",
        ));
    }
    if cat_rate > 0.0 {
        let total_l: f64 = sums.iter().map(|s| s.local_time).sum();
        let total_n: f64 = sums.iter().map(|s| s.at_origin).sum();
        if total_l > 0.0 {
            // given the local time, at-origin fissions are Poisson(rate·L)
            let expected = cat_rate * total_l;
            let z = (total_n - expected) / expected.sqrt();
            ctx.metrics.push(Metric {
                name: "at-origin fissions per unit local time".into(),
                estimate: total_n / total_l,
                std_error: Some(expected.sqrt() / total_l),
                ci: None,
                reference: Some(cat_rate),
                provenance: "local-time clock rate".into(),
                z: Some(z),
                tolerance: Tolerance::ZScore { max_abs_z: z_tol },
                pass: Some(z.abs() <= z_tol),
            });
        }
    }
    let mean_of = |f: &dyn Fn(&SpineSummary) -> f64| -> Estimate {
        Estimate::from_samples(&sums.iter().map(|s| f(s)).collect::<Vec<_>>())
    };
    let rel = |target: f64| {
        [
            target - rel_band * target.abs(),
            target + rel_band * target.abs(),
        ]
    };
    match measure {
        SpineMeasure::TowardOriginPm => {
            let b0 = ctx.derived.beta0_hat;
            let e = mean_of(&|s| s.local_time / horizon);
            ctx.metrics.push(Metric::band(
                format!("mean L_t/t at t={}", fmt_num(horizon)),
                e.mean,
                finite(e.std_error),
                Some(b0),
                rel(b0),
                "local-time speed β̂₀ under the drift toward the origin",
            ));
            let worst = sums.iter().map(|s| s.max_decomposition).fold(0.0, f64::max);
            ctx.metrics.push(Metric::band(
                "largest running spine decomposition",
                worst,
                None,
                None,
                [0.0, bound],
                "boundedness of the additive martingale",
            ));
        }
        SpineMeasure::ConstantDrift { lambda } => {
            let e = mean_of(&|s| s.xi / horizon);
            ctx.metrics.push(Metric::band(
                format!("mean xi_t/t at t={}", fmt_num(horizon)),
                e.mean,
                finite(e.std_error),
                Some(lambda),
                rel(lambda),
                "law of large numbers for drifted motion",
            ));
        }
        SpineMeasure::SignDrift { lambda } => {
            let e = mean_of(&|s| s.xi.abs() / horizon);
            ctx.metrics.push(Metric::band(
                format!("mean |xi_t|/t at t={}", fmt_num(horizon)),
                e.mean,
                finite(e.std_error),
                Some(lambda.abs()),
                rel(lambda.abs()),
                "drift λ away from the origin",
            ));
        }
        SpineMeasure::Original => {
            let e = mean_of(&|s| s.xi);
            ctx.metrics.push(Metric::z_test(
                format!("mean xi_t at t={}", fmt_num(horizon)),
                &e,
                0.0,
                z_tol,
                "driftless motion",
            ));
        }
    }
    if let Some(c) = m2o {
        let est = many_to_one_estimate(params, c.t, c.x, c.samples, root.derive(u64::MAX))?;
        ctx.metrics.push(Metric::z_test(
            format!(
                "many-to-one E|N_t^x| at t={} x={}",
                fmt_num(c.t),
                fmt_num(c.x)
            ),
            &est,
            expected_count_above(&ctx.derived, c.t, c.x)?,
            z_tol,
            "closed-form E|N_t^x|",
        ));
    }
    Ok(())
}
