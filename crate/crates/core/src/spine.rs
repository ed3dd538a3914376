//! The spine: one distinguished line of descent, under the original law and
//! under the changed measures that turn the additive martingales into
//! drifts, biased fission rates and size-biased offspring.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::analytics::{CompensatedSum, Estimate};
use crate::error::{Error, Result};
use crate::kernels::{bridge_local_time, std_normal, JointLaw};
use crate::params::{DerivedRates, ModelParams, OffspringDistribution};
use crate::population::particle::{step_particle_with_drift, DeathKind, ParticleState};
use crate::population::snapshot::{format_g17, reader};
use crate::rng::RandomStream;

/// Law under which the spine is simulated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpineMeasure {
    /// Plain Brownian motion, fission rates `β` and `β₀`, plain offspring.
    Original,
    /// Drift `β̂₀` toward the origin, rates `mβ` and `m₀β₀`, size-biased
    /// offspring.
    TowardOriginPm,
    /// Constant drift `λ` with homogeneous fissions only (rate `mβ`,
    /// size-biased offspring).
    ConstantDrift { lambda: f64 },
    /// Drift `λ·sgn(ξ)`, biased rates and size-biased offspring.
    SignDrift { lambda: f64 },
}

impl SpineMeasure {
    pub fn name(&self) -> &'static str {
        match self {
            SpineMeasure::Original => "original",
            SpineMeasure::TowardOriginPm => "toward_origin_pm",
            SpineMeasure::ConstantDrift { .. } => "constant_drift",
            SpineMeasure::SignDrift { .. } => "sign_drift",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SpineMeasure::ConstantDrift { lambda } | SpineMeasure::SignDrift { lambda }
                if !lambda.is_finite() =>
            {
                Err(Error::InvalidConfig(format!(
                    "spine drift must be finite, got {lambda}"
                )))
            }
            _ => Ok(()),
        }
    }

    fn biased(&self) -> bool {
        !matches!(self, SpineMeasure::Original)
    }

    /// Effective rates seen by the spine weight: the constant-drift change
    /// belongs to the homogeneous-only system.
    fn weight_rates(&self, derived: &DerivedRates) -> DerivedRates {
        match self {
            SpineMeasure::ConstantDrift { .. } => derived.homogeneous_only(),
            _ => *derived,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinePoint {
    pub time: f64,
    pub xi: f64,
    pub local_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fission {
    pub time: f64,
    pub at_origin: bool,
    pub offspring: u32,
}

/// A simulated spine: the skeleton of `(ξ, L̃)` and its fissions. Every
/// fission time is also a skeleton time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinePath {
    pub measure: SpineMeasure,
    pub points: Vec<SpinePoint>,
    pub fissions: Vec<Fission>,
}

impl SpinePath {
    pub fn horizon(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.time)
    }

    /// Last skeleton point at or before `t`.
    pub fn at(&self, t: f64) -> Result<SpinePoint> {
        let i = self.points.partition_point(|p| p.time <= t);
        if i == 0 || t > self.horizon() {
            return Err(Error::InvalidArgument(format!(
                "time {t} outside the spine's range [0, {}]",
                self.horizon()
            )));
        }
        Ok(self.points[i - 1])
    }

    pub fn end(&self) -> SpinePoint {
        *self.points.last().expect("paths start with a point")
    }

    pub fn off_origin_count(&self, t: f64) -> usize {
        self.fissions
            .iter()
            .filter(|f| !f.at_origin && f.time <= t)
            .count()
    }

    pub fn at_origin_count(&self, t: f64) -> usize {
        self.fissions
            .iter()
            .filter(|f| f.at_origin && f.time <= t)
            .count()
    }
}

struct Dynamics {
    hom_rate: f64,
    cat_rate: f64,
    p: OffspringDistribution,
    q: OffspringDistribution,
}

fn dynamics(measure: &SpineMeasure, params: &ModelParams) -> Dynamics {
    let (p, q) = (&params.p_dist, &params.q_dist);
    let cat_rate = match measure {
        SpineMeasure::Original => params.beta0,
        SpineMeasure::ConstantDrift { .. } => 0.0,
        _ => q.mean() * params.beta0,
    };
    if measure.biased() {
        Dynamics {
            hom_rate: p.mean() * params.beta,
            cat_rate,
            p: p.size_biased(),
            q: q.size_biased(),
        }
    } else {
        Dynamics {
            hom_rate: params.beta,
            cat_rate,
            p: p.clone(),
            q: q.clone(),
        }
    }
}

fn exp_clock<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    if rate > 0.0 {
        let e: f64 = Exp1.sample(rng);
        e / rate
    } else {
        f64::INFINITY
    }
}

/// Simulates the spine from `ξ₀ = 0` up to `horizon` on a skeleton of step
/// `step_h`.
pub fn simulate_spine(
    measure: SpineMeasure,
    params: &ModelParams,
    horizon: f64,
    step_h: f64,
    stream: RandomStream,
) -> Result<SpinePath> {
    measure.validate()?;
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "horizon must be > 0, got {horizon}"
        )));
    }
    if !(step_h.is_finite() && step_h > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "step_h must be > 0, got {step_h}"
        )));
    }
    let dyn_ = dynamics(&measure, params);
    let mut rng = stream.rng(1);
    let cap = (horizon / step_h).ceil() as usize + 1;
    let mut path = SpinePath {
        measure,
        points: Vec::with_capacity(cap.min(1 << 24)),
        fissions: Vec::new(),
    };
    path.points.push(SpinePoint {
        time: 0.0,
        xi: 0.0,
        local_time: 0.0,
    });
    match measure {
        SpineMeasure::ConstantDrift { lambda } => {
            run_signed(&mut path, &dyn_, lambda, horizon, step_h, &mut rng)
        }
        SpineMeasure::Original => {
            run_reflected(&mut path, &dyn_, 0.0, horizon, step_h, stream, &mut rng)
        }
        SpineMeasure::TowardOriginPm => {
            let drift = -params.derive().beta0_hat;
            run_reflected(&mut path, &dyn_, drift, horizon, step_h, stream, &mut rng)
        }
        SpineMeasure::SignDrift { lambda } => {
            run_reflected(&mut path, &dyn_, lambda, horizon, step_h, stream, &mut rng)
        }
    }
    Ok(path)
}

/// `ξ` through the reflection kernel shared with the particle system, with
/// `drift` acting on `|ξ|`.
fn run_reflected<R: Rng + ?Sized>(
    path: &mut SpinePath,
    d: &Dynamics,
    drift: f64,
    horizon: f64,
    step_h: f64,
    stream: RandomStream,
    rng: &mut R,
) {
    let hom = exp_clock(rng, d.hom_rate);
    let cat = exp_clock(rng, d.cat_rate);
    let mut s = ParticleState::born(0, stream, 0.0, 0.0, 0.0, hom, cat);
    while s.time < horizon {
        let remaining = horizon - s.time;
        let h = remaining.min(step_h);
        let (step, _) = step_particle_with_drift(&mut s, h, drift, rng);
        if step.death.is_none() && h == remaining {
            s.time = horizon;
        }
        path.points.push(SpinePoint {
            time: s.time,
            xi: s.position(),
            local_time: s.local_time(),
        });
        if let Some(death) = step.death {
            let at_origin = death.kind == DeathKind::Catalytic;
            let offspring = if at_origin {
                d.q.sample(rng)
            } else {
                d.p.sample(rng)
            };
            path.fissions.push(Fission {
                time: death.time,
                at_origin,
                offspring,
            });
            if at_origin {
                s.cat_level = s.own_local_time() + exp_clock(rng, d.cat_rate);
            } else {
                s.hom_deadline = s.time + exp_clock(rng, d.hom_rate);
            }
        }
    }
}

/// Signed Brownian motion with constant drift; local time from the exact
/// bridge law of each step.
fn run_signed<R: Rng + ?Sized>(
    path: &mut SpinePath,
    d: &Dynamics,
    lambda: f64,
    horizon: f64,
    step_h: f64,
    rng: &mut R,
) {
    let (mut t, mut xi, mut lt) = (0.0f64, 0.0f64, 0.0f64);
    let mut deadline = exp_clock(rng, d.hom_rate);
    while t < horizon {
        let until = deadline - t;
        let h = step_h.min(horizon - t).min(until);
        let next = xi + lambda * h + h.sqrt() * std_normal(rng);
        lt += bridge_local_time(rng, xi, next, h);
        xi = next;
        let fires = h == until;
        t = if fires {
            deadline
        } else if h == horizon - t {
            horizon
        } else {
            t + h
        };
        path.points.push(SpinePoint {
            time: t,
            xi,
            local_time: lt,
        });
        if fires {
            let offspring = d.p.sample(rng);
            path.fissions.push(Fission {
                time: t,
                at_origin: false,
                offspring,
            });
            deadline = t + exp_clock(rng, d.hom_rate);
        }
    }
}

/// `M̃⁽¹⁾_s · e^{-β̂s - β̂₀L̃_s}` for the given measure.
pub fn spine_weight(measure: &SpineMeasure, derived: &DerivedRates, p: &SpinePoint) -> f64 {
    let d = measure.weight_rates(derived);
    let (b, b0) = (d.beta_hat, d.beta0_hat);
    let (s, x, l) = (p.time, p.xi, p.local_time);
    let log_m1 = match *measure {
        SpineMeasure::Original => 0.0,
        SpineMeasure::TowardOriginPm => -b0 * x.abs() + b0 * l - 0.5 * b0 * b0 * s,
        SpineMeasure::SignDrift { lambda } => {
            lambda * x.abs() - lambda * l - 0.5 * lambda * lambda * s
        }
        SpineMeasure::ConstantDrift { lambda } => lambda * x - 0.5 * lambda * lambda * s,
    };
    (log_m1 - b * s - b0 * l).exp()
}

/// `spine(t) + Σ_{S_n ≤ t} (A_n - 1) spine(S_n)`.
pub fn spine_decomposition_value(
    path: &SpinePath,
    measure: &SpineMeasure,
    params: &ModelParams,
    t: f64,
) -> Result<f64> {
    if path.measure != *measure {
        return Err(Error::MeasureMismatch(format!(
            "path simulated under {} but evaluated under {}",
            path.measure.name(),
            measure.name()
        )));
    }
    let derived = params.derive();
    let mut sum = CompensatedSum::default();
    sum.add(spine_weight(measure, &derived, &path.at(t)?));
    for f in path.fissions.iter().take_while(|f| f.time <= t) {
        if f.offspring > 1 {
            let w = spine_weight(measure, &derived, &path.at(f.time)?);
            sum.add(f64::from(f.offspring - 1) * w);
        }
    }
    Ok(sum.value())
}

/// Running spine decomposition at every skeleton time up to the horizon.
pub fn spine_decomposition_series(path: &SpinePath, params: &ModelParams) -> Vec<(f64, f64)> {
    let derived = params.derive();
    let mut fissions = path.fissions.iter().peekable();
    let mut acc = CompensatedSum::default();
    path.points
        .iter()
        .map(|p| {
            while let Some(f) = fissions.next_if(|f| f.time <= p.time) {
                if f.offspring > 1 {
                    let at = path.at(f.time).expect("fissions lie on the skeleton");
                    acc.add(
                        f64::from(f.offspring - 1) * spine_weight(&path.measure, &derived, &at),
                    );
                }
            }
            (
                p.time,
                acc.value() + spine_weight(&path.measure, &derived, p),
            )
        })
        .collect()
}

/// Many-to-one estimate of `E|N_t^x|` as `Ẽ[1{ξ_t > x} e^{β̂₀L̃_t + β̂t}]`,
/// drawing `(ξ_t, L̃_t)` from their exact joint law.
pub fn many_to_one_estimate(
    params: &ModelParams,
    t: f64,
    x: f64,
    n_samples: u64,
    stream: RandomStream,
) -> Result<Estimate> {
    if n_samples < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 samples, got {n_samples}"
        )));
    }
    let law = JointLaw::new(t)?;
    let d = params.derive();
    let mut rng = stream.rng(0);
    let samples: Vec<f64> = (0..n_samples)
        .map(|_| {
            let (y, l) = law.sample(&mut rng);
            if y > x {
                (d.beta0_hat * l + d.beta_hat * t).exp()
            } else {
                0.0
            }
        })
        .collect();
    Ok(Estimate::from_samples(&samples))
}

/// Many-to-one estimate of `E[Σ_u f(X^u)]` for a path functional, as
/// `Ẽ[f(ξ) e^{β̂₀L̃_t + β̂t}]` over simulated spines.
pub fn many_to_one_path_estimate<F: Fn(&SpinePath) -> f64>(
    params: &ModelParams,
    t: f64,
    step_h: f64,
    n_samples: u64,
    stream: RandomStream,
    f: F,
) -> Result<Estimate> {
    if n_samples < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 samples, got {n_samples}"
        )));
    }
    let d = params.derive();
    let samples = (0..n_samples)
        .map(|i| {
            let path = simulate_spine(SpineMeasure::Original, params, t, step_h, stream.derive(i))?;
            let end = path.end();
            Ok(f(&path) * (d.beta0_hat * end.local_time + d.beta_hat * t).exp())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Estimate::from_samples(&samples))
}

/// Writes `time,xi,local_time` rows.
pub fn write_spine_csv<W: Write>(w: W, path: &SpinePath) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["time", "xi", "local_time"])?;
    for p in &path.points {
        wtr.write_record([
            format_g17(p.time),
            format_g17(p.xi),
            format_g17(p.local_time),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes `time,at_origin,offspring` rows.
pub fn write_fissions_csv<W: Write>(w: W, path: &SpinePath) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["time", "at_origin", "offspring"])?;
    for f in &path.fissions {
        wtr.write_record([
            format_g17(f.time),
            f.at_origin.to_string(),
            f.offspring.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, what: &str) -> Result<T> {
    let line = rec.position().map_or(0, |p| p.line());
    rec.get(i)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::Parse(format!("line {line}: bad {what}")))
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, want: &[&str]) -> Result<()> {
    let got: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if got != want {
        return Err(Error::Parse(format!(
            "expected header {}, got {}",
            want.join(","),
            got.join(",")
        )));
    }
    Ok(())
}

/// Reads a spine skeleton CSV and its fission CSV back into a path.
///
/// Times must be non-decreasing starting at 0, local times non-decreasing and
/// non-negative, and every fission time must appear on the skeleton.
pub fn read_spine_csv<R1: Read, R2: Read>(
    skeleton: R1,
    fissions: R2,
    measure: SpineMeasure,
) -> Result<SpinePath> {
    let mut rdr = reader(skeleton);
    check_header(&mut rdr, &["time", "xi", "local_time"])?;
    let mut points = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let p = SpinePoint {
            time: field(&rec, 0, "time")?,
            xi: field(&rec, 1, "xi")?,
            local_time: field(&rec, 2, "local_time")?,
        };
        if !(p.time.is_finite()
            && p.xi.is_finite()
            && p.local_time.is_finite()
            && p.local_time >= 0.0)
        {
            return Err(Error::Parse(format!(
                "non-finite or negative value at time {}",
                p.time
            )));
        }
        if let Some(prev) = points.last() {
            let prev: &SpinePoint = prev;
            if p.time < prev.time || p.local_time < prev.local_time {
                return Err(Error::Parse(format!(
                    "time or local time decreases at {}",
                    p.time
                )));
            }
        } else if p.time != 0.0 {
            return Err(Error::Parse("spine skeleton must start at time 0".into()));
        }
        points.push(p);
    }
    if points.is_empty() {
        return Err(Error::Parse("empty spine skeleton".into()));
    }
    let mut rdr = reader(fissions);
    check_header(&mut rdr, &["time", "at_origin", "offspring"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let f = Fission {
            time: field(&rec, 0, "time")?,
            at_origin: field(&rec, 1, "at_origin")?,
            offspring: field(&rec, 2, "offspring")?,
        };
        if f.offspring == 0 || !points.iter().any(|p| p.time == f.time) {
            return Err(Error::Parse(format!(
                "fission at {} is not on the skeleton",
                f.time
            )));
        }
        out.push(f);
    }
    if out.windows(2).any(|w| w[1].time < w[0].time) {
        return Err(Error::Parse("fission times decrease".into()));
    }
    Ok(SpinePath {
        measure,
        points,
        fissions: out,
    })
}
