//! The additive martingales `M^±` and `M^λ` on simulated populations.

use serde::{Deserialize, Serialize};

use crate::analytics::{median, CompensatedSum, Estimate};
use crate::error::{Error, Result};
use crate::params::DerivedRates;
use crate::population::snapshot::PopulationSnapshot;

/// Thresholds for the "limit is zero" diagnostic.
pub const EPS_SWEEP: [f64; 3] = [1e-4, 1e-6, 1e-8];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MartingaleKind {
    /// `Σ e^{-β̂₀|X| - β̂₀²t/2 - β̂t}`, for the full model.
    Pm,
    /// `Σ e^{λX - λ²t/2 - β̂t}`, for homogeneous-only populations.
    Lambda { lambda: f64 },
}

impl MartingaleKind {
    pub fn name(&self) -> &'static str {
        match self {
            MartingaleKind::Pm => "pm",
            MartingaleKind::Lambda { .. } => "lambda",
        }
    }

    /// Whether this martingale belongs to a run with catalytic branching
    /// switched on (`false`) or off (`true`).
    pub fn needs_homogeneous_only(&self) -> bool {
        matches!(self, MartingaleKind::Lambda { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            MartingaleKind::Lambda { lambda } if !lambda.is_finite() => Err(Error::InvalidConfig(
                format!("λ must be finite, got {lambda}"),
            )),
            _ => Ok(()),
        }
    }
}

/// The martingale's value for an alive set given by its positions at `t`,
/// without checking that the set came from a matching run.
pub fn evaluate_positions(
    kind: &MartingaleKind,
    positions: impl IntoIterator<Item = f64>,
    t: f64,
    derived: &DerivedRates,
) -> f64 {
    let b = derived.beta_hat;
    let mut sum = CompensatedSum::default();
    match *kind {
        MartingaleKind::Pm => {
            let b0 = derived.beta0_hat;
            let shift = -0.5 * b0 * b0 * t - b * t;
            for x in positions {
                sum.add((-b0 * x.abs() + shift).exp());
            }
        }
        MartingaleKind::Lambda { lambda } => {
            let shift = -0.5 * lambda * lambda * t - b * t;
            for x in positions {
                sum.add((lambda * x + shift).exp());
            }
        }
    }
    sum.value()
}

/// The martingale's value on a snapshot.
pub fn evaluate(
    kind: &MartingaleKind,
    snap: &PopulationSnapshot,
    derived: &DerivedRates,
) -> Result<f64> {
    check_kind(kind, snap)?;
    Ok(evaluate_positions(
        kind,
        snap.positions(),
        snap.time,
        derived,
    ))
}

fn check_kind(kind: &MartingaleKind, snap: &PopulationSnapshot) -> Result<()> {
    if kind.needs_homogeneous_only() != snap.homogeneous_only {
        return Err(Error::KindMismatch {
            kind: kind.name().into(),
            reason: if snap.homogeneous_only {
                "snapshot comes from a homogeneous-only run".into()
            } else {
                "snapshot has catalytic branching; M^λ needs a homogeneous-only run".into()
            },
        });
    }
    Ok(())
}

/// [`evaluate`] at every snapshot, in order.
pub fn trajectory(
    kind: &MartingaleKind,
    snaps: &[PopulationSnapshot],
    derived: &DerivedRates,
) -> Result<Vec<(f64, f64)>> {
    if snaps.windows(2).any(|w| w[1].time < w[0].time) {
        return Err(Error::InvalidArgument(
            "snapshots must be ordered in time".into(),
        ));
    }
    snaps
        .iter()
        .map(|s| Ok((s.time, evaluate(kind, s, derived)?)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitPoint {
    pub t: f64,
    pub mean: f64,
    pub se: f64,
    pub median: f64,
    /// Fraction of replicas below each of [`EPS_SWEEP`].
    pub frac_below_eps: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitDiagnostic {
    pub kind: MartingaleKind,
    pub replicas: usize,
    pub eps: [f64; 3],
    pub points: Vec<LimitPoint>,
}

/// Cross-replica mean, median and small-value fractions at each recorded
/// time. All trajectories must share the same times.
pub fn limit_diagnostic(
    kind: MartingaleKind,
    replicas: &[Vec<(f64, f64)>],
) -> Result<LimitDiagnostic> {
    if replicas.len() < 100 {
        return Err(Error::InvalidArgument(format!(
            "limit diagnostic needs at least 100 replicas, got {}",
            replicas.len()
        )));
    }
    let times: Vec<f64> = replicas[0].iter().map(|p| p.0).collect();
    if replicas
        .iter()
        .any(|r| r.len() != times.len() || r.iter().zip(&times).any(|(p, &t)| p.0 != t))
    {
        return Err(Error::InvalidArgument(
            "replica trajectories have different times".into(),
        ));
    }
    let points = times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let vals: Vec<f64> = replicas.iter().map(|r| r[i].1).collect();
            let est = Estimate::from_samples(&vals);
            let n = vals.len() as f64;
            let frac = EPS_SWEEP.map(|eps| vals.iter().filter(|&&v| v < eps).count() as f64 / n);
            LimitPoint {
                t,
                mean: est.mean,
                se: est.std_error,
                median: median(&vals),
                frac_below_eps: frac,
            }
        })
        .collect();
    Ok(LimitDiagnostic {
        kind,
        replicas: replicas.len(),
        eps: EPS_SWEEP,
        points,
    })
}
