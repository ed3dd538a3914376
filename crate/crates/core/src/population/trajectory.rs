//! Step-level path records over a unit window and the path-set counters
//! built on them.
//!
//! Every step inside the window stores lower and upper bounds for the
//! particle's signed path. On steps that keep one sign these come from the
//! exact bridge extrema of the driver; on steps that touch 0 the upper value
//! is `max(endpoints, 0)` and the lower one is the mirrored bridge maximum,
//! since the sign of each excursion inside the step is not resolved.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::rng::RandomStream;

use super::label::{Genealogy, NodeId};
use super::particle::ParticleState;
use super::sim::{simulate_with, Observer, SimConfig, MAX_TRACE_STEP};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t0: f64,
    pub t1: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Path records of every particle alive during `[start, end]`.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub start: f64,
    pub end: f64,
    pub step_h: f64,
    records: HashMap<NodeId, Vec<StepRecord>>,
    parent: HashMap<NodeId, NodeId>,
    /// `(node, position)` of the particles alive at `end`.
    alive_end: Vec<(NodeId, f64)>,
    pub truncated: bool,
}

impl Trajectory {
    pub fn alive_at_end(&self) -> &[(NodeId, f64)] {
        &self.alive_end
    }

    fn check(&self, n: i64) -> Result<()> {
        if self.step_h > MAX_TRACE_STEP {
            return Err(Error::InsufficientResolution {
                step_h: self.step_h,
                max: MAX_TRACE_STEP,
            });
        }
        let (a, b) = (n as f64, n as f64 + 1.0);
        if self.start != a || self.end != b {
            return Err(Error::WindowMismatch {
                start: self.start,
                end: self.end,
            });
        }
        Ok(())
    }

    /// Records along the ancestral line of `node` inside the window.
    fn line(&self, node: NodeId) -> impl Iterator<Item = &StepRecord> + '_ {
        let mut cur = Some(node);
        std::iter::from_fn(move || {
            let n = cur?;
            let recs = self.records.get(&n)?;
            cur = self.parent.get(&n).copied();
            Some(recs.iter())
        })
        .flatten()
    }

    /// Particles alive at `n + 1` whose path reached `λn` during
    /// `[n, n + 1]`.
    pub fn count_envelope(&self, lambda: f64, n: i64) -> Result<usize> {
        self.check(n)?;
        let level = lambda * n as f64;
        Ok(self
            .alive_end
            .iter()
            .filter(|&&(node, _)| self.line(node).any(|r| r.upper >= level))
            .count())
    }

    /// Particles alive at `t + 1` whose path stayed strictly above `λs` for
    /// all `s ∈ [t, t + 1]`.
    pub fn count_path_above(&self, lambda: f64, t: i64) -> Result<usize> {
        self.check(t)?;
        let above = |r: &StepRecord| {
            let worst = if lambda >= 0.0 {
                lambda * r.t1
            } else {
                lambda * r.t0
            };
            r.lower > worst
        };
        Ok(self
            .alive_end
            .iter()
            .filter(|&&(node, _)| {
                let mut any = false;
                self.line(node).all(|r| {
                    any = true;
                    above(r)
                }) && any
            })
            .count())
    }
}

struct TraceRecorder {
    traj: Trajectory,
}

impl Observer for TraceRecorder {
    fn trace_window(&self) -> Option<(f64, f64)> {
        Some((self.traj.start, self.traj.end))
    }

    fn on_step(&mut self, node: NodeId, t0: f64, t1: f64, lower: f64, upper: f64) {
        self.traj.records.entry(node).or_default().push(StepRecord {
            t0,
            t1,
            lower,
            upper,
        });
    }

    fn on_stop(&mut self, time: f64, alive: &[ParticleState], genealogy: Option<&Genealogy>) {
        if time != self.traj.end {
            return;
        }
        let g = genealogy.expect("tracing keeps the genealogy");
        for &node in self.traj.records.keys() {
            if let Some(p) = g.parent(node) {
                self.traj.parent.insert(node, p);
            }
        }
        self.traj.alive_end = alive.iter().map(|p| (p.node, p.position())).collect();
    }
}

/// Runs the model and records path bounds over `[n, n + 1]`.
pub fn simulate_traced(
    params: &ModelParams,
    cfg: &SimConfig,
    stream: RandomStream,
    n: u32,
) -> Result<Trajectory> {
    let (a, b) = (f64::from(n), f64::from(n) + 1.0);
    let mut cfg = cfg.clone();
    if cfg.horizon < b {
        cfg.horizon = b;
    }
    let mut rec = TraceRecorder {
        traj: Trajectory {
            start: a,
            end: b,
            step_h: cfg.step_h,
            ..Default::default()
        },
    };
    let summary = simulate_with(params, &cfg, stream, &mut rec)?;
    rec.traj.truncated = summary.truncated;
    Ok(rec.traj)
}
