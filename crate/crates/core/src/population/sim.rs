//! The branching particle system.
//!
//! Time is cut into slices at every stop (record times, the horizon and the
//! bounds of an optional trace window). Within a slice each alive particle is
//! advanced independently with the randomness of `(its stream, slice index)`,
//! so the run is a pure function of the master seed whatever the processing
//! order. Offspring replace their parent in place and any extra children are
//! appended and advanced later in the same slice.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::rng::RandomStream;

use super::label::{Genealogy, NodeId, UNTRACKED};
use super::particle::DeathKind;
use super::particle::{branch_offspring, step_particle_with_drift, ParticleState, Step};
use super::snapshot::{PopulationSnapshot, SnapshotParticle};

/// Largest step for which path envelopes are considered resolved.
pub const MAX_TRACE_STEP: f64 = 0.01;

/// Stream index reserved for auxiliary draws (bridge maxima in traces), so
/// that observing a run never changes it.
const AUX_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapPolicy {
    #[default]
    StopAndFlag,
}

fn default_step_h() -> f64 {
    0.005
}

fn default_cap() -> u64 {
    1_000_000
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "default_step_h")]
    pub step_h: f64,
    pub horizon: f64,
    #[serde(default)]
    pub record_times: Vec<f64>,
    #[serde(default = "default_cap")]
    pub population_cap: u64,
    #[serde(default)]
    pub cap_policy: CapPolicy,
    /// Switches the catalytic clock off so only homogeneous births occur.
    #[serde(default)]
    pub homogeneous_only: bool,
    #[serde(default)]
    pub start_position: f64,
    /// Keep the Ulam-Harris genealogy (needed for labels, event logs and
    /// traces). Large runs can turn it off.
    #[serde(default = "default_true")]
    pub track_genealogy: bool,
    #[serde(default)]
    pub record_events: bool,
}

impl SimConfig {
    pub fn new(horizon: f64) -> Self {
        Self {
            step_h: default_step_h(),
            horizon,
            record_times: vec![horizon],
            population_cap: default_cap(),
            cap_policy: CapPolicy::StopAndFlag,
            homogeneous_only: false,
            start_position: 0.0,
            track_genealogy: true,
            record_events: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.step_h.is_finite() && self.step_h > 0.0) {
            return bad(format!("step_h must be > 0, got {}", self.step_h));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return bad(format!("horizon must be > 0, got {}", self.horizon));
        }
        if self.population_cap == 0 {
            return bad("population_cap must be > 0".into());
        }
        if !self.start_position.is_finite() {
            return bad("start_position must be finite".into());
        }
        for w in self.record_times.windows(2) {
            if !(w[0] < w[1]) {
                return bad("record_times must be strictly increasing".into());
            }
        }
        if let (Some(&a), Some(&b)) = (self.record_times.first(), self.record_times.last()) {
            if !(a >= 0.0 && b <= self.horizon) {
                return bad(format!(
                    "record_times must lie in [0, {}], got [{a}, {b}]",
                    self.horizon
                ));
            }
        }
        if self.record_events && !self.track_genealogy {
            return bad("record_events needs track_genealogy".into());
        }
        Ok(())
    }
}

/// One branching event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchEvent {
    pub time: f64,
    pub node: NodeId,
    pub kind: DeathKind,
    pub position: f64,
    pub n_children: u32,
}

/// Receives a run as it happens. All hooks default to no-ops.
pub trait Observer {
    /// Called at every record time with the whole alive population.
    fn on_record(&mut self, _time: f64, _alive: &[ParticleState], _genealogy: Option<&Genealogy>) {}

    /// Called at every slice boundary, record time or not.
    fn on_stop(&mut self, _time: f64, _alive: &[ParticleState], _genealogy: Option<&Genealogy>) {}

    fn on_branch(&mut self, _event: &BranchEvent) {}

    /// Window `[start, end]` over which [`Observer::on_step`] should fire.
    fn trace_window(&self) -> Option<(f64, f64)> {
        None
    }

    /// Signed-path bounds over one step inside the trace window.
    fn on_step(&mut self, _node: NodeId, _t0: f64, _t1: f64, _lower: f64, _upper: f64) {}
}

impl Observer for () {}

/// Counts, events and snapshots of a finished run.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub snapshots: Vec<PopulationSnapshot>,
    pub events: Vec<BranchEvent>,
    pub genealogy: Option<Genealogy>,
    pub truncated: bool,
    /// Time at which the cap was exceeded.
    pub truncated_at: Option<f64>,
    pub final_population: usize,
    /// Time the run reached: the horizon unless truncated.
    pub reached: f64,
    pub branch_events: u64,
}

/// Lightweight result of [`simulate_with`].
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub genealogy: Option<Genealogy>,
    pub truncated: bool,
    pub truncated_at: Option<f64>,
    pub final_population: usize,
    pub reached: f64,
    pub branch_events: u64,
}

/// Runs the model and returns snapshots at every record time (and the event
/// log if `cfg.record_events`).
pub fn simulate(params: &ModelParams, cfg: &SimConfig, stream: RandomStream) -> Result<SimOutcome> {
    let mut collector = SnapshotCollector {
        homogeneous_only: cfg.homogeneous_only,
        record_events: cfg.record_events,
        ..Default::default()
    };
    let summary = simulate_with(params, cfg, stream, &mut collector)?;
    Ok(SimOutcome {
        snapshots: collector.snapshots,
        events: collector.events,
        genealogy: summary.genealogy,
        truncated: summary.truncated,
        truncated_at: summary.truncated_at,
        final_population: summary.final_population,
        reached: summary.reached,
        branch_events: summary.branch_events,
    })
}

#[derive(Default)]
struct SnapshotCollector {
    homogeneous_only: bool,
    record_events: bool,
    snapshots: Vec<PopulationSnapshot>,
    events: Vec<BranchEvent>,
}

impl Observer for SnapshotCollector {
    fn on_record(&mut self, time: f64, alive: &[ParticleState], genealogy: Option<&Genealogy>) {
        let particles = alive
            .iter()
            .map(|p| SnapshotParticle {
                label: genealogy.map(|g| g.label(p.node)).unwrap_or_default(),
                position: p.position(),
                local_time: p.local_time(),
            })
            .collect();
        let mut snap = PopulationSnapshot::new(time, particles);
        snap.homogeneous_only = self.homogeneous_only;
        if genealogy.is_some() {
            snap.sort_by_label();
        }
        self.snapshots.push(snap);
    }

    fn on_branch(&mut self, event: &BranchEvent) {
        if self.record_events {
            self.events.push(event.clone());
        }
    }
}

/// Runs the model, reporting to `observer` instead of collecting snapshots.
pub fn simulate_with<O: Observer + ?Sized>(
    params: &ModelParams,
    cfg: &SimConfig,
    stream: RandomStream,
    observer: &mut O,
) -> Result<RunSummary> {
    cfg.validate()?;
    let window = observer.trace_window();
    if let Some((a, b)) = window {
        if !(a >= 0.0 && a < b && b <= cfg.horizon) {
            return Err(Error::InvalidConfig(format!(
                "trace window [{a}, {b}] must lie inside [0, {}]",
                cfg.horizon
            )));
        }
        if cfg.step_h > MAX_TRACE_STEP {
            return Err(Error::InsufficientResolution {
                step_h: cfg.step_h,
                max: MAX_TRACE_STEP,
            });
        }
    }
    let track = cfg.track_genealogy || window.is_some();
    let hom_rate = params.beta;
    let cat_rate = if cfg.homogeneous_only {
        0.0
    } else {
        params.beta0
    };

    let mut stops: Vec<f64> = cfg.record_times.clone();
    stops.push(cfg.horizon);
    if let Some((a, b)) = window {
        stops.push(a);
        stops.push(b);
    }
    stops.retain(|&t| t > 0.0);
    stops.sort_by(f64::total_cmp);
    stops.dedup();
    let is_record = |t: f64| cfg.record_times.contains(&t);

    let mut genealogy = track.then(Genealogy::new);
    let root_node = if track { Genealogy::ROOT } else { UNTRACKED };
    let max_children = params
        .p_dist
        .max_offspring()
        .max(params.q_dist.max_offspring()) as usize;
    let cap = cfg.population_cap.min(usize::MAX as u64) as usize;
    // reserved address space is only backed once used
    let mut alive: Vec<ParticleState> = Vec::with_capacity(cap.min(1 << 26) + max_children);
    alive.push(ParticleState::with_fresh_clocks(
        root_node,
        stream,
        cfg.start_position,
        0.0,
        0.0,
        hom_rate,
        cat_rate,
    ));

    if is_record(0.0) {
        observer.on_record(0.0, &alive, genealogy.as_ref());
    }

    let mut branch_events = 0u64;
    let mut truncated_at = None;
    let mut reached = 0.0;
    let mut slice_start = 0.0;
    'slices: for (k, &slice_end) in stops.iter().enumerate() {
        let counter = k as u64 + 1;
        let tracing = window.is_some_and(|(a, b)| slice_start >= a && slice_end <= b);
        let mut i = 0;
        while i < alive.len() {
            let mut rng = alive[i].stream.rng(counter);
            let mut aux = tracing.then(|| alive[i].stream.derive(AUX_STREAM).rng(counter));
            loop {
                let p = &mut alive[i];
                let remaining = slice_end - p.time;
                if remaining <= 0.0 {
                    break;
                }
                let h = if remaining <= cfg.step_h {
                    remaining
                } else {
                    cfg.step_h
                };
                let (step, dmin) = step_particle_with_drift(p, h, 0.0, &mut rng);
                if step.death.is_none() && h == remaining {
                    // land exactly on the stop despite rounding in `time + h`
                    p.time = slice_end;
                }
                if let Some(aux) = aux.as_mut() {
                    emit_step(observer, p, &step, dmin, aux);
                }
                let Some(death) = step.death else { continue };
                let parent = *p;
                let children = branch_offspring(
                    &parent,
                    &death,
                    &params.p_dist,
                    &params.q_dist,
                    hom_rate,
                    cat_rate,
                    genealogy.as_mut(),
                    &mut rng,
                );
                branch_events += 1;
                observer.on_branch(&BranchEvent {
                    time: death.time,
                    node: parent.node,
                    kind: death.kind,
                    position: death.position,
                    n_children: children.len() as u32,
                });
                let mut kids = children.into_iter();
                let first = kids.next().expect("offspring counts are >= 1");
                alive[i] = first;
                alive.extend(kids);
                if alive.len() > cap {
                    truncated_at = Some(death.time);
                    reached = death.time;
                    break 'slices;
                }
                // the first child continues with a fresh slice stream
                rng = alive[i].stream.rng(counter);
                if tracing {
                    aux = Some(alive[i].stream.derive(AUX_STREAM).rng(counter));
                }
            }
            i += 1;
        }
        reached = slice_end;
        observer.on_stop(slice_end, &alive, genealogy.as_ref());
        if is_record(slice_end) {
            observer.on_record(slice_end, &alive, genealogy.as_ref());
        }
        slice_start = slice_end;
    }

    Ok(RunSummary {
        genealogy,
        truncated: truncated_at.is_some(),
        truncated_at,
        final_population: alive.len(),
        reached,
        branch_events,
    })
}

fn emit_step<O: Observer + ?Sized, R: rand::Rng>(
    observer: &mut O,
    p: &ParticleState,
    step: &Step,
    dmin: f64,
    aux: &mut R,
) {
    let (lower, upper) = step.extrema(aux, p.position(), dmin);
    observer.on_step(p.node, step.t0, step.t1, lower, upper);
}
