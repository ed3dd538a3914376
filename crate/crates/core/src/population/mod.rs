//! Particle-level simulation of the branching system.

pub mod label;
pub mod particle;
pub mod sim;
pub mod snapshot;
pub mod trajectory;

pub use label::{Genealogy, NodeId, ParticleLabel};
pub use particle::{
    branch_offspring, step_particle, step_particle_with_drift, Death, DeathKind, ParticleState,
    Step,
};
pub use sim::{
    simulate, simulate_with, BranchEvent, CapPolicy, Observer, RunSummary, SimConfig, SimOutcome,
};
pub use snapshot::{count_above, rightmost, PopulationSnapshot, SnapshotParticle};
pub use trajectory::{simulate_traced, StepRecord, Trajectory};
