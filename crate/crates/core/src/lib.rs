//! Branching Brownian motion with homogeneous branching and catalytic
//! branching at the origin: closed-form references, exact-skeleton
//! simulation, spines, additive martingales and reproducible experiments.

pub mod analytics;
pub mod error;
pub mod experiments;
pub mod kernels;
pub mod martingales;
pub mod params;
pub mod population;
pub mod rng;
pub mod spine;

pub use error::{Error, Result};
pub use params::{derive_rates, DerivedRates, ModelParams, OffspringDistribution, Regime};
pub use rng::RandomStream;
