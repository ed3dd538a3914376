//! Exact samplers and densities for Brownian functionals.
//!
//! Everything here is exact in law: bridge extrema and local times by
//! inverting their closed-form tails, first-passage times through the
//! inverse-Gaussian law, and the joint law of position and local time at 0
//! through its radial decomposition.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, InverseGaussian, StandardNormal};

use crate::analytics::normal_cdf;
use crate::error::{Error, Result};

/// Uniform on `(0, 1]`, safe to take the log of.
#[inline]
pub(crate) fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

#[inline]
pub(crate) fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// `N(0, h)`.
#[inline]
pub fn gaussian_increment<R: Rng + ?Sized>(rng: &mut R, h: f64) -> f64 {
    debug_assert!(h > 0.0);
    h.sqrt() * std_normal(rng)
}

/// Solves `(a - w)(b - w) = -h ln(u) / 2` for `w ≤ min(a, b)`.
#[inline]
fn invert_bridge_min(a: f64, b: f64, h: f64, u: f64) -> f64 {
    let c = -0.5 * h * u.ln();
    let d = (a - b).abs();
    // depth below min(a, b), written without cancellation
    let depth = 2.0 * c / (d + (d * d + 4.0 * c).sqrt());
    if depth.is_finite() {
        a.min(b) - depth
    } else {
        a.min(b)
    }
}

/// Minimum of a Brownian bridge from `a` to `b` over duration `h`.
///
/// `P(min ≤ w) = exp(-2 (a - w)(b - w) / h)` for `w ≤ min(a, b)`.
pub fn bridge_min<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64, h: f64) -> f64 {
    invert_bridge_min(a, b, h, open_unit(rng))
}

/// [`bridge_min`] conditioned on the minimum staying above `floor`.
pub fn bridge_min_above<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64, h: f64, floor: f64) -> f64 {
    debug_assert!(floor < a.min(b));
    let p_floor = (-2.0 * (a - floor) * (b - floor) / h).exp();
    let u = p_floor + (1.0 - p_floor) * open_unit(rng);
    invert_bridge_min(a, b, h, u).max(floor)
}

/// Maximum of a Brownian bridge from `a` to `b` over duration `h`.
pub fn bridge_max<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64, h: f64) -> f64 {
    -bridge_min(rng, -a, -b, h)
}

/// Probability that a Brownian bridge from `a` to `b` over `h` touches 0.
pub fn bridge_hits_zero_prob(a: f64, b: f64, h: f64) -> f64 {
    if a * b <= 0.0 {
        1.0
    } else {
        (-2.0 * a * b / h).exp()
    }
}

/// Local time at 0 accumulated by a Brownian bridge from `a` to `b` over `h`.
///
/// `P(L > l) = exp(-((|a| + |b| + l)^2 - (b - a)^2) / (2h))` for `l ≥ 0`; the
/// atom at 0 is the probability of never touching the origin.
pub fn bridge_local_time<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64, h: f64) -> f64 {
    let d = b - a;
    let reach = (d * d - 2.0 * h * open_unit(rng).ln()).sqrt();
    (reach - a.abs() - b.abs()).max(0.0)
}

/// First hitting time of 0 for a Brownian motion started at `x`.
pub fn hitting_time_of_zero<R: Rng + ?Sized>(rng: &mut R, x: f64) -> Result<f64> {
    if x == 0.0 || !x.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "hitting time of 0 needs a finite nonzero start, got {x}"
        )));
    }
    let z = std_normal(rng);
    Ok(x * x / (z * z))
}

/// First time a Brownian motion with drift `toward` in the direction of the
/// target covers distance `gap > 0`. Infinite when the drift points away and
/// the level is never reached.
pub fn first_passage_time<R: Rng + ?Sized>(rng: &mut R, gap: f64, toward: f64) -> f64 {
    debug_assert!(gap >= 0.0);
    if gap <= 0.0 {
        return 0.0;
    }
    if toward == 0.0 {
        let z = std_normal(rng);
        return gap * gap / (z * z);
    }
    if toward < 0.0 {
        // hits with probability exp(-2|ν|gap); conditioned on hitting, the
        // motion is the one drifting toward the level at speed |ν|
        let reach = (2.0 * toward * gap).exp();
        if rng.random::<f64>() >= reach {
            return f64::INFINITY;
        }
    }
    let speed = toward.abs();
    let ig = InverseGaussian::new(gap / speed, gap * gap).expect("positive parameters");
    ig.sample(rng)
}

/// Joint law of `(ξ_t, L_t)` for a Brownian motion started at 0, where `L` is
/// its local time at 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLaw {
    t: f64,
}

impl JointLaw {
    pub fn new(t: f64) -> Result<Self> {
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::InvalidArgument(format!("time must be > 0, got {t}")));
        }
        Ok(Self { t })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// `(|y| + l) / sqrt(2π t³) · exp(-(|y| + l)² / (2t))`.
    pub fn density(&self, y: f64, l: f64) -> Result<f64> {
        if l < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "local time must be >= 0, got {l}"
            )));
        }
        let s = y.abs() + l;
        let t = self.t;
        Ok(s / (2.0 * PI * t * t * t).sqrt() * (-s * s / (2.0 * t)).exp())
    }

    /// `S = |y| + l` is the norm of a 3-d Gaussian with per-axis variance `t`;
    /// given `S`, `y` is uniform on `(-S, S)` and `l = S - |y|`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let (z1, z2, z3) = (std_normal(rng), std_normal(rng), std_normal(rng));
        let s = self.t.sqrt() * (z1 * z1 + z2 * z2 + z3 * z3).sqrt();
        let y = s * (2.0 * rng.random::<f64>() - 1.0);
        (y, s - y.abs())
    }

    /// Mass of the rectangle `[y0, y1] × [l0, l1]` with `0 ≤ y0 < y1` or
    /// `y0 < y1 ≤ 0`, and `0 ≤ l0 < l1` (either upper end may be infinite).
    ///
    /// Integrating the density in `l` and then `y` gives, for `y ≥ 0`,
    /// `[Φ((y1+l0)/√t) - Φ((y0+l0)/√t)] - [Φ((y1+l1)/√t) - Φ((y0+l1)/√t)]`.
    pub fn rect_probability(&self, y0: f64, y1: f64, l0: f64, l1: f64) -> f64 {
        let (a, b) = if y1 <= 0.0 { (-y1, -y0) } else { (y0, y1) };
        debug_assert!(a >= 0.0 && b >= a && l0 >= 0.0 && l1 >= l0);
        let st = self.t.sqrt();
        let band = |l: f64| -> f64 {
            if l.is_infinite() {
                0.0
            } else {
                normal_cdf((b + l) / st) - normal_cdf((a + l) / st)
            }
        };
        band(l0) - band(l1)
    }
}

/// Draws from [`JointLaw`] at time `law.t()`.
pub fn sample_joint<R: Rng + ?Sized>(rng: &mut R, law: &JointLaw) -> (f64, f64) {
    law.sample(rng)
}
