//! Closed-form expectations and the statistics used to compare simulations
//! against them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::DerivedRates;

/// Standard normal CDF.
///
/// Evaluated through `erfc`, which keeps full relative precision in the
/// lower tail where `1 - Φ` style formulas lose it.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Expected number of particles strictly above `x ≥ 0` at time `t > 0`:
/// `Φ(β̂₀√t - x/√t) · exp(β̂₀²t/2 - β̂₀x + β̂t)`.
pub fn expected_count_above(derived: &DerivedRates, t: f64, x: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("t must be > 0, got {t}")));
    }
    if !(x >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "closed form covers x >= 0 only (got {x}); use E|N_t| - E|N_t^{{-x}}| by symmetry"
        )));
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    let b0 = derived.beta0_hat;
    let st = t.sqrt();
    let exponent = 0.5 * b0 * b0 * t - b0 * x + derived.beta_hat * t;
    Ok(normal_cdf(b0 * st - x / st) * exponent.exp())
}

/// `ln E|N_t^x|`, finite where [`expected_count_above`] overflows.
pub fn log_expected_count_above(derived: &DerivedRates, t: f64, x: f64) -> Result<f64> {
    expected_count_above(derived, t, 0.0)?;
    if !(x >= 0.0) {
        return expected_count_above(derived, t, x).map(f64::ln);
    }
    let b0 = derived.beta0_hat;
    let st = t.sqrt();
    let exponent = 0.5 * b0 * b0 * t - b0 * x + derived.beta_hat * t;
    Ok(log_normal_cdf(b0 * st - x / st) + exponent)
}

/// `ln Φ(x)`, with the Mills-ratio expansion once `Φ` underflows.
pub fn log_normal_cdf(x: f64) -> f64 {
    if x > -30.0 {
        return normal_cdf(x).ln();
    }
    let x2 = x * x;
    -0.5 * x2 - (-x).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
        + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2)).ln()
}

/// `E|N_t| = 2Φ(β̂₀√t) · exp((β̂₀²/2 + β̂)t)`.
pub fn expected_population(derived: &DerivedRates, t: f64) -> Result<f64> {
    Ok(2.0 * expected_count_above(derived, t, 0.0)?)
}

/// Least-squares line through `(t, ln v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub slope: f64,
    pub intercept: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
    pub points: usize,
}

/// Fits `ln(value) ~ intercept + slope·t` over the trailing `window_fraction`
/// of the series' time range.
pub fn growth_rate_fit(series: &[(f64, f64)], window_fraction: f64) -> Result<GrowthFit> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "window fraction must lie in (0, 1], got {window_fraction}"
        )));
    }
    if let Some(&(t, v)) = series.iter().find(|&&(_, v)| !(v > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "value {v} at t = {t} is not positive; log undefined"
        )));
    }
    let (t_min, t_max) = series
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(t, _)| {
            (lo.min(t), hi.max(t))
        });
    let cut = t_max - window_fraction * (t_max - t_min);
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|&&(t, _)| t >= cut - 1e-12)
        .map(|&(t, v)| (t, v.ln()))
        .collect();
    linear_fit(&pts).map(|(slope, intercept, r_squared)| GrowthFit {
        slope,
        intercept,
        window: (cut.max(t_min), t_max),
        r_squared,
        points: pts.len(),
    })
}

/// Ordinary least squares `(slope, intercept, r²)`; needs at least 4 points
/// with distinct abscissae.
pub fn linear_fit(pts: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if pts.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "fit needs at least 4 points, got {}",
            pts.len()
        )));
    }
    least_squares(pts)
}

/// [`linear_fit`] without the minimum point count (at least 2).
pub fn least_squares(pts: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if pts.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "fit needs at least 2 points, got {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::InvalidArgument("fit abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 {
        sxy * sxy / (sxx * syy)
    } else {
        1.0
    };
    Ok((slope, intercept, r_squared))
}

/// Binomial proportion with a Wilson 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalEstimate {
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

pub const Z_95: f64 = 1.959_963_984_540_054;

pub fn survival_estimate(successes: u64, trials: u64) -> Result<SurvivalEstimate> {
    if trials == 0 || successes > trials {
        return Err(Error::InvalidArgument(format!(
            "need 0 <= successes <= trials, trials >= 1; got {successes}/{trials}"
        )));
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z_95 * Z_95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z_95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Ok(SurvivalEstimate {
        p_hat: p,
        ci_lo: if successes == 0 {
            0.0
        } else {
            (centre - half).max(0.0)
        },
        ci_hi: if successes == trials {
            1.0
        } else {
            (centre + half).min(1.0)
        },
    })
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: u64,
}

impl Estimate {
    /// Mean and standard error of `xs` (two passes, compensated).
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std_error: f64::NAN,
                n: 0,
            };
        }
        let mean = xs.iter().copied().collect::<CompensatedSum>().value() / n as f64;
        let ss = xs
            .iter()
            .map(|x| (x - mean) * (x - mean))
            .collect::<CompensatedSum>()
            .value();
        let var = if n > 1 { ss / (n - 1) as f64 } else { f64::NAN };
        Self {
            mean,
            std_error: (var / n as f64).sqrt(),
            n: n as u64,
        }
    }

    pub fn z_against(&self, reference: f64) -> f64 {
        (self.mean - reference) / self.std_error
    }

    pub fn ci95(&self) -> (f64, f64) {
        (
            self.mean - Z_95 * self.std_error,
            self.mean + Z_95 * self.std_error,
        )
    }

    pub fn overlaps(&self, other: &Estimate) -> bool {
        let (a0, a1) = self.ci95();
        let (b0, b1) = other.ci95();
        a0 <= b1 && b0 <= a1
    }
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
