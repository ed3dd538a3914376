//! Model parameters, offspring laws and the closed-form rate constants
//! derived from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// A finite-support offspring law on `{1, 2, ...}`.
///
/// Zero offspring is not representable: every branching event replaces the
/// parent by at least one child, so the population never dies out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(u32, f64)>", into = "Vec<(u32, f64)>")]
pub struct OffspringDistribution {
    probs: Vec<(u32, f64)>,
    cumulative: Vec<f64>,
    mean: f64,
}

impl OffspringDistribution {
    pub fn new(mut probs: Vec<(u32, f64)>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidOffspring("empty support".into()));
        }
        probs.sort_by_key(|&(n, _)| n);
        for w in probs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidOffspring(format!(
                    "offspring count {} listed twice",
                    w[0].0
                )));
            }
        }
        let mut total = 0.0;
        for &(n, w) in &probs {
            if n == 0 {
                return Err(Error::InvalidOffspring(
                    "offspring counts must be at least 1".into(),
                ));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidOffspring(format!(
                    "weight {w} for n = {n} is not a probability"
                )));
            }
            total += w;
        }
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidOffspring(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self::from_sorted(probs))
    }

    fn from_sorted(probs: Vec<(u32, f64)>) -> Self {
        let mean = probs.iter().map(|&(n, w)| n as f64 * w).sum();
        let mut acc = 0.0;
        let cumulative = probs
            .iter()
            .map(|&(_, w)| {
                acc += w;
                acc
            })
            .collect();
        Self {
            probs,
            cumulative,
            mean,
        }
    }

    pub fn point_mass(n: u32) -> Result<Self> {
        Self::new(vec![(n, 1.0)])
    }

    pub fn probs(&self) -> &[(u32, f64)] {
        &self.probs
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn is_point_mass(&self) -> bool {
        self.probs.iter().filter(|&&(_, w)| w > 0.0).count() == 1
    }

    /// `E[A^2]`.
    pub fn second_moment(&self) -> f64 {
        self.probs
            .iter()
            .map(|&(n, w)| (n as f64).powi(2) * w)
            .sum()
    }

    pub fn max_offspring(&self) -> u32 {
        self.probs[self.probs.len() - 1].0
    }

    /// Draws a count by inverting the cumulative weights with `u ∈ [0, 1)`.
    pub fn sample_with(&self, u: f64) -> u32 {
        let target = u * self.cumulative[self.cumulative.len() - 1];
        let idx = self.cumulative.partition_point(|&c| c <= target);
        self.probs[idx.min(self.probs.len() - 1)].0
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        self.sample_with(rng.random::<f64>())
    }

    /// The `X log X` sum `Σ n log(n) w_n`; finite for every finite-support law.
    pub fn xlogx_sum(&self) -> f64 {
        self.probs
            .iter()
            .map(|&(n, w)| {
                let n = n as f64;
                n * n.ln() * w
            })
            .sum()
    }

    /// Whether the `X log X` moment is finite, together with its value.
    pub fn xlogx_holds(&self) -> (bool, f64) {
        let s = self.xlogx_sum();
        (s.is_finite(), s)
    }

    /// The size-biased law `w'_k = k w_k / m`.
    pub fn size_biased(&self) -> Self {
        let probs = self
            .probs
            .iter()
            .map(|&(n, w)| (n, n as f64 * w / self.mean))
            .collect();
        Self::from_sorted(probs)
    }
}

impl TryFrom<Vec<(u32, f64)>> for OffspringDistribution {
    type Error = Error;

    fn try_from(v: Vec<(u32, f64)>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<OffspringDistribution> for Vec<(u32, f64)> {
    fn from(d: OffspringDistribution) -> Self {
        d.probs
    }
}

/// Branching rates and offspring laws.
///
/// `beta` is the homogeneous rate per unit time; `beta0` is the catalytic rate
/// per unit of local time at the origin. `p_dist` is used for deaths away
/// from the origin and `q_dist` for deaths at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ModelParams {
    pub beta: f64,
    pub beta0: f64,
    pub p_dist: OffspringDistribution,
    pub q_dist: OffspringDistribution,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    beta: f64,
    beta0: f64,
    p_dist: OffspringDistribution,
    q_dist: OffspringDistribution,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;

    fn try_from(r: RawParams) -> Result<Self> {
        ModelParams::new(r.beta, r.beta0, r.p_dist, r.q_dist)
    }
}

impl From<ModelParams> for RawParams {
    fn from(p: ModelParams) -> Self {
        RawParams {
            beta: p.beta,
            beta0: p.beta0,
            p_dist: p.p_dist,
            q_dist: p.q_dist,
        }
    }
}

impl ModelParams {
    pub fn new(
        beta: f64,
        beta0: f64,
        p_dist: OffspringDistribution,
        q_dist: OffspringDistribution,
    ) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidParams(format!(
                "beta must be > 0, got {beta}"
            )));
        }
        if !(beta0.is_finite() && beta0 > 0.0) {
            return Err(Error::InvalidParams(format!(
                "beta0 must be > 0, got {beta0}"
            )));
        }
        Ok(Self {
            beta,
            beta0,
            p_dist,
            q_dist,
        })
    }

    /// Binary branching at both rates.
    pub fn binary(beta: f64, beta0: f64) -> Result<Self> {
        let two = OffspringDistribution::point_mass(2)?;
        Self::new(beta, beta0, two.clone(), two)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn derive(&self) -> DerivedRates {
        DerivedRates::from_effective(
            self.beta * (self.p_dist.mean() - 1.0),
            self.beta0 * (self.q_dist.mean() - 1.0),
        )
    }
}

/// Which term dominates the critical speed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `β̂ ≤ β̂₀²/2`: the catalyst sets the speed.
    CatalyticDominant,
    /// `β̂ > β̂₀²/2`: the classical speed `√(2β̂)`.
    HomogeneousDominant,
}

/// Effective rates and every constant derived from them. Computed once and
/// never mutated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedRates {
    pub beta_hat: f64,
    pub beta0_hat: f64,
    pub growth_exponent: f64,
    pub lambda_crit: f64,
    pub regime: Regime,
    /// Both effective rates vanish; `lambda_crit` is reported as 0.
    pub degenerate: bool,
}

pub fn derive_rates(params: &ModelParams) -> DerivedRates {
    params.derive()
}

impl DerivedRates {
    pub fn from_effective(beta_hat: f64, beta0_hat: f64) -> Self {
        let half_sq = 0.5 * beta0_hat * beta0_hat;
        let degenerate = beta_hat <= 0.0 && beta0_hat <= 0.0;
        let regime = if beta0_hat > 0.0 && beta_hat <= half_sq {
            Regime::CatalyticDominant
        } else {
            Regime::HomogeneousDominant
        };
        let lambda_crit = if degenerate {
            0.0
        } else {
            match regime {
                Regime::CatalyticDominant => beta_hat / beta0_hat + 0.5 * beta0_hat,
                Regime::HomogeneousDominant => (2.0 * beta_hat).sqrt(),
            }
        };
        Self {
            beta_hat,
            beta0_hat,
            growth_exponent: half_sq + beta_hat,
            lambda_crit,
            regime,
            degenerate,
        }
    }

    /// Rates of the embedded process that ignores catalytic births.
    pub fn homogeneous_only(&self) -> Self {
        Self::from_effective(self.beta_hat, 0.0)
    }

    /// Exponential rate of `E|N_t^{λt}|`, for `λ ≥ 0`.
    pub fn delta_lambda(&self, lambda: f64) -> f64 {
        assert!(
            lambda >= 0.0,
            "delta_lambda needs lambda >= 0, got {lambda}"
        );
        let b0 = self.beta0_hat;
        if lambda <= b0 {
            0.5 * b0 * b0 - b0 * lambda + self.beta_hat
        } else {
            -0.5 * lambda * lambda + self.beta_hat
        }
    }

    /// Fraction of time spent growing near the origin before travelling.
    pub fn optimal_split(&self, lambda: f64) -> f64 {
        assert!(lambda > 0.0, "optimal_split needs lambda > 0, got {lambda}");
        if self.beta0_hat <= 0.0 || lambda >= self.beta0_hat {
            0.0
        } else {
            1.0 - lambda / self.beta0_hat
        }
    }

    /// Exponent of the two-phase strategy that spends a fraction `p` of
    /// the time at the catalyst and the rest travelling at `λ / (1 - p)`.
    pub fn split_exponent(&self, lambda: f64, p: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!(
                "split fraction must lie in [0, 1), got {p}"
            )));
        }
        Ok(self.beta_hat + 0.5 * self.beta0_hat * self.beta0_hat * p
            - lambda * lambda / (2.0 * (1.0 - p)))
    }
}
