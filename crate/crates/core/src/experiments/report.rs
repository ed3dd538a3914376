//! The machine-readable experiment report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::analytics::Estimate;
use crate::error::Result;
use crate::params::DerivedRates;

use super::config::ExperimentConfig;

/// How a metric is judged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Tolerance {
    /// `|estimate - reference| / std_error <= max_abs_z`.
    ZScore { max_abs_z: f64 },
    /// `lo <= estimate <= hi`.
    Band { lo: f64, hi: f64 },
    /// `|estimate - reference| <= eps`.
    Absolute { eps: f64 },
    /// `estimate` is a p-value that must exceed `min`.
    PValue { min: f64 },
    /// Reported only.
    Info,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    /// Written as `null` when not finite.
    #[serde(with = "nullable_f64")]
    pub estimate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
    /// Where the reference comes from.
    pub provenance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    pub tolerance: Tolerance,
    /// `None` for informational metrics.
    pub pass: Option<bool>,
}

impl Metric {
    pub fn info(name: impl Into<String>, estimate: f64, provenance: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            estimate,
            std_error: None,
            ci: None,
            reference: None,
            provenance: provenance.into(),
            z: None,
            tolerance: Tolerance::Info,
            pass: None,
        }
    }

    /// Monte Carlo mean tested against `reference` by its z-score.
    pub fn z_test(
        name: impl Into<String>,
        est: &Estimate,
        reference: f64,
        max_abs_z: f64,
        provenance: impl Into<String>,
    ) -> Self {
        let z = if est.std_error == 0.0 && est.mean == reference {
            0.0
        } else {
            est.z_against(reference)
        };
        let (lo, hi) = est.ci95();
        Self {
            name: name.into(),
            estimate: est.mean,
            std_error: finite(est.std_error),
            ci: (lo.is_finite() && hi.is_finite()).then_some([lo, hi]),
            reference: Some(reference),
            provenance: provenance.into(),
            z: finite(z),
            tolerance: Tolerance::ZScore { max_abs_z },
            pass: Some(z.abs() <= max_abs_z),
        }
    }

    pub fn band(
        name: impl Into<String>,
        estimate: f64,
        std_error: Option<f64>,
        reference: Option<f64>,
        [lo, hi]: [f64; 2],
        provenance: impl Into<String>,
    ) -> Self {
        Self {
            name: name.into(),
            estimate,
            std_error,
            ci: None,
            reference,
            provenance: provenance.into(),
            z: None,
            tolerance: Tolerance::Band { lo, hi },
            pass: Some(estimate >= lo && estimate <= hi),
        }
    }

    pub fn absolute(
        name: impl Into<String>,
        estimate: f64,
        reference: f64,
        eps: f64,
        provenance: impl Into<String>,
    ) -> Self {
        Self {
            name: name.into(),
            estimate,
            std_error: None,
            ci: None,
            reference: Some(reference),
            provenance: provenance.into(),
            z: None,
            tolerance: Tolerance::Absolute { eps },
            pass: Some((estimate - reference).abs() <= eps),
        }
    }

    pub fn p_value(
        name: impl Into<String>,
        p: f64,
        min: f64,
        provenance: impl Into<String>,
    ) -> Self {
        Self {
            name: name.into(),
            estimate: p,
            std_error: None,
            ci: None,
            reference: None,
            provenance: provenance.into(),
            z: None,
            tolerance: Tolerance::PValue { min },
            pass: Some(p > min),
        }
    }

    pub fn with_ci(mut self, ci: [f64; 2]) -> Self {
        self.ci = Some(ci);
        self
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

mod nullable_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TruncationStats {
    pub replicas: u64,
    pub truncated: u64,
    pub fraction: f64,
}

impl TruncationStats {
    pub fn new(replicas: u64, truncated: u64) -> Self {
        Self {
            replicas,
            truncated,
            fraction: if replicas == 0 {
                0.0
            } else {
                truncated as f64 / replicas as f64
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub config: ExperimentConfig,
    pub derived: DerivedRates,
    pub metrics: Vec<Metric>,
    /// Experiment-specific tables (per-time summaries and the like).
    #[serde(default)]
    pub tables: BTreeMap<String, serde_json::Value>,
    pub truncation: TruncationStats,
    #[serde(default)]
    pub flags: Vec<String>,
    /// Every judged metric passed.
    pub passed: bool,
    pub runtime_seconds: f64,
}

impl ExperimentReport {
    pub fn metric(&self, name: &str) -> Option<&Metric> {
        self.metrics.iter().find(|m| m.name == name)
    }

    pub fn recompute_passed(&mut self) {
        self.passed = self.metrics.iter().all(|m| m.pass != Some(false));
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// JSON with the runtime zeroed, for reproducibility comparisons.
    pub fn to_json_without_runtime(&self) -> Result<String> {
        let mut r = self.clone();
        r.runtime_seconds = 0.0;
        r.to_json()
    }
}
