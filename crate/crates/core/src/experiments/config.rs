//! Experiment configuration as read from JSON.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::martingales::MartingaleKind;
use crate::params::ModelParams;
use crate::population::SimConfig;
use crate::spine::SpineMeasure;

fn one() -> u64 {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// A full experiment: model, simulation settings, what to measure, how many
/// replicas and where to put the results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    #[serde(default = "one")]
    pub replicas: u64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn z4() -> f64 {
    4.0
}

fn half() -> f64 {
    0.5
}

fn unit_step() -> f64 {
    1.0
}

fn default_points() -> Vec<[f64; 2]> {
    vec![[0.5, 0.0], [1.0, 0.0], [1.0, 0.5], [2.0, 0.0]]
}

fn default_lambdas() -> Vec<f64> {
    vec![0.5, 1.0, std::f64::consts::SQRT_2, 2.0]
}

fn default_slope_tolerance() -> f64 {
    0.3
}

fn default_min_successes() -> u64 {
    10
}

fn default_spine_step() -> f64 {
    0.01
}

fn default_rel_band() -> f64 {
    0.1
}

fn default_bound() -> f64 {
    1e3
}

fn default_samples() -> u64 {
    100_000
}

fn default_grid() -> usize {
    20
}

fn default_p_min() -> f64 {
    1e-3
}

fn one_csv() -> u64 {
    1
}

/// Many-to-one comparison attached to a spine experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManyToOneCheck {
    pub t: f64,
    pub x: f64,
    #[serde(default = "default_samples")]
    pub samples: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    /// Closed-form constants only; no simulation.
    Expect {
        #[serde(default = "default_lambdas")]
        lambdas: Vec<f64>,
    },
    /// Plain runs: population statistics plus CSVs of the first replicas.
    Simulate {
        #[serde(default = "one_csv")]
        csv_replicas: u64,
    },
    /// Monte Carlo `E|N_t^x|` and `E|N_t|` against the closed forms.
    VerifyMean {
        #[serde(default = "default_points")]
        points: Vec<[f64; 2]>,
        #[serde(default = "z4")]
        z_tol: f64,
    },
    /// Slope of `log|N_t|` over `[t_lo, t_hi]`.
    Growth {
        t_lo: f64,
        t_hi: f64,
        #[serde(default = "half")]
        record_step: f64,
        #[serde(default)]
        band: Option<[f64; 2]>,
    },
    /// Slope of `log|N_t^{λt}|` over `[t_lo, t_hi]`.
    GrowthAbove {
        lambda: f64,
        t_lo: f64,
        t_hi: f64,
        #[serde(default = "half")]
        record_step: f64,
        #[serde(default)]
        band: Option<[f64; 2]>,
    },
    /// `R_t / t` at the horizon and the slope of `R_t`.
    Rightmost {
        #[serde(default = "unit_step")]
        record_step: f64,
        #[serde(default = "half")]
        fit_fraction: f64,
        #[serde(default)]
        band: Option<[f64; 2]>,
    },
    /// Decay rate of `P(|N_t^{λt}| > 0)` for `λ > λ_crit`.
    RareSurvival {
        lambda: f64,
        times: Vec<f64>,
        #[serde(default = "default_slope_tolerance")]
        slope_tolerance: f64,
        #[serde(default = "default_min_successes")]
        min_successes: u64,
    },
    /// Unit mean and limit diagnostics of an additive martingale.
    Martingale {
        martingale: MartingaleKind,
        times: Vec<f64>,
        #[serde(default = "z4")]
        z_tol: f64,
    },
    /// Spine laws under a measure, with an optional many-to-one check.
    Spine {
        measure: SpineMeasure,
        horizon: f64,
        #[serde(default = "default_spine_step")]
        step_h: f64,
        #[serde(default = "default_rel_band")]
        rel_band: f64,
        #[serde(default = "default_bound")]
        decomposition_bound: f64,
        #[serde(default)]
        many_to_one: Option<ManyToOneCheck>,
        #[serde(default = "z4")]
        z_tol: f64,
    },
    /// Goodness-of-fit checks of the exact samplers.
    KernelsTest {
        #[serde(default = "default_samples")]
        samples: u64,
        #[serde(default = "default_grid")]
        grid: usize,
        #[serde(default = "default_p_min")]
        p_min: f64,
    },
}

impl Experiment {
    /// CLI subcommand and output directory name.
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Expect { .. } => "expect",
            Experiment::Simulate { .. } => "simulate",
            Experiment::VerifyMean { .. } => "verify-mean",
            Experiment::Growth { .. } => "growth",
            Experiment::GrowthAbove { .. } => "growth-above",
            Experiment::Rightmost { .. } => "rightmost",
            Experiment::RareSurvival { .. } => "rare-survival",
            Experiment::Martingale { .. } => "martingale",
            Experiment::Spine { .. } => "spine",
            Experiment::KernelsTest { .. } => "kernels-test",
        }
    }

    pub const NAMES: [&'static str; 10] = [
        "expect",
        "simulate",
        "verify-mean",
        "growth",
        "growth-above",
        "rightmost",
        "rare-survival",
        "martingale",
        "spine",
        "kernels-test",
    ];

    /// The experiment a subcommand runs when the config does not name one.
    /// Kinds that need parameters have no default.
    pub fn default_for(name: &str) -> Result<Self> {
        let e = match name {
            "expect" => Experiment::Expect {
                lambdas: default_lambdas(),
            },
            "simulate" => Experiment::Simulate { csv_replicas: 1 },
            "verify-mean" => Experiment::VerifyMean {
                points: default_points(),
                z_tol: 4.0,
            },
            "rightmost" => Experiment::Rightmost {
                record_step: 1.0,
                fit_fraction: 0.5,
                band: None,
            },
            "kernels-test" => Experiment::KernelsTest {
                samples: default_samples(),
                grid: default_grid(),
                p_min: default_p_min(),
            },
            other if Self::NAMES.contains(&other) => {
                return Err(Error::InvalidConfig(format!(
                    "experiment `{other}` needs an `experiment` block in the config"
                )))
            }
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown experiment `{other}`"
                )))
            }
        };
        Ok(e)
    }

    fn needs_sim(&self) -> bool {
        !matches!(
            self,
            Experiment::Expect { .. } | Experiment::Spine { .. } | Experiment::KernelsTest { .. }
        )
    }
}

fn positive(v: f64, what: &str) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{what} must be > 0, got {v}")))
    }
}

fn check_band(band: &Option<[f64; 2]>) -> Result<()> {
    match band {
        Some([lo, hi]) if !(lo.is_finite() && hi.is_finite() && lo <= hi) => Err(
            Error::InvalidConfig(format!("band [{lo}, {hi}] is not an interval")),
        ),
        _ => Ok(()),
    }
}

fn check_window(t_lo: f64, t_hi: f64, step: f64) -> Result<()> {
    positive(step, "record_step")?;
    if !(t_lo >= 0.0 && t_hi > t_lo && t_hi.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "need 0 <= t_lo < t_hi, got [{t_lo}, {t_hi}]"
        )));
    }
    if ((t_hi - t_lo) / step).floor() < 3.0 {
        return Err(Error::InvalidConfig(
            "the fit window needs at least 4 record times".into(),
        ));
    }
    Ok(())
}

fn check_times(times: &[f64], min: usize) -> Result<()> {
    if times.len() < min {
        return Err(Error::InvalidConfig(format!(
            "need at least {min} times, got {}",
            times.len()
        )));
    }
    if times.iter().any(|t| !(t.is_finite() && *t > 0.0)) || times.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(Error::InvalidConfig(
            "times must be positive and strictly increasing".into(),
        ));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(cfg)
    }

    /// The experiment, falling back to the default for `name` when the
    /// config has none; errors if the config names a different experiment.
    pub fn resolve(&mut self, name: &str) -> Result<()> {
        match &self.experiment {
            Some(e) if e.name() != name => Err(Error::InvalidConfig(format!(
                "config describes `{}` but `{name}` was requested",
                e.name()
            ))),
            Some(_) => Ok(()),
            None => {
                self.experiment = Some(Experiment::default_for(name)?);
                Ok(())
            }
        }
    }

    pub fn experiment(&self) -> Result<&Experiment> {
        self.experiment
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("no experiment configured".into()))
    }

    /// Checks everything that can be checked before simulating.
    pub fn validate(&self) -> Result<()> {
        if self.replicas == 0 {
            return Err(Error::InvalidConfig("replicas must be >= 1".into()));
        }
        let exp = self.experiment()?;
        if exp.needs_sim() {
            let sim = self.sim.as_ref().ok_or_else(|| {
                Error::InvalidConfig(format!("`{}` needs a `sim` block", exp.name()))
            })?;
            sim.validate()?;
        }
        let derived = self.model.derive();
        match exp {
            Experiment::Expect { lambdas } => {
                if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
                    return Err(Error::InvalidConfig(
                        "λ values must be finite and >= 0".into(),
                    ));
                }
            }
            Experiment::Simulate { .. } => {}
            Experiment::VerifyMean { points, z_tol } => {
                positive(*z_tol, "z_tol")?;
                if points.is_empty() {
                    return Err(Error::InvalidConfig(
                        "verify-mean needs at least one (t, x) point".into(),
                    ));
                }
                for [t, x] in points {
                    positive(*t, "t")?;
                    if !(x.is_finite() && *x >= 0.0) {
                        return Err(Error::InvalidConfig(format!(
                            "x must be finite and >= 0, got {x}"
                        )));
                    }
                }
            }
            Experiment::Growth {
                t_lo,
                t_hi,
                record_step,
                band,
            } => {
                check_window(*t_lo, *t_hi, *record_step)?;
                check_band(band)?;
            }
            Experiment::GrowthAbove {
                lambda,
                t_lo,
                t_hi,
                record_step,
                band,
            } => {
                if !lambda.is_finite() {
                    return Err(Error::InvalidConfig("λ must be finite".into()));
                }
                check_window(*t_lo, *t_hi, *record_step)?;
                check_band(band)?;
            }
            Experiment::Rightmost {
                record_step,
                fit_fraction,
                band,
            } => {
                positive(*record_step, "record_step")?;
                if !(*fit_fraction > 0.0 && *fit_fraction <= 1.0) {
                    return Err(Error::InvalidConfig(
                        "fit_fraction must be in (0, 1]".into(),
                    ));
                }
                check_band(band)?;
                let horizon = self.sim.as_ref().map_or(0.0, |s| s.horizon);
                if horizon < 6.0 {
                    return Err(Error::InvalidConfig(format!(
                        "rightmost needs horizon >= 6, got {horizon}"
                    )));
                }
            }
            Experiment::RareSurvival {
                lambda,
                times,
                slope_tolerance,
                ..
            } => {
                positive(*slope_tolerance, "slope_tolerance")?;
                check_times(times, 3)?;
                if !(lambda.is_finite() && *lambda > derived.lambda_crit) {
                    return Err(Error::InvalidConfig(format!(
                        "rare-survival needs λ > λ_crit = {}, got {lambda}",
                        derived.lambda_crit
                    )));
                }
            }
            Experiment::Martingale {
                martingale,
                times,
                z_tol,
            } => {
                martingale.validate()?;
                positive(*z_tol, "z_tol")?;
                check_times(times, 1)?;
                let hom = self.sim.as_ref().is_some_and(|s| s.homogeneous_only);
                if martingale.needs_homogeneous_only() != hom {
                    return Err(Error::InvalidConfig(format!(
                        "martingale `{}` needs sim.homogeneous_only = {}",
                        martingale.name(),
                        martingale.needs_homogeneous_only()
                    )));
                }
            }
            Experiment::Spine {
                measure,
                horizon,
                step_h,
                rel_band,
                decomposition_bound,
                many_to_one,
                z_tol,
            } => {
                measure.validate()?;
                positive(*horizon, "horizon")?;
                positive(*step_h, "step_h")?;
                positive(*rel_band, "rel_band")?;
                positive(*decomposition_bound, "decomposition_bound")?;
                positive(*z_tol, "z_tol")?;
                if let Some(m) = many_to_one {
                    positive(m.t, "many_to_one.t")?;
                    if m.samples < 2 || !(m.x.is_finite() && m.x >= 0.0) {
                        return Err(Error::InvalidConfig(
                            "many_to_one needs finite x >= 0 and >= 2 samples".into(),
                        ));
                    }
                }
            }
            Experiment::KernelsTest {
                samples,
                grid,
                p_min,
            } => {
                if *samples < 100 || *grid < 2 || *grid % 2 != 0 {
                    return Err(Error::InvalidConfig(
                        "kernels-test needs >= 100 samples and an even grid >= 2".into(),
                    ));
                }
                if !(*p_min > 0.0 && *p_min < 1.0) {
                    return Err(Error::InvalidConfig("p_min must be in (0, 1)".into()));
                }
            }
        }
        Ok(())
    }
}
