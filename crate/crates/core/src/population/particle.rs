//! Single-particle state and its exact stepping kernel.
//!
//! The reflected motion `|X|` is the Skorokhod reflection of a driving
//! Brownian motion `D` started at `|X_birth|`:
//!
//! ```text
//! |X_t| = D_t - min(0, M_t),    own local time = max(0, -M_t)
//! ```
//!
//! where `M` is the running minimum of `D`. The catalytic clock is an
//! `Exp(β₀)` level `c` in local-time units, so it fires exactly when `D`
//! first reaches `-c`; that first-passage time is sampled directly, and on
//! steps where it does not fire the driver endpoint and minimum are drawn
//! conditioned on not having reached `-c`. Positions, local times and both
//! death times are therefore exact in law for any step length.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::kernels::{bridge_max, bridge_min, bridge_min_above, first_passage_time, std_normal};
use crate::params::OffspringDistribution;
use crate::rng::RandomStream;

use super::label::{Genealogy, NodeId, UNTRACKED};

/// Counter reserved for a particle's birth clocks; slices start at 1.
pub(crate) const CLOCK_COUNTER: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeathKind {
    #[serde(rename = "hom")]
    Homogeneous,
    #[serde(rename = "cat")]
    Catalytic,
}

impl DeathKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DeathKind::Homogeneous => "hom",
            DeathKind::Catalytic => "cat",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Death {
    pub kind: DeathKind,
    pub time: f64,
    pub position: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleState {
    pub node: NodeId,
    pub stream: RandomStream,
    /// `-1`, `+1`, or `0` while sitting exactly at the origin.
    pub sign: i8,
    pub driver_value: f64,
    pub driver_min: f64,
    /// Local time of the ancestral path up to this particle's birth.
    pub inherited_local_time: f64,
    /// Own local-time level at which the catalytic clock fires.
    pub cat_level: f64,
    /// Absolute time at which the homogeneous clock fires.
    pub hom_deadline: f64,
    pub birth_time: f64,
    pub time: f64,
}

impl ParticleState {
    /// A particle born at `position` with the given clocks.
    pub fn born(
        node: NodeId,
        stream: RandomStream,
        position: f64,
        inherited_local_time: f64,
        time: f64,
        hom_deadline: f64,
        cat_level: f64,
    ) -> Self {
        let a = position.abs();
        Self {
            node,
            stream,
            sign: if position > 0.0 {
                1
            } else if position < 0.0 {
                -1
            } else {
                0
            },
            driver_value: a,
            driver_min: a,
            inherited_local_time,
            cat_level,
            hom_deadline,
            birth_time: time,
            time,
        }
    }

    /// Born with fresh clocks drawn from the particle's own stream.
    pub fn with_fresh_clocks(
        node: NodeId,
        stream: RandomStream,
        position: f64,
        inherited_local_time: f64,
        time: f64,
        hom_rate: f64,
        cat_rate: f64,
    ) -> Self {
        let mut rng = stream.rng(CLOCK_COUNTER);
        let (hom, cat) = draw_clocks(&mut rng, hom_rate, cat_rate);
        Self::born(
            node,
            stream,
            position,
            inherited_local_time,
            time,
            time + hom,
            cat,
        )
    }

    #[inline]
    fn floor(&self) -> f64 {
        self.driver_min.min(0.0)
    }

    #[inline]
    pub fn abs_pos(&self) -> f64 {
        self.driver_value - self.floor()
    }

    #[inline]
    pub fn own_local_time(&self) -> f64 {
        (-self.driver_min).max(0.0)
    }

    #[inline]
    pub fn local_time(&self) -> f64 {
        self.inherited_local_time + self.own_local_time()
    }

    #[inline]
    pub fn position(&self) -> f64 {
        f64::from(self.sign) * self.abs_pos()
    }

    pub fn hom_clock_residual(&self) -> f64 {
        self.hom_deadline - self.time
    }

    pub fn cat_clock_residual(&self) -> f64 {
        self.cat_level - self.own_local_time()
    }
}

/// `(Exp(hom_rate) duration, Exp(cat_rate) level)`; a zero rate disables the
/// clock.
pub fn draw_clocks<R: Rng + ?Sized>(rng: &mut R, hom_rate: f64, cat_rate: f64) -> (f64, f64) {
    let e1: f64 = Exp1.sample(rng);
    let e2: f64 = Exp1.sample(rng);
    let hom = if hom_rate > 0.0 {
        e1 / hom_rate
    } else {
        f64::INFINITY
    };
    let cat = if cat_rate > 0.0 {
        e2 / cat_rate
    } else {
        f64::INFINITY
    };
    (hom, cat)
}

/// What happened over one call to [`step_particle`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub t0: f64,
    pub t1: f64,
    pub driver_start: f64,
    pub driver_end: f64,
    /// `min(0, M)` before and after the step.
    pub floor_before: f64,
    pub floor_after: f64,
    pub sign_before: i8,
    pub touched_zero: bool,
    pub death: Option<Death>,
}

impl Step {
    pub fn start_position(&self) -> f64 {
        f64::from(self.sign_before) * (self.driver_start - self.floor_before)
    }

    /// Bounds `(lower, upper)` on the signed path over the step, with the
    /// driver's bridge maximum drawn from `aux`.
    ///
    /// On steps that stay off the origin the lower bound is exact on the
    /// positive side and the upper one is the sampled bridge maximum. Steps
    /// that touch 0 only report `max(endpoints, 0)` as the upper value since
    /// excursion signs inside the step are not resolved.
    pub fn extrema<R: Rng + ?Sized>(
        &self,
        aux: &mut R,
        end_position: f64,
        driver_min: f64,
    ) -> (f64, f64) {
        let dt = self.t1 - self.t0;
        let start = self.start_position();
        if dt <= 0.0 {
            let lo = start.min(end_position);
            return (lo, start.max(end_position));
        }
        let dmax = bridge_max(aux, self.driver_start, self.driver_end, dt)
            .max(self.driver_start.max(self.driver_end));
        if !self.touched_zero {
            let shift = self.floor_before;
            let abs_min = driver_min - shift;
            let abs_max = dmax - shift;
            if self.sign_before >= 0 {
                (abs_min, abs_max)
            } else {
                (-abs_max, -abs_min)
            }
        } else {
            let abs_max = dmax - self.floor_after;
            (-abs_max, start.max(end_position).max(0.0))
        }
    }
}

/// Advances `state` by at most `h`, drifting the reflected motion by `drift`
/// (positive pushes away from the origin). Stops early at a death, which is
/// recorded in the returned [`Step`]; the state is then left at the death
/// instant.
pub fn step_particle_with_drift<R: Rng + ?Sized>(
    state: &mut ParticleState,
    h: f64,
    drift: f64,
    rng: &mut R,
) -> (Step, f64) {
    let t0 = state.time;
    let until_hom = state.hom_deadline - t0;
    let (dt, hom_ends) = if until_hom <= h {
        (until_hom.max(0.0), true)
    } else {
        (h, false)
    };
    let d0 = state.driver_value;
    let floor_before = state.floor();
    let sign_before = state.sign;
    let mut step = Step {
        t0,
        t1: t0,
        driver_start: d0,
        driver_end: d0,
        floor_before,
        floor_after: floor_before,
        sign_before,
        touched_zero: false,
        death: None,
    };
    if dt <= 0.0 {
        step.death = Some(Death {
            kind: DeathKind::Homogeneous,
            time: t0,
            position: state.position(),
        });
        return (step, d0.min(state.driver_min));
    }

    let level = -state.cat_level;
    let (z, m) = if state.cat_level.is_finite() {
        let gap = d0 - level;
        let t_hit = first_passage_time(rng, gap, -drift);
        if t_hit <= dt {
            // catalytic death at the origin, exactly when own local time
            // reaches the clock level
            state.driver_value = level;
            state.driver_min = level;
            state.time = t0 + t_hit;
            state.sign = 0;
            step.t1 = state.time;
            step.driver_end = level;
            step.floor_after = level;
            step.touched_zero = true;
            step.death = Some(Death {
                kind: DeathKind::Catalytic,
                time: state.time,
                position: 0.0,
            });
            return (step, level);
        }
        let sd = dt.sqrt();
        let z = loop {
            let z = d0 + drift * dt + sd * std_normal(rng);
            if z <= level {
                continue;
            }
            let survive = -(-2.0 * gap * (z - level) / dt).exp_m1();
            if rng.random::<f64>() < survive {
                break z;
            }
        };
        (z, bridge_min_above(rng, d0, z, dt, level))
    } else {
        let z = d0 + drift * dt + dt.sqrt() * std_normal(rng);
        (z, bridge_min(rng, d0, z, dt))
    };

    let touched = m < floor_before || (floor_before == 0.0 && d0 == 0.0);
    state.driver_value = z;
    state.driver_min = state.driver_min.min(m);
    state.time = if hom_ends {
        state.hom_deadline
    } else {
        t0 + dt
    };
    if touched {
        state.sign = if rng.random::<bool>() { 1 } else { -1 };
    }
    step.t1 = state.time;
    step.driver_end = z;
    step.floor_after = state.floor();
    step.touched_zero = touched;
    if hom_ends {
        step.death = Some(Death {
            kind: DeathKind::Homogeneous,
            time: state.time,
            position: state.position(),
        });
    }
    (step, m)
}

/// Driftless [`step_particle_with_drift`].
pub fn step_particle<R: Rng + ?Sized>(state: &mut ParticleState, h: f64, rng: &mut R) -> Step {
    step_particle_with_drift(state, h, 0.0, rng).0
}

/// Replaces a dead particle by its offspring.
///
/// The count comes from `q_dist` for a death at the origin and from `p_dist`
/// otherwise. Children start at the death position with the parent's local
/// time and fresh clocks; child `j` gets label `parent.j` (1-based) and
/// stream `parent.stream.derive(j)`.
#[allow(clippy::too_many_arguments)]
pub fn branch_offspring<R: Rng + ?Sized>(
    parent: &ParticleState,
    death: &Death,
    p_dist: &OffspringDistribution,
    q_dist: &OffspringDistribution,
    hom_rate: f64,
    cat_rate: f64,
    genealogy: Option<&mut Genealogy>,
    rng: &mut R,
) -> Vec<ParticleState> {
    let at_origin = death.kind == DeathKind::Catalytic;
    let k = if at_origin {
        q_dist.sample(rng)
    } else {
        p_dist.sample(rng)
    };
    let lt = parent.local_time();
    let mut genealogy = genealogy;
    (1..=k)
        .map(|j| {
            let node = match genealogy.as_deref_mut() {
                Some(g) => g.add_child(parent.node, j, death.time),
                None => UNTRACKED,
            };
            ParticleState::with_fresh_clocks(
                node,
                parent.stream.derive(u64::from(j)),
                death.position,
                lt,
                death.time,
                hom_rate,
                cat_rate,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::OffspringDistribution;

    fn particle_at(x: f64, stream: RandomStream, hom_rate: f64, cat_rate: f64) -> ParticleState {
        ParticleState::with_fresh_clocks(Genealogy::ROOT, stream, x, 0.0, 0.0, hom_rate, cat_rate)
    }

    #[test]
    fn far_from_origin_no_touch() {
        let s = RandomStream::new(1);
        for i in 0..1000 {
            let mut p = particle_at(3.0, s.derive(i), 1e-9, 1.0);
            let step = step_particle(&mut p, 0.01, &mut s.derive(i).rng(1));
            assert!(!step.touched_zero);
            assert_eq!(p.local_time(), 0.0);
            assert_eq!(p.sign, 1);
            assert!(step.death.is_none());
        }
    }

    #[test]
    fn skorokhod_identity_holds() {
        let s = RandomStream::new(2);
        let mut p = particle_at(0.2, s, 1e-9, 1e-9);
        let mut rng = s.rng(1);
        let mut prev_lt = 0.0;
        for _ in 0..2000 {
            let step = step_particle(&mut p, 0.01, &mut rng);
            let expected_abs = if p.driver_min < 0.0 {
                p.driver_value - p.driver_min
            } else {
                p.driver_value
            };
            assert_eq!(p.abs_pos(), expected_abs);
            assert!(p.driver_min <= p.driver_value);
            assert!(p.abs_pos() >= 0.0);
            assert!(p.local_time() >= prev_lt);
            if p.local_time() > prev_lt {
                assert!(step.touched_zero);
            }
            prev_lt = p.local_time();
        }
        assert!(prev_lt > 0.0);
    }

    #[test]
    fn local_time_from_origin_has_mean_sqrt_2h_over_pi() {
        let s = RandomStream::new(3);
        let h = 0.04;
        let n = 100_000;
        let mut sum = 0.0;
        for i in 0..n {
            let mut p = particle_at(0.0, s.derive(i), 1e-12, 1e-12);
            step_particle(&mut p, h, &mut s.derive(i).rng(1));
            sum += p.local_time();
        }
        let mean = sum / n as f64;
        let target = (2.0 * h / std::f64::consts::PI).sqrt();
        // sd of L_h is sqrt(h (1 - 2/π))
        let se = (h * (1.0 - 2.0 / std::f64::consts::PI) / n as f64).sqrt();
        assert!((mean - target).abs() < 4.0 * se, "{mean} vs {target}");
    }

    #[test]
    fn determinism() {
        let s = RandomStream::new(4);
        let mut a = particle_at(0.1, s, 1.0, 1.0);
        let mut b = a;
        let sa = step_particle(&mut a, 0.3, &mut s.rng(1));
        let sb = step_particle(&mut b, 0.3, &mut s.rng(1));
        assert_eq!(a, b);
        assert_eq!(sa, sb);
    }

    #[test]
    fn catalytic_death_sits_at_origin_with_level_local_time() {
        let s = RandomStream::new(5);
        let mut seen = 0;
        for i in 0..2000 {
            let mut p = particle_at(0.0, s.derive(i), 1e-12, 1.0);
            let level = p.cat_level;
            let mut rng = s.derive(i).rng(1);
            for _ in 0..1000 {
                let step = step_particle(&mut p, 0.05, &mut rng);
                if let Some(d) = step.death {
                    assert_eq!(d.kind, DeathKind::Catalytic);
                    assert_eq!(d.position, 0.0);
                    assert!((p.local_time() - level).abs() < 1e-12);
                    seen += 1;
                    break;
                }
            }
        }
        assert!(seen > 1500);
    }

    #[test]
    fn homogeneous_death_at_deadline() {
        let s = RandomStream::new(6);
        let mut p = particle_at(0.7, s, 2.0, 1e-12);
        let deadline = p.hom_deadline;
        let mut rng = s.rng(1);
        loop {
            let step = step_particle(&mut p, 0.01, &mut rng);
            if let Some(d) = step.death {
                assert_eq!(d.kind, DeathKind::Homogeneous);
                assert_eq!(d.time, deadline);
                assert_eq!(d.position, p.position());
                break;
            }
        }
    }

    #[test]
    fn catalytic_death_time_does_not_depend_on_step() {
        // T_cat for a particle at 0 with level c is the first passage of the
        // driver to -c: P(T ≤ t) = 2(1 - Φ(c/√t)). Check the median of the
        // hitting time across two step sizes.
        use crate::analytics::normal_cdf;
        let s = RandomStream::new(7);
        for &h in &[0.5f64, 0.01] {
            let n = 20_000;
            let c = 0.5;
            let mut below = 0;
            for i in 0..n {
                let mut p = ParticleState::born(0, s.derive(i), 0.0, 0.0, 0.0, f64::INFINITY, c);
                let mut rng = s.derive(i).rng(1);
                while p.time < 1.0 {
                    let dt = h.min(1.0 - p.time);
                    let step = step_particle(&mut p, dt, &mut rng);
                    if step.death.is_some() {
                        below += 1;
                        break;
                    }
                    if 1.0 - p.time < 1e-12 {
                        break;
                    }
                }
            }
            let p_hat = below as f64 / n as f64;
            let p = 2.0 * (1.0 - normal_cdf(c));
            assert!(
                (p_hat - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt(),
                "h={h}: {p_hat} vs {p}"
            );
        }
    }

    #[test]
    fn offspring_from_q_at_origin() {
        let s = RandomStream::new(8);
        let parent = particle_at(0.0, s, 1.0, 1.0);
        let three = OffspringDistribution::point_mass(3).unwrap();
        let two = OffspringDistribution::point_mass(2).unwrap();
        let death = Death {
            kind: DeathKind::Catalytic,
            time: 0.3,
            position: 0.0,
        };
        let mut g = Genealogy::new();
        let kids = branch_offspring(
            &parent,
            &death,
            &two,
            &three,
            1.0,
            1.0,
            Some(&mut g),
            &mut s.rng(1),
        );
        assert_eq!(kids.len(), 3);
        for (j, k) in kids.iter().enumerate() {
            assert_eq!(k.position(), 0.0);
            assert_eq!(k.time, 0.3);
            assert_eq!(g.label(k.node).to_string(), format!("{}", j + 1));
            assert!(k.cat_level > 0.0 && k.hom_deadline > 0.3);
        }
        assert_ne!(kids[0].cat_level, kids[1].cat_level);
    }

    #[test]
    fn offspring_mean_two_point_law() {
        let s = RandomStream::new(9);
        let parent = particle_at(1.0, s, 1.0, 1.0);
        let p = OffspringDistribution::new(vec![(2, 0.5), (4, 0.5)]).unwrap();
        let death = Death {
            kind: DeathKind::Homogeneous,
            time: 0.1,
            position: 1.0,
        };
        let mut rng = s.rng(1);
        let n = 100_000;
        let total: usize = (0..n)
            .map(|_| branch_offspring(&parent, &death, &p, &p, 1.0, 1.0, None, &mut rng).len())
            .sum();
        let mean = total as f64 / n as f64;
        assert!((mean - 3.0).abs() < 3.0 * 1.0 / (n as f64).sqrt());
    }
}
