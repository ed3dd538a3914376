//! Goodness-of-fit checks for the exact samplers.

use std::fmt::Write as _;

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::analytics::{median, normal_cdf, Estimate};
use crate::error::{Error, Result};
use crate::kernels::{
    bridge_local_time, bridge_min, first_passage_time, gaussian_increment, hitting_time_of_zero,
    JointLaw,
};
use crate::rng::RandomStream;

use super::report::Metric;

/// Result of a chi-square test after pooling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Pearson chi-square of `observed` against `expected` counts. Cells with
/// expected count below 5 are merged, smallest first, until every pooled cell
/// reaches 5.
pub fn chi_square(observed: &[u64], expected: &[f64]) -> Result<ChiSquare> {
    if observed.len() != expected.len() || observed.is_empty() {
        return Err(Error::InvalidArgument(
            "observed and expected must have the same nonzero length".into(),
        ));
    }
    let mut order: Vec<usize> = (0..observed.len()).collect();
    order.sort_by(|&a, &b| expected[a].total_cmp(&expected[b]));
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for i in order {
        o += observed[i] as f64;
        e += expected[i];
        if e >= 5.0 {
            cells.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => cells.push((o, e)),
        }
    }
    if cells.len() < 2 {
        return Err(Error::InvalidArgument(
            "fewer than two cells after pooling".into(),
        ));
    }
    let statistic: f64 = cells.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let df = cells.len() - 1;
    let dist = ChiSquared::new(df as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(ChiSquare {
        statistic,
        df,
        p_value: dist.sf(statistic),
    })
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Edges `0 = e_0 < … < e_k = ∞` splitting `|N(0, t)|` into equal-mass bins.
fn half_normal_edges(t: f64, k: usize) -> Vec<f64> {
    let n = std_normal();
    let mut e: Vec<f64> = (0..k)
        .map(|i| t.sqrt() * n.inverse_cdf(0.5 + 0.5 * i as f64 / k as f64))
        .collect();
    e[0] = 0.0;
    e.push(f64::INFINITY);
    e
}

fn bin(edges: &[f64], x: f64) -> usize {
    (edges.partition_point(|&e| e <= x) - 1).min(edges.len() - 2)
}

/// Binomial proportion of `hits` in `n` against `p`, as a z-test.
fn proportion(name: &str, hits: u64, n: u64, p: f64, provenance: &str) -> Metric {
    let est = Estimate {
        mean: hits as f64 / n as f64,
        std_error: (p * (1.0 - p) / n as f64).sqrt(),
        n,
    };
    Metric::z_test(name, &est, p, 4.0, provenance)
}

/// Runs every sampler check with `samples` draws each; returns the metrics and
/// a `check,estimate,reference,statistic,df,p_value` table.
pub fn kernel_checks(
    root: RandomStream,
    samples: u64,
    grid: usize,
    p_min: f64,
) -> Result<(Vec<Metric>, String)> {
    let n = samples;
    let mut metrics = Vec::new();
    let mut csv = String::from("check,estimate,reference,statistic,df,p_value\n");
    let t = 1.0;
    let law = JointLaw::new(t)?;

    // joint (y, l) on a quantile grid: y split by sign, each side into
    // grid/2 half-normal bins; l into grid half-normal bins
    let half = grid / 2;
    let y_edges = half_normal_edges(t, half);
    let l_edges = half_normal_edges(t, grid);
    let mut obs = vec![0u64; grid * grid];
    let mut y_obs = vec![0u64; grid];
    let mut rng = root.derive(0).rng(0);
    for _ in 0..n {
        let (y, l) = law.sample(&mut rng);
        let yi = if y >= 0.0 {
            half + bin(&y_edges, y)
        } else {
            half - 1 - bin(&y_edges, -y)
        };
        obs[yi * grid + bin(&l_edges, l)] += 1;
        y_obs[yi] += 1;
    }
    let mut exp = vec![0.0; grid * grid];
    for yi in 0..grid {
        let (y0, y1) = if yi >= half {
            (y_edges[yi - half], y_edges[yi - half + 1])
        } else {
            (-y_edges[half - yi], -y_edges[half - 1 - yi])
        };
        for li in 0..grid {
            exp[yi * grid + li] =
                n as f64 * law.rect_probability(y0, y1, l_edges[li], l_edges[li + 1]);
        }
    }
    let joint = chi_square(&obs, &exp)?;
    push_chi(
        &mut metrics,
        &mut csv,
        "joint (y, l) chi-square",
        joint,
        p_min,
    );

    let y_exp = vec![n as f64 / grid as f64; grid];
    let marg = chi_square(&y_obs, &y_exp)?;
    push_chi(&mut metrics, &mut csv, "y marginal chi-square", marg, p_min);

    let mut rng = root.derive(1).rng(0);
    let radial: Vec<f64> = (0..n)
        .map(|_| {
            let (y, l) = law.sample(&mut rng);
            y.abs() + l
        })
        .collect();
    let reference = 2.0 * (2.0 * t / std::f64::consts::PI).sqrt();
    push_z(
        &mut metrics,
        &mut csv,
        Metric::z_test(
            "mean |y| + l",
            &Estimate::from_samples(&radial),
            reference,
            4.0,
            "mean norm of a 3-d Gaussian",
        ),
    );

    // bridge from 0 to 0 over unit time: P(min ≤ w) = exp(-2w²), median -√(ln 2 / 2)
    let mut rng = root.derive(2).rng(0);
    let mins: Vec<f64> = (0..n)
        .map(|_| bridge_min(&mut rng, 0.0, 0.0, 1.0))
        .collect();
    let m = Metric::absolute(
        "bridge minimum median (a=b=0, h=1)",
        median(&mins),
        -(0.5 * 2f64.ln()).sqrt(),
        0.01,
        "bridge-minimum tail",
    );
    push_z(&mut metrics, &mut csv, m);

    let (a, b, h) = (0.3f64, 0.5, 1.0);
    let mut rng = root.derive(3).rng(0);
    let p_none = 1.0 - (-2.0 * a * b / h).exp();
    let hits = (0..n)
        .filter(|_| bridge_local_time(&mut rng, a, b, h) == 0.0)
        .count() as u64;
    push_z(
        &mut metrics,
        &mut csv,
        proportion(
            "bridge avoids the origin",
            hits,
            n,
            p_none,
            "reflection principle",
        ),
    );

    let mut rng = root.derive(4).rng(0);
    let mut hits = 0;
    for _ in 0..n {
        if hitting_time_of_zero(&mut rng, 1.0)? <= 1.0 {
            hits += 1;
        }
    }
    let p_hit = 2.0 * (1.0 - normal_cdf(1.0));
    let m = Metric::absolute(
        "hitting-time CDF from x=1 at t=1",
        hits as f64 / n as f64,
        p_hit,
        0.01,
        "reflection principle",
    );
    push_z(&mut metrics, &mut csv, m);

    let mut rng = root.derive(5).rng(0);
    let fp: Vec<f64> = (0..n)
        .map(|_| first_passage_time(&mut rng, 1.0, 0.5))
        .collect();
    push_z(
        &mut metrics,
        &mut csv,
        Metric::z_test(
            "mean first passage over 1 at drift 0.5",
            &Estimate::from_samples(&fp),
            2.0,
            4.0,
            "inverse-Gaussian mean",
        ),
    );

    let mut rng = root.derive(6).rng(0);
    let sq: Vec<f64> = (0..n)
        .map(|_| gaussian_increment(&mut rng, 0.3).powi(2))
        .collect();
    push_z(
        &mut metrics,
        &mut csv,
        Metric::z_test(
            "increment variance at h=0.3",
            &Estimate::from_samples(&sq),
            0.3,
            4.0,
            "N(0, h)",
        ),
    );
    Ok((metrics, csv))
}

fn push_chi(metrics: &mut Vec<Metric>, csv: &mut String, name: &str, c: ChiSquare, p_min: f64) {
    let _ = writeln!(csv, "{name},,,{},{},{}", c.statistic, c.df, c.p_value);
    let m = Metric::p_value(
        format!("{name} p-value"),
        c.p_value,
        p_min,
        "Pearson chi-square, pooled cells",
    );
    metrics.push(m);
    metrics.push(Metric::info(
        format!("{name} statistic (df={})", c.df),
        c.statistic,
        "Pearson chi-square",
    ));
}

fn push_z(metrics: &mut Vec<Metric>, csv: &mut String, m: Metric) {
    let _ = writeln!(
        csv,
        "{},{},{},{},,",
        m.name,
        m.estimate,
        m.reference.unwrap_or(f64::NAN),
        m.z.unwrap_or(f64::NAN)
    );
    metrics.push(m);
}
