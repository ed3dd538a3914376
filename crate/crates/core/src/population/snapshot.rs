//! Population snapshots, the counting operations on them and their CSV form.

use std::collections::HashSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::label::{Genealogy, ParticleLabel};
use super::particle::DeathKind;
use super::sim::BranchEvent;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotParticle {
    pub label: ParticleLabel,
    pub position: f64,
    pub local_time: f64,
}

/// The alive set at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSnapshot {
    pub time: f64,
    pub particles: Vec<SnapshotParticle>,
    /// Whether the run had catalytic branching switched off.
    #[serde(default)]
    pub homogeneous_only: bool,
}

impl PopulationSnapshot {
    pub fn new(time: f64, particles: Vec<SnapshotParticle>) -> Self {
        Self {
            time,
            particles,
            homogeneous_only: false,
        }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn positions(&self) -> impl Iterator<Item = f64> + '_ {
        self.particles.iter().map(|p| p.position)
    }

    pub fn sort_by_label(&mut self) {
        self.particles.sort_by(|a, b| a.label.cmp(&b.label));
    }

    /// `|{u : X_u > x}|`.
    pub fn count_above(&self, x: f64) -> usize {
        count_above(self.positions(), x)
    }

    /// `|{u : X_u < x}|`, the mirror image of [`Self::count_above`].
    pub fn count_below(&self, x: f64) -> usize {
        self.positions().filter(|&p| p < x).count()
    }

    pub fn rightmost(&self) -> Result<f64> {
        rightmost(self.positions())
    }

    /// Labels are unique and no alive particle is an ancestor of another.
    pub fn check_antichain(&self) -> Result<()> {
        let mut labels: Vec<&ParticleLabel> = self.particles.iter().map(|p| &p.label).collect();
        labels.sort();
        let mut seen = HashSet::with_capacity(labels.len());
        for w in labels.windows(2) {
            if w[0].is_ancestor_of(w[1]) {
                return Err(Error::InvalidArgument(format!(
                    "alive particle {} is an ancestor of alive particle {}",
                    w[0], w[1]
                )));
            }
        }
        for l in labels {
            if !seen.insert(l) {
                return Err(Error::InvalidArgument(format!("duplicate label {l}")));
            }
        }
        Ok(())
    }
}

/// Strict count of positions above `x`.
pub fn count_above(positions: impl IntoIterator<Item = f64>, x: f64) -> usize {
    positions.into_iter().filter(|&p| p > x).count()
}

pub fn rightmost(positions: impl IntoIterator<Item = f64>) -> Result<f64> {
    positions
        .into_iter()
        .fold(None, |m: Option<f64>, p| Some(m.map_or(p, |m| m.max(p))))
        .ok_or(Error::EmptyPopulation)
}

/// `%.17g`: 17 significant digits, trailing zeros trimmed, exponent form
/// outside `[1e-4, 1e17)`.
pub fn format_g17(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..17).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        let fixed = format!("{x:.decimals$}");
        trim_zeros(&fixed).to_string()
    } else {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn parse_f64(field: &str, what: &str, line: u64) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("line {line}: bad {what} {field:?}")))
}

fn expect_header(rdr: &mut csv::Reader<impl Read>, want: &[&str]) -> Result<()> {
    let header = rdr.headers()?;
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != want {
        return Err(Error::Parse(format!(
            "expected header {:?}, got {:?}",
            want.join(","),
            got.join(",")
        )));
    }
    Ok(())
}

pub(crate) fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(r)
}

/// Writes snapshots as `time,label,position,local_time` rows.
pub fn write_snapshots_csv<W: Write>(w: W, snaps: &[PopulationSnapshot]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["time", "label", "position", "local_time"])?;
    for s in snaps {
        let t = format_g17(s.time);
        for p in &s.particles {
            wtr.write_record([
                t.as_str(),
                &p.label.to_string(),
                &format_g17(p.position),
                &format_g17(p.local_time),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Reads the output of [`write_snapshots_csv`], one snapshot per distinct
/// time in file order. Empty snapshots cannot be represented.
pub fn read_snapshots_csv<R: Read>(r: R) -> Result<Vec<PopulationSnapshot>> {
    let mut rdr = reader(r);
    expect_header(&mut rdr, &["time", "label", "position", "local_time"])?;
    let mut out: Vec<PopulationSnapshot> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let time = parse_f64(&rec[0], "time", line)?;
        let label: ParticleLabel = rec[1]
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("line {line}: {e}")))?;
        let position = parse_f64(&rec[2], "position", line)?;
        let local_time = parse_f64(&rec[3], "local_time", line)?;
        if !(time.is_finite()
            && position.is_finite()
            && local_time.is_finite()
            && local_time >= 0.0)
        {
            return Err(Error::Parse(format!(
                "line {line}: non-finite or negative value"
            )));
        }
        let particle = SnapshotParticle {
            label,
            position,
            local_time,
        };
        match out.last_mut() {
            Some(s) if s.time == time => s.particles.push(particle),
            _ => out.push(PopulationSnapshot::new(time, vec![particle])),
        }
    }
    Ok(out)
}

/// A branch event with its label resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub time: f64,
    pub label: ParticleLabel,
    pub kind: DeathKind,
    pub position: f64,
    pub n_children: u32,
}

/// Writes `time,label,kind,position,n_children` rows.
pub fn write_events_csv<W: Write>(
    w: W,
    events: &[BranchEvent],
    genealogy: &Genealogy,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["time", "label", "kind", "position", "n_children"])?;
    for e in events {
        wtr.write_record([
            format_g17(e.time),
            genealogy.label(e.node).to_string(),
            e.kind.as_str().to_string(),
            format_g17(e.position),
            e.n_children.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_events_csv<R: Read>(r: R) -> Result<Vec<EventRow>> {
    let mut rdr = reader(r);
    expect_header(
        &mut rdr,
        &["time", "label", "kind", "position", "n_children"],
    )?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let kind = match rec[2].trim() {
            "hom" => DeathKind::Homogeneous,
            "cat" => DeathKind::Catalytic,
            other => return Err(Error::Parse(format!("line {line}: bad kind {other:?}"))),
        };
        let n_children = rec[4]
            .trim()
            .parse::<u32>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| Error::Parse(format!("line {line}: bad n_children {:?}", &rec[4])))?;
        out.push(EventRow {
            time: parse_f64(&rec[0], "time", line)?,
            label: rec[1]
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("line {line}: {e}")))?,
            kind,
            position: parse_f64(&rec[3], "position", line)?,
            n_children,
        });
    }
    Ok(out)
}
