//! Time-stamped trajectories and their CSV / JSON serialization.
//!
//! CSV layout: header `k,t,q0..q{n-1},p0..p{n-1},u0..u{m-1},H`, one row per
//! sample, floats in scientific notation with 17 significant digits so that
//! parsing and re-emitting is byte-identical.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PhasePoint;

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub q: DVector<f64>,
    pub p: DVector<f64>,
    pub u: DVector<f64>,
    /// Value of the reduced Hamiltonian (or discrete energy) at the sample.
    pub h_value: f64,
}

impl Sample {
    pub fn phase_point(&self) -> PhasePoint {
        PhasePoint {
            t: self.t,
            q: self.q.clone(),
            p: self.p.clone(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    samples: Vec<Sample>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a sample, enforcing increasing times and consistent dimensions.
    pub fn push(&mut self, s: Sample) -> Result<()> {
        if s.q.len() != s.p.len() {
            return Err(Error::Dimension {
                what: "trajectory sample costate",
                expected: (s.q.len(), 1),
                got: (s.p.len(), 1),
            });
        }
        if let Some(last) = self.samples.last() {
            if last.q.len() != s.q.len() || last.u.len() != s.u.len() {
                return Err(Error::Dimension {
                    what: "trajectory sample",
                    expected: (last.q.len(), last.u.len()),
                    got: (s.q.len(), s.u.len()),
                });
            }
            if !(s.t > last.t) {
                return Err(Error::InvalidInput(format!(
                    "trajectory times must increase strictly ({} after {})",
                    s.t, last.t
                )));
            }
        }
        self.samples.push(s);
        Ok(())
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first(&self) -> Option<&Sample> {
        self.samples.first()
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    pub fn state_dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.q.len())
    }

    pub fn control_dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.u.len())
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

fn fmt_float(out: &mut String, x: f64) {
    let _ = write!(out, "{x:.16e}");
}

/// CSV header for state dimension `n` and control dimension `m`.
pub fn csv_header(n: usize, m: usize) -> String {
    let mut cols = vec!["k".to_string(), "t".to_string()];
    cols.extend((0..n).map(|i| format!("q{i}")));
    cols.extend((0..n).map(|i| format!("p{i}")));
    cols.extend((0..m).map(|i| format!("u{i}")));
    cols.push("H".to_string());
    cols.join(",")
}

pub fn to_csv(traj: &Trajectory) -> String {
    let (n, m) = (traj.state_dim(), traj.control_dim());
    let mut out = csv_header(n, m);
    out.push('\n');
    for (k, s) in traj.samples.iter().enumerate() {
        let _ = write!(out, "{k}");
        let values = std::iter::once(s.t)
            .chain(s.q.iter().copied())
            .chain(s.p.iter().copied())
            .chain(s.u.iter().copied())
            .chain(std::iter::once(s.h_value));
        for x in values {
            out.push(',');
            fmt_float(&mut out, x);
        }
        out.push('\n');
    }
    out
}

/// Parses the CSV produced by [`to_csv`].
pub fn from_csv(text: &str) -> Result<Trajectory> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidInput("empty trajectory CSV".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let count = |prefix: char| {
        cols.iter()
            .filter(|c| c.starts_with(prefix) && c[1..].chars().all(|ch| ch.is_ascii_digit()) && c.len() > 1)
            .count()
    };
    let (n, n_costate, m_ctrl) = (count('q'), count('p'), count('u'));
    if n != n_costate || header != csv_header(n, m_ctrl) {
        return Err(Error::InvalidInput(format!("unexpected trajectory CSV header {header:?}")));
    }
    let mut traj = Trajectory::new();
    for (row, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::InvalidInput(format!("row {row} has {} fields, expected {}", fields.len(), cols.len())));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::InvalidInput(format!("row {row}: bad number {s:?}: {e}")))
        };
        let vals = fields[1..].iter().map(|s| parse(s)).collect::<Result<Vec<f64>>>()?;
        traj.push(Sample {
            t: vals[0],
            q: DVector::from_column_slice(&vals[1..1 + n]),
            p: DVector::from_column_slice(&vals[1 + n..1 + 2 * n]),
            u: DVector::from_column_slice(&vals[1 + 2 * n..1 + 2 * n + m_ctrl]),
            h_value: vals[1 + 2 * n + m_ctrl],
        })?;
    }
    Ok(traj)
}

#[derive(Serialize, Deserialize)]
struct JsonSample {
    k: usize,
    t: f64,
    q: Vec<f64>,
    p: Vec<f64>,
    u: Vec<f64>,
    #[serde(rename = "H")]
    h: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct JsonTrajectory {
    n: usize,
    m: usize,
    samples: Vec<JsonSample>,
}

pub fn to_json(traj: &Trajectory) -> Result<String> {
    let doc = JsonTrajectory {
        n: traj.state_dim(),
        m: traj.control_dim(),
        samples: traj
            .samples
            .iter()
            .enumerate()
            .map(|(k, s)| JsonSample {
                k,
                t: s.t,
                q: s.q.iter().copied().collect(),
                p: s.p.iter().copied().collect(),
                u: s.u.iter().copied().collect(),
                h: s.h_value.is_finite().then_some(s.h_value),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn from_json(text: &str) -> Result<Trajectory> {
    let doc: JsonTrajectory = serde_json::from_str(text)?;
    let mut traj = Trajectory::new();
    for s in doc.samples {
        traj.push(Sample {
            t: s.t,
            q: DVector::from_vec(s.q),
            p: DVector::from_vec(s.p),
            u: DVector::from_vec(s.u),
            h_value: s.h.unwrap_or(f64::NAN),
        })?;
    }
    Ok(traj)
}

/// Writes a trajectory to `path` in the requested format.
pub fn emit_trajectory(traj: &Trajectory, format: OutputFormat, path: &Path) -> Result<()> {
    let text = match format {
        OutputFormat::Csv => to_csv(traj),
        OutputFormat::Json => to_json(traj)?,
    };
    let mut file = std::fs::File::create(path)?;
    file.write_all(text.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(t: f64, q: &[f64], p: &[f64], u: &[f64], h: f64) -> Sample {
        Sample {
            t,
            q: DVector::from_column_slice(q),
            p: DVector::from_column_slice(p),
            u: DVector::from_column_slice(u),
            h_value: h,
        }
    }

    #[test]
    fn header_for_two_states_one_control() {
        assert_eq!(csv_header(2, 1), "k,t,q0,q1,p0,p1,u0,H");
    }

    #[test]
    fn single_sample_is_header_plus_one_row() {
        let mut tr = Trajectory::new();
        tr.push(sample(0.0, &[2.0], &[3.0], &[3.0], 4.5)).unwrap();
        let csv = to_csv(&tr);
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(
            csv.lines().nth(1).unwrap(),
            "0,0.0000000000000000e0,2.0000000000000000e0,3.0000000000000000e0,3.0000000000000000e0,4.5000000000000000e0"
        );
    }

    #[test]
    fn rejects_non_increasing_times() {
        let mut tr = Trajectory::new();
        tr.push(sample(0.0, &[1.0], &[1.0], &[], 0.0)).unwrap();
        assert!(tr.push(sample(0.0, &[1.0], &[1.0], &[], 0.0)).is_err());
    }

    #[test]
    fn json_mirrors_csv_fields() {
        let mut tr = Trajectory::new();
        tr.push(sample(0.0, &[1.0, 2.0], &[0.5, 0.25], &[0.1], 1.0)).unwrap();
        tr.push(sample(0.5, &[1.5, 2.0], &[0.5, 0.0], &[0.2], f64::NAN)).unwrap();
        let back = from_json(&to_json(&tr).unwrap()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.samples()[0], tr.samples()[0]);
        assert!(back.samples()[1].h_value.is_nan());
    }

    proptest::proptest! {
        #[test]
        fn csv_round_trip_is_byte_identical(
            rows in proptest::collection::vec((-1e6..1e6f64, -1e3..1e3f64, -1e3..1e3f64, -1e3..1e3f64), 1..20)
        ) {
            let mut tr = Trajectory::new();
            for (i, (q, p, u, h)) in rows.iter().enumerate() {
                tr.push(sample(i as f64 * 0.1 + 1e-3, &[*q, *p], &[*u, *h], &[*q * 1e-7], *h / 3.0)).unwrap();
            }
            let csv = to_csv(&tr);
            let again = to_csv(&from_csv(&csv).unwrap());
            proptest::prop_assert_eq!(csv, again);
        }
    }
}
