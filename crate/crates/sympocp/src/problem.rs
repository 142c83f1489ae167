//! Problem sources: a catalog name or a JSON file.
//!
//! Two document types are understood. LQ problems:
//!
//! ```json
//! {"type": "lq", "n": 1, "m": 1, "A": [[0]], "B": [[1]], "Q": [[0]], "R": [[1]],
//!  "Qf": [[1]], "q0": [1], "t0": 0, "T": 1, "qT": [0], "p0": [0], "N": 10}
//! ```
//!
//! where `qT` (terminal target), `p0` (default initial costate) and `N`
//! (discrete horizon) are optional, and linear discrete Hamiltonian systems:
//!
//! ```json
//! {"type": "dhs-linear", "d": 1, "A": [[1]], "B": [[0]], "C": [[1]], "y0": [1], "z0": [0]}
//! ```
//!
//! Matrices are row-major nested arrays.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::catalog::{from_catalog, problem_from_lq, Problem};
use crate::dhs::LinearDHS;
use crate::error::{Error, Result};
use crate::model::{LQSpec, MatrixSource};

#[derive(Clone, Debug)]
pub struct LinearDhsProblem {
    pub system: LinearDHS,
    pub y0: DVector<f64>,
    pub z0: DVector<f64>,
}

// Built once per invocation, so the size gap between variants is harmless.
#[allow(clippy::large_enum_variant)]
#[derive(Clone, Debug)]
pub enum ProblemInput {
    /// A continuous-time problem; `horizon` is the discrete horizon if given.
    Continuous { problem: Problem, horizon: Option<usize> },
    LinearDhs(LinearDhsProblem),
}

impl ProblemInput {
    pub fn continuous(self) -> Result<(Problem, Option<usize>)> {
        match self {
            ProblemInput::Continuous { problem, horizon } => Ok((problem, horizon)),
            ProblemInput::LinearDhs(_) => Err(Error::InvalidInput(
                "a discrete Hamiltonian system cannot be used here".into(),
            )),
        }
    }
}

type Rows = Vec<Vec<f64>>;

#[derive(Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
enum Document {
    #[serde(rename = "lq")]
    Lq {
        n: usize,
        m: usize,
        #[serde(rename = "A")]
        a: Rows,
        #[serde(rename = "B")]
        b: Rows,
        #[serde(rename = "Q")]
        q: Rows,
        #[serde(rename = "R")]
        r: Rows,
        #[serde(rename = "Qf")]
        qf: Rows,
        q0: Vec<f64>,
        t0: f64,
        #[serde(rename = "T")]
        t_final: f64,
        #[serde(rename = "qT")]
        target: Option<Vec<f64>>,
        p0: Option<Vec<f64>>,
        #[serde(rename = "N")]
        horizon: Option<usize>,
    },
    #[serde(rename = "dhs-linear")]
    DhsLinear {
        d: usize,
        #[serde(rename = "A")]
        a: Rows,
        #[serde(rename = "B")]
        b: Rows,
        #[serde(rename = "C")]
        c: Rows,
        y0: Option<Vec<f64>>,
        z0: Option<Vec<f64>>,
    },
}

fn matrix(rows: &Rows, nrows: usize, ncols: usize, key: &str) -> Result<DMatrix<f64>> {
    let shape_ok = rows.len() == nrows && rows.iter().all(|r| r.len() == ncols);
    if !shape_ok {
        return Err(Error::InvalidInput(format!("{key} must be {nrows}×{ncols}")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn vector(xs: &[f64], len: usize, key: &str) -> Result<DVector<f64>> {
    if xs.len() != len {
        return Err(Error::InvalidInput(format!("{key} must have length {len} (got {})", xs.len())));
    }
    Ok(DVector::from_column_slice(xs))
}

/// Parses a JSON problem document.
pub fn parse_problem_json(text: &str, name: &str) -> Result<ProblemInput> {
    let doc: Document = serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("{name}: {e}")))?;
    match doc {
        Document::Lq {
            n,
            m,
            a,
            b,
            q,
            r,
            qf,
            q0,
            t0,
            t_final,
            target,
            p0,
            horizon,
        } => {
            if horizon == Some(0) {
                return Err(Error::InvalidInput("N must be at least 1".into()));
            }
            let spec = LQSpec {
                a: MatrixSource::Constant(matrix(&a, n, n, "A")?),
                b: MatrixSource::Constant(matrix(&b, n, m, "B")?),
                q: MatrixSource::Constant(matrix(&q, n, n, "Q")?),
                r: MatrixSource::Constant(matrix(&r, m, m, "R")?),
                qf: matrix(&qf, n, n, "Qf")?,
                target: target.map(|v| vector(&v, n, "qT")).transpose()?,
                q0: vector(&q0, n, "q0")?,
                t0,
                t_final,
            };
            let p0 = p0.map(|v| vector(&v, n, "p0")).transpose()?;
            let problem = problem_from_lq(name, spec, p0).map_err(|e| match e {
                Error::Model(msg) => Error::InvalidInput(msg),
                other => other,
            })?;
            Ok(ProblemInput::Continuous { problem, horizon })
        }
        Document::DhsLinear { d, a, b, c, y0, z0 } => {
            let system = LinearDHS::constant(matrix(&a, d, d, "A")?, matrix(&b, d, d, "B")?, matrix(&c, d, d, "C")?)
                .map_err(|e| Error::InvalidInput(e.to_string()))?;
            let y0 = match y0 {
                Some(v) => vector(&v, d, "y0")?,
                None => DVector::zeros(d),
            };
            let z0 = match z0 {
                Some(v) => vector(&v, d, "z0")?,
                None => DVector::zeros(d),
            };
            Ok(ProblemInput::LinearDhs(LinearDhsProblem { system, y0, z0 }))
        }
    }
}

/// Resolves a catalog name, or else reads a JSON file at that path.
pub fn load_problem(source: &str) -> Result<ProblemInput> {
    if let Ok(problem) = from_catalog(source) {
        return Ok(ProblemInput::Continuous { problem, horizon: None });
    }
    let path = Path::new(source);
    if !path.is_file() {
        return Err(Error::InvalidInput(format!(
            "{source:?} is neither a catalog problem nor a readable file"
        )));
    }
    let text = std::fs::read_to_string(path)?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("problem");
    parse_problem_json(&text, name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dhs::step_linear;

    const SCALAR: &str = r#"{"type":"lq","n":1,"m":1,"A":[[0]],"B":[[1]],"Q":[[1]],"R":[[1]],
        "Qf":[[1]],"q0":[1],"t0":0,"T":1,"N":1}"#;

    #[test]
    fn lq_document_builds_reduced_problem() {
        let (p, horizon) = parse_problem_json(SCALAR, "scalar").unwrap().continuous().unwrap();
        assert_eq!((p.n(), p.m(), horizon), (1, 1, Some(1)));
        let h = p.hamiltonian.value(0.0, &DVector::from_element(1, 1.0), &DVector::from_element(1, 2.0)).unwrap();
        assert!((h - 1.5).abs() < 1e-12);
        let sol = crate::ocp::shoot_discrete(&p.discrete(1).unwrap(), &Default::default()).unwrap();
        assert!((sol.objective - 0.75).abs() < 1e-10);
    }

    #[test]
    fn shape_errors_name_the_key() {
        let bad = SCALAR.replace(r#""B":[[1]]"#, r#""B":[[1, 2]]"#);
        let err = parse_problem_json(&bad, "x").unwrap_err().to_string();
        assert!(err.contains('B'), "{err}");
        let bad = SCALAR.replace(r#""R":[[1]]"#, r#""R":[[-1]]"#);
        assert!(matches!(parse_problem_json(&bad, "x"), Err(Error::InvalidInput(_))));
        assert!(parse_problem_json(r#"{"type":"ode"}"#, "x").is_err());
        assert!(parse_problem_json(&SCALAR.replace("\"N\":1", "\"N\":0"), "x").is_err());
    }

    #[test]
    fn dhs_document() {
        let doc = r#"{"type":"dhs-linear","d":1,"A":[[1]],"B":[[0]],"C":[[1]],"y0":[1],"z0":[0]}"#;
        let ProblemInput::LinearDhs(p) = parse_problem_json(doc, "d").unwrap() else {
            panic!("expected a DHS")
        };
        let (y, z) = step_linear(&p.system, 0, &p.y0, &p.z0).unwrap();
        assert_eq!((y[0], z[0]), (1.0, -1.0));
    }

    #[test]
    fn catalog_names_take_precedence_and_missing_files_are_rejected() {
        assert!(matches!(load_problem("osc"), Ok(ProblemInput::Continuous { .. })));
        assert!(matches!(load_problem("/nonexistent/p.json"), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scalar.json");
        std::fs::write(&path, SCALAR).unwrap();
        let (p, _) = load_problem(path.to_str().unwrap()).unwrap().continuous().unwrap();
        assert_eq!(p.name, "scalar");
    }
}
