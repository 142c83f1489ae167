//! Built-in problems and the [`Problem`] bundle shared by the CLI, the FFI
//! layer and the verification suite.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::elimination::{EliminationConfig, ReducedHamiltonian};
use crate::error::{Error, Result};
use crate::hamiltonian::{DirectHamiltonian, Hamiltonian};
use crate::integrators::{DirectLagrangian, Lagrangian};
use crate::model::{build_pontryagin, lq_from_spec, ControlSystem, LQSpec, MatrixSource, PhasePoint};
use crate::ocp::DiscreteOCP;

pub type SharedHamiltonian = Arc<dyn Hamiltonian + Send + Sync>;
pub type SharedLagrangian = Arc<dyn Lagrangian + Send + Sync>;
pub type ExactFlow = Arc<dyn Fn(&PhasePoint, f64) -> PhasePoint + Send + Sync>;
pub type TerminalGradient = Arc<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;

/// A problem ready for integration: its Hamiltonian, optional control
/// system and Lagrangian, default initial data and, where known, the exact
/// flow.
#[derive(Clone)]
pub struct Problem {
    pub name: String,
    pub description: String,
    pub hamiltonian: SharedHamiltonian,
    pub system: Option<Arc<ControlSystem>>,
    pub lq: Option<LQSpec>,
    pub lagrangian: Option<SharedLagrangian>,
    pub x0: PhasePoint,
    pub t_final: f64,
    pub exact: Option<ExactFlow>,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("n", &self.n())
            .field("m", &self.m())
            .field("x0", &self.x0)
            .field("t_final", &self.t_final)
            .finish_non_exhaustive()
    }
}

impl Problem {
    pub fn n(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn m(&self) -> usize {
        self.hamiltonian.control_dim()
    }

    /// Exact phase point at time `t` starting from `x0`, when known.
    pub fn exact_flow(&self, x0: &PhasePoint, t: f64) -> Option<PhasePoint> {
        self.exact.as_ref().map(|f| f(x0, t))
    }

    /// `S_q(t, q)` of the terminal cost (zero without a control system).
    pub fn terminal_gradient(&self) -> TerminalGradient {
        match &self.system {
            Some(sys) => {
                let sys = sys.clone();
                Arc::new(move |t, q| (sys.terminal_cost_dq)(t, q))
            }
            None => {
                let n = self.n();
                Arc::new(move |_, _| DVector::zeros(n))
            }
        }
    }

    /// Explicit-Euler discrete OCP with horizon `horizon`.
    pub fn discrete(&self, horizon: usize) -> Result<DiscreteOCP> {
        let spec = self.lq.as_ref().ok_or_else(|| {
            Error::InvalidInput(format!("problem {} has no LQ data to discretize", self.name))
        })?;
        DiscreteOCP::from_lq_euler(spec, horizon)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub n: usize,
    pub m: usize,
    pub summary: &'static str,
}

pub const CATALOG: [CatalogEntry; 4] = [
    CatalogEntry {
        name: "free",
        n: 1,
        m: 1,
        summary: "dq/dt = u, L = u²/2 (reduced H = p²/2)",
    },
    CatalogEntry {
        name: "inverted",
        n: 1,
        m: 1,
        summary: "dq/dt = u, L = (q² + u²)/2 (reduced H = p²/2 − q²/2)",
    },
    CatalogEntry {
        name: "dblint",
        n: 2,
        m: 1,
        summary: "double integrator, L = u²/2, terminal penalty toward (1, 0)",
    },
    CatalogEntry {
        name: "osc",
        n: 1,
        m: 0,
        summary: "harmonic oscillator H = (p² + q²)/2, no control",
    },
];

fn constant(rows: usize, cols: usize, data: &[f64]) -> MatrixSource {
    MatrixSource::Constant(DMatrix::from_row_slice(rows, cols, data))
}

fn scalar_spec(q: f64, qf: f64, q0: f64) -> LQSpec {
    LQSpec {
        a: constant(1, 1, &[0.0]),
        b: constant(1, 1, &[1.0]),
        q: constant(1, 1, &[q]),
        r: constant(1, 1, &[1.0]),
        qf: DMatrix::from_element(1, 1, qf),
        target: None,
        q0: DVector::from_element(1, q0),
        t0: 0.0,
        t_final: 1.0,
    }
}

/// Terminal weight of the `dblint` catalog entry.
pub const DBLINT_TERMINAL_WEIGHT: f64 = 100.0;

pub fn dblint_spec() -> LQSpec {
    LQSpec {
        a: constant(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        b: constant(2, 1, &[0.0, 1.0]),
        q: constant(2, 2, &[0.0; 4]),
        r: constant(1, 1, &[1.0]),
        qf: DMatrix::identity(2, 2) * DBLINT_TERMINAL_WEIGHT,
        target: Some(DVector::from_vec(vec![1.0, 0.0])),
        q0: DVector::zeros(2),
        t0: 0.0,
        t_final: 1.0,
    }
}

/// Builds a problem from LQ data; the Hamiltonian is the eliminated one.
pub fn problem_from_lq(name: &str, spec: LQSpec, p0: Option<DVector<f64>>) -> Result<Problem> {
    let sys = Arc::new(lq_from_spec(&spec)?);
    let autonomous = [&spec.a, &spec.b, &spec.q, &spec.r]
        .iter()
        .all(|m| matches!(m, MatrixSource::Constant(_)));
    let rh = ReducedHamiltonian::new(build_pontryagin(sys.clone())?, EliminationConfig::default())?.autonomous(autonomous);
    let n = spec.n();
    let p0 = p0.unwrap_or_else(|| DVector::zeros(n));
    let x0 = PhasePoint::new(spec.t0, spec.q0.clone(), p0)?;
    Ok(Problem {
        name: name.to_string(),
        description: format!("LQ problem (n = {n}, m = {})", spec.m()),
        hamiltonian: Arc::new(rh),
        system: Some(sys),
        t_final: spec.t_final,
        lq: Some(spec),
        lagrangian: None,
        x0,
        exact: None,
    })
}

fn free_flow(x: &PhasePoint, t: f64) -> PhasePoint {
    let s = t - x.t;
    PhasePoint {
        t,
        q: &x.q + &x.p * s,
        p: x.p.clone(),
    }
}

fn inverted_flow(x: &PhasePoint, t: f64) -> PhasePoint {
    let s = t - x.t;
    PhasePoint {
        t,
        q: &x.q * s.cosh() + &x.p * s.sinh(),
        p: &x.q * s.sinh() + &x.p * s.cosh(),
    }
}

/// Exact flow of `H = (p² + q²)/2`.
pub fn oscillator_flow(x: &PhasePoint, t: f64) -> PhasePoint {
    let s = t - x.t;
    PhasePoint {
        t,
        q: &x.q * s.cos() + &x.p * s.sin(),
        p: -&x.q * s.sin() + &x.p * s.cos(),
    }
}

/// Exact flow of `H = p₁q₂ + p₂²/2`.
fn dblint_flow(x: &PhasePoint, t: f64) -> PhasePoint {
    let s = t - x.t;
    let (q1, q2, p1, p2) = (x.q[0], x.q[1], x.p[0], x.p[1]);
    PhasePoint {
        t,
        q: DVector::from_vec(vec![
            q1 + q2 * s + p2 * s * s / 2.0 - p1 * s.powi(3) / 6.0,
            q2 + p2 * s - p1 * s * s / 2.0,
        ]),
        p: DVector::from_vec(vec![p1, p2 - p1 * s]),
    }
}

fn oscillator() -> Result<Problem> {
    Ok(Problem {
        name: "osc".into(),
        description: CATALOG[3].summary.into(),
        hamiltonian: Arc::new(DirectHamiltonian::harmonic_oscillator(1)),
        system: None,
        lq: None,
        lagrangian: Some(Arc::new(DirectLagrangian::quadratic(1, 1.0))),
        x0: PhasePoint::from_slices(0.0, &[1.0], &[0.0])?,
        t_final: 1.0,
        exact: Some(Arc::new(oscillator_flow)),
    })
}

/// Looks up a built-in problem by name.
pub fn from_catalog(name: &str) -> Result<Problem> {
    let entry = CATALOG
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::InvalidInput(format!("unknown catalog problem {name:?}")))?;
    let with = |mut p: Problem, lag: Option<SharedLagrangian>, exact: ExactFlow| {
        p.description = entry.summary.into();
        p.lagrangian = lag;
        p.exact = Some(exact);
        p
    };
    match name {
        "free" => Ok(with(
            problem_from_lq("free", scalar_spec(0.0, 0.0, 2.0), Some(DVector::from_element(1, 3.0)))?,
            Some(Arc::new(DirectLagrangian::quadratic(1, 0.0))),
            Arc::new(free_flow),
        )),
        "inverted" => Ok(with(
            problem_from_lq("inverted", scalar_spec(1.0, 1.0, 1.0), None)?,
            Some(Arc::new(DirectLagrangian::quadratic(1, -1.0))),
            Arc::new(inverted_flow),
        )),
        "dblint" => Ok(with(problem_from_lq("dblint", dblint_spec(), None)?, None, Arc::new(dblint_flow))),
        _ => oscillator(),
    }
}
