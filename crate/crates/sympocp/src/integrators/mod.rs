//! Generating-function integrators: the first-order `S̃₂` map, the
//! Hamilton–Jacobi series maps and discrete Euler–Lagrange chains.

pub mod del;
pub mod gf2;
pub mod series;

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::hamiltonian::Hamiltonian;
use crate::model::PhasePoint;
use crate::numeric::NewtonOptions;
use crate::trajectory::{Sample, Trajectory};

pub use del::{
    initial_positions, step_del, step_del_adaptive, DirectLagrangian, DiscreteLagrangian, Lagrangian,
};
pub use gf2::{gf2_partials, step_gf2};
pub use series::{series_coefficients, step_series, GeneratingSeries};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MethodKind {
    Gf2Euler,
    Series,
    DelFixed,
    DelAdaptive,
}

impl MethodKind {
    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Gf2Euler => "gf2-euler",
            MethodKind::Series => "series",
            MethodKind::DelFixed => "del",
            MethodKind::DelAdaptive => "del-adaptive",
        }
    }

    /// Maps driven by a Hamiltonian through a second-kind generating function.
    pub fn is_second_kind(self) -> bool {
        matches!(self, MethodKind::Gf2Euler | MethodKind::Series)
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gf2-euler" | "gf2" => Ok(MethodKind::Gf2Euler),
            "series" => Ok(MethodKind::Series),
            "del" | "del-fixed" => Ok(MethodKind::DelFixed),
            "del-adaptive" => Ok(MethodKind::DelAdaptive),
            other => Err(Error::InvalidInput(format!(
                "unknown method {other:?} (expected gf2-euler, series, del or del-adaptive)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MethodSpec {
    pub kind: MethodKind,
    /// Truncation order of the series map.
    pub order: usize,
    /// Quadrature weight of the discrete Lagrangian.
    pub alpha: f64,
    pub implicit_tol: f64,
    pub implicit_max_iter: usize,
}

impl MethodSpec {
    pub fn new(kind: MethodKind) -> Self {
        Self {
            kind,
            order: 1,
            alpha: 0.5,
            implicit_tol: 1e-12,
            implicit_max_iter: 50,
        }
    }

    pub fn gf2_euler() -> Self {
        Self::new(MethodKind::Gf2Euler)
    }

    pub fn series(order: usize) -> Self {
        Self {
            order,
            ..Self::new(MethodKind::Series)
        }
    }

    pub fn del(alpha: f64) -> Self {
        Self {
            alpha,
            ..Self::new(MethodKind::DelFixed)
        }
    }

    pub fn del_adaptive(alpha: f64) -> Self {
        Self {
            alpha,
            ..Self::new(MethodKind::DelAdaptive)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == MethodKind::Series && !(1..=series::MAX_SERIES_ORDER).contains(&self.order) {
            return Err(Error::InvalidInput(format!("series order must be 1, 2 or 3 (got {})", self.order)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidInput(format!("alpha must lie in [0, 1] (got {})", self.alpha)));
        }
        if !(self.implicit_tol > 0.0) {
            return Err(Error::InvalidInput(format!("implicit_tol must be positive (got {})", self.implicit_tol)));
        }
        if self.implicit_max_iter == 0 {
            return Err(Error::InvalidInput("implicit_max_iter must be at least 1".into()));
        }
        Ok(())
    }

    pub fn newton_options(&self) -> NewtonOptions {
        NewtonOptions {
            tol: self.implicit_tol,
            max_iter: self.implicit_max_iter,
            ..NewtonOptions::default()
        }
    }

    /// Expected global order of accuracy.
    pub fn nominal_order(&self) -> f64 {
        match self.kind {
            MethodKind::Gf2Euler => 1.0,
            MethodKind::Series => self.order as f64,
            MethodKind::DelFixed | MethodKind::DelAdaptive => {
                if self.alpha == 0.5 {
                    2.0
                } else {
                    1.0
                }
            }
        }
    }

    /// Human-readable label such as `series(r=3)` or `del(alpha=0.5)`.
    pub fn label(&self) -> String {
        match self.kind {
            MethodKind::Gf2Euler => self.kind.name().to_string(),
            MethodKind::Series => format!("series(r={})", self.order),
            MethodKind::DelFixed | MethodKind::DelAdaptive => format!("{}(alpha={})", self.kind.name(), self.alpha),
        }
    }
}

/// A failed integration: the step at which it stopped and everything
/// computed before it.
#[derive(Debug)]
pub struct IntegrateError {
    pub step: usize,
    pub partial: Trajectory,
    pub source: Error,
}

impl fmt::Display for IntegrateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "integration failed at step {}: {}", self.step, self.source)
    }
}

impl std::error::Error for IntegrateError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

impl From<IntegrateError> for Error {
    fn from(e: IntegrateError) -> Self {
        match e.source {
            Error::Step(msg) => Error::Step(format!("step {}: {msg}", e.step)),
            other => other,
        }
    }
}

/// One step of a second-kind map.
pub fn step<H: Hamiltonian + ?Sized>(method: &MethodSpec, ham: &H, x: &PhasePoint, h: f64) -> Result<PhasePoint> {
    let opts = method.newton_options();
    match method.kind {
        MethodKind::Gf2Euler => step_gf2(ham, x, h, &opts),
        MethodKind::Series => step_series(ham, x, h, method.order, &opts),
        other => Err(Error::InvalidInput(format!(
            "{other} integrates a Lagrangian, not a Hamiltonian"
        ))),
    }
}

fn check_run(method: &MethodSpec, h: f64) -> Result<()> {
    method.validate()?;
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidInput(format!("step size must be positive and finite (got {h})")));
    }
    Ok(())
}

fn fail(step: usize, partial: Trajectory, source: Error) -> IntegrateError {
    IntegrateError { step, partial, source }
}

fn hamiltonian_sample<H: Hamiltonian + ?Sized>(ham: &H, x: &PhasePoint) -> Result<Sample> {
    Ok(Sample {
        t: x.t,
        q: x.q.clone(),
        p: x.p.clone(),
        u: ham.control(x.t, &x.q, &x.p)?,
        h_value: ham.value(x.t, &x.q, &x.p)?,
    })
}

/// Iterates a second-kind map `steps` times from `x0`.
pub fn integrate<H: Hamiltonian + ?Sized>(
    method: &MethodSpec,
    ham: &H,
    x0: &PhasePoint,
    h: f64,
    steps: usize,
) -> std::result::Result<Trajectory, IntegrateError> {
    let mut traj = Trajectory::new();
    if let Err(e) = check_run(method, h) {
        return Err(fail(0, traj, e));
    }
    if !method.kind.is_second_kind() {
        return Err(fail(
            0,
            traj,
            Error::InvalidInput(format!("{} needs a Lagrangian; use integrate_del", method.kind)),
        ));
    }
    if x0.dim() != ham.dim() {
        return Err(fail(
            0,
            traj,
            Error::Dimension {
                what: "initial phase point",
                expected: (ham.dim(), 1),
                got: (x0.dim(), 1),
            },
        ));
    }
    let first = hamiltonian_sample(ham, x0).and_then(|s| traj.push(s));
    if let Err(e) = first {
        return Err(fail(0, traj, e));
    }
    let mut x = x0.clone();
    for k in 0..steps {
        let next = step(method, ham, &x, h).and_then(|y| {
            traj.push(hamiltonian_sample(ham, &y)?)?;
            Ok(y)
        });
        match next {
            Ok(y) => x = y,
            Err(e) => return Err(fail(k, traj, e)),
        }
    }
    Ok(traj)
}

/// Initial data for a discrete Euler–Lagrange chain.
#[derive(Clone, Debug, PartialEq)]
pub enum DelStart {
    /// Phase-space data; the second position follows from the discrete
    /// Legendre transform `p₀ = −D₁S_d(q₀, q₁)`.
    Phase(PhasePoint),
    /// Two positions, `q₀` at `t0` and `q₁` at `t0 + h`.
    Positions { t0: f64, q0: DVector<f64>, q1: DVector<f64> },
}

struct DelChain {
    times: Vec<f64>,
    positions: Vec<DVector<f64>>,
    p0: Option<DVector<f64>>,
}

impl DelChain {
    /// Samples `0..count`; needs `count + 1` positions unless the chain is at
    /// its last sample.
    fn samples<L: Lagrangian + ?Sized>(&self, sd: &DiscreteLagrangian<'_, L>, count: usize) -> Result<Trajectory> {
        let (t, q) = (&self.times, &self.positions);
        let mut traj = Trajectory::new();
        for k in 0..count {
            let (p, energy) = if k + 1 < q.len() {
                let p = match (&self.p0, k) {
                    (Some(p0), 0) => p0.clone(),
                    _ => -sd.d1(&q[k], &q[k + 1], t[k], t[k + 1])?,
                };
                (p, sd.d3(&q[k], &q[k + 1], t[k], t[k + 1])?)
            } else {
                (
                    sd.d2(&q[k - 1], &q[k], t[k - 1], t[k])?,
                    -sd.d4(&q[k - 1], &q[k], t[k - 1], t[k])?,
                )
            };
            traj.push(Sample {
                t: t[k],
                q: q[k].clone(),
                p,
                u: DVector::zeros(0),
                h_value: energy,
            })?;
        }
        Ok(traj)
    }
}

/// Iterates a fixed or adaptive DEL chain for `steps` steps.
///
/// Momenta are the discrete Legendre transforms `p_k = −D₁S_d(q_k, q_{k+1})`
/// (and `D₂S_d` at the final sample); the recorded `H` is the discrete
/// energy `D₃S_d(q_k, q_{k+1})`.
pub fn integrate_del<L: Lagrangian + ?Sized>(
    method: &MethodSpec,
    lag: &L,
    start: &DelStart,
    h: f64,
    steps: usize,
) -> std::result::Result<Trajectory, IntegrateError> {
    let empty = Trajectory::new;
    if let Err(e) = check_run(method, h) {
        return Err(fail(0, empty(), e));
    }
    if method.kind.is_second_kind() {
        return Err(fail(
            0,
            empty(),
            Error::InvalidInput(format!("{} needs a Hamiltonian; use integrate", method.kind)),
        ));
    }
    let opts = method.newton_options();
    let sd = match DiscreteLagrangian::new(lag, method.alpha) {
        Ok(sd) => sd,
        Err(e) => return Err(fail(0, empty(), e)),
    };
    let (t0, q0, q1, p0) = match start {
        DelStart::Phase(x) => match initial_positions(lag, method.alpha, x.t, &x.q, &x.p, h, &opts) {
            Ok(q1) => (x.t, x.q.clone(), q1, Some(x.p.clone())),
            Err(e) => return Err(fail(0, empty(), e)),
        },
        DelStart::Positions { t0, q0, q1 } => (*t0, q0.clone(), q1.clone(), None),
    };
    if q0.len() != lag.dim() || q1.len() != lag.dim() {
        return Err(fail(
            0,
            empty(),
            Error::Dimension {
                what: "initial positions",
                expected: (lag.dim(), 1),
                got: (q0.len().max(q1.len()), 1),
            },
        ));
    }
    let mut chain = DelChain {
        times: vec![t0, t0 + h],
        positions: vec![q0, q1],
        p0,
    };
    for k in 1..steps {
        let (t, q) = (&chain.times, &chain.positions);
        let next = match method.kind {
            MethodKind::DelFixed => step_del(lag, &q[k - 1], &q[k], t[k], t[k] - t[k - 1], method.alpha, &opts)
                .map(|qn| (qn, t0 + (k + 1) as f64 * h)),
            _ => step_del_adaptive(lag, &q[k - 1], &q[k], t[k - 1], t[k], method.alpha, &opts),
        };
        match next {
            Ok((qn, tn)) => {
                chain.positions.push(qn);
                chain.times.push(tn);
            }
            Err(e) => {
                let partial = chain.samples(&sd, k).unwrap_or_default();
                return Err(fail(k, partial, e));
            }
        }
    }
    chain.samples(&sd, steps + 1).map_err(|e| fail(steps, Trajectory::new(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::DirectHamiltonian;
    use approx::assert_abs_diff_eq;

    fn free() -> DirectHamiltonian {
        DirectHamiltonian::new(1, true, |_, _, p| 0.5 * p[0] * p[0], |_, _, p| (DVector::zeros(1), p.clone()))
    }

    #[test]
    fn zero_steps_returns_initial_point() {
        let x0 = PhasePoint::from_slices(0.0, &[2.0], &[3.0]).unwrap();
        let tr = integrate(&MethodSpec::gf2_euler(), &free(), &x0, 0.5, 0).unwrap();
        assert_eq!(tr.len(), 1);
        assert_eq!(tr.samples()[0].phase_point(), x0);
    }

    #[test]
    fn free_particle_by_hand() {
        let x0 = PhasePoint::from_slices(0.0, &[2.0], &[3.0]).unwrap();
        let tr = integrate(&MethodSpec::gf2_euler(), &free(), &x0, 0.5, 4).unwrap();
        let q: Vec<f64> = tr.samples().iter().map(|s| s.q[0]).collect();
        assert_eq!(q, vec![2.0, 3.5, 5.0, 6.5, 8.0]);
        assert!(tr.samples().iter().all(|s| s.p[0] == 3.0 && s.h_value == 4.5));
    }

    #[test]
    fn del_chain_on_free_particle_is_linear() {
        let lag = DirectLagrangian::quadratic(1, 0.0);
        let x0 = PhasePoint::from_slices(0.0, &[2.0], &[3.0]).unwrap();
        let tr = integrate_del(&MethodSpec::del(0.5), &lag, &DelStart::Phase(x0), 0.5, 4).unwrap();
        assert_eq!(tr.len(), 5);
        for (k, s) in tr.samples().iter().enumerate() {
            assert_abs_diff_eq!(s.q[0], 2.0 + 1.5 * k as f64, epsilon = 1e-12);
            assert_abs_diff_eq!(s.p[0], 3.0, epsilon = 1e-12);
            assert_abs_diff_eq!(s.h_value, 4.5, epsilon = 1e-11);
        }
    }

    #[test]
    fn method_names_round_trip() {
        for kind in [MethodKind::Gf2Euler, MethodKind::Series, MethodKind::DelFixed, MethodKind::DelAdaptive] {
            assert_eq!(kind.name().parse::<MethodKind>().unwrap(), kind);
        }
        assert!("rk4".parse::<MethodKind>().is_err());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(MethodSpec::series(4).validate().is_err());
        assert!(MethodSpec::del(-0.1).validate().is_err());
        let x0 = PhasePoint::from_slices(0.0, &[2.0], &[3.0]).unwrap();
        let err = integrate(&MethodSpec::gf2_euler(), &free(), &x0, 0.0, 3).unwrap_err();
        assert_eq!(err.step, 0);
        assert!(err.partial.is_empty());
    }
}
