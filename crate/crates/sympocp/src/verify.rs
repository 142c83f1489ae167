//! Numerical certification of the integrators: symplecticity defects of
//! one-step maps, convergence order, energy drift, Hamilton–Jacobi residuals
//! of the truncated generating series, and stationarity of computed chains.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::catalog::Problem;
use crate::error::{Error, Result};
use crate::hamiltonian::Hamiltonian;
use crate::integrators::{
    gf2_partials, integrate, integrate_del, step, DelStart, DiscreteLagrangian, GeneratingSeries, MethodKind,
    MethodSpec,
};
use crate::model::{build_pontryagin, PhasePoint};
use crate::numeric::{
    canonical_form, central_gradient, central_jacobian, inf_norm, least_squares_slope, max_abs, FD_REL_STEP,
};
use crate::ocp::continuous::uniform_grid;
use crate::ocp::{necessary_step, DiscreteOCP, DiscreteTrajectory};
use crate::trajectory::{Sample, Trajectory};

/// Symplecticity defects above this fail.
pub const DEFECT_TOL: f64 = 1e-5;
/// Allowed distance between fitted and nominal order.
pub const ORDER_TOL: f64 = 0.2;
/// Errors below this are treated as solver roundoff and left out of fits.
pub const ORDER_FLOOR: f64 = 1e-10;
/// Stationarity residuals of computed chains above this fail.
pub const COMPOSITION_TOL: f64 = 1e-10;
/// Energy checks fail above this deviation or this secular slope.
pub const ENERGY_MAX_DEVIATION: f64 = 0.02;
pub const ENERGY_MAX_SLOPE: f64 = 1e-6;
/// Relative window on `residual(2t)/residual(t)` around `2^r`.
pub const HJ_RATIO_TOL: f64 = 0.2;

pub type StepMap<'a> = Box<dyn Fn(&PhasePoint) -> Result<PhasePoint> + Send + Sync + 'a>;

fn verification(what: &str, e: Error) -> Error {
    Error::Verification(format!("{what}: {e}"))
}

/// `∂(q₁, p₁)/∂(q₀, p₀)` of a one-step map by central differences with step
/// `1e-6·max(1, |x|)`.
pub fn flow_jacobian<F>(map: F, x: &PhasePoint) -> Result<DMatrix<f64>>
where
    F: Fn(&PhasePoint) -> Result<PhasePoint>,
{
    central_jacobian(|z| Ok(map(&PhasePoint::unstack(x.t, z))?.stacked()), &x.stacked(), FD_REL_STEP)
        .map_err(|e| verification("step map failed on the difference stencil", e))
}

/// `‖MᵀΣM − Σ‖∞` (max-abs entry) with `Σ` the canonical skew form.
pub fn symplectic_defect(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() || !m.nrows().is_multiple_of(2) {
        return Err(Error::InvalidInput(format!(
            "symplectic defect needs a square matrix of even size (got {}×{})",
            m.nrows(),
            m.ncols()
        )));
    }
    let s = canonical_form(m.nrows() / 2);
    Ok(max_abs(&(m.transpose() * &s * m - &s)))
}

/// One step of `method` on `problem` as a phase-space map.
pub fn one_step_map<'a>(problem: &'a Problem, method: &'a MethodSpec, h: f64) -> Result<StepMap<'a>> {
    method.validate()?;
    if method.kind.is_second_kind() {
        let ham = &problem.hamiltonian;
        return Ok(Box::new(move |x| step(method, ham, x, h)));
    }
    let lag = problem
        .lagrangian
        .as_ref()
        .ok_or_else(|| Error::InvalidInput(format!("problem {} has no Lagrangian for {}", problem.name, method.kind)))?;
    Ok(Box::new(move |x| {
        let traj = integrate_del(method, &**lag, &DelStart::Phase(x.clone()), h, 1)?;
        Ok(traj.samples()[1].phase_point())
    }))
}

/// Explicit Euler `(q + h·H_p, p − h·H_q)`: not symplectic, kept as a
/// negative control.
pub fn explicit_euler_step<H: Hamiltonian + ?Sized>(ham: &H, x: &PhasePoint, h: f64) -> Result<PhasePoint> {
    let g = ham.gradient(x.t, &x.q, &x.p)?;
    Ok(PhasePoint {
        t: x.t + h,
        q: &x.q + g.dp * h,
        p: &x.p - g.dq * h,
    })
}

pub fn explicit_euler_trajectory<H: Hamiltonian + ?Sized>(
    ham: &H,
    x0: &PhasePoint,
    h: f64,
    steps: usize,
) -> Result<Trajectory> {
    let sample = |x: &PhasePoint| -> Result<Sample> {
        Ok(Sample {
            t: x.t,
            q: x.q.clone(),
            p: x.p.clone(),
            u: ham.control(x.t, &x.q, &x.p)?,
            h_value: ham.value(x.t, &x.q, &x.p)?,
        })
    };
    let mut traj = Trajectory::new();
    traj.push(sample(x0)?)?;
    let mut x = x0.clone();
    for _ in 0..steps {
        x = explicit_euler_step(ham, &x, h)?;
        traj.push(sample(&x)?)?;
    }
    Ok(traj)
}

/// `count` phase points at time `t`, uniform in `[−1, 1]^{2n}`.
pub fn random_points(n: usize, t: f64, count: usize, seed: u64) -> Vec<PhasePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let q = DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
            let p = DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
            PhasePoint { t, q, p }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymplecticityReport {
    pub defects: Vec<f64>,
    pub max_defect: f64,
    pub mean_defect: f64,
    pub samples: usize,
    pub fd_step: f64,
}

impl SymplecticityReport {
    pub fn from_defects(defects: Vec<f64>) -> Result<Self> {
        if defects.is_empty() {
            return Err(Error::InvalidInput("symplecticity needs at least one sample".into()));
        }
        let max_defect = defects.iter().copied().fold(0.0, f64::max);
        let mean_defect = defects.iter().sum::<f64>() / defects.len() as f64;
        Ok(Self {
            samples: defects.len(),
            defects,
            max_defect,
            mean_defect,
            fd_step: FD_REL_STEP,
        })
    }
}

/// Defects of `map` at the given points, evaluated in parallel.
pub fn symplecticity<F>(map: F, points: &[PhasePoint]) -> Result<SymplecticityReport>
where
    F: Fn(&PhasePoint) -> Result<PhasePoint> + Sync,
{
    let defects = points
        .par_iter()
        .map(|x| symplectic_defect(&flow_jacobian(&map, x)?))
        .collect::<Result<Vec<_>>>()?;
    SymplecticityReport::from_defects(defects)
}

/// `0.2·2^{−j}` for `j = 0..6`.
pub fn default_ladder() -> Vec<f64> {
    ladder_from(0.2)
}

fn ladder_from(h0: f64) -> Vec<f64> {
    (0..6).map(|j| h0 * 0.5_f64.powi(j)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrderReport {
    pub steps: Vec<f64>,
    pub errors: Vec<f64>,
    /// Number of ladder points above [`ORDER_FLOOR`] used in the fit.
    pub fitted: usize,
    /// `None` when fewer than two errors clear the floor.
    pub slope: Option<f64>,
    pub nominal: f64,
}

impl OrderReport {
    pub fn within(&self, tol: f64) -> bool {
        self.slope.is_some_and(|s| (s - self.nominal).abs() <= tol)
    }
}

/// Phase point reached at `t_final` from `x0` with steps near `h`.
pub fn final_state(problem: &Problem, method: &MethodSpec, x0: &PhasePoint, t_final: f64, h: f64) -> Result<PhasePoint> {
    let (steps, h) = uniform_grid(x0.t, t_final, h)?;
    let traj = if method.kind.is_second_kind() {
        integrate(method, &problem.hamiltonian, x0, h, steps)?
    } else {
        let lag = problem.lagrangian.as_ref().ok_or_else(|| {
            Error::InvalidInput(format!("problem {} has no Lagrangian for {}", problem.name, method.kind))
        })?;
        integrate_del(method, &**lag, &DelStart::Phase(x0.clone()), h, steps)?
    };
    let last = traj.last().ok_or_else(|| Error::Step("empty trajectory".into()))?;
    Ok(last.phase_point())
}

/// Fits the global order of `method` against the exact flow of `problem`,
/// or against a third-order series reference at a thousandth of the finest
/// step when no exact flow is known.
pub fn observed_order(
    problem: &Problem,
    method: &MethodSpec,
    x0: &PhasePoint,
    t_final: f64,
    ladder: &[f64],
) -> Result<OrderReport> {
    if ladder.len() < 4 || ladder.windows(2).any(|w| !(w[1] < w[0])) || !(ladder[ladder.len() - 1] > 0.0) {
        return Err(Error::InvalidInput(
            "order ladder needs at least 4 positive, strictly decreasing steps".into(),
        ));
    }
    let oracle = match problem.exact_flow(x0, t_final) {
        Some(x) => x,
        None => final_state(problem, &MethodSpec::series(3), x0, t_final, ladder[ladder.len() - 1] / 1000.0)?,
    };
    let errors = ladder
        .iter()
        .map(|&h| {
            let x = final_state(problem, method, x0, t_final, h)?;
            Ok(inf_norm(&(x.q - &oracle.q)).max(inf_norm(&(x.p - &oracle.p))))
        })
        .collect::<Result<Vec<f64>>>()?;
    let (log_h, log_e): (Vec<f64>, Vec<f64>) = ladder
        .iter()
        .zip(&errors)
        .filter(|(_, &e)| e >= ORDER_FLOOR)
        .map(|(h, e)| (h.ln(), e.ln()))
        .unzip();
    let slope = (log_h.len() >= 2).then(|| least_squares_slope(&log_h, &log_e));
    Ok(OrderReport {
        steps: ladder.to_vec(),
        fitted: log_h.len(),
        errors,
        slope,
        nominal: method.nominal_order(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyReport {
    pub max_deviation: f64,
    pub mean_deviation: f64,
    /// Least-squares slope of the recorded energy against time.
    pub slope: f64,
}

pub fn energy_drift(traj: &Trajectory) -> Result<EnergyReport> {
    let first = traj.first().ok_or_else(|| Error::InvalidInput("energy drift of an empty trajectory".into()))?;
    let deviations: Vec<f64> = traj.samples().iter().map(|s| (s.h_value - first.h_value).abs()).collect();
    let energies: Vec<f64> = traj.samples().iter().map(|s| s.h_value).collect();
    let slope = if traj.len() < 2 { 0.0 } else { least_squares_slope(&traj.times(), &energies) };
    Ok(EnergyReport {
        max_deviation: deviations.iter().copied().fold(0.0, f64::max),
        mean_deviation: deviations.iter().sum::<f64>() / deviations.len() as f64,
        slope,
    })
}

/// `|∂S/∂t − H(∂S/∂p₁, p₁)|` for the order-`r` truncated series
/// `S(t, q₀, p₁) = q₀·p₁ + Σ_{i≤r} tⁱ Gᵢ(q₀, p₁)`.
pub fn hj_residual<H: Hamiltonian + ?Sized>(ham: &H, r: usize, q0: &DVector<f64>, p1: &DVector<f64>, t: f64) -> Result<f64> {
    if !ham.is_autonomous() {
        return Err(Error::InvalidInput("the Hamilton–Jacobi check needs an autonomous Hamiltonian".into()));
    }
    let series = GeneratingSeries::new(ham, r)?;
    let g = series.coefficients(0.0, q0, p1)?;
    let ds_dt: f64 = (0..r).map(|i| (i + 1) as f64 * t.powi(i as i32) * g[i]).sum();
    let q = series.partials(0.0, q0, p1, t)?.dp;
    Ok((ds_dt - ham.value(0.0, &q, p1)?).abs())
}

/// Largest interior stationarity residual of a computed chain.
///
/// Second-kind chains are checked against `q_k = ∂S/∂p₁(q_{k−1}, p_k)` and
/// `p_k = ∂S/∂q₀(q_k, p_{k+1})`; DEL chains against
/// `D₂S_d(q_{k−1}, q_k) + D₁S_d(q_k, q_{k+1}) = 0` (plus the energy balance
/// for adaptive chains). Fewer than three samples give zero.
pub fn composition_residuals(problem: &Problem, method: &MethodSpec, traj: &Trajectory) -> Result<Vec<f64>> {
    let s = traj.samples();
    if s.len() < 3 {
        return Ok(Vec::new());
    }
    let interior = 1..s.len() - 1;
    if method.kind.is_second_kind() {
        let ham = &problem.hamiltonian;
        let series = GeneratingSeries::new(ham, method.order.clamp(1, 3))?;
        let partials = |a: &Sample, b: &Sample| {
            let h = b.t - a.t;
            match method.kind {
                MethodKind::Series => series.partials(a.t, &a.q, &b.p, h),
                _ => gf2_partials(ham, a.t, &a.q, &b.p, h),
            }
        };
        interior
            .map(|k| {
                let back = partials(&s[k - 1], &s[k])?;
                let fwd = partials(&s[k], &s[k + 1])?;
                Ok(inf_norm(&(&s[k].q - back.dp)).max(inf_norm(&(&s[k].p - fwd.dq))))
            })
            .collect()
    } else {
        let lag = problem
            .lagrangian
            .as_ref()
            .ok_or_else(|| Error::InvalidInput(format!("problem {} has no Lagrangian", problem.name)))?;
        let sd = DiscreteLagrangian::new(&**lag, method.alpha)?;
        interior
            .map(|k| {
                let q = [&s[k - 1].q, &s[k].q, &s[k + 1].q];
                let t = [s[k - 1].t, s[k].t, s[k + 1].t];
                let mut r = inf_norm(&sd.del_residual(q, t)?);
                if method.kind == MethodKind::DelAdaptive {
                    r = r.max(sd.energy_residual(q, t)?.abs());
                }
                Ok(r)
            })
            .collect()
    }
}

/// `|∇_q H̃ − H_q(u*)|∞`: the eliminated Hamiltonian differentiated by
/// central differences against the partial derivative of the Pontryagin
/// Hamiltonian at the eliminated control.
pub fn envelope_residual(problem: &Problem, t: f64, q: &DVector<f64>, p: &DVector<f64>) -> Result<f64> {
    let ham = &problem.hamiltonian;
    let total = central_gradient(|qq| ham.value(t, qq, p), q, FD_REL_STEP)?;
    let partial = match &problem.system {
        Some(sys) => build_pontryagin(sys.clone())?.h_q(t, q, p, &ham.control(t, q, p)?)?,
        None => ham.gradient(t, q, p)?.dq,
    };
    Ok(inf_norm(&(total - partial)))
}

/// Symplecticity defect of each stage map `(q_k, p_k) ↦ (q_{k+1}, p_{k+1})`
/// of the discrete necessary conditions, linearized along `sol`.
pub fn docp_stage_defects(docp: &DiscreteOCP, sol: &DiscreteTrajectory) -> Result<Vec<f64>> {
    (0..docp.horizon)
        .map(|k| {
            let t = docp.t0 + k as f64 * docp.step;
            let x = PhasePoint::new(t, sol.states[k].clone(), sol.costates[k].clone())?;
            let u = &sol.controls[k];
            let map = |y: &PhasePoint| {
                let (q1, p1, _) = necessary_step(docp, k, &y.q, &y.p, u)?;
                PhasePoint::new(t + docp.step, q1, p1)
            };
            symplectic_defect(&flow_jacobian(map, &x)?)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Check {
    Symplecticity,
    Order,
    Energy,
    Hj,
    Composition,
}

impl Check {
    pub const ALL: [Check; 5] = [Check::Symplecticity, Check::Order, Check::Energy, Check::Hj, Check::Composition];

    pub fn name(self) -> &'static str {
        match self {
            Check::Symplecticity => "symplecticity",
            Check::Order => "order",
            Check::Energy => "energy",
            Check::Hj => "hj",
            Check::Composition => "composition",
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Check {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Check::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown check {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckOptions {
    /// Step size; each check has its own default.
    pub h: Option<f64>,
    pub steps: Option<usize>,
    pub samples: usize,
    pub seed: u64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            h: None,
            steps: None,
            samples: 100,
            seed: 0,
        }
    }
}

/// Summary written by `verify`; unused metrics are `null`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub check: String,
    pub problem: String,
    pub method: String,
    pub h: f64,
    pub samples: usize,
    pub max_defect: f64,
    pub mean_defect: f64,
    pub slope: Option<f64>,
    pub pass: bool,
}

/// Point at which the Hamilton–Jacobi residual is probed: generic enough
/// that no leading coefficient of the catalog problems vanishes.
fn hj_probe(n: usize) -> (DVector<f64>, DVector<f64>) {
    (DVector::from_element(n, 0.6), DVector::from_element(n, 0.8))
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn trajectory_of(problem: &Problem, method: &MethodSpec, h: f64, steps: usize) -> Result<Trajectory> {
    if method.kind.is_second_kind() {
        Ok(integrate(method, &problem.hamiltonian, &problem.x0, h, steps)?)
    } else {
        let lag = problem
            .lagrangian
            .as_ref()
            .ok_or_else(|| Error::InvalidInput(format!("problem {} has no Lagrangian", problem.name)))?;
        Ok(integrate_del(method, &**lag, &DelStart::Phase(problem.x0.clone()), h, steps)?)
    }
}

/// Runs one check and summarizes it.
pub fn run_check(check: Check, problem: &Problem, method: &MethodSpec, opts: &CheckOptions) -> Result<VerifyReport> {
    method.validate()?;
    if let Some(h) = opts.h {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidInput(format!("h must be positive (got {h})")));
        }
    }
    let report = |h, samples, max_defect, mean_defect, slope, pass| VerifyReport {
        check: check.name().into(),
        problem: problem.name.clone(),
        method: method.label(),
        h,
        samples,
        max_defect,
        mean_defect,
        slope,
        pass,
    };
    match check {
        Check::Symplecticity => {
            let h = opts.h.unwrap_or(0.1);
            let points = random_points(problem.n(), problem.x0.t, opts.samples, opts.seed);
            let map = one_step_map(problem, method, h)?;
            let r = symplecticity(map, &points)?;
            Ok(report(h, r.samples, r.max_defect, r.mean_defect, None, r.max_defect <= DEFECT_TOL))
        }
        Check::Order => {
            let ladder = ladder_from(opts.h.unwrap_or(0.2));
            let r = observed_order(problem, method, &problem.x0, problem.t_final, &ladder)?;
            let pass = r.within(ORDER_TOL);
            let max = r.errors.iter().copied().fold(0.0, f64::max);
            Ok(report(ladder[0], r.fitted, max, mean(&r.errors), r.slope, pass))
        }
        Check::Energy => {
            if !problem.hamiltonian.is_autonomous() {
                return Err(Error::InvalidInput("energy drift needs an autonomous problem".into()));
            }
            let h = opts.h.unwrap_or(0.01);
            let traj = trajectory_of(problem, method, h, opts.steps.unwrap_or(10_000))?;
            let r = energy_drift(&traj)?;
            let pass = r.max_deviation <= ENERGY_MAX_DEVIATION && r.slope.abs() <= ENERGY_MAX_SLOPE;
            Ok(report(h, traj.len(), r.max_deviation, r.mean_deviation, Some(r.slope), pass))
        }
        Check::Hj => {
            let r = match method.kind {
                MethodKind::Gf2Euler => 1,
                MethodKind::Series => method.order,
                _ => {
                    return Err(Error::InvalidInput(
                        "the Hamilton–Jacobi check applies to second-kind methods".into(),
                    ))
                }
            };
            let t = opts.h.unwrap_or(5e-3);
            let (q0, p1) = hj_probe(problem.n());
            let ham = &problem.hamiltonian;
            let small = hj_residual(ham, r, &q0, &p1, t)?;
            let large = hj_residual(ham, r, &q0, &p1, 2.0 * t)?;
            let ratio = large / small;
            let expected = 2f64.powi(r as i32);
            let pass = ((ratio - expected) / expected).abs() <= HJ_RATIO_TOL;
            Ok(report(t, 2, large, 0.5 * (small + large), Some(ratio.log2()), pass))
        }
        Check::Composition => {
            let (steps, h) = match (opts.steps, opts.h) {
                (Some(k), h) => (k, h.unwrap_or(0.1)),
                (None, h) => uniform_grid(problem.x0.t, problem.t_final, h.unwrap_or(0.1))?,
            };
            let traj = trajectory_of(problem, method, h, steps)?;
            let r = composition_residuals(problem, method, &traj)?;
            let max = r.iter().copied().fold(0.0, f64::max);
            Ok(report(h, r.len(), max, mean(&r), None, max <= COMPOSITION_TOL))
        }
    }
}
