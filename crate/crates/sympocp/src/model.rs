//! Continuous optimal control problems and their Pontryagin Hamiltonian.
//!
//! A [`ControlSystem`] carries the dynamics `q' = Γ(t, q, u)`, the running
//! cost `L(t, q, u)` and the terminal cost `S(t, q)` together with the
//! analytic derivatives the solvers need. [`build_pontryagin`] turns it into
//! the pseudo-Hamiltonian `H = p·Γ − L` and its partial derivatives.
//!
//! Sign convention: the cost enters `H` with a minus sign, so along optimal
//! extremals of a convex running cost `H_uu` is negative definite and the
//! stationary control maximizes `H`. Stationarity `H_u = 0` is what the
//! solvers enforce; optimality is never certified.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numeric::{central_jacobian, FD_HESSIAN_STEP};

/// Evaluator `(t, q, u) -> scalar`.
pub type ScalarFn = Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> f64 + Send + Sync>;
/// Evaluator `(t, q, u) -> vector`.
pub type VectorFn = Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
/// Evaluator `(t, q, u) -> matrix`.
pub type MatrixFn = Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;
/// Evaluator `(t, q) -> scalar`.
pub type TerminalFn = Arc<dyn Fn(f64, &DVector<f64>) -> f64 + Send + Sync>;
/// Evaluator `(t, q) -> vector`.
pub type TerminalGradFn = Arc<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;
/// Evaluator `(t, q, p, u) -> (H_qq, H_qu)`.
pub type SecondOrderFn =
    Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>, &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) + Send + Sync>;
/// Time-dependent matrix.
pub type TimeMatrixFn = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;

/// A point `(t, q, p)` of the reduced phase space.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePoint {
    pub t: f64,
    pub q: DVector<f64>,
    pub p: DVector<f64>,
}

impl PhasePoint {
    pub fn new(t: f64, q: DVector<f64>, p: DVector<f64>) -> Result<Self> {
        if q.len() != p.len() {
            return Err(Error::Dimension {
                what: "phase point costate",
                expected: (q.len(), 1),
                got: (p.len(), 1),
            });
        }
        Ok(Self { t, q, p })
    }

    pub fn from_slices(t: f64, q: &[f64], p: &[f64]) -> Result<Self> {
        Self::new(t, DVector::from_column_slice(q), DVector::from_column_slice(p))
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// Stacked `(q, p)` coordinates.
    pub fn stacked(&self) -> DVector<f64> {
        stack(&self.q, &self.p)
    }

    /// Inverse of [`PhasePoint::stacked`].
    pub fn unstack(t: f64, x: &DVector<f64>) -> Self {
        let n = x.len() / 2;
        Self {
            t,
            q: x.rows(0, n).into_owned(),
            p: x.rows(n, n).into_owned(),
        }
    }
}

pub(crate) fn stack(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut x = DVector::zeros(a.len() + b.len());
    x.rows_mut(0, a.len()).copy_from(a);
    x.rows_mut(a.len(), b.len()).copy_from(b);
    x
}

pub(crate) fn check_vec(v: &DVector<f64>, n: usize, what: &'static str) -> Result<()> {
    if v.len() == n {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected: (n, 1),
            got: (v.len(), 1),
        })
    }
}

pub(crate) fn check_mat(m: &DMatrix<f64>, rows: usize, cols: usize, what: &'static str) -> Result<()> {
    if m.shape() == (rows, cols) {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected: (rows, cols),
            got: m.shape(),
        })
    }
}

/// How the dynamics depend on the control.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControlAffinity {
    /// `Γ` is affine in `u`, so `H_uu = −L_uu` exactly.
    Affine,
    /// `H_uu` is obtained by central differences of `H_u`.
    General,
}

/// Continuous-time optimal control problem data.
///
/// Jacobians follow the row-per-output convention: `dynamics_dq[(i, j)]` is
/// `∂Γ^i/∂q^j`.
#[derive(Clone)]
pub struct ControlSystem {
    pub n: usize,
    pub m: usize,
    pub dynamics: VectorFn,
    pub dynamics_dq: MatrixFn,
    pub dynamics_du: MatrixFn,
    pub running_cost: ScalarFn,
    pub running_cost_dq: VectorFn,
    pub running_cost_du: VectorFn,
    pub running_cost_duu: MatrixFn,
    pub terminal_cost: TerminalFn,
    pub terminal_cost_dq: TerminalGradFn,
    pub affinity: ControlAffinity,
    /// Optional analytic `(H_qq, H_qu)`; enables exact reduced Hessians.
    pub second_order: Option<SecondOrderFn>,
}

impl fmt::Debug for ControlSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlSystem")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("affinity", &self.affinity)
            .field("second_order", &self.second_order.is_some())
            .finish_non_exhaustive()
    }
}

impl ControlSystem {
    /// Evaluates every evaluator at `(t, q, u)` and checks output shapes.
    pub fn check_dimensions_at(&self, t: f64, q: &DVector<f64>, u: &DVector<f64>) -> Result<()> {
        let (n, m) = (self.n, self.m);
        check_vec(q, n, "state")?;
        check_vec(u, m, "control")?;
        check_vec(&(self.dynamics)(t, q, u), n, "dynamics")?;
        check_mat(&(self.dynamics_dq)(t, q, u), n, n, "dynamics_dq")?;
        check_mat(&(self.dynamics_du)(t, q, u), n, m, "dynamics_du")?;
        check_vec(&(self.running_cost_dq)(t, q, u), n, "running_cost_dq")?;
        check_vec(&(self.running_cost_du)(t, q, u), m, "running_cost_du")?;
        check_mat(&(self.running_cost_duu)(t, q, u), m, m, "running_cost_duu")?;
        check_vec(&(self.terminal_cost_dq)(t, q), n, "terminal_cost_dq")?;
        if let Some(so) = &self.second_order {
            let (hqq, hqu) = so(t, q, &DVector::zeros(n), u);
            check_mat(&hqq, n, n, "second_order H_qq")?;
            check_mat(&hqu, n, m, "second_order H_qu")?;
        }
        Ok(())
    }
}

/// The pseudo-Hamiltonian `H(t, q, p, u) = p·Γ(t, q, u) − L(t, q, u)` and its partials.
#[derive(Clone, Debug)]
pub struct PontryaginEvaluator {
    sys: Arc<ControlSystem>,
}

/// Checks dimensions at the origin and wraps the system.
pub fn build_pontryagin(sys: Arc<ControlSystem>) -> Result<PontryaginEvaluator> {
    sys.check_dimensions_at(0.0, &DVector::zeros(sys.n), &DVector::zeros(sys.m))?;
    Ok(PontryaginEvaluator { sys })
}

impl PontryaginEvaluator {
    pub fn system(&self) -> &ControlSystem {
        &self.sys
    }

    pub fn n(&self) -> usize {
        self.sys.n
    }

    pub fn m(&self) -> usize {
        self.sys.m
    }

    fn check_args(&self, q: &DVector<f64>, p: &DVector<f64>, u: &DVector<f64>) -> Result<()> {
        check_vec(q, self.sys.n, "state")?;
        check_vec(p, self.sys.n, "costate")?;
        check_vec(u, self.sys.m, "control")
    }

    pub fn h(&self, t: f64, q: &DVector<f64>, p: &DVector<f64>, u: &DVector<f64>) -> Result<f64> {
        self.check_args(q, p, u)?;
        let gamma = (self.sys.dynamics)(t, q, u);
        check_vec(&gamma, self.sys.n, "dynamics")?;
        Ok(p.dot(&gamma) - (self.sys.running_cost)(t, q, u))
    }

    /// `H_q = Γ_qᵀ p − L_q`.
    pub fn h_q(&self, t: f64, q: &DVector<f64>, p: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_args(q, p, u)?;
        let gq = (self.sys.dynamics_dq)(t, q, u);
        check_mat(&gq, self.sys.n, self.sys.n, "dynamics_dq")?;
        let lq = (self.sys.running_cost_dq)(t, q, u);
        check_vec(&lq, self.sys.n, "running_cost_dq")?;
        Ok(gq.tr_mul(p) - lq)
    }

    /// `H_p = Γ`.
    pub fn h_p(&self, t: f64, q: &DVector<f64>, p: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_args(q, p, u)?;
        let gamma = (self.sys.dynamics)(t, q, u);
        check_vec(&gamma, self.sys.n, "dynamics")?;
        Ok(gamma)
    }

    /// `H_u = Γ_uᵀ p − L_u`.
    pub fn h_u(&self, t: f64, q: &DVector<f64>, p: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_args(q, p, u)?;
        let gu = (self.sys.dynamics_du)(t, q, u);
        check_mat(&gu, self.sys.n, self.sys.m, "dynamics_du")?;
        let lu = (self.sys.running_cost_du)(t, q, u);
        check_vec(&lu, self.sys.m, "running_cost_du")?;
        Ok(gu.tr_mul(p) - lu)
    }

    /// `H_uu`: exactly `−L_uu` for control-affine dynamics, otherwise a
    /// central difference of `H_u`.
    pub fn h_uu(&self, t: f64, q: &DVector<f64>, p: &DVector<f64>, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_args(q, p, u)?;
        match self.sys.affinity {
            ControlAffinity::Affine => {
                let luu = (self.sys.running_cost_duu)(t, q, u);
                check_mat(&luu, self.sys.m, self.sys.m, "running_cost_duu")?;
                Ok(-luu)
            }
            ControlAffinity::General => {
                let jac = central_jacobian(|v| self.h_u(t, q, p, v), u, FD_HESSIAN_STEP)?;
                Ok((&jac + jac.transpose()) * 0.5)
            }
        }
    }

    /// Analytic `(H_qq, H_qu)` when the system supplies them.
    pub fn second_order(
        &self,
        t: f64,
        q: &DVector<f64>,
        p: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        self.sys.second_order.as_ref().map(|f| f(t, q, p, u))
    }
}

/// A matrix that is either constant or an evaluator of time.
#[derive(Clone)]
pub enum MatrixSource {
    Constant(DMatrix<f64>),
    TimeVarying(TimeMatrixFn),
}

impl MatrixSource {
    pub fn at(&self, t: f64) -> DMatrix<f64> {
        match self {
            MatrixSource::Constant(m) => m.clone(),
            MatrixSource::TimeVarying(f) => f(t),
        }
    }
}

impl fmt::Debug for MatrixSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixSource::Constant(m) => write!(f, "Constant({m:?})"),
            MatrixSource::TimeVarying(_) => f.write_str("TimeVarying(..)"),
        }
    }
}

impl From<DMatrix<f64>> for MatrixSource {
    fn from(m: DMatrix<f64>) -> Self {
        MatrixSource::Constant(m)
    }
}

/// Linear-quadratic problem: `Γ = Aq + Bu`, `L = ½(qᵀQq + uᵀRu)`,
/// `S = ½(q − q_T)ᵀ Q_f (q − q_T)`.
#[derive(Clone, Debug)]
pub struct LQSpec {
    pub a: MatrixSource,
    pub b: MatrixSource,
    pub q: MatrixSource,
    pub r: MatrixSource,
    pub qf: DMatrix<f64>,
    /// Terminal target; the origin when absent.
    pub target: Option<DVector<f64>>,
    pub q0: DVector<f64>,
    pub t0: f64,
    pub t_final: f64,
}

const SYMMETRY_TOL: f64 = 1e-12;

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.iter().fold(1.0_f64, |a, x| a.max(x.abs()));
    (m - m.transpose()).iter().all(|x| x.abs() <= SYMMETRY_TOL * scale)
}

impl LQSpec {
    pub fn n(&self) -> usize {
        self.q0.len()
    }

    pub fn m(&self) -> usize {
        self.b.at(self.t0).ncols()
    }

    /// Checks shapes, symmetry of `Q`, `Q_f`, `R` and positive-definiteness
    /// of `R` at the start, middle and end of the horizon.
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let m = self.m();
        if n == 0 {
            return Err(Error::Model("LQ state dimension must be positive".into()));
        }
        if !(self.t_final > self.t0) {
            return Err(Error::Model(format!(
                "LQ horizon must satisfy T > t0 (t0 = {}, T = {})",
                self.t0, self.t_final
            )));
        }
        check_mat(&self.qf, n, n, "LQ Qf")?;
        if !is_symmetric(&self.qf) {
            return Err(Error::Model("LQ Qf must be symmetric".into()));
        }
        if let Some(target) = &self.target {
            check_vec(target, n, "LQ terminal target")?;
        }
        let mid = 0.5 * (self.t0 + self.t_final);
        for t in [self.t0, mid, self.t_final] {
            check_mat(&self.a.at(t), n, n, "LQ A")?;
            check_mat(&self.b.at(t), n, m, "LQ B")?;
            let q = self.q.at(t);
            check_mat(&q, n, n, "LQ Q")?;
            if !is_symmetric(&q) {
                return Err(Error::Model(format!("LQ Q must be symmetric (t = {t})")));
            }
            let r = self.r.at(t);
            check_mat(&r, m, m, "LQ R")?;
            if !is_symmetric(&r) {
                return Err(Error::Model(format!("LQ R must be symmetric (t = {t})")));
            }
            if m > 0 && r.clone().cholesky().is_none() {
                return Err(Error::Model(format!("LQ R must be positive definite (t = {t})")));
            }
        }
        Ok(())
    }
}

/// Builds the control system of an LQ problem.
pub fn lq_from_spec(spec: &LQSpec) -> Result<ControlSystem> {
    spec.validate()?;
    let n = spec.n();
    let m = spec.m();

    let (a, b) = (spec.a.clone(), spec.b.clone());
    let dynamics: VectorFn = Arc::new(move |t, q, u| a.at(t) * q + b.at(t) * u);
    let a = spec.a.clone();
    let dynamics_dq: MatrixFn = Arc::new(move |t, _q, _u| a.at(t));
    let b = spec.b.clone();
    let dynamics_du: MatrixFn = Arc::new(move |t, _q, _u| b.at(t));

    let (qm, rm) = (spec.q.clone(), spec.r.clone());
    let running_cost: ScalarFn = Arc::new(move |t, q, u| 0.5 * (q.dot(&(qm.at(t) * q)) + u.dot(&(rm.at(t) * u))));
    let qm = spec.q.clone();
    let running_cost_dq: VectorFn = Arc::new(move |t, q, _u| qm.at(t) * q);
    let rm = spec.r.clone();
    let running_cost_du: VectorFn = Arc::new(move |t, _q, u| rm.at(t) * u);
    let rm = spec.r.clone();
    let running_cost_duu: MatrixFn = Arc::new(move |t, _q, _u| rm.at(t));

    let target = spec.target.clone().unwrap_or_else(|| DVector::zeros(n));
    let (qf, tg) = (spec.qf.clone(), target.clone());
    let terminal_cost: TerminalFn = Arc::new(move |_t, q| {
        let d = q - &tg;
        0.5 * d.dot(&(&qf * &d))
    });
    let qf = spec.qf.clone();
    let terminal_cost_dq: TerminalGradFn = Arc::new(move |_t, q| &qf * (q - &target));

    let qm = spec.q.clone();
    let second_order: SecondOrderFn = Arc::new(move |t, _q, _p, _u| (-qm.at(t), DMatrix::zeros(n, m)));

    Ok(ControlSystem {
        n,
        m,
        dynamics,
        dynamics_dq,
        dynamics_du,
        running_cost,
        running_cost_dq,
        running_cost_du,
        running_cost_duu,
        terminal_cost,
        terminal_cost_dq,
        affinity: ControlAffinity::Affine,
        second_order: Some(second_order),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{central_gradient, central_jacobian, FD_REL_STEP};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    fn scalar_lq(a: f64, b: f64, q: f64, r: f64, qf: f64) -> LQSpec {
        LQSpec {
            a: scalar(a).into(),
            b: scalar(b).into(),
            q: scalar(q).into(),
            r: scalar(r).into(),
            qf: scalar(qf),
            target: None,
            q0: DVector::from_element(1, 1.0),
            t0: 0.0,
            t_final: 1.0,
        }
    }

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn hamiltonian_of_free_problem_by_hand() {
        let sys = lq_from_spec(&scalar_lq(0.0, 1.0, 0.0, 1.0, 0.0)).unwrap();
        let h = build_pontryagin(Arc::new(sys)).unwrap();
        let val = h.h(0.0, &v(&[1.0]), &v(&[2.0]), &v(&[3.0])).unwrap();
        assert_abs_diff_eq!(val, 1.5, epsilon = 1e-15);
    }

    #[test]
    fn inverted_stationarity_residual_vanishes_at_u_equal_p() {
        let sys = lq_from_spec(&scalar_lq(0.0, 1.0, 1.0, 1.0, 0.0)).unwrap();
        let h = build_pontryagin(Arc::new(sys)).unwrap();
        let hu = h.h_u(0.0, &v(&[1.0]), &v(&[2.0]), &v(&[2.0])).unwrap();
        assert_eq!(hu[0], 0.0);
        assert_eq!(h.h_uu(0.0, &v(&[1.0]), &v(&[2.0]), &v(&[2.0])).unwrap()[(0, 0)], -1.0);
    }

    #[test]
    fn zero_system_has_zero_hamiltonian() {
        let sys = lq_from_spec(&scalar_lq(0.0, 0.0, 0.0, 1.0, 0.0)).unwrap();
        // drop the running cost entirely
        let sys = ControlSystem {
            running_cost: Arc::new(|_, _, _| 0.0),
            running_cost_du: Arc::new(|_, _, _| DVector::zeros(1)),
            running_cost_dq: Arc::new(|_, _, _| DVector::zeros(1)),
            running_cost_duu: Arc::new(|_, _, _| DMatrix::zeros(1, 1)),
            ..sys
        };
        let h = build_pontryagin(Arc::new(sys)).unwrap();
        let (q, p, u) = (v(&[0.7]), v(&[-1.3]), v(&[2.2]));
        assert_eq!(h.h(0.3, &q, &p, &u).unwrap(), 0.0);
        assert_eq!(h.h_q(0.3, &q, &p, &u).unwrap(), v(&[0.0]));
        assert_eq!(h.h_p(0.3, &q, &p, &u).unwrap(), v(&[0.0]));
        assert_eq!(h.h_u(0.3, &q, &p, &u).unwrap(), v(&[0.0]));
    }

    #[test]
    fn double_integrator_substitution() {
        let spec = LQSpec {
            a: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]).into(),
            b: DMatrix::from_row_slice(2, 1, &[0.0, 1.0]).into(),
            q: DMatrix::zeros(2, 2).into(),
            r: scalar(1.0).into(),
            qf: DMatrix::zeros(2, 2),
            target: None,
            q0: DVector::zeros(2),
            t0: 0.0,
            t_final: 1.0,
        };
        let sys = lq_from_spec(&spec).unwrap();
        let gamma = (sys.dynamics)(0.0, &v(&[3.0, -2.0]), &v(&[0.5]));
        assert_eq!(gamma, v(&[-2.0, 0.5]));
        assert_eq!((sys.running_cost)(0.0, &v(&[3.0, -2.0]), &v(&[0.5])), 0.125);
    }

    #[test]
    fn rejects_singular_or_asymmetric_weights() {
        assert!(matches!(lq_from_spec(&scalar_lq(0.0, 1.0, 1.0, 0.0, 0.0)), Err(Error::Model(_))));
        assert!(matches!(lq_from_spec(&scalar_lq(0.0, 1.0, 1.0, -1.0, 0.0)), Err(Error::Model(_))));
        let mut spec = scalar_lq(0.0, 1.0, 1.0, 1.0, 0.0);
        spec.q0 = DVector::zeros(2);
        spec.a = DMatrix::zeros(2, 2).into();
        spec.b = DMatrix::zeros(2, 1).into();
        spec.q = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]).into();
        spec.qf = DMatrix::zeros(2, 2);
        assert!(matches!(lq_from_spec(&spec), Err(Error::Model(_))));
    }

    #[test]
    fn wrong_dimension_is_a_model_error() {
        let sys = lq_from_spec(&scalar_lq(0.0, 1.0, 1.0, 1.0, 0.0)).unwrap();
        let h = build_pontryagin(Arc::new(sys)).unwrap();
        let err = h.h(0.0, &v(&[1.0, 2.0]), &v(&[1.0]), &v(&[0.0])).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }

    fn random_lq(rng: &mut ChaCha8Rng, n: usize, m: usize) -> LQSpec {
        let mut rand_mat = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
        let a = rand_mat(n, n);
        let b = rand_mat(n, m);
        let g = rand_mat(n, n);
        let q = g.transpose() * &g;
        let k = rand_mat(m, m);
        let r = k.transpose() * &k + DMatrix::identity(m, m);
        let qf = DMatrix::identity(n, n);
        LQSpec {
            a: a.into(),
            b: b.into(),
            q: q.into(),
            r: r.into(),
            qf,
            target: Some(DVector::from_element(n, 0.3)),
            q0: DVector::zeros(n),
            t0: 0.0,
            t_final: 1.0,
        }
    }

    #[test]
    fn analytic_partials_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (n, m) in [(1, 1), (2, 1), (3, 2)] {
            let spec = random_lq(&mut rng, n, m);
            let sys = Arc::new(lq_from_spec(&spec).unwrap());
            let h = build_pontryagin(sys.clone()).unwrap();
            for _ in 0..100 {
                let mut rv = |k: usize| DVector::from_fn(k, |_, _| rng.random_range(-2.0..2.0));
                let (q, p, u) = (rv(n), rv(n), rv(m));
                let t = 0.4;
                let fq = central_gradient(|x| h.h(t, x, &p, &u), &q, FD_REL_STEP).unwrap();
                let fp = central_gradient(|x| h.h(t, &q, x, &u), &p, FD_REL_STEP).unwrap();
                let fu = central_gradient(|x| h.h(t, &q, &p, x), &u, FD_REL_STEP).unwrap();
                assert_abs_diff_eq!(fq, h.h_q(t, &q, &p, &u).unwrap(), epsilon = 1e-5);
                assert_abs_diff_eq!(fp, h.h_p(t, &q, &p, &u).unwrap(), epsilon = 1e-5);
                assert_abs_diff_eq!(fu, h.h_u(t, &q, &p, &u).unwrap(), epsilon = 1e-5);
                let fuu = central_jacobian(|x| h.h_u(t, &q, &p, x), &u, FD_REL_STEP).unwrap();
                assert_abs_diff_eq!(fuu, h.h_uu(t, &q, &p, &u).unwrap(), epsilon = 1e-5);
                let fs = central_gradient(|x| Ok((sys.terminal_cost)(t, x)), &q, FD_REL_STEP).unwrap();
                assert_abs_diff_eq!(fs, (sys.terminal_cost_dq)(t, &q), epsilon = 1e-5);
                let (hqq, hqu) = h.second_order(t, &q, &p, &u).unwrap();
                let fqq = central_jacobian(|x| h.h_q(t, x, &p, &u), &q, FD_REL_STEP).unwrap();
                let fqu = central_jacobian(|x| h.h_q(t, &q, &p, x), &u, FD_REL_STEP).unwrap();
                assert_abs_diff_eq!(fqq, hqq, epsilon = 1e-5);
                assert_abs_diff_eq!(fqu, hqu, epsilon = 1e-5);
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn h_p_is_the_dynamics_and_h_is_affine_in_p(
            q in -3.0..3.0f64, p in -3.0..3.0f64, u in -3.0..3.0f64, alpha in -2.0..2.0f64
        ) {
            let sys = Arc::new(lq_from_spec(&scalar_lq(0.3, 1.2, 0.8, 1.5, 0.0)).unwrap());
            let h = build_pontryagin(sys.clone()).unwrap();
            let (qv, pv, uv) = (v(&[q]), v(&[p]), v(&[u]));
            proptest::prop_assert_eq!(h.h_p(0.0, &qv, &pv, &uv).unwrap(), (sys.dynamics)(0.0, &qv, &uv));
            let lhs = h.h(0.0, &qv, &(&pv * alpha), &uv).unwrap() - alpha * h.h(0.0, &qv, &pv, &uv).unwrap();
            let rhs = (alpha - 1.0) * (sys.running_cost)(0.0, &qv, &uv);
            proptest::prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }
    }
}
