//! Elimination of the control through the stationarity condition `H_u = 0`.
//!
//! [`solve_stationarity`] runs Newton's method on `H_u(t, q, p, ·) = 0` with
//! the exact `H_uu`; [`ReducedHamiltonian`] exposes `H̃(t, q, p) =
//! H(t, q, p, u*(t, q, p))` as a [`Hamiltonian`]. Because `H_u` vanishes at
//! `u*`, the gradient of `H̃` equals the partial gradient of `H` at `u*`.

use std::cell::RefCell;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hamiltonian::{fd_hessian, Hamiltonian, PhaseGradient};
use crate::model::{check_vec, PontryaginEvaluator};
use crate::numeric::{condition_number, newton, NewtonOptions};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EliminationConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Start each solve from the previous `u*` along a trajectory.
    pub warm_start: bool,
}

impl Default for EliminationConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 50,
            warm_start: true,
        }
    }
}

impl EliminationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidInput(format!(
                "elimination needs tol > 0 and max_iter >= 1 (got tol = {}, max_iter = {})",
                self.tol, self.max_iter
            )));
        }
        Ok(())
    }
}

/// Definiteness of `H_uu` at the stationary control. Reported, not certified.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Curvature {
    /// `u*` is a local maximizer of `H` (the usual case for convex costs).
    NegativeDefinite,
    PositiveDefinite,
    Indefinite,
}

#[derive(Clone, Debug)]
pub struct Stationary {
    pub u: DVector<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub curvature: Curvature,
}

fn curvature_of(huu: &DMatrix<f64>) -> Curvature {
    if huu.is_empty() {
        return Curvature::NegativeDefinite;
    }
    let eig = huu.clone().symmetric_eigen().eigenvalues;
    if eig.iter().all(|&l| l < 0.0) {
        Curvature::NegativeDefinite
    } else if eig.iter().all(|&l| l > 0.0) {
        Curvature::PositiveDefinite
    } else {
        Curvature::Indefinite
    }
}

/// Solves `H_u(t, q, p, u) = 0` for `u` starting at `u_guess`.
pub fn solve_stationarity(
    base: &PontryaginEvaluator,
    t: f64,
    q: &DVector<f64>,
    p: &DVector<f64>,
    u_guess: &DVector<f64>,
    cfg: &EliminationConfig,
) -> Result<Stationary> {
    cfg.validate()?;
    check_vec(u_guess, base.m(), "control guess")?;
    if base.m() == 0 {
        return Ok(Stationary {
            u: DVector::zeros(0),
            iterations: 0,
            residual: 0.0,
            curvature: Curvature::NegativeDefinite,
        });
    }
    let opts = NewtonOptions {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        max_halvings: 30,
    };
    let sol = newton(
        u_guess.clone(),
        |u| base.h_u(t, q, p, u),
        |u| base.h_uu(t, q, p, u),
        &opts,
        "stationarity Hessian H_uu",
    )?;
    let huu = base.h_uu(t, q, p, &sol.x)?;
    let condition = condition_number(&huu);
    if !(condition < 1.0 / cfg.tol) {
        return Err(Error::Regularity {
            what: "stationarity Hessian H_uu",
            condition,
            matrix: huu,
        });
    }
    Ok(Stationary {
        u: sol.x,
        iterations: sol.iterations,
        residual: sol.residual,
        curvature: curvature_of(&huu),
    })
}

/// `H̃(t, q, p) = H(t, q, p, u*(t, q, p))`.
#[derive(Clone, Debug)]
pub struct ReducedHamiltonian {
    base: PontryaginEvaluator,
    config: EliminationConfig,
    autonomous: bool,
}

impl ReducedHamiltonian {
    pub fn new(base: PontryaginEvaluator, config: EliminationConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            base,
            config,
            autonomous: false,
        })
    }

    /// Declares that the underlying problem does not depend on time.
    pub fn autonomous(mut self, yes: bool) -> Self {
        self.autonomous = yes;
        self
    }

    pub fn base(&self) -> &PontryaginEvaluator {
        &self.base
    }

    pub fn config(&self) -> &EliminationConfig {
        &self.config
    }

    /// Solves for `u*` from the given guess (zero when `None`).
    pub fn eliminate(
        &self,
        t: f64,
        q: &DVector<f64>,
        p: &DVector<f64>,
        guess: Option<&DVector<f64>>,
    ) -> Result<Stationary> {
        let zero = DVector::zeros(self.base.m());
        solve_stationarity(&self.base, t, q, p, guess.unwrap_or(&zero), &self.config)
    }

    fn gradient_at(&self, t: f64, q: &DVector<f64>, p: &DVector<f64>, u: &DVector<f64>) -> Result<PhaseGradient> {
        Ok(PhaseGradient {
            dq: self.base.h_q(t, q, p, u)?,
            dp: self.base.h_p(t, q, p, u)?,
        })
    }

    /// Reduced Hessian by implicit differentiation,
    /// `H̃_xx = H_xx − H_xu H_uu⁻¹ H_ux` with `x = (q, p)`, when the system
    /// supplies `H_qq` and `H_qu`.
    fn hessian_at(&self, t: f64, q: &DVector<f64>, p: &DVector<f64>, u: &DVector<f64>) -> Result<Option<DMatrix<f64>>> {
        let Some((hqq, hqu)) = self.base.second_order(t, q, p, u) else {
            return Ok(None);
        };
        let n = self.base.n();
        let m = self.base.m();
        let sys = self.base.system();
        let gq = (sys.dynamics_dq)(t, q, u);
        let gu = (sys.dynamics_du)(t, q, u);
        let mut hxx = DMatrix::zeros(2 * n, 2 * n);
        hxx.view_mut((0, 0), (n, n)).copy_from(&hqq);
        hxx.view_mut((0, n), (n, n)).copy_from(&gq.transpose());
        hxx.view_mut((n, 0), (n, n)).copy_from(&gq);
        if m == 0 {
            return Ok(Some(hxx));
        }
        let mut hxu = DMatrix::zeros(2 * n, m);
        hxu.view_mut((0, 0), (n, m)).copy_from(&hqu);
        hxu.view_mut((n, 0), (n, m)).copy_from(&gu);
        let huu = self.base.h_uu(t, q, p, u)?;
        let sol = huu.clone().lu().solve(&hxu.transpose()).ok_or_else(|| Error::Regularity {
            what: "stationarity Hessian H_uu",
            condition: condition_number(&huu),
            matrix: huu.clone(),
        })?;
        let h = hxx - &hxu * sol;
        Ok(Some((&h + h.transpose()) * 0.5))
    }
}

/// `(H̃_q, H̃_p)` at `(t, q, p)`.
pub fn reduced_grad(rh: &ReducedHamiltonian, t: f64, q: &DVector<f64>, p: &DVector<f64>) -> Result<PhaseGradient> {
    rh.gradient(t, q, p)
}

impl Hamiltonian for ReducedHamiltonian {
    fn dim(&self) -> usize {
        self.base.n()
    }

    fn control_dim(&self) -> usize {
        self.base.m()
    }

    fn is_autonomous(&self) -> bool {
        self.autonomous
    }

    fn value(&self, t: f64, q: &DVector<f64>, p: &DVector<f64>) -> Result<f64> {
        let s = self.eliminate(t, q, p, None)?;
        self.base.h(t, q, p, &s.u)
    }

    fn gradient(&self, t: f64, q: &DVector<f64>, p: &DVector<f64>) -> Result<PhaseGradient> {
        let s = self.eliminate(t, q, p, None)?;
        self.gradient_at(t, q, p, &s.u)
    }

    fn hessian(&self, t: f64, q: &DVector<f64>, p: &DVector<f64>) -> Result<DMatrix<f64>> {
        let s = self.eliminate(t, q, p, None)?;
        match self.hessian_at(t, q, p, &s.u)? {
            Some(h) => Ok(h),
            None => fd_hessian(self, t, q, p),
        }
    }

    fn control(&self, t: f64, q: &DVector<f64>, p: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.eliminate(t, q, p, None)?.u)
    }
}

/// Per-trajectory view of a [`ReducedHamiltonian`] that seeds each
/// elimination with the previous `u*`. Not shareable across threads.
#[derive(Debug)]
pub struct WarmStarted<'a> {
    rh: &'a ReducedHamiltonian,
    last: RefCell<Option<DVector<f64>>>,
}

impl<'a> WarmStarted<'a> {
    pub fn new(rh: &'a ReducedHamiltonian) -> Self {
        Self {
            rh,
            last: RefCell::new(None),
        }
    }

    fn solve(&self, t: f64, q: &DVector<f64>, p: &DVector<f64>) -> Result<DVector<f64>> {
        let guess = if self.rh.config.warm_start {
            self.last.borrow().clone()
        } else {
            None
        };
        let s = match self.rh.eliminate(t, q, p, guess.as_ref()) {
            Ok(s) => s,
            // a stale guess may sit on another branch or outside the basin
            Err(_) if guess.is_some() => self.rh.eliminate(t, q, p, None)?,
            Err(e) => return Err(e),
        };
        *self.last.borrow_mut() = Some(s.u.clone());
        Ok(s.u)
    }
}

impl Hamiltonian for WarmStarted<'_> {
    fn dim(&self) -> usize {
        self.rh.dim()
    }
    fn control_dim(&self) -> usize {
        self.rh.control_dim()
    }
    fn is_autonomous(&self) -> bool {
        self.rh.is_autonomous()
    }
    fn value(&self, t: f64, q: &DVector<f64>, p: &DVector<f64>) -> Result<f64> {
        let u = self.solve(t, q, p)?;
        self.rh.base.h(t, q, p, &u)
    }
    fn gradient(&self, t: f64, q: &DVector<f64>, p: &DVector<f64>) -> Result<PhaseGradient> {
        let u = self.solve(t, q, p)?;
        self.rh.gradient_at(t, q, p, &u)
    }
    fn hessian(&self, t: f64, q: &DVector<f64>, p: &DVector<f64>) -> Result<DMatrix<f64>> {
        let u = self.solve(t, q, p)?;
        match self.rh.hessian_at(t, q, p, &u)? {
            Some(h) => Ok(h),
            None => fd_hessian(self, t, q, p),
        }
    }
    fn control(&self, t: f64, q: &DVector<f64>, p: &DVector<f64>) -> Result<DVector<f64>> {
        self.solve(t, q, p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_pontryagin, lq_from_spec, ControlAffinity, ControlSystem, LQSpec};
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn scalar_lq(b: f64, q: f64, r: f64) -> PontryaginEvaluator {
        let s = |x| DMatrix::from_element(1, 1, x);
        let spec = LQSpec {
            a: s(0.0).into(),
            b: s(b).into(),
            q: s(q).into(),
            r: s(r).into(),
            qf: s(0.0),
            target: None,
            q0: v(&[0.0]),
            t0: 0.0,
            t_final: 1.0,
        };
        build_pontryagin(Arc::new(lq_from_spec(&spec).unwrap())).unwrap()
    }

    #[test]
    fn inverted_control_is_costate() {
        let base = scalar_lq(1.0, 1.0, 1.0);
        let s = solve_stationarity(&base, 0.0, &v(&[1.0]), &v(&[2.0]), &v(&[0.0]), &Default::default()).unwrap();
        assert_abs_diff_eq!(s.u[0], 2.0, epsilon = 1e-12);
        assert_eq!(s.curvature, Curvature::NegativeDefinite);
    }

    #[test]
    fn lq_closed_form_control() {
        let base = scalar_lq(1.0, 0.0, 2.0);
        let s = solve_stationarity(&base, 0.0, &v(&[0.4]), &v(&[3.0]), &v(&[0.0]), &Default::default()).unwrap();
        assert_abs_diff_eq!(s.u[0], 1.5, epsilon = 1e-12);
    }

    #[test]
    fn uncontrolled_quadratic_cost_gives_zero_control() {
        let base = scalar_lq(0.0, 0.0, 1.0);
        for (q, p) in [(1.0, 2.0), (-3.0, 0.5), (0.0, 0.0)] {
            let s = solve_stationarity(&base, 0.0, &v(&[q]), &v(&[p]), &v(&[0.7]), &Default::default()).unwrap();
            assert_abs_diff_eq!(s.u[0], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn warm_start_from_solution_needs_no_iteration() {
        let base = scalar_lq(1.0, 1.0, 1.0);
        let cfg = EliminationConfig::default();
        let s = solve_stationarity(&base, 0.0, &v(&[1.0]), &v(&[-0.3]), &v(&[5.0]), &cfg).unwrap();
        let again = solve_stationarity(&base, 0.0, &v(&[1.0]), &v(&[-0.3]), &s.u, &cfg).unwrap();
        assert!(again.iterations <= 1);
    }

    fn degenerate_system() -> ControlSystem {
        // Γ = u, L = 0: H_uu ≡ 0
        ControlSystem {
            n: 1,
            m: 1,
            dynamics: Arc::new(|_, _, u| u.clone()),
            dynamics_dq: Arc::new(|_, _, _| DMatrix::zeros(1, 1)),
            dynamics_du: Arc::new(|_, _, _| DMatrix::identity(1, 1)),
            running_cost: Arc::new(|_, _, _| 0.0),
            running_cost_dq: Arc::new(|_, _, _| DVector::zeros(1)),
            running_cost_du: Arc::new(|_, _, _| DVector::zeros(1)),
            running_cost_duu: Arc::new(|_, _, _| DMatrix::zeros(1, 1)),
            terminal_cost: Arc::new(|_, _| 0.0),
            terminal_cost_dq: Arc::new(|_, _| DVector::zeros(1)),
            affinity: ControlAffinity::Affine,
            second_order: None,
        }
    }

    #[test]
    fn singular_hessian_is_a_regularity_error() {
        let base = build_pontryagin(Arc::new(degenerate_system())).unwrap();
        let err = solve_stationarity(&base, 0.0, &v(&[0.0]), &v(&[1.0]), &v(&[0.0]), &Default::default()).unwrap_err();
        match err {
            Error::Regularity { matrix, .. } => assert_eq!(matrix, DMatrix::zeros(1, 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nonlinear_control_converges_with_damping() {
        // Γ = u, L = cosh(u) − 1  ⇒  H_u = p − sinh(u)
        let sys = ControlSystem {
            running_cost: Arc::new(|_, _, u: &DVector<f64>| u[0].cosh() - 1.0),
            running_cost_du: Arc::new(|_, _, u: &DVector<f64>| v(&[u[0].sinh()])),
            running_cost_duu: Arc::new(|_, _, u: &DVector<f64>| DMatrix::from_element(1, 1, u[0].cosh())),
            ..degenerate_system()
        };
        let base = build_pontryagin(Arc::new(sys)).unwrap();
        let s = solve_stationarity(&base, 0.0, &v(&[0.0]), &v(&[20.0]), &v(&[0.0]), &Default::default()).unwrap();
        assert_abs_diff_eq!(s.u[0], 20f64.asinh(), epsilon = 1e-12);
    }

    #[test]
    fn non_convergence_reports_residual() {
        let sys = ControlSystem {
            running_cost: Arc::new(|_, _, u: &DVector<f64>| u[0].cosh() - 1.0),
            running_cost_du: Arc::new(|_, _, u: &DVector<f64>| v(&[u[0].sinh()])),
            running_cost_duu: Arc::new(|_, _, u: &DVector<f64>| DMatrix::from_element(1, 1, u[0].cosh())),
            ..degenerate_system()
        };
        let base = build_pontryagin(Arc::new(sys)).unwrap();
        let cfg = EliminationConfig {
            max_iter: 1,
            ..Default::default()
        };
        let err = solve_stationarity(&base, 0.0, &v(&[0.0]), &v(&[1e6]), &v(&[0.0]), &cfg).unwrap_err();
        assert!(matches!(err, Error::Convergence { iterations: 1, .. }));
    }
}
