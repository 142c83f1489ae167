//! Hamiltonians on the reduced phase space `(t, q, p)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::model::{check_mat, check_vec, stack, PhasePoint};
use crate::numeric::{central_jacobian, FD_HESSIAN_STEP};

/// Gradient `(∂H/∂q, ∂H/∂p)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseGradient {
    pub dq: DVector<f64>,
    pub dp: DVector<f64>,
}

/// A Hamiltonian `H(t, q, p)` with its first derivatives.
///
/// Hessians are in stacked `(q, p)` ordering; the default is a central
/// difference of [`Hamiltonian::gradient`].
pub trait Hamiltonian {
    fn dim(&self) -> usize;

    /// Control dimension recorded alongside trajectories (zero when the
    /// Hamiltonian is specified directly).
    fn control_dim(&self) -> usize {
        0
    }

    fn is_autonomous(&self) -> bool;

    fn value(&self, t: f64, q: &DVector<f64>, p: &DVector<f64>) -> Result<f64>;

    fn gradient(&self, t: f64, q: &DVector<f64>, p: &DVector<f64>) -> Result<PhaseGradient>;

    fn hessian(&self, t: f64, q: &DVector<f64>, p: &DVector<f64>) -> Result<DMatrix<f64>> {
        fd_hessian(self, t, q, p)
    }

    /// The control attached to a phase point (`u*(t, q, p)`), if any.
    fn control(&self, _t: f64, _q: &DVector<f64>, _p: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(DVector::zeros(0))
    }
}

/// Central difference of the gradient with step `1e-5·max(1, |x|)`, symmetrized.
pub fn fd_hessian<H: Hamiltonian + ?Sized>(
    ham: &H,
    t: f64,
    q: &DVector<f64>,
    p: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let n = ham.dim();
    let x = stack(q, p);
    let jac = central_jacobian(
        |x| {
            let pt = PhasePoint::unstack(t, x);
            let g = ham.gradient(t, &pt.q, &pt.p)?;
            Ok(stack(&g.dq, &g.dp))
        },
        &x,
        FD_HESSIAN_STEP,
    )?;
    debug_assert_eq!(jac.shape(), (2 * n, 2 * n));
    Ok((&jac + jac.transpose()) * 0.5)
}

impl<H: Hamiltonian + ?Sized> Hamiltonian for &H {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn control_dim(&self) -> usize {
        (**self).control_dim()
    }
    fn is_autonomous(&self) -> bool {
        (**self).is_autonomous()
    }
    fn value(&self, t: f64, q: &DVector<f64>, p: &DVector<f64>) -> Result<f64> {
        (**self).value(t, q, p)
    }
    fn gradient(&self, t: f64, q: &DVector<f64>, p: &DVector<f64>) -> Result<PhaseGradient> {
        (**self).gradient(t, q, p)
    }
    fn hessian(&self, t: f64, q: &DVector<f64>, p: &DVector<f64>) -> Result<DMatrix<f64>> {
        (**self).hessian(t, q, p)
    }
    fn control(&self, t: f64, q: &DVector<f64>, p: &DVector<f64>) -> Result<DVector<f64>> {
        (**self).control(t, q, p)
    }
}

impl<H: Hamiltonian + ?Sized> Hamiltonian for Arc<H> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn control_dim(&self) -> usize {
        (**self).control_dim()
    }
    fn is_autonomous(&self) -> bool {
        (**self).is_autonomous()
    }
    fn value(&self, t: f64, q: &DVector<f64>, p: &DVector<f64>) -> Result<f64> {
        (**self).value(t, q, p)
    }
    fn gradient(&self, t: f64, q: &DVector<f64>, p: &DVector<f64>) -> Result<PhaseGradient> {
        (**self).gradient(t, q, p)
    }
    fn hessian(&self, t: f64, q: &DVector<f64>, p: &DVector<f64>) -> Result<DMatrix<f64>> {
        (**self).hessian(t, q, p)
    }
    fn control(&self, t: f64, q: &DVector<f64>, p: &DVector<f64>) -> Result<DVector<f64>> {
        (**self).control(t, q, p)
    }
}

type ValueFn = Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> (DVector<f64>, DVector<f64>) + Send + Sync>;
type HessFn = Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// A Hamiltonian given directly by closures, bypassing control elimination.
#[derive(Clone)]
pub struct DirectHamiltonian {
    n: usize,
    autonomous: bool,
    value: ValueFn,
    gradient: GradFn,
    hessian: Option<HessFn>,
}

impl fmt::Debug for DirectHamiltonian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DirectHamiltonian")
            .field("n", &self.n)
            .field("autonomous", &self.autonomous)
            .field("analytic_hessian", &self.hessian.is_some())
            .finish()
    }
}

impl DirectHamiltonian {
    pub fn new<V, G>(n: usize, autonomous: bool, value: V, gradient: G) -> Self
    where
        V: Fn(f64, &DVector<f64>, &DVector<f64>) -> f64 + Send + Sync + 'static,
        G: Fn(f64, &DVector<f64>, &DVector<f64>) -> (DVector<f64>, DVector<f64>) + Send + Sync + 'static,
    {
        Self {
            n,
            autonomous,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            hessian: None,
        }
    }

    pub fn with_hessian<F>(mut self, hessian: F) -> Self
    where
        F: Fn(f64, &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.hessian = Some(Arc::new(hessian));
        self
    }

    /// `H = ½(|p|² + |q|²)`.
    pub fn harmonic_oscillator(n: usize) -> Self {
        Self::new(
            n,
            true,
            |_, q, p| 0.5 * (p.norm_squared() + q.norm_squared()),
            |_, q, p| (q.clone(), p.clone()),
        )
        .with_hessian(move |_, _, _| DMatrix::identity(2 * n, 2 * n))
    }

    /// The zero Hamiltonian.
    pub fn zero(n: usize) -> Self {
        Self::new(n, true, |_, _, _| 0.0, move |_, _, _| (DVector::zeros(n), DVector::zeros(n)))
            .with_hessian(move |_, _, _| DMatrix::zeros(2 * n, 2 * n))
    }
}

impl Hamiltonian for DirectHamiltonian {
    fn dim(&self) -> usize {
        self.n
    }

    fn is_autonomous(&self) -> bool {
        self.autonomous
    }

    fn value(&self, t: f64, q: &DVector<f64>, p: &DVector<f64>) -> Result<f64> {
        check_vec(q, self.n, "state")?;
        check_vec(p, self.n, "costate")?;
        Ok((self.value)(t, q, p))
    }

    fn gradient(&self, t: f64, q: &DVector<f64>, p: &DVector<f64>) -> Result<PhaseGradient> {
        check_vec(q, self.n, "state")?;
        check_vec(p, self.n, "costate")?;
        let (dq, dp) = (self.gradient)(t, q, p);
        check_vec(&dq, self.n, "Hamiltonian gradient dq")?;
        check_vec(&dp, self.n, "Hamiltonian gradient dp")?;
        Ok(PhaseGradient { dq, dp })
    }

    fn hessian(&self, t: f64, q: &DVector<f64>, p: &DVector<f64>) -> Result<DMatrix<f64>> {
        match &self.hessian {
            Some(f) => {
                let h = f(t, q, p);
                check_mat(&h, 2 * self.n, 2 * self.n, "Hamiltonian Hessian")?;
                Ok(h)
            }
            None => fd_hessian(self, t, q, p),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn fd_hessian_matches_analytic_for_oscillator() {
        let osc = DirectHamiltonian::harmonic_oscillator(2);
        let q = DVector::from_vec(vec![0.3, -0.4]);
        let p = DVector::from_vec(vec![1.1, 0.2]);
        let fd = fd_hessian(&osc, 0.0, &q, &p).unwrap();
        assert_abs_diff_eq!(fd, osc.hessian(0.0, &q, &p).unwrap(), epsilon = 1e-9);
    }
}
