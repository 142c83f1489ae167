//! Discrete Hamiltonian systems on integer time
//!
//! ```text
//! Δy(t) =  H_z(t, y(t+1), z(t))
//! Δz(t) = −H_y(t, y(t+1), z(t))
//! ```
//!
//! generated by `S(y(t+1), z(t)) = z·y(t+1) − H(t, y(t+1), z(t))`. The linear
//! case `H = ½yᵀAy + zᵀBy + ½zᵀCz` gives `Δy = B y(t+1) + C z`,
//! `Δz = −A y(t+1) − Bᵀz`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{check_mat, check_vec};
use crate::numeric::{central_jacobian, newton, solve_linear, NewtonOptions, FD_HESSIAN_STEP};

/// Determinant magnitude below which a step is declared degenerate.
pub const DEGENERACY_TOL: f64 = 1e-10;

pub type IntegerTimeMatrixFn = Arc<dyn Fn(i64) -> DMatrix<f64> + Send + Sync>;

#[derive(Clone)]
pub struct LinearDHS {
    pub d: usize,
    pub a: IntegerTimeMatrixFn,
    pub b: IntegerTimeMatrixFn,
    pub c: IntegerTimeMatrixFn,
}

impl fmt::Debug for LinearDHS {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearDHS").field("d", &self.d).finish_non_exhaustive()
    }
}

fn symmetric(m: &DMatrix<f64>) -> bool {
    (m - m.transpose()).iter().all(|x| x.abs() <= 1e-12)
}

impl LinearDHS {
    /// Time-invariant system; checks shapes and symmetry of `A`, `C`.
    pub fn constant(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let d = a.nrows();
        check_mat(&a, d, d, "DHS A")?;
        check_mat(&b, d, d, "DHS B")?;
        check_mat(&c, d, d, "DHS C")?;
        if !symmetric(&a) || !symmetric(&c) {
            return Err(Error::Model("DHS A and C must be symmetric".into()));
        }
        Ok(Self {
            d,
            a: Arc::new(move |_| a.clone()),
            b: Arc::new(move |_| b.clone()),
            c: Arc::new(move |_| c.clone()),
        })
    }

    fn matrices(&self, t: i64) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
        let (a, b, c) = ((self.a)(t), (self.b)(t), (self.c)(t));
        check_mat(&a, self.d, self.d, "DHS A")?;
        check_mat(&b, self.d, self.d, "DHS B")?;
        check_mat(&c, self.d, self.d, "DHS C")?;
        Ok((a, b, c))
    }

    fn resolvent(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let m = DMatrix::identity(self.d, self.d) - b;
        m.clone().try_inverse().filter(|inv| inv.iter().all(|x| x.is_finite())).ok_or_else(|| Error::Regularity {
            what: "DHS I − B",
            condition: crate::numeric::condition_number(&m),
            matrix: m,
        })
    }

    /// The step matrix of `(y, z) ↦ (y₁, z₁)`:
    /// `[[(I−B)⁻¹, (I−B)⁻¹C], [−A(I−B)⁻¹, I − Bᵀ − A(I−B)⁻¹C]]`.
    pub fn step_matrix(&self, t: i64) -> Result<DMatrix<f64>> {
        let d = self.d;
        let (a, b, c) = self.matrices(t)?;
        let inv = self.resolvent(&b)?;
        let mut m = DMatrix::zeros(2 * d, 2 * d);
        m.view_mut((0, 0), (d, d)).copy_from(&inv);
        m.view_mut((0, d), (d, d)).copy_from(&(&inv * &c));
        m.view_mut((d, 0), (d, d)).copy_from(&(-&a * &inv));
        m.view_mut((d, d), (d, d))
            .copy_from(&(DMatrix::identity(d, d) - b.transpose() - &a * &inv * &c));
        Ok(m)
    }
}

/// `y₁ = (I−B)⁻¹(y + Cz)`, `z₁ = z − A y₁ − Bᵀz`.
pub fn step_linear(sys: &LinearDHS, t: i64, y: &DVector<f64>, z: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    check_vec(y, sys.d, "DHS y")?;
    check_vec(z, sys.d, "DHS z")?;
    let (a, b, c) = sys.matrices(t)?;
    let m = DMatrix::identity(sys.d, sys.d) - &b;
    let y1 = solve_linear(&m, &(y + &c * z), "DHS I − B")?;
    let z1 = z - &a * &y1 - b.transpose() * z;
    Ok((y1, z1))
}

type DhsValueFn = Arc<dyn Fn(i64, &DVector<f64>, &DVector<f64>) -> f64 + Send + Sync>;
type DhsGradFn = Arc<dyn Fn(i64, &DVector<f64>, &DVector<f64>) -> (DVector<f64>, DVector<f64>) + Send + Sync>;
type DhsMixedFn = Arc<dyn Fn(i64, &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// A discrete Hamiltonian `H(t, y, z)` with gradients `(H_y, H_z)` and an
/// optional analytic mixed block `∂H_z/∂y`.
#[derive(Clone)]
pub struct NonlinearDHS {
    pub d: usize,
    value: DhsValueFn,
    gradient: DhsGradFn,
    mixed: Option<DhsMixedFn>,
}

impl fmt::Debug for NonlinearDHS {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearDHS")
            .field("d", &self.d)
            .field("analytic_mixed", &self.mixed.is_some())
            .finish()
    }
}

impl NonlinearDHS {
    pub fn new<V, G>(d: usize, value: V, gradient: G) -> Self
    where
        V: Fn(i64, &DVector<f64>, &DVector<f64>) -> f64 + Send + Sync + 'static,
        G: Fn(i64, &DVector<f64>, &DVector<f64>) -> (DVector<f64>, DVector<f64>) + Send + Sync + 'static,
    {
        Self {
            d,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            mixed: None,
        }
    }

    /// Supplies `∂H_z/∂y` (row `i` holds `∂(H_z)_i/∂y`).
    pub fn with_mixed<F>(mut self, mixed: F) -> Self
    where
        F: Fn(i64, &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.mixed = Some(Arc::new(mixed));
        self
    }

    pub fn zero(d: usize) -> Self {
        Self::new(d, |_, _, _| 0.0, move |_, _, _| (DVector::zeros(d), DVector::zeros(d)))
            .with_mixed(move |_, _, _| DMatrix::zeros(d, d))
    }

    /// `H = ½yᵀAy + zᵀBy + ½zᵀCz`, which reproduces `sys` exactly.
    pub fn quadratic(sys: &LinearDHS) -> Self {
        let s = sys.clone();
        let value = move |t: i64, y: &DVector<f64>, z: &DVector<f64>| {
            let (a, b, c) = ((s.a)(t), (s.b)(t), (s.c)(t));
            0.5 * y.dot(&(&a * y)) + z.dot(&(&b * y)) + 0.5 * z.dot(&(&c * z))
        };
        let s = sys.clone();
        let gradient = move |t: i64, y: &DVector<f64>, z: &DVector<f64>| {
            let (a, b, c) = ((s.a)(t), (s.b)(t), (s.c)(t));
            (&a * y + b.transpose() * z, &b * y + &c * z)
        };
        let s = sys.clone();
        Self::new(sys.d, value, gradient).with_mixed(move |t, _, _| (s.b)(t))
    }

    pub fn value(&self, t: i64, y: &DVector<f64>, z: &DVector<f64>) -> Result<f64> {
        check_vec(y, self.d, "DHS y")?;
        check_vec(z, self.d, "DHS z")?;
        Ok((self.value)(t, y, z))
    }

    /// `(H_y, H_z)`.
    pub fn gradient(&self, t: i64, y: &DVector<f64>, z: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        check_vec(y, self.d, "DHS y")?;
        check_vec(z, self.d, "DHS z")?;
        let (hy, hz) = (self.gradient)(t, y, z);
        check_vec(&hy, self.d, "DHS gradient H_y")?;
        check_vec(&hz, self.d, "DHS gradient H_z")?;
        Ok((hy, hz))
    }

    /// `∂H_z/∂y`, analytic when supplied, otherwise a central difference of
    /// `H_z` with step 1e-5.
    pub fn mixed(&self, t: i64, y: &DVector<f64>, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        match &self.mixed {
            Some(f) => {
                let m = f(t, y, z);
                check_mat(&m, self.d, self.d, "DHS mixed block")?;
                Ok(m)
            }
            None => central_jacobian(|w| Ok(self.gradient(t, w, z)?.1), y, FD_HESSIAN_STEP),
        }
    }
}

/// `I − ∂H_z/∂y` at `(y(t+1), z(t))`, the mixed block of `z·y − H`, and its
/// determinant.
pub fn dhs_regularity(sys: &NonlinearDHS, t: i64, y_next: &DVector<f64>, z: &DVector<f64>) -> Result<(DMatrix<f64>, f64)> {
    let m = DMatrix::identity(sys.d, sys.d) - sys.mixed(t, y_next, z)?;
    let det = m.determinant();
    Ok((m, det))
}

/// Solves `y = y₁ − H_z(t, y₁, z)` for `y₁` by Newton, then
/// `z₁ = z − H_y(t, y₁, z)`.
pub fn step_nonlinear(
    sys: &NonlinearDHS,
    t: i64,
    y: &DVector<f64>,
    z: &DVector<f64>,
    y_guess: Option<&DVector<f64>>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_vec(y, sys.d, "DHS y")?;
    check_vec(z, sys.d, "DHS z")?;
    let guess = y_guess.cloned().unwrap_or_else(|| y.clone());
    let degenerate = |det: f64| {
        Error::Step(format!(
            "DHS step at t = {t} is degenerate: det(I − H_zy) = {det:.3e}"
        ))
    };
    let sol = newton(
        guess,
        |w| Ok(w - sys.gradient(t, w, z)?.1 - y),
        |w| {
            let (m, det) = dhs_regularity(sys, t, w, z)?;
            if det.abs() < DEGENERACY_TOL {
                return Err(degenerate(det));
            }
            Ok(m)
        },
        &NewtonOptions::default(),
        "DHS implicit position",
    )
    .map_err(|e| match e {
        Error::Convergence { iterations, residual, .. } => Error::Step(format!(
            "DHS step at t = {t}: Newton stalled after {iterations} iterations (residual {residual:.3e})"
        )),
        Error::Regularity { condition, .. } => {
            Error::Step(format!("DHS step at t = {t}: singular mixed block (condition {condition:.3e})"))
        }
        other => other,
    })?;
    let y1 = sol.x;
    let (_, det) = dhs_regularity(sys, t, &y1, z)?;
    if det.abs() < DEGENERACY_TOL {
        return Err(degenerate(det));
    }
    let z1 = z - sys.gradient(t, &y1, z)?.0;
    Ok((y1, z1))
}
