//! Dense numerical kernels shared by the integrators and solvers: central
//! finite differences, a damped Newton iteration and small linear-algebra
//! helpers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative step used for first-derivative finite differences.
pub const FD_REL_STEP: f64 = 1e-6;

/// Relative step used when differencing analytic gradients into Hessians.
pub const FD_HESSIAN_STEP: f64 = 1e-5;

/// Finite-difference step `rel * max(1, |x|)`.
#[inline]
pub fn fd_step(x: f64, rel: f64) -> f64 {
    rel * x.abs().max(1.0)
}

/// Max-abs norm. Zero for empty vectors.
pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| {
        if x.is_nan() || acc.is_nan() {
            f64::NAN
        } else {
            acc.max(x.abs())
        }
    })
}

/// Max-abs entry of a matrix.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Central-difference Jacobian of `f` at `x`, one column per coordinate.
pub fn central_jacobian<F>(mut f: F, x: &DVector<f64>, rel: f64) -> Result<DMatrix<f64>>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let n = x.len();
    if n == 0 {
        let rows = f(x)?.len();
        return Ok(DMatrix::zeros(rows, 0));
    }
    let mut xs = x.clone();
    let mut columns = Vec::with_capacity(n);
    for j in 0..n {
        let step = fd_step(x[j], rel);
        let hi = x[j] + step;
        let lo = x[j] - step;
        xs[j] = hi;
        let fp = f(&xs)?;
        xs[j] = lo;
        let fm = f(&xs)?;
        xs[j] = x[j];
        if fp.len() != fm.len() {
            return Err(Error::Dimension {
                what: "finite-difference stencil",
                expected: (fp.len(), 1),
                got: (fm.len(), 1),
            });
        }
        columns.push((fp - fm) / (hi - lo));
    }
    Ok(DMatrix::from_columns(&columns))
}

/// Central-difference gradient of a scalar function.
pub fn central_gradient<F>(mut f: F, x: &DVector<f64>, rel: f64) -> Result<DVector<f64>>
where
    F: FnMut(&DVector<f64>) -> Result<f64>,
{
    let mut xs = x.clone();
    let mut g = DVector::zeros(x.len());
    for j in 0..x.len() {
        let step = fd_step(x[j], rel);
        let hi = x[j] + step;
        let lo = x[j] - step;
        xs[j] = hi;
        let fp = f(&xs)?;
        xs[j] = lo;
        let fm = f(&xs)?;
        xs[j] = x[j];
        g[j] = (fp - fm) / (hi - lo);
    }
    Ok(g)
}

/// Canonical skew matrix `[[0, I], [-I, 0]]` of size `2n`.
pub fn canonical_form(n: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        s[(i, n + i)] = 1.0;
        s[(n + i, i)] = -1.0;
    }
    s
}

/// Ratio of extreme singular values; infinite for singular or empty-rank input.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves `a x = b` by LU, reporting a singular `a` as a regularity failure.
pub fn solve_linear(a: &DMatrix<f64>, b: &DVector<f64>, what: &'static str) -> Result<DVector<f64>> {
    let singular = || Error::Regularity {
        what,
        condition: condition_number(a),
        matrix: a.clone(),
    };
    let x = a.clone().lu().solve(b).ok_or_else(singular)?;
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(singular())
    }
}

/// Least-squares slope of `ys` against `xs`.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len().min(ys.len()) as f64;
    if n < 2.0 {
        return f64::NAN;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonOptions {
    /// Convergence threshold on the residual max-norm.
    pub tol: f64,
    pub max_iter: usize,
    /// Step halvings tried when a full step does not reduce the residual.
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 50,
            max_halvings: 30,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NewtonSolution {
    pub x: DVector<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Damped Newton iteration on `residual(x) = 0`.
///
/// A trial step is halved until the residual max-norm decreases. Solver
/// failures raised inside `residual` at a trial point count as an infinite
/// residual; input errors propagate.
pub fn newton<R, J>(
    x0: DVector<f64>,
    residual: R,
    jacobian: J,
    opts: &NewtonOptions,
    what: &'static str,
) -> Result<NewtonSolution>
where
    R: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
    J: FnMut(&DVector<f64>) -> Result<DMatrix<f64>>,
{
    damped_newton(x0, residual, jacobian, |a, b| solve_linear(a, b, what), opts, what)
}

/// Minimum-norm least-squares solve via SVD, for Jacobians that may be rank
/// deficient.
pub fn solve_least_squares(a: &DMatrix<f64>, b: &DVector<f64>, what: &'static str) -> Result<DVector<f64>> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let eps = smax * 1e-13 * a.nrows().max(a.ncols()) as f64;
    let x = svd.solve(b, eps).map_err(|e| Error::Step(format!("{what}: {e}")))?;
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::Regularity {
            what,
            condition: condition_number(a),
            matrix: a.clone(),
        })
    }
}

/// Newton iteration with a finite-difference Jacobian solved in the
/// least-squares sense.
pub fn newton_fd_least_squares<R>(
    x0: DVector<f64>,
    residual: R,
    opts: &NewtonOptions,
    what: &'static str,
) -> Result<NewtonSolution>
where
    R: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    damped_newton(
        x0,
        &residual,
        |x: &DVector<f64>| central_jacobian(&residual, x, FD_REL_STEP),
        |a, b| solve_least_squares(a, b, what),
        opts,
        what,
    )
}

fn damped_newton<R, J, S>(
    x0: DVector<f64>,
    mut residual: R,
    mut jacobian: J,
    solve: S,
    opts: &NewtonOptions,
    what: &'static str,
) -> Result<NewtonSolution>
where
    R: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
    J: FnMut(&DVector<f64>) -> Result<DMatrix<f64>>,
    S: Fn(&DMatrix<f64>, &DVector<f64>) -> Result<DVector<f64>>,
{
    let mut x = x0;
    let mut r = residual(&x)?;
    let mut norm = inf_norm(&r);
    if !norm.is_finite() {
        return Err(Error::Convergence {
            what,
            iterations: 0,
            residual: norm,
        });
    }
    for it in 0..opts.max_iter {
        if norm <= opts.tol {
            return Ok(NewtonSolution {
                x,
                residual: norm,
                iterations: it,
            });
        }
        let jac = jacobian(&x)?;
        let dx = solve(&jac, &r)?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let trial = &x - &dx * lambda;
            match residual(&trial) {
                Ok(rt) => {
                    let nt = inf_norm(&rt);
                    if nt.is_finite() && nt < norm {
                        x = trial;
                        r = rt;
                        norm = nt;
                        accepted = true;
                        break;
                    }
                }
                Err(e) if e.is_solver_failure() => {}
                Err(e) => return Err(e),
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::Convergence {
                what,
                iterations: it + 1,
                residual: norm,
            });
        }
    }
    if norm <= opts.tol {
        Ok(NewtonSolution {
            x,
            residual: norm,
            iterations: opts.max_iter,
        })
    } else {
        Err(Error::Convergence {
            what,
            iterations: opts.max_iter,
            residual: norm,
        })
    }
}

/// Newton iteration whose Jacobian is a central finite difference of the residual.
pub fn newton_fd<R>(x0: DVector<f64>, residual: R, opts: &NewtonOptions, what: &'static str) -> Result<NewtonSolution>
where
    R: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    newton(
        x0,
        &residual,
        |x: &DVector<f64>| central_jacobian(&residual, x, FD_REL_STEP),
        opts,
        what,
    )
}
