//! Higher-order maps from the truncated Hamilton–Jacobi series of a
//! second-kind generating function,
//!
//! ```text
//! S₂ʰ(q₀, p₁) = q₀·p₁ + Σ_{i=1..r} hⁱ Gᵢ(q₀, p₁)
//! G₁ = H
//! G₂ = ½ H_q·H_p
//! G₃ = ⅙ (H_qᵀ H_pp H_q + H_qᵀ H_pq H_p + H_pᵀ H_qq H_p)
//! ```
//!
//! with the map defined by `p₀ = ∂S₂/∂q₀`, `q₁ = ∂S₂/∂p₁`. Time is frozen at
//! the left end of the step, so on nonautonomous problems the order is
//! limited by the frozen-time error.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hamiltonian::{Hamiltonian, PhaseGradient};
use crate::integrators::gf2::step_failure;
use crate::model::{stack, PhasePoint};
use crate::numeric::{central_gradient, newton_fd, NewtonOptions, FD_REL_STEP};

pub const MAX_SERIES_ORDER: usize = 3;

/// The truncated generating series of a Hamiltonian.
#[derive(Clone, Copy, Debug)]
pub struct GeneratingSeries<'a, H: ?Sized> {
    ham: &'a H,
    order: usize,
}

struct Derivatives {
    g: PhaseGradient,
    hess: DMatrix<f64>,
}

fn g3_from(d: &Derivatives, n: usize) -> f64 {
    let k = &d.hess;
    let kqq = k.view((0, 0), (n, n));
    let kpq = k.view((n, 0), (n, n));
    let kpp = k.view((n, n), (n, n));
    let (hq, hp) = (&d.g.dq, &d.g.dp);
    (hq.dot(&(kpp * hq)) + hq.dot(&(kpq * hp)) + hp.dot(&(kqq * hp))) / 6.0
}

impl<'a, H: Hamiltonian + ?Sized> GeneratingSeries<'a, H> {
    pub fn new(ham: &'a H, order: usize) -> Result<Self> {
        if !(1..=MAX_SERIES_ORDER).contains(&order) {
            return Err(Error::InvalidInput(format!(
                "series order must be in 1..={MAX_SERIES_ORDER} (got {order})"
            )));
        }
        Ok(Self { ham, order })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    fn derivatives(&self, t: f64, q0: &DVector<f64>, p1: &DVector<f64>) -> Result<Derivatives> {
        Ok(Derivatives {
            g: self.ham.gradient(t, q0, p1)?,
            hess: self.ham.hessian(t, q0, p1)?,
        })
    }

    fn g3(&self, t: f64, q0: &DVector<f64>, p1: &DVector<f64>) -> Result<f64> {
        Ok(g3_from(&self.derivatives(t, q0, p1)?, self.ham.dim()))
    }

    /// `[G₁, G₂, G₃]` at `(q₀, p₁)` with time frozen at `t`. All three are
    /// returned regardless of the truncation order.
    pub fn coefficients(&self, t: f64, q0: &DVector<f64>, p1: &DVector<f64>) -> Result<[f64; 3]> {
        let d = self.derivatives(t, q0, p1)?;
        Ok([
            self.ham.value(t, q0, p1)?,
            0.5 * d.g.dq.dot(&d.g.dp),
            g3_from(&d, self.ham.dim()),
        ])
    }

    /// Gradients of `G₁..G_r` in `(q₀, p₁)`.
    ///
    /// `∇G₁` is the Hamiltonian gradient and `∇G₂` follows from the Hessian;
    /// `∇G₃` is a central difference of `G₃`.
    pub fn coefficient_gradients(&self, t: f64, q0: &DVector<f64>, p1: &DVector<f64>) -> Result<Vec<PhaseGradient>> {
        let n = self.ham.dim();
        let d = self.derivatives(t, q0, p1)?;
        let mut out = vec![d.g.clone()];
        if self.order >= 2 {
            let k = &d.hess;
            let grad = (k.columns(0, n) * &d.g.dp + k.columns(n, n) * &d.g.dq) * 0.5;
            out.push(split(&grad, n));
        }
        if self.order >= 3 {
            let grad = central_gradient(
                |x| {
                    let pt = PhasePoint::unstack(t, x);
                    self.g3(t, &pt.q, &pt.p)
                },
                &stack(q0, p1),
                FD_REL_STEP,
            )?;
            out.push(split(&grad, n));
        }
        Ok(out)
    }

    /// `S₂ʰ(q₀, p₁)`.
    pub fn value(&self, t: f64, q0: &DVector<f64>, p1: &DVector<f64>, h: f64) -> Result<f64> {
        let g = self.coefficients(t, q0, p1)?;
        Ok(q0.dot(p1) + (1..=self.order).map(|i| h.powi(i as i32) * g[i - 1]).sum::<f64>())
    }

    /// `(∂S₂ʰ/∂q₀, ∂S₂ʰ/∂p₁)`.
    pub fn partials(&self, t: f64, q0: &DVector<f64>, p1: &DVector<f64>, h: f64) -> Result<PhaseGradient> {
        let mut dq = p1.clone();
        let mut dp = q0.clone();
        for (i, g) in self.coefficient_gradients(t, q0, p1)?.iter().enumerate() {
            let w = h.powi(i as i32 + 1);
            dq += &g.dq * w;
            dp += &g.dp * w;
        }
        Ok(PhaseGradient { dq, dp })
    }
}

fn split(x: &DVector<f64>, n: usize) -> PhaseGradient {
    PhaseGradient {
        dq: x.rows(0, n).into_owned(),
        dp: x.rows(n, n).into_owned(),
    }
}

/// `[G₁, G₂, G₃]` of `ham` at `(q₀, p₁)` with time frozen at `t_anchor`.
pub fn series_coefficients<H: Hamiltonian + ?Sized>(
    ham: &H,
    q0: &DVector<f64>,
    p1: &DVector<f64>,
    t_anchor: f64,
) -> Result<[f64; 3]> {
    GeneratingSeries::new(ham, MAX_SERIES_ORDER)?.coefficients(t_anchor, q0, p1)
}

/// One step of the order-`r` series map.
pub fn step_series<H: Hamiltonian + ?Sized>(
    ham: &H,
    x: &PhasePoint,
    h: f64,
    r: usize,
    opts: &NewtonOptions,
) -> Result<PhasePoint> {
    if !h.is_finite() {
        return Err(Error::InvalidInput(format!("series step needs a finite h (got {h})")));
    }
    let series = GeneratingSeries::new(ham, r)?;
    let (t, q) = (x.t, &x.q);
    let guess = &x.p - ham.gradient(t, q, &x.p)?.dq * h;
    let sol = newton_fd(
        guess,
        |p1| Ok(&x.p - series.partials(t, q, p1, h)?.dq),
        opts,
        "series implicit costate",
    )
    .map_err(|e| step_failure("series", e))?;
    let p1 = sol.x;
    let q1 = series.partials(t, q, &p1, h)?.dp;
    Ok(PhasePoint { t: t + h, q: q1, p: p1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::DirectHamiltonian;
    use crate::integrators::gf2::step_gf2;
    use approx::assert_abs_diff_eq;

    fn inverted() -> DirectHamiltonian {
        DirectHamiltonian::new(1, true, |_, q, p| 0.5 * (p[0] * p[0] - q[0] * q[0]), |_, q, p| (-q.clone(), p.clone()))
            .with_hessian(|_, _, _| DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]))
    }

    fn v(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    #[test]
    fn inverted_coefficients_by_hand() {
        let g = series_coefficients(&inverted(), &v(1.0), &v(0.0), 0.0).unwrap();
        assert_abs_diff_eq!(g[0], -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g[2], 1.0 / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn oscillator_coefficients_by_hand() {
        let osc = DirectHamiltonian::harmonic_oscillator(1);
        let g = series_coefficients(&osc, &v(1.0), &v(1.0), 0.0).unwrap();
        assert_abs_diff_eq!(g[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(g[2], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn constant_hamiltonian_has_only_first_coefficient() {
        let c = DirectHamiltonian::new(2, true, |_, _, _| 4.2, |_, _, _| (DVector::zeros(2), DVector::zeros(2)));
        let q = DVector::from_vec(vec![0.1, 0.2]);
        let g = series_coefficients(&c, &q, &q, 0.0).unwrap();
        assert_eq!(g[0], 4.2);
        assert_abs_diff_eq!(g[1], 0.0);
        assert_abs_diff_eq!(g[2], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn first_order_series_equals_gf2() {
        let ham = inverted();
        let opts = NewtonOptions::default();
        for (q, p, h) in [(1.0, 0.0, 0.1), (-0.3, 0.8, 0.25), (2.0, -1.0, 0.05)] {
            let x = PhasePoint::from_slices(0.0, &[q], &[p]).unwrap();
            let a = step_series(&ham, &x, h, 1, &opts).unwrap();
            let b = step_gf2(&ham, &x, h, &opts).unwrap();
            assert_abs_diff_eq!(a.q[0], b.q[0], epsilon = 1e-11);
            assert_abs_diff_eq!(a.p[0], b.p[0], epsilon = 1e-11);
        }
    }

    #[test]
    fn zero_step_is_identity() {
        let x = PhasePoint::from_slices(0.0, &[0.4], &[-0.7]).unwrap();
        for r in 1..=3 {
            let y = step_series(&inverted(), &x, 0.0, r, &NewtonOptions::default()).unwrap();
            assert_eq!(y.q, x.q);
            assert_eq!(y.p, x.p);
        }
    }

    #[test]
    fn third_order_step_solves_truncated_relations_in_closed_form() {
        // S = q p₁ (1 + h²/2) + (h/2 + h³/6)(q² + p₁²) for the oscillator
        let osc = DirectHamiltonian::harmonic_oscillator(1);
        let (q, p, h): (f64, f64, f64) = (1.0, 0.0, 0.1);
        let a = 1.0 + h * h / 2.0;
        let b = h + h.powi(3) / 3.0;
        let p1 = (p - b * q) / a;
        let q1 = a * q + b * p1;
        let x = PhasePoint::from_slices(0.0, &[q], &[p]).unwrap();
        let y = step_series(&osc, &x, h, 3, &NewtonOptions::default()).unwrap();
        assert_abs_diff_eq!(y.q[0], q1, epsilon = 1e-12);
        assert_abs_diff_eq!(y.p[0], p1, epsilon = 1e-12);
        // against the exact rotation the step is off by the dropped 5h⁴/24 q p₁ term
        assert!((y.q[0] - h.cos()).abs() <= 5.0 * h.powi(4) / 24.0 * 1.01);
        assert!((y.p[0] + h.sin()).abs() <= 1e-6);
    }

    #[test]
    fn order_out_of_range_is_rejected() {
        assert!(GeneratingSeries::new(&inverted(), 0).is_err());
        assert!(GeneratingSeries::new(&inverted(), 4).is_err());
    }
}
