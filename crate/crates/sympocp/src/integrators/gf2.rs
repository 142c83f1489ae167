//! First-order map generated by `S̃₂(q_k, p_{k+1}) = p_{k+1}·(q_k + hΓ̃) − hL̃`,
//! which differentiates to the reduced Hamiltonian relations
//!
//! ```text
//! p_k     = p_{k+1} + h H̃_q(t_k, q_k, p_{k+1})
//! q_{k+1} = q_k     + h H̃_p(t_k, q_k, p_{k+1})
//! ```
//!
//! The first equation is implicit in `p_{k+1}`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::hamiltonian::{Hamiltonian, PhaseGradient};
use crate::model::PhasePoint;
use crate::numeric::{newton_fd, NewtonOptions};

/// Partials `(∂S̃₂/∂q_k, ∂S̃₂/∂p_{k+1})` of the first-order generating function.
pub fn gf2_partials<H: Hamiltonian + ?Sized>(
    ham: &H,
    t: f64,
    q: &DVector<f64>,
    p_next: &DVector<f64>,
    h: f64,
) -> Result<PhaseGradient> {
    let g = ham.gradient(t, q, p_next)?;
    Ok(PhaseGradient {
        dq: p_next + g.dq * h,
        dp: q + g.dp * h,
    })
}

pub(crate) fn step_failure(map: &'static str, err: Error) -> Error {
    match err {
        Error::Convergence { iterations, residual, .. } => Error::Step(format!(
            "{map}: implicit solve failed after {iterations} iterations (residual {residual:.3e})"
        )),
        other => other,
    }
}

/// One step of the first-order generating-function map.
pub fn step_gf2<H: Hamiltonian + ?Sized>(ham: &H, x: &PhasePoint, h: f64, opts: &NewtonOptions) -> Result<PhasePoint> {
    if h == 0.0 || !h.is_finite() {
        return Err(Error::InvalidInput(format!("GF2 step needs a finite nonzero h (got {h})")));
    }
    let (t, q) = (x.t, &x.q);
    // explicit predictor for p_{k+1}
    let guess = &x.p - ham.gradient(t, q, &x.p)?.dq * h;
    let sol = newton_fd(
        guess,
        |p_next| Ok(&x.p - p_next - ham.gradient(t, q, p_next)?.dq * h),
        opts,
        "GF2 implicit costate",
    )
    .map_err(|e| step_failure("GF2", e))?;
    let p_next = sol.x;
    let q_next = q + ham.gradient(t, q, &p_next)?.dp * h;
    Ok(PhasePoint {
        t: t + h,
        q: q_next,
        p: p_next,
    })
}
