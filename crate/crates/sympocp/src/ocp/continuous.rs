//! Single shooting for the continuous two-point boundary value problem
//! `q(t0) = q₀`, `p(T) = −S_q(T, q(T))`, propagated by a second-kind map.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::hamiltonian::Hamiltonian;
use crate::integrators::{integrate, MethodSpec};
use crate::model::PhasePoint;
use crate::ocp::{shoot, ShootingConfig};
use crate::trajectory::Trajectory;

#[derive(Clone, Debug)]
pub struct ContinuousSolution {
    pub trajectory: Trajectory,
    pub p0: DVector<f64>,
    /// Boundary residual max-norm after each accepted Newton iterate.
    pub residual_history: Vec<f64>,
}

impl ContinuousSolution {
    pub fn boundary_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::NAN)
    }
}

/// Number of steps covering `[t0, t_final]` with spacing closest to `h`, and
/// the spacing that makes them land exactly on `t_final`.
pub fn uniform_grid(t0: f64, t_final: f64, h: f64) -> Result<(usize, f64)> {
    if !(t_final > t0) || !(h > 0.0) {
        return Err(Error::InvalidInput(format!(
            "need T > t0 and h > 0 (t0 = {t0}, T = {t_final}, h = {h})"
        )));
    }
    let steps = ((t_final - t0) / h).round().max(1.0) as usize;
    Ok((steps, (t_final - t0) / steps as f64))
}

/// Newton on `p₀` so that the propagated trajectory satisfies
/// `‖p(T) + S_q(T, q(T))‖∞ ≤ tol`. `h` is adjusted so that a whole number of
/// steps covers the horizon.
#[allow(clippy::too_many_arguments)]
pub fn shoot_continuous<H, S>(
    ham: &H,
    terminal_cost_dq: S,
    q0: &DVector<f64>,
    t0: f64,
    t_final: f64,
    method: &MethodSpec,
    h: f64,
    cfg: &ShootingConfig,
) -> Result<ContinuousSolution>
where
    H: Hamiltonian + ?Sized,
    S: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let (steps, h) = uniform_grid(t0, t_final, h)?;
    if q0.len() != ham.dim() {
        return Err(Error::Dimension {
            what: "initial state",
            expected: (ham.dim(), 1),
            got: (q0.len(), 1),
        });
    }
    let propagate = |p0: &DVector<f64>| -> Result<Trajectory> {
        let x0 = PhasePoint::new(t0, q0.clone(), p0.clone())?;
        Ok(integrate(method, ham, &x0, h, steps)?)
    };
    let boundary = |traj: &Trajectory| -> Result<DVector<f64>> {
        let last = traj.last().ok_or_else(|| Error::Step("empty trajectory".into()))?;
        Ok(&last.p + terminal_cost_dq(last.t, &last.q))
    };
    let (p0, residual_history) = shoot(DVector::zeros(ham.dim()), |p0| boundary(&propagate(p0)?), cfg)?;
    Ok(ContinuousSolution {
        trajectory: propagate(&p0)?,
        p0,
        residual_history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::DirectHamiltonian;
    use approx::assert_abs_diff_eq;

    #[test]
    fn free_problem_without_terminal_cost_has_zero_costate() {
        let free =
            DirectHamiltonian::new(1, true, |_, _, p| 0.5 * p[0] * p[0], |_, _, p| (DVector::zeros(1), p.clone()));
        let sol = shoot_continuous(
            &free,
            |_, _| DVector::zeros(1),
            &DVector::from_element(1, 2.0),
            0.0,
            1.0,
            &MethodSpec::gf2_euler(),
            0.1,
            &ShootingConfig::default(),
        )
        .unwrap();
        assert_eq!(sol.p0[0], 0.0);
        assert!(sol.trajectory.samples().iter().all(|s| s.q[0] == 2.0));
    }

    #[test]
    fn grid_lands_on_horizon() {
        let (steps, h) = uniform_grid(0.0, 1.0, 0.3).unwrap();
        assert_eq!(steps, 3);
        assert_abs_diff_eq!(h * steps as f64, 1.0, epsilon = 1e-15);
    }
}
