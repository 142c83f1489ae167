//! Necessary-condition solvers: the discrete optimal control recursion with
//! shooting on the initial costate, a brute-force oracle, and shooting for
//! the continuous two-point boundary value problem.

pub mod continuous;
pub mod discrete;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::numeric::{central_jacobian, inf_norm, solve_linear};

pub use continuous::{shoot_continuous, ContinuousSolution};
pub use discrete::{
    augmented_index, brute_force_solve, necessary_step, objective, shoot_discrete, DiscreteOCP, DiscreteTrajectory,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShootingConfig {
    /// Boundary residual tolerance (max-norm).
    pub tol: f64,
    pub max_iter: usize,
    /// Relative step of the finite-difference shooting Jacobian.
    pub fd_step: f64,
    pub max_halvings: usize,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
            fd_step: 1e-6,
            max_halvings: 30,
        }
    }
}

impl ShootingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidInput(format!("shooting tol must be positive (got {})", self.tol)));
        }
        if self.max_iter == 0 || !(self.fd_step > 0.0) {
            return Err(Error::InvalidInput("shooting needs max_iter ≥ 1 and a positive fd_step".into()));
        }
        Ok(())
    }
}

/// Newton on the initial costate. Returns the solution and the residual
/// norm after every accepted iterate.
///
/// A propagation that fails at a trial point counts as an infinite residual
/// and the step is halved.
pub(crate) fn shoot<F>(guess: DVector<f64>, residual: F, cfg: &ShootingConfig) -> Result<(DVector<f64>, Vec<f64>)>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    cfg.validate()?;
    let mut x = guess;
    let mut r = residual(&x)?;
    let mut norm = inf_norm(&r);
    let mut history = vec![norm];
    let mut iterations = 0;
    while norm > cfg.tol || !norm.is_finite() {
        if iterations == cfg.max_iter || !norm.is_finite() {
            return Err(Error::Shooting { iterations, history });
        }
        iterations += 1;
        let jac = central_jacobian(&residual, &x, cfg.fd_step)?;
        let dx = match solve_linear(&jac, &r, "shooting Jacobian") {
            Ok(dx) => dx,
            Err(_) => return Err(Error::Shooting { iterations, history }),
        };
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=cfg.max_halvings {
            let trial = &x - &dx * lambda;
            match residual(&trial) {
                Ok(rt) if inf_norm(&rt) < norm => {
                    x = trial;
                    norm = inf_norm(&rt);
                    r = rt;
                    accepted = true;
                    break;
                }
                Ok(_) => {}
                Err(e) if e.is_solver_failure() => {}
                Err(e) => return Err(e),
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::Shooting { iterations, history });
        }
        history.push(norm);
    }
    Ok((x, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn shooting_solves_affine_map_in_few_iterations() {
        let (x, history) = shoot(
            DVector::zeros(2),
            |p| Ok(DVector::from_vec(vec![2.0 * p[0] + p[1] - 1.0, p[1] + 3.0])),
            &ShootingConfig::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(x[0], 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(x[1], -3.0, epsilon = 1e-9);
        assert!(history.len() <= 3);
    }

    #[test]
    fn shooting_reports_history_on_failure() {
        let err = shoot(
            DVector::from_element(1, 1.0),
            |p| Ok(DVector::from_element(1, p[0] * p[0] + 1.0)),
            &ShootingConfig::default(),
        )
        .unwrap_err();
        match err {
            Error::Shooting { history, .. } => assert!(!history.is_empty()),
            other => panic!("unexpected {other:?}"),
        }
    }
}
