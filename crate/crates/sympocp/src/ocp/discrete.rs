//! Discrete-time optimal control
//!
//! ```text
//! q_{k+1} = f(k, q_k, u_k),   J = S̄(N, q_N) + Σ_{k<N} L̄(k, q_k, u_k)
//! ```
//!
//! with stage Hamiltonian `H̄ = p_{k+1}·f − L̄`. The necessary conditions are
//!
//! ```text
//! q_{k+1} = f(k, q_k, u_k)
//! p_k     = f_qᵀ p_{k+1} − L̄_q
//! 0       = f_uᵀ p_{k+1} − L̄_u
//! ```
//!
//! with `q₀` fixed and `p_N = −S̄_q(N, q_N)`. The state runs forward and the
//! costate backward; [`shoot_discrete`] closes the loop by Newton on `p₀`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::integrators::gf2::step_failure;
use crate::model::{check_mat, check_vec, LQSpec};
use crate::numeric::{condition_number, fd_step, inf_norm, newton_fd, solve_linear, NewtonOptions, FD_REL_STEP};
use crate::ocp::{shoot, ShootingConfig};
use crate::trajectory::{Sample, Trajectory};

pub type StageVectorFn = Arc<dyn Fn(usize, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type StageMatrixFn = Arc<dyn Fn(usize, &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type StageScalarFn = Arc<dyn Fn(usize, &DVector<f64>, &DVector<f64>) -> f64 + Send + Sync>;
pub type FinalScalarFn = Arc<dyn Fn(usize, &DVector<f64>) -> f64 + Send + Sync>;
pub type FinalVectorFn = Arc<dyn Fn(usize, &DVector<f64>) -> DVector<f64> + Send + Sync>;

/// Largest stacked control dimension accepted by [`brute_force_solve`].
pub const BRUTE_FORCE_MAX_CONTROLS: usize = 200;

#[derive(Clone)]
pub struct DiscreteOCP {
    pub n: usize,
    pub m: usize,
    pub horizon: usize,
    pub transition: StageVectorFn,
    pub transition_dq: StageMatrixFn,
    pub transition_du: StageMatrixFn,
    pub stage_cost: StageScalarFn,
    pub stage_cost_dq: StageVectorFn,
    pub stage_cost_du: StageVectorFn,
    pub stage_cost_duu: StageMatrixFn,
    pub terminal_cost: FinalScalarFn,
    pub terminal_cost_dq: FinalVectorFn,
    pub q0: DVector<f64>,
    /// Time of stage 0 and the stage spacing, used only when emitting
    /// trajectories.
    pub t0: f64,
    pub step: f64,
}

impl fmt::Debug for DiscreteOCP {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiscreteOCP")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("horizon", &self.horizon)
            .field("q0", &self.q0)
            .finish_non_exhaustive()
    }
}

impl DiscreteOCP {
    /// Explicit-Euler discretization of an LQ problem:
    /// `f = q + h(Aq + Bu)`, `L̄ = h·½(qᵀQq + uᵀRu)`, `S̄` the LQ terminal cost,
    /// with `h = (T − t0)/N`.
    pub fn from_lq_euler(spec: &LQSpec, horizon: usize) -> Result<Self> {
        spec.validate()?;
        if horizon == 0 {
            return Err(Error::InvalidInput("horizon N must be at least 1".into()));
        }
        let (n, m) = (spec.n(), spec.m());
        let t0 = spec.t0;
        let h = (spec.t_final - spec.t0) / horizon as f64;
        let time = move |k: usize| t0 + k as f64 * h;

        let (a, b) = (spec.a.clone(), spec.b.clone());
        let transition: StageVectorFn = Arc::new(move |k, q, u| q + (a.at(time(k)) * q + b.at(time(k)) * u) * h);
        let a = spec.a.clone();
        let transition_dq: StageMatrixFn =
            Arc::new(move |k, _, _| DMatrix::identity(n, n) + a.at(time(k)) * h);
        let b = spec.b.clone();
        let transition_du: StageMatrixFn = Arc::new(move |k, _, _| b.at(time(k)) * h);

        let (qm, rm) = (spec.q.clone(), spec.r.clone());
        let stage_cost: StageScalarFn = Arc::new(move |k, q, u| {
            let t = time(k);
            0.5 * h * (q.dot(&(qm.at(t) * q)) + u.dot(&(rm.at(t) * u)))
        });
        let qm = spec.q.clone();
        let stage_cost_dq: StageVectorFn = Arc::new(move |k, q, _| qm.at(time(k)) * q * h);
        let rm = spec.r.clone();
        let stage_cost_du: StageVectorFn = Arc::new(move |k, _, u| rm.at(time(k)) * u * h);
        let rm = spec.r.clone();
        let stage_cost_duu: StageMatrixFn = Arc::new(move |k, _, _| rm.at(time(k)) * h);

        let target = spec.target.clone().unwrap_or_else(|| DVector::zeros(n));
        let (qf, tg) = (spec.qf.clone(), target.clone());
        let terminal_cost: FinalScalarFn = Arc::new(move |_, q| {
            let d = q - &tg;
            0.5 * d.dot(&(&qf * &d))
        });
        let qf = spec.qf.clone();
        let terminal_cost_dq: FinalVectorFn = Arc::new(move |_, q| &qf * (q - &target));

        Ok(Self {
            n,
            m,
            horizon,
            transition,
            transition_dq,
            transition_du,
            stage_cost,
            stage_cost_dq,
            stage_cost_du,
            stage_cost_duu,
            terminal_cost,
            terminal_cost_dq,
            q0: spec.q0.clone(),
            t0,
            step: h,
        })
    }

    fn f(&self, k: usize, q: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        let out = (self.transition)(k, q, u);
        check_vec(&out, self.n, "transition")?;
        Ok(out)
    }

    fn f_q(&self, k: usize, q: &DVector<f64>, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        let out = (self.transition_dq)(k, q, u);
        check_mat(&out, self.n, self.n, "transition Jacobian f_q")?;
        Ok(out)
    }

    fn f_u(&self, k: usize, q: &DVector<f64>, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        let out = (self.transition_du)(k, q, u);
        check_mat(&out, self.n, self.m, "transition Jacobian f_u")?;
        Ok(out)
    }

    fn check_stage(&self, k: usize, q: &DVector<f64>, u: &DVector<f64>) -> Result<()> {
        if k >= self.horizon {
            return Err(Error::InvalidInput(format!("stage {k} outside 0..{}", self.horizon)));
        }
        check_vec(q, self.n, "stage state")?;
        check_vec(u, self.m, "stage control")
    }

    /// Stage Hamiltonian `H̄ = p_{k+1}·f − L̄`.
    pub fn stage_hamiltonian(&self, k: usize, q: &DVector<f64>, p_next: &DVector<f64>, u: &DVector<f64>) -> Result<f64> {
        self.check_stage(k, q, u)?;
        check_vec(p_next, self.n, "stage costate")?;
        Ok(p_next.dot(&self.f(k, q, u)?) - (self.stage_cost)(k, q, u))
    }

    /// Residuals of the costate and stationarity conditions at stage `k`.
    pub fn stage_residuals(
        &self,
        k: usize,
        q: &DVector<f64>,
        p: &DVector<f64>,
        p_next: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        self.check_stage(k, q, u)?;
        let costate = p - (self.f_q(k, q, u)?.transpose() * p_next - (self.stage_cost_dq)(k, q, u));
        let stationarity = self.f_u(k, q, u)?.transpose() * p_next - (self.stage_cost_du)(k, q, u);
        Ok((costate, stationarity))
    }

    /// Forward rollout of the transition.
    pub fn rollout(&self, controls: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        if controls.len() != self.horizon {
            return Err(Error::Dimension {
                what: "control sequence",
                expected: (self.horizon, self.m),
                got: (controls.len(), self.m),
            });
        }
        let mut states = vec![self.q0.clone()];
        for (k, u) in controls.iter().enumerate() {
            self.check_stage(k, &states[k], u)?;
            let next = self.f(k, &states[k], u)?;
            states.push(next);
        }
        Ok(states)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteTrajectory {
    pub states: Vec<DVector<f64>>,
    pub costates: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
    pub objective: f64,
}

impl DiscreteTrajectory {
    /// Samples at `t_k = t0 + k·step`; the final sample carries NaN controls
    /// and the stage Hamiltonian column is NaN there.
    pub fn to_trajectory(&self, docp: &DiscreteOCP) -> Result<Trajectory> {
        let mut traj = Trajectory::new();
        for (k, (q, p)) in self.states.iter().zip(&self.costates).enumerate() {
            let (u, h_value) = match self.controls.get(k) {
                Some(u) => (u.clone(), docp.stage_hamiltonian(k, q, &self.costates[k + 1], u)?),
                None => (DVector::from_element(docp.m, f64::NAN), f64::NAN),
            };
            traj.push(Sample {
                t: docp.t0 + k as f64 * docp.step,
                q: q.clone(),
                p: p.clone(),
                u,
                h_value,
            })?;
        }
        Ok(traj)
    }
}

/// Solves the stage conditions for `(p_{k+1}, u_k)` given `(q_k, p_k)` and
/// returns `(q_{k+1}, p_{k+1}, u_k)`.
pub fn necessary_step(
    docp: &DiscreteOCP,
    k: usize,
    q: &DVector<f64>,
    p: &DVector<f64>,
    u_guess: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    necessary_step_with(docp, k, q, p, u_guess, &NewtonOptions::default())
}

fn necessary_step_with(
    docp: &DiscreteOCP,
    k: usize,
    q: &DVector<f64>,
    p: &DVector<f64>,
    u_guess: &DVector<f64>,
    opts: &NewtonOptions,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    let (n, m) = (docp.n, docp.m);
    docp.check_stage(k, q, u_guess)?;
    check_vec(p, n, "stage costate")?;
    let split = |z: &DVector<f64>| (z.rows(0, n).into_owned(), z.rows(n, m).into_owned());
    let residual = |z: &DVector<f64>| {
        let (p_next, u) = split(z);
        let (r1, r2) = docp.stage_residuals(k, q, p, &p_next, &u)?;
        let mut r = DVector::zeros(n + m);
        r.rows_mut(0, n).copy_from(&r1);
        r.rows_mut(n, m).copy_from(&r2);
        Ok(r)
    };
    let mut guess = DVector::zeros(n + m);
    guess.rows_mut(0, n).copy_from(p);
    guess.rows_mut(n, m).copy_from(u_guess);
    let sol = newton_fd(guess, residual, opts, "discrete stage conditions").map_err(|e| step_failure("stage", e))?;
    let (p_next, u) = split(&sol.x);

    // regularity of the stage Hamiltonian in u
    if m > 0 {
        let huu = crate::numeric::central_jacobian(
            |w| Ok(docp.f_u(k, q, w)?.transpose() * &p_next - (docp.stage_cost_du)(k, q, w)),
            &u,
            FD_REL_STEP,
        )?;
        let cond = condition_number(&huu);
        if !(cond < 1.0 / opts.tol) {
            return Err(Error::Regularity {
                what: "stage Hamiltonian H̄_uu",
                condition: cond,
                matrix: huu,
            });
        }
    }
    let q_next = docp.f(k, q, &u)?;
    Ok((q_next, p_next, u))
}

struct Rollout {
    states: Vec<DVector<f64>>,
    costates: Vec<DVector<f64>>,
    controls: Vec<DVector<f64>>,
}

fn propagate(docp: &DiscreteOCP, p0: &DVector<f64>) -> Result<Rollout> {
    let mut out = Rollout {
        states: vec![docp.q0.clone()],
        costates: vec![p0.clone()],
        controls: Vec::with_capacity(docp.horizon),
    };
    let mut u_guess = DVector::zeros(docp.m);
    for k in 0..docp.horizon {
        let (qn, pn, u) = necessary_step(docp, k, &out.states[k], &out.costates[k], &u_guess)?;
        u_guess = u.clone();
        out.states.push(qn);
        out.costates.push(pn);
        out.controls.push(u);
    }
    Ok(out)
}

fn transversality(docp: &DiscreteOCP, r: &Rollout) -> DVector<f64> {
    let n = docp.horizon;
    &r.costates[n] + (docp.terminal_cost_dq)(n, &r.states[n])
}

/// Shooting on `p₀` so that `p_N + S̄_q(N, q_N) = 0`.
pub fn shoot_discrete(docp: &DiscreteOCP, cfg: &ShootingConfig) -> Result<DiscreteTrajectory> {
    let (p0, _) = shoot(
        DVector::zeros(docp.n),
        |p0| Ok(transversality(docp, &propagate(docp, p0)?)),
        cfg,
    )?;
    let r = propagate(docp, &p0)?;
    let objective = objective(docp, &r.controls)?;
    Ok(DiscreteTrajectory {
        states: r.states,
        costates: r.costates,
        controls: r.controls,
        objective,
    })
}

/// `J = S̄(N, q_N) + Σ L̄(k, q_k, u_k)` along the forward rollout.
pub fn objective(docp: &DiscreteOCP, controls: &[DVector<f64>]) -> Result<f64> {
    let states = docp.rollout(controls)?;
    let running: f64 = controls
        .iter()
        .enumerate()
        .map(|(k, u)| (docp.stage_cost)(k, &states[k], u))
        .sum();
    Ok(running + (docp.terminal_cost)(docp.horizon, &states[docp.horizon]))
}

/// `J′ = Σ [p_{k+1}·(f(k, q_k, u_k) − q_{k+1}) − L̄(k, q_k, u_k)] − S̄(N, q_N)`.
///
/// On a feasible trajectory the multiplier terms vanish and `J′ = −J`.
pub fn augmented_index(docp: &DiscreteOCP, traj: &DiscreteTrajectory) -> Result<f64> {
    let n = docp.horizon;
    if traj.states.len() != n + 1 || traj.costates.len() != n + 1 || traj.controls.len() != n {
        return Err(Error::Dimension {
            what: "discrete trajectory",
            expected: (n + 1, n),
            got: (traj.states.len(), traj.controls.len()),
        });
    }
    let mut total = 0.0;
    for k in 0..n {
        let (q, u) = (&traj.states[k], &traj.controls[k]);
        docp.check_stage(k, q, u)?;
        check_vec(&traj.costates[k + 1], docp.n, "trajectory costate")?;
        let gap = docp.f(k, q, u)? - &traj.states[k + 1];
        total += traj.costates[k + 1].dot(&gap) - (docp.stage_cost)(k, q, u);
    }
    Ok(total - (docp.terminal_cost)(n, &traj.states[n]))
}

fn stack_controls(x: &DVector<f64>, horizon: usize, m: usize) -> Vec<DVector<f64>> {
    (0..horizon).map(|k| x.rows(k * m, m).into_owned()).collect()
}

/// Newton on the stacked control vector with finite-difference gradient and
/// Hessian of `J`. Costates come from the backward adjoint recursion.
pub fn brute_force_solve(docp: &DiscreteOCP, tol: f64) -> Result<DiscreteTrajectory> {
    let (horizon, m) = (docp.horizon, docp.m);
    let dim = horizon * m;
    if dim > BRUTE_FORCE_MAX_CONTROLS {
        return Err(Error::InvalidInput(format!(
            "brute force handles at most {BRUTE_FORCE_MAX_CONTROLS} stacked controls (got {dim})"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive (got {tol})")));
    }
    let cost = |x: &DVector<f64>| objective(docp, &stack_controls(x, horizon, m));
    let gradient = |x: &DVector<f64>| -> Result<DVector<f64>> {
        let mut g = DVector::zeros(dim);
        let mut xs = x.clone();
        for i in 0..dim {
            let d = fd_step(x[i], 1e-5);
            xs[i] = x[i] + d;
            let fp = cost(&xs)?;
            xs[i] = x[i] - d;
            let fm = cost(&xs)?;
            xs[i] = x[i];
            g[i] = (fp - fm) / (2.0 * d);
        }
        Ok(g)
    };
    let hessian = |x: &DVector<f64>| -> Result<DMatrix<f64>> {
        let steps: Vec<f64> = x.iter().map(|v| fd_step(*v, 1e-3)).collect();
        let at = |pairs: &[(usize, f64)]| {
            let mut xs = x.clone();
            for (i, s) in pairs {
                xs[*i] += s;
            }
            cost(&xs)
        };
        let j0 = at(&[])?;
        let mut hess = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            let di = steps[i];
            hess[(i, i)] = (at(&[(i, di)])? - 2.0 * j0 + at(&[(i, -di)])?) / (di * di);
            for j in 0..i {
                let dj = steps[j];
                let v = (at(&[(i, di), (j, dj)])? - at(&[(i, di), (j, -dj)])? - at(&[(i, -di), (j, dj)])?
                    + at(&[(i, -di), (j, -dj)])?)
                    / (4.0 * di * dj);
                hess[(i, j)] = v;
                hess[(j, i)] = v;
            }
        }
        Ok(hess)
    };

    let mut x = DVector::zeros(dim);
    let mut g = gradient(&x)?;
    let mut norm = inf_norm(&g);
    let max_iter = 50;
    let mut iterations = 0;
    while norm > tol {
        if iterations == max_iter {
            return Err(Error::Convergence {
                what: "brute-force control minimization",
                iterations,
                residual: norm,
            });
        }
        iterations += 1;
        let dx = solve_linear(&hessian(&x)?, &g, "brute-force Hessian")?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=30 {
            let trial = &x - &dx * lambda;
            let gt = gradient(&trial)?;
            if inf_norm(&gt) < norm {
                x = trial;
                norm = inf_norm(&gt);
                g = gt;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::Convergence {
                what: "brute-force control minimization",
                iterations,
                residual: norm,
            });
        }
    }

    let controls = stack_controls(&x, horizon, m);
    let states = docp.rollout(&controls)?;
    let mut costates = vec![DVector::zeros(docp.n); horizon + 1];
    costates[horizon] = -(docp.terminal_cost_dq)(horizon, &states[horizon]);
    for k in (0..horizon).rev() {
        let (q, u) = (&states[k], &controls[k]);
        costates[k] = docp.f_q(k, q, u)?.transpose() * &costates[k + 1] - (docp.stage_cost_dq)(k, q, u);
    }
    let objective = objective(docp, &controls)?;
    Ok(DiscreteTrajectory {
        states,
        costates,
        controls,
        objective,
    })
}
