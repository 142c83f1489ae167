//! Variational integrators from the α-averaged discrete Lagrangian
//!
//! ```text
//! S_d(q₀, q₁, t₀, t₁) = h L(αt₀ + (1−α)t₁, αq₀ + (1−α)q₁, (q₁ − q₀)/h),  h = t₁ − t₀
//! ```
//!
//! Fixed steps solve the discrete Euler–Lagrange equations
//! `D₂S_d(q_{k−1}, q_k) + D₁S_d(q_k, q_{k+1}) = 0`; adaptive steps add the
//! discrete energy balance `D₄S_d(q_{k−1}, q_k) + D₃S_d(q_k, q_{k+1}) = 0` and
//! solve for `(q_{k+1}, t_{k+1})` together.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::integrators::gf2::step_failure;
use crate::model::check_vec;
use crate::numeric::{fd_step, newton_fd, newton_fd_least_squares, NewtonOptions, FD_REL_STEP};

/// Smallest admissible adaptive step.
pub const MIN_ADAPTIVE_STEP: f64 = 1e-10;

/// A Lagrangian `L(t, q, v)` with its first derivatives.
pub trait Lagrangian {
    fn dim(&self) -> usize;

    fn is_autonomous(&self) -> bool;

    fn value(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> Result<f64>;

    /// `(∂L/∂q, ∂L/∂v)`.
    fn gradient(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)>;

    /// `∂L/∂t`; central difference unless overridden.
    fn time_derivative(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        if self.is_autonomous() {
            return Ok(0.0);
        }
        let dt = fd_step(t, FD_REL_STEP);
        Ok((self.value(t + dt, q, v)? - self.value(t - dt, q, v)?) / (2.0 * dt))
    }
}

impl<L: Lagrangian + ?Sized> Lagrangian for &L {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn is_autonomous(&self) -> bool {
        (**self).is_autonomous()
    }
    fn value(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        (**self).value(t, q, v)
    }
    fn gradient(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        (**self).gradient(t, q, v)
    }
    fn time_derivative(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        (**self).time_derivative(t, q, v)
    }
}

type LagValueFn = Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> f64 + Send + Sync>;
type LagGradFn = Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> (DVector<f64>, DVector<f64>) + Send + Sync>;

/// A Lagrangian given by closures.
#[derive(Clone)]
pub struct DirectLagrangian {
    n: usize,
    autonomous: bool,
    value: LagValueFn,
    gradient: LagGradFn,
    time_derivative: Option<LagValueFn>,
}

impl fmt::Debug for DirectLagrangian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DirectLagrangian")
            .field("n", &self.n)
            .field("autonomous", &self.autonomous)
            .finish()
    }
}

impl DirectLagrangian {
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
            time_derivative: None,
        }
    }

    pub fn with_time_derivative<F>(mut self, dt: F) -> Self
    where
        F: Fn(f64, &DVector<f64>, &DVector<f64>) -> f64 + Send + Sync + 'static,
    {
        self.time_derivative = Some(Arc::new(dt));
        self
    }

    /// `L = ½|v|² − ½k|q|²`: free particle for `k = 0`, oscillator for
    /// `k = 1`, inverted oscillator for `k = −1`.
    pub fn quadratic(n: usize, stiffness: f64) -> Self {
        Self::new(
            n,
            true,
            move |_, q, v| 0.5 * (v.norm_squared() - stiffness * q.norm_squared()),
            move |_, q, v| (-q * stiffness, v.clone()),
        )
    }
}

impl Lagrangian for DirectLagrangian {
    fn dim(&self) -> usize {
        self.n
    }

    fn is_autonomous(&self) -> bool {
        self.autonomous
    }

    fn value(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        check_vec(q, self.n, "position")?;
        check_vec(v, self.n, "velocity")?;
        Ok((self.value)(t, q, v))
    }

    fn gradient(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        check_vec(q, self.n, "position")?;
        check_vec(v, self.n, "velocity")?;
        let (lq, lv) = (self.gradient)(t, q, v);
        check_vec(&lq, self.n, "Lagrangian gradient dq")?;
        check_vec(&lv, self.n, "Lagrangian gradient dv")?;
        Ok((lq, lv))
    }

    fn time_derivative(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        match (&self.time_derivative, self.autonomous) {
            (_, true) => Ok(0.0),
            (Some(f), false) => Ok(f(t, q, v)),
            (None, false) => {
                let dt = fd_step(t, FD_REL_STEP);
                Ok((self.value(t + dt, q, v)? - self.value(t - dt, q, v)?) / (2.0 * dt))
            }
        }
    }
}

/// The α-averaged discrete Lagrangian and its slot derivatives.
#[derive(Clone, Copy, Debug)]
pub struct DiscreteLagrangian<'a, L: ?Sized> {
    lag: &'a L,
    alpha: f64,
}

struct Quadrature {
    h: f64,
    t: f64,
    q: DVector<f64>,
    v: DVector<f64>,
}

impl<'a, L: Lagrangian + ?Sized> DiscreteLagrangian<'a, L> {
    pub fn new(lag: &'a L, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidInput(format!("alpha must lie in [0, 1] (got {alpha})")));
        }
        Ok(Self { lag, alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn quadrature(&self, q0: &DVector<f64>, q1: &DVector<f64>, t0: f64, t1: f64) -> Result<Quadrature> {
        let h = t1 - t0;
        if !(h > 0.0) {
            return Err(Error::Step(format!("discrete Lagrangian needs t1 > t0 (got {t0} → {t1})")));
        }
        let a = self.alpha;
        Ok(Quadrature {
            h,
            t: a * t0 + (1.0 - a) * t1,
            q: q0 * a + q1 * (1.0 - a),
            v: (q1 - q0) / h,
        })
    }

    pub fn value(&self, q0: &DVector<f64>, q1: &DVector<f64>, t0: f64, t1: f64) -> Result<f64> {
        let c = self.quadrature(q0, q1, t0, t1)?;
        Ok(c.h * self.lag.value(c.t, &c.q, &c.v)?)
    }

    /// `∂S_d/∂q₀ = hαL_q − L_v`.
    pub fn d1(&self, q0: &DVector<f64>, q1: &DVector<f64>, t0: f64, t1: f64) -> Result<DVector<f64>> {
        let c = self.quadrature(q0, q1, t0, t1)?;
        let (lq, lv) = self.lag.gradient(c.t, &c.q, &c.v)?;
        Ok(lq * (c.h * self.alpha) - lv)
    }

    /// `∂S_d/∂q₁ = h(1−α)L_q + L_v`.
    pub fn d2(&self, q0: &DVector<f64>, q1: &DVector<f64>, t0: f64, t1: f64) -> Result<DVector<f64>> {
        let c = self.quadrature(q0, q1, t0, t1)?;
        let (lq, lv) = self.lag.gradient(c.t, &c.q, &c.v)?;
        Ok(lq * (c.h * (1.0 - self.alpha)) + lv)
    }

    /// `∂S_d/∂t₀ = −L + hαL_t + v·L_v`.
    pub fn d3(&self, q0: &DVector<f64>, q1: &DVector<f64>, t0: f64, t1: f64) -> Result<f64> {
        let c = self.quadrature(q0, q1, t0, t1)?;
        let l = self.lag.value(c.t, &c.q, &c.v)?;
        let lt = self.lag.time_derivative(c.t, &c.q, &c.v)?;
        let (_, lv) = self.lag.gradient(c.t, &c.q, &c.v)?;
        Ok(-l + c.h * self.alpha * lt + c.v.dot(&lv))
    }

    /// `∂S_d/∂t₁ = L + h(1−α)L_t − v·L_v`.
    pub fn d4(&self, q0: &DVector<f64>, q1: &DVector<f64>, t0: f64, t1: f64) -> Result<f64> {
        let c = self.quadrature(q0, q1, t0, t1)?;
        let l = self.lag.value(c.t, &c.q, &c.v)?;
        let lt = self.lag.time_derivative(c.t, &c.q, &c.v)?;
        let (_, lv) = self.lag.gradient(c.t, &c.q, &c.v)?;
        Ok(l + c.h * (1.0 - self.alpha) * lt - c.v.dot(&lv))
    }

    /// Discrete Euler–Lagrange residual at the middle of three positions.
    pub fn del_residual(
        &self,
        q: [&DVector<f64>; 3],
        t: [f64; 3],
    ) -> Result<DVector<f64>> {
        Ok(self.d2(q[0], q[1], t[0], t[1])? + self.d1(q[1], q[2], t[1], t[2])?)
    }

    /// Discrete energy balance residual at the middle of three samples.
    pub fn energy_residual(&self, q: [&DVector<f64>; 3], t: [f64; 3]) -> Result<f64> {
        Ok(self.d4(q[0], q[1], t[0], t[1])? + self.d3(q[1], q[2], t[1], t[2])?)
    }
}

/// Solves `p₀ = −D₁S_d(q₀, q₁, t₀, t₀+h)` for `q₁`, turning phase-space
/// initial data into the two positions a DEL chain needs.
pub fn initial_positions<L: Lagrangian + ?Sized>(
    lag: &L,
    alpha: f64,
    t0: f64,
    q0: &DVector<f64>,
    p0: &DVector<f64>,
    h: f64,
    opts: &NewtonOptions,
) -> Result<DVector<f64>> {
    let sd = DiscreteLagrangian::new(lag, alpha)?;
    let guess = q0 + p0 * h;
    newton_fd(
        guess,
        |q1| Ok(p0 + sd.d1(q0, q1, t0, t0 + h)?),
        opts,
        "discrete Legendre transform",
    )
    .map(|s| s.x)
    .map_err(|e| step_failure("DEL start", e))
}

/// One fixed-step DEL update returning `q_{k+1}`.
#[allow(clippy::too_many_arguments)]
pub fn step_del<L: Lagrangian + ?Sized>(
    lag: &L,
    q_prev: &DVector<f64>,
    q_curr: &DVector<f64>,
    t_k: f64,
    h: f64,
    alpha: f64,
    opts: &NewtonOptions,
) -> Result<DVector<f64>> {
    if !(h > 0.0) {
        return Err(Error::InvalidInput(format!("DEL step needs h > 0 (got {h})")));
    }
    let sd = DiscreteLagrangian::new(lag, alpha)?;
    let t = [t_k - h, t_k, t_k + h];
    let guess = q_curr * 2.0 - q_prev;
    newton_fd(
        guess,
        |q_next| sd.del_residual([q_prev, q_curr, q_next], t),
        opts,
        "DEL position update",
    )
    .map(|s| s.x)
    .map_err(|e| step_failure("DEL", e))
}

/// One adaptive DEL update returning `(q_{k+1}, t_{k+1})`.
#[allow(clippy::too_many_arguments)]
pub fn step_del_adaptive<L: Lagrangian + ?Sized>(
    lag: &L,
    q_prev: &DVector<f64>,
    q_curr: &DVector<f64>,
    t_prev: f64,
    t_curr: f64,
    alpha: f64,
    opts: &NewtonOptions,
) -> Result<(DVector<f64>, f64)> {
    if !(t_curr - t_prev >= MIN_ADAPTIVE_STEP) {
        return Err(Error::Step(format!(
            "adaptive DEL: previous step {} is below {MIN_ADAPTIVE_STEP:e}",
            t_curr - t_prev
        )));
    }
    let sd = DiscreteLagrangian::new(lag, alpha)?;
    let n = q_curr.len();
    let unpack = |z: &DVector<f64>| (z.rows(0, n).into_owned(), z[n]);
    // Seed with the fixed-step update at the previous step length. Linear
    // extrapolation from a turning point lands between the forward root and
    // the time-reversed one (q₂ = q₀, t₂ = t₀), which Newton then finds.
    let h_prev = t_curr - t_prev;
    let q_seed = step_del(lag, q_prev, q_curr, t_curr, h_prev, alpha, opts).unwrap_or_else(|_| q_curr * 2.0 - q_prev);
    let mut guess = DVector::zeros(n + 1);
    guess.rows_mut(0, n).copy_from(&q_seed);
    guess[n] = t_curr + h_prev;
    let sol = newton_fd_least_squares(
        guess,
        |z| {
            let (q_next, t_next) = unpack(z);
            if !(t_next - t_curr >= MIN_ADAPTIVE_STEP) {
                return Err(Error::Step(format!("adaptive DEL: trial step {} is not forward", t_next - t_curr)));
            }
            let q = [q_prev, q_curr, &q_next];
            let t = [t_prev, t_curr, t_next];
            let mut r = DVector::zeros(n + 1);
            r.rows_mut(0, n).copy_from(&sd.del_residual(q, t)?);
            r[n] = sd.energy_residual(q, t)?;
            Ok(r)
        },
        opts,
        "adaptive DEL update",
    )
    .map_err(|e| step_failure("adaptive DEL", e))?;
    let (q_next, t_next) = unpack(&sol.x);
    if !(t_next - t_curr >= MIN_ADAPTIVE_STEP) {
        return Err(Error::Step(format!(
            "adaptive DEL: step collapsed to {} at t = {t_curr}",
            t_next - t_curr
        )));
    }
    Ok((q_next, t_next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn v(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    fn forced() -> DirectLagrangian {
        DirectLagrangian::new(
            1,
            false,
            |t, q, v| 0.5 * v[0] * v[0] - q[0] * t.sin(),
            |t, _, v| (DVector::from_element(1, -t.sin()), v.clone()),
        )
    }

    #[test]
    fn free_particle_is_second_difference() {
        let free = DirectLagrangian::quadratic(1, 0.0);
        for alpha in [0.0, 0.3, 0.5, 1.0] {
            let q = step_del(&free, &v(1.0), &v(1.7), 0.2, 0.1, alpha, &NewtonOptions::default()).unwrap();
            assert_abs_diff_eq!(q[0], 2.4, epsilon = 1e-12);
        }
        let rest = step_del(&free, &v(3.0), &v(3.0), 0.0, 0.5, 0.5, &NewtonOptions::default()).unwrap();
        assert_eq!(rest[0], 3.0);
    }

    #[test]
    fn oscillator_midpoint_step_matches_scalar_root() {
        // −(q₁ − 2q + q₋₁)/h − (h/4)(q₋₁ + 2q + q₁) = 0 with q₋₁ = q = 1
        let h: f64 = 0.1;
        let oracle = (1.0 - h * h * 0.75) / (1.0 + h * h / 4.0);
        let osc = DirectLagrangian::quadratic(1, 1.0);
        let q = step_del(&osc, &v(1.0), &v(1.0), 0.0, h, 0.5, &NewtonOptions::default()).unwrap();
        assert_abs_diff_eq!(q[0], oracle, epsilon = 1e-12);
        assert_abs_diff_eq!(q[0], 0.9900249376558603, epsilon = 1e-12);
    }

    #[test]
    fn slot_derivatives_match_finite_differences() {
        let lag = forced();
        let sd = DiscreteLagrangian::new(&lag, 0.3).unwrap();
        let (q0, q1, t0, t1) = (v(0.4), v(0.9), 0.2, 0.35);
        let e = 1e-6;
        let fd_q0 = (sd.value(&v(0.4 + e), &q1, t0, t1).unwrap() - sd.value(&v(0.4 - e), &q1, t0, t1).unwrap()) / (2.0 * e);
        let fd_q1 = (sd.value(&q0, &v(0.9 + e), t0, t1).unwrap() - sd.value(&q0, &v(0.9 - e), t0, t1).unwrap()) / (2.0 * e);
        let fd_t0 = (sd.value(&q0, &q1, t0 + e, t1).unwrap() - sd.value(&q0, &q1, t0 - e, t1).unwrap()) / (2.0 * e);
        let fd_t1 = (sd.value(&q0, &q1, t0, t1 + e).unwrap() - sd.value(&q0, &q1, t0, t1 - e).unwrap()) / (2.0 * e);
        assert_abs_diff_eq!(sd.d1(&q0, &q1, t0, t1).unwrap()[0], fd_q0, epsilon = 1e-7);
        assert_abs_diff_eq!(sd.d2(&q0, &q1, t0, t1).unwrap()[0], fd_q1, epsilon = 1e-7);
        assert_abs_diff_eq!(sd.d3(&q0, &q1, t0, t1).unwrap(), fd_t0, epsilon = 1e-6);
        assert_abs_diff_eq!(sd.d4(&q0, &q1, t0, t1).unwrap(), fd_t1, epsilon = 1e-6);
    }

    #[test]
    fn adaptive_free_particle_keeps_uniform_steps() {
        let free = DirectLagrangian::quadratic(1, 0.0);
        let opts = NewtonOptions::default();
        let (mut q0, mut q1, mut t0, mut t1) = (v(0.0), v(0.25), 0.0, 0.1);
        for _ in 0..20 {
            let (q2, t2) = step_del_adaptive(&free, &q0, &q1, t0, t1, 0.5, &opts).unwrap();
            assert_abs_diff_eq!(t2 - t1, 0.1, epsilon = 1e-12);
            (q0, q1, t0, t1) = (q1, q2, t1, t2);
        }
    }

    #[test]
    fn adaptive_time_translation_shifts_times() {
        let osc = DirectLagrangian::quadratic(1, 1.0);
        let opts = NewtonOptions::default();
        let a = step_del_adaptive(&osc, &v(1.0), &v(0.995), 0.0, 0.1, 0.5, &opts).unwrap();
        let b = step_del_adaptive(&osc, &v(1.0), &v(0.995), 3.0, 3.1, 0.5, &opts).unwrap();
        assert_abs_diff_eq!(a.0[0], b.0[0], epsilon = 1e-10);
        assert_abs_diff_eq!(b.1 - a.1, 3.0, epsilon = 1e-10);
    }

    #[test]
    fn adaptive_forced_step_satisfies_both_equations() {
        let lag = forced();
        let opts = NewtonOptions::default();
        let sd = DiscreteLagrangian::new(&lag, 0.5).unwrap();
        let (q0, q1, t0, t1) = (v(0.0), v(0.1), 0.5, 0.6);
        let (q2, t2) = step_del_adaptive(&lag, &q0, &q1, t0, t1, 0.5, &opts).unwrap();
        let q = [&q0, &q1, &q2];
        let t = [t0, t1, t2];
        assert!(sd.del_residual(q, t).unwrap()[0].abs() <= 1e-10);
        assert!(sd.energy_residual(q, t).unwrap().abs() <= 1e-10);
        assert!(t2 > t1);
    }

    #[test]
    fn legendre_start_inverts_d1() {
        let osc = DirectLagrangian::quadratic(1, 1.0);
        let q1 = initial_positions(&osc, 0.5, 0.0, &v(1.0), &v(0.0), 0.1, &NewtonOptions::default()).unwrap();
        let sd = DiscreteLagrangian::new(&osc, 0.5).unwrap();
        assert_abs_diff_eq!(sd.d1(&v(1.0), &q1, 0.0, 0.1).unwrap()[0], 0.0, epsilon = 1e-13);
    }

    #[test]
    fn alpha_out_of_range_is_rejected() {
        let free = DirectLagrangian::quadratic(1, 0.0);
        assert!(DiscreteLagrangian::new(&free, 1.5).is_err());
    }
}
