//! C ABI over the `sympocp` library.
//!
//! Every fallible function returns a status code (`SYMP_OK` on success) and
//! writes results through out-pointers. On failure a message is kept per
//! thread and can be read with [`symp_last_error`]. Handles are opaque and
//! must be released with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::{DMatrix, DVector};
use sympocp::catalog::{from_catalog, Problem};
use sympocp::dhs::{step_linear, LinearDHS};
use sympocp::integrators::{integrate, integrate_del, DelStart, MethodKind, MethodSpec};
use sympocp::model::PhasePoint;
use sympocp::problem::parse_problem_json;
use sympocp::trajectory::Trajectory;
use sympocp::verify::{one_step_map, random_points, symplectic_defect, symplecticity};
use sympocp::Error;

pub const SYMP_OK: i32 = 0;
/// A required pointer argument was null.
pub const SYMP_ERR_NULL: i32 = 1;
/// Bad input: unknown names, malformed JSON, wrong dimensions.
pub const SYMP_ERR_INVALID: i32 = 2;
/// A numerical solver failed (non-convergence, singular matrix).
pub const SYMP_ERR_SOLVER: i32 = 3;
/// A Rust panic was caught at the boundary.
pub const SYMP_ERR_PANIC: i32 = 4;

pub const SYMP_METHOD_GF2_EULER: i32 = 0;
pub const SYMP_METHOD_SERIES: i32 = 1;
pub const SYMP_METHOD_DEL: i32 = 2;
pub const SYMP_METHOD_DEL_ADAPTIVE: i32 = 3;

/// Method selection. `order` applies to the series method and `alpha` to
/// the DEL methods; a non-positive `tol` or zero `max_iter` keeps the
/// defaults.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct SympMethod {
    pub kind: i32,
    pub order: u32,
    pub alpha: f64,
    pub tol: f64,
    pub max_iter: u32,
}

/// Opaque problem handle.
pub struct SympProblem {
    inner: Problem,
}

/// Opaque trajectory handle.
pub struct SympTrajectory {
    inner: Trajectory,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn code_of(e: &Error) -> i32 {
    if e.is_solver_failure() {
        SYMP_ERR_SOLVER
    } else {
        SYMP_ERR_INVALID
    }
}

struct Fail(i32, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(code_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(SYMP_ERR_NULL, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SYMP_OK,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            SYMP_ERR_PANIC
        }
    }
}

unsafe fn c_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Fail(SYMP_ERR_INVALID, format!("{what} is not UTF-8")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn problem_ref<'a>(p: *const SympProblem) -> Result<&'a Problem, Fail> {
    p.as_ref().map(|p| &p.inner).ok_or_else(|| null("problem"))
}

fn method_spec(m: &SympMethod) -> Result<MethodSpec, Fail> {
    let kind = match m.kind {
        SYMP_METHOD_GF2_EULER => MethodKind::Gf2Euler,
        SYMP_METHOD_SERIES => MethodKind::Series,
        SYMP_METHOD_DEL => MethodKind::DelFixed,
        SYMP_METHOD_DEL_ADAPTIVE => MethodKind::DelAdaptive,
        other => return Err(Fail(SYMP_ERR_INVALID, format!("unknown method kind {other}"))),
    };
    let mut spec = MethodSpec::new(kind);
    spec.order = m.order as usize;
    spec.alpha = m.alpha;
    if m.tol > 0.0 {
        spec.implicit_tol = m.tol;
    }
    if m.max_iter > 0 {
        spec.implicit_max_iter = m.max_iter as usize;
    }
    spec.validate()?;
    Ok(spec)
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn symp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a built-in problem (`free`, `inverted`, `dblint`, `osc`).
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn symp_problem_from_catalog(name: *const c_char, out: *mut *mut SympProblem) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = from_catalog(c_str(name, "name")?)?;
        *out = Box::into_raw(Box::new(SympProblem { inner }));
        Ok(())
    })
}

/// Builds a problem from LQ JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn symp_problem_from_json(json: *const c_char, out: *mut *mut SympProblem) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let (inner, _) = parse_problem_json(c_str(json, "json")?, "json")?.continuous()?;
        *out = Box::into_raw(Box::new(SympProblem { inner }));
        Ok(())
    })
}

/// # Safety
/// `problem` must come from a `symp_problem_from_*` call and not be freed
/// twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn symp_problem_free(problem: *mut SympProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// State and control dimensions.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn symp_problem_dims(problem: *const SympProblem, n: *mut usize, m: *mut usize) -> i32 {
    guard(|| {
        let p = problem_ref(problem)?;
        if n.is_null() || m.is_null() {
            return Err(null("n or m"));
        }
        *n = p.n();
        *m = p.m();
        Ok(())
    })
}

/// Integrates `steps` steps of size `h`. `q0` and `p0` (length `n`) may be
/// null to use the problem's initial point.
///
/// # Safety
/// `problem`, `method` and `out` must be valid; non-null `q0`/`p0` must
/// point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn symp_integrate(
    problem: *const SympProblem,
    method: *const SympMethod,
    q0: *const f64,
    p0: *const f64,
    h: f64,
    steps: usize,
    out: *mut *mut SympTrajectory,
) -> i32 {
    guard(|| {
        let p = problem_ref(problem)?;
        let spec = method_spec(method.as_ref().ok_or_else(|| null("method"))?)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let n = p.n();
        let mut x0 = p.x0.clone();
        if !q0.is_null() {
            x0.q = DVector::from_column_slice(slice(q0, n, "q0")?);
        }
        if !p0.is_null() {
            x0.p = DVector::from_column_slice(slice(p0, n, "p0")?);
        }
        let traj = if spec.kind.is_second_kind() {
            integrate(&spec, &p.hamiltonian, &x0, h, steps)
        } else {
            let lag = p
                .lagrangian
                .as_ref()
                .ok_or_else(|| Fail(SYMP_ERR_INVALID, format!("problem {} has no Lagrangian", p.name)))?;
            integrate_del(&spec, &**lag, &DelStart::Phase(x0), h, steps)
        }
        .map_err(Error::from)?;
        *out = Box::into_raw(Box::new(SympTrajectory { inner: traj }));
        Ok(())
    })
}

/// Number of samples (0 for null).
///
/// # Safety
/// `traj` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn symp_trajectory_len(traj: *const SympTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.inner.len())
}

/// Copies sample `k`: `q` and `p` need `n` doubles, `u` needs `m`. Any
/// output pointer may be null to skip that field.
///
/// # Safety
/// `traj` must be valid and non-null outputs large enough.
#[no_mangle]
pub unsafe extern "C" fn symp_trajectory_sample(
    traj: *const SympTrajectory,
    k: usize,
    t: *mut f64,
    q: *mut f64,
    p: *mut f64,
    u: *mut f64,
    h_value: *mut f64,
) -> i32 {
    guard(|| {
        let traj = traj.as_ref().ok_or_else(|| null("trajectory"))?;
        let s = traj.inner.samples().get(k).ok_or_else(|| {
            Fail(SYMP_ERR_INVALID, format!("sample {k} out of range (len {})", traj.inner.len()))
        })?;
        if !t.is_null() {
            *t = s.t;
        }
        if !h_value.is_null() {
            *h_value = s.h_value;
        }
        for (dst, src) in [(q, &s.q), (p, &s.p), (u, &s.u)] {
            if !dst.is_null() {
                std::slice::from_raw_parts_mut(dst, src.len()).copy_from_slice(src.as_slice());
            }
        }
        Ok(())
    })
}

/// # Safety
/// `traj` must come from [`symp_integrate`] and not be freed twice. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn symp_trajectory_free(traj: *mut SympTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// `‖MᵀΣM − Σ‖∞` of a row-major `dim × dim` matrix (`dim` even).
///
/// # Safety
/// `matrix` must point to `dim * dim` doubles and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn symp_symplectic_defect(matrix: *const f64, dim: usize, out: *mut f64) -> i32 {
    guard(|| {
        let len = dim.checked_mul(dim).ok_or_else(|| Fail(SYMP_ERR_INVALID, "dim overflows".into()))?;
        let m = DMatrix::from_row_slice(dim, dim, slice(matrix, len, "matrix")?);
        if out.is_null() {
            return Err(null("out"));
        }
        *out = symplectic_defect(&m)?;
        Ok(())
    })
}

/// Largest symplecticity defect of one step of `method` over `samples`
/// seeded random points in `[−1, 1]^{2n}`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn symp_verify_symplecticity(
    problem: *const SympProblem,
    method: *const SympMethod,
    h: f64,
    samples: usize,
    seed: u64,
    max_defect: *mut f64,
) -> i32 {
    guard(|| {
        let p = problem_ref(problem)?;
        let spec = method_spec(method.as_ref().ok_or_else(|| null("method"))?)?;
        if max_defect.is_null() {
            return Err(null("max_defect"));
        }
        if h.is_nan() || h <= 0.0 {
            return Err(Fail(SYMP_ERR_INVALID, format!("h must be positive (got {h})")));
        }
        let points = random_points(p.n(), p.x0.t, samples, seed);
        let report = symplecticity(one_step_map(p, &spec, h)?, &points)?;
        *max_defect = report.max_defect;
        Ok(())
    })
}

/// One step of the constant linear discrete Hamiltonian system with
/// row-major `d × d` matrices `a` (symmetric), `b`, `c` (symmetric).
///
/// # Safety
/// Matrix pointers must hold `d * d` doubles; vector pointers `d` doubles.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn symp_dhs_linear_step(
    d: usize,
    a: *const f64,
    b: *const f64,
    c: *const f64,
    y: *const f64,
    z: *const f64,
    y_next: *mut f64,
    z_next: *mut f64,
) -> i32 {
    guard(|| {
        let len = d.checked_mul(d).ok_or_else(|| Fail(SYMP_ERR_INVALID, "d overflows".into()))?;
        let mat = |p, what| Ok::<_, Fail>(DMatrix::from_row_slice(d, d, slice(p, len, what)?));
        let sys = LinearDHS::constant(mat(a, "a")?, mat(b, "b")?, mat(c, "c")?)?;
        let y = DVector::from_column_slice(slice(y, d, "y")?);
        let z = DVector::from_column_slice(slice(z, d, "z")?);
        if y_next.is_null() || z_next.is_null() {
            return Err(null("y_next or z_next"));
        }
        let (y1, z1) = step_linear(&sys, 0, &y, &z)?;
        std::slice::from_raw_parts_mut(y_next, d).copy_from_slice(y1.as_slice());
        std::slice::from_raw_parts_mut(z_next, d).copy_from_slice(z1.as_slice());
        Ok(())
    })
}

/// Exact flow of a catalog problem from `(q0, p0)` at time 0 to `t`, for
/// comparisons from C. Returns `SYMP_ERR_INVALID` when no closed form is
/// known.
///
/// # Safety
/// `q0`, `p0`, `q`, `p` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn symp_exact_flow(
    problem: *const SympProblem,
    q0: *const f64,
    p0: *const f64,
    t: f64,
    q: *mut f64,
    p: *mut f64,
) -> i32 {
    guard(|| {
        let pr = problem_ref(problem)?;
        let n = pr.n();
        let x0 = PhasePoint::new(
            0.0,
            DVector::from_column_slice(slice(q0, n, "q0")?),
            DVector::from_column_slice(slice(p0, n, "p0")?),
        )?;
        let x = pr
            .exact_flow(&x0, t)
            .ok_or_else(|| Fail(SYMP_ERR_INVALID, format!("no exact flow for {}", pr.name)))?;
        if q.is_null() || p.is_null() {
            return Err(null("q or p"));
        }
        std::slice::from_raw_parts_mut(q, n).copy_from_slice(x.q.as_slice());
        std::slice::from_raw_parts_mut(p, n).copy_from_slice(x.p.as_slice());
        Ok(())
    })
}
