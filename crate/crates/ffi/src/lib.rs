//! C interface over the toolkit core.
//!
//! Every object crosses the boundary as an opaque handle allocated here
//! and released by its matching `_free` function. Calls return an
//! `IfopStatus`; on failure the thread-local message retrieved by
//! `ifop_last_error` says what went wrong, and output parameters are
//! left untouched. All functions tolerate null pointers and internal
//! panics (reported as `IFOP_STATUS_PANIC`, never unwound across the
//! boundary).

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ifop::encode::{encode_characteristic, encode_sdf};
use ifop::error::Error;
use ifop::fno::{checkpoint, FnoModel};
use ifop::geometry::{ClosedCurve, Geometry, Outer};
use ifop::grid::{ChannelTensor, GridSpec};
use ifop::problem::InterfaceProblem;
use ifop::{fdm, tfpm};

/// Call outcome. Zero is success; anything else leaves a message for
/// `ifop_last_error`.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum IfopStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    InvalidGeometry = 3,
    Unsupported = 4,
    NumericFailure = 5,
    FormatError = 6,
    IoError = 7,
    Panic = 8,
}

pub struct IfopCurve {
    inner: ClosedCurve,
}

pub struct IfopGeometry {
    inner: Geometry,
}

pub struct IfopProblem {
    inner: InterfaceProblem,
}

/// Multi-channel grid samples, row-major per channel, x fastest.
pub struct IfopField {
    inner: ChannelTensor,
}

/// Per-cell exponential expansion, evaluable at arbitrary points.
pub struct IfopTfpm {
    inner: tfpm::TfpmField,
}

pub struct IfopModel {
    inner: FnoModel,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

struct Fail {
    status: IfopStatus,
    msg: String,
}

impl Fail {
    fn null(name: &str) -> Fail {
        Fail { status: IfopStatus::NullArgument, msg: format!("{name} is null") }
    }
}

impl From<Error> for Fail {
    fn from(e: Error) -> Fail {
        let status = match &e {
            Error::InvalidArgument(_) => IfopStatus::InvalidArgument,
            Error::GeometryInvalid(_) => IfopStatus::InvalidGeometry,
            Error::Unsupported(_) => IfopStatus::Unsupported,
            Error::LinearSolve(_) | Error::Diverged { .. } | Error::NonFinite(_) => {
                IfopStatus::NumericFailure
            }
            Error::Format(_) => IfopStatus::FormatError,
            Error::Io(_) => IfopStatus::IoError,
        };
        Fail { status, msg: e.to_string() }
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> IfopStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IfopStatus::Ok,
        Ok(Err(fail)) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = fail.msg);
            fail.status
        }
        Err(_) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = "internal panic".into());
            IfopStatus::Panic
        }
    }
}

/// Reads a shared handle, or fails with the parameter name.
fn get<'a, T>(ptr: *const T, name: &str) -> Result<&'a T, Fail> {
    if ptr.is_null() {
        return Err(Fail::null(name));
    }
    Ok(unsafe { &*ptr })
}

fn put<T>(out: *mut *mut T, name: &str, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::null(name));
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

fn put_scalar<T>(out: *mut T, name: &str, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::null(name));
    }
    unsafe { *out = value };
    Ok(())
}

fn slice_arg<'a, T>(ptr: *const T, len: usize, name: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(Fail::null(name));
    }
    Ok(unsafe { std::slice::from_raw_parts(ptr, len) })
}

unsafe fn free<T>(ptr: *mut T) {
    if !ptr.is_null() {
        drop(unsafe { Box::from_raw(ptr) });
    }
}

/// Copies the message of the most recent failure on this thread into
/// `buf` (NUL-terminated, truncated to `cap` bytes) and returns the full
/// message length in bytes. A null or empty buffer only measures.
#[no_mangle]
pub extern "C" fn ifop_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            unsafe {
                std::ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
                *buf.add(n) = 0;
            }
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ifop_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

#[no_mangle]
pub extern "C" fn ifop_curve_circle(
    cx: f64,
    cy: f64,
    radius: f64,
    out: *mut *mut IfopCurve,
) -> IfopStatus {
    guard(|| put(out, "out", IfopCurve { inner: ClosedCurve::circle([cx, cy], radius)? }))
}

#[no_mangle]
pub extern "C" fn ifop_curve_ellipse(
    cx: f64,
    cy: f64,
    semi_x: f64,
    semi_y: f64,
    out: *mut *mut IfopCurve,
) -> IfopStatus {
    guard(|| {
        put(out, "out", IfopCurve { inner: ClosedCurve::ellipse([cx, cy], [semi_x, semi_y])? })
    })
}

#[no_mangle]
pub extern "C" fn ifop_curve_square(
    cx: f64,
    cy: f64,
    side: f64,
    out: *mut *mut IfopCurve,
) -> IfopStatus {
    guard(|| put(out, "out", IfopCurve { inner: ClosedCurve::axis_square([cx, cy], side)? }))
}

/// Star-shaped curve from `n_radii` polar radius samples at evenly
/// spaced angles.
#[no_mangle]
pub extern "C" fn ifop_curve_star(
    cx: f64,
    cy: f64,
    radii: *const f64,
    n_radii: usize,
    out: *mut *mut IfopCurve,
) -> IfopStatus {
    guard(|| {
        let radii = slice_arg(radii, n_radii, "radii")?.to_vec();
        put(out, "out", IfopCurve { inner: ClosedCurve::star([cx, cy], radii)? })
    })
}

#[no_mangle]
pub extern "C" fn ifop_curve_free(curve: *mut IfopCurve) {
    unsafe { free(curve) }
}

/// Signed distance to the curve, negative inside.
#[no_mangle]
pub extern "C" fn ifop_curve_sdf(
    curve: *const IfopCurve,
    x: f64,
    y: f64,
    out_value: *mut f64,
) -> IfopStatus {
    guard(|| {
        let c = get(curve, "curve")?;
        put_scalar(out_value, "out_value", c.inner.sdf([x, y, 0.0]))
    })
}

/// Closest point on the curve.
#[no_mangle]
pub extern "C" fn ifop_curve_project(
    curve: *const IfopCurve,
    x: f64,
    y: f64,
    out_x: *mut f64,
    out_y: *mut f64,
) -> IfopStatus {
    guard(|| {
        let c = get(curve, "curve")?;
        let q = c.inner.project([x, y, 0.0]);
        put_scalar(out_x, "out_x", q[0])?;
        put_scalar(out_y, "out_y", q[1])
    })
}

/// Canvas-bounded geometry over `[s,t]^d` holding `n_curves` disjoint
/// interfaces (cloned; the handles stay owned by the caller). The
/// geometry is validated before it is returned.
#[no_mangle]
pub extern "C" fn ifop_geometry_new(
    s: f64,
    t: f64,
    d: u32,
    curves: *const *const IfopCurve,
    n_curves: usize,
    out: *mut *mut IfopGeometry,
) -> IfopStatus {
    guard(|| {
        let handles = slice_arg(curves, n_curves, "curves")?;
        let mut interfaces = Vec::with_capacity(n_curves);
        for (i, &h) in handles.iter().enumerate() {
            interfaces.push(get(h, &format!("curves[{i}]"))?.inner.clone());
        }
        let geometry = Geometry::new(s, t, d as usize, Outer::Canvas, interfaces)?;
        geometry.validate()?;
        put(out, "out", IfopGeometry { inner: geometry })
    })
}

#[no_mangle]
pub extern "C" fn ifop_geometry_free(geometry: *mut IfopGeometry) {
    unsafe { free(geometry) }
}

/// Region label at a point: 0 outside the domain, 1 between the outer
/// boundary and all interfaces, `i + 2` inside interface `i`.
#[no_mangle]
pub extern "C" fn ifop_geometry_label(
    geometry: *const IfopGeometry,
    x: f64,
    y: f64,
    z: f64,
    out_label: *mut u32,
) -> IfopStatus {
    guard(|| {
        let g = get(geometry, "geometry")?;
        put_scalar(out_label, "out_label", g.inner.region_label([x, y, z]) as u32)
    })
}

/// Signed distance to the outer domain boundary, negative inside.
#[no_mangle]
pub extern "C" fn ifop_geometry_outer_sdf(
    geometry: *const IfopGeometry,
    x: f64,
    y: f64,
    z: f64,
    out_value: *mut f64,
) -> IfopStatus {
    guard(|| {
        let g = get(geometry, "geometry")?;
        put_scalar(out_value, "out_value", g.inner.outer_sdf([x, y, z]))
    })
}

/// Constant-coefficient interface problem: `-div(a grad u) + b u = f`
/// with boundary value `g` and one `(alpha, beta)` jump pair per
/// interface. The geometry is cloned.
#[no_mangle]
pub extern "C" fn ifop_problem_new(
    geometry: *const IfopGeometry,
    a: f64,
    b: f64,
    f: f64,
    g: f64,
    alpha: *const f64,
    beta: *const f64,
    n_jumps: usize,
    out: *mut *mut IfopProblem,
) -> IfopStatus {
    guard(|| {
        let geom = get(geometry, "geometry")?.inner.clone();
        let alpha = slice_arg(alpha, n_jumps, "alpha")?.to_vec();
        let beta = slice_arg(beta, n_jumps, "beta")?.to_vec();
        let problem = InterfaceProblem::with_constants(geom, a, b, f, g, alpha, beta);
        problem.check_shapes()?;
        put(out, "out", IfopProblem { inner: problem })
    })
}

#[no_mangle]
pub extern "C" fn ifop_problem_free(problem: *mut IfopProblem) {
    unsafe { free(problem) }
}

/// Finite-difference reference solve on an `n`-point-per-axis grid over
/// the problem's canvas; the solution is zero outside the domain.
#[no_mangle]
pub extern "C" fn ifop_solve_reference(
    problem: *const IfopProblem,
    n: usize,
    out: *mut *mut IfopField,
) -> IfopStatus {
    guard(|| {
        let p = get(problem, "problem")?;
        let g = &p.inner.geometry;
        let grid = GridSpec::new(g.s, g.t, n, g.d)?;
        let field = fdm::solve_elliptic_interface(&p.inner, &grid)?;
        put(out, "out", IfopField { inner: field })
    })
}

/// Exponential-basis solve; the result evaluates anywhere on the canvas.
#[no_mangle]
pub extern "C" fn ifop_solve_tfpm(
    problem: *const IfopProblem,
    n: usize,
    out: *mut *mut IfopTfpm,
) -> IfopStatus {
    guard(|| {
        let p = get(problem, "problem")?;
        let g = &p.inner.geometry;
        let grid = GridSpec::new(g.s, g.t, n, g.d)?;
        let field = tfpm::solve(&p.inner, &grid)?;
        put(out, "out", IfopTfpm { inner: field })
    })
}

#[no_mangle]
pub extern "C" fn ifop_tfpm_free(field: *mut IfopTfpm) {
    unsafe { free(field) }
}

/// Evaluates the expansion at one point.
#[no_mangle]
pub extern "C" fn ifop_tfpm_eval(
    field: *const IfopTfpm,
    x: f64,
    y: f64,
    z: f64,
    out_value: *mut f64,
) -> IfopStatus {
    guard(|| {
        let f = get(field, "field")?;
        put_scalar(out_value, "out_value", f.inner.eval([x, y, z]))
    })
}

/// Samples the expansion on an `n`-point-per-axis grid over its canvas
/// into `out_values` (`n^d` values, x fastest).
#[no_mangle]
pub extern "C" fn ifop_tfpm_sample(
    field: *const IfopTfpm,
    n: usize,
    out_values: *mut f64,
    len: usize,
) -> IfopStatus {
    guard(|| {
        let f = get(field, "field")?;
        let g = &f.inner.grid;
        let target = GridSpec::new(g.s, g.t, n, g.d)?;
        if len != target.num_points() {
            return Err(Fail::from(Error::InvalidArgument(format!(
                "buffer holds {len} values, grid needs {}",
                target.num_points()
            ))));
        }
        if out_values.is_null() {
            return Err(Fail::null("out_values"));
        }
        let values = f.inner.sample_on(&target)?;
        unsafe { std::ptr::copy_nonoverlapping(values.as_ptr(), out_values, values.len()) };
        Ok(())
    })
}

/// Builds a field from raw channel data: `channels * n^d` values,
/// channel-major, x fastest within a channel.
#[no_mangle]
pub extern "C" fn ifop_field_new(
    s: f64,
    t: f64,
    n: usize,
    d: u32,
    channels: usize,
    values: *const f64,
    len: usize,
    out: *mut *mut IfopField,
) -> IfopStatus {
    guard(|| {
        let grid = GridSpec::new(s, t, n, d as usize)?;
        let values = slice_arg(values, len, "values")?.to_vec();
        let tensor = ChannelTensor::from_values(grid, channels, values)?;
        put(out, "out", IfopField { inner: tensor })
    })
}

#[no_mangle]
pub extern "C" fn ifop_field_free(field: *mut IfopField) {
    unsafe { free(field) }
}

#[no_mangle]
pub extern "C" fn ifop_field_channels(
    field: *const IfopField,
    out_channels: *mut usize,
) -> IfopStatus {
    guard(|| {
        let f = get(field, "field")?;
        put_scalar(out_channels, "out_channels", f.inner.channels)
    })
}

/// Grid of the field: canvas bounds, points per axis, dimension.
#[no_mangle]
pub extern "C" fn ifop_field_grid(
    field: *const IfopField,
    out_s: *mut f64,
    out_t: *mut f64,
    out_n: *mut usize,
    out_d: *mut u32,
) -> IfopStatus {
    guard(|| {
        let f = get(field, "field")?;
        let g = f.inner.grid;
        put_scalar(out_s, "out_s", g.s)?;
        put_scalar(out_t, "out_t", g.t)?;
        put_scalar(out_n, "out_n", g.n)?;
        put_scalar(out_d, "out_d", g.d as u32)
    })
}

/// Copies one channel (`n^d` values, x fastest) into `out_values`.
#[no_mangle]
pub extern "C" fn ifop_field_copy(
    field: *const IfopField,
    channel: usize,
    out_values: *mut f64,
    len: usize,
) -> IfopStatus {
    guard(|| {
        let f = get(field, "field")?;
        if channel >= f.inner.channels {
            return Err(Fail::from(Error::InvalidArgument(format!(
                "channel {channel} of a {}-channel field",
                f.inner.channels
            ))));
        }
        let values = f.inner.channel(channel);
        if len != values.len() {
            return Err(Fail::from(Error::InvalidArgument(format!(
                "buffer holds {len} values, channel has {}",
                values.len()
            ))));
        }
        if out_values.is_null() {
            return Err(Fail::null("out_values"));
        }
        unsafe { std::ptr::copy_nonoverlapping(values.as_ptr(), out_values, values.len()) };
        Ok(())
    })
}

/// Integer region labels sampled on an `n`-point grid, as one channel.
#[no_mangle]
pub extern "C" fn ifop_encode_labels(
    geometry: *const IfopGeometry,
    n: usize,
    out: *mut *mut IfopField,
) -> IfopStatus {
    guard(|| {
        let g = get(geometry, "geometry")?;
        let grid = GridSpec::new(g.inner.s, g.inner.t, n, g.inner.d)?;
        let tensor = encode_characteristic(&g.inner, &grid)?;
        put(out, "out", IfopField { inner: tensor })
    })
}

/// Signed distances sampled on an `n`-point grid: channel 0 is the
/// outer boundary, then one channel per interface.
#[no_mangle]
pub extern "C" fn ifop_encode_sdf(
    geometry: *const IfopGeometry,
    n: usize,
    out: *mut *mut IfopField,
) -> IfopStatus {
    guard(|| {
        let g = get(geometry, "geometry")?;
        let grid = GridSpec::new(g.inner.s, g.inner.t, n, g.inner.d)?;
        let parts = encode_sdf(&g.inner, &grid)?;
        let mut values = Vec::with_capacity(parts.len() * grid.num_points());
        for part in &parts {
            values.extend_from_slice(part.channel(0));
        }
        let tensor = ChannelTensor::from_values(grid, parts.len(), values)?;
        put(out, "out", IfopField { inner: tensor })
    })
}

/// Loads a model checkpoint from a NUL-terminated UTF-8 path.
#[no_mangle]
pub extern "C" fn ifop_model_load(path: *const c_char, out: *mut *mut IfopModel) -> IfopStatus {
    guard(|| {
        if path.is_null() {
            return Err(Fail::null("path"));
        }
        let path = unsafe { CStr::from_ptr(path) }
            .to_str()
            .map_err(|_| Fail::from(Error::InvalidArgument("path is not UTF-8".into())))?;
        let model = checkpoint::load(Path::new(path))?;
        put(out, "out", IfopModel { inner: model })
    })
}

#[no_mangle]
pub extern "C" fn ifop_model_free(model: *mut IfopModel) {
    unsafe { free(model) }
}

/// Input channel count the model expects.
#[no_mangle]
pub extern "C" fn ifop_model_in_channels(
    model: *const IfopModel,
    out_channels: *mut usize,
) -> IfopStatus {
    guard(|| {
        let m = get(model, "model")?;
        put_scalar(out_channels, "out_channels", m.inner.arch.in_channels)
    })
}

/// Runs the model on an input field and returns the prediction as a new
/// field on the same grid.
#[no_mangle]
pub extern "C" fn ifop_model_forward(
    model: *const IfopModel,
    input: *const IfopField,
    out: *mut *mut IfopField,
) -> IfopStatus {
    guard(|| {
        let m = get(model, "model")?;
        let x = get(input, "input")?;
        let y = m.inner.forward(&x.inner)?;
        put(out, "out", IfopField { inner: y })
    })
}
