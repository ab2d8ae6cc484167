//! C interface to `cartan-heis`.
//!
//! Objects are opaque handles released with their `_free` function. Every
//! fallible call returns a `ChStatus`; on failure the message of the last
//! error on the calling thread is available from `ch_last_error_message`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cartan_heis::darboux::{darboux_frame, DarbouxFrameField, FrameOptions, Gauge};
use cartan_heis::dsl::{parse, parse_builtin_spec, Immersion};
use cartan_heis::invariants::{extract, InvariantField};
use cartan_heis::psh::{decompose, PSHElement};
use cartan_heis::rigidity::{classify_field, detect_sphere, Verticality};
use cartan_heis::surface::DerivMode;
use cartan_heis::Error;
use nalgebra::DMatrix;

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    BufferTooSmall = 3,
    Panic = 4,
    Syntax = 10,
    UndeclaredParameter = 11,
    DimensionMismatch = 12,
    UnknownBuiltin = 13,
    BadParameters = 14,
    InvalidArgument = 15,
    Io = 16,
    Domain = 20,
    OutOfChart = 21,
    Shape = 22,
    NonHorizontal = 23,
    BaseMismatch = 24,
    InvalidFrame = 25,
    LinearSolveFailure = 26,
    NotImmersed = 30,
    SingularPoint = 31,
    NotCrInvariant = 32,
    IllConditionedCoframe = 33,
    DegeneratePoint = 34,
    WrongClass = 40,
    NotFlat = 41,
    NotTorsionFree = 42,
    IntegrabilityFailure = 43,
    ProjectionDrift = 44,
}

/// Derivative backend.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChMode {
    Ad = 0,
    Fd = 1,
}

/// Verticality class of a sampled submanifold.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChClass {
    Vertical = 0,
    CompletelyNonVertical = 1,
    Mixed = 2,
}

/// Largest residuals over the grid. Checks that do not apply are NaN.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct ChSummary {
    pub min_nu: f64,
    pub max_nu: f64,
    pub max_h: f64,
    pub max_torsion: f64,
    pub scalar_min: f64,
    pub scalar_max: f64,
    pub tanaka_webster: f64,
    pub restriction: [f64; 5],
    pub gauss: f64,
    pub curvature_torsion: f64,
    pub nu_recovery: f64,
    pub torsion_link: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct ChSphereFit {
    pub radius: f64,
    pub center_residual: f64,
    pub radius_residual: f64,
}

/// A parsed or builtin submanifold.
pub struct ChSurface {
    imm: Immersion,
}

/// Invariants and Darboux frames sampled on a grid.
pub struct ChField {
    field: InvariantField,
    frames: DarbouxFrameField,
}

struct LastError {
    message: String,
    line: usize,
    col: usize,
}

thread_local! {
    static LAST: RefCell<Option<LastError>> = const { RefCell::new(None) };
}

fn status_of(e: &Error) -> ChStatus {
    use ChStatus as S;
    match e {
        Error::Syntax { .. } => S::Syntax,
        Error::UndeclaredParameter { .. } => S::UndeclaredParameter,
        Error::DimensionMismatch { .. } => S::DimensionMismatch,
        Error::Domain(_) => S::Domain,
        Error::OutOfChart(_) => S::OutOfChart,
        Error::NonHorizontal(_) => S::NonHorizontal,
        Error::BaseMismatch => S::BaseMismatch,
        Error::Shape(_) => S::Shape,
        Error::InvalidFrame(_) => S::InvalidFrame,
        Error::NotImmersed { .. } => S::NotImmersed,
        Error::SingularPoint { .. } => S::SingularPoint,
        Error::NotCRInvariant { .. } => S::NotCrInvariant,
        Error::LinearSolveFailure(_) => S::LinearSolveFailure,
        Error::IllConditionedCoframe { .. } => S::IllConditionedCoframe,
        Error::DegeneratePoint { .. } => S::DegeneratePoint,
        Error::WrongClass { .. } => S::WrongClass,
        Error::NotFlat(_) => S::NotFlat,
        Error::NotTorsionFree(_) => S::NotTorsionFree,
        Error::IntegrabilityFailure { .. } => S::IntegrabilityFailure,
        Error::ProjectionDrift(_) => S::ProjectionDrift,
        Error::UnknownBuiltin(_) => S::UnknownBuiltin,
        Error::BadParameters(_) => S::BadParameters,
        Error::InvalidArgument(_) => S::InvalidArgument,
        Error::Io(_) => S::Io,
    }
}

fn fail(status: ChStatus, message: String, line: usize, col: usize) -> ChStatus {
    LAST.with(|l| *l.borrow_mut() = Some(LastError { message, line, col }));
    status
}

fn fail_with(e: Error) -> ChStatus {
    let (line, col) = match &e {
        Error::Syntax { line, col, .. } | Error::UndeclaredParameter { line, col, .. } | Error::DimensionMismatch { line, col, .. } => {
            (*line, *col)
        }
        _ => (0, 0),
    };
    fail(status_of(&e), e.to_string(), line, col)
}

/// Runs `f`, converting errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), ChStatus>) -> ChStatus {
    LAST.with(|l| *l.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ChStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(ChStatus::Panic, msg, 0, 0)
        }
    }
}

fn lift<T>(r: cartan_heis::Result<T>) -> Result<T, ChStatus> {
    r.map_err(fail_with)
}

fn null() -> ChStatus {
    fail(ChStatus::NullPointer, "null pointer argument".into(), 0, 0)
}

unsafe fn text<'a>(s: *const c_char) -> Result<&'a str, ChStatus> {
    if s.is_null() {
        return Err(null());
    }
    CStr::from_ptr(s).to_str().map_err(|_| fail(ChStatus::InvalidUtf8, "string is not UTF-8".into(), 0, 0))
}

unsafe fn deref<'a, T>(p: *const T) -> Result<&'a T, ChStatus> {
    p.as_ref().ok_or_else(null)
}

unsafe fn slice<'a, T>(p: *const T, len: usize) -> Result<&'a [T], ChStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null());
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize) -> Result<&'a mut [T], ChStatus> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null());
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn put<T>(out: *mut T, v: T) -> Result<(), ChStatus> {
    if out.is_null() {
        return Err(null());
    }
    out.write(v);
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ch_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL, or 0
/// when there is no error.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ch_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST.with(|l| {
        let l = l.borrow();
        let Some(e) = l.as_ref() else { return 0 };
        let bytes = e.message.as_bytes();
        if !buf.is_null() && len > 0 {
            let k = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), k);
            *buf.add(k) = 0;
        }
        bytes.len()
    })
}

/// Source location of the last parse error (1-based), or 0 for both when the
/// error has none.
///
/// # Safety
/// `line` and `col` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ch_last_error_location(line: *mut usize, col: *mut usize) {
    let (l, c) = LAST.with(|e| e.borrow().as_ref().map(|e| (e.line, e.col)).unwrap_or((0, 0)));
    if !line.is_null() {
        *line = l;
    }
    if !col.is_null() {
        *col = c;
    }
}

fn new_surface(imm: Immersion) -> *mut ChSurface {
    Box::into_raw(Box::new(ChSurface { imm }))
}

/// Parses surface source text.
///
/// # Safety
/// `source` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ch_surface_parse(source: *const c_char, out: *mut *mut ChSurface) -> ChStatus {
    guard(|| {
        let imm = lift(parse(text(source)?))?;
        put(out, new_surface(imm))
    })
}

/// A builtin surface from a spec such as `sphere(2, 1)`.
///
/// # Safety
/// `spec` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ch_surface_builtin(spec: *const c_char, out: *mut *mut ChSurface) -> ChStatus {
    guard(|| {
        let imm = lift(parse_builtin_spec(text(spec)?))?;
        put(out, new_surface(imm))
    })
}

/// # Safety
/// `s` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ch_surface_free(s: *mut ChSurface) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Heisenberg dimension `n`, CR dimension `m` and chart dimension `2m + 1`.
///
/// # Safety
/// `s` must be a live handle; outputs must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ch_surface_dims(s: *const ChSurface, n: *mut usize, m: *mut usize, dim: *mut usize) -> ChStatus {
    guard(|| {
        let s = deref(s)?;
        put(n, s.imm.n)?;
        put(m, s.imm.m)?;
        put(dim, s.imm.dim())
    })
}

/// Evaluates the immersion at chart point `u` (length `2m + 1`) into `x`
/// (length `2n + 1`).
///
/// # Safety
/// `u` and `x` must point to arrays of the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn ch_surface_eval(s: *const ChSurface, u: *const f64, x: *mut f64) -> ChStatus {
    guard(|| {
        let s = deref(s)?;
        let u = slice(u, s.imm.dim())?;
        let v = lift(s.imm.eval(u))?;
        slice_mut(x, 2 * s.imm.n + 1)?.copy_from_slice(&v);
        Ok(())
    })
}

/// Samples invariants on a grid over the chart with `counts[i]` points per axis.
/// `ncounts` is 1 (same count on every axis) or the chart dimension.
///
/// # Safety
/// `counts` must point to `ncounts` values and `out` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ch_extract(
    s: *const ChSurface,
    counts: *const usize,
    ncounts: usize,
    mode: ChMode,
    out: *mut *mut ChField,
) -> ChStatus {
    guard(|| {
        let s = deref(s)?;
        let c = slice(counts, ncounts)?;
        let counts = match c.len() {
            1 => vec![c[0]; s.imm.dim()],
            _ => c.to_vec(),
        };
        let grid = lift(s.imm.grid(&counts))?;
        let mode = match mode {
            ChMode::Ad => DerivMode::Ad,
            ChMode::Fd => DerivMode::Fd,
        };
        let opts = FrameOptions { mode, gauge: Gauge::Canonical, ..FrameOptions::default() };
        let field = lift(extract(&s.imm, &grid, &opts))?;
        let frames = lift(darboux_frame(&s.imm, &grid, &opts))?;
        put(out, Box::into_raw(Box::new(ChField { field, frames })))
    })
}

/// # Safety
/// `f` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ch_field_free(f: *mut ChField) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Number of grid points.
///
/// # Safety
/// `f` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ch_field_len(f: *const ChField) -> usize {
    f.as_ref().map_or(0, |f| f.field.points.len())
}

/// Writes `|ν|` at every grid point (flat grid order, last axis fastest).
///
/// # Safety
/// `out` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn ch_field_nu(f: *const ChField, out: *mut f64, len: usize) -> ChStatus {
    per_point(f, out, len, |p| p.nu_norm)
}

/// Writes the Webster scalar curvature at every grid point.
///
/// # Safety
/// `out` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn ch_field_scalar_curvature(f: *const ChField, out: *mut f64, len: usize) -> ChStatus {
    per_point(f, out, len, |p| p.scalar)
}

unsafe fn per_point(
    f: *const ChField,
    out: *mut f64,
    len: usize,
    g: impl Fn(&cartan_heis::invariants::InvariantPoint) -> f64,
) -> ChStatus {
    guard(|| {
        let f = deref(f)?;
        let pts = &f.field.points;
        if len < pts.len() {
            return Err(fail(ChStatus::BufferTooSmall, format!("need {} values, got {len}", pts.len()), 0, 0));
        }
        for (o, p) in slice_mut(out, pts.len())?.iter_mut().zip(pts) {
            *o = g(p);
        }
        Ok(())
    })
}

/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ch_field_summary(f: *const ChField, out: *mut ChSummary) -> ChStatus {
    guard(|| {
        let s = deref(f)?.field.summary();
        put(
            out,
            ChSummary {
                min_nu: s.min_nu,
                max_nu: s.max_nu,
                max_h: s.max_h,
                max_torsion: s.max_torsion,
                scalar_min: s.scalar_min,
                scalar_max: s.scalar_max,
                tanaka_webster: s.tanaka_webster,
                restriction: s.restriction,
                gauss: s.gauss,
                curvature_torsion: s.curvature_torsion.unwrap_or(f64::NAN),
                nu_recovery: s.nu_recovery.unwrap_or(f64::NAN),
                torsion_link: s.torsion_link,
            },
        )
    })
}

/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ch_field_classify(f: *const ChField, tol: f64, out: *mut ChClass) -> ChStatus {
    guard(|| {
        let c = classify_field(&deref(f)?.field, tol);
        put(
            out,
            match c.class {
                Verticality::Vertical => ChClass::Vertical,
                Verticality::CompletelyNonVertical => ChClass::CompletelyNonVertical,
                Verticality::Mixed => ChClass::Mixed,
            },
        )
    })
}

/// Fits a Heisenberg sphere to a torsion-free completely non-vertical
/// hypersurface. The center `(x, y, t)` is written to `center` (`2n + 1` values).
///
/// # Safety
/// `center` must point to `center_len` writable values and `out` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ch_field_sphere_fit(
    f: *const ChField,
    tol: f64,
    center: *mut f64,
    center_len: usize,
    out: *mut ChSphereFit,
) -> ChStatus {
    guard(|| {
        let f = deref(f)?;
        let fit = lift(detect_sphere(&f.field, &f.frames, tol))?;
        let c = fit.center.to_vec();
        if center_len < c.len() {
            return Err(fail(ChStatus::BufferTooSmall, format!("need {} center values, got {center_len}", c.len()), 0, 0));
        }
        slice_mut(center, c.len())?.copy_from_slice(&c);
        put(out, ChSphereFit { radius: fit.radius, center_residual: fit.center_residual, radius_residual: fit.radius_residual })
    })
}

/// Splits a row-major `(2n+2)×(2n+2)` PSH(n) matrix into its translation
/// (`2n + 1` values) and rotation (row-major `2n × 2n`).
///
/// # Safety
/// Pointers must reference arrays of the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn ch_psh_decompose(
    n: usize,
    matrix: *const f64,
    tol: f64,
    translation: *mut f64,
    rotation: *mut f64,
) -> ChStatus {
    guard(|| {
        if n == 0 {
            return Err(fail_with(Error::InvalidArgument("n must be positive".into())));
        }
        let size = 2 * n + 2;
        let m = DMatrix::from_row_slice(size, size, slice(matrix, size * size)?);
        let g = lift(PSHElement::from_matrix(m, tol))?;
        let (p, rot) = lift(decompose(&g, tol))?;
        slice_mut(translation, 2 * n + 1)?.copy_from_slice(&p.to_vec());
        let out = slice_mut(rotation, 4 * n * n)?;
        for r in 0..2 * n {
            for c in 0..2 * n {
                out[r * 2 * n + c] = rot[(r, c)];
            }
        }
        Ok(())
    })
}
