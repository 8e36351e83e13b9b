//! C ABI for `omega-lab`.
//!
//! Every function returns an [`OmegaStatus`]; results come back through out
//! pointers. On failure, `omega_last_error()` returns a description that
//! stays valid until the next call on the same thread. Tables and Beatty
//! parameters are opaque handles released with their `_free` function.
//! Points on the torus are passed as raw 64-bit numerators `u` of `u / 2^64`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use num_complex::Complex64;
use omega_lab::averages::{run_average, run_equidistribution, AverageSpec, Term};
use omega_lab::fixed::Frac;
use omega_lab::sequences::{BeattyParams, IndexMap};
use omega_lab::torus::{
    initial_point_of_poly, poly_of_initial_point, CyclicSystem, Observable, State, System,
    TorusPoint, UnipotentAffine,
};
use omega_lab::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OmegaStatus {
    Ok = 0,
    InvalidArgument = 1,
    OutOfRange = 2,
    Resource = 3,
    Io = 4,
    Parse = 5,
    Internal = 6,
    NullPointer = 7,
    Panic = 8,
}

/// Ω table handle.
pub struct OmegaTable(omega_lab::OmegaTable);

/// Beatty sequence handle.
pub struct OmegaBeatty(BeattyParams);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(OmegaStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidArgument(_) => OmegaStatus::InvalidArgument,
            Error::OutOfRange { .. } => OmegaStatus::OutOfRange,
            Error::Resource(_) => OmegaStatus::Resource,
            Error::Parse { .. } | Error::Json(_) => OmegaStatus::Parse,
            Error::Io(_) => OmegaStatus::Io,
            Error::Internal(_) => OmegaStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

type FfiResult = Result<(), Failure>;

fn null(what: &str) -> Failure {
    Failure(OmegaStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(OmegaStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> FfiResult) -> OmegaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            OmegaStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            OmegaStatus::Panic
        }
    }
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// Message for the last failed call on this thread ("" after a success).
#[no_mangle]
pub extern "C" fn omega_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Build the Ω table for `2 <= limit <= 2^32 - 1`.
///
/// # Safety
/// `out_table` must be a valid pointer; on success it receives a handle owned by
/// the caller.
#[no_mangle]
pub unsafe extern "C" fn omega_table_build(limit: u64, out_table: *mut *mut OmegaTable) -> OmegaStatus {
    guard(|| {
        let slot = out(out_table, "out_table")?;
        let t = omega_lab::OmegaTable::build(limit)?;
        *slot = Box::into_raw(Box::new(OmegaTable(t)));
        Ok(())
    })
}

/// Load a table from the binary dump format.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out_table` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn omega_table_load(path: *const c_char, out_table: *mut *mut OmegaTable) -> OmegaStatus {
    guard(|| {
        let slot = out(out_table, "out_table")?;
        let t = omega_lab::OmegaTable::load(string(path, "path")?)?;
        *slot = Box::into_raw(Box::new(OmegaTable(t)));
        Ok(())
    })
}

/// Write a table in the binary dump format.
///
/// # Safety
/// `table` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn omega_table_save(table: *const OmegaTable, path: *const c_char) -> OmegaStatus {
    guard(|| {
        handle(table, "table")?.0.save(string(path, "path")?)?;
        Ok(())
    })
}

/// Release a table. Null is ignored.
///
/// # Safety
/// `table` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn omega_table_free(table: *mut OmegaTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn omega_table_limit(table: *const OmegaTable, out_limit: *mut u64) -> OmegaStatus {
    guard(|| {
        *out(out_limit, "out_limit")? = handle(table, "table")?.0.limit();
        Ok(())
    })
}

/// Ω(n) for `1 <= n <= limit`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn omega_table_omega(table: *const OmegaTable, n: u64, out_omega: *mut u8) -> OmegaStatus {
    guard(|| {
        *out(out_omega, "out_omega")? = handle(table, "table")?.0.omega(n)?;
        Ok(())
    })
}

/// λ(n) = (-1)^Ω(n) for `1 <= n <= limit`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn omega_table_liouville(table: *const OmegaTable, n: u64, out_lambda: *mut i8) -> OmegaStatus {
    guard(|| {
        *out(out_lambda, "out_lambda")? = handle(table, "table")?.0.liouville(n)?;
        Ok(())
    })
}

/// For primes `p <= prime_cap`, the fraction with Ω(p + shift) ≡ r mod
/// `modulus`, written to `out_densities[r]` (`out_len >= modulus`).
///
/// # Safety
/// `out_densities` must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn omega_table_shifted_prime_densities(
    table: *const OmegaTable,
    shift: i8,
    modulus: u64,
    prime_cap: u64,
    out_densities: *mut f64,
    out_len: usize,
) -> OmegaStatus {
    guard(|| {
        let t = handle(table, "table")?;
        if (out_len as u64) < modulus {
            return Err(invalid(format!("out_len {out_len} < modulus {modulus}")));
        }
        let dst = slice_mut(out_densities, out_len, "out_densities")?;
        let d = t.0.shifted_prime_omega_densities(shift, modulus, prime_cap)?;
        dst[..d.len()].copy_from_slice(&d);
        Ok(())
    })
}

/// Beatty sequence `[alpha n + beta]` from real literals such as `"sqrt2"`,
/// `"3/2"` or `"0.25"`.
///
/// # Safety
/// Strings must be NUL-terminated; `out_beatty` must be valid.
#[no_mangle]
pub unsafe extern "C" fn omega_beatty_new(
    alpha: *const c_char,
    beta: *const c_char,
    out_beatty: *mut *mut OmegaBeatty,
) -> OmegaStatus {
    guard(|| {
        let slot = out(out_beatty, "out_beatty")?;
        let p = BeattyParams::parse(string(alpha, "alpha")?, string(beta, "beta")?)?;
        *slot = Box::into_raw(Box::new(OmegaBeatty(p)));
        Ok(())
    })
}

/// # Safety
/// `beatty` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn omega_beatty_free(beatty: *mut OmegaBeatty) {
    if !beatty.is_null() {
        drop(Box::from_raw(beatty));
    }
}

/// `[alpha n + beta]`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn omega_beatty_term(beatty: *const OmegaBeatty, n: u64, out_term: *mut u64) -> OmegaStatus {
    guard(|| {
        *out(out_term, "out_term")? = handle(beatty, "beatty")?.0.term(n)?;
        Ok(())
    })
}

/// Whether `m` is a term of the sequence.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn omega_beatty_contains(
    beatty: *const OmegaBeatty,
    m: u64,
    out_member: *mut bool,
) -> OmegaStatus {
    guard(|| {
        *out(out_member, "out_member")? = handle(beatty, "beatty")?.0.contains(m)?;
        Ok(())
    })
}

fn fracs(raw: &[u64]) -> Vec<Frac> {
    raw.iter().map(|&u| Frac(u)).collect()
}

/// `T_beta^n(start)` on the `dim`-torus; negative `n` applies the inverse.
///
/// # Safety
/// `start` and `out_point` must each hold `dim` values.
#[no_mangle]
pub unsafe extern "C" fn omega_unipotent_orbit(
    dim: usize,
    beta: u64,
    start: *const u64,
    n: i64,
    out_point: *mut u64,
) -> OmegaStatus {
    guard(|| {
        let map = UnipotentAffine::new(dim, Frac(beta))?;
        let p = TorusPoint::new(fracs(slice(start, dim, "start")?));
        let q = map.orbit_fast(&p, n)?;
        let dst = slice_mut(out_point, dim, "out_point")?;
        for (d, c) in dst.iter_mut().zip(q.coords()) {
            *d = c.raw();
        }
        Ok(())
    })
}

/// For `P(n) = sum c_j n^j` of degree `k = len - 1 >= 1`, the parameter
/// `x0` and start point (`k` values) whose orbit's last coordinate is
/// `P(n) mod 1`.
///
/// # Safety
/// `coeffs` must hold `len` values, `out_start` `len - 1`.
#[no_mangle]
pub unsafe extern "C" fn omega_initial_point_of_poly(
    coeffs: *const u64,
    len: usize,
    out_x0: *mut u64,
    out_start: *mut u64,
) -> OmegaStatus {
    guard(|| {
        if len < 2 {
            return Err(invalid("need at least two coefficients"));
        }
        let (x0, p) = initial_point_of_poly(&fracs(slice(coeffs, len, "coeffs")?))?;
        *out(out_x0, "out_x0")? = x0.raw();
        let dst = slice_mut(out_start, len - 1, "out_start")?;
        for (d, c) in dst.iter_mut().zip(p.coords()) {
            *d = c.raw();
        }
        Ok(())
    })
}

/// Canonical coefficients (`dim + 1` values) of the polynomial traced by the
/// last coordinate of `T_x0^n(start)`.
///
/// # Safety
/// `start` must hold `dim` values, `out_coeffs` `dim + 1`.
#[no_mangle]
pub unsafe extern "C" fn omega_poly_of_initial_point(
    x0: u64,
    start: *const u64,
    dim: usize,
    out_coeffs: *mut u64,
) -> OmegaStatus {
    guard(|| {
        if dim == 0 {
            return Err(invalid("dimension must be >= 1"));
        }
        let p = TorusPoint::new(fracs(slice(start, dim, "start")?));
        let c = poly_of_initial_point(Frac(x0), &p)?;
        let dst = slice_mut(out_coeffs, dim + 1, "out_coeffs")?;
        for (d, c) in dst.iter_mut().zip(&c) {
            *d = c.raw();
        }
        Ok(())
    })
}

/// Densities of `{n <= n_max : Ω([alpha n + beta]) ≡ r mod modulus}` written
/// to `out_densities[r]` (`out_len >= modulus`).
///
/// # Safety
/// Strings must be NUL-terminated; `out_densities` must hold `out_len`
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn omega_equidistribution(
    table: *const OmegaTable,
    alpha: *const c_char,
    beta: *const c_char,
    modulus: u64,
    n_max: u64,
    out_densities: *mut f64,
    out_len: usize,
) -> OmegaStatus {
    guard(|| {
        let t = handle(table, "table")?;
        if (out_len as u64) < modulus {
            return Err(invalid(format!("out_len {out_len} < modulus {modulus}")));
        }
        let params = BeattyParams::parse(string(alpha, "alpha")?, string(beta, "beta")?)?;
        let dst = slice_mut(out_densities, out_len, "out_densities")?;
        let reports = run_equidistribution(&t.0, &params, modulus, n_max, &[])?;
        for (d, r) in dst.iter_mut().zip(&reports) {
            *d = r.final_value.re;
        }
        Ok(())
    })
}

/// `(1/n_max) sum_{n <= n_max} λ([alpha n + beta])`.
///
/// # Safety
/// Strings must be NUL-terminated; `out_mean` must be valid.
#[no_mangle]
pub unsafe extern "C" fn omega_liouville_beatty_mean(
    table: *const OmegaTable,
    alpha: *const c_char,
    beta: *const c_char,
    n_max: u64,
    out_mean: *mut f64,
) -> OmegaStatus {
    guard(|| {
        let t = handle(table, "table")?;
        let params = BeattyParams::parse(string(alpha, "alpha")?, string(beta, "beta")?)?;
        let slot = out(out_mean, "out_mean")?;
        let term = Term::new(
            System::Cyclic(CyclicSystem::new(2)?),
            Observable::Table(vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)]),
            IndexMap::OmegaOfBeatty(params),
            State::Residue(0),
        )?;
        let spec = AverageSpec { terms: vec![term], weight: None, n_max, checkpoints: Vec::new() };
        *slot = run_average(&spec, Some(&t.0))?.final_value.re;
        Ok(())
    })
}

