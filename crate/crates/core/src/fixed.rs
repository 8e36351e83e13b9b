//! Fixed-point fractions of the unit circle and exact real-number literals.
//!
//! A [`Frac`] is an element `u / 2^64` of the circle group, stored as the raw
//! numerator `u`. Addition wraps, so circle arithmetic is exact. Literals such
//! as `3/2`, `0.125`, `sqrt2` or `golden` parse into exact rationals; the
//! irrational names resolve to their nearest Q64.64 approximant.

use std::fmt;
use std::ops::{Add, AddAssign, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_rational::{BigRational, Ratio};
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

const TWO_POW_64: f64 = 18_446_744_073_709_551_616.0;

/// A point of `R/Z` with denominator `2^64`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Frac(pub u64);

impl Frac {
    pub const ZERO: Frac = Frac(0);
    pub const HALF: Frac = Frac(1 << 63);
    pub const QUARTER: Frac = Frac(1 << 62);

    #[inline]
    pub fn raw(self) -> u64 {
        self.0
    }

    /// Nearest fixed-point value to `num / den`, reduced mod 1.
    pub fn from_ratio(num: i64, den: i64) -> Result<Frac> {
        if den == 0 {
            return Err(Error::invalid("zero denominator"));
        }
        Ok(Frac::from_rational(&BigRational::new(num.into(), den.into())))
    }

    /// Nearest fixed-point value to `r mod 1` (ties round up).
    pub fn from_rational(r: &BigRational) -> Frac {
        let scaled = r * BigRational::from_integer(BigInt::one() << 64u32);
        let half = BigRational::new(BigInt::one(), BigInt::from(2));
        let rounded = (scaled + half).floor().to_integer();
        let modulus = BigInt::one() << 64u32;
        let reduced = rounded.mod_floor(&modulus);
        Frac(reduced.to_u64().expect("reduced mod 2^64"))
    }

    pub fn to_rational(self) -> BigRational {
        BigRational::new(BigInt::from(self.0), BigInt::one() << 64u32)
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.0 as f64 / TWO_POW_64
    }

    /// `m · self mod 1`, exact.
    #[inline]
    pub fn mul_int(self, m: i64) -> Frac {
        Frac(self.0.wrapping_mul(m as u64))
    }

    /// `e(self) = exp(2πi·self)`. Exact at multiples of 1/4.
    pub fn cis(self) -> Complex64 {
        let quadrant = self.0 >> 62;
        let rest = self.0 & ((1u64 << 62) - 1);
        let (c, s) = if rest == 0 {
            (1.0, 0.0)
        } else {
            let angle = rest as f64 * (std::f64::consts::TAU / TWO_POW_64);
            let (s, c) = angle.sin_cos();
            (c, s)
        };
        match quadrant {
            0 => Complex64::new(c, s),
            1 => Complex64::new(-s, c),
            2 => Complex64::new(-c, -s),
            _ => Complex64::new(s, -c),
        }
    }
}

impl Add for Frac {
    type Output = Frac;
    #[inline]
    fn add(self, rhs: Frac) -> Frac {
        Frac(self.0.wrapping_add(rhs.0))
    }
}

impl AddAssign for Frac {
    #[inline]
    fn add_assign(&mut self, rhs: Frac) {
        self.0 = self.0.wrapping_add(rhs.0);
    }
}

impl Sub for Frac {
    type Output = Frac;
    #[inline]
    fn sub(self, rhs: Frac) -> Frac {
        Frac(self.0.wrapping_sub(rhs.0))
    }
}

impl Neg for Frac {
    type Output = Frac;
    #[inline]
    fn neg(self) -> Frac {
        Frac(self.0.wrapping_neg())
    }
}

impl fmt::Display for Frac {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/2^64", self.0)
    }
}

impl FromStr for Frac {
    type Err = Error;

    /// Any real literal accepted by [`parse_real`], reduced mod 1, or a raw
    /// numerator written `raw:<u64>`.
    fn from_str(s: &str) -> Result<Frac> {
        if let Some(raw) = s.trim().strip_prefix("raw:") {
            return raw
                .parse::<u64>()
                .map(Frac)
                .map_err(|e| Error::invalid(format!("bad raw fraction {raw:?}: {e}")));
        }
        Ok(Frac::from_rational(&parse_real(s)?))
    }
}

/// Parse a real literal into an exact rational.
///
/// Accepted forms: `7`, `-3/2`, `0.125`, `1e-3`-free decimals, `sqrtN` for a
/// non-square integer `N` (nearest Q64.64 value), `golden`/`phi` (the golden
/// ratio, nearest Q64.64 value), and `X+Y` sums of these (e.g. `1+sqrt2`).
pub fn parse_real(s: &str) -> Result<BigRational> {
    let s = s.trim();
    if s.is_empty() {
        return Err(Error::invalid("empty real literal"));
    }
    // split top-level sums, keeping a leading sign with its term
    if let Some(pos) = s[1..].find('+').map(|p| p + 1) {
        return Ok(parse_real(&s[..pos])? + parse_real(&s[pos + 1..])?);
    }
    let (negative, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest.trim()),
        None => (false, s),
    };
    let value = parse_unsigned_real(body)?;
    Ok(if negative { -value } else { value })
}

fn parse_unsigned_real(s: &str) -> Result<BigRational> {
    let bad = || Error::invalid(format!("cannot parse real literal {s:?}"));
    match s {
        "golden" | "phi" => return Ok(golden_q64()),
        _ => {}
    }
    if let Some(radicand) = s.strip_prefix("sqrt") {
        let radicand: u64 = radicand.parse().map_err(|_| bad())?;
        return Ok(sqrt_q64(radicand));
    }
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(Error::invalid(format!("zero denominator in {s:?}")));
        }
        return Ok(BigRational::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        if !frac.chars().all(|c| c.is_ascii_digit())
            || !int.chars().all(|c| c.is_ascii_digit())
            || (int.is_empty() && frac.is_empty())
        {
            return Err(bad());
        }
        let digits = format!("{int}{frac}");
        let n: BigInt = if digits.is_empty() {
            BigInt::zero()
        } else {
            digits.parse().map_err(|_| bad())?
        };
        let d = num_traits::pow(BigInt::from(10), frac.len());
        return Ok(BigRational::new(n, d));
    }
    let n: BigInt = s.parse().map_err(|_| bad())?;
    Ok(BigRational::from_integer(n))
}

/// Nearest multiple of `2^-64` to `sqrt(radicand)`.
fn sqrt_q64(radicand: u64) -> BigRational {
    // floor(sqrt(r) * 2^65), then round away the extra bit
    let x = (BigInt::from(radicand) << 130u32).sqrt();
    let rounded = (x + 1u32) >> 1u32;
    BigRational::new(rounded, BigInt::one() << 64u32)
}

/// Nearest multiple of `2^-64` to `(1 + sqrt 5) / 2`.
fn golden_q64() -> BigRational {
    let s = (BigInt::from(5u32) << 132u32).sqrt(); // floor(sqrt5 * 2^66)
    let numerator = ((BigInt::one() << 66u32) + s + 4u32) >> 3u32;
    BigRational::new(numerator, BigInt::one() << 64u32)
}

/// Convert an exact rational into a machine-width ratio, failing on overflow.
pub fn to_ratio_i128(r: &BigRational) -> Result<Ratio<i128>> {
    let n = r
        .numer()
        .to_i128()
        .ok_or_else(|| Error::invalid(format!("numerator of {r} exceeds 128 bits")))?;
    let d = r
        .denom()
        .to_i128()
        .ok_or_else(|| Error::invalid(format!("denominator of {r} exceeds 128 bits")))?;
    Ok(Ratio::new(n, d))
}

pub(crate) fn big_from_u64_wrapping(x: &BigInt) -> u64 {
    let m = x.mod_floor(&(BigInt::one() << 64u32));
    m.to_u64().expect("reduced mod 2^64")
}

pub(crate) fn rational_to_f64(r: &BigRational) -> f64 {
    let sign = if r.is_negative() { -1.0 } else { 1.0 };
    let a = r.abs();
    let int = a.floor().to_integer();
    let frac = a - BigRational::from_integer(int.clone());
    let frac_f = Frac::from_rational(&frac).to_f64();
    sign * (int.to_f64().unwrap_or(f64::INFINITY) + frac_f)
}
