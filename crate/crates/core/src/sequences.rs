//! Index transforms `n -> P(n)`, `n -> Ω(n)`, `n -> Ω([αn+β])`, Beatty
//! sequence terms and membership, and unimodular weight sequences with their
//! Cesàro limits.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::fixed::{parse_real, rational_to_f64, Frac};
use crate::sieve::OmegaTable;
use crate::summation::CompensatedSum;

/// Rational weight periods up to this length are averaged exactly; longer
/// ones are reported as generic.
pub const MAX_EXACT_PERIOD: u64 = 1 << 24;

/// Parameters of the Beatty sequence `[αn + β]`, held exactly.
///
/// Both values are put over a common denominator so terms are computed as
/// `floor((A n + B) / D)` in 128-bit integer arithmetic.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BeattyParams {
    alpha: BigRational,
    beta: BigRational,
    a: i128,
    b: i128,
    d: i128,
}

impl BeattyParams {
    pub fn new(alpha: BigRational, beta: BigRational) -> Result<Self> {
        if !alpha.is_positive() {
            return Err(Error::invalid(format!("alpha must be > 0, got {alpha}")));
        }
        let d = alpha.denom().lcm(beta.denom());
        let a = alpha.numer() * (&d / alpha.denom());
        let b = beta.numer() * (&d / beta.denom());
        let fit = |x: &BigInt| {
            x.to_i128()
                .filter(|v| v.unsigned_abs() < (1u128 << 120))
                .ok_or_else(|| Error::invalid("Beatty parameters too large for exact 128-bit evaluation"))
        };
        Ok(BeattyParams {
            a: fit(&a)?,
            b: fit(&b)?,
            d: fit(&d)?,
            alpha,
            beta,
        })
    }

    pub fn parse(alpha: &str, beta: &str) -> Result<Self> {
        Self::new(parse_real(alpha)?, parse_real(beta)?)
    }

    pub fn alpha(&self) -> &BigRational {
        &self.alpha
    }

    pub fn beta(&self) -> &BigRational {
        &self.beta
    }

    pub fn alpha_f64(&self) -> f64 {
        rational_to_f64(&self.alpha)
    }

    /// `α + β >= 1`, the standing hypothesis for averages along `[αn+β]`.
    pub fn meets_unit_condition(&self) -> bool {
        &self.alpha + &self.beta >= BigRational::one()
    }

    // floor((A n + B) / D) without the positivity precondition
    fn floor_at(&self, n: i128) -> Result<i128> {
        let v = self
            .a
            .checked_mul(n)
            .and_then(|x| x.checked_add(self.b))
            .ok_or_else(|| Error::invalid(format!("Beatty term overflows at n = {n}")))?;
        Ok(v.div_euclid(self.d))
    }

    /// `[αn + β]`.
    pub fn term(&self, n: u64) -> Result<u64> {
        let t = self.floor_at(n as i128)?;
        if t < 1 {
            return Err(Error::invalid(format!(
                "[αn+β] = {t} < 1 at n = {n}; the term does not index into N"
            )));
        }
        u64::try_from(t).map_err(|_| Error::invalid(format!("Beatty term {t} exceeds 64 bits")))
    }

    /// Whether `m` is a term `[αn+β]` for some `n >= 1`.
    ///
    /// For `α > 1` the fractional-part criterion is used: `m` is a term iff
    /// `{(m-β)/α}` lies in `(1 - 1/α, 1)` or is exactly 0 (the latter only
    /// happens when some `αn+β` is an integer). The result is cross-checked
    /// against direct inversion. For `α <= 1` direct inversion alone is used.
    pub fn contains(&self, m: u64) -> Result<bool> {
        let by_inversion = self.contains_by_inversion(m)?;
        if self.a > self.d {
            let by_arc = self.contains_by_arc(m)?;
            if by_arc != by_inversion {
                return Err(Error::Internal(format!(
                    "Beatty membership of {m}: arc test says {by_arc}, inversion says {by_inversion}"
                )));
            }
        }
        Ok(by_inversion)
    }

    /// Fractional-part test, valid for `α > 1`.
    pub fn contains_by_arc(&self, m: u64) -> Result<bool> {
        if self.a <= self.d {
            return Err(Error::invalid("arc membership test needs alpha > 1"));
        }
        // (m - β)/α = (m D - B) / A
        let num = (m as i128)
            .checked_mul(self.d)
            .and_then(|x| x.checked_sub(self.b))
            .ok_or_else(|| Error::invalid("Beatty membership overflow"))?;
        if num <= 0 {
            return Ok(false);
        }
        let r = num.rem_euclid(self.a);
        Ok(r == 0 || r > self.a - self.d)
    }

    /// Smallest `n >= max(1, (m-β)/α)` and check whether it lands on `m`.
    pub fn contains_by_inversion(&self, m: u64) -> Result<bool> {
        let num = (m as i128)
            .checked_mul(self.d)
            .and_then(|x| x.checked_sub(self.b))
            .ok_or_else(|| Error::invalid("Beatty membership overflow"))?;
        let n = num_integer::Integer::div_ceil(&num, &self.a).max(1);
        Ok(self.floor_at(n)? == m as i128)
    }
}

impl fmt::Display for BeattyParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a={},b={}", self.alpha, self.beta)
    }
}

/// How the exponent of a system is chosen at step `n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IndexMap {
    Identity,
    /// `P(n)` with integer coefficients in ascending order.
    Polynomial(Vec<i64>),
    OmegaOfN,
    OmegaOfBeatty(BeattyParams),
}

impl IndexMap {
    /// Sieve limit needed to evaluate the map at every `n <= n_max`, if any.
    pub fn required_limit(&self, n_max: u64) -> Result<Option<u64>> {
        Ok(match self {
            IndexMap::OmegaOfN => Some(n_max.max(2)),
            IndexMap::OmegaOfBeatty(p) => {
                // terms are nondecreasing since α > 0
                Some(p.term(n_max)?.max(2))
            }
            _ => None,
        })
    }

    pub fn needs_table(&self) -> bool {
        matches!(self, IndexMap::OmegaOfN | IndexMap::OmegaOfBeatty(_))
    }
}

/// Evaluate an index map at `n`.
pub fn index_value(map: &IndexMap, table: &OmegaTable, n: u64) -> Result<i64> {
    match map {
        IndexMap::Identity => i64::try_from(n).map_err(|_| Error::invalid("index overflow")),
        IndexMap::Polynomial(c) => eval_int_poly(c, n as i128),
        IndexMap::OmegaOfN => Ok(table.omega(n).map_err(|_| range_err(table, n))? as i64),
        IndexMap::OmegaOfBeatty(p) => {
            let m = p.term(n)?;
            Ok(table.omega(m).map_err(|_| range_err(table, m))? as i64)
        }
    }
}

fn range_err(table: &OmegaTable, m: u64) -> Error {
    Error::out_of_range(
        format!("Ω({m}) needed but sieve limit is {}", table.limit()),
        m.max(2),
    )
}

/// Exact integer polynomial evaluation (ascending coefficients).
pub fn eval_int_poly(coeffs: &[i64], n: i128) -> Result<i64> {
    let mut acc: i128 = 0;
    for &c in coeffs.iter().rev() {
        acc = acc
            .checked_mul(n)
            .and_then(|x| x.checked_add(c as i128))
            .ok_or_else(|| Error::invalid(format!("polynomial overflows at n = {n}")))?;
    }
    i64::try_from(acc).map_err(|_| Error::invalid(format!("polynomial value at n = {n} exceeds 64 bits")))
}

impl FromStr for IndexMap {
    type Err = Error;

    /// `id`, `omega`, `omega-beatty:a=<real>,b=<real>`, `poly:c0,c1,...`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, rest) = s.split_once(':').unwrap_or((s, ""));
        match head {
            "id" | "identity" => Ok(IndexMap::Identity),
            "omega" => Ok(IndexMap::OmegaOfN),
            "omega-beatty" => {
                let (mut a, mut b) = ("1".to_string(), "0".to_string());
                for kv in rest.split(',').filter(|p| !p.trim().is_empty()) {
                    match kv.split_once('=') {
                        Some(("a", v)) => a = v.trim().to_string(),
                        Some(("b", v)) => b = v.trim().to_string(),
                        _ => return Err(Error::invalid(format!("bad omega-beatty parameter {kv:?}"))),
                    }
                }
                Ok(IndexMap::OmegaOfBeatty(BeattyParams::parse(&a, &b)?))
            }
            "poly" => {
                let coeffs = rest
                    .split(',')
                    .map(|c| {
                        c.trim()
                            .parse::<i64>()
                            .map_err(|e| Error::invalid(format!("bad coefficient {c:?}: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(IndexMap::Polynomial(coeffs))
            }
            _ => Err(Error::invalid(format!(
                "unknown index map {s:?} (expected id, omega, omega-beatty:a=..,b=.., poly:c0,c1,..)"
            ))),
        }
    }
}

/// Coefficients of a polynomial phase `e(q_d n^d + ... + q_0)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PhasePoly {
    /// `q_j = numerators[j] / modulus`, reduced mod 1.
    Rational { numerators: Vec<u64>, modulus: u64 },
    /// Fixed-point coefficients (denominator `2^64`).
    Fixed(Vec<Frac>),
}

impl PhasePoly {
    /// Exact rationals when their common denominator fits in 62 bits,
    /// otherwise the nearest fixed-point values.
    pub fn from_rationals(coeffs: &[BigRational]) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::invalid("phase polynomial needs at least one coefficient"));
        }
        let q = coeffs
            .iter()
            .fold(BigInt::one(), |acc, c| acc.lcm(c.denom()));
        match q.to_u64().filter(|&q| q <= 1 << 62) {
            Some(modulus) => {
                let numerators = coeffs
                    .iter()
                    .map(|c| {
                        let n = c.numer() * (&q / c.denom());
                        n.mod_floor(&q).to_u64().expect("reduced below modulus")
                    })
                    .collect();
                Ok(PhasePoly::Rational { numerators, modulus })
            }
            None => Ok(PhasePoly::Fixed(coeffs.iter().map(Frac::from_rational).collect())),
        }
    }

    #[inline]
    fn phase_at(&self, n: u64) -> Frac {
        match self {
            PhasePoly::Rational { numerators, modulus } => {
                let q = *modulus as u128;
                let x = n as u128 % q;
                let s = numerators
                    .iter()
                    .rev()
                    .fold(0u128, |acc, &c| (acc * x + c as u128) % q);
                // nearest fixed-point value of s / q
                Frac((((s << 64) + q / 2) / q) as u64)
            }
            PhasePoly::Fixed(c) => Frac(
                c.iter()
                    .rev()
                    .fold(0u64, |acc, c| acc.wrapping_mul(n).wrapping_add(c.0)),
            ),
        }
    }

    fn nonconstant_vanishes(&self) -> bool {
        match self {
            PhasePoly::Rational { numerators, .. } => numerators[1..].iter().all(|&c| c == 0),
            PhasePoly::Fixed(c) => c[1..].iter().all(|c| c.0 == 0),
        }
    }
}

/// A unimodular weight `w(n)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WeightSequence {
    /// `w(n) = e(theta)`.
    Constant(Frac),
    /// `w(n) = λ^n` with `λ = e(theta)`.
    EigenPower(Frac),
    PolyPhase(PhasePoly),
}

/// Cesàro limit of a weight; `generic` marks limits taken from Weyl
/// equidistribution of the intended irrational target rather than computed
/// from an exact period.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CesaroLimit {
    pub value: Complex64,
    pub generic: bool,
}

impl WeightSequence {
    #[inline]
    pub fn value(&self, n: u64) -> Complex64 {
        match self {
            WeightSequence::Constant(t) => t.cis(),
            WeightSequence::EigenPower(t) => Frac(t.0.wrapping_mul(n)).cis(),
            WeightSequence::PolyPhase(p) => p.phase_at(n).cis(),
        }
    }

    pub fn cesaro_limit(&self) -> CesaroLimit {
        let exact = |value| CesaroLimit { value, generic: false };
        match self {
            WeightSequence::Constant(t) => exact(t.cis()),
            WeightSequence::EigenPower(t) if t.0 == 0 => exact(Complex64::new(1.0, 0.0)),
            WeightSequence::EigenPower(_) => exact(Complex64::new(0.0, 0.0)),
            WeightSequence::PolyPhase(p) if p.nonconstant_vanishes() => exact(p.phase_at(0).cis()),
            WeightSequence::PolyPhase(PhasePoly::Rational { modulus, .. })
                if *modulus <= MAX_EXACT_PERIOD =>
            {
                let mut sum = CompensatedSum::default();
                for n in 1..=*modulus {
                    sum.add(self.value(n));
                }
                exact(sum.value() / *modulus as f64)
            }
            WeightSequence::PolyPhase(_) => CesaroLimit {
                value: Complex64::new(0.0, 0.0),
                generic: true,
            },
        }
    }
}

/// `weight_value`.
pub fn weight_value(w: &WeightSequence, n: u64) -> Complex64 {
    w.value(n)
}

/// `weight_cesaro_limit`.
pub fn weight_cesaro_limit(w: &WeightSequence) -> CesaroLimit {
    w.cesaro_limit()
}

fn parse_list(s: &str) -> Result<Vec<BigRational>> {
    s.split(',').map(parse_real).collect()
}

impl FromStr for WeightSequence {
    type Err = Error;

    /// `const:<turns>`, `eigen:<turns>` (λ = e(turns)), `phase:q1,q2,...`
    /// (no constant term), `phase0:q0,q1,...` (with constant term).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("bad weight {s:?}")))?;
        match head {
            "const" => Ok(WeightSequence::Constant(rest.parse()?)),
            "eigen" => Ok(WeightSequence::EigenPower(rest.parse()?)),
            "phase" => {
                let mut c = vec![BigRational::zero()];
                c.extend(parse_list(rest)?);
                Ok(WeightSequence::PolyPhase(PhasePoly::from_rationals(&c)?))
            }
            "phase0" => Ok(WeightSequence::PolyPhase(PhasePoly::from_rationals(&parse_list(rest)?)?)),
            _ => Err(Error::invalid(format!(
                "unknown weight {s:?} (expected const:, eigen:, phase:, phase0:)"
            ))),
        }
    }
}
