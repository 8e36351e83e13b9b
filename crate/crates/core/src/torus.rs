//! Exact simulators for the finite and toral systems: cyclic rotations of
//! `Z_k`, circle rotations, and the unipotent affine skew maps
//!
//! ```text
//! T_beta(x_1, ..., x_k) = (x_1 + beta, x_2 + x_1, ..., x_k + x_{k-1})
//! ```
//!
//! on `T^k`, together with the exact change of variables between an initial
//! point `(beta; x_1..x_k)` and the coefficients of the polynomial traced by
//! the last coordinate.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::fixed::{big_from_u64_wrapping, Frac};

/// Largest polynomial degree / torus dimension for the coefficient transfer
/// (`k!` must fit in 64 bits).
pub const MAX_POLY_DEGREE: usize = 20;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TorusPoint {
    coords: Vec<Frac>,
}

impl TorusPoint {
    pub fn new(coords: Vec<Frac>) -> Self {
        TorusPoint { coords }
    }

    pub fn origin(dim: usize) -> Self {
        TorusPoint {
            coords: vec![Frac::ZERO; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[Frac] {
        &self.coords
    }

    pub fn coord(&self, i: usize) -> Frac {
        self.coords[i]
    }
}

// Points serialize as arrays of decimal strings of the raw numerators.
impl Serialize for TorusPoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let raw: Vec<String> = self.coords.iter().map(|c| c.0.to_string()).collect();
        raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for TorusPoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = Vec::<String>::deserialize(d)?;
        let coords = raw
            .iter()
            .map(|s| s.parse::<u64>().map(Frac).map_err(D::Error::custom))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(TorusPoint { coords })
    }
}

/// `x -> x + 1` on `Z_k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CyclicSystem {
    modulus: u64,
}

impl CyclicSystem {
    pub fn new(modulus: u64) -> Result<Self> {
        if modulus == 0 {
            return Err(Error::invalid("cyclic modulus must be >= 1"));
        }
        Ok(CyclicSystem { modulus })
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn orbit(&self, start: u64, n: u64) -> Result<u64> {
        if start >= self.modulus {
            return Err(Error::invalid(format!(
                "residue {start} not below modulus {}",
                self.modulus
            )));
        }
        Ok(self.orbit_signed(start, n as i128))
    }

    /// `start + n mod k` for any integer `n`; `start` must already be reduced.
    #[inline]
    pub(crate) fn orbit_signed(&self, start: u64, n: i128) -> u64 {
        let k = self.modulus as i128;
        ((start as i128 + n.rem_euclid(k)) % k) as u64
    }
}

/// The skew map `T_beta` on `T^dimension`. Dimension 1 is the circle rotation
/// by `beta`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UnipotentAffine {
    dimension: usize,
    beta: Frac,
}

impl UnipotentAffine {
    pub fn new(dimension: usize, beta: Frac) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::invalid("torus dimension must be >= 1"));
        }
        Ok(UnipotentAffine { dimension, beta })
    }

    pub fn rotation(beta: Frac) -> Self {
        UnipotentAffine { dimension: 1, beta }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn beta(&self) -> Frac {
        self.beta
    }

    fn check(&self, p: &TorusPoint) -> Result<()> {
        if p.dim() != self.dimension {
            return Err(Error::invalid(format!(
                "point has dimension {}, map has dimension {}",
                p.dim(),
                self.dimension
            )));
        }
        Ok(())
    }

    /// One application of the map, in place.
    #[inline]
    pub fn step(&self, coords: &mut [Frac]) {
        for j in (1..coords.len()).rev() {
            let prev = coords[j - 1];
            coords[j] += prev;
        }
        coords[0] += self.beta;
    }

    /// `T^n(start)` by `n` sequential applications.
    pub fn orbit(&self, start: &TorusPoint, n: u64) -> Result<TorusPoint> {
        self.check(start)?;
        let mut p = start.clone();
        for _ in 0..n {
            self.step(&mut p.coords);
        }
        Ok(p)
    }

    /// `T^n(start)` for any integer `n` in `O(k^2 log |n|)` additions, using
    /// `x_j(n) = sum_i binom(n, i) x_{j-i}` with `x_0 = beta`. Agrees
    /// bit-for-bit with [`UnipotentAffine::orbit`].
    pub fn orbit_fast(&self, start: &TorusPoint, n: i64) -> Result<TorusPoint> {
        self.check(start)?;
        let row = BinomialRow::power(self.dimension, n);
        let mut out = TorusPoint::origin(self.dimension);
        row.apply(self.beta, &start.coords, &mut out.coords);
        Ok(out)
    }
}

/// `binom(n, i) mod 2^64` for `i = 0..=k`, i.e. the action of `T^n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct BinomialRow(Vec<u64>);

impl BinomialRow {
    fn identity(k: usize) -> Self {
        let mut v = vec![0u64; k + 1];
        v[0] = 1;
        BinomialRow(v)
    }

    // Vandermonde: binom(a + b, m) = sum_i binom(a, i) binom(b, m - i)
    fn compose(&self, other: &BinomialRow) -> BinomialRow {
        let k = self.0.len();
        let mut out = vec![0u64; k];
        for (i, &a) in self.0.iter().enumerate() {
            if a == 0 {
                continue;
            }
            for (j, &b) in other.0.iter().take(k - i).enumerate() {
                out[i + j] = out[i + j].wrapping_add(a.wrapping_mul(b));
            }
        }
        BinomialRow(out)
    }

    pub(crate) fn power(k: usize, n: i64) -> Self {
        let mut base = vec![0u64; k + 1];
        base[0] = 1;
        if n >= 0 {
            if k >= 1 {
                base[1] = 1;
            }
        } else {
            // binom(-1, i) = (-1)^i
            for (i, b) in base.iter_mut().enumerate() {
                *b = if i % 2 == 0 { 1 } else { u64::MAX };
            }
        }
        let mut base = BinomialRow(base);
        let mut acc = BinomialRow::identity(k);
        let mut e = n.unsigned_abs();
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.compose(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.compose(&base);
            }
        }
        acc
    }

    #[inline]
    pub(crate) fn apply(&self, beta: Frac, start: &[Frac], out: &mut [Frac]) {
        for j in 1..=start.len() {
            let mut acc = self.0[j].wrapping_mul(beta.0);
            for i in 0..j {
                acc = acc.wrapping_add(self.0[i].wrapping_mul(start[j - 1 - i].0));
            }
            out[j - 1] = Frac(acc);
        }
    }
}

/// Exact matrices relating polynomial coefficients `(c_0..c_k)` to the
/// initial data `(x_k, ..., x_1, x_0)` of the skew map, where `x_0` is the
/// rotation amount.
///
/// `vandermonde[i][j] = i^j` and `binomial[i][j] = binom(i, j)` for
/// `0 <= i, j <= k`; then `c = vandermonde^-1 · binomial · (x_k, ..., x_0)`.
/// The inverse transfer `binomial^-1 · vandermonde` is an integer upper
/// triangular matrix with `i!` on the diagonal.
#[derive(Clone, Debug)]
pub struct PolyBasis {
    degree: usize,
    vandermonde: Vec<Vec<BigRational>>,
    vandermonde_inv: Vec<Vec<BigRational>>,
    binomial: Vec<Vec<BigRational>>,
    transfer: Vec<Vec<BigRational>>,
    // binomial^-1 · vandermonde, reduced mod 2^64
    state: Vec<Vec<u64>>,
}

impl PolyBasis {
    pub fn new(degree: usize) -> Result<Self> {
        if degree == 0 {
            return Err(Error::invalid("polynomial degree must be >= 1"));
        }
        if degree > MAX_POLY_DEGREE {
            return Err(Error::invalid(format!(
                "polynomial degree {degree} exceeds {MAX_POLY_DEGREE}"
            )));
        }
        let n = degree + 1;
        let int = |v: BigInt| BigRational::from_integer(v);
        let vandermonde: Vec<Vec<BigRational>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| int(num_traits::pow(BigInt::from(i), j)))
                    .collect()
            })
            .collect();
        let binomial: Vec<Vec<BigRational>> = (0..n)
            .map(|i| (0..n).map(|j| int(binom_big(i, j))).collect())
            .collect();
        let vandermonde_inv = invert(&vandermonde)?;
        let transfer = matmul(&vandermonde_inv, &binomial);
        let state_q = invert(&transfer)?;

        let mut state = vec![vec![0u64; n]; n];
        let mut factorial = BigInt::one();
        for i in 0..n {
            if i > 0 {
                factorial *= i;
            }
            for j in 0..n {
                let e = &state_q[i][j];
                if !e.is_integer() {
                    return Err(Error::Internal(format!("transfer inverse entry ({i},{j}) not integral")));
                }
                let e = e.to_integer();
                if j < i && !e.is_zero() {
                    return Err(Error::Internal("transfer inverse not upper triangular".into()));
                }
                if j == i && e != factorial {
                    return Err(Error::Internal(format!("diagonal entry {i} is not {i}!")));
                }
                state[i][j] = big_from_u64_wrapping(&e);
            }
        }
        Ok(PolyBasis {
            degree,
            vandermonde,
            vandermonde_inv,
            binomial,
            transfer,
            state,
        })
    }

    /// Shared instance per degree.
    pub fn cached(degree: usize) -> Result<Arc<PolyBasis>> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<PolyBasis>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(b) = cache.lock().expect("basis cache poisoned").get(&degree) {
            return Ok(b.clone());
        }
        let b = Arc::new(PolyBasis::new(degree)?);
        cache
            .lock()
            .expect("basis cache poisoned")
            .insert(degree, b.clone());
        Ok(b)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn vandermonde(&self) -> &[Vec<BigRational>] {
        &self.vandermonde
    }

    pub fn vandermonde_inv(&self) -> &[Vec<BigRational>] {
        &self.vandermonde_inv
    }

    pub fn binomial(&self) -> &[Vec<BigRational>] {
        &self.binomial
    }

    /// `vandermonde^-1 · binomial`.
    pub fn transfer(&self) -> &[Vec<BigRational>] {
        &self.transfer
    }

    /// Initial data for coefficients `(c_0..c_k)`: returns `(x_0, (x_1..x_k))`
    /// with `x_0 = k!·c_k` such that the last coordinate of `T_{x_0}^n` is
    /// `c_k n^k + ... + c_0 mod 1` for all `n`.
    pub fn initial_point(&self, coeffs: &[Frac]) -> Result<(Frac, TorusPoint)> {
        let k = self.degree;
        if coeffs.len() != k + 1 {
            return Err(Error::invalid(format!(
                "expected {} coefficients, got {}",
                k + 1,
                coeffs.len()
            )));
        }
        // y[i] = x_{k-i}
        let y: Vec<u64> = self
            .state
            .iter()
            .map(|row| {
                row.iter()
                    .zip(coeffs)
                    .fold(0u64, |acc, (&m, c)| acc.wrapping_add(m.wrapping_mul(c.0)))
            })
            .collect();
        let x0 = Frac(y[k]);
        let coords = (1..=k).map(|j| Frac(y[k - j])).collect();
        Ok((x0, TorusPoint::new(coords)))
    }

    /// Coefficients `(c_0..c_k)` of the polynomial traced by the last
    /// coordinate of `T_{x0}^n(start)`.
    ///
    /// The transfer is not injective mod 1 (integer-valued polynomials such
    /// as `n(n+1)/2` vanish), so the representative with
    /// `c_j < 2^-v` for `v = v_2(j!)` is returned. On that canonical range
    /// this inverts [`PolyBasis::initial_point`] exactly. Points whose `x_0`
    /// (or later residuals) are not divisible by the needed power of two are
    /// outside the image of fixed-point coefficients and are rejected.
    pub fn coefficients(&self, x0: Frac, start: &TorusPoint) -> Result<Vec<Frac>> {
        let k = self.degree;
        if start.dim() != k {
            return Err(Error::invalid(format!(
                "point has dimension {}, basis has degree {k}",
                start.dim()
            )));
        }
        let mut y = vec![0u64; k + 1];
        y[k] = x0.0;
        for j in 1..=k {
            y[k - j] = start.coord(j - 1).0;
        }
        let mut c = vec![0u64; k + 1];
        for i in (0..=k).rev() {
            let mut rhs = y[i];
            for j in i + 1..=k {
                rhs = rhs.wrapping_sub(self.state[i][j].wrapping_mul(c[j]));
            }
            c[i] = solve_scaled(self.state[i][i], rhs).ok_or_else(|| {
                Error::invalid(format!(
                    "initial point has no fixed-point coefficient c_{i} (needs divisibility by {}!)",
                    i
                ))
            })?;
        }
        Ok(c.into_iter().map(Frac).collect())
    }
}

/// Unique `c < 2^(64 - v)` with `a·c ≡ rhs (mod 2^64)`, `v = v_2(a)`.
fn solve_scaled(a: u64, rhs: u64) -> Option<u64> {
    let v = a.trailing_zeros();
    if v > 0 && rhs & ((1u64 << v) - 1) != 0 {
        return None;
    }
    let odd = a >> v;
    // Newton iteration for the 2-adic inverse of an odd number
    let mut inv = odd;
    for _ in 0..6 {
        inv = inv.wrapping_mul(2u64.wrapping_sub(odd.wrapping_mul(inv)));
    }
    let c = (rhs >> v).wrapping_mul(inv);
    Some(if v == 0 { c } else { c & (u64::MAX >> v) })
}

/// `initial_point_of_poly`: see [`PolyBasis::initial_point`].
pub fn initial_point_of_poly(coeffs: &[Frac]) -> Result<(Frac, TorusPoint)> {
    if coeffs.len() < 2 {
        return Err(Error::invalid("need coefficients c_0..c_k with k >= 1"));
    }
    PolyBasis::cached(coeffs.len() - 1)?.initial_point(coeffs)
}

/// `poly_of_initial_point`: see [`PolyBasis::coefficients`].
pub fn poly_of_initial_point(x0: Frac, start: &TorusPoint) -> Result<Vec<Frac>> {
    PolyBasis::cached(start.dim())?.coefficients(x0, start)
}

fn binom_big(n: usize, k: usize) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let mut r = BigInt::one();
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

fn matmul(a: &[Vec<BigRational>], b: &[Vec<BigRational>]) -> Vec<Vec<BigRational>> {
    let n = a.len();
    let m = b[0].len();
    (0..n)
        .map(|i| {
            (0..m)
                .map(|j| {
                    (0..b.len()).fold(BigRational::zero(), |acc, l| acc + &a[i][l] * &b[l][j])
                })
                .collect()
        })
        .collect()
}

/// Gauss-Jordan inverse over the rationals.
pub fn invert(m: &[Vec<BigRational>]) -> Result<Vec<Vec<BigRational>>> {
    let n = m.len();
    let mut a: Vec<Vec<BigRational>> = m.to_vec();
    let mut inv: Vec<Vec<BigRational>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { BigRational::one() } else { BigRational::zero() })
                .collect()
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .find(|&r| !a[r][col].is_zero())
            .ok_or_else(|| Error::Internal("singular matrix".into()))?;
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col].clone();
        for j in 0..n {
            a[col][j] = &a[col][j] / &p;
            inv[col][j] = &inv[col][j] / &p;
        }
        for r in 0..n {
            if r == col || a[r][col].is_zero() {
                continue;
            }
            let f = a[r][col].clone();
            for j in 0..n {
                let t = &f * &a[col][j];
                a[r][j] -= t;
                let t = &f * &inv[col][j];
                inv[r][j] -= t;
            }
        }
    }
    Ok(inv)
}

/// A bounded test function on one of the systems.
#[derive(Clone, Debug, PartialEq)]
pub enum Observable {
    /// Indicator of the half-open arc `[lo, hi)` in coordinate `coord`
    /// (wrapping through 0 when `lo > hi`; empty when `lo == hi`).
    Arc { coord: usize, lo: Frac, hi: Frac },
    /// `theta -> e(freq · theta)` on coordinate `coord`.
    Character { coord: usize, freq: i64 },
    /// Values on `Z_k`, indexed by residue.
    Table(Vec<Complex64>),
}

/// A state of one of the systems.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum State {
    Residue(u64),
    Point(TorusPoint),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum System {
    Cyclic(CyclicSystem),
    Unipotent(UnipotentAffine),
}

impl System {
    pub fn check_state(&self, state: &State) -> Result<()> {
        match (self, state) {
            (System::Cyclic(c), State::Residue(r)) if *r < c.modulus() => Ok(()),
            (System::Cyclic(c), State::Residue(r)) => Err(Error::invalid(format!(
                "residue {r} not below modulus {}",
                c.modulus()
            ))),
            (System::Unipotent(u), State::Point(p)) => u.check(p),
            _ => Err(Error::invalid("state does not belong to system")),
        }
    }

    pub fn check_observable(&self, obs: &Observable) -> Result<()> {
        match (self, obs) {
            (System::Cyclic(c), Observable::Table(v)) if v.len() as u64 == c.modulus() => Ok(()),
            (System::Cyclic(c), Observable::Table(v)) => Err(Error::invalid(format!(
                "table has {} values for Z_{}",
                v.len(),
                c.modulus()
            ))),
            (System::Unipotent(u), Observable::Arc { coord, .. })
            | (System::Unipotent(u), Observable::Character { coord, .. })
                if *coord < u.dimension() =>
            {
                Ok(())
            }
            (System::Unipotent(_), Observable::Arc { .. } | Observable::Character { .. }) => {
                Err(Error::invalid("observable coordinate out of range"))
            }
            _ => Err(Error::invalid("observable domain does not match system")),
        }
    }

    /// `T^n(start)` for any integer `n`.
    pub fn orbit(&self, start: &State, n: i64) -> Result<State> {
        self.check_state(start)?;
        Ok(match (self, start) {
            (System::Cyclic(c), State::Residue(r)) => State::Residue(c.orbit_signed(*r, n as i128)),
            (System::Unipotent(u), State::Point(p)) => State::Point(u.orbit_fast(p, n)?),
            _ => unreachable!("checked above"),
        })
    }
}

impl Observable {
    pub fn sup_norm(&self) -> f64 {
        match self {
            Observable::Arc { .. } | Observable::Character { .. } => 1.0,
            Observable::Table(v) => v.iter().map(|z| z.norm()).fold(0.0, f64::max),
        }
    }

    #[inline]
    pub(crate) fn eval_coords(&self, coords: &[Frac]) -> Complex64 {
        match *self {
            Observable::Arc { coord, lo, hi } => {
                if arc_contains(lo, hi, coords[coord]) {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }
            Observable::Character { coord, freq } => coords[coord].mul_int(freq).cis(),
            Observable::Table(_) => unreachable!("domain checked at configuration"),
        }
    }

    #[inline]
    pub(crate) fn eval_residue(&self, r: u64) -> Complex64 {
        match self {
            Observable::Table(v) => v[r as usize],
            _ => unreachable!("domain checked at configuration"),
        }
    }
}

#[inline]
fn arc_contains(lo: Frac, hi: Frac, x: Frac) -> bool {
    if lo <= hi {
        lo <= x && x < hi
    } else {
        x >= lo || x < hi
    }
}

/// Evaluate an observable on a point of the matching system.
pub fn eval_observable(obs: &Observable, state: &State) -> Result<Complex64> {
    match (obs, state) {
        (Observable::Table(v), State::Residue(r)) => v
            .get(*r as usize)
            .copied()
            .ok_or_else(|| Error::invalid(format!("residue {r} outside table of {}", v.len()))),
        (Observable::Arc { coord, .. } | Observable::Character { coord, .. }, State::Point(p)) => {
            if *coord >= p.dim() {
                return Err(Error::invalid("observable coordinate out of range"));
            }
            Ok(obs.eval_coords(p.coords()))
        }
        _ => Err(Error::invalid("observable domain does not match point")),
    }
}

/// Exact mean of `obs` over the orbit closure of `start`, when the tool can
/// derive it: every cyclic system, rotations (and the rotation factor of a
/// skew map), and trivial characters.
///
/// A fixed-point rotation by `beta` is periodic: its orbit is the coset
/// `start + 2^v Z / 2^64` where `v` is the number of trailing zero bits of
/// `beta`, and the invariant measure is uniform on that coset.
pub fn orbit_mean(system: &System, obs: &Observable, start: &State) -> Option<Complex64> {
    system.check_state(start).ok()?;
    system.check_observable(obs).ok()?;
    match (system, obs, start) {
        (System::Cyclic(_), Observable::Table(v), _) => {
            let sum: Complex64 = v.iter().sum();
            Some(sum / v.len() as f64)
        }
        (System::Unipotent(_), Observable::Character { freq: 0, .. }, _) => {
            Some(Complex64::new(1.0, 0.0))
        }
        (System::Unipotent(u), Observable::Character { coord: 0, freq }, State::Point(p)) => {
            let step = coset_step(u.beta());
            let vanishes = ((*freq as u64 as u128) * step) % (1u128 << 64) != 0;
            Some(if vanishes {
                Complex64::new(0.0, 0.0)
            } else {
                p.coord(0).mul_int(*freq).cis()
            })
        }
        (System::Unipotent(u), Observable::Arc { coord: 0, lo, hi }, State::Point(p)) => {
            let step = coset_step(u.beta());
            let s = p.coord(0).0 as u128 % step;
            let count = |x: u128| if x > s { (x - s - 1) / step + 1 } else { 0 };
            let (lo, hi) = (lo.0 as u128, hi.0 as u128);
            let hits = if lo <= hi {
                count(hi) - count(lo)
            } else {
                count(1u128 << 64) - count(lo) + count(hi)
            };
            let size = (1u128 << 64) / step;
            Some(Complex64::new(hits as f64 / size as f64, 0.0))
        }
        _ => None,
    }
}

fn coset_step(beta: Frac) -> u128 {
    if beta.0 == 0 {
        1u128 << 64
    } else {
        1u128 << beta.0.trailing_zeros()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn horner(coeffs: &[Frac], n: u64) -> Frac {
        Frac(coeffs.iter().rev().fold(0u64, |acc, c| acc.wrapping_mul(n).wrapping_add(c.0)))
    }

    fn canonical_random(rng: &mut ChaCha8Rng, k: usize) -> Vec<Frac> {
        let mut fact = 1u64;
        (0..=k)
            .map(|j| {
                if j > 0 {
                    fact *= j as u64;
                }
                let v = fact.trailing_zeros();
                Frac(rng.gen::<u64>() >> v)
            })
            .collect()
    }

    #[test]
    fn cyclic_examples() {
        assert_eq!(CyclicSystem::new(5).unwrap().orbit(0, 7).unwrap(), 2);
        assert_eq!(CyclicSystem::new(1).unwrap().orbit(0, 1_000_000_000).unwrap(), 0);
        assert_eq!(CyclicSystem::new(2).unwrap().orbit(1, 1).unwrap(), 0);
        assert!(CyclicSystem::new(2).unwrap().orbit(2, 1).is_err());
        assert!(CyclicSystem::new(0).is_err());
        let c = CyclicSystem::new(7).unwrap();
        for s in 0..7 {
            for n in 0..50 {
                assert_eq!(c.orbit(s, n + 7).unwrap(), c.orbit(s, n).unwrap());
            }
        }
        assert_eq!(c.orbit_signed(0, -1), 6);
    }

    #[test]
    fn rotation_orbit() {
        let x0 = Frac(0x1234_5678_9abc_def1);
        let x1 = Frac(0xdead_beef_0000_0001);
        let t = UnipotentAffine::rotation(x0);
        let p = t.orbit(&TorusPoint::new(vec![x1]), 3).unwrap();
        assert_eq!(p.coord(0), x1 + x0.mul_int(3));
    }

    #[test]
    fn origin_is_fixed_without_rotation() {
        let t = UnipotentAffine::new(2, Frac::ZERO).unwrap();
        for n in [0u64, 1, 17, 1000] {
            assert_eq!(t.orbit(&TorusPoint::origin(2), n).unwrap(), TorusPoint::origin(2));
            assert_eq!(t.orbit_fast(&TorusPoint::origin(2), n as i64).unwrap(), TorusPoint::origin(2));
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let t = UnipotentAffine::new(3, Frac::HALF).unwrap();
        assert!(t.orbit(&TorusPoint::origin(2), 1).is_err());
        assert!(t.orbit_fast(&TorusPoint::origin(4), 1).is_err());
        assert!(UnipotentAffine::new(0, Frac::HALF).is_err());
    }

    #[test]
    fn fast_path_matches_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let k = rng.gen_range(1..=6);
            let t = UnipotentAffine::new(k, Frac(rng.gen())).unwrap();
            let start = TorusPoint::new((0..k).map(|_| Frac(rng.gen())).collect());
            let mut p = start.clone();
            for n in 0..300u64 {
                assert_eq!(t.orbit_fast(&start, n as i64).unwrap(), p);
                t.step(&mut p.coords);
            }
            // negative powers invert
            let fwd = t.orbit_fast(&start, 12345).unwrap();
            assert_eq!(t.orbit_fast(&fwd, -12345).unwrap(), start);
        }
    }

    #[test]
    fn random_orbit_against_binomial_sum() {
        // x_k(n) = sum_i binom(n, i) x_{k-i}, x_0 = beta, evaluated with u128 binomials
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let k = 3;
        let t = UnipotentAffine::new(k, Frac(rng.gen())).unwrap();
        let start = TorusPoint::new((0..k).map(|_| Frac(rng.gen())).collect());
        let mut x = vec![t.beta()];
        x.extend_from_slice(start.coords());
        for n in 0..=1000u64 {
            let mut acc = 0u64;
            let mut b: u128 = 1;
            for i in 0..=k {
                acc = acc.wrapping_add((b as u64).wrapping_mul(x[k - i].0));
                b = b * (n as u128).saturating_sub(i as u128) / (i as u128 + 1);
            }
            assert_eq!(t.orbit(&start, n).unwrap().coord(k - 1).0, acc, "n = {n}");
        }
    }

    #[test]
    fn degree_one_is_identity_transfer() {
        let c0 = Frac(0x1111);
        let c1 = Frac(0x2222_3333);
        let (x0, start) = initial_point_of_poly(&[c0, c1]).unwrap();
        assert_eq!(x0, c1);
        assert_eq!(start.coords(), &[c0]);
        assert_eq!(poly_of_initial_point(c1, &TorusPoint::new(vec![c0])).unwrap(), vec![c0, c1]);
        let basis = PolyBasis::new(1).unwrap();
        for (i, row) in basis.transfer().iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                let expect = if i == j { BigRational::one() } else { BigRational::zero() };
                assert_eq!(e, &expect);
            }
        }
    }

    #[test]
    fn quarter_n_squared() {
        let coeffs = [Frac::ZERO, Frac::ZERO, Frac::QUARTER];
        let (x0, start) = initial_point_of_poly(&coeffs).unwrap();
        assert_eq!(x0, Frac::HALF);
        assert_eq!(start.coords(), &[Frac::QUARTER, Frac::ZERO]);
        let t = UnipotentAffine::new(2, x0).unwrap();
        let mut p = start.clone();
        for n in 0..=100u64 {
            assert_eq!(p.coord(1), Frac((n * n).wrapping_mul(1 << 62)), "n = {n}");
            t.step(&mut p.coords);
        }
        assert_eq!(poly_of_initial_point(x0, &start).unwrap(), coeffs.to_vec());
    }

    #[test]
    fn zero_polynomial() {
        for k in 1..=6 {
            let (x0, start) = initial_point_of_poly(&vec![Frac::ZERO; k + 1]).unwrap();
            assert_eq!(x0, Frac::ZERO);
            assert_eq!(start, TorusPoint::origin(k));
        }
        assert!(initial_point_of_poly(&[Frac::ZERO]).is_err());
        assert!(PolyBasis::new(0).is_err());
    }

    #[test]
    fn vandermonde_inverse_is_exact() {
        for k in 1..=8 {
            let b = PolyBasis::new(k).unwrap();
            let prod = matmul(b.vandermonde(), b.vandermonde_inv());
            for (i, row) in prod.iter().enumerate() {
                for (j, e) in row.iter().enumerate() {
                    assert_eq!(e.is_one(), i == j);
                    assert_eq!(e.is_zero(), i != j);
                }
            }
        }
    }

    #[test]
    fn leading_coefficient_relation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in 1..=8 {
            let c = canonical_random(&mut rng, k);
            let (x0, _) = initial_point_of_poly(&c).unwrap();
            let fact: u64 = (1..=k as u64).product();
            assert_eq!(x0, c[k].mul_int(fact as i64));
        }
    }

    #[test]
    fn orbit_traces_polynomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let k = rng.gen_range(1..=4);
            let c = canonical_random(&mut rng, k);
            let (x0, start) = initial_point_of_poly(&c).unwrap();
            let t = UnipotentAffine::new(k, x0).unwrap();
            let mut p = start.clone();
            for n in 0..=1000u64 {
                assert_eq!(p.coord(k - 1), horner(&c, n));
                assert_eq!(p.coord(0), start.coord(0) + x0.mul_int(n as i64));
                t.step(&mut p.coords);
            }
        }
    }

    #[test]
    fn points_outside_image_rejected() {
        // x_0 odd cannot be 2!·c_2 for a fixed-point c_2
        let start = TorusPoint::origin(2);
        assert!(poly_of_initial_point(Frac(1), &start).is_err());
    }

    #[test]
    fn canonicalization_preserves_the_polynomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let k = rng.gen_range(1..=5);
            let c: Vec<Frac> = (0..=k).map(|_| Frac(rng.gen())).collect();
            let (x0, start) = initial_point_of_poly(&c).unwrap();
            let canon = poly_of_initial_point(x0, &start).unwrap();
            for n in 0..200 {
                assert_eq!(horner(&c, n), horner(&canon, n));
            }
        }
    }

    #[test]
    fn observables() {
        let p = State::Point(TorusPoint::new(vec![Frac::QUARTER]));
        let arc = Observable::Arc { coord: 0, lo: Frac::ZERO, hi: Frac::HALF };
        assert_eq!(eval_observable(&arc, &p).unwrap(), Complex64::new(1.0, 0.0));
        let wrap = Observable::Arc { coord: 0, lo: Frac::HALF, hi: Frac::QUARTER };
        assert_eq!(eval_observable(&wrap, &p).unwrap(), Complex64::new(0.0, 0.0));
        let ch0 = Observable::Character { coord: 0, freq: 0 };
        assert_eq!(eval_observable(&ch0, &p).unwrap(), Complex64::new(1.0, 0.0));
        let ch2 = Observable::Character { coord: 0, freq: 2 };
        assert_eq!(eval_observable(&ch2, &p).unwrap(), Complex64::new(-1.0, 0.0));
        let table = Observable::Table(vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)]);
        assert!(eval_observable(&table, &p).is_err());
        assert!(eval_observable(&ch2, &State::Residue(0)).is_err());
        assert_eq!(eval_observable(&table, &State::Residue(1)).unwrap(), Complex64::new(-1.0, 0.0));
    }

    #[test]
    fn rotation_orbit_means() {
        let rot = System::Unipotent(UnipotentAffine::rotation(Frac::QUARTER));
        let start = State::Point(TorusPoint::new(vec![Frac(5)]));
        // orbit is {5, 5 + 1/4, 5 + 1/2, 5 + 3/4}
        let arc = Observable::Arc { coord: 0, lo: Frac::ZERO, hi: Frac::HALF };
        assert_eq!(orbit_mean(&rot, &arc, &start).unwrap().re, 0.5);
        let arc = Observable::Arc { coord: 0, lo: Frac(6), hi: Frac::HALF };
        assert_eq!(orbit_mean(&rot, &arc, &start).unwrap().re, 0.25);
        let ch = Observable::Character { coord: 0, freq: 4 };
        let m = orbit_mean(&rot, &ch, &start).unwrap();
        assert_eq!(m, Frac(5).mul_int(4).cis());
        let ch = Observable::Character { coord: 0, freq: 1 };
        assert_eq!(orbit_mean(&rot, &ch, &start).unwrap(), Complex64::new(0.0, 0.0));
        let golden = System::Unipotent(UnipotentAffine::rotation("golden".parse().unwrap()));
        let origin = State::Point(TorusPoint::origin(1));
        assert_eq!(orbit_mean(&golden, &ch, &origin).unwrap(), Complex64::new(0.0, 0.0));
        let arc = Observable::Arc { coord: 0, lo: Frac::ZERO, hi: Frac::QUARTER };
        let m = orbit_mean(&golden, &arc, &origin).unwrap();
        assert!((m.re - 0.25).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn coefficient_round_trip(seed in any::<u64>(), k in 1usize..=8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = canonical_random(&mut rng, k);
            let (x0, start) = initial_point_of_poly(&c).unwrap();
            prop_assert_eq!(poly_of_initial_point(x0, &start).unwrap(), c);
        }

        #[test]
        fn arc_membership_matches_interval(lo in any::<u64>(), hi in any::<u64>(), x in any::<u64>()) {
            let inside = arc_contains(Frac(lo), Frac(hi), Frac(x));
            let offset = x.wrapping_sub(lo);
            let width = hi.wrapping_sub(lo);
            prop_assert_eq!(inside, offset < width);
        }
    }
}
