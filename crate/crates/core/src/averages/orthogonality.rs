//! Finite estimator for the prime-dilation orthogonality criterion: if
//! `(1/N) sum <A(pn), A(qn)>` is small for distinct primes `p, q` from a set
//! of positive relative density, then `||(1/N) sum A(n)||` is small.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fixed::Frac;
use crate::sieve::OmegaTable;
use crate::summation::{CompensatedSum, SegmentPlan};

/// A bounded sequence in `C^dim`.
pub trait HilbertSequence: Sync {
    fn dim(&self) -> usize {
        1
    }

    /// Largest `n` the sequence is defined at, if bounded.
    fn domain_limit(&self) -> Option<u64> {
        None
    }

    /// Write `A(n)` into `out` (length `dim()`).
    fn fill(&self, n: u64, out: &mut [Complex64]);
}

/// Scalar unimodular sequences.
#[derive(Clone, Copy, Debug)]
pub enum UnitSequence<'a> {
    /// `A(n) = e(theta)`.
    Constant(Frac),
    /// `A(n) = λ(n)`.
    Liouville(&'a OmegaTable),
    /// `A(n) = e(n theta)`.
    Character(Frac),
}

impl HilbertSequence for UnitSequence<'_> {
    fn domain_limit(&self) -> Option<u64> {
        match self {
            UnitSequence::Liouville(t) => Some(t.limit()),
            _ => None,
        }
    }

    #[inline]
    fn fill(&self, n: u64, out: &mut [Complex64]) {
        out[0] = match self {
            UnitSequence::Constant(t) => t.cis(),
            UnitSequence::Liouville(t) => {
                if t.omega_at(n) % 2 == 0 {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(-1.0, 0.0)
                }
            }
            UnitSequence::Character(t) => Frac(t.0.wrapping_mul(n)).cis(),
        };
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairCorrelation {
    pub p: u64,
    pub q: u64,
    pub value: Complex64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrthogonalityReport {
    pub n_max: u64,
    pub prime_pairs: Vec<PairCorrelation>,
    pub mean_norm: f64,
    pub hypothesis_max: f64,
    pub threshold: f64,
    /// False only when every correlation is below `threshold` while the mean
    /// is not, i.e. the finite data contradicts the implication.
    pub implication_consistent: bool,
}

/// Distinct pairs `p < q` from `primes`, ordered by `q` then `p`.
fn prime_pairs(primes: &[u64], count: usize) -> Vec<(u64, u64)> {
    let mut out = Vec::with_capacity(count);
    'outer: for (j, &q) in primes.iter().enumerate() {
        for &p in &primes[..j] {
            if out.len() == count {
                break 'outer;
            }
            out.push((p, q));
        }
    }
    out
}

pub fn run_orthogonality(
    generator: &dyn HilbertSequence,
    primes: &[u64],
    pair_count: usize,
    n_max: u64,
    threshold: f64,
) -> Result<OrthogonalityReport> {
    if pair_count == 0 {
        return Err(Error::invalid("need at least one prime pair"));
    }
    if !(threshold > 0.0) {
        return Err(Error::invalid("threshold must be positive"));
    }
    let pairs = prime_pairs(primes, pair_count);
    if pairs.len() < pair_count {
        return Err(Error::invalid(format!(
            "{} primes give only {} pairs, {pair_count} requested",
            primes.len(),
            pairs.len()
        )));
    }
    let max_prime = pairs.iter().map(|&(_, q)| q).max().unwrap_or(1);
    let needed = max_prime
        .checked_mul(n_max)
        .ok_or_else(|| Error::invalid("prime times horizon overflows"))?;
    if let Some(limit) = generator.domain_limit() {
        if needed > limit {
            return Err(Error::out_of_range(
                format!("sequence defined up to {limit}, correlations need A({needed})"),
                needed,
            ));
        }
    }
    let plan = SegmentPlan::new(n_max, &[])?;
    let dim = generator.dim();
    // slot 0: mean coordinates; then one slot per pair
    let seg: Vec<Vec<Complex64>> = plan.map(|lo, hi| {
        let mut mean = vec![CompensatedSum::default(); dim];
        let mut corr = vec![CompensatedSum::default(); pairs.len()];
        let mut a = vec![Complex64::new(0.0, 0.0); dim];
        let mut b = vec![Complex64::new(0.0, 0.0); dim];
        for n in lo..=hi {
            generator.fill(n, &mut a);
            for (m, &x) in mean.iter_mut().zip(&a) {
                m.add(x);
            }
            for (c, &(p, q)) in corr.iter_mut().zip(&pairs) {
                generator.fill(p * n, &mut a);
                generator.fill(q * n, &mut b);
                let inner: Complex64 = a.iter().zip(&b).map(|(x, y)| x * y.conj()).sum();
                c.add(inner);
            }
        }
        Ok(mean.iter().chain(corr.iter()).map(|s| s.value()).collect())
    })?;

    let total = |slot: usize| {
        let column: Vec<Complex64> = seg.iter().map(|v| v[slot]).collect();
        plan.prefix_sums(&column)[0] / n_max as f64
    };
    let mean_norm = (0..dim).map(|i| total(i).norm_sqr()).sum::<f64>().sqrt();
    let prime_pairs: Vec<PairCorrelation> = pairs
        .iter()
        .enumerate()
        .map(|(i, &(p, q))| PairCorrelation {
            p,
            q,
            value: total(dim + i),
        })
        .collect();
    let hypothesis_max = prime_pairs
        .iter()
        .map(|c| c.value.norm())
        .fold(0.0, f64::max);
    Ok(OrthogonalityReport {
        n_max,
        implication_consistent: !(hypothesis_max <= threshold && mean_norm > threshold),
        prime_pairs,
        mean_norm,
        hypothesis_max,
        threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geometric(theta: Frac, n: u64) -> Complex64 {
        let e = |x: Frac| Complex64::from_polar(1.0, std::f64::consts::TAU * x.to_f64());
        if theta.0 == 0 {
            return Complex64::new(1.0, 0.0);
        }
        e(theta) * (e(theta.mul_int(n as i64)) - 1.0) / (e(theta) - 1.0) / n as f64
    }

    #[test]
    fn pair_order() {
        assert_eq!(
            prime_pairs(&[2, 3, 5, 7], 4),
            vec![(2, 3), (2, 5), (3, 5), (2, 7)]
        );
    }

    #[test]
    fn constant_sequence_fails_hypothesis() {
        let primes = [2, 3, 5, 7, 11];
        let r = run_orthogonality(&UnitSequence::Constant(Frac(987_654_321)), &primes, 6, 1000, 0.05).unwrap();
        for c in &r.prime_pairs {
            assert!((c.value - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        }
        assert!((r.mean_norm - 1.0).abs() < 1e-14);
        assert!(r.implication_consistent);
    }

    #[test]
    fn liouville_correlations_are_one() {
        let t = OmegaTable::build(200_000).unwrap();
        let r = run_orthogonality(&UnitSequence::Liouville(&t), t.primes(), 10, 10_000, 0.05).unwrap();
        for c in &r.prime_pairs {
            assert_eq!(c.value, Complex64::new(1.0, 0.0));
        }
        assert_eq!(r.hypothesis_max, 1.0);
        assert!(run_orthogonality(&UnitSequence::Liouville(&t), t.primes(), 10, 100_000, 0.05).is_err());
    }

    #[test]
    fn character_matches_closed_form() {
        let theta: Frac = "golden".parse().unwrap();
        let primes = [2u64, 3, 5, 7, 11, 13];
        let r = run_orthogonality(&UnitSequence::Character(theta), &primes, 10, 20_000, 0.05).unwrap();
        for c in &r.prime_pairs {
            let phi = theta.mul_int(c.p as i64) - theta.mul_int(c.q as i64);
            assert!((c.value - geometric(phi, 20_000)).norm() < 1e-12);
        }
        assert!((r.mean_norm - geometric(theta, 20_000).norm()).abs() < 1e-12);
        assert!(r.implication_consistent);
    }

    #[test]
    fn vector_valued_sequences() {
        struct Pair(Frac);
        impl HilbertSequence for Pair {
            fn dim(&self) -> usize {
                2
            }
            fn fill(&self, n: u64, out: &mut [Complex64]) {
                out[0] = Frac(self.0 .0.wrapping_mul(n)).cis() / 2f64.sqrt();
                out[1] = Complex64::new(1.0 / 2f64.sqrt(), 0.0);
            }
        }
        let r = run_orthogonality(&Pair(Frac::HALF), &[2, 3, 5], 3, 1000, 0.05).unwrap();
        // <A(pn), A(qn)> = (e((p-q)n/2) + 1)/2
        assert!((r.prime_pairs[0].value.re - 0.5).abs() < 1e-14); // p - q odd
        assert!((r.prime_pairs[2].value.re - 1.0).abs() < 1e-14); // 3, 5: even difference
        assert!((r.mean_norm - (0.5f64).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn argument_errors() {
        let s = UnitSequence::Constant(Frac::ZERO);
        assert!(run_orthogonality(&s, &[2, 3], 0, 10, 0.1).is_err());
        assert!(run_orthogonality(&s, &[2, 3], 2, 10, 0.1).is_err());
        assert!(run_orthogonality(&s, &[2, 3], 1, 10, 0.0).is_err());
    }
}
