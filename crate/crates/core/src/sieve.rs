//! Tables of Ω(n) (prime factors counted with multiplicity), λ(n) = (-1)^Ω(n)
//! and the primes up to a fixed limit.
//!
//! Construction runs a segmented prime-power sieve: every segment records,
//! for each `n`, how many prime powers `p^e <= sqrt(limit)` divide it and the
//! product of the matching primes. Whatever cofactor is left is a single prime
//! above the square root. Segments are independent and sieved in parallel.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Default number of integers sieved per segment.
pub const DEFAULT_SEGMENT: usize = 1 << 22;

/// Largest limit the table supports (cofactor products are tracked in `u32`).
pub const MAX_LIMIT: u64 = u32::MAX as u64;

#[derive(Clone, Debug)]
pub struct OmegaTable {
    limit: u64,
    // omega[n] for n in 0..=limit; omega[0] is a placeholder and never served
    omega: Vec<u8>,
    primes: Vec<u64>,
}

impl OmegaTable {
    pub fn build(limit: u64) -> Result<Self> {
        Self::build_with_segment(limit, DEFAULT_SEGMENT)
    }

    pub fn build_with_segment(limit: u64, segment: usize) -> Result<Self> {
        if limit < 2 {
            return Err(Error::invalid(format!("sieve limit must be >= 2, got {limit}")));
        }
        if limit > MAX_LIMIT {
            return Err(Error::invalid(format!(
                "sieve limit {limit} exceeds supported maximum {MAX_LIMIT}"
            )));
        }
        if segment == 0 {
            return Err(Error::invalid("segment size must be positive"));
        }
        let len = usize::try_from(limit + 1)
            .map_err(|_| Error::Resource(format!("limit {limit} does not fit in memory")))?;
        let mut omega = Vec::new();
        omega
            .try_reserve_exact(len)
            .map_err(|e| Error::Resource(format!("cannot allocate {len} bytes: {e}")))?;
        omega.resize(len, 0u8);

        let base = small_primes(isqrt(limit));
        omega
            .par_chunks_mut(segment)
            .enumerate()
            .for_each(|(i, chunk)| sieve_segment((i * segment) as u64, chunk, &base));

        let primes = collect_primes(&omega);
        Ok(OmegaTable { limit, omega, primes })
    }

    #[inline]
    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn primes(&self) -> &[u64] {
        &self.primes
    }

    /// Ω(n) for `1 <= n <= limit`.
    pub fn omega(&self, n: u64) -> Result<u8> {
        self.get(n)
            .ok_or_else(|| Error::out_of_range(format!("Ω({n})"), n.max(2)))
    }

    #[inline]
    pub fn get(&self, n: u64) -> Option<u8> {
        if n == 0 || n > self.limit {
            None
        } else {
            Some(self.omega[n as usize])
        }
    }

    /// Unchecked lookup for hot loops; the caller guarantees `1 <= n <= limit`.
    #[inline]
    pub(crate) fn omega_at(&self, n: u64) -> u8 {
        debug_assert!(n >= 1 && n <= self.limit);
        self.omega[n as usize]
    }

    /// λ(n) = (-1)^Ω(n).
    pub fn liouville(&self, n: u64) -> Result<i8> {
        Ok(if self.omega(n)? % 2 == 0 { 1 } else { -1 })
    }

    /// Ensure `n` is covered, naming the limit that would be needed otherwise.
    pub fn require(&self, n: u64, what: &str) -> Result<()> {
        if n > self.limit || n == 0 {
            Err(Error::out_of_range(
                format!("{what}: argument {n} exceeds sieve limit {}", self.limit),
                n.max(2),
            ))
        } else {
            Ok(())
        }
    }

    /// Write the table as an 8-byte little-endian limit followed by one byte
    /// per `n` in `1..=limit`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&self.limit.to_le_bytes())?;
        w.write_all(&self.omega[1..])?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut header = [0u8; 8];
        r.read_exact(&mut header)?;
        let limit = u64::from_le_bytes(header);
        if !(2..=MAX_LIMIT).contains(&limit) {
            return Err(Error::invalid(format!("sieve dump has invalid limit {limit}")));
        }
        let len = limit as usize + 1;
        let mut omega = Vec::new();
        omega
            .try_reserve_exact(len)
            .map_err(|e| Error::Resource(format!("cannot allocate {len} bytes: {e}")))?;
        omega.push(0u8);
        r.take(limit).read_to_end(&mut omega)?;
        if omega.len() != len {
            return Err(Error::invalid(format!(
                "sieve dump truncated: expected {limit} entries, found {}",
                omega.len() - 1
            )));
        }
        if omega[1] != 0 || omega[2] != 1 {
            return Err(Error::invalid("sieve dump is corrupt (Ω(1) or Ω(2) wrong)"));
        }
        let primes = collect_primes(&omega);
        Ok(OmegaTable { limit, omega, primes })
    }

    /// For the primes `p <= prime_cap`, the fraction with Ω(p + shift) ≡ r
    /// (mod `modulus`), for each residue `r`.
    pub fn shifted_prime_omega_densities(
        &self,
        shift: i8,
        modulus: u64,
        prime_cap: u64,
    ) -> Result<Vec<f64>> {
        if modulus == 0 {
            return Err(Error::invalid("modulus must be >= 1"));
        }
        if shift != 1 && shift != -1 {
            return Err(Error::invalid(format!("shift must be +1 or -1, got {shift}")));
        }
        if prime_cap < 2 {
            return Err(Error::invalid("prime cap must be >= 2"));
        }
        let needed = if shift > 0 { prime_cap + 1 } else { prime_cap };
        self.require(needed, "shifted prime")?;
        let mut counts = vec![0u64; modulus as usize];
        let mut total = 0u64;
        for &p in self.primes.iter().take_while(|&&p| p <= prime_cap) {
            let m = if shift > 0 { p + 1 } else { p - 1 };
            counts[(self.omega_at(m) as u64 % modulus) as usize] += 1;
            total += 1;
        }
        Ok(counts.into_iter().map(|c| c as f64 / total as f64).collect())
    }
}

fn sieve_segment(lo: u64, chunk: &mut [u8], base: &[u64]) {
    let hi = lo + chunk.len() as u64; // exclusive
    let mut prod = vec![1u32; chunk.len()];
    for &p in base {
        let mut pk = p;
        loop {
            let first = lo.div_ceil(pk).max(1) * pk;
            let mut m = first;
            while m < hi {
                let i = (m - lo) as usize;
                chunk[i] += 1;
                prod[i] *= p as u32;
                m += pk;
            }
            match pk.checked_mul(p) {
                Some(next) if next < hi => pk = next,
                _ => break,
            }
        }
    }
    for (i, (om, &pr)) in chunk.iter_mut().zip(prod.iter()).enumerate() {
        let n = lo + i as u64;
        if n >= 2 && pr as u64 != n {
            *om += 1;
        }
    }
}

fn collect_primes(omega: &[u8]) -> Vec<u64> {
    omega
        .iter()
        .enumerate()
        .skip(2)
        .filter(|&(_, &o)| o == 1)
        .map(|(n, _)| n as u64)
        .collect()
}

/// Primes `<= n` by a plain sieve of Eratosthenes.
pub fn small_primes(n: u64) -> Vec<u64> {
    let n = n as usize;
    if n < 2 {
        return Vec::new();
    }
    let mut composite = vec![false; n + 1];
    let mut out = Vec::new();
    for i in 2..=n {
        if !composite[i] {
            out.push(i as u64);
            let mut j = i * i;
            while j <= n {
                composite[j] = true;
                j += i;
            }
        }
    }
    out
}

pub(crate) fn isqrt(n: u64) -> u64 {
    let mut r = (n as f64).sqrt() as u64;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trial_omega(mut n: u64) -> u8 {
        let mut count = 0;
        let mut d = 2;
        while d * d <= n {
            while n % d == 0 {
                n /= d;
                count += 1;
            }
            d += 1;
        }
        if n > 1 {
            count += 1;
        }
        count
    }

    #[test]
    fn small_examples() {
        let t = OmegaTable::build(12).unwrap();
        assert_eq!(t.omega(12).unwrap(), 3);
        assert_eq!(t.omega(1).unwrap(), 0);
        let t = OmegaTable::build(2).unwrap();
        assert_eq!(t.omega(1).unwrap(), 0);
        assert_eq!(t.omega(2).unwrap(), 1);
        assert_eq!(t.primes(), &[2]);
        let t = OmegaTable::build(100).unwrap();
        assert_eq!(t.omega(60).unwrap(), 4);
        assert_eq!(t.omega(97).unwrap(), 1);
        assert_eq!(t.liouville(1).unwrap(), 1);
        assert_eq!(t.liouville(2).unwrap(), -1);
        assert_eq!(t.liouville(12).unwrap(), -1);
    }

    #[test]
    fn prime_power_at_the_limit() {
        let t = OmegaTable::build(1 << 20).unwrap();
        assert_eq!(t.omega(1 << 20).unwrap(), 20);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(OmegaTable::build(1), Err(Error::InvalidArgument(_))));
        assert!(matches!(OmegaTable::build(0), Err(Error::InvalidArgument(_))));
        let t = OmegaTable::build(50).unwrap();
        assert!(matches!(t.omega(0), Err(Error::OutOfRange { .. })));
        assert!(matches!(t.omega(51), Err(Error::OutOfRange { .. })));
        assert!(t.liouville(51).is_err());
        assert!(matches!(
            t.shifted_prime_omega_densities(1, 0, 10),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            t.shifted_prime_omega_densities(1, 2, 50),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn segment_size_does_not_matter() {
        let a = OmegaTable::build_with_segment(100_000, 1 << 22).unwrap();
        for seg in [1usize, 7, 64, 1000, 65_536] {
            let b = OmegaTable::build_with_segment(100_000, seg).unwrap();
            assert_eq!(a.omega, b.omega, "segment {seg}");
        }
    }

    #[test]
    fn agrees_with_trial_division() {
        let t = OmegaTable::build(2_000_000).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10_000 {
            let n = rng.gen_range(1..=t.limit());
            assert_eq!(t.omega(n).unwrap(), trial_omega(n), "n = {n}");
        }
        for n in 1..=5000 {
            assert_eq!(t.omega(n).unwrap(), trial_omega(n), "n = {n}");
        }
    }

    #[test]
    fn primes_match_eratosthenes() {
        let t = OmegaTable::build(1_000_000).unwrap();
        assert_eq!(t.primes(), small_primes(1_000_000).as_slice());
        for &p in t.primes() {
            assert_eq!(t.omega(p).unwrap(), 1);
        }
    }

    #[test]
    fn omega_bounded_by_log2() {
        let t = OmegaTable::build(1 << 16).unwrap();
        for n in 2..=t.limit() {
            assert!(t.omega(n).unwrap() as u32 <= n.ilog2());
        }
    }

    #[test]
    fn dump_round_trip() {
        let t = OmegaTable::build(10_000).unwrap();
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 10_000);
        assert_eq!(&buf[..8], &10_000u64.to_le_bytes());
        let back = OmegaTable::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.omega, t.omega);
        assert_eq!(back.primes, t.primes);
        assert!(OmegaTable::read_from(&mut &buf[..100]).is_err());
    }

    #[test]
    fn shifted_prime_single_class() {
        let t = OmegaTable::build(1000).unwrap();
        assert_eq!(t.shifted_prime_omega_densities(-1, 1, 999).unwrap(), vec![1.0]);
        assert_eq!(t.shifted_prime_omega_densities(1, 1, 999).unwrap(), vec![1.0]);
    }

    #[test]
    fn shifted_prime_against_trial_division() {
        let t = OmegaTable::build(100_001).unwrap();
        let d = t.shifted_prime_omega_densities(1, 3, 100_000).unwrap();
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let primes: Vec<u64> = t.primes().iter().copied().filter(|&p| p <= 100_000).collect();
        let mut counts = [0u64; 3];
        for &p in &primes {
            counts[(trial_omega(p + 1) % 3) as usize] += 1;
        }
        for r in 0..3 {
            assert_eq!(d[r], counts[r] as f64 / primes.len() as f64);
        }
    }

    proptest! {
        #[test]
        fn complete_additivity(m in 1u64..3000, n in 1u64..3000) {
            let t = table_10m_shared();
            prop_assert_eq!(
                t.omega(m * n).unwrap(),
                t.omega(m).unwrap() + t.omega(n).unwrap()
            );
        }
    }

    fn table_10m_shared() -> &'static OmegaTable {
        static T: std::sync::OnceLock<OmegaTable> = std::sync::OnceLock::new();
        T.get_or_init(|| OmegaTable::build(9_000_000).unwrap())
    }
}
