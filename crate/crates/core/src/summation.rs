//! Compensated complex summation and the fixed segment plan used by every
//! averaging engine.
//!
//! The range `1..=n_max` is cut at multiples of [`CHUNK`] and at every
//! checkpoint. Segments are summed independently (in parallel) and the
//! per-segment sums are combined by a pairwise tree whose shape depends only
//! on the plan, so results are bit-identical for any number of threads.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub const CHUNK: u64 = 1 << 16;

#[derive(Clone, Copy, Debug, Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Kahan–Babuška summation of complex values.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    re: Neumaier,
    im: Neumaier,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, z: Complex64) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    #[inline]
    pub fn add_real(&mut self, x: f64) {
        self.re.add(x);
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }
}

/// Segments of `1..=n_max` and the checkpoints they end at.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentPlan {
    segments: Vec<(u64, u64)>,
    checkpoints: Vec<u64>,
    // ends[i] = number of segments covering 1..=checkpoints[i]
    ends: Vec<usize>,
}

impl SegmentPlan {
    /// Checkpoints are sorted, deduplicated and completed with `n_max`.
    pub fn new(n_max: u64, checkpoints: &[u64]) -> Result<Self> {
        if n_max == 0 {
            return Err(Error::invalid("horizon n_max must be >= 1"));
        }
        if let Some(&bad) = checkpoints.iter().find(|&&c| c == 0 || c > n_max) {
            return Err(Error::invalid(format!(
                "checkpoint {bad} outside [1, {n_max}]"
            )));
        }
        let mut cps = checkpoints.to_vec();
        cps.push(n_max);
        cps.sort_unstable();
        cps.dedup();

        let mut segments = Vec::new();
        let mut ends = Vec::with_capacity(cps.len());
        let mut lo = 1u64;
        for &cp in &cps {
            while lo <= cp {
                let chunk_end = (lo - 1) / CHUNK * CHUNK + CHUNK;
                let hi = chunk_end.min(cp);
                segments.push((lo, hi));
                lo = hi + 1;
            }
            ends.push(segments.len());
        }
        Ok(SegmentPlan {
            segments,
            checkpoints: cps,
            ends,
        })
    }

    pub fn checkpoints(&self) -> &[u64] {
        &self.checkpoints
    }

    pub fn n_max(&self) -> u64 {
        *self.checkpoints.last().expect("plan has at least one checkpoint")
    }

    /// Apply `f(lo, hi)` to every inclusive segment, in parallel, keeping
    /// segment order.
    pub fn map<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(u64, u64) -> Result<T> + Sync + Send,
    {
        self.segments.par_iter().map(|&(lo, hi)| f(lo, hi)).collect()
    }

    /// Prefix sums at each checkpoint from per-segment sums.
    pub fn prefix_sums(&self, seg: &[Complex64]) -> Vec<Complex64> {
        self.ends.iter().map(|&e| pairwise(&seg[..e])).collect()
    }

    /// Prefix totals at each checkpoint from per-segment integer counts.
    pub fn prefix_counts(&self, seg: &[u64]) -> Vec<u64> {
        self.ends.iter().map(|&e| seg[..e].iter().sum()).collect()
    }

    /// Sum `f(n)` over `1..=checkpoint` for every checkpoint.
    pub fn checkpointed_sums<F>(&self, f: F) -> Result<Vec<Complex64>>
    where
        F: Fn(u64, u64) -> Result<CompensatedSum> + Sync + Send,
    {
        let seg: Vec<Complex64> = self.map(|lo, hi| f(lo, hi).map(|s| s.value()))?;
        Ok(self.prefix_sums(&seg))
    }
}

fn pairwise(xs: &[Complex64]) -> Complex64 {
    match xs.len() {
        0 => Complex64::new(0.0, 0.0),
        1 => xs[0],
        n => {
            let mid = n / 2;
            pairwise(&xs[..mid]) + pairwise(&xs[mid..])
        }
    }
}

/// Run `f` on a dedicated pool with `threads` workers (0 = rayon default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Resource(format!("cannot start thread pool: {e}")))?;
    Ok(pool.install(f))
}
