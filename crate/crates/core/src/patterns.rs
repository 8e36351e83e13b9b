//! Witness search for polynomial patterns with an Ω-leg,
//!
//! ```text
//! a, a + P_1(d), ..., a + P_k(d), a + Ω(d)
//! ```
//!
//! in finite subsets of `[1..N]` and of small grids, plus the averaged
//! pattern count and windowed density estimates.
//!
//! The search for each `d` intersects shifted copies of the membership bitset
//! (one shift per leg), so the first set bit of the intersection is the
//! smallest base point. Legs that leave the box never match.

use std::fmt::Write as _;

use num_complex::Complex64;
use num_rational::Ratio;
use rayon::prelude::*;
use serde_json::json;

use crate::averages::AverageReport;
use crate::error::{Error, Result};
use crate::sequences::eval_int_poly;
use crate::sieve::OmegaTable;
use crate::summation::SegmentPlan;

/// Fixed-length bitset; bits past `len` are always clear.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bits {
    words: Vec<u64>,
    len: usize,
}

impl Bits {
    pub fn new(len: usize) -> Self {
        Bits {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn set(&mut self, i: usize) {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        i < self.len && self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn first_one(&self) -> Option<usize> {
        self.words
            .iter()
            .enumerate()
            .find(|(_, &w)| w != 0)
            .map(|(i, w)| i * 64 + w.trailing_zeros() as usize)
    }

    pub fn clear(&mut self) {
        self.words.iter_mut().for_each(|w| *w = 0);
    }

    #[inline]
    fn word(&self, i: i64) -> u64 {
        if i < 0 {
            0
        } else {
            self.words.get(i as usize).copied().unwrap_or(0)
        }
    }

    // bits [start, start + 64) of self, zero outside the stored range
    #[inline]
    fn window(&self, start: i64) -> u64 {
        let wi = start.div_euclid(64);
        let off = start.rem_euclid(64) as u32;
        if off == 0 {
            self.word(wi)
        } else {
            (self.word(wi) >> off) | (self.word(wi + 1) << (64 - off))
        }
    }

    /// `self[i] &= other[i + shift]`, with `other` read as zero outside its
    /// range.
    pub fn and_shifted(&mut self, other: &Bits, shift: i64) {
        for (w, word) in self.words.iter_mut().enumerate() {
            if *word != 0 {
                *word &= other.window(w as i64 * 64 + shift);
            }
        }
    }
}

/// A subset of `[1..limit]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DenseSet1D {
    limit: usize,
    bits: Bits,
}

impl DenseSet1D {
    pub fn empty(limit: usize) -> Self {
        DenseSet1D {
            limit,
            bits: Bits::new(limit + 1),
        }
    }

    pub fn full(limit: usize) -> Self {
        Self::from_fn(limit, |_| true)
    }

    pub fn from_fn(limit: usize, mut f: impl FnMut(usize) -> bool) -> Self {
        let mut s = Self::empty(limit);
        for i in 1..=limit {
            if f(i) {
                s.bits.set(i);
            }
        }
        s
    }

    pub fn from_members(limit: usize, members: impl IntoIterator<Item = u64>) -> Result<Self> {
        let mut s = Self::empty(limit);
        for m in members {
            s.insert(m)?;
        }
        Ok(s)
    }

    pub fn insert(&mut self, m: u64) -> Result<()> {
        if m == 0 || m > self.limit as u64 {
            return Err(Error::invalid(format!("member {m} outside [1, {}]", self.limit)));
        }
        self.bits.set(m as usize);
        Ok(())
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    pub fn contains(&self, m: i64) -> bool {
        m >= 1 && self.bits.get(m as usize)
    }

    pub fn len(&self) -> u64 {
        self.bits.count_ones()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn members(&self) -> impl Iterator<Item = u64> + '_ {
        (1..=self.limit).filter(|&i| self.bits.get(i)).map(|i| i as u64)
    }

    pub fn is_subset(&self, other: &DenseSet1D) -> bool {
        self.limit == other.limit
            && self
                .bits
                .words
                .iter()
                .zip(&other.bits.words)
                .all(|(a, b)| a & !b == 0)
    }
}

/// A subset of the grid `[1..W] x [1..H]` (x [1..D] in three dimensions),
/// stored as one bitset per row along the first axis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DenseGrid {
    dims: Vec<usize>,
    rows: Vec<Bits>,
}

/// Two-dimensional grid.
pub type DenseSet2D = DenseGrid;

impl DenseGrid {
    pub fn empty(dims: &[usize]) -> Result<Self> {
        if !(2..=3).contains(&dims.len()) || dims.contains(&0) {
            return Err(Error::invalid(format!(
                "grid needs 2 or 3 positive dimensions, got {dims:?}"
            )));
        }
        let nrows = dims[1..].iter().product();
        Ok(DenseGrid {
            dims: dims.to_vec(),
            rows: vec![Bits::new(dims[0] + 1); nrows],
        })
    }

    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> bool) -> Result<Self> {
        let mut g = Self::empty(dims)?;
        let depth = if dims.len() == 3 { dims[2] } else { 1 };
        for z in 1..=depth {
            for y in 1..=dims[1] {
                for x in 1..=dims[0] {
                    let p = [x, y, z];
                    if f(&p[..dims.len()]) {
                        let r = g.row_index(y, z);
                        g.rows[r].set(x);
                    }
                }
            }
        }
        Ok(g)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    fn row_index(&self, y: usize, z: usize) -> usize {
        (z - 1) * self.dims[1] + (y - 1)
    }

    fn row(&self, y: i64, z: i64) -> Option<&Bits> {
        let depth = if self.dims.len() == 3 { self.dims[2] } else { 1 };
        if y < 1 || z < 1 || y as usize > self.dims[1] || z as usize > depth {
            return None;
        }
        Some(&self.rows[self.row_index(y as usize, z as usize)])
    }

    pub fn insert(&mut self, p: &[u64]) -> Result<()> {
        if p.len() != self.dims.len()
            || p.iter().zip(&self.dims).any(|(&c, &d)| c == 0 || c > d as u64)
        {
            return Err(Error::invalid(format!("point {p:?} outside grid {:?}", self.dims)));
        }
        let z = if p.len() == 3 { p[2] as usize } else { 1 };
        let r = self.row_index(p[1] as usize, z);
        self.rows[r].set(p[0] as usize);
        Ok(())
    }

    pub fn contains(&self, p: &[i64]) -> bool {
        if p.len() != self.dims.len() {
            return false;
        }
        let z = if p.len() == 3 { p[2] } else { 1 };
        match self.row(p[1], z) {
            Some(row) => p[0] >= 1 && row.get(p[0] as usize),
            None => false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    /// `a, a + P_i(d), a + Ω(d)` on the line.
    Collinear,
    /// `(x, y), (x + P_i(d), y), (x, y + Ω(d))` in the plane.
    SplitAxes,
    /// `a, a + P_i(d) e_i, a + Ω(d) e_{k+1}` in `k + 1 <= 3` dimensions.
    CoordinateDirections,
}

impl std::str::FromStr for Layout {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "collinear" => Ok(Layout::Collinear),
            "split-axes" => Ok(Layout::SplitAxes),
            "coordinate-directions" | "axes" => Ok(Layout::CoordinateDirections),
            _ => Err(Error::invalid(format!(
                "unknown layout {s:?} (collinear, split-axes, coordinate-directions)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatternSpec {
    /// `P_1..P_k`, ascending integer coefficients, zero constant term.
    pub polynomials: Vec<Vec<i64>>,
    pub omega_component: bool,
    pub layout: Layout,
}

impl PatternSpec {
    pub fn new(polynomials: Vec<Vec<i64>>, omega_component: bool, layout: Layout) -> Result<Self> {
        if polynomials.is_empty() {
            return Err(Error::invalid("pattern needs at least one polynomial"));
        }
        if let Some(p) = polynomials.iter().find(|p| p.first().is_some_and(|&c| c != 0)) {
            return Err(Error::invalid(format!(
                "pattern polynomial {p:?} has nonzero constant term"
            )));
        }
        if layout == Layout::CoordinateDirections && polynomials.len() > 2 {
            return Err(Error::invalid("coordinate-direction patterns support k <= 2"));
        }
        Ok(PatternSpec {
            polynomials,
            omega_component,
            layout,
        })
    }

    /// `"0,1;0,0,1"` style list of polynomials.
    pub fn parse_polynomials(s: &str) -> Result<Vec<Vec<i64>>> {
        s.split(';')
            .map(|p| {
                p.split(',')
                    .map(|c| {
                        c.trim()
                            .parse::<i64>()
                            .map_err(|e| Error::invalid(format!("bad coefficient {c:?}: {e}")))
                    })
                    .collect()
            })
            .collect()
    }

    fn dims_needed(&self) -> usize {
        match self.layout {
            Layout::Collinear => 1,
            Layout::SplitAxes => 2,
            Layout::CoordinateDirections => self.polynomials.len() + usize::from(self.omega_component),
        }
    }

    /// Displacements of each leg (the base leg first) at step `d`, or `None`
    /// when a polynomial value does not fit in 64 bits.
    fn displacements(&self, d: u64, table: Option<&OmegaTable>) -> Option<Vec<[i64; 3]>> {
        let mut legs = vec![[0i64; 3]];
        for (i, p) in self.polynomials.iter().enumerate() {
            let v = eval_int_poly(p, d as i128).ok()?;
            let axis = match self.layout {
                Layout::CoordinateDirections => i,
                _ => 0,
            };
            let mut leg = [0; 3];
            leg[axis] = v;
            legs.push(leg);
        }
        if self.omega_component {
            let om = table?.get(d)? as i64;
            let axis = match self.layout {
                Layout::Collinear => 0,
                Layout::SplitAxes => 1,
                Layout::CoordinateDirections => self.polynomials.len(),
            };
            let mut leg = [0; 3];
            leg[axis] = om;
            legs.push(leg);
        }
        Some(legs)
    }
}

/// A verified occurrence of a pattern.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Witness {
    pub base: Vec<i64>,
    pub d: u64,
    pub legs: Vec<Vec<i64>>,
}

impl Witness {
    /// `{base, d, legs[]}`; one-dimensional points are plain integers.
    pub fn to_json(&self) -> serde_json::Value {
        let point = |p: &Vec<i64>| {
            if p.len() == 1 {
                json!(p[0])
            } else {
                json!(p)
            }
        };
        json!({
            "base": point(&self.base),
            "d": self.d,
            "legs": self.legs.iter().map(point).collect::<Vec<_>>(),
        })
    }
}

fn check_search(spec: &PatternSpec, table: &OmegaTable, d_max: u64) -> Result<()> {
    if d_max == 0 {
        return Err(Error::invalid("d_max must be >= 1"));
    }
    if spec.omega_component && d_max > table.limit() {
        return Err(Error::out_of_range(
            format!("d_max {d_max} exceeds sieve limit {}", table.limit()),
            d_max,
        ));
    }
    Ok(())
}

// One row scan: the smallest x with every leg of (x, y, z) in the set.
fn scan_rows(
    rows: &dyn Fn(i64, i64) -> Option<Bits>,
    depth: i64,
    height: i64,
    legs: &[[i64; 3]],
) -> Option<[i64; 3]> {
    for z in 1..=depth {
        for y in 1..=height {
            let Some(mut cand) = rows(y, z) else { continue };
            for leg in &legs[1..] {
                match rows(y + leg[1], z + leg[2]) {
                    Some(other) => cand.and_shifted(&other, leg[0]),
                    None => cand.clear(),
                }
                if cand.first_one().is_none() {
                    break;
                }
            }
            if let Some(x) = cand.first_one() {
                return Some([x as i64, y, z]);
            }
        }
    }
    None
}

fn build_witness(base: [i64; 3], dims: usize, d: u64, legs: &[[i64; 3]]) -> Witness {
    let pt = |v: [i64; 3]| v[..dims].to_vec();
    Witness {
        base: pt(base),
        d,
        legs: legs
            .iter()
            .map(|l| pt([base[0] + l[0], base[1] + l[1], base[2] + l[2]]))
            .collect(),
    }
}

/// Smallest witness in `(d, a)` order, or `None` within `d <= d_max`.
pub fn find_witness_1d(
    set: &DenseSet1D,
    spec: &PatternSpec,
    table: &OmegaTable,
    d_max: u64,
) -> Result<Option<Witness>> {
    if spec.layout != Layout::Collinear {
        return Err(Error::invalid("one-dimensional search needs a collinear pattern"));
    }
    check_search(spec, table, d_max)?;
    let rows = |y: i64, z: i64| (y == 1 && z == 1).then(|| set.bits.clone());
    let found = (1..=d_max).into_par_iter().find_map_first(|d| {
        let legs = spec.displacements(d, Some(table))?;
        scan_rows(&rows, 1, 1, &legs).map(|b| build_witness(b, 1, d, &legs))
    });
    Ok(found)
}

/// Smallest witness in a grid, ordered by `d`, then the coordinates from the
/// last axis to the first (`(d, y, x)` in the plane).
pub fn find_witness_grid(
    grid: &DenseGrid,
    spec: &PatternSpec,
    table: &OmegaTable,
    d_max: u64,
) -> Result<Option<Witness>> {
    match spec.layout {
        Layout::Collinear => {
            return Err(Error::invalid("grid search needs split-axes or coordinate-directions"))
        }
        _ if spec.dims_needed() != grid.dims.len() => {
            return Err(Error::invalid(format!(
                "pattern needs a {}-dimensional grid, got {:?}",
                spec.dims_needed(),
                grid.dims
            )))
        }
        _ => {}
    }
    check_search(spec, table, d_max)?;
    let depth = if grid.dims.len() == 3 { grid.dims[2] } else { 1 } as i64;
    let height = grid.dims[1] as i64;
    let rows = |y: i64, z: i64| grid.row(y, z).cloned();
    let found = (1..=d_max).into_par_iter().find_map_first(|d| {
        let legs = spec.displacements(d, Some(table))?;
        scan_rows(&rows, depth, height, &legs).map(|b| build_witness(b, grid.dims.len(), d, &legs))
    });
    Ok(found)
}

/// `find_witness_2d`: planar search with the split-axes layout.
pub fn find_witness_2d(
    set: &DenseSet2D,
    spec: &PatternSpec,
    table: &OmegaTable,
    d_max: u64,
) -> Result<Option<Witness>> {
    if spec.layout != Layout::SplitAxes {
        return Err(Error::invalid("planar search needs the split-axes layout"));
    }
    find_witness_grid(set, spec, table, d_max)
}

/// `(1/N) sum_{n<=N} |A ∩ (A - P_1(n)) ∩ ... ∩ (A - Ω(n))| / limit`.
pub fn pattern_count_average(
    set: &DenseSet1D,
    spec: &PatternSpec,
    table: &OmegaTable,
    n_max: u64,
    checkpoints: &[u64],
) -> Result<AverageReport> {
    if spec.layout != Layout::Collinear {
        return Err(Error::invalid("pattern counts use the collinear layout"));
    }
    let plan = SegmentPlan::new(n_max, checkpoints)?;
    if spec.omega_component {
        table.require(n_max, "pattern count")?;
    }
    let seg: Vec<u64> = plan.map(|lo, hi| {
        let mut total = 0u64;
        for n in lo..=hi {
            let Some(legs) = spec.displacements(n, Some(table)) else { continue };
            let mut cand = set.bits.clone();
            for leg in &legs[1..] {
                cand.and_shifted(&set.bits, leg[0]);
            }
            total += cand.count_ones();
        }
        Ok(total)
    })?;
    let scale = set.limit as f64;
    let sums = plan
        .prefix_counts(&seg)
        .into_iter()
        .map(|c| Complex64::new(c as f64 / scale, 0.0))
        .collect();
    Ok(AverageReport::new(plan.checkpoints(), sums, None))
}

/// Largest density of the set in any window of the given lengths, a finite
/// lower estimate of the upper Banach density.
pub fn banach_density_estimate(set: &DenseSet1D, window_lengths: &[usize]) -> Result<Ratio<u64>> {
    if window_lengths.is_empty() {
        return Err(Error::invalid("need at least one window length"));
    }
    let mut prefix = vec![0u64; set.limit + 1];
    for i in 1..=set.limit {
        prefix[i] = prefix[i - 1] + u64::from(set.bits.get(i));
    }
    let mut best = Ratio::new(0u64, 1);
    for &len in window_lengths {
        if len == 0 || len > set.limit {
            return Err(Error::invalid(format!(
                "window length {len} outside [1, {}]",
                set.limit
            )));
        }
        let max = (len..=set.limit)
            .map(|end| prefix[end] - prefix[end - len])
            .max()
            .unwrap_or(0);
        best = best.max(Ratio::new(max, len as u64));
    }
    Ok(best)
}

/// A set read from the text format.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LoadedSet {
    Line(DenseSet1D),
    Grid(DenseGrid),
}

/// Parse `limit=N` (or `limit=W,H[,D]`) followed by one member per line.
/// Blank lines and `#` comments are ignored; coordinates may be separated by
/// commas or whitespace.
pub fn parse_set(text: &str) -> Result<LoadedSet> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hline, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing limit header".into(),
    })?;
    let dims_text = header.strip_prefix("limit=").ok_or_else(|| Error::Parse {
        line: hline,
        message: format!("expected `limit=N`, found {header:?}"),
    })?;
    let dims = parse_numbers(dims_text, hline)?
        .into_iter()
        .map(|d| usize::try_from(d).map_err(|_| Error::Parse { line: hline, message: "limit too large".into() }))
        .collect::<Result<Vec<_>>>()?;
    let wrap = |line: usize| move |e: Error| Error::Parse { line, message: e.to_string() };
    match dims.len() {
        1 => {
            if dims[0] == 0 {
                return Err(Error::Parse { line: hline, message: "limit must be positive".into() });
            }
            let mut s = DenseSet1D::empty(dims[0]);
            for (line, l) in lines {
                let v = parse_numbers(l, line)?;
                if v.len() != 1 {
                    return Err(Error::Parse { line, message: format!("expected one integer, found {l:?}") });
                }
                s.insert(v[0]).map_err(wrap(line))?;
            }
            Ok(LoadedSet::Line(s))
        }
        2 | 3 => {
            let mut g = DenseGrid::empty(&dims).map_err(wrap(hline))?;
            for (line, l) in lines {
                let v = parse_numbers(l, line)?;
                g.insert(&v).map_err(wrap(line))?;
            }
            Ok(LoadedSet::Grid(g))
        }
        _ => Err(Error::Parse { line: hline, message: "limit must have 1 to 3 components".into() }),
    }
}

fn parse_numbers(s: &str, line: usize) -> Result<Vec<u64>> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<u64>().map_err(|e| Error::Parse {
                line,
                message: format!("bad integer {t:?}: {e}"),
            })
        })
        .collect()
}

impl DenseSet1D {
    pub fn to_text(&self) -> String {
        let mut out = format!("limit={}\n", self.limit);
        for m in self.members() {
            let _ = writeln!(out, "{m}");
        }
        out
    }
}
