//! Checkpointed Cesàro averages
//!
//! ```text
//! (1/N) sum_{n=1}^{N} w(n) prod_j f_j(T_j^{g_j(n)} x_j)
//! ```
//!
//! for finite and toral systems, index maps `g_j` (identity, integer
//! polynomials, Ω(n), Ω([αn+β])) and optional unimodular weights `w`.
//! Every engine sums over the fixed [`SegmentPlan`] so partials are
//! reproducible bit-for-bit across thread counts.

mod orthogonality;

pub use orthogonality::{
    run_orthogonality, HilbertSequence, OrthogonalityReport, PairCorrelation, UnitSequence,
};

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fixed::Frac;
use crate::sequences::{eval_int_poly, BeattyParams, IndexMap, WeightSequence};
use crate::sieve::OmegaTable;
use crate::summation::{CompensatedSum, SegmentPlan};
use crate::torus::{orbit_mean, BinomialRow, Observable, State, System, TorusPoint};

/// One factor `f(T^{g(n)} x)` of the summand.
#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub system: System,
    pub observable: Observable,
    pub index: IndexMap,
    pub start: State,
}

impl Term {
    pub fn new(system: System, observable: Observable, index: IndexMap, start: State) -> Result<Self> {
        system.check_state(&start)?;
        system.check_observable(&observable)?;
        Ok(Term {
            system,
            observable,
            index,
            start,
        })
    }

    /// Exact limit of `(1/N) sum f(T^n x)` when derivable (finite orbits).
    pub fn orbit_mean(&self) -> Option<Complex64> {
        orbit_mean(&self.system, &self.observable, &self.start)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AverageSpec {
    pub terms: Vec<Term>,
    pub weight: Option<WeightSequence>,
    pub n_max: u64,
    pub checkpoints: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Partial {
    pub n: u64,
    pub value: Complex64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AverageReport {
    pub partials: Vec<Partial>,
    #[serde(rename = "final")]
    pub final_value: Complex64,
    pub predicted: Option<Complex64>,
    pub deviation: Option<f64>,
    /// The prediction relies on a limit taken for an irrational target.
    pub generic_prediction: bool,
}

impl AverageReport {
    pub(crate) fn new(checkpoints: &[u64], sums: Vec<Complex64>, predicted: Option<Complex64>) -> Self {
        let partials: Vec<Partial> = checkpoints
            .iter()
            .zip(sums)
            .map(|(&n, s)| Partial { n, value: s / n as f64 })
            .collect();
        let final_value = partials.last().expect("plan always has n_max").value;
        AverageReport {
            deviation: predicted.map(|p| (final_value - p).norm()),
            partials,
            final_value,
            predicted,
            generic_prediction: false,
        }
    }

    /// `Some(deviation <= tolerance)` when a prediction exists.
    pub fn verdict(&self, tolerance: f64) -> Option<bool> {
        self.deviation.map(|d| d <= tolerance)
    }

    /// CSV rows `series,N,re,im,predicted_re,predicted_im,deviation`.
    pub fn write_csv_rows(&self, series: &str, out: &mut String) {
        for p in &self.partials {
            let (pr, pi, dev) = match self.predicted {
                Some(pred) => (
                    pred.re.to_string(),
                    pred.im.to_string(),
                    (p.value - pred).norm().to_string(),
                ),
                None => (String::new(), String::new(), String::new()),
            };
            let _ = writeln!(
                out,
                "{series},{},{},{},{pr},{pi},{dev}",
                p.n, p.value.re, p.value.im
            );
        }
    }
}

pub const CSV_HEADER: &str = "series,N,re,im,predicted_re,predicted_im,deviation";

// Per-term evaluation state, prepared once per run.
enum Prepared<'a> {
    Cyclic {
        system: crate::torus::CyclicSystem,
        start: u64,
        observable: &'a Observable,
        index: &'a IndexMap,
    },
    // identity index on a torus: advance one step per n
    Stepping {
        map: crate::torus::UnipotentAffine,
        start: &'a TorusPoint,
        observable: &'a Observable,
    },
    // Ω-valued index on a torus: T^j(start) for every possible Ω value
    Ladder {
        points: Vec<TorusPoint>,
        observable: &'a Observable,
        index: &'a IndexMap,
    },
    // polynomial index on a torus: direct power per n
    Power {
        map: crate::torus::UnipotentAffine,
        start: &'a TorusPoint,
        observable: &'a Observable,
        coeffs: &'a [i64],
    },
}

// Ω(n) < 64 for every n < 2^64
const LADDER_LEN: usize = 64;

fn prepare(term: &Term) -> Result<Prepared<'_>> {
    Ok(match (&term.system, &term.start) {
        (System::Cyclic(c), State::Residue(r)) => Prepared::Cyclic {
            system: *c,
            start: *r,
            observable: &term.observable,
            index: &term.index,
        },
        (System::Unipotent(u), State::Point(p)) => match &term.index {
            IndexMap::Identity => Prepared::Stepping {
                map: *u,
                start: p,
                observable: &term.observable,
            },
            IndexMap::OmegaOfN | IndexMap::OmegaOfBeatty(_) => {
                let mut points = Vec::with_capacity(LADDER_LEN);
                let mut q = p.clone();
                for _ in 0..LADDER_LEN {
                    points.push(q.clone());
                    let mut coords = q.coords().to_vec();
                    u.step(&mut coords);
                    q = TorusPoint::new(coords);
                }
                Prepared::Ladder {
                    points,
                    observable: &term.observable,
                    index: &term.index,
                }
            }
            IndexMap::Polynomial(c) => Prepared::Power {
                map: *u,
                start: p,
                observable: &term.observable,
                coeffs: c,
            },
        },
        _ => return Err(Error::invalid("state does not belong to system")),
    })
}

#[inline]
fn omega_index(index: &IndexMap, table: &OmegaTable, n: u64) -> Result<u8> {
    Ok(match index {
        IndexMap::OmegaOfN => table.omega_at(n),
        IndexMap::OmegaOfBeatty(p) => table.omega_at(p.term(n)?),
        _ => unreachable!("only Ω-valued maps use the ladder"),
    })
}

#[inline]
fn scalar_index(index: &IndexMap, table: Option<&OmegaTable>, n: u64) -> Result<i128> {
    Ok(match index {
        IndexMap::Identity => n as i128,
        IndexMap::Polynomial(c) => eval_int_poly(c, n as i128)? as i128,
        _ => omega_index(index, table.expect("table checked"), n)? as i128,
    })
}

fn check_table(terms: &[Term], table: Option<&OmegaTable>, n_max: u64) -> Result<()> {
    let mut required = None;
    for t in terms {
        if let Some(r) = t.index.required_limit(n_max)? {
            required = Some(required.map_or(r, |x: u64| x.max(r)));
        }
    }
    match (required, table) {
        (None, _) => Ok(()),
        (Some(r), Some(t)) if r <= t.limit() => Ok(()),
        (Some(r), Some(t)) => Err(Error::out_of_range(
            format!("sieve limit {} is too small for horizon {n_max}", t.limit()),
            r,
        )),
        (Some(r), None) => Err(Error::out_of_range(
            format!("Ω-valued index needs a sieve for horizon {n_max}"),
            r,
        )),
    }
}

/// The sum over one segment.
fn segment_sum(
    prepared: &[Prepared<'_>],
    weight: Option<&WeightSequence>,
    table: Option<&OmegaTable>,
    lo: u64,
    hi: u64,
) -> Result<CompensatedSum> {
    // stepping terms carry their orbit position across the segment
    let mut cursors: Vec<Option<Vec<Frac>>> = prepared
        .iter()
        .map(|p| match p {
            Prepared::Stepping { map, start, .. } => {
                let row = BinomialRow::power(map.dimension(), lo as i64);
                let mut out = vec![Frac::ZERO; map.dimension()];
                row.apply(map.beta(), start.coords(), &mut out);
                Some(out)
            }
            _ => None,
        })
        .collect();
    let mut scratch = Vec::new();
    let mut sum = CompensatedSum::default();
    for n in lo..=hi {
        let mut z = match weight {
            Some(w) => w.value(n),
            None => Complex64::new(1.0, 0.0),
        };
        for (p, cursor) in prepared.iter().zip(cursors.iter_mut()) {
            let f = match p {
                Prepared::Cyclic {
                    system,
                    start,
                    observable,
                    index,
                } => {
                    let m = scalar_index(index, table, n)?;
                    observable.eval_residue(system.orbit_signed(*start, m))
                }
                Prepared::Stepping { map, observable, .. } => {
                    let coords = cursor.as_mut().expect("stepping cursor");
                    let v = observable.eval_coords(coords);
                    map.step(coords);
                    v
                }
                Prepared::Ladder {
                    points,
                    observable,
                    index,
                } => {
                    let j = omega_index(index, table.expect("table checked"), n)? as usize;
                    observable.eval_coords(points[j].coords())
                }
                Prepared::Power {
                    map,
                    start,
                    observable,
                    coeffs,
                } => {
                    let m = eval_int_poly(coeffs, n as i128)?;
                    let row = BinomialRow::power(map.dimension(), m);
                    scratch.resize(map.dimension(), Frac::ZERO);
                    row.apply(map.beta(), start.coords(), &mut scratch);
                    observable.eval_coords(&scratch)
                }
            };
            z *= f;
        }
        sum.add(z);
    }
    Ok(sum)
}

fn run_terms(
    terms: &[Term],
    weight: Option<&WeightSequence>,
    table: Option<&OmegaTable>,
    plan: &SegmentPlan,
) -> Result<Vec<Complex64>> {
    if terms.is_empty() {
        return Err(Error::invalid("an average needs at least one term"));
    }
    check_table(terms, table, plan.n_max())?;
    for t in terms {
        if let IndexMap::OmegaOfBeatty(p) = &t.index {
            p.term(1)?;
        }
    }
    let prepared = terms.iter().map(prepare).collect::<Result<Vec<_>>>()?;
    plan.checkpointed_sums(|lo, hi| segment_sum(&prepared, weight, table, lo, hi))
}

/// Predicted limit for a single unweighted term along `n`, Ω(n) or
/// Ω([αn+β]) (with `α + β >= 1`): the mean of the observable over the orbit.
fn single_term_prediction(spec: &AverageSpec) -> Option<Complex64> {
    if spec.weight.is_some() || spec.terms.len() != 1 {
        return None;
    }
    let t = &spec.terms[0];
    match &t.index {
        IndexMap::Identity | IndexMap::OmegaOfN => t.orbit_mean(),
        IndexMap::OmegaOfBeatty(p) if p.meets_unit_condition() => t.orbit_mean(),
        _ => None,
    }
}

/// General checkpointed average.
pub fn run_average(spec: &AverageSpec, table: Option<&OmegaTable>) -> Result<AverageReport> {
    let plan = SegmentPlan::new(spec.n_max, &spec.checkpoints)?;
    let sums = run_terms(&spec.terms, spec.weight.as_ref(), table, &plan)?;
    Ok(AverageReport::new(plan.checkpoints(), sums, single_term_prediction(spec)))
}

/// `(system, observable, start)` without an index map.
#[derive(Clone, Debug, PartialEq)]
pub struct Factor {
    pub system: System,
    pub observable: Observable,
    pub start: State,
}

impl Factor {
    pub fn new(system: System, observable: Observable, start: State) -> Result<Self> {
        system.check_state(&start)?;
        system.check_observable(&observable)?;
        Ok(Factor {
            system,
            observable,
            start,
        })
    }

    fn with_index(&self, index: IndexMap) -> Term {
        Term {
            system: self.system,
            observable: self.observable.clone(),
            index,
            start: self.start.clone(),
        }
    }
}

/// `(1/N) sum f(T^n x) g(S^{Ω(n)} y)`, predicted `f*(x) · ∫g` when both
/// factors have exact orbit means.
pub fn run_double_average(
    f: &Factor,
    g: &Factor,
    table: &OmegaTable,
    n_max: u64,
    checkpoints: &[u64],
) -> Result<AverageReport> {
    let plan = SegmentPlan::new(n_max, checkpoints)?;
    let terms = [f.with_index(IndexMap::Identity), g.with_index(IndexMap::OmegaOfN)];
    let sums = run_terms(&terms, None, Some(table), &plan)?;
    let predicted = terms[0]
        .orbit_mean()
        .zip(terms[1].orbit_mean())
        .map(|(a, b)| a * b);
    Ok(AverageReport::new(plan.checkpoints(), sums, predicted))
}

/// Densities of `{n <= N : Ω([αn+β]) ≡ r (mod k)}`, one report per residue,
/// each predicted `1/k`.
pub fn run_equidistribution(
    table: &OmegaTable,
    params: &BeattyParams,
    modulus: u64,
    n_max: u64,
    checkpoints: &[u64],
) -> Result<Vec<AverageReport>> {
    if modulus == 0 {
        return Err(Error::invalid("modulus must be >= 1"));
    }
    let plan = SegmentPlan::new(n_max, checkpoints)?;
    params.term(1)?;
    let needed = params.term(n_max)?;
    table.require(needed, "equidistribution")?;
    let k = modulus as usize;
    let per_segment: Vec<Vec<u64>> = plan.map(|lo, hi| {
        let mut counts = vec![0u64; k];
        for n in lo..=hi {
            let m = params.term(n)?;
            counts[table.omega_at(m) as usize % k] += 1;
        }
        Ok(counts)
    })?;
    let predicted = Complex64::new(1.0 / modulus as f64, 0.0);
    Ok((0..k)
        .map(|r| {
            let seg: Vec<u64> = per_segment.iter().map(|c| c[r]).collect();
            let sums = plan
                .prefix_counts(&seg)
                .into_iter()
                .map(|c| Complex64::new(c as f64, 0.0))
                .collect();
            AverageReport::new(plan.checkpoints(), sums, Some(predicted))
        })
        .collect())
}

/// `(1/N) sum w(n) f(S^{g(n)} y)` with predicted limit
/// `(orbit mean of f) · (Cesàro limit of w)`.
pub fn run_disjointness(
    weight: &WeightSequence,
    term: &Term,
    table: &OmegaTable,
    n_max: u64,
    checkpoints: &[u64],
) -> Result<AverageReport> {
    if !term.index.needs_table() {
        return Err(Error::invalid("disjointness runs along an Ω-valued index"));
    }
    let plan = SegmentPlan::new(n_max, checkpoints)?;
    let sums = run_terms(std::slice::from_ref(term), Some(weight), Some(table), &plan)?;
    let limit = weight.cesaro_limit();
    let predicted = term.orbit_mean().map(|m| m * limit.value);
    let mut report = AverageReport::new(plan.checkpoints(), sums, predicted);
    report.generic_prediction = limit.generic;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::{CyclicSystem, UnipotentAffine};

    fn sign_z2() -> Observable {
        Observable::Table(vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)])
    }

    fn z(k: u64) -> System {
        System::Cyclic(CyclicSystem::new(k).unwrap())
    }

    #[test]
    fn constant_observable_gives_one() {
        let t = OmegaTable::build(10_000).unwrap();
        let ones = Observable::Table(vec![Complex64::new(1.0, 0.0); 3]);
        for index in [IndexMap::Identity, IndexMap::OmegaOfN, IndexMap::Polynomial(vec![1, 2, 3])] {
            let spec = AverageSpec {
                terms: vec![Term::new(z(3), ones.clone(), index, State::Residue(1)).unwrap()],
                weight: None,
                n_max: 10_000,
                checkpoints: vec![17, 5000],
            };
            let r = run_average(&spec, Some(&t)).unwrap();
            assert_eq!(r.final_value, Complex64::new(1.0, 0.0));
            for p in &r.partials {
                assert_eq!(p.value, Complex64::new(1.0, 0.0));
            }
        }
        let rot = System::Unipotent(UnipotentAffine::new(2, Frac(12345)).unwrap());
        let trivial = Observable::Character { coord: 1, freq: 0 };
        for index in [IndexMap::Identity, IndexMap::OmegaOfN, IndexMap::Polynomial(vec![0, 0, 1])] {
            let spec = AverageSpec {
                terms: vec![Term::new(rot, trivial.clone(), index, State::Point(TorusPoint::origin(2))).unwrap()],
                weight: None,
                n_max: 3000,
                checkpoints: vec![],
            };
            assert_eq!(run_average(&spec, Some(&t)).unwrap().final_value, Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn rotation_character_matches_geometric_series() {
        let theta = Frac(0x9e37_79b9_7f4a_7c15);
        let spec = AverageSpec {
            terms: vec![Term::new(
                System::Unipotent(UnipotentAffine::rotation(theta)),
                Observable::Character { coord: 0, freq: 1 },
                IndexMap::Identity,
                State::Point(TorusPoint::origin(1)),
            )
            .unwrap()],
            weight: None,
            n_max: 10_000,
            checkpoints: vec![],
        };
        let r = run_average(&spec, None).unwrap();
        // (1/N) e(θ)(e(Nθ) - 1)/(e(θ) - 1)
        let e = |x: f64| Complex64::from_polar(1.0, std::f64::consts::TAU * x);
        let th = theta.to_f64();
        let n = 10_000.0;
        let closed = e(th) * (e(n * th) - 1.0) / (e(th) - 1.0) / n;
        assert!((r.final_value - closed).norm() < 1e-12);
        assert_eq!(r.predicted, Some(Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn errors() {
        let t = OmegaTable::build(100).unwrap();
        let spec = AverageSpec {
            terms: vec![],
            weight: None,
            n_max: 10,
            checkpoints: vec![],
        };
        assert!(matches!(run_average(&spec, Some(&t)), Err(Error::InvalidArgument(_))));
        let spec = AverageSpec {
            terms: vec![Term::new(z(2), sign_z2(), IndexMap::OmegaOfN, State::Residue(0)).unwrap()],
            weight: None,
            n_max: 1000,
            checkpoints: vec![],
        };
        match run_average(&spec, Some(&t)) {
            Err(Error::OutOfRange { required, .. }) => assert_eq!(required, 1000),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(run_average(&spec, None), Err(Error::OutOfRange { .. })));
        let beatty = IndexMap::OmegaOfBeatty(BeattyParams::parse("3/2", "0").unwrap());
        let spec = AverageSpec {
            terms: vec![Term::new(z(2), sign_z2(), beatty, State::Residue(0)).unwrap()],
            weight: None,
            n_max: 100,
            checkpoints: vec![],
        };
        match run_average(&spec, Some(&t)) {
            Err(Error::OutOfRange { required, .. }) => assert_eq!(required, 150),
            other => panic!("unexpected {other:?}"),
        }
        assert!(Term::new(z(2), sign_z2(), IndexMap::Identity, State::Residue(2)).is_err());
        assert!(Term::new(z(3), sign_z2(), IndexMap::Identity, State::Residue(0)).is_err());
    }

    #[test]
    fn liouville_mean_via_cyclic_system() {
        let t = OmegaTable::build(100_000).unwrap();
        let spec = AverageSpec {
            terms: vec![Term::new(z(2), sign_z2(), IndexMap::OmegaOfN, State::Residue(0)).unwrap()],
            weight: None,
            n_max: 100_000,
            checkpoints: vec![10, 1000],
        };
        let r = run_average(&spec, Some(&t)).unwrap();
        let direct: i64 = (1..=100_000).map(|n| t.liouville(n).unwrap() as i64).sum();
        assert_eq!(r.final_value.re, direct as f64 / 100_000.0);
        let direct10: i64 = (1..=10).map(|n| t.liouville(n).unwrap() as i64).sum();
        assert_eq!(r.partials[0].value.re, direct10 as f64 / 10.0);
        assert_eq!(r.predicted, Some(Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn torus_index_paths_agree_with_direct_orbits() {
        let t = OmegaTable::build(5000).unwrap();
        let u = UnipotentAffine::new(3, Frac(0x1234_5678_9abc_def0)).unwrap();
        let start = TorusPoint::new(vec![Frac(11), Frac(1 << 60), Frac(u64::MAX)]);
        let obs = Observable::Character { coord: 2, freq: 3 };
        for index in [
            IndexMap::Identity,
            IndexMap::OmegaOfN,
            IndexMap::Polynomial(vec![-7, 0, 2]),
            IndexMap::OmegaOfBeatty(BeattyParams::parse("3/2", "1").unwrap()),
        ] {
            let term = Term::new(System::Unipotent(u), obs.clone(), index.clone(), State::Point(start.clone())).unwrap();
            let r = run_average(
                &AverageSpec { terms: vec![term], weight: None, n_max: 3000, checkpoints: vec![] },
                Some(&t),
            )
            .unwrap();
            let mut sum = CompensatedSum::default();
            for n in 1..=3000u64 {
                let m = crate::sequences::index_value(&index, &t, n).unwrap();
                let p = u.orbit_fast(&start, m).unwrap();
                sum.add(p.coord(2).mul_int(3).cis());
            }
            let direct = sum.value() / 3000.0;
            assert!((r.final_value - direct).norm() < 1e-13, "{index:?}");
        }
    }

    #[test]
    fn double_average_reductions() {
        let t = OmegaTable::build(200_000).unwrap();
        let one_rot = Factor::new(
            System::Unipotent(UnipotentAffine::rotation("golden".parse().unwrap())),
            Observable::Character { coord: 0, freq: 0 },
            State::Point(TorusPoint::origin(1)),
        )
        .unwrap();
        let ones = Factor::new(z(4), Observable::Table(vec![Complex64::new(1.0, 0.0); 4]), State::Residue(0)).unwrap();
        let r = run_double_average(&one_rot, &ones, &t, 200_000, &[]).unwrap();
        assert_eq!(r.final_value, Complex64::new(1.0, 0.0));
        assert_eq!(r.predicted, Some(Complex64::new(1.0, 0.0)));

        let mut table = vec![Complex64::new(0.0, 0.0); 3];
        table[1] = Complex64::new(1.0, 0.0);
        let ind = Factor::new(z(3), Observable::Table(table), State::Residue(0)).unwrap();
        let r = run_double_average(&one_rot, &ind, &t, 200_000, &[]).unwrap();
        assert!((r.predicted.unwrap().re - 1.0 / 3.0).abs() < 1e-15);
        let count = (1..=200_000u64).filter(|&n| t.omega(n).unwrap() % 3 == 1).count();
        assert_eq!(r.final_value.re, count as f64 / 200_000.0);
        assert!(r.deviation.unwrap() < 0.02);
    }

    #[test]
    fn equidistribution_matches_recount() {
        let t = OmegaTable::build(1_500_001).unwrap();
        let p = BeattyParams::parse("3/2", "1").unwrap();
        let reports = run_equidistribution(&t, &p, 3, 1_000_000, &[1000, 500_000]).unwrap();
        assert_eq!(reports.len(), 3);
        // independent two-pass recount: first collect terms, then tally
        let terms: Vec<u64> = (1..=1_000_000u64)
            .map(|n| (3 * n + 2) / 2) // floor(3n/2 + 1)
            .collect();
        for (ci, &cp) in [1000u64, 500_000, 1_000_000].iter().enumerate() {
            let mut counts = [0u64; 3];
            for &m in &terms[..cp as usize] {
                counts[t.omega(m).unwrap() as usize % 3] += 1;
            }
            let mut total = 0.0;
            for r in 0..3 {
                assert_eq!(reports[r].partials[ci].value.re, counts[r] as f64 / cp as f64);
                total += reports[r].partials[ci].value.re;
            }
            assert!((total - 1.0).abs() < 1e-12);
        }
        let single = run_equidistribution(&t, &p, 1, 1000, &[]).unwrap();
        assert_eq!(single[0].final_value.re, 1.0);
        assert!(run_equidistribution(&t, &p, 0, 1000, &[]).is_err());
        assert!(matches!(
            run_equidistribution(&t, &p, 2, 2_000_000, &[]),
            Err(Error::OutOfRange { .. })
        ));
        let below = BeattyParams::parse("1/2", "1/4").unwrap();
        assert!(run_equidistribution(&t, &below, 2, 1000, &[]).is_err());
    }

    #[test]
    fn disjointness_predictions() {
        let t = OmegaTable::build(300_000).unwrap();
        let liouville = Term::new(z(2), sign_z2(), IndexMap::OmegaOfN, State::Residue(0)).unwrap();
        let r = run_disjointness(&"const:0".parse().unwrap(), &liouville, &t, 300_000, &[]).unwrap();
        assert_eq!(r.predicted, Some(Complex64::new(0.0, 0.0)));
        assert!(r.deviation.unwrap() < 0.01);

        let ones = Term::new(z(1), Observable::Table(vec![Complex64::new(1.0, 0.0)]), IndexMap::OmegaOfN, State::Residue(0)).unwrap();
        let r = run_disjointness(&"eigen:1/2".parse().unwrap(), &ones, &t, 300_000, &[]).unwrap();
        assert_eq!(r.predicted, Some(Complex64::new(0.0, 0.0)));
        assert_eq!(r.final_value, Complex64::new(0.0, 0.0)); // even N: pairs cancel exactly

        let centered = Observable::Table(vec![
            Complex64::new(2.0 / 3.0, 0.0),
            Complex64::new(-1.0 / 3.0, 0.0),
            Complex64::new(-1.0 / 3.0, 0.0),
        ]);
        let term = Term::new(z(3), centered, IndexMap::OmegaOfN, State::Residue(0)).unwrap();
        let w: WeightSequence = "phase:1/3".parse().unwrap();
        let r = run_disjointness(&w, &term, &t, 300_000, &[]).unwrap();
        assert!(r.predicted.unwrap().norm() < 1e-15);
        assert!(r.deviation.unwrap() < 0.02);
        assert!(!r.generic_prediction);

        let bad = Term::new(z(2), sign_z2(), IndexMap::Identity, State::Residue(0)).unwrap();
        assert!(run_disjointness(&w, &bad, &t, 100, &[]).is_err());
    }

    #[test]
    fn partials_bounded_by_sup_norms() {
        let t = OmegaTable::build(50_000).unwrap();
        let w: WeightSequence = "phase:1/7,1/5".parse().unwrap();
        let spec = AverageSpec {
            terms: vec![
                Term::new(z(2), sign_z2(), IndexMap::OmegaOfN, State::Residue(1)).unwrap(),
                Term::new(
                    System::Unipotent(UnipotentAffine::rotation("sqrt2".parse().unwrap())),
                    Observable::Arc { coord: 0, lo: Frac::ZERO, hi: Frac::HALF },
                    IndexMap::Polynomial(vec![0, 1, 1]),
                    State::Point(TorusPoint::origin(1)),
                )
                .unwrap(),
            ],
            weight: Some(w),
            n_max: 50_000,
            checkpoints: (1..50).map(|i| i * 1000).collect(),
        };
        let r = run_average(&spec, Some(&t)).unwrap();
        assert!(r.predicted.is_none());
        for p in &r.partials {
            assert!(p.value.norm() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn checkpoint_recompute_consistency() {
        let t = OmegaTable::build(400_000).unwrap();
        let term = Term::new(
            System::Unipotent(UnipotentAffine::rotation("golden".parse().unwrap())),
            Observable::Character { coord: 0, freq: 1 },
            IndexMap::OmegaOfN,
            State::Point(TorusPoint::origin(1)),
        )
        .unwrap();
        let cps = vec![12_345, 65_536, 65_537, 200_001];
        let full = run_average(
            &AverageSpec { terms: vec![term.clone()], weight: None, n_max: 400_000, checkpoints: cps.clone() },
            Some(&t),
        )
        .unwrap();
        for (i, &cp) in cps.iter().enumerate() {
            let alone = run_average(
                &AverageSpec { terms: vec![term.clone()], weight: None, n_max: cp, checkpoints: vec![] },
                Some(&t),
            )
            .unwrap();
            assert!((alone.final_value - full.partials[i].value).norm() <= 1e-12);
        }
    }

    #[test]
    fn complete_additivity_cancels_sign_pairs() {
        // g(S^{Ω(pn)} y) · conj(g(S^{Ω(qn)} y)) = 1 for g = ±1 on Z_2
        let t = OmegaTable::build(200_000).unwrap();
        let g = sign_z2();
        let s = CyclicSystem::new(2).unwrap();
        for (p, q) in [(2u64, 3u64), (5, 7), (3, 11)] {
            for n in 1..=10_000u64 {
                let a = g.eval_residue(s.orbit_signed(0, t.omega(p * n).unwrap() as i128));
                let b = g.eval_residue(s.orbit_signed(0, t.omega(q * n).unwrap() as i128));
                assert_eq!(t.omega(p * n).unwrap(), t.omega(n).unwrap() + 1);
                assert_eq!(a * b.conj(), Complex64::new(1.0, 0.0));
            }
        }
    }

    #[test]
    fn csv_rows() {
        let r = AverageReport::new(&[1, 2], vec![Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)], Some(Complex64::new(0.5, 0.0)));
        let mut s = String::new();
        r.write_csv_rows("avg", &mut s);
        assert_eq!(s, "avg,1,1,0,0.5,0,0.5\navg,2,0.5,0,0.5,0,0\n");
        let r = AverageReport::new(&[4], vec![Complex64::new(2.0, -2.0)], None);
        let mut s = String::new();
        r.write_csv_rows("x", &mut s);
        assert_eq!(s, "x,4,0.5,-0.5,,,\n");
        assert_eq!(r.verdict(0.1), None);
    }
}
