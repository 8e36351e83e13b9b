//! Experiment runner behind the `omega-lab` binary.
//!
//! An [`ExperimentConfig`] is a flat `key = value` map assembled from an
//! optional config file and command-line flags (flags win). The JSON summary
//! echoes the resolved config, so `omega-lab run --config summary.json`
//! reproduces it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::averages::{
    run_average, run_disjointness, run_double_average, run_equidistribution, run_orthogonality,
    AverageReport, AverageSpec, Factor, Term, UnitSequence, CSV_HEADER,
};
use crate::error::{Error, Result};
use crate::fixed::{parse_real, rational_to_f64, Frac};
use crate::patterns::{
    banach_density_estimate, find_witness_1d, find_witness_grid, parse_set, pattern_count_average,
    DenseGrid, DenseSet1D, LoadedSet, PatternSpec,
};
use crate::sequences::{BeattyParams, IndexMap, WeightSequence};
use crate::sieve::{small_primes, OmegaTable, DEFAULT_SEGMENT, MAX_LIMIT};
use crate::summation::with_threads;
use crate::torus::{CyclicSystem, Observable, State, System, TorusPoint, UnipotentAffine};

const GRAMMAR: &str = "\
Value syntax:
  reals        7, -3/2, 0.125, sqrt2, golden, 1+sqrt2 (irrationals are rounded to 64 fractional bits)
  counts       10000000, 1e7, 10^7
  system       cyclic:K | rotation:THETA | unipotent:K:BETA
  observable   char:M[@I] | arc:LO,HI[@I] | table:v0,v1,...   (I = 1-based coordinate, default 1)
  start        residue for cyclic systems; x1,x2,... for tori (a single 0 means the origin)
  index        id | omega | omega-beatty:a=ALPHA,b=BETA | poly:c0,c1,...
  weight       const:T | eigen:T | phase:q1,q2,... | phase0:q0,q1,...   (angles in turns)
  sequence     liouville | char:THETA | const:THETA
  polys        P1;P2;... each as ascending coefficients c0,c1,... with c0 = 0
  set-gen      full | evens | residue:M:R | random:P   (random uses --seed)
  limit        N for a line, W,H or W,H,D for a grid

Config files hold one `key = value` per line (`#` starts a comment); an
optional `kind` key names the experiment for `omega-lab run`. A JSON summary
written by --out-json is also accepted as a config.

Exit status: 0 on PASS or when no prediction exists, 1 on FAIL, 2 on errors.";

macro_rules! flags {
    ($($field:ident => $key:literal : $help:literal),* $(,)?) => {
        /// Flags shared by every subcommand; each maps to the config key of the
        /// same name.
        #[derive(Args, Debug, Default, Clone)]
        pub struct Flags {
            /// Config file (key = value lines, or a JSON summary)
            #[arg(long)]
            pub config: Option<PathBuf>,
            $(
                #[doc = $help]
                #[arg(long = $key, allow_hyphen_values = true, value_name = "VALUE")]
                pub $field: Option<String>,
            )*
        }

        impl Flags {
            fn entries(&self) -> Vec<(&'static str, Option<&str>)> {
                vec![$(($key, self.$field.as_deref())),*]
            }
        }
    };
}

flags! {
    n_max => "n-max": "Averaging horizon N",
    checkpoints => "checkpoints": "Comma-separated intermediate N values",
    alpha => "alpha": "Beatty slope",
    beta => "beta": "Beatty offset",
    modulus => "modulus": "Residue modulus k",
    tolerance => "tolerance": "PASS/FAIL threshold on the final deviation",
    threads => "threads": "Worker threads (0 = all cores)",
    seed => "seed": "Seed for randomized inputs (default 0)",
    sieve_cache => "sieve-cache": "Binary Ω table reused across runs",
    segment_size => "segment-size": "Sieve segment length",
    out_csv => "out-csv": "CSV file for checkpointed partials",
    out_json => "out-json": "JSON summary file",
    limit => "limit": "Sieve limit, or size of a generated set",
    f_system => "f-system": "System of the f factor",
    f_observable => "f-observable": "Observable of the f factor",
    f_start => "f-start": "Start of the f factor",
    g_system => "g-system": "System of the g factor",
    g_observable => "g-observable": "Observable of the g factor",
    g_start => "g-start": "Start of the g factor",
    weight => "weight": "Unimodular weight sequence",
    system => "system": "System for disjointness",
    observable => "observable": "Observable for disjointness",
    start => "start": "Start for disjointness",
    index => "index": "Index map for disjointness",
    sequence => "sequence": "Sequence for the orthogonality criterion",
    pairs => "pairs": "Number of prime pairs",
    threshold => "threshold": "Correlation threshold",
    set => "set": "Set file for pattern search",
    set_gen => "set-gen": "Generated set for pattern search",
    polys => "polys": "Pattern polynomials",
    omega => "omega": "Include the Ω(d) leg (true/false)",
    d_max => "d-max": "Largest step d searched",
    layout => "layout": "collinear | split-axes | coordinate-directions",
    windows => "windows": "Window lengths for the density estimate",
    shift => "shift": "Shift of the primes (+1 or -1)",
}

#[derive(Parser, Debug)]
#[command(
    name = "omega-lab",
    version,
    about = "Ergodic averages along the number of prime factors",
    after_long_help = GRAMMAR
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build the Ω table, optionally saving it as a cache
    Sieve(Flags),
    /// Densities of Ω([αn+β]) mod k
    Equidist(Flags),
    /// Mean of λ([αn+β])
    LiouvilleBeatty(Flags),
    /// (1/N) Σ f(T^n x) g(S^Ω(n) y)
    DoubleAverage(Flags),
    /// (1/N) Σ w(n) f(S^g(n) y) for a weight w
    Disjointness(Flags),
    /// Prime-dilation correlations of a unimodular sequence
    Orthogonality(Flags),
    /// Minimal pattern witness in a finite set
    PatternSearch(Flags),
    /// Distribution of Ω(p±1) mod k over primes
    Q2Probe(Flags),
    /// Run the experiment named by the config's `kind` key
    Run(Flags),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Sieve,
    Equidist,
    LiouvilleBeatty,
    DoubleAverage,
    Disjointness,
    Orthogonality,
    PatternSearch,
    Q2Probe,
}

impl Kind {
    pub const ALL: [Kind; 8] = [
        Kind::Sieve,
        Kind::Equidist,
        Kind::LiouvilleBeatty,
        Kind::DoubleAverage,
        Kind::Disjointness,
        Kind::Orthogonality,
        Kind::PatternSearch,
        Kind::Q2Probe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Sieve => "sieve",
            Kind::Equidist => "equidist",
            Kind::LiouvilleBeatty => "liouville-beatty",
            Kind::DoubleAverage => "double-average",
            Kind::Disjointness => "disjointness",
            Kind::Orthogonality => "orthogonality",
            Kind::PatternSearch => "pattern-search",
            Kind::Q2Probe => "q2-probe",
        }
    }

    /// Experiment-specific keys with their defaults (`None` = no default).
    fn keys(self) -> &'static [(&'static str, Option<&'static str>)] {
        match self {
            Kind::Sieve => &[("limit", Some("1000000"))],
            Kind::Equidist => &[
                ("n-max", Some("1000000")),
                ("alpha", Some("1")),
                ("beta", Some("0")),
                ("modulus", Some("2")),
                ("tolerance", Some("0.02")),
            ],
            Kind::LiouvilleBeatty => &[
                ("n-max", Some("1000000")),
                ("alpha", Some("sqrt2")),
                ("beta", Some("1")),
                ("tolerance", Some("0.01")),
            ],
            Kind::DoubleAverage => &[
                ("n-max", Some("1000000")),
                ("f-system", Some("rotation:golden")),
                ("f-observable", Some("char:1")),
                ("f-start", Some("0")),
                ("g-system", Some("cyclic:2")),
                ("g-observable", Some("table:1,-1")),
                ("g-start", Some("0")),
                ("tolerance", Some("0.02")),
            ],
            Kind::Disjointness => &[
                ("n-max", Some("1000000")),
                ("weight", Some("phase:1/3")),
                ("system", Some("cyclic:3")),
                ("observable", Some("table:2/3,-1/3,-1/3")),
                ("start", Some("0")),
                ("index", Some("omega")),
                ("tolerance", Some("0.02")),
            ],
            Kind::Orthogonality => &[
                ("n-max", Some("100000")),
                ("sequence", Some("liouville")),
                ("pairs", Some("10")),
                ("threshold", Some("0.05")),
            ],
            Kind::PatternSearch => &[
                ("set", None),
                ("set-gen", None),
                ("limit", None),
                ("polys", Some("0,1")),
                ("omega", Some("true")),
                ("layout", Some("collinear")),
                ("d-max", Some("100")),
                ("n-max", None),
                ("windows", None),
            ],
            Kind::Q2Probe => &[
                ("n-max", Some("1000000")),
                ("modulus", Some("2")),
                ("shift", Some("1")),
            ],
        }
    }
}

impl std::str::FromStr for Kind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Kind> {
        Kind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| Error::invalid(format!("unknown experiment kind {s:?}")))
    }
}

/// Keys accepted by every kind.
const COMMON_KEYS: [&str; 8] = [
    "checkpoints",
    "seed",
    "sieve-cache",
    "segment-size",
    "threads",
    "out-csv",
    "out-json",
    "tolerance",
];

/// Keys left out of the echoed config because they do not affect results.
const UNECHOED: [&str; 3] = ["threads", "out-csv", "out-json"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExperimentConfig {
    pub kind: Kind,
    values: BTreeMap<String, String>,
}

/// Parse a flat `key = value` file. Returns the optional `kind` and the rest.
pub fn parse_config_text(text: &str) -> Result<(Option<Kind>, BTreeMap<String, String>)> {
    if text.trim_start().starts_with('{') {
        return parse_json_config(text);
    }
    let mut kind = None;
    let mut values = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("expected `key = value`, found {line:?}"),
        })?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(Error::Parse { line: i + 1, message: "empty key".into() });
        }
        let value = v.trim().to_string();
        if key == "kind" {
            kind = Some(value.parse::<Kind>().map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?);
        } else if values.insert(key.clone(), value).is_some() {
            return Err(Error::Parse { line: i + 1, message: format!("duplicate key {key:?}") });
        }
    }
    Ok((kind, values))
}

fn parse_json_config(text: &str) -> Result<(Option<Kind>, BTreeMap<String, String>)> {
    let v: Value = serde_json::from_str(text)?;
    let cfg = v
        .get("config")
        .and_then(Value::as_object)
        .ok_or_else(|| Error::invalid("JSON config needs a \"config\" object"))?;
    let mut kind = None;
    let mut values = BTreeMap::new();
    for (k, v) in cfg {
        let s = v
            .as_str()
            .ok_or_else(|| Error::invalid(format!("config value for {k:?} must be a string")))?
            .to_string();
        if k == "kind" {
            kind = Some(s.parse()?);
        } else {
            values.insert(k.clone(), s);
        }
    }
    Ok((kind, values))
}

impl ExperimentConfig {
    /// Merge file values and flags, fill defaults and type-check everything
    /// for the experiment kind.
    pub fn new(kind: Option<Kind>, file: BTreeMap<String, String>, flags: &Flags, file_kind: Option<Kind>) -> Result<Self> {
        let kind = match (kind, file_kind) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::invalid(format!(
                    "config is for {:?} but the subcommand is {:?}",
                    b.name(),
                    a.name()
                )))
            }
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => return Err(Error::invalid("no experiment kind given (use a subcommand or a `kind` key)")),
        };
        let mut values = file;
        for (k, v) in flags.entries() {
            if let Some(v) = v {
                values.insert(k.to_string(), v.to_string());
            }
        }
        Self::from_values(kind, values)
    }

    pub fn from_values(kind: Kind, mut values: BTreeMap<String, String>) -> Result<Self> {
        let specific = kind.keys();
        if let Some(bad) = values
            .keys()
            .find(|k| !COMMON_KEYS.contains(&k.as_str()) && !specific.iter().any(|(s, _)| s == k))
        {
            return Err(Error::invalid(format!(
                "key {bad:?} does not apply to {}",
                kind.name()
            )));
        }
        for (k, default) in specific {
            if let Some(d) = default {
                values.entry(k.to_string()).or_insert_with(|| d.to_string());
            }
        }
        values.entry("seed".into()).or_insert_with(|| "0".into());
        if kind == Kind::PatternSearch && !values.contains_key("set") {
            values.entry("set-gen".into()).or_insert_with(|| "full".into());
            values.entry("limit".into()).or_insert_with(|| "1000".into());
        }
        let cfg = ExperimentConfig { kind, values };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        self.checkpoints()?;
        self.u64_of("seed")?;
        if self.opt("tolerance").is_some() {
            let t = self.f64_of("tolerance")?;
            if !(t > 0.0) {
                return Err(Error::invalid(format!("tolerance must be positive, got {t}")));
            }
        }
        if self.opt("threads").is_some() {
            self.u64_of("threads")?;
        }
        if self.opt("segment-size").is_some() && self.u64_of("segment-size")? == 0 {
            return Err(Error::invalid("segment-size must be positive"));
        }
        // Parse every experiment-specific value once so bad input fails early.
        match self.kind {
            Kind::Sieve => {
                self.count("limit")?;
            }
            Kind::Equidist => {
                self.count("n-max")?;
                self.beatty()?.term(1)?;
                self.u64_of("modulus")?;
            }
            Kind::LiouvilleBeatty => {
                self.count("n-max")?;
                self.beatty()?.term(1)?;
            }
            Kind::DoubleAverage => {
                self.count("n-max")?;
                self.factor("f")?;
                self.factor("g")?;
            }
            Kind::Disjointness => {
                self.count("n-max")?;
                self.get("weight").parse::<WeightSequence>()?;
                self.disjointness_term()?;
            }
            Kind::Orthogonality => {
                self.count("n-max")?;
                self.u64_of("pairs")?;
                self.f64_of("threshold")?;
                self.sequence_kind()?;
            }
            Kind::PatternSearch => {
                if self.opt("set").is_some() && self.opt("set-gen").is_some() {
                    return Err(Error::invalid("give either set or set-gen, not both"));
                }
                self.pattern_spec()?;
                self.count("d-max")?;
                if self.opt("n-max").is_some() {
                    self.count("n-max")?;
                }
            }
            Kind::Q2Probe => {
                self.count("n-max")?;
                self.u64_of("modulus")?;
                self.shift()?;
            }
        }
        Ok(())
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    /// The resolved config as written to the JSON summary.
    pub fn echo(&self) -> Value {
        let mut m = serde_json::Map::new();
        m.insert("kind".into(), json!(self.kind.name()));
        for (k, v) in &self.values {
            if !UNECHOED.contains(&k.as_str()) {
                m.insert(k.clone(), json!(v));
            }
        }
        Value::Object(m)
    }

    fn opt(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn get(&self, key: &str) -> &str {
        self.opt(key).unwrap_or("")
    }

    fn bad(&self, key: &str, e: impl std::fmt::Display) -> Error {
        Error::invalid(format!("{key}: {e}"))
    }

    fn u64_of(&self, key: &str) -> Result<u64> {
        self.get(key).trim().parse().map_err(|e| self.bad(key, e))
    }

    fn f64_of(&self, key: &str) -> Result<f64> {
        parse_real(self.get(key))
            .map(|r| rational_to_f64(&r))
            .map_err(|e| self.bad(key, e))
    }

    /// Positive count, also written `1e7` or `10^7`.
    fn count(&self, key: &str) -> Result<u64> {
        let n = parse_count(self.get(key)).map_err(|e| self.bad(key, e))?;
        if n == 0 {
            return Err(self.bad(key, "must be positive"));
        }
        Ok(n)
    }

    fn checkpoints(&self) -> Result<Vec<u64>> {
        let Some(s) = self.opt("checkpoints") else { return Ok(Vec::new()) };
        let cps = s
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(parse_count)
            .collect::<Result<Vec<_>>>()
            .map_err(|e| self.bad("checkpoints", e))?;
        if cps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(self.bad("checkpoints", "must be strictly increasing"));
        }
        Ok(cps)
    }

    fn beatty(&self) -> Result<BeattyParams> {
        BeattyParams::parse(self.get("alpha"), self.get("beta"))
    }

    fn factor(&self, prefix: &str) -> Result<Factor> {
        let key = |s: &str| format!("{prefix}-{s}");
        let system = parse_system(self.get(&key("system"))).map_err(|e| self.bad(&key("system"), e))?;
        let obs = parse_observable(self.get(&key("observable"))).map_err(|e| self.bad(&key("observable"), e))?;
        let start = parse_start(&system, self.get(&key("start"))).map_err(|e| self.bad(&key("start"), e))?;
        Factor::new(system, obs, start)
    }

    fn disjointness_term(&self) -> Result<Term> {
        let system = parse_system(self.get("system")).map_err(|e| self.bad("system", e))?;
        let obs = parse_observable(self.get("observable")).map_err(|e| self.bad("observable", e))?;
        let start = parse_start(&system, self.get("start")).map_err(|e| self.bad("start", e))?;
        let index: IndexMap = self.get("index").parse()?;
        if !index.needs_table() {
            return Err(self.bad("index", "disjointness needs omega or omega-beatty"));
        }
        Term::new(system, obs, index, start)
    }

    fn sequence_kind(&self) -> Result<SequenceKind> {
        let s = self.get("sequence").trim();
        let (head, rest) = s.split_once(':').unwrap_or((s, ""));
        match head {
            "liouville" if rest.is_empty() => Ok(SequenceKind::Liouville),
            "char" => Ok(SequenceKind::Character(rest.parse()?)),
            "const" => Ok(SequenceKind::Constant(rest.parse()?)),
            _ => Err(self.bad("sequence", format!("unknown sequence {s:?}"))),
        }
    }

    fn pattern_spec(&self) -> Result<PatternSpec> {
        let polys = PatternSpec::parse_polynomials(self.get("polys"))?;
        let omega = match self.get("omega").trim() {
            "true" | "yes" | "1" => true,
            "false" | "no" | "0" => false,
            other => return Err(self.bad("omega", format!("expected true/false, got {other:?}"))),
        };
        PatternSpec::new(polys, omega, self.get("layout").parse()?)
    }

    fn shift(&self) -> Result<i8> {
        match self.get("shift").trim() {
            "1" | "+1" => Ok(1),
            "-1" => Ok(-1),
            other => Err(self.bad("shift", format!("expected +1 or -1, got {other:?}"))),
        }
    }

    fn threads(&self) -> Result<usize> {
        Ok(match self.opt("threads") {
            Some(_) => self.u64_of("threads")? as usize,
            None => 0,
        })
    }
}

#[derive(Clone, Copy, Debug)]
enum SequenceKind {
    Liouville,
    Character(Frac),
    Constant(Frac),
}

/// Parse `12`, `1e7` or `10^7`.
pub fn parse_count(s: &str) -> Result<u64> {
    let s = s.trim();
    let bad = || Error::invalid(format!("bad count {s:?}"));
    let pow = |base: &str, exp: &str| -> Result<u64> {
        let b: u64 = base.parse().map_err(|_| bad())?;
        let e: u32 = exp.parse().map_err(|_| bad())?;
        b.checked_pow(e).ok_or_else(bad)
    };
    if let Some((m, e)) = s.split_once(['e', 'E']) {
        let m: u64 = m.parse().map_err(|_| bad())?;
        return m.checked_mul(pow("10", e)?).ok_or_else(bad);
    }
    if let Some((b, e)) = s.split_once('^') {
        return pow(b, e);
    }
    s.parse().map_err(|_| bad())
}

/// `cyclic:K`, `rotation:THETA`, `unipotent:K:BETA`.
pub fn parse_system(s: &str) -> Result<System> {
    let s = s.trim();
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        ["cyclic", k] => Ok(System::Cyclic(CyclicSystem::new(
            k.trim().parse().map_err(|_| Error::invalid(format!("bad modulus in {s:?}")))?,
        )?)),
        ["rotation", theta] => Ok(System::Unipotent(UnipotentAffine::rotation(theta.parse()?))),
        ["unipotent", k, beta] => Ok(System::Unipotent(UnipotentAffine::new(
            k.trim().parse().map_err(|_| Error::invalid(format!("bad dimension in {s:?}")))?,
            beta.parse()?,
        )?)),
        _ => Err(Error::invalid(format!(
            "bad system {s:?} (cyclic:K, rotation:THETA, unipotent:K:BETA)"
        ))),
    }
}

/// `char:M[@I]`, `arc:LO,HI[@I]`, `table:v0,v1,...`.
pub fn parse_observable(s: &str) -> Result<Observable> {
    let s = s.trim();
    let (head, rest) = s
        .split_once(':')
        .ok_or_else(|| Error::invalid(format!("bad observable {s:?}")))?;
    let (body, coord) = match rest.rsplit_once('@') {
        Some((b, c)) => {
            let c: usize = c
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad coordinate in {s:?}")))?;
            if c == 0 {
                return Err(Error::invalid("coordinates are numbered from 1"));
            }
            (b, c - 1)
        }
        None => (rest, 0),
    };
    match head {
        "char" => Ok(Observable::Character {
            coord,
            freq: body
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad frequency in {s:?}")))?,
        }),
        "arc" => {
            let (lo, hi) = body
                .split_once(',')
                .ok_or_else(|| Error::invalid(format!("arc needs LO,HI in {s:?}")))?;
            Ok(Observable::Arc { coord, lo: lo.parse()?, hi: hi.parse()? })
        }
        "table" if rest.rsplit_once('@').is_none() => Ok(Observable::Table(
            body.split(',')
                .map(|v| parse_real(v).map(|r| Complex64::new(rational_to_f64(&r), 0.0)))
                .collect::<Result<_>>()?,
        )),
        _ => Err(Error::invalid(format!(
            "bad observable {s:?} (char:M[@I], arc:LO,HI[@I], table:v0,...)"
        ))),
    }
}

/// A residue for cyclic systems, coordinates for tori.
pub fn parse_start(system: &System, s: &str) -> Result<State> {
    let s = s.trim();
    match system {
        System::Cyclic(_) => Ok(State::Residue(
            s.parse().map_err(|_| Error::invalid(format!("bad residue {s:?}")))?,
        )),
        System::Unipotent(t) => {
            if s == "0" {
                return Ok(State::Point(TorusPoint::origin(t.dimension())));
            }
            let coords = s.split(',').map(str::parse).collect::<Result<Vec<Frac>>>()?;
            Ok(State::Point(TorusPoint::new(coords)))
        }
    }
}

/// Result of one experiment: JSON summary, CSV body and verdict.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub summary: Value,
    pub csv: Option<String>,
    /// `None` when the experiment has no predicted value.
    pub verdict: Option<bool>,
}

/// Load the cached table if it covers `required`, otherwise build it (and
/// refresh the cache).
pub fn obtain_table(required: u64, cache: Option<&Path>, segment: usize) -> Result<OmegaTable> {
    let required = required.max(2);
    if required > MAX_LIMIT {
        return Err(Error::out_of_range(
            format!("sieve needs {required}, above the supported maximum {MAX_LIMIT}"),
            required,
        ));
    }
    if let Some(path) = cache {
        if path.exists() {
            let t = OmegaTable::load(path)?;
            if t.limit() >= required {
                return Ok(t);
            }
        }
    }
    let t = OmegaTable::build_with_segment(required, segment)?;
    if let Some(path) = cache {
        t.save(path)?;
    }
    Ok(t)
}

fn summarize(series: &[(String, &AverageReport)], tolerance: Option<f64>) -> (Value, String, Option<bool>) {
    let mut csv = format!("{CSV_HEADER}\n");
    let mut out = Vec::new();
    let mut max_dev: Option<f64> = None;
    for (name, r) in series {
        r.write_csv_rows(name, &mut csv);
        if let Some(d) = r.deviation {
            max_dev = Some(max_dev.map_or(d, |m| m.max(d)));
        }
        out.push(json!({
            "name": name,
            "final": r.final_value,
            "predicted": r.predicted,
            "deviation": r.deviation,
            "generic_prediction": r.generic_prediction,
        }));
    }
    let verdict = max_dev.zip(tolerance).map(|(d, t)| d <= t);
    let v = json!({
        "series": out,
        "max_deviation": max_dev,
        "tolerance": tolerance,
        "verdict": verdict.map(|p| if p { "PASS" } else { "FAIL" }),
    });
    (v, csv, verdict)
}

fn merge(mut a: Value, b: Value) -> Value {
    if let (Some(a), Value::Object(b)) = (a.as_object_mut(), b) {
        a.extend(b);
    }
    a
}

/// Run a validated experiment. Thread count is the caller's business (see
/// [`run_with_threads`]).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    let cache = cfg.opt("sieve-cache").map(PathBuf::from);
    let segment = match cfg.opt("segment-size") {
        Some(_) => cfg.u64_of("segment-size")? as usize,
        None => DEFAULT_SEGMENT,
    };
    let table = |required: u64| obtain_table(required, cache.as_deref(), segment);
    let cps = cfg.checkpoints()?;
    let tolerance = cfg.opt("tolerance").map(|_| cfg.f64_of("tolerance")).transpose()?;
    let head = json!({ "kind": cfg.kind.name(), "config": cfg.echo() });

    let (extra, csv, verdict) = match cfg.kind {
        Kind::Sieve => {
            let limit = cfg.count("limit")?;
            let t = table(limit)?;
            let primes = t.primes().iter().take_while(|&&p| p <= limit).count();
            let lsum: i64 = (1..=limit).map(|n| t.liouville(n).map(i64::from)).sum::<Result<i64>>()?;
            (json!({ "limit": limit, "prime_count": primes, "liouville_sum": lsum }), None, None)
        }
        Kind::Equidist => {
            let n = cfg.count("n-max")?;
            let params = cfg.beatty()?;
            let k = cfg.u64_of("modulus")?;
            let t = table(params.term(n)?)?;
            let reports = run_equidistribution(&t, &params, k, n, &cps)?;
            let named: Vec<_> = reports.iter().enumerate().map(|(r, rep)| (format!("residue={r}"), rep)).collect();
            let (v, csv, verdict) = summarize(&named, tolerance);
            (v, Some(csv), verdict)
        }
        Kind::LiouvilleBeatty => {
            let n = cfg.count("n-max")?;
            let index = IndexMap::OmegaOfBeatty(cfg.beatty()?);
            let t = table(index.required_limit(n)?.unwrap_or(2))?;
            let term = Term::new(
                System::Cyclic(CyclicSystem::new(2)?),
                Observable::Table(vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)]),
                index,
                State::Residue(0),
            )?;
            let spec = AverageSpec { terms: vec![term], weight: None, n_max: n, checkpoints: cps };
            let r = run_average(&spec, Some(&t))?;
            let (v, csv, verdict) = summarize(&[("liouville".into(), &r)], tolerance);
            (v, Some(csv), verdict)
        }
        Kind::DoubleAverage => {
            let n = cfg.count("n-max")?;
            let (f, g) = (cfg.factor("f")?, cfg.factor("g")?);
            let t = table(n)?;
            let r = run_double_average(&f, &g, &t, n, &cps)?;
            let (v, csv, verdict) = summarize(&[("double".into(), &r)], tolerance);
            (v, Some(csv), verdict)
        }
        Kind::Disjointness => {
            let n = cfg.count("n-max")?;
            let w: WeightSequence = cfg.get("weight").parse()?;
            let term = cfg.disjointness_term()?;
            let t = table(term.index.required_limit(n)?.unwrap_or(2))?;
            let r = run_disjointness(&w, &term, &t, n, &cps)?;
            let (v, csv, verdict) = summarize(&[("weighted".into(), &r)], tolerance);
            (v, Some(csv), verdict)
        }
        Kind::Orthogonality => orthogonality(cfg, &table)?,
        Kind::PatternSearch => pattern_search(cfg, &table, &cps)?,
        Kind::Q2Probe => {
            let n = cfg.count("n-max")?;
            let k = cfg.u64_of("modulus")?;
            let shift = cfg.shift()?;
            let t = table(n + 1)?;
            let dens = t.shifted_prime_omega_densities(shift, k, n)?;
            let mut csv = format!("{CSV_HEADER}\n");
            for (r, d) in dens.iter().enumerate() {
                let _ = writeln!(csv, "residue={r},{n},{d},0,,,");
            }
            let total: f64 = dens.iter().sum();
            (json!({ "densities": dens, "density_sum": total, "verdict": null }), Some(csv), None)
        }
    };
    Ok(Outcome { summary: merge(head, extra), csv, verdict })
}

type TableFn<'a> = dyn Fn(u64) -> Result<OmegaTable> + 'a;

fn orthogonality(cfg: &ExperimentConfig, table: &TableFn) -> Result<(Value, Option<String>, Option<bool>)> {
    let n = cfg.count("n-max")?;
    let pairs = cfg.u64_of("pairs")? as usize;
    let threshold = cfg.f64_of("threshold")?;
    // enough primes for `pairs` pairs p < q
    let mut cap = 30;
    let primes = loop {
        let ps = small_primes(cap);
        if ps.len() * ps.len().saturating_sub(1) / 2 >= pairs {
            break ps;
        }
        cap *= 2;
    };
    let (owned, seq);
    let report = match cfg.sequence_kind()? {
        SequenceKind::Liouville => {
            let mut used = 0;
            let max_q = primes
                .iter()
                .enumerate()
                .find_map(|(j, &q)| {
                    used += j;
                    (used >= pairs).then_some(q)
                })
                .unwrap_or(2);
            owned = table(max_q.saturating_mul(n))?;
            seq = UnitSequence::Liouville(&owned);
            run_orthogonality(&seq, &primes, pairs, n, threshold)?
        }
        SequenceKind::Character(t) => run_orthogonality(&UnitSequence::Character(t), &primes, pairs, n, threshold)?,
        SequenceKind::Constant(t) => run_orthogonality(&UnitSequence::Constant(t), &primes, pairs, n, threshold)?,
    };
    let mut csv = format!("{CSV_HEADER}\n");
    for pc in &report.prime_pairs {
        let _ = writeln!(csv, "pair_{}_{},{n},{},{},,,", pc.p, pc.q, pc.value.re, pc.value.im);
    }
    let _ = writeln!(csv, "mean_norm,{n},{},0,,,", report.mean_norm);
    Ok((json!({ "report": report, "verdict": null }), Some(csv), None))
}

fn generate_set(spec: &str, dims: &[usize], seed: u64) -> Result<LoadedSet> {
    let spec = spec.trim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pred: Box<dyn FnMut(&[usize]) -> bool> = match spec.split(':').collect::<Vec<_>>().as_slice() {
        ["full"] => Box::new(|_| true),
        ["evens"] => Box::new(|p| p[0] % 2 == 0),
        ["residue", m, r] => {
            let m: usize = m.parse().map_err(|_| Error::invalid(format!("bad modulus in {spec:?}")))?;
            let r: usize = r.parse().map_err(|_| Error::invalid(format!("bad residue in {spec:?}")))?;
            if m == 0 {
                return Err(Error::invalid("residue modulus must be positive"));
            }
            Box::new(move |p| p[0] % m == r % m)
        }
        ["random", p] => {
            let p = rational_to_f64(&parse_real(p)?);
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("density {p} outside [0, 1]")));
            }
            Box::new(move |_| rng.gen_bool(p))
        }
        _ => {
            return Err(Error::invalid(format!(
                "bad set generator {spec:?} (full, evens, residue:M:R, random:P)"
            )))
        }
    };
    let mut pred = pred;
    if dims.len() == 1 {
        Ok(LoadedSet::Line(DenseSet1D::from_fn(dims[0], |i| pred(&[i]))))
    } else {
        Ok(LoadedSet::Grid(DenseGrid::from_fn(dims, pred)?))
    }
}

fn pattern_search(
    cfg: &ExperimentConfig,
    table: &TableFn,
    cps: &[u64],
) -> Result<(Value, Option<String>, Option<bool>)> {
    let spec = cfg.pattern_spec()?;
    let d_max = cfg.count("d-max")?;
    let set = match cfg.opt("set") {
        Some(path) => parse_set(&fs::read_to_string(path)?)?,
        None => {
            let dims = cfg
                .get("limit")
                .split(',')
                .map(|d| parse_count(d).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            if dims.is_empty() || dims.len() > 3 || dims.contains(&0) {
                return Err(Error::invalid("limit must be N, W,H or W,H,D with positive parts"));
            }
            generate_set(cfg.get("set-gen"), &dims, cfg.u64_of("seed")?)?
        }
    };
    let n_count = cfg.opt("n-max").map(|_| cfg.count("n-max")).transpose()?;
    let needed = d_max.max(n_count.unwrap_or(0));
    let t = table(needed)?;
    let mut extra = serde_json::Map::new();
    let mut csv = None;
    let witness = match &set {
        LoadedSet::Line(s) => {
            let w = find_witness_1d(s, &spec, &t, d_max)?;
            let windows = match cfg.opt("windows") {
                Some(ws) => ws.split(',').map(|w| parse_count(w).map(|w| w as usize)).collect::<Result<Vec<_>>>()?,
                None => vec![s.limit()],
            };
            let est = banach_density_estimate(s, &windows)?;
            extra.insert("set_size".into(), json!(s.len()));
            extra.insert("banach_estimate".into(), json!(format!("{}/{}", est.numer(), est.denom())));
            if let Some(n) = n_count {
                let r = pattern_count_average(s, &spec, &t, n, cps)?;
                let (v, body, _) = summarize(&[("pattern_count".into(), &r)], None);
                extra.insert("pattern_count".into(), v["series"][0].clone());
                csv = Some(body);
            }
            w
        }
        LoadedSet::Grid(g) => find_witness_grid(g, &spec, &t, d_max)?,
    };
    extra.insert(
        "status".into(),
        json!(if witness.is_some() { "found" } else { "none within bounds" }),
    );
    extra.insert("witness".into(), witness.map_or(Value::Null, |w| w.to_json()));
    extra.insert("verdict".into(), Value::Null);
    Ok((Value::Object(extra), csv, None))
}

/// Run on a dedicated pool of `threads` workers from the config.
pub fn run_with_threads(cfg: &ExperimentConfig) -> Result<Outcome> {
    with_threads(cfg.threads()?, || run_experiment(cfg))?
}

/// Write the requested output files.
pub fn write_outputs(cfg: &ExperimentConfig, out: &Outcome) -> Result<()> {
    if let Some(path) = cfg.opt("out-json") {
        fs::write(path, serde_json::to_string_pretty(&out.summary)? + "\n")?;
    }
    if let Some(path) = cfg.opt("out-csv") {
        fs::write(path, out.csv.as_deref().unwrap_or(CSV_HEADER))?;
    }
    Ok(())
}

fn config_from_cli(cli: Cli) -> Result<ExperimentConfig> {
    let (kind, flags) = match cli.command {
        Command::Sieve(f) => (Some(Kind::Sieve), f),
        Command::Equidist(f) => (Some(Kind::Equidist), f),
        Command::LiouvilleBeatty(f) => (Some(Kind::LiouvilleBeatty), f),
        Command::DoubleAverage(f) => (Some(Kind::DoubleAverage), f),
        Command::Disjointness(f) => (Some(Kind::Disjointness), f),
        Command::Orthogonality(f) => (Some(Kind::Orthogonality), f),
        Command::PatternSearch(f) => (Some(Kind::PatternSearch), f),
        Command::Q2Probe(f) => (Some(Kind::Q2Probe), f),
        Command::Run(f) => (None, f),
    };
    let (file_kind, file_values) = match &flags.config {
        Some(path) => parse_config_text(&fs::read_to_string(path)?).map_err(|e| match e {
            Error::Parse { line, message } => Error::Parse {
                line,
                message: format!("{}: {message}", path.display()),
            },
            other => other,
        })?,
        None => (None, BTreeMap::new()),
    };
    ExperimentConfig::new(kind, file_values, &flags, file_kind)
}

/// Entry point of the binary; returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = config_from_cli(cli).and_then(|cfg| {
        let out = run_with_threads(&cfg)?;
        write_outputs(&cfg, &out)?;
        Ok(out)
    });
    match result {
        Ok(out) => {
            println!("{}", serde_json::to_string_pretty(&out.summary).unwrap_or_default());
            match out.verdict {
                Some(true) => {
                    eprintln!("PASS");
                    0
                }
                Some(false) => {
                    eprintln!("FAIL");
                    1
                }
                None => 0,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
