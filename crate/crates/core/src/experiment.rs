//! Monte-Carlo separation experiments and parameter sweeps.
//!
//! A trial draws one read-out `y`, then one D0 and one D1 sample, and records
//! whether each of the four outputs behaves as the separation predicts. Every
//! trial owns an RNG stream derived from `(seed, point, trial)`, so sweep
//! results do not depend on the thread count.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attention::{forward_both, NetworkParams};
use crate::dataset::{sample_cross, sample_self, CrossAttnConfig, Regime, SelfAttnConfig};
use crate::error::{Error, Result};
use crate::linalg::{rademacher_matrix, Matrix, SeededRng};
use crate::toy::{gen_toy, toy_output, ToyNetwork};
use crate::{Kind, Label};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct TrialRecord {
    pub exp_on_d1_positive: bool,
    pub lin_on_d1_zero: bool,
    pub exp_on_d0_zero: bool,
    pub lin_on_d0_zero: bool,
}

impl TrialRecord {
    pub fn from_outputs(exp_d1: f64, lin_d1: f64, exp_d0: f64, lin_d0: f64) -> Self {
        Self {
            exp_on_d1_positive: exp_d1 > 0.0,
            lin_on_d1_zero: lin_d1 == 0.0,
            exp_on_d0_zero: exp_d0 == 0.0,
            lin_on_d0_zero: lin_d0 == 0.0,
        }
    }

    pub fn success(&self) -> bool {
        self.exp_on_d1_positive && self.lin_on_d1_zero && self.exp_on_d0_zero && self.lin_on_d0_zero
    }
}

pub fn run_toy_trial(n: usize, m: usize, tau: f64, rng: &mut SeededRng) -> Result<TrialRecord> {
    let net = ToyNetwork::random(n, m, tau, rng)?;
    let d0 = gen_toy(n, Label::D0, rng)?;
    let d1 = gen_toy(n, Label::D1, rng)?;
    Ok(TrialRecord::from_outputs(
        toy_output(&d1, &net, Kind::Exp)?,
        toy_output(&d1, &net, Kind::Lin)?,
        toy_output(&d0, &net, Kind::Exp)?,
        toy_output(&d0, &net, Kind::Lin)?,
    ))
}

/// Key-query matrix used by a self-attention run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum XMode {
    /// `X = I_d`.
    Identity,
    /// `X = 1_{d x d}`.
    AllOnes,
}

impl XMode {
    pub fn matrix(self, d: usize) -> Matrix {
        match self {
            XMode::Identity => Matrix::identity(d),
            XMode::AllOnes => Matrix::ones(d, d),
        }
    }
}

fn network(x: Matrix, m: usize, tau: f64, rng: &mut SeededRng) -> Result<NetworkParams> {
    let d = x.rows();
    let y = rademacher_matrix(d, m, rng);
    NetworkParams::new(x, Matrix::identity(d), y, tau)
}

pub fn run_self_trial(
    cfg: &SelfAttnConfig,
    x: XMode,
    m: usize,
    tau: f64,
    rng: &mut SeededRng,
) -> Result<TrialRecord> {
    let params = network(x.matrix(cfg.d), m, tau, rng)?;
    let d0 = sample_self(cfg, Label::D0, rng)?;
    let d1 = sample_self(cfg, Label::D1, rng)?;
    let (exp_d0, lin_d0) = forward_both(&d0, &params)?;
    let (exp_d1, lin_d1) = forward_both(&d1, &params)?;
    Ok(TrialRecord::from_outputs(exp_d1, lin_d1, exp_d0, lin_d0))
}

pub fn run_cross_trial(
    cfg: &CrossAttnConfig,
    m: usize,
    tau: f64,
    rng: &mut SeededRng,
) -> Result<TrialRecord> {
    let params = network(Matrix::identity(cfg.d), m, tau, rng)?;
    let d0 = sample_cross(cfg, Label::D0, rng)?;
    let d1 = sample_cross(cfg, Label::D1, rng)?;
    let (exp_d0, lin_d0) = forward_both(&d0, &params)?;
    let (exp_d1, lin_d1) = forward_both(&d1, &params)?;
    Ok(TrialRecord::from_outputs(exp_d1, lin_d1, exp_d0, lin_d0))
}

/// How often `relu_tau(<C_{j0}, sigma>)` fires for uniformly random signs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TriggerFrequencies {
    /// Frequency on the planted row `j3`.
    pub special_row: f64,
    /// Largest frequency over rows `j0 != j3`.
    pub off_row_max: f64,
    /// Mean frequency over rows `j0 != j3`.
    pub off_row_mean: f64,
}

/// Draws one self-attention instance and `draws` sign vectors, and counts
/// per row how often `<C_{j0}, sigma> > tau`.
pub fn sign_trigger_frequencies(
    cfg: &SelfAttnConfig,
    x: XMode,
    label: Label,
    kind: Kind,
    tau: f64,
    draws: usize,
    rng: &mut SeededRng,
) -> Result<TriggerFrequencies> {
    if draws == 0 {
        return Err(Error::InvalidConfig("need at least one sign draw".into()));
    }
    let inst = sample_self(cfg, label, rng)?;
    let params = NetworkParams::new(
        x.matrix(cfg.d),
        Matrix::identity(cfg.d),
        Matrix::ones(cfg.d, 1),
        tau,
    )?;
    let trace = crate::attention::forward_trace(&inst, &params, kind)?;
    let mut hits = vec![0usize; cfg.n];
    let mut sigma = vec![0.0; cfg.d];
    for _ in 0..draws {
        sigma.iter_mut().for_each(|s| *s = rng.sign());
        for (j0, h) in hits.iter_mut().enumerate() {
            if crate::linalg::dot(trace.c.row(j0), &sigma) > tau {
                *h += 1;
            }
        }
    }
    let freq = |h: usize| h as f64 / draws as f64;
    let off: Vec<f64> = (0..cfg.n)
        .filter(|&j| j != inst.j3)
        .map(|j| freq(hits[j]))
        .collect();
    Ok(TriggerFrequencies {
        special_row: freq(hits[inst.j3]),
        off_row_max: off.iter().cloned().fold(0.0, f64::max),
        off_row_mean: off.iter().sum::<f64>() / off.len().max(1) as f64,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Toy,
    SelfIdentity,
    SelfAllones,
    Cross,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::Toy,
        Family::SelfIdentity,
        Family::SelfAllones,
        Family::Cross,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Toy => "toy",
            Family::SelfIdentity => "self_identity",
            Family::SelfAllones => "self_allones",
            Family::Cross => "cross",
        }
    }

    /// Default fixed parameters of the family's sweeps.
    pub fn defaults(self) -> FixedParams {
        let base = FixedParams {
            n: 200,
            d: 22,
            m: MRule::LogNOverDelta { min: 15 },
            delta: 0.01,
            a0: 0.01,
            a1: 1.2,
            b: 0.2,
            c: 0.8,
            tau: TauRule::CPlusTenthSqrtLogN,
        };
        match self {
            Family::Toy => FixedParams {
                n: 1000,
                m: MRule::LogN,
                tau: TauRule::Fixed(crate::toy::DEFAULT_TAU),
                ..base
            },
            Family::SelfIdentity | Family::SelfAllones => base,
            Family::Cross => FixedParams {
                d: 11,
                m: MRule::LogNOverDelta { min: 1 },
                a1: 3.0,
                tau: TauRule::Fixed(0.9),
                ..base
            },
        }
    }

    pub fn default_trials(self) -> usize {
        match self {
            Family::Toy => 1000,
            _ => 100,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown family {s:?}")))
    }
}

/// Network width rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MRule {
    /// `ceil(ln n)`.
    LogN,
    /// `max(ceil(ln(n / delta)), min)`.
    LogNOverDelta {
        min: usize,
    },
    Fixed(usize),
}

/// Threshold rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TauRule {
    Fixed(f64),
    /// `(c + 0.1) sqrt(ln n)`.
    CPlusTenthSqrtLogN,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FixedParams {
    pub n: usize,
    pub d: usize,
    pub m: MRule,
    pub delta: f64,
    pub a0: f64,
    pub a1: f64,
    pub b: f64,
    pub c: f64,
    pub tau: TauRule,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Param {
    N,
    D,
    M,
    Delta,
    A0,
    A1,
    B,
    C,
    Tau,
}

impl Param {
    pub const ALL: [Param; 9] = [
        Param::N,
        Param::D,
        Param::M,
        Param::Delta,
        Param::A0,
        Param::A1,
        Param::B,
        Param::C,
        Param::Tau,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::N => "n",
            Param::D => "d",
            Param::M => "m",
            Param::Delta => "delta",
            Param::A0 => "a0",
            Param::A1 => "a1",
            Param::B => "b",
            Param::C => "c",
            Param::Tau => "tau",
        }
    }

    fn is_integer(self) -> bool {
        matches!(self, Param::N | Param::D | Param::M)
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Param {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Param::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown parameter {s:?}")))
    }
}

fn as_count(param: Param, value: f64) -> Result<usize> {
    if value < 0.0 || value.fract() != 0.0 || !value.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "{param} must be a non-negative integer, got {value}"
        )));
    }
    Ok(value as usize)
}

impl FixedParams {
    /// Overrides one parameter. Setting `m` or `tau` replaces its rule.
    pub fn set(&mut self, param: Param, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "{param} must be finite, got {value}"
            )));
        }
        match param {
            Param::N => self.n = as_count(param, value)?,
            Param::D => self.d = as_count(param, value)?,
            Param::M => self.m = MRule::Fixed(as_count(param, value)?),
            Param::Delta => self.delta = value,
            Param::A0 => self.a0 = value,
            Param::A1 => self.a1 = value,
            Param::B => self.b = value,
            Param::C => self.c = value,
            Param::Tau => self.tau = TauRule::Fixed(value),
        }
        Ok(())
    }

    pub fn resolve_m(&self) -> Result<usize> {
        let ln_n = (self.n as f64).ln();
        let m = match self.m {
            MRule::Fixed(m) => m,
            MRule::LogN => ln_n.ceil() as usize,
            MRule::LogNOverDelta { min } => {
                if !(self.delta > 0.0 && self.delta < 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "delta must lie in (0, 1), got {}",
                        self.delta
                    )));
                }
                ((self.n as f64 / self.delta).ln().ceil() as usize).max(min)
            }
        };
        if m == 0 {
            return Err(Error::InvalidConfig("network width m must be >= 1".into()));
        }
        Ok(m)
    }

    pub fn resolve_tau(&self) -> f64 {
        match self.tau {
            TauRule::Fixed(t) => t,
            TauRule::CPlusTenthSqrtLogN => (self.c + 0.1) * (self.n as f64).ln().sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub family: Family,
    pub swept_param: Param,
    pub values: Vec<f64>,
    pub fixed: FixedParams,
    pub trials_per_point: usize,
    pub seed: u64,
}

impl SweepSpec {
    pub fn new(family: Family, swept_param: Param, values: Vec<f64>) -> Self {
        Self {
            family,
            swept_param,
            values,
            fixed: family.defaults(),
            trials_per_point: family.default_trials(),
            seed: 0,
        }
    }
}

/// Aggregated outcome of one sweep point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub family: Family,
    pub swept_param: String,
    pub swept_value: f64,
    pub trials: usize,
    pub successes: usize,
    pub ratio: f64,
    pub fail_exp_d1: usize,
    pub fail_lin_d1: usize,
    pub fail_exp_d0: usize,
    pub fail_lin_d0: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SkippedPoint {
    pub swept_value: f64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct SweepOutcome {
    pub records: Vec<SweepRecord>,
    pub skipped: Vec<SkippedPoint>,
}

enum Point {
    Toy { n: usize },
    SelfAttn { cfg: SelfAttnConfig, x: XMode },
    Cross { cfg: CrossAttnConfig },
}

fn build_point(family: Family, p: &FixedParams) -> Result<Point> {
    Ok(match family {
        Family::Toy => {
            if p.n < 4 {
                return Err(Error::InvalidConfig(format!(
                    "toy model needs n >= 4, got {}",
                    p.n
                )));
            }
            Point::Toy { n: p.n }
        }
        Family::SelfIdentity | Family::SelfAllones => {
            let (regime, x) = if family == Family::SelfIdentity {
                (Regime::Identity, XMode::Identity)
            } else {
                (Regime::AllOnes, XMode::AllOnes)
            };
            Point::SelfAttn {
                cfg: SelfAttnConfig::with_n(p.n, p.d, p.a0, p.a1, p.b, p.c, regime)?,
                x,
            }
        }
        Family::Cross => Point::Cross {
            cfg: CrossAttnConfig::with_n(p.n, p.d, p.a0, p.a1)?,
        },
    })
}

/// Stream id of one trial: point index in the high word, trial in the low word.
pub fn trial_stream(point: usize, trial: usize) -> u64 {
    ((point as u64) << 32) | trial as u64
}

/// Runs every sweep point on the current rayon pool. Points whose
/// configuration is rejected are skipped with a warning.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepOutcome> {
    if spec.values.is_empty() {
        return Err(Error::EmptySweep);
    }
    if spec.trials_per_point == 0 {
        return Err(Error::InvalidConfig("trials per point must be >= 1".into()));
    }
    let mut outcome = SweepOutcome::default();
    for (point_idx, &value) in spec.values.iter().enumerate() {
        let resolved = (|| {
            let mut fixed = spec.fixed;
            fixed.set(spec.swept_param, value)?;
            let point = build_point(spec.family, &fixed)?;
            Ok::<_, Error>((point, fixed.resolve_m()?, fixed.resolve_tau()))
        })();
        let (point, m, tau) = match resolved {
            Ok(r) => r,
            Err(e) => {
                log::warn!("skipping {}={value}: {e}", spec.swept_param);
                outcome.skipped.push(SkippedPoint {
                    swept_value: value,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let trials = (0..spec.trials_per_point)
            .into_par_iter()
            .map(|trial| {
                let mut rng = SeededRng::new(spec.seed, trial_stream(point_idx, trial));
                match &point {
                    Point::Toy { n } => run_toy_trial(*n, m, tau, &mut rng),
                    Point::SelfAttn { cfg, x } => run_self_trial(cfg, *x, m, tau, &mut rng),
                    Point::Cross { cfg } => run_cross_trial(cfg, m, tau, &mut rng),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let count = |pred: fn(&TrialRecord) -> bool| trials.iter().filter(|r| pred(r)).count();
        let successes = count(TrialRecord::success);
        log::info!(
            "{} {}={value}: {successes}/{} (m={m}, tau={tau:.4})",
            spec.family,
            spec.swept_param,
            trials.len()
        );
        outcome.records.push(SweepRecord {
            family: spec.family,
            swept_param: spec.swept_param.name().to_string(),
            swept_value: value,
            trials: trials.len(),
            successes,
            ratio: successes as f64 / trials.len() as f64,
            fail_exp_d1: count(|r| !r.exp_on_d1_positive),
            fail_lin_d1: count(|r| !r.lin_on_d1_zero),
            fail_exp_d0: count(|r| !r.exp_on_d0_zero),
            fail_lin_d0: count(|r| !r.lin_on_d0_zero),
            seed: spec.seed,
        });
    }
    Ok(outcome)
}

/// Runs the sweep on a dedicated pool of `threads` workers (0 = rayon default).
pub fn run_sweep_with_threads(spec: &SweepSpec, threads: usize) -> Result<SweepOutcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot build thread pool: {e}")))?;
    pool.install(|| run_sweep(spec))
}

/// Arithmetic grid `start, start + step, ...` up to `stop` inclusive, snapped
/// to 1e-9 so that decimal steps print cleanly.
pub fn linspace_step(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if step.is_nan() || step <= 0.0 || !start.is_finite() || !stop.is_finite() || stop < start {
        return Err(Error::InvalidConfig(format!(
            "bad range {start}:{stop}:{step}"
        )));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
        .collect())
}

pub const CSV_HEADER: [&str; 11] = [
    "family",
    "swept_param",
    "swept_value",
    "trials",
    "successes",
    "ratio",
    "fail_exp_d1",
    "fail_lin_d1",
    "fail_exp_d0",
    "fail_lin_d0",
    "seed",
];

fn format_value(param: &str, v: f64) -> String {
    let integer = Param::from_str(param)
        .map(Param::is_integer)
        .unwrap_or(false);
    if integer && v.fract() == 0.0 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Serializes records with a fixed header, `ratio` to six decimals and LF
/// line endings.
pub fn write_csv_to<W: Write>(
    records: &[SweepRecord],
    out: W,
) -> std::result::Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.family.name().to_string(),
            r.swept_param.clone(),
            format_value(&r.swept_param, r.swept_value),
            r.trials.to_string(),
            r.successes.to_string(),
            format!("{:.6}", r.ratio),
            r.fail_exp_d1.to_string(),
            r.fail_lin_d1.to_string(),
            r.fail_exp_d0.to_string(),
            r.fail_lin_d0.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(records: &[SweepRecord], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_csv_to(records, BufWriter::new(file)).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_csv(path: &Path) -> Result<Vec<SweepRecord>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(String::from)
        .collect();
    if header != CSV_HEADER {
        return Err(Error::InvalidConfig(format!(
            "unexpected CSV header {header:?} in {}",
            path.display()
        )));
    }
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<SweepRecord>, _>>()
        .map_err(csv_err)
}
