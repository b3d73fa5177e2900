//! Deterministic verification suite: lemma oracles against the pipeline over a
//! small exhaustive grid, the Kronecker identity on random inputs, and the toy
//! spike bounds over every background corner.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::attention::{attention_rows, scores, AttentionInstance, NetworkParams};
use crate::dataset::{cross_instance, self_instance, CrossAttnConfig, Regime, SelfAttnConfig};
use crate::error::Result;
use crate::linalg::{Matrix, SeededRng};
use crate::oracles::{
    c_bound_oracle, f_bound_oracle, u_oracle, ColumnCase, EntryCase, OracleParams, OracleRegime,
};
use crate::toy::f_toy;
use crate::{Kind, Label};

/// Relative tolerance for closed-form entries.
pub const U_TOL: f64 = 1e-9;
/// Slack on entrywise bounds.
pub const BOUND_SLACK: f64 = 1e-12;
/// Tolerance on the Kronecker identity.
pub const TENSOR_TOL: f64 = 1e-9;

/// Produces the score matrix for an instance; swapped out by mutation tests.
pub type Scorer = dyn Fn(&AttentionInstance, &NetworkParams) -> Result<Matrix> + Sync;

#[derive(Clone, Copy, Debug, Default)]
pub struct VerifyOptions {
    /// Restrict the oracle grid to `d in {4, 5}`.
    pub quick: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaseResult {
    pub name: String,
    pub checks: usize,
    pub failures: usize,
    /// Largest violation seen, in the units of the check.
    pub worst: f64,
    pub first_failure: Option<String>,
}

impl CaseResult {
    fn new(name: String) -> Self {
        Self {
            name,
            checks: 0,
            failures: 0,
            worst: 0.0,
            first_failure: None,
        }
    }

    fn record(&mut self, ok: bool, violation: f64, detail: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures += 1;
            self.worst = self.worst.max(violation);
            if self.first_failure.is_none() {
                self.first_failure = Some(detail());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0 && self.checks > 0
    }
}

#[derive(Clone, Debug, Default)]
pub struct VerifyReport {
    pub cases: Vec<CaseResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        !self.cases.is_empty() && self.cases.iter().all(CaseResult::passed)
    }

    pub fn failed_cases(&self) -> impl Iterator<Item = &CaseResult> {
        self.cases.iter().filter(|c| !c.passed())
    }

    pub fn render(&self) -> String {
        let width = self.cases.iter().map(|c| c.name.len()).max().unwrap_or(4);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<6} {:<width$} {:>7} {:>6}",
            "status", "case", "checks", "fails"
        );
        for c in &self.cases {
            let status = if c.passed() { "PASS" } else { "FAIL" };
            let _ = write!(
                out,
                "{status:<6} {:<width$} {:>7} {:>6}",
                c.name, c.checks, c.failures
            );
            if let Some(detail) = &c.first_failure {
                let _ = write!(out, "  worst={:.3e} first: {detail}", c.worst);
            }
            out.push('\n');
        }
        let passed = self.cases.iter().filter(|c| c.passed()).count();
        let _ = writeln!(out, "{passed}/{} cases passed", self.cases.len());
        out
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Key {
    U(EntryCase),
    F(EntryCase),
    C(ColumnCase),
}

impl Key {
    fn name(&self) -> String {
        match self {
            Key::U(c) => format!("u {}", c.describe()),
            Key::F(c) => format!("f {}", c.describe()),
            Key::C(c) => format!("c {}", c.describe()),
        }
    }
}

#[derive(Default)]
struct Tally(HashMap<Key, CaseResult>);

impl Tally {
    fn entry(&mut self, key: Key) -> &mut CaseResult {
        self.0
            .entry(key)
            .or_insert_with(|| CaseResult::new(key.name()))
    }

    fn into_cases(self) -> Vec<CaseResult> {
        let mut cases: Vec<CaseResult> = self.0.into_values().collect();
        cases.sort_by(|a, b| a.name.cmp(&b.name));
        cases
    }
}

/// Runs the suite with the real score function.
pub fn run_verify(opts: &VerifyOptions) -> Result<VerifyReport> {
    run_verify_with(opts, &scores)
}

pub fn run_verify_with(opts: &VerifyOptions, scorer: &Scorer) -> Result<VerifyReport> {
    let mut tally = Tally::default();
    oracle_grid(opts, scorer, &mut tally)?;
    let mut cases = tally.into_cases();
    cases.push(tensor_trick_case()?);
    cases.extend(toy_spike_cases()?);
    Ok(VerifyReport { cases })
}

/// Score function with every entry negated; used to confirm the suite
/// notices a broken pipeline.
pub fn sign_flip_scorer(inst: &AttentionInstance, params: &NetworkParams) -> Result<Matrix> {
    Ok(scores(inst, params)?.scale(-1.0))
}

fn dims(opts: &VerifyOptions) -> &'static [usize] {
    if opts.quick {
        &[4, 5]
    } else {
        &[4, 5, 6]
    }
}

const TS: [usize; 2] = [2, 3];

/// Regime, planted scales `a1`, and `(b, c)` pairs.
type SelfGrid<'a> = (Regime, &'a [f64], &'a [(f64, f64)]);
const A0S: [f64; 2] = [0.01, 0.05];

fn oracle_grid(opts: &VerifyOptions, scorer: &Scorer, tally: &mut Tally) -> Result<()> {
    let identity_c = (1.0f64 - 0.04).sqrt();
    let self_grid: [SelfGrid; 2] = [
        (Regime::AllOnes, &[0.8, 1.2, 2.0], &[(0.2, 0.8), (0.5, 0.5)]),
        (
            Regime::Identity,
            &[1.2, 2.0],
            &[(0.2, identity_c), (0.6, 0.8), (0.2, 0.8)],
        ),
    ];
    for &d in dims(opts) {
        for &t in &TS {
            for &a0 in &A0S {
                for (regime, a1s, bcs) in &self_grid {
                    for &a1 in a1s.iter() {
                        for &(b, c) in bcs.iter() {
                            let cfg = SelfAttnConfig::new(d, t, a0, a1, b, c, *regime)?;
                            check_self(&cfg, scorer, tally)?;
                        }
                    }
                }
                for a1 in [1.2, 2.0, 3.0] {
                    let cfg = CrossAttnConfig::new(d, t, a0, a1)?;
                    check_cross(&cfg, scorer, tally)?;
                }
            }
        }
    }
    Ok(())
}

fn probe_params(x: Matrix) -> Result<NetworkParams> {
    let d = x.rows();
    NetworkParams::new(x, Matrix::identity(d), Matrix::ones(d, 1), 0.0)
}

fn check_self(cfg: &SelfAttnConfig, scorer: &Scorer, tally: &mut Tally) -> Result<()> {
    let (regime, x) = match cfg.regime {
        Regime::AllOnes => (OracleRegime::SelfAllOnes, Matrix::ones(cfg.d, cfg.d)),
        Regime::Identity => (OracleRegime::SelfIdentity, Matrix::identity(cfg.d)),
    };
    let params = probe_params(x)?;
    for label in [Label::D0, Label::D1] {
        let p = OracleParams {
            n: cfg.n,
            t: cfg.t,
            a: cfg.scale(label),
            b: cfg.b,
            c: cfg.c,
        };
        for j3 in 0..cfg.n {
            let inst = self_instance(cfg, label, j3)?;
            check_instance(regime, &inst, &params, &p, scorer, tally, &|| {
                format!("{cfg:?}")
            })?;
        }
    }
    Ok(())
}

fn check_cross(cfg: &CrossAttnConfig, scorer: &Scorer, tally: &mut Tally) -> Result<()> {
    let params = probe_params(Matrix::identity(cfg.d))?;
    for label in [Label::D0, Label::D1] {
        let p = OracleParams {
            n: cfg.n,
            t: cfg.t,
            a: cfg.scale(label),
            b: 0.0,
            c: 0.0,
        };
        for j2 in 0..cfg.n {
            for j3 in 0..cfg.n {
                let inst = cross_instance(cfg, label, j2, j3)?;
                check_instance(
                    OracleRegime::Cross,
                    &inst,
                    &params,
                    &p,
                    scorer,
                    tally,
                    &|| format!("{cfg:?}"),
                )?;
            }
        }
    }
    Ok(())
}

fn check_instance(
    regime: OracleRegime,
    inst: &AttentionInstance,
    params: &NetworkParams,
    p: &OracleParams,
    scorer: &Scorer,
    tally: &mut Tally,
    context: &dyn Fn() -> String,
) -> Result<()> {
    let s = scorer(inst, params)?;
    let values = inst.a3.matmul(&params.v)?;
    for kind in [Kind::Exp, Kind::Lin] {
        let u = match kind {
            Kind::Exp => s.map(f64::exp),
            Kind::Lin => s.clone(),
        };
        // A broken scorer can make linear normalization degenerate; count that
        // as a failure of every f and c check rather than aborting.
        let f = attention_rows(&s, kind).ok();
        let c = f.as_ref().map(|f| f.matmul(&values)).transpose()?;
        for j0 in 0..inst.n() {
            for j1 in 0..inst.n() {
                let case = EntryCase::for_entry(regime, kind, inst, j0, j1)?;
                let expect = u_oracle(&case, p)?;
                let got = u.get(j0, j1);
                let rel = (got - expect).abs() / expect.abs().max(f64::MIN_POSITIVE);
                tally.entry(Key::U(case)).record(rel <= U_TOL, rel, || {
                    format!(
                        "{} j3={} ({j0},{j1}) got {got:e} want {expect:e}",
                        context(),
                        inst.j3
                    )
                });

                let bounds = f_bound_oracle(&case, p)?;
                let got = f.as_ref().map_or(f64::NAN, |f| f.get(j0, j1));
                tally.entry(Key::F(case)).record(
                    bounds.contains(got, BOUND_SLACK),
                    violation(got, bounds.lower, bounds.upper),
                    || {
                        format!(
                            "{} j3={} ({j0},{j1}) got {got:e} not in [{:e}, {:e}]",
                            context(),
                            inst.j3,
                            bounds.lower,
                            bounds.upper
                        )
                    },
                );
            }
            for k in 0..inst.d() {
                let case = ColumnCase::for_entry(regime, kind, inst, j0, k);
                let bounds = c_bound_oracle(&case, p)?;
                let got = c.as_ref().map_or(f64::NAN, |c| c.get(j0, k));
                tally.entry(Key::C(case)).record(
                    bounds.contains(got, BOUND_SLACK),
                    violation(got, bounds.lower, bounds.upper),
                    || {
                        format!(
                            "{} j3={} j0={j0} k={k} got {got:e} not in [{:e}, {:e}]",
                            context(),
                            inst.j3,
                            bounds.lower,
                            bounds.upper
                        )
                    },
                );
            }
        }
    }
    Ok(())
}

fn violation(x: f64, lo: f64, hi: f64) -> f64 {
    if x.is_nan() {
        f64::INFINITY
    } else {
        (lo - x).max(x - hi).max(0.0)
    }
}

/// Kronecker identity on 200 random draws with `n, d <= 6`.
fn tensor_trick_case() -> Result<CaseResult> {
    let mut case = CaseResult::new("tensor trick exp(A1 X A2^T) = exp((A1 ⊗ A2) vec X)".into());
    let mut rng = SeededRng::new(0x7e45, 0);
    for draw in 0..200 {
        let n = 1 + rng.index(6);
        let d = 1 + rng.index(6);
        let a1 = Matrix::from_fn(n, d, |_, _| rng.uniform(-1.0, 1.0));
        let a2 = Matrix::from_fn(n, d, |_, _| rng.uniform(-1.0, 1.0));
        let x = Matrix::from_fn(d, d, |_, _| rng.uniform(-1.0, 1.0));
        let abs = crate::attention::tensor_trick_residual(&a1, &a2, &x)?;
        let rel = crate::attention::tensor_trick_relative_residual(&a1, &a2, &x)?;
        let worst = abs.max(rel);
        case.record(worst <= TENSOR_TOL, worst, || {
            format!("draw {draw} n={n} d={d} residual {worst:e}")
        });
    }
    Ok(case)
}

/// For `n = 4..=8`, every spike position and every background pattern with
/// entries at the ends of `[ln n, 1.4 ln n]`: softmax puts at least half the
/// mass on the spike, linear normalization keeps every coordinate below
/// `4 / n`, and `|<f_exp, sigma>| >= 1/4` for all `2^n` sign vectors.
fn toy_spike_cases() -> Result<Vec<CaseResult>> {
    let mut out = Vec::new();
    for n in 4..=8usize {
        let mut case = CaseResult::new(format!("toy spike exhaustive n={n}"));
        let ln_n = (n as f64).ln();
        for spike in 0..n {
            for pattern in 0u32..(1 << (n - 1)) {
                let mut bit = 0;
                let v: Vec<f64> = (0..n)
                    .map(|i| {
                        if i == spike {
                            return 4.0 * ln_n;
                        }
                        let hi = pattern >> bit & 1 == 1;
                        bit += 1;
                        if hi {
                            1.4 * ln_n
                        } else {
                            ln_n
                        }
                    })
                    .collect();
                let fe = f_toy(&v, Kind::Exp)?;
                let fl = f_toy(&v, Kind::Lin)?;
                let lin_max = fl.iter().cloned().fold(0.0, f64::max);
                let cap = 4.0 / n as f64;
                let ok = fe[spike] >= 0.5 && lin_max <= cap;
                case.record(ok, (0.5 - fe[spike]).max(lin_max - cap), || {
                    format!(
                        "spike={spike} pattern={pattern:b} f_exp={} lin_max={lin_max}",
                        fe[spike]
                    )
                });
                for signs in 0u32..(1 << n) {
                    let mass: f64 = fe
                        .iter()
                        .enumerate()
                        .map(|(i, x)| if signs >> i & 1 == 1 { *x } else { -*x })
                        .sum();
                    case.record(mass.abs() >= 0.25, 0.25 - mass.abs(), || {
                        format!(
                            "spike={spike} pattern={pattern:b} signs={signs:b} |<f,sigma>|={}",
                            mass.abs()
                        )
                    });
                }
            }
        }
        out.push(case);
    }
    Ok(out)
}
