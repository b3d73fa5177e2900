//! Command-line front end: one subcommand per experiment family plus `verify`.

use std::ffi::OsString;
use std::io;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::experiment::{
    linspace_step, run_sweep_with_threads, write_csv, write_csv_to, Family, Param, SweepSpec,
};
use crate::verify::{run_verify, run_verify_with, sign_flip_scorer, VerifyOptions};

#[derive(Debug, Parser)]
#[command(
    name = "attnsep",
    version,
    about = "Softmax vs linear attention separation experiments"
)]
#[command(arg_required_else_help = true)]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Toy softmax-regression sweep.
    Toy(SweepArgs),
    /// Self-attention sweep.
    SelfAttn(SelfArgs),
    /// Cross-attention sweep.
    CrossAttn(SweepArgs),
    /// Check the lemma oracles, the Kronecker identity and the toy spike bounds.
    Verify(VerifyArgs),
}

/// A swept parameter and its grid, `name=start:stop:step` or `name=v1,v2,...`.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepArg {
    pub param: Param,
    pub values: Vec<f64>,
}

impl FromStr for SweepArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (name, spec) = s
            .split_once('=')
            .ok_or_else(|| format!("expected NAME=SPEC, got {s:?}"))?;
        let param = Param::from_str(name.trim()).map_err(|e| e.to_string())?;
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| format!("bad number {t:?} in {s:?}"))
        };
        let values = if spec.contains(':') {
            let parts: Vec<&str> = spec.split(':').collect();
            let [start, stop, step] = parts.as_slice() else {
                return Err(format!("range must be start:stop:step, got {spec:?}"));
            };
            linspace_step(num(start)?, num(stop)?, num(step)?).map_err(|e| e.to_string())?
        } else {
            spec.split(',')
                .map(num)
                .collect::<std::result::Result<Vec<_>, _>>()?
        };
        Ok(SweepArg { param, values })
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Swept parameter and grid, e.g. `n=200:1000:10` or `d=4,6,10`.
    #[arg(long, value_name = "NAME=SPEC")]
    pub sweep: SweepArg,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    /// Fixed network width; defaults to the family's rule.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub a0: Option<f64>,
    #[arg(long)]
    pub a1: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    /// Fixed threshold; defaults to the family's rule.
    #[arg(long, allow_hyphen_values = true)]
    pub tau: Option<f64>,
    /// Trials per sweep point.
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum XArg {
    /// `X = I_d`.
    Identity,
    /// `X = 1_{d x d}`.
    Ones,
}

#[derive(Debug, Args)]
pub struct SelfArgs {
    #[command(flatten)]
    pub sweep: SweepArgs,
    /// Key-query matrix.
    #[arg(long, value_enum, default_value_t = XArg::Identity)]
    pub x: XArg,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Only the d in {4, 5} part of the oracle grid.
    #[arg(long)]
    pub quick: bool,
    #[arg(long, hide = true)]
    pub inject_sign_flip: bool,
}

impl SweepArgs {
    pub fn to_spec(&self, family: Family) -> Result<SweepSpec> {
        let mut spec = SweepSpec::new(family, self.sweep.param, self.sweep.values.clone());
        let overrides = [
            (Param::N, self.n.map(|v| v as f64)),
            (Param::D, self.d.map(|v| v as f64)),
            (Param::M, self.m.map(|v| v as f64)),
            (Param::Delta, self.delta),
            (Param::A0, self.a0),
            (Param::A1, self.a1),
            (Param::B, self.b),
            (Param::C, self.c),
            (Param::Tau, self.tau),
        ];
        for (param, value) in overrides {
            if let Some(v) = value {
                spec.fixed.set(param, v)?;
            }
        }
        if let Some(trials) = self.trials {
            spec.trials_per_point = trials;
        }
        spec.seed = self.seed;
        Ok(spec)
    }
}

fn run_family(args: &SweepArgs, family: Family) -> Result<i32> {
    let spec = args.to_spec(family)?;
    let outcome = run_sweep_with_threads(&spec, args.threads)?;
    for skipped in &outcome.skipped {
        eprintln!(
            "skipped {}={}: {}",
            spec.swept_param, skipped.swept_value, skipped.reason
        );
    }
    match &args.out {
        Some(path) => write_csv(&outcome.records, path)?,
        None => {
            write_csv_to(&outcome.records, io::stdout().lock()).map_err(|source| Error::Csv {
                path: PathBuf::from("<stdout>"),
                source,
            })?
        }
    }
    Ok(0)
}

/// Executes a parsed command and returns the process exit code.
pub fn run(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Toy(args) => run_family(args, Family::Toy),
        Command::CrossAttn(args) => run_family(args, Family::Cross),
        Command::SelfAttn(args) => {
            let family = match args.x {
                XArg::Identity => Family::SelfIdentity,
                XArg::Ones => Family::SelfAllones,
            };
            run_family(&args.sweep, family)
        }
        Command::Verify(args) => {
            let opts = VerifyOptions { quick: args.quick };
            let report = if args.inject_sign_flip {
                run_verify_with(&opts, &sign_flip_scorer)?
            } else {
                run_verify(&opts)?
            };
            print!("{}", report.render());
            Ok(if report.passed() { 0 } else { 1 })
        }
    }
}

/// Parses `args`, runs, and maps errors to exit code 2.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .try_init();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
