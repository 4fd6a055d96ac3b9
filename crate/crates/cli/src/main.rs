//! `ultraherz` command-line front end.
//!
//! Exit codes: 0 on success, 2 when a theorem's hypotheses are violated,
//! 1 on any other error (including failed lemma checks).

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use ultraherz::harness::{self, Lemma, Theorem, TheoremConfig};
use ultraherz::norms::{self, CmoOptions, HerzParams, MorreyHerzParams, DEFAULT_REL_TOL};
use ultraherz::operators::{OperatorKind, OperatorSpec};
use ultraherz::oracle::{self, OracleConfig};
use ultraherz::padic::{PadicContext, DEFAULT_RESOLUTION};
use ultraherz::radial::{ExponentFunction, ExponentJson, RadialFunctionJson, RadialStepFunction};

#[derive(Parser)]
#[command(name = "ultraherz", version, about = "Exact p-adic Herz-type norms and Hardy operators on radial functions")]
struct Cli {
    /// Seed for every random choice; overrides ULTRAHERZ_SEED.
    #[arg(long, global = true, env = "ULTRAHERZ_SEED")]
    seed: Option<u64>,
    /// Prime used when an input file carries no `ctx`.
    #[arg(long, global = true)]
    p: Option<u32>,
    /// Dimension used when an input file carries no `ctx`.
    #[arg(long, global = true)]
    n: Option<u32>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Space {
    Modular,
    Lebesgue,
    Herz,
    MorreyHerz,
    Cmo,
}

#[derive(Clone, Copy, ValueEnum)]
enum Op {
    Hardy,
    HardyAdjoint,
    Commutator,
    CommutatorAdjoint,
    Maximal,
}

impl From<Op> for OperatorKind {
    fn from(op: Op) -> Self {
        match op {
            Op::Hardy => OperatorKind::Hardy,
            Op::HardyAdjoint => OperatorKind::HardyAdjoint,
            Op::Commutator => OperatorKind::Commutator,
            Op::CommutatorAdjoint => OperatorKind::CommutatorAdjoint,
            Op::Maximal => OperatorKind::Maximal,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    Integral,
    Operator,
    Norm,
}

#[derive(clap::Args)]
struct NormArgs {
    /// Exponent JSON file.
    #[arg(short = 'u', long = "exponent")]
    exponent: PathBuf,
    /// Function JSON file.
    #[arg(short = 'i', long = "input")]
    input: PathBuf,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    m: f64,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// Base of the Morrey-Herz discount (default p).
    #[arg(long)]
    mh_base: Option<f64>,
    /// Unrestricted oscillation `‖b - b_B‖` instead of `‖(b - b_B)χ_B‖`.
    #[arg(long)]
    cmo_literal: bool,
    #[arg(long, default_value_t = DEFAULT_REL_TOL)]
    rel_tol: f64,
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a norm of a radial function.
    Norm {
        #[arg(long, value_enum)]
        space: Space,
        #[command(flatten)]
        args: NormArgs,
    },
    /// Central mean oscillation norm (same as `norm --space cmo`).
    Cmo {
        #[command(flatten)]
        args: NormArgs,
    },
    /// Apply an operator and write the resulting function as JSON.
    Apply {
        #[arg(long, value_enum)]
        op: Op,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        /// Symbol `b` for commutators.
        #[arg(long)]
        symbol: Option<PathBuf>,
        #[arg(short = 'i', long = "input")]
        input: PathBuf,
        #[arg(short = 'o', long)]
        output: Option<PathBuf>,
    },
    /// Monte-Carlo estimate of an integral, operator value or Luxemburg norm.
    Oracle {
        #[arg(long, value_enum)]
        target: Target,
        #[arg(short = 'i', long = "input")]
        input: PathBuf,
        #[arg(short = 'u', long = "exponent")]
        exponent: Option<PathBuf>,
        /// Ball index for `--target integral`.
        #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
        gamma: i64,
        #[arg(long, value_enum, default_value = "hardy")]
        op: Op,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        #[arg(long)]
        symbol: Option<PathBuf>,
        /// Shell of the probe point for `--target operator`.
        #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
        probe_shell: i64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
        resolution: usize,
        /// Half-width N of the sampled shell window [-N, N].
        #[arg(long, default_value_t = 12)]
        truncation: i32,
        #[arg(short = 'o', long)]
        output: Option<PathBuf>,
    },
    /// Check a theorem configuration against its hypotheses.
    Validate {
        #[arg(long)]
        theorem: Option<Theorem>,
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a boundedness-ratio sweep and write the per-sample CSV.
    Sweep {
        #[arg(long)]
        theorem: Option<Theorem>,
        #[arg(long)]
        config: PathBuf,
        /// CSV destination (stdout when omitted).
        #[arg(short = 'o', long)]
        output: Option<PathBuf>,
        /// Also run the single-shell probe with β just above the admissible range.
        #[arg(long)]
        probe: bool,
    },
    /// Run randomized checks of the auxiliary lemmas.
    Check {
        #[arg(long)]
        lemma: Lemma,
        #[arg(long, default_value_t = 500)]
        trials: usize,
    },
}

enum Failure {
    Violation(serde_json::Value),
    Error(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Error(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Error(format!("{}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner();
        Failure::Error(format!(
            "{}: line {} column {} at `{}`: {}",
            path.display(),
            inner.line(),
            inner.column(),
            e.path(),
            inner
        ))
    })
}

fn fallback_ctx(cli: &Cli) -> Result<Option<PadicContext>, Failure> {
    match (cli.p, cli.n) {
        (Some(p), n) => Ok(Some(PadicContext::new(p, n.unwrap_or(1))?)),
        (None, Some(_)) => Err(Failure::Error("--n needs --p".into())),
        (None, None) => Ok(None),
    }
}

fn read_function(cli: &Cli, path: &Path) -> Result<RadialStepFunction, Failure> {
    let raw: RadialFunctionJson = read_json(path)?;
    raw.into_function(fallback_ctx(cli)?).map_err(|e| Failure::Error(format!("{}: {e}", path.display())))
}

/// Reads an exponent, defaulting its context to that of `like`.
fn read_exponent(cli: &Cli, path: &Path, like: &RadialStepFunction) -> Result<ExponentFunction, Failure> {
    let raw: ExponentJson = read_json(path)?;
    let ctx = fallback_ctx(cli)?.or(Some(*like.ctx()));
    raw.into_exponent(ctx).map_err(|e| Failure::Error(format!("{}: {e}", path.display())))
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn print_out(text: &str) -> Outcome {
    match writeln!(io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn emit<T: Serialize>(value: &T, output: Option<&Path>) -> Outcome {
    let text = serde_json::to_string_pretty(value)?;
    match output {
        Some(path) => fs::write(path, text + "\n").map_err(|e| Failure::Error(format!("{}: {e}", path.display()))),
        None => print_out(&text),
    }
}

fn run_norm(cli: &Cli, space: Space, a: &NormArgs) -> Outcome {
    let f = read_function(cli, &a.input)?;
    let u = read_exponent(cli, &a.exponent, &f)?;
    let result = match space {
        Space::Modular => norms::modular(&f, &u)?,
        Space::Lebesgue => norms::luxemburg_norm(&f, &u, a.rel_tol)?,
        Space::Herz => norms::herz_norm(&f, &u, &HerzParams::new(a.beta, a.m)?)?,
        Space::MorreyHerz => {
            let mut mhp = MorreyHerzParams::new(a.beta, a.m, a.lambda)?;
            if let Some(b) = a.mh_base {
                mhp = mhp.with_base(b)?;
            }
            norms::morrey_herz_norm(&f, &u, &mhp)?
        }
        Space::Cmo => norms::cmo_norm(&f, &u, CmoOptions { literal: a.cmo_literal, rel_tol: a.rel_tol })?,
    };
    emit(&result, a.output.as_deref())
}

fn operator_spec(cli: &Cli, op: Op, alpha: f64, symbol: Option<&Path>) -> Result<OperatorSpec, Failure> {
    let symbol = symbol.map(|p| read_function(cli, p)).transpose()?;
    Ok(OperatorSpec::new(op.into(), alpha, symbol)?)
}

fn load_config(path: &Path, theorem: Option<Theorem>, seed: Option<u64>) -> Result<TheoremConfig, Failure> {
    let mut tc: TheoremConfig = read_json(path)?;
    if let Some(t) = theorem {
        tc.theorem = t;
    }
    if let Some(s) = seed {
        tc.family.seed = s;
    }
    Ok(tc)
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Norm { space, args } => run_norm(cli, *space, args),
        Command::Cmo { args } => run_norm(cli, Space::Cmo, args),
        Command::Apply { op, alpha, symbol, input, output } => {
            let f = read_function(cli, input)?;
            let spec = operator_spec(cli, *op, *alpha, symbol.as_deref())?;
            emit(&spec.apply(&f)?, output.as_deref())
        }
        Command::Oracle {
            target,
            input,
            exponent,
            gamma,
            op,
            alpha,
            symbol,
            probe_shell,
            samples,
            resolution,
            truncation,
            output,
        } => {
            let f = read_function(cli, input)?;
            let cfg = OracleConfig {
                samples: *samples,
                resolution: *resolution,
                truncation: *truncation,
                seed: cli.seed.unwrap_or(0),
                band_width: 3,
            };
            let estimate = match target {
                Target::Integral => oracle::mc_integrate(&f, *gamma, &cfg)?,
                Target::Operator => {
                    let spec = operator_spec(cli, *op, *alpha, symbol.as_deref())?;
                    oracle::mc_operator_probe(&f, &spec, *probe_shell, &cfg)?
                }
                Target::Norm => {
                    let path = exponent.as_deref().ok_or("--target norm needs -u")?;
                    let u = read_exponent(cli, path, &f)?;
                    oracle::mc_luxemburg(&f, &u, &cfg)?
                }
            };
            emit(&estimate, output.as_deref())
        }
        Command::Validate { theorem, config } => {
            let tc = load_config(config, *theorem, cli.seed)?;
            let report = harness::validate_hypotheses(&tc);
            if report.ok {
                emit(&report, None)
            } else {
                Err(Failure::Violation(serde_json::to_value(&report)?))
            }
        }
        Command::Sweep { theorem, config, output, probe } => {
            let tc = load_config(config, *theorem, cli.seed)?;
            let hyp = harness::validate_hypotheses(&tc);
            if !hyp.ok {
                return Err(Failure::Violation(serde_json::to_value(&hyp)?));
            }
            let report = harness::sweep(&tc)?;
            match output {
                Some(path) => {
                    let file = File::create(path).map_err(|e| Failure::Error(format!("{}: {e}", path.display())))?;
                    harness::write_csv(&report, BufWriter::new(file))?;
                }
                None => harness::write_csv(&report, io::stdout().lock())?,
            }
            let probe = if *probe { Some(harness::sharpness_probe(&tc, 1..=15)?) } else { None };
            let summary = json!({
                "theorem": tc.theorem,
                "label": "empirical sup",
                "sup_by_n": report.sup_by_n,
                "empirical_sup": report.empirical_sup.map(|x| x.to_string()).unwrap_or_else(|| "undefined".into()),
                "hypotheses": report.hypotheses,
                "csv": output.as_ref().map(|p| p.display().to_string()),
                "probe": probe,
            });
            if output.is_some() {
                print_out(&serde_json::to_string_pretty(&summary)?)
            } else {
                eprintln!("{}", serde_json::to_string_pretty(&summary)?);
                Ok(())
            }
        }
        Command::Check { lemma, trials } => {
            let report = harness::check_lemmas(*lemma, *trials, cli.seed.unwrap_or(0))?;
            emit(&report, None)?;
            if report.ok() {
                Ok(())
            } else {
                Err(Failure::Error(format!("{} of {} trials failed", report.failures.len(), report.trials)))
            }
        }
    }
}

fn main() -> ExitCode {
    // clap's own usage errors would exit with 2, which is reserved for violations
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Violation(report)) => {
            let _ = print_out(&serde_json::to_string_pretty(&report).unwrap_or_default());
            eprintln!("error: hypotheses violated");
            ExitCode::from(2)
        }
        Err(Failure::Error(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
