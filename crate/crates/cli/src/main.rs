//! `regfair`: audits, constructors and graph checks over JSON files.
//!
//! Exit codes: 0 success, 1 I/O or parse error, 2 domain or precondition
//! error, 3 sampled construction hit its iteration cap.

mod commands;
mod schema;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use regfair::graph::DiGraph;
use regfair::{Error, Rational};

use commands::*;

#[derive(Parser)]
#[command(name = "regfair", version, about = "Multi-group fairness audits, constructors and graph regularity checks")]
struct Cli {
    /// Write the JSON result here instead of standard output.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Worker threads for parallel enumeration.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Arithmetic for instance files.
    #[arg(long, global = true, value_enum, default_value_t = Backend::Rational)]
    backend: Backend,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Rational,
    Float,
}

#[derive(Subcommand)]
enum Command {
    /// Audit the predictor stored in an instance file.
    Audit {
        instance: PathBuf,
        #[arg(long, value_enum)]
        kind: AuditKind,
        #[command(flatten)]
        family: FamilyFlags,
        /// Conditional definition checked by `--kind conditional`.
        #[arg(long, value_enum, default_value_t = CondKind::Mc)]
        conditional: CondKind,
        /// Loss files for `--kind omni`; the 0-1 loss when absent.
        #[arg(long)]
        loss: Vec<PathBuf>,
    },
    /// Build an outcome-indistinguishable predictor.
    Construct {
        instance: PathBuf,
        #[command(flatten)]
        family: FamilyFlags,
        #[arg(long, value_enum, default_value_t = RuleKind::Mwu)]
        rule: RuleKind,
        #[arg(long, value_enum, default_value_t = ConstructMode::Exact)]
        mode: ConstructMode,
        /// Required in sampled mode.
        #[arg(long)]
        seed: Option<u64>,
        /// Failure probability per learner call in sampled mode.
        #[arg(long, default_value_t = 0.05)]
        beta: f64,
        /// Start from the instance's predictor instead of the rule's start.
        #[arg(long)]
        warm_start: bool,
    },
    /// Regularity checks and refinement on a directed graph.
    Graph {
        /// `{n, edges}` JSON or an edge list.
        graph: PathBuf,
        #[arg(long, value_enum)]
        task: GraphTask,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        /// JSON list of vertex lists; the one-part partition when absent.
        #[arg(long)]
        partition: Option<PathBuf>,
        #[arg(long = "refine-mode", value_enum, default_value_t = RefineKind::Direct)]
        refine: RefineKind,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Omniprediction gap against calibration plus multi-accuracy.
    Omni {
        instance: PathBuf,
        #[arg(long)]
        loss: Vec<PathBuf>,
    },
    /// Emit a fixture instance or graph.
    Fixture {
        #[arg(value_enum)]
        kind: FixtureKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Grid fixture side.
        #[arg(long, default_value_t = 10)]
        m: usize,
        /// Vertices of a random graph or first xor factor.
        #[arg(long, default_value_t = 12)]
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        #[arg(long, default_value_t = 8)]
        individuals: usize,
        #[arg(long, default_value_t = 2)]
        outcomes: usize,
        #[arg(long, default_value_t = 4)]
        hypotheses: usize,
        #[arg(long, default_value_t = 4)]
        levels: usize,
    },
}

#[derive(Args)]
struct FamilyFlags {
    #[arg(long, value_enum, default_value_t = FamilyKind::Mc)]
    family: FamilyKind,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Coordinate grid denominator; derived from epsilon when absent.
    #[arg(long)]
    grid_m: Option<u32>,
    /// Degree of the low-degree family.
    #[arg(long, default_value_t = 1)]
    degree: usize,
}

impl From<FamilyFlags> for FamilyArgs {
    fn from(f: FamilyFlags) -> Self {
        FamilyArgs {
            kind: f.family,
            epsilon: f.epsilon,
            grid_m: f.grid_m,
            degree: f.degree,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AuditKind {
    Ma,
    Mc,
    Smc,
    Cal,
    Cov,
    Oi,
    Omni,
    Conditional,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CondKind {
    Ma,
    Mc,
    Smc,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyKind {
    Basic,
    Mc,
    Smc,
    Lowdegree,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleKind {
    Mwu,
    Pgd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConstructMode {
    Exact,
    Sampled,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GraphTask {
    CheckFk,
    CheckInt,
    CheckSz,
    CheckSzIrreg,
    Equivalence,
    Refine,
    Correspond,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RefineKind {
    Direct,
    Sigma,
    Alternating,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FixtureKind {
    TwoPoint,
    Grid,
    Random,
    RandomBinary,
    Gnp,
    Xor,
}

enum Failure {
    Io(String),
    Lib(Error),
    Sampled(Value, String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn read_json(path: &Path) -> Result<Value, Failure> {
    serde_json::from_str(&read(path)?).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn read_all(paths: &[PathBuf]) -> Result<Vec<Value>, Failure> {
    paths.iter().map(|p| read_json(p)).collect()
}

fn run(cli: Cli) -> Result<Value, Failure> {
    let float = matches!(cli.backend, Backend::Float);
    match cli.command {
        Command::Audit {
            instance,
            kind,
            family,
            conditional,
            loss,
        } => {
            let v = read_json(&instance)?;
            let args = AuditArgs {
                kind,
                family: family.into(),
                conditional,
                losses: read_all(&loss)?,
            };
            Ok(if float { audit::<f64>(&v, &args)? } else { audit::<Rational>(&v, &args)? })
        }
        Command::Omni { instance, loss } => {
            let v = read_json(&instance)?;
            let losses = read_all(&loss)?;
            Ok(if float { omni::<f64>(&v, &losses)? } else { omni::<Rational>(&v, &losses)? })
        }
        Command::Construct {
            instance,
            family,
            rule,
            mode,
            seed,
            beta,
            warm_start,
        } => {
            let v = read_json(&instance)?;
            let args = ConstructArgs {
                family: family.into(),
                rule,
                mode,
                seed,
                beta,
                warm_start,
            };
            let out = if float { construct::<f64>(&v, &args)? } else { construct::<Rational>(&v, &args)? };
            match out {
                Constructed::Done(v) => Ok(v),
                Constructed::Failed(v, msg) => Err(Failure::Sampled(v, msg)),
            }
        }
        Command::Graph {
            graph: path,
            task,
            epsilon,
            partition,
            refine,
            restarts,
            seed,
        } => {
            let g = DiGraph::parse(&read(&path)?)?;
            let partition = partition.as_deref().map(read_json).transpose()?;
            let args = GraphArgs {
                task,
                epsilon,
                partition,
                refine,
                restarts,
                seed,
            };
            Ok(graph(&g, &args)?)
        }
        Command::Fixture {
            kind,
            seed,
            m,
            n,
            p,
            individuals,
            outcomes,
            hypotheses,
            levels,
        } => Ok(fixture(&FixtureArgs {
            kind,
            seed,
            m,
            n,
            p,
            individuals,
            outcomes,
            hypotheses,
            levels,
        })?),
    }
}

fn emit(v: &Value, output: Option<&Path>) -> Result<(), String> {
    let text = serde_json::to_string_pretty(v).map_err(|e| e.to_string())? + "\n";
    match output {
        Some(p) => fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("regfair: {e}");
            return ExitCode::from(1);
        }
    }
    let output = cli.output.clone();
    let (value, code) = match run(cli) {
        Ok(v) => (Some(v), 0),
        Err(Failure::Io(msg)) => {
            eprintln!("regfair: {msg}");
            (None, 1)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("regfair: {e}");
            (None, if matches!(e, Error::Parse(_)) { 1 } else { 2 })
        }
        Err(Failure::Sampled(v, msg)) => {
            eprintln!("regfair: {msg}");
            (Some(v), 3)
        }
    };
    if let Some(v) = value {
        if let Err(msg) = emit(&v, output.as_deref()) {
            eprintln!("regfair: {msg}");
            return ExitCode::from(1);
        }
    }
    ExitCode::from(code)
}
