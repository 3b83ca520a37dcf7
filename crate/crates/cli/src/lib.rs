//! `degroot` command-line driver.
//!
//! Every subcommand either reads its parameters from flags or takes a whole
//! [`ExperimentConfig`] from `--config <file>`. `--print-config` writes the
//! resolved config instead of running it, so a flag invocation can be saved
//! and replayed.
//!
//! Exit codes: 0 success, 1 internal error, 2 usage or invalid input, 3 the
//! experiment ran but did not converge (results that exist are still
//! written).

pub mod config;
pub mod emit;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use degroot::engine::{self, BeliefState, Law2x2, DEFAULT_ATOM_TOL, DEFAULT_GAP_TOL};
use degroot::fragmentation::{self, GraphDistribution};
use degroot::generators::{self as gens};
use degroot::wisdom::{self, Family, SignalLaw, WisdomConfig};
use degroot::{GeneratorSpec, GeneratorState, StochasticMatrix};
use serde_json::{json, Value};

pub use config::{Command, ExperimentConfig, Format};
use emit::{Cell, Table};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NO_CONVERGENCE: i32 = 3;

/// Environment variable that overrides `--threads`.
pub const THREADS_ENV: &str = "DEGROOT_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "degroot",
    version,
    about = "Monte Carlo experiments on DeGroot learning over random networks"
)]
struct Cli {
    /// Worker threads (default: one per core). DEGROOT_THREADS overrides it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Take the whole experiment from a JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (standard output when absent).
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Print the resolved config as JSON instead of running it.
    #[arg(long)]
    print_config: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ModelName {
    /// --eps, --pmeet
    Encounter2x2,
    /// Uniform self weight, rest to the successor: --n
    Ring,
    /// The cyclic shift, fixed: --n
    FixedRing,
    /// --n
    LeaderFollower,
    /// Identity w.p. --a, swap otherwise
    Swap,
    /// --x, --pa, --pb
    Bernoulli2x2,
    /// Dirichlet(a, a) rows on two agents: --a
    Beta2x2,
    /// Mixture of h_kappa, q_kappa and g: --kappa, --r
    Stubborn,
    /// --g, --ps, --pd
    Islands,
    /// Dirichlet rows around 11'/n: --n, --eps
    PerturbedAveraging,
    /// 11'/n w.p. --zeta, identity otherwise: --n
    AveragingOrIdentity,
    /// Lazy Metropolis on K4 or two K2 halves (w.p. --q)
    TwoAtomMetropolis,
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// Named generator; the parameters it reads are listed in --help.
    #[arg(long, value_enum)]
    model: Option<ModelName>,
    /// Generator spec as a JSON file.
    #[arg(long, conflicts_with = "model")]
    model_file: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    pmeet: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    x: Option<f64>,
    #[arg(long)]
    pa: Option<f64>,
    #[arg(long)]
    pb: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    g: Option<usize>,
    #[arg(long)]
    ps: Option<f64>,
    #[arg(long)]
    pd: Option<f64>,
    #[arg(long)]
    zeta: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum FamilyName {
    Ring,
    AveragingOrIdentity,
    FixedRing,
    LeaderFollower,
    PerturbedAveraging,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum SignalName {
    Uniform,
    Bernoulli,
}

/// Laws of the first column `(x, y)` of a 2x2 matrix.
#[derive(ValueEnum, Debug, Clone, Copy)]
enum MuName {
    /// x, y iid Uniform(0, 1)
    UniformIndep,
    /// x, y iid Beta(1/2, 1/2)
    Arcsine,
    /// x, y iid Beta(shape, shape)
    Beta,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Belief trajectory of a single replica.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        /// Initial beliefs, comma separated.
        #[arg(long, value_delimiter = ',')]
        p0: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        steps: usize,
    },
    /// Monte Carlo law of the influence vector.
    Influence {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 1000)]
        replicas: usize,
        #[arg(long, default_value_t = 10_000)]
        t_max: usize,
        #[arg(long, default_value_t = DEFAULT_GAP_TOL)]
        gap_tol: f64,
    },
    /// Error of the consensus belief across society sizes.
    Wisdom {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "ring")]
        family: FamilyName,
        #[arg(long)]
        zeta: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [5, 10, 20, 40])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 0.5)]
        gamma: f64,
        #[arg(long, value_enum, default_value = "uniform")]
        signal: SignalName,
        #[arg(long, default_value_t = 0.25)]
        half_width: f64,
        #[arg(long, default_value_t = 500)]
        replicas: usize,
        #[arg(long, default_value_t = 100_000)]
        t_max: usize,
        #[arg(long, default_value_t = DEFAULT_GAP_TOL)]
        gap_tol: f64,
    },
    /// Time for two agents to get within phi of each other.
    Speed2x2 {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        /// Named law of the weights, instead of a model.
        #[arg(long, value_enum, conflicts_with_all = ["model", "model_file"])]
        mu: Option<MuName>,
        #[arg(long)]
        shape: Option<f64>,
        #[arg(long, default_value_t = 1e-6)]
        phi: f64,
        #[arg(long, default_value_t = 2000)]
        replicas: usize,
        #[arg(long)]
        t_cap: Option<usize>,
    },
    /// Logarithmic energy of a law on the unit square.
    Energy {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "uniform-indep")]
        mu: MuName,
        #[arg(long)]
        shape: Option<f64>,
        /// Law2x2 as a JSON file, instead of --mu.
        #[arg(long)]
        law_file: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        quad_points: usize,
    },
    /// Most likely disconnected collection of realized graphs.
    Pmax {
        #[command(flatten)]
        common: Common,
        /// GraphDistribution as a JSON file.
        #[arg(long, conflicts_with_all = ["model", "model_file"])]
        dist: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Decay rate of the probability of staying eps away from consensus.
    Rate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 0.5)]
        epsilon: f64,
        /// Comma separated times; 1..=t-max when absent.
        #[arg(long, value_delimiter = ',')]
        t_grid: Vec<usize>,
        #[arg(long, default_value_t = 40)]
        t_max: usize,
        #[arg(long, default_value_t = 100_000)]
        replicas: usize,
    },
    /// Rank law and support of the limit product.
    Disagree {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 5000)]
        replicas: usize,
        #[arg(long, default_value_t = 200)]
        t_max: usize,
        #[arg(long, default_value_t = DEFAULT_ATOM_TOL)]
        atom_tol: f64,
    },
    /// Does some finite product become strictly positive?
    CheckC {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 50)]
        horizon: usize,
        #[arg(long, default_value_t = 1000)]
        replicas: usize,
    },
    /// Compare the support patterns and verdicts of two generators.
    Skeleton {
        #[command(flatten)]
        common: Common,
        /// First generator spec (JSON file).
        #[arg(long)]
        model_a: Option<PathBuf>,
        /// Second generator spec (JSON file).
        #[arg(long)]
        model_b: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        horizon: usize,
        #[arg(long, default_value_t = 1000)]
        replicas: usize,
    },
    /// Products of support matrices up to a given length.
    Semigroup {
        #[command(flatten)]
        common: Common,
        /// JSON array of matrices, instead of a finite-support model.
        #[arg(long, conflicts_with_all = ["model", "model_file"])]
        support: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 8)]
        max_len: usize,
        #[arg(long, default_value_t = 1e-9)]
        dedup_tol: f64,
    },
    /// Compare influence moments with the Dirichlet limit law.
    Conjugacy {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 5000)]
        replicas: usize,
        #[arg(long, default_value_t = 10_000)]
        t_max: usize,
    },
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Model(degroot::Error),
    Io(String, io::Error),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        use degroot::Error as E;
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(..) => EXIT_INTERNAL,
            CliError::Model(e) => match e {
                E::NoConvergence { .. }
                | E::CapHit { .. }
                | E::InsufficientEvents { .. }
                | E::ExplosionGuard { .. } => EXIT_NO_CONVERGENCE,
                E::NumericalFailure(_) | E::EigenvectorFailure => EXIT_INTERNAL,
                _ => EXIT_USAGE,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Model(e) => write!(f, "{e}"),
            CliError::Io(what, e) => write!(f, "{what}: {e}"),
        }
    }
}

impl From<degroot::Error> for CliError {
    fn from(e: degroot::Error) -> Self {
        CliError::Model(e)
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, flag: &str) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{flag} {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{flag} {}: {e}", path.display())))
}

fn need<T: Copy>(value: Option<T>, flag: &str, model: &str) -> CliResult<T> {
    value.ok_or_else(|| CliError::Usage(format!("--model {model} requires --{flag}")))
}

impl ModelArgs {
    fn spec(&self) -> CliResult<GeneratorSpec> {
        if let Some(path) = &self.model_file {
            let spec: GeneratorSpec = read_json(path, "--model-file")?;
            spec.validate()?;
            return Ok(spec);
        }
        let Some(model) = self.model else {
            return usage("one of --model or --model-file is required");
        };
        let name = model
            .to_possible_value()
            .expect("named")
            .get_name()
            .to_string();
        let name = name.as_str();
        let spec = match model {
            ModelName::Encounter2x2 => gens::encounter_2x2(
                need(self.eps, "eps", name)?,
                need(self.pmeet, "pmeet", name)?,
            )?,
            ModelName::Ring => gens::ring_uniform_self(need(self.n, "n", name)?)?,
            ModelName::FixedRing => GeneratorSpec::Fixed {
                matrix: StochasticMatrix::ring(need(self.n, "n", name)?),
            },
            ModelName::LeaderFollower => gens::leader_follower(need(self.n, "n", name)?)?,
            ModelName::Swap => GeneratorSpec::TwoPointSwap {
                a: need(self.a, "a", name)?,
            },
            ModelName::Bernoulli2x2 => GeneratorSpec::Bernoulli2x2 {
                x: need(self.x, "x", name)?,
                p_a: need(self.pa, "pa", name)?,
                p_b: need(self.pb, "pb", name)?,
            },
            ModelName::Beta2x2 => gens::symmetric_beta_2x2(need(self.a, "a", name)?)?,
            ModelName::Stubborn => {
                gens::stubborn_mixture(need(self.kappa, "kappa", name)?, need(self.r, "r", name)?)?
            }
            ModelName::Islands => gens::islands(
                need(self.g, "g", name)?,
                need(self.ps, "ps", name)?,
                need(self.pd, "pd", name)?,
            )?,
            ModelName::PerturbedAveraging => gens::perturbed_fixed(
                StochasticMatrix::averaging(need(self.n, "n", name)?),
                need(self.eps, "eps", name)?,
            )?,
            ModelName::AveragingOrIdentity => gens::averaging_or_identity(
                need(self.n, "n", name)?,
                need(self.zeta, "zeta", name)?,
            )?,
            ModelName::TwoAtomMetropolis => {
                fragmentation::two_atom_metropolis(need(self.q, "q", name)?)?
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn mu_law(mu: MuName, shape: Option<f64>) -> CliResult<(Law2x2, f64)> {
    let a = match mu {
        MuName::UniformIndep => 1.0,
        MuName::Arcsine => 0.5,
        MuName::Beta => match shape {
            Some(a) if a > 0.0 => a,
            Some(a) => return usage(format!("--shape must be positive, got {a}")),
            None => return usage("--mu beta requires --shape"),
        },
    };
    Ok((Law2x2::symmetric_beta(a), a))
}

/// Builds the experiment from flags alone.
fn from_flags(sub: &Sub) -> CliResult<Command> {
    Ok(match sub {
        Sub::Simulate {
            model, p0, steps, ..
        } => {
            if p0.is_empty() {
                return usage("simulate requires --p0");
            }
            Command::Simulate {
                model: model.spec()?,
                p0: p0.clone(),
                steps: *steps,
            }
        }
        Sub::Influence {
            model,
            replicas,
            t_max,
            gap_tol,
            ..
        } => Command::Influence {
            model: model.spec()?,
            replicas: *replicas,
            t_max: *t_max,
            gap_tol: *gap_tol,
        },
        Sub::Wisdom {
            family,
            zeta,
            eps,
            sizes,
            gamma,
            signal,
            half_width,
            replicas,
            t_max,
            gap_tol,
            ..
        } => Command::Wisdom {
            family: match family {
                FamilyName::Ring => Family::RingUniformSelf,
                FamilyName::AveragingOrIdentity => Family::AveragingOrIdentity {
                    zeta: zeta.ok_or_else(|| {
                        CliError::Usage("--family averaging-or-identity requires --zeta".into())
                    })?,
                },
                FamilyName::FixedRing => Family::FixedRing,
                FamilyName::LeaderFollower => Family::LeaderFollower,
                FamilyName::PerturbedAveraging => Family::PerturbedAveraging {
                    epsilon: eps.ok_or_else(|| {
                        CliError::Usage("--family perturbed-averaging requires --eps".into())
                    })?,
                },
            },
            sizes: sizes.clone(),
            gamma: *gamma,
            signal_law: match signal {
                SignalName::Uniform => SignalLaw::Uniform {
                    half_width: *half_width,
                },
                SignalName::Bernoulli => SignalLaw::Bernoulli,
            },
            replicas: *replicas,
            t_max: *t_max,
            gap_tol: *gap_tol,
        },
        Sub::Speed2x2 {
            model,
            mu,
            shape,
            phi,
            replicas,
            t_cap,
            ..
        } => Command::Speed2x2 {
            model: match mu {
                Some(mu) => gens::symmetric_beta_2x2(mu_law(*mu, *shape)?.1)?,
                None => model.spec()?,
            },
            phi: *phi,
            replicas: *replicas,
            t_cap: *t_cap,
        },
        Sub::Energy {
            mu,
            shape,
            law_file,
            quad_points,
            ..
        } => Command::Energy {
            law: match law_file {
                Some(path) => read_json(path, "--law-file")?,
                None => mu_law(*mu, *shape)?.0,
            },
            quad_points: *quad_points,
        },
        Sub::Pmax { dist, model, .. } => Command::Pmax {
            dist: match dist {
                Some(path) => read_json(path, "--dist")?,
                None => GraphDistribution::from_spec(&model.spec()?)?,
            },
        },
        Sub::Rate {
            model,
            epsilon,
            t_grid,
            t_max,
            replicas,
            ..
        } => Command::Rate {
            model: model.spec()?,
            epsilon: *epsilon,
            t_grid: if t_grid.is_empty() {
                (1..=*t_max).collect()
            } else {
                t_grid.clone()
            },
            replicas: *replicas,
        },
        Sub::Disagree {
            model,
            replicas,
            t_max,
            atom_tol,
            ..
        } => Command::Disagree {
            model: model.spec()?,
            replicas: *replicas,
            t_max: *t_max,
            atom_tol: *atom_tol,
        },
        Sub::CheckC {
            model,
            horizon,
            replicas,
            ..
        } => Command::CheckC {
            model: model.spec()?,
            horizon: *horizon,
            replicas: *replicas,
        },
        Sub::Skeleton {
            model_a,
            model_b,
            horizon,
            replicas,
            ..
        } => {
            let (Some(a), Some(b)) = (model_a, model_b) else {
                return usage("skeleton requires --model-a and --model-b");
            };
            Command::Skeleton {
                model_a: read_json(a, "--model-a")?,
                model_b: read_json(b, "--model-b")?,
                horizon: *horizon,
                replicas: *replicas,
            }
        }
        Sub::Semigroup {
            support,
            model,
            max_len,
            dedup_tol,
            ..
        } => Command::Semigroup {
            support: match support {
                Some(path) => read_json(path, "--support")?,
                None => {
                    let spec = model.spec()?;
                    let descriptor = spec.support()?;
                    let Some(atoms) = descriptor.atoms() else {
                        return usage("semigroup needs a finite-support model or --support");
                    };
                    atoms.iter().map(|(m, _)| m.clone()).collect()
                }
            },
            max_len: *max_len,
            dedup_tol: *dedup_tol,
        },
        Sub::Conjugacy {
            model,
            replicas,
            t_max,
            ..
        } => Command::Conjugacy {
            model: model.spec()?,
            replicas: *replicas,
            t_max: *t_max,
        },
    })
}

fn common(sub: &Sub) -> &Common {
    match sub {
        Sub::Simulate { common, .. }
        | Sub::Influence { common, .. }
        | Sub::Wisdom { common, .. }
        | Sub::Speed2x2 { common, .. }
        | Sub::Energy { common, .. }
        | Sub::Pmax { common, .. }
        | Sub::Rate { common, .. }
        | Sub::Disagree { common, .. }
        | Sub::CheckC { common, .. }
        | Sub::Skeleton { common, .. }
        | Sub::Semigroup { common, .. }
        | Sub::Conjugacy { common, .. } => common,
    }
}

fn sub_name(sub: &Sub) -> &'static str {
    match sub {
        Sub::Simulate { .. } => "simulate",
        Sub::Influence { .. } => "influence",
        Sub::Wisdom { .. } => "wisdom",
        Sub::Speed2x2 { .. } => "speed2x2",
        Sub::Energy { .. } => "energy",
        Sub::Pmax { .. } => "pmax",
        Sub::Rate { .. } => "rate",
        Sub::Disagree { .. } => "disagree",
        Sub::CheckC { .. } => "check-c",
        Sub::Skeleton { .. } => "skeleton",
        Sub::Semigroup { .. } => "semigroup",
        Sub::Conjugacy { .. } => "conjugacy",
    }
}

/// Resolves flags and `--config` into one experiment. Explicit `--seed`,
/// `--output` and `--format` override the config file.
fn resolve(sub: &Sub) -> CliResult<ExperimentConfig> {
    let common = common(sub);
    let mut config = match &common.config {
        Some(path) => {
            let config: ExperimentConfig = read_json(path, "--config")?;
            if config.command.name() != sub_name(sub) {
                return usage(format!(
                    "--config {} describes a {} experiment, not {}",
                    path.display(),
                    config.command.name(),
                    sub_name(sub)
                ));
            }
            config
        }
        None => ExperimentConfig {
            command: from_flags(sub)?,
            master_seed: 0,
            output_path: None,
            format: Format::Csv,
        },
    };
    if let Some(seed) = common.seed {
        config.master_seed = seed;
    }
    if let Some(path) = &common.output {
        config.output_path = Some(path.clone());
    }
    if let Some(format) = common.format {
        config.format = format;
    }
    Ok(config)
}

/// Result of one experiment in both output shapes.
pub struct Report {
    pub summary: String,
    pub table: Table,
    pub json: Value,
    /// Part of the experiment did not converge.
    pub incomplete: bool,
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("results serialize")
}

fn indexed(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}{i}"))
}

fn floats(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

fn edge_list(graph: &degroot::Graph) -> String {
    let edges: Vec<String> = graph
        .edges()
        .iter()
        .map(|(u, v)| format!("{u}-{v}"))
        .collect();
    edges.join(" ")
}

/// Runs one experiment.
pub fn execute(command: &Command, seed: u64) -> degroot::Result<Report> {
    Ok(match command {
        Command::Simulate { model, p0, steps } => {
            let mut state = GeneratorState::new(model, seed)?;
            let n = model.n();
            let mut beliefs = BeliefState::new(p0.clone(), None)?;
            if p0.len() != n {
                return Err(degroot::Error::DimensionMismatch {
                    expected: n,
                    found: p0.len(),
                });
            }
            let mut table = Table::new(std::iter::once("t".to_string()).chain(indexed("p_", n)));
            let mut trajectory = vec![beliefs.p_t.clone()];
            for t in 0..=*steps {
                if t > 0 {
                    beliefs = engine::evolve(&mut state, &beliefs, 1)?;
                    trajectory.push(beliefs.p_t.clone());
                }
                let mut row = vec![Cell::from(t)];
                row.extend(beliefs.p_t.iter().map(|&p| Cell::from(p)));
                table.push(row);
            }
            Report {
                summary: format!(
                    "simulate: {steps} steps, final spread {:.3e}",
                    beliefs.spread()
                ),
                table,
                json: json!({ "trajectory": trajectory, "final_spread": beliefs.spread() }),
                incomplete: false,
            }
        }
        Command::Influence {
            model,
            replicas,
            t_max,
            gap_tol,
        } => {
            let est = engine::estimate_influence(model, *replicas, *t_max, *gap_tol, seed)?;
            let mut table =
                Table::new(std::iter::once("sample".to_string()).chain(indexed("pi_", model.n())));
            for (k, pi) in est.samples.iter().enumerate() {
                let mut row = vec![Cell::from(k)];
                row.extend(pi.iter().map(|&p| Cell::from(p)));
                table.push(row);
            }
            Report {
                summary: format!(
                    "influence: {}/{} replicas converged, mean pi = {}",
                    est.converged,
                    est.replicas,
                    floats(&est.mean)
                ),
                table,
                json: to_value(&est),
                incomplete: est.converged < est.replicas,
            }
        }
        Command::Wisdom {
            family,
            sizes,
            gamma,
            signal_law,
            replicas,
            t_max,
            gap_tol,
        } => {
            let result = wisdom::run_wisdom(&WisdomConfig {
                family: family.clone(),
                sizes: sizes.clone(),
                gamma: *gamma,
                signal_law: signal_law.clone(),
                replicas: *replicas,
                t_max: *t_max,
                gap_tol: *gap_tol,
                seed,
            })?;
            let mut table = Table::new([
                "n",
                "mean_abs_error",
                "q50",
                "q90",
                "e_max_pi",
                "var_max_pi",
                "convergence_fraction",
            ]);
            for s in &result.per_size {
                table.push(vec![
                    s.n.into(),
                    s.mean_abs_error.into(),
                    s.max_abs_error_quantiles[0].into(),
                    s.max_abs_error_quantiles[1].into(),
                    s.e_max_pi.into(),
                    s.var_max_pi.into(),
                    s.convergence_fraction.into(),
                ]);
            }
            let failed: Vec<usize> = result
                .per_size
                .iter()
                .filter(|s| s.error.is_some())
                .map(|s| s.n)
                .collect();
            let errors: Vec<f64> = result.per_size.iter().map(|s| s.mean_abs_error).collect();
            Report {
                summary: if failed.is_empty() {
                    format!("wisdom: mean |error| by size = {}", floats(&errors))
                } else {
                    format!("wisdom: sizes {failed:?} mostly failed to reach consensus")
                },
                table,
                json: to_value(&result),
                incomplete: !failed.is_empty(),
            }
        }
        Command::Speed2x2 {
            model,
            phi,
            replicas,
            t_cap,
        } => {
            let report = engine::convergence_time_2x2(model, *phi, *replicas, *t_cap, seed)?;
            let mut table = Table::new(["replica", "t_phi"]);
            for (k, &t) in report.samples.iter().enumerate() {
                table.push(vec![k.into(), t.into()]);
            }
            Report {
                summary: format!(
                    "speed2x2: mean t_phi = {:.4} over {} replicas",
                    report.mean_t_phi,
                    report.samples.len()
                ),
                table,
                json: to_value(&report),
                incomplete: false,
            }
        }
        Command::Energy { law, quad_points } => {
            let energy = engine::log_energy(law, *quad_points)?;
            let mut table = Table::new(["log_energy"]);
            table.push(vec![energy.into()]);
            Report {
                summary: format!("energy: I_mu = {energy:.10}"),
                table,
                json: json!({ "law": law, "quad_points": quad_points, "log_energy": energy }),
                incomplete: false,
            }
        }
        Command::Pmax { dist } => {
            let report = fragmentation::p_max(dist)?;
            let mut table =
                Table::new(["p_max", "pi_g_empty", "predicted_rate", "argmax_collection"]);
            let collection: Vec<String> = report.argmax_collection.iter().map(edge_list).collect();
            table.push(vec![
                report.p_max.into(),
                report.pi_g_empty.into(),
                report.predicted_rate.into(),
                collection.join(";").into(),
            ]);
            Report {
                summary: format!(
                    "pmax: p_max = {}, predicted rate {:.6}",
                    report.p_max, report.predicted_rate
                ),
                table,
                json: to_value(&report),
                incomplete: false,
            }
        }
        Command::Rate {
            model,
            epsilon,
            t_grid,
            replicas,
        } => {
            let est = fragmentation::decay_rate_estimate(model, *epsilon, t_grid, *replicas, seed)?;
            let mut table = Table::new(["t", "exceedances", "prob", "log_prob"]);
            for p in &est.per_t_logprob {
                table.push(vec![
                    p.t.into(),
                    p.exceedances.into(),
                    p.prob.into(),
                    p.log_prob.into(),
                ]);
            }
            Report {
                summary: format!("rate: empirical decay rate {:.6}", est.empirical_rate),
                table,
                json: to_value(&est),
                incomplete: false,
            }
        }
        Command::Disagree {
            model,
            replicas,
            t_max,
            atom_tol,
        } => {
            let report = engine::disagreement_degree(model, *replicas, *t_max, *atom_tol, seed)?;
            let mut table = Table::new(["rank", "frequency"]);
            for (&rank, &freq) in &report.rank_histogram {
                table.push(vec![rank.into(), freq.into()]);
            }
            Report {
                summary: format!(
                    "disagree: eta = {}, {}",
                    report.eta_estimate,
                    match &report.support_atoms {
                        Some(atoms) => format!("{} limit atoms", atoms.len()),
                        None => "limits did not cluster".into(),
                    }
                ),
                table,
                json: to_value(&report),
                incomplete: false,
            }
        }
        Command::CheckC {
            model,
            horizon,
            replicas,
        } => {
            let report = engine::check_condition_c(model, *horizon, *replicas, seed)?;
            let mut table = Table::new(["verdict", "method", "evidence", "horizon"]);
            table.push(vec![
                format!("{:?}", report.verdict).into(),
                format!("{:?}", report.method).into(),
                report.evidence.into(),
                report.horizon.into(),
            ]);
            Report {
                summary: format!("check-c: {:?} by {:?}", report.verdict, report.method),
                table,
                json: to_value(&report),
                incomplete: false,
            }
        }
        Command::Skeleton {
            model_a,
            model_b,
            horizon,
            replicas,
        } => {
            let eq =
                engine::skeleton_equivalence_test(model_a, model_b, *horizon, *replicas, seed)?;
            let mut table =
                Table::new(["same_initial_skeleton", "verdict_a", "verdict_b", "agree"]);
            table.push(vec![
                eq.same_initial_skeleton.into(),
                format!("{:?}", eq.verdict_a.verdict).into(),
                format!("{:?}", eq.verdict_b.verdict).into(),
                eq.agree.into(),
            ]);
            Report {
                summary: format!(
                    "skeleton: same pattern {}, verdicts {:?} / {:?}",
                    eq.same_initial_skeleton, eq.verdict_a.verdict, eq.verdict_b.verdict
                ),
                table,
                json: to_value(&eq),
                incomplete: false,
            }
        }
        Command::Semigroup {
            support,
            max_len,
            dedup_tol,
        } => {
            let report = engine::semigroup_explore(support, *max_len, *dedup_tol)?;
            let mut table =
                Table::new(["size", "min_rank", "distinct_skeletons", "rank_one_atoms"]);
            table.push(vec![
                report.size.into(),
                report.min_rank.into(),
                report.skeletons.len().into(),
                report.rank_one_atoms.len().into(),
            ]);
            Report {
                summary: format!(
                    "semigroup: {} elements, min rank {}",
                    report.size, report.min_rank
                ),
                table,
                json: to_value(&report),
                incomplete: false,
            }
        }
        Command::Conjugacy {
            model,
            replicas,
            t_max,
        } => {
            let report = wisdom::dirichlet_conjugacy_test(model, *replicas, *t_max, seed)?;
            let mut table = Table::new(["agent", "phi", "mean", "variance"]);
            for i in 0..report.phi.len() {
                table.push(vec![
                    i.into(),
                    report.phi[i].into(),
                    report.mean[i].into(),
                    report.variance[i].into(),
                ]);
            }
            Report {
                summary: format!(
                    "conjugacy: {} (mean z {:.2}, variance z {:.2})",
                    if report.pass { "pass" } else { "fail" },
                    report.mean_z,
                    report.var_z
                ),
                table,
                json: to_value(&report),
                incomplete: false,
            }
        }
    })
}

fn write_report(report: &Report, config: &ExperimentConfig) -> CliResult<()> {
    let write = |out: &mut dyn Write| -> io::Result<()> {
        match config.format {
            Format::Csv => report.table.write_csv(&mut *out),
            Format::Json => emit::write_json(&report.json, &mut *out),
        }?;
        out.flush()
    };
    match &config.output_path {
        Some(path) => {
            let file = File::create(path)
                .map_err(|e| CliError::Io(format!("cannot create {}", path.display()), e))?;
            write(&mut BufWriter::new(file))
                .map_err(|e| CliError::Io(format!("writing {}", path.display()), e))?;
            println!("{}", report.summary);
        }
        None => {
            match write(&mut io::stdout().lock()) {
                // a closed pipe (`degroot ... | head`) is not a failure
                Err(e) if e.kind() == io::ErrorKind::BrokenPipe => return Ok(()),
                other => other.map_err(|e| CliError::Io("writing standard output".into(), e))?,
            }
            eprintln!("{}", report.summary);
        }
    }
    Ok(())
}

fn worker_count(flag: Option<usize>) -> CliResult<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(k) if k > 0 => Ok(k),
            _ => usage(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            )),
        },
        Err(_) => match flag {
            Some(0) => usage("--threads must be positive"),
            Some(k) => Ok(k),
            None => Ok(0),
        },
    }
}

fn run_cli(cli: Cli) -> CliResult<i32> {
    let config = resolve(&cli.command)?;
    if common(&cli.command).print_config {
        println!("{}", config.to_json());
        return Ok(EXIT_OK);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(cli.threads)?)
        .build()
        .map_err(|e| CliError::Io("cannot start worker threads".into(), io::Error::other(e)))?;
    let report = pool.install(|| execute(&config.command, config.master_seed))?;
    write_report(&report, &config)?;
    Ok(if report.incomplete {
        EXIT_NO_CONVERGENCE
    } else {
        EXIT_OK
    })
}

/// Parses `args` (including the program name), runs the experiment and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run_cli(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("degroot: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("degroot").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_build_the_named_model() {
        let cli = parse(&[
            "influence",
            "--model",
            "encounter2x2",
            "--eps",
            "0.3",
            "--pmeet",
            "0.5",
            "--replicas",
            "50",
        ]);
        let config = resolve(&cli.command).unwrap();
        assert_eq!(
            config.command,
            Command::Influence {
                model: gens::encounter_2x2(0.3, 0.5).unwrap(),
                replicas: 50,
                t_max: 10_000,
                gap_tol: DEFAULT_GAP_TOL,
            }
        );
    }

    #[test]
    fn missing_parameter_names_the_flag() {
        let cli = parse(&["influence", "--model", "encounter2x2", "--eps", "0.3"]);
        match resolve(&cli.command) {
            Err(CliError::Usage(msg)) => assert!(msg.contains("--pmeet"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn error_classes_map_to_exit_codes() {
        let no_conv = CliError::Model(degroot::Error::NoConvergence {
            converged: 0,
            replicas: 5,
        });
        assert_eq!(no_conv.exit_code(), EXIT_NO_CONVERGENCE);
        assert_eq!(
            CliError::Model(degroot::Error::NotIid).exit_code(),
            EXIT_USAGE
        );
        assert_eq!(
            CliError::Model(degroot::Error::EigenvectorFailure).exit_code(),
            EXIT_INTERNAL
        );
    }

    #[test]
    fn energy_of_uniform_law() {
        let report = execute(
            &Command::Energy {
                law: Law2x2::uniform(),
                quad_points: 64,
            },
            0,
        )
        .unwrap();
        assert_eq!(report.table.header, ["log_energy"]);
        assert!((report.json["log_energy"].as_f64().unwrap() - 1.5).abs() < 1e-8);
    }
}
