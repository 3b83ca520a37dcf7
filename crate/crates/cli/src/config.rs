//! Experiment configuration, the JSON document accepted by `--config`.
//!
//! ```json
//! {
//!   "command": { "kind": "influence", "model": { "model": "encounter2x2", "epsilon": 0.3, "p_meet": 0.5 },
//!                "replicas": 5000, "t_max": 10000, "gap_tol": 1e-8 },
//!   "master_seed": 7,
//!   "output_path": "influence.csv",
//!   "format": "csv"
//! }
//! ```
//!
//! Generator specs use the `model` tag with snake_case variant names
//! (`fixed`, `finite_mixture`, `dirichlet_rows`, ...). Matrices are row-major
//! arrays of numbers and graphs are 0/1 adjacency arrays.

use std::path::PathBuf;

use degroot::engine::Law2x2;
use degroot::fragmentation::GraphDistribution;
use degroot::wisdom::{Family, SignalLaw};
use degroot::{GeneratorSpec, StochasticMatrix};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub command: Command,
    pub master_seed: u64,
    /// Standard output when absent.
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Command {
    /// Belief trajectory of one replica.
    Simulate {
        model: GeneratorSpec,
        p0: Vec<f64>,
        steps: usize,
    },
    Influence {
        model: GeneratorSpec,
        replicas: usize,
        t_max: usize,
        gap_tol: f64,
    },
    Wisdom {
        family: Family,
        sizes: Vec<usize>,
        gamma: f64,
        #[serde(default)]
        signal_law: SignalLaw,
        replicas: usize,
        t_max: usize,
        gap_tol: f64,
    },
    #[serde(rename = "speed2x2")]
    Speed2x2 {
        model: GeneratorSpec,
        phi: f64,
        replicas: usize,
        #[serde(default)]
        t_cap: Option<usize>,
    },
    Energy {
        law: Law2x2,
        quad_points: usize,
    },
    Pmax {
        dist: GraphDistribution,
    },
    Rate {
        model: GeneratorSpec,
        epsilon: f64,
        t_grid: Vec<usize>,
        replicas: usize,
    },
    Disagree {
        model: GeneratorSpec,
        replicas: usize,
        t_max: usize,
        atom_tol: f64,
    },
    CheckC {
        model: GeneratorSpec,
        horizon: usize,
        replicas: usize,
    },
    Skeleton {
        model_a: GeneratorSpec,
        model_b: GeneratorSpec,
        horizon: usize,
        replicas: usize,
    },
    Semigroup {
        support: Vec<StochasticMatrix>,
        max_len: usize,
        dedup_tol: f64,
    },
    Conjugacy {
        model: GeneratorSpec,
        replicas: usize,
        t_max: usize,
    },
}

impl Command {
    /// Subcommand name on the command line.
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Influence { .. } => "influence",
            Command::Wisdom { .. } => "wisdom",
            Command::Speed2x2 { .. } => "speed2x2",
            Command::Energy { .. } => "energy",
            Command::Pmax { .. } => "pmax",
            Command::Rate { .. } => "rate",
            Command::Disagree { .. } => "disagree",
            Command::CheckC { .. } => "check-c",
            Command::Skeleton { .. } => "skeleton",
            Command::Semigroup { .. } => "semigroup",
            Command::Conjugacy { .. } => "conjugacy",
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
