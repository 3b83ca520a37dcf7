//! Belief evolution, accumulation of left products `X^(t) = X_t ... X_1`,
//! consensus diagnostics and influence estimation.

mod condition;
mod disagreement;
mod speed;

pub use condition::{
    check_condition_c, cyclicity_check, semigroup_explore, semigroup_explore_capped,
    skeleton_equivalence_test, ConditionCReport, CyclicityReport, Method, SemigroupReport,
    SkeletonEquivalence, Verdict, DEFAULT_SEMIGROUP_CAP,
};
pub use disagreement::{disagreement_degree, DisagreementReport, DEFAULT_ATOM_TOL};
pub use speed::{convergence_time_2x2, default_t_cap, log_energy, Law2x2, SpeedReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::{GeneratorSpec, GeneratorState};
use crate::matrix::{StochasticMatrix, ZERO_TOL};
use crate::seed::run_replicas;
use crate::stats;

/// A deviation shrinking by more than this factor in one period is taken
/// to be exactly zero.
const ANNIHILATION_TOL: f64 = 1e-13;

/// Default consensus threshold on the consensus gap.
pub const DEFAULT_GAP_TOL: f64 = 1e-8;

/// Initial signals and current beliefs of `n` agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefState {
    pub n: usize,
    pub p0: Vec<f64>,
    pub p_t: Vec<f64>,
    pub t: usize,
    /// The true state, when the experiment has one.
    pub gamma: Option<f64>,
}

impl BeliefState {
    pub fn new(p0: Vec<f64>, gamma: Option<f64>) -> Result<Self> {
        for &p in p0.iter().chain(gamma.iter()) {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidProbability {
                    name: "belief",
                    value: p,
                });
            }
        }
        Ok(BeliefState {
            n: p0.len(),
            p_t: p0.clone(),
            p0,
            t: 0,
            gamma,
        })
    }

    /// `max_i p_i - min_i p_i` of the current beliefs.
    pub fn spread(&self) -> f64 {
        let hi = self.p_t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = self.p_t.iter().copied().fold(f64::INFINITY, f64::min);
        hi - lo
    }
}

/// Advances the beliefs `steps` periods: `p <- X_t p`.
pub fn evolve(
    gen: &mut GeneratorState,
    beliefs: &BeliefState,
    steps: usize,
) -> Result<BeliefState> {
    if gen.n() != beliefs.n {
        return Err(Error::DimensionMismatch {
            expected: gen.n(),
            found: beliefs.n,
        });
    }
    let mut out = beliefs.clone();
    for _ in 0..steps {
        out.p_t = gen.sample_next().apply(&out.p_t)?;
        out.t += 1;
    }
    Ok(out)
}

/// The left product after `t` draws, with consensus diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductAccumulator {
    pub product: StochasticMatrix,
    pub t: usize,
    /// `distance_to_rank_one` of the product.
    pub consensus_gap: f64,
    /// Some partial product `X^(s)`, `s <= t`, was strictly positive.
    pub strict_positive_seen: bool,
    /// First `s` with gap `<= gap_tol`.
    pub consensus_time: Option<usize>,
    /// Product of the Dobrushin coefficients of the factors, an upper bound
    /// on the consensus gap.
    pub dobrushin_bound: f64,
}

/// Draws `t_max` matrices and composes them on the left.
pub fn accumulate(gen: &mut GeneratorState, t_max: usize, gap_tol: f64) -> ProductAccumulator {
    let n = gen.n();
    let mut acc = ProductAccumulator {
        product: StochasticMatrix::identity(n),
        t: 0,
        consensus_gap: if n > 1 { 1.0 } else { 0.0 },
        strict_positive_seen: n == 1,
        consensus_time: (n == 1).then_some(0),
        dobrushin_bound: 1.0,
    };
    let mut scratch = Vec::new();
    for t in 1..=t_max {
        let x = gen.sample_next();
        acc.dobrushin_bound *= x.dobrushin_coefficient();
        acc.product.left_mul_assign(&x, &mut scratch);
        acc.t = t;
        acc.consensus_gap = acc.product.distance_to_rank_one();
        if acc.consensus_time.is_none() && acc.consensus_gap <= gap_tol {
            acc.consensus_time = Some(t);
        }
        acc.strict_positive_seen |= acc.product.is_strictly_positive(ZERO_TOL);
    }
    acc
}

/// Outcome of running one replica until consensus or `t_max`.
pub(crate) struct Run {
    pub product: StochasticMatrix,
    pub gap: f64,
    pub consensus_time: Option<usize>,
}

/// Runs a replica and stops at the first `t` with gap `<= gap_tol`.
pub(crate) fn run_to_consensus(
    spec: &GeneratorSpec,
    seed: u64,
    t_max: usize,
    gap_tol: f64,
) -> Result<Run> {
    let mut state = GeneratorState::new(spec, seed)?;
    let n = spec.n();
    let mut product = StochasticMatrix::identity(n);
    let mut scratch = Vec::new();
    let mut gap = product.distance_to_rank_one();
    if gap <= gap_tol {
        return Ok(Run {
            product,
            gap,
            consensus_time: Some(0),
        });
    }
    for t in 1..=t_max {
        product.left_mul_assign(&state.sample_next(), &mut scratch);
        gap = product.distance_to_rank_one();
        if gap <= gap_tol {
            return Ok(Run {
                product,
                gap,
                consensus_time: Some(t),
            });
        }
    }
    Ok(Run {
        product,
        gap,
        consensus_time: None,
    })
}

/// Monte Carlo law of the influence vector `pi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceEstimate {
    /// One `pi` sample per converged replica, in replica order.
    pub samples: Vec<Vec<f64>>,
    /// Final consensus gap of every replica.
    pub per_replica_gap: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Sample mean of `max_i pi_i`.
    pub max_component_mean: f64,
    pub converged: usize,
    pub replicas: usize,
}

/// Runs `replicas` independent products to consensus and records the common
/// row of each limit as a sample of `pi`.
pub fn estimate_influence(
    spec: &GeneratorSpec,
    replicas: usize,
    t_max: usize,
    gap_tol: f64,
    seed: u64,
) -> Result<InfluenceEstimate> {
    if replicas == 0 {
        return Err(Error::InvalidSpec("replicas must be positive".into()));
    }
    spec.validate()?;
    let runs = run_replicas(seed, replicas, |_, s| {
        run_to_consensus(spec, s, t_max, gap_tol)
    });
    let mut samples = Vec::new();
    let mut per_replica_gap = Vec::with_capacity(replicas);
    for run in runs {
        let run = run?;
        per_replica_gap.push(run.gap);
        if run.consensus_time.is_some() {
            samples.push(run.product.row(0).to_vec());
        }
    }
    let converged = samples.len();
    if 2 * converged < replicas {
        return Err(Error::NoConvergence {
            converged,
            replicas,
        });
    }
    let n = spec.n();
    let column = |i: usize| samples.iter().map(|s| s[i]).collect::<Vec<f64>>();
    let mean = (0..n).map(|i| stats::mean(&column(i))).collect();
    let variance = (0..n).map(|i| stats::variance(&column(i))).collect();
    let maxima: Vec<f64> = samples
        .iter()
        .map(|s| s.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    Ok(InfluenceEstimate {
        max_component_mean: stats::mean(&maxima),
        samples,
        per_replica_gap,
        mean,
        variance,
        converged,
        replicas,
    })
}

/// Consensus time of every replica (`None` when `t_max` is reached first).
pub fn consensus_times(
    spec: &GeneratorSpec,
    replicas: usize,
    t_max: usize,
    gap_tol: f64,
    seed: u64,
) -> Result<Vec<Option<usize>>> {
    spec.validate()?;
    run_replicas(seed, replicas, |_, s| {
        run_to_consensus(spec, s, t_max, gap_tol).map(|r| r.consensus_time)
    })
    .into_iter()
    .collect()
}

/// `exp` of the replica average of `(1/t) log ||(I - 11'/n) X^(t)||` at
/// `t = t_max`.
///
/// The projected product equals `X^(t) - 11'/n` whenever the factors are
/// bistochastic, and for a general stochastic `T` it decays like
/// `|lambda_2(T)|^t` instead of converging to `1(pi - 1/n)'`. It is
/// propagated as `E_t = (I - 11'/n) X_t E_{t-1}` with running
/// renormalization, which avoids cancellation and underflow.
pub fn lyapunov_exponent(
    spec: &GeneratorSpec,
    t_max: usize,
    replicas: usize,
    seed: u64,
) -> Result<f64> {
    if t_max == 0 || replicas == 0 {
        return Err(Error::InvalidSpec(
            "t_max and replicas must be positive".into(),
        ));
    }
    spec.validate()?;
    let n = spec.n();
    let logs = run_replicas(seed, replicas, |_, s| -> Result<f64> {
        let mut state = GeneratorState::new(spec, s)?;
        let c = 1.0 / n as f64;
        let mut d: Vec<f64> = (0..n * n)
            .map(|k| if k / n == k % n { 1.0 - c } else { -c })
            .collect();
        let mut next = vec![0.0; n * n];
        let mut log_scale = 0.0;
        for _ in 0..t_max {
            let x = state.sample_next();
            next.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..n {
                for (k, &w) in x.row(i).iter().enumerate() {
                    if w != 0.0 {
                        for j in 0..n {
                            next[i * n + j] += w * d[k * n + j];
                        }
                    }
                }
            }
            for j in 0..n {
                let col_mean = (0..n).map(|i| next[i * n + j]).sum::<f64>() * c;
                (0..n).for_each(|i| next[i * n + j] -= col_mean);
            }
            std::mem::swap(&mut d, &mut next);
            let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            // d had max entry 1 before this step; what is left is roundoff
            if scale <= ANNIHILATION_TOL * n as f64 {
                return Ok(f64::NEG_INFINITY);
            }
            d.iter_mut().for_each(|v| *v /= scale);
            log_scale += scale.ln();
        }
        let m = nalgebra::DMatrix::from_row_slice(n, n, &d);
        let norm = m.singular_values().iter().copied().fold(0.0, f64::max);
        Ok((log_scale + norm.ln()) / t_max as f64)
    });
    let logs: Vec<f64> = logs.into_iter().collect::<Result<_>>()?;
    Ok(stats::mean(&logs).exp())
}
