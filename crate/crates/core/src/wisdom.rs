//! Collective intelligence across growing societies, Dirichlet conjugacy of
//! the influence vector and consensus probabilities.

use rand::{Rng as _, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::engine::run_to_consensus;
use crate::error::{Error, Result};
use crate::generators::{self, dirichlet_balance, GeneratorSpec, GeneratorState};
use crate::matrix::{StochasticMatrix, RANK_REL_TOL, ZERO_TOL};
use crate::seed::{replica_seed, run_replicas, splitmix64, Rng};
use crate::stats;

/// Fitted decay exponent below which a ratio counts as not vanishing.
pub const MIC3_MIN_SLOPE: f64 = 0.1;
/// Monte Carlo standard errors separating a singular value from zero.
pub const RANK_Z: f64 = 4.0;
/// Monte Carlo standard errors allowed by the conjugacy test.
pub const CONJUGACY_Z: f64 = 4.0;

/// Rule producing a generator for each society size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    RingUniformSelf,
    /// `1/n 11'` with probability `zeta`, identity otherwise.
    AveragingOrIdentity {
        zeta: f64,
    },
    /// The deterministic cyclic shift, which never reaches consensus.
    FixedRing,
    LeaderFollower,
    /// Dirichlet rows around `1/n 11'` with concentration `epsilon`.
    PerturbedAveraging {
        epsilon: f64,
    },
}

impl Family {
    pub fn spec(&self, n: usize) -> Result<GeneratorSpec> {
        match self {
            Family::RingUniformSelf => generators::ring_uniform_self(n),
            Family::AveragingOrIdentity { zeta } => generators::averaging_or_identity(n, *zeta),
            Family::FixedRing => Ok(GeneratorSpec::Fixed {
                matrix: StochasticMatrix::ring(n),
            }),
            Family::LeaderFollower => generators::leader_follower(n),
            Family::PerturbedAveraging { epsilon } => {
                generators::perturbed_fixed(StochasticMatrix::averaging(n), *epsilon)
            }
        }
    }
}

/// Law of the private signals `p_i^(0)`, all with mean `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum SignalLaw {
    /// `Uniform(gamma - w, gamma + w)`, which must lie inside `[0, 1]`.
    Uniform {
        half_width: f64,
    },
    Bernoulli,
    /// Uniform over a list of values whose mean is `gamma`.
    Custom {
        values: Vec<f64>,
    },
}

impl Default for SignalLaw {
    fn default() -> Self {
        SignalLaw::Uniform { half_width: 0.25 }
    }
}

impl SignalLaw {
    /// Checks mean `gamma` and positive variance; returns the variance.
    pub fn validate(&self, gamma: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidProbability {
                name: "gamma",
                value: gamma,
            });
        }
        let var = match self {
            SignalLaw::Uniform { half_width: w } => {
                if !(*w > 0.0) || gamma - w < 0.0 || gamma + w > 1.0 {
                    return Err(Error::InvalidSpec(format!(
                        "Uniform({}, {}) must lie inside [0, 1]",
                        gamma - w,
                        gamma + w
                    )));
                }
                w * w / 3.0
            }
            SignalLaw::Bernoulli => gamma * (1.0 - gamma),
            SignalLaw::Custom { values } => {
                if values.is_empty() || values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::InvalidSpec(
                        "signal values must lie in [0, 1]".into(),
                    ));
                }
                let m = stats::mean(values);
                if (m - gamma).abs() > 1e-12 {
                    return Err(Error::InvalidSpec(format!(
                        "signal mean {m} differs from gamma {gamma}"
                    )));
                }
                values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64
            }
        };
        if !(var > 0.0) {
            return Err(Error::InvalidSpec(
                "signal variance must be positive".into(),
            ));
        }
        Ok(var)
    }

    pub fn sample(&self, gamma: f64, rng: &mut Rng) -> f64 {
        match self {
            SignalLaw::Uniform { half_width } => {
                gamma - half_width + 2.0 * half_width * rng.random::<f64>()
            }
            SignalLaw::Bernoulli => f64::from(u8::from(rng.random::<f64>() < gamma)),
            SignalLaw::Custom { values } => values[rng.random_range(0..values.len())],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WisdomConfig {
    pub family: Family,
    pub sizes: Vec<usize>,
    pub gamma: f64,
    #[serde(default)]
    pub signal_law: SignalLaw,
    pub replicas: usize,
    pub t_max: usize,
    pub gap_tol: f64,
    pub seed: u64,
}

/// Diagnostics for one society size. Error and influence statistics are
/// over converged replicas and are NaN when none converged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeResult {
    pub n: usize,
    pub mean_abs_error: f64,
    /// Median and 90th percentile of `max_i |p_i^(inf) - gamma|`.
    pub max_abs_error_quantiles: [f64; 2],
    pub e_max_pi: f64,
    pub var_max_pi: f64,
    pub convergence_fraction: f64,
    /// Set when fewer than half of the replicas reached consensus.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WisdomResult {
    pub per_size: Vec<SizeResult>,
}

/// For each size, draws iid signals, runs the dynamics to consensus and
/// records the error `|pi . p0 - gamma|` together with `max_i pi_i`.
pub fn run_wisdom(config: &WisdomConfig) -> Result<WisdomResult> {
    config.signal_law.validate(config.gamma)?;
    if let Some(&n) = config.sizes.iter().find(|&&n| n < 2) {
        return Err(Error::InvalidSpec(format!("society size {n} is below 2")));
    }
    if config.replicas == 0 {
        return Err(Error::InvalidSpec("replicas must be positive".into()));
    }
    let mut per_size = Vec::with_capacity(config.sizes.len());
    for &n in &config.sizes {
        let spec = config.family.spec(n)?;
        let size_seed = replica_seed(config.seed, n as u64);
        let runs = run_replicas(
            size_seed,
            config.replicas,
            |_, s| -> Result<Option<(f64, f64)>> {
                let mut signal_rng = Rng::seed_from_u64(splitmix64(s));
                let p0: Vec<f64> = (0..n)
                    .map(|_| config.signal_law.sample(config.gamma, &mut signal_rng))
                    .collect();
                let run = run_to_consensus(&spec, s, config.t_max, config.gap_tol)?;
                if run.consensus_time.is_none() {
                    return Ok(None);
                }
                let pi = run.product.row(0);
                let consensus: f64 = pi.iter().zip(&p0).map(|(a, b)| a * b).sum();
                let max_pi = pi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                Ok(Some(((consensus - config.gamma).abs(), max_pi)))
            },
        );
        let runs: Vec<Option<(f64, f64)>> = runs.into_iter().collect::<Result<_>>()?;
        let (errors, maxima): (Vec<f64>, Vec<f64>) = runs.into_iter().flatten().unzip();
        let converged = errors.len();
        let nan_if_empty = |f: &dyn Fn() -> f64| if converged == 0 { f64::NAN } else { f() };
        per_size.push(SizeResult {
            n,
            mean_abs_error: nan_if_empty(&|| stats::mean(&errors)),
            max_abs_error_quantiles: [
                nan_if_empty(&|| stats::quantile(&errors, 0.5)),
                nan_if_empty(&|| stats::quantile(&errors, 0.9)),
            ],
            e_max_pi: nan_if_empty(&|| stats::mean(&maxima)),
            var_max_pi: nan_if_empty(&|| stats::variance(&maxima)),
            convergence_fraction: converged as f64 / config.replicas as f64,
            error: (2 * converged < config.replicas).then(|| {
                Error::NoConvergence {
                    converged,
                    replicas: config.replicas,
                }
                .to_string()
            }),
        });
    }
    Ok(WisdomResult { per_size })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mic3Fit {
    /// Log-log slope of `sum_i phi_i` against `n`.
    pub k_fit: f64,
    /// Minus the log-log slope of `max_j phi_j / sum_i phi_i` against `n`.
    pub m_fit: f64,
    /// `m_fit > MIC3_MIN_SLOPE`.
    pub qualifies: bool,
}

/// Growth rates of the Dirichlet limit parameters `phi(n)` of a family of
/// balanced alpha matrices.
pub fn check_mic3_rates(
    alpha_family: &dyn Fn(usize) -> Vec<Vec<f64>>,
    sizes: &[usize],
) -> Result<Mic3Fit> {
    if sizes.len() < 4 {
        return Err(Error::InvalidSpec("rate fits need at least 4 sizes".into()));
    }
    let mut total_pts = Vec::with_capacity(sizes.len());
    let mut ratio_pts = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let phi = dirichlet_balance(&alpha_family(n))?;
        let total: f64 = phi.iter().sum();
        let max = phi.iter().copied().fold(0.0, f64::max);
        let ln_n = (n as f64).ln();
        total_pts.push((ln_n, total.ln()));
        ratio_pts.push((ln_n, (max / total).ln()));
    }
    let k_fit = stats::least_squares_slope(&total_pts);
    let m_fit = -stats::least_squares_slope(&ratio_pts) + 0.0;
    Ok(Mic3Fit {
        k_fit,
        m_fit,
        qualifies: m_fit > MIC3_MIN_SLOPE,
    })
}

/// Dirichlet parameter `phi` of the limit law of `pi`, for the models where
/// it is known in closed form.
pub fn limit_dirichlet_parameter(spec: &GeneratorSpec) -> Result<Vec<f64>> {
    match spec {
        // same limit law as the ring despite the correlated rows
        GeneratorSpec::LeaderFollower { n } => Ok(vec![2.0; *n]),
        _ => match spec.dirichlet_alpha() {
            Some(alpha) => dirichlet_balance(&alpha),
            None => Err(Error::Unsupported(
                "no closed-form Dirichlet limit for this model".into(),
            )),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjugacyReport {
    pub phi: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Largest `|sample mean - phi_i / phi_0|`.
    pub mean_err: f64,
    /// Largest `|sample variance - phi_i (phi_0 - phi_i) / (phi_0^2 (phi_0 + 1))|`.
    pub var_err: f64,
    /// Largest errors in units of their Monte Carlo standard errors.
    pub mean_z: f64,
    pub var_z: f64,
    pub pass: bool,
}

/// Compares Monte Carlo moments of `pi` with the Dirichlet(`phi`) marginals.
pub fn dirichlet_conjugacy_test(
    spec: &GeneratorSpec,
    replicas: usize,
    t_max: usize,
    seed: u64,
) -> Result<ConjugacyReport> {
    let phi = limit_dirichlet_parameter(spec)?;
    let est = crate::engine::estimate_influence(
        spec,
        replicas,
        t_max,
        crate::engine::DEFAULT_GAP_TOL,
        seed,
    )?;
    let phi0: f64 = phi.iter().sum();
    let k = est.samples.len() as f64;
    let (mut mean_err, mut var_err, mut mean_z, mut var_z) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (i, &p) in phi.iter().enumerate() {
        let m = p / phi0;
        let v = p * (phi0 - p) / (phi0 * phi0 * (phi0 + 1.0));
        let xs: Vec<f64> = est.samples.iter().map(|s| s[i]).collect();
        let de = (est.mean[i] - m).abs();
        let dv = (est.variance[i] - v).abs();
        let m4 = xs.iter().map(|x| (x - est.mean[i]).powi(4)).sum::<f64>() / k;
        let se_mean = (est.variance[i] / k).sqrt();
        let se_var = ((m4 - est.variance[i].powi(2)) / k).sqrt();
        mean_err = mean_err.max(de);
        var_err = var_err.max(dv);
        mean_z = mean_z.max(de / se_mean);
        var_z = var_z.max(dv / se_var);
    }
    Ok(ConjugacyReport {
        pass: mean_z <= CONJUGACY_Z && var_z <= CONJUGACY_Z,
        phi,
        mean: est.mean,
        variance: est.variance,
        mean_err,
        var_err,
        mean_z,
        var_z,
    })
}

fn binomial(k: u64, j: u64) -> f64 {
    (0..j).fold(1.0, |acc, i| acc * (k - i) as f64 / (i + 1) as f64)
}

/// `sum_{j=0}^{k-1} C(k, j) (1 - phi)^j phi^(k - j)`, the probability that a
/// society whose `k` rank components each carry consensus with probability
/// `phi` reaches consensus.
pub fn consensus_probability(k: u64, phi_n: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidSpec("k must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&phi_n) {
        return Err(Error::InvalidProbability {
            name: "phi_n",
            value: phi_n,
        });
    }
    Ok((0..k)
        .map(|j| binomial(k, j) * (1.0 - phi_n).powi(j as i32) * phi_n.powi((k - j) as i32))
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanRankOne {
    pub mean_limit: StochasticMatrix,
    pub rank: usize,
    /// Singular values at or below this count as zero.
    pub rank_tol: f64,
    /// Fraction of replicas with a strictly positive partial product.
    pub strict_positive_fraction: f64,
}

/// Averages `X^(t_max)` over replicas and reports the numeric rank of the
/// average. Without `allow_no_positive`, some replica must have seen a
/// strictly positive product.
///
/// Singular values of the sample mean move by at most the spectral norm of
/// its Monte Carlo error, which is below `n` times the largest entrywise
/// error. Values under `RANK_Z * n * max_ij se_ij` are therefore treated as
/// zero.
pub fn mean_rank_one_test(
    spec: &GeneratorSpec,
    replicas: usize,
    t_max: usize,
    seed: u64,
    allow_no_positive: bool,
) -> Result<MeanRankOne> {
    if replicas == 0 {
        return Err(Error::InvalidSpec("replicas must be positive".into()));
    }
    spec.validate()?;
    let n = spec.n();
    let runs = run_replicas(seed, replicas, |_, s| -> Result<(StochasticMatrix, bool)> {
        let mut state = GeneratorState::new(spec, s)?;
        let mut product = StochasticMatrix::identity(n);
        let mut scratch = Vec::new();
        let mut strict = false;
        for _ in 0..t_max {
            product.left_mul_assign(&state.sample_next(), &mut scratch);
            strict |= product.is_strictly_positive(ZERO_TOL);
        }
        Ok((product, strict))
    });
    let runs: Vec<(StochasticMatrix, bool)> = runs.into_iter().collect::<Result<_>>()?;
    let positive = runs.iter().filter(|r| r.1).count();
    if positive == 0 && !allow_no_positive {
        return Err(Error::PreconditionUnmet(
            "no replica produced a strictly positive product".into(),
        ));
    }
    let mut max_se = 0.0f64;
    let mut mean = vec![0.0; n * n];
    for (k, slot) in mean.iter_mut().enumerate() {
        let xs: Vec<f64> = runs.iter().map(|(m, _)| m.as_slice()[k]).collect();
        *slot = stats::mean(&xs);
        max_se = max_se.max(stats::std_error(&xs));
    }
    let mean_limit = StochasticMatrix::from_flat(n, mean);
    let report = mean_limit.numeric_rank(RANK_REL_TOL)?;
    let rank_tol = (RANK_Z * n as f64 * max_se).max(RANK_REL_TOL * report.singular_values[0]);
    let rank = report
        .singular_values
        .iter()
        .filter(|&&s| s > rank_tol)
        .count()
        .max(1);
    Ok(MeanRankOne {
        mean_limit,
        rank,
        rank_tol,
        strict_positive_fraction: positive as f64 / replicas as f64,
    })
}
