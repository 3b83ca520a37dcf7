//! Network generating processes.
//!
//! A [`GeneratorSpec`] is the declarative description of the law of one
//! interaction matrix together with its temporal dependence. A
//! [`GeneratorState`] turns a spec and a seed into the sequence `X_1, X_2, ...`.

mod state;
mod support;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fragmentation::Graph;
use crate::matrix::{StochasticMatrix, ZERO_TOL};

pub use state::GeneratorState;
pub use support::{SupportDescriptor, WeightedSkeleton};

/// Tolerance on mixture probabilities summing to one.
pub const PROB_TOL: f64 = 1e-12;
/// Tolerance for the Dirichlet balance condition.
pub const BALANCE_TOL: f64 = 1e-9;

/// Temporal dependence of a finite mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dependence {
    Iid,
    /// Markov chain over the support indices; `transition[k]` is the law of
    /// the next atom given the current atom `k`. The mixture `probs` must be
    /// stationary for it.
    MarkovRow {
        transition: Vec<Vec<f64>>,
    },
}

/// Declarative description of a network generating process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum GeneratorSpec {
    /// The standard DeGroot model: `X_t = T` for all `t`.
    Fixed { matrix: StochasticMatrix },
    FiniteMixture {
        matrices: Vec<StochasticMatrix>,
        probs: Vec<f64>,
        dependence: Dependence,
    },
    /// Independent rows, row `i` ~ Dirichlet(alpha_i). Zero entries of
    /// `alpha` are structural zeros of every draw.
    DirichletRows { alpha: Vec<Vec<f64>> },
    /// Rows `i` ~ Dirichlet(eps * s_i * T_i.) around a strictly positive `T`
    /// with influence vector `s`.
    PerturbedFixed {
        t: StochasticMatrix,
        s: Vec<f64>,
        epsilon: f64,
    },
    /// Agent `i` keeps a Uniform(0,1) self weight and gives the rest to
    /// agent `i + 1 mod n`.
    RingUniformSelf { n: usize },
    /// Agent 1 draws `x ~ U(0,1)` and weighs `(x, 1 - x)` on agents 1, 2; if
    /// `x >= 1/2` everyone else is self-absorbed, otherwise each other agent
    /// copies its cyclic successor.
    LeaderFollower { n: usize },
    /// Two agents who meet with probability `p_meet` and then put weight
    /// `epsilon` on each other.
    Encounter2x2 { epsilon: f64, p_meet: f64 },
    /// `[[a, 1-a], [b, 1-b]]` with `a = x` w.p. `p_a` (else 0) and
    /// `b = x` w.p. `p_b` (else 0), independently.
    Bernoulli2x2 { x: f64, p_a: f64, p_b: f64 },
    /// Identity with probability `a`, swap otherwise.
    TwoPointSwap { a: f64 },
    /// Two islands of `g` agents. Each draw links every island by a uniformly
    /// random spanning tree and adds one uniformly placed cross link with
    /// probability `p_d`. `p_s` is the nominal same-island link propensity
    /// and only enters the homophily measures.
    Islands { g: usize, p_s: f64, p_d: f64 },
    /// Random undirected graphs mapped to `D^{-1} A`.
    UndirectedDegree { graphs: Vec<Graph>, probs: Vec<f64> },
    /// Random undirected graphs mapped to symmetric lazy Metropolis weights
    /// `1/2 I + 1/2 W`, with `W_ij = 1/max(d_i, d_j)` on edges.
    MetropolisGraphs { graphs: Vec<Graph>, probs: Vec<f64> },
    /// `X_t = (1 - xi) X_{t-1} + xi Xi_t` with `X_0 = t0` and `Xi_t` iid from
    /// `source`.
    Ar1Mixture {
        xi: f64,
        t0: StochasticMatrix,
        source: Box<GeneratorSpec>,
    },
}

fn check_prob(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidProbability { name, value })
    }
}

fn check_distribution(name: &'static str, probs: &[f64]) -> Result<()> {
    for &p in probs {
        check_prob(name, p)?;
    }
    let sum: f64 = probs.iter().sum();
    if probs.is_empty() || (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidProbability { name, value: sum });
    }
    Ok(())
}

impl GeneratorSpec {
    pub fn n(&self) -> usize {
        use GeneratorSpec::*;
        match self {
            Fixed { matrix } => matrix.n(),
            FiniteMixture { matrices, .. } => matrices.first().map_or(0, |m| m.n()),
            DirichletRows { alpha } => alpha.len(),
            PerturbedFixed { t, .. } => t.n(),
            RingUniformSelf { n } | LeaderFollower { n } => *n,
            Encounter2x2 { .. } | Bernoulli2x2 { .. } | TwoPointSwap { .. } => 2,
            Islands { g, .. } => 2 * g,
            UndirectedDegree { graphs, .. } | MetropolisGraphs { graphs, .. } => {
                graphs.first().map_or(0, |g| g.n())
            }
            Ar1Mixture { t0, .. } => t0.n(),
        }
    }

    /// True when the matrices are drawn independently over time.
    pub fn is_iid(&self) -> bool {
        match self {
            GeneratorSpec::FiniteMixture { dependence, .. } => {
                matches!(dependence, Dependence::Iid)
            }
            GeneratorSpec::Ar1Mixture { xi, source, .. } => {
                (*xi == 0.0) || (*xi == 1.0 && source.is_iid())
            }
            _ => true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        use GeneratorSpec::*;
        match self {
            Fixed { .. } => {}
            FiniteMixture {
                matrices,
                probs,
                dependence,
            } => {
                if matrices.is_empty() || matrices.len() != probs.len() {
                    return Err(Error::InvalidSpec(
                        "mixture needs one probability per matrix".into(),
                    ));
                }
                let n = matrices[0].n();
                if let Some(m) = matrices.iter().find(|m| m.n() != n) {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: m.n(),
                    });
                }
                check_distribution("probs", probs)?;
                if let Dependence::MarkovRow { transition } = dependence {
                    if transition.len() != probs.len() {
                        return Err(Error::InvalidSpec(
                            "transition must be square over the support".into(),
                        ));
                    }
                    for row in transition {
                        if row.len() != probs.len() {
                            return Err(Error::InvalidSpec(
                                "transition must be square over the support".into(),
                            ));
                        }
                        check_distribution("transition", row)?;
                    }
                    for j in 0..probs.len() {
                        let flow: f64 = (0..probs.len()).map(|k| probs[k] * transition[k][j]).sum();
                        if (flow - probs[j]).abs() > 1e-9 {
                            return Err(Error::InvalidSpec(
                                "mixture probs are not stationary for the transition".into(),
                            ));
                        }
                    }
                }
            }
            DirichletRows { alpha } => validate_alpha(alpha)?,
            PerturbedFixed { t, s, epsilon } => {
                if !t.is_strictly_positive(ZERO_TOL) {
                    return Err(Error::NotStrictlyPositive);
                }
                if s.len() != t.n() {
                    return Err(Error::DimensionMismatch {
                        expected: t.n(),
                        found: s.len(),
                    });
                }
                if !(*epsilon > 0.0) || !epsilon.is_finite() {
                    return Err(Error::InvalidSpec("epsilon must be positive".into()));
                }
            }
            RingUniformSelf { n } | LeaderFollower { n } => {
                if *n < 2 {
                    return Err(Error::InvalidSpec("need at least two agents".into()));
                }
            }
            Encounter2x2 { epsilon, p_meet } => {
                if !(*epsilon > 0.0 && *epsilon < 1.0) {
                    return Err(Error::InvalidSpec("epsilon must lie in (0, 1)".into()));
                }
                check_prob("p_meet", *p_meet)?;
            }
            Bernoulli2x2 { x, p_a, p_b } => {
                if !(*x > 0.0 && *x <= 1.0) {
                    return Err(Error::InvalidSpec("x must lie in (0, 1]".into()));
                }
                check_prob("p_a", *p_a)?;
                check_prob("p_b", *p_b)?;
            }
            TwoPointSwap { a } => {
                if !(*a > 0.0 && *a < 1.0) {
                    return Err(Error::InvalidSpec("a must lie in (0, 1)".into()));
                }
            }
            Islands { g, p_s, p_d } => {
                if *g < 2 {
                    return Err(Error::InvalidSpec("islands need g >= 2".into()));
                }
                check_prob("p_s", *p_s)?;
                check_prob("p_d", *p_d)?;
            }
            UndirectedDegree { graphs, probs } => {
                validate_graph_mixture(graphs, probs)?;
                let degrees = graphs[0].degrees();
                for g in graphs {
                    if !g.is_connected() {
                        return Err(Error::InvalidSpec(
                            "degree model graphs must be connected".into(),
                        ));
                    }
                    if g.degrees() != degrees {
                        return Err(Error::InvalidSpec(
                            "degree model graphs must share one degree sequence".into(),
                        ));
                    }
                }
            }
            MetropolisGraphs { graphs, probs } => validate_graph_mixture(graphs, probs)?,
            Ar1Mixture { xi, t0, source } => {
                check_prob("xi", *xi)?;
                source.validate()?;
                if source.n() != t0.n() {
                    return Err(Error::DimensionMismatch {
                        expected: t0.n(),
                        found: source.n(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Dirichlet parameter matrix for the row-independent Dirichlet models.
    pub fn dirichlet_alpha(&self) -> Option<Vec<Vec<f64>>> {
        match self {
            GeneratorSpec::DirichletRows { alpha } => Some(alpha.clone()),
            GeneratorSpec::RingUniformSelf { n } => Some(ring_alpha(*n)),
            GeneratorSpec::PerturbedFixed { t, s, epsilon } => Some(
                t.rows()
                    .zip(s)
                    .map(|(row, si)| row.iter().map(|tij| epsilon * si * tij).collect())
                    .collect(),
            ),
            _ => None,
        }
    }

    /// Whether the Dirichlet parameters satisfy the balance condition (row
    /// sums equal column sums). `None` for non-Dirichlet models.
    pub fn balanced(&self) -> Option<bool> {
        self.dirichlet_alpha()
            .map(|a| dirichlet_balance(&a).is_ok())
    }

    /// Islands homophily flag `p_s > p_d`.
    pub fn homophily(&self) -> Option<bool> {
        match self {
            GeneratorSpec::Islands { p_s, p_d, .. } => Some(p_s > p_d),
            _ => None,
        }
    }
}

fn validate_alpha(alpha: &[Vec<f64>]) -> Result<()> {
    let n = alpha.len();
    if n == 0 {
        return Err(Error::InvalidSpec("empty alpha".into()));
    }
    for row in alpha {
        if row.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: row.len(),
            });
        }
        if row.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return Err(Error::InvalidSpec(
                "alphas must be finite and nonnegative".into(),
            ));
        }
        if !row.iter().any(|&a| a > 0.0) {
            return Err(Error::InvalidSpec(
                "every row needs a positive alpha".into(),
            ));
        }
    }
    Ok(())
}

fn validate_graph_mixture(graphs: &[Graph], probs: &[f64]) -> Result<()> {
    if graphs.is_empty() || graphs.len() != probs.len() {
        return Err(Error::InvalidSpec("need one probability per graph".into()));
    }
    let n = graphs[0].n();
    if let Some(g) = graphs.iter().find(|g| g.n() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: g.n(),
        });
    }
    check_distribution("probs", probs)
}

/// Checks `sum_j alpha_ij = sum_j alpha_ji` and returns the common sums, the
/// Dirichlet parameter of the limiting influence vector.
pub fn dirichlet_balance(alpha: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = alpha.len();
    let mut phi = Vec::with_capacity(n);
    for i in 0..n {
        let row_sum: f64 = alpha[i].iter().sum();
        let col_sum: f64 = alpha.iter().map(|r| r[i]).sum();
        if (row_sum - col_sum).abs() > BALANCE_TOL {
            return Err(Error::BalanceViolation {
                agent: i,
                row_sum,
                col_sum,
            });
        }
        phi.push(row_sum);
    }
    Ok(phi)
}

fn ring_alpha(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            let mut row = vec![0.0; n];
            row[i] += 1.0;
            row[(i + 1) % n] += 1.0;
            row
        })
        .collect()
}

pub fn ring_uniform_self(n: usize) -> Result<GeneratorSpec> {
    let spec = GeneratorSpec::RingUniformSelf { n };
    spec.validate()?;
    Ok(spec)
}

pub fn leader_follower(n: usize) -> Result<GeneratorSpec> {
    let spec = GeneratorSpec::LeaderFollower { n };
    spec.validate()?;
    Ok(spec)
}

/// Influence vector of a fixed network: the left unit eigenvector `s T = s`.
pub fn influence_vector(t: &StochasticMatrix) -> Result<Vec<f64>> {
    let n = t.n();
    let mut s = vec![1.0 / n as f64; n];
    for _ in 0..1_000_000 {
        let next = t.left_apply(&s)?;
        let total: f64 = next.iter().sum();
        let next: Vec<f64> = next.iter().map(|x| x / total).collect();
        let delta = next
            .iter()
            .zip(&s)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        s = next;
        if delta < 1e-15 {
            return Ok(s);
        }
    }
    Err(Error::EigenvectorFailure)
}

/// Dirichlet perturbation of a strictly positive network `t`: row `i` is
/// Dirichlet(eps * s_i * t_i.), so the mean network is `t` and the influence
/// vector is Dirichlet(eps * s).
pub fn perturbed_fixed(t: StochasticMatrix, epsilon: f64) -> Result<GeneratorSpec> {
    if !t.is_strictly_positive(ZERO_TOL) {
        return Err(Error::NotStrictlyPositive);
    }
    let s = influence_vector(&t)?;
    let spec = GeneratorSpec::PerturbedFixed { t, s, epsilon };
    spec.validate()?;
    Ok(spec)
}

pub fn islands(g: usize, p_s: f64, p_d: f64) -> Result<GeneratorSpec> {
    let spec = GeneratorSpec::Islands { g, p_s, p_d };
    spec.validate()?;
    Ok(spec)
}

/// Two agents who meet with probability `p_meet` and then weigh each other by
/// `epsilon`.
pub fn encounter_2x2(epsilon: f64, p_meet: f64) -> Result<GeneratorSpec> {
    let spec = GeneratorSpec::Encounter2x2 { epsilon, p_meet };
    spec.validate()?;
    Ok(spec)
}

pub fn encounter_matrix(epsilon: f64) -> StochasticMatrix {
    StochasticMatrix::from_flat(2, vec![1.0 - epsilon, epsilon, epsilon, 1.0 - epsilon])
}

/// Correlated encounters: a two-state Markov chain over {apart, met} where
/// the agents stay apart with probability `stay_apart` and meet again right
/// after meeting with probability `stay_met`.
pub fn encounter_markov(epsilon: f64, stay_apart: f64, stay_met: f64) -> Result<GeneratorSpec> {
    check_prob("stay_apart", stay_apart)?;
    check_prob("stay_met", stay_met)?;
    let leave_apart = 1.0 - stay_apart;
    let leave_met = 1.0 - stay_met;
    if leave_apart + leave_met == 0.0 {
        return Err(Error::InvalidSpec("chain must move between states".into()));
    }
    let p_met = leave_apart / (leave_apart + leave_met);
    let spec = GeneratorSpec::FiniteMixture {
        matrices: vec![StochasticMatrix::identity(2), encounter_matrix(epsilon)],
        probs: vec![1.0 - p_met, p_met],
        dependence: Dependence::MarkovRow {
            transition: vec![vec![stay_apart, leave_apart], vec![leave_met, stay_met]],
        },
    };
    spec.validate()?;
    Ok(spec)
}

/// `(1/n) 11'` with probability `zeta`, identity otherwise.
pub fn averaging_or_identity(n: usize, zeta: f64) -> Result<GeneratorSpec> {
    check_prob("zeta", zeta)?;
    let spec = GeneratorSpec::FiniteMixture {
        matrices: vec![
            StochasticMatrix::averaging(n),
            StochasticMatrix::identity(n),
        ],
        probs: vec![zeta, 1.0 - zeta],
        dependence: Dependence::Iid,
    };
    spec.validate()?;
    Ok(spec)
}

/// Independent row weights for two agents, each row ~ Beta(a, a) over
/// (self, other) with the first agent's self weight in column 0.
pub fn symmetric_beta_2x2(a: f64) -> Result<GeneratorSpec> {
    let spec = GeneratorSpec::DirichletRows {
        alpha: vec![vec![a, a], vec![a, a]],
    };
    spec.validate()?;
    Ok(spec)
}

/// The stubborn-agent matrix with agents 1, 2 copying agent 3 and agent 3
/// splitting `(kappa, 1 - kappa)` between them.
pub fn stubborn_h(kappa: f64) -> StochasticMatrix {
    StochasticMatrix::from_flat(
        3,
        vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, kappa, 1.0 - kappa, 0.0],
    )
}

/// Agents 1 and 2 agree on `(kappa, 1 - kappa)`, agent 3 is self-absorbed.
pub fn stubborn_q(kappa: f64) -> StochasticMatrix {
    StochasticMatrix::from_flat(
        3,
        vec![
            kappa,
            1.0 - kappa,
            0.0,
            kappa,
            1.0 - kappa,
            0.0,
            0.0,
            0.0,
            1.0,
        ],
    )
}

/// Agents 1 and 2 swap, agent 3 is self-absorbed.
pub fn stubborn_g() -> StochasticMatrix {
    StochasticMatrix::permutation(&[1, 0, 2]).expect("valid permutation")
}

/// Iid mixture putting mass `r` on `h_kappa` and `1 - r` on the swap `g`.
pub fn stubborn_mixture(kappa: f64, r: f64) -> Result<GeneratorSpec> {
    check_prob("kappa", kappa)?;
    let spec = GeneratorSpec::FiniteMixture {
        matrices: vec![stubborn_h(kappa), stubborn_g()],
        probs: vec![r, 1.0 - r],
        dependence: Dependence::Iid,
    };
    spec.validate()?;
    Ok(spec)
}
