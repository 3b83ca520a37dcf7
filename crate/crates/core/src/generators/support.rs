use serde::{Deserialize, Serialize};

use super::state::{degree_normalized, lazy_metropolis};
use super::{encounter_matrix, GeneratorSpec};
use crate::error::{Error, Result};
use crate::fragmentation::{islands_distribution, labeled_trees};
use crate::matrix::{SkeletonMask, StochasticMatrix, ZERO_TOL};

/// Largest island size for which the exact islands mean is enumerated.
const ISLANDS_MEAN_MAX_G: usize = 7;
/// Largest number of enumerated atoms for a finite support description.
const MAX_SUPPORT_ATOMS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedSkeleton {
    pub mask: SkeletonMask,
    pub prob: f64,
}

/// The support of the law of one interaction matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SupportDescriptor {
    /// Every atom listed once with its probability.
    Finite { atoms: Vec<(StochasticMatrix, f64)> },
    /// Continuous weights over finitely many zero patterns.
    Continuous {
        skeletons: Vec<WeightedSkeleton>,
        strictly_positive_prob: f64,
    },
}

impl SupportDescriptor {
    fn finite(candidates: Vec<(StochasticMatrix, f64)>) -> Self {
        let mut atoms: Vec<(StochasticMatrix, f64)> = Vec::new();
        for (m, p) in candidates {
            if p <= 0.0 {
                continue;
            }
            match atoms.iter_mut().find(|(a, _)| *a == m) {
                Some(slot) => slot.1 += p,
                None => atoms.push((m, p)),
            }
        }
        SupportDescriptor::Finite { atoms }
    }

    fn continuous(skeletons: Vec<WeightedSkeleton>) -> Self {
        let strictly_positive_prob = skeletons
            .iter()
            .filter(|s| s.mask.is_all_true())
            .map(|s| s.prob)
            .sum();
        SupportDescriptor::Continuous {
            skeletons,
            strictly_positive_prob,
        }
    }

    /// Distinct zero patterns that occur with positive probability.
    pub fn skeletons(&self) -> Vec<SkeletonMask> {
        let mut out: Vec<SkeletonMask> = Vec::new();
        let masks: Vec<SkeletonMask> = match self {
            SupportDescriptor::Finite { atoms } => {
                atoms.iter().map(|(m, _)| m.skeleton(ZERO_TOL)).collect()
            }
            SupportDescriptor::Continuous { skeletons, .. } => {
                skeletons.iter().map(|s| s.mask.clone()).collect()
            }
        };
        for m in masks {
            if !out.contains(&m) {
                out.push(m);
            }
        }
        out
    }

    /// Probability that a single draw is strictly positive.
    pub fn strictly_positive_prob(&self) -> f64 {
        match self {
            SupportDescriptor::Finite { atoms } => atoms
                .iter()
                .filter(|(m, _)| m.is_strictly_positive(ZERO_TOL))
                .map(|(_, p)| p)
                .sum(),
            SupportDescriptor::Continuous {
                strictly_positive_prob,
                ..
            } => *strictly_positive_prob,
        }
    }

    pub fn atoms(&self) -> Option<&[(StochasticMatrix, f64)]> {
        match self {
            SupportDescriptor::Finite { atoms } => Some(atoms),
            SupportDescriptor::Continuous { .. } => None,
        }
    }
}

fn weighted_sum(
    n: usize,
    parts: impl IntoIterator<Item = (StochasticMatrix, f64)>,
) -> StochasticMatrix {
    let mut data = vec![0.0; n * n];
    for (m, p) in parts {
        data.iter_mut()
            .zip(m.as_slice())
            .for_each(|(d, x)| *d += p * x);
    }
    StochasticMatrix::from_flat(n, data)
}

fn leader_follower_masks(n: usize) -> [SkeletonMask; 2] {
    let mask = |follow: bool| {
        let rows: Vec<Vec<bool>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == 0 {
                            j < 2
                        } else if follow {
                            j == (i + 1) % n
                        } else {
                            j == i
                        }
                    })
                    .collect()
            })
            .collect();
        SkeletonMask::from_rows(&rows).expect("square")
    };
    [mask(false), mask(true)]
}

impl GeneratorSpec {
    /// Exact expectation `E[X_t]` of one draw.
    ///
    /// For `Ar1Mixture` with `xi > 0` the process is only asymptotically
    /// stationary; the long-run mean `E[Xi]` is returned.
    pub fn mean_matrix(&self) -> Result<StochasticMatrix> {
        use GeneratorSpec::*;
        self.validate()?;
        let n = self.n();
        Ok(match self {
            Fixed { matrix } => matrix.clone(),
            FiniteMixture {
                matrices, probs, ..
            } => weighted_sum(n, matrices.iter().cloned().zip(probs.iter().copied())),
            PerturbedFixed { t, .. } => t.clone(),
            DirichletRows { .. } | RingUniformSelf { .. } => {
                let alpha = self.dirichlet_alpha().expect("dirichlet model");
                let data = alpha
                    .iter()
                    .flat_map(|row| {
                        let total: f64 = row.iter().sum();
                        row.iter().map(move |a| a / total)
                    })
                    .collect();
                StochasticMatrix::from_flat(n, data)
            }
            LeaderFollower { n } => {
                let n = *n;
                let mut data = vec![0.0; n * n];
                data[0] = 0.5;
                data[1] += 0.5;
                for i in 1..n {
                    data[i * n + i] += 0.5;
                    data[i * n + (i + 1) % n] += 0.5;
                }
                StochasticMatrix::from_flat(n, data)
            }
            Encounter2x2 { epsilon, p_meet } => {
                StochasticMatrix::identity(2).mix(&encounter_matrix(*epsilon), *p_meet)?
            }
            Bernoulli2x2 { x, p_a, p_b } => {
                let a = x * p_a;
                let b = x * p_b;
                StochasticMatrix::from_flat(2, vec![a, 1.0 - a, b, 1.0 - b])
            }
            TwoPointSwap { a } => StochasticMatrix::from_flat(2, vec![*a, 1.0 - a, 1.0 - a, *a]),
            Islands { g, p_d, .. } => islands_mean(*g, *p_d)?,
            UndirectedDegree { graphs, probs } => weighted_sum(
                n,
                graphs
                    .iter()
                    .map(degree_normalized)
                    .zip(probs.iter().copied()),
            ),
            MetropolisGraphs { graphs, probs } => weighted_sum(
                n,
                graphs
                    .iter()
                    .map(lazy_metropolis)
                    .zip(probs.iter().copied()),
            ),
            Ar1Mixture { xi, t0, source } => {
                if *xi == 0.0 {
                    t0.clone()
                } else {
                    source.mean_matrix()?
                }
            }
        })
    }

    /// The support of the law of `X_1`.
    pub fn support(&self) -> Result<SupportDescriptor> {
        use GeneratorSpec::*;
        self.validate()?;
        let n = self.n();
        Ok(match self {
            Fixed { matrix } => SupportDescriptor::finite(vec![(matrix.clone(), 1.0)]),
            FiniteMixture {
                matrices, probs, ..
            } => SupportDescriptor::finite(
                matrices
                    .iter()
                    .cloned()
                    .zip(probs.iter().copied())
                    .collect(),
            ),
            DirichletRows { .. } | RingUniformSelf { .. } | PerturbedFixed { .. } => {
                let alpha = self.dirichlet_alpha().expect("dirichlet model");
                let rows: Vec<Vec<bool>> = alpha
                    .iter()
                    .map(|r| r.iter().map(|&a| a > 0.0).collect())
                    .collect();
                SupportDescriptor::continuous(vec![WeightedSkeleton {
                    mask: SkeletonMask::from_rows(&rows)?,
                    prob: 1.0,
                }])
            }
            LeaderFollower { n } => {
                let [stay, follow] = leader_follower_masks(*n);
                SupportDescriptor::continuous(vec![
                    WeightedSkeleton {
                        mask: stay,
                        prob: 0.5,
                    },
                    WeightedSkeleton {
                        mask: follow,
                        prob: 0.5,
                    },
                ])
            }
            Encounter2x2 { epsilon, p_meet } => SupportDescriptor::finite(vec![
                (StochasticMatrix::identity(2), 1.0 - p_meet),
                (encounter_matrix(*epsilon), *p_meet),
            ]),
            Bernoulli2x2 { x, p_a, p_b } => {
                let v =
                    |s: f64, r: f64| StochasticMatrix::from_flat(2, vec![s, 1.0 - s, r, 1.0 - r]);
                SupportDescriptor::finite(vec![
                    (v(0.0, 0.0), (1.0 - p_a) * (1.0 - p_b)),
                    (v(0.0, *x), (1.0 - p_a) * p_b),
                    (v(*x, 0.0), p_a * (1.0 - p_b)),
                    (v(*x, *x), p_a * p_b),
                ])
            }
            TwoPointSwap { a } => SupportDescriptor::finite(vec![
                (StochasticMatrix::identity(2), *a),
                (StochasticMatrix::permutation(&[1, 0])?, 1.0 - a),
            ]),
            Islands { g, p_s, p_d } => {
                let trees = labeled_trees(*g).len();
                let count = trees * trees * (1 + g * g);
                if count > MAX_SUPPORT_ATOMS {
                    return Err(Error::Unsupported(format!(
                        "islands support with g = {g} has {count} atoms"
                    )));
                }
                let dist = islands_distribution(*g, *p_s, *p_d)?;
                SupportDescriptor::finite(
                    dist.atoms()
                        .iter()
                        .map(|(graph, p)| (degree_normalized(graph), *p))
                        .collect(),
                )
            }
            UndirectedDegree { graphs, probs } => SupportDescriptor::finite(
                graphs
                    .iter()
                    .map(degree_normalized)
                    .zip(probs.iter().copied())
                    .collect(),
            ),
            MetropolisGraphs { graphs, probs } => SupportDescriptor::finite(
                graphs
                    .iter()
                    .map(lazy_metropolis)
                    .zip(probs.iter().copied())
                    .collect(),
            ),
            Ar1Mixture { xi, t0, source } => {
                if *xi == 0.0 {
                    SupportDescriptor::finite(vec![(t0.clone(), 1.0)])
                } else {
                    let inner = source.support()?;
                    if *xi == 1.0 {
                        inner
                    } else {
                        // X_1 = (1 - xi) T0 + xi Xi_1 has the union pattern.
                        let base = t0.skeleton(ZERO_TOL);
                        let skeletons = match &inner {
                            SupportDescriptor::Finite { atoms } => atoms
                                .iter()
                                .map(|(m, p)| WeightedSkeleton {
                                    mask: base.union(&m.skeleton(ZERO_TOL)),
                                    prob: *p,
                                })
                                .collect(),
                            SupportDescriptor::Continuous { skeletons, .. } => skeletons
                                .iter()
                                .map(|s| WeightedSkeleton {
                                    mask: base.union(&s.mask),
                                    prob: s.prob,
                                })
                                .collect(),
                        };
                        SupportDescriptor::continuous(skeletons)
                    }
                }
            }
        })
        .inspect(|s| debug_assert!(s.skeletons().iter().all(|m| m.n() == n)))
    }

    /// True when every support atom (or pattern) is fixed over time, i.e.
    /// the support is a finite list of matrices.
    pub fn has_finite_support(&self) -> bool {
        matches!(self.support(), Ok(SupportDescriptor::Finite { .. }))
    }
}

/// Exact islands mean, enumerating spanning trees of each island and the
/// position of the optional cross link.
fn islands_mean(g: usize, p_d: f64) -> Result<StochasticMatrix> {
    if g > ISLANDS_MEAN_MAX_G {
        return Err(Error::Unsupported(format!(
            "exact islands mean is enumerated only for g <= {ISLANDS_MEAN_MAX_G}"
        )));
    }
    let n = 2 * g;
    let trees = labeled_trees(g);
    let tree_p = 1.0 / trees.len() as f64;
    // Island A rows; island B follows by symmetry of the construction.
    let mut block = vec![0.0; g * n];
    for tree in &trees {
        let mut deg = vec![0usize; g];
        for &(u, v) in tree {
            deg[u] += 1;
            deg[v] += 1;
        }
        // no cross link
        for &(u, v) in tree {
            block[u * n + v] += tree_p * (1.0 - p_d) / deg[u] as f64;
            block[v * n + u] += tree_p * (1.0 - p_d) / deg[v] as f64;
        }
        // cross link from local agent `a` to remote agent `b`
        let cross_p = p_d / (g * g) as f64;
        for a in 0..g {
            for b in 0..g {
                for i in 0..g {
                    let d = deg[i] + usize::from(i == a);
                    let w = tree_p * cross_p / d as f64;
                    for &(u, v) in tree {
                        if u == i {
                            block[i * n + v] += w;
                        } else if v == i {
                            block[i * n + u] += w;
                        }
                    }
                    if i == a {
                        block[i * n + g + b] += w;
                    }
                }
            }
        }
    }
    let mut data = vec![0.0; n * n];
    for i in 0..g {
        for j in 0..n {
            let v = block[i * n + j];
            data[i * n + j] = v;
            // mirror: island B agent g+i sees island B as local, A as remote
            let mirrored_j = if j < g { j + g } else { j - g };
            data[(g + i) * n + mirrored_j] = v;
        }
    }
    Ok(StochasticMatrix::from_flat(n, data))
}
