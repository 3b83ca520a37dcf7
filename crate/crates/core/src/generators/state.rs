use rand::{Rng as _, SeedableRng};
use rand_distr::{Distribution, Gamma};

use super::{Dependence, GeneratorSpec};
use crate::error::Result;
use crate::fragmentation::{random_spanning_tree, Graph};
use crate::matrix::StochasticMatrix;
use crate::seed::Rng;

/// One row of a Dirichlet-rows law: the active columns and their Gamma laws.
#[derive(Debug, Clone)]
struct DirichletRow {
    cols: Vec<usize>,
    gammas: Vec<Gamma<f64>>,
}

#[derive(Debug, Clone)]
enum Sampler {
    Fixed(StochasticMatrix),
    Mixture {
        atoms: Vec<StochasticMatrix>,
        cumulative: Vec<f64>,
        transition: Option<Vec<Vec<f64>>>,
    },
    Dirichlet(Vec<DirichletRow>),
    Ring(usize),
    LeaderFollower(usize),
    Bernoulli {
        x: f64,
        p_a: f64,
        p_b: f64,
    },
    Islands {
        g: usize,
        p_d: f64,
    },
    Ar1 {
        xi: f64,
        source: Box<Sampler>,
    },
}

/// A seeded stream of interaction matrices `X_1, X_2, ...`.
///
/// Advancing two states built from the same `(spec, seed)` yields identical
/// matrices. A state is single-owner; replicas each build their own.
#[derive(Debug, Clone)]
pub struct GeneratorState {
    spec: GeneratorSpec,
    sampler: Sampler,
    rng: Rng,
    last_matrix: Option<StochasticMatrix>,
    last_atom: Option<usize>,
    t: usize,
}

fn cumulative(probs: &[f64]) -> Vec<f64> {
    probs
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect()
}

fn pick(cumulative: &[f64], u: f64) -> usize {
    let total = *cumulative.last().expect("nonempty");
    let target = u * total;
    cumulative
        .iter()
        .position(|&c| target < c)
        .unwrap_or(cumulative.len() - 1)
}

pub(crate) fn degree_normalized(g: &Graph) -> StochasticMatrix {
    let n = g.n();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        let nbrs: Vec<usize> = g.neighbors(i).collect();
        if nbrs.is_empty() {
            data[i * n + i] = 1.0;
        } else {
            let w = 1.0 / nbrs.len() as f64;
            for j in nbrs {
                data[i * n + j] = w;
            }
        }
    }
    StochasticMatrix::from_flat(n, data)
}

pub(crate) fn lazy_metropolis(g: &Graph) -> StochasticMatrix {
    let n = g.n();
    let deg = g.degrees();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        let mut off = 0.0;
        for j in g.neighbors(i) {
            let w = 0.5 / deg[i].max(deg[j]) as f64;
            data[i * n + j] = w;
            off += w;
        }
        data[i * n + i] = 1.0 - off;
    }
    StochasticMatrix::from_flat(n, data)
}

fn dirichlet_rows(alpha: &[Vec<f64>]) -> Result<Sampler> {
    let rows = alpha
        .iter()
        .map(|row| {
            let mut cols = Vec::new();
            let mut gammas = Vec::new();
            for (j, &a) in row.iter().enumerate() {
                if a > 0.0 {
                    cols.push(j);
                    gammas.push(Gamma::new(a, 1.0).map_err(|e| {
                        crate::Error::InvalidSpec(format!("bad Dirichlet parameter {a}: {e}"))
                    })?);
                }
            }
            Ok(DirichletRow { cols, gammas })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Sampler::Dirichlet(rows))
}

impl Sampler {
    fn compile(spec: &GeneratorSpec) -> Result<Self> {
        use GeneratorSpec::*;
        Ok(match spec {
            Fixed { matrix } => Sampler::Fixed(matrix.clone()),
            FiniteMixture {
                matrices,
                probs,
                dependence,
            } => Sampler::Mixture {
                atoms: matrices.clone(),
                cumulative: cumulative(probs),
                transition: match dependence {
                    Dependence::Iid => None,
                    Dependence::MarkovRow { transition } => {
                        Some(transition.iter().map(|r| cumulative(r)).collect())
                    }
                },
            },
            DirichletRows { .. } | PerturbedFixed { .. } => {
                dirichlet_rows(&spec.dirichlet_alpha().expect("dirichlet model"))?
            }
            RingUniformSelf { n } => Sampler::Ring(*n),
            LeaderFollower { n } => Sampler::LeaderFollower(*n),
            Encounter2x2 { epsilon, p_meet } => Sampler::Mixture {
                atoms: vec![
                    StochasticMatrix::identity(2),
                    super::encounter_matrix(*epsilon),
                ],
                cumulative: cumulative(&[1.0 - p_meet, *p_meet]),
                transition: None,
            },
            Bernoulli2x2 { x, p_a, p_b } => Sampler::Bernoulli {
                x: *x,
                p_a: *p_a,
                p_b: *p_b,
            },
            TwoPointSwap { a } => Sampler::Mixture {
                atoms: vec![
                    StochasticMatrix::identity(2),
                    StochasticMatrix::permutation(&[1, 0]).expect("swap"),
                ],
                cumulative: cumulative(&[*a, 1.0 - a]),
                transition: None,
            },
            Islands { g, p_d, .. } => Sampler::Islands { g: *g, p_d: *p_d },
            UndirectedDegree { graphs, probs } => Sampler::Mixture {
                atoms: graphs.iter().map(degree_normalized).collect(),
                cumulative: cumulative(probs),
                transition: None,
            },
            MetropolisGraphs { graphs, probs } => Sampler::Mixture {
                atoms: graphs.iter().map(lazy_metropolis).collect(),
                cumulative: cumulative(probs),
                transition: None,
            },
            Ar1Mixture { xi, source, .. } => Sampler::Ar1 {
                xi: *xi,
                source: Box::new(Sampler::compile(source)?),
            },
        })
    }
}

/// Draws one matrix from an iid sampler (or the next Markov step when
/// `last_atom` is tracked).
fn draw(sampler: &Sampler, rng: &mut Rng, last_atom: &mut Option<usize>) -> StochasticMatrix {
    match sampler {
        Sampler::Fixed(m) => m.clone(),
        Sampler::Mixture {
            atoms,
            cumulative,
            transition,
        } => {
            let u: f64 = rng.random();
            let k = match (transition, *last_atom) {
                (Some(tr), Some(prev)) => pick(&tr[prev], u),
                _ => pick(cumulative, u),
            };
            if transition.is_some() {
                *last_atom = Some(k);
            }
            atoms[k].clone()
        }
        Sampler::Dirichlet(rows) => {
            let n = rows.len();
            let mut data = vec![0.0; n * n];
            for (i, row) in rows.iter().enumerate() {
                let out = &mut data[i * n..(i + 1) * n];
                loop {
                    let mut total = 0.0;
                    for (&j, gamma) in row.cols.iter().zip(&row.gammas) {
                        let v = gamma.sample(rng);
                        out[j] = v;
                        total += v;
                    }
                    // all draws can underflow for tiny shape parameters
                    if total > 0.0 && total.is_finite() {
                        out.iter_mut().for_each(|x| *x /= total);
                        break;
                    }
                }
            }
            StochasticMatrix::from_flat(n, data)
        }
        Sampler::Ring(n) => {
            let n = *n;
            let mut data = vec![0.0; n * n];
            for i in 0..n {
                let x: f64 = rng.random();
                data[i * n + i] += x;
                data[i * n + (i + 1) % n] += 1.0 - x;
            }
            StochasticMatrix::from_flat(n, data)
        }
        Sampler::LeaderFollower(n) => {
            let n = *n;
            let x: f64 = rng.random();
            let mut data = vec![0.0; n * n];
            data[0] = x;
            data[1] += 1.0 - x;
            for i in 1..n {
                let target = if x >= 0.5 { i } else { (i + 1) % n };
                data[i * n + target] = 1.0;
            }
            StochasticMatrix::from_flat(n, data)
        }
        Sampler::Bernoulli { x, p_a, p_b } => {
            let a = if rng.random::<f64>() < *p_a { *x } else { 0.0 };
            let b = if rng.random::<f64>() < *p_b { *x } else { 0.0 };
            StochasticMatrix::from_flat(2, vec![a, 1.0 - a, b, 1.0 - b])
        }
        Sampler::Islands { g, p_d } => {
            let g = *g;
            let mut graph = Graph::empty(2 * g);
            for offset in [0, g] {
                for (u, v) in random_spanning_tree(g, rng) {
                    graph.add_edge(offset + u, offset + v);
                }
            }
            if rng.random::<f64>() < *p_d {
                let u = rng.random_range(0..g);
                let v = g + rng.random_range(0..g);
                graph.add_edge(u, v);
            }
            degree_normalized(&graph)
        }
        Sampler::Ar1 { source, .. } => draw(source, rng, last_atom),
    }
}

impl GeneratorState {
    pub fn new(spec: &GeneratorSpec, seed: u64) -> Result<Self> {
        Self::with_rng(spec, Rng::seed_from_u64(seed))
    }

    pub fn with_rng(spec: &GeneratorSpec, rng: Rng) -> Result<Self> {
        spec.validate()?;
        let last_matrix = match spec {
            GeneratorSpec::Ar1Mixture { t0, .. } => Some(t0.clone()),
            _ => None,
        };
        Ok(GeneratorState {
            sampler: Sampler::compile(spec)?,
            spec: spec.clone(),
            rng,
            last_matrix,
            last_atom: None,
            t: 0,
        })
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.spec.n()
    }

    /// Number of matrices drawn so far.
    pub fn t(&self) -> usize {
        self.t
    }

    /// Draws `X_{t+1}` and advances the stream.
    pub fn sample_next(&mut self) -> StochasticMatrix {
        self.t += 1;
        match &self.sampler {
            Sampler::Ar1 { xi, source } => {
                let prev = self.last_matrix.take().expect("ar1 keeps its last matrix");
                let next = if *xi == 0.0 {
                    prev
                } else {
                    let fresh = draw(source, &mut self.rng, &mut self.last_atom);
                    if *xi == 1.0 {
                        fresh
                    } else {
                        prev.mix(&fresh, *xi).expect("dimensions validated")
                    }
                };
                self.last_matrix = Some(next.clone());
                next
            }
            sampler => draw(sampler, &mut self.rng, &mut self.last_atom),
        }
    }
}

impl Iterator for GeneratorState {
    type Item = StochasticMatrix;

    fn next(&mut self) -> Option<StochasticMatrix> {
        Some(self.sample_next())
    }
}
