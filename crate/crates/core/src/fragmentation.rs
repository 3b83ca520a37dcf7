//! Realized-graph analysis of dynamic networks: accumulation graphs,
//! disconnected collections, the fragmentation measure `p_max` and the
//! large-deviation decay rate of the consensus gap.

use std::collections::HashSet;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::{GeneratorSpec, GeneratorState, SupportDescriptor};
use crate::matrix::{StochasticMatrix, ZERO_TOL};
use crate::seed::{run_replicas, Rng};

/// Largest agent count for which `p_max` enumerates vertex cuts.
pub const MAX_CUT_AGENTS: usize = 20;
/// Largest collection size for the direct subset enumeration.
pub const MAX_COLLECTION_ATOMS: usize = 20;
/// Grid points with fewer exceedances are dropped from the rate fit.
pub const MIN_EXCEEDANCES: usize = 20;
/// Largest enumerated graph distribution.
const MAX_DISTRIBUTION_ATOMS: usize = 1 << 20;

/// Simple undirected graph. Self-weights live in matrices, never here.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<u8>>", into = "Vec<Vec<u8>>")]
pub struct Graph {
    n: usize,
    adj: Vec<bool>,
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Graph {
            n,
            adj: vec![false; n * n],
        }
    }

    pub fn complete(n: usize) -> Self {
        let mut g = Graph::empty(n);
        for u in 0..n {
            for v in (u + 1)..n {
                g.add_edge(u, v);
            }
        }
        g
    }

    pub fn cycle(n: usize) -> Self {
        let mut g = Graph::empty(n);
        for u in 0..n {
            g.add_edge(u, (u + 1) % n);
        }
        g
    }

    pub fn path(n: usize) -> Self {
        let mut g = Graph::empty(n);
        for u in 1..n {
            g.add_edge(u - 1, u);
        }
        g
    }

    /// The `d`-dimensional hypercube on `2^d` vertices.
    pub fn hypercube(d: u32) -> Self {
        let n = 1usize << d;
        let mut g = Graph::empty(n);
        for u in 0..n {
            for b in 0..d {
                let v = u ^ (1 << b);
                if u < v {
                    g.add_edge(u, v);
                }
            }
        }
        g
    }

    /// Circulant graph: `u ~ u + o (mod n)` for every offset `o`.
    pub fn circulant(n: usize, offsets: &[usize]) -> Self {
        let mut g = Graph::empty(n);
        for u in 0..n {
            for &o in offsets {
                let v = (u + o) % n;
                if v != u {
                    g.add_edge(u, v);
                }
            }
        }
        g
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Graph::empty(n);
        for &(u, v) in edges {
            if u >= n || v >= n || u == v {
                return Err(Error::InvalidSpec(format!("bad edge ({u}, {v})")));
            }
            g.add_edge(u, v);
        }
        Ok(g)
    }

    /// Symmetric 0/1 adjacency with an empty diagonal.
    pub fn from_adjacency(rows: &[Vec<bool>]) -> Result<Self> {
        let n = rows.len();
        let mut g = Graph::empty(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            if row[i] {
                return Err(Error::InvalidSpec(format!("self-loop at {i}")));
            }
            for (j, &b) in row.iter().enumerate() {
                if b != rows[j][i] {
                    return Err(Error::InvalidSpec(format!("asymmetric at ({i}, {j})")));
                }
                g.adj[i * n + j] = b;
            }
        }
        Ok(g)
    }

    /// The realized graph of an interaction matrix: `i ~ j` iff either agent
    /// puts positive weight on the other.
    pub fn from_matrix(m: &StochasticMatrix, zero_tol: f64) -> Self {
        let n = m.n();
        let mut g = Graph::empty(n);
        for i in 0..n {
            for j in (i + 1)..n {
                if m.get(i, j) > zero_tol || m.get(j, i) > zero_tol {
                    g.add_edge(i, j);
                }
            }
        }
        g
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn add_edge(&mut self, u: usize, v: usize) {
        debug_assert_ne!(u, v);
        self.adj[u * self.n + v] = true;
        self.adj[v * self.n + u] = true;
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u * self.n + v]
    }

    pub fn neighbors(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&v| self.adj[u * self.n + v])
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n).map(|u| self.neighbors(u).count()).collect()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for u in 0..self.n {
            for v in (u + 1)..self.n {
                if self.has_edge(u, v) {
                    out.push((u, v));
                }
            }
        }
        out
    }

    pub fn union(&self, other: &Graph) -> Result<Graph> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        Ok(Graph {
            n: self.n,
            adj: self
                .adj
                .iter()
                .zip(&other.adj)
                .map(|(a, b)| *a || *b)
                .collect(),
        })
    }

    /// Breadth-first reachability from agent 0.
    pub fn is_connected(&self) -> bool {
        if self.n <= 1 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut queue = std::collections::VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for v in self.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n
    }

    fn neighbor_masks(&self) -> Vec<u64> {
        (0..self.n)
            .map(|u| self.neighbors(u).fold(0u64, |acc, v| acc | (1 << v)))
            .collect()
    }
}

impl TryFrom<Vec<Vec<u8>>> for Graph {
    type Error = Error;

    fn try_from(rows: Vec<Vec<u8>>) -> Result<Self> {
        let rows: Vec<Vec<bool>> = rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|&x| match x {
                        0 => Ok(false),
                        1 => Ok(true),
                        _ => Err(Error::InvalidSpec(format!(
                            "adjacency entry {x} is not 0/1"
                        ))),
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        Graph::from_adjacency(&rows)
    }
}

impl From<Graph> for Vec<Vec<u8>> {
    fn from(g: Graph) -> Self {
        g.adj
            .chunks_exact(g.n)
            .map(|r| r.iter().map(|&b| b as u8).collect())
            .collect()
    }
}

/// Edge union of a collection of graphs on the same agents.
pub fn accumulation_graph(graphs: &[Graph]) -> Result<Graph> {
    let first = graphs.first().ok_or(Error::DimensionMismatch {
        expected: 1,
        found: 0,
    })?;
    graphs[1..]
        .iter()
        .try_fold(first.clone(), |acc, g| acc.union(g))
}

/// Finite law of the realized graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGraphDistribution", into = "RawGraphDistribution")]
pub struct GraphDistribution {
    atoms: Vec<(Graph, f64)>,
}

#[derive(Serialize, Deserialize)]
struct RawGraphDistribution {
    graphs: Vec<Graph>,
    probs: Vec<f64>,
}

impl TryFrom<RawGraphDistribution> for GraphDistribution {
    type Error = Error;

    fn try_from(raw: RawGraphDistribution) -> Result<Self> {
        if raw.graphs.len() != raw.probs.len() {
            return Err(Error::InvalidSpec("need one probability per graph".into()));
        }
        GraphDistribution::new(raw.graphs.into_iter().zip(raw.probs).collect())
    }
}

impl From<GraphDistribution> for RawGraphDistribution {
    fn from(d: GraphDistribution) -> Self {
        let (graphs, probs) = d.atoms.into_iter().unzip();
        RawGraphDistribution { graphs, probs }
    }
}

impl GraphDistribution {
    pub fn new(atoms: Vec<(Graph, f64)>) -> Result<Self> {
        let n = atoms
            .first()
            .map(|(g, _)| g.n())
            .ok_or_else(|| Error::InvalidSpec("empty graph distribution".into()))?;
        let mut seen = HashSet::new();
        let mut total = 0.0;
        for (g, p) in &atoms {
            if g.n() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: g.n(),
                });
            }
            if !(*p > 0.0 && *p <= 1.0) {
                return Err(Error::InvalidProbability {
                    name: "graph probability",
                    value: *p,
                });
            }
            if !seen.insert(g) {
                return Err(Error::InvalidSpec("duplicate graph atom".into()));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidProbability {
                name: "total graph probability",
                value: total,
            });
        }
        Ok(GraphDistribution { atoms })
    }

    pub fn atoms(&self) -> &[(Graph, f64)] {
        &self.atoms
    }

    pub fn n(&self) -> usize {
        self.atoms[0].0.n()
    }

    /// Realized-graph law of a finite-support generator; atoms with the same
    /// graph are merged.
    pub fn from_spec(spec: &GeneratorSpec) -> Result<Self> {
        match spec.support()? {
            SupportDescriptor::Finite { atoms } => {
                let mut merged: Vec<(Graph, f64)> = Vec::new();
                for (m, p) in atoms {
                    let g = Graph::from_matrix(&m, ZERO_TOL);
                    match merged.iter_mut().find(|(h, _)| *h == g) {
                        Some(slot) => slot.1 += p,
                        None => merged.push((g, p)),
                    }
                }
                GraphDistribution::new(merged)
            }
            SupportDescriptor::Continuous { .. } => Err(Error::Unsupported(
                "realized-graph law needs a finite support".into(),
            )),
        }
    }
}

/// Lazy Metropolis model on four agents: the complete graph with
/// probability `1 - q`, two disjoint halves `{0, 1}`, `{2, 3}` with
/// probability `q`.
pub fn two_atom_metropolis(q: f64) -> Result<GeneratorSpec> {
    let halves = Graph::from_edges(4, &[(0, 1), (2, 3)])?;
    let spec = GeneratorSpec::MetropolisGraphs {
        graphs: vec![Graph::complete(4), halves],
        probs: vec![1.0 - q, q],
    };
    spec.validate()?;
    Ok(spec)
}

/// Every edge of `base` present independently with probability `p`.
pub fn iid_edge_distribution(base: &Graph, p: f64) -> Result<GraphDistribution> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidProbability {
            name: "p",
            value: p,
        });
    }
    let edges = base.edges();
    if edges.len() > MAX_COLLECTION_ATOMS {
        return Err(Error::SizeLimit(format!("{} edges", edges.len())));
    }
    let mut atoms = Vec::with_capacity(1 << edges.len());
    for subset in 0u32..(1 << edges.len()) {
        let k = subset.count_ones() as i32;
        let prob = p.powi(k) * (1.0 - p).powi(edges.len() as i32 - k);
        if prob == 0.0 {
            continue;
        }
        let mut g = Graph::empty(base.n());
        for (e, &(u, v)) in edges.iter().enumerate() {
            if subset & (1 << e) != 0 {
                g.add_edge(u, v);
            }
        }
        atoms.push((g, prob));
    }
    GraphDistribution::new(atoms)
}

fn decode_pruefer(g: usize, seq: &[usize]) -> Vec<(usize, usize)> {
    if g < 2 {
        return Vec::new();
    }
    let mut degree = vec![1usize; g];
    for &x in seq {
        degree[x] += 1;
    }
    let mut edges = Vec::with_capacity(g - 1);
    for &x in seq {
        let leaf = (0..g).find(|&v| degree[v] == 1).expect("a leaf exists");
        edges.push((leaf.min(x), leaf.max(x)));
        degree[leaf] -= 1;
        degree[x] -= 1;
    }
    let rest: Vec<usize> = (0..g).filter(|&v| degree[v] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges
}

/// Uniformly random labeled spanning tree on `g` vertices (random Pruefer code).
pub fn random_spanning_tree(g: usize, rng: &mut Rng) -> Vec<(usize, usize)> {
    let seq: Vec<usize> = (0..g.saturating_sub(2))
        .map(|_| rng.random_range(0..g))
        .collect();
    decode_pruefer(g, &seq)
}

/// All `g^(g-2)` labeled spanning trees on `g` vertices.
pub fn labeled_trees(g: usize) -> Vec<Vec<(usize, usize)>> {
    if g < 2 {
        return vec![Vec::new()];
    }
    let len = g - 2;
    let total = g.pow(len as u32);
    (0..total)
        .map(|mut code| {
            let seq: Vec<usize> = (0..len)
                .map(|_| {
                    let d = code % g;
                    code /= g;
                    d
                })
                .collect();
            decode_pruefer(g, &seq)
        })
        .collect()
}

/// Exact realized-graph law of the islands generator: a uniform spanning tree
/// per island and, with probability `p_d`, one cross link between uniformly
/// chosen endpoints.
pub fn islands_distribution(g: usize, p_s: f64, p_d: f64) -> Result<GraphDistribution> {
    crate::generators::islands(g, p_s, p_d)?;
    let trees = labeled_trees(g);
    let count = trees.len() * trees.len() * (1 + g * g);
    if count > MAX_DISTRIBUTION_ATOMS {
        return Err(Error::SizeLimit(format!("{count} islands atoms")));
    }
    let tree_p = 1.0 / (trees.len() * trees.len()) as f64;
    let mut atoms = Vec::with_capacity(count);
    for ta in &trees {
        for tb in &trees {
            let mut base = Graph::empty(2 * g);
            for &(u, v) in ta {
                base.add_edge(u, v);
            }
            for &(u, v) in tb {
                base.add_edge(g + u, g + v);
            }
            if p_d < 1.0 {
                atoms.push((base.clone(), tree_p * (1.0 - p_d)));
            }
            if p_d > 0.0 {
                let cross_p = tree_p * p_d / (g * g) as f64;
                for a in 0..g {
                    for b in 0..g {
                        let mut h = base.clone();
                        h.add_edge(a, g + b);
                        atoms.push((h, cross_p));
                    }
                }
            }
        }
    }
    GraphDistribution::new(atoms)
}

/// Most likely disconnected collection of realized graphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragmentationReport {
    pub p_max: f64,
    /// True when no collection of realized graphs has a disconnected union.
    pub pi_g_empty: bool,
    /// `|log p_max|`; infinite when `pi_g_empty`.
    #[serde(with = "crate::report::float_or_inf")]
    pub predicted_rate: f64,
    pub argmax_collection: Vec<Graph>,
}

/// `p_max`, the largest total probability of a collection of realized graphs
/// whose accumulation graph is disconnected.
///
/// A collection is disconnected iff some vertex cut `(S, S^c)` is crossed by
/// none of its graphs, and the largest such collection for a cut is the set
/// of all atoms avoiding it. Enumerating the `2^(n-1) - 1` cuts is therefore
/// exact and needs no enumeration of collections.
pub fn p_max(dist: &GraphDistribution) -> Result<FragmentationReport> {
    let n = dist.n();
    if n > MAX_CUT_AGENTS {
        return Err(Error::SizeLimit(format!(
            "{n} agents (limit {MAX_CUT_AGENTS})"
        )));
    }
    if n < 2 {
        return Ok(FragmentationReport {
            p_max: 0.0,
            pi_g_empty: true,
            predicted_rate: f64::INFINITY,
            argmax_collection: Vec::new(),
        });
    }
    let masks: Vec<Vec<u64>> = dist
        .atoms()
        .iter()
        .map(|(g, _)| g.neighbor_masks())
        .collect();
    let full: u64 = (1 << n) - 1;
    let mut best = 0.0f64;
    let mut best_cut = None;
    // agent n-1 always on the complement side: each cut counted once
    for cut in 1u64..(1 << (n - 1)) {
        let avoids =
            |nb: &Vec<u64>| (0..n).all(|u| cut & (1 << u) == 0 || nb[u] & (full & !cut) == 0);
        let total: f64 = masks
            .iter()
            .zip(dist.atoms())
            .filter(|(nb, _)| avoids(nb))
            .map(|(_, (_, p))| p)
            .sum();
        if total > best {
            best = total;
            best_cut = Some(cut);
        }
    }
    let Some(cut) = best_cut else {
        return Ok(FragmentationReport {
            p_max: 0.0,
            pi_g_empty: true,
            predicted_rate: f64::INFINITY,
            argmax_collection: Vec::new(),
        });
    };
    let argmax_collection = dist
        .atoms()
        .iter()
        .zip(&masks)
        .filter(|(_, nb)| (0..n).all(|u| cut & (1 << u) == 0 || nb[u] & (full & !cut) == 0))
        .map(|((g, _), _)| g.clone())
        .collect();
    // summation can overshoot 1 by an ulp or two
    let best = best.min(1.0);
    Ok(FragmentationReport {
        p_max: best,
        pi_g_empty: false,
        predicted_rate: -best.ln() + 0.0,
        argmax_collection,
    })
}

/// `p_max` by enumerating collections directly. With `prune`, subsets are
/// grown depth-first and abandoned as soon as their union is connected,
/// since adding graphs only adds edges.
pub fn p_max_by_collections(dist: &GraphDistribution, prune: bool) -> Result<f64> {
    let k = dist.atoms().len();
    if k > MAX_COLLECTION_ATOMS {
        return Err(Error::SizeLimit(format!(
            "{k} atoms (limit {MAX_COLLECTION_ATOMS})"
        )));
    }
    let atoms = dist.atoms();
    if !prune {
        let mut best = 0.0f64;
        for subset in 1u32..(1 << k) {
            let members: Vec<Graph> = (0..k)
                .filter(|i| subset & (1 << i) != 0)
                .map(|i| atoms[i].0.clone())
                .collect();
            if !accumulation_graph(&members)?.is_connected() {
                let p: f64 = (0..k)
                    .filter(|i| subset & (1 << i) != 0)
                    .map(|i| atoms[i].1)
                    .sum();
                best = best.max(p);
            }
        }
        return Ok(best);
    }

    fn grow(atoms: &[(Graph, f64)], next: usize, union: &Graph, p: f64, best: &mut f64) {
        for i in next..atoms.len() {
            let u = union.union(&atoms[i].0).expect("same size");
            if u.is_connected() {
                continue;
            }
            let q = p + atoms[i].1;
            *best = best.max(q);
            grow(atoms, i + 1, &u, q, best);
        }
    }
    let mut best = 0.0;
    grow(atoms, 0, &Graph::empty(dist.n()), 0.0, &mut best);
    Ok(best)
}

/// One grid point of the exceedance curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceedancePoint {
    pub t: usize,
    pub exceedances: usize,
    pub prob: f64,
    pub log_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayEstimate {
    /// Fitted `-d/dt log P(||X^(t) - 11'/n|| >= eps)`; infinite when the
    /// realized graphs are connected in every draw.
    #[serde(with = "crate::report::float_or_inf")]
    pub empirical_rate: f64,
    pub per_t_logprob: Vec<ExceedancePoint>,
}

fn check_rate_preconditions(spec: &GeneratorSpec, seed: u64) -> Result<()> {
    if !spec.is_iid() {
        return Err(Error::NotIid);
    }
    let ok =
        |m: &StochasticMatrix| m.is_symmetric(1e-12) && (0..m.n()).all(|i| m.get(i, i) > ZERO_TOL);
    let fine = match spec.support() {
        Ok(SupportDescriptor::Finite { atoms }) => atoms.iter().all(|(m, _)| ok(m)),
        _ => {
            let mut st = GeneratorState::new(spec, seed)?;
            (0..32).all(|_| ok(&st.sample_next()))
        }
    };
    if fine {
        Ok(())
    } else {
        Err(Error::PreconditionUnmet(
            "draws must be symmetric with a strictly positive diagonal".into(),
        ))
    }
}

/// Monte Carlo estimate of the decay rate of `P(||X^(t) - 11'/n|| >= eps)`.
///
/// For symmetric stochastic factors the deviation norm is nonincreasing in
/// `t`, so a replica is dropped once it falls below `eps`.
pub fn decay_rate_estimate(
    spec: &GeneratorSpec,
    epsilon: f64,
    t_grid: &[usize],
    replicas: usize,
    seed: u64,
) -> Result<DecayEstimate> {
    check_rate_preconditions(spec, seed)?;
    let mut grid: Vec<usize> = t_grid.iter().copied().filter(|&t| t >= 1).collect();
    grid.sort_unstable();
    grid.dedup();
    let t_end = *grid
        .last()
        .ok_or_else(|| Error::InvalidSpec("empty t grid".into()))?;
    let n = spec.n();

    // last grid index at which the replica still exceeded epsilon
    let last_exceed: Vec<Option<usize>> = run_replicas(seed, replicas, |_, s| {
        let mut state = GeneratorState::new(spec, s).expect("validated");
        let mut product = StochasticMatrix::identity(n);
        let mut scratch = Vec::new();
        let mut last = None;
        let mut gi = 0;
        for t in 1..=t_end {
            product.left_mul_assign(&state.sample_next(), &mut scratch);
            if t == grid[gi] {
                if deviation_at_least(&product, epsilon) {
                    last = Some(gi);
                } else {
                    break;
                }
                gi += 1;
            }
        }
        last
    });

    let mut counts = vec![0usize; grid.len()];
    for last in last_exceed.into_iter().flatten() {
        counts[..=last].iter_mut().for_each(|c| *c += 1);
    }
    let per_t_logprob: Vec<ExceedancePoint> = grid
        .iter()
        .zip(&counts)
        .map(|(&t, &c)| {
            let prob = c as f64 / replicas as f64;
            ExceedancePoint {
                t,
                exceedances: c,
                prob,
                log_prob: prob.ln(),
            }
        })
        .collect();

    let usable: Vec<(f64, f64)> = per_t_logprob
        .iter()
        .filter(|p| p.exceedances >= MIN_EXCEEDANCES)
        .map(|p| (p.t as f64, p.log_prob))
        .collect();
    if usable.len() < 2 {
        // a connected graph in every draw contracts below any eps in finite time
        let never_fragmented = GraphDistribution::from_spec(spec)
            .and_then(|d| p_max(&d))
            .map(|r| r.pi_g_empty)
            .unwrap_or(false);
        if never_fragmented && counts.last() == Some(&0) {
            return Ok(DecayEstimate {
                empirical_rate: f64::INFINITY,
                per_t_logprob,
            });
        }
        return Err(Error::InsufficientEvents {
            points: usable.len(),
        });
    }
    let slope = crate::stats::least_squares_slope(&usable);
    Ok(DecayEstimate {
        empirical_rate: -slope,
        per_t_logprob,
    })
}

/// `||m - 11'/n||_2 >= eps`, using cheap bounds before an SVD.
fn deviation_at_least(m: &StochasticMatrix, eps: f64) -> bool {
    let n = m.n();
    let c = 1.0 / n as f64;
    let mut frob = 0.0;
    let mut max_abs = 0.0f64;
    for &x in m.as_slice() {
        let d = x - c;
        frob += d * d;
        max_abs = max_abs.max(d.abs());
    }
    if frob.sqrt() < eps {
        return false;
    }
    if max_abs >= eps {
        return true;
    }
    m.deviation_from_average() >= eps
}
