//! Condition (C): does some partial product become strictly positive with
//! positive probability? Plus the finite-support tools around it.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::{Dependence, GeneratorSpec, GeneratorState, SupportDescriptor};
use crate::matrix::{SkeletonMask, StochasticMatrix, RANK_REL_TOL, ZERO_TOL};
use crate::seed::run_replicas;
use crate::stats;

/// Distinct semigroup elements kept before giving up.
pub const DEFAULT_SEMIGROUP_CAP: usize = 100_000;
/// Distinct skeleton sets kept by the boolean closure before giving up.
const SKELETON_LEVEL_CAP: usize = 50_000;
/// Largest agent count for the cyclicity search.
const CYCLICITY_MAX_AGENTS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Holds,
    Fails,
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    SupportAnalytic,
    SkeletonSemigroup,
    MonteCarloPositivity,
    ContractionIntegral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCReport {
    pub verdict: Verdict,
    pub method: Method,
    /// Strictly positive probability, product length, hit fraction or
    /// contraction estimate, depending on `method`.
    pub evidence: f64,
    pub horizon: usize,
}

enum Closure {
    Positive(usize),
    Never,
    Open,
}

/// Iterates `S_{k+1} = {s * m : s in masks, m in S_k}` over sets of reachable
/// patterns. The sequence of sets is deterministic, so a repeated set means
/// no new pattern will ever appear.
fn iid_closure(masks: &[SkeletonMask], horizon: usize) -> Closure {
    let mut level: BTreeSet<SkeletonMask> = masks.iter().cloned().collect();
    let mut history: Vec<BTreeSet<SkeletonMask>> = Vec::new();
    for k in 1..=horizon {
        if level.iter().any(SkeletonMask::is_all_true) {
            return Closure::Positive(k);
        }
        if history.contains(&level) {
            return Closure::Never;
        }
        let next: BTreeSet<SkeletonMask> = level
            .iter()
            .flat_map(|m| masks.iter().map(move |s| s.bool_product(m)))
            .collect();
        if next.len() > SKELETON_LEVEL_CAP {
            return Closure::Open;
        }
        history.push(std::mem::replace(&mut level, next));
    }
    Closure::Open
}

/// The same closure over (pattern, last atom) pairs for Markov-dependent
/// atom sequences.
fn markov_closure(atoms: &[SkeletonMask], transition: &[Vec<f64>], horizon: usize) -> Closure {
    let mut level: BTreeSet<(SkeletonMask, usize)> = atoms
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, m)| (m, i))
        .collect();
    let mut history: Vec<BTreeSet<(SkeletonMask, usize)>> = Vec::new();
    for k in 1..=horizon {
        if level.iter().any(|(m, _)| m.is_all_true()) {
            return Closure::Positive(k);
        }
        if history.contains(&level) {
            return Closure::Never;
        }
        let mut next = BTreeSet::new();
        for (m, last) in &level {
            for (j, s) in atoms.iter().enumerate() {
                if transition[*last][j] > 0.0 {
                    next.insert((s.bool_product(m), j));
                }
            }
        }
        if next.len() > SKELETON_LEVEL_CAP {
            return Closure::Open;
        }
        history.push(std::mem::replace(&mut level, next));
    }
    Closure::Open
}

fn skeleton_branch(spec: &GeneratorSpec, support: &SupportDescriptor, horizon: usize) -> Closure {
    match spec {
        GeneratorSpec::FiniteMixture {
            matrices,
            probs,
            dependence: Dependence::MarkovRow { transition },
        } => {
            // atoms with zero stationary mass are never visited
            let keep: Vec<usize> = (0..matrices.len()).filter(|&i| probs[i] > 0.0).collect();
            let masks: Vec<SkeletonMask> = keep
                .iter()
                .map(|&i| matrices[i].skeleton(ZERO_TOL))
                .collect();
            let sub: Vec<Vec<f64>> = keep
                .iter()
                .map(|&i| keep.iter().map(|&j| transition[i][j]).collect())
                .collect();
            markov_closure(&masks, &sub, horizon)
        }
        // patterns of an AR(1) draw only grow over time, so the closure of
        // the first-period patterns can certify but never refute
        GeneratorSpec::Ar1Mixture { xi, .. } if *xi > 0.0 && *xi < 1.0 => {
            match iid_closure(&support.skeletons(), horizon) {
                Closure::Never => Closure::Open,
                other => other,
            }
        }
        _ => iid_closure(&support.skeletons(), horizon),
    }
}

/// Decides condition (C) by the first conclusive test among: strictly
/// positive draws, the boolean closure of support patterns, Monte Carlo
/// search for a strictly positive product, and the contraction integral
/// `E[c(X^(t))] < 1` for the Dobrushin coefficient `c`.
pub fn check_condition_c(
    spec: &GeneratorSpec,
    horizon: usize,
    replicas: usize,
    seed: u64,
) -> Result<ConditionCReport> {
    if horizon == 0 {
        return Err(Error::InvalidSpec("horizon must be at least 1".into()));
    }
    spec.validate()?;
    let report = |verdict, method, evidence| ConditionCReport {
        verdict,
        method,
        evidence,
        horizon,
    };

    let support = spec.support()?;
    if let SupportDescriptor::Continuous {
        strictly_positive_prob,
        ..
    } = support
    {
        if strictly_positive_prob > 0.0 {
            return Ok(report(
                Verdict::Holds,
                Method::SupportAnalytic,
                strictly_positive_prob,
            ));
        }
    }

    match skeleton_branch(spec, &support, horizon) {
        Closure::Positive(k) => {
            return Ok(report(Verdict::Holds, Method::SkeletonSemigroup, k as f64))
        }
        Closure::Never => return Ok(report(Verdict::Fails, Method::SkeletonSemigroup, 0.0)),
        Closure::Open => {}
    }

    if replicas == 0 {
        return Ok(report(
            Verdict::Undetermined,
            Method::SkeletonSemigroup,
            0.0,
        ));
    }
    let runs = run_replicas(seed, replicas, |_, s| -> Result<(bool, Vec<f64>)> {
        let mut state = GeneratorState::new(spec, s)?;
        let mut product = StochasticMatrix::identity(spec.n());
        let mut scratch = Vec::new();
        let mut hit = false;
        let mut coefficients = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            product.left_mul_assign(&state.sample_next(), &mut scratch);
            hit |= product.is_strictly_positive(ZERO_TOL);
            coefficients.push(product.dobrushin_coefficient());
        }
        Ok((hit, coefficients))
    });
    let runs: Vec<(bool, Vec<f64>)> = runs.into_iter().collect::<Result<_>>()?;
    let hits = runs.iter().filter(|r| r.0).count();
    if hits > 0 {
        let fraction = hits as f64 / replicas as f64;
        return Ok(report(
            Verdict::Holds,
            Method::MonteCarloPositivity,
            fraction,
        ));
    }

    let best = (0..horizon)
        .map(|t| {
            let c: Vec<f64> = runs.iter().map(|r| r.1[t]).collect();
            stats::mean(&c) + 3.0 * stats::std_error(&c)
        })
        .fold(f64::INFINITY, f64::min);
    let verdict = if best < 1.0 {
        Verdict::Holds
    } else {
        Verdict::Undetermined
    };
    Ok(report(verdict, Method::ContractionIntegral, best))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemigroupReport {
    pub skeletons: Vec<SkeletonMask>,
    pub min_rank: usize,
    pub rank_one_atoms: Vec<StochasticMatrix>,
    /// Distinct elements found.
    pub size: usize,
}

/// Breadth-first generation of all products of length `<= max_len` of the
/// support matrices, with [`DEFAULT_SEMIGROUP_CAP`].
pub fn semigroup_explore(
    support: &[StochasticMatrix],
    max_len: usize,
    dedup_tol: f64,
) -> Result<SemigroupReport> {
    semigroup_explore_capped(support, max_len, dedup_tol, DEFAULT_SEMIGROUP_CAP)
}

/// Products are identified when they fall in the same cell of a grid of
/// mesh `dedup_tol`.
pub fn semigroup_explore_capped(
    support: &[StochasticMatrix],
    max_len: usize,
    dedup_tol: f64,
    cap: usize,
) -> Result<SemigroupReport> {
    let n = support
        .first()
        .map(StochasticMatrix::n)
        .ok_or_else(|| Error::InvalidSpec("empty support".into()))?;
    if let Some(bad) = support.iter().find(|m| m.n() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: bad.n(),
        });
    }
    if !(dedup_tol > 0.0) {
        return Err(Error::InvalidSpec("dedup_tol must be positive".into()));
    }
    let key = |m: &StochasticMatrix| -> Vec<i64> {
        m.as_slice()
            .iter()
            .map(|x| (x / dedup_tol).round() as i64)
            .collect()
    };
    let mut seen: HashSet<Vec<i64>> = HashSet::new();
    let mut elements: Vec<StochasticMatrix> = Vec::new();
    let mut frontier: Vec<StochasticMatrix> = Vec::new();
    for m in support {
        if seen.insert(key(m)) {
            elements.push(m.clone());
            frontier.push(m.clone());
        }
    }
    for _ in 1..max_len {
        let mut next = Vec::new();
        for m in &frontier {
            for s in support {
                let p = s.mul_unchecked(m);
                if seen.insert(key(&p)) {
                    if elements.len() >= cap {
                        return Err(Error::ExplosionGuard { cap });
                    }
                    elements.push(p.clone());
                    next.push(p);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }

    let mut min_rank = usize::MAX;
    let mut rank_one_atoms = Vec::new();
    let mut skeletons = BTreeSet::new();
    for m in &elements {
        let rank = m.numeric_rank(RANK_REL_TOL)?.numeric_rank;
        min_rank = min_rank.min(rank);
        if rank == 1 {
            rank_one_atoms.push(m.clone());
        }
        skeletons.insert(m.skeleton(ZERO_TOL));
    }
    Ok(SemigroupReport {
        skeletons: skeletons.into_iter().collect(),
        min_rank,
        rank_one_atoms,
        size: elements.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CyclicityReport {
    pub cyclic: bool,
    /// `(A_1, ..., A_m)` with 0-based agent indices.
    pub witness_partition: Option<Vec<Vec<usize>>>,
}

/// Searches for disjoint nonempty `A_1, ..., A_m` (`m >= 2`) such that every
/// support matrix sends all the weight of each `i in A_s` into `A_{s+1}`
/// (indices mod `m`).
///
/// If a witness exists then so does the one generated from its `A_1` by
/// `A_{s+1} = N(A_s)`, where `N` is the out-neighbourhood in the union of
/// the supports. Trying every `A_1` therefore makes the search exhaustive.
pub fn cyclicity_check(support: &[StochasticMatrix]) -> Result<CyclicityReport> {
    let n = support
        .first()
        .map(StochasticMatrix::n)
        .ok_or_else(|| Error::InvalidSpec("empty support".into()))?;
    if n > CYCLICITY_MAX_AGENTS {
        return Err(Error::SizeLimit(format!(
            "{n} agents (limit {CYCLICITY_MAX_AGENTS})"
        )));
    }
    if let Some(bad) = support.iter().find(|m| m.n() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: bad.n(),
        });
    }
    let out: Vec<u32> = (0..n)
        .map(|i| {
            support.iter().fold(0u32, |acc, m| {
                acc | (0..n)
                    .filter(|&j| m.get(i, j) > ZERO_TOL)
                    .fold(0, |a, j| a | (1 << j))
            })
        })
        .collect();
    let image = |set: u32| {
        (0..n)
            .filter(|i| set & (1 << i) != 0)
            .fold(0u32, |a, i| a | out[i])
    };
    let members = |set: u32| {
        (0..n)
            .filter(|i| set & (1 << i) != 0)
            .collect::<Vec<usize>>()
    };

    for first in 1u32..(1 << n) {
        let mut chain = vec![first];
        let mut used = first;
        loop {
            let next = image(*chain.last().expect("nonempty"));
            if chain.len() >= 2 && next & !first == 0 {
                return Ok(CyclicityReport {
                    cyclic: true,
                    witness_partition: Some(chain.iter().map(|&s| members(s)).collect()),
                });
            }
            if next & used != 0 {
                break;
            }
            used |= next;
            chain.push(next);
        }
    }
    Ok(CyclicityReport {
        cyclic: false,
        witness_partition: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonEquivalence {
    pub same_initial_skeleton: bool,
    pub verdict_a: ConditionCReport,
    pub verdict_b: ConditionCReport,
    pub agree: bool,
}

/// Compares the support patterns of two iid generators and their
/// condition (C) verdicts.
pub fn skeleton_equivalence_test(
    spec_a: &GeneratorSpec,
    spec_b: &GeneratorSpec,
    horizon: usize,
    replicas: usize,
    seed: u64,
) -> Result<SkeletonEquivalence> {
    if !spec_a.is_iid() || !spec_b.is_iid() {
        return Err(Error::NotIid);
    }
    if spec_a.n() != spec_b.n() {
        return Err(Error::DimensionMismatch {
            expected: spec_a.n(),
            found: spec_b.n(),
        });
    }
    let patterns = |s: &GeneratorSpec| -> Result<BTreeSet<SkeletonMask>> {
        Ok(s.support()?.skeletons().into_iter().collect())
    };
    let same_initial_skeleton = patterns(spec_a)? == patterns(spec_b)?;
    let verdict_a = check_condition_c(spec_a, horizon, replicas, seed)?;
    let verdict_b = check_condition_c(spec_b, horizon, replicas, seed)?;
    Ok(SkeletonEquivalence {
        same_initial_skeleton,
        agree: verdict_a.verdict == verdict_b.verdict,
        verdict_a,
        verdict_b,
    })
}
