use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::{GeneratorSpec, GeneratorState};
use crate::matrix::{StochasticMatrix, RANK_REL_TOL};
use crate::seed::run_replicas;

/// Entrywise distance under which two limiting products count as one atom.
pub const DEFAULT_ATOM_TOL: f64 = 1e-4;
/// More distinct limits than this are reported as a continuum.
const MAX_ATOMS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisagreementReport {
    /// Modal numeric rank of `X^(t_max)`; the smaller rank wins ties.
    pub eta_estimate: usize,
    pub rank_histogram: BTreeMap<usize, f64>,
    /// Limits clustered on finitely many matrices, with frequencies, in
    /// order of first appearance.
    pub support_atoms: Option<Vec<(StochasticMatrix, f64)>>,
}

/// Numeric ranks of the products `X^(t_max)` across replicas and, when they
/// cluster, the empirical law of the limit.
pub fn disagreement_degree(
    spec: &GeneratorSpec,
    replicas: usize,
    t_max: usize,
    atom_tol: f64,
    seed: u64,
) -> Result<DisagreementReport> {
    if replicas < 100 {
        return Err(Error::InvalidSpec(format!(
            "need at least 100 replicas, got {replicas}"
        )));
    }
    spec.validate()?;
    let n = spec.n();
    let runs = run_replicas(
        seed,
        replicas,
        |_, s| -> Result<(StochasticMatrix, usize)> {
            let mut state = GeneratorState::new(spec, s)?;
            let mut product = StochasticMatrix::identity(n);
            let mut scratch = Vec::new();
            for _ in 0..t_max {
                product.left_mul_assign(&state.sample_next(), &mut scratch);
            }
            let rank = product.numeric_rank(RANK_REL_TOL)?.numeric_rank;
            Ok((product, rank))
        },
    );
    let runs: Vec<(StochasticMatrix, usize)> = runs.into_iter().collect::<Result<_>>()?;

    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for (_, r) in &runs {
        *counts.entry(*r).or_default() += 1;
    }
    let eta_estimate = counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(r, _)| *r)
        .expect("replicas > 0");
    let rank_histogram = counts
        .into_iter()
        .map(|(r, c)| (r, c as f64 / replicas as f64))
        .collect();

    let mut atoms: Vec<(StochasticMatrix, usize)> = Vec::new();
    for (m, _) in &runs {
        match atoms
            .iter_mut()
            .map(|a| (m.max_abs_diff(&a.0), a))
            .filter(|(d, _)| *d <= atom_tol)
            .min_by(|x, y| x.0.total_cmp(&y.0))
        {
            Some((_, slot)) => slot.1 += 1,
            None => {
                if atoms.len() == MAX_ATOMS {
                    atoms.clear();
                    break;
                }
                atoms.push((m.clone(), 1));
            }
        }
    }
    let support_atoms = (!atoms.is_empty()).then(|| {
        atoms
            .into_iter()
            .map(|(m, c)| (m, c as f64 / replicas as f64))
            .collect()
    });
    Ok(DisagreementReport {
        eta_estimate,
        rank_histogram,
        support_atoms,
    })
}
