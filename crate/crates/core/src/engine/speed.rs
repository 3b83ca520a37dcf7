//! Speed of convergence for two agents: `t_phi` and the log energy
//! `I_mu = E[-log |x - y|]` of the law of the rows `(x, 1-x), (y, 1-y)`.

use gauss_quad::GaussLegendre;
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;

use crate::error::{Error, Result};
use crate::generators::{GeneratorSpec, GeneratorState};
use crate::seed::run_replicas;
use crate::stats;

/// Fraction of replicas allowed to hit `t_cap`.
const CAP_HIT_FRACTION: f64 = 0.01;
/// Geometric ratio of graded panel widths.
const GRADING_RATIO: f64 = 0.25;
/// Number of graded panels per half interval.
const GRADING_LEVELS: i32 = 30;
/// Smallest accepted Gauss-Legendre order.
const MIN_QUAD_POINTS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedReport {
    pub mean_t_phi: f64,
    pub samples: Vec<usize>,
    pub t_cap: usize,
}

/// `50 * ceil(-ln phi)`.
pub fn default_t_cap(phi: f64) -> usize {
    50 * (-phi.ln()).ceil().max(1.0) as usize
}

/// Last `t <= t_cap` with `|x_t - y_t| >= phi`, where `x_t, y_t` are the
/// first-column entries of `X^(t)` and `X^(0) = I`.
///
/// For two agents the spread is multiplied by `lambda_2(X_t)` each period,
/// so its magnitude never increases and the scan stops at the first drop
/// below `phi`.
pub fn convergence_time_2x2(
    spec: &GeneratorSpec,
    phi: f64,
    replicas: usize,
    t_cap: Option<usize>,
    seed: u64,
) -> Result<SpeedReport> {
    if spec.n() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: spec.n(),
        });
    }
    if !(phi > 0.0 && phi < 1.0) {
        return Err(Error::InvalidProbability {
            name: "phi",
            value: phi,
        });
    }
    if replicas == 0 {
        return Err(Error::InvalidSpec("replicas must be positive".into()));
    }
    spec.validate()?;
    let t_cap = t_cap.unwrap_or_else(|| default_t_cap(phi));
    let runs = run_replicas(seed, replicas, |_, s| -> Result<(usize, bool)> {
        let mut state = GeneratorState::new(spec, s)?;
        let (mut x, mut y) = (1.0f64, 0.0f64);
        let mut t_phi = 0;
        for t in 1..=t_cap {
            let m = state.sample_next();
            let (nx, ny) = (
                m.get(0, 0) * x + m.get(0, 1) * y,
                m.get(1, 0) * x + m.get(1, 1) * y,
            );
            x = nx;
            y = ny;
            if (x - y).abs() < phi {
                return Ok((t_phi, false));
            }
            t_phi = t;
        }
        Ok((t_phi, true))
    });
    let runs: Vec<(usize, bool)> = runs.into_iter().collect::<Result<_>>()?;
    let hits = runs.iter().filter(|r| r.1).count();
    if hits as f64 > CAP_HIT_FRACTION * replicas as f64 {
        return Err(Error::CapHit {
            hits,
            replicas,
            t_cap,
        });
    }
    let samples: Vec<usize> = runs.into_iter().map(|r| r.0).collect();
    let as_f64: Vec<f64> = samples.iter().map(|&t| t as f64).collect();
    Ok(SpeedReport {
        mean_t_phi: stats::mean(&as_f64),
        samples,
        t_cap,
    })
}

/// Law of `(x, y)` in `[0, 1]^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Law2x2 {
    /// `x ~ Beta(a1, b1)` independent of `y ~ Beta(a2, b2)`.
    ProductBeta { a1: f64, b1: f64, a2: f64, b2: f64 },
    /// Finitely many points `(x, y, mass)`.
    Atoms { points: Vec<(f64, f64, f64)> },
}

impl Law2x2 {
    pub fn uniform() -> Self {
        Law2x2::symmetric_beta(1.0)
    }

    pub fn arcsine() -> Self {
        Law2x2::symmetric_beta(0.5)
    }

    /// `x, y` iid `Beta(a, a)`.
    pub fn symmetric_beta(a: f64) -> Self {
        Law2x2::ProductBeta {
            a1: a,
            b1: a,
            a2: a,
            b2: a,
        }
    }
}

/// A quadrature node on `[lo, hi]` stored by its distances to both ends,
/// each accurate even when tiny.
#[derive(Clone, Copy)]
struct Node {
    from_lo: f64,
    from_hi: f64,
    weight: f64,
}

/// Gauss-Legendre panels refined geometrically toward both ends of
/// `[lo, hi]`, where the integrands of the log energy are singular.
fn graded_rule(rule: &GaussLegendre, width: f64) -> Vec<Node> {
    let half = 0.5 * width;
    let mut nodes = Vec::new();
    let mut push_panel = |a: f64, b: f64, from_lo: bool| {
        for (&t, &w) in rule.nodes().zip(rule.weights()) {
            let d = a + (b - a) * 0.5 * (t + 1.0);
            let weight = w * 0.5 * (b - a);
            nodes.push(if from_lo {
                Node {
                    from_lo: d,
                    from_hi: width - d,
                    weight,
                }
            } else {
                Node {
                    from_lo: width - d,
                    from_hi: d,
                    weight,
                }
            });
        }
    };
    for from_lo in [true, false] {
        let mut b = half;
        for _ in 0..GRADING_LEVELS {
            let a = b * GRADING_RATIO;
            push_panel(a, b, from_lo);
            b = a;
        }
        push_panel(0.0, b, from_lo);
    }
    nodes
}

/// Beta density from `x` and `1 - x` given separately.
fn beta_density(a: f64, b: f64, ln_norm: f64, x: f64, one_minus_x: f64) -> f64 {
    ((a - 1.0) * x.ln() + (b - 1.0) * one_minus_x.ln() - ln_norm).exp()
}

/// `I_mu = integral of -log |x - y| d mu(x, y)`.
///
/// Product Beta laws are integrated as `int f(x) J(x) dx` with
/// `J(x) = int -log|x - y| g(y) dy`; every one-dimensional integral runs over
/// panels graded toward the density singularities at 0 and 1 and toward the
/// log singularity at `y = x`. `quad_points` is the Gauss-Legendre order of
/// each panel.
pub fn log_energy(law: &Law2x2, quad_points: usize) -> Result<f64> {
    match law {
        Law2x2::Atoms { points } => {
            let mut total_mass = 0.0;
            let mut energy = 0.0;
            for &(x, y, mass) in points {
                if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
                    return Err(Error::InvalidSpec(format!(
                        "atom ({x}, {y}) outside the unit square"
                    )));
                }
                if !(mass >= 0.0) {
                    return Err(Error::InvalidProbability {
                        name: "atom mass",
                        value: mass,
                    });
                }
                if mass > 0.0 && x == y {
                    return Err(Error::SingularMass);
                }
                total_mass += mass;
                if mass > 0.0 {
                    energy -= mass * (x - y).abs().ln();
                }
            }
            if (total_mass - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidProbability {
                    name: "total atom mass",
                    value: total_mass,
                });
            }
            Ok(energy + 0.0)
        }
        &Law2x2::ProductBeta { a1, b1, a2, b2 } => {
            if [a1, b1, a2, b2]
                .iter()
                .any(|p| !(*p > 0.0 && p.is_finite()))
            {
                return Err(Error::InvalidSpec(
                    "Beta parameters must be positive".into(),
                ));
            }
            if quad_points < MIN_QUAD_POINTS {
                return Err(Error::InvalidSpec(format!(
                    "quad_points must be at least {MIN_QUAD_POINTS}"
                )));
            }
            let rule = GaussLegendre::new(quad_points.try_into().expect("nonzero"));
            let (ln_f, ln_g) = (ln_beta(a1, b1), ln_beta(a2, b2));
            let outer = graded_rule(&rule, 1.0);
            let mut total = 0.0;
            for x in &outer {
                let fx = beta_density(a1, b1, ln_f, x.from_lo, x.from_hi);
                if fx == 0.0 {
                    continue;
                }
                // y in [0, x]: from_lo = y, from_hi = x - y
                let mut inner = 0.0;
                for y in graded_rule(&rule, x.from_lo) {
                    let gy = beta_density(a2, b2, ln_g, y.from_lo, x.from_hi + y.from_hi);
                    inner -= y.weight * gy * y.from_hi.ln();
                }
                // y in [x, 1]: from_lo = y - x, from_hi = 1 - y
                for y in graded_rule(&rule, x.from_hi) {
                    let gy = beta_density(a2, b2, ln_g, x.from_lo + y.from_lo, y.from_hi);
                    inner -= y.weight * gy * y.from_lo.ln();
                }
                total += x.weight * fx * inner;
            }
            Ok(total)
        }
    }
}
