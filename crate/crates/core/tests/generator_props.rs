use degroot::fragmentation::Graph;
use degroot::generators::{
    encounter_2x2, encounter_markov, islands, leader_follower, perturbed_fixed, ring_uniform_self,
    stubborn_mixture, symmetric_beta_2x2,
};
use degroot::matrix::StochasticMatrix;
use degroot::{GeneratorSpec, GeneratorState};
use proptest::prelude::*;

fn models() -> Vec<(&'static str, GeneratorSpec)> {
    let t = StochasticMatrix::new(
        vec![
            vec![0.5, 0.3, 0.2],
            vec![0.1, 0.6, 0.3],
            vec![0.3, 0.3, 0.4],
        ],
        1e-12,
    )
    .unwrap();
    vec![
        ("fixed", GeneratorSpec::Fixed { matrix: t.clone() }),
        ("stubborn", stubborn_mixture(0.3, 0.5).unwrap()),
        ("encounter", encounter_2x2(0.2, 0.6).unwrap()),
        ("encounter markov", encounter_markov(0.2, 0.7, 0.4).unwrap()),
        (
            "dirichlet",
            GeneratorSpec::DirichletRows {
                alpha: vec![
                    vec![1.0, 2.0, 0.0],
                    vec![0.5, 0.5, 1.0],
                    vec![2.0, 0.0, 1.0],
                ],
            },
        ),
        ("beta", symmetric_beta_2x2(2.0).unwrap()),
        ("perturbed", perturbed_fixed(t.clone(), 4.0).unwrap()),
        ("ring", ring_uniform_self(4).unwrap()),
        ("leader", leader_follower(4).unwrap()),
        (
            "bernoulli",
            GeneratorSpec::Bernoulli2x2 {
                x: 0.6,
                p_a: 0.3,
                p_b: 0.7,
            },
        ),
        ("swap", GeneratorSpec::TwoPointSwap { a: 0.4 }),
        ("islands", islands(3, 0.8, 0.3).unwrap()),
        (
            "degree",
            GeneratorSpec::UndirectedDegree {
                graphs: vec![
                    Graph::cycle(6),
                    Graph::from_edges(6, &[(0, 2), (2, 1), (1, 3), (3, 5), (5, 4), (4, 0)])
                        .unwrap(),
                    Graph::from_edges(6, &[(0, 3), (3, 1), (1, 4), (4, 2), (2, 5), (5, 0)])
                        .unwrap(),
                ],
                probs: vec![0.5, 0.3, 0.2],
            },
        ),
        (
            "metropolis",
            GeneratorSpec::MetropolisGraphs {
                graphs: vec![Graph::cycle(4), Graph::path(4)],
                probs: vec![0.6, 0.4],
            },
        ),
    ]
}

#[test]
fn mean_matrix_matches_empirical_mean() {
    for (name, spec) in models() {
        let mean = spec.mean_matrix().unwrap_or_else(|e| panic!("{name}: {e}"));
        let mut g = GeneratorState::new(&spec, 41).unwrap();
        let draws = 100_000;
        let mut sum = vec![0.0; mean.as_slice().len()];
        for _ in 0..draws {
            for (s, x) in sum.iter_mut().zip(g.sample_next().as_slice()) {
                *s += x;
            }
        }
        for (s, m) in sum.iter().zip(mean.as_slice()) {
            let d = (s / draws as f64 - m).abs();
            assert!(d <= 5e-3, "{name}: entry off by {d}");
        }
    }
}

#[test]
fn ar1_mean_is_long_run_source_mean() {
    let source = ring_uniform_self(3).unwrap();
    let spec = GeneratorSpec::Ar1Mixture {
        xi: 0.4,
        t0: StochasticMatrix::identity(3),
        source: Box::new(source.clone()),
    };
    let target = source.mean_matrix().unwrap();
    assert!(spec.mean_matrix().unwrap().max_abs_diff(&target) < 1e-15);
    let mut g = GeneratorState::new(&spec, 3).unwrap();
    for _ in 0..200 {
        g.sample_next();
    }
    let draws = 100_000;
    let mut sum = [0.0; 9];
    for _ in 0..draws {
        for (s, x) in sum.iter_mut().zip(g.sample_next().as_slice()) {
            *s += x;
        }
    }
    for (s, m) in sum.iter().zip(target.as_slice()) {
        assert!((s / draws as f64 - m).abs() <= 5e-3);
    }
}

/// Entry means of X_1 and X_50 over 5,000 seeds agree within 3 standard
/// errors of their difference.
#[test]
fn iid_models_are_stationary() {
    let seeds = 5000u64;
    for (name, spec) in models() {
        if !spec.is_iid() {
            continue;
        }
        let size = spec.n() * spec.n();
        let (mut first, mut fiftieth) = (vec![Vec::new(); size], vec![Vec::new(); size]);
        for seed in 0..seeds {
            let mut g = GeneratorState::new(&spec, 1_000_000 + seed).unwrap();
            for (k, x) in g.sample_next().as_slice().iter().enumerate() {
                first[k].push(*x);
            }
            for _ in 0..48 {
                g.sample_next();
            }
            for (k, x) in g.sample_next().as_slice().iter().enumerate() {
                fiftieth[k].push(*x);
            }
        }
        for k in 0..size {
            let (m1, v1) = moments(&first[k]);
            let (m2, v2) = moments(&fiftieth[k]);
            let se = ((v1 + v2) / seeds as f64).sqrt();
            assert!(
                (m1 - m2).abs() <= 3.0 * se + 1e-12,
                "{name}, entry {k}: {m1} vs {m2}"
            );
        }
    }
}

fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (
        m,
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0),
    )
}

#[test]
fn same_seed_same_stream() {
    for (name, spec) in models() {
        let mut a = GeneratorState::new(&spec, 77).unwrap();
        let mut b = GeneratorState::new(&spec, 77).unwrap();
        for _ in 0..200 {
            let (x, y) = (a.sample_next(), b.sample_next());
            assert!(
                x.as_slice()
                    .iter()
                    .zip(y.as_slice())
                    .all(|(p, q)| p.to_bits() == q.to_bits()),
                "{name} diverged"
            );
        }
    }
}

fn alpha_matrix() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..=5)
        .prop_flat_map(|n| proptest::collection::vec(proptest::collection::vec(0.1..3.0f64, n), n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn balance_flag_matches_row_and_column_sums(alpha in alpha_matrix(), symmetric in any::<bool>()) {
        let n = alpha.len();
        let alpha: Vec<Vec<f64>> = if symmetric {
            (0..n).map(|i| (0..n).map(|j| alpha[i][j] + alpha[j][i]).collect()).collect()
        } else {
            alpha
        };
        let rows: Vec<f64> = alpha.iter().map(|r| r.iter().sum()).collect();
        let cols: Vec<f64> = (0..n).map(|j| alpha.iter().map(|r| r[j]).sum()).collect();
        let expect = rows.iter().zip(&cols).all(|(r, c)| (r - c).abs() <= 1e-9);
        let spec = GeneratorSpec::DirichletRows { alpha };
        prop_assert_eq!(spec.balanced(), Some(expect));
        if symmetric {
            prop_assert_eq!(spec.balanced(), Some(true));
        }
    }

    #[test]
    fn ar1_rows_stay_stochastic(xi in 0.0..=1.0f64, seed in any::<u64>()) {
        let spec = GeneratorSpec::Ar1Mixture {
            xi,
            t0: StochasticMatrix::ring(4),
            source: Box::new(ring_uniform_self(4).unwrap()),
        };
        let mut g = GeneratorState::new(&spec, seed).unwrap();
        for _ in 0..50 {
            let x = g.sample_next();
            for row in x.rows() {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                prop_assert!(row.iter().all(|&v| v >= 0.0));
            }
        }
    }
}
