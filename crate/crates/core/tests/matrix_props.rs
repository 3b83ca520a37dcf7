use degroot::matrix::{StochasticMatrix, RANK_REL_TOL, ZERO_TOL};
use proptest::prelude::*;

/// Random row-stochastic matrix with roughly 30% structural zeros.
fn stochastic(n: usize) -> impl Strategy<Value = StochasticMatrix> {
    proptest::collection::vec(
        proptest::collection::vec((0.0..1.0f64, any::<bool>(), 0u8..10), n),
        n,
    )
    .prop_map(move |rows| {
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                let mut r: Vec<f64> = r
                    .into_iter()
                    .map(|(x, _, z)| if z < 3 { 0.0 } else { x })
                    .collect();
                let s: f64 = r.iter().sum();
                if s == 0.0 {
                    r[i] = 1.0;
                    r
                } else {
                    r.iter().map(|x| x / s).collect()
                }
            })
            .collect();
        StochasticMatrix::new(rows, 1e-9).unwrap()
    })
}

fn positive(n: usize) -> impl Strategy<Value = StochasticMatrix> {
    proptest::collection::vec(proptest::collection::vec(0.01..1.0f64, n), n).prop_map(|rows| {
        let rows = rows
            .into_iter()
            .map(|r| {
                let s: f64 = r.iter().sum();
                r.iter().map(|x| x / s).collect()
            })
            .collect();
        StochasticMatrix::new(rows, 1e-9).unwrap()
    })
}

fn pair() -> impl Strategy<Value = (StochasticMatrix, StochasticMatrix)> {
    (2usize..=6).prop_flat_map(|n| (stochastic(n), stochastic(n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn products_are_stochastic((a, b) in pair()) {
        let ab = a.multiply(&b).unwrap();
        for row in ab.rows() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            prop_assert!(row.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn dobrushin_is_submultiplicative((a, b) in pair()) {
        let ab = a.multiply(&b).unwrap();
        prop_assert!(ab.dobrushin_coefficient() <= a.dobrushin_coefficient() * b.dobrushin_coefficient() + 1e-12);
        prop_assert!(ab.dobrushin_coefficient() <= 1.0 + 1e-12);
    }

    #[test]
    fn skeleton_of_product_is_boolean_product((a, b) in pair()) {
        let ab = a.multiply(&b).unwrap();
        prop_assert_eq!(ab.skeleton(ZERO_TOL), a.skeleton(ZERO_TOL).bool_product(&b.skeleton(ZERO_TOL)));
    }

    #[test]
    fn lambda2_matches_characteristic_roots(a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let m = StochasticMatrix::new(vec![vec![a, 1.0 - a], vec![b, 1.0 - b]], 1e-12).unwrap();
        // roots of x^2 - tr x + det, sorted by modulus
        let tr = a + 1.0 - b;
        let det = a * (1.0 - b) - b * (1.0 - a);
        let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
        let (r1, r2) = ((tr + disc) / 2.0, (tr - disc) / 2.0);
        let second = if r1.abs() >= r2.abs() { r2 } else { r1 };
        prop_assert!((m.lambda2_2x2().unwrap() - second).abs() <= 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn strictly_positive_contracts(m in (2usize..=6).prop_flat_map(positive)) {
        prop_assert!(m.is_strictly_positive(ZERO_TOL));
        prop_assert!(m.dobrushin_coefficient() < 1.0);
    }

    #[test]
    fn rank_one_iff_zero_distance(row in proptest::collection::vec(0.01..1.0f64, 2..=6), w in 0.05..1.0f64) {
        let s: f64 = row.iter().sum();
        let row: Vec<f64> = row.iter().map(|x| x / s).collect();
        let r1 = StochasticMatrix::rank_one(&row).unwrap();
        prop_assert_eq!(r1.distance_to_rank_one(), 0.0);
        prop_assert_eq!(r1.numeric_rank(RANK_REL_TOL).unwrap().numeric_rank, 1);

        let mixed = r1.mix(&StochasticMatrix::identity(row.len()), w).unwrap();
        prop_assert!(mixed.distance_to_rank_one() > 0.0);
        prop_assert!(mixed.numeric_rank(RANK_REL_TOL).unwrap().numeric_rank > 1);
    }

    #[test]
    fn same_skeleton_is_an_equivalence(
        (a, b, c) in (2usize..=4).prop_flat_map(|n| (stochastic(n), stochastic(n), stochastic(n))),
    ) {
        // squaring the entries and renormalizing keeps the zero pattern
        let twin_rows = a
            .to_rows()
            .into_iter()
            .map(|r| {
                let s: f64 = r.iter().map(|x| x * x).sum();
                r.iter().map(|x| x * x / s).collect()
            })
            .collect();
        let twin = StochasticMatrix::new(twin_rows, 1e-9).unwrap();
        for x in [&a, &b, &c, &twin] {
            prop_assert!(x.same_skeleton(x).unwrap());
        }
        prop_assert!(a.same_skeleton(&twin).unwrap() && twin.same_skeleton(&a).unwrap());
        for (x, y) in [(&a, &b), (&b, &c), (&a, &c)] {
            prop_assert_eq!(x.same_skeleton(y).unwrap(), y.same_skeleton(x).unwrap());
        }
        if a.same_skeleton(&b).unwrap() && b.same_skeleton(&c).unwrap() {
            prop_assert!(a.same_skeleton(&c).unwrap());
        }
        if twin.same_skeleton(&b).unwrap() {
            prop_assert!(a.same_skeleton(&b).unwrap());
        }
    }
}
