use degroot::engine::estimate_influence;
use degroot::generators::perturbed_fixed;
use degroot::matrix::StochasticMatrix;
use degroot::wisdom::{consensus_probability, run_wisdom, Family, SignalLaw, WisdomConfig};
use proptest::prelude::*;

fn sweep(family: Family, sizes: Vec<usize>) -> Vec<f64> {
    let config = WisdomConfig {
        family,
        sizes,
        gamma: 0.5,
        signal_law: SignalLaw::default(),
        replicas: 200,
        t_max: 200_000,
        gap_tol: 1e-6,
        seed: 5,
    };
    run_wisdom(&config)
        .unwrap()
        .per_size
        .iter()
        .map(|s| s.e_max_pi)
        .collect()
}

#[test]
fn wise_families_spread_influence_as_n_doubles() {
    for family in [
        Family::RingUniformSelf,
        Family::AveragingOrIdentity { zeta: 0.5 },
    ] {
        let e = sweep(family.clone(), vec![4, 8, 16, 32]);
        assert!(e.windows(2).all(|w| w[1] < w[0]), "{family:?}: {e:?}");
    }
}

#[test]
fn error_quantiles_shrink_for_the_ring() {
    let config = WisdomConfig {
        family: Family::RingUniformSelf,
        sizes: vec![5, 10, 20, 40],
        gamma: 0.5,
        signal_law: SignalLaw::default(),
        replicas: 300,
        t_max: 500_000,
        gap_tol: 1e-6,
        seed: 6,
    };
    let q90: Vec<f64> = run_wisdom(&config)
        .unwrap()
        .per_size
        .iter()
        .map(|s| s.max_abs_error_quantiles[1])
        .collect();
    assert!(q90.windows(2).all(|w| w[1] < w[0]), "{q90:?}");
}

/// P(max_i |pi_i - 1/n| >= tau) <= (1 - sum s_i^2) / (eps tau^2), up to
/// three standard errors.
#[test]
fn perturbation_tail_bound() {
    let n = 4;
    let s2 = 1.0 / n as f64;
    for eps in [2.0, 10.0, 50.0] {
        let spec = perturbed_fixed(StochasticMatrix::averaging(n), eps).unwrap();
        let est = estimate_influence(&spec, 5000, 100_000, 1e-10, 7).unwrap();
        for tau in [0.1, 0.2, 0.3] {
            let hits = est
                .samples
                .iter()
                .filter(|pi| pi.iter().any(|p| (p - 1.0 / n as f64).abs() >= tau))
                .count();
            let k = est.samples.len() as f64;
            let freq = hits as f64 / k;
            let se = (freq * (1.0 - freq) / k).sqrt();
            let bound = (1.0 - s2) / (eps * tau * tau);
            assert!(
                freq <= bound + 3.0 * se,
                "eps={eps}, tau={tau}: {freq} > {bound}"
            );
        }
    }
}

proptest! {
    #[test]
    fn consensus_probability_is_monotone(k in 1u64..30, a in 0.0..=1.0f64, b in 0.0..=1.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (p_lo, p_hi) = (consensus_probability(k, lo).unwrap(), consensus_probability(k, hi).unwrap());
        prop_assert!(p_lo <= p_hi + 1e-12);
        prop_assert!((p_hi - (1.0 - (1.0 - hi).powi(k as i32))).abs() <= 1e-12);
    }
}
