mod common;

use offrl::pevi::{uncertainty_bonus, RidgeState};
use offrl::*;
use proptest::prelude::*;

fn mdp_strategy() -> impl Strategy<Value = (TabularMdp64, u64)> {
    (1usize..7, 1usize..4, any::<u64>())
        .prop_map(|(n, k, seed)| (random_tabular_mdp(n, k, 1.0, seed).unwrap(), seed))
}

fn sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bellman_is_a_gamma_contraction((mdp, seed) in mdp_strategy(), gamma in 0.0f64..0.99) {
        let mut rng = common::rng(seed);
        let n = mdp.n_states();
        let v: Vec<f64> = (0..n).map(|_| rand::Rng::random::<f64>(&mut rng) * 10.0).collect();
        let w: Vec<f64> = (0..n).map(|_| rand::Rng::random::<f64>(&mut rng) * 10.0).collect();
        let bv = mdp.bellman_operator(&VTable::new(v.clone(), gamma), gamma).unwrap().max_values();
        let bw = mdp.bellman_operator(&VTable::new(w.clone(), gamma), gamma).unwrap().max_values();
        prop_assert!(sup(bv.values(), bw.values()) <= gamma * sup(&v, &w) + 1e-12);
    }

    #[test]
    fn bellman_is_monotone((mdp, seed) in mdp_strategy(), gamma in 0.0f64..0.99, bump in 0.0f64..3.0) {
        let mut rng = common::rng(seed ^ 1);
        let n = mdp.n_states();
        let v: Vec<f64> = (0..n).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
        let w: Vec<f64> = v.iter().map(|x| x + bump * rand::Rng::random::<f64>(&mut rng)).collect();
        let qv = mdp.bellman_operator(&VTable::new(v, gamma), gamma).unwrap();
        let qw = mdp.bellman_operator(&VTable::new(w, gamma), gamma).unwrap();
        for (a, b) in qv.values().iter().zip(qw.values()) {
            prop_assert!(a <= b);
        }
    }

    #[test]
    fn optimal_values_within_vmax((mdp, _) in mdp_strategy(), gamma in 0.0f64..0.97) {
        let out = value_iteration(&mdp, gamma, &SolveOptions::default()).unwrap();
        prop_assert!(out.v.within_vmax(mdp.r_max(), 1e-9));
        prop_assert!(out.q.within_vmax(mdp.r_max(), 1e-9));
    }

    #[test]
    fn support_constraint_never_exceeds_full_max(
        (mdp, seed) in mdp_strategy(), gamma in 0.0f64..0.95, prop in 0.0f64..0.6,
    ) {
        let (n, k) = (mdp.n_states(), mdp.n_actions());
        let Ok(mask) = random_mask(n, k, prop, seed) else { return Ok(()); };
        let opts = SolveOptions::default();
        let full = value_iteration(&mdp, gamma, &opts).unwrap();
        let bcq = bcq_value_iteration(&mdp, &SupportConstraint::from(&mask), gamma, &opts).unwrap();
        for (a, b) in bcq.v.values().iter().zip(full.v.values()) {
            prop_assert!(*a <= b + 1e-8);
        }
        let Ok(wider) = widen_mask(&mask, 0.2, seed ^ 7) else { return Ok(()); };
        let bcq_wide = bcq_value_iteration(&mdp, &SupportConstraint::from(&wider), gamma, &opts).unwrap();
        for (a, b) in bcq.v.values().iter().zip(bcq_wide.v.values()) {
            prop_assert!(*a <= b + 1e-8);
        }
    }

    #[test]
    fn robust_values_fall_with_epsilon((mdp, _) in mdp_strategy(), gamma in 0.0f64..0.95, e1 in 0.0f64..1.0, e2 in 0.0f64..1.0) {
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let opts = SolveOptions::default();
        let nominal = value_iteration(&mdp, gamma, &opts).unwrap();
        let a = robust_value_iteration(&MixtureModelSet::new(&mdp, lo).unwrap(), gamma, &opts).unwrap();
        let b = robust_value_iteration(&MixtureModelSet::new(&mdp, hi).unwrap(), gamma, &opts).unwrap();
        for s in 0..mdp.n_states() {
            prop_assert!(a.v.get(s) <= nominal.v.get(s) + 1e-8);
            prop_assert!(b.v.get(s) <= a.v.get(s) + 1e-8);
        }
    }

    #[test]
    fn robust_equals_shifted_lower_discount((mdp, _) in mdp_strategy(), gamma in 0.0f64..0.95, eps in 0.0f64..1.0) {
        let check = check_lemma3(&mdp, gamma, eps, &SolveOptions::with_tol(1e-11)).unwrap();
        prop_assert!(check.max_abs_gap <= 1e-7);
    }

    #[test]
    fn discount_gap_shrinks_toward_evaluation_discount(g1 in 0.0f64..0.97, g2 in 0.0f64..0.97, ge in 0.0f64..0.97) {
        let (a, b) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        prop_assume!(b <= ge);
        let ga = lemma1_gap(a, ge, 1.0).unwrap();
        let gb = lemma1_gap(b, ge, 1.0).unwrap();
        prop_assert!(gb >= 0.0);
        prop_assert!(ga >= gb);
    }

    #[test]
    fn coverage_of_distributions_is_at_least_one(seed in any::<u64>(), n in 1usize..5, k in 1usize..4) {
        let mut rng = common::rng(seed);
        let features = OneHotFeatures::new(n, k);
        let a = common::random_policy(&mut rng, 1, n * k);
        let b = common::random_policy(&mut rng, 1, n * k);
        let c = coverage_coefficient(a.probs(), b.probs(), &features).unwrap();
        prop_assert!(c >= 1.0 - 1e-12);
    }

    #[test]
    fn bonus_shrinks_as_data_grows(seed in any::<u64>(), extra in 1usize..200) {
        let (n, k) = (3, 2);
        let mdp: TabularMdp64 = random_tabular_mdp(n, k, 1.0, seed).unwrap();
        let data = sample_dataset(&mdp, &Policy::uniform(n, k), 50 + extra, seed ^ 3).unwrap();
        let prefix = Dataset::new(data.transitions[..50].to_vec());
        let features = OneHotFeatures::new(n, k);
        let small = uncertainty_bonus(&features, &RidgeState::build(&prefix, &features, 1.0).unwrap(), 1.0).unwrap();
        let large = uncertainty_bonus(&features, &RidgeState::build(&data, &features, 1.0).unwrap(), 1.0).unwrap();
        for (a, b) in large.iter().zip(&small) {
            prop_assert!(a <= b);
        }
    }

    #[test]
    fn masks_behave(seed in any::<u64>(), prop in 0.0f64..0.6, noise in 0.0f64..0.3) {
        let (n, k) = (6, 5);
        let mask = random_mask(n, k, prop, seed).unwrap();
        prop_assert!(mask.count() >= n);
        prop_assert!((0..n).all(|s| mask.row(s).iter().any(|&b| b)));
        let added = ((noise * mask.count() as f64).round() as usize).max(usize::from(noise > 0.0));
        match widen_mask(&mask, noise, seed) {
            Ok(wide) => {
                prop_assert!(wide.is_superset_of(&mask));
                prop_assert_eq!(wide.count(), mask.count() + added);
            }
            Err(e) => prop_assert!(e.is_validation() && mask.count() + added > n * k),
        }
        let q = QTable::from_vec(n, k, (0..n * k).map(|i| i as f64 * 0.1).collect(), 0.9);
        let pi = behavior_policy(&q, &mask).unwrap();
        for s in 0..n {
            for a in 0..k {
                prop_assert_eq!(pi.prob(s, a) > 0.0, mask.get(s, a));
            }
        }
    }

    #[test]
    fn pessimistic_values_stay_in_range(seed in any::<u64>(), gamma in 0.5f64..0.95, beta in 0.0f64..2.0) {
        let (n, k) = (4, 2);
        let mdp: TabularMdp64 = random_tabular_mdp(n, k, 1.0, seed).unwrap();
        let data = sample_dataset(&mdp, &Policy::uniform(n, k), 100, seed ^ 5).unwrap();
        let fit = pevi(&data, &OneHotFeatures::new(n, k), &PeviConfig::new(gamma, beta, 1.0)).unwrap();
        prop_assert!(fit.q.values().iter().all(|&x| x >= 0.0 && x <= 1.0 / (1.0 - gamma) + 1e-12));
        prop_assert!(fit.policy.is_deterministic());
    }
}

#[test]
fn subopt_is_nonnegative_and_zero_at_optimum() {
    let mdp: TabularMdp64 = random_tabular_mdp(6, 3, 1.0, 4).unwrap();
    let opts = SolveOptions::default();
    let star = value_iteration(&mdp, 0.9, &opts).unwrap();
    assert!(suboptimality(&mdp, &star.policy, 0.9, &opts).unwrap().abs() < 1e-8);
    let mut rng = common::rng(4);
    let pi = common::random_policy(&mut rng, 6, 3);
    assert!(suboptimality(&mdp, &pi, 0.9, &opts).unwrap() >= -2.0 * 1e-10 / 0.1);
}
