#![allow(clippy::needless_range_loop)]
//! Library results checked against independent test-side computations.

mod common;

use approx::assert_abs_diff_eq;
use offrl::pevi::{fit_bellman_target, quantifier_validity, uncertainty_bonus, RidgeState};
use offrl::*;
use rand::Rng;

fn all_deterministic_policies(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out.into_iter().flat_map(|p| (0..k).map(move |a| [p.clone(), vec![a]].concat())).collect();
    }
    out
}

#[test]
fn bellman_operator_matches_explicit_sums() {
    let mut rng = common::rng(1);
    for _ in 0..10 {
        let mdp = common::raw_mdp(&mut rng, 6, 3, 1.0);
        let v: Vec<f64> = (0..6).map(|_| rng.random::<f64>() * 5.0).collect();
        let q = mdp.bellman_operator(&VTable::new(v.clone(), 0.8), 0.8).unwrap();
        for (a, b) in q.values().iter().zip(common::brute_backup(&mdp, &v, 0.8)) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-14);
        }
    }
}

#[test]
fn value_iteration_matches_policy_enumeration() {
    let mut rng = common::rng(2);
    for gamma in [0.0, 0.5, 0.9] {
        let mdp = common::raw_mdp(&mut rng, 4, 3, 1.0);
        let mut best = vec![f64::NEG_INFINITY; 4];
        for actions in all_deterministic_policies(4, 3) {
            let pi = Policy::deterministic(3, &actions).unwrap();
            for (b, v) in best.iter_mut().zip(common::solve_policy_value(&mdp, &pi, gamma)) {
                *b = b.max(v);
            }
        }
        let vi = value_iteration(&mdp, gamma, &SolveOptions::with_tol(1e-12)).unwrap();
        for (a, b) in vi.v.values().iter().zip(&best) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-9);
        }
        let greedy_value = common::solve_policy_value(&mdp, &vi.policy, gamma);
        for (a, b) in greedy_value.iter().zip(&best) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-9);
        }
    }
}

#[test]
fn policy_evaluation_matches_elimination() {
    let mut rng = common::rng(3);
    for gamma in [0.3, 0.95] {
        let mdp = common::raw_mdp(&mut rng, 7, 2, 2.0);
        let pi = common::random_policy(&mut rng, 7, 2);
        let oracle = common::solve_policy_value(&mdp, &pi, gamma);
        let exact = policy_evaluation_exact(&mdp, &pi, gamma).unwrap();
        let iterative = policy_evaluation(&mdp, &pi, gamma, &SolveOptions::with_tol(1e-12)).unwrap();
        for ((a, b), c) in exact.values().iter().zip(iterative.values()).zip(&oracle) {
            assert_abs_diff_eq!(*a, *c, epsilon = 1e-10);
            assert_abs_diff_eq!(*b, *c, epsilon = 1e-9);
        }
    }
}

#[test]
fn occupancy_matches_truncated_series() {
    let mut rng = common::rng(4);
    let (n, k, gamma) = (5, 2, 0.8);
    let mdp = common::raw_mdp(&mut rng, n, k, 1.0);
    let pi = common::random_policy(&mut rng, n, k);
    let mut state = mdp.init_dist().to_vec();
    let mut series = vec![0.0; n * k];
    let mut weight = 1.0 - gamma;
    for _ in 0..400 {
        let mut next = vec![0.0; n];
        for s in 0..n {
            for a in 0..k {
                let mass = state[s] * pi.prob(s, a);
                series[s * k + a] += weight * mass;
                for (sp, &p) in mdp.row(s, a).iter().enumerate() {
                    next[sp] += mass * p;
                }
            }
        }
        state = next;
        weight *= gamma;
    }
    let occ = occupancy_measure(&mdp, &pi, gamma, OccupancyStart::Initial).unwrap();
    for (a, b) in occ.iter().zip(&series) {
        assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
    }
}

#[test]
fn constrained_backup_matches_second_loop() {
    let mut rng = common::rng(5);
    let (n, k, gamma) = (8, 4, 0.9);
    let mdp = common::raw_mdp(&mut rng, n, k, 1.0);
    let mask = random_mask(n, k, 0.5, 17).unwrap();
    let mut v = vec![0.0; n];
    for _ in 0..2000 {
        let q = common::brute_backup(&mdp, &v, gamma);
        v = (0..n)
            .map(|s| (0..k).filter(|&a| mask.get(s, a)).map(|a| q[s * k + a]).fold(f64::MIN, f64::max))
            .collect();
    }
    let out = bcq_value_iteration(&mdp, &SupportConstraint::from(&mask), gamma, &SolveOptions::with_tol(1e-12)).unwrap();
    for (a, b) in out.v.values().iter().zip(&v) {
        assert_abs_diff_eq!(*a, *b, epsilon = 1e-9);
    }
    for s in 0..n {
        let a = out.policy.actions().unwrap()[s];
        assert!(mask.get(s, a));
    }
}

#[test]
fn robust_backup_matches_explicit_adversary() {
    // The adversary may put its eps mass on any single next state; take the worst.
    let mut rng = common::rng(6);
    let (n, k, gamma, eps) = (5, 3, 0.9, 0.25);
    let mdp = common::raw_mdp(&mut rng, n, k, 1.0);
    let mut v = vec![0.0; n];
    for _ in 0..2000 {
        let mut next = vec![f64::MIN; n];
        for s in 0..n {
            for a in 0..k {
                let worst = (0..n)
                    .map(|target| {
                        let mut acc = 0.0;
                        for (sp, &p) in mdp.row(s, a).iter().enumerate() {
                            let mixed = (1.0 - eps) * p + if sp == target { eps } else { 0.0 };
                            acc += mixed * v[sp];
                        }
                        acc
                    })
                    .fold(f64::MAX, f64::min);
                next[s] = next[s].max(mdp.reward(s, a) + gamma * worst);
            }
        }
        v = next;
    }
    let set = MixtureModelSet::new(&mdp, eps).unwrap();
    let out = robust_value_iteration(&set, gamma, &SolveOptions::with_tol(1e-12)).unwrap();
    for (a, b) in out.v.values().iter().zip(&v) {
        assert_abs_diff_eq!(*a, *b, epsilon = 1e-9);
    }
}

#[test]
fn dataset_frequencies_follow_sampling_law() {
    let (n, k) = (4, 3);
    let mdp: TabularMdp64 = random_tabular_mdp(n, k, 1.0, 8).unwrap();
    let mut rng = common::rng(8);
    let pi = common::random_policy(&mut rng, n, k);
    let data = sample_dataset(&mdp, &pi, 200_000, 9).unwrap();
    let freq = data.pair_frequencies(n, k);
    for s in 0..n {
        for a in 0..k {
            assert_abs_diff_eq!(freq[s * k + a], mdp.init_dist()[s] * pi.prob(s, a), epsilon = 5e-3);
        }
    }
    // Next-state law at the most visited pair.
    let (s0, a0) = (0, (0..k).max_by(|&x, &y| pi.prob(0, x).total_cmp(&pi.prob(0, y))).unwrap());
    let hits: Vec<usize> = data.transitions.iter().filter(|t| t.s == s0 && t.a == a0).map(|t| t.s_next).collect();
    for sp in 0..n {
        let f = hits.iter().filter(|&&x| x == sp).count() as f64 / hits.len() as f64;
        assert_abs_diff_eq!(f, mdp.row(s0, a0)[sp], epsilon = 0.02);
    }
    assert!(data.transitions.iter().all(|t| t.r == mdp.reward(t.s, t.a)));
}

#[test]
fn one_hot_ridge_matches_group_means() {
    let (n, k, gamma, lambda) = (5, 2, 0.9, 0.5);
    let mdp: TabularMdp64 = random_tabular_mdp(n, k, 1.0, 10).unwrap();
    let data = sample_dataset(&mdp, &Policy::uniform(n, k), 300, 11).unwrap();
    let v: Vec<f64> = (0..n).map(|s| s as f64 * 0.7).collect();
    let features = OneHotFeatures::new(n, k);
    let (w, ridge) = fit_bellman_target(&data, &features, &VTable::new(v.clone(), gamma), gamma, lambda).unwrap();
    let mut sums = vec![0.0; n * k];
    let mut counts = vec![0.0; n * k];
    for t in &data.transitions {
        sums[t.s * k + t.a] += t.r + gamma * v[t.s_next];
        counts[t.s * k + t.a] += 1.0;
    }
    for sa in 0..n * k {
        assert_abs_diff_eq!(w[sa], sums[sa] / (counts[sa] + lambda), epsilon = 1e-12);
    }
    let bonus = uncertainty_bonus(&features, &ridge, 2.0).unwrap();
    for sa in 0..n * k {
        assert_abs_diff_eq!(bonus[sa], 2.0 / (counts[sa] + lambda).sqrt(), epsilon = 1e-12);
    }
}

#[test]
fn dense_ridge_matches_normal_equations() {
    let (n, k, d) = (4, 2, 3);
    let mut rng = common::rng(12);
    let table: Vec<f64> = (0..n * k * d).map(|_| rng.random_range(-0.5..0.5)).collect();
    let features = TableFeatures::new(n, k, d, table.clone()).unwrap();
    let mdp: TabularMdp64 = random_tabular_mdp(n, k, 1.0, 13).unwrap();
    let data = sample_dataset(&mdp, &Policy::uniform(n, k), 50, 14).unwrap();
    let v = vec![1.0, 2.0, 0.5, 0.0];
    let (w, _) = fit_bellman_target(&data, &features, &VTable::new(v.clone(), 0.7), 0.7, 1.0).unwrap();
    let mut a = vec![vec![0.0; d + 1]; d];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for t in &data.transitions {
        let phi = &table[(t.s * k + t.a) * d..(t.s * k + t.a + 1) * d];
        let y = t.r + 0.7 * v[t.s_next];
        for i in 0..d {
            for j in 0..d {
                a[i][j] += phi[i] * phi[j];
            }
            a[i][d] += phi[i] * y;
        }
    }
    for (x, y) in w.iter().zip(common::gauss(a)) {
        assert_abs_diff_eq!(*x, y, epsilon = 1e-10);
    }
}

#[test]
fn coverage_dominates_random_directions() {
    let (n, k, d) = (3, 2, 3);
    let mut rng = common::rng(15);
    let table: Vec<f64> = (0..n * k * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let features = TableFeatures::new(n, k, d, table.clone()).unwrap();
    let normalize = |xs: Vec<f64>| {
        let t: f64 = xs.iter().sum();
        xs.into_iter().map(|x| x / t).collect::<Vec<_>>()
    };
    let data = normalize((0..n * k).map(|_| rng.random::<f64>() + 0.1).collect());
    let target = normalize((0..n * k).map(|_| rng.random::<f64>()).collect());
    let c = coverage_coefficient(&data, &target, &features).unwrap();
    let quad = |w: &[f64], x: &[f64]| -> f64 {
        (0..n * k)
            .map(|sa| {
                let phi = &table[sa * d..(sa + 1) * d];
                let p: f64 = phi.iter().zip(x).map(|(a, b)| a * b).sum();
                w[sa] * p * p
            })
            .sum()
    };
    let mut best = 0.0f64;
    for _ in 0..200_000 {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        best = best.max(quad(&target, &x) / quad(&data, &x));
    }
    assert!(best <= c * (1.0 + 1e-9));
    assert!(best >= c * 0.99, "random search {best} vs {c}");
}

#[test]
fn quantifier_holds_with_large_bonus() {
    let (n, k, gamma) = (4, 2, 0.8);
    let mdp: TabularMdp64 = random_tabular_mdp(n, k, 1.0, 16).unwrap();
    let data = sample_dataset(&mdp, &Policy::uniform(n, k), 400, 17).unwrap();
    let features = OneHotFeatures::new(n, k);
    let v = VTable::new(vec![1.0; n], gamma);
    let ridge = RidgeState::build(&data, &features, 1.0).unwrap();
    let hit = quantifier_validity(&data, &features, &v, gamma, &ridge, 100.0, &mdp, 0.0).unwrap();
    assert_eq!(hit, 1.0);
    let miss = quantifier_validity(&data, &features, &v, gamma, &ridge, 0.0, &mdp, 0.0).unwrap();
    assert!(miss < 1.0);
}

#[test]
fn exact_model_recovers_optimal_values() {
    let mdp: TabularMdp64 = random_tabular_mdp(10, 3, 1.0, 18).unwrap();
    let opts = SolveOptions::with_tol(1e-12);
    let star = value_iteration(&mdp, 0.95, &opts).unwrap();
    let full = Mask::all_true(10, 3);
    let model = empirical_mdp(&mdp, &full, 0, UnseenPairModel::Resample).unwrap();
    let bcq = bcq_value_iteration(&model, &SupportConstraint::from(&full), 0.95, &opts).unwrap();
    assert!(estimation_error(&bcq.q, &star.q, &full).unwrap() < 1e-9);
}

#[test]
fn single_precision_tracks_double() {
    let mdp64: TabularMdp64 = random_tabular_mdp(12, 3, 1.0, 19).unwrap();
    let mdp32: TabularMdp32 = random_tabular_mdp(12, 3, 1.0, 19).unwrap();
    let v64 = value_iteration(&mdp64, 0.9, &SolveOptions::default()).unwrap();
    let v32 = value_iteration(&mdp32, 0.9, &SolveOptions::default()).unwrap();
    for (a, b) in v64.v.values().iter().zip(v32.v.values()) {
        assert_abs_diff_eq!(*a, *b as f64, epsilon = 1e-3);
    }
}
