#![allow(clippy::needless_range_loop)]
#![allow(dead_code)]

use offrl::{Policy, QTable, TabularMdp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Row-stochastic policy with uniform-then-normalized rows.
pub fn random_policy(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Policy<f64> {
    let mut probs = Vec::with_capacity(n * k);
    for _ in 0..n {
        let row: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
        let total: f64 = row.iter().sum();
        probs.extend(row.into_iter().map(|x| x / total));
    }
    Policy::new(n, k, probs).unwrap()
}

/// Small dense MDP drawn directly, independent of the library generator.
pub fn raw_mdp(rng: &mut ChaCha8Rng, n: usize, k: usize, r_max: f64) -> TabularMdp<f64> {
    let mut transition = Vec::with_capacity(n * k * n);
    for _ in 0..n * k {
        let row: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let total: f64 = row.iter().sum();
        transition.extend(row.into_iter().map(|x| x / total));
    }
    let reward = (0..n * k).map(|_| rng.random::<f64>() * r_max).collect();
    TabularMdp::new(n, k, transition, reward, r_max, vec![1.0 / n as f64; n]).unwrap()
}

/// `r + gamma P v` by explicit summation.
pub fn brute_backup(mdp: &TabularMdp<f64>, v: &[f64], gamma: f64) -> Vec<f64> {
    let (n, k) = (mdp.n_states(), mdp.n_actions());
    let mut q = vec![0.0; n * k];
    for s in 0..n {
        for a in 0..k {
            let mut acc = 0.0;
            for (sp, &p) in mdp.row(s, a).iter().enumerate() {
                acc += p * v[sp];
            }
            q[s * k + a] = mdp.reward(s, a) + gamma * acc;
        }
    }
    q
}

pub fn q_table(mdp: &TabularMdp<f64>, q: Vec<f64>, gamma: f64) -> QTable<f64> {
    QTable::from_vec(mdp.n_states(), mdp.n_actions(), q, gamma)
}

/// Policy evaluation by dense Gaussian elimination on `(I - gamma P_pi) v = r_pi`.
pub fn solve_policy_value(mdp: &TabularMdp<f64>, pi: &Policy<f64>, gamma: f64) -> Vec<f64> {
    let (n, k) = (mdp.n_states(), mdp.n_actions());
    let mut a = vec![vec![0.0; n + 1]; n];
    for s in 0..n {
        a[s][s] = 1.0;
        for act in 0..k {
            let w = pi.prob(s, act);
            a[s][n] += w * mdp.reward(s, act);
            for (sp, &p) in mdp.row(s, act).iter().enumerate() {
                a[s][sp] -= gamma * w * p;
            }
        }
    }
    gauss(a)
}

pub fn gauss(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                if f != 0.0 {
                    for c in col..=n {
                        a[row][c] -= f * a[col][c];
                    }
                }
            }
        }
    }
    (0..n).map(|i| a[i][n] / a[i][i]).collect()
}
