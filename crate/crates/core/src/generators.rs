//! Seeded random-instance generation: random MDPs, support masks, masked
//! softmax behavior policies, empirical models and i.i.d. transition datasets.
//!
//! All sampling runs in `f64` on a ChaCha8 stream so instances are identical
//! across platforms and across scalar types.

use crate::error::{Error, Result};
use crate::mdp::{Policy, QTable, TabularMdp};
use crate::scalar::Scalar;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

/// Multiplier used to spread instance indices across the seed space (odd, 2^64 / phi).
pub const INSTANCE_SEED_MULTIPLIER: u64 = 0x9E37_79B9_7F4A_7C15;

/// Per-instance seed derivation for sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExperimentSeed {
    pub base_seed: u64,
    pub instance_index: u64,
}

impl ExperimentSeed {
    pub fn new(base_seed: u64, instance_index: u64) -> Self {
        Self { base_seed, instance_index }
    }

    /// `base_seed XOR (instance_index * INSTANCE_SEED_MULTIPLIER)`.
    pub fn stream_seed(&self) -> u64 {
        self.base_seed ^ self.instance_index.wrapping_mul(INSTANCE_SEED_MULTIPLIER)
    }

    /// Independent sub-seed for one purpose (`tag`) within this instance.
    pub fn derive(&self, tag: u64) -> u64 {
        splitmix64(self.stream_seed() ^ splitmix64(tag))
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub(crate) fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Flat-Dirichlet sample: i.i.d. unit exponentials, normalized.
fn dirichlet_row(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|x| x / total).collect()
}

fn convert<T: Scalar>(xs: Vec<f64>) -> Vec<T> {
    xs.into_iter().map(T::lit).collect()
}

/// Random MDP: rewards uniform on `[0, r_max]`, flat-Dirichlet transition rows,
/// uniform initial distribution.
pub fn random_tabular_mdp<T: Scalar>(
    n_states: usize,
    n_actions: usize,
    r_max: T,
    seed: u64,
) -> Result<TabularMdp<T>> {
    if n_states == 0 || n_actions == 0 {
        return Err(Error::InvalidArgument("n_states and n_actions must be positive".into()));
    }
    let mut rng = rng_from(seed);
    let r_hi = r_max.as_f64();
    let reward: Vec<f64> = (0..n_states * n_actions).map(|_| rng.random::<f64>() * r_hi).collect();
    let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        transition.extend(dirichlet_row(&mut rng, n_states));
    }
    let mu = vec![1.0 / n_states as f64; n_states];
    TabularMdp::new(n_states, n_actions, convert(transition), convert(reward), r_max, convert(mu))
}

/// Boolean `(s, a)` support; every state keeps at least one true action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    n_states: usize,
    n_actions: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(n_states: usize, n_actions: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != n_states * n_actions {
            return Err(Error::Dimension("mask size".into()));
        }
        if let Some(s) = (0..n_states).find(|&s| !bits[s * n_actions..(s + 1) * n_actions].iter().any(|&b| b)) {
            return Err(Error::Validation(format!("mask leaves state {s} without actions")));
        }
        Ok(Self { n_states, n_actions, bits })
    }

    pub fn all_true(n_states: usize, n_actions: usize) -> Self {
        Self { n_states, n_actions, bits: vec![true; n_states * n_actions] }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, s: usize, a: usize) -> bool {
        self.bits[s * self.n_actions + a]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn row(&self, s: usize) -> &[bool] {
        &self.bits[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// Number of true bits, `||mask||_1`.
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_superset_of(&self, other: &Mask) -> bool {
        self.bits.len() == other.bits.len() && self.bits.iter().zip(&other.bits).all(|(&a, &b)| a || !b)
    }
}

/// Masks out `floor(masked_proportion * S * A)` uniformly chosen pairs, then
/// re-enables the lowest action at any state left empty.
pub fn random_mask(n_states: usize, n_actions: usize, masked_proportion: f64, seed: u64) -> Result<Mask> {
    if !(0.0..1.0).contains(&masked_proportion) {
        return Err(Error::InvalidArgument(format!(
            "masked proportion must lie in [0, 1), got {masked_proportion}"
        )));
    }
    let total = n_states * n_actions;
    let n_masked = (masked_proportion * total as f64).floor() as usize;
    if total - n_masked < n_states {
        return Err(Error::InvalidArgument(format!(
            "masking {n_masked} of {total} pairs leaves fewer than {n_states} true bits"
        )));
    }
    let mut rng = rng_from(seed);
    let mut bits = vec![true; total];
    for i in index::sample(&mut rng, total, n_masked) {
        bits[i] = false;
    }
    for s in 0..n_states {
        let row = &mut bits[s * n_actions..(s + 1) * n_actions];
        if !row.iter().any(|&b| b) {
            row[0] = true;
        }
    }
    Mask::new(n_states, n_actions, bits)
}

/// Adds `round(noise_ratio * ||mask||_1)` uniformly chosen pairs to the mask,
/// at least one when `noise_ratio > 0`.
pub fn widen_mask(mask: &Mask, noise_ratio: f64, seed: u64) -> Result<Mask> {
    if !(noise_ratio >= 0.0 && noise_ratio.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise ratio must be nonnegative, got {noise_ratio}")));
    }
    let mut n_add = (noise_ratio * mask.count() as f64).round() as usize;
    if noise_ratio > 0.0 {
        n_add = n_add.max(1);
    }
    let free: Vec<usize> = (0..mask.bits.len()).filter(|&i| !mask.bits[i]).collect();
    if n_add > free.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot add {n_add} pairs, only {} unseen pairs exist",
            free.len()
        )));
    }
    let mut rng = rng_from(seed);
    let mut bits = mask.bits.clone();
    for i in index::sample(&mut rng, free.len(), n_add) {
        bits[free[i]] = true;
    }
    Ok(Mask { n_states: mask.n_states, n_actions: mask.n_actions, bits })
}

/// `pi(a|s) ∝ exp(Q(s,a)) [mask(s,a)]`, computed with per-row max subtraction.
pub fn behavior_policy<T: Scalar>(q_star: &QTable<T>, mask: &Mask) -> Result<Policy<T>> {
    let (n, k) = (q_star.n_states(), q_star.n_actions());
    if mask.n_states != n || mask.n_actions != k {
        return Err(Error::Dimension("mask and Q-table shapes differ".into()));
    }
    let mut probs = vec![T::zero(); n * k];
    for s in 0..n {
        let row = q_star.row(s);
        let allowed = mask.row(s);
        let top = (0..k)
            .filter(|&a| allowed[a])
            .map(|a| row[a])
            .fold(T::lit(f64::NEG_INFINITY), |m, x| m.max(x));
        let mut total = T::zero();
        for a in (0..k).filter(|&a| allowed[a]) {
            let w = (row[a] - top).exp();
            probs[s * k + a] = w;
            total += w;
        }
        for p in &mut probs[s * k..(s + 1) * k] {
            *p /= total;
        }
    }
    Policy::new(n, k, probs)
}

/// What the learner's model holds at pairs outside the data support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnseenPairModel {
    /// Fresh reward and transition row drawn from the generating prior.
    #[default]
    Resample,
    /// Reward `r_max` and a self-loop, i.e. the most optimistic valid model.
    OptimisticSelfLoop,
}

impl std::str::FromStr for UnseenPairModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "resample" => Ok(Self::Resample),
            "optimistic-self-loop" | "self-loop" => Ok(Self::OptimisticSelfLoop),
            other => Err(Error::Parse(format!("unknown unseen-pair model '{other}'"))),
        }
    }
}

impl std::fmt::Display for UnseenPairModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Resample => "resample",
            Self::OptimisticSelfLoop => "optimistic-self-loop",
        })
    }
}

/// Learner's model: exact at seen pairs, replaced per `model` elsewhere.
pub fn empirical_mdp<T: Scalar>(
    true_mdp: &TabularMdp<T>,
    mask: &Mask,
    seed: u64,
    model: UnseenPairModel,
) -> Result<TabularMdp<T>> {
    let (n, k) = (true_mdp.n_states(), true_mdp.n_actions());
    if mask.n_states != n || mask.n_actions != k {
        return Err(Error::Dimension("mask and MDP shapes differ".into()));
    }
    let mut rng = rng_from(seed);
    let mut transition = true_mdp.transitions().to_vec();
    let mut reward = true_mdp.rewards().to_vec();
    let r_hi = true_mdp.r_max().as_f64();
    for s in 0..n {
        for a in 0..k {
            if mask.get(s, a) {
                continue;
            }
            let sa = s * k + a;
            let row = &mut transition[sa * n..(sa + 1) * n];
            match model {
                UnseenPairModel::Resample => {
                    reward[sa] = T::lit(rng.random::<f64>() * r_hi);
                    for (out, p) in row.iter_mut().zip(dirichlet_row(&mut rng, n)) {
                        *out = T::lit(p);
                    }
                }
                UnseenPairModel::OptimisticSelfLoop => {
                    reward[sa] = true_mdp.r_max();
                    row.fill(T::zero());
                    row[s] = T::one();
                }
            }
        }
    }
    TabularMdp::new(n, k, transition, reward, true_mdp.r_max(), true_mdp.init_dist().to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition<T> {
    pub s: usize,
    pub a: usize,
    pub r: T,
    pub s_next: usize,
}

/// Multiset of observed transitions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset<T> {
    pub transitions: Vec<Transition<T>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(transitions: Vec<Transition<T>>) -> Self {
        Self { transitions }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn validate(&self, n_states: usize, n_actions: usize, r_max: T) -> Result<()> {
        for (i, t) in self.transitions.iter().enumerate() {
            if t.s >= n_states || t.s_next >= n_states || t.a >= n_actions {
                return Err(Error::Validation(format!("transition {i} has an index out of range")));
            }
            if !(t.r >= T::zero() && t.r <= r_max) {
                return Err(Error::Validation(format!("transition {i} reward outside [0, r_max]")));
            }
        }
        Ok(())
    }

    /// Visit counts per `(s, a)`.
    pub fn pair_counts(&self, n_states: usize, n_actions: usize) -> Vec<usize> {
        let mut counts = vec![0; n_states * n_actions];
        for t in &self.transitions {
            counts[t.s * n_actions + t.a] += 1;
        }
        counts
    }

    /// Empirical `(s, a)` distribution; all zeros for an empty dataset.
    pub fn pair_frequencies(&self, n_states: usize, n_actions: usize) -> Vec<T> {
        let n = T::lit(self.len().max(1) as f64);
        self.pair_counts(n_states, n_actions)
            .into_iter()
            .map(|c| T::lit(c as f64) / n)
            .collect()
    }
}

fn sample_index<T: Scalar>(rng: &mut ChaCha8Rng, probs: &[T]) -> usize {
    let u = rng.random::<f64>();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        let p = p.as_f64();
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// I.i.d. transitions: `s ~ mu0`, `a ~ behavior(.|s)`, `r = r(s,a)`, `s' ~ P(.|s,a)`.
pub fn sample_dataset<T: Scalar>(
    mdp: &TabularMdp<T>,
    behavior: &Policy<T>,
    n_transitions: usize,
    seed: u64,
) -> Result<Dataset<T>> {
    mdp.check_policy(behavior)?;
    let mut rng = rng_from(seed);
    let transitions = (0..n_transitions)
        .map(|_| {
            let s = sample_index(&mut rng, mdp.init_dist());
            let a = sample_index(&mut rng, behavior.row(s));
            let s_next = sample_index(&mut rng, mdp.row(s, a));
            Transition { s, a, r: mdp.reward(s, a), s_next }
        })
        .collect();
    Ok(Dataset { transitions })
}
