//! Core MDP data types and exact Bellman operators.
//!
//! Storage is dense and row-major: transitions are indexed `(s, a, s')` with the
//! next-state axis contiguous, rewards and action-value tables `(s, a)`.
//! The discount factor is never stored on the model; every operator takes it
//! as an argument.

use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};
use nalgebra::DMatrix;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp<T> {
    n_states: usize,
    n_actions: usize,
    transition: Vec<T>,
    reward: Vec<T>,
    r_max: T,
    init_dist: Vec<T>,
}

/// One violated invariant found by [`TabularMdp::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// A transition row does not sum to one; `deficit = 1 - sum`.
    RowSum { state: usize, action: usize, deficit: f64 },
    NegativeProbability { state: usize, action: usize, next: usize, value: f64 },
    RewardOutOfRange { state: usize, action: usize, value: f64, r_max: f64 },
    InitSum { deficit: f64 },
    NegativeInit { state: usize, value: f64 },
    NonPositiveRmax { value: f64 },
    NonFinite { field: &'static str, index: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RowSum { state, action, deficit } => {
                write!(f, "transition row ({state},{action}) sums to 1 - {deficit:e}")
            }
            Violation::NegativeProbability { state, action, next, value } => {
                write!(f, "transition ({state},{action},{next}) is negative: {value:e}")
            }
            Violation::RewardOutOfRange { state, action, value, r_max } => {
                write!(f, "reward ({state},{action}) = {value} outside [0, {r_max}]")
            }
            Violation::InitSum { deficit } => write!(f, "init_dist sums to 1 - {deficit:e}"),
            Violation::NegativeInit { state, value } => {
                write!(f, "init_dist[{state}] is negative: {value:e}")
            }
            Violation::NonPositiveRmax { value } => write!(f, "r_max = {value} is not positive"),
            Violation::NonFinite { field, index } => write!(f, "{field}[{index}] is not finite"),
        }
    }
}

impl<T: Scalar> TabularMdp<T> {
    /// Builds an MDP without checking invariants beyond shapes. Use
    /// [`TabularMdp::validate`] or [`TabularMdp::new_validated`] for the rest.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<T>,
        reward: Vec<T>,
        r_max: T,
        init_dist: Vec<T>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidArgument(
                "n_states and n_actions must be positive".into(),
            ));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(Error::Dimension(format!(
                "transition has {} entries, expected {}",
                transition.len(),
                n_states * n_actions * n_states
            )));
        }
        if reward.len() != n_states * n_actions {
            return Err(Error::Dimension(format!(
                "reward has {} entries, expected {}",
                reward.len(),
                n_states * n_actions
            )));
        }
        if init_dist.len() != n_states {
            return Err(Error::Dimension(format!(
                "init_dist has {} entries, expected {}",
                init_dist.len(),
                n_states
            )));
        }
        Ok(Self { n_states, n_actions, transition, reward, r_max, init_dist })
    }

    pub fn new_validated(
        n_states: usize,
        n_actions: usize,
        transition: Vec<T>,
        reward: Vec<T>,
        r_max: T,
        init_dist: Vec<T>,
    ) -> Result<Self> {
        let mdp = Self::new(n_states, n_actions, transition, reward, r_max, init_dist)?;
        let report = mdp.validate();
        if let Some(first) = report.first() {
            return Err(Error::Validation(format!(
                "{} invariant violation(s), first: {first}",
                report.len()
            )));
        }
        Ok(mdp)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn r_max(&self) -> T {
        self.r_max
    }

    pub fn reward(&self, s: usize, a: usize) -> T {
        self.reward[s * self.n_actions + a]
    }

    pub fn rewards(&self) -> &[T] {
        &self.reward
    }

    pub fn transitions(&self) -> &[T] {
        &self.transition
    }

    /// Next-state distribution `P(. | s, a)`.
    pub fn row(&self, s: usize, a: usize) -> &[T] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    pub fn init_dist(&self) -> &[T] {
        &self.init_dist
    }

    pub fn with_init_dist(mut self, init_dist: Vec<T>) -> Result<Self> {
        if init_dist.len() != self.n_states {
            return Err(Error::Dimension("init_dist length".into()));
        }
        self.init_dist = init_dist;
        Ok(self)
    }

    /// Value ceiling `r_max / (1 - gamma)`.
    pub fn v_max(&self, gamma: T) -> T {
        self.r_max / (T::one() - gamma)
    }

    /// Lists every invariant violation; an empty report means the MDP is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let tol = T::prob_tol();
        let mut report = Vec::new();
        if !(self.r_max > T::zero()) {
            report.push(Violation::NonPositiveRmax { value: self.r_max.as_f64() });
        }
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let row = self.row(s, a);
                let mut sum = T::zero();
                for (next, &p) in row.iter().enumerate() {
                    if !p.is_finite() {
                        report.push(Violation::NonFinite {
                            field: "transition",
                            index: (s * self.n_actions + a) * self.n_states + next,
                        });
                        continue;
                    }
                    if p < T::zero() {
                        report.push(Violation::NegativeProbability {
                            state: s,
                            action: a,
                            next,
                            value: p.as_f64(),
                        });
                    }
                    sum += p;
                }
                let deficit = T::one() - sum;
                if deficit.absval() > tol {
                    report.push(Violation::RowSum { state: s, action: a, deficit: deficit.as_f64() });
                }
                let r = self.reward(s, a);
                if !r.is_finite() {
                    report.push(Violation::NonFinite { field: "reward", index: s * self.n_actions + a });
                } else if r < T::zero() || r > self.r_max {
                    report.push(Violation::RewardOutOfRange {
                        state: s,
                        action: a,
                        value: r.as_f64(),
                        r_max: self.r_max.as_f64(),
                    });
                }
            }
        }
        let mut sum = T::zero();
        for (s, &p) in self.init_dist.iter().enumerate() {
            if !p.is_finite() {
                report.push(Violation::NonFinite { field: "init_dist", index: s });
                continue;
            }
            if p < T::zero() {
                report.push(Violation::NegativeInit { state: s, value: p.as_f64() });
            }
            sum += p;
        }
        let deficit = T::one() - sum;
        if deficit.absval() > tol {
            report.push(Violation::InitSum { deficit: deficit.as_f64() });
        }
        report
    }

    fn check_gamma(gamma: T) -> Result<()> {
        if !(gamma >= T::zero() && gamma < T::one()) {
            return Err(Error::InvalidArgument(format!(
                "discount must lie in [0, 1), got {}",
                gamma.as_f64()
            )));
        }
        Ok(())
    }

    /// `(B_gamma v)(s, a) = r(s, a) + gamma * sum_s' P(s'|s,a) v(s')`.
    pub fn bellman_operator(&self, v: &VTable<T>, gamma: T) -> Result<QTable<T>> {
        self.check_values(v.values())?;
        Self::check_gamma(gamma)?;
        let mut q = vec![T::zero(); self.n_states * self.n_actions];
        self.bellman_into(v.values(), gamma, &mut q);
        Ok(QTable::from_vec(self.n_states, self.n_actions, q, gamma))
    }

    /// Unchecked backup into a preallocated `(s, a)` buffer.
    pub(crate) fn bellman_into(&self, v: &[T], gamma: T, q: &mut [T]) {
        for (sa, (out, row)) in q
            .iter_mut()
            .zip(self.transition.chunks_exact(self.n_states))
            .enumerate()
        {
            *out = self.reward[sa] + gamma * dot(row, v);
        }
    }

    /// `(T_pi v)(s) = sum_a pi(a|s) [r(s,a) + gamma * P(.|s,a) . v]`.
    pub fn policy_bellman_operator(
        &self,
        pi: &Policy<T>,
        v: &VTable<T>,
        gamma: T,
    ) -> Result<VTable<T>> {
        self.check_values(v.values())?;
        self.check_policy(pi)?;
        Self::check_gamma(gamma)?;
        let mut q = vec![T::zero(); self.n_states * self.n_actions];
        self.bellman_into(v.values(), gamma, &mut q);
        let out = (0..self.n_states)
            .map(|s| dot(pi.row(s), &q[s * self.n_actions..(s + 1) * self.n_actions]))
            .collect();
        Ok(VTable::new(out, gamma))
    }

    pub(crate) fn check_values(&self, v: &[T]) -> Result<()> {
        if v.len() != self.n_states {
            return Err(Error::Dimension(format!(
                "value table has {} states, MDP has {}",
                v.len(),
                self.n_states
            )));
        }
        Ok(())
    }

    pub(crate) fn check_policy(&self, pi: &Policy<T>) -> Result<()> {
        if pi.n_states() != self.n_states || pi.n_actions() != self.n_actions {
            return Err(Error::Dimension(format!(
                "policy is {}x{}, MDP is {}x{}",
                pi.n_states(),
                pi.n_actions(),
                self.n_states,
                self.n_actions
            )));
        }
        Ok(())
    }

    /// Policy-averaged reward vector and state-to-state kernel.
    pub(crate) fn policy_kernel(&self, pi: &Policy<T>) -> (Vec<T>, DMatrix<T>) {
        let n = self.n_states;
        let mut r_pi = vec![T::zero(); n];
        let mut p_pi = DMatrix::<T>::zeros(n, n);
        for s in 0..n {
            for a in 0..self.n_actions {
                let w = pi.prob(s, a);
                if w == T::zero() {
                    continue;
                }
                r_pi[s] += w * self.reward(s, a);
                for (next, &p) in self.row(s, a).iter().enumerate() {
                    p_pi[(s, next)] += w * p;
                }
            }
        }
        (r_pi, p_pi)
    }
}

/// Feature-based MDP: `P(s'|s,a) = phi(s,a)^T M psi(s')`, `r(s,a) = phi(s,a)^T theta`,
/// over finite enumerable state and action sets.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMdp<T> {
    n_states: usize,
    n_actions: usize,
    d: usize,
    l: usize,
    /// `(s, a) -> R^d`, row-major `[(s * A + a) * d + i]`.
    phi: Vec<T>,
    /// `s' -> R^l`, row-major `[s' * l + j]`.
    psi: Vec<T>,
    /// `d x l`, row-major.
    m: Vec<T>,
    theta: Vec<T>,
    r_max: T,
}

/// Violations reported by [`LinearMdp::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum LinearViolation {
    PhiNorm { state: usize, action: usize, norm: f64 },
    PsiNorm { state: usize, norm: f64 },
    SpectralNorm { norm: f64, limit: f64 },
    ThetaNorm { norm: f64, limit: f64 },
    InducedRow { state: usize, action: usize, deficit: f64 },
    InducedNegative { state: usize, action: usize, next: usize, value: f64 },
}

impl<T: Scalar> LinearMdp<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_states: usize,
        n_actions: usize,
        d: usize,
        l: usize,
        phi: Vec<T>,
        psi: Vec<T>,
        m: Vec<T>,
        theta: Vec<T>,
        r_max: T,
    ) -> Result<Self> {
        if phi.len() != n_states * n_actions * d
            || psi.len() != n_states * l
            || m.len() != d * l
            || theta.len() != d
        {
            return Err(Error::Dimension("linear MDP component sizes".into()));
        }
        Ok(Self { n_states, n_actions, d, l, phi, psi, m, theta, r_max })
    }

    /// One-hot embedding of a tabular MDP: `phi(s,a) = e_{sA+a}`, `psi(s') = e_{s'}`,
    /// `M` holds the transition rows and `theta` the rewards.
    pub fn from_tabular_one_hot(mdp: &TabularMdp<T>) -> Self {
        let (n, k) = (mdp.n_states(), mdp.n_actions());
        let d = n * k;
        let mut phi = vec![T::zero(); d * d];
        for i in 0..d {
            phi[i * d + i] = T::one();
        }
        let mut psi = vec![T::zero(); n * n];
        for s in 0..n {
            psi[s * n + s] = T::one();
        }
        Self {
            n_states: n,
            n_actions: k,
            d,
            l: n,
            phi,
            psi,
            m: mdp.transitions().to_vec(),
            theta: mdp.rewards().to_vec(),
            r_max: mdp.r_max(),
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn phi(&self, s: usize, a: usize) -> &[T] {
        let start = (s * self.n_actions + a) * self.d;
        &self.phi[start..start + self.d]
    }

    pub fn psi(&self, s: usize) -> &[T] {
        &self.psi[s * self.l..(s + 1) * self.l]
    }

    pub fn induced_transition(&self, s: usize, a: usize) -> Vec<T> {
        let phi = self.phi(s, a);
        // phi^T M, then dotted with each psi(s').
        let mut row_m = vec![T::zero(); self.l];
        for (i, &p) in phi.iter().enumerate() {
            if p == T::zero() {
                continue;
            }
            for (j, out) in row_m.iter_mut().enumerate() {
                *out += p * self.m[i * self.l + j];
            }
        }
        (0..self.n_states).map(|next| dot(&row_m, self.psi(next))).collect()
    }

    pub fn induced_reward(&self, s: usize, a: usize) -> T {
        dot(self.phi(s, a), &self.theta)
    }

    pub fn validate(&self) -> Vec<LinearViolation> {
        let mut report = Vec::new();
        let one = T::one();
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let norm = self.phi(s, a).iter().fold(T::zero(), |m, x| m.max(x.absval()));
                if norm > one {
                    report.push(LinearViolation::PhiNorm { state: s, action: a, norm: norm.as_f64() });
                }
            }
        }
        for s in 0..self.n_states {
            let norm = self.psi(s).iter().fold(T::zero(), |m, x| m.max(x.absval()));
            if norm > one {
                report.push(LinearViolation::PsiNorm { state: s, norm: norm.as_f64() });
            }
        }
        let limit = T::lit(self.d as f64).sqrt();
        let m = DMatrix::from_row_slice(self.d, self.l, &self.m);
        let spectral = m.singular_values().iter().fold(T::zero(), |acc, &x| acc.max(x));
        if spectral > limit * (one + T::derived_prob_tol()) {
            report.push(LinearViolation::SpectralNorm { norm: spectral.as_f64(), limit: limit.as_f64() });
        }
        let theta_norm = dot(&self.theta, &self.theta).sqrt();
        if theta_norm > limit * (one + T::derived_prob_tol()) {
            report.push(LinearViolation::ThetaNorm { norm: theta_norm.as_f64(), limit: limit.as_f64() });
        }
        let tol = T::derived_prob_tol();
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let row = self.induced_transition(s, a);
                let sum = row.iter().fold(T::zero(), |acc, &p| acc + p);
                if (one - sum).absval() > tol {
                    report.push(LinearViolation::InducedRow {
                        state: s,
                        action: a,
                        deficit: (one - sum).as_f64(),
                    });
                }
                for (next, &p) in row.iter().enumerate() {
                    if p < -tol {
                        report.push(LinearViolation::InducedNegative {
                            state: s,
                            action: a,
                            next,
                            value: p.as_f64(),
                        });
                    }
                }
            }
        }
        report
    }

    /// Materializes the induced tabular model with a uniform initial distribution.
    pub fn to_tabular(&self) -> Result<TabularMdp<T>> {
        let mut transition = Vec::with_capacity(self.n_states * self.n_actions * self.n_states);
        let mut reward = Vec::with_capacity(self.n_states * self.n_actions);
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                transition.extend(self.induced_transition(s, a));
                reward.push(self.induced_reward(s, a));
            }
        }
        let mu = vec![T::one() / T::lit(self.n_states as f64); self.n_states];
        TabularMdp::new(self.n_states, self.n_actions, transition, reward, self.r_max, mu)
    }
}

/// Stochastic or deterministic policy, rows are action distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy<T> {
    n_states: usize,
    n_actions: usize,
    probs: Vec<T>,
    deterministic: bool,
}

impl<T: Scalar> Policy<T> {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<T>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::Dimension("policy table size".into()));
        }
        let tol = T::prob_tol();
        let mut deterministic = true;
        for (s, row) in probs.chunks_exact(n_actions).enumerate() {
            let mut sum = T::zero();
            let mut ones = 0;
            for &p in row {
                if !(p >= T::zero()) {
                    return Err(Error::Validation(format!("policy row {s} has a negative entry")));
                }
                if p == T::one() {
                    ones += 1;
                }
                sum += p;
            }
            if (sum - T::one()).absval() > tol {
                return Err(Error::Validation(format!(
                    "policy row {s} sums to {}",
                    sum.as_f64()
                )));
            }
            if ones != 1 {
                deterministic = false;
            }
        }
        Ok(Self { n_states, n_actions, probs, deterministic })
    }

    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Result<Self> {
        let n_states = actions.len();
        let mut probs = vec![T::zero(); n_states * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::InvalidArgument(format!("action {a} out of range at state {s}")));
            }
            probs[s * n_actions + a] = T::one();
        }
        Ok(Self { n_states, n_actions, probs, deterministic: true })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let p = T::one() / T::lit(n_actions as f64);
        Self {
            n_states,
            n_actions,
            probs: vec![p; n_states * n_actions],
            deterministic: n_actions == 1,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prob(&self, s: usize, a: usize) -> T {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[T] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn is_deterministic(&self) -> bool {
        self.deterministic
    }

    /// The chosen action at each state, for deterministic policies.
    pub fn actions(&self) -> Option<Vec<usize>> {
        if !self.deterministic {
            return None;
        }
        Some(
            (0..self.n_states)
                .map(|s| self.row(s).iter().position(|&p| p == T::one()).unwrap_or(0))
                .collect(),
        )
    }
}

/// Dense action-value table.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable<T> {
    n_states: usize,
    n_actions: usize,
    values: Vec<T>,
    gamma_used: T,
}

impl<T: Scalar> QTable<T> {
    pub fn from_vec(n_states: usize, n_actions: usize, values: Vec<T>, gamma_used: T) -> Self {
        assert_eq!(values.len(), n_states * n_actions, "q-table size");
        Self { n_states, n_actions, values, gamma_used }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, s: usize, a: usize) -> T {
        self.values[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[T] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn gamma_used(&self) -> T {
        self.gamma_used
    }

    /// State values `max_a Q(s, a)`.
    pub fn max_values(&self) -> VTable<T> {
        let v = (0..self.n_states)
            .map(|s| self.row(s).iter().copied().fold(T::lit(f64::NEG_INFINITY), |m, x| m.max(x)))
            .collect();
        VTable::new(v, self.gamma_used)
    }

    /// Deterministic greedy policy; ties go to the lowest action index.
    pub fn greedy(&self) -> Policy<T> {
        let actions: Vec<usize> = (0..self.n_states).map(|s| argmax_first(self.row(s))).collect();
        Policy::deterministic(self.n_actions, &actions).expect("greedy actions in range")
    }

    /// True when every entry lies in `[0, r_max / (1 - gamma_used)]` up to `slack`.
    pub fn within_vmax(&self, r_max: T, slack: T) -> bool {
        let hi = r_max / (T::one() - self.gamma_used) + slack;
        self.values.iter().all(|&x| x >= -slack && x <= hi)
    }
}

/// Dense state-value table.
#[derive(Debug, Clone, PartialEq)]
pub struct VTable<T> {
    values: Vec<T>,
    gamma_used: T,
}

impl<T: Scalar> VTable<T> {
    pub fn new(values: Vec<T>, gamma_used: T) -> Self {
        Self { values, gamma_used }
    }

    pub fn zeros(n_states: usize, gamma_used: T) -> Self {
        Self { values: vec![T::zero(); n_states], gamma_used }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn get(&self, s: usize) -> T {
        self.values[s]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn gamma_used(&self) -> T {
        self.gamma_used
    }

    pub fn within_vmax(&self, r_max: T, slack: T) -> bool {
        let hi = r_max / (T::one() - self.gamma_used) + slack;
        self.values.iter().all(|&x| x >= -slack && x <= hi)
    }
}

pub(crate) fn argmax_first<T: Scalar>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_state(r: f64) -> TabularMdp<f64> {
        TabularMdp::new(1, 1, vec![1.0], vec![r], 1.0, vec![1.0]).unwrap()
    }

    #[test]
    fn identity_mdp_is_valid() {
        assert!(one_state(0.5).validate().is_empty());
    }

    #[test]
    fn short_row_is_reported() {
        let mdp = TabularMdp::new(2, 1, vec![0.5, 0.4, 0.0, 1.0], vec![0.1, 0.2], 1.0, vec![0.5, 0.5])
            .unwrap();
        let report = mdp.validate();
        assert_eq!(report.len(), 1);
        match report[0] {
            Violation::RowSum { state, action, deficit } => {
                assert_eq!((state, action), (0, 0));
                assert!((deficit - 0.1).abs() < 1e-12);
            }
            ref other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_reward_is_reported() {
        let mdp = one_state(-0.1);
        let report = mdp.validate();
        assert!(matches!(report[..], [Violation::RewardOutOfRange { state: 0, action: 0, .. }]));
    }

    #[test]
    fn gamma_zero_returns_rewards() {
        let mdp = TabularMdp::new(
            2,
            2,
            vec![0.3, 0.7, 1.0, 0.0, 0.5, 0.5, 0.0, 1.0],
            vec![0.1, 0.9, 0.4, 0.2],
            1.0,
            vec![0.5, 0.5],
        )
        .unwrap();
        let q = mdp.bellman_operator(&VTable::new(vec![3.0, -7.0], 0.0), 0.0).unwrap();
        assert_eq!(q.values(), mdp.rewards());
    }

    #[test]
    fn single_state_backup() {
        let q = one_state(1.0).bellman_operator(&VTable::new(vec![2.0], 0.5), 0.5).unwrap();
        assert_eq!(q.values(), &[2.0]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let err = one_state(1.0).bellman_operator(&VTable::new(vec![0.0, 0.0], 0.5), 0.5);
        assert!(matches!(err, Err(Error::Dimension(_))));
    }

    #[test]
    fn deterministic_policy_backup_at_gamma_zero() {
        let mdp = TabularMdp::new(
            2,
            2,
            vec![0.3, 0.7, 1.0, 0.0, 0.5, 0.5, 0.0, 1.0],
            vec![0.1, 0.9, 0.4, 0.2],
            1.0,
            vec![0.5, 0.5],
        )
        .unwrap();
        let pi = Policy::deterministic(2, &[1, 0]).unwrap();
        let v = mdp.policy_bellman_operator(&pi, &VTable::new(vec![5.0, 5.0], 0.0), 0.0).unwrap();
        assert_eq!(v.values(), &[0.9, 0.4]);
    }

    #[test]
    fn uniform_policy_on_symmetric_mdp_is_constant() {
        let n = 3;
        let k = 2;
        let transition = vec![1.0 / 3.0; n * k * n];
        let mdp = TabularMdp::<f64>::new(n, k, transition, vec![0.7; n * k], 1.0, vec![1.0 / 3.0; n]).unwrap();
        let v = mdp
            .policy_bellman_operator(&Policy::uniform(n, k), &VTable::zeros(n, 0.9), 0.9)
            .unwrap();
        for &x in v.values() {
            assert!((x - 0.7).abs() < 1e-15);
        }
    }

    #[test]
    fn greedy_ties_pick_lowest_index() {
        let q = QTable::from_vec(2, 3, vec![1.0, 1.0, 0.0, 0.0, 2.0, 2.0], 0.5);
        assert_eq!(q.greedy().actions().unwrap(), vec![0, 1]);
    }

    #[test]
    fn policy_rejects_bad_rows() {
        assert!(Policy::new(1, 2, vec![0.5, 0.6]).is_err());
        assert!(Policy::new(1, 2, vec![-0.5, 1.5]).is_err());
        let p = Policy::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!(p.is_deterministic());
    }

    #[test]
    fn one_hot_linear_embedding_is_valid() {
        let mdp = TabularMdp::new(
            2,
            2,
            vec![0.3, 0.7, 1.0, 0.0, 0.5, 0.5, 0.0, 1.0],
            vec![0.1, 0.9, 0.4, 0.2],
            1.0,
            vec![0.5, 0.5],
        )
        .unwrap();
        let lin = LinearMdp::from_tabular_one_hot(&mdp);
        assert!(lin.validate().is_empty(), "{:?}", lin.validate());
        let back = lin.to_tabular().unwrap();
        assert_eq!(back.transitions(), mdp.transitions());
        assert_eq!(back.rewards(), mdp.rewards());
    }

    #[test]
    fn linear_violations_are_reported() {
        // phi out of the unit box and an induced row that does not normalize.
        let lin = LinearMdp::new(1, 1, 1, 1, vec![2.0], vec![1.0], vec![1.0], vec![0.5], 1.0).unwrap();
        let report = lin.validate();
        assert!(report.iter().any(|v| matches!(v, LinearViolation::PhiNorm { .. })));
        assert!(report.iter().any(|v| matches!(v, LinearViolation::InducedRow { .. })));
    }
}
