//! Pessimistic value iteration for linear MDPs.
//!
//! The empirical Bellman operator is a ridge regression of
//! `r + gamma V(s')` on the features `phi(s, a)`; the pessimism penalty is the
//! elliptical bonus `beta * sqrt(phi^T Lambda^{-1} phi)`. Both use a single
//! Cholesky factorization of `Lambda = lambda I + sum phi phi^T`, which depends
//! only on the data and is computed once per run.

use crate::error::{Error, Result};
use crate::generators::Dataset;
use crate::mdp::{LinearMdp, Policy, QTable, TabularMdp, VTable};
use crate::scalar::{dot, sup_diff, Scalar};
use crate::solvers::{check_gamma, policy_evaluation_exact, solve_discounted, value_iteration, SolveOptions};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Known feature map over a finite `(s, a)` domain.
pub trait FeatureMap<T: Scalar>: Sync {
    fn dim(&self) -> usize;
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;

    /// Writes `phi(s, a)` into `out` (length `dim`).
    fn write(&self, s: usize, a: usize, out: &mut [T]);

    /// For indicator features, the single nonzero coordinate.
    fn one_hot_index(&self, _s: usize, _a: usize) -> Option<usize> {
        None
    }

    fn features(&self, s: usize, a: usize) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim()];
        self.write(s, a, &mut out);
        out
    }
}

/// Tabular features: `phi(s, a) = e_{s * A + a}`, `d = S * A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OneHotFeatures {
    pub n_states: usize,
    pub n_actions: usize,
}

impl OneHotFeatures {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self { n_states, n_actions }
    }
}

impl<T: Scalar> FeatureMap<T> for OneHotFeatures {
    fn dim(&self) -> usize {
        self.n_states * self.n_actions
    }

    fn n_states(&self) -> usize {
        self.n_states
    }

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn write(&self, s: usize, a: usize, out: &mut [T]) {
        out.fill(T::zero());
        out[s * self.n_actions + a] = T::one();
    }

    fn one_hot_index(&self, s: usize, a: usize) -> Option<usize> {
        Some(s * self.n_actions + a)
    }
}

/// Arbitrary dense feature table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableFeatures<T> {
    n_states: usize,
    n_actions: usize,
    dim: usize,
    table: Vec<T>,
}

impl<T: Scalar> TableFeatures<T> {
    pub fn new(n_states: usize, n_actions: usize, dim: usize, table: Vec<T>) -> Result<Self> {
        if table.len() != n_states * n_actions * dim {
            return Err(Error::Dimension("feature table size".into()));
        }
        if table.iter().any(|x| x.absval() > T::one()) {
            return Err(Error::Validation("features must satisfy ||phi||_inf <= 1".into()));
        }
        Ok(Self { n_states, n_actions, dim, table })
    }

    pub fn from_linear_mdp(mdp: &LinearMdp<T>) -> Result<Self> {
        let mut table = Vec::with_capacity(mdp.n_states() * mdp.n_actions() * mdp.d());
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                table.extend_from_slice(mdp.phi(s, a));
            }
        }
        Self::new(mdp.n_states(), mdp.n_actions(), mdp.d(), table)
    }
}

impl<T: Scalar> FeatureMap<T> for TableFeatures<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn n_states(&self) -> usize {
        self.n_states
    }

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn write(&self, s: usize, a: usize, out: &mut [T]) {
        let start = (s * self.n_actions + a) * self.dim;
        out.copy_from_slice(&self.table[start..start + self.dim]);
    }
}

/// Ridge regression state: the Gram matrix, its factorization and the current
/// regression target `sum_tau phi_tau (r_tau + gamma V(s'_tau))`.
#[derive(Debug, Clone)]
pub struct RidgeState<T: Scalar> {
    pub lambda_reg: T,
    gram: DMatrix<T>,
    factor: Cholesky<T, Dyn>,
    pub target_accum: DVector<T>,
}

impl<T: Scalar> RidgeState<T> {
    /// Builds `Lambda = lambda I + sum_tau phi_tau phi_tau^T` from scratch.
    pub fn build<F: FeatureMap<T> + ?Sized>(dataset: &Dataset<T>, features: &F, lambda_reg: T) -> Result<Self> {
        if !(lambda_reg > T::zero()) {
            return Err(Error::InvalidArgument("lambda_reg must be positive".into()));
        }
        let d = features.dim();
        let mut gram = DMatrix::<T>::identity(d, d) * lambda_reg;
        let mut phi = vec![T::zero(); d];
        for t in &dataset.transitions {
            check_indices(features, t.s, t.a)?;
            if let Some(i) = features.one_hot_index(t.s, t.a) {
                gram[(i, i)] += T::one();
                continue;
            }
            features.write(t.s, t.a, &mut phi);
            for i in 0..d {
                if phi[i] == T::zero() {
                    continue;
                }
                for j in 0..d {
                    gram[(i, j)] += phi[i] * phi[j];
                }
            }
        }
        let factor = Cholesky::new(gram.clone()).ok_or_else(|| Error::Singular("ridge Gram matrix".into()))?;
        Ok(Self { lambda_reg, gram, factor, target_accum: DVector::zeros(d) })
    }

    pub fn gram(&self) -> &DMatrix<T> {
        &self.gram
    }

    /// Recomputes the regression target against `v_hat`.
    pub fn set_targets<F: FeatureMap<T> + ?Sized>(
        &mut self,
        dataset: &Dataset<T>,
        features: &F,
        v_hat: &[T],
        gamma: T,
    ) {
        let d = features.dim();
        self.target_accum.fill(T::zero());
        let mut phi = vec![T::zero(); d];
        for t in &dataset.transitions {
            let y = t.r + gamma * v_hat[t.s_next];
            if let Some(i) = features.one_hot_index(t.s, t.a) {
                self.target_accum[i] += y;
                continue;
            }
            features.write(t.s, t.a, &mut phi);
            for (acc, &p) in self.target_accum.iter_mut().zip(&phi) {
                *acc += p * y;
            }
        }
    }

    /// `w = Lambda^{-1} target_accum`.
    pub fn solve_weights(&self) -> DVector<T> {
        self.factor.solve(&self.target_accum)
    }

    /// `phi^T Lambda^{-1} phi`.
    pub fn quadratic_form(&self, phi: &[T]) -> T {
        let x = DVector::from_column_slice(phi);
        let y = self.factor.solve(&x);
        x.dot(&y)
    }
}

fn check_indices<T: Scalar, F: FeatureMap<T> + ?Sized>(features: &F, s: usize, a: usize) -> Result<()> {
    if s >= features.n_states() || a >= features.n_actions() {
        return Err(Error::Validation(format!("transition ({s},{a}) outside the feature domain")));
    }
    Ok(())
}

/// Closed-form ridge fit of the empirical Bellman target. The estimate at any
/// pair is `phi(s,a)^T w`.
pub fn fit_bellman_target<T: Scalar, F: FeatureMap<T> + ?Sized>(
    dataset: &Dataset<T>,
    features: &F,
    v_hat: &VTable<T>,
    gamma: T,
    lambda_reg: T,
) -> Result<(Vec<T>, RidgeState<T>)> {
    check_gamma(gamma)?;
    if v_hat.len() != features.n_states() {
        return Err(Error::Dimension("v_hat length differs from the state count".into()));
    }
    let mut ridge = RidgeState::build(dataset, features, lambda_reg)?;
    for t in &dataset.transitions {
        if t.s_next >= features.n_states() {
            return Err(Error::Validation("next state outside the feature domain".into()));
        }
    }
    ridge.set_targets(dataset, features, v_hat.values(), gamma);
    let w = ridge.solve_weights().iter().copied().collect();
    Ok((w, ridge))
}

/// Empirical Bellman values `phi(s,a)^T w` over the whole domain.
pub fn linear_values<T: Scalar, F: FeatureMap<T> + ?Sized>(features: &F, w: &[T]) -> Vec<T> {
    let (n, k) = (features.n_states(), features.n_actions());
    let mut phi = vec![T::zero(); features.dim()];
    let mut out = Vec::with_capacity(n * k);
    for s in 0..n {
        for a in 0..k {
            if let Some(i) = features.one_hot_index(s, a) {
                out.push(w[i]);
            } else {
                features.write(s, a, &mut phi);
                out.push(dot(&phi, w));
            }
        }
    }
    out
}

/// `Gamma(s,a) = beta sqrt(phi^T Lambda^{-1} phi)` over the whole domain.
pub fn uncertainty_bonus<T: Scalar, F: FeatureMap<T> + ?Sized>(
    features: &F,
    ridge: &RidgeState<T>,
    beta: T,
) -> Result<Vec<T>> {
    if !(beta >= T::zero()) {
        return Err(Error::InvalidArgument("beta must be nonnegative".into()));
    }
    let (n, k) = (features.n_states(), features.n_actions());
    let mut phi = vec![T::zero(); features.dim()];
    let mut out = Vec::with_capacity(n * k);
    for s in 0..n {
        for a in 0..k {
            let quad = if let Some(i) = features.one_hot_index(s, a) {
                // Lambda is diagonal for indicator features.
                T::one() / ridge.gram[(i, i)]
            } else {
                features.write(s, a, &mut phi);
                ridge.quadratic_form(&phi)
            };
            out.push(beta * quad.max(T::zero()).sqrt());
        }
    }
    Ok(out)
}

/// `(beta, zeta)` with `zeta = ln(4 d N / ((1 - gamma) xi))` and
/// `beta = c d r_max sqrt(zeta) / (1 - gamma)`.
pub fn theoretical_beta<T: Scalar>(d: usize, r_max: T, gamma: T, n: usize, xi: T, c: T) -> Result<(T, T)> {
    check_gamma(gamma)?;
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument("d and N must be at least 1".into()));
    }
    if !(xi > T::zero() && xi < T::one()) || !(c > T::zero()) {
        return Err(Error::InvalidArgument("require 0 < xi < 1 and c > 0".into()));
    }
    let one = T::one();
    let arg = T::lit(4.0) * T::lit(d as f64) * T::lit(n as f64) / ((one - gamma) * xi);
    if !(arg > T::zero()) {
        return Err(Error::InvalidArgument("nonpositive log argument".into()));
    }
    let zeta = arg.ln();
    let beta = c * T::lit(d as f64) * r_max * zeta.sqrt() / (one - gamma);
    Ok((beta, zeta))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeviConfig<T> {
    pub gamma: T,
    pub beta: T,
    pub lambda_reg: T,
    /// Confidence level used when `beta` comes from [`theoretical_beta`].
    pub xi: T,
    pub r_max: T,
    pub opts: SolveOptions<T>,
    pub clip_vmax: bool,
}

impl<T: Scalar> PeviConfig<T> {
    pub fn new(gamma: T, beta: T, r_max: T) -> Self {
        Self {
            gamma,
            beta,
            lambda_reg: T::one(),
            xi: T::lit(0.1),
            r_max,
            opts: SolveOptions::default(),
            clip_vmax: true,
        }
    }

    fn validate(&self) -> Result<()> {
        check_gamma(self.gamma)?;
        self.opts.validate()?;
        if !(self.beta >= T::zero()) {
            return Err(Error::InvalidArgument("beta must be nonnegative".into()));
        }
        if !(self.lambda_reg > T::zero()) {
            return Err(Error::InvalidArgument("lambda_reg must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PeviResult<T: Scalar> {
    pub q: QTable<T>,
    pub v: VTable<T>,
    pub policy: Policy<T>,
    pub bonus: Vec<T>,
    pub ridge: RidgeState<T>,
    pub iterations: usize,
    /// `||w||_2` for every refit, in order.
    pub weight_norms: Vec<T>,
}

/// Runs the pessimistic value iteration loop: refit `w` against the current
/// `V`, set `Q = phi^T w - Gamma` (clipped to `[0, V_max]` when enabled), act
/// greedily and set `V = max_a Q`, until `V` moves by at most `tol`.
pub fn pevi<T: Scalar, F: FeatureMap<T> + ?Sized>(
    dataset: &Dataset<T>,
    features: &F,
    cfg: &PeviConfig<T>,
) -> Result<PeviResult<T>> {
    cfg.validate()?;
    let (n, k) = (features.n_states(), features.n_actions());
    for t in &dataset.transitions {
        if t.s_next >= n {
            return Err(Error::Validation("next state outside the feature domain".into()));
        }
    }
    let mut ridge = RidgeState::build(dataset, features, cfg.lambda_reg)?;
    let bonus = uncertainty_bonus(features, &ridge, cfg.beta)?;
    let v_max = cfg.r_max / (T::one() - cfg.gamma);
    let cap = cfg.opts.iteration_cap(cfg.gamma, cfg.r_max);

    let mut v = vec![T::zero(); n];
    let mut weight_norms = Vec::new();
    for iter in 1..=cap {
        ridge.set_targets(dataset, features, &v, cfg.gamma);
        let w: Vec<T> = ridge.solve_weights().iter().copied().collect();
        weight_norms.push(dot(&w, &w).sqrt());
        let mut q = linear_values(features, &w);
        for (x, &b) in q.iter_mut().zip(&bonus) {
            *x -= b;
            if cfg.clip_vmax {
                *x = x.max(T::zero()).min(v_max);
            }
        }
        let q = QTable::from_vec(n, k, q, cfg.gamma);
        let next = q.max_values();
        let change = sup_diff(&v, next.values());
        v = next.values().to_vec();
        if change <= cfg.opts.tol {
            let policy = q.greedy();
            return Ok(PeviResult {
                q,
                v: VTable::new(v, cfg.gamma),
                policy,
                bonus,
                ridge,
                iterations: iter,
                weight_norms,
            });
        }
    }
    Err(Error::NotConverged {
        solver: "pevi",
        iters: cap,
        residual: f64::NAN,
    })
}

/// Fraction of pairs where `|(B_hat V)(s,a) - (B V)(s,a)| <= Gamma(s,a) + slack`,
/// with `B` the exact Bellman operator of `true_mdp`.
#[allow(clippy::too_many_arguments)]
pub fn quantifier_validity<T: Scalar, F: FeatureMap<T> + ?Sized>(
    dataset: &Dataset<T>,
    features: &F,
    v_hat: &VTable<T>,
    gamma: T,
    ridge: &RidgeState<T>,
    beta: T,
    true_mdp: &TabularMdp<T>,
    slack: T,
) -> Result<T> {
    if true_mdp.n_states() != features.n_states() || true_mdp.n_actions() != features.n_actions() {
        return Err(Error::Dimension("true MDP and feature domain differ".into()));
    }
    let mut ridge = ridge.clone();
    ridge.set_targets(dataset, features, v_hat.values(), gamma);
    let w: Vec<T> = ridge.solve_weights().iter().copied().collect();
    let estimate = linear_values(features, &w);
    let exact = true_mdp.bellman_operator(v_hat, gamma)?;
    let bonus = uncertainty_bonus(features, &ridge, beta)?;
    let hits = estimate
        .iter()
        .zip(exact.values())
        .zip(&bonus)
        .filter(|((&e, &x), &g)| (e - x).absval() <= g + slack)
        .count();
    Ok(T::lit(hits as f64) / T::lit(estimate.len() as f64))
}

/// Largest per-state residual of the suboptimality decomposition
/// `SubOpt(pi_hat, s) = -E_pi_hat[sum g^t delta] + E_pi*[sum g^t delta]
///  + E_pi*[sum g^t <Q_hat(s_t,.), pi* - pi_hat>]`, with
/// `delta = B V_hat - Q_hat`. Requires `V_hat(s) = sum_a pi_hat(a|s) Q_hat(s,a)`.
pub fn verify_subopt_decomposition<T: Scalar>(
    true_mdp: &TabularMdp<T>,
    q_hat: &QTable<T>,
    v_hat: &VTable<T>,
    pi_hat: &Policy<T>,
    gamma: T,
    opts: &SolveOptions<T>,
) -> Result<T> {
    let (n, k) = (true_mdp.n_states(), true_mdp.n_actions());
    true_mdp.check_policy(pi_hat)?;
    if q_hat.n_states() != n || q_hat.n_actions() != k {
        return Err(Error::Dimension("q_hat shape".into()));
    }
    for s in 0..n {
        let implied = dot(pi_hat.row(s), q_hat.row(s));
        let tol = T::lit(1e-9) * (T::one() + implied.absval());
        if (implied - v_hat.get(s)).absval() > tol {
            return Err(Error::InvalidArgument(format!(
                "v_hat({s}) is not the pi_hat-average of q_hat"
            )));
        }
    }
    let star = value_iteration(true_mdp, gamma, opts)?;
    let pi_star = star.policy;
    let v_star = policy_evaluation_exact(true_mdp, &pi_star, gamma)?;
    let v_pi = policy_evaluation_exact(true_mdp, pi_hat, gamma)?;

    let backed = true_mdp.bellman_operator(v_hat, gamma)?;
    let delta: Vec<T> = backed.values().iter().zip(q_hat.values()).map(|(&b, &q)| b - q).collect();

    let average = |pi: &Policy<T>, f: &[T]| -> Vec<T> {
        (0..n).map(|s| dot(pi.row(s), &f[s * k..(s + 1) * k])).collect()
    };
    let discounted_sum = |pi: &Policy<T>, f: Vec<T>| -> Result<Vec<T>> {
        let (_, kernel) = true_mdp.policy_kernel(pi);
        solve_discounted(&kernel, gamma, &f, false)
    };
    let along_hat = discounted_sum(pi_hat, average(pi_hat, &delta))?;
    let along_star = discounted_sum(&pi_star, average(&pi_star, &delta))?;
    let mismatch: Vec<T> = (0..n)
        .map(|s| {
            (0..k).fold(T::zero(), |acc, a| acc + q_hat.get(s, a) * (pi_star.prob(s, a) - pi_hat.prob(s, a)))
        })
        .collect();
    let along_mismatch = discounted_sum(&pi_star, mismatch)?;

    Ok((0..n).fold(T::zero(), |m, s| {
        let lhs = v_star.get(s) - v_pi.get(s);
        let rhs = -along_hat[s] + along_star[s] + along_mismatch[s];
        m.max((lhs - rhs).absval())
    }))
}
