//! Tabular offline learners: support-constrained (BCQ-style) value iteration,
//! unconstrained empirical value iteration, robust value iteration over the
//! epsilon-mixture model set, and the lower-discount learner.

use crate::error::{Error, Result};
use crate::generators::Mask;
use crate::mdp::{Policy, QTable, TabularMdp, VTable};
use crate::scalar::{dot, Scalar};
use crate::solvers::{
    check_gamma, constrained_greedy, iterate_to_fixed_point, row_max, value_iteration, SolveOptions,
    ValueIterationResult,
};

/// Actions the estimated behavior model deems in-support.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportConstraint {
    n_states: usize,
    n_actions: usize,
    allowed: Vec<bool>,
}

impl SupportConstraint {
    pub fn new(n_states: usize, n_actions: usize, allowed: Vec<bool>) -> Result<Self> {
        // Mask::new enforces the nonempty-row invariant.
        let mask = Mask::new(n_states, n_actions, allowed)?;
        Ok(Self::from(&mask))
    }

    pub fn allowed(&self, s: usize, a: usize) -> bool {
        self.allowed[s * self.n_actions + a]
    }

    pub fn bits(&self) -> &[bool] {
        &self.allowed
    }
}

impl From<&Mask> for SupportConstraint {
    fn from(mask: &Mask) -> Self {
        Self { n_states: mask.n_states(), n_actions: mask.n_actions(), allowed: mask.bits().to_vec() }
    }
}

/// `{ M : P_M(.|s,a) = (1 - eps) P_0(.|s,a) + eps P(.) }` for arbitrary `P`.
#[derive(Debug, Clone)]
pub struct MixtureModelSet<'a, T> {
    pub base: &'a TabularMdp<T>,
    pub epsilon: T,
}

impl<'a, T: Scalar> MixtureModelSet<'a, T> {
    pub fn new(base: &'a TabularMdp<T>, epsilon: T) -> Result<Self> {
        if !(epsilon >= T::zero() && epsilon <= T::one()) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must lie in [0, 1], got {}",
                epsilon.as_f64()
            )));
        }
        Ok(Self { base, epsilon })
    }
}

/// Fixed point of `Q(s,a) <- r(s,a) + gamma * sum_s' P(s'|s,a) max_{a' allowed at s'} Q(s',a')`.
pub fn bcq_value_iteration<T: Scalar>(
    empirical: &TabularMdp<T>,
    support: &SupportConstraint,
    gamma: T,
    opts: &SolveOptions<T>,
) -> Result<ValueIterationResult<T>> {
    check_gamma(gamma)?;
    opts.validate()?;
    let (n, k) = (empirical.n_states(), empirical.n_actions());
    if support.n_states != n || support.n_actions != k {
        return Err(Error::Dimension("support and MDP shapes differ".into()));
    }
    let allowed = &support.allowed;
    let (v, q, residuals) = iterate_to_fixed_point(
        "bcq_value_iteration",
        n,
        k,
        opts.iteration_cap(gamma, empirical.r_max()),
        opts.tol,
        |v, q| empirical.bellman_into(v, gamma, q),
        |q, v| {
            for (s, out) in v.iter_mut().enumerate() {
                let row = &q[s * k..(s + 1) * k];
                let ok = &allowed[s * k..(s + 1) * k];
                *out = (0..k)
                    .filter(|&a| ok[a])
                    .map(|a| row[a])
                    .fold(T::lit(f64::NEG_INFINITY), |m, x| m.max(x));
            }
        },
    )?;
    let q = QTable::from_vec(n, k, q, gamma);
    let policy = constrained_greedy(&q, allowed);
    Ok(ValueIterationResult { v: VTable::new(v, gamma), q, policy, residuals })
}

/// `max_{(s,a) seen} |q_hat(s,a) - q_star_eval(s,a)|`.
pub fn estimation_error<T: Scalar>(q_hat: &QTable<T>, q_star_eval: &QTable<T>, mask: &Mask) -> Result<T> {
    if q_hat.n_states() != q_star_eval.n_states()
        || q_hat.n_actions() != q_star_eval.n_actions()
        || mask.n_states() != q_hat.n_states()
        || mask.n_actions() != q_hat.n_actions()
    {
        return Err(Error::Dimension("estimation_error shapes differ".into()));
    }
    Ok(q_hat
        .values()
        .iter()
        .zip(q_star_eval.values())
        .zip(mask.bits())
        .filter(|(_, &seen)| seen)
        .fold(T::zero(), |m, ((&a, &b), _)| m.max((a - b).absval())))
}

/// Plain value iteration on the learner's model, no support constraint.
pub fn empirical_value_iteration<T: Scalar>(
    empirical: &TabularMdp<T>,
    gamma: T,
    opts: &SolveOptions<T>,
) -> Result<ValueIterationResult<T>> {
    value_iteration(empirical, gamma, opts)
}

/// Output of [`robust_value_iteration`].
#[derive(Debug, Clone)]
pub struct RobustResult<T> {
    pub q: QTable<T>,
    pub v: VTable<T>,
    pub policy: Policy<T>,
    pub residuals: Vec<T>,
}

/// Worst-case value iteration over the mixture set. The inner minimum puts the
/// adversarial `eps` mass on the lowest-valued state, so each sweep is
/// `Q(s,a) <- r(s,a) + gamma (1 - eps) E_{P0} V + gamma eps min_s' V(s')`.
pub fn robust_value_iteration<T: Scalar>(
    model_set: &MixtureModelSet<'_, T>,
    gamma: T,
    opts: &SolveOptions<T>,
) -> Result<RobustResult<T>> {
    check_gamma(gamma)?;
    opts.validate()?;
    let mdp = model_set.base;
    let eps = model_set.epsilon;
    let (n, k) = (mdp.n_states(), mdp.n_actions());
    let nominal = gamma * (T::one() - eps);
    let adversarial = gamma * eps;
    let (v, q, residuals) = iterate_to_fixed_point(
        "robust_value_iteration",
        n,
        k,
        opts.iteration_cap(gamma, mdp.r_max()),
        opts.tol,
        |v, q| {
            let v_min = v.iter().copied().fold(v[0], |m, x| m.min(x));
            for (sa, (out, row)) in q.iter_mut().zip(mdp.transitions().chunks_exact(n)).enumerate() {
                *out = mdp.rewards()[sa] + nominal * dot(row, v) + adversarial * v_min;
            }
        },
        row_max(k),
    )?;
    let q = QTable::from_vec(n, k, q, gamma);
    let policy = q.greedy();
    Ok(RobustResult { q, v: VTable::new(v, gamma), policy, residuals })
}

/// Outcome of comparing robust value iteration with the lower-discount solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalenceCheck<T> {
    /// The constant offset `gamma eps min_s max_a Q_low(s,a) / (1 - gamma)`.
    pub delta: T,
    /// `max_{s,a} |Q_rob(s,a) - (Q_low(s,a) + delta)|`.
    pub max_abs_gap: T,
}

/// Certifies that robust optimization over the `eps`-mixture set at discount
/// `gamma` equals plain optimization at `(1 - eps) gamma`, shifted by a constant.
pub fn check_lemma3<T: Scalar>(
    mdp: &TabularMdp<T>,
    gamma: T,
    epsilon: T,
    opts: &SolveOptions<T>,
) -> Result<EquivalenceCheck<T>> {
    check_gamma(gamma)?;
    let set = MixtureModelSet::new(mdp, epsilon)?;
    let low = value_iteration(mdp, (T::one() - epsilon) * gamma, opts)?;
    let min_v = low.q.max_values().values().iter().copied().fold(T::lit(f64::INFINITY), |m, x| m.min(x));
    let delta = gamma * epsilon * min_v / (T::one() - gamma);
    let rob = robust_value_iteration(&set, gamma, opts)?;
    let max_abs_gap = rob
        .q
        .values()
        .iter()
        .zip(low.q.values())
        .fold(T::zero(), |m, (&r, &l)| m.max((r - (l + delta)).absval()));
    Ok(EquivalenceCheck { delta, max_abs_gap })
}

/// Lower-discount learner: value iteration on the learner's model at
/// `(1 - eps) gamma`, i.e. a uniform discount reduction on every pair.
pub fn generalized_value_iteration<T: Scalar>(
    empirical: &TabularMdp<T>,
    gamma: T,
    epsilon: T,
    opts: &SolveOptions<T>,
) -> Result<ValueIterationResult<T>> {
    check_gamma(gamma)?;
    if !(epsilon >= T::zero() && epsilon <= T::one()) {
        return Err(Error::InvalidArgument("epsilon must lie in [0, 1]".into()));
    }
    value_iteration(empirical, (T::one() - epsilon) * gamma, opts)
}
