//! Exact dynamic-programming solvers over a [`TabularMdp`].

use crate::error::{Error, Result};
use crate::mdp::{argmax_first, Policy, QTable, TabularMdp, VTable};
use crate::scalar::{dot, sup_diff, Scalar};
use nalgebra::{DMatrix, DVector};

/// Convergence settings for the fixed-point solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions<T> {
    /// Sup-norm threshold on successive value iterates.
    pub tol: T,
    /// Iteration cap; `None` derives one from `tol`, `gamma` and `r_max`.
    pub max_iters: Option<usize>,
}

impl<T: Scalar> Default for SolveOptions<T> {
    fn default() -> Self {
        Self { tol: T::default_tol(), max_iters: None }
    }
}

impl<T: Scalar> SolveOptions<T> {
    pub fn with_tol(tol: T) -> Self {
        Self { tol, max_iters: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > T::zero()) {
            return Err(Error::InvalidArgument("tol must be positive".into()));
        }
        if self.max_iters == Some(0) {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        Ok(())
    }

    /// `ceil(log(tol (1 - gamma) / r_max) / log gamma) + 100` unless set explicitly.
    pub fn iteration_cap(&self, gamma: T, r_max: T) -> usize {
        if let Some(n) = self.max_iters {
            return n;
        }
        let g = gamma.as_f64();
        if g <= 0.0 {
            return 101;
        }
        let ratio = (self.tol.as_f64() * (1.0 - g) / r_max.as_f64()).ln() / g.ln();
        ratio.max(0.0).ceil() as usize + 100
    }
}

/// Output of [`value_iteration`] and the other max-backup solvers.
#[derive(Debug, Clone)]
pub struct ValueIterationResult<T> {
    pub v: VTable<T>,
    pub q: QTable<T>,
    pub policy: Policy<T>,
    /// `||V_k - V_{k-1}||_inf` for every sweep.
    pub residuals: Vec<T>,
}

impl<T: Scalar> ValueIterationResult<T> {
    pub fn iterations(&self) -> usize {
        self.residuals.len()
    }
}

pub(crate) fn check_gamma<T: Scalar>(gamma: T) -> Result<()> {
    if !(gamma >= T::zero() && gamma < T::one()) {
        return Err(Error::InvalidArgument(format!(
            "discount must lie in [0, 1), got {}",
            gamma.as_f64()
        )));
    }
    Ok(())
}

/// Shared `V -> Q -> V` loop. `backup` fills `q` from the current values,
/// `reduce` turns `q` into the next values.
pub(crate) fn iterate_to_fixed_point<T: Scalar>(
    solver: &'static str,
    n_states: usize,
    n_actions: usize,
    cap: usize,
    tol: T,
    mut backup: impl FnMut(&[T], &mut [T]),
    mut reduce: impl FnMut(&[T], &mut [T]),
) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let mut v = vec![T::zero(); n_states];
    let mut next = vec![T::zero(); n_states];
    let mut q = vec![T::zero(); n_states * n_actions];
    let mut residuals = Vec::new();
    for _ in 0..cap {
        backup(&v, &mut q);
        reduce(&q, &mut next);
        let res = sup_diff(&v, &next);
        residuals.push(res);
        std::mem::swap(&mut v, &mut next);
        if res <= tol {
            return Ok((v, q, residuals));
        }
    }
    Err(Error::NotConverged {
        solver,
        iters: cap,
        residual: residuals.last().map_or(f64::NAN, |r| r.as_f64()),
    })
}

pub(crate) fn row_max<T: Scalar>(n_actions: usize) -> impl FnMut(&[T], &mut [T]) {
    move |q: &[T], v: &mut [T]| {
        for (out, row) in v.iter_mut().zip(q.chunks_exact(n_actions)) {
            *out = row.iter().copied().fold(row[0], |m, x| m.max(x));
        }
    }
}

/// Value iteration to the Bellman optimality fixed point. The greedy policy
/// breaks ties toward the lowest action index.
pub fn value_iteration<T: Scalar>(
    mdp: &TabularMdp<T>,
    gamma: T,
    opts: &SolveOptions<T>,
) -> Result<ValueIterationResult<T>> {
    check_gamma(gamma)?;
    opts.validate()?;
    let (n, k) = (mdp.n_states(), mdp.n_actions());
    let (v, q, residuals) = iterate_to_fixed_point(
        "value_iteration",
        n,
        k,
        opts.iteration_cap(gamma, mdp.r_max()),
        opts.tol,
        |v, q| mdp.bellman_into(v, gamma, q),
        row_max(k),
    )?;
    let q = QTable::from_vec(n, k, q, gamma);
    let policy = q.greedy();
    Ok(ValueIterationResult { v: VTable::new(v, gamma), q, policy, residuals })
}

/// Iterative policy evaluation: fixed point of the policy Bellman operator.
pub fn policy_evaluation<T: Scalar>(
    mdp: &TabularMdp<T>,
    pi: &Policy<T>,
    gamma: T,
    opts: &SolveOptions<T>,
) -> Result<VTable<T>> {
    check_gamma(gamma)?;
    opts.validate()?;
    mdp.check_policy(pi)?;
    let (n, k) = (mdp.n_states(), mdp.n_actions());
    let (v, _, _) = iterate_to_fixed_point(
        "policy_evaluation",
        n,
        k,
        opts.iteration_cap(gamma, mdp.r_max()),
        opts.tol,
        |v, q| mdp.bellman_into(v, gamma, q),
        |q, v| {
            for (s, out) in v.iter_mut().enumerate() {
                *out = dot(pi.row(s), &q[s * k..(s + 1) * k]);
            }
        },
    )?;
    Ok(VTable::new(v, gamma))
}

/// Policy evaluation by a direct LU solve of `(I - gamma P_pi) v = r_pi`.
pub fn policy_evaluation_exact<T: Scalar>(
    mdp: &TabularMdp<T>,
    pi: &Policy<T>,
    gamma: T,
) -> Result<VTable<T>> {
    check_gamma(gamma)?;
    mdp.check_policy(pi)?;
    let (r_pi, p_pi) = mdp.policy_kernel(pi);
    let v = solve_discounted(&p_pi, gamma, &r_pi, false)?;
    Ok(VTable::new(v, gamma))
}

/// Solves `(I - gamma K) x = b`, or the transposed system when `transpose` is set.
pub(crate) fn solve_discounted<T: Scalar>(
    kernel: &DMatrix<T>,
    gamma: T,
    b: &[T],
    transpose: bool,
) -> Result<Vec<T>> {
    let n = kernel.nrows();
    let k = if transpose { kernel.transpose() } else { kernel.clone() };
    let system = DMatrix::<T>::identity(n, n) - k * gamma;
    let lu = system.lu();
    let x = lu
        .solve(&DVector::from_column_slice(b))
        .ok_or_else(|| Error::Singular("I - gamma P_pi".into()))?;
    Ok(x.iter().copied().collect())
}

/// `sum_s mu0(s) v(s)`.
pub fn expected_value<T: Scalar>(mdp: &TabularMdp<T>, v: &VTable<T>) -> Result<T> {
    mdp.check_values(v.values())?;
    Ok(dot(mdp.init_dist(), v.values()))
}

/// `V*(s) - V^pi(s)` at discount `gamma`, with `V*` solved afresh.
pub fn suboptimality_per_state<T: Scalar>(
    mdp: &TabularMdp<T>,
    pi: &Policy<T>,
    gamma: T,
    opts: &SolveOptions<T>,
) -> Result<Vec<T>> {
    let star = value_iteration(mdp, gamma, opts)?;
    let v_pi = policy_evaluation(mdp, pi, gamma, opts)?;
    Ok(star.v.values().iter().zip(v_pi.values()).map(|(&a, &b)| a - b).collect())
}

/// `SubOpt(pi; gamma) = V_gamma(pi*_gamma) - V_gamma(pi)` under the initial distribution.
pub fn suboptimality<T: Scalar>(
    mdp: &TabularMdp<T>,
    pi: &Policy<T>,
    gamma: T,
    opts: &SolveOptions<T>,
) -> Result<T> {
    let gaps = suboptimality_per_state(mdp, pi, gamma, opts)?;
    Ok(dot(mdp.init_dist(), &gaps))
}

/// Where the discounted occupancy starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OccupancyStart {
    /// The MDP's stored initial distribution.
    Initial,
    /// A point mass on one state.
    State(usize),
}

/// Normalized discounted occupancy `d(s,a) = (1 - gamma) sum_t gamma^t Pr(s_t = s, a_t = a)`,
/// laid out `(s, a)` row-major.
pub fn occupancy_measure<T: Scalar>(
    mdp: &TabularMdp<T>,
    pi: &Policy<T>,
    gamma: T,
    start: OccupancyStart,
) -> Result<Vec<T>> {
    check_gamma(gamma)?;
    mdp.check_policy(pi)?;
    let n = mdp.n_states();
    let rho = match start {
        OccupancyStart::Initial => mdp.init_dist().to_vec(),
        OccupancyStart::State(s) => {
            if s >= n {
                return Err(Error::InvalidArgument(format!("start state {s} out of range")));
            }
            let mut rho = vec![T::zero(); n];
            rho[s] = T::one();
            rho
        }
    };
    let (_, p_pi) = mdp.policy_kernel(pi);
    let state_occ = solve_discounted(&p_pi, gamma, &rho, true)?;
    Ok(spread_over_actions(pi, &state_occ, T::one() - gamma))
}

/// Occupancy measures started from every state, sharing one factorization.
/// Entry `s` of the result is the occupancy with `s_0 = s`.
pub fn occupancy_from_each_state<T: Scalar>(
    mdp: &TabularMdp<T>,
    pi: &Policy<T>,
    gamma: T,
) -> Result<Vec<Vec<T>>> {
    check_gamma(gamma)?;
    mdp.check_policy(pi)?;
    let n = mdp.n_states();
    let (_, p_pi) = mdp.policy_kernel(pi);
    let system = DMatrix::<T>::identity(n, n) - p_pi.transpose() * gamma;
    let inv = system
        .try_inverse()
        .ok_or_else(|| Error::Singular("I - gamma P_pi^T".into()))?;
    Ok((0..n)
        .map(|s| {
            let col: Vec<T> = inv.column(s).iter().copied().collect();
            spread_over_actions(pi, &col, T::one() - gamma)
        })
        .collect())
}

fn spread_over_actions<T: Scalar>(pi: &Policy<T>, state_occ: &[T], scale: T) -> Vec<T> {
    let k = pi.n_actions();
    let mut out = vec![T::zero(); state_occ.len() * k];
    for (s, &w) in state_occ.iter().enumerate() {
        for a in 0..k {
            out[s * k + a] = scale * w * pi.prob(s, a);
        }
    }
    out
}

/// Greedy action at each state restricted to `allowed`; ties go to the lowest index.
pub(crate) fn constrained_greedy<T: Scalar>(q: &QTable<T>, allowed: &[bool]) -> Policy<T> {
    let k = q.n_actions();
    let actions: Vec<usize> = (0..q.n_states())
        .map(|s| {
            let row = q.row(s);
            let mask = &allowed[s * k..(s + 1) * k];
            let mut best: Option<usize> = None;
            for a in 0..k {
                if mask[a] && best.is_none_or(|b| row[a] > row[b]) {
                    best = Some(a);
                }
            }
            best.unwrap_or_else(|| argmax_first(row))
        })
        .collect();
    Policy::deterministic(k, &actions).expect("actions in range")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> TabularMdp<f64> {
        // s0 -> s1 -> s1, reward 0 at s0 and 1 at s1, two identical actions.
        TabularMdp::new(
            2,
            2,
            vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
            vec![0.0, 0.0, 1.0, 1.0],
            1.0,
            vec![1.0, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn single_state_geometric_series() {
        let mdp = TabularMdp::<f64>::new(1, 1, vec![1.0], vec![1.0], 1.0, vec![1.0]).unwrap();
        let out = value_iteration(&mdp, 0.5, &SolveOptions::default()).unwrap();
        assert!((out.v.get(0) - 2.0).abs() < 1e-9);
        assert!((out.q.get(0, 0) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn myopic_case() {
        let mdp = TabularMdp::new(
            2,
            3,
            vec![0.5, 0.5, 1.0, 0.0, 0.0, 1.0, 0.2, 0.8, 0.6, 0.4, 0.1, 0.9],
            vec![0.2, 0.7, 0.7, 0.9, 0.1, 0.3],
            1.0,
            vec![0.5, 0.5],
        )
        .unwrap();
        let out = value_iteration(&mdp, 0.0, &SolveOptions::default()).unwrap();
        assert_eq!(out.v.values(), &[0.7, 0.9]);
        assert_eq!(out.policy.actions().unwrap(), vec![1, 0]);
    }

    #[test]
    fn chain_values() {
        let out = value_iteration(&chain(), 0.9, &SolveOptions::default()).unwrap();
        assert!((out.v.get(1) - 10.0).abs() < 1e-8);
        assert!((out.v.get(0) - 9.0).abs() < 1e-8);
    }

    #[test]
    fn chain_self_loop_suboptimality() {
        // Same chain plus a zero-reward self-loop action at s1.
        let mdp = TabularMdp::<f64>::new(
            2,
            2,
            vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
            vec![0.0, 0.0, 1.0, 0.0],
            1.0,
            vec![1.0, 0.0],
        )
        .unwrap();
        let pi = Policy::deterministic(2, &[0, 1]).unwrap();
        let gaps = suboptimality_per_state(&mdp, &pi, 0.9, &SolveOptions::default()).unwrap();
        assert!((gaps[1] - 10.0).abs() < 1e-8);
    }

    #[test]
    fn single_state_policy_value() {
        let mdp = TabularMdp::<f64>::new(1, 2, vec![1.0, 1.0], vec![0.3, 0.3], 1.0, vec![1.0]).unwrap();
        let pi = Policy::new(1, 2, vec![0.25, 0.75]).unwrap();
        let v = policy_evaluation(&mdp, &pi, 0.8, &SolveOptions::default()).unwrap();
        assert!((v.get(0) - 1.5).abs() < 1e-9);
        let exact = policy_evaluation_exact(&mdp, &pi, 0.8).unwrap();
        assert!((exact.get(0) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn expected_value_point_mass() {
        let mdp = chain();
        let v = VTable::new(vec![3.0, 4.0], 0.9);
        assert_eq!(expected_value(&mdp, &v).unwrap(), 3.0);
    }

    #[test]
    fn occupancy_single_pair() {
        let mdp = TabularMdp::<f64>::new(1, 1, vec![1.0], vec![1.0], 1.0, vec![1.0]).unwrap();
        let pi = Policy::uniform(1, 1);
        let d = occupancy_measure(&mdp, &pi, 0.9, OccupancyStart::Initial).unwrap();
        assert!((d[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn occupancy_at_gamma_zero_is_initial_times_policy() {
        let mdp = chain().with_init_dist(vec![0.3, 0.7]).unwrap();
        let pi = Policy::new(2, 2, vec![0.5, 0.5, 0.1, 0.9]).unwrap();
        let d = occupancy_measure(&mdp, &pi, 0.0, OccupancyStart::Initial).unwrap();
        let expect = [0.15, 0.15, 0.07, 0.63];
        for (x, y) in d.iter().zip(expect) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn derived_iteration_cap() {
        let opts = SolveOptions::<f64>::default();
        // log(1e-10 * 0.1) / log(0.9) = 240.4..
        assert_eq!(opts.iteration_cap(0.9, 1.0), 241 + 100);
        assert_eq!(opts.iteration_cap(0.0, 1.0), 101);
    }

    #[test]
    fn non_convergence_is_reported() {
        let opts = SolveOptions { tol: 1e-10, max_iters: Some(3) };
        let err = value_iteration(&chain(), 0.9, &opts).unwrap_err();
        assert!(matches!(err, Error::NotConverged { iters: 3, .. }));
    }

    #[test]
    fn rejects_gamma_one() {
        assert!(value_iteration(&chain(), 1.0, &SolveOptions::default()).is_err());
    }
}
