//! Coverage coefficients and closed-form suboptimality bounds.
//!
//! The absolute constants `c, c1, c2, c3` are never fixed by the theory; they
//! default to one and are always explicit inputs.

use crate::error::{Error, Result};
use crate::mdp::{Policy, TabularMdp};
use crate::pevi::FeatureMap;
use crate::scalar::Scalar;
use crate::solvers::{occupancy_from_each_state, occupancy_measure, policy_evaluation_exact, OccupancyStart, SolveOptions};
use nalgebra::{DMatrix, SymmetricEigen};

const DIST_TOL: f64 = 1e-8;
const RANGE_TOL: f64 = 1e-10;

fn check_distribution<T: Scalar>(name: &str, xs: &[T], len: usize) -> Result<()> {
    if xs.len() != len {
        return Err(Error::Dimension(format!("{name} has {} entries, expected {len}", xs.len())));
    }
    if xs.iter().any(|&x| !(x >= T::zero())) {
        return Err(Error::InvalidArgument(format!("{name} has a negative entry")));
    }
    let total = xs.iter().fold(T::zero(), |a, &x| a + x);
    if (total - T::one()).absval() > T::lit(DIST_TOL) {
        return Err(Error::InvalidArgument(format!("{name} sums to {}, not 1", total.as_f64())));
    }
    Ok(())
}

fn second_moment<T: Scalar, F: FeatureMap<T> + ?Sized>(weights: &[T], features: &F) -> DMatrix<T> {
    let d = features.dim();
    let k = features.n_actions();
    let mut out = DMatrix::<T>::zeros(d, d);
    let mut phi = vec![T::zero(); d];
    for (sa, &w) in weights.iter().enumerate() {
        if w == T::zero() {
            continue;
        }
        features.write(sa / k, sa % k, &mut phi);
        for i in 0..d {
            if phi[i] == T::zero() {
                continue;
            }
            for j in 0..d {
                out[(i, j)] += w * phi[i] * phi[j];
            }
        }
    }
    out
}

/// `sup_x x^T Sigma_target x / x^T Sigma_data x` over the range of `Sigma_data`,
/// or `+inf` when the target has mass outside that range.
///
/// Both inputs are distributions over the `(s, a)` domain of `features`; the
/// second-moment matrices are `sum w(s,a) phi phi^T`.
pub fn coverage_coefficient<T: Scalar, F: FeatureMap<T> + ?Sized>(
    data_dist: &[T],
    target_occupancy: &[T],
    features: &F,
) -> Result<T> {
    let len = features.n_states() * features.n_actions();
    check_distribution("data distribution", data_dist, len)?;
    check_distribution("target occupancy", target_occupancy, len)?;

    let k = features.n_actions();
    if (0..len).all(|sa| features.one_hot_index(sa / k, sa % k).is_some()) {
        let mut best = T::zero();
        for (&rho, &target) in data_dist.iter().zip(target_occupancy) {
            if rho > T::zero() {
                best = best.max(target / rho);
            } else if target > T::lit(RANGE_TOL) {
                return Ok(T::infinity());
            }
        }
        return Ok(best);
    }

    let sigma_data = second_moment(data_dist, features);
    let sigma_target = second_moment(target_occupancy, features);
    let eig = SymmetricEigen::new(sigma_data);
    let top = eig.eigenvalues.iter().fold(T::zero(), |m, &x| m.max(x));
    let cutoff = top * T::lit(1e-12);
    let d = features.dim();
    let (range, null): (Vec<usize>, Vec<usize>) = (0..d).partition(|&i| eig.eigenvalues[i] > cutoff);

    if !null.is_empty() {
        let basis = eig.eigenvectors.select_columns(&null);
        let outside = (basis.transpose() * &sigma_target * &basis).trace();
        if outside > T::lit(RANGE_TOL) {
            return Ok(T::infinity());
        }
    }
    if range.is_empty() {
        return Ok(T::zero());
    }
    let mut whiten = eig.eigenvectors.select_columns(&range);
    for (col, &i) in range.iter().enumerate() {
        let scale = T::one() / eig.eigenvalues[i].sqrt();
        whiten.column_mut(col).scale_mut(scale);
    }
    let reduced = whiten.transpose() * sigma_target * &whiten;
    let reduced = (&reduced + reduced.transpose()) * T::lit(0.5);
    Ok(SymmetricEigen::new(reduced).eigenvalues.iter().fold(T::zero(), |m, &x| m.max(x)))
}

/// How the target occupancy is aggregated over start states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoverageAggregation {
    /// One occupancy started from the MDP's initial distribution.
    #[default]
    InitialDistribution,
    /// The largest coefficient over occupancies started from each single state.
    WorstStartState,
}

/// Coverage of `target_policy`'s discounted occupancy by `data_dist`.
pub fn policy_coverage<T: Scalar, F: FeatureMap<T> + ?Sized>(
    mdp: &TabularMdp<T>,
    data_dist: &[T],
    target_policy: &Policy<T>,
    gamma: T,
    features: &F,
    aggregation: CoverageAggregation,
) -> Result<T> {
    match aggregation {
        CoverageAggregation::InitialDistribution => {
            let occ = occupancy_measure(mdp, target_policy, gamma, OccupancyStart::Initial)?;
            coverage_coefficient(data_dist, &normalized(occ), features)
        }
        CoverageAggregation::WorstStartState => {
            let mut worst = T::zero();
            for occ in occupancy_from_each_state(mdp, target_policy, gamma)? {
                worst = worst.max(coverage_coefficient(data_dist, &normalized(occ), features)?);
                if !worst.is_finite() {
                    break;
                }
            }
            Ok(worst)
        }
    }
}

/// The i.i.d. sampling distribution `mu0(s) * behavior(a|s)`.
pub fn behavior_distribution<T: Scalar>(mdp: &TabularMdp<T>, behavior: &Policy<T>) -> Vec<T> {
    let k = mdp.n_actions();
    (0..mdp.n_states() * k)
        .map(|sa| mdp.init_dist()[sa / k] * behavior.prob(sa / k, sa % k))
        .collect()
}

// Removes linear-solve round-off so the distribution check sees an exact sum.
fn normalized<T: Scalar>(mut xs: Vec<T>) -> Vec<T> {
    for x in xs.iter_mut() {
        *x = x.max(T::zero());
    }
    let total = xs.iter().fold(T::zero(), |a, &x| a + x);
    for x in xs.iter_mut() {
        *x /= total;
    }
    xs
}

/// Worst-case bias from evaluating at `gamma_e` after learning at `gamma`:
/// `(gamma_e - gamma) / ((1 - gamma)(1 - gamma_e)) * r_max`.
pub fn lemma1_gap<T: Scalar>(gamma: T, gamma_e: T, r_max: T) -> Result<T> {
    check_order(gamma, gamma_e)?;
    let one = T::one();
    Ok((gamma_e - gamma) / ((one - gamma) * (one - gamma_e)) * r_max)
}

fn check_order<T: Scalar>(gamma: T, gamma_e: T) -> Result<()> {
    if !(gamma >= T::zero() && gamma <= gamma_e && gamma_e < T::one()) {
        return Err(Error::InvalidArgument(format!(
            "require 0 <= gamma <= gamma_e < 1, got gamma = {}, gamma_e = {}",
            gamma.as_f64(),
            gamma_e.as_f64()
        )));
    }
    Ok(())
}

/// Result of checking `V_g(pi) <= V_ge(pi) <= V_g(pi) + gap` at every state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SandwichCheck<T> {
    pub lower_ok: bool,
    pub upper_ok: bool,
    /// Smallest `gap - (V_ge(s) - V_g(s))` over states.
    pub slack: T,
}

pub fn verify_lemma1<T: Scalar>(
    mdp: &TabularMdp<T>,
    pi: &Policy<T>,
    gamma: T,
    gamma_e: T,
    opts: &SolveOptions<T>,
) -> Result<SandwichCheck<T>> {
    let gap = lemma1_gap(gamma, gamma_e, mdp.r_max())?;
    let tol = T::lit(4.0) * opts.tol / (T::one() - gamma_e);
    let low = policy_evaluation_exact(mdp, pi, gamma)?;
    let high = policy_evaluation_exact(mdp, pi, gamma_e)?;
    let mut check = SandwichCheck { lower_ok: true, upper_ok: true, slack: T::infinity() };
    for (&vl, &vh) in low.values().iter().zip(high.values()) {
        check.lower_ok &= vl <= vh + tol;
        check.upper_ok &= vh <= vl + gap + tol;
        check.slack = check.slack.min(gap - (vh - vl));
    }
    Ok(check)
}

/// Inputs shared by the bound calculators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs<T> {
    pub c: T,
    pub c1: T,
    pub c2: T,
    pub c3: T,
    pub d: usize,
    pub n: f64,
    pub xi: T,
    pub r_max: T,
    pub gamma: T,
    pub gamma_e: T,
    /// Coverage coefficient; `+inf` when the data misses the target.
    pub coverage: T,
}

impl<T: Scalar> Default for BoundInputs<T> {
    fn default() -> Self {
        Self {
            c: T::one(),
            c1: T::one(),
            c2: T::one(),
            c3: T::one(),
            d: 1,
            n: 1.0,
            xi: T::lit(0.1),
            r_max: T::one(),
            gamma: T::lit(0.9),
            gamma_e: T::lit(0.95),
            coverage: T::one(),
        }
    }
}

impl<T: Scalar> BoundInputs<T> {
    pub fn validate(&self) -> Result<()> {
        check_order(self.gamma, self.gamma_e)?;
        if !(self.n >= 1.0) || self.d == 0 {
            return Err(Error::InvalidArgument("require N >= 1 and d >= 1".into()));
        }
        if !(self.xi > T::zero() && self.xi < T::one()) {
            return Err(Error::InvalidArgument("require 0 < xi < 1".into()));
        }
        for (name, x) in [("c", self.c), ("c1", self.c1), ("c2", self.c2), ("c3", self.c3), ("r_max", self.r_max)] {
            if !(x > T::zero()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if !(self.coverage > T::zero()) {
            return Err(Error::InvalidArgument("coverage must be positive".into()));
        }
        Ok(())
    }

    /// `ln(4 d N / ((1 - gamma) xi))`.
    pub fn zeta(&self) -> T {
        let arg = T::lit(4.0 * self.d as f64 * self.n) / ((T::one() - self.gamma) * self.xi);
        arg.ln()
    }
}

/// `2 c r_max / (1 - gamma)^2 * sqrt(coverage d^3 zeta / N)`.
pub fn lemma2_bound<T: Scalar>(inputs: &BoundInputs<T>) -> Result<T> {
    inputs.validate()?;
    if !inputs.coverage.is_finite() {
        return Ok(T::infinity());
    }
    let one = T::one();
    let d = T::lit(inputs.d as f64);
    let horizon = (one - inputs.gamma) * (one - inputs.gamma);
    let root = (inputs.coverage * d * d * d * inputs.zeta() / T::lit(inputs.n)).sqrt();
    Ok(T::lit(2.0) * inputs.c * inputs.r_max / horizon * root)
}

/// Estimation term plus the discount bias term.
pub fn theorem1_bound<T: Scalar>(inputs: &BoundInputs<T>) -> Result<T> {
    Ok(lemma2_bound(inputs)? + lemma1_gap(inputs.gamma, inputs.gamma_e, inputs.r_max)?)
}

/// Grid minimizer of [`theorem1_bound`] over the guidance discount; ties go to
/// the smallest discount.
pub fn optimal_guidance_gamma<T: Scalar>(inputs: &BoundInputs<T>, grid: &[T]) -> Result<(T, T)> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty discount grid".into()));
    }
    let mut best: Option<(T, T)> = None;
    for &gamma in grid {
        let bound = theorem1_bound(&BoundInputs { gamma, ..*inputs })?;
        best = match best {
            Some((g, b)) if bound > b || (bound == b && gamma >= g) => Some((g, b)),
            _ => Some((gamma, bound)),
        };
    }
    Ok(best.expect("nonempty grid"))
}

/// Bound for learning at the prescribed lower discount `(1 - eps) gamma_e`,
/// with `zeta = ln(c2 N d / xi)^2`, `eps = c1 sqrt(d zeta / N)` and bound
/// `c3 / (1 - gamma_e)^2 * sqrt(coverage d^2 zeta / N) * r_max`.
/// Returns `(bound, eps)`.
pub fn theorem2_bound<T: Scalar>(inputs: &BoundInputs<T>) -> Result<(T, T)> {
    inputs.validate()?;
    let d = T::lit(inputs.d as f64);
    let n = T::lit(inputs.n);
    let log = (inputs.c2 * n * d / inputs.xi).ln();
    let zeta = log * log;
    let eps = inputs.c1 * (d * zeta / n).sqrt();
    if !(eps < T::one()) {
        return Err(Error::DatasetTooSmall(eps.as_f64()));
    }
    if !inputs.coverage.is_finite() {
        return Ok((T::infinity(), eps));
    }
    let horizon = (T::one() - inputs.gamma_e) * (T::one() - inputs.gamma_e);
    let bound = inputs.c3 / horizon * (inputs.coverage * d * d * zeta / n).sqrt() * inputs.r_max;
    Ok((bound, eps))
}

/// One line of the bound report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundRow<T> {
    pub gamma: T,
    pub lemma2_term: T,
    pub lemma1_term: T,
    pub theorem1_total: T,
}

pub fn bound_report<T: Scalar>(inputs: &BoundInputs<T>, grid: &[T]) -> Result<Vec<BoundRow<T>>> {
    grid.iter()
        .map(|&gamma| {
            let at = BoundInputs { gamma, ..*inputs };
            let lemma2_term = lemma2_bound(&at)?;
            let lemma1_term = lemma1_gap(gamma, inputs.gamma_e, inputs.r_max)?;
            Ok(BoundRow { gamma, lemma2_term, lemma1_term, theorem1_total: lemma2_term + lemma1_term })
        })
        .collect()
}

/// `[lo, lo + step, ..., hi]` built from integer multiples of `step` and
/// rounded to 12 decimals, so decimal grids hit their literals exactly.
pub fn discount_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || hi < lo {
        return Vec::new();
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| ((lo + i as f64 * step) * 1e12).round() / 1e12).collect()
}
