//! Seeded multi-instance sweeps over the guidance discount.
//!
//! Every instance draws its randomness from [`ExperimentSeed`] streams keyed by
//! the base seed and the instance index, instances run in parallel, and the
//! per-instance values are reduced in instance order. Output is therefore
//! independent of the thread count.

use crate::analysis::discount_grid;
use crate::error::{Error, Result};
use crate::generators::{
    behavior_policy, empirical_mdp, random_mask, random_tabular_mdp, sample_dataset, widen_mask, ExperimentSeed,
    Mask, UnseenPairModel,
};
use crate::io::{fmt_float, write_table};
use crate::mdp::TabularMdp;
use crate::offline::{bcq_value_iteration, empirical_value_iteration, estimation_error, SupportConstraint};
use crate::pevi::{pevi, theoretical_beta, OneHotFeatures, PeviConfig};
use crate::scalar::Scalar;
use crate::solvers::{policy_evaluation_exact, value_iteration, SolveOptions, ValueIterationResult};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

const TAG_MDP: u64 = 1;
const TAG_MASK: u64 = 2;
const TAG_EMPIRICAL: u64 = 3;
const TAG_WIDEN: u64 = 4;
const TAG_DATASET: u64 = 5;

pub const RESULTS_HEADER: [&str; 11] = [
    "experiment", "n_states", "n_actions", "mask_prop", "noise_ratio", "N", "gamma", "metric", "mean", "std",
    "n_instances",
];
pub const GAMMA_STAR_HEADER: [&str; 4] = ["experiment", "key", "gamma_star", "metric_at_star"];
pub const INSTANCE_HEADER: [&str; 5] = ["experiment", "key", "instance", "gamma", "metric"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    BcqNoise,
    PlainCoverage,
    PeviDatasize,
}

impl SweepKind {
    pub fn metric_name(self) -> &'static str {
        match self {
            SweepKind::BcqNoise | SweepKind::PlainCoverage => "estimation_error_inf",
            SweepKind::PeviDatasize => "subopt_at_gamma_e",
        }
    }
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepKind::BcqNoise => "bcq_noise",
            SweepKind::PlainCoverage => "plain_coverage",
            SweepKind::PeviDatasize => "pevi_datasize",
        })
    }
}

impl FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bcq_noise" => Ok(SweepKind::BcqNoise),
            "plain_coverage" => Ok(SweepKind::PlainCoverage),
            "pevi_datasize" => Ok(SweepKind::PeviDatasize),
            other => Err(Error::Parse(format!("unknown sweep kind {other:?}"))),
        }
    }
}

/// Full description of a sweep. Scalars are stored as `f64` and converted to
/// the solver precision at run time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub kind: SweepKind,
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma_e: f64,
    pub gamma_grid: Vec<f64>,
    /// One entry for `bcq_noise` and `pevi_datasize`; the swept axis for `plain_coverage`.
    pub masked_proportions: Vec<f64>,
    pub noise_ratios: Vec<f64>,
    pub dataset_sizes: Vec<usize>,
    pub n_instances: usize,
    pub base_seed: u64,
    pub r_max: f64,
    pub tol: f64,
    pub max_iters: Option<usize>,
    pub unseen_model: UnseenPairModel,
    /// Absolute constant in the theoretical pessimism coefficient.
    pub beta_c: f64,
    pub xi: f64,
    pub lambda_reg: f64,
}

impl SweepConfig {
    /// Downscaled defaults: 100 states, 10 actions, `gamma_e = 0.95`, grid
    /// `0.80:0.01:gamma_e`, 100 instances. The PEVI sweep uses 25 states and 4 actions.
    pub fn new(kind: SweepKind) -> Self {
        let gamma_e = 0.95;
        let (n_states, n_actions, masked, noise, sizes) = match kind {
            SweepKind::BcqNoise => (100, 10, vec![0.5], vec![0.04, 0.06, 0.08, 0.12], vec![]),
            SweepKind::PlainCoverage => (100, 10, vec![0.5, 0.7, 0.9], vec![], vec![]),
            SweepKind::PeviDatasize => (25, 4, vec![0.5], vec![], vec![100, 1000, 10000]),
        };
        Self {
            kind,
            n_states,
            n_actions,
            gamma_e,
            gamma_grid: discount_grid(0.80, gamma_e, 0.01),
            masked_proportions: masked,
            noise_ratios: noise,
            dataset_sizes: sizes,
            n_instances: 100,
            base_seed: 0,
            r_max: 1.0,
            tol: 1e-10,
            max_iters: None,
            unseen_model: UnseenPairModel::Resample,
            beta_c: 1.0,
            xi: 0.1,
            lambda_reg: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.n_states == 0 || self.n_actions == 0 {
            return bad("n_states and n_actions must be positive");
        }
        if self.n_instances == 0 {
            return bad("n_instances must be at least 1");
        }
        if !(self.gamma_e > 0.0 && self.gamma_e < 1.0) {
            return bad("gamma_e must lie in (0, 1)");
        }
        if self.gamma_grid.is_empty() {
            return bad("gamma_grid is empty");
        }
        if self.gamma_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("gamma_grid must be strictly ascending");
        }
        if self.gamma_grid.iter().any(|&g| !(g > 0.0 && g <= self.gamma_e)) {
            return bad("gamma_grid entries must lie in (0, gamma_e]");
        }
        if !(self.r_max > 0.0) || !(self.tol > 0.0) {
            return bad("r_max and tol must be positive");
        }
        if self.masked_proportions.iter().any(|&p| !(0.0..1.0).contains(&p)) {
            return bad("masked proportions must lie in [0, 1)");
        }
        if self.noise_ratios.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return bad("noise ratios must be nonnegative");
        }
        match self.kind {
            SweepKind::BcqNoise => {
                if self.masked_proportions.len() != 1 || self.noise_ratios.is_empty() {
                    return bad("bcq_noise needs one masked proportion and at least one noise ratio");
                }
            }
            SweepKind::PlainCoverage => {
                if self.masked_proportions.is_empty() {
                    return bad("plain_coverage needs at least one masked proportion");
                }
            }
            SweepKind::PeviDatasize => {
                if self.masked_proportions.len() != 1 || self.dataset_sizes.is_empty() {
                    return bad("pevi_datasize needs one masked proportion and at least one dataset size");
                }
                if !(self.beta_c > 0.0) || !(self.xi > 0.0 && self.xi < 1.0) || !(self.lambda_reg > 0.0) {
                    return bad("require beta_c > 0, 0 < xi < 1 and lambda_reg > 0");
                }
            }
        }
        Ok(())
    }

    fn opts<T: Scalar>(&self) -> SolveOptions<T> {
        SolveOptions { tol: T::lit(self.tol), max_iters: self.max_iters }
    }

    /// Labels of the swept axis, in sweep order.
    fn keys(&self) -> Vec<SweepKey> {
        match self.kind {
            SweepKind::BcqNoise => self.noise_ratios.iter().map(|&x| SweepKey::Noise(x)).collect(),
            SweepKind::PlainCoverage => self.masked_proportions.iter().map(|&x| SweepKey::MaskProp(x)).collect(),
            SweepKind::PeviDatasize => self.dataset_sizes.iter().map(|&x| SweepKey::Size(x)).collect(),
        }
    }
}

/// Value of the swept axis for one curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepKey {
    Noise(f64),
    MaskProp(f64),
    Size(usize),
}

impl fmt::Display for SweepKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            SweepKey::Noise(x) | SweepKey::MaskProp(x) => f.write_str(&fmt_float(x)),
            SweepKey::Size(n) => write!(f, "{n}"),
        }
    }
}

/// Aggregate of one `(key, gamma)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub experiment: SweepKind,
    pub n_states: usize,
    pub n_actions: usize,
    pub mask_prop: f64,
    pub noise_ratio: Option<f64>,
    pub n: Option<usize>,
    pub key: SweepKey,
    pub gamma: f64,
    pub metric_name: &'static str,
    pub metric_mean: f64,
    pub metric_std: f64,
    pub n_instances: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaStar {
    pub key: SweepKey,
    pub gamma_star: f64,
    pub metric_at_star: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub config: SweepConfig,
    pub records: Vec<SweepRecord>,
    pub gamma_stars: Vec<GammaStar>,
    /// `per_instance[key][instance][gamma]`.
    pub per_instance: Vec<Vec<Vec<f64>>>,
}

impl SweepOutput {
    pub fn records_for(&self, key_index: usize) -> &[SweepRecord] {
        let g = self.config.gamma_grid.len();
        &self.records[key_index * g..(key_index + 1) * g]
    }

    pub fn write_results_csv<W: Write>(&self, out: W) -> Result<()> {
        let opt_f = |x: Option<f64>| x.map(fmt_float).unwrap_or_default();
        let rows: Vec<Vec<String>> = self
            .records
            .iter()
            .map(|r| {
                vec![
                    r.experiment.to_string(),
                    r.n_states.to_string(),
                    r.n_actions.to_string(),
                    fmt_float(r.mask_prop),
                    opt_f(r.noise_ratio),
                    r.n.map(|n| n.to_string()).unwrap_or_default(),
                    fmt_float(r.gamma),
                    r.metric_name.to_string(),
                    fmt_float(r.metric_mean),
                    fmt_float(r.metric_std),
                    r.n_instances.to_string(),
                ]
            })
            .collect();
        write_table(out, &RESULTS_HEADER, &rows)
    }

    pub fn write_gamma_star_csv<W: Write>(&self, out: W) -> Result<()> {
        let rows: Vec<Vec<String>> = self
            .gamma_stars
            .iter()
            .map(|g| {
                vec![
                    self.config.kind.to_string(),
                    g.key.to_string(),
                    fmt_float(g.gamma_star),
                    fmt_float(g.metric_at_star),
                ]
            })
            .collect();
        write_table(out, &GAMMA_STAR_HEADER, &rows)
    }

    pub fn write_instances_csv<W: Write>(&self, out: W) -> Result<()> {
        let keys = self.config.keys();
        let mut rows = Vec::new();
        for (key, instances) in keys.iter().zip(&self.per_instance) {
            for (i, curve) in instances.iter().enumerate() {
                for (&gamma, &m) in self.config.gamma_grid.iter().zip(curve) {
                    rows.push(vec![
                        self.config.kind.to_string(),
                        key.to_string(),
                        i.to_string(),
                        fmt_float(gamma),
                        fmt_float(m),
                    ]);
                }
            }
        }
        write_table(out, &INSTANCE_HEADER, &rows)
    }
}

/// Mean and sample standard deviation (`n - 1` denominator, zero for one value),
/// summed in slice order.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Grid argmin of a mean curve, ties going to the smallest discount.
pub fn gamma_star(grid: &[f64], means: &[f64]) -> (f64, f64) {
    let mut best = 0;
    for i in 1..means.len() {
        if means[i] < means[best] {
            best = i;
        }
    }
    (grid[best], means[best])
}

/// Runs a sweep on a dedicated pool of `threads` workers (`None` uses rayon's default).
pub fn run_sweep<T: Scalar>(cfg: &SweepConfig, threads: Option<usize>) -> Result<SweepOutput> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::InvalidArgument("threads must be at least 1".into()));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    // curves[instance][key][gamma]
    let curves: Vec<Vec<Vec<f64>>> = pool.install(|| {
        (0..cfg.n_instances)
            .into_par_iter()
            .map(|i| run_instance::<T>(cfg, ExperimentSeed::new(cfg.base_seed, i as u64)))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(aggregate(cfg, curves))
}

pub fn run_bcq_noise_sweep<T: Scalar>(cfg: &SweepConfig, threads: Option<usize>) -> Result<SweepOutput> {
    expect_kind(cfg, SweepKind::BcqNoise)?;
    run_sweep::<T>(cfg, threads)
}

pub fn run_plain_coverage_sweep<T: Scalar>(cfg: &SweepConfig, threads: Option<usize>) -> Result<SweepOutput> {
    expect_kind(cfg, SweepKind::PlainCoverage)?;
    run_sweep::<T>(cfg, threads)
}

pub fn run_pevi_datasize_sweep<T: Scalar>(cfg: &SweepConfig, threads: Option<usize>) -> Result<SweepOutput> {
    expect_kind(cfg, SweepKind::PeviDatasize)?;
    run_sweep::<T>(cfg, threads)
}

fn expect_kind(cfg: &SweepConfig, kind: SweepKind) -> Result<()> {
    if cfg.kind != kind {
        return Err(Error::InvalidArgument(format!("expected a {kind} config, got {}", cfg.kind)));
    }
    Ok(())
}

fn aggregate(cfg: &SweepConfig, curves: Vec<Vec<Vec<f64>>>) -> SweepOutput {
    let keys = cfg.keys();
    let grid = &cfg.gamma_grid;
    let mut records = Vec::with_capacity(keys.len() * grid.len());
    let mut gamma_stars = Vec::with_capacity(keys.len());
    let mut per_instance = Vec::with_capacity(keys.len());
    for (ki, &key) in keys.iter().enumerate() {
        let by_instance: Vec<Vec<f64>> = curves.iter().map(|c| c[ki].clone()).collect();
        let mut means = Vec::with_capacity(grid.len());
        for (gi, &gamma) in grid.iter().enumerate() {
            let column: Vec<f64> = by_instance.iter().map(|c| c[gi]).collect();
            let (mean, std) = mean_std(&column);
            means.push(mean);
            let (mask_prop, noise_ratio, n) = match key {
                SweepKey::Noise(x) => (cfg.masked_proportions[0], Some(x), None),
                SweepKey::MaskProp(x) => (x, None, None),
                SweepKey::Size(n) => (cfg.masked_proportions[0], None, Some(n)),
            };
            records.push(SweepRecord {
                experiment: cfg.kind,
                n_states: cfg.n_states,
                n_actions: cfg.n_actions,
                mask_prop,
                noise_ratio,
                n,
                key,
                gamma,
                metric_name: cfg.kind.metric_name(),
                metric_mean: mean,
                metric_std: std,
                n_instances: cfg.n_instances,
            });
        }
        let (gamma_star, metric_at_star) = gamma_star(grid, &means);
        gamma_stars.push(GammaStar { key, gamma_star, metric_at_star });
        per_instance.push(by_instance);
    }
    SweepOutput { config: cfg.clone(), records, gamma_stars, per_instance }
}

/// Metric curves `[key][gamma]` for one instance.
fn run_instance<T: Scalar>(cfg: &SweepConfig, seed: ExperimentSeed) -> Result<Vec<Vec<f64>>> {
    let opts = cfg.opts::<T>();
    let true_mdp: TabularMdp<T> =
        random_tabular_mdp(cfg.n_states, cfg.n_actions, T::lit(cfg.r_max), seed.derive(TAG_MDP))?;
    let gamma_e = T::lit(cfg.gamma_e);
    let star_e = value_iteration(&true_mdp, gamma_e, &opts)?;
    let grid: Vec<T> = cfg.gamma_grid.iter().map(|&g| T::lit(g)).collect();
    match cfg.kind {
        SweepKind::BcqNoise => {
            let mask = random_mask(cfg.n_states, cfg.n_actions, cfg.masked_proportions[0], seed.derive(TAG_MASK))?;
            let model = empirical_mdp(&true_mdp, &mask, seed.derive(TAG_EMPIRICAL), cfg.unseen_model)?;
            cfg.noise_ratios
                .iter()
                .map(|&noise| {
                    let support = SupportConstraint::from(&widen_mask(&mask, noise, seed.derive(TAG_WIDEN))?);
                    error_curve(&grid, &star_e, &mask, |g| bcq_value_iteration(&model, &support, g, &opts))
                })
                .collect()
        }
        SweepKind::PlainCoverage => cfg
            .masked_proportions
            .iter()
            .enumerate()
            .map(|(mi, &prop)| {
                let sub = ExperimentSeed::new(seed.derive(TAG_MASK), mi as u64);
                let mask = random_mask(cfg.n_states, cfg.n_actions, prop, sub.derive(TAG_MASK))?;
                let model = empirical_mdp(&true_mdp, &mask, sub.derive(TAG_EMPIRICAL), cfg.unseen_model)?;
                error_curve(&grid, &star_e, &mask, |g| empirical_value_iteration(&model, g, &opts))
            })
            .collect(),
        SweepKind::PeviDatasize => {
            let mask = random_mask(cfg.n_states, cfg.n_actions, cfg.masked_proportions[0], seed.derive(TAG_MASK))?;
            let behavior = behavior_policy(&star_e.q, &mask)?;
            let features = OneHotFeatures::new(cfg.n_states, cfg.n_actions);
            let d = cfg.n_states * cfg.n_actions;
            let v_star = star_e.v.values();
            cfg.dataset_sizes
                .iter()
                .enumerate()
                .map(|(ni, &n)| {
                    let tag = ExperimentSeed::new(seed.derive(TAG_DATASET), ni as u64).stream_seed();
                    let dataset = sample_dataset(&true_mdp, &behavior, n, tag)?;
                    grid.iter()
                        .map(|&g| {
                            let (beta, _) =
                                theoretical_beta(d, T::lit(cfg.r_max), g, n.max(1), T::lit(cfg.xi), T::lit(cfg.beta_c))?;
                            let mut pcfg = PeviConfig::new(g, beta, T::lit(cfg.r_max));
                            pcfg.xi = T::lit(cfg.xi);
                            pcfg.lambda_reg = T::lit(cfg.lambda_reg);
                            pcfg.opts = opts;
                            let fit = pevi(&dataset, &features, &pcfg)?;
                            let v_pi = policy_evaluation_exact(&true_mdp, &fit.policy, gamma_e)?;
                            let gap = true_mdp
                                .init_dist()
                                .iter()
                                .zip(v_star.iter().zip(v_pi.values()))
                                .fold(T::zero(), |acc, (&mu, (&a, &b))| acc + mu * (a - b));
                            Ok(gap.as_f64())
                        })
                        .collect()
                })
                .collect()
        }
    }
}

fn error_curve<T: Scalar>(
    grid: &[T],
    star_e: &ValueIterationResult<T>,
    seen: &Mask,
    mut solve: impl FnMut(T) -> Result<ValueIterationResult<T>>,
) -> Result<Vec<f64>> {
    grid.iter()
        .map(|&g| Ok(estimation_error(&solve(g)?.q, &star_e.q, seen)?.as_f64()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(kind: SweepKind) -> SweepConfig {
        let mut cfg = SweepConfig::new(kind);
        cfg.n_states = 8;
        cfg.n_actions = 10;
        cfg.n_instances = 3;
        cfg.gamma_grid = discount_grid(0.85, 0.95, 0.05);
        cfg.base_seed = 5;
        if kind == SweepKind::PeviDatasize {
            cfg.dataset_sizes = vec![0, 50];
        }
        cfg
    }

    #[test]
    fn mean_std_sample_convention() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
        assert_eq!(mean_std(&[4.0]), (4.0, 0.0));
    }

    #[test]
    fn ties_pick_smallest_gamma() {
        assert_eq!(gamma_star(&[0.8, 0.9, 0.95], &[1.0, 0.5, 0.5]), (0.9, 0.5));
    }

    #[test]
    fn exact_recovery_without_masking() {
        let mut cfg = tiny(SweepKind::BcqNoise);
        cfg.masked_proportions = vec![0.0];
        cfg.noise_ratios = vec![0.0];
        let out = run_sweep::<f64>(&cfg, Some(1)).unwrap();
        let last = out.records.last().unwrap();
        assert_eq!(last.gamma, 0.95);
        assert!(last.metric_mean < 1e-8);
        assert_eq!(out.gamma_stars[0].gamma_star, 0.95);
    }

    #[test]
    fn records_cover_key_by_gamma() {
        let out = run_sweep::<f64>(&tiny(SweepKind::PlainCoverage), Some(2)).unwrap();
        assert_eq!(out.records.len(), 3 * 3);
        assert_eq!(out.gamma_stars.len(), 3);
        assert_eq!(out.per_instance.len(), 3);
        assert_eq!(out.per_instance[0].len(), 3);
        assert!(out.records.iter().all(|r| r.metric_std >= 0.0 && r.metric_mean.is_finite()));
    }

    #[test]
    fn pevi_without_data_is_seed_independent() {
        let mut cfg = tiny(SweepKind::PeviDatasize);
        cfg.dataset_sizes = vec![0];
        cfg.n_instances = 1;
        let a = run_sweep::<f64>(&cfg, Some(1)).unwrap();
        assert!(a.records.iter().all(|r| r.metric_mean >= -2.0 * cfg.tol / (1.0 - cfg.gamma_e)));
    }

    #[test]
    fn kind_mismatch_rejected() {
        assert!(run_bcq_noise_sweep::<f64>(&tiny(SweepKind::PlainCoverage), None).is_err());
    }

    #[test]
    fn invalid_grids_rejected() {
        let mut cfg = tiny(SweepKind::BcqNoise);
        cfg.gamma_grid = vec![0.9, 0.85];
        assert!(cfg.validate().is_err());
        cfg.gamma_grid = vec![0.99];
        assert!(cfg.validate().is_err());
        cfg.gamma_grid = vec![];
        assert!(cfg.validate().is_err());
    }
}
