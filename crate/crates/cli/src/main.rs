mod args;
mod config;
mod manifest;

use args::{Cli, Command, MdpSource, SweepArgs};
use clap::Parser;
use config::Resolver;
use manifest::{Outputs, RunManifest};
use offrl::analysis::{bound_report, policy_coverage, theorem2_bound};
use offrl::io::{fmt_float, load_dataset, load_mdp, write_dataset_csv, write_mdp_json, write_table};
use offrl::*;
use serde_json::{json, Value};
use std::path::PathBuf;
use std::process::ExitCode;

const TAG_MDP: u64 = 1;
const TAG_MASK: u64 = 2;
const TAG_DATA: u64 = 5;

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl From<offrl::Error> for CliError {
    fn from(e: offrl::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl CliError {
    fn emit(&self) -> ExitCode {
        let (kind, message, code) = match self {
            CliError::Validation(m) => ("validation", m, 2),
            CliError::Runtime(m) => ("runtime", m, 1),
        };
        eprintln!("{}", json!({ "error": { "kind": kind, "message": message } }));
        ExitCode::from(code)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            return CliError::Validation(e.kind().to_string()).emit();
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => e.emit(),
    }
}

/// Settings shared by every subcommand.
struct Globals {
    seed: u64,
    out: PathBuf,
    tol: f64,
    threads: Option<usize>,
    started_at: String,
}

impl Globals {
    fn opts(&self) -> SolveOptions64 {
        SolveOptions::with_tol(self.tol)
    }

    fn seed(&self, tag: u64) -> u64 {
        ExperimentSeed::new(self.seed, 0).derive(tag)
    }

    fn manifest(&self, cfg: &Resolver, command: &str) -> RunManifest {
        RunManifest {
            tool: "offrl",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config: cfg.resolved(),
            base_seed: self.seed,
            started_at: self.started_at.clone(),
            finished_at: chrono::Utc::now().to_rfc3339(),
            outputs: Vec::new(),
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let name = cli.command.name();
    let cfg = Resolver::load(cli.config.as_deref(), name)?;
    let threads = match cli.threads {
        Some(t) => Some(t),
        None => cfg.global::<Option<usize>>(None, "threads", None)?,
    };
    if threads == Some(0) {
        return Err(CliError::Validation("--threads must be at least 1".into()));
    }
    let g = Globals {
        seed: cfg.global(cli.seed, "seed", 0)?,
        out: cfg.global(cli.out, "out", PathBuf::from("."))?,
        tol: cfg.global(cli.tol, "tol", 1e-10)?,
        threads,
        started_at: chrono::Utc::now().to_rfc3339(),
    };
    if g.tol.is_nan() || g.tol <= 0.0 {
        return Err(CliError::Validation("--tol must be positive".into()));
    }
    match cli.command {
        Command::GenMdp(src) => gen_mdp(&g, &cfg, &src),
        Command::Solve(a) => solve(&g, &cfg, &a),
        Command::Dataset(a) => dataset(&g, &cfg, &a),
        Command::BcqSweep(a) => sweep(&g, &cfg, SweepKind::BcqNoise, a),
        Command::CoverageSweep(a) => sweep(&g, &cfg, SweepKind::PlainCoverage, a),
        Command::PeviSweep(a) => sweep(&g, &cfg, SweepKind::PeviDatasize, a),
        Command::CheckLemma3(a) => check_mixture(&g, &cfg, &a),
        Command::VerifyLemma1(a) => sandwich(&g, &cfg, &a),
        Command::Bounds(a) => bounds(&g, &cfg, &a),
        Command::Coverage(a) => coverage(&g, &cfg, &a),
    }
}

/// JSON number, or a string for values JSON cannot hold.
fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(x.to_string())
    }
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string(v).expect("serializable"));
}

fn parse_grid(spec: &str, gamma_e: f64) -> CliResult<Vec<f64>> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| CliError::Validation(format!("grid must be lo:step:hi, got {spec:?}")))?;
    let grid = match parts[..] {
        [lo, step, hi] => discount_grid(lo, hi, step),
        [lo, step] => discount_grid(lo, gamma_e, step),
        _ => return Err(CliError::Validation(format!("grid must be lo:step:hi, got {spec:?}"))),
    };
    if grid.is_empty() {
        return Err(CliError::Validation(format!("grid {spec:?} is empty")));
    }
    Ok(grid)
}

fn load_source(g: &Globals, cfg: &Resolver, src: &MdpSource) -> CliResult<TabularMdp64> {
    let path: Option<PathBuf> = cfg.opt(src.mdp.clone(), "mdp")?;
    let states = cfg.get(src.states, "states", 10)?;
    let actions = cfg.get(src.actions, "actions", 3)?;
    let r_max = cfg.get(src.r_max, "r_max", 1.0)?;
    match path {
        Some(p) => load_mdp(&p).map_err(|e| match e {
            offrl::Error::Io(io) => CliError::Validation(format!("cannot read {}: {io}", p.display())),
            other => other.into(),
        }),
        None => Ok(random_tabular_mdp(states, actions, r_max, g.seed(TAG_MDP))?),
    }
}

fn gen_mdp(g: &Globals, cfg: &Resolver, src: &MdpSource) -> CliResult<()> {
    let mdp = load_source(g, cfg, src)?;
    cfg.finish()?;
    let mut out = Outputs::new(&g.out)?;
    let mut buf = Vec::new();
    write_mdp_json(&mdp, &mut buf)?;
    let path = out.write("mdp.json", &buf)?;
    out.finish(g.manifest(cfg, "gen-mdp"))?;
    print_json(&json!({ "mdp": path }));
    Ok(())
}

fn solve(g: &Globals, cfg: &Resolver, a: &args::SolveArgs) -> CliResult<()> {
    let mdp = load_source(g, cfg, &a.source)?;
    let gamma = cfg.get(a.gamma, "gamma", 0.9)?;
    cfg.finish()?;
    let res = value_iteration(&mdp, gamma, &g.opts())?;
    let k = mdp.n_actions();
    let report = json!({
        "gamma": gamma,
        "iterations": res.iterations(),
        "v": res.v.values(),
        "q": res.q.values().chunks(k).collect::<Vec<_>>(),
        "policy": res.policy.actions().expect("greedy policy is deterministic"),
    });
    let mut out = Outputs::new(&g.out)?;
    let path = out.write("solve.json", &serde_json::to_vec_pretty(&report).expect("serializable"))?;
    out.finish(g.manifest(cfg, "solve"))?;
    print_json(&json!({ "report": path, "v": res.v.values() }));
    Ok(())
}

fn dataset(g: &Globals, cfg: &Resolver, a: &args::DatasetArgs) -> CliResult<()> {
    let mdp = load_source(g, cfg, &a.source)?;
    let n = cfg.get(a.n, "n", 1000)?;
    let gamma_e = cfg.get(a.gamma_e, "gamma_e", 0.95)?;
    let masked = cfg.get(a.masked_proportion, "masked_proportion", 0.0)?;
    cfg.finish()?;
    let star = value_iteration(&mdp, gamma_e, &g.opts())?;
    let mask = random_mask(mdp.n_states(), mdp.n_actions(), masked, g.seed(TAG_MASK))?;
    let behavior = behavior_policy(&star.q, &mask)?;
    let data = sample_dataset(&mdp, &behavior, n, g.seed(TAG_DATA))?;
    let mut buf = Vec::new();
    write_dataset_csv(&data, &mut buf)?;
    let mut out = Outputs::new(&g.out)?;
    let path = out.write("dataset.csv", &buf)?;
    out.finish(g.manifest(cfg, "dataset"))?;
    print_json(&json!({ "dataset": path, "transitions": n }));
    Ok(())
}

fn sweep(g: &Globals, cfg: &Resolver, kind: SweepKind, a: SweepArgs) -> CliResult<()> {
    let mut sc = SweepConfig::new(kind);
    sc.base_seed = g.seed;
    sc.tol = g.tol;
    sc.n_states = cfg.get(a.states, "states", sc.n_states)?;
    sc.n_actions = cfg.get(a.actions, "actions", sc.n_actions)?;
    sc.n_instances = cfg.get(a.instances, "instances", sc.n_instances)?;
    sc.gamma_e = cfg.get(a.gamma_e, "gamma_e", sc.gamma_e)?;
    if let Some(spec) = cfg.opt(a.grid, "grid")? {
        sc.gamma_grid = parse_grid(&spec, sc.gamma_e)?;
    } else {
        sc.gamma_grid = discount_grid(0.80, sc.gamma_e, 0.01);
    }
    sc.masked_proportions = cfg.get(a.mask_props, "mask_props", sc.masked_proportions)?;
    sc.noise_ratios = cfg.get(a.noise, "noise", sc.noise_ratios)?;
    sc.dataset_sizes = cfg.get(a.sizes, "sizes", sc.dataset_sizes)?;
    sc.r_max = cfg.get(a.r_max, "r_max", sc.r_max)?;
    let model = cfg.get(a.unseen_model, "unseen_model", sc.unseen_model.to_string())?;
    sc.unseen_model = model.parse()?;
    sc.beta_c = cfg.get(a.beta_c, "beta_c", sc.beta_c)?;
    sc.xi = cfg.get(a.xi, "xi", sc.xi)?;
    sc.lambda_reg = cfg.get(a.lambda, "lambda", sc.lambda_reg)?;
    cfg.finish()?;
    sc.validate()?;

    let result = run_sweep::<f64>(&sc, g.threads)?;
    let mut out = Outputs::new(&g.out)?;
    let mut buf = Vec::new();
    result.write_results_csv(&mut buf)?;
    out.write("results.csv", &buf)?;
    buf.clear();
    result.write_gamma_star_csv(&mut buf)?;
    out.write("gamma_star.csv", &buf)?;
    buf.clear();
    result.write_instances_csv(&mut buf)?;
    out.write("instances.csv", &buf)?;
    let mut manifest = g.manifest(cfg, &kind.to_string());
    manifest.config = json!({ "sweep": sc, "threads": g.threads });
    out.finish(manifest)?;
    let stars: Vec<Value> = result
        .gamma_stars
        .iter()
        .map(|s| json!({ "key": s.key.to_string(), "gamma_star": s.gamma_star, "metric_at_star": num(s.metric_at_star) }))
        .collect();
    print_json(&json!({ "experiment": kind.to_string(), "gamma_star": stars }));
    Ok(())
}

fn check_mixture(g: &Globals, cfg: &Resolver, a: &args::Lemma3Args) -> CliResult<()> {
    let mdp = load_source(g, cfg, &a.source)?;
    let gamma = cfg.get(a.gamma, "gamma", 0.9)?;
    let epsilon = cfg.get(a.epsilon, "epsilon", 0.1)?;
    cfg.finish()?;
    let check = check_lemma3(&mdp, gamma, epsilon, &g.opts())?;
    print_json(&json!({ "delta": num(check.delta), "max_abs_gap": num(check.max_abs_gap) }));
    Ok(())
}

fn sandwich(g: &Globals, cfg: &Resolver, a: &args::Lemma1Args) -> CliResult<()> {
    let mdp = load_source(g, cfg, &a.source)?;
    let gamma = cfg.get(a.gamma, "gamma", 0.9)?;
    let gamma_e = cfg.get(a.gamma_e, "gamma_e", 0.95)?;
    let which = cfg.get(a.policy.clone(), "policy", "optimal".to_string())?;
    cfg.finish()?;
    let pi = target_policy(&mdp, &which, gamma, g)?;
    let check = verify_lemma1(&mdp, &pi, gamma, gamma_e, &g.opts())?;
    let gap = lemma1_gap(gamma, gamma_e, mdp.r_max())?;
    print_json(&json!({
        "lower_ok": check.lower_ok,
        "upper_ok": check.upper_ok,
        "slack": num(check.slack),
        "gap": num(gap),
    }));
    if check.lower_ok && check.upper_ok {
        Ok(())
    } else {
        Err(CliError::Runtime("value sandwich violated".into()))
    }
}

fn target_policy(mdp: &TabularMdp64, which: &str, gamma: f64, g: &Globals) -> CliResult<Policy64> {
    match which {
        "optimal" => Ok(value_iteration(mdp, gamma, &g.opts())?.policy),
        "uniform" => Ok(Policy::uniform(mdp.n_states(), mdp.n_actions())),
        other => Err(CliError::Validation(format!("policy must be optimal or uniform, got {other:?}"))),
    }
}

fn bounds(g: &Globals, cfg: &Resolver, a: &args::BoundsArgs) -> CliResult<()> {
    let defaults = BoundInputs64::default();
    let gamma_e = cfg.get(a.gamma_e, "gamma_e", defaults.gamma_e)?;
    let inputs = BoundInputs {
        d: cfg.get(a.d, "d", defaults.d)?,
        n: cfg.get(a.n, "n", defaults.n)?,
        coverage: cfg.get(a.coverage, "coverage", defaults.coverage)?,
        c: cfg.get(a.c, "c", defaults.c)?,
        c1: cfg.get(a.c1, "c1", defaults.c1)?,
        c2: cfg.get(a.c2, "c2", defaults.c2)?,
        c3: cfg.get(a.c3, "c3", defaults.c3)?,
        xi: cfg.get(a.xi, "xi", defaults.xi)?,
        r_max: cfg.get(a.r_max, "r_max", defaults.r_max)?,
        gamma: gamma_e,
        gamma_e,
    };
    let spec = cfg.get(a.grid.clone(), "grid", "0:0.01".to_string())?;
    cfg.finish()?;
    let grid = parse_grid(&spec, gamma_e)?;
    let rows: Vec<Vec<String>> = bound_report(&inputs, &grid)?
        .iter()
        .map(|r| {
            [r.gamma, r.lemma2_term, r.lemma1_term, r.theorem1_total].iter().map(|&x| fmt_float(x)).collect()
        })
        .collect();
    let mut buf = Vec::new();
    write_table(&mut buf, &["gamma", "lemma2_term", "lemma1_term", "theorem1_total"], &rows)?;
    let (gamma_star, best) = optimal_guidance_gamma(&inputs, &grid)?;
    let lower = match theorem2_bound(&inputs) {
        Ok((bound, eps)) => json!({ "bound": num(bound), "epsilon": num(eps) }),
        Err(offrl::Error::DatasetTooSmall(eps)) => json!({ "bound": Value::Null, "epsilon": num(eps) }),
        Err(e) => return Err(e.into()),
    };
    let mut out = Outputs::new(&g.out)?;
    let path = out.write("bounds.csv", &buf)?;
    out.finish(g.manifest(cfg, "bounds"))?;
    print_json(&json!({
        "report": path,
        "gamma_star": gamma_star,
        "bound_at_star": num(best),
        "lower_discount": lower,
    }));
    Ok(())
}

fn coverage(g: &Globals, cfg: &Resolver, a: &args::CoverageArgs) -> CliResult<()> {
    let mdp = load_source(g, cfg, &a.source)?;
    let gamma = cfg.get(a.gamma, "gamma", 0.95)?;
    let which = cfg.get(a.policy.clone(), "policy", "optimal".to_string())?;
    let agg = cfg.get(a.aggregation.clone(), "aggregation", "initial".to_string())?;
    cfg.finish()?;
    let aggregation = match agg.as_str() {
        "initial" => CoverageAggregation::InitialDistribution,
        "worst-state" => CoverageAggregation::WorstStartState,
        other => return Err(CliError::Validation(format!("aggregation must be initial or worst-state, got {other:?}"))),
    };
    let data = load_dataset::<f64>(&a.dataset).map_err(|e| match e {
        offrl::Error::Io(io) => CliError::Validation(format!("cannot read {}: {io}", a.dataset.display())),
        other => other.into(),
    })?;
    let (n, k) = (mdp.n_states(), mdp.n_actions());
    data.validate(n, k, mdp.r_max())?;
    if data.is_empty() {
        return Err(CliError::Validation("dataset is empty".into()));
    }
    let pi = target_policy(&mdp, &which, gamma, g)?;
    let features = OneHotFeatures::new(n, k);
    let c = policy_coverage(&mdp, &data.pair_frequencies(n, k), &pi, gamma, &features, aggregation)?;
    print_json(&json!({ "coverage": num(c), "transitions": data.len() }));
    Ok(())
}
