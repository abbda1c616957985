//! Experiment driver: loads a model config, runs one pipeline, and writes
//! its artifacts plus a reproduction manifest into an output directory.
//!
//! Exit codes: 0 ok; 2 config or I/O problem; 3 a solver hit its iteration
//! budget (partial artifacts are kept); 4 a verification command found a
//! violated invariant (model validation, cross-check, or bound row).

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hmdp::dp_belief::{belief_q_iteration, BeliefGrid};
use hmdp::dp_markov::{
    certified_residual_threshold, greedy_policy_from_q, greedy_policy_from_values,
    policy_evaluation, q_value_iteration, sup_distance, value_iteration, InfoSpace,
    IterationTrace, MixingWeights,
};
use hmdp::dp_nonmarkov::{
    bound_report, estimate_lipschitz, nonmarkov_q_sequence, suboptimality_bound, BoundReport,
    LipschitzEstimate, LipschitzMode,
};
use hmdp::info::InfoState;
use hmdp::model::{validate_model, MdpModel, ModelConfig};
use hmdp::report::{
    write_aug_q_csv, write_bound_csv, write_json, write_policy_csv, write_q_csv,
    write_residuals_csv, write_trace_columnar, write_trace_jsonl, write_value_csv, Manifest,
    Reproduction, RunInfo,
};
use hmdp::sim::{
    belief_trajectory_from_episode, default_horizon, monte_carlo_value, simulate_episode,
    BehaviorPolicy, EpisodeInit, EpisodeTrace,
};
use hmdp::{Error, Result};

const EXIT_CONFIG: u8 = 2;
const EXIT_NON_CONVERGED: u8 = 3;
const EXIT_VIOLATION: u8 = 4;

#[derive(Parser)]
#[command(name = "hmdp", version, about = "Grid/mode decision-process toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check model invariants and write the violation list.
    Validate(ValidateArgs),
    /// Solve the window-table fixed point by value or Q iteration.
    Solve(SolveArgs),
    /// Evaluate the greedy policy and cross-check it against rollouts.
    Evaluate(EvaluateArgs),
    /// Solve the belief-augmented fixed point on a simplex lattice.
    BeliefSolve(BeliefSolveArgs),
    /// Realized-path sweep sequence checked against its error bound.
    Bound(BoundArgs),
    /// Window-mixing Lipschitz estimates for a range of memories.
    Lipschitz(LipschitzArgs),
    /// Roll out episode batches and dump the traces.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct Common {
    /// Model config file (TOML).
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
    /// Output directory; defaults to $HMDP_OUT, then ./hmdp-out.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Base seed; episode e runs on stream e of this seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Discount override replacing the config value.
    #[arg(long)]
    gamma: Option<f64>,
    /// Worker-thread cap (0 keeps the library default).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum MixingChoice {
    /// Equal weight on every mode.
    Uniform,
    /// Stationary distribution of the (constant) chain.
    Stationary,
    /// Open-loop belief composed along each window from the model's
    /// initial mode distribution.
    Composed,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum AlgorithmChoice {
    Value,
    Q,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum LipschitzModeChoice {
    Exact,
    Sampled,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum PolicyChoice {
    UniformRandom,
    Greedy,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    /// Window memory L (window length L + 1).
    #[arg(long, default_value_t = 1)]
    memory: usize,
    /// Convergence tolerance on the fixed-point distance.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Iteration budget.
    #[arg(long, default_value_t = 10_000)]
    iters: usize,
    #[arg(long, value_enum, default_value_t = MixingChoice::Stationary)]
    mixing: MixingChoice,
    #[arg(long, value_enum, default_value_t = AlgorithmChoice::Q)]
    algorithm: AlgorithmChoice,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 1)]
    memory: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    iters: usize,
    #[arg(long, value_enum, default_value_t = MixingChoice::Stationary)]
    mixing: MixingChoice,
    /// Rollout count for the Monte-Carlo side.
    #[arg(long, default_value_t = 100_000)]
    episodes: usize,
    /// Rollout horizon; defaults to the smallest with tail under 1e-6.
    #[arg(long)]
    max_steps: Option<usize>,
}

#[derive(Args)]
struct BeliefSolveArgs {
    #[command(flatten)]
    common: Common,
    /// Simplex lattice resolution m (lattice spacing 1/m).
    #[arg(long, default_value_t = 20)]
    belief_res: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    iters: usize,
}

#[derive(Args)]
struct BoundArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 1)]
    memory: usize,
    #[arg(long, default_value_t = 40)]
    belief_res: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    iters: usize,
    /// Number of sweeps K checked per episode.
    #[arg(long, default_value_t = 50)]
    sweeps: usize,
    /// Number of episode seeds (streams) to verify.
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    #[arg(long, value_enum, default_value_t = LipschitzModeChoice::Exact)]
    lipschitz_mode: LipschitzModeChoice,
    /// Window samples in sampled mode.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
}

#[derive(Args)]
struct LipschitzArgs {
    #[command(flatten)]
    common: Common,
    /// Largest memory: estimates cover L = 0..=memory.
    #[arg(long, default_value_t = 4)]
    memory: usize,
    #[arg(long, value_enum, default_value_t = LipschitzModeChoice::Exact)]
    lipschitz_mode: LipschitzModeChoice,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long, value_enum, default_value_t = PolicyChoice::UniformRandom)]
    policy: PolicyChoice,
    /// Memory of the greedy policy (ignored for uniform-random).
    #[arg(long, default_value_t = 1)]
    memory: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    iters: usize,
    #[arg(long, value_enum, default_value_t = MixingChoice::Stationary)]
    mixing: MixingChoice,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::NonConverged { .. } => EXIT_NON_CONVERGED,
                _ => EXIT_CONFIG,
            }
        }
    };
    ExitCode::from(code)
}

fn run(cli: Cli) -> Result<u8> {
    let threads = match &cli.command {
        Command::Validate(a) => a.common.threads,
        Command::Solve(a) => a.common.threads,
        Command::Evaluate(a) => a.common.threads,
        Command::BeliefSolve(a) => a.common.threads,
        Command::Bound(a) => a.common.threads,
        Command::Lipschitz(a) => a.common.threads,
        Command::Simulate(a) => a.common.threads,
    };
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Validate(a) => cmd_validate(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::BeliefSolve(a) => cmd_belief_solve(a),
        Command::Bound(a) => cmd_bound(a),
        Command::Lipschitz(a) => cmd_lipschitz(a),
        Command::Simulate(a) => cmd_simulate(a),
    }
}

fn out_dir(common: &Common) -> Result<PathBuf> {
    let dir = common
        .out
        .clone()
        .or_else(|| std::env::var_os("HMDP_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("hmdp-out"));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Builds the model with the gamma override applied, without validating.
fn build_model(common: &Common) -> Result<MdpModel> {
    let config = ModelConfig::from_path(&common.model)?;
    let mut model = config.build()?;
    if let Some(gamma) = common.gamma {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::Config(format!(
                "gamma override {gamma} outside [0, 1)"
            )));
        }
        model.gamma = gamma;
    }
    Ok(model)
}

/// Builds and validates; commands other than `validate` refuse broken models.
fn load_model(common: &Common) -> Result<MdpModel> {
    let model = build_model(common)?;
    let violations = validate_model(&model);
    if let Some(v) = violations.first() {
        return Err(Error::Config(format!(
            "model fails validation ({} violation(s)); first: {v}",
            violations.len()
        )));
    }
    Ok(model)
}

fn mixing_weights(
    model: &MdpModel,
    space: InfoSpace,
    choice: MixingChoice,
) -> Result<MixingWeights> {
    match choice {
        MixingChoice::Uniform => MixingWeights::uniform(space, model.num_modes),
        MixingChoice::Stationary => MixingWeights::stationary(space, &model.chain),
        MixingChoice::Composed => MixingWeights::composed(space, &model.chain, &model.initial_s),
    }
}

struct ManifestInput<'a> {
    command: &'static str,
    model: &'a MdpModel,
    common: &'a Common,
    parameters: BTreeMap<String, serde_json::Value>,
    streams: u64,
    started: Instant,
}

fn write_manifest(dir: &std::path::Path, input: ManifestInput<'_>) -> Result<()> {
    let mut parameters = input.parameters;
    parameters.insert(
        "model".into(),
        serde_json::json!(input.common.model.display().to_string()),
    );
    if let Some(g) = input.common.gamma {
        parameters.insert("gamma_override".into(), serde_json::json!(g));
    }
    let manifest = Manifest::new(
        Reproduction {
            command: input.command.into(),
            model_sha256: input.model.content_hash(),
            parameters,
            base_seed: input.common.seed,
            streams: input.streams,
            generator: hmdp::rng::GENERATOR.into(),
            version: env!("CARGO_PKG_VERSION").into(),
        },
        RunInfo {
            wall_time_s: input.started.elapsed().as_secs_f64(),
            threads: rayon::current_num_threads(),
        },
    );
    write_json(&dir.join("manifest.json"), &manifest)
}

fn final_residual(trace: &IterationTrace) -> f64 {
    trace.residuals.last().copied().unwrap_or(0.0)
}

fn cmd_validate(a: ValidateArgs) -> Result<u8> {
    let started = Instant::now();
    let dir = out_dir(&a.common)?;
    let model = build_model(&a.common)?;
    let violations = validate_model(&model);
    #[derive(serde::Serialize)]
    struct ValidationReport {
        model_sha256: String,
        valid: bool,
        violations: Vec<hmdp::model::Violation>,
    }
    write_json(
        &dir.join("validation.json"),
        &ValidationReport {
            model_sha256: model.content_hash(),
            valid: violations.is_empty(),
            violations: violations.clone(),
        },
    )?;
    write_manifest(
        &dir,
        ManifestInput {
            command: "validate",
            model: &model,
            common: &a.common,
            parameters: BTreeMap::new(),
            streams: 0,
            started,
        },
    )?;
    for v in &violations {
        eprintln!("violation: {v}");
    }
    Ok(if violations.is_empty() { 0 } else { EXIT_VIOLATION })
}

#[derive(serde::Serialize)]
struct SolveSummary {
    algorithm: String,
    mixing: String,
    memory: usize,
    gamma: f64,
    tol: f64,
    residual_threshold: f64,
    iterations: usize,
    converged: bool,
    final_residual: f64,
    num_windows: usize,
    num_actions: usize,
}

fn cmd_solve(a: SolveArgs) -> Result<u8> {
    let started = Instant::now();
    let dir = out_dir(&a.common)?;
    let model = load_model(&a.common)?;
    let space = InfoSpace::new(model.num_points(), a.memory)?;
    let w = mixing_weights(&model, space, a.mixing)?;
    let labels = model.actions.labels();

    let (trace, policy) = match a.algorithm {
        AlgorithmChoice::Value => {
            let sol = value_iteration(&model, &w, a.tol, a.iters)?;
            write_value_csv(&dir.join("values.csv"), &sol.values)?;
            let policy = greedy_policy_from_values(&model, &w, &sol.values)?;
            (sol.trace, policy)
        }
        AlgorithmChoice::Q => {
            let sol = q_value_iteration(&model, &w, a.tol, a.iters)?;
            write_q_csv(&dir.join("q.csv"), &sol.q, &labels)?;
            write_value_csv(&dir.join("values.csv"), &sol.q.min_values())?;
            let policy = greedy_policy_from_q(&sol.q);
            (sol.trace, policy)
        }
    };
    write_policy_csv(&dir.join("policy.csv"), &policy, &labels)?;
    write_residuals_csv(&dir.join("residuals.csv"), &trace)?;
    let summary = SolveSummary {
        algorithm: format!("{:?}", a.algorithm).to_lowercase(),
        mixing: format!("{:?}", a.mixing).to_lowercase(),
        memory: a.memory,
        gamma: model.gamma,
        tol: a.tol,
        residual_threshold: certified_residual_threshold(model.gamma, a.tol),
        iterations: trace.residuals.len(),
        converged: trace.converged,
        final_residual: final_residual(&trace),
        num_windows: space.count(),
        num_actions: model.num_actions(),
    };
    write_json(&dir.join("solution.json"), &summary)?;
    let mut parameters = BTreeMap::new();
    parameters.insert("memory".into(), serde_json::json!(a.memory));
    parameters.insert("tol".into(), serde_json::json!(a.tol));
    parameters.insert("iters".into(), serde_json::json!(a.iters));
    parameters.insert("mixing".into(), serde_json::json!(summary.mixing));
    parameters.insert("algorithm".into(), serde_json::json!(summary.algorithm));
    write_manifest(
        &dir,
        ManifestInput {
            command: "solve",
            model: &model,
            common: &a.common,
            parameters,
            streams: 0,
            started,
        },
    )?;
    Ok(if trace.converged { 0 } else { EXIT_NON_CONVERGED })
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<u8> {
    let started = Instant::now();
    let dir = out_dir(&a.common)?;
    let model = load_model(&a.common)?;
    let space = InfoSpace::new(model.num_points(), a.memory)?;
    let w = mixing_weights(&model, space, a.mixing)?;
    let labels = model.actions.labels();

    let qsol = q_value_iteration(&model, &w, a.tol, a.iters)?;
    let policy = greedy_policy_from_q(&qsol.q);
    let psol = policy_evaluation(&model, &w, &policy, a.tol, a.iters)?;
    write_policy_csv(&dir.join("policy.csv"), &policy, &labels)?;
    write_value_csv(&dir.join("policy_values.csv"), &psol.values)?;
    // The greedy policy is optimal on the table, so its evaluation must
    // reproduce the optimal values up to both solves' tolerances.
    let optimality_gap = sup_distance(&qsol.q.min_values(), &psol.values)?;

    let horizon = match a.max_steps {
        Some(h) => h,
        None => default_horizon(model.gamma, model.reward.bound(), 1e-6)?,
    };
    let mc = monte_carlo_value(
        &model,
        BehaviorPolicy::Deterministic(&policy),
        &EpisodeInit::default(),
        a.common.seed,
        a.episodes,
        horizon,
    )?;

    // The model's start distribution draws a state and repeats it through
    // the window, so the comparable table value is the start-weighted mean
    // over repeated windows.
    let mut dp_mean = 0.0;
    for (x, &p) in model.initial_x.iter().enumerate() {
        if p > 0.0 {
            let info = InfoState::repeated(x, a.memory, model.num_points())?;
            dp_mean += p * psol.values.get(space.index_of(&info)?);
        }
    }
    let margin = 3.0 * mc.std_error + mc.tail_bound + 2.0 * a.tol;
    let difference = (dp_mean - mc.mean).abs();
    let consistent = difference <= margin && optimality_gap <= 2.0 * a.tol;

    #[derive(serde::Serialize)]
    struct EvaluateSummary {
        dp_mean: f64,
        optimality_gap: f64,
        mc: hmdp::sim::McEstimate,
        difference: f64,
        margin: f64,
        consistent: bool,
        converged: bool,
    }
    let converged = qsol.trace.converged && psol.trace.converged;
    write_json(
        &dir.join("evaluate.json"),
        &EvaluateSummary {
            dp_mean,
            optimality_gap,
            mc,
            difference,
            margin,
            consistent,
            converged,
        },
    )?;
    let mut parameters = BTreeMap::new();
    parameters.insert("memory".into(), serde_json::json!(a.memory));
    parameters.insert("tol".into(), serde_json::json!(a.tol));
    parameters.insert("iters".into(), serde_json::json!(a.iters));
    parameters.insert("episodes".into(), serde_json::json!(a.episodes));
    parameters.insert("horizon".into(), serde_json::json!(horizon));
    write_manifest(
        &dir,
        ManifestInput {
            command: "evaluate",
            model: &model,
            common: &a.common,
            parameters,
            streams: a.episodes as u64,
            started,
        },
    )?;
    Ok(if !converged {
        EXIT_NON_CONVERGED
    } else if consistent {
        0
    } else {
        EXIT_VIOLATION
    })
}

fn cmd_belief_solve(a: BeliefSolveArgs) -> Result<u8> {
    let started = Instant::now();
    let dir = out_dir(&a.common)?;
    let model = load_model(&a.common)?;
    let bgrid = BeliefGrid::new(model.num_modes, a.belief_res)?;
    let sol = belief_q_iteration(&model, &bgrid, a.tol, a.iters)?;
    let labels = model.actions.labels();
    write_aug_q_csv(&dir.join("aug_q.csv"), &sol.q, &bgrid, &labels)?;
    write_residuals_csv(&dir.join("residuals.csv"), &sol.trace)?;

    #[derive(serde::Serialize)]
    struct BeliefSolveSummary {
        resolution: usize,
        lattice_points: usize,
        gamma: f64,
        tol: f64,
        iterations: usize,
        converged: bool,
        final_residual: f64,
    }
    write_json(
        &dir.join("belief_solution.json"),
        &BeliefSolveSummary {
            resolution: a.belief_res,
            lattice_points: bgrid.len(),
            gamma: model.gamma,
            tol: a.tol,
            iterations: sol.trace.residuals.len(),
            converged: sol.trace.converged,
            final_residual: final_residual(&sol.trace),
        },
    )?;
    let mut parameters = BTreeMap::new();
    parameters.insert("belief_res".into(), serde_json::json!(a.belief_res));
    parameters.insert("tol".into(), serde_json::json!(a.tol));
    parameters.insert("iters".into(), serde_json::json!(a.iters));
    write_manifest(
        &dir,
        ManifestInput {
            command: "belief-solve",
            model: &model,
            common: &a.common,
            parameters,
            streams: 0,
            started,
        },
    )?;
    Ok(if sol.trace.converged {
        0
    } else {
        EXIT_NON_CONVERGED
    })
}

fn lipschitz_mode(choice: LipschitzModeChoice, samples: usize, seed: u64) -> LipschitzMode {
    match choice {
        LipschitzModeChoice::Exact => LipschitzMode::Exact,
        LipschitzModeChoice::Sampled => LipschitzMode::Sampled {
            windows: samples,
            seed,
        },
    }
}

fn cmd_bound(a: BoundArgs) -> Result<u8> {
    let started = Instant::now();
    let dir = out_dir(&a.common)?;
    let model = load_model(&a.common)?;
    let bgrid = BeliefGrid::new(model.num_modes, a.belief_res)?;
    let reference = belief_q_iteration(&model, &bgrid, a.tol, a.iters)?;
    if !reference.trace.converged {
        return Err(Error::NonConverged {
            iterations: reference.trace.residuals.len(),
            residual: final_residual(&reference.trace),
        });
    }
    let lip = estimate_lipschitz(
        &model,
        a.memory,
        lipschitz_mode(a.lipschitz_mode, a.samples, a.common.seed),
    )?;
    let samples = bgrid.points().to_vec();

    #[derive(serde::Serialize)]
    struct SeedOutcome {
        stream: u64,
        exited: bool,
        all_satisfied: bool,
        report: BoundReport,
    }
    let mut outcomes: Vec<SeedOutcome> = Vec::new();
    for stream in 0..a.seeds {
        let trace = simulate_episode(
            &model,
            BehaviorPolicy::UniformRandom,
            &EpisodeInit::default(),
            a.common.seed,
            stream,
            a.sweeps,
        )?;
        if trace.steps.len() < a.sweeps {
            return Err(Error::Config(format!(
                "episode on stream {stream} exited after {} steps; {} sweeps need an \
                 exit-free run (use a zero-exit model for bound checks)",
                trace.steps.len(),
                a.sweeps
            )));
        }
        let traj = belief_trajectory_from_episode(&model, &trace, None)?;
        let report = nonmarkov_q_sequence(&model, a.memory, &traj, a.sweeps).and_then(|seq| {
            bound_report(&model, &seq, &reference.q, &bgrid, &lip, &samples)
        })?;
        write_bound_csv(&dir.join(format!("bound_seed{stream}.csv")), &report)?;
        outcomes.push(SeedOutcome {
            stream,
            exited: trace.tau().is_some(),
            all_satisfied: report.all_satisfied(),
            report,
        });
    }

    let exit_free = model.kernel.is_exit_free();
    let in_scope_violation = exit_free && outcomes.iter().any(|o| !o.all_satisfied);
    #[derive(serde::Serialize)]
    struct BoundSummary {
        lipschitz: LipschitzEstimate,
        limit_bound: f64,
        exit_free: bool,
        sweeps: usize,
        seeds: u64,
        all_satisfied: bool,
        outcomes: Vec<SeedOutcome>,
    }
    write_json(
        &dir.join("bound_summary.json"),
        &BoundSummary {
            lipschitz: lip.clone(),
            limit_bound: suboptimality_bound(
                model.reward.bound(),
                model.gamma,
                model.num_modes,
                lip.value,
                None,
            )?,
            exit_free,
            sweeps: a.sweeps,
            seeds: a.seeds,
            all_satisfied: outcomes.iter().all(|o| o.all_satisfied),
            outcomes,
        },
    )?;
    let mut parameters = BTreeMap::new();
    parameters.insert("memory".into(), serde_json::json!(a.memory));
    parameters.insert("belief_res".into(), serde_json::json!(a.belief_res));
    parameters.insert("tol".into(), serde_json::json!(a.tol));
    parameters.insert("iters".into(), serde_json::json!(a.iters));
    parameters.insert("sweeps".into(), serde_json::json!(a.sweeps));
    parameters.insert("seeds".into(), serde_json::json!(a.seeds));
    parameters.insert(
        "lipschitz_mode".into(),
        serde_json::json!(format!("{:?}", a.lipschitz_mode).to_lowercase()),
    );
    parameters.insert("samples".into(), serde_json::json!(a.samples));
    write_manifest(
        &dir,
        ManifestInput {
            command: "bound",
            model: &model,
            common: &a.common,
            parameters,
            streams: a.seeds,
            started,
        },
    )?;
    Ok(if in_scope_violation { EXIT_VIOLATION } else { 0 })
}

fn cmd_lipschitz(a: LipschitzArgs) -> Result<u8> {
    let started = Instant::now();
    let dir = out_dir(&a.common)?;
    let model = load_model(&a.common)?;
    let mut estimates = Vec::with_capacity(a.memory + 1);
    for memory in 0..=a.memory {
        estimates.push(estimate_lipschitz(
            &model,
            memory,
            lipschitz_mode(a.lipschitz_mode, a.samples, a.common.seed),
        )?);
    }
    let mut csv = String::from("memory,value,method,is_exact\n");
    for e in &estimates {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            e.memory, e.value, e.method, e.is_exact
        ));
    }
    std::fs::write(dir.join("lipschitz.csv"), csv)?;
    write_json(&dir.join("lipschitz.json"), &estimates)?;
    let mut parameters = BTreeMap::new();
    parameters.insert("memory".into(), serde_json::json!(a.memory));
    parameters.insert(
        "lipschitz_mode".into(),
        serde_json::json!(format!("{:?}", a.lipschitz_mode).to_lowercase()),
    );
    parameters.insert("samples".into(), serde_json::json!(a.samples));
    write_manifest(
        &dir,
        ManifestInput {
            command: "lipschitz",
            model: &model,
            common: &a.common,
            parameters,
            streams: 0,
            started,
        },
    )?;
    Ok(0)
}

fn cmd_simulate(a: SimulateArgs) -> Result<u8> {
    let started = Instant::now();
    let dir = out_dir(&a.common)?;
    let model = load_model(&a.common)?;
    let horizon = match a.max_steps {
        Some(h) => h,
        None => default_horizon(model.gamma, model.reward.bound(), 1e-6)?,
    };

    let mut greedy = None;
    let mut converged = true;
    if a.policy == PolicyChoice::Greedy {
        let space = InfoSpace::new(model.num_points(), a.memory)?;
        let w = mixing_weights(&model, space, a.mixing)?;
        let sol = q_value_iteration(&model, &w, a.tol, a.iters)?;
        converged = sol.trace.converged;
        greedy = Some(greedy_policy_from_q(&sol.q));
    }
    let behavior = match &greedy {
        Some(p) => BehaviorPolicy::Deterministic(p),
        None => BehaviorPolicy::UniformRandom,
    };

    let mut traces: Vec<EpisodeTrace> = Vec::with_capacity(a.episodes);
    for stream in 0..a.episodes {
        traces.push(simulate_episode(
            &model,
            behavior,
            &EpisodeInit::default(),
            a.common.seed,
            stream as u64,
            horizon,
        )?);
    }
    write_trace_jsonl(&dir.join("episodes.jsonl"), &traces)?;
    write_trace_columnar(&dir.join("episodes.bin"), &traces)?;

    let returns: Vec<f64> = traces
        .iter()
        .map(|t| t.discounted_return(model.gamma))
        .collect();
    let exited = traces.iter().filter(|t| t.tau().is_some()).count();
    #[derive(serde::Serialize)]
    struct SimulateSummary {
        episodes: usize,
        horizon: usize,
        policy: String,
        exited: usize,
        truncated: usize,
        mean_return: f64,
        min_return: f64,
        max_return: f64,
    }
    let mean_return = returns.iter().sum::<f64>() / returns.len().max(1) as f64;
    write_json(
        &dir.join("episodes_summary.json"),
        &SimulateSummary {
            episodes: a.episodes,
            horizon,
            policy: behavior.label().into(),
            exited,
            truncated: a.episodes - exited,
            mean_return,
            min_return: returns.iter().copied().fold(f64::INFINITY, f64::min),
            max_return: returns.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        },
    )?;
    let mut parameters = BTreeMap::new();
    parameters.insert("episodes".into(), serde_json::json!(a.episodes));
    parameters.insert("horizon".into(), serde_json::json!(horizon));
    parameters.insert(
        "policy".into(),
        serde_json::json!(format!("{:?}", a.policy).to_lowercase()),
    );
    write_manifest(
        &dir,
        ManifestInput {
            command: "simulate",
            model: &model,
            common: &a.common,
            parameters,
            streams: a.episodes as u64,
            started,
        },
    )?;
    Ok(if converged { 0 } else { EXIT_NON_CONVERGED })
}
