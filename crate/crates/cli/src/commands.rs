//! Subcommands: generate → trace-gen → train → explain → evaluate, plus mce.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use peg_core::escape_room::{
    compile, generate_scenarios, scenario_mdp, synthesize_traces, ExplanationChoice, GeneratorConfig, LatticeOptions,
    LatticeScope, Scenario,
};
use peg_core::irl::{group_traces, train_on, TrainingConfig};
use peg_core::model::FeatureChange;
use peg_core::mdp::{ExplanationMdp, WeightVector, DEFAULT_LATTICE_LIMIT};
use peg_core::planner::{Plan, Planner};
use peg_core::reconciliation::{minimally_complete_explanation, ReconciliationProblem, DEFAULT_MCE_LIMIT};
use peg_core::search::{manhattan_order, peg_order, random_order, replanning_profile, OrderingMethod};

use crate::error::{CliError, CliResult};
use crate::evaluate::{evaluate, EvaluationConfig, DEFAULT_RANDOM_SAMPLES};
use crate::formats::{
    emit_ordering, emit_scenario, emit_traces, emit_weights, parse_model, parse_plan, parse_scenario, parse_traces,
    parse_weights, FormatError, OrderingRecord,
};
use crate::output::{read_text, OutputDir};

pub const SCENARIO_EXTENSION: &str = "scn";

#[derive(Parser, Debug)]
#[command(name = "peg", version, about = "Progressive explanation generation for planning-model differences")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate escape-room scenarios.
    Generate(GenerateArgs),
    /// Sample synthetic explanation traces from ground-truth weights.
    TraceGen(TraceGenArgs),
    /// Learn weights from traces.
    Train(TrainArgs),
    /// Order one scenario's explanation.
    Explain(ExplainArgs),
    /// Compare ordering methods over a scenario suite.
    Evaluate(EvaluateArgs),
    /// Compute a minimally complete explanation.
    Mce(MceArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScopeArg {
    Dangerous,
    AllMarked,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExplanationArg {
    /// Every dangerous contingency (the full model difference).
    Full,
    /// A minimally complete subset.
    Minimal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    Peg,
    Random,
    Manhattan,
}

impl From<MethodArg> for OrderingMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Peg => OrderingMethod::Peg,
            MethodArg::Random => OrderingMethod::Random,
            MethodArg::Manhattan => OrderingMethod::Manhattan,
        }
    }
}

/// How scenarios become explanation lattices.
#[derive(Args, Clone, Debug, Serialize)]
pub struct LatticeArgs {
    #[arg(long, value_enum, default_value_t = ScopeArg::Dangerous)]
    pub scope: ScopeArg,
    #[arg(long, value_enum, default_value_t = ExplanationArg::Full)]
    pub explanation: ExplanationArg,
    #[arg(long, default_value_t = DEFAULT_LATTICE_LIMIT)]
    pub lattice_limit: usize,
    #[arg(long, default_value_t = DEFAULT_MCE_LIMIT)]
    pub mce_limit: usize,
}

impl LatticeArgs {
    pub fn options(&self) -> LatticeOptions {
        LatticeOptions {
            scope: match self.scope {
                ScopeArg::Dangerous => LatticeScope::Dangerous,
                ScopeArg::AllMarked => LatticeScope::AllMarked,
            },
            explanation: match self.explanation {
                ExplanationArg::Full => ExplanationChoice::FullDelta,
                ExplanationArg::Minimal => ExplanationChoice::Minimal,
            },
            lattice_limit: self.lattice_limit,
            mce_limit: self.mce_limit,
        }
    }
}

fn parse_grid(text: &str) -> Result<(usize, usize), String> {
    let parse = |s: &str| s.trim().parse::<usize>().map_err(|_| format!("`{text}` is not WxH"));
    match text.split_once(['x', 'X']) {
        Some((w, h)) => Ok((parse(w)?, parse(h)?)),
        None => parse(text).map(|n| (n, n)),
    }
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 8)]
    pub count: usize,
    /// Grid size as WxH (or a single side length).
    #[arg(long, value_parser = parse_grid, default_value = "11x11")]
    pub grid: (usize, usize),
    #[arg(long, default_value_t = 7)]
    pub contingencies: usize,
    #[arg(long, default_value_t = 0.5)]
    pub danger_prob: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_attempts: usize,
    #[arg(long, env = "PEG_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct TraceGenArgs {
    /// Directory of scenario files.
    #[arg(long)]
    pub scenarios: PathBuf,
    /// Ground-truth weights; zero weights (uniform orderings) when omitted.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub per_scenario: usize,
    #[command(flatten)]
    pub lattice: LatticeArgs,
    #[arg(long, env = "PEG_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub traces: PathBuf,
    #[arg(long)]
    pub scenarios: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 500)]
    pub iterations: usize,
    /// Stop when the gradient's max-norm falls below this.
    #[arg(long, default_value_t = 1e-5)]
    pub tolerance: f64,
    /// Traces sampled per iteration for the first-step distribution.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Estimate the first-step distribution by sampling instead of exactly.
    #[arg(long)]
    pub sampled_first_step: bool,
    #[command(flatten)]
    pub lattice: LatticeArgs,
    #[arg(long, env = "PEG_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct ExplainArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Peg)]
    pub method: MethodArg,
    #[command(flatten)]
    pub lattice: LatticeArgs,
    #[arg(long, env = "PEG_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub scenarios: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [MethodArg::Peg, MethodArg::Random, MethodArg::Manhattan])]
    pub methods: Vec<MethodArg>,
    /// Random permutations per scenario.
    #[arg(long, default_value_t = DEFAULT_RANDOM_SAMPLES)]
    pub samples: usize,
    #[command(flatten)]
    pub lattice: LatticeArgs,
    #[arg(long, env = "PEG_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct MceArgs {
    #[arg(long, conflicts_with_all = ["robot_model", "human_model"], required_unless_present = "robot_model")]
    pub scenario: Option<PathBuf>,
    #[arg(long, requires = "human_model")]
    pub robot_model: Option<PathBuf>,
    #[arg(long, requires = "robot_model")]
    pub human_model: Option<PathBuf>,
    /// Plan to explain (one action per line); must be optimal in the robot
    /// model. Planned when omitted.
    #[arg(long, requires = "robot_model")]
    pub robot_plan: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MCE_LIMIT)]
    pub limit: usize,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate(a) => cmd_generate(&a),
        Command::TraceGen(a) => cmd_trace_gen(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Explain(a) => cmd_explain(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Mce(a) => cmd_mce(&a),
    }
}

pub fn load_scenario(path: &Path) -> CliResult<Scenario> {
    parse_scenario(&read_text(path)?).map_err(|e| CliError::data(path, e))
}

/// Every `*.scn` file in `dir`, sorted by file name.
pub fn load_scenarios(dir: &Path) -> CliResult<Vec<Scenario>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == SCENARIO_EXTENSION) {
            paths.push(path);
        }
    }
    paths.sort();
    let scenarios = paths.iter().map(|p| load_scenario(p)).collect::<CliResult<Vec<_>>>()?;
    let mut seen = BTreeMap::new();
    for (s, p) in scenarios.iter().zip(&paths) {
        if let Some(first) = seen.insert(s.id.clone(), p) {
            let msg = format!("scenario id `{}` also used by {}", s.id, first.display());
            return Err(CliError::data(p, FormatError { line: 0, message: msg }));
        }
    }
    Ok(scenarios)
}

pub fn load_weights(path: &Path) -> CliResult<WeightVector> {
    parse_weights(&read_text(path)?).map_err(|e| CliError::data(path, e))
}

pub fn cmd_generate(args: &GenerateArgs) -> CliResult<()> {
    let config = GeneratorConfig {
        count: args.count,
        width: args.grid.0,
        height: args.grid.1,
        contingencies: args.contingencies,
        danger_probability: args.danger_prob,
        seed: args.seed,
        max_attempts: args.max_attempts,
    };
    let scenarios = generate_scenarios(&config)?;
    let mut out = OutputDir::create(&args.out)?;
    for s in &scenarios {
        out.write(&format!("{}.{SCENARIO_EXTENSION}", s.id), &emit_scenario(s))?;
    }
    out.finish("generate", args, Some(args.seed))?;
    Ok(())
}

pub fn cmd_trace_gen(args: &TraceGenArgs) -> CliResult<()> {
    let weights = match &args.weights {
        Some(path) => load_weights(path)?,
        None => WeightVector::zeros(),
    };
    let options = args.lattice.options();
    let mdps = load_scenarios(&args.scenarios)?
        .iter()
        .map(|s| scenario_mdp(s, &options))
        .collect::<peg_core::Result<Vec<_>>>()?;
    let traces = synthesize_traces(&mdps, &weights, args.per_scenario, args.seed)?;
    let mut out = OutputDir::create(&args.out)?;
    out.write("traces.txt", &emit_traces(&traces))?;
    out.finish("trace-gen", args, Some(args.seed))?;
    Ok(())
}

pub fn cmd_train(args: &TrainArgs) -> CliResult<()> {
    let parsed = parse_traces(&read_text(&args.traces)?).map_err(|e| CliError::data(&args.traces, e))?;
    let scenarios: BTreeMap<String, Scenario> =
        load_scenarios(&args.scenarios)?.into_iter().map(|s| (s.id.clone(), s)).collect();
    let options = args.lattice.options();
    let mut mdps: BTreeMap<String, ExplanationMdp> = BTreeMap::new();
    for (line, trace) in &parsed {
        let bad = |message: String| CliError::data(&args.traces, FormatError { line: *line, message });
        let Some(scenario) = scenarios.get(&trace.scenario_id) else {
            return Err(bad(format!("unknown scenario `{}`", trace.scenario_id)));
        };
        if !mdps.contains_key(&trace.scenario_id) {
            mdps.insert(trace.scenario_id.clone(), scenario_mdp(scenario, &options)?);
        }
        mdps[&trace.scenario_id].resolve(&trace.steps).map_err(|e| bad(e.to_string()))?;
    }
    if parsed.is_empty() {
        return Err(CliError::data(&args.traces, FormatError { line: 0, message: "no traces".into() }));
    }
    let config = TrainingConfig {
        learning_rate: args.learning_rate,
        iterations: args.iterations,
        convergence_tolerance: args.tolerance,
        sample_count: args.samples,
        exact_first_step: !args.sampled_first_step,
        seed: args.seed,
    };
    let traces: Vec<_> = parsed.into_iter().map(|(_, t)| t).collect();
    let data = group_traces(&traces, &mdps)?;
    let result = train_on(&data, &config)?;

    let mut log = String::from("iteration\tlog_likelihood\tgradient_max_norm\n");
    for (k, (ll, g)) in result.log_likelihood_history.iter().zip(&result.gradient_norm_history).enumerate() {
        let _ = writeln!(log, "{k}\t{ll}\t{g}");
    }
    let _ = writeln!(log, "# converged: {}", result.converged);
    let mut out = OutputDir::create(&args.out)?;
    out.write("weights.tsv", &emit_weights(&result.weights))?;
    out.write("training.log", &log)?;
    out.finish("train", args, Some(args.seed))?;
    Ok(())
}

pub fn cmd_explain(args: &ExplainArgs) -> CliResult<()> {
    let scenario = load_scenario(&args.scenario)?;
    let weights = load_weights(&args.weights)?;
    let mdp = scenario_mdp(&scenario, &args.lattice.options())?;
    let method = OrderingMethod::from(args.method);
    let order = match method {
        OrderingMethod::Random => random_order(&mdp, &weights, args.seed)?,
        OrderingMethod::Manhattan => manhattan_order(&mdp, &weights)?,
        _ => peg_order(&mdp, &weights)?,
    };
    let profile = replanning_profile(&order, &mdp)?;
    let record = OrderingRecord { explanation: order, action_distance: profile.per_step };
    let mut out = OutputDir::create(&args.out)?;
    out.write(&format!("{}.{method}.ordering", scenario.id), &emit_ordering(&record))?;
    out.finish("explain", args, Some(args.seed))?;
    Ok(())
}

/// Writes every report, including rows for scenarios that failed, and then
/// reports the first failure.
pub fn cmd_evaluate(args: &EvaluateArgs) -> CliResult<()> {
    let weights = load_weights(&args.weights)?;
    let options = args.lattice.options();
    let suite: Vec<_> = load_scenarios(&args.scenarios)?
        .iter()
        .map(|s| (s.id.clone(), scenario_mdp(s, &options).map_err(|e| e.to_string())))
        .collect();
    let mut methods: Vec<OrderingMethod> = Vec::new();
    for m in &args.methods {
        if !methods.contains(&(*m).into()) {
            methods.push((*m).into());
        }
    }
    let config = EvaluationConfig { methods, random_samples: args.samples, seed: args.seed };
    let evaluation = evaluate(&suite, &weights, &config);
    let mut out = OutputDir::create(&args.out)?;
    out.write("profiles.tsv", &evaluation.profiles_tsv())?;
    out.write("steps.tsv", &evaluation.steps_tsv())?;
    out.write("totals.tsv", &evaluation.totals_tsv())?;
    out.write("summary.tsv", &evaluation.summary_tsv())?;
    out.write("comparisons.tsv", &evaluation.comparisons_tsv())?;
    out.finish("evaluate", args, Some(args.seed))?;
    if let Some((id, reason)) = evaluation.failures().next() {
        return Err(CliError::Failed(format!("scenario {id} failed: {reason}")));
    }
    Ok(())
}

pub fn cmd_mce(args: &MceArgs) -> CliResult<()> {
    let (name, problem, candidates) = match (&args.scenario, &args.robot_model, &args.human_model) {
        (Some(path), _, _) => {
            let scenario = load_scenario(path)?;
            let pair = compile(&scenario, LatticeScope::Dangerous)?;
            let candidates = pair.catalog_changes();
            (scenario.id.clone(), pair.problem, Some(candidates))
        }
        (None, Some(robot), Some(human)) => {
            let load = |p: &Path| parse_model(&read_text(p)?).map_err(|e| CliError::data(p, e));
            let (robot_model, human_model) = (load(robot)?, load(human)?);
            let problem = match &args.robot_plan {
                Some(plan_path) => {
                    let steps = parse_plan(&read_text(plan_path)?);
                    let total_cost = Planner::new().execute(&steps, &robot_model).unwrap_or(f64::INFINITY);
                    ReconciliationProblem::with_plan(robot_model, human_model, Plan { steps, total_cost }, Planner::new())?
                }
                None => ReconciliationProblem::new(robot_model, human_model, Planner::new())?,
            };
            let stem = robot.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned());
            (stem, problem, None)
        }
        _ => return Err(CliError::Usage("give --scenario or both --robot-model and --human-model".into())),
    };
    let changes = match candidates {
        Some(c) => peg_core::reconciliation::minimal_complete_subset(&problem, &c, args.limit)?,
        None => minimally_complete_explanation(&problem, args.limit)?.changes,
    };
    let mut text = String::new();
    let _ = writeln!(text, "# robot_plan: {}", problem.robot_plan.steps.join(" "));
    let _ = writeln!(text, "# gap_before: {}", problem.initial_gap());
    let _ = writeln!(text, "# gap_after: {}", problem.gap_after(&changes)?);
    let _ = writeln!(text, "# size: {}", changes.len());
    for c in &changes {
        let canonical = FeatureChange::canonical_id(c.direction, &c.feature);
        if c.id == canonical {
            let _ = writeln!(text, "{}", c.id);
        } else {
            let _ = writeln!(text, "{}\t{canonical}", c.id);
        }
    }
    let mut out = OutputDir::create(&args.out)?;
    out.write(&format!("{name}.mce"), &text)?;
    out.finish("mce", args, None)?;
    Ok(())
}
