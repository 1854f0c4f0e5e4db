//! Command-line entry point. Exit codes are a stable contract:
//! 0 ok, 1 workflow invalid, 2 parse/config error, 3 budget exhausted,
//! 4 backend error, 5 generator failure.

use clap::{Args, Parser, Subcommand};
use coreflow::backend::ChatBackend;
use coreflow::config::AppConfig;
use coreflow::env::{run_baseline, BaselineSchema, Environment, EvalReport, Split};
use coreflow::interpreter::{execute, Outcome};
use coreflow::lang::{self, Workflow};
use coreflow::optimizer::{
    optimize_incontext, optimize_reinforce, EditPolicy, GenerationQuery, OptimizationRun,
    OptimizerConfig, PriorState, RunningMean, Termination,
};
use coreflow::runfile::{self, Method};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

const EXIT_OK: u8 = 0;
const EXIT_INVALID: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_BUDGET: u8 = 3;
const EXIT_BACKEND: u8 = 4;
const EXIT_GENERATOR: u8 = 5;

const STEP_COUNT_WARNING: usize = 256;

#[derive(Parser)]
#[command(name = "coreflow", version, about = "Natural-language workflow engine for LLM agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunDirArgs {
    /// Directory for artifacts; overrides output_dir from the config.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Artifact subdirectory name; defaults to {seed}-{timestamp}.
    #[arg(long)]
    run_id: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a workflow file and print its validation report.
    Validate {
        workflow: PathBuf,
    },
    /// Execute a workflow on one task instance and write the trace.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        workflow: PathBuf,
        /// Instance id from the environment, or a raw task objective.
        #[arg(long)]
        task: String,
        #[command(flatten)]
        dir: RunDirArgs,
    },
    /// Evaluate a workflow (or a promptless baseline) on a split.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        workflow: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: Split,
        /// none (workflow run), zero (zero-shot), or few (few-shot).
        #[arg(long, default_value = "none")]
        baseline: String,
        #[command(flatten)]
        dir: RunDirArgs,
    },
    /// Optimize a workflow with the in-context or REINFORCE loop.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        method: Method,
        /// Continue a persisted run file under the remaining budget.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Overrides optimizer.seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        dir: RunDirArgs,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Validate { workflow } => cmd_validate(&workflow),
        Command::Run { config, workflow, task, dir } => cmd_run(&config, &workflow, &task, &dir),
        Command::Eval { config, workflow, split, baseline, dir } => {
            cmd_eval(&config, workflow.as_deref(), split, &baseline, &dir)
        }
        Command::Optimize { config, method, resume, seed, dir } => {
            cmd_optimize(&config, method, resume.as_deref(), seed, &dir)
        }
    };
    ExitCode::from(code)
}

fn fail(message: impl std::fmt::Display) -> u8 {
    eprintln!("error: {message}");
    EXIT_CONFIG
}

fn load_workflow(path: &Path) -> Result<Workflow, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let workflow = lang::parse_workflow(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    if workflow.len() > STEP_COUNT_WARNING {
        eprintln!("warning: workflow has {} steps (more than {})", workflow.len(), STEP_COUNT_WARNING);
    }
    Ok(workflow)
}

fn cmd_validate(path: &Path) -> u8 {
    let workflow = match load_workflow(path) {
        Ok(w) => w,
        Err(e) => return fail(e),
    };
    let report = lang::validate(&workflow);
    print!("{report}");
    if report.valid {
        EXIT_OK
    } else {
        EXIT_INVALID
    }
}

struct Loaded {
    config: AppConfig,
    env: Environment,
    backend: Box<dyn ChatBackend>,
}

fn load_app(config_path: &Path) -> Result<Loaded, String> {
    let config = AppConfig::load(config_path)?;
    let mut env = Environment::load(&config.environment_file)?;
    env.parallelism = config.parallelism;
    let backend = config.backend.build()?;
    Ok(Loaded { config, env, backend })
}

fn unix_timestamp() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Creates output_dir/{run-id}/ and drops the timestamp there, keeping every
/// other artifact byte-identical across runs.
fn artifact_dir(config: &AppConfig, dir: &RunDirArgs, seed: u64, command: &str) -> Result<PathBuf, String> {
    let base = dir.output_dir.clone().unwrap_or_else(|| config.output_dir.clone());
    let timestamp = unix_timestamp();
    let run_id = dir.run_id.clone().unwrap_or_else(|| format!("{seed}-{timestamp}"));
    let path = base.join(run_id);
    std::fs::create_dir_all(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let meta = serde_json::json!({ "command": command, "seed": seed, "timestamp": timestamp });
    std::fs::write(path.join("meta.json"), format!("{meta:#}\n"))
        .map_err(|e| format!("meta.json: {e}"))?;
    Ok(path)
}

fn cmd_run(config_path: &Path, workflow_path: &Path, task: &str, dir: &RunDirArgs) -> u8 {
    let app = match load_app(config_path) {
        Ok(a) => a,
        Err(e) => return fail(e),
    };
    let workflow = match load_workflow(workflow_path) {
        Ok(w) => w,
        Err(e) => return fail(e),
    };
    let report = lang::validate(&workflow);
    if !report.valid {
        print!("{report}");
        return EXIT_INVALID;
    }

    let objective = [Split::Train, Split::Validation, Split::Test]
        .iter()
        .flat_map(|s| app.env.split(*s))
        .find(|inst| inst.id == task)
        .map(|inst| inst.objective.clone())
        .unwrap_or_else(|| task.to_string());

    let trace = execute(&workflow, &objective, app.backend.as_ref(), &app.env.tools, &app.config.limits);

    let out = match artifact_dir(&app.config, dir, app.config.optimizer.config.seed, "run") {
        Ok(d) => d,
        Err(e) => return fail(e),
    };
    if let Err(e) = std::fs::write(out.join("trace.jsonl"), trace.to_jsonl()) {
        return fail(format!("trace.jsonl: {e}"));
    }

    println!("{}", trace.final_output);
    match trace.outcome {
        Outcome::Completed => EXIT_OK,
        Outcome::BudgetExhausted => {
            eprintln!("outcome: budget_exhausted after {} steps", trace.records.len());
            EXIT_BUDGET
        }
        Outcome::BackendError(detail) => {
            eprintln!("outcome: backend_error: {detail}");
            EXIT_BACKEND
        }
    }
}

fn print_report(report: &EvalReport) {
    println!("reward: {:.4}", report.reward);
    println!("valid_plan_rate: {:.4}", report.valid_plan_rate);
    println!("{:<8} {:>6}  outcome", "id", "score");
    for r in &report.per_instance {
        println!("{:<8} {:>6.2}  {}", r.id, r.score, r.outcome);
    }
}

fn cmd_eval(
    config_path: &Path,
    workflow_path: Option<&Path>,
    split: Split,
    baseline: &str,
    dir: &RunDirArgs,
) -> u8 {
    let app = match load_app(config_path) {
        Ok(a) => a,
        Err(e) => return fail(e),
    };
    if app.env.split(split).is_empty() {
        return fail(format!("split '{}' has no instances", split.as_str()));
    }

    let report = match baseline {
        "none" => {
            let Some(path) = workflow_path else {
                return fail("--workflow is required unless --baseline is zero or few");
            };
            let workflow = match load_workflow(path) {
                Ok(w) => w,
                Err(e) => return fail(e),
            };
            let validation = lang::validate(&workflow);
            if !validation.valid {
                print!("{validation}");
                return EXIT_INVALID;
            }
            coreflow::env::evaluate(&workflow, &app.env, app.backend.as_ref(), split, &app.config.limits)
        }
        "zero" | "few" => {
            let schema = if baseline == "zero" { BaselineSchema::ZeroShot } else { BaselineSchema::FewShot };
            match run_baseline(schema, &app.env, app.backend.as_ref(), split) {
                Ok(r) => r,
                Err(e) => return fail(e),
            }
        }
        other => return fail(format!("unknown baseline '{other}' (expected none, zero, or few)")),
    };

    let out = match artifact_dir(&app.config, dir, app.config.optimizer.config.seed, "eval") {
        Ok(d) => d,
        Err(e) => return fail(e),
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Err(e) = std::fs::write(out.join("report.json"), json + "\n") {
        return fail(format!("report.json: {e}"));
    }
    print_report(&report);
    EXIT_OK
}

/// Rebuilds the edit policy of a resumed REINFORCE run: theta from the last
/// recorded iteration, baseline as the running mean of recorded rewards.
fn policy_from_prior(prior: &PriorState) -> EditPolicy {
    let mut policy = EditPolicy::default();
    if let Some(theta) = prior.iterations.iter().rev().find_map(|it| it.theta.clone()) {
        policy.policy.theta = theta;
    }
    let mut baseline = RunningMean::default();
    for it in &prior.iterations {
        baseline.update(it.reward);
    }
    policy.baseline = baseline;
    policy
}

fn stream_iterations(run: &OptimizationRun, already_printed: usize) {
    let mut best = f64::NEG_INFINITY;
    for it in &run.iterations {
        best = best.max(it.reward);
        if it.index > already_printed {
            println!("iteration {} reward {:.4} best {:.4}", it.index, it.reward, best);
        }
    }
}

fn cmd_optimize(
    config_path: &Path,
    method: Method,
    resume: Option<&Path>,
    seed: Option<u64>,
    dir: &RunDirArgs,
) -> u8 {
    let app = match load_app(config_path) {
        Ok(a) => a,
        Err(e) => return fail(e),
    };
    let mut opt_config: OptimizerConfig = app.config.optimizer.config;
    if let Some(seed) = seed {
        opt_config.seed = seed;
    }

    let Some(example_path) = &app.config.optimizer.example_workflow else {
        return fail("optimize requires optimizer.example_workflow in the config");
    };
    let example_workflow = match load_workflow(example_path) {
        Ok(w) => w,
        Err(e) => return fail(e),
    };
    let validation = lang::validate(&example_workflow);
    if !validation.valid {
        print!("{validation}");
        return fail("optimizer.example_workflow does not validate");
    }
    let task_description = app
        .config
        .optimizer
        .task_description
        .clone()
        .unwrap_or_else(|| format!("Provide a workflow for the '{}' environment.", app.env.name));
    let query = GenerationQuery { example_workflow, task_description };

    let prior = match resume {
        Some(path) => {
            let persisted = match runfile::load(path) {
                Ok(p) => p,
                Err(e) => return fail(e),
            };
            if persisted.method != method {
                return fail(format!(
                    "run file was produced by method '{:?}', not '{:?}'",
                    persisted.method, method
                ));
            }
            if persisted.finished(opt_config.max_iterations) {
                println!("run already finished ({} iterations); nothing to do", persisted.run.iterations.len());
                return EXIT_OK;
            }
            Some(persisted.prior_state())
        }
        None => None,
    };
    let already_printed = prior.as_ref().map(|p| p.iterations.len()).unwrap_or(0);

    let run = match method {
        Method::Reinforce => {
            let mut policy = match &prior {
                Some(p) => policy_from_prior(p),
                None => EditPolicy::default(),
            };
            optimize_reinforce(
                &query,
                &app.env,
                &mut policy,
                app.backend.as_ref(),
                &opt_config,
                &app.config.limits,
                prior,
            )
        }
        Method::Incontext => {
            let generator = match app.config.generator_backend_config().build() {
                Ok(b) => b,
                Err(e) => return fail(e),
            };
            optimize_incontext(
                &query,
                &app.env,
                generator.as_ref(),
                app.backend.as_ref(),
                &opt_config,
                &app.config.limits,
                prior,
            )
        }
    };

    stream_iterations(&run, already_printed);

    let out = match artifact_dir(&app.config, dir, opt_config.seed, "optimize") {
        Ok(d) => d,
        Err(e) => return fail(e),
    };
    if let Err(e) = runfile::save(&out.join("run.jsonl"), method, &opt_config, &run) {
        return fail(format!("run.jsonl: {e}"));
    }
    if let Some((best, reward)) = &run.best {
        if let Err(e) = std::fs::write(out.join("best.core"), lang::serialize(best)) {
            return fail(format!("best.core: {e}"));
        }
        println!("best reward {reward:.4} ({:?})", run.termination);
        if let Some(test_reward) = run.best_test_reward {
            println!("best test reward {test_reward:.4}");
        }
    }

    match run.termination {
        Termination::GeneratorFailure => {
            eprintln!("termination: generator_failure");
            EXIT_GENERATOR
        }
        _ => EXIT_OK,
    }
}
