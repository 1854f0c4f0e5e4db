//! Evaluation harness: task datasets, per-instance scoring, reward
//! aggregation, and the zero/few-shot baseline schemas.

use crate::backend::{ChatBackend, ChatRequest};
use crate::interpreter::{self, ExecutionLimits, Outcome, ToolRegistry, ToolSpec};
use crate::lang::Workflow;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

pub const DEFAULT_PARALLELISM: usize = 4;
const FEW_SHOT_DEMOS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: String,
    pub objective: String,
    pub input_type: String,
    pub output_type: String,
    pub expected: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scorer {
    TypedPlanning,
    ArithmeticChain,
}

impl Default for Scorer {
    fn default() -> Self {
        Scorer::TypedPlanning
    }
}

/// Edit templates the optimizer draws from when mutating workflows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateLibrary {
    pub process_instructions: Vec<String>,
    pub decision_checks: Vec<String>,
}

impl Default for TemplateLibrary {
    fn default() -> Self {
        TemplateLibrary {
            process_instructions: vec![
                "Identify the input data type based on the objective.".into(),
                "Identify the output data type based on the objective.".into(),
                "Select tools in the provided tool list to generate a plan.".into(),
                "Review the plan and refine it if needed.".into(),
            ],
            decision_checks: vec![
                "Check whether every tool in the plan is in the provided tool list.".into(),
                "Check whether the output data type of the previous tool is the input data type of the next tool."
                    .into(),
            ],
        }
    }
}

/// An immutable evaluation environment: a tool registry, disjoint task
/// splits, and a scoring function.
pub struct Environment {
    pub name: String,
    pub tools: ToolRegistry,
    pub scorer: Scorer,
    pub templates: TemplateLibrary,
    pub parallelism: usize,
    train: Vec<TaskInstance>,
    validation: Vec<TaskInstance>,
    test: Vec<TaskInstance>,
}

#[derive(Debug, Deserialize)]
struct ToolDef {
    name: String,
    description: String,
    input_type: String,
    output_type: String,
}

#[derive(Debug, Deserialize)]
struct InstanceDef {
    id: String,
    objective: String,
    input_type: String,
    output_type: String,
    expected: String,
    split: Split,
}

#[derive(Debug, Deserialize)]
struct EnvironmentDef {
    name: String,
    #[serde(default)]
    scorer: Scorer,
    tools: Vec<ToolDef>,
    instances: Vec<InstanceDef>,
}

impl Environment {
    pub fn new(name: impl Into<String>, tools: ToolRegistry, scorer: Scorer) -> Self {
        Environment {
            name: name.into(),
            tools,
            scorer,
            templates: TemplateLibrary::default(),
            parallelism: DEFAULT_PARALLELISM,
            train: Vec::new(),
            validation: Vec::new(),
            test: Vec::new(),
        }
    }

    pub fn add_instance(&mut self, split: Split, instance: TaskInstance) -> Result<(), String> {
        let exists = self
            .train
            .iter()
            .chain(&self.validation)
            .chain(&self.test)
            .any(|i| i.id == instance.id);
        if exists {
            return Err(format!("duplicate instance id '{}'", instance.id));
        }
        self.split_mut(split).push(instance);
        Ok(())
    }

    fn split_mut(&mut self, split: Split) -> &mut Vec<TaskInstance> {
        match split {
            Split::Train => &mut self.train,
            Split::Validation => &mut self.validation,
            Split::Test => &mut self.test,
        }
    }

    pub fn split(&self, split: Split) -> &[TaskInstance] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    pub fn from_json(json: &str) -> Result<Self, String> {
        let def: EnvironmentDef = serde_json::from_str(json).map_err(|e| e.to_string())?;
        let mut tools = ToolRegistry::new();
        for t in def.tools {
            let name = t.name.clone();
            let output_type = t.output_type.clone();
            tools.add(ToolSpec {
                name: t.name,
                description: t.description,
                input_type: t.input_type,
                output_type: t.output_type.clone(),
                // Synthetic invoke for desk-scale runs; real deployments
                // register their own closures.
                invoke: Arc::new(move |args: &str| Ok(format!("{name}({args}) -> {output_type}"))),
            })?;
        }
        let mut env = Environment::new(def.name, tools, def.scorer);
        for i in def.instances {
            env.add_instance(
                i.split,
                TaskInstance {
                    id: i.id,
                    objective: i.objective,
                    input_type: i.input_type,
                    output_type: i.output_type,
                    expected: i.expected,
                },
            )?;
        }
        Ok(env)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let json = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&json)
    }

    pub fn score(&self, task: &TaskInstance, final_output: &str) -> f64 {
        match self.scorer {
            Scorer::TypedPlanning => typed_planning_score(task, final_output, &self.tools),
            Scorer::ArithmeticChain => arithmetic_chain_score(task, final_output),
        }
    }
}

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

fn parse_plan(final_output: &str) -> Vec<String> {
    final_output
        .split(|c| c == ',' || c == '\n')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Length (in tools) of the shortest chain from `from` to `to` over the
/// registry's input/output type tags, if one exists.
pub fn shortest_chain_len(tools: &ToolRegistry, from: &str, to: &str) -> Option<usize> {
    let mut edges: HashMap<&str, Vec<&str>> = HashMap::new();
    for tool in tools.iter() {
        edges.entry(tool.input_type.as_str()).or_default().push(tool.output_type.as_str());
    }
    // dist[t] = fewest tools needed to reach type t from `from` using at
    // least one tool, so from == to still requires a round trip.
    let mut dist: HashMap<&str, usize> = HashMap::new();
    let mut queue = VecDeque::new();
    for next in edges.get(from).into_iter().flatten() {
        if !dist.contains_key(*next) {
            dist.insert(next, 1);
            queue.push_back(*next);
        }
    }
    while let Some(ty) = queue.pop_front() {
        let d = dist[ty];
        if ty == to {
            return Some(d);
        }
        for next in edges.get(ty).into_iter().flatten() {
            if !dist.contains_key(*next) {
                dist.insert(next, d + 1);
                queue.push_back(*next);
            }
        }
    }
    dist.get(to).copied()
}

/// Plan validity scoring: 0 for an unregistered tool or a broken type
/// chain, 1.0 for a valid plan of minimal length, 0.5 for a valid but
/// non-minimal plan.
pub fn typed_planning_score(task: &TaskInstance, final_output: &str, tools: &ToolRegistry) -> f64 {
    let plan = parse_plan(final_output);
    if plan.is_empty() {
        return 0.0;
    }
    let mut specs = Vec::with_capacity(plan.len());
    for name in &plan {
        match tools.get(name) {
            Some(spec) => specs.push(spec),
            None => return 0.0,
        }
    }
    if specs[0].input_type != task.input_type {
        return 0.0;
    }
    for pair in specs.windows(2) {
        if pair[0].output_type != pair[1].input_type {
            return 0.0;
        }
    }
    if specs.last().unwrap().output_type != task.output_type {
        return 0.0;
    }
    match shortest_chain_len(tools, &task.input_type, &task.output_type) {
        Some(min_len) if plan.len() == min_len => 1.0,
        _ => 0.5,
    }
}

/// Exact-match scoring for integer-answer tasks.
pub fn arithmetic_chain_score(task: &TaskInstance, final_output: &str) -> f64 {
    if task.expected.trim() == final_output.trim() {
        1.0
    } else {
        0.0
    }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub id: String,
    pub score: f64,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_instance: Vec<InstanceResult>,
    pub reward: f64,
    pub valid_plan_rate: f64,
}

impl EvalReport {
    fn from_results(mut per_instance: Vec<InstanceResult>) -> Self {
        per_instance.sort_by(|a, b| a.id.cmp(&b.id));
        let n = per_instance.len();
        let reward = if n == 0 {
            0.0
        } else {
            per_instance.iter().map(|r| r.score).sum::<f64>() / n as f64
        };
        let valid_plan_rate = if n == 0 {
            0.0
        } else {
            per_instance.iter().filter(|r| r.score > 0.0).count() as f64 / n as f64
        };
        EvalReport { per_instance, reward, valid_plan_rate }
    }
}

fn outcome_label(outcome: &Outcome) -> String {
    match outcome {
        Outcome::Completed => "completed".into(),
        Outcome::BudgetExhausted => "budget_exhausted".into(),
        Outcome::BackendError(_) => "backend_error".into(),
    }
}

fn run_parallel<F>(n: usize, parallelism: usize, job: F) -> Vec<InstanceResult>
where
    F: Fn(usize) -> InstanceResult + Sync,
{
    let results: Mutex<Vec<Option<InstanceResult>>> = Mutex::new(vec![None; n]);
    let cursor = AtomicUsize::new(0);
    let workers = parallelism.max(1).min(n.max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let result = job(i);
                results.lock().unwrap()[i] = Some(result);
            });
        }
    });
    results.into_inner().unwrap().into_iter().map(|r| r.unwrap()).collect()
}

/// Runs the workflow once per instance in the split and aggregates the mean
/// score as the reward. Failed runs (budget, backend) score 0.
pub fn evaluate(
    workflow: &Workflow,
    env: &Environment,
    backend: &dyn ChatBackend,
    split: Split,
    limits: &ExecutionLimits,
) -> EvalReport {
    let instances = env.split(split);
    let results = run_parallel(instances.len(), env.parallelism, |i| {
        let task = &instances[i];
        let trace = interpreter::execute(workflow, &task.objective, backend, &env.tools, limits);
        let score = match trace.outcome {
            Outcome::Completed => env.score(task, &trace.final_output),
            _ => 0.0,
        };
        InstanceResult { id: task.id.clone(), score, outcome: outcome_label(&trace.outcome) }
    });
    EvalReport::from_results(results)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineSchema {
    ZeroShot,
    FewShot,
}

/// Builds the single baseline prompt for one instance.
pub fn baseline_prompt(schema: BaselineSchema, env: &Environment, task: &TaskInstance) -> String {
    match schema {
        BaselineSchema::ZeroShot => task.objective.clone(),
        BaselineSchema::FewShot => {
            let mut prompt = String::new();
            for demo in env.split(Split::Train).iter().take(FEW_SHOT_DEMOS) {
                writeln!(prompt, "Objective: {}", demo.objective).unwrap();
                writeln!(prompt, "Answer: {}", demo.expected).unwrap();
                prompt.push('\n');
            }
            writeln!(prompt, "Objective: {}", task.objective).unwrap();
            prompt.push_str("Answer:");
            prompt
        }
    }
}

/// Bypasses the interpreter: one backend call per instance, scored the same
/// way as `evaluate`.
pub fn run_baseline(
    schema: BaselineSchema,
    env: &Environment,
    backend: &dyn ChatBackend,
    split: Split,
) -> Result<EvalReport, String> {
    if schema == BaselineSchema::FewShot && env.split(Split::Train).is_empty() {
        return Err("few_shot baseline needs at least one train demonstration".into());
    }
    let instances = env.split(split);
    let results = run_parallel(instances.len(), env.parallelism, |i| {
        let task = &instances[i];
        let prompt = baseline_prompt(schema, env, task);
        match backend.complete(&ChatRequest::user(None, prompt, 0.0)) {
            Ok(resp) => InstanceResult {
                id: task.id.clone(),
                score: env.score(task, &resp.content),
                outcome: "completed".into(),
            },
            Err(_) => InstanceResult { id: task.id.clone(), score: 0.0, outcome: "backend_error".into() },
        }
    });
    Ok(EvalReport::from_results(results))
}
