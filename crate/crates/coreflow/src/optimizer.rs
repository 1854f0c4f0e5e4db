//! The workflow optimization loop: generate a candidate, execute it for a
//! reward, update the generator, repeat until the reward delta converges or
//! the iteration budget runs out.
//!
//! Two generators are provided: an in-context one that feeds the previous
//! reward back into the next generation prompt, and a REINFORCE-trained
//! softmax policy over workflow edit actions.

use crate::backend::{ChatBackend, ChatRequest};
use crate::env::{evaluate, Environment, Split, TemplateLibrary};
use crate::interpreter::ExecutionLimits;
use crate::lang::{self, Connection, Step, StepKind, Workflow};
use crate::repair::repair_workflow;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const GENERATOR_TEMPERATURE: f64 = 0.7;
const MAX_CONSECUTIVE_REPAIR_FAILURES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub max_iterations: usize,
    pub reward_delta_threshold: f64,
    pub learning_rate: f64,
    pub edits_per_candidate: usize,
    pub seed: u64,
    /// Include the full (workflow, reward) history in generation prompts
    /// instead of only the latest pair.
    pub full_history_prompt: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iterations: 30,
            reward_delta_threshold: 1e-3,
            learning_rate: 0.001,
            edits_per_candidate: 3,
            seed: 0,
            full_history_prompt: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenerationQuery {
    pub example_workflow: Workflow,
    pub task_description: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    DeltaConverged,
    MaxIterations,
    GeneratorFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub index: usize,
    pub candidate: Workflow,
    pub reward: f64,
    pub repaired: bool,
    pub theta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationRun {
    pub iterations: Vec<IterationRecord>,
    pub best: Option<(Workflow, f64)>,
    pub termination: Termination,
    /// Reward of the starting workflow, measured before the first iteration
    /// (REINFORCE runs only).
    pub seed_reward: Option<f64>,
    /// One-shot test-split reward of the best candidate (in-context runs).
    pub best_test_reward: Option<f64>,
}

impl OptimizationRun {
    pub fn reward_history(&self) -> Vec<f64> {
        self.iterations.iter().map(|it| it.reward).collect()
    }
}

// ---------------------------------------------------------------------------
// Termination
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationCheck {
    Continue,
    DeltaConverged,
    MaxIterations,
}

/// Stops at the iteration budget, or when the reward difference between two
/// consecutive iterations falls below the threshold.
pub fn check_termination(history: &[f64], cfg: &OptimizerConfig) -> TerminationCheck {
    if history.len() >= cfg.max_iterations {
        return TerminationCheck::MaxIterations;
    }
    if history.len() >= 2 {
        let delta = (history[history.len() - 1] - history[history.len() - 2]).abs();
        if delta < cfg.reward_delta_threshold {
            return TerminationCheck::DeltaConverged;
        }
    }
    TerminationCheck::Continue
}

// ---------------------------------------------------------------------------
// Softmax policy + REINFORCE
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxPolicy {
    pub theta: Vec<f64>,
}

impl SoftmaxPolicy {
    pub fn new(n_actions: usize) -> Self {
        SoftmaxPolicy { theta: vec![0.0; n_actions] }
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let max = self.theta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = self.theta.iter().map(|t| (t - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / sum).collect()
    }

    /// Inverse-CDF sampling from one uniform draw.
    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.random();
        let probs = self.probabilities();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        probs.len() - 1
    }

    /// Gradient of log pi(action): onehot(action) - pi.
    pub fn grad_log_prob(&self, action: usize) -> Vec<f64> {
        let probs = self.probabilities();
        probs
            .iter()
            .enumerate()
            .map(|(i, p)| if i == action { 1.0 - p } else { -p })
            .collect()
    }
}

/// One REINFORCE step: theta += lr * advantage * sum_a (onehot(a) - pi),
/// with pi fixed at the distribution the actions were sampled from.
pub fn reinforce_update(
    policy: &mut SoftmaxPolicy,
    sampled: &[usize],
    probs_at_sampling: &[f64],
    advantage: f64,
    learning_rate: f64,
) {
    for &action in sampled {
        for (i, theta) in policy.theta.iter_mut().enumerate() {
            let grad = if i == action { 1.0 - probs_at_sampling[i] } else { -probs_at_sampling[i] };
            *theta += learning_rate * advantage * grad;
        }
    }
}

/// Running mean of observed rewards, used as the REINFORCE baseline.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunningMean {
    pub count: u64,
    pub mean: f64,
}

impl RunningMean {
    pub fn value(&self) -> f64 {
        self.mean
    }

    pub fn update(&mut self, x: f64) {
        self.count += 1;
        self.mean += (x - self.mean) / self.count as f64;
    }
}

// ---------------------------------------------------------------------------
// Edit actions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditAction {
    InsertTemplateStep,
    DeleteStep,
    ReplaceInstruction,
    RetargetConnection,
    InsertDecisionCheck,
}

pub const ALL_EDIT_ACTIONS: [EditAction; 5] = [
    EditAction::InsertTemplateStep,
    EditAction::DeleteStep,
    EditAction::ReplaceInstruction,
    EditAction::RetargetConnection,
    EditAction::InsertDecisionCheck,
];

/// Softmax policy over workflow edit actions; the trainable generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditPolicy {
    pub actions: Vec<EditAction>,
    pub policy: SoftmaxPolicy,
    pub baseline: RunningMean,
}

impl Default for EditPolicy {
    fn default() -> Self {
        EditPolicy {
            actions: ALL_EDIT_ACTIONS.to_vec(),
            policy: SoftmaxPolicy::new(ALL_EDIT_ACTIONS.len()),
            baseline: RunningMean::default(),
        }
    }
}

fn fresh_name(workflow: &Workflow) -> String {
    let max = workflow
        .steps
        .iter()
        .filter_map(|s| s.name.strip_prefix("Step ").and_then(|n| n.trim().parse::<u64>().ok()))
        .max()
        .unwrap_or(0);
    let mut name = format!("Step {}", max + 1);
    while workflow.step(&name).is_some() {
        name.push('b');
    }
    name
}

fn pick<'a, T>(items: &'a [T], rng: &mut impl Rng) -> Option<&'a T> {
    if items.is_empty() {
        None
    } else {
        Some(&items[rng.random_range(0..items.len())])
    }
}

fn process_indices(workflow: &Workflow) -> Vec<usize> {
    workflow
        .steps
        .iter()
        .enumerate()
        .filter(|(_, s)| s.kind == StepKind::Process)
        .map(|(i, _)| i)
        .collect()
}

/// Applies one edit action, returning the edited workflow and whether the
/// edit was applied. Edits that would break validity leave the input
/// unchanged (`applied` = false). The input workflow is never mutated.
pub fn apply_edit(
    workflow: &Workflow,
    action: EditAction,
    rng: &mut impl Rng,
    templates: &TemplateLibrary,
) -> (Workflow, bool) {
    let candidate = match action {
        EditAction::InsertTemplateStep => {
            let Some(instruction) = pick(&templates.process_instructions, rng).cloned() else {
                return (workflow.clone(), false);
            };
            let procs = process_indices(workflow);
            let Some(&at) = pick(&procs, rng) else {
                return (workflow.clone(), false);
            };
            let mut edited = workflow.clone();
            let name = fresh_name(&edited);
            let old_target = edited.steps[at].connections[0].target.clone();
            edited.steps[at].connections[0].target = name.clone();
            edited.steps.insert(
                at + 1,
                Step {
                    name,
                    kind: StepKind::Process,
                    instruction,
                    connections: vec![Connection::new("next", old_target)],
                },
            );
            edited
        }
        EditAction::InsertDecisionCheck => {
            let Some(instruction) = pick(&templates.decision_checks, rng).cloned() else {
                return (workflow.clone(), false);
            };
            let procs = process_indices(workflow);
            let Some(&at) = pick(&procs, rng) else {
                return (workflow.clone(), false);
            };
            let mut edited = workflow.clone();
            let name = fresh_name(&edited);
            let checked = edited.steps[at].name.clone();
            let old_target = edited.steps[at].connections[0].target.clone();
            edited.steps[at].connections[0].target = name.clone();
            // Yes continues; No retries the step the check guards.
            edited.steps.insert(
                at + 1,
                Step {
                    name,
                    kind: StepKind::Decision,
                    instruction,
                    connections: vec![Connection::new("Yes", old_target), Connection::new("No", checked)],
                },
            );
            edited
        }
        EditAction::DeleteStep => {
            if workflow.steps.len() < 2 {
                return (workflow.clone(), false);
            }
            // Never delete the entry step.
            let at = rng.random_range(1..workflow.steps.len());
            let removed = workflow.steps[at].clone();
            let mut edited = workflow.clone();
            edited.steps.remove(at);
            if let Some(first) = removed.connections.first() {
                for step in &mut edited.steps {
                    for conn in &mut step.connections {
                        if conn.target == removed.name {
                            conn.target = first.target.clone();
                        }
                    }
                }
            }
            edited
        }
        EditAction::ReplaceInstruction => {
            if workflow.steps.is_empty() {
                return (workflow.clone(), false);
            }
            let at = rng.random_range(0..workflow.steps.len());
            let pool = match workflow.steps[at].kind {
                StepKind::Process => &templates.process_instructions,
                StepKind::Decision => &templates.decision_checks,
                StepKind::Terminal => return (workflow.clone(), false),
            };
            let Some(instruction) = pick(pool, rng).cloned() else {
                return (workflow.clone(), false);
            };
            let mut edited = workflow.clone();
            edited.steps[at].instruction = instruction;
            edited
        }
        EditAction::RetargetConnection => {
            let edges: Vec<(usize, usize)> = workflow
                .steps
                .iter()
                .enumerate()
                .flat_map(|(i, s)| (0..s.connections.len()).map(move |j| (i, j)))
                .collect();
            let Some(&(i, j)) = pick(&edges, rng) else {
                return (workflow.clone(), false);
            };
            let target_idx = rng.random_range(0..workflow.steps.len());
            let mut edited = workflow.clone();
            edited.steps[i].connections[j].target = edited.steps[target_idx].name.clone();
            edited
        }
    };
    if lang::validate(&candidate).valid {
        (candidate, true)
    } else {
        (workflow.clone(), false)
    }
}

// ---------------------------------------------------------------------------
// REINFORCE loop
// ---------------------------------------------------------------------------

/// Optional starting point for resumed runs.
#[derive(Debug, Clone, Default)]
pub struct PriorState {
    pub iterations: Vec<IterationRecord>,
    pub best: Option<(Workflow, f64)>,
    pub seed_reward: Option<f64>,
}

/// Trains the edit policy with REINFORCE: sample edits, apply them to the
/// best workflow so far, evaluate on the train split, and update theta with
/// the baseline-centered reward.
pub fn optimize_reinforce(
    query: &GenerationQuery,
    env: &Environment,
    policy: &mut EditPolicy,
    interpreter_backend: &dyn ChatBackend,
    cfg: &OptimizerConfig,
    limits: &ExecutionLimits,
    prior: Option<PriorState>,
) -> OptimizationRun {
    let prior = prior.unwrap_or_default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(prior.iterations.len() as u64));

    let seed_reward = prior.seed_reward.unwrap_or_else(|| {
        evaluate(&query.example_workflow, env, interpreter_backend, Split::Train, limits).reward
    });
    let (mut best_wf, mut best_reward) = prior
        .best
        .clone()
        .unwrap_or_else(|| (query.example_workflow.clone(), seed_reward));
    let mut iterations = prior.iterations;
    let mut history: Vec<f64> = iterations.iter().map(|it| it.reward).collect();

    let termination;
    loop {
        match check_termination(&history, cfg) {
            TerminationCheck::Continue => {}
            TerminationCheck::DeltaConverged => {
                termination = Termination::DeltaConverged;
                break;
            }
            TerminationCheck::MaxIterations => {
                termination = Termination::MaxIterations;
                break;
            }
        }

        let probs = policy.policy.probabilities();
        let sampled: Vec<usize> =
            (0..cfg.edits_per_candidate).map(|_| policy.policy.sample(&mut rng)).collect();
        let mut candidate = best_wf.clone();
        for &action_idx in &sampled {
            let (edited, _applied) = apply_edit(&candidate, policy.actions[action_idx], &mut rng, &env.templates);
            candidate = edited;
        }

        let reward = if lang::validate(&candidate).valid {
            evaluate(&candidate, env, interpreter_backend, Split::Train, limits).reward
        } else {
            0.0
        };

        let advantage = reward - policy.baseline.value();
        reinforce_update(&mut policy.policy, &sampled, &probs, advantage, cfg.learning_rate);
        policy.baseline.update(reward);

        history.push(reward);
        iterations.push(IterationRecord {
            index: iterations.len() + 1,
            candidate: candidate.clone(),
            reward,
            repaired: false,
            theta: Some(policy.policy.theta.clone()),
        });
        if reward > best_reward {
            best_reward = reward;
            best_wf = candidate;
        }
    }

    OptimizationRun {
        iterations,
        best: Some((best_wf, best_reward)),
        termination,
        seed_reward: Some(seed_reward),
        best_test_reward: None,
    }
}

// ---------------------------------------------------------------------------
// In-context loop
// ---------------------------------------------------------------------------

/// The feedback sentence carrying the previous reward, 4 decimal places.
pub fn feedback_sentence(reward: f64) -> String {
    format!(
        "The execution performance of the previous workflow is {reward:.4}. Provide a new workflow that can gain a better performance."
    )
}

/// Builds the generation prompt: the task description and grammar example,
/// plus reward feedback on the previous candidate(s) after iteration 1.
pub fn build_generation_prompt(query: &GenerationQuery, previous: &[(Workflow, f64)], full_history: bool) -> String {
    let mut prompt = format!(
        "{}\n\nHere is an example workflow that demonstrates the grammar:\n\n{}\n",
        query.task_description,
        lang::serialize(&query.example_workflow)
    );
    if previous.is_empty() {
        prompt.push_str("Provide a workflow for the task. Output only the workflow lines.");
        return prompt;
    }
    let shown: &[(Workflow, f64)] = if full_history { previous } else { &previous[previous.len() - 1..] };
    for (i, (workflow, reward)) in shown.iter().enumerate() {
        if full_history && shown.len() > 1 && i + 1 < shown.len() {
            prompt.push_str(&format!(
                "An earlier workflow achieved performance {:.4}:\n\n{}\n",
                reward,
                lang::serialize(workflow)
            ));
        } else {
            prompt.push_str(&feedback_sentence(*reward));
            prompt.push_str(&format!("\n\nPrevious workflow:\n\n{}", lang::serialize(workflow)));
        }
    }
    prompt.push_str("Output only the workflow lines.");
    prompt
}

/// In-context optimization: the generator sees the previous candidate and
/// its reward in the prompt; candidates are repaired when needed and scored
/// on the validation split. The best candidate gets one final test-split
/// evaluation.
pub fn optimize_incontext(
    query: &GenerationQuery,
    env: &Environment,
    generator: &dyn ChatBackend,
    interpreter_backend: &dyn ChatBackend,
    cfg: &OptimizerConfig,
    limits: &ExecutionLimits,
    prior: Option<PriorState>,
) -> OptimizationRun {
    let prior = prior.unwrap_or_default();
    let mut iterations = prior.iterations;
    let mut history: Vec<f64> = iterations.iter().map(|it| it.reward).collect();
    let mut previous: Vec<(Workflow, f64)> =
        iterations.iter().map(|it| (it.candidate.clone(), it.reward)).collect();
    let mut best: Option<(Workflow, f64)> = prior.best;
    let mut consecutive_failures = 0usize;

    let termination;
    loop {
        match check_termination(&history, cfg) {
            TerminationCheck::Continue => {}
            TerminationCheck::DeltaConverged => {
                termination = Termination::DeltaConverged;
                break;
            }
            TerminationCheck::MaxIterations => {
                termination = Termination::MaxIterations;
                break;
            }
        }

        let prompt = build_generation_prompt(query, &previous, cfg.full_history_prompt);
        let req = ChatRequest::user(None, prompt, GENERATOR_TEMPERATURE);
        let generated = match generator.complete(&req) {
            Ok(resp) => resp.content,
            Err(_) => String::new(),
        };

        let direct = lang::parse_workflow(&generated)
            .ok()
            .filter(|w| lang::validate(w).valid);
        let (candidate, repaired) = match direct {
            Some(w) => (w, false),
            None => match repair_workflow(&generated, generator) {
                Ok(w) => (w, true),
                Err(_) => {
                    consecutive_failures += 1;
                    if consecutive_failures >= MAX_CONSECUTIVE_REPAIR_FAILURES {
                        termination = Termination::GeneratorFailure;
                        break;
                    }
                    continue;
                }
            },
        };
        consecutive_failures = 0;

        let reward = evaluate(&candidate, env, interpreter_backend, Split::Validation, limits).reward;
        history.push(reward);
        iterations.push(IterationRecord {
            index: iterations.len() + 1,
            candidate: candidate.clone(),
            reward,
            repaired,
            theta: None,
        });
        if best.as_ref().map(|(_, r)| reward > *r).unwrap_or(true) {
            best = Some((candidate.clone(), reward));
        }
        previous.push((candidate, reward));
    }

    let best_test_reward = if termination != Termination::GeneratorFailure {
        best.as_ref()
            .map(|(w, _)| evaluate(w, env, interpreter_backend, Split::Test, limits).reward)
    } else {
        None
    };

    OptimizationRun { iterations, best, termination, seed_reward: None, best_test_reward }
}
