//! JSON-lines persistence for optimization runs: one meta line, one line per
//! iteration, one final summary line. Used for post-hoc analysis and for
//! `optimize --resume`.

use crate::lang::{self, Workflow};
use crate::optimizer::{IterationRecord, OptimizationRun, OptimizerConfig, PriorState, Termination};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Incontext,
    Reinforce,
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "incontext" => Ok(Method::Incontext),
            "reinforce" => Ok(Method::Reinforce),
            other => Err(format!("unknown method '{other}' (expected incontext or reinforce)")),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Meta {
        method: Method,
        config: OptimizerConfig,
    },
    Iteration {
        index: usize,
        candidate: String,
        reward: f64,
        repaired: bool,
        #[serde(skip_serializing_if = "Option::is_none")]
        theta: Option<Vec<f64>>,
        best_reward: f64,
    },
    Final {
        termination: Termination,
        #[serde(skip_serializing_if = "Option::is_none")]
        best_workflow: Option<String>,
        #[serde(skip_serializing_if = "Option::is_none")]
        best_reward: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        seed_reward: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        best_test_reward: Option<f64>,
    },
}

/// A parsed run file.
#[derive(Debug)]
pub struct PersistedRun {
    pub method: Method,
    pub config: OptimizerConfig,
    pub run: OptimizationRun,
}

impl PersistedRun {
    /// Whether the run already reached a definitive end under the given
    /// iteration budget.
    pub fn finished(&self, max_iterations: usize) -> bool {
        match self.run.termination {
            Termination::DeltaConverged | Termination::GeneratorFailure => true,
            Termination::MaxIterations => self.run.iterations.len() >= max_iterations,
        }
    }

    pub fn prior_state(&self) -> PriorState {
        PriorState {
            iterations: self.run.iterations.clone(),
            best: self.run.best.clone(),
            seed_reward: self.run.seed_reward,
        }
    }
}

pub fn render(method: Method, config: &OptimizerConfig, run: &OptimizationRun) -> String {
    let mut out = String::new();
    let mut push = |line: &Line| {
        out.push_str(&serde_json::to_string(line).expect("run line serializes"));
        out.push('\n');
    };
    push(&Line::Meta { method, config: *config });
    let mut best_so_far = f64::NEG_INFINITY;
    for it in &run.iterations {
        best_so_far = best_so_far.max(it.reward);
        push(&Line::Iteration {
            index: it.index,
            candidate: lang::serialize(&it.candidate),
            reward: it.reward,
            repaired: it.repaired,
            theta: it.theta.clone(),
            best_reward: best_so_far,
        });
    }
    push(&Line::Final {
        termination: run.termination,
        best_workflow: run.best.as_ref().map(|(w, _)| lang::serialize(w)),
        best_reward: run.best.as_ref().map(|(_, r)| *r),
        seed_reward: run.seed_reward,
        best_test_reward: run.best_test_reward,
    });
    out
}

pub fn save(path: &Path, method: Method, config: &OptimizerConfig, run: &OptimizationRun) -> std::io::Result<()> {
    std::fs::write(path, render(method, config, run))
}

fn parse_workflow_text(text: &str) -> Result<Workflow, String> {
    lang::parse_workflow(text).map_err(|e| format!("run file holds unparseable workflow: {e}"))
}

pub fn load(path: &Path) -> Result<PersistedRun, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut method = None;
    let mut config = None;
    let mut iterations = Vec::new();
    let mut termination = Termination::MaxIterations;
    let mut best: Option<(Workflow, f64)> = None;
    let mut seed_reward = None;
    let mut best_test_reward = None;
    for (lineno, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let line: Line =
            serde_json::from_str(raw).map_err(|e| format!("run file line {}: {e}", lineno + 1))?;
        match line {
            Line::Meta { method: m, config: c } => {
                method = Some(m);
                config = Some(c);
            }
            Line::Iteration { index, candidate, reward, repaired, theta, .. } => {
                iterations.push(IterationRecord {
                    index,
                    candidate: parse_workflow_text(&candidate)?,
                    reward,
                    repaired,
                    theta,
                });
            }
            Line::Final {
                termination: t,
                best_workflow,
                best_reward,
                seed_reward: sr,
                best_test_reward: btr,
            } => {
                termination = t;
                if let (Some(wf), Some(r)) = (best_workflow, best_reward) {
                    best = Some((parse_workflow_text(&wf)?, r));
                }
                seed_reward = sr;
                best_test_reward = btr;
            }
        }
    }
    let method = method.ok_or("run file has no meta line")?;
    let config = config.ok_or("run file has no config")?;
    Ok(PersistedRun {
        method,
        config,
        run: OptimizationRun { iterations, best, termination, seed_reward, best_test_reward },
    })
}
