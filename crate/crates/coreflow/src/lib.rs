//! coreflow: a workflow engine for LLM agents.
//!
//! Workflows are natural-language programs (named steps with typed
//! control-flow connections) executed step by step against a pluggable chat
//! backend, and optimized automatically by a generate → execute → reward →
//! refine loop, either in-context (reward fed back into the generation
//! prompt) or with a REINFORCE-trained edit policy.

pub mod backend;
pub mod config;
pub mod env;
pub mod interpreter;
pub mod lang;
pub mod optimizer;
pub mod repair;
pub mod runfile;

pub use backend::{BackendError, ChatBackend, ChatRequest, ChatResponse};
pub use interpreter::{execute, ExecutionLimits, ExecutionTrace, ToolRegistry, ToolSpec};
pub use lang::{parse_workflow, serialize, validate, Step, StepKind, Workflow};
