//! Turns grammatically invalid workflow text into a valid workflow.
//!
//! Stage 1 is deterministic normalization: strip code fences and surrounding
//! prose, re-join wrapped step lines, canonicalize delimiter spacing. Stage 2
//! asks the backend to rewrite the text, with the grammar rules and an
//! example program in the prompt, at most twice.

use crate::backend::{BackendError, ChatBackend, ChatRequest};
use crate::lang::{self, ParseError, ValidationReport, Workflow, EXAMPLE_WORKFLOW};
use thiserror::Error;

const MODEL_ATTEMPTS: usize = 2;

#[derive(Debug, Clone, Error)]
pub enum RepairFailure {
    #[error("parse failed: {0}")]
    Parse(ParseError),
    #[error("validation failed")]
    Invalid(ValidationReport),
    #[error("backend failed: {0}")]
    Backend(BackendError),
}

#[derive(Debug, Clone, Error)]
#[error("workflow repair failed: {last}")]
pub struct RepairError {
    /// The failure from the last attempted stage.
    pub last: RepairFailure,
}

fn count_delims(s: &str) -> usize {
    s.matches(":::").count()
}

fn is_fence(line: &str) -> bool {
    line.trim_start().starts_with("```")
}

fn canonicalize_line(logical: &str) -> String {
    let fields: Vec<&str> = logical.split(":::").map(str::trim).collect();
    // A Terminal line may arrive without its (empty) fourth field.
    let fields = if fields.len() == 3 && fields[1] == "Terminal" {
        vec![fields[0], fields[1], fields[2], ""]
    } else {
        fields
    };
    if fields.len() != 4 {
        return logical.trim().to_string();
    }
    let conns = fields[3]
        .split("::")
        .map(str::trim)
        .collect::<Vec<_>>()
        .join("::");
    format!("{}:::{}:::{}:::{}", fields[0], fields[1], fields[2], conns)
}

/// Stage 1: deterministic, idempotent source normalization. Keeps only the
/// step lines (joining wrapped continuations into their step) and
/// canonicalizes delimiter spacing.
pub fn normalize_source(text: &str) -> String {
    let mut logical: Vec<String> = Vec::new();
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() || is_fence(line) {
            continue;
        }
        if lang::is_step_header(line) {
            logical.push(line.to_string());
        } else if let Some(current) = logical.last_mut() {
            // A step line is complete once all four fields are present;
            // anything after that is surrounding prose.
            if count_delims(current) < 3 {
                current.push(' ');
                current.push_str(line);
            }
        }
        // Lines before the first step header are preamble prose.
    }
    let mut out = logical
        .iter()
        .map(|l| canonicalize_line(l))
        .collect::<Vec<_>>()
        .join("\n");
    if !out.is_empty() {
        out.push('\n');
    }
    out
}

fn try_text(text: &str) -> Result<Workflow, RepairFailure> {
    let workflow = lang::parse_workflow(text).map_err(RepairFailure::Parse)?;
    let report = lang::validate(&workflow);
    if report.valid {
        Ok(workflow)
    } else {
        Err(RepairFailure::Invalid(report))
    }
}

fn repair_prompt(invalid_text: &str) -> String {
    format!(
        "The following text was supposed to be a workflow program but it is not valid:\n\n\
         {invalid_text}\n\n\
         A workflow program is a list of steps, one per line. Each line has four components \
         delimited by ':::' in this order: step name, step type (Process, Decision, or Terminal), \
         a natural-language instruction, and the outgoing connections. Connections are \
         'label::target' pairs joined by '::', for example 'Yes::Step 5::No::Step 3'. \
         A Process step has exactly one connection labeled 'next'. A Decision step has at least \
         two connections with distinct labels. A Terminal step has no connections and its line \
         ends with ':::'. Every connection must target an existing step.\n\n\
         Here is a valid example workflow:\n\n\
         {EXAMPLE_WORKFLOW}\n\
         Rewrite the broken text above into a valid workflow program. \
         Output only the workflow lines."
    )
}

/// Repairs invalid workflow text: deterministic normalization first, then at
/// most two model-based rewrite attempts. A successful result always
/// validates cleanly.
pub fn repair_workflow(invalid_text: &str, backend: &dyn ChatBackend) -> Result<Workflow, RepairError> {
    let normalized = normalize_source(invalid_text);
    let mut last = match try_text(&normalized) {
        Ok(workflow) => return Ok(workflow),
        Err(failure) => failure,
    };
    for _ in 0..MODEL_ATTEMPTS {
        let req = ChatRequest::user(None, repair_prompt(invalid_text), 0.0);
        let response = match backend.complete(&req) {
            Ok(resp) => resp,
            Err(err) => {
                last = RepairFailure::Backend(err);
                continue;
            }
        };
        match try_text(&normalize_source(&response.content)) {
            Ok(workflow) => return Ok(workflow),
            Err(failure) => last = failure,
        }
    }
    Err(RepairError { last })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ScriptedBackend, ScriptedRule};
    use crate::lang::EXAMPLE_WORKFLOW;

    #[test]
    fn stage1_strips_prose_and_fences() {
        let wrapped = format!(
            "Here is the workflow you asked for:\n\n```\n{EXAMPLE_WORKFLOW}```\n\nLet me know if it helps."
        );
        let backend = ScriptedBackend::new(vec![], "");
        let workflow = repair_workflow(&wrapped, &backend).unwrap();
        assert_eq!(workflow.len(), 6);
        // The backend was never consulted.
        assert!(backend.requests().is_empty());
    }

    #[test]
    fn stage1_is_idempotent() {
        let messy = format!("Intro prose.\n{EXAMPLE_WORKFLOW}\nTrailing remark.");
        let once = normalize_source(&messy);
        assert_eq!(normalize_source(&once), once);
    }

    #[test]
    fn stage1_normalizes_delimiter_spacing() {
        let text = "Step 1 ::: Process ::: Go. ::: next :: Step 2\nStep 2:::Terminal:::End.";
        let normalized = normalize_source(text);
        assert_eq!(normalized, "Step 1:::Process:::Go.:::next::Step 2\nStep 2:::Terminal:::End.:::\n");
    }

    #[test]
    fn stage2_uses_backend_fix() {
        let broken = "Step 1:::Process:::Go.:::next::Step 9";
        let backend = ScriptedBackend::new(
            vec![ScriptedRule::always(
                "not valid",
                "Step 1:::Process:::Go.:::next::Step 2\nStep 2:::Terminal:::End.:::",
            )],
            "",
        );
        let workflow = repair_workflow(broken, &backend).unwrap();
        assert_eq!(workflow.len(), 2);
        assert!(crate::lang::validate(&workflow).valid);
    }

    #[test]
    fn repair_prompt_includes_example_and_broken_text() {
        let backend = ScriptedBackend::new(vec![], "still garbage");
        let _ = repair_workflow("garbage in", &backend);
        let requests = backend.requests();
        assert_eq!(requests.len(), 2);
        let prompt = requests[0].last_user_content().unwrap();
        assert!(prompt.contains("garbage in"));
        assert!(prompt.contains("Step 4:::Decision"));
    }

    #[test]
    fn garbage_twice_yields_repair_error() {
        let backend = ScriptedBackend::new(vec![], "not a workflow either");
        let err = repair_workflow("complete nonsense", &backend).unwrap_err();
        assert!(matches!(err.last, RepairFailure::Parse(_)));
    }
}
