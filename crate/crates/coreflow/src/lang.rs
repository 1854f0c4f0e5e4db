//! The CoRE workflow language: parsing, validation, and serialization.
//!
//! A workflow is a newline-separated list of steps, each made of four
//! components delimited by `:::`:
//!
//! ```text
//! Step 1:::Process:::Identify the input data type based on the objective.:::next::Step 2
//! ```
//!
//! The fourth component holds the outgoing connections as alternating
//! `label::target` tokens (`Yes::Step 5::No::Step 3`). Terminal steps carry
//! an empty connection field.

use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::fmt;
use thiserror::Error;

/// A canonical example program, used as the grammar demonstration in
/// generation and repair prompts.
pub const EXAMPLE_WORKFLOW: &str = "\
Step 1:::Process:::Identify the input data type based on the objective.:::next::Step 2
Step 2:::Process:::Identify the output data type based on the objective.:::next::Step 3
Step 3:::Process:::Select tools in the provided tool list to generate a plan.:::next::Step 4
Step 4:::Decision:::Check whether every tool in the plan is in the provided tool list.:::Yes::Step 5::No::Step 3
Step 5:::Decision:::Check whether the output data type of the previous tool is the input data type of the next tool.:::Yes::Step 6::No::Step 3
Step 6:::Terminal:::Output the plan by listing the tool names.:::
";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StepKind {
    Process,
    Decision,
    Terminal,
}

impl StepKind {
    pub fn parse(token: &str) -> Option<StepKind> {
        match token {
            "Process" => Some(StepKind::Process),
            "Decision" => Some(StepKind::Decision),
            "Terminal" => Some(StepKind::Terminal),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            StepKind::Process => "Process",
            StepKind::Decision => "Decision",
            StepKind::Terminal => "Terminal",
        }
    }
}

impl fmt::Display for StepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A labeled edge from one step to another.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Connection {
    pub label: String,
    pub target: String,
}

impl Connection {
    pub fn new(label: impl Into<String>, target: impl Into<String>) -> Self {
        Connection { label: label.into(), target: target.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub name: String,
    pub kind: StepKind,
    pub instruction: String,
    pub connections: Vec<Connection>,
}

/// An ordered list of steps. The entry point is the first listed step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workflow {
    pub steps: Vec<Step>,
}

impl Workflow {
    pub fn entry(&self) -> &str {
        &self.steps[0].name
    }

    pub fn step(&self, name: &str) -> Option<&Step> {
        self.steps.iter().find(|s| s.name == name)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {reason}")]
pub struct ParseError {
    pub line: usize,
    pub reason: ParseReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseReason {
    #[error("no steps found")]
    NoSteps,
    #[error("expected 4 ':::'-delimited fields, found {0}")]
    WrongFieldCount(usize),
    #[error("empty step name")]
    EmptyName,
    #[error("unknown step type '{0}' (expected Process, Decision, or Terminal)")]
    UnknownStepKind(String),
    #[error("empty step instruction")]
    EmptyInstruction,
    #[error("dangling connection token '{0}' (label without target)")]
    DanglingConnection(String),
    #[error("duplicate connection label '{0}' in one step")]
    DuplicateLabel(String),
}

/// A physical line starts a new step when it begins with `Step`, an
/// identifier, and reaches a `:::` delimiter. Anything else continues the
/// previous step, joined with a single space (the example program wraps a
/// long instruction across two lines).
pub(crate) fn is_step_header(line: &str) -> bool {
    let t = line.trim_start();
    let Some(rest) = t.strip_prefix("Step") else { return false };
    if !rest.starts_with(|c: char| c.is_whitespace()) {
        return false;
    }
    match t.find(":::") {
        Some(pos) => !t[..pos].trim().is_empty(),
        None => false,
    }
}

/// Groups physical lines into logical step lines, tagged with the line
/// number of the first physical line of each step.
fn logical_lines(text: &str) -> Vec<(usize, String)> {
    let mut out: Vec<(usize, String)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if out.is_empty() || is_step_header(line) {
            out.push((idx + 1, line.to_string()));
        } else {
            let (_, prev) = out.last_mut().unwrap();
            prev.push(' ');
            prev.push_str(line);
        }
    }
    out
}

fn parse_connections(field: &str, line: usize) -> Result<Vec<Connection>, ParseError> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(Vec::new());
    }
    let tokens: Vec<&str> = field.split("::").map(str::trim).collect();
    if tokens.len() % 2 != 0 {
        return Err(ParseError {
            line,
            reason: ParseReason::DanglingConnection(tokens.last().unwrap().to_string()),
        });
    }
    let mut connections = Vec::with_capacity(tokens.len() / 2);
    let mut seen = HashSet::new();
    for pair in tokens.chunks(2) {
        let (label, target) = (pair[0], pair[1]);
        if label.is_empty() || target.is_empty() {
            return Err(ParseError {
                line,
                reason: ParseReason::DanglingConnection(label.to_string()),
            });
        }
        if !seen.insert(label.to_string()) {
            return Err(ParseError {
                line,
                reason: ParseReason::DuplicateLabel(label.to_string()),
            });
        }
        connections.push(Connection::new(label, target));
    }
    Ok(connections)
}

/// Parses CoRE text into a [`Workflow`]. Graph-level rules (target
/// existence, reachability, connection arity per kind) are left to
/// [`validate`]; only the line grammar is enforced here.
pub fn parse_workflow(text: &str) -> Result<Workflow, ParseError> {
    let lines = logical_lines(text);
    if lines.is_empty() {
        return Err(ParseError { line: 1, reason: ParseReason::NoSteps });
    }
    let mut steps = Vec::with_capacity(lines.len());
    for (line, logical) in lines {
        let fields: Vec<&str> = logical.split(":::").map(str::trim).collect();
        if fields.len() != 4 {
            return Err(ParseError { line, reason: ParseReason::WrongFieldCount(fields.len()) });
        }
        let name = fields[0];
        if name.is_empty() {
            return Err(ParseError { line, reason: ParseReason::EmptyName });
        }
        let kind = StepKind::parse(fields[1]).ok_or_else(|| ParseError {
            line,
            reason: ParseReason::UnknownStepKind(fields[1].to_string()),
        })?;
        let instruction = fields[2];
        if instruction.is_empty() {
            return Err(ParseError { line, reason: ParseReason::EmptyInstruction });
        }
        let connections = parse_connections(fields[3], line)?;
        steps.push(Step {
            name: name.to_string(),
            kind,
            instruction: instruction.to_string(),
            connections,
        });
    }
    Ok(Workflow { steps })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub severity: Severity,
    /// Step name, or "global" for workflow-level issues.
    pub location: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    fn from_issues(issues: Vec<Issue>) -> Self {
        let valid = issues.iter().all(|i| i.severity != Severity::Error);
        ValidationReport { valid, issues }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return writeln!(f, "valid: no issues");
        }
        writeln!(f, "valid: {}", self.valid)?;
        for issue in &self.issues {
            let sev = match issue.severity {
                Severity::Error => "error",
                Severity::Warning => "warning",
            };
            writeln!(f, "  [{sev}] {}: {}", issue.location, issue.message)?;
        }
        Ok(())
    }
}

/// Checks every workflow-level invariant and reports all violations.
/// Unreachable steps are warnings; everything else listed is an error.
pub fn validate(w: &Workflow) -> ValidationReport {
    let mut issues = Vec::new();
    let error = |loc: &str, msg: String| Issue {
        severity: Severity::Error,
        location: loc.to_string(),
        message: msg,
    };

    if w.steps.is_empty() {
        issues.push(error("global", "workflow has no steps".into()));
        return ValidationReport::from_issues(issues);
    }

    let mut seen = HashSet::new();
    for step in &w.steps {
        if !seen.insert(step.name.as_str()) {
            issues.push(error("global", format!("duplicate step name '{}'", step.name)));
        }
    }
    let names: HashSet<&str> = w.steps.iter().map(|s| s.name.as_str()).collect();

    for step in &w.steps {
        match step.kind {
            StepKind::Process => {
                if step.connections.len() != 1 {
                    issues.push(error(
                        &step.name,
                        format!(
                            "Process step must have exactly one connection, found {}",
                            step.connections.len()
                        ),
                    ));
                } else if step.connections[0].label != "next" {
                    issues.push(error(
                        &step.name,
                        format!(
                            "Process connection label must be 'next', found '{}'",
                            step.connections[0].label
                        ),
                    ));
                }
            }
            StepKind::Decision => {
                if step.connections.len() < 2 {
                    issues.push(error(
                        &step.name,
                        format!(
                            "Decision step must have at least two connections, found {}",
                            step.connections.len()
                        ),
                    ));
                }
                let mut labels = HashSet::new();
                for conn in &step.connections {
                    if !labels.insert(conn.label.as_str()) {
                        issues.push(error(
                            &step.name,
                            format!("duplicate branch label '{}'", conn.label),
                        ));
                    }
                }
            }
            StepKind::Terminal => {
                if !step.connections.is_empty() {
                    issues.push(error(
                        &step.name,
                        format!(
                            "Terminal step must have no connections, found {}",
                            step.connections.len()
                        ),
                    ));
                }
            }
        }
        if step.instruction.contains(":::") {
            issues.push(error(&step.name, "instruction contains the ':::' delimiter".into()));
        }
        for conn in &step.connections {
            if !names.contains(conn.target.as_str()) {
                issues.push(error(
                    &step.name,
                    format!("connection '{}' targets nonexistent step '{}'", conn.label, conn.target),
                ));
            }
        }
    }

    // Reachability from the entry step over existing targets.
    let by_name: HashMap<&str, &Step> = w.steps.iter().map(|s| (s.name.as_str(), s)).collect();
    let mut reachable = HashSet::new();
    let mut stack = vec![w.entry()];
    while let Some(name) = stack.pop() {
        if !reachable.insert(name.to_string()) {
            continue;
        }
        if let Some(step) = by_name.get(name) {
            for conn in &step.connections {
                if by_name.contains_key(conn.target.as_str()) {
                    stack.push(&conn.target);
                }
            }
        }
    }
    for step in &w.steps {
        if !reachable.contains(&step.name) {
            issues.push(Issue {
                severity: Severity::Warning,
                location: step.name.clone(),
                message: "step is unreachable from the entry step".into(),
            });
        }
    }
    let terminal_reachable = w
        .steps
        .iter()
        .any(|s| s.kind == StepKind::Terminal && reachable.contains(&s.name));
    if !terminal_reachable {
        issues.push(error("global", "no Terminal step is reachable from the entry step".into()));
    }

    ValidationReport::from_issues(issues)
}

/// Emits the canonical one-line-per-step text form. Parsing the result
/// reconstructs the workflow field by field.
pub fn serialize(w: &Workflow) -> String {
    let mut out = String::new();
    for step in &w.steps {
        let conns = step
            .connections
            .iter()
            .map(|c| format!("{}::{}", c.label, c.target))
            .collect::<Vec<_>>()
            .join("::");
        out.push_str(&format!("{}:::{}:::{}:::{}\n", step.name, step.kind, step.instruction, conns));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const LISTING_WRAPPED: &str = include_str!("../fixtures/wrapped_listing.core");

    #[test]
    fn parses_example_listing() {
        let w = parse_workflow(LISTING_WRAPPED).unwrap();
        assert_eq!(w.len(), 6);
        assert_eq!(w.entry(), "Step 1");
        let kinds: Vec<StepKind> = w.steps.iter().map(|s| s.kind).collect();
        assert_eq!(
            kinds,
            vec![
                StepKind::Process,
                StepKind::Process,
                StepKind::Process,
                StepKind::Decision,
                StepKind::Decision,
                StepKind::Terminal
            ]
        );
        let step4 = w.step("Step 4").unwrap();
        assert_eq!(
            step4.connections,
            vec![Connection::new("Yes", "Step 5"), Connection::new("No", "Step 3")]
        );
        let step6 = w.step("Step 6").unwrap();
        assert!(step6.connections.is_empty());
    }

    #[test]
    fn wrapped_instruction_joins_with_single_space() {
        let w = parse_workflow(LISTING_WRAPPED).unwrap();
        let step5 = w.step("Step 5").unwrap();
        assert_eq!(
            step5.instruction,
            "Check whether the output data type of the previous tool is the input data type of the next tool."
        );
        assert_eq!(
            step5.connections,
            vec![Connection::new("Yes", "Step 6"), Connection::new("No", "Step 3")]
        );
    }

    #[test]
    fn minimal_terminal_program() {
        let w = parse_workflow("Step 1:::Terminal:::Done.:::").unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w.entry(), "Step 1");
        assert_eq!(w.steps[0].kind, StepKind::Terminal);
        assert!(w.steps[0].connections.is_empty());
    }

    #[test]
    fn wrong_field_count_is_an_error() {
        let err = parse_workflow("Step 1:::Process:::Do x.").unwrap_err();
        assert_eq!(err.line, 1);
        assert_eq!(err.reason, ParseReason::WrongFieldCount(3));
    }

    #[test]
    fn unknown_kind_reports_line_number() {
        let text = "Step 1:::Process:::Go.:::next::Step 2\nStep 2:::Loop:::Spin.:::";
        let err = parse_workflow(text).unwrap_err();
        assert_eq!(err.line, 2);
        assert_eq!(err.reason, ParseReason::UnknownStepKind("Loop".into()));
    }

    #[test]
    fn dangling_connection_token() {
        let err = parse_workflow("Step 1:::Decision:::Pick.:::Yes::Step 2::No").unwrap_err();
        assert_eq!(err.reason, ParseReason::DanglingConnection("No".into()));
    }

    #[test]
    fn duplicate_label_in_one_step() {
        let err = parse_workflow("Step 1:::Decision:::Pick.:::Yes::Step 2::Yes::Step 3").unwrap_err();
        assert_eq!(err.reason, ParseReason::DuplicateLabel("Yes".into()));
    }

    #[test]
    fn empty_instruction_rejected() {
        let err = parse_workflow("Step 1:::Terminal::::::").unwrap_err();
        assert_eq!(err.reason, ParseReason::EmptyInstruction);
    }

    #[test]
    fn empty_input_rejected() {
        assert_eq!(parse_workflow("").unwrap_err().reason, ParseReason::NoSteps);
        assert_eq!(parse_workflow("  \n\n ").unwrap_err().reason, ParseReason::NoSteps);
    }

    #[test]
    fn delimiter_whitespace_is_trimmed() {
        let w = parse_workflow("Step 1 ::: Process ::: Go. ::: next :: Step 2\nStep 2:::Terminal:::End.:::").unwrap();
        assert_eq!(w.steps[0].name, "Step 1");
        assert_eq!(w.steps[0].instruction, "Go.");
        assert_eq!(w.steps[0].connections, vec![Connection::new("next", "Step 2")]);
    }

    #[test]
    fn validate_accepts_listing() {
        let w = parse_workflow(LISTING_WRAPPED).unwrap();
        let report = validate(&w);
        assert!(report.valid);
        assert!(report.issues.is_empty());
    }

    #[test]
    fn missing_target_is_an_error() {
        let w = parse_workflow(
            "Step 1:::Process:::Go.:::next::Step 2\nStep 2:::Process:::On.:::next::Step 9\nStep 3:::Terminal:::End.:::",
        )
        .unwrap();
        let report = validate(&w);
        assert!(!report.valid);
        assert!(report
            .issues
            .iter()
            .any(|i| i.severity == Severity::Error && i.location == "Step 2" && i.message.contains("Step 9")));
    }

    #[test]
    fn unreachable_step_is_a_warning() {
        let w = parse_workflow("Step 1:::Terminal:::End.:::\nStep 2:::Terminal:::Lost.:::").unwrap();
        let report = validate(&w);
        assert!(report.valid);
        assert_eq!(report.issues.len(), 1);
        assert_eq!(report.issues[0].severity, Severity::Warning);
        assert_eq!(report.issues[0].location, "Step 2");
    }

    #[test]
    fn no_reachable_terminal_is_an_error() {
        let w = parse_workflow(
            "Step 1:::Process:::Go.:::next::Step 2\nStep 2:::Process:::Back.:::next::Step 1\nStep 3:::Terminal:::End.:::",
        )
        .unwrap();
        let report = validate(&w);
        assert!(!report.valid);
        assert!(report.issues.iter().any(|i| i.message.contains("no Terminal step")));
    }

    #[test]
    fn process_arity_and_label_checked() {
        let mut w = parse_workflow("Step 1:::Process:::Go.:::next::Step 2\nStep 2:::Terminal:::End.:::").unwrap();
        w.steps[0].connections[0].label = "go".into();
        let report = validate(&w);
        assert!(!report.valid);
        assert!(report.issues.iter().any(|i| i.message.contains("'next'")));
    }

    #[test]
    fn duplicate_names_rejected() {
        let w = Workflow {
            steps: vec![
                Step {
                    name: "Step 1".into(),
                    kind: StepKind::Process,
                    instruction: "Go.".into(),
                    connections: vec![Connection::new("next", "Step 1")],
                },
                Step {
                    name: "Step 1".into(),
                    kind: StepKind::Terminal,
                    instruction: "End.".into(),
                    connections: vec![],
                },
            ],
        };
        let report = validate(&w);
        assert!(!report.valid);
        assert!(report.issues.iter().any(|i| i.message.contains("duplicate step name")));
    }

    #[test]
    fn serialize_round_trips_listing() {
        let w = parse_workflow(LISTING_WRAPPED).unwrap();
        let text = serialize(&w);
        let w2 = parse_workflow(&text).unwrap();
        assert_eq!(w, w2);
        // The canonical form re-joins the wrapped instruction onto one line.
        assert_eq!(text, EXAMPLE_WORKFLOW);
    }

    #[test]
    fn serialize_single_terminal() {
        let w = parse_workflow("Step 1:::Terminal:::Done.:::").unwrap();
        assert_eq!(serialize(&w), "Step 1:::Terminal:::Done.:::\n");
    }
}
