//! Declarative run configuration: one JSON file plus flag overrides.
//! Relative paths are resolved against the config file's directory.

use crate::backend::{ChatBackend, HttpBackend, ScriptedBackend};
use crate::interpreter::ExecutionLimits;
use crate::optimizer::OptimizerConfig;
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Scripted,
}

#[derive(Debug, Clone, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub rules_file: Option<PathBuf>,
}

impl BackendConfig {
    pub fn build(&self) -> Result<Box<dyn ChatBackend>, String> {
        match self.kind {
            BackendKind::Http => {
                let endpoint = self.endpoint.as_ref().ok_or("http backend requires 'endpoint'")?;
                let model = self.model.as_ref().ok_or("http backend requires 'model'")?;
                Ok(Box::new(HttpBackend::new(endpoint, model)))
            }
            BackendKind::Scripted => {
                let rules = self.rules_file.as_ref().ok_or("scripted backend requires 'rules_file'")?;
                Ok(Box::new(ScriptedBackend::load(rules)?))
            }
        }
    }

    fn resolve(&mut self, base: &Path) {
        if let Some(rules) = &self.rules_file {
            if rules.is_relative() {
                self.rules_file = Some(base.join(rules));
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct OptimizeSection {
    #[serde(flatten, default)]
    pub config: OptimizerConfig,
    /// Few-shot grammar example and optimization starting point.
    pub example_workflow: Option<PathBuf>,
    pub task_description: Option<String>,
}

impl Default for OptimizeSection {
    fn default() -> Self {
        OptimizeSection { config: OptimizerConfig::default(), example_workflow: None, task_description: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct AppConfig {
    pub backend: BackendConfig,
    /// Backend used by the in-context workflow generator; defaults to
    /// `backend` when absent.
    #[serde(default)]
    pub generator_backend: Option<BackendConfig>,
    pub environment_file: PathBuf,
    #[serde(default)]
    pub optimizer: OptimizeSection,
    #[serde(default)]
    pub limits: ExecutionLimits,
    pub output_dir: PathBuf,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

fn default_parallelism() -> usize {
    crate::env::DEFAULT_PARALLELISM
}

impl AppConfig {
    pub fn load(path: &Path) -> Result<AppConfig, String> {
        let json = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut config: AppConfig =
            serde_json::from_str(&json).map_err(|e| format!("{}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        config.resolve(&base);
        config.check()?;
        Ok(config)
    }

    fn resolve(&mut self, base: &Path) {
        self.backend.resolve(base);
        if let Some(generator) = &mut self.generator_backend {
            generator.resolve(base);
        }
        if self.environment_file.is_relative() {
            self.environment_file = base.join(&self.environment_file);
        }
        if let Some(example) = &self.optimizer.example_workflow {
            if example.is_relative() {
                self.optimizer.example_workflow = Some(base.join(example));
            }
        }
        if self.output_dir.is_relative() {
            self.output_dir = base.join(&self.output_dir);
        }
    }

    fn check(&self) -> Result<(), String> {
        if self.limits.max_step_executions < 1 || self.limits.max_tool_calls < 1 {
            return Err("limits must be >= 1".into());
        }
        if self.optimizer.config.max_iterations < 1 {
            return Err("optimizer.max_iterations must be >= 1".into());
        }
        if self.optimizer.config.learning_rate <= 0.0 {
            return Err("optimizer.learning_rate must be > 0".into());
        }
        if self.optimizer.config.reward_delta_threshold < 0.0 {
            return Err("optimizer.reward_delta_threshold must be >= 0".into());
        }
        Ok(())
    }

    pub fn generator_backend_config(&self) -> &BackendConfig {
        self.generator_backend.as_ref().unwrap_or(&self.backend)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_scripted_config_and_resolves_paths() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("rules.json"), "[]").unwrap();
        std::fs::write(
            dir.path().join("env.json"),
            r#"{"name":"t","tools":[],"instances":[]}"#,
        )
        .unwrap();
        let config_json = r#"{
            "backend": {"kind": "scripted", "rules_file": "rules.json"},
            "environment_file": "env.json",
            "output_dir": "out",
            "optimizer": {"seed": 7, "max_iterations": 5}
        }"#;
        let path = dir.path().join("config.json");
        std::fs::write(&path, config_json).unwrap();
        let config = AppConfig::load(&path).unwrap();
        assert_eq!(config.optimizer.config.seed, 7);
        assert_eq!(config.optimizer.config.max_iterations, 5);
        assert_eq!(config.optimizer.config.learning_rate, 0.001);
        assert!(config.backend.rules_file.as_ref().unwrap().is_absolute());
        assert!(config.backend.build().is_ok());
        assert_eq!(config.limits.max_step_executions, 64);
        assert_eq!(config.parallelism, 4);
    }

    #[test]
    fn http_backend_requires_endpoint_and_model() {
        let config = BackendConfig { kind: BackendKind::Http, endpoint: None, model: None, rules_file: None };
        assert!(config.build().is_err());
    }

    #[test]
    fn scripted_backend_requires_rules_file() {
        let config =
            BackendConfig { kind: BackendKind::Scripted, endpoint: None, model: None, rules_file: None };
        assert!(config.build().is_err());
    }
}
