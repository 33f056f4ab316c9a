//! Run configuration: one TOML file plus flag overrides.
//!
//! Precedence is flags > file > defaults. Every table is optional in the
//! file; missing keys take their defaults. The effective configuration is
//! written back as `config.toml` in each run directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use hevo_evo::engine::EvoConfig;
use hevo_evo::gateway::{ChatBackend, LiveBackend, LiveConfig, ReplayBackend};
use hevo_evo::harness::{
    BuiltinRuntime, EvalProtocol, HeuristicRuntime, SandboxConfig, SandboxRuntime,
};
use hevo_evo::walk::WalkConfig;
use hevo_evo::{task, Mode, TaskSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolOverrides {
    pub size: Option<usize>,
    pub count: Option<usize>,
    pub master_seed: Option<u64>,
    pub timeout_s: Option<f64>,
}

impl ProtocolOverrides {
    /// The evolution protocol of `task` with these overrides applied.
    pub fn apply(&self, task: &TaskSpec) -> EvalProtocol {
        let mut p = EvalProtocol::evolution(task);
        if let Some(v) = self.size {
            p.size = v;
        }
        if let Some(v) = self.count {
            p.count = v;
        }
        if let Some(v) = self.master_seed {
            p.master_seed = v;
        }
        if let Some(v) = self.timeout_s {
            p.timeout_s = v;
        }
        p
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// HTTP chat completions; every exchange is recorded to the run's transcript.
    #[default]
    Live,
    /// Answers from a recorded transcript; misses abort the run.
    Replay,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Transcript to replay from.
    pub transcript: Option<PathBuf>,
    pub live: LiveConfig,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RuntimeKind {
    /// Host implementations of the catalog heuristics only.
    #[default]
    Builtin,
    /// External runner processes speaking the JSON-lines protocol.
    Sandbox,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeConfig {
    pub kind: RuntimeKind,
    pub sandbox: SandboxConfig,
}

impl RuntimeConfig {
    pub fn build(&self) -> Arc<dyn HeuristicRuntime> {
        match self.kind {
            RuntimeKind::Builtin => Arc::new(BuiltinRuntime::new()),
            RuntimeKind::Sandbox => Arc::new(SandboxRuntime::new(self.sandbox.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LandscapeConfig {
    pub runs: usize,
    pub steps: usize,
    pub temperature: f64,
}

impl Default for LandscapeConfig {
    fn default() -> Self {
        let w = WalkConfig::default();
        LandscapeConfig {
            runs: 3,
            steps: w.steps,
            temperature: w.temperature,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: String,
    pub mode: Mode,
    pub evolution: EvoConfig,
    pub protocol: ProtocolOverrides,
    pub backend: BackendConfig,
    pub runtime: RuntimeConfig,
    pub landscape: LandscapeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: "tsp_aco".into(),
            mode: Mode::WhiteBox,
            evolution: EvoConfig::default(),
            protocol: ProtocolOverrides::default(),
            backend: BackendConfig::default(),
            runtime: RuntimeConfig::default(),
            landscape: LandscapeConfig::default(),
        }
    }
}

impl RunConfig {
    /// Defaults overlaid with `path`, when given.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn task_spec(&self) -> anyhow::Result<&'static TaskSpec> {
        Ok(task(&self.task, self.mode)?)
    }

    pub fn protocol(&self) -> anyhow::Result<EvalProtocol> {
        Ok(self.protocol.apply(self.task_spec()?))
    }

    pub fn walk(&self, run: usize, with_reflection: bool) -> WalkConfig {
        WalkConfig {
            steps: self.landscape.steps,
            with_reflection,
            temperature: self.landscape.temperature,
            model: self.evolution.generator_model.clone(),
            run,
        }
    }

    /// Every problem in the configuration, one per line with its field path.
    pub fn validate(&self) -> anyhow::Result<()> {
        let mut errs = Vec::new();
        match self.task_spec() {
            Ok(spec) => errs.extend(self.protocol.apply(spec).validate().err().map(|e| e.to_string())),
            Err(e) => errs.push(format!("task: {e}")),
        }
        for r in [self.evolution.validate(), self.walk(0, true).validate()] {
            errs.extend(r.err().map(|e| e.to_string()));
        }
        if self.landscape.runs == 0 {
            errs.push("landscape.runs must be positive".into());
        }
        if self.backend.kind == BackendKind::Replay && self.backend.transcript.is_none() {
            errs.push("backend.transcript is required for replay".into());
        }
        if self.backend.live.max_in_flight == 0 {
            errs.push("backend.live.max_in_flight must be positive".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            bail!("invalid configuration:\n  {}", errs.join("\n  "))
        }
    }

    /// The backend without recording.
    pub fn backend(&self) -> anyhow::Result<Arc<dyn ChatBackend>> {
        Ok(match self.backend.kind {
            BackendKind::Live => Arc::new(LiveBackend::new(self.backend.live.clone())),
            BackendKind::Replay => {
                let path = self
                    .backend
                    .transcript
                    .as_deref()
                    .context("backend.transcript is required for replay")?;
                Arc::new(
                    ReplayBackend::from_file(path)
                        .with_context(|| format!("cannot load transcript {}", path.display()))?,
                )
            }
        })
    }
}
