//! Command implementations behind the `hevo` binary.

pub mod bench;
pub mod config;
pub mod rundir;

use std::path::{Path, PathBuf};

use anyhow::Context;
use hevo_evo::engine::Engine;
use hevo_evo::gateway::RecordBackend;
use hevo_evo::harness::{EvalProtocol, EvalResult, Evaluator, FitnessFn};
use hevo_evo::walk::{random_walks, summarize, LandscapeSummary, WalkTrace};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::rundir::{Persist, RunDir, RunStatus};

pub struct EvolveOutcome {
    pub dir: PathBuf,
    pub status: RunStatus,
}

impl EvolveOutcome {
    pub fn aborted(&self) -> bool {
        self.status.status != "complete"
    }
}

/// Runs one evolution and persists it under `out`.
pub fn evolve(cfg: &RunConfig, out: &Path) -> anyhow::Result<EvolveOutcome> {
    cfg.validate()?;
    let spec = cfg.task_spec()?;
    let evaluator = Evaluator::new(spec, cfg.protocol()?, cfg.runtime.build())?;
    let inner = cfg.backend()?;
    let dir = RunDir::create(out)?;
    dir.write_config(&cfg.to_toml())?;
    let backend = RecordBackend::to_file(inner, &dir.transcript())?;
    let engine = Engine::new(spec, cfg.evolution.clone(), &backend, &evaluator)?;
    let persist = Persist::new(&dir);
    let report = engine.run(&persist);
    backend.finish()?;
    if let Some(e) = persist.take_error() {
        return Err(e.context("cannot persist generation snapshot"));
    }
    let status = dir.finish(&report.state.history, report.error.map(|e| e.to_string()))?;
    Ok(EvolveOutcome {
        dir: dir.root().to_path_buf(),
        status,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeTraces {
    pub variant: String,
    pub traces: Vec<WalkTrace>,
}

pub const WITH_REFLECTION: &str = "with_reflection";
pub const WITHOUT_REFLECTION: &str = "without_reflection";

/// Random walks with and without reflection. Walk `r` of the second variant
/// uses run index `runs + r` so both share one transcript.
pub fn landscape(
    cfg: &RunConfig,
    out: &Path,
) -> anyhow::Result<(Vec<LandscapeSummary>, Vec<LandscapeTraces>)> {
    cfg.validate()?;
    let spec = cfg.task_spec()?;
    let evaluator = Evaluator::new(spec, cfg.protocol()?, cfg.runtime.build())?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.toml"), cfg.to_toml())?;
    let backend = RecordBackend::to_file(cfg.backend()?, &out.join("transcript.jsonl"))?;
    let runs = cfg.landscape.runs;
    let configs: Vec<_> = (0..runs)
        .map(|r| cfg.walk(r, true))
        .chain((0..runs).map(|r| cfg.walk(runs + r, false)))
        .collect();
    let traces = random_walks(spec, &configs, &backend, &evaluator);
    backend.finish()?;
    let groups = vec![
        LandscapeTraces {
            variant: WITH_REFLECTION.into(),
            traces: traces[..runs].to_vec(),
        },
        LandscapeTraces {
            variant: WITHOUT_REFLECTION.into(),
            traces: traces[runs..].to_vec(),
        },
    ];
    std::fs::write(
        out.join("traces.json"),
        serde_json::to_string_pretty(&groups)? + "\n",
    )?;
    let summaries = groups
        .iter()
        .map(|g| summarize(&g.variant, &g.traces))
        .collect::<hevo_evo::Result<Vec<_>>>()
        .context("landscape walks did not complete")?;
    std::fs::write(out.join("landscape.csv"), landscape_csv(&summaries))?;
    Ok((summaries, groups))
}

pub fn landscape_csv(rows: &[LandscapeSummary]) -> String {
    let mut out = String::from(
        "variant,correlation_length_mean,correlation_length_std,objective_mean,objective_std\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.variant,
            r.correlation_length_mean,
            r.correlation_length_std,
            r.objective_mean,
            r.objective_std
        ));
    }
    out
}

/// Which protocol `eval-heuristic` uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSet {
    /// The evolution protocol with the configuration's overrides.
    Validation,
    /// The held-out test protocol at the given size.
    Test(usize),
}

/// Scores one heuristic source file.
pub fn eval_heuristic(
    cfg: &RunConfig,
    source: &Path,
    set: EvalSet,
) -> anyhow::Result<(EvalProtocol, EvalResult)> {
    let spec = cfg.task_spec()?;
    let code = std::fs::read_to_string(source)
        .with_context(|| format!("cannot read {}", source.display()))?;
    let protocol = match set {
        EvalSet::Validation => cfg.protocol()?,
        EvalSet::Test(size) => {
            let mut p = EvalProtocol::test(spec, size);
            if let Some(c) = cfg.protocol.count {
                p.count = c;
            }
            if let Some(t) = cfg.protocol.timeout_s {
                p.timeout_s = t;
            }
            p
        }
    };
    let evaluator = Evaluator::new(spec, protocol.clone(), cfg.runtime.build())?;
    Ok((protocol, evaluator.evaluate(&code)))
}
