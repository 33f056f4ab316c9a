//! Random walks over the crossover neighbourhood, for landscape analysis.
//!
//! A walk keeps a population of one. It starts from the task's seed
//! heuristic (previous) and the first valid initialization candidate
//! (current). Each step crosses the two, ordered (worse, better) by fitness,
//! optionally with a short-term reflection on that pair, and moves to the
//! offspring. Invalid offspring are resampled without advancing the step.
//!
//! The neighbourhood is whatever the crossover prompt samples; there is no
//! distance threshold.

use hevo_core::landscape::{autocorrelation, correlation_length, mean_std};
use serde::{Deserialize, Serialize};

use crate::catalog::{Mode, TaskSpec};
use crate::error::{EvoError, Result};
use crate::gateway::{ChatBackend, ChatRequest};
use crate::harness::FitnessFn;
use crate::prompts::{
    code_body, extract_code, normalize_entry, render, versioned_signature, TemplateId,
};

pub const DEFAULT_STEPS: usize = 40;
pub const RESAMPLE_CAP: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WalkConfig {
    pub steps: usize,
    pub with_reflection: bool,
    pub temperature: f64,
    pub model: String,
    /// Distinguishes request tags of concurrent walks.
    pub run: usize,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            steps: DEFAULT_STEPS,
            with_reflection: true,
            temperature: 1.0,
            model: "gpt-3.5-turbo".into(),
            run: 0,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 2 {
            return Err(EvoError::Config(
                "landscape.steps must be at least 2".into(),
            ));
        }
        if !(self.temperature >= 0.0) {
            return Err(EvoError::Config(
                "landscape.temperature must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WalkTrace {
    /// Fitness after each step.
    pub f: Vec<f64>,
    pub codes: Vec<String>,
    /// Invalid offspring discarded along the way.
    pub skips: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

struct Point {
    code: String,
    f: f64,
}

struct Walker<'a> {
    task: &'a TaskSpec,
    config: &'a WalkConfig,
    backend: &'a dyn ChatBackend,
    fitness: &'a dyn FitnessFn,
}

impl Walker<'_> {
    fn ask(
        &self,
        template: TemplateId,
        b: &crate::prompts::Bindings,
        tag: String,
    ) -> Result<String> {
        let req = ChatRequest {
            messages: render(template, b)?,
            temperature: self.config.temperature,
            model: self.config.model.clone(),
            tag,
        };
        self.backend.complete(&req)
    }

    fn evaluate(&self, response: &str) -> Option<Point> {
        let code = normalize_entry(&extract_code(response).ok()?, &self.task.function_name);
        let f = self.fitness.evaluate(&code).fitness?;
        Some(Point { code, f })
    }

    fn start(&self, trace: &mut WalkTrace) -> Result<(Point, Point)> {
        let seed = self
            .fitness
            .evaluate(&self.task.seed_function)
            .fitness
            .map(|f| Point {
                code: self.task.seed_function.clone(),
                f,
            })
            .ok_or_else(|| EvoError::Config("the seed heuristic does not evaluate".into()))?;
        let b = self.task.base_bindings();
        for attempt in 0..=RESAMPLE_CAP {
            let tag = format!("w{}.s000.{attempt}-init", self.config.run);
            let resp = self.ask(TemplateId::Init, &b, tag)?;
            if let Some(p) = self.evaluate(&resp) {
                return Ok((seed, p));
            }
            trace.skips += 1;
        }
        Err(EvoError::WalkAborted {
            step: 0,
            resamples: RESAMPLE_CAP + 1,
        })
    }

    fn step(&self, t: usize, prev: &Point, cur: &Point, trace: &mut WalkTrace) -> Result<Point> {
        let (worse, better) = if prev.f > cur.f {
            (prev, cur)
        } else if cur.f > prev.f {
            (cur, prev)
        } else {
            (prev, cur)
        };
        let fname = &self.task.function_name;
        let run = self.config.run;
        for attempt in 0..=RESAMPLE_CAP {
            let mut b = self.task.base_bindings();
            let template = if self.config.with_reflection {
                let mut sb = b.clone();
                sb.insert("worse_code".into(), worse.code.clone());
                sb.insert("better_code".into(), better.code.clone());
                let str_t = match self.task.mode {
                    Mode::WhiteBox => TemplateId::StrWhitebox,
                    Mode::BlackBox => TemplateId::StrBlackbox,
                };
                let hint = self.ask(str_t, &sb, format!("w{run}.s{t:03}.{attempt}-str"))?;
                b.insert("short_term_reflection".into(), hint.trim().to_string());
                TemplateId::Crossover
            } else {
                TemplateId::CrossoverNoReflection
            };
            let sig = &self.task.function_signature;
            b.insert(
                "function_signature0".into(),
                versioned_signature(sig, fname, 0),
            );
            b.insert(
                "function_signature1".into(),
                versioned_signature(sig, fname, 1),
            );
            b.insert("worse_code".into(), code_body(&worse.code, fname));
            b.insert("better_code".into(), code_body(&better.code, fname));
            let resp = self.ask(template, &b, format!("w{run}.s{t:03}.{attempt}-crossover"))?;
            if let Some(p) = self.evaluate(&resp) {
                return Ok(p);
            }
            trace.skips += 1;
        }
        Err(EvoError::WalkAborted {
            step: t,
            resamples: RESAMPLE_CAP + 1,
        })
    }
}

/// Runs one walk. Errors leave a partial trace with `aborted` set.
pub fn random_walk(
    task: &TaskSpec,
    config: &WalkConfig,
    backend: &dyn ChatBackend,
    fitness: &dyn FitnessFn,
) -> WalkTrace {
    let mut trace = WalkTrace::default();
    if let Err(e) = config.validate() {
        trace.aborted = Some(e.to_string());
        return trace;
    }
    let w = Walker {
        task,
        config,
        backend,
        fitness,
    };
    let result = (|| -> Result<()> {
        let (mut prev, mut cur) = w.start(&mut trace)?;
        for t in 1..=config.steps {
            let next = w.step(t, &prev, &cur, &mut trace)?;
            trace.f.push(next.f);
            trace.codes.push(next.code.clone());
            prev = std::mem::replace(&mut cur, next);
        }
        Ok(())
    })();
    if let Err(e) = result {
        trace.aborted = Some(e.to_string());
    }
    trace
}

/// Runs independent walks concurrently, one per config.
pub fn random_walks(
    task: &TaskSpec,
    configs: &[WalkConfig],
    backend: &dyn ChatBackend,
    fitness: &dyn FitnessFn,
) -> Vec<WalkTrace> {
    std::thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .map(|c| s.spawn(move || random_walk(task, c, backend, fitness)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("walk thread"))
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeSummary {
    pub variant: String,
    pub correlation_length_mean: f64,
    pub correlation_length_std: f64,
    pub objective_mean: f64,
    pub objective_std: f64,
    pub runs: usize,
}

/// Correlation length of one trace.
pub fn trace_correlation_length(trace: &WalkTrace) -> Result<f64> {
    let r1 = autocorrelation(&trace.f, 1)?;
    Ok(correlation_length(r1)?)
}

/// Mean and sample std of per-walk correlation lengths and mean fitness.
/// Aborted walks are rejected.
pub fn summarize(variant: &str, traces: &[WalkTrace]) -> Result<LandscapeSummary> {
    if let Some(t) = traces.iter().find(|t| t.aborted.is_some()) {
        return Err(EvoError::Config(format!(
            "cannot summarize an aborted walk: {}",
            t.aborted.as_deref().unwrap_or_default()
        )));
    }
    if traces.is_empty() {
        return Err(EvoError::Config("no walks to summarize".into()));
    }
    let lengths = traces
        .iter()
        .map(trace_correlation_length)
        .collect::<Result<Vec<_>>>()?;
    let objectives: Vec<f64> = traces
        .iter()
        .map(|t| t.f.iter().sum::<f64>() / t.f.len() as f64)
        .collect();
    let (lm, ls) = mean_std(&lengths);
    let (om, os) = mean_std(&objectives);
    Ok(LandscapeSummary {
        variant: variant.to_string(),
        correlation_length_mean: lm,
        correlation_length_std: ls,
        objective_mean: om,
        objective_std: os,
        runs: traces.len(),
    })
}
