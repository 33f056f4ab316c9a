//! The evolutionary loop.
//!
//! A run initializes a population from the generator, then repeats
//! generations of selection, short-term reflection, crossover, long-term
//! reflection and elitist mutation until the evaluation budget is spent.
//! Every generated candidate counts against `max_evaluations`, including
//! responses without extractable code.
//!
//! Fitness is minimized. Individuals whose evaluation failed keep an
//! `INVALID` (`None`) fitness and never reach a prompt.

use std::collections::BTreeMap;

use hevo_core::par;
use hevo_core::rng::{self, Rng};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::catalog::{Mode, TaskSpec};
use crate::error::{EvoError, Result};
use crate::gateway::{complete_many, ChatBackend, ChatRequest};
use crate::harness::{EvalResult, ExecStatus, FitnessFn};
use crate::prompts::{
    code_body, extract_code, normalize_entry, render, versioned_signature, Bindings, Message,
    TemplateId,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Init,
    Crossover,
    Mutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: usize,
    pub code: String,
    pub fitness: Option<f64>,
    pub exec_status: ExecStatus,
    pub generation: usize,
    pub parent_ids: Vec<usize>,
    pub origin: Origin,
    /// Tag of the request that produced this individual.
    pub tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    /// Evaluation wall time; machine dependent, so not serialized.
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl Individual {
    pub fn is_valid(&self) -> bool {
        self.fitness.is_some()
    }
}

/// `a` ranks before `b`: lower fitness, then lower id. Invalid last.
fn ranks_before(a: &Individual, b: &Individual) -> bool {
    match (a.fitness, b.fitness) {
        (Some(x), Some(y)) => x < y || (x == y && a.id < b.id),
        (Some(_), None) => true,
        (None, Some(_)) => false,
        (None, None) => a.id < b.id,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub members: Vec<Individual>,
}

impl Population {
    pub fn valid(&self) -> Vec<&Individual> {
        self.members.iter().filter(|m| m.is_valid()).collect()
    }

    pub fn elite(&self) -> Option<&Individual> {
        self.members
            .iter()
            .filter(|m| m.is_valid())
            .reduce(|best, m| if ranks_before(m, best) { m } else { best })
    }

    pub fn elite_id(&self) -> Option<usize> {
        self.elite().map(|e| e.id)
    }

    /// Keeps the best `size` valid members; ties go to the lower id.
    pub fn trim(&mut self, size: usize) {
        self.members.retain(Individual::is_valid);
        self.members.sort_by(|a, b| {
            a.fitness
                .unwrap()
                .total_cmp(&b.fitness.unwrap())
                .then(a.id.cmp(&b.id))
        });
        self.members.truncate(size);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReflectionMemory {
    pub long_term: String,
    pub recent_short_term: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    pub disable_str: bool,
    pub disable_ltr: bool,
    pub disable_crossover: bool,
    pub disable_mutation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvoConfig {
    pub pop_size: usize,
    pub init_size: usize,
    pub max_evaluations: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub temperature: f64,
    /// Added to `temperature` for initialization requests.
    pub init_temperature_boost: f64,
    pub generator_model: String,
    pub reflector_model: String,
    pub ablation: Ablation,
    /// Seeds parent selection.
    pub seed: u64,
    pub max_in_flight: usize,
}

impl Default for EvoConfig {
    fn default() -> Self {
        EvoConfig {
            pop_size: 10,
            init_size: 30,
            max_evaluations: 100,
            crossover_rate: 1.0,
            mutation_rate: 0.5,
            temperature: 1.0,
            init_temperature_boost: 0.3,
            generator_model: "gpt-3.5-turbo".into(),
            reflector_model: "gpt-3.5-turbo".into(),
            ablation: Ablation::default(),
            seed: 0,
            max_in_flight: 8,
        }
    }
}

impl EvoConfig {
    /// Checks every field, listing all problems with their paths.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.pop_size == 0 {
            errs.push("evolution.pop_size must be at least 1");
        }
        if self.init_size == 0 {
            errs.push("evolution.init_size must be at least 1");
        }
        if self.max_evaluations == 0 {
            errs.push("evolution.max_evaluations must be at least 1");
        }
        if !(self.crossover_rate >= 0.0 && self.crossover_rate.is_finite()) {
            errs.push("evolution.crossover_rate must be a finite value >= 0");
        }
        if !(self.mutation_rate >= 0.0 && self.mutation_rate.is_finite()) {
            errs.push("evolution.mutation_rate must be a finite value >= 0");
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            errs.push("evolution.temperature must be a finite value >= 0");
        }
        if !(self.temperature + self.init_temperature_boost >= 0.0) {
            errs.push("evolution.init_temperature_boost makes the init temperature negative");
        }
        if self.max_in_flight == 0 {
            errs.push("evolution.max_in_flight must be at least 1");
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(EvoError::Config(errs.join("; ")))
        }
    }

    pub fn crossover_count(&self) -> usize {
        (self.pop_size as f64 * self.crossover_rate).ceil() as usize
    }

    pub fn mutation_count(&self) -> usize {
        (self.pop_size as f64 * self.mutation_rate).ceil() as usize
    }
}

/// Raised when no two valid members differ in fitness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectionExhausted;

/// Draws `k` parent pairs uniformly from the unordered pairs of `members`
/// with different fitness. Each pair is returned as (worse, better).
pub fn select_parents<'a>(
    members: &[&'a Individual],
    k: usize,
    rng: &mut Rng,
) -> std::result::Result<Vec<(&'a Individual, &'a Individual)>, SelectionExhausted> {
    let mut legal = Vec::new();
    for i in 0..members.len() {
        for j in i + 1..members.len() {
            let (a, b) = (members[i], members[j]);
            if let (Some(fa), Some(fb)) = (a.fitness, b.fitness) {
                if fa != fb {
                    legal.push(if fa > fb { (a, b) } else { (b, a) });
                }
            }
        }
    }
    if legal.is_empty() {
        return Err(SelectionExhausted);
    }
    Ok((0..k)
        .map(|_| legal[rng.gen_range(0..legal.len())])
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReflectionKind {
    ShortTerm,
    LongTerm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reflection {
    pub tag: String,
    pub generation: usize,
    pub kind: ReflectionKind,
    /// (worse, better) ids for short-term reflections.
    pub parent_ids: Vec<usize>,
    pub text: String,
}

/// One prompt and its response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub tag: String,
    pub messages: Vec<Message>,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestPoint {
    /// Candidates generated so far, this one included.
    pub evaluations: usize,
    pub fitness: Option<f64>,
    pub individual_id: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSummary {
    pub generation: usize,
    pub evaluations: usize,
    pub best_fitness: Option<f64>,
    pub population: Vec<usize>,
    pub selection_exhausted: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub task: String,
    pub mode: Option<Mode>,
    pub individuals: Vec<Individual>,
    pub reflections: Vec<Reflection>,
    pub exchanges: Vec<Exchange>,
    /// One point per generated candidate.
    pub best_so_far: Vec<BestPoint>,
    pub generations: Vec<GenerationSummary>,
    /// Candidates that reached the evaluator.
    pub evaluated: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

impl History {
    pub fn attempts(&self) -> usize {
        self.individuals.len()
    }

    pub fn best(&self) -> Option<&Individual> {
        self.individuals
            .iter()
            .filter(|i| i.is_valid())
            .reduce(|b, i| if ranks_before(i, b) { i } else { b })
    }

    /// sha256 of the serialized history; equal across replays of one run.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(
            serde_json::to_vec(self).expect("history serializes"),
        ))
    }
}

/// Mutable state of a run, persisted between generations.
#[derive(Debug, Clone)]
pub struct EvoState {
    pub population: Population,
    pub memory: ReflectionMemory,
    pub history: History,
    pub generation: usize,
    rng: Rng,
}

impl EvoState {
    pub fn new(task: &TaskSpec, config: &EvoConfig) -> Self {
        EvoState {
            population: Population::default(),
            memory: ReflectionMemory {
                long_term: task.initial_long_term_reflection.clone(),
                recent_short_term: Vec::new(),
            },
            history: History {
                task: task.id.clone(),
                mode: Some(task.mode),
                ..History::default()
            },
            generation: 0,
            rng: rng::seeded(config.seed),
        }
    }

    pub fn remaining(&self, config: &EvoConfig) -> usize {
        config
            .max_evaluations
            .saturating_sub(self.history.attempts())
    }
}

/// Called at generation barriers, for persistence.
pub trait RunObserver {
    fn generation_done(&self, _state: &EvoState) {}
}

impl RunObserver for () {}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub best: Option<Individual>,
    pub state: EvoState,
    pub error: Option<EvoError>,
}

struct Candidate {
    tag: String,
    messages: Vec<Message>,
    parent_ids: Vec<usize>,
    origin: Origin,
}

pub struct Engine<'a> {
    task: &'a TaskSpec,
    config: EvoConfig,
    backend: &'a dyn ChatBackend,
    fitness: &'a dyn FitnessFn,
}

fn tag(generation: usize, step: u8, phase: &str, idx: usize) -> String {
    format!("g{generation:03}.{step}-{phase}.{idx:03}")
}

impl<'a> Engine<'a> {
    pub fn new(
        task: &'a TaskSpec,
        config: EvoConfig,
        backend: &'a dyn ChatBackend,
        fitness: &'a dyn FitnessFn,
    ) -> Result<Self> {
        config.validate()?;
        Ok(Engine {
            task,
            config,
            backend,
            fitness,
        })
    }

    pub fn config(&self) -> &EvoConfig {
        &self.config
    }

    fn bindings(&self) -> Bindings {
        self.task.base_bindings()
    }

    fn request(
        &self,
        messages: Vec<Message>,
        temperature: f64,
        generator: bool,
        tag: String,
    ) -> ChatRequest {
        ChatRequest {
            messages,
            temperature,
            model: if generator {
                self.config.generator_model.clone()
            } else {
                self.config.reflector_model.clone()
            },
            tag,
        }
    }

    /// Sends requests concurrently and logs each exchange. The first failure
    /// aborts the run.
    fn ask(&self, state: &mut EvoState, requests: &[ChatRequest]) -> Result<Vec<String>> {
        let results = complete_many(self.backend, requests, self.config.max_in_flight);
        let mut out = Vec::with_capacity(results.len());
        for (req, r) in requests.iter().zip(results) {
            let text = r?;
            state.history.exchanges.push(Exchange {
                tag: req.tag.clone(),
                messages: req.messages.clone(),
                response: text.clone(),
            });
            out.push(text);
        }
        Ok(out)
    }

    /// Generates, evaluates and records candidates; returns their ids.
    fn breed(
        &self,
        state: &mut EvoState,
        candidates: Vec<Candidate>,
        temperature: f64,
    ) -> Result<Vec<usize>> {
        let requests: Vec<ChatRequest> = candidates
            .iter()
            .map(|c| self.request(c.messages.clone(), temperature, true, c.tag.clone()))
            .collect();
        let responses = self.ask(state, &requests)?;
        let fname = &self.task.function_name;
        let codes: Vec<std::result::Result<String, String>> = responses
            .iter()
            .map(|r| {
                extract_code(r)
                    .map(|c| normalize_entry(&c, fname))
                    .map_err(|e| e.to_string())
            })
            .collect();
        let results: Vec<Option<EvalResult>> = par::map_slice(&codes, |c| match c {
            Ok(code) => Some(self.fitness.evaluate(code)),
            Err(_) => None,
        });
        let mut ids = Vec::with_capacity(candidates.len());
        for ((cand, code), result) in candidates.into_iter().zip(codes).zip(results) {
            let id = state.history.individuals.len();
            let ind = match code {
                Ok(code) => {
                    let r = result.expect("extracted code is evaluated");
                    state.history.evaluated += 1;
                    Individual {
                        id,
                        code,
                        fitness: r.fitness,
                        exec_status: r.status,
                        generation: state.generation,
                        parent_ids: cand.parent_ids,
                        origin: cand.origin,
                        tag: cand.tag,
                        message: r.message,
                        wall_time_s: r.wall_time_s,
                    }
                }
                Err(msg) => Individual {
                    id,
                    code: String::new(),
                    fitness: None,
                    exec_status: ExecStatus::ExecError,
                    generation: state.generation,
                    parent_ids: cand.parent_ids,
                    origin: cand.origin,
                    tag: cand.tag,
                    message: Some(msg),
                    wall_time_s: 0.0,
                },
            };
            let prev = state
                .history
                .best_so_far
                .last()
                .and_then(|p| p.individual_id);
            let best = match prev.map(|p| &state.history.individuals[p]) {
                Some(b) if !ind.is_valid() || ranks_before(b, &ind) => Some(b),
                _ if ind.is_valid() => Some(&ind),
                _ => None,
            };
            state.history.best_so_far.push(BestPoint {
                evaluations: id + 1,
                fitness: best.and_then(|b| b.fitness),
                individual_id: best.map(|b| b.id),
            });
            state.history.individuals.push(ind);
            ids.push(id);
        }
        Ok(ids)
    }

    /// Requests `init_size` candidates (capped by the budget) and keeps the
    /// best `pop_size` valid ones.
    pub fn initialize(&self, state: &mut EvoState) -> Result<()> {
        let n = self.config.init_size.min(state.remaining(&self.config));
        let msgs = render(TemplateId::Init, &self.bindings())?;
        let candidates = (0..n)
            .map(|i| Candidate {
                tag: tag(0, 0, "init", i),
                messages: msgs.clone(),
                parent_ids: Vec::new(),
                origin: Origin::Init,
            })
            .collect();
        let t = self.config.temperature + self.config.init_temperature_boost;
        let ids = self.breed(state, candidates, t)?;
        state.population.members = ids
            .iter()
            .map(|&i| state.history.individuals[i].clone())
            .collect();
        state.population.trim(self.config.pop_size);
        if state.population.members.is_empty() {
            return Err(EvoError::NoValidIndividual { attempts: n });
        }
        self.summarize(state, false);
        Ok(())
    }

    fn summarize(&self, state: &mut EvoState, exhausted: bool) {
        state.history.generations.push(GenerationSummary {
            generation: state.generation,
            evaluations: state.history.attempts(),
            best_fitness: state.history.best().and_then(|b| b.fitness),
            population: state.population.members.iter().map(|m| m.id).collect(),
            selection_exhausted: exhausted,
        });
    }

    fn short_term(
        &self,
        state: &mut EvoState,
        pairs: &[(Individual, Individual)],
    ) -> Result<Vec<String>> {
        let template = match self.task.mode {
            Mode::WhiteBox => TemplateId::StrWhitebox,
            Mode::BlackBox => TemplateId::StrBlackbox,
        };
        let mut requests = Vec::with_capacity(pairs.len());
        for (i, (worse, better)) in pairs.iter().enumerate() {
            let mut b = self.bindings();
            b.insert("worse_code".into(), worse.code.clone());
            b.insert("better_code".into(), better.code.clone());
            let msgs = render(template, &b)?;
            requests.push(self.request(
                msgs,
                self.config.temperature,
                false,
                tag(state.generation, 1, "str", i),
            ));
        }
        let texts: Vec<String> = self
            .ask(state, &requests)?
            .into_iter()
            .map(|t| t.trim().to_string())
            .collect();
        for ((req, (worse, better)), text) in requests.iter().zip(pairs).zip(&texts) {
            state.history.reflections.push(Reflection {
                tag: req.tag.clone(),
                generation: state.generation,
                kind: ReflectionKind::ShortTerm,
                parent_ids: vec![worse.id, better.id],
                text: text.clone(),
            });
        }
        Ok(texts)
    }

    fn crossover(
        &self,
        state: &mut EvoState,
        pairs: &[(Individual, Individual)],
        reflections: Option<&[String]>,
    ) -> Result<Vec<usize>> {
        let fname = &self.task.function_name;
        let sig = &self.task.function_signature;
        let mut candidates = Vec::with_capacity(pairs.len());
        for (i, (worse, better)) in pairs.iter().enumerate() {
            let mut b = self.bindings();
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
            let template = match reflections {
                Some(r) => {
                    b.insert("short_term_reflection".into(), r[i].clone());
                    TemplateId::Crossover
                }
                None => TemplateId::CrossoverNoReflection,
            };
            candidates.push(Candidate {
                tag: tag(state.generation, 2, "crossover", i),
                messages: render(template, &b)?,
                parent_ids: vec![worse.id, better.id],
                origin: Origin::Crossover,
            });
        }
        self.breed(state, candidates, self.config.temperature)
    }

    fn long_term(&self, state: &mut EvoState) -> Result<()> {
        let mut b = self.bindings();
        b.insert(
            "prior_long-term_reflection".into(),
            state.memory.long_term.clone(),
        );
        b.insert(
            "new_short-term_reflections".into(),
            state.memory.recent_short_term.join("\n"),
        );
        let req = self.request(
            render(TemplateId::Ltr, &b)?,
            self.config.temperature,
            false,
            tag(state.generation, 3, "ltr", 0),
        );
        let text = self.ask(state, std::slice::from_ref(&req))?.remove(0);
        let text = text.trim().to_string();
        state.history.reflections.push(Reflection {
            tag: req.tag,
            generation: state.generation,
            kind: ReflectionKind::LongTerm,
            parent_ids: Vec::new(),
            text: text.clone(),
        });
        state.memory.long_term = text;
        state.memory.recent_short_term.clear();
        Ok(())
    }

    fn mutate(&self, state: &mut EvoState, n: usize) -> Result<Vec<usize>> {
        let Some(elite) = state.population.elite().cloned() else {
            return Ok(Vec::new());
        };
        let fname = &self.task.function_name;
        let mut b = self.bindings();
        b.insert(
            "long-term_reflection".into(),
            state.memory.long_term.clone(),
        );
        b.insert(
            "function_signature1".into(),
            versioned_signature(&self.task.function_signature, fname, 1),
        );
        b.insert("elitist_code".into(), code_body(&elite.code, fname));
        let msgs = render(TemplateId::Mutation, &b)?;
        let candidates = (0..n)
            .map(|i| Candidate {
                tag: tag(state.generation, 4, "mutation", i),
                messages: msgs.clone(),
                parent_ids: vec![elite.id],
                origin: Origin::Mutation,
            })
            .collect();
        self.breed(state, candidates, self.config.temperature)
    }

    /// One generation. Returns the number of candidates generated.
    pub fn step_generation(&self, state: &mut EvoState) -> Result<usize> {
        state.generation += 1;
        let ab = self.config.ablation;
        let mut produced = 0;
        let mut exhausted = false;
        if !ab.disable_crossover {
            let k = self
                .config
                .crossover_count()
                .min(state.remaining(&self.config));
            let valid = state.population.valid();
            let pairs: Vec<(Individual, Individual)> =
                match select_parents(&valid, k, &mut state.rng) {
                    Ok(p) => p.into_iter().map(|(w, b)| (w.clone(), b.clone())).collect(),
                    Err(SelectionExhausted) => {
                        exhausted = true;
                        Vec::new()
                    }
                };
            if !pairs.is_empty() {
                let reflections = if ab.disable_str {
                    None
                } else {
                    Some(self.short_term(state, &pairs)?)
                };
                let ids = self.crossover(state, &pairs, reflections.as_deref())?;
                produced += ids.len();
                if let Some(r) = reflections {
                    state.memory.recent_short_term.extend(r);
                }
                for id in ids {
                    let ind = state.history.individuals[id].clone();
                    if ind.is_valid() {
                        state.population.members.push(ind);
                    }
                }
            }
        }
        if !ab.disable_ltr && !state.memory.recent_short_term.is_empty() {
            self.long_term(state)?;
        }
        if !ab.disable_mutation {
            let n = self
                .config
                .mutation_count()
                .min(state.remaining(&self.config));
            let ids = self.mutate(state, n)?;
            produced += ids.len();
            for id in ids {
                let ind = state.history.individuals[id].clone();
                if ind.is_valid() {
                    state.population.members.push(ind);
                }
            }
        }
        state.population.trim(self.config.pop_size);
        self.summarize(state, exhausted);
        Ok(produced)
    }

    /// Runs to budget exhaustion. Errors end the run early; the report then
    /// carries the partial state and the error.
    pub fn run(&self, observer: &dyn RunObserver) -> RunReport {
        let mut state = EvoState::new(self.task, &self.config);
        let error = self.drive(&mut state, observer).err();
        if let Some(e) = &error {
            state.history.aborted = Some(e.to_string());
        }
        RunReport {
            best: state.history.best().cloned(),
            state,
            error,
        }
    }

    fn drive(&self, state: &mut EvoState, observer: &dyn RunObserver) -> Result<()> {
        let init = self.initialize(state);
        observer.generation_done(state);
        init?;
        while state.remaining(&self.config) > 0 {
            let produced = self.step_generation(state);
            observer.generation_done(state);
            if produced? == 0 {
                break;
            }
        }
        Ok(())
    }
}

/// Exec status counts over all individuals of a run.
pub fn status_counts(history: &History) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for i in &history.individuals {
        let key = serde_json::to_value(i.exec_status)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        *out.entry(key).or_insert(0) += 1;
    }
    out
}
