use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use hevo_core::rng;
use hevo_evo::engine::{
    select_parents, Ablation, Engine, EvoConfig, Individual, Origin, RunReport,
};
use hevo_evo::gateway::{ChatBackend, ChatRequest, RecordBackend, ReplayBackend, ScriptedBackend};
use hevo_evo::harness::{EvalResult, ExecStatus, FitnessFn};
use hevo_evo::{task, EvoError, Mode, TaskSpec};
use regex::Regex;

fn spec() -> &'static TaskSpec {
    task("tsp_aco", Mode::WhiteBox).unwrap()
}

fn code(k: f64) -> String {
    format!("```python\nimport numpy as np\ndef heuristics_v2(distance_matrix):\n    return distance_matrix * {k}\n```")
}

fn ks(text: &str) -> Vec<f64> {
    let re = Regex::new(r"return distance_matrix \* ([0-9.]+)").unwrap();
    re.captures_iter(text)
        .map(|c| c[1].parse().unwrap())
        .collect()
}

fn tag_hash(tag: &str) -> u64 {
    tag.bytes().fold(1469598103934665603u64, |h, b| {
        (h ^ b as u64).wrapping_mul(1099511628211)
    })
}

/// Init draws a factor from the tag; crossover improves on the better parent
/// by one; mutation improves on the elite by a half.
fn improving(req: &ChatRequest) -> hevo_evo::Result<String> {
    let t = &req.tag;
    let user = req.user_text();
    Ok(if t.contains("-init") {
        code(100.0 + (tag_hash(t) % 50) as f64)
    } else if t.contains("-crossover") {
        let best = ks(user).into_iter().fold(f64::INFINITY, f64::min);
        code(best - 1.0)
    } else if t.contains("-mutation") {
        code(ks(user)[0] - 0.5)
    } else {
        format!("hint for {t}")
    })
}

/// Fitness is the factor; `BROKEN` marks failing code.
struct FactorFitness {
    calls: AtomicUsize,
}

impl FactorFitness {
    fn new() -> Self {
        FactorFitness {
            calls: AtomicUsize::new(0),
        }
    }
}

impl FitnessFn for FactorFitness {
    fn evaluate(&self, code: &str) -> EvalResult {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if code.contains("BROKEN") {
            return EvalResult {
                fitness: None,
                status: ExecStatus::ExecError,
                objectives: vec![],
                wall_time_s: 0.0,
                message: Some("boom".into()),
            };
        }
        let k = ks(code)[0];
        EvalResult {
            fitness: Some(k),
            status: ExecStatus::Ok,
            objectives: vec![k],
            wall_time_s: 0.0,
            message: None,
        }
    }
}

fn run(config: EvoConfig, backend: &dyn ChatBackend) -> (RunReport, usize) {
    let fit = FactorFitness::new();
    let engine = Engine::new(spec(), config, backend, &fit).unwrap();
    let report = engine.run(&());
    (report, fit.calls.load(Ordering::SeqCst))
}

fn ind(id: usize, f: f64) -> Individual {
    Individual {
        id,
        code: String::new(),
        fitness: Some(f),
        exec_status: ExecStatus::Ok,
        generation: 0,
        parent_ids: vec![],
        origin: Origin::Init,
        tag: String::new(),
        message: None,
        wall_time_s: 0.0,
    }
}

#[test]
fn defaults_follow_the_published_settings() {
    let c = EvoConfig::default();
    assert_eq!((c.pop_size, c.init_size, c.max_evaluations), (10, 30, 100));
    assert_eq!(
        (c.crossover_rate, c.mutation_rate, c.temperature),
        (1.0, 0.5, 1.0)
    );
    assert_eq!(c.init_temperature_boost, 0.3);
    assert_eq!((c.crossover_count(), c.mutation_count()), (10, 5));
}

#[test]
fn budget_is_exact_and_audited() {
    let backend = ScriptedBackend::new(improving);
    let (r, calls) = run(EvoConfig::default(), &backend);
    assert!(r.error.is_none(), "{:?}", r.error);
    let h = &r.state.history;
    assert_eq!(h.attempts(), 100);
    assert_eq!(h.evaluated, calls);
    assert_eq!(calls, 100);
    assert_eq!(h.best_so_far.len(), 100);
}

#[test]
fn candidates_without_code_count_against_the_budget_but_skip_evaluation() {
    let backend = ScriptedBackend::new(|r| {
        if r.tag.contains("-mutation") && r.tag.ends_with(".001") {
            Ok("no code here".into())
        } else {
            improving(r)
        }
    });
    let (r, calls) = run(EvoConfig::default(), &backend);
    let h = &r.state.history;
    let unextracted = h.individuals.iter().filter(|i| i.code.is_empty()).count();
    assert!(unextracted > 0);
    assert_eq!(h.attempts(), 100);
    assert_eq!(calls, 100 - unextracted);
    assert_eq!(h.evaluated, calls);
}

#[test]
fn best_so_far_is_monotone_and_tracks_the_minimum() {
    let backend = ScriptedBackend::new(improving);
    let (r, _) = run(EvoConfig::default(), &backend);
    let h = &r.state.history;
    let mut min = f64::INFINITY;
    for (p, i) in h.best_so_far.iter().zip(&h.individuals) {
        if let Some(f) = i.fitness {
            min = min.min(f);
        }
        assert_eq!(p.fitness, Some(min));
    }
    let per_gen: Vec<f64> = h
        .generations
        .iter()
        .map(|g| g.best_fitness.unwrap())
        .collect();
    assert!(per_gen.windows(2).all(|w| w[1] < w[0]), "{per_gen:?}");
    assert_eq!(r.best.unwrap().fitness, Some(min));
}

#[test]
fn generation_structure() {
    let backend = ScriptedBackend::new(improving);
    let (r, _) = run(EvoConfig::default(), &backend);
    let h = &r.state.history;
    let count = |p: &str| h.exchanges.iter().filter(|e| e.tag.starts_with(p)).count();
    assert_eq!(count("g000.0-init"), 30);
    assert_eq!(count("g001.1-str"), 10);
    assert_eq!(count("g001.2-crossover"), 10);
    assert_eq!(count("g001.3-ltr"), 1);
    assert_eq!(count("g001.4-mutation"), 5);
    // 30 + 4 * 15 = 90, then 10 crossovers and no mutation budget left
    assert_eq!(count("g005.2-crossover"), 10);
    assert_eq!(count("g005.4-mutation"), 0);
    for g in &h.generations {
        assert!(g.population.len() <= 10);
    }
    for i in h
        .individuals
        .iter()
        .filter(|i| i.origin == Origin::Crossover)
    {
        let [w, b] = i.parent_ids[..] else { panic!() };
        assert!(h.individuals[w].fitness > h.individuals[b].fitness);
    }
    let ltr = h
        .exchanges
        .iter()
        .find(|e| e.tag == "g002.3-ltr.000")
        .unwrap();
    assert!(ltr.messages[1].content.contains("hint for g001.3-ltr"));
    assert!(ltr.messages[1].content.contains("hint for g002.1-str.009"));
    let mutation = h
        .exchanges
        .iter()
        .find(|e| e.tag == "g002.4-mutation.000")
        .unwrap();
    assert!(mutation.messages[1].content.contains("hint for g002.3-ltr"));
}

#[test]
fn init_requests_use_boosted_temperature() {
    let temps = Arc::new(std::sync::Mutex::new(HashMap::new()));
    let t2 = temps.clone();
    let backend = ScriptedBackend::new(move |r| {
        let phase = r
            .tag
            .split('-')
            .nth(1)
            .unwrap()
            .split('.')
            .next()
            .unwrap()
            .to_string();
        t2.lock().unwrap().insert(phase, r.temperature);
        improving(r)
    });
    run(EvoConfig::default(), &backend);
    let t = temps.lock().unwrap();
    assert!((t["init"] - 1.3).abs() < 1e-12);
    for p in ["str", "crossover", "ltr", "mutation"] {
        assert_eq!(t[p], 1.0, "{p}");
    }
}

#[test]
fn replay_is_bit_identical() {
    let rec = RecordBackend::in_memory(ScriptedBackend::new(improving));
    let (a, _) = run(EvoConfig::default(), &rec);
    let replay = ReplayBackend::new(rec.entries());
    let (b, _) = run(EvoConfig::default(), &replay);
    assert_eq!(replay.remaining(), 0);
    assert_eq!(a.state.history, b.state.history);
    assert_eq!(a.state.history.digest(), b.state.history.digest());
    assert_eq!(a.state.population, b.state.population);
}

#[test]
fn replay_of_a_different_run_misses_and_aborts_with_partial_history() {
    let rec = RecordBackend::in_memory(ScriptedBackend::new(improving));
    run(EvoConfig::default(), &rec);
    let replay = ReplayBackend::new(rec.entries());
    let cfg = EvoConfig {
        seed: 99,
        ..EvoConfig::default()
    };
    let (r, _) = run(cfg, &replay);
    assert!(matches!(r.error, Some(EvoError::ReplayMiss { .. })));
    assert!(r.state.history.aborted.is_some());
    assert!(r.state.history.attempts() >= 30);
}

#[test]
fn budget_equal_to_init_size_stops_after_initialization() {
    let backend = ScriptedBackend::new(improving);
    let cfg = EvoConfig {
        max_evaluations: 30,
        ..EvoConfig::default()
    };
    let (r, calls) = run(cfg, &backend);
    assert_eq!(calls, 30);
    assert_eq!(r.state.history.generations.len(), 1);
    assert_eq!(r.state.population.members.len(), 10);
    assert!(r
        .state
        .history
        .exchanges
        .iter()
        .all(|e| e.tag.contains("-init")));
}

#[test]
fn budget_smaller_than_init_size_caps_initialization() {
    let backend = ScriptedBackend::new(improving);
    let cfg = EvoConfig {
        max_evaluations: 7,
        ..EvoConfig::default()
    };
    let (r, calls) = run(cfg, &backend);
    assert_eq!((calls, backend.calls()), (7, 7));
    assert_eq!(r.state.population.members.len(), 7);
}

#[test]
fn mostly_failing_initialization_leaves_a_population_of_one() {
    let backend = ScriptedBackend::new(|r| {
        if r.tag == "g000.0-init.017" {
            Ok(code(5.0))
        } else if r.tag.contains("-init") {
            Ok("```python\ndef heuristics_v2(d):\n    return BROKEN\n```".into())
        } else {
            improving(r)
        }
    });
    let cfg = EvoConfig {
        max_evaluations: 30,
        ..EvoConfig::default()
    };
    let (r, _) = run(cfg, &backend);
    assert_eq!(r.state.population.members.len(), 1);
    assert_eq!(r.state.population.members[0].tag, "g000.0-init.017");
}

#[test]
fn all_invalid_initialization_aborts() {
    let backend = ScriptedBackend::new(|_| Ok("nothing".into()));
    let (r, calls) = run(EvoConfig::default(), &backend);
    assert!(matches!(
        r.error,
        Some(EvoError::NoValidIndividual { attempts: 30 })
    ));
    assert_eq!(calls, 0);
    assert_eq!(r.state.history.attempts(), 30);
    assert!(r.best.is_none());
}

#[test]
fn identical_population_skips_crossover_and_mutates() {
    let backend = ScriptedBackend::new(|r| {
        if r.tag.contains("-init") {
            Ok(code(7.0))
        } else {
            improving(r)
        }
    });
    let cfg = EvoConfig {
        max_evaluations: 35,
        ..EvoConfig::default()
    };
    let (r, _) = run(cfg, &backend);
    let h = &r.state.history;
    assert!(h.generations[1].selection_exhausted);
    assert!(!h
        .exchanges
        .iter()
        .any(|e| e.tag.contains("-crossover") || e.tag.contains("-str")));
    assert_eq!(
        h.exchanges
            .iter()
            .filter(|e| e.tag.contains("-mutation"))
            .count(),
        5
    );
    assert_eq!(r.best.unwrap().fitness, Some(6.5));
}

#[test]
fn disabling_both_operators_ends_after_initialization() {
    let backend = ScriptedBackend::new(improving);
    let cfg = EvoConfig {
        ablation: Ablation {
            disable_crossover: true,
            disable_mutation: true,
            ..Ablation::default()
        },
        ..EvoConfig::default()
    };
    let (r, calls) = run(cfg, &backend);
    assert!(r.error.is_none());
    assert_eq!(calls, 30);
    let g = &r.state.history.generations;
    assert_eq!(g.len(), 2);
    assert_eq!(g[0].population, g[1].population);
}

#[test]
fn disabling_short_term_reflection_drops_the_reflection_block() {
    let backend = ScriptedBackend::new(improving);
    let cfg = EvoConfig {
        ablation: Ablation {
            disable_str: true,
            ..Ablation::default()
        },
        ..EvoConfig::default()
    };
    let (r, _) = run(cfg, &backend);
    let h = &r.state.history;
    assert!(h.reflections.is_empty());
    let xs: Vec<_> = h
        .exchanges
        .iter()
        .filter(|e| e.tag.contains("-crossover"))
        .collect();
    assert!(!xs.is_empty());
    assert!(xs
        .iter()
        .all(|e| !e.messages[1].content.contains("[Reflection]")));
    let m = h
        .exchanges
        .iter()
        .find(|e| e.tag.contains("-mutation"))
        .unwrap();
    assert!(m.messages[1]
        .content
        .contains(&spec().initial_long_term_reflection));
}

#[test]
fn disabling_long_term_reflection_keeps_the_initial_one() {
    let backend = ScriptedBackend::new(improving);
    let cfg = EvoConfig {
        ablation: Ablation {
            disable_ltr: true,
            ..Ablation::default()
        },
        ..EvoConfig::default()
    };
    let (r, _) = run(cfg, &backend);
    let h = &r.state.history;
    assert!(!h.exchanges.iter().any(|e| e.tag.contains("-ltr")));
    assert_eq!(
        r.state.memory.long_term,
        spec().initial_long_term_reflection
    );
}

#[test]
fn invalid_individuals_never_reach_a_prompt() {
    let backend = ScriptedBackend::new(|r| {
        let h = tag_hash(&r.tag);
        if (r.tag.contains("-crossover") || r.tag.contains("-init")) && h % 3 == 0 {
            Ok(format!(
                "```python\ndef heuristics_v2(d):\n    return BROKEN_{h}\n```"
            ))
        } else {
            improving(r)
        }
    });
    let (r, _) = run(EvoConfig::default(), &backend);
    let h = &r.state.history;
    assert!(h
        .individuals
        .iter()
        .any(|i| i.exec_status == ExecStatus::ExecError));
    for e in &h.exchanges {
        assert!(
            !e.messages.iter().any(|m| m.content.contains("BROKEN")),
            "{}",
            e.tag
        );
    }
}

#[test]
fn backend_failure_aborts_with_partial_history() {
    let backend = ScriptedBackend::new(|r| {
        if r.tag.starts_with("g002.2") {
            Err(EvoError::BackendUnreachable {
                attempts: 4,
                message: "down".into(),
            })
        } else {
            improving(r)
        }
    });
    let (r, _) = run(EvoConfig::default(), &backend);
    assert!(matches!(r.error, Some(EvoError::BackendUnreachable { .. })));
    let h = &r.state.history;
    assert!(h.aborted.as_deref().unwrap().contains("down"));
    assert_eq!(h.attempts(), 45);
    assert!(r.best.is_some());
}

#[test]
fn config_errors_name_their_fields() {
    let cfg = EvoConfig {
        pop_size: 0,
        mutation_rate: -1.0,
        ..EvoConfig::default()
    };
    let msg = cfg.validate().unwrap_err().to_string();
    assert!(msg.contains("evolution.pop_size") && msg.contains("evolution.mutation_rate"));
}

#[test]
fn selection_law() {
    let members = [ind(0, 1.0), ind(1, 2.0), ind(2, 3.0)];
    let refs: Vec<&Individual> = members.iter().collect();
    let mut r = rng::seeded(7);
    let draws = 10_000;
    let pairs = select_parents(&refs, draws, &mut r).unwrap();
    let mut freq: HashMap<(usize, usize), usize> = HashMap::new();
    for (w, b) in &pairs {
        assert!(w.fitness.unwrap() > b.fitness.unwrap());
        *freq.entry((w.id, b.id)).or_default() += 1;
    }
    assert_eq!(freq.len(), 3);
    for (&k, &n) in &freq {
        let p = n as f64 / draws as f64;
        assert!((p - 1.0 / 3.0).abs() <= 0.02, "{k:?} {p}");
    }
}

#[test]
fn selection_edge_cases() {
    let mut r = rng::seeded(0);
    let same = [ind(0, 1.0), ind(1, 1.0)];
    assert!(select_parents(&same.iter().collect::<Vec<_>>(), 3, &mut r).is_err());
    let two = [ind(0, 1.0), ind(1, 2.0)];
    let p = select_parents(&two.iter().collect::<Vec<_>>(), 4, &mut r).unwrap();
    assert!(p.iter().all(|(w, b)| w.id == 1 && b.id == 0));
    let mixed = [ind(0, 1.0), ind(1, 1.0), ind(2, 4.0)];
    let p = select_parents(&mixed.iter().collect::<Vec<_>>(), 1000, &mut r).unwrap();
    assert!(p.iter().all(|(w, b)| w.fitness != b.fitness && w.id == 2));
}

#[test]
fn trimming_keeps_the_older_of_equal_members() {
    let mut pop = hevo_evo::engine::Population {
        members: vec![ind(5, 2.0), ind(3, 1.0), ind(4, 1.0), ind(1, 2.0)],
    };
    pop.members.push(Individual {
        fitness: None,
        exec_status: ExecStatus::Timeout,
        ..ind(0, 0.0)
    });
    pop.trim(3);
    let ids: Vec<usize> = pop.members.iter().map(|m| m.id).collect();
    assert_eq!(ids, [3, 4, 1]);
    assert_eq!(pop.elite_id(), Some(3));
}
