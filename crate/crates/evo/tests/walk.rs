use std::sync::atomic::{AtomicUsize, Ordering};

use hevo_evo::gateway::{ChatRequest, RecordBackend, ReplayBackend, ScriptedBackend};
use hevo_evo::harness::{EvalResult, ExecStatus, FitnessFn};
use hevo_evo::walk::{random_walk, random_walks, summarize, trace_correlation_length, WalkConfig};
use hevo_evo::{task, Mode, TaskSpec};
use regex::Regex;

fn spec() -> &'static TaskSpec {
    task("tsp_aco", Mode::WhiteBox).unwrap()
}

fn code(k: f64) -> String {
    format!("```python\ndef heuristics_v2(distance_matrix):\n    return distance_matrix * {k}\n```")
}

fn factor(text: &str) -> Vec<f64> {
    let re = Regex::new(r"return distance_matrix \* (-?[0-9.]+)").unwrap();
    re.captures_iter(text)
        .map(|c| c[1].parse().unwrap())
        .collect()
}

/// The seed evaluates to 1000; coded factors evaluate to themselves.
struct Fit;

impl FitnessFn for Fit {
    fn evaluate(&self, code: &str) -> EvalResult {
        let f = if code.contains("1 / distance_matrix") {
            Some(1000.0)
        } else {
            factor(code).first().copied().filter(|k| *k >= 0.0)
        };
        EvalResult {
            fitness: f,
            status: if f.is_some() {
                ExecStatus::Ok
            } else {
                ExecStatus::ExecError
            },
            objectives: f.into_iter().collect(),
            wall_time_s: 0.0,
            message: None,
        }
    }
}

fn hash(s: &str) -> u64 {
    s.bytes().fold(1469598103934665603u64, |h, b| {
        (h ^ b as u64).wrapping_mul(1099511628211)
    })
}

fn noisy(req: &ChatRequest) -> hevo_evo::Result<String> {
    Ok(if req.tag.ends_with("-str") {
        "hint".into()
    } else {
        code((hash(&req.tag) % 97) as f64 + 1.0)
    })
}

#[test]
fn steps_produce_a_finite_series() {
    let b = ScriptedBackend::new(noisy);
    let t = random_walk(spec(), &WalkConfig::default(), &b, &Fit);
    assert!(t.aborted.is_none(), "{:?}", t.aborted);
    assert_eq!(t.f.len(), 40);
    assert_eq!(t.codes.len(), 40);
    assert!(t.f.iter().all(|f| f.is_finite()));
    // init + 40 * (str + crossover)
    assert_eq!(b.calls(), 81);
    assert!(trace_correlation_length(&t).is_ok());
}

#[test]
fn without_reflection_no_hint_is_requested() {
    let seen = AtomicUsize::new(0);
    let b = ScriptedBackend::new(move |r| {
        assert!(!r.user_text().contains("[Reflection]"));
        assert!(!r.tag.ends_with("-str"));
        seen.fetch_add(1, Ordering::SeqCst);
        noisy(r)
    });
    let cfg = WalkConfig {
        with_reflection: false,
        steps: 10,
        ..WalkConfig::default()
    };
    let t = random_walk(spec(), &cfg, &b, &Fit);
    assert_eq!(t.f.len(), 10);
    assert_eq!(b.calls(), 11);
}

#[test]
fn returning_the_better_parent_gives_a_constant_series() {
    let b = ScriptedBackend::new(|r| {
        if r.tag.ends_with("-init") {
            return Ok(code(5.0));
        }
        let ks = factor(r.user_text());
        Ok(code(ks.into_iter().fold(f64::INFINITY, f64::min)))
    });
    let cfg = WalkConfig {
        with_reflection: false,
        ..WalkConfig::default()
    };
    let t = random_walk(spec(), &cfg, &b, &Fit);
    assert!(t.f.iter().all(|&f| f == 5.0));
    assert!(trace_correlation_length(&t).is_err());
}

#[test]
fn invalid_offspring_are_resampled_without_advancing() {
    let b = ScriptedBackend::new(|r| {
        if r.tag.contains(".s003.0-") || r.tag.contains(".s003.1-") {
            Ok("no code".into())
        } else {
            noisy(r)
        }
    });
    let cfg = WalkConfig {
        steps: 5,
        ..WalkConfig::default()
    };
    let t = random_walk(spec(), &cfg, &b, &Fit);
    assert_eq!(t.f.len(), 5);
    assert_eq!(t.skips, 2);
}

#[test]
fn resample_cap_aborts_with_a_partial_trace() {
    let b = ScriptedBackend::new(|r| {
        if r.tag.contains(".s004.") && r.tag.ends_with("-crossover") {
            Ok(code(-1.0))
        } else {
            noisy(r)
        }
    });
    let cfg = WalkConfig {
        steps: 8,
        ..WalkConfig::default()
    };
    let t = random_walk(spec(), &cfg, &b, &Fit);
    assert_eq!(t.f.len(), 3);
    assert_eq!(t.skips, 11);
    assert!(t.aborted.as_deref().unwrap().contains("step 4"));
    assert!(summarize("x", &[t]).is_err());
}

#[test]
fn walks_replay_identically() {
    let rec = RecordBackend::in_memory(ScriptedBackend::new(noisy));
    let cfgs: Vec<WalkConfig> = (0..3)
        .map(|run| WalkConfig {
            run,
            ..WalkConfig::default()
        })
        .collect();
    let a = random_walks(spec(), &cfgs, &rec, &Fit);
    let replay = ReplayBackend::new(rec.entries());
    let b = random_walks(spec(), &cfgs, &replay, &Fit);
    assert_eq!(a, b);
    assert_eq!(replay.remaining(), 0);
    let s = summarize("with reflection", &a).unwrap();
    assert_eq!(s.runs, 3);
    assert!(s.correlation_length_mean > 0.0);
}

#[test]
fn short_walks_are_rejected() {
    let b = ScriptedBackend::new(noisy);
    let cfg = WalkConfig {
        steps: 1,
        ..WalkConfig::default()
    };
    let t = random_walk(spec(), &cfg, &b, &Fit);
    assert!(t.aborted.unwrap().contains("landscape.steps"));
    assert_eq!(b.calls(), 0);
}
