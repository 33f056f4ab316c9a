//! Acceptance checks. Prints one PASS/FAIL line per criterion and always
//! exits 0; a FAIL is a finding, not a test error.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use hevo_cli::bench::{
    gls_references, gls_rows, run_suite, BenchOptions, Distances, HeuristicChoice, Starts, Suite,
};
use hevo_cli::config::{BackendKind, RunConfig, RuntimeKind};
use hevo_core::aco::{run_aco, AcoParams, HeuristicMatrix};
use hevo_core::landscape::{autocorrelation, correlation_length};
use hevo_core::problem::reference::ReferenceParams;
use hevo_core::problem::{brute_force_optimum, generate_instance};
use hevo_core::{rng, Instance, Matrix, ProblemKind};
use hevo_evo::engine::{select_parents, Engine, EvoConfig, Individual, Origin};
use hevo_evo::gateway::{ChatRequest, RecordBackend, ReplayBackend, ScriptedBackend};
use hevo_evo::harness::{
    Arg, BuiltinRuntime, EvalProtocol, Evaluator, ExecFailure, ExecStatus, FitnessFn,
    HeuristicRuntime, RawArray, SolverPreset,
};
use hevo_evo::{task, Mode};
use rand::Rng;

struct Check {
    pass: bool,
    detail: String,
}

fn data_dir() -> PathBuf {
    std::env::var_os("TSPLIB_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/tsplib"))
}

fn tsplib_opts() -> BenchOptions {
    BenchOptions {
        data_dir: data_dir(),
        allow_missing: true,
        ..BenchOptions::default()
    }
}

fn builtin() -> Arc<dyn HeuristicRuntime> {
    Arc::new(BuiltinRuntime::new())
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

fn tsplib_check(
    suite: Suite,
    heuristic: HeuristicChoice,
    avg_ok: impl Fn(f64) -> bool,
    eil_ok: impl Fn(f64) -> bool,
    targets: &str,
    limit_s: f64,
) -> Check {
    let t = Instant::now();
    let opts = BenchOptions {
        heuristic,
        ..tsplib_opts()
    };
    let r = match run_suite(suite, &opts, builtin()) {
        Ok(r) => r,
        Err(e) => {
            return Check {
                pass: false,
                detail: format!("{e:#}"),
            }
        }
    };
    let elapsed = secs(t);
    let avg = r.mean_gap_percent.unwrap_or(f64::NAN);
    let eil = r
        .row("eil51")
        .and_then(|row| row.gap_percent)
        .unwrap_or(f64::NAN);
    let present = 21 - r.missing.len();
    let pass = r.missing.is_empty() && avg_ok(avg) && eil_ok(eil) && elapsed < limit_s;
    let mut detail = format!(
        "{present}/21 TSPLIB instances present; average gap {avg:.2}% over them, eil51 {eil:.2}% ({targets}); {elapsed:.1}s"
    );
    if !r.missing.is_empty() {
        detail.push_str(&format!("; missing: {}", r.missing.join(" ")));
    }
    Check { pass, detail }
}

fn alternative_conventions() -> String {
    let opts = BenchOptions {
        distances: Distances::Euclidean,
        starts: Starts::All,
        ..tsplib_opts()
    };
    let eil = |suite, heuristic| {
        run_suite(suite, &BenchOptions { heuristic, ..opts.clone() }, builtin())
            .ok()
            .and_then(|r| r.row("eil51").and_then(|x| x.gap_percent))
            .map_or("n/a".to_string(), |g| format!("{g:.2}%"))
    };
    format!(
        "exact distances, all start nodes: eil51 nearest neighbour {}, constructive fixture {}",
        eil(Suite::NnBaseline, HeuristicChoice::Seed),
        eil(Suite::TsplibConstructive, HeuristicChoice::Fixture)
    )
}

fn gls_check() -> Check {
    let t = Instant::now();
    let spec = task("tsp_gls", Mode::WhiteBox).unwrap();
    let mut protocol = EvalProtocol::test(spec, 100);
    protocol.timeout_s = 3600.0;
    let ev = Evaluator::new(spec, protocol, builtin()).unwrap();
    let refs = gls_references(&ev.instances().instances, ReferenceParams::default().kicks);
    let mean = |rows: &[hevo_cli::bench::BenchRow]| {
        rows.iter().filter_map(|r| r.gap_percent).sum::<f64>() / rows.len() as f64
    };
    let seed = gls_rows(&ev, &spec.seed_function, &refs);
    let fixture = gls_rows(&ev, spec.fixture().unwrap(), &refs);
    let (seed, fixture) = match (seed, fixture) {
        (Ok(s), Ok(f)) => (s, f),
        (s, f) => {
            return Check {
                pass: false,
                detail: format!("evaluation failed: {:?} {:?}", s.err(), f.err()),
            }
        }
    };
    let (gs, gf) = (mean(&seed), mean(&fixture));
    let worse = seed
        .iter()
        .zip(&fixture)
        .filter(|(s, f)| f.objective > s.objective + 1e-9)
        .count();
    let elapsed = secs(t);
    Check {
        pass: gs <= 0.5 && gf <= gs && elapsed < 1800.0,
        detail: format!(
            "64 TSP100 instances: seed mean gap {gs:.4}% (target <= 0.5%), fixture {gf:.4}% (target <= seed; worse than seed on {worse}); {elapsed:.0}s"
        ),
    }
}

fn seed_eta(inst: &Instance) -> HeuristicMatrix {
    let recip = |d: &Matrix| d.map(|x| if x > 0.0 { 1.0 / x } else { 0.0 });
    let m = match inst {
        Instance::Tsp(t) => recip(&t.dist),
        Instance::Cvrp(c) => recip(&c.dist),
        Instance::Op(o) => Matrix::from_fn(o.len(), o.len(), |i, j| {
            if i == j {
                0.0
            } else {
                o.prize[j] / o.dist[(i, j)]
            }
        }),
        Instance::Mkp(m) => Matrix::from_fn(m.items(), 1, |i, _| {
            m.prize[i] / m.weight.row(i).iter().sum::<f64>()
        }),
        Instance::Bpp(b) => {
            let max = *b.sizes.iter().max().unwrap() as f64;
            Matrix::from_fn(b.items(), b.items(), |_, j| b.sizes[j] as f64 / max)
        }
    };
    HeuristicMatrix::new(inst, m).unwrap()
}

/// Best MKP value by dynamic programming over the capacity vector, keyed by
/// the remaining capacities reached so far.
fn mkp_dp(inst: &Instance) -> f64 {
    let Instance::Mkp(m) = inst else {
        unreachable!()
    };
    let mut states: Vec<(Vec<f64>, f64)> = vec![(m.constraint.clone(), 0.0)];
    for i in 0..m.items() {
        let mut next = states.clone();
        for (cap, val) in &states {
            let left: Vec<f64> = cap
                .iter()
                .enumerate()
                .map(|(k, c)| c - m.weight[(i, k)])
                .collect();
            if left.iter().all(|&c| c >= 0.0) {
                next.push((left, val + m.prize[i]));
            }
        }
        // drop dominated states
        next.sort_by(|a, b| b.1.total_cmp(&a.1));
        let mut kept: Vec<(Vec<f64>, f64)> = Vec::new();
        for s in next {
            let dominated = kept
                .iter()
                .any(|k| k.0.iter().zip(&s.0).all(|(a, b)| a >= b));
            if !dominated {
                kept.push(s);
            }
        }
        states = kept;
    }
    states.iter().map(|s| s.1).fold(0.0, f64::max)
}

fn aco_hits(kind: ProblemKind, n: usize) -> usize {
    (0..100u64)
        .filter(|&seed| {
            let inst = generate_instance(kind, n, 77_000 + seed).unwrap();
            let opt = if kind == ProblemKind::Mkp {
                mkp_dp(&inst)
            } else {
                brute_force_optimum(&inst).unwrap().objective
            };
            let p = AcoParams {
                n_iterations: 200,
                ..AcoParams::preset(kind).with_seed(seed)
            };
            let got = run_aco(&inst, &seed_eta(&inst), &p).unwrap().best.objective;
            (got - opt).abs() <= 1e-9 * opt.abs().max(1.0)
        })
        .count()
}

fn aco_check() -> Check {
    let t = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for (kind, n) in [
        (ProblemKind::Tsp, 8),
        (ProblemKind::Cvrp, 6),
        (ProblemKind::Op, 8),
        (ProblemKind::Mkp, 15),
        (ProblemKind::Bpp, 8),
    ] {
        let h = aco_hits(kind, n);
        pass &= h >= 90;
        parts.push(format!("{kind}{n} {h}/100"));
    }
    let elapsed = secs(t);
    Check {
        pass: pass && elapsed < 300.0,
        detail: format!("optimum found: {} (target >= 90 each); {elapsed:.1}s", parts.join(", ")),
    }
}

/// Host stand-in for the sandbox: understands `distance_matrix ** -k` and
/// `raise`, nothing else.
struct PowerRuntime;

impl HeuristicRuntime for PowerRuntime {
    fn matrix(&self, source: &str, _: &str, args: &[Arg], _: Duration) -> Result<RawArray, ExecFailure> {
        if source.contains("raise") {
            return Err(ExecFailure::exec("ValueError: boom"));
        }
        let k: f64 = source
            .split("** -")
            .nth(1)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| ExecFailure::exec("unsupported source"))?;
        let d = args[0].as_array().ok_or_else(|| ExecFailure::exec("no matrix"))?;
        Ok(RawArray {
            shape: d.shape.clone(),
            data: d.data.iter().map(|&x| if x > 0.0 { x.powf(-k) } else { 0.0 }).collect(),
        })
    }

    fn rollout(&self, _: &str, _: &str, _: &Matrix, _: usize, _: Duration) -> Result<Vec<usize>, ExecFailure> {
        Err(ExecFailure::exec("unsupported"))
    }
}

fn fnv(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf29ce484222325, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3))
}

fn scripted(req: &ChatRequest) -> hevo_evo::Result<String> {
    if req.messages[0].content.contains("give hints") {
        return Ok(format!("hint {}", req.tag));
    }
    let h = fnv(&req.tag);
    Ok(match h % 13 {
        0 => "I cannot help with that.".into(),
        1 => "```python\ndef heuristics_v2(distance_matrix):\n    raise ValueError()\n```".into(),
        _ => format!(
            "```python\ndef heuristics_v2(distance_matrix):\n    return distance_matrix ** -{}\n```",
            0.5 + (h % 17) as f64 * 0.25
        ),
    })
}

fn engine_evaluator() -> Evaluator {
    let spec = task("tsp_aco", Mode::WhiteBox).unwrap();
    let mut p = EvalProtocol::evolution(spec);
    p.size = 20;
    p.count = 3;
    if let SolverPreset::Aco(a) = &mut p.solver {
        a.n_iterations = 20;
    }
    Evaluator::new(spec, p, Arc::new(PowerRuntime)).unwrap()
}

fn engine_check() -> Check {
    let spec = task("tsp_aco", Mode::WhiteBox).unwrap();
    let cfg = EvoConfig::default();
    let rec = RecordBackend::in_memory(ScriptedBackend::new(scripted));
    let ev = engine_evaluator();
    let report = Engine::new(spec, cfg.clone(), &rec, &ev).unwrap().run(&());
    let h = &report.state.history;
    let extracted = h
        .individuals
        .iter()
        .filter(|i| !i.code.is_empty())
        .count();
    let best: Vec<f64> = h.best_so_far.iter().filter_map(|p| p.fitness).collect();
    let monotone = best.windows(2).all(|w| w[1] <= w[0])
        && h.generations
            .windows(2)
            .all(|w| w[1].best_fitness <= w[0].best_fitness);

    let replay = ReplayBackend::new(rec.entries());
    let ev2 = engine_evaluator();
    let again = Engine::new(spec, cfg.clone(), &replay, &ev2).unwrap().run(&());
    let identical = again.state.history.digest() == h.digest() && replay.remaining() == 0;

    let pass = report.error.is_none()
        && h.attempts() == cfg.max_evaluations
        && ev.calls() == extracted
        && h.evaluated == extracted
        && extracted < h.attempts()
        && monotone
        && identical;
    Check {
        pass,
        detail: format!(
            "{} candidates (budget {}), {} extracted, {} evaluator calls; best-so-far monotone: {monotone}; replay identical: {identical}",
            h.attempts(),
            cfg.max_evaluations,
            extracted,
            ev.calls()
        ),
    }
}

fn member(id: usize, f: f64) -> Individual {
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

fn selection_check() -> Check {
    let draws = 10_000;
    let mut r = rng::seeded(11);
    let three = [member(0, 1.0), member(1, 2.0), member(2, 3.0)];
    let refs: Vec<&Individual> = three.iter().collect();
    let pairs = select_parents(&refs, draws, &mut r).unwrap();
    let mut counts = [0usize; 3];
    for (w, b) in &pairs {
        let k = match (w.id, b.id) {
            (1, 0) => 0,
            (2, 0) => 1,
            (2, 1) => 2,
            _ => unreachable!("pair is not (worse, better)"),
        };
        counts[k] += 1;
    }
    let dev = counts
        .iter()
        .map(|&c| (c as f64 / draws as f64 - 1.0 / 3.0).abs())
        .fold(0.0, f64::max);
    let dup = [1.0, 1.0, 2.0, 2.0, 3.0, 3.0]
        .iter()
        .enumerate()
        .map(|(i, &f)| member(i, f))
        .collect::<Vec<_>>();
    let refs: Vec<&Individual> = dup.iter().collect();
    let equal = select_parents(&refs, draws, &mut r)
        .unwrap()
        .iter()
        .filter(|(w, b)| w.fitness == b.fitness)
        .count();
    Check {
        pass: dev <= 0.02 && equal == 0,
        detail: format!(
            "pair frequencies {:?} over {draws} draws, max deviation {dev:.4} (<= 0.02); equal-fitness pairs {equal}",
            counts
        ),
    }
}

fn landscape_check() -> Check {
    let r = autocorrelation(&[1.0, 2.0, 3.0, 4.0], 1).unwrap();
    let l = correlation_length((-1.0f64).exp()).unwrap();
    let mut g = rng::seeded(5);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = g.gen_range(5..60);
        let x: Vec<f64> = (0..n).map(|_| g.gen_range(-10.0..10.0)).collect();
        let a = g.gen_range(0.1..10.0) * if g.gen_bool(0.5) { 1.0 } else { -1.0 };
        let b = g.gen_range(-100.0..100.0);
        let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let d = (autocorrelation(&x, 1).unwrap() - autocorrelation(&y, 1).unwrap()).abs();
        worst = worst.max(d);
    }
    Check {
        pass: r == 0.25 && l == 1.0 && worst <= 1e-9,
        detail: format!(
            "autocorrelation([1,2,3,4], 1) = {r}; correlation_length(e^-1) = {l}; affine invariance max error {worst:.2e} over 1000 series"
        ),
    }
}

fn live_smoke() -> Option<Check> {
    let key_env = hevo_evo::gateway::LiveConfig::default().api_key_env;
    std::env::var(&key_env).ok().filter(|k| !k.is_empty())?;
    let runner = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../evo/tests/fixtures/stub_runner.py");
    let mut cfg = RunConfig::default();
    cfg.backend.kind = BackendKind::Live;
    cfg.runtime.kind = RuntimeKind::Sandbox;
    cfg.runtime.sandbox.program = "python3".into();
    cfg.runtime.sandbox.args = vec![runner.display().to_string()];
    let tmp = tempfile::tempdir().ok()?;
    let out = match hevo_cli::evolve(&cfg, &tmp.path().join("run")) {
        Ok(o) => o,
        Err(e) => {
            return Some(Check {
                pass: false,
                detail: format!("{e:#}"),
            })
        }
    };
    let spec = cfg.task_spec().ok()?;
    let ev = Evaluator::new(spec, cfg.protocol().ok()?, cfg.runtime.build()).ok()?;
    let seed_f = ev.evaluate(&spec.seed_function).fitness;
    let best = out.status.best_fitness;
    Some(Check {
        pass: matches!((best, seed_f), (Some(b), Some(s)) if b <= s),
        detail: format!("best F {best:?} vs seed F {seed_f:?} on the validation set"),
    })
}

fn report(n: &str, name: &str, c: Check) {
    println!(
        "{} criterion {n} {name}: {}",
        if c.pass { "PASS" } else { "FAIL" },
        c.detail
    );
}

fn main() {
    // libtest flags such as --list or --exact are accepted and ignored
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    report(
        "1",
        "nn_baseline",
        tsplib_check(
            Suite::NnBaseline,
            HeuristicChoice::Seed,
            |a| (a - 25.4).abs() <= 3.0,
            |e| (e - 32.0).abs() <= 3.0,
            "targets 25.4 ± 3 and 32.0 ± 3",
            10.0,
        ),
    );
    report(
        "2",
        "constructive_fixture",
        tsplib_check(
            Suite::TsplibConstructive,
            HeuristicChoice::Fixture,
            |a| a <= 16.0,
            |e| e <= 8.0,
            "targets <= 16.0 and <= 8.0",
            900.0,
        ),
    );
    println!("  info: {}", alternative_conventions());
    report("3", "gls_oracle", gls_check());
    report("4", "aco_exactness", aco_check());
    report("5", "engine_budget_determinism", engine_check());
    report("6", "selection_law", selection_check());
    report("7", "landscape_math", landscape_check());
    match live_smoke() {
        Some(c) => report("live", "smoke_run", c),
        None => println!("SKIP live smoke run: HEVO_API_KEY is not set"),
    }
}
