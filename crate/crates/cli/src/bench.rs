//! Benchmark suites.
//!
//! Tables are written as CSV with the columns
//! `instance,nodes,objective,reference,gap_percent` (objective and reference
//! are means over start nodes for TSPLIB suites; `reference` is the
//! published optimum or a reference tour, empty where none applies).
//! `aco_synthetic` also writes `curves.csv` with
//! `instance,evaluations,best_objective`.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context};
use hevo_core::aco::{run_aco, ConvergenceTrace, HeuristicMatrix};
use hevo_core::constructive::{benchmark_starts, revalidate_rollout};
use hevo_core::par;
use hevo_core::problem::reference::{reference_tour, ReferenceParams};
use hevo_core::problem::tsplib::{gap_percent, load_tsplib_file, KNOWN_OPTIMA};
use hevo_core::{Matrix, TspInstance};
use hevo_evo::catalog::NEAREST_NEIGHBOUR_SELECTOR;
use hevo_evo::harness::{
    EvalProtocol, Evaluator, FitnessFn, HeuristicRuntime, MatrixUse, SolverPreset,
};
use hevo_evo::{task, Mode, TaskSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Suite {
    TsplibConstructive,
    GlsSynthetic,
    AcoSynthetic,
    NnBaseline,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::TsplibConstructive => "tsplib_constructive",
            Suite::GlsSynthetic => "gls_synthetic",
            Suite::AcoSynthetic => "aco_synthetic",
            Suite::NnBaseline => "nn_baseline",
        }
    }
}

/// Distances a constructive heuristic sees. Tour lengths are always
/// measured with TSPLIB rounding so they compare with published optima.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Distances {
    #[default]
    Nint,
    Euclidean,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Starts {
    /// 0, n/3 and 2n/3.
    #[default]
    Three,
    All,
}

impl Starts {
    pub fn nodes(self, n: usize) -> Vec<usize> {
        match self {
            Starts::Three => {
                let mut s = benchmark_starts(n).to_vec();
                s.dedup();
                s
            }
            Starts::All => (0..n).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HeuristicChoice {
    Seed,
    Fixture,
    File(PathBuf),
}

impl std::str::FromStr for HeuristicChoice {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "seed" => HeuristicChoice::Seed,
            "fixture" => HeuristicChoice::Fixture,
            path => HeuristicChoice::File(path.into()),
        })
    }
}

impl HeuristicChoice {
    pub fn resolve(&self, spec: &TaskSpec) -> anyhow::Result<String> {
        match self {
            HeuristicChoice::Seed => Ok(spec.seed_function.clone()),
            HeuristicChoice::Fixture => spec
                .fixture()
                .map(str::to_string)
                .with_context(|| format!("task {} has no reference heuristic", spec.key())),
            HeuristicChoice::File(p) => std::fs::read_to_string(p)
                .with_context(|| format!("cannot read heuristic {}", p.display())),
        }
    }

    pub fn label(&self) -> String {
        match self {
            HeuristicChoice::Seed => "seed".into(),
            HeuristicChoice::Fixture => "fixture".into(),
            HeuristicChoice::File(p) => p.display().to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub data_dir: PathBuf,
    pub distances: Distances,
    pub starts: Starts,
    /// Run TSPLIB suites on whatever instances are present.
    pub allow_missing: bool,
    pub heuristic: HeuristicChoice,
    /// Task for `aco_synthetic`.
    pub task: String,
    pub mode: Mode,
    pub size: Option<usize>,
    pub count: Option<usize>,
    pub reference_kicks: usize,
    pub timeout_s: f64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            data_dir: default_data_dir(),
            distances: Distances::default(),
            starts: Starts::default(),
            allow_missing: false,
            heuristic: HeuristicChoice::Seed,
            task: "tsp_aco".into(),
            mode: Mode::WhiteBox,
            size: None,
            count: None,
            reference_kicks: ReferenceParams::default().kicks,
            timeout_s: 3600.0,
        }
    }
}

/// `$TSPLIB_DIR`, else `data/tsplib`.
pub fn default_data_dir() -> PathBuf {
    std::env::var_os("TSPLIB_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data/tsplib"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub instance: String,
    pub nodes: usize,
    pub objective: f64,
    pub reference: Option<f64>,
    pub gap_percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub instance: String,
    #[serde(flatten)]
    pub trace: ConvergenceTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub suite: Suite,
    pub heuristic: String,
    pub rows: Vec<BenchRow>,
    pub mean_objective: f64,
    pub mean_gap_percent: Option<f64>,
    /// TSPLIB instances that were skipped because their files are absent.
    pub missing: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub curves: Vec<Curve>,
}

impl BenchReport {
    fn new(suite: Suite, heuristic: String, rows: Vec<BenchRow>, missing: Vec<String>) -> Self {
        let mean = |v: Vec<f64>| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        BenchReport {
            suite,
            heuristic,
            mean_objective: mean(rows.iter().map(|r| r.objective).collect()).unwrap_or(f64::NAN),
            mean_gap_percent: mean(rows.iter().filter_map(|r| r.gap_percent).collect()),
            rows,
            missing,
            curves: Vec::new(),
        }
    }

    pub fn row(&self, instance: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.instance == instance)
    }

    pub fn table_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["instance", "nodes", "objective", "reference", "gap_percent"])
            .expect("in-memory write");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.instance.clone(),
                r.nodes.to_string(),
                r.objective.to_string(),
                opt(r.reference),
                opt(r.gap_percent),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    pub fn curves_csv(&self) -> String {
        let mut out = String::from("instance,evaluations,best_objective\n");
        for c in &self.curves {
            for (e, b) in c.trace.evaluations.iter().zip(&c.trace.best_so_far) {
                out.push_str(&format!("{},{e},{b}\n", c.instance));
            }
        }
        out
    }

    /// Writes `<suite>.csv`, `<suite>.json` and, when present, `curves.csv`.
    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir)?;
        let name = self.suite.name();
        std::fs::write(dir.join(format!("{name}.csv")), self.table_csv())?;
        std::fs::write(
            dir.join(format!("{name}.json")),
            serde_json::to_string_pretty(self)? + "\n",
        )?;
        if !self.curves.is_empty() {
            std::fs::write(dir.join("curves.csv"), self.curves_csv())?;
        }
        Ok(())
    }
}

pub struct TsplibInstance {
    pub name: String,
    pub tsp: TspInstance,
    pub optimum: f64,
}

/// Loads the benchmark instances found in `dir`; returns them with the names
/// of the missing ones.
pub fn load_tsplib_set(dir: &Path) -> anyhow::Result<(Vec<TsplibInstance>, Vec<String>)> {
    let mut found = Vec::new();
    let mut missing = Vec::new();
    for (name, optimum) in KNOWN_OPTIMA {
        let path = dir.join(format!("{name}.tsp"));
        if !path.exists() {
            missing.push(name.to_string());
            continue;
        }
        let tsp = load_tsplib_file(&path)?;
        found.push(TsplibInstance {
            name: name.to_string(),
            tsp,
            optimum,
        });
    }
    Ok((found, missing))
}

/// Mean tour length of a constructive heuristic over the chosen start nodes.
pub fn constructive_objective(
    runtime: &dyn HeuristicRuntime,
    source: &str,
    entry: &str,
    tsp: &TspInstance,
    distances: Distances,
    starts: Starts,
    timeout: Duration,
) -> anyhow::Result<f64> {
    let shown = match distances {
        Distances::Nint => tsp.dist.clone(),
        Distances::Euclidean => Matrix::euclidean(&tsp.coords),
    };
    let starts = starts.nodes(tsp.len());
    let objs = par::map_slice(&starts, |&s| -> anyhow::Result<f64> {
        let tour = runtime
            .rollout(source, entry, &shown, s, timeout)
            .map_err(|f| anyhow!("start {s}: {}", f.message))?;
        Ok(revalidate_rollout(tsp, s, tour)?.objective)
    });
    let objs = objs.into_iter().collect::<anyhow::Result<Vec<_>>>()?;
    Ok(objs.iter().sum::<f64>() / objs.len() as f64)
}

fn tsplib_suite(
    suite: Suite,
    opts: &BenchOptions,
    runtime: &dyn HeuristicRuntime,
    source: &str,
    entry: &str,
    label: String,
) -> anyhow::Result<BenchReport> {
    let (instances, missing) = load_tsplib_set(&opts.data_dir)?;
    if !missing.is_empty() && !opts.allow_missing {
        bail!(
            "missing TSPLIB files in {}: {}",
            opts.data_dir.display(),
            missing
                .iter()
                .map(|n| format!("{n}.tsp"))
                .collect::<Vec<_>>()
                .join(", ")
        );
    }
    if instances.is_empty() {
        bail!("no TSPLIB instances in {}", opts.data_dir.display());
    }
    let timeout = Duration::from_secs_f64(opts.timeout_s);
    let mut rows = Vec::new();
    for inst in &instances {
        let obj = constructive_objective(
            runtime,
            source,
            entry,
            &inst.tsp,
            opts.distances,
            opts.starts,
            timeout,
        )
        .with_context(|| inst.name.clone())?;
        rows.push(BenchRow {
            instance: inst.name.clone(),
            nodes: inst.tsp.len(),
            objective: obj,
            reference: Some(inst.optimum),
            gap_percent: Some(gap_percent(obj, inst.optimum)),
        });
    }
    Ok(BenchReport::new(suite, label, rows, missing))
}

fn synthetic_protocol(spec: &TaskSpec, opts: &BenchOptions) -> EvalProtocol {
    let size = opts
        .size
        .unwrap_or_else(|| hevo_evo::harness::training_size(spec));
    let mut p = EvalProtocol::test(spec, size);
    if let Some(c) = opts.count {
        p.count = c;
    }
    p.timeout_s = opts.timeout_s;
    p
}

/// Reference tour lengths for GLS instances, one independent run each.
pub fn gls_references(instances: &[hevo_core::Instance], kicks: usize) -> Vec<f64> {
    let idx: Vec<usize> = (0..instances.len()).collect();
    par::map_slice(&idx, |&k| {
        let tsp = instances[k].as_tsp().expect("tsp instance");
        let params = ReferenceParams {
            kicks,
            seed: k as u64,
            ..ReferenceParams::default()
        };
        reference_tour(tsp, &params).objective
    })
}

/// GLS objectives of `source` on the protocol's instances, with gaps to
/// `references`.
pub fn gls_rows(
    evaluator: &Evaluator,
    source: &str,
    references: &[f64],
) -> anyhow::Result<Vec<BenchRow>> {
    let res = evaluator.evaluate(source);
    if !res.is_valid() {
        bail!(
            "heuristic is invalid ({:?}): {}",
            res.status,
            res.message.unwrap_or_default()
        );
    }
    let set = evaluator.instances();
    Ok(res
        .objectives
        .iter()
        .zip(references)
        .enumerate()
        .map(|(k, (&obj, &reference))| BenchRow {
            instance: format!("seed{}", set.seeds[k]),
            nodes: set.instances[k].nodes(),
            objective: obj,
            reference: Some(reference),
            gap_percent: Some(gap_percent(obj, reference)),
        })
        .collect())
}

fn aco_suite(
    opts: &BenchOptions,
    runtime: Arc<dyn HeuristicRuntime>,
) -> anyhow::Result<BenchReport> {
    let spec = task(&opts.task, opts.mode)?;
    let protocol = synthetic_protocol(spec, opts);
    let SolverPreset::Aco(params) = protocol.solver.clone() else {
        bail!("aco_synthetic needs an ACO task, got {}", spec.key());
    };
    let source = opts.heuristic.resolve(spec)?;
    let ev = Evaluator::new(spec, protocol, runtime)?;
    let set = ev.instances();
    let timeout = Duration::from_secs_f64(opts.timeout_s);
    let idx: Vec<usize> = (0..set.len()).collect();
    let outs = par::map_slice(&idx, |&k| -> anyhow::Result<_> {
        let inst = &set.instances[k];
        let eta = ev
            .heuristic(&source, k, MatrixUse::Aco, timeout)
            .map_err(|f| anyhow!("instance {k}: {:?}: {}", f.status, f.message))?;
        let eta = HeuristicMatrix::new(inst, eta)?;
        Ok(run_aco(inst, &eta, &params.with_seed(set.seeds[k]))?)
    });
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for (k, out) in outs.into_iter().enumerate() {
        let out = out?;
        let name = format!("seed{}", set.seeds[k]);
        rows.push(BenchRow {
            instance: name.clone(),
            nodes: set.instances[k].nodes(),
            objective: out.best.objective,
            reference: None,
            gap_percent: None,
        });
        curves.push(Curve {
            instance: name,
            trace: out.trace,
        });
    }
    let mut report = BenchReport::new(Suite::AcoSynthetic, opts.heuristic.label(), rows, Vec::new());
    report.curves = curves;
    Ok(report)
}

pub fn run_suite(
    suite: Suite,
    opts: &BenchOptions,
    runtime: Arc<dyn HeuristicRuntime>,
) -> anyhow::Result<BenchReport> {
    match suite {
        Suite::NnBaseline => tsplib_suite(
            suite,
            opts,
            runtime.as_ref(),
            NEAREST_NEIGHBOUR_SELECTOR,
            "select_next_node",
            "nearest_neighbour".into(),
        ),
        Suite::TsplibConstructive => {
            let spec = task("tsp_constructive", opts.mode)?;
            let source = opts.heuristic.resolve(spec)?;
            tsplib_suite(
                suite,
                opts,
                runtime.as_ref(),
                &source,
                &spec.function_name,
                opts.heuristic.label(),
            )
        }
        Suite::GlsSynthetic => {
            let spec = task("tsp_gls", opts.mode)?;
            let source = opts.heuristic.resolve(spec)?;
            let mut o = opts.clone();
            o.size.get_or_insert(100);
            let ev = Evaluator::new(spec, synthetic_protocol(spec, &o), runtime)?;
            let refs = gls_references(&ev.instances().instances, opts.reference_kicks);
            let rows = gls_rows(&ev, &source, &refs)?;
            Ok(BenchReport::new(suite, opts.heuristic.label(), rows, Vec::new()))
        }
        Suite::AcoSynthetic => aco_suite(opts, runtime),
    }
}
