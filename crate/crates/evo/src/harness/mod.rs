//! Fitness of a heuristic: run it on every instance of a seeded validation
//! set, feed the result to the matching solver and average the objectives
//! (negated for maximization problems, so lower is always better).

mod builtin;
mod sandbox;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use hevo_core::aco::{run_aco, AcoParams, HeuristicMatrix};
use hevo_core::constructive::revalidate_rollout;
use hevo_core::gls::{run_gls, GlsParams};
use hevo_core::matrix::Matrix;
use hevo_core::par;
use hevo_core::problem::{GeneratorOptions, InstanceSet};
use hevo_core::{Instance, ProblemKind};
use serde::{Deserialize, Serialize};

use crate::catalog::{Mode, SolverKind, TaskSpec};

pub use builtin::{normalize_source, BuiltinRuntime};
pub use sandbox::{SandboxConfig, SandboxRuntime, PROTOCOL_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Ok,
    ExecError,
    Timeout,
    ShapeError,
    Unevaluated,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecFailure {
    pub status: ExecStatus,
    pub message: String,
}

impl ExecFailure {
    pub fn exec(message: impl Into<String>) -> Self {
        ExecFailure {
            status: ExecStatus::ExecError,
            message: message.into(),
        }
    }

    pub fn shape(message: impl Into<String>) -> Self {
        ExecFailure {
            status: ExecStatus::ShapeError,
            message: message.into(),
        }
    }

    pub fn timeout(message: impl Into<String>) -> Self {
        ExecFailure {
            status: ExecStatus::Timeout,
            message: message.into(),
        }
    }
}

/// A row-major array crossing the runtime boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawArray {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl RawArray {
    pub fn vector(data: Vec<f64>) -> Self {
        RawArray {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(m: &Matrix) -> Self {
        RawArray {
            shape: vec![m.rows(), m.cols()],
            data: m.as_slice().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArgValue {
    Array(RawArray),
    Int { value: i64 },
    Float { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arg {
    pub name: String,
    #[serde(flatten)]
    pub value: ArgValue,
}

impl Arg {
    fn array(name: &str, a: RawArray) -> Self {
        Arg {
            name: name.into(),
            value: ArgValue::Array(a),
        }
    }

    pub fn as_array(&self) -> Option<&RawArray> {
        match &self.value {
            ArgValue::Array(a) => Some(a),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self.value {
            ArgValue::Int { value } => Some(value as f64),
            ArgValue::Float { value } => Some(value),
            ArgValue::Array(_) => None,
        }
    }
}

/// Executes heuristic source code.
pub trait HeuristicRuntime: Send + Sync {
    /// Calls `entry` with `args` and returns the array it produced.
    fn matrix(
        &self,
        source: &str,
        entry: &str,
        args: &[Arg],
        timeout: Duration,
    ) -> Result<RawArray, ExecFailure>;

    /// Builds a whole tour from `start` with the selector `entry`.
    fn rollout(
        &self,
        source: &str,
        entry: &str,
        dist: &Matrix,
        start: usize,
        timeout: Duration,
    ) -> Result<Vec<usize>, ExecFailure>;
}

impl<R: HeuristicRuntime + ?Sized> HeuristicRuntime for Arc<R> {
    fn matrix(&self, s: &str, e: &str, a: &[Arg], t: Duration) -> Result<RawArray, ExecFailure> {
        (**self).matrix(s, e, a, t)
    }

    fn rollout(
        &self,
        s: &str,
        e: &str,
        d: &Matrix,
        st: usize,
        t: Duration,
    ) -> Result<Vec<usize>, ExecFailure> {
        (**self).rollout(s, e, d, st, t)
    }
}

/// Heuristic arguments for an instance, in signature order. MKP weights are
/// divided by their dimension's capacity so every constraint equals 1.
pub fn heuristic_args(instance: &Instance, mode: Mode) -> Vec<Arg> {
    let bb = mode == Mode::BlackBox;
    match instance {
        Instance::Tsp(t) => {
            if bb {
                let n = t.len();
                vec![Arg::array(
                    "edge_attr",
                    RawArray {
                        shape: vec![n * n, 1],
                        data: t.dist.as_slice().to_vec(),
                    },
                )]
            } else {
                vec![Arg::array("distance_matrix", RawArray::matrix(&t.dist))]
            }
        }
        Instance::Cvrp(c) => {
            let demands: Vec<f64> = c.demands.iter().map(|&d| f64::from(d)).collect();
            if bb {
                let cap = f64::from(c.capacity);
                vec![
                    Arg::array("edge_attr", RawArray::matrix(&c.dist)),
                    Arg::array(
                        "node_attr",
                        RawArray::vector(demands.iter().map(|d| d / cap).collect()),
                    ),
                ]
            } else {
                let coords: Vec<f64> = c.coords.iter().flat_map(|p| [p[0], p[1]]).collect();
                vec![
                    Arg::array("distance_matrix", RawArray::matrix(&c.dist)),
                    Arg::array(
                        "coordinates",
                        RawArray {
                            shape: vec![c.coords.len(), 2],
                            data: coords,
                        },
                    ),
                    Arg::array("demands", RawArray::vector(demands)),
                    Arg {
                        name: "capacity".into(),
                        value: ArgValue::Int {
                            value: i64::from(c.capacity),
                        },
                    },
                ]
            }
        }
        Instance::Op(o) => {
            let names = if bb {
                ["node_attr", "edge_attr", "node_constraint"]
            } else {
                ["prize", "distance", "maxlen"]
            };
            vec![
                Arg::array(names[0], RawArray::vector(o.prize.clone())),
                Arg::array(names[1], RawArray::matrix(&o.dist)),
                Arg {
                    name: names[2].into(),
                    value: ArgValue::Float { value: o.maxlen },
                },
            ]
        }
        Instance::Mkp(m) => {
            let names = if bb {
                ["item_attr1", "item_attr2"]
            } else {
                ["prize", "weight"]
            };
            let w = Matrix::from_fn(m.items(), m.dims(), |i, j| {
                m.weight[(i, j)] / m.constraint[j]
            });
            vec![
                Arg::array(names[0], RawArray::vector(m.prize.clone())),
                Arg::array(names[1], RawArray::matrix(&w)),
            ]
        }
        Instance::Bpp(b) => {
            let names = if bb {
                ["node_attr", "node_constraint"]
            } else {
                ["demand", "capacity"]
            };
            vec![
                Arg::array(
                    names[0],
                    RawArray::vector(b.sizes.iter().map(|&s| f64::from(s)).collect()),
                ),
                Arg {
                    name: names[1].into(),
                    value: ArgValue::Int {
                        value: i64::from(b.capacity),
                    },
                },
            ]
        }
    }
}

/// What a heuristic matrix is used for; decides the sign contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixUse {
    /// ACO desirability: nonnegative.
    Aco,
    /// GLS penalty indicator: any finite value.
    Gls,
}

/// Checks a returned array against the expected shape and value contract and
/// converts it to a matrix. Accepted shapes: `expected` itself; for an n×1
/// expectation also a flat length-n vector. Diagonal entries of square
/// results are not used by any solver and are zeroed without inspection.
pub fn validate_matrix(
    raw: &RawArray,
    expected: (usize, usize),
    usage: MatrixUse,
) -> Result<Matrix, ExecFailure> {
    let (rows, cols) = expected;
    let shape_ok = raw.shape == [rows, cols] || (cols == 1 && raw.shape == [rows]);
    if !shape_ok || raw.data.len() != rows * cols {
        return Err(ExecFailure::shape(format!(
            "expected shape ({rows}, {cols}), got {:?}",
            raw.shape
        )));
    }
    let mut m = Matrix::from_vec(rows, cols, raw.data.clone());
    let square = cols > 1 && rows == cols;
    for i in 0..rows {
        for j in 0..cols {
            if square && i == j {
                m.set(i, j, 0.0);
                continue;
            }
            let v = m[(i, j)];
            if !v.is_finite() {
                return Err(ExecFailure::shape(format!(
                    "non-finite entry {v} at ({i}, {j})"
                )));
            }
            if usage == MatrixUse::Aco && v < 0.0 {
                return Err(ExecFailure::shape(format!(
                    "negative entry {v} at ({i}, {j})"
                )));
            }
        }
    }
    Ok(m)
}

/// Turns a runtime result into the solver's heuristic for `instance`.
/// Black-box TSP results have one value per ordered node pair and are
/// folded back into an n×n matrix.
pub fn heuristic_for(
    raw: &RawArray,
    instance: &Instance,
    mode: Mode,
    usage: MatrixUse,
) -> Result<Matrix, ExecFailure> {
    let n = instance.nodes();
    if mode == Mode::BlackBox && instance.kind() == ProblemKind::Tsp {
        let flat = validate_edges(raw, n * n)?;
        let folded = RawArray {
            shape: vec![n, n],
            data: flat,
        };
        return validate_matrix(&folded, (n, n), usage);
    }
    let shape = match instance.kind() {
        ProblemKind::Mkp => (n, 1),
        _ => (n, n),
    };
    validate_matrix(raw, shape, usage)
}

fn validate_edges(raw: &RawArray, edges: usize) -> Result<Vec<f64>, ExecFailure> {
    if raw.shape == [edges] || raw.shape == [edges, 1] {
        Ok(raw.data.clone())
    } else {
        Err(ExecFailure::shape(format!(
            "expected shape ({edges},) or ({edges}, 1), got {:?}",
            raw.shape
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "solver", rename_all = "snake_case")]
pub enum SolverPreset {
    Aco(AcoParams),
    Gls(GlsParams),
    Constructive { starts: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalProtocol {
    pub task: String,
    pub mode: Mode,
    pub problem: ProblemKind,
    pub size: usize,
    pub count: usize,
    pub master_seed: u64,
    pub solver: SolverPreset,
    pub timeout_s: f64,
}

pub const DEFAULT_TIMEOUT_S: f64 = 60.0;
pub const DEFAULT_VALIDATION_COUNT: usize = 10;
pub const VALIDATION_SEED: u64 = 1234;
pub const TEST_SEED: u64 = 2024;

/// Training size per problem: the smallest size of each benchmark family.
pub fn training_size(task: &TaskSpec) -> usize {
    match (task.solver, task.problem) {
        (SolverKind::Gls, _) => 200,
        (_, ProblemKind::Mkp) => 100,
        (_, ProblemKind::Bpp) => 120,
        _ => 50,
    }
}

impl EvalProtocol {
    /// Validation protocol used while evolving heuristics for `task`.
    pub fn evolution(task: &TaskSpec) -> Self {
        let solver = match task.solver {
            SolverKind::Aco => SolverPreset::Aco(AcoParams::preset(task.problem)),
            SolverKind::Gls => SolverPreset::Gls(GlsParams::training()),
            SolverKind::Constructive => SolverPreset::Constructive { starts: vec![0] },
        };
        EvalProtocol {
            task: task.id.clone(),
            mode: task.mode,
            problem: task.problem,
            size: training_size(task),
            count: DEFAULT_VALIDATION_COUNT,
            master_seed: VALIDATION_SEED,
            solver,
            timeout_s: DEFAULT_TIMEOUT_S,
        }
    }

    /// Held-out test protocol: 64 instances from a separate seed.
    pub fn test(task: &TaskSpec, size: usize) -> Self {
        let solver = match task.solver {
            SolverKind::Gls => SolverPreset::Gls(GlsParams::for_size(size)),
            _ => Self::evolution(task).solver,
        };
        EvalProtocol {
            size,
            count: 64,
            master_seed: TEST_SEED,
            solver,
            ..Self::evolution(task)
        }
    }

    pub fn instances(&self) -> hevo_core::Result<InstanceSet> {
        InstanceSet::generate(
            self.problem,
            self.size,
            self.count,
            self.master_seed,
            &GeneratorOptions::default(),
        )
    }

    pub fn validate(&self) -> crate::Result<()> {
        let mut errs = Vec::new();
        if self.count == 0 {
            errs.push("protocol.count must be positive".to_string());
        }
        if !(self.timeout_s > 0.0) {
            errs.push("protocol.timeout_s must be positive".to_string());
        }
        match &self.solver {
            SolverPreset::Aco(p) => {
                if let Err(e) = p.validate() {
                    errs.push(format!("protocol.solver: {e}"));
                }
            }
            SolverPreset::Gls(p) => {
                if let Err(e) = p.validate() {
                    errs.push(format!("protocol.solver: {e}"));
                }
                if self.problem != ProblemKind::Tsp {
                    errs.push("protocol.problem: GLS needs tsp".into());
                }
            }
            SolverPreset::Constructive { starts } => {
                if starts.iter().any(|&s| s >= self.size) {
                    errs.push("protocol.solver.starts: start node out of range".into());
                }
                if self.problem != ProblemKind::Tsp {
                    errs.push("protocol.problem: constructive needs tsp".into());
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(crate::EvoError::Config(errs.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Mean minimized objective; `None` is the INVALID sentinel.
    pub fitness: Option<f64>,
    pub status: ExecStatus,
    /// Raw per-instance objectives (empty unless status is ok).
    pub objectives: Vec<f64>,
    pub wall_time_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl EvalResult {
    pub fn invalid(failure: ExecFailure, wall_time_s: f64) -> Self {
        EvalResult {
            fitness: None,
            status: failure.status,
            objectives: Vec::new(),
            wall_time_s,
            message: Some(failure.message),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.fitness.is_some()
    }
}

/// Anything that can score heuristic code. The engine only talks to this.
pub trait FitnessFn: Send + Sync {
    fn evaluate(&self, code: &str) -> EvalResult;
}

impl<F: Fn(&str) -> EvalResult + Send + Sync> FitnessFn for F {
    fn evaluate(&self, code: &str) -> EvalResult {
        self(code)
    }
}

/// Scores code through a runtime on a fixed instance set.
pub struct Evaluator {
    protocol: EvalProtocol,
    entry: String,
    instances: Arc<InstanceSet>,
    runtime: Arc<dyn HeuristicRuntime>,
    calls: AtomicUsize,
}

impl Evaluator {
    pub fn new(
        task: &TaskSpec,
        protocol: EvalProtocol,
        runtime: Arc<dyn HeuristicRuntime>,
    ) -> crate::Result<Self> {
        protocol.validate()?;
        let instances = Arc::new(protocol.instances()?);
        Ok(Evaluator {
            entry: task.function_name.clone(),
            protocol,
            instances,
            runtime,
            calls: AtomicUsize::new(0),
        })
    }

    pub fn protocol(&self) -> &EvalProtocol {
        &self.protocol
    }

    pub fn instances(&self) -> &InstanceSet {
        &self.instances
    }

    /// Number of evaluations that reached the runtime.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Runs `code` in matrix mode on instance `k` and validates the result.
    pub fn heuristic(
        &self,
        code: &str,
        k: usize,
        usage: MatrixUse,
        timeout: Duration,
    ) -> Result<Matrix, ExecFailure> {
        let inst = &self.instances.instances[k];
        let args = heuristic_args(inst, self.protocol.mode);
        let raw = self.runtime.matrix(code, &self.entry, &args, timeout)?;
        heuristic_for(&raw, inst, self.protocol.mode, usage)
    }

    fn run_instance(
        &self,
        code: &str,
        k: usize,
        deadline: Instant,
    ) -> Result<Vec<f64>, ExecFailure> {
        let inst = &self.instances.instances[k];
        let remaining = || {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                Err(ExecFailure::timeout("evaluation time budget exhausted"))
            } else {
                Ok(left)
            }
        };
        match &self.protocol.solver {
            SolverPreset::Aco(params) => {
                let eta = self.heuristic(code, k, MatrixUse::Aco, remaining()?)?;
                let eta = HeuristicMatrix::new(inst, eta)
                    .map_err(|e| ExecFailure::shape(e.to_string()))?;
                let params = params.with_seed(self.instances.seeds[k]);
                let out =
                    run_aco(inst, &eta, &params).map_err(|e| ExecFailure::exec(e.to_string()))?;
                Ok(vec![out.best.objective])
            }
            SolverPreset::Gls(params) => {
                let ind = self.heuristic(code, k, MatrixUse::Gls, remaining()?)?;
                let tsp = inst.as_tsp().expect("GLS protocol uses TSP");
                let out = run_gls(tsp, &ind, params, None)
                    .map_err(|e| ExecFailure::exec(e.to_string()))?;
                Ok(vec![out.best.objective])
            }
            SolverPreset::Constructive { starts } => {
                let tsp = inst.as_tsp().expect("constructive protocol uses TSP");
                let mut out = Vec::with_capacity(starts.len());
                for &s in starts {
                    let tour =
                        self.runtime
                            .rollout(code, &self.entry, &tsp.dist, s, remaining()?)?;
                    let sol = revalidate_rollout(tsp, s, tour)
                        .map_err(|e| ExecFailure::exec(e.to_string()))?;
                    out.push(sol.objective);
                }
                Ok(out)
            }
        }
    }
}

impl FitnessFn for Evaluator {
    fn evaluate(&self, code: &str) -> EvalResult {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let start = Instant::now();
        let deadline = start + Duration::from_secs_f64(self.protocol.timeout_s);
        let idx: Vec<usize> = (0..self.instances.len()).collect();
        let per = par::map_slice(&idx, |&k| self.run_instance(code, k, deadline));
        let wall = start.elapsed().as_secs_f64();
        let mut objectives = Vec::new();
        for r in per {
            match r {
                Ok(v) => objectives.extend(v),
                Err(f) => return EvalResult::invalid(f, wall),
            }
        }
        let dir = self.protocol.problem.direction();
        let mean =
            objectives.iter().map(|&o| dir.to_minimized(o)).sum::<f64>() / objectives.len() as f64;
        EvalResult {
            fitness: Some(mean),
            status: ExecStatus::Ok,
            objectives,
            wall_time_s: wall,
            message: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_rules() {
        let v = RawArray::vector(vec![1.0, 2.0]);
        assert!(validate_matrix(&v, (2, 1), MatrixUse::Aco).is_ok());
        assert_eq!(
            validate_matrix(&RawArray::vector(vec![1.0]), (2, 1), MatrixUse::Aco)
                .unwrap_err()
                .status,
            ExecStatus::ShapeError
        );
        let neg = RawArray {
            shape: vec![2, 2],
            data: vec![0.0, -0.5, 1.0, 0.0],
        };
        assert!(validate_matrix(&neg, (2, 2), MatrixUse::Aco).is_err());
        assert!(validate_matrix(&neg, (2, 2), MatrixUse::Gls).is_ok());
        let nan = RawArray {
            shape: vec![2, 2],
            data: vec![f64::INFINITY, f64::NAN, 1.0, 0.0],
        };
        assert!(validate_matrix(&nan, (2, 2), MatrixUse::Gls).is_err());
        let diag = RawArray {
            shape: vec![2, 2],
            data: vec![f64::INFINITY, 1.0, 1.0, f64::NAN],
        };
        assert_eq!(
            validate_matrix(&diag, (2, 2), MatrixUse::Aco).unwrap()[(0, 0)],
            0.0
        );
    }
}
