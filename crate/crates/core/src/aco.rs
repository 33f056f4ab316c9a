//! Ant colony optimization driven by an external heuristic matrix.
//!
//! MAX-MIN flavoured: pheromone starts at `tau0`, evaporates by `rho` each
//! iteration, and only the iteration-best solution deposits (`q / obj` when
//! minimizing, `q * obj` when maximizing). Entries are clamped to
//! `[tau_min, tau_max]` after every update.
//!
//! A component's selection weight is `tau^alpha * eta^beta`, normalized over
//! the feasible candidates of the current step. If every feasible candidate
//! has zero weight the step falls back to a uniform choice.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::par;
use crate::problem::{
    BppInstance, CvrpInstance, Instance, MkpInstance, OpInstance, Payload, ProblemKind, Solution,
    TspInstance,
};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcoParams {
    pub n_ants: usize,
    pub n_iterations: usize,
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
    pub tau0: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub q: f64,
    pub seed: u64,
}

impl Default for AcoParams {
    fn default() -> Self {
        Self {
            n_ants: 30,
            n_iterations: 100,
            alpha: 1.0,
            beta: 1.0,
            rho: 0.1,
            tau0: 1.0,
            tau_min: 1e-9,
            tau_max: 10.0,
            q: 1.0,
            seed: 0,
        }
    }
}

impl AcoParams {
    /// Evaluation preset (ants, iterations) for a problem kind.
    pub fn preset(kind: ProblemKind) -> Self {
        let (n_ants, n_iterations) = match kind {
            ProblemKind::Tsp => (30, 100),
            ProblemKind::Cvrp => (30, 100),
            ProblemKind::Op => (20, 50),
            ProblemKind::Mkp => (10, 50),
            ProblemKind::Bpp => (20, 15),
        };
        Self {
            n_ants,
            n_iterations,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.n_ants > 0
            && self.n_iterations > 0
            && self.alpha >= 0.0
            && self.beta >= 0.0
            && (0.0..=1.0).contains(&self.rho)
            && self.tau_min > 0.0
            && self.tau_min <= self.tau0
            && self.tau0 <= self.tau_max
            && self.q > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid ACO parameters: {self:?}")))
        }
    }
}

/// Expected heuristic shape for an instance: n×n for routing problems and
/// BPP, n×1 (a vector) for MKP.
pub fn heuristic_shape(instance: &Instance) -> (usize, usize) {
    let n = instance.nodes();
    match instance.kind() {
        ProblemKind::Mkp => (n, 1),
        _ => (n, n),
    }
}

/// Validated heuristic values: finite and nonnegative. Diagonal entries of
/// square matrices are never used by any sampler and are zeroed.
#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicMatrix {
    values: Matrix,
}

impl HeuristicMatrix {
    pub fn new(instance: &Instance, mut values: Matrix) -> Result<Self> {
        let (rows, cols) = heuristic_shape(instance);
        if values.rows() != rows || values.cols() != cols {
            return Err(Error::Shape {
                expected: format!("{rows}x{cols}"),
                got: format!("{}x{}", values.rows(), values.cols()),
            });
        }
        let square = cols > 1;
        for i in 0..rows {
            for j in 0..cols {
                if square && i == j {
                    values.set(i, j, 0.0);
                    continue;
                }
                let v = values[(i, j)];
                if !v.is_finite() {
                    return Err(Error::InvalidHeuristic(format!(
                        "non-finite entry at ({i}, {j})"
                    )));
                }
                if v < 0.0 {
                    return Err(Error::InvalidHeuristic(format!(
                        "negative entry {v} at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    /// All-time best objective after each iteration.
    pub best_so_far: Vec<f64>,
    /// Cumulative number of sampled solutions after each iteration.
    pub evaluations: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcoOutcome {
    pub best: Solution,
    pub trace: ConvergenceTrace,
}

/// Initial pheromone for an instance.
pub fn initial_pheromone(instance: &Instance, params: &AcoParams) -> Matrix {
    let (r, c) = heuristic_shape(instance);
    Matrix::filled(r, c, params.tau0)
}

/// Element-wise `tau^alpha * eta^beta`.
pub fn combined_weights(tau: &Matrix, eta: &HeuristicMatrix, params: &AcoParams) -> Matrix {
    let eta = eta.values();
    Matrix::from_fn(tau.rows(), tau.cols(), |i, j| {
        pow(tau[(i, j)], params.alpha) * pow(eta[(i, j)], params.beta)
    })
}

fn pow(x: f64, e: f64) -> f64 {
    if e == 1.0 {
        x
    } else if e == 0.0 {
        1.0
    } else {
        x.powf(e)
    }
}

/// Brings weights into a range where their sum is finite: entries that are
/// infinite become 1 and the rest 0; finite weights whose sum overflows are
/// divided by their maximum.
fn normalise_overflow(buf: &mut [f64]) {
    if buf.iter().any(|w| w.is_infinite()) {
        for w in buf.iter_mut() {
            *w = if w.is_infinite() { 1.0 } else { 0.0 };
        }
    } else if buf.iter().sum::<f64>().is_infinite() {
        let max = buf.iter().cloned().fold(0.0, f64::max);
        for w in buf.iter_mut() {
            *w /= max;
        }
    }
}

/// Selection probabilities for candidate weights, including the uniform
/// fallback when all weights are zero.
pub fn selection_probabilities(weights: &[f64]) -> Vec<f64> {
    let mut w = weights.to_vec();
    normalise_overflow(&mut w);
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        w.iter().map(|x| x / total).collect()
    } else {
        vec![1.0 / w.len() as f64; w.len()]
    }
}

/// Roulette-wheel pick over `candidates` with weights given by `weight`.
fn pick(
    rng: &mut Rng,
    candidates: &[usize],
    buf: &mut Vec<f64>,
    weight: impl Fn(usize) -> f64,
) -> usize {
    buf.clear();
    buf.extend(candidates.iter().map(|&c| weight(c)));
    normalise_overflow(buf);
    let total: f64 = buf.iter().sum();
    if total > 0.0 {
        let mut r = rng.gen::<f64>() * total;
        for (k, w) in buf.iter().enumerate() {
            if r < *w {
                return candidates[k];
            }
            r -= w;
        }
        // rounding left r marginally above the sum
        let k = buf.iter().rposition(|w| *w > 0.0).expect("positive total");
        candidates[k]
    } else {
        candidates[rng.gen_range(0..candidates.len())]
    }
}

/// Samples one solution from precomputed combined weights.
pub fn sample_with_weights(instance: &Instance, weights: &Matrix, rng: &mut Rng) -> Solution {
    let payload = match instance {
        Instance::Tsp(t) => sample_tsp(t, weights, rng),
        Instance::Cvrp(c) => sample_cvrp(c, weights, rng),
        Instance::Op(o) => sample_op(o, weights, rng),
        Instance::Mkp(m) => sample_mkp(m, weights, rng),
        Instance::Bpp(b) => sample_bpp(b, weights, rng),
    };
    Solution::evaluate(instance, payload).expect("sampler emits well-formed payloads")
}

/// Samples one solution biased by `tau` and `eta`.
pub fn sample_solution(
    instance: &Instance,
    tau: &Matrix,
    eta: &HeuristicMatrix,
    params: &AcoParams,
    rng: &mut Rng,
) -> Solution {
    sample_with_weights(instance, &combined_weights(tau, eta, params), rng)
}

fn remove_at(v: &mut Vec<usize>, node: usize) {
    let k = v
        .iter()
        .position(|&x| x == node)
        .expect("candidate present");
    v.remove(k);
}

fn sample_tsp(t: &TspInstance, w: &Matrix, rng: &mut Rng) -> Payload {
    let n = t.len();
    let start = rng.gen_range(0..n);
    let mut unvisited: Vec<usize> = (0..n).filter(|&j| j != start).collect();
    let mut tour = Vec::with_capacity(n);
    tour.push(start);
    let mut buf = Vec::with_capacity(n);
    let mut cur = start;
    while !unvisited.is_empty() {
        let next = pick(rng, &unvisited, &mut buf, |j| w[(cur, j)]);
        remove_at(&mut unvisited, next);
        tour.push(next);
        cur = next;
    }
    Payload::Tour(tour)
}

fn sample_cvrp(c: &CvrpInstance, w: &Matrix, rng: &mut Rng) -> Payload {
    let n = c.coords.len();
    let mut unvisited: Vec<usize> = (1..n).collect();
    let mut routes = Vec::new();
    let mut route = Vec::new();
    let mut load = 0u32;
    let mut cur = 0;
    let mut buf = Vec::with_capacity(n);
    let mut cand = Vec::with_capacity(n);
    while !unvisited.is_empty() {
        cand.clear();
        cand.extend(
            unvisited
                .iter()
                .copied()
                .filter(|&j| load + c.demands[j] <= c.capacity),
        );
        if cand.is_empty() {
            routes.push(std::mem::take(&mut route));
            load = 0;
            cur = 0;
            continue;
        }
        let next = pick(rng, &cand, &mut buf, |j| w[(cur, j)]);
        remove_at(&mut unvisited, next);
        route.push(next);
        load += c.demands[next];
        cur = next;
    }
    if !route.is_empty() {
        routes.push(route);
    }
    Payload::Routes(routes)
}

fn sample_op(o: &OpInstance, w: &Matrix, rng: &mut Rng) -> Payload {
    let n = o.len();
    let d = &o.dist;
    let mut unvisited: Vec<usize> = (1..n).collect();
    let mut route = Vec::new();
    let mut length = 0.0;
    let mut cur = 0;
    let mut buf = Vec::with_capacity(n);
    let mut cand = Vec::with_capacity(n);
    loop {
        cand.clear();
        cand.extend(
            unvisited
                .iter()
                .copied()
                .filter(|&j| length + d[(cur, j)] + d[(j, 0)] <= o.maxlen),
        );
        if cand.is_empty() {
            break;
        }
        let next = pick(rng, &cand, &mut buf, |j| w[(cur, j)]);
        remove_at(&mut unvisited, next);
        length += d[(cur, next)];
        route.push(next);
        cur = next;
    }
    Payload::OpRoute(route)
}

fn sample_mkp(m: &MkpInstance, w: &Matrix, rng: &mut Rng) -> Payload {
    let n = m.items();
    let dims = m.dims();
    let mut load = vec![0.0; dims];
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut chosen = Vec::new();
    let mut buf = Vec::with_capacity(n);
    let mut cand = Vec::with_capacity(n);
    loop {
        cand.clear();
        cand.extend(
            remaining
                .iter()
                .copied()
                .filter(|&i| (0..dims).all(|k| load[k] + m.weight[(i, k)] <= m.constraint[k])),
        );
        if cand.is_empty() {
            break;
        }
        let item = pick(rng, &cand, &mut buf, |i| w[(i, 0)]);
        remove_at(&mut remaining, item);
        for (k, l) in load.iter_mut().enumerate() {
            *l += m.weight[(item, k)];
        }
        chosen.push(item);
    }
    Payload::Items(chosen)
}

fn sample_bpp(b: &BppInstance, w: &Matrix, rng: &mut Rng) -> Payload {
    let n = b.items();
    let mut bins = vec![usize::MAX; n];
    let mut unplaced: Vec<usize> = (0..n).collect();
    let mut bin = 0;
    let mut buf = Vec::with_capacity(n);
    let mut cand = Vec::with_capacity(n);
    while !unplaced.is_empty() {
        let first = unplaced[rng.gen_range(0..unplaced.len())];
        remove_at(&mut unplaced, first);
        bins[first] = bin;
        let mut members = vec![first];
        let mut free = b.capacity - b.sizes[first];
        loop {
            cand.clear();
            cand.extend(unplaced.iter().copied().filter(|&j| b.sizes[j] <= free));
            if cand.is_empty() {
                break;
            }
            let next = pick(rng, &cand, &mut buf, |j| {
                members.iter().map(|&k| w[(k, j)]).sum::<f64>() / members.len() as f64
            });
            remove_at(&mut unplaced, next);
            bins[next] = bin;
            free -= b.sizes[next];
            members.push(next);
        }
        bin += 1;
    }
    Payload::Bins(bins)
}

/// Components (matrix cells) used by a solution, each listed once per use.
pub fn solution_components(instance: &Instance, solution: &Solution) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut path = |nodes: &[usize], closed_at: Option<usize>| {
        let mut seq: Vec<usize> = Vec::with_capacity(nodes.len() + 2);
        if let Some(depot) = closed_at {
            seq.push(depot);
        }
        seq.extend_from_slice(nodes);
        if let Some(depot) = closed_at {
            seq.push(depot);
        } else if let Some(&first) = nodes.first() {
            seq.push(first);
        }
        for e in seq.windows(2) {
            out.push((e[0], e[1]));
            out.push((e[1], e[0]));
        }
    };
    match (instance, &solution.payload) {
        (Instance::Tsp(_), Payload::Tour(t)) => path(t, None),
        (Instance::Cvrp(_), Payload::Routes(rs)) => {
            for r in rs {
                path(r, Some(0));
            }
        }
        (Instance::Op(_), Payload::OpRoute(r)) => {
            if !r.is_empty() {
                path(r, Some(0));
            }
        }
        (Instance::Mkp(_), Payload::Items(items)) => {
            out.extend(items.iter().map(|&i| (i, 0)));
        }
        (Instance::Bpp(_), Payload::Bins(bins)) => {
            for i in 0..bins.len() {
                for j in i + 1..bins.len() {
                    if bins[i] == bins[j] {
                        out.push((i, j));
                        out.push((j, i));
                    }
                }
            }
        }
        _ => {}
    }
    out
}

/// Evaporates `tau`, deposits on the components of `best` (if any), then
/// clamps every entry into `[tau_min, tau_max]`.
pub fn update_pheromone(
    tau: &mut Matrix,
    instance: &Instance,
    best: Option<&Solution>,
    params: &AcoParams,
) {
    for v in tau.as_mut_slice() {
        *v *= 1.0 - params.rho;
    }
    if let Some(best) = best {
        let amount = match instance.direction() {
            crate::Direction::Minimize => {
                if best.objective > 0.0 {
                    params.q / best.objective
                } else {
                    params.tau_max
                }
            }
            crate::Direction::Maximize => params.q * best.objective,
        };
        let mut comps = solution_components(instance, best);
        comps.sort_unstable();
        comps.dedup();
        for (i, j) in comps {
            tau[(i, j)] += amount;
        }
    }
    for v in tau.as_mut_slice() {
        *v = v.clamp(params.tau_min, params.tau_max);
    }
}

/// Full ACO run. Ants of one iteration draw from independent sub-streams, so
/// the result does not depend on whether they run in parallel.
pub fn run_aco(
    instance: &Instance,
    eta: &HeuristicMatrix,
    params: &AcoParams,
) -> Result<AcoOutcome> {
    params.validate()?;
    let (r, c) = heuristic_shape(instance);
    if eta.values().rows() != r || eta.values().cols() != c {
        return Err(Error::Shape {
            expected: format!("{r}x{c}"),
            got: format!("{}x{}", eta.values().rows(), eta.values().cols()),
        });
    }
    let dir = instance.direction();
    let mut tau = initial_pheromone(instance, params);
    let mut best: Option<Solution> = None;
    let mut trace = ConvergenceTrace {
        best_so_far: Vec::with_capacity(params.n_iterations),
        evaluations: Vec::with_capacity(params.n_iterations),
    };
    for it in 0..params.n_iterations {
        let weights = combined_weights(&tau, eta, params);
        let base = (it * params.n_ants) as u64;
        let sols = par::map_range(params.n_ants, |a| {
            let mut rng = rng::stream(params.seed, base + a as u64);
            sample_with_weights(instance, &weights, &mut rng)
        });
        let mut it_best = 0;
        for (k, s) in sols.iter().enumerate() {
            if dir.better(s.objective, sols[it_best].objective) {
                it_best = k;
            }
        }
        let it_best = &sols[it_best];
        if best
            .as_ref()
            .is_none_or(|b| dir.better(it_best.objective, b.objective))
        {
            best = Some(it_best.clone());
        }
        update_pheromone(&mut tau, instance, Some(it_best), params);
        trace
            .best_so_far
            .push(best.as_ref().expect("at least one ant").objective);
        trace.evaluations.push((it + 1) * params.n_ants);
    }
    Ok(AcoOutcome {
        best: best.expect("n_iterations > 0"),
        trace,
    })
}
