//! Guided local search for the TSP.
//!
//! The search alternates a perturbation phase with local search on the
//! guided distances `d + k * penalty`, where `k = lambda * L / n` and `L` is
//! the length of the first local optimum. During perturbation the tour edges
//! with the highest utility `indicator / (1 + penalty)` are penalized one
//! round at a time, and after each round the endpoints of the penalized edges
//! are re-optimized, until `perturbation_moves` improving moves were applied.
//! The best tour under the true distances is kept.
//!
//! Local search is 2-opt plus single-node relocate, first improvement, with a
//! queue of active nodes ("don't-look bits").

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::problem::{nearest_neighbour_tour, tour_length, Payload, Solution, TspInstance};

const EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlsParams {
    pub lambda: f64,
    pub n_iterations: usize,
    pub perturbation_moves: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_budget: Option<f64>,
}

impl GlsParams {
    fn with(perturbation_moves: usize, n_iterations: usize) -> Self {
        Self {
            lambda: 0.1,
            n_iterations,
            perturbation_moves,
            time_budget: None,
        }
    }

    pub fn tsp20() -> Self {
        Self::with(5, 73)
    }

    pub fn tsp50() -> Self {
        Self::with(30, 175)
    }

    pub fn tsp100() -> Self {
        Self::with(40, 1800)
    }

    pub fn tsp200() -> Self {
        Self::with(40, 800)
    }

    /// Preset used to score heuristics during evolution (TSP200).
    pub fn training() -> Self {
        Self::with(40, 1200)
    }

    /// Evaluation preset for the nearest tabulated size.
    pub fn for_size(n: usize) -> Self {
        match n {
            0..=35 => Self::tsp20(),
            36..=75 => Self::tsp50(),
            76..=150 => Self::tsp100(),
            _ => Self::tsp200(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda > 0.0 && self.lambda.is_finite() && self.perturbation_moves > 0 {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid GLS parameters: {self:?}")))
        }
    }
}

/// Edge penalties plus the heuristic indicator that ranks edges.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyState {
    penalties: Vec<u32>,
    indicator: Matrix,
}

impl PenaltyState {
    /// Diagonal entries are ignored (zeroed); every other entry must be finite.
    pub fn new(mut indicator: Matrix) -> Result<Self> {
        if !indicator.is_square() {
            return Err(Error::Shape {
                expected: "square matrix".into(),
                got: format!("{}x{}", indicator.rows(), indicator.cols()),
            });
        }
        let n = indicator.rows();
        for i in 0..n {
            indicator.set(i, i, 0.0);
            for j in 0..n {
                if !indicator[(i, j)].is_finite() {
                    return Err(Error::InvalidHeuristic(format!(
                        "non-finite indicator at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self {
            penalties: vec![0; n * n],
            indicator,
        })
    }

    pub fn n(&self) -> usize {
        self.indicator.rows()
    }

    pub fn penalty(&self, i: usize, j: usize) -> u32 {
        self.penalties[i * self.n() + j]
    }

    pub fn indicator(&self) -> &Matrix {
        &self.indicator
    }

    pub fn utility(&self, i: usize, j: usize) -> f64 {
        self.indicator[(i, j)] / (1.0 + f64::from(self.penalty(i, j)))
    }

    /// Adds one penalty to every tour edge of maximal utility and returns
    /// those edges.
    pub fn penalize_step(&mut self, tour: &[usize]) -> Vec<(usize, usize)> {
        let n = tour.len();
        let edges = (0..n).map(|k| (tour[k], tour[(k + 1) % n]));
        let mut max = f64::NEG_INFINITY;
        let mut hit = Vec::new();
        for (a, b) in edges {
            let u = self.utility(a, b);
            if u > max {
                max = u;
                hit.clear();
                hit.push((a, b));
            } else if u == max {
                hit.push((a, b));
            }
        }
        let size = self.n();
        for &(a, b) in &hit {
            self.penalties[a * size + b] += 1;
            self.penalties[b * size + a] += 1;
        }
        hit
    }
}

/// Array tour with node positions, shared by the local search moves.
struct Tour {
    order: Vec<usize>,
    pos: Vec<usize>,
}

impl Tour {
    fn new(order: Vec<usize>) -> Self {
        let mut pos = vec![0; order.len()];
        for (i, &c) in order.iter().enumerate() {
            pos[c] = i;
        }
        Self { order, pos }
    }

    #[inline]
    fn next(&self, c: usize) -> usize {
        let p = self.pos[c] + 1;
        self.order[if p == self.order.len() { 0 } else { p }]
    }

    #[inline]
    fn prev(&self, c: usize) -> usize {
        let p = self.pos[c];
        self.order[if p == 0 { self.order.len() - 1 } else { p - 1 }]
    }

    fn reverse(&mut self, mut i: usize, mut j: usize) {
        while i < j {
            self.order.swap(i, j);
            self.pos[self.order[i]] = i;
            self.pos[self.order[j]] = j;
            i += 1;
            j -= 1;
        }
    }

    /// (a, next a) and (c, next c) become (a, c) and (next a, next c).
    fn two_opt(&mut self, a: usize, c: usize) {
        let b = self.next(a);
        let d = self.next(c);
        let (pb, pc) = (self.pos[b], self.pos[c]);
        if pb <= pc {
            self.reverse(pb, pc);
        } else {
            self.reverse(self.pos[d], self.pos[a]);
        }
    }

    /// Moves `a` between `u` and `next u`.
    fn relocate(&mut self, a: usize, u: usize) {
        let from = self.pos[a];
        let pu = self.pos[u];
        self.order.remove(from);
        let to = if pu > from { pu } else { pu + 1 };
        self.order.insert(to, a);
        let (lo, hi) = (from.min(to), from.max(to));
        for k in lo..=hi.min(self.order.len() - 1) {
            self.pos[self.order[k]] = k;
        }
    }
}

/// Local search state: active-node queue over a tour and a distance matrix.
struct Searcher {
    queue: VecDeque<usize>,
    queued: Vec<bool>,
}

impl Searcher {
    fn new(n: usize) -> Self {
        Self {
            queue: VecDeque::with_capacity(n),
            queued: vec![false; n],
        }
    }

    fn activate(&mut self, c: usize) {
        if !self.queued[c] {
            self.queued[c] = true;
            self.queue.push_back(c);
        }
    }

    /// Processes the queue until empty; returns the number of applied moves.
    fn run(&mut self, tour: &mut Tour, d: &Matrix) -> usize {
        let mut moves = 0;
        while let Some(a) = self.queue.pop_front() {
            self.queued[a] = false;
            if let Some(touched) = improve_node(tour, d, a) {
                moves += 1;
                for c in touched {
                    self.activate(c);
                }
            }
        }
        moves
    }
}

/// Applies the first improving 2-opt or relocate move involving `a`.
fn improve_node(tour: &mut Tour, d: &Matrix, a: usize) -> Option<[usize; 6]> {
    let n = tour.order.len();
    if n < 4 {
        return None;
    }
    let an = tour.next(a);
    let ap = tour.prev(a);
    let row = d.row(a);
    // 2-opt on the edge leaving a
    let base = row[an];
    for c in 0..n {
        if c == a || c == an {
            continue;
        }
        let cn = tour.next(c);
        if cn == a {
            continue;
        }
        let delta = row[c] + d[(an, cn)] - base - d[(c, cn)];
        if delta < -EPS {
            tour.two_opt(a, c);
            return Some([a, an, c, cn, a, a]);
        }
    }
    // 2-opt on the edge entering a
    let base = row[ap];
    for c in 0..n {
        if c == a || c == ap {
            continue;
        }
        let cp = tour.prev(c);
        if cp == a {
            continue;
        }
        let delta = row[c] + d[(ap, cp)] - base - d[(cp, c)];
        if delta < -EPS {
            tour.two_opt(cp, ap);
            return Some([a, ap, c, cp, a, a]);
        }
    }
    // relocate a between u and next u
    let removal = row[ap] + row[an] - d[(ap, an)];
    for u in 0..n {
        let v = tour.next(u);
        if u == a || v == a {
            continue;
        }
        let insertion = row[u] + row[v] - d[(u, v)];
        if insertion - removal < -EPS {
            tour.relocate(a, u);
            return Some([a, ap, an, u, v, a]);
        }
    }
    None
}

/// Runs local search to a local optimum under `dist`, starting with every
/// node active. Returns the number of applied moves.
pub fn local_search(dist: &Matrix, tour: &mut Vec<usize>) -> usize {
    let n = tour.len();
    let mut t = Tour::new(std::mem::take(tour));
    let mut s = Searcher::new(n);
    for &c in &t.order {
        s.activate(c);
    }
    let moves = s.run(&mut t, dist);
    *tour = t.order;
    moves
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlsOutcome {
    pub best: Solution,
    /// True-objective best after each completed iteration.
    pub best_so_far: Vec<f64>,
    pub iterations: usize,
}

/// GLS from a nearest-neighbour tour rooted at node 0.
pub fn run_gls(
    tsp: &TspInstance,
    indicator: &Matrix,
    params: &GlsParams,
    optimum: Option<f64>,
) -> Result<GlsOutcome> {
    let start = nearest_neighbour_tour(tsp, 0)?;
    let start = start.tour().expect("tour").to_vec();
    run_gls_from(tsp, indicator, params, start, optimum)
}

/// GLS from a given start tour. With `optimum` set the search stops as soon
/// as a tour of that length is found.
pub fn run_gls_from(
    tsp: &TspInstance,
    indicator: &Matrix,
    params: &GlsParams,
    start: Vec<usize>,
    optimum: Option<f64>,
) -> Result<GlsOutcome> {
    params.validate()?;
    let n = tsp.len();
    if indicator.rows() != n || indicator.cols() != n {
        return Err(Error::Shape {
            expected: format!("{n}x{n}"),
            got: format!("{}x{}", indicator.rows(), indicator.cols()),
        });
    }
    let mut state = PenaltyState::new(indicator.clone())?;
    let deadline = params
        .time_budget
        .map(|s| Instant::now() + Duration::from_secs_f64(s.max(0.0)));
    let reached = |len: f64| optimum.is_some_and(|opt| len <= opt + 1e-9 * opt.abs().max(1.0));

    let mut guided = tsp.dist.clone();
    let mut tour = Tour::new(start);
    let mut search = Searcher::new(n);
    for c in 0..n {
        search.activate(c);
    }
    search.run(&mut tour, &guided);
    let mut best = tour.order.clone();
    let mut best_len = tour_length(&tsp.dist, &best);
    let k = params.lambda * best_len / n as f64;
    let mut best_so_far = Vec::with_capacity(params.n_iterations);
    let move_cap = params.perturbation_moves * 10 + 10;

    let mut iterations = 0;
    while iterations < params.n_iterations && !reached(best_len) {
        if deadline.is_some_and(|d| Instant::now() >= d) {
            break;
        }
        let mut moves = 0;
        let mut rounds = 0;
        while moves < params.perturbation_moves && rounds < move_cap {
            rounds += 1;
            for (a, b) in state.penalize_step(&tour.order) {
                guided[(a, b)] += k;
                guided[(b, a)] += k;
                search.activate(a);
                search.activate(b);
            }
            moves += search.run(&mut tour, &guided);
        }
        for c in 0..n {
            search.activate(c);
        }
        search.run(&mut tour, &guided);
        let len = tour_length(&tsp.dist, &tour.order);
        if len < best_len - EPS {
            best_len = len;
            best.clone_from(&tour.order);
        }
        best_so_far.push(best_len);
        iterations += 1;
    }
    Ok(GlsOutcome {
        best: Solution {
            payload: Payload::Tour(best),
            objective: best_len,
        },
        best_so_far,
        iterations,
    })
}
