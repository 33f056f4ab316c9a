//! Deterministic tour construction with a pluggable next-node selector.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::par;
use crate::problem::{validate_payload, Instance, Payload, Solution, TspInstance};

/// Chooses the next node of a tour under construction.
///
/// `unvisited` is sorted ascending and never contains `current`. The
/// destination is the start node the tour will return to.
pub trait NextNodeSelector: Sync {
    fn select(
        &self,
        current: usize,
        destination: usize,
        unvisited: &[usize],
        dist: &Matrix,
    ) -> usize;
}

impl<S: NextNodeSelector + ?Sized> NextNodeSelector for &S {
    fn select(
        &self,
        current: usize,
        destination: usize,
        unvisited: &[usize],
        dist: &Matrix,
    ) -> usize {
        (**self).select(current, destination, unvisited, dist)
    }
}

/// Closest unvisited node; ties go to the lowest index.
#[derive(Debug, Clone, Copy, Default)]
pub struct NearestNeighbourSelector;

impl NextNodeSelector for NearestNeighbourSelector {
    fn select(&self, current: usize, _dest: usize, unvisited: &[usize], dist: &Matrix) -> usize {
        let row = dist.row(current);
        let mut best = unvisited[0];
        for &j in &unvisited[1..] {
            if row[j] < row[best] {
                best = j;
            }
        }
        best
    }
}

/// Scores each candidate by a weighted mix of its distance to the current
/// node, the mean and population standard deviation of its distances to the
/// other unvisited nodes, and its distance to the destination; the lowest
/// score wins:
///
/// `w_current*d(cur,v) - w_mean*mean_v + w_std*std_v - w_dest*d(dest,v)`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatisticalSelector {
    pub w_current: f64,
    pub w_mean: f64,
    pub w_std: f64,
    pub w_dest: f64,
}

impl StatisticalSelector {
    /// Weights of the best evolved constructive heuristic.
    pub fn evolved() -> Self {
        Self {
            w_current: 0.4,
            w_mean: 0.25,
            w_std: 0.25,
            w_dest: 0.1,
        }
    }

    /// Weights of the seed heuristic the evolution starts from.
    pub fn seed() -> Self {
        Self {
            w_current: 0.4,
            w_mean: 0.3,
            w_std: 0.2,
            w_dest: 0.1,
        }
    }

    fn score(
        &self,
        current: usize,
        dest: usize,
        node: usize,
        unvisited: &[usize],
        dist: &Matrix,
    ) -> f64 {
        let row = dist.row(node);
        let m = unvisited.len() - 1;
        let (mean, std) = if m == 0 {
            (0.0, 0.0)
        } else {
            let sum: f64 = unvisited
                .iter()
                .filter(|&&i| i != node)
                .map(|&i| row[i])
                .sum();
            let mean = sum / m as f64;
            let ss: f64 = unvisited
                .iter()
                .filter(|&&i| i != node)
                .map(|&i| (row[i] - mean) * (row[i] - mean))
                .sum();
            (mean, (ss / m as f64).sqrt())
        };
        self.w_current * dist[(current, node)] - self.w_mean * mean + self.w_std * std
            - self.w_dest * dist[(dest, node)]
    }
}

impl NextNodeSelector for StatisticalSelector {
    fn select(&self, current: usize, dest: usize, unvisited: &[usize], dist: &Matrix) -> usize {
        let scores = par::map_slice(unvisited, |&v| {
            self.score(current, dest, v, unvisited, dist)
        });
        let mut best = 0;
        for k in 1..scores.len() {
            if scores[k] < scores[best] {
                best = k;
            }
        }
        unvisited[best]
    }
}

/// Builds a closed tour from `start`, asking `selector` for every step.
pub fn construct_tour(
    tsp: &TspInstance,
    selector: &dyn NextNodeSelector,
    start: usize,
) -> Result<Solution> {
    let n = tsp.len();
    if start >= n {
        return Err(Error::Config(format!(
            "start node {start} out of range 0..{n}"
        )));
    }
    let mut unvisited: Vec<usize> = (0..n).filter(|&j| j != start).collect();
    let mut tour = Vec::with_capacity(n);
    tour.push(start);
    let mut cur = start;
    while !unvisited.is_empty() {
        let next = selector.select(cur, start, &unvisited, &tsp.dist);
        let Ok(k) = unvisited.binary_search(&next) else {
            return Err(Error::InvalidHeuristic(format!(
                "selector returned node {next} at step {}, which is not unvisited",
                tour.len()
            )));
        };
        unvisited.remove(k);
        tour.push(next);
        cur = next;
    }
    let objective = crate::problem::tour_length(&tsp.dist, &tour);
    Ok(Solution {
        payload: Payload::Tour(tour),
        objective,
    })
}

/// Checks a tour produced outside the process (a sandboxed rollout): it must
/// start at `start` and visit every node exactly once.
pub fn revalidate_rollout(tsp: &TspInstance, start: usize, tour: Vec<usize>) -> Result<Solution> {
    if tour.first() != Some(&start) {
        return Err(Error::InvalidHeuristic(format!(
            "rollout does not begin at start node {start}"
        )));
    }
    let inst = Instance::Tsp(tsp.clone());
    let payload = Payload::Tour(tour);
    let report = validate_payload(&inst, &payload);
    if !report.is_feasible() {
        return Err(Error::InvalidHeuristic(format!(
            "rollout is not a tour: {:?}",
            report.violations
        )));
    }
    Solution::evaluate(&inst, payload)
}

/// The three start nodes used for benchmark averages: 0, n/3 and 2n/3.
pub fn benchmark_starts(n: usize) -> [usize; 3] {
    [0, n / 3, 2 * n / 3]
}
