//! The five benchmark problems: instance types, solutions, objectives and
//! feasibility checks.

mod exact;
mod generate;
mod instance_set;
mod nn;
pub mod reference;
pub mod tsplib;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use exact::{brute_force_optimum, exact_limit};
pub use generate::{
    generate_instance, generate_instance_with, instance_seed, op_max_length, DepotPlacement,
    GeneratorOptions, BPP_CAPACITY, CVRP_CAPACITY, MKP_DEFAULT_DIMS,
};
pub use instance_set::{InstanceSet, INSTANCE_SET_FORMAT};
pub use nn::{nearest_neighbour_tour, tour_length};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Tsp,
    Cvrp,
    Op,
    Mkp,
    Bpp,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 5] = [Self::Tsp, Self::Cvrp, Self::Op, Self::Mkp, Self::Bpp];

    pub fn direction(self) -> Direction {
        match self {
            Self::Tsp | Self::Cvrp | Self::Bpp => Direction::Minimize,
            Self::Op | Self::Mkp => Direction::Maximize,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Tsp => "tsp",
            Self::Cvrp => "cvrp",
            Self::Op => "op",
            Self::Mkp => "mkp",
            Self::Bpp => "bpp",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tsp" => Ok(Self::Tsp),
            "cvrp" => Ok(Self::Cvrp),
            "op" => Ok(Self::Op),
            "mkp" => Ok(Self::Mkp),
            "bpp" => Ok(Self::Bpp),
            other => Err(Error::Config(format!("unknown problem kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Minimize,
    Maximize,
}

impl Direction {
    /// True when `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Self::Minimize => a < b,
            Self::Maximize => a > b,
        }
    }

    /// Maps an objective to a value that is always minimized.
    pub fn to_minimized(self, objective: f64) -> f64 {
        match self {
            Self::Minimize => objective,
            Self::Maximize => -objective,
        }
    }

    pub fn worst(self) -> f64 {
        match self {
            Self::Minimize => f64::INFINITY,
            Self::Maximize => f64::NEG_INFINITY,
        }
    }
}

/// Symmetric TSP over points in the plane.
#[derive(Debug, Clone, PartialEq)]
pub struct TspInstance {
    pub coords: Vec<[f64; 2]>,
    pub dist: Matrix,
    pub name: Option<String>,
}

impl TspInstance {
    /// Exact Euclidean distances.
    pub fn from_coords(coords: Vec<[f64; 2]>) -> Result<Self> {
        if coords.len() < 3 {
            return Err(Error::Config(format!(
                "a TSP instance needs at least 3 nodes, got {}",
                coords.len()
            )));
        }
        let dist = Matrix::euclidean(&coords);
        Ok(Self {
            coords,
            dist,
            name: None,
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

/// CVRP with the depot at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct CvrpInstance {
    pub coords: Vec<[f64; 2]>,
    pub dist: Matrix,
    pub demands: Vec<u32>,
    pub capacity: u32,
}

impl CvrpInstance {
    pub fn new(coords: Vec<[f64; 2]>, demands: Vec<u32>, capacity: u32) -> Result<Self> {
        if coords.len() < 2 || coords.len() != demands.len() {
            return Err(Error::Config(
                "CVRP needs a depot plus at least one customer, with one demand per node".into(),
            ));
        }
        if demands[0] != 0 {
            return Err(Error::Config("depot demand must be zero".into()));
        }
        if capacity == 0 || demands.iter().any(|&d| d > capacity) {
            return Err(Error::Config(
                "every demand must fit the vehicle capacity".into(),
            ));
        }
        let dist = Matrix::euclidean(&coords);
        Ok(Self {
            coords,
            dist,
            demands,
            capacity,
        })
    }

    /// Number of customers (excluding the depot).
    pub fn customers(&self) -> usize {
        self.coords.len() - 1
    }
}

/// Orienteering problem with the depot at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct OpInstance {
    pub coords: Vec<[f64; 2]>,
    pub dist: Matrix,
    pub prize: Vec<f64>,
    pub maxlen: f64,
}

impl OpInstance {
    pub fn new(coords: Vec<[f64; 2]>, prize: Vec<f64>, maxlen: f64) -> Result<Self> {
        if coords.len() < 2 || coords.len() != prize.len() {
            return Err(Error::Config(
                "OP needs a depot plus at least one node, with one prize per node".into(),
            ));
        }
        if prize[0] != 0.0 || prize.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Config(
                "OP prizes must be finite, >= 0, with depot prize 0".into(),
            ));
        }
        if !(maxlen > 0.0 && maxlen.is_finite()) {
            return Err(Error::Config("OP length budget must be positive".into()));
        }
        let dist = Matrix::euclidean(&coords);
        Ok(Self {
            coords,
            dist,
            prize,
            maxlen,
        })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

/// Multi-dimensional knapsack: `weight` is n×m, `constraint` has length m.
#[derive(Debug, Clone, PartialEq)]
pub struct MkpInstance {
    pub prize: Vec<f64>,
    pub weight: Matrix,
    pub constraint: Vec<f64>,
}

impl MkpInstance {
    pub fn new(prize: Vec<f64>, weight: Matrix, constraint: Vec<f64>) -> Result<Self> {
        if prize.is_empty() || weight.rows() != prize.len() || weight.cols() != constraint.len() {
            return Err(Error::Config("MKP shapes disagree".into()));
        }
        Ok(Self {
            prize,
            weight,
            constraint,
        })
    }

    pub fn items(&self) -> usize {
        self.prize.len()
    }

    pub fn dims(&self) -> usize {
        self.constraint.len()
    }
}

/// One-dimensional bin packing.
#[derive(Debug, Clone, PartialEq)]
pub struct BppInstance {
    pub sizes: Vec<u32>,
    pub capacity: u32,
}

impl BppInstance {
    pub fn new(sizes: Vec<u32>, capacity: u32) -> Result<Self> {
        if sizes.is_empty() || capacity == 0 || sizes.iter().any(|&s| s == 0 || s > capacity) {
            return Err(Error::Config(
                "BPP needs at least one item and 0 < size <= capacity".into(),
            ));
        }
        Ok(Self { sizes, capacity })
    }

    pub fn items(&self) -> usize {
        self.sizes.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Instance {
    Tsp(TspInstance),
    Cvrp(CvrpInstance),
    Op(OpInstance),
    Mkp(MkpInstance),
    Bpp(BppInstance),
}

impl Instance {
    pub fn kind(&self) -> ProblemKind {
        match self {
            Self::Tsp(_) => ProblemKind::Tsp,
            Self::Cvrp(_) => ProblemKind::Cvrp,
            Self::Op(_) => ProblemKind::Op,
            Self::Mkp(_) => ProblemKind::Mkp,
            Self::Bpp(_) => ProblemKind::Bpp,
        }
    }

    /// Number of heuristic rows: nodes (incl. depot) for routing problems,
    /// items for MKP/BPP.
    pub fn nodes(&self) -> usize {
        match self {
            Self::Tsp(t) => t.len(),
            Self::Cvrp(c) => c.coords.len(),
            Self::Op(o) => o.len(),
            Self::Mkp(m) => m.items(),
            Self::Bpp(b) => b.items(),
        }
    }

    /// Size as passed to the generator (customers for CVRP).
    pub fn size(&self) -> usize {
        match self {
            Self::Cvrp(c) => c.customers(),
            _ => self.nodes(),
        }
    }

    pub fn direction(&self) -> Direction {
        self.kind().direction()
    }

    pub fn as_tsp(&self) -> Option<&TspInstance> {
        match self {
            Self::Tsp(t) => Some(t),
            _ => None,
        }
    }
}

/// Kind-tagged solution content. Depots are implicit: CVRP routes and OP
/// routes list only the non-depot nodes they visit, in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    /// Closed tour as a node permutation.
    Tour(Vec<usize>),
    /// Customer sequences; each route starts and ends at the depot.
    Routes(Vec<Vec<usize>>),
    /// Visited nodes between leaving and returning to the depot.
    OpRoute(Vec<usize>),
    /// Selected item indices.
    Items(Vec<usize>),
    /// Bin index for every item.
    Bins(Vec<usize>),
}

impl Payload {
    pub fn kind(&self) -> ProblemKind {
        match self {
            Self::Tour(_) => ProblemKind::Tsp,
            Self::Routes(_) => ProblemKind::Cvrp,
            Self::OpRoute(_) => ProblemKind::Op,
            Self::Items(_) => ProblemKind::Mkp,
            Self::Bins(_) => ProblemKind::Bpp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub payload: Payload,
    pub objective: f64,
}

impl Solution {
    /// Wraps a payload together with its recomputed objective.
    pub fn evaluate(instance: &Instance, payload: Payload) -> Result<Self> {
        let objective = objective_of(instance, &payload)?;
        Ok(Self { payload, objective })
    }

    pub fn tour(&self) -> Option<&[usize]> {
        match &self.payload {
            Payload::Tour(t) => Some(t),
            _ => None,
        }
    }
}

fn check_index(idx: usize, n: usize) -> Result<()> {
    if idx < n {
        Ok(())
    } else {
        Err(Error::InvalidSolution(format!(
            "index {idx} out of range 0..{n}"
        )))
    }
}

fn route_length(dist: &Matrix, route: &[usize]) -> f64 {
    match (route.first(), route.last()) {
        (Some(&first), Some(&last)) => {
            let inner: f64 = route.windows(2).map(|w| dist[(w[0], w[1])]).sum();
            dist[(0, first)] + inner + dist[(last, 0)]
        }
        _ => 0.0,
    }
}

/// Objective value of a payload: tour length (TSP, CVRP), collected prize
/// (OP, MKP) or number of bins used (BPP).
pub fn objective_of(instance: &Instance, payload: &Payload) -> Result<f64> {
    match (instance, payload) {
        (Instance::Tsp(t), Payload::Tour(tour)) => {
            for &v in tour {
                check_index(v, t.len())?;
            }
            Ok(tour_length(&t.dist, tour))
        }
        (Instance::Cvrp(c), Payload::Routes(routes)) => {
            let n = c.coords.len();
            let mut total = 0.0;
            for route in routes {
                for &v in route {
                    check_index(v, n)?;
                }
                total += route_length(&c.dist, route);
            }
            Ok(total)
        }
        (Instance::Op(o), Payload::OpRoute(route)) => {
            let mut total = 0.0;
            for &v in route {
                check_index(v, o.len())?;
                total += o.prize[v];
            }
            Ok(total)
        }
        (Instance::Mkp(m), Payload::Items(items)) => {
            let mut total = 0.0;
            for &i in items {
                check_index(i, m.items())?;
                total += m.prize[i];
            }
            Ok(total)
        }
        (Instance::Bpp(b), Payload::Bins(bins)) => {
            if bins.len() != b.items() {
                return Err(Error::InvalidSolution(format!(
                    "bin assignment covers {} of {} items",
                    bins.len(),
                    b.items()
                )));
            }
            let mut used: Vec<usize> = bins.clone();
            used.sort_unstable();
            used.dedup();
            Ok(used.len() as f64)
        }
        (inst, payload) => Err(Error::InvalidSolution(format!(
            "{} solution given for a {} instance",
            payload.kind(),
            inst.kind()
        ))),
    }
}

/// Objective of a full solution (recomputed from its payload).
pub fn objective(instance: &Instance, solution: &Solution) -> Result<f64> {
    objective_of(instance, &solution.payload)
}

/// One violated constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    KindMismatch {
        expected: ProblemKind,
        got: ProblemKind,
    },
    IndexOutOfRange {
        index: usize,
    },
    DuplicateVisit {
        node: usize,
    },
    MissingNode {
        node: usize,
    },
    DepotInRoute {
        route: usize,
    },
    CapacityOverflow {
        route: usize,
        load: u64,
        capacity: u32,
    },
    LengthBudgetExceeded {
        length: f64,
        maxlen: f64,
    },
    KnapsackOverflow {
        dim: usize,
        load: f64,
        capacity: f64,
    },
    BinOverflow {
        bin: usize,
        load: u64,
        capacity: u32,
    },
    ObjectiveMismatch {
        stated: f64,
        recomputed: f64,
    },
}

/// All constraint violations of a solution; empty iff feasible.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub violations: Vec<Violation>,
}

impl ValidityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

const OBJECTIVE_RTOL: f64 = 1e-9;

/// Checks every constraint of `solution` against `instance`.
pub fn validate_solution(instance: &Instance, solution: &Solution) -> ValidityReport {
    let mut v = Vec::new();
    validate_payload_into(instance, &solution.payload, &mut v);
    if v.is_empty() {
        if let Ok(recomputed) = objective_of(instance, &solution.payload) {
            let scale = recomputed.abs().max(1.0);
            if (recomputed - solution.objective).abs() > OBJECTIVE_RTOL * scale {
                v.push(Violation::ObjectiveMismatch {
                    stated: solution.objective,
                    recomputed,
                });
            }
        }
    }
    ValidityReport { violations: v }
}

/// Feasibility of a bare payload (no objective consistency check).
pub fn validate_payload(instance: &Instance, payload: &Payload) -> ValidityReport {
    let mut v = Vec::new();
    validate_payload_into(instance, payload, &mut v);
    ValidityReport { violations: v }
}

fn mark_visits(
    nodes: impl IntoIterator<Item = usize>,
    seen: &mut [bool],
    out: &mut Vec<Violation>,
) {
    for node in nodes {
        if node >= seen.len() {
            out.push(Violation::IndexOutOfRange { index: node });
        } else if seen[node] {
            out.push(Violation::DuplicateVisit { node });
        } else {
            seen[node] = true;
        }
    }
}

fn validate_payload_into(instance: &Instance, payload: &Payload, out: &mut Vec<Violation>) {
    match (instance, payload) {
        (Instance::Tsp(t), Payload::Tour(tour)) => {
            let mut seen = vec![false; t.len()];
            mark_visits(tour.iter().copied(), &mut seen, out);
            for (node, s) in seen.iter().enumerate() {
                if !s {
                    out.push(Violation::MissingNode { node });
                }
            }
        }
        (Instance::Cvrp(c), Payload::Routes(routes)) => {
            let n = c.coords.len();
            let mut seen = vec![false; n];
            seen[0] = true;
            for (r, route) in routes.iter().enumerate() {
                if route.contains(&0) {
                    out.push(Violation::DepotInRoute { route: r });
                }
                mark_visits(route.iter().copied().filter(|&x| x != 0), &mut seen, out);
                let load: u64 = route
                    .iter()
                    .filter(|&&x| x < n)
                    .map(|&x| u64::from(c.demands[x]))
                    .sum();
                if load > u64::from(c.capacity) {
                    out.push(Violation::CapacityOverflow {
                        route: r,
                        load,
                        capacity: c.capacity,
                    });
                }
            }
            for (node, s) in seen.iter().enumerate() {
                if !s {
                    out.push(Violation::MissingNode { node });
                }
            }
        }
        (Instance::Op(o), Payload::OpRoute(route)) => {
            let mut seen = vec![false; o.len()];
            seen[0] = true;
            if route.contains(&0) {
                out.push(Violation::DepotInRoute { route: 0 });
            }
            mark_visits(route.iter().copied().filter(|&x| x != 0), &mut seen, out);
            if route.iter().all(|&x| x < o.len()) {
                let length = route_length(&o.dist, route);
                if length > o.maxlen {
                    out.push(Violation::LengthBudgetExceeded {
                        length,
                        maxlen: o.maxlen,
                    });
                }
            }
        }
        (Instance::Mkp(m), Payload::Items(items)) => {
            let mut seen = vec![false; m.items()];
            mark_visits(items.iter().copied(), &mut seen, out);
            for dim in 0..m.dims() {
                let load: f64 = items
                    .iter()
                    .filter(|&&i| i < m.items())
                    .map(|&i| m.weight[(i, dim)])
                    .sum();
                if load > m.constraint[dim] {
                    out.push(Violation::KnapsackOverflow {
                        dim,
                        load,
                        capacity: m.constraint[dim],
                    });
                }
            }
        }
        (Instance::Bpp(b), Payload::Bins(bins)) => {
            for item in bins.len()..b.items() {
                out.push(Violation::MissingNode { node: item });
            }
            if bins.len() > b.items() {
                out.push(Violation::IndexOutOfRange {
                    index: bins.len() - 1,
                });
            }
            let mut loads: std::collections::BTreeMap<usize, u64> = Default::default();
            for (item, &bin) in bins.iter().enumerate().take(b.items()) {
                *loads.entry(bin).or_default() += u64::from(b.sizes[item]);
            }
            for (bin, load) in loads {
                if load > u64::from(b.capacity) {
                    out.push(Violation::BinOverflow {
                        bin,
                        load,
                        capacity: b.capacity,
                    });
                }
            }
        }
        (inst, payload) => out.push(Violation::KindMismatch {
            expected: inst.kind(),
            got: payload.kind(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Instance {
        Instance::Tsp(
            TspInstance::from_coords(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap(),
        )
    }

    #[test]
    fn square_perimeter_is_four() {
        let inst = square();
        let sol = Solution::evaluate(&inst, Payload::Tour(vec![0, 1, 2, 3])).unwrap();
        assert_eq!(sol.objective, 4.0);
        assert!(validate_solution(&inst, &sol).is_feasible());
    }

    #[test]
    fn empty_knapsack_is_zero() {
        let inst = Instance::Mkp(
            MkpInstance::new(
                vec![0.5, 0.7],
                Matrix::from_vec(2, 1, vec![0.3, 0.4]),
                vec![0.5],
            )
            .unwrap(),
        );
        assert_eq!(objective_of(&inst, &Payload::Items(vec![])).unwrap(), 0.0);
    }

    #[test]
    fn duplicate_visit_is_reported() {
        let inst = square();
        let report = validate_payload(&inst, &Payload::Tour(vec![0, 1, 1, 3]));
        assert!(report
            .violations
            .contains(&Violation::DuplicateVisit { node: 1 }));
        assert!(report
            .violations
            .contains(&Violation::MissingNode { node: 2 }));
    }

    #[test]
    fn op_budget_violation() {
        let inst = Instance::Op(
            OpInstance::new(
                vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]],
                vec![0.0, 0.5, 0.5],
                2.0,
            )
            .unwrap(),
        );
        let report = validate_payload(&inst, &Payload::OpRoute(vec![1, 2]));
        assert!(matches!(
            report.violations.as_slice(),
            [Violation::LengthBudgetExceeded { .. }]
        ));
        assert!(validate_payload(&inst, &Payload::OpRoute(vec![1])).is_feasible());
    }

    #[test]
    fn cvrp_capacity_violation_at_51() {
        let inst = Instance::Cvrp(
            CvrpInstance::new(
                vec![[0.5, 0.5], [0.1, 0.1], [0.9, 0.9]],
                vec![0, 26, 25],
                50,
            )
            .unwrap(),
        );
        let report = validate_payload(&inst, &Payload::Routes(vec![vec![1, 2]]));
        assert_eq!(
            report.violations,
            vec![Violation::CapacityOverflow {
                route: 0,
                load: 51,
                capacity: 50
            }]
        );
        assert!(validate_payload(&inst, &Payload::Routes(vec![vec![1], vec![2]])).is_feasible());
    }

    #[test]
    fn bin_overflow_and_count() {
        let inst = Instance::Bpp(BppInstance::new(vec![100, 60, 50], 150).unwrap());
        let bad = Payload::Bins(vec![0, 0, 1]);
        assert!(matches!(
            validate_payload(&inst, &bad).violations.as_slice(),
            [Violation::BinOverflow {
                bin: 0,
                load: 160,
                ..
            }]
        ));
        let good = Payload::Bins(vec![0, 1, 1]);
        assert!(validate_payload(&inst, &good).is_feasible());
        assert_eq!(objective_of(&inst, &good).unwrap(), 2.0);
    }

    #[test]
    fn kind_mismatch_is_an_error() {
        let inst = square();
        assert!(matches!(
            objective_of(&inst, &Payload::Items(vec![])),
            Err(Error::InvalidSolution(_))
        ));
        assert!(!validate_payload(&inst, &Payload::Items(vec![])).is_feasible());
    }

    #[test]
    fn objective_mismatch_is_reported() {
        let inst = square();
        let sol = Solution {
            payload: Payload::Tour(vec![0, 1, 2, 3]),
            objective: 3.0,
        };
        assert!(matches!(
            validate_solution(&inst, &sol).violations.as_slice(),
            [Violation::ObjectiveMismatch { .. }]
        ));
    }
}
