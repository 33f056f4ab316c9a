//! Exhaustive optimum for small instances (test oracle).

use super::{
    BppInstance, CvrpInstance, Instance, MkpInstance, OpInstance, Payload, ProblemKind, Solution,
    TspInstance,
};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Largest size [`brute_force_optimum`] accepts for `kind` (CVRP counts
/// customers, the others count nodes or items).
pub fn exact_limit(kind: ProblemKind) -> usize {
    match kind {
        ProblemKind::Tsp | ProblemKind::Op | ProblemKind::Bpp => 10,
        ProblemKind::Cvrp => 8,
        ProblemKind::Mkp => 20,
    }
}

/// Exact optimum by exhaustive enumeration.
pub fn brute_force_optimum(instance: &Instance) -> Result<Solution> {
    let kind = instance.kind();
    let limit = exact_limit(kind);
    if instance.size() > limit {
        return Err(Error::SizeLimit {
            kind,
            size: instance.size(),
            limit,
        });
    }
    let payload = match instance {
        Instance::Tsp(t) => tsp(t),
        Instance::Cvrp(c) => cvrp(c),
        Instance::Op(o) => op(o),
        Instance::Mkp(m) => mkp(m),
        Instance::Bpp(b) => bpp(b),
    };
    Solution::evaluate(instance, payload)
}

fn tsp(t: &TspInstance) -> Payload {
    fn dfs(
        d: &Matrix,
        path: &mut Vec<usize>,
        used: &mut [bool],
        len: f64,
        best: &mut (f64, Vec<usize>),
    ) {
        let n = used.len();
        let last = *path.last().unwrap();
        if path.len() == n {
            let total = len + d[(last, path[0])];
            if total < best.0 {
                *best = (total, path.clone());
            }
            return;
        }
        for next in 1..n {
            if used[next] {
                continue;
            }
            let l = len + d[(last, next)];
            if l >= best.0 {
                continue;
            }
            used[next] = true;
            path.push(next);
            dfs(d, path, used, l, best);
            path.pop();
            used[next] = false;
        }
    }
    let n = t.len();
    let mut used = vec![false; n];
    used[0] = true;
    let mut best = (f64::INFINITY, Vec::new());
    dfs(&t.dist, &mut vec![0], &mut used, 0.0, &mut best);
    Payload::Tour(best.1)
}

/// Held-Karp over subsets of `nodes`, all tours leaving from and returning
/// to node 0. Returns per-subset (closed length, order) for every mask.
fn held_karp(dist: &Matrix, nodes: &[usize]) -> (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<usize>>) {
    let k = nodes.len();
    let full = 1usize << k;
    let mut dp = vec![vec![f64::INFINITY; k]; full];
    let mut parent = vec![vec![usize::MAX; k]; full];
    for (j, &v) in nodes.iter().enumerate() {
        dp[1 << j][j] = dist[(0, v)];
    }
    for mask in 1..full {
        for last in 0..k {
            if mask & (1 << last) == 0 || !dp[mask][last].is_finite() {
                continue;
            }
            let base = dp[mask][last];
            for next in 0..k {
                if mask & (1 << next) != 0 {
                    continue;
                }
                let m2 = mask | (1 << next);
                let cand = base + dist[(nodes[last], nodes[next])];
                if cand < dp[m2][next] {
                    dp[m2][next] = cand;
                    parent[m2][next] = last;
                }
            }
        }
    }
    let mut closed = vec![0.0; full];
    for (mask, c) in closed.iter_mut().enumerate().skip(1) {
        *c = (0..k)
            .filter(|&l| mask & (1 << l) != 0)
            .map(|l| dp[mask][l] + dist[(nodes[l], 0)])
            .fold(f64::INFINITY, f64::min);
    }
    (closed, dp, parent)
}

fn reconstruct(
    dist: &Matrix,
    nodes: &[usize],
    dp: &[Vec<f64>],
    parent: &[Vec<usize>],
    mask: usize,
) -> Vec<usize> {
    if mask == 0 {
        return Vec::new();
    }
    let k = nodes.len();
    let mut last = (0..k)
        .filter(|&l| mask & (1 << l) != 0)
        .min_by(|&a, &b| {
            (dp[mask][a] + dist[(nodes[a], 0)]).total_cmp(&(dp[mask][b] + dist[(nodes[b], 0)]))
        })
        .unwrap();
    let mut m = mask;
    let mut rev = Vec::new();
    loop {
        rev.push(nodes[last]);
        let p = parent[m][last];
        m &= !(1 << last);
        if p == usize::MAX {
            break;
        }
        last = p;
    }
    rev.reverse();
    rev
}

fn op(o: &OpInstance) -> Payload {
    let nodes: Vec<usize> = (1..o.len()).collect();
    let (closed, dp, parent) = held_karp(&o.dist, &nodes);
    let mut best_mask = 0usize;
    let mut best_prize = 0.0;
    for (mask, &len) in closed.iter().enumerate().skip(1) {
        if len > o.maxlen {
            continue;
        }
        let prize: f64 = (0..nodes.len())
            .filter(|&j| mask & (1 << j) != 0)
            .map(|j| o.prize[nodes[j]])
            .sum();
        if prize > best_prize {
            best_prize = prize;
            best_mask = mask;
        }
    }
    Payload::OpRoute(reconstruct(&o.dist, &nodes, &dp, &parent, best_mask))
}

fn cvrp(c: &CvrpInstance) -> Payload {
    let nodes: Vec<usize> = (1..c.coords.len()).collect();
    let k = nodes.len();
    let full = 1usize << k;
    let (closed, dp, parent) = held_karp(&c.dist, &nodes);
    let load = |mask: usize| -> u64 {
        (0..k)
            .filter(|&j| mask & (1 << j) != 0)
            .map(|j| u64::from(c.demands[nodes[j]]))
            .sum()
    };
    let mut best = vec![f64::INFINITY; full];
    let mut choice = vec![0usize; full];
    best[0] = 0.0;
    for mask in 1..full {
        let low = mask & mask.wrapping_neg();
        // enumerate submasks containing the lowest set bit
        let rest = mask ^ low;
        let mut sub = rest;
        loop {
            let route = sub | low;
            if load(route) <= u64::from(c.capacity) {
                let cand = closed[route] + best[mask ^ route];
                if cand < best[mask] {
                    best[mask] = cand;
                    choice[mask] = route;
                }
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
    }
    let mut routes = Vec::new();
    let mut m = full - 1;
    while m != 0 {
        let r = choice[m];
        routes.push(reconstruct(&c.dist, &nodes, &dp, &parent, r));
        m ^= r;
    }
    Payload::Routes(routes)
}

fn mkp(m: &MkpInstance) -> Payload {
    struct Search<'a> {
        m: &'a MkpInstance,
        suffix_prize: Vec<f64>,
        load: Vec<f64>,
        chosen: Vec<usize>,
        best: (f64, Vec<usize>),
    }
    impl Search<'_> {
        fn go(&mut self, i: usize, prize: f64) {
            if prize > self.best.0 {
                self.best = (prize, self.chosen.clone());
            }
            if i == self.m.items() || prize + self.suffix_prize[i] <= self.best.0 {
                return;
            }
            let fits = (0..self.m.dims())
                .all(|d| self.load[d] + self.m.weight[(i, d)] <= self.m.constraint[d]);
            if fits {
                for d in 0..self.m.dims() {
                    self.load[d] += self.m.weight[(i, d)];
                }
                self.chosen.push(i);
                self.go(i + 1, prize + self.m.prize[i]);
                self.chosen.pop();
                for d in 0..self.m.dims() {
                    self.load[d] -= self.m.weight[(i, d)];
                }
            }
            self.go(i + 1, prize);
        }
    }
    let n = m.items();
    let mut suffix_prize = vec![0.0; n + 1];
    for i in (0..n).rev() {
        suffix_prize[i] = suffix_prize[i + 1] + m.prize[i];
    }
    let mut s = Search {
        m,
        suffix_prize,
        load: vec![0.0; m.dims()],
        chosen: Vec::new(),
        best: (0.0, Vec::new()),
    };
    s.go(0, 0.0);
    Payload::Items(s.best.1)
}

fn bpp(b: &BppInstance) -> Payload {
    let n = b.items();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| b.sizes[y].cmp(&b.sizes[x]).then(x.cmp(&y)));
    fn go(
        b: &BppInstance,
        order: &[usize],
        pos: usize,
        loads: &mut Vec<u32>,
        assign: &mut [usize],
        best: &mut (usize, Vec<usize>),
    ) {
        if loads.len() >= best.0 {
            return;
        }
        if pos == order.len() {
            *best = (loads.len(), assign.to_vec());
            return;
        }
        let item = order[pos];
        let size = b.sizes[item];
        for bin in 0..loads.len() {
            if loads[bin] + size <= b.capacity {
                loads[bin] += size;
                assign[item] = bin;
                go(b, order, pos + 1, loads, assign, best);
                loads[bin] -= size;
            }
        }
        loads.push(size);
        assign[item] = loads.len() - 1;
        go(b, order, pos + 1, loads, assign, best);
        loads.pop();
    }
    let mut best = (n + 1, Vec::new());
    go(b, &order, 0, &mut Vec::new(), &mut vec![0; n], &mut best);
    Payload::Bins(best.1)
}

#[cfg(test)]
mod tests {
    use super::super::{generate_instance, validate_solution};
    use super::*;

    #[test]
    fn square_optimum() {
        let inst = Instance::Tsp(
            TspInstance::from_coords(vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]).unwrap(),
        );
        let sol = brute_force_optimum(&inst).unwrap();
        assert!((sol.objective - 4.0).abs() < 1e-12);
    }

    #[test]
    fn full_bins_need_one_bin_each() {
        let inst = Instance::Bpp(BppInstance::new(vec![150; 6], 150).unwrap());
        assert_eq!(brute_force_optimum(&inst).unwrap().objective, 6.0);
    }

    #[test]
    fn size_limits() {
        let inst = generate_instance(ProblemKind::Tsp, 11, 0).unwrap();
        assert!(matches!(
            brute_force_optimum(&inst),
            Err(Error::SizeLimit { limit: 10, .. })
        ));
        let inst = generate_instance(ProblemKind::Cvrp, 9, 0).unwrap();
        assert!(brute_force_optimum(&inst).is_err());
    }

    #[test]
    fn optima_are_feasible() {
        for kind in ProblemKind::ALL {
            for seed in 0..5 {
                let size = match kind {
                    ProblemKind::Mkp => 12,
                    ProblemKind::Cvrp => 6,
                    _ => 8,
                };
                let inst = generate_instance(kind, size, seed).unwrap();
                let sol = brute_force_optimum(&inst).unwrap();
                let report = validate_solution(&inst, &sol);
                assert!(report.is_feasible(), "{kind} seed {seed}: {report:?}");
            }
        }
    }
}
