use hevo_core::matrix::Matrix;
use hevo_core::problem::{
    brute_force_optimum, generate_instance, nearest_neighbour_tour, validate_payload,
    validate_solution, CvrpInstance, MkpInstance,
};
use hevo_core::{Instance, Payload, ProblemKind};
use proptest::prelude::*;

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for k in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(k);
        for mut p in permutations(&rest) {
            p.insert(0, head);
            out.push(p);
        }
    }
    out
}

/// Every set partition of `items`, as lists of blocks.
fn partitions(items: &[usize]) -> Vec<Vec<Vec<usize>>> {
    let Some((&first, rest)) = items.split_first() else {
        return vec![vec![]];
    };
    let mut out = Vec::new();
    for p in partitions(rest) {
        for b in 0..p.len() {
            let mut q = p.clone();
            q[b].insert(0, first);
            out.push(q);
        }
        let mut q = p;
        q.push(vec![first]);
        out.push(q);
    }
    out
}

fn cvrp_oracle(c: &CvrpInstance) -> f64 {
    let customers: Vec<usize> = (1..c.coords.len()).collect();
    let best_route = |block: &[usize]| -> f64 {
        permutations(block)
            .into_iter()
            .map(|p| {
                let mut len = c.dist[(0, p[0])] + c.dist[(*p.last().unwrap(), 0)];
                for w in p.windows(2) {
                    len += c.dist[(w[0], w[1])];
                }
                len
            })
            .fold(f64::INFINITY, f64::min)
    };
    partitions(&customers)
        .into_iter()
        .filter(|p| {
            p.iter()
                .all(|b| b.iter().map(|&v| c.demands[v]).sum::<u32>() <= c.capacity)
        })
        .map(|p| p.iter().map(|b| best_route(b)).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn cvrp_brute_force_matches_partition_oracle() {
    for seed in 0..12 {
        for n in 1..=6 {
            let inst = generate_instance(ProblemKind::Cvrp, n, 300 + seed).unwrap();
            let Instance::Cvrp(c) = &inst else {
                unreachable!()
            };
            // tighten capacity so partitions matter
            let tight = CvrpInstance::new(c.coords.clone(), c.demands.clone(), 12).unwrap();
            for inst in [inst.clone(), Instance::Cvrp(tight.clone())] {
                let Instance::Cvrp(c) = &inst else {
                    unreachable!()
                };
                let oracle = cvrp_oracle(c);
                let bf = brute_force_optimum(&inst).unwrap();
                assert!(validate_solution(&inst, &bf).is_feasible());
                assert!((bf.objective - oracle).abs() < 1e-9, "seed {seed} n {n}");
            }
        }
    }
}

#[test]
fn one_dimensional_mkp_matches_dynamic_programme() {
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    let mut next = |m: u64| {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state % m
    };
    for _ in 0..100 {
        let n = 1 + next(12) as usize;
        let w: Vec<usize> = (0..n).map(|_| 1 + next(20) as usize).collect();
        let p: Vec<usize> = (0..n).map(|_| 1 + next(50) as usize).collect();
        let cap = next(w.iter().sum::<usize>() as u64 + 1) as usize;
        let mut dp = vec![0usize; cap + 1];
        for i in 0..n {
            for c in (w[i]..=cap).rev() {
                dp[c] = dp[c].max(dp[c - w[i]] + p[i]);
            }
        }
        let inst = Instance::Mkp(
            MkpInstance::new(
                p.iter().map(|&x| x as f64).collect(),
                Matrix::from_vec(n, 1, w.iter().map(|&x| x as f64).collect()),
                vec![cap as f64],
            )
            .unwrap(),
        );
        let bf = brute_force_optimum(&inst).unwrap();
        assert!(validate_solution(&inst, &bf).is_feasible());
        assert_eq!(bf.objective, dp[cap] as f64);
    }
}

#[test]
fn brute_force_bounds_nearest_neighbour() {
    for seed in 0..100 {
        let inst = generate_instance(ProblemKind::Tsp, 8, 700 + seed).unwrap();
        let bf = brute_force_optimum(&inst).unwrap();
        let nn = nearest_neighbour_tour(inst.as_tsp().unwrap(), (seed % 8) as usize).unwrap();
        assert!(bf.objective <= nn.objective + 1e-12);
    }
}

#[test]
fn oversize_brute_force_is_refused() {
    let inst = generate_instance(ProblemKind::Tsp, 11, 1).unwrap();
    assert!(brute_force_optimum(&inst).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn op_prizes_on_grid(seed in any::<u64>(), n in 2usize..80) {
        let Instance::Op(o) = generate_instance(ProblemKind::Op, n, seed).unwrap() else {
            unreachable!()
        };
        prop_assert_eq!(o.prize[0], 0.0);
        for &p in &o.prize[1..] {
            let cents = (p * 100.0).round();
            prop_assert!((p * 100.0 - cents).abs() < 1e-9);
            prop_assert!((1.0..=100.0).contains(&cents));
        }
    }

    #[test]
    fn mkp_constraints_strictly_inside(seed in any::<u64>(), n in 2usize..60) {
        let Instance::Mkp(m) = generate_instance(ProblemKind::Mkp, n, seed).unwrap() else {
            unreachable!()
        };
        for j in 0..m.dims() {
            let col: Vec<f64> = (0..n).map(|i| m.weight[(i, j)]).collect();
            let lo = col.iter().cloned().fold(0.0, f64::max);
            let hi: f64 = col.iter().sum();
            prop_assert!(m.constraint[j] > lo && m.constraint[j] < hi);
        }
    }

    #[test]
    fn tsp_permutations_are_feasible(seed in any::<u64>(), n in 3usize..30, rot in 0usize..30) {
        let inst = generate_instance(ProblemKind::Tsp, n, seed).unwrap();
        let tour: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
        prop_assert!(validate_payload(&inst, &Payload::Tour(tour.clone())).is_feasible());
        let mut dup = tour;
        dup[0] = dup[n - 1];
        prop_assert!(!validate_payload(&inst, &Payload::Tour(dup)).is_feasible());
    }
}
