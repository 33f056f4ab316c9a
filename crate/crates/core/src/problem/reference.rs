//! Long-running reference tours for synthetic TSP sets.
//!
//! Iterated local search: 2-opt and or-opt (segments of 1 to 3 nodes) over
//! k-nearest-neighbour candidate lists with a work queue of active nodes,
//! restarted from double-bridge kicks of the walk position. A kicked tour
//! replaces the walk position when it improves on it or lies within `slack`
//! of the best tour seen; the best tour is kept separately. It shares no code with
//! the GLS solver so it can serve as an independent yardstick for it.

use std::collections::VecDeque;

use rand::Rng as _;

use super::{nearest_neighbour_tour, tour_length, Payload, Solution, TspInstance};
use crate::matrix::Matrix;
use crate::rng;

const EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceParams {
    pub kicks: usize,
    pub neighbours: usize,
    pub seed: u64,
    /// Kicked tours within this relative distance of the best are accepted
    /// as the new walk position (0 = accept improvements only).
    pub slack: f64,
}

impl Default for ReferenceParams {
    fn default() -> Self {
        Self {
            kicks: 20000,
            neighbours: 12,
            seed: 0,
            slack: 0.01,
        }
    }
}

/// Best tour found by the iterated local search.
pub fn reference_tour(tsp: &TspInstance, params: &ReferenceParams) -> Solution {
    let n = tsp.len();
    let start = nearest_neighbour_tour(tsp, 0).expect("node 0 exists");
    let start = start.tour().expect("tour payload").to_vec();
    let nb = neighbour_lists(&tsp.dist, params.neighbours);
    let mut rng = rng::seeded(params.seed);
    let mut best = Tour::new(start);
    best.optimise(&tsp.dist, &nb, (0..n).collect());
    let mut best_len = tour_length(&tsp.dist, &best.order);

    let kicks = if n >= 8 { params.kicks } else { 0 };
    let mut cur = best.clone();
    let mut cur_len = best_len;
    for _ in 0..kicks {
        let mut cand = cur.clone();
        let touched = cand.double_bridge(&mut rng);
        cand.optimise(&tsp.dist, &nb, touched);
        let len = tour_length(&tsp.dist, &cand.order);
        if len < best_len - EPS {
            best = cand.clone();
            best_len = len;
        }
        if len < cur_len - EPS || len <= best_len * (1.0 + params.slack) {
            cur = cand;
            cur_len = len;
        }
    }
    Solution {
        payload: Payload::Tour(best.order),
        objective: best_len,
    }
}

fn neighbour_lists(dist: &Matrix, k: usize) -> Vec<Vec<usize>> {
    let n = dist.rows();
    (0..n)
        .map(|i| {
            let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| dist[(i, a)].total_cmp(&dist[(i, b)]).then(a.cmp(&b)));
            others.truncate(k.max(1));
            others
        })
        .collect()
}

#[derive(Clone)]
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

    fn n(&self) -> usize {
        self.order.len()
    }

    fn succ(&self, c: usize) -> usize {
        self.order[(self.pos[c] + 1) % self.n()]
    }

    fn pred(&self, c: usize) -> usize {
        self.order[(self.pos[c] + self.n() - 1) % self.n()]
    }

    fn reverse_positions(&mut self, mut i: usize, mut j: usize) {
        while i < j {
            self.order.swap(i, j);
            self.pos[self.order[i]] = i;
            self.pos[self.order[j]] = j;
            i += 1;
            j -= 1;
        }
    }

    /// Replaces edges (a,b) and (c,d), with b = succ(a) and d = succ(c), by
    /// (a,c) and (b,d).
    fn two_opt_move(&mut self, a: usize, b: usize, c: usize, d: usize) {
        let (pb, pc) = (self.pos[b], self.pos[c]);
        if pb <= pc {
            self.reverse_positions(pb, pc);
        } else {
            self.reverse_positions(self.pos[d], self.pos[a]);
        }
    }

    fn double_bridge(&mut self, rng: &mut rng::Rng) -> Vec<usize> {
        let n = self.n();
        let mut cuts = [0usize; 3];
        loop {
            for c in cuts.iter_mut() {
                *c = rng.gen_range(1..n);
            }
            cuts.sort_unstable();
            if cuts[0] < cuts[1] && cuts[1] < cuts[2] {
                break;
            }
        }
        let [p1, p2, p3] = cuts;
        let o = &self.order;
        let touched = vec![
            o[0],
            o[p1 - 1],
            o[p1],
            o[p2 - 1],
            o[p2],
            o[p3 - 1],
            o[p3],
            o[n - 1],
        ];
        let mut next = Vec::with_capacity(n);
        next.extend_from_slice(&o[..p1]);
        next.extend_from_slice(&o[p2..p3]);
        next.extend_from_slice(&o[p1..p2]);
        next.extend_from_slice(&o[p3..]);
        *self = Tour::new(next);
        touched
    }

    fn optimise(&mut self, dist: &Matrix, nb: &[Vec<usize>], seeds: Vec<usize>) {
        let n = self.n();
        let mut queued = vec![false; n];
        let mut queue = VecDeque::new();
        for c in seeds {
            if !queued[c] {
                queued[c] = true;
                queue.push_back(c);
            }
        }
        while let Some(a) = queue.pop_front() {
            queued[a] = false;
            let touched = self
                .try_two_opt(dist, nb, a)
                .or_else(|| self.try_or_opt(dist, nb, a));
            if let Some(cities) = touched {
                for c in cities {
                    if !queued[c] {
                        queued[c] = true;
                        queue.push_back(c);
                    }
                }
            }
        }
    }

    fn try_two_opt(&mut self, dist: &Matrix, nb: &[Vec<usize>], a: usize) -> Option<Vec<usize>> {
        let succ_a = self.succ(a);
        for &c in &nb[a] {
            let g = dist[(a, succ_a)] - dist[(a, c)];
            if g <= EPS {
                break;
            }
            let succ_c = self.succ(c);
            if c == succ_a || succ_c == a {
                continue;
            }
            if g + dist[(c, succ_c)] - dist[(succ_a, succ_c)] > EPS {
                self.two_opt_move(a, succ_a, c, succ_c);
                return Some(vec![a, succ_a, c, succ_c]);
            }
        }
        let pred_a = self.pred(a);
        for &c in &nb[a] {
            let g = dist[(pred_a, a)] - dist[(a, c)];
            if g <= EPS {
                break;
            }
            let pred_c = self.pred(c);
            if c == pred_a || pred_c == a {
                continue;
            }
            if g + dist[(pred_c, c)] - dist[(pred_a, pred_c)] > EPS {
                self.two_opt_move(pred_a, a, pred_c, c);
                return Some(vec![a, pred_a, c, pred_c]);
            }
        }
        None
    }

    fn try_or_opt(&mut self, dist: &Matrix, nb: &[Vec<usize>], a: usize) -> Option<Vec<usize>> {
        let n = self.n();
        for len in 1..=3usize {
            if n < len + 3 {
                break;
            }
            let mut seg = Vec::with_capacity(len);
            let mut c = a;
            for _ in 0..len {
                seg.push(c);
                c = self.succ(c);
            }
            let (s0, s1) = (seg[0], seg[len - 1]);
            let p = self.pred(s0);
            let nx = self.succ(s1);
            let removed = dist[(p, s0)] + dist[(s1, nx)] - dist[(p, nx)];
            if removed <= EPS {
                continue;
            }
            let mut best: Option<(f64, usize, bool)> = None;
            for &end in &[s0, s1] {
                for &c in &nb[end] {
                    if seg.contains(&c) {
                        continue;
                    }
                    for u in [c, self.pred(c)] {
                        let v = self.succ(u);
                        if seg.contains(&u) || seg.contains(&v) {
                            continue;
                        }
                        let fwd = dist[(u, s0)] + dist[(s1, v)] - dist[(u, v)];
                        let rev = dist[(u, s1)] + dist[(s0, v)] - dist[(u, v)];
                        for (cost, reversed) in [(fwd, false), (rev, true)] {
                            let gain = removed - cost;
                            if gain > EPS && best.is_none_or(|(g, _, _)| gain > g) {
                                best = Some((gain, u, reversed));
                            }
                        }
                    }
                }
            }
            if let Some((_, u, reversed)) = best {
                let v = self.succ(u);
                let mut next = Vec::with_capacity(n);
                let mut c = nx;
                for _ in 0..n - len {
                    next.push(c);
                    if c == u {
                        if reversed {
                            next.extend(seg.iter().rev());
                        } else {
                            next.extend(seg.iter());
                        }
                    }
                    c = self.succ(c);
                    while seg.contains(&c) {
                        c = self.succ(c);
                    }
                }
                *self = Tour::new(next);
                return Some(vec![p, nx, s0, s1, u, v]);
            }
        }
        None
    }
}
