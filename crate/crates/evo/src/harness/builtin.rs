//! In-process runtime for known heuristic sources.
//!
//! Sources are matched after [`normalize_source`]; anything unregistered is an
//! execution error. The shipped table covers every catalog seed, the
//! transcribed fixtures and the nearest-neighbour selector, each reproducing
//! the numpy semantics of its source.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use hevo_core::constructive::{
    construct_tour, NearestNeighbourSelector, NextNodeSelector, StatisticalSelector,
};
use hevo_core::matrix::Matrix;
use hevo_core::TspInstance;

use super::{Arg, ExecFailure, HeuristicRuntime, RawArray};
use crate::catalog::{builtin_task_specs, fixture, Mode, NEAREST_NEIGHBOUR_SELECTOR};

pub type MatrixFn = Arc<dyn Fn(&[Arg]) -> Result<RawArray, ExecFailure> + Send + Sync>;
pub type SelectorFn = Arc<dyn NextNodeSelector + Send + Sync>;

#[derive(Clone)]
enum Entry {
    Matrix(MatrixFn),
    Selector(SelectorFn),
}

/// Registry key for a source: trailing whitespace, blank lines and import
/// lines removed.
pub fn normalize_source(source: &str) -> String {
    source
        .lines()
        .map(str::trim_end)
        .filter(|l| !l.trim().is_empty())
        .filter(|l| {
            !(l.starts_with("import ") || (l.starts_with("from ") && l.contains(" import ")))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Clone, Default)]
pub struct BuiltinRuntime {
    table: HashMap<String, Entry>,
}

impl BuiltinRuntime {
    /// Runtime that knows no sources.
    pub fn empty() -> Self {
        Self::default()
    }

    /// Runtime preloaded with the catalog seeds, the fixtures and the
    /// nearest-neighbour selector.
    pub fn new() -> Self {
        let mut rt = Self::empty();
        for spec in builtin_task_specs() {
            let key = (spec.id.as_str(), spec.mode);
            match key {
                ("tsp_constructive", _) => {
                    rt.register_selector(&spec.seed_function, Arc::new(StatisticalSelector::seed()))
                }
                _ => rt.register_matrix(&spec.seed_function, seed_fn(key.0, key.1)),
            }
            if let Some(src) = fixture(&spec.id, spec.mode) {
                match key {
                    ("tsp_constructive", _) => {
                        rt.register_selector(src, Arc::new(StatisticalSelector::evolved()))
                    }
                    _ => rt.register_matrix(src, fixture_fn(key.0)),
                }
            }
        }
        rt.register_selector(
            NEAREST_NEIGHBOUR_SELECTOR,
            Arc::new(NearestNeighbourSelector),
        );
        rt
    }

    pub fn register_matrix(&mut self, source: &str, f: MatrixFn) {
        self.table
            .insert(normalize_source(source), Entry::Matrix(f));
    }

    pub fn register_selector(&mut self, source: &str, s: SelectorFn) {
        self.table
            .insert(normalize_source(source), Entry::Selector(s));
    }

    pub fn knows(&self, source: &str) -> bool {
        self.table.contains_key(&normalize_source(source))
    }

    fn lookup(&self, source: &str) -> Result<&Entry, ExecFailure> {
        self.table
            .get(&normalize_source(source))
            .ok_or_else(|| ExecFailure::exec("builtin runtime: source is not registered"))
    }
}

fn check_deadline(start: Instant, timeout: Duration) -> Result<(), ExecFailure> {
    if start.elapsed() > timeout {
        Err(ExecFailure::timeout(format!(
            "exceeded {:.1}s",
            timeout.as_secs_f64()
        )))
    } else {
        Ok(())
    }
}

impl HeuristicRuntime for BuiltinRuntime {
    fn matrix(
        &self,
        source: &str,
        _entry: &str,
        args: &[Arg],
        timeout: Duration,
    ) -> Result<RawArray, ExecFailure> {
        let start = Instant::now();
        let out = match self.lookup(source)? {
            Entry::Matrix(f) => f(args)?,
            Entry::Selector(_) => {
                return Err(ExecFailure::exec(
                    "source defines a selector, not a heuristic",
                ))
            }
        };
        check_deadline(start, timeout)?;
        Ok(out)
    }

    fn rollout(
        &self,
        source: &str,
        _entry: &str,
        dist: &Matrix,
        start: usize,
        timeout: Duration,
    ) -> Result<Vec<usize>, ExecFailure> {
        let t0 = Instant::now();
        let Entry::Selector(sel) = self.lookup(source)? else {
            return Err(ExecFailure::exec(
                "source defines a heuristic, not a selector",
            ));
        };
        let tsp = TspInstance {
            coords: vec![[0.0, 0.0]; dist.rows()],
            dist: dist.clone(),
            name: None,
        };
        let sol = construct_tour(&tsp, sel.as_ref(), start)
            .map_err(|e| ExecFailure::exec(e.to_string()))?;
        check_deadline(t0, timeout)?;
        Ok(sol.tour().expect("tour").to_vec())
    }
}

fn array<'a>(args: &'a [Arg], k: usize) -> Result<&'a RawArray, ExecFailure> {
    args.get(k)
        .and_then(Arg::as_array)
        .ok_or_else(|| ExecFailure::exec(format!("argument {k} is not an array")))
}

fn scalar(args: &[Arg], k: usize) -> Result<f64, ExecFailure> {
    args.get(k)
        .and_then(Arg::as_f64)
        .ok_or_else(|| ExecFailure::exec(format!("argument {k} is not a number")))
}

fn square(a: &RawArray) -> Result<(usize, &[f64]), ExecFailure> {
    match a.shape[..] {
        [r, c] if r == c => Ok((r, &a.data)),
        _ => Err(ExecFailure::exec(format!(
            "expected a square matrix, got {:?}",
            a.shape
        ))),
    }
}

fn mat(n: usize, m: usize, data: Vec<f64>) -> RawArray {
    RawArray {
        shape: vec![n, m],
        data,
    }
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn min(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn pstd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

/// `np.percentile` with the default linear method.
fn percentile(v: &[f64], q: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(s.len() - 1);
    let t = pos - lo as f64;
    s[lo] + (s[hi] - s[lo]) * t
}

fn seed_fn(id: &str, mode: Mode) -> MatrixFn {
    match (id, mode) {
        ("tsp_gls", _) => Arc::new(|a| {
            let d = array(a, 0)?;
            square(d)?;
            Ok(d.clone())
        }),
        ("tsp_aco" | "cvrp_aco", Mode::WhiteBox) => Arc::new(|a| {
            let d = array(a, 0)?;
            let (n, v) = square(d)?;
            Ok(mat(n, n, v.iter().map(|x| 1.0 / x).collect()))
        }),
        ("op_aco", Mode::WhiteBox) => Arc::new(|a| {
            let prize = array(a, 0)?;
            let (n, d) = square(array(a, 1)?)?;
            Ok(mat(
                n,
                n,
                (0..n * n).map(|k| prize.data[k % n] / d[k]).collect(),
            ))
        }),
        ("mkp_aco", Mode::WhiteBox) => Arc::new(|a| {
            let prize = array(a, 0)?;
            let w = array(a, 1)?;
            let m = w.shape.get(1).copied().unwrap_or(1);
            let out = prize
                .data
                .iter()
                .enumerate()
                .map(|(i, p)| p / w.data[i * m..(i + 1) * m].iter().sum::<f64>())
                .collect();
            Ok(RawArray::vector(out))
        }),
        ("bpp_aco", Mode::WhiteBox) => Arc::new(|a| {
            let d = array(a, 0)?;
            let n = d.data.len();
            let mx = max(&d.data);
            Ok(mat(n, n, (0..n * n).map(|k| d.data[k % n] / mx).collect()))
        }),
        ("tsp_aco", Mode::BlackBox) => Arc::new(|a| {
            let e = array(a, 0)?;
            Ok(RawArray::vector(vec![1.0; e.shape[0]]))
        }),
        ("cvrp_aco" | "op_aco", Mode::BlackBox) => {
            let k = if id == "op_aco" { 1 } else { 0 };
            Arc::new(move |a| {
                let e = array(a, k)?;
                Ok(RawArray {
                    shape: e.shape.clone(),
                    data: vec![1.0; e.data.len()],
                })
            })
        }
        ("mkp_aco", Mode::BlackBox) => Arc::new(|a| {
            let w = array(a, 1)?;
            Ok(RawArray::vector(vec![1.0; w.shape[0]]))
        }),
        ("bpp_aco", Mode::BlackBox) => Arc::new(|a| {
            let n = array(a, 0)?.data.len();
            Ok(mat(n, n, vec![1.0; n * n]))
        }),
        other => panic!("no builtin seed for {other:?}"),
    }
}

fn fixture_fn(id: &str) -> MatrixFn {
    match id {
        "tsp_gls" => Arc::new(|a| Ok(gls_fixture(array(a, 0)?)?)),
        "tsp_aco" => Arc::new(|a| Ok(tsp_black_box_fixture(array(a, 0)?))),
        "cvrp_aco" => Arc::new(|a| cvrp_fixture(array(a, 0)?, array(a, 2)?, scalar(a, 3)?)),
        "op_aco" => Arc::new(|a| {
            let prize = array(a, 0)?;
            let (n, d) = square(array(a, 1)?)?;
            let maxlen = scalar(a, 2)?;
            let out = (0..n * n)
                .map(|k| {
                    if d[k] <= maxlen {
                        (prize.data[k % n] / d[k]).powi(3)
                    } else {
                        0.0
                    }
                })
                .collect();
            Ok(mat(n, n, out))
        }),
        "mkp_aco" => Arc::new(|a| Ok(mkp_black_box_fixture(array(a, 0)?, array(a, 1)?))),
        "bpp_aco" => Arc::new(|a| Ok(bpp_fixture(array(a, 0)?, scalar(a, 1)?))),
        other => panic!("no builtin fixture for {other}"),
    }
}

fn gls_fixture(d: &RawArray) -> Result<RawArray, ExecFailure> {
    let (n, v) = square(d)?;
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        let row = &v[i * n..(i + 1) * n];
        let sum: f64 = row.iter().sum();
        let avg = sum / n as f64;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&x, &y| row[x].total_cmp(&row[y]));
        let near = &order[1.min(n)..5.min(n)];
        let closest = near.iter().map(|&j| row[j]).sum::<f64>() / near.len() as f64;
        for j in 0..n {
            let base = if i == j { f64::INFINITY } else { row[j] / avg };
            out[i * n + j] = base + closest / sum;
        }
    }
    Ok(mat(n, n, out))
}

/// Standardized `log1p|x|` per column, then `exp(-8 z)` where `z != 0`. The
/// self-correlation factor is 1.
fn tsp_black_box_fixture(e: &RawArray) -> RawArray {
    let t: Vec<f64> = e.data.iter().map(|x| x.abs().ln_1p()).collect();
    let (mu, sd) = (mean(&t), pstd(&t));
    let sd = if sd == 0.0 { 1.0 } else { sd };
    let out = t
        .iter()
        .map(|x| {
            let z = (x - mu) / sd;
            if z != 0.0 {
                (-8.0 * z).exp()
            } else {
                0.0
            }
        })
        .collect();
    RawArray {
        shape: e.shape.clone(),
        data: out,
    }
}

fn cvrp_fixture(d: &RawArray, demands: &RawArray, capacity: f64) -> Result<RawArray, ExecFailure> {
    let (n, dist) = square(d)?;
    let q = &demands.data;
    let total: f64 = q.iter().sum();
    let average = total / n as f64;
    let dmax = max(dist);
    let eps = f64::EPSILON;
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        let demand_factor = q[i] / total;
        for j in 0..n {
            if j == 0 {
                continue;
            }
            let dij = dist[i * n + j];
            let nd = dij / dmax;
            let inv = if dij != 0.0 { 1.0 / dij } else { 0.0 };
            let fits = capacity - q[j] >= q[i];
            let mut h = inv * (1.0 / (nd * nd));
            if !fits {
                h = 0.0;
            }
            h *= demand_factor / average;
            h *= dist[j * n] / (nd + eps);
            h *= if fits { capacity - q[i] } else { 0.0 };
            out[i * n + j] = h;
        }
    }
    Ok(mat(n, n, out))
}

fn mkp_black_box_fixture(p: &RawArray, w: &RawArray) -> RawArray {
    let n = w.shape[0];
    let m = w.shape.get(1).copied().unwrap_or(1);
    let (pmin, pmax) = (min(&p.data), max(&p.data));
    let pn: Vec<f64> = p.data.iter().map(|x| (x - pmin) / (pmax - pmin)).collect();
    let (wmin, wmax) = (min(&w.data), max(&w.data));
    let wn: Vec<f64> = w.data.iter().map(|x| (x - wmin) / (wmax - wmin)).collect();
    let avg = mean(&pn);
    let h: Vec<f64> = (0..n)
        .map(|i| {
            let row = &wn[i * m..(i + 1) * m];
            let mx = max(row);
            let sum: f64 = row.iter().sum();
            let sd = pstd(row);
            (pn[i] / mx) * (pn[i] / avg) * (pn[i] / sum) * (1.0 / sd)
        })
        .collect();
    let (hmin, hmax) = (min(&h), max(&h));
    RawArray::vector(h.iter().map(|x| (x - hmin) / (hmax - hmin)).collect())
}

fn bpp_fixture(d: &RawArray, capacity: f64) -> RawArray {
    let v = &d.data;
    let n = v.len();
    let mx = max(v);
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (v[i], v[j]);
            let same_bin = ((capacity - a - b) / capacity).abs();
            let overlap = (a + b) / capacity;
            h[i * n + j] = a / mx + b / mx - same_bin - overlap;
        }
    }
    let threshold = percentile(&h, 90.0);
    for x in h.iter_mut() {
        if *x < threshold {
            *x = 0.0;
        }
    }
    mat(n, n, h)
}
