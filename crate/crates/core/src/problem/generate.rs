//! Seeded instance generators.
//!
//! Draw order (all from `rng::seeded(seed)`, `gen::<f64>()` uniform on
//! `[0, 1)`):
//!
//! * TSP: `n` points, x then y per point.
//! * CVRP: the depot (x, y) when placement is uniform, then `n` customer
//!   points, then `n` demands uniform on `{1..=9}`. Capacity is 50.
//! * OP: `n` points, the first being the depot. Prizes follow
//!   `(1 + floor(99 * d0i / max_j d0j)) / 100`.
//! * MKP: `n` prizes, then the `n x m` weights row by row, then one
//!   constraint per dimension drawn uniformly from the open interval
//!   `(max_i w_ij, sum_i w_ij)`.
//! * BPP: `n` sizes uniform on `{20..=100}`; capacity 150.

use rand::Rng;

use super::{
    BppInstance, CvrpInstance, Instance, MkpInstance, OpInstance, ProblemKind, TspInstance,
};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

pub const CVRP_CAPACITY: u32 = 50;
pub const BPP_CAPACITY: u32 = 150;
pub const MKP_DEFAULT_DIMS: usize = 5;
const MAX_SIZE: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DepotPlacement {
    /// Depot at (0.5, 0.5).
    #[default]
    Center,
    /// Depot sampled like any customer.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneratorOptions {
    pub depot: DepotPlacement,
    pub mkp_dims: usize,
}

impl Default for GeneratorOptions {
    fn default() -> Self {
        Self {
            depot: DepotPlacement::Center,
            mkp_dims: MKP_DEFAULT_DIMS,
        }
    }
}

/// Seed of instance `index` in a set drawn from `master` (SplitMix64 of the
/// pair), so every member can be regenerated on its own.
pub fn instance_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Travel budget of an OP instance with `n` nodes (depot included).
///
/// Benchmarked sizes use the standard values 3/4/5/8/12 for
/// 50/100/200/500/1000 nodes; sizes in between interpolate linearly and
/// sizes below 50 scale as `3 * sqrt(n / 50)`.
pub fn op_max_length(n: usize) -> f64 {
    const TABLE: [(usize, f64); 5] = [(50, 3.0), (100, 4.0), (200, 5.0), (500, 8.0), (1000, 12.0)];
    if n < TABLE[0].0 {
        return 3.0 * (n as f64 / 50.0).sqrt();
    }
    for w in TABLE.windows(2) {
        let (lo, llo) = w[0];
        let (hi, lhi) = w[1];
        if n <= hi {
            let t = (n - lo) as f64 / (hi - lo) as f64;
            return llo + t * (lhi - llo);
        }
    }
    let (last_n, last_len) = TABLE[TABLE.len() - 1];
    last_len * (n as f64 / last_n as f64).sqrt()
}

fn points(rng: &mut rng::Rng, n: usize) -> Vec<[f64; 2]> {
    (0..n)
        .map(|_| [rng.gen::<f64>(), rng.gen::<f64>()])
        .collect()
}

fn check_size(kind: ProblemKind, size: usize) -> Result<()> {
    let min = match kind {
        ProblemKind::Tsp => 3,
        ProblemKind::Op | ProblemKind::Mkp => 2,
        ProblemKind::Cvrp | ProblemKind::Bpp => 1,
    };
    if size < min || size > MAX_SIZE {
        return Err(Error::Config(format!(
            "unsupported size {size} for {kind} (supported: {min}..={MAX_SIZE})"
        )));
    }
    Ok(())
}

/// Generates an instance with default options (CVRP depot at the center,
/// five MKP dimensions).
pub fn generate_instance(kind: ProblemKind, size: usize, seed: u64) -> Result<Instance> {
    generate_instance_with(kind, size, seed, &GeneratorOptions::default())
}

pub fn generate_instance_with(
    kind: ProblemKind,
    size: usize,
    seed: u64,
    opts: &GeneratorOptions,
) -> Result<Instance> {
    check_size(kind, size)?;
    let mut rng = rng::seeded(seed);
    let n = size;
    let instance = match kind {
        ProblemKind::Tsp => Instance::Tsp(TspInstance::from_coords(points(&mut rng, n))?),
        ProblemKind::Cvrp => {
            let depot = match opts.depot {
                DepotPlacement::Center => [0.5, 0.5],
                DepotPlacement::Uniform => [rng.gen(), rng.gen()],
            };
            let mut coords = vec![depot];
            coords.extend(points(&mut rng, n));
            let mut demands = vec![0u32];
            demands.extend((0..n).map(|_| rng.gen_range(1..=9u32)));
            Instance::Cvrp(CvrpInstance::new(coords, demands, CVRP_CAPACITY)?)
        }
        ProblemKind::Op => {
            let coords = points(&mut rng, n);
            let dist = Matrix::euclidean(&coords);
            let max_d0 = (1..n).map(|j| dist[(0, j)]).fold(0.0f64, f64::max);
            let prize = (0..n)
                .map(|i| {
                    if i == 0 {
                        0.0
                    } else if max_d0 == 0.0 {
                        0.01
                    } else {
                        (1.0 + (99.0 * dist[(0, i)] / max_d0).floor()) / 100.0
                    }
                })
                .collect();
            Instance::Op(OpInstance::new(coords, prize, op_max_length(n))?)
        }
        ProblemKind::Mkp => {
            let m = opts.mkp_dims;
            if m == 0 {
                return Err(Error::Config("MKP needs at least one dimension".into()));
            }
            let prize: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            let weight = Matrix::from_vec(n, m, (0..n * m).map(|_| rng.gen()).collect());
            let constraint = (0..m)
                .map(|j| {
                    let lo = (0..n).map(|i| weight[(i, j)]).fold(0.0f64, f64::max);
                    let hi: f64 = (0..n).map(|i| weight[(i, j)]).sum();
                    if hi <= lo {
                        // every other weight in the column is zero
                        return hi;
                    }
                    loop {
                        let c = lo + (hi - lo) * rng.gen::<f64>();
                        if c > lo && c < hi {
                            break c;
                        }
                    }
                })
                .collect();
            Instance::Mkp(MkpInstance::new(prize, weight, constraint)?)
        }
        ProblemKind::Bpp => {
            let sizes = (0..n).map(|_| rng.gen_range(20..=100u32)).collect();
            Instance::Bpp(BppInstance::new(sizes, BPP_CAPACITY)?)
        }
    };
    Ok(instance)
}
