//! Instance-set files.
//!
//! A set is stored as pretty-printed JSON with a fixed field order:
//!
//! ```text
//! {
//!   "format": "hevo-instance-set/1",
//!   "kind": "tsp",
//!   "size": 50,
//!   "master_seed": 1234,
//!   "seeds": [ ... per-instance seeds ... ],
//!   "instances": [ { raw arrays of one instance }, ... ]
//! }
//! ```
//!
//! Raw arrays are the generator outputs (coordinates, demands, prizes,
//! weights, capacities); distance matrices are recomputed on load. Floats are
//! written in shortest round-trip form, so writing the same set twice yields
//! identical bytes.

use serde::{Deserialize, Serialize};

use super::{
    generate_instance_with, instance_seed, BppInstance, CvrpInstance, GeneratorOptions, Instance,
    MkpInstance, OpInstance, ProblemKind, TspInstance,
};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const INSTANCE_SET_FORMAT: &str = "hevo-instance-set/1";

/// A reproducible collection of generated instances.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSet {
    pub kind: ProblemKind,
    pub size: usize,
    pub master_seed: u64,
    pub seeds: Vec<u64>,
    pub instances: Vec<Instance>,
}

#[derive(Serialize, Deserialize)]
struct SetFile {
    format: String,
    kind: ProblemKind,
    size: usize,
    master_seed: u64,
    seeds: Vec<u64>,
    instances: Vec<Record>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Record {
    Cvrp {
        coords: Vec<[f64; 2]>,
        demands: Vec<u32>,
        capacity: u32,
    },
    Op {
        coords: Vec<[f64; 2]>,
        prize: Vec<f64>,
        maxlen: f64,
    },
    Mkp {
        prize: Vec<f64>,
        weight: Vec<Vec<f64>>,
        constraint: Vec<f64>,
    },
    Bpp {
        sizes: Vec<u32>,
        capacity: u32,
    },
    Tsp {
        coords: Vec<[f64; 2]>,
    },
}

impl InstanceSet {
    /// Generates `count` instances; member `i` uses `instance_seed(master, i)`.
    pub fn generate(
        kind: ProblemKind,
        size: usize,
        count: usize,
        master_seed: u64,
        opts: &GeneratorOptions,
    ) -> Result<Self> {
        let seeds: Vec<u64> = (0..count as u64)
            .map(|i| instance_seed(master_seed, i))
            .collect();
        let instances = seeds
            .iter()
            .map(|&s| generate_instance_with(kind, size, s, opts))
            .collect::<Result<_>>()?;
        Ok(Self {
            kind,
            size,
            master_seed,
            seeds,
            instances,
        })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn to_json(&self) -> String {
        let file = SetFile {
            format: INSTANCE_SET_FORMAT.to_string(),
            kind: self.kind,
            size: self.size,
            master_seed: self.master_seed,
            seeds: self.seeds.clone(),
            instances: self.instances.iter().map(to_record).collect(),
        };
        serde_json::to_string_pretty(&file).expect("instance set serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SetFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("instance set: {e}")))?;
        if file.format != INSTANCE_SET_FORMAT {
            return Err(Error::Parse(format!(
                "unknown instance set format `{}`",
                file.format
            )));
        }
        let instances = file
            .instances
            .into_iter()
            .map(|r| from_record(file.kind, r))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kind: file.kind,
            size: file.size,
            master_seed: file.master_seed,
            seeds: file.seeds,
            instances,
        })
    }
}

fn to_record(inst: &Instance) -> Record {
    match inst {
        Instance::Tsp(t) => Record::Tsp {
            coords: t.coords.clone(),
        },
        Instance::Cvrp(c) => Record::Cvrp {
            coords: c.coords.clone(),
            demands: c.demands.clone(),
            capacity: c.capacity,
        },
        Instance::Op(o) => Record::Op {
            coords: o.coords.clone(),
            prize: o.prize.clone(),
            maxlen: o.maxlen,
        },
        Instance::Mkp(m) => Record::Mkp {
            prize: m.prize.clone(),
            weight: (0..m.items()).map(|i| m.weight.row(i).to_vec()).collect(),
            constraint: m.constraint.clone(),
        },
        Instance::Bpp(b) => Record::Bpp {
            sizes: b.sizes.clone(),
            capacity: b.capacity,
        },
    }
}

fn from_record(kind: ProblemKind, record: Record) -> Result<Instance> {
    let inst = match record {
        Record::Tsp { coords } => Instance::Tsp(TspInstance::from_coords(coords)?),
        Record::Cvrp {
            coords,
            demands,
            capacity,
        } => Instance::Cvrp(CvrpInstance::new(coords, demands, capacity)?),
        Record::Op {
            coords,
            prize,
            maxlen,
        } => Instance::Op(OpInstance::new(coords, prize, maxlen)?),
        Record::Mkp {
            prize,
            weight,
            constraint,
        } => {
            let n = weight.len();
            let m = constraint.len();
            if weight.iter().any(|r| r.len() != m) {
                return Err(Error::Parse("ragged MKP weight rows".into()));
            }
            let flat = weight.into_iter().flatten().collect();
            Instance::Mkp(MkpInstance::new(
                prize,
                Matrix::from_vec(n, m, flat),
                constraint,
            )?)
        }
        Record::Bpp { sizes, capacity } => Instance::Bpp(BppInstance::new(sizes, capacity)?),
    };
    if inst.kind() != kind {
        return Err(Error::Parse(format!(
            "record of kind {} inside a {kind} set",
            inst.kind()
        )));
    }
    Ok(inst)
}
