//! TSPLIB `.tsp` reader (EUC_2D only) and published optima.

use std::path::Path;

use super::TspInstance;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Published optimal tour lengths for the instances used in the
/// constructive-heuristic benchmark.
pub const KNOWN_OPTIMA: [(&str, f64); 21] = [
    ("ts225", 126_643.0),
    ("rat99", 1_211.0),
    ("rl1889", 316_536.0),
    ("u1817", 57_201.0),
    ("d1655", 62_128.0),
    ("bier127", 118_282.0),
    ("lin318", 42_029.0),
    ("eil51", 426.0),
    ("d493", 35_002.0),
    ("kroB100", 22_141.0),
    ("kroC100", 20_749.0),
    ("ch130", 6_110.0),
    ("pr299", 48_191.0),
    ("fl417", 11_861.0),
    ("d657", 48_912.0),
    ("kroA150", 26_524.0),
    ("fl1577", 22_249.0),
    ("u724", 41_910.0),
    ("pr264", 49_135.0),
    ("pr226", 80_369.0),
    ("pr439", 107_217.0),
];

pub fn known_optimum(name: &str) -> Option<f64> {
    KNOWN_OPTIMA
        .iter()
        .find(|(n, _)| *n == name)
        .map(|&(_, opt)| opt)
}

/// TSPLIB `nint` Euclidean distance.
pub fn euc_2d(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    ((dx * dx + dy * dy).sqrt() + 0.5).floor()
}

/// Parses a TSPLIB file body. Distances use TSPLIB rounding so published
/// optima are reproduced exactly.
pub fn load_tsplib(source: &str) -> Result<TspInstance> {
    let mut name = None;
    let mut dimension: Option<usize> = None;
    let mut edge_type: Option<String> = None;
    let mut lines = source.lines();
    let mut in_coords = false;
    for line in lines.by_ref() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with("NODE_COORD_SECTION") {
            in_coords = true;
            break;
        }
        if line == "EOF" {
            break;
        }
        let Some((key, value)) = line.split_once(':') else {
            if line.ends_with("SECTION") {
                return Err(Error::Parse(format!("unexpected section `{line}`")));
            }
            continue;
        };
        let value = value.trim();
        match key.trim() {
            "NAME" => name = Some(value.to_string()),
            "DIMENSION" => {
                dimension = Some(
                    value
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad DIMENSION `{value}`")))?,
                )
            }
            "EDGE_WEIGHT_TYPE" => edge_type = Some(value.to_string()),
            "TYPE" if value != "TSP" => {
                return Err(Error::Parse(format!("unsupported problem TYPE `{value}`")))
            }
            _ => {}
        }
    }
    if !in_coords {
        return Err(Error::Parse("missing NODE_COORD_SECTION".into()));
    }
    let edge_type = edge_type.ok_or_else(|| Error::Parse("missing EDGE_WEIGHT_TYPE".into()))?;
    if edge_type != "EUC_2D" {
        return Err(Error::UnsupportedEdgeWeight(edge_type));
    }
    let dimension = dimension.ok_or_else(|| Error::Parse("missing DIMENSION".into()))?;
    let mut coords = Vec::with_capacity(dimension);
    for line in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line == "EOF" || coords.len() == dimension {
            break;
        }
        let mut parts = line.split_whitespace();
        let mut next = || -> Result<f64> {
            parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse(format!("malformed coordinate line `{line}`")))
        };
        let _id = next()?;
        let x = next()?;
        let y = next()?;
        coords.push([x, y]);
    }
    if coords.len() != dimension {
        return Err(Error::Parse(format!(
            "expected {dimension} coordinates, found {}",
            coords.len()
        )));
    }
    if dimension < 3 {
        return Err(Error::Parse("a TSP instance needs at least 3 nodes".into()));
    }
    let dist = Matrix::from_fn(dimension, dimension, |i, j| {
        if i == j {
            0.0
        } else {
            euc_2d(coords[i], coords[j])
        }
    });
    Ok(TspInstance { coords, dist, name })
}

pub fn load_tsplib_file(path: &Path) -> Result<TspInstance> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let mut inst = load_tsplib(&text)?;
    if inst.name.is_none() {
        inst.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    }
    Ok(inst)
}

/// Reads a TSPLIB `.tour` file into a zero-based node sequence.
pub fn load_tour(source: &str) -> Result<Vec<usize>> {
    let mut lines = source.lines().map(str::trim);
    if !lines.by_ref().any(|l| l.starts_with("TOUR_SECTION")) {
        return Err(Error::Parse("missing TOUR_SECTION".into()));
    }
    let mut tour = Vec::new();
    for line in lines {
        if line == "EOF" {
            break;
        }
        for tok in line.split_whitespace() {
            let id: i64 = tok
                .parse()
                .map_err(|_| Error::Parse(format!("bad tour entry `{tok}`")))?;
            if id == -1 {
                return Ok(tour);
            }
            if id < 1 {
                return Err(Error::Parse(format!("bad tour entry `{tok}`")));
            }
            tour.push(id as usize - 1);
        }
    }
    Ok(tour)
}

/// Optimality gap in percent.
pub fn gap_percent(objective: f64, optimum: f64) -> f64 {
    100.0 * (objective - optimum) / optimum
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "NAME : tiny5
COMMENT : hand made
TYPE : TSP
DIMENSION : 5
EDGE_WEIGHT_TYPE : EUC_2D
NODE_COORD_SECTION
1 0 0
2 3 0
3 3 4
4 0 4
5 1.2 1.4
EOF
";

    #[test]
    fn parses_and_rounds() {
        let t = load_tsplib(SMALL).unwrap();
        assert_eq!(t.len(), 5);
        assert_eq!(t.name.as_deref(), Some("tiny5"));
        assert_eq!(t.dist[(0, 2)], 5.0);
        // sqrt(1.44 + 1.96) = 1.84 rounds to 2
        assert_eq!(t.dist[(0, 4)], 2.0);
    }

    #[test]
    fn missing_coord_section() {
        let text = SMALL.replace("NODE_COORD_SECTION\n", "");
        assert!(matches!(load_tsplib(&text), Err(Error::Parse(_))));
    }

    #[test]
    fn other_edge_types_rejected() {
        let text = SMALL.replace("EUC_2D", "GEO");
        assert!(matches!(load_tsplib(&text), Err(Error::UnsupportedEdgeWeight(t)) if t == "GEO"));
    }

    #[test]
    fn truncated_section() {
        let text = SMALL.replace("5 1.2 1.4\n", "");
        assert!(load_tsplib(&text).is_err());
    }

    #[test]
    fn optima_table() {
        assert_eq!(known_optimum("eil51"), Some(426.0));
        assert_eq!(KNOWN_OPTIMA.len(), 21);
        assert!((gap_percent(468.6, 426.0) - 10.0).abs() < 1e-9);
    }

    #[test]
    fn tour_file() {
        let t = load_tour("NAME : x\nTOUR_SECTION\n1\n3 2\n-1\nEOF\n").unwrap();
        assert_eq!(t, vec![0, 2, 1]);
        assert!(load_tour("NAME : x\n").is_err());
    }
}
