use super::{Payload, Solution, TspInstance};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Length of the closed tour.
pub fn tour_length(dist: &Matrix, tour: &[usize]) -> f64 {
    if tour.len() < 2 {
        return 0.0;
    }
    let closing = dist[(tour[tour.len() - 1], tour[0])];
    tour.windows(2).map(|w| dist[(w[0], w[1])]).sum::<f64>() + closing
}

/// Greedy nearest-neighbour tour from `start`; ties go to the lowest index.
pub fn nearest_neighbour_tour(tsp: &TspInstance, start: usize) -> Result<Solution> {
    let n = tsp.len();
    if start >= n {
        return Err(Error::Config(format!(
            "start node {start} out of range 0..{n}"
        )));
    }
    let mut visited = vec![false; n];
    let mut tour = Vec::with_capacity(n);
    let mut current = start;
    visited[current] = true;
    tour.push(current);
    for _ in 1..n {
        let row = tsp.dist.row(current);
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for (j, &d) in row.iter().enumerate() {
            if !visited[j] && (d < best_d || best == usize::MAX) {
                best = j;
                best_d = d;
            }
        }
        visited[best] = true;
        tour.push(best);
        current = best;
    }
    let objective = tour_length(&tsp.dist, &tour);
    Ok(Solution {
        payload: Payload::Tour(tour),
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collinear_visits_in_order() {
        let tsp = TspInstance::from_coords(vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]).unwrap();
        let sol = nearest_neighbour_tour(&tsp, 0).unwrap();
        assert_eq!(sol.tour().unwrap(), &[0, 1, 2]);
        assert_eq!(sol.objective, 4.0);
    }

    #[test]
    fn ties_break_to_lowest_index() {
        // nodes 1 and 2 are both at distance 1 from node 0
        let tsp = TspInstance::from_coords(vec![[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 5.0]])
            .unwrap();
        let sol = nearest_neighbour_tour(&tsp, 0).unwrap();
        assert_eq!(sol.tour().unwrap()[1], 1);
    }

    #[test]
    fn three_nodes_any_start_gives_perimeter() {
        let tsp = TspInstance::from_coords(vec![[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]]).unwrap();
        for s in 0..3 {
            assert!((nearest_neighbour_tour(&tsp, s).unwrap().objective - 12.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bad_start_is_rejected() {
        let tsp = TspInstance::from_coords(vec![[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]]).unwrap();
        assert!(nearest_neighbour_tour(&tsp, 3).is_err());
    }
}
