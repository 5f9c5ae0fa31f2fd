use super::{TrajectoryCloud, UniformGrid};
use crate::error::{check_len, Result};

/// For every grid node, the index of its nearest cloud point and the distance.
#[derive(Debug, Clone, PartialEq)]
pub struct NearestAssignment {
    pub index: Vec<usize>,
    pub distance: Vec<f64>,
}

impl NearestAssignment {
    pub fn mean_distance(&self) -> f64 {
        self.distance.iter().sum::<f64>() / self.distance.len() as f64
    }
}

/// Exact nearest cloud point per grid node. Ties resolve to the lowest cloud index.
pub fn psi_p_nearest(cloud: &TrajectoryCloud, grid: &UniformGrid) -> Result<NearestAssignment> {
    check_len(grid.dim(), cloud.dim(), "cloud dimension vs grid")?;
    Ok(nearest_raw(cloud.points(), grid, cloud.dim()))
}

/// Brute-force nearest search over a raw row-major buffer.
pub(crate) fn nearest_raw(points: &[f64], grid: &UniformGrid, dim: usize) -> NearestAssignment {
    let mut index = Vec::with_capacity(grid.len());
    let mut distance = Vec::with_capacity(grid.len());
    for g in grid.iter() {
        let mut best = f64::INFINITY;
        let mut arg = 0;
        for (k, p) in points.chunks_exact(dim).enumerate() {
            let mut d2 = 0.0;
            for i in 0..dim {
                let t = p[i] - g[i];
                d2 += t * t;
            }
            if d2 < best {
                best = d2;
                arg = k;
            }
        }
        index.push(arg);
        distance.push(best.sqrt());
    }
    NearestAssignment { index, distance }
}

/// Mean over grid nodes of the distance to the nearest cloud point.
///
/// The average runs over the `n_g` grid nodes.
pub fn psi_p(cloud: &TrajectoryCloud, grid: &UniformGrid) -> Result<f64> {
    Ok(psi_p_nearest(cloud, grid)?.mean_distance())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_subset_gives_zero() {
        let grid = UniformGrid::new(2, 3).unwrap();
        let mut pts = grid.points().to_vec();
        pts.extend_from_slice(&[0.3, 0.7]);
        let cloud = TrajectoryCloud::new(pts, 2).unwrap();
        assert_eq!(psi_p(&cloud, &grid).unwrap(), 0.0);
    }

    #[test]
    fn one_dimensional_by_hand() {
        let grid = UniformGrid::new(1, 3).unwrap();
        let cloud = TrajectoryCloud::new(vec![0.5], 1).unwrap();
        assert!((psi_p(&cloud, &grid).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ties_pick_lowest_index() {
        let grid = UniformGrid::new(1, 3).unwrap();
        let cloud = TrajectoryCloud::new(vec![0.25, 0.75, 0.25], 1).unwrap();
        let a = psi_p_nearest(&cloud, &grid).unwrap();
        // node 0.5 is equidistant from 0.25 and 0.75
        assert_eq!(a.index, vec![0, 0, 1]);
    }

    #[test]
    fn dimension_mismatch() {
        let grid = UniformGrid::new(2, 3).unwrap();
        let cloud = TrajectoryCloud::new(vec![0.5; 3], 3).unwrap();
        assert!(psi_p(&cloud, &grid).is_err());
    }
}
