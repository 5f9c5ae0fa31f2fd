use crate::error::{Error, Result};

/// Cartesian product of `m` equally spaced values in `[0, 1]` per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformGrid {
    dim: usize,
    m: usize,
    points: Vec<f64>,
}

impl UniformGrid {
    pub fn new(dim: usize, m: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("grid dimension must be >= 1".into()));
        }
        if m < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 2 points per axis, got {m}"
            )));
        }
        let n = m
            .checked_pow(dim as u32)
            .ok_or_else(|| Error::InvalidArgument("grid too large".into()))?;
        let step = 1.0 / (m - 1) as f64;
        let mut points = Vec::with_capacity(n * dim);
        let mut idx = vec![0usize; dim];
        for _ in 0..n {
            points.extend(idx.iter().map(|&i| if i == m - 1 { 1.0 } else { i as f64 * step }));
            // odometer, last axis fastest
            for a in (0..dim).rev() {
                idx[a] += 1;
                if idx[a] < m {
                    break;
                }
                idx[a] = 0;
            }
        }
        Ok(Self { dim, m, points })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn per_axis(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.points[j * self.dim..(j + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.points.chunks_exact(self.dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(UniformGrid::new(3, 5).unwrap().len(), 125);
        let g = UniformGrid::new(1, 2).unwrap();
        assert_eq!(g.points(), &[0.0, 1.0]);
        let g = UniformGrid::new(2, 3).unwrap();
        assert_eq!(g.len(), 9);
        assert!(g.iter().any(|p| p == [0.5, 0.5]));
    }

    #[test]
    fn coordinates_are_on_lattice() {
        let g = UniformGrid::new(3, 5).unwrap();
        for v in g.points() {
            assert!([0.0, 0.25, 0.5, 0.75, 1.0].contains(v));
        }
    }

    #[test]
    fn too_coarse_is_rejected() {
        assert!(UniformGrid::new(2, 1).is_err());
        assert!(UniformGrid::new(0, 3).is_err());
    }
}
