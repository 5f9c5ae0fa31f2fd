//! Product-Gaussian kernel density estimate and the grid-based divergence
//! built on top of it.

use std::f64::consts::PI;

use rayon::prelude::*;

use super::{TrajectoryCloud, UniformGrid};
use crate::error::{check_len, Error, Result};

/// Floor applied to every per-dimension bandwidth.
pub const MIN_BANDWIDTH: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct KdeEstimate {
    /// Source points in canonical (lexicographic) order.
    points: Vec<f64>,
    dim: usize,
    bandwidth: Vec<f64>,
}

impl KdeEstimate {
    /// Scott's rule per dimension, `h_i = std_i * N^(-1/(d+4))`, floored at [`MIN_BANDWIDTH`].
    pub fn scott(cloud: &TrajectoryCloud) -> Self {
        let points = canonical_order(cloud);
        let d = cloud.dim();
        let n = cloud.len();
        let factor = (n as f64).powf(-1.0 / (d as f64 + 4.0));
        let bandwidth = (0..d)
            .map(|i| {
                let mean = points.chunks_exact(d).map(|p| p[i]).sum::<f64>() / n as f64;
                let var = if n > 1 {
                    points
                        .chunks_exact(d)
                        .map(|p| (p[i] - mean) * (p[i] - mean))
                        .sum::<f64>()
                        / (n - 1) as f64
                } else {
                    0.0
                };
                (var.sqrt() * factor).max(MIN_BANDWIDTH)
            })
            .collect();
        Self { points, dim: d, bandwidth }
    }

    pub fn with_bandwidth(cloud: &TrajectoryCloud, bandwidth: Vec<f64>) -> Result<Self> {
        check_len(cloud.dim(), bandwidth.len(), "kde bandwidth")?;
        if bandwidth.iter().any(|&h| !(h > 0.0)) {
            return Err(Error::InvalidArgument("kde bandwidth must be positive".into()));
        }
        Ok(Self {
            points: canonical_order(cloud),
            dim: cloud.dim(),
            bandwidth,
        })
    }

    pub fn bandwidth(&self) -> &[f64] {
        &self.bandwidth
    }

    fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    /// Log density, evaluated with a log-sum-exp so far-away queries stay finite.
    pub fn log_density(&self, q: &[f64]) -> f64 {
        let d = self.dim;
        let mut exps = Vec::with_capacity(self.len());
        let mut max = f64::NEG_INFINITY;
        for p in self.points.chunks_exact(d) {
            let mut acc = 0.0;
            for i in 0..d {
                let t = (q[i] - p[i]) / self.bandwidth[i];
                acc += t * t;
            }
            let e = -0.5 * acc;
            max = max.max(e);
            exps.push(e);
        }
        let sum: f64 = exps.iter().map(|e| (e - max).exp()).sum();
        let log_norm = -(self.len() as f64).ln()
            - 0.5 * d as f64 * (2.0 * PI).ln()
            - self.bandwidth.iter().map(|h| h.ln()).sum::<f64>();
        log_norm + max + sum.ln()
    }

    pub fn density(&self, q: &[f64]) -> f64 {
        self.log_density(q).exp()
    }

    pub fn kde_density(&self, queries: &[Vec<f64>]) -> Result<Vec<f64>> {
        for q in queries {
            check_len(self.dim, q.len(), "kde query")?;
        }
        Ok(queries.iter().map(|q| self.density(q)).collect())
    }
}

fn canonical_order(cloud: &TrajectoryCloud) -> Vec<f64> {
    let mut rows: Vec<&[f64]> = cloud.iter().collect();
    rows.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    rows.concat()
}

/// Which points the log-density is averaged over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KldMode {
    /// `-(1/n_g) * sum_j log p(g_j)` over the grid nodes.
    #[default]
    GridCrossEntropy,
    /// `-(1/n_g) * sum_k log p(x_k)` over the cloud points.
    AsPrinted,
}

pub fn kld_uniform(cloud: &TrajectoryCloud, grid: &UniformGrid) -> Result<f64> {
    kld_uniform_with(&KdeEstimate::scott(cloud), cloud, grid, KldMode::default())
}

pub fn kld_uniform_with(
    kde: &KdeEstimate,
    cloud: &TrajectoryCloud,
    grid: &UniformGrid,
    mode: KldMode,
) -> Result<f64> {
    check_len(grid.dim(), cloud.dim(), "cloud dimension vs grid")?;
    check_len(kde.dim, cloud.dim(), "kde dimension vs cloud")?;
    let logs: Vec<f64> = match mode {
        KldMode::GridCrossEntropy => grid
            .points()
            .par_chunks(grid.dim())
            .map(|g| kde.log_density(g))
            .collect(),
        KldMode::AsPrinted => cloud
            .points()
            .par_chunks(cloud.dim())
            .map(|p| kde.log_density(p))
            .collect(),
    };
    Ok(-logs.iter().sum::<f64>() / grid.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn peak_of_single_kernel() {
        let cloud = TrajectoryCloud::new(vec![0.2, 0.7], 2).unwrap();
        let kde = KdeEstimate::with_bandwidth(&cloud, vec![0.1, 0.3]).unwrap();
        let expected = 1.0 / (2.0 * PI) / (0.1 * 0.3);
        assert!((kde.density(&[0.2, 0.7]) - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn symmetric_pair_contributes_equally() {
        let cloud = TrajectoryCloud::new(vec![0.2, 0.8], 1).unwrap();
        let kde = KdeEstimate::with_bandwidth(&cloud, vec![0.2]).unwrap();
        let single = TrajectoryCloud::new(vec![0.2], 1).unwrap();
        let one = KdeEstimate::with_bandwidth(&single, vec![0.2]).unwrap();
        assert!((kde.density(&[0.5]) - one.density(&[0.5])).abs() < 1e-15);
    }

    #[test]
    fn matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cloud =
            TrajectoryCloud::new((0..90).map(|_| rng.random::<f64>()).collect(), 3).unwrap();
        let kde = KdeEstimate::scott(&cloud);
        let h = kde.bandwidth().to_vec();
        for _ in 0..20 {
            let q: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
            let mut direct = 0.0;
            for p in cloud.iter() {
                let mut k = 1.0;
                for i in 0..3 {
                    let t = (q[i] - p[i]) / h[i];
                    k *= (-0.5 * t * t).exp() / ((2.0 * PI).sqrt() * h[i]);
                }
                direct += k;
            }
            direct /= cloud.len() as f64;
            assert!((kde.density(&q) - direct).abs() < 1e-12 * direct.max(1.0));
        }
    }

    #[test]
    fn integrates_to_one() {
        let cloud = TrajectoryCloud::new(vec![0.3, 0.5, 0.55, 0.9], 1).unwrap();
        let kde = KdeEstimate::scott(&cloud);
        let n = 20000;
        let (a, b) = (-3.0, 4.0);
        let dx = (b - a) / n as f64;
        let total: f64 = (0..n).map(|i| kde.density(&[a + (i as f64 + 0.5) * dx]) * dx).sum();
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn far_queries_stay_finite() {
        let cloud = TrajectoryCloud::new(vec![0.0; 6], 3).unwrap();
        let kde = KdeEstimate::scott(&cloud);
        assert_eq!(kde.bandwidth(), &[MIN_BANDWIDTH; 3]);
        let l = kde.log_density(&[1.0, 1.0, 1.0]);
        assert!(l.is_finite() && l < -1e5);
    }

    #[test]
    fn uniform_cloud_beats_corner_cloud() {
        let grid = UniformGrid::new(3, 5).unwrap();
        let fine = UniformGrid::new(3, 9).unwrap();
        let uniform = TrajectoryCloud::new(fine.points().to_vec(), 3).unwrap();
        let corner = TrajectoryCloud::new(vec![0.0; fine.points().len()], 3).unwrap();
        assert!(kld_uniform(&uniform, &grid).unwrap() < kld_uniform(&corner, &grid).unwrap());
    }

    #[test]
    fn permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<Vec<f64>> = (0..200).map(|_| (0..3).map(|_| rng.random()).collect()).collect();
        let mut shuffled = rows.clone();
        shuffled.reverse();
        shuffled.swap(3, 77);
        let grid = UniformGrid::new(3, 5).unwrap();
        let a = kld_uniform(&TrajectoryCloud::from_rows(&rows).unwrap(), &grid).unwrap();
        let b = kld_uniform(&TrajectoryCloud::from_rows(&shuffled).unwrap(), &grid).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn duplicated_sample_has_same_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts: Vec<f64> = (0..150).map(|_| rng.random::<f64>()).collect();
        let mut doubled = pts.clone();
        doubled.extend_from_slice(&pts);
        let grid = UniformGrid::new(3, 5).unwrap();
        let a = TrajectoryCloud::new(pts, 3).unwrap();
        let b = TrajectoryCloud::new(doubled, 3).unwrap();
        let h = vec![0.15; 3];
        let ka = KdeEstimate::with_bandwidth(&a, h.clone()).unwrap();
        let kb = KdeEstimate::with_bandwidth(&b, h).unwrap();
        let la = kld_uniform_with(&ka, &a, &grid, KldMode::GridCrossEntropy).unwrap();
        let lb = kld_uniform_with(&kb, &b, &grid, KldMode::GridCrossEntropy).unwrap();
        assert!((la - lb).abs() < 1e-12);
    }
}
