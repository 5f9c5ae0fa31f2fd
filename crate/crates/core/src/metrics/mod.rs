//! Space-filling indicators for a scaled trajectory cloud: grid mean-min
//! distance, convex hull volume and a KDE-based divergence from the uniform
//! grid distribution.

mod grid;
mod hull;
mod kde;
pub(crate) mod psi;

pub use grid::UniformGrid;
pub use hull::{chv, quickhull, ConvexHull, HullVolume};
pub use kde::{kld_uniform, kld_uniform_with, KdeEstimate, KldMode, MIN_BANDWIDTH};
pub use psi::{psi_p, psi_p_nearest, NearestAssignment};

use serde::Serialize;

use crate::error::{Error, Result};

/// Row-major `N x d` point set in unit-cube coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryCloud {
    points: Vec<f64>,
    dim: usize,
}

impl TrajectoryCloud {
    pub fn new(points: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "cloud of {} values cannot hold {dim}-dimensional points",
                points.len()
            )));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("trajectory cloud"));
        }
        Ok(Self { points, dim })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidArgument("ragged cloud rows".into()));
        }
        Self::new(rows.concat(), dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.points.chunks_exact(self.dim)
    }
}

/// All three indicators evaluated on one cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpaceFillingReport {
    pub psi_p: f64,
    pub kld: f64,
    pub chv: f64,
    pub chv_degenerate: bool,
}

pub fn space_filling_report(cloud: &TrajectoryCloud, grid: &UniformGrid) -> Result<SpaceFillingReport> {
    let vol = chv(cloud)?;
    Ok(SpaceFillingReport {
        psi_p: psi_p(cloud, grid)?,
        kld: kld_uniform(cloud, grid)?,
        chv: vol.volume,
        chv_degenerate: vol.degenerate,
    })
}
