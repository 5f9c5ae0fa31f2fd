use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Smallest admissible range when a transform is fitted to data.
pub const MIN_RANGE: f64 = 1e-6;

/// Componentwise affine map `z = (v - offset) / range` into unit-cube coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingTransform {
    pub offset: Vec<f64>,
    pub range: Vec<f64>,
}

impl ScalingTransform {
    pub fn new(offset: Vec<f64>, range: Vec<f64>) -> Result<Self> {
        check_len(offset.len(), range.len(), "scaling range")?;
        if offset.iter().chain(&range).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("scaling transform"));
        }
        if let Some(r) = range.iter().find(|&&r| r <= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "scaling range must be positive, got {r}"
            )));
        }
        Ok(Self { offset, range })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            offset: vec![0.0; dim],
            range: vec![1.0; dim],
        }
    }

    /// Min/max fit over row-major points of dimension `dim`. Degenerate
    /// dimensions get their range floored at [`MIN_RANGE`].
    pub fn from_points(points: &[f64], dim: usize) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return Err(Error::InvalidArgument(
                "cannot fit scaling to an empty or ragged point set".into(),
            ));
        }
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for p in points.chunks_exact(dim) {
            for i in 0..dim {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        if lo.iter().chain(&hi).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("points for scaling fit"));
        }
        let range = lo
            .iter()
            .zip(&hi)
            .enumerate()
            .map(|(i, (l, h))| {
                let r = h - l;
                if r < MIN_RANGE {
                    log::warn!("dimension {i} has range {r:e}; flooring at {MIN_RANGE:e}");
                    MIN_RANGE
                } else {
                    r
                }
            })
            .collect();
        Ok(Self { offset: lo, range })
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn scale_point(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), v.len(), "point to scale")?;
        let mut z = vec![0.0; v.len()];
        self.scale_into(v, &mut z);
        Ok(z)
    }

    pub fn unscale_point(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), z.len(), "point to unscale")?;
        Ok(z
            .iter()
            .zip(self.offset.iter().zip(&self.range))
            .map(|(zi, (o, r))| zi * r + o)
            .collect())
    }

    #[inline]
    pub fn scale_into(&self, v: &[f64], out: &mut [f64]) {
        for i in 0..out.len() {
            out[i] = (v[i] - self.offset[i]) / self.range[i];
        }
    }

    /// Scales a row-major point set.
    pub fn scale_points(&self, points: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; points.len()];
        for (p, o) in points.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            self.scale_into(p, o);
        }
        out
    }
}
