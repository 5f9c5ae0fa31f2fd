//! Normalized Gaussian validity functions.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Axis-aligned Gaussian living in unit-cube coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianValidity {
    pub center: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl GaussianValidity {
    pub fn new(center: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        check_len(center.len(), sigma.len(), "validity sigma")?;
        if center.iter().chain(&sigma).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("validity parameters"));
        }
        if sigma.iter().any(|&s| s <= 0.0) {
            return Err(Error::InvalidArgument(
                "validity sigma must be strictly positive".into(),
            ));
        }
        Ok(Self { center, sigma })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Log of the unnormalized Gaussian, `-1/2 * sum(((z - c) / s)^2)`.
    #[inline]
    pub fn log_activation(&self, z: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((zi, ci), si) in z.iter().zip(&self.center).zip(&self.sigma) {
            let t = (zi - ci) / si;
            acc += t * t;
        }
        -0.5 * acc
    }
}

/// Normalized radial basis function network: the weights form a partition of unity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NrbfNetwork {
    pub members: Vec<GaussianValidity>,
}

impl NrbfNetwork {
    pub fn new(members: Vec<GaussianValidity>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidArgument("empty validity network".into()));
        }
        let d = members[0].dim();
        for m in &members {
            check_len(d, m.dim(), "validity member dimension")?;
        }
        Ok(Self { members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.members[0].dim()
    }

    /// Evaluates the normalized weights at a unit-cube point.
    pub fn evaluate(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), z.len(), "validity query point")?;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("validity query point"));
        }
        let mut w = vec![0.0; self.len()];
        self.evaluate_into(z, &mut w);
        Ok(w)
    }

    /// Unchecked evaluation into a caller-provided buffer of length `len()`.
    ///
    /// Exponents are shifted by their maximum before exponentiation so the
    /// normalizer never underflows to zero.
    pub fn evaluate_into(&self, z: &[f64], out: &mut [f64]) {
        let mut max = f64::NEG_INFINITY;
        for (o, m) in out.iter_mut().zip(&self.members) {
            *o = m.log_activation(z);
            max = max.max(*o);
        }
        let mut total = 0.0;
        for o in out.iter_mut() {
            *o = (*o - max).exp();
            total += *o;
        }
        for o in out.iter_mut() {
            *o /= total;
        }
    }

    /// Weights plus their Jacobian with respect to `z`, stored row-major as
    /// `jac[j * d + i] = dPhi_j / dz_i`.
    pub fn evaluate_with_jacobian(&self, z: &[f64], out: &mut [f64], jac: &mut [f64]) {
        self.evaluate_into(z, out);
        let d = z.len();
        // a_ji = -(z_i - c_ji) / s_ji^2, dPhi_j/dz_i = Phi_j (a_ji - sum_l Phi_l a_li)
        let mut mean = vec![0.0; d];
        for (j, m) in self.members.iter().enumerate() {
            for i in 0..d {
                let a = -(z[i] - m.center[i]) / (m.sigma[i] * m.sigma[i]);
                jac[j * d + i] = a;
                mean[i] += out[j] * a;
            }
        }
        for j in 0..self.len() {
            for i in 0..d {
                jac[j * d + i] = out[j] * (jac[j * d + i] - mean[i]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(centers: &[f64], sigma: f64) -> NrbfNetwork {
        NrbfNetwork::new(
            centers
                .iter()
                .map(|&c| GaussianValidity::new(vec![c], vec![sigma]).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_member_is_one() {
        let net = one_d(&[0.3], 0.1);
        assert_eq!(net.evaluate(&[0.95]).unwrap(), vec![1.0]);
    }

    #[test]
    fn symmetric_members_split_evenly() {
        let net = one_d(&[0.2, 0.8], 0.25);
        let w = net.evaluate(&[0.5]).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-15 && (w[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn hand_evaluated_weights() {
        let net = one_d(&[0.25, 0.75], 0.25);
        let w = net.evaluate(&[0.25]).unwrap();
        let e = (-2.0f64).exp();
        assert!((w[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((w[1] - e / (1.0 + e)).abs() < 1e-15);
        assert!((w[0] - 0.8808).abs() < 1e-4);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let net = one_d(&[0.25, 0.75], 0.25);
        assert!(matches!(net.evaluate(&[0.1, 0.2]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn nonpositive_sigma_is_rejected() {
        assert!(GaussianValidity::new(vec![0.5], vec![0.0]).is_err());
    }

    #[test]
    fn far_query_does_not_underflow() {
        let net = one_d(&[0.0, 1.0], 1e-3);
        let w = net.evaluate(&[50.0]).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let net = NrbfNetwork::new(vec![
            GaussianValidity::new(vec![0.2, 0.3], vec![0.3, 0.2]).unwrap(),
            GaussianValidity::new(vec![0.7, 0.6], vec![0.25, 0.4]).unwrap(),
            GaussianValidity::new(vec![0.5, 0.9], vec![0.1, 0.3]).unwrap(),
        ])
        .unwrap();
        let z = [0.41, 0.57];
        let mut w = [0.0; 3];
        let mut jac = [0.0; 6];
        net.evaluate_with_jacobian(&z, &mut w, &mut jac);
        let h = 1e-6;
        for i in 0..2 {
            let mut zp = z;
            let mut zm = z;
            zp[i] += h;
            zm[i] -= h;
            let wp = net.evaluate(&zp).unwrap();
            let wm = net.evaluate(&zm).unwrap();
            for j in 0..3 {
                let fd = (wp[j] - wm[j]) / (2.0 * h);
                assert!((fd - jac[j * 2 + i]).abs() < 1e-7, "{fd} vs {}", jac[j * 2 + i]);
            }
        }
    }
}
