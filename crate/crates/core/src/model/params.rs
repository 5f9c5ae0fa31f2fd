//! Flat parameter vector layout.
//!
//! Order: for each state LM in index order, `A` row-major, then `b`, then
//! `o`; then for each output LM `c`, `d`, `p`; finally `x0` when it is
//! trainable. Validity functions and scaling are not part of the vector.

use nalgebra::DMatrix;

use super::{LmssnModel, OutputLocalModel, StateLocalModel};
use crate::error::{check_len, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParameterLayout {
    pub n_x: usize,
    pub n_state_lm: usize,
    pub n_output_lm: usize,
    pub train_x0: bool,
}

impl ParameterLayout {
    pub fn state_lm_len(&self) -> usize {
        self.n_x * self.n_x + 2 * self.n_x
    }

    pub fn output_lm_len(&self) -> usize {
        self.n_x + 2
    }

    pub fn state_offset(&self, j: usize) -> usize {
        j * self.state_lm_len()
    }

    pub fn output_offset(&self, j: usize) -> usize {
        self.n_state_lm * self.state_lm_len() + j * self.output_lm_len()
    }

    pub fn x0_offset(&self) -> usize {
        self.output_offset(self.n_output_lm)
    }

    pub fn len(&self) -> usize {
        self.x0_offset() + if self.train_x0 { self.n_x } else { 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl LmssnModel {
    pub fn pack_parameters(&self) -> Vec<f64> {
        let layout = self.layout();
        let mut theta = Vec::with_capacity(layout.len());
        for lm in &self.state_lms {
            for i in 0..self.n_x {
                for j in 0..self.n_x {
                    theta.push(lm.a[(i, j)]);
                }
            }
            theta.extend_from_slice(&lm.b);
            theta.extend_from_slice(&lm.o);
        }
        for lm in &self.output_lms {
            theta.extend_from_slice(&lm.c);
            theta.push(lm.d);
            theta.push(lm.p);
        }
        if self.train_x0 {
            theta.extend_from_slice(&self.x0);
        }
        theta
    }

    /// Overwrites the local model parameters (and `x0` when trainable) from `theta`.
    pub fn unpack_parameters(&mut self, theta: &[f64]) -> Result<()> {
        let layout = self.layout();
        check_len(layout.len(), theta.len(), "parameter vector")?;
        let n = self.n_x;
        let mut it = theta.iter().copied();
        let mut take = |k: usize| -> Vec<f64> { it.by_ref().take(k).collect() };
        let mut state = Vec::with_capacity(layout.n_state_lm);
        for _ in 0..layout.n_state_lm {
            let a = DMatrix::from_row_slice(n, n, &take(n * n));
            state.push(StateLocalModel {
                a,
                b: take(n),
                o: take(n),
            });
        }
        let mut output = Vec::with_capacity(layout.n_output_lm);
        for _ in 0..layout.n_output_lm {
            let c = take(n);
            let dp = take(2);
            output.push(OutputLocalModel {
                c,
                d: dp[0],
                p: dp[1],
            });
        }
        if layout.train_x0 {
            self.x0 = take(n);
        }
        self.state_lms = state;
        self.output_lms = output;
        Ok(())
    }

    /// Copy of this model carrying `theta`.
    pub fn with_parameters(&self, theta: &[f64]) -> Result<Self> {
        let mut m = self.clone();
        m.unpack_parameters(theta)?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GaussianValidity, NrbfNetwork, ScalingTransform};
    use proptest::prelude::*;

    fn skeleton(n_x: usize, n_lm: usize) -> LmssnModel {
        let d = n_x + 1;
        let net = NrbfNetwork::new(
            (0..n_lm)
                .map(|j| {
                    GaussianValidity::new(vec![(j as f64 + 0.5) / n_lm as f64; d], vec![0.3; d])
                        .unwrap()
                })
                .collect(),
        )
        .unwrap();
        LmssnModel::new(
            vec![StateLocalModel::zeros(n_x); n_lm],
            vec![OutputLocalModel::zeros(n_x); n_lm],
            net.clone(),
            net,
            ScalingTransform::identity(d),
        )
        .unwrap()
    }

    #[test]
    fn length_formula() {
        let m = skeleton(2, 2);
        assert_eq!(m.layout().len(), 24);
        assert_eq!(m.pack_parameters().len(), 24);
        let mut m = skeleton(3, 4);
        m.train_x0 = true;
        assert_eq!(m.layout().len(), 4 * 15 + 4 * 5 + 3);
    }

    #[test]
    fn wrong_length_is_rejected() {
        let mut m = skeleton(2, 2);
        assert!(m.unpack_parameters(&[0.0; 23]).is_err());
    }

    #[test]
    fn row_major_order() {
        let mut m = skeleton(2, 1);
        let theta: Vec<f64> = (0..m.layout().len()).map(|v| v as f64).collect();
        m.unpack_parameters(&theta).unwrap();
        assert_eq!(m.state_lms[0].a[(0, 1)], 1.0);
        assert_eq!(m.state_lms[0].a[(1, 0)], 2.0);
        assert_eq!(m.state_lms[0].b, vec![4.0, 5.0]);
        assert_eq!(m.output_lms[0].p, 11.0);
    }

    proptest! {
        #[test]
        fn pack_unpack_identity(
            seed in prop::collection::vec(-5.0f64..5.0, 24 + 2),
            train_x0 in any::<bool>(),
        ) {
            let mut m = skeleton(2, 2);
            m.train_x0 = train_x0;
            let theta = &seed[..m.layout().len()];
            m.unpack_parameters(theta).unwrap();
            prop_assert_eq!(m.pack_parameters(), theta.to_vec());
        }
    }
}
