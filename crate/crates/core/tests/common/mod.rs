//! Random models and signals shared by the integration tests.
#![allow(dead_code)]

use lmssn::model::{GaussianValidity, LmssnModel, NrbfNetwork, OutputLocalModel, ScalingTransform, StateLocalModel};
use lmssn::regularization::PenaltyMode;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_network(rng: &mut ChaCha8Rng, n_lm: usize, d: usize) -> NrbfNetwork {
    let members = (0..n_lm)
        .map(|_| {
            GaussianValidity::new(
                (0..d).map(|_| rng.random_range(0.0..1.0)).collect(),
                (0..d).map(|_| rng.random_range(0.2..0.6)).collect(),
            )
            .unwrap()
        })
        .collect();
    NrbfNetwork::new(members).unwrap()
}

pub fn random_model(seed: u64, n_x: usize, n_lm: usize, u: &[f64]) -> LmssnModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = n_x + 1;
    let state_lms = (0..n_lm)
        .map(|_| {
            let a = DMatrix::from_fn(n_x, n_x, |_, _| rng.random_range(-0.4..0.4));
            StateLocalModel {
                a,
                b: (0..n_x).map(|_| rng.random_range(-1.0..1.0)).collect(),
                o: (0..n_x).map(|_| rng.random_range(-0.2..0.2)).collect(),
            }
        })
        .collect();
    let output_lms = (0..n_lm)
        .map(|_| OutputLocalModel {
            c: (0..n_x).map(|_| rng.random_range(-1.0..1.0)).collect(),
            d: rng.random_range(-0.5..0.5),
            p: rng.random_range(-0.2..0.2),
        })
        .collect();
    let sv = random_network(&mut rng, n_lm, d);
    let ov = random_network(&mut rng, n_lm, d);
    let mut m = LmssnModel::new(state_lms, output_lms, sv, ov, ScalingTransform::identity(d)).unwrap();
    if rng.random_bool(0.5) {
        m.train_x0 = true;
        m.x0 = (0..n_x).map(|_| rng.random_range(-0.3..0.3)).collect();
    }
    let traj = m.simulate(u).unwrap();
    m.scaling = ScalingTransform::from_points(&traj.points, d).unwrap();
    m
}

pub fn random_signal(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn rel_gap(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(b).max(1.0)
}

pub fn modes(psi: f64) -> [PenaltyMode; 3] {
    [
        PenaltyMode::None,
        PenaltyMode::PsiSquared { lambda: 3.0 },
        PenaltyMode::TargetDeviation {
            lambda: 5.0,
            target: 0.5 * psi,
        },
    ]
}
