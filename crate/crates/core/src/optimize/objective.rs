//! Simulation-error objective with optional space-filling penalty, and its
//! exact gradient by reverse accumulation through the state recursion.

use crate::error::{check_len, Error, Result};
use crate::metrics::{psi::nearest_raw, UniformGrid};
use crate::model::{LmssnModel, DEFAULT_DIVERGENCE_GUARD};
use crate::regularization::PenaltyMode;

/// Everything needed to score a parameter vector. Validity functions and the
/// scaling transform of `skeleton` stay frozen; only the local model
/// parameters vary.
#[derive(Debug, Clone)]
pub struct ObjectiveSpec {
    pub skeleton: LmssnModel,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    pub penalty: PenaltyMode,
    pub grid: UniformGrid,
    pub guard: f64,
}

/// Objective value and its parts. A diverged simulation reports `+inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    pub value: f64,
    pub loss: f64,
    pub psi_p: f64,
    pub diverged: bool,
}

impl ObjectiveValue {
    fn diverged() -> Self {
        Self {
            value: f64::INFINITY,
            loss: f64::INFINITY,
            psi_p: f64::NAN,
            diverged: true,
        }
    }
}

/// Forward pass record kept for the backward sweep.
struct Tape {
    n: usize,
    d: usize,
    n_sx: usize,
    n_sy: usize,
    /// raw states `x(k)`, row-major `N x n_x`
    x: Vec<f64>,
    /// scaled extended points, `N x d`
    z: Vec<f64>,
    phi_x: Vec<f64>,
    phi_y: Vec<f64>,
    /// `dPhi/dz`, `N x n_lm x d`
    jac_x: Vec<f64>,
    jac_y: Vec<f64>,
    /// local state predictions `f_j(k)`, `N x n_lm x n_x`
    local_x: Vec<f64>,
    /// local outputs `h_j(k)`, `N x n_lm`
    local_y: Vec<f64>,
    y_hat: Vec<f64>,
}

impl ObjectiveSpec {
    pub fn new(
        skeleton: LmssnModel,
        u: Vec<f64>,
        y: Vec<f64>,
        penalty: PenaltyMode,
        grid: UniformGrid,
    ) -> Result<Self> {
        check_len(u.len(), y.len(), "output sequence")?;
        check_len(skeleton.ext_dim(), grid.dim(), "grid dimension")?;
        if u.is_empty() {
            return Err(Error::InvalidArgument("empty training data".into()));
        }
        penalty.validate()?;
        Ok(Self {
            skeleton,
            u,
            y,
            penalty,
            grid,
            guard: DEFAULT_DIVERGENCE_GUARD,
        })
    }

    pub fn num_params(&self) -> usize {
        self.skeleton.layout().len()
    }

    pub fn initial_parameters(&self) -> Vec<f64> {
        self.skeleton.pack_parameters()
    }

    pub fn model(&self, theta: &[f64]) -> Result<LmssnModel> {
        self.skeleton.with_parameters(theta)
    }

    fn needs_psi(&self) -> bool {
        !matches!(self.penalty, PenaltyMode::None)
    }

    /// Objective value. `psi_p` is always computed so it can be logged.
    pub fn evaluate(&self, theta: &[f64]) -> Result<ObjectiveValue> {
        let model = self.model(theta)?;
        let Some(tape) = self.forward(&model) else {
            return Ok(ObjectiveValue::diverged());
        };
        let loss = self.loss(&tape);
        let psi = nearest_raw(&tape.z, &self.grid, tape.d).mean_distance();
        Ok(ObjectiveValue {
            value: loss + self.penalty.penalty(psi),
            loss,
            psi_p: psi,
            diverged: false,
        })
    }

    /// Value and exact gradient. `None` when the simulation diverges.
    pub fn value_and_gradient(&self, theta: &[f64]) -> Result<Option<(ObjectiveValue, Vec<f64>)>> {
        let model = self.model(theta)?;
        let Some(tape) = self.forward(&model) else {
            return Ok(None);
        };
        let loss = self.loss(&tape);
        let nearest = nearest_raw(&tape.z, &self.grid, tape.d);
        let psi = nearest.mean_distance();
        let value = ObjectiveValue {
            value: loss + self.penalty.penalty(psi),
            loss,
            psi_p: psi,
            diverged: false,
        };

        // dP/dz(k) accumulated per trajectory point
        let mut dpen_dz = vec![0.0; tape.n * tape.d];
        let dp_dpsi = self.penalty.derivative(psi);
        if self.needs_psi() && dp_dpsi != 0.0 {
            let w = dp_dpsi / self.grid.len() as f64;
            for (g, (&k, &dist)) in self
                .grid
                .iter()
                .zip(nearest.index.iter().zip(&nearest.distance))
            {
                if dist > 0.0 {
                    for i in 0..tape.d {
                        dpen_dz[k * tape.d + i] += w * (tape.z[k * tape.d + i] - g[i]) / dist;
                    }
                }
            }
        }
        let grad = self.backward(&model, &tape, &dpen_dz);
        Ok(Some((value, grad)))
    }

    /// Gradient only; errors on divergence.
    pub fn gradient_reverse(&self, theta: &[f64]) -> Result<Vec<f64>> {
        match self.value_and_gradient(theta)? {
            Some((_, g)) => Ok(g),
            None => Err(Error::Divergence {
                step: 0,
                magnitude: f64::INFINITY,
            }),
        }
    }

    /// Central finite differences of [`Self::evaluate`].
    pub fn gradient_fd(&self, theta: &[f64], h: f64) -> Result<Vec<f64>> {
        if !(h > 0.0) {
            return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
        }
        let mut t = theta.to_vec();
        (0..theta.len())
            .map(|i| {
                t[i] = theta[i] + h;
                let fp = self.evaluate(&t)?.value;
                t[i] = theta[i] - h;
                let fm = self.evaluate(&t)?.value;
                t[i] = theta[i];
                Ok((fp - fm) / (2.0 * h))
            })
            .collect()
    }

    fn loss(&self, tape: &Tape) -> f64 {
        self.y
            .iter()
            .zip(&tape.y_hat)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    fn forward(&self, model: &LmssnModel) -> Option<Tape> {
        let n = self.u.len();
        let nx = model.n_x;
        let d = model.ext_dim();
        let n_sx = model.state_lms.len();
        let n_sy = model.output_lms.len();
        let mut tape = Tape {
            n,
            d,
            n_sx,
            n_sy,
            x: Vec::with_capacity(n * nx),
            z: vec![0.0; n * d],
            phi_x: vec![0.0; n * n_sx],
            phi_y: vec![0.0; n * n_sy],
            jac_x: vec![0.0; n * n_sx * d],
            jac_y: vec![0.0; n * n_sy * d],
            local_x: vec![0.0; n * n_sx * nx],
            local_y: vec![0.0; n * n_sy],
            y_hat: vec![0.0; n],
        };
        let mut x = model.x0.clone();
        let mut ext = vec![0.0; d];
        for k in 0..n {
            let u = self.u[k];
            tape.x.extend_from_slice(&x);
            ext[..nx].copy_from_slice(&x);
            ext[nx] = u;
            let z = &mut tape.z[k * d..(k + 1) * d];
            model.scaling.scale_into(&ext, z);
            model.state_validity.evaluate_with_jacobian(
                z,
                &mut tape.phi_x[k * n_sx..(k + 1) * n_sx],
                &mut tape.jac_x[k * n_sx * d..(k + 1) * n_sx * d],
            );
            model.output_validity.evaluate_with_jacobian(
                z,
                &mut tape.phi_y[k * n_sy..(k + 1) * n_sy],
                &mut tape.jac_y[k * n_sy * d..(k + 1) * n_sy * d],
            );
            let mut y = 0.0;
            for (j, lm) in model.output_lms.iter().enumerate() {
                let h = lm.apply(&x, u);
                tape.local_y[k * n_sy + j] = h;
                y += tape.phi_y[k * n_sy + j] * h;
            }
            if !y.is_finite() {
                return None;
            }
            tape.y_hat[k] = y;
            if k + 1 == n {
                break;
            }
            let mut next = vec![0.0; nx];
            for (j, lm) in model.state_lms.iter().enumerate() {
                let f = &mut tape.local_x[(k * n_sx + j) * nx..(k * n_sx + j + 1) * nx];
                lm.apply_into(&x, u, f);
                let w = tape.phi_x[k * n_sx + j];
                for i in 0..nx {
                    next[i] += w * f[i];
                }
            }
            if !next.iter().all(|v| v.abs() <= self.guard) {
                return None;
            }
            x = next;
        }
        Some(tape)
    }

    fn backward(&self, model: &LmssnModel, tape: &Tape, dpen_dz: &[f64]) -> Vec<f64> {
        let layout = model.layout();
        let nx = model.n_x;
        let d = tape.d;
        let (n_sx, n_sy) = (tape.n_sx, tape.n_sy);
        let range = &model.scaling.range;
        let mut grad = vec![0.0; layout.len()];
        // adjoint of x(k+1)
        let mut adj = vec![0.0; nx];
        let mut new_adj = vec![0.0; nx];
        for k in (0..tape.n).rev() {
            let xk = &tape.x[k * nx..(k + 1) * nx];
            let u = self.u[k];
            new_adj.iter_mut().for_each(|v| *v = 0.0);

            if k + 1 < tape.n {
                for (j, lm) in model.state_lms.iter().enumerate() {
                    let w = tape.phi_x[k * n_sx + j];
                    let off = layout.state_offset(j);
                    for r in 0..nx {
                        let g = w * adj[r];
                        for c in 0..nx {
                            grad[off + r * nx + c] += g * xk[c];
                            new_adj[c] += g * lm.a[(r, c)];
                        }
                        grad[off + nx * nx + r] += g * u;
                        grad[off + nx * nx + nx + r] += g;
                    }
                    // through the validity weights
                    let f = &tape.local_x[(k * n_sx + j) * nx..(k * n_sx + j + 1) * nx];
                    let s: f64 = f.iter().zip(&adj).map(|(a, b)| a * b).sum();
                    let jac = &tape.jac_x[(k * n_sx + j) * d..(k * n_sx + j + 1) * d];
                    for i in 0..nx {
                        new_adj[i] += s * jac[i] / range[i];
                    }
                }
            }

            let r = -2.0 * (self.y[k] - tape.y_hat[k]);
            if r != 0.0 {
                for (j, lm) in model.output_lms.iter().enumerate() {
                    let w = tape.phi_y[k * n_sy + j];
                    let off = layout.output_offset(j);
                    for i in 0..nx {
                        grad[off + i] += r * w * xk[i];
                        new_adj[i] += r * w * lm.c[i];
                    }
                    grad[off + nx] += r * w * u;
                    grad[off + nx + 1] += r * w;
                    let h = tape.local_y[k * n_sy + j];
                    let jac = &tape.jac_y[(k * n_sy + j) * d..(k * n_sy + j + 1) * d];
                    for i in 0..nx {
                        new_adj[i] += r * h * jac[i] / range[i];
                    }
                }
            }

            for i in 0..nx {
                new_adj[i] += dpen_dz[k * d + i] / range[i];
            }
            std::mem::swap(&mut adj, &mut new_adj);
        }
        if layout.train_x0 {
            let off = layout.x0_offset();
            grad[off..off + nx].copy_from_slice(&adj);
        }
        grad
    }
}
