//! Local model state space network: local affine state and output models
//! blended by normalized Gaussian validity functions over the scaled
//! extended input/state space `[x, u]`.

mod document;
mod params;
mod scaling;
mod validity;

use nalgebra::DMatrix;

pub use document::{ModelDocument, MODEL_SCHEMA_VERSION};
pub use params::ParameterLayout;
pub use scaling::{ScalingTransform, MIN_RANGE};
pub use validity::{GaussianValidity, NrbfNetwork};

use crate::error::{check_len, Error, Result};

/// States whose magnitude exceeds this bound abort a simulation.
pub const DEFAULT_DIVERGENCE_GUARD: f64 = 1e6;

/// Affine state model `A x + b u + o`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateLocalModel {
    pub a: DMatrix<f64>,
    pub b: Vec<f64>,
    pub o: Vec<f64>,
}

impl StateLocalModel {
    pub fn zeros(n_x: usize) -> Self {
        Self {
            a: DMatrix::zeros(n_x, n_x),
            b: vec![0.0; n_x],
            o: vec![0.0; n_x],
        }
    }

    pub fn order(&self) -> usize {
        self.b.len()
    }

    #[inline]
    pub(crate) fn apply_into(&self, x: &[f64], u: f64, out: &mut [f64]) {
        let n = self.b.len();
        for i in 0..n {
            let mut acc = self.b[i] * u + self.o[i];
            for j in 0..n {
                acc += self.a[(i, j)] * x[j];
            }
            out[i] = acc;
        }
    }

    fn is_finite(&self) -> bool {
        self.a.iter().chain(&self.b).chain(&self.o).all(|v| v.is_finite())
    }
}

/// Affine output model `c^T x + d u + p`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputLocalModel {
    pub c: Vec<f64>,
    pub d: f64,
    pub p: f64,
}

impl OutputLocalModel {
    pub fn zeros(n_x: usize) -> Self {
        Self {
            c: vec![0.0; n_x],
            d: 0.0,
            p: 0.0,
        }
    }

    #[inline]
    pub(crate) fn apply(&self, x: &[f64], u: f64) -> f64 {
        self.c.iter().zip(x).map(|(c, x)| c * x).sum::<f64>() + self.d * u + self.p
    }

    fn is_finite(&self) -> bool {
        self.c.iter().all(|v| v.is_finite()) && self.d.is_finite() && self.p.is_finite()
    }
}

/// Free-run simulation result.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Extended points `[x(k), u(k)]` in raw coordinates, row-major `N x (n_x + n_u)`.
    pub points: Vec<f64>,
    pub outputs: Vec<f64>,
    pub dim: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmssnModel {
    pub n_x: usize,
    pub n_u: usize,
    pub state_lms: Vec<StateLocalModel>,
    pub output_lms: Vec<OutputLocalModel>,
    pub state_validity: NrbfNetwork,
    pub output_validity: NrbfNetwork,
    pub scaling: ScalingTransform,
    pub x0: Vec<f64>,
    /// Whether `x0` is appended to the optimized parameter vector.
    pub train_x0: bool,
}

impl LmssnModel {
    /// Builds and validates a model. `x0` defaults to the origin.
    pub fn new(
        state_lms: Vec<StateLocalModel>,
        output_lms: Vec<OutputLocalModel>,
        state_validity: NrbfNetwork,
        output_validity: NrbfNetwork,
        scaling: ScalingTransform,
    ) -> Result<Self> {
        let n_x = state_lms
            .first()
            .map(StateLocalModel::order)
            .ok_or_else(|| Error::InvalidArgument("model needs at least one state LM".into()))?;
        let model = Self {
            n_x,
            n_u: 1,
            state_lms,
            output_lms,
            state_validity,
            output_validity,
            scaling,
            x0: vec![0.0; n_x],
            train_x0: false,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.n_x + self.n_u;
        check_len(self.state_lms.len(), self.state_validity.len(), "state LM count")?;
        check_len(self.output_lms.len(), self.output_validity.len(), "output LM count")?;
        check_len(d, self.state_validity.dim(), "state validity dimension")?;
        check_len(d, self.output_validity.dim(), "output validity dimension")?;
        check_len(d, self.scaling.dim(), "scaling dimension")?;
        check_len(self.n_x, self.x0.len(), "initial state")?;
        for lm in &self.state_lms {
            check_len(self.n_x, lm.b.len(), "state LM b")?;
            check_len(self.n_x, lm.o.len(), "state LM o")?;
            if lm.a.nrows() != self.n_x || lm.a.ncols() != self.n_x {
                return Err(Error::Dimension {
                    expected: self.n_x,
                    actual: lm.a.nrows(),
                    context: "state LM A",
                });
            }
            if !lm.is_finite() {
                return Err(Error::NonFinite("state LM parameters"));
            }
        }
        for lm in &self.output_lms {
            check_len(self.n_x, lm.c.len(), "output LM c")?;
            if !lm.is_finite() {
                return Err(Error::NonFinite("output LM parameters"));
            }
        }
        if self.n_u != 1 {
            return Err(Error::InvalidArgument("only single-input models are supported".into()));
        }
        Ok(())
    }

    /// Extended input/state dimension `n_x + n_u`.
    pub fn ext_dim(&self) -> usize {
        self.n_x + self.n_u
    }

    pub fn layout(&self) -> ParameterLayout {
        ParameterLayout {
            n_x: self.n_x,
            n_state_lm: self.state_lms.len(),
            n_output_lm: self.output_lms.len(),
            train_x0: self.train_x0,
        }
    }

    /// One step of the state recursion plus the output at the current sample.
    pub fn step(&self, x: &[f64], u: f64) -> Result<(Vec<f64>, f64)> {
        check_len(self.n_x, x.len(), "state vector")?;
        let mut ws = Workspace::new(self);
        let mut next = vec![0.0; self.n_x];
        let y = self.step_into(x, u, &mut ws, &mut next);
        if !y.is_finite() || next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model step"));
        }
        Ok((next, y))
    }

    fn step_into(&self, x: &[f64], u: f64, ws: &mut Workspace, next: &mut [f64]) -> f64 {
        let n = self.n_x;
        ws.ext[..n].copy_from_slice(x);
        ws.ext[n] = u;
        self.scaling.scale_into(&ws.ext, &mut ws.z);
        self.state_validity.evaluate_into(&ws.z, &mut ws.phi_x);
        self.output_validity.evaluate_into(&ws.z, &mut ws.phi_y);
        next.iter_mut().for_each(|v| *v = 0.0);
        for (lm, &w) in self.state_lms.iter().zip(&ws.phi_x) {
            lm.apply_into(x, u, &mut ws.local);
            for i in 0..n {
                next[i] += w * ws.local[i];
            }
        }
        self.output_lms
            .iter()
            .zip(&ws.phi_y)
            .map(|(lm, &w)| w * lm.apply(x, u))
            .sum()
    }

    pub fn simulate(&self, u: &[f64]) -> Result<Trajectory> {
        self.simulate_with_guard(u, DEFAULT_DIVERGENCE_GUARD)
    }

    /// Free-run simulation from `x0`. Returns `Error::Divergence` as soon as
    /// any state component leaves `[-guard, guard]` or turns non-finite.
    pub fn simulate_with_guard(&self, u: &[f64], guard: f64) -> Result<Trajectory> {
        if u.is_empty() {
            return Err(Error::InvalidArgument("input sequence is empty".into()));
        }
        let n = self.n_x;
        let d = self.ext_dim();
        let mut ws = Workspace::new(self);
        let mut points = Vec::with_capacity(u.len() * d);
        let mut outputs = Vec::with_capacity(u.len());
        let mut x = self.x0.clone();
        let mut next = vec![0.0; n];
        for (k, &uk) in u.iter().enumerate() {
            let y = self.step_into(&x, uk, &mut ws, &mut next);
            points.extend_from_slice(&x);
            points.push(uk);
            outputs.push(y);
            if !y.is_finite() {
                return Err(Error::Divergence {
                    step: k,
                    magnitude: f64::INFINITY,
                });
            }
            if k + 1 < u.len() {
                let mag = next.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if !(mag <= guard) {
                    return Err(Error::Divergence {
                        step: k + 1,
                        magnitude: mag,
                    });
                }
            }
            std::mem::swap(&mut x, &mut next);
        }
        Ok(Trajectory {
            points,
            outputs,
            dim: d,
        })
    }

    /// Spectral radius of every local state transition matrix.
    pub fn local_pole_radii(&self) -> Result<Vec<f64>> {
        self.state_lms.iter().map(|lm| local_pole_radius(&lm.a)).collect()
    }
}

/// Scratch buffers for one simulation step.
pub(crate) struct Workspace {
    pub ext: Vec<f64>,
    pub z: Vec<f64>,
    pub phi_x: Vec<f64>,
    pub phi_y: Vec<f64>,
    pub local: Vec<f64>,
}

impl Workspace {
    pub fn new(model: &LmssnModel) -> Self {
        let d = model.ext_dim();
        Self {
            ext: vec![0.0; d],
            z: vec![0.0; d],
            phi_x: vec![0.0; model.state_lms.len()],
            phi_y: vec![0.0; model.output_lms.len()],
            local: vec![0.0; model.n_x],
        }
    }
}

/// Sum of squared output errors.
pub fn loss_sse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_len(y.len(), y_hat.len(), "simulated output length")?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Root mean squared error.
pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::InvalidArgument("empty sequence".into()));
    }
    Ok((loss_sse(y, y_hat)? / y.len() as f64).sqrt())
}

/// Largest eigenvalue magnitude of a square matrix.
pub fn local_pole_radius(a: &DMatrix<f64>) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::Dimension {
            expected: a.nrows(),
            actual: a.ncols(),
            context: "square matrix",
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix for eigenvalues"));
    }
    let eig = a.complex_eigenvalues();
    Ok(eig.iter().map(|c| c.norm()).fold(0.0, f64::max))
}
