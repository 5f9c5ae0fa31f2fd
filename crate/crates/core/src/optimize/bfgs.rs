//! Dense BFGS with a strong-Wolfe line search.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    /// Stop when the relative objective decrease of an accepted step falls below this.
    pub loss_tol: f64,
    pub grad_tol: f64,
    /// Stop when an accepted step (or the line search bracket) is shorter than this.
    pub min_step: f64,
    pub max_iter: usize,
    pub c1: f64,
    pub c2: f64,
    pub max_line_search_evals: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            loss_tol: 1e-9,
            grad_tol: 1e-6,
            min_step: 1e-12,
            max_iter: 5000,
            c1: 1e-4,
            c2: 0.9,
            max_line_search_evals: 40,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.loss_tol, self.grad_tol, self.min_step];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidArgument("optimizer tolerances must be positive".into()));
        }
        if self.max_iter == 0 || self.max_line_search_evals == 0 {
            return Err(Error::InvalidArgument("iteration limits must be >= 1".into()));
        }
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::InvalidArgument("line search needs 0 < c1 < c2 < 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TerminationReason {
    LossTol,
    GradTol,
    MinStep,
    MaxIter,
    Divergence,
}

impl std::fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::LossTol => "loss_tol",
            Self::GradTol => "grad_tol",
            Self::MinStep => "min_step",
            Self::MaxIter => "max_iter",
            Self::Divergence => "divergence",
        };
        f.write_str(s)
    }
}

/// A differentiable function. `None` signals a point outside the domain
/// (e.g. a diverging simulation); the line search treats it as `+inf`.
pub trait Objective {
    fn value_and_gradient(&mut self, x: &[f64]) -> Option<(f64, Vec<f64>)>;
}

impl<F> Objective for F
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    fn value_and_gradient(&mut self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        self(x)
    }
}

/// State passed to the per-iteration observer.
#[derive(Debug, Clone, Copy)]
pub struct IterationInfo<'a> {
    pub iteration: usize,
    pub x: &'a [f64],
    pub value: f64,
    pub grad_norm: f64,
    /// Length of the accepted step (0 at iteration 0).
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub reason: TerminationReason,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct Trial {
    alpha: f64,
    value: f64,
    grad: Vec<f64>,
}

struct LineSearch<'a, O: Objective> {
    obj: &'a mut O,
    x: &'a [f64],
    dir: &'a [f64],
    f0: f64,
    slope0: f64,
    cfg: &'a OptimizerConfig,
    evals: usize,
    trial: Vec<f64>,
}

impl<O: Objective> LineSearch<'_, O> {
    fn eval(&mut self, alpha: f64) -> Trial {
        self.evals += 1;
        for i in 0..self.x.len() {
            self.trial[i] = self.x[i] + alpha * self.dir[i];
        }
        match self.obj.value_and_gradient(&self.trial) {
            Some((v, g)) if v.is_finite() => Trial { alpha, value: v, grad: g },
            _ => Trial {
                alpha,
                value: f64::INFINITY,
                grad: Vec::new(),
            },
        }
    }

    fn armijo(&self, t: &Trial) -> bool {
        t.value <= self.f0 + self.cfg.c1 * t.alpha * self.slope0
    }

    fn curvature(&self, t: &Trial) -> bool {
        dot(&t.grad, self.dir).abs() <= -self.cfg.c2 * self.slope0
    }

    /// Bracketing phase; returns an accepted trial or `None`.
    fn search(&mut self) -> Option<Trial> {
        let dir_norm = norm(self.dir);
        let mut prev = Trial {
            alpha: 0.0,
            value: self.f0,
            grad: Vec::new(),
        };
        let mut prev_slope = self.slope0;
        let mut alpha = 1.0;
        let mut first = true;
        while self.evals < self.cfg.max_line_search_evals {
            let t = self.eval(alpha);
            if !self.armijo(&t) || (!first && t.value >= prev.value) {
                return self.zoom(prev, prev_slope, t, dir_norm);
            }
            let slope = dot(&t.grad, self.dir);
            if self.curvature(&t) {
                return Some(t);
            }
            if slope >= 0.0 {
                return self.zoom(t, slope, prev, dir_norm);
            }
            prev = t;
            prev_slope = slope;
            alpha *= 2.0;
            first = false;
        }
        (prev.alpha > 0.0).then_some(prev)
    }

    fn zoom(&mut self, mut lo: Trial, mut lo_slope: f64, mut hi: Trial, dir_norm: f64) -> Option<Trial> {
        while self.evals < self.cfg.max_line_search_evals {
            let width = hi.alpha - lo.alpha;
            if width.abs() * dir_norm < self.cfg.min_step {
                break;
            }
            // safeguarded quadratic interpolation, bisection when hi is unusable
            let mut alpha = if hi.value.is_finite() {
                let denom = 2.0 * (hi.value - lo.value - lo_slope * width);
                if denom > 0.0 {
                    lo.alpha - lo_slope * width * width / denom
                } else {
                    lo.alpha + 0.5 * width
                }
            } else {
                lo.alpha + 0.5 * width
            };
            let (a, b) = if lo.alpha < hi.alpha {
                (lo.alpha + 0.1 * width.abs(), hi.alpha - 0.1 * width.abs())
            } else {
                (hi.alpha + 0.1 * width.abs(), lo.alpha - 0.1 * width.abs())
            };
            if !(alpha >= a && alpha <= b) {
                alpha = lo.alpha + 0.5 * width;
            }
            let t = self.eval(alpha);
            if !self.armijo(&t) || t.value >= lo.value {
                hi = t;
            } else {
                let slope = dot(&t.grad, self.dir);
                if self.curvature(&t) {
                    return Some(t);
                }
                if slope * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = lo;
                }
                lo = t;
                lo_slope = slope;
            }
        }
        // fall back to the best sufficient-decrease point seen
        (lo.alpha > 0.0 && lo.value < self.f0).then_some(lo)
    }
}

/// Minimizes `obj` from `x0`. The observer sees iteration 0 (the start
/// point) and every accepted iterate.
pub fn minimize<O: Objective>(
    obj: &mut O,
    x0: &[f64],
    cfg: &OptimizerConfig,
    mut observer: impl FnMut(&IterationInfo),
) -> Result<Minimum> {
    cfg.validate()?;
    let n = x0.len();
    let mut x = x0.to_vec();
    let Some((mut f, mut g)) = obj.value_and_gradient(&x).filter(|(v, _)| v.is_finite()) else {
        return Ok(Minimum {
            x,
            value: f64::INFINITY,
            grad_norm: f64::NAN,
            iterations: 0,
            evaluations: 1,
            reason: TerminationReason::Divergence,
        });
    };
    let mut evaluations = 1;
    let mut gnorm = norm(&g);
    observer(&IterationInfo {
        iteration: 0,
        x: &x,
        value: f,
        grad_norm: gnorm,
        step: 0.0,
    });
    let finish = |x: Vec<f64>, value, grad_norm, iterations, evaluations, reason| Minimum {
        x,
        value,
        grad_norm,
        iterations,
        evaluations,
        reason,
    };
    if gnorm <= cfg.grad_tol {
        return Ok(finish(x, f, gnorm, 0, evaluations, TerminationReason::GradTol));
    }

    let identity_scale = |gn: f64| if gn > 1.0 { 1.0 / gn } else { 1.0 };
    let mut h = vec![0.0; n * n];
    let reset = |h: &mut [f64], s: f64| {
        h.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            h[i * n + i] = s;
        }
    };
    reset(&mut h, identity_scale(gnorm));
    let mut updated = false;
    let mut dir = vec![0.0; n];

    for iter in 1..=cfg.max_iter {
        for i in 0..n {
            dir[i] = -dot(&h[i * n..(i + 1) * n], &g);
        }
        let mut slope = dot(&dir, &g);
        if !(slope < 0.0) {
            reset(&mut h, identity_scale(gnorm));
            updated = false;
            for i in 0..n {
                dir[i] = -h[i * n + i] * g[i];
            }
            slope = dot(&dir, &g);
        }
        let mut ls = LineSearch {
            obj: &mut *obj,
            x: &x,
            dir: &dir,
            f0: f,
            slope0: slope,
            cfg,
            evals: 0,
            trial: vec![0.0; n],
        };
        let accepted = ls.search();
        evaluations += ls.evals;
        let Some(t) = accepted else {
            return Ok(finish(x, f, gnorm, iter - 1, evaluations, TerminationReason::MinStep));
        };

        let s: Vec<f64> = dir.iter().map(|d| t.alpha * d).collect();
        let yv: Vec<f64> = t.grad.iter().zip(&g).map(|(a, b)| a - b).collect();
        let step = norm(&s);
        let f_prev = f;
        for i in 0..n {
            x[i] += s[i];
        }
        f = t.value;
        g = t.grad;
        gnorm = norm(&g);
        observer(&IterationInfo {
            iteration: iter,
            x: &x,
            value: f,
            grad_norm: gnorm,
            step,
        });

        if gnorm <= cfg.grad_tol {
            return Ok(finish(x, f, gnorm, iter, evaluations, TerminationReason::GradTol));
        }
        if f_prev - f <= cfg.loss_tol * f_prev.abs().max(f64::MIN_POSITIVE) {
            return Ok(finish(x, f, gnorm, iter, evaluations, TerminationReason::LossTol));
        }
        if step < cfg.min_step {
            return Ok(finish(x, f, gnorm, iter, evaluations, TerminationReason::MinStep));
        }

        let sy = dot(&s, &yv);
        if sy > 1e-10 {
            if !updated {
                reset(&mut h, sy / dot(&yv, &yv));
                updated = true;
            }
            // H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], &yv)).collect();
            let yhy = dot(&yv, &hy);
            let coef = rho * rho * yhy + rho;
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
        }
    }
    Ok(finish(x, f, gnorm, cfg.max_iter, evaluations, TerminationReason::MaxIter))
}
