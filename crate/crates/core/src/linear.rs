//! Deterministic linear initialization: least-squares ARX estimate,
//! observer-canonical state space form, and square-root gramian balancing.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::lolimot::Region;
use crate::model::{
    local_pole_radius, LmssnModel, NrbfNetwork, OutputLocalModel, ScalingTransform,
    StateLocalModel,
};

/// Discrete-time SISO state space model.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSs {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Output row.
    pub c: DVector<f64>,
    pub d: f64,
    pub ts: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramianPair {
    pub controllability: DMatrix<f64>,
    pub observability: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Balanced {
    pub system: LinearSs,
    /// `x_original = transform * x_balanced`.
    pub transform: DMatrix<f64>,
    pub hankel_singular_values: Vec<f64>,
}

/// Denominator `[a_1, ..., a_n]` and numerator `[b_1, ..., b_n]` of
/// `y(k) + a_1 y(k-1) + ... = b_1 u(k-1) + ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArxCoefficients {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl LinearSs {
    pub fn order(&self) -> usize {
        self.b.len()
    }

    pub fn simulate(&self, u: &[f64]) -> Vec<f64> {
        let mut x = DVector::zeros(self.order());
        u.iter()
            .map(|&uk| {
                let y = self.c.dot(&x) + self.d * uk;
                x = &self.a * &x + &self.b * uk;
                y
            })
            .collect()
    }

    /// `[D, CB, CAB, CA^2B, ...]`, `len` entries.
    pub fn markov_parameters(&self, len: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(len);
        if len == 0 {
            return out;
        }
        out.push(self.d);
        let mut v = self.b.clone();
        while out.len() < len {
            out.push(self.c.dot(&v));
            v = &self.a * v;
        }
        out
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        local_pole_radius(&self.a)
    }

    pub fn gramians(&self) -> Result<GramianPair> {
        let bb = &self.b * self.b.transpose();
        let cc = &self.c * self.c.transpose();
        Ok(GramianPair {
            controllability: solve_discrete_lyapunov(&self.a, &bb)?,
            observability: solve_discrete_lyapunov(&self.a.transpose(), &cc)?,
        })
    }

    pub fn from_arx(coef: &ArxCoefficients, ts: f64) -> Self {
        let n = coef.a.len();
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            a[(i, 0)] = -coef.a[i];
            if i + 1 < n {
                a[(i, i + 1)] = 1.0;
            }
        }
        let mut c = DVector::zeros(n);
        c[0] = 1.0;
        Self {
            a,
            b: DVector::from_column_slice(&coef.b),
            c,
            d: 0.0,
            ts,
        }
    }
}

/// Least-squares ARX fit of order `(n, n)` with one sample delay.
pub fn estimate_arx(u: &[f64], y: &[f64], n: usize) -> Result<ArxCoefficients> {
    if u.len() != y.len() {
        return Err(Error::Dimension {
            expected: u.len(),
            actual: y.len(),
            context: "ARX output length",
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("model order must be >= 1".into()));
    }
    let len = u.len();
    if len <= 10 * n {
        return Err(Error::InvalidArgument(format!(
            "{len} samples are too few for order {n} (need more than {})",
            10 * n
        )));
    }
    let rows = len - n;
    let phi = DMatrix::from_fn(rows, 2 * n, |r, c| {
        let k = r + n;
        if c < n {
            -y[k - 1 - c]
        } else {
            u[k - 1 - (c - n)]
        }
    });
    let target = DVector::from_fn(rows, |r, _| y[r + n]);
    // Columns are equilibrated so the rank test does not depend on the units of u and y.
    let col_scale = DVector::from_fn(2 * n, |c, _| {
        let norm = phi.column(c).norm();
        if norm > 0.0 {
            1.0 / norm
        } else {
            1.0
        }
    });
    let phi = phi * DMatrix::from_diagonal(&col_scale);
    let gram = phi.transpose() * &phi;
    let rhs = phi.transpose() * &target;

    let eig = SymmetricEigen::new(gram.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || min <= max * 1e-14 {
        return Err(Error::Singular(format!(
            "ARX regressor matrix is rank deficient (eigenvalue ratio {:e})",
            min / max
        )));
    }
    let theta = gram
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("ARX normal equations".into()))?
        .solve(&rhs);
    let resid = (&gram * &theta - &rhs).norm() / rhs.norm().max(f64::MIN_POSITIVE);
    log::debug!("ARX normal-equation residual {resid:e}");
    let theta = theta.component_mul(&col_scale);
    Ok(ArxCoefficients {
        a: theta.rows(0, n).iter().copied().collect(),
        b: theta.rows(n, n).iter().copied().collect(),
    })
}

/// ARX estimate converted to observer-canonical state space form.
pub fn estimate_linear_ss(u: &[f64], y: &[f64], n_x: usize, ts: f64) -> Result<LinearSs> {
    Ok(LinearSs::from_arx(&estimate_arx(u, y, n_x)?, ts))
}

/// Solves `A X A^T - X + Q = 0` by the doubling iteration.
pub fn solve_discrete_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let rho = local_pole_radius(a)?;
    if rho >= 1.0 {
        return Err(Error::Unstable("A", rho));
    }
    if q.nrows() != a.nrows() || !q.is_square() {
        return Err(Error::Dimension {
            expected: a.nrows(),
            actual: q.nrows(),
            context: "Lyapunov right-hand side",
        });
    }
    let mut x = q.clone();
    let mut ak = a.clone();
    for _ in 0..200 {
        let inc = &ak * &x * ak.transpose();
        let done = inc.norm() <= 1e-14 * x.norm().max(f64::MIN_POSITIVE);
        x += inc;
        if done {
            break;
        }
        ak = &ak * &ak;
    }
    // symmetrize away rounding drift
    Ok((&x + x.transpose()) * 0.5)
}

fn condition_spd(m: &DMatrix<f64>) -> f64 {
    let e = SymmetricEigen::new(m.clone()).eigenvalues;
    e.max() / e.min()
}

/// Square-root balancing: Cholesky of the controllability gramian, then an
/// eigendecomposition of the whitened observability gramian.
pub fn balance(ss: &LinearSs) -> Result<Balanced> {
    let g = ss.gramians()?;
    for (name, m) in [("controllability", &g.controllability), ("observability", &g.observability)] {
        let cond = condition_spd(m);
        if !(cond > 0.0 && cond < 1e12) {
            return Err(Error::Singular(format!(
                "{name} gramian is near singular (condition number {cond:e}); realization is not minimal"
            )));
        }
    }
    let l = g
        .controllability
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("controllability gramian is not positive definite".into()))?
        .l();
    let m = l.transpose() * &g.observability * &l;
    let eig = SymmetricEigen::new((&m + m.transpose()) * 0.5);
    let n = ss.order();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let hsv: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0).sqrt()).collect();
    if hsv.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Singular("zero Hankel singular value".into()));
    }
    let u = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    let scale = DMatrix::from_diagonal(&DVector::from_iterator(n, hsv.iter().map(|s| 1.0 / s.sqrt())));
    let t = &l * &u * &scale;
    let t_inv = t
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("balancing transform".into()))?;
    let system = LinearSs {
        a: &t_inv * &ss.a * &t,
        b: &t_inv * &ss.b,
        c: t.transpose() * &ss.c,
        d: ss.d,
        ts: ss.ts,
    };
    Ok(Balanced {
        system,
        transform: t,
        hankel_singular_values: hsv,
    })
}

/// Wraps a linear model as a single-local-model network. The scaling
/// transform comes from the min/max of the model's own trajectory under `u`.
pub fn to_lmssn(ss: &LinearSs, u: &[f64], k_sigma: f64) -> Result<LmssnModel> {
    let n = ss.order();
    let d = n + 1;
    let state = StateLocalModel {
        a: ss.a.clone(),
        b: ss.b.iter().copied().collect(),
        o: vec![0.0; n],
    };
    let output = OutputLocalModel {
        c: ss.c.iter().copied().collect(),
        d: ss.d,
        p: 0.0,
    };
    let validity = NrbfNetwork::new(vec![Region::unit(d).to_validity(k_sigma)?])?;
    let mut model = LmssnModel::new(
        vec![state],
        vec![output],
        validity.clone(),
        validity,
        ScalingTransform::identity(d),
    )?;
    let traj = model.simulate(u)?;
    model.scaling = ScalingTransform::from_points(&traj.points, d)?;
    Ok(model)
}

/// Balanced `n_x`-th order ARX model of the data wrapped as a single local
/// model network, the starting point of tree growth.
pub fn initial_model(u: &[f64], y: &[f64], n_x: usize, ts: f64, k_sigma: f64) -> Result<LmssnModel> {
    let ss = estimate_linear_ss(u, y, n_x, ts)?;
    let bal = balance(&ss)?;
    to_lmssn(&bal.system, u, k_sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_stable(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let r = local_pole_radius(&a).unwrap();
        a * (0.95 / r)
    }

    /// Direct solve of `(I - A (x) A) vec X = vec Q`.
    fn lyapunov_kron(a: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
        let n = a.nrows();
        let k = a.kronecker(a);
        let lhs = DMatrix::identity(n * n, n * n) - k;
        let rhs = DVector::from_column_slice(q.as_slice());
        let v = lhs.lu().solve(&rhs).unwrap();
        DMatrix::from_column_slice(n, n, v.as_slice())
    }

    #[test]
    fn lyapunov_examples() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        assert_eq!(solve_discrete_lyapunov(&DMatrix::zeros(2, 2), &q).unwrap(), q);
        let x = solve_discrete_lyapunov(&DMatrix::from_element(1, 1, 0.5), &DMatrix::from_element(1, 1, 1.0))
            .unwrap();
        assert!((x[(0, 0)] - 4.0 / 3.0).abs() < 1e-14);
        assert!(solve_discrete_lyapunov(&DMatrix::from_element(1, 1, 1.2), &DMatrix::from_element(1, 1, 1.0))
            .is_err());
    }

    #[test]
    fn lyapunov_matches_kronecker_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for n in 1..5 {
            let a = random_stable(&mut rng, n);
            let r = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let q = &r * r.transpose();
            let x = solve_discrete_lyapunov(&a, &q).unwrap();
            let oracle = lyapunov_kron(&a, &q);
            assert!((&x - &oracle).norm() < 1e-10 * oracle.norm().max(1.0));
            let resid = &a * &x * a.transpose() - &x + &q;
            assert!(resid.norm() < 1e-10 * q.norm());
        }
    }

    #[test]
    fn recovers_known_second_order_system() {
        let truth = ArxCoefficients {
            a: vec![-1.5, 0.56],
            b: vec![0.3, 0.12],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u: Vec<f64> = (0..400).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut y = vec![0.0; u.len()];
        y[1] = 0.3 * u[0];
        for k in 2..u.len() {
            y[k] = 1.5 * y[k - 1] - 0.56 * y[k - 2] + 0.3 * u[k - 1] + 0.12 * u[k - 2];
        }
        let est = estimate_arx(&u, &y, 2).unwrap();
        for (e, t) in est.a.iter().chain(&est.b).zip(truth.a.iter().chain(&truth.b)) {
            assert!((e - t).abs() < 1e-6);
        }
        let ss = LinearSs::from_arx(&est, 1.0);
        let sim = ss.simulate(&u);
        for (a, b) in sim.iter().zip(&y) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn units_do_not_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u: Vec<f64> = (0..400).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut y = vec![0.0; u.len()];
        for k in 2..u.len() {
            y[k] = 1.5 * y[k - 1] - 0.56 * y[k - 2] + 0.3 * u[k - 1] + 0.12 * u[k - 2] + 0.01 * rng.random_range(-1.0..1.0);
        }
        let base = estimate_arx(&u, &y, 2).unwrap();
        let u_big: Vec<f64> = u.iter().map(|v| 50.0 * v).collect();
        let y_small: Vec<f64> = y.iter().map(|v| 1e-4 * v).collect();
        let scaled = estimate_arx(&u_big, &y_small, 2).unwrap();
        for (a, b) in base.a.iter().zip(&scaled.a) {
            assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in base.b.iter().zip(&scaled.b) {
            assert!((a * 1e-4 / 50.0 - b).abs() < 1e-14);
        }
    }

    #[test]
    fn white_noise_gives_small_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u: Vec<f64> = (0..5000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..5000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let est = estimate_arx(&u, &y, 1).unwrap();
        assert!(est.a[0].abs() < 0.05 && est.b[0].abs() < 0.05);
    }

    #[test]
    fn too_little_data() {
        assert!(estimate_arx(&[0.0; 20], &[0.0; 20], 2).is_err());
    }

    fn diag_system() -> LinearSs {
        LinearSs {
            a: DMatrix::from_diagonal(&DVector::from_vec(vec![0.9, 0.5])),
            b: DVector::from_vec(vec![1.0, 1.0]),
            c: DVector::from_vec(vec![1.0, 1.0]),
            d: 0.0,
            ts: 1.0,
        }
    }

    fn assert_balanced(b: &Balanced) {
        let g = b.system.gramians().unwrap();
        let n = b.system.order();
        for i in 0..n {
            for j in 0..n {
                let (wc, wo) = (g.controllability[(i, j)], g.observability[(i, j)]);
                assert!((wc - wo).abs() < 1e-8, "gramians differ at ({i},{j})");
                if i == j {
                    assert!((wc - b.hankel_singular_values[i]).abs() < 1e-8);
                } else {
                    assert!(wc.abs() < 1e-8);
                }
            }
        }
        assert!(b.hankel_singular_values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn balances_diagonal_system() {
        let ss = diag_system();
        let b = balance(&ss).unwrap();
        assert_balanced(&b);
        let m0 = ss.markov_parameters(200);
        let m1 = b.system.markov_parameters(200);
        for (p, q) in m0.iter().zip(&m1) {
            assert!((p - q).abs() < 1e-8);
        }
    }

    #[test]
    fn balancing_a_balanced_system_is_trivial() {
        let once = balance(&diag_system()).unwrap();
        let twice = balance(&once.system).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((twice.transform[(i, j)].abs() - expect).abs() < 1e-8);
            }
        }
        for (a, b) in once.hankel_singular_values.iter().zip(&twice.hankel_singular_values) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn hankel_values_are_similarity_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ss = LinearSs {
            a: random_stable(&mut rng, 3),
            b: DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0)),
            c: DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0)),
            d: 0.3,
            ts: 1.0,
        };
        let t = DMatrix::from_fn(3, 3, |i, j| rng.random_range(-0.5..0.5) + if i == j { 1.5 } else { 0.0 });
        let ti = t.clone().try_inverse().unwrap();
        let other = LinearSs {
            a: &ti * &ss.a * &t,
            b: &ti * &ss.b,
            c: t.transpose() * &ss.c,
            ..ss.clone()
        };
        let h1 = balance(&ss).unwrap().hankel_singular_values;
        let h2 = balance(&other).unwrap().hankel_singular_values;
        for (a, b) in h1.iter().zip(&h2) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn non_minimal_is_rejected() {
        let ss = LinearSs {
            c: DVector::from_vec(vec![1.0, 0.0]),
            ..diag_system()
        };
        assert!(matches!(balance(&ss), Err(Error::Singular(_))));
    }

    #[test]
    fn lmssn_wrap_reproduces_linear_simulation() {
        let b = balance(&diag_system()).unwrap().system;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let u: Vec<f64> = (0..1000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let model = to_lmssn(&b, &u, 1.0 / 3.0).unwrap();
        assert_eq!(model.layout().len(), 4 + 4 + 2 + 2);
        let y_lin = b.simulate(&u);
        let y_net = model.simulate(&u).unwrap().outputs;
        for (p, q) in y_lin.iter().zip(&y_net) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_system_gives_zero_output() {
        let ss = LinearSs {
            a: DMatrix::zeros(2, 2),
            b: DVector::zeros(2),
            c: DVector::zeros(2),
            d: 0.0,
            ts: 1.0,
        };
        let m = to_lmssn(&ss, &[1.0, -1.0, 0.5], 1.0 / 3.0).unwrap();
        assert!(m.simulate(&[1.0, -1.0, 0.5]).unwrap().outputs.iter().all(|&y| y == 0.0));
    }
}
