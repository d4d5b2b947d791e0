//! Epsilon-SVR trained by sequential minimal optimization.
//!
//! The dual is solved in the 2n-variable form
//!
//! ```text
//! min  ½ aᵀQa + pᵀa   s.t.  0 ≤ a ≤ C,  Σ s_t a_t = 0
//! ```
//!
//! where `a = (α, α*)`, `s = (+1…, −1…)`, `Q_ts = s_t s_s K(x_t, x_s)` and
//! `p = (ε − y, ε + y)`. Working pairs are chosen with second-order
//! information; the solver stops once the maximal KKT violation gap drops
//! below `tolerance`. The fitted function is `f(x) = Σ (αᵢ − αᵢ*) K(xᵢ, x) + b`.

use std::fmt;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{LeakError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec<T> {
    Linear,
    Polynomial { degree: u32, coef: T },
    /// Also known as the RBF kernel.
    Gaussian { gamma: T },
}

impl<T: Scalar> KernelSpec<T> {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Polynomial { degree, coef } => {
                if degree < 1 || !coef.is_finite() {
                    return Err(LeakError::domain(format!("invalid polynomial kernel degree={degree} coef={coef}")));
                }
                Ok(())
            }
            KernelSpec::Gaussian { gamma } => {
                if !(gamma > T::zero() && gamma.is_finite()) {
                    return Err(LeakError::domain(format!("gaussian kernel needs gamma > 0, got {gamma}")));
                }
                Ok(())
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Linear => "linear",
            KernelSpec::Polynomial { .. } => "polynomial",
            KernelSpec::Gaussian { .. } => "gaussian",
        }
    }

    fn apply(&self, x: ArrayView1<'_, T>, y: ArrayView1<'_, T>) -> T {
        match *self {
            KernelSpec::Linear => x.dot(&y),
            KernelSpec::Polynomial { degree, coef } => (x.dot(&y) + coef).powi(degree as i32),
            KernelSpec::Gaussian { gamma } => {
                let d2 = x.iter().zip(y).fold(T::zero(), |a, (&u, &v)| a + (u - v) * (u - v));
                (-gamma * d2).exp()
            }
        }
    }
}

impl<T: Scalar> fmt::Display for KernelSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Linear => write!(f, "linear"),
            KernelSpec::Polynomial { degree, coef } => write!(f, "polynomial(d={degree}, c={coef})"),
            KernelSpec::Gaussian { gamma } => write!(f, "gaussian(gamma={gamma})"),
        }
    }
}

pub fn kernel_eval<T: Scalar>(spec: &KernelSpec<T>, x: &[T], y: &[T]) -> Result<T> {
    if x.len() != y.len() {
        return Err(LeakError::domain(format!("kernel dimension mismatch: {} vs {}", x.len(), y.len())));
    }
    Ok(spec.apply(ArrayView1::from(x), ArrayView1::from(y)))
}

/// Kernel values between every pair of rows.
pub fn gram_matrix<T: Scalar>(spec: &KernelSpec<T>, x: ArrayView2<'_, T>) -> Array2<T> {
    let n = x.nrows();
    let mut k = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let v = spec.apply(x.row(i), x.row(j));
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    k
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvrConfig<T> {
    /// Box constraint.
    pub c: T,
    /// Half-width of the insensitive tube.
    pub epsilon: T,
    /// Stop when the maximal KKT violation gap is below this.
    pub tolerance: T,
    /// Iteration budget, in units of 2n pair updates.
    pub max_passes: usize,
    /// z-score features with training statistics before fitting.
    pub standardize: bool,
}

impl<T: Scalar> Default for SvrConfig<T> {
    fn default() -> Self {
        SvrConfig {
            c: T::one(),
            epsilon: T::lit(0.1),
            tolerance: T::lit(1e-3),
            max_passes: 200,
            standardize: true,
        }
    }
}

impl<T: Scalar> SvrConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > T::zero() && self.c.is_finite()) {
            return Err(LeakError::domain(format!("C must be > 0, got {}", self.c)));
        }
        if !(self.epsilon >= T::zero() && self.epsilon.is_finite()) {
            return Err(LeakError::domain(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if !(self.tolerance > T::zero()) || self.max_passes == 0 {
            return Err(LeakError::domain("tolerance and max_passes must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics<T> {
    pub iterations: usize,
    pub converged: bool,
    /// Dual objective `½ dᵀKd + ε‖d‖₁ − yᵀd` at the solution, `d = α − α*`.
    pub objective: T,
    /// Largest training residual beyond the tube; nonzero means some points
    /// could not be fitted within ε (for example duplicated inputs with
    /// different targets).
    pub max_tube_excess: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel<T> {
    pub kernel: KernelSpec<T>,
    pub support_vectors: Vec<Vec<T>>,
    /// `α − α*` for each support vector.
    pub coefficients: Vec<T>,
    /// Row index of each support vector in the training matrix.
    pub support_indices: Vec<usize>,
    pub bias: T,
    pub feature_mean: Vec<T>,
    pub feature_scale: Vec<T>,
    pub c: T,
    pub epsilon: T,
    pub diagnostics: FitDiagnostics<T>,
}

fn check_finite<T: Scalar>(x: ArrayView2<'_, T>, what: &str) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LeakError::domain(format!("non-finite value in {what}")));
    }
    Ok(())
}

fn standardization<T: Scalar>(x: ArrayView2<'_, T>, enabled: bool) -> (Vec<T>, Vec<T>) {
    let f = x.ncols();
    if !enabled {
        return (vec![T::zero(); f], vec![T::one(); f]);
    }
    let n = T::count(x.nrows());
    let mean: Vec<T> = x.axis_iter(Axis(1)).map(|c| c.iter().fold(T::zero(), |a, &v| a + v) / n).collect();
    let scale = x
        .axis_iter(Axis(1))
        .zip(&mean)
        .map(|(c, &m)| {
            let var = c.iter().fold(T::zero(), |a, &v| a + (v - m) * (v - m)) / n;
            let s = var.sqrt();
            if s > T::epsilon() { s } else { T::one() }
        })
        .collect();
    (mean, scale)
}

fn apply_standardization<T: Scalar>(x: ArrayView2<'_, T>, mean: &[T], scale: &[T]) -> Array2<T> {
    let mut z = x.to_owned();
    for mut row in z.rows_mut() {
        for ((v, &m), &s) in row.iter_mut().zip(mean).zip(scale) {
            *v = (*v - m) / s;
        }
    }
    z
}

struct Smo<'a, T> {
    k: &'a Array2<T>,
    n: usize,
    c: T,
    alpha: Vec<T>,
    grad: Vec<T>,
}

impl<T: Scalar> Smo<'_, T> {
    fn sign(&self, t: usize) -> T {
        if t < self.n { T::one() } else { -T::one() }
    }

    /// Signed kernel entry `Q_ts`.
    fn q(&self, t: usize, s: usize) -> T {
        self.sign(t) * self.sign(s) * self.k[[t % self.n, s % self.n]]
    }

    fn is_upper(&self, t: usize) -> bool {
        self.alpha[t] >= self.c
    }

    fn is_lower(&self, t: usize) -> bool {
        self.alpha[t] <= T::zero()
    }

    /// Second-order working set selection. Returns `None` once optimal
    /// within `tol`.
    fn select(&self, tol: T) -> Option<(usize, usize)> {
        let tau = T::lit(1e-12);
        let mut gmax = T::neg_infinity();
        let mut i = usize::MAX;
        for t in 0..2 * self.n {
            if t < self.n {
                if !self.is_upper(t) && -self.grad[t] >= gmax {
                    gmax = -self.grad[t];
                    i = t;
                }
            } else if !self.is_lower(t) && self.grad[t] >= gmax {
                gmax = self.grad[t];
                i = t;
            }
        }
        if i == usize::MAX {
            return None;
        }
        let qd_i = self.q(i, i);
        let yi = self.sign(i);
        let mut gmax2 = T::neg_infinity();
        let mut j = usize::MAX;
        let mut best = T::infinity();
        for t in 0..2 * self.n {
            let qit = self.q(i, t);
            if t < self.n {
                if !self.is_lower(t) {
                    let diff = gmax + self.grad[t];
                    if self.grad[t] >= gmax2 {
                        gmax2 = self.grad[t];
                    }
                    if diff > T::zero() {
                        let mut quad = qd_i + self.q(t, t) - T::lit(2.0) * yi * qit;
                        if quad <= T::zero() {
                            quad = tau;
                        }
                        let obj = -(diff * diff) / quad;
                        if obj <= best {
                            best = obj;
                            j = t;
                        }
                    }
                }
            } else if !self.is_upper(t) {
                let diff = gmax - self.grad[t];
                if -self.grad[t] >= gmax2 {
                    gmax2 = -self.grad[t];
                }
                if diff > T::zero() {
                    let mut quad = qd_i + self.q(t, t) + T::lit(2.0) * yi * qit;
                    if quad <= T::zero() {
                        quad = tau;
                    }
                    let obj = -(diff * diff) / quad;
                    if obj <= best {
                        best = obj;
                        j = t;
                    }
                }
            }
        }
        if gmax + gmax2 < tol || j == usize::MAX {
            return None;
        }
        Some((i, j))
    }

    fn update(&mut self, i: usize, j: usize) {
        let tau = T::lit(1e-12);
        let c = self.c;
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let qij = self.q(i, j);
        let (qii, qjj) = (self.q(i, i), self.q(j, j));
        let (mut ai, mut aj) = (old_i, old_j);
        if self.sign(i) != self.sign(j) {
            let mut quad = qii + qjj + T::lit(2.0) * qij;
            if quad <= T::zero() {
                quad = tau;
            }
            let delta = (-self.grad[i] - self.grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > T::zero() {
                if aj < T::zero() {
                    aj = T::zero();
                    ai = diff;
                }
            } else if ai < T::zero() {
                ai = T::zero();
                aj = -diff;
            }
            if diff > T::zero() {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let mut quad = qii + qjj - T::lit(2.0) * qij;
            if quad <= T::zero() {
                quad = tau;
            }
            let delta = (self.grad[i] - self.grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < T::zero() {
                aj = T::zero();
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < T::zero() {
                ai = T::zero();
                aj = sum;
            }
        }
        self.alpha[i] = ai;
        self.alpha[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        for t in 0..2 * self.n {
            let delta = self.q(i, t) * di + self.q(j, t) * dj;
            self.grad[t] += delta;
        }
    }

    /// Offset `ρ` with `b = −ρ`: mean of `s_t G_t` over free variables, or
    /// the midpoint of the feasible interval when none are free.
    fn rho(&self) -> T {
        let (mut ub, mut lb) = (T::infinity(), T::neg_infinity());
        let (mut sum, mut free) = (T::zero(), 0usize);
        for t in 0..2 * self.n {
            let yg = self.sign(t) * self.grad[t];
            let positive = t < self.n;
            if self.is_upper(t) {
                if positive { lb = lb.max(yg) } else { ub = ub.min(yg) }
            } else if self.is_lower(t) {
                if positive { ub = ub.min(yg) } else { lb = lb.max(yg) }
            } else {
                free += 1;
                sum += yg;
            }
        }
        if free > 0 {
            sum / T::count(free)
        } else {
            (ub + lb) / T::lit(2.0)
        }
    }
}

/// Fits an epsilon-SVR to `features` (n × F) and `targets`.
pub fn fit<T: Scalar>(
    features: ArrayView2<'_, T>,
    targets: &[T],
    kernel: &KernelSpec<T>,
    config: &SvrConfig<T>,
) -> Result<RegressionModel<T>> {
    kernel.validate()?;
    config.validate()?;
    let n = features.nrows();
    if n < 2 {
        return Err(LeakError::domain(format!("SVR needs at least 2 training points, got {n}")));
    }
    if targets.len() != n {
        return Err(LeakError::domain(format!("{n} feature rows but {} targets", targets.len())));
    }
    check_finite(features, "features")?;
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(LeakError::domain("non-finite target"));
    }

    let (feature_mean, feature_scale) = standardization(features, config.standardize);
    let z = apply_standardization(features, &feature_mean, &feature_scale);
    let k = gram_matrix(kernel, z.view());

    let eps = config.epsilon;
    let mut grad = Vec::with_capacity(2 * n);
    grad.extend(targets.iter().map(|&y| eps - y));
    grad.extend(targets.iter().map(|&y| eps + y));
    let mut smo = Smo { k: &k, n, c: config.c, alpha: vec![T::zero(); 2 * n], grad };

    let budget = config.max_passes.saturating_mul(2 * n);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < budget {
        match smo.select(config.tolerance) {
            None => {
                converged = true;
                break;
            }
            Some((i, j)) => smo.update(i, j),
        }
        iterations += 1;
    }
    if !converged {
        converged = smo.select(config.tolerance).is_none();
        if !converged {
            log::warn!("SVR stopped after {iterations} iterations without meeting tolerance");
        }
    }

    let bias = -smo.rho();
    let d: Vec<T> = (0..n).map(|i| smo.alpha[i] - smo.alpha[i + n]).collect();

    let mut objective = T::zero();
    let mut max_tube_excess = T::zero();
    for i in 0..n {
        let kd = (0..n).fold(T::zero(), |a, j| a + k[[i, j]] * d[j]);
        objective += T::lit(0.5) * d[i] * kd + eps * d[i].abs() - targets[i] * d[i];
        let residual = (targets[i] - kd - bias).abs();
        max_tube_excess = max_tube_excess.max(residual - eps);
    }

    let support_indices: Vec<usize> = (0..n).filter(|&i| d[i] != T::zero()).collect();
    Ok(RegressionModel {
        kernel: *kernel,
        support_vectors: support_indices.iter().map(|&i| z.row(i).to_vec()).collect(),
        coefficients: support_indices.iter().map(|&i| d[i]).collect(),
        support_indices,
        bias,
        feature_mean,
        feature_scale,
        c: config.c,
        epsilon: eps,
        diagnostics: FitDiagnostics { iterations, converged, objective, max_tube_excess },
    })
}

impl<T: Scalar> RegressionModel<T> {
    pub fn dim(&self) -> usize {
        self.feature_mean.len()
    }

    /// Prediction for already standardized input.
    fn decision(&self, z: ArrayView1<'_, T>) -> T {
        self.support_vectors
            .iter()
            .zip(&self.coefficients)
            .fold(self.bias, |acc, (sv, &coef)| acc + coef * self.kernel.apply(ArrayView1::from(sv.as_slice()), z))
    }

    pub fn predict(&self, features: ArrayView2<'_, T>) -> Result<Vec<T>> {
        if features.nrows() == 0 {
            return Ok(Vec::new());
        }
        if features.ncols() != self.dim() {
            return Err(LeakError::domain(format!(
                "model expects {} features, got {}",
                self.dim(),
                features.ncols()
            )));
        }
        check_finite(features, "features")?;
        let z = apply_standardization(features, &self.feature_mean, &self.feature_scale);
        Ok(z.rows().into_iter().map(|r| self.decision(r)).collect())
    }

    /// Largest violation of the optimality conditions over the training set,
    /// in residual units. Free coefficients must sit on the tube edge, bound
    /// ones outside it and zero ones inside.
    pub fn kkt_violation(&self, features: ArrayView2<'_, T>, targets: &[T]) -> Result<T> {
        let pred = self.predict(features)?;
        let mut d = vec![T::zero(); targets.len()];
        for (&i, &coef) in self.support_indices.iter().zip(&self.coefficients) {
            d[i] = coef;
        }
        let eps = self.epsilon;
        let c = self.c;
        let zero = T::zero();
        Ok(pred
            .iter()
            .zip(targets)
            .zip(&d)
            .map(|((&f, &y), &di)| {
                let r = y - f;
                if di == zero {
                    (r.abs() - eps).max(zero)
                } else if di >= c {
                    (eps - r).max(zero)
                } else if di <= -c {
                    (r + eps).max(zero)
                } else if di > zero {
                    (r - eps).abs()
                } else {
                    (r + eps).abs()
                }
            })
            .fold(zero, T::max))
    }
}

/// Convenience wrapper over [`RegressionModel::predict`].
pub fn predict<T: Scalar>(model: &RegressionModel<T>, features: ArrayView2<'_, T>) -> Result<Vec<T>> {
    model.predict(features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn exact(tol: f64) -> SvrConfig<f64> {
        SvrConfig { standardize: false, tolerance: tol, max_passes: 10_000, ..Default::default() }
    }

    #[test]
    fn kernel_examples() {
        let g = KernelSpec::Gaussian { gamma: 0.5 };
        assert_eq!(kernel_eval(&g, &[1.0, -2.0], &[1.0, -2.0]).unwrap(), 1.0);
        assert_eq!(kernel_eval(&KernelSpec::Linear, &[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        assert_abs_diff_eq!(kernel_eval(&g, &[0.0, 0.0], &[2.0, 0.0]).unwrap(), 0.13534, epsilon = 1e-5);
        let p = KernelSpec::Polynomial { degree: 2, coef: 1.0 };
        assert_eq!(kernel_eval(&p, &[1.0, 1.0], &[1.0, 2.0]).unwrap(), 16.0);
        assert!(kernel_eval(&g, &[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn kernel_validation() {
        assert!(KernelSpec::Gaussian { gamma: 0.0 }.validate().is_err());
        assert!(KernelSpec::Polynomial { degree: 0, coef: 1.0 }.validate().is_err());
        assert!(KernelSpec::<f64>::Linear.validate().is_ok());
    }

    #[test]
    fn duplicated_point_within_tube() {
        let x = array![[0.3, 0.7], [0.3, 0.7]];
        for c in [0.01, 1.0, 100.0] {
            let cfg = SvrConfig { c, ..exact(1e-6) };
            let m = fit(x.view(), &[3.0, 3.0], &KernelSpec::Gaussian { gamma: 1.0 }, &cfg).unwrap();
            let p = m.predict(x.view()).unwrap()[0];
            assert!((p - 3.0).abs() <= cfg.epsilon + 1e-9, "C={c}: {p}");
        }
    }

    #[test]
    fn three_point_linear() {
        // Flattest line through the tube: slope 1 − ε on x1 + x2, offset ε,
        // so f(1.5, 1.5) = 1.5 − ε/2 exactly.
        let x = array![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]];
        let y = [0.0, 1.0, 2.0];
        let cfg = SvrConfig { c: 100.0, epsilon: 0.01, ..exact(1e-8) };
        let m = fit(x.view(), &y, &KernelSpec::Linear, &cfg).unwrap();
        let f = m.predict(array![[1.5, 1.5]].view()).unwrap()[0];
        assert_abs_diff_eq!(f, 1.495, epsilon = 1e-6);
        for (p, t) in m.predict(x.view()).unwrap().iter().zip(y) {
            assert!((p - t).abs() <= cfg.epsilon + cfg.tolerance);
        }
        assert!(m.kkt_violation(x.view(), &y).unwrap() <= cfg.tolerance);
    }

    #[test]
    fn identical_features_distinct_targets_flag_residual() {
        let x = array![[1.0], [1.0], [1.0]];
        let m = fit(x.view(), &[1.0, 3.0, 5.0], &KernelSpec::Linear, &SvrConfig::default()).unwrap();
        assert!(m.diagnostics.max_tube_excess > 1.0);
        let p = m.predict(x.view()).unwrap();
        assert!(p.iter().all(|v: &f64| v.is_finite()));
    }

    #[test]
    fn zero_coefficients_give_constant() {
        let m = RegressionModel {
            kernel: KernelSpec::Gaussian { gamma: 1.0 },
            support_vectors: vec![],
            coefficients: vec![],
            support_indices: vec![],
            bias: 2.5,
            feature_mean: vec![0.0; 2],
            feature_scale: vec![1.0; 2],
            c: 1.0,
            epsilon: 0.1,
            diagnostics: FitDiagnostics { iterations: 0, converged: true, objective: 0.0, max_tube_excess: 0.0 },
        };
        assert_eq!(m.predict(array![[1.0, 2.0], [-4.0, 9.0]].view()).unwrap(), vec![2.5, 2.5]);
        assert!(m.predict(Array2::<f64>::zeros((0, 2)).view()).unwrap().is_empty());
        assert!(m.predict(array![[1.0]].view()).is_err());
    }

    #[test]
    fn rejects_bad_input() {
        let x = array![[1.0], [f64::NAN]];
        assert!(fit(x.view(), &[1.0, 2.0], &KernelSpec::Linear, &SvrConfig::default()).is_err());
        let x = array![[1.0]];
        assert!(fit(x.view(), &[1.0], &KernelSpec::Linear, &SvrConfig::default()).is_err());
        let bad = SvrConfig { c: 0.0, ..Default::default() };
        assert!(fit(array![[1.0], [2.0]].view(), &[1.0, 2.0], &KernelSpec::Linear, &bad).is_err());
    }

    #[test]
    fn gaussian_gram_symmetric_unit_diagonal() {
        let x = array![[0.1, 2.0], [1.0, -1.0], [3.0, 0.5], [0.0, 0.0]];
        let k = gram_matrix(&KernelSpec::Gaussian { gamma: 0.3 }, x.view());
        for i in 0..4 {
            assert_eq!(k[[i, i]], 1.0);
            for j in 0..4 {
                assert_eq!(k[[i, j]], k[[j, i]]);
            }
        }
    }

    #[test]
    fn works_in_f32() {
        let x = array![[0.0f32], [1.0], [2.0], [3.0]];
        let y = [1.0f32, 2.0, 3.0, 4.0];
        let m = fit(x.view(), &y, &KernelSpec::Linear, &SvrConfig { c: 10.0, ..Default::default() }).unwrap();
        let p = m.predict(x.view()).unwrap();
        for (a, b) in p.iter().zip(y) {
            assert!((a - b).abs() < 0.2);
        }
    }

    #[test]
    fn model_json_round_trip() {
        let x = array![[0.0, 1.0], [1.0, 0.5], [2.0, 0.0]];
        let m = fit(x.view(), &[1.0, 2.0, 4.0], &KernelSpec::Gaussian { gamma: 0.5 }, &SvrConfig::default()).unwrap();
        let back: RegressionModel<f64> = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back.predict(x.view()).unwrap(), m.predict(x.view()).unwrap());
    }
}
