//! Kernel Aggregating Algorithm for regression (KAAR), the square-loss
//! Aggregating Algorithm over finitely many experts, and the 2^k ridge grid
//! that merges KAAR experts so the ridge `a` need not be known in advance.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{GramMatrix, Kernel};
use crate::linalg::Cholesky;
use crate::predictor::{check_label, OnlinePredictor};

/// KAAR state: history plus the Cholesky factor of `aI + K_n`.
#[derive(Debug, Clone)]
pub struct KaarState {
    kernel: Kernel,
    a: f64,
    y: f64,
    xs: Vec<Vec<f64>>,
    ys: Vec<f64>,
    chol: Cholesky,
    /// `L⁻¹ y` for the current factor.
    z: Vec<f64>,
    refresh_limit: usize,
    pending: Option<Vec<f64>>,
}

impl KaarState {
    pub fn new(kernel: Kernel, a: f64, y: f64) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::InvalidParameter(format!("ridge a must be positive, got {a}")));
        }
        if !(y > 0.0) || !y.is_finite() {
            return Err(Error::InvalidParameter(format!("Y must be positive, got {y}")));
        }
        Ok(Self {
            kernel,
            a,
            y,
            xs: Vec::new(),
            ys: Vec::new(),
            chol: Cholesky::new(),
            z: Vec::new(),
            refresh_limit: 0,
            pending: None,
        })
    }

    /// Re-factor `aI + K_n` from scratch on every observe while
    /// `n ≤ limit`; extend the factor by one bordered row beyond.
    pub fn with_refresh_limit(mut self, limit: usize) -> Self {
        self.refresh_limit = limit;
        self
    }

    pub fn ridge(&self) -> f64 {
        self.a
    }

    pub fn factor(&self) -> &Cholesky {
        &self.chol
    }

    fn jitter(&self) -> f64 {
        1e-10 * self.a
    }

    fn border(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        let col: Vec<f64> = self.xs.iter().map(|xi| self.kernel.value(xi, x)).collect();
        let diag = self.a + self.kernel.value(x, x);
        self.chol.border(&col, diag).or_else(|_| self.chol.border(&col, diag + self.jitter()))
    }

    /// Unclipped augmented-ridge prediction `(K̄c)_{n+1}` where
    /// `(aI + K̄)c = (y_1, …, y_n, 0)`.
    pub fn raw_prediction(&self, x: &[f64]) -> Result<f64> {
        self.kernel.check_point(x)?;
        if self.xs.is_empty() {
            return Ok(0.0);
        }
        let (l, d) = self.border(x)?;
        let lz: f64 = l.iter().zip(&self.z).map(|(a, b)| a * b).sum();
        // Last row of the augmented system: (K̄c)_{n+1} = −a·c_{n+1}.
        Ok(self.a * lz / (d * d))
    }

    fn refactor(&mut self) -> Result<()> {
        let n = self.xs.len();
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = self.kernel.value(&self.xs[i], &self.xs[j]);
                m[i * n + j] = v;
                m[j * n + i] = v;
            }
            m[i * n + i] += self.a;
        }
        self.chol = Cholesky::factor_with_retry(n, &m, self.jitter())?;
        self.z = self.chol.forward(&self.ys);
        Ok(())
    }
}

impl OnlinePredictor for KaarState {
    fn y_bound(&self) -> f64 {
        self.y
    }

    fn round(&self) -> usize {
        self.xs.len()
    }

    fn prediction_at(&self, x: &[f64]) -> Result<f64> {
        Ok(self.raw_prediction(x)?.clamp(-self.y, self.y))
    }

    fn predict(&mut self, x: &[f64]) -> Result<f64> {
        let mu = self.prediction_at(x)?;
        self.pending = Some(x.to_vec());
        Ok(mu)
    }

    fn observe(&mut self, y: f64) -> Result<()> {
        let Some(x) = self.pending.take() else {
            return Err(Error::NoPendingPrediction);
        };
        if let Err(e) = check_label(y, self.y, self.xs.len() + 1) {
            self.pending = Some(x);
            return Err(e);
        }
        if self.xs.len() < self.refresh_limit {
            self.xs.push(x);
            self.ys.push(y);
            self.refactor()?;
        } else {
            let (l, d) = self.border(&x)?;
            let lz: f64 = l.iter().zip(&self.z).map(|(a, b)| a * b).sum();
            self.z.push((y - lz) / d);
            self.chol.push_border(l, d);
            self.xs.push(x);
            self.ys.push(y);
        }
        Ok(())
    }

    fn box_clone(&self) -> Box<dyn OnlinePredictor> {
        Box::new(self.clone())
    }
}

/// `a‖D‖² + Y² ln det(I + K/a)`.
pub fn kaar_bound(y: f64, a: f64, norm_d: f64, gram: &GramMatrix) -> Result<f64> {
    Ok(a * norm_d * norm_d + y * y * log_det_regularized(gram, a)?)
}

/// `ln det(I + K/a)` via a Cholesky factor.
pub fn log_det_regularized(gram: &GramMatrix, a: f64) -> Result<f64> {
    let n = gram.size();
    if n == 0 {
        return Ok(0.0);
    }
    let mut m: Vec<f64> = gram.entries().iter().map(|v| v / a).collect();
    for i in 0..n {
        m[i * n + i] += 1.0;
    }
    Ok(Cholesky::factor_with_retry(n, &m, 1e-12)?.log_det())
}

/// Learning rate of the square-loss Aggregating Algorithm on `[−Y, Y]`.
pub fn eta_for(y: f64) -> f64 {
    1.0 / (2.0 * y * y)
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Square-loss substitution from log-weights.
pub fn substitute_log(predictions: &[f64], log_weights: &[f64], y: f64) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::InvalidParameter("aggregating needs at least one expert".into()));
    }
    assert_eq!(predictions.len(), log_weights.len());
    let eta = eta_for(y);
    let g = |outcome: f64| {
        let terms = predictions.iter().zip(log_weights).map(move |(p, lw)| lw - eta * (outcome - p).powi(2));
        -log_sum_exp(terms) / eta
    };
    Ok(((g(-y) - g(y)) / (4.0 * y)).clamp(-y, y))
}

/// Aggregating-Algorithm prediction for expert `predictions` with simplex
/// `weights`: `μ = (g(−Y) − g(Y)) / 4Y`, clipped, where
/// `g(o) = −(1/η) ln Σ w_k exp(−η(o − p_k)²)` and `η = 1/(2Y²)`.
pub fn aa_substitute(predictions: &[f64], weights: &[f64], y: f64) -> Result<f64> {
    if predictions.len() != weights.len() {
        return Err(Error::InvalidParameter("predictions and weights differ in length".into()));
    }
    let lw: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    substitute_log(predictions, &lw, y)
}

/// Multiplies each log-weight by `exp(−η(y − p_k)²)` and renormalizes.
pub fn update_log(log_weights: &mut [f64], predictions: &[f64], y: f64, eta: f64) {
    for (lw, p) in log_weights.iter_mut().zip(predictions) {
        *lw -= eta * (y - p).powi(2);
    }
    let z = log_sum_exp(log_weights.iter().copied());
    for lw in log_weights.iter_mut() {
        *lw -= z;
    }
}

/// `w_k ← w_k·exp(−η(y − p_k)²)`, renormalized; computed in log domain.
pub fn aa_update(weights: &[f64], predictions: &[f64], y: f64, eta: f64) -> Vec<f64> {
    let mut lw: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    update_log(&mut lw, predictions, y, eta);
    lw.into_iter().map(f64::exp).collect()
}

/// One KAAR expert per ridge value, merged by the Aggregating Algorithm.
#[derive(Debug, Clone)]
pub struct GridMixture {
    experts: Vec<KaarState>,
    grid: Vec<f64>,
    log_weights: Vec<f64>,
    y: f64,
    pending: Option<Vec<f64>>,
    round: usize,
}

impl GridMixture {
    pub fn new(kernel: Kernel, y: f64, grid: &[f64]) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::InvalidParameter("ridge grid must be nonempty".into()));
        }
        let experts = grid.iter().map(|&a| KaarState::new(kernel.clone(), a, y)).collect::<Result<Vec<_>>>()?;
        let m = grid.len() as f64;
        Ok(Self {
            experts,
            grid: grid.to_vec(),
            log_weights: vec![-m.ln(); grid.len()],
            y,
            pending: None,
            round: 0,
        })
    }

    /// Grid `a_k = 2^k·Y²` for `k = kmin..=kmax`.
    pub fn with_exponents(kernel: Kernel, y: f64, kmin: i32, kmax: i32) -> Result<Self> {
        let grid: Vec<f64> = (kmin..=kmax).map(|k| 2f64.powi(k) * y * y).collect();
        Self::new(kernel, y, &grid)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|lw| lw.exp()).collect()
    }

    pub fn eta(&self) -> f64 {
        eta_for(self.y)
    }

    fn expert_predictions(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.experts.par_iter().map(|e| e.prediction_at(x)).collect()
    }
}

impl OnlinePredictor for GridMixture {
    fn y_bound(&self) -> f64 {
        self.y
    }

    fn round(&self) -> usize {
        self.round
    }

    fn prediction_at(&self, x: &[f64]) -> Result<f64> {
        let preds = self.expert_predictions(x)?;
        substitute_log(&preds, &self.log_weights, self.y)
    }

    fn predict(&mut self, x: &[f64]) -> Result<f64> {
        let preds: Vec<f64> = self.experts.par_iter_mut().map(|e| e.predict(x)).collect::<Result<_>>()?;
        let mu = substitute_log(&preds, &self.log_weights, self.y)?;
        self.pending = Some(preds);
        Ok(mu)
    }

    fn observe(&mut self, y: f64) -> Result<()> {
        let Some(preds) = self.pending.take() else {
            return Err(Error::NoPendingPrediction);
        };
        if let Err(e) = check_label(y, self.y, self.round + 1) {
            self.pending = Some(preds);
            return Err(e);
        }
        let eta = self.eta();
        update_log(&mut self.log_weights, &preds, y, eta);
        self.experts.par_iter_mut().try_for_each(|e| e.observe(y))?;
        self.round += 1;
        Ok(())
    }

    fn box_clone(&self) -> Box<dyn OnlinePredictor> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Dense Gaussian elimination with partial pivoting; test oracle.
    fn dense_solve(n: usize, mut a: Vec<f64>, mut b: Vec<f64>) -> Vec<f64> {
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs())).unwrap();
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
            for row in col + 1..n {
                let f = a[row * n + col] / a[col * n + col];
                for k in col..n {
                    a[row * n + k] -= f * a[col * n + k];
                }
                b[row] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| a[i * n + k] * x[k]).sum();
            x[i] = (b[i] - s) / a[i * n + i];
        }
        x
    }

    fn oracle_prediction(k: &Kernel, a: f64, xs: &[Vec<f64>], ys: &[f64], x: &[f64]) -> f64 {
        let mut pts = xs.to_vec();
        pts.push(x.to_vec());
        let n = pts.len();
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] = k.value(&pts[i], &pts[j]) + if i == j { a } else { 0.0 };
            }
        }
        let mut rhs = ys.to_vec();
        rhs.push(0.0);
        let c = dense_solve(n, m, rhs);
        (0..n).map(|i| c[i] * k.value(&pts[i], x)).sum()
    }

    #[test]
    fn kaar_examples() {
        let k = Kernel::constant(1.0).unwrap();
        let mut st = KaarState::new(k.clone(), 1.0, 1.0).unwrap();
        assert_eq!(st.predict(&[0.2]).unwrap(), 0.0);
        st.observe(0.6).unwrap();
        assert!((st.prediction_at(&[0.2]).unwrap() - 0.2).abs() < 1e-15);

        let huge = KaarState::new(k, 1e12, 1.0).unwrap();
        let mut huge = huge;
        huge.predict(&[0.0]).unwrap();
        huge.observe(1.0).unwrap();
        assert!(huge.prediction_at(&[0.0]).unwrap().abs() < 1e-11);
    }

    #[test]
    fn kaar_matches_dense_oracle() {
        let k = Kernel::sobolev01();
        let mut st = KaarState::new(k.clone(), 0.3, 2.0).unwrap();
        let data = [(0.1, 1.5), (0.5, -0.5), (0.52, -1.9), (0.9, 0.4), (0.33, 2.0)];
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for &(x, y) in &data {
            let want = oracle_prediction(&k, 0.3, &xs, &ys, &[x]).clamp(-2.0, 2.0);
            let got = st.predict(&[x]).unwrap();
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
            st.observe(y).unwrap();
            xs.push(vec![x]);
            ys.push(y);
        }
    }

    #[test]
    fn first_observe_factor_is_scalar() {
        let k = Kernel::fermi_sobolev();
        let mut st = KaarState::new(k.clone(), 0.5, 1.0).unwrap();
        st.predict(&[0.25]).unwrap();
        st.observe(0.1).unwrap();
        let l = st.factor().entry(0, 0);
        assert!((l * l - (0.5 + k.value(&[0.25], &[0.25]))).abs() < 1e-14);
    }

    #[test]
    fn duplicate_examples_stay_solvable() {
        let k = Kernel::constant(1.0).unwrap();
        let mut st = KaarState::new(k, 0.01, 1.0).unwrap();
        for _ in 0..2 {
            st.predict(&[0.0]).unwrap();
            st.observe(0.5).unwrap();
        }
        let mu = st.prediction_at(&[0.0]).unwrap();
        assert!(mu.is_finite() && mu > 0.0);
    }

    #[test]
    fn far_example_decouples_under_triangular_kernel() {
        let k = Kernel::triangular(1.0).unwrap();
        let mut st = KaarState::new(k, 1.0, 1.0).unwrap();
        st.predict(&[0.0]).unwrap();
        st.observe(0.8).unwrap();
        let before = st.prediction_at(&[0.2]).unwrap();
        st.predict(&[5.0]).unwrap();
        st.observe(-1.0).unwrap();
        assert!((st.prediction_at(&[0.2]).unwrap() - before).abs() < 1e-15);
    }

    #[test]
    fn refresh_and_append_paths_agree() {
        let k = Kernel::sobolev_r();
        let mut full = KaarState::new(k.clone(), 0.7, 1.0).unwrap().with_refresh_limit(usize::MAX);
        let mut inc = KaarState::new(k, 0.7, 1.0).unwrap();
        for i in 0..120 {
            let x = [((i * 37) % 101) as f64 / 10.0];
            let y = (((i * 53) % 17) as f64 / 8.0 - 1.0).clamp(-1.0, 1.0);
            let a = full.predict(&x).unwrap();
            let b = inc.predict(&x).unwrap();
            assert!((a - b).abs() < 1e-8, "round {i}: {a} vs {b}");
            full.observe(y).unwrap();
            inc.observe(y).unwrap();
        }
    }

    #[test]
    fn kaar_bound_examples() {
        let tri = Kernel::triangular(1.0).unwrap();
        let empty = tri.gram(&[]).unwrap();
        assert_eq!(kaar_bound(1.0, 2.0, 3.0, &empty).unwrap(), 18.0);

        let pts: Vec<Vec<f64>> = (0..7).map(|i| vec![1.5 * i as f64]).collect();
        let g = tri.gram(&pts).unwrap();
        let (y, a, d): (f64, f64, f64) = (1.3, 0.4, 0.9);
        let want = a * d * d + y * y * 7.0 * (1.0 + 1.0 / a).ln();
        assert!((kaar_bound(y, a, d, &g).unwrap() - want).abs() < 1e-12);

        let k = Kernel::fermi_sobolev();
        let pts: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64 / 8.0]).collect();
        let g = k.gram(&pts).unwrap();
        let c2 = k.bound().unwrap().powi(2);
        let ld = log_det_regularized(&g, 0.5).unwrap();
        assert!(ld <= 9.0 * (1.0 + c2 / 0.5).ln());
    }

    #[test]
    fn substitution_examples() {
        for p in [-0.9, 0.0, 0.37, 1.0] {
            assert!((aa_substitute(&[p], &[1.0], 1.0).unwrap() - p).abs() < 1e-12);
        }
        assert!(aa_substitute(&[-2.0, 2.0], &[0.5, 0.5], 2.0).unwrap().abs() < 1e-12);
        // High-precision reference value.
        let mu = aa_substitute(&[0.0, 1.0], &[0.5, 0.5], 1.0).unwrap();
        assert!((mu - 0.386_331_853_098_677_1).abs() < 1e-12, "{mu}");
        assert!(aa_substitute(&[], &[], 1.0).is_err());
    }

    #[test]
    fn update_examples() {
        let w = aa_update(&[0.3, 0.7], &[0.5, 0.5], 0.5, 0.5);
        assert!((w[0] - 0.3).abs() < 1e-15 && (w[1] - 0.7).abs() < 1e-15);

        let w = aa_update(&[0.5, 0.5], &[1.0, -1.0], 1.0, 0.5);
        assert!((w[0] / w[1] - 2f64.exp()).abs() < 1e-12);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singleton_grid_equals_kaar() {
        let k = Kernel::fermi_sobolev();
        let mut grid = GridMixture::new(k.clone(), 1.0, &[0.5]).unwrap();
        let mut kaar = KaarState::new(k, 0.5, 1.0).unwrap();
        for i in 0..30 {
            let x = [(i as f64 * 0.377).fract()];
            let y = ((i as f64) * 1.3).sin();
            let a = grid.predict(&x).unwrap();
            let b = kaar.predict(&x).unwrap();
            assert!((a - b).abs() < 1e-12);
            grid.observe(y).unwrap();
            kaar.observe(y).unwrap();
        }
    }

    #[test]
    fn default_grid_uniform_weights() {
        let g = GridMixture::with_exponents(Kernel::sobolev01(), 1.0, -8, 8).unwrap();
        assert_eq!(g.grid().len(), 17);
        for w in g.weights() {
            assert!((w - 1.0 / 17.0).abs() < 1e-15);
        }
        assert_eq!(g.eta(), 0.5);
    }
}
