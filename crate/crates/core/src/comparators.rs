//! Benchmark prediction rules: finite kernel expansions with an exactly
//! computable RKHS norm, the hindsight ridge (representer) comparator, and
//! the averaged rule built from an online predictor's snapshots.

use std::fmt::Write as _;

use rand::Rng;

use crate::defensive::{PredictorState, Variant};
use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::linalg::Cholesky;
use crate::predictor::Algorithm;

/// `D = Σ c_i k(z_i, ·)` with cached `‖D‖ = sqrt(cᵀ K_z c)`.
#[derive(Debug, Clone)]
pub struct Comparator {
    kernel: Kernel,
    centers: Vec<Vec<f64>>,
    coeffs: Vec<f64>,
    norm: f64,
}

impl Comparator {
    pub fn expansion(kernel: Kernel, centers: Vec<Vec<f64>>, coeffs: Vec<f64>) -> Result<Self> {
        if centers.len() != coeffs.len() {
            return Err(Error::InvalidParameter(format!(
                "{} centers but {} coefficients",
                centers.len(),
                coeffs.len()
            )));
        }
        let gram = kernel.gram(&centers)?;
        let norm_sq = gram.quadratic_form(&coeffs);
        let scale: f64 = coeffs.iter().enumerate().map(|(i, c)| c.abs() * gram.get(i, i).max(0.0).sqrt()).sum();
        let norm = if norm_sq >= 0.0 {
            norm_sq.sqrt()
        } else if norm_sq >= -1e-10 * scale.powi(2).max(1.0) {
            0.0
        } else {
            return Err(Error::InvalidParameter(format!(
                "negative squared norm {norm_sq}; kernel `{kernel}` is not positive definite on these centers"
            )));
        };
        Ok(Self { kernel, centers, coeffs, norm })
    }

    pub fn zero(kernel: Kernel) -> Self {
        Self { kernel, centers: Vec::new(), coeffs: Vec::new(), norm: 0.0 }
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// Same rule with every coefficient multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            kernel: self.kernel.clone(),
            centers: self.centers.clone(),
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
            norm: self.norm * factor.abs(),
        }
    }

    /// `D(x) = Σ c_i k(z_i, x)`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.kernel.check_point(x)?;
        Ok(self.value(x))
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.centers.iter().zip(&self.coeffs).map(|(z, c)| c * self.kernel.value(z, x)).sum()
    }

    /// `min(Y, max(−Y, D(x)))`.
    pub fn clip_eval(&self, x: &[f64], y: f64) -> Result<f64> {
        Ok(self.eval(x)?.clamp(-y, y))
    }

    /// `Σ (y_n − D(x_n))²`.
    pub fn loss(&self, xs: &[Vec<f64>], ys: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for (x, y) in xs.iter().zip(ys) {
            total += (y - self.eval(x)?).powi(2);
        }
        Ok(total)
    }

    /// Header line with the kernel string, then `coeff,x1,...,xm` per center.
    pub fn to_text(&self) -> Result<String> {
        if !self.kernel.is_builtin() {
            return Err(Error::KernelSpec(self.kernel.to_string()));
        }
        let mut out = format!("{}\n", self.kernel);
        for (z, c) in self.centers.iter().zip(&self.coeffs) {
            write!(out, "{c}").unwrap();
            for v in z {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Parse { line: 1, message: "missing kernel header".into() })?;
        let kernel = Kernel::parse(header)?;
        let mut centers = Vec::new();
        let mut coeffs = Vec::new();
        for (i, line) in lines {
            let nums = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
            if nums.len() < 2 {
                return Err(Error::Parse { line: i + 1, message: "expected coeff,x1,...,xm".into() });
            }
            coeffs.push(nums[0]);
            centers.push(nums[1..].to_vec());
        }
        Self::expansion(kernel, centers, coeffs)
    }
}

/// `Σ (y_n − D(x_n))²`.
pub fn comparator_loss(d: &Comparator, xs: &[Vec<f64>], ys: &[f64]) -> Result<f64> {
    d.loss(xs, ys)
}

/// Minimizer of `Σ (y_n − D(x_n))² + λ‖D‖²`: centers at the observed
/// objects, coefficients `(K + λI)⁻¹ y`.
pub fn hindsight_ridge(kernel: &Kernel, xs: &[Vec<f64>], ys: &[f64], lambda: f64) -> Result<Comparator> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("λ must be positive, got {lambda}")));
    }
    let g = kernel.gram(xs)?;
    let n = g.size();
    let mut m = g.entries().to_vec();
    for i in 0..n {
        m[i * n + i] += lambda;
    }
    let chol = Cholesky::factor_with_retry(n, &m, 1e-10 * lambda)?;
    let coeffs = chol.solve(ys);
    Comparator::expansion(kernel.clone(), xs.to_vec(), coeffs)
}

/// Ridge objective `Σ (y − D(x))² + λ‖D‖²`.
pub fn ridge_objective(d: &Comparator, xs: &[Vec<f64>], ys: &[f64], lambda: f64) -> Result<f64> {
    Ok(d.loss(xs, ys)? + lambda * d.norm() * d.norm())
}

/// Random expansion with `k` centers drawn uniformly from the box
/// `[lo, hi]^m`, coefficients uniform in [−1, 1], rescaled to `target_norm`.
pub fn random_expansion<R: Rng>(
    kernel: &Kernel,
    rng: &mut R,
    k: usize,
    m: usize,
    lo: f64,
    hi: f64,
    target_norm: f64,
) -> Result<Comparator> {
    let centers: Vec<Vec<f64>> = (0..k).map(|_| (0..m).map(|_| rng.random_range(lo..=hi)).collect()).collect();
    let coeffs: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let d = Comparator::expansion(kernel.clone(), centers, coeffs)?;
    if d.norm() > 0.0 {
        Ok(d.scaled(target_norm / d.norm()))
    } else {
        Ok(d)
    }
}

/// The rule `H̄_N(x) = (1/N) Σ_{n=1}^{N} H_n(x)` where `H_n` is the online
/// predictor's rule after the first `n − 1` training examples.
///
/// Stores the configuration and the data; evaluation replays.
#[derive(Debug, Clone)]
pub struct AveragedRule {
    algorithm: Algorithm,
    kernel: Kernel,
    y: f64,
    xs: Vec<Vec<f64>>,
    ys: Vec<f64>,
    trained: Option<PredictorState>,
}

/// Builds the averaged rule from the first `N` training pairs.
pub fn averaged_rule(algorithm: Algorithm, kernel: Kernel, y: f64, xs: &[Vec<f64>], ys: &[f64]) -> Result<AveragedRule> {
    if xs.is_empty() {
        return Err(Error::InvalidParameter("averaged rule needs N ≥ 1 examples".into()));
    }
    assert_eq!(xs.len(), ys.len());
    let defensive = match algorithm {
        Algorithm::Aln => Some(PredictorState::new(Variant::Aln, kernel.clone(), y, None, None, None)?),
        Algorithm::K29 => Some(PredictorState::new(Variant::K29, kernel.clone(), y, None, None, None)?),
        Algorithm::AlnPlain => Some(PredictorState::new_plain(Variant::Aln, kernel.clone(), y, None)?),
        _ => None,
    };
    let trained = match defensive {
        Some(mut st) => {
            use crate::predictor::OnlinePredictor;
            // The last example never influences H_1..H_N.
            for (x, &label) in xs.iter().zip(ys).take(xs.len() - 1) {
                st.predict(x)?;
                st.observe(label)?;
            }
            Some(st)
        }
        None => {
            for (i, &label) in ys.iter().enumerate() {
                crate::predictor::check_label(label, y, i + 1)?;
            }
            None
        }
    };
    Ok(AveragedRule { algorithm, kernel, y, xs: xs.to_vec(), ys: ys.to_vec(), trained })
}

impl AveragedRule {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn y_bound(&self) -> f64 {
        self.y
    }

    /// Predictions `H_1(x), …, H_N(x)`.
    pub fn snapshots(&self, x: &[f64]) -> Result<Vec<f64>> {
        if let Some(st) = &self.trained {
            return st.snapshot_predictions(x);
        }
        let mut p = self.algorithm.build(&self.kernel, self.y)?;
        let mut out = Vec::with_capacity(self.xs.len());
        for (i, (xn, &yn)) in self.xs.iter().zip(&self.ys).enumerate() {
            out.push(p.prediction_at(x)?);
            if i + 1 < self.xs.len() {
                p.predict(xn)?;
                p.observe(yn)?;
            }
        }
        Ok(out)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let s = self.snapshots(x)?;
        Ok(s.iter().sum::<f64>() / s.len() as f64)
    }
}
