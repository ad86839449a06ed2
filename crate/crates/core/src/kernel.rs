//! Reproducing kernels, their evaluation bounds, Gram matrices, tensor
//! powers, and the merged forecast kernel used by the defensive predictors.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::Cholesky;

/// Signature of a user-supplied kernel function.
pub type KernelFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;

/// A user kernel. `bound` must be the true `sup_x sqrt(k(x, x))`; it is
/// never estimated.
pub struct CustomKernel {
    name: String,
    dimension: usize,
    unit_domain: bool,
    bound: Option<f64>,
    f: Box<KernelFn>,
}

impl fmt::Debug for CustomKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomKernel")
            .field("name", &self.name)
            .field("dimension", &self.dimension)
            .field("bound", &self.bound)
            .finish()
    }
}

#[derive(Debug, Clone)]
enum Kind {
    /// Sobolev space H¹([0,1]).
    Sobolev01,
    /// Fermi–Sobolev space on [0,1].
    FermiSobolev,
    /// Sobolev space H¹(ℝ).
    SobolevR,
    /// `c² · max(1 − |t − t'|, 0)`.
    Triangular(f64),
    Constant(f64),
    Zero,
    Tensor { base: Box<Kernel>, m: usize },
    Custom(Arc<CustomKernel>),
}

/// A symmetric positive definite kernel on ℝ^m (or a subset of it).
#[derive(Debug, Clone)]
pub struct Kernel {
    kind: Kind,
}

impl Kernel {
    pub fn sobolev01() -> Self {
        Self { kind: Kind::Sobolev01 }
    }

    pub fn fermi_sobolev() -> Self {
        Self { kind: Kind::FermiSobolev }
    }

    pub fn sobolev_r() -> Self {
        Self { kind: Kind::SobolevR }
    }

    /// Triangular kernel `c² h(t − t')` with `h(t) = max(1 − |t|, 0)`.
    pub fn triangular(c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidParameter(format!("triangular scale must be positive, got {c}")));
        }
        Ok(Self { kind: Kind::Triangular(c) })
    }

    /// Constant kernel `k ≡ v`; dimension-agnostic.
    pub fn constant(v: f64) -> Result<Self> {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::InvalidParameter(format!("constant kernel value must be ≥ 0, got {v}")));
        }
        Ok(Self { kind: Kind::Constant(v) })
    }

    pub fn zero() -> Self {
        Self { kind: Kind::Zero }
    }

    /// A user kernel on ℝ^dimension (or [0,1]^dimension when `unit_domain`).
    pub fn custom<F>(
        name: impl Into<String>,
        dimension: usize,
        unit_domain: bool,
        bound: Option<f64>,
        f: F,
    ) -> Self
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            kind: Kind::Custom(Arc::new(CustomKernel {
                name: name.into(),
                dimension,
                unit_domain,
                bound,
                f: Box::new(f),
            })),
        }
    }

    /// Parses the kernel selection grammar: `sobolev01`, `fermi-sobolev`,
    /// `sobolev-r`, `triangular:<c>`, `tensor:<base>:<m>`, `constant:<v>`,
    /// `zero`.
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = || Error::KernelSpec(spec.to_string());
        let s = spec.trim();
        match s {
            "sobolev01" => return Ok(Self::sobolev01()),
            "fermi-sobolev" => return Ok(Self::fermi_sobolev()),
            "sobolev-r" => return Ok(Self::sobolev_r()),
            "zero" => return Ok(Self::zero()),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("triangular:") {
            let c: f64 = rest.parse().map_err(|_| bad())?;
            return Self::triangular(c);
        }
        if let Some(rest) = s.strip_prefix("constant:") {
            let v: f64 = rest.parse().map_err(|_| bad())?;
            return Self::constant(v);
        }
        if let Some(rest) = s.strip_prefix("tensor:") {
            let (base, m) = rest.rsplit_once(':').ok_or_else(bad)?;
            let m: usize = m.parse().map_err(|_| bad())?;
            return Self::parse(base)?.tensor_power(m);
        }
        Err(bad())
    }

    /// Object-space dimension, or `None` for dimension-agnostic kernels.
    pub fn dimension(&self) -> Option<usize> {
        match &self.kind {
            Kind::Sobolev01 | Kind::FermiSobolev | Kind::SobolevR | Kind::Triangular(_) => Some(1),
            Kind::Constant(_) | Kind::Zero => None,
            Kind::Tensor { m, .. } => Some(*m),
            Kind::Custom(c) => Some(c.dimension),
        }
    }

    /// True when the domain is [0,1]^m rather than ℝ^m.
    pub fn unit_domain(&self) -> bool {
        match &self.kind {
            Kind::Sobolev01 | Kind::FermiSobolev => true,
            Kind::Tensor { base, .. } => base.unit_domain(),
            Kind::Custom(c) => c.unit_domain,
            _ => false,
        }
    }

    pub fn is_builtin(&self) -> bool {
        match &self.kind {
            Kind::Custom(_) => false,
            Kind::Tensor { base, .. } => base.is_builtin(),
            _ => true,
        }
    }

    pub fn name(&self) -> String {
        self.to_string()
    }

    /// Validates a point against the kernel's dimension and domain.
    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if let Some(d) = self.dimension() {
            if x.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: x.len() });
            }
        }
        if self.unit_domain() {
            if let Some(&v) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::OutsideDomain { value: v });
            }
        }
        Ok(())
    }

    /// Checked evaluation.
    pub fn eval(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        self.check_point(x2)?;
        if x.len() != x2.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), got: x2.len() });
        }
        Ok(self.value(x, x2))
    }

    /// Unchecked evaluation; both points must already satisfy
    /// [`Kernel::check_point`].
    pub fn value(&self, x: &[f64], x2: &[f64]) -> f64 {
        match &self.kind {
            Kind::Sobolev01 => sobolev01(x[0], x2[0]),
            Kind::FermiSobolev => fermi_sobolev(x[0], x2[0]),
            Kind::SobolevR => 0.5 * (-(x[0] - x2[0]).abs()).exp(),
            Kind::Triangular(c) => c * c * (1.0 - (x[0] - x2[0]).abs()).max(0.0),
            Kind::Constant(v) => *v,
            Kind::Zero => 0.0,
            Kind::Tensor { base, .. } => x
                .iter()
                .zip(x2)
                .map(|(a, b)| base.value(std::slice::from_ref(a), std::slice::from_ref(b)))
                .product(),
            Kind::Custom(c) => (c.f)(x, x2),
        }
    }

    /// `c_k = sup_x sqrt(k(x, x))`.
    pub fn bound(&self) -> Result<f64> {
        Ok(match &self.kind {
            Kind::Sobolev01 => (1.0_f64.cosh() / 1.0_f64.sinh()).sqrt(),
            Kind::FermiSobolev => 2.0 / 3.0_f64.sqrt(),
            Kind::SobolevR => 0.5_f64.sqrt(),
            Kind::Triangular(c) => *c,
            Kind::Constant(v) => v.sqrt(),
            Kind::Zero => 0.0,
            Kind::Tensor { base, m } => base.bound()?.powi(*m as i32),
            Kind::Custom(c) => c.bound.ok_or_else(|| Error::MissingBound(c.name.clone()))?,
        })
    }

    /// The m-fold product kernel on m-vectors.
    pub fn tensor_power(&self, m: usize) -> Result<Kernel> {
        if m == 0 {
            return Err(Error::InvalidParameter("tensor power must be ≥ 1".into()));
        }
        if self.dimension() != Some(1) {
            return Err(Error::InvalidParameter(format!(
                "tensor power needs a one-dimensional base kernel, `{self}` is not"
            )));
        }
        Ok(Kernel { kind: Kind::Tensor { base: Box::new(self.clone()), m } })
    }

    /// Gram matrix over `points`, mirrored from the upper triangle.
    pub fn gram(&self, points: &[Vec<f64>]) -> Result<GramMatrix> {
        for p in points {
            self.check_point(p)?;
        }
        if let Some(p) = points.first() {
            if let Some(q) = points.iter().find(|q| q.len() != p.len()) {
                return Err(Error::DimensionMismatch { expected: p.len(), got: q.len() });
            }
        }
        let n = points.len();
        let row = |i: usize| -> Vec<f64> { (i..n).map(|j| self.value(&points[i], &points[j])).collect() };
        let upper: Vec<Vec<f64>> =
            if n >= 256 { (0..n).into_par_iter().map(row).collect() } else { (0..n).map(row).collect() };
        let mut entries = vec![0.0; n * n];
        for (i, r) in upper.iter().enumerate() {
            for (off, &v) in r.iter().enumerate() {
                let j = i + off;
                entries[i * n + j] = v;
                entries[j * n + i] = v;
            }
        }
        Ok(GramMatrix { n, entries, points: points.to_vec() })
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            Kind::Sobolev01 => write!(f, "sobolev01"),
            Kind::FermiSobolev => write!(f, "fermi-sobolev"),
            Kind::SobolevR => write!(f, "sobolev-r"),
            Kind::Triangular(c) => write!(f, "triangular:{c}"),
            Kind::Constant(v) => write!(f, "constant:{v}"),
            Kind::Zero => write!(f, "zero"),
            Kind::Tensor { base, m } => write!(f, "tensor:{base}:{m}"),
            Kind::Custom(c) => write!(f, "custom:{}", c.name),
        }
    }
}

fn sobolev01(t: f64, s: f64) -> f64 {
    t.min(s).cosh() * (1.0 - t).min(1.0 - s).cosh() / 1.0_f64.sinh()
}

fn fermi_sobolev(t: f64, s: f64) -> f64 {
    let lo = t.min(s);
    let hi = (1.0 - t).min(1.0 - s);
    0.5 * lo * lo + 0.5 * hi * hi + 5.0 / 6.0
}

/// Pairwise kernel values over a point set.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    n: usize,
    entries: Vec<f64>,
    points: Vec<Vec<f64>>,
}

impl GramMatrix {
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn max_diagonal(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).fold(0.0, f64::max)
    }

    /// `vᵀ K v`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        assert_eq!(v.len(), self.n);
        crate::linalg::compensated_sum(
            (0..self.n).flat_map(|i| (0..self.n).map(move |j| (i, j))).map(|(i, j)| v[i] * v[j] * self.get(i, j)),
        )
    }

    /// Smallest eigenvalue via a symmetric eigen-solve.
    pub fn min_eigenvalue(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let m = DMatrix::from_row_slice(self.n, self.n, &self.entries);
        SymmetricEigen::new(m).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Numerical positive semidefiniteness. Up to 512 points the smallest
    /// eigenvalue must be ≥ −1e-8·max diagonal; beyond that a Cholesky
    /// factorization with diagonal jitter 1e-10 must succeed.
    pub fn is_psd(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let scale = self.max_diagonal();
        if self.n <= 512 {
            self.min_eigenvalue() >= -1e-8 * scale
        } else {
            let mut a = self.entries.clone();
            let jitter = 1e-10 * scale.max(1.0);
            for i in 0..self.n {
                a[i * self.n + i] += jitter;
            }
            Cholesky::factor(self.n, &a).is_ok()
        }
    }
}

/// Kernel on (prediction, object) pairs: `a0·μμ' + a1·k(x, x')`.
#[derive(Debug, Clone)]
pub struct ForecastKernel {
    a0: f64,
    a1: f64,
    base: Kernel,
    y: f64,
}

impl ForecastKernel {
    /// Merged kernel with weights `a0, a1 > 0`; defaults `a1 = 1`, `a0 = 1/Y²`.
    pub fn merge(base: Kernel, y: f64, a0: Option<f64>, a1: Option<f64>) -> Result<Self> {
        if !(y > 0.0) || !y.is_finite() {
            return Err(Error::InvalidParameter(format!("Y must be positive, got {y}")));
        }
        let a0 = a0.unwrap_or(1.0 / (y * y));
        let a1 = a1.unwrap_or(1.0);
        if !(a0 > 0.0) || !(a1 > 0.0) {
            return Err(Error::InvalidParameter(format!("kernel weights must be positive, got a0={a0}, a1={a1}")));
        }
        Ok(Self { a0, a1, base, y })
    }

    /// The base kernel alone, lifted to (μ, x) pairs (`a0 = 0`, `a1 = 1`).
    pub fn plain(base: Kernel, y: f64) -> Result<Self> {
        if !(y > 0.0) || !y.is_finite() {
            return Err(Error::InvalidParameter(format!("Y must be positive, got {y}")));
        }
        Ok(Self { a0: 0.0, a1: 1.0, base, y })
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }

    pub fn a1(&self) -> f64 {
        self.a1
    }

    pub fn base(&self) -> &Kernel {
        &self.base
    }

    pub fn y_bound(&self) -> f64 {
        self.y
    }

    pub fn is_plain(&self) -> bool {
        self.a0 == 0.0
    }

    /// Unchecked evaluation on `((μ, x), (μ', x'))`.
    pub fn value(&self, mu: f64, x: &[f64], mu2: f64, x2: &[f64]) -> f64 {
        self.a0 * mu * mu2 + self.a1 * self.base.value(x, x2)
    }

    pub fn eval(&self, mu: f64, x: &[f64], mu2: f64, x2: &[f64]) -> Result<f64> {
        Ok(self.a0 * mu * mu2 + self.a1 * self.base.eval(x, x2)?)
    }

    /// Gram matrix over the pairs `(μ_n, x_n)`.
    pub fn gram(&self, mus: &[f64], xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        assert_eq!(mus.len(), xs.len());
        let g = self.base.gram(xs)?;
        let n = xs.len();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = self.a0 * mus[i] * mus[j] + self.a1 * g.get(i, j);
            }
        }
        Ok(out)
    }
}
