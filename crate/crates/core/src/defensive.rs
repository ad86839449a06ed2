//! Defensive-forecasting predictors (ALN and K29) and the post-hoc
//! certificates their Skeptic-capital argument guarantees.
//!
//! Both predictors pick `μ_n` as a root of a continuous function `S_n` on
//! `[−Y, Y]`, or an endpoint when `S_n` has constant sign there. With the
//! kernel `a0·μμ' + a1·k(x, x')`:
//!
//! ```text
//! S_n(μ) = Σ_{i<n} (a0·μ·μ_i + a1·k(x, x_i))(y_i − μ_i)  [ − (a0·μ² + a1·k(x, x))·μ  for ALN ]
//! ```
//!
//! A Skeptic betting `s_n = S_n(μ_n)` never gains capital, which bounds the
//! Gram quadratic form `Σ_{n,i} r_n r_i K̃_{ni}` with residuals
//! `r_n = y_n − μ_n`.

use crate::comparators::Comparator;
use crate::error::{Error, Result};
use crate::kernel::{ForecastKernel, Kernel};
use crate::linalg::compensated_sum;
use crate::predictor::{check_label, OnlinePredictor};

/// Number of evenly spaced probes of `[−Y, Y]` scanned before bisection.
pub const PROBES: usize = 17;
/// Bisection iteration cap.
pub const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Aln,
    K29,
}

/// How a defensive prediction was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootKind {
    /// `|S(μ)| ≤ τ`.
    Root,
    /// `S > 0` on every probe, `μ = Y`.
    Upper,
    /// `S < 0` on every probe, `μ = −Y`.
    Lower,
    /// `S ≡ 0` within τ on the 5-point probe, `μ = 0`.
    Flat,
    /// Bisection collapsed to adjacent floats without reaching τ.
    Approximate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefensiveRoot {
    pub mu: f64,
    pub value: f64,
    pub kind: RootKind,
}

/// Root rule shared by ALN and K29.
pub fn defensive_root<F: Fn(f64) -> f64>(s: F, y: f64, tau: f64) -> DefensiveRoot {
    let step = 2.0 * y / (PROBES - 1) as f64;
    let probes: [f64; PROBES] = std::array::from_fn(|j| if j == PROBES - 1 { y } else { -y + j as f64 * step });
    let vals: [f64; PROBES] = probes.map(&s);

    if (0..PROBES).step_by(4).all(|j| vals[j].abs() <= tau) {
        return DefensiveRoot { mu: 0.0, value: vals[PROBES / 2], kind: RootKind::Flat };
    }
    for j in 0..PROBES {
        if vals[j].abs() <= tau {
            return DefensiveRoot { mu: probes[j], value: vals[j], kind: RootKind::Root };
        }
        if j + 1 < PROBES && (vals[j] < 0.0) != (vals[j + 1] < 0.0) {
            return bisect(&s, probes[j], vals[j], probes[j + 1], vals[j + 1], tau);
        }
    }
    if vals[0] > 0.0 {
        DefensiveRoot { mu: y, value: vals[PROBES - 1], kind: RootKind::Upper }
    } else {
        DefensiveRoot { mu: -y, value: vals[0], kind: RootKind::Lower }
    }
}

fn bisect<F: Fn(f64) -> f64>(s: &F, mut lo: f64, mut flo: f64, mut hi: f64, fhi: f64, tau: f64) -> DefensiveRoot {
    let (mut best, mut best_v) = if flo.abs() < fhi.abs() { (lo, flo) } else { (hi, fhi) };
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = s(mid);
        if v.abs() < best_v.abs() {
            best = mid;
            best_v = v;
        }
        if v.abs() <= tau {
            return DefensiveRoot { mu: mid, value: v, kind: RootKind::Root };
        }
        if (v < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = v;
        } else {
            hi = mid;
        }
    }
    DefensiveRoot { mu: best, value: best_v, kind: RootKind::Approximate }
}

/// `S_n` reduced to four scalars; evaluation is O(1) in μ.
#[derive(Debug, Clone, Copy)]
struct SFunction {
    variant: Variant,
    a0: f64,
    a1: f64,
    /// Σ μ_i (y_i − μ_i)
    mu_resid: f64,
    /// Σ k(x, x_i)(y_i − μ_i)
    cross: f64,
    /// k(x, x)
    self_k: f64,
}

impl SFunction {
    fn eval(&self, mu: f64) -> f64 {
        let s = self.a0 * mu * self.mu_resid + self.a1 * self.cross;
        match self.variant {
            Variant::Aln => s - (self.a0 * mu * mu + self.a1 * self.self_k) * mu,
            Variant::K29 => s,
        }
    }
}

/// Round-by-round state of an ALN or K29 predictor.
#[derive(Debug, Clone)]
pub struct PredictorState {
    variant: Variant,
    kernel: ForecastKernel,
    tau: f64,
    xs: Vec<Vec<f64>>,
    mus: Vec<f64>,
    ys: Vec<f64>,
    residuals: Vec<f64>,
    pending: Option<(Vec<f64>, f64)>,
}

/// Default root tolerance `1e-12·max(1, c_k²)`.
pub fn default_tau(base: &Kernel) -> f64 {
    let c = base.bound().unwrap_or(1.0);
    1e-12 * (c * c).max(1.0)
}

impl PredictorState {
    /// Predictor with the merged kernel `a0·μμ' + a1·k`; defaults
    /// `a1 = 1`, `a0 = 1/Y²`, `τ = 1e-12·max(1, c_k²)`.
    pub fn new(
        variant: Variant,
        base: Kernel,
        y: f64,
        a0: Option<f64>,
        a1: Option<f64>,
        tau: Option<f64>,
    ) -> Result<Self> {
        let tau = Self::check_tau(tau, &base)?;
        let kernel = ForecastKernel::merge(base, y, a0, a1)?;
        Ok(Self::from_kernel(variant, kernel, tau))
    }

    /// Predictor whose parameter is the plain object kernel `k`.
    pub fn new_plain(variant: Variant, base: Kernel, y: f64, tau: Option<f64>) -> Result<Self> {
        let tau = Self::check_tau(tau, &base)?;
        let kernel = ForecastKernel::plain(base, y)?;
        Ok(Self::from_kernel(variant, kernel, tau))
    }

    fn check_tau(tau: Option<f64>, base: &Kernel) -> Result<f64> {
        let tau = tau.unwrap_or_else(|| default_tau(base));
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidParameter(format!("root tolerance must be positive, got {tau}")));
        }
        Ok(tau)
    }

    fn from_kernel(variant: Variant, kernel: ForecastKernel, tau: f64) -> Self {
        Self {
            variant,
            kernel,
            tau,
            xs: Vec::new(),
            mus: Vec::new(),
            ys: Vec::new(),
            residuals: Vec::new(),
            pending: None,
        }
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn kernel(&self) -> &ForecastKernel {
        &self.kernel
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn xs(&self) -> &[Vec<f64>] {
        &self.xs
    }

    pub fn mus(&self) -> &[f64] {
        &self.mus
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    fn s_parts(&self, x: &[f64], upto: usize) -> SFunction {
        let base = self.kernel.base();
        SFunction {
            variant: self.variant,
            a0: self.kernel.a0(),
            a1: self.kernel.a1(),
            mu_resid: compensated_sum((0..upto).map(|i| self.mus[i] * self.residuals[i])),
            cross: compensated_sum((0..upto).map(|i| base.value(x, &self.xs[i]) * self.residuals[i])),
            self_k: base.value(x, x),
        }
    }

    /// `S_n(μ)` for the next round at object `x`.
    pub fn s_function(&self, x: &[f64], mu: f64) -> Result<f64> {
        self.kernel.base().check_point(x)?;
        Ok(self.s_parts(x, self.xs.len()).eval(mu))
    }

    /// The root rule at `x` with full diagnostics.
    pub fn root_at(&self, x: &[f64]) -> Result<DefensiveRoot> {
        self.kernel.base().check_point(x)?;
        let s = self.s_parts(x, self.xs.len());
        Ok(defensive_root(|m| s.eval(m), self.kernel.y_bound(), self.tau))
    }

    /// Predictions at `x` of the snapshot rules after 0, 1, …, n rounds.
    ///
    /// Uses prefix sums, so the cost is O(n) kernel evaluations plus one
    /// root search per snapshot.
    pub fn snapshot_predictions(&self, x: &[f64]) -> Result<Vec<f64>> {
        let base = self.kernel.base();
        base.check_point(x)?;
        let self_k = base.value(x, x);
        let y = self.kernel.y_bound();
        let mut out = Vec::with_capacity(self.xs.len() + 1);
        let mut mu_resid = 0.0;
        let mut cross = 0.0;
        for i in 0..=self.xs.len() {
            let s = SFunction {
                variant: self.variant,
                a0: self.kernel.a0(),
                a1: self.kernel.a1(),
                mu_resid,
                cross,
                self_k,
            };
            out.push(defensive_root(|m| s.eval(m), y, self.tau).mu);
            if i < self.xs.len() {
                mu_resid += self.mus[i] * self.residuals[i];
                cross += base.value(x, &self.xs[i]) * self.residuals[i];
            }
        }
        Ok(out)
    }
}

impl OnlinePredictor for PredictorState {
    fn y_bound(&self) -> f64 {
        self.kernel.y_bound()
    }

    fn round(&self) -> usize {
        self.xs.len()
    }

    fn prediction_at(&self, x: &[f64]) -> Result<f64> {
        Ok(self.root_at(x)?.mu)
    }

    fn predict(&mut self, x: &[f64]) -> Result<f64> {
        let mu = self.prediction_at(x)?;
        self.pending = Some((x.to_vec(), mu));
        Ok(mu)
    }

    fn observe(&mut self, y: f64) -> Result<()> {
        let Some((x, mu)) = self.pending.take() else {
            return Err(Error::NoPendingPrediction);
        };
        if let Err(e) = check_label(y, self.y_bound(), self.xs.len() + 1) {
            self.pending = Some((x, mu));
            return Err(e);
        }
        self.xs.push(x);
        self.mus.push(mu);
        self.ys.push(y);
        self.residuals.push(y - mu);
        Ok(())
    }

    fn box_clone(&self) -> Box<dyn OnlinePredictor> {
        Box::new(self.clone())
    }
}

/// The norm inequality certified by a completed defensive game:
/// `lhs ≤ rhs + slack_allowance`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefensiveCertificate {
    pub lhs: f64,
    pub rhs: f64,
    pub slack_allowance: f64,
}

impl DefensiveCertificate {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs + self.slack_allowance
    }

    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }
}

/// Capital an approximate root can leak over `n` rounds: `4nτY`.
pub fn leak_allowance(n: usize, tau: f64, y: f64) -> f64 {
    4.0 * n as f64 * tau * y
}

/// Recomputes the defensive certificate of a played game from its
/// transcript.
///
/// `lhs = Σ_{n,i} r_n r_i K̃_{ni}`. `rhs = Σ (Y² − μ_n²) K̃_{nn}` for ALN
/// and `Σ r_n² K̃_{nn}` for K29.
pub fn certificate(
    xs: &[Vec<f64>],
    mus: &[f64],
    ys: &[f64],
    kernel: &ForecastKernel,
    variant: Variant,
    tau: f64,
) -> Result<DefensiveCertificate> {
    let n = xs.len();
    assert!(mus.len() == n && ys.len() == n);
    if n == 0 {
        return Ok(DefensiveCertificate { lhs: 0.0, rhs: 0.0, slack_allowance: 0.0 });
    }
    let y = kernel.y_bound();
    let g = kernel.gram(mus, xs)?;
    let r: Vec<f64> = ys.iter().zip(mus).map(|(y, m)| y - m).collect();
    let lhs = compensated_sum((0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| r[i] * r[j] * g[i * n + j]));
    let rhs = compensated_sum((0..n).map(|i| {
        let w = match variant {
            Variant::Aln => y * y - mus[i] * mus[i],
            Variant::K29 => r[i] * r[i],
        };
        w * g[i * n + i]
    }));
    Ok(DefensiveCertificate { lhs, rhs, slack_allowance: leak_allowance(n, tau, y) })
}

/// `|Σ r_n·μ_n|` against its certified ceiling: for ALN
/// `sqrt((Y²·Σ(a0μ² + a1k) + allowance)/a0)`, for K29
/// `sqrt((Σ r²(a0μ² + a1k) + allowance)/a0)`.
///
/// The second element of the returned tuple is the certified budget
/// `B` such that `‖Σ r_n Φ_j‖² ≤ B / a_j` for both feature maps.
pub fn mixed_check(
    xs: &[Vec<f64>],
    mus: &[f64],
    ys: &[f64],
    kernel: &ForecastKernel,
    variant: Variant,
    tau: f64,
) -> Result<(f64, f64, f64)> {
    let n = xs.len();
    let y = kernel.y_bound();
    let base = kernel.base();
    for x in xs {
        base.check_point(x)?;
    }
    let lhs = compensated_sum((0..n).map(|i| (ys[i] - mus[i]) * mus[i])).abs();
    let budget = compensated_sum((0..n).map(|i| {
        let d = kernel.a0() * mus[i] * mus[i] + kernel.a1() * base.value(&xs[i], &xs[i]);
        match variant {
            Variant::Aln => y * y * d,
            Variant::K29 => (ys[i] - mus[i]).powi(2) * d,
        }
    })) + leak_allowance(n, tau, y);
    let rhs = if kernel.a0() > 0.0 { (budget / kernel.a0()).sqrt() } else { f64::INFINITY };
    Ok((lhs, rhs, budget))
}

/// Resolution inequality for ALN run with the plain kernel:
/// `|Σ (y_n − μ_n) D(x_n)|` versus `Y·c_k·‖D‖·√N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolutionCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub allowance: f64,
}

impl ResolutionCheck {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs + self.allowance
    }
}

pub fn resolution_check(
    xs: &[Vec<f64>],
    mus: &[f64],
    ys: &[f64],
    base: &Kernel,
    y: f64,
    tau: f64,
    d: &Comparator,
) -> Result<ResolutionCheck> {
    let n = xs.len();
    if n == 0 {
        return Ok(ResolutionCheck { lhs: 0.0, rhs: 0.0, allowance: 0.0 });
    }
    let c = base.bound()?;
    let mut terms = Vec::with_capacity(n);
    for i in 0..n {
        terms.push((ys[i] - mus[i]) * d.eval(&xs[i])?);
    }
    let lhs = compensated_sum(terms).abs();
    let rhs = y * c * d.norm() * (n as f64).sqrt();
    // A leak of L in Skeptic's capital inflates the certified norm by at
    // most sqrt(L).
    let leak = d.norm() * leak_allowance(n, tau, y).sqrt();
    // Rounding in the sum, from `sup |D| ≤ c·Σ|c_j|`.
    let sup_d = c * d.coeffs().iter().map(|v| v.abs()).sum::<f64>();
    let rounding = 1e-12 * sup_d * (0..n).map(|i| (ys[i] - mus[i]).abs()).sum::<f64>();
    Ok(ResolutionCheck { lhs, rhs, allowance: leak + rounding })
}
