//! Numeric evaluators for the regret terms of the four main bounds and the
//! i.i.d. risk bound of the averaged rule.
//!
//! Every function is pure. Arguments follow one convention: `y` is the
//! label bound Y, `c` the evaluation bound c_F of the RKHS, `d` the
//! comparator norm ‖D‖_F, and `n` the number of rounds.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quadrature::integrate;

/// Default exponent constant δ used when reporting the asymptotic form.
pub const DEFAULT_DELTA: f64 = 0.25;

/// Log-integrand cutoff below the peak that bounds the quadrature window.
pub const WINDOW_DEPTH: f64 = 40.0;

fn check_common(y: f64, c: f64, d: f64) -> Result<()> {
    if !(y > 0.0) || !y.is_finite() {
        return Err(Error::InvalidParameter(format!("Y must be positive, got {y}")));
    }
    if !(c >= 0.0) || !c.is_finite() {
        return Err(Error::InvalidParameter(format!("c must be ≥ 0, got {c}")));
    }
    if !(d >= 0.0) || !d.is_finite() {
        return Err(Error::InvalidParameter(format!("‖D‖ must be ≥ 0, got {d}")));
    }
    Ok(())
}

/// `B = sqrt(c² + 1)·(d + Y)`, shared by the defensive bounds.
fn defensive_scale(y: f64, c: f64, d: f64) -> f64 {
    (c * c + 1.0).sqrt() * (d + y)
}

/// Regret term achieved by ALN: `2Y·sqrt(c² + 1)·(d + Y)·sqrt(N)`.
pub fn regret_thm1(y: f64, c: f64, d: f64, n: usize) -> Result<f64> {
    check_common(y, c, d)?;
    Ok(2.0 * y * defensive_scale(y, c, d) * (n as f64).sqrt())
}

/// Regret term achieved by K29: `2B·sqrt(L_D + B²) + 2B²` with
/// `B = sqrt(c² + 1)·(d + Y)` and `L_D` the comparator's cumulative loss.
pub fn regret_thm2(y: f64, c: f64, d: f64, loss_d: f64) -> Result<f64> {
    check_common(y, c, d)?;
    if !(loss_d >= 0.0) {
        return Err(Error::InvalidParameter(format!("comparator loss must be ≥ 0, got {loss_d}")));
    }
    let b = defensive_scale(y, c, d);
    Ok(2.0 * b * (loss_d + b * b).sqrt() + 2.0 * b * b)
}

/// Log-integrand of `Γ(a)U(a, b, z)` and its peak location.
#[derive(Debug, Clone, Copy)]
pub struct KummerIntegrand {
    a: f64,
    b: f64,
    z: f64,
}

impl KummerIntegrand {
    /// `a = N/2 + 1`, `b = 0`, `z = dd²/2`.
    pub fn for_f(n: usize, dd: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("f(N, d) needs N ≥ 1".into()));
        }
        if !(dd > 0.0) || !dd.is_finite() {
            return Err(Error::InvalidParameter(format!("f(N, d) needs d > 0, got {dd}")));
        }
        Ok(Self { a: n as f64 / 2.0 + 1.0, b: 0.0, z: dd * dd / 2.0 })
    }

    /// `g(t) = −z·t + (a − 1)·ln t + (b − a − 1)·ln(1 + t)`.
    pub fn log_value(&self, t: f64) -> f64 {
        -self.z * t + (self.a - 1.0) * t.ln() + (self.b - self.a - 1.0) * t.ln_1p()
    }

    pub fn second_derivative(&self, t: f64) -> f64 {
        -(self.a - 1.0) / (t * t) - (self.b - self.a - 1.0) / ((1.0 + t) * (1.0 + t))
    }

    /// Positive root of `z·t² + (z + 2 − b)·t − (a − 1) = 0`, i.e. of
    /// `g'(t)·t·(1 + t)`.
    pub fn peak(&self) -> f64 {
        let p = self.z + 2.0 - self.b;
        let q = self.a - 1.0;
        2.0 * q / (p + (p * p + 4.0 * self.z * q).sqrt())
    }

    /// `[t_lo, t_hi]` on which `g(t) − g(t*) ≥ −depth`.
    pub fn window(&self, depth: f64) -> (f64, f64) {
        let t_star = self.peak();
        let g_star = self.log_value(t_star);
        let below = |t: f64| self.log_value(t) - g_star + depth;

        let mut lo = t_star * 0.5;
        while below(lo) > 0.0 {
            lo *= 0.5;
        }
        let t_lo = bisect_decreasing_to_zero(&below, lo, t_star);

        let mut hi = t_star * 2.0 + 1.0;
        while below(hi) > 0.0 {
            hi *= 2.0;
        }
        let t_hi = bisect_decreasing_to_zero(&below, hi, t_star);
        (t_lo, t_hi)
    }
}

/// Bisects for the crossing of `h` between `out` (h < 0) and `inside` (h ≥ 0).
fn bisect_decreasing_to_zero<F: Fn(f64) -> f64>(h: &F, mut out: f64, mut inside: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (out + inside);
        if mid == out || mid == inside {
            break;
        }
        if h(mid) > 0.0 {
            inside = mid;
        } else {
            out = mid;
        }
    }
    out
}

/// `f(N, d) = −ln(Γ(N/2 + 1)·U(N/2 + 1, 0, d²/2))`, evaluated as
/// `−ln ∫₀^∞ exp(g(t)) dt` by adaptive quadrature of `exp(g − g(t*))` over
/// the window where `g − g(t*) ≥ −40`. The integral is taken in `s = ln t`.
pub fn kummer_f(n: usize, dd: f64) -> Result<f64> {
    let g = KummerIntegrand::for_f(n, dd)?;
    let t_star = g.peak();
    let g_star = g.log_value(t_star);
    let (t_lo, t_hi) = g.window(WINDOW_DEPTH);
    let r = integrate(
        |s: f64| {
            let t = s.exp();
            (g.log_value(t) - g_star + s).exp()
        },
        t_lo.ln(),
        t_hi.ln(),
        1e-12,
        4000,
    );
    Ok(-(g_star + r.value.ln()))
}

/// Laplace (saddle-point) approximation of `kummer_f`.
pub fn kummer_f_laplace(n: usize, dd: f64) -> Result<f64> {
    let g = KummerIntegrand::for_f(n, dd)?;
    let t = g.peak();
    Ok(-g.log_value(t) - 0.5 * (2.0 * std::f64::consts::PI / g.second_derivative(t).abs()).ln())
}

/// Exact mixture regret term `2Y²·f(N, c·d/Y)`; needs `c·d > 0`.
pub fn regret_thm3_exact(y: f64, c: f64, d: f64, n: usize) -> Result<f64> {
    check_common(y, c, d)?;
    if c * d == 0.0 {
        return Err(Error::InvalidParameter(
            "exact mixture term needs c·‖D‖ > 0; use the max-form with P = max(c‖D‖, YδN^(δ−1/2))".into(),
        ));
    }
    Ok(2.0 * y * y * kummer_f(n, c * d / y)?)
}

/// Asymptotic mixture term without its O(Y²) remainder:
/// `2Y·max(cd, YδN^{−1/2+δ})·sqrt(N + 2) + 1.5·Y²·ln N + c²d²/4`.
/// Reporting only; it is not an upper bound as computed.
pub fn regret_thm3_asymptotic(y: f64, c: f64, d: f64, n: usize, delta: f64) -> Result<f64> {
    check_common(y, c, d)?;
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(Error::InvalidParameter(format!("δ must lie in (0, 1/2], got {delta}")));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let nf = n as f64;
    let p = (c * d).max(y * delta * nf.powf(delta - 0.5));
    Ok(2.0 * y * p * (nf + 2.0).sqrt() + 1.5 * y * y * nf.ln() + c * c * d * d / 4.0)
}

/// Lower bound on excess loss: `2Ycd·sqrt(N) − c²d²`, valid for
/// `d ≤ (Y/c)·sqrt(N)`.
pub fn lower_bound_thm4(y: f64, c: f64, d: f64, n: usize) -> Result<f64> {
    check_common(y, c, d)?;
    let cap = thm4_cap(y, c, n);
    if d > cap * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!("‖D‖ = {d} exceeds the cap (Y/c)·√N = {cap}")));
    }
    let cd = c * d;
    Ok(2.0 * y * cd * (n as f64).sqrt() - cd * cd)
}

/// `(Y/c)·sqrt(N)`.
pub fn thm4_cap(y: f64, c: f64, n: usize) -> f64 {
    y / c * (n as f64).sqrt()
}

/// Excess risk allowed for the averaged rule with probability `1 − δ`:
/// `(2Y/√N)·(sqrt(c² + 1)·(d + Y) + 2Y·sqrt(2·ln(2/δ)))`.
pub fn risk_bound_cor2(y: f64, c: f64, d: f64, n: usize, delta: f64) -> Result<f64> {
    check_common(y, c, d)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("δ must lie in (0, 1), got {delta}")));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("risk bound needs N ≥ 1".into()));
    }
    let hoeffding = 2.0 * y * (2.0 * (2.0 / delta).ln()).sqrt();
    Ok(2.0 * y / (n as f64).sqrt() * (defensive_scale(y, c, d) + hoeffding))
}

/// One point of the Kummer f(N, d) surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FigurePoint {
    pub n: usize,
    pub d: f64,
    pub f: f64,
}

/// `f(N, d)` for `N = 1..=100` and `d = 1, 1.05, …, 3`.
pub fn figure1_grid() -> Result<Vec<FigurePoint>> {
    let ds: Vec<f64> = (0..=40).map(|i| 1.0 + 0.05 * i as f64).collect();
    (1..=100usize)
        .into_par_iter()
        .flat_map_iter(|n| ds.clone().into_iter().map(move |d| (n, d)))
        .map(|(n, d)| Ok(FigurePoint { n, d, f: kummer_f(n, d)? }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thm1_examples() {
        assert_eq!(regret_thm1(1.0, 1.0, 1.0, 0).unwrap(), 0.0);
        assert!((regret_thm1(1.0, 1.0, 1.0, 100).unwrap() - 40.0 * 2f64.sqrt()).abs() < 1e-12);
        let a = regret_thm1(1.3, 0.7, 2.0, 25).unwrap();
        let b = regret_thm1(1.3, 0.7, 2.0, 100).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-12);
    }

    #[test]
    fn thm2_examples() {
        // B = 1 via c = 0, d + Y = 1.
        assert!((regret_thm2(0.5, 0.0, 0.5, 0.0).unwrap() - 4.0).abs() < 1e-12);
        let v = regret_thm2(1.0, 1.0, 1.0, 100.0).unwrap();
        assert!((v - (4.0 * 2f64.sqrt() * 108f64.sqrt() + 16.0)).abs() < 1e-12);
        assert!((v - 74.7877).abs() < 1e-4);
        let b = 2.0 * 2f64.sqrt();
        let big = regret_thm2(1.0, 1.0, 1.0, 1e14).unwrap();
        assert!((big / (2.0 * b * 1e7) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn kummer_peak_is_stationary() {
        for (n, dd) in [(1, 1.0), (10, 0.3), (100, 3.0), (5000, 2.0)] {
            let g = KummerIntegrand::for_f(n, dd).unwrap();
            let t = g.peak();
            let h = 1e-6 * t;
            let deriv = (g.log_value(t + h) - g.log_value(t - h)) / (2.0 * h);
            assert!(deriv.abs() < 1e-5 * (1.0 + g.log_value(t).abs()), "{n} {dd}: {deriv}");
        }
    }

    #[test]
    fn kummer_rejects_degenerate_arguments() {
        assert!(kummer_f(10, 0.0).is_err());
        assert!(kummer_f(0, 1.0).is_err());
    }

    #[test]
    fn kummer_large_n_is_finite() {
        let v = kummer_f(100_000, 2.0).unwrap();
        assert!(v.is_finite() && v > kummer_f(1000, 2.0).unwrap());
    }

    #[test]
    fn thm3_exact_scaling() {
        let one = regret_thm3_exact(1.0, 1.0, 1.0, 100).unwrap();
        assert!((one - 24.74).abs() < 0.1);
        let two = regret_thm3_exact(2.0, 1.0, 2.0, 100).unwrap();
        assert!((two - 4.0 * one).abs() < 1e-9);
        assert!((two - 98.96).abs() < 0.4);
        assert!(regret_thm3_exact(1.0, 0.0, 1.0, 10).is_err());
    }

    #[test]
    fn thm3_asymptotic_examples() {
        let v = regret_thm3_asymptotic(1.0, 1.0, 1.0, 100, 0.25).unwrap();
        let want = 2.0 * 102f64.sqrt() + 1.5 * 100f64.ln() + 0.25;
        assert!((v - want).abs() < 1e-12);
        assert!((v - 27.36).abs() < 0.01);
        let big = regret_thm3_asymptotic(1.0, 2.0, 50.0, 100, 0.25).unwrap();
        assert!((big - (2.0 * 100.0 * 102f64.sqrt() + 1.5 * 100f64.ln() + 2500.0)).abs() < 1e-9);
        assert!(regret_thm3_asymptotic(1.0, 1.0, 1.0, 10, 0.0).is_err());
    }

    #[test]
    fn thm4_examples() {
        let (y, c, n) = (1.5, 0.8, 9);
        let cap = thm4_cap(y, c, n);
        assert!((lower_bound_thm4(y, c, cap, n).unwrap() - y * y * n as f64).abs() < 1e-12);
        assert_eq!(lower_bound_thm4(1.0, 1.0, 2.0, 4).unwrap(), 4.0);
        assert_eq!(lower_bound_thm4(1.0, 1.0, 0.0, 4).unwrap(), 0.0);
        assert!(lower_bound_thm4(1.0, 1.0, 2.1, 4).is_err());
    }

    #[test]
    fn cor2_examples() {
        assert!(risk_bound_cor2(1.0, 1.0, 1.0, 10, 2.0).is_err());
        let v = risk_bound_cor2(1.0, 1.0, 1.0, 400, 0.1).unwrap();
        let want = 0.1 * (2.0 * 2f64.sqrt() + 2.0 * (2.0 * 20f64.ln()).sqrt());
        assert!((v - want).abs() < 1e-12);
        assert!((v - 0.7724).abs() < 1e-4);
        let quarter = risk_bound_cor2(1.0, 1.0, 1.0, 1600, 0.1).unwrap();
        assert!((v / quarter - 2.0).abs() < 1e-12);
    }
}
