use std::fmt::Write as _;

use super::reality::{object_dimension, rng_for, streams};
use super::transcript::GameTranscript;
use crate::aggregating::log_det_regularized;
use crate::bounds::{regret_thm1, regret_thm2, regret_thm3_asymptotic, regret_thm3_exact, DEFAULT_DELTA};
use crate::comparators::{hindsight_ridge, random_expansion, Comparator};
use crate::defensive::{certificate, default_tau, leak_allowance, mixed_check, resolution_check, Variant};
use crate::error::{Error, Result};
use crate::kernel::{ForecastKernel, Kernel};
use crate::predictor::Algorithm;
use rand::Rng;

/// Norms the random battery expansions are rescaled to.
pub const BATTERY_NORMS: [f64; 4] = [0.5, 1.0, 2.0, 5.0];
pub const BATTERY_RANDOM: usize = 10;
pub const BATTERY_MAX_CENTERS: usize = 10;
pub const BATTERY_LAMBDAS: [f64; 3] = [0.1, 1.0, 10.0];

/// Relative numerical tolerance on the ridge-type bounds.
pub const RIDGE_TOLERANCE: f64 = 1e-8;

/// A named benchmark rule.
#[derive(Debug, Clone)]
pub struct BatteryEntry {
    pub id: String,
    pub rule: Comparator,
}

/// The zero rule, random expansions with centers drawn from the box
/// spanned by the transcript's objects, and hindsight ridge rules.
pub fn standard_battery(kernel: &Kernel, transcript: &GameTranscript, seed: u64) -> Result<Vec<BatteryEntry>> {
    let xs = transcript.xs();
    let ys = transcript.ys();
    let m = transcript.dimension().unwrap_or_else(|| object_dimension(kernel));
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    if !kernel.unit_domain() && !xs.is_empty() {
        lo = xs.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        hi = xs.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    }
    let mut rng = rng_for(seed, streams::BATTERY);
    let mut out = vec![BatteryEntry { id: "zero".into(), rule: Comparator::zero(kernel.clone()) }];
    for i in 0..BATTERY_RANDOM {
        let k = rng.random_range(1..=BATTERY_MAX_CENTERS);
        let norm = BATTERY_NORMS[i % BATTERY_NORMS.len()];
        let rule = random_expansion(kernel, &mut rng, k, m, lo, hi, norm)?;
        out.push(BatteryEntry { id: format!("random{}:k={k}:norm={norm}", i + 1), rule });
    }
    for lambda in BATTERY_LAMBDAS {
        let rule = hindsight_ridge(kernel, &xs, &ys, lambda)?;
        out.push(BatteryEntry { id: format!("ridge:lambda={lambda}"), rule });
    }
    Ok(out)
}

/// One comparator's regret row.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretRow {
    pub comparator: String,
    pub norm: f64,
    pub comparator_loss: f64,
    pub predictor_loss: f64,
    /// Name of the bound applied, `none` in report-only rows.
    pub bound: String,
    /// Regret term of the bound.
    pub bound_value: f64,
    /// `comparator_loss + bound_value`.
    pub rhs: f64,
    pub slack: f64,
    pub allowance: f64,
    pub asserted: bool,
    pub thm3_exact: Option<f64>,
    pub thm3_asymptotic: f64,
}

/// A norm inequality certified by the game itself.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateRow {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub allowance: f64,
    pub asserted: bool,
}

fn violated(slack: f64, allowance: f64, asserted: bool) -> bool {
    asserted && !(slack >= -allowance)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretReport {
    pub algorithm: String,
    pub kernel: String,
    pub y: f64,
    pub rounds: usize,
    pub rows: Vec<RegretRow>,
    pub certificates: Vec<CertificateRow>,
}

impl RegretReport {
    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| violated(r.slack, r.allowance, r.asserted)).count()
            + self.certificates.iter().filter(|r| violated(r.slack, r.allowance, r.asserted)).count()
    }

    pub fn passed(&self) -> bool {
        self.violations() == 0
    }

    pub fn asserted_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.asserted).count() + self.certificates.iter().filter(|r| r.asserted).count()
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        writeln!(s, "algorithm {}  kernel {}  Y {}  N {}", self.algorithm, self.kernel, self.y, self.rounds).unwrap();
        writeln!(
            s,
            "{:<28} {:>9} {:>12} {:>12} {:>10} {:>12} {:>12} {:>6} {:>12} {:>12}",
            "comparator", "norm", "comp_loss", "pred_loss", "bound", "bound_value", "slack", "check", "thm3_exact", "thm3_asym"
        )
        .unwrap();
        for r in &self.rows {
            let exact = r.thm3_exact.map_or("-".to_string(), |v| format!("{v:.4}"));
            writeln!(
                s,
                "{:<28} {:>9.4} {:>12.4} {:>12.4} {:>10} {:>12.4} {:>12.4} {:>6} {:>12} {:>12.4}",
                r.comparator,
                r.norm,
                r.comparator_loss,
                r.predictor_loss,
                r.bound,
                r.bound_value,
                r.slack,
                status(r.slack, r.allowance, r.asserted),
                exact,
                r.thm3_asymptotic
            )
            .unwrap();
        }
        if !self.certificates.is_empty() {
            writeln!(s, "{:<40} {:>14} {:>14} {:>14} {:>6}", "certificate", "lhs", "rhs", "slack", "check").unwrap();
            for c in &self.certificates {
                writeln!(
                    s,
                    "{:<40} {:>14.6e} {:>14.6e} {:>14.6e} {:>6}",
                    c.name,
                    c.lhs,
                    c.rhs,
                    c.slack,
                    status(c.slack, c.allowance, c.asserted)
                )
                .unwrap();
            }
        }
        writeln!(s, "violations: {}", self.violations()).unwrap();
        s
    }

    /// One CSV table holding both kinds of rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "kind,name,norm,comparator_loss,predictor_loss,bound,bound_value,lhs,rhs,slack,allowance,asserted,thm3_exact,thm3_asymptotic\n",
        );
        for r in &self.rows {
            let exact = r.thm3_exact.map_or(String::new(), |v| v.to_string());
            writeln!(
                s,
                "regret,{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.comparator,
                r.norm,
                r.comparator_loss,
                r.predictor_loss,
                r.bound,
                r.bound_value,
                r.predictor_loss,
                r.rhs,
                r.slack,
                r.allowance,
                r.asserted,
                exact,
                r.thm3_asymptotic
            )
            .unwrap();
        }
        for c in &self.certificates {
            writeln!(s, "certificate,{},,,,,,{},{},{},{},{},,", c.name, c.lhs, c.rhs, c.slack, c.allowance, c.asserted).unwrap();
        }
        s
    }
}

fn status(slack: f64, allowance: f64, asserted: bool) -> &'static str {
    if !asserted {
        "ref"
    } else if violated(slack, allowance, asserted) {
        "FAIL"
    } else {
        "ok"
    }
}

/// Which guarantee applies to a transcript's algorithm.
enum Guarantee {
    Defensive(Variant),
    Plain,
    Ridge(f64),
    Grid(Vec<f64>),
    ReportOnly,
}

/// Audits a transcript against every comparator of `battery`.
///
/// Asserted rows: `aln` against the defensive bound with constant regret
/// rate, `k29` against the loss-adaptive one, `kaar:a` against the ridge
/// log-determinant bound, `aa-grid` against the best expert's ridge bound
/// plus `2Y² ln m`, and `aln-plain` through its resolution inequality.
/// Defensive algorithms also get their capital certificates. Unknown
/// algorithms are reported without assertions.
pub fn audit(transcript: &GameTranscript, kernel: &Kernel, y: f64, battery: &[BatteryEntry]) -> Result<RegretReport> {
    if !(y > 0.0) || !y.is_finite() {
        return Err(Error::InvalidParameter(format!("Y must be positive, got {y}")));
    }
    let algorithm = Algorithm::parse(&transcript.fingerprint.algorithm).ok();
    let guarantee = match algorithm {
        Some(Algorithm::Aln) => Guarantee::Defensive(Variant::Aln),
        Some(Algorithm::K29) => Guarantee::Defensive(Variant::K29),
        Some(Algorithm::AlnPlain) => Guarantee::Plain,
        Some(Algorithm::Kaar { a }) => Guarantee::Ridge(a),
        Some(alg @ Algorithm::AaGrid { .. }) => Guarantee::Grid(alg.grid(y).unwrap()),
        Some(Algorithm::Zero) | None => Guarantee::ReportOnly,
    };
    let xs = transcript.xs();
    let ys = transcript.ys();
    let mus = transcript.mus();
    let n = transcript.len();
    let c = kernel.bound()?;
    let tau = default_tau(kernel);
    let predictor_loss = transcript.total_loss();
    let defensive_allowance = leak_allowance(n, tau, y);

    let log_dets: Vec<(f64, f64)> = match &guarantee {
        Guarantee::Ridge(a) => vec![(*a, log_det_regularized(&kernel.gram(&xs)?, *a)?)],
        Guarantee::Grid(grid) => {
            let g = kernel.gram(&xs)?;
            grid.iter().map(|&a| Ok((a, log_det_regularized(&g, a)?))).collect::<Result<_>>()?
        }
        _ => Vec::new(),
    };
    let ridge_term = |d: f64| -> f64 { log_dets.iter().map(|(a, ld)| a * d * d + y * y * ld).fold(f64::INFINITY, f64::min) };

    let mut rows = Vec::with_capacity(battery.len());
    let mut certificates = Vec::new();
    for entry in battery {
        let d = entry.rule.norm();
        let loss_d = entry.rule.loss(&xs, &ys)?;
        let (bound, bound_value, allowance, asserted) = match &guarantee {
            Guarantee::Defensive(Variant::Aln) => ("thm1", regret_thm1(y, c, d, n)?, defensive_allowance, true),
            Guarantee::Defensive(Variant::K29) => ("thm2", regret_thm2(y, c, d, loss_d)?, defensive_allowance, true),
            Guarantee::Ridge(_) => {
                let b = ridge_term(d);
                ("ridge", b, RIDGE_TOLERANCE * (loss_d + b).max(1.0), true)
            }
            Guarantee::Grid(grid) => {
                let b = ridge_term(d) + 2.0 * y * y * (grid.len() as f64).ln();
                ("grid", b, RIDGE_TOLERANCE * (loss_d + b).max(1.0), true)
            }
            Guarantee::Plain | Guarantee::ReportOnly => ("none", f64::NAN, 0.0, false),
        };
        let rhs = loss_d + bound_value;
        let thm3_exact = if c * d > 0.0 && n > 0 { Some(regret_thm3_exact(y, c, d, n)?) } else { None };
        rows.push(RegretRow {
            comparator: entry.id.clone(),
            norm: d,
            comparator_loss: loss_d,
            predictor_loss,
            bound: bound.to_string(),
            bound_value,
            rhs,
            slack: rhs - predictor_loss,
            allowance,
            asserted,
            thm3_exact,
            thm3_asymptotic: regret_thm3_asymptotic(y, c, d, n, DEFAULT_DELTA)?,
        });
        if let Guarantee::Plain = guarantee {
            let r = resolution_check(&xs, &mus, &ys, kernel, y, tau, &entry.rule)?;
            certificates.push(CertificateRow {
                name: format!("resolution:{}", entry.id),
                lhs: r.lhs,
                rhs: r.rhs,
                slack: r.rhs - r.lhs,
                allowance: r.allowance,
                asserted: true,
            });
        }
    }

    match guarantee {
        Guarantee::Defensive(variant) => {
            let fk = ForecastKernel::merge(kernel.clone(), y, None, None)?;
            let cert = certificate(&xs, &mus, &ys, &fk, variant, tau)?;
            certificates.push(CertificateRow {
                name: "capital".into(),
                lhs: cert.lhs,
                rhs: cert.rhs,
                slack: cert.slack(),
                allowance: cert.slack_allowance,
                asserted: true,
            });
            let (lhs, rhs, _) = mixed_check(&xs, &mus, &ys, &fk, variant, tau)?;
            certificates.push(CertificateRow { name: "mixed".into(), lhs, rhs, slack: rhs - lhs, allowance: 0.0, asserted: true });
        }
        Guarantee::Plain => {
            let fk = ForecastKernel::plain(kernel.clone(), y)?;
            let cert = certificate(&xs, &mus, &ys, &fk, Variant::Aln, tau)?;
            certificates.push(CertificateRow {
                name: "capital".into(),
                lhs: cert.lhs,
                rhs: cert.rhs,
                slack: cert.slack(),
                allowance: cert.slack_allowance,
                asserted: true,
            });
        }
        _ => {}
    }

    Ok(RegretReport {
        algorithm: transcript.fingerprint.algorithm.clone(),
        kernel: kernel.to_string(),
        y,
        rounds: n,
        rows,
        certificates,
    })
}

#[cfg(test)]
mod tests {
    use super::super::reality::{run_game, synth_iid, Sequence};
    use super::super::transcript::Fingerprint;
    use super::*;

    fn game(alg: &str, kernel: &str, n: usize) -> (GameTranscript, Kernel) {
        let k = Kernel::parse(kernel).unwrap();
        let data = synth_iid("uniform-smooth", &k, 1.0, n, 9).unwrap();
        (run_game(alg, kernel, 1.0, &mut Sequence::new(data), Some(9)).unwrap(), k)
    }

    #[test]
    fn battery_shape() {
        let (t, k) = game("aln", "sobolev01", 20);
        let b = standard_battery(&k, &t, 1).unwrap();
        assert_eq!(b.len(), 1 + BATTERY_RANDOM + BATTERY_LAMBDAS.len());
        for (i, e) in b[1..=BATTERY_RANDOM].iter().enumerate() {
            assert!((e.rule.norm() - BATTERY_NORMS[i % 4]).abs() < 1e-10);
            assert!(e.rule.centers().len() <= BATTERY_MAX_CENTERS);
        }
    }

    #[test]
    fn empty_transcript_slack_equals_bound() {
        let k = Kernel::fermi_sobolev();
        let fp = Fingerprint { algorithm: "aln".into(), kernel: k.to_string(), y: 1.0, seed: None };
        let t = GameTranscript::new(fp);
        let b = standard_battery(&k, &t, 1).unwrap();
        let rep = audit(&t, &k, 1.0, &b).unwrap();
        for r in &rep.rows {
            assert_eq!(r.slack, r.bound_value);
        }
        assert!(rep.passed());
    }

    #[test]
    fn zero_comparator_row_assembles_directly() {
        let (t, k) = game("aln", "fermi-sobolev", 60);
        let b = standard_battery(&k, &t, 2).unwrap();
        let rep = audit(&t, &k, 1.0, &b).unwrap();
        let row = &rep.rows[0];
        let c = 2.0 / 3f64.sqrt();
        let sum_y2: f64 = t.ys().iter().map(|v| v * v).sum();
        let want = 2.0 * (c * c + 1.0).sqrt() * 60f64.sqrt() + sum_y2 - t.total_loss();
        assert!((row.slack - want).abs() < 1e-9);
        assert!(rep.passed(), "{}", rep.to_table());
    }

    #[test]
    fn every_algorithm_passes_its_audit() {
        for alg in ["aln", "k29", "aln-plain", "kaar:0.5", "aa-grid:-3:3"] {
            let (t, k) = game(alg, "sobolev01", 80);
            let b = standard_battery(&k, &t, 3).unwrap();
            let rep = audit(&t, &k, 1.0, &b).unwrap();
            assert!(rep.asserted_rows() > 0, "{alg}");
            assert!(rep.passed(), "{alg}\n{}", rep.to_table());
        }
        let (t, k) = game("zero", "sobolev01", 10);
        let rep = audit(&t, &k, 1.0, &standard_battery(&k, &t, 3).unwrap()).unwrap();
        assert_eq!(rep.asserted_rows(), 0);
    }

    #[test]
    fn unknown_algorithm_is_report_only() {
        let (mut t, k) = game("aln", "sobolev01", 10);
        t.fingerprint.algorithm = "mystery".into();
        let rep = audit(&t, &k, 1.0, &standard_battery(&k, &t, 3).unwrap()).unwrap();
        assert_eq!(rep.asserted_rows(), 0);
        assert!(rep.to_csv().lines().count() > 1);
    }
}
