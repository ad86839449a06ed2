use super::reality::{opposing_label, play, Reality};
use super::transcript::{Fingerprint, GameTranscript};
use crate::bounds::{lower_bound_thm4, thm4_cap};
use crate::comparators::Comparator;
use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::predictor::{Algorithm, OnlinePredictor};

/// Objects `x_n = 2n`, labels opposing the prediction.
#[derive(Debug, Clone)]
pub struct SpacedAdversary {
    rounds: usize,
    y: f64,
}

impl SpacedAdversary {
    pub fn new(rounds: usize, y: f64) -> Self {
        Self { rounds, y }
    }
}

impl Reality for SpacedAdversary {
    fn object(&mut self, n: usize) -> Option<Vec<f64>> {
        (n <= self.rounds).then(|| vec![2.0 * n as f64])
    }

    fn label(&mut self, _n: usize, _x: &[f64], mu: f64) -> f64 {
        opposing_label(mu, self.y)
    }
}

/// Outcome of the lower-bound game.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBoundCheck {
    pub alpha: f64,
    pub predictor_loss: f64,
    pub comparator_loss: f64,
    pub expected_comparator_loss: f64,
    pub norm: f64,
    pub d: f64,
    pub excess: f64,
    pub lower_bound: f64,
    pub predictor_loss_ok: bool,
    pub comparator_loss_ok: bool,
    pub norm_ok: bool,
    pub excess_ok: bool,
}

impl LowerBoundCheck {
    pub fn holds(&self) -> bool {
        self.predictor_loss_ok && self.comparator_loss_ok && self.norm_ok && self.excess_ok
    }
}

#[derive(Debug, Clone)]
pub struct AdversaryRun {
    pub transcript: GameTranscript,
    pub comparator: Comparator,
    pub check: LowerBoundCheck,
}

/// Plays `predictor` against the spaced adversary with the triangular
/// kernel of scale `c`, and checks the excess loss of the rule
/// `D = α Σ y_n·k(2n, ·)/c²`, `α = cd/(Y√N)`, against
/// `2Ycd√N − c²d²`.
pub fn adversary_with(
    predictor: &mut dyn OnlinePredictor,
    fingerprint: Fingerprint,
    c: f64,
    y: f64,
    n: usize,
    d: f64,
) -> Result<AdversaryRun> {
    if n == 0 {
        return Err(Error::InvalidParameter("adversary needs N ≥ 1".into()));
    }
    if !(d > 0.0) {
        return Err(Error::InvalidParameter(format!("‖D‖ must be positive, got {d}")));
    }
    let lower_bound = lower_bound_thm4(y, c, d, n)?;
    let d = d.min(thm4_cap(y, c, n));
    let kernel = Kernel::triangular(c)?;
    let transcript = play(predictor, &mut SpacedAdversary::new(n, y), fingerprint)?;
    let nf = n as f64;
    let alpha = c * d / (y * nf.sqrt());
    let xs = transcript.xs();
    let ys = transcript.ys();
    let coeffs = ys.iter().map(|l| alpha * l / (c * c)).collect();
    let comparator = Comparator::expansion(kernel, xs.clone(), coeffs)?;
    let predictor_loss = transcript.total_loss();
    let comparator_loss = comparator.loss(&xs, &ys)?;
    let expected_comparator_loss = (1.0 - alpha).powi(2) * y * y * nf;
    let scale = (y * y * nf).max(1.0);
    let excess = predictor_loss - comparator_loss;
    let check = LowerBoundCheck {
        alpha,
        predictor_loss,
        comparator_loss,
        expected_comparator_loss,
        norm: comparator.norm(),
        d,
        excess,
        lower_bound,
        predictor_loss_ok: predictor_loss >= y * y * nf * (1.0 - 1e-12),
        comparator_loss_ok: (comparator_loss - expected_comparator_loss).abs() <= 1e-9 * scale,
        norm_ok: (comparator.norm() - d).abs() <= 1e-9 * d.max(1.0),
        excess_ok: excess >= lower_bound - 1e-9 * scale,
    };
    Ok(AdversaryRun { transcript, comparator, check })
}

/// [`adversary_with`] for a predictor named by its selection string.
pub fn adversary_thm4(algorithm: &str, c: f64, y: f64, n: usize, d: f64) -> Result<AdversaryRun> {
    let alg = Algorithm::parse(algorithm)?;
    let kernel = Kernel::triangular(c)?;
    let mut p = alg.build(&kernel, y)?;
    let fp = Fingerprint { algorithm: alg.to_string(), kernel: kernel.to_string(), y, seed: None };
    adversary_with(p.as_mut(), fp, c, y, n, d)
}
