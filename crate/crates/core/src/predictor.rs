//! Common interface of the online predictors and the algorithm selection
//! grammar.

use std::fmt;

use crate::aggregating::{GridMixture, KaarState};
use crate::defensive::{PredictorState, Variant};
use crate::error::{Error, Result};
use crate::kernel::Kernel;

/// A Predictor in the online regression protocol: for each round it sees
/// `x_n`, announces `μ_n ∈ [−Y, Y]`, then learns `y_n`.
pub trait OnlinePredictor: Send + Sync {
    fn y_bound(&self) -> f64;

    /// Number of completed rounds.
    fn round(&self) -> usize;

    /// The prediction the current state would make at `x`, without
    /// committing to it.
    fn prediction_at(&self, x: &[f64]) -> Result<f64>;

    /// Announces the prediction for this round.
    fn predict(&mut self, x: &[f64]) -> Result<f64>;

    /// Reveals the label for the pending round.
    fn observe(&mut self, y: f64) -> Result<()>;

    fn box_clone(&self) -> Box<dyn OnlinePredictor>;
}

impl Clone for Box<dyn OnlinePredictor> {
    fn clone(&self) -> Self {
        self.box_clone()
    }
}

/// Always predicts 0. Useful as the reference Predictor for the
/// lower-bound adversary.
#[derive(Debug, Clone)]
pub struct ZeroPredictor {
    y: f64,
    round: usize,
    pending: bool,
}

impl ZeroPredictor {
    pub fn new(y: f64) -> Self {
        Self { y, round: 0, pending: false }
    }
}

impl OnlinePredictor for ZeroPredictor {
    fn y_bound(&self) -> f64 {
        self.y
    }

    fn round(&self) -> usize {
        self.round
    }

    fn prediction_at(&self, _x: &[f64]) -> Result<f64> {
        Ok(0.0)
    }

    fn predict(&mut self, _x: &[f64]) -> Result<f64> {
        self.pending = true;
        Ok(0.0)
    }

    fn observe(&mut self, y: f64) -> Result<()> {
        if !self.pending {
            return Err(Error::NoPendingPrediction);
        }
        check_label(y, self.y, self.round + 1)?;
        self.pending = false;
        self.round += 1;
        Ok(())
    }

    fn box_clone(&self) -> Box<dyn OnlinePredictor> {
        Box::new(self.clone())
    }
}

pub(crate) fn check_label(y: f64, bound: f64, round: usize) -> Result<()> {
    if !(y.abs() <= bound) {
        return Err(Error::ProtocolViolation { round, y_abs: y.abs(), y_bound: bound });
    }
    Ok(())
}

/// Default 2^k grid exponents for `aa-grid`.
pub const DEFAULT_GRID: (i32, i32) = (-8, 8);

/// Algorithm selection: `aln`, `k29`, `aln-plain`, `zero`, `kaar:<a>`,
/// `aa-grid[:kmin:kmax]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    /// ALN with the merged forecast kernel (thm1 bound).
    Aln,
    /// K29 with the merged forecast kernel (thm2 bound).
    K29,
    /// ALN whose parameter is the plain object kernel.
    AlnPlain,
    Zero,
    Kaar { a: f64 },
    /// Aggregating-Algorithm mixture of KAAR experts at `a = 2^k·Y²`.
    AaGrid { kmin: i32, kmax: i32 },
}

impl Algorithm {
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = || Error::AlgorithmSpec(spec.to_string());
        let s = spec.trim();
        match s {
            "aln" => return Ok(Self::Aln),
            "k29" => return Ok(Self::K29),
            "aln-plain" => return Ok(Self::AlnPlain),
            "zero" => return Ok(Self::Zero),
            "aa-grid" => return Ok(Self::AaGrid { kmin: DEFAULT_GRID.0, kmax: DEFAULT_GRID.1 }),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("kaar:") {
            let a: f64 = rest.parse().map_err(|_| bad())?;
            if !(a > 0.0) || !a.is_finite() {
                return Err(bad());
            }
            return Ok(Self::Kaar { a });
        }
        if let Some(rest) = s.strip_prefix("aa-grid:") {
            let (lo, hi) = rest.split_once(':').ok_or_else(bad)?;
            let kmin: i32 = lo.parse().map_err(|_| bad())?;
            let kmax: i32 = hi.parse().map_err(|_| bad())?;
            if kmin > kmax {
                return Err(bad());
            }
            return Ok(Self::AaGrid { kmin, kmax });
        }
        Err(bad())
    }

    /// Builds a fresh predictor for kernel `kernel` and label bound `y`.
    pub fn build(&self, kernel: &Kernel, y: f64) -> Result<Box<dyn OnlinePredictor>> {
        Ok(match *self {
            Self::Aln => Box::new(PredictorState::new(Variant::Aln, kernel.clone(), y, None, None, None)?),
            Self::K29 => Box::new(PredictorState::new(Variant::K29, kernel.clone(), y, None, None, None)?),
            Self::AlnPlain => Box::new(PredictorState::new_plain(Variant::Aln, kernel.clone(), y, None)?),
            Self::Zero => {
                if !(y > 0.0) {
                    return Err(Error::InvalidParameter(format!("Y must be positive, got {y}")));
                }
                Box::new(ZeroPredictor::new(y))
            }
            Self::Kaar { a } => Box::new(KaarState::new(kernel.clone(), a, y)?),
            Self::AaGrid { kmin, kmax } => Box::new(GridMixture::with_exponents(kernel.clone(), y, kmin, kmax)?),
        })
    }

    /// The `a_k` values of an `aa-grid` algorithm.
    pub fn grid(&self, y: f64) -> Option<Vec<f64>> {
        match *self {
            Self::AaGrid { kmin, kmax } => Some((kmin..=kmax).map(|k| 2f64.powi(k) * y * y).collect()),
            _ => None,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Aln => write!(f, "aln"),
            Self::K29 => write!(f, "k29"),
            Self::AlnPlain => write!(f, "aln-plain"),
            Self::Zero => write!(f, "zero"),
            Self::Kaar { a } => write!(f, "kaar:{a}"),
            Self::AaGrid { kmin, kmax } if (*kmin, *kmax) == DEFAULT_GRID => write!(f, "aa-grid"),
            Self::AaGrid { kmin, kmax } => write!(f, "aa-grid:{kmin}:{kmax}"),
        }
    }
}
