use rand::Rng;
use rayon::prelude::*;

use super::audit::{audit, standard_battery, RegretReport};
use super::reality::{rng_for, run_game, smooth_target, streams, synth_iid, LabelFlips};
use super::transcript::GameTranscript;
use crate::bounds::risk_bound_cor2;
use crate::comparators::averaged_rule;
use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::predictor::Algorithm;

/// Fresh examples per Monte-Carlo risk estimate.
pub const RISK_SAMPLES: usize = 10_000;

/// Result of the averaged-rule risk experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskSummary {
    pub trials: usize,
    pub failures: usize,
    pub failure_fraction: f64,
    /// Excess-risk allowance of the bound.
    pub bound: f64,
    /// Norm of the reference rule.
    pub reference_norm: f64,
    pub mean_rule_risk: f64,
    pub mean_reference_risk: f64,
}

/// Per trial: trains the averaged rule on `n` fresh examples, estimates
/// its risk and that of the generator's regression function by Monte
/// Carlo, and records whether the rule's excess risk exceeds the bound.
#[allow(clippy::too_many_arguments)]
pub fn cor2_experiment(
    algorithm: &str,
    kernel: &str,
    y: f64,
    spec: &str,
    n: usize,
    trials: usize,
    delta: f64,
    seed: u64,
) -> Result<RiskSummary> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be ≥ 1".into()));
    }
    let alg = Algorithm::parse(algorithm)?;
    let k = Kernel::parse(kernel)?;
    let reference = smooth_target(&k, y)?;
    let bound = risk_bound_cor2(y, k.bound()?, reference.norm(), n, delta)?;
    let mut master = rng_for(seed, streams::SUITE);
    let seeds: Vec<(u64, u64)> = (0..trials).map(|_| (master.random(), master.random())).collect();
    let risks = seeds
        .par_iter()
        .map(|&(train_seed, test_seed)| -> Result<(f64, f64)> {
            let train = synth_iid(spec, &k, y, n, train_seed)?;
            let (xs, ys): (Vec<_>, Vec<_>) = train.into_iter().unzip();
            let rule = averaged_rule(alg, k.clone(), y, &xs, &ys)?;
            let test = synth_iid(spec, &k, y, RISK_SAMPLES, test_seed)?;
            let (mut rule_loss, mut ref_loss) = (0.0, 0.0);
            for (x, label) in &test {
                rule_loss += (label - rule.eval(x)?).powi(2);
                ref_loss += (label - reference.eval(x)?).powi(2);
            }
            Ok((rule_loss / RISK_SAMPLES as f64, ref_loss / RISK_SAMPLES as f64))
        })
        .collect::<Result<Vec<_>>>()?;
    let failures = risks.iter().filter(|(r, d)| r - d > bound).count();
    let tf = trials as f64;
    Ok(RiskSummary {
        trials,
        failures,
        failure_fraction: failures as f64 / tf,
        bound,
        reference_norm: reference.norm(),
        mean_rule_risk: risks.iter().map(|r| r.0).sum::<f64>() / tf,
        mean_reference_risk: risks.iter().map(|r| r.1).sum::<f64>() / tf,
    })
}

/// Kernels the randomized suite draws from.
pub fn kernel_menu<R: Rng>(rng: &mut R) -> Kernel {
    match rng.random_range(0..8) {
        0 => Kernel::sobolev01(),
        1 => Kernel::fermi_sobolev(),
        2 => Kernel::sobolev_r(),
        3 => Kernel::triangular(rng.random_range(0.5..2.0)).unwrap(),
        4 => Kernel::parse("tensor:sobolev01:2").unwrap(),
        5 => Kernel::parse("tensor:fermi-sobolev:2").unwrap(),
        6 => Kernel::parse("tensor:sobolev-r:3").unwrap(),
        _ => Kernel::constant(rng.random_range(0.25..4.0)).unwrap(),
    }
}

/// Configuration of one randomized game.
#[derive(Debug, Clone)]
pub struct SuiteGame {
    pub kernel: Kernel,
    pub y: f64,
    pub rounds: usize,
    pub spec: &'static str,
    /// Probability of an opposing label per round.
    pub flip: f64,
    pub seed: u64,
}

/// `count` random game configurations with `1 ≤ N ≤ max_rounds`. Label
/// streams range from i.i.d. to fully adversarial.
pub fn random_suite(count: usize, max_rounds: usize, seed: u64) -> Vec<SuiteGame> {
    let mut rng = rng_for(seed, streams::SUITE);
    (0..count)
        .map(|_| SuiteGame {
            kernel: kernel_menu(&mut rng),
            y: rng.random_range(0.5..3.0),
            rounds: rng.random_range(1..=max_rounds),
            spec: if rng.random_bool(0.5) { "uniform-smooth" } else { "sign-noise" },
            flip: [0.0, 0.0, 0.25, 1.0][rng.random_range(0..4)],
            seed: rng.random(),
        })
        .collect()
}

impl SuiteGame {
    pub fn play(&self, algorithm: &str) -> Result<GameTranscript> {
        let data = synth_iid(self.spec, &self.kernel, self.y, self.rounds, self.seed)?;
        let mut reality = LabelFlips::new(data, self.flip, self.y, self.seed);
        run_game(algorithm, &self.kernel.to_string(), self.y, &mut reality, Some(self.seed))
    }

    /// Plays the game and audits it against the standard battery.
    pub fn play_and_audit(&self, algorithm: &str) -> Result<(GameTranscript, RegretReport)> {
        let t = self.play(algorithm)?;
        let battery = standard_battery(&self.kernel, &t, self.seed)?;
        let report = audit(&t, &self.kernel, self.y, &battery)?;
        Ok((t, report))
    }
}

/// Audits every game of a suite in parallel.
pub fn run_suite(games: &[SuiteGame], algorithm: &str) -> Result<Vec<RegretReport>> {
    games.par_iter().map(|g| g.play_and_audit(algorithm).map(|(_, r)| r)).collect()
}
