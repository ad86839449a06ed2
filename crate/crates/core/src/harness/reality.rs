use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::transcript::{Fingerprint, GameTranscript};
use crate::comparators::Comparator;
use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::predictor::{Algorithm, OnlinePredictor};

/// Fixed stream ids split off a master seed. New generators take new ids,
/// so existing streams never shift.
pub mod streams {
    pub const OBJECTS: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const FLIPS: u64 = 3;
    pub const BATTERY: u64 = 4;
    pub const SUITE: u64 = 5;
    pub const TEST_SAMPLE: u64 = 6;
}

/// ChaCha8 generator for `stream` under master `seed`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Reality's side of the protocol. It announces an object, sees the
/// prediction, then announces the label.
pub trait Reality {
    /// Object for round `n` (1-based), or `None` when the game ends.
    fn object(&mut self, n: usize) -> Option<Vec<f64>>;

    fn label(&mut self, n: usize, x: &[f64], mu: f64) -> f64;
}

/// Labels that oppose the prediction: `−Y·sign(μ)`, with `+Y` at `μ = 0`.
pub fn opposing_label(mu: f64, y: f64) -> f64 {
    if mu > 0.0 {
        -y
    } else {
        y
    }
}

/// Replays a fixed example sequence.
#[derive(Debug, Clone)]
pub struct Sequence {
    data: Vec<(Vec<f64>, f64)>,
}

impl Sequence {
    pub fn new(data: Vec<(Vec<f64>, f64)>) -> Self {
        Self { data }
    }
}

impl Reality for Sequence {
    fn object(&mut self, n: usize) -> Option<Vec<f64>> {
        self.data.get(n - 1).map(|(x, _)| x.clone())
    }

    fn label(&mut self, n: usize, _x: &[f64], _mu: f64) -> f64 {
        self.data[n - 1].1
    }
}

/// Replays a sequence but, with probability `p` per round, answers with
/// the opposing label instead. `p = 1` is a fully adversarial stream.
#[derive(Debug, Clone)]
pub struct LabelFlips {
    data: Vec<(Vec<f64>, f64)>,
    p: f64,
    y: f64,
    rng: ChaCha8Rng,
}

impl LabelFlips {
    pub fn new(data: Vec<(Vec<f64>, f64)>, p: f64, y: f64, seed: u64) -> Self {
        Self { data, p, y, rng: rng_for(seed, streams::FLIPS) }
    }
}

impl Reality for LabelFlips {
    fn object(&mut self, n: usize) -> Option<Vec<f64>> {
        self.data.get(n - 1).map(|(x, _)| x.clone())
    }

    fn label(&mut self, n: usize, _x: &[f64], mu: f64) -> f64 {
        if self.rng.random::<f64>() < self.p {
            opposing_label(mu, self.y)
        } else {
            self.data[n - 1].1
        }
    }
}

/// Plays `predictor` against `reality` until Reality stops.
pub fn play(predictor: &mut dyn OnlinePredictor, reality: &mut dyn Reality, fingerprint: Fingerprint) -> Result<GameTranscript> {
    let mut t = GameTranscript::new(fingerprint);
    let mut n = 1;
    while let Some(x) = reality.object(n) {
        let mu = predictor.predict(&x)?;
        let y = reality.label(n, &x, mu);
        predictor.observe(y)?;
        t.push(x, mu, y);
        n += 1;
    }
    Ok(t)
}

/// Builds the predictor from its selection strings and plays a full game.
/// A label with `|y| > Y` aborts with the offending round.
pub fn run_game(algorithm: &str, kernel: &str, y: f64, reality: &mut dyn Reality, seed: Option<u64>) -> Result<GameTranscript> {
    let alg = Algorithm::parse(algorithm)?;
    let k = Kernel::parse(kernel)?;
    let mut p = alg.build(&k, y)?;
    let fp = Fingerprint { algorithm: alg.to_string(), kernel: k.to_string(), y, seed };
    play(p.as_mut(), reality, fp)
}

/// Reads examples from CSV with header `x1,...,xm,y`.
pub fn ingest_csv(path: &Path) -> Result<Vec<(Vec<f64>, f64)>> {
    ingest_reader(std::fs::File::open(path)?)
}

pub fn ingest_reader<R: Read>(r: R) -> Result<Vec<(Vec<f64>, f64)>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(r);
    let cols: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let m = cols.len().saturating_sub(1);
    let valid = m >= 1 && cols[m] == "y" && (1..=m).all(|j| cols[j - 1] == format!("x{j}"));
    if !valid {
        return Err(Error::Parse { line: 1, message: "expected header x1,...,xm,y".into() });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != m + 1 {
            return Err(Error::Parse { line, message: format!("expected {} fields, found {}", m + 1, rec.len()) });
        }
        let nums = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse { line, message: e.to_string() })?;
        if nums.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse { line, message: "non-finite value".into() });
        }
        out.push((nums[..m].to_vec(), nums[m]));
    }
    Ok(out)
}

/// Synthetic i.i.d. generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Synth {
    /// `x` uniform on `[0,1]^m`, `y = clip(target(x) + N(0, (0.2Y)²))`.
    UniformSmooth,
    /// `x` uniform on `[0,1]^m`, `y = ±Y` by the sign of `target(x)`,
    /// flipped with probability 0.1.
    SignNoise,
}

impl Synth {
    pub fn parse(spec: &str) -> Result<Self> {
        match spec.trim() {
            "uniform-smooth" => Ok(Self::UniformSmooth),
            "sign-noise" => Ok(Self::SignNoise),
            other => Err(Error::InvalidParameter(format!("unknown synthetic generator `{other}`"))),
        }
    }
}

/// Object dimension used when generating data for `kernel`.
pub fn object_dimension(kernel: &Kernel) -> usize {
    kernel.dimension().unwrap_or(1)
}

fn grid_max_abs(d: &Comparator, m: usize) -> Result<f64> {
    let per_axis = ((1001f64).powf(1.0 / m as f64).floor() as usize).max(2);
    let total = per_axis.pow(m as u32);
    let mut max = 0.0_f64;
    let mut x = vec![0.0; m];
    for idx in 0..total {
        let mut r = idx;
        for v in x.iter_mut() {
            *v = (r % per_axis) as f64 / (per_axis - 1) as f64;
            r /= per_axis;
        }
        max = max.max(d.eval(&x)?.abs());
    }
    Ok(max)
}

/// The fixed regression function of the synthetic generators: three
/// kernel sections, scaled so that `max |target| = Y/2` on a grid of
/// `[0,1]^m`.
pub fn smooth_target(kernel: &Kernel, y: f64) -> Result<Comparator> {
    let m = object_dimension(kernel);
    let centers: Vec<Vec<f64>> = [0.2, 0.55, 0.85]
        .iter()
        .enumerate()
        .map(|(i, &z)| (0..m).map(|j| if j % 2 == 0 { z } else { 1.0 - z + 0.05 * i as f64 }).collect())
        .collect();
    let d = Comparator::expansion(kernel.clone(), centers, vec![1.0, -1.6, 0.9])?;
    let max = grid_max_abs(&d, m)?;
    if max > 0.0 {
        Ok(d.scaled(0.5 * y / max))
    } else {
        Ok(d)
    }
}

/// `n` i.i.d. examples, deterministic in `seed`.
pub fn synth_iid(spec: &str, kernel: &Kernel, y: f64, n: usize, seed: u64) -> Result<Vec<(Vec<f64>, f64)>> {
    let gen = Synth::parse(spec)?;
    if !(y > 0.0) || !y.is_finite() {
        return Err(Error::InvalidParameter(format!("Y must be positive, got {y}")));
    }
    let target = smooth_target(kernel, y)?;
    let m = object_dimension(kernel);
    let mut xr = rng_for(seed, streams::OBJECTS);
    let mut nr = rng_for(seed, streams::NOISE);
    let noise = Normal::new(0.0, 0.2 * y).expect("positive sd");
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..m).map(|_| xr.random::<f64>()).collect();
        let f = target.eval(&x)?;
        let label = match gen {
            Synth::UniformSmooth => (f + noise.sample(&mut nr)).clamp(-y, y),
            Synth::SignNoise => {
                let s = if f >= 0.0 { y } else { -y };
                if nr.random::<f64>() < 0.1 {
                    -s
                } else {
                    s
                }
            }
        };
        out.push((x, label));
    }
    Ok(out)
}
