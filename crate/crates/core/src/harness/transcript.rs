use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// One played round.
#[derive(Debug, Clone, PartialEq)]
pub struct Round {
    pub n: usize,
    pub x: Vec<f64>,
    pub mu: f64,
    pub y: f64,
    pub loss: f64,
    pub cumloss: f64,
}

/// Configuration a transcript was produced under.
#[derive(Debug, Clone, PartialEq)]
pub struct Fingerprint {
    pub algorithm: String,
    pub kernel: String,
    pub y: f64,
    pub seed: Option<u64>,
}

/// Ordered record of a game with running losses.
#[derive(Debug, Clone, PartialEq)]
pub struct GameTranscript {
    pub fingerprint: Fingerprint,
    rounds: Vec<Round>,
}

impl GameTranscript {
    pub fn new(fingerprint: Fingerprint) -> Self {
        Self { fingerprint, rounds: Vec::new() }
    }

    /// Appends round `len() + 1`.
    pub fn push(&mut self, x: Vec<f64>, mu: f64, y: f64) {
        let loss = (y - mu) * (y - mu);
        let cumloss = self.total_loss() + loss;
        self.rounds.push(Round { n: self.rounds.len() + 1, x, mu, y, loss, cumloss });
    }

    pub fn rounds(&self) -> &[Round] {
        &self.rounds
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn total_loss(&self) -> f64 {
        self.rounds.last().map_or(0.0, |r| r.cumloss)
    }

    pub fn xs(&self) -> Vec<Vec<f64>> {
        self.rounds.iter().map(|r| r.x.clone()).collect()
    }

    pub fn mus(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.mu).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.y).collect()
    }

    pub fn dimension(&self) -> Option<usize> {
        self.rounds.first().map(|r| r.x.len())
    }

    /// `# key=value` fingerprint lines, then `n,x1..xm,mu,y,loss,cumloss`.
    pub fn to_csv(&self) -> String {
        let fp = &self.fingerprint;
        let mut out = String::new();
        writeln!(out, "# algorithm={}", fp.algorithm).unwrap();
        writeln!(out, "# kernel={}", fp.kernel).unwrap();
        writeln!(out, "# Y={}", fp.y).unwrap();
        if let Some(seed) = fp.seed {
            writeln!(out, "# seed={seed}").unwrap();
        }
        let m = self.dimension().unwrap_or(1);
        out.push('n');
        for j in 1..=m {
            write!(out, ",x{j}").unwrap();
        }
        out.push_str(",mu,y,loss,cumloss\n");
        for r in &self.rounds {
            write!(out, "{}", r.n).unwrap();
            for v in &r.x {
                write!(out, ",{v}").unwrap();
            }
            writeln!(out, ",{},{},{},{}", r.mu, r.y, r.loss, r.cumloss).unwrap();
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read_csv<R: Read>(mut r: R) -> Result<Self> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        Self::from_csv(&text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }

    /// Parses [`GameTranscript::to_csv`] output. Stored losses must match
    /// the recomputed `(y − μ)²` and running sums exactly.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut fp = Fingerprint { algorithm: String::new(), kernel: String::new(), y: f64::NAN, seed: None };
        let mut comment_lines = 0;
        for (i, line) in text.lines().enumerate() {
            let Some(rest) = line.strip_prefix('#') else { break };
            comment_lines += 1;
            let Some((k, v)) = rest.split_once('=') else { continue };
            let v = v.trim();
            let bad = |m: &str| Error::Parse { line: i + 1, message: m.to_string() };
            match k.trim() {
                "algorithm" => fp.algorithm = v.to_string(),
                "kernel" => fp.kernel = v.to_string(),
                "Y" => fp.y = v.parse().map_err(|_| bad("bad Y"))?,
                "seed" => fp.seed = Some(v.parse().map_err(|_| bad("bad seed"))?),
                _ => {}
            }
        }
        let body: String = text.lines().skip(comment_lines).map(|l| format!("{l}\n")).collect();
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
        let headers = rdr.headers()?.clone();
        let cols: Vec<&str> = headers.iter().map(str::trim).collect();
        let header_line = comment_lines + 1;
        let m = cols.len().checked_sub(5).filter(|&m| m >= 1).ok_or(Error::Parse {
            line: header_line,
            message: "expected header n,x1..xm,mu,y,loss,cumloss".into(),
        })?;
        let expected: Vec<String> = std::iter::once("n".to_string())
            .chain((1..=m).map(|j| format!("x{j}")))
            .chain(["mu", "y", "loss", "cumloss"].map(String::from))
            .collect();
        if cols != expected {
            return Err(Error::Parse { line: header_line, message: format!("expected header {}", expected.join(",")) });
        }
        let mut t = Self::new(fp);
        for rec in rdr.records() {
            let rec = rec?;
            let line = comment_lines + rec.position().map_or(0, |p| p.line() as usize);
            let nums = rec
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse { line, message: e.to_string() })?;
            let x = nums[1..=m].to_vec();
            let (mu, y) = (nums[m + 1], nums[m + 2]);
            t.push(x, mu, y);
            let r = t.rounds.last().unwrap();
            if nums[0] != r.n as f64 || nums[m + 3] != r.loss || nums[m + 4] != r.cumloss {
                return Err(Error::Parse { line, message: "round index or losses inconsistent with (mu, y)".into() });
            }
        }
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> GameTranscript {
        let mut t = GameTranscript::new(Fingerprint {
            algorithm: "aln".into(),
            kernel: "tensor:sobolev01:2".into(),
            y: 1.5,
            seed: Some(7),
        });
        t.push(vec![0.1, 0.2], 0.0, 1.5);
        t.push(vec![0.3, 0.9], 0.1234567890123, -0.7);
        t.push(vec![1.0, 0.0], -1.5, 1e-17);
        t
    }

    #[test]
    fn running_losses_telescope() {
        let t = sample();
        let mut cum = 0.0;
        for r in t.rounds() {
            assert_eq!(r.loss, (r.y - r.mu).powi(2));
            cum += r.loss;
            assert_eq!(r.cumloss, cum);
        }
        assert_eq!(t.total_loss(), cum);
        let empty = GameTranscript::new(sample().fingerprint);
        assert_eq!(empty.total_loss(), 0.0);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let t = sample();
        let text = t.to_csv();
        assert!(text.contains("n,x1,x2,mu,y,loss,cumloss\n"));
        assert_eq!(GameTranscript::from_csv(&text).unwrap(), t);
        let empty = GameTranscript::new(t.fingerprint.clone());
        assert_eq!(GameTranscript::from_csv(&empty.to_csv()).unwrap(), empty);
    }

    #[test]
    fn rejects_tampered_losses() {
        let text = sample().to_csv().replace(",2.25,2.25", ",2.0,2.0");
        assert!(matches!(GameTranscript::from_csv(&text), Err(Error::Parse { line: 6, .. })));
        let text = sample().to_csv().replace("n,x1,x2", "n,a,b");
        assert!(GameTranscript::from_csv(&text).is_err());
    }
}
