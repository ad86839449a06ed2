use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use rkhs_regret::bounds::{
    figure1_grid, lower_bound_thm4, regret_thm1, regret_thm2, regret_thm3_asymptotic, regret_thm3_exact, risk_bound_cor2,
    DEFAULT_DELTA,
};
use rkhs_regret::harness::{
    adversary_thm4, audit, cor2_experiment, ingest_csv, run_game, standard_battery, synth_iid, BatteryEntry, GameTranscript,
    LabelFlips, Sequence,
};
use rkhs_regret::{Comparator, Kernel};

/// Competitive online regression in RKHS: play games, audit regret, evaluate bounds.
#[derive(Debug, Parser)]
#[command(name = "kregret", version, args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Play one game and write its transcript.
    Run(RunArgs),
    /// Audit a transcript against the comparator battery.
    Audit(AuditArgs),
    /// Play the spaced adversary that forces the regret lower bound.
    Adversary(AdversaryArgs),
    /// Evaluate a bound, or emit the Kummer f(N, d) grid.
    Bound(BoundArgs),
    /// Averaged-rule risk experiment on synthetic data.
    Cor2(Cor2Args),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Line-oriented `key = value` file; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    algorithm: String,
    #[arg(long)]
    kernel: String,
    #[arg(long = "Y")]
    y: f64,
    /// CSV with header x1,...,xm,y.
    #[arg(long, conflicts_with = "synth")]
    input: Option<PathBuf>,
    /// Synthetic generator: uniform-smooth or sign-noise.
    #[arg(long, requires = "n")]
    synth: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Probability of answering with the label opposing the prediction.
    #[arg(long, default_value_t = 0.0)]
    flip: f64,
    /// Transcript CSV path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AuditArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    transcript: PathBuf,
    /// Defaults to the kernel recorded in the transcript.
    #[arg(long)]
    kernel: Option<String>,
    /// Defaults to the Y recorded in the transcript.
    #[arg(long = "Y")]
    y: Option<f64>,
    /// Extra comparator files, added to the standard battery.
    #[arg(long)]
    comparators: Vec<PathBuf>,
    /// Seed of the random battery expansions.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the report as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AdversaryArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    algorithm: String,
    #[arg(long)]
    c: f64,
    #[arg(long = "Y")]
    y: f64,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BoundName {
    Thm1,
    Thm2,
    Thm3Exact,
    Thm3Asymptotic,
    Thm4Lower,
    Cor2,
}

#[derive(Debug, Args)]
struct BoundArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "figure1")]
    name: Option<BoundName>,
    #[arg(long = "Y", default_value_t = 1.0)]
    y: f64,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 1.0)]
    d: f64,
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Comparator loss for thm2.
    #[arg(long, default_value_t = 0.0)]
    loss_d: f64,
    #[arg(long)]
    delta: Option<f64>,
    /// Emit f(N, d) for N = 1..100, d = 1..3 step 0.05 as CSV.
    #[arg(long, conflicts_with = "name")]
    figure1: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Cor2Args {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "aln")]
    algorithm: String,
    #[arg(long, default_value = "fermi-sobolev")]
    kernel: String,
    #[arg(long = "Y", default_value_t = 1.0)]
    y: f64,
    #[arg(long, default_value = "uniform-smooth")]
    synth: String,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Splices `--key value` pairs from a `--config` file in front of the
/// command-line flags so that later flags win.
fn expand_config(args: Vec<String>) -> Result<Vec<String>> {
    let Some(pos) = args.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(args);
    };
    let path = match args[pos].strip_prefix("--config=") {
        Some(p) => p.to_string(),
        None => args.get(pos + 1).cloned().context("--config needs a path")?,
    };
    let text = fs::read_to_string(&path).with_context(|| format!("reading config {path}"))?;
    let mut injected = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("{path}:{}: expected `key = value`", i + 1);
        };
        let (k, v) = (k.trim(), v.trim());
        match v {
            "true" => injected.push(format!("--{k}")),
            "false" => {}
            _ => {
                injected.push(format!("--{k}"));
                injected.push(v.to_string());
            }
        }
    }
    // Flags go right after the subcommand name.
    let mut out = args[..2.min(args.len())].to_vec();
    out.extend(injected);
    out.extend(args.into_iter().skip(2));
    Ok(out)
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let kernel = Kernel::parse(&args.kernel)?;
    let data = match (&args.input, &args.synth) {
        (Some(path), None) => ingest_csv(path)?,
        (None, Some(spec)) => synth_iid(spec, &kernel, args.y, args.n.unwrap_or(0), args.seed)?,
        _ => bail!("give exactly one of --input or --synth"),
    };
    let seed = args.synth.as_ref().map(|_| args.seed);
    let t = if args.flip > 0.0 {
        run_game(&args.algorithm, &args.kernel, args.y, &mut LabelFlips::new(data, args.flip, args.y, args.seed), seed)?
    } else {
        run_game(&args.algorithm, &args.kernel, args.y, &mut Sequence::new(data), seed)?
    };
    write_output(args.out.as_deref(), &t.to_csv())?;
    eprintln!("rounds {}  cumulative loss {}", t.len(), t.total_loss());
    Ok(ExitCode::SUCCESS)
}

fn audit_cmd(args: AuditArgs) -> Result<ExitCode> {
    let t = GameTranscript::load(&args.transcript)?;
    let kernel = Kernel::parse(args.kernel.as_deref().unwrap_or(&t.fingerprint.kernel))?;
    let y = args.y.unwrap_or(t.fingerprint.y);
    let mut battery = standard_battery(&kernel, &t, args.seed)?;
    for path in &args.comparators {
        let rule = Comparator::from_text(&fs::read_to_string(path)?)?;
        battery.push(BatteryEntry { id: path.display().to_string(), rule });
    }
    let report = audit(&t, &kernel, y, &battery)?;
    print!("{}", report.to_table());
    if let Some(p) = &args.csv {
        fs::write(p, report.to_csv())?;
    }
    Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn adversary_cmd(args: AdversaryArgs) -> Result<ExitCode> {
    let run = adversary_thm4(&args.algorithm, args.c, args.y, args.n, args.d)?;
    let ch = run.check;
    println!("alpha               {}", ch.alpha);
    println!("predictor loss      {}", ch.predictor_loss);
    println!("comparator loss     {} (expected {})", ch.comparator_loss, ch.expected_comparator_loss);
    println!("comparator norm     {} (d = {})", ch.norm, ch.d);
    println!("excess loss         {}", ch.excess);
    println!("lower bound         {}", ch.lower_bound);
    println!("holds               {}", ch.holds());
    if let Some(p) = &args.out {
        run.transcript.save(p)?;
    }
    Ok(if ch.holds() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn bound_cmd(args: BoundArgs) -> Result<ExitCode> {
    if args.figure1 {
        let mut s = String::from("N,d,f\n");
        for p in figure1_grid()? {
            s.push_str(&format!("{},{:.2},{}\n", p.n, p.d, p.f));
        }
        write_output(args.out.as_deref(), &s)?;
        return Ok(ExitCode::SUCCESS);
    }
    let (y, c, d, n) = (args.y, args.c, args.d, args.n);
    let v = match args.name.expect("clap enforces --name") {
        BoundName::Thm1 => regret_thm1(y, c, d, n)?,
        BoundName::Thm2 => regret_thm2(y, c, d, args.loss_d)?,
        BoundName::Thm3Exact => regret_thm3_exact(y, c, d, n)?,
        BoundName::Thm3Asymptotic => regret_thm3_asymptotic(y, c, d, n, args.delta.unwrap_or(DEFAULT_DELTA))?,
        BoundName::Thm4Lower => lower_bound_thm4(y, c, d, n)?,
        BoundName::Cor2 => risk_bound_cor2(y, c, d, n, args.delta.unwrap_or(0.1))?,
    };
    println!("{v}");
    Ok(ExitCode::SUCCESS)
}

fn cor2_cmd(args: Cor2Args) -> Result<ExitCode> {
    let s = cor2_experiment(&args.algorithm, &args.kernel, args.y, &args.synth, args.n, args.trials, args.delta, args.seed)?;
    println!("trials              {}", s.trials);
    println!("failures            {}", s.failures);
    println!("failure fraction    {}", s.failure_fraction);
    println!("delta               {}", args.delta);
    println!("excess-risk bound   {}", s.bound);
    println!("reference norm      {}", s.reference_norm);
    println!("mean rule risk      {}", s.mean_rule_risk);
    println!("mean reference risk {}", s.mean_reference_risk);
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let args = match expand_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Audit(a) => audit_cmd(a),
        Command::Adversary(a) => adversary_cmd(a),
        Command::Bound(a) => bound_cmd(a),
        Command::Cor2(a) => cor2_cmd(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
