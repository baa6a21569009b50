use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use critigen_core::eql::CurveRow;
use critigen_core::harness::{self, Algorithm, RunConfig};
use critigen_core::stats::Metric;
use critigen_core::{Error, Result};

// `println!` panics when stdout is a closed pipe (`critigen ... | head`).
macro_rules! out {
    ($($t:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($t)*);
    }};
}

/// Generate critical driving scenarios with multi-objective reinforcement learning.
#[derive(Debug, Parser)]
#[command(name = "critigen", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train an agent and write its checkpoint, learning curve and traces.
    Train {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Evaluate a frozen agent (or random spawning) and write episode records and metrics.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        /// Checkpoint written by `train`; required for eql and sorlw.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Compare two evaluation record files with Fisher's exact test and odds ratios.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// v_r1, v_r2, v_r1_r2 or v_r2_inclusive; repeatable. Defaults to all.
        #[arg(long)]
        metric: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-simulate a trace, verify it, and print a per-step summary.
    Replay { trace: PathBuf },
    /// Print the resolved configuration as TOML.
    PrintConfig {
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// eql, sorlw or rs
    #[arg(long)]
    algo: Option<String>,
    #[arg(long)]
    road: Option<u8>,
    /// Training episodes for `train`, evaluation episodes for `eval`.
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy)]
enum Phase {
    Train,
    Eval,
    Print,
}

impl RunArgs {
    fn resolve(&self, phase: Phase) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(a) = &self.algo {
            cfg.algorithm = a.parse::<Algorithm>()?;
        }
        if let Some(r) = self.road {
            cfg.road = r;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.episodes {
            match phase {
                Phase::Train => cfg.train_episodes = n,
                Phase::Eval => cfg.eval_episodes = n,
                Phase::Print => return Err(Error::Usage("--episodes is ambiguous for print-config".into())),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { run } => {
            let cfg = run.resolve(Phase::Train)?;
            let report = harness::cmd_train(&cfg, &run.out)?;
            let last = report.curve.len().saturating_sub(100);
            let tail = &report.curve[last..];
            let rate = |f: fn(&CurveRow) -> bool| tail.iter().filter(|r| f(r)).count();
            out!(
                "trained {} on road {} for {} episodes; last {} episodes: r1 {} r2 {}",
                cfg.algorithm,
                cfg.road,
                report.curve.len(),
                tail.len(),
                rate(|r| r.r1 == Some(true)),
                rate(|r| r.r2 == Some(true)),
            );
            if let Some(c) = report.checkpoint {
                out!("checkpoint: {}", c.display());
            }
            out!("artifacts in {}", run.out.display());
        }
        Command::Eval { run, checkpoint } => {
            let cfg = run.resolve(Phase::Eval)?;
            let report = harness::cmd_eval(&cfg, &run.out, checkpoint.as_deref())?;
            let s = &report.summary;
            out!(
                "{} road {}: {} episodes, V_R1 {} V_R2 {} V_R1_R2 {} (inclusive V_R2 {})",
                cfg.algorithm, cfg.road, s.episodes, s.v_r1, s.v_r2, s.v_r1_r2, s.v_r2_inclusive
            );
            out!("artifacts in {}", run.out.display());
        }
        Command::Compare { a, b, metric, out } => {
            let metrics = if metric.is_empty() {
                Metric::ALL.to_vec()
            } else {
                metric.iter().map(|m| m.parse()).collect::<Result<Vec<Metric>>>()?
            };
            let rows = harness::cmd_compare(&a, &b, &metrics, out.as_deref())?;
            out!("metric,method_a,method_b,violations_a,violations_b,p_value,odds_ratio,significance");
            for r in rows {
                out!(
                    "{},{},{},{},{},{:.6},{},{}",
                    r.metric, r.method_a, r.method_b, r.violations_a, r.violations_b, r.p_value, r.odds_ratio, r.significance
                );
            }
        }
        Command::Replay { trace } => {
            let _ = write!(std::io::stdout().lock(), "{}", harness::cmd_replay(Path::new(&trace))?);
        }
        Command::PrintConfig { run } => {
            let _ = write!(std::io::stdout().lock(), "{}", harness::print_config(&run.resolve(Phase::Print)?)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
