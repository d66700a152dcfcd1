use std::io;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use inhibitory_sac::bridge::{self, RemoteEnv, StreamTransport, TcpTransport, DEFAULT_PORT};
use inhibitory_sac::envs::{EnvKind, Environment};
use inhibitory_sac::harness::{
    evaluate_traced, export_plot_files, run_training, run_training_with, success_cause, sweep, write_plot_csv, Algo,
    SweepAxis, TrainConfig, TrainedAgent,
};
use inhibitory_sac::{Error, Result};

#[derive(Parser)]
#[command(name = "saci", version, about = "Soft actor-critic with inhibitory networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent and write metrics and checkpoints.
    Train {
        #[command(flatten)]
        common: Common,
        /// Override the episode budget.
        #[arg(long)]
        episodes: Option<usize>,
        /// Train against a bridge server at this address instead of a built-in environment.
        #[arg(long)]
        remote: Option<String>,
    },
    /// Evaluate a checkpoint with the deterministic policy.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        /// Write a per-step trace of every episode to this CSV file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run a config over an axis and several seeds.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// bomb_freq, stop_prob or ablation.
        #[arg(long)]
        axis: String,
        /// Number of seeds, counted up from --seed (or 0).
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Mean and std band of avg100 across metrics files.
    ExportPlot {
        files: Vec<PathBuf>,
        #[arg(long, default_value_t = 1)]
        window: usize,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve a built-in environment over the bridge protocol.
    ServeEnv {
        #[command(flatten)]
        common: Common,
        /// Listen address; the protocol runs on stdin/stdout when absent.
        #[arg(long)]
        tcp: Option<String>,
        #[arg(long)]
        max_sessions: Option<usize>,
    },
}

#[derive(Args)]
struct Common {
    /// Config file or preset name.
    #[arg(long)]
    config: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint to load (initial weights for train, the agent for eval).
    #[arg(long)]
    load: Option<PathBuf>,
    #[arg(long)]
    algo: Option<Algo>,
    #[arg(long)]
    env: Option<EnvKind>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<TrainConfig> {
        let mut c = match &self.config {
            None => TrainConfig::default(),
            Some(s) if Path::new(s).exists() => TrainConfig::load(s)?,
            Some(s) => TrainConfig::preset(s)?,
        };
        if let Some(seed) = self.seed {
            c.run.seed = seed;
        }
        if let Some(a) = self.algo {
            c.run.algo = a;
        }
        if let Some(e) = self.env {
            c.env.kind = e;
        }
        if let Some(l) = &self.load {
            c.saci.load = Some(l.clone());
        }
        c.validate()?;
        Ok(c)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            common,
            episodes,
            remote,
        } => {
            let mut c = common.config()?;
            if let Some(n) = episodes {
                c.run.episodes = n;
            }
            let out = common.out.as_deref();
            let o = match remote {
                Some(addr) => run_training_with(&c, RemoteEnv::connect(TcpTransport::connect(addr)?)?, out)?,
                None => run_training(&c, out)?,
            };
            if let Some(last) = o.records.last() {
                println!(
                    "episodes {} steps {} final avg100 {:.3} successes {}",
                    o.records.len(),
                    o.total_steps,
                    last.avg100,
                    o.records.iter().filter(|r| r.success).count()
                );
            }
            Ok(())
        }
        Command::Eval {
            common,
            episodes,
            trace,
        } => {
            let path = common
                .load
                .as_ref()
                .ok_or_else(|| Error::Usage("eval needs --load <checkpoint>".into()))?;
            let (agent, mut c) = TrainedAgent::load(path)?;
            if common.config.is_some() {
                c.env = common.config()?.env;
            }
            if let Some(e) = common.env {
                c.env.kind = e;
            }
            let mut env = c.env.build()?;
            let seed = common.seed.unwrap_or(c.run.seed.wrapping_add(1));
            let trace = match trace {
                Some(p) => Some(io::BufWriter::new(std::fs::File::create(p)?)),
                None => None,
            };
            let s = evaluate_traced(&agent, &mut env, success_cause(c.env.kind), episodes, seed, trace)?;
            let text = serde_json::to_string_pretty(&s).map_err(|e| Error::Usage(e.to_string()))?;
            match &common.out {
                Some(p) => std::fs::write(p, text)?,
                None => println!("{text}"),
            }
            Ok(())
        }
        Command::Sweep {
            common,
            axis,
            seeds,
            workers,
        } => {
            let c = common.config()?;
            let first = common.seed.unwrap_or(0);
            let seeds: Vec<u64> = (first..first + seeds).collect();
            let r = sweep(&c, &SweepAxis::parse(&axis)?, &seeds, workers, common.out.as_deref())?;
            for s in &r.summary {
                println!(
                    "{}: final avg100 {:.3} ± {:.3} over {} runs",
                    s.point, s.mean_final_avg100, s.std_final_avg100, s.runs
                );
            }
            Ok(())
        }
        Command::ExportPlot { files, window, out } => {
            let rows = export_plot_files(&files, window)?;
            match out {
                Some(p) => write_plot_csv(std::fs::File::create(p)?, &rows),
                None => write_plot_csv(io::stdout().lock(), &rows),
            }
        }
        Command::ServeEnv {
            common,
            tcp,
            max_sessions,
        } => {
            let c = common.config()?;
            match tcp {
                Some(addr) => {
                    let addr = if addr.contains(':') { addr } else { format!("{addr}:{DEFAULT_PORT}") };
                    let listener = TcpListener::bind(&addr)?;
                    eprintln!("serving {} on {}", c.env.kind.as_str(), listener.local_addr()?);
                    bridge::serve_tcp(&listener, || c.env.build(), max_sessions)
                }
                None => {
                    let mut env: Box<dyn Environment + Send> = c.env.build()?;
                    let mut t = StreamTransport::new(io::stdin().lock(), io::stdout().lock());
                    bridge::serve(&mut env, &mut t)
                }
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
