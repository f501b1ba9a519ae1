use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tractoracle::pipeline::{self, Config, Session};
use tractoracle::{Error, Result};

#[derive(Parser)]
#[command(
    name = "tractoracle",
    version,
    about = "Oracle-guided RL tractography on synthetic phantoms"
)]
struct Cli {
    /// Cap on worker threads for stages that parallelize.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config; every key is optional.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Build a phantom from a preset or inline spec.
    PhantomGen {
        #[command(flatten)]
        common: Common,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Synthesize a labelled streamline set for oracle training.
    OracleData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        phantom: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Defaults to `<out>.labels`.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Fit the streamline oracle on a labelled set.
    OracleTrain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Defaults to `<data>.labels`.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// One score per streamline, six decimals, to `--out` or stdout.
    OracleScore {
        #[arg(long)]
        oracle: PathBuf,
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Train the tracking agent with soft actor-critic.
    AgentTrain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        phantom: PathBuf,
        /// Required when the env config uses the oracle.
        #[arg(long)]
        oracle: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Track with a trained agent, or with the peak-following baseline.
    Track {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        phantom: PathBuf,
        #[arg(long, required_unless_present = "baseline")]
        agent: Option<PathBuf>,
        #[arg(long)]
        oracle: Option<PathBuf>,
        #[arg(long, conflicts_with = "agent")]
        baseline: bool,
        #[arg(long, short)]
        out: PathBuf,
        /// Also export legacy VTK polydata.
        #[arg(long)]
        vtk: Option<PathBuf>,
    },
    /// Tractometer-style report; text to stdout, JSON to `--out`.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        phantom: PathBuf,
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Every stage on one phantom, outputs in `--out-dir`.
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn load(common: &Common) -> Result<Config> {
    let mut cfg = match &common.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = common.seed {
        cfg.run.seed = s;
    }
    Ok(cfg)
}

fn with_ext(p: &Path, ext: &str) -> PathBuf {
    let mut s = p.as_os_str().to_os_string();
    s.push(ext);
    PathBuf::from(s)
}

fn run(cli: Cli) -> Result<()> {
    let session = |common: &Common, name: &str| -> Result<Session> {
        Ok(Session::new(load(common)?, name).with_workers(cli.workers))
    };
    match &cli.command {
        Command::PhantomGen { common, out } => {
            pipeline::phantom_gen(&session(common, "phantom-gen")?, out)?;
        }
        Command::OracleData {
            common,
            phantom,
            out,
            labels,
        } => {
            let labels = labels.clone().unwrap_or_else(|| with_ext(out, ".labels"));
            pipeline::oracle_data(&mut session(common, "oracle-data")?, phantom, out, &labels)?;
        }
        Command::OracleTrain {
            common,
            data,
            labels,
            out,
        } => {
            let labels = labels.clone().unwrap_or_else(|| with_ext(data, ".labels"));
            let t =
                pipeline::oracle_train(&mut session(common, "oracle-train")?, data, &labels, out)?;
            if let Some(e) = t.trace.last() {
                println!(
                    "validation accuracy {:.4}, f1 {:.4}",
                    e.validation.accuracy, e.validation.f1
                );
            }
        }
        Command::OracleScore { oracle, input, out } => {
            let mut s = Session::new(Config::default(), "oracle-score");
            let text = pipeline::oracle_score(&mut s, oracle, input, out.as_deref())?;
            if out.is_none() {
                print!("{text}");
            }
        }
        Command::AgentTrain {
            common,
            phantom,
            oracle,
            out,
        } => {
            pipeline::agent_train(
                &mut session(common, "agent-train")?,
                phantom,
                oracle.as_deref(),
                out,
            )?;
        }
        Command::Track {
            common,
            phantom,
            agent,
            oracle,
            out,
            vtk,
            ..
        } => {
            let r = pipeline::track_cmd(
                &mut session(common, "track")?,
                phantom,
                agent.as_deref(),
                oracle.as_deref(),
                out,
                vtk.as_deref(),
            )?;
            println!("{} streamlines", r.tractogram.len());
        }
        Command::Evaluate {
            common,
            phantom,
            input,
            out,
        } => {
            let rep = pipeline::evaluate_cmd(
                &mut session(common, "evaluate")?,
                phantom,
                input,
                out.as_deref(),
            )?;
            print!("{}", rep.to_text());
        }
        Command::Pipeline { common, out_dir } => {
            let rep = pipeline::run_pipeline(&load(common)?, cli.workers, out_dir)?;
            print!("{}", rep.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            if let Error::UnknownKeys(_) = e {
                eprintln!("see `tractoracle --help` and the bundled configs for valid keys");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
