use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{DateTime, Utc};
use clap::{Parser, Subcommand};

use hyperfeed::batch::run_batch;
use hyperfeed::config::ServiceConfig;
use hyperfeed::sim::{self, SimScenario};
use hyperfeed::TopicLexicon;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;

#[derive(Parser)]
#[command(name = "hyperfeed", version, about = "Hyper-local news recommender")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long, env = "HYPERFEED_CONFIG")]
        config: Option<PathBuf>,
    },
    /// Build the similarity and base-score tables from a data directory.
    Batch {
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Reference time (RFC 3339); defaults to the newest timestamp in the store.
        #[arg(long, value_parser = parse_time)]
        now: Option<DateTime<Utc>>,
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Drive synthetic readers through the engine and write per-step metrics.
    Simulate {
        #[arg(long, default_value_t = 1)]
        users: usize,
        #[arg(long, default_value_t = 200)]
        items: usize,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write batch tables for the final state here.
        #[arg(long)]
        snapshot_dir: Option<PathBuf>,
    },
    /// Replay a recorded events.jsonl and report the offline hit-rate.
    Replay {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = sim::DEFAULT_REPLAY_WINDOW)]
        window: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn parse_time(s: &str) -> Result<DateTime<Utc>, String> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| e.to_string())
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn fail(code: u8, err: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(code)
}

fn load_config(path: Option<&Path>) -> Result<(ServiceConfig, TopicLexicon), ExitCode> {
    let cfg = ServiceConfig::load(path).map_err(|e| fail(EXIT_USAGE, e))?;
    let lexicon = match &cfg.lexicon {
        Some(p) => TopicLexicon::load(p).map_err(|e| fail(EXIT_DATA, e))?,
        None => TopicLexicon::default(),
    };
    Ok((cfg, lexicon))
}

fn write_out(path: &Path, body: &str) -> Result<(), ExitCode> {
    std::fs::write(path, body).map_err(|e| fail(EXIT_DATA, format!("{}: {e}", path.display())))
}

fn run(command: Command) -> Result<(), ExitCode> {
    match command {
        Command::Serve { config } => {
            let (cfg, _) = load_config(config.as_deref())?;
            let runtime = tokio::runtime::Runtime::new().map_err(|e| fail(EXIT_DATA, e))?;
            runtime.block_on(hyperfeed::service::serve(cfg)).map_err(|e| fail(EXIT_DATA, e))
        }
        Command::Batch {
            data_dir,
            out_dir,
            now,
            workers,
            config,
        } => {
            let (cfg, lexicon) = load_config(config.as_deref())?;
            let meta = run_batch(&data_dir, &out_dir, &cfg.engine, &lexicon, now, workers.max(1))
                .map_err(|e| fail(EXIT_DATA, e))?;
            println!("news_similarity rows: {}", meta.similarity_rows);
            println!("user_news_base rows: {}", meta.base_rows);
            Ok(())
        }
        Command::Simulate {
            users,
            items,
            steps,
            k,
            seed,
            out,
            snapshot_dir,
        } => {
            let scenario = SimScenario {
                snapshot_dir,
                ..SimScenario::synthetic(users, items, steps, k, seed)
            };
            let metrics = sim::simulate(&scenario, &TopicLexicon::default()).map_err(|e| match e {
                sim::SimError::Scenario(_) => fail(EXIT_USAGE, e),
                _ => fail(EXIT_DATA, e),
            })?;
            write_out(&out, &metrics.to_csv())?;
            let converged = metrics.users.iter().filter(|u| u.converged()).count();
            println!("steps: {}", metrics.steps.len());
            println!("events: {}", metrics.events_posted);
            println!("readers converged: {converged}/{}", metrics.users.len());
            for path in &metrics.tables {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Replay {
            log,
            k,
            window,
            out,
            config,
        } => {
            let (cfg, lexicon) = load_config(config.as_deref())?;
            let metrics = sim::replay_log(&log, k, window, &cfg.engine, &lexicon).map_err(|e| match e {
                sim::SimError::Scenario(_) => fail(EXIT_USAGE, e),
                _ => fail(EXIT_DATA, e),
            })?;
            write_out(&out, &metrics.to_csv())?;
            println!("windows: {}", metrics.windows.len());
            println!("hits: {}", metrics.total_hits());
            println!("skipped events: {}", metrics.skipped);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => code,
    }
}
