use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use ethgame_core::engine::ExperimentConfig;
use ethgame_server::api::{router, AppState};
use ethgame_server::export::{export_tables, StudyTables};
use ethgame_server::journal::read_log;
use ethgame_server::report::{render, Study};
use ethgame_server::{replay, Journal, LoadedPrices};

#[derive(Parser)]
#[command(
    name = "ethgame",
    version,
    about = "ETH rule-versus-discretion classroom game"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the session server.
    Serve {
        /// Experiment config (JSON); used by `POST /experiments`.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        prices: PathBuf,
        /// Event log (JSON Lines); created if missing.
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: String,
        #[arg(long, env = "ETHGAME_ADMIN_TOKEN")]
        admin_token: String,
    },
    /// Run one of the studies on exported tables or a raw log.
    Analyze {
        #[arg(value_enum)]
        study: Study,
        #[command(flatten)]
        source: Source,
        /// Also write the result table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Replay a log and write the five CSV tables.
    Export {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        prices: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    #[arg(long)]
    export_dir: Option<PathBuf>,
    #[arg(long)]
    log: Option<PathBuf>,
}

fn load_config(path: Option<&Path>) -> anyhow::Result<ExperimentConfig> {
    let Some(path) = path else {
        return Ok(ExperimentConfig::default());
    };
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg: ExperimentConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    cfg.validate()?;
    Ok(cfg)
}

async fn serve(
    config: Option<PathBuf>,
    prices: PathBuf,
    log: PathBuf,
    listen: String,
    admin_token: String,
) -> anyhow::Result<()> {
    let config = load_config(config.as_deref())?;
    let prices = Arc::new(LoadedPrices::load(&prices)?);
    let mut journal = Journal::open(&log, prices)?;
    journal.advance_all()?;
    if let Some(recorded) = journal.record().config() {
        if *recorded != config {
            tracing::warn!("log already holds an experiment; its recorded config takes precedence");
        }
    }
    tracing::info!(events = journal.len(), "replayed {}", log.display());
    let app = router(AppState::new(journal, admin_token, config));
    let listener = tokio::net::TcpListener::bind(&listen).await?;
    tracing::info!("listening on {listen}");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();

    match Cli::parse().command {
        Command::Serve {
            config,
            prices,
            log,
            listen,
            admin_token,
        } => {
            if admin_token.is_empty() {
                bail!("--admin-token must not be empty");
            }
            tokio::runtime::Runtime::new()?.block_on(serve(
                config,
                prices,
                log,
                listen,
                admin_token,
            ))
        }
        Command::Analyze { study, source, csv } => {
            let tables = match (source.export_dir, source.log) {
                (Some(dir), _) => StudyTables::from_dir(&dir)?,
                (None, Some(log)) => StudyTables::from_events(&read_log(&log)?)?,
                (None, None) => unreachable!("clap enforces one source"),
            };
            let table = render(study, &tables)?;
            print!("{}", table.to_text());
            if let Some(path) = csv {
                std::fs::write(&path, table.to_csv())
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(())
        }
        Command::Export { log, prices, out } => {
            let prices = LoadedPrices::load(&prices)?;
            let record = replay(&read_log(&log)?, &prices)?;
            export_tables(&record).write_dir(&out)?;
            eprintln!(
                "wrote {} subjects to {}",
                record.subjects().len(),
                out.display()
            );
            Ok(())
        }
    }
}
