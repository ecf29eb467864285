//! Command line: `serve` and `one-shot`.

use std::path::PathBuf;
use std::sync::Arc;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use nl2bi_core::sqlgen::Dialect;

use crate::config::{ServiceConfig, TranslatorMode};
use crate::engine::{unix_now, Engine};
use crate::http::{load_catalog, router, AppState};
use crate::problem::Problem;
use crate::store::{load_session_file, write_atomic, AdvisorLog};

#[derive(Debug, Parser)]
#[command(
    name = "nl2bi",
    version,
    about = "Compile natural-language BI questions into SQL"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Answer one utterance and print the response as JSON.
    OneShot(OneShotArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// TOML config file. NL2BI_* variables override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Listen address, overriding the config.
    #[arg(long)]
    pub listen: Option<std::net::SocketAddr>,
}

#[derive(Debug, Args)]
pub struct OneShotArgs {
    /// Catalog JSON file.
    #[arg(long)]
    pub catalog: PathBuf,
    #[arg(long)]
    pub utterance: String,
    /// Session JSON file to continue and update. Created if missing.
    #[arg(long)]
    pub session_file: Option<PathBuf>,
    /// Date treated as today (YYYY-MM-DD). Defaults to the local date.
    #[arg(long)]
    pub today: Option<NaiveDate>,
    #[arg(long, default_value_t = Dialect::ClickhouseLike)]
    pub dialect: Dialect,
    /// Guard ratio denominators against zero.
    #[arg(long)]
    pub null_guard: bool,
    /// Advisor event log to append to.
    #[arg(long)]
    pub advisor: Option<PathBuf>,
    /// Config file supplying translator settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Output of a one-shot run: what to print and the exit code.
pub struct OneShotOutcome {
    pub stdout: String,
    pub stderr: String,
    pub code: i32,
}

fn failure(p: Problem) -> OneShotOutcome {
    OneShotOutcome {
        stdout: serde_json::to_string_pretty(&p).expect("problem serializes"),
        stderr: format!("error: {}", p.message),
        code: p.exit_code(),
    }
}

pub fn one_shot(args: &OneShotArgs) -> OneShotOutcome {
    let catalog = match load_catalog(&args.catalog) {
        Ok(c) => c,
        Err(e) => return failure(Problem::new(2, "catalog_unavailable", e.to_string())),
    };
    let cfg = match ServiceConfig::from_process_env(args.config.as_deref()) {
        Ok(c) => c,
        Err(e) => return failure(Problem::new(1, "bad_config", e.to_string())),
    };
    // Model mode needs a runtime to drive the HTTP client from this thread.
    let runtime = match cfg.translator {
        TranslatorMode::Model => match tokio::runtime::Runtime::new() {
            Ok(rt) => Some(rt),
            Err(e) => return failure(Problem::new(1, "runtime", e.to_string())),
        },
        TranslatorMode::Rule => None,
    };
    let mut engine = match Engine::from_config(&cfg, runtime.as_ref().map(|r| r.handle().clone())) {
        Ok(e) => e,
        Err(e) => return failure(Problem::new(1, "bad_config", e)),
    };
    engine.options.dialect = args.dialect;
    engine.options.null_guard = args.null_guard;
    engine.today = args.today.or(engine.today);

    let mut session = match &args.session_file {
        Some(p) => match load_session_file(p, "cli") {
            Ok(s) => s,
            Err(e) => return failure(Problem::new(1, "session_unavailable", e.to_string())),
        },
        None => nl2bi_core::dialogue::SessionState::new("cli"),
    };
    let turn = engine.run_turn(&catalog, &mut session, &args.utterance, unix_now());
    if let Some(p) = &args.session_file {
        let body = serde_json::to_vec_pretty(&session).expect("session serializes");
        if let Err(e) = write_atomic(p, &body) {
            return failure(Problem::new(1, "storage_error", e.to_string()));
        }
    }
    if let Some(p) = &args.advisor {
        let res = AdvisorLog::open(p).and_then(|(mut log, _)| log.append(&turn.events));
        if let Err(e) = res {
            return failure(Problem::new(1, "storage_error", e.to_string()));
        }
    }
    drop(runtime);
    match turn.result {
        Ok(resp) => OneShotOutcome {
            stdout: serde_json::to_string_pretty(&resp).expect("response serializes"),
            stderr: String::new(),
            code: 0,
        },
        Err(e) => failure(Problem::from(&e)),
    }
}

pub fn serve(args: &ServeArgs) -> Result<(), String> {
    let mut cfg =
        ServiceConfig::from_process_env(args.config.as_deref()).map_err(|e| e.to_string())?;
    if let Some(l) = args.listen {
        cfg.listen = l;
    }
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    let engine = Engine::from_config(&cfg, Some(rt.handle().clone()))?;
    let state = Arc::new(AppState::open(&cfg, engine).map_err(|e| e.to_string())?);
    let app = router(state, cfg.static_dir.as_deref());
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(cfg.listen)
            .await
            .map_err(|e| format!("cannot listen on {}: {e}", cfg.listen))?;
        tracing::info!(addr = %cfg.listen, "listening");
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| e.to_string())
    })
}
