//! `manualbridge`: operator entry points.
//!
//! Exit codes: 0 success, 1 error, 2 the question was refused by the guardrails.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use manualbridge_core::config::Settings;
use manualbridge_core::eval::{eval_retrieval, eval_roundtrip, load_gold, EvalReport};
use manualbridge_core::ingest::{chunk_pages, ChunkingConfig, compute_checksum, extract_pages, DocumentFormat};
use manualbridge_core::lang::{TaggingTranslator, DEFAULT_EQUIVALENCE_THRESHOLD};
use manualbridge_core::store::{chunks_jsonl, manual_id_for, ManualStore, NewManual};
use manualbridge_core::{Answer, ProviderMode};

#[derive(Parser)]
#[command(name = "manualbridge", version, about = "Answer questions about prosthetic device manuals")]
struct Cli {
    /// Store directory (overrides MB_STORE_DIR).
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register a PDF or text manual.
    Ingest {
        path: PathBuf,
        #[arg(long)]
        title: Option<String>,
    },
    /// Ask one question about a registered manual.
    Ask {
        #[arg(long)]
        manual: String,
        /// Session language used when the question carries no language markers.
        #[arg(long)]
        lang: Option<String>,
        /// stub or http (overrides MB_PROVIDER_MODE).
        #[arg(long)]
        providers: Option<ProviderMode>,
        question: String,
    },
    /// Run the HTTP service until interrupted.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
    /// Measure retrieval (and optionally round-trip translation) quality.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        manual: String,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Sentences, one per line, to back-translate.
        #[arg(long)]
        roundtrip: Option<PathBuf>,
        #[arg(long, default_value = "pcm")]
        lang: String,
    },
    /// Print the chunks of a file (or of a registered manual) as JSON Lines.
    Chunks {
        #[arg(required_unless_present = "manual", conflicts_with = "manual")]
        path: Option<PathBuf>,
        #[arg(long)]
        manual: Option<String>,
    },
    /// Print a registered manual's vector index as JSON.
    DumpIndex {
        #[arg(long)]
        manual: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut settings = Settings::from_env()?;
    if let Some(store) = cli.store {
        settings.store_dir = store;
    }
    match cli.command {
        Command::Ingest { path, title } => ingest(&settings, &path, title),
        Command::Ask {
            manual,
            lang,
            providers,
            question,
        } => {
            if let Some(mode) = providers {
                settings.provider_mode = mode;
            }
            ask(&settings, &manual, lang, &question)
        }
        Command::Serve { bind } => {
            if let Some(bind) = bind {
                settings.bind_addr = bind;
            }
            serve(settings)
        }
        Command::Eval {
            gold,
            manual,
            report,
            roundtrip,
            lang,
        } => eval(&settings, &gold, &manual, report.as_deref(), roundtrip.as_deref(), &lang),
        Command::Chunks { path, manual } => chunks(&settings, path.as_deref(), manual.as_deref()),
        Command::DumpIndex { manual } => {
            let index = open_store(&settings)?.load_index(&manual)?;
            let mut out = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut out, &index)?;
            writeln!(out)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn open_store(settings: &Settings) -> Result<ManualStore> {
    ManualStore::open(&settings.store_dir)
        .with_context(|| format!("opening store {}", settings.store_dir.display()))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn ingest(settings: &Settings, path: &Path, title: Option<String>) -> Result<ExitCode> {
    let bytes = read_file(path)?;
    let store = open_store(settings)?;
    let upload = NewManual {
        bytes: &bytes,
        title,
        filename: path.file_name().map(|n| n.to_string_lossy().into_owned()),
        format: None,
    };
    let providers = settings.providers();
    let reg = store.register_manual(&upload, providers.embedder.as_ref())?;
    let m = &reg.manual;
    if reg.created {
        println!("manual_id: {}", m.manual_id);
    } else {
        println!("manual_id: {} (already registered)", m.manual_id);
    }
    println!("title: {}", m.title);
    println!("pages: {}", m.page_count);
    println!("chunks: {}", m.chunk_count);
    Ok(ExitCode::SUCCESS)
}

fn ask(settings: &Settings, manual_id: &str, lang: Option<String>, question: &str) -> Result<ExitCode> {
    let store = open_store(settings)?;
    let engine = settings.engine()?;
    let lang = lang.unwrap_or_else(|| engine.registry.default_language().code().to_string());
    let session_language = engine.registry.tag(&lang)?;
    let manual = store.indexed_manual(manual_id)?;
    let answer = engine.answer_question(&manual, &session_language, question)?;
    print_answer(&answer);
    let reason = answer.verdict.reason.as_str();
    if reason.starts_with("provider_") || reason == "unsupported_pair" {
        eprintln!("error: provider failure ({reason})");
        return Ok(ExitCode::from(1));
    }
    Ok(if answer.verdict.decision.is_refusal() {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn print_answer(answer: &Answer) {
    println!("{}", answer.localized_text);
    for (i, c) in answer.citations.iter().enumerate() {
        if c.page_first == c.page_last {
            println!("[{}] {} (page {})", i + 1, c.chunk_id, c.page_first);
        } else {
            println!("[{}] {} (pages {}-{})", i + 1, c.chunk_id, c.page_first, c.page_last);
        }
    }
}

fn serve(settings: Settings) -> Result<ExitCode> {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .init();
    let state = manualbridge_server::AppState::from_settings(&settings)?;
    let app = manualbridge_server::router(state, &settings.cors_origins);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = manualbridge_server::bind(&settings.bind_addr).await?;
        eprintln!("listening on {}", listener.local_addr()?);
        manualbridge_server::serve(listener, app, manualbridge_server::shutdown_signal()).await?;
        eprintln!("shut down");
        Ok(ExitCode::SUCCESS)
    })
}

fn eval(
    settings: &Settings,
    gold: &Path,
    manual_id: &str,
    report: Option<&Path>,
    roundtrip: Option<&Path>,
    lang: &str,
) -> Result<ExitCode> {
    let gold = load_gold(gold)?;
    let store = open_store(settings)?;
    let engine = settings.engine()?;
    let manual = store.indexed_manual(manual_id)?;
    let retrieval = eval_retrieval(&gold, &manual, &engine.retrieval, &engine.providers, &engine.registry)?;
    println!("items: {}", retrieval.items);
    println!("recall@{}: {:.4}", retrieval.k, retrieval.recall_at_k);
    println!("mrr: {:.4}", retrieval.mrr);

    let roundtrip = match roundtrip {
        Some(path) => {
            let text = String::from_utf8(read_file(path)?).context("round-trip corpus is not UTF-8")?;
            let corpus: Vec<String> = text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect();
            let tag = engine.registry.tag(lang)?;
            let translator = match settings.provider_mode {
                ProviderMode::Stub => &TaggingTranslator as &dyn manualbridge_core::Translator,
                ProviderMode::Http => engine.providers.translator.as_ref(),
            };
            let rt = eval_roundtrip(
                &corpus,
                translator,
                &tag,
                engine.providers.embedder.as_ref(),
                DEFAULT_EQUIVALENCE_THRESHOLD,
            )?;
            println!("roundtrip mean ({}): {:.4}", rt.language, rt.mean_score);
            println!("roundtrip below {}: {}", rt.threshold, rt.below_threshold.len());
            Some(rt)
        }
        None => None,
    };

    if let Some(path) = report {
        let full = EvalReport {
            manual_id: manual_id.to_string(),
            retrieval,
            roundtrip,
        };
        let json = serde_json::to_vec_pretty(&full)?;
        std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn chunks(settings: &Settings, path: Option<&Path>, manual: Option<&str>) -> Result<ExitCode> {
    let chunks = match (path, manual) {
        (_, Some(id)) => open_store(settings)?.load_chunks(id)?,
        (Some(path), None) => {
            let bytes = read_file(path)?;
            let name = path.file_name().map(|n| n.to_string_lossy().into_owned());
            let format = DocumentFormat::detect(name.as_deref(), &bytes)?;
            let pages = extract_pages(&bytes, format)?;
            let manual_id = manual_id_for(&compute_checksum(&bytes));
            chunk_pages(&manual_id, &pages, &ChunkingConfig::default())?
        }
        (None, None) => bail!("give a file path or --manual"),
    };
    std::io::stdout().lock().write_all(&chunks_jsonl(&chunks))?;
    Ok(ExitCode::SUCCESS)
}
