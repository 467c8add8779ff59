//! `forge`: the dataset pipeline front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use forge_cli::init_tracing;
use forge_core::audio::catalog::Catalog;
use forge_core::audio::render::{MockAcoustic, RenderConfig, RenderContext};
use forge_core::audio::tts::{CachedTts, HttpTts, MockTts, TtsClient};
use forge_core::cache::BlobCache;
use forge_core::dataset::{check_manifest, compute_stats, pack, sample_for_review, Manifest};
use forge_core::realize::{read_jsonl, realize_records, write_jsonl, RealizeConfig, VoiceBank};
use forge_core::script::{
    run_script_stage, CachedChatClient, ChatClient, ChatClientConfig, HttpChatClient, ReplayChatClient, ScriptConfig,
    ScriptRecord, TrajectorySeed,
};
use forge_core::InstructionType;
use forge_verify::{load_batch, ServiceState, VerdictLog};

const TTS_API_KEY_ENV: &str = "FORGE_TTS_API_KEY";

#[derive(Parser)]
#[command(name = "forge", about = "Forge spoken, contextual instruction episodes from robot trajectories")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write dialogue scripts for trajectory seeds.
    Script(ScriptArgs),
    /// Render scripts to audio and write the episode manifest.
    Audio(AudioArgs),
    /// Sort the manifest and write tar shards with offset indexes.
    Pack {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dataset statistics.
    Stats {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw a review batch.
    Sample {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        stratify: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate every episode and its files. Exit 0 clean, 1 violations, 2 corruption.
    Check {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Run the review service.
    Serve {
        #[arg(long)]
        batch: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: String,
        #[arg(long)]
        log: PathBuf,
        /// Review console bundle served at `/`.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct ScriptArgs {
    #[arg(long)]
    seeds: PathBuf,
    /// Comma-separated instruction types; all seven by default.
    #[arg(long, value_delimiter = ',')]
    types: Vec<InstructionType>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, default_value = "default")]
    model: String,
    /// Replay canned responses from a JSONL file instead of calling a service.
    #[arg(long)]
    mock: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    expansion: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    no_validate: bool,
    /// Where to write the stage report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(clap::Args)]
struct AudioArgs {
    #[arg(long)]
    plans: PathBuf,
    #[arg(long)]
    voices: PathBuf,
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long)]
    backgrounds: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    snr_min: f64,
    #[arg(long, default_value_t = 20.0, allow_negative_numbers = true)]
    snr_max: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Directory the scripts' frame references are relative to.
    #[arg(long)]
    frames: Option<PathBuf>,
    /// Speech service URL; an offline synthetic voice is used when absent.
    #[arg(long)]
    tts_endpoint: Option<String>,
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Overlay sound events instead of opening a gap for them.
    #[arg(long)]
    overlay: bool,
}

fn with_cache<C: ChatClient + 'static>(inner: C, cache: &Option<PathBuf>) -> Result<Box<dyn ChatClient>> {
    Ok(match cache {
        Some(dir) => Box::new(CachedChatClient::new(inner, BlobCache::open(dir)?)),
        None => Box::new(inner),
    })
}

fn script(a: ScriptArgs) -> Result<()> {
    let seeds: Vec<TrajectorySeed> = read_jsonl(&a.seeds)?;
    let client: Box<dyn ChatClient> = match (&a.mock, &a.endpoint) {
        (Some(mock), _) => with_cache(ReplayChatClient::load(mock)?, &a.cache)?,
        (None, Some(endpoint)) => {
            let mut config = ChatClientConfig::new(endpoint.clone(), a.model.clone());
            config.cache_dir = a.cache.clone();
            with_cache(HttpChatClient::new(config)?, &a.cache)?
        }
        (None, None) => bail!("pass --endpoint or --mock"),
    };
    let types = if a.types.is_empty() { InstructionType::ALL.to_vec() } else { a.types };
    let config = ScriptConfig { types, expansion: a.expansion, seed: a.seed, validate: !a.no_validate };
    let outcome = run_script_stage(&seeds, &config, client.as_ref());
    write_jsonl(&a.out, &outcome.records)?;
    let report = serde_json::to_string_pretty(&outcome.report)?;
    match &a.report {
        Some(path) => std::fs::write(path, &report)?,
        None => eprintln!("{report}"),
    }
    eprintln!("{} of {} scripts accepted", outcome.report.accepted, outcome.report.attempted);
    Ok(())
}

fn audio(a: AudioArgs) -> Result<()> {
    if a.snr_min > a.snr_max {
        bail!("--snr-min exceeds --snr-max");
    }
    let records: Vec<ScriptRecord> = read_jsonl(&a.plans)?;
    let bank = VoiceBank::load(&a.voices)?;
    let events = a.events.as_deref().map(Catalog::load).transpose()?;
    let backgrounds = a.backgrounds.as_deref().map(Catalog::load).transpose()?;
    let tts: Box<dyn TtsClient> = match (&a.tts_endpoint, &a.cache) {
        (Some(url), Some(dir)) => {
            Box::new(CachedTts::new(HttpTts::new(url.clone(), TTS_API_KEY_ENV, Duration::from_secs(60))?, BlobCache::open(dir)?))
        }
        (Some(url), None) => Box::new(HttpTts::new(url.clone(), TTS_API_KEY_ENV, Duration::from_secs(60))?),
        (None, _) => Box::new(MockTts::default()),
    };
    let acoustic = MockAcoustic { seed: a.seed, ..MockAcoustic::default() };
    let ctx = RenderContext { tts: tts.as_ref(), acoustic: &acoustic, events: events.as_ref(), backgrounds: backgrounds.as_ref() };
    let mut render = RenderConfig { snr_db: (a.snr_min, a.snr_max), ..RenderConfig::default() };
    if a.overlay {
        render.event_mode = forge_core::episode::InsertMode::Overlay;
    }
    let config = RealizeConfig { render, seed: a.seed, frames_dir: a.frames, ..RealizeConfig::default() };
    let report = realize_records(&records, &bank, &ctx, &config, &a.out)?;
    eprintln!(
        "{} episodes written, {} failed, {:.1} s of audio",
        report.written,
        report.failed.len(),
        report.total_audio_seconds
    );
    for (id, code) in &report.failed {
        eprintln!("  {id}: {code}");
    }
    Ok(())
}

fn stats(manifest: &Path, out: Option<PathBuf>) -> Result<()> {
    let m = Manifest::open(manifest)?;
    let report = compute_stats(&m)?;
    println!("episodes: {}", report.totals.episodes);
    for (t, n) in &report.per_type {
        println!("{:<12} {:>6}", t.as_str(), n);
    }
    if let Some(path) = out {
        std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}

fn sample(manifest: &Path, n: usize, seed: u64, stratify: bool, out: &Path) -> Result<()> {
    let m = Manifest::open(manifest)?;
    let root = m.root().canonicalize().context("resolving manifest directory")?;
    let batch = sample_for_review(&m.episodes()?, n, seed, stratify, &root.to_string_lossy())?;
    std::fs::write(out, serde_json::to_string_pretty(&batch)?)?;
    eprintln!("{} items written to {}", batch.items.len(), out.display());
    Ok(())
}

fn check(manifest: &Path) -> ExitCode {
    let report = check_manifest(manifest);
    if let Some(c) = &report.corruption {
        eprintln!("corrupt: {c}");
    }
    for i in &report.issues {
        println!("{}\t{}\t{}", i.id, i.code, i.detail);
    }
    eprintln!("{} episodes, {} violations", report.episodes, report.issues.len());
    ExitCode::from(report.exit_code() as u8)
}

async fn serve(batch: Option<PathBuf>, listen: String, log: PathBuf, static_dir: Option<PathBuf>) -> Result<()> {
    let batch = batch.as_deref().map(load_batch).transpose().context("loading batch")?;
    let state = Arc::new(ServiceState::new(batch, VerdictLog::open(&log)?));
    let listener = tokio::net::TcpListener::bind(&listen).await.with_context(|| format!("binding {listen}"))?;
    eprintln!("listening on {}", listener.local_addr()?);
    forge_verify::serve(listener, state, static_dir).await?;
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Script(a) => script(a)?,
        Cmd::Audio(a) => audio(a)?,
        Cmd::Pack { manifest, out } => {
            let mut m = Manifest::open(&manifest)?;
            let summary = pack(&mut m, &out)?;
            eprintln!("{} episodes in {} shards", summary.episodes, summary.shards.len());
        }
        Cmd::Stats { manifest, out } => stats(&manifest, out)?,
        Cmd::Sample { manifest, n, seed, stratify, out } => sample(&manifest, n, seed, stratify, &out)?,
        Cmd::Check { manifest } => return Ok(check(&manifest)),
        Cmd::Serve { batch, listen, log, static_dir } => {
            tokio::runtime::Runtime::new()?.block_on(serve(batch, listen, log, static_dir))?
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    init_tracing();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
