//! `demux`: split joint token streams, one per input line.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, ValueEnum};
use forge_cli::{init_tracing, lines, parse_ids, read_input};
use forge_core::codec::CodecModel;
use forge_core::demux::{decode_stream_actions, demux, VocabLayout};

#[derive(Clone, Copy, ValueEnum)]
enum Emit {
    /// A JSON array of segments per stream.
    Segments,
    /// A JSON array of decoded action chunks per stream (needs `--model`).
    Chunks,
}

#[derive(Parser)]
#[command(name = "demux", about = "Split joint text/action token streams")]
struct Cli {
    /// JSON vocabulary layout.
    #[arg(long)]
    layout: PathBuf,
    #[arg(long, default_value = "-")]
    tokens: PathBuf,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "segments")]
    emit: Emit,
}

fn run(cli: Cli) -> Result<bool> {
    let layout: VocabLayout = serde_json::from_str(&read_input(&cli.layout)?).context("parsing layout")?;
    layout.check()?;
    let model = cli.model.as_deref().map(CodecModel::load).transpose()?;
    if matches!(cli.emit, Emit::Chunks) && model.is_none() {
        bail!("--emit chunks needs --model");
    }
    let mut clean = true;
    for (i, l) in lines(&read_input(&cli.tokens)?).enumerate() {
        let stream = parse_ids(l)?;
        let segments = match demux(&stream, &layout) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("stream {}: {} ({e})", i + 1, e.code());
                clean = false;
                continue;
            }
        };
        match (cli.emit, &model) {
            (Emit::Chunks, Some(m)) => match decode_stream_actions(&segments, m) {
                Ok(chunks) => println!("{}", serde_json::to_string(&chunks)?),
                Err(e) => {
                    eprintln!("stream {}: {} ({e})", i + 1, e.source.code());
                    clean = false;
                }
            },
            _ => println!("{}", serde_json::to_string(&segments)?),
        }
    }
    Ok(clean)
}

fn main() -> ExitCode {
    init_tracing();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
