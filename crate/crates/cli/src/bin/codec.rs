//! `codec train | encode | decode`.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use forge_cli::{format_ids, init_tracing, lines, parse_ids, read_input};
use forge_core::codec::{train_codec, ActionChunk, ActionTokenSeq, CodecConfig, CodecModel};

#[derive(Parser)]
#[command(name = "codec", about = "DCT + BPE action tokenizer")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Learn scales and merges from one JSON chunk (N x 7 array) per line.
    Train {
        #[arg(long)]
        chunks: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = forge_core::codec::DEFAULT_CHUNK_LEN)]
        chunk_len: usize,
        #[arg(long, default_value_t = forge_core::codec::DEFAULT_STEP)]
        step: f64,
        #[arg(long)]
        max_merges: Option<usize>,
    },
    /// One JSON chunk per input line to one line of token ids.
    Encode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "-")]
        chunk: PathBuf,
    },
    /// One line of token ids to one JSON chunk.
    Decode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "-")]
        tokens: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Train { chunks, out, chunk_len, step, max_merges } => {
            let corpus = lines(&read_input(&chunks)?)
                .enumerate()
                .map(|(i, l)| serde_json::from_str::<ActionChunk>(l).with_context(|| format!("chunk line {}", i + 1)))
                .collect::<Result<Vec<_>>>()?;
            let mut config = CodecConfig { chunk_len, step, ..CodecConfig::default() };
            if let Some(m) = max_merges {
                config.max_merges = m;
            }
            let trained = train_codec(&corpus, &config)?;
            for w in &trained.warnings {
                eprintln!("warning: {} on dimension {}", w.code, w.dim);
            }
            trained.model.save(&out)?;
            eprintln!(
                "trained on {} chunks: {} merges, vocabulary {}",
                corpus.len(),
                trained.model.merge_count(),
                trained.model.vocab_size()
            );
        }
        Cmd::Encode { model, chunk } => {
            let model = CodecModel::load(&model)?;
            for (i, l) in lines(&read_input(&chunk)?).enumerate() {
                let c: ActionChunk = serde_json::from_str(l).with_context(|| format!("chunk line {}", i + 1))?;
                println!("{}", format_ids(&model.encode_chunk(&c)?.0));
            }
        }
        Cmd::Decode { model, tokens } => {
            let model = CodecModel::load(&model)?;
            for l in lines(&read_input(&tokens)?) {
                let chunk = model.decode_tokens(&ActionTokenSeq(parse_ids(l)?))?;
                println!("{}", serde_json::to_string(&chunk)?);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    init_tracing();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
