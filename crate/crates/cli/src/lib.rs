//! Shared plumbing for the `forge`, `codec` and `demux` binaries.

use std::io::Read;
use std::path::Path;

use anyhow::{Context, Result};

/// Logs to stderr, filtered by `RUST_LOG` (default `warn`).
pub fn init_tracing() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn"));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

/// Contents of `path`, or of stdin when it is `-`.
pub fn read_input(path: &Path) -> Result<String> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s).context("reading stdin")?;
        Ok(s)
    } else {
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
    }
}

/// Whitespace- or comma-separated token ids.
pub fn parse_ids(line: &str) -> Result<Vec<u32>> {
    line.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<u32>().with_context(|| format!("bad token id `{s}`")))
        .collect()
}

pub fn format_ids(ids: &[u32]) -> String {
    ids.iter().map(u32::to_string).collect::<Vec<_>>().join(" ")
}

/// Non-blank lines.
pub fn lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines().filter(|l| !l.trim().is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        let ids = parse_ids("1 2,3\t40").unwrap();
        assert_eq!(ids, vec![1, 2, 3, 40]);
        assert_eq!(format_ids(&ids), "1 2 3 40");
        assert!(parse_ids("1 x").is_err());
    }
}
