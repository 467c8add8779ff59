//! Verification service: serves a review batch to annotators, records their
//! verdicts in a durable log and reports agreement rates.

pub mod log;
pub mod report;
pub mod server;

pub use log::{read_log, Fault, LogError, Verdict, VerdictLog};
pub use report::{agreement_report, AgreementReport, Rate, ReportFilter};
pub use server::{router, serve, ReviewItem, ServiceState};

/// Loads a batch file written by `forge sample`.
pub fn load_batch(path: &std::path::Path) -> std::io::Result<forge_core::dataset::ReviewBatch> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(std::io::Error::other)
}
