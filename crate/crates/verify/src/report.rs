//! Agreement rates over recorded verdicts.

use std::collections::{BTreeMap, HashMap};

use forge_core::dataset::ReviewBatch;
use forge_core::InstructionType;
use serde::{Deserialize, Serialize};

use crate::log::Verdict;

/// A yes/total ratio reported to 0.1 %.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub yes: usize,
    pub total: usize,
    /// Round-half-up of `1000 * yes / total`.
    pub permille: u64,
    pub percent: f64,
}

impl Rate {
    pub fn new(yes: usize, total: usize) -> Self {
        let permille = if total == 0 { 0 } else { ((2000 * yes + total) / (2 * total)) as u64 };
        Rate { yes, total, permille, percent: permille as f64 / 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeAgreement {
    pub n_verdicts: usize,
    pub recoverable_rate: f64,
    pub fidelity_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub n_verdicts: usize,
    /// Verdicts on calibration items, left out of every rate.
    pub calibration_excluded: usize,
    /// Percentages with one decimal, e.g. 98.7.
    pub recoverable_rate: f64,
    pub fidelity_rate: f64,
    pub recoverable: Rate,
    pub fidelity: Rate,
    pub per_type: BTreeMap<InstructionType, TypeAgreement>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportFilter {
    pub annotator: Option<String>,
    pub instruction_type: Option<InstructionType>,
}

/// `None` when no verdict passes the filter.
pub fn agreement_report(
    verdicts: &[Verdict],
    batch: Option<&ReviewBatch>,
    filter: &ReportFilter,
) -> Option<AgreementReport> {
    let items: HashMap<&str, (InstructionType, bool)> = batch
        .map(|b| b.items.iter().map(|i| (i.episode_id.as_str(), (i.instruction_type, i.calibration))).collect())
        .unwrap_or_default();
    let mut calibration_excluded = 0;
    let mut counted: Vec<(&Verdict, Option<InstructionType>)> = Vec::new();
    for v in verdicts {
        if filter.annotator.as_ref().is_some_and(|a| *a != v.annotator_id) {
            continue;
        }
        let info = items.get(v.episode_id.as_str()).copied();
        if filter.instruction_type.is_some() && info.map(|i| i.0) != filter.instruction_type {
            continue;
        }
        if info.is_some_and(|i| i.1) {
            calibration_excluded += 1;
            continue;
        }
        counted.push((v, info.map(|i| i.0)));
    }
    if counted.is_empty() {
        return None;
    }
    let rates = |vs: &[&Verdict]| {
        (
            Rate::new(vs.iter().filter(|v| v.intent_recoverable).count(), vs.len()),
            Rate::new(vs.iter().filter(|v| v.phenomenon_fidelity).count(), vs.len()),
        )
    };
    let mut by_type: BTreeMap<InstructionType, Vec<&Verdict>> = BTreeMap::new();
    for (v, t) in &counted {
        if let Some(t) = t {
            by_type.entry(*t).or_default().push(v);
        }
    }
    let per_type = by_type
        .into_iter()
        .map(|(t, vs)| {
            let (r, f) = rates(&vs);
            (t, TypeAgreement { n_verdicts: vs.len(), recoverable_rate: r.percent, fidelity_rate: f.percent })
        })
        .collect();
    let all: Vec<&Verdict> = counted.iter().map(|(v, _)| *v).collect();
    let (recoverable, fidelity) = rates(&all);
    Some(AgreementReport {
        n_verdicts: all.len(),
        calibration_excluded,
        recoverable_rate: recoverable.percent,
        fidelity_rate: fidelity.percent,
        recoverable,
        fidelity,
        per_type,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_ratios() {
        assert_eq!(Rate::new(987, 1000).percent, 98.7);
        assert_eq!(Rate::new(3, 3).percent, 100.0);
        assert_eq!(Rate::new(1, 3).percent, 33.3);
        assert_eq!(Rate::new(2, 3).percent, 66.7);
        assert_eq!(Rate::new(1, 8).permille, 125);
    }
}
