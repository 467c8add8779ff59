//! Viterbi forced alignment under the CTC topology.
//!
//! Column 0 of the posterior matrix is the blank; labels index columns
//! `1..=K`. A path may start and end with or without blanks and must place a
//! blank between two equal consecutive labels.

use super::AudioError;

#[derive(Debug, Clone, PartialEq)]
pub struct CtcPosteriors {
    /// `rows[t][c]`: log-probability of column `c` at frame `t`.
    rows: Vec<Vec<f64>>,
    pub frame_seconds: f64,
}

impl CtcPosteriors {
    pub fn new(rows: Vec<Vec<f64>>, frame_seconds: f64) -> Result<Self, AudioError> {
        let width = rows.first().map(Vec::len).ok_or(AudioError::DimensionMismatch("no frames".into()))?;
        if width < 2 {
            return Err(AudioError::DimensionMismatch("need a blank and at least one symbol".into()));
        }
        for (t, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(AudioError::DimensionMismatch(format!("row {t} has {} columns, not {width}", row.len())));
            }
            if (log_sum_exp(row)).abs() > 1e-6 {
                return Err(AudioError::InvalidPosteriors(t));
            }
        }
        Ok(CtcPosteriors { rows, frame_seconds })
    }

    /// Normalizes raw scores row by row.
    pub fn from_logits(logits: Vec<Vec<f64>>, frame_seconds: f64) -> Result<Self, AudioError> {
        let rows = logits
            .into_iter()
            .map(|row| {
                let z = log_sum_exp(&row);
                row.into_iter().map(|v| v - z).collect()
            })
            .collect();
        Self::new(rows, frame_seconds)
    }

    pub fn frames(&self) -> usize {
        self.rows.len()
    }

    pub fn symbols(&self) -> usize {
        self.rows[0].len() - 1
    }

    pub fn log_prob(&self, t: usize, column: usize) -> f64 {
        self.rows[t][column]
    }
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Frame span (inclusive) of every label, plus the path log-probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub spans: Vec<(usize, usize)>,
    pub score: f64,
}

impl Alignment {
    /// Log-probability of the path this alignment describes: label frames emit
    /// their label, every other frame emits blank.
    pub fn path_score(&self, post: &CtcPosteriors, labels: &[usize]) -> f64 {
        let mut column = vec![0usize; post.frames()];
        for (&(a, b), &l) in self.spans.iter().zip(labels) {
            column[a..=b].iter_mut().for_each(|c| *c = l);
        }
        column.iter().enumerate().map(|(t, &c)| post.log_prob(t, c)).sum()
    }
}

pub fn min_frames(labels: &[usize]) -> usize {
    labels.len() + labels.windows(2).filter(|w| w[0] == w[1]).count()
}

pub fn ctc_force_align(post: &CtcPosteriors, labels: &[usize]) -> Result<Alignment, AudioError> {
    let k = post.symbols();
    if let Some(&bad) = labels.iter().find(|&&l| l == 0 || l > k) {
        return Err(AudioError::DimensionMismatch(format!("label {bad} outside 1..={k}")));
    }
    let t_len = post.frames();
    let needed = min_frames(labels);
    if t_len < needed.max(1) {
        return Err(AudioError::Infeasible { frames: t_len, needed });
    }

    // State s: even = blank, odd = label (s - 1) / 2.
    let states = 2 * labels.len() + 1;
    let column = |s: usize| if s % 2 == 0 { 0 } else { labels[(s - 1) / 2] };
    let neg = f64::NEG_INFINITY;
    let mut score = vec![neg; states];
    let mut back = vec![vec![0usize; states]; t_len];
    score[0] = post.log_prob(0, 0);
    if states > 1 {
        score[1] = post.log_prob(0, column(1));
    }
    for t in 1..t_len {
        let mut next = vec![neg; states];
        for s in 0..states {
            let mut best = (score[s], s);
            if s >= 1 && score[s - 1] > best.0 {
                best = (score[s - 1], s - 1);
            }
            let skip_ok = s >= 2 && s % 2 == 1 && column(s) != column(s - 2);
            if skip_ok && score[s - 2] > best.0 {
                best = (score[s - 2], s - 2);
            }
            if best.0 > neg {
                next[s] = best.0 + post.log_prob(t, column(s));
                back[t][s] = best.1;
            }
        }
        score = next;
    }

    let last = states - 1;
    let mut s = if states > 1 && score[last - 1] > score[last] { last - 1 } else { last };
    let total = score[s];
    if total == neg {
        return Err(AudioError::Infeasible { frames: t_len, needed });
    }
    // Walking backwards, the first frame seen for a label is its end.
    let mut spans: Vec<Option<(usize, usize)>> = vec![None; labels.len()];
    for t in (0..t_len).rev() {
        if s % 2 == 1 {
            let span = &mut spans[(s - 1) / 2];
            *span = Some(span.map_or((t, t), |(_, end)| (t, end)));
        }
        if t > 0 {
            s = back[t][s];
        }
    }
    let spans = spans.into_iter().map(|s| s.expect("every label is visited")).collect();
    Ok(Alignment { spans, score: total })
}
