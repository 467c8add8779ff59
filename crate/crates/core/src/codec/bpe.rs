//! Byte-pair merges over quantized-coefficient symbol streams.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap};

pub type Pair = (u32, u32);

/// Ordered merge table; merge `i` produces id `first_id + i`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MergeTable {
    first_id: u32,
    merges: Vec<Pair>,
    ranks: HashMap<Pair, u32>,
}

impl MergeTable {
    pub fn new(first_id: u32, merges: Vec<Pair>) -> Self {
        let ranks = merges
            .iter()
            .enumerate()
            .map(|(i, &p)| (p, i as u32))
            .collect();
        MergeTable { first_id, merges, ranks }
    }

    pub fn len(&self) -> usize {
        self.merges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.merges.is_empty()
    }

    pub fn first_id(&self) -> u32 {
        self.first_id
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.merges
    }

    /// Pair a merged id expands to, if `id` is a merge product.
    pub fn parts(&self, id: u32) -> Option<Pair> {
        id.checked_sub(self.first_id)
            .and_then(|i| self.merges.get(i as usize))
            .copied()
    }

    /// Applies merges in rank order: repeatedly merge every occurrence of the
    /// lowest-ranked adjacent pair. Equivalent to replaying training order.
    pub fn apply(&self, symbols: &mut Vec<u32>) {
        if self.merges.is_empty() {
            return;
        }
        loop {
            let best = symbols
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0], w[1])).copied())
                .min();
            let Some(rank) = best else { break };
            let pair = self.merges[rank as usize];
            merge_pair(symbols, pair, self.first_id + rank);
        }
    }

    /// Expands merged ids back to base symbols. `None` if an id cannot be expanded
    /// to symbols below `first_id`.
    pub fn expand(&self, ids: &[u32], out: &mut Vec<u32>) -> Option<()> {
        let mut stack: Vec<u32> = ids.iter().rev().copied().collect();
        while let Some(id) = stack.pop() {
            if id < self.first_id {
                out.push(id);
            } else {
                let (a, b) = self.parts(id)?;
                stack.push(b);
                stack.push(a);
            }
        }
        Some(())
    }
}

/// Replaces non-overlapping occurrences of `pair`, scanning left to right.
pub fn merge_pair(symbols: &mut Vec<u32>, pair: Pair, new_id: u32) {
    let mut out = Vec::with_capacity(symbols.len());
    let mut i = 0;
    while i < symbols.len() {
        if i + 1 < symbols.len() && symbols[i] == pair.0 && symbols[i + 1] == pair.1 {
            out.push(new_id);
            i += 2;
        } else {
            out.push(symbols[i]);
            i += 1;
        }
    }
    *symbols = out;
}

/// Learns up to `max_merges` merges from weighted symbol sequences. Stops early
/// when no pair occurs at least `min_count` times. The most frequent pair wins,
/// ties go to the numerically smallest pair, so the result only depends on the
/// corpus contents.
pub fn learn_merges(
    corpus: &[Vec<u32>],
    first_id: u32,
    max_merges: usize,
    min_count: u64,
) -> MergeTable {
    // Identical sequences are merged into one weighted entry.
    let mut weights: HashMap<&[u32], u64> = HashMap::new();
    let mut order: Vec<&[u32]> = Vec::new();
    for seq in corpus {
        let w = weights.entry(seq.as_slice()).or_insert(0);
        if *w == 0 {
            order.push(seq.as_slice());
        }
        *w += 1;
    }
    let mut seqs: Vec<(Vec<u32>, u64)> = order.iter().map(|s| (s.to_vec(), weights[s])).collect();

    let mut counts: HashMap<Pair, u64> = HashMap::new();
    let mut where_: HashMap<Pair, BTreeSet<usize>> = HashMap::new();
    for (idx, (seq, w)) in seqs.iter().enumerate() {
        for p in seq.windows(2) {
            let pair = (p[0], p[1]);
            *counts.entry(pair).or_insert(0) += w;
            where_.entry(pair).or_default().insert(idx);
        }
    }
    let mut heap: BinaryHeap<(u64, Reverse<Pair>)> =
        counts.iter().map(|(&p, &c)| (c, Reverse(p))).collect();

    let mut merges = Vec::new();
    while merges.len() < max_merges {
        let Some((count, Reverse(pair))) = heap.pop() else { break };
        let current = counts.get(&pair).copied().unwrap_or(0);
        if current != count {
            // Stale entry; the live count was pushed separately.
            continue;
        }
        if count < min_count.max(1) {
            break;
        }
        let new_id = first_id + merges.len() as u32;
        merges.push(pair);

        let touched: Vec<usize> = where_.remove(&pair).map(|s| s.into_iter().collect()).unwrap_or_default();
        let mut changed: BTreeSet<Pair> = BTreeSet::new();
        for idx in touched {
            let (seq, w) = &mut seqs[idx];
            if !seq.windows(2).any(|p| (p[0], p[1]) == pair) {
                continue;
            }
            for p in seq.windows(2) {
                let old = (p[0], p[1]);
                let c = counts.get_mut(&old).expect("counted pair");
                *c -= *w;
                changed.insert(old);
            }
            merge_pair(seq, pair, new_id);
            for p in seq.windows(2) {
                let new = (p[0], p[1]);
                *counts.entry(new).or_insert(0) += *w;
                where_.entry(new).or_default().insert(idx);
                changed.insert(new);
            }
        }
        for p in changed {
            let c = counts[&p];
            if c == 0 {
                counts.remove(&p);
            } else {
                heap.push((c, Reverse(p)));
            }
        }
    }
    MergeTable::new(first_id, merges)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Straight retraining by full recount after every merge.
    fn learn_naive(corpus: &[Vec<u32>], first_id: u32, max_merges: usize) -> Vec<Pair> {
        let mut seqs = corpus.to_vec();
        let mut merges = Vec::new();
        while merges.len() < max_merges {
            let mut counts: HashMap<Pair, u64> = HashMap::new();
            for s in &seqs {
                for p in s.windows(2) {
                    *counts.entry((p[0], p[1])).or_insert(0) += 1;
                }
            }
            let best = counts
                .into_iter()
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)));
            match best {
                Some((pair, c)) if c >= 2 => {
                    let id = first_id + merges.len() as u32;
                    for s in &mut seqs {
                        merge_pair(s, pair, id);
                    }
                    merges.push(pair);
                }
                _ => break,
            }
        }
        merges
    }

    #[test]
    fn incremental_matches_naive_recount() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let corpus: Vec<Vec<u32>> = (0..60)
            .map(|_| (0..rng.gen_range(1..20)).map(|_| rng.gen_range(0..5)).collect())
            .collect();
        let fast = learn_merges(&corpus, 100, 40, 2);
        assert_eq!(fast.pairs(), learn_naive(&corpus, 100, 40).as_slice());
    }

    #[test]
    fn apply_reproduces_training_segmentation_and_expands_back() {
        let corpus = vec![vec![1, 2, 3, 1, 2, 3, 4], vec![1, 2, 1, 2, 3], vec![4, 4, 4, 4]];
        let table = learn_merges(&corpus, 10, 50, 2);
        assert!(!table.is_empty());
        for seq in &corpus {
            let mut s = seq.clone();
            table.apply(&mut s);
            assert!(s.len() <= seq.len());
            let mut back = Vec::new();
            table.expand(&s, &mut back).unwrap();
            assert_eq!(&back, seq);
        }
    }

    #[test]
    fn runs_of_zero_collapse() {
        let corpus = vec![vec![0; 42]; 10];
        let table = learn_merges(&corpus, 257, 1791, 2);
        let mut s = vec![0; 42];
        table.apply(&mut s);
        assert!(s.len() <= 3, "{s:?}");
    }
}
