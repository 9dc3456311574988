use std::collections::HashMap;

use super::{check_pair, EvalError};

/// Clipped n-gram match and candidate totals for orders 1 to 4, plus
/// corpus lengths.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BleuStats {
    pub matches: [usize; 4],
    pub totals: [usize; 4],
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    /// BLEU-4 in `[0, 100]`. When any order from 2 up has no match, orders 2
    /// to 4 use `(matches + 1) / (totals + 1)`.
    pub fn score(&self) -> f64 {
        if self.matches[0] == 0 || self.hyp_len == 0 {
            return 0.0;
        }
        let smooth = self.matches[1..].contains(&0);
        let mut log_sum = (self.matches[0] as f64 / self.totals[0] as f64).ln();
        for n in 1..4 {
            let (m, t) = (self.matches[n] as f64, self.totals[n] as f64);
            let p = if smooth { (m + 1.0) / (t + 1.0) } else { m / t };
            log_sum += p.ln();
        }
        let bp = if self.hyp_len >= self.ref_len {
            1.0
        } else {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        };
        100.0 * bp * (log_sum / 4.0).exp()
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

pub fn bleu_stats(hyps: &[Vec<String>], refs: &[Vec<String>]) -> Result<BleuStats, EvalError> {
    check_pair(hyps, refs)?;
    let mut s = BleuStats::default();
    for (h, r) in hyps.iter().zip(refs) {
        s.hyp_len += h.len();
        s.ref_len += r.len();
        for n in 1..=4 {
            let hc = ngram_counts(h, n);
            let rc = ngram_counts(r, n);
            s.totals[n - 1] += h.len().saturating_sub(n - 1);
            s.matches[n - 1] += hc
                .iter()
                .map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
        }
    }
    Ok(s)
}

/// Corpus-level BLEU-4 with uniform weights and brevity penalty.
pub fn bleu(hyps: &[Vec<String>], refs: &[Vec<String>]) -> Result<f64, EvalError> {
    Ok(bleu_stats(hyps, refs)?.score())
}
