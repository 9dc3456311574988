use std::sync::OnceLock;

use rust_stemmers::{Algorithm, Stemmer};

use super::{check_pair, EvalError};

/// Search nodes explored per sentence pair before the best alignment found
/// so far is kept.
const SEARCH_BUDGET: usize = 200_000;

pub fn stem(word: &str) -> String {
    static STEMMER: OnceLock<Stemmer> = OnceLock::new();
    STEMMER
        .get_or_init(|| Stemmer::create(Algorithm::English))
        .stem(word)
        .into_owned()
}

/// One-to-one word alignment between a hypothesis and a reference.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Alignment {
    /// `(hyp index, ref index)` in hypothesis order.
    pub pairs: Vec<(usize, usize)>,
    pub exact: usize,
}

impl Alignment {
    pub fn matches(&self) -> usize {
        self.pairs.len()
    }

    /// Maximal runs that are contiguous and in the same order on both sides.
    pub fn chunks(&self) -> usize {
        let mut chunks = 0;
        let mut prev: Option<(usize, usize)> = None;
        for &(i, j) in &self.pairs {
            match prev {
                Some((pi, pj)) if i == pi + 1 && j == pj + 1 => {}
                _ => chunks += 1,
            }
            prev = Some((i, j));
        }
        chunks
    }

    fn key(&self) -> (usize, usize, std::cmp::Reverse<usize>) {
        (self.exact, self.matches(), std::cmp::Reverse(self.chunks()))
    }
}

struct Search<'a> {
    /// Per hypothesis word: `(ref index, exact)` candidates.
    cands: &'a [Vec<(usize, bool)>],
    /// Suffix bounds on further exact and total matches.
    exact_left: Vec<usize>,
    any_left: Vec<usize>,
    used: Vec<bool>,
    current: Alignment,
    best: Alignment,
    nodes: usize,
}

impl Search<'_> {
    fn run(&mut self, i: usize) {
        self.nodes += 1;
        if i == self.cands.len() {
            if self.current.key() > self.best.key() {
                self.best = self.current.clone();
            }
            return;
        }
        let bound = (
            self.current.exact + self.exact_left[i],
            self.current.matches() + self.any_left[i],
        );
        let best = (self.best.exact, self.best.matches());
        if bound < best || (bound == best && self.best.chunks() <= self.current.chunks().max(1)) {
            return;
        }
        let next_j = self.current.pairs.last().filter(|p| p.0 + 1 == i).map(|p| p.1 + 1);
        let mut order: Vec<(usize, bool)> = self.cands[i].clone();
        order.sort_by_key(|&(j, exact)| (!exact, Some(j) != next_j, j));
        for (j, exact) in order {
            if self.used[j] || self.nodes >= SEARCH_BUDGET {
                continue;
            }
            self.used[j] = true;
            self.current.pairs.push((i, j));
            self.current.exact += usize::from(exact);
            self.run(i + 1);
            self.current.exact -= usize::from(exact);
            self.current.pairs.pop();
            self.used[j] = false;
        }
        if self.nodes < SEARCH_BUDGET {
            self.run(i + 1);
        }
    }
}

/// Aligns words that are equal or share a stem, maximising exact matches,
/// then total matches, then minimising chunks.
pub fn align(hyp: &[String], reference: &[String]) -> Alignment {
    let hs: Vec<String> = hyp.iter().map(|w| stem(w)).collect();
    let rs: Vec<String> = reference.iter().map(|w| stem(w)).collect();
    let cands: Vec<Vec<(usize, bool)>> = (0..hyp.len())
        .map(|i| {
            (0..reference.len())
                .filter_map(|j| {
                    if hyp[i] == reference[j] {
                        Some((j, true))
                    } else if hs[i] == rs[j] {
                        Some((j, false))
                    } else {
                        None
                    }
                })
                .collect()
        })
        .collect();
    let n = hyp.len();
    let mut exact_left = vec![0; n + 1];
    let mut any_left = vec![0; n + 1];
    for i in (0..n).rev() {
        exact_left[i] = exact_left[i + 1] + usize::from(cands[i].iter().any(|c| c.1));
        any_left[i] = any_left[i + 1] + usize::from(!cands[i].is_empty());
    }
    let mut search = Search {
        cands: &cands,
        exact_left,
        any_left,
        used: vec![false; reference.len()],
        current: Alignment::default(),
        best: Alignment::default(),
        nodes: 0,
    };
    search.run(0);
    search.best
}

/// Sentence METEOR in `[0, 1]`: `Fmean = 10PR / (R + 9P)` times
/// `1 - 0.5 (chunks / matches)^3`. An identical pair scores 1.
pub fn meteor_sentence(hyp: &[String], reference: &[String]) -> f64 {
    let a = align(hyp, reference);
    let m = a.matches();
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / hyp.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let fmean = 10.0 * p * r / (r + 9.0 * p);
    let ch = a.chunks();
    let penalty = if ch == 1 && m == hyp.len() && m == reference.len() {
        0.0
    } else {
        0.5 * (ch as f64 / m as f64).powi(3)
    };
    fmean * (1.0 - penalty)
}

/// Mean sentence METEOR (exact and stem modules), scaled to `[0, 100]`.
pub fn meteor_em(hyps: &[Vec<String>], refs: &[Vec<String>]) -> Result<f64, EvalError> {
    check_pair(hyps, refs)?;
    let total: f64 = hyps.iter().zip(refs).map(|(h, r)| meteor_sentence(h, r)).sum();
    Ok(100.0 * total / hyps.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tokenize;

    #[test]
    fn stem_match() {
        assert_eq!(stem("binding"), stem("bind"));
        let a = align(&tokenize("binding"), &tokenize("bind"));
        assert_eq!((a.matches(), a.exact), (1, 0));
        assert!((meteor_sentence(&tokenize("binding"), &tokenize("bind")) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_preferred_over_stem() {
        let a = align(&tokenize("binds"), &tokenize("binding binds"));
        assert_eq!(a.pairs, vec![(0, 1)]);
        assert_eq!(a.exact, 1);
    }

    #[test]
    fn chunk_hand_value() {
        // "a b c d" vs "a c b d": 4 matches, chunks a | b | c | d
        let h = tokenize("a b c d");
        let r = tokenize("a c b d");
        let a = align(&h, &r);
        assert_eq!((a.matches(), a.chunks()), (4, 4));
        let expected = 1.0 - 0.5;
        assert!((meteor_sentence(&h, &r) - expected).abs() < 1e-12);
    }

    #[test]
    fn fewer_chunks_preferred() {
        // the repeated word can pair with either "the"; the second keeps one chunk
        let a = align(&tokenize("the cat"), &tokenize("the dog the cat"));
        assert_eq!(a.pairs, vec![(0, 2), (1, 3)]);
        assert_eq!(a.chunks(), 1);
    }
}
