use super::{check_pair, EvalError};

/// Recall weight of the F-measure, as in the COCO caption toolkit.
pub const ROUGE_BETA: f64 = 1.2;

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS F-measure of one pair in `[0, 1]`.
pub fn rouge_l_sentence(hyp: &[String], reference: &[String]) -> f64 {
    let lcs = lcs_len(hyp, reference);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / hyp.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * p * r / (r + b2 * p)
}

/// Mean sentence ROUGE-L, scaled to `[0, 100]`.
pub fn rouge_l(hyps: &[Vec<String>], refs: &[Vec<String>]) -> Result<f64, EvalError> {
    check_pair(hyps, refs)?;
    let total: f64 = hyps.iter().zip(refs).map(|(h, r)| rouge_l_sentence(h, r)).sum();
    Ok(100.0 * total / hyps.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tokenize;

    #[test]
    fn swapped_middle() {
        let h = tokenize("a b c d");
        let r = tokenize("a c b d");
        assert_eq!(lcs_len(&h, &r), 3);
        assert!((rouge_l_sentence(&h, &r) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn extremes() {
        let h = tokenize("a b c");
        assert!((rouge_l(std::slice::from_ref(&h), std::slice::from_ref(&h)).unwrap() - 100.0).abs() < 1e-9);
        assert_eq!(rouge_l(&[tokenize("a b")], &[tokenize("c d")]).unwrap(), 0.0);
        assert_eq!(rouge_l_sentence(&[], &tokenize("a")), 0.0);
    }
}
