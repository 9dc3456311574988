use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, TermId};

pub const DEFAULT_RATIOS: (f64, f64, f64) = (0.7, 0.1, 0.2);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub seed: u64,
    pub train: Vec<TermId>,
    pub validation: Vec<TermId>,
    pub test: Vec<TermId>,
}

/// Seeded shuffle of the (sorted, de-duplicated) terms. Train and
/// validation sizes are floored; the remainder goes to test.
pub fn split_dataset(
    described_terms: &[TermId],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetSplit, DataError> {
    let (tr, va, te) = ratios;
    if [tr, va, te].iter().any(|r| !(0.0..=1.0).contains(r)) || (tr + va + te - 1.0).abs() > 1e-9 {
        return Err(DataError::Invalid(format!(
            "split ratios {ratios:?} must be non-negative and sum to 1"
        )));
    }
    let mut terms = described_terms.to_vec();
    terms.sort();
    terms.dedup();
    if terms.len() < 3 {
        return Err(DataError::Invalid(format!(
            "need at least 3 terms to split, got {}",
            terms.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    terms.shuffle(&mut rng);

    let n = terms.len() as f64;
    // the epsilon absorbs representation error such as 0.7 * 100 < 70
    let n_train = (n * tr + 1e-9).floor() as usize;
    let n_val = (n * va + 1e-9).floor() as usize;
    let test = terms.split_off(n_train + n_val);
    let validation = terms.split_off(n_train);
    Ok(DatasetSplit {
        seed,
        train: terms,
        validation,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<TermId> {
        (0..n).map(|i| TermId::new(format!("T{i:04}"))).collect()
    }

    #[test]
    fn hundred_terms() {
        let s = split_dataset(&ids(100), DEFAULT_RATIOS, 1).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (70, 10, 20));
    }

    #[test]
    fn ten_terms_rounding() {
        let s = split_dataset(&ids(10), DEFAULT_RATIOS, 9).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (7, 1, 2));
    }

    #[test]
    fn deterministic_and_input_order_independent() {
        let a = split_dataset(&ids(57), DEFAULT_RATIOS, 5).unwrap();
        let mut rev = ids(57);
        rev.reverse();
        let b = split_dataset(&rev, DEFAULT_RATIOS, 5).unwrap();
        assert_eq!(a, b);
        let c = split_dataset(&ids(57), DEFAULT_RATIOS, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn errors() {
        assert!(split_dataset(&ids(2), DEFAULT_RATIOS, 0).is_err());
        assert!(split_dataset(&ids(20), (0.5, 0.5, 0.5), 0).is_err());
    }
}
