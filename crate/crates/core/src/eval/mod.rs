//! Corpus metrics (BLEU-4, ROUGE-L, METEOR with exact and stem matching),
//! attention export, significance testing and report assembly.

mod attention;
mod bleu;
mod meteor;
mod report;
mod rouge;
mod stats;

pub use attention::{export_attention, rank_attention, AttendedNode, AttentionRecord};
pub use bleu::{bleu, bleu_stats, BleuStats};
pub use meteor::{align, meteor_em, meteor_sentence, stem, Alignment};
pub use report::{
    cross_domain_matrix, score_corpus, CrossDomainCell, CrossDomainMatrix, ExampleScore, ScoreReport, METEOR_VARIANT,
};
pub use rouge::{lcs_len, rouge_l, rouge_l_sentence, ROUGE_BETA};
pub use stats::{mean, paired_t_test, std_dev, TTest};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("{hypotheses} hypotheses for {references} references")]
    LengthMismatch { hypotheses: usize, references: usize },
    #[error("{0}")]
    Invalid(String),
}

pub(crate) fn check_pair<T>(hyps: &[T], refs: &[T]) -> Result<(), EvalError> {
    if hyps.len() != refs.len() {
        return Err(EvalError::LengthMismatch {
            hypotheses: hyps.len(),
            references: refs.len(),
        });
    }
    if hyps.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    Ok(())
}
