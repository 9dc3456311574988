use serde::{Deserialize, Serialize};

use crate::data::{TermId, Vocabulary};
use crate::model::{ExampleBuilder, Generation, GenerationModel, ModelError, Strategy};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttendedNode {
    pub row: usize,
    pub label: String,
    pub weight: f64,
}

/// Top memory rows for one emitted token.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionRecord {
    pub term: String,
    pub position: usize,
    pub token: String,
    pub row_sum: f64,
    pub nodes: Vec<AttendedNode>,
}

/// Ranks each step's attention row, largest weight first and lower row
/// index first on ties.
pub fn rank_attention(
    term: &TermId,
    generation: &Generation,
    labels: &[String],
    vocab: &Vocabulary,
    k: usize,
) -> Vec<AttentionRecord> {
    generation
        .tokens
        .iter()
        .zip(&generation.attention)
        .enumerate()
        .map(|(position, (&tok, row))| {
            let mut order: Vec<usize> = (0..row.len()).collect();
            order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
            AttentionRecord {
                term: term.to_string(),
                position,
                token: vocab.token(tok).to_string(),
                row_sum: row.iter().sum(),
                nodes: order
                    .into_iter()
                    .take(k)
                    .map(|r| AttendedNode {
                        row: r,
                        label: labels.get(r).cloned().unwrap_or_else(|| format!("ROW {r}")),
                        weight: row[r],
                    })
                    .collect(),
            }
        })
        .collect()
}

/// Generates for `term` and reports the `k` most attended memory rows of
/// the final decoder layer for each emitted token.
pub fn export_attention(
    model: &GenerationModel,
    builder: &ExampleBuilder<'_>,
    term: &TermId,
    k: usize,
    strategy: Strategy,
) -> Result<Vec<AttentionRecord>, ModelError> {
    let ex = builder.prepare(term)?;
    let generation = model.generate(&ex, strategy)?;
    let labels = ex.memory_labels(&model.config().flags);
    Ok(rank_attention(term, &generation, &labels, builder.vocab(), k))
}
