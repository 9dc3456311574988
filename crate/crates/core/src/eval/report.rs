use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{bleu, bleu_stats, meteor_em, meteor_sentence, rouge_l, rouge_l_sentence, EvalError};

/// Name of the METEOR variant carried in every report.
pub const METEOR_VARIANT: &str = "meteor-exact+stem (no synonym stage)";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleScore {
    pub term: String,
    pub hypothesis: String,
    pub reference: String,
    /// Sentence-level BLEU-4 with the corpus smoothing rule.
    pub bleu: f64,
    pub rouge_l: f64,
    pub meteor: f64,
}

/// Corpus scores in `[0, 100]`. BLEU is computed from pooled n-gram
/// counts; ROUGE-L and METEOR are means of sentence scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub model: String,
    pub split: String,
    pub seed: u64,
    pub bleu: f64,
    pub rouge_l: f64,
    pub meteor: f64,
    pub meteor_variant: String,
    pub examples: Vec<ExampleScore>,
}

impl ScoreReport {
    pub fn summary_line(&self) -> String {
        format!(
            "{} [{} seed {}] BLEU {:.2}  ROUGE-L {:.2}  METEOR {:.2}  ({}, n={})",
            self.model,
            self.split,
            self.seed,
            self.bleu,
            self.rouge_l,
            self.meteor,
            self.meteor_variant,
            self.examples.len()
        )
    }

    /// One JSON object per example, then a summary object without examples.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.examples {
            out.push_str(&serde_json::to_string(e).expect("example serializes"));
            out.push('\n');
        }
        let summary = ScoreReport {
            examples: Vec::new(),
            ..self.clone()
        };
        out.push_str(&serde_json::to_string(&summary).expect("report serializes"));
        out.push('\n');
        out
    }
}

/// Scores `(term, hypothesis, reference)` triples.
pub fn score_corpus(
    items: &[(String, Vec<String>, Vec<String>)],
    model: &str,
    split: &str,
    seed: u64,
) -> Result<ScoreReport, EvalError> {
    if items.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let hyps: Vec<Vec<String>> = items.iter().map(|i| i.1.clone()).collect();
    let refs: Vec<Vec<String>> = items.iter().map(|i| i.2.clone()).collect();
    let examples = items
        .iter()
        .map(|(term, h, r)| {
            let pair_bleu = bleu_stats(std::slice::from_ref(h), std::slice::from_ref(r))?.score();
            Ok(ExampleScore {
                term: term.clone(),
                hypothesis: h.join(" "),
                reference: r.join(" "),
                bleu: pair_bleu,
                rouge_l: 100.0 * rouge_l_sentence(h, r),
                meteor: 100.0 * meteor_sentence(h, r),
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(ScoreReport {
        model: model.to_string(),
        split: split.to_string(),
        seed,
        bleu: bleu(&hyps, &refs)?,
        rouge_l: rouge_l(&hyps, &refs)?,
        meteor: meteor_em(&hyps, &refs)?,
        meteor_variant: METEOR_VARIANT.to_string(),
        examples,
    })
}

/// Row `i` holds the model trained on corpus `i`; column `j` is scored on
/// corpus `j`. Off-diagonal cells are out of domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossDomainMatrix {
    pub corpora: Vec<String>,
    pub cells: Vec<Vec<ScoreReport>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossDomainCell {
    pub train: String,
    pub test: String,
    pub out_of_domain: bool,
    pub bleu: f64,
    pub rouge_l: f64,
    pub meteor: f64,
    /// In-domain score on the same test corpus minus this cell's score.
    pub delta_bleu: f64,
    pub delta_rouge_l: f64,
    pub delta_meteor: f64,
}

pub fn cross_domain_matrix(corpora: Vec<String>, cells: Vec<Vec<ScoreReport>>) -> Result<CrossDomainMatrix, EvalError> {
    let n = corpora.len();
    if n == 0 {
        return Err(EvalError::EmptyCorpus);
    }
    if cells.len() != n || cells.iter().any(|row| row.len() != n) {
        return Err(EvalError::Invalid(format!(
            "cross-domain matrix for {n} corpora needs {n}x{n} cells"
        )));
    }
    Ok(CrossDomainMatrix { corpora, cells })
}

impl CrossDomainMatrix {
    pub fn size(&self) -> usize {
        self.corpora.len()
    }

    pub fn cell(&self, train: usize, test: usize) -> CrossDomainCell {
        let c = &self.cells[train][test];
        let d = &self.cells[test][test];
        CrossDomainCell {
            train: self.corpora[train].clone(),
            test: self.corpora[test].clone(),
            out_of_domain: train != test,
            bleu: c.bleu,
            rouge_l: c.rouge_l,
            meteor: c.meteor,
            delta_bleu: d.bleu - c.bleu,
            delta_rouge_l: d.rouge_l - c.rouge_l,
            delta_meteor: d.meteor - c.meteor,
        }
    }

    pub fn records(&self) -> Vec<CrossDomainCell> {
        let n = self.size();
        (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| self.cell(i, j)).collect()
    }

    pub fn to_table(&self) -> String {
        let mut out = String::from("train \\ test");
        for c in &self.corpora {
            let _ = write!(out, " | {c:>24}");
        }
        out.push('\n');
        for i in 0..self.size() {
            let _ = write!(out, "{:<12}", self.corpora[i]);
            for j in 0..self.size() {
                let c = self.cell(i, j);
                let cell = if c.out_of_domain {
                    format!("{:.2} ({:+.2})", c.bleu, -c.delta_bleu)
                } else {
                    format!("{:.2}", c.bleu)
                };
                let _ = write!(out, " | {cell:>24}");
            }
            out.push('\n');
        }
        let _ = writeln!(out, "BLEU; out-of-domain cells show the change from the in-domain model. {METEOR_VARIANT}");
        out
    }
}
