//! Experiment harnesses: corpus preparation, single training runs,
//! ablation sweeps over settings and seeds, cross-corpus evaluation and the
//! built-in self-test suites.

mod selftest;

pub use selftest::{gradient_check_config, gradient_suite, metric_suite, CheckOutcome};

use serde::{Deserialize, Serialize};

use crate::data::{build_vocabulary, split_dataset, DataError, DatasetSplit, Ontology, TermId, Vocabulary, DEFAULT_RATIOS};
use crate::eval::{
    cross_domain_matrix, mean, paired_t_test, score_corpus, std_dev, CrossDomainMatrix, EvalError, ScoreReport, TTest,
};
use crate::model::{Example, ExampleBuilder, GenerationModel, ModelConfig, ModelError, Setting, Strategy};
use crate::training::{TrainConfig, TrainError, TrainSummary, Trainer};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// An ontology with its split and a vocabulary built from every name and
/// gene text plus the training descriptions.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub name: String,
    pub ontology: Ontology,
    pub split: DatasetSplit,
    pub vocab: Vocabulary,
}

impl Corpus {
    pub fn prepare(name: &str, ontology: Ontology, split_seed: u64, min_count: usize) -> Result<Self, ExperimentError> {
        let split = split_dataset(&ontology.described_terms(), DEFAULT_RATIOS, split_seed)?;
        let vocab = build_vocabulary(&ontology.vocabulary_corpus(Some(&split.train)), min_count)?;
        Ok(Self {
            name: name.to_string(),
            ontology,
            split,
            vocab,
        })
    }

    pub fn examples(&self, cfg: &ModelConfig, ids: &[TermId]) -> Result<Vec<Example>, ExperimentError> {
        Ok(ExampleBuilder::new(&self.ontology, &self.vocab, cfg).prepare_all(ids)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

pub struct TrainedRun {
    pub model: GenerationModel,
    pub summary: TrainSummary,
    pub history: String,
}

/// Trains on the corpus's train split, selecting on its validation split.
/// The model is initialised from `spec.train.seed`.
pub fn train_run(corpus: &Corpus, spec: &RunSpec) -> Result<TrainedRun, ExperimentError> {
    spec.model.validate()?;
    let train = corpus.examples(&spec.model, &corpus.split.train)?;
    let validation = corpus.examples(&spec.model, &corpus.split.validation)?;
    let model = GenerationModel::new(spec.model.clone(), corpus.vocab.len(), spec.train.seed)?;
    let mut trainer = Trainer::new(model, spec.train.clone(), corpus.vocab.clone(), train, validation)?;
    let summary = trainer.run()?;
    let history = trainer.history_jsonl();
    Ok(TrainedRun {
        model: trainer.into_model(),
        summary,
        history,
    })
}

/// Generates for `ids` of `target` using `vocab` (the model's training
/// vocabulary) and scores against the raw descriptions.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    model: &GenerationModel,
    vocab: &Vocabulary,
    target: &Ontology,
    ids: &[TermId],
    strategy: Strategy,
    label: &str,
    split: &str,
    seed: u64,
) -> Result<ScoreReport, ExperimentError> {
    let builder = ExampleBuilder::new(target, vocab, model.config());
    let mut items = Vec::with_capacity(ids.len());
    for id in ids {
        let ex = builder.prepare(id)?;
        let g = model.generate(&ex, strategy)?;
        let reference = target
            .term(id)?
            .description
            .clone()
            .ok_or_else(|| ExperimentError::Config(format!("term {id} has no description")))?;
        items.push((id.to_string(), vocab.decode(&g.tokens), reference));
    }
    Ok(score_corpus(&items, label, split, seed)?)
}

/// Test-split scores of one `(setting, seed)` run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub setting: Setting,
    pub seed: u64,
    pub summary: TrainSummary,
    pub report: ScoreReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub setting: Setting,
    pub label: String,
    pub bleu: Vec<f64>,
    pub rouge_l: Vec<f64>,
    pub meteor: Vec<f64>,
    pub bleu_mean: f64,
    pub bleu_sd: f64,
    pub rouge_l_mean: f64,
    pub rouge_l_sd: f64,
    pub meteor_mean: f64,
    pub meteor_sd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub better: String,
    pub worse: String,
    /// Paired over seeds on BLEU.
    pub test: TTest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub corpus: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
    pub comparisons: Vec<Comparison>,
    pub meteor_variant: String,
}

const COMPARISONS: [(Setting, Setting); 5] = [
    (Setting::Full, Setting::Baseline),
    (Setting::Full, Setting::Children),
    (Setting::Children, Setting::GeneGraph),
    (Setting::GeneGraph, Setting::Baseline),
    (Setting::Children, Setting::Parents),
];

impl AblationReport {
    pub fn row(&self, s: Setting) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.setting == s)
    }

    pub fn comparison(&self, better: Setting, worse: Setting) -> Option<&Comparison> {
        self.comparisons
            .iter()
            .find(|c| c.better == better.label() && c.worse == worse.label())
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<10} {:>16} {:>16} {:>16}\n",
            "setting", "BLEU", "ROUGE-L", "METEOR"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<10} {:>16} {:>16} {:>16}\n",
                r.label,
                format!("{:.2} ± {:.2}", r.bleu_mean, r.bleu_sd),
                format!("{:.2} ± {:.2}", r.rouge_l_mean, r.rouge_l_sd),
                format!("{:.2} ± {:.2}", r.meteor_mean, r.meteor_sd),
            ));
        }
        for c in &self.comparisons {
            out.push_str(&format!(
                "{} vs {}: mean BLEU difference {:+.2}, t = {:.3}, p = {:.4}\n",
                c.better, c.worse, c.test.mean_diff, c.test.t, c.test.p
            ));
        }
        out.push_str(&format!(
            "{} seeds: {:?}; {}\n",
            self.seeds.len(),
            self.seeds,
            self.meteor_variant
        ));
        out
    }
}

/// Trains and tests every setting under every seed. `on_run` sees each
/// finished run together with its model.
pub fn run_ablation(
    corpus: &Corpus,
    base: &RunSpec,
    settings: &[Setting],
    seeds: &[u64],
    mut on_run: impl FnMut(&RunOutcome, &TrainedRun) -> Result<(), ExperimentError>,
) -> Result<AblationReport, ExperimentError> {
    if settings.is_empty() || seeds.is_empty() {
        return Err(ExperimentError::Config("ablation needs at least one setting and one seed".into()));
    }
    let mut rows = Vec::with_capacity(settings.len());
    for &setting in settings {
        let (mut b, mut r, mut m) = (Vec::new(), Vec::new(), Vec::new());
        for &seed in seeds {
            let spec = RunSpec {
                model: base.model.clone().with_setting(setting),
                train: TrainConfig {
                    seed,
                    ..base.train.clone()
                },
            };
            let run = train_run(corpus, &spec)?;
            let report = evaluate(
                &run.model,
                &corpus.vocab,
                &corpus.ontology,
                &corpus.split.test,
                Strategy::Greedy,
                setting.label(),
                "test",
                seed,
            )?;
            b.push(report.bleu);
            r.push(report.rouge_l);
            m.push(report.meteor);
            let outcome = RunOutcome {
                setting,
                seed,
                summary: run.summary.clone(),
                report,
            };
            on_run(&outcome, &run)?;
        }
        rows.push(AblationRow {
            setting,
            label: setting.label().to_string(),
            bleu_mean: mean(&b),
            bleu_sd: std_dev(&b),
            rouge_l_mean: mean(&r),
            rouge_l_sd: std_dev(&r),
            meteor_mean: mean(&m),
            meteor_sd: std_dev(&m),
            bleu: b,
            rouge_l: r,
            meteor: m,
        });
    }
    let mut comparisons = Vec::new();
    if seeds.len() >= 2 {
        for (hi, lo) in COMPARISONS {
            let find = |s: Setting| rows.iter().find(|r| r.setting == s);
            if let (Some(a), Some(b)) = (find(hi), find(lo)) {
                comparisons.push(Comparison {
                    better: hi.label().to_string(),
                    worse: lo.label().to_string(),
                    test: paired_t_test(&a.bleu, &b.bleu)?,
                });
            }
        }
    }
    Ok(AblationReport {
        corpus: corpus.name.clone(),
        seeds: seeds.to_vec(),
        rows,
        comparisons,
        meteor_variant: crate::eval::METEOR_VARIANT.to_string(),
    })
}

/// Trains one model per corpus and tests each on every corpus's test split.
pub fn run_cross_domain(
    corpora: &[Corpus],
    spec: &RunSpec,
    mut on_run: impl FnMut(&Corpus, &TrainedRun) -> Result<(), ExperimentError>,
) -> Result<CrossDomainMatrix, ExperimentError> {
    if corpora.len() < 2 {
        return Err(ExperimentError::Config("cross-domain evaluation needs at least two corpora".into()));
    }
    let mut cells = Vec::with_capacity(corpora.len());
    for source in corpora {
        let run = train_run(source, spec)?;
        on_run(source, &run)?;
        let mut row = Vec::with_capacity(corpora.len());
        for target in corpora {
            row.push(evaluate(
                &run.model,
                &source.vocab,
                &target.ontology,
                &target.split.test,
                Strategy::Greedy,
                &format!("{}->{}", source.name, target.name),
                "test",
                spec.train.seed,
            )?);
        }
        cells.push(row);
    }
    Ok(cross_domain_matrix(
        corpora.iter().map(|c| c.name.clone()).collect(),
        cells,
    )?)
}
