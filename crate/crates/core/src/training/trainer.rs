use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Vocabulary;
use crate::eval::{bleu, meteor_em, rouge_l};
use crate::model::{Example, GenerationModel, Strategy};
use crate::tensor::{read_container, write_container, DropoutMode, Tape, Tensor};

use super::{adam_step, clip_gradients, AdamState, TrainConfig, TrainError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub step: u64,
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub bleu: Option<f64>,
    pub rouge_l: Option<f64>,
    pub meteor: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestRecord {
    pub bleu: f64,
    pub loss: f64,
    pub step: u64,
}

impl BestRecord {
    fn improved_by(&self, bleu: f64, loss: f64) -> bool {
        bleu > self.bleu || (bleu == self.bleu && loss < self.loss)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub step: u64,
    /// Mean per-example loss of the batch.
    pub loss: f64,
    pub grad_norm: f64,
    pub validation: Option<HistoryRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub steps: u64,
    pub epochs: usize,
    pub stopped_early: bool,
    pub best: Option<BestRecord>,
    pub last_loss: f64,
}

/// Owns a model and its optimizer state over a fixed train/validation set.
///
/// Batches are consecutive slices of a per-epoch permutation seeded by
/// `(seed, epoch)`; the last batch of an epoch may be short. Each example in
/// a batch draws dropout masks from its own stream, so a trajectory depends
/// only on the configuration, the data and the step counter.
pub struct Trainer {
    model: GenerationModel,
    cfg: TrainConfig,
    vocab: Vocabulary,
    train: Vec<Example>,
    validation: Vec<Example>,
    adam: AdamState,
    epoch: usize,
    cursor: usize,
    order: Vec<usize>,
    epoch_loss: f64,
    epoch_examples: usize,
    bad_validations: usize,
    best: Option<BestRecord>,
    best_params: Option<Vec<(String, Tensor)>>,
    last_loss: f64,
    history: Vec<HistoryRecord>,
}

fn permutation(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    order.shuffle(&mut rng);
    order
}

impl Trainer {
    pub fn new(
        model: GenerationModel,
        cfg: TrainConfig,
        vocab: Vocabulary,
        train: Vec<Example>,
        validation: Vec<Example>,
    ) -> Result<Self, TrainError> {
        cfg.validate()?;
        if train.is_empty() {
            return Err(TrainError::Config("empty training set".into()));
        }
        if let Some(ex) = train.iter().chain(&validation).find(|e| e.target.as_ref().is_none_or(Vec::is_empty)) {
            return Err(TrainError::Config(format!("term {} has no target description", ex.term)));
        }
        let adam = AdamState::new(model.params());
        let order = permutation(train.len(), cfg.seed, 0);
        Ok(Self {
            model,
            cfg,
            vocab,
            train,
            validation,
            adam,
            epoch: 0,
            cursor: 0,
            order,
            epoch_loss: 0.0,
            epoch_examples: 0,
            bad_validations: 0,
            best: None,
            best_params: None,
            last_loss: f64::NAN,
            history: Vec::new(),
        })
    }

    pub fn model(&self) -> &GenerationModel {
        &self.model
    }

    pub fn into_model(self) -> GenerationModel {
        self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn step_count(&self) -> u64 {
        self.adam.step
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn best(&self) -> Option<BestRecord> {
        self.best
    }

    pub fn history(&self) -> &[HistoryRecord] {
        &self.history
    }

    pub fn adam(&self) -> &AdamState {
        &self.adam
    }

    pub fn stopped_early(&self) -> bool {
        self.cfg.patience > 0 && self.bad_validations >= self.cfg.patience
    }

    pub fn is_done(&self) -> bool {
        self.epoch >= self.cfg.epochs
            || self.stopped_early()
            || self.cfg.max_steps.is_some_and(|m| self.adam.step >= m)
    }

    /// Mean teacher-forced loss without dropout.
    pub fn mean_loss(&self, examples: &[Example]) -> Result<f64, TrainError> {
        let mut total = 0.0;
        for ex in examples {
            let tape = Tape::new();
            total += self.model.sequence_loss(&tape, ex, DropoutMode::Eval)?.item();
        }
        Ok(total / examples.len().max(1) as f64)
    }

    /// Summed loss of every example under the current parameters; the
    /// smoke property "loss decreases" is checked against this.
    pub fn batch_loss(&self, examples: &[Example]) -> Result<f64, TrainError> {
        Ok(self.mean_loss(examples)? * examples.len() as f64)
    }

    /// Greedy decoding scores on `examples`: `(bleu, rouge_l, meteor)`.
    pub fn generation_scores(&self, examples: &[Example]) -> Result<(f64, f64, f64), TrainError> {
        let mut hyps = Vec::with_capacity(examples.len());
        let mut refs = Vec::with_capacity(examples.len());
        for ex in examples {
            let g = self.model.generate(ex, Strategy::Greedy)?;
            hyps.push(self.vocab.decode(&g.tokens));
            refs.push(self.vocab.decode(ex.target.as_deref().unwrap_or_default()));
        }
        Ok((bleu(&hyps, &refs)?, rouge_l(&hyps, &refs)?, meteor_em(&hyps, &refs)?))
    }

    /// One optimizer step on the next batch.
    pub fn step(&mut self) -> Result<StepReport, TrainError> {
        let end = (self.cursor + self.cfg.batch_size).min(self.train.len());
        let batch: Vec<usize> = self.order[self.cursor..end].to_vec();
        let step = self.adam.step;
        self.model.params_mut().zero_grads();
        let mut total = 0.0;
        for (slot, &i) in batch.iter().enumerate() {
            let tape = Tape::new();
            let mode = DropoutMode::Train {
                seed: self.cfg.seed,
                step,
                stream: slot as u64,
            };
            let loss = self.model.sequence_loss(&tape, &self.train[i], mode)?;
            let value = loss.item();
            if !value.is_finite() {
                return Err(TrainError::Divergence { step });
            }
            total += value;
            let grads = tape.backward(loss);
            grads.accumulate_into(self.model.params_mut());
        }
        let scale = 1.0 / batch.len() as f64;
        let store = self.model.params_mut();
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            store.grad_mut(id).data_mut().iter_mut().for_each(|g| *g *= scale);
        }
        let grad_norm = clip_gradients(store, self.cfg.clip_norm);
        adam_step(store, &mut self.adam, &self.cfg)?;

        let loss = total * scale;
        self.last_loss = loss;
        self.epoch_loss += total;
        self.epoch_examples += batch.len();
        self.cursor = end;
        let mut validation = None;
        if self.cursor >= self.train.len() {
            self.history.push(HistoryRecord {
                step: self.adam.step,
                epoch: self.epoch,
                split: "train".into(),
                loss: self.epoch_loss / self.epoch_examples as f64,
                bleu: None,
                rouge_l: None,
                meteor: None,
            });
            self.epoch += 1;
            self.cursor = 0;
            self.epoch_loss = 0.0;
            self.epoch_examples = 0;
            self.order = permutation(self.train.len(), self.cfg.seed, self.epoch);
            if self.epoch.is_multiple_of(self.cfg.validate_every) && !self.validation.is_empty() {
                validation = Some(self.validate()?);
            }
        }
        Ok(StepReport {
            step: self.adam.step,
            loss,
            grad_norm,
            validation,
        })
    }

    fn validate(&mut self) -> Result<HistoryRecord, TrainError> {
        let loss = self.mean_loss(&self.validation)?;
        let (b, r, m) = self.generation_scores(&self.validation)?;
        let rec = HistoryRecord {
            step: self.adam.step,
            epoch: self.epoch - 1,
            split: "validation".into(),
            loss,
            bleu: Some(b),
            rouge_l: Some(r),
            meteor: Some(m),
        };
        let improved = self.best.is_none_or(|best| best.improved_by(b, loss));
        if improved {
            self.best = Some(BestRecord {
                bleu: b,
                loss,
                step: self.adam.step,
            });
            self.best_params = Some(self.model.params().entries());
            self.bad_validations = 0;
        } else {
            self.bad_validations += 1;
        }
        self.history.push(rec.clone());
        Ok(rec)
    }

    /// Steps until [`Self::is_done`] or `limit` more steps have run.
    pub fn run_steps(&mut self, limit: u64) -> Result<(), TrainError> {
        let mut n = 0;
        while n < limit && !self.is_done() {
            self.step()?;
            n += 1;
        }
        Ok(())
    }

    /// Trains to completion, then restores the best validated parameters.
    pub fn run(&mut self) -> Result<TrainSummary, TrainError> {
        self.run_steps(u64::MAX)?;
        self.restore_best()?;
        Ok(self.summary())
    }

    pub fn restore_best(&mut self) -> Result<(), TrainError> {
        if let Some(p) = &self.best_params {
            self.model.params_mut().load_entries(p)?;
        }
        Ok(())
    }

    pub fn summary(&self) -> TrainSummary {
        TrainSummary {
            steps: self.adam.step,
            epochs: self.epoch,
            stopped_early: self.stopped_early(),
            best: self.best,
            last_loss: self.last_loss,
        }
    }

    pub fn history_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.history {
            out.push_str(&serde_json::to_string(r).expect("history serializes"));
            out.push('\n');
        }
        out
    }

    /// Writes parameters, optimizer moments, the best snapshot and loop
    /// counters as one tensor container.
    pub fn save_checkpoint<W: Write>(&self, w: W) -> Result<(), TrainError> {
        let mut entries = Vec::new();
        let store = self.model.params();
        for (k, (_, p)) in store.iter().enumerate() {
            entries.push((format!("param/{}", p.name()), p.value().clone()));
            entries.push((format!("adam.m/{}", p.name()), self.adam.m[k].clone()));
            entries.push((format!("adam.v/{}", p.name()), self.adam.v[k].clone()));
        }
        for (name, t) in self.best_params.iter().flatten() {
            entries.push((format!("best/{name}"), t.clone()));
        }
        let best = self.best;
        let scalars = [
            ("step", self.adam.step as f64),
            ("epoch", self.epoch as f64),
            ("cursor", self.cursor as f64),
            ("epoch_loss", self.epoch_loss),
            ("epoch_examples", self.epoch_examples as f64),
            ("bad_validations", self.bad_validations as f64),
            ("last_loss", self.last_loss),
            ("best_bleu", best.map_or(f64::NAN, |b| b.bleu)),
            ("best_loss", best.map_or(f64::NAN, |b| b.loss)),
            ("best_step", best.map_or(f64::NAN, |b| b.step as f64)),
        ];
        for (name, v) in scalars {
            entries.push((format!("state/{name}"), Tensor::scalar(v)));
        }
        let mut history = Vec::new();
        for r in &self.history {
            history.extend([
                r.step as f64,
                r.epoch as f64,
                if r.split == "train" { 0.0 } else { 1.0 },
                r.loss,
                r.bleu.unwrap_or(f64::NAN),
                r.rouge_l.unwrap_or(f64::NAN),
                r.meteor.unwrap_or(f64::NAN),
            ]);
        }
        entries.push((
            "state/history".into(),
            Tensor::matrix(self.history.len(), 7, history),
        ));
        write_container(w, &entries)?;
        Ok(())
    }

    /// Restores a trainer saved by [`Self::save_checkpoint`]. `model` must
    /// have the same architecture; its parameter values are replaced.
    pub fn resume<R: Read>(
        model: GenerationModel,
        cfg: TrainConfig,
        vocab: Vocabulary,
        train: Vec<Example>,
        validation: Vec<Example>,
        r: R,
    ) -> Result<Self, TrainError> {
        let mut t = Self::new(model, cfg, vocab, train, validation)?;
        let mut groups: BTreeMap<String, Vec<(String, Tensor)>> = BTreeMap::new();
        for (name, tensor) in read_container(r)? {
            let (group, rest) = name
                .split_once('/')
                .ok_or_else(|| TrainError::Checkpoint(format!("unexpected entry {name:?}")))?;
            groups.entry(group.to_string()).or_default().push((rest.to_string(), tensor));
        }
        let group = |g: &str| groups.get(g).cloned().unwrap_or_default();
        t.model.params_mut().load_entries(&group("param"))?;
        let names: Vec<String> = t.model.params().iter().map(|(_, p)| p.name().to_string()).collect();
        for (key, slot) in [("adam.m", 0), ("adam.v", 1)] {
            let lookup: BTreeMap<String, Tensor> = group(key).into_iter().collect();
            for (k, name) in names.iter().enumerate() {
                let v = lookup
                    .get(name)
                    .ok_or_else(|| TrainError::Checkpoint(format!("missing {key}/{name}")))?;
                let target = if slot == 0 { &mut t.adam.m[k] } else { &mut t.adam.v[k] };
                if v.shape() != target.shape() {
                    return Err(TrainError::Checkpoint(format!("shape of {key}/{name}")));
                }
                *target = v.clone();
            }
        }
        let best = group("best");
        t.best_params = if best.is_empty() { None } else { Some(best) };
        let state: BTreeMap<String, Tensor> = group("state").into_iter().collect();
        let scalar = |n: &str| {
            state
                .get(n)
                .map(|v| v.data()[0])
                .ok_or_else(|| TrainError::Checkpoint(format!("missing state/{n}")))
        };
        t.adam.step = scalar("step")? as u64;
        t.epoch = scalar("epoch")? as usize;
        t.cursor = scalar("cursor")? as usize;
        t.epoch_loss = scalar("epoch_loss")?;
        t.epoch_examples = scalar("epoch_examples")? as usize;
        t.bad_validations = scalar("bad_validations")? as usize;
        t.last_loss = scalar("last_loss")?;
        let bb = scalar("best_bleu")?;
        t.best = if bb.is_nan() {
            None
        } else {
            Some(BestRecord {
                bleu: bb,
                loss: scalar("best_loss")?,
                step: scalar("best_step")? as u64,
            })
        };
        if let Some(h) = state.get("history") {
            t.history = (0..h.rows())
                .map(|i| {
                    let r = h.row(i);
                    let opt = |x: f64| if x.is_nan() { None } else { Some(x) };
                    HistoryRecord {
                        step: r[0] as u64,
                        epoch: r[1] as usize,
                        split: if r[2] == 0.0 { "train" } else { "validation" }.into(),
                        loss: r[3],
                        bleu: opt(r[4]),
                        rouge_l: opt(r[5]),
                        meteor: opt(r[6]),
                    }
                })
                .collect();
        }
        if t.cursor > t.train.len() {
            return Err(TrainError::Checkpoint("cursor beyond the training set".into()));
        }
        t.order = permutation(t.train.len(), t.cfg.seed, t.epoch);
        Ok(t)
    }
}
