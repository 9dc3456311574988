use std::cmp::Ordering;

use crate::data::{BOS, EOS};
use crate::tensor::{Tape, Var};

use super::decoder::LstmState;
use super::{DecoderKind, Example, GenerationModel, ModelError, StepOutput};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    Greedy,
    /// Beam search keeping this many hypotheses, ranked by log-probability
    /// divided by token count (end marker included).
    Beam(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generation {
    /// Emitted tokens without the end marker.
    pub tokens: Vec<usize>,
    /// Memory attention for each emitted token.
    pub attention: Vec<Vec<f64>>,
    pub log_prob: f64,
    /// `log_prob` per scored token.
    pub score: f64,
    pub finished: bool,
}

#[derive(Clone)]
struct Hyp {
    tokens: Vec<usize>,
    attention: Vec<Vec<f64>>,
    log_prob: f64,
    state: LstmState,
}

impl Hyp {
    fn into_generation(self, finished: bool) -> Generation {
        let n = self.tokens.len() + usize::from(finished);
        Generation {
            score: if n == 0 { 0.0 } else { self.log_prob / n as f64 },
            tokens: self.tokens,
            attention: self.attention,
            log_prob: self.log_prob,
            finished,
        }
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

impl GenerationModel {
    fn step<'t>(&self, tape: &'t Tape, memory: Var<'t>, h: &Hyp) -> Result<(LstmState, StepOutput), ModelError> {
        match self.config().decoder_kind {
            DecoderKind::Transformer => {
                let mut prefix = Vec::with_capacity(h.tokens.len() + 1);
                prefix.push(BOS);
                prefix.extend_from_slice(&h.tokens);
                Ok((LstmState::default(), self.decode_step(tape, &prefix, memory)?))
            }
            DecoderKind::Lstm => {
                let last = h.tokens.last().copied().unwrap_or(BOS);
                self.lstm_decode_step(tape, &h.state, last, h.tokens.len(), memory)
            }
        }
    }

    /// Decodes from the begin marker until the end marker or
    /// `max_decode_len` tokens.
    pub fn generate(&self, ex: &Example, strategy: Strategy) -> Result<Generation, ModelError> {
        let tape = Tape::new();
        let memory = self.memory(&tape, ex)?;
        let start = Hyp {
            tokens: Vec::new(),
            attention: Vec::new(),
            log_prob: 0.0,
            state: LstmState::default(),
        };
        match strategy {
            Strategy::Greedy => self.greedy(&tape, memory, start),
            Strategy::Beam(k) => self.beam(&tape, memory, start, k.max(1)),
        }
    }

    fn greedy<'t>(&self, tape: &'t Tape, memory: Var<'t>, mut h: Hyp) -> Result<Generation, ModelError> {
        while h.tokens.len() < self.config().max_decode_len {
            let (state, out) = self.step(tape, memory, &h)?;
            let tok = argmax(&out.log_probs);
            h.log_prob += out.log_probs[tok];
            if tok == EOS {
                return Ok(h.into_generation(true));
            }
            h.tokens.push(tok);
            h.attention.push(out.attention);
            h.state = state;
        }
        Ok(h.into_generation(false))
    }

    fn beam<'t>(&self, tape: &'t Tape, memory: Var<'t>, start: Hyp, k: usize) -> Result<Generation, ModelError> {
        let mut alive = vec![start];
        let mut finished: Vec<Generation> = Vec::new();
        for _ in 0..self.config().max_decode_len {
            let mut expanded = Vec::with_capacity(alive.len());
            let mut cands: Vec<(f64, usize, usize)> = Vec::new();
            for (hi, h) in alive.iter().enumerate() {
                let (state, out) = self.step(tape, memory, h)?;
                for (tok, lp) in out.log_probs.iter().enumerate() {
                    cands.push((h.log_prob + lp, hi, tok));
                }
                expanded.push((state, out));
            }
            // every candidate of a step has the same length, so raw sums
            // rank them exactly as normalized scores would
            cands.sort_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .unwrap_or(Ordering::Equal)
                    .then(a.1.cmp(&b.1))
                    .then(a.2.cmp(&b.2))
            });
            let mut next = Vec::with_capacity(k);
            for &(lp, hi, tok) in cands.iter().take(k) {
                let parent = &alive[hi];
                let (state, out) = &expanded[hi];
                let mut h = Hyp {
                    tokens: parent.tokens.clone(),
                    attention: parent.attention.clone(),
                    log_prob: lp,
                    state: state.clone(),
                };
                if tok == EOS {
                    finished.push(h.into_generation(true));
                } else {
                    h.tokens.push(tok);
                    h.attention.push(out.attention.clone());
                    next.push(h);
                }
            }
            alive = next;
            if finished.len() >= k || alive.is_empty() {
                break;
            }
        }
        if finished.is_empty() {
            finished.extend(alive.into_iter().map(|h| h.into_generation(false)));
        }
        let mut best = 0;
        for (i, g) in finished.iter().enumerate() {
            if g.score > finished[best].score {
                best = i;
            }
        }
        Ok(finished.swap_remove(best))
    }
}
