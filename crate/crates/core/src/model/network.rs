use std::io::{Read, Write};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{BOS, EOS};
use crate::tensor::{read_container, write_container, DropoutMode, Init, ParamId, ParamStore, Tape, Tensor, Var};

use super::attention::{causal_mask, multi_head_attention, Attention};
use super::decoder::{sinusoidal_positions, LstmState};
use super::embed::{bilstm, lstm_cell, LstmWeights};
use super::encoder::graph_convolution;
use super::{DecoderKind, Example, ModelConfig, ModelError};

#[derive(Clone, Copy, Debug)]
struct LstmIds {
    w_x: ParamId,
    w_h: ParamId,
    b: ParamId,
}

#[derive(Clone, Copy, Debug)]
struct AttnIds {
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wo: ParamId,
}

#[derive(Clone, Copy, Debug)]
struct NormIds {
    gain: ParamId,
    bias: ParamId,
}

#[derive(Clone, Debug)]
enum LayerIds {
    Transformer {
        self_attn: AttnIds,
        ln1: NormIds,
        mem_attn: AttnIds,
        ln2: NormIds,
        w1: ParamId,
        b1: ParamId,
        w2: ParamId,
        b2: ParamId,
        ln3: NormIds,
    },
    Lstm {
        cell: LstmIds,
        ln1: NormIds,
        mem_attn: AttnIds,
        ln2: NormIds,
    },
}

#[derive(Clone, Debug)]
struct Ids {
    word: ParamId,
    gene_fwd: LstmIds,
    gene_bwd: LstmIds,
    gene_enc: Vec<ParamId>,
    term_enc: Vec<ParamId>,
    layers: Vec<LayerIds>,
    out_w: ParamId,
    out_b: ParamId,
}

/// Next-token distribution at one decoding position.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub probs: Vec<f64>,
    pub log_probs: Vec<f64>,
    /// Final-layer memory attention, averaged over heads.
    pub attention: Vec<f64>,
}

impl StepOutput {
    fn from_logits(logits: &[f64], attention: Vec<f64>) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        let log_z = max + total.ln();
        let log_probs: Vec<f64> = logits.iter().map(|l| l - log_z).collect();
        let probs = log_probs.iter().map(|l| l.exp()).collect();
        Self {
            probs,
            log_probs,
            attention,
        }
    }
}

/// All trainable parameters plus the configuration that shapes them.
#[derive(Clone, Debug)]
pub struct GenerationModel {
    config: ModelConfig,
    vocab_size: usize,
    store: ParamStore,
    ids: Ids,
}

struct Builder<'a> {
    store: &'a mut ParamStore,
    rng: ChaCha8Rng,
}

impl Builder<'_> {
    fn add(&mut self, name: String, shape: &[usize], init: Init) -> Result<ParamId, ModelError> {
        Ok(self.store.add(name, shape, init, &mut self.rng)?)
    }

    fn lstm(&mut self, prefix: &str, input: usize, hidden: usize) -> Result<LstmIds, ModelError> {
        Ok(LstmIds {
            w_x: self.add(format!("{prefix}.w_x"), &[input, 4 * hidden], Init::XavierUniform)?,
            w_h: self.add(format!("{prefix}.w_h"), &[hidden, 4 * hidden], Init::XavierUniform)?,
            b: self.add(format!("{prefix}.b"), &[1, 4 * hidden], Init::Zeros)?,
        })
    }

    fn attn(&mut self, prefix: &str, d: usize) -> Result<AttnIds, ModelError> {
        let mut w = |n: &str| self.add(format!("{prefix}.{n}"), &[d, d], Init::XavierUniform);
        Ok(AttnIds {
            wq: w("wq")?,
            wk: w("wk")?,
            wv: w("wv")?,
            wo: w("wo")?,
        })
    }

    fn norm(&mut self, prefix: &str, d: usize) -> Result<NormIds, ModelError> {
        Ok(NormIds {
            gain: self.add(format!("{prefix}.gain"), &[1, d], Init::Ones)?,
            bias: self.add(format!("{prefix}.bias"), &[1, d], Init::Zeros)?,
        })
    }
}

/// Per-call view binding parameters of `store` onto `tape`.
struct Ctx<'t, 'a> {
    tape: &'t Tape,
    store: &'a ParamStore,
    cfg: &'a ModelConfig,
    ids: &'a Ids,
    mode: DropoutMode,
}

impl<'t> Ctx<'t, '_> {
    fn p(&self, id: ParamId) -> Var<'t> {
        self.tape.param(self.store, id)
    }

    fn lstm(&self, ids: &LstmIds) -> LstmWeights<'t> {
        LstmWeights {
            w_x: self.p(ids.w_x),
            w_h: self.p(ids.w_h),
            b: self.p(ids.b),
        }
    }

    fn attn(&self, ids: &AttnIds) -> Attention<'t> {
        Attention {
            wq: self.p(ids.wq),
            wk: self.p(ids.wk),
            wv: self.p(ids.wv),
            wo: self.p(ids.wo),
        }
    }

    /// `layer_norm(x + dropout(y))`.
    fn sublayer(&self, x: Var<'t>, y: Var<'t>, ln: &NormIds) -> Result<Var<'t>, ModelError> {
        let y = y.dropout(self.cfg.dropout, self.mode)?;
        Ok(x.add(y)?.layer_norm(self.p(ln.gain), self.p(ln.bias))?)
    }

    fn gene_embeddings(&self, seqs: &[Vec<usize>]) -> Result<Var<'t>, ModelError> {
        let table = self.p(self.ids.word);
        bilstm(
            table,
            seqs,
            &self.lstm(&self.ids.gene_fwd),
            &self.lstm(&self.ids.gene_bwd),
            self.cfg.d / 2,
        )
    }

    fn name_embedding(&self, tokens: &[usize]) -> Result<Var<'t>, ModelError> {
        if tokens.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        Ok(self.p(self.ids.word).gather(tokens)?.mean_rows()?)
    }

    fn weights(&self, ids: &[ParamId]) -> Vec<Var<'t>> {
        ids.iter().map(|&i| self.p(i)).collect()
    }

    /// Initial gene-graph node matrix `[term; genes; words]`.
    fn gene_graph_nodes(
        &self,
        name: &[usize],
        gene_rows: Var<'t>,
        words: &[usize],
    ) -> Result<Var<'t>, ModelError> {
        let table = self.p(self.ids.word);
        let mut parts = vec![self.name_embedding(name)?, gene_rows];
        if !words.is_empty() {
            parts.push(table.gather(words)?);
        }
        Ok(Var::concat_rows(&parts)?)
    }

    fn encode_gene_graph(&self, ex: &Example, gene_embs: Var<'t>) -> Result<Var<'t>, ModelError> {
        let n_g = ex.gene_graph.gene_count();
        let v = self.gene_graph_nodes(&ex.name, gene_embs.slice_rows(0, n_g)?, &ex.gene_graph.word_tokens())?;
        Ok(graph_convolution(v, &ex.gene_edges, &self.weights(&self.ids.gene_enc))?)
    }

    /// Term-graph inputs: the encoded term node of each member's own gene
    /// graph, current term first.
    fn term_graph_inputs(
        &self,
        ex: &Example,
        gene_embs: Var<'t>,
        encoded: Var<'t>,
    ) -> Result<Var<'t>, ModelError> {
        let mut rows = vec![encoded.slice_rows(0, 1)?];
        if ex.neighbors.is_empty() {
            return Ok(rows[0]);
        }
        let w = self.weights(&self.ids.gene_enc);
        if w.len() == 1 {
            // After one round the term row depends only on the term name and
            // its genes, so all neighbors share one block-diagonal pass.
            let mut parts = Vec::new();
            let mut edges = Vec::new();
            let mut bases = Vec::new();
            let mut base = 0;
            for nb in &ex.neighbors {
                parts.push(self.name_embedding(&nb.name)?);
                parts.push(gene_embs.gather(&nb.genes)?);
                bases.push(base);
                for j in 0..nb.genes.len() {
                    edges.push((base, base + 1 + j, 1.0));
                }
                base += 1 + nb.genes.len();
            }
            let stacked = Var::concat_rows(&parts)?;
            let message = stacked
                .propagate(edges.into())?
                .gather(&bases)?
                .matmul(w[0])?
                .relu();
            rows.push(stacked.gather(&bases)?.add(message)?);
        } else {
            for nb in &ex.neighbors {
                let v = self.gene_graph_nodes(&nb.name, gene_embs.gather(&nb.genes)?, &nb.graph.word_tokens())?;
                let edges: Arc<[(usize, usize, f64)]> = nb.graph.propagation_edges().into();
                rows.push(graph_convolution(v, &edges, &w)?.slice_rows(0, 1)?);
            }
        }
        Ok(Var::concat_rows(&rows)?)
    }

    fn memory(&self, ex: &Example) -> Result<Var<'t>, ModelError> {
        let flags = self.cfg.flags;
        let gene_embs = self.gene_embeddings(&ex.genes)?;
        if !flags.use_gene_graph {
            return Ok(gene_embs.slice_rows(0, ex.gene_graph.gene_count())?);
        }
        let encoded = self.encode_gene_graph(ex, gene_embs)?;
        if !flags.uses_term_graph() {
            return Ok(encoded);
        }
        let v = self.term_graph_inputs(ex, gene_embs, encoded)?;
        let term = graph_convolution(v, &ex.term_edges, &self.weights(&self.ids.term_enc))?;
        build_memory(encoded, Some(term))
    }

    fn check_len(&self, n: usize) -> Result<(), ModelError> {
        if n > self.cfg.max_decode_len + 1 {
            return Err(ModelError::TooLong {
                t: n - 1,
                max: self.cfg.max_decode_len,
            });
        }
        Ok(())
    }

    fn memory_block(&self, x: Var<'t>, memory: Var<'t>, ids: &AttnIds, ln: &NormIds) -> Result<(Var<'t>, Tensor), ModelError> {
        let (m, w) = multi_head_attention(x, memory, &self.attn(ids), self.cfg.heads, None)?;
        Ok((self.sublayer(x, m, ln)?, w))
    }

    fn logits(&self, x: Var<'t>) -> Result<Var<'t>, ModelError> {
        Ok(x.matmul(self.p(self.ids.out_w))?.add_row(self.p(self.ids.out_b))?)
    }

    /// Teacher-forced pass over `inputs`; logits for every position and the
    /// final layer's memory attention.
    fn decode(&self, memory: Var<'t>, inputs: &[usize]) -> Result<(Var<'t>, Tensor), ModelError> {
        if inputs.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        self.check_len(inputs.len())?;
        let n = inputs.len();
        let d = self.cfg.d;
        let mut x = self
            .p(self.ids.word)
            .gather(inputs)?
            .add_const(&sinusoidal_positions(0, n, d))?;
        let mask = causal_mask(n);
        let mut attention = Tensor::zeros(&[n, memory.rows()]);
        for layer in &self.ids.layers {
            match layer {
                LayerIds::Transformer {
                    self_attn,
                    ln1,
                    mem_attn,
                    ln2,
                    w1,
                    b1,
                    w2,
                    b2,
                    ln3,
                } => {
                    let (a, _) = multi_head_attention(x, x, &self.attn(self_attn), self.cfg.heads, Some(&mask))?;
                    x = self.sublayer(x, a, ln1)?;
                    let (y, w) = self.memory_block(x, memory, mem_attn, ln2)?;
                    x = y;
                    attention = w;
                    let f = x
                        .matmul(self.p(*w1))?
                        .add_row(self.p(*b1))?
                        .relu()
                        .matmul(self.p(*w2))?
                        .add_row(self.p(*b2))?;
                    x = self.sublayer(x, f, ln3)?;
                }
                LayerIds::Lstm {
                    cell,
                    ln1,
                    mem_attn,
                    ln2,
                } => {
                    let w = self.lstm(cell);
                    let proj = x.matmul(w.w_x)?;
                    let zeros = Tensor::zeros(&[1, d]);
                    let mut h = self.tape.constant(zeros.clone());
                    let mut c = self.tape.constant(zeros);
                    let mut hs = Vec::with_capacity(n);
                    for t in 0..n {
                        (h, c) = lstm_cell(proj.slice_rows(t, 1)?, h, c, &w)?;
                        hs.push(h);
                    }
                    x = self.sublayer(x, Var::concat_rows(&hs)?, ln1)?;
                    let (y, a) = self.memory_block(x, memory, mem_attn, ln2)?;
                    x = y;
                    attention = a;
                }
            }
        }
        Ok((self.logits(x)?, attention))
    }

    /// One incremental step of the LSTM decoder at `position`.
    fn lstm_step(
        &self,
        state: &LstmState,
        token: usize,
        position: usize,
        memory: Var<'t>,
    ) -> Result<(LstmState, Var<'t>, Tensor), ModelError> {
        self.check_len(position + 1)?;
        let d = self.cfg.d;
        let mut x = self
            .p(self.ids.word)
            .gather(&[token])?
            .add_const(&sinusoidal_positions(position, 1, d))?;
        let mut next = Vec::with_capacity(self.ids.layers.len());
        let mut attention = Tensor::zeros(&[1, memory.rows()]);
        for (l, layer) in self.ids.layers.iter().enumerate() {
            let LayerIds::Lstm {
                cell,
                ln1,
                mem_attn,
                ln2,
            } = layer
            else {
                return Err(ModelError::Config("incremental LSTM step on a transformer decoder".into()));
            };
            let w = self.lstm(cell);
            let (h0, c0) = state
                .layers
                .get(l)
                .cloned()
                .unwrap_or_else(|| (Tensor::zeros(&[1, d]), Tensor::zeros(&[1, d])));
            let (h, c) = lstm_cell(x.matmul(w.w_x)?, self.tape.constant(h0), self.tape.constant(c0), &w)?;
            next.push((h.value().as_ref().clone(), c.value().as_ref().clone()));
            x = self.sublayer(x, h, ln1)?;
            let (y, a) = self.memory_block(x, memory, mem_attn, ln2)?;
            x = y;
            attention = a;
        }
        Ok((LstmState { layers: next }, self.logits(x)?, attention))
    }
}

/// Decoder memory: encoded gene-graph rows followed by encoded term-graph
/// rows.
pub fn build_memory<'t>(gene_part: Var<'t>, term_part: Option<Var<'t>>) -> Result<Var<'t>, ModelError> {
    match term_part {
        None => Ok(gene_part),
        Some(t) => {
            if t.cols() != gene_part.cols() {
                return Err(crate::tensor::TensorError::ShapeMismatch {
                    op: "build_memory",
                    left: gene_part.shape(),
                    right: t.shape(),
                }
                .into());
            }
            Ok(Var::concat_rows(&[gene_part, t])?)
        }
    }
}

impl GenerationModel {
    /// Freshly initialized parameters; every ablation setting creates the
    /// same parameters, so equal seeds give equal initial values.
    pub fn new(config: ModelConfig, vocab_size: usize, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        if vocab_size <= EOS {
            return Err(ModelError::Config(format!("vocabulary of {vocab_size} entries is too small")));
        }
        let d = config.d;
        let mut store = ParamStore::new();
        let mut b = Builder {
            store: &mut store,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let word = b.add("embed.word".into(), &[vocab_size, d], Init::Normal { std: 0.02 })?;
        let gene_fwd = b.lstm("gene_lstm.fwd", d, d / 2)?;
        let gene_bwd = b.lstm("gene_lstm.bwd", d, d / 2)?;
        let mut gene_enc = Vec::new();
        let mut term_enc = Vec::new();
        for r in 0..config.encoder_rounds {
            gene_enc.push(b.add(format!("gene_encoder.w{r}"), &[d, d], Init::XavierUniform)?);
        }
        for r in 0..config.encoder_rounds {
            term_enc.push(b.add(format!("term_encoder.w{r}"), &[d, d], Init::XavierUniform)?);
        }
        let hidden = d * config.ffn_multiplier;
        let mut layers = Vec::new();
        for l in 0..config.decoder_layers {
            let pre = format!("decoder.layer{l}");
            let layer = match config.decoder_kind {
                DecoderKind::Transformer => LayerIds::Transformer {
                    self_attn: b.attn(&format!("{pre}.self_attn"), d)?,
                    ln1: b.norm(&format!("{pre}.ln1"), d)?,
                    mem_attn: b.attn(&format!("{pre}.mem_attn"), d)?,
                    ln2: b.norm(&format!("{pre}.ln2"), d)?,
                    w1: b.add(format!("{pre}.ffn.w1"), &[d, hidden], Init::XavierUniform)?,
                    b1: b.add(format!("{pre}.ffn.b1"), &[1, hidden], Init::Zeros)?,
                    w2: b.add(format!("{pre}.ffn.w2"), &[hidden, d], Init::XavierUniform)?,
                    b2: b.add(format!("{pre}.ffn.b2"), &[1, d], Init::Zeros)?,
                    ln3: b.norm(&format!("{pre}.ln3"), d)?,
                },
                DecoderKind::Lstm => LayerIds::Lstm {
                    cell: b.lstm(&format!("{pre}.lstm"), d, d)?,
                    ln1: b.norm(&format!("{pre}.ln1"), d)?,
                    mem_attn: b.attn(&format!("{pre}.mem_attn"), d)?,
                    ln2: b.norm(&format!("{pre}.ln2"), d)?,
                },
            };
            layers.push(layer);
        }
        let out_w = b.add("output.w".into(), &[d, vocab_size], Init::XavierUniform)?;
        let out_b = b.add("output.b".into(), &[1, vocab_size], Init::Zeros)?;
        Ok(Self {
            config,
            vocab_size,
            store,
            ids: Ids {
                word,
                gene_fwd,
                gene_bwd,
                gene_enc,
                term_enc,
                layers,
                out_w,
                out_b,
            },
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn ctx<'t, 'a>(&'a self, tape: &'t Tape, store: &'a ParamStore, mode: DropoutMode) -> Ctx<'t, 'a> {
        Ctx {
            tape,
            store,
            cfg: &self.config,
            ids: &self.ids,
            mode,
        }
    }

    /// BiLSTM embedding of one gene text, `1 x d`.
    pub fn embed_gene_text<'t>(&self, tape: &'t Tape, tokens: &[usize]) -> Result<Var<'t>, ModelError> {
        self.ctx(tape, &self.store, DropoutMode::Eval)
            .gene_embeddings(&[tokens.to_vec()])
    }

    /// Encoded gene graph `V̂`, one row per gene-graph node.
    pub fn encode_gene_graph<'t>(&self, tape: &'t Tape, ex: &Example) -> Result<Var<'t>, ModelError> {
        let cx = self.ctx(tape, &self.store, DropoutMode::Eval);
        let genes = cx.gene_embeddings(&ex.genes)?;
        cx.encode_gene_graph(ex, genes)
    }

    /// Term-graph node inputs before term-graph encoding.
    pub fn term_graph_inputs<'t>(&self, tape: &'t Tape, ex: &Example) -> Result<Var<'t>, ModelError> {
        let cx = self.ctx(tape, &self.store, DropoutMode::Eval);
        let genes = cx.gene_embeddings(&ex.genes)?;
        let encoded = cx.encode_gene_graph(ex, genes)?;
        cx.term_graph_inputs(ex, genes, encoded)
    }

    /// Decoder memory for the configured ablation setting.
    pub fn memory<'t>(&self, tape: &'t Tape, ex: &Example) -> Result<Var<'t>, ModelError> {
        self.ctx(tape, &self.store, DropoutMode::Eval).memory(ex)
    }

    /// Summed teacher-forced cross-entropy of the target followed by the
    /// end marker.
    pub fn sequence_loss<'t>(&self, tape: &'t Tape, ex: &Example, mode: DropoutMode) -> Result<Var<'t>, ModelError> {
        self.loss_with(&self.store, tape, ex, mode)
    }

    /// [`Self::sequence_loss`] evaluated with the parameter values of
    /// `store`, which must have been cloned from this model.
    pub fn loss_with<'t>(
        &self,
        store: &ParamStore,
        tape: &'t Tape,
        ex: &Example,
        mode: DropoutMode,
    ) -> Result<Var<'t>, ModelError> {
        let target = ex.target.as_deref().ok_or(ModelError::EmptySequence)?;
        if target.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        let cx = self.ctx(tape, store, mode);
        let memory = cx.memory(ex)?;
        let mut inputs = Vec::with_capacity(target.len() + 1);
        inputs.push(BOS);
        inputs.extend_from_slice(target);
        let mut targets = target.to_vec();
        targets.push(EOS);
        let (logits, _) = cx.decode(memory, &inputs)?;
        Ok(logits.cross_entropy(&targets)?)
    }

    /// Teacher-forced logits (`positions x vocabulary`) and final-layer
    /// memory attention for an input prefix.
    pub fn decoder_logits<'t>(
        &self,
        tape: &'t Tape,
        memory: Var<'t>,
        inputs: &[usize],
        mode: DropoutMode,
    ) -> Result<(Var<'t>, Tensor), ModelError> {
        self.ctx(tape, &self.store, mode).decode(memory, inputs)
    }

    /// Distribution of the next token after `prefix` (which starts with the
    /// begin marker).
    pub fn decode_step<'t>(&self, tape: &'t Tape, prefix: &[usize], memory: Var<'t>) -> Result<StepOutput, ModelError> {
        let (logits, attention) = self.decoder_logits(tape, memory, prefix, DropoutMode::Eval)?;
        let last = logits.rows() - 1;
        let l = logits.value();
        Ok(StepOutput::from_logits(l.row(last), attention.row(last).to_vec()))
    }

    /// Feeds `token` at `position` to the LSTM decoder.
    pub fn lstm_decode_step<'t>(
        &self,
        tape: &'t Tape,
        state: &LstmState,
        token: usize,
        position: usize,
        memory: Var<'t>,
    ) -> Result<(LstmState, StepOutput), ModelError> {
        let cx = self.ctx(tape, &self.store, DropoutMode::Eval);
        let (next, logits, attention) = cx.lstm_step(state, token, position, memory)?;
        let l = logits.value();
        Ok((next, StepOutput::from_logits(l.row(0), attention.row(0).to_vec())))
    }

    pub fn write_params<W: Write>(&self, w: W) -> Result<(), ModelError> {
        Ok(write_container(w, &self.store.entries())?)
    }

    pub fn read_params<R: Read>(&mut self, r: R) -> Result<(), ModelError> {
        let entries = read_container(r)?;
        Ok(self.store.load_entries(&entries)?)
    }
}
