//! The Graph-in-Graph network: a BiLSTM gene-text embedder, graph
//! convolution encoders over the gene graph and the term graph, and an
//! attention decoder (or an LSTM variant) reading their concatenated node
//! embeddings.

mod attention;
mod decoder;
mod embed;
mod encoder;
mod example;
mod generate;
mod network;

pub use attention::{causal_mask, multi_head_attention, Attention};
pub use decoder::{sinusoidal_positions, LstmState};
pub use encoder::graph_convolution;
pub use example::{Example, ExampleBuilder, NeighborInput};
pub use generate::{Generation, Strategy};
pub use network::{build_memory, GenerationModel, StepOutput};

use serde::{Deserialize, Serialize};

use crate::data::DataError;
use crate::graphs::GraphError;
use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("empty token sequence")]
    EmptySequence,
    #[error("decoding position {t} exceeds max_decode_len {max}")]
    TooLong { t: usize, max: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecoderKind {
    Transformer,
    Lstm,
}

/// Which graph components feed the decoder memory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationFlags {
    pub use_gene_graph: bool,
    pub use_parent_nodes: bool,
    pub use_child_nodes: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        Setting::Full.flags()
    }
}

impl AblationFlags {
    pub fn uses_term_graph(&self) -> bool {
        self.use_parent_nodes || self.use_child_nodes
    }

    pub fn setting(&self) -> Result<Setting, ModelError> {
        Setting::ALL
            .into_iter()
            .find(|s| s.flags() == *self)
            .ok_or_else(|| {
                ModelError::Config(format!(
                    "flags {self:?} do not name an ablation setting (term-graph nodes require the gene graph)"
                ))
            })
    }
}

/// The five named ablation settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    /// Raw gene-text embeddings as memory.
    Baseline,
    /// (a) encoded gene graph.
    GeneGraph,
    /// (b) gene graph plus parent terms.
    Parents,
    /// (c) gene graph plus child terms.
    Children,
    Full,
}

impl Setting {
    pub const ALL: [Setting; 5] = [
        Setting::Baseline,
        Setting::GeneGraph,
        Setting::Parents,
        Setting::Children,
        Setting::Full,
    ];

    pub fn flags(self) -> AblationFlags {
        let (g, p, c) = match self {
            Setting::Baseline => (false, false, false),
            Setting::GeneGraph => (true, false, false),
            Setting::Parents => (true, true, false),
            Setting::Children => (true, false, true),
            Setting::Full => (true, true, true),
        };
        AblationFlags {
            use_gene_graph: g,
            use_parent_nodes: p,
            use_child_nodes: c,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Setting::Baseline => "baseline",
            Setting::GeneGraph => "a",
            Setting::Parents => "b",
            Setting::Children => "c",
            Setting::Full => "full",
        }
    }

    pub fn from_label(s: &str) -> Option<Setting> {
        Setting::ALL.into_iter().find(|x| x.label() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Embedding width.
    pub d: usize,
    pub heads: usize,
    pub decoder_layers: usize,
    pub decoder_kind: DecoderKind,
    pub dropout: f64,
    /// Upper bound on generated tokens, end marker excluded.
    pub max_decode_len: usize,
    pub flags: AblationFlags,
    /// Propagation rounds per graph encoder.
    pub encoder_rounds: usize,
    pub ffn_multiplier: usize,
    pub max_gene_tokens: usize,
    pub max_genes: usize,
    pub max_parents: usize,
    pub max_children: usize,
    /// Seeds the gene subsample of terms with more than `max_genes` genes.
    pub gene_sample_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d: 64,
            heads: 4,
            decoder_layers: 2,
            decoder_kind: DecoderKind::Transformer,
            dropout: 0.1,
            max_decode_len: 48,
            flags: AblationFlags::default(),
            encoder_rounds: 1,
            ffn_multiplier: 4,
            max_gene_tokens: 64,
            max_genes: 32,
            max_parents: 8,
            max_children: 8,
            gene_sample_seed: 0,
        }
    }
}

impl ModelConfig {
    /// Full-size model: width 512 with 8 heads.
    pub fn large() -> Self {
        Self {
            d: 512,
            heads: 8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: String| Err(ModelError::Config(m));
        if self.d == 0 || self.heads == 0 || !self.d.is_multiple_of(self.heads) {
            return err(format!("d = {} must be a positive multiple of heads = {}", self.d, self.heads));
        }
        if !self.d.is_multiple_of(2) {
            return err(format!("d = {} must be even for the bidirectional gene embedder", self.d));
        }
        if self.decoder_layers == 0 || self.encoder_rounds == 0 || self.ffn_multiplier == 0 {
            return err("decoder_layers, encoder_rounds and ffn_multiplier must be positive".into());
        }
        if self.max_decode_len == 0 || self.max_gene_tokens == 0 || self.max_genes == 0 {
            return err("max_decode_len, max_gene_tokens and max_genes must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return err(format!("dropout {} outside [0, 1)", self.dropout));
        }
        self.flags.setting()?;
        Ok(())
    }

    pub fn with_setting(mut self, s: Setting) -> Self {
        self.flags = s.flags();
        self
    }
}
