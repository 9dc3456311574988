//! Ontology corpora: ingestion, validation, synthesis, splits and
//! vocabularies.

mod cover;
mod dag;
mod format;
mod split;
mod synth;
mod toy;
mod vocab;

pub use cover::{retrieve_parents_children, CoverIndex, Neighbors};
pub use dag::{validate_dag, DagReport};
pub use format::{parse_ontology, serialize_ontology};
pub use split::{split_dataset, DatasetSplit, DEFAULT_RATIOS};
pub use synth::{description_gene_overlap, synthesize_corpus, SynthConfig};
pub use toy::{transport_toy, TRANSPORT_TOY};
pub use vocab::{build_vocabulary, tokenize, Vocabulary, BOS, EOS, PAD, UNK};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: reference to undefined id {id:?}")]
    DanglingReference { line: usize, id: String },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("is-a edges contain a cycle: {0:?}")]
    Cycle(Vec<TermId>),
    #[error("unknown term {0}")]
    UnknownTerm(TermId),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }
    };
}

string_id!(TermId);
string_id!(GeneId);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Term {
    pub id: TermId,
    pub name: Vec<String>,
    /// Annotated genes in annotation order, without repeats.
    pub gene_ids: Vec<GeneId>,
    pub description: Option<Vec<String>>,
}

impl Term {
    pub fn new(id: impl Into<TermId>, name: Vec<String>) -> Self {
        Self {
            id: id.into(),
            name,
            gene_ids: Vec::new(),
            description: None,
        }
    }

    pub fn annotate(&mut self, gene: GeneId) {
        if !self.gene_ids.contains(&gene) {
            self.gene_ids.push(gene);
        }
    }
}

impl From<String> for TermId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

impl From<String> for GeneId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneRecord {
    pub id: GeneId,
    pub text: Vec<String>,
}

/// A corpus: terms, their `is-a` edges and the genes they annotate.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Ontology {
    pub terms: BTreeMap<TermId, Term>,
    /// `(child, parent)` pairs, sorted and without repeats.
    pub isa_edges: Vec<(TermId, TermId)>,
    pub genes: BTreeMap<GeneId, GeneRecord>,
}

impl Ontology {
    pub fn term(&self, id: &TermId) -> Result<&Term, DataError> {
        self.terms
            .get(id)
            .ok_or_else(|| DataError::UnknownTerm(id.clone()))
    }

    /// Terms carrying a description, in id order.
    pub fn described_terms(&self) -> Vec<TermId> {
        self.terms
            .values()
            .filter(|t| t.description.is_some())
            .map(|t| t.id.clone())
            .collect()
    }

    /// Checks the structural invariants: every reference resolves, texts
    /// and descriptions are non-empty, and `is-a` edges are acyclic.
    pub fn validate(&self) -> Result<(), DataError> {
        for (child, parent) in &self.isa_edges {
            for id in [child, parent] {
                if !self.terms.contains_key(id) {
                    return Err(DataError::DanglingReference {
                        line: 0,
                        id: id.to_string(),
                    });
                }
            }
        }
        for term in self.terms.values() {
            for g in &term.gene_ids {
                if !self.genes.contains_key(g) {
                    return Err(DataError::DanglingReference {
                        line: 0,
                        id: g.to_string(),
                    });
                }
            }
            if matches!(&term.description, Some(d) if d.is_empty()) {
                return Err(DataError::Invalid(format!("term {} has an empty description", term.id)));
            }
        }
        for gene in self.genes.values() {
            if gene.text.is_empty() {
                return Err(DataError::Invalid(format!("gene {} has empty text", gene.id)));
            }
        }
        match validate_dag(self) {
            DagReport::Acyclic => Ok(()),
            DagReport::Cycle(c) => Err(DataError::Cycle(c)),
        }
    }

    /// Token sequences a vocabulary is built from: every term name, every
    /// gene text, and the descriptions of `described` (all described terms
    /// when `None`).
    pub fn vocabulary_corpus(&self, described: Option<&[TermId]>) -> Vec<Vec<String>> {
        let mut corpus: Vec<Vec<String>> = self.terms.values().map(|t| t.name.clone()).collect();
        corpus.extend(self.genes.values().map(|g| g.text.clone()));
        match described {
            Some(ids) => corpus.extend(
                ids.iter()
                    .filter_map(|id| self.terms.get(id).and_then(|t| t.description.clone())),
            ),
            None => corpus.extend(self.terms.values().filter_map(|t| t.description.clone())),
        }
        corpus
    }

    /// Summary figures: term count, gene count and mean description length.
    pub fn stats(&self) -> CorpusStats {
        let described: Vec<usize> = self
            .terms
            .values()
            .filter_map(|t| t.description.as_ref().map(Vec::len))
            .collect();
        let mean = if described.is_empty() {
            0.0
        } else {
            described.iter().sum::<usize>() as f64 / described.len() as f64
        };
        CorpusStats {
            terms: self.terms.len(),
            genes: self.genes.len(),
            described_terms: described.len(),
            isa_edges: self.isa_edges.len(),
            mean_description_length: mean,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub terms: usize,
    pub genes: usize,
    pub described_terms: usize,
    pub isa_edges: usize,
    pub mean_description_length: f64,
}
