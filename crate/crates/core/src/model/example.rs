use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{CoverIndex, GeneId, GeneRecord, Ontology, Term, TermId, Vocabulary};
use crate::graphs::{build_gene_graph, build_term_graph_indexed, GeneGraph, NeighborCaps, NodeKind, TermGraph, TermRole};

use super::{AblationFlags, ModelConfig, ModelError};

/// A neighboring term in the term graph.
#[derive(Clone, Debug)]
pub struct NeighborInput {
    pub term: TermId,
    pub role: TermRole,
    pub name: Vec<usize>,
    /// Indices into [`Example::genes`], in this term's annotation order.
    pub genes: Vec<usize>,
    pub graph: GeneGraph,
}

/// Everything the network reads for one term, resolved to vocabulary ids.
#[derive(Clone, Debug)]
pub struct Example {
    pub term: TermId,
    pub name: Vec<usize>,
    /// Distinct gene texts used anywhere in the example; the first
    /// `gene_graph.gene_count()` are the current term's genes in node order.
    pub genes: Vec<Vec<usize>>,
    pub gene_ids: Vec<GeneId>,
    pub gene_graph: GeneGraph,
    pub gene_edges: Arc<[(usize, usize, f64)]>,
    pub term_graph: Option<TermGraph>,
    pub term_edges: Arc<[(usize, usize, f64)]>,
    /// Term-graph nodes after the current one.
    pub neighbors: Vec<NeighborInput>,
    pub target: Option<Vec<usize>>,
}

impl Example {
    /// Names of the decoder memory rows under `flags`, in row order.
    pub fn memory_labels(&self, flags: &AblationFlags) -> Vec<String> {
        let mut labels = Vec::new();
        if !flags.use_gene_graph {
            labels.extend(
                self.gene_ids[..self.gene_graph.gene_count()]
                    .iter()
                    .map(|g| format!("GENE {g}")),
            );
            return labels;
        }
        labels.extend(self.gene_graph.nodes.iter().map(|n| {
            let kind = match n.kind {
                NodeKind::Term => "TERM",
                NodeKind::Gene => "GENE",
                NodeKind::Word => "WORD",
            };
            format!("{kind} {}", n.label)
        }));
        if let Some(tg) = &self.term_graph {
            for (t, role) in tg.nodes.iter().zip(&tg.roles) {
                let r = match role {
                    TermRole::Current => "CURRENT",
                    TermRole::Parent => "PARENT",
                    TermRole::Child => "CHILD",
                };
                labels.push(format!("{r} {t}"));
            }
        }
        labels
    }
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Resolves terms of one ontology into [`Example`]s.
pub struct ExampleBuilder<'a> {
    ontology: &'a Ontology,
    vocab: &'a Vocabulary,
    config: ModelConfig,
    index: CoverIndex,
}

impl<'a> ExampleBuilder<'a> {
    pub fn new(ontology: &'a Ontology, vocab: &'a Vocabulary, config: &ModelConfig) -> Self {
        Self {
            ontology,
            vocab,
            config: config.clone(),
            index: CoverIndex::new(ontology),
        }
    }

    pub fn ontology(&self) -> &Ontology {
        self.ontology
    }

    pub fn vocab(&self) -> &Vocabulary {
        self.vocab
    }

    /// The term with at most `max_genes` genes (a seeded uniform subsample
    /// kept in annotation order) and gene texts reduced to in-vocabulary
    /// tokens, truncated to `max_gene_tokens`.
    fn trimmed(&self, term: &Term) -> (Term, BTreeMap<GeneId, GeneRecord>) {
        let mut t = term.clone();
        let cap = self.config.max_genes;
        if t.gene_ids.len() > cap {
            let seed = self.config.gene_sample_seed ^ fnv1a(term.id.as_str());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut keep = rand::seq::index::sample(&mut rng, t.gene_ids.len(), cap).into_vec();
            keep.sort_unstable();
            t.gene_ids = keep.into_iter().map(|i| term.gene_ids[i].clone()).collect();
        }
        let mut records = BTreeMap::new();
        for g in &t.gene_ids {
            if let Some(r) = self.ontology.genes.get(g) {
                let text: Vec<String> = r
                    .text
                    .iter()
                    .filter(|w| self.vocab.contains(w))
                    .take(self.config.max_gene_tokens)
                    .cloned()
                    .collect();
                records.insert(g.clone(), GeneRecord { id: g.clone(), text });
            }
        }
        (t, records)
    }

    fn graph_for(&self, id: &TermId) -> Result<(Term, GeneGraph), ModelError> {
        let term = self.ontology.term(id)?;
        let (t, records) = self.trimmed(term);
        let graph = build_gene_graph(&t, &records, self.vocab)?;
        Ok((t, graph))
    }

    pub fn prepare(&self, id: &TermId) -> Result<Example, ModelError> {
        let (term, gene_graph) = self.graph_for(id)?;
        let mut genes: Vec<Vec<usize>> = gene_graph.gene_tokens.clone();
        let mut gene_ids: Vec<GeneId> = term.gene_ids.clone();
        let mut gene_pos: BTreeMap<GeneId, usize> =
            gene_ids.iter().enumerate().map(|(i, g)| (g.clone(), i)).collect();

        let flags = self.config.flags;
        let mut neighbors = Vec::new();
        let mut term_graph = None;
        if flags.uses_term_graph() {
            let caps = NeighborCaps {
                max_parents: if flags.use_parent_nodes { self.config.max_parents } else { 0 },
                max_children: if flags.use_child_nodes { self.config.max_children } else { 0 },
            };
            let tg = build_term_graph_indexed(&self.index, id, caps)?;
            for (u, &role) in tg.nodes.iter().zip(&tg.roles).skip(1) {
                let (ut, graph) = self.graph_for(u)?;
                let mut idx = Vec::with_capacity(ut.gene_ids.len());
                for (k, g) in ut.gene_ids.iter().enumerate() {
                    let pos = *gene_pos.entry(g.clone()).or_insert_with(|| {
                        genes.push(graph.gene_tokens[k].clone());
                        gene_ids.push(g.clone());
                        genes.len() - 1
                    });
                    idx.push(pos);
                }
                neighbors.push(NeighborInput {
                    term: u.clone(),
                    role,
                    name: self.vocab.encode(&ut.name),
                    genes: idx,
                    graph,
                });
            }
            term_graph = Some(tg);
        }

        let gene_edges: Arc<[(usize, usize, f64)]> = gene_graph.propagation_edges().into();
        let term_edges: Arc<[(usize, usize, f64)]> = term_graph
            .as_ref()
            .map(TermGraph::propagation_edges)
            .unwrap_or_default()
            .into();
        Ok(Example {
            term: id.clone(),
            name: self.vocab.encode(&term.name),
            genes,
            gene_ids,
            gene_graph,
            gene_edges,
            term_graph,
            term_edges,
            neighbors,
            target: term.description.as_ref().map(|d| self.vocab.encode(d)),
        })
    }

    pub fn prepare_all(&self, ids: &[TermId]) -> Result<Vec<Example>, ModelError> {
        ids.iter().map(|t| self.prepare(t)).collect()
    }
}
