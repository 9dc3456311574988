use std::collections::BTreeMap;

use crate::data::{GeneId, GeneRecord, Term, Vocabulary, UNK};

use super::{dense_adjacency, edge_list, symmetric_edges, GraphError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Term,
    Gene,
    Word,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeDescriptor {
    pub kind: NodeKind,
    pub label: String,
    /// Vocabulary id for word nodes.
    pub token: Option<usize>,
}

/// Node order is `[term, genes..., words...]`; edges are stored once with
/// `i < j`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneGraph {
    pub nodes: Vec<NodeDescriptor>,
    pub edges: Vec<(usize, usize, f64)>,
    /// In-vocabulary token ids of each gene text, in gene-node order.
    pub gene_tokens: Vec<Vec<usize>>,
}

impl GeneGraph {
    pub const TERM_NODE: usize = 0;

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn gene_count(&self) -> usize {
        self.gene_tokens.len()
    }

    pub fn word_count(&self) -> usize {
        self.nodes.len() - 1 - self.gene_tokens.len()
    }

    /// Vocabulary ids of the word nodes in node order.
    pub fn word_tokens(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .filter_map(|n| n.token.filter(|_| n.kind == NodeKind::Word))
            .collect()
    }

    pub fn adjacency(&self) -> Vec<Vec<f64>> {
        dense_adjacency(self.nodes.len(), &self.edges)
    }

    pub fn propagation_edges(&self) -> Vec<(usize, usize, f64)> {
        symmetric_edges(&self.edges)
    }

    pub fn to_edge_list(&self) -> String {
        let labels = self.nodes.iter().map(|n| {
            let kind = match n.kind {
                NodeKind::Term => "TERM",
                NodeKind::Gene => "GENE",
                NodeKind::Word => "WORD",
            };
            format!("{kind} {}", n.label)
        });
        edge_list(labels, &self.edges)
    }
}

/// `c(g, w) / sqrt(d(g) d(w))`, where `c` counts occurrences of `w` in the
/// text of `g`, `d(g)` is the text length and `d(w)` the total count of `w`
/// over all given genes.
pub fn cooccurrence_weights<T: AsRef<str> + Ord>(
    gene_texts: &BTreeMap<GeneId, Vec<T>>,
) -> BTreeMap<(GeneId, String), f64> {
    let mut counts: BTreeMap<(&GeneId, &str), usize> = BTreeMap::new();
    let mut word_degree: BTreeMap<&str, usize> = BTreeMap::new();
    for (g, text) in gene_texts {
        for w in text {
            *counts.entry((g, w.as_ref())).or_default() += 1;
            *word_degree.entry(w.as_ref()).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .map(|((g, w), c)| {
            let dg = gene_texts[g].len() as f64;
            let dw = word_degree[w] as f64;
            ((g.clone(), w.to_string()), c as f64 / (dg * dw).sqrt())
        })
        .collect()
}

/// Builds the inner graph of `term`. Out-of-vocabulary tokens are dropped
/// before counting.
pub fn build_gene_graph(
    term: &Term,
    genes: &BTreeMap<GeneId, GeneRecord>,
    vocab: &Vocabulary,
) -> Result<GeneGraph, GraphError> {
    if term.gene_ids.is_empty() {
        return Err(GraphError::NoGenes(term.id.clone()));
    }
    let mut nodes = vec![NodeDescriptor {
        kind: NodeKind::Term,
        label: term.id.to_string(),
        token: None,
    }];
    let mut texts: BTreeMap<GeneId, Vec<&str>> = BTreeMap::new();
    let mut gene_tokens = Vec::with_capacity(term.gene_ids.len());
    let mut word_index: BTreeMap<&str, usize> = BTreeMap::new();
    let mut word_order: Vec<&str> = Vec::new();
    for g in &term.gene_ids {
        let record = genes.get(g).ok_or_else(|| GraphError::UnknownGene(g.clone()))?;
        let kept: Vec<&str> = record
            .text
            .iter()
            .filter(|t| vocab.contains(t))
            .map(String::as_str)
            .collect();
        for w in &kept {
            if !word_index.contains_key(w) {
                word_index.insert(w, word_order.len());
                word_order.push(w);
            }
        }
        // a text with no known token is embedded as a single UNK
        gene_tokens.push(if kept.is_empty() {
            vec![UNK]
        } else {
            kept.iter().map(|w| vocab.id(w)).collect()
        });
        texts.insert(g.clone(), kept);
        nodes.push(NodeDescriptor {
            kind: NodeKind::Gene,
            label: g.to_string(),
            token: None,
        });
    }
    let n_genes = term.gene_ids.len();
    for w in &word_order {
        nodes.push(NodeDescriptor {
            kind: NodeKind::Word,
            label: w.to_string(),
            token: Some(vocab.id(w)),
        });
    }

    let weights = cooccurrence_weights(&texts);
    let mut edges: Vec<(usize, usize, f64)> = (1..=n_genes).map(|i| (0, i, 1.0)).collect();
    for (gi, g) in term.gene_ids.iter().enumerate() {
        let mut row: Vec<(usize, f64)> = weights
            .range((g.clone(), String::new())..)
            .take_while(|((gg, _), _)| gg == g)
            .map(|((_, w), &wt)| (1 + n_genes + word_index[w.as_str()], wt))
            .collect();
        row.sort_by_key(|&(j, _)| j);
        edges.extend(row.into_iter().map(|(j, wt)| (1 + gi, j, wt)));
    }
    Ok(GeneGraph {
        nodes,
        edges,
        gene_tokens,
    })
}
