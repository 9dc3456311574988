//! Per-example graphs: the inner gene graph (term, genes, words) and the
//! outer term graph (current term and its gene-cover neighbors).

mod gene;
mod term;

pub use gene::{build_gene_graph, cooccurrence_weights, GeneGraph, NodeDescriptor, NodeKind};
pub use term::{build_term_graph, build_term_graph_indexed, NeighborCaps, TermGraph, TermRole};

use crate::data::{GeneId, TermId};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("unknown term {0}")]
    UnknownTerm(TermId),
    #[error("unknown gene {0}")]
    UnknownGene(GeneId),
    #[error("term {0} has no annotated genes")]
    NoGenes(TermId),
}

/// Undirected edges `(i, j, w)` with `i < j` expanded into both directions,
/// the form consumed by [`crate::tensor::Var::propagate`].
pub fn symmetric_edges(edges: &[(usize, usize, f64)]) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::with_capacity(edges.len() * 2);
    for &(i, j, w) in edges {
        out.push((i, j, w));
        out.push((j, i, w));
    }
    out
}

/// Dense symmetric adjacency from undirected edges.
pub fn dense_adjacency(n: usize, edges: &[(usize, usize, f64)]) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0; n]; n];
    for &(i, j, w) in edges {
        a[i][j] = w;
        a[j][i] = w;
    }
    a
}

/// Text dump: one `node <index> <label>` line per node followed by one
/// `<i> <j> <weight>` line per undirected edge.
pub(crate) fn edge_list<'a>(
    labels: impl Iterator<Item = String> + 'a,
    edges: &[(usize, usize, f64)],
) -> String {
    let mut out = String::new();
    for (i, label) in labels.enumerate() {
        out.push_str(&format!("node {i} {label}\n"));
    }
    for &(i, j, w) in edges {
        out.push_str(&format!("{i} {j} {w}\n"));
    }
    out
}
