use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::{CoverIndex, GeneId, Ontology, TermId};

use super::{dense_adjacency, edge_list, symmetric_edges, GraphError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermRole {
    Current,
    Parent,
    Child,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeighborCaps {
    pub max_parents: usize,
    pub max_children: usize,
}

impl Default for NeighborCaps {
    fn default() -> Self {
        Self {
            max_parents: 8,
            max_children: 8,
        }
    }
}

/// Current term first, then parents, then children. All edge weights are 1.
#[derive(Clone, Debug, PartialEq)]
pub struct TermGraph {
    pub nodes: Vec<TermId>,
    pub roles: Vec<TermRole>,
    /// Undirected, `i < j`.
    pub edges: Vec<(usize, usize)>,
}

impl TermGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn weighted_edges(&self) -> Vec<(usize, usize, f64)> {
        self.edges.iter().map(|&(i, j)| (i, j, 1.0)).collect()
    }

    pub fn adjacency(&self) -> Vec<Vec<f64>> {
        dense_adjacency(self.nodes.len(), &self.weighted_edges())
    }

    pub fn propagation_edges(&self) -> Vec<(usize, usize, f64)> {
        symmetric_edges(&self.weighted_edges())
    }

    pub fn to_edge_list(&self) -> String {
        let labels = self
            .nodes
            .iter()
            .zip(&self.roles)
            .map(|(t, r)| format!("{r:?} {t}").to_uppercase());
        edge_list(labels, &self.weighted_edges())
    }
}

pub fn build_term_graph(o: &Ontology, t: &TermId, caps: NeighborCaps) -> Result<TermGraph, GraphError> {
    build_term_graph_indexed(&CoverIndex::new(o), t, caps)
}

/// Neighbors are ranked by gene-set size difference to the current term,
/// then by id, and truncated to `caps`. A term with the same gene set as
/// the current one is kept once, as a parent when parents are enabled.
/// Besides the edges to the current term, two included neighbors are joined
/// when one covers the other with no included term between them.
pub fn build_term_graph_indexed(
    index: &CoverIndex,
    t: &TermId,
    caps: NeighborCaps,
) -> Result<TermGraph, GraphError> {
    let neighbors = index
        .neighbors(t)
        .map_err(|_| GraphError::UnknownTerm(t.clone()))?;
    let own = index.gene_count(t).unwrap_or(0);
    let rank = |set: &BTreeSet<TermId>, exclude: &BTreeSet<TermId>, cap: usize| -> Vec<TermId> {
        let mut v: Vec<(usize, &TermId)> = set
            .iter()
            .filter(|u| !exclude.contains(*u))
            .map(|u| (index.gene_count(u).unwrap_or(0).abs_diff(own), u))
            .collect();
        v.sort();
        v.into_iter().take(cap).map(|(_, u)| u.clone()).collect()
    };
    let parents = rank(&neighbors.parents, &BTreeSet::new(), caps.max_parents);
    let taken: BTreeSet<TermId> = parents.iter().cloned().collect();
    let children = rank(&neighbors.children, &taken, caps.max_children);

    let mut nodes = vec![t.clone()];
    let mut roles = vec![TermRole::Current];
    nodes.extend(parents.iter().cloned());
    roles.extend(parents.iter().map(|_| TermRole::Parent));
    nodes.extend(children.iter().cloned());
    roles.extend(children.iter().map(|_| TermRole::Child));

    let sets: Vec<&BTreeSet<GeneId>> = nodes
        .iter()
        .map(|u| index.genes(u).expect("retrieved terms are indexed"))
        .collect();
    let covers = |a: usize, b: usize| sets[a].is_subset(sets[b]);
    let n = nodes.len();
    let mut edges: Vec<(usize, usize)> = (1..n).map(|j| (0, j)).collect();
    for i in 1..n {
        for j in i + 1..n {
            let (lo, hi) = if covers(i, j) {
                (i, j)
            } else if covers(j, i) {
                (j, i)
            } else {
                continue;
            };
            let between = (0..n).any(|k| k != lo && k != hi && covers(lo, k) && covers(k, hi));
            if !between {
                edges.push((i, j));
            }
        }
    }
    edges.sort();
    Ok(TermGraph { nodes, roles, edges })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{GeneRecord, Term};

    fn ontology(spec: &[(&str, &[&str])]) -> Ontology {
        let mut o = Ontology::default();
        for (t, genes) in spec {
            let mut term = Term::new(*t, vec![t.to_string()]);
            for g in *genes {
                term.annotate((*g).into());
                o.genes.insert(
                    (*g).into(),
                    GeneRecord {
                        id: (*g).into(),
                        text: vec!["x".into()],
                    },
                );
            }
            o.terms.insert(term.id.clone(), term);
        }
        o
    }

    #[test]
    fn isolated_term() {
        let o = ontology(&[("A", &["g1"]), ("B", &["g2"])]);
        let g = build_term_graph(&o, &"A".into(), NeighborCaps::default()).unwrap();
        assert_eq!(g.node_count(), 1);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn parent_and_child_form_a_star() {
        let o = ontology(&[("A", &["g1", "g2"]), ("B", &["g1", "g2", "g3"]), ("C", &["g1"])]);
        let g = build_term_graph(&o, &"A".into(), NeighborCaps::default()).unwrap();
        assert_eq!(g.nodes, vec![TermId::from("A"), "B".into(), "C".into()]);
        assert_eq!(g.roles, vec![TermRole::Current, TermRole::Parent, TermRole::Child]);
        assert_eq!(g.edges, vec![(0, 1), (0, 2)]);
    }

    #[test]
    fn caps_keep_closest_sizes() {
        let o = ontology(&[
            ("A", &["g1"]),
            ("P1", &["g1", "g2"]),
            ("P2", &["g1", "g2", "g3"]),
            ("P3", &["g1", "g3"]),
        ]);
        let caps = NeighborCaps {
            max_parents: 2,
            max_children: 0,
        };
        let g = build_term_graph(&o, &"A".into(), caps).unwrap();
        assert_eq!(g.nodes, vec![TermId::from("A"), "P1".into(), "P3".into()]);
        // P1 and P3 are incomparable
        assert_eq!(g.edges, vec![(0, 1), (0, 2)]);
    }

    #[test]
    fn nested_parents_are_chained() {
        let o = ontology(&[("A", &["g1"]), ("P1", &["g1", "g2"]), ("P2", &["g1", "g2", "g3"])]);
        let g = build_term_graph(&o, &"A".into(), NeighborCaps::default()).unwrap();
        assert_eq!(g.edges, vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn equal_gene_set_appears_once() {
        let o = ontology(&[("A", &["g1"]), ("B", &["g1"])]);
        let g = build_term_graph(&o, &"A".into(), NeighborCaps::default()).unwrap();
        assert_eq!(g.roles, vec![TermRole::Current, TermRole::Parent]);
        let caps = NeighborCaps {
            max_parents: 0,
            max_children: 8,
        };
        let g = build_term_graph(&o, &"A".into(), caps).unwrap();
        assert_eq!(g.roles, vec![TermRole::Current, TermRole::Child]);
    }

    #[test]
    fn unknown_term() {
        let o = ontology(&[("A", &["g1"])]);
        assert_eq!(
            build_term_graph(&o, &"Z".into(), NeighborCaps::default()),
            Err(GraphError::UnknownTerm("Z".into()))
        );
    }
}
