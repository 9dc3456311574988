//! Gene-cover neighborhoods: parents are terms whose gene sets contain the
//! current term's genes, children are terms whose gene sets are contained
//! in them. A term with an identical gene set is both.

use std::collections::{BTreeMap, BTreeSet};

use super::{DataError, GeneId, Ontology, TermId};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Neighbors {
    pub parents: BTreeSet<TermId>,
    pub children: BTreeSet<TermId>,
}

/// Inverted gene -> term index for repeated neighborhood queries.
#[derive(Clone, Debug)]
pub struct CoverIndex {
    ids: Vec<TermId>,
    position: BTreeMap<TermId, usize>,
    gene_sets: Vec<BTreeSet<GeneId>>,
    by_gene: BTreeMap<GeneId, Vec<usize>>,
}

impl CoverIndex {
    pub fn new(o: &Ontology) -> Self {
        let ids: Vec<TermId> = o.terms.keys().cloned().collect();
        let position = ids.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let gene_sets: Vec<BTreeSet<GeneId>> = o
            .terms
            .values()
            .map(|t| t.gene_ids.iter().cloned().collect())
            .collect();
        let mut by_gene: BTreeMap<GeneId, Vec<usize>> = BTreeMap::new();
        for (i, set) in gene_sets.iter().enumerate() {
            for g in set {
                by_gene.entry(g.clone()).or_default().push(i);
            }
        }
        Self {
            ids,
            position,
            gene_sets,
            by_gene,
        }
    }

    pub fn gene_count(&self, t: &TermId) -> Option<usize> {
        self.position.get(t).map(|&i| self.gene_sets[i].len())
    }

    pub fn genes(&self, t: &TermId) -> Option<&BTreeSet<GeneId>> {
        self.position.get(t).map(|&i| &self.gene_sets[i])
    }

    pub fn neighbors(&self, t: &TermId) -> Result<Neighbors, DataError> {
        let &me = self
            .position
            .get(t)
            .ok_or_else(|| DataError::UnknownTerm(t.clone()))?;
        let mine = &self.gene_sets[me];
        let mut shared = vec![0usize; self.ids.len()];
        for g in mine {
            for &u in &self.by_gene[g] {
                shared[u] += 1;
            }
        }
        let mut out = Neighbors::default();
        for (u, &count) in shared.iter().enumerate() {
            if u == me {
                continue;
            }
            if count == mine.len() {
                out.parents.insert(self.ids[u].clone());
            }
            if count == self.gene_sets[u].len() {
                out.children.insert(self.ids[u].clone());
            }
        }
        Ok(out)
    }

    /// Whether `a`'s genes are a subset of `b`'s.
    pub fn covered_by(&self, a: &TermId, b: &TermId) -> bool {
        match (self.genes(a), self.genes(b)) {
            (Some(x), Some(y)) => x.is_subset(y),
            _ => false,
        }
    }
}

pub fn retrieve_parents_children(o: &Ontology, t: &TermId) -> Result<Neighbors, DataError> {
    CoverIndex::new(o).neighbors(t)
}
