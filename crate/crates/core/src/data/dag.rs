use std::collections::BTreeMap;

use super::{Ontology, TermId};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DagReport {
    Acyclic,
    /// Terms along one cycle, starting from the first term reached by the
    /// search; each term is a child of the next and the last of the first.
    Cycle(Vec<TermId>),
}

impl DagReport {
    pub fn is_acyclic(&self) -> bool {
        matches!(self, DagReport::Acyclic)
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Mark {
    New,
    Active,
    Done,
}

/// Checks that the `is-a` edges (child -> parent) form a DAG.
pub fn validate_dag(o: &Ontology) -> DagReport {
    let mut adj: BTreeMap<&TermId, Vec<&TermId>> = BTreeMap::new();
    for (c, p) in &o.isa_edges {
        adj.entry(c).or_default().push(p);
        adj.entry(p).or_default();
    }
    let mut mark: BTreeMap<&TermId, Mark> = adj.keys().map(|k| (*k, Mark::New)).collect();
    let starts: Vec<&TermId> = adj.keys().copied().collect();

    for start in starts {
        if mark[start] != Mark::New {
            continue;
        }
        // explicit stack of (node, next edge index)
        let mut stack: Vec<(&TermId, usize)> = vec![(start, 0)];
        mark.insert(start, Mark::Active);
        while let Some(top) = stack.last_mut() {
            let node = top.0;
            let out = &adj[node];
            if top.1 < out.len() {
                let succ = out[top.1];
                top.1 += 1;
                match mark[succ] {
                    Mark::New => {
                        mark.insert(succ, Mark::Active);
                        stack.push((succ, 0));
                    }
                    Mark::Active => {
                        let pos = stack.iter().position(|(n, _)| *n == succ).expect("on stack");
                        return DagReport::Cycle(stack[pos..].iter().map(|(n, _)| (*n).clone()).collect());
                    }
                    Mark::Done => {}
                }
            } else {
                mark.insert(node, Mark::Done);
                stack.pop();
            }
        }
    }
    DagReport::Acyclic
}
