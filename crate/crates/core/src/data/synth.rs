//! Synthetic corpora with controllable phrase reuse.
//!
//! Terms form a forest of complete trees (filled breadth-first until the
//! requested term count is reached). Every term owns a few genes and
//! inherits all genes of its descendants, so gene-cover retrieval recovers
//! the tree: ancestors are parents, descendants are children.
//!
//! Each tree has a topic word shared by its term names and gene texts, and
//! each term has a qualifier drawn from a pool specific to its depth and
//! sibling slot. A description reads
//!
//! ```text
//! <qualifier> <topic> activity that <keywords...> [within <parent qualifier> <topic>]
//!     [including <child qualifier> and <child qualifier> processes]
//! ```
//!
//! where the keywords are the most frequent content words of the term's
//! gene texts. The qualifier of a term appears in its name, so the parent
//! and child clauses can only be reproduced from neighboring terms.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GeneId, GeneRecord, Ontology, Term, TermId};

const CONSONANTS: [&str; 4] = ["bdgkl", "mnprs", "tvfhz", "jcqwx"];
const VOWELS: &str = "aeiou";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub terms: usize,
    pub genes: usize,
    pub branching: usize,
    pub depth: usize,
    /// Distinct content words available to gene texts.
    pub content_words: usize,
    /// Topic-specific content words per tree.
    pub theme_words: usize,
    pub words_per_gene: usize,
    pub filler_words: usize,
    pub fillers_per_gene: usize,
    pub qualifiers_per_slot: usize,
    pub keywords: usize,
    /// Minimum token recall of each description against its gene texts.
    pub min_overlap: f64,
    /// Selects a disjoint word inventory, `0..4`.
    pub lexicon: usize,
    pub id_prefix: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            terms: 200,
            genes: 300,
            branching: 2,
            depth: 4,
            content_words: 60,
            theme_words: 6,
            words_per_gene: 4,
            filler_words: 8,
            fillers_per_gene: 2,
            qualifiers_per_slot: 3,
            keywords: 2,
            min_overlap: 0.2,
            lexicon: 0,
            id_prefix: "GO".into(),
        }
    }
}

impl SynthConfig {
    fn check(&self) -> Result<(), super::DataError> {
        let positive = [
            ("terms", self.terms),
            ("genes", self.genes),
            ("branching", self.branching),
            ("depth", self.depth),
            ("content_words", self.content_words),
            ("words_per_gene", self.words_per_gene),
            ("qualifiers_per_slot", self.qualifiers_per_slot),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(super::DataError::Invalid(format!("synth: {name} must be positive")));
            }
        }
        if self.genes < self.terms {
            return Err(super::DataError::Invalid(format!(
                "synth: need at least one gene per term ({} genes for {} terms)",
                self.genes, self.terms
            )));
        }
        if self.lexicon >= CONSONANTS.len() {
            return Err(super::DataError::Invalid(format!(
                "synth: lexicon must be below {}",
                CONSONANTS.len()
            )));
        }
        if !(0.0..=1.0).contains(&self.min_overlap) {
            return Err(super::DataError::Invalid("synth: min_overlap must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Draws distinct pseudo-words of three consonant-vowel syllables.
struct WordSource {
    consonants: Vec<char>,
    vowels: Vec<char>,
    used: BTreeSet<String>,
}

impl WordSource {
    fn new(lexicon: usize) -> Self {
        Self {
            consonants: CONSONANTS[lexicon].chars().collect(),
            vowels: VOWELS.chars().collect(),
            used: BTreeSet::new(),
        }
    }

    fn fresh(&mut self, rng: &mut ChaCha8Rng) -> String {
        loop {
            let mut w = String::with_capacity(6);
            for _ in 0..3 {
                w.push(self.consonants[rng.gen_range(0..self.consonants.len())]);
                w.push(self.vowels[rng.gen_range(0..self.vowels.len())]);
            }
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn many(&mut self, n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
        (0..n).map(|_| self.fresh(rng)).collect()
    }
}

struct Node {
    tree: usize,
    level: usize,
    slot: usize,
    parent: Option<usize>,
    children: Vec<usize>,
}

fn layout(cfg: &SynthConfig) -> Vec<Node> {
    let mut nodes: Vec<Node> = Vec::with_capacity(cfg.terms);
    let mut tree = 0;
    while nodes.len() < cfg.terms {
        let root = nodes.len();
        nodes.push(Node {
            tree,
            level: 0,
            slot: 0,
            parent: None,
            children: Vec::new(),
        });
        let mut frontier = vec![root];
        let mut head = 0;
        while head < frontier.len() && nodes.len() < cfg.terms {
            let p = frontier[head];
            head += 1;
            if nodes[p].level + 1 >= cfg.depth {
                continue;
            }
            for slot in 0..cfg.branching {
                if nodes.len() >= cfg.terms {
                    break;
                }
                let id = nodes.len();
                nodes.push(Node {
                    tree,
                    level: nodes[p].level + 1,
                    slot,
                    parent: Some(p),
                    children: Vec::new(),
                });
                nodes[p].children.push(id);
                frontier.push(id);
            }
        }
        tree += 1;
    }
    nodes
}

/// Keywords ranked by frequency in the gene texts, ties broken
/// lexicographically.
fn ranked_keywords(texts: &[&Vec<String>], content: &BTreeSet<&str>) -> Vec<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for text in texts {
        for w in text.iter() {
            if content.contains(w.as_str()) {
                *counts.entry(w.as_str()).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked.into_iter().map(|(w, _)| w.to_string()).collect()
}

fn recall(description: &[String], vocabulary: &BTreeSet<&str>) -> f64 {
    if description.is_empty() {
        return 0.0;
    }
    let hits = description
        .iter()
        .filter(|w| vocabulary.contains(w.as_str()))
        .count();
    hits as f64 / description.len() as f64
}

/// Generates a corpus; deterministic for a given `(cfg, seed)`.
pub fn synthesize_corpus(cfg: &SynthConfig, seed: u64) -> Result<Ontology, super::DataError> {
    cfg.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = layout(cfg);
    let n_trees = nodes.last().map_or(0, |n| n.tree + 1);

    let mut words = WordSource::new(cfg.lexicon);
    let topics = words.many(n_trees, &mut rng);
    let content = words.many(cfg.content_words, &mut rng);
    let fillers = words.many(cfg.filler_words, &mut rng);
    let mut qualifiers: Vec<Vec<Vec<String>>> = Vec::with_capacity(cfg.depth);
    for level in 0..cfg.depth {
        let slots = if level == 0 { 1 } else { cfg.branching };
        qualifiers.push(
            (0..slots)
                .map(|_| words.many(cfg.qualifiers_per_slot, &mut rng))
                .collect(),
        );
    }
    let themes: Vec<Vec<String>> = (0..n_trees)
        .map(|_| {
            content
                .choose_multiple(&mut rng, cfg.theme_words.min(content.len()))
                .cloned()
                .collect()
        })
        .collect();

    let term_id = |i: usize| TermId::new(format!("{}:{:07}", cfg.id_prefix, i + 1));
    let gene_id = |i: usize| GeneId::new(format!("{}_G{:05}", cfg.id_prefix, i + 1));

    // own genes, spread as evenly as possible
    let base = cfg.genes / cfg.terms;
    let extra = cfg.genes % cfg.terms;
    let mut own: Vec<Vec<usize>> = Vec::with_capacity(cfg.terms);
    let mut next_gene = 0;
    for i in 0..cfg.terms {
        let k = base + usize::from(i < extra);
        own.push((next_gene..next_gene + k).collect());
        next_gene += k;
    }

    let mut genes = BTreeMap::new();
    let mut gene_text: Vec<Vec<String>> = Vec::with_capacity(cfg.genes);
    for (i, node) in nodes.iter().enumerate() {
        for _ in &own[i] {
            let mut text = vec![topics[node.tree].clone()];
            for _ in 0..cfg.words_per_gene {
                let w = if !themes[node.tree].is_empty() && rng.gen_bool(0.6) {
                    themes[node.tree].choose(&mut rng)
                } else {
                    content.choose(&mut rng)
                };
                text.push(w.expect("non-empty word pool").clone());
            }
            for _ in 0..cfg.fillers_per_gene {
                if let Some(f) = fillers.choose(&mut rng) {
                    text.push(f.clone());
                }
            }
            text[1..].shuffle(&mut rng);
            gene_text.push(text);
        }
    }
    for (i, text) in gene_text.iter().enumerate() {
        genes.insert(
            gene_id(i),
            GeneRecord {
                id: gene_id(i),
                text: text.clone(),
            },
        );
    }

    // descendants-inclusive gene sets, children visited in slot order
    let mut gene_sets: Vec<Vec<usize>> = own.clone();
    for i in (0..nodes.len()).rev() {
        for &c in &nodes[i].children {
            let inherited = gene_sets[c].clone();
            gene_sets[i].extend(inherited);
        }
    }

    let qualifier: Vec<String> = nodes
        .iter()
        .map(|n| {
            qualifiers[n.level][n.slot]
                .choose(&mut rng)
                .expect("non-empty qualifier pool")
                .clone()
        })
        .collect();

    let content_set: BTreeSet<&str> = content.iter().map(String::as_str).collect();
    let mut terms = BTreeMap::new();
    let mut isa_edges = Vec::new();
    for (i, node) in nodes.iter().enumerate() {
        let topic = &topics[node.tree];
        let name = vec![qualifier[i].clone(), topic.clone(), "activity".to_string()];
        let mut term = Term::new(term_id(i), name);
        for &g in &gene_sets[i] {
            term.annotate(gene_id(g));
        }

        let texts: Vec<&Vec<String>> = gene_sets[i].iter().map(|&g| &gene_text[g]).collect();
        let gene_vocab: BTreeSet<&str> = texts.iter().flat_map(|t| t.iter().map(String::as_str)).collect();
        let ranked = ranked_keywords(&texts, &content_set);

        let mut tail = Vec::new();
        if let Some(p) = node.parent {
            tail.extend(["within".to_string(), qualifier[p].clone(), topic.clone()]);
        }
        if !node.children.is_empty() {
            tail.push("including".to_string());
            for (k, &c) in node.children.iter().enumerate() {
                if k > 0 {
                    tail.push("and".to_string());
                }
                tail.push(qualifier[c].clone());
            }
            tail.push("processes".to_string());
        }

        let mut n_kw = cfg.keywords.min(ranked.len());
        let description = loop {
            let mut d = vec![
                qualifier[i].clone(),
                topic.clone(),
                "activity".to_string(),
                "that".to_string(),
            ];
            d.extend(ranked[..n_kw].iter().cloned());
            d.extend(tail.iter().cloned());
            if recall(&d, &gene_vocab) >= cfg.min_overlap || n_kw == ranked.len() {
                break d;
            }
            n_kw += 1;
        };
        term.description = Some(description);
        terms.insert(term.id.clone(), term);
        if let Some(p) = node.parent {
            isa_edges.push((term_id(i), term_id(p)));
        }
    }
    isa_edges.sort();

    let ontology = Ontology {
        terms,
        isa_edges,
        genes,
    };
    ontology.validate()?;
    Ok(ontology)
}

/// Per-term token recall of the description against the union of its gene
/// texts; returns the minimum and the mean over described terms.
pub fn description_gene_overlap(o: &Ontology) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut sum = 0.0;
    let mut n = 0usize;
    for t in o.terms.values() {
        let Some(d) = &t.description else { continue };
        let vocab: BTreeSet<&str> = t
            .gene_ids
            .iter()
            .filter_map(|g| o.genes.get(g))
            .flat_map(|g| g.text.iter().map(String::as_str))
            .collect();
        let r = recall(d, &vocab);
        min = min.min(r);
        sum += r;
        n += 1;
    }
    if n == 0 {
        (0.0, 0.0)
    } else {
        (min, sum / n as f64)
    }
}
