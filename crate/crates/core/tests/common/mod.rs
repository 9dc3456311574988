#![allow(dead_code)]

use gig_core::data::{build_vocabulary, parse_ontology, Ontology, TermId, Vocabulary};

/// Four terms: `GO:2` has two genes, its gene-cover parent `GO:1` three
/// and its children `GO:3` and `GO:4` one each.
pub const TOY: &str = "\
TERM GO:1 NAME transport activity
TERM GO:2 NAME ion transport
TERM GO:3 NAME sodium ion transport
TERM GO:4 NAME potassium ion transport
ISA GO:2 GO:1
ISA GO:3 GO:2
ISA GO:4 GO:2
GENE g1 TEXT sodium channel protein
GENE g2 TEXT potassium channel
GENE g3 TEXT solute carrier family
ANNOT GO:1 g1
ANNOT GO:1 g2
ANNOT GO:1 g3
ANNOT GO:2 g1
ANNOT GO:2 g2
ANNOT GO:3 g1
ANNOT GO:4 g2
DESC GO:1 enables the transfer of a substance
DESC GO:2 enables the transfer of ions
DESC GO:3 enables the transfer of sodium ions
DESC GO:4 enables the transfer of potassium ions
";

pub fn toy() -> (Ontology, Vocabulary) {
    let o = parse_ontology(TOY.as_bytes()).unwrap();
    let vocab = corpus_vocab(&o, 1);
    (o, vocab)
}

pub fn corpus_vocab(o: &Ontology, min_count: usize) -> Vocabulary {
    let mut corpus: Vec<Vec<String>> = Vec::new();
    for t in o.terms.values() {
        corpus.push(t.name.clone());
        if let Some(d) = &t.description {
            corpus.push(d.clone());
        }
    }
    corpus.extend(o.genes.values().map(|g| g.text.clone()));
    build_vocabulary(&corpus, min_count).unwrap()
}

pub fn id(s: &str) -> TermId {
    TermId::from(s)
}
