use std::collections::{BTreeSet, HashMap};

use gig_core::data::{
    build_vocabulary, parse_ontology, retrieve_parents_children, serialize_ontology, split_dataset,
    synthesize_corpus, GeneId, GeneRecord, Ontology, SynthConfig, Term, TermId, DEFAULT_RATIOS, UNK,
};
use proptest::prelude::*;

/// Random ontology: terms annotated with subsets of a small gene pool so
/// that subset relations are frequent, plus forward-only is-a edges.
fn arb_ontology(max_terms: usize) -> impl Strategy<Value = Ontology> {
    (1..=max_terms, 1usize..8).prop_flat_map(|(n, pool)| {
        let sets = prop::collection::vec(prop::collection::btree_set(0..pool, 0..=pool), n);
        let edges = prop::collection::vec((0..n, 0..n), 0..n);
        let words = prop::collection::vec("[a-z]{1,4}", 1..4);
        (sets, edges, words, Just(pool))
    })
    .prop_map(|(sets, edges, words, pool)| {
        let mut o = Ontology::default();
        for g in 0..pool {
            let id = GeneId::new(format!("g{g}"));
            o.genes.insert(
                id.clone(),
                GeneRecord {
                    id,
                    text: words.clone(),
                },
            );
        }
        for (i, set) in sets.iter().enumerate() {
            let mut t = Term::new(TermId::new(format!("t{i:02}")), vec![format!("n{i}")]);
            for g in set {
                t.annotate(GeneId::new(format!("g{g}")));
            }
            if i % 2 == 0 {
                t.description = Some(words.clone());
            }
            o.terms.insert(t.id.clone(), t);
        }
        let mut isa: Vec<(TermId, TermId)> = edges
            .into_iter()
            .filter(|(a, b)| a < b)
            .map(|(a, b)| (TermId::new(format!("t{a:02}")), TermId::new(format!("t{b:02}"))))
            .collect();
        isa.sort();
        isa.dedup();
        o.isa_edges = isa;
        o
    })
}

fn brute_force(o: &Ontology, t: &TermId) -> (BTreeSet<TermId>, BTreeSet<TermId>) {
    let genes = |id: &TermId| -> BTreeSet<&GeneId> { o.terms[id].gene_ids.iter().collect() };
    let mine = genes(t);
    let mut parents = BTreeSet::new();
    let mut children = BTreeSet::new();
    for u in o.terms.keys().filter(|u| *u != t) {
        let theirs = genes(u);
        if theirs.is_superset(&mine) {
            parents.insert(u.clone());
        }
        if theirs.is_subset(&mine) {
            children.insert(u.clone());
        }
    }
    (parents, children)
}

proptest! {
    #[test]
    fn cover_matches_brute_force(o in arb_ontology(50)) {
        for t in o.terms.keys() {
            let got = retrieve_parents_children(&o, t).unwrap();
            let (parents, children) = brute_force(&o, t);
            prop_assert_eq!(&got.parents, &parents);
            prop_assert_eq!(&got.children, &children);
        }
    }

    #[test]
    fn parse_serialize_round_trip(o in arb_ontology(20)) {
        let text = serialize_ontology(&o);
        let back = parse_ontology(text.as_bytes()).unwrap();
        prop_assert_eq!(&back, &o);
        prop_assert_eq!(serialize_ontology(&back), text);
    }

    #[test]
    fn splits_are_disjoint_covers(n in 3usize..200, seed in any::<u64>()) {
        let ids: Vec<TermId> = (0..n).map(|i| TermId::new(format!("T{i}"))).collect();
        let s = split_dataset(&ids, DEFAULT_RATIOS, seed).unwrap();
        let all: Vec<&TermId> = s.train.iter().chain(&s.validation).chain(&s.test).collect();
        let set: BTreeSet<&TermId> = all.iter().copied().collect();
        prop_assert_eq!(all.len(), n);
        prop_assert_eq!(set.len(), n);
        prop_assert_eq!(s.train.len(), (n as f64 * 0.7 + 1e-9).floor() as usize);
        prop_assert_eq!(s.validation.len(), (n as f64 * 0.1 + 1e-9).floor() as usize);
        prop_assert_eq!(split_dataset(&ids, DEFAULT_RATIOS, seed).unwrap(), s);
    }
}

#[test]
fn six_term_fixture_exact_sets() {
    let src = "\
TERM a NAME a\nTERM b NAME b\nTERM c NAME c\nTERM d NAME d\nTERM e NAME e\nTERM f NAME f
GENE g1 TEXT x\nGENE g2 TEXT x\nGENE g3 TEXT x\nGENE g4 TEXT x
ANNOT a g1\nANNOT b g1\nANNOT b g2\nANNOT c g1\nANNOT c g2\nANNOT c g3
ANNOT d g4\nANNOT e g2\nANNOT e g1\nANNOT f g1\nANNOT f g2\nANNOT f g3\nANNOT f g4
";
    let o = parse_ontology(src.as_bytes()).unwrap();
    let set = |ids: &[&str]| ids.iter().map(|s| TermId::from(*s)).collect::<BTreeSet<_>>();
    let n = retrieve_parents_children(&o, &TermId::from("b")).unwrap();
    assert_eq!(n.parents, set(&["c", "e", "f"]));
    assert_eq!(n.children, set(&["a", "e"]));
    let n = retrieve_parents_children(&o, &TermId::from("d")).unwrap();
    assert_eq!(n.parents, set(&["f"]));
    assert_eq!(n.children, set(&[]));
    for t in o.terms.keys() {
        let got = retrieve_parents_children(&o, t).unwrap();
        let (p, c) = brute_force(&o, t);
        assert_eq!((got.parents, got.children), (p, c));
    }
}

#[test]
fn vocabulary_size_matches_frequency_count() {
    let cfg = SynthConfig {
        terms: 1000,
        genes: 1500,
        ..SynthConfig::default()
    };
    let o = synthesize_corpus(&cfg, 21).unwrap();
    let corpus: Vec<Vec<String>> = o.terms.values().filter_map(|t| t.description.clone()).collect();
    assert_eq!(corpus.len(), 1000);
    for min_count in [1, 3, 10] {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for seq in &corpus {
            for tok in seq {
                *counts.entry(tok).or_insert(0) += 1;
            }
        }
        let expected = counts.values().filter(|&&c| c >= min_count).count() + 4;
        let v = build_vocabulary(&corpus, min_count).unwrap();
        assert_eq!(v.len(), expected, "min_count {min_count}");
    }
}

#[test]
fn encode_decode_identity_in_vocabulary() {
    let corpus: Vec<Vec<String>> = ["kinase activity", "kinase binding", "rare kinase"]
        .iter()
        .map(|s| gig_core::data::tokenize(s))
        .collect();
    let v = build_vocabulary(&corpus, 2).unwrap();
    let known: Vec<String> = vec!["kinase".into()];
    assert_eq!(v.decode(&v.encode(&known)), known);
    let ids = v.encode(&["rare".to_string(), "kinase".to_string()]);
    assert_eq!(ids[0], UNK);
    assert_eq!(v.decode(&ids), vec!["<unk>", "kinase"]);
}
