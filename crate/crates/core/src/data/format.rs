//! Line-oriented corpus format.
//!
//! ```text
//! # comment
//! TERM <id> NAME <tokens...>
//! ISA <child-id> <parent-id>
//! GENE <id> TEXT <tokens...>
//! ANNOT <term-id> <gene-id>
//! DESC <term-id> <tokens...>
//! ```
//!
//! Records may appear in any order. Free text is tokenized on read, so
//! serialized output (already tokenized) parses back to the same corpus.

use std::collections::BTreeMap;
use std::io::BufRead;

use super::vocab::tokenize;
use super::{DataError, GeneId, GeneRecord, Ontology, Term, TermId};

enum Record<'a> {
    Term(&'a str, &'a str),
    Isa(&'a str, &'a str),
    Gene(&'a str, &'a str),
    Annot(&'a str, &'a str),
    Desc(&'a str, &'a str),
}

fn split_word(s: &str) -> (&str, &str) {
    let s = s.trim_start();
    match s.find(char::is_whitespace) {
        Some(i) => (&s[..i], s[i..].trim_start()),
        None => (s, ""),
    }
}

fn parse_line(line: &str, no: usize) -> Result<Option<Record<'_>>, DataError> {
    let content = line.trim();
    if content.is_empty() || content.starts_with('#') {
        return Ok(None);
    }
    let syntax = |msg: &str| DataError::Syntax {
        line: no,
        msg: msg.to_string(),
    };
    let (tag, rest) = split_word(content);
    let (id, rest) = split_word(rest);
    if id.is_empty() {
        return Err(syntax(&format!("{tag} record is missing an id")));
    }
    let record = match tag {
        "TERM" | "GENE" => {
            let keyword = if tag == "TERM" { "NAME" } else { "TEXT" };
            let (kw, text) = split_word(rest);
            if kw != keyword {
                return Err(syntax(&format!("expected {keyword} after {tag} id")));
            }
            if tag == "TERM" {
                Record::Term(id, text)
            } else {
                Record::Gene(id, text)
            }
        }
        "ISA" | "ANNOT" => {
            let (other, tail) = split_word(rest);
            if other.is_empty() || !tail.is_empty() {
                return Err(syntax(&format!("{tag} takes exactly two ids")));
            }
            if tag == "ISA" {
                Record::Isa(id, other)
            } else {
                Record::Annot(id, other)
            }
        }
        "DESC" => Record::Desc(id, rest),
        other => return Err(syntax(&format!("unknown record tag {other:?}"))),
    };
    Ok(Some(record))
}

/// Parses a corpus stream. References may precede definitions.
pub fn parse_ontology<R: BufRead>(reader: R) -> Result<Ontology, DataError> {
    let mut terms: BTreeMap<TermId, (usize, Term)> = BTreeMap::new();
    let mut genes: BTreeMap<GeneId, GeneRecord> = BTreeMap::new();
    let mut isa: Vec<(usize, TermId, TermId)> = Vec::new();
    let mut annots: Vec<(usize, TermId, GeneId)> = Vec::new();
    let mut descs: BTreeMap<TermId, (usize, Vec<String>)> = BTreeMap::new();

    for (i, line) in reader.lines().enumerate() {
        let no = i + 1;
        let line = line?;
        let Some(record) = parse_line(&line, no)? else {
            continue;
        };
        match record {
            Record::Term(id, text) => {
                let name = tokenize(text);
                if name.is_empty() {
                    return Err(DataError::Syntax {
                        line: no,
                        msg: format!("term {id} has an empty name"),
                    });
                }
                let tid = TermId::from(id);
                if terms.contains_key(&tid) {
                    return Err(DataError::DuplicateId {
                        line: no,
                        id: id.into(),
                    });
                }
                terms.insert(tid.clone(), (no, Term::new(tid, name)));
            }
            Record::Gene(id, text) => {
                let text = tokenize(text);
                if text.is_empty() {
                    return Err(DataError::Syntax {
                        line: no,
                        msg: format!("gene {id} has empty text"),
                    });
                }
                let gid = GeneId::from(id);
                if genes.contains_key(&gid) {
                    return Err(DataError::DuplicateId {
                        line: no,
                        id: id.into(),
                    });
                }
                genes.insert(gid.clone(), GeneRecord { id: gid, text });
            }
            Record::Isa(child, parent) => isa.push((no, child.into(), parent.into())),
            Record::Annot(term, gene) => annots.push((no, term.into(), gene.into())),
            Record::Desc(id, text) => {
                let tokens = tokenize(text);
                if tokens.is_empty() {
                    return Err(DataError::Syntax {
                        line: no,
                        msg: format!("term {id} has an empty description"),
                    });
                }
                let tid = TermId::from(id);
                if descs.contains_key(&tid) {
                    return Err(DataError::DuplicateId {
                        line: no,
                        id: format!("DESC {id}"),
                    });
                }
                descs.insert(tid, (no, tokens));
            }
        }
    }

    let dangling = |line: usize, id: &str| DataError::DanglingReference {
        line,
        id: id.to_string(),
    };
    let mut edges = Vec::with_capacity(isa.len());
    for (no, child, parent) in isa {
        for id in [&child, &parent] {
            if !terms.contains_key(id) {
                return Err(dangling(no, id.as_str()));
            }
        }
        edges.push((child, parent));
    }
    edges.sort();
    edges.dedup();
    for (no, term, gene) in annots {
        if !genes.contains_key(&gene) {
            return Err(dangling(no, gene.as_str()));
        }
        let (_, t) = terms
            .get_mut(&term)
            .ok_or_else(|| dangling(no, term.as_str()))?;
        t.annotate(gene);
    }
    for (id, (no, tokens)) in descs {
        let (_, t) = terms
            .get_mut(&id)
            .ok_or_else(|| dangling(no, id.as_str()))?;
        t.description = Some(tokens);
    }

    let ontology = Ontology {
        terms: terms.into_iter().map(|(k, (_, t))| (k, t)).collect(),
        isa_edges: edges,
        genes,
    };
    ontology.validate()?;
    Ok(ontology)
}

/// Canonical text form: per term its `TERM`, `ANNOT` and `DESC` records in
/// id order, then `GENE` records, then `ISA` records.
pub fn serialize_ontology(o: &Ontology) -> String {
    let mut out = String::new();
    for t in o.terms.values() {
        out.push_str(&format!("TERM {} NAME {}\n", t.id, t.name.join(" ")));
        for g in &t.gene_ids {
            out.push_str(&format!("ANNOT {} {}\n", t.id, g));
        }
        if let Some(d) = &t.description {
            out.push_str(&format!("DESC {} {}\n", t.id, d.join(" ")));
        }
    }
    for g in o.genes.values() {
        out.push_str(&format!("GENE {} TEXT {}\n", g.id, g.text.join(" ")));
    }
    for (c, p) in &o.isa_edges {
        out.push_str(&format!("ISA {c} {p}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "\
# three terms, two edges, four genes
ISA GO:2 GO:1
TERM GO:1 NAME ATP binding
TERM GO:2 NAME ATP hydrolysis activity
TERM GO:3 NAME motor activity
ISA GO:3 GO:1
ANNOT GO:1 g1
ANNOT GO:1 g2
ANNOT GO:2 g1
ANNOT GO:3 g3
ANNOT GO:3 g4
DESC GO:2 Catalysis of the reaction: ATP + H2O = ADP.
GENE g1 TEXT kinase that binds ATP
GENE g2 TEXT ATP-dependent helicase
GENE g3 TEXT motor protein
GENE g4 TEXT dynein heavy chain
";

    #[test]
    fn parses_fixture_counts() {
        let o = parse_ontology(FIXTURE.as_bytes()).unwrap();
        assert_eq!(o.terms.len(), 3);
        assert_eq!(o.isa_edges.len(), 2);
        assert_eq!(o.genes.len(), 4);
        let t2 = &o.terms[&TermId::from("GO:2")];
        assert_eq!(
            t2.description.as_ref().unwrap().join(" "),
            "catalysis of the reaction atp h2o adp"
        );
        assert_eq!(o.terms[&TermId::from("GO:1")].gene_ids, vec![GeneId::from("g1"), GeneId::from("g2")]);
    }

    #[test]
    fn dangling_gene_is_named() {
        let src = "TERM t1 NAME x\nANNOT t1 gX\n";
        match parse_ontology(src.as_bytes()) {
            Err(DataError::DanglingReference { line, id }) => {
                assert_eq!(id, "gX");
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_error_has_line_number() {
        let src = "TERM t1 NAME x\n\nFOO bar\n";
        match parse_ontology(src.as_bytes()) {
            Err(DataError::Syntax { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let src = "TERM t1 x\n";
        assert!(matches!(
            parse_ontology(src.as_bytes()),
            Err(DataError::Syntax { line: 1, .. })
        ));
        let src = "ISA a\n";
        assert!(matches!(
            parse_ontology(src.as_bytes()),
            Err(DataError::Syntax { line: 1, .. })
        ));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let src = "GENE g TEXT a\nGENE g TEXT b\n";
        assert!(matches!(
            parse_ontology(src.as_bytes()),
            Err(DataError::DuplicateId { line: 2, .. })
        ));
        let src = "TERM t NAME a\nTERM t NAME b\n";
        assert!(matches!(
            parse_ontology(src.as_bytes()),
            Err(DataError::DuplicateId { line: 2, .. })
        ));
    }

    #[test]
    fn cycle_rejected() {
        let src = "TERM a NAME a\nTERM b NAME b\nISA a b\nISA b a\n";
        assert!(matches!(parse_ontology(src.as_bytes()), Err(DataError::Cycle(_))));
    }

    #[test]
    fn serialization_is_a_fixed_point() {
        let o = parse_ontology(FIXTURE.as_bytes()).unwrap();
        let text = serialize_ontology(&o);
        let again = parse_ontology(text.as_bytes()).unwrap();
        assert_eq!(o, again);
        assert_eq!(text, serialize_ontology(&again));
    }
}
