use super::{parse_ontology, Ontology};

/// Eight described transport terms over six genes, two levels below a root.
pub const TRANSPORT_TOY: &str = "\
TERM GO:1 NAME transport activity
TERM GO:2 NAME ion transport
TERM GO:3 NAME sugar transport
TERM GO:4 NAME sodium ion transport
TERM GO:5 NAME potassium ion transport
TERM GO:6 NAME glucose transport
TERM GO:7 NAME fructose transport
TERM GO:8 NAME calcium ion transport
ISA GO:2 GO:1
ISA GO:3 GO:1
ISA GO:4 GO:2
ISA GO:5 GO:2
ISA GO:8 GO:2
ISA GO:6 GO:3
ISA GO:7 GO:3
GENE g1 TEXT sodium channel protein
GENE g2 TEXT potassium channel subunit
GENE g3 TEXT calcium pump
GENE g4 TEXT glucose transporter
GENE g5 TEXT fructose permease
GENE g6 TEXT hexose carrier
ANNOT GO:1 g1
ANNOT GO:1 g2
ANNOT GO:1 g3
ANNOT GO:1 g4
ANNOT GO:1 g5
ANNOT GO:1 g6
ANNOT GO:2 g1
ANNOT GO:2 g2
ANNOT GO:2 g3
ANNOT GO:3 g4
ANNOT GO:3 g5
ANNOT GO:3 g6
ANNOT GO:4 g1
ANNOT GO:5 g2
ANNOT GO:8 g3
ANNOT GO:6 g4
ANNOT GO:6 g6
ANNOT GO:7 g5
DESC GO:1 enables the directed movement of a substance across a membrane
DESC GO:2 enables the transfer of charged ions from one side to the other
DESC GO:3 enables the movement of sugars into or out of a cell
DESC GO:4 enables the transfer of sodium ions across a membrane
DESC GO:5 enables the transfer of potassium ions across a membrane
DESC GO:6 enables the uptake of glucose by a cell
DESC GO:7 enables the uptake of fructose by a cell
DESC GO:8 catalysis of calcium ion transfer driven by atp hydrolysis
";

pub fn transport_toy() -> Ontology {
    parse_ontology(TRANSPORT_TOY.as_bytes()).expect("toy corpus parses")
}
