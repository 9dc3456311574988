//! Graph-in-Graph description generation for Gene Ontology terms.
//!
//! The crate covers the whole pipeline: corpus ingestion and synthesis
//! ([`data`]), nested gene/term graph construction ([`graphs`]), a small
//! reverse-mode differentiation engine ([`tensor`]), the encoder/decoder
//! network ([`model`]), teacher-forced training ([`training`]), text
//! generation metrics ([`eval`]) and experiment harnesses ([`experiment`]).

pub mod data;
pub mod eval;
pub mod experiment;
pub mod graphs;
pub mod model;
pub mod tensor;
pub mod training;
