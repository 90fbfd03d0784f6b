//! Core of the QASM transpilation workbench: parsing and emitting the QASM 2.0
//! subset, dense unitary simulation and fidelity, the meta-code tokenizer,
//! the rule-based reference transpiler with its dataset builder, the
//! Solovay-Kitaev decomposer and the token-scaling benchmark.

pub mod circuit;
pub mod exec;
pub mod gateset;
pub mod linalg;
pub mod qasm;
pub mod ruleset;
pub mod scaling;
pub mod sk;
pub mod tokenizer;

pub use circuit::{Circuit, GateApplication, GateKind};
pub use exec::Exec;
pub use gateset::{GateSetConfig, GateSetName};
pub use linalg::UnitaryMatrix;
pub use tokenizer::{AngleBinner, TokenSequence, Vocabulary};
