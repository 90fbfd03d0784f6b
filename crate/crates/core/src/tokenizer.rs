//! Meta-code tokenizer with discretized rotation angles.
//!
//! A circuit is flattened into
//!
//! ```text
//! <BOS> OPENQASM ; include ; qreg nN ; [creg nM ;] stmt* <EOS>
//! stmt := gate [<PARAM_START> PARAM_i <PARAM_END>] qA [qB] ;
//!       | measure qA -> cB ;
//! ```
//!
//! where `q[1]` collapses to the single token `q1` and each angle becomes one
//! of `λ` bin tokens.

use std::collections::HashMap;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::circuit::{Circuit, GateApplication, GateKind};
use crate::qasm;

pub const PAD: &str = "<PAD>";
pub const BOS: &str = "<BOS>";
pub const EOS: &str = "<EOS>";
pub const PARAM_START: &str = "<PARAM_START>";
pub const PARAM_END: &str = "<PARAM_END>";

pub const PAD_ID: u32 = 0;
pub const BOS_ID: u32 = 1;
pub const EOS_ID: u32 = 2;
pub const PARAM_START_ID: u32 = 3;
pub const PARAM_END_ID: u32 = 4;

const HEADER: &str = "OPENQASM";
const INCLUDE: &str = "include";
const QREG: &str = "qreg";
const CREG: &str = "creg";
const MEASURE: &str = "measure";
const ARROW: &str = "->";
const SEMI: &str = ";";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TokenizeError {
    #[error("angle must be finite, got {0}")]
    NonFiniteAngle(f64),
    #[error("bin {bin} out of range for grid size {grid}")]
    BinOutOfRange { bin: usize, grid: usize },
    #[error("grid size must be at least 2, got {0}")]
    GridTooSmall(usize),
    #[error("{what} {index} is not representable (vocabulary covers {max})")]
    Unrepresentable {
        what: &'static str,
        index: usize,
        max: usize,
    },
    #[error("gate `{0}` is not in the vocabulary")]
    UnknownGate(GateKind),
    #[error(transparent)]
    InvalidCircuit(#[from] crate::circuit::CircuitError),
}

/// Round → wrap into `[0, 2π)` → floor onto a grid of `grid` sectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AngleBinner {
    pub grid: usize,
    /// Decimal places kept before wrapping.
    pub rounding: u32,
}

impl Default for AngleBinner {
    fn default() -> Self {
        Self {
            grid: 128,
            rounding: 2,
        }
    }
}

impl AngleBinner {
    pub fn new(grid: usize, rounding: u32) -> Result<Self, TokenizeError> {
        if grid < 2 {
            return Err(TokenizeError::GridTooSmall(grid));
        }
        Ok(Self { grid, rounding })
    }

    /// The angle after rounding and wrapping, before binning.
    pub fn normalize(&self, theta: f64) -> Result<f64, TokenizeError> {
        if !theta.is_finite() {
            return Err(TokenizeError::NonFiniteAngle(theta));
        }
        let scale = 10f64.powi(self.rounding as i32);
        let rounded = (theta * scale).round() / scale;
        let wrapped = rounded.rem_euclid(TAU);
        // rem_euclid can return TAU itself for tiny negative inputs.
        Ok(if wrapped >= TAU { 0.0 } else { wrapped })
    }

    pub fn bin(&self, theta: f64) -> Result<usize, TokenizeError> {
        let norm = self.normalize(theta)?;
        let i = (norm / TAU * self.grid as f64).floor() as usize;
        Ok(i.min(self.grid - 1))
    }

    pub fn unbin(&self, bin: usize) -> Result<f64, TokenizeError> {
        if bin >= self.grid {
            return Err(TokenizeError::BinOutOfRange {
                bin,
                grid: self.grid,
            });
        }
        Ok(bin as f64 / self.grid as f64 * TAU)
    }
}

pub fn bin_angle(theta: f64, b: &AngleBinner) -> Result<usize, TokenizeError> {
    b.bin(theta)
}

pub fn unbin_angle(bin: usize, b: &AngleBinner) -> Result<f64, TokenizeError> {
    b.unbin(bin)
}

/// Closed, rule-derived vocabulary shared by source and target dialects.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    lookup: HashMap<String, u32>,
    binner: AngleBinner,
    max_qubits: usize,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new(AngleBinner::default(), 5)
    }
}

impl Vocabulary {
    /// Vocabulary for `max_qubits` qubit tokens and the binner's grid.
    pub fn new(binner: AngleBinner, max_qubits: usize) -> Self {
        let mut tokens: Vec<String> = [PAD, BOS, EOS, PARAM_START, PARAM_END]
            .iter()
            .map(|s| s.to_string())
            .collect();
        tokens.extend((0..binner.grid).map(|i| format!("PARAM_{i}")));
        tokens.extend(GateKind::UNITARY.iter().map(|g| g.name().to_string()));
        tokens.extend((0..max_qubits).map(|i| format!("q{i}")));
        tokens.extend((0..max_qubits).map(|i| format!("c{i}")));
        tokens.extend((1..=max_qubits).map(|i| format!("n{i}")));
        tokens.extend(
            [HEADER, INCLUDE, QREG, CREG, MEASURE, ARROW, SEMI]
                .iter()
                .map(|s| s.to_string()),
        );
        Self::from_parts(tokens, binner, max_qubits)
    }

    fn from_parts(tokens: Vec<String>, binner: AngleBinner, max_qubits: usize) -> Self {
        let lookup = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self {
            tokens,
            lookup,
            binner,
            max_qubits,
        }
    }

    /// Rebuilds a vocabulary from its JSON token list.
    pub fn from_json(json: &str) -> Result<Self, String> {
        let tokens: Vec<String> = serde_json::from_str(json).map_err(|e| e.to_string())?;
        let grid = tokens.iter().filter(|t| t.starts_with("PARAM_") && t[6..].parse::<usize>().is_ok()).count();
        let max_qubits = tokens
            .iter()
            .filter(|t| t.starts_with('q') && t[1..].parse::<usize>().is_ok())
            .count();
        let vocab = Self::new(AngleBinner::new(grid, 2).map_err(|e| e.to_string())?, max_qubits);
        if vocab.tokens != tokens {
            return Err("token list is not a workbench vocabulary".into());
        }
        Ok(vocab)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.tokens).expect("strings serialize")
    }

    /// SHA-256 of the JSON token list, hex-encoded.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn binner(&self) -> &AngleBinner {
        &self.binner
    }

    pub fn max_qubits(&self) -> usize {
        self.max_qubits
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.lookup.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    fn must(&self, token: &str) -> u32 {
        self.lookup[token]
    }

    pub fn param_id(&self, bin: usize) -> u32 {
        PARAM_END_ID + 1 + bin as u32
    }

    fn param_bin(&self, id: u32) -> Option<usize> {
        let first = PARAM_END_ID + 1;
        (id >= first && id < first + self.binner.grid as u32).then(|| (id - first) as usize)
    }

    /// Number of tokens spent on the header for a register shape.
    pub fn header_len(&self, num_clbits: usize) -> usize {
        // <BOS> OPENQASM ; include ; qreg nN ; [creg nM ;] ... <EOS>
        8 + if num_clbits > 0 { 3 } else { 0 } + 1
    }

    pub fn render(&self, ids: &[u32]) -> Vec<&str> {
        ids.iter().map(|&i| self.token(i).unwrap_or("<?>")).collect()
    }
}

/// Integer-encoded circuit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    /// SHA-256 of the canonical QASM the sequence was produced from.
    pub source_hash: String,
}

impl TokenSequence {
    pub fn from_ids(ids: Vec<u32>) -> Self {
        Self {
            ids,
            source_hash: String::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

pub fn encode(c: &Circuit, v: &Vocabulary) -> Result<TokenSequence, TokenizeError> {
    c.validate()?;
    let repr = |what: &'static str, index: usize, max: usize| {
        if index < max {
            Ok(())
        } else {
            Err(TokenizeError::Unrepresentable { what, index, max })
        }
    };
    repr("qubit register size", c.num_qubits, v.max_qubits + 1)?;
    repr("classical register size", c.num_clbits, v.max_qubits + 1)?;

    let semi = v.must(SEMI);
    let mut ids = vec![BOS_ID, v.must(HEADER), semi, v.must(INCLUDE), semi, v.must(QREG)];
    ids.push(v.must(&format!("n{}", c.num_qubits)));
    ids.push(semi);
    if c.num_clbits > 0 {
        ids.extend([v.must(CREG), v.must(&format!("n{}", c.num_clbits)), semi]);
    }
    for op in &c.ops {
        if op.gate == GateKind::Measure {
            ids.extend([
                v.must(MEASURE),
                v.must(&format!("q{}", op.qubits[0])),
                v.must(ARROW),
                v.must(&format!("c{}", op.clbits[0])),
                semi,
            ]);
            continue;
        }
        ids.push(v.id(op.gate.name()).ok_or(TokenizeError::UnknownGate(op.gate))?);
        for &p in &op.params {
            let bin = v.binner.bin(p)?;
            ids.extend([PARAM_START_ID, v.param_id(bin), PARAM_END_ID]);
        }
        for &q in &op.qubits {
            ids.push(v.must(&format!("q{q}")));
        }
        ids.push(semi);
    }
    ids.push(EOS_ID);
    let source_hash = hex::encode(Sha256::digest(qasm::to_qasm(c).as_bytes()));
    Ok(TokenSequence { ids, source_hash })
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("token {position}: {reason}")]
pub struct DecodeError {
    pub position: usize,
    pub reason: String,
}

struct Cursor<'a> {
    ids: &'a [u32],
    pos: usize,
    vocab: &'a Vocabulary,
}

impl Cursor<'_> {
    fn fail<T>(&self, reason: impl Into<String>) -> Result<T, DecodeError> {
        Err(DecodeError {
            position: self.pos,
            reason: reason.into(),
        })
    }

    fn peek(&self) -> Option<u32> {
        self.ids.get(self.pos).copied()
    }

    fn peek_tok(&self) -> Option<&str> {
        self.peek().and_then(|i| self.vocab.token(i))
    }

    fn next_tok(&mut self) -> Result<&str, DecodeError> {
        let Some(id) = self.peek() else {
            return self.fail("sequence ended without <EOS>");
        };
        let Some(tok) = self.vocab.token(id) else {
            return self.fail(format!("id {id} outside vocabulary"));
        };
        self.pos += 1;
        Ok(tok)
    }

    fn expect(&mut self, want: &str) -> Result<(), DecodeError> {
        let tok = self.next_tok()?.to_string();
        if tok == want {
            Ok(())
        } else {
            self.pos -= 1;
            self.fail(format!("expected `{want}`, found `{tok}`"))
        }
    }

    fn indexed(&mut self, prefix: char, what: &str) -> Result<usize, DecodeError> {
        let tok = self.next_tok()?.to_string();
        let parsed = tok
            .strip_prefix(prefix)
            .and_then(|rest| rest.parse::<usize>().ok());
        match parsed {
            Some(i) => Ok(i),
            None => {
                self.pos -= 1;
                self.fail(format!("expected {what}, found `{tok}`"))
            }
        }
    }
}

/// Rebuilds a circuit from tokens. Total: any id sequence yields either a
/// valid circuit or the position of the first structural violation.
pub fn decode(t: &TokenSequence, v: &Vocabulary) -> Result<Circuit, DecodeError> {
    decode_ids(&t.ids, v)
}

pub fn decode_ids(ids: &[u32], v: &Vocabulary) -> Result<Circuit, DecodeError> {
    let mut cur = Cursor {
        ids,
        pos: 0,
        vocab: v,
    };
    cur.expect(BOS)?;
    cur.expect(HEADER)?;
    cur.expect(SEMI)?;
    cur.expect(INCLUDE)?;
    cur.expect(SEMI)?;
    cur.expect(QREG)?;
    let nq = cur.indexed('n', "register size")?;
    cur.expect(SEMI)?;
    let mut circuit = Circuit::new(nq);
    if cur.peek_tok() == Some(CREG) {
        cur.pos += 1;
        circuit.num_clbits = cur.indexed('n', "register size")?;
        cur.expect(SEMI)?;
    }
    loop {
        let start = cur.pos;
        let tok = cur.next_tok()?.to_string();
        match tok.as_str() {
            EOS => break,
            MEASURE => {
                let q = cur.indexed('q', "qubit")?;
                cur.expect(ARROW)?;
                let c = cur.indexed('c', "clbit")?;
                cur.expect(SEMI)?;
                circuit.push(GateApplication::measure(q, c));
            }
            name => {
                let Ok(gate) = name.parse::<GateKind>() else {
                    cur.pos = start;
                    return cur.fail(format!("expected a gate, found `{name}`"));
                };
                let mut params = Vec::new();
                while cur.peek() == Some(PARAM_START_ID) {
                    cur.pos += 1;
                    let Some(bin) = cur.peek().and_then(|id| v.param_bin(id)) else {
                        return cur.fail("<PARAM_START> must be followed by a PARAM_i token");
                    };
                    cur.pos += 1;
                    cur.expect(PARAM_END)?;
                    params.push(v.binner.unbin(bin).expect("bin in range"));
                }
                if params.len() != gate.num_params() {
                    cur.pos = start;
                    return cur.fail(format!(
                        "`{gate}` takes {} parameter(s), got {}",
                        gate.num_params(),
                        params.len()
                    ));
                }
                let mut qubits = Vec::with_capacity(gate.num_qubits());
                for _ in 0..gate.num_qubits() {
                    qubits.push(cur.indexed('q', "qubit operand")?);
                }
                cur.expect(SEMI)?;
                circuit.push(GateApplication::new(gate, params, qubits));
            }
        }
        if let Err(e) = circuit.validate() {
            cur.pos = start;
            return cur.fail(e.to_string());
        }
    }
    if let Err(e) = circuit.validate() {
        return cur.fail(e.to_string());
    }
    Ok(circuit)
}
