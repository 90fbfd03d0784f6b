//! Circuit AST shared by the parser, simulator, tokenizer and transpilers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Every gate name recognized anywhere in the workbench.
///
/// This is the union of the Eagle, IonQ, Heron and discrete Clifford+T /
/// Clifford+S gate sets. `Measure` is kept here so that a [`Circuit`] can
/// carry its final measurements as ordinary operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateKind {
    X,
    Sx,
    Rz,
    Cx,
    Rx,
    Ry,
    Rxx,
    Cz,
    H,
    T,
    Tdg,
    S,
    Sdg,
    Measure,
}

impl GateKind {
    /// All unitary gates, in vocabulary order.
    pub const UNITARY: [GateKind; 13] = [
        GateKind::X,
        GateKind::Sx,
        GateKind::Rz,
        GateKind::Cx,
        GateKind::Rx,
        GateKind::Ry,
        GateKind::Rxx,
        GateKind::Cz,
        GateKind::H,
        GateKind::T,
        GateKind::Tdg,
        GateKind::S,
        GateKind::Sdg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GateKind::X => "x",
            GateKind::Sx => "sx",
            GateKind::Rz => "rz",
            GateKind::Cx => "cx",
            GateKind::Rx => "rx",
            GateKind::Ry => "ry",
            GateKind::Rxx => "rxx",
            GateKind::Cz => "cz",
            GateKind::H => "h",
            GateKind::T => "t",
            GateKind::Tdg => "tdg",
            GateKind::S => "s",
            GateKind::Sdg => "sdg",
            GateKind::Measure => "measure",
        }
    }

    /// Number of qubit operands.
    pub fn num_qubits(self) -> usize {
        match self {
            GateKind::Cx | GateKind::Rxx | GateKind::Cz => 2,
            _ => 1,
        }
    }

    /// Number of angle parameters.
    pub fn num_params(self) -> usize {
        match self {
            GateKind::Rz | GateKind::Rx | GateKind::Ry | GateKind::Rxx => 1,
            _ => 0,
        }
    }

    pub fn is_unitary(self) -> bool {
        self != GateKind::Measure
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownGate(pub String);

impl fmt::Display for UnknownGate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown gate `{}`", self.0)
    }
}

impl std::error::Error for UnknownGate {}

impl FromStr for GateKind {
    type Err = UnknownGate;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GateKind::UNITARY
            .iter()
            .copied()
            .chain(std::iter::once(GateKind::Measure))
            .find(|g| g.name() == s)
            .ok_or_else(|| UnknownGate(s.to_string()))
    }
}

/// One statement of a circuit: a gate on one or two qubits, or a measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateApplication {
    pub gate: GateKind,
    /// Rotation angles in radians.
    pub params: Vec<f64>,
    pub qubits: Vec<usize>,
    /// Classical targets; only measurements have one.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub clbits: Vec<usize>,
}

impl GateApplication {
    pub fn new(gate: GateKind, params: Vec<f64>, qubits: Vec<usize>) -> Self {
        Self {
            gate,
            params,
            qubits,
            clbits: Vec::new(),
        }
    }

    pub fn fixed(gate: GateKind, qubits: &[usize]) -> Self {
        Self::new(gate, Vec::new(), qubits.to_vec())
    }

    pub fn rotation(gate: GateKind, angle: f64, qubits: &[usize]) -> Self {
        Self::new(gate, vec![angle], qubits.to_vec())
    }

    pub fn measure(qubit: usize, clbit: usize) -> Self {
        Self {
            gate: GateKind::Measure,
            params: Vec::new(),
            qubits: vec![qubit],
            clbits: vec![clbit],
        }
    }

    /// Structural equality with angles compared within `tol` radians.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.gate == other.gate
            && self.qubits == other.qubits
            && self.clbits == other.clbits
            && self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| (a - b).abs() <= tol)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CircuitError {
    #[error("op {index}: qubit {qubit} out of range for {num_qubits} qubits")]
    QubitOutOfRange {
        index: usize,
        qubit: usize,
        num_qubits: usize,
    },
    #[error("op {index}: clbit {clbit} out of range for {num_clbits} clbits")]
    ClbitOutOfRange {
        index: usize,
        clbit: usize,
        num_clbits: usize,
    },
    #[error("op {index}: `{gate}` expects {expected} {what}, got {got}")]
    Arity {
        index: usize,
        gate: GateKind,
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("op {index}: two-qubit gate `{gate}` on repeated qubit {qubit}")]
    RepeatedQubit {
        index: usize,
        gate: GateKind,
        qubit: usize,
    },
    #[error("op {index}: unitary gate `{gate}` after a measurement")]
    GateAfterMeasure { index: usize, gate: GateKind },
    #[error("circuit needs at least one qubit")]
    NoQubits,
    #[error("op {index}: non-finite angle")]
    NonFiniteAngle { index: usize },
}

/// A parsed program over one quantum register `q` and an optional classical
/// register `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub num_qubits: usize,
    pub num_clbits: usize,
    pub ops: Vec<GateApplication>,
    pub has_final_measure: bool,
}

impl Circuit {
    pub fn new(num_qubits: usize) -> Self {
        Self {
            num_qubits,
            num_clbits: 0,
            ops: Vec::new(),
            has_final_measure: false,
        }
    }

    pub fn with_clbits(num_qubits: usize, num_clbits: usize) -> Self {
        Self {
            num_clbits,
            ..Self::new(num_qubits)
        }
    }

    pub fn push(&mut self, op: GateApplication) {
        if op.gate == GateKind::Measure {
            self.has_final_measure = true;
        }
        self.ops.push(op);
    }

    /// Appends `measure q[i] -> c[i]` for every qubit, growing `c` if needed.
    pub fn measure_all(&mut self) {
        self.num_clbits = self.num_clbits.max(self.num_qubits);
        for q in 0..self.num_qubits {
            self.push(GateApplication::measure(q, q));
        }
    }

    pub fn unitary_ops(&self) -> impl Iterator<Item = &GateApplication> {
        self.ops.iter().filter(|op| op.gate.is_unitary())
    }

    pub fn gate_count(&self) -> usize {
        self.unitary_ops().count()
    }

    /// Checks every structural invariant of the AST.
    pub fn validate(&self) -> Result<(), CircuitError> {
        if self.num_qubits == 0 {
            return Err(CircuitError::NoQubits);
        }
        let mut seen_measure = false;
        for (index, op) in self.ops.iter().enumerate() {
            let gate = op.gate;
            if op.qubits.len() != gate.num_qubits() {
                return Err(CircuitError::Arity {
                    index,
                    gate,
                    what: "qubits",
                    expected: gate.num_qubits(),
                    got: op.qubits.len(),
                });
            }
            if op.params.len() != gate.num_params() {
                return Err(CircuitError::Arity {
                    index,
                    gate,
                    what: "params",
                    expected: gate.num_params(),
                    got: op.params.len(),
                });
            }
            let expected_clbits = usize::from(gate == GateKind::Measure);
            if op.clbits.len() != expected_clbits {
                return Err(CircuitError::Arity {
                    index,
                    gate,
                    what: "clbits",
                    expected: expected_clbits,
                    got: op.clbits.len(),
                });
            }
            if op.params.iter().any(|p| !p.is_finite()) {
                return Err(CircuitError::NonFiniteAngle { index });
            }
            for &qubit in &op.qubits {
                if qubit >= self.num_qubits {
                    return Err(CircuitError::QubitOutOfRange {
                        index,
                        qubit,
                        num_qubits: self.num_qubits,
                    });
                }
            }
            for &clbit in &op.clbits {
                if clbit >= self.num_clbits {
                    return Err(CircuitError::ClbitOutOfRange {
                        index,
                        clbit,
                        num_clbits: self.num_clbits,
                    });
                }
            }
            if op.qubits.len() == 2 && op.qubits[0] == op.qubits[1] {
                return Err(CircuitError::RepeatedQubit {
                    index,
                    gate,
                    qubit: op.qubits[0],
                });
            }
            if gate == GateKind::Measure {
                seen_measure = true;
            } else if seen_measure {
                return Err(CircuitError::GateAfterMeasure { index, gate });
            }
        }
        Ok(())
    }

    /// Structural equality with angles compared within `tol` radians.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.num_qubits == other.num_qubits
            && self.num_clbits == other.num_clbits
            && self.has_final_measure == other.has_final_measure
            && self.ops.len() == other.ops.len()
            && self
                .ops
                .iter()
                .zip(&other.ops)
                .all(|(a, b)| a.approx_eq(b, tol))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gate_names_round_trip() {
        for g in GateKind::UNITARY {
            assert_eq!(g.name().parse::<GateKind>().unwrap(), g);
        }
        assert!("foo".parse::<GateKind>().is_err());
    }

    #[test]
    fn validate_rejects_gate_after_measure() {
        let mut c = Circuit::with_clbits(1, 1);
        c.push(GateApplication::measure(0, 0));
        c.push(GateApplication::fixed(GateKind::X, &[0]));
        assert!(matches!(
            c.validate(),
            Err(CircuitError::GateAfterMeasure { index: 1, .. })
        ));
    }

    #[test]
    fn validate_rejects_repeated_qubit() {
        let mut c = Circuit::new(2);
        c.push(GateApplication::fixed(GateKind::Cx, &[1, 1]));
        assert!(matches!(
            c.validate(),
            Err(CircuitError::RepeatedQubit { .. })
        ));
    }
}
