//! Dense complex matrices, the native gate catalog, circuit simulation and the
//! trace-overlap fidelity.
//!
//! Qubit 0 is the most significant tensor factor: on `n` qubits, basis index
//! `b` has qubit `k` in state `(b >> (n - 1 - k)) & 1`.

use std::f64::consts::FRAC_1_SQRT_2;
use std::ops::{Index, IndexMut, Mul};

use num_complex::Complex64;

use crate::circuit::{Circuit, GateKind};

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Default cap on simulated register width.
pub const DEFAULT_MAX_QUBITS: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("{num_qubits} qubits exceeds the simulation cap of {cap}")]
    TooManyQubits { num_qubits: usize, cap: usize },
}

/// Square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl UnitaryMatrix {
    pub fn identity(dim: usize) -> Self {
        let mut data = vec![ZERO; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = ONE;
        }
        Self { dim, data }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    /// Builds from row-major entries; panics if `entries.len()` is not a square.
    pub fn from_rows(dim: usize, entries: Vec<C64>) -> Self {
        assert_eq!(entries.len(), dim * dim, "expected {dim}x{dim} entries");
        Self { dim, data: entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    pub fn dagger(&self) -> Self {
        let n = self.dim;
        let mut out = Self::zeros(n);
        for r in 0..n {
            for c in 0..n {
                out.data[c * n + r] = self.data[r * n + c].conj();
            }
        }
        out
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    /// `Tr(self† other)` without forming the product.
    pub fn trace_overlap(&self, other: &Self) -> Result<C64, LinalgError> {
        if self.dim != other.dim {
            return Err(LinalgError::DimensionMismatch(self.dim, other.dim));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn frobenius_distance(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// `‖U†U − I‖_F`.
    pub fn unitarity_defect(&self) -> f64 {
        (&self.dagger() * self).frobenius_distance(&Self::identity(self.dim))
    }

    pub fn kron(&self, other: &Self) -> Self {
        let (a, b) = (self.dim, other.dim);
        let n = a * b;
        let mut out = Self::zeros(n);
        for i in 0..a {
            for j in 0..a {
                let s = self.data[i * a + j];
                for k in 0..b {
                    for l in 0..b {
                        out.data[(i * b + k) * n + (j * b + l)] = s * other.data[k * b + l];
                    }
                }
            }
        }
        out
    }

    /// Left-multiplies by `gate` acting on `qubits` of an `n`-qubit register,
    /// i.e. `self ← G_embedded · self`. Works on any qubit order without
    /// building the full embedded matrix.
    pub fn apply_gate(&mut self, gate: &UnitaryMatrix, qubits: &[usize], num_qubits: usize) {
        let n = self.dim;
        debug_assert_eq!(n, 1 << num_qubits);
        let shift = |q: usize| num_qubits - 1 - q;
        match qubits {
            [q] => {
                let bit = 1usize << shift(*q);
                let g = &gate.data;
                for r0 in (0..n).filter(|r| r & bit == 0) {
                    let r1 = r0 | bit;
                    for c in 0..n {
                        let a = self.data[r0 * n + c];
                        let b = self.data[r1 * n + c];
                        self.data[r0 * n + c] = g[0] * a + g[1] * b;
                        self.data[r1 * n + c] = g[2] * a + g[3] * b;
                    }
                }
            }
            [q0, q1] => {
                let (b0, b1) = (1usize << shift(*q0), 1usize << shift(*q1));
                let g = &gate.data;
                // Local index = 2 * bit(q0) + bit(q1).
                for base in (0..n).filter(|r| r & (b0 | b1) == 0) {
                    let rows = [base, base | b1, base | b0, base | b0 | b1];
                    for c in 0..n {
                        let v = rows.map(|r| self.data[r * n + c]);
                        for (i, &r) in rows.iter().enumerate() {
                            self.data[r * n + c] = (0..4).map(|j| g[i * 4 + j] * v[j]).sum();
                        }
                    }
                }
            }
            _ => panic!("gates act on one or two qubits"),
        }
    }
}

impl Index<(usize, usize)> for UnitaryMatrix {
    type Output = C64;
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.dim + c]
    }
}

impl IndexMut<(usize, usize)> for UnitaryMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.dim + c]
    }
}

impl Mul for &UnitaryMatrix {
    type Output = UnitaryMatrix;
    fn mul(self, rhs: &UnitaryMatrix) -> UnitaryMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        let n = self.dim;
        let mut out = UnitaryMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == ZERO {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }
}

fn m2(a: C64, b: C64, c: C64, d: C64) -> UnitaryMatrix {
    UnitaryMatrix::from_rows(2, vec![a, b, c, d])
}

pub fn rx(theta: f64) -> UnitaryMatrix {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    m2(C64::from(c), -I * s, -I * s, C64::from(c))
}

pub fn ry(theta: f64) -> UnitaryMatrix {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    m2(C64::from(c), C64::from(-s), C64::from(s), C64::from(c))
}

pub fn rz(theta: f64) -> UnitaryMatrix {
    m2(C64::from_polar(1.0, -theta / 2.0), ZERO, ZERO, C64::from_polar(1.0, theta / 2.0))
}

/// `exp(-i θ/2 X⊗X)`.
pub fn rxx(theta: f64) -> UnitaryMatrix {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let (c, ms) = (C64::from(c), -I * s);
    UnitaryMatrix::from_rows(
        4,
        vec![
            c, ZERO, ZERO, ms, //
            ZERO, c, ms, ZERO, //
            ZERO, ms, c, ZERO, //
            ms, ZERO, ZERO, c,
        ],
    )
}

fn phase(theta: f64) -> UnitaryMatrix {
    m2(ONE, ZERO, ZERO, C64::from_polar(1.0, theta))
}

/// Matrix of a unitary gate with its parameters. `measure` has no matrix.
pub fn gate_matrix(gate: GateKind, params: &[f64]) -> Option<UnitaryMatrix> {
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
    let p = || params.first().copied().unwrap_or(0.0);
    let h = C64::from(FRAC_1_SQRT_2);
    Some(match gate {
        GateKind::X => m2(ZERO, ONE, ONE, ZERO),
        GateKind::Sx => m2(
            C64::new(0.5, 0.5),
            C64::new(0.5, -0.5),
            C64::new(0.5, -0.5),
            C64::new(0.5, 0.5),
        ),
        GateKind::Rz => rz(p()),
        GateKind::Rx => rx(p()),
        GateKind::Ry => ry(p()),
        GateKind::Rxx => rxx(p()),
        GateKind::Cx => UnitaryMatrix::from_rows(
            4,
            vec![
                ONE, ZERO, ZERO, ZERO, //
                ZERO, ONE, ZERO, ZERO, //
                ZERO, ZERO, ZERO, ONE, //
                ZERO, ZERO, ONE, ZERO,
            ],
        ),
        GateKind::Cz => {
            let mut m = UnitaryMatrix::identity(4);
            m[(3, 3)] = -ONE;
            m
        }
        GateKind::H => m2(h, h, h, -h),
        GateKind::T => phase(FRAC_PI_4),
        GateKind::Tdg => phase(-FRAC_PI_4),
        GateKind::S => phase(FRAC_PI_2),
        GateKind::Sdg => phase(-FRAC_PI_2),
        GateKind::Measure => return None,
    })
}

/// Catalog entry for one native gate.
#[derive(Debug, Clone, Copy)]
pub struct GateDef {
    pub gate: GateKind,
    pub arity: usize,
    pub param_count: usize,
}

impl GateDef {
    pub fn name(&self) -> &'static str {
        self.gate.name()
    }

    pub fn matrix(&self, params: &[f64]) -> UnitaryMatrix {
        gate_matrix(self.gate, params).expect("catalog gates are unitary")
    }
}

/// Definitions for every unitary gate of every supported gate set.
pub fn gate_catalog() -> Vec<GateDef> {
    GateKind::UNITARY
        .into_iter()
        .map(|gate| GateDef {
            gate,
            arity: gate.num_qubits(),
            param_count: gate.num_params(),
        })
        .collect()
}

/// Unitary implemented by the circuit's gates; measurements are skipped.
pub fn circuit_unitary(c: &Circuit) -> Result<UnitaryMatrix, LinalgError> {
    circuit_unitary_capped(c, DEFAULT_MAX_QUBITS)
}

pub fn circuit_unitary_capped(c: &Circuit, cap: usize) -> Result<UnitaryMatrix, LinalgError> {
    if c.num_qubits > cap {
        return Err(LinalgError::TooManyQubits {
            num_qubits: c.num_qubits,
            cap,
        });
    }
    let mut u = UnitaryMatrix::identity(1 << c.num_qubits);
    for op in c.unitary_ops() {
        let g = gate_matrix(op.gate, &op.params).expect("unitary op");
        u.apply_gate(&g, &op.qubits, c.num_qubits);
    }
    Ok(u)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FidelityReport {
    pub fidelity: f64,
    pub dim: usize,
    pub trace_overlap: C64,
}

/// `|Tr(U_ref† U_pred)|² / d²`.
pub fn fidelity(u_ref: &UnitaryMatrix, u_pred: &UnitaryMatrix) -> Result<FidelityReport, LinalgError> {
    let overlap = u_ref.trace_overlap(u_pred)?;
    let d = u_ref.dim as f64;
    Ok(FidelityReport {
        fidelity: (overlap.norm_sqr() / (d * d)).clamp(0.0, 1.0),
        dim: u_ref.dim,
        trace_overlap: overlap,
    })
}

pub fn fidelity_loss(u_ref: &UnitaryMatrix, u_pred: &UnitaryMatrix) -> Result<f64, LinalgError> {
    Ok(1.0 - fidelity(u_ref, u_pred)?.fidelity)
}

/// Fidelity between the unitaries of two circuits on the same register.
pub fn circuit_fidelity(a: &Circuit, b: &Circuit) -> Result<f64, LinalgError> {
    if a.num_qubits != b.num_qubits {
        return Err(LinalgError::DimensionMismatch(1 << a.num_qubits, 1 << b.num_qubits));
    }
    Ok(fidelity(&circuit_unitary(a)?, &circuit_unitary(b)?)?.fidelity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::GateApplication;
    use std::f64::consts::PI;

    fn close(a: &UnitaryMatrix, b: &UnitaryMatrix, tol: f64) -> bool {
        a.frobenius_distance(b) < tol
    }

    #[test]
    fn catalog_entries_match_closed_forms() {
        let x = gate_matrix(GateKind::X, &[]).unwrap();
        assert_eq!(x, m2(ZERO, ONE, ONE, ZERO));
        let sx = gate_matrix(GateKind::Sx, &[]).unwrap();
        let half = C64::from(0.5);
        let expected = m2(
            half * C64::new(1.0, 1.0),
            half * C64::new(1.0, -1.0),
            half * C64::new(1.0, -1.0),
            half * C64::new(1.0, 1.0),
        );
        assert!(close(&sx, &expected, 1e-15));
        assert!(close(&(&sx * &sx), &x, 1e-15));
        assert!(close(&rz(0.0), &UnitaryMatrix::identity(2), 1e-15));
    }

    #[test]
    fn catalog_is_unitary() {
        for def in gate_catalog() {
            for theta in [0.0, 0.3, -1.7, PI, 5.9] {
                let m = def.matrix(&[theta]);
                assert_eq!(m.dim(), 1 << def.arity);
                assert!(m.unitarity_defect() < 1e-12, "{}", def.name());
            }
        }
    }

    #[test]
    fn rxx_is_exponential_of_xx() {
        // exp(-iθ/2 X⊗X) = cos(θ/2) I - i sin(θ/2) X⊗X
        let x = gate_matrix(GateKind::X, &[]).unwrap();
        let xx = x.kron(&x);
        let theta: f64 = 0.77;
        let mut want = UnitaryMatrix::identity(4).scale(C64::from((theta / 2.0).cos()));
        for (w, v) in want.data.iter_mut().zip(xx.entries()) {
            *w += -I * (theta / 2.0).sin() * v;
        }
        assert!(close(&rxx(theta), &want, 1e-14));
    }

    #[test]
    fn empty_circuit_is_identity() {
        let u = circuit_unitary(&Circuit::new(2)).unwrap();
        assert_eq!(u, UnitaryMatrix::identity(4));
    }

    #[test]
    fn double_x_is_identity() {
        let mut c = Circuit::new(1);
        c.push(GateApplication::fixed(GateKind::X, &[0]));
        c.push(GateApplication::fixed(GateKind::X, &[0]));
        assert!(close(&circuit_unitary(&c).unwrap(), &UnitaryMatrix::identity(2), 1e-15));
    }

    #[test]
    fn h_t_h_matches_matrix_chain() {
        let mut c = Circuit::new(1);
        for g in [GateKind::H, GateKind::T, GateKind::H] {
            c.push(GateApplication::fixed(g, &[0]));
        }
        // Element-wise 2x2 product H·T·H written out by hand.
        let s = FRAC_1_SQRT_2;
        let h = [[s, s], [s, -s]];
        let t = [[C64::from(1.0), ZERO], [ZERO, C64::from_polar(1.0, PI / 4.0)]];
        let mut ht = [[ZERO; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    ht[i][j] += h[i][k] * t[k][j];
                }
            }
        }
        let mut hth = [[ZERO; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    hth[i][j] += ht[i][k] * h[k][j];
                }
            }
        }
        let u = circuit_unitary(&c).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((u[(i, j)] - hth[i][j]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn cx_on_reversed_pair() {
        // cx q[1],q[0] on 2 qubits flips qubit 0 when qubit 1 is set.
        let mut c = Circuit::new(2);
        c.push(GateApplication::fixed(GateKind::Cx, &[1, 0]));
        let u = circuit_unitary(&c).unwrap();
        // |01> (q0=0,q1=1, index 1) -> |11> (index 3)
        assert_eq!(u[(3, 1)], ONE);
        assert_eq!(u[(1, 3)], ONE);
        assert_eq!(u[(0, 0)], ONE);
        assert_eq!(u[(2, 2)], ONE);
    }

    #[test]
    fn fidelity_basics() {
        let id = UnitaryMatrix::identity(2);
        let x = gate_matrix(GateKind::X, &[]).unwrap();
        assert_eq!(fidelity(&x, &x).unwrap().fidelity, 1.0);
        assert_eq!(fidelity(&id, &x).unwrap().fidelity, 0.0);
        assert_eq!(fidelity_loss(&id, &x).unwrap(), 1.0);
        assert!(fidelity_loss(&rz(0.0), &rz(PI)).unwrap() > 1.0 - 1e-15);
        assert!(matches!(
            fidelity(&id, &UnitaryMatrix::identity(4)),
            Err(LinalgError::DimensionMismatch(2, 4))
        ));
    }

    #[test]
    fn simulation_cap() {
        let c = Circuit::new(11);
        assert!(matches!(circuit_unitary(&c), Err(LinalgError::TooManyQubits { .. })));
        assert!(circuit_unitary_capped(&Circuit::new(3), 2).is_err());
    }
}
