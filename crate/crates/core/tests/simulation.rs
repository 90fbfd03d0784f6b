use num_complex::Complex64 as C;
use qtranspile_core::circuit::{Circuit, GateApplication, GateKind};
use qtranspile_core::gateset::GateSetConfig;
use qtranspile_core::linalg::{circuit_unitary, fidelity, fidelity_loss, gate_matrix, rz, UnitaryMatrix};
use qtranspile_core::ruleset::{random_circuit, RandomCircuitSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{PI, TAU};

/// Embeds `g` on `qubits` by evaluating every matrix element from its
/// definition: rows and columns must agree on all untouched qubits.
fn embed_elementwise(g: &UnitaryMatrix, qubits: &[usize], n: usize) -> UnitaryMatrix {
    let dim = 1 << n;
    let bit = |b: usize, q: usize| (b >> (n - 1 - q)) & 1;
    let mask: usize = qubits.iter().map(|&q| 1 << (n - 1 - q)).sum();
    let local = |b: usize| qubits.iter().fold(0, |acc, &q| acc * 2 + bit(b, q));
    let mut out = UnitaryMatrix::zeros(dim);
    for r in 0..dim {
        for c in 0..dim {
            if r & !mask == c & !mask {
                out[(r, c)] = g[(local(r), local(c))];
            }
        }
    }
    out
}

fn kron_chain(factors: &[UnitaryMatrix]) -> UnitaryMatrix {
    factors[1..].iter().fold(factors[0].clone(), |acc, f| acc.kron(f))
}

fn max_diff(a: &UnitaryMatrix, b: &UnitaryMatrix) -> f64 {
    a.entries()
        .iter()
        .zip(b.entries())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

fn single(g: GateKind, params: &[f64], q: usize, n: usize) -> Circuit {
    let mut c = Circuit::new(n);
    c.push(GateApplication::new(g, params.to_vec(), vec![q]));
    c
}

#[test]
fn single_qubit_embedding_matches_tensor_product() {
    let id = UnitaryMatrix::identity(2);
    for n in 1..=3 {
        for k in 0..n {
            for (g, p) in [(GateKind::H, vec![]), (GateKind::Sx, vec![]), (GateKind::Ry, vec![0.37])] {
                let gm = gate_matrix(g, &p).unwrap();
                let factors: Vec<UnitaryMatrix> =
                    (0..n).map(|i| if i == k { gm.clone() } else { id.clone() }).collect();
                let got = circuit_unitary(&single(g, &p, k, n)).unwrap();
                assert!(max_diff(&got, &kron_chain(&factors)) < 1e-14, "{g} on {k} of {n}");
            }
        }
    }
}

#[test]
fn two_qubit_embedding_matches_elementwise_oracle() {
    for n in 2..=3 {
        for q0 in 0..n {
            for q1 in 0..n {
                if q0 == q1 {
                    continue;
                }
                for (g, p) in [(GateKind::Cx, vec![]), (GateKind::Cz, vec![]), (GateKind::Rxx, vec![1.1])] {
                    let mut c = Circuit::new(n);
                    c.push(GateApplication::new(g, p.clone(), vec![q0, q1]));
                    let want = embed_elementwise(&gate_matrix(g, &p).unwrap(), &[q0, q1], n);
                    assert!(max_diff(&circuit_unitary(&c).unwrap(), &want) < 1e-14);
                }
            }
        }
    }
}

#[test]
fn random_circuits_stay_unitary() {
    let eagle = GateSetConfig::eagle();
    let ionq = GateSetConfig::ionq();
    for n in 1..=5 {
        for (i, depth) in [1usize, 10, 50].iter().enumerate() {
            for gs in [&eagle, &ionq] {
                let spec = RandomCircuitSpec {
                    num_qubits: n,
                    depth: *depth,
                    include_measure: i == 1,
                    seed: (n * 100 + i) as u64,
                };
                let u = circuit_unitary(&random_circuit(&spec, gs).unwrap()).unwrap();
                assert!(u.unitarity_defect() < 1e-10);
            }
        }
    }
}

#[test]
fn concatenation_composes_unitaries() {
    let gs = GateSetConfig::eagle();
    for seed in 0..10u64 {
        let n = 1 + (seed as usize % 4);
        let a = random_circuit(&RandomCircuitSpec { num_qubits: n, depth: 6, include_measure: false, seed }, &gs).unwrap();
        let b = random_circuit(
            &RandomCircuitSpec { num_qubits: n, depth: 4, include_measure: false, seed: seed + 1000 },
            &gs,
        )
        .unwrap();
        let mut ab = a.clone();
        for op in &b.ops {
            ab.push(op.clone());
        }
        let want = &circuit_unitary(&b).unwrap() * &circuit_unitary(&a).unwrap();
        assert!(max_diff(&circuit_unitary(&ab).unwrap(), &want) < 1e-10);
    }
}

#[test]
fn hth_matches_matrix_chain() {
    let s = 1.0 / 2f64.sqrt();
    let h = [[s, s], [s, -s]].map(|r| r.map(|v| C::new(v, 0.0)));
    let t = [
        [C::new(1.0, 0.0), C::new(0.0, 0.0)],
        [C::new(0.0, 0.0), C::from_polar(1.0, PI / 4.0)],
    ];
    let mul = |a: [[C; 2]; 2], b: [[C; 2]; 2]| {
        let mut o = [[C::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                o[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        o
    };
    let want = mul(h, mul(t, h));
    let mut c = Circuit::new(1);
    for g in [GateKind::H, GateKind::T, GateKind::H] {
        c.push(GateApplication::fixed(g, &[0]));
    }
    let u = circuit_unitary(&c).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            assert!((u[(i, j)] - want[i][j]).norm() < 1e-15);
        }
    }
}

#[test]
fn fidelity_functional_identities() {
    let x = gate_matrix(GateKind::X, &[]).unwrap();
    let id = UnitaryMatrix::identity(2);
    assert_eq!(fidelity(&id, &x).unwrap().fidelity, 0.0);
    assert_eq!(fidelity_loss(&id, &x).unwrap(), 1.0);
    assert!(fidelity_loss(&rz(0.0), &rz(PI)).unwrap() > 1.0 - 1e-15);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let (theta, delta) = (rng.gen_range(0.0..TAU), rng.gen_range(-PI..PI));
        let r = fidelity(&rz(theta), &rz(theta + delta)).unwrap();
        assert!((r.fidelity - (delta / 2.0).cos().powi(2)).abs() < 1e-10);
        assert!((r.fidelity - r.trace_overlap.norm_sqr() / 4.0).abs() < 1e-12);
    }
}

#[test]
fn fidelity_is_symmetric_and_phase_blind() {
    let gs = GateSetConfig::ionq();
    for seed in 0..20u64 {
        let spec = |s| RandomCircuitSpec { num_qubits: 3, depth: 5, include_measure: false, seed: s };
        let u = circuit_unitary(&random_circuit(&spec(seed), &gs).unwrap()).unwrap();
        let v = circuit_unitary(&random_circuit(&spec(seed + 77), &gs).unwrap()).unwrap();
        let f = fidelity(&u, &v).unwrap().fidelity;
        assert!((f - fidelity(&v, &u).unwrap().fidelity).abs() < 1e-12);
        let phased = u.scale(C::from_polar(1.0, 0.1 * seed as f64));
        assert!((fidelity(&phased, &v).unwrap().fidelity - f).abs() < 1e-12);
        assert!((fidelity(&phased, &u).unwrap().fidelity - 1.0).abs() < 1e-12);
    }
}

#[test]
fn dimension_mismatch_is_an_error() {
    assert!(fidelity(&UnitaryMatrix::identity(2), &UnitaryMatrix::identity(4)).is_err());
}
