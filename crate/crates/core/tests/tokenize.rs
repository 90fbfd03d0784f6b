use proptest::prelude::*;
use qtranspile_core::circuit::{Circuit, GateApplication, GateKind};
use qtranspile_core::gateset::GateSetConfig;
use qtranspile_core::linalg::circuit_fidelity;
use qtranspile_core::ruleset::{random_circuit, RandomCircuitSpec};
use qtranspile_core::tokenizer::{bin_angle, decode, decode_ids, encode, unbin_angle, AngleBinner, Vocabulary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{PI, TAU};

fn wrapped(d: f64) -> f64 {
    (d + PI).rem_euclid(TAU) - PI
}

#[test]
fn reconstruction_error_is_below_one_bin() {
    let b = AngleBinner::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10_000 {
        let theta = rng.gen_range(-20.0..20.0);
        let norm = b.normalize(theta).unwrap();
        let rec = unbin_angle(bin_angle(theta, &b).unwrap(), &b).unwrap();
        assert!((0.0..TAU).contains(&norm));
        assert!(norm - rec >= 0.0 && norm - rec < TAU / 128.0, "{theta}");
    }
}

#[test]
fn minus_half_pi_lands_in_bin_96() {
    let b = AngleBinner::default();
    let norm = (-1.57f64).rem_euclid(TAU);
    assert_eq!((norm / TAU * 128.0).floor() as usize, 96);
    assert_eq!(bin_angle(-PI / 2.0, &b).unwrap(), 96);
    assert!((unbin_angle(96, &b).unwrap() - 1.5 * PI).abs() < 1e-15);
}

/// Phase-minimized operator-norm distance of two rotations differing by δ is
/// 2 sin(|δ|/4) ≤ |δ|/2; distances add along the circuit, and a total
/// distance D guarantees fidelity ≥ (1 − D²/2)².
#[test]
fn binned_round_trip_fidelity_is_bounded() {
    let vocab = Vocabulary::default();
    for gs in [GateSetConfig::eagle(), GateSetConfig::ionq()] {
        for n in 1..=5 {
            for depth in [1usize, 5, 20] {
                let spec = RandomCircuitSpec { num_qubits: n, depth, include_measure: false, seed: (n * 7 + depth) as u64 };
                let c = random_circuit(&spec, &gs).unwrap();
                let back = decode(&encode(&c, &vocab).unwrap(), &vocab).unwrap();
                assert_eq!(back.ops.len(), c.ops.len());
                let mut total = 0.0;
                for (a, b) in c.ops.iter().zip(&back.ops) {
                    assert_eq!((a.gate, &a.qubits), (b.gate, &b.qubits));
                    for (x, y) in a.params.iter().zip(&b.params) {
                        total += 2.0 * (wrapped(x - y).abs() / 4.0).sin();
                    }
                }
                let bound = (1.0 - total * total / 2.0).max(0.0).powi(2);
                let f = circuit_fidelity(&c, &back).unwrap();
                assert!(f >= bound - 1e-12, "{} n={n} depth={depth}: {f} < {bound}", gs.name);
            }
        }
    }
}

#[test]
fn token_counts_add_up() {
    let vocab = Vocabulary::default();
    let gs = GateSetConfig::eagle();
    for s in 0..20u64 {
        let a = random_circuit(&RandomCircuitSpec { num_qubits: 3, depth: 4, include_measure: false, seed: s }, &gs).unwrap();
        let b = random_circuit(&RandomCircuitSpec { num_qubits: 3, depth: 3, include_measure: false, seed: s + 50 }, &gs)
            .unwrap();
        let mut ab = a.clone();
        for op in &b.ops {
            ab.push(op.clone());
        }
        let len = |c: &Circuit| encode(c, &vocab).unwrap().len();
        assert_eq!(len(&ab), len(&a) + len(&b) - vocab.header_len(0));
    }
}

fn arb_op(n: usize) -> impl Strategy<Value = GateApplication> {
    let gates: Vec<GateKind> = GateKind::UNITARY.iter().copied().filter(|g| g.num_qubits() <= n).collect();
    (prop::sample::select(gates), 0..n, 1..n.max(2), 0usize..128).prop_map(move |(g, a, off, bin)| {
        let angle = bin as f64 * TAU / 128.0 + 0.01;
        let qubits = if g.num_qubits() == 2 { vec![a, (a + off) % n] } else { vec![a] };
        GateApplication::new(g, vec![angle; g.num_params()], qubits)
    })
}

fn arb_circuit() -> impl Strategy<Value = Circuit> {
    (1usize..=5).prop_flat_map(|n| {
        prop::collection::vec(arb_op(n), 0..12).prop_map(move |ops| {
            let mut c = Circuit::new(n);
            for op in ops {
                c.push(op);
            }
            c
        })
    })
}

proptest! {
    #[test]
    fn decode_is_total(ids in prop::collection::vec(0u32..200, 0..60)) {
        let vocab = Vocabulary::default();
        let _ = decode_ids(&ids, &vocab);
    }

    #[test]
    fn mutated_sequences_never_panic(c in arb_circuit(), pos in any::<prop::sample::Index>(), tok in 0u32..170) {
        let vocab = Vocabulary::default();
        let mut ids = encode(&c, &vocab).unwrap().ids;
        let i = pos.index(ids.len());
        ids[i] = tok;
        if let Ok(d) = decode_ids(&ids, &vocab) {
            prop_assert!(d.validate().is_ok());
        }
    }

    #[test]
    fn distinct_circuits_encode_distinctly(a in arb_circuit(), b in arb_circuit()) {
        let vocab = Vocabulary::default();
        let (ea, eb) = (encode(&a, &vocab).unwrap(), encode(&b, &vocab).unwrap());
        let same_shape = a.num_qubits == b.num_qubits
            && a.ops.len() == b.ops.len()
            && a.ops.iter().zip(&b.ops).all(|(x, y)| {
                x.gate == y.gate
                    && x.qubits == y.qubits
                    && x.params.iter().zip(&y.params).all(|(p, q)| {
                        bin_angle(*p, vocab.binner()).unwrap() == bin_angle(*q, vocab.binner()).unwrap()
                    })
            });
        prop_assert_eq!(ea.ids == eb.ids, same_shape);
    }

    #[test]
    fn round_trip_preserves_structure(c in arb_circuit()) {
        let vocab = Vocabulary::default();
        let back = decode(&encode(&c, &vocab).unwrap(), &vocab).unwrap();
        prop_assert_eq!(back.num_qubits, c.num_qubits);
        prop_assert_eq!(back.ops.len(), c.ops.len());
        for (x, y) in c.ops.iter().zip(&back.ops) {
            prop_assert_eq!(x.gate, y.gate);
            prop_assert_eq!(&x.qubits, &y.qubits);
            for (p, q) in x.params.iter().zip(&y.params) {
                let norm = vocab.binner().normalize(*p).unwrap();
                prop_assert!(norm - q >= 0.0 && norm - q < TAU / 128.0);
            }
        }
    }
}
