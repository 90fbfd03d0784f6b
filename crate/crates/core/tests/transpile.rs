use qtranspile_core::exec::Exec;
use qtranspile_core::gateset::GateSetConfig;
use qtranspile_core::linalg::circuit_fidelity;
use qtranspile_core::qasm;
use qtranspile_core::ruleset::{
    build_dataset, manifest_path, random_circuit, read_dataset, transpile_rules, DatasetSpec, MeasureMode,
    RandomCircuitSpec,
};
use qtranspile_core::tokenizer::Vocabulary;

#[test]
fn rules_preserve_fidelity_on_random_circuits() {
    let eagle = GateSetConfig::eagle();
    for target in [GateSetConfig::ionq(), GateSetConfig::heron()] {
        for n in 1..=5 {
            for depth in [1usize, 7, 20] {
                for s in 0..20u64 {
                    let spec = RandomCircuitSpec {
                        num_qubits: n,
                        depth,
                        include_measure: s % 3 == 0,
                        seed: s * 31 + n as u64,
                    };
                    let src = random_circuit(&spec, &eagle).unwrap();
                    let tgt = transpile_rules(&src, &target).unwrap();
                    assert!(tgt.ops.iter().all(|op| target.contains(op.gate)));
                    let f = circuit_fidelity(&src, &tgt).unwrap();
                    assert!(f >= 1.0 - 1e-9, "{} n={n} depth={depth}: {f}", target.name);
                }
            }
        }
    }
}

#[test]
fn transpiling_twice_changes_nothing() {
    let eagle = GateSetConfig::eagle();
    for target in [GateSetConfig::ionq(), GateSetConfig::heron(), GateSetConfig::eagle()] {
        for s in 0..10u64 {
            let spec = RandomCircuitSpec { num_qubits: 3, depth: 8, include_measure: true, seed: s };
            let once = transpile_rules(&random_circuit(&spec, &eagle).unwrap(), &target).unwrap();
            assert_eq!(transpile_rules(&once, &target).unwrap(), once);
        }
    }
}

#[test]
fn ionq_and_heron_round_trip_back_to_eagle() {
    let eagle = GateSetConfig::eagle();
    for mid in [GateSetConfig::ionq(), GateSetConfig::heron()] {
        let spec = RandomCircuitSpec { num_qubits: 2, depth: 6, include_measure: false, seed: 9 };
        let src = random_circuit(&spec, &eagle).unwrap();
        let back = transpile_rules(&transpile_rules(&src, &mid).unwrap(), &eagle).unwrap();
        assert!(circuit_fidelity(&src, &back).unwrap() >= 1.0 - 1e-9);
    }
}

fn spec(seed: u64) -> DatasetSpec {
    DatasetSpec {
        qubit_counts: vec![1, 2, 3],
        min_depth: 1,
        max_depth: 6,
        measure: MeasureMode::Random,
        seed,
    }
}

#[test]
fn dataset_is_byte_identical_across_runs_and_executors() {
    let dir = tempfile::tempdir().unwrap();
    let vocab = Vocabulary::default();
    let (eagle, ionq) = (GateSetConfig::eagle(), GateSetConfig::ionq());
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    build_dataset(&a, 40, &spec(11), &eagle, &ionq, &vocab, 768, Exec::Sequential).unwrap();
    build_dataset(&b, 40, &spec(11), &eagle, &ionq, &vocab, 768, Exec::Parallel).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(
        std::fs::read(manifest_path(&a)).unwrap(),
        std::fs::read(manifest_path(&b)).unwrap()
    );
    let c = dir.path().join("c.jsonl");
    build_dataset(&c, 40, &spec(12), &eagle, &ionq, &vocab, 768, Exec::Parallel).unwrap();
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn every_written_pair_is_faithful() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    let vocab = Vocabulary::default();
    let (eagle, heron) = (GateSetConfig::eagle(), GateSetConfig::heron());
    let stats = build_dataset(&path, 30, &spec(3), &eagle, &heron, &vocab, 768, Exec::Parallel).unwrap();
    let records = read_dataset(&path).unwrap();
    assert_eq!(records.len(), stats.written);
    assert_eq!(stats.written + stats.dropped, 90);
    for r in &records {
        let src = qasm::parse(&r.source_qasm).unwrap();
        let tgt = qasm::parse(&r.target_qasm).unwrap();
        assert_eq!(src.num_qubits, r.n_qubits);
        assert!(circuit_fidelity(&src, &tgt).unwrap() >= 1.0 - 1e-9);
    }
}

#[test]
fn context_window_filters_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.jsonl");
    let vocab = Vocabulary::default();
    let one_qubit = DatasetSpec { qubit_counts: vec![1], min_depth: 1, max_depth: 2, ..spec(1) };
    let (eagle, ionq) = (GateSetConfig::eagle(), GateSetConfig::ionq());
    let stats = build_dataset(&path, 25, &one_qubit, &eagle, &ionq, &vocab, 768, Exec::Parallel).unwrap();
    assert_eq!(stats.dropped, 0);
    assert_eq!(stats.written, 25);
    let stats = build_dataset(&path, 25, &one_qubit, &eagle, &ionq, &vocab, 10, Exec::Parallel).unwrap();
    assert_eq!(stats.dropped, 25);
    assert!(read_dataset(&path).unwrap().is_empty());
}
