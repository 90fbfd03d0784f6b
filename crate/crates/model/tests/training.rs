use qtranspile_core::ruleset::{build_dataset, read_dataset, DatasetSpec, MeasureMode};
use qtranspile_core::{Exec, GateSetConfig, Vocabulary};
use qtranspile_model::eval::{examples, Example};
use qtranspile_model::train::{split, TrainOutcome};
use qtranspile_model::{LossConfig, ModelConfig, OptimizerConfig, TrainConfig, TrainSetup, Transformer};

fn dataset(n_qubits: usize, n_pairs: usize, seed: u64) -> (Vec<Example>, Vocabulary) {
    let vocab = Vocabulary::default();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pairs.jsonl");
    let spec = DatasetSpec {
        qubit_counts: vec![n_qubits],
        min_depth: 1,
        max_depth: 3,
        measure: MeasureMode::Never,
        seed,
    };
    build_dataset(&path, n_pairs, &spec, &GateSetConfig::eagle(), &GateSetConfig::ionq(), &vocab, 256, Exec::Parallel).unwrap();
    (examples(&read_dataset(&path).unwrap(), &vocab).unwrap(), vocab)
}

fn train(set: &[Example], vocab: &Vocabulary, tc: &TrainConfig, lc: &LossConfig, exec: Exec) -> TrainOutcome<f32> {
    let (tr, held) = split(set, 0.2, tc.seed);
    let oc = OptimizerConfig {
        lr: 1e-3,
        warmup: 10,
        ..Default::default()
    };
    let target = GateSetConfig::ionq();
    let setup = TrainSetup {
        train: &tr,
        held_out: &held,
        vocab,
        target: &target,
        tc,
        lc,
        oc: &oc,
        out_dir: None,
        exec,
    };
    setup.run(Transformer::new(ModelConfig::toy(vocab.len()), tc.seed).unwrap()).unwrap()
}

#[test]
fn trace_is_identical_across_executors() {
    let (set, vocab) = dataset(2, 24, 3);
    let tc = TrainConfig {
        steps: 12,
        batch_size: 8,
        fidelity_batch: 3,
        eval_every: 6,
        seed: 5,
        ..Default::default()
    };
    let lc = LossConfig::ramp(tc.steps);
    let a = train(&set, &vocab, &tc, &lc, Exec::Parallel);
    let b = train(&set, &vocab, &tc, &lc, Exec::Sequential);
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.evals, b.evals);
    assert_eq!(a.model.params, b.model.params);
}

#[test]
fn fidelity_term_follows_the_schedule() {
    let (set, vocab) = dataset(1, 16, 4);
    let tc = TrainConfig {
        steps: 10,
        batch_size: 8,
        fidelity_batch: 2,
        ..Default::default()
    };
    let out = train(&set, &vocab, &tc, &LossConfig::ramp(tc.steps), Exec::Parallel);
    for r in &out.trace {
        assert_eq!(r.l_f.is_some(), r.alpha > 0.0, "step {}", r.step);
        let expect = r.beta * r.l_ce + r.alpha * r.l_f.unwrap_or(0.0);
        assert!((r.l - expect).abs() < 1e-12);
        if let Some(f) = r.l_f {
            assert!((0.0..=1.0).contains(&f));
        }
    }
    assert!(out.trace[..3].iter().all(|r| r.l_f.is_none()));
    assert!(out.trace.last().unwrap().l_f.is_some());
}

#[test]
fn cross_entropy_falls() {
    let (set, vocab) = dataset(1, 16, 5);
    let tc = TrainConfig {
        steps: 150,
        batch_size: 12,
        ..Default::default()
    };
    let out = train(&set, &vocab, &tc, &LossConfig::default(), Exec::Parallel);
    let first: f64 = out.trace[..10].iter().map(|r| r.l_ce).sum::<f64>() / 10.0;
    let last: f64 = out.trace[140..].iter().map(|r| r.l_ce).sum::<f64>() / 10.0;
    assert!(last < 0.5 * first, "{first} -> {last}");
    assert!(out.trace.iter().all(|r| r.l_f.is_none()));
}
