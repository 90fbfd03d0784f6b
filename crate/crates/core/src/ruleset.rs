//! Rule-based reference transpiler, random circuit generator and paired
//! dataset builder.

use std::f64::consts::TAU;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, GateApplication, GateKind};
use crate::exec::{self, Exec};
use crate::gateset::{instantiate, GateSetConfig};
use crate::linalg::{self, circuit_fidelity};
use crate::qasm;
use crate::tokenizer::{self, Vocabulary};

pub const GENERATOR_VERSION: &str = concat!("qtranspile-core/", env!("CARGO_PKG_VERSION"));

/// Fidelity every rule and every transpiled pair must reach.
pub const ORACLE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum RulesetError {
    #[error("gate set `{gate_set}` has no {arity}-qubit-or-smaller gate for a {num_qubits}-qubit circuit")]
    NoEligibleGate {
        gate_set: String,
        arity: usize,
        num_qubits: usize,
    },
    #[error("gate set `{gate_set}` has no rule for `{gate}`")]
    MissingRule { gate_set: String, gate: GateKind },
    #[error("rule `{gate}` -> `{gate_set}` reaches fidelity {fidelity:.3e} below 1 - {ORACLE_TOLERANCE:e}")]
    UnsoundRule {
        gate_set: String,
        gate: GateKind,
        fidelity: f64,
    },
    #[error("pair {index}: transpiled fidelity {fidelity} below tolerance")]
    UnsoundPair { index: usize, fidelity: f64 },
    #[error(transparent)]
    Circuit(#[from] crate::circuit::CircuitError),
    #[error(transparent)]
    Tokenize(#[from] tokenizer::TokenizeError),
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
    #[error(transparent)]
    Emit(#[from] qasm::EmitError),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RulesetError + '_ {
    move |source| RulesetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomCircuitSpec {
    pub num_qubits: usize,
    /// Number of layers; each qubit is touched at most once per layer.
    pub depth: usize,
    pub include_measure: bool,
    pub seed: u64,
}

/// Uniform draw among the gates of `gs` acting on at most `max_arity` qubits.
pub fn sample_gate<R: Rng>(rng: &mut R, gs: &GateSetConfig, max_arity: usize) -> Option<GateKind> {
    let eligible: Vec<GateKind> = gs
        .gates
        .iter()
        .copied()
        .filter(|g| g.num_qubits() <= max_arity)
        .collect();
    eligible.choose(rng).copied()
}

/// Layered random circuit over the native gates of `gs`.
pub fn random_circuit(spec: &RandomCircuitSpec, gs: &GateSetConfig) -> Result<Circuit, RulesetError> {
    let n = spec.num_qubits;
    let min_arity = gs.gates.iter().map(|g| g.num_qubits()).min().unwrap_or(usize::MAX);
    if n == 0 || min_arity > n {
        return Err(RulesetError::NoEligibleGate {
            gate_set: gs.name.clone(),
            arity: n,
            num_qubits: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut c = Circuit::new(n);
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..spec.depth {
        order.shuffle(&mut rng);
        let mut next = 0;
        while next < n {
            let remaining = n - next;
            let Some(gate) = sample_gate(&mut rng, gs, remaining.min(2)) else {
                break;
            };
            let qubits = order[next..next + gate.num_qubits()].to_vec();
            next += gate.num_qubits();
            let params = (0..gate.num_params()).map(|_| rng.gen_range(0.0..TAU)).collect();
            c.push(GateApplication::new(gate, params, qubits));
        }
    }
    if spec.include_measure {
        c.measure_all();
    }
    Ok(c)
}

/// Rewrites every foreign gate of `c` with the rules of `target`.
pub fn transpile_rules(c: &Circuit, target: &GateSetConfig) -> Result<Circuit, RulesetError> {
    let mut out = Circuit::with_clbits(c.num_qubits, c.num_clbits);
    for op in &c.ops {
        if target.contains(op.gate) {
            out.push(op.clone());
            continue;
        }
        let rule = target.rules.get(&op.gate).ok_or_else(|| RulesetError::MissingRule {
            gate_set: target.name.clone(),
            gate: op.gate,
        })?;
        for new_op in instantiate(rule, op) {
            out.push(new_op);
        }
    }
    Ok(out)
}

/// Checks every rule of `gs` against the simulator at a spread of angles.
pub fn validate_rules(gs: &GateSetConfig) -> Result<(), RulesetError> {
    let angles = [0.0, 0.37, 1.0, -2.2, std::f64::consts::PI, 4.9];
    for (&gate, template) in &gs.rules {
        if let Some(op) = template.iter().find(|t| !gs.gates.contains(&t.gate)) {
            return Err(RulesetError::MissingRule {
                gate_set: gs.name.clone(),
                gate: op.gate,
            });
        }
        let qubits: Vec<usize> = (0..gate.num_qubits()).collect();
        let sweep: &[f64] = if gate.num_params() == 1 { &angles } else { &[0.0] };
        for &theta in sweep {
            let params = if gate.num_params() == 1 { vec![theta] } else { vec![] };
            let mut reference = Circuit::new(gate.num_qubits());
            reference.push(GateApplication::new(gate, params, qubits.clone()));
            let lowered = transpile_rules(&reference, gs)?;
            let fidelity = circuit_fidelity(&reference, &lowered)?;
            if fidelity < 1.0 - ORACLE_TOLERANCE {
                return Err(RulesetError::UnsoundRule {
                    gate_set: gs.name.clone(),
                    gate,
                    fidelity,
                });
            }
        }
    }
    Ok(())
}

/// Whether final measurements are appended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MeasureMode {
    #[default]
    Never,
    Always,
    Random,
}

/// Shape of the circuits drawn for a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    /// `n_pairs` circuits are drawn for each listed register width.
    pub qubit_counts: Vec<usize>,
    pub min_depth: usize,
    pub max_depth: usize,
    pub measure: MeasureMode,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub source_qasm: String,
    pub target_qasm: String,
    pub n_qubits: usize,
    pub depth: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub written: usize,
    pub dropped: usize,
    pub mean_token_len_src: f64,
    pub mean_token_len_tgt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub generator_version: String,
    pub source_gate_set: String,
    pub target_gate_set: String,
    pub angle_grid: usize,
    pub context_window: usize,
    pub n_pairs_per_qubit_count: usize,
    pub spec: DatasetSpec,
    pub stats: DatasetStats,
}

/// SplitMix64 step, used to derive independent per-pair seeds.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Generated {
    record: DatasetRecord,
    src_len: usize,
    tgt_len: usize,
}

fn generate_pair(
    index: usize,
    num_qubits: usize,
    spec: &DatasetSpec,
    source: &GateSetConfig,
    target: &GateSetConfig,
    vocab: &Vocabulary,
) -> Result<Generated, RulesetError> {
    let seed = derive_seed(spec.seed, index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.gen_range(spec.min_depth..=spec.max_depth.max(spec.min_depth));
    let include_measure = match spec.measure {
        MeasureMode::Never => false,
        MeasureMode::Always => true,
        MeasureMode::Random => rng.gen_bool(0.5),
    };
    let src = random_circuit(
        &RandomCircuitSpec {
            num_qubits,
            depth,
            include_measure,
            seed,
        },
        source,
    )?;
    let tgt = transpile_rules(&src, target)?;
    let fidelity = circuit_fidelity(&src, &tgt)?;
    if fidelity < 1.0 - ORACLE_TOLERANCE {
        return Err(RulesetError::UnsoundPair { index, fidelity });
    }
    Ok(Generated {
        src_len: tokenizer::encode(&src, vocab)?.len(),
        tgt_len: tokenizer::encode(&tgt, vocab)?.len(),
        record: DatasetRecord {
            source_qasm: qasm::emit(&src, source)?,
            target_qasm: qasm::emit(&tgt, target)?,
            n_qubits: num_qubits,
            depth,
            seed,
        },
    })
}

/// Path of the sidecar manifest written next to a dataset file.
pub fn manifest_path(dataset: &Path) -> PathBuf {
    let mut name = dataset.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// Generates `n_pairs` source/target pairs per qubit count, drops those that
/// do not fit `context_window` tokens on either side, and writes JSON Lines
/// plus a manifest. Records appear in generation order regardless of `exec`.
#[allow(clippy::too_many_arguments)]
pub fn build_dataset(
    path: &Path,
    n_pairs: usize,
    spec: &DatasetSpec,
    source: &GateSetConfig,
    target: &GateSetConfig,
    vocab: &Vocabulary,
    context_window: usize,
    exec: Exec,
) -> Result<DatasetStats, RulesetError> {
    let jobs: Vec<(usize, usize)> = spec
        .qubit_counts
        .iter()
        .flat_map(|&n| std::iter::repeat_n(n, n_pairs))
        .enumerate()
        .collect();
    let generated = exec::map_slice(exec, &jobs, |&(index, n)| {
        generate_pair(index, n, spec, source, target, vocab)
    });

    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    let (mut written, mut dropped) = (0usize, 0usize);
    let (mut src_total, mut tgt_total) = (0usize, 0usize);
    for g in generated {
        let g = g?;
        if g.src_len > context_window || g.tgt_len > context_window {
            dropped += 1;
            continue;
        }
        written += 1;
        src_total += g.src_len;
        tgt_total += g.tgt_len;
        let line = serde_json::to_string(&g.record).expect("record serializes");
        writeln!(out, "{line}").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))?;

    let mean = |total: usize| if written == 0 { 0.0 } else { total as f64 / written as f64 };
    let stats = DatasetStats {
        written,
        dropped,
        mean_token_len_src: mean(src_total),
        mean_token_len_tgt: mean(tgt_total),
    };
    let manifest = DatasetManifest {
        generator_version: GENERATOR_VERSION.to_string(),
        source_gate_set: source.name.clone(),
        target_gate_set: target.name.clone(),
        angle_grid: vocab.binner().grid,
        context_window,
        n_pairs_per_qubit_count: n_pairs,
        spec: spec.clone(),
        stats: stats.clone(),
    };
    let mpath = manifest_path(path);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&mpath, json + "\n").map_err(io_err(&mpath))?;
    Ok(stats)
}

pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRecord>, RulesetError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| RulesetError::Format {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}
