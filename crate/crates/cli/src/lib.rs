//! `qtranspile` command line: dataset generation, tokenization, oracle and
//! model transpilation, Solovay-Kitaev rewriting, training, evaluation,
//! benchmarks and artifact inspection.

use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use qtranspile_core::linalg::circuit_fidelity;
use qtranspile_core::ruleset::{self, build_dataset, read_dataset, RulesetError};
use qtranspile_core::scaling::{self, SweepAxis, TokenSweep};
use qtranspile_core::sk::{self, SkError, SkNet, SolovayKitaev};
use qtranspile_core::{qasm, tokenizer, Circuit, Exec, GateKind, GateSetConfig, Vocabulary};
use qtranspile_model::checkpoint;
use qtranspile_model::eval::{self, examples};
use qtranspile_model::train::split;
use qtranspile_model::{ModelError, TrainSetup, Transformer};

pub mod config;

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn invalid(e: impl Display) -> Self {
        CliError::Invalid(e.to_string())
    }

    pub fn io(path: &Path, e: impl Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Io { .. } => CliError::Io(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<RulesetError> for CliError {
    fn from(e: RulesetError) -> Self {
        match e {
            RulesetError::Io { .. } => CliError::Io(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<SkError> for CliError {
    fn from(e: SkError) -> Self {
        match e {
            SkError::Io { .. } | SkError::Cache { .. } => CliError::Io(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "qtranspile", version, about = "Quantum circuit transpilation workbench")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in scenario: eagle-to-ionq, eagle-to-heron or sk-discrete.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run single-threaded.
    #[arg(long)]
    pub sequential: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::resolve(self.config.as_deref(), self.preset.as_deref())?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.sequential {
            cfg.train.sequential = true;
        }
        Ok(cfg)
    }

    fn exec(&self) -> Exec {
        if self.sequential {
            Exec::Sequential
        } else {
            Exec::Parallel
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate oracle-transpiled source/target pairs as JSON Lines.
    GenData {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Run directory; receives pairs.jsonl, its manifest and config.toml.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        source: Option<String>,
        #[arg(long)]
        target: Option<String>,
        /// Comma-separated register widths.
        #[arg(long, value_delimiter = ',')]
        qubits: Option<Vec<usize>>,
        /// Pairs per register width.
        #[arg(long)]
        pairs: Option<usize>,
        #[arg(long)]
        min_depth: Option<usize>,
        #[arg(long)]
        max_depth: Option<usize>,
        #[arg(long)]
        context_window: Option<usize>,
    },
    /// Print the token sequence of a QASM file.
    Tokenize {
        file: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Translate a QASM file with the rule oracle or a trained checkpoint.
    Transpile {
        file: PathBuf,
        /// Use the rule-based reference transpiler.
        #[arg(long)]
        oracle: bool,
        /// Use a trained model instead.
        #[arg(long, conflicts_with = "oracle")]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "eagle")]
        from: String,
        #[arg(long, default_value = "ionq")]
        to: String,
        /// Write the fidelity report here instead of stderr.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Rewrite single-qubit gates over a discrete basis.
    Sk {
        file: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Comma-separated basis gates.
        #[arg(long, value_delimiter = ',')]
        basis: Option<Vec<String>>,
        #[arg(long)]
        base_length: Option<usize>,
        #[arg(long)]
        depth: Option<usize>,
        /// Total operator-norm error budget for the circuit.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Directory for the cached basic-approximation net.
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Train a model on a generated dataset.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Run directory for config, trace, evaluations and checkpoints.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        warmup: Option<usize>,
        #[arg(long)]
        eval_every: Option<usize>,
        #[arg(long)]
        checkpoint_every: Option<usize>,
    },
    /// Evaluate a checkpoint on a dataset.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Target gate set for the grammar check (defaults to the config's).
        #[arg(long)]
        to: Option<String>,
        /// Evaluate only the first N pairs.
        #[arg(long)]
        limit: Option<usize>,
        /// Report path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Token-scaling sweeps and optional Solovay-Kitaev growth.
    Bench {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Describe a checkpoint directory, vocabulary, dataset manifest or SK net.
    Inspect { path: PathBuf },
}

/// Runs a parsed command, writing primary output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::GenData {
            cfg,
            out: dir,
            source,
            target,
            qubits,
            pairs,
            min_depth,
            max_depth,
            context_window,
        } => {
            let mut rc = cfg.resolve()?;
            let d = &mut rc.data;
            set(&mut d.source, source);
            set(&mut d.target, target);
            set(&mut d.qubits, qubits);
            set(&mut d.pairs_per_qubit, pairs);
            set(&mut d.min_depth, min_depth);
            set(&mut d.max_depth, max_depth);
            set(&mut d.context_window, context_window);
            gen_data(&rc, &dir, cfg.exec(), out)
        }
        Command::Tokenize { file, json } => tokenize_file(&file, json, out),
        Command::Transpile {
            file,
            oracle,
            checkpoint,
            from,
            to,
            report,
        } => transpile(&file, oracle, checkpoint.as_deref(), &from, &to, report.as_deref(), out),
        Command::Sk {
            file,
            cfg,
            basis,
            base_length,
            depth,
            epsilon,
            cache_dir,
            report,
        } => {
            let mut rc = cfg.resolve()?;
            if let Some(b) = basis {
                rc.sk.basis = b
                    .iter()
                    .map(|g| g.parse::<GateKind>().map_err(CliError::invalid))
                    .collect::<Result<_, _>>()?;
            }
            set(&mut rc.sk.base_length, base_length);
            set(&mut rc.sk.recursion_depth, depth);
            set(&mut rc.sk.epsilon, epsilon);
            sk_file(&file, &rc, cache_dir.as_deref(), report.as_deref(), cfg.exec(), out)
        }
        Command::Train {
            cfg,
            data,
            out: dir,
            steps,
            batch_size,
            lr,
            warmup,
            eval_every,
            checkpoint_every,
        } => {
            let mut rc = cfg.resolve()?;
            if data.is_some() {
                rc.data.path = data;
            }
            set(&mut rc.train.steps, steps);
            set(&mut rc.train.batch_size, batch_size);
            set(&mut rc.optimizer.lr, lr);
            set(&mut rc.optimizer.warmup, warmup);
            set(&mut rc.train.eval_every, eval_every);
            set(&mut rc.train.checkpoint_every, checkpoint_every);
            train(&rc, &dir, out)
        }
        Command::Eval {
            cfg,
            checkpoint,
            data,
            to,
            limit,
            out: report,
        } => {
            let mut rc = cfg.resolve()?;
            set(&mut rc.data.target, to);
            evaluate(&rc, &checkpoint, &data, limit, report.as_deref(), cfg.exec(), out)
        }
        Command::Bench { cfg, out: dir, samples } => {
            let mut rc = cfg.resolve()?;
            set(&mut rc.bench.samples, samples);
            bench(&rc, &dir, cfg.exec(), out)
        }
        Command::Inspect { path } => inspect(&path, out),
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn exec_of(rc: &RunConfig) -> Exec {
    if rc.train.sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    }
}

fn gate_set(name: &str) -> Result<GateSetConfig, CliError> {
    GateSetConfig::by_name(name).map_err(CliError::Invalid)
}

fn read_circuit(path: &Path) -> Result<Circuit, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    qasm::parse(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("value serializes") + "\n"
}

fn emit_out(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(|e| CliError::Io(format!("stdout: {e}")))
}

/// Report goes to `path` when given, else to stderr.
fn emit_report<T: Serialize>(path: Option<&Path>, v: &T) -> Result<(), CliError> {
    match path {
        Some(p) => write_text(p, &pretty(v)),
        None => {
            eprint!("{}", pretty(v));
            Ok(())
        }
    }
}

pub fn gen_data(rc: &RunConfig, dir: &Path, exec: Exec, out: &mut dyn Write) -> Result<(), CliError> {
    let d = &rc.data;
    let source = gate_set(&d.source)?;
    let target = gate_set(&d.target)?;
    if d.qubits.is_empty() || d.min_depth > d.max_depth {
        return Err(CliError::Invalid("need at least one qubit count and min_depth <= max_depth".into()));
    }
    rc.echo(dir)?;
    let path = dir.join("pairs.jsonl");
    let stats = build_dataset(
        &path,
        d.pairs_per_qubit,
        &d.spec(rc.seed),
        &source,
        &target,
        &Vocabulary::default(),
        d.context_window,
        exec,
    )?;
    emit_out(out, &pretty(&json!({ "dataset": path, "stats": stats })))
}

pub fn tokenize_file(file: &Path, as_json: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let c = read_circuit(file)?;
    let vocab = Vocabulary::default();
    let seq = tokenizer::encode(&c, &vocab).map_err(CliError::invalid)?;
    let tokens = vocab.render(&seq.ids);
    let text = if as_json {
        pretty(&json!({ "ids": seq.ids, "tokens": tokens, "source_hash": seq.source_hash }))
    } else {
        seq.ids
            .iter()
            .zip(&tokens)
            .map(|(id, t)| format!("{id}\t{t}\n"))
            .collect()
    };
    emit_out(out, &text)
}

fn check_dialect(c: &Circuit, gs: &GateSetConfig) -> Result<(), CliError> {
    if let Some(op) = c.ops.iter().find(|op| !gs.contains(op.gate)) {
        return Err(CliError::Invalid(format!(
            "gate `{}` is not native to `{}`",
            op.gate, gs.name
        )));
    }
    Ok(())
}

pub fn transpile(
    file: &Path,
    oracle: bool,
    ckpt: Option<&Path>,
    from: &str,
    to: &str,
    report: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let source = gate_set(from)?;
    let target = gate_set(to)?;
    let c = read_circuit(file)?;
    check_dialect(&c, &source)?;
    let (result, method, valid) = match (oracle, ckpt) {
        (true, _) => (Some(ruleset::transpile_rules(&c, &target)?), "oracle".to_string(), true),
        (false, Some(dir)) => {
            let loaded = checkpoint::load::<f32>(dir)?;
            let src = tokenizer::encode(&c, &loaded.vocab).map_err(CliError::invalid)?;
            let dc = qtranspile_model::DecodeConfig::greedy(loaded.model.cfg.context_window);
            let ids = loaded.model.decode_sequence(&src.ids, &dc)?;
            let decoded = tokenizer::decode_ids(&ids, &loaded.vocab).ok().filter(|d| d.validate().is_ok());
            let ok = decoded.as_ref().is_some_and(|d| check_dialect(d, &target).is_ok());
            (decoded, format!("model:{}", dir.display()), ok)
        }
        (false, None) => return Err(CliError::Invalid("pass --oracle or --checkpoint".into())),
    };
    let fidelity = match &result {
        Some(t) if valid => Some(circuit_fidelity(&c, t).map_err(CliError::invalid)?),
        _ => None,
    };
    emit_report(
        report,
        &json!({
            "method": method,
            "source_gate_set": source.name,
            "target_gate_set": target.name,
            "source_gates": c.gate_count(),
            "target_gates": result.as_ref().map(|t| t.gate_count()),
            "grammar_valid": valid,
            "fidelity": fidelity,
        }),
    )?;
    match result.filter(|_| valid) {
        Some(t) => emit_out(out, &qasm::emit(&t, &target).map_err(CliError::invalid)?),
        None => Err(CliError::Invalid("model output is not a valid program in the target gate set".into())),
    }
}

pub fn sk_file(
    file: &Path,
    rc: &RunConfig,
    cache_dir: Option<&Path>,
    report: Option<&Path>,
    exec: Exec,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let c = read_circuit(file)?;
    rc.sk.validate()?;
    let net = match cache_dir {
        Some(dir) => SkNet::load_or_build(dir, &rc.sk, exec)?,
        None => SkNet::build(&rc.sk, exec)?,
    };
    let net_size = net.len();
    let solver = SolovayKitaev::new(net);
    let r = sk::sk_circuit(&c, &solver, &rc.sk)?;
    let fidelity = (c.num_qubits <= 10)
        .then(|| circuit_fidelity(&c, &r.circuit))
        .transpose()
        .map_err(CliError::invalid)?;
    emit_report(
        report,
        &json!({
            "basis": rc.sk.basis,
            "base_length": rc.sk.base_length,
            "recursion_depth": rc.sk.recursion_depth,
            "epsilon": rc.sk.epsilon,
            "net_size": net_size,
            "decomposed": r.decomposed,
            "budget": r.budget,
            "distances": r.distances,
            "total_distance": r.total_distance,
            "fidelity_floor": r.fidelity_floor,
            "fidelity": fidelity,
            "plateaus": r.plateaus,
            "gates": r.circuit.gate_count(),
        }),
    )?;
    emit_out(out, &qasm::to_qasm(&r.circuit))
}

pub fn train(rc: &RunConfig, dir: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let data = rc
        .data
        .path
        .clone()
        .ok_or_else(|| CliError::Invalid("no dataset: pass --data or set data.path".into()))?;
    let target = gate_set(&rc.data.target)?;
    let vocab = Vocabulary::default();
    let records = read_dataset(&data)?;
    let set = examples(&records, &vocab)?;
    let (train_set, held) = split(&set, rc.data.holdout, rc.seed);
    let mcfg = rc.model.build(vocab.len())?;
    let tc = rc.train.build(rc.seed);
    let lc = rc.loss.build(tc.steps);
    rc.echo(dir)?;
    let model = Transformer::<f32>::new(mcfg, rc.seed)?;
    let setup = TrainSetup {
        train: &train_set,
        held_out: &held,
        vocab: &vocab,
        target: &target,
        tc: &tc,
        lc: &lc,
        oc: &rc.optimizer,
        out_dir: Some(dir),
        exec: exec_of(rc),
    };
    let outcome = setup.run(model)?;
    let last = outcome.trace.last();
    emit_out(
        out,
        &pretty(&json!({
            "run_dir": dir,
            "steps": tc.steps,
            "train_pairs": train_set.len(),
            "held_out_pairs": held.len(),
            "final_loss": last.map(|r| r.l),
            "final_eval": outcome.evals.last(),
        })),
    )
}

pub fn evaluate(
    rc: &RunConfig,
    ckpt: &Path,
    data: &Path,
    limit: Option<usize>,
    report: Option<&Path>,
    exec: Exec,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let loaded = checkpoint::load::<f32>(ckpt)?;
    let target = gate_set(&rc.data.target)?;
    let records = read_dataset(data)?;
    let n = limit.unwrap_or(records.len()).min(records.len());
    let set = examples(&records[..n], &loaded.vocab)?;
    let window = loaded.model.cfg.context_window;
    let dc = rc.decode.build(rc.seed, window)?;
    let lc = rc.loss.build(rc.train.steps);
    let r = eval::evaluate(&loaded.model, &set, &loaded.vocab, &target, &dc, &lc, loaded.manifest.step, exec)?;
    match report {
        Some(p) => write_text(p, &pretty(&r)),
        None => emit_out(out, &pretty(&r)),
    }
}

pub fn bench(rc: &RunConfig, dir: &Path, exec: Exec, out: &mut dyn Write) -> Result<(), CliError> {
    let b = &rc.bench;
    let source = gate_set(&rc.data.source)?;
    let target = gate_set(&rc.data.target)?;
    let vocab = Vocabulary::default();
    rc.echo(dir)?;
    let mut summary = serde_json::Map::new();
    for (axis, name) in [(SweepAxis::Depth, "depth"), (SweepAxis::Qubits, "qubits")] {
        let (fixed, points) = b.axis_points(axis);
        let sweep = TokenSweep {
            axis,
            fixed,
            points: points.to_vec(),
            samples: b.samples,
            include_measure: b.include_measure,
            seed: rc.seed,
        };
        let s = scaling::measure_tokens(&sweep, &source, &target, &vocab, exec)?;
        let file = format!("scaling-{name}.csv");
        let p = dir.join(&file);
        scaling::write_csv(&p, &s.rows).map_err(|e| CliError::io(&p, e))?;
        summary.insert(
            name.into(),
            json!({ "fit": s.fit, "per_gate": s.per_gate, "budget": s.budget, "csv": file }),
        );
    }
    if b.sk_growth {
        rc.sk.validate()?;
        let solver = SolovayKitaev::build(&rc.sk, exec)?;
        let n = b.sk_angles.max(1);
        let targets: Vec<f64> = (0..n)
            .map(|i| std::f64::consts::TAU * (i as f64 + 0.5) / n as f64)
            .collect();
        let g = scaling::measure_sk_growth(&targets, rc.sk.recursion_depth, rc.sk.epsilon, &solver, exec);
        let p = dir.join("sk-growth.csv");
        scaling::write_csv(&p, &g.rows).map_err(|e| CliError::io(&p, e))?;
        summary.insert(
            "sk_growth".into(),
            json!({ "exponent": g.exponent, "exponent_ci95": g.exponent_ci95, "plateaus": g.plateaus, "csv": "sk-growth.csv" }),
        );
    }
    let text = pretty(&summary);
    write_text(&dir.join("bench.json"), &text)?;
    emit_out(out, &text)
}

pub fn inspect(path: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    if path.is_dir() {
        let m = checkpoint::read_manifest(path)?;
        return emit_out(
            out,
            &pretty(&json!({
                "kind": "checkpoint",
                "format": m.format,
                "step": m.step,
                "num_params": m.num_params,
                "arrays": m.arrays.len(),
                "vocab_hash": m.vocab_hash,
                "config": m.config,
            })),
        );
    }
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    if bytes.starts_with(b"QTSKNET1") {
        let net = SkNet::load(path)?;
        return emit_out(out, &pretty(&json!({ "kind": "sk_net", "entries": net.len() })));
    }
    let text = String::from_utf8(bytes).map_err(|_| CliError::Invalid(format!("{}: unrecognized file", path.display())))?;
    if let Ok(v) = Vocabulary::from_json(&text) {
        return emit_out(
            out,
            &pretty(&json!({
                "kind": "vocabulary",
                "size": v.len(),
                "angle_grid": v.binner().grid,
                "max_qubits": v.max_qubits(),
                "hash": v.content_hash(),
            })),
        );
    }
    if let Ok(m) = serde_json::from_str::<ruleset::DatasetManifest>(&text) {
        return emit_out(out, &pretty(&json!({ "kind": "dataset_manifest", "manifest": m })));
    }
    Err(CliError::Invalid(format!("{}: not a checkpoint, vocabulary, dataset manifest or SK net", path.display())))
}
