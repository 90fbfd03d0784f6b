//! Tokenized pairs, output grading and held-out evaluation.

use serde::{Deserialize, Serialize};

use qtranspile_core::exec::{self, Exec};
use qtranspile_core::linalg::circuit_fidelity;
use qtranspile_core::ruleset::DatasetRecord;
use qtranspile_core::{qasm, tokenizer, Circuit, GateSetConfig, Vocabulary};

use crate::config::{DecodeConfig, LossConfig};
use crate::loss::ce_rows;
use crate::model::{Packed, Transformer};
use crate::scalar::Scalar;
use crate::ModelError;

/// One training pair: token ids of both sides plus the source circuit used
/// as the fidelity reference.
#[derive(Debug, Clone)]
pub struct Example {
    pub src: Vec<u32>,
    pub tgt: Vec<u32>,
    pub reference: Circuit,
}

impl Example {
    pub fn from_record(r: &DatasetRecord, vocab: &Vocabulary) -> Result<Self, ModelError> {
        let parse = |s: &str| qasm::parse(s).map_err(|e| ModelError::Dataset(e.to_string()));
        let reference = parse(&r.source_qasm)?;
        let target = parse(&r.target_qasm)?;
        let enc = |c: &Circuit| {
            tokenizer::encode(c, vocab)
                .map(|t| t.ids)
                .map_err(|e| ModelError::Dataset(e.to_string()))
        };
        Ok(Self {
            src: enc(&reference)?,
            tgt: enc(&target)?,
            reference,
        })
    }

    pub fn decoder_input(&self) -> &[u32] {
        &self.tgt[..self.tgt.len() - 1]
    }

    pub fn labels(&self) -> &[u32] {
        &self.tgt[1..]
    }
}

pub fn examples(records: &[DatasetRecord], vocab: &Vocabulary) -> Result<Vec<Example>, ModelError> {
    records.iter().map(|r| Example::from_record(r, vocab)).collect()
}

/// Fidelity of a decoded output against `reference`, or `None` when the
/// output is not a valid program in the target dialect: it must detokenize,
/// pass circuit validation, emit in `target` and parse back.
pub fn grade(ids: &[u32], reference: &Circuit, vocab: &Vocabulary, target: &GateSetConfig) -> Option<f64> {
    let c = tokenizer::decode_ids(ids, vocab).ok()?;
    c.validate().ok()?;
    let text = qasm::emit(&c, target).ok()?;
    let back = qasm::parse(&text).ok()?;
    Some(circuit_fidelity(reference, &back).unwrap_or(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub step: usize,
    pub n: usize,
    pub n_valid: usize,
    pub grammar_accuracy: f64,
    /// Invalid outputs count as fidelity 0.
    pub mean_fidelity: f64,
    /// Mean over valid outputs only.
    pub mean_fidelity_valid: Option<f64>,
    pub perplexity: f64,
    /// Teacher-forced cross-entropy without smoothing.
    pub l_ce: f64,
    pub l_ce_smoothed: f64,
    pub l_f: f64,
    pub l: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Sums of per-row unsmoothed and smoothed CE over teacher-forced pairs.
fn teacher_forced<T: Scalar>(
    model: &Transformer<T>,
    set: &[Example],
    eps: f64,
    exec: Exec,
) -> Result<(f64, f64, usize), ModelError> {
    let chunks: Vec<&[Example]> = set.chunks(16).collect();
    let parts = exec::map_slice(exec, &chunks, |chunk| -> Result<(f64, f64, usize), ModelError> {
        let batch = Packed::new(chunk.iter().map(|e| (e.src.as_slice(), e.decoder_input())));
        let labels: Vec<u32> = chunk.iter().flat_map(|e| e.labels().iter().copied()).collect();
        let (logits, _) = model.forward_train(&batch, None)?;
        let ones = vec![1.0; labels.len()];
        let v = model.cfg.vocab_size;
        let (plain, _) = ce_rows(&logits, &labels, v, 0.0, &ones)?;
        let (smooth, _) = ce_rows(&logits, &labels, v, eps, &ones)?;
        Ok((plain.iter().sum(), smooth.iter().sum(), labels.len()))
    });
    let mut acc = (0.0, 0.0, 0);
    for p in parts {
        let (a, b, n) = p?;
        acc.0 += a;
        acc.1 += b;
        acc.2 += n;
    }
    Ok(acc)
}

/// Decodes every source and grades it; `None` marks invalid output.
pub fn decode_and_grade<T: Scalar>(
    model: &Transformer<T>,
    set: &[Example],
    vocab: &Vocabulary,
    target: &GateSetConfig,
    dc: &DecodeConfig,
    exec: Exec,
) -> Result<Vec<Option<f64>>, ModelError> {
    exec::map_slice(exec, set, |e| {
        let out = model.decode_sequence(&e.src, dc)?;
        Ok(grade(&out, &e.reference, vocab, target))
    })
    .into_iter()
    .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate<T: Scalar>(
    model: &Transformer<T>,
    set: &[Example],
    vocab: &Vocabulary,
    target: &GateSetConfig,
    dc: &DecodeConfig,
    lc: &LossConfig,
    step: usize,
    exec: Exec,
) -> Result<EvalReport, ModelError> {
    if set.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let (plain, smooth, rows) = teacher_forced(model, set, lc.smoothing, exec)?;
    let grades = decode_and_grade(model, set, vocab, target, dc, exec)?;
    let n = set.len();
    let valid: Vec<f64> = grades.iter().flatten().copied().collect();
    let fid_sum = valid.iter().fold(0.0, |a, b| a + b);
    let mean_fidelity = fid_sum / n as f64;
    let l_ce = plain / rows as f64;
    let l_ce_smoothed = smooth / rows as f64;
    let l_f = 1.0 - mean_fidelity;
    let (alpha, beta) = lc.weights(step);
    Ok(EvalReport {
        step,
        n,
        n_valid: valid.len(),
        grammar_accuracy: valid.len() as f64 / n as f64,
        mean_fidelity,
        mean_fidelity_valid: (!valid.is_empty()).then(|| fid_sum / valid.len() as f64),
        perplexity: l_ce.exp(),
        l_ce,
        l_ce_smoothed,
        l_f,
        l: alpha * l_f + beta * l_ce_smoothed,
        alpha,
        beta,
    })
}
