//! Seeded training loop over the composite objective `α L_F + β L_CE`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use qtranspile_core::exec::{self, Exec};
use qtranspile_core::ruleset::derive_seed;
use qtranspile_core::{GateSetConfig, Vocabulary};

use crate::checkpoint;
use crate::config::{DecodeConfig, LossConfig, OptimizerConfig};
use crate::eval::{self, EvalReport, Example};
use crate::loss::ce_rows;
use crate::model::{Packed, Transformer};
use crate::optim::Adam;
use crate::scalar::Scalar;
use crate::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Evaluate on the held-out split every this many steps (0: only at the end).
    pub eval_every: usize,
    /// Cap on held-out pairs decoded per evaluation.
    pub eval_limit: Option<usize>,
    /// Write a checkpoint every this many steps (0: only the final one).
    pub checkpoint_every: usize,
    /// Greedy decodes per step feeding the fidelity term.
    pub fidelity_batch: usize,
    /// Each batch is split into this many slices whose gradients are summed
    /// in order, so results do not depend on the thread count.
    pub shards: usize,
    pub decode_max_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            batch_size: 32,
            seed: 0,
            eval_every: 0,
            eval_limit: None,
            checkpoint_every: 0,
            fidelity_batch: 8,
            shards: 4,
            decode_max_len: 256,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.batch_size == 0 || self.shards == 0 {
            return Err(ModelError::Config("batch_size and shards must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "L_CE")]
    pub l_ce: f64,
    /// Empty when the fidelity term was skipped (`alpha = 0`).
    #[serde(rename = "L_F")]
    pub l_f: Option<f64>,
    pub lr: f64,
    pub alpha: f64,
    pub beta: f64,
}

pub struct TrainOutcome<T> {
    pub model: Transformer<T>,
    pub trace: Vec<TraceRow>,
    pub evals: Vec<EvalReport>,
}

/// Seeded shuffle, then the first `fraction` of pairs (at least one when
/// `fraction > 0`) is held out. Returns `(train, held_out)`.
pub fn split<E: Clone>(items: &[E], fraction: f64, seed: u64) -> (Vec<E>, Vec<E>) {
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut held = (items.len() as f64 * fraction).round() as usize;
    if fraction > 0.0 && held == 0 && items.len() > 1 {
        held = 1;
    }
    let pick = |ix: &[usize]| ix.iter().map(|&i| items[i].clone()).collect();
    (pick(&idx[held..]), pick(&idx[..held]))
}

/// Everything the loop needs besides the model.
pub struct TrainSetup<'a> {
    pub train: &'a [Example],
    pub held_out: &'a [Example],
    pub vocab: &'a Vocabulary,
    pub target: &'a GateSetConfig,
    pub tc: &'a TrainConfig,
    pub lc: &'a LossConfig,
    pub oc: &'a OptimizerConfig,
    /// Run directory for `trace.csv`, `eval-*.json` and checkpoints.
    pub out_dir: Option<&'a Path>,
    pub exec: Exec,
}

struct StepLoss<T> {
    grad: Vec<T>,
    ce_sum: f64,
    rows: usize,
}

fn add_into<T: Scalar>(acc: &mut [T], x: &[T]) {
    for (a, &b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ModelError + '_ {
    move |source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl TrainSetup<'_> {
    fn decode_config(&self, window: usize) -> DecodeConfig {
        DecodeConfig::greedy(self.tc.decode_max_len.min(window))
    }

    /// Teacher-forced smoothed CE over `batch`, gradient scaled by `beta / rows`.
    fn ce_step<T: Scalar>(
        &self,
        model: &Transformer<T>,
        batch: &[&Example],
        beta: f64,
        step: usize,
    ) -> Result<StepLoss<T>, ModelError> {
        let rows: usize = batch.iter().map(|e| e.labels().len()).sum();
        let per = batch.len().div_ceil(self.tc.shards).max(1);
        let slices: Vec<(usize, &[&Example])> = batch.chunks(per).enumerate().collect();
        let v = model.cfg.vocab_size;
        let eps = self.lc.smoothing;
        let base = derive_seed(self.tc.seed, step as u64);
        let parts = exec::map_slice(self.exec, &slices, |&(k, part)| -> Result<(Vec<T>, f64), ModelError> {
            let packed = Packed::new(part.iter().map(|e| (e.src.as_slice(), e.decoder_input())));
            let labels: Vec<u32> = part.iter().flat_map(|e| e.labels().iter().copied()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(base, k as u64));
            let drop = (model.cfg.dropout > 0.0).then_some(&mut rng);
            let (logits, tape) = model.forward_train(&packed, drop)?;
            let scale = vec![beta / rows as f64; labels.len()];
            let (losses, dlogits) = ce_rows(&logits, &labels, v, eps, &scale)?;
            Ok((model.backward(&packed, &tape, &dlogits), losses.iter().sum()))
        });
        let mut out = StepLoss {
            grad: vec![T::zero(); model.num_params()],
            ce_sum: 0.0,
            rows,
        };
        for p in parts {
            let (g, l) = p?;
            add_into(&mut out.grad, &g);
            out.ce_sum += l;
        }
        Ok(out)
    }

    /// Greedy-decodes a slice of the batch and returns `(L_F, gradient)` of the
    /// score-function surrogate `-(alpha / B) Σ (1 − F_i) · NLL(decoded_i)`.
    fn fidelity_step<T: Scalar>(
        &self,
        model: &Transformer<T>,
        batch: &[&Example],
        alpha: f64,
    ) -> Result<(f64, Vec<T>), ModelError> {
        let part = &batch[..self.tc.fidelity_batch.min(batch.len())];
        let dc = self.decode_config(model.cfg.context_window);
        let decoded = exec::map_slice(self.exec, part, |e| -> Result<(Vec<u32>, f64), ModelError> {
            let out = model.decode_sequence(&e.src, &dc)?;
            let f = eval::grade(&out, &e.reference, self.vocab, self.target).unwrap_or(0.0);
            Ok((out, f))
        });
        let mut items = Vec::with_capacity(part.len());
        for (d, e) in decoded.into_iter().zip(part) {
            let (ids, f) = d?;
            items.push((e, ids, f));
        }
        let b = items.len() as f64;
        let total: f64 = items.iter().map(|(_, _, f)| 1.0 - f).sum();
        let l_f = total / b;
        let mut grad = vec![T::zero(); model.num_params()];
        let v = model.cfg.vocab_size;
        // Advantage against the mean loss of the other decodes in the subsample.
        let work: Vec<_> = items
            .iter()
            .filter(|(_, ids, _)| ids.len() > 1)
            .map(|(e, ids, f)| {
                let base = if items.len() > 1 { (total - (1.0 - f)) / (b - 1.0) } else { 0.0 };
                (e, ids, (1.0 - f) - base)
            })
            .filter(|(_, _, adv)| *adv != 0.0)
            .collect();
        let parts = exec::map_slice(self.exec, &work, |(e, ids, adv)| -> Result<Vec<T>, ModelError> {
            let packed = Packed::new([(e.src.as_slice(), &ids[..ids.len() - 1])]);
            let (logits, tape) = model.forward_train(&packed, None)?;
            let rows = ids.len() - 1;
            let w = -alpha * adv / (b * rows as f64);
            let (_, dl) = ce_rows(&logits, &ids[1..], v, 0.0, &vec![w; rows])?;
            Ok(model.backward(&packed, &tape, &dl))
        });
        for g in parts {
            add_into(&mut grad, &g?);
        }
        Ok((l_f, grad))
    }

    fn write_json<S: Serialize>(&self, name: String, value: &S) -> Result<(), ModelError> {
        if let Some(dir) = self.out_dir {
            let p = dir.join(name);
            let json = serde_json::to_string_pretty(value).expect("report serializes");
            fs::write(&p, json + "\n").map_err(io(&p))?;
        }
        Ok(())
    }

    fn checkpoint_dir(&self, name: &str) -> Option<PathBuf> {
        self.out_dir.map(|d| d.join(name))
    }

    fn evaluate<T: Scalar>(&self, model: &Transformer<T>, step: usize) -> Result<Option<EvalReport>, ModelError> {
        if self.held_out.is_empty() {
            return Ok(None);
        }
        let n = self.tc.eval_limit.unwrap_or(usize::MAX).min(self.held_out.len());
        let dc = self.decode_config(model.cfg.context_window);
        let r = eval::evaluate(model, &self.held_out[..n], self.vocab, self.target, &dc, self.lc, step, self.exec)?;
        self.write_json(format!("eval-{step:06}.json"), &r)?;
        Ok(Some(r))
    }

    pub fn run<T: Scalar>(&self, mut model: Transformer<T>) -> Result<TrainOutcome<T>, ModelError> {
        self.tc.validate()?;
        self.lc.validate()?;
        if self.train.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        for e in self.train.iter().chain(self.held_out) {
            for ids in [&e.src, &e.tgt] {
                model.check_ids(ids, &crate::ops::Segments::from_lens([ids.len()]))?;
            }
        }
        if let Some(dir) = self.out_dir {
            fs::create_dir_all(dir).map_err(io(dir))?;
        }
        let mut writer = match self.out_dir {
            Some(dir) => {
                let p = dir.join("trace.csv");
                Some(csv::Writer::from_path(&p).map_err(|e| ModelError::Checkpoint(format!("{}: {e}", p.display())))?)
            }
            None => None,
        };
        let mut adam = Adam::new(self.oc.clone(), model.num_params());
        let mut order_rng = ChaCha8Rng::seed_from_u64(derive_seed(self.tc.seed, u64::MAX));
        let mut order: Vec<usize> = Vec::new();
        let mut cursor = 0;
        let mut trace = Vec::with_capacity(self.tc.steps);
        let mut evals = Vec::new();

        for step in 1..=self.tc.steps {
            let mut batch = Vec::with_capacity(self.tc.batch_size);
            while batch.len() < self.tc.batch_size.min(self.train.len()) {
                if cursor == order.len() {
                    order = (0..self.train.len()).collect();
                    order.shuffle(&mut order_rng);
                    cursor = 0;
                }
                batch.push(&self.train[order[cursor]]);
                cursor += 1;
            }
            let (alpha, beta) = self.lc.weights(step - 1);
            let ce = self.ce_step(&model, &batch, beta, step)?;
            let l_ce = ce.ce_sum / ce.rows as f64;
            let mut grad = ce.grad;
            let mut l_f = None;
            if alpha > 0.0 && self.tc.fidelity_batch > 0 {
                let (lf, g) = self.fidelity_step(&model, &batch, alpha)?;
                add_into(&mut grad, &g);
                l_f = Some(lf);
            }
            let l = beta * l_ce + alpha * l_f.unwrap_or(0.0);
            if !l.is_finite() || grad.iter().any(|g| !g.f64().is_finite()) {
                return Err(ModelError::NonFinite { step });
            }
            let lr = adam.update(&mut model.params, &grad);
            let row = TraceRow {
                step,
                l,
                l_ce,
                l_f,
                lr,
                alpha,
                beta,
            };
            if let Some(w) = writer.as_mut() {
                w.serialize(&row).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
            }
            trace.push(row);
            if self.tc.eval_every > 0 && step % self.tc.eval_every == 0 && step < self.tc.steps {
                evals.extend(self.evaluate(&model, step)?);
            }
            if self.tc.checkpoint_every > 0 && step % self.tc.checkpoint_every == 0 && step < self.tc.steps {
                if let Some(dir) = self.checkpoint_dir(&format!("checkpoint-{step:06}")) {
                    checkpoint::save(&dir, &model, self.vocab, step)?;
                }
            }
        }
        if let Some(mut w) = writer {
            w.flush().map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        }
        evals.extend(self.evaluate(&model, self.tc.steps)?);
        if let Some(dir) = self.checkpoint_dir("checkpoint") {
            checkpoint::save(&dir, &model, self.vocab, self.tc.steps)?;
        }
        Ok(TrainOutcome { model, trace, evals })
    }
}
