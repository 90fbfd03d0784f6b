//! Incremental decoding with cached keys/values and the sampling strategies.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qtranspile_core::tokenizer::{BOS_ID, EOS_ID};

use crate::config::{DecodeConfig, Strategy};
use crate::model::Transformer;
use crate::ops::{self, Segments};
use crate::scalar::Scalar;
use crate::ModelError;

/// Encoder output plus the cross-attention keys/values of every decoder layer.
pub struct Encoded<T> {
    len: usize,
    cross: Vec<(Vec<T>, Vec<T>)>,
}

/// Self-attention keys/values of the tokens decoded so far.
pub struct DecodeState<T> {
    keys: Vec<Vec<T>>,
    values: Vec<Vec<T>>,
    pos: usize,
}

impl<T: Scalar> Transformer<T> {
    pub fn encode_source(&self, src: &[u32]) -> Result<Encoded<T>, ModelError> {
        let segs = Segments::from_lens([src.len()]);
        self.check_ids(src, &segs)?;
        let (out, ..) = self.encode_rows(src, &segs, &mut None);
        let cross = self
            .layout
            .dec
            .iter()
            .map(|l| {
                (
                    ops::linear(&self.params, l.cross.k, &out, src.len()),
                    ops::linear(&self.params, l.cross.v, &out, src.len()),
                )
            })
            .collect();
        Ok(Encoded { len: src.len(), cross })
    }

    pub fn start_decode(&self) -> DecodeState<T> {
        let n = self.layout.dec.len();
        DecodeState {
            keys: vec![Vec::new(); n],
            values: vec![Vec::new(); n],
            pos: 0,
        }
    }

    /// Feeds one token and returns the logits for the next position.
    pub fn step(&self, enc: &Encoded<T>, st: &mut DecodeState<T>, token: u32) -> Result<Vec<T>, ModelError> {
        if st.pos >= self.cfg.context_window {
            return Err(ModelError::SequenceTooLong {
                len: st.pos + 1,
                window: self.cfg.context_window,
            });
        }
        let one = Segments::from_lens([1]);
        self.check_ids(&[token], &one)?;
        let p = &self.params;
        let (d, heads) = (self.cfg.d_model, self.cfg.heads);
        let dk = d / heads;
        let e = self.layout.embedding + token as usize * d;
        let scale = T::of((d as f64).sqrt());
        let mut x: Vec<T> = self.params[e..e + d].iter().map(|&w| w * scale).collect();
        ops::position_code(st.pos, d, &mut x);
        let past = Segments::from_lens([st.pos + 1]);
        let src = Segments::from_lens([enc.len]);
        for (i, l) in self.layout.dec.iter().enumerate() {
            let (h, _) = ops::norm(p, l.ln1, &x, d);
            let q = ops::linear(p, l.self_attn.q, &h, 1);
            st.keys[i].extend(ops::linear(p, l.self_attn.k, &h, 1));
            st.values[i].extend(ops::linear(p, l.self_attn.v, &h, 1));
            let (ctx, _) = ops::attention_core(&q, &one, &st.keys[i], &st.values[i], &past, heads, dk, false);
            add(&mut x, &ops::linear(p, l.self_attn.o, &ctx, 1));

            let (h, _) = ops::norm(p, l.ln2, &x, d);
            let q = ops::linear(p, l.cross.q, &h, 1);
            let (k, v) = &enc.cross[i];
            let (ctx, _) = ops::attention_core(&q, &one, k, v, &src, heads, dk, false);
            add(&mut x, &ops::linear(p, l.cross.o, &ctx, 1));

            let (h, _) = ops::norm(p, l.ln3, &x, d);
            add(&mut x, &ops::ffn(p, l.ffn, &h, 1).0);
        }
        st.pos += 1;
        let (z, _) = ops::norm(p, self.layout.dec_ln, &x, d);
        Ok(ops::linear(p, self.layout.out, &z, 1))
    }

    /// Autoregressive generation from `<BOS>` until `<EOS>` or `max_len`
    /// tokens (the leading `<BOS>` included).
    pub fn decode_sequence(&self, src: &[u32], dc: &DecodeConfig) -> Result<Vec<u32>, ModelError> {
        dc.validate(self.cfg.context_window)?;
        let enc = self.encode_source(src)?;
        let mut st = self.start_decode();
        let mut rng = ChaCha8Rng::seed_from_u64(dc.seed);
        let mut out = vec![BOS_ID];
        while out.len() < dc.max_len {
            let logits = self.step(&enc, &mut st, *out.last().expect("non-empty"))?;
            let logits: Vec<f64> = logits.iter().map(|v| v.f64()).collect();
            let next = choose(&logits, dc.strategy, &mut rng) as u32;
            out.push(next);
            if next == EOS_ID {
                break;
            }
        }
        Ok(out)
    }
}

fn add<T: Scalar>(acc: &mut [T], x: &[T]) {
    for (a, &b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

/// First index of the largest logit.
pub fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

/// `softmax(logits / temperature)`.
pub fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|&z| ((z - max) / temperature).exp()).collect();
    let s: f64 = p.iter().sum();
    for v in &mut p {
        *v /= s;
    }
    p
}

/// The distribution a strategy samples from; greedy is a point mass.
pub fn sampling_distribution(logits: &[f64], strategy: Strategy) -> Vec<f64> {
    match strategy {
        Strategy::Greedy => {
            let mut p = vec![0.0; logits.len()];
            p[argmax(logits)] = 1.0;
            p
        }
        Strategy::Temperature { temperature } => softmax(logits, temperature),
        Strategy::TopK { k, temperature } => {
            let p = softmax(logits, temperature);
            let keep = sorted_desc(&p).into_iter().take(k.max(1));
            renormalize(&p, keep)
        }
        Strategy::TopP { p: nucleus, temperature } => {
            let p = softmax(logits, temperature);
            let mut cum = 0.0;
            let mut keep = Vec::new();
            for i in sorted_desc(&p) {
                keep.push(i);
                cum += p[i];
                if cum >= nucleus {
                    break;
                }
            }
            renormalize(&p, keep)
        }
    }
}

fn sorted_desc(p: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..p.len()).collect();
    idx.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
    idx
}

fn renormalize(p: &[f64], keep: impl IntoIterator<Item = usize>) -> Vec<f64> {
    let mut out = vec![0.0; p.len()];
    for i in keep {
        out[i] = p[i];
    }
    let s: f64 = out.iter().sum();
    for v in &mut out {
        *v /= s;
    }
    out
}

/// Draws the next token under `strategy`.
pub fn choose<R: Rng>(logits: &[f64], strategy: Strategy, rng: &mut R) -> usize {
    if strategy == Strategy::Greedy {
        return argmax(logits);
    }
    let p = sampling_distribution(logits, strategy);
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    let mut last = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > 0.0 {
            cum += v;
            last = i;
            if u < cum {
                return i;
            }
        }
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;

    const LOGITS: [f64; 5] = [0.1, 2.0, -1.0, 1.5, 0.7];

    #[test]
    fn unit_temperature_is_plain_softmax() {
        let p = sampling_distribution(&LOGITS, Strategy::Temperature { temperature: 1.0 });
        let z: f64 = LOGITS.iter().map(|v| v.exp()).sum();
        for (a, l) in p.iter().zip(LOGITS) {
            assert!((a - l.exp() / z).abs() < 1e-15);
        }
    }

    #[test]
    fn top_one_is_greedy() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            assert_eq!(choose(&LOGITS, Strategy::TopK { k: 1, temperature: 1.3 }, &mut rng), 1);
        }
    }

    #[test]
    fn top_k_keeps_k_most_likely() {
        let p = sampling_distribution(&LOGITS, Strategy::TopK { k: 2, temperature: 1.0 });
        assert_eq!(p.iter().filter(|&&v| v > 0.0).count(), 2);
        assert!(p[1] > 0.0 && p[3] > 0.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nucleus_is_minimal_prefix() {
        let full = softmax(&LOGITS, 1.0);
        let p = sampling_distribution(&LOGITS, Strategy::TopP { p: full[1] + 1e-9, temperature: 1.0 });
        assert_eq!(p.iter().filter(|&&v| v > 0.0).count(), 2);
        let p = sampling_distribution(&LOGITS, Strategy::TopP { p: full[1], temperature: 1.0 });
        assert_eq!(p.iter().filter(|&&v| v > 0.0).count(), 1);
        let p = sampling_distribution(&LOGITS, Strategy::TopP { p: 1.0 - 1e-12, temperature: 1.0 });
        assert!(p.iter().all(|&v| v > 0.0));
        for (a, b) in p.iter().zip(&full) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn sampling_frequencies_follow_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = Strategy::Temperature { temperature: 0.8 };
        let p = sampling_distribution(&LOGITS, s);
        let n = 20_000;
        let mut counts = [0usize; 5];
        for _ in 0..n {
            counts[choose(&LOGITS, s, &mut rng)] += 1;
        }
        for i in 0..5 {
            let sd = (n as f64 * p[i] * (1.0 - p[i])).sqrt();
            assert!((counts[i] as f64 - n as f64 * p[i]).abs() < 5.0 * sd + 1.0);
        }
    }
}
