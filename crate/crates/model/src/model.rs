//! Pre-norm encoder-decoder transformer with an explicit backward pass.

use rand_chacha::ChaCha8Rng;

use crate::config::ModelConfig;
use crate::layout::Layout;
use crate::ops::{self, AttnCache, NormCache, Segments};
use crate::scalar::Scalar;
use crate::ModelError;

#[derive(Debug, Clone)]
pub struct Transformer<T> {
    pub cfg: ModelConfig,
    pub layout: Layout,
    pub params: Vec<T>,
}

/// Source sequences and teacher-forced decoder inputs, packed row-wise.
#[derive(Debug, Clone, Default)]
pub struct Packed {
    pub src: Vec<u32>,
    pub src_segs: Segments,
    pub dec: Vec<u32>,
    pub dec_segs: Segments,
}

impl Packed {
    /// Packs `(source, decoder input)` pairs.
    pub fn new<'a>(pairs: impl IntoIterator<Item = (&'a [u32], &'a [u32])>) -> Self {
        let mut p = Packed::default();
        let (mut sl, mut dl) = (Vec::new(), Vec::new());
        for (s, d) in pairs {
            p.src.extend_from_slice(s);
            p.dec.extend_from_slice(d);
            sl.push(s.len());
            dl.push(d.len());
        }
        p.src_segs = Segments::from_lens(sl);
        p.dec_segs = Segments::from_lens(dl);
        p
    }
}

pub(crate) struct AttnTape<T> {
    norm: NormCache<T>,
    h: Vec<T>,
    cache: AttnCache<T>,
    mask: Option<Vec<T>>,
}

pub(crate) struct FfnTape<T> {
    norm: NormCache<T>,
    h: Vec<T>,
    r: Vec<T>,
    mask: Option<Vec<T>>,
}

pub(crate) struct EncTape<T> {
    attn: AttnTape<T>,
    ffn: FfnTape<T>,
}

pub(crate) struct DecTape<T> {
    own: AttnTape<T>,
    cross: AttnTape<T>,
    ffn: FfnTape<T>,
}

/// Activations retained by [`Transformer::forward_train`] for the backward pass.
pub struct Tape<T> {
    src_mask: Option<Vec<T>>,
    enc: Vec<EncTape<T>>,
    enc_norm: NormCache<T>,
    enc_out: Vec<T>,
    dec_mask: Option<Vec<T>>,
    dec: Vec<DecTape<T>>,
    dec_norm: NormCache<T>,
    z: Vec<T>,
}

impl<T> Tape<T> {
    /// Attention probabilities of every attention block, in layer order:
    /// encoder self-attention, then decoder self- and cross-attention.
    pub fn attention_blocks(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = self.enc.iter().map(|e| e.attn.cache.probs.as_slice()).collect();
        for d in &self.dec {
            out.push(&d.own.cache.probs);
            out.push(&d.cross.cache.probs);
        }
        out
    }
}

impl<T: Scalar> Transformer<T> {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        cfg.validate()?;
        let layout = Layout::new(&cfg);
        let params = layout.init(seed);
        Ok(Self { cfg, layout, params })
    }

    pub fn from_params(cfg: ModelConfig, params: Vec<T>) -> Result<Self, ModelError> {
        cfg.validate()?;
        let layout = Layout::new(&cfg);
        if params.len() != layout.total {
            return Err(ModelError::Checkpoint(format!(
                "expected {} parameters, found {}",
                layout.total,
                params.len()
            )));
        }
        Ok(Self { cfg, layout, params })
    }

    pub fn num_params(&self) -> usize {
        self.layout.total
    }

    /// Converts the parameters to another precision.
    pub fn cast<U: Scalar>(&self) -> Transformer<U> {
        Transformer {
            cfg: self.cfg.clone(),
            layout: self.layout.clone(),
            params: self.params.iter().map(|v| U::of(v.f64())).collect(),
        }
    }

    pub(crate) fn check_ids(&self, ids: &[u32], segs: &Segments) -> Result<(), ModelError> {
        if let Some(&id) = ids.iter().find(|&&id| id as usize >= self.cfg.vocab_size) {
            return Err(ModelError::TokenOutOfRange {
                id,
                vocab: self.cfg.vocab_size,
            });
        }
        if let Some(&len) = segs.lens.iter().find(|&&l| l > self.cfg.context_window) {
            return Err(ModelError::SequenceTooLong {
                len,
                window: self.cfg.context_window,
            });
        }
        Ok(())
    }

    pub(crate) fn embed(&self, ids: &[u32], segs: &Segments) -> Vec<T> {
        let d = self.cfg.d_model;
        let scale = T::of((d as f64).sqrt());
        let e = self.layout.embedding;
        let mut x = vec![T::zero(); ids.len() * d];
        for (s, &start) in segs.starts.iter().enumerate() {
            for pos in 0..segs.lens[s] {
                let r = start + pos;
                let id = ids[r] as usize;
                let row = &mut x[r * d..(r + 1) * d];
                for (o, &w) in row.iter_mut().zip(&self.params[e + id * d..e + (id + 1) * d]) {
                    *o = w * scale;
                }
                ops::position_code(pos, d, row);
            }
        }
        x
    }

    fn embed_back(&self, g: &mut [T], ids: &[u32], dx: &[T]) {
        let d = self.cfg.d_model;
        let scale = T::of((d as f64).sqrt());
        let e = self.layout.embedding;
        for (r, &id) in ids.iter().enumerate() {
            let id = id as usize;
            for j in 0..d {
                g[e + id * d + j] += dx[r * d + j] * scale;
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn attn_sublayer(
        &self,
        x: &mut [T],
        nm: crate::layout::Norm,
        a: crate::layout::Attn,
        qs: &Segments,
        kv: Option<(&[T], &Segments)>,
        causal: bool,
        rng: &mut Option<&mut ChaCha8Rng>,
    ) -> AttnTape<T> {
        let (h, norm) = ops::norm(&self.params, nm, x, self.cfg.d_model);
        let (kv_x, ks) = kv.unwrap_or((h.as_slice(), qs));
        let (mut out, cache) = ops::attention(&self.params, a, self.cfg.heads, &h, qs, kv_x, ks, causal);
        let mask = ops::dropout(&mut out, self.cfg.dropout, rng.as_deref_mut());
        for (xv, o) in x.iter_mut().zip(out) {
            *xv += o;
        }
        AttnTape { norm, h, cache, mask }
    }

    fn ffn_sublayer(
        &self,
        x: &mut [T],
        nm: crate::layout::Norm,
        f: crate::layout::Ffn,
        rng: &mut Option<&mut ChaCha8Rng>,
    ) -> FfnTape<T> {
        let d = self.cfg.d_model;
        let (h, norm) = ops::norm(&self.params, nm, x, d);
        let (mut out, r) = ops::ffn(&self.params, f, &h, x.len() / d);
        let mask = ops::dropout(&mut out, self.cfg.dropout, rng.as_deref_mut());
        for (xv, o) in x.iter_mut().zip(out) {
            *xv += o;
        }
        FfnTape { norm, h, r, mask }
    }

    /// Runs the encoder stack; returns the normalized encoder output.
    #[allow(clippy::type_complexity)]
    pub(crate) fn encode_rows(
        &self,
        ids: &[u32],
        segs: &Segments,
        rng: &mut Option<&mut ChaCha8Rng>,
    ) -> (Vec<T>, Option<Vec<T>>, Vec<EncTape<T>>, NormCache<T>) {
        let mut x = self.embed(ids, segs);
        let src_mask = ops::dropout(&mut x, self.cfg.dropout, rng.as_deref_mut());
        let mut tapes = Vec::with_capacity(self.layout.enc.len());
        for l in &self.layout.enc {
            let attn = self.attn_sublayer(&mut x, l.ln1, l.attn, segs, None, false, rng);
            let ffn = self.ffn_sublayer(&mut x, l.ln2, l.ffn, rng);
            tapes.push(EncTape { attn, ffn });
        }
        let (out, norm) = ops::norm(&self.params, self.layout.enc_ln, &x, self.cfg.d_model);
        (out, src_mask, tapes, norm)
    }

    /// Teacher-forced forward pass. Returns logits `[dec rows, V]`. Dropout is
    /// active only when `rng` is given.
    pub fn forward_train(
        &self,
        batch: &Packed,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Vec<T>, Tape<T>), ModelError> {
        self.check_ids(&batch.src, &batch.src_segs)?;
        self.check_ids(&batch.dec, &batch.dec_segs)?;
        if batch.src_segs.len() != batch.dec_segs.len() {
            return Err(ModelError::Config("source and target batch sizes differ".into()));
        }
        let d = self.cfg.d_model;
        let (enc_out, src_mask, enc, enc_norm) = self.encode_rows(&batch.src, &batch.src_segs, &mut rng);

        let mut y = self.embed(&batch.dec, &batch.dec_segs);
        let dec_mask = ops::dropout(&mut y, self.cfg.dropout, rng.as_deref_mut());
        let mut dec = Vec::with_capacity(self.layout.dec.len());
        for l in &self.layout.dec {
            let own = self.attn_sublayer(&mut y, l.ln1, l.self_attn, &batch.dec_segs, None, true, &mut rng);
            let cross = self.attn_sublayer(
                &mut y,
                l.ln2,
                l.cross,
                &batch.dec_segs,
                Some((&enc_out, &batch.src_segs)),
                false,
                &mut rng,
            );
            let ffn = self.ffn_sublayer(&mut y, l.ln3, l.ffn, &mut rng);
            dec.push(DecTape { own, cross, ffn });
        }
        let (z, dec_norm) = ops::norm(&self.params, self.layout.dec_ln, &y, d);
        let logits = ops::linear(&self.params, self.layout.out, &z, batch.dec.len());
        Ok((
            logits,
            Tape {
                src_mask,
                enc,
                enc_norm,
                enc_out,
                dec_mask,
                dec,
                dec_norm,
                z,
            },
        ))
    }

    /// Gradient of `Σ dlogits · logits` with respect to every parameter.
    pub fn backward(&self, batch: &Packed, tape: &Tape<T>, dlogits: &[T]) -> Vec<T> {
        let p = &self.params;
        let d = self.cfg.d_model;
        let heads = self.cfg.heads;
        let mut g = vec![T::zero(); self.layout.total];
        let nd = batch.dec.len();

        let mut dz = vec![T::zero(); nd * d];
        ops::linear_back(p, &mut g, self.layout.out, &tape.z, dlogits, nd, Some(&mut dz), false);
        let mut dy = ops::norm_back(p, &mut g, self.layout.dec_ln, &tape.dec_norm, &dz, d);
        let mut denc = vec![T::zero(); tape.enc_out.len()];

        for (l, t) in self.layout.dec.iter().zip(&tape.dec).rev() {
            let mut df = dy.clone();
            ops::apply_mask(&mut df, &t.ffn.mask);
            let dh = ops::ffn_back(p, &mut g, l.ffn, &t.ffn.h, &t.ffn.r, &df, nd);
            add(&mut dy, &ops::norm_back(p, &mut g, l.ln3, &t.ffn.norm, &dh, d));

            let mut dc = dy.clone();
            ops::apply_mask(&mut dc, &t.cross.mask);
            let (dq, dkv) = ops::attention_back(
                p,
                &mut g,
                l.cross,
                heads,
                &t.cross.h,
                &batch.dec_segs,
                &tape.enc_out,
                &batch.src_segs,
                &t.cross.cache,
                &dc,
            );
            add(&mut denc, &dkv);
            add(&mut dy, &ops::norm_back(p, &mut g, l.ln2, &t.cross.norm, &dq, d));

            let mut da = dy.clone();
            ops::apply_mask(&mut da, &t.own.mask);
            let (mut dq, dkv) = ops::attention_back(
                p,
                &mut g,
                l.self_attn,
                heads,
                &t.own.h,
                &batch.dec_segs,
                &t.own.h,
                &batch.dec_segs,
                &t.own.cache,
                &da,
            );
            add(&mut dq, &dkv);
            add(&mut dy, &ops::norm_back(p, &mut g, l.ln1, &t.own.norm, &dq, d));
        }
        ops::apply_mask(&mut dy, &tape.dec_mask);
        self.embed_back(&mut g, &batch.dec, &dy);

        let mut dx = ops::norm_back(p, &mut g, self.layout.enc_ln, &tape.enc_norm, &denc, d);
        let ns = batch.src.len();
        for (l, t) in self.layout.enc.iter().zip(&tape.enc).rev() {
            let mut df = dx.clone();
            ops::apply_mask(&mut df, &t.ffn.mask);
            let dh = ops::ffn_back(p, &mut g, l.ffn, &t.ffn.h, &t.ffn.r, &df, ns);
            add(&mut dx, &ops::norm_back(p, &mut g, l.ln2, &t.ffn.norm, &dh, d));

            let mut da = dx.clone();
            ops::apply_mask(&mut da, &t.attn.mask);
            let (mut dq, dkv) = ops::attention_back(
                p,
                &mut g,
                l.attn,
                heads,
                &t.attn.h,
                &batch.src_segs,
                &t.attn.h,
                &batch.src_segs,
                &t.attn.cache,
                &da,
            );
            add(&mut dq, &dkv);
            add(&mut dx, &ops::norm_back(p, &mut g, l.ln1, &t.attn.norm, &dq, d));
        }
        ops::apply_mask(&mut dx, &tape.src_mask);
        self.embed_back(&mut g, &batch.src, &dx);
        g
    }

    /// Inference-mode logits for every position of `tgt_prefix`, row-major
    /// `[tgt_prefix.len(), V]`.
    pub fn forward(&self, src: &[u32], tgt_prefix: &[u32]) -> Result<Vec<T>, ModelError> {
        let batch = Packed::new([(src, tgt_prefix)]);
        Ok(self.forward_train(&batch, None)?.0)
    }
}

fn add<T: Scalar>(acc: &mut [T], x: &[T]) {
    for (a, &b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}
