//! Forward and backward kernels over row-major `[rows, features]` buffers.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::layout::{Attn, Ffn, Lin, Norm};
use crate::scalar::{gemm, Mat, MatMut, Scalar};

const NORM_EPS: f64 = 1e-5;

/// Packed variable-length sequences: sequence `i` occupies rows
/// `starts[i]..starts[i] + lens[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Segments {
    pub starts: Vec<usize>,
    pub lens: Vec<usize>,
}

impl Segments {
    pub fn from_lens(lens: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Segments::default();
        let mut at = 0;
        for l in lens {
            s.starts.push(at);
            s.lens.push(l);
            at += l;
        }
        s
    }

    pub fn total(&self) -> usize {
        self.lens.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.lens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lens.is_empty()
    }
}

pub(crate) fn linear<T: Scalar>(p: &[T], l: Lin, x: &[T], n: usize) -> Vec<T> {
    let mut y = Vec::with_capacity(n * l.dout);
    for _ in 0..n {
        y.extend_from_slice(&p[l.b..l.b + l.dout]);
    }
    gemm(
        n,
        l.din,
        l.dout,
        T::one(),
        Mat::rows(x, 0, l.din),
        Mat::rows(p, l.w, l.dout),
        T::one(),
        MatMut::rows(&mut y, 0, l.dout),
    );
    y
}

/// Accumulates weight and bias gradients; writes (or adds, when `add`) the
/// input gradient into `dx`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn linear_back<T: Scalar>(
    p: &[T],
    g: &mut [T],
    l: Lin,
    x: &[T],
    dy: &[T],
    n: usize,
    dx: Option<&mut [T]>,
    add: bool,
) {
    gemm(
        l.din,
        n,
        l.dout,
        T::one(),
        Mat::rows(x, 0, l.din).t(),
        Mat::rows(dy, 0, l.dout),
        T::one(),
        MatMut::rows(g, l.w, l.dout),
    );
    let gb = &mut g[l.b..l.b + l.dout];
    for row in dy.chunks_exact(l.dout) {
        for (a, &b) in gb.iter_mut().zip(row) {
            *a += b;
        }
    }
    if let Some(dx) = dx {
        let beta = if add { T::one() } else { T::zero() };
        gemm(
            n,
            l.dout,
            l.din,
            T::one(),
            Mat::rows(dy, 0, l.dout),
            Mat::rows(p, l.w, l.dout).t(),
            beta,
            MatMut::rows(dx, 0, l.din),
        );
    }
}

pub(crate) struct NormCache<T> {
    xhat: Vec<T>,
    rstd: Vec<T>,
}

pub(crate) fn norm<T: Scalar>(p: &[T], nm: Norm, x: &[T], d: usize) -> (Vec<T>, NormCache<T>) {
    let n = x.len() / d;
    let mut y = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = Vec::with_capacity(n);
    let df = T::of(d as f64);
    let (gamma, beta) = (&p[nm.g..nm.g + d], &p[nm.b..nm.b + d]);
    for r in 0..n {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().copied().sum::<T>() / df;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / df;
        let rs = T::one() / (var + T::of(NORM_EPS)).sqrt();
        rstd.push(rs);
        for j in 0..d {
            let h = (row[j] - mean) * rs;
            xhat[r * d + j] = h;
            y[r * d + j] = h * gamma[j] + beta[j];
        }
    }
    (y, NormCache { xhat, rstd })
}

pub(crate) fn norm_back<T: Scalar>(p: &[T], g: &mut [T], nm: Norm, c: &NormCache<T>, dy: &[T], d: usize) -> Vec<T> {
    let n = dy.len() / d;
    let mut dx = vec![T::zero(); dy.len()];
    let df = T::of(d as f64);
    let gamma = &p[nm.g..nm.g + d];
    let mut dxhat = vec![T::zero(); d];
    for r in 0..n {
        let (dyr, xh) = (&dy[r * d..(r + 1) * d], &c.xhat[r * d..(r + 1) * d]);
        let (mut m1, mut m2) = (T::zero(), T::zero());
        for j in 0..d {
            g[nm.g + j] += dyr[j] * xh[j];
            g[nm.b + j] += dyr[j];
            dxhat[j] = dyr[j] * gamma[j];
            m1 += dxhat[j];
            m2 += dxhat[j] * xh[j];
        }
        m1 /= df;
        m2 /= df;
        for j in 0..d {
            dx[r * d + j] = c.rstd[r] * (dxhat[j] - m1 - xh[j] * m2);
        }
    }
    dx
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let (ac, bc) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: T = ac.remainder().iter().zip(bc.remainder()).map(|(&x, &y)| x * y).sum();
    for (x, y) in ac.zip(bc) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    acc.iter().copied().sum::<T>() + tail
}

fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

fn softmax_row<T: Scalar>(row: &mut [T], valid: usize) {
    let max = row[..valid].iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in &mut row[..valid] {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in &mut row[..valid] {
        *v /= sum;
    }
    for v in &mut row[valid..] {
        *v = T::zero();
    }
}

/// Scaled dot-product attention over packed sequences; `q` rows attend to
/// the matching `k`/`v` segment. Returns the concatenated head contexts and
/// the attention probabilities, one `lq × lk` block per (sequence, head).
#[allow(clippy::too_many_arguments)]
pub(crate) fn attention_core<T: Scalar>(
    q: &[T],
    qs: &Segments,
    k: &[T],
    v: &[T],
    ks: &Segments,
    heads: usize,
    dk: usize,
    causal: bool,
) -> (Vec<T>, Vec<T>) {
    let d = heads * dk;
    let scale = T::of(1.0 / (dk as f64).sqrt());
    let mut ctx = vec![T::zero(); q.len()];
    let probs_len: usize = qs.lens.iter().zip(&ks.lens).map(|(a, b)| a * b * heads).sum();
    let mut probs = vec![T::zero(); probs_len];
    let mut at = 0;
    for s in 0..qs.len() {
        let (q0, lq, k0, lk) = (qs.starts[s], qs.lens[s], ks.starts[s], ks.lens[s]);
        for h in 0..heads {
            let block = &mut probs[at..at + lq * lk];
            let col = h * dk..(h + 1) * dk;
            for i in 0..lq {
                let qi = &q[(q0 + i) * d..][col.clone()];
                let row = &mut block[i * lk..(i + 1) * lk];
                for (j, sc) in row.iter_mut().enumerate() {
                    *sc = dot(qi, &k[(k0 + j) * d..][col.clone()]) * scale;
                }
                let valid = if causal { (i + 1).min(lk) } else { lk };
                softmax_row(row, valid);
                let ci = &mut ctx[(q0 + i) * d..][col.clone()];
                for (j, &pij) in row.iter().enumerate().take(valid) {
                    axpy(pij, &v[(k0 + j) * d..][col.clone()], ci);
                }
            }
            at += lq * lk;
        }
    }
    (ctx, probs)
}

pub(crate) struct AttnCache<T> {
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    pub(crate) probs: Vec<T>,
    ctx: Vec<T>,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn attention<T: Scalar>(
    p: &[T],
    a: Attn,
    heads: usize,
    xq: &[T],
    qs: &Segments,
    xkv: &[T],
    ks: &Segments,
    causal: bool,
) -> (Vec<T>, AttnCache<T>) {
    let d = a.q.din;
    let q = linear(p, a.q, xq, qs.total());
    let k = linear(p, a.k, xkv, ks.total());
    let v = linear(p, a.v, xkv, ks.total());
    let (ctx, probs) = attention_core(&q, qs, &k, &v, ks, heads, d / heads, causal);
    let out = linear(p, a.o, &ctx, qs.total());
    (out, AttnCache { q, k, v, probs, ctx })
}

/// Returns `(d xq, d xkv)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn attention_back<T: Scalar>(
    p: &[T],
    g: &mut [T],
    a: Attn,
    heads: usize,
    xq: &[T],
    qs: &Segments,
    xkv: &[T],
    ks: &Segments,
    c: &AttnCache<T>,
    dout: &[T],
) -> (Vec<T>, Vec<T>) {
    let d = a.q.din;
    let dk = d / heads;
    let scale = T::of(1.0 / (dk as f64).sqrt());
    let (nq, nk) = (qs.total(), ks.total());
    let mut dctx = vec![T::zero(); nq * d];
    linear_back(p, g, a.o, &c.ctx, dout, nq, Some(&mut dctx), false);

    let mut dq = vec![T::zero(); nq * d];
    let mut dkk = vec![T::zero(); nk * d];
    let mut dv = vec![T::zero(); nk * d];
    let mut at = 0;
    let mut dp = Vec::new();
    for s in 0..qs.len() {
        let (q0, lq, k0, lk) = (qs.starts[s], qs.lens[s], ks.starts[s], ks.lens[s]);
        for h in 0..heads {
            let pr = &c.probs[at..at + lq * lk];
            let col = h * dk..(h + 1) * dk;
            dp.clear();
            dp.resize(lk, T::zero());
            for i in 0..lq {
                let prow = &pr[i * lk..(i + 1) * lk];
                let dci = &dctx[(q0 + i) * d..][col.clone()];
                for j in 0..lk {
                    dp[j] = dot(dci, &c.v[(k0 + j) * d..][col.clone()]);
                    if prow[j] != T::zero() {
                        axpy(prow[j], dci, &mut dv[(k0 + j) * d..][col.clone()]);
                    }
                }
                let sum: T = prow.iter().zip(&dp).map(|(&a, &b)| a * b).sum();
                let qi = &c.q[(q0 + i) * d..][col.clone()];
                let dqi = &mut dq[(q0 + i) * d..][col.clone()];
                for j in 0..lk {
                    let ds = prow[j] * (dp[j] - sum) * scale;
                    if ds != T::zero() {
                        axpy(ds, &c.k[(k0 + j) * d..][col.clone()], dqi);
                        axpy(ds, qi, &mut dkk[(k0 + j) * d..][col.clone()]);
                    }
                }
            }
            at += lq * lk;
        }
    }
    let mut dxq = vec![T::zero(); nq * d];
    let mut dxkv = vec![T::zero(); nk * d];
    linear_back(p, g, a.q, xq, &dq, nq, Some(&mut dxq), false);
    linear_back(p, g, a.k, xkv, &dkk, nk, Some(&mut dxkv), false);
    linear_back(p, g, a.v, xkv, &dv, nk, Some(&mut dxkv), true);
    (dxq, dxkv)
}

/// Position-wise feed-forward with ReLU; returns the output and the hidden
/// activations needed for the backward pass.
pub(crate) fn ffn<T: Scalar>(p: &[T], f: Ffn, x: &[T], n: usize) -> (Vec<T>, Vec<T>) {
    let mut r = linear(p, f.l1, x, n);
    for v in &mut r {
        *v = v.max(T::zero());
    }
    (linear(p, f.l2, &r, n), r)
}

pub(crate) fn ffn_back<T: Scalar>(p: &[T], g: &mut [T], f: Ffn, x: &[T], r: &[T], dy: &[T], n: usize) -> Vec<T> {
    let mut dr = vec![T::zero(); n * f.l1.dout];
    linear_back(p, g, f.l2, r, dy, n, Some(&mut dr), false);
    for (d, &a) in dr.iter_mut().zip(r) {
        if a <= T::zero() {
            *d = T::zero();
        }
    }
    let mut dx = vec![T::zero(); n * f.l1.din];
    linear_back(p, g, f.l1, x, &dr, n, Some(&mut dx), false);
    dx
}

/// Inverted dropout in place; returns the scaled keep-mask.
pub(crate) fn dropout<T: Scalar>(x: &mut [T], rate: f64, rng: Option<&mut ChaCha8Rng>) -> Option<Vec<T>> {
    let rng = rng?;
    if rate <= 0.0 {
        return None;
    }
    let keep = T::of(1.0 / (1.0 - rate));
    let mask: Vec<T> = x
        .iter()
        .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
        .collect();
    for (v, &m) in x.iter_mut().zip(&mask) {
        *v *= m;
    }
    Some(mask)
}

pub(crate) fn apply_mask<T: Scalar>(x: &mut [T], mask: &Option<Vec<T>>) {
    if let Some(m) = mask {
        for (v, &k) in x.iter_mut().zip(m) {
            *v *= k;
        }
    }
}

/// Sinusoidal position code for one position.
pub(crate) fn position_code<T: Scalar>(pos: usize, d: usize, out: &mut [T]) {
    for i in (0..d).step_by(2) {
        let freq = (10000f64).powf(-(i as f64) / d as f64);
        let a = pos as f64 * freq;
        out[i] += T::of(a.sin());
        if i + 1 < d {
            out[i + 1] += T::of(a.cos());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_key_attention_copies_values() {
        let q = vec![0.3, -1.0, 2.0, 0.5];
        let k = vec![1.0, 1.0, -1.0, 4.0];
        let v = vec![7.0, 8.0, 9.0, 10.0];
        let segs = Segments::from_lens([1]);
        let (ctx, probs) = attention_core::<f64>(&q, &segs, &k, &v, &segs, 2, 2, false);
        assert_eq!(ctx, v);
        assert_eq!(probs, vec![1.0, 1.0]);
    }

    #[test]
    fn causal_rows_are_normalized_and_masked() {
        let n = 5;
        let q: Vec<f64> = (0..n * 4).map(|i| (i as f64 * 0.37).sin()).collect();
        let k: Vec<f64> = (0..n * 4).map(|i| (i as f64 * 0.91).cos()).collect();
        let segs = Segments::from_lens([2, 3]);
        let (_, probs) = attention_core::<f64>(&q, &segs, &k, &k, &segs, 2, 2, true);
        let mut at = 0;
        for &l in &segs.lens {
            for _ in 0..2 {
                for i in 0..l {
                    let row = &probs[at + i * l..at + (i + 1) * l];
                    assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    assert!(row[i + 1..].iter().all(|&p| p == 0.0));
                }
                at += l * l;
            }
        }
    }

    #[test]
    fn segments_pack() {
        let s = Segments::from_lens([3, 1, 4]);
        assert_eq!(s.starts, vec![0, 3, 4]);
        assert_eq!(s.total(), 8);
    }
}
