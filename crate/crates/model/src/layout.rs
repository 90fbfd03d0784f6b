//! Named parameter arrays packed into one flat buffer.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Lin {
    pub w: usize,
    pub b: usize,
    pub din: usize,
    pub dout: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Norm {
    pub g: usize,
    pub b: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Attn {
    pub q: Lin,
    pub k: Lin,
    pub v: Lin,
    pub o: Lin,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Ffn {
    pub l1: Lin,
    pub l2: Lin,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct EncLayer {
    pub ln1: Norm,
    pub attn: Attn,
    pub ln2: Norm,
    pub ffn: Ffn,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct DecLayer {
    pub ln1: Norm,
    pub self_attn: Attn,
    pub ln2: Norm,
    pub cross: Attn,
    pub ln3: Norm,
    pub ffn: Ffn,
}

/// Offsets of every parameter array for one configuration.
#[derive(Debug, Clone)]
pub struct Layout {
    pub arrays: Vec<ArrayInfo>,
    pub total: usize,
    pub(crate) embedding: usize,
    pub(crate) enc: Vec<EncLayer>,
    pub(crate) enc_ln: Norm,
    pub(crate) dec: Vec<DecLayer>,
    pub(crate) dec_ln: Norm,
    pub(crate) out: Lin,
}

struct Builder {
    arrays: Vec<ArrayInfo>,
    total: usize,
}

impl Builder {
    fn push(&mut self, name: String, shape: Vec<usize>) -> usize {
        let len = shape.iter().product();
        let offset = self.total;
        self.arrays.push(ArrayInfo { name, shape, offset, len });
        self.total += len;
        offset
    }

    fn lin(&mut self, name: &str, din: usize, dout: usize) -> Lin {
        let w = self.push(format!("{name}.weight"), vec![din, dout]);
        let b = self.push(format!("{name}.bias"), vec![dout]);
        Lin { w, b, din, dout }
    }

    fn norm(&mut self, name: &str, d: usize) -> Norm {
        let g = self.push(format!("{name}.gamma"), vec![d]);
        let b = self.push(format!("{name}.beta"), vec![d]);
        Norm { g, b }
    }

    fn attn(&mut self, name: &str, d: usize) -> Attn {
        Attn {
            q: self.lin(&format!("{name}.query"), d, d),
            k: self.lin(&format!("{name}.key"), d, d),
            v: self.lin(&format!("{name}.value"), d, d),
            o: self.lin(&format!("{name}.output"), d, d),
        }
    }

    fn ffn(&mut self, name: &str, d: usize, ff: usize) -> Ffn {
        Ffn {
            l1: self.lin(&format!("{name}.linear1"), d, ff),
            l2: self.lin(&format!("{name}.linear2"), ff, d),
        }
    }
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let (d, ff) = (cfg.d_model, cfg.d_ff);
        let mut b = Builder {
            arrays: Vec::new(),
            total: 0,
        };
        let embedding = b.push("embedding".into(), vec![cfg.vocab_size, d]);
        let enc = (0..cfg.enc_layers)
            .map(|l| EncLayer {
                ln1: b.norm(&format!("encoder.{l}.norm1"), d),
                attn: b.attn(&format!("encoder.{l}.self_attention"), d),
                ln2: b.norm(&format!("encoder.{l}.norm2"), d),
                ffn: b.ffn(&format!("encoder.{l}.feed_forward"), d, ff),
            })
            .collect();
        let enc_ln = b.norm("encoder.norm", d);
        let dec = (0..cfg.dec_layers)
            .map(|l| DecLayer {
                ln1: b.norm(&format!("decoder.{l}.norm1"), d),
                self_attn: b.attn(&format!("decoder.{l}.self_attention"), d),
                ln2: b.norm(&format!("decoder.{l}.norm2"), d),
                cross: b.attn(&format!("decoder.{l}.cross_attention"), d),
                ln3: b.norm(&format!("decoder.{l}.norm3"), d),
                ffn: b.ffn(&format!("decoder.{l}.feed_forward"), d, ff),
            })
            .collect();
        let dec_ln = b.norm("decoder.norm", d);
        let out = b.lin("output", d, cfg.vocab_size);
        Self {
            arrays: b.arrays,
            total: b.total,
            embedding,
            enc,
            enc_ln,
            dec,
            dec_ln,
            out,
        }
    }

    pub fn find(&self, name: &str) -> Option<&ArrayInfo> {
        self.arrays.iter().find(|a| a.name == name)
    }

    /// Fan-based uniform initialization: weights `U(±sqrt(6/(fan_in+fan_out)))`,
    /// biases and norm shifts zero, norm gains one.
    pub fn init<T: Scalar>(&self, seed: u64) -> Vec<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = vec![T::zero(); self.total];
        for a in &self.arrays {
            let slot = &mut p[a.offset..a.offset + a.len];
            if a.name.ends_with(".gamma") {
                slot.fill(T::one());
            } else if a.shape.len() == 2 {
                let bound = (6.0 / (a.shape[0] + a.shape[1]) as f64).sqrt();
                for v in slot {
                    *v = T::of(rng.gen_range(-bound..bound));
                }
            }
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arrays_tile_the_buffer() {
        let l = Layout::new(&ModelConfig::toy(20));
        let mut next = 0;
        for a in &l.arrays {
            assert_eq!(a.offset, next);
            next += a.len;
        }
        assert_eq!(next, l.total);
        assert_eq!(l.find("output.bias").unwrap().shape, vec![20]);
    }

    #[test]
    fn init_is_seeded() {
        let l = Layout::new(&ModelConfig::toy(20));
        assert_eq!(l.init::<f32>(1), l.init::<f32>(1));
        assert_ne!(l.init::<f32>(1), l.init::<f32>(2));
        let p = l.init::<f64>(1);
        let g = l.find("decoder.1.norm3.gamma").unwrap();
        assert!(p[g.offset..g.offset + g.len].iter().all(|&v| v == 1.0));
    }
}
