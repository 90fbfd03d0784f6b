use serde::{Deserialize, Serialize};

use crate::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub d_ff: usize,
    pub heads: usize,
    pub d_k: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub context_window: usize,
    pub vocab_size: usize,
    #[serde(default)]
    pub dropout: f64,
}

impl ModelConfig {
    pub fn toy(vocab_size: usize) -> Self {
        Self {
            d_model: 64,
            d_ff: 128,
            heads: 4,
            d_k: 16,
            enc_layers: 2,
            dec_layers: 2,
            context_window: 256,
            vocab_size,
            dropout: 0.0,
        }
    }

    pub fn large(vocab_size: usize) -> Self {
        Self {
            d_model: 768,
            d_ff: 2048,
            heads: 8,
            d_k: 96,
            enc_layers: 6,
            dec_layers: 6,
            context_window: 768,
            vocab_size,
            dropout: 0.1,
        }
    }

    pub fn preset(name: &str, vocab_size: usize) -> Result<Self, ModelError> {
        match name {
            "toy" => Ok(Self::toy(vocab_size)),
            "large" => Ok(Self::large(vocab_size)),
            other => Err(ModelError::Config(format!("unknown model preset `{other}` (expected toy or large)"))),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: String| Err(ModelError::Config(m));
        if self.d_model != self.heads * self.d_k {
            return fail(format!(
                "d_model {} != heads {} * d_k {}",
                self.d_model, self.heads, self.d_k
            ));
        }
        if self.heads == 0 || self.d_ff == 0 || self.vocab_size < 2 {
            return fail("heads, d_ff must be positive and vocab_size at least 2".into());
        }
        if self.context_window < 8 {
            return fail(format!("context_window {} < 8", self.context_window));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }
}

/// `(step, alpha, beta)` knot of the loss-weight schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakpoint {
    pub step: usize,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub smoothing: f64,
    /// Linearly interpolated; held constant outside the first and last knot.
    pub schedule: Vec<Breakpoint>,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            smoothing: 0.1,
            schedule: vec![Breakpoint {
                step: 0,
                alpha: 0.0,
                beta: 1.0,
            }],
        }
    }
}

impl LossConfig {
    /// Pure cross-entropy for the first 30% of `steps`, then `alpha` ramps
    /// linearly to 0.5.
    pub fn ramp(steps: usize) -> Self {
        let start = steps * 3 / 10;
        Self {
            smoothing: 0.1,
            schedule: vec![
                Breakpoint { step: 0, alpha: 0.0, beta: 1.0 },
                Breakpoint { step: start, alpha: 0.0, beta: 1.0 },
                Breakpoint { step: steps.max(start + 1), alpha: 0.5, beta: 1.0 },
            ],
        }
    }

    pub fn weights(&self, step: usize) -> (f64, f64) {
        let s = &self.schedule;
        let Some(first) = s.first() else {
            return (0.0, 1.0);
        };
        if step <= first.step {
            return (first.alpha, first.beta);
        }
        for w in s.windows(2) {
            let (a, b) = (w[0], w[1]);
            if step <= b.step {
                let t = (step - a.step) as f64 / (b.step - a.step) as f64;
                return (a.alpha + t * (b.alpha - a.alpha), a.beta + t * (b.beta - a.beta));
            }
        }
        let last = s.last().expect("non-empty");
        (last.alpha, last.beta)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(0.0..1.0).contains(&self.smoothing) {
            return Err(ModelError::Config(format!("smoothing {} outside [0, 1)", self.smoothing)));
        }
        for w in self.schedule.windows(2) {
            if w[1].step <= w[0].step {
                return Err(ModelError::Config("schedule steps must increase".into()));
            }
        }
        for b in &self.schedule {
            if b.alpha < 0.0 || b.beta < 0.0 || b.alpha + b.beta <= 0.0 {
                return Err(ModelError::Config(format!(
                    "schedule knot at step {} needs alpha, beta >= 0 and alpha + beta > 0",
                    b.step
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub warmup: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            warmup: 4000,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
            clip_norm: Some(1.0),
        }
    }
}

impl OptimizerConfig {
    /// Linear warmup to `lr`, then `lr · sqrt(warmup / step)`; `step` is 1-based.
    pub fn rate(&self, step: usize) -> f64 {
        let s = step.max(1) as f64;
        let w = self.warmup.max(1) as f64;
        if s < w {
            self.lr * s / w
        } else {
            self.lr * (w / s).sqrt()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum Strategy {
    Greedy,
    Temperature { temperature: f64 },
    TopK { k: usize, temperature: f64 },
    TopP { p: f64, temperature: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    #[serde(flatten)]
    pub strategy: Strategy,
    pub max_len: usize,
    #[serde(default)]
    pub seed: u64,
}

impl DecodeConfig {
    pub fn greedy(max_len: usize) -> Self {
        Self {
            strategy: Strategy::Greedy,
            max_len,
            seed: 0,
        }
    }

    pub fn validate(&self, window: usize) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.max_len == 0 || self.max_len > window {
            return bad(format!("max_len {} must be in 1..={window}", self.max_len));
        }
        let t = match self.strategy {
            Strategy::Greedy => 1.0,
            Strategy::Temperature { temperature } => temperature,
            Strategy::TopK { k, temperature } => {
                if k == 0 {
                    return bad("top-k needs k >= 1".into());
                }
                temperature
            }
            Strategy::TopP { p, temperature } => {
                if !(p > 0.0 && p <= 1.0) {
                    return bad(format!("top-p needs p in (0, 1], got {p}"));
                }
                temperature
            }
        };
        if !(t > 0.0 && t.is_finite()) {
            return bad(format!("temperature must be positive, got {t}"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_interpolates() {
        let lc = LossConfig {
            smoothing: 0.1,
            schedule: vec![
                Breakpoint { step: 0, alpha: 0.0, beta: 1.0 },
                Breakpoint { step: 1000, alpha: 0.5, beta: 1.0 },
            ],
        };
        assert_eq!(lc.weights(500), (0.25, 1.0));
        assert_eq!(lc.weights(0), (0.0, 1.0));
        assert_eq!(lc.weights(5000), (0.5, 1.0));
        let r = LossConfig::ramp(1000);
        assert_eq!(r.weights(300), (0.0, 1.0));
        assert_eq!(r.weights(1000), (0.5, 1.0));
        assert!((r.weights(650).0 - 0.25).abs() < 1e-12);
    }

    #[test]
    fn schedule_validation() {
        let mut lc = LossConfig::default();
        lc.schedule[0].beta = 0.0;
        assert!(lc.validate().is_err());
        assert!(LossConfig::ramp(10).validate().is_ok());
    }

    #[test]
    fn warmup_then_inverse_sqrt() {
        let o = OptimizerConfig { lr: 1.0, warmup: 100, ..Default::default() };
        assert!((o.rate(50) - 0.5).abs() < 1e-12);
        assert!((o.rate(100) - 1.0).abs() < 1e-12);
        assert!((o.rate(400) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn presets_validate() {
        ModelConfig::toy(168).validate().unwrap();
        ModelConfig::large(3).validate().unwrap();
        let mut c = ModelConfig::toy(168);
        c.d_k = 10;
        assert!(c.validate().is_err());
    }

    #[test]
    fn decode_config_json_shape() {
        let dc = DecodeConfig {
            strategy: Strategy::TopP { p: 0.9, temperature: 1.0 },
            max_len: 64,
            seed: 3,
        };
        let json = serde_json::to_string(&dc).unwrap();
        assert!(json.contains("\"strategy\":\"top_p\""));
        assert_eq!(serde_json::from_str::<DecodeConfig>(&json).unwrap(), dc);
        assert!(DecodeConfig { max_len: 0, ..dc }.validate(64).is_err());
    }
}
