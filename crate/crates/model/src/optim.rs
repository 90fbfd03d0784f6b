use crate::config::OptimizerConfig;
use crate::scalar::Scalar;

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: OptimizerConfig,
    pub step: usize,
    m: Vec<f64>,
    v: Vec<f64>,
}

pub fn global_norm<T: Scalar>(g: &[T]) -> f64 {
    g.iter().map(|x| x.f64() * x.f64()).sum::<f64>().sqrt()
}

impl Adam {
    pub fn new(cfg: OptimizerConfig, n: usize) -> Self {
        Self {
            cfg,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    /// Clips `g` to the configured global norm and applies one update.
    /// Returns the learning rate used.
    pub fn update<T: Scalar>(&mut self, params: &mut [T], g: &[T]) -> f64 {
        self.step += 1;
        let lr = self.cfg.rate(self.step);
        let mut k = 1.0;
        if let Some(c) = self.cfg.clip_norm {
            let n = global_norm(g);
            if n > c {
                k = c / n;
            }
        }
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        for i in 0..params.len() {
            let gi = g[i].f64() * k;
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * gi;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * gi * gi;
            let upd = lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.cfg.eps);
            params[i] = T::of(params[i].f64() - upd);
        }
        lr
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = OptimizerConfig {
            lr: 0.1,
            warmup: 1,
            clip_norm: None,
            ..Default::default()
        };
        let mut a = Adam::new(cfg, 2);
        let mut p = vec![1.0f64, 1.0];
        a.update(&mut p, &[3.0, -0.5]);
        assert!((p[0] - 0.9).abs() < 1e-9 && (p[1] - 1.1).abs() < 1e-9);
    }

    #[test]
    fn minimizes_quadratic() {
        let cfg = OptimizerConfig {
            lr: 0.05,
            warmup: 10,
            ..Default::default()
        };
        let mut a = Adam::new(cfg, 1);
        let mut p = vec![3.0f64];
        for _ in 0..2000 {
            let g = [2.0 * (p[0] - 1.0)];
            a.update(&mut p, &g);
        }
        assert!((p[0] - 1.0).abs() < 1e-2);
    }
}
