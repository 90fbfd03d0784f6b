//! Token-count and Solovay-Kitaev length scaling measurements.

use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::exec::{self, Exec};
use crate::gateset::GateSetConfig;
use crate::ruleset::{derive_seed, random_circuit, transpile_rules, RandomCircuitSpec, RulesetError};
use crate::sk::{SkStatus, SolovayKitaev};
use crate::tokenizer::{encode, Vocabulary};

/// Vocabulary-budget view of one gate: `l = n_q + n_g + p_ang`, `s = m * l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenBudget {
    pub n_q: usize,
    pub n_g: usize,
    pub p_ang: usize,
    pub l: usize,
    pub m: usize,
    pub s: usize,
}

impl TokenBudget {
    pub fn new(vocab: &Vocabulary, source: &GateSetConfig, target: &GateSetConfig, m: usize) -> Self {
        let n_q = vocab.max_qubits();
        let n_g = source.gates.len() + target.gates.len();
        let p_ang = vocab.binner().grid;
        let l = n_q + n_g + p_ang;
        Self {
            n_q,
            n_g,
            p_ang,
            l,
            m,
            s: m * l,
        }
    }
}

/// Ordinary least squares `y = slope * x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_stderr: f64,
    pub n: usize,
}

impl LinearFit {
    /// Two-sided confidence interval for the slope.
    pub fn slope_interval(&self, level: f64) -> Option<(f64, f64)> {
        if self.n < 3 || !self.slope_stderr.is_finite() {
            return None;
        }
        let t = StudentsT::new(0.0, 1.0, (self.n - 2) as f64).ok()?;
        let q = t.inverse_cdf(0.5 + level / 2.0);
        Some((self.slope - q * self.slope_stderr, self.slope + q * self.slope_stderr))
    }
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - (slope * a + intercept)).powi(2))
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    let slope_stderr = if n > 2 {
        (sse / (nf - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Some(LinearFit {
        slope,
        intercept,
        r_squared,
        slope_stderr,
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Qubits,
    Depth,
}

impl std::str::FromStr for SweepAxis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "qubits" => Ok(Self::Qubits),
            "depth" => Ok(Self::Depth),
            other => Err(format!("unknown sweep axis `{other}` (expected qubits or depth)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenSweep {
    pub axis: SweepAxis,
    /// Value of the axis that is held fixed.
    pub fixed: usize,
    pub points: Vec<usize>,
    pub samples: usize,
    pub include_measure: bool,
    pub seed: u64,
}

/// One sweep point; `measured_tokens` counts source plus target tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n_qubits: usize,
    pub depth: usize,
    pub samples: usize,
    pub mean_source_tokens: f64,
    pub mean_target_tokens: f64,
    pub measured_tokens: f64,
    pub mean_source_gates: f64,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenScaling {
    pub rows: Vec<ScalingRow>,
    /// `measured_tokens` against the swept axis.
    pub fit: Option<LinearFit>,
    /// Source tokens against source gate count, over every sample.
    pub per_gate: Option<LinearFit>,
    pub budget: TokenBudget,
}

struct Sample {
    src_tokens: usize,
    tgt_tokens: usize,
    src_gates: usize,
}

pub fn measure_tokens(
    sweep: &TokenSweep,
    source: &GateSetConfig,
    target: &GateSetConfig,
    vocab: &Vocabulary,
    exec: Exec,
) -> Result<TokenScaling, RulesetError> {
    let shapes: Vec<(usize, usize)> = sweep
        .points
        .iter()
        .map(|&p| match sweep.axis {
            SweepAxis::Qubits => (p, sweep.fixed),
            SweepAxis::Depth => (sweep.fixed, p),
        })
        .collect();
    let measured = exec::map_range(exec, shapes.len(), |i| {
        let (n, depth) = shapes[i];
        let point_seed = derive_seed(sweep.seed, i as u64);
        (0..sweep.samples)
            .map(|s| {
                let spec = RandomCircuitSpec {
                    num_qubits: n,
                    depth,
                    include_measure: sweep.include_measure,
                    seed: derive_seed(point_seed, s as u64),
                };
                let src = random_circuit(&spec, source)?;
                let tgt = transpile_rules(&src, target)?;
                Ok(Sample {
                    src_tokens: encode(&src, vocab)?.len(),
                    tgt_tokens: encode(&tgt, vocab)?.len(),
                    src_gates: src.gate_count(),
                })
            })
            .collect::<Result<Vec<_>, RulesetError>>()
    });

    let mut rows = Vec::with_capacity(shapes.len());
    let (mut gx, mut gy) = (Vec::new(), Vec::new());
    for (&(n_qubits, depth), samples) in shapes.iter().zip(measured) {
        let samples = samples?;
        let k = samples.len().max(1) as f64;
        let mean = |f: &dyn Fn(&Sample) -> usize| samples.iter().map(|s| f(s) as f64).sum::<f64>() / k;
        let src = mean(&|s| s.src_tokens);
        let tgt = mean(&|s| s.tgt_tokens);
        for s in &samples {
            gx.push(s.src_gates as f64);
            gy.push(s.src_tokens as f64);
        }
        rows.push(ScalingRow {
            n_qubits,
            depth,
            samples: samples.len(),
            mean_source_tokens: src,
            mean_target_tokens: tgt,
            measured_tokens: src + tgt,
            mean_source_gates: mean(&|s| s.src_gates),
            slope: f64::NAN,
            intercept: f64::NAN,
            r_squared: f64::NAN,
        });
    }

    let xs: Vec<f64> = sweep.points.iter().map(|&p| p as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.measured_tokens).collect();
    let fit = linear_fit(&xs, &ys);
    if let Some(f) = fit {
        for r in &mut rows {
            r.slope = f.slope;
            r.intercept = f.intercept;
            r.r_squared = f.r_squared;
        }
    }
    let mean_gates = rows.iter().map(|r| r.mean_source_gates).sum::<f64>() / rows.len().max(1) as f64;
    Ok(TokenScaling {
        rows,
        fit,
        per_gate: linear_fit(&gx, &gy),
        budget: TokenBudget::new(vocab, source, target, mean_gates.round() as usize),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkGrowthRow {
    pub theta: f64,
    pub depth: usize,
    pub achieved_distance: f64,
    pub length: usize,
}

/// Fit of `ln(length) = ln(a) + c * ln(ln(1/ε))` over every row with a
/// nonzero distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkGrowth {
    pub rows: Vec<SkGrowthRow>,
    pub exponent: Option<f64>,
    pub exponent_ci95: Option<(f64, f64)>,
    pub plateaus: usize,
}

/// Decomposes `Rz(θ)` for every target at every depth up to `max_depth`.
pub fn measure_sk_growth(
    targets: &[f64],
    max_depth: usize,
    epsilon: f64,
    sk: &SolovayKitaev,
    exec: Exec,
) -> SkGrowth {
    let traces = exec::map_slice(exec, targets, |&theta| {
        let trace = sk
            .decompose_trace(&crate::linalg::rz(theta), max_depth)
            .expect("2x2 target");
        let plateau = trace.windows(2).any(|w| {
            w[1].achieved_distance > epsilon && w[1].achieved_distance >= w[0].achieved_distance * (1.0 - 1e-12)
        });
        (theta, trace, plateau)
    });
    let mut rows = Vec::new();
    let mut plateaus = 0;
    for (theta, trace, plateau) in traces {
        plateaus += plateau as usize;
        for (depth, r) in trace.into_iter().enumerate() {
            debug_assert!(r.status == SkStatus::Ok);
            rows.push(SkGrowthRow {
                theta,
                depth,
                achieved_distance: r.achieved_distance,
                length: r.length,
            });
        }
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.achieved_distance > 1e-12 && r.achieved_distance < 1.0 && r.length > 0)
        .map(|r| ((1.0 / r.achieved_distance).ln().ln(), (r.length as f64).ln()))
        .unzip();
    let fit = linear_fit(&xs, &ys);
    SkGrowth {
        rows,
        exponent: fit.map(|f| f.slope),
        exponent_ci95: fit.and_then(|f| f.slope_interval(0.95)),
        plateaus,
    }
}

/// Writes serializable rows as CSV with a header line.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sk::SkConfig;

    #[test]
    fn fit_recovers_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope - 3.0).abs() < 1e-12);
        assert!((f.intercept + 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!(linear_fit(&[1.0, 1.0], &[2.0, 3.0]).is_none());
    }

    #[test]
    fn slope_interval_covers_noisy_slope() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + if (*v as i64) % 2 == 0 { 0.5 } else { -0.5 }).collect();
        let f = linear_fit(&x, &y).unwrap();
        let (lo, hi) = f.slope_interval(0.95).unwrap();
        assert!(lo < 2.0 && 2.0 < hi);
    }

    #[test]
    fn budget_identities() {
        let b = TokenBudget::new(&Vocabulary::default(), &GateSetConfig::eagle(), &GateSetConfig::ionq(), 7);
        assert_eq!(b.l, b.n_q + b.n_g + b.p_ang);
        assert_eq!(b.n_g, 8);
        assert_eq!(b.p_ang, 128);
        assert_eq!(b.s, 7 * b.l);
    }

    #[test]
    fn depth_zero_is_header_only() {
        let sweep = TokenSweep {
            axis: SweepAxis::Depth,
            fixed: 2,
            points: vec![0],
            samples: 5,
            include_measure: false,
            seed: 3,
        };
        let vocab = Vocabulary::default();
        let r = measure_tokens(&sweep, &GateSetConfig::eagle(), &GateSetConfig::ionq(), &vocab, Exec::Sequential)
            .unwrap();
        let header = vocab.header_len(0) as f64;
        assert_eq!(r.rows[0].mean_source_tokens, header);
        assert_eq!(r.rows[0].mean_target_tokens, header);
    }

    #[test]
    fn basis_target_has_constant_length() {
        let sk = SolovayKitaev::build(&SkConfig { base_length: 6, ..SkConfig::default() }, Exec::Sequential).unwrap();
        let g = measure_sk_growth(&[std::f64::consts::FRAC_PI_4], 2, 1e-3, &sk, Exec::Sequential);
        assert!(g.rows.iter().all(|r| r.length == 1 && r.achieved_distance < 1e-12));
    }
}
