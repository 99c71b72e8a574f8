use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{error_table, ForecastRecord};
use crate::stats::{normal_cdf, student_t_cdf};
use crate::{Error, Result};

pub const MIN_DM_LENGTH: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LongRunVariance {
    /// Sample variance of the loss differential.
    #[default]
    Lag0,
    /// Bartlett-weighted autocovariances up to `lags`.
    NeweyWest { lags: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DmConfig {
    pub significance: f64,
    pub variance: LongRunVariance,
    /// Harvey–Leybourne–Newbold correction with Student-t p-values.
    pub small_sample: bool,
}

impl Default for DmConfig {
    fn default() -> Self {
        Self { significance: 0.10, variance: LongRunVariance::Lag0, small_sample: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmResult {
    pub model_a: String,
    pub model_b: String,
    /// `None` when the loss differential is identically zero, or when it is
    /// constant and non-zero (statistic ±∞).
    pub statistic: Option<f64>,
    /// One-sided p-value for "A more accurate than B".
    pub p_value: f64,
    pub reject_at: f64,
    pub rejected: bool,
    pub loss: String,
    pub n: usize,
}

/// One-sided Diebold–Mariano test on squared-error loss. A negative
/// statistic favours `a`. An all-zero differential is reported as
/// indistinguishable with `p = 0.5`.
pub fn dm_test(model_a: &str, errors_a: &[f64], model_b: &str, errors_b: &[f64], cfg: &DmConfig) -> Result<DmResult> {
    if errors_a.len() != errors_b.len() {
        return Err(Error::DimensionMismatch { expected: errors_a.len(), got: errors_b.len() });
    }
    let n = errors_a.len();
    if n < MIN_DM_LENGTH {
        return Err(Error::InsufficientData { needed: MIN_DM_LENGTH, got: n });
    }
    let d: Vec<f64> = errors_a.iter().zip(errors_b).map(|(a, b)| a * a - b * b).collect();
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let gamma = |k: usize| (k..n).map(|t| (d[t] - mean) * (d[t - k] - mean)).sum::<f64>() / nf;
    let v = match cfg.variance {
        LongRunVariance::Lag0 => gamma(0),
        LongRunVariance::NeweyWest { lags } => {
            let l = lags.min(n - 1);
            gamma(0) + 2.0 * (1..=l).map(|k| (1.0 - k as f64 / (l as f64 + 1.0)) * gamma(k)).sum::<f64>()
        }
    };
    let result = |statistic: Option<f64>, p: f64| DmResult {
        model_a: String::from(model_a),
        model_b: String::from(model_b),
        statistic,
        p_value: p,
        reject_at: cfg.significance,
        rejected: p < cfg.significance,
        loss: String::from("MSE"),
        n,
    };
    if d.iter().all(|&x| x == 0.0) {
        return Ok(result(None, 0.5));
    }
    if v <= 0.0 {
        return Ok(result(None, if mean < 0.0 { 0.0 } else { 1.0 }));
    }
    let mut stat = mean / libm::sqrt(v / nf);
    let p = if cfg.small_sample {
        stat *= libm::sqrt((nf - 1.0) / nf);
        student_t_cdf(stat, nf - 1.0)
    } else {
        normal_cdf(stat)
    };
    Ok(result(Some(stat), p.clamp(0.0, 1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionHeatmap {
    pub models: Vec<String>,
    /// `counts[a][b]`: segments where `a` was significantly more accurate than `b`.
    pub counts: Vec<Vec<usize>>,
    pub segments: usize,
    pub segment_size: usize,
    pub significance: f64,
}

impl RejectionHeatmap {
    /// Cell label such as `"32/50"`.
    pub fn cell_label(&self, a: usize, b: usize) -> String {
        alloc::format!("{}/{}", self.counts[a][b], self.segments)
    }
}

/// Pairwise DM tests over consecutive segments of the aligned
/// out-of-sample errors; a trailing partial segment is dropped.
pub fn rejection_heatmap(records: &[ForecastRecord], segment_size: usize, cfg: &DmConfig) -> Result<RejectionHeatmap> {
    let table = error_table(records);
    if segment_size < MIN_DM_LENGTH || table.days.len() < segment_size {
        return Err(Error::InsufficientData { needed: segment_size.max(MIN_DM_LENGTH), got: table.days.len() });
    }
    let segments = table.days.len() / segment_size;
    let k = table.models.len();
    let mut counts = alloc::vec![alloc::vec![0; k]; k];
    for s in 0..segments {
        let span = s * segment_size..(s + 1) * segment_size;
        for a in 0..k {
            for b in 0..k {
                let r = dm_test(
                    &table.models[a],
                    &table.errors[a][span.clone()],
                    &table.models[b],
                    &table.errors[b][span.clone()],
                    cfg,
                )?;
                if r.rejected {
                    counts[a][b] += 1;
                }
            }
        }
    }
    Ok(RejectionHeatmap { models: table.models, counts, segments, segment_size, significance: cfg.significance })
}
