//! Daily realized measures and the jump/continuous decomposition.
//!
//! For a day with `M` intraday returns `r_1..r_M`:
//!
//! * `RV  = Σ r_j²`
//! * `BPV = (π/2)·M/(M−1)·Σ_{j≥2} |r_j||r_{j−1}|`
//! * `TPQ = M·μ₄₃⁻³·M/(M−2)·Σ_{j≥3} |r_j|^{4/3}|r_{j−1}|^{4/3}|r_{j−2}|^{4/3}`,
//!   with `μ₄₃ = 2^{2/3}·Γ(7/6)/Γ(1/2)`
//! * `RQ  = (M/3)·Σ r_j⁴`
//!
//! The jump statistic is the ratio form
//! `Z = ((RV − BPV)/RV) / sqrt(((π/2)² + π − 5)·(1/M)·max(1, TPQ/BPV²))`,
//! and a day's jump component is `J = 1{Z > Φ⁻¹(1−α)}·max(RV − BPV, 0)` with
//! `CV = RV − J`.

use alloc::vec::Vec;
use core::f64::consts::PI;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::market_data::ReturnPanel;
use crate::stats::normal_quantile;
use crate::{Error, Result};

/// `E|Z|^{4/3}` for a standard normal `Z`.
pub fn mu_four_thirds() -> f64 {
    libm::pow(2.0, 2.0 / 3.0) * libm::tgamma(7.0 / 6.0) / libm::tgamma(0.5)
}

/// `(π/2)² + π − 5`, the asymptotic variance factor of the ratio statistic.
pub fn ratio_variance_factor() -> f64 {
    (PI / 2.0) * (PI / 2.0) + PI - 5.0
}

pub fn realized_variance(returns: &[f64]) -> Result<f64> {
    if returns.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    Ok(returns.iter().map(|r| r * r).sum())
}

pub fn bipower_variation(returns: &[f64]) -> Result<f64> {
    let m = returns.len();
    if m < 2 {
        return Err(Error::InsufficientData { needed: 2, got: m });
    }
    let s: f64 = returns.windows(2).map(|w| w[0].abs() * w[1].abs()).sum();
    Ok(PI / 2.0 * (m as f64 / (m - 1) as f64) * s)
}

pub fn tripower_quarticity(returns: &[f64]) -> Result<f64> {
    let m = returns.len();
    if m < 3 {
        return Err(Error::InsufficientData { needed: 3, got: m });
    }
    let p = |x: f64| libm::pow(x.abs(), 4.0 / 3.0);
    let s: f64 = returns.windows(3).map(|w| p(w[0]) * p(w[1]) * p(w[2])).sum();
    let mu = mu_four_thirds();
    let mf = m as f64;
    Ok(mf / (mu * mu * mu) * (mf / (mf - 2.0)) * s)
}

pub fn realized_quarticity(returns: &[f64]) -> Result<f64> {
    if returns.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let s: f64 = returns.iter().map(|r| (r * r) * (r * r)).sum();
    Ok(returns.len() as f64 / 3.0 * s)
}

/// Ratio jump statistic; invariant to rescaling the returns.
/// `rv == 0` or `bpv == 0` leaves it undefined.
pub fn jump_statistic(rv: f64, bpv: f64, tpq: f64, m: usize) -> Result<f64> {
    if m < 3 {
        return Err(Error::InsufficientData { needed: 3, got: m });
    }
    if rv <= 0.0 || bpv <= 0.0 {
        return Err(Error::Undefined("jump statistic needs rv > 0 and bpv > 0"));
    }
    let clamp = (tpq / (bpv * bpv)).max(1.0);
    let scale = libm::sqrt(ratio_variance_factor() / m as f64 * clamp);
    Ok(((rv - bpv) / rv) / scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpTestConfig {
    pub alpha: f64,
    pub threshold: f64,
}

impl JumpTestConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidInput(alloc::format!(
                "jump-test alpha must lie in (0, 1), got {alpha}"
            )));
        }
        Ok(Self {
            alpha,
            threshold: normal_quantile(1.0 - alpha),
        })
    }
}

impl Default for JumpTestConfig {
    fn default() -> Self {
        Self::new(0.01).expect("0.01 is a valid level")
    }
}

/// Returns `(jump, continuous)`; `jump + continuous == rv`.
pub fn decompose(rv: f64, bpv: f64, z: Option<f64>, cfg: &JumpTestConfig) -> (f64, f64) {
    let jump = match z {
        Some(z) if z > cfg.threshold => (rv - bpv).max(0.0),
        _ => 0.0,
    };
    (jump, rv - jump)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyRealizedMeasures {
    pub day: NaiveDate,
    pub m: usize,
    pub rv: f64,
    pub bpv: f64,
    pub tpq: f64,
    pub rq: f64,
    /// `None` when RV or BPV is zero.
    pub z: Option<f64>,
    pub jump: f64,
    pub cv: f64,
    pub ln_rv: Option<f64>,
    pub ln_j1p: f64,
    pub ln_cv: Option<f64>,
    pub sqrt_rv: f64,
    pub sqrt_j: f64,
    pub sqrt_cv: f64,
}

impl DailyRealizedMeasures {
    pub fn from_returns(day: NaiveDate, returns: &[f64], cfg: &JumpTestConfig) -> Result<Self> {
        let m = returns.len();
        let rv = realized_variance(returns)?;
        let bpv = bipower_variation(returns)?;
        let tpq = tripower_quarticity(returns)?;
        let rq = realized_quarticity(returns)?;
        let z = match jump_statistic(rv, bpv, tpq, m) {
            Ok(z) => Some(z),
            Err(Error::Undefined(_)) => None,
            Err(e) => return Err(e),
        };
        let (jump, cv) = decompose(rv, bpv, z, cfg);
        Ok(Self {
            day,
            m,
            rv,
            bpv,
            tpq,
            rq,
            z,
            jump,
            cv,
            ln_rv: None,
            ln_j1p: 0.0,
            ln_cv: None,
            sqrt_rv: 0.0,
            sqrt_j: 0.0,
            sqrt_cv: 0.0,
        }
        .transform())
    }

    /// Fills the log and square-root columns.
    pub fn transform(mut self) -> Self {
        self.ln_rv = (self.rv > 0.0).then(|| libm::log(self.rv));
        self.ln_cv = (self.cv > 0.0).then(|| libm::log(self.cv));
        self.ln_j1p = libm::log1p(self.jump);
        self.sqrt_rv = libm::sqrt(self.rv);
        self.sqrt_j = libm::sqrt(self.jump);
        self.sqrt_cv = libm::sqrt(self.cv);
        self
    }
}

pub fn measures_for_panel(panel: &ReturnPanel, cfg: &JumpTestConfig) -> Result<Vec<DailyRealizedMeasures>> {
    panel
        .days
        .iter()
        .zip(&panel.returns)
        .map(|(&day, r)| DailyRealizedMeasures::from_returns(day, r, cfg))
        .collect()
}
