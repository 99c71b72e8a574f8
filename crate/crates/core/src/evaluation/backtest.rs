use alloc::string::{String, ToString};
use alloc::vec::Vec;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::ForecastRecord;
use crate::features::{FeatureMatrix, TargetTransform};
use crate::models::{fit_garch, fit_har, fit_hybrid, GarchModel, HarModel, HarVariant, HybridConfig, HybridModel};
use crate::{Error, Result};

/// A model that can be refit on a set of matrix rows and then forecast the
/// target of another row.
pub trait Forecaster {
    fn name(&self) -> String;
    fn fit(&mut self, matrix: &FeatureMatrix, rows: &[usize]) -> Result<()>;
    fn predict(&self, matrix: &FeatureMatrix, row: usize) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scheme {
    /// Earliest feature day eligible for fitting.
    pub train_start: Option<NaiveDate>,
    pub train_end: NaiveDate,
    /// Forecast target days covered by the test span.
    pub test_start: NaiveDate,
    pub test_end: Option<NaiveDate>,
    /// Refit after this many forecasts; `None` fits once.
    pub refit_every: Option<usize>,
}

impl Scheme {
    pub fn validate(&self) -> Result<()> {
        if self.test_start <= self.train_end {
            return Err(Error::InvalidInput(alloc::format!(
                "test span starts {} before training ends {}",
                self.test_start, self.train_end
            )));
        }
        if self.test_end.is_some_and(|e| e < self.test_start) {
            return Err(Error::InvalidInput("test span ends before it starts".into()));
        }
        if self.refit_every == Some(0) {
            return Err(Error::InvalidInput("refit cadence must be positive".into()));
        }
        Ok(())
    }

    fn in_test(&self, day: NaiveDate) -> bool {
        day >= self.test_start && self.test_end.is_none_or(|e| day <= e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitEvent {
    pub model: String,
    /// Day of the forecast origin that triggered the fit.
    pub origin_day: NaiveDate,
    /// Latest target day seen by the fit.
    pub last_train_day: NaiveDate,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Backtest {
    pub records: Vec<ForecastRecord>,
    pub fits: Vec<FitEvent>,
}

/// Walk-forward evaluation. At origin row `r` a model may use rows whose
/// target day is no later than day `r`; it then forecasts row `r`'s target
/// (day `r + 1`). Records come out grouped by model, days ascending.
pub fn rolling_backtest(models: &mut [&mut dyn Forecaster], matrix: &FeatureMatrix, scheme: &Scheme) -> Result<Backtest> {
    scheme.validate()?;
    let n = matrix.n_rows();
    let origins: Vec<usize> = (0..n.saturating_sub(1)).filter(|&r| matrix.mask[r] && scheme.in_test(matrix.days[r + 1])).collect();
    if origins.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let mut out = Backtest::default();
    for model in models.iter_mut() {
        let name = model.name();
        for (i, &r) in origins.iter().enumerate() {
            if i == 0 || scheme.refit_every.is_some_and(|k| i % k == 0) {
                let rows: Vec<usize> = (0..r)
                    .filter(|&s| matrix.mask[s] && scheme.train_start.is_none_or(|d| matrix.days[s] >= d))
                    .collect();
                let last = *rows.last().ok_or(Error::InsufficientData { needed: 1, got: 0 })?;
                model.fit(matrix, &rows)?;
                out.fits.push(FitEvent {
                    model: name.clone(),
                    origin_day: matrix.days[r],
                    last_train_day: matrix.days[last + 1],
                    rows: rows.len(),
                });
            }
            out.records.push(ForecastRecord {
                day: matrix.days[r + 1],
                model: name.clone(),
                prediction: model.predict(matrix, r)?,
                actual: matrix.target[r],
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct HarForecaster {
    pub variant: HarVariant,
    pub model: Option<HarModel>,
}

impl HarForecaster {
    pub fn new(variant: HarVariant) -> Self {
        Self { variant, model: None }
    }
}

impl Forecaster for HarForecaster {
    fn name(&self) -> String {
        self.variant.label().to_string()
    }

    fn fit(&mut self, matrix: &FeatureMatrix, rows: &[usize]) -> Result<()> {
        self.model = Some(fit_har(matrix, self.variant, rows)?);
        Ok(())
    }

    fn predict(&self, matrix: &FeatureMatrix, row: usize) -> Result<f64> {
        self.model.as_ref().ok_or(Error::Undefined("model not fitted"))?.predict_row(matrix, row)
    }
}

/// GARCH(1,1) on the daily return of each matrix row; its one-step
/// conditional variance is mapped through the target transform.
#[derive(Debug, Clone)]
pub struct GarchForecaster {
    /// `returns[r]` is the return realized on `matrix.days[r]`.
    pub returns: Vec<f64>,
    pub transform: TargetTransform,
    pub model: Option<GarchModel>,
}

impl GarchForecaster {
    pub fn new(returns: Vec<f64>, transform: TargetTransform) -> Self {
        Self { returns, transform, model: None }
    }
}

impl Forecaster for GarchForecaster {
    fn name(&self) -> String {
        "GARCH".to_string()
    }

    fn fit(&mut self, matrix: &FeatureMatrix, rows: &[usize]) -> Result<()> {
        if self.returns.len() != matrix.n_rows() {
            return Err(Error::DimensionMismatch { expected: matrix.n_rows(), got: self.returns.len() });
        }
        let last = rows.last().map_or(0, |&s| s + 1);
        self.model = Some(fit_garch(&self.returns[..=last.min(self.returns.len() - 1)])?);
        Ok(())
    }

    fn predict(&self, _matrix: &FeatureMatrix, row: usize) -> Result<f64> {
        let m = self.model.as_ref().ok_or(Error::Undefined("model not fitted"))?;
        Ok(self.transform.apply(m.forecast_after(&self.returns[..=row])))
    }
}

#[derive(Debug, Clone)]
pub struct HybridForecaster {
    pub label: String,
    pub config: HybridConfig,
    pub model: Option<HybridModel>,
}

impl HybridForecaster {
    pub fn new(label: &str, config: HybridConfig) -> Self {
        Self { label: label.to_string(), config, model: None }
    }
}

impl Forecaster for HybridForecaster {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn fit(&mut self, matrix: &FeatureMatrix, rows: &[usize]) -> Result<()> {
        self.model = Some(fit_hybrid(matrix, rows, &self.config)?);
        Ok(())
    }

    fn predict(&self, matrix: &FeatureMatrix, row: usize) -> Result<f64> {
        self.model.as_ref().ok_or(Error::Undefined("model not fitted"))?.predict(matrix, row)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{Column, FeatureGroup};
    use alloc::vec;

    /// Predicts the mean target of its fit rows and remembers them.
    struct MeanModel {
        label: &'static str,
        mean: f64,
        fitted: Vec<Vec<usize>>,
    }

    impl Forecaster for MeanModel {
        fn name(&self) -> String {
            self.label.into()
        }
        fn fit(&mut self, m: &FeatureMatrix, rows: &[usize]) -> Result<()> {
            self.mean = rows.iter().map(|&r| m.target[r]).sum::<f64>() / rows.len() as f64;
            self.fitted.push(rows.to_vec());
            Ok(())
        }
        fn predict(&self, _: &FeatureMatrix, _: usize) -> Result<f64> {
            Ok(self.mean)
        }
    }

    fn matrix(n: usize) -> FeatureMatrix {
        let d0 = NaiveDate::from_ymd_opt(2016, 1, 1).unwrap();
        let days = (0..n).map(|i| d0 + chrono::Duration::days(i as i64)).collect();
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let y: Vec<f64> = (0..n).map(|i| if i + 1 < n { (i + 1) as f64 } else { f64::NAN }).collect();
        FeatureMatrix::new(days, vec![Column::new("x", "", FeatureGroup::PriceFluctuations, x)], "y", y).unwrap()
    }

    fn day(i: i64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2016, 1, 1).unwrap() + chrono::Duration::days(i)
    }

    #[test]
    fn walk_forward_without_leakage() {
        let m = matrix(100);
        let scheme = Scheme { train_start: None, train_end: day(59), test_start: day(60), test_end: None, refit_every: Some(10) };
        let mut a = MeanModel { label: "a", mean: 0.0, fitted: vec![] };
        let mut b = MeanModel { label: "b", mean: 0.0, fitted: vec![] };
        let bt = rolling_backtest(&mut [&mut a, &mut b], &m, &scheme).unwrap();
        let days_a: Vec<_> = bt.records.iter().filter(|r| r.model == "a").map(|r| r.day).collect();
        let days_b: Vec<_> = bt.records.iter().filter(|r| r.model == "b").map(|r| r.day).collect();
        assert_eq!(days_a, days_b);
        assert_eq!(days_a.len(), 40);
        assert_eq!(a.fitted.len(), 4);
        for r in &bt.records {
            let fit = bt.fits.iter().filter(|f| f.model == r.model && f.origin_day < r.day).last().unwrap();
            assert!(r.day > fit.last_train_day);
        }
        // first fit: rows 0..=58 (targets up to day 59)
        assert_eq!(a.fitted[0], (0..59).collect::<Vec<_>>());
    }

    #[test]
    fn single_fit_and_validation() {
        let m = matrix(100);
        let mut a = MeanModel { label: "a", mean: 0.0, fitted: vec![] };
        let scheme = Scheme { train_start: None, train_end: day(59), test_start: day(60), test_end: Some(day(79)), refit_every: None };
        let bt = rolling_backtest(&mut [&mut a], &m, &scheme).unwrap();
        assert_eq!(a.fitted.len(), 1);
        assert_eq!(bt.records.len(), 20);
        assert!(bt.records.windows(2).all(|w| w[0].prediction == w[1].prediction));
        let bad = Scheme { test_start: day(50), ..scheme };
        assert!(rolling_backtest(&mut [&mut a], &m, &bad).is_err());
    }
}
