use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    /// The forecast target's day.
    pub day: NaiveDate,
    pub model: String,
    pub prediction: f64,
    pub actual: f64,
}

impl ForecastRecord {
    pub fn error(&self) -> f64 {
        self.prediction - self.actual
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model: String,
    pub mae: f64,
    pub mse: f64,
    /// `None` when every actual is zero.
    pub mape: Option<f64>,
    pub n: usize,
    /// Records left out of MAPE because their actual is zero.
    pub mape_excluded: usize,
}

/// Metrics over one model's records. Records are summed in day order so the
/// result does not depend on input order.
pub fn metrics(model: &str, records: &[&ForecastRecord]) -> Result<MetricReport> {
    if records.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let mut sorted: Vec<&ForecastRecord> = records.to_vec();
    sorted.sort_by(|a, b| a.day.cmp(&b.day).then(a.prediction.total_cmp(&b.prediction)).then(a.actual.total_cmp(&b.actual)));
    let n = sorted.len() as f64;
    let (mut abs, mut sq, mut pct, mut pct_n) = (0.0, 0.0, 0.0, 0usize);
    for r in &sorted {
        let e = r.error();
        abs += e.abs();
        sq += e * e;
        if r.actual != 0.0 {
            pct += (e / r.actual).abs();
            pct_n += 1;
        }
    }
    Ok(MetricReport {
        model: String::from(model),
        mae: abs / n,
        mse: sq / n,
        mape: (pct_n > 0).then(|| pct / pct_n as f64),
        n: sorted.len(),
        mape_excluded: sorted.len() - pct_n,
    })
}

/// One report per model, in order of first appearance.
pub fn metrics_by_model(records: &[ForecastRecord]) -> Result<Vec<MetricReport>> {
    if records.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<&ForecastRecord>> = BTreeMap::new();
    for r in records {
        let g = groups.entry(r.model.as_str()).or_default();
        if g.is_empty() {
            order.push(r.model.as_str());
        }
        g.push(r);
    }
    order.iter().map(|m| metrics(m, &groups[m])).collect()
}

/// Errors aligned on the days every model forecast.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTable {
    pub models: Vec<String>,
    pub days: Vec<NaiveDate>,
    /// `errors[model][day]`
    pub errors: Vec<Vec<f64>>,
}

pub fn error_table(records: &[ForecastRecord]) -> ErrorTable {
    let mut models: Vec<String> = Vec::new();
    let mut by_model: Vec<BTreeMap<NaiveDate, f64>> = Vec::new();
    for r in records {
        let i = match models.iter().position(|m| *m == r.model) {
            Some(i) => i,
            None => {
                models.push(r.model.clone());
                by_model.push(BTreeMap::new());
                models.len() - 1
            }
        };
        by_model[i].insert(r.day, r.error());
    }
    let days: Vec<NaiveDate> = match by_model.first() {
        Some(first) => first.keys().copied().filter(|d| by_model.iter().all(|m| m.contains_key(d))).collect(),
        None => Vec::new(),
    };
    let errors = by_model.iter().map(|m| days.iter().map(|d| m[d]).collect()).collect();
    ErrorTable { models, days, errors }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn rec(day: u32, model: &str, p: f64, a: f64) -> ForecastRecord {
        ForecastRecord { day: NaiveDate::from_ymd_opt(2017, 1, day).unwrap(), model: model.into(), prediction: p, actual: a }
    }

    #[test]
    fn examples() {
        let r = [rec(1, "m", 110.0, 100.0)];
        let m = metrics_by_model(&r).unwrap().remove(0);
        assert_eq!((m.mae, m.mse, m.n), (10.0, 100.0, 1));
        assert!((m.mape.unwrap() - 0.10).abs() < 1e-15);

        let perfect = [rec(1, "m", 2.0, 2.0), rec(2, "m", 3.0, 3.0)];
        let m = metrics_by_model(&perfect).unwrap().remove(0);
        assert_eq!((m.mae, m.mse, m.mape), (0.0, 0.0, Some(0.0)));

        let zero = [rec(1, "m", 1.0, 0.0), rec(2, "m", 2.0, 4.0)];
        let m = metrics_by_model(&zero).unwrap().remove(0);
        assert_eq!((m.mae, m.mse, m.mape, m.mape_excluded), (1.5, 2.5, Some(0.5), 1));
        assert!(metrics_by_model(&[]).is_err());
    }

    #[test]
    fn constant_error_has_mse_equal_mae_squared() {
        let r: Vec<ForecastRecord> = (1..=9).map(|d| rec(d, "m", d as f64 + 0.3, d as f64)).collect();
        let m = metrics_by_model(&r).unwrap().remove(0);
        assert!((m.mse - m.mae * m.mae).abs() < 1e-12);
    }

    #[test]
    fn error_table_aligns_days() {
        let r = vec![rec(1, "a", 1.0, 0.0), rec(2, "a", 2.0, 0.0), rec(2, "b", 5.0, 0.0)];
        let t = error_table(&r);
        assert_eq!(t.models, vec![String::from("a"), String::from("b")]);
        assert_eq!(t.days.len(), 1);
        assert_eq!(t.errors, vec![vec![2.0], vec![5.0]]);
    }

    proptest! {
        #[test]
        fn permutation_invariant(values in prop::collection::vec((0.1f64..10.0, 0.1f64..10.0), 1..40), seed in any::<u64>()) {
            let recs: Vec<ForecastRecord> = values.iter().enumerate().map(|(i, &(p, a))| rec(1 + (i % 28) as u32, "m", p, a)).collect();
            let mut shuffled = recs.clone();
            use rand::{seq::SliceRandom, SeedableRng};
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = metrics_by_model(&recs).unwrap();
            let b = metrics_by_model(&shuffled).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!(metrics_by_model(&recs).unwrap()[0].mae >= 0.0);
        }
    }
}
