//! The two-stage hybrid: standardize → forward selection → kernel PCA →
//! GBT and LSTM → residual-weighted ensemble.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::ensemble::{EnsembleModel, Weights};
use super::gbt::{fit_gbt, GbtParams};
use super::lstm::{fit_lstm, LstmParams, SequenceSet};
use crate::features::{
    forward_sequential_selection, kpca_fit, ComponentRule, FeatureMatrix, Kernel, KpcaModel, SelectionResult,
    Standardizer, DEFAULT_RIDGE,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelChoice {
    Linear,
    /// `gamma` defaults to `1/d` for `d` input columns.
    Rbf { gamma: Option<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HybridConfig {
    /// Run forward selection and kernel PCA; when off, every column feeds
    /// both learners directly.
    pub feature_engineering: bool,
    pub sfs_budget: usize,
    pub ridge_lambda: f64,
    pub kernel: KernelChoice,
    pub components: ComponentRule,
    /// Append the selected columns to the kernel components.
    pub augment_components: bool,
    pub use_gbt: bool,
    pub use_lstm: bool,
    /// Trailing share of the fit rows held out for selection, early stopping
    /// and ensemble weights.
    pub validation_fraction: f64,
    pub gbt: GbtParams,
    pub lstm: LstmParams,
}

impl Default for HybridConfig {
    fn default() -> Self {
        Self {
            feature_engineering: true,
            sfs_budget: 30,
            ridge_lambda: DEFAULT_RIDGE,
            kernel: KernelChoice::Rbf { gamma: None },
            components: ComponentRule::default(),
            augment_components: false,
            use_gbt: true,
            use_lstm: true,
            validation_fraction: 0.2,
            gbt: GbtParams::default(),
            lstm: LstmParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridModel {
    pub config: HybridConfig,
    /// Standardization of the learner-facing columns.
    pub standardizer: Standardizer,
    pub selection: Option<SelectionResult>,
    pub kpca: Option<KpcaModel>,
    pub ensemble: EnsembleModel,
    pub validation: ValidationSummary,
}

/// Validation MAEs on the rows where every active learner forecasts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub n: usize,
    pub lstm_mae: Option<f64>,
    pub gbt_mae: Option<f64>,
    pub ensemble_mae: f64,
}

fn mae(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len().max(1) as f64
}

impl HybridModel {
    /// Standardized learner-facing columns at `row`, or `None` when any is missing.
    fn base_row(&self, matrix: &FeatureMatrix, idx: &[usize], row: usize) -> Option<Vec<f64>> {
        let raw = matrix.row_values(row, idx);
        if raw.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(
            raw.iter()
                .zip(&self.standardizer.means)
                .zip(&self.standardizer.scales)
                .map(|((v, m), s)| (v - m) / s)
                .collect(),
        )
    }

    fn gbt_input(&self, base: &[f64]) -> f64 {
        self.ensemble.gbt.as_ref().map_or(0.0, |g| g.predict_row(base))
    }

    /// Per-day LSTM input: kernel components (plus the base columns when
    /// augmenting or when kernel PCA is off) and the GBT prediction.
    fn lstm_step(&self, base: &[f64]) -> Result<Vec<f64>> {
        let mut step = match &self.kpca {
            Some(k) => {
                let mut v = k.transform(base)?;
                if self.config.augment_components {
                    v.extend_from_slice(base);
                }
                v
            }
            None => base.to_vec(),
        };
        if self.ensemble.gbt.is_some() {
            step.push(self.gbt_input(base));
        }
        Ok(step)
    }

    fn window(&self, matrix: &FeatureMatrix, idx: &[usize], row: usize) -> Result<Option<Vec<Vec<f64>>>> {
        let len = self.config.lstm.seq_len;
        if row + 1 < len {
            return Ok(None);
        }
        let mut seq = Vec::with_capacity(len);
        for r in row + 1 - len..=row {
            match self.base_row(matrix, idx, r) {
                Some(b) => seq.push(self.lstm_step(&b)?),
                None => return Ok(None),
            }
        }
        Ok(Some(seq))
    }

    pub fn feature_names(&self) -> &[String] {
        &self.standardizer.names
    }

    /// Component forecasts `(lstm, gbt)` for `row`.
    pub fn predict_parts(&self, matrix: &FeatureMatrix, row: usize) -> Result<(Option<f64>, Option<f64>)> {
        let idx = matrix.column_indices(&self.standardizer.names)?;
        let base = self
            .base_row(matrix, &idx, row)
            .ok_or_else(|| Error::InvalidInput(alloc::format!("row {row} has missing features")))?;
        let gbt = self.ensemble.gbt.as_ref().map(|g| g.predict_row(&base));
        let lstm = match &self.ensemble.lstm {
            Some(l) => match self.window(matrix, &idx, row)? {
                Some(seq) => Some(l.predict(&seq)?),
                None => None,
            },
            None => None,
        };
        Ok((lstm, gbt))
    }

    pub fn predict(&self, matrix: &FeatureMatrix, row: usize) -> Result<f64> {
        match self.predict_parts(matrix, row)? {
            (Some(l), Some(g)) => Ok(self.ensemble.weights.apply(l, g)),
            (Some(l), None) => Ok(l),
            (None, Some(g)) => Ok(g),
            (None, None) => Err(Error::InsufficientData { needed: self.config.lstm.seq_len, got: row + 1 }),
        }
    }
}

/// Fits the hybrid on `rows` (chronological, usable rows of `matrix`).
pub fn fit_hybrid(matrix: &FeatureMatrix, rows: &[usize], config: &HybridConfig) -> Result<HybridModel> {
    if !config.use_gbt && !config.use_lstm {
        return Err(Error::InvalidInput("both learners disabled".into()));
    }
    let rows: Vec<usize> = rows.iter().copied().filter(|&r| matrix.mask[r]).collect();
    let n_val = ((rows.len() as f64) * config.validation_fraction).ceil() as usize;
    if n_val == 0 || n_val >= rows.len() {
        return Err(Error::InsufficientData { needed: 2, got: rows.len() });
    }
    let (train, val) = rows.split_at(rows.len() - n_val);

    let full_std = Standardizer::fit(matrix, train)?;
    let standardized = full_std.apply(matrix)?;
    let (selection, names) = if config.feature_engineering {
        let sel = forward_sequential_selection(&standardized, train, val, config.sfs_budget, config.ridge_lambda)?;
        let names = if sel.selected.is_empty() {
            standardized.column_names().iter().map(|s| String::from(*s)).collect()
        } else {
            sel.selected.clone()
        };
        (Some(sel), names)
    } else {
        (None, standardized.column_names().iter().map(|s| String::from(*s)).collect::<Vec<_>>())
    };
    let keep = matrix.column_indices(&names)?;
    let standardizer = Standardizer {
        names: names.clone(),
        means: keep.iter().map(|&j| full_std.means[j]).collect(),
        scales: keep.iter().map(|&j| full_std.scales[j]).collect(),
    };

    let mut model = HybridModel {
        config: config.clone(),
        standardizer,
        selection,
        kpca: None,
        ensemble: EnsembleModel { gbt: None, lstm: None, epsilon1: 0.0, epsilon2: 0.0, weights: Weights { omega1: 0.0, omega2: 1.0 } },
        validation: ValidationSummary::default(),
    };
    let base_of = |m: &HybridModel, r: usize| m.base_row(matrix, &keep, r).expect("usable row");
    let train_x: Vec<Vec<f64>> = train.iter().map(|&r| base_of(&model, r)).collect();
    let train_y: Vec<f64> = train.iter().map(|&r| matrix.target[r]).collect();
    let val_y: Vec<f64> = val.iter().map(|&r| matrix.target[r]).collect();

    if config.feature_engineering && config.use_lstm {
        let kernel = match config.kernel {
            KernelChoice::Linear => Kernel::Linear,
            KernelChoice::Rbf { gamma } => Kernel::Rbf { gamma: gamma.unwrap_or(1.0 / names.len() as f64) },
        };
        model.kpca = Some(kpca_fit(&train_x, kernel, config.components)?);
    }
    if config.use_gbt {
        model.ensemble.gbt = Some(fit_gbt(&train_x, &train_y, names.clone(), &config.gbt)?);
    }
    let gbt_val: Option<Vec<f64>> = model
        .ensemble
        .gbt
        .as_ref()
        .map(|g| val.iter().map(|&r| g.predict_row(&base_of(&model, r))).collect());

    if config.use_lstm {
        let build = |subset: &[usize]| -> Result<(SequenceSet, Vec<usize>)> {
            let mut set = SequenceSet::default();
            let mut used = Vec::new();
            for &r in subset {
                if let Some(seq) = model.window(matrix, &keep, r)? {
                    set.sequences.push(seq);
                    set.targets.push(matrix.target[r]);
                    used.push(r);
                }
            }
            Ok((set, used))
        };
        let (train_set, _) = build(train)?;
        let (val_set, val_used) = build(val)?;
        let lstm = fit_lstm(&train_set, (!val_set.is_empty()).then_some(&val_set), &config.lstm)?;
        let lstm_val: Vec<f64> = val_set.sequences.iter().map(|s| lstm.predict(s)).collect::<Result<_>>()?;
        let y_used: Vec<f64> = val_used.iter().map(|&r| matrix.target[r]).collect();
        model.ensemble.epsilon1 = mae(&lstm_val, &y_used);
        model.ensemble.lstm = Some(lstm);
    }
    if let Some(g) = &gbt_val {
        model.ensemble.epsilon2 = mae(g, &val_y);
    }
    model.ensemble.weights = match (config.use_lstm, config.use_gbt) {
        (true, true) => Weights::from_errors(model.ensemble.epsilon1, model.ensemble.epsilon2)?,
        (true, false) => Weights { omega1: 1.0, omega2: 0.0 },
        _ => Weights { omega1: 0.0, omega2: 1.0 },
    };
    let (mut l_abs, mut g_abs, mut e_abs, mut n) = (0.0, 0.0, 0.0, 0usize);
    for &r in val {
        let parts = model.predict_parts(matrix, r)?;
        if (config.use_lstm && parts.0.is_none()) || (config.use_gbt && parts.1.is_none()) {
            continue;
        }
        let y = matrix.target[r];
        l_abs += parts.0.map_or(0.0, |l| (l - y).abs());
        g_abs += parts.1.map_or(0.0, |g| (g - y).abs());
        e_abs += (model.predict(matrix, r)? - y).abs();
        n += 1;
    }
    if n > 0 {
        let k = n as f64;
        model.validation = ValidationSummary {
            n,
            lstm_mae: config.use_lstm.then_some(l_abs / k),
            gbt_mae: config.use_gbt.then_some(g_abs / k),
            ensemble_mae: e_abs / k,
        };
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{Column, FeatureGroup};
    use alloc::vec;
    use chrono::NaiveDate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy(n: usize) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let noise: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = (0..n).map(|i| 2.0 * a[i] + 0.5 * b[i] * b[i] + 0.05 * noise[i]).collect();
        let days = (0..n)
            .map(|i| NaiveDate::from_ymd_opt(2012, 1, 1).unwrap() + chrono::Duration::days(i as i64))
            .collect();
        let columns = vec![
            Column::new("a", "", FeatureGroup::Weather, a),
            Column::new("b", "", FeatureGroup::SupplyDemand, b),
            Column::new("noise", "", FeatureGroup::Regional, noise),
        ];
        FeatureMatrix::new(days, columns, "y", y).unwrap()
    }

    fn small() -> HybridConfig {
        HybridConfig {
            gbt: GbtParams { n_rounds: 100, learning_rate: 0.1, ..GbtParams::default() },
            lstm: LstmParams { hidden: 4, seq_len: 3, epochs: 30, learning_rate: 1e-2, ..LstmParams::default() },
            components: ComponentRule::Explained { fraction: 0.95, max: Some(4) },
            ..HybridConfig::default()
        }
    }

    #[test]
    fn fits_and_predicts_with_convex_weights() {
        let fm = toy(200);
        let rows: Vec<usize> = (0..160).collect();
        let m = fit_hybrid(&fm, &rows, &small()).unwrap();
        let w = m.ensemble.weights;
        assert!((w.omega1 + w.omega2 - 1.0).abs() < 1e-12);
        let v = m.validation;
        assert!(v.n > 0 && v.lstm_mae.is_some() && v.gbt_mae.is_some());
        // A convex combination cannot do worse than the worse component.
        assert!(v.ensemble_mae <= v.lstm_mae.unwrap().max(v.gbt_mae.unwrap()) + 1e-12);
        assert!(m.feature_names().iter().any(|n| n == "a"));
        let err: f64 = (160..200).map(|r| (m.predict(&fm, r).unwrap() - fm.target[r]).abs()).sum::<f64>() / 40.0;
        assert!(err < 0.5, "mae {err}");
    }

    #[test]
    fn single_learner_configurations() {
        let fm = toy(150);
        let rows: Vec<usize> = (0..120).collect();
        let gbt_only = fit_hybrid(&fm, &rows, &HybridConfig { use_lstm: false, ..small() }).unwrap();
        assert_eq!(gbt_only.ensemble.weights, Weights { omega1: 0.0, omega2: 1.0 });
        let (l, g) = gbt_only.predict_parts(&fm, 130).unwrap();
        assert!(l.is_none() && g.is_some());
        let lstm_only = fit_hybrid(&fm, &rows, &HybridConfig { use_gbt: false, ..small() }).unwrap();
        assert_eq!(lstm_only.ensemble.weights.omega1, 1.0);
        assert!(fit_hybrid(&fm, &rows, &HybridConfig { use_gbt: false, use_lstm: false, ..small() }).is_err());
    }

    #[test]
    fn missing_schema_column_is_reported() {
        let fm = toy(150);
        let rows: Vec<usize> = (0..120).collect();
        let m = fit_hybrid(&fm, &rows, &HybridConfig { feature_engineering: false, ..small() }).unwrap();
        let mut other = fm.clone();
        other.columns.retain(|c| c.name != "b");
        match m.predict(&other, 130) {
            Err(Error::SchemaMismatch { missing }) => assert_eq!(missing, vec![String::from("b")]),
            r => panic!("unexpected {r:?}"),
        }
    }
}
