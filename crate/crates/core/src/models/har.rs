//! HAR-CJ and HARQ-CJ regressions fit by ordinary least squares.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::features::FeatureMatrix;
use crate::linalg::{least_squares, Matrix};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HarVariant {
    /// Continuous daily/weekly/monthly components plus the daily jump.
    HarCj,
    /// HAR-CJ with a `√RQ·RV` quarticity interaction and an `RV·1{r<0}`
    /// leverage term.
    HarqCjLev,
}

impl HarVariant {
    pub fn regressors(self) -> &'static [&'static str] {
        match self {
            HarVariant::HarCj => &["cv_d", "cv_w", "cv_m", "j_d"],
            HarVariant::HarqCjLev => &["cv_d", "cv_w", "cv_m", "j_d", "rq_rv_d", "lev_rv_d"],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            HarVariant::HarCj => "HAR-CJ",
            HarVariant::HarqCjLev => "HARQ-CJ(+lev)",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarModel {
    pub variant: HarVariant,
    /// `"intercept"` followed by the variant's regressors.
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub r_squared: f64,
    pub residual_variance: f64,
    pub n_obs: usize,
}

pub fn fit_har(matrix: &FeatureMatrix, variant: HarVariant, rows: &[usize]) -> Result<HarModel> {
    let regressors = variant.regressors();
    let idx = matrix.column_indices(regressors)?;
    let usable: Vec<usize> = rows
        .iter()
        .copied()
        .filter(|&r| matrix.target[r].is_finite() && matrix.row_complete(r, &idx))
        .collect();
    let p = regressors.len() + 1;
    if usable.len() < 5 * p {
        return Err(Error::InsufficientData { needed: 5 * p, got: usable.len() });
    }
    let mut data = Vec::with_capacity(usable.len() * p);
    for &r in &usable {
        data.push(1.0);
        data.extend(matrix.row_values(r, &idx));
    }
    let x = Matrix::from_row_major(usable.len(), p, data)?;
    let y: Vec<f64> = usable.iter().map(|&r| matrix.target[r]).collect();
    let mut names = alloc::vec!["intercept".to_string()];
    names.extend(regressors.iter().map(|s| s.to_string()));
    let ls = least_squares(&x, &y).map_err(|cols| Error::RankDeficient {
        columns: cols.iter().map(|&c| names[c].clone()).collect(),
    })?;

    let n = y.len() as f64;
    let sse: f64 = ls.residuals.iter().map(|e| e * e).sum();
    let y_mean = y.iter().sum::<f64>() / n;
    let sst: f64 = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum();
    let residual_variance = sse / (n - p as f64);
    let std_errors = ls
        .inverse_gram_diag
        .iter()
        .map(|d| libm::sqrt(residual_variance * d))
        .collect();
    Ok(HarModel {
        variant,
        names,
        coefficients: ls.coefficients,
        std_errors,
        r_squared: if sst > 0.0 { 1.0 - sse / sst } else { 1.0 },
        residual_variance,
        n_obs: usable.len(),
    })
}

impl HarModel {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.coefficients[i])
    }

    pub fn predict_row(&self, matrix: &FeatureMatrix, row: usize) -> Result<f64> {
        let idx = matrix.column_indices(&self.names[1..])?;
        let x = matrix.row_values(row, &idx);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(alloc::format!("row {row} has missing regressors")));
        }
        Ok(self.coefficients[0] + crate::linalg::dot(&self.coefficients[1..], &x))
    }

    pub fn predict(&self, matrix: &FeatureMatrix, rows: &[usize]) -> Result<Vec<f64>> {
        rows.iter().map(|&r| self.predict_row(matrix, r)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{Column, FeatureGroup};
    use alloc::vec;
    use chrono::NaiveDate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn planted(n: usize, noise: f64, seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let names = ["cv_d", "cv_w", "cv_m", "j_d", "rq_rv_d", "lev_rv_d"];
        let cols: Vec<Vec<f64>> = names.iter().map(|_| (0..n).map(|_| rng.random_range(0.0..2.0)).collect()).collect();
        let y = (0..n)
            .map(|i| {
                0.1 + 0.4 * cols[0][i] + 0.3 * cols[1][i] + 0.2 * cols[2][i] + 0.1 * cols[3][i]
                    + noise * rng.random_range(-1.0..1.0)
            })
            .collect();
        let days = (0..n)
            .map(|i| NaiveDate::from_ymd_opt(2010, 1, 1).unwrap() + chrono::Duration::days(i as i64))
            .collect();
        let columns = names
            .iter()
            .zip(cols)
            .map(|(n, v)| Column::new(n, "", FeatureGroup::PriceFluctuations, v))
            .collect();
        FeatureMatrix::new(days, columns, "rv_next", y).unwrap()
    }

    #[test]
    fn zero_noise_recovers_exactly_and_interpolates() {
        let fm = planted(200, 0.0, 1);
        let rows: Vec<usize> = (0..200).collect();
        let m = fit_har(&fm, HarVariant::HarCj, &rows).unwrap();
        for (got, want) in m.coefficients.iter().zip([0.1, 0.4, 0.3, 0.2, 0.1]) {
            assert!((got - want).abs() < 1e-8);
        }
        let pred = m.predict(&fm, &rows).unwrap();
        for (p, y) in pred.iter().zip(&fm.target) {
            assert!((p - y).abs() < 1e-8);
        }
    }

    #[test]
    fn constant_target_gives_intercept_only() {
        let mut fm = planted(100, 0.0, 2);
        fm.target = vec![3.5; 100];
        let rows: Vec<usize> = (0..100).collect();
        let m = fit_har(&fm, HarVariant::HarqCjLev, &rows).unwrap();
        assert!((m.coefficients[0] - 3.5).abs() < 1e-10);
        assert!(m.coefficients[1..].iter().all(|b| b.abs() < 1e-10));
    }

    #[test]
    fn collinear_design_names_the_column() {
        let mut fm = planted(100, 0.01, 3);
        fm.columns[3].values = fm.columns[0].values.iter().map(|v| 2.0 * v).collect();
        let rows: Vec<usize> = (0..100).collect();
        match fit_har(&fm, HarVariant::HarCj, &rows) {
            Err(Error::RankDeficient { columns }) => assert_eq!(columns, vec!["j_d".to_string()]),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn too_few_rows_and_missing_columns() {
        let fm = planted(20, 0.0, 4);
        let rows: Vec<usize> = (0..20).collect();
        assert!(matches!(fit_har(&fm, HarVariant::HarCj, &rows), Err(Error::InsufficientData { .. })));
        let mut fm = planted(100, 0.0, 4);
        fm.columns.retain(|c| c.name != "cv_m");
        let rows: Vec<usize> = (0..100).collect();
        assert!(matches!(fit_har(&fm, HarVariant::HarCj, &rows), Err(Error::SchemaMismatch { .. })));
    }
}
