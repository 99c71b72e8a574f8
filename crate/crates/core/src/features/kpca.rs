//! Kernel principal component analysis.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::linalg::{symmetric_eigen, Matrix};
use crate::{Error, Result};

/// Eigenvalues at or below this are treated as zero.
pub const EIGEN_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    Linear,
    /// `exp(-γ‖x − y‖²)`
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => crate::linalg::dot(a, b),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                libm::exp(-gamma * d2)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ComponentRule {
    Fixed { n: usize },
    /// Smallest count whose eigenvalues explain `fraction` of the centered
    /// kernel variance, optionally capped.
    Explained { fraction: f64, max: Option<usize> },
}

impl Default for ComponentRule {
    fn default() -> Self {
        ComponentRule::Explained { fraction: 0.95, max: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpcaModel {
    pub kernel: Kernel,
    pub training_rows: Vec<Vec<f64>>,
    /// Full centered-Gram spectrum, descending, negatives clamped to zero.
    pub eigenvalues: Vec<f64>,
    /// Expansion weights `α_k = u_k / √λ_k`, one vector per component.
    pub coefficients: Vec<Vec<f64>>,
    pub n_components: usize,
    /// Requested count exceeded the number of positive eigenvalues.
    pub truncated: bool,
    pub explained_fraction: f64,
    gram_column_means: Vec<f64>,
    gram_grand_mean: f64,
    pub train_projections: Vec<Vec<f64>>,
}

/// `K̃ = K − 1K − K1 + 1K1` with `1` the matrix of entries `1/n`.
pub fn center_gram(k: &Matrix) -> Matrix {
    let n = k.rows();
    let col_means: Vec<f64> = (0..n).map(|j| (0..n).map(|i| k[(i, j)]).sum::<f64>() / n as f64).collect();
    let row_means: Vec<f64> = (0..n).map(|i| k.row(i).iter().sum::<f64>() / n as f64).collect();
    let grand = col_means.iter().sum::<f64>() / n as f64;
    let mut c = k.clone();
    for i in 0..n {
        for j in 0..n {
            c[(i, j)] = k[(i, j)] - row_means[i] - col_means[j] + grand;
        }
    }
    c
}

pub fn kpca_fit(rows: &[Vec<f64>], kernel: Kernel, rule: ComponentRule) -> Result<KpcaModel> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let dim = rows[0].len();
    if let Some(r) = rows.iter().find(|r| r.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: r.len() });
    }
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval(&rows[i], &rows[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    let gram_column_means: Vec<f64> = (0..n).map(|j| (0..n).map(|i| k[(i, j)]).sum::<f64>() / n as f64).collect();
    let gram_grand_mean = gram_column_means.iter().sum::<f64>() / n as f64;
    let centered = center_gram(&k);
    let eig = symmetric_eigen(&centered)?;
    let eigenvalues: Vec<f64> = eig.values.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    let positive = eigenvalues.iter().take_while(|&&v| v > EIGEN_FLOOR).count();
    let total: f64 = eigenvalues[..positive].iter().sum();

    let (requested, cap) = match rule {
        ComponentRule::Fixed { n } => (n, None),
        ComponentRule::Explained { fraction, max } => {
            let mut acc = 0.0;
            let mut count = 0;
            for &v in &eigenvalues[..positive] {
                if total > 0.0 && acc / total >= fraction {
                    break;
                }
                acc += v;
                count += 1;
            }
            (count, max)
        }
    };
    let requested = cap.map_or(requested, |c| requested.min(c));
    let truncated = requested > positive;
    let n_components = requested.min(positive);

    let mut coefficients = Vec::with_capacity(n_components);
    for c in 0..n_components {
        let scale = 1.0 / libm::sqrt(eigenvalues[c]);
        coefficients.push((0..n).map(|i| eig.vectors[(i, c)] * scale).collect::<Vec<f64>>());
    }
    let train_projections = (0..n)
        .map(|i| coefficients.iter().map(|a| crate::linalg::dot(centered.row(i), a)).collect())
        .collect();
    let explained_fraction = if total > 0.0 {
        eigenvalues[..n_components].iter().sum::<f64>() / total
    } else {
        0.0
    };
    Ok(KpcaModel {
        kernel,
        training_rows: rows.to_vec(),
        eigenvalues,
        coefficients,
        n_components,
        truncated,
        explained_fraction,
        gram_column_means,
        gram_grand_mean,
        train_projections,
    })
}

impl KpcaModel {
    pub fn input_dim(&self) -> usize {
        self.training_rows[0].len()
    }

    /// Projects a new row onto the fitted components.
    pub fn transform(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: row.len() });
        }
        let kx: Vec<f64> = self.training_rows.iter().map(|t| self.kernel.eval(row, t)).collect();
        let kx_mean = kx.iter().sum::<f64>() / kx.len() as f64;
        let centered: Vec<f64> = kx
            .iter()
            .zip(&self.gram_column_means)
            .map(|(k, cm)| k - kx_mean - cm + self.gram_grand_mean)
            .collect();
        Ok(self.coefficients.iter().map(|a| crate::linalg::dot(&centered, a)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rows(seed: u64, n: usize, d: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect()
    }

    #[test]
    fn rank_one_data_is_one_component() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 2.0 * i as f64 + 1.0]).collect();
        let m = kpca_fit(&rows, Kernel::Linear, ComponentRule::Fixed { n: 1 }).unwrap();
        assert!(m.explained_fraction >= 0.99999);
        let total: f64 = m.eigenvalues.iter().sum();
        assert!(m.eigenvalues[0] / total >= 0.99999);
    }

    #[test]
    fn centered_gram_rows_sum_to_zero() {
        let rows = random_rows(5, 30, 4);
        let n = rows.len();
        let mut k = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                k[(i, j)] = Kernel::Rbf { gamma: 0.25 }.eval(&rows[i], &rows[j]);
            }
        }
        let c = center_gram(&k);
        for i in 0..n {
            assert!(c.row(i).iter().sum::<f64>().abs() <= 1e-8);
        }
    }

    #[test]
    fn training_rows_reproduce_fit_projections() {
        let rows = random_rows(9, 40, 3);
        let m = kpca_fit(&rows, Kernel::Rbf { gamma: 1.0 / 3.0 }, ComponentRule::Fixed { n: 4 }).unwrap();
        for (r, stored) in rows.iter().zip(&m.train_projections) {
            let p = m.transform(r).unwrap();
            for (a, b) in p.iter().zip(stored) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn duplicate_rows_project_identically() {
        let mut rows = random_rows(2, 15, 3);
        rows.push(rows[4].clone());
        let m = kpca_fit(&rows, Kernel::Rbf { gamma: 0.5 }, ComponentRule::Fixed { n: 3 }).unwrap();
        assert_eq!(m.train_projections[4], m.train_projections[15]);
    }

    #[test]
    fn far_away_row_hits_the_centering_limit() {
        let rows = random_rows(4, 25, 2);
        let m = kpca_fit(&rows, Kernel::Rbf { gamma: 0.5 }, ComponentRule::Fixed { n: 3 }).unwrap();
        // With every kernel value at zero the centered vector is
        // `grand_mean − column_mean_i`.
        let n = rows.len();
        let mut col_means = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                col_means[j] += Kernel::Rbf { gamma: 0.5 }.eval(&rows[i], &rows[j]) / n as f64;
            }
        }
        let grand = col_means.iter().sum::<f64>() / n as f64;
        let p = m.transform(&[1e6, -1e6]).unwrap();
        for (c, alpha) in m.coefficients.iter().enumerate() {
            let limit: f64 = alpha.iter().zip(&col_means).map(|(a, cm)| a * (grand - cm)).sum();
            assert!((p[c] - limit).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_components_and_dimension_checks() {
        let rows = random_rows(1, 10, 3);
        let m = kpca_fit(&rows, Kernel::Linear, ComponentRule::Fixed { n: 0 }).unwrap();
        assert!(m.transform(&[0.0, 0.0, 0.0]).unwrap().is_empty());
        assert!(m.transform(&[0.0, 0.0]).is_err());
        assert!(kpca_fit(&rows[..1], Kernel::Linear, ComponentRule::Fixed { n: 1 }).is_err());
    }

    #[test]
    fn oversized_request_is_truncated() {
        let rows = random_rows(8, 12, 2);
        let m = kpca_fit(&rows, Kernel::Linear, ComponentRule::Fixed { n: 5 }).unwrap();
        assert!(m.truncated);
        assert_eq!(m.n_components, 2);
        assert!(m.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        assert!(m.eigenvalues.iter().all(|&v| v >= 0.0));
    }
}
