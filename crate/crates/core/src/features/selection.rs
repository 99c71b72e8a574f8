//! Greedy forward feature selection scored by a ridge proxy.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::linalg::{cholesky_solve, least_squares, Matrix};
use crate::{Error, Result};

/// Default ridge penalty on standardized columns.
pub const DEFAULT_RIDGE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Columns in order of inclusion.
    pub selected: Vec<String>,
    /// Validation MSE after each inclusion.
    pub scores: Vec<f64>,
    /// Validation MSE of the intercept-only model.
    pub baseline_score: f64,
    pub budget: usize,
}

struct Split {
    x_train: Vec<Vec<f64>>,
    y_train: Vec<f64>,
    x_val: Vec<Vec<f64>>,
    y_val: Vec<f64>,
}

/// Validation MSE of a ridge fit (intercept unpenalized) on `cols`.
fn ridge_val_mse(split: &Split, cols: &[usize], lambda: f64) -> Result<f64> {
    let n = split.y_train.len();
    let p = cols.len();
    let y_mean = split.y_train.iter().sum::<f64>() / n as f64;
    let x_means: Vec<f64> = cols
        .iter()
        .map(|&j| split.x_train.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let mut gram = Matrix::zeros(p, p);
    let mut rhs = alloc::vec![0.0; p];
    for (row, &y) in split.x_train.iter().zip(&split.y_train) {
        let xc: Vec<f64> = cols.iter().zip(&x_means).map(|(&j, m)| row[j] - m).collect();
        for a in 0..p {
            rhs[a] += xc[a] * (y - y_mean);
            for b in a..p {
                gram[(a, b)] += xc[a] * xc[b];
            }
        }
    }
    for a in 0..p {
        gram[(a, a)] += lambda;
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }
    let beta = if p == 0 { Vec::new() } else { cholesky_solve(&gram, &rhs)? };
    let sse: f64 = split
        .x_val
        .iter()
        .zip(&split.y_val)
        .map(|(row, &y)| {
            let pred = y_mean
                + cols
                    .iter()
                    .zip(&x_means)
                    .zip(&beta)
                    .map(|((&j, m), b)| (row[j] - m) * b)
                    .sum::<f64>();
            (y - pred) * (y - pred)
        })
        .sum();
    Ok(sse / split.y_val.len() as f64)
}

/// Whether `candidate` is (numerically) spanned by an intercept and the
/// already selected columns on the training rows.
fn adds_no_information(split: &Split, selected: &[usize], candidate: usize) -> bool {
    let n = split.x_train.len();
    let mean = split.x_train.iter().map(|r| r[candidate]).sum::<f64>() / n as f64;
    let ss: f64 = split.x_train.iter().map(|r| (r[candidate] - mean).powi(2)).sum();
    if ss <= 1e-12 * (1.0 + mean * mean) * n as f64 {
        return true;
    }
    if selected.is_empty() || n <= selected.len() + 1 {
        return false;
    }
    let mut rows = Vec::with_capacity(n);
    for r in &split.x_train {
        let mut row = alloc::vec![1.0];
        row.extend(selected.iter().map(|&j| r[j]));
        rows.push(row);
    }
    let x = match Matrix::from_rows(&rows) {
        Ok(x) => x,
        Err(_) => return false,
    };
    let y: Vec<f64> = split.x_train.iter().map(|r| r[candidate]).collect();
    match least_squares(&x, &y) {
        Ok(ls) => ls.residuals.iter().map(|e| e * e).sum::<f64>() <= 1e-10 * ss,
        Err(_) => false,
    }
}

/// Adds, one at a time, the column whose inclusion gives the lowest
/// validation MSE of the ridge proxy. Stops after `k` columns or when no
/// candidate lowers the score. Ties go to the lexicographically smallest
/// column name.
pub fn forward_sequential_selection(
    matrix: &FeatureMatrix,
    train_rows: &[usize],
    val_rows: &[usize],
    k: usize,
    lambda: f64,
) -> Result<SelectionResult> {
    if matrix.columns.is_empty() {
        return Err(Error::InvalidInput("no candidate columns".into()));
    }
    if train_rows.len() < 2 || val_rows.is_empty() {
        return Err(Error::InsufficientData { needed: 2, got: train_rows.len().min(val_rows.len()) });
    }
    let all: Vec<usize> = (0..matrix.columns.len()).collect();
    let take = |rows: &[usize]| -> (Vec<Vec<f64>>, Vec<f64>) {
        (
            rows.iter().map(|&r| matrix.row_values(r, &all)).collect(),
            rows.iter().map(|&r| matrix.target[r]).collect(),
        )
    };
    let (x_train, y_train) = take(train_rows);
    let (x_val, y_val) = take(val_rows);
    if x_train.iter().chain(&x_val).flatten().chain(y_train.iter().chain(&y_val)).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("selection rows must be fully observed".into()));
    }
    let y_var = crate::stats::population_variance(&y_train);
    if !(y_var > 0.0) {
        return Err(Error::InvalidInput("target is constant on the training rows".into()));
    }
    let split = Split { x_train, y_train, x_val, y_val };

    let mut by_name: Vec<usize> = all.clone();
    by_name.sort_by(|&a, &b| matrix.columns[a].name.cmp(&matrix.columns[b].name));

    let budget = k.min(all.len());
    let baseline = ridge_val_mse(&split, &[], lambda)?;
    let mut current = baseline;
    let mut selected: Vec<usize> = Vec::new();
    let mut scores = Vec::new();
    while selected.len() < budget {
        let mut best: Option<(usize, f64)> = None;
        for &c in &by_name {
            if selected.contains(&c) || adds_no_information(&split, &selected, c) {
                continue;
            }
            let mut trial = selected.clone();
            trial.push(c);
            let score = ridge_val_mse(&split, &trial, lambda)?;
            if best.map_or(true, |(_, s)| score < s) {
                best = Some((c, score));
            }
        }
        match best {
            Some((c, s)) if s < current => {
                selected.push(c);
                scores.push(s);
                current = s;
            }
            _ => break,
        }
    }
    Ok(SelectionResult {
        selected: selected.iter().map(|&j| matrix.columns[j].name.clone()).collect(),
        scores,
        baseline_score: baseline,
        budget: k,
    })
}
