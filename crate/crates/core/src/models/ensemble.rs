//! Residual-weighted combination of two forecasters.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{GbtModel, LstmModel};
use crate::{Error, Result};

/// `ω₁` weights the LSTM, `ω₂` the GBT.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub omega1: f64,
    pub omega2: f64,
}

impl Weights {
    /// `ω₁ = ε₂/(ε₁+ε₂)`, `ω₂ = ε₁/(ε₁+ε₂)` from validation MAEs; equal
    /// weights when both are zero.
    pub fn from_errors(eps1: f64, eps2: f64) -> Result<Self> {
        if !(eps1 >= 0.0 && eps2 >= 0.0 && eps1.is_finite() && eps2.is_finite()) {
            return Err(Error::InvalidInput(alloc::format!("invalid validation errors ({eps1}, {eps2})")));
        }
        let total = eps1 + eps2;
        if total == 0.0 {
            return Ok(Self { omega1: 0.5, omega2: 0.5 });
        }
        Ok(Self { omega1: eps2 / total, omega2: eps1 / total })
    }

    /// `ω₁f₁ + ω₂f₂`, written so that equal inputs come back unchanged.
    pub fn apply(&self, f1: f64, f2: f64) -> f64 {
        f2 + self.omega1 * (f1 - f2)
    }
}

/// Weights from `(ε₁, ε₂)` applied elementwise to two forecast vectors.
pub fn combine(f1: &[f64], f2: &[f64], eps1: f64, eps2: f64) -> Result<(Weights, Vec<f64>)> {
    if f1.len() != f2.len() {
        return Err(Error::DimensionMismatch { expected: f1.len(), got: f2.len() });
    }
    let w = Weights::from_errors(eps1, eps2)?;
    Ok((w, f1.iter().zip(f2).map(|(a, b)| w.apply(*a, *b)).collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub gbt: Option<GbtModel>,
    pub lstm: Option<LstmModel>,
    /// Validation MAE of the LSTM (`ε₁`) and the GBT (`ε₂`).
    pub epsilon1: f64,
    pub epsilon2: f64,
    pub weights: Weights,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn example_weights() {
        let w = Weights::from_errors(1.0, 3.0).unwrap();
        assert_eq!((w.omega1, w.omega2), (0.75, 0.25));
        let w = Weights::from_errors(0.0, 0.0).unwrap();
        assert_eq!((w.omega1, w.omega2), (0.5, 0.5));
        assert!(Weights::from_errors(-1.0, 1.0).is_err());
        assert!(combine(&[1.0], &[1.0, 2.0], 1.0, 1.0).is_err());
        let (w, p) = combine(&[2.0], &[4.0], 1.0, 3.0).unwrap();
        assert_eq!((w.omega1, w.omega2, p[0]), (0.75, 0.25, 2.5));
        assert_eq!(Weights::from_errors(0.0, 2.0).unwrap().omega1, 1.0);
    }

    #[test]
    fn identical_submodels_pass_through() {
        let f = [0.1, 1.0 / 3.0, 7.25e-3];
        let (_, p) = combine(&f, &f, 0.37, 1.91).unwrap();
        assert_eq!(p, f);
        let a = Weights::from_errors(0.4, 1.3).unwrap();
        let b = Weights::from_errors(1.3, 0.4).unwrap();
        assert_eq!((a.omega1, a.omega2), (b.omega2, b.omega1));
    }

    proptest! {
        #[test]
        fn weights_are_convex_and_favor_the_better_model(e1 in 0.0f64..10.0, e2 in 0.0f64..10.0, a in -5.0f64..5.0, b in -5.0f64..5.0) {
            let (w, f) = combine(&[a], &[b], e1, e2).unwrap();
            prop_assert!((w.omega1 + w.omega2 - 1.0).abs() < 1e-12);
            prop_assert!(w.omega1 >= 0.0 && w.omega2 >= 0.0);
            prop_assert!(f[0] >= a.min(b) - 1e-12 && f[0] <= a.max(b) + 1e-12);
            prop_assert!((f[0] - (w.omega1 * a + w.omega2 * b)).abs() < 1e-12);
            if e1 > 0.0 && e2 > 0.0 {
                prop_assert!((w.omega1 * e1 - w.omega2 * e2).abs() < 1e-12);
            }
            if e1 < e2 {
                prop_assert!(w.omega1 > w.omega2);
            }
        }
    }
}
