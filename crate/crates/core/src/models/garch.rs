//! GARCH(1,1) on daily returns, fit by Gaussian quasi-maximum likelihood.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::optim::NelderMead;
use crate::{Error, Result};

/// Minimum number of returns accepted by [`fit_garch`].
pub const MIN_OBSERVATIONS: usize = 300;
const PERSISTENCE_CAP: f64 = 1.0 - 1e-9;
/// With `α = 0` the likelihood is flat along `ω = v(1 − β)`; this tiny
/// penalty picks the `β = 0` end of that ridge and is negligible elsewhere.
const BETA_TIE_BREAK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarchModel {
    pub mu: f64,
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Variance used to start the recursion (sample variance of the fit sample).
    pub initial_variance: f64,
    pub log_likelihood: f64,
    pub n_obs: usize,
    /// Conditional variance for the day after the fit sample.
    pub next_variance: f64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

fn logit(p: f64) -> f64 {
    libm::log(p / (1.0 - p))
}

/// `θ = (ln ω, logit(α+β), logit(α/(α+β)))` keeps every candidate inside
/// the positivity and stationarity region.
fn unpack(theta: &[f64]) -> (f64, f64, f64) {
    let omega = libm::exp(theta[0]);
    let p = sigmoid(theta[1]).min(PERSISTENCE_CAP);
    let s = sigmoid(theta[2]);
    (omega, p * s, p * (1.0 - s))
}

/// Negative Gaussian log-likelihood (constant dropped) and the next-step variance.
fn filter(eps: &[f64], omega: f64, alpha: f64, beta: f64, sigma2_0: f64) -> (f64, f64) {
    let mut s2 = sigma2_0;
    let mut nll = 0.0;
    for &e in eps {
        nll += 0.5 * (libm::log(s2) + e * e / s2);
        s2 = omega + alpha * e * e + beta * s2;
    }
    (nll, s2)
}

pub fn fit_garch(returns: &[f64]) -> Result<GarchModel> {
    if returns.len() < MIN_OBSERVATIONS {
        return Err(Error::InsufficientData { needed: MIN_OBSERVATIONS, got: returns.len() });
    }
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(Error::InvalidInput("non-finite return".into()));
    }
    let mu = crate::stats::mean(returns);
    let eps: Vec<f64> = returns.iter().map(|r| r - mu).collect();
    let var = crate::stats::population_variance(&eps);
    if var <= 0.0 {
        return Err(Error::InvalidInput("returns have zero variance".into()));
    }
    let objective = |theta: &[f64]| {
        let (o, a, b) = unpack(theta);
        filter(&eps, o, a, b, var).0 + BETA_TIE_BREAK * b * b
    };
    let nm = NelderMead {
        max_iterations: 10_000,
        f_tolerance: 1e-12,
        x_tolerance: 1e-7,
        initial_step: 0.5,
    };
    // Several persistence levels as starting points; each start is restarted
    // from its optimum until it stops moving, since the simplex can collapse
    // prematurely on ridged likelihoods.
    let mut best: Option<(f64, Vec<f64>)> = None;
    for (p, a) in [(0.9, 0.05), (0.5, 0.25), (0.1, 0.05)] {
        let mut theta = alloc::vec![libm::log(var * (1.0 - p)), logit(p), logit(a / p)];
        let mut value = f64::INFINITY;
        for _ in 0..3 {
            let m = nm.minimize(&theta, objective)?;
            let improved = m.value < value - 1e-9 * (1.0 + value.abs());
            theta = m.x;
            value = value.min(m.value);
            if !improved {
                break;
            }
        }
        if best.as_ref().is_none_or(|(v, _)| value < *v) {
            best = Some((value, theta));
        }
    }
    let theta = best.map(|(_, t)| t).unwrap_or_default();
    let (omega, alpha, beta) = unpack(&theta);
    let (nll, next_variance) = filter(&eps, omega, alpha, beta, var);
    Ok(GarchModel {
        mu,
        omega,
        alpha,
        beta,
        initial_variance: var,
        log_likelihood: -nll - 0.5 * eps.len() as f64 * libm::log(2.0 * core::f64::consts::PI),
        n_obs: eps.len(),
        next_variance,
    })
}

impl GarchModel {
    pub fn persistence(&self) -> f64 {
        self.alpha + self.beta
    }

    pub fn unconditional_variance(&self) -> f64 {
        self.omega / (1.0 - self.persistence())
    }

    /// Conditional variances `σ²_1..σ²_{n+1}` for `returns`, starting the
    /// recursion from the fit's initial variance.
    pub fn conditional_variances(&self, returns: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(returns.len() + 1);
        let mut s2 = self.initial_variance;
        out.push(s2);
        for &r in returns {
            let e = r - self.mu;
            s2 = self.omega + self.alpha * e * e + self.beta * s2;
            out.push(s2);
        }
        out
    }

    /// One-step-ahead variance after observing `returns`.
    pub fn forecast_after(&self, returns: &[f64]) -> f64 {
        *self.conditional_variances(returns).last().unwrap_or(&self.initial_variance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    pub(crate) fn simulate(n: usize, omega: f64, alpha: f64, beta: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s2 = omega / (1.0 - alpha - beta);
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                let r = libm::sqrt(s2) * z;
                s2 = omega + alpha * r * r + beta * s2;
                r
            })
            .collect()
    }

    #[test]
    fn recovers_simulated_parameters() {
        let r = simulate(5000, 0.05, 0.08, 0.9, 11);
        let m = fit_garch(&r).unwrap();
        assert!((m.alpha - 0.08).abs() < 0.03, "alpha {}", m.alpha);
        assert!((m.beta - 0.9).abs() < 0.05, "beta {}", m.beta);
        assert!(m.omega > 0.0 && m.persistence() < 1.0);
    }

    #[test]
    fn iid_returns_give_constant_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: f64 = 2.0;
        let r: Vec<f64> = (0..5000).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); v.sqrt() * z }).collect();
        let m = fit_garch(&r).unwrap();
        // β is only weakly identified once α is near zero.
        assert!(m.alpha < 0.05 && m.beta < 0.15, "{m:?}");
        assert!((m.unconditional_variance() - v).abs() < 0.1 * v, "{m:?}");
        assert!(m.omega > 0.0 && m.persistence() < 1.0);
    }

    #[test]
    fn constant_variance_fixed_point() {
        let m = GarchModel {
            mu: 0.0,
            omega: 2.0,
            alpha: 0.0,
            beta: 0.0,
            initial_variance: 5.0,
            log_likelihood: 0.0,
            n_obs: 0,
            next_variance: 2.0,
        };
        let s = m.conditional_variances(&[1.0, -3.0, 0.5]);
        assert!(s[1..].iter().all(|&v| v == 2.0));
    }

    #[test]
    fn conditional_variance_recursion() {
        let r = simulate(400, 0.1, 0.1, 0.8, 5);
        let m = fit_garch(&r).unwrap();
        let s = m.conditional_variances(&r);
        for t in 1..s.len() {
            let e = r[t - 1] - m.mu;
            assert!((s[t] - (m.omega + m.alpha * e * e + m.beta * s[t - 1])).abs() < 1e-12);
        }
        assert!((m.forecast_after(&r) - m.next_variance).abs() < 1e-12);
    }

    #[test]
    fn rejects_short_samples() {
        assert!(matches!(fit_garch(&[0.1; 100]), Err(Error::InsufficientData { .. })));
    }
}
