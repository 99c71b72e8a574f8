//! Derivative-free minimization (Nelder–Mead simplex).

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct NelderMead {
    pub max_iterations: usize,
    /// Convergence when the spread of objective values across the simplex
    /// falls below `f_tolerance · (1 + |best|)`...
    pub f_tolerance: f64,
    /// ... and the simplex diameter falls below this.
    pub x_tolerance: f64,
    pub initial_step: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            max_iterations: 5_000,
            f_tolerance: 1e-10,
            x_tolerance: 1e-8,
            initial_step: 0.25,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

impl NelderMead {
    /// Minimizes `f` from `start`. Non-finite objective values are treated
    /// as `+∞`, which lets callers reject infeasible points.
    pub fn minimize<F>(&self, start: &[f64], mut f: F) -> Result<Minimum>
    where
        F: FnMut(&[f64]) -> f64,
    {
        let n = start.len();
        let mut eval = |x: &[f64]| {
            let v = f(x);
            if v.is_finite() {
                v
            } else {
                f64::INFINITY
            }
        };
        let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        simplex.push(start.to_vec());
        for i in 0..n {
            let mut p = start.to_vec();
            p[i] += if p[i].abs() > 1e-8 {
                self.initial_step * p[i].abs().max(1.0)
            } else {
                self.initial_step
            };
            simplex.push(p);
        }
        let mut values: Vec<f64> = simplex.iter().map(|p| eval(p)).collect();

        let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
        let mut centroid = vec![0.0; n];
        for iter in 0..self.max_iterations {
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            values = order.iter().map(|&i| values[i]).collect();

            let spread = values[n] - values[0];
            let diameter = simplex[1..]
                .iter()
                .map(|p| {
                    p.iter()
                        .zip(&simplex[0])
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            if spread.is_finite() && spread <= self.f_tolerance * (1.0 + values[0].abs()) && diameter <= self.x_tolerance {
                return Ok(Minimum {
                    x: simplex.swap_remove(0),
                    value: values[0],
                    iterations: iter,
                });
            }

            centroid.iter_mut().for_each(|c| *c = 0.0);
            for p in &simplex[..n] {
                for (c, &x) in centroid.iter_mut().zip(p) {
                    *c += x / n as f64;
                }
            }
            let along = |coef: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&simplex[n])
                    .map(|(c, w)| c + coef * (c - w))
                    .collect()
            };
            let reflected = along(alpha);
            let fr = eval(&reflected);
            if fr < values[0] {
                let expanded = along(gamma);
                let fe = eval(&expanded);
                if fe < fr {
                    simplex[n] = expanded;
                    values[n] = fe;
                } else {
                    simplex[n] = reflected;
                    values[n] = fr;
                }
            } else if fr < values[n - 1] {
                simplex[n] = reflected;
                values[n] = fr;
            } else {
                let (contracted, fc) = if fr < values[n] {
                    let c = along(rho);
                    let v = eval(&c);
                    (c, v)
                } else {
                    let c = along(-rho);
                    let v = eval(&c);
                    (c, v)
                };
                if fc < values[n].min(fr) {
                    simplex[n] = contracted;
                    values[n] = fc;
                } else {
                    let best = simplex[0].clone();
                    for i in 1..=n {
                        for (x, b) in simplex[i].iter_mut().zip(&best) {
                            *x = b + sigma * (*x - b);
                        }
                        values[i] = eval(&simplex[i]);
                    }
                }
            }
        }
        let (best, value) = simplex
            .iter()
            .zip(&values)
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(p, v)| (p.clone(), *v))
            .unwrap_or((start.to_vec(), f64::INFINITY));
        Err(Error::NoConvergence {
            iterations: self.max_iterations,
            best: value,
            params: best,
        })
    }
}
