//! Single-layer LSTM regressor with a linear read-out of the last hidden
//! state, trained by backpropagation through time with Adam.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LstmParams {
    pub hidden: usize,
    pub seq_len: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Global gradient-norm clip.
    pub clip_norm: f64,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for LstmParams {
    fn default() -> Self {
        Self {
            hidden: 32,
            seq_len: 22,
            batch_size: 32,
            learning_rate: 1e-3,
            clip_norm: 5.0,
            epochs: 300,
            patience: 20,
            seed: 42,
        }
    }
}

/// Input windows (`seq_len × input_dim` each) and their scalar targets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SequenceSet {
    pub sequences: Vec<Vec<Vec<f64>>>,
    pub targets: Vec<f64>,
}

impl SequenceSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Raw network weights. Gate blocks are stacked as input, forget, cell, output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmNet {
    pub input_dim: usize,
    pub hidden: usize,
    /// `4H × (D + H)`, row-major.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: f64,
}

struct Trace {
    xh: Vec<Vec<f64>>,
    gates: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    h_last: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

impl LstmNet {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            input_dim,
            hidden,
            w: vec![0.0; 4 * hidden * (input_dim + hidden)],
            b: vec![0.0; 4 * hidden],
            w_out: vec![0.0; hidden],
            b_out: 0.0,
        }
    }

    /// Glorot-uniform recurrent weights, forget-gate bias one, zero read-out
    /// (the untrained net predicts the target mean).
    pub fn initialized(input_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut net = Self::zeros(input_dim, hidden);
        let bound = libm::sqrt(6.0 / (input_dim + 2 * hidden) as f64);
        for v in net.w.iter_mut() {
            *v = rng.random_range(-bound..bound);
        }
        for v in &mut net.b[hidden..2 * hidden] {
            *v = 1.0;
        }
        net
    }

    pub fn n_params(&self) -> usize {
        self.w.len() + self.b.len() + self.w_out.len() + 1
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        p.extend_from_slice(&self.w);
        p.extend_from_slice(&self.b);
        p.extend_from_slice(&self.w_out);
        p.push(self.b_out);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let (a, rest) = p.split_at(self.w.len());
        let (b, rest) = rest.split_at(self.b.len());
        let (c, rest) = rest.split_at(self.w_out.len());
        self.w.copy_from_slice(a);
        self.b.copy_from_slice(b);
        self.w_out.copy_from_slice(c);
        self.b_out = rest[0];
    }

    fn forward(&self, seq: &[Vec<f64>]) -> Trace {
        let (d, h) = (self.input_dim, self.hidden);
        let cols = d + h;
        let mut hs = vec![0.0; h];
        let mut cs = vec![0.0; h];
        let mut trace = Trace { xh: Vec::new(), gates: Vec::new(), c: vec![cs.clone()], h_last: Vec::new() };
        for x in seq {
            let mut xh = Vec::with_capacity(cols);
            xh.extend_from_slice(x);
            xh.extend_from_slice(&hs);
            let mut z = self.b.clone();
            for (r, zr) in z.iter_mut().enumerate() {
                *zr += crate::linalg::dot(&self.w[r * cols..(r + 1) * cols], &xh);
            }
            for k in 0..h {
                z[k] = sigmoid(z[k]);
                z[h + k] = sigmoid(z[h + k]);
                z[2 * h + k] = libm::tanh(z[2 * h + k]);
                z[3 * h + k] = sigmoid(z[3 * h + k]);
                cs[k] = z[h + k] * cs[k] + z[k] * z[2 * h + k];
                hs[k] = z[3 * h + k] * libm::tanh(cs[k]);
            }
            trace.xh.push(xh);
            trace.gates.push(z);
            trace.c.push(cs.clone());
        }
        trace.h_last = hs;
        trace
    }

    pub fn predict(&self, seq: &[Vec<f64>]) -> f64 {
        let t = self.forward(seq);
        crate::linalg::dot(&self.w_out, &t.h_last) + self.b_out
    }

    /// Mean squared error over `set` and its gradient in [`Self::params`] order.
    pub fn loss_and_gradient(&self, set: &SequenceSet, idx: &[usize]) -> (f64, Vec<f64>) {
        let (d, h) = (self.input_dim, self.hidden);
        let cols = d + h;
        let nw = self.w.len();
        let mut grad = vec![0.0; self.n_params()];
        let mut loss = 0.0;
        let scale = 1.0 / idx.len() as f64;
        for &i in idx {
            let tr = self.forward(&set.sequences[i]);
            let y = crate::linalg::dot(&self.w_out, &tr.h_last) + self.b_out;
            let err = y - set.targets[i];
            loss += err * err * scale;
            let dy = 2.0 * err * scale;
            for k in 0..h {
                grad[nw + 4 * h + k] += dy * tr.h_last[k];
            }
            grad[nw + 5 * h] += dy;
            let mut dh: Vec<f64> = self.w_out.iter().map(|w| w * dy).collect();
            let mut dc = vec![0.0; h];
            let mut dz = vec![0.0; 4 * h];
            for t in (0..tr.xh.len()).rev() {
                let g = &tr.gates[t];
                let (c_prev, c_t) = (&tr.c[t], &tr.c[t + 1]);
                for k in 0..h {
                    let (ig, fg, gg, og) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
                    let tc = libm::tanh(c_t[k]);
                    dc[k] += dh[k] * og * (1.0 - tc * tc);
                    dz[k] = dc[k] * gg * ig * (1.0 - ig);
                    dz[h + k] = dc[k] * c_prev[k] * fg * (1.0 - fg);
                    dz[2 * h + k] = dc[k] * ig * (1.0 - gg * gg);
                    dz[3 * h + k] = dh[k] * tc * og * (1.0 - og);
                    dc[k] *= fg;
                }
                let xh = &tr.xh[t];
                let mut dxh = vec![0.0; cols];
                for (r, &dzr) in dz.iter().enumerate() {
                    if dzr == 0.0 {
                        continue;
                    }
                    let row = &self.w[r * cols..(r + 1) * cols];
                    let grow = &mut grad[r * cols..(r + 1) * cols];
                    for j in 0..cols {
                        grow[j] += dzr * xh[j];
                        dxh[j] += dzr * row[j];
                    }
                    grad[nw + r] += dzr;
                }
                dh.copy_from_slice(&dxh[d..]);
            }
        }
        (loss, grad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    pub net: LstmNet,
    pub input_means: Vec<f64>,
    pub input_scales: Vec<f64>,
    pub target_mean: f64,
    pub target_scale: f64,
    pub params: LstmParams,
    pub epochs_run: usize,
    /// Training MSE (standardized target) per epoch.
    pub train_loss: Vec<f64>,
    /// Validation MSE (original units) per epoch, when a validation set was given.
    pub val_loss: Vec<f64>,
}

fn scale_set(set: &SequenceSet, means: &[f64], scales: &[f64], t_mean: f64, t_scale: f64) -> SequenceSet {
    SequenceSet {
        sequences: set
            .sequences
            .iter()
            .map(|s| {
                s.iter()
                    .map(|x| x.iter().zip(means).zip(scales).map(|((v, m), s)| (v - m) / s).collect())
                    .collect()
            })
            .collect(),
        targets: set.targets.iter().map(|y| (y - t_mean) / t_scale).collect(),
    }
}

fn validate_set(set: &SequenceSet, dim: usize) -> Result<()> {
    if set.sequences.len() != set.targets.len() {
        return Err(Error::DimensionMismatch { expected: set.targets.len(), got: set.sequences.len() });
    }
    for s in &set.sequences {
        for x in s {
            if x.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: x.len() });
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("non-finite LSTM input".into()));
            }
        }
    }
    if set.targets.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite LSTM target".into()));
    }
    Ok(())
}

/// Trains on `train`; when `val` is given, stops after `patience` epochs
/// without improvement and restores the best weights.
pub fn fit_lstm(train: &SequenceSet, val: Option<&SequenceSet>, params: &LstmParams) -> Result<LstmModel> {
    if train.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let dim = train.sequences[0].first().map_or(0, Vec::len);
    if dim == 0 {
        return Err(Error::InvalidInput("empty LSTM input".into()));
    }
    validate_set(train, dim)?;
    if let Some(v) = val {
        validate_set(v, dim)?;
    }
    let mut means = vec![0.0; dim];
    let mut sq = vec![0.0; dim];
    let mut count = 0.0;
    for x in train.sequences.iter().flatten() {
        count += 1.0;
        for j in 0..dim {
            means[j] += x[j];
            sq[j] += x[j] * x[j];
        }
    }
    let scales: Vec<f64> = (0..dim)
        .map(|j| {
            means[j] /= count;
            let var = sq[j] / count - means[j] * means[j];
            if var > 1e-24 { libm::sqrt(var) } else { 1.0 }
        })
        .collect();
    let t_mean = crate::stats::mean(&train.targets);
    let t_var = crate::stats::population_variance(&train.targets);
    let t_scale = if t_var > 1e-24 { libm::sqrt(t_var) } else { 1.0 };
    let scaled = scale_set(train, &means, &scales, t_mean, t_scale);
    let scaled_val = val.map(|v| scale_set(v, &means, &scales, t_mean, t_scale));

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut net = LstmNet::initialized(dim, params.hidden, &mut rng);
    let n_params = net.n_params();
    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let mut m = vec![0.0; n_params];
    let mut v = vec![0.0; n_params];
    let mut step = 0i32;
    let mut theta = net.params();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut since_best = 0;
    let mut train_loss = Vec::new();
    let mut val_loss = Vec::new();
    let mut order: Vec<usize> = (0..scaled.len()).collect();
    let batch = params.batch_size.max(1);

    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let (loss, mut g) = net.loss_and_gradient(&scaled, chunk);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            epoch_loss += loss * chunk.len() as f64;
            let gn = crate::linalg::norm(&g);
            if gn > params.clip_norm {
                let s = params.clip_norm / gn;
                g.iter_mut().for_each(|x| *x *= s);
            }
            step += 1;
            let (c1, c2) = (1.0 - libm::pow(b1, step as f64), 1.0 - libm::pow(b2, step as f64));
            for k in 0..n_params {
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                theta[k] -= params.learning_rate * (m[k] / c1) / (libm::sqrt(v[k] / c2) + eps);
            }
            net.set_params(&theta);
        }
        train_loss.push(epoch_loss / scaled.len() as f64);
        if let Some(sv) = &scaled_val {
            let all: Vec<usize> = (0..sv.len()).collect();
            let vl = if all.is_empty() { 0.0 } else { net.loss_and_gradient(sv, &all).0 * t_scale * t_scale };
            if !vl.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            val_loss.push(vl);
            if best.as_ref().is_none_or(|(b, _)| vl < *b) {
                best = Some((vl, theta.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= params.patience {
                    break;
                }
            }
        }
    }
    if let Some((_, p)) = best {
        net.set_params(&p);
    }
    Ok(LstmModel {
        net,
        input_means: means,
        input_scales: scales,
        target_mean: t_mean,
        target_scale: t_scale,
        params: params.clone(),
        epochs_run: train_loss.len(),
        train_loss,
        val_loss,
    })
}

impl LstmModel {
    pub fn input_dim(&self) -> usize {
        self.net.input_dim
    }

    pub fn predict(&self, seq: &[Vec<f64>]) -> Result<f64> {
        let mut scaled = Vec::with_capacity(seq.len());
        for x in seq {
            if x.len() != self.input_dim() {
                return Err(Error::DimensionMismatch { expected: self.input_dim(), got: x.len() });
            }
            scaled.push(
                x.iter()
                    .zip(&self.input_means)
                    .zip(&self.input_scales)
                    .map(|((v, m), s)| (v - m) / s)
                    .collect::<Vec<f64>>(),
            );
        }
        Ok(self.net.predict(&scaled) * self.target_scale + self.target_mean)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_set(n: usize, len: usize, dim: usize, seed: u64) -> SequenceSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sequences: Vec<Vec<Vec<f64>>> = (0..n)
            .map(|_| (0..len).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect())
            .collect();
        let targets = sequences.iter().map(|s: &Vec<Vec<f64>>| s.iter().map(|x| x[0]).sum::<f64>() * 0.3).collect();
        SequenceSet { sequences, targets }
    }

    #[test]
    fn zero_weights_predict_the_head_bias() {
        let mut net = LstmNet::zeros(3, 4);
        net.b_out = 0.7;
        let set = random_set(4, 5, 3, 1);
        for s in &set.sequences {
            assert_eq!(net.predict(s), 0.7);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut net = LstmNet::initialized(3, 4, &mut rng);
        net.w_out = vec![0.7, -0.4, 0.2, 0.9];
        net.b_out = 0.3;
        let set = random_set(3, 6, 3, 2);
        let idx = [0, 1, 2];
        let (_, grad) = net.loss_and_gradient(&set, &idx);
        let p0 = net.params();
        let h = 1e-6;
        for k in (0..p0.len()).step_by(3) {
            let mut p = p0.clone();
            p[k] += h;
            net.set_params(&p);
            let up = net.loss_and_gradient(&set, &idx).0;
            p[k] -= 2.0 * h;
            net.set_params(&p);
            let down = net.loss_and_gradient(&set, &idx).0;
            let fd = (up - down) / (2.0 * h);
            let denom = fd.abs().max(grad[k].abs()).max(1e-7);
            assert!((fd - grad[k]).abs() / denom < 1e-4, "param {k}: fd {fd} analytic {}", grad[k]);
        }
    }

    #[test]
    fn constant_target_is_learned() {
        let mut set = random_set(64, 5, 2, 3);
        set.targets.iter_mut().for_each(|t| *t = 2.5);
        let params = LstmParams { hidden: 4, epochs: 200, ..LstmParams::default() };
        let m = fit_lstm(&set, None, &params).unwrap();
        let mse: f64 = set.sequences.iter().map(|s| (m.predict(s).unwrap() - 2.5).powi(2)).sum::<f64>() / 64.0;
        assert!(mse < 1e-4, "mse {mse}");
    }

    #[test]
    fn learns_a_simple_signal_and_is_deterministic() {
        let train = random_set(200, 5, 2, 4);
        let val = random_set(50, 5, 2, 5);
        let params = LstmParams { hidden: 8, epochs: 60, learning_rate: 1e-2, ..LstmParams::default() };
        let a = fit_lstm(&train, Some(&val), &params).unwrap();
        let b = fit_lstm(&train, Some(&val), &params).unwrap();
        assert_eq!(a, b);
        let var = crate::stats::population_variance(&val.targets);
        let best = a.val_loss.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(best < 0.2 * var, "val mse {best} vs variance {var}");
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let set = random_set(10, 4, 2, 6);
        let m = fit_lstm(&set, None, &LstmParams { hidden: 2, epochs: 1, ..LstmParams::default() }).unwrap();
        assert!(m.predict(&[vec![0.0; 3]]).is_err());
    }
}
