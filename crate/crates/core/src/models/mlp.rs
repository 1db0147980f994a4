//! Multilayer perceptron: ReLU hidden layers, logistic output, Adam with
//! minibatches, early stopping on an internal validation split.
//!
//! Parameters can be flattened to a single vector (`params` / `set_params`)
//! and the loss/gradient evaluated on arbitrary data, which is what the
//! finite-difference gradient checks drive.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

const ADAM_LR: f64 = 1e-3;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const BATCH_SIZE: usize = 32;
const MAX_EPOCHS: usize = 300;
const PATIENCE: usize = 15;
const VALIDATION_FRACTION: f64 = 0.1;
const IMPROVEMENT_TOL: f64 = 1e-4;

/// Fully connected network; `weights[l]` has shape `(out, in)` row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpModel {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpModel {
    /// Glorot-uniform initialization, seeded.
    pub fn new_seeded(layer_sizes: &[usize], seed: u64) -> Self {
        assert!(layer_sizes.len() >= 2);
        assert_eq!(*layer_sizes.last().unwrap(), 1, "single logistic output");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..layer_sizes.len() - 1 {
            let (fan_in, fan_out) = (layer_sizes[l], layer_sizes[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(
                (0..fan_in * fan_out)
                    .map(|_| rng.gen_range(-bound..bound))
                    .collect(),
            );
            biases.push(vec![0.0; fan_out]);
        }
        Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
        }
    }

    fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Forward pass returning all activations (input first, probability last).
    fn forward_all(&self, row: &[f64]) -> Vec<Vec<f64>> {
        let mut activations = vec![row.to_vec()];
        for l in 0..self.n_layers() {
            let (fan_in, fan_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let prev = &activations[l];
            let mut out = vec![0.0; fan_out];
            for o in 0..fan_out {
                let mut z = self.biases[l][o];
                let row_w = &self.weights[l][o * fan_in..(o + 1) * fan_in];
                for (w, a) in row_w.iter().zip(prev) {
                    z += w * a;
                }
                out[o] = if l + 1 == self.n_layers() {
                    // Logistic output.
                    if z >= 0.0 {
                        1.0 / (1.0 + (-z).exp())
                    } else {
                        let e = z.exp();
                        e / (1.0 + e)
                    }
                } else {
                    z.max(0.0) // ReLU
                };
            }
            activations.push(out);
        }
        activations
    }

    pub fn predict_p1(&self, row: &[f64]) -> f64 {
        self.forward_all(row).last().unwrap()[0]
    }

    pub fn proba(&self, row: &[f64]) -> [f64; 2] {
        let p = self.predict_p1(row);
        [1.0 - p, p]
    }

    /// Mean binary cross-entropy over the rows.
    pub fn loss(&self, x: &Matrix, y: &[u8]) -> f64 {
        let mut acc = 0.0;
        for i in 0..x.n_rows() {
            let p = self.predict_p1(x.row(i)).clamp(1e-12, 1.0 - 1e-12);
            acc -= if y[i] == 1 { p.ln() } else { (1.0 - p).ln() };
        }
        acc / x.n_rows() as f64
    }

    /// Loss and gradient over the rows; gradient layout matches [`Self::params`].
    pub fn loss_and_grad(&self, x: &Matrix, y: &[u8]) -> (f64, Vec<f64>) {
        let n = x.n_rows() as f64;
        let mut grad_w: Vec<Vec<f64>> = self.weights.iter().map(|w| vec![0.0; w.len()]).collect();
        let mut grad_b: Vec<Vec<f64>> = self.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        let mut loss = 0.0;

        for i in 0..x.n_rows() {
            let activations = self.forward_all(x.row(i));
            let p = activations.last().unwrap()[0].clamp(1e-12, 1.0 - 1e-12);
            let t = y[i] as f64;
            loss -= if y[i] == 1 { p.ln() } else { (1.0 - p).ln() };

            // Output delta for BCE + logistic: p - t.
            let mut delta = vec![p - t];
            for l in (0..self.n_layers()).rev() {
                let (fan_in, fan_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
                let prev = &activations[l];
                for o in 0..fan_out {
                    let d = delta[o] / n;
                    for (k, a) in prev.iter().enumerate() {
                        grad_w[l][o * fan_in + k] += d * a;
                    }
                    grad_b[l][o] += d;
                }
                if l > 0 {
                    let mut next_delta = vec![0.0; fan_in];
                    for (k, nd) in next_delta.iter_mut().enumerate() {
                        if activations[l][k] > 0.0 {
                            let mut acc = 0.0;
                            for (o, d) in delta.iter().enumerate() {
                                acc += d * self.weights[l][o * fan_in + k];
                            }
                            *nd = acc;
                        }
                    }
                    delta = next_delta;
                }
            }
        }

        let mut flat = Vec::new();
        for l in 0..self.n_layers() {
            flat.extend_from_slice(&grad_w[l]);
            flat.extend_from_slice(&grad_b[l]);
        }
        (loss / n, flat)
    }

    /// Flattened parameters: per layer, weights then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        for l in 0..self.n_layers() {
            flat.extend_from_slice(&self.weights[l]);
            flat.extend_from_slice(&self.biases[l]);
        }
        flat
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        let mut cursor = 0;
        for l in 0..self.n_layers() {
            let wn = self.weights[l].len();
            self.weights[l].copy_from_slice(&flat[cursor..cursor + wn]);
            cursor += wn;
            let bn = self.biases[l].len();
            self.biases[l].copy_from_slice(&flat[cursor..cursor + bn]);
            cursor += bn;
        }
        assert_eq!(cursor, flat.len());
    }
}

/// Train with Adam; `hidden` holds the hidden layer widths.
pub fn fit_mlp(
    x: &Matrix,
    y: &[u8],
    hidden: &[usize],
    seed: u64,
    warnings: &mut Vec<String>,
) -> MlpModel {
    let mut layer_sizes = vec![x.n_cols()];
    layer_sizes.extend_from_slice(hidden);
    layer_sizes.push(1);
    let mut model = MlpModel::new_seeded(&layer_sizes, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));

    // Internal validation split for early stopping.
    let n = x.n_rows();
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let n_val = ((n as f64 * VALIDATION_FRACTION).round() as usize).min(n.saturating_sub(2));
    let (val_idx, train_idx) = order.split_at(n_val);
    let train_has_both =
        train_idx.iter().any(|&i| y[i] == 0) && train_idx.iter().any(|&i| y[i] == 1);
    let early_stopping = n_val >= 1 && train_has_both;
    let (x_fit, y_fit, x_val, y_val);
    if early_stopping {
        x_fit = x.select_rows(train_idx);
        y_fit = train_idx.iter().map(|&i| y[i]).collect::<Vec<u8>>();
        x_val = x.select_rows(val_idx);
        y_val = val_idx.iter().map(|&i| y[i]).collect::<Vec<u8>>();
    } else {
        x_fit = x.clone();
        y_fit = y.to_vec();
        x_val = Matrix::zeros(0, x.n_cols());
        y_val = Vec::new();
    }

    let n_fit = x_fit.n_rows();
    let mut m1 = vec![0.0; model.params().len()];
    let mut m2 = vec![0.0; m1.len()];
    let mut step = 0usize;
    let mut best_val = f64::INFINITY;
    let mut best_params: Option<Vec<f64>> = None;
    let mut since_best = 0usize;
    let mut stopped_early = false;

    let mut batch_order: Vec<usize> = (0..n_fit).collect();
    for _epoch in 0..MAX_EPOCHS {
        for i in (1..n_fit).rev() {
            let j = rng.gen_range(0..=i);
            batch_order.swap(i, j);
        }
        for chunk in batch_order.chunks(BATCH_SIZE) {
            let xb = x_fit.select_rows(chunk);
            let yb: Vec<u8> = chunk.iter().map(|&i| y_fit[i]).collect();
            let (_, grad) = model.loss_and_grad(&xb, &yb);
            step += 1;
            let mut params = model.params();
            let bias1 = 1.0 - ADAM_BETA1.powi(step as i32);
            let bias2 = 1.0 - ADAM_BETA2.powi(step as i32);
            for (k, g) in grad.iter().enumerate() {
                m1[k] = ADAM_BETA1 * m1[k] + (1.0 - ADAM_BETA1) * g;
                m2[k] = ADAM_BETA2 * m2[k] + (1.0 - ADAM_BETA2) * g * g;
                let mhat = m1[k] / bias1;
                let vhat = m2[k] / bias2;
                params[k] -= ADAM_LR * mhat / (vhat.sqrt() + ADAM_EPS);
            }
            model.set_params(&params);
        }

        if early_stopping {
            let val_loss = model.loss(&x_val, &y_val);
            if val_loss < best_val - IMPROVEMENT_TOL {
                best_val = val_loss;
                best_params = Some(model.params());
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= PATIENCE {
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    if let Some(best) = best_params {
        model.set_params(&best);
    }
    if early_stopping && !stopped_early {
        warnings.push("MLP reached the epoch cap without early stopping".to_string());
    }
    model
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::gaussian_blobs;

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        // Tiny 2-3-1 network, 5 samples, central differences.
        let (x, y) = gaussian_blobs(3, 2, 2.0, 1.0, 4);
        let x = x.select_rows(&[0, 1, 2, 3, 4]);
        let y = &y[..5];
        let model = MlpModel::new_seeded(&[2, 3, 1], 11);
        let (_, grad) = model.loss_and_grad(&x, y);
        let params = model.params();
        let eps = 1e-6;
        for k in 0..params.len() {
            let mut plus = model.clone();
            let mut p = params.clone();
            p[k] += eps;
            plus.set_params(&p);
            let mut minus = model.clone();
            p[k] -= 2.0 * eps;
            minus.set_params(&p);
            let numeric = (plus.loss(&x, y) - minus.loss(&x, y)) / (2.0 * eps);
            let denom = numeric.abs().max(grad[k].abs()).max(1e-8);
            assert!(
                (numeric - grad[k]).abs() / denom < 1e-5,
                "param {k}: analytic {} vs numeric {}",
                grad[k],
                numeric
            );
        }
    }

    #[test]
    fn learns_blobs() {
        let (x, y) = gaussian_blobs(100, 2, 4.0, 0.8, 9);
        let mut warnings = Vec::new();
        let model = fit_mlp(&x, &y, &[16], 3, &mut warnings);
        let correct = (0..x.n_rows())
            .filter(|&i| (model.predict_p1(x.row(i)) > 0.5) as u8 == y[i])
            .count();
        assert!(correct as f64 / x.n_rows() as f64 >= 0.97);
    }

    #[test]
    fn proba_rows_sum_to_one() {
        let (x, _) = gaussian_blobs(50, 4, 1.0, 1.0, 2);
        let model = MlpModel::new_seeded(&[4, 8, 8, 1], 7);
        for i in 0..x.n_rows() {
            let p = model.proba(x.row(i));
            assert!((p[0] + p[1] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn seeded_fit_is_reproducible() {
        let (x, y) = gaussian_blobs(60, 3, 3.0, 1.0, 5);
        let mut w1 = Vec::new();
        let mut w2 = Vec::new();
        let a = fit_mlp(&x, &y, &[8, 8], 42, &mut w1);
        let b = fit_mlp(&x, &y, &[8, 8], 42, &mut w2);
        for (wa, wb) in a.params().iter().zip(b.params()) {
            assert_eq!(wa.to_bits(), wb.to_bits());
        }
    }
}
