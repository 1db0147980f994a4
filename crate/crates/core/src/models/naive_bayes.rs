//! Gaussian and Bernoulli naive Bayes.

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

/// Per-class Gaussian likelihoods with shared variance smoothing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianNbModel {
    pub log_priors: [f64; 2],
    pub means: [Vec<f64>; 2],
    pub variances: [Vec<f64>; 2],
    pub n_features: usize,
}

pub fn fit_gaussian_nb(x: &Matrix, y: &[u8]) -> GaussianNbModel {
    let d = x.n_cols();
    let mut counts = [0usize; 2];
    let mut means = [vec![0.0; d], vec![0.0; d]];
    for (i, &label) in y.iter().enumerate() {
        counts[label as usize] += 1;
        for (j, v) in x.row(i).iter().enumerate() {
            means[label as usize][j] += v;
        }
    }
    for c in 0..2 {
        for m in &mut means[c] {
            *m /= counts[c] as f64;
        }
    }
    let mut variances = [vec![0.0; d], vec![0.0; d]];
    for (i, &label) in y.iter().enumerate() {
        let c = label as usize;
        for (j, v) in x.row(i).iter().enumerate() {
            let dev = v - means[c][j];
            variances[c][j] += dev * dev;
        }
    }
    // Smoothing proportional to the largest feature variance keeps the
    // likelihoods finite for constant features.
    let mut max_var = 0.0f64;
    for c in 0..2 {
        for v in variances[c].iter_mut() {
            *v /= counts[c] as f64;
            max_var = max_var.max(*v);
        }
    }
    let smoothing = 1e-9 * max_var.max(1e-12);
    for c in 0..2 {
        for v in &mut variances[c] {
            *v += smoothing;
        }
    }
    let n = y.len() as f64;
    GaussianNbModel {
        log_priors: [(counts[0] as f64 / n).ln(), (counts[1] as f64 / n).ln()],
        means,
        variances,
        n_features: d,
    }
}

impl GaussianNbModel {
    pub fn proba(&self, row: &[f64]) -> [f64; 2] {
        let mut log_joint = [0.0; 2];
        for c in 0..2 {
            let mut acc = self.log_priors[c];
            for (j, v) in row.iter().enumerate() {
                let var = self.variances[c][j];
                let dev = v - self.means[c][j];
                acc += -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + dev * dev / var);
            }
            log_joint[c] = acc;
        }
        normalize_log_joint(log_joint)
    }
}

/// Binary-feature naive Bayes; features binarized at a fixed threshold with
/// Laplace smoothing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BernoulliNbModel {
    pub binarize_at: f64,
    pub log_priors: [f64; 2],
    /// log P(feature = 1 | class) and its complement.
    pub log_p1: [Vec<f64>; 2],
    pub log_p0: [Vec<f64>; 2],
    pub n_features: usize,
}

pub fn fit_bernoulli_nb(x: &Matrix, y: &[u8], binarize_at: f64, alpha: f64) -> BernoulliNbModel {
    let d = x.n_cols();
    let mut counts = [0usize; 2];
    let mut ones = [vec![0.0; d], vec![0.0; d]];
    for (i, &label) in y.iter().enumerate() {
        let c = label as usize;
        counts[c] += 1;
        for (j, v) in x.row(i).iter().enumerate() {
            if *v > binarize_at {
                ones[c][j] += 1.0;
            }
        }
    }
    let mut log_p1 = [vec![0.0; d], vec![0.0; d]];
    let mut log_p0 = [vec![0.0; d], vec![0.0; d]];
    for c in 0..2 {
        let denom = counts[c] as f64 + 2.0 * alpha;
        for j in 0..d {
            let p1 = (ones[c][j] + alpha) / denom;
            log_p1[c][j] = p1.ln();
            log_p0[c][j] = (1.0 - p1).ln();
        }
    }
    let n = y.len() as f64;
    BernoulliNbModel {
        binarize_at,
        log_priors: [(counts[0] as f64 / n).ln(), (counts[1] as f64 / n).ln()],
        log_p1,
        log_p0,
        n_features: d,
    }
}

impl BernoulliNbModel {
    pub fn proba(&self, row: &[f64]) -> [f64; 2] {
        let mut log_joint = [0.0; 2];
        for c in 0..2 {
            let mut acc = self.log_priors[c];
            for (j, v) in row.iter().enumerate() {
                acc += if *v > self.binarize_at {
                    self.log_p1[c][j]
                } else {
                    self.log_p0[c][j]
                };
            }
            log_joint[c] = acc;
        }
        normalize_log_joint(log_joint)
    }
}

/// Softmax over two log-joint scores, stable against large magnitudes.
pub(super) fn normalize_log_joint(log_joint: [f64; 2]) -> [f64; 2] {
    let m = log_joint[0].max(log_joint[1]);
    let e0 = (log_joint[0] - m).exp();
    let e1 = (log_joint[1] - m).exp();
    let z = e0 + e1;
    [e0 / z, e1 / z]
}
