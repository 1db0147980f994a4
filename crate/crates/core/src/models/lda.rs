//! Linear discriminant analysis with pooled covariance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::naive_bayes::normalize_log_joint;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LdaModel {
    pub means: [Vec<f64>; 2],
    pub log_priors: [f64; 2],
    /// `Sigma^-1 * mu_c` per class.
    pub coef: [Vec<f64>; 2],
    /// `-0.5 * mu_c^T Sigma^-1 mu_c + log pi_c` per class.
    pub intercept: [f64; 2],
    pub n_features: usize,
}

/// Cholesky factorization of a symmetric positive-definite matrix stored
/// row-major; returns the lower factor.
fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut sum = a[i * d + j];
            for k in 0..j {
                sum -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l[i * d + i] = sum.sqrt();
            } else {
                l[i * d + j] = sum / l[j * d + j];
            }
        }
    }
    Some(l)
}

/// Solve `A x = b` given the lower Cholesky factor of `A`.
fn cholesky_solve(l: &[f64], d: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; d];
    for i in 0..d {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * d + k] * y[k];
        }
        y[i] = sum / l[i * d + i];
    }
    let mut x = vec![0.0; d];
    for i in (0..d).rev() {
        let mut sum = y[i];
        for k in i + 1..d {
            sum -= l[k * d + i] * x[k];
        }
        x[i] = sum / l[i * d + i];
    }
    x
}

pub fn fit_lda(x: &Matrix, y: &[u8]) -> Result<LdaModel> {
    let d = x.n_cols();
    let n = x.n_rows();
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

    // Pooled within-class covariance.
    let mut cov = vec![0.0; d * d];
    for (i, &label) in y.iter().enumerate() {
        let c = label as usize;
        let row = x.row(i);
        for a in 0..d {
            let da = row[a] - means[c][a];
            for b in a..d {
                cov[a * d + b] += da * (row[b] - means[c][b]);
            }
        }
    }
    let denom = (n - 2) as f64;
    for a in 0..d {
        for b in a..d {
            let v = cov[a * d + b] / denom;
            cov[a * d + b] = v;
            cov[b * d + a] = v;
        }
    }

    // Ridge escalated until the factorization succeeds.
    let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    let base = (trace / d as f64).max(1e-12);
    let mut l = None;
    for exp in [1e-10, 1e-8, 1e-6, 1e-4, 1e-2] {
        let mut jittered = cov.clone();
        for i in 0..d {
            jittered[i * d + i] += base * exp;
        }
        if let Some(f) = cholesky(&jittered, d) {
            l = Some(f);
            break;
        }
    }
    let l = l.ok_or(Error::NonFiniteInput)?;

    let log_priors = [
        (counts[0] as f64 / n as f64).ln(),
        (counts[1] as f64 / n as f64).ln(),
    ];
    let mut coef = [vec![], vec![]];
    let mut intercept = [0.0; 2];
    for c in 0..2 {
        let w = cholesky_solve(&l, d, &means[c]);
        let quad: f64 = w.iter().zip(&means[c]).map(|(a, b)| a * b).sum();
        intercept[c] = -0.5 * quad + log_priors[c];
        coef[c] = w;
    }
    Ok(LdaModel {
        means,
        log_priors,
        coef,
        intercept,
        n_features: d,
    })
}

impl LdaModel {
    pub fn proba(&self, row: &[f64]) -> [f64; 2] {
        let mut scores = [0.0; 2];
        for c in 0..2 {
            scores[c] = self.intercept[c]
                + self.coef[c]
                    .iter()
                    .zip(row)
                    .map(|(w, v)| w * v)
                    .sum::<f64>();
        }
        normalize_log_joint(scores)
    }
}
