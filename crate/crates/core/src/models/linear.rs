//! Linear classifiers: L2-regularized logistic regression (Newton and
//! coordinate-descent solvers) and stochastic gradient descent with log or
//! hinge loss.
//!
//! The logistic objective is `0.5 ||w||^2 + C * sum log(1 + exp(-t z))` with
//! an unpenalized intercept; it is strictly convex, so both solvers must land
//! on the same optimum — a property the tests pin.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LogisticSolver {
    /// Cyclic coordinate descent with per-coordinate Newton steps.
    Coordinate,
    /// Full Newton (iteratively reweighted least squares).
    Newton,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub n_features: usize,
}

impl LogisticModel {
    pub fn decision(&self, row: &[f64]) -> f64 {
        self.intercept
            + self
                .weights
                .iter()
                .zip(row)
                .map(|(w, v)| w * v)
                .sum::<f64>()
    }

    pub fn proba(&self, row: &[f64]) -> [f64; 2] {
        let p = sigmoid(self.decision(row));
        [1.0 - p, p]
    }
}

const LOGISTIC_C: f64 = 1.0;
const LOGISTIC_MAX_ITER: usize = 1000;
const LOGISTIC_TOL: f64 = 1e-9;

pub fn fit_logistic(
    x: &Matrix,
    y: &[u8],
    solver: LogisticSolver,
    warnings: &mut Vec<String>,
) -> LogisticModel {
    match solver {
        LogisticSolver::Newton => fit_logistic_newton(x, y, warnings),
        LogisticSolver::Coordinate => fit_logistic_coordinate(x, y, warnings),
    }
}

fn fit_logistic_newton(x: &Matrix, y: &[u8], warnings: &mut Vec<String>) -> LogisticModel {
    let n = x.n_rows();
    let d = x.n_cols();
    let dim = d + 1; // weights + intercept (last)
    let mut theta = vec![0.0; dim];
    let mut converged = false;

    for _ in 0..100 {
        // Gradient and Hessian of the penalized objective.
        let mut grad = vec![0.0; dim];
        let mut hess = vec![0.0; dim * dim];
        for j in 0..d {
            grad[j] = theta[j];
            hess[j * dim + j] = 1.0;
        }
        for i in 0..n {
            let row = x.row(i);
            let z = theta[d] + row.iter().zip(&theta[..d]).map(|(v, w)| v * w).sum::<f64>();
            let p = sigmoid(z);
            let t = y[i] as f64;
            let g = LOGISTIC_C * (p - t);
            let s = LOGISTIC_C * (p * (1.0 - p)).max(1e-12);
            for a in 0..d {
                grad[a] += g * row[a];
                for b in a..d {
                    hess[a * dim + b] += s * row[a] * row[b];
                }
                hess[a * dim + d] += s * row[a];
            }
            grad[d] += g;
            hess[d * dim + d] += s;
        }
        for a in 0..dim {
            for b in 0..a {
                hess[a * dim + b] = hess[b * dim + a];
            }
        }

        let grad_norm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if grad_norm < LOGISTIC_TOL {
            converged = true;
            break;
        }

        let Some(step) = solve_spd(&mut hess, &grad, dim) else {
            warnings.push("logistic Newton step failed; stopping early".to_string());
            break;
        };
        for (t, s) in theta.iter_mut().zip(&step) {
            *t -= s;
        }
    }
    if !converged {
        warnings.push("logistic regression (newton) hit the iteration cap".to_string());
    }

    LogisticModel {
        weights: theta[..d].to_vec(),
        intercept: theta[d],
        n_features: d,
    }
}

/// Solve `A x = b` for symmetric positive definite `A` (in place Cholesky).
fn solve_spd(a: &mut [f64], b: &[f64], dim: usize) -> Option<Vec<f64>> {
    for i in 0..dim {
        for j in 0..=i {
            let mut sum = a[i * dim + j];
            for k in 0..j {
                sum -= a[i * dim + k] * a[j * dim + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                a[i * dim + i] = sum.sqrt();
            } else {
                a[i * dim + j] = sum / a[j * dim + j];
            }
        }
    }
    let mut y = vec![0.0; dim];
    for i in 0..dim {
        let mut sum = b[i];
        for k in 0..i {
            sum -= a[i * dim + k] * y[k];
        }
        y[i] = sum / a[i * dim + i];
    }
    let mut x = vec![0.0; dim];
    for i in (0..dim).rev() {
        let mut sum = y[i];
        for k in i + 1..dim {
            sum -= a[k * dim + i] * x[k];
        }
        x[i] = sum / a[i * dim + i];
    }
    Some(x)
}

fn fit_logistic_coordinate(x: &Matrix, y: &[u8], warnings: &mut Vec<String>) -> LogisticModel {
    let n = x.n_rows();
    let d = x.n_cols();
    let mut weights = vec![0.0; d];
    let mut intercept = 0.0;
    let mut z = vec![0.0; n];
    let mut converged = false;

    for _ in 0..LOGISTIC_MAX_ITER {
        let mut max_update = 0.0f64;
        for j in 0..=d {
            let mut g;
            let mut h;
            if j < d {
                g = weights[j];
                h = 1.0;
            } else {
                g = 0.0;
                h = 0.0;
            }
            for i in 0..n {
                let p = sigmoid(z[i]);
                let t = y[i] as f64;
                let xij = if j < d { x.get(i, j) } else { 1.0 };
                g += LOGISTIC_C * (p - t) * xij;
                h += LOGISTIC_C * (p * (1.0 - p)).max(1e-12) * xij * xij;
            }
            let delta = -g / h;
            if j < d {
                weights[j] += delta;
                for i in 0..n {
                    z[i] += delta * x.get(i, j);
                }
            } else {
                intercept += delta;
                for zi in z.iter_mut() {
                    *zi += delta;
                }
            }
            max_update = max_update.max(delta.abs());
        }
        if max_update < LOGISTIC_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        warnings.push("logistic regression (coordinate) hit the iteration cap".to_string());
    }

    LogisticModel {
        weights,
        intercept,
        n_features: d,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SgdLoss {
    Log,
    Hinge,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SgdModel {
    pub loss: SgdLoss,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub n_features: usize,
}

const SGD_ALPHA: f64 = 1e-4;
const SGD_EPOCHS: usize = 100;

pub fn fit_sgd(x: &Matrix, y: &[u8], loss: SgdLoss, seed: u64) -> SgdModel {
    let n = x.n_rows();
    let d = x.n_cols();
    let mut weights = vec![0.0; d];
    let mut intercept = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();

    // eta_t = 1 / (alpha * (t + t0)) with eta_0 = 0.1.
    let t0 = 1.0 / (SGD_ALPHA * 0.1);
    let mut t = 0.0f64;
    for _ in 0..SGD_EPOCHS {
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        for &i in &order {
            t += 1.0;
            let eta = 1.0 / (SGD_ALPHA * (t + t0));
            let row = x.row(i);
            let target = if y[i] == 1 { 1.0 } else { -1.0 };
            let z = intercept + weights.iter().zip(row).map(|(w, v)| w * v).sum::<f64>();
            let pull = match loss {
                SgdLoss::Log => sigmoid(-target * z),
                SgdLoss::Hinge => {
                    if target * z < 1.0 {
                        1.0
                    } else {
                        0.0
                    }
                }
            };
            let decay = 1.0 - eta * SGD_ALPHA;
            for w in weights.iter_mut() {
                *w *= decay;
            }
            if pull > 0.0 {
                for (w, v) in weights.iter_mut().zip(row) {
                    *w += eta * target * pull * v;
                }
                intercept += eta * target * pull;
            }
        }
    }

    SgdModel {
        loss,
        weights,
        intercept,
        n_features: d,
    }
}

impl SgdModel {
    pub fn decision(&self, row: &[f64]) -> f64 {
        self.intercept
            + self
                .weights
                .iter()
                .zip(row)
                .map(|(w, v)| w * v)
                .sum::<f64>()
    }

    pub fn predict_row(&self, row: &[f64]) -> u8 {
        (self.decision(row) > 0.0) as u8
    }

    /// Only the log loss yields calibrated probabilities.
    pub fn proba(&self, row: &[f64]) -> Option<[f64; 2]> {
        match self.loss {
            SgdLoss::Log => {
                let p = sigmoid(self.decision(row));
                Some([1.0 - p, p])
            }
            SgdLoss::Hinge => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::gaussian_blobs;

    #[test]
    fn both_solvers_reach_the_same_optimum() {
        let (x, y) = gaussian_blobs(80, 3, 2.0, 1.0, 13);
        let mut warn = Vec::new();
        let newton = fit_logistic(&x, &y, LogisticSolver::Newton, &mut warn);
        let coord = fit_logistic(&x, &y, LogisticSolver::Coordinate, &mut warn);
        for (a, b) in newton.weights.iter().zip(&coord.weights) {
            assert!((a - b).abs() < 1e-4, "weights differ: {a} vs {b}");
        }
        assert!((newton.intercept - coord.intercept).abs() < 1e-4);
    }

    #[test]
    fn logistic_separates_blobs() {
        let (x, y) = gaussian_blobs(100, 2, 5.0, 1.0, 3);
        let mut warn = Vec::new();
        let model = fit_logistic(&x, &y, LogisticSolver::Newton, &mut warn);
        let correct = (0..x.n_rows())
            .filter(|&i| (model.proba(x.row(i))[1] > 0.5) as u8 == y[i])
            .count();
        assert!(correct as f64 / x.n_rows() as f64 >= 0.99);
    }

    #[test]
    fn sgd_hinge_and_log_learn_blobs() {
        let (x, y) = gaussian_blobs(150, 2, 5.0, 1.0, 6);
        for loss in [SgdLoss::Log, SgdLoss::Hinge] {
            let model = fit_sgd(&x, &y, loss, 21);
            let correct = (0..x.n_rows())
                .filter(|&i| model.predict_row(x.row(i)) == y[i])
                .count();
            assert!(
                correct as f64 / x.n_rows() as f64 >= 0.97,
                "{loss:?} underfits"
            );
        }
    }

    #[test]
    fn hinge_has_no_probabilities() {
        let (x, y) = gaussian_blobs(30, 2, 4.0, 1.0, 2);
        let model = fit_sgd(&x, &y, SgdLoss::Hinge, 5);
        assert!(model.proba(x.row(0)).is_none());
    }
}
