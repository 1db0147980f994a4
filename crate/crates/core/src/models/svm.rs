//! Support vector machine trained by SMO on the dual, with Platt-scaled
//! probabilities.
//!
//! Working-set selection is the maximal violating pair on the dual gradient;
//! the stop criterion is the standard duality-gap surrogate `m - M < 1e-3`.
//! Probabilities come from a sigmoid fitted on decision values of a held-out
//! 20% calibration split (the calibration SVM is trained on the other 80%;
//! the returned machine is refitted on all rows).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
    Poly { gamma: f64, degree: u32, coef0: f64 },
}

/// Kernel families before the data-dependent gamma is resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelKind {
    Linear,
    Rbf,
    Poly,
}

impl Kernel {
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Kernel::Linear => dot(a, b),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
            Kernel::Poly {
                gamma,
                degree,
                coef0,
            } => (gamma * dot(a, b) + coef0).powi(*degree as i32),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `gamma = 1 / (d * var(X))` over all matrix entries, the conventional
/// "scale" setting.
pub fn scale_gamma(x: &Matrix) -> f64 {
    let n = (x.n_rows() * x.n_cols()) as f64;
    let mut sum = 0.0;
    let mut sq = 0.0;
    for i in 0..x.n_rows() {
        for v in x.row(i) {
            sum += v;
            sq += v * v;
        }
    }
    let var = (sq / n - (sum / n) * (sum / n)).max(1e-12);
    1.0 / (x.n_cols() as f64 * var)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub support: Matrix,
    /// `alpha_i * y_i` per support vector.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    /// Platt sigmoid `p = 1 / (1 + exp(a * f + b))`.
    pub platt: (f64, f64),
    pub n_features: usize,
}

const SVM_C: f64 = 1.0;
const SMO_EPS: f64 = 1e-3;
const TAU: f64 = 1e-12;

struct SmoResult {
    alpha: Vec<f64>,
    bias: f64,
    converged: bool,
}

/// Solve the dual with maximal-violating-pair SMO.
fn smo(kmat: &[f64], n: usize, targets: &[f64]) -> SmoResult {
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let q = |i: usize, j: usize| targets[i] * targets[j] * kmat[i * n + j];
    let max_steps = (100 * n).max(100_000);
    let mut converged = false;

    for _ in 0..max_steps {
        // Maximal violating pair.
        let mut i_sel = usize::MAX;
        let mut m_up = f64::NEG_INFINITY;
        let mut j_sel = usize::MAX;
        let mut m_low = f64::INFINITY;
        for k in 0..n {
            let yk = targets[k];
            let up = (yk > 0.0 && alpha[k] < SVM_C) || (yk < 0.0 && alpha[k] > 0.0);
            let low = (yk > 0.0 && alpha[k] > 0.0) || (yk < 0.0 && alpha[k] < SVM_C);
            let v = -yk * grad[k];
            if up && v > m_up {
                m_up = v;
                i_sel = k;
            }
            if low && v < m_low {
                m_low = v;
                j_sel = k;
            }
        }
        if i_sel == usize::MAX || j_sel == usize::MAX || m_up - m_low < SMO_EPS {
            converged = true;
            break;
        }
        let (i, j) = (i_sel, j_sel);

        // Two-variable subproblem.
        let old_ai = alpha[i];
        let old_aj = alpha[j];
        if targets[i] != targets[j] {
            let quad = (q(i, i) + q(j, j) + 2.0 * q(i, j)).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
                if alpha[i] > SVM_C {
                    alpha[i] = SVM_C;
                    alpha[j] = SVM_C - diff;
                }
            } else {
                if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = -diff;
                }
                if alpha[j] > SVM_C {
                    alpha[j] = SVM_C;
                    alpha[i] = SVM_C + diff;
                }
            }
        } else {
            let quad = (q(i, i) + q(j, j) - 2.0 * q(i, j)).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > SVM_C {
                if alpha[i] > SVM_C {
                    alpha[i] = SVM_C;
                    alpha[j] = sum - SVM_C;
                } else if alpha[j] > SVM_C {
                    alpha[j] = SVM_C;
                    alpha[i] = sum - SVM_C;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let di = alpha[i] - old_ai;
        let dj = alpha[j] - old_aj;
        if di == 0.0 && dj == 0.0 {
            converged = true;
            break;
        }
        for k in 0..n {
            grad[k] += q(k, i) * di + q(k, j) * dj;
        }
    }

    // Bias from free support vectors, midpoint of the bounds otherwise.
    let mut free_sum = 0.0;
    let mut free_count = 0usize;
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for k in 0..n {
        let yk = targets[k];
        let v = yk * grad[k]; // y_k * grad = f0(x_k) - y_k scaled
        let up = (yk > 0.0 && alpha[k] < SVM_C) || (yk < 0.0 && alpha[k] > 0.0);
        let low = (yk > 0.0 && alpha[k] > 0.0) || (yk < 0.0 && alpha[k] < SVM_C);
        if alpha[k] > 0.0 && alpha[k] < SVM_C {
            free_sum += -v;
            free_count += 1;
        } else {
            if up {
                lo = lo.max(-v);
            }
            if low {
                hi = hi.min(-v);
            }
        }
    }
    let bias = if free_count > 0 {
        free_sum / free_count as f64
    } else {
        0.5 * (lo + hi)
    };

    SmoResult {
        alpha,
        bias,
        converged,
    }
}

fn fit_core(
    x: &Matrix,
    y: &[u8],
    kernel: Kernel,
    warnings: &mut Vec<String>,
) -> (Matrix, Vec<f64>, f64) {
    let n = x.n_rows();
    let targets: Vec<f64> = y.iter().map(|&t| if t == 1 { 1.0 } else { -1.0 }).collect();
    let mut kmat = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval(x.row(i), x.row(j));
            kmat[i * n + j] = v;
            kmat[j * n + i] = v;
        }
    }
    let result = smo(&kmat, n, &targets);
    if !result.converged {
        warnings.push("SMO hit its step cap before reaching the gap tolerance".to_string());
    }
    let sv: Vec<usize> = (0..n).filter(|&i| result.alpha[i] > 1e-12).collect();
    let support = x.select_rows(&sv);
    let dual_coef: Vec<f64> = sv.iter().map(|&i| result.alpha[i] * targets[i]).collect();
    (support, dual_coef, result.bias)
}

fn decision_with(
    support: &Matrix,
    dual_coef: &[f64],
    bias: f64,
    kernel: &Kernel,
    row: &[f64],
) -> f64 {
    let mut acc = bias;
    for (k, coef) in dual_coef.iter().enumerate() {
        acc += coef * kernel.eval(support.row(k), row);
    }
    acc
}

/// Platt's sigmoid fit (regularized targets, Newton with backtracking).
fn fit_platt(decisions: &[f64], y: &[u8]) -> (f64, f64) {
    let n = decisions.len();
    let n_pos = y.iter().filter(|&&t| t == 1).count() as f64;
    let n_neg = n as f64 - n_pos;
    let t_pos = (n_pos + 1.0) / (n_pos + 2.0);
    let t_neg = 1.0 / (n_neg + 2.0);
    let targets: Vec<f64> = y
        .iter()
        .map(|&t| if t == 1 { t_pos } else { t_neg })
        .collect();

    let mut a = 0.0;
    let mut b = ((n_neg + 1.0) / (n_pos + 1.0)).ln();
    let objective = |a: f64, b: f64| -> f64 {
        let mut obj = 0.0;
        for (f, t) in decisions.iter().zip(&targets) {
            let z = a * f + b;
            // Stable log(1 + exp(z)) split by sign.
            let log1pexp = if z >= 0.0 {
                z + (-z).exp().ln_1p()
            } else {
                z.exp().ln_1p()
            };
            obj += t * log1pexp + (1.0 - t) * (log1pexp - z);
        }
        obj
    };

    let mut obj = objective(a, b);
    for _ in 0..100 {
        let (mut g_a, mut g_b) = (0.0, 0.0);
        let (mut h_aa, mut h_ab, mut h_bb) = (1e-12, 0.0, 1e-12);
        for (f, t) in decisions.iter().zip(&targets) {
            let z = a * f + b;
            let p = 1.0 / (1.0 + z.exp()); // P(y = 1 | f) under this sign convention
            let d1 = t - p;
            let d2 = (p * (1.0 - p)).max(1e-12);
            g_a += f * d1;
            g_b += d1;
            h_aa += f * f * d2;
            h_ab += f * d2;
            h_bb += d2;
        }
        if g_a.abs() < 1e-10 && g_b.abs() < 1e-10 {
            break;
        }
        let det = h_aa * h_bb - h_ab * h_ab;
        let da = -(h_bb * g_a - h_ab * g_b) / det;
        let db = -(-h_ab * g_a + h_aa * g_b) / det;
        let mut step = 1.0;
        loop {
            let (na, nb) = (a + step * da, b + step * db);
            let new_obj = objective(na, nb);
            if new_obj < obj + 1e-12 {
                a = na;
                b = nb;
                obj = new_obj;
                break;
            }
            step *= 0.5;
            if step < 1e-10 {
                return (a, b);
            }
        }
    }
    (a, b)
}

pub fn fit_svm(
    x: &Matrix,
    y: &[u8],
    kind: KernelKind,
    seed: u64,
    warnings: &mut Vec<String>,
) -> SvmModel {
    let kernel = match kind {
        KernelKind::Linear => Kernel::Linear,
        KernelKind::Rbf => Kernel::Rbf {
            gamma: scale_gamma(x),
        },
        KernelKind::Poly => Kernel::Poly {
            gamma: scale_gamma(x),
            degree: 3,
            coef0: 0.0,
        },
    };

    // 80/20 calibration split (seeded), both classes required on each side.
    let n = x.n_rows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let n_cal = (n / 5).max(1);
    let cal_idx = &order[..n_cal];
    let fit_idx = &order[n_cal..];
    let both = |idx: &[usize]| idx.iter().any(|&i| y[i] == 0) && idx.iter().any(|&i| y[i] == 1);

    let platt = if both(cal_idx) && both(fit_idx) {
        let x80 = x.select_rows(fit_idx);
        let y80: Vec<u8> = fit_idx.iter().map(|&i| y[i]).collect();
        let (support, dual_coef, bias) = fit_core(&x80, &y80, kernel, warnings);
        let decisions: Vec<f64> = cal_idx
            .iter()
            .map(|&i| decision_with(&support, &dual_coef, bias, &kernel, x.row(i)))
            .collect();
        let y_cal: Vec<u8> = cal_idx.iter().map(|&i| y[i]).collect();
        fit_platt(&decisions, &y_cal)
    } else {
        warnings.push(
            "calibration split degenerate; fitting the sigmoid on training decisions".to_string(),
        );
        let (support, dual_coef, bias) = fit_core(x, y, kernel, warnings);
        let decisions: Vec<f64> = (0..n)
            .map(|i| decision_with(&support, &dual_coef, bias, &kernel, x.row(i)))
            .collect();
        fit_platt(&decisions, y)
    };

    let (support, dual_coef, bias) = fit_core(x, y, kernel, warnings);
    SvmModel {
        kernel,
        support,
        dual_coef,
        bias,
        platt,
        n_features: x.n_cols(),
    }
}

impl SvmModel {
    pub fn decision(&self, row: &[f64]) -> f64 {
        decision_with(&self.support, &self.dual_coef, self.bias, &self.kernel, row)
    }

    pub fn proba(&self, row: &[f64]) -> [f64; 2] {
        let f = self.decision(row);
        let z = self.platt.0 * f + self.platt.1;
        let p1 = if z >= 0.0 {
            (-z).exp() / (1.0 + (-z).exp())
        } else {
            1.0 / (1.0 + z.exp())
        };
        [1.0 - p1, p1]
    }
}
