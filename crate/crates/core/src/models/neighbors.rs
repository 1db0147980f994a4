//! Brute-force k-nearest neighbors.

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KnnWeights {
    Uniform,
    Distance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub weights: KnnWeights,
    pub train_x: Matrix,
    pub train_y: Vec<u8>,
}

pub fn fit_knn(x: &Matrix, y: &[u8], k: usize, weights: KnnWeights) -> KnnModel {
    KnnModel {
        k: k.min(x.n_rows()).max(1),
        weights,
        train_x: x.clone(),
        train_y: y.to_vec(),
    }
}

impl KnnModel {
    pub fn proba(&self, row: &[f64]) -> [f64; 2] {
        let mut dists: Vec<(f64, usize)> = (0..self.train_x.n_rows())
            .map(|i| {
                let d2: f64 = self
                    .train_x
                    .row(i)
                    .iter()
                    .zip(row)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d2.sqrt(), i)
            })
            .collect();
        // Stable tie-break on the training index.
        dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let mut acc = [0.0; 2];
        for &(dist, i) in dists.iter().take(self.k) {
            let weight = match self.weights {
                KnnWeights::Uniform => 1.0,
                KnnWeights::Distance => 1.0 / (dist + 1e-12),
            };
            acc[self.train_y[i] as usize] += weight;
        }
        let z = acc[0] + acc[1];
        [acc[0] / z, acc[1] / z]
    }
}
