//! Small dense-layer helpers shared by the extractor and the regression head.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::seed::Rng;

/// Fully connected layer `y = x Wᵀ + b`, weights stored `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    /// Xavier/Glorot uniform weights, zero bias.
    pub fn xavier(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = Array2::from_shape_fn((outputs, inputs), |_| rng.random_range(-limit..limit));
        Dense { weights, bias: Array1::zeros(outputs) }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        x.dot(&self.weights.t()) + &self.bias
    }

    /// Gradients for upstream gradient `dy`; returns `(dW, db, dx)`.
    pub fn backward(&self, x: ArrayView2<'_, f64>, dy: &Array2<f64>) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
        (dy.t().dot(&x), dy.sum_axis(Axis(0)), dy.dot(&self.weights))
    }
}

/// Momentum buffers for one dense layer.
#[derive(Debug, Clone)]
pub struct Velocity {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Velocity {
    pub fn zeros_like(layer: &Dense) -> Self {
        Velocity {
            weights: Array2::zeros(layer.weights.raw_dim()),
            bias: Array1::zeros(layer.bias.raw_dim()),
        }
    }
}

/// One SGD-with-momentum step: `v ← βv − α∇`, `w ← w + v`.
pub fn momentum_step(layer: &mut Dense, vel: &mut Velocity, dw: &Array2<f64>, db: &Array1<f64>, momentum: f64, lr: f64) {
    vel.weights.zip_mut_with(dw, |v, &g| *v = momentum * *v - lr * g);
    vel.bias.zip_mut_with(db, |v, &g| *v = momentum * *v - lr * g);
    layer.weights += &vel.weights;
    layer.bias += &vel.bias;
}

pub fn relu(mut x: Array2<f64>) -> Array2<f64> {
    x.mapv_inplace(|v| v.max(0.0));
    x
}

/// Zeroes gradient entries where the pre-activation was not positive.
pub fn relu_backward(mut dy: Array2<f64>, pre: &Array2<f64>) -> Array2<f64> {
    dy.zip_mut_with(pre, |g, &z| {
        if z <= 0.0 {
            *g = 0.0
        }
    });
    dy
}

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
    out
}

pub fn argmax(row: ndarray::ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn gaussian_matrix(rows: usize, cols: usize, scale: f64, rng: &mut Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| scale * rng.sample::<f64, _>(StandardNormal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn momentum_first_step() {
        let mut layer = Dense { weights: array![[0.5]], bias: array![0.0] };
        let mut vel = Velocity::zeros_like(&layer);
        momentum_step(&mut layer, &mut vel, &array![[1.0]], &array![0.0], 0.9, 1e-4);
        assert_eq!(vel.weights[[0, 0]], -1e-4);
        assert_eq!(layer.weights[[0, 0]], 0.5 - 1e-4);
        momentum_step(&mut layer, &mut vel, &array![[1.0]], &array![0.0], 0.9, 1e-4);
        assert!((vel.weights[[0, 0]] - (-1.9e-4)).abs() < 1e-18);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let p = softmax(&array![[1000.0, 0.0, -1000.0], [0.1, 0.2, 0.3]]);
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn argmax_prefers_first_on_ties() {
        assert_eq!(argmax(array![1.0, 3.0, 3.0].view()), 1);
    }
}
