//! Two-hidden-layer ReLU regression network with batched backpropagation.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::linalg::{gemm, Layout};
use crate::error::{Error, Result};

/// Fully connected layer, `y = W·x + b`, with `W` stored row-major
/// (`n_out` rows of `n_in`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self { n_in, n_out, weights: vec![0.0; n_in * n_out], bias: vec![0.0; n_out] }
    }

    /// Uniform weights in ±√(6 / (fan_in + fan_out)), zero biases.
    pub fn glorot<R: Rng + ?Sized>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (n_in + n_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
        Self {
            n_in,
            n_out,
            weights: (0..n_in * n_out).map(|_| dist.sample(rng)).collect(),
            bias: vec![0.0; n_out],
        }
    }

    fn layout(&self) -> Layout {
        Layout::row_major(self.n_out, self.n_in)
    }

    fn is_consistent(&self) -> bool {
        self.weights.len() == self.n_in * self.n_out && self.bias.len() == self.n_out
    }

    /// `out (batch × n_out) = x (batch × n_in) · Wᵀ + b`
    fn forward_batch(&self, x: &[f64], batch: usize, out: &mut [f64]) {
        for row in out.chunks_exact_mut(self.n_out).take(batch) {
            row.copy_from_slice(&self.bias);
        }
        gemm(1.0, x, Layout::row_major(batch, self.n_in), &self.weights, self.layout().transposed(), 1.0, out);
    }
}

/// `x1 = relu(W1·x + b1)`, `x2 = relu(W2·x1 + b2)`, `ŷ = W3·x2 + b3`.
///
/// The same struct doubles as the container for gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub hidden1: Dense,
    pub hidden2: Dense,
    pub output: Dense,
}

/// Per-batch activations kept for the backward pass.
struct Activations {
    h1: Vec<f64>,
    h2: Vec<f64>,
    y: Vec<f64>,
}

fn relu_in_place(values: &mut [f64]) {
    for v in values {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

impl Mlp {
    pub fn zeros(n_in: usize, n_hidden1: usize, n_hidden2: usize) -> Self {
        Self {
            hidden1: Dense::zeros(n_in, n_hidden1),
            hidden2: Dense::zeros(n_hidden1, n_hidden2),
            output: Dense::zeros(n_hidden2, 1),
        }
    }

    pub fn glorot<R: Rng + ?Sized>(n_in: usize, n_hidden1: usize, n_hidden2: usize, rng: &mut R) -> Self {
        Self {
            hidden1: Dense::glorot(n_in, n_hidden1, rng),
            hidden2: Dense::glorot(n_hidden1, n_hidden2, rng),
            output: Dense::glorot(n_hidden2, 1, rng),
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.hidden1.n_in
    }

    pub fn n_params(&self) -> usize {
        self.buffers().iter().map(|b| b.len()).sum()
    }

    /// Checks that layer shapes chain and all values are finite.
    pub fn validate(&self) -> Result<()> {
        let layers = [&self.hidden1, &self.hidden2, &self.output];
        if layers.iter().any(|l| !l.is_consistent()) {
            return Err(Error::Data("layer buffers do not match their dimensions".into()));
        }
        if self.hidden2.n_in != self.hidden1.n_out {
            return Err(Error::Dimension { expected: self.hidden1.n_out, actual: self.hidden2.n_in });
        }
        if self.output.n_in != self.hidden2.n_out {
            return Err(Error::Dimension { expected: self.hidden2.n_out, actual: self.output.n_in });
        }
        if self.output.n_out != 1 {
            return Err(Error::Dimension { expected: 1, actual: self.output.n_out });
        }
        if self.buffers().iter().any(|b| b.iter().any(|v| !v.is_finite())) {
            return Err(Error::Data("non-finite network parameter".into()));
        }
        Ok(())
    }

    /// Parameter buffers in a fixed order: W1, b1, W2, b2, W3, b3.
    pub fn buffers(&self) -> [&[f64]; 6] {
        [
            &self.hidden1.weights,
            &self.hidden1.bias,
            &self.hidden2.weights,
            &self.hidden2.bias,
            &self.output.weights,
            &self.output.bias,
        ]
    }

    pub fn buffers_mut(&mut self) -> [&mut [f64]; 6] {
        [
            &mut self.hidden1.weights,
            &mut self.hidden1.bias,
            &mut self.hidden2.weights,
            &mut self.hidden2.bias,
            &mut self.output.weights,
            &mut self.output.bias,
        ]
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.hidden1.n_in, self.hidden1.n_out, self.hidden2.n_out)
    }

    /// Single-input prediction.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_inputs() {
            return Err(Error::Dimension { expected: self.n_inputs(), actual: x.len() });
        }
        Ok(self.activations(x, 1).y[0])
    }

    /// Predictions for `x.len() / n_inputs` row-major inputs.
    pub fn forward_batch(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n_in = self.n_inputs();
        if x.len() % n_in != 0 {
            return Err(Error::Dimension { expected: n_in, actual: x.len() % n_in });
        }
        Ok(self.activations(x, x.len() / n_in).y)
    }

    fn activations(&self, x: &[f64], batch: usize) -> Activations {
        let mut h1 = vec![0.0; batch * self.hidden1.n_out];
        self.hidden1.forward_batch(x, batch, &mut h1);
        relu_in_place(&mut h1);
        let mut h2 = vec![0.0; batch * self.hidden2.n_out];
        self.hidden2.forward_batch(&h1, batch, &mut h2);
        relu_in_place(&mut h2);
        let mut y = vec![0.0; batch];
        self.output.forward_batch(&h2, batch, &mut y);
        Activations { h1, h2, y }
    }

    /// Mean squared error of a batch and its gradient with respect to every
    /// parameter, `L = (1/B) Σ (ŷ − y)²`. The ReLU derivative at 0 is 0.
    pub fn loss_and_grad(&self, x: &[f64], targets: &[f64]) -> Result<(f64, Mlp)> {
        let batch = targets.len();
        if batch == 0 {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        if x.len() != batch * self.n_inputs() {
            return Err(Error::Dimension { expected: batch * self.n_inputs(), actual: x.len() });
        }
        let n1 = self.hidden1.n_out;
        let n2 = self.hidden2.n_out;
        let acts = self.activations(x, batch);
        let mut grads = self.zeros_like();

        let scale = 2.0 / batch as f64;
        let mut loss = 0.0;
        let d_out: Vec<f64> = acts
            .y
            .iter()
            .zip(targets)
            .map(|(yh, y)| {
                let r = yh - y;
                loss += r * r;
                scale * r
            })
            .collect();
        loss /= batch as f64;

        // output layer: gW3 = dYᵀ·H2, gb3 = Σ dY
        gemm(
            1.0,
            &d_out,
            Layout::row_major(batch, 1).transposed(),
            &acts.h2,
            Layout::row_major(batch, n2),
            0.0,
            &mut grads.output.weights,
        );
        grads.output.bias[0] = d_out.iter().sum();

        // dH2 = dY·W3 masked by the ReLU
        let mut d_h2 = vec![0.0; batch * n2];
        for ((row, &dy), h) in d_h2.chunks_exact_mut(n2).zip(&d_out).zip(acts.h2.chunks_exact(n2)) {
            for ((d, &w), &a) in row.iter_mut().zip(&self.output.weights).zip(h) {
                *d = if a > 0.0 { dy * w } else { 0.0 };
            }
        }
        gemm(
            1.0,
            &d_h2,
            Layout::row_major(batch, n2).transposed(),
            &acts.h1,
            Layout::row_major(batch, n1),
            0.0,
            &mut grads.hidden2.weights,
        );
        column_sums(&d_h2, n2, &mut grads.hidden2.bias);

        // dH1 = dH2·W2 masked by the ReLU
        let mut d_h1 = vec![0.0; batch * n1];
        gemm(1.0, &d_h2, Layout::row_major(batch, n2), &self.hidden2.weights, self.hidden2.layout(), 0.0, &mut d_h1);
        for (d, &a) in d_h1.iter_mut().zip(&acts.h1) {
            if a <= 0.0 {
                *d = 0.0;
            }
        }
        gemm(
            1.0,
            &d_h1,
            Layout::row_major(batch, n1).transposed(),
            x,
            Layout::row_major(batch, self.n_inputs()),
            0.0,
            &mut grads.hidden1.weights,
        );
        column_sums(&d_h1, n1, &mut grads.hidden1.bias);

        Ok((loss, grads))
    }

    /// Mean squared error over a (possibly large) row-major input set,
    /// evaluated in chunks.
    pub fn mse(&self, x: &[f64], targets: &[f64]) -> Result<f64> {
        const CHUNK: usize = 4096;
        let n_in = self.n_inputs();
        if x.len() != targets.len() * n_in {
            return Err(Error::Dimension { expected: targets.len() * n_in, actual: x.len() });
        }
        if targets.is_empty() {
            return Err(Error::InvalidInput("empty evaluation set".into()));
        }
        let mut sum = 0.0;
        for (xs, ys) in x.chunks(CHUNK * n_in).zip(targets.chunks(CHUNK)) {
            let preds = self.activations(xs, ys.len()).y;
            sum += preds.iter().zip(ys).map(|(p, y)| (p - y) * (p - y)).sum::<f64>();
        }
        Ok(sum / targets.len() as f64)
    }
}

fn column_sums(matrix: &[f64], cols: usize, out: &mut [f64]) {
    out.fill(0.0);
    for row in matrix.chunks_exact(cols) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded_rng, Stream};

    #[test]
    fn zero_network_outputs_zero_or_bias() {
        let mut net = Mlp::zeros(125, 128, 64);
        assert_eq!(net.forward(&[1.0; 125]).unwrap(), 0.0);
        net.output.bias[0] = 1.5;
        assert_eq!(net.forward(&[3.0; 125]).unwrap(), 1.5);
    }

    #[test]
    fn hand_built_network() {
        // identity hidden layers, output sums both units: relu(x1) + relu(x2)
        let mut net = Mlp::zeros(2, 2, 2);
        net.hidden1.weights = vec![1.0, 0.0, 0.0, 1.0];
        net.hidden2.weights = vec![1.0, 0.0, 0.0, 1.0];
        net.output.weights = vec![1.0, 1.0];
        assert_eq!(net.forward(&[-1.0, 2.0]).unwrap(), 2.0);
        assert_eq!(net.forward(&[3.0, 2.0]).unwrap(), 5.0);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let net = Mlp::zeros(125, 128, 64);
        assert!(matches!(net.forward(&[0.0; 124]), Err(Error::Dimension { expected: 125, actual: 124 })));
        assert!(net.forward_batch(&[0.0; 130]).is_err());
        assert!(net.loss_and_grad(&[0.0; 125], &[0.0, 1.0]).is_err());
        assert!(net.loss_and_grad(&[], &[]).is_err());
    }

    #[test]
    fn shape_and_param_count() {
        let net = Mlp::glorot(125, 128, 64, &mut seeded_rng(0, Stream::Member));
        assert_eq!(net.n_params(), 128 * 125 + 128 + 64 * 128 + 64 + 64 + 1);
        net.validate().unwrap();
        let limit = (6.0f64 / 253.0).sqrt();
        assert!(net.hidden1.weights.iter().all(|w| w.abs() <= limit));
        assert!(net.hidden1.bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn batch_forward_matches_single() {
        let net = Mlp::glorot(5, 7, 3, &mut seeded_rng(2, Stream::Member));
        let x: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
        let batch = net.forward_batch(&x).unwrap();
        for (row, b) in x.chunks(5).zip(&batch) {
            assert!((net.forward(row).unwrap() - b).abs() < 1e-14);
        }
    }

    #[test]
    fn perfect_fit_has_zero_gradient() {
        let net = Mlp::glorot(4, 6, 5, &mut seeded_rng(9, Stream::Member));
        let x: Vec<f64> = (0..12).map(|i| i as f64 * 0.1 - 0.5).collect();
        let y = net.forward_batch(&x).unwrap();
        let (loss, grads) = net.loss_and_grad(&x, &y).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.buffers().iter().all(|b| b.iter().all(|&g| g == 0.0)));
    }

    #[test]
    fn output_bias_gradient_is_twice_residual() {
        let net = Mlp::glorot(3, 4, 4, &mut seeded_rng(4, Stream::Member));
        let x = [0.2, -0.4, 0.9];
        let yhat = net.forward(&x).unwrap();
        let (_, grads) = net.loss_and_grad(&x, &[yhat - 0.75]).unwrap();
        assert!((grads.output.bias[0] - 2.0 * 0.75).abs() < 1e-12);
    }
}
