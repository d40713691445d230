//! Three-layer fully connected network with hand-written backprop.
//!
//! Hidden layers use Leaky ReLU. The head is either a softmax (blending
//! weights) or another Leaky ReLU (the regressor baseline).

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    Softmax,
    LeakyRelu,
}

/// `out = W in + b` with `W` stored row-major as `outputs x inputs`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Uniform in `+-1/sqrt(fan_in)` for weights and biases.
    pub fn init(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let mut draw = |n| (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
        let weight = draw(inputs * outputs);
        let bias = draw(outputs);
        Self {
            inputs,
            outputs,
            weight,
            bias,
        }
    }

    fn w(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.outputs, self.inputs), &self.weight).expect("dense shape")
    }

    fn w_mut(&mut self) -> ArrayViewMut2<'_, f64> {
        ArrayViewMut2::from_shape((self.outputs, self.inputs), &mut self.weight)
            .expect("dense shape")
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weight
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    /// `x W^T + b` for a batch of row vectors.
    fn apply_batch(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), self.outputs));
        general_mat_mul(1.0, &x, &self.w().t(), 0.0, &mut out);
        for mut row in out.rows_mut() {
            for (o, b) in row.iter_mut().zip(&self.bias) {
                *o += b;
            }
        }
        out
    }
}

#[inline]
pub fn leaky_relu(v: f64, slope: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        slope * v
    }
}

#[inline]
fn leaky_relu_grad(v: f64, slope: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else {
        slope
    }
}

/// Max-subtracted softmax, in place.
pub fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: [Dense; 3],
    pub leaky_slope: f64,
    pub head: Head,
}

/// Intermediate values of a batched forward pass.
pub struct MlpTrace {
    pub pre1: Array2<f64>,
    pub act1: Array2<f64>,
    pub pre2: Array2<f64>,
    pub act2: Array2<f64>,
    pub pre3: Array2<f64>,
    pub out: Array2<f64>,
}

impl Mlp {
    pub fn init(dims: [usize; 4], leaky_slope: f64, head: Head, rng: &mut impl Rng) -> Self {
        Self {
            layers: [
                Dense::init(dims[0], dims[1], rng),
                Dense::init(dims[1], dims[2], rng),
                Dense::init(dims[2], dims[3], rng),
            ],
            leaky_slope,
            head,
        }
    }

    pub fn zeros(dims: [usize; 4], leaky_slope: f64, head: Head) -> Self {
        Self {
            layers: [
                Dense::zeros(dims[0], dims[1]),
                Dense::zeros(dims[1], dims[2]),
                Dense::zeros(dims[2], dims[3]),
            ],
            leaky_slope,
            head,
        }
    }

    pub fn dims(&self) -> [usize; 4] {
        [
            self.layers[0].inputs,
            self.layers[0].outputs,
            self.layers[1].outputs,
            self.layers[2].outputs,
        ]
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.dims(), self.leaky_slope, self.head)
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn check_shapes(&self) -> Result<()> {
        let [a, b] = [&self.layers[0], &self.layers[1]];
        let c = &self.layers[2];
        let ok = a.outputs == b.inputs
            && b.outputs == c.inputs
            && self
                .layers
                .iter()
                .all(|l| l.weight.len() == l.inputs * l.outputs && l.bias.len() == l.outputs);
        if ok {
            Ok(())
        } else {
            Err(Error::Corrupt("inconsistent layer shapes".into()))
        }
    }

    /// Parameter slices in storage order W1, b1, W2, b2, W3, b3.
    pub fn segments(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn segments_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    /// Single-sample forward pass.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.layers[0].inputs {
            return Err(Error::DimensionMismatch {
                expected: self.layers[0].inputs,
                actual: x.len(),
            });
        }
        let s = self.leaky_slope;
        let h1: Vec<f64> = self.layers[0].apply(x).into_iter().map(|v| leaky_relu(v, s)).collect();
        let h2: Vec<f64> = self.layers[1].apply(&h1).into_iter().map(|v| leaky_relu(v, s)).collect();
        let mut z = self.layers[2].apply(&h2);
        self.apply_head(&mut z);
        Ok(z)
    }

    fn apply_head(&self, z: &mut [f64]) {
        match self.head {
            Head::Softmax => softmax_in_place(z),
            Head::LeakyRelu => z.iter_mut().for_each(|v| *v = leaky_relu(*v, self.leaky_slope)),
        }
    }

    /// Batched forward pass over the rows of `x`.
    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> MlpTrace {
        let s = self.leaky_slope;
        let pre1 = self.layers[0].apply_batch(x);
        let act1 = pre1.mapv(|v| leaky_relu(v, s));
        let pre2 = self.layers[1].apply_batch(act1.view());
        let act2 = pre2.mapv(|v| leaky_relu(v, s));
        let pre3 = self.layers[2].apply_batch(act2.view());
        let mut out = pre3.clone();
        for mut row in out.rows_mut() {
            self.apply_head(row.as_slice_mut().expect("standard layout"));
        }
        MlpTrace {
            pre1,
            act1,
            pre2,
            act2,
            pre3,
            out,
        }
    }

    /// Accumulates into `grad` the parameter gradient for upstream
    /// gradient `d_out` (w.r.t. the head output).
    pub fn backward_batch(
        &self,
        x: ArrayView2<'_, f64>,
        trace: &MlpTrace,
        d_out: ArrayView2<'_, f64>,
        grad: &mut Mlp,
    ) {
        let s = self.leaky_slope;
        let mut dz = d_out.to_owned();
        match self.head {
            Head::Softmax => {
                // J^T g = f * (g - <f, g>)
                for (mut g, f) in dz.rows_mut().into_iter().zip(trace.out.rows()) {
                    let dot: f64 = g.iter().zip(f.iter()).map(|(a, b)| a * b).sum();
                    g.iter_mut().zip(f.iter()).for_each(|(gi, fi)| *gi = fi * (*gi - dot));
                }
            }
            Head::LeakyRelu => {
                dz.zip_mut_with(&trace.pre3, |g, p| *g *= leaky_relu_grad(*p, s));
            }
        }

        let acts = [x, trace.act1.view(), trace.act2.view()];
        let pres = [&trace.pre1, &trace.pre2];
        let mut delta = dz;
        for layer in (0..3).rev() {
            let g = &mut grad.layers[layer];
            general_mat_mul(1.0, &delta.t(), &acts[layer], 1.0, &mut g.w_mut());
            for (b, col) in g.bias.iter_mut().zip(delta.axis_iter(Axis(1))) {
                *b += col.sum();
            }
            if layer > 0 {
                let mut prev = Array2::zeros((delta.nrows(), self.layers[layer].inputs));
                general_mat_mul(1.0, &delta, &self.layers[layer].w(), 0.0, &mut prev);
                prev.zip_mut_with(pres[layer - 1], |g, p| *g *= leaky_relu_grad(*p, s));
                delta = prev;
            }
        }
    }

    pub fn add_assign(&mut self, other: &Mlp) {
        for (a, b) in self.segments_mut().into_iter().zip(other.segments()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn batched_forward_matches_single() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for head in [Head::Softmax, Head::LeakyRelu] {
            let net = Mlp::init([9, 6, 5, 4], 0.01, head, &mut rng);
            let xs: Vec<f64> = (0..27).map(|_| rng.random_range(-1.0..1.0)).collect();
            let trace = net.forward_batch(ArrayView2::from_shape((3, 9), &xs).unwrap());
            for (i, row) in trace.out.rows().into_iter().enumerate() {
                let single = net.forward(&xs[i * 9..(i + 1) * 9]).unwrap();
                for (a, b) in row.iter().zip(&single) {
                    assert!((a - b).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let mut z = vec![1000.0, 1000.0, -1000.0];
        softmax_in_place(&mut z);
        assert_eq!(z, vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn wrong_input_length() {
        let net = Mlp::zeros([9, 4, 4, 2], 0.01, Head::Softmax);
        assert!(matches!(
            net.forward(&[0.0; 4]),
            Err(Error::DimensionMismatch { expected: 9, actual: 4 })
        ));
    }
}
