use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis, Zip};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signature::LogSigStream;

/// ReLU network on standardized log-signature coordinates.
///
/// `layers = [input, q_1, …, q_I, 1]`; weights are stored flat, layer by
/// layer, each as a row-major `out × in` matrix followed by its bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeepPolicy {
    pub width: usize,
    pub level: usize,
    pub layers: Vec<usize>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub weights: Vec<f64>,
}

fn param_count(layers: &[usize]) -> usize {
    layers.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
}

impl DeepPolicy {
    /// He-uniform hidden layers, output weights in `±1e−2`, zero biases.
    pub fn new(width: usize, level: usize, input_dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden.contains(&0) {
            return Err(Error::Config(format!("empty layer in {input_dim} → {hidden:?}")));
        }
        let mut layers = vec![input_dim];
        layers.extend_from_slice(hidden);
        layers.push(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(param_count(&layers));
        let n_layers = layers.len() - 1;
        for (k, w) in layers.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = if k + 1 == n_layers { 1e-2 } else { (6.0 / fan_in as f64).sqrt() };
            weights.extend((0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)));
            weights.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(DeepPolicy { width, level, layers, mean: vec![0.0; input_dim], std: vec![1.0; input_dim], weights })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0]
    }

    pub fn hidden(&self) -> &[usize] {
        &self.layers[1..self.layers.len() - 1]
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.input_dim();
        if self.layers.len() < 2 || *self.layers.last().unwrap() != 1 {
            return Err(Error::Config(format!("layers {:?} must end in a scalar output", self.layers)));
        }
        if self.mean.len() != d || self.std.len() != d {
            return Err(Error::Dimension("normalization constants do not match the input".into()));
        }
        if self.weights.len() != param_count(&self.layers) {
            return Err(Error::Dimension(format!(
                "{} weights for layers {:?}, expected {}",
                self.weights.len(),
                self.layers,
                param_count(&self.layers)
            )));
        }
        Ok(())
    }

    /// Per-coordinate mean and standard deviation of `x`; constant coordinates keep scale 1.
    pub fn fit_normalization(&mut self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() || x.nrows() == 0 {
            return Err(Error::Dimension(format!("normalizing {:?} for input {}", x.dim(), self.input_dim())));
        }
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let std = x.std_axis(Axis(0), 0.0);
        self.mean = mean.to_vec();
        self.std = std.iter().map(|&s| if s > 1e-12 * (1.0 + s.abs()) && s.is_finite() { s } else { 1.0 }).collect();
        Ok(())
    }

    fn layer(&self, k: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let off: usize = self.layers[..=k].windows(2).map(|w| w[1] * (w[0] + 1)).sum();
        let (i, o) = (self.layers[k], self.layers[k + 1]);
        let w = ArrayView2::from_shape((o, i), &self.weights[off..off + o * i]).expect("layer shape");
        let b = ArrayView1::from(&self.weights[off + o * i..off + o * (i + 1)]);
        (w, b)
    }

    fn offsets(&self) -> Vec<usize> {
        let mut off = 0;
        self.layers
            .windows(2)
            .map(|w| {
                let o = off;
                off += w[1] * (w[0] + 1);
                o
            })
            .collect()
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Dimension(format!("input has {} coordinates, network expects {}", x.ncols(), self.input_dim())));
        }
        Ok(())
    }

    /// Activations of every layer for the rows of `x`, into `ws.h[..]`; returns the row count.
    fn forward_block(&self, x: ArrayView2<f64>, ws: &mut Workspace) -> usize {
        let n = x.nrows();
        let n_layers = self.layers.len() - 1;
        {
            let mut h0 = ws.h[0].slice_mut(s![..n, ..]);
            h0.assign(&x);
            for mut row in h0.rows_mut() {
                for ((v, m), sd) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                    *v = (*v - m) / sd;
                }
            }
        }
        for k in 0..n_layers {
            let (w, b) = self.layer(k);
            let (lo, hi) = ws.h.split_at_mut(k + 1);
            let h_in = lo[k].slice(s![..n, ..]);
            let mut z = hi[0].slice_mut(s![..n, ..]);
            for mut row in z.rows_mut() {
                row.assign(&b);
            }
            general_mat_mul(1.0, &h_in, &w.t(), 1.0, &mut z);
            if k + 1 < n_layers {
                z.mapv_inplace(|v| v.max(0.0));
            }
        }
        n
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.check_input(&x)?;
        let mut ws = Workspace::new(&self.layers);
        let mut out = Array1::zeros(x.nrows());
        for (i, xb) in x.axis_chunks_iter(Axis(0), BLOCK).enumerate() {
            let n = self.forward_block(xb, &mut ws);
            out.slice_mut(s![i * BLOCK..i * BLOCK + n]).assign(&ws.h.last().unwrap().slice(s![..n, 0]));
        }
        Ok(out)
    }

    /// One value per grid point of the stream.
    pub fn eval(&self, stream: &LogSigStream) -> Result<Vec<f64>> {
        Ok(self.forward(stream.coords.view())?.to_vec())
    }

    /// Accumulate `Σ_rows dθ · ∂θ/∂weights` into `grad`, recomputing activations block by block.
    pub(crate) fn backward(&self, x: ArrayView2<f64>, dtheta: ArrayView1<f64>, grad: &mut [f64]) -> Result<()> {
        self.check_input(&x)?;
        let n_layers = self.layers.len() - 1;
        let offsets = self.offsets();
        let mut ws = Workspace::new(&self.layers);
        for (xb, db) in x.axis_chunks_iter(Axis(0), BLOCK).zip(dtheta.axis_chunks_iter(Axis(0), BLOCK)) {
            let n = self.forward_block(xb, &mut ws);
            ws.delta[n_layers].slice_mut(s![..n, 0]).assign(&db);
            for k in (0..n_layers).rev() {
                let (w, _) = self.layer(k);
                let (o, i) = (self.layers[k + 1], self.layers[k]);
                let (dlo, dhi) = ws.delta.split_at_mut(k + 1);
                let delta = dhi[0].slice(s![..n, ..]);
                let h_in = ws.h[k].slice(s![..n, ..]);
                let g = &mut grad[offsets[k]..offsets[k] + o * (i + 1)];
                let (gw, gb) = g.split_at_mut(o * i);
                let mut gw = ArrayViewMut2::from_shape((o, i), gw).expect("layer shape");
                general_mat_mul(1.0, &delta.t(), &h_in, 1.0, &mut gw);
                for row in delta.rows() {
                    for (a, d) in gb.iter_mut().zip(row) {
                        *a += d;
                    }
                }
                if k > 0 {
                    let mut d = dlo[k].slice_mut(s![..n, ..]);
                    general_mat_mul(1.0, &delta, &w, 0.0, &mut d);
                    Zip::from(&mut d).and(&h_in).for_each(|d, &h| {
                        if h <= 0.0 {
                            *d = 0.0;
                        }
                    });
                }
            }
        }
        Ok(())
    }
}

/// Rows per block; keeps every layer's activations in cache.
const BLOCK: usize = 256;

struct Workspace {
    /// `h[0]` standardized input, `h[k]` output of layer `k`.
    h: Vec<Array2<f64>>,
    /// `delta[k]` gradient with respect to the pre-activation of layer `k`'s output.
    delta: Vec<Array2<f64>>,
}

impl Workspace {
    fn new(layers: &[usize]) -> Self {
        let bufs = || layers.iter().map(|&d| Array2::zeros((BLOCK, d))).collect();
        Workspace { h: bufs(), delta: bufs() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn reference_forward(p: &DeepPolicy, x: &[f64]) -> f64 {
        // plain loops, independent of the matrix code
        let mut h: Vec<f64> = x.iter().zip(&p.mean).zip(&p.std).map(|((v, m), s)| (v - m) / s).collect();
        let mut off = 0;
        let n = p.layers.len() - 1;
        for k in 0..n {
            let (i, o) = (p.layers[k], p.layers[k + 1]);
            let mut next = vec![0.0; o];
            for r in 0..o {
                let mut acc = p.weights[off + o * i + r];
                for c in 0..i {
                    acc += p.weights[off + r * i + c] * h[c];
                }
                next[r] = if k + 1 < n { acc.max(0.0) } else { acc };
            }
            off += o * (i + 1);
            h = next;
        }
        h[0]
    }

    #[test]
    fn matches_reference_evaluation() {
        let mut p = DeepPolicy::new(2, 3, 5, &[7, 6], 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for w in p.weights.iter_mut() {
            *w = rng.random_range(-1.0..1.0);
        }
        p.mean = vec![0.1, -0.2, 0.3, 0.0, 1.0];
        p.std = vec![1.0, 2.0, 0.5, 3.0, 1.5];
        let x = Array2::from_shape_fn((10, 5), |_| rng.random_range(-2.0..2.0));
        let out = p.forward(x.view()).unwrap();
        for r in 0..10 {
            let want = reference_forward(&p, x.row(r).as_slice().unwrap());
            assert!((out[r] - want).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_weights_give_output_bias() {
        let mut p = DeepPolicy::new(2, 2, 3, &[4, 4], 0).unwrap();
        p.weights.iter_mut().for_each(|w| *w = 0.0);
        *p.weights.last_mut().unwrap() = 0.7;
        let out = p.forward(array![[1.0, 2.0, 3.0], [-4.0, 0.0, 9.0]].view()).unwrap();
        assert_eq!(out.to_vec(), vec![0.7, 0.7]);
    }

    #[test]
    fn single_layer_is_affine() {
        let mut p = DeepPolicy::new(2, 2, 3, &[], 0).unwrap();
        p.weights = vec![1.0, -2.0, 0.5, 0.25];
        let x = array![[1.0, 1.0, 2.0], [0.0, 3.0, -1.0]];
        let out = p.forward(x.view()).unwrap();
        assert_eq!(out.to_vec(), vec![1.0 - 2.0 + 1.0 + 0.25, -6.0 - 0.5 + 0.25]);
    }

    #[test]
    fn initialization() {
        let p = DeepPolicy::new(2, 3, 5, &[35, 35], 3).unwrap();
        p.validate().unwrap();
        assert_eq!(p.weights.len(), 35 * 6 + 35 * 36 + 36);
        let (w0, b0) = p.layer(0);
        assert!(w0.iter().all(|w| w.abs() < (6.0f64 / 5.0).sqrt()));
        assert!(b0.iter().all(|&b| b == 0.0));
        let (w2, b2) = p.layer(2);
        assert!(w2.iter().all(|w| w.abs() < 1e-2));
        assert_eq!(b2[0], 0.0);
        assert_eq!(DeepPolicy::new(2, 3, 5, &[35, 35], 3).unwrap(), p);
        assert!(DeepPolicy::new(2, 3, 5, &[0], 3).is_err());
    }

    #[test]
    fn normalization_and_dimension_checks() {
        let mut p = DeepPolicy::new(2, 1, 2, &[3], 0).unwrap();
        let x = array![[0.0, 5.0], [2.0, 5.0], [4.0, 5.0]];
        p.fit_normalization(x.view()).unwrap();
        assert_eq!(p.mean, vec![2.0, 5.0]);
        assert!((p.std[0] - (8.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(p.std[1], 1.0);
        assert!(p.forward(array![[1.0, 2.0, 3.0]].view()).is_err());
        let mut bad = p.clone();
        bad.weights.pop();
        assert!(bad.validate().is_err());
    }
}
