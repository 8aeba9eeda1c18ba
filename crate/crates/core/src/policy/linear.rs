use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::free_tensor::{index_word, tensor_dim, word_index};
use crate::shuffle::DualPoly;
use crate::signature::SigStream;

/// `θ_t = ⟨l, S(X̂)_{0,t}⟩` with `l` stored densely over all words of length `≤ level`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearPolicy {
    pub width: usize,
    pub level: usize,
    pub weights: Vec<f64>,
}

impl LinearPolicy {
    pub fn zero(width: usize, level: usize) -> Self {
        LinearPolicy { width, level, weights: vec![0.0; tensor_dim(width, level)] }
    }

    pub fn from_dual(l: &DualPoly, level: usize) -> Result<Self> {
        if l.deg() > level {
            return Err(Error::Truncation { degree: l.deg(), level });
        }
        let mut p = LinearPolicy::zero(l.width(), level);
        for (w, c) in l.terms() {
            p.weights[word_index(l.width(), w.letters())] = c;
        }
        Ok(p)
    }

    pub fn to_dual(&self) -> DualPoly {
        let terms = self
            .weights
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0.0)
            .map(|(i, &c)| (index_word(self.width, i), c));
        DualPoly::from_terms(self.width, terms).expect("words fit the width")
    }

    /// One value per signature in the stream.
    pub fn eval(&self, stream: &SigStream) -> Result<Vec<f64>> {
        if stream.width != self.width {
            return Err(Error::Dimension(format!("stream width {} vs policy width {}", stream.width, self.width)));
        }
        if stream.level < self.level {
            return Err(Error::Truncation { degree: self.level, level: stream.level });
        }
        let n = self.weights.len();
        Ok(stream.sigs.iter().map(|s| s.coeffs()[..n].iter().zip(&self.weights).map(|(a, b)| a * b).sum()).collect())
    }

    /// Rows of `x` are signature coefficients.
    pub(crate) fn forward(&self, x: ArrayView2<f64>) -> Array1<f64> {
        x.dot(&ArrayView1::from(&self.weights))
    }

    pub(crate) fn backward(&self, x: ArrayView2<f64>, dtheta: ArrayView1<f64>, grad: &mut [f64]) {
        let g = x.t().dot(&dtheta);
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
}
