//! Stopping policies (linear functionals of the signature and ReLU networks on
//! the log-signature), the smoothed-payoff loss and its gradient, and training.

mod deep;
mod features;
mod linear;
mod train;

use std::io::{Read, Write};
use std::ops::Range;

use ndarray::{s, Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::PathBatch;
use crate::signature::LyndonBasis;
use crate::stopping::{pairwise_sum, smoothed_path_value, StoppingPolicy, ZDistribution};

pub use deep::DeepPolicy;
pub use features::{
    log_signature_features, log_signature_features_range, signature_features, signature_features_range, Features,
};
pub use linear::LinearPolicy;
pub use train::{train, EpochRecord, TrainConfig, TrainOutcome};

/// Paths per chunk when a policy is evaluated on a large batch.
const EVAL_CHUNK: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Policy {
    Linear(LinearPolicy),
    Deep(DeepPolicy),
}

impl Policy {
    pub fn width(&self) -> usize {
        match self {
            Policy::Linear(p) => p.width,
            Policy::Deep(p) => p.width,
        }
    }

    pub fn level(&self) -> usize {
        match self {
            Policy::Linear(p) => p.level,
            Policy::Deep(p) => p.level,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Policy::Linear(_) => "linear",
            Policy::Deep(_) => "deep",
        }
    }

    pub fn weights(&self) -> &[f64] {
        match self {
            Policy::Linear(p) => &p.weights,
            Policy::Deep(p) => &p.weights,
        }
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        match self {
            Policy::Linear(p) => &mut p.weights,
            Policy::Deep(p) => &mut p.weights,
        }
    }

    /// Inputs this policy reads for the given paths of `batch`.
    pub fn features(&self, batch: &PathBatch, paths: Range<usize>) -> Result<Features> {
        if 1 + batch.dim() != self.width() {
            return Err(Error::Dimension(format!("batch width {} vs policy width {}", 1 + batch.dim(), self.width())));
        }
        match self {
            Policy::Linear(p) => signature_features_range(batch, paths, p.level),
            Policy::Deep(p) => log_signature_features_range(batch, paths, &LyndonBasis::new(p.width, p.level)),
        }
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        match self {
            Policy::Linear(p) => {
                if x.ncols() != p.weights.len() {
                    return Err(Error::Dimension(format!("{} features for {} weights", x.ncols(), p.weights.len())));
                }
                Ok(p.forward(x))
            }
            Policy::Deep(p) => p.forward(x),
        }
    }

    pub(crate) fn backward(&self, x: ArrayView2<f64>, dtheta: ndarray::ArrayView1<f64>, grad: &mut [f64]) -> Result<()> {
        match self {
            Policy::Linear(p) => {
                p.backward(x, dtheta, grad);
                Ok(())
            }
            Policy::Deep(p) => p.backward(x, dtheta, grad),
        }
    }

    /// `θ` on the payoff grid, `M × (J+1)`, computed in chunks of paths.
    pub fn theta(&self, batch: &PathBatch) -> Result<Array2<f64>> {
        let points = batch.grid.steps + 1;
        let mut out = Array2::zeros((batch.len(), points));
        for start in (0..batch.len()).step_by(EVAL_CHUNK) {
            let end = (start + EVAL_CHUNK).min(batch.len());
            let f = self.features(batch, start..end)?;
            let t = self.forward(f.data.view())?;
            out.slice_mut(s![start..end, ..]).assign(&t.into_shape_with_order((end - start, points)).expect("rows per path"));
        }
        Ok(out)
    }
}

/// `−mean_m v_m` and its gradient in the policy weights, where `v_m` is the
/// smoothed payoff of path `m`. `x` holds `paths · (J+1)` feature rows.
pub fn loss_and_gradient(policy: &Policy, x: ArrayView2<f64>, y: ArrayView2<f64>, z: ZDistribution) -> Result<(f64, Vec<f64>)> {
    let (paths, points) = y.dim();
    if x.nrows() != paths * points {
        return Err(Error::Dimension(format!("{} feature rows for {paths}×{points} payoffs", x.nrows())));
    }
    let theta = policy.forward(x)?;
    let theta = theta.into_shape_with_order((paths, points)).expect("rows per path");
    let mut values = Vec::with_capacity(paths);
    let mut dtheta = Array2::<f64>::zeros((paths, points));
    let scale = -1.0 / paths as f64;
    for m in 0..paths {
        let (yr, tr) = (y.row(m), theta.row(m));
        values.push(smoothed_path_value(yr, tr, z));
        // A_j = Σ_{i≤j} θ_i²;  ∂v/∂θ_i = 2θ_i Σ_{j=i}^{J−1} G'(A_j) ΔY_j
        let mut acc = Vec::with_capacity(points);
        let mut a = 0.0;
        for j in 0..points - 1 {
            a += tr[j] * tr[j];
            acc.push(a);
        }
        let mut r = 0.0;
        for j in (0..points - 1).rev() {
            r += z.survival_derivative(acc[j]) * (yr[j + 1] - yr[j]);
            dtheta[[m, j]] = scale * 2.0 * tr[j] * r;
        }
    }
    let loss = -pairwise_sum(&values) / paths as f64;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss {loss} on {paths} paths")));
    }
    let mut grad = vec![0.0; policy.weights().len()];
    let flat = dtheta.into_shape_with_order(paths * points).expect("contiguous");
    policy.backward(x, flat.view(), &mut grad)?;
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!("non-finite gradient in weight {i}")));
    }
    Ok((loss, grad))
}

/// Loss over a whole feature set, evaluated in chunks.
pub fn dataset_loss(policy: &Policy, features: &Features, y: ArrayView2<f64>, z: ZDistribution) -> Result<f64> {
    let points = features.points;
    let mut values = Vec::with_capacity(features.paths);
    for start in (0..features.paths).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(features.paths);
        let t = policy.forward(features.data.slice(s![start * points..end * points, ..]))?;
        let t = t.into_shape_with_order((end - start, points)).expect("rows per path");
        for (k, tr) in t.rows().into_iter().enumerate() {
            values.push(smoothed_path_value(y.row(start + k), tr, z));
        }
    }
    let loss = -pairwise_sum(&values) / features.paths as f64;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss {loss} on {} paths", features.paths)));
    }
    Ok(loss)
}

/// A policy together with the seed of the data it was trained on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedPolicy {
    #[serde(flatten)]
    pub policy: Policy,
    pub training_seed: Option<u64>,
}

impl FittedPolicy {
    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        let p: FittedPolicy = serde_json::from_reader(r)?;
        match &p.policy {
            Policy::Deep(d) => d.validate()?,
            Policy::Linear(l) => {
                if l.weights.len() != crate::free_tensor::tensor_dim(l.width, l.level) {
                    return Err(Error::Dimension("linear weights do not match width and level".into()));
                }
            }
        }
        Ok(p)
    }
}

impl StoppingPolicy for FittedPolicy {
    fn theta(&self, batch: &PathBatch) -> Result<Array2<f64>> {
        self.policy.theta(batch)
    }

    fn training_seed(&self) -> Option<u64> {
        self.training_seed
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{sample_fbm, GridSpec};
    use crate::shuffle::DualPoly;
    use crate::signature::dims;
    use crate::stopping::{lower_bound, smoothed_value};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy() -> PathBatch {
        sample_fbm(0.3, GridSpec::uniform(1.0, 6).unwrap(), 5, 21).unwrap()
    }

    fn fd_check(policy: &Policy, batch: &PathBatch, z: ZDistribution) {
        let f = policy.features(batch, 0..batch.len()).unwrap();
        let (_, grad) = loss_and_gradient(policy, f.data.view(), batch.y.view(), z).unwrap();
        let h = 1e-5;
        for i in 0..grad.len() {
            let mut p = policy.clone();
            p.weights_mut()[i] += h;
            let lp = loss_and_gradient(&p, f.data.view(), batch.y.view(), z).unwrap().0;
            p.weights_mut()[i] -= 2.0 * h;
            let lm = loss_and_gradient(&p, f.data.view(), batch.y.view(), z).unwrap().0;
            let fd = (lp - lm) / (2.0 * h);
            let err = (fd - grad[i]).abs() / grad[i].abs().max(1e-6);
            assert!(err < 1e-4, "weight {i}: fd {fd} vs {}", grad[i]);
        }
    }

    fn random_deep(seed: u64) -> Policy {
        let (_, eta) = dims(2, 3);
        let mut d = DeepPolicy::new(2, 3, eta, &[6, 5], seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // output weights large enough that θ² matters
        d.weights.iter_mut().for_each(|w| *w = rng.random_range(-0.8..0.8));
        Policy::Deep(d)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let b = toy();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut lin = LinearPolicy::zero(2, 3);
        lin.weights.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
        for z in [ZDistribution::Exp1, ZDistribution::LogLogistic] {
            fd_check(&Policy::Linear(lin.clone()), &b, z);
            fd_check(&random_deep(4), &b, z);
        }
    }

    #[test]
    fn loss_is_negative_smoothed_value() {
        let b = toy();
        for p in [random_deep(7), Policy::Linear(LinearPolicy::from_dual(&DualPoly::parse(2, "0.3*∅ + 2*2").unwrap(), 2).unwrap())] {
            let f = p.features(&b, 0..5).unwrap();
            let (loss, _) = loss_and_gradient(&p, f.data.view(), b.y.view(), ZDistribution::Exp1).unwrap();
            let v = smoothed_value(&b, p.theta(&b).unwrap().view(), ZDistribution::Exp1).unwrap();
            assert!((loss + v.value).abs() < 1e-13);
            assert!((dataset_loss(&p, &f, b.y.view(), ZDistribution::Exp1).unwrap() - loss).abs() < 1e-13);
        }
    }

    #[test]
    fn martingale_is_stationary_at_zero() {
        let b = sample_fbm(0.5, GridSpec::uniform(1.0, 10).unwrap(), 20_000, 3).unwrap();
        let p = Policy::Linear(LinearPolicy::zero(2, 2));
        let f = p.features(&b, 0..b.len()).unwrap();
        let (loss, grad) = loss_and_gradient(&p, f.data.view(), b.y.view(), ZDistribution::Exp1).unwrap();
        // θ ≡ 0 never stops: loss is −mean(Y_J), and every θ-derivative carries a factor θ
        let se = b.y.column(10).std(0.0) / (b.len() as f64).sqrt();
        assert!(loss.abs() < 4.0 * se);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn z_distributions_differ() {
        let b = toy();
        let p = random_deep(5);
        let f = p.features(&b, 0..5).unwrap();
        let a = loss_and_gradient(&p, f.data.view(), b.y.view(), ZDistribution::Exp1).unwrap().0;
        let c = loss_and_gradient(&p, f.data.view(), b.y.view(), ZDistribution::LogLogistic).unwrap().0;
        assert!((a - c).abs() > 1e-6);
    }

    #[test]
    fn theta_chunks_agree_with_single_pass() {
        let b = sample_fbm(0.2, GridSpec::uniform(1.0, 3).unwrap(), EVAL_CHUNK + 17, 8).unwrap();
        let p = random_deep(1);
        let t = p.theta(&b).unwrap();
        let f = p.features(&b, 0..b.len()).unwrap();
        let all = p.forward(f.data.view()).unwrap();
        assert_eq!(t.as_slice().unwrap(), all.as_slice().unwrap());
    }

    #[test]
    fn checkpoint_round_trip() {
        let fitted = FittedPolicy { policy: random_deep(9), training_seed: Some(77) };
        let mut buf = Vec::new();
        fitted.write_json(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"kind\": \"deep\""));
        assert_eq!(FittedPolicy::read_json(&buf[..]).unwrap(), fitted);
        let lin = FittedPolicy { policy: Policy::Linear(LinearPolicy::zero(2, 2)), training_seed: None };
        let mut buf = Vec::new();
        lin.write_json(&mut buf).unwrap();
        assert_eq!(FittedPolicy::read_json(&buf[..]).unwrap(), lin);
        let mut broken: serde_json::Value = serde_json::from_str(&text).unwrap();
        broken["layers"][0] = 4.into();
        assert!(FittedPolicy::read_json(broken.to_string().as_bytes()).is_err());
    }

    #[test]
    fn lower_bound_refuses_training_data() {
        let b = toy();
        let fitted = FittedPolicy { policy: random_deep(2), training_seed: Some(b.seed) };
        assert!(matches!(lower_bound(&b, &fitted, ZDistribution::Exp1), Err(Error::Consistency(_))));
        let fresh = sample_fbm(0.3, GridSpec::uniform(1.0, 6).unwrap(), 5, 22).unwrap();
        assert!(lower_bound(&fresh, &fitted, ZDistribution::Exp1).is_ok());
    }
}
