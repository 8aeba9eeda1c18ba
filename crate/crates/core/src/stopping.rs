//! Randomized stopping: threshold distributions, the smoothed payoff
//! functional and the sampled-threshold estimator.

use ndarray::{ArrayView1, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Open01};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::PathBatch;

/// Accumulated `Σθ²` is capped here before `e^{−x}`; beyond it `G_Z` is 0
/// to double precision anyway.
pub const EXP_CAP: f64 = 700.0;

/// Law of the random threshold `Z`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZDistribution {
    /// `G_Z(x) = e^{−x}`.
    #[default]
    Exp1,
    /// `G_Z(x) = 1/(1+x)`.
    LogLogistic,
}

impl ZDistribution {
    /// Survival function `G_Z = 1 − F_Z`.
    pub fn survival(&self, x: f64) -> f64 {
        match self {
            ZDistribution::Exp1 => (-x.min(EXP_CAP)).exp(),
            ZDistribution::LogLogistic => 1.0 / (1.0 + x),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        1.0 - self.survival(x)
    }

    /// `G_Z'(x)`, consistent with the cap.
    pub fn survival_derivative(&self, x: f64) -> f64 {
        match self {
            ZDistribution::Exp1 if x >= EXP_CAP => 0.0,
            ZDistribution::Exp1 => -(-x).exp(),
            ZDistribution::LogLogistic => -1.0 / ((1.0 + x) * (1.0 + x)),
        }
    }

    pub fn sample<R: rand::Rng>(&self, rng: &mut R) -> f64 {
        match self {
            ZDistribution::Exp1 => Exp1.sample(rng),
            ZDistribution::LogLogistic => {
                let u: f64 = Open01.sample(rng);
                u / (1.0 - u)
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ZDistribution::Exp1 => "exp1",
            ZDistribution::LogLogistic => "loglogistic",
        }
    }
}

impl std::str::FromStr for ZDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exp1" | "exp" | "exponential" => Ok(ZDistribution::Exp1),
            "loglogistic" | "log-logistic" | "log_logistic" => Ok(ZDistribution::LogLogistic),
            other => Err(Error::Config(format!("unknown Z distribution {other:?}"))),
        }
    }
}

/// Monte-Carlo estimate with its standard error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopEvaluation {
    pub value: f64,
    pub std_error: f64,
    pub m: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_path_stop_index: Option<Vec<usize>>,
}

impl StopEvaluation {
    /// Mean and `sd/√M` of per-path values, reduced pairwise.
    pub fn from_samples(values: &[f64]) -> Self {
        let m = values.len();
        let mean = pairwise_sum(values) / m as f64;
        let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
        let var = if m > 1 { pairwise_sum(&sq) / (m - 1) as f64 } else { 0.0 };
        StopEvaluation { value: mean, std_error: (var / m as f64).sqrt(), m, per_path_stop_index: None }
    }

    /// `|a − b| ≤ k·sqrt(se_a² + se_b²)`.
    pub fn agrees_with(&self, other: &StopEvaluation, k: f64) -> bool {
        (self.value - other.value).abs() <= k * self.std_error.hypot(other.std_error)
    }
}

/// Pairwise (cascade) summation; the order is fixed by the input alone.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

fn check_shapes(y: &ArrayView2<f64>, theta: &ArrayView2<f64>) -> Result<()> {
    if y.dim() != theta.dim() {
        return Err(Error::Dimension(format!("payoffs {:?} vs policy values {:?}", y.dim(), theta.dim())));
    }
    if y.ncols() < 1 {
        return Err(Error::Dimension("empty payoff grid".into()));
    }
    Ok(())
}

/// `Ỹ_0 + Σ_{j<J} G_Z(Σ_{i≤j} θ_i²)(Ỹ_{j+1} − Ỹ_j)` for one path.
pub fn smoothed_path_value(y: ArrayView1<f64>, theta: ArrayView1<f64>, z: ZDistribution) -> f64 {
    let j_max = y.len() - 1;
    let mut acc = 0.0;
    let mut v = y[0];
    for j in 0..j_max {
        acc += theta[j] * theta[j];
        v += z.survival(acc) * (y[j + 1] - y[j]);
    }
    v
}

/// Per-path smoothed values for payoffs `y` and policy outputs `theta` (both `M × (J+1)`).
pub fn smoothed_values(y: ArrayView2<f64>, theta: ArrayView2<f64>, z: ZDistribution) -> Result<Vec<f64>> {
    check_shapes(&y, &theta)?;
    Ok(y.rows().into_iter().zip(theta.rows()).map(|(yr, tr)| smoothed_path_value(yr, tr, z)).collect())
}

/// The smoothed expected payoff of the randomized stopping time.
pub fn smoothed_value(batch: &PathBatch, theta: ArrayView2<f64>, z: ZDistribution) -> Result<StopEvaluation> {
    Ok(StopEvaluation::from_samples(&smoothed_values(batch.y.view(), theta, z)?))
}

/// First `j` with `Σ_{i≤j} θ_i² ≥ Z`, or `J`, with one `Z` per path drawn
/// from the ChaCha stream `(seed, first_path + m)`.
pub fn sample_stopping_indices(batch: &PathBatch, theta: ArrayView2<f64>, z: ZDistribution, seed: u64) -> Result<Vec<usize>> {
    check_shapes(&batch.y.view(), &theta)?;
    let j_max = theta.ncols() - 1;
    Ok(theta
        .rows()
        .into_iter()
        .enumerate()
        .map(|(m, row)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(batch.first_path + m as u64);
            let threshold = z.sample(&mut rng);
            let mut acc = 0.0;
            for (j, t) in row.iter().enumerate() {
                acc += t * t;
                if acc >= threshold {
                    return j;
                }
            }
            j_max
        })
        .collect())
}

/// Mean payoff at the sampled stopping indices.
pub fn sampled_value(batch: &PathBatch, theta: ArrayView2<f64>, z: ZDistribution, seed: u64) -> Result<StopEvaluation> {
    let idx = sample_stopping_indices(batch, theta, z, seed)?;
    let vals: Vec<f64> = idx.iter().enumerate().map(|(m, &j)| batch.y[[m, j]]).collect();
    let mut e = StopEvaluation::from_samples(&vals);
    e.per_path_stop_index = Some(idx);
    Ok(e)
}

/// Anything that maps a batch to policy values `θ` on the payoff grid.
pub trait StoppingPolicy {
    fn theta(&self, batch: &PathBatch) -> Result<ndarray::Array2<f64>>;

    /// Seed of the data the policy was fitted on, if any.
    fn training_seed(&self) -> Option<u64>;
}

/// Low-biased estimate: the smoothed value on paths the policy never saw.
pub fn lower_bound(batch_fresh: &PathBatch, policy: &dyn StoppingPolicy, z: ZDistribution) -> Result<StopEvaluation> {
    if policy.training_seed() == Some(batch_fresh.seed) {
        return Err(Error::Consistency(format!("evaluation seed {} was used for training", batch_fresh.seed)));
    }
    let theta = policy.theta(batch_fresh)?;
    smoothed_value(batch_fresh, theta.view(), z)
}
