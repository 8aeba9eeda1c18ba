//! Seedable Gaussian path samplers and payoff maps.
//!
//! Every model here is a linear image `x = m + F ξ` of a standard normal
//! vector `ξ`, so all samplers share one factor-times-noise kernel. Path `i`
//! of seed `s` always uses the ChaCha stream `(s, i)`; a batch can be drawn
//! in any chunking and comes out identical.

pub mod bessel;

use std::io::Write;

use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Payoff grid `t_j = T j / J` and a simulation grid refining it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub horizon: f64,
    pub steps: usize,
    pub fine_steps: usize,
}

impl GridSpec {
    pub fn new(horizon: f64, steps: usize, fine_steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 || fine_steps < steps || fine_steps % steps != 0 {
            return Err(Error::Config(format!("fine steps {fine_steps} must be a positive multiple of steps {steps}")));
        }
        Ok(GridSpec { horizon, steps, fine_steps })
    }

    /// `J` steps on `[0, T]` with no refinement.
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        Self::new(horizon, steps, steps)
    }

    pub fn stride(&self) -> usize {
        self.fine_steps / self.steps
    }

    pub fn fine_times(&self) -> Vec<f64> {
        (0..=self.fine_steps).map(|i| self.horizon * i as f64 / self.fine_steps as f64).collect()
    }

    pub fn payoff_times(&self) -> Vec<f64> {
        (0..=self.steps).map(|j| self.horizon * j as f64 / self.steps as f64).collect()
    }
}

/// How the gamma-kernel correlation is evaluated. `Damped` carries the extra
/// `e^{−λh}` factor and is what the reference European prices correspond to;
/// `Kernel` is the exact autocorrelation of the moving-average kernel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationForm {
    #[default]
    Damped,
    Kernel,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovModel {
    /// Brownian motion.
    Bm,
    /// Fractional Brownian motion with Hurst parameter `H ∈ (0, 1]`.
    Fbm { hurst: f64 },
    /// `Ỹ_j = (ξ_j − ξ_0)/√2` on the payoff grid.
    H0,
    /// Stationary gamma-kernel Ornstein-Uhlenbeck log-price, started at `x0`.
    GammaOu {
        alpha: f64,
        lambda: f64,
        sigma: f64,
        x0: f64,
        #[serde(default)]
        form: CorrelationForm,
    },
}

impl CovModel {
    /// Number of space coordinates; every model here is scalar.
    pub fn dim(&self) -> usize {
        1
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            CovModel::Bm | CovModel::H0 => Ok(()),
            CovModel::Fbm { hurst } if hurst > 0.0 && hurst <= 1.0 => Ok(()),
            CovModel::Fbm { hurst } => Err(Error::Config(format!("Hurst parameter {hurst} outside (0, 1]"))),
            CovModel::GammaOu { alpha, lambda, sigma, x0, .. } => {
                if !(alpha > -0.5 && alpha < 0.5) {
                    return Err(Error::Config(format!("alpha {alpha} outside (-1/2, 1/2)")));
                }
                if !(lambda > 0.0 && sigma > 0.0 && x0.is_finite()) {
                    return Err(Error::Config("lambda and sigma must be positive".into()));
                }
                Ok(())
            }
        }
    }
}

/// `½(s^{2H} + t^{2H} − |t−s|^{2H})` on the given times.
pub fn fbm_covariance(hurst: f64, times: &[f64]) -> Result<Array2<f64>> {
    if !(hurst > 0.0 && hurst <= 1.0) {
        return Err(Error::Domain(format!("Hurst parameter {hurst} outside (0, 1]")));
    }
    if times.iter().any(|&t| !(t >= 0.0)) {
        return Err(Error::Domain("times must be non-negative".into()));
    }
    let h2 = 2.0 * hurst;
    let n = times.len();
    Ok(Array2::from_shape_fn((n, n), |(i, j)| {
        let (s, t) = (times[i], times[j]);
        0.5 * (s.powf(h2) + t.powf(h2) - (t - s).abs().powf(h2))
    }))
}

/// Autocorrelation of the gamma-kernel process at lag `h ≥ 0`.
pub fn gamma_ou_correlation(alpha: f64, lambda: f64, h: f64, form: CorrelationForm) -> Result<f64> {
    if !(alpha > -0.5 && alpha < 0.5) || !(lambda > 0.0) {
        return Err(Error::Numeric(format!("invalid gamma-kernel parameters alpha={alpha} lambda={lambda}")));
    }
    let h = h.abs();
    if h == 0.0 {
        return Ok(1.0);
    }
    let nu = alpha + 0.5;
    let x = lambda * h;
    let matern = 2f64.powf(1.0 - nu) / libm::tgamma(nu) * x.powf(nu) * bessel::bessel_k(nu, x)?;
    Ok(match form {
        CorrelationForm::Damped => (-x).exp() * matern,
        CorrelationForm::Kernel => matern,
    })
}

/// `σ² Corr(|t_i − t_j|)`.
pub fn gamma_ou_covariance(alpha: f64, lambda: f64, sigma: f64, times: &[f64], form: CorrelationForm) -> Result<Array2<f64>> {
    let n = times.len();
    let mut c = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let v = sigma * sigma * gamma_ou_correlation(alpha, lambda, times[i] - times[j], form)?;
            c[[i, j]] = v;
            c[[j, i]] = v;
        }
    }
    Ok(c)
}

fn try_cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let row_j = l.row(j).to_owned();
        let d = a[[j, j]] - row_j.slice(s![..j]).dot(&row_j.slice(s![..j]));
        if !(d > 0.0) {
            return None;
        }
        let ljj = d.sqrt();
        l[[j, j]] = ljj;
        for i in j + 1..n {
            let v = (a[[i, j]] - l.row(i).slice(s![..j]).dot(&row_j.slice(s![..j]))) / ljj;
            l[[i, j]] = v;
        }
    }
    Some(l)
}

/// Lower Cholesky factor. On failure the diagonal is raised once by
/// `1e−12 · max diag`; a second failure is an error.
pub fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension("Cholesky needs a square matrix".into()));
    }
    if let Some(l) = try_cholesky(a) {
        return Ok(l);
    }
    let jitter = 1e-12 * a.diag().iter().fold(0.0f64, |m, &v| m.max(v));
    let mut b = a.clone();
    b.diag_mut().mapv_inplace(|v| v + jitter);
    try_cholesky(&b).ok_or_else(|| Error::Model("covariance is not positive definite even after jitter".into()))
}

/// Simulated trajectories: `x` on the fine grid (`M × (J'+1) × d`) and the
/// payoff `y` on the payoff grid (`M × (J+1)`).
#[derive(Clone, Debug, PartialEq)]
pub struct PathBatch {
    pub grid: GridSpec,
    pub x: Array3<f64>,
    pub y: Array2<f64>,
    pub seed: u64,
    /// Index of the first path, so chunks of one stream stay distinguishable.
    pub first_path: u64,
}

impl PathBatch {
    pub fn len(&self) -> usize {
        self.y.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.len_of(Axis(2))
    }

    /// Values of path `m` (`(J'+1) × d`).
    pub fn path(&self, m: usize) -> ArrayView2<'_, f64> {
        self.x.index_axis(Axis(0), m)
    }

    /// One row per path and fine time: `path,t,x_1..x_d,y`, with `y` left
    /// empty off the payoff grid.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.dim();
        let xs: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
        writeln!(w, "# seed={} first_path={}", self.seed, self.first_path)?;
        writeln!(w, "path,t,{},y", xs.join(","))?;
        let times = self.grid.fine_times();
        let stride = self.grid.stride();
        for m in 0..self.len() {
            for (i, t) in times.iter().enumerate() {
                let vals: Vec<String> = (0..d).map(|k| format!("{:e}", self.x[[m, i, k]])).collect();
                let y = if i % stride == 0 { format!("{:e}", self.y[[m, i / stride]]) } else { String::new() };
                writeln!(w, "{},{t},{},{y}", self.first_path + m as u64, vals.join(","))?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payoff {
    /// `Y = X`.
    Identity,
    /// `Y_t = e^{−rt}(K − exp(X_t))₊`.
    Put { strike: f64, rate: f64 },
}

/// `Y = X` on the payoff grid (`x` is `M × (J+1)`).
pub fn payoff_identity(x: ArrayView2<f64>) -> Array2<f64> {
    x.to_owned()
}

/// Discounted put on the price `exp(X)`.
pub fn payoff_put(x: ArrayView2<f64>, times: &[f64], strike: f64, rate: f64) -> Array2<f64> {
    let mut y = x.to_owned();
    for mut row in y.rows_mut() {
        for (v, &t) in row.iter_mut().zip(times) {
            *v = (-rate * t).exp() * (strike - v.exp()).max(0.0);
        }
    }
    y
}

impl Payoff {
    pub fn apply(&self, x: ArrayView2<f64>, times: &[f64]) -> Array2<f64> {
        match *self {
            Payoff::Identity => payoff_identity(x),
            Payoff::Put { strike, rate } => payoff_put(x, times, strike, rate),
        }
    }
}

/// A model compiled for one grid: `x(t_i) = mean + Σ_k factor[i,k] ξ_k`.
#[derive(Clone, Debug)]
pub struct Sampler {
    pub model: CovModel,
    pub payoff: Payoff,
    pub grid: GridSpec,
    mean: f64,
    /// `(J'+1) × r`.
    factor: Array2<f64>,
}

impl Sampler {
    pub fn new(model: CovModel, payoff: Payoff, grid: GridSpec) -> Result<Self> {
        model.validate()?;
        let times = grid.fine_times();
        let n = times.len();
        let (mean, factor) = match model {
            CovModel::Bm => Self::anchored_factor(&fbm_covariance(0.5, &times[1..])?)?,
            CovModel::Fbm { hurst } if hurst == 1.0 => {
                // rank one: X_t = t ξ
                (0.0, Array2::from_shape_fn((n, 1), |(i, _)| times[i]))
            }
            CovModel::Fbm { hurst } => Self::anchored_factor(&fbm_covariance(hurst, &times[1..])?)?,
            CovModel::H0 => {
                if grid.fine_steps != grid.steps {
                    return Err(Error::Config("the H=0 process lives on the payoff grid only".into()));
                }
                let r = std::f64::consts::FRAC_1_SQRT_2;
                let f = Array2::from_shape_fn((n, n), |(i, k)| match (i, k) {
                    (0, _) => 0.0,
                    (_, 0) => -r,
                    _ if i == k => r,
                    _ => 0.0,
                });
                (0.0, f)
            }
            CovModel::GammaOu { alpha, lambda, sigma, x0, form } => {
                // conditioning on X_0 = x0: drop the first noise coordinate
                let l = cholesky(&gamma_ou_covariance(alpha, lambda, sigma, &times, form)?)?;
                (x0, l.slice(s![.., 1..]).to_owned())
            }
        };
        Ok(Sampler { model, payoff, grid, mean, factor })
    }

    /// Zero first row, Cholesky factor of the remaining times below it.
    fn anchored_factor(cov: &Array2<f64>) -> Result<(f64, Array2<f64>)> {
        let l = cholesky(cov)?;
        let n = l.nrows() + 1;
        let mut f = Array2::zeros((n, n - 1));
        f.slice_mut(s![1.., ..]).assign(&l);
        Ok((0.0, f))
    }

    pub fn noise_dim(&self) -> usize {
        self.factor.ncols()
    }

    /// Paths `first .. first + count` of the stream with this `seed`.
    pub fn sample(&self, seed: u64, first: u64, count: usize) -> PathBatch {
        let r = self.noise_dim();
        let mut noise = Array2::<f64>::zeros((count, r));
        for (m, mut row) in noise.rows_mut().into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(first + m as u64);
            for v in row.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
        }
        let mut x = noise.dot(&self.factor.t());
        x.mapv_inplace(|v| v + self.mean);
        let stride = self.grid.stride();
        let coarse = x.slice(s![.., ..;stride]).to_owned();
        let y = self.payoff.apply(coarse.view(), &self.grid.payoff_times());
        let n = x.ncols();
        let x = x.as_standard_layout().into_owned().into_shape_with_order((count, n, 1)).expect("standard layout");
        PathBatch { grid: self.grid, x, y, seed, first_path: first }
    }
}

/// Fractional Brownian motion, payoff equal to the path.
pub fn sample_fbm(hurst: f64, grid: GridSpec, m: usize, seed: u64) -> Result<PathBatch> {
    Ok(Sampler::new(CovModel::Fbm { hurst }, Payoff::Identity, grid)?.sample(seed, 0, m))
}

/// The H=0 limit process on `J` steps of `[0, 1]`.
pub fn sample_h0(steps: usize, m: usize, seed: u64) -> Result<PathBatch> {
    Ok(Sampler::new(CovModel::H0, Payoff::Identity, GridSpec::uniform(1.0, steps)?)?.sample(seed, 0, m))
}

/// Parameters of the electricity put experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElectricityParams {
    pub alpha: f64,
    pub lambda: f64,
    pub sigma: f64,
    /// Initial log-price.
    pub x0: f64,
    pub rate: f64,
    pub strike: f64,
    #[serde(default)]
    pub form: CorrelationForm,
}

impl Default for ElectricityParams {
    fn default() -> Self {
        ElectricityParams { alpha: -0.4, lambda: 0.02, sigma: 0.2, x0: 100f64.ln(), rate: 0.05, strike: 100.0, form: CorrelationForm::Damped }
    }
}

impl ElectricityParams {
    pub fn model(&self) -> CovModel {
        CovModel::GammaOu { alpha: self.alpha, lambda: self.lambda, sigma: self.sigma, x0: self.x0, form: self.form }
    }

    pub fn payoff(&self) -> Payoff {
        Payoff::Put { strike: self.strike, rate: self.rate }
    }
}

/// Log-price paths started at `x0` with discounted put payoffs.
pub fn sample_electricity(params: &ElectricityParams, grid: GridSpec, m: usize, seed: u64) -> Result<PathBatch> {
    Ok(Sampler::new(params.model(), params.payoff(), grid)?.sample(seed, 0, m))
}
