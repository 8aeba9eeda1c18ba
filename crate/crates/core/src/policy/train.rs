use std::io::Write;

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{dataset_loss, loss_and_gradient, Features, Policy};
use crate::error::{Error, Result};
use crate::stopping::ZDistribution;

/// Adam on minibatches of paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    /// Upper bound on passes over the data.
    pub epochs: usize,
    /// Stop once the best loss of the last `patience` epochs improves on the
    /// earlier best by less than `min_improvement`.
    pub patience: usize,
    pub min_improvement: f64,
    pub train_paths: usize,
    pub seed: u64,
    pub z: ZDistribution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 3e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 1024,
            epochs: 30,
            patience: 5,
            min_improvement: 1e-4,
            train_paths: 1 << 16,
            seed: 1,
            z: ZDistribution::Exp1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [("lr", self.lr), ("eps", self.eps)];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config(format!("{name} must be positive, got {v}")));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if self.batch_size == 0 || self.train_paths == 0 || self.patience == 0 {
            return Err(Error::Config("batch size, training paths and patience must be positive".into()));
        }
        if !(self.min_improvement >= 0.0) {
            return Err(Error::Config("min_improvement must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Loss on the full training set after the epoch.
    pub loss: f64,
    /// Mean minibatch loss seen during the epoch (NaN for epoch 0).
    pub batch_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Weights with the lowest full training loss, the initial ones included.
    pub policy: Policy,
    pub best_epoch: usize,
    pub trace: Vec<EpochRecord>,
}

impl TrainOutcome {
    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,loss,batch_loss")?;
        for r in &self.trace {
            writeln!(w, "{},{},{}", r.epoch, r.loss, r.batch_loss)?;
        }
        Ok(())
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn step(&mut self, w: &mut [f64], g: &[f64], cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for i in 0..w.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            w[i] -= cfg.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + cfg.eps);
        }
    }
}

fn trace_summary(trace: &[EpochRecord]) -> String {
    trace.iter().map(|r| format!("{}:{:.6}", r.epoch, r.loss)).collect::<Vec<_>>().join(" ")
}

/// Minibatch Adam on the negative smoothed payoff.
pub fn train(policy_init: Policy, features: &Features, y: ArrayView2<f64>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if y.dim() != (features.paths, features.points) {
        return Err(Error::Dimension(format!("payoffs {:?} vs features for {}×{}", y.dim(), features.paths, features.points)));
    }
    let mut policy = policy_init;
    let initial = dataset_loss(&policy, features, y, cfg.z)
        .map_err(|e| Error::Diverged { epoch: 0, reason: e.to_string() })?;
    let mut trace = vec![EpochRecord { epoch: 0, loss: initial, batch_loss: f64::NAN }];
    let mut best = (initial, 0, policy.clone());
    let n = policy.weights().len();
    let mut adam = Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0 };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..features.paths).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut batch_losses = Vec::new();
        for chunk in order.chunks(cfg.batch_size) {
            let x = features.select_paths(chunk);
            let yb = y.select(Axis(0), chunk);
            let (loss, grad) = loss_and_gradient(&policy, x.view(), yb.view(), cfg.z).map_err(|e| Error::Diverged {
                epoch,
                reason: format!("{e}; trace {}", trace_summary(&trace)),
            })?;
            batch_losses.push(loss);
            adam.step(policy.weights_mut(), &grad, cfg);
        }
        let loss = dataset_loss(&policy, features, y, cfg.z)
            .ok()
            .filter(|l| l.is_finite())
            .ok_or_else(|| Error::Diverged { epoch, reason: format!("non-finite training loss; trace {}", trace_summary(&trace)) })?;
        let batch_loss = batch_losses.iter().sum::<f64>() / batch_losses.len() as f64;
        trace.push(EpochRecord { epoch, loss, batch_loss });
        if loss < best.0 {
            best = (loss, epoch, policy.clone());
        }
        if epoch >= cfg.patience {
            let earlier = trace[..=epoch - cfg.patience].iter().map(|r| r.loss).fold(f64::INFINITY, f64::min);
            let recent = trace[epoch - cfg.patience + 1..].iter().map(|r| r.loss).fold(f64::INFINITY, f64::min);
            if earlier - recent < cfg.min_improvement {
                break;
            }
        }
    }
    Ok(TrainOutcome { policy: best.2, best_epoch: best.1, trace })
}
