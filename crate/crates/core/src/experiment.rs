//! End-to-end runs: sample training paths, compute (log-)signatures, train a
//! policy, then resimulate on fresh paths for a low-biased value.

use std::io::Write;
use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::free_tensor::tensor_dim;
use crate::h0;
use crate::linearized::{
    build_objective, expected_signature_sampled, maximize, simulate_damped_values, terminal_pairings, RestartReport,
};
use crate::policy::{train, DeepPolicy, EpochRecord, FittedPolicy, LinearPolicy, Policy, TrainConfig};
use crate::process::{CovModel, ElectricityParams, GridSpec, Payoff, Sampler};
use crate::shuffle::PayoffPolys;
use crate::signature::dims;
use crate::stopping::{sample_stopping_indices, smoothed_values, StopEvaluation, ZDistribution};

pub const SCHEMA_VERSION: u32 = 1;

/// Paths per resimulation chunk.
const EVAL_CHUNK: usize = 8192;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Linear,
    #[default]
    Deep,
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" | "lin" => Ok(PolicyKind::Linear),
            "deep" => Ok(PolicyKind::Deep),
            _ => Err(Error::Config(format!("unknown policy kind `{s}` (linear | deep)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FbmTableConfig {
    /// `0` selects the discrete H=0 process.
    pub hursts: Vec<f64>,
    pub levels: Vec<usize>,
    pub policies: Vec<PolicyKind>,
}

impl Default for FbmTableConfig {
    fn default() -> Self {
        FbmTableConfig { hursts: vec![0.0, 0.1, 0.3, 0.5, 0.7, 1.0], levels: vec![2], policies: vec![PolicyKind::Deep] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ElectricityTableConfig {
    pub params: ElectricityParams,
    pub strikes: Vec<f64>,
    pub levels: Vec<usize>,
}

impl Default for ElectricityTableConfig {
    fn default() -> Self {
        ElectricityTableConfig { params: ElectricityParams::default(), strikes: vec![80.0, 90.0, 100.0, 110.0, 120.0], levels: vec![2] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearizedConfig {
    /// Degree of the dual polynomial `l`.
    pub k: usize,
    /// ℓ¹ bound on the coefficients of `l`.
    pub bound: f64,
    pub restarts: usize,
    pub payoff: PayoffPolys,
    /// Simpson pairs per grid segment in the simulation cross-check.
    pub substeps: usize,
    /// Paths used by the simulation cross-check (at most the expected-signature sample).
    pub check_exp: u32,
}

impl Default for LinearizedConfig {
    fn default() -> Self {
        LinearizedConfig { k: 1, bound: 2.0, restarts: 20, payoff: PayoffPolys::identity(), substeps: 4, check_exp: 14 }
    }
}

/// Everything one run needs; also the JSON config file format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub model: CovModel,
    pub payoff: Payoff,
    pub horizon: f64,
    /// Payoff grid steps `J`.
    pub steps: usize,
    /// Simulation grid steps; defaults to `steps`.
    pub fine_steps: Option<usize>,
    /// Signature truncation level `N`.
    pub level: usize,
    pub policy: PolicyKind,
    pub hidden_layers: usize,
    /// Neurons per hidden layer; defaults to `η + 30`.
    pub width: Option<usize>,
    pub train_exp: u32,
    pub eval_exp: u32,
    pub z: ZDistribution,
    pub train_seed: u64,
    pub eval_seed: u64,
    pub train: TrainConfig,
    pub memory_budget_mb: usize,
    pub fbm_table: FbmTableConfig,
    pub electricity: ElectricityTableConfig,
    pub linearized: LinearizedConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            model: CovModel::Fbm { hurst: 0.1 },
            payoff: Payoff::Identity,
            horizon: 1.0,
            steps: 100,
            fine_steps: None,
            level: 2,
            policy: PolicyKind::Deep,
            hidden_layers: 2,
            width: None,
            train_exp: 16,
            eval_exp: 18,
            z: ZDistribution::Exp1,
            train_seed: 1,
            eval_seed: 2,
            train: TrainConfig::default(),
            memory_budget_mb: 3072,
            fbm_table: FbmTableConfig::default(),
            electricity: ElectricityTableConfig::default(),
            linearized: LinearizedConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(s).map_err(|e| Error::Config(format!("config: {e}")))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!("config schema {} is not supported (expected {SCHEMA_VERSION})", cfg.schema_version)));
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.horizon, self.steps, self.fine_steps.unwrap_or(self.steps))
    }

    pub fn train_paths(&self) -> usize {
        1usize << self.train_exp
    }

    pub fn eval_paths(&self) -> usize {
        1usize << self.eval_exp
    }

    /// Policy input dimension: signature size for linear, Lyndon count for deep.
    pub fn input_dim(&self) -> usize {
        let w = 1 + self.model.dim();
        match self.policy {
            PolicyKind::Linear => tensor_dim(w, self.level),
            PolicyKind::Deep => dims(w, self.level).1,
        }
    }

    pub fn hidden(&self) -> Vec<usize> {
        let q = self.width.unwrap_or(self.input_dim() + 30);
        vec![q; self.hidden_layers]
    }

    /// Rough peak memory of training: fine paths, payoffs and features.
    pub fn training_bytes(&self) -> usize {
        let m = self.train_paths();
        let fine = self.fine_steps.unwrap_or(self.steps) + 1;
        let points = self.steps + 1;
        8 * m * (2 * fine + points * (2 + self.input_dim()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!("config schema {} is not supported", self.schema_version)));
        }
        self.model.validate()?;
        self.grid()?;
        if self.level == 0 {
            return Err(Error::Config("truncation level must be at least 1".into()));
        }
        if self.train_seed == self.eval_seed {
            return Err(Error::Config("evaluation seed must differ from the training seed".into()));
        }
        if self.train_exp > 30 || self.eval_exp > 30 {
            return Err(Error::Config("sample exponents above 30 are not supported".into()));
        }
        if self.width == Some(0) {
            return Err(Error::Config("hidden width must be positive".into()));
        }
        let mb = self.training_bytes() / (1 << 20);
        if mb > self.memory_budget_mb {
            return Err(Error::Config(format!(
                "training needs about {mb} MB, above the budget of {} MB; lower --train-exp or raise memory_budget_mb",
                self.memory_budget_mb
            )));
        }
        self.train.validate()
    }

    fn stopping_seed(&self) -> u64 {
        self.eval_seed ^ 0x9E37_79B9_7F4A_7C15
    }
}

/// Outcome of one train-and-resimulate run.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub model: CovModel,
    pub level: usize,
    pub policy: PolicyKind,
    pub steps: usize,
    pub m_train: usize,
    pub m_eval: usize,
    /// Smoothed value of the trained policy on fresh paths.
    pub lower_bound: StopEvaluation,
    /// Mean payoff at sampled randomized stopping times on the same paths.
    pub sampled: StopEvaluation,
    pub cross_check_ok: bool,
    /// `E[Y_T]`, the never-stop value (the European price for the put).
    pub terminal: StopEvaluation,
    pub h0_oracle: Option<f64>,
    pub best_epoch: usize,
    pub trace: Vec<EpochRecord>,
    pub train_secs: f64,
    pub eval_secs: f64,
    #[serde(skip)]
    pub fitted: Option<FittedPolicy>,
}

fn initial_policy(cfg: &ExperimentConfig) -> Result<Policy> {
    let w = 1 + cfg.model.dim();
    Ok(match cfg.policy {
        PolicyKind::Linear => {
            let mut p = LinearPolicy::zero(w, cfg.level);
            // θ ≡ 0 is a stationary point of the loss; start just off it
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
            p.weights.iter_mut().for_each(|v| *v = rng.random_range(-1e-2..1e-2));
            Policy::Linear(p)
        }
        PolicyKind::Deep => Policy::Deep(DeepPolicy::new(w, cfg.level, cfg.input_dim(), &cfg.hidden(), cfg.train.seed)?),
    })
}

/// Train on `2^train_exp` paths, then resimulate a fresh `2^eval_exp`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let sampler = Sampler::new(cfg.model, cfg.payoff, grid)?;
    let started = Instant::now();

    let policy = {
        let batch = sampler.sample(cfg.train_seed, 0, cfg.train_paths());
        let mut policy = initial_policy(cfg)?;
        let features = policy.features(&batch, 0..batch.len())?;
        if let Policy::Deep(d) = &mut policy {
            d.fit_normalization(features.data.view())?;
        }
        let y = batch.y;
        drop(batch.x);
        let tcfg = TrainConfig { z: cfg.z, train_paths: cfg.train_paths(), ..cfg.train.clone() };
        train(policy, &features, y.view(), &tcfg)?
    };
    let train_secs = started.elapsed().as_secs_f64();
    let fitted = FittedPolicy { policy: policy.policy, training_seed: Some(cfg.train_seed) };

    let started = Instant::now();
    let ev = resimulate(&sampler, &fitted, cfg)?;
    let eval_secs = started.elapsed().as_secs_f64();

    let h0_oracle = match cfg.model {
        CovModel::H0 => Some(h0::solve(cfg.steps)?.value_scaled),
        _ => None,
    };
    Ok(RunReport {
        model: cfg.model,
        level: cfg.level,
        policy: cfg.policy,
        steps: cfg.steps,
        m_train: cfg.train_paths(),
        m_eval: cfg.eval_paths(),
        cross_check_ok: ev.0.agrees_with(&ev.1, 3.0),
        lower_bound: ev.0,
        sampled: ev.1,
        terminal: ev.2,
        h0_oracle,
        best_epoch: policy.best_epoch,
        trace: policy.trace,
        train_secs,
        eval_secs,
        fitted: Some(fitted),
    })
}

/// Smoothed value, sampled-threshold value and terminal payoff on fresh paths.
pub fn resimulate(sampler: &Sampler, fitted: &FittedPolicy, cfg: &ExperimentConfig) -> Result<(StopEvaluation, StopEvaluation, StopEvaluation)> {
    if fitted.training_seed == Some(cfg.eval_seed) {
        return Err(Error::Consistency(format!("evaluation seed {} was used for training", cfg.eval_seed)));
    }
    let m = cfg.eval_paths();
    let (mut smooth, mut sampled, mut terminal) = (Vec::with_capacity(m), Vec::with_capacity(m), Vec::with_capacity(m));
    let mut start = 0;
    while start < m {
        let count = EVAL_CHUNK.min(m - start);
        let batch = sampler.sample(cfg.eval_seed, start as u64, count);
        let theta = fitted.policy.theta(&batch)?;
        smooth.extend(smoothed_values(batch.y.view(), theta.view(), cfg.z)?);
        let idx = sample_stopping_indices(&batch, theta.view(), cfg.z, cfg.stopping_seed())?;
        let last = batch.y.ncols() - 1;
        for (k, j) in idx.into_iter().enumerate() {
            sampled.push(batch.y[[k, j]]);
            terminal.push(batch.y[[k, last]]);
        }
        start += count;
    }
    Ok((StopEvaluation::from_samples(&smooth), StopEvaluation::from_samples(&sampled), StopEvaluation::from_samples(&terminal)))
}

fn config_header(cfg: &ExperimentConfig) -> String {
    format!("# config: {}", cfg.to_json())
}

fn fmt_eval(e: &StopEvaluation) -> String {
    format!("{:.6},{:.6}", e.value, e.std_error)
}

#[derive(Clone, Debug, Serialize)]
pub struct FbmRow {
    pub hurst: f64,
    pub report: RunReport,
}

/// One run per (H, N, policy kind); `H = 0` uses the discrete H=0 process.
pub fn run_fbm_table(cfg: &ExperimentConfig, mut progress: impl FnMut(&FbmRow)) -> Result<Vec<FbmRow>> {
    let mut rows = Vec::new();
    for &hurst in &cfg.fbm_table.hursts {
        for &level in &cfg.fbm_table.levels {
            for &policy in &cfg.fbm_table.policies {
                let mut c = cfg.clone();
                c.level = level;
                c.policy = policy;
                c.payoff = Payoff::Identity;
                if hurst == 0.0 {
                    c.model = CovModel::H0;
                    c.fine_steps = None;
                } else {
                    c.model = CovModel::Fbm { hurst };
                }
                let report = run(&c).map_err(|e| context(e, &format!("H={hurst} N={level} {policy:?}")))?;
                let row = FbmRow { hurst, report };
                progress(&row);
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

fn context(e: Error, what: &str) -> Error {
    match e {
        Error::Config(s) => Error::Config(format!("{what}: {s}")),
        Error::Diverged { epoch, reason } => Error::Diverged { epoch, reason: format!("{what}: {reason}") },
        Error::Numeric(s) => Error::Numeric(format!("{what}: {s}")),
        Error::Model(s) => Error::Model(format!("{what}: {s}")),
        other => other,
    }
}

pub fn write_fbm_csv<W: Write>(cfg: &ExperimentConfig, rows: &[FbmRow], mut w: W) -> Result<()> {
    writeln!(w, "{}", config_header(cfg))?;
    writeln!(
        w,
        "hurst,level,policy,steps,m_train,m_eval,lower_bound,std_error,sampled_value,sampled_std_error,cross_check,h0_oracle,best_epoch,train_secs,eval_secs"
    )?;
    for r in rows {
        let p = &r.report;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{:.3},{:.3}",
            r.hurst,
            p.level,
            policy_name(p.policy),
            p.steps,
            p.m_train,
            p.m_eval,
            fmt_eval(&p.lower_bound),
            fmt_eval(&p.sampled),
            if p.cross_check_ok { "ok" } else { "FAIL" },
            p.h0_oracle.map(|v| format!("{v:.6}")).unwrap_or_default(),
            p.best_epoch,
            p.train_secs,
            p.eval_secs
        )?;
    }
    Ok(())
}

fn policy_name(p: PolicyKind) -> &'static str {
    match p {
        PolicyKind::Linear => "linear",
        PolicyKind::Deep => "deep",
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ElectricityRow {
    pub strike: f64,
    pub report: RunReport,
    /// Lower bound plus 3 SE is at least the European price.
    pub american_ge_european: bool,
}

pub fn run_electricity_table(cfg: &ExperimentConfig, mut progress: impl FnMut(&ElectricityRow)) -> Result<Vec<ElectricityRow>> {
    let mut rows = Vec::new();
    for &strike in &cfg.electricity.strikes {
        for &level in &cfg.electricity.levels {
            let params = ElectricityParams { strike, ..cfg.electricity.params };
            let mut c = cfg.clone();
            c.level = level;
            c.policy = PolicyKind::Deep;
            c.model = params.model();
            c.payoff = params.payoff();
            let report = run(&c).map_err(|e| context(e, &format!("K={strike} N={level}")))?;
            let american_ge_european = report.lower_bound.value + 3.0 * report.lower_bound.std_error >= report.terminal.value;
            let row = ElectricityRow { strike, report, american_ge_european };
            progress(&row);
            rows.push(row);
        }
    }
    Ok(rows)
}

pub fn write_electricity_csv<W: Write>(cfg: &ExperimentConfig, rows: &[ElectricityRow], mut w: W) -> Result<()> {
    writeln!(w, "{}", config_header(cfg))?;
    writeln!(
        w,
        "strike,level,steps,m_train,m_eval,american,std_error,sampled_value,sampled_std_error,cross_check,european,european_std_error,american_ge_european,train_secs,eval_secs"
    )?;
    for r in rows {
        let p = &r.report;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{:.3},{:.3}",
            r.strike,
            p.level,
            p.steps,
            p.m_train,
            p.m_eval,
            fmt_eval(&p.lower_bound),
            fmt_eval(&p.sampled),
            if p.cross_check_ok { "ok" } else { "FAIL" },
            fmt_eval(&p.terminal),
            r.american_ge_european,
            p.train_secs,
            p.eval_secs
        )?;
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct LinearizedReport {
    pub k: usize,
    pub level: usize,
    pub bound: f64,
    pub m: usize,
    /// Expected signature coefficients with their standard errors, graded-lex.
    pub expected_signature: Vec<(String, f64, f64)>,
    pub lambda: Vec<(String, f64)>,
    pub objective: f64,
    /// Per-path pairing of the optimized functional, on the check paths.
    pub objective_paths: StopEvaluation,
    /// Direct simulation of the damped functional on the same paths.
    pub simulated: StopEvaluation,
    pub cross_check_ok: bool,
    pub restarts: Vec<RestartReport>,
    pub secs: f64,
}

/// Expected signature from the training stream, λ* by projected ascent, and
/// a simulation check of the optimized functional.
pub fn run_linearized(cfg: &ExperimentConfig) -> Result<LinearizedReport> {
    cfg.validate()?;
    let lc = &cfg.linearized;
    let started = Instant::now();
    let grid = cfg.grid()?;
    let sampler = Sampler::new(cfg.model, Payoff::Identity, grid)?;
    let e = expected_signature_sampled(&sampler, cfg.train_seed, cfg.train_paths(), cfg.level)?;
    let obj = build_objective(lc.k, &lc.payoff, &e, lc.bound)?;
    let best = maximize(&obj, lc.restarts, cfg.train_seed)?;

    let check = cfg.train_paths().min(1 << lc.check_exp);
    let functional = obj.functional(&best.lambda);
    let l = obj.policy(&best.lambda);
    let (mut pairings, mut simulated) = (Vec::with_capacity(check), Vec::with_capacity(check));
    let mut start = 0;
    while start < check {
        let count = EVAL_CHUNK.min(check - start);
        let batch = sampler.sample(cfg.train_seed, start as u64, count);
        pairings.extend(terminal_pairings(&batch, &functional)?);
        simulated.extend(simulate_damped_values(&batch, &l, &lc.payoff, lc.substeps)?);
        start += count;
    }
    let objective_paths = StopEvaluation::from_samples(&pairings);
    let simulated = StopEvaluation::from_samples(&simulated);
    let width = e.tensor.width();
    let expected_signature = (0..e.tensor.coeffs().len())
        .map(|i| (word_label(&crate::free_tensor::index_word(width, i)), e.tensor.coeffs()[i], e.std_errors[i]))
        .collect();
    Ok(LinearizedReport {
        k: lc.k,
        level: cfg.level,
        bound: lc.bound,
        m: e.m,
        expected_signature,
        lambda: obj.variables.iter().map(word_label).zip(best.lambda.iter().copied()).collect(),
        objective: best.value,
        cross_check_ok: objective_paths.agrees_with(&simulated, 3.0),
        objective_paths,
        simulated,
        restarts: best.restarts,
        secs: started.elapsed().as_secs_f64(),
    })
}

fn word_label(w: &crate::free_tensor::Word) -> String {
    if w.is_empty() {
        "∅".into()
    } else {
        w.letters().iter().map(|l| l.to_string()).collect()
    }
}

pub fn write_linearized_csv<W: Write>(cfg: &ExperimentConfig, r: &LinearizedReport, mut w: W) -> Result<()> {
    writeln!(w, "{}", config_header(cfg))?;
    writeln!(w, "quantity,word,value,std_error,m")?;
    for (word, v, se) in &r.expected_signature {
        writeln!(w, "expected_signature,{word},{v:e},{se:e},{}", r.m)?;
    }
    for (word, v) in &r.lambda {
        writeln!(w, "lambda,{word},{v:e},,")?;
    }
    writeln!(w, "objective,,{:.6},{:.6},{}", r.objective, r.objective_paths.std_error, r.m)?;
    writeln!(w, "objective_check_paths,,{},{}", fmt_eval(&r.objective_paths), r.objective_paths.m)?;
    writeln!(w, "simulated,,{},{}", fmt_eval(&r.simulated), r.simulated.m)?;
    writeln!(w, "cross_check,,{},,", if r.cross_check_ok { "ok" } else { "FAIL" })?;
    for rr in &r.restarts {
        writeln!(w, "restart_{},,{:.6},,{}", rr.restart, rr.value, rr.iterations)?;
    }
    Ok(())
}
