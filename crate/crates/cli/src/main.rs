use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sigstop_core::experiment::{
    run_electricity_table, run_fbm_table, run_linearized, write_electricity_csv, write_fbm_csv, write_linearized_csv,
    ExperimentConfig, PolicyKind, RunReport,
};
use sigstop_core::{h0, CovModel, Error, ZDistribution};

#[derive(Parser)]
#[command(name = "sigstop", version, about = "Optimal stopping with signature policies")]
struct Cli {
    /// Worker threads; 1 makes every run bit-reproducible.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lower bounds for fractional Brownian motion over Hurst parameters and levels.
    FbmTable(Common),
    /// American put on the gamma-kernel OU log-price, with the European reference.
    ElectricityTable {
        #[command(flatten)]
        common: Common,
        /// Comma-separated strikes.
        #[arg(long, value_delimiter = ',')]
        strikes: Option<Vec<f64>>,
    },
    /// Expected-signature objective maximized over linear policies.
    Linearized {
        #[command(flatten)]
        common: Common,
        /// Degree of the dual polynomial.
        #[arg(long)]
        k: Option<usize>,
        /// ℓ¹ bound on its coefficients.
        #[arg(long)]
        bound: Option<f64>,
        #[arg(long)]
        restarts: Option<usize>,
    },
    /// Exact value of the H=0 problem.
    H0 {
        /// Number of steps J (comma-separated for several).
        #[arg(long, value_delimiter = ',', default_value = "100")]
        steps: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// fbm | bm | h0 (linearized only; the tables fix their model).
    #[arg(long)]
    model: Option<String>,
    /// Hurst parameter(s), comma-separated; 0 selects the H=0 process.
    #[arg(long, value_delimiter = ',')]
    hurst: Option<Vec<f64>>,
    /// Truncation level(s), comma-separated.
    #[arg(long, value_delimiter = ',')]
    level: Option<Vec<usize>>,
    /// linear | deep, comma-separated.
    #[arg(long, value_delimiter = ',')]
    policy: Option<Vec<String>>,
    /// Number of hidden layers.
    #[arg(long)]
    hidden: Option<usize>,
    /// Neurons per hidden layer.
    #[arg(long)]
    width: Option<usize>,
    /// log2 of the training sample size.
    #[arg(long)]
    train_exp: Option<u32>,
    /// log2 of the resimulation sample size.
    #[arg(long)]
    eval_exp: Option<u32>,
    /// Payoff grid steps J.
    #[arg(long)]
    steps: Option<usize>,
    /// Simulation grid steps (a multiple of J).
    #[arg(long)]
    fine_steps: Option<usize>,
    /// exp1 | loglogistic
    #[arg(long)]
    z_dist: Option<String>,
    /// Training seed; the evaluation seed is seed + 1.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// CSV report path (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for policy checkpoints and loss traces.
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
}

fn fbm(hurst: f64) -> CovModel {
    if hurst == 0.0 {
        CovModel::H0
    } else {
        CovModel::Fbm { hurst }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| config_err(format!("{}: {e}", p.display())))?;
                ExperimentConfig::from_json(&text)?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(m) = &self.model {
            let h = self.hurst.as_ref().and_then(|v| v.first().copied());
            cfg.model = match m.as_str() {
                "fbm" => fbm(h.unwrap_or(0.5)),
                "bm" => CovModel::Bm,
                "h0" => CovModel::H0,
                other => return Err(config_err(format!("unknown model `{other}` (fbm | bm | h0)"))),
            };
        } else if let (Some(h), CovModel::Fbm { .. }) = (self.hurst.as_ref().and_then(|v| v.first()), cfg.model) {
            cfg.model = fbm(*h);
        }
        if let Some(h) = &self.hurst {
            cfg.fbm_table.hursts = h.clone();
        }
        if let Some(l) = &self.level {
            cfg.level = *l.first().ok_or_else(|| config_err("empty --level"))?;
            cfg.fbm_table.levels = l.clone();
            cfg.electricity.levels = l.clone();
        }
        if let Some(p) = &self.policy {
            let kinds = p.iter().map(|s| s.parse::<PolicyKind>()).collect::<Result<Vec<_>, _>>()?;
            cfg.policy = *kinds.first().ok_or_else(|| config_err("empty --policy"))?;
            cfg.fbm_table.policies = kinds;
        }
        if let Some(v) = self.hidden {
            cfg.hidden_layers = v;
        }
        if let Some(v) = self.width {
            cfg.width = Some(v);
        }
        if let Some(v) = self.train_exp {
            cfg.train_exp = v;
        }
        if let Some(v) = self.eval_exp {
            cfg.eval_exp = v;
        }
        if let Some(v) = self.steps {
            cfg.steps = v;
        }
        if let Some(v) = self.fine_steps {
            cfg.fine_steps = Some(v);
        }
        if let Some(z) = &self.z_dist {
            cfg.z = z.parse::<ZDistribution>()?;
        }
        if let Some(s) = self.seed {
            cfg.train_seed = s;
            cfg.eval_seed = s.wrapping_add(1);
            cfg.train.seed = s;
        }
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = self.lr {
            cfg.train.lr = v;
        }
        if let Some(v) = self.batch_size {
            cfg.train.batch_size = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn writer(&self) -> Result<Box<dyn Write>, Error> {
        Ok(match &self.out {
            Some(p) => Box::new(BufWriter::new(File::create(p)?)),
            None => Box::new(io::stdout().lock()),
        })
    }
}

fn save_checkpoint(dir: &Path, tag: &str, report: &RunReport) -> Result<(), Error> {
    fs::create_dir_all(dir)?;
    if let Some(f) = &report.fitted {
        f.write_json(BufWriter::new(File::create(dir.join(format!("{tag}.policy.json")))?))?;
    }
    let mut w = BufWriter::new(File::create(dir.join(format!("{tag}.trace.csv")))?);
    writeln!(w, "epoch,loss,batch_loss")?;
    for r in &report.trace {
        writeln!(w, "{},{},{}", r.epoch, r.loss, r.batch_loss)?;
    }
    Ok(())
}

fn progress(tag: &str, r: &RunReport) {
    eprintln!(
        "{tag}: {:.4} ± {:.4} (sampled {:.4} ± {:.4}, {}) train {:.1}s eval {:.1}s",
        r.lower_bound.value,
        r.lower_bound.std_error,
        r.sampled.value,
        r.sampled.std_error,
        if r.cross_check_ok { "consistent" } else { "INCONSISTENT" },
        r.train_secs,
        r.eval_secs
    );
}

fn execute(cli: Cli) -> Result<(), Error> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| config_err(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::FbmTable(common) => {
            let cfg = common.resolve()?;
            let mut ckpt_err = None;
            let rows = run_fbm_table(&cfg, |row| {
                let r = &row.report;
                let tag = format!("fbm_H{}_N{}_{}", row.hurst, r.level, if r.policy == PolicyKind::Deep { "deep" } else { "linear" });
                progress(&tag, r);
                if let Some(dir) = &common.checkpoint_dir {
                    if let Err(e) = save_checkpoint(dir, &tag, r) {
                        ckpt_err.get_or_insert(e);
                    }
                }
            })?;
            if let Some(e) = ckpt_err {
                return Err(e);
            }
            write_fbm_csv(&cfg, &rows, common.writer()?)
        }
        Command::ElectricityTable { common, strikes } => {
            let mut cfg = common.resolve()?;
            if let Some(s) = strikes {
                cfg.electricity.strikes = s;
            }
            let mut ckpt_err = None;
            let rows = run_electricity_table(&cfg, |row| {
                let tag = format!("electricity_K{}_N{}", row.strike, row.report.level);
                progress(&tag, &row.report);
                eprintln!("{tag}: european {:.4} ± {:.4}", row.report.terminal.value, row.report.terminal.std_error);
                if let Some(dir) = &common.checkpoint_dir {
                    if let Err(e) = save_checkpoint(dir, &tag, &row.report) {
                        ckpt_err.get_or_insert(e);
                    }
                }
            })?;
            if let Some(e) = ckpt_err {
                return Err(e);
            }
            write_electricity_csv(&cfg, &rows, common.writer()?)
        }
        Command::Linearized { common, k, bound, restarts } => {
            let mut cfg = common.resolve()?;
            if let Some(v) = k {
                cfg.linearized.k = v;
            }
            if let Some(v) = bound {
                cfg.linearized.bound = v;
            }
            if let Some(v) = restarts {
                cfg.linearized.restarts = v;
            }
            let report = run_linearized(&cfg)?;
            eprintln!(
                "objective {:.5} ± {:.5}, simulated {:.5} ± {:.5} ({})",
                report.objective,
                report.objective_paths.std_error,
                report.simulated.value,
                report.simulated.std_error,
                if report.cross_check_ok { "consistent" } else { "INCONSISTENT" }
            );
            write_linearized_csv(&cfg, &report, common.writer()?)
        }
        Command::H0 { steps, out } => {
            let mut w: Box<dyn Write> = match out {
                Some(p) => Box::new(BufWriter::new(File::create(p)?)),
                None => Box::new(io::stdout().lock()),
            };
            writeln!(w, "steps,value_unscaled,value_scaled")?;
            for j in steps {
                let s = h0::solve(j)?;
                writeln!(w, "{j},{:.10},{:.10}", s.value_unscaled, s.value_scaled)?;
            }
            Ok(())
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Truncation { .. } | Error::Dimension(_) | Error::Domain(_) => 2,
        Error::Io(_) | Error::Json(_) => 1,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
