//! The fully linearized route: the smoothed payoff of a linear policy is a
//! polynomial in its coefficients once paired with the expected signature,
//! and is maximized deterministically over an ℓ¹ ball.

use std::io::{Read, Write};

use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::free_tensor::{tensor_dim, FreeTensor, Word};
use crate::process::{PathBatch, Sampler};
use crate::shuffle::{symbolic_shuffle_exp_objective, LambdaPoly, PayoffPolys, SymbolicDualPoly};
use crate::shuffle::DualPoly;
use crate::signature::{chen_step, for_each_prefix};
use crate::stopping::{pairwise_sum, StopEvaluation};

/// Monte-Carlo mean of terminal signatures with per-coefficient standard errors.
#[derive(Clone, Debug)]
pub struct ExpectedSig {
    pub tensor: FreeTensor,
    pub m: usize,
    pub std_errors: Vec<f64>,
}

/// Streaming coefficient-wise mean and variance (Welford).
#[derive(Clone, Debug)]
pub struct ExpectedSigAccumulator {
    width: usize,
    level: usize,
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl ExpectedSigAccumulator {
    pub fn new(width: usize, level: usize) -> Self {
        let d = tensor_dim(width, level);
        ExpectedSigAccumulator { width, level, n: 0, mean: vec![0.0; d], m2: vec![0.0; d] }
    }

    pub fn add(&mut self, sig: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(sig) {
            let d = x - *m;
            *m += d / n;
            *s += d * (x - *m);
        }
    }

    /// Terminal signatures of every path in `batch`.
    pub fn add_batch(&mut self, batch: &PathBatch) -> Result<()> {
        if 1 + batch.dim() != self.width {
            return Err(Error::Dimension(format!("batch width {} vs {}", 1 + batch.dim(), self.width)));
        }
        let times = batch.grid.fine_times();
        let last = batch.grid.steps;
        let stride = batch.grid.stride();
        let sigs: Vec<Vec<f64>> = (0..batch.len())
            .into_par_iter()
            .map(|m| {
                let mut out = Vec::new();
                for_each_prefix(&times, batch.path(m), stride, self.level, |j, s| {
                    if j == last {
                        out = s.to_vec();
                    }
                })
                .map(|_| out)
            })
            .collect::<Result<_>>()?;
        for s in &sigs {
            self.add(s);
        }
        Ok(())
    }

    pub fn finish(self) -> Result<ExpectedSig> {
        if self.n == 0 {
            return Err(Error::Domain("expected signature of an empty batch".into()));
        }
        let n = self.n as f64;
        let std_errors = self.m2.iter().map(|&s| if self.n > 1 { (s / (n - 1.0)).sqrt() / n.sqrt() } else { 0.0 }).collect();
        let mut mean = self.mean;
        mean[0] = 1.0;
        Ok(ExpectedSig { tensor: FreeTensor::from_coeffs(self.width, self.level, mean)?, m: self.n, std_errors })
    }
}

pub fn expected_signature(batch: &PathBatch, level: usize) -> Result<ExpectedSig> {
    let mut acc = ExpectedSigAccumulator::new(1 + batch.dim(), level);
    acc.add_batch(batch)?;
    acc.finish()
}

/// Samples `m` paths in chunks so memory stays bounded.
pub fn expected_signature_sampled(sampler: &Sampler, seed: u64, m: usize, level: usize) -> Result<ExpectedSig> {
    const CHUNK: usize = 8192;
    let mut acc = ExpectedSigAccumulator::new(1 + sampler.model.dim(), level);
    let mut done = 0;
    while done < m {
        let count = CHUNK.min(m - done);
        acc.add_batch(&sampler.sample(seed, done as u64, count))?;
        done += count;
    }
    acc.finish()
}

impl ExpectedSig {
    /// Mean tensor followed by the standard errors, both in the tensor binary format.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        self.tensor.write_binary(&mut w)?;
        FreeTensor::from_coeffs(self.tensor.width(), self.tensor.level(), self.std_errors.clone())?.write_binary(&mut w)?;
        w.write_all(&(self.m as u64).to_le_bytes())?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let tensor = FreeTensor::read_binary(&mut r)?;
        let se = FreeTensor::read_binary(&mut r)?;
        if se.width() != tensor.width() || se.level() != tensor.level() {
            return Err(Error::Consistency("standard errors do not match the mean tensor".into()));
        }
        let mut m = [0u8; 8];
        r.read_exact(&mut m)?;
        Ok(ExpectedSig { tensor, m: u64::from_le_bytes(m) as usize, std_errors: se.into_coeffs() })
    }
}

/// `λ ↦ ⟨objective(λ), E⟩` with its gradient, constrained to `|λ|₁ ≤ bound`.
#[derive(Clone, Debug)]
pub struct LinObjective {
    /// One variable per word of length `≤ k`, graded-lex.
    pub variables: Vec<Word>,
    pub poly: LambdaPoly,
    pub gradient: Vec<LambdaPoly>,
    pub bound: f64,
    pub width: usize,
    pub k: usize,
    /// The word-side objective before pairing with `E`.
    pub symbolic: SymbolicDualPoly,
}

impl LinObjective {
    pub fn value(&self, lambda: &[f64]) -> f64 {
        self.poly.eval(lambda)
    }

    pub fn grad(&self, lambda: &[f64]) -> Vec<f64> {
        self.gradient.iter().map(|p| p.eval(lambda)).collect()
    }

    /// The word-side objective at `λ`; its pairing with `E` is `value(λ)`.
    pub fn functional(&self, lambda: &[f64]) -> DualPoly {
        self.symbolic.substitute(lambda)
    }

    /// The dual polynomial `l = Σ λ_i w_i`.
    pub fn policy(&self, lambda: &[f64]) -> DualPoly {
        DualPoly::from_terms(self.width, self.variables.iter().cloned().zip(lambda.iter().copied())).expect("words fit the width")
    }
}

/// Pair the symbolic objective with the expected signature; `E` must have
/// level at least `2k + 1` plus the payoff appendage.
pub fn build_objective(k: usize, payoff: &PayoffPolys, e: &ExpectedSig, bound: f64) -> Result<LinObjective> {
    if !(bound.is_finite() && bound >= 0.0) {
        return Err(Error::Config(format!("ℓ¹ bound must be a non-negative number, got {bound}")));
    }
    let width = e.tensor.width();
    let sym = symbolic_shuffle_exp_objective(width, e.tensor.level(), k, payoff)?;
    let poly = sym.objective.pair(&e.tensor)?;
    let gradient = sym.gradient.iter().map(|g| g.pair(&e.tensor)).collect::<Result<_>>()?;
    Ok(LinObjective { variables: sym.variables, poly, gradient, bound, width, k, symbolic: sym.objective })
}

/// Euclidean projection onto `{x : |x|₁ ≤ radius}` (sort-based).
pub fn project_l1(v: &[f64], radius: f64) -> Vec<f64> {
    if v.iter().map(|x| x.abs()).sum::<f64>() <= radius {
        return v.to_vec();
    }
    if radius <= 0.0 {
        return vec![0.0; v.len()];
    }
    let mut u: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let (mut cum, mut shift) = (0.0, 0.0);
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - radius) / (j + 1) as f64;
        if uj - t > 0.0 {
            shift = t;
        } else {
            break;
        }
    }
    v.iter().map(|&x| x.signum() * (x.abs() - shift).max(0.0)).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct RestartReport {
    pub restart: usize,
    pub iterations: usize,
    pub value: f64,
    pub l1_norm: f64,
}

#[derive(Clone, Debug)]
pub struct Maximum {
    pub lambda: Vec<f64>,
    pub value: f64,
    pub restarts: Vec<RestartReport>,
}

impl Maximum {
    pub fn write_report_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "restart,iterations,value,lambda_l1")?;
        for r in &self.restarts {
            writeln!(w, "{},{},{},{}", r.restart, r.iterations, r.value, r.l1_norm)?;
        }
        Ok(())
    }
}

const MAX_ITER: usize = 5000;

/// Projected gradient ascent with Armijo backtracking.
fn ascend(obj: &LinObjective, mut x: Vec<f64>) -> (Vec<f64>, f64, usize) {
    let mut f = obj.value(&x);
    let mut step = 1.0;
    for it in 0..MAX_ITER {
        let g = obj.grad(&x);
        let mut accepted = None;
        let mut t = step;
        for _ in 0..60 {
            let y = project_l1(&x.iter().zip(&g).map(|(a, b)| a + t * b).collect::<Vec<_>>(), obj.bound);
            let dir: f64 = y.iter().zip(&x).zip(&g).map(|((a, b), c)| (a - b) * c).sum();
            let fy = obj.value(&y);
            if fy.is_finite() && fy >= f + 1e-4 * dir {
                accepted = Some((y, fy));
                break;
            }
            t *= 0.5;
        }
        let Some((y, fy)) = accepted else { return (x, f, it) };
        let moved = y.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let gain = fy - f;
        x = y;
        f = fy;
        step = (2.0 * t).min(1e6);
        if moved < 1e-13 || gain <= 1e-15 * (1.0 + f.abs()) {
            return (x, f, it + 1);
        }
    }
    (x, f, MAX_ITER)
}

/// Uniform draw from the ℓ¹ ball of the given radius.
fn uniform_l1_ball(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> Vec<f64> {
    let e: Vec<f64> = (0..=n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = e.iter().sum();
    e[..n].iter().map(|x| radius * x / total * if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
}

/// Best of `restarts` ascents: restart 0 starts at `λ = 0`, restart `r > 0`
/// at a uniform point of the ball of radius `bound/10` drawn from stream `r`.
pub fn maximize(obj: &LinObjective, restarts: usize, seed: u64) -> Result<Maximum> {
    let n = obj.variables.len();
    let runs: Vec<(Vec<f64>, f64, RestartReport)> = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let start = if r == 0 {
                vec![0.0; n]
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(r as u64);
                uniform_l1_ball(&mut rng, n, obj.bound / 10.0)
            };
            let (x, f, iterations) = ascend(obj, start);
            let l1_norm = x.iter().map(|v| v.abs()).sum();
            (x, f, RestartReport { restart: r, iterations, value: f, l1_norm })
        })
        .collect();
    let best = runs
        .iter()
        .filter(|r| r.1.is_finite())
        .fold(None::<&(Vec<f64>, f64, RestartReport)>, |b, r| match b {
            Some(b) if b.1 >= r.1 => Some(b),
            _ => Some(r),
        })
        .ok_or_else(|| Error::Numeric("every restart produced a non-finite objective".into()))?;
    Ok(Maximum { lambda: best.0.clone(), value: best.1, restarts: runs.into_iter().map(|r| r.2).collect() })
}

/// Direct simulation of `G(Y_0) + ∫ e_t (G'(Y_t) dY_t + L(Y_t) dt)`,
/// `e_t = exp(−∫_0^t ⟨l, S_{0,s}⟩² ds)`, for the first space coordinate `Y`.
///
/// Each linear piece of the path is split into `2q` equal parts; `∫⟨l,S⟩²`
/// is accumulated by Simpson's rule on consecutive pairs and the outer
/// integral by Simpson's rule over the same points.
pub fn simulate_damped_functional(batch: &PathBatch, l: &DualPoly, payoff: &PayoffPolys, q: usize) -> Result<StopEvaluation> {
    Ok(StopEvaluation::from_samples(&simulate_damped_values(batch, l, payoff, q)?))
}

/// Per-path values behind [`simulate_damped_functional`].
pub fn simulate_damped_values(batch: &PathBatch, l: &DualPoly, payoff: &PayoffPolys, q: usize) -> Result<Vec<f64>> {
    let width = 1 + batch.dim();
    if l.width() != width {
        return Err(Error::Dimension(format!("policy width {} vs batch width {width}", l.width())));
    }
    let level = l.deg();
    let gp = payoff.g_prime();
    let poly = |c: &[f64], x: f64| c.iter().rev().fold(0.0, |acc, a| acc * x + a);
    let times = batch.grid.fine_times();
    let n_sub = 2 * q.max(1);
    let vals: Vec<f64> = (0..batch.len())
        .into_par_iter()
        .map(|m| {
            let path = batch.path(m);
            let mut sig = FreeTensor::one(width, level).into_coeffs();
            let mut scratch = Vec::new();
            let pairing = |s: &[f64]| -> f64 { l.terms().map(|(w, c)| c * s[crate::free_tensor::word_index(width, w.letters())]).sum() };
            let mut damp_int = 0.0f64;
            let mut total = poly(&payoff.g, path[[0, 0]]);
            for i in 0..times.len() - 1 {
                let dt = times[i + 1] - times[i];
                let dx: Vec<f64> = (0..batch.dim()).map(|c| path[[i + 1, c]] - path[[i, c]]).collect();
                let h = dt / n_sub as f64;
                let mut inc = vec![h];
                inc.extend(dx.iter().map(|v| v / n_sub as f64));
                // g_s = ⟨l,S⟩², e_s, and the integrand at the 2q+1 points
                let mut g = Vec::with_capacity(n_sub + 1);
                let mut xs = Vec::with_capacity(n_sub + 1);
                g.push(pairing(&sig).powi(2));
                xs.push(path[[i, 0]]);
                for s in 1..=n_sub {
                    chen_step(width, level, &mut sig, &inc, &mut scratch);
                    g.push(pairing(&sig).powi(2));
                    xs.push(path[[i, 0]] + dx[0] * s as f64 / n_sub as f64);
                }
                let slope = dx[0] / dt;
                let integrand = |e: f64, x: f64| e * (poly(&gp, x) * slope + poly(&payoff.l, x));
                let mut f_prev = integrand((-damp_int).exp(), xs[0]);
                for p in 0..q.max(1) {
                    let (a, b, c) = (2 * p, 2 * p + 1, 2 * p + 2);
                    // midpoint value of ∫g via Simpson on the half interval, using a quadratic through a,b,c
                    let half = h / 12.0 * (5.0 * g[a] + 8.0 * g[b] - g[c]);
                    let full = h / 3.0 * (g[a] + 4.0 * g[b] + g[c]);
                    let e_mid = (-(damp_int + half)).exp();
                    damp_int += full;
                    let e_end = (-damp_int).exp();
                    let f_mid = integrand(e_mid, xs[b]);
                    let f_end = integrand(e_end, xs[c]);
                    total += h / 3.0 * (f_prev + 4.0 * f_mid + f_end);
                    f_prev = f_end;
                }
            }
            total
        })
        .collect();
    Ok(vals)
}

/// Per-path values of `⟨f, S_{0,T}⟩` for a fixed dual polynomial `f`.
pub fn terminal_pairings(batch: &PathBatch, f: &DualPoly) -> Result<Vec<f64>> {
    let level = f.deg();
    let width = 1 + batch.dim();
    let times = batch.grid.fine_times();
    let last = batch.grid.steps;
    let stride = batch.grid.stride();
    let idx: Vec<(usize, f64)> = f.terms().map(|(w, c)| (crate::free_tensor::word_index(width, w.letters()), c)).collect();
    (0..batch.len())
        .map(|m| {
            let mut v = 0.0;
            for_each_prefix(&times, batch.path(m), stride, level, |j, s| {
                if j == last {
                    v = pairwise_sum(&idx.iter().map(|&(i, c)| c * s[i]).collect::<Vec<_>>());
                }
            })?;
            Ok(v)
        })
        .collect()
}

/// Standard errors of `E` on its own words, as a matrix row per level for reporting.
pub fn std_error_table(e: &ExpectedSig) -> Array2<f64> {
    let w = e.tensor.width();
    let mut t = Array2::from_elem((e.tensor.level() + 1, w.pow(e.tensor.level() as u32)), f64::NAN);
    for n in 0..=e.tensor.level() {
        let off = crate::free_tensor::level_offset(w, n);
        for i in 0..w.pow(n as u32) {
            t[[n, i]] = e.std_errors[off + i];
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{sample_fbm, CovModel, GridSpec, Payoff};
    use crate::signature::segment_signature;

    #[test]
    fn brownian_expected_signature() {
        let grid = GridSpec::uniform(1.0, 20).unwrap();
        let s = Sampler::new(CovModel::Bm, Payoff::Identity, grid).unwrap();
        let e = expected_signature_sampled(&s, 3, 20_000, 3).unwrap();
        let w22 = Word::new([2, 2]);
        let i = e.tensor.index_of(&w22).unwrap();
        assert!((e.tensor.coeff(&w22) - 0.5).abs() < 3.0 * e.std_errors[i]);
        let i2 = e.tensor.index_of(&Word::new([2])).unwrap();
        assert!(e.tensor.coeff(&Word::new([2])).abs() < 3.0 * e.std_errors[i2]);
        // time words are deterministic
        assert!((e.tensor.coeff(&Word::new([1, 1, 1])) - 1.0 / 6.0).abs() < 1e-14);
        assert_eq!(e.tensor.scalar(), 1.0);
        // chunked sampling equals one batch
        let one = expected_signature(&s.sample(3, 0, 20_000), 3).unwrap();
        for (a, b) in one.tensor.coeffs().iter().zip(e.tensor.coeffs()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn deterministic_path_is_its_signature() {
        let b = sample_fbm(1.0, GridSpec::uniform(2.0, 4).unwrap(), 1, 5).unwrap();
        let e = expected_signature(&b, 4).unwrap();
        let x_t = b.x[[0, 4, 0]];
        let want = segment_signature(&[2.0, x_t], 4);
        for (a, b) in e.tensor.coeffs().iter().zip(want.coeffs()) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut buf = Vec::new();
        e.write_binary(&mut buf).unwrap();
        let back = ExpectedSig::read_binary(&buf[..]).unwrap();
        assert_eq!(back.tensor, e.tensor);
        assert_eq!(back.m, 1);
        assert_eq!(std_error_table(&e).dim(), (5, 16));
    }

    #[test]
    fn projection() {
        assert_eq!(project_l1(&[0.2, -0.3], 1.0), vec![0.2, -0.3]);
        let p = project_l1(&[3.0, -1.0, 0.5], 2.0);
        assert!((p.iter().map(|x| x.abs()).sum::<f64>() - 2.0).abs() < 1e-14);
        assert!((p[0] - 2.0).abs() < 1e-14 && p[1] == 0.0 && p[2] == 0.0);
        let p = project_l1(&[1.0, -1.0, 0.2], 1.0);
        assert!((p[0] - 0.5).abs() < 1e-14 && (p[1] + 0.5).abs() < 1e-14 && p[2] == 0.0);
        assert_eq!(project_l1(&[1.0, 2.0], 0.0), vec![0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let v: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let p = project_l1(&v, 1.5);
            assert!(p.iter().map(|x| x.abs()).sum::<f64>() <= 1.5 + 1e-12);
            // optimality: no ball point is closer than the projection
            for _ in 0..20 {
                let u = uniform_l1_ball(&mut rng, 5, 1.5);
                let d = |a: &[f64]| a.iter().zip(&v).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
                assert!(d(&p) <= d(&u) + 1e-12);
            }
        }
    }

    fn small_objective(h: f64, k: usize, level: usize, bound: f64) -> (PathBatch, ExpectedSig, LinObjective) {
        let b = sample_fbm(h, GridSpec::new(1.0, 10, 10).unwrap(), 4000, 7).unwrap();
        let e = expected_signature(&b, level).unwrap();
        let obj = build_objective(k, &PayoffPolys::identity(), &e, bound).unwrap();
        (b, e, obj)
    }

    #[test]
    fn objective_at_zero_is_mean_terminal_value() {
        let (b, e, obj) = small_objective(0.3, 1, 4, 1.0);
        assert_eq!(obj.variables.len(), 3);
        let mean_xt = b.y.column(10).mean().unwrap();
        assert!((obj.value(&[0.0; 3]) - e.tensor.coeff(&Word::new([2]))).abs() < 1e-15);
        assert!((obj.value(&[0.0; 3]) - mean_xt).abs() < 1e-12);
        let lam = [0.1, -0.2, 0.05];
        let per_path = terminal_pairings(&b, &obj.functional(&lam)).unwrap();
        assert!((StopEvaluation::from_samples(&per_path).value - obj.value(&lam)).abs() < 1e-12);
        let m = maximize(&LinObjective { bound: 0.0, ..obj.clone() }, 5, 1).unwrap();
        assert_eq!(m.lambda, vec![0.0; 3]);
        assert!((m.value - mean_xt).abs() < 1e-12);
        assert!(matches!(build_objective(2, &PayoffPolys::identity(), &e, 1.0), Err(Error::Truncation { .. })));
    }

    #[test]
    fn gradient_polynomials_match_differences() {
        let (_, _, obj) = small_objective(0.2, 1, 5, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-0.5..0.5)).collect();
            let g = obj.grad(&x);
            for i in 0..3 {
                let h = 1e-6;
                let mut xp = x.clone();
                xp[i] += h;
                let mut xm = x.clone();
                xm[i] -= h;
                let fd = (obj.value(&xp) - obj.value(&xm)) / (2.0 * h);
                assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1e-3), "{fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn objective_matches_simulation() {
        let (b, _, obj) = small_objective(0.3, 1, 6, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let lam: Vec<f64> = (0..3).map(|_| rng.random_range(-0.3..0.3)).collect();
            let sim = simulate_damped_functional(&b, &obj.policy(&lam), &PayoffPolys::identity(), 8).unwrap();
            let v = obj.value(&lam);
            assert!((v - sim.value).abs() < 3.0 * sim.std_error, "{v} vs {} ± {}", sim.value, sim.std_error);
            // the pathwise identity is much tighter than the MC error
            assert!((v - sim.value).abs() < 1e-3, "{v} vs {}", sim.value);
        }
    }

    #[test]
    fn one_dimensional_optimum_matches_grid_search() {
        // deterministic slope path X_t = t·ξ: k = 0 means l = λ_0 ∅
        let b = sample_fbm(1.0, GridSpec::uniform(1.0, 10).unwrap(), 2000, 3).unwrap();
        let e = expected_signature(&b, 9).unwrap();
        let obj = build_objective(0, &PayoffPolys::identity(), &e, 3.0).unwrap();
        let m = maximize(&obj, 8, 5).unwrap();
        let grid_best = (0..=60_000)
            .map(|i| -3.0 + i as f64 * 1e-4)
            .map(|l| obj.value(&[l]))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((m.value - grid_best).abs() < 1e-4, "{} vs {grid_best}", m.value);
        assert!(m.value >= grid_best - 1e-9);
    }

    #[test]
    fn restarts_are_monotone() {
        let (_, _, obj) = small_objective(0.1, 1, 5, 2.0);
        let mut prev = f64::NEG_INFINITY;
        for r in [1, 2, 4, 8] {
            let m = maximize(&obj, r, 9).unwrap();
            assert!(m.value >= prev);
            assert!(m.lambda.iter().map(|x| x.abs()).sum::<f64>() <= 2.0 + 1e-12);
            assert_eq!(m.restarts.len(), r);
            prev = m.value;
        }
        let mut csv = Vec::new();
        maximize(&obj, 2, 9).unwrap().write_report_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("restart,iterations,value,lambda_l1\n0,"));
    }

    #[test]
    fn martingale_payoff_words_vanish() {
        // fine interpolation keeps the piecewise-linear bias (order Δt) below the MC error
        let b = sample_fbm(0.5, GridSpec::new(1.0, 10, 200).unwrap(), 20_000, 11).unwrap();
        let n = 4;
        let e = expected_signature(&b, n).unwrap();
        for len in 0..=n - 2 {
            for i in 0..2usize.pow(len as u32) {
                let w = crate::free_tensor::index_word(2, crate::free_tensor::level_offset(2, len) + i).concat(&Word::new([2]));
                let f = DualPoly::word(2, w.clone());
                let vals = terminal_pairings(&b, &f).unwrap();
                let ev = StopEvaluation::from_samples(&vals);
                assert!((ev.value - e.tensor.coeff(&w)).abs() < 1e-12);
                if w.letters().ends_with(&[1, 2]) || w.len() == 1 {
                    assert!(ev.value.abs() < 3.5 * ev.std_error, "{w:?}: {} ± {}", ev.value, ev.std_error);
                }
            }
        }
    }
}
