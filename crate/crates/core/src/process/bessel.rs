//! Modified Bessel function of the second kind `K_ν(x)` for real `ν ≥ 0`, `x > 0`.
//!
//! The order is split as `ν = μ + n` with `|μ| ≤ ½`. `K_μ` and `K_{μ+1}` come
//! from Temme's series for `x < 2` and Steed's continued fraction otherwise,
//! then forward recurrence (stable for `K`) lifts them to order `ν`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 10_000;
const X_SWITCH: f64 = 2.0;

fn chebev(c: &[f64], x: f64) -> f64 {
    let y2 = 2.0 * x;
    let (mut d, mut dd) = (0.0, 0.0);
    for &cj in c[1..].iter().rev() {
        let sv = d;
        d = y2 * d - dd + cj;
        dd = sv;
    }
    x * d - dd + 0.5 * c[0]
}

/// `(Γ₁, Γ₂, 1/Γ(1+μ), 1/Γ(1−μ))` for `|μ| ≤ ½` via Chebyshev expansions.
fn temme_gammas(mu: f64) -> (f64, f64, f64, f64) {
    const C1: [f64; 7] =
        [-1.142022680371168e0, 6.5165112670737e-3, 3.087090173086e-4, -3.4706269649e-6, 6.9437664e-9, 3.67795e-11, -1.356e-13];
    const C2: [f64; 8] = [
        1.843740587300905e0,
        -7.68528408447867e-2,
        1.2719271366546e-3,
        -4.9717367042e-6,
        -3.31261198e-8,
        2.423096e-10,
        -1.702e-13,
        -1.49e-15,
    ];
    let xx = 8.0 * mu * mu - 1.0;
    let gam1 = chebev(&C1, xx);
    let gam2 = chebev(&C2, xx);
    (gam1, gam2, gam2 - mu * gam1, gam2 + mu * gam1)
}

/// `(K_μ(x), K_{μ+1}(x))` by Temme's series, `x < 2`.
fn temme(mu: f64, x: f64) -> Result<(f64, f64)> {
    let x2 = 0.5 * x;
    let pimu = PI * mu;
    let fact = if pimu.abs() < EPS { 1.0 } else { pimu / pimu.sin() };
    let d = -x2.ln();
    let e = mu * d;
    let fact2 = if e.abs() < EPS { 1.0 } else { e.sinh() / e };
    let (gam1, gam2, gampl, gammi) = temme_gammas(mu);
    let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
    let mut sum = ff;
    let ee = e.exp();
    let mut p = 0.5 * ee / gampl;
    let mut q = 0.5 / (ee * gammi);
    let mut c = 1.0;
    let dd = x2 * x2;
    let mut sum1 = p;
    let mu2 = mu * mu;
    for i in 1..=MAX_ITER {
        let fi = i as f64;
        ff = (fi * ff + p + q) / (fi * fi - mu2);
        c *= dd / fi;
        p /= fi - mu;
        q /= fi + mu;
        let del = c * ff;
        sum += del;
        sum1 += c * (p - fi * ff);
        if del.abs() < sum.abs() * EPS {
            return Ok((sum, sum1 * 2.0 / x));
        }
    }
    Err(Error::Numeric(format!("Bessel K series did not converge at x={x}")))
}

/// `(K_μ(x), K_{μ+1}(x))` by Steed's continued fraction, `x ≥ 2`.
fn steed(mu: f64, x: f64) -> Result<(f64, f64)> {
    let mu2 = mu * mu;
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut h = d;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25 - mu2;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..=MAX_ITER {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh *= b * d - 1.0;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < EPS {
            let h = a1 * h;
            let kmu = (PI / (2.0 * x)).sqrt() * (-x).exp() / s;
            let k1 = kmu * (mu + x + 0.5 - h) / x;
            return Ok((kmu, k1));
        }
    }
    Err(Error::Numeric(format!("Bessel K continued fraction did not converge at x={x}")))
}

/// `K_ν(x)`.
pub fn bessel_k(nu: f64, x: f64) -> Result<f64> {
    if !(nu.is_finite() && nu >= 0.0) {
        return Err(Error::Numeric(format!("invalid Bessel order {nu}")));
    }
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::Numeric(format!("invalid Bessel argument {x}")));
    }
    let n = (nu + 0.5).floor() as usize;
    let mu = nu - n as f64;
    let (mut k, mut k1) = if x < X_SWITCH { temme(mu, x)? } else { steed(mu, x)? };
    for i in 1..=n {
        let next = (mu + i as f64) * 2.0 / x * k1 + k;
        k = k1;
        k1 = next;
    }
    if !k.is_finite() {
        return Err(Error::Numeric(format!("Bessel K_{nu}({x}) overflowed")));
    }
    Ok(k)
}
