//! Dual polynomials whose coefficients are real polynomials in formal
//! variables `λ_0 … λ_n`, and the damped-payoff objective built from them.

use std::collections::BTreeMap;
use std::fmt;

use super::{shuffle_poly, shuffle_words, DualPoly};
use crate::error::{Error, Result};
use crate::free_tensor::{index_word, tensor_dim, FreeTensor, Word};

/// Sparse multivariate polynomial: exponent vector → coefficient.
#[derive(Clone, Debug, PartialEq)]
pub struct LambdaPoly {
    nvars: usize,
    terms: BTreeMap<Vec<u16>, f64>,
}

impl LambdaPoly {
    pub fn zero(nvars: usize) -> Self {
        LambdaPoly { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Self::zero(nvars);
        p.add_monomial(vec![0; nvars], c);
        p
    }

    /// The variable `λ_i`.
    pub fn var(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        let mut p = Self::zero(nvars);
        p.add_monomial(e, 1.0);
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn monomials(&self) -> impl Iterator<Item = (&[u16], f64)> {
        self.terms.iter().map(|(e, c)| (e.as_slice(), *c))
    }

    /// Total degree (0 for the zero polynomial).
    pub fn degree(&self) -> usize {
        self.terms.keys().map(|e| e.iter().map(|&k| k as usize).sum()).max().unwrap_or(0)
    }

    fn add_monomial(&mut self, e: Vec<u16>, c: f64) {
        if c == 0.0 {
            return;
        }
        let v = self.terms.entry(e).or_insert(0.0);
        *v += c;
        if *v == 0.0 {
            self.terms.retain(|_, c| *c != 0.0);
        }
    }

    pub fn add_scaled(&mut self, other: &LambdaPoly, s: f64) {
        for (e, c) in &other.terms {
            self.add_monomial(e.clone(), c * s);
        }
    }

    pub fn scale(&self, s: f64) -> LambdaPoly {
        let mut p = Self::zero(self.nvars);
        p.add_scaled(self, s);
        p
    }

    pub fn mul(&self, other: &LambdaPoly) -> LambdaPoly {
        let mut p = Self::zero(self.nvars);
        for (e1, c1) in &self.terms {
            for (e2, c2) in &other.terms {
                let e: Vec<u16> = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                p.add_monomial(e, c1 * c2);
            }
        }
        p
    }

    /// `∂/∂λ_i`.
    pub fn derivative(&self, i: usize) -> LambdaPoly {
        let mut p = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[i] > 0 {
                let mut d = e.clone();
                d[i] -= 1;
                p.add_monomial(d, c * e[i] as f64);
            }
        }
        p
    }

    pub fn eval(&self, lambda: &[f64]) -> f64 {
        assert_eq!(lambda.len(), self.nvars, "wrong number of variables");
        self.terms
            .iter()
            .map(|(e, c)| e.iter().zip(lambda).fold(*c, |acc, (&k, &x)| if k == 0 { acc } else { acc * x.powi(k as i32) }))
            .sum()
    }
}

impl fmt::Display for LambdaPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (e, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c:?}")?;
            for (v, &k) in e.iter().enumerate() {
                match k {
                    0 => {}
                    1 => write!(f, "·λ{v}")?,
                    _ => write!(f, "·λ{v}^{k}")?,
                }
            }
        }
        Ok(())
    }
}

/// Word → λ-polynomial map. Substituting numbers for all λ gives a [`DualPoly`].
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolicDualPoly {
    width: usize,
    nvars: usize,
    terms: BTreeMap<Word, LambdaPoly>,
}

impl SymbolicDualPoly {
    pub fn zero(width: usize, nvars: usize) -> Self {
        SymbolicDualPoly { width, nvars, terms: BTreeMap::new() }
    }

    /// `Σ_i λ_i w_i` over all words of length `≤ k`, in graded-lex order.
    pub fn generic(width: usize, k: usize) -> Self {
        let nvars = tensor_dim(width, k);
        let mut p = Self::zero(width, nvars);
        for i in 0..nvars {
            p.add_term(index_word(width, i), &LambdaPoly::var(nvars, i));
        }
        p
    }

    pub fn from_dual(l: &DualPoly, nvars: usize) -> Self {
        let mut p = Self::zero(l.width(), nvars);
        for (w, c) in l.terms() {
            p.add_term(w.clone(), &LambdaPoly::constant(nvars, c));
        }
        p
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Word, &LambdaPoly)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn deg(&self) -> usize {
        self.terms.keys().map(Word::len).max().unwrap_or(0)
    }

    pub fn coeff(&self, w: &Word) -> Option<&LambdaPoly> {
        self.terms.get(w)
    }

    pub fn add_term(&mut self, w: Word, p: &LambdaPoly) {
        let e = self.terms.entry(w).or_insert_with(|| LambdaPoly::zero(p.nvars));
        e.add_scaled(p, 1.0);
        if e.is_zero() {
            self.terms.retain(|_, p| !p.is_zero());
        }
    }

    pub fn add_scaled(&mut self, other: &SymbolicDualPoly, s: f64) {
        for (w, p) in &other.terms {
            self.add_term(w.clone(), &p.scale(s));
        }
    }

    pub fn scale(&self, s: f64) -> SymbolicDualPoly {
        let mut out = Self::zero(self.width, self.nvars);
        out.add_scaled(self, s);
        out
    }

    /// Shuffle product keeping words of length `≤ max_len`.
    pub fn shuffle_truncated(&self, other: &SymbolicDualPoly, max_len: usize) -> SymbolicDualPoly {
        let mut out = Self::zero(self.width, self.nvars);
        for (wu, pu) in &self.terms {
            for (wv, pv) in &other.terms {
                if wu.len() + wv.len() > max_len {
                    continue;
                }
                let prod = pu.mul(pv);
                for (w, n) in shuffle_words(wu.letters(), wv.letters()) {
                    out.add_term(w, &prod.scale(n as f64));
                }
            }
        }
        out
    }

    pub fn append_letter(&self, letter: u8) -> SymbolicDualPoly {
        SymbolicDualPoly {
            width: self.width,
            nvars: self.nvars,
            terms: self.terms.iter().map(|(w, p)| (w.push(letter), p.clone())).collect(),
        }
    }

    /// `Σ_r a^{⧢r}/r!` truncated at `level`; `a` must have no empty-word term.
    fn exp_nilpotent(&self, level: usize) -> SymbolicDualPoly {
        debug_assert!(self.coeff(&Word::empty()).is_none());
        let mut out = Self::zero(self.width, self.nvars);
        let unit = LambdaPoly::constant(self.nvars, 1.0);
        out.add_term(Word::empty(), &unit);
        let mut power = out.clone();
        for r in 1..=level {
            power = power.shuffle_truncated(self, level).scale(1.0 / r as f64);
            if power.is_zero() {
                break;
            }
            out.add_scaled(&power, 1.0);
        }
        out
    }

    pub fn derivative(&self, i: usize) -> SymbolicDualPoly {
        let mut out = Self::zero(self.width, self.nvars);
        for (w, p) in &self.terms {
            out.add_term(w.clone(), &p.derivative(i));
        }
        out
    }

    pub fn substitute(&self, lambda: &[f64]) -> DualPoly {
        let mut out = DualPoly::zero(self.width);
        for (w, p) in &self.terms {
            out.add_term(w.clone(), p.eval(lambda));
        }
        out
    }

    /// Pairs every word with `e`, giving one real polynomial in λ.
    pub fn pair(&self, e: &FreeTensor) -> Result<LambdaPoly> {
        if e.width() != self.width {
            return Err(Error::Dimension(format!("dual width {} vs tensor width {}", self.width, e.width())));
        }
        if self.deg() > e.level() {
            return Err(Error::Truncation { degree: self.deg(), level: e.level() });
        }
        let mut out = LambdaPoly::zero(self.nvars);
        for (w, p) in &self.terms {
            out.add_scaled(p, e.coeff(w));
        }
        Ok(out)
    }
}

/// Payoff `Y_t = G(X_t) + ∫_0^t L(X_s) ds` with polynomial `G`, `L` given by
/// ascending coefficients, where `X` is the first non-time coordinate (letter 2).
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PayoffPolys {
    pub g: Vec<f64>,
    pub l: Vec<f64>,
}

impl PayoffPolys {
    /// `Y = X`.
    pub fn identity() -> Self {
        PayoffPolys { g: vec![0.0, 1.0], l: vec![] }
    }

    /// Coefficients of `G'`.
    pub fn g_prime(&self) -> Vec<f64> {
        self.g.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect()
    }

    fn degree(coeffs: &[f64]) -> Option<usize> {
        coeffs.iter().rposition(|&c| c != 0.0)
    }

    /// Number of letters the payoff part adds on top of the damping factor.
    pub fn appendage(&self) -> usize {
        let gp = Self::degree(&self.g_prime()).map(|d| d + 1);
        let l = Self::degree(&self.l).map(|d| d + 1);
        gp.into_iter().chain(l).max().unwrap_or(0)
    }
}

/// The symbolic objective together with its formal gradient.
#[derive(Clone, Debug)]
pub struct ShuffleObjective {
    /// Word `i` of length `≤ k` carries variable `λ_i`.
    pub variables: Vec<Word>,
    pub objective: SymbolicDualPoly,
    pub gradient: Vec<SymbolicDualPoly>,
    /// Truncation level used for the shuffle exponential.
    pub exp_level: usize,
}

/// Builds `(exp⧢(−(l⧢l)1) ⧢ G′⧢(2))2 + (exp⧢(−(l⧢l)1) ⧢ L⧢(2))1 + G(0)∅`
/// for the generic `l = Σ λ_i w_i` over all words of length `≤ k`.
///
/// The exponential is truncated at `level − appendage` so that every word
/// of the result has length `≤ level`. It must be long enough to hold
/// `(l⧢l)1` in full.
pub fn symbolic_shuffle_exp_objective(width: usize, level: usize, k: usize, payoff: &PayoffPolys) -> Result<ShuffleObjective> {
    if width < 2 {
        return Err(Error::Domain("payoff needs a space coordinate (width ≥ 2)".into()));
    }
    let appendage = payoff.appendage();
    let needed = 2 * k + 1 + appendage;
    if needed > level {
        return Err(Error::Truncation { degree: needed, level });
    }
    let exp_level = level - appendage;

    let l = SymbolicDualPoly::generic(width, k);
    let nvars = l.nvars();
    let damping = l.shuffle_truncated(&l, exp_level - 1).append_letter(1).scale(-1.0);
    let ex = damping.exp_nilpotent(exp_level);

    let mut objective = SymbolicDualPoly::zero(width, nvars);
    let x = DualPoly::word(width, Word::new([2]));
    for (coeffs, letter) in [(payoff.g_prime(), 2u8), (payoff.l.clone(), 1u8)] {
        if PayoffPolys::degree(&coeffs).is_none() {
            continue;
        }
        let p = SymbolicDualPoly::from_dual(&shuffle_poly(&coeffs, &x), nvars);
        objective.add_scaled(&ex.shuffle_truncated(&p, usize::MAX).append_letter(letter), 1.0);
    }
    let g0 = payoff.g.first().copied().unwrap_or(0.0);
    objective.add_term(Word::empty(), &LambdaPoly::constant(nvars, g0));

    let gradient = (0..nvars).map(|i| objective.derivative(i)).collect();
    Ok(ShuffleObjective { variables: (0..nvars).map(|i| index_word(width, i)).collect(), objective, gradient, exp_level })
}
