//! Word-side calculus: dual polynomials, the shuffle product, polynomial
//! shuffles `P⧢`, the shuffle exponential and the letter-append operator.

mod symbolic;

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Sub};

use crate::error::{Error, Result};
use crate::free_tensor::Word;

pub use symbolic::{symbolic_shuffle_exp_objective, LambdaPoly, PayoffPolys, ShuffleObjective, SymbolicDualPoly};

/// A finite linear functional on the tensor algebra: a sparse map from words
/// to real coefficients. Zero coefficients are never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct DualPoly {
    width: usize,
    terms: BTreeMap<Word, f64>,
}

impl DualPoly {
    pub fn zero(width: usize) -> Self {
        DualPoly { width, terms: BTreeMap::new() }
    }

    /// The single word `w` with coefficient one.
    pub fn word(width: usize, w: Word) -> Self {
        let mut p = Self::zero(width);
        p.add_term(w, 1.0);
        p
    }

    /// The empty word `∅`, which pairs to the scalar part.
    pub fn unit(width: usize) -> Self {
        Self::word(width, Word::empty())
    }

    pub fn from_terms(width: usize, terms: impl IntoIterator<Item = (Word, f64)>) -> Result<Self> {
        let mut p = Self::zero(width);
        for (w, c) in terms {
            if !w.fits_width(width) {
                return Err(Error::Domain(format!("word {w} has letters outside 1..={width}")));
            }
            p.add_term(w, c);
        }
        Ok(p)
    }

    /// Parses sums such as `"12 + 21"` or `"0.5*1 - 2*122"`.
    pub fn parse(width: usize, s: &str) -> Result<Self> {
        let mut terms = Vec::new();
        let normalized = s.replace('−', "-").replace('·', "*");
        let mut sign = 1.0;
        for tok in split_signed(&normalized) {
            let tok = tok.trim();
            if tok.is_empty() {
                continue;
            }
            if tok == "+" {
                sign = 1.0;
                continue;
            }
            if tok == "-" {
                sign = -1.0;
                continue;
            }
            let (coeff, word) = match tok.split_once('*') {
                Some((c, w)) => {
                    let c: f64 = c.trim().parse().map_err(|e| Error::Domain(format!("bad coefficient {c:?}: {e}")))?;
                    (c, Word::parse(w)?)
                }
                None => (1.0, Word::parse(tok)?),
            };
            terms.push((word, sign * coeff));
            sign = 1.0;
        }
        Self::from_terms(width, terms)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Adds `c` to the coefficient of `w`, dropping the entry if it cancels.
    pub fn add_term(&mut self, w: Word, c: f64) {
        if c == 0.0 {
            return;
        }
        let entry = self.terms.entry(w);
        match entry {
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let v = *o.get() + c;
                if v == 0.0 {
                    o.remove();
                } else {
                    *o.get_mut() = v;
                }
            }
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Word, f64)> {
        self.terms.iter().map(|(w, c)| (w, *c))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, w: &Word) -> f64 {
        self.terms.get(w).copied().unwrap_or(0.0)
    }

    /// Longest word with a nonzero coefficient (0 for the zero polynomial).
    pub fn deg(&self) -> usize {
        self.terms.keys().map(Word::len).max().unwrap_or(0)
    }

    /// `Σ |coefficients|`, the dual norm.
    pub fn l1_norm(&self) -> f64 {
        self.terms.values().map(|c| c.abs()).sum()
    }

    pub fn scale(&self, s: f64) -> DualPoly {
        let mut p = Self::zero(self.width);
        for (w, c) in &self.terms {
            p.add_term(w.clone(), c * s);
        }
        p
    }

    /// Drops all words longer than `level`.
    pub fn truncate(&self, level: usize) -> DualPoly {
        DualPoly {
            width: self.width,
            terms: self.terms.iter().filter(|(w, _)| w.len() <= level).map(|(w, c)| (w.clone(), *c)).collect(),
        }
    }

    fn check_width(&self, other: &DualPoly) -> Result<()> {
        if self.width != other.width {
            return Err(Error::Dimension(format!("dual widths differ: {} vs {}", self.width, other.width)));
        }
        Ok(())
    }
}

impl Add for &DualPoly {
    type Output = DualPoly;

    fn add(self, rhs: &DualPoly) -> DualPoly {
        assert_eq!(self.width, rhs.width, "dual widths differ");
        let mut out = self.clone();
        for (w, c) in &rhs.terms {
            out.add_term(w.clone(), *c);
        }
        out
    }
}

impl Sub for &DualPoly {
    type Output = DualPoly;

    fn sub(self, rhs: &DualPoly) -> DualPoly {
        self + &rhs.scale(-1.0)
    }
}

/// Renders as `3.0·12 − 1.5·221`; the empty word prints as `∅`.
impl fmt::Display for DualPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (w, c)) in self.terms.iter().enumerate() {
            let (sep, mag) = match (i, *c < 0.0) {
                (0, false) => ("", *c),
                (0, true) => ("−", -*c),
                (_, false) => (" + ", *c),
                (_, true) => (" − ", -*c),
            };
            write!(f, "{sep}{mag:?}·{w}")?;
        }
        Ok(())
    }
}

fn split_signed(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut prev_nonspace: Option<char> = None;
    for ch in s.chars() {
        // a sign right after 'e' belongs to an exponent
        let exponent = matches!(prev_nonspace, Some('e') | Some('E')) && cur.chars().any(|c| c.is_ascii_digit());
        if (ch == '+' || ch == '-') && !exponent {
            if !cur.trim().is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            out.push(ch.to_string());
            cur.clear();
        } else {
            cur.push(ch);
        }
        if !ch.is_whitespace() {
            prev_nonspace = Some(ch);
        }
    }
    if !cur.trim().is_empty() {
        out.push(cur);
    }
    out
}

/// Shuffle of two words with exact integer multiplicities.
///
/// Dynamic programming over prefix pairs: the shuffle of `u[..i]` and
/// `v[..j]` is `(u[..i-1] ⧢ v[..j]) u_i + (u[..i] ⧢ v[..j-1]) v_j`.
pub fn shuffle_words(u: &[u8], v: &[u8]) -> BTreeMap<Word, u64> {
    let (a, b) = (u.len(), v.len());
    let mut table: Vec<Vec<BTreeMap<Word, u64>>> = vec![vec![BTreeMap::new(); b + 1]; a + 1];
    for i in 0..=a {
        for j in 0..=b {
            let cell = if i == 0 {
                BTreeMap::from([(Word::new(&v[..j]), 1)])
            } else if j == 0 {
                BTreeMap::from([(Word::new(&u[..i]), 1)])
            } else {
                let mut cell = BTreeMap::new();
                for (w, n) in &table[i - 1][j] {
                    *cell.entry(w.push(u[i - 1])).or_insert(0) += n;
                }
                for (w, n) in &table[i][j - 1] {
                    *cell.entry(w.push(v[j - 1])).or_insert(0) += n;
                }
                cell
            };
            table[i][j] = cell;
        }
    }
    std::mem::take(&mut table[a][b])
}

/// Bilinear shuffle product `u ⧢ v`.
pub fn shuffle(u: &DualPoly, v: &DualPoly) -> Result<DualPoly> {
    shuffle_truncated(u, v, usize::MAX)
}

/// Shuffle product keeping only words of length at most `max_len`.
pub fn shuffle_truncated(u: &DualPoly, v: &DualPoly, max_len: usize) -> Result<DualPoly> {
    u.check_width(v)?;
    let mut acc: BTreeMap<Word, f64> = BTreeMap::new();
    for (wu, cu) in &u.terms {
        for (wv, cv) in &v.terms {
            if wu.len() + wv.len() > max_len {
                continue;
            }
            let c = cu * cv;
            for (w, n) in shuffle_words(wu.letters(), wv.letters()) {
                *acc.entry(w).or_insert(0.0) += c * n as f64;
            }
        }
    }
    let mut out = DualPoly::zero(u.width);
    for (w, c) in acc {
        out.add_term(w, c);
    }
    Ok(out)
}

/// `P⧢(l) = λ_0 ∅ + λ_1 l + λ_2 l⧢l + ...` for `P(x) = Σ λ_k x^k`.
pub fn shuffle_poly(coeffs: &[f64], l: &DualPoly) -> DualPoly {
    let mut out = DualPoly::zero(l.width);
    let mut power = DualPoly::unit(l.width);
    for (k, &c) in coeffs.iter().enumerate() {
        if k > 0 {
            power = shuffle(&power, l).expect("same width");
        }
        if c != 0.0 {
            out = &out + &power.scale(c);
        }
    }
    out
}

/// Shuffle exponential `exp(a_0) Σ_r l̃^{⧢r}/r!` truncated to words of length `≤ level`,
/// where `a_0` is the coefficient of `∅` and `l̃ = l - a_0 ∅`.
pub fn shuffle_exp(l: &DualPoly, level: usize) -> DualPoly {
    let a0 = l.coeff(&Word::empty());
    let mut tilde = l.truncate(level);
    tilde.terms.remove(&Word::empty());
    let mut out = DualPoly::unit(l.width);
    let mut power = DualPoly::unit(l.width);
    for r in 1..=level {
        power = shuffle_truncated(&power, &tilde, level).expect("same width").scale(1.0 / r as f64);
        if power.is_zero() {
            break;
        }
        out = &out + &power;
    }
    out.scale(a0.exp())
}

/// Right-appends `letter` to every word: `Σ c_w w ↦ Σ c_w (w letter)`.
/// With letter 1 this is integration in time.
pub fn append_letter(l: &DualPoly, letter: u8) -> Result<DualPoly> {
    if letter == 0 || letter as usize > l.width {
        return Err(Error::Domain(format!("letter {letter} outside 1..={}", l.width)));
    }
    Ok(DualPoly { width: l.width, terms: l.terms.iter().map(|(w, c)| (w.push(letter), *c)).collect() })
}
