//! Truncated tensor algebra `T^N(R^m)` with dense storage.
//!
//! Coefficients are stored level by level; inside a level a word
//! `i_1 ... i_n` (letters in `1..=m`) sits at the base-`m` offset
//! `sum (i_k - 1) m^(n-k)`. The whole layout is therefore graded
//! lexicographic and the index of a concatenation `uv` inside level
//! `|u| + |v|` is `idx(u) * m^|v| + idx(v)`.

use std::cmp::Ordering;
use std::fmt;
use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};
use crate::shuffle::{shuffle_words, DualPoly};

/// A word over the alphabet `{1, ..., m}`. Letter 1 is the time component.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Word(Vec<u8>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn new(letters: impl Into<Vec<u8>>) -> Self {
        Word(letters.into())
    }

    /// Parses digit strings such as `"122"`; `""` and `"∅"` give the empty word.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "∅" {
            return Ok(Word::empty());
        }
        s.chars()
            .map(|c| {
                c.to_digit(10)
                    .filter(|&d| d >= 1)
                    .map(|d| d as u8)
                    .ok_or_else(|| Error::Domain(format!("invalid letter {c:?} in word {s:?}")))
            })
            .collect::<Result<Vec<u8>>>()
            .map(Word)
    }

    pub fn letters(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Right concatenation with a single letter.
    pub fn push(&self, letter: u8) -> Word {
        let mut letters = self.0.clone();
        letters.push(letter);
        Word(letters)
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut letters = self.0.clone();
        letters.extend_from_slice(&other.0);
        Word(letters)
    }

    pub fn fits_width(&self, width: usize) -> bool {
        self.0.iter().all(|&l| l >= 1 && (l as usize) <= width)
    }
}

/// Graded lexicographic order: shorter words first, then letter by letter.
impl Ord for Word {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.len().cmp(&other.0.len()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "∅");
        }
        for &l in &self.0 {
            if l < 10 {
                write!(f, "{l}")?;
            } else {
                write!(f, "[{l}]")?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Word({self})")
    }
}

/// Number of coefficients of `T^level(R^width)`: `(m^(N+1) - 1) / (m - 1)`.
pub fn tensor_dim(width: usize, level: usize) -> usize {
    level_offset(width, level + 1)
}

/// Offset of the first coefficient of tensor level `n`.
pub fn level_offset(width: usize, n: usize) -> usize {
    if width == 1 {
        n
    } else {
        (width.pow(n as u32) - 1) / (width - 1)
    }
}

/// A truncated element of the tensor algebra.
#[derive(Clone, Debug, PartialEq)]
pub struct FreeTensor {
    width: usize,
    level: usize,
    coeffs: Vec<f64>,
}

impl FreeTensor {
    pub fn zero(width: usize, level: usize) -> Self {
        assert!(width >= 1, "tensor width must be positive");
        FreeTensor { width, level, coeffs: vec![0.0; tensor_dim(width, level)] }
    }

    /// The unit `1 = (1, 0, 0, ...)`.
    pub fn one(width: usize, level: usize) -> Self {
        let mut t = Self::zero(width, level);
        t.coeffs[0] = 1.0;
        t
    }

    pub fn from_coeffs(width: usize, level: usize, coeffs: Vec<f64>) -> Result<Self> {
        if width == 0 {
            return Err(Error::Dimension("tensor width must be positive".into()));
        }
        let dim = tensor_dim(width, level);
        if coeffs.len() != dim {
            return Err(Error::Dimension(format!(
                "expected {dim} coefficients for width {width} level {level}, got {}",
                coeffs.len()
            )));
        }
        Ok(FreeTensor { width, level, coeffs })
    }

    /// Tensor whose only nonzero level is level one, holding `v`.
    pub fn from_level1(level: usize, v: &[f64]) -> Self {
        let mut t = Self::zero(v.len(), level);
        if level >= 1 {
            t.coeffs[1..1 + v.len()].copy_from_slice(v);
        }
        t
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn scalar(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn level_block(&self, n: usize) -> &[f64] {
        &self.coeffs[level_offset(self.width, n)..level_offset(self.width, n + 1)]
    }

    /// Index of `word` in the coefficient array, if it fits in this tensor.
    pub fn index_of(&self, word: &Word) -> Option<usize> {
        if word.len() > self.level || !word.fits_width(self.width) {
            return None;
        }
        Some(word_index(self.width, word.letters()))
    }

    pub fn word_at(&self, index: usize) -> Word {
        index_word(self.width, index)
    }

    pub fn get(&self, word: &Word) -> Option<f64> {
        self.index_of(word).map(|i| self.coeffs[i])
    }

    /// Coefficient of `word`; panics when the word does not fit.
    pub fn coeff(&self, word: &Word) -> f64 {
        self.get(word).unwrap_or_else(|| panic!("word {word} outside width {} level {}", self.width, self.level))
    }

    pub fn set(&mut self, word: &Word, value: f64) -> Result<()> {
        let i = self.index_of(word).ok_or(Error::Truncation { degree: word.len(), level: self.level })?;
        self.coeffs[i] = value;
        Ok(())
    }

    /// `sup` norm over all coefficients.
    pub fn sup_norm(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Projection `π_{≤n}` onto a lower (or equal) level.
    pub fn truncate(&self, level: usize) -> FreeTensor {
        let level = level.min(self.level);
        FreeTensor {
            width: self.width,
            level,
            coeffs: self.coeffs[..tensor_dim(self.width, level)].to_vec(),
        }
    }

    fn check_same_shape(&self, other: &FreeTensor) -> Result<()> {
        if self.width != other.width || self.level != other.level {
            return Err(Error::Dimension(format!(
                "tensor shapes differ: (m={}, N={}) vs (m={}, N={})",
                self.width, self.level, other.width, other.level
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &FreeTensor) -> Result<FreeTensor> {
        self.check_same_shape(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        Ok(FreeTensor { width: self.width, level: self.level, coeffs })
    }

    pub fn sub(&self, other: &FreeTensor) -> Result<FreeTensor> {
        self.check_same_shape(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Ok(FreeTensor { width: self.width, level: self.level, coeffs })
    }

    pub fn scale(&self, c: f64) -> FreeTensor {
        FreeTensor { width: self.width, level: self.level, coeffs: self.coeffs.iter().map(|a| a * c).collect() }
    }

    /// Truncated product `a ⊗ b`.
    pub fn tensor_mul(&self, other: &FreeTensor) -> Result<FreeTensor> {
        self.check_same_shape(other)?;
        let mut out = vec![0.0; self.coeffs.len()];
        mul_into(self.width, self.level, &self.coeffs, &other.coeffs, &mut out);
        Ok(FreeTensor { width: self.width, level: self.level, coeffs: out })
    }

    /// Tensor exponential `Σ_{k≤N} a^{⊗k}/k!`; requires a zero scalar part.
    pub fn exp(&self) -> Result<FreeTensor> {
        if self.scalar() != 0.0 {
            return Err(Error::Domain(format!(
                "tensor exponential needs a zero scalar part, got {}",
                self.scalar()
            )));
        }
        // Horner: 1 + a(1 + a/2(1 + a/3(...)))
        let mut acc = FreeTensor::one(self.width, self.level);
        let mut tmp = vec![0.0; acc.coeffs.len()];
        for k in (1..=self.level).rev() {
            tmp.iter_mut().for_each(|c| *c = 0.0);
            mul_into(self.width, self.level, &self.coeffs, &acc.coeffs, &mut tmp);
            let inv = 1.0 / k as f64;
            acc.coeffs.iter_mut().zip(&tmp).for_each(|(a, t)| *a = t * inv);
            acc.coeffs[0] += 1.0;
        }
        Ok(acc)
    }

    /// Tensor logarithm `Σ_{k≥1} (-1)^{k+1} x^{⊗k}/k` with `x = g - 1`; requires scalar part 1.
    pub fn log(&self) -> Result<FreeTensor> {
        if (self.scalar() - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "tensor logarithm needs scalar part 1, got {}",
                self.scalar()
            )));
        }
        let mut x = self.clone();
        x.coeffs[0] = 0.0;
        if self.level == 0 {
            return Ok(x);
        }
        // x(1/1 - x(1/2 - x(1/3 - ... x/N)))
        let mut acc = FreeTensor::zero(self.width, self.level);
        acc.coeffs[0] = 1.0 / self.level as f64;
        let mut tmp = vec![0.0; acc.coeffs.len()];
        for k in (1..self.level).rev() {
            tmp.iter_mut().for_each(|c| *c = 0.0);
            mul_into(self.width, self.level, &x.coeffs, &acc.coeffs, &mut tmp);
            acc.coeffs.iter_mut().zip(&tmp).for_each(|(a, t)| *a = -t);
            acc.coeffs[0] += 1.0 / k as f64;
        }
        tmp.iter_mut().for_each(|c| *c = 0.0);
        mul_into(self.width, self.level, &x.coeffs, &acc.coeffs, &mut tmp);
        Ok(FreeTensor { width: self.width, level: self.level, coeffs: tmp })
    }

    /// Group inverse `Σ_{n≤N} (1 - g)^{⊗n}`, exact at the truncation level.
    pub fn inverse(&self) -> Result<FreeTensor> {
        if (self.scalar() - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "group inverse needs scalar part 1, got {}",
                self.scalar()
            )));
        }
        let mut h = self.scale(-1.0);
        h.coeffs[0] = 0.0;
        // 1 + h(1 + h(1 + ...)), h = 1 - g
        let mut acc = FreeTensor::one(self.width, self.level);
        let mut tmp = vec![0.0; acc.coeffs.len()];
        for _ in 0..self.level {
            tmp.iter_mut().for_each(|c| *c = 0.0);
            mul_into(self.width, self.level, &h.coeffs, &acc.coeffs, &mut tmp);
            acc.coeffs.copy_from_slice(&tmp);
            acc.coeffs[0] += 1.0;
        }
        Ok(acc)
    }

    /// Checks `⟨u ⧢ v, a⟩ = ⟨u, a⟩⟨v, a⟩` for every pair of nonempty words with
    /// `|u| + |v| ≤ N`, plus a unit scalar part. The tolerance is relative to
    /// `1 + |⟨u, a⟩⟨v, a⟩|`.
    pub fn is_grouplike(&self, tol: f64) -> bool {
        self.max_shuffle_defect() <= tol
    }

    /// Largest relative defect of the shuffle relation (see [`Self::is_grouplike`]).
    pub fn max_shuffle_defect(&self) -> f64 {
        let mut worst = (self.scalar() - 1.0).abs();
        let m = self.width;
        for lu in 1..=self.level / 2 {
            for iu in 0..m.pow(lu as u32) {
                let u = index_word(m, level_offset(m, lu) + iu);
                let au = self.coeffs[level_offset(m, lu) + iu];
                for lv in lu..=(self.level - lu) {
                    let start = if lv == lu { iu } else { 0 };
                    for iv in start..m.pow(lv as u32) {
                        let v = index_word(m, level_offset(m, lv) + iv);
                        let av = self.coeffs[level_offset(m, lv) + iv];
                        let lhs: f64 = shuffle_words(u.letters(), v.letters())
                            .iter()
                            .map(|(w, n)| *n as f64 * self.coeffs[word_index(m, w.letters())])
                            .sum();
                        let rhs = au * av;
                        worst = worst.max((lhs - rhs).abs() / (1.0 + rhs.abs()));
                    }
                }
            }
        }
        worst
    }

    /// Binary record: `u32 width`, `u32 level` (little endian), then the
    /// coefficients as little-endian `f64` in graded-lex order.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.width as u32).to_le_bytes())?;
        w.write_all(&(self.level as u32).to_le_bytes())?;
        for c in &self.coeffs {
            w.write_all(&c.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<FreeTensor> {
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let width = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b4)?;
        let level = u32::from_le_bytes(b4) as usize;
        if width == 0 {
            return Err(Error::Dimension("tensor width must be positive".into()));
        }
        let mut coeffs = vec![0.0; tensor_dim(width, level)];
        let mut b8 = [0u8; 8];
        for c in coeffs.iter_mut() {
            r.read_exact(&mut b8)?;
            *c = f64::from_le_bytes(b8);
        }
        FreeTensor::from_coeffs(width, level, coeffs)
    }

    /// CSV record: first line `m,N`, then one coefficient per line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{},{}", self.width, self.level)?;
        for c in &self.coeffs {
            writeln!(w, "{c}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<FreeTensor> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Dimension("empty tensor record".into()))??;
        let mut parts = header.split(',').map(|s| s.trim().parse::<usize>());
        let (width, level) = match (parts.next(), parts.next()) {
            (Some(Ok(m)), Some(Ok(n))) => (m, n),
            _ => return Err(Error::Dimension(format!("bad tensor header {header:?}"))),
        };
        let coeffs = lines
            .filter_map(|l| match l {
                Ok(l) if l.trim().is_empty() => None,
                other => Some(other),
            })
            .map(|l| {
                let l = l?;
                l.trim().parse::<f64>().map_err(|e| Error::Dimension(format!("bad coefficient {l:?}: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        FreeTensor::from_coeffs(width, level, coeffs)
    }
}

/// Pairing `⟨l, a⟩ = Σ_w l[w] a[w]`. Duals of lower degree than the tensor
/// level are allowed; a dual of higher degree is a truncation error.
pub fn pair(l: &DualPoly, a: &FreeTensor) -> Result<f64> {
    if l.width() != a.width {
        return Err(Error::Dimension(format!(
            "dual width {} vs tensor width {}",
            l.width(),
            a.width
        )));
    }
    if l.deg() > a.level {
        return Err(Error::Truncation { degree: l.deg(), level: a.level });
    }
    Ok(l.terms().map(|(w, c)| c * a.coeffs[word_index(a.width, w.letters())]).sum())
}

/// Graded-lex index of a word with letters in `1..=width`.
pub fn word_index(width: usize, letters: &[u8]) -> usize {
    let within = letters.iter().fold(0usize, |acc, &l| acc * width + (l as usize - 1));
    level_offset(width, letters.len()) + within
}

/// Inverse of [`word_index`].
pub fn index_word(width: usize, index: usize) -> Word {
    let mut n = 0;
    while level_offset(width, n + 1) <= index {
        n += 1;
    }
    let mut rest = index - level_offset(width, n);
    let mut letters = vec![0u8; n];
    for slot in letters.iter_mut().rev() {
        *slot = (rest % width) as u8 + 1;
        rest /= width;
    }
    Word(letters)
}

/// `out += a ⊗ b` truncated at `level`; all slices are full-length coefficient arrays.
pub(crate) fn mul_into(width: usize, level: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    for n in 0..=level {
        let off_n = level_offset(width, n);
        for i in 0..=n {
            let j = n - i;
            let ai = &a[level_offset(width, i)..level_offset(width, i + 1)];
            let bj = &b[level_offset(width, j)..level_offset(width, j + 1)];
            let stride = bj.len();
            for (ia, &x) in ai.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                let dst = &mut out[off_n + ia * stride..off_n + (ia + 1) * stride];
                for (d, &y) in dst.iter_mut().zip(bj) {
                    *d += x * y;
                }
            }
        }
    }
}
