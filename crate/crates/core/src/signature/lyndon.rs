//! Lyndon words, their standard bracketing, and projection of Lie elements
//! onto Lyndon coordinates.

use crate::error::{Error, Result};
use crate::free_tensor::{level_offset, word_index, FreeTensor, Word};

/// Möbius function by trial division.
pub fn mobius(n: usize) -> i64 {
    let mut n = n;
    let mut sign = 1;
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            n /= p;
            if n % p == 0 {
                return 0;
            }
            sign = -sign;
        }
        p += 1;
    }
    if n > 1 {
        sign = -sign;
    }
    sign
}

/// Number of Lyndon words of length exactly `n` over `m` letters.
pub fn lyndon_count(m: usize, n: usize) -> usize {
    let total: i128 = (1..=n).filter(|d| n % d == 0).map(|d| mobius(n / d) as i128 * (m as i128).pow(d as u32)).sum();
    (total / n as i128) as usize
}

/// `(σ, η)`: tensor coordinates excluding the empty word, and free Lie
/// algebra dimension, for width `m` and level `n`.
pub fn dims(m: usize, n: usize) -> (usize, usize) {
    let sigma = (1..=n).map(|k| m.pow(k as u32)).sum();
    let eta = (1..=n).map(|k| lyndon_count(m, k)).sum();
    (sigma, eta)
}

/// Lyndon words of length `≤ n` over `{1..m}` in lexicographic order (Duval).
pub fn lyndon_words(m: usize, n: usize) -> Vec<Word> {
    let mut out = Vec::new();
    if m == 0 || n == 0 {
        return out;
    }
    let mut w: Vec<u8> = vec![1];
    loop {
        out.push(Word::new(w.clone()));
        let k = w.len();
        while w.len() < n {
            let c = w[w.len() - k];
            w.push(c);
        }
        while w.last() == Some(&(m as u8)) {
            w.pop();
        }
        match w.last_mut() {
            Some(c) => *c += 1,
            None => break,
        }
    }
    out
}

fn is_lyndon(w: &[u8]) -> bool {
    (1..w.len()).all(|i| w[i..] > *w)
}

/// Standard factorization `w = uv` with `v` the longest proper Lyndon suffix.
pub fn standard_factorization(w: &Word) -> Option<(Word, Word)> {
    let l = w.letters();
    (1..l.len()).find(|&i| is_lyndon(&l[i..])).map(|i| (Word::new(&l[..i]), Word::new(&l[i..])))
}

/// Lyndon basis of the truncated free Lie algebra with the change-of-basis
/// data needed to read off coordinates of a Lie element.
#[derive(Clone, Debug)]
pub struct LyndonBasis {
    width: usize,
    level: usize,
    words: Vec<Word>,
    /// Dense expansion of each bracket on its own level block.
    expansions: Vec<Vec<f64>>,
    /// Per level: basis index range and the inverse of `⟨w_i, P(w_j)⟩`.
    blocks: Vec<LevelBlock>,
}

#[derive(Clone, Debug)]
struct LevelBlock {
    start: usize,
    len: usize,
    /// Tensor index (within the level block) of each Lyndon word.
    word_pos: Vec<usize>,
    /// Row-major `len × len` inverse.
    inverse: Vec<f64>,
}

impl LyndonBasis {
    pub fn new(width: usize, level: usize) -> Self {
        let mut words = lyndon_words(width, level);
        words.sort();
        let mut expansions: Vec<Vec<f64>> = Vec::with_capacity(words.len());
        for w in &words {
            let e = match standard_factorization(w) {
                None => {
                    let mut e = vec![0.0; width];
                    e[w.letters()[0] as usize - 1] = 1.0;
                    e
                }
                Some((u, v)) => {
                    let iu = words.binary_search(&u).expect("factor is Lyndon");
                    let iv = words.binary_search(&v).expect("factor is Lyndon");
                    bracket(&expansions[iu], &expansions[iv])
                }
            };
            expansions.push(e);
        }

        let mut blocks = Vec::with_capacity(level);
        let mut start = 0;
        for n in 1..=level {
            let len = words[start..].iter().take_while(|w| w.len() == n).count();
            let word_pos: Vec<usize> = words[start..start + len].iter().map(|w| word_index(width, w.letters()) - level_offset(width, n)).collect();
            let mut a = vec![0.0; len * len];
            for i in 0..len {
                for j in 0..len {
                    a[i * len + j] = expansions[start + j][word_pos[i]];
                }
            }
            blocks.push(LevelBlock { start, len, word_pos, inverse: invert(&a, len) });
            start += len;
        }
        LyndonBasis { width, level, words, expansions, blocks }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[Word] {
        &self.words
    }

    /// Tensor expansion of the bracket of basis element `i`.
    pub fn expansion(&self, i: usize) -> FreeTensor {
        let w = &self.words[i];
        let mut t = FreeTensor::zero(self.width, self.level);
        let off = level_offset(self.width, w.len());
        t.coeffs_mut()[off..off + self.expansions[i].len()].copy_from_slice(&self.expansions[i]);
        t
    }

    /// Coordinates of a Lie element (scalar part ignored) in this basis.
    pub fn project(&self, lie: &FreeTensor) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.project_into(lie.coeffs(), &mut out);
        out
    }

    /// As [`project`](Self::project) on raw coefficients, writing into `out`.
    pub fn project_into(&self, coeffs: &[f64], out: &mut [f64]) {
        for (n, b) in self.blocks.iter().enumerate() {
            let block = &coeffs[level_offset(self.width, n + 1)..];
            for i in 0..b.len {
                let mut s = 0.0;
                for j in 0..b.len {
                    s += b.inverse[i * b.len + j] * block[b.word_pos[j]];
                }
                out[b.start + i] = s;
            }
        }
    }

    /// `Σ c_i P(w_i)`.
    pub fn reconstruct(&self, coords: &[f64]) -> Result<FreeTensor> {
        if coords.len() != self.len() {
            return Err(Error::Dimension(format!("expected {} coordinates, got {}", self.len(), coords.len())));
        }
        let mut t = FreeTensor::zero(self.width, self.level);
        for (i, &c) in coords.iter().enumerate() {
            let off = level_offset(self.width, self.words[i].len());
            for (dst, src) in t.coeffs_mut()[off..].iter_mut().zip(&self.expansions[i]) {
                *dst += c * src;
            }
        }
        Ok(t)
    }
}

/// `[x, y] = x⊗y − y⊗x` for homogeneous blocks.
fn bracket(x: &[f64], y: &[f64]) -> Vec<f64> {
    let (nx, ny) = (x.len(), y.len());
    let mut out = vec![0.0; nx * ny];
    for (i, &a) in x.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for (j, &b) in y.iter().enumerate() {
            out[i * ny + j] += a * b;
        }
    }
    for (j, &b) in y.iter().enumerate() {
        if b == 0.0 {
            continue;
        }
        for (i, &a) in x.iter().enumerate() {
            out[j * nx + i] -= b * a;
        }
    }
    out
}

/// Gauss-Jordan inverse with partial pivoting; the matrices here are
/// unitriangular up to ordering, so conditioning is benign.
fn invert(a: &[f64], n: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs())).expect("nonempty");
        if piv != col {
            for k in 0..n {
                m.swap(col * n + k, piv * n + k);
                inv.swap(col * n + k, piv * n + k);
            }
        }
        let p = m[col * n + col];
        assert!(p != 0.0, "Lyndon change of basis is singular");
        for k in 0..n {
            m[col * n + k] /= p;
            inv[col * n + k] /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r * n + col];
                if f != 0.0 {
                    for k in 0..n {
                        m[r * n + k] -= f * m[col * n + k];
                        inv[r * n + k] -= f * inv[col * n + k];
                    }
                }
            }
        }
    }
    inv
}
