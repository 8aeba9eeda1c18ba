//! Truncated signatures of time-augmented piecewise-linear paths.
//!
//! Letter 1 is time; letters `2..=1+d` are the path coordinates.

mod lyndon;

use std::io::Write;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::free_tensor::{level_offset, tensor_dim, FreeTensor};

pub use lyndon::{dims, lyndon_count, lyndon_words, mobius, standard_factorization, LyndonBasis};

/// Signature of a straight segment: `exp(increment)`.
pub fn segment_signature(increment: &[f64], level: usize) -> FreeTensor {
    FreeTensor::from_level1(level, increment).exp().expect("level-1 tensor has zero scalar part")
}

/// In-place Chen step `s ← s ⊗ exp(v)` on raw coefficients.
///
/// Level `n` of the product is `Σ_k s_{n-k} ⊗ v^{⊗k}/k!`, evaluated by
/// Horner from the top level down so lower levels are still unmodified.
pub fn chen_step(width: usize, level: usize, s: &mut [f64], v: &[f64], scratch: &mut Vec<f64>) {
    debug_assert_eq!(v.len(), width);
    let mut next = Vec::new();
    for n in (1..=level).rev() {
        scratch.clear();
        scratch.push(s[0]);
        for k in 1..=n {
            let c = 1.0 / (n - k + 1) as f64;
            let lower = &s[level_offset(width, k)..level_offset(width, k) + width.pow(k as u32)];
            next.clear();
            next.reserve(scratch.len() * width);
            for &a in scratch.iter() {
                let ac = a * c;
                next.extend(v.iter().map(|&b| ac * b));
            }
            if k < n {
                for (x, &l) in next.iter_mut().zip(lower) {
                    *x += l;
                }
            }
            std::mem::swap(scratch, &mut next);
        }
        let off = level_offset(width, n);
        for (dst, &x) in s[off..off + scratch.len()].iter_mut().zip(scratch.iter()) {
            *dst += x;
        }
    }
}

/// Prefix signatures of one path, recorded on a subgrid.
#[derive(Clone, Debug)]
pub struct SigStream {
    pub width: usize,
    pub level: usize,
    /// Recording times.
    pub times: Vec<f64>,
    /// `sigs[j]` is the signature over `[0, times[j]]`.
    pub sigs: Vec<FreeTensor>,
}

fn check_path(times: &[f64], values: &ArrayView2<f64>, stride: usize) -> Result<()> {
    if times.len() < 2 {
        return Err(Error::Domain("a path needs at least two points".into()));
    }
    if values.nrows() != times.len() {
        return Err(Error::Dimension(format!("{} times but {} value rows", times.len(), values.nrows())));
    }
    if stride == 0 || (times.len() - 1) % stride != 0 {
        return Err(Error::Dimension(format!("stride {stride} does not divide {} segments", times.len() - 1)));
    }
    if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::Domain(format!("time not strictly increasing at index {}", i + 1)));
    }
    Ok(())
}

/// Visits the prefix signature coefficients of the time-augmented path
/// `(t, x)` at every `stride`-th point, starting with the trivial one at 0.
pub fn for_each_prefix(times: &[f64], values: ArrayView2<f64>, stride: usize, level: usize, mut f: impl FnMut(usize, &[f64])) -> Result<()> {
    check_path(times, &values, stride)?;
    let width = 1 + values.ncols();
    let mut s = vec![0.0; tensor_dim(width, level)];
    s[0] = 1.0;
    let mut scratch = Vec::new();
    let mut inc = vec![0.0; width];
    f(0, &s);
    for i in 1..times.len() {
        inc[0] = times[i] - times[i - 1];
        for k in 1..width {
            inc[k] = values[[i, k - 1]] - values[[i - 1, k - 1]];
        }
        chen_step(width, level, &mut s, &inc, &mut scratch);
        if i % stride == 0 {
            f(i / stride, &s);
        }
    }
    Ok(())
}

/// Prefix signatures of `(t, x)` for path values `x` (`points × d`),
/// recorded at every `stride`-th point.
pub fn stream_signatures(times: &[f64], values: ArrayView2<f64>, stride: usize, level: usize) -> Result<SigStream> {
    let width = 1 + values.ncols();
    let mut sigs = Vec::with_capacity((times.len() - 1) / stride.max(1) + 1);
    for_each_prefix(times, values, stride, level, |_, s| {
        sigs.push(FreeTensor::from_coeffs(width, level, s.to_vec()).expect("sized by construction"));
    })?;
    let rec_times = times.iter().step_by(stride).copied().collect();
    Ok(SigStream { width, level, times: rec_times, sigs })
}

impl SigStream {
    pub fn len(&self) -> usize {
        self.sigs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigs.is_empty()
    }

    pub fn last(&self) -> &FreeTensor {
        self.sigs.last().expect("stream is nonempty")
    }

    /// One row per recording time: `t, coefficients…` in graded-lex order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = tensor_dim(self.width, self.level);
        let header: Vec<String> = (0..n).map(|i| format!("w{}", crate::free_tensor::index_word(self.width, i))).collect();
        writeln!(w, "t,{}", header.join(","))?;
        for (t, s) in self.times.iter().zip(&self.sigs) {
            let row: Vec<String> = s.coeffs().iter().map(|c| format!("{c:e}")).collect();
            writeln!(w, "{t},{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Lyndon coordinates of the log of each prefix signature (`points × η`).
#[derive(Clone, Debug)]
pub struct LogSigStream {
    pub times: Vec<f64>,
    pub coords: Array2<f64>,
}

impl LogSigStream {
    pub fn write_csv<W: Write>(&self, basis: &LyndonBasis, mut w: W) -> Result<()> {
        let header: Vec<String> = basis.words().iter().map(|w| format!("l{w}")).collect();
        writeln!(w, "t,{}", header.join(","))?;
        for (t, row) in self.times.iter().zip(self.coords.rows()) {
            let r: Vec<String> = row.iter().map(|c| format!("{c:e}")).collect();
            writeln!(w, "{t},{}", r.join(","))?;
        }
        Ok(())
    }
}

/// Log-signature coordinates of every prefix. Each log is checked by
/// rebuilding it from its coordinates.
pub fn log_signature_coords(s: &SigStream, basis: &LyndonBasis) -> Result<LogSigStream> {
    if basis.width() != s.width || basis.level() != s.level {
        return Err(Error::Dimension(format!(
            "basis ({}, {}) does not match stream ({}, {})",
            basis.width(),
            basis.level(),
            s.width,
            s.level
        )));
    }
    let mut coords = Array2::zeros((s.len(), basis.len()));
    for (j, sig) in s.sigs.iter().enumerate() {
        let log = sig.log()?;
        let c = basis.project(&log);
        let back = basis.reconstruct(&c)?;
        let resid = log.sub(&back)?.sup_norm();
        if resid > 1e-8 * (1.0 + log.sup_norm()) {
            return Err(Error::Consistency(format!("log-signature at point {j} leaves residual {resid:e} outside the Lie algebra")));
        }
        coords.row_mut(j).assign(&ndarray::ArrayView1::from(&c));
    }
    Ok(LogSigStream { times: s.times.clone(), coords })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::free_tensor::{pair, Word};
    use crate::shuffle::DualPoly;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};

    fn w(s: &str) -> Word {
        Word::parse(s).unwrap()
    }

    fn random_path(rng: &mut impl Rng, points: usize, d: usize) -> (Vec<f64>, Array2<f64>) {
        let times: Vec<f64> = (0..points).map(|i| i as f64 / (points - 1) as f64).collect();
        let mut x = Array2::zeros((points, d));
        for i in 1..points {
            for k in 0..d {
                x[[i, k]] = x[[i - 1, k]] + rng.random_range(-0.3..0.3);
            }
        }
        (times, x)
    }

    #[test]
    fn segment_examples() {
        assert_eq!(segment_signature(&[0.0, 0.0], 3), FreeTensor::one(2, 3));
        let s = segment_signature(&[0.3, -0.8], 2);
        assert!((s.coeff(&w("12")) - 0.3 * -0.8 / 2.0).abs() < 1e-16);
        let line = segment_signature(&[1.0, 1.0], 6);
        let mut fact = 1.0;
        for k in 1..=6 {
            fact *= k as f64;
            assert!((line.coeff(&Word::new(vec![1u8; k])) - 1.0 / fact).abs() < 1e-15);
        }
    }

    #[test]
    fn chen_step_matches_tensor_product() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for (width, level) in [(2, 4), (3, 3), (1, 5)] {
            let mut s = FreeTensor::one(width, level);
            for _ in 0..3 {
                let v: Vec<f64> = (0..width).map(|_| rng.random_range(-1.0..1.0)).collect();
                s = s.tensor_mul(&segment_signature(&v, level)).unwrap();
            }
            let v: Vec<f64> = (0..width).map(|_| rng.random_range(-1.0..1.0)).collect();
            let want = s.tensor_mul(&segment_signature(&v, level)).unwrap();
            let mut got = s.coeffs().to_vec();
            chen_step(width, level, &mut got, &v, &mut Vec::new());
            let diff = want.coeffs().iter().zip(&got).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(diff < 1e-14, "width {width} level {level}: {diff}");
        }
    }

    #[test]
    fn two_point_path_is_one_segment() {
        let x = array![[0.5], [1.25]];
        let st = stream_signatures(&[0.0, 0.4], x.view(), 1, 3).unwrap();
        assert_eq!(st.len(), 2);
        assert_eq!(st.sigs[0], FreeTensor::one(2, 3));
        let seg = segment_signature(&[0.4, 0.75], 3);
        assert!(st.sigs[1].sub(&seg).unwrap().sup_norm() < 1e-15);
    }

    #[test]
    fn refining_a_segment_changes_nothing() {
        let times: Vec<f64> = (0..=10).map(|i| 0.1 * i as f64).collect();
        let x = Array2::from_shape_fn((11, 2), |(i, k)| (k as f64 + 1.0) * 0.37 * i as f64 * 0.1);
        let fine = stream_signatures(&times, x.view(), 10, 5).unwrap();
        let seg = segment_signature(&[1.0, 0.37, 0.74], 5);
        assert!(fine.last().sub(&seg).unwrap().sup_norm() <= 1e-12);
    }

    #[test]
    fn parabola_area() {
        let j = 1000;
        let times: Vec<f64> = (0..=j).map(|i| i as f64 / j as f64).collect();
        let x = Array2::from_shape_fn((j + 1, 1), |(i, _)| times[i] * times[i]);
        let st = stream_signatures(&times, x.view(), 1, 2).unwrap();
        assert!((st.last().coeff(&w("12")) - 2.0 / 3.0).abs() < 1e-4);
        // log coordinate of [1,2] is the Lévy area
        let basis = LyndonBasis::new(2, 2);
        let ls = log_signature_coords(&st, &basis).unwrap();
        let g = st.last();
        let area = 0.5 * (g.coeff(&w("12")) - g.coeff(&w("21")));
        let i12 = basis.words().iter().position(|x| *x == w("12")).unwrap();
        assert!((ls.coords[[j, i12]] - area).abs() < 1e-14);
    }

    #[test]
    fn time_words_are_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let (times, x) = random_path(&mut rng, 21, 2);
        let st = stream_signatures(&times, x.view(), 4, 4).unwrap();
        let mut fact = 1.0;
        for k in 1..=4 {
            fact *= k as f64;
            for (t, s) in st.times.iter().zip(&st.sigs) {
                let want = t.powi(k as i32) / fact;
                assert!((s.coeff(&Word::new(vec![1u8; k])) - want).abs() <= 1e-14 * (1.0 + want));
            }
        }
    }

    #[test]
    fn chen_concatenation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let (times, x) = random_path(&mut rng, 41, 2);
        let whole = stream_signatures(&times, x.view(), 1, 4).unwrap();
        let first = stream_signatures(&times[..21], x.slice(ndarray::s![..21, ..]), 1, 4).unwrap();
        let second = stream_signatures(&times[20..], x.slice(ndarray::s![20.., ..]), 1, 4).unwrap();
        let joined = first.last().tensor_mul(second.last()).unwrap();
        assert!(whole.last().sub(&joined).unwrap().sup_norm() < 1e-11);
        for s in &whole.sigs {
            assert!(s.is_grouplike(1e-9));
        }
    }

    #[test]
    fn pairing_identities_on_streams() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let (times, x) = random_path(&mut rng, 30, 1);
        let st = stream_signatures(&times, x.view(), 1, 3).unwrap();
        let t_final = *times.last().unwrap();
        let one = DualPoly::word(2, w("1"));
        assert!((pair(&one, st.last()).unwrap() - t_final).abs() < 1e-15);
        let sym = DualPoly::parse(2, "12 + 21").unwrap();
        let two = DualPoly::word(2, w("2"));
        for s in &st.sigs {
            let lhs = pair(&sym, s).unwrap();
            let rhs = pair(&one, s).unwrap() * pair(&two, s).unwrap();
            assert!((lhs - rhs).abs() < 1e-13);
        }
    }

    #[test]
    fn log_signature_reconstructs() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let (times, x) = random_path(&mut rng, 25, 2);
        let st = stream_signatures(&times, x.view(), 1, 4).unwrap();
        let basis = LyndonBasis::new(3, 4);
        let ls = log_signature_coords(&st, &basis).unwrap();
        assert!(ls.coords.row(0).iter().all(|&c| c == 0.0));
        for (j, s) in st.sigs.iter().enumerate() {
            let c: Vec<f64> = ls.coords.row(j).to_vec();
            let rebuilt = basis.reconstruct(&c).unwrap().exp().unwrap();
            assert!(rebuilt.sub(s).unwrap().sup_norm() < 1e-10);
        }
    }

    #[test]
    fn straight_line_has_no_brackets() {
        let times = [0.0, 0.5, 1.0];
        let x = array![[0.0], [0.3], [0.6]];
        let st = stream_signatures(&times, x.view(), 1, 4).unwrap();
        let basis = LyndonBasis::new(2, 4);
        let ls = log_signature_coords(&st, &basis).unwrap();
        for (i, word) in basis.words().iter().enumerate() {
            if word.len() >= 2 {
                assert!(ls.coords[[2, i]].abs() < 1e-15);
            }
        }
    }

    #[test]
    fn input_validation() {
        let x = array![[0.0], [1.0], [2.0]];
        assert!(matches!(stream_signatures(&[0.0, 0.5, 0.5], x.view(), 1, 2), Err(Error::Domain(_))));
        assert!(matches!(stream_signatures(&[0.0], array![[0.0]].view(), 1, 2), Err(Error::Domain(_))));
        assert!(matches!(stream_signatures(&[0.0, 1.0, 2.0], x.view(), 3, 2), Err(Error::Dimension(_))));
        let st = stream_signatures(&[0.0, 1.0, 2.0], x.view(), 1, 2).unwrap();
        assert!(matches!(log_signature_coords(&st, &LyndonBasis::new(2, 3)), Err(Error::Dimension(_))));
    }

    #[test]
    fn csv_dump_shape() {
        let x = array![[0.0], [1.0]];
        let st = stream_signatures(&[0.0, 1.0], x.view(), 1, 2).unwrap();
        let mut buf = Vec::new();
        st.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0].split(',').count(), 1 + 7);
        let basis = LyndonBasis::new(2, 2);
        let mut buf = Vec::new();
        log_signature_coords(&st, &basis).unwrap().write_csv(&basis, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,l1,l2,l12"));
    }

    #[test]
    fn dims_examples() {
        assert_eq!(dims(2, 4), (30, 8));
        assert_eq!(dims(4, 6), (5460, 964));
        assert_eq!(dims(1, 6), (6, 1));
        assert_eq!(LyndonBasis::new(2, 5).len(), 14);
        assert_eq!(LyndonBasis::new(3, 6).len(), 196);
        assert_eq!(LyndonBasis::new(1, 4).len(), 1);
    }
}
