//! Dense row-major matrices, elementwise nonlinearities, seeded random streams
//! and the Hoeffding tail bound.

use std::fmt;
use std::ops::{Deref, Index};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, Error, Result};

/// Dense real matrix stored in row-major order.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 1.0)
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Wraps row-major `data`. Rejects a length mismatch and non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(shape_err(
                "Matrix::from_vec",
                format!("{} entries", rows * cols),
                format!("{} entries", data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Matrix::from_vec"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(shape_err(
                    "Matrix::from_rows",
                    format!("{cols} columns"),
                    format!("{} columns in row {i}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Self::from_vec(rows.len(), cols, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vector {
        Vector((0..self.rows).map(|i| self.get(i, j)).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(shape_err(
                "matmul",
                format!(
                    "inner dimensions equal ({}x{} * {}x_)",
                    self.rows, self.cols, self.cols
                ),
                format!(
                    "{}x{} * {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let lhs = self.row(i);
            let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in lhs.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (d, &b) in dst.iter_mut().zip(other.row(k)) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * other^T`, without materializing the transpose.
    pub fn matmul_transposed(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(shape_err(
                "matmul_transposed",
                format!("{} columns on both sides", self.cols),
                format!(
                    "{}x{} vs {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            ));
        }
        Ok(Matrix::from_fn(self.rows, other.rows, |i, j| {
            dot(self.row(i), other.row(j))
        }))
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vector> {
        if v.len() != self.cols {
            return Err(shape_err(
                "matvec",
                format!("vector of length {}", self.cols),
                format!("length {}", v.len()),
            ));
        }
        Ok(Vector(
            (0..self.rows).map(|i| dot(self.row(i), v)).collect(),
        ))
    }

    /// Kronecker product. Entry `(i1*n2 + i2, j1*d2 + j2)` is `a[i1,j1] * b[i2,j2]`.
    pub fn kron(&self, other: &Matrix) -> Matrix {
        let (n2, d2) = other.shape();
        let mut out = Matrix::zeros(self.rows * n2, self.cols * d2);
        for i1 in 0..self.rows {
            for j1 in 0..self.cols {
                let a = self.get(i1, j1);
                for i2 in 0..n2 {
                    let base = (i1 * n2 + i2) * out.cols + j1 * d2;
                    for (dst, &b) in out.data[base..base + d2].iter_mut().zip(other.row(i2)) {
                        *dst = a * b;
                    }
                }
            }
        }
        out
    }

    /// Row-major vectorization: row `i` lands in block `i` of the result.
    pub fn vec(&self) -> Vector {
        Vector(self.data.clone())
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(shape_err(
                "max_abs_diff",
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        Ok(max_abs_diff(&self.data, &other.data))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

/// Owned real vector.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Vector(pub Vec<f64>);

impl Vector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn unit(n: usize, j: usize) -> Self {
        let mut v = vec![0.0; n];
        v[j] = 1.0;
        Self(v)
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        dot(&self.0, other)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Vector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[inline]
pub fn relu(z: f64) -> f64 {
    z.max(0.0)
}

/// `max(z - tau, 0)`.
#[inline]
pub fn relu_shift(z: f64, tau: f64) -> f64 {
    (z - tau).max(0.0)
}

/// Deterministic random stream keyed on `(seed, stream_id)`.
///
/// Backed by ChaCha8 with the stream id mapped onto the cipher's stream
/// counter, so distinct ids are independent and can be consumed from any
/// thread in any order.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform draw on the closed interval `[lo, hi]`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if lo == hi {
            return lo;
        }
        self.inner.gen_range(lo..=hi)
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    pub fn sign(&mut self) -> f64 {
        if self.inner.gen::<bool>() {
            1.0
        } else {
            -1.0
        }
    }
}

/// Matrix with i.i.d. ±1 entries, drawn in row-major order.
pub fn rademacher_matrix(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sign())
}

/// Softmax with max-subtraction: `exp(v_i) / sum_k exp(v_k)`.
pub fn normalize_exp(v: &[f64]) -> Vector {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = v.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for x in &mut out {
        *x /= total;
    }
    Vector(out)
}

/// Linear normalization `v_i / sum_k v_k`.
pub fn normalize_lin(v: &[f64]) -> Result<Vector> {
    let total: f64 = v.iter().sum();
    if total.is_nan() || total.abs() < 1e-300 {
        return Err(Error::DegenerateNormalizer { sum: total });
    }
    Ok(Vector(v.iter().map(|x| x / total).collect()))
}

/// Two-sided Hoeffding tail `2 exp(-2 t^2 / sum w_i^2)`, clamped to `[0, 1]`.
///
/// `widths` holds the range lengths `b_i - a_i`. When every width is zero the
/// sum is constant, so any positive deviation has probability 0.
pub fn hoeffding_tail(widths: &[f64], t: f64) -> f64 {
    let denom: f64 = widths.iter().map(|w| w * w).sum();
    if denom == 0.0 {
        return if t > 0.0 { 0.0 } else { 1.0 };
    }
    (2.0 * (-2.0 * t * t / denom).exp()).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_matrix(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.uniform(-1.0, 1.0))
    }

    #[test]
    fn kron_identity_is_noop() {
        let b = Matrix::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(Matrix::identity(1).kron(&b), b);
    }

    #[test]
    fn kron_hand_expansion() {
        let a = Matrix::from_rows(&[&[1.0, 2.0]]).unwrap();
        let b = Matrix::from_rows(&[&[0.0], &[3.0]]).unwrap();
        let expected = Matrix::from_rows(&[&[0.0, 0.0], &[3.0, 6.0]]).unwrap();
        assert_eq!(a.kron(&b), expected);
    }

    #[test]
    fn kron_matches_index_expansion() {
        let mut rng = SeededRng::new(11, 0);
        let a = random_matrix(3, 2, &mut rng);
        let b = random_matrix(2, 2, &mut rng);
        let k = a.kron(&b);
        assert_eq!(k.shape(), (6, 4));
        // 1-indexed (3,3) = a[2,2] * b[1,1]
        assert_eq!(k.get(2, 2), a.get(1, 1) * b.get(0, 0));
        for i1 in 0..3 {
            for i2 in 0..2 {
                for j1 in 0..2 {
                    for j2 in 0..2 {
                        assert_eq!(
                            k.get(i1 * 2 + i2, j1 * 2 + j2),
                            a.get(i1, j1) * b.get(i2, j2)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn vec_examples() {
        assert_eq!(Matrix::identity(2).vec().0, vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(Matrix::ones(2, 3).vec().0, vec![1.0; 6]);
        let m = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        assert_eq!(m.vec().0, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn relu_examples() {
        assert_eq!(relu(-1.0), 0.0);
        assert_eq!(relu(2.5), 2.5);
        assert_eq!(relu_shift(0.9, 0.9), 0.0);
        assert!((relu_shift(1.5, 0.4) - 1.1).abs() < 1e-15);
    }

    #[test]
    fn rademacher_is_deterministic_and_signed() {
        let a = rademacher_matrix(7, 5, &mut SeededRng::new(3, 9));
        let b = rademacher_matrix(7, 5, &mut SeededRng::new(3, 9));
        assert_eq!(a, b);
        assert!(a.as_slice().iter().all(|&v| v == 1.0 || v == -1.0));
        let c = rademacher_matrix(7, 5, &mut SeededRng::new(3, 10));
        assert_ne!(a, c);
    }

    #[test]
    fn rademacher_mean_near_zero() {
        let m = rademacher_matrix(1000, 100, &mut SeededRng::new(5, 0));
        let mean = m.as_slice().iter().sum::<f64>() / 1e5;
        assert!(mean.abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn streams_do_not_depend_on_interleaving() {
        let mut a = SeededRng::new(1, 1);
        let mut b = SeededRng::new(1, 2);
        let interleaved: Vec<(f64, f64)> = (0..16).map(|_| (a.sign(), b.sign())).collect();
        let mut a2 = SeededRng::new(1, 1);
        let seq_a: Vec<f64> = (0..16).map(|_| a2.sign()).collect();
        let mut b2 = SeededRng::new(1, 2);
        let seq_b: Vec<f64> = (0..16).map(|_| b2.sign()).collect();
        assert_eq!(interleaved.iter().map(|p| p.0).collect::<Vec<_>>(), seq_a);
        assert_eq!(interleaved.iter().map(|p| p.1).collect::<Vec<_>>(), seq_b);
    }

    #[test]
    fn normalize_exp_examples() {
        let r = normalize_exp(&[2.0; 5]);
        assert!(r.iter().all(|&x| (x - 0.2).abs() < 1e-15));
        let r = normalize_exp(&[1f64.ln(), 3f64.ln()]);
        assert!((r[0] - 0.25).abs() < 1e-15 && (r[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn normalize_exp_large_exponents_match_direct_formula() {
        // exp(110) ~ 6e47 is still representable, so the unshifted formula is a valid reference.
        let v = [110.0, 95.5, 3.0, 108.25, 0.0, -20.0];
        let direct: Vec<f64> = {
            let e: Vec<f64> = v.iter().map(|x: &f64| x.exp()).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|x| x / s).collect()
        };
        let r = normalize_exp(&v);
        assert!((r.sum() - 1.0).abs() < 1e-12);
        for (a, b) in r.iter().zip(&direct) {
            assert!((a - b).abs() <= 1e-15 + 1e-12 * b.abs());
        }
    }

    #[test]
    fn normalize_lin_examples() {
        let r = normalize_lin(&[2.0; 4]).unwrap();
        assert!(r.iter().all(|&x| x == 0.25));
        let r = normalize_lin(&[1.0, 3.0]).unwrap();
        assert_eq!(r.0, vec![0.25, 0.75]);
        assert!(matches!(
            normalize_lin(&[1.0, -1.0]),
            Err(Error::DegenerateNormalizer { .. })
        ));
    }

    #[test]
    fn hoeffding_examples() {
        assert_eq!(hoeffding_tail(&[1.0, 2.0], 0.0), 1.0);
        let n = 9;
        let w = 0.3;
        let t = w * (n as f64 / 2.0 * 2f64.ln()).sqrt();
        assert!((hoeffding_tail(&vec![w; n], t) - 1.0).abs() < 1e-12);
        assert_eq!(hoeffding_tail(&[0.0, 0.0], 0.5), 0.0);
        assert!(hoeffding_tail(&[1.0; 100], 30.0) < 1e-7);
    }

    #[test]
    fn matmul_and_transposed_agree() {
        let mut rng = SeededRng::new(2, 2);
        let a = random_matrix(4, 3, &mut rng);
        let b = random_matrix(5, 3, &mut rng);
        let direct = a.matmul(&b.transpose()).unwrap();
        let fused = a.matmul_transposed(&b).unwrap();
        assert!(direct.max_abs_diff(&fused).unwrap() < 1e-15);
        assert!(a.matmul(&b).is_err());
    }

    proptest! {
        #[test]
        fn kron_shape_law(r1 in 1usize..4, c1 in 1usize..4, r2 in 1usize..4, c2 in 1usize..4, seed in any::<u64>()) {
            let mut rng = SeededRng::new(seed, 0);
            let a = random_matrix(r1, c1, &mut rng);
            let b = random_matrix(r2, c2, &mut rng);
            let k = a.kron(&b);
            prop_assert_eq!(k.shape(), (r1 * r2, c1 * c2));
            let k2 = a.scale(2.0).kron(&b);
            prop_assert!(k2.max_abs_diff(&k.scale(2.0)).unwrap() <= 1e-12);
        }

        #[test]
        fn normalize_exp_is_probability_vector(v in prop::collection::vec(-1000.0f64..700.0, 1..40)) {
            let r = normalize_exp(&v);
            prop_assert!(r.iter().all(|&x| x >= 0.0 && x.is_finite()));
            prop_assert!((r.sum() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn normalize_exp_shift_invariant(v in prop::collection::vec(-50.0f64..50.0, 1..30), c in -200.0f64..200.0) {
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let a = normalize_exp(&v);
            let b = normalize_exp(&shifted);
            prop_assert!(max_abs_diff(&a, &b) <= 1e-12);
        }

        #[test]
        fn rademacher_determinism(seed in any::<u64>(), stream in any::<u64>()) {
            let a = rademacher_matrix(6, 4, &mut SeededRng::new(seed, stream));
            let b = rademacher_matrix(6, 4, &mut SeededRng::new(seed, stream));
            prop_assert_eq!(a.as_slice(), b.as_slice());
        }

        #[test]
        fn hoeffding_monotone(w in prop::collection::vec(0.01f64..2.0, 1..20), t1 in 0.0f64..5.0, dt in 0.0f64..5.0, bump in 0.0f64..1.0, idx in any::<prop::sample::Index>()) {
            let t2 = t1 + dt;
            prop_assert!(hoeffding_tail(&w, t2) <= hoeffding_tail(&w, t1));
            let mut wider = w.clone();
            let i = idx.index(wider.len());
            wider[i] += bump;
            prop_assert!(hoeffding_tail(&wider, t1) >= hoeffding_tail(&w, t1));
        }
    }
}
