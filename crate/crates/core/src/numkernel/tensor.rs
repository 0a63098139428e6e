use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::sync::Arc;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floating-point storage precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

/// Scalar types a [`Tensor`] can hold.
pub trait Element:
    Float + Default + Debug + Display + Sum + Send + Sync + 'static
{
    const PRECISION: Precision;

    fn lit(x: f64) -> Self;

    fn as_f64(self) -> f64;

    /// `c = a · b (+ c)` for row-major `a: [m, k]`, `b: [k, n]`, `c: [m, n]`,
    /// where `a_t` / `b_t` mean the buffer stores the transpose.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_t: bool,
        b: &[Self],
        b_t: bool,
        c: &mut [Self],
        accumulate: bool,
    );
}

fn strides(rows: usize, cols: usize, transposed: bool) -> (isize, isize) {
    if transposed {
        (1, rows as isize)
    } else {
        (cols as isize, 1)
    }
}

macro_rules! impl_element {
    ($ty:ty, $prec:expr, $kernel:path) => {
        impl Element for $ty {
            const PRECISION: Precision = $prec;

            #[inline]
            fn lit(x: f64) -> Self {
                x as $ty
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                a_t: bool,
                b: &[Self],
                b_t: bool,
                c: &mut [Self],
                accumulate: bool,
            ) {
                assert_eq!(a.len(), m * k, "gemm: lhs buffer");
                assert_eq!(b.len(), k * n, "gemm: rhs buffer");
                assert_eq!(c.len(), m * n, "gemm: output buffer");
                if m == 0 || n == 0 {
                    return;
                }
                if k == 0 {
                    if !accumulate {
                        c.iter_mut().for_each(|v| *v = 0.0);
                    }
                    return;
                }
                let (rsa, csa) = strides(m, k, a_t);
                let (rsb, csb) = strides(k, n, b_t);
                let beta = if accumulate { 1.0 } else { 0.0 };
                // SAFETY: buffer lengths are checked above and the strides
                // describe dense row-major storage of exactly those buffers.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_element!(f64, Precision::F64, matrixmultiply::dgemm);
impl_element!(f32, Precision::F32, matrixmultiply::sgemm);

/// Dense, immutable, row-major tensor. Cloning shares the buffer.
#[derive(Clone, PartialEq)]
pub struct Tensor<E: Element = f64> {
    shape: Vec<usize>,
    data: Arc<[E]>,
}

impl<E: Element> Debug for Tensor<E> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("values", &&self.data[..self.data.len().min(8)])
            .finish()
    }
}

impl<E: Element> Tensor<E> {
    pub fn new(shape: &[usize], values: Vec<E>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if shape.contains(&0) {
            return Err(Error::Shape(format!("zero-sized dimension in {shape:?}")));
        }
        if expected != values.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                values.len()
            )));
        }
        Ok(Self::from_parts(shape.to_vec(), values))
    }

    pub(crate) fn from_parts(shape: Vec<usize>, values: Vec<E>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        Self {
            shape,
            data: values.into(),
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self::from_parts(shape.to_vec(), vec![E::zero(); len])
    }

    pub fn full(shape: &[usize], value: E) -> Self {
        let len = shape.iter().product();
        Self::from_parts(shape.to_vec(), vec![value; len])
    }

    pub fn scalar(value: E) -> Self {
        Self::from_parts(Vec::new(), vec![value])
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> E) -> Self {
        let len: usize = shape.iter().product();
        Self::from_parts(shape.to_vec(), (0..len).map(&mut f).collect())
    }

    /// Rank-2 tensor from nested rows.
    pub fn from_rows(rows: &[Vec<E>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(&[rows.len(), cols], rows.concat())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn values(&self) -> &[E] {
        &self.data
    }

    pub fn to_vec(&self) -> Vec<E> {
        self.data.to_vec()
    }

    /// Rows and columns of a rank-2 tensor; vectors are treated as one row.
    pub fn dims2(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [] => (1, 1),
            [n] => (1, *n),
            [r, c] => (*r, *c),
            s => {
                let c = *s.last().unwrap();
                (self.len() / c, c)
            }
        }
    }

    pub fn rows(&self) -> usize {
        self.dims2().0
    }

    pub fn cols(&self) -> usize {
        self.dims2().1
    }

    pub fn row(&self, i: usize) -> &[E] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn at(&self, i: usize, j: usize) -> E {
        self.data[i * self.cols() + j]
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> E {
        assert_eq!(self.len(), 1, "item() on a tensor with {} values", self.len());
        self.data[0]
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn map(&self, f: impl Fn(E) -> E) -> Self {
        Self::from_parts(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(E, E) -> E) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "{:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Self::from_parts(
            self.shape.clone(),
            self.data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn scale(&self, factor: E) -> Self {
        self.map(|v| v * factor)
    }

    pub fn sum(&self) -> E {
        self.data.iter().copied().sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self · rhs` for rank-2 operands.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        let (m, k) = self.dims2();
        let (k2, n) = rhs.dims2();
        if k != k2 {
            return Err(Error::Shape(format!(
                "matmul {:?} x {:?}",
                self.shape, rhs.shape
            )));
        }
        let mut out = vec![E::zero(); m * n];
        E::gemm(m, k, n, &self.data, false, &rhs.data, false, &mut out, false);
        Ok(Self::from_parts(vec![m, n], out))
    }

    pub fn transpose(&self) -> Self {
        let (r, c) = self.dims2();
        let mut out = Vec::with_capacity(self.len());
        for j in 0..c {
            for i in 0..r {
                out.push(self.data[i * c + j]);
            }
        }
        Self::from_parts(vec![c, r], out)
    }

    pub fn cast<F: Element>(&self) -> Tensor<F> {
        Tensor::from_parts(
            self.shape.clone(),
            self.data.iter().map(|v| F::lit(v.as_f64())).collect(),
        )
    }

    /// Bitwise equality of shape and every value.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(other.data.iter())
                .all(|(a, b)| a.as_f64().to_bits() == b.as_f64().to_bits())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max)
    }
}

/// Per-entry keep/drop mask for a rank-2 score matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    keep: Arc<[bool]>,
}

impl Mask {
    pub fn new(rows: usize, cols: usize, keep: Vec<bool>) -> Result<Self> {
        if keep.len() != rows * cols {
            return Err(Error::Shape(format!(
                "mask {rows}x{cols} with {} entries",
                keep.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            keep: keep.into(),
        })
    }

    /// Every row keeps exactly the columns flagged in `valid_cols`.
    pub fn key_padding(rows: usize, valid_cols: &[bool]) -> Self {
        let cols = valid_cols.len();
        let keep: Vec<bool> = (0..rows).flat_map(|_| valid_cols.iter().copied()).collect();
        Self {
            rows,
            cols,
            keep: keep.into(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn keeps(&self, i: usize, j: usize) -> bool {
        self.keep[i * self.cols + j]
    }
}

/// Row-wise softmax with max subtraction; masked entries come out as exact zeros.
pub fn softmax_rows<E: Element>(m: &Tensor<E>, mask: Option<&Mask>) -> Result<Tensor<E>> {
    let (rows, cols) = m.dims2();
    if let Some(mask) = mask {
        if mask.dims() != (rows, cols) {
            return Err(Error::Shape(format!(
                "mask {:?} for a {rows}x{cols} matrix",
                mask.dims()
            )));
        }
    }
    let mut out = vec![E::zero(); rows * cols];
    for i in 0..rows {
        let src = m.row(i);
        let dst = &mut out[i * cols..(i + 1) * cols];
        softmax_row_into(src, dst, |j| mask.is_none_or(|mk| mk.keeps(i, j)))
            .ok_or(Error::DegenerateRow { row: i })?;
    }
    Ok(Tensor::from_parts(m.shape().to_vec(), out))
}

pub(crate) fn softmax_row_into<E: Element>(
    src: &[E],
    dst: &mut [E],
    keep: impl Fn(usize) -> bool,
) -> Option<()> {
    let mut max = E::neg_infinity();
    let mut any = false;
    for (j, &v) in src.iter().enumerate() {
        if keep(j) {
            any = true;
            if v > max {
                max = v;
            }
        }
    }
    if !any {
        return None;
    }
    let mut total = E::zero();
    for (j, (&v, d)) in src.iter().zip(dst.iter_mut()).enumerate() {
        *d = if keep(j) { (v - max).exp() } else { E::zero() };
        total = total + *d;
    }
    for d in dst.iter_mut() {
        *d = *d / total;
    }
    Some(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_value_count() {
        assert!(Tensor::<f64>::new(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f64>::new(&[2, 0], vec![]).is_err());
        assert_eq!(Tensor::<f64>::new(&[2, 3], vec![0.0; 6]).unwrap().len(), 6);
    }

    #[test]
    fn softmax_symmetric_row() {
        let m = Tensor::new(&[1, 2], vec![0.0, 0.0]).unwrap();
        assert_eq!(softmax_rows(&m, None).unwrap().values(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_analytic_row() {
        let m = Tensor::new(&[1, 2], vec![0.0, 3f64.ln()]).unwrap();
        let p = softmax_rows(&m, None).unwrap();
        assert!((p.values()[0] - 0.25).abs() < 1e-15);
        assert!((p.values()[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn softmax_masked_entries_are_exact_zero() {
        let m = Tensor::new(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mask = Mask::key_padding(2, &[true, true, false]);
        let p = softmax_rows(&m, Some(&mask)).unwrap();
        assert_eq!(p.at(0, 2), 0.0);
        assert_eq!(p.at(1, 2), 0.0);
        assert!((p.row(0).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_fully_masked_row_is_an_error() {
        let m = Tensor::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mask = Mask::new(2, 2, vec![true, false, false, false]).unwrap();
        assert!(matches!(
            softmax_rows(&m, Some(&mask)),
            Err(Error::DegenerateRow { row: 1 })
        ));
    }

    #[test]
    fn softmax_survives_huge_logits() {
        let m = Tensor::new(&[1, 3], vec![1e4, 1e4 - 1.0, -1e4]).unwrap();
        let p = softmax_rows(&m, None).unwrap();
        assert!(p.all_finite());
        assert!((p.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matmul_against_hand_product() {
        let a = Tensor::new(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Tensor::new(&[3, 2], vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.values(), &[58.0, 64.0, 139.0, 154.0]);
        let ct = b.transpose().matmul(&a.transpose()).unwrap();
        assert!(ct.bit_eq(&c.transpose()));
    }

    #[test]
    fn f32_gemm_matches_f64() {
        let a = Tensor::<f32>::from_fn(&[3, 4], |i| i as f32 * 0.25);
        let b = Tensor::<f32>::from_fn(&[4, 2], |i| 1.0 - i as f32 * 0.5);
        let c = a.matmul(&b).unwrap();
        let c64 = a.cast::<f64>().matmul(&b.cast::<f64>()).unwrap();
        assert!(c.cast::<f64>().max_abs_diff(&c64) < 1e-5);
    }
}
