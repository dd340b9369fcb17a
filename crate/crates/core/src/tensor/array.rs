use std::fmt::{self, Debug, Display};
use std::iter::Sum;

use crate::error::{Error, Result};

/// Element type of a [`Tensor`]: `f32` for storage and training, `f64` for
/// the accumulation mode used by gradient checks.
pub trait Float:
    num_traits::Float + Default + Debug + Display + std::fmt::LowerExp + Sum + Send + Sync + 'static
{
    /// `c = alpha * a·b + beta * c` with explicit row/column strides.
    ///
    /// # Safety
    /// Every addressed element of `a`, `b` and `c` must lie inside the
    /// allocations the pointers come from.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Float for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Float for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn from_f64(v: f64) -> Self {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }
}

/// Strided view of a matrix inside a slice.
#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a, T> {
    pub data: &'a [T],
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a, T: Float> MatRef<'a, T> {
    pub fn row_major(data: &'a [T], rows: usize, cols: usize) -> Self {
        Self {
            data,
            offset: 0,
            rows,
            cols,
            rs: cols,
            cs: 1,
        }
    }

    pub fn t(self) -> Self {
        Self {
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
            ..self
        }
    }

    fn last_index(&self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            return self.offset;
        }
        self.offset + (self.rows - 1) * self.rs + (self.cols - 1) * self.cs
    }
}

/// `out[rows × cols] (row-major) = a·b + beta·out`.
pub(crate) fn gemm<T: Float>(a: MatRef<'_, T>, b: MatRef<'_, T>, beta: T, out: &mut [T]) {
    assert_eq!(a.cols, b.rows, "gemm inner dimension");
    assert_eq!(out.len(), a.rows * b.cols, "gemm output size");
    if a.rows == 0 || b.cols == 0 {
        return;
    }
    if a.cols == 0 {
        out.iter_mut().for_each(|v| *v = *v * beta);
        return;
    }
    assert!(a.last_index() < a.data.len() && b.last_index() < b.data.len());
    // SAFETY: bounds of every addressed element were checked above.
    unsafe {
        T::gemm_raw(
            a.rows,
            a.cols,
            b.cols,
            T::one(),
            a.data.as_ptr().add(a.offset),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr().add(b.offset),
            b.rs as isize,
            b.cs as isize,
            beta,
            out.as_mut_ptr(),
            b.cols as isize,
            1,
        );
    }
}

/// Dense n-dimensional array in row-major order.
#[derive(Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Float> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if shape.contains(&0) || n != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} needs {} elements, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// Builds a tensor from `f64` values, rounding to `T`.
    pub fn from_f64(shape: Vec<usize>, data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&v| T::from_f64(v)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} to {:?}",
                self.shape, shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn cast<U: Float>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::from_f64(v.as_f64())).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Debug dump: the shape as space-separated dimensions on the first line,
    /// then every element in row-major order, one per line.
    pub fn dump(&self) -> String {
        let mut out = self
            .shape
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        out.push('\n');
        for v in &self.data {
            out.push_str(&format!("{v:e}\n"));
        }
        out
    }

    pub fn parse_dump(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let bad = |m: String| Error::InvalidArgument(format!("tensor dump: {m}"));
        let shape = lines
            .next()
            .ok_or_else(|| bad("empty".into()))?
            .split_whitespace()
            .map(|d| d.parse::<usize>().map_err(|e| bad(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let data = lines
            .map(|l| T::from_str_radix(l.trim(), 10).map_err(|_| bad(format!("bad float {l:?}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(shape, data)
    }
}

impl<T: Float> Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 8;
        write!(f, "Tensor{:?}", self.shape)?;
        let head: Vec<_> = self.data.iter().take(SHOWN).collect();
        write!(f, " {:?}", head)?;
        if self.data.len() > SHOWN {
            write!(f, " … ({} more)", self.data.len() - SHOWN)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inconsistent_shapes() {
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f32>::new(vec![0], vec![]).is_err());
        assert!(Tensor::<f32>::zeros(&[2, 2]).reshape(vec![3]).is_err());
    }

    #[test]
    fn dump_round_trips() {
        let t = Tensor::<f32>::new(vec![2, 2], vec![1.5, -2.0, 0.1, 3e-8]).unwrap();
        assert_eq!(Tensor::<f32>::parse_dump(&t.dump()).unwrap(), t);
    }

    #[test]
    fn strided_gemm_matches_naive() {
        let a: Vec<f64> = (0..6).map(|v| v as f64).collect();
        let b: Vec<f64> = (0..6).map(|v| (v as f64) * 0.5 - 1.0).collect();
        let mut out = vec![0.0; 4];
        // aᵀ (3×2 stored) · b (3×2)
        gemm(
            MatRef::row_major(&a, 3, 2).t(),
            MatRef::row_major(&b, 3, 2),
            0.0,
            &mut out,
        );
        for i in 0..2 {
            for j in 0..2 {
                let naive: f64 = (0..3).map(|k| a[k * 2 + i] * b[k * 2 + j]).sum();
                assert_eq!(out[i * 2 + j], naive);
            }
        }
    }
}
