use std::fmt::Debug;
use std::ops::AddAssign;

use num_traits::Float;

use super::{NnError, Result};

/// Floating point type the network can run in. Training uses `f32`; the
/// gradient checker runs the same code in `f64`.
pub trait Scalar: Float + AddAssign + Default + Debug + Send + Sync + 'static {
    /// `C = A B + beta C` for row/column-strided matrices, `A` is `m x k`,
    /// `B` is `k x n`, `C` is `m x n` row-major.
    #[allow(clippy::too_many_arguments)]
    fn gemm(m: usize, k: usize, n: usize, a: &[Self], a_rs: usize, a_cs: usize, b: &[Self], b_rs: usize, b_cs: usize, beta: Self, c: &mut [Self]);
}

#[allow(clippy::too_many_arguments)]
fn check_gemm<T>(m: usize, k: usize, n: usize, a: &[T], a_rs: usize, a_cs: usize, b: &[T], b_rs: usize, b_cs: usize, c: &[T]) {
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| {
        if rows == 0 || cols == 0 { 0 } else { (rows - 1) * rs + (cols - 1) * cs + 1 }
    };
    assert!(a.len() >= last(m, k, a_rs, a_cs), "gemm: A too short");
    assert!(b.len() >= last(k, n, b_rs, b_cs), "gemm: B too short");
    assert!(c.len() >= m * n, "gemm: C too short");
}

impl Scalar for f32 {
    fn gemm(m: usize, k: usize, n: usize, a: &[f32], a_rs: usize, a_cs: usize, b: &[f32], b_rs: usize, b_cs: usize, beta: f32, c: &mut [f32]) {
        check_gemm(m, k, n, a, a_rs, a_cs, b, b_rs, b_cs, c);
        // SAFETY: extents checked above; C does not alias A or B.
        unsafe {
            matrixmultiply::sgemm(
                m, k, n, 1.0, a.as_ptr(), a_rs as isize, a_cs as isize, b.as_ptr(), b_rs as isize, b_cs as isize,
                beta, c.as_mut_ptr(), n as isize, 1,
            );
        }
    }
}

impl Scalar for f64 {
    fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_rs: usize, a_cs: usize, b: &[f64], b_rs: usize, b_cs: usize, beta: f64, c: &mut [f64]) {
        check_gemm(m, k, n, a, a_rs, a_cs, b, b_rs, b_cs, c);
        // SAFETY: extents checked above; C does not alias A or B.
        unsafe {
            matrixmultiply::dgemm(
                m, k, n, 1.0, a.as_ptr(), a_rs as isize, a_cs as isize, b.as_ptr(), b_rs as isize, b_cs as isize,
                beta, c.as_mut_ptr(), n as isize, 1,
            );
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape3 {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape3 {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Self { height, width, channels }
    }

    pub const fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for Shape3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

/// Dense `(h, w, c)` tensor, channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3<T> {
    shape: Shape3,
    data: Vec<T>,
}

impl<T: Scalar> Tensor3<T> {
    pub fn zeros(shape: Shape3) -> Self {
        Self { shape, data: vec![T::zero(); shape.len()] }
    }

    pub fn from_vec(shape: Shape3, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(NnError::Shape(format!(
                "tensor {shape} needs {} values, got {}",
                shape.len(),
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    /// A `1 x 1 x n` tensor holding a plain vector.
    pub fn vector(data: Vec<T>) -> Self {
        Self { shape: Shape3::new(1, 1, data.len()), data }
    }

    pub fn shape(&self) -> Shape3 {
        self.shape
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.shape.width + x) * self.shape.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> T {
        self.data[self.index(y, x, c)]
    }

    /// Same data viewed as `1 x 1 x n`.
    pub fn flattened(self) -> Self {
        let n = self.data.len();
        Self { shape: Shape3::new(1, 1, n), data: self.data }
    }

    pub fn reshaped(self, shape: Shape3) -> Result<Self> {
        Self::from_vec(shape, self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor3<U> {
        Tensor3 {
            shape: self.shape,
            data: self.data.iter().map(|v| U::from(*v).unwrap()).collect(),
        }
    }
}
