//! Row-major dense matrices and strided GEMM.
//!
//! All products go through [`gemm`], which wraps `matrixmultiply::dgemm` behind
//! bounds-checked strided views. Every caller (batched training, single-segment
//! inference, the cell forward) shares that one code path, so results for a given
//! row do not depend on how many rows were multiplied together.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::config(format!(
                "matrix data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// Copy of rows `start..end`.
    pub fn slice_rows(&self, start: usize, end: usize) -> Matrix {
        Matrix {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn view(&self) -> View<'_> {
        View {
            data: &self.data,
            offset: 0,
            rows: self.rows,
            cols: self.cols,
            rs: self.cols as isize,
            cs: 1,
        }
    }

    /// View of the column block `c0..c1`.
    pub fn view_cols(&self, c0: usize, c1: usize) -> View<'_> {
        assert!(c0 <= c1 && c1 <= self.cols);
        View {
            data: &self.data,
            offset: c0,
            rows: self.rows,
            cols: c1 - c0,
            rs: self.cols as isize,
            cs: 1,
        }
    }

    /// View of the row block `r0..r1`.
    pub fn view_rows(&self, r0: usize, r1: usize) -> View<'_> {
        assert!(r0 <= r1 && r1 <= self.rows);
        View {
            data: &self.data,
            offset: r0 * self.cols,
            rows: r1 - r0,
            cols: self.cols,
            rs: self.cols as isize,
            cs: 1,
        }
    }

    pub fn view_mut(&mut self) -> ViewMut<'_> {
        let (rows, cols) = (self.rows, self.cols);
        ViewMut {
            data: &mut self.data,
            offset: 0,
            rows,
            cols,
            rs: cols as isize,
            cs: 1,
        }
    }

    pub fn view_rows_mut(&mut self, r0: usize, r1: usize) -> ViewMut<'_> {
        assert!(r0 <= r1 && r1 <= self.rows);
        let cols = self.cols;
        ViewMut {
            data: &mut self.data,
            offset: r0 * cols,
            rows: r1 - r0,
            cols,
            rs: cols as isize,
            cs: 1,
        }
    }

    pub fn view_cols_mut(&mut self, c0: usize, c1: usize) -> ViewMut<'_> {
        assert!(c0 <= c1 && c1 <= self.cols);
        let (rows, cols) = (self.rows, self.cols);
        ViewMut {
            data: &mut self.data,
            offset: c0,
            rows,
            cols: c1 - c0,
            rs: cols as isize,
            cs: 1,
        }
    }
}

/// Strided read-only view into a flat buffer.
#[derive(Debug, Clone, Copy)]
pub struct View<'a> {
    data: &'a [f64],
    offset: usize,
    rows: usize,
    cols: usize,
    rs: isize,
    cs: isize,
}

impl<'a> View<'a> {
    /// Row-major view of a plain slice.
    pub fn from_slice(data: &'a [f64], rows: usize, cols: usize) -> Self {
        assert_eq!(data.len(), rows * cols);
        View {
            data,
            offset: 0,
            rows,
            cols,
            rs: cols as isize,
            cs: 1,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Transposed view; no data is moved.
    pub fn t(self) -> Self {
        View {
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
            ..self
        }
    }

    /// Column block `c0..c1` of this view.
    pub fn sub_cols(self, c0: usize, c1: usize) -> Self {
        assert!(c0 <= c1 && c1 <= self.cols);
        View {
            offset: (self.offset as isize + c0 as isize * self.cs) as usize,
            cols: c1 - c0,
            ..self
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.index(i, j)]
    }

    fn index(&self, i: usize, j: usize) -> usize {
        (self.offset as isize + i as isize * self.rs + j as isize * self.cs) as usize
    }

    fn check(&self) {
        if self.rows > 0 && self.cols > 0 {
            let last = self.index(self.rows - 1, self.cols - 1);
            assert!(last < self.data.len(), "view exceeds its buffer");
        }
    }
}

/// Strided mutable view into a flat buffer.
#[derive(Debug)]
pub struct ViewMut<'a> {
    data: &'a mut [f64],
    offset: usize,
    rows: usize,
    cols: usize,
    rs: isize,
    cs: isize,
}

impl<'a> ViewMut<'a> {
    pub fn from_slice(data: &'a mut [f64], rows: usize, cols: usize) -> Self {
        assert_eq!(data.len(), rows * cols);
        ViewMut {
            data,
            offset: 0,
            rows,
            cols,
            rs: cols as isize,
            cs: 1,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    fn check(&self) {
        if self.rows > 0 && self.cols > 0 {
            let last = (self.offset as isize
                + (self.rows - 1) as isize * self.rs
                + (self.cols - 1) as isize * self.cs) as usize;
            assert!(last < self.data.len(), "view exceeds its buffer");
        }
    }
}

/// `c = alpha * a * b + beta * c`.
///
/// Panics on inconsistent shapes; shape errors here are programming errors.
pub fn gemm(alpha: f64, a: View<'_>, b: View<'_>, beta: f64, c: ViewMut<'_>) {
    assert_eq!(a.cols, b.rows, "gemm inner dimension mismatch");
    assert_eq!(a.rows, c.rows, "gemm row mismatch");
    assert_eq!(b.cols, c.cols, "gemm column mismatch");
    a.check();
    b.check();
    c.check();
    if c.rows == 0 || c.cols == 0 {
        return;
    }
    // SAFETY: all three views were bounds-checked against their buffers above,
    // and `c` is a unique borrow so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            a.rows,
            a.cols,
            b.cols,
            alpha,
            a.data.as_ptr().add(a.offset),
            a.rs,
            a.cs,
            b.data.as_ptr().add(b.offset),
            b.rs,
            b.cs,
            beta,
            c.data.as_mut_ptr().add(c.offset),
            c.rs,
            c.cs,
        );
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
