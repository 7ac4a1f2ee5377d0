//! Grayscale image values in `[0, 1]` plus the row-major vector bridging used
//! everywhere a length `m1 * m2` vector is reinterpreted as an `m1 x m2`
//! image: entry `(i, j)` of the matrix is element `i * m2 + j` of the vector.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Reinterpret a flat vector as a matrix, row-major.
pub fn vec_to_matrix_row_major(v: &[f64], rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    if v.len() != rows * cols {
        return Err(Error::DimensionMismatch(format!(
            "cannot reshape a length {} vector to {rows}x{cols}",
            v.len()
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, v))
}

/// Flatten a matrix to a vector, row-major.
pub fn matrix_to_vec_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// A dense grayscale image with every sample in `[0, 1]`.
///
/// The range invariant is established at construction and preserved by every
/// operation in this crate (corruption clamps, resampling interpolates
/// convexly), so downstream numeric code never has to re-check it.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageMatrix {
    data: DMatrix<f64>,
}

impl ImageMatrix {
    /// Wrap a matrix of samples, requiring every entry to be finite and in
    /// `[0, 1]`.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyInput("image must have at least one pixel".into()));
        }
        for &v in data.iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite("image sample".into()));
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!(
                    "image sample {v} outside [0, 1]"
                )));
            }
        }
        Ok(ImageMatrix { data })
    }

    /// Build an image from a generator function, clamping values into `[0, 1]`.
    pub fn from_fn_clamped(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let data = DMatrix::from_fn(rows, cols, |i, j| f(i, j).clamp(0.0, 1.0));
        ImageMatrix { data }
    }

    /// Build an image from a row-major sample vector.
    pub fn from_vec_row_major(rows: usize, cols: usize, v: &[f64]) -> Result<Self> {
        ImageMatrix::new(vec_to_matrix_row_major(v, rows, cols)?)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        ImageMatrix { data: DMatrix::zeros(rows, cols) }
    }

    /// `(rows, cols)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.data.nrows(), self.data.ncols())
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Mutable access for in-crate editing; callers must uphold the `[0, 1]`
    /// invariant (corruption does so by clamping what it writes).
    pub(crate) fn data_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.data
    }

    /// Flatten to a row-major sample vector.
    pub fn to_vec_row_major(&self) -> Vec<f64> {
        matrix_to_vec_row_major(&self.data)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / (self.data.len() as f64)
    }

    /// Resample to `rows x cols` by bilinear interpolation with pixel-center
    /// alignment. Values stay in `[0, 1]` because each output sample is a
    /// convex combination of input samples; a constant image resizes to the
    /// same constant.
    pub fn resize_bilinear(&self, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter(format!(
                "resize target {rows}x{cols} must be nonzero"
            )));
        }
        let (sr, sc) = self.shape();
        if (sr, sc) == (rows, cols) {
            return Ok(self.clone());
        }
        let row_scale = sr as f64 / rows as f64;
        let col_scale = sc as f64 / cols as f64;
        let data = DMatrix::from_fn(rows, cols, |i, j| {
            let sy = ((i as f64 + 0.5) * row_scale - 0.5).clamp(0.0, (sr - 1) as f64);
            let sx = ((j as f64 + 0.5) * col_scale - 0.5).clamp(0.0, (sc - 1) as f64);
            let y0 = sy.floor() as usize;
            let x0 = sx.floor() as usize;
            let y1 = (y0 + 1).min(sr - 1);
            let x1 = (x0 + 1).min(sc - 1);
            let fy = sy - y0 as f64;
            let fx = sx - x0 as f64;
            let top = self.data[(y0, x0)] * (1.0 - fx) + self.data[(y0, x1)] * fx;
            let bot = self.data[(y1, x0)] * (1.0 - fx) + self.data[(y1, x1)] * fx;
            top * (1.0 - fy) + bot * fy
        });
        Ok(ImageMatrix { data })
    }
}
