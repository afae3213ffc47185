//! Complex and real 2D fields on a pixel grid, plus the discrete
//! differential operators used by the solver.
//!
//! Storage is row-major: sample `(row, col)` lives at `row * width + col`,
//! with `row` the `y` coordinate and `col` the `x` coordinate.
//!
//! Differences are forward with a zero trailing row/column (Neumann
//! boundary). [`divergence`] is the exact negative adjoint of the pair
//! `(forward_diff_x, forward_diff_y)` under the real inner product
//! `Re Σ conj(a)·b`.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Grid dimensions in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
}

impl Grid {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::GridTooSmall { width, height });
        }
        Ok(Grid { width, height })
    }

    pub fn square(n: usize) -> Result<Self> {
        Grid::new(n, n)
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self != other {
            return Err(Error::ShapeMismatch {
                left: self.to_string(),
                right: other.to_string(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// Sums `f(row)` over all rows. Rows are evaluated in parallel but combined
/// in row order, so the result does not depend on the thread count.
pub(crate) fn row_sum<F>(height: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let partial: Vec<f64> = (0..height).into_par_iter().map(f).collect();
    partial.iter().sum()
}

macro_rules! field_common {
    ($name:ident, $elem:ty) => {
        impl $name {
            pub fn grid(&self) -> Grid {
                self.grid
            }

            pub fn width(&self) -> usize {
                self.grid.width
            }

            pub fn height(&self) -> usize {
                self.grid.height
            }

            pub fn data(&self) -> &[$elem] {
                &self.data
            }

            pub fn data_mut(&mut self) -> &mut [$elem] {
                &mut self.data
            }

            pub fn into_data(self) -> Vec<$elem> {
                self.data
            }

            pub fn rows(&self) -> std::slice::Chunks<'_, $elem> {
                self.data.chunks(self.grid.width)
            }

            pub fn row(&self, y: usize) -> &[$elem] {
                let w = self.grid.width;
                &self.data[y * w..(y + 1) * w]
            }

            /// Builds a field by evaluating `f(x, y)` at every pixel.
            pub fn from_fn<F>(grid: Grid, f: F) -> Self
            where
                F: Fn(usize, usize) -> $elem + Sync + Send,
            {
                let w = grid.width;
                let mut data = vec![<$elem>::default(); grid.len()];
                data.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
                    for (x, v) in row.iter_mut().enumerate() {
                        *v = f(x, y);
                    }
                });
                $name { grid, data }
            }

            pub fn filled(grid: Grid, value: $elem) -> Self {
                $name { grid, data: vec![value; grid.len()] }
            }

            pub fn zeros(grid: Grid) -> Self {
                Self::filled(grid, <$elem>::default())
            }
        }

        impl Index<(usize, usize)> for $name {
            type Output = $elem;

            /// Indexed as `(x, y)`.
            fn index(&self, (x, y): (usize, usize)) -> &$elem {
                assert!(x < self.grid.width && y < self.grid.height);
                &self.data[y * self.grid.width + x]
            }
        }

        impl IndexMut<(usize, usize)> for $name {
            fn index_mut(&mut self, (x, y): (usize, usize)) -> &mut $elem {
                assert!(x < self.grid.width && y < self.grid.height);
                &mut self.data[y * self.grid.width + x]
            }
        }
    };
}

/// Row-major complex samples.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    grid: Grid,
    data: Vec<Complex64>,
}

/// Row-major real samples, e.g. a recorded hologram.
#[derive(Clone, Debug, PartialEq)]
pub struct RealField {
    grid: Grid,
    data: Vec<f64>,
}

field_common!(ComplexField, Complex64);
field_common!(RealField, f64);

impl ComplexField {
    pub fn new(grid: Grid, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::LengthMismatch {
                len: data.len(),
                width: grid.width,
                height: grid.height,
            });
        }
        if let Some(index) = data.iter().position(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::NonFinite { index });
        }
        Ok(ComplexField { grid, data })
    }

    /// Wraps samples produced internally; finiteness is checked in debug builds only.
    pub(crate) fn from_raw(grid: Grid, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(data.len(), grid.len());
        ComplexField { grid, data }
    }

    pub fn from_polar(amplitude: &RealField, phase: &RealField) -> Result<Self> {
        amplitude.grid.ensure_same(&phase.grid)?;
        let data = amplitude
            .data
            .iter()
            .zip(&phase.data)
            .map(|(&a, &p)| Complex64::from_polar(a, p))
            .collect();
        ComplexField::new(amplitude.grid, data)
    }

    pub fn phase(&self) -> RealField {
        RealField::from_raw(self.grid, self.data.iter().map(|c| c.arg()).collect())
    }

    pub fn amplitude(&self) -> RealField {
        RealField::from_raw(self.grid, self.data.iter().map(|c| c.norm()).collect())
    }

    pub fn conj(&self) -> ComplexField {
        self.map(|c| c.conj())
    }

    pub fn map<F>(&self, f: F) -> ComplexField
    where
        F: Fn(Complex64) -> Complex64 + Sync + Send,
    {
        ComplexField::from_raw(self.grid, self.data.par_iter().map(|&c| f(c)).collect())
    }

    /// Combines two same-shaped fields pixel by pixel.
    pub fn zip_map<F>(&self, other: &ComplexField, f: F) -> Result<ComplexField>
    where
        F: Fn(Complex64, Complex64) -> Complex64 + Sync + Send,
    {
        self.grid.ensure_same(&other.grid)?;
        let data = self
            .data
            .par_iter()
            .zip(other.data.par_iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(ComplexField::from_raw(self.grid, data))
    }

    pub fn scale(&self, s: f64) -> ComplexField {
        self.map(|c| c * s)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Real inner product `Re Σ conj(a)·b`.
    pub fn re_inner(&self, other: &ComplexField) -> Result<f64> {
        self.grid.ensure_same(&other.grid)?;
        let w = self.grid.width;
        Ok(row_sum(self.grid.height, |y| {
            let a = &self.data[y * w..(y + 1) * w];
            let b = &other.data[y * w..(y + 1) * w];
            a.iter().zip(b).map(|(a, b)| a.re * b.re + a.im * b.im).sum()
        }))
    }

    pub fn norm_sqr(&self) -> f64 {
        let w = self.grid.width;
        row_sum(self.grid.height, |y| {
            self.data[y * w..(y + 1) * w].iter().map(|c| c.norm_sqr()).sum()
        })
    }
}

impl RealField {
    pub fn new(grid: Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::LengthMismatch {
                len: data.len(),
                width: grid.width,
                height: grid.height,
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(RealField { grid, data })
    }

    pub(crate) fn from_raw(grid: Grid, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), grid.len());
        RealField { grid, data }
    }

    pub fn mean(&self) -> f64 {
        let w = self.grid.width;
        row_sum(self.grid.height, |y| self.data[y * w..(y + 1) * w].iter().sum()) / self.grid.len() as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn to_complex(&self) -> ComplexField {
        ComplexField::from_raw(self.grid, self.data.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }
}

/// `sqrt(Σ |f|²)` over all pixels.
pub fn l2_norm(f: &ComplexField) -> f64 {
    let ns = f.norm_sqr();
    if ns > 0.0 && ns.is_finite() {
        return ns.sqrt();
    }
    // Underflow or overflow of the plain sum: rescale by the largest component.
    let big = f.data.iter().fold(0.0_f64, |m, c| m.max(c.re.abs()).max(c.im.abs()));
    if big == 0.0 {
        return 0.0;
    }
    let inv = 1.0 / big;
    let scaled: f64 = f.data.iter().map(|c| (c * inv).norm_sqr()).sum();
    big * scaled.sqrt()
}

/// `out(x, y) = f(x + 1, y) − f(x, y)`, zero in the last column.
pub fn forward_diff_x(f: &ComplexField) -> ComplexField {
    let w = f.grid.width;
    let mut out = vec![Complex64::default(); f.grid.len()];
    out.par_chunks_mut(w).zip(f.data.par_chunks(w)).for_each(|(o, row)| {
        for x in 0..w - 1 {
            o[x] = row[x + 1] - row[x];
        }
    });
    ComplexField::from_raw(f.grid, out)
}

/// `out(x, y) = f(x, y + 1) − f(x, y)`, zero in the last row.
pub fn forward_diff_y(f: &ComplexField) -> ComplexField {
    let w = f.grid.width;
    let h = f.grid.height;
    let mut out = vec![Complex64::default(); f.grid.len()];
    out.par_chunks_mut(w).enumerate().for_each(|(y, o)| {
        if y + 1 < h {
            let cur = &f.data[y * w..(y + 1) * w];
            let next = &f.data[(y + 1) * w..(y + 2) * w];
            for x in 0..w {
                o[x] = next[x] - cur[x];
            }
        }
    });
    ComplexField::from_raw(f.grid, out)
}

/// Backward-difference divergence of the vector field `(px, py)`.
///
/// Satisfies `⟨Dx a, px⟩ + ⟨Dy a, py⟩ = −⟨a, div(px, py)⟩` for every `a`.
/// The last column of `px` and the last row of `py` do not contribute,
/// matching the zero trailing edge of the forward differences.
pub fn divergence(px: &ComplexField, py: &ComplexField) -> Result<ComplexField> {
    px.grid.ensure_same(&py.grid)?;
    let grid = px.grid;
    let mut out = vec![Complex64::default(); grid.len()];
    out.par_chunks_mut(grid.width)
        .enumerate()
        .for_each(|(y, o)| divergence_row(px, py, y, o));
    Ok(ComplexField::from_raw(grid, out))
}

/// Writes row `y` of `div(px, py)` into `out`.
pub(crate) fn divergence_row(px: &ComplexField, py: &ComplexField, y: usize, out: &mut [Complex64]) {
    let w = px.grid.width;
    let h = px.grid.height;
    let prow = &px.data[y * w..(y + 1) * w];
    out[0] = prow[0];
    for x in 1..w - 1 {
        out[x] = prow[x] - prow[x - 1];
    }
    out[w - 1] = -prow[w - 2];

    let qrow = &py.data[y * w..(y + 1) * w];
    if y == 0 {
        for x in 0..w {
            out[x] += qrow[x];
        }
    } else {
        let qprev = &py.data[(y - 1) * w..y * w];
        if y + 1 < h {
            for x in 0..w {
                out[x] += qrow[x] - qprev[x];
            }
        } else {
            for x in 0..w {
                out[x] -= qprev[x];
            }
        }
    }
}
