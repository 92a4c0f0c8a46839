use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalization {
    /// Forward sum without scaling; the inverse carries `1/N`.
    Unnormalized,
    /// `1/sqrt(N)` in both directions.
    Unitary,
}

/// Complex coefficients of a 1-D (`rows == 1`) or 2-D real signal, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    coefficients: Vec<Complex64>,
    rows: usize,
    cols: usize,
    normalization: Normalization,
}

impl Spectrum {
    pub fn new(coefficients: Vec<Complex64>, rows: usize, cols: usize, normalization: Normalization) -> Result<Self> {
        if rows * cols != coefficients.len() || coefficients.is_empty() {
            return Err(Error::Shape(format!(
                "spectrum of {} coefficients cannot have shape {rows}x{cols}",
                coefficients.len()
            )));
        }
        Ok(Self {
            coefficients,
            rows,
            cols,
            normalization,
        })
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn coefficients_mut(&mut self) -> &mut [Complex64] {
        &mut self.coefficients
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn get(&self, u: usize, v: usize) -> Complex64 {
        self.coefficients[u * self.cols + v]
    }

    /// Flat index of the frequency conjugate to `index` under real-input symmetry.
    pub fn conjugate_index(&self, index: usize) -> usize {
        conjugate_index(index, self.rows, self.cols)
    }

    /// `|C[k]|^2` per coefficient.
    pub fn energies(&self) -> Vec<f64> {
        self.coefficients.iter().map(Complex64::norm_sqr).collect()
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.norm()).collect()
    }

    /// Largest `|C[k] - conj(C[conj k])|`; zero for spectra of real signals.
    pub fn conjugate_symmetry_error(&self) -> f64 {
        (0..self.len())
            .map(|k| (self.coefficients[k] - self.coefficients[self.conjugate_index(k)].conj()).norm())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn conjugate_index(index: usize, rows: usize, cols: usize) -> usize {
    let (u, v) = (index / cols, index % cols);
    ((rows - u) % rows) * cols + (cols - v) % cols
}

/// Reference transform, `O(N^2)`. `sign` is -1 for forward, +1 for inverse; no scaling.
fn naive(input: &[Complex64], sign: f64) -> Vec<Complex64> {
    let n = input.len();
    (0..n)
        .map(|k| {
            input.iter().enumerate().fold(Complex64::new(0.0, 0.0), |acc, (t, &x)| {
                let angle = sign * 2.0 * PI * ((t * k) % n) as f64 / n as f64;
                acc + x * Complex64::from_polar(1.0, angle)
            })
        })
        .collect()
}

/// Iterative radix-2 Cooley-Tukey; `data.len()` must be a power of two.
fn radix2(data: &mut [Complex64], sign: f64) {
    let n = data.len();
    let bits = n.trailing_zeros();
    if bits > 0 {
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if j > i {
                data.swap(i, j);
            }
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let twiddles: Vec<Complex64> = (0..half)
            .map(|j| Complex64::from_polar(1.0, sign * 2.0 * PI * j as f64 / len as f64))
            .collect();
        for start in (0..n).step_by(len) {
            for j in 0..half {
                let a = data[start + j];
                let b = data[start + j + half] * twiddles[j];
                data[start + j] = a + b;
                data[start + j + half] = a - b;
            }
        }
        len <<= 1;
    }
}

/// Unscaled complex transform; radix-2 for power-of-two lengths, naive otherwise.
pub(crate) fn transform(data: &mut [Complex64], inverse: bool) {
    let sign = if inverse { 1.0 } else { -1.0 };
    if data.len().is_power_of_two() {
        radix2(data, sign);
    } else {
        let out = naive(data, sign);
        data.copy_from_slice(&out);
    }
}

/// Unscaled transform that always takes the `O(N^2)` path.
pub fn dft_reference(x: &[f64]) -> Vec<Complex64> {
    let input: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    naive(&input, -1.0)
}

fn check_signal(x: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::invalid("signal must be non-empty"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("signal contains non-finite values"));
    }
    Ok(())
}

fn scale_for(normalization: Normalization, n: usize, inverse: bool) -> f64 {
    match (normalization, inverse) {
        (Normalization::Unnormalized, false) => 1.0,
        (Normalization::Unnormalized, true) => 1.0 / n as f64,
        (Normalization::Unitary, _) => 1.0 / (n as f64).sqrt(),
    }
}

pub fn dft_1d(x: &[f64]) -> Result<Spectrum> {
    dft_1d_with(x, Normalization::Unnormalized)
}

pub fn dft_1d_with(x: &[f64], normalization: Normalization) -> Result<Spectrum> {
    check_signal(x)?;
    let mut data: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform(&mut data, false);
    let s = scale_for(normalization, x.len(), false);
    if s != 1.0 {
        data.iter_mut().for_each(|c| *c *= s);
    }
    Spectrum::new(data, 1, x.len(), normalization)
}

/// Inverse of [`dft_1d`]/[`dft_2d`] flattened to row-major real values.
/// The imaginary residue is discarded.
pub fn idft_real(spectrum: &Spectrum) -> Vec<f64> {
    idft_complex(spectrum).into_iter().map(|c| c.re).collect()
}

pub fn idft_1d(spectrum: &Spectrum) -> Result<Vec<f64>> {
    if spectrum.rows != 1 {
        return Err(Error::invalid("idft_1d needs a one-dimensional spectrum"));
    }
    Ok(idft_real(spectrum))
}

pub(crate) fn idft_complex(spectrum: &Spectrum) -> Vec<Complex64> {
    let (rows, cols) = spectrum.shape();
    let mut data = spectrum.coefficients.clone();
    transform_2d(&mut data, rows, cols, true);
    let s = scale_for(spectrum.normalization, rows * cols, true);
    data.iter_mut().for_each(|c| *c *= s);
    data
}

fn transform_2d(data: &mut [Complex64], rows: usize, cols: usize, inverse: bool) {
    if cols > 1 {
        for row in data.chunks_mut(cols) {
            transform(row, inverse);
        }
    }
    if rows > 1 {
        let mut column = vec![Complex64::new(0.0, 0.0); rows];
        for c in 0..cols {
            for r in 0..rows {
                column[r] = data[r * cols + c];
            }
            transform(&mut column, inverse);
            for r in 0..rows {
                data[r * cols + c] = column[r];
            }
        }
    }
}

/// Separable 2-D transform: each row, then each column.
pub fn dft_2d(map: &[Vec<f64>]) -> Result<Spectrum> {
    let rows = map.len();
    let cols = map.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("map must be non-empty"));
    }
    if map.iter().any(|r| r.len() != cols) {
        return Err(Error::invalid("ragged matrix"));
    }
    let flat: Vec<f64> = map.iter().flatten().copied().collect();
    check_signal(&flat)?;
    let mut data: Vec<Complex64> = flat.into_iter().map(|v| Complex64::new(v, 0.0)).collect();
    transform_2d(&mut data, rows, cols, false);
    Spectrum::new(data, rows, cols, Normalization::Unnormalized)
}

pub fn idft_2d(spectrum: &Spectrum) -> Vec<Vec<f64>> {
    idft_real(spectrum).chunks(spectrum.cols).map(<[f64]>::to_vec).collect()
}

/// Forward transform of a real signal of the given shape.
pub(crate) fn dft_shaped(values: &[f64], rows: usize, cols: usize) -> Result<Spectrum> {
    if rows == 1 {
        dft_1d(values)
    } else {
        let map: Vec<Vec<f64>> = values.chunks(cols).map(<[f64]>::to_vec).collect();
        dft_2d(&map)
    }
}
