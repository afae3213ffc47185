//! Fourier-transform-method demodulation: isolate the cross term around the
//! known carrier in the hologram spectrum and shift it back to baseband.
//!
//! The recorded hologram contains `R·O*` centered on the carrier `(f1, f2)`.
//! A circular mask around that peak (radius a fraction of the dc-to-carrier
//! distance, optionally Hamming-tapered) selects it, an inverse transform
//! returns `≈ R·O*`, and multiplication by `conj(R)` followed by conjugation
//! yields the object estimate.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::field::{ComplexField, Grid, RealField};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Window {
    /// Radial taper `0.54 + 0.46·cos(π·r/r_max)` over the mask.
    Hamming,
    None,
}

impl FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hamming" => Ok(Window::Hamming),
            "none" => Ok(Window::None),
            other => Err(Error::param("ftm.window", format!("unknown window `{other}`"))),
        }
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Window::Hamming => "hamming",
            Window::None => "none",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FtmConfig {
    /// Carrier frequency `(f1, f2)` in cycles/pixel.
    pub carrier: (f64, f64),
    /// Mask radius as a fraction of the dc-to-carrier distance.
    pub radius_factor: f64,
    pub window: Window,
}

impl FtmConfig {
    pub fn new(f1: f64, f2: f64) -> Self {
        FtmConfig { carrier: (f1, f2), radius_factor: 0.5, window: Window::Hamming }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius_factor > 0.0 && self.radius_factor < 1.0) {
            return Err(Error::param("ftm.radius_factor", format!("{} not in (0, 1)", self.radius_factor)));
        }
        if !(self.carrier.0.is_finite() && self.carrier.1.is_finite()) {
            return Err(Error::param("ftm.carrier", "must be finite"));
        }
        Ok(())
    }

    pub fn carrier_distance(&self) -> f64 {
        self.carrier.0.hypot(self.carrier.1)
    }
}

#[derive(Clone, Debug)]
pub struct FtmOutput {
    pub object: ComplexField,
    /// Set when the cross term cannot be separated from dc (zero carrier).
    pub overlap_warning: bool,
}

/// Signed frequency of DFT bin `k` out of `n`, in cycles/pixel, in `[-0.5, 0.5)`.
pub fn bin_frequency(k: usize, n: usize) -> f64 {
    let k = if 2 * k >= n { k as f64 - n as f64 } else { k as f64 };
    k / n as f64
}

fn wrap_frequency(f: f64) -> f64 {
    f - f.round()
}

/// Unitary 2D DFT, `X[ky, kx] = (WH)^{-1/2} Σ f(x, y)·exp(−i2π(kx·x/W + ky·y/H))`.
pub fn fft2(f: &ComplexField) -> ComplexField {
    transform(f, false)
}

/// Inverse of [`fft2`].
pub fn ifft2(f: &ComplexField) -> ComplexField {
    transform(f, true)
}

fn transform(f: &ComplexField, inverse: bool) -> ComplexField {
    let Grid { width: w, height: h } = f.grid();
    let mut planner = FftPlanner::<f64>::new();
    let (row_fft, col_fft): (std::sync::Arc<dyn Fft<f64>>, std::sync::Arc<dyn Fft<f64>>) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };

    let mut data = f.data().to_vec();
    row_fft.process(&mut data);

    let mut cols = vec![Complex64::default(); w * h];
    for y in 0..h {
        for x in 0..w {
            cols[x * h + y] = data[y * w + x];
        }
    }
    col_fft.process(&mut cols);

    let norm = 1.0 / ((w * h) as f64).sqrt();
    for y in 0..h {
        for x in 0..w {
            data[y * w + x] = cols[x * h + y] * norm;
        }
    }
    ComplexField::from_raw(f.grid(), data)
}

/// Spectral weights of the cross-term filter, laid out like [`fft2`] output.
pub fn cross_term_mask(grid: Grid, cfg: &FtmConfig) -> RealField {
    let (f1, f2) = cfg.carrier;
    let r_max = cfg.radius_factor * cfg.carrier_distance();
    let window = cfg.window;
    RealField::from_fn(grid, move |kx, ky| {
        let dfx = wrap_frequency(bin_frequency(kx, grid.width) - f1);
        let dfy = wrap_frequency(bin_frequency(ky, grid.height) - f2);
        let r = dfx.hypot(dfy);
        if r_max <= 0.0 {
            return if r == 0.0 { 1.0 } else { 0.0 };
        }
        if r > r_max {
            return 0.0;
        }
        match window {
            Window::Hamming => 0.54 + 0.46 * (PI * r / r_max).cos(),
            Window::None => 1.0,
        }
    })
}

pub fn ftm_reconstruct(hologram: &RealField, cfg: &FtmConfig) -> Result<FtmOutput> {
    cfg.validate()?;
    let grid = hologram.grid();
    let overlap_warning = cfg.carrier_distance() == 0.0;
    if overlap_warning {
        log::warn!("carrier at dc: cross term overlaps the dc term, Fourier filtering cannot separate them");
    }

    let spectrum = fft2(&hologram.to_complex());
    let mask = cross_term_mask(grid, cfg);
    let filtered: Vec<Complex64> = spectrum.data().iter().zip(mask.data()).map(|(s, &m)| s * m).collect();
    let cross = ifft2(&ComplexField::from_raw(grid, filtered));

    let (f1, f2) = cfg.carrier;
    let object = ComplexField::from_fn(grid, |x, y| {
        let carrier = Complex64::from_polar(1.0, TAU * (f1 * x as f64 + f2 * y as f64));
        (cross[(x, y)] * carrier.conj()).conj()
    });
    Ok(FtmOutput { object, overlap_warning })
}
