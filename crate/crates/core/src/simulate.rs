//! Synthetic test objects, reference beams and recorded holograms.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::field::{ComplexField, Grid, RealField};

/// ChaCha stream reserved for shot-noise draws.
pub(crate) const NOISE_STREAM: u64 = 1;

/// Unit-amplitude field with a constant phase offset inside a centered rectangle.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectSpec {
    pub grid: Grid,
    pub inner_width: usize,
    pub inner_height: usize,
    /// Phase inside the inner rectangle, radians in `(−π, π]`.
    pub phase_step: f64,
    pub amplitude: f64,
}

impl ObjectSpec {
    /// Step object with a centered `inner × inner` square.
    pub fn square_step(grid_size: usize, inner: usize, phase_step: f64) -> Result<Self> {
        let spec = ObjectSpec {
            grid: Grid::square(grid_size)?,
            inner_width: inner,
            inner_height: inner,
            phase_step,
            amplitude: 1.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.inner_width > self.grid.width || self.inner_height > self.grid.height {
            return Err(Error::param(
                "object.inner",
                format!(
                    "inner region {}x{} exceeds grid {}",
                    self.inner_width, self.inner_height, self.grid
                ),
            ));
        }
        if !(self.phase_step > -PI && self.phase_step <= PI) {
            return Err(Error::param("object.phase_step", format!("{} not in (-pi, pi]", self.phase_step)));
        }
        if !(self.amplitude.is_finite() && self.amplitude > 0.0) {
            return Err(Error::param("object.amplitude", "must be positive"));
        }
        Ok(())
    }

    /// Half-open column range `[x0, x1)` covered by the inner rectangle.
    pub fn inner_cols(&self) -> (usize, usize) {
        let x0 = (self.grid.width - self.inner_width) / 2;
        (x0, x0 + self.inner_width)
    }

    /// Half-open row range `[y0, y1)` covered by the inner rectangle.
    pub fn inner_rows(&self) -> (usize, usize) {
        let y0 = (self.grid.height - self.inner_height) / 2;
        (y0, y0 + self.inner_height)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ReferenceSpec {
    /// `exp[i2π(f1·x + f2·y)]`, frequencies in cycles/pixel.
    Plane { f1: f64, f2: f64 },
    /// `exp[i2π·p·((x − cx)² + (y − cy)²)]`, curvature in 1/pixel².
    Spherical { p: f64, cx: f64, cy: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReferenceKind {
    Plane,
    Spherical,
}

impl FromStr for ReferenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "plane" => Ok(ReferenceKind::Plane),
            "spherical" => Ok(ReferenceKind::Spherical),
            other => Err(Error::param("reference.kind", format!("unknown kind `{other}`"))),
        }
    }
}

impl fmt::Display for ReferenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReferenceKind::Plane => "plane",
            ReferenceKind::Spherical => "spherical",
        })
    }
}

impl ReferenceSpec {
    pub fn kind(&self) -> ReferenceKind {
        match self {
            ReferenceSpec::Plane { .. } => ReferenceKind::Plane,
            ReferenceSpec::Spherical { .. } => ReferenceKind::Spherical,
        }
    }

    /// Reference phase at pixel `(x, y)`.
    pub fn phase_at(&self, x: f64, y: f64) -> f64 {
        match *self {
            ReferenceSpec::Plane { f1, f2 } => TAU * (f1 * x + f2 * y),
            ReferenceSpec::Spherical { p, cx, cy } => {
                let (dx, dy) = (x - cx, y - cy);
                TAU * p * (dx * dx + dy * dy)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = match *self {
            ReferenceSpec::Plane { f1, f2 } => f1.is_finite() && f2.is_finite(),
            ReferenceSpec::Spherical { p, cx, cy } => p.is_finite() && cx.is_finite() && cy.is_finite(),
        };
        if !finite {
            return Err(Error::param("reference", "parameters must be finite"));
        }
        Ok(())
    }
}

pub fn make_step_phase_object(spec: &ObjectSpec) -> Result<ComplexField> {
    spec.validate()?;
    let (x0, x1) = spec.inner_cols();
    let (y0, y1) = spec.inner_rows();
    let inside = Complex64::from_polar(spec.amplitude, spec.phase_step);
    let outside = Complex64::new(spec.amplitude, 0.0);
    Ok(ComplexField::from_fn(spec.grid, |x, y| {
        if (x0..x1).contains(&x) && (y0..y1).contains(&y) {
            inside
        } else {
            outside
        }
    }))
}

pub fn make_reference(spec: &ReferenceSpec, grid: Grid) -> Result<ComplexField> {
    spec.validate()?;
    let spec = *spec;
    Ok(ComplexField::from_fn(grid, move |x, y| {
        let (s, c) = spec.phase_at(x as f64, y as f64).sin_cos();
        Complex64::new(c, s)
    }))
}

/// Ideal interferogram `H = |O + R|²`.
pub fn form_hologram(object: &ComplexField, reference: &ComplexField) -> Result<RealField> {
    object.grid().ensure_same(&reference.grid())?;
    let data = object
        .data()
        .iter()
        .zip(reference.data())
        .map(|(o, r)| (o + r).norm_sqr())
        .collect::<Vec<f64>>();
    if let Some(index) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("hologram intensity overflows at sample {index}")));
    }
    Ok(RealField::from_raw(object.grid(), data))
}

/// Shot-noise realization of `hologram` at a mean level of `photons_per_pixel`.
///
/// The hologram is rescaled so its spatial mean equals `photons_per_pixel`,
/// each pixel is replaced by a Poisson draw with that mean, and the counts are
/// scaled back to the original intensity units. Deterministic in `seed`.
pub fn apply_poisson_noise(hologram: &RealField, photons_per_pixel: f64, seed: u64) -> Result<RealField> {
    if !(photons_per_pixel.is_finite() && photons_per_pixel > 0.0) {
        return Err(Error::param("photons_per_pixel", "must be positive"));
    }
    if hologram.data().iter().any(|&v| v < 0.0) {
        return Err(Error::param("hologram", "intensities must be non-negative"));
    }
    let mean = hologram.mean();
    if !mean.is_finite() {
        return Err(Error::Numerical("hologram mean intensity overflows".into()));
    }
    if mean <= 0.0 {
        return Err(Error::param("hologram", "all-zero hologram has no photon scale"));
    }
    let scale = photons_per_pixel / mean;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(NOISE_STREAM);
    let data = hologram
        .data()
        .iter()
        .map(|&h| poisson_sample(&mut rng, scale * h) / scale)
        .collect();
    Ok(RealField::from_raw(hologram.grid(), data))
}

fn poisson_sample<R: Rng>(rng: &mut R, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    match Poisson::new(lambda) {
        Ok(dist) => dist.sample(rng),
        // Beyond the sampler's range the normal limit is indistinguishable.
        Err(_) => {
            let z: f64 = rand_distr::StandardNormal.sample(rng);
            (lambda + lambda.sqrt() * z).round().max(0.0)
        }
    }
}
