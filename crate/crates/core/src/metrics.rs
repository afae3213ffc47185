//! Reconstruction quality: phase RMS error, shot-noise reference, edge sharpness.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::field::{ComplexField, RealField};

/// Maps a phase to `(−π, π]`.
pub fn wrap_phase(phi: f64) -> f64 {
    let w = phi - 2.0 * PI * (phi / (2.0 * PI)).round();
    if w <= -PI {
        w + 2.0 * PI
    } else if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Rectangular pixel region, half-open on both axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Region {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
}

impl Region {
    pub fn full(width: usize, height: usize) -> Self {
        Region { x0: 0, x1: width, y0: 0, y1: height }
    }

    /// Full frame minus a border of `margin` pixels.
    pub fn eroded(width: usize, height: usize, margin: usize) -> Self {
        Region {
            x0: margin.min(width),
            x1: width.saturating_sub(margin).max(margin.min(width)),
            y0: margin.min(height),
            y1: height.saturating_sub(margin).max(margin.min(height)),
        }
    }
}

/// `sqrt(mean(wrap(φ_rec − φ_truth)²))` over the whole frame.
pub fn rms_phase_error(rec: &ComplexField, truth: &ComplexField) -> Result<f64> {
    rms_phase_error_in(rec, truth, Region::full(rec.width(), rec.height()))
}

pub fn rms_phase_error_in(rec: &ComplexField, truth: &ComplexField, region: Region) -> Result<f64> {
    rec.grid().ensure_same(&truth.grid())?;
    if region.x1 > rec.width() || region.y1 > rec.height() || region.x0 >= region.x1 || region.y0 >= region.y1 {
        return Err(Error::param("region", format!("{region:?} is empty or outside the frame")));
    }
    let mut acc = 0.0;
    for y in region.y0..region.y1 {
        for x in region.x0..region.x1 {
            let t = truth[(x, y)];
            if t.norm_sqr() == 0.0 {
                return Err(Error::param("truth", format!("zero sample at ({x}, {y}) has no phase")));
            }
            // arg of rec·conj(truth) is the phase difference already wrapped to (−π, π].
            let d = (rec[(x, y)] * t.conj()).arg();
            acc += d * d;
        }
    }
    let n = (region.x1 - region.x0) * (region.y1 - region.y0);
    Ok((acc / n as f64).sqrt())
}

/// Nominal single-pixel phase noise `1/√N` at `N` photons/pixel.
pub fn shot_noise_level(n_photons: f64) -> f64 {
    1.0 / n_photons.sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Line {
    Row(usize),
    Column(usize),
}

/// Values of `map` along one row or column.
pub fn edge_profile(map: &RealField, line: Line) -> Result<Vec<f64>> {
    match line {
        Line::Row(y) => {
            if y >= map.height() {
                return Err(Error::OutOfBounds { index: y, len: map.height() });
            }
            Ok(map.row(y).to_vec())
        }
        Line::Column(x) => {
            if x >= map.width() {
                return Err(Error::OutOfBounds { index: x, len: map.width() });
            }
            Ok((0..map.height()).map(|y| map[(x, y)]).collect())
        }
    }
}

/// 10–90 % rise distance, in pixels, of a single edge in `profile`.
///
/// The two plateau levels are the means of the first and last `plateau`
/// samples. The 90 % point is the first interpolated crossing of that level;
/// the 10 % point is the last crossing of its level before it. Returns `None`
/// when the plateaus coincide or no crossing exists.
pub fn edge_width_10_90(profile: &[f64], plateau: usize) -> Option<f64> {
    let n = profile.len();
    if plateau == 0 || 2 * plateau > n {
        return None;
    }
    let lo = profile[..plateau].iter().sum::<f64>() / plateau as f64;
    let hi = profile[n - plateau..].iter().sum::<f64>() / plateau as f64;
    let span = hi - lo;
    if span.abs() < f64::EPSILON {
        return None;
    }
    let s: Vec<f64> = profile.iter().map(|v| (v - lo) / span).collect();

    let i90 = (1..n).find(|&i| s[i] >= 0.9 && s[i - 1] < 0.9)?;
    let x90 = crossing(&s, i90 - 1, 0.9);
    let i10 = (1..=i90).rev().find(|&i| s[i] >= 0.1 && s[i - 1] < 0.1)?;
    let x10 = crossing(&s, i10 - 1, 0.1);
    Some(x90 - x10)
}

/// Position between samples `i` and `i + 1` where the linear interpolant equals `level`.
fn crossing(s: &[f64], i: usize, level: f64) -> f64 {
    let (a, b) = (s[i], s[i + 1]);
    i as f64 + (level - a) / (b - a)
}

/// Summary of one reconstruction.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub experiment: String,
    pub method: String,
    pub rms_phase_error: f64,
    pub shot_noise_level: f64,
    pub n_photons: f64,
    pub edge_width_10_90: Option<f64>,
    pub iterations: usize,
    pub notes: Vec<String>,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "experiment,n_photons,rms,shot_noise,edge_width,iters";

    /// Flat `key = value` rendering.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment = {}", self.experiment);
        let _ = writeln!(s, "method = {}", self.method);
        let _ = writeln!(s, "n_photons = {}", self.n_photons);
        let _ = writeln!(s, "rms_phase_error = {}", self.rms_phase_error);
        let _ = writeln!(s, "shot_noise_level = {}", self.shot_noise_level);
        match self.edge_width_10_90 {
            Some(w) => {
                let _ = writeln!(s, "edge_width_10_90 = {w}");
            }
            None => {
                let _ = writeln!(s, "edge_width_10_90 = nan");
            }
        }
        let _ = writeln!(s, "iterations = {}", self.iterations);
        for note in &self.notes {
            let _ = writeln!(s, "note = {note}");
        }
        s
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.experiment,
            self.n_photons,
            self.rms_phase_error,
            self.shot_noise_level,
            self.edge_width_10_90.map_or_else(|| "nan".to_string(), |w| w.to_string()),
            self.iterations
        )
    }
}
