//! Binary field files and 8-bit PGM previews.
//!
//! A field file is one ASCII header line, `CFIELD <width> <height>` or
//! `RFIELD <width> <height>`, terminated by `\n`, followed by little-endian
//! `f64` samples in row-major order: interleaved `(re, im)` pairs for
//! `CFIELD`, plain values for `RFIELD`. Round trips are bit-exact.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{ComplexField, Grid, RealField};

const COMPLEX_TAG: &str = "CFIELD";
const REAL_TAG: &str = "RFIELD";

/// Longest header we are willing to scan for the terminating newline.
const MAX_HEADER: u64 = 64;

#[derive(Clone, Debug, PartialEq)]
pub enum AnyField {
    Complex(ComplexField),
    Real(RealField),
}

pub fn write_complex<W: Write>(mut w: W, f: &ComplexField) -> Result<()> {
    writeln!(w, "{COMPLEX_TAG} {} {}", f.width(), f.height())?;
    let mut buf = Vec::with_capacity(f.data().len() * 16);
    for c in f.data() {
        buf.extend_from_slice(&c.re.to_le_bytes());
        buf.extend_from_slice(&c.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn write_real<W: Write>(mut w: W, f: &RealField) -> Result<()> {
    writeln!(w, "{REAL_TAG} {} {}", f.width(), f.height())?;
    let mut buf = Vec::with_capacity(f.data().len() * 8);
    for v in f.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_any<R: Read>(r: R) -> Result<AnyField> {
    let mut r = BufReader::new(r);
    let mut header = Vec::new();
    (&mut r).take(MAX_HEADER).read_until(b'\n', &mut header)?;
    if header.last() != Some(&b'\n') {
        return Err(Error::Format("missing header line".into()));
    }
    let header = std::str::from_utf8(&header[..header.len() - 1])
        .map_err(|_| Error::Format("header is not ASCII".into()))?;
    let parts: Vec<&str> = header.split_ascii_whitespace().collect();
    let [tag, w, h] = parts[..] else {
        return Err(Error::Format(format!("bad header `{header}`")));
    };
    let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad dimension `{s}`")));
    let grid = Grid::new(parse(w)?, parse(h)?)?;
    let per_sample = match tag {
        COMPLEX_TAG => 2,
        REAL_TAG => 1,
        other => return Err(Error::Format(format!("unknown field tag `{other}`"))),
    };

    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let expected = grid.len() * per_sample * 8;
    if bytes.len() != expected {
        return Err(Error::Format(format!("expected {expected} payload bytes, found {}", bytes.len())));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
        .collect();
    if per_sample == 2 {
        let data = values.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
        Ok(AnyField::Complex(ComplexField::new(grid, data)?))
    } else {
        Ok(AnyField::Real(RealField::new(grid, values)?))
    }
}

pub fn save_complex(path: impl AsRef<Path>, f: &ComplexField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_complex(&mut w, f)?;
    w.flush()?;
    Ok(())
}

pub fn save_real(path: impl AsRef<Path>, f: &RealField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_real(&mut w, f)?;
    w.flush()?;
    Ok(())
}

pub fn load_complex(path: impl AsRef<Path>) -> Result<ComplexField> {
    match read_any(File::open(path)?)? {
        AnyField::Complex(f) => Ok(f),
        AnyField::Real(_) => Err(Error::Format(format!("expected {COMPLEX_TAG}, found {REAL_TAG}"))),
    }
}

pub fn load_real(path: impl AsRef<Path>) -> Result<RealField> {
    match read_any(File::open(path)?)? {
        AnyField::Real(f) => Ok(f),
        AnyField::Complex(_) => Err(Error::Format(format!("expected {REAL_TAG}, found {COMPLEX_TAG}"))),
    }
}

/// Binary (P5) 8-bit PGM.
pub fn write_pgm<W: Write>(mut w: W, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::LengthMismatch { len: pixels.len(), width, height });
    }
    write!(w, "P5\n{width} {height}\n255\n")?;
    w.write_all(pixels)?;
    Ok(())
}

/// Phase in `(−π, π]` mapped linearly onto `0..=255`.
pub fn phase_to_gray(phase: &RealField) -> Vec<u8> {
    phase
        .data()
        .iter()
        .map(|&p| (((p + PI) / (2.0 * PI)) * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Min-max normalization onto `0..=255`; a constant image maps to 0.
pub fn intensity_to_gray(f: &RealField) -> Vec<u8> {
    let (lo, hi) = f.min_max();
    let span = hi - lo;
    f.data()
        .iter()
        .map(|&v| if span > 0.0 { ((v - lo) / span * 255.0).round() as u8 } else { 0 })
        .collect()
}

pub fn save_phase_pgm(path: impl AsRef<Path>, phase: &RealField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_pgm(&mut w, phase.width(), phase.height(), &phase_to_gray(phase))?;
    w.flush()?;
    Ok(())
}

pub fn save_intensity_pgm(path: impl AsRef<Path>, f: &RealField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_pgm(&mut w, f.width(), f.height(), &intensity_to_gray(f))?;
    w.flush()?;
    Ok(())
}
