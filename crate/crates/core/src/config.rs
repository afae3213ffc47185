//! Experiment descriptions in flat `key = value` form.
//!
//! ```text
//! # comment
//! name = offaxis-n1e4
//! output_dir = out
//! photons_per_pixel = 1e4
//! seed = 1
//! object.size = 500
//! object.inner = 250
//! object.phase_step = 2*pi/3
//! reference.kind = plane
//! reference.f1 = 0.04
//! reference.f2 = 0.04
//! solver.max_iters = 2000
//! ftm.radius_factor = 0.5
//! ```
//!
//! Numeric values may be written as products and quotients of numbers and
//! `pi` (`2*pi/3`). Unknown or repeated keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::field::Grid;
use crate::ftm::{FtmConfig, Window};
use crate::mgd::SolverConfig;
use crate::simulate::{ObjectSpec, ReferenceKind, ReferenceSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    /// Used as the file name stem of every output.
    pub name: String,
    pub object: ObjectSpec,
    pub reference: ReferenceSpec,
    pub photons_per_pixel: f64,
    /// Seed of the shot-noise realization.
    pub seed: u64,
    pub solver: SolverConfig,
    pub ftm: Option<FtmConfig>,
    pub output_dir: PathBuf,
}

const KEYS: &[&str] = &[
    "name",
    "output_dir",
    "photons_per_pixel",
    "seed",
    "object.size",
    "object.width",
    "object.height",
    "object.inner",
    "object.inner_width",
    "object.inner_height",
    "object.phase_step",
    "object.amplitude",
    "reference.kind",
    "reference.f1",
    "reference.f2",
    "reference.p",
    "reference.cx",
    "reference.cy",
    "solver.t0",
    "solver.warmup_iters",
    "solver.decay",
    "solver.max_iters",
    "solver.eps_tv",
    "solver.seed",
    "solver.early_halt",
    "ftm.f1",
    "ftm.f2",
    "ftm.radius_factor",
    "ftm.window",
];

struct Entries {
    path: PathBuf,
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Config { path: self.path.clone(), line, msg: msg.into() }
    }

    fn raw(&self, key: &str) -> Option<&(usize, String)> {
        self.map.get(key)
    }

    fn string(&self, key: &str) -> Option<String> {
        self.raw(key).map(|(_, v)| v.clone())
    }

    fn required(&self, key: &str) -> Result<&(usize, String)> {
        self.raw(key).ok_or_else(|| self.err(0, format!("missing required key `{key}`")))
    }

    fn number(&self, key: &str) -> Result<Option<f64>> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => parse_number(v).map(Some).map_err(|m| self.err(*line, format!("{key}: {m}"))),
        }
    }

    fn number_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.number(key)?.unwrap_or(default))
    }

    fn integer(&self, key: &str) -> Result<Option<u64>> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => {
                v.parse::<u64>().map(Some).map_err(|_| self.err(*line, format!("{key}: `{v}` is not a non-negative integer")))
            }
        }
    }

    fn boolean(&self, key: &str) -> Result<Option<bool>> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => match v.as_str() {
                "true" | "yes" | "1" => Ok(Some(true)),
                "false" | "no" | "0" => Ok(Some(false)),
                _ => Err(self.err(*line, format!("{key}: `{v}` is not a boolean"))),
            },
        }
    }

    fn with_line<T>(&self, key: &str, r: Result<T>) -> Result<T> {
        let line = self.raw(key).map_or(0, |(l, _)| *l);
        r.map_err(|e| match e {
            Error::InvalidParameter { name, reason } => self.err(line, format!("{name}: {reason}")),
            other => self.err(line, other.to_string()),
        })
    }
}

/// Evaluates `a*b/c` style products of decimal numbers and `pi`.
pub fn parse_number(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    if s.is_empty() {
        return Err("empty value".into());
    }
    let mut value = 1.0;
    let mut op = '*';
    let mut rest = s;
    loop {
        let end = rest.find(['*', '/']).unwrap_or(rest.len());
        let token = rest[..end].trim();
        let factor = match token.to_ascii_lowercase().as_str() {
            "pi" => std::f64::consts::PI,
            t => t.parse::<f64>().map_err(|_| format!("`{s}` is not a number"))?,
        };
        value = if op == '*' { value * factor } else { value / factor };
        if end == rest.len() {
            break;
        }
        op = rest.as_bytes()[end] as char;
        rest = &rest[end + 1..];
    }
    if !value.is_finite() {
        return Err(format!("`{s}` is not finite"));
    }
    Ok(value)
}

impl ExperimentSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    /// Parses `text`; `origin` is only used in error messages.
    pub fn parse(text: &str, origin: impl AsRef<Path>) -> Result<Self> {
        let mut e = Entries { path: origin.as_ref().to_path_buf(), map: BTreeMap::new() };
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content.split_once('=').ok_or_else(|| e.err(line, "expected `key = value`"))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(e.err(line, format!("unknown key `{k}`")));
            }
            if let Some((first, _)) = e.map.get(k) {
                return Err(e.err(line, format!("duplicate key `{k}` (first set on line {first})")));
            }
            e.map.insert(k.to_string(), (line, v.to_string()));
        }

        let (name_line, name) = e.required("name")?.clone();
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
            return Err(e.err(name_line, format!("name `{name}` must use only [A-Za-z0-9._-]")));
        }
        let output_dir = PathBuf::from(e.string("output_dir").unwrap_or_else(|| "out".into()));
        let photons_per_pixel = {
            let (line, _) = e.required("photons_per_pixel")?;
            let n = e.number("photons_per_pixel")?.unwrap_or(0.0);
            if n <= 0.0 {
                return Err(e.err(*line, "photons_per_pixel must be positive"));
            }
            n
        };
        let seed = e.integer("seed")?.unwrap_or(0);

        let size = e.integer("object.size")?;
        let width = e.integer("object.width")?.or(size).ok_or_else(|| e.err(0, "missing `object.size`"))?;
        let height = e.integer("object.height")?.or(size).ok_or_else(|| e.err(0, "missing `object.size`"))?;
        let inner = e.integer("object.inner")?;
        let inner_width = e.integer("object.inner_width")?.or(inner).ok_or_else(|| e.err(0, "missing `object.inner`"))?;
        let inner_height = e.integer("object.inner_height")?.or(inner).ok_or_else(|| e.err(0, "missing `object.inner`"))?;
        let grid = e.with_line("object.size", Grid::new(width as usize, height as usize))?;
        let object = ObjectSpec {
            grid,
            inner_width: inner_width as usize,
            inner_height: inner_height as usize,
            phase_step: e.number("object.phase_step")?.ok_or_else(|| e.err(0, "missing `object.phase_step`"))?,
            amplitude: e.number_or("object.amplitude", 1.0)?,
        };
        e.with_line("object.phase_step", object.validate())?;

        let (kind_line, kind) = e.required("reference.kind")?;
        let kind: ReferenceKind = kind.parse().map_err(|err: Error| e.err(*kind_line, err.to_string()))?;
        let reference = match kind {
            ReferenceKind::Plane => ReferenceSpec::Plane {
                f1: e.number_or("reference.f1", 0.0)?,
                f2: e.number_or("reference.f2", 0.0)?,
            },
            ReferenceKind::Spherical => ReferenceSpec::Spherical {
                p: e.number("reference.p")?.ok_or_else(|| e.err(*kind_line, "spherical reference needs `reference.p`"))?,
                cx: e.number_or("reference.cx", 0.0)?,
                cy: e.number_or("reference.cy", 0.0)?,
            },
        };
        e.with_line("reference.kind", reference.validate())?;

        let defaults = SolverConfig::default();
        let solver = SolverConfig {
            t0: e.number_or("solver.t0", defaults.t0)?,
            warmup_iters: e.integer("solver.warmup_iters")?.map_or(defaults.warmup_iters, |v| v as usize),
            decay: e.number_or("solver.decay", defaults.decay)?,
            max_iters: e.integer("solver.max_iters")?.map_or(defaults.max_iters, |v| v as usize),
            eps_tv: e.number_or("solver.eps_tv", defaults.eps_tv)?,
            seed: e.integer("solver.seed")?.unwrap_or(defaults.seed),
            early_halt: e.boolean("solver.early_halt")?.unwrap_or(defaults.early_halt),
        };
        e.with_line("solver.t0", solver.validate())?;

        let has_ftm = e.map.keys().any(|k| k.starts_with("ftm."));
        let ftm = if has_ftm {
            let (rf1, rf2) = match reference {
                ReferenceSpec::Plane { f1, f2 } => (f1, f2),
                ReferenceSpec::Spherical { .. } => (0.0, 0.0),
            };
            let window = match e.raw("ftm.window") {
                None => Window::Hamming,
                Some((line, v)) => v.parse().map_err(|err: Error| e.err(*line, err.to_string()))?,
            };
            let cfg = FtmConfig {
                carrier: (e.number_or("ftm.f1", rf1)?, e.number_or("ftm.f2", rf2)?),
                radius_factor: e.number_or("ftm.radius_factor", 0.5)?,
                window,
            };
            e.with_line("ftm.radius_factor", cfg.validate())?;
            Some(cfg)
        } else {
            None
        };

        Ok(ExperimentSpec { name, object, reference, photons_per_pixel, seed, solver, ftm, output_dir })
    }

    /// FTM settings for this experiment: the explicit `ftm.*` section, or the
    /// defaults around the plane-wave carrier.
    pub fn ftm_config(&self) -> FtmConfig {
        self.ftm.unwrap_or_else(|| match self.reference {
            ReferenceSpec::Plane { f1, f2 } => FtmConfig::new(f1, f2),
            ReferenceSpec::Spherical { .. } => FtmConfig::new(0.0, 0.0),
        })
    }

    /// Renders the fully resolved spec; parsing the result gives back `self`.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let o = &self.object;
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(s, "output_dir = {}", self.output_dir.display());
        let _ = writeln!(s, "photons_per_pixel = {:?}", self.photons_per_pixel);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "object.width = {}", o.grid.width);
        let _ = writeln!(s, "object.height = {}", o.grid.height);
        let _ = writeln!(s, "object.inner_width = {}", o.inner_width);
        let _ = writeln!(s, "object.inner_height = {}", o.inner_height);
        let _ = writeln!(s, "object.phase_step = {:?}", o.phase_step);
        let _ = writeln!(s, "object.amplitude = {:?}", o.amplitude);
        let _ = writeln!(s, "reference.kind = {}", self.reference.kind());
        match self.reference {
            ReferenceSpec::Plane { f1, f2 } => {
                let _ = writeln!(s, "reference.f1 = {f1:?}\nreference.f2 = {f2:?}");
            }
            ReferenceSpec::Spherical { p, cx, cy } => {
                let _ = writeln!(s, "reference.p = {p:?}\nreference.cx = {cx:?}\nreference.cy = {cy:?}");
            }
        }
        let c = &self.solver;
        let _ = writeln!(s, "solver.t0 = {:?}", c.t0);
        let _ = writeln!(s, "solver.warmup_iters = {}", c.warmup_iters);
        let _ = writeln!(s, "solver.decay = {:?}", c.decay);
        let _ = writeln!(s, "solver.max_iters = {}", c.max_iters);
        let _ = writeln!(s, "solver.eps_tv = {:?}", c.eps_tv);
        let _ = writeln!(s, "solver.seed = {}", c.seed);
        let _ = writeln!(s, "solver.early_halt = {}", c.early_halt);
        if let Some(f) = &self.ftm {
            let _ = writeln!(s, "ftm.f1 = {:?}\nftm.f2 = {:?}", f.carrier.0, f.carrier.1);
            let _ = writeln!(s, "ftm.radius_factor = {:?}", f.radius_factor);
            let _ = writeln!(s, "ftm.window = {}", f.window);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const OFFAXIS: &str = "\
# off-axis step object
name = offaxis
photons_per_pixel = 1e4
seed = 3
object.size = 500
object.inner = 250
object.phase_step = 2*pi/3
reference.kind = plane
reference.f1 = 0.04
reference.f2 = 0.04
solver.max_iters = 2000
";

    #[test]
    fn numbers() {
        assert_eq!(parse_number("0.04").unwrap(), 0.04);
        assert_eq!(parse_number("1e4").unwrap(), 1e4);
        assert_eq!(parse_number("2*pi/3").unwrap(), 2.0 * PI / 3.0);
        assert_eq!(parse_number("PI / 2").unwrap(), PI / 2.0);
        assert_eq!(parse_number("-0.5*pi").unwrap(), -0.5 * PI);
        assert!(parse_number("").is_err());
        assert!(parse_number("two").is_err());
        assert!(parse_number("1/0").is_err());
    }

    #[test]
    fn parses_offaxis() {
        let spec = ExperimentSpec::parse(OFFAXIS, "offaxis.cfg").unwrap();
        assert_eq!(spec.name, "offaxis");
        assert_eq!(spec.object.grid, Grid::square(500).unwrap());
        assert_eq!(spec.object.inner_width, 250);
        assert_eq!(spec.object.phase_step, 2.0 * PI / 3.0);
        assert_eq!(spec.reference, ReferenceSpec::Plane { f1: 0.04, f2: 0.04 });
        assert_eq!(spec.solver.max_iters, 2000);
        assert_eq!(spec.solver.t0, 0.1);
        assert_eq!(spec.seed, 3);
        assert_eq!(spec.ftm, None);
        assert_eq!(spec.ftm_config(), FtmConfig::new(0.04, 0.04));
        assert_eq!(spec.output_dir, PathBuf::from("out"));
    }

    #[test]
    fn resolved_rendering_round_trips() {
        let text = format!("{OFFAXIS}ftm.window = none\n");
        let spec = ExperimentSpec::parse(&text, "x").unwrap();
        assert_eq!(spec.ftm.unwrap().window, Window::None);
        let again = ExperimentSpec::parse(&spec.to_kv(), "y").unwrap();
        assert_eq!(again, spec);
    }

    #[test]
    fn spherical() {
        let text = OFFAXIS
            .replace("reference.kind = plane", "reference.kind = spherical\nreference.p = 0.0004\nreference.cx = 51\nreference.cy = 51")
            .replace("reference.f1 = 0.04\n", "")
            .replace("reference.f2 = 0.04\n", "");
        let spec = ExperimentSpec::parse(&text, "s").unwrap();
        assert_eq!(spec.reference, ReferenceSpec::Spherical { p: 0.0004, cx: 51.0, cy: 51.0 });
        assert_eq!(spec.ftm_config().carrier, (0.0, 0.0));
    }

    fn err_of(text: &str) -> String {
        ExperimentSpec::parse(text, "bad.cfg").unwrap_err().to_string()
    }

    #[test]
    fn rejects_bad_input() {
        assert!(err_of(&format!("{OFFAXIS}solver.t00 = 1\n")).contains("unknown key"));
        assert!(err_of(&format!("{OFFAXIS}seed = 4\n")).contains("duplicate"));
        assert!(err_of(&OFFAXIS.replace("reference.kind = plane", "reference.kind = conical")).contains("conical"));
        assert!(err_of(&OFFAXIS.replace("name = offaxis", "name = a b")).contains("name"));
        assert!(err_of(&OFFAXIS.replace("object.inner = 250", "object.inner = 600")).contains("exceeds"));
        assert!(err_of(&OFFAXIS.replace("photons_per_pixel = 1e4", "photons_per_pixel = -1")).contains("positive"));
        assert!(err_of(&format!("{OFFAXIS}solver.decay = 1.5\n")).contains("decay"));
        assert!(err_of(&format!("{OFFAXIS}garbage\n")).contains("bad.cfg:12"));
        assert!(err_of(&OFFAXIS.replace("name = offaxis\n", "")).contains("name"));
    }
}
