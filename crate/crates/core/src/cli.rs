//! Experiment drivers behind the `fringefit` subcommands.
//!
//! Every artifact of an experiment lands in its `output_dir` with the
//! experiment name as file stem:
//!
//! | file                          | written by |
//! |-------------------------------|------------|
//! | `<name>_object.cfield`        | simulate   |
//! | `<name>_reference.cfield`     | simulate   |
//! | `<name>_hologram.rfield`      | simulate   |
//! | `<name>_hologram_noisy.rfield`| simulate   |
//! | `<name>_mgd.cfield`           | solve      |
//! | `<name>_mgd_trace.csv`        | solve      |
//! | `<name>_mgd_report.txt`       | solve      |
//! | `<name>_ftm.cfield`           | ftm        |
//! | `<name>_ftm_report.txt`       | ftm        |
//! | `results.csv`                 | solve, ftm |
//!
//! plus PGM previews of phases, amplitudes and holograms.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::ExperimentSpec;
use crate::error::{Error, Result};
use crate::field::{ComplexField, RealField};
use crate::ftm;
use crate::io;
use crate::metrics::{self, EvalReport, Line};
use crate::mgd::{self, RunOutput, TraceRecord};
use crate::simulate::{self, ObjectSpec};

pub const RESULTS_FILE: &str = "results.csv";

/// Command-line overrides applied on top of an experiment file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    /// Replaces both the noise seed and the solver seed.
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub iters: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, spec: &mut ExperimentSpec) {
        if let Some(seed) = self.seed {
            spec.seed = seed;
            spec.solver.seed = seed;
        }
        if let Some(out) = &self.out {
            spec.output_dir = out.clone();
        }
        if let Some(iters) = self.iters {
            spec.solver.max_iters = iters;
            if iters > 0 && spec.solver.warmup_iters >= iters {
                let warmup = iters - 1;
                log::warn!("warmup of {} iterations shortened to {warmup} to fit --iters {iters}", spec.solver.warmup_iters);
                spec.solver.warmup_iters = warmup;
            }
        }
    }
}

fn artifact(spec: &ExperimentSpec, suffix: &str) -> PathBuf {
    spec.output_dir.join(format!("{}_{suffix}", spec.name))
}

/// Ground truth, reference and recorded data of one experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct Simulation {
    pub object: ComplexField,
    pub reference: ComplexField,
    pub hologram: RealField,
    pub noisy: RealField,
}

pub fn simulate_fields(spec: &ExperimentSpec) -> Result<Simulation> {
    let object = simulate::make_step_phase_object(&spec.object)?;
    let reference = simulate::make_reference(&spec.reference, spec.object.grid)?;
    let hologram = simulate::form_hologram(&object, &reference)?;
    let noisy = simulate::apply_poisson_noise(&hologram, spec.photons_per_pixel, spec.seed)?;
    Ok(Simulation { object, reference, hologram, noisy })
}

/// The part of the resolved spec that determines the simulated data.
fn simulation_fingerprint(spec: &ExperimentSpec) -> String {
    spec.to_kv()
        .lines()
        .filter(|l| {
            l.starts_with("object.") || l.starts_with("reference.") || l.starts_with("photons_per_pixel") || l.starts_with("seed")
        })
        .map(|l| format!("{l}\n"))
        .collect()
}

fn ensure_output_dir(spec: &ExperimentSpec) -> Result<()> {
    fs::create_dir_all(&spec.output_dir)?;
    Ok(())
}

/// Simulates the experiment and writes fields and previews.
pub fn cmd_simulate(spec: &ExperimentSpec) -> Result<Simulation> {
    ensure_output_dir(spec)?;
    let sim = simulate_fields(spec)?;
    io::save_complex(artifact(spec, "object.cfield"), &sim.object)?;
    io::save_complex(artifact(spec, "reference.cfield"), &sim.reference)?;
    io::save_real(artifact(spec, "hologram.rfield"), &sim.hologram)?;
    io::save_real(artifact(spec, "hologram_noisy.rfield"), &sim.noisy)?;
    io::save_phase_pgm(artifact(spec, "object_phase.pgm"), &sim.object.phase())?;
    io::save_intensity_pgm(artifact(spec, "hologram.pgm"), &sim.hologram)?;
    io::save_intensity_pgm(artifact(spec, "hologram_noisy.pgm"), &sim.noisy)?;
    fs::write(artifact(spec, "simulation.txt"), simulation_fingerprint(spec))?;
    log::info!("simulated {} into {}", spec.name, spec.output_dir.display());
    Ok(sim)
}

/// Reuses previously written simulation files when they match `spec`,
/// otherwise simulates afresh.
pub fn load_or_simulate(spec: &ExperimentSpec) -> Result<Simulation> {
    let fingerprint = fs::read_to_string(artifact(spec, "simulation.txt")).ok();
    if fingerprint.as_deref() == Some(simulation_fingerprint(spec).as_str()) {
        let loaded = (|| -> Result<Simulation> {
            Ok(Simulation {
                object: io::load_complex(artifact(spec, "object.cfield"))?,
                reference: io::load_complex(artifact(spec, "reference.cfield"))?,
                hologram: io::load_real(artifact(spec, "hologram.rfield"))?,
                noisy: io::load_real(artifact(spec, "hologram_noisy.rfield"))?,
            })
        })();
        match loaded {
            Ok(sim) => {
                log::info!("reusing simulation files for {}", spec.name);
                return Ok(sim);
            }
            Err(e) => log::warn!("stale simulation files for {}: {e}; regenerating", spec.name),
        }
    }
    cmd_simulate(spec)
}

/// 10–90 % width of the object's left phase edge along its central row.
pub fn edge_width(field: &ComplexField, object: &ObjectSpec) -> Option<f64> {
    const HALF_WINDOW: usize = 30;
    const PLATEAU: usize = 5;
    let (x0, _) = object.inner_cols();
    let (y0, y1) = object.inner_rows();
    let profile = metrics::edge_profile(&field.phase(), Line::Row((y0 + y1) / 2)).ok()?;
    let lo = x0.saturating_sub(HALF_WINDOW);
    let hi = (x0 + HALF_WINDOW).min(profile.len());
    metrics::edge_width_10_90(&profile[lo..hi], PLATEAU)
}

fn append_result(spec: &ExperimentSpec, report: &EvalReport) -> Result<()> {
    let path = spec.output_dir.join(RESULTS_FILE);
    let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
    let mut text = String::new();
    if file.metadata()?.len() == 0 {
        text.push_str(EvalReport::CSV_HEADER);
        text.push('\n');
    }
    text.push_str(&report.to_csv_row());
    text.push('\n');
    // One write per row keeps concurrent appends line-atomic.
    file.write_all(text.as_bytes())?;
    Ok(())
}

fn write_trace(path: &Path, trace: &[TraceRecord]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{}", TraceRecord::CSV_HEADER)?;
    for r in trace {
        writeln!(w, "{}", r.to_csv_row())?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct SolveSummary {
    pub report: EvalReport,
    pub run: RunOutput,
}

/// Runs the solver on the experiment's noisy hologram and writes the result.
pub fn cmd_solve(spec: &ExperimentSpec) -> Result<SolveSummary> {
    ensure_output_dir(spec)?;
    let sim = load_or_simulate(spec)?;
    let run = mgd::run_with(&sim.noisy, &sim.reference, &spec.solver, |state, rec| {
        if rec.iter % 100 == 0 {
            log::debug!(
                "iter {:5}  c_err {:.4e}  c_tv {:.4e}  theta {:6.2}  t {:.3e}  |O| {:.4e}",
                rec.iter,
                rec.c_err,
                rec.c_tv,
                rec.theta_deg,
                rec.t,
                crate::field::l2_norm(&state.o)
            );
        }
    })?;
    if !run.o.is_finite() {
        return Err(Error::Numerical("solution contains non-finite samples".into()));
    }

    io::save_complex(artifact(spec, "mgd.cfield"), &run.o)?;
    write_trace(&artifact(spec, "mgd_trace.csv"), &run.trace)?;
    io::save_phase_pgm(artifact(spec, "mgd_phase.pgm"), &run.o.phase())?;
    io::save_intensity_pgm(artifact(spec, "mgd_amplitude.pgm"), &run.o.amplitude())?;

    let mut notes = Vec::new();
    if let Some(halt) = run.halt {
        notes.push(format!("stopped early: {halt}"));
    }
    let report = EvalReport {
        experiment: spec.name.clone(),
        method: "mgd".into(),
        rms_phase_error: metrics::rms_phase_error(&run.o, &sim.object)?,
        shot_noise_level: metrics::shot_noise_level(spec.photons_per_pixel),
        n_photons: spec.photons_per_pixel,
        edge_width_10_90: edge_width(&run.o, &spec.object),
        iterations: run.trace.len(),
        notes,
    };
    fs::write(artifact(spec, "mgd_report.txt"), report.to_kv())?;
    append_result(spec, &report)?;
    Ok(SolveSummary { report, run })
}

#[derive(Clone, Debug)]
pub struct FtmSummary {
    pub report: EvalReport,
    pub object: ComplexField,
    /// Edge-width comparison against an existing solver report, if any.
    pub comparison: Option<String>,
}

/// Reads `edge_width_10_90` from a `key = value` report.
fn read_edge_width(path: &Path) -> Option<f64> {
    let text = fs::read_to_string(path).ok()?;
    text.lines().find_map(|l| {
        let (k, v) = l.split_once('=')?;
        (k.trim() == "edge_width_10_90").then(|| v.trim().parse::<f64>().ok()).flatten()
    })
}

/// Fourier-transform-method baseline on the experiment's noisy hologram.
pub fn cmd_ftm(spec: &ExperimentSpec) -> Result<FtmSummary> {
    const BORDER: usize = 10;
    ensure_output_dir(spec)?;
    let sim = load_or_simulate(spec)?;
    let cfg = spec.ftm_config();
    let out = ftm::ftm_reconstruct(&sim.noisy, &cfg)?;

    io::save_complex(artifact(spec, "ftm.cfield"), &out.object)?;
    io::save_phase_pgm(artifact(spec, "ftm_phase.pgm"), &out.object.phase())?;

    let grid = sim.object.grid();
    let interior = metrics::Region::eroded(grid.width, grid.height, BORDER);
    let mut notes = vec![format!(
        "rms inside {BORDER}-pixel eroded interior = {}",
        metrics::rms_phase_error_in(&out.object, &sim.object, interior)?
    )];
    if out.overlap_warning {
        notes.push("dc and cross terms overlap in Fourier space; no effective filter exists".into());
    }
    let width = edge_width(&out.object, &spec.object);
    let comparison = read_edge_width(&artifact(spec, "mgd_report.txt")).map(|mgd_width| {
        format!(
            "edge width 10-90%: mgd {mgd_width:.2} px, ftm {} px",
            width.map_or_else(|| "n/a".to_string(), |w| format!("{w:.2}"))
        )
    });
    if let Some(c) = &comparison {
        notes.push(c.clone());
    }
    let report = EvalReport {
        experiment: format!("{}-ftm", spec.name),
        method: "ftm".into(),
        rms_phase_error: metrics::rms_phase_error(&out.object, &sim.object)?,
        shot_noise_level: metrics::shot_noise_level(spec.photons_per_pixel),
        n_photons: spec.photons_per_pixel,
        edge_width_10_90: width,
        iterations: 0,
        notes,
    };
    fs::write(artifact(spec, "ftm_report.txt"), report.to_kv())?;
    append_result(spec, &report)?;
    Ok(FtmSummary { report, object: out.object, comparison })
}

#[derive(Clone, Debug, PartialEq)]
struct ResultRow {
    experiment: String,
    n_photons: f64,
    rms: f64,
    shot_noise: f64,
}

/// Renders a results CSV as a table with one column per experiment, in the
/// layout of a light-level / RMS error / shot-noise comparison. When an
/// experiment appears more than once its latest row is used.
pub fn cmd_report(results: &Path) -> Result<String> {
    let text = fs::read_to_string(results)?;
    let bad = |line: usize, msg: String| Error::Config { path: results.to_path_buf(), line, msg };

    let mut rows: Vec<ResultRow> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut notes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line == EvalReport::CSV_HEADER {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(bad(i + 1, format!("expected 6 columns, found {}", cols.len())));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(i + 1, format!("`{s}` is not a number")));
        let row = ResultRow {
            experiment: cols[0].to_string(),
            n_photons: num(cols[1])?,
            rms: num(cols[2])?,
            shot_noise: num(cols[3])?,
        };
        match index.get(&row.experiment) {
            Some(&k) => {
                notes.push(format!("duplicate experiment `{}`: using the latest row (line {})", row.experiment, i + 1));
                rows[k] = row;
            }
            None => {
                index.insert(row.experiment.clone(), rows.len());
                rows.push(row);
            }
        }
    }
    if rows.is_empty() {
        return Err(bad(0, "no result rows".into()));
    }

    let labels = ["", "Light level (N photons/pixel)", "RMS error (rad)", "Shot noise level 1/sqrt(N) (rad)"];
    let mut columns: Vec<[String; 4]> = vec![labels.map(String::from)];
    for r in &rows {
        columns.push([
            r.experiment.clone(),
            format_light_level(r.n_photons),
            format!("{:.4}", r.rms),
            format!("{:.4}", r.shot_noise),
        ]);
    }
    let widths: Vec<usize> = columns.iter().map(|c| c.iter().map(|s| s.chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for line in 0..4 {
        let cells: Vec<String> = columns
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(k, (col, &w))| if k == 0 { format!("{:<w$}", col[line]) } else { format!("{:>w$}", col[line]) })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    for note in notes {
        out.push_str("note: ");
        out.push_str(&note);
        out.push('\n');
    }
    Ok(out)
}

/// `1000` → `1e3`; other values verbatim.
fn format_light_level(n: f64) -> String {
    let exp = n.log10().round();
    if n > 0.0 && (10f64.powf(exp) - n).abs() < 1e-9 * n {
        format!("1e{exp}")
    } else {
        format!("{n}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn light_levels() {
        assert_eq!(format_light_level(1000.0), "1e3");
        assert_eq!(format_light_level(1e5), "1e5");
        assert_eq!(format_light_level(2500.0), "2500");
    }

    #[test]
    fn report_table_and_dedup() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv");
        fs::write(
            &path,
            format!(
                "{}\na,1000,0.02,0.0316,0.9,2000\nb,10000,0.0042,0.01,0.8,2000\na,1000,0.0125,0.0316,0.9,2000\n",
                EvalReport::CSV_HEADER
            ),
        )
        .unwrap();
        let table = cmd_report(&path).unwrap();
        let lines: Vec<&str> = table.lines().collect();
        assert!(lines[0].ends_with("a       b") || lines[0].split_whitespace().collect::<Vec<_>>() == ["a", "b"]);
        assert_eq!(lines[1].split_whitespace().rev().take(2).collect::<Vec<_>>(), ["1e4", "1e3"]);
        assert!(lines[2].contains("0.0125") && !lines[2].contains("0.0200"));
        assert!(lines[3].contains("0.0316") && lines[3].contains("0.0100"));
        assert!(lines[4].starts_with("note: duplicate experiment `a`"));
    }

    #[test]
    fn report_rejects_empty_and_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.csv");
        fs::write(&empty, format!("{}\n", EvalReport::CSV_HEADER)).unwrap();
        assert!(cmd_report(&empty).is_err());
        let bad = dir.path().join("bad.csv");
        fs::write(&bad, "a,1,2\n").unwrap();
        assert!(cmd_report(&bad).is_err());
        assert!(cmd_report(&dir.path().join("missing.csv")).is_err());
    }

    #[test]
    fn edge_width_of_truth_is_subpixel() {
        let spec = ObjectSpec::square_step(64, 32, 2.0 * std::f64::consts::PI / 3.0).unwrap();
        let o = simulate::make_step_phase_object(&spec).unwrap();
        let w = edge_width(&o, &spec).unwrap();
        assert!((w - 0.8).abs() < 1e-12);
    }

    #[test]
    fn iters_override_shortens_warmup() {
        let text = "name = t\nphotons_per_pixel = 100\nobject.size = 16\nobject.inner = 8\nobject.phase_step = 1\nreference.kind = plane\n";
        let mut spec = ExperimentSpec::parse(text, "t").unwrap();
        Overrides { iters: Some(50), seed: Some(9), out: Some("x".into()) }.apply(&mut spec);
        assert_eq!(spec.solver.max_iters, 50);
        assert_eq!(spec.solver.warmup_iters, 49);
        assert_eq!((spec.seed, spec.solver.seed), (9, 9));
        assert!(spec.solver.validate().is_ok());
        Overrides { iters: Some(0), ..Default::default() }.apply(&mut spec);
        assert!(spec.solver.validate().is_ok());
    }
}
