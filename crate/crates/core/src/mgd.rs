//! Mean gradient descent.
//!
//! Each iteration normalizes the Wirtinger gradients of the data-error cost
//! `C_err = ‖H − |O + R|²‖²` and of the total variation `C_TV`, and moves the
//! iterate against their mean:
//!
//! ```text
//! O ← O − t·‖O‖₂·(û₁ + û₂)/2
//! ```
//!
//! Because both directions have unit length, the error and TV halves of the
//! update always displace the solution by the same distance `t·‖O‖₂/2`; no
//! weight between the two terms is ever chosen. The step `t` is held for a
//! warmup period and afterwards shrinks by a constant factor whenever `C_err`
//! goes up. Iteration stalls where the two descent directions oppose each
//! other, which is tracked through the angle between them.

use std::f64::consts::TAU;
use std::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{self, row_sum, ComplexField, Grid, RealField};

/// ChaCha stream reserved for the random starting guess.
pub(crate) const INIT_STREAM: u64 = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Initial step as a fraction of the current solution norm.
    pub t0: f64,
    /// Iterations during which `t` is held at `t0`.
    pub warmup_iters: usize,
    /// Factor applied to `t` after a post-warmup increase of `C_err`.
    pub decay: f64,
    pub max_iters: usize,
    /// Smoothing of the `|∇O|` denominators in the TV gradient.
    pub eps_tv: f64,
    /// Seed of the random starting guess.
    pub seed: u64,
    /// Stop once `t` falls below `t0 · 1e-6`.
    pub early_halt: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            t0: 0.1,
            warmup_iters: 200,
            decay: 0.99,
            max_iters: 2000,
            eps_tv: 1e-8,
            seed: 0,
            early_halt: true,
        }
    }
}

/// Ratio `t / t0` below which an early halt is triggered.
pub const MIN_STEP_RATIO: f64 = 1e-6;

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t0 > 0.0 && self.t0 <= 1.0) {
            return Err(Error::param("solver.t0", format!("{} not in (0, 1]", self.t0)));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::param("solver.decay", format!("{} not in (0, 1)", self.decay)));
        }
        // A zero budget is allowed and simply returns the starting guess.
        if self.max_iters > 0 && self.warmup_iters >= self.max_iters {
            return Err(Error::param(
                "solver.warmup_iters",
                format!("{} must be below max_iters {}", self.warmup_iters, self.max_iters),
            ));
        }
        if !(self.eps_tv > 0.0 && self.eps_tv.is_finite()) {
            return Err(Error::param("solver.eps_tv", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SolverState {
    pub o: ComplexField,
    /// Step size for the next update.
    pub t: f64,
    /// Number of updates applied so far.
    pub iter: usize,
    /// `C_err` of `o`.
    pub prev_cerr: f64,
}

impl SolverState {
    pub fn new(o: ComplexField, hologram: &RealField, reference: &ComplexField, cfg: &SolverConfig) -> Result<Self> {
        let prev_cerr = cost_err(&o, reference, hologram)?;
        Ok(SolverState { o, t: cfg.t0, iter: 0, prev_cerr })
    }
}

/// Diagnostics for one iteration, evaluated at the iterate before the update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub c_err: f64,
    pub c_tv: f64,
    /// Angle between the normalized error and TV gradients, degrees.
    pub theta_deg: f64,
    /// Step size used for this update.
    pub t: f64,
}

impl TraceRecord {
    pub const CSV_HEADER: &'static str = "iter,c_err,c_tv,theta_deg,t";

    pub fn to_csv_row(&self) -> String {
        format!("{},{:e},{:e},{},{:e}", self.iter, self.c_err, self.c_tv, self.theta_deg, self.t)
    }
}

/// Cost term whose gradient vanished.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Term {
    Error,
    TotalVariation,
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Term::Error => "data error",
            Term::TotalVariation => "total variation",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepOutcome {
    Advanced(TraceRecord),
    /// One of the gradients is identically zero; the iterate was left untouched.
    Stationary { term: Term, c_err: f64, c_tv: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Halt {
    Stationary(Term),
    StepUnderflow,
}

impl fmt::Display for Halt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Halt::Stationary(term) => write!(f, "{term} gradient vanished"),
            Halt::StepUnderflow => write!(f, "step size fell below t0 * {MIN_STEP_RATIO:e}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub o: ComplexField,
    pub trace: Vec<TraceRecord>,
    /// Why the loop stopped before `max_iters`, if it did.
    pub halt: Option<Halt>,
    /// Final step size.
    pub t: f64,
}

/// `Σ (H − |O + R|²)²`.
pub fn cost_err(o: &ComplexField, reference: &ComplexField, hologram: &RealField) -> Result<f64> {
    check_shapes(o, reference, hologram)?;
    let w = o.width();
    Ok(row_sum(o.height(), |y| {
        let range = y * w..(y + 1) * w;
        o.data()[range.clone()]
            .iter()
            .zip(&reference.data()[range.clone()])
            .zip(&hologram.data()[range])
            .map(|((o, r), h)| {
                let m = h - (o + r).norm_sqr();
                m * m
            })
            .sum()
    }))
}

/// Anisotropic total variation `Σ |∇ₓO| + |∇ᵧO|`.
pub fn cost_tv(o: &ComplexField) -> f64 {
    let w = o.width();
    let h = o.height();
    let data = o.data();
    row_sum(h, |y| {
        let row = &data[y * w..(y + 1) * w];
        let mut acc: f64 = row.windows(2).map(|p| (p[1] - p[0]).norm()).sum();
        if y + 1 < h {
            let next = &data[(y + 1) * w..(y + 2) * w];
            acc += row.iter().zip(next).map(|(a, b)| (b - a).norm()).sum::<f64>();
        }
        acc
    })
}

/// Smoothed total variation `Σ sqrt(|∇ₓO|² + ε²) + sqrt(|∇ᵧO|² + ε²)`,
/// the functional whose gradient [`grad_tv`] returns.
pub fn cost_tv_smoothed(o: &ComplexField, eps_tv: f64) -> f64 {
    let dx = field::forward_diff_x(o);
    let dy = field::forward_diff_y(o);
    let eps2 = eps_tv * eps_tv;
    dx.data()
        .iter()
        .zip(dy.data())
        .map(|(a, b)| (a.norm_sqr() + eps2).sqrt() + (b.norm_sqr() + eps2).sqrt())
        .sum()
}

/// Wirtinger gradient `∂C_err/∂O* = −2(H − |O + R|²)(O + R)`.
pub fn grad_err(o: &ComplexField, reference: &ComplexField, hologram: &RealField) -> Result<ComplexField> {
    Ok(err_terms(o, reference, hologram)?.0)
}

/// Gradient and cost of the data term in one pass.
fn err_terms(o: &ComplexField, reference: &ComplexField, hologram: &RealField) -> Result<(ComplexField, f64)> {
    check_shapes(o, reference, hologram)?;
    let grid = o.grid();
    let w = grid.width;
    let mut grad = vec![Complex64::default(); grid.len()];
    let partial: Vec<f64> = grad
        .par_chunks_mut(w)
        .enumerate()
        .map(|(y, g)| {
            let range = y * w..(y + 1) * w;
            let (o, r, h) = (&o.data()[range.clone()], &reference.data()[range.clone()], &hologram.data()[range]);
            let mut acc = 0.0;
            for x in 0..w {
                let s = o[x] + r[x];
                let m = h[x] - s.norm_sqr();
                g[x] = s * (-2.0 * m);
                acc += m * m;
            }
            acc
        })
        .collect();
    Ok((ComplexField::from_raw(grid, grad), partial.iter().sum()))
}

/// Wirtinger gradient of the smoothed total variation,
/// `−½ ∇·[∇ₓO/|∇ₓO|_ε x̂ + ∇ᵧO/|∇ᵧO|_ε ŷ]` with `|a|_ε = sqrt(|a|² + ε²)`.
///
/// As for [`grad_err`], `2 Re⟨g, δ⟩` is the first-order change of the
/// functional under a perturbation `δ`.
pub fn grad_tv(o: &ComplexField, eps_tv: f64) -> ComplexField {
    tv_terms(o, eps_tv).0
}

/// TV gradient together with the (unsmoothed) TV cost.
fn tv_terms(o: &ComplexField, eps_tv: f64) -> (ComplexField, f64) {
    let grid = o.grid();
    let (w, h) = (grid.width, grid.height);
    let eps2 = eps_tv * eps_tv;
    let data = o.data();
    let mut px = vec![Complex64::default(); grid.len()];
    let mut py = vec![Complex64::default(); grid.len()];
    let partial: Vec<f64> = px
        .par_chunks_mut(w)
        .zip(py.par_chunks_mut(w))
        .enumerate()
        .map(|(y, (qx, qy))| {
            let row = &data[y * w..(y + 1) * w];
            let mut tv = 0.0;
            for x in 0..w - 1 {
                let d = row[x + 1] - row[x];
                let n2 = d.norm_sqr();
                tv += n2.sqrt();
                qx[x] = d * (-0.5 / (n2 + eps2).sqrt());
            }
            if y + 1 < h {
                let next = &data[(y + 1) * w..(y + 2) * w];
                for x in 0..w {
                    let d = next[x] - row[x];
                    let n2 = d.norm_sqr();
                    tv += n2.sqrt();
                    qy[x] = d * (-0.5 / (n2 + eps2).sqrt());
                }
            }
            tv
        })
        .collect();
    let px = ComplexField::from_raw(grid, px);
    let py = ComplexField::from_raw(grid, py);
    let mut grad = vec![Complex64::default(); grid.len()];
    grad.par_chunks_mut(w)
        .enumerate()
        .for_each(|(y, g)| field::divergence_row(&px, &py, y, g));
    (ComplexField::from_raw(grid, grad), partial.iter().sum())
}

/// `g / ‖g‖₂`; a zero field has no direction.
pub fn unit_direction(g: &ComplexField) -> Result<ComplexField> {
    let n = field::l2_norm(g);
    if n == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let unit = g.scale(1.0 / n);
    let renorm = field::l2_norm(&unit);
    // Only reachable for subnormal inputs, where 1/n loses precision.
    if (renorm - 1.0).abs() > 1e-13 {
        return Ok(unit.scale(1.0 / renorm));
    }
    Ok(unit)
}

/// Bisector `(û₁ + û₂)/2`.
pub fn mean_direction(u1: &ComplexField, u2: &ComplexField) -> Result<ComplexField> {
    u1.zip_map(u2, |a, b| (a + b) * 0.5)
}

/// Angle in degrees between two complex fields viewed as real vectors of
/// concatenated real and imaginary parts.
pub fn angle_between(u1: &ComplexField, u2: &ComplexField) -> Result<f64> {
    let dot = u1.re_inner(u2)?;
    let n1 = field::l2_norm(u1);
    let n2 = field::l2_norm(u2);
    if n1 == 0.0 || n2 == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(angle_from_cos(dot / n1 / n2))
}

fn angle_from_cos(c: f64) -> f64 {
    c.clamp(-1.0, 1.0).acos().to_degrees().clamp(0.0, 180.0)
}

/// Random starting guess: amplitude uniform in `[0, 1)`, phase uniform in
/// `[0, 2π)`, independent per pixel.
pub fn random_init(grid: Grid, seed: u64) -> ComplexField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INIT_STREAM);
    let data = (0..grid.len())
        .map(|_| {
            let amp: f64 = rng.random();
            let phase: f64 = rng.random::<f64>() * TAU;
            Complex64::from_polar(amp, phase)
        })
        .collect();
    ComplexField::from_raw(grid, data)
}

/// One mean-gradient update of `state`.
///
/// Diagnostics are taken at the iterate before the update. After the warmup
/// period, `t` is multiplied by `cfg.decay` when the update increased `C_err`.
pub fn step(
    state: &mut SolverState,
    hologram: &RealField,
    reference: &ComplexField,
    cfg: &SolverConfig,
) -> Result<StepOutcome> {
    let (g_err, c_err) = err_terms(&state.o, reference, hologram)?;
    let (g_tv, c_tv) = tv_terms(&state.o, cfg.eps_tv);

    let n_err = field::l2_norm(&g_err);
    let n_tv = field::l2_norm(&g_tv);
    if n_err == 0.0 || n_tv == 0.0 {
        let term = if n_err == 0.0 { Term::Error } else { Term::TotalVariation };
        return Ok(StepOutcome::Stationary { term, c_err, c_tv });
    }
    let theta_deg = angle_from_cos(g_err.re_inner(&g_tv)? / n_err / n_tv);

    let t = state.t;
    let reach = t * field::l2_norm(&state.o);
    let (a, b) = (0.5 * reach / n_err, 0.5 * reach / n_tv);

    let grid = state.o.grid();
    let w = grid.width;
    let partial: Vec<f64> = state
        .o
        .data_mut()
        .par_chunks_mut(w)
        .enumerate()
        .map(|(y, row)| {
            let range = y * w..(y + 1) * w;
            let (ge, gt) = (&g_err.data()[range.clone()], &g_tv.data()[range.clone()]);
            let (r, h) = (&reference.data()[range.clone()], &hologram.data()[range]);
            let mut acc = 0.0;
            for x in 0..w {
                row[x] -= ge[x] * a + gt[x] * b;
                let m = h[x] - (row[x] + r[x]).norm_sqr();
                acc += m * m;
            }
            acc
        })
        .collect();
    let new_cerr: f64 = partial.iter().sum();
    if !new_cerr.is_finite() {
        return Err(Error::Numerical(format!("C_err became {new_cerr} at iteration {}", state.iter)));
    }

    if state.iter >= cfg.warmup_iters && new_cerr > state.prev_cerr {
        state.t *= cfg.decay;
    }
    state.prev_cerr = new_cerr;
    let record = TraceRecord { iter: state.iter, c_err, c_tv, theta_deg, t };
    state.iter += 1;
    Ok(StepOutcome::Advanced(record))
}

/// Solves from a seeded random start for `cfg.max_iters` iterations.
pub fn run(hologram: &RealField, reference: &ComplexField, cfg: &SolverConfig) -> Result<RunOutput> {
    run_with(hologram, reference, cfg, |_, _| {})
}

/// Like [`run`], calling `observe` after every update.
pub fn run_with<F>(hologram: &RealField, reference: &ComplexField, cfg: &SolverConfig, observe: F) -> Result<RunOutput>
where
    F: FnMut(&SolverState, &TraceRecord),
{
    cfg.validate()?;
    hologram.grid().ensure_same(&reference.grid())?;
    let init = random_init(hologram.grid(), cfg.seed);
    let state = SolverState::new(init, hologram, reference, cfg)?;
    run_from(state, hologram, reference, cfg, observe)
}

/// Continues from an existing state until `cfg.max_iters` updates have been applied.
pub fn run_from<F>(
    mut state: SolverState,
    hologram: &RealField,
    reference: &ComplexField,
    cfg: &SolverConfig,
    mut observe: F,
) -> Result<RunOutput>
where
    F: FnMut(&SolverState, &TraceRecord),
{
    let mut trace = Vec::with_capacity(cfg.max_iters.saturating_sub(state.iter));
    let mut halt = None;
    while state.iter < cfg.max_iters {
        if cfg.early_halt && state.t < cfg.t0 * MIN_STEP_RATIO {
            halt = Some(Halt::StepUnderflow);
            break;
        }
        match step(&mut state, hologram, reference, cfg)? {
            StepOutcome::Advanced(record) => {
                observe(&state, &record);
                trace.push(record);
            }
            StepOutcome::Stationary { term, .. } => {
                log::info!("iteration {}: {term} gradient vanished, stopping", state.iter);
                halt = Some(Halt::Stationary(term));
                break;
            }
        }
    }
    Ok(RunOutput { o: state.o, trace, halt, t: state.t })
}

fn check_shapes(o: &ComplexField, reference: &ComplexField, hologram: &RealField) -> Result<()> {
    o.grid().ensure_same(&reference.grid())?;
    o.grid().ensure_same(&hologram.grid())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{self, ObjectSpec, ReferenceSpec};
    use rand::Rng;
    use std::f64::consts::PI;

    fn random_field(grid: Grid, seed: u64) -> ComplexField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..grid.len())
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        ComplexField::new(grid, data).unwrap()
    }

    fn random_real(grid: Grid, seed: u64) -> RealField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RealField::new(grid, (0..grid.len()).map(|_| rng.random_range(0.0..4.0)).collect()).unwrap()
    }

    fn with_sample(o: &ComplexField, k: usize, delta: Complex64) -> ComplexField {
        let mut p = o.clone();
        p.data_mut()[k] += delta;
        p
    }

    /// Central-difference estimate of `(∂C/∂Re, ∂C/∂Im)` at sample `k`, halved
    /// to match a Wirtinger gradient.
    fn numeric_wirtinger(cost: impl Fn(&ComplexField) -> f64, o: &ComplexField, k: usize, h: f64) -> Complex64 {
        let re = (cost(&with_sample(o, k, Complex64::new(h, 0.0))) - cost(&with_sample(o, k, Complex64::new(-h, 0.0)))) / (2.0 * h);
        let im = (cost(&with_sample(o, k, Complex64::new(0.0, h))) - cost(&with_sample(o, k, Complex64::new(0.0, -h)))) / (2.0 * h);
        Complex64::new(re, im) * 0.5
    }

    #[test]
    fn cost_err_matches_loop() {
        let g = Grid::new(5, 4).unwrap();
        let (o, r, h) = (random_field(g, 1), random_field(g, 2), random_real(g, 3));
        let mut expected = 0.0;
        for y in 0..4 {
            for x in 0..5 {
                let s = o[(x, y)] + r[(x, y)];
                let m = h[(x, y)] - (s.re * s.re + s.im * s.im);
                expected += m * m;
            }
        }
        assert!((cost_err(&o, &r, &h).unwrap() - expected).abs() < 1e-12 * expected);
        let exact = simulate::form_hologram(&o, &r).unwrap();
        assert!(cost_err(&o, &r, &exact).unwrap() < 1e-25);
        assert!(cost_err(&o, &r, &RealField::zeros(Grid::square(5).unwrap())).is_err());
    }

    #[test]
    fn cost_tv_matches_loop() {
        let g = Grid::new(6, 3).unwrap();
        let o = random_field(g, 4);
        let mut expected = 0.0;
        for y in 0..3 {
            for x in 0..6 {
                if x + 1 < 6 {
                    expected += (o[(x + 1, y)] - o[(x, y)]).norm();
                }
                if y + 1 < 3 {
                    expected += (o[(x, y + 1)] - o[(x, y)]).norm();
                }
            }
        }
        assert!((cost_tv(&o) - expected).abs() < 1e-12 * expected);
        assert_eq!(cost_tv(&ComplexField::filled(g, Complex64::new(0.3, -2.0))), 0.0);
        assert!((cost_tv_smoothed(&o, 1e-9) - expected).abs() < 1e-7);
    }

    #[test]
    fn tv_of_step_object_is_perimeter_times_jump() {
        let spec = ObjectSpec::square_step(500, 250, 2.0 * PI / 3.0).unwrap();
        let o = simulate::make_step_phase_object(&spec).unwrap();
        let expected = 1000.0 * 3f64.sqrt();
        assert!((cost_tv(&o) - expected).abs() < 1e-9 * expected);
        assert!((tv_terms(&o, 1e-8).1 - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn grad_err_matches_finite_differences() {
        let g = Grid::new(6, 5).unwrap();
        let (o, r, h) = (random_field(g, 5), random_field(g, 6), random_real(g, 7));
        let grad = grad_err(&o, &r, &h).unwrap();
        let cost = |p: &ComplexField| cost_err(p, &r, &h).unwrap();
        for k in [0, 7, 13, 29] {
            let num = numeric_wirtinger(cost, &o, k, 1e-5);
            assert!((num - grad.data()[k]).norm() < 1e-6 * grad.data()[k].norm().max(1.0), "sample {k}");
        }
    }

    #[test]
    fn grad_tv_matches_finite_differences() {
        let g = Grid::new(5, 6).unwrap();
        let o = random_field(g, 8);
        let eps = 1e-3;
        let grad = grad_tv(&o, eps);
        let cost = |p: &ComplexField| cost_tv_smoothed(p, eps);
        for k in 0..g.len() {
            let num = numeric_wirtinger(cost, &o, k, 1e-6);
            assert!((num - grad.data()[k]).norm() < 1e-6 * grad.data()[k].norm().max(1.0), "sample {k}");
        }
    }

    #[test]
    fn grad_tv_of_constant_is_zero() {
        let g = Grid::square(4).unwrap();
        let grad = grad_tv(&ComplexField::filled(g, Complex64::new(1.0, 1.0)), 1e-8);
        assert_eq!(field::l2_norm(&grad), 0.0);
    }

    #[test]
    fn directions_and_angles() {
        let g = Grid::new(3, 2).unwrap();
        let a = random_field(g, 9);
        let u = unit_direction(&a.scale(1e-150)).unwrap();
        assert!((field::l2_norm(&u) - 1.0).abs() < 1e-14);
        assert!(matches!(unit_direction(&ComplexField::zeros(g)), Err(Error::ZeroNorm)));

        assert!(angle_between(&a, &a.scale(3.0)).unwrap() < 1e-6);
        assert!((angle_between(&a, &a.scale(-1.0)).unwrap() - 180.0).abs() < 1e-6);
        let i_times = a.map(|c| c * Complex64::i());
        assert!((angle_between(&a, &i_times).unwrap() - 90.0).abs() < 1e-12);
        assert!(angle_between(&a, &ComplexField::zeros(g)).is_err());

        let b = random_field(g, 10);
        let (ua, ub) = (unit_direction(&a).unwrap(), unit_direction(&b).unwrap());
        let m = mean_direction(&ua, &ub).unwrap();
        let theta = angle_between(&ua, &ub).unwrap().to_radians();
        assert!((field::l2_norm(&m) - (theta / 2.0).cos()).abs() < 1e-12);
        let half = angle_between(&m, &ua).unwrap();
        assert!((half - angle_between(&m, &ub).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn random_init_is_seeded() {
        let g = Grid::square(16).unwrap();
        assert_eq!(random_init(g, 3), random_init(g, 3));
        assert_ne!(random_init(g, 3), random_init(g, 4));
    }

    /// Kolmogorov–Smirnov distance of `samples` from the uniform law on `[0, 1)`.
    fn ks_uniform(mut samples: Vec<f64>) -> f64 {
        samples.sort_by(f64::total_cmp);
        let n = samples.len() as f64;
        samples
            .iter()
            .enumerate()
            .map(|(i, &v)| (v - i as f64 / n).max((i + 1) as f64 / n - v))
            .fold(0.0, f64::max)
    }

    #[test]
    fn random_init_distribution() {
        let g = Grid::square(64).unwrap();
        let o = random_init(g, 11);
        let amps: Vec<f64> = o.data().iter().map(|c| c.norm()).collect();
        let phases: Vec<f64> = o.data().iter().map(|c| c.arg().rem_euclid(TAU) / TAU).collect();
        // Critical value at the 0.1 % level is 1.95/sqrt(n).
        let crit = 1.95 / (g.len() as f64).sqrt();
        assert!(ks_uniform(amps.clone()) < crit);
        assert!(ks_uniform(phases) < crit);
        let mean = amps.iter().sum::<f64>() / amps.len() as f64;
        assert!((mean - 0.5).abs() < 5.0 * (1.0 / 12.0f64 / g.len() as f64).sqrt());
    }

    fn small_problem(size: usize) -> (ComplexField, ComplexField, RealField) {
        let spec = ObjectSpec::square_step(size, size / 2, 2.0 * PI / 3.0).unwrap();
        let o = simulate::make_step_phase_object(&spec).unwrap();
        let r = simulate::make_reference(&ReferenceSpec::Plane { f1: 0.125, f2: 0.125 }, spec.grid).unwrap();
        let h = simulate::form_hologram(&o, &r).unwrap();
        (o, r, h)
    }

    #[test]
    fn step_moves_each_term_by_half_the_reach() {
        let (_, r, h) = small_problem(16);
        let cfg = SolverConfig::default();
        let o0 = random_init(h.grid(), 1);
        let mut state = SolverState::new(o0.clone(), &h, &r, &cfg).unwrap();
        let StepOutcome::Advanced(rec) = step(&mut state, &h, &r, &cfg).unwrap() else {
            panic!("stationary")
        };

        let u1 = unit_direction(&grad_err(&o0, &r, &h).unwrap()).unwrap();
        let u2 = unit_direction(&grad_tv(&o0, cfg.eps_tv)).unwrap();
        let reach = cfg.t0 * field::l2_norm(&o0);
        let expected = o0.zip_map(&mean_direction(&u1, &u2).unwrap(), |o, m| o - m * reach).unwrap();
        let diff = state.o.zip_map(&expected, |a, b| a - b).unwrap();
        assert!(field::l2_norm(&diff) < 1e-12 * reach);

        assert_eq!(rec.iter, 0);
        assert_eq!(rec.t, cfg.t0);
        assert_eq!(rec.c_err, cost_err(&o0, &r, &h).unwrap());
        assert!((rec.theta_deg - angle_between(&u1, &u2).unwrap()).abs() < 1e-9);
        assert_eq!(state.iter, 1);
        assert!((state.prev_cerr - cost_err(&state.o, &r, &h).unwrap()).abs() < 1e-9 * state.prev_cerr);
    }

    #[test]
    fn step_size_schedule() {
        let (_, r, h) = small_problem(16);
        let cfg = SolverConfig { warmup_iters: 20, max_iters: 120, ..SolverConfig::default() };
        let out = run(&h, &r, &cfg).unwrap();
        assert_eq!(out.trace.len(), 120);
        for rec in &out.trace[..=20] {
            assert_eq!(rec.t, cfg.t0);
        }
        for w in out.trace.windows(2).skip(20) {
            let ratio = w[1].t / w[0].t;
            assert!(ratio == 1.0 || (ratio - cfg.decay).abs() < 1e-15, "ratio {ratio}");
            if w[1].c_err > w[0].c_err {
                assert!(ratio < 1.0);
            }
        }
    }

    #[test]
    fn step_decays_after_increase_only_past_warmup() {
        let (_, r, h) = small_problem(8);
        let cfg = SolverConfig { warmup_iters: 3, max_iters: 10, ..SolverConfig::default() };
        let mut state = SolverState::new(random_init(h.grid(), 2), &h, &r, &cfg).unwrap();
        state.prev_cerr = 0.0;
        step(&mut state, &h, &r, &cfg).unwrap();
        assert_eq!(state.t, cfg.t0);
        state.iter = 3;
        state.prev_cerr = 0.0;
        step(&mut state, &h, &r, &cfg).unwrap();
        assert_eq!(state.t, cfg.t0 * cfg.decay);
        state.prev_cerr = f64::INFINITY;
        step(&mut state, &h, &r, &cfg).unwrap();
        assert_eq!(state.t, cfg.t0 * cfg.decay);
    }

    #[test]
    fn stationary_points_are_reported() {
        let (o, r, h) = small_problem(8);
        let cfg = SolverConfig::default();
        let mut state = SolverState::new(o.clone(), &h, &r, &cfg).unwrap();
        assert!(matches!(step(&mut state, &h, &r, &cfg).unwrap(), StepOutcome::Stationary { term: Term::Error, .. }));
        assert_eq!(state.o, o);

        let flat = ComplexField::filled(h.grid(), Complex64::new(0.5, 0.0));
        let out = run_from(SolverState::new(flat, &h, &r, &cfg).unwrap(), &h, &r, &cfg, |_, _| {}).unwrap();
        assert_eq!(out.halt, Some(Halt::Stationary(Term::TotalVariation)));
        assert!(out.trace.is_empty());
    }

    #[test]
    fn overflow_is_a_numerical_error() {
        let (_, r, _) = small_problem(8);
        let h = RealField::filled(r.grid(), 1e300);
        let cfg = SolverConfig::default();
        let mut state = SolverState::new(random_init(r.grid(), 0), &h, &r, &cfg).unwrap();
        assert!(matches!(step(&mut state, &h, &r, &cfg), Err(Error::Numerical(_))));
    }

    #[test]
    fn early_halt_on_step_underflow() {
        let (_, r, h) = small_problem(8);
        let cfg = SolverConfig { warmup_iters: 0, max_iters: 5, ..SolverConfig::default() };
        let mut state = SolverState::new(random_init(h.grid(), 0), &h, &r, &cfg).unwrap();
        state.t = cfg.t0 * MIN_STEP_RATIO * 0.5;
        let out = run_from(state.clone(), &h, &r, &cfg, |_, _| {}).unwrap();
        assert_eq!(out.halt, Some(Halt::StepUnderflow));
        let keep_going = SolverConfig { early_halt: false, ..cfg };
        let out = run_from(state, &h, &r, &keep_going, |_, _| {}).unwrap();
        assert_eq!((out.halt, out.trace.len()), (None, 5));
    }

    #[test]
    fn zero_budget_returns_the_start() {
        let (_, r, h) = small_problem(8);
        let cfg = SolverConfig { max_iters: 0, seed: 5, ..SolverConfig::default() };
        let out = run(&h, &r, &cfg).unwrap();
        assert_eq!(out.o, random_init(h.grid(), 5));
        assert!(out.trace.is_empty());
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        for bad in [
            SolverConfig { t0: 0.0, ..SolverConfig::default() },
            SolverConfig { t0: 1.5, ..SolverConfig::default() },
            SolverConfig { decay: 1.0, ..SolverConfig::default() },
            SolverConfig { warmup_iters: 2000, ..SolverConfig::default() },
            SolverConfig { eps_tv: 0.0, ..SolverConfig::default() },
            SolverConfig { eps_tv: f64::NAN, ..SolverConfig::default() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn runs_are_reproducible() {
        let (_, r, h) = small_problem(16);
        let cfg = SolverConfig { warmup_iters: 10, max_iters: 40, seed: 7, ..SolverConfig::default() };
        let a = run(&h, &r, &cfg).unwrap();
        let b = run(&h, &r, &cfg).unwrap();
        assert_eq!(a.o, b.o);
        assert_eq!(a.trace, b.trace);
        let c = run(&h, &r, &SolverConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a.o, c.o);
    }
}
