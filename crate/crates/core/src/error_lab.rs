//! Exact and Monte Carlo error functionals, and rate fitting.
//!
//! All solutions are Gaussian and linear in the increments, so every mean
//! square error reduces to sums of products of time rows and space rows (see
//! [`crate::stochastic`]). Sums over modes run in parallel but are reduced in
//! index order, so results do not depend on the thread count.

use std::f64::consts::PI;

use log::warn;
use rayon::prelude::*;

use crate::error::{ensure, Error, Result};
use crate::fem::{hat_cell_overlaps, sine_hat_inner, FemEigenBasis, FemSystem};
use crate::noise::{mode_cell_weights, GridDims, NoiseGrid, TimeCoupling};
use crate::spectral::{lambda, lambda_sq};
use crate::stochastic::{cn_time_row, eigen_space_rows, exact_time_row, Observable};

/// Modes per parallel chunk for sums over very large `K`.
const CHUNK: usize = 1 << 16;

/// Relative size of the neglected tail above which a warning is logged.
const TAIL_WARN_RATIO: f64 = 1e-2;

/// An exact root-mean-square error and an estimate of what truncation at
/// `K` modes left out of its square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactError {
    pub value: f64,
    pub mean_square: f64,
    /// Bound on the neglected mean-square mass from modes above `K`.
    pub tail: f64,
}

impl ExactError {
    fn new(mean_square: f64, tail: f64, what: &str) -> Self {
        let mean_square = mean_square.max(0.0);
        if tail > TAIL_WARN_RATIO * mean_square {
            warn!(
                "{what}: truncation tail estimate {tail:.3e} is large against mean square {mean_square:.3e}; raise K"
            );
        }
        Self {
            value: mean_square.sqrt(),
            mean_square,
            tail,
        }
    }
}

/// Sum of `f(k)` for `k = 1..=n` in fixed-size chunks, reduced in order.
fn ordered_sum(n: usize, f: impl Fn(usize) -> f64 + Sync) -> f64 {
    let chunks = n.div_ceil(CHUNK);
    let partial: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK + 1;
            let hi = ((c + 1) * CHUNK).min(n);
            (lo..=hi).map(&f).sum()
        })
        .collect();
    partial.iter().sum()
}

/// `Σ_n I_n(t)² / Δt` in closed form for decay rate `μ > 0`.
fn exact_row_energy(mu: f64, t: f64, dims: GridDims) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let dt = dims.dt();
    let n_cell = dims.time_cell(t.min(dims.horizon)).unwrap_or(dims.n_star);
    let delta = t - dims.t_node(n_cell - 1);
    let partial = -(-mu * delta).exp_m1() / mu;
    let full_cells = (n_cell - 1) as f64;
    let full = if n_cell > 1 {
        let one = -(-mu * dt).exp_m1() / mu;
        let geom = (-2.0 * mu * dt * full_cells).exp_m1() / (-2.0 * mu * dt).exp_m1();
        (-2.0 * mu * delta).exp() * one * one * geom
    } else {
        0.0
    };
    (full + partial * partial) / dt
}

/// `Σ_j b_{k,j}² / Δx = sinc²(λ_k Δx / 2) · (1 − [J★ | k] (−1)^{k/J★})`.
fn cell_weight_energy(k: usize, j_star: usize) -> f64 {
    let half = 0.5 * lambda(k) / j_star as f64;
    let sinc = half.sin() / half;
    let alias = if k.is_multiple_of(j_star) {
        if (k / j_star).is_multiple_of(2) {
            0.0
        } else {
            2.0
        }
    } else {
        1.0
    };
    sinc * sinc * alias
}

/// One summand of `𝒵(t)²`: the part of mode `k` that the cell projection loses.
fn modeling_summand(k: usize, t: f64, dims: GridDims) -> f64 {
    let mu = lambda_sq(k);
    let full = -(-2.0 * mu * t).exp_m1() / (2.0 * mu);
    full - exact_row_energy(mu, t, dims) * cell_weight_energy(k, dims.j_star)
}

/// `Σ_{k>K} 1/(2λ_k²)`, which dominates the neglected summands.
fn modeling_tail(truncation: usize) -> f64 {
    let k = truncation as f64;
    // Σ_{k>K} 1/k² ≈ 1/K − 1/(2K²) + 1/(6K³)
    (1.0 / k - 0.5 / (k * k) + 1.0 / (6.0 * k * k * k)) / (2.0 * PI * PI)
}

fn check_t(t: f64, dims: GridDims) -> Result<f64> {
    if !(t >= 0.0 && t <= dims.horizon * (1.0 + 1e-14)) {
        return Err(Error::Domain {
            what: "t",
            value: t,
            domain: "[0, T]",
        });
    }
    Ok(t.min(dims.horizon))
}

/// `𝒵(t)`, the mean-square distance between the mild solution and the
/// regularized solution, from per-mode closed forms.
pub fn modeling_error_exact(t: f64, dims: GridDims, truncation: usize) -> Result<ExactError> {
    let t = check_t(t, dims)?;
    ensure(truncation >= 1, || "truncation must be >= 1".into())?;
    if t == 0.0 {
        return Ok(ExactError {
            value: 0.0,
            mean_square: 0.0,
            tail: 0.0,
        });
    }
    let ms = ordered_sum(truncation, |k| modeling_summand(k, t, dims));
    Ok(ExactError::new(
        ms,
        modeling_tail(truncation),
        "modeling error",
    ))
}

/// Per-mode summands of `𝒵(t)²` from explicit sums over cells, for checking
/// [`modeling_error_exact`] on small instances.
pub fn modeling_error_summands_direct(
    t: f64,
    dims: GridDims,
    truncation: usize,
) -> Result<Vec<f64>> {
    let t = check_t(t, dims)?;
    let weights = mode_cell_weights(truncation, dims.j_star)?;
    Ok((1..=truncation)
        .map(|k| {
            let mu = lambda_sq(k);
            let full = -(-2.0 * mu * t).exp_m1() / (2.0 * mu);
            let row = exact_time_row(mu, t, dims);
            let p: f64 = row.iter().map(|a| a * a).sum::<f64>() / dims.dt();
            let q = weights.row_sum_squares(k) / dims.dx();
            full - p * q
        })
        .collect())
}

/// Per-mode summands from the closed forms, exposed for comparison.
pub fn modeling_error_summands(t: f64, dims: GridDims, truncation: usize) -> Result<Vec<f64>> {
    let t = check_t(t, dims)?;
    Ok((1..=truncation)
        .map(|k| modeling_summand(k, t, dims))
        .collect())
}

/// How a spectral observable propagates the noise in time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeProfile {
    /// `û(t)`.
    Exact { t: f64 },
    /// `U^m` of the CN scheme with `M` steps.
    CrankNicolson { m: usize, steps: usize },
}

/// Row builder for one profile on one noise grid.
struct Rows {
    profile: TimeProfile,
    dims: GridDims,
    coupling: Option<TimeCoupling>,
}

impl Rows {
    fn new(profile: TimeProfile, dims: GridDims) -> Result<Self> {
        let coupling = match profile {
            TimeProfile::Exact { t } => {
                check_t(t, dims)?;
                None
            }
            TimeProfile::CrankNicolson { m, steps } => {
                ensure(m <= steps, || {
                    format!("step {m} lies beyond the horizon ({steps} steps)")
                })?;
                Some(TimeCoupling::new(steps, dims)?)
            }
        };
        Ok(Self {
            profile,
            dims,
            coupling,
        })
    }

    fn row(&self, mu: f64) -> Vec<f64> {
        match (self.profile, &self.coupling) {
            (TimeProfile::Exact { t }, _) => {
                exact_time_row(mu, t.min(self.dims.horizon), self.dims)
            }
            (TimeProfile::CrankNicolson { m, steps }, Some(c)) => {
                cn_time_row(mu, m, c, self.dims.horizon / steps as f64)
            }
            (TimeProfile::CrankNicolson { .. }, None) => unreachable!("coupling built in new"),
        }
    }

    /// Upper bound on `Σ_n a_n² / Δt` for every rate `≥ mu`.
    fn energy_bound(&self, mu: f64) -> f64 {
        match self.profile {
            TimeProfile::Exact { .. } => (1.0 / mu).min(1.0 / (mu * mu * self.dims.dt())),
            TimeProfile::CrankNicolson { steps, .. } => {
                let rho = 0.5 * mu * self.dims.horizon / steps as f64;
                self.dims.horizon / ((1.0 + rho) * (1.0 + rho))
            }
        }
    }

    /// Bound on `Σ_{k>K} E|x_k|²`, using `Σ_j b_{k,j}² ≤ 8/(λ_k² Δx)`.
    fn tail(&self, truncation: usize) -> f64 {
        let dx = self.dims.dx();
        8.0 * self.energy_bound(lambda_sq(truncation + 1)) / (PI * PI * dx * dx * truncation as f64)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `E‖X − Y‖²` for two spectral observables that differ only in their time
/// profile: `(1/(ΔtΔx)) Σ_k (Σ_j b_{k,j}²) Σ_n (a_{k,n} − a'_{k,n})²`.
pub fn spectral_pair_error(
    a: TimeProfile,
    b: TimeProfile,
    dims: GridDims,
    truncation: usize,
) -> Result<ExactError> {
    ensure(truncation >= 1, || "truncation must be >= 1".into())?;
    let ra = Rows::new(a, dims)?;
    let rb = Rows::new(b, dims)?;
    let ms = ordered_sum(truncation, |k| {
        let mu = lambda_sq(k);
        let x = ra.row(mu);
        let y = rb.row(mu);
        let d2: f64 = x.iter().zip(&y).map(|(p, q)| (p - q).powi(2)).sum();
        d2 * cell_weight_energy(k, dims.j_star) / dims.dt()
    });
    let tail = 2.0 * (ra.tail(truncation) + rb.tail(truncation));
    Ok(ExactError::new(ms, tail, "spectral pair error"))
}

/// `E_TDR^m = (E‖û(τ_m) − U^m‖²)^{1/2}`.
pub fn tdr_error_exact(
    m: usize,
    dims: GridDims,
    steps: usize,
    truncation: usize,
) -> Result<ExactError> {
    ensure(steps >= 1, || "step count must be >= 1".into())?;
    let t = m as f64 * dims.horizon / steps as f64;
    spectral_pair_error(
        TimeProfile::Exact { t },
        TimeProfile::CrankNicolson { m, steps },
        dims,
        truncation,
    )
}

/// `E‖X − U_h^m‖²` for a spectral observable `X` with time profile `a` and
/// the CN finite element solution.
pub fn spectral_fem_error(
    a: TimeProfile,
    m: usize,
    dims: GridDims,
    steps: usize,
    system: &FemSystem,
    basis: &FemEigenBasis,
    truncation: usize,
) -> Result<ExactError> {
    ensure(truncation >= 1, || "truncation must be >= 1".into())?;
    ensure(basis.len() == system.dim(), || {
        "eigenbasis does not belong to this mesh".into()
    })?;
    let ra = Rows::new(a, dims)?;
    let rc = Rows::new(TimeProfile::CrankNicolson { m, steps }, dims)?;
    let mesh = system.mesh();
    let nu = basis.len();
    let j_star = dims.j_star;

    let c_rows: Vec<Vec<f64>> = (1..=nu).map(|p| rc.row(basis.value(p))).collect();
    let beta = eigen_space_rows(basis, system, j_star);
    let fem_self: f64 = c_rows
        .iter()
        .zip(&beta)
        .map(|(c, b)| dot(c, c) * dot(b, b))
        .sum();
    let overlaps = hat_cell_overlaps(mesh, j_star);
    let phi: Vec<Vec<f64>> = (1..=nu).map(|p| basis.vector(p)).collect();

    let per_mode = |k: usize| -> (f64, f64) {
        let mu = lambda_sq(k);
        let a_row = ra.row(mu);
        let b_energy = cell_weight_energy(k, j_star) * dims.dx();
        let self_term = dot(&a_row, &a_row) * b_energy;
        // b_{k,j} on the fly, then hb_{k,i} = Σ_j b_{k,j} ∫_{D_j} hat_i
        let l = lambda(k);
        let mut b_row = Vec::with_capacity(j_star);
        let mut prev = 1.0;
        for j in 1..=j_star {
            let x = if j == j_star {
                1.0
            } else {
                j as f64 / j_star as f64
            };
            let c = (l * x).cos();
            b_row.push(std::f64::consts::SQRT_2 * (prev - c) / l);
            prev = c;
        }
        let hb: Vec<f64> = overlaps
            .iter()
            .map(|ov| ov.iter().map(|&(j, w)| w * b_row[j - 1]).sum())
            .collect();
        let shi: Vec<f64> = (1..=nu).map(|i| sine_hat_inner(k, i, mesh)).collect();
        let cross: f64 = (0..nu)
            .map(|p| {
                let g = dot(&phi[p], &shi);
                let h = dot(&phi[p], &hb);
                g * h * dot(&a_row, &c_rows[p])
            })
            .sum();
        (self_term, cross)
    };
    let chunks = truncation.div_ceil(CHUNK);
    let partial: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK + 1;
            let hi = ((c + 1) * CHUNK).min(truncation);
            let mut acc = (0.0, 0.0);
            for k in lo..=hi {
                let (s, x) = per_mode(k);
                acc.0 += s;
                acc.1 += x;
            }
            acc
        })
        .collect();
    let (spec_self, cross) = partial
        .iter()
        .fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    let ms = (spec_self + fem_self - 2.0 * cross) / dims.cell_area();
    Ok(ExactError::new(
        ms,
        ra.tail(truncation),
        "spectral/FEM error",
    ))
}

/// `E_SDR^m = (E‖U^m − U_h^m‖²)^{1/2}`.
pub fn sdr_error_exact(
    m: usize,
    dims: GridDims,
    steps: usize,
    system: &FemSystem,
    basis: &FemEigenBasis,
    truncation: usize,
) -> Result<ExactError> {
    spectral_fem_error(
        TimeProfile::CrankNicolson { m, steps },
        m,
        dims,
        steps,
        system,
        basis,
        truncation,
    )
}

/// `(E‖û(τ_m) − U_h^m‖²)^{1/2}`.
pub fn total_error_exact(
    m: usize,
    dims: GridDims,
    steps: usize,
    system: &FemSystem,
    basis: &FemEigenBasis,
    truncation: usize,
) -> Result<ExactError> {
    ensure(steps >= 1, || "step count must be >= 1".into())?;
    let t = m as f64 * dims.horizon / steps as f64;
    spectral_fem_error(
        TimeProfile::Exact { t },
        m,
        dims,
        steps,
        system,
        basis,
        truncation,
    )
}

/// Sample mean of `‖X − Y‖²` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl McEstimate {
    /// Root of the mean with a delta-method standard error.
    pub fn rms(&self) -> (f64, f64) {
        let r = self.mean.max(0.0).sqrt();
        let se = if r > 0.0 {
            self.stderr / (2.0 * r)
        } else {
            0.0
        };
        (r, se)
    }
}

/// Monte Carlo estimate of `E‖X − Y‖²` with per-sample seeds `base ^ i`.
pub fn mc_error(
    x: Observable,
    y: Observable,
    dims: GridDims,
    samples: usize,
    base_seed: u64,
) -> Result<McEstimate> {
    ensure(samples >= 2, || {
        format!("need at least 2 samples (got {samples})")
    })?;
    let values: Vec<f64> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let grid = NoiseGrid::sample_dims(dims, base_seed ^ i);
            let a = x.evaluate(&grid)?;
            let b = y.evaluate(&grid)?;
            a.distance_sq(&b)
        })
        .collect::<Result<_>>()?;
    let n = samples as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(McEstimate {
        mean,
        stderr: (var / n).sqrt(),
        samples,
    })
}

/// Least-squares line through `(log r, log e)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest absolute misfit in log space.
    pub residual: f64,
}

pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "rate fit needs at least 3 points (got {})",
            points.len()
        )));
    }
    if let Some(&(r, e)) = points.iter().find(|(r, e)| !(*r > 0.0 && *e > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "rate fit needs positive data (got resolution {r}, error {e})"
        )));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter(
            "rate fit needs at least two distinct resolutions".into(),
        ));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).abs())
        .fold(0.0, f64::max);
    Ok(RateFit {
        slope,
        intercept,
        residual,
    })
}

/// Which resolution a study sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Dt,
    Dx,
    Dtau,
    H,
}

/// One refinement level of a study. Not-applicable entries are `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportRow {
    pub level: usize,
    pub dt: Option<f64>,
    pub dx: Option<f64>,
    pub dtau: Option<f64>,
    pub h: Option<f64>,
    pub truncation: Option<usize>,
    pub error_exact: f64,
    pub error_mc: Option<f64>,
    pub stderr: Option<f64>,
}

impl ReportRow {
    pub fn resolution(&self, axis: Axis) -> Option<f64> {
        match axis {
            Axis::Dt => self.dt,
            Axis::Dx => self.dx,
            Axis::Dtau => self.dtau,
            Axis::H => self.h,
        }
    }
}

/// Rows of a convergence study and the rate fitted over a window of them.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub study: String,
    pub axis: Axis,
    pub rows: Vec<ReportRow>,
    /// Number of finest levels in the fit (`None` = all).
    pub fit_window: Option<usize>,
    pub fit: Option<RateFit>,
}

impl ErrorReport {
    pub fn new(
        study: impl Into<String>,
        axis: Axis,
        rows: Vec<ReportRow>,
        fit_window: Option<usize>,
    ) -> Result<Self> {
        let mut report = Self {
            study: study.into(),
            axis,
            rows,
            fit_window,
            fit: None,
        };
        report.fit = Some(report.fit_over(fit_window)?);
        Ok(report)
    }

    /// Fits the finest `window` rows (rows are ordered coarse to fine).
    pub fn fit_over(&self, window: Option<usize>) -> Result<RateFit> {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .map(|r| {
                r.resolution(self.axis)
                    .map(|res| (res, r.error_exact))
                    .ok_or_else(|| Error::InvalidParameter("row lacks the swept resolution".into()))
            })
            .collect::<Result<_>>()?;
        let w = window.unwrap_or(pts.len()).min(pts.len());
        fit_rate(&pts[pts.len() - w..])
    }
}
