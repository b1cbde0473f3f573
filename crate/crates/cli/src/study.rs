//! Runs a configured convergence study and writes it as CSV.

use std::io::Write;

use log::info;
use sheq_core::deterministic::{
    exact_trajectory, l2t_error_spectral, l2t_error_spectral_fem, modified_cn_fem,
    modified_cn_spectral, TimeNorm,
};
use sheq_core::error_lab::{
    mc_error, modeling_error_exact, sdr_error_exact, tdr_error_exact, total_error_exact, Axis,
    ErrorReport, ExactError, ReportRow,
};
use sheq_core::fem::generalized_eigen;
use sheq_core::spectral::default_truncation;
use sheq_core::stochastic::Observable;
use sheq_core::{FemSystem, GridDims, SpectralField};

use crate::config::{StudyConfig, StudyKind, SweepAxis, Truncation};
use crate::{fmt_f64, fmt_opt, CliError};

pub const CSV_HEADER: [&str; 10] = [
    "study",
    "level",
    "dt",
    "dx",
    "dtau",
    "h",
    "K",
    "error_exact",
    "error_mc",
    "stderr",
];

fn single(list: &[u32], name: &str, study: StudyKind) -> Result<u32, CliError> {
    match list {
        [p] => Ok(*p),
        _ => Err(CliError::Config(format!(
            "study `{study}` needs exactly one `{name}` entry (got {})",
            list.len()
        ))),
    }
}

fn pow2(p: u32) -> usize {
    1usize << p
}

/// `(sweep exponent, companion exponent)` pairs, where the companion list
/// is either a single value or zipped with the sweep.
fn paired(sweep: &[u32], other: &[u32], name: &str) -> Result<Vec<(u32, u32)>, CliError> {
    if other.len() == 1 {
        Ok(sweep.iter().map(|&p| (p, other[0])).collect())
    } else if other.len() == sweep.len() {
        Ok(sweep.iter().copied().zip(other.iter().copied()).collect())
    } else {
        Err(CliError::Config(format!(
            "`{name}` must have one entry or as many as the swept list ({} vs {})",
            other.len(),
            sweep.len()
        )))
    }
}

struct Level {
    exponent: u32,
    n_star: Option<usize>,
    j_star: Option<usize>,
    steps: Option<usize>,
    intervals: Option<usize>,
}

fn levels(cfg: &StudyConfig) -> Result<Vec<Level>, CliError> {
    let s = cfg.study;
    let lv =
        |exponent, dt: Option<u32>, dx: Option<u32>, dtau: Option<u32>, h: Option<u32>| Level {
            exponent,
            n_star: dt.map(pow2),
            j_star: dx.map(pow2),
            steps: dtau.map(pow2),
            intervals: h.map(pow2),
        };
    Ok(match s {
        StudyKind::ModelSpace => {
            let dt = single(&cfg.dt_levels, "dt_levels", s)?;
            cfg.dx_levels
                .iter()
                .map(|&p| lv(p, Some(dt), Some(p), None, None))
                .collect()
        }
        StudyKind::ModelTime => {
            let dx = single(&cfg.dx_levels, "dx_levels", s)?;
            cfg.dt_levels
                .iter()
                .map(|&p| lv(p, Some(p), Some(dx), None, None))
                .collect()
        }
        StudyKind::Tdr => {
            let dt = single(&cfg.dt_levels, "dt_levels", s)?;
            let dx = single(&cfg.dx_levels, "dx_levels", s)?;
            cfg.dtau_levels
                .iter()
                .map(|&p| lv(p, Some(dt), Some(dx), Some(p), None))
                .collect()
        }
        StudyKind::Sdr => {
            let dt = single(&cfg.dt_levels, "dt_levels", s)?;
            let dx = single(&cfg.dx_levels, "dx_levels", s)?;
            let dtau = single(&cfg.dtau_levels, "dtau_levels", s)?;
            cfg.h_levels
                .iter()
                .map(|&p| lv(p, Some(dt), Some(dx), Some(dtau), Some(p)))
                .collect()
        }
        StudyKind::Total => {
            let dt = single(&cfg.dt_levels, "dt_levels", s)?;
            let dx = single(&cfg.dx_levels, "dx_levels", s)?;
            match cfg.axis {
                SweepAxis::H => paired(&cfg.h_levels, &cfg.dtau_levels, "dtau_levels")?
                    .into_iter()
                    .map(|(h, tau)| lv(h, Some(dt), Some(dx), Some(tau), Some(h)))
                    .collect(),
                _ => paired(&cfg.dtau_levels, &cfg.h_levels, "h_levels")?
                    .into_iter()
                    .map(|(tau, h)| lv(tau, Some(dt), Some(dx), Some(tau), Some(h)))
                    .collect(),
            }
        }
        StudyKind::DeterministicCn => match cfg.axis {
            SweepAxis::H => {
                let dtau = single(&cfg.dtau_levels, "dtau_levels", s)?;
                cfg.h_levels
                    .iter()
                    .map(|&p| lv(p, None, None, Some(dtau), Some(p)))
                    .collect()
            }
            _ => cfg
                .dtau_levels
                .iter()
                .map(|&p| lv(p, None, None, Some(p), None))
                .collect(),
        },
    })
}

fn truncation(cfg: &StudyConfig, j_star: usize) -> usize {
    match (cfg.k, cfg.study) {
        (Truncation::Fixed(k), _) => k,
        (Truncation::Auto, StudyKind::ModelSpace | StudyKind::ModelTime) => {
            default_truncation() as usize
        }
        (Truncation::Auto, _) => 4 * j_star,
    }
}

fn axis(a: SweepAxis) -> Axis {
    match a {
        SweepAxis::Dt => Axis::Dt,
        SweepAxis::Dx => Axis::Dx,
        SweepAxis::Dtau => Axis::Dtau,
        SweepAxis::H => Axis::H,
    }
}

/// Computes every level of the study and fits its rate.
pub fn run_study(cfg: &StudyConfig) -> Result<ErrorReport, CliError> {
    let t_end = cfg.horizon;
    let mut rows = Vec::new();
    for level in levels(cfg)? {
        let dims = match (level.n_star, level.j_star) {
            (Some(n), Some(j)) => Some(GridDims::new(n, j, t_end)?),
            _ => None,
        };
        let k = dims.map(|d| truncation(cfg, d.j_star));
        let system = level.intervals.map(FemSystem::new).transpose()?;
        let mut mc = None;
        let exact: ExactError = match cfg.study {
            StudyKind::ModelSpace | StudyKind::ModelTime => {
                modeling_error_exact(t_end, dims.expect("noise grid"), k.expect("K"))?
            }
            StudyKind::Tdr => {
                let (d, k, m) = (dims.expect("grid"), k.expect("K"), level.steps.expect("M"));
                if cfg.samples > 0 {
                    mc = Some(mc_error(
                        Observable::Regularized {
                            t: t_end,
                            truncation: k,
                        },
                        Observable::TimeDiscrete {
                            m,
                            steps: m,
                            truncation: k,
                        },
                        d,
                        cfg.samples,
                        cfg.seed,
                    )?);
                }
                tdr_error_exact(m, d, m, k)?
            }
            StudyKind::Sdr | StudyKind::Total => {
                let (d, k, m) = (dims.expect("grid"), k.expect("K"), level.steps.expect("M"));
                let sys = system.as_ref().expect("mesh");
                let basis = generalized_eigen(sys)?;
                let fem = Observable::FemDiscrete {
                    m,
                    steps: m,
                    intervals: sys.mesh().intervals(),
                };
                let (spectral, value) = if cfg.study == StudyKind::Sdr {
                    (
                        Observable::TimeDiscrete {
                            m,
                            steps: m,
                            truncation: k,
                        },
                        sdr_error_exact(m, d, m, sys, &basis, k)?,
                    )
                } else {
                    (
                        Observable::Regularized {
                            t: t_end,
                            truncation: k,
                        },
                        total_error_exact(m, d, m, sys, &basis, k)?,
                    )
                };
                if cfg.samples > 0 {
                    mc = Some(mc_error(spectral, fem, d, cfg.samples, cfg.seed)?);
                }
                value
            }
            StudyKind::DeterministicCn => {
                let v0 = SpectralField::mode(1, 1);
                let m = level.steps.expect("M");
                let dtau = t_end / m as f64;
                let reference = modified_cn_spectral(&v0, m, dtau)?;
                let value = match &system {
                    None => {
                        let exact = exact_trajectory(&v0, m, dtau)?;
                        l2t_error_spectral(&reference, &exact, TimeNorm::Nodal)?
                    }
                    Some(sys) => {
                        let fem = modified_cn_fem(&v0, sys, m, dtau)?;
                        l2t_error_spectral_fem(&reference, &fem, sys, TimeNorm::FirstThenMidpoint)?
                    }
                };
                ExactError {
                    value,
                    mean_square: value * value,
                    tail: 0.0,
                }
            }
        };
        let (error_mc, stderr) = match mc.map(|e| e.rms()) {
            Some((r, se)) => (Some(r), Some(se)),
            None => (None, None),
        };
        info!(
            "{} level {}: exact {:.6e}",
            cfg.study, level.exponent, exact.value
        );
        rows.push(ReportRow {
            level: level.exponent as usize,
            dt: level.n_star.map(|n| t_end / n as f64),
            dx: level.j_star.map(|j| 1.0 / j as f64),
            dtau: level.steps.map(|m| t_end / m as f64),
            h: level.intervals.map(|j| 1.0 / j as f64),
            truncation: k,
            error_exact: exact.value,
            error_mc,
            stderr,
        });
    }
    let report = ErrorReport::new(cfg.study.name(), axis(cfg.axis), rows, cfg.fit_window)?;
    Ok(report)
}

/// Writes the header, one row per level, and a `#` summary line.
pub fn write_csv<W: Write>(report: &ErrorReport, out: W) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in &report.rows {
        w.write_record([
            report.study.clone(),
            r.level.to_string(),
            fmt_opt(r.dt),
            fmt_opt(r.dx),
            fmt_opt(r.dtau),
            fmt_opt(r.h),
            r.truncation.map_or_else(|| "nan".into(), |k| k.to_string()),
            fmt_f64(r.error_exact),
            fmt_opt(r.error_mc),
            fmt_opt(r.stderr),
        ])?;
    }
    let mut out = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    let window = match report.fit_window {
        Some(w) if w < report.rows.len() => w.to_string(),
        _ => "all".to_string(),
    };
    match report.fit {
        Some(f) => writeln!(
            out,
            "# fit slope={},intercept={},residual={},window={window}",
            fmt_f64(f.slope),
            fmt_f64(f.intercept),
            fmt_f64(f.residual)
        )?,
        None => writeln!(out, "# fit unavailable")?,
    }
    out.flush()?;
    Ok(())
}
