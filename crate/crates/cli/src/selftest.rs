//! Small oracle-equivalence checks runnable from the binary.

use std::io::Write;

use sheq_core::error_lab::{
    mc_error, modeling_error_summands, modeling_error_summands_direct, sdr_error_exact,
    tdr_error_exact, total_error_exact,
};
use sheq_core::fem::generalized_eigen;
use sheq_core::quadrature::GaussLegendre;
use sheq_core::stochastic::{coefficient_map, Observable};
use sheq_core::{FemSystem, GridDims, NoiseGrid};

use crate::CliError;

type Check = (&'static str, fn() -> Result<(bool, String), CliError>);

fn modeling_closed_form() -> Result<(bool, String), CliError> {
    let dims = GridDims::new(2, 2, 1.0)?;
    let a = modeling_error_summands(1.0, dims, 200)?;
    let b = modeling_error_summands_direct(1.0, dims, 200)?;
    let worst = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1e-300))
        .fold(0.0, f64::max);
    Ok((worst < 1e-10, format!("max relative gap {worst:.2e}")))
}

fn maps_match_solvers() -> Result<(bool, String), CliError> {
    let dims = GridDims::new(8, 6, 1.0)?;
    let grid = NoiseGrid::sample_dims(dims, 11);
    let mut worst: f64 = 0.0;
    for obs in [
        Observable::Regularized {
            t: 1.0,
            truncation: 24,
        },
        Observable::TimeDiscrete {
            m: 5,
            steps: 5,
            truncation: 24,
        },
        Observable::FemDiscrete {
            m: 5,
            steps: 5,
            intervals: 7,
        },
    ] {
        let map = coefficient_map(obs, dims)?;
        let via_map = map.value(&map.apply(&grid)?)?;
        worst = worst.max(via_map.distance_sq(&obs.evaluate(&grid)?)?.sqrt());
    }
    Ok((worst < 1e-10, format!("max L2 gap {worst:.2e}")))
}

fn exact_errors_match_maps() -> Result<(bool, String), CliError> {
    let dims = GridDims::new(8, 6, 1.0)?;
    let (m, k, j) = (4, 24, 5);
    let system = FemSystem::new(j)?;
    let basis = generalized_eigen(&system)?;
    let reg = coefficient_map(
        Observable::Regularized {
            t: 1.0,
            truncation: k,
        },
        dims,
    )?;
    let cn = coefficient_map(
        Observable::TimeDiscrete {
            m,
            steps: m,
            truncation: k,
        },
        dims,
    )?;
    let fem = coefficient_map(
        Observable::FemDiscrete {
            m,
            steps: m,
            intervals: j,
        },
        dims,
    )?;
    let pairs = [
        (
            tdr_error_exact(m, dims, m, k)?.mean_square,
            reg.second_moment_of_difference(&cn)?,
        ),
        (
            sdr_error_exact(m, dims, m, &system, &basis, k)?.mean_square,
            cn.second_moment_of_difference(&fem)?,
        ),
        (
            total_error_exact(m, dims, m, &system, &basis, k)?.mean_square,
            reg.second_moment_of_difference(&fem)?,
        ),
    ];
    let worst = pairs
        .iter()
        .map(|(a, b)| (a - b).abs() / b)
        .fold(0.0, f64::max);
    Ok((worst < 1e-12, format!("max relative gap {worst:.2e}")))
}

fn triangle_inequality() -> Result<(bool, String), CliError> {
    let dims = GridDims::new(16, 16, 1.0)?;
    let system = FemSystem::new(8)?;
    let basis = generalized_eigen(&system)?;
    let tdr = tdr_error_exact(16, dims, 16, 64)?.value;
    let sdr = sdr_error_exact(16, dims, 16, &system, &basis, 64)?.value;
    let total = total_error_exact(16, dims, 16, &system, &basis, 64)?.value;
    Ok((
        total <= (tdr + sdr) * (1.0 + 1e-12),
        format!("total {total:.6e} <= tdr {tdr:.6e} + sdr {sdr:.6e}"),
    ))
}

fn monte_carlo_agrees() -> Result<(bool, String), CliError> {
    let dims = GridDims::new(4, 4, 1.0)?;
    let obs = Observable::Regularized {
        t: 1.0,
        truncation: 16,
    };
    let exact = coefficient_map(obs, dims)?.second_moment();
    let mc = mc_error(obs, Observable::Zero, dims, 1000, 2024)?;
    let z = (mc.mean - exact).abs() / mc.stderr;
    Ok((z <= 3.0, format!("|MC - exact| = {z:.2} standard errors")))
}

fn nodal_exactness() -> Result<(bool, String), CliError> {
    let system = FemSystem::new(16)?;
    let load = system.load_from_fn(|_| 1.0, &GaussLegendre::new(2));
    let v = system.elliptic_solve(&load);
    let mesh = system.mesh();
    let worst = v
        .iter()
        .enumerate()
        .map(|(i, vi)| {
            let x = mesh.node(i + 1);
            (vi - 0.5 * (x * x - x)).abs()
        })
        .fold(0.0, f64::max);
    Ok((worst < 1e-10, format!("max nodal gap {worst:.2e}")))
}

const CHECKS: [Check; 6] = [
    (
        "modeling error closed form vs cell sums",
        modeling_closed_form,
    ),
    ("coefficient maps vs direct solvers", maps_match_solvers),
    (
        "exact TDR/SDR/total vs coefficient maps",
        exact_errors_match_maps,
    ),
    ("total <= TDR + SDR", triangle_inequality),
    ("Monte Carlo vs exact second moment", monte_carlo_agrees),
    (
        "nodal exactness of the discrete elliptic solve",
        nodal_exactness,
    ),
];

/// Prints one line per check; returns whether all passed.
pub fn selftest<W: Write>(mut out: W) -> Result<bool, CliError> {
    let mut all = true;
    for (name, check) in CHECKS {
        let (ok, detail) = check()?;
        all &= ok;
        writeln!(out, "{} {name}: {detail}", if ok { "PASS" } else { "FAIL" })?;
    }
    Ok(all)
}
