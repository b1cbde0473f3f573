//! One CN finite element trajectory as CSV (times × interior nodes).

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use sheq_core::stochastic::cn_fem_spde;
use sheq_core::{FemSystem, GridDims, NoiseGrid};

use crate::{fmt_f64, CliError};

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePathSpec {
    pub n_star: usize,
    pub j_star: usize,
    pub horizon: f64,
    pub steps: usize,
    pub intervals: usize,
    pub seed: u64,
    /// Replays a dumped grid instead of sampling one.
    pub noise_in: Option<PathBuf>,
    pub noise_out: Option<PathBuf>,
}

/// Solves once and writes `M + 1` rows of `J_h − 1` values, preceded by a
/// `#` line describing the layout.
pub fn sample_path<W: Write>(spec: &SamplePathSpec, mut out: W) -> Result<(), CliError> {
    let grid = match &spec.noise_in {
        Some(path) => NoiseGrid::read_from(BufReader::new(
            File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?,
        ))?,
        None => NoiseGrid::sample_dims(
            GridDims::new(spec.n_star, spec.j_star, spec.horizon)?,
            spec.seed,
        ),
    };
    if let Some(path) = &spec.noise_out {
        let f = File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(f);
        grid.write_to(&mut w)?;
        w.flush()?;
    }
    if spec.steps == 0 {
        return Err(CliError::Config("steps must be >= 1".into()));
    }
    let system = FemSystem::new(spec.intervals)?;
    let traj = cn_fem_spde(&grid, &system, spec.steps)?;
    let dims = grid.dims();
    writeln!(
        out,
        "# rows t_m = m*{}/{} for m = 0..={}; columns x_i = i/{} for i = 1..={}",
        dims.horizon,
        spec.steps,
        spec.steps,
        spec.intervals,
        spec.intervals - 1
    )?;
    for state in traj.states() {
        let line: Vec<String> = state.iter().map(|&v| fmt_f64(v)).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()?;
    Ok(())
}
