//! Solvers driven by one discretized noise grid.
//!
//! Every solution here is linear in the increments `R_j^n`, and each sine or
//! eigen coordinate has a coefficient against `R_j^n` of the separable form
//! `a(n) s(j) / (Δt Δx)`: a time row from the propagator and a space row from
//! the test function's cell integrals. [`GaussianCoefficientMap`] stores those
//! rows and turns second moments into finite sums.

use rayon::prelude::*;

use crate::deterministic::{amplification_series, Trajectory};
use crate::error::{ensure, Error, Result};
use crate::fem::{generalized_eigen, hat_cell_overlaps, sine_hat_inner, FemEigenBasis, FemSystem};
use crate::noise::{exp_overlap_integral, mode_cell_weights, GridDims, NoiseGrid, TimeCoupling};
use crate::spectral::{lambda_sq, SpectralField};

/// `Σ_j s_j R_j^n` for every time cell `n`.
fn space_project(grid: &NoiseGrid, row: &[f64]) -> Vec<f64> {
    let inc = grid.increments();
    (1..=grid.dims().n_star)
        .map(|n| inc.row(n).iter().zip(row).map(|(r, s)| r * s).sum())
        .collect()
}

/// Sparse variant for hat functions: `(j, weight)` pairs.
fn space_project_sparse(grid: &NoiseGrid, row: &[(usize, f64)]) -> Vec<f64> {
    let inc = grid.increments();
    (1..=grid.dims().n_star)
        .map(|n| {
            let r = inc.row(n);
            row.iter().map(|&(j, s)| s * r[j - 1]).sum()
        })
        .collect()
}

/// `a_n = I_n(t) = ∫_{T_n ∩ (0,t)} e^{−μ(t−s)} ds` for `n = 1..=N★`.
pub fn exact_time_row(mu: f64, t: f64, dims: GridDims) -> Vec<f64> {
    (1..=dims.n_star)
        .map(|n| exp_overlap_integral(mu, n, t, dims))
        .collect()
}

/// `a_n = Σ_{ℓ≤m} r_{m−ℓ+1}(μ) |Δ_ℓ ∩ T_n|`, the CN propagation of the
/// cell-constant load to step `m`.
pub fn cn_time_row(mu: f64, m: usize, coupling: &TimeCoupling, dtau: f64) -> Vec<f64> {
    let mut row = vec![0.0; coupling.n_star()];
    if m == 0 {
        return row;
    }
    let r = amplification_series(mu, m, dtau);
    for ell in 1..=m {
        let f = r[m - ell];
        for &(n, len) in coupling.step(ell) {
            row[n - 1] += f * len;
        }
    }
    row
}

fn check_time(t: f64, dims: GridDims) -> Result<()> {
    if !(0.0..=dims.horizon * (1.0 + 1e-14)).contains(&t) {
        return Err(Error::Domain {
            what: "t",
            value: t,
            domain: "[0, T]",
        });
    }
    Ok(())
}

/// `û(t)` truncated at `K` modes, exact given the grid.
pub fn regularized_exact(grid: &NoiseGrid, truncation: usize, t: f64) -> Result<SpectralField> {
    let dims = grid.dims();
    check_time(t, dims)?;
    let weights = mode_cell_weights(truncation, dims.j_star)?;
    let scale = 1.0 / dims.cell_area();
    let coeffs: Vec<f64> = (1..=truncation)
        .into_par_iter()
        .map(|k| {
            let proj = space_project(grid, weights.row(k));
            let row = exact_time_row(lambda_sq(k), t, dims);
            scale * row.iter().zip(&proj).map(|(a, p)| a * p).sum::<f64>()
        })
        .collect();
    SpectralField::new(coeffs)
}

/// Per-step load coefficients: `w^m_t = ∫_{Δ_m} (𝒲, χ_t) ds` for targets
/// `χ_t` (sines or hats).
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticLoad {
    steps: usize,
    targets: usize,
    /// Step-major: `values[(m−1) targets + t]`.
    values: Vec<f64>,
}

impl StochasticLoad {
    /// Targets `ε_1..ε_K`.
    pub fn spectral(grid: &NoiseGrid, truncation: usize, steps: usize) -> Result<Self> {
        let dims = grid.dims();
        let coupling = TimeCoupling::new(steps, dims)?;
        let weights = mode_cell_weights(truncation, dims.j_star)?;
        let columns: Vec<Vec<f64>> = (1..=truncation)
            .into_par_iter()
            .map(|k| Self::column(&space_project(grid, weights.row(k)), &coupling, dims))
            .collect();
        Ok(Self::from_columns(steps, columns))
    }

    /// Targets: hat functions of the interior nodes.
    pub fn fem(grid: &NoiseGrid, system: &FemSystem, steps: usize) -> Result<Self> {
        let dims = grid.dims();
        let coupling = TimeCoupling::new(steps, dims)?;
        let overlaps = hat_cell_overlaps(system.mesh(), dims.j_star);
        let columns: Vec<Vec<f64>> = overlaps
            .par_iter()
            .map(|row| Self::column(&space_project_sparse(grid, row), &coupling, dims))
            .collect();
        Ok(Self::from_columns(steps, columns))
    }

    fn column(proj: &[f64], coupling: &TimeCoupling, dims: GridDims) -> Vec<f64> {
        let scale = 1.0 / dims.cell_area();
        (1..=coupling.steps())
            .map(|ell| {
                scale
                    * coupling
                        .step(ell)
                        .iter()
                        .map(|&(n, len)| len * proj[n - 1])
                        .sum::<f64>()
            })
            .collect()
    }

    fn from_columns(steps: usize, columns: Vec<Vec<f64>>) -> Self {
        let targets = columns.len();
        let mut values = vec![0.0; steps * targets];
        for (t, col) in columns.iter().enumerate() {
            for (m, v) in col.iter().enumerate() {
                values[m * targets + t] = *v;
            }
        }
        Self {
            steps,
            targets,
            values,
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn targets(&self) -> usize {
        self.targets
    }

    /// Load of step `m` (1-based) for every target.
    pub fn step(&self, m: usize) -> &[f64] {
        &self.values[(m - 1) * self.targets..m * self.targets]
    }

    /// `Σ_m w^m_t`.
    pub fn total(&self, target: usize) -> f64 {
        (1..=self.steps).map(|m| self.step(m)[target]).sum()
    }
}

/// CN time-discrete scheme per sine mode with `Δτ = T/M`, `U⁰ = 0`.
pub fn cn_time_discrete(
    grid: &NoiseGrid,
    truncation: usize,
    steps: usize,
) -> Result<Trajectory<SpectralField>> {
    let dims = grid.dims();
    let dtau = dims.horizon / steps.max(1) as f64;
    let load = StochasticLoad::spectral(grid, truncation, steps)?;
    let mut states = Vec::with_capacity(steps + 1);
    let mut u = vec![0.0; truncation];
    states.push(SpectralField::new(u.clone())?);
    for m in 1..=steps {
        let w = load.step(m);
        for (kk, c) in u.iter_mut().enumerate() {
            let rho = 0.5 * dtau * lambda_sq(kk + 1);
            *c = ((1.0 - rho) * *c + w[kk]) / (1.0 + rho);
        }
        states.push(SpectralField::new(u.clone())?);
    }
    Trajectory::new(dtau, states)
}

/// CN finite element scheme, `U_h⁰ = 0`.
pub fn cn_fem_spde(
    grid: &NoiseGrid,
    system: &FemSystem,
    steps: usize,
) -> Result<Trajectory<Vec<f64>>> {
    let dims = grid.dims();
    let dtau = dims.horizon / steps.max(1) as f64;
    let load = StochasticLoad::fem(grid, system, steps)?;
    let lhs = system.mass().combine(1.0, system.stiffness(), 0.5 * dtau);
    let rhs_op = system.mass().combine(1.0, system.stiffness(), -0.5 * dtau);
    let factor = lhs.factor()?;
    let mut states = Vec::with_capacity(steps + 1);
    states.push(vec![0.0; system.dim()]);
    for m in 1..=steps {
        let prev = states.last().expect("nonempty");
        let mut rhs = rhs_op.matvec(prev);
        for (r, b) in rhs.iter_mut().zip(load.step(m)) {
            *r += b;
        }
        states.push(factor.solve(&rhs));
    }
    Trajectory::new(dtau, states)
}

/// A linear functional of the noise whose mean square we want.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observable {
    Zero,
    /// `û(t)` with `K` modes.
    Regularized {
        t: f64,
        truncation: usize,
    },
    /// `U^m` of the CN time-discrete scheme with `M` steps and `K` modes.
    TimeDiscrete {
        m: usize,
        steps: usize,
        truncation: usize,
    },
    /// `U_h^m` of the CN finite element scheme on `J_h` intervals.
    FemDiscrete {
        m: usize,
        steps: usize,
        intervals: usize,
    },
}

impl Observable {
    fn check(&self, dims: GridDims) -> Result<()> {
        match *self {
            Observable::Zero => Ok(()),
            Observable::Regularized { t, truncation } => {
                check_time(t, dims)?;
                ensure(truncation >= 1, || "truncation must be >= 1".into())
            }
            Observable::TimeDiscrete {
                m,
                steps,
                truncation,
            } => {
                ensure(truncation >= 1, || "truncation must be >= 1".into())?;
                check_step_index(m, steps)
            }
            Observable::FemDiscrete { m, steps, .. } => check_step_index(m, steps),
        }
    }

    /// Runs the matching direct solver on `grid`.
    pub fn evaluate(&self, grid: &NoiseGrid) -> Result<ObservableValue> {
        self.check(grid.dims())?;
        Ok(match *self {
            Observable::Zero => ObservableValue::Zero,
            Observable::Regularized { t, truncation } => {
                ObservableValue::Spectral(regularized_exact(grid, truncation, t)?)
            }
            Observable::TimeDiscrete {
                m,
                steps,
                truncation,
            } => {
                let traj = cn_time_discrete(grid, truncation, steps)?;
                ObservableValue::Spectral(traj.state(m).clone())
            }
            Observable::FemDiscrete {
                m,
                steps,
                intervals,
            } => {
                let system = FemSystem::new(intervals)?;
                let traj = cn_fem_spde(grid, &system, steps)?;
                let values = traj.state(m).clone();
                ObservableValue::Nodal { system, values }
            }
        })
    }
}

fn check_step_index(m: usize, steps: usize) -> Result<()> {
    ensure(steps >= 1, || "step count must be >= 1".into())?;
    if m > steps {
        return Err(Error::InconsistentGrids(format!(
            "step {m} lies beyond the horizon ({steps} steps)"
        )));
    }
    Ok(())
}

/// A realized observable.
#[derive(Debug, Clone, PartialEq)]
pub enum ObservableValue {
    Zero,
    Spectral(SpectralField),
    Nodal { system: FemSystem, values: Vec<f64> },
}

impl ObservableValue {
    pub fn norm_sq(&self) -> f64 {
        match self {
            ObservableValue::Zero => 0.0,
            ObservableValue::Spectral(f) => f.l2_norm().powi(2),
            ObservableValue::Nodal { system, values } => system.mass().quadratic_form(values),
        }
    }

    /// `‖self − other‖²_{L²}`, embedding nodal functions exactly.
    pub fn distance_sq(&self, other: &Self) -> Result<f64> {
        use ObservableValue::*;
        Ok(match (self, other) {
            (Zero, x) | (x, Zero) => x.norm_sq(),
            (Spectral(a), Spectral(b)) => a.sub(b).l2_norm().powi(2),
            (Spectral(f), Nodal { system, values }) | (Nodal { system, values }, Spectral(f)) => {
                system.distance_to_field(f, values).powi(2)
            }
            (
                Nodal { system, values },
                Nodal {
                    system: s2,
                    values: v2,
                },
            ) => {
                if system.mesh() != s2.mesh() {
                    return Err(Error::InconsistentGrids(
                        "nodal values live on different meshes".into(),
                    ));
                }
                let d: Vec<f64> = values.iter().zip(v2).map(|(a, b)| a - b).collect();
                system.mass().quadratic_form(&d)
            }
        })
    }
}

/// Orthonormal basis in which the map's targets are coordinates.
#[derive(Debug, Clone)]
pub enum MapBasis {
    /// `ε_1, ε_2, …`
    Sine,
    /// `φ_1..φ_{ν_h}` of a FEM mesh.
    FemEigen(Box<(FemSystem, FemEigenBasis)>),
}

/// Exact linear map from increments to the coordinates of an observable.
///
/// Coordinate `t` equals `Σ_{n,j} a_t(n) s_t(j) R_j^n / (Δt Δx)`.
#[derive(Debug, Clone)]
pub struct GaussianCoefficientMap {
    dims: GridDims,
    basis: MapBasis,
    time_rows: Vec<Vec<f64>>,
    space_rows: Vec<Vec<f64>>,
}

/// Builds the coefficient map of `observable` for noise grids of shape `dims`.
pub fn coefficient_map(observable: Observable, dims: GridDims) -> Result<GaussianCoefficientMap> {
    observable.check(dims)?;
    match observable {
        Observable::Zero => Ok(GaussianCoefficientMap {
            dims,
            basis: MapBasis::Sine,
            time_rows: vec![],
            space_rows: vec![],
        }),
        Observable::Regularized { t, truncation } => {
            let weights = mode_cell_weights(truncation, dims.j_star)?;
            let time_rows = (1..=truncation)
                .into_par_iter()
                .map(|k| exact_time_row(lambda_sq(k), t, dims))
                .collect();
            let space_rows = (1..=truncation).map(|k| weights.row(k).to_vec()).collect();
            Ok(GaussianCoefficientMap {
                dims,
                basis: MapBasis::Sine,
                time_rows,
                space_rows,
            })
        }
        Observable::TimeDiscrete {
            m,
            steps,
            truncation,
        } => {
            let weights = mode_cell_weights(truncation, dims.j_star)?;
            let coupling = TimeCoupling::new(steps, dims)?;
            let dtau = dims.horizon / steps as f64;
            let time_rows = (1..=truncation)
                .into_par_iter()
                .map(|k| cn_time_row(lambda_sq(k), m, &coupling, dtau))
                .collect();
            let space_rows = (1..=truncation).map(|k| weights.row(k).to_vec()).collect();
            Ok(GaussianCoefficientMap {
                dims,
                basis: MapBasis::Sine,
                time_rows,
                space_rows,
            })
        }
        Observable::FemDiscrete {
            m,
            steps,
            intervals,
        } => {
            let system = FemSystem::new(intervals)?;
            let basis = generalized_eigen(&system)?;
            let coupling = TimeCoupling::new(steps, dims)?;
            let dtau = dims.horizon / steps as f64;
            let time_rows = (1..=basis.len())
                .into_par_iter()
                .map(|p| cn_time_row(basis.value(p), m, &coupling, dtau))
                .collect();
            let space_rows = eigen_space_rows(&basis, &system, dims.j_star);
            Ok(GaussianCoefficientMap {
                dims,
                basis: MapBasis::FemEigen(Box::new((system, basis))),
                time_rows,
                space_rows,
            })
        }
    }
}

/// `β_{p,j} = Σ_i φ_p[i] ∫_{D_j} hat_i`.
pub fn eigen_space_rows(basis: &FemEigenBasis, system: &FemSystem, j_star: usize) -> Vec<Vec<f64>> {
    let overlaps = hat_cell_overlaps(system.mesh(), j_star);
    (1..=basis.len())
        .map(|p| {
            let phi = basis.vectors().column(p - 1);
            let mut row = vec![0.0; j_star];
            for (i, ov) in overlaps.iter().enumerate() {
                for &(j, w) in ov {
                    row[j - 1] += phi[i] * w;
                }
            }
            row
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl GaussianCoefficientMap {
    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn basis(&self) -> &MapBasis {
        &self.basis
    }

    pub fn targets(&self) -> usize {
        self.time_rows.len()
    }

    /// Coefficient of coordinate `t` (0-based) against `R_j^n`.
    pub fn coefficient(&self, target: usize, n: usize, j: usize) -> f64 {
        self.time_rows[target][n - 1] * self.space_rows[target][j - 1] / self.dims.cell_area()
    }

    /// Coordinates of the observable on a sampled grid.
    pub fn apply(&self, grid: &NoiseGrid) -> Result<Vec<f64>> {
        self.dims.check_same(&grid.dims())?;
        let scale = 1.0 / self.dims.cell_area();
        Ok(self
            .time_rows
            .par_iter()
            .zip(&self.space_rows)
            .map(|(a, s)| scale * dot(a, &space_project(grid, s)))
            .collect())
    }

    /// Realized observable from coordinates returned by [`Self::apply`].
    pub fn value(&self, coords: &[f64]) -> Result<ObservableValue> {
        Ok(match &self.basis {
            _ if coords.is_empty() => ObservableValue::Zero,
            MapBasis::Sine => ObservableValue::Spectral(SpectralField::new(coords.to_vec())?),
            MapBasis::FemEigen(b) => ObservableValue::Nodal {
                system: b.0.clone(),
                values: b.1.reconstruct(coords),
            },
        })
    }

    /// `E‖X‖² = Σ_t |a_t|² |s_t|² / (Δt Δx)`.
    pub fn second_moment(&self) -> f64 {
        let scale = 1.0 / self.dims.cell_area();
        scale
            * self
                .time_rows
                .iter()
                .zip(&self.space_rows)
                .map(|(a, s)| dot(a, a) * dot(s, s))
                .sum::<f64>()
    }

    /// `E[(X, Y)] = Σ_{t,u} (χ_t, ψ_u) (a_t·a_u)(s_t·s_u) / (Δt Δx)`.
    pub fn cross_moment(&self, other: &Self) -> Result<f64> {
        self.dims.check_same(&other.dims)?;
        let scale = 1.0 / self.dims.cell_area();
        let pair = |t: usize, u: usize| {
            dot(&self.time_rows[t], &other.time_rows[u])
                * dot(&self.space_rows[t], &other.space_rows[u])
        };
        let total = match (&self.basis, &other.basis) {
            (MapBasis::Sine, MapBasis::Sine) => (0..self.targets().min(other.targets()))
                .map(|t| pair(t, t))
                .sum::<f64>(),
            (MapBasis::FemEigen(a), MapBasis::FemEigen(b)) => {
                if a.0.mesh() != b.0.mesh() {
                    return Err(Error::InconsistentGrids(
                        "coefficient maps live on different meshes".into(),
                    ));
                }
                (0..self.targets()).map(|t| pair(t, t)).sum::<f64>()
            }
            (MapBasis::Sine, MapBasis::FemEigen(_)) => self.sine_fem_cross(other, pair, false),
            (MapBasis::FemEigen(_), MapBasis::Sine) => other.sine_fem_cross(self, pair, true),
        };
        Ok(scale * total)
    }

    /// `Σ_{k,p} (ε_k, φ_p) pair(k, p)` with `self` the sine map.
    fn sine_fem_cross(
        &self,
        fem: &Self,
        pair: impl Fn(usize, usize) -> f64 + Sync,
        swapped: bool,
    ) -> f64 {
        let MapBasis::FemEigen(b) = &fem.basis else {
            unreachable!("caller matched the basis")
        };
        let (system, basis) = (&b.0, &b.1);
        let mesh = system.mesh();
        let nu = basis.len();
        let rows: Vec<f64> = (0..self.targets())
            .into_par_iter()
            .map(|kk| {
                let shi: Vec<f64> = (1..=nu).map(|i| sine_hat_inner(kk + 1, i, mesh)).collect();
                (0..nu)
                    .map(|p| {
                        let g = dot(basis.vectors().column(p).as_slice(), &shi);
                        let v = if swapped { pair(p, kk) } else { pair(kk, p) };
                        g * v
                    })
                    .sum::<f64>()
            })
            .collect();
        rows.iter().sum()
    }

    /// `E‖X − Y‖²`.
    pub fn second_moment_of_difference(&self, other: &Self) -> Result<f64> {
        let cross = self.cross_moment(other)?;
        Ok((self.second_moment() + other.second_moment() - 2.0 * cross).max(0.0))
    }
}
