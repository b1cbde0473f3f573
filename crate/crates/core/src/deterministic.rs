//! Modified Crank–Nicolson schemes for the deterministic heat equation.
//!
//! The first step is damped, `V¹ − V⁰ = (Δτ/2)∂²V¹`, and every later step is
//! plain CN. Per mode with `ρ = Δτ μ / 2` this gives the m-step factor
//! `r_m(μ) = (1−ρ)^{m−1} / (1+ρ)^m`, which is also the propagator of the
//! stochastic schemes.

use crate::error::{ensure, Error, Result};
use crate::fem::FemSystem;
use crate::spectral::{self, lambda_sq, SpectralField};

/// `r_m(μ)`, evaluated as `g^{m−1}/(1+ρ)` with `g = (1−ρ)/(1+ρ)` so that
/// large `m` and `ρ` never overflow.
pub fn amplification(mu: f64, m: usize, dtau: f64) -> f64 {
    debug_assert!(m >= 1);
    let rho = 0.5 * dtau * mu;
    let g = (1.0 - rho) / (1.0 + rho);
    g.powi((m - 1) as i32) / (1.0 + rho)
}

/// All `r_1(μ), …, r_M(μ)` by repeated multiplication.
pub fn amplification_series(mu: f64, steps: usize, dtau: f64) -> Vec<f64> {
    let rho = 0.5 * dtau * mu;
    let g = (1.0 - rho) / (1.0 + rho);
    let mut out = Vec::with_capacity(steps);
    let mut r = 1.0 / (1.0 + rho);
    for _ in 0..steps {
        out.push(r);
        r *= g;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    /// `V¹ − V⁰ = (Δτ/2)∂²V¹`.
    ModifiedFirst,
    /// `V^m − V^{m−1} = Δτ ∂²V^{m−½}`.
    Plain,
}

/// One time step of the scheme acting on a mode with eigenvalue `μ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOperator {
    pub dtau: f64,
    pub kind: StepKind,
}

impl StepOperator {
    pub fn new(dtau: f64, kind: StepKind) -> Result<Self> {
        ensure(dtau > 0.0 && dtau.is_finite(), || {
            format!("time step must be positive (got {dtau})")
        })?;
        Ok(Self { dtau, kind })
    }

    pub fn factor(&self, mu: f64) -> f64 {
        let rho = 0.5 * self.dtau * mu;
        match self.kind {
            StepKind::ModifiedFirst => 1.0 / (1.0 + rho),
            StepKind::Plain => (1.0 - rho) / (1.0 + rho),
        }
    }

    /// The step for index `m ≥ 1`.
    pub fn for_step(dtau: f64, m: usize) -> Result<Self> {
        let kind = if m == 1 {
            StepKind::ModifiedFirst
        } else {
            StepKind::Plain
        };
        Self::new(dtau, kind)
    }
}

/// States at `τ_m = m Δτ`, `m = 0..=M`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    dtau: f64,
    states: Vec<S>,
}

impl<S> Trajectory<S> {
    pub fn new(dtau: f64, states: Vec<S>) -> Result<Self> {
        ensure(dtau > 0.0 && dtau.is_finite(), || {
            format!("time step must be positive (got {dtau})")
        })?;
        ensure(!states.is_empty(), || {
            "a trajectory needs at least τ_0".into()
        })?;
        Ok(Self { dtau, states })
    }

    pub fn dtau(&self) -> f64 {
        self.dtau
    }

    /// `M`.
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn time(&self, m: usize) -> f64 {
        m as f64 * self.dtau
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.states.len()).map(|m| self.time(m)).collect()
    }

    pub fn states(&self) -> &[S] {
        &self.states
    }

    pub fn state(&self, m: usize) -> &S {
        &self.states[m]
    }

    pub fn last(&self) -> &S {
        self.states.last().expect("nonempty by construction")
    }

    pub fn into_states(self) -> Vec<S> {
        self.states
    }

    fn check_matches<T>(&self, other: &Trajectory<T>) -> Result<()> {
        if self.states.len() != other.states.len()
            || (self.dtau - other.dtau).abs() > 1e-14 * self.dtau
        {
            return Err(Error::InconsistentGrids(format!(
                "trajectories differ: {} steps of {} vs {} steps of {}",
                self.steps(),
                self.dtau,
                other.steps(),
                other.dtau
            )));
        }
        Ok(())
    }
}

fn check_steps(steps: usize, dtau: f64) -> Result<()> {
    ensure(steps >= 1, || "at least one time step is required".into())?;
    ensure(dtau > 0.0 && dtau.is_finite(), || {
        format!("time step must be positive (got {dtau})")
    })
}

/// Time-discrete modified CN in the sine basis: `V^m_k = r_m(λ_k²) v0_k`.
pub fn modified_cn_spectral(
    v0: &SpectralField,
    steps: usize,
    dtau: f64,
) -> Result<Trajectory<SpectralField>> {
    check_steps(steps, dtau)?;
    let mut states = Vec::with_capacity(steps + 1);
    states.push(v0.clone());
    let mut current = v0.clone();
    for m in 1..=steps {
        let step = StepOperator::for_step(dtau, m)?;
        for (kk, c) in current.coeffs_mut().iter_mut().enumerate() {
            *c *= step.factor(lambda_sq(kk + 1));
        }
        states.push(current.clone());
    }
    Trajectory::new(dtau, states)
}

/// Fully discrete modified CN started from `P_h v0`.
pub fn modified_cn_fem(
    v0: &SpectralField,
    system: &FemSystem,
    steps: usize,
    dtau: f64,
) -> Result<Trajectory<Vec<f64>>> {
    modified_cn_fem_nodal(system.l2_project_field(v0), system, steps, dtau)
}

/// Fully discrete modified CN from given nodal values.
pub fn modified_cn_fem_nodal(
    v0: Vec<f64>,
    system: &FemSystem,
    steps: usize,
    dtau: f64,
) -> Result<Trajectory<Vec<f64>>> {
    check_steps(steps, dtau)?;
    ensure(v0.len() == system.dim(), || {
        format!(
            "initial vector has {} entries, mesh has {}",
            v0.len(),
            system.dim()
        )
    })?;
    let lhs = system.mass().combine(1.0, system.stiffness(), 0.5 * dtau);
    let rhs_op = system.mass().combine(1.0, system.stiffness(), -0.5 * dtau);
    let factor = lhs.factor()?;
    let mut states = Vec::with_capacity(steps + 1);
    let first = factor.solve(&system.mass().matvec(&v0));
    states.push(v0);
    states.push(first);
    for _ in 2..=steps {
        let prev = states.last().expect("nonempty");
        let next = factor.solve(&rhs_op.matvec(prev));
        states.push(next);
    }
    Trajectory::new(dtau, states)
}

/// `v(t) = e^{tΔ} v0`.
pub fn exact_heat_solution(v0: &SpectralField, t: f64) -> Result<SpectralField> {
    spectral::semigroup_apply(t, v0)
}

/// Exact solution sampled at `τ_m = m Δτ`.
pub fn exact_trajectory(
    v0: &SpectralField,
    steps: usize,
    dtau: f64,
) -> Result<Trajectory<SpectralField>> {
    check_steps(steps, dtau)?;
    let states = (0..=steps)
        .map(|m| exact_heat_solution(v0, m as f64 * dtau))
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(dtau, states)
}

/// Which discrete-in-time L²(L²) norm to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeNorm {
    /// `(Δτ Σ_{m=1}^M ‖e^m‖²)^{1/2}`.
    Nodal,
    /// `(Δτ Σ_{m=1}^M ‖e^{m−½}‖²)^{1/2}` with `e^{m−½} = (e^m + e^{m−1})/2`.
    Midpoint,
    /// `(Δτ ‖e^1‖² + Δτ Σ_{m=2}^M ‖e^{m−½}‖²)^{1/2}`.
    FirstThenMidpoint,
}

fn accumulate(
    norm: TimeNorm,
    dtau: f64,
    steps: usize,
    nodal: impl Fn(usize) -> f64,
    midpoint: impl Fn(usize) -> f64,
) -> f64 {
    let total: f64 = (1..=steps)
        .map(|m| {
            let d = match norm {
                TimeNorm::Nodal => nodal(m),
                TimeNorm::Midpoint => midpoint(m),
                TimeNorm::FirstThenMidpoint if m == 1 => nodal(m),
                TimeNorm::FirstThenMidpoint => midpoint(m),
            };
            d * d
        })
        .sum();
    (dtau * total).sqrt()
}

/// Error between two spectral trajectories on the same time grid.
pub fn l2t_error_spectral(
    a: &Trajectory<SpectralField>,
    b: &Trajectory<SpectralField>,
    norm: TimeNorm,
) -> Result<f64> {
    a.check_matches(b)?;
    let diff = |m: usize| a.state(m).sub(b.state(m));
    Ok(accumulate(
        norm,
        a.dtau(),
        a.steps(),
        |m| diff(m).l2_norm(),
        |m| diff(m).add(&diff(m - 1)).scaled(0.5).l2_norm(),
    ))
}

/// Error between a spectral trajectory and a nodal FEM trajectory, using the
/// exact embedding of the FEM function into L².
pub fn l2t_error_spectral_fem(
    a: &Trajectory<SpectralField>,
    b: &Trajectory<Vec<f64>>,
    system: &FemSystem,
    norm: TimeNorm,
) -> Result<f64> {
    a.check_matches(b)?;
    let avg = |u: &[f64], v: &[f64]| -> Vec<f64> {
        u.iter().zip(v).map(|(x, y)| 0.5 * (x + y)).collect()
    };
    Ok(accumulate(
        norm,
        a.dtau(),
        a.steps(),
        |m| system.distance_to_field(a.state(m), b.state(m)),
        |m| {
            let f = a.state(m).add(a.state(m - 1)).scaled(0.5);
            system.distance_to_field(&f, &avg(b.state(m), b.state(m - 1)))
        },
    ))
}

/// Error between two nodal trajectories on the same mesh.
pub fn l2t_error_nodal(
    a: &Trajectory<Vec<f64>>,
    b: &Trajectory<Vec<f64>>,
    system: &FemSystem,
    norm: TimeNorm,
) -> Result<f64> {
    a.check_matches(b)?;
    let diff = |m: usize| -> Vec<f64> {
        a.state(m)
            .iter()
            .zip(b.state(m))
            .map(|(x, y)| x - y)
            .collect()
    };
    Ok(accumulate(
        norm,
        a.dtau(),
        a.steps(),
        |m| system.l2_norm(&diff(m)),
        |m| {
            let avg: Vec<f64> = diff(m)
                .iter()
                .zip(diff(m - 1))
                .map(|(x, y)| 0.5 * (x + y))
                .collect();
            system.l2_norm(&avg)
        },
    ))
}
