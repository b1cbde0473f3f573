//! Piecewise-constant discretization of space-time white noise.
//!
//! The domain `(0, T) × (0, 1)` is cut into `N★ × J★` cells
//! `T_n × D_j = (t_{n-1}, t_n] × (x_{j-1}, x_j]`. The noise is represented by
//! the cell increments `R_j^n = W(T_n × D_j) ~ N(0, Δt Δx)`, independent
//! across cells, and the regularized forcing is `R_j^n / (Δt Δx)` on each cell.
//!
//! Each increment is drawn from its own ChaCha8 stream keyed by
//! `(seed, n, j)`, so values do not depend on sampling order and a grid can be
//! generated in parallel.

use std::f64::consts::SQRT_2;
use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{ensure, Error, Result};
use crate::spectral::lambda;

/// Shape of a noise grid: `N★` time cells over `(0, T)` and `J★` space cells over `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridDims {
    pub n_star: usize,
    pub j_star: usize,
    pub horizon: f64,
}

impl GridDims {
    pub fn new(n_star: usize, j_star: usize, horizon: f64) -> Result<Self> {
        ensure(n_star >= 1 && j_star >= 1, || {
            format!("cell counts must be positive (got {n_star} x {j_star})")
        })?;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Domain {
                what: "horizon",
                value: horizon,
                domain: "(0, ∞)",
            });
        }
        Ok(Self {
            n_star,
            j_star,
            horizon,
        })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_star as f64
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.j_star as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dt() * self.dx()
    }

    pub fn cells(&self) -> usize {
        self.n_star * self.j_star
    }

    /// `t_n = n Δt`.
    pub fn t_node(&self, n: usize) -> f64 {
        if n == self.n_star {
            self.horizon
        } else {
            n as f64 * self.dt()
        }
    }

    /// `x_j = j Δx`.
    pub fn x_node(&self, j: usize) -> f64 {
        if j == self.j_star {
            1.0
        } else {
            j as f64 * self.dx()
        }
    }

    /// Index `n ∈ 1..=N★` of the half-open cell `(t_{n-1}, t_n]` containing `t`.
    pub fn time_cell(&self, t: f64) -> Result<usize> {
        if !(t > 0.0 && t <= self.horizon) {
            return Err(Error::Domain {
                what: "t",
                value: t,
                domain: "(0, T]",
            });
        }
        Ok(half_open_index(t / self.dt(), self.n_star))
    }

    /// Index `j ∈ 1..=J★` of the half-open cell `(x_{j-1}, x_j]` containing `x`.
    pub fn space_cell(&self, x: f64) -> Result<usize> {
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::Domain {
                what: "x",
                value: x,
                domain: "(0, 1)",
            });
        }
        Ok(half_open_index(x * self.j_star as f64, self.j_star))
    }

    pub(crate) fn check_same(&self, other: &GridDims) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::InconsistentGrids(format!(
                "{}x{} on T={} vs {}x{} on T={}",
                self.n_star, self.j_star, self.horizon, other.n_star, other.j_star, other.horizon
            )))
        }
    }
}

/// `ceil(r)` clamped to `1..=count`, with values within 1e-12 above an
/// integer snapped down so that cell endpoints stay in the left cell.
fn half_open_index(r: f64, count: usize) -> usize {
    let mut n = r.ceil();
    if n - r > 1.0 - 1e-12 {
        n -= 1.0;
    }
    (n as usize).clamp(1, count)
}

/// A real value per noise cell, stored time-major (`values[(n-1) J★ + (j-1)]`).
#[derive(Debug, Clone, PartialEq)]
pub struct CellArray {
    dims: GridDims,
    values: Vec<f64>,
}

impl CellArray {
    pub fn from_fn(dims: GridDims, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(dims.cells());
        for n in 1..=dims.n_star {
            for j in 1..=dims.j_star {
                values.push(f(n, j));
            }
        }
        Self { dims, values }
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Entry for cell `(n, j)`, both 1-based.
    pub fn get(&self, n: usize, j: usize) -> f64 {
        self.values[(n - 1) * self.dims.j_star + (j - 1)]
    }

    /// Row of time cell `n` (1-based).
    pub fn row(&self, n: usize) -> &[f64] {
        let w = self.dims.j_star;
        &self.values[(n - 1) * w..n * w]
    }

    /// `L²(𝒪)` norm of the piecewise-constant function with these cell values.
    pub fn l2_norm(&self) -> f64 {
        (self.dims.cell_area() * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }
}

/// Sampled cell increments `R_j^n` plus the grid they live on.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseGrid {
    dims: GridDims,
    seed: u64,
    increments: CellArray,
}

impl NoiseGrid {
    /// Draws every `R_j^n ~ N(0, Δt Δx)` from the stream keyed by `(seed, n, j)`.
    pub fn sample(n_star: usize, j_star: usize, horizon: f64, seed: u64) -> Result<Self> {
        let dims = GridDims::new(n_star, j_star, horizon)?;
        Ok(Self::sample_dims(dims, seed))
    }

    pub fn sample_dims(dims: GridDims, seed: u64) -> Self {
        let sd = dims.cell_area().sqrt();
        let base = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..dims.cells())
            .into_par_iter()
            .map(|idx| sd * cell_normal(&base, idx as u64))
            .collect();
        Self {
            dims,
            seed,
            increments: CellArray { dims, values },
        }
    }

    /// Builds a grid from explicit increments (time-major).
    pub fn from_increments(dims: GridDims, seed: u64, values: Vec<f64>) -> Result<Self> {
        ensure(values.len() == dims.cells(), || {
            format!("expected {} increments, got {}", dims.cells(), values.len())
        })?;
        Ok(Self {
            dims,
            seed,
            increments: CellArray { dims, values },
        })
    }

    pub fn zeros(dims: GridDims) -> Self {
        Self {
            dims,
            seed: 0,
            increments: CellArray {
                dims,
                values: vec![0.0; dims.cells()],
            },
        }
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn increments(&self) -> &CellArray {
        &self.increments
    }

    /// `R_j^n`, 1-based.
    pub fn increment(&self, n: usize, j: usize) -> f64 {
        self.increments.get(n, j)
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.increments.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// Sums `time_factor × space_factor` blocks of increments into a coarser grid.
    pub fn coarsen(&self, time_factor: usize, space_factor: usize) -> Result<Self> {
        let d = self.dims;
        ensure(
            time_factor >= 1
                && space_factor >= 1
                && d.n_star.is_multiple_of(time_factor)
                && d.j_star.is_multiple_of(space_factor),
            || {
                format!(
                    "factors {time_factor}x{space_factor} do not divide {}x{}",
                    d.n_star, d.j_star
                )
            },
        )?;
        let coarse = GridDims::new(d.n_star / time_factor, d.j_star / space_factor, d.horizon)?;
        let values = CellArray::from_fn(coarse, |n, j| {
            let mut s = 0.0;
            for nf in (n - 1) * time_factor + 1..=n * time_factor {
                for jf in (j - 1) * space_factor + 1..=j * space_factor {
                    s += self.increment(nf, jf);
                }
            }
            s
        });
        Ok(Self {
            dims: coarse,
            seed: self.seed,
            increments: values,
        })
    }

    /// Value of the regularized forcing `𝒲(t, x) = R_j^n / (Δt Δx)`.
    pub fn w_eval(&self, t: f64, x: f64) -> Result<f64> {
        let n = self.dims.time_cell(t)?;
        let j = self.dims.space_cell(x)?;
        Ok(self.increment(n, j) / self.dims.cell_area())
    }

    /// Writes the little-endian dump: `n_star`, `j_star`, `horizon` bits,
    /// `seed` (8 bytes each), then the increments time-major as f64.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.dims.n_star as u64).to_le_bytes())?;
        w.write_all(&(self.dims.j_star as u64).to_le_bytes())?;
        w.write_all(&self.dims.horizon.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for v in &self.increments.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> Result<[u8; 8]> {
            r.read_exact(&mut word)
                .map_err(|e| Error::Format(format!("truncated dump: {e}")))?;
            Ok(word)
        };
        let n_star = u64::from_le_bytes(next(&mut r)?) as usize;
        let j_star = u64::from_le_bytes(next(&mut r)?) as usize;
        let horizon = f64::from_le_bytes(next(&mut r)?);
        let seed = u64::from_le_bytes(next(&mut r)?);
        let dims = GridDims::new(n_star, j_star, horizon)
            .map_err(|e| Error::Format(format!("bad header: {e}")))?;
        let mut values = Vec::with_capacity(dims.cells());
        for _ in 0..dims.cells() {
            values.push(f64::from_le_bytes(next(&mut r)?));
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes", rest.len())));
        }
        Self::from_increments(dims, seed, values)
    }
}

fn cell_normal(base: &ChaCha8Rng, stream: u64) -> f64 {
    let mut rng = base.clone();
    rng.set_stream(stream);
    rng.set_word_pos(0);
    StandardNormal.sample(&mut rng)
}

/// Source of cell integrals `∫_{T_n} ∫_{D_j} g` for [`project_pi`].
pub trait CellIntegrals {
    fn cell_integral(&self, t: (f64, f64), x: (f64, f64)) -> f64;
}

/// Closed-form cell integrals supplied by the caller.
pub struct ExactCellIntegrals<F>(pub F);

impl<F: Fn((f64, f64), (f64, f64)) -> f64> CellIntegrals for ExactCellIntegrals<F> {
    fn cell_integral(&self, t: (f64, f64), x: (f64, f64)) -> f64 {
        (self.0)(t, x)
    }
}

/// Tensor Gauss–Legendre integration of a pointwise integrand on each cell.
pub struct QuadratureCellIntegrals<F> {
    pub f: F,
    pub rule: crate::quadrature::GaussLegendre,
}

impl<F: Fn(f64, f64) -> f64> CellIntegrals for QuadratureCellIntegrals<F> {
    fn cell_integral(&self, t: (f64, f64), x: (f64, f64)) -> f64 {
        let mut s = 0.0;
        for (tq, wt) in self.rule.mapped(t.0, t.1) {
            for (xq, wx) in self.rule.mapped(x.0, x.1) {
                s += wt * wx * (self.f)(tq, xq);
            }
        }
        s
    }
}

/// Cell averages `(1/(Δt Δx)) ∫_{T_n}∫_{D_j} g`: the `L²(𝒪)` projection onto
/// piecewise constants.
pub fn project_pi<G: CellIntegrals + ?Sized>(g: &G, dims: GridDims) -> CellArray {
    let area = dims.cell_area();
    CellArray::from_fn(dims, |n, j| {
        g.cell_integral(
            (dims.t_node(n - 1), dims.t_node(n)),
            (dims.x_node(j - 1), dims.x_node(j)),
        ) / area
    })
}

/// `b_{k,j} = ∫_{D_j} ε_k` for `k ≤ K`, `j ≤ J★`, row-major in `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellWeightTable {
    truncation: usize,
    j_star: usize,
    b: Vec<f64>,
}

impl CellWeightTable {
    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn j_star(&self) -> usize {
        self.j_star
    }

    /// `b_{k,j}`, 1-based.
    pub fn weight(&self, k: usize, j: usize) -> f64 {
        self.b[(k - 1) * self.j_star + (j - 1)]
    }

    /// All `b_{k,·}` for mode `k`.
    pub fn row(&self, k: usize) -> &[f64] {
        &self.b[(k - 1) * self.j_star..k * self.j_star]
    }

    /// `Σ_j b_{k,j}²`.
    pub fn row_sum_squares(&self, k: usize) -> f64 {
        self.row(k).iter().map(|b| b * b).sum()
    }
}

/// Exact `b_{k,j} = √2 (cos(λ_k x_{j-1}) − cos(λ_k x_j)) / λ_k`.
pub fn mode_cell_weights(truncation: usize, j_star: usize) -> Result<CellWeightTable> {
    ensure(truncation >= 1, || "truncation must be >= 1".into())?;
    ensure(j_star >= 1, || "j_star must be >= 1".into())?;
    let dx = 1.0 / j_star as f64;
    let mut b = Vec::with_capacity(truncation * j_star);
    for k in 1..=truncation {
        let l = lambda(k);
        let mut prev = 1.0; // cos(0)
        for j in 1..=j_star {
            let x = if j == j_star { 1.0 } else { j as f64 * dx };
            let c = (l * x).cos();
            b.push(SQRT_2 * (prev - c) / l);
            prev = c;
        }
    }
    Ok(CellWeightTable {
        truncation,
        j_star,
        b,
    })
}

/// `∫_{T_n ∩ (0,t)} e^{-μ(t-s)} ds` for a decay rate `μ ≥ 0`.
pub fn exp_overlap_integral(mu: f64, n: usize, t: f64, dims: GridDims) -> f64 {
    let lo = dims.t_node(n - 1);
    if t <= lo {
        return 0.0;
    }
    let up = t.min(dims.t_node(n));
    let width = up - lo;
    if mu == 0.0 {
        return width;
    }
    (-mu * (t - up)).exp() * (-(-mu * width).exp_m1()) / mu
}

/// `I_{k,n}(t) = ∫_{T_n ∩ (0,t)} e^{-λ_k²(t-s)} ds`.
pub fn time_overlap_integral(k: usize, n: usize, t: f64, dims: GridDims) -> Result<f64> {
    ensure(k >= 1, || "mode index must be >= 1".into())?;
    ensure(n >= 1 && n <= dims.n_star, || {
        format!("time cell {n} outside 1..={}", dims.n_star)
    })?;
    if !(0.0..=dims.horizon).contains(&t) {
        return Err(Error::Domain {
            what: "t",
            value: t,
            domain: "[0, T]",
        });
    }
    let l = lambda(k);
    Ok(exp_overlap_integral(l * l, n, t, dims))
}

/// Intersections `|Δ_ℓ ∩ T_n|` between `M` solver steps and `N★` noise cells
/// on the same horizon, computed on the common integer refinement
/// `lcm(M, N★)` so every length is an exact multiple of `T / lcm`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeCoupling {
    steps: usize,
    n_star: usize,
    /// `pieces[ℓ-1]` lists `(n, |Δ_ℓ ∩ T_n|)` with positive length.
    pieces: Vec<Vec<(usize, f64)>>,
}

impl TimeCoupling {
    pub fn new(steps: usize, dims: GridDims) -> Result<Self> {
        ensure(steps >= 1, || "step count must be >= 1".into())?;
        let n_star = dims.n_star;
        let l = lcm(steps as u64, n_star as u64);
        let per_step = l / steps as u64;
        let per_cell = l / n_star as u64;
        let unit = dims.horizon / l as f64;
        let mut pieces = Vec::with_capacity(steps);
        for s in 0..steps as u64 {
            let (a, b) = (s * per_step, (s + 1) * per_step);
            let mut row = Vec::new();
            let mut n = a / per_cell;
            while n * per_cell < b {
                let lo = a.max(n * per_cell);
                let hi = b.min((n + 1) * per_cell);
                if hi > lo {
                    row.push((n as usize + 1, (hi - lo) as f64 * unit));
                }
                n += 1;
            }
            pieces.push(row);
        }
        Ok(Self {
            steps,
            n_star,
            pieces,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn n_star(&self) -> usize {
        self.n_star
    }

    /// `(n, |Δ_ℓ ∩ T_n|)` for step `ℓ` (1-based).
    pub fn step(&self, ell: usize) -> &[(usize, f64)] {
        &self.pieces[ell - 1]
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}
