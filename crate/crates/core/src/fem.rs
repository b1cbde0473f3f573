//! Piecewise linear finite elements on a uniform mesh of (0, 1).
//!
//! Unknowns are the values at the interior nodes `x_i = i h`, `i = 1..ν_h`
//! with `ν_h = J_h - 1`. The discrete Laplacian is taken as the positive
//! operator, `(Δ_h φ, χ) = (φ', χ')`, so the stiffness matrix `S` represents
//! `Δ_h` and the heat step reads `(M + Δτ/2 S) U^m = (M − Δτ/2 S) U^{m-1} + b`.

use std::f64::consts::SQRT_2;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{ensure, Error, Result};
use crate::quadrature::GaussLegendre;
use crate::spectral::{lambda, SpectralField};

/// Uniform partition of (0, 1) into `J_h` intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mesh {
    intervals: usize,
}

impl Mesh {
    pub fn uniform(intervals: usize) -> Result<Self> {
        ensure(intervals >= 2, || {
            format!("a mesh needs at least 2 intervals to have interior nodes (got {intervals})")
        })?;
        Ok(Self { intervals })
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn h(&self) -> f64 {
        1.0 / self.intervals as f64
    }

    /// `ν_h = J_h − 1`.
    pub fn interior_nodes(&self) -> usize {
        self.intervals - 1
    }

    /// `x_i = i h` for `i = 0..=J_h`.
    pub fn node(&self, i: usize) -> f64 {
        if i == self.intervals {
            1.0
        } else {
            i as f64 * self.h()
        }
    }

    /// Hat function of node `i` at `x`.
    pub fn hat(&self, i: usize, x: f64) -> f64 {
        let r = (x - self.node(i)).abs() / self.h();
        (1.0 - r).max(0.0)
    }

    /// Evaluates the finite element function with interior nodal values `v`.
    pub fn eval(&self, v: &[f64], x: f64) -> f64 {
        let h = self.h();
        let s = (x / h).floor().clamp(0.0, (self.intervals - 1) as f64) as usize;
        let left = if s == 0 { 0.0 } else { v[s - 1] };
        let right = if s + 1 == self.intervals { 0.0 } else { v[s] };
        let theta = (x - self.node(s)) / h;
        left * (1.0 - theta) + right * theta
    }
}

/// Symmetric tridiagonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    /// `off[i]` couples rows `i` and `i + 1`.
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn constant(n: usize, diag: f64, off: f64) -> Self {
        Self {
            diag: vec![diag; n],
            off: vec![off; n.saturating_sub(1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.off[i] * x[i + 1];
            }
            y[i] = s;
        }
        y
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.matvec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        self.matvec(x).iter().zip(y).map(|(a, b)| a * b).sum()
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        Self {
            diag: self
                .diag
                .iter()
                .zip(&other.diag)
                .map(|(x, y)| a * x + b * y)
                .collect(),
            off: self
                .off
                .iter()
                .zip(&other.off)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.diag[i]
            } else if i + 1 == j {
                self.off[i]
            } else if j + 1 == i {
                self.off[j]
            } else {
                0.0
            }
        })
    }

    /// Thomas factorization (no pivoting; the matrices used here are SPD).
    pub fn factor(&self) -> Result<TridiagonalFactor> {
        let n = self.dim();
        let mut c_prime = vec![0.0; n.saturating_sub(1)];
        let mut denom = vec![0.0; n];
        let mut prev_c = 0.0;
        for i in 0..n {
            let sub = if i > 0 { self.off[i - 1] } else { 0.0 };
            let d = self.diag[i] - sub * prev_c;
            if !(d.abs() > 0.0) || !d.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "zero pivot at row {i} in tridiagonal solve"
                )));
            }
            denom[i] = d;
            if i + 1 < n {
                c_prime[i] = self.off[i] / d;
                prev_c = c_prime[i];
            }
        }
        Ok(TridiagonalFactor {
            off: self.off.clone(),
            c_prime,
            denom,
        })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.factor()?.solve(rhs))
    }
}

/// Precomputed Thomas sweep for repeated solves with one matrix.
#[derive(Debug, Clone)]
pub struct TridiagonalFactor {
    off: Vec<f64>,
    c_prime: Vec<f64>,
    denom: Vec<f64>,
}

impl TridiagonalFactor {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.denom.len();
        let mut x = vec![0.0; n];
        let mut prev = 0.0;
        for i in 0..n {
            let sub = if i > 0 { self.off[i - 1] } else { 0.0 };
            prev = (rhs[i] - sub * prev) / self.denom[i];
            x[i] = prev;
        }
        for i in (0..n.saturating_sub(1)).rev() {
            x[i] -= self.c_prime[i] * x[i + 1];
        }
        x
    }
}

/// Assembled mass and stiffness matrices on the interior nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct FemSystem {
    mesh: Mesh,
    mass: SymTridiagonal,
    stiffness: SymTridiagonal,
}

/// `M_ii = 2h/3`, `M_{i,i±1} = h/6`, `S_ii = 2/h`, `S_{i,i±1} = −1/h`.
pub fn assemble(mesh: Mesh) -> FemSystem {
    let h = mesh.h();
    let n = mesh.interior_nodes();
    FemSystem {
        mesh,
        mass: SymTridiagonal::constant(n, 2.0 * h / 3.0, h / 6.0),
        stiffness: SymTridiagonal::constant(n, 2.0 / h, -1.0 / h),
    }
}

impl FemSystem {
    pub fn new(intervals: usize) -> Result<Self> {
        Ok(assemble(Mesh::uniform(intervals)?))
    }

    pub fn mesh(&self) -> Mesh {
        self.mesh
    }

    pub fn dim(&self) -> usize {
        self.mesh.interior_nodes()
    }

    pub fn mass(&self) -> &SymTridiagonal {
        &self.mass
    }

    pub fn stiffness(&self) -> &SymTridiagonal {
        &self.stiffness
    }

    /// `‖v‖_{L²} = (vᵀ M v)^{1/2}`.
    pub fn l2_norm(&self, v: &[f64]) -> f64 {
        self.mass.quadratic_form(v).max(0.0).sqrt()
    }

    /// `|v|_1 = (vᵀ S v)^{1/2}`.
    pub fn h1_seminorm(&self, v: &[f64]) -> f64 {
        self.stiffness.quadratic_form(v).max(0.0).sqrt()
    }

    /// Load vector `(f, hat_i)` of a truncated sine expansion, exact.
    pub fn load_from_field(&self, f: &SpectralField) -> Vec<f64> {
        (1..=self.dim())
            .map(|i| {
                f.coeffs()
                    .iter()
                    .enumerate()
                    .map(|(kk, c)| c * sine_hat_inner(kk + 1, i, self.mesh))
                    .sum()
            })
            .collect()
    }

    /// Load vector `(f, hat_i)` by Gauss quadrature on each element.
    pub fn load_from_fn<F: Fn(f64) -> f64>(&self, f: F, rule: &GaussLegendre) -> Vec<f64> {
        let mesh = self.mesh;
        (1..=self.dim())
            .map(|i| {
                let left =
                    rule.integrate(mesh.node(i - 1), mesh.node(i), |x| f(x) * mesh.hat(i, x));
                let right =
                    rule.integrate(mesh.node(i), mesh.node(i + 1), |x| f(x) * mesh.hat(i, x));
                left + right
            })
            .collect()
    }

    /// `P_h f`: solves `M c = load`.
    pub fn l2_project(&self, load: &[f64]) -> Vec<f64> {
        self.mass
            .solve(load)
            .expect("mass matrix is SPD for any uniform mesh")
    }

    pub fn l2_project_field(&self, f: &SpectralField) -> Vec<f64> {
        self.l2_project(&self.load_from_field(f))
    }

    /// `T_{E,h} f = −Δ_h^{-1} P_h f`: solves `S v = −load`.
    pub fn elliptic_solve(&self, load: &[f64]) -> Vec<f64> {
        let neg: Vec<f64> = load.iter().map(|v| -v).collect();
        self.stiffness
            .solve(&neg)
            .expect("stiffness matrix is SPD for any uniform mesh")
    }

    pub fn elliptic_solve_field(&self, f: &SpectralField) -> Vec<f64> {
        self.elliptic_solve(&self.load_from_field(f))
    }

    /// `‖f − v_h‖_{L²}` for a truncated sine field and a nodal vector, using
    /// exact sine-hat inner products.
    pub fn distance_to_field(&self, f: &SpectralField, v: &[f64]) -> f64 {
        let cross: f64 = self
            .load_from_field(f)
            .iter()
            .zip(v)
            .map(|(a, b)| a * b)
            .sum();
        let d2 = f.coeffs().iter().map(|c| c * c).sum::<f64>() - 2.0 * cross
            + self.mass.quadratic_form(v);
        d2.max(0.0).sqrt()
    }
}

/// `P_h f` for a truncated sine field on a mesh.
pub fn l2_project(f: &SpectralField, mesh: Mesh) -> Vec<f64> {
    assemble(mesh).l2_project_field(f)
}

/// `T_{E,h} f` for a truncated sine field on a mesh.
pub fn elliptic_solve_discrete(f: &SpectralField, mesh: Mesh) -> Vec<f64> {
    assemble(mesh).elliptic_solve_field(f)
}

/// `(ε_k, hat_i) = √2 (2 sin(λ_k x_i) − sin(λ_k x_{i−1}) − sin(λ_k x_{i+1})) / (h λ_k²)`.
///
/// Integrating by parts twice against `−sin(λx)/λ²` leaves only the jumps of
/// the hat's derivative at the three nodes.
pub fn sine_hat_inner(k: usize, i: usize, mesh: Mesh) -> f64 {
    let l = lambda(k);
    let s = |x: f64| (l * x).sin();
    SQRT_2 * (2.0 * s(mesh.node(i)) - s(mesh.node(i - 1)) - s(mesh.node(i + 1)))
        / (mesh.h() * l * l)
}

/// `∫_{D_j} hat_i` for the `j`-th of `J★` equal cells of (0, 1).
pub fn hat_cell_overlap(i: usize, j: usize, mesh: Mesh, j_star: usize) -> f64 {
    let dx = 1.0 / j_star as f64;
    let a = (j - 1) as f64 * dx;
    let b = if j == j_star { 1.0 } else { j as f64 * dx };
    hat_integral(mesh, i, a, b)
}

/// `∫_a^b hat_i` through the piecewise quadratic antiderivative.
pub fn hat_integral(mesh: Mesh, i: usize, a: f64, b: f64) -> f64 {
    let h = mesh.h();
    let xi = mesh.node(i);
    let antider = |x: f64| {
        let x = x.clamp(xi - h, xi + h);
        if x <= xi {
            let d = x - (xi - h);
            d * d / (2.0 * h)
        } else {
            let d = xi + h - x;
            h - d * d / (2.0 * h)
        }
    };
    antider(b) - antider(a)
}

/// Nonzero `(j, ∫_{D_j} hat_i)` for every interior node `i` (outer index `i-1`).
pub fn hat_cell_overlaps(mesh: Mesh, j_star: usize) -> Vec<Vec<(usize, f64)>> {
    let h = mesh.h();
    (1..=mesh.interior_nodes())
        .map(|i| {
            let lo = mesh.node(i) - h;
            let hi = mesh.node(i) + h;
            let j_lo = (lo * j_star as f64).floor() as usize + 1;
            let j_hi = ((hi * j_star as f64).ceil() as usize).min(j_star);
            (j_lo..=j_hi)
                .map(|j| (j, hat_cell_overlap(i, j, mesh, j_star)))
                .filter(|&(_, v)| v != 0.0)
                .collect()
        })
        .collect()
}

/// Generalized eigenpairs `S φ_p = ε_{h,p} M φ_p`, ascending, `M`-orthonormal.
#[derive(Debug, Clone)]
pub struct FemEigenBasis {
    values: Vec<f64>,
    /// Column `p` holds the nodal values of `φ_{p+1}`.
    vectors: DMatrix<f64>,
}

impl FemEigenBasis {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, p: usize) -> f64 {
        self.values[p - 1]
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    /// Nodal values of `φ_p` (1-based).
    pub fn vector(&self, p: usize) -> Vec<f64> {
        self.vectors.column(p - 1).iter().copied().collect()
    }

    /// `(v, φ_p)_{L²}` for every `p`, i.e. `Φᵀ M v`.
    pub fn coefficients(&self, system: &FemSystem, v: &[f64]) -> Vec<f64> {
        let mv = system.mass.matvec(v);
        (0..self.len())
            .map(|p| {
                self.vectors
                    .column(p)
                    .iter()
                    .zip(&mv)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// `Σ_p c_p φ_p` as nodal values.
    pub fn reconstruct(&self, coeffs: &[f64]) -> Vec<f64> {
        let n = self.vectors.nrows();
        let mut out = vec![0.0; n];
        for (p, c) in coeffs.iter().enumerate() {
            if *c == 0.0 {
                continue;
            }
            for (o, phi) in out.iter_mut().zip(self.vectors.column(p).iter()) {
                *o += c * phi;
            }
        }
        out
    }
}

/// Reduces `S φ = ε M φ` to a standard symmetric problem with the Cholesky
/// factor of the tridiagonal `M` and solves it densely.
pub fn generalized_eigen(system: &FemSystem) -> Result<FemEigenBasis> {
    let n = system.dim();
    let m = system.mass();
    // M = L Lᵀ with L lower bidiagonal.
    let mut ld = vec![0.0; n];
    let mut ls = vec![0.0; n.saturating_sub(1)];
    for i in 0..n {
        let d = m.diag[i] - if i > 0 { ls[i - 1] * ls[i - 1] } else { 0.0 };
        if !(d > 0.0) {
            return Err(Error::EigenConvergence(
                "mass matrix is not positive definite".into(),
            ));
        }
        ld[i] = d.sqrt();
        if i + 1 < n {
            ls[i] = m.off[i] / ld[i];
        }
    }
    let forward = |col: &mut [f64]| {
        for i in 0..n {
            let prev = if i > 0 { ls[i - 1] * col[i - 1] } else { 0.0 };
            col[i] = (col[i] - prev) / ld[i];
        }
    };
    // C = L⁻¹ S L⁻ᵀ
    let mut x = system.stiffness().to_dense();
    for mut c in x.column_iter_mut() {
        forward(c.as_mut_slice());
    }
    let mut c = x.transpose();
    for mut col in c.column_iter_mut() {
        forward(col.as_mut_slice());
    }
    let c = (&c + c.transpose()) * 0.5;

    let eig = SymmetricEigen::try_new(c, 1e-15, 10_000 + 100 * n).ok_or_else(|| {
        Error::EigenConvergence(format!("no convergence for {n}x{n} reduced problem"))
    })?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut values = Vec::with_capacity(n);
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(eig.eigenvalues[src]);
        // φ = L⁻ᵀ y
        let mut y: Vec<f64> = eig.eigenvectors.column(src).iter().copied().collect();
        for i in (0..n).rev() {
            let next = if i + 1 < n { ls[i] * y[i + 1] } else { 0.0 };
            y[i] = (y[i] - next) / ld[i];
        }
        // Fix the sign so that the first nonnegligible entry is positive.
        let pivot = y.iter().copied().find(|v| v.abs() > 1e-12).unwrap_or(1.0);
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for (i, v) in y.into_iter().enumerate() {
            vectors[(i, dst)] = sign * v;
        }
    }

    let basis = FemEigenBasis { values, vectors };
    for p in 1..=n {
        let phi = basis.vector(p);
        let lam = basis.value(p);
        if !(lam > 0.0) {
            return Err(Error::EigenConvergence(format!(
                "eigenvalue {p} is not positive ({lam})"
            )));
        }
        let sp = system.stiffness().matvec(&phi);
        let mp = system.mass().matvec(&phi);
        let res = sp
            .iter()
            .zip(&mp)
            .map(|(a, b)| (a - lam * b).powi(2))
            .sum::<f64>()
            .sqrt();
        if res > 1e-9 * lam.max(1.0) {
            return Err(Error::EigenConvergence(format!(
                "residual {res:e} for eigenpair {p}"
            )));
        }
    }
    Ok(basis)
}

/// `G_{k,p} = (ε_k, φ_p)` for `k ≤ K`, stored row-major in `k`.
pub fn sine_eigen_gram(basis: &FemEigenBasis, mesh: Mesh, truncation: usize) -> Vec<f64> {
    let nu = basis.len();
    let mut out = vec![0.0; truncation * nu];
    let mut shi = vec![0.0; nu];
    for k in 1..=truncation {
        for (i, s) in shi.iter_mut().enumerate() {
            *s = sine_hat_inner(k, i + 1, mesh);
        }
        let row = &mut out[(k - 1) * nu..k * nu];
        for (p, r) in row.iter_mut().enumerate() {
            *r = basis
                .vectors
                .column(p)
                .iter()
                .zip(&shi)
                .map(|(a, b)| a * b)
                .sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::CompositeRule;
    use crate::spectral;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn analytic_eigenvalue(p: usize, h: f64) -> f64 {
        let c = (p as f64 * PI * h).cos();
        6.0 / (h * h) * (1.0 - c) / (2.0 + c)
    }

    #[test]
    fn assembly_entries_for_quarter_mesh() {
        let s = FemSystem::new(4).unwrap();
        assert_eq!(s.dim(), 3);
        assert!((s.mass().diag[0] - 1.0 / 6.0).abs() < 1e-16);
        assert!((s.mass().off[0] - 1.0 / 24.0).abs() < 1e-16);
        assert_eq!(s.stiffness().diag[1], 8.0);
        assert_eq!(s.stiffness().off[1], -4.0);
        assert!(FemSystem::new(1).is_err());
    }

    #[test]
    fn stiffness_and_mass_positive_definite() {
        let s = FemSystem::new(13).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let x: Vec<f64> = (0..s.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert!(s.stiffness().quadratic_form(&x) > 0.0);
            assert!(s.mass().quadratic_form(&x) > 0.0);
        }
    }

    #[test]
    fn thomas_matches_dense_solve() {
        let s = FemSystem::new(9).unwrap();
        let a = s.mass().combine(1.0, s.stiffness(), 0.37);
        let rhs: Vec<f64> = (0..a.dim()).map(|i| (i as f64).sin() + 0.3).collect();
        let x = a.solve(&rhs).unwrap();
        let back = a.matvec(&x);
        for (u, v) in back.iter().zip(&rhs) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn sine_hat_inner_matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let rule = GaussLegendre::new(64);
        for _ in 0..200 {
            let mesh = Mesh::uniform(rng.random_range(2..40)).unwrap();
            let i = rng.random_range(1..=mesh.interior_nodes());
            let k = rng.random_range(1..60);
            let f = |x: f64| SQRT_2 * (k as f64 * PI * x).sin() * mesh.hat(i, x);
            let q = rule.integrate(mesh.node(i - 1), mesh.node(i), f)
                + rule.integrate(mesh.node(i), mesh.node(i + 1), f);
            let exact = sine_hat_inner(k, i, mesh);
            assert!((q - exact).abs() < 1e-12, "k={k} i={i}: {q} vs {exact}");
        }
    }

    #[test]
    fn sine_hat_inner_vanishes_by_symmetry() {
        // k = 4 on h = 1/4: sin(kπx) vanishes at every node and is odd about x_i.
        let mesh = Mesh::uniform(4).unwrap();
        for i in 1..=3 {
            assert!(sine_hat_inner(4, i, mesh).abs() < 1e-15);
        }
    }

    #[test]
    fn field_load_is_sum_of_sine_hat_inners() {
        let sys = FemSystem::new(6).unwrap();
        let f = SpectralField::new(vec![0.5, -1.0, 0.25]).unwrap();
        let load = sys.load_from_field(&f);
        for i in 1..=5 {
            let expect = 0.5 * sine_hat_inner(1, i, sys.mesh()) - sine_hat_inner(2, i, sys.mesh())
                + 0.25 * sine_hat_inner(3, i, sys.mesh());
            assert!((load[i - 1] - expect).abs() < 1e-15);
        }
        let q = sys.load_from_fn(|x| f.eval(x), &GaussLegendre::new(12));
        for (a, b) in load.iter().zip(&q) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn hat_overlaps() {
        let mesh = Mesh::uniform(5).unwrap();
        let rule = GaussLegendre::new(4);
        for j_star in [1usize, 3, 7, 10, 13] {
            for i in 1..=4 {
                let total: f64 = (1..=j_star)
                    .map(|j| hat_cell_overlap(i, j, mesh, j_star))
                    .sum();
                assert!((total - mesh.h()).abs() < 1e-15);
                let sparse: f64 = hat_cell_overlaps(mesh, j_star)[i - 1]
                    .iter()
                    .map(|p| p.1)
                    .sum();
                assert!((sparse - mesh.h()).abs() < 1e-15);
                for j in 1..=j_star {
                    let a = (j - 1) as f64 / j_star as f64;
                    let b = j as f64 / j_star as f64;
                    // split at the hat's kinks so the rule is exact
                    let mut cuts = vec![a, b];
                    for node in [i - 1, i, i + 1] {
                        let x = mesh.node(node);
                        if x > a && x < b {
                            cuts.push(x);
                        }
                    }
                    cuts.sort_by(f64::total_cmp);
                    let q: f64 = cuts
                        .windows(2)
                        .map(|w| rule.integrate(w[0], w[1], |x| mesh.hat(i, x)))
                        .sum();
                    assert!((q - hat_cell_overlap(i, j, mesh, j_star)).abs() < 1e-15);
                }
            }
        }
        // disjoint support
        assert_eq!(hat_cell_overlap(1, 10, mesh, 10), 0.0);
    }

    #[test]
    fn projection_reproduces_members_and_zero() {
        let sys = FemSystem::new(8).unwrap();
        let v: Vec<f64> = (1..=7).map(|i| (i as f64 * 0.7).cos()).collect();
        let mesh = sys.mesh();
        // exact load of a piecewise linear function: 4-point Gauss is exact
        // for quadratics on each element
        let load = sys.load_from_fn(|x| mesh.eval(&v, x), &GaussLegendre::new(4));
        let back = sys.l2_project(&load);
        for (a, b) in back.iter().zip(&v) {
            assert!((a - b).abs() < 1e-13);
        }
        let z = sys.l2_project_field(&SpectralField::zeros(3));
        assert!(z.iter().all(|&x| x == 0.0));
    }

    fn slope(hs: &[f64], errs: &[f64]) -> f64 {
        let n = hs.len() as f64;
        let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
        let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        sxy / sxx
    }

    #[test]
    fn projection_error_is_second_order() {
        let e1 = SpectralField::mode(1, 1);
        let rule = CompositeRule::new(8, 256);
        let mut hs = vec![];
        let mut errs = vec![];
        for j in [8usize, 16, 32, 64, 128] {
            let sys = FemSystem::new(j).unwrap();
            let p = sys.l2_project_field(&e1);
            let mesh = sys.mesh();
            let err = rule
                .integrate(0.0, 1.0, |x| (e1.eval(x) - mesh.eval(&p, x)).powi(2))
                .sqrt();
            // exact embedding agrees with quadrature
            assert!((err - sys.distance_to_field(&e1, &p)).abs() < 1e-9);
            hs.push(mesh.h());
            errs.push(err);
        }
        assert!(slope(&hs, &errs) >= 1.9, "slope {}", slope(&hs, &errs));
    }

    #[test]
    fn elliptic_solve_nodal_exactness_for_constant_load() {
        let sys = FemSystem::new(10).unwrap();
        let mesh = sys.mesh();
        let load = sys.load_from_fn(|_| 1.0, &GaussLegendre::new(2));
        let v = sys.elliptic_solve(&load);
        for (i, vi) in v.iter().enumerate() {
            let x = mesh.node(i + 1);
            assert!((vi - 0.5 * (x * x - x)).abs() < 1e-12);
        }
    }

    #[test]
    fn elliptic_solve_error_is_second_order_and_symmetric() {
        let e1 = SpectralField::mode(1, 1);
        let exact = spectral::elliptic_inverse(&e1);
        let mut hs = vec![];
        let mut errs = vec![];
        let mut h1 = vec![];
        for j in [8usize, 16, 32, 64, 128] {
            let sys = FemSystem::new(j).unwrap();
            let v = sys.elliptic_solve_field(&e1);
            errs.push(sys.distance_to_field(&exact, &v));
            hs.push(sys.mesh().h());
            h1.push(sys.h1_seminorm(&v) + sys.l2_norm(&v));
        }
        assert!(slope(&hs, &errs) >= 1.9);
        // H¹ stability: bounded uniformly in h
        let bound = 1.0 / PI; // ‖T_E ε_1‖_1 ≈ |T_E ε_1|_1 + ‖·‖ = 1/π + 1/π²
        assert!(h1.iter().all(|&v| v < 2.0 * bound));

        let sys = FemSystem::new(17).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let f =
                SpectralField::new((0..25).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let g =
                SpectralField::new((0..25).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let tf = sys.elliptic_solve_field(&f);
            let tg = sys.elliptic_solve_field(&g);
            let a: f64 = sys
                .load_from_field(&f)
                .iter()
                .zip(&tg)
                .map(|(x, y)| x * y)
                .sum();
            let b: f64 = sys
                .load_from_field(&g)
                .iter()
                .zip(&tf)
                .map(|(x, y)| x * y)
                .sum();
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn eigenpairs_satisfy_invariants() {
        for j in [2usize, 3, 8, 33, 64] {
            let sys = FemSystem::new(j).unwrap();
            let basis = generalized_eigen(&sys).unwrap();
            let n = sys.dim();
            assert_eq!(basis.len(), n);
            let h = sys.mesh().h();
            for p in 1..=n {
                let phi = basis.vector(p);
                let lam = basis.value(p);
                assert!(lam > 0.0);
                if p > 1 {
                    assert!(lam >= basis.value(p - 1));
                }
                let sp = sys.stiffness().matvec(&phi);
                let mp = sys.mass().matvec(&phi);
                let res: f64 = sp
                    .iter()
                    .zip(&mp)
                    .map(|(a, b)| (a - lam * b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(res <= 1e-10 * lam, "j={j} p={p} res={res}");
                assert!((lam / analytic_eigenvalue(p, h) - 1.0).abs() < 1e-10);
                for q in 1..=n {
                    let psi = basis.vector(q);
                    let mij = sys.mass().bilinear(&phi, &psi);
                    let sij = sys.stiffness().bilinear(&phi, &psi);
                    let d = if p == q { 1.0 } else { 0.0 };
                    assert!((mij - d).abs() < 1e-10);
                    assert!((sij - d * lam).abs() < 1e-9 * lam.max(1.0));
                }
            }
        }
    }

    #[test]
    fn smallest_eigenvalue_approaches_pi_squared() {
        let sys = FemSystem::new(64).unwrap();
        let basis = generalized_eigen(&sys).unwrap();
        assert!((basis.value(1) / (PI * PI) - 1.0).abs() < 0.01);
        // direct dense route: eigenvalues of M⁻¹S via nalgebra's general solver
        let m = sys.mass().to_dense();
        let s = sys.stiffness().to_dense();
        let a = m.try_inverse().unwrap() * s;
        let mut ev: Vec<f64> = a.complex_eigenvalues().iter().map(|c| c.re).collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] - basis.value(1)).abs() < 1e-8 * basis.value(1));
    }

    #[test]
    fn eigen_expansion_reconstructs_vectors_and_green_symmetry() {
        let sys = FemSystem::new(12).unwrap();
        let basis = generalized_eigen(&sys).unwrap();
        let v: Vec<f64> = (0..11).map(|i| ((i * i) as f64 * 0.3).sin()).collect();
        let back = basis.reconstruct(&basis.coefficients(&sys, &v));
        for (a, b) in back.iter().zip(&v) {
            assert!((a - b).abs() < 1e-10);
        }
        let dtau = 0.01;
        let mesh = sys.mesh();
        let g = |x: f64, y: f64| -> f64 {
            (1..=basis.len())
                .map(|p| {
                    let phi = basis.vector(p);
                    mesh.eval(&phi, x) * mesh.eval(&phi, y) / (1.0 + 0.5 * dtau * basis.value(p))
                })
                .sum()
        };
        for &(x, y) in &[(0.1, 0.8), (0.33, 0.47), (0.9, 0.05)] {
            assert!((g(x, y) - g(y, x)).abs() < 1e-12);
        }
    }
}
