//! Sine eigenbasis of the Dirichlet Laplacian on (0, 1).
//!
//! Mode `k` is `ε_k(x) = √2 sin(kπx)` with `-ε_k'' = λ_k² ε_k`, `λ_k = kπ`.
//! A [`SpectralField`] stores the first `K` coefficients of a function in this
//! orthonormal basis, so every norm and operator below is exact on the
//! truncated representation.
//!
//! Series are summed in increasing `k`. The terms used in this crate decay
//! monotonically and the sums stay well inside double precision at the sizes
//! we run, so no compensated summation is done.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};

/// Default tolerance for the tail rule in [`truncation_for_tolerance`].
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-8;

/// Hard cap on truncation levels chosen by the tail rule.
pub const DEFAULT_TRUNCATION_CAP: u64 = 1 << 27;

/// A sine mode: index `k ≥ 1` and `λ_k = kπ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralMode {
    k: usize,
}

impl SpectralMode {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("mode index must be >= 1".into()));
        }
        Ok(Self { k })
    }

    pub fn index(self) -> usize {
        self.k
    }

    /// `λ_k = kπ`.
    pub fn lambda(self) -> f64 {
        lambda(self.k)
    }

    /// `λ_k²`, the eigenvalue of `-∂²`.
    pub fn eigenvalue(self) -> f64 {
        let l = self.lambda();
        l * l
    }

    pub fn eval(self, x: f64) -> f64 {
        SQRT_2 * (self.lambda() * x).sin()
    }
}

#[inline]
pub fn lambda(k: usize) -> f64 {
    k as f64 * PI
}

#[inline]
pub fn lambda_sq(k: usize) -> f64 {
    let l = lambda(k);
    l * l
}

/// Exponent `s` of the spectral Sobolev scale `Ḣ^s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HdotIndex(pub f64);

/// Truncated sine expansion `Σ_{k≤K} c_k ε_k`. Coefficient `k` lives at index `k-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidParameter(
                "a spectral field needs at least one mode".into(),
            ));
        }
        Ok(Self { coeffs })
    }

    pub fn zeros(k: usize) -> Self {
        assert!(k >= 1);
        Self {
            coeffs: vec![0.0; k],
        }
    }

    /// The single mode `ε_k`, truncated at `k_max ≥ k`.
    pub fn mode(k: usize, k_max: usize) -> Self {
        assert!(k >= 1 && k <= k_max);
        let mut f = Self::zeros(k_max);
        f.coeffs[k - 1] = 1.0;
        f
    }

    pub fn truncation(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// Coefficient of mode `k` (1-based); zero beyond the truncation.
    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k - 1).copied().unwrap_or(0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * SQRT_2 * (lambda(i + 1) * x).sin())
            .sum()
    }

    /// `‖f‖_{L²}` by Parseval.
    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    /// `self - other`, padded to the larger truncation.
    pub fn sub(&self, other: &Self) -> Self {
        let k = self.truncation().max(other.truncation());
        let coeffs = (1..=k).map(|i| self.coeff(i) - other.coeff(i)).collect();
        Self { coeffs }
    }

    pub fn add(&self, other: &Self) -> Self {
        let k = self.truncation().max(other.truncation());
        let coeffs = (1..=k).map(|i| self.coeff(i) + other.coeff(i)).collect();
        Self { coeffs }
    }

    /// Applies `−∂²` mode by mode (multiplies coefficient `k` by `λ_k²`).
    pub fn neg_laplacian(&self) -> Self {
        Self {
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| lambda_sq(i + 1) * c)
                .collect(),
        }
    }
}

/// `ε_k(x) = √2 sin(kπx)` for `x ∈ [0, 1]`.
pub fn eigenfunction_eval(k: usize, x: f64) -> Result<f64> {
    let mode = SpectralMode::new(k)?;
    check_unit_interval("x", x)?;
    Ok(mode.eval(x))
}

pub(crate) fn check_unit_interval(what: &'static str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain {
            what,
            value: x,
            domain: "[0, 1]",
        })
    }
}

/// Heat semigroup `S(t)`: coefficient `k` is damped by `e^{-λ_k² t}`.
pub fn semigroup_apply(t: f64, f: &SpectralField) -> Result<SpectralField> {
    if !(t >= 0.0) {
        return Err(Error::Domain {
            what: "t",
            value: t,
            domain: "[0, ∞)",
        });
    }
    let coeffs = f
        .coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| (-lambda_sq(i + 1) * t).exp() * c)
        .collect();
    Ok(SpectralField { coeffs })
}

/// Partial sum `Σ_{k≤K} e^{-λ_k² t} ε_k(x) ε_k(y)` of the Dirichlet heat kernel.
pub fn green_kernel_eval(t: f64, x: f64, y: f64, truncation: usize) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain {
            what: "t",
            value: t,
            domain: "(0, ∞)",
        });
    }
    check_unit_interval("x", x)?;
    check_unit_interval("y", y)?;
    if truncation == 0 {
        return Err(Error::InvalidParameter("truncation must be >= 1".into()));
    }
    let mut sum = 0.0;
    for k in 1..=truncation {
        let l = lambda(k);
        sum += 2.0 * (-l * l * t).exp() * (l * x).sin() * (l * y).sin();
    }
    Ok(sum)
}

/// `‖f‖_{Ḣ^s} = (Σ λ_k^{2s} c_k²)^{1/2}`.
pub fn hdot_norm(f: &SpectralField, s: HdotIndex) -> f64 {
    f.coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| lambda(i + 1).powf(2.0 * s.0) * c * c)
        .sum::<f64>()
        .sqrt()
}

/// Solution of `v'' = f`, `v(0) = v(1) = 0`: coefficient `k` is `-c_k / λ_k²`.
pub fn elliptic_inverse(f: &SpectralField) -> SpectralField {
    SpectralField {
        coeffs: f
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| -c / lambda_sq(i + 1))
            .collect(),
    }
}

/// Analytic bound on `Σ_{k>K} λ_k^{-p}` with `p = 1 + ν/2`:
/// `∫_K^∞ (πx)^{-p} dx = π^{-p} K^{1-p} / (p-1)`.
pub fn tail_bound(truncation: u64, nu: f64) -> f64 {
    let p = 1.0 + 0.5 * nu;
    1.0 / ((p - 1.0) * PI.powf(p) * (truncation as f64).powf(p - 1.0))
}

/// Smallest `K ≥ 1` whose analytic tail bound [`tail_bound`] is at most `tol`.
///
/// `ν ∈ (0, 2]` selects the summed power `λ_k^{-(1+ν/2)}`; `ν = 2` is the
/// plain `Σ λ_k^{-2} ≤ 1/(π² K)` rule.
pub fn truncation_for_tolerance(tol: f64, nu: f64, cap: u64) -> Result<u64> {
    if !(tol > 0.0) {
        return Err(Error::Domain {
            what: "tol",
            value: tol,
            domain: "(0, ∞)",
        });
    }
    if !(nu > 0.0 && nu <= 2.0) {
        return Err(Error::Domain {
            what: "nu",
            value: nu,
            domain: "(0, 2]",
        });
    }
    let p = 1.0 + 0.5 * nu;
    // Compare with a relative slack of a few ulps so that tolerances built from
    // the bound itself land on the intended K.
    let ok = |k: u64| tail_bound(k, nu) <= tol * (1.0 + 1e-12);
    let guess = (1.0 / ((p - 1.0) * PI.powf(p) * tol)).powf(1.0 / (p - 1.0));
    if !guess.is_finite() || guess > cap as f64 * 2.0 {
        return Err(Error::TruncationCap {
            needed: if guess.is_finite() {
                guess as u64
            } else {
                u64::MAX
            },
            cap,
        });
    }
    let mut k = (guess.ceil() as u64).max(1);
    while k > 1 && ok(k - 1) {
        k -= 1;
    }
    while !ok(k) {
        k += 1;
    }
    if k > cap {
        return Err(Error::TruncationCap { needed: k, cap });
    }
    Ok(k)
}

/// Truncation picked by the default tail rule (`tol = 1e-8`, `ν = 2`).
pub fn default_truncation() -> u64 {
    truncation_for_tolerance(DEFAULT_TAIL_TOLERANCE, 2.0, DEFAULT_TRUNCATION_CAP)
        .expect("default tolerance is within the cap")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::CompositeRule;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(rng: &mut ChaCha8Rng, k: usize) -> SpectralField {
        SpectralField::new((0..k).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn eigenfunction_values() {
        assert_eq!(eigenfunction_eval(1, 0.0).unwrap(), 0.0);
        assert!((eigenfunction_eval(2, 0.25).unwrap() - SQRT_2).abs() < 1e-15);
        assert!((eigenfunction_eval(1, 0.5).unwrap() - SQRT_2).abs() < 1e-15);
        assert!(eigenfunction_eval(1, 1.5).is_err());
        assert!(eigenfunction_eval(0, 0.5).is_err());
    }

    #[test]
    fn mode_lambda_is_k_pi() {
        let m = SpectralMode::new(7).unwrap();
        assert_eq!(m.lambda(), 7.0 * PI);
    }

    #[test]
    fn semigroup_identity_mode_and_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_field(&mut rng, 20);
        assert_eq!(semigroup_apply(0.0, &f).unwrap(), f);

        let e1 = SpectralField::mode(1, 4);
        let g = semigroup_apply(0.3, &e1).unwrap();
        assert!((g.coeff(1) - (-PI * PI * 0.3).exp()).abs() < 1e-15);
        assert_eq!(&g.coeffs()[1..], &[0.0, 0.0, 0.0]);

        let a = semigroup_apply(0.01, &semigroup_apply(0.02, &f).unwrap()).unwrap();
        let b = semigroup_apply(0.03, &f).unwrap();
        for (x, y) in a.coeffs().iter().zip(b.coeffs()) {
            assert!((x - y).abs() <= 1e-12 * y.abs());
        }
        assert!(semigroup_apply(-1.0, &f).is_err());
    }

    #[test]
    fn green_kernel_symmetry_and_errors() {
        let a = green_kernel_eval(0.01, 0.2, 0.7, 50).unwrap();
        let b = green_kernel_eval(0.01, 0.7, 0.2, 50).unwrap();
        assert!((a - b).abs() < 1e-15);
        assert!(green_kernel_eval(0.0, 0.2, 0.7, 50).is_err());
        assert!(green_kernel_eval(0.1, -0.2, 0.7, 50).is_err());
    }

    #[test]
    fn green_kernel_reproduces_semigroup_on_first_mode() {
        // ∫ G_t(x,y) ε_1(y) dy by quadrature against e^{-π² t} ε_1(x).
        let t = 0.002;
        let rule = CompositeRule::standard();
        for &x in &[0.1, 0.37, 0.5, 0.9] {
            let q = rule.integrate(0.0, 1.0, |y| {
                green_kernel_eval(t, x, y, 400).unwrap() * SQRT_2 * (PI * y).sin()
            });
            let exact = (-PI * PI * t).exp() * SQRT_2 * (PI * x).sin();
            assert!((q - exact).abs() < 1e-10, "x={x}: {q} vs {exact}");
        }
    }

    #[test]
    fn green_kernel_at_t1_dominated_by_first_term() {
        let v = green_kernel_eval(1.0, 0.5, 0.5, 1000).unwrap();
        let first = 2.0 * (-PI * PI).exp();
        // Numerically evaluated tail: only odd k ≥ 3 survive at x = y = 1/2.
        let tail: f64 = (2..60)
            .map(|k| 2.0 * (-lambda_sq(k)).exp() * (lambda(k) * 0.5).sin().powi(2))
            .sum();
        assert!(tail < 2.0 * (-4.0 * PI * PI).exp());
        assert!((v - first - tail).abs() < 1e-300 + 1e-15 * first);
    }

    #[test]
    fn hdot_norm_examples() {
        let e1 = SpectralField::mode(1, 3);
        let e2 = SpectralField::mode(2, 3);
        assert!((hdot_norm(&e1, HdotIndex(0.0)) - 1.0).abs() < 1e-15);
        assert!((hdot_norm(&e1, HdotIndex(1.0)) - PI).abs() < 1e-14);
        assert!((hdot_norm(&e2, HdotIndex(-1.0)) - 1.0 / (2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn elliptic_inverse_examples() {
        let e1 = SpectralField::mode(1, 2);
        let v = elliptic_inverse(&e1);
        assert!((v.coeff(1) + 1.0 / (PI * PI)).abs() < 1e-16);
        assert_eq!(v.coeff(2), 0.0);
        assert_eq!(
            elliptic_inverse(&SpectralField::zeros(5)),
            SpectralField::zeros(5)
        );

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a = random_field(&mut rng, 30);
            let b = random_field(&mut rng, 30);
            let lhs = a.dot(&elliptic_inverse(&b));
            let rhs = elliptic_inverse(&a).dot(&b);
            assert!((lhs - rhs).abs() < 1e-14);
        }
    }

    #[test]
    fn truncation_rule_examples() {
        let tol = 1.0 / (PI * PI * 100.0);
        assert_eq!(truncation_for_tolerance(tol, 2.0, 1 << 20).unwrap(), 100);
        assert_eq!(truncation_for_tolerance(1e6, 2.0, 1 << 20).unwrap(), 1);
        assert!(matches!(
            truncation_for_tolerance(1e-12, 2.0, 1 << 20),
            Err(Error::TruncationCap { .. })
        ));
        assert!(truncation_for_tolerance(0.0, 2.0, 10).is_err());
        assert!(truncation_for_tolerance(0.1, 0.0, 10).is_err());
    }

    #[test]
    fn truncation_rule_against_direct_tail_sum() {
        // Direct summation out to 10^7 terms plus the integral remainder.
        for &(tol, nu) in &[(1e-3, 2.0), (1e-4, 2.0), (1e-2, 1.0), (5e-2, 0.5)] {
            let k = truncation_for_tolerance(tol, nu, 1 << 30).unwrap();
            let p = 1.0 + 0.5 * nu;
            let n_direct = 10_000_000u64;
            let direct: f64 = (k + 1..=n_direct)
                .rev()
                .map(|i| lambda(i as usize).powf(-p))
                .sum::<f64>()
                + tail_bound(n_direct, nu);
            assert!(direct <= tol, "tol={tol} nu={nu} K={k} tail={direct}");
            if k > 1 {
                assert!(tail_bound(k - 1, nu) > tol);
            }
        }
    }

    #[test]
    fn parseval_against_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rule = CompositeRule::standard();
        for k in [1usize, 7, 31, 64] {
            let f = random_field(&mut rng, k);
            let q = rule.integrate(0.0, 1.0, |x| f.eval(x).powi(2)).sqrt();
            assert!((q - f.l2_norm()).abs() < 1e-12 * f.l2_norm().max(1.0));
            assert_eq!(hdot_norm(&f, HdotIndex(0.0)), f.l2_norm());
        }
    }

    proptest! {
        #[test]
        fn semigroup_is_a_contraction(
            coeffs in prop::collection::vec(-10.0f64..10.0, 1..40),
            t in 0.0f64..2.0,
        ) {
            let f = SpectralField::new(coeffs).unwrap();
            let g = semigroup_apply(t, &f).unwrap();
            prop_assert!(g.l2_norm() <= f.l2_norm() * (1.0 + 1e-15));
        }

        #[test]
        fn elliptic_inverse_then_second_derivative_is_identity(
            coeffs in prop::collection::vec(-10.0f64..10.0, 1..40),
        ) {
            let f = SpectralField::new(coeffs).unwrap();
            // v'' = -(-∂² v)
            let back = elliptic_inverse(&f).neg_laplacian().scaled(-1.0);
            for (a, b) in back.coeffs().iter().zip(f.coeffs()) {
                prop_assert!((a - b).abs() <= 1e-13 * b.abs().max(1.0));
            }
        }
    }
}
