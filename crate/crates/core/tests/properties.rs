use proptest::prelude::*;
use sheq_core::deterministic::amplification;
use sheq_core::error_lab::{sdr_error_exact, tdr_error_exact, total_error_exact};
use sheq_core::fem::generalized_eigen;
use sheq_core::noise::{GridDims, NoiseGrid};
use sheq_core::spectral::lambda_sq;
use sheq_core::stochastic::{cn_time_discrete, coefficient_map, Observable, StochasticLoad};
use sheq_core::FemSystem;

/// E[(Σ f R)²] = ΔtΔx Σ f² for independent N(0, ΔtΔx) increments.
#[test]
fn increments_satisfy_ito_isometry() {
    let dims = GridDims::new(3, 4, 0.5).unwrap();
    let f: Vec<f64> = (0..12).map(|i| ((i as f64) * 0.9).sin() + 0.2).collect();
    let samples = 10_000u64;
    let vals: Vec<f64> = (0..samples)
        .map(|s| {
            let g = NoiseGrid::sample_dims(dims, 1000 + s);
            g.increments()
                .values()
                .iter()
                .zip(&f)
                .map(|(r, c)| r * c)
                .sum::<f64>()
                .powi(2)
        })
        .collect();
    let n = samples as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let exact = dims.cell_area() * f.iter().map(|c| c * c).sum::<f64>();
    assert!((mean - exact).abs() <= 3.0 * se, "{mean} vs {exact} ± {se}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn spectral_cn_is_its_duhamel_sum(
        n_star in 1usize..9, j_star in 1usize..7, steps in 1usize..12, seed in any::<u64>()
    ) {
        let g = NoiseGrid::sample(n_star, j_star, 1.0, seed).unwrap();
        let k = 10;
        let traj = cn_time_discrete(&g, k, steps).unwrap();
        let load = StochasticLoad::spectral(&g, k, steps).unwrap();
        let dtau = 1.0 / steps as f64;
        for kk in 1..=k {
            let duhamel: f64 = (1..=steps)
                .map(|ell| amplification(lambda_sq(kk), steps - ell + 1, dtau) * load.step(ell)[kk - 1])
                .sum();
            prop_assert!((traj.last().coeff(kk) - duhamel).abs() < 1e-12);
        }
    }

    #[test]
    fn maps_agree_with_direct_fem_solver(
        n_star in 1usize..8, j_star in 1usize..9, steps in 1usize..8, intervals in 2usize..10,
        seed in any::<u64>()
    ) {
        let dims = GridDims::new(n_star, j_star, 1.0).unwrap();
        let g = NoiseGrid::sample_dims(dims, seed);
        let obs = Observable::FemDiscrete { m: steps, steps, intervals };
        let map = coefficient_map(obs, dims).unwrap();
        let via_map = map.value(&map.apply(&g).unwrap()).unwrap();
        let direct = obs.evaluate(&g).unwrap();
        prop_assert!(via_map.distance_sq(&direct).unwrap().sqrt() < 1e-10);
    }

    #[test]
    fn total_error_obeys_triangle_inequality(
        n_star in 1usize..10, j_star in 1usize..10, steps in 1usize..10, intervals in 2usize..12
    ) {
        let dims = GridDims::new(n_star, j_star, 1.0).unwrap();
        let system = FemSystem::new(intervals).unwrap();
        let basis = generalized_eigen(&system).unwrap();
        let k = 64;
        let tdr = tdr_error_exact(steps, dims, steps, k).unwrap().value;
        let sdr = sdr_error_exact(steps, dims, steps, &system, &basis, k).unwrap().value;
        let total = total_error_exact(steps, dims, steps, &system, &basis, k).unwrap().value;
        prop_assert!(total <= (tdr + sdr) * (1.0 + 1e-12));
    }

    #[test]
    fn coarsening_preserves_total_increment(
        n_coarse in 1usize..5, j_coarse in 1usize..5, tf in 1usize..4, sf in 1usize..4,
        seed in any::<u64>()
    ) {
        let fine = NoiseGrid::sample(n_coarse * tf, j_coarse * sf, 1.0, seed).unwrap();
        let coarse = fine.coarsen(tf, sf).unwrap();
        let total_fine: f64 = fine.increments().values().iter().sum();
        let total_coarse: f64 = coarse.increments().values().iter().sum();
        prop_assert!((total_fine - total_coarse).abs() < 1e-12);
    }
}
