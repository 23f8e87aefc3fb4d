use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use res_scan_core::gpr::Grid;
use res_scan_core::reservoir::{
    assemble_regression, build_reservoir, fit_patch, fit_readout, iterate_hidden_states,
    solve_ridge, spectral_radius, ReservoirConfig, ReservoirWeights,
};

fn oracle_radius(m: &[f64], n: usize) -> f64 {
    DMatrix::from_row_slice(n, n, m)
        .complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}

#[test]
fn built_reservoirs_hit_requested_radius() {
    for (i, &n) in [1usize, 2, 3, 5, 8, 13, 30, 64, 100].iter().enumerate() {
        for rho in [0.5, 0.9, 0.99] {
            let w = build_reservoir(&ReservoirConfig {
                n,
                rho,
                seed: 100 + i as u64,
                ..ReservoirConfig::default()
            })
            .unwrap();
            for m in [w.wx(), w.wy()] {
                let r = oracle_radius(m, n);
                assert!((r - rho).abs() < 1e-6, "n={n} rho={rho}: oracle radius {r}");
            }
        }
    }
}

#[test]
fn spectral_radius_matches_eigen_oracle_on_random_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..40 {
        let n = rng.random_range(2..=40);
        let m: Vec<f64> = (0..n * n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let ours = spectral_radius(&m, n).unwrap();
        let oracle = oracle_radius(&m, n);
        assert!((ours - oracle).abs() <= 1e-9 * oracle.max(1.0), "trial {trial} n={n}: {ours} vs {oracle}");
    }
}

/// Direct recursive evaluation of the recurrence, one scalar at a time.
fn hand_state(p: &Grid, w: &ReservoirWeights, x: isize, y: isize) -> Vec<f64> {
    let n = w.n();
    if x < 0 || y < 0 {
        return vec![0.0; n];
    }
    let left = hand_state(p, w, x - 1, y);
    let up = hand_state(p, w, x, y - 1);
    let u = p.get(x as usize, y as usize);
    let mut h = vec![0.0; n];
    for i in 0..n {
        let mut acc = w.win()[i] * u;
        for j in 0..n {
            acc += w.wx()[i * n + j] * left[j];
        }
        for j in 0..n {
            acc += w.wy()[i * n + j] * up[j];
        }
        h[i] = acc.tanh();
    }
    h
}

#[test]
fn hidden_states_match_hand_unrolled_recurrence() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let start = Instant::now();
    for _ in 0..120 {
        let n = rng.random_range(1..=3);
        let (pw, ph) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let w = build_reservoir(&ReservoirConfig {
            n,
            rho: rng.random_range(0.1..0.99),
            input_scale: rng.random_range(0.2..2.0),
            seed: rng.random(),
            ..ReservoirConfig::default()
        })
        .unwrap();
        let patch = Grid::from_fn(pw, ph, |_, _| rng.random_range(-1.0..1.0));
        let states = iterate_hidden_states(&patch, &w);
        for y in 0..ph {
            for x in 0..pw {
                let expect = hand_state(&patch, &w, x as isize, y as isize);
                for (a, b) in states.state(x, y).iter().zip(&expect) {
                    assert!((a - b).abs() <= 1e-12, "({x},{y}): {a} vs {b}");
                }
            }
        }
    }
    assert!(start.elapsed().as_secs_f64() < 1.0);
}

fn ridge_oracle(h: &[f64], rows: usize, cols: usize, u: &[f64], lambda: f64) -> DVector<f64> {
    let hm = DMatrix::from_row_slice(rows, cols, h);
    let um = DVector::from_column_slice(u);
    let gram = hm.transpose() * &hm + DMatrix::identity(cols, cols) * (lambda * lambda);
    gram.lu().solve(&(hm.transpose() * um)).unwrap()
}

#[test]
fn ridge_matches_dense_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..50 {
        let cols = rng.random_range(1..=25);
        let rows = rng.random_range(1..=80);
        let lambda = 10f64.powf(rng.random_range(-3.0..1.0));
        let h: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        let u: Vec<f64> = (0..rows).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ours = solve_ridge(&h, rows, cols, &u, lambda).unwrap();
        let oracle = ridge_oracle(&h, rows, cols, &u, lambda);
        let err: f64 = ours.iter().zip(oracle.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = oracle.norm().max(1e-300);
        assert!(err / scale < 1e-8, "trial {trial}: relative error {}", err / scale);
    }
}

#[test]
fn fit_readout_matches_oracle_on_real_patches() {
    let w = build_reservoir(&ReservoirConfig { n: 10, ..ReservoirConfig::default() }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let patch = Grid::from_fn(9, 7, |_, _| rng.random_range(-1.0..1.0));
        let reg = assemble_regression(&iterate_hidden_states(&patch, &w), &patch).unwrap();
        let f = fit_readout(&reg, 0.05).unwrap();
        let oracle = ridge_oracle(&reg.design, reg.rows, reg.cols, &reg.targets, 0.05);
        for (a, b) in f.as_vector().iter().zip(oracle.iter()) {
            assert!((a - b).abs() <= 1e-8 * oracle.norm());
        }
    }
}

#[test]
fn ridge_solution_is_a_local_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (rows, cols, lambda) = (40, 9, 0.3);
    let h: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    let u: Vec<f64> = (0..rows).map(|_| rng.random_range(-1.0..1.0)).collect();
    let objective = |w: &[f64]| -> f64 {
        let fit: f64 = (0..rows)
            .map(|r| {
                let p: f64 = (0..cols).map(|c| h[r * cols + c] * w[c]).sum();
                (p - u[r]).powi(2)
            })
            .sum();
        fit + lambda * lambda * w.iter().map(|v| v * v).sum::<f64>()
    };
    let best = solve_ridge(&h, rows, cols, &u, lambda).unwrap();
    let j0 = objective(&best);
    for _ in 0..200 {
        let probe: Vec<f64> = best.iter().map(|v| v + rng.random_range(-1e-3..1e-3)).collect();
        assert!(objective(&probe) > j0);
    }
}

#[test]
fn transposed_patch_with_swapped_weights_transposes_states() {
    let w = build_reservoir(&ReservoirConfig { n: 6, seed: 4, ..ReservoirConfig::default() }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let patch = Grid::from_fn(7, 5, |_, _| rng.random_range(-1.0..1.0));
    let a = iterate_hidden_states(&patch, &w);
    let b = iterate_hidden_states(&patch.transpose(), &w.swapped());
    for y in 0..5 {
        for x in 0..7 {
            for (p, q) in a.state(x, y).iter().zip(b.state(y, x)) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn influence_of_one_input_fades_along_a_row() {
    let w = build_reservoir(&ReservoirConfig { n: 20, rho: 0.9, seed: 2, ..ReservoirConfig::default() }).unwrap();
    let base = Grid::from_fn(80, 1, |x, _| ((x * 7) % 5) as f64 * 0.2 - 0.4);
    let mut kicked = base.clone();
    kicked.set(0, 0, base.get(0, 0) + 0.5);
    let (a, b) = (iterate_hidden_states(&base, &w), iterate_hidden_states(&kicked, &w));
    let diff = |x: usize| -> f64 {
        a.state(x, 0).iter().zip(b.state(x, 0)).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
    };
    assert!(diff(0) > 0.0);
    assert!(diff(79) < 1e-3 * diff(1));
}

#[test]
fn constant_patch_feature_is_deterministic_and_finite() {
    let w = build_reservoir(&ReservoirConfig { n: 5, ..ReservoirConfig::default() }).unwrap();
    let patch = Grid::filled(6, 6, 0.25);
    let f1 = fit_patch(&patch, &w, 0.01).unwrap();
    let f2 = fit_patch(&patch, &w, 0.01).unwrap();
    assert_eq!(f1, f2);
    assert_eq!(f1.as_vector().len(), 11);
    assert!(f1.as_vector().iter().all(|v| v.is_finite()));
}
