mod common;

use common::*;
use rand::Rng;
use wgom::estimation::{ideal_rmsp, ideal_scgoma, rmsp, scgoma};
use wgom::evaluation::{align_columns, hamming_error_with, relative_error_with, AlignmentStrategy};
use wgom::selection::{FuzzyModularity, ModularityDecomposition};
use wgom::{
    fuzzy_weighted_modularity, hamming_error, relative_error, sample_response, successive_projection,
    top_k_svd, DMatrix, DistributionSpec, ItemParams, MembershipMatrix, ModelSpec, ResponseMatrix,
    SvdOptions,
};

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    jacobi_svd(m).1[0]
}

#[test]
fn jacobi_oracle_reconstructs() {
    let mut g = rng(1);
    let m = uniform_matrix(&mut g, 7, 4, -1.0, 1.0);
    let (u, s, v) = jacobi_svd(&m);
    let back = &u * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(s.clone())) * v.transpose();
    assert!((back - &m).norm() < 1e-12);
    assert!(s.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn dense_svd_matches_oracle_and_eckart_young() {
    let mut g = rng(2);
    for case in 0..12 {
        let n = g.random_range(5..=100);
        let j = g.random_range(5..=100);
        let m = uniform_matrix(&mut g, n, j, -1.0, 1.0);
        let k = g.random_range(1..=n.min(j).min(10));
        let svd = top_k_svd(&m, k).unwrap();
        let (_, s_ref, _) = jacobi_svd(&m);
        for (a, b) in svd.singular_values().iter().zip(&s_ref) {
            assert!((a - b).abs() <= 1e-10 * s_ref[0], "case {case}: {a} vs {b}");
        }
        let residual = spectral_norm(&(&m - svd.reconstruct()));
        let bound = s_ref.get(k).copied().unwrap_or(0.0) + 1e-8 * s_ref[0];
        assert!(residual <= bound, "case {case}: {residual} > {bound}");
        let eye = DMatrix::<f64>::identity(k, k);
        assert!((svd.left().transpose() * svd.left() - &eye).amax() < 1e-8);
        assert!((svd.right().transpose() * svd.right() - &eye).amax() < 1e-8);
    }
}

#[test]
fn randomized_svd_on_decaying_spectrum() {
    let mut g = rng(3);
    let spectrum: Vec<f64> = (0..60).map(|i| 0.7f64.powi(i)).collect();
    let m = with_spectrum(&mut g, 100, 80, &spectrum);
    let svd = wgom::linalg::top_k_svd_with(&m, 5, &SvdOptions::randomized(9)).unwrap();
    for (a, b) in svd.singular_values().iter().zip(&spectrum) {
        assert!((a - b).abs() <= 1e-8 * b, "{a} vs {b}");
    }
    let residual = spectral_norm(&(&m - svd.reconstruct()));
    assert!(residual <= spectrum[5] + 1e-8 * spectrum[0]);
}

#[test]
fn svd_sign_convention() {
    let mut g = rng(4);
    let m = uniform_matrix(&mut g, 30, 20, -1.0, 1.0);
    let svd = top_k_svd(&m, 4).unwrap();
    for col in svd.left().column_iter() {
        let (mut best, mut mag) = (0, -1.0);
        for (i, v) in col.iter().enumerate() {
            if v.abs() > mag {
                best = i;
                mag = v.abs();
            }
        }
        assert!(col[best] >= 0.0);
    }
}

#[test]
fn modularity_hand_example() {
    // A = [[1,1,0],[1,2,1],[0,1,1]], d = (2,4,2), 2m = 8; only the diagonal
    // corner pairs contribute, (1 - 4/8) each, giving 1/8.
    let r = ResponseMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
    let pi = MembershipMatrix::from_rows(&[vec![1.0, 0.0], vec![0.5, 0.5], vec![0.0, 1.0]]).unwrap();
    assert_eq!(fuzzy_weighted_modularity(&r, &pi).unwrap(), 0.125);
    assert_eq!(literal_modularity(r.values(), pi.as_matrix()), 0.125);
}

#[test]
fn modularity_sign_split_and_range() {
    let mut g = rng(5);
    for _ in 0..30 {
        let n = g.random_range(2..=30);
        let j = g.random_range(1..=10);
        let k = g.random_range(1..=5);
        let r = ResponseMatrix::new(uniform_matrix(&mut g, n, j, -1.0, 1.0)).unwrap();
        let dec = ModularityDecomposition::new(&r);
        let a = r.values() * r.values().transpose();
        assert!((&dec.a_plus - &dec.a_minus - a).amax() < 1e-10);
        let pi = MembershipMatrix::new(random_stochastic(&mut g, n, k)).unwrap();
        let q = fuzzy_weighted_modularity(&r, &pi).unwrap();
        assert!(q.abs() <= 1.0);
        assert!((q - literal_modularity(r.values(), pi.as_matrix())).abs() < 1e-10);
    }
}

#[test]
fn factored_modularity_matches_dense() {
    let mut g = rng(6);
    for sign in [1.0, -1.0] {
        let r = ResponseMatrix::new(uniform_matrix(&mut g, 40, 12, 0.0, 2.0) * sign).unwrap();
        let pi = MembershipMatrix::new(random_stochastic(&mut g, 40, 4)).unwrap();
        let factored = FuzzyModularity::with_dense_limit(&r, 0);
        assert!(factored.is_factored());
        let dense = FuzzyModularity::with_dense_limit(&r, usize::MAX);
        let (a, b) = (factored.score(&pi).unwrap(), dense.score(&pi).unwrap());
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
    let mixed = ResponseMatrix::new(uniform_matrix(&mut g, 40, 12, -1.0, 1.0)).unwrap();
    assert!(!FuzzyModularity::with_dense_limit(&mixed, 0).is_factored());
}

#[test]
fn alignment_matches_enumeration() {
    let mut g = rng(7);
    for _ in 0..50 {
        let k = g.random_range(1..=6);
        let n = g.random_range(k..=40);
        let a = random_stochastic(&mut g, n, k);
        let b = random_stochastic(&mut g, n, k);
        let ham = brute_hamming(&a, &b);
        for s in [AlignmentStrategy::Exhaustive, AlignmentStrategy::Assignment] {
            assert!((hamming_error_with(&a, &b, s).unwrap() - ham).abs() < 1e-12);
        }
        let t1 = uniform_matrix(&mut g, n, k, -1.0, 1.0);
        let t2 = uniform_matrix(&mut g, n, k, -1.0, 1.0);
        let rel = brute_relative(&t1, &t2);
        for s in [AlignmentStrategy::Exhaustive, AlignmentStrategy::Assignment] {
            assert!((relative_error_with(&t1, &t2, s).unwrap() - rel).abs() < 1e-12);
        }
    }
}

#[test]
fn assignment_handles_large_k() {
    let mut g = rng(8);
    let k = 12;
    let cost = uniform_matrix(&mut g, k, k, 0.0, 1.0);
    let a = align_columns(&cost, AlignmentStrategy::Assignment);
    let mut seen = a.permutation.clone();
    seen.sort();
    assert_eq!(seen, (0..k).collect::<Vec<_>>());
    // A planted permutation with near-zero cost must be found.
    let mut planted = DMatrix::from_element(k, k, 1.0);
    let target: Vec<usize> = (0..k).map(|i| (i * 5) % k).collect();
    for (i, &j) in target.iter().enumerate() {
        planted[(i, j)] = 0.0;
    }
    let found = align_columns(&planted, AlignmentStrategy::Assignment);
    assert_eq!(found.permutation, target);
    assert_eq!(found.cost, 0.0);
}

#[test]
fn sp_recovers_simplex_vertices() {
    let mut g = rng(9);
    for _ in 0..20 {
        let k = g.random_range(2..=6);
        let n = g.random_range(k + 1..=60);
        let mut pi = membership_with_pure(&mut g, n, k);
        // Move the pure rows away from the top.
        for i in 0..k {
            let t = g.random_range(0..n);
            pi.swap_rows(i, t);
        }
        let x = uniform_matrix(&mut g, k, k, -1.0, 1.0) + DMatrix::<f64>::identity(k, k) * 2.0;
        let u = &pi * &x;
        let picked = successive_projection(&u, k).unwrap();
        let vertices = picked.select_rows(&u);
        let inv = vertices.clone().try_inverse().unwrap();
        let coeffs = &u * inv;
        assert!((&coeffs * &vertices - &u).amax() < 1e-8);
        for row in coeffs.row_iter() {
            assert!(row.iter().all(|&c| c > -1e-8));
            assert!((row.sum() - 1.0).abs() < 1e-8);
        }
        for &i in picked.indices() {
            assert!(pi.row(i).max() > 1.0 - 1e-12, "picked a mixed row");
        }
    }
}

fn noiseless_instance(seed: u64, n: usize, j: usize, k: usize) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let mut g = rng(seed);
    let pi = membership_with_pure(&mut g, n, k);
    let theta = uniform_matrix(&mut g, j, k, 0.0, 1.0);
    let r0 = &pi * theta.transpose();
    (pi, theta, r0)
}

#[test]
fn ideal_estimators_agree() {
    for seed in 0..10 {
        let (pi, theta, r0) = noiseless_instance(seed, 60, 30, 2 + (seed as usize % 4));
        let (pi_s, th_s) = ideal_scgoma(&r0, pi.ncols()).unwrap();
        let (pi_r, th_r) = ideal_rmsp(&r0, pi.ncols()).unwrap();
        assert!(hamming_error_with(pi_s.as_matrix(), pi_r.as_matrix(), AlignmentStrategy::Auto).unwrap() < 1e-8);
        let truth = MembershipMatrix::new(pi).unwrap();
        assert!(hamming_error(&pi_s, &truth).unwrap() < 1e-8);
        assert!(relative_error(&th_s, &theta).unwrap() < 1e-8);
        assert!(relative_error(&th_r, &theta).unwrap() < 1e-8);
    }
}

#[test]
fn noiseless_responses_are_recovered() {
    let (pi, theta, r0) = noiseless_instance(42, 90, 40, 3);
    let r = ResponseMatrix::new(r0).unwrap();
    let truth = MembershipMatrix::new(pi).unwrap();
    for fit in [scgoma(&r, 3).unwrap(), rmsp(&r, 3).unwrap()] {
        assert!(hamming_error(&fit.membership_hat, &truth).unwrap() < 1e-8);
        assert!(relative_error(&fit.item_params_hat, &theta).unwrap() < 1e-8);
        assert_eq!(fit.zero_row_fallbacks, 0);
    }
}

#[test]
fn mask_keeps_the_unmasked_draws() {
    let mut g = rng(10);
    let pi = MembershipMatrix::new(membership_with_pure(&mut g, 200, 3)).unwrap();
    let items = ItemParams::new(uniform_matrix(&mut g, 100, 3, 0.1, 1.0)).unwrap();
    let spec = |p: f64| ModelSpec::new(pi.clone(), items.clone(), DistributionSpec::Poisson, p);
    let (full, _) = sample_response(&spec(1.0), 5).unwrap();
    let (half, _) = sample_response(&spec(0.5), 5).unwrap();
    let mut zeroed_by_mask = 0usize;
    for (a, b) in full.values().iter().zip(half.values().iter()) {
        assert!(*b == 0.0 || a == b);
        if *b == 0.0 && *a != 0.0 {
            zeroed_by_mask += 1;
        }
    }
    assert!(zeroed_by_mask > 0);

    // The mask alone: entries never zero under Exponential.
    let (r, _) = sample_response(
        &ModelSpec::new(pi.clone(), items.clone(), DistributionSpec::Exponential, 0.3),
        6,
    )
    .unwrap();
    let total = (r.n_subjects() * r.n_items()) as f64;
    let zeros = r.values().iter().filter(|&&v| v == 0.0).count() as f64;
    let sd = (total * 0.3 * 0.7).sqrt();
    assert!((zeros - 0.7 * total).abs() <= 3.0 * sd, "{zeros} zeros of {total}");
}
