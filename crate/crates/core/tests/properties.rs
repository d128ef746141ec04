mod common;

use common::*;
use proptest::prelude::*;
use wgom::evaluation::{hamming_error_with, AlignmentStrategy};
use wgom::io::{read_dense_csv_from, write_dense_csv_to};
use wgom::sampler::expected_responses;
use wgom::{
    construct_discrete, hamming_error, rmsp, scgoma, successive_projection, top_k_svd,
    validate_model_spec, DMatrix, DiscreteScheme, DistributionSpec, ItemParams, MembershipMatrix,
    ModelSpec, ResponseMatrix,
};

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut rng(seed));
    p
}

/// Noisy `R = Pi Theta' + E` with pure rows, well separated.
fn noisy_responses(seed: u64, n: usize, j: usize, k: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut g = rng(seed);
    let pi = membership_with_pure(&mut g, n, k);
    let theta = uniform_matrix(&mut g, j, k, 0.0, 1.0);
    let noise = uniform_matrix(&mut g, n, j, -0.05, 0.05);
    (&pi * theta.transpose() + noise, pi)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn membership_rows_sum_to_one(seed in any::<u64>(), n in 1usize..40, k in 1usize..6) {
        let m = MembershipMatrix::new(random_stochastic(&mut rng(seed), n, k)).unwrap();
        for row in m.as_matrix().row_iter() {
            prop_assert!((row.sum() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn expected_matrix_has_rank_k(seed in any::<u64>(), k in 1usize..6, extra in 0usize..30) {
        let mut g = rng(seed);
        let n = k + extra + 1;
        let j = k + extra / 2 + 1;
        let pi = MembershipMatrix::new(membership_with_pure(&mut g, n, k)).unwrap();
        let items = ItemParams::new(uniform_matrix(&mut g, j, k, 0.05, 1.0)).unwrap();
        let spec = ModelSpec::new(pi, items, DistributionSpec::Poisson, 1.0);
        prop_assert!(validate_model_spec(&spec).is_empty());
        let r0 = expected_responses(&spec);
        let s = top_k_svd(&r0, k).unwrap();
        let sv = s.singular_values();
        prop_assert!(sv[k - 1] > 1e-10 * sv[0]);
        if k < n.min(j) {
            let next = jacobi_svd(&r0).1[k];
            prop_assert!(next <= 1e-10 * sv[0]);
        }
    }

    #[test]
    fn sp_is_permutation_equivariant(seed in any::<u64>(), k in 2usize..6, n in 8usize..40) {
        let mut g = rng(seed);
        let rows = uniform_matrix(&mut g, n, k + 2, -1.0, 1.0);
        let perm = shuffled(n, seed ^ 1);
        let permuted = DMatrix::from_fn(n, k + 2, |i, c| rows[(perm[i], c)]);
        let a = successive_projection(&rows, k).unwrap();
        let b = successive_projection(&permuted, k).unwrap();
        let mapped: Vec<usize> = b.indices().iter().map(|&i| perm[i]).collect();
        prop_assert_eq!(mapped, a.indices().to_vec());
    }

    #[test]
    fn sp_is_scale_invariant(seed in any::<u64>(), k in 1usize..5, c in 1e-3f64..1e3) {
        let rows = uniform_matrix(&mut rng(seed), 25, 6, -1.0, 1.0);
        let a = successive_projection(&rows, k).unwrap();
        let b = successive_projection(&(&rows * c), k).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn estimators_scale_with_responses(seed in any::<u64>(), k in 2usize..5, c in 0.01f64..100.0) {
        let (r, _) = noisy_responses(seed, 60, 30, k);
        let base = ResponseMatrix::new(r.clone()).unwrap();
        let scaled = ResponseMatrix::new(&r * c).unwrap();
        for (a, b) in [
            (scgoma(&base, k).unwrap(), scgoma(&scaled, k).unwrap()),
            (rmsp(&base, k).unwrap(), rmsp(&scaled, k).unwrap()),
        ] {
            prop_assert!((a.membership_hat.as_matrix() - b.membership_hat.as_matrix()).amax() <= 1e-8);
            let expect = &a.item_params_hat * c;
            prop_assert!((&b.item_params_hat - &expect).amax() <= 1e-8 * expect.amax().max(1.0));
        }
    }

    #[test]
    fn estimators_are_subject_equivariant(seed in any::<u64>(), k in 2usize..5) {
        let (r, _) = noisy_responses(seed, 50, 25, k);
        let perm = shuffled(50, seed ^ 2);
        let permuted = DMatrix::from_fn(50, 25, |i, c| r[(perm[i], c)]);
        let (base, moved) = (ResponseMatrix::new(r).unwrap(), ResponseMatrix::new(permuted).unwrap());
        for (a, b) in [
            (scgoma(&base, k).unwrap(), scgoma(&moved, k).unwrap()),
            (rmsp(&base, k).unwrap(), rmsp(&moved, k).unwrap()),
        ] {
            let pa = a.membership_hat.as_matrix();
            let expected = DMatrix::from_fn(50, k, |i, c| pa[(perm[i], c)]);
            let gap = hamming_error_with(b.membership_hat.as_matrix(), &expected, AlignmentStrategy::Auto).unwrap();
            prop_assert!(gap <= 1e-8);
            let rel = wgom::relative_error(&b.item_params_hat, &a.item_params_hat).unwrap();
            prop_assert!(rel <= 1e-8);
        }
    }

    #[test]
    fn hamming_is_bounded_and_label_symmetric(seed in any::<u64>(), n in 1usize..40, k in 1usize..7) {
        let mut g = rng(seed);
        let a = random_stochastic(&mut g, n, k);
        let b = random_stochastic(&mut g, n, k);
        let h = hamming_error_with(&a, &b, AlignmentStrategy::Auto).unwrap();
        prop_assert!((0.0..=1.0).contains(&h));
        let perm = shuffled(k, seed ^ 3);
        let pa = DMatrix::from_fn(n, k, |i, c| a[(i, perm[c])]);
        let pb = DMatrix::from_fn(n, k, |i, c| b[(i, perm[c])]);
        let h2 = hamming_error_with(&pa, &pb, AlignmentStrategy::Auto).unwrap();
        prop_assert!((h - h2).abs() <= 1e-12);
        let same = hamming_error(&MembershipMatrix::new(pa.clone()).unwrap(), &MembershipMatrix::new(a).unwrap()).unwrap();
        prop_assert!(same <= 1e-12);
    }

    #[test]
    fn discrete_probabilities_hit_the_mean(
        support in proptest::collection::btree_set(-50i32..50, 2..6),
        t in 0.0f64..1.0,
    ) {
        let support: Vec<f64> = support.into_iter().map(|v| v as f64 / 4.0).collect();
        let scheme = if support.len() == 2 { DiscreteScheme::Binary } else { DiscreteScheme::default() };
        let range = wgom::sampler::discrete_mean_range(&support, scheme).unwrap();
        let mean = range.lo + t * (range.hi - range.lo);
        let p = construct_discrete(&support, scheme, mean).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 4.0 * f64::EPSILON);
        prop_assert!(p.iter().all(|&x| x >= -1e-12));
        let m: f64 = p.iter().zip(&support).map(|(a, b)| a * b).sum();
        prop_assert!((m - mean).abs() <= 1e-12 * support.iter().map(|v| v.abs()).fold(1.0, f64::max));
    }

    #[test]
    fn dense_csv_round_trips(values in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..60), cols in 1usize..6) {
        let rows = values.len() / cols;
        prop_assume!(rows > 0);
        let m = DMatrix::from_row_slice(rows, cols, &values[..rows * cols]);
        let mut buf = Vec::new();
        write_dense_csv_to(&mut buf, &m).unwrap();
        let back = read_dense_csv_from(buf.as_slice()).unwrap();
        prop_assert_eq!(back.shape(), m.shape());
        for (a, b) in m.iter().zip(back.iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
