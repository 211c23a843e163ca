mod common;

use common::*;
use ndarray::{array, Array2};
use proptest::prelude::*;
use psmtr_core::tensor::{khatri_rao, mode_refold, mode_unfold, DEFAULT_MATERIALIZE_CAP};
use psmtr_core::{contract_leading, cp_reconstruct, DenseTensor};
use rand::Rng;

#[test]
fn contraction_matches_materialized_weight() {
    let mut rng = rng(11);
    for _ in 0..30 {
        let q = rng.random_range(1..=3);
        let order = q + rng.random_range(1..=2);
        let shape: Vec<usize> = (0..order).map(|_| rng.random_range(1..=4)).collect();
        let rank = rng.random_range(1..=3);
        let w = random_factors(&mut rng, &shape, rank);
        let x = random_tensor(&mut rng, &shape[..q]);
        let got = contract_leading(&x, &w, q).unwrap();
        assert_eq!(got.shape(), &shape[q..]);
        assert!(rel_err(got.values(), &brute_contract(&x, &w)) < 1e-10);
    }
}

#[test]
fn reconstruction_matches_entrywise_products() {
    let mut rng = rng(12);
    let w = random_factors(&mut rng, &[2, 3, 2, 3, 2], 3);
    let (shape, values) = brute_reconstruct(&w);
    let t = cp_reconstruct(&w, DEFAULT_MATERIALIZE_CAP).unwrap();
    assert_eq!(t.shape(), &shape[..]);
    assert!(rel_err(t.values(), &values) < 1e-12);
}

#[test]
fn contraction_is_linear_in_the_input() {
    let mut rng = rng(13);
    let w = random_factors(&mut rng, &[2, 3, 4, 3, 2], 2);
    let a = random_tensor(&mut rng, &[2, 3, 4]);
    let b = random_tensor(&mut rng, &[2, 3, 4]);
    let (alpha, beta) = (0.7, -1.3);
    let mix = DenseTensor::new(
        vec![2, 3, 4],
        a.values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| alpha * x + beta * y)
            .collect(),
    )
    .unwrap();
    let ya = contract_leading(&a, &w, 3).unwrap();
    let yb = contract_leading(&b, &w, 3).unwrap();
    let expect: Vec<f64> = ya
        .values()
        .iter()
        .zip(yb.values())
        .map(|(x, y)| alpha * x + beta * y)
        .collect();
    assert!(rel_err(contract_leading(&mix, &w, 3).unwrap().values(), &expect) < 1e-12);
}

#[test]
fn mode_one_unfolding_by_index_enumeration() {
    let t = DenseTensor::new(vec![2, 2, 2], (1..=8).map(f64::from).collect()).unwrap();
    let m = mode_unfold(&t, 1).unwrap();
    // column index j = i0 + 2 * i2 (first remaining mode fastest)
    let mut expect = Array2::zeros((2, 4));
    for i0 in 0..2 {
        for i1 in 0..2 {
            for i2 in 0..2 {
                expect[[i1, i0 + 2 * i2]] = t.get(&[i0, i1, i2]).unwrap();
            }
        }
    }
    assert_eq!(m, expect);
}

#[test]
fn khatri_rao_matches_kronecker_columns() {
    let mut rng = rng(14);
    let a = Array2::from_shape_simple_fn((3, 2), || rng.random::<f64>());
    let b = Array2::from_shape_simple_fn((2, 2), || rng.random::<f64>());
    let k = khatri_rao(a.view(), b.view()).unwrap();
    for r in 0..2 {
        for i in 0..3 {
            for j in 0..2 {
                assert_eq!(k[[i * 2 + j, r]], a[[i, r]] * b[[j, r]]);
            }
        }
    }
    assert_eq!(
        khatri_rao(array![[1.0], [2.0]].view(), array![[3.0], [4.0]].view()).unwrap(),
        array![[3.0], [4.0], [6.0], [8.0]]
    );
}

proptest! {
    #[test]
    fn unfold_refold_round_trip(shape in prop::collection::vec(1usize..4, 1..5), seed in any::<u64>()) {
        let mut rng = rng(seed);
        let t = random_tensor(&mut rng, &shape);
        for k in 0..shape.len() {
            let m = mode_unfold(&t, k).unwrap();
            prop_assert_eq!(m.nrows(), shape[k]);
            prop_assert_eq!(mode_refold(&m, k, &shape).unwrap(), t.clone());
        }
    }

    #[test]
    fn unfolding_column_convention(shape in prop::collection::vec(1usize..4, 2..5), seed in any::<u64>()) {
        let mut rng = rng(seed);
        let t = random_tensor(&mut rng, &shape);
        let k = shape.len() - 1;
        let m = mode_unfold(&t, k).unwrap();
        for flat in 0..t.len() {
            let idx = unravel(flat, &shape);
            let mut col = 0;
            let mut stride = 1;
            for (j, &i) in idx.iter().enumerate() {
                if j != k {
                    col += i * stride;
                    stride *= shape[j];
                }
            }
            prop_assert_eq!(m[[idx[k], col]], t.values()[flat]);
        }
    }
}
