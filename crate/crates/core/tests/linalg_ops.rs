mod common;

use aoft::linalg::{gram, matmul, pairwise_column_angles, spectral_norm_default, Matrix};
use aoft::AoftError;
use common::{jacobi_singular_values, random_matrix, rng, triple_loop};
use proptest::prelude::*;

#[test]
fn matmul_examples() {
    let a = Matrix::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], &[7.0, 8.0, 9.0]]);
    assert_eq!(matmul(&Matrix::identity(3), &a).unwrap(), a);
    let m = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
    let v = Matrix::from_rows(&[&[0.0], &[1.0]]);
    assert_eq!(matmul(&m, &v).unwrap(), Matrix::from_rows(&[&[2.0], &[4.0]]));
}

#[test]
fn matmul_matches_triple_loop() {
    let mut r = rng("matmul");
    let a = random_matrix(&mut r, 5, 7);
    let b = random_matrix(&mut r, 7, 3);
    assert!(matmul(&a, &b).unwrap().max_abs_diff(&triple_loop(&a, &b)) < 1e-13);
}

#[test]
fn matmul_error_names_both_shapes() {
    let err = matmul(&Matrix::zeros(2, 3), &Matrix::zeros(4, 5)).unwrap_err();
    assert!(matches!(err, AoftError::ShapeMismatch { .. }));
    let msg = err.to_string();
    assert!(msg.contains("2×3") || msg.contains("2x3") || msg.contains("(2, 3)"), "{msg}");
    assert!(msg.contains("4×5") || msg.contains("4x5") || msg.contains("(4, 5)"), "{msg}");
}

#[test]
fn spectral_norm_examples() {
    assert_eq!(spectral_norm_default(&Matrix::zeros(3, 4)), 0.0);
    assert!((spectral_norm_default(&Matrix::identity(6)) - 1.0).abs() < 1e-12);
    assert!((spectral_norm_default(&Matrix::diag(&[3.0, 1.0, 0.5])) - 3.0).abs() < 1e-12);
}

#[test]
fn spectral_norm_matches_jacobi_svd() {
    let mut r = rng("spectral");
    for _ in 0..10 {
        let a = random_matrix(&mut r, 8, 5);
        let sv = jacobi_singular_values(&a);
        assert!((spectral_norm_default(&a) - sv[0]).abs() < 1e-8);
    }
}

#[test]
fn gram_examples() {
    let q = Matrix::from_rows(&[&[0.6, -0.8], &[0.8, 0.6], &[0.0, 0.0]]);
    assert!(gram(&q).max_abs_diff(&Matrix::identity(2)) < 1e-12);
    let v = Matrix::from_rows(&[&[1.0], &[2.0], &[2.0]]);
    assert_eq!(gram(&v), Matrix::from_rows(&[&[9.0]]));
    let mut r = rng("gram");
    let a = random_matrix(&mut r, 4, 2);
    let (c0, c1) = (a.column(0), a.column(1));
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    let expected = Matrix::from_rows(&[&[dot(&c0, &c0), dot(&c0, &c1)], &[dot(&c1, &c0), dot(&c1, &c1)]]);
    assert!(gram(&a).max_abs_diff(&expected) < 1e-14);
}

#[test]
fn angle_examples() {
    let angles = pairwise_column_angles(&Matrix::identity(3)).unwrap();
    assert_eq!(angles.len(), 3);
    assert!(angles.iter().all(|a| (a - 90.0).abs() < 1e-12));
    let opposite = Matrix::from_rows(&[&[1.0, -1.0], &[2.0, -2.0]]);
    assert!((pairwise_column_angles(&opposite).unwrap()[0] - 180.0).abs() < 1e-9);
    let m = Matrix::from_rows(&[&[1.0, 1.0], &[0.0, 1.0]]);
    assert!((pairwise_column_angles(&m).unwrap()[0] - 45.0).abs() < 1e-12);
    let zero = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 0.0]]);
    assert!(matches!(pairwise_column_angles(&zero), Err(AoftError::ZeroColumn { index: 1 })));
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-2.0f64..2.0, rows * cols).prop_map(move |v| Matrix::new(rows, cols, v).unwrap())
}

proptest! {
    #[test]
    fn matmul_is_associative(a in matrix(3, 4), b in matrix(4, 5), c in matrix(5, 2)) {
        let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
        let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
        prop_assert!(left.max_abs_diff(&right) < 1e-9);
    }

    #[test]
    fn spectral_norm_is_homogeneous(a in matrix(5, 4), c in -3.0f64..3.0) {
        let s = spectral_norm_default(&a);
        prop_assert!((spectral_norm_default(&a.scale(c)) - c.abs() * s).abs() < 1e-8 * (1.0 + s));
    }

    #[test]
    fn gram_is_exactly_symmetric(a in matrix(6, 4)) {
        let g = gram(&a);
        for i in 0..4 {
            for j in 0..4 {
                prop_assert_eq!(g.get(i, j).to_bits(), g.get(j, i).to_bits());
            }
        }
    }

    #[test]
    fn orthonormal_columns_are_at_right_angles(seed in 0u64..1000, n in 2usize..12) {
        let mut r = aoft::seed::rng(seed, "ortho-angles");
        let q = common::unit_generator(&mut r, n);
        let f = aoft::ao::build_ortho(&aoft::ao::GeneratorVector::new(q).unwrap(), n).unwrap();
        for a in pairwise_column_angles(f.factor()).unwrap() {
            prop_assert!((a - 90.0).abs() <= 1e-6);
        }
    }
}
