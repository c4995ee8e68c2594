mod common;

use aoft::ao::{build_ortho, normalize_strict, GeneratorVector};
use aoft::checkpoint::Checkpoint;
use aoft::diagnostics::{angle_histogram, compare_runs, norm_report, rademacher_estimate, AngleHistogram, NormReport};
use aoft::linalg::{Matrix, Vector};
use aoft::model::{ModelConfig, ParamStore};
use aoft::peft::{init_adapter_params, Method, PeftConfig};
use aoft::seed::normal_vec;
use common::{brute_force_angles, mean_std, rademacher_enumeration, random_matrix, rng, unit_generator};
use proptest::prelude::*;

#[test]
fn identity_histogram() {
    let h = angle_histogram(&Matrix::identity(10), 1.0).unwrap();
    assert_eq!(h.counts.len(), 180);
    assert_eq!(h.counts[90], 45);
    assert_eq!(h.counts.iter().sum::<u64>(), 45);
    assert_eq!(h.pairs, 45);
}

#[test]
fn ao_factor_histogram_is_all_right_angles() {
    let mut r = rng("hist-ao");
    let f = build_ortho(&GeneratorVector::new(unit_generator(&mut r, 40)).unwrap(), 12).unwrap();
    let h = angle_histogram(f.factor(), 1.0).unwrap();
    assert_eq!(h.counts[90], 66);
    assert!(h.angles().iter().all(|a| (a - 90.0).abs() <= 1e-6));
}

#[test]
fn gaussian_columns_match_brute_force() {
    let mut r = rng("gauss");
    let w = random_matrix(&mut r, 768, 64);
    let h = angle_histogram(&w, 1.0).unwrap();
    let oracle = brute_force_angles(&w);
    let (mean, std) = mean_std(&oracle);
    assert_eq!(h.pairs as usize, oracle.len());
    assert!((h.mean - 90.0).abs() <= 2.0);
    assert!((h.mean - mean).abs() < 1e-9);
    assert!((h.std - std).abs() < 1e-9);
    let mut counts = vec![0u64; 180];
    for a in &oracle {
        counts[(a.floor() as usize).min(179)] += 1;
    }
    assert_eq!(h.counts, counts);
}

#[test]
fn histogram_rejects_bad_input() {
    assert!(angle_histogram(&Matrix::zeros(3, 1), 1.0).is_err());
    assert!(angle_histogram(&Matrix::zeros(3, 3), 1.0).is_err());
    assert!(angle_histogram(&Matrix::identity(3), 0.0).is_err());
}

#[test]
fn norm_rows() {
    let mut report = NormReport::default();
    report.push("zero", &Matrix::zeros(4, 3));
    assert_eq!((report.rows[0].spectral, report.rows[0].frobenius), (0.0, 0.0));
    let mut r = rng("norm");
    let q = normalize_strict(&GeneratorVector::new(normal_vec(&mut r, 20, 1.0).into_iter().map(f64::abs).collect::<Vec<_>>()).unwrap()).unwrap();
    report.push("blocks.3.ao", build_ortho(&q, 6).unwrap().factor());
    assert!((report.rows[1].spectral - 1.0).abs() < 1e-8);
    assert_eq!(report.rows[1].layer, Some(3));
    assert!(report.to_csv().starts_with("layer,name,spectral,frobenius\n"));
}

#[test]
fn adapter_checkpoint_reports_generated_factors() {
    let model = ModelConfig { dim: 16, heads: 2, layers: 2, ..ModelConfig::default() };
    for method in [Method::LoraAoft, Method::AdapterAoft, Method::VptAoft, Method::Lora] {
        let peft = PeftConfig::new(method, 4);
        let mut params = ParamStore::new();
        params.extend(init_adapter_params(&model, &peft, 3).unwrap());
        let report = norm_report(&Checkpoint::adapter(model.clone(), peft, params)).unwrap();
        assert!(!report.rows.is_empty());
        for row in &report.rows {
            assert!(row.spectral <= row.frobenius + 1e-12, "{method} {}", row.name);
            if method.is_aoft() {
                assert!((row.spectral - 1.0).abs() < 0.1, "{method} {} {}", row.name, row.spectral);
            }
        }
    }
}

#[test]
fn compare_runs_examples() {
    let mut a = NormReport::default();
    let mut r = rng("cmp");
    a.push("blocks.0.wq.down", &random_matrix(&mut r, 5, 2));
    a.push("blocks.1.wq.down", &random_matrix(&mut r, 5, 2));
    let same = compare_runs(&a, &a).unwrap();
    assert!(same.rows.iter().all(|d| d.spectral_delta == 0.0 && d.frobenius_delta == 0.0));
    assert_eq!(same.spectral_not_larger, 2);
    assert!(same.verdict.contains("2/2"));
    assert!(compare_runs(&NormReport::default(), &NormReport::default()).is_err());
    let mut b = a.clone();
    b.rows[1].name = "other".into();
    assert!(compare_runs(&a, &b).is_err());
    b.rows.pop();
    assert!(compare_runs(&a, &b).is_err());
}

#[test]
fn rademacher_trivial_cases() {
    let mut r = rng("rad");
    let xs: Vec<Vector> = (0..5).map(|_| Vector::from(normal_vec(&mut r, 4, 1.0))).collect();
    assert_eq!(rademacher_estimate(&xs, 0.0, 50, 1).unwrap().estimate, 0.0);
    let x = Vector::from(vec![3.0, 4.0]);
    let e = rademacher_estimate(&[x], 2.0, 100, 1).unwrap();
    assert!((e.estimate - 10.0).abs() < 1e-12);
    assert!(e.std_error.abs() < 1e-12);
    assert!(rademacher_estimate(&[], 1.0, 10, 0).is_err());
}

#[test]
fn rademacher_matches_enumeration() {
    let xs = vec![vec![1.0, 0.5, -0.2], vec![-0.3, 0.8, 0.1], vec![0.4, -0.6, 0.9]];
    let exact = rademacher_enumeration(&xs, 1.5);
    let vs: Vec<Vector> = xs.iter().cloned().map(Vector::from).collect();
    for seed in 0..5 {
        let e = rademacher_estimate(&vs, 1.5, 4000, seed).unwrap();
        assert!((e.estimate - exact).abs() <= 3.0 * e.std_error, "seed {seed}: {} vs {exact} ± {}", e.estimate, e.std_error);
    }
}

proptest! {
    #[test]
    fn histogram_conserves_pairs(cols in 2usize..20, seed in any::<u64>(), width in 0.5f64..30.0) {
        let mut r = aoft::seed::rng(seed, "h");
        let w = random_matrix(&mut r, 6, cols);
        let h = angle_histogram(&w, width).unwrap();
        prop_assert_eq!(h.counts.iter().sum::<u64>() as usize, cols * (cols - 1) / 2);
        prop_assert!((0.0..=180.0).contains(&h.mean));
        let pooled = AngleHistogram::pooled([&h, &h], "x").unwrap();
        prop_assert_eq!(pooled.pairs, 2 * h.pairs);
    }

    #[test]
    fn rademacher_is_homogeneous(seed in any::<u64>(), gamma in 0.0f64..10.0) {
        let mut r = aoft::seed::rng(seed, "x");
        let xs: Vec<Vector> = (0..4).map(|_| Vector::from(normal_vec(&mut r, 3, 1.0))).collect();
        let a = rademacher_estimate(&xs, gamma, 30, seed).unwrap();
        let b = rademacher_estimate(&xs, 2.0 * gamma, 30, seed).unwrap();
        prop_assert!(a.estimate >= 0.0);
        prop_assert!((b.estimate - 2.0 * a.estimate).abs() <= 1e-12 * (1.0 + a.estimate));
    }
}
