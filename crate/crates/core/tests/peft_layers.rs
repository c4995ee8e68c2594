mod common;

use aoft::ao::{build_full, GeneratorVector};
use aoft::data::{BlobTask, Dataset};
use aoft::gradcheck::grad_check;
use aoft::linalg::{gram, matmul, matmul_nt, Matrix, Vector};
use aoft::model::{init_backbone, logits, ModelConfig, ParamStore};
use aoft::peft::{
    adapter_aoft_forward, init_adapter_params, lora_aoft_forward, param_count, vpt_aoft_prepend, AdaptedLayer,
    AdapterSites, LoraTargets, Method, PeftConfig,
};
use common::{numerical_rank, random_matrix, rng, unit_generator};
use proptest::prelude::*;

fn g(q: Vec<f64>) -> GeneratorVector {
    GeneratorVector::new(q).unwrap()
}

fn e0(n: usize) -> GeneratorVector {
    GeneratorVector::identity(n)
}

#[test]
fn lora_corner_perturbation() {
    let layer = AdaptedLayer::lora(Matrix::zeros(3, 3), e0(3), e0(3), 1).unwrap();
    let mut expected = Matrix::zeros(3, 3);
    expected.set(0, 0, 1.0);
    assert_eq!(layer.delta().unwrap(), expected);
}

#[test]
fn lora_zero_lambda_is_exact() {
    let mut r = rng("lora-zero");
    let w = random_matrix(&mut r, 6, 5);
    let x = random_matrix(&mut r, 4, 6);
    let layer = AdaptedLayer::lora(w.clone(), g(unit_generator(&mut r, 6)), g(unit_generator(&mut r, 5)), 3)
        .unwrap()
        .with_lambda(Vector::zeros(3))
        .unwrap();
    assert_eq!(lora_aoft_forward(&x, &layer).unwrap(), matmul(&x, &w).unwrap());
}

#[test]
fn lora_delta_two_ways_and_rank() {
    let mut r = rng("lora-delta");
    let (qd, qu) = (g(unit_generator(&mut r, 4)), g(unit_generator(&mut r, 4)));
    let layer = AdaptedLayer::lora(Matrix::zeros(4, 4), qd.clone(), qu.clone(), 2).unwrap();
    let dense = matmul_nt(
        &build_full(&qd).column_slab(0, 2).unwrap(),
        &build_full(&qu).column_slab(0, 2).unwrap(),
    )
    .unwrap();
    let delta = layer.delta().unwrap();
    assert!(delta.max_abs_diff(&dense) < 1e-12);
    assert_eq!(numerical_rank(&delta), 2);
}

#[test]
fn adapter_examples() {
    let mut r = rng("adapter");
    let h = random_matrix(&mut r, 3, 8);
    let zero = AdaptedLayer::adapter(g(unit_generator(&mut r, 8)), g(unit_generator(&mut r, 8)), 2, true)
        .unwrap()
        .with_lambda(Vector::zeros(2))
        .unwrap();
    assert_eq!(adapter_aoft_forward(&h, &zero).unwrap(), h);

    let q = g(unit_generator(&mut r, 8));
    let full = AdaptedLayer::adapter(q.clone(), q, 8, false).unwrap();
    assert!(adapter_aoft_forward(&h, &full).unwrap().max_abs_diff(&h) < 1e-10);

    let (qd, qu) = (g(unit_generator(&mut r, 8)), g(unit_generator(&mut r, 8)));
    let layer = AdaptedLayer::adapter(qd.clone(), qu.clone(), 2, false).unwrap();
    let oracle = matmul(
        &h,
        &matmul_nt(&build_full(&qd).column_slab(0, 2).unwrap(), &build_full(&qu).column_slab(0, 2).unwrap()).unwrap(),
    )
    .unwrap();
    assert!(adapter_aoft_forward(&h, &layer).unwrap().max_abs_diff(&oracle) < 1e-12);
    let residual = AdaptedLayer::adapter(qd, qu, 2, true).unwrap();
    assert!(adapter_aoft_forward(&h, &residual).unwrap().max_abs_diff(&h.add(&oracle).unwrap()) < 1e-12);
}

#[test]
fn vpt_examples() {
    let mut r = rng("vpt");
    let x = random_matrix(&mut r, 3, 6);
    let layer = AdaptedLayer::vpt(Matrix::identity(6), None, g(unit_generator(&mut r, 6)), 4).unwrap();
    assert_eq!(vpt_aoft_prepend(&x, &layer, 0).unwrap(), x);

    let one = AdaptedLayer::vpt(Matrix::identity(6), None, e0(6), 1).unwrap();
    let out = vpt_aoft_prepend(&x, &one, 1).unwrap();
    assert_eq!(out.rows(), 4);
    assert_eq!(out.row(3), Vector::basis(6, 0).as_slice());

    let out = vpt_aoft_prepend(&x, &layer, 4).unwrap();
    let prompts = Matrix::from_fn(4, 6, |i, j| out.get(3 + i, j));
    assert!(gram(&prompts.transpose()).max_abs_diff(&Matrix::identity(4)) < 1e-10);
}

#[test]
fn budget_ratio_at_vit_base_width() {
    let model = ModelConfig { dim: 768, heads: 12, layers: 1, ..ModelConfig::default() };
    let lora = param_count(&model, &PeftConfig::new(Method::Lora, 8));
    let aoft = param_count(&model, &PeftConfig::new(Method::LoraAoft, 8));
    assert_eq!(lora.entries[0].count, 12288);
    assert_eq!(aoft.entries[0].count, 1536);
    assert_eq!(lora.entries[0].count / aoft.entries[0].count, 8);

    let lora1 = param_count(&model, &PeftConfig::new(Method::Lora, 1));
    let aoft1 = param_count(&model, &PeftConfig::new(Method::LoraAoft, 1));
    assert_eq!(lora1.entries[0].count, 2 * 768);
    assert_eq!(lora1.trainable_count, aoft1.trainable_count);
}

#[test]
fn census_matches_initialized_parameters() {
    let model = ModelConfig { dim: 16, heads: 2, layers: 2, ..ModelConfig::default() };
    for method in Method::ALL.into_iter().filter(|m| !matches!(m, Method::Full | Method::LinearProbe)) {
        for (targets, sites, star, gate) in [
            (LoraTargets::Qv, AdapterSites::Ffn, false, false),
            (LoraTargets::QvFfn, AdapterSites::FfnMha, true, true),
        ] {
            let peft = PeftConfig {
                lora_targets: targets,
                adapter_sites: sites,
                aoft_star: star,
                zero_gate: gate,
                ..PeftConfig::new(method, 4)
            };
            let params = init_adapter_params(&model, &peft, 1).unwrap();
            let n: usize = params.values().map(|m| m.rows() * m.cols()).sum();
            assert_eq!(n, param_count(&model, &peft).adapter_count, "{method}");
        }
    }
}

fn small_backbone() -> (ModelConfig, ParamStore, Matrix) {
    let model = ModelConfig { dim: 16, heads: 2, layers: 2, classes: 3, seed: 4, ..ModelConfig::default() };
    let mut store = init_backbone(&model).unwrap();
    let mut r = rng("head");
    store.insert("head.w", random_matrix(&mut r, 16, 3));
    store.insert("head.b", random_matrix(&mut r, 1, 3));
    let data = Dataset::generate(&BlobTask::task_a(3, model.image_size), &model, 6, 0, "zero-delta").unwrap();
    let (x, _) = data.batch(&[0, 1, 2, 3, 4, 5]).unwrap();
    (model, store, x)
}

#[test]
fn zero_init_schemes_leave_logits_bitwise_unchanged() {
    let (model, base, x) = small_backbone();
    let frozen = logits(&base, &model, &PeftConfig::new(Method::LinearProbe, 1), &x).unwrap();
    for method in [Method::LoraAoft, Method::AdapterAoft] {
        for (star, gate) in [(true, false), (false, true), (true, true)] {
            let peft = PeftConfig { aoft_star: star, zero_gate: gate, ..PeftConfig::new(method, 4) };
            let mut store = base.clone();
            store.extend(init_adapter_params(&model, &peft, 9).unwrap());
            let out = logits(&store, &model, &peft, &x).unwrap();
            assert!(
                out.data().iter().zip(frozen.data()).all(|(a, b)| a.to_bits() == b.to_bits()),
                "{method} star={star} gate={gate}"
            );
        }
    }
    for method in [Method::Lora, Method::Adapter] {
        let peft = PeftConfig::new(method, 4);
        let mut store = base.clone();
        store.extend(init_adapter_params(&model, &peft, 9).unwrap());
        assert_eq!(logits(&store, &model, &peft, &x).unwrap(), frozen, "{method}");
    }
}

#[test]
fn gradient_flow_through_every_scheme() {
    for (n, d) in [(4, 1), (9, 3), (32, 8)] {
        let r = grad_check(n, d, 5, 11).unwrap();
        assert!(r.max_rel_err <= 1e-6, "n={n} d={d}: {}", r.max_rel_err);
        for path in ["ao", "lora", "adapter", "vpt"] {
            assert!(r.cases.iter().any(|c| c.path == path));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn delta_has_rank_d(seed in any::<u64>(), n in 2usize..=32, frac in 0.0f64..1.0) {
        let d = 1 + ((n - 1) as f64 * frac) as usize;
        let mut r = aoft::seed::rng(seed, "rank");
        let layer = AdaptedLayer::lora(
            Matrix::zeros(n, n),
            g(unit_generator(&mut r, n)),
            g(unit_generator(&mut r, n)),
            d,
        ).unwrap();
        prop_assert_eq!(numerical_rank(&layer.delta().unwrap()), d);
    }
}
