//! The desk-scale experiment end to end: pre-train on task A, fine-tune on
//! the shifted task B with several methods, then inspect the adapters.
//!
//! ```bash
//! cargo run --release --example pretrain_finetune [config.toml]
//! ```

use std::time::Instant;

use aoft::diagnostics::{angle_histogram, compare_runs, norm_report, AngleHistogram};
use aoft::experiment::RunConfig;
use aoft::model::adapter_factors;
use aoft::peft::Method;
use aoft::trainer::FinetuneResult;

fn pooled_angles(r: &FinetuneResult) -> aoft::Result<AngleHistogram> {
    let peft = r.adapters.peft.as_ref().expect("adapter checkpoint");
    let mut parts = Vec::new();
    for (_, down, up) in adapter_factors(&r.store, &r.adapters.model, peft)? {
        parts.push(angle_histogram(&down, 1.0)?);
        parts.push(angle_histogram(&up, 1.0)?);
    }
    AngleHistogram::pooled(&parts, peft.method.name())
}

fn main() -> aoft::Result<()> {
    let cfg = match std::env::args().nth(1) {
        Some(path) => RunConfig::from_toml(&std::fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    let data = cfg.datasets()?;

    let t = Instant::now();
    let pre = cfg.pretrain(&data)?;
    println!(
        "pretrain: train accuracy {:.3}, loss {:.4} ({:.1} s)",
        pre.train_accuracy,
        pre.final_loss,
        t.elapsed().as_secs_f64()
    );

    let mut runs = Vec::new();
    for method in [Method::LinearProbe, Method::Lora, Method::LoraAoft, Method::Full] {
        let t = Instant::now();
        let r = cfg.finetune(&pre.checkpoint, method, &data)?;
        println!(
            "{:<13} eval {:.4} (start {:.4}), {:>6} trainable, {:.1} s",
            method.name(),
            r.final_eval_accuracy(),
            r.initial_eval_accuracy,
            r.budget.trainable_count,
            t.elapsed().as_secs_f64()
        );
        runs.push((method, r));
    }
    let get = |m: Method| &runs.iter().find(|(k, _)| *k == m).expect("ran").1;

    let (lora, aoft) = (get(Method::Lora), get(Method::LoraAoft));
    for r in [lora, aoft] {
        let h = pooled_angles(r)?;
        println!("{:<10} factor angles: mean {:.2}°, std {:.2}°", h.label, h.mean, h.std);
    }
    let cmp = compare_runs(&norm_report(&lora.adapters)?, &norm_report(&aoft.adapters)?)?;
    println!("{}", cmp.verdict);
    if let Some(last) = aoft.metrics.last() {
        for (name, norm) in &last.q_norms {
            println!("  ‖{name}‖ = {norm:.3}");
        }
    }
    Ok(())
}
