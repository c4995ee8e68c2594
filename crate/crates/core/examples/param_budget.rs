//! Trainable-parameter census per method for a ViT-B-sized layer and for the
//! desk-scale toy model.

use aoft::model::ModelConfig;
use aoft::peft::{param_count, Method, PeftConfig};

fn table(title: &str, model: &ModelConfig, d: usize) {
    println!("{title} (D = {}, L = {}, d = {d})", model.dim, model.layers);
    println!("  {:<14} {:>10} {:>10} {:>10}", "method", "adapter", "head", "trainable");
    for method in Method::ALL {
        let b = param_count(model, &PeftConfig::new(method, d));
        println!("  {:<14} {:>10} {:>10} {:>10}", method.name(), b.adapter_count, b.head_count, b.trainable_count);
    }
}

fn main() {
    let vit_b = ModelConfig { dim: 768, heads: 12, layers: 12, classes: 100, ..ModelConfig::default() };
    table("ViT-B width", &vit_b, 8);
    println!();
    table("toy model", &ModelConfig::default(), 8);

    let star = PeftConfig { aoft_star: true, zero_gate: true, ..PeftConfig::new(Method::LoraAoft, 8) };
    let b = param_count(&ModelConfig::default(), &star);
    println!("\nLoRA+AOFT* with zero gate, per adapted matrix:");
    for e in &b.entries {
        println!("  layer {:?} {:<4} {}", e.layer, e.name, e.count);
    }
}
