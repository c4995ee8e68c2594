//! Spectral and Frobenius norms of freshly initialized adapters, and a
//! row-by-row comparison of two reports.

use aoft::checkpoint::Checkpoint;
use aoft::diagnostics::{compare_runs, norm_report};
use aoft::model::{ModelConfig, ParamStore};
use aoft::peft::{init_adapter_params, Method, PeftConfig};

fn adapter_checkpoint(model: &ModelConfig, method: Method) -> aoft::Result<Checkpoint> {
    let peft = PeftConfig::new(method, 8);
    let mut params = ParamStore::new();
    params.extend(init_adapter_params(model, &peft, 0)?);
    Ok(Checkpoint::adapter(model.clone(), peft, params))
}

fn main() -> aoft::Result<()> {
    let model = ModelConfig::default();
    let lora = norm_report(&adapter_checkpoint(&model, Method::Lora)?)?;
    let aoft = norm_report(&adapter_checkpoint(&model, Method::LoraAoft)?)?;
    print!("{}", aoft.to_csv());

    let cmp = compare_runs(&lora, &aoft)?;
    for r in &cmp.rows {
        println!("{:<20} lora {:.3}  aoft {:.3}  Δ {:+.3}", r.name, r.spectral_baseline, r.spectral_candidate, r.spectral_delta);
    }
    println!("{}", cmp.verdict);
    Ok(())
}
