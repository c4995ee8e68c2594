//! A LoRA+AOFT weight update: two generator vectors stand in for the usual
//! `in×d` and `out×d` factors.

use aoft::ao::GeneratorVector;
use aoft::linalg::{matmul, Matrix, Vector};
use aoft::peft::{lora_aoft_forward, AdaptedLayer};
use aoft::seed::{self, normal_vec};

fn generator(label: &str, n: usize) -> aoft::Result<GeneratorVector> {
    let mut q = normal_vec(&mut seed::rng(0, label), n, 0.1);
    q[0] += 1.0;
    GeneratorVector::new(q)
}

fn main() -> aoft::Result<()> {
    let (din, dout, d) = (12, 10, 3);
    let mut rng = seed::rng(0, "lora-example");
    let w = Matrix::new(din, dout, normal_vec(&mut rng, din * dout, 0.3))?;
    let x = Matrix::new(4, din, normal_vec(&mut rng, 4 * din, 1.0))?;

    let layer = AdaptedLayer::lora(w.clone(), generator("down", din)?, generator("up", dout)?, d)?;
    let delta = layer.delta()?;
    println!("trainable: {:?}", layer.trainable_mask());
    println!("Δ is {}x{}, ‖Δ‖_F = {:.4}", delta.rows(), delta.cols(), delta.frobenius_norm());
    println!("generator parameters: {}, plain LoRA would train {}", din + dout, d * (din + dout));

    let y = lora_aoft_forward(&x, &layer)?;
    let base = matmul(&x, &w)?;
    println!("output moved by {:.4} (max abs)", y.max_abs_diff(&base));

    let zero = layer.with_lambda(Vector::zeros(d))?;
    println!("with λ = 0 the output equals x·W exactly: {}", lora_aoft_forward(&x, &zero)? == base);
    Ok(())
}
