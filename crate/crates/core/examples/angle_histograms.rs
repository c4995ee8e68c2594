//! Pairwise column angles of random, AO-generated and relaxed AO factors.

use aoft::ao::{build_ortho, GeneratorVector};
use aoft::diagnostics::angle_histogram;
use aoft::linalg::Matrix;
use aoft::seed::{self, normal_vec};

fn main() -> aoft::Result<()> {
    let (n, d) = (128, 32);
    let mut rng = seed::rng(3, "angles-example");
    let gaussian = Matrix::new(n, d, normal_vec(&mut rng, n * d, 1.0))?;
    let mut q = normal_vec(&mut rng, n, 0.05);
    q[0] += 1.0;
    let relaxed = build_ortho(&GeneratorVector::new(q.clone())?, d)?.into_factor();
    let stretched = build_ortho(&GeneratorVector::new(q.iter().map(|v| v * 1.6).collect::<Vec<_>>())?, d)?.into_factor();

    for (label, m) in [("gaussian", &gaussian), ("ao, ‖q‖≈1", &relaxed), ("ao, ‖q‖≈1.6", &stretched)] {
        let h = angle_histogram(m, 1.0)?.with_label(label);
        let mode = h.mode_bin();
        println!(
            "{:<12} pairs {:>4}  mean {:>7.3}°  std {:>7.3}°  mode [{}, {})",
            h.label, h.pairs, h.mean, h.std, h.edges[mode], h.edges[mode + 1]
        );
    }

    let h = angle_histogram(&gaussian, 5.0)?;
    println!("\n5° bins for the gaussian matrix:");
    for (i, c) in h.counts.iter().enumerate().filter(|(_, c)| **c > 0) {
        println!("  {:>5.0}-{:<5.0} {}", h.edges[i], h.edges[i + 1], "#".repeat((*c as usize).div_ceil(4)));
    }
    Ok(())
}
