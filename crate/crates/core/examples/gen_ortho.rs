//! Builds AO factors from a noisy generator and from its strictly normalized
//! version, then saves the strict one as MTX1.
//!
//! ```bash
//! cargo run --example gen_ortho
//! ```

use aoft::ao::{build_ortho, normalize_strict, orthonormality_error, GeneratorVector};
use aoft::linalg::{load_mtx1, save_mtx1};
use aoft::seed::{self, normal_vec};

fn main() -> aoft::Result<()> {
    let (n, d) = (64, 8);
    let mut rng = seed::rng(7, "gen-ortho-example");
    let mut q = normal_vec(&mut rng, n, 0.05);
    q[0] += 1.0;
    let relaxed = GeneratorVector::new(q)?;
    let strict = normalize_strict(&relaxed)?;

    for (label, g) in [("relaxed", &relaxed), ("strict", &strict)] {
        let f = build_ortho(g, d)?;
        println!(
            "{label:>8}: ‖q‖ = {:.6}  off-diagonal deviation = {:.3e}  orthonormality error = {:.3e}",
            f.source_norm(),
            f.deviation(),
            orthonormality_error(f.factor())
        );
    }

    let path = std::env::temp_dir().join("aoft_example_factor.mtx");
    let f = build_ortho(&strict, d)?;
    save_mtx1(&path, f.factor())?;
    let back = load_mtx1(&path)?;
    assert_eq!(&back, f.factor());
    println!("saved a {}x{} factor to {}", back.rows(), back.cols(), path.display());
    println!("{}", serde_json::to_string_pretty(&f.sidecar())?);
    Ok(())
}
