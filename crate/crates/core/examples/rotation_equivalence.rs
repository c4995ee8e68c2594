//! The generator form and the rotation-angle form describe the same matrix.

use aoft::ao::{build_full, from_rotation, ortho_deviation, RotationForm};

fn main() -> aoft::Result<()> {
    let axis = vec![0.48, -0.6, 0.64];
    for phi in [0.0, 0.3, 1.2, 2.5] {
        let r = RotationForm::new(phi, axis.clone())?;
        let g = r.to_generator()?;
        let gap = from_rotation(&r).max_abs_diff(&build_full(&g));
        println!(
            "φ = {phi:.1}: q = {:?}  max gap = {gap:.1e}  deviation = {:.1e}",
            g.as_slice().iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>(),
            ortho_deviation(&g)?
        );
    }

    println!("\nscaling a unit generator away from the sphere breaks orthogonality:");
    let g = RotationForm::new(0.9, axis)?.to_generator()?;
    for a in [0.5, 0.9, 1.0, 1.1, 2.0] {
        let scaled = aoft::ao::GeneratorVector::new(g.vector().scale(a))?;
        println!("  ‖q‖ = {a:.1}: deviation = {:.4}", ortho_deviation(&scaled)?);
    }
    Ok(())
}
