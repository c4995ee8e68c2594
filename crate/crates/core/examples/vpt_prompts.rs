//! VPT+AOFT: one generator vector yields `d` mutually orthonormal prompts.

use aoft::ao::GeneratorVector;
use aoft::linalg::{gram, pairwise_column_angles, Matrix};
use aoft::peft::{vpt_aoft_prepend, AdaptedLayer};
use aoft::seed::{self, normal_vec};

fn main() -> aoft::Result<()> {
    let (dim, prompts) = (16, 4);
    let mut rng = seed::rng(2, "vpt-example");
    let tokens = Matrix::new(5, dim, normal_vec(&mut rng, 5 * dim, 1.0))?;
    let q = aoft::ao::normalize_strict(&GeneratorVector::new({
        let mut q = normal_vec(&mut rng, dim, 0.3);
        q[0] += 1.0;
        q
    })?)?;
    let layer = AdaptedLayer::vpt(Matrix::identity(dim), None, q, prompts)?;
    let stacked = vpt_aoft_prepend(&tokens, &layer, prompts)?;
    println!("{} tokens + {prompts} prompts -> {}x{}", tokens.rows(), stacked.rows(), stacked.cols());

    let p = Matrix::from_fn(prompts, dim, |i, j| stacked.get(tokens.rows() + i, j));
    let g = gram(&p.transpose());
    println!("prompt gram deviation from I: {:.2e}", g.max_abs_diff(&Matrix::identity(prompts)));
    println!("pairwise prompt angles: {:?}", pairwise_column_angles(&p.transpose())?);
    Ok(())
}
