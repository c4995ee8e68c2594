//! Adapter+AOFT on a block output, with and without the residual path.

use aoft::ao::GeneratorVector;
use aoft::linalg::{Matrix, Vector};
use aoft::peft::{adapter_aoft_forward, AdaptedLayer};
use aoft::seed::{self, normal_vec};

fn main() -> aoft::Result<()> {
    let dim = 8;
    let mut rng = seed::rng(1, "adapter-example");
    let h = Matrix::new(3, dim, normal_vec(&mut rng, 3 * dim, 1.0))?;
    let mut qd = normal_vec(&mut rng, dim, 0.2);
    qd[0] += 1.0;
    let mut qu = normal_vec(&mut rng, dim, 0.2);
    qu[0] += 1.0;
    let (qd, qu) = (GeneratorVector::new(qd)?, GeneratorVector::new(qu)?);

    for residual in [true, false] {
        let layer = AdaptedLayer::adapter(qd.clone(), qu.clone(), 2, residual)?;
        let out = adapter_aoft_forward(&h, &layer)?;
        println!("residual = {residual}: ‖out − h‖_F = {:.4}", out.sub(&h)?.frobenius_norm());
    }

    let star = AdaptedLayer::adapter(qd, qu, 2, true)?.with_lambda(Vector::zeros(2))?;
    println!("AOFT* at λ = 0 is the identity map: {}", adapter_aoft_forward(&h, &star)? == h);
    Ok(())
}
