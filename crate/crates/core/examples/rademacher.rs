//! Monte-Carlo Rademacher complexity of the norm-bounded linear class,
//! against exhaustive enumeration for a small sample.

use aoft::diagnostics::rademacher_estimate;
use aoft::linalg::Vector;
use aoft::seed::{self, normal_vec};

fn exhaustive(xs: &[Vector], gamma: f64) -> f64 {
    let m = xs.len();
    let mut total = 0.0;
    for mask in 0..1u32 << m {
        let mut s = vec![0.0; xs[0].len()];
        for (i, x) in xs.iter().enumerate() {
            let sign = if mask >> i & 1 == 1 { 1.0 } else { -1.0 };
            s.iter_mut().zip(x.as_slice()).for_each(|(a, b)| *a += sign * b);
        }
        total += Vector::from(s).norm();
    }
    gamma * total / f64::from(1u32 << m) / m as f64
}

fn main() -> aoft::Result<()> {
    let mut rng = seed::rng(4, "rademacher-example");
    let xs: Vec<Vector> = (0..6).map(|_| Vector::from(normal_vec(&mut rng, 5, 1.0))).collect();
    let exact = exhaustive(&xs, 1.0);
    for trials in [10, 100, 1000, 10_000] {
        let e = rademacher_estimate(&xs, 1.0, trials, 0)?;
        println!("{trials:>6} trials: {:.4} ± {:.4}  (exact {exact:.4})", e.estimate, e.std_error);
    }
    println!("\nthe bound grows linearly with γ:");
    for gamma in [0.5, 1.0, 2.0, 4.0] {
        println!("  γ = {gamma:<5} -> {:.4}", rademacher_estimate(&xs, gamma, 1000, 0)?.estimate);
    }
    Ok(())
}
