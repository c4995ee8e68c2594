//! Analytic generator gradients against central finite differences through
//! the bare operator and each integration scheme.

use aoft::gradcheck::grad_check;

fn main() -> aoft::Result<()> {
    for (n, d) in [(4, 2), (16, 4), (32, 8)] {
        let r = grad_check(n, d, 10, 0)?;
        println!("N = {n:>2}, d = {d}: max relative error {:.2e}", r.max_rel_err);
        for path in ["ao", "lora", "adapter", "vpt"] {
            let worst = r.cases.iter().filter(|c| c.path == path).map(|c| c.rel_err).fold(0.0, f64::max);
            println!("    {path:<8} {worst:.2e}");
        }
    }
    Ok(())
}
