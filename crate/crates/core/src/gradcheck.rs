//! Central finite-difference checks of the analytic generator gradients,
//! both for the bare operator and through each integration scheme.

use serde::Serialize;

use crate::ao::{ao_slab, grad_q, GeneratorVector};
use crate::error::{invalid, Result};
use crate::linalg::{Matrix, Vector};
use crate::peft::{adapter_aoft_forward, lora_aoft_forward, vpt_aoft_forward, AdaptedLayer};
use crate::seed::{self, normal_vec, Rng};

pub const FD_STEP: f64 = 1e-6;

/// `‖a − b‖₂ / max(‖a‖₂, ‖b‖₂)`, or 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = Vector::from(a.to_vec()).norm().max(Vector::from(b.to_vec()).norm());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Central differences of `f` at `x`.
pub fn central_difference(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> Result<f64>) -> Result<Vec<f64>> {
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe)?;
        probe[i] = x[i] - h;
        let down = f(&probe)?;
        probe[i] = x[i];
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

fn inner(a: &Matrix, b: &Matrix) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn random_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::new(rows, cols, normal_vec(rng, rows * cols, 1.0)).expect("finite draws")
}

/// A generator comfortably away from the pole, with norm near but not at 1.
fn random_generator(rng: &mut Rng, n: usize) -> GeneratorVector {
    let mut q = normal_vec(rng, n, 0.3);
    q[0] = 0.6 + q[0].abs();
    GeneratorVector::new(q).expect("off the pole")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckCase {
    pub trial: usize,
    pub path: &'static str,
    pub rel_err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub n: usize,
    pub d: usize,
    pub trials: usize,
    pub max_rel_err: f64,
    pub cases: Vec<GradCheckCase>,
}

/// Checks `grad_q` and the LoRA, Adapter (residual, AOFT*) and VPT paths on
/// `trials` random draws of size `n×d`.
pub fn grad_check(n: usize, d: usize, trials: usize, seed: u64) -> Result<GradCheckReport> {
    if n < 2 || d == 0 || d > n {
        return Err(invalid(format!("grad-check needs 2 <= n and 1 <= d <= n, got n={n} d={d}")));
    }
    if trials == 0 {
        return Err(invalid("trials must be positive"));
    }
    let mut cases = Vec::new();
    for t in 0..trials {
        let mut rng = seed::rng(seed, &format!("grad-check/{t}"));
        let qd = random_generator(&mut rng, n);
        let qu = random_generator(&mut rng, n);
        let lambda = Vector::from(normal_vec(&mut rng, d, 1.0));
        let x = random_matrix(&mut rng, 3, n);

        let u = random_matrix(&mut rng, n, d);
        let analytic = grad_q(&qd, d, &u)?;
        let fd = central_difference(qd.as_slice(), FD_STEP, |q| {
            Ok(inner(&u, &ao_slab(&GeneratorVector::new(q.to_vec())?, d)?))
        })?;
        cases.push(GradCheckCase { trial: t, path: "ao", rel_err: relative_error(analytic.as_slice(), &fd) });

        let base = random_matrix(&mut rng, n, n);
        let up = random_matrix(&mut rng, 3, n);
        let lora = AdaptedLayer::lora(base.clone(), qd.clone(), qu.clone(), d)?;
        let g = lora.gradients(&x, &up, 0)?;
        let fd_down = central_difference(qd.as_slice(), FD_STEP, |q| {
            let l = AdaptedLayer::lora(base.clone(), GeneratorVector::new(q.to_vec())?, qu.clone(), d)?;
            Ok(inner(&up, &lora_aoft_forward(&x, &l)?))
        })?;
        let fd_up = central_difference(qu.as_slice(), FD_STEP, |q| {
            let l = AdaptedLayer::lora(base.clone(), qd.clone(), GeneratorVector::new(q.to_vec())?, d)?;
            Ok(inner(&up, &lora_aoft_forward(&x, &l)?))
        })?;
        let mut a = g.q_down.as_slice().to_vec();
        a.extend_from_slice(g.q_up.as_ref().expect("LoRA has q_up").as_slice());
        let mut f = fd_down;
        f.extend(fd_up);
        cases.push(GradCheckCase { trial: t, path: "lora", rel_err: relative_error(&a, &f) });

        let adapter = AdaptedLayer::adapter(qd.clone(), qu.clone(), d, true)?.with_lambda(lambda.clone())?;
        let g = adapter.gradients(&x, &up, 0)?;
        let adapter_at = |qd: GeneratorVector, lambda: Vector| -> Result<f64> {
            let l = AdaptedLayer::adapter(qd, qu.clone(), d, true)?.with_lambda(lambda)?;
            Ok(inner(&up, &adapter_aoft_forward(&x, &l)?))
        };
        let mut f = central_difference(qd.as_slice(), FD_STEP, |q| {
            adapter_at(GeneratorVector::new(q.to_vec())?, lambda.clone())
        })?;
        f.extend(central_difference(lambda.as_slice(), FD_STEP, |l| {
            adapter_at(qd.clone(), Vector::from(l.to_vec()))
        })?);
        let mut a = g.q_down.as_slice().to_vec();
        a.extend_from_slice(g.lambda.as_ref().expect("AOFT* has lambda").as_slice());
        cases.push(GradCheckCase { trial: t, path: "adapter", rel_err: relative_error(&a, &f) });

        let vpt = AdaptedLayer::vpt(base.clone(), None, qd.clone(), d)?;
        let up_v = random_matrix(&mut rng, 3 + d, n);
        let g = vpt.gradients(&x, &matrix_for_vpt(&up_v, &base)?, d)?;
        let f = central_difference(qd.as_slice(), FD_STEP, |q| {
            let l = AdaptedLayer::vpt(base.clone(), None, GeneratorVector::new(q.to_vec())?, d)?;
            Ok(inner(&up_v, &vpt_aoft_forward(&x, &l, d)?))
        })?;
        cases.push(GradCheckCase { trial: t, path: "vpt", rel_err: relative_error(g.q_down.as_slice(), &f) });
    }
    let max_rel_err = cases.iter().map(|c| c.rel_err).fold(0.0, f64::max);
    Ok(GradCheckReport { n, d, trials, max_rel_err, cases })
}

/// `AdaptedLayer::gradients` differentiates the stacked tokens; pulling the
/// projection's upstream back through `W` gives the stacked-token upstream.
fn matrix_for_vpt(upstream: &Matrix, base: &Matrix) -> Result<Matrix> {
    crate::linalg::matmul_nt(upstream, base)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes() {
        let r = grad_check(6, 3, 4, 0).unwrap();
        assert_eq!(r.cases.len(), 16);
        assert!(r.max_rel_err < 1e-6, "{}", r.max_rel_err);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(grad_check(1, 1, 1, 0).is_err());
        assert!(grad_check(4, 5, 1, 0).is_err());
        assert!(grad_check(4, 2, 0, 0).is_err());
    }

    #[test]
    fn relative_error_basics() {
        assert_eq!(relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(relative_error(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
        assert!((relative_error(&[1.0], &[2.0]) - 0.5).abs() < 1e-15);
    }
}
