//! Approximately orthogonal factors generated from a single vector.
//!
//! A generator vector `q ∈ ℝᴺ` defines the `N×N` matrix
//!
//! ```text
//!     ⎡ q₀   −q₁                 …   −q_{N−1}               ⎤
//! Q = ⎢ q₁   1 − q₁q₁/(1+q₀)     …   −q_{N−1}q₁/(1+q₀)       ⎥
//!     ⎢ ⋮     ⋮                        ⋮                     ⎥
//!     ⎣ q_{N−1}  −q₁q_{N−1}/(1+q₀) … 1 − q_{N−1}²/(1+q₀)     ⎦
//! ```
//!
//! whose columns are exactly orthonormal when `‖q‖₂ = 1` and drift away from
//! orthogonality smoothly as `‖q‖` leaves 1. The factor used by the adapters
//! is the slab of its first `d` columns, `AO(q) = Q[:, 0:d]`.
//!
//! The same matrix can be written in rotation form with `q₀ = cos φ` and
//! `qᵢ = xᵢ sin φ` for a unit vector `x`; [`from_rotation`] builds that form
//! literally and serves as an independent cross-check.

use crate::error::{invalid, AoftError, Result};
use crate::linalg::{gram, Matrix, Vector};

/// Smallest admissible value of `1 + q₀`.
pub const EPS_POLE: f64 = 1e-6;

/// The learnable vector `q` that parameterizes an entire factor.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorVector {
    q: Vector,
}

impl GeneratorVector {
    pub fn new(q: impl Into<Vector>) -> Result<Self> {
        let q: Vector = q.into();
        if q.is_empty() {
            return Err(invalid("generator vector must have at least one entry"));
        }
        if let Some(i) = q.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(AoftError::NonFinite(format!("generator entry {i}")));
        }
        check_pole(q[0])?;
        Ok(Self { q })
    }

    /// `e₀`, which generates the identity.
    pub fn identity(n: usize) -> Self {
        Self {
            q: Vector::basis(n, 0),
        }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.q.as_slice()
    }

    pub fn vector(&self) -> &Vector {
        &self.q
    }

    pub fn norm(&self) -> f64 {
        self.q.norm()
    }
}

fn check_pole(q0: f64) -> Result<()> {
    if 1.0 + q0 > EPS_POLE {
        Ok(())
    } else {
        Err(AoftError::Pole { q0 })
    }
}

/// Entry `(i, j)` of the generated matrix. Shared by every builder so that
/// slab and full constructions agree bitwise.
#[inline]
fn entry(q: &[f64], denom: f64, i: usize, j: usize) -> f64 {
    match (i, j) {
        (_, 0) => q[i],
        (0, _) => -q[j],
        _ => {
            let delta = if i == j { 1.0 } else { 0.0 };
            delta - q[i] * q[j] / denom
        }
    }
}

/// The full `N×N` matrix `Q`.
pub fn build_full(g: &GeneratorVector) -> Matrix {
    let q = g.as_slice();
    let denom = 1.0 + q[0];
    let n = q.len();
    Matrix::from_fn(n, n, |i, j| entry(q, denom, i, j))
}

/// The first `d` columns of `Q`, with a cached orthogonality score.
#[derive(Clone, Debug, PartialEq)]
pub struct OrthoFactor {
    factor: Matrix,
    source_norm: f64,
    deviation: f64,
}

impl OrthoFactor {
    pub fn factor(&self) -> &Matrix {
        &self.factor
    }

    pub fn into_factor(self) -> Matrix {
        self.factor
    }

    pub fn n(&self) -> usize {
        self.factor.rows()
    }

    pub fn d(&self) -> usize {
        self.factor.cols()
    }

    /// `‖q‖₂` of the generator the factor was built from.
    pub fn source_norm(&self) -> f64 {
        self.source_norm
    }

    /// Largest off-diagonal entry of `gram(factor)`.
    pub fn deviation(&self) -> f64 {
        self.deviation
    }

    /// JSON sidecar `{N, d, source_norm, deviation}` stored next to the MTX1 payload.
    pub fn sidecar(&self) -> serde_json::Value {
        serde_json::json!({
            "N": self.n(),
            "d": self.d(),
            "source_norm": self.source_norm,
            "deviation": self.deviation,
        })
    }
}

/// Builds `AO(q)` column by column without materializing `Q`.
pub fn ao_slab(g: &GeneratorVector, d: usize) -> Result<Matrix> {
    let n = g.len();
    if d == 0 || d > n {
        return Err(invalid(format!("bottleneck d = {d} must lie in 1..={n}")));
    }
    let q = g.as_slice();
    check_pole(q[0])?;
    let denom = 1.0 + q[0];
    Ok(Matrix::from_fn(n, d, |i, j| entry(q, denom, i, j)))
}

pub fn build_ortho(g: &GeneratorVector, d: usize) -> Result<OrthoFactor> {
    let factor = ao_slab(g, d)?;
    let deviation = off_diagonal_max(&gram(&factor));
    Ok(OrthoFactor {
        factor,
        source_norm: g.norm(),
        deviation,
    })
}

/// Largest off-diagonal magnitude of a Gram matrix.
fn off_diagonal_max(g: &Matrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            if i != j {
                worst = worst.max(g.get(i, j).abs());
            }
        }
    }
    worst
}

/// Max-abs entry of `gram(m) − I`, diagonal included.
pub fn orthonormality_error(m: &Matrix) -> f64 {
    let g = gram(m);
    let mut worst = 0.0f64;
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g.get(i, j) - target).abs());
        }
    }
    worst
}

/// Largest off-diagonal entry of `QᵀQ` for the full generated matrix, i.e.
/// how far the columns of `Q` are from mutual orthogonality. Column norms are
/// not part of this score; see [`orthonormality_error`] for that.
pub fn ortho_deviation(g: &GeneratorVector) -> Result<f64> {
    check_pole(g.as_slice()[0])?;
    Ok(off_diagonal_max(&gram(&build_full(g))))
}

/// Gradient of `⟨upstream, AO(q)⟩` with respect to `q`.
///
/// Every entry of `Q` is rational in `q`; differentiating entry by entry:
///
/// * column 0 contributes `U[i][0]` to `∂/∂qᵢ`,
/// * row 0 (`−q_j`) contributes `−U[0][j]` to `∂/∂q_j`,
/// * interior entries `δᵢⱼ − qᵢq_j/s` with `s = 1 + q₀` contribute
///   `−q_j/s` to `∂/∂qᵢ`, `−qᵢ/s` to `∂/∂q_j` and `qᵢq_j/s²` to `∂/∂q₀`.
pub fn grad_q(g: &GeneratorVector, d: usize, upstream: &Matrix) -> Result<Vector> {
    let n = g.len();
    if upstream.shape() != (n, d) {
        return Err(AoftError::ShapeMismatch {
            op: "grad_q",
            left: (n, d),
            right: upstream.shape(),
        });
    }
    if d == 0 || d > n {
        return Err(invalid(format!("bottleneck d = {d} must lie in 1..={n}")));
    }
    let q = g.as_slice();
    check_pole(q[0])?;
    let s = 1.0 + q[0];
    let mut grad = vec![0.0; n];

    for (i, gi) in grad.iter_mut().enumerate() {
        *gi += upstream.get(i, 0);
    }
    for j in 1..d {
        grad[j] -= upstream.get(0, j);
    }

    // Interior block: rows 1..n, columns 1..d.
    // row_dot[i] = Σ_j U[i][j] q_j, col_dot[j] = Σ_i U[i][j] q_i
    let mut col_dot = vec![0.0; d];
    let mut q0_term = 0.0;
    for i in 1..n {
        let row = upstream.row(i);
        let mut row_dot = 0.0;
        for j in 1..d {
            row_dot += row[j] * q[j];
            col_dot[j] += row[j] * q[i];
        }
        grad[i] -= row_dot / s;
        q0_term += q[i] * row_dot;
    }
    for j in 1..d {
        grad[j] -= col_dot[j] / s;
    }
    grad[0] += q0_term / (s * s);

    Ok(Vector::from(grad))
}

/// `q / ‖q‖₂`.
pub fn normalize_strict(g: &GeneratorVector) -> Result<GeneratorVector> {
    let norm = g.norm();
    if norm == 0.0 {
        return Err(AoftError::ZeroVector);
    }
    GeneratorVector::new(g.vector().scale(1.0 / norm))
}

/// Rotation-form parameters: `q₀ = cos φ`, `qᵢ = xᵢ sin φ` with `‖x‖ = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct RotationForm {
    phi: f64,
    x: Vector,
}

impl RotationForm {
    pub fn new(phi: f64, x: impl Into<Vector>) -> Result<Self> {
        let x: Vector = x.into();
        if !phi.is_finite() {
            return Err(AoftError::NonFinite("rotation angle".into()));
        }
        if (x.norm() - 1.0).abs() >= 1e-12 {
            return Err(invalid(format!(
                "rotation axis must be unit norm, got ‖x‖ = {}",
                x.norm()
            )));
        }
        Ok(Self { phi, x })
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn axis(&self) -> &Vector {
        &self.x
    }

    /// The generator vector with `q₀ = cos φ`, `qᵢ = xᵢ sin φ`.
    pub fn to_generator(&self) -> Result<GeneratorVector> {
        let (s, c) = self.phi.sin_cos();
        let mut q = Vec::with_capacity(self.x.len() + 1);
        q.push(c);
        q.extend(self.x.as_slice().iter().map(|xi| xi * s));
        GeneratorVector::new(q)
    }
}

/// The `N×N` rotation-form matrix, entry by entry:
/// `(0,0) = cos φ`, `(i,0) = xᵢ sin φ`, `(0,j) = −x_j sin φ`,
/// `(i,j) = δᵢⱼ + xᵢx_j(cos φ − 1)`.
pub fn from_rotation(r: &RotationForm) -> Matrix {
    let (s, c) = r.phi.sin_cos();
    let x = r.x.as_slice();
    let n = x.len() + 1;
    Matrix::from_fn(n, n, |i, j| match (i, j) {
        (0, 0) => c,
        (i, 0) => x[i - 1] * s,
        (0, j) => -x[j - 1] * s,
        (i, j) => {
            let delta = if i == j { 1.0 } else { 0.0 };
            delta + x[i - 1] * x[j - 1] * (c - 1.0)
        }
    })
}
