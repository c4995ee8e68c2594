//! Dense row-major `f64` matrices and the handful of kernels the rest of the
//! crate needs: products, spectral/Frobenius norms, Gram matrices and
//! pairwise column angles.
//!
//! Every reduction runs in a fixed loop order, so results are bit-for-bit
//! reproducible on a given platform.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{invalid, AoftError, Result};

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            writeln!(f, "  {:?}", &self.row(r)[..self.cols.min(8)])?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(invalid(format!(
                "matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(AoftError::NonFinite(format!(
                "entry ({}, {}) of a {rows}x{cols} matrix",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds from row slices. Panics on ragged input; meant for literals.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        Self::from_fn(n, n, |i, j| if i == j { values[i] } else { 0.0 })
    }

    /// A single row holding `v`.
    pub fn row_vector(v: &[f64]) -> Self {
        Self {
            rows: 1,
            cols: v.len(),
            data: v.to_vec(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// Columns `[start, start + len)` as a new matrix.
    pub fn column_slab(&self, start: usize, len: usize) -> Result<Matrix> {
        if start + len > self.cols {
            return Err(invalid(format!(
                "column slab {start}..{} out of range for {} columns",
                start + len,
                self.cols
            )));
        }
        Ok(Matrix::from_fn(self.rows, len, |i, j| self.get(i, start + j)))
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn check_same_shape(&self, other: &Matrix, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(AoftError::ShapeMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other, "add")?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other, "sub")?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other, "hadamard")?;
        Ok(self.zip_map(other, |a, b| a * b))
    }

    pub(crate) fn zip_map(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        debug_assert_eq!(self.shape(), other.shape());
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Matrix {
        self.map(|v| v * c)
    }

    /// In-place `self += other`. Shapes must already agree.
    pub(crate) fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest absolute entrywise difference. Panics on shape mismatch.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Stacks `self` above `other`.
    pub fn vstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(AoftError::ShapeMismatch {
                op: "vstack",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Matrix {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }

    /// Little-endian byte image of the payload, used for checksums.
    pub fn payload_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len() * 8);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }
}

/// A dense vector of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(AoftError::NonFinite(format!("vector entry {i}")));
        }
        Ok(Self(data))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    /// Standard basis vector `e_index`.
    pub fn basis(len: usize, index: usize) -> Self {
        let mut v = vec![0.0; len];
        v[index] = 1.0;
        Self(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }

    pub fn scale(&self, c: f64) -> Vector {
        Vector(self.0.iter().map(|v| v * c).collect())
    }

    pub fn to_row_matrix(&self) -> Matrix {
        Matrix::row_vector(&self.0)
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Vector(v)
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Dot product with four interleaved partial sums, combined in a fixed order.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `a · b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(AoftError::ShapeMismatch {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    let n = b.cols;
    for i in 0..a.rows {
        let a_row = a.row(i);
        let out_row = &mut out.data[i * n..(i + 1) * n];
        for (k, &aik) in a_row.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let b_row = &b.data[k * n..(k + 1) * n];
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// `a · bᵀ` without materializing the transpose.
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(AoftError::ShapeMismatch {
            op: "matmul_nt",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut out = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let a_row = a.row(i);
        for j in 0..b.rows {
            out.data[i * b.rows + j] = dot(a_row, b.row(j));
        }
    }
    Ok(out)
}

/// `aᵀ · b` without materializing the transpose.
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows {
        return Err(AoftError::ShapeMismatch {
            op: "matmul_tn",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let n = b.cols;
    let mut out = Matrix::zeros(a.cols, n);
    for r in 0..a.rows {
        let b_row = b.row(r);
        for (i, &ari) in a.row(r).iter().enumerate() {
            if ari == 0.0 {
                continue;
            }
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for (o, &brj) in out_row.iter_mut().zip(b_row) {
                *o += ari * brj;
            }
        }
    }
    Ok(out)
}

/// `aᵀa`. The upper triangle is computed and mirrored, so the result is
/// exactly symmetric.
pub fn gram(a: &Matrix) -> Matrix {
    const BLOCK: usize = 16;
    let at = a.transpose();
    let n = a.cols;
    let mut g = Matrix::zeros(n, n);
    for i0 in (0..n).step_by(BLOCK) {
        let i1 = (i0 + BLOCK).min(n);
        for j in i0..n {
            let cj = at.row(j);
            for i in i0..i1.min(j + 1) {
                g.data[i * n + j] = dot(at.row(i), cj);
            }
        }
    }
    // Only the upper triangle was computed; mirror it.
    for i in 0..n {
        for j in (i + 1)..n {
            g.data[j * n + i] = g.data[i * n + j];
        }
    }
    g
}

/// Result of a power iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralNorm {
    pub value: f64,
    pub iterations: usize,
    /// False when `max_iter` sweeps ran out before the tolerance was met.
    pub converged: bool,
}

/// Largest singular value via power iteration on `aᵀa`.
///
/// Starts from the normalized all-ones vector. If that start lies in the
/// null space of `a`, a fixed sequence of alternative starts is tried.
pub fn spectral_norm(a: &Matrix, tol: f64, max_iter: usize) -> Result<SpectralNorm> {
    if a.rows == 0 || a.cols == 0 {
        return Err(invalid("spectral_norm of an empty matrix"));
    }
    if !(tol > 0.0) {
        return Err(invalid(format!("spectral_norm tolerance must be > 0, got {tol}")));
    }
    let fro = a.frobenius_norm();
    if fro == 0.0 {
        return Ok(SpectralNorm {
            value: 0.0,
            iterations: 0,
            converged: true,
        });
    }

    let n = a.cols;
    let mut v = None;
    for attempt in 0..=n {
        let mut cand: Vec<f64> = match attempt {
            0 => vec![1.0; n],
            k => (0..n)
                .map(|i| if i == k - 1 { 1.0 } else { 0.5 / (1.0 + (i + k) as f64) })
                .collect(),
        };
        let norm = dot(&cand, &cand).sqrt();
        cand.iter_mut().for_each(|x| *x /= norm);
        let av = mat_vec(a, &cand);
        if dot(&av, &av).sqrt() > 1e-12 * fro {
            v = Some(cand);
            break;
        }
    }
    let mut v = v.expect("a nonzero matrix has a column not annihilated by some start");

    let mut sigma = 0.0f64;
    for it in 1..=max_iter {
        let av = mat_vec(a, &v);
        let mut w = mat_t_vec(a, &av);
        // Rayleigh quotient vᵀaᵀav with ‖v‖ = 1
        let next = dot(&av, &av).sqrt();
        let wn = dot(&w, &w).sqrt();
        if wn == 0.0 {
            return Ok(SpectralNorm {
                value: next,
                iterations: it,
                converged: true,
            });
        }
        w.iter_mut().for_each(|x| *x /= wn);
        v = w;
        if (next - sigma).abs() <= tol * next {
            return Ok(SpectralNorm {
                value: next,
                iterations: it,
                converged: true,
            });
        }
        sigma = next;
    }
    Ok(SpectralNorm {
        value: sigma,
        iterations: max_iter,
        converged: false,
    })
}

/// Spectral norm with tolerances suitable for diagnostics tables.
pub fn spectral_norm_default(a: &Matrix) -> f64 {
    if a.rows == 0 || a.cols == 0 {
        return 0.0;
    }
    spectral_norm(a, 1e-13, 20_000)
        .map(|s| s.value)
        .unwrap_or(0.0)
}

fn mat_vec(a: &Matrix, v: &[f64]) -> Vec<f64> {
    (0..a.rows).map(|i| dot(a.row(i), v)).collect()
}

fn mat_t_vec(a: &Matrix, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.cols];
    for (i, &vi) in v.iter().enumerate() {
        for (o, &aij) in out.iter_mut().zip(a.row(i)) {
            *o += aij * vi;
        }
    }
    out
}

/// Angles in degrees between every unordered pair of columns `(i < j)`, in
/// lexicographic pair order.
pub fn pairwise_column_angles(a: &Matrix) -> Result<Vec<f64>> {
    if a.cols < 2 {
        return Err(invalid(format!(
            "pairwise angles need at least 2 columns, got {}",
            a.cols
        )));
    }
    let at = a.transpose();
    let mut units = Vec::with_capacity(a.cols);
    for index in 0..a.cols {
        let c = at.row(index);
        let norm = dot(c, c).sqrt();
        if norm == 0.0 {
            return Err(AoftError::ZeroColumn { index });
        }
        units.push(c.iter().map(|v| v / norm).collect::<Vec<_>>());
    }
    let mut out = Vec::with_capacity(a.cols * (a.cols - 1) / 2);
    for i in 0..a.cols {
        for j in (i + 1)..a.cols {
            out.push(unit_angle(&units[i], &units[j]).to_degrees());
        }
    }
    Ok(out)
}

/// Angle between unit vectors as `2·atan2(‖u − v‖, ‖u + v‖)`, which stays
/// accurate near 0° and 180° where `acos` of the cosine loses half the digits.
fn unit_angle(u: &[f64], v: &[f64]) -> f64 {
    let (mut diff, mut sum) = (0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        diff += (a - b) * (a - b);
        sum += (a + b) * (a + b);
    }
    2.0 * diff.sqrt().atan2(sum.sqrt())
}

// ---------------------------------------------------------------------------
// MTX1 binary format
//
//   offset  size  field
//   0       4     magic  b"MTX1"
//   4       4     dtype  u32 LE, 1 = f64
//   8       8     rows   u64 LE
//   16      8     cols   u64 LE
//   24      1     layout u8, 0 = row-major
//   25      7     reserved, zero
//   32      8·n   payload, f64 LE, row-major
// ---------------------------------------------------------------------------

pub const MTX1_MAGIC: &[u8; 4] = b"MTX1";
const MTX1_DTYPE_F64: u32 = 1;
const MTX1_HEADER_LEN: usize = 32;

pub fn write_mtx1(w: &mut impl Write, m: &Matrix) -> Result<()> {
    let mut header = [0u8; MTX1_HEADER_LEN];
    header[0..4].copy_from_slice(MTX1_MAGIC);
    header[4..8].copy_from_slice(&MTX1_DTYPE_F64.to_le_bytes());
    header[8..16].copy_from_slice(&(m.rows as u64).to_le_bytes());
    header[16..24].copy_from_slice(&(m.cols as u64).to_le_bytes());
    w.write_all(&header)?;
    w.write_all(&m.payload_bytes())?;
    Ok(())
}

pub fn read_mtx1(r: &mut impl Read) -> Result<Matrix> {
    let mut header = [0u8; MTX1_HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|e| AoftError::Format(format!("MTX1 header: {e}")))?;
    if &header[0..4] != MTX1_MAGIC {
        return Err(AoftError::Format("bad MTX1 magic".into()));
    }
    let dtype = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if dtype != MTX1_DTYPE_F64 {
        return Err(AoftError::Format(format!("unsupported MTX1 dtype {dtype}")));
    }
    let rows = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(header[16..24].try_into().unwrap()) as usize;
    if header[24] != 0 {
        return Err(AoftError::Format(format!("unsupported MTX1 layout {}", header[24])));
    }
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| AoftError::Format("MTX1 shape overflows".into()))?;
    let mut payload = vec![0u8; n * 8];
    r.read_exact(&mut payload)
        .map_err(|e| AoftError::Format(format!("MTX1 payload: {e}")))?;
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Matrix::new(rows, cols, data)
}

pub fn save_mtx1(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_mtx1(&mut f, m)?;
    f.flush()?;
    Ok(())
}

pub fn load_mtx1(path: impl AsRef<Path>) -> Result<Matrix> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_mtx1(&mut f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lcg_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        Matrix::from_fn(rows, cols, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    #[test]
    fn identity_times_a() {
        let a = lcg_matrix(3, 4, 1);
        assert_eq!(matmul(&Matrix::identity(3), &a).unwrap(), a);
    }

    #[test]
    fn small_product_by_hand() {
        let a = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = Matrix::from_rows(&[&[0.0], &[1.0]]);
        assert_eq!(
            matmul(&a, &b).unwrap(),
            Matrix::from_rows(&[&[2.0], &[4.0]])
        );
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let a = lcg_matrix(5, 7, 2);
        let b = lcg_matrix(7, 3, 3);
        let c = matmul(&a, &b).unwrap();
        for i in 0..5 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..7 {
                    s += a.get(i, k) * b.get(k, j);
                }
                assert!((c.get(i, j) - s).abs() < 1e-14);
            }
        }
        let nt = matmul_nt(&a, &b.transpose()).unwrap();
        let tn = matmul_tn(&a.transpose(), &b).unwrap();
        assert!(nt.max_abs_diff(&c) < 1e-14);
        assert!(tn.max_abs_diff(&c) < 1e-14);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let err = matmul(&Matrix::zeros(2, 3), &Matrix::zeros(2, 3)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(2, 3)"), "{msg}");
    }

    #[test]
    fn spectral_norm_simple_cases() {
        let s = spectral_norm(&Matrix::identity(6), 1e-12, 100).unwrap();
        assert!((s.value - 1.0).abs() < 1e-12 && s.converged);
        let s = spectral_norm(&Matrix::diag(&[3.0, 1.0, 0.5]), 1e-14, 1000).unwrap();
        assert!((s.value - 3.0).abs() < 1e-12);
        assert_eq!(spectral_norm(&Matrix::zeros(3, 2), 1e-9, 10).unwrap().value, 0.0);
    }

    #[test]
    fn spectral_norm_start_in_null_space() {
        // all-ones is annihilated by this matrix
        let a = Matrix::from_rows(&[&[1.0, -1.0]]);
        let s = spectral_norm(&a, 1e-14, 1000).unwrap();
        assert!((s.value - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn spectral_norm_flags_exhausted_budget() {
        let a = lcg_matrix(8, 5, 9);
        let s = spectral_norm(&a, 1e-300, 3).unwrap();
        assert!(!s.converged);
        assert_eq!(s.iterations, 3);
    }

    #[test]
    fn gram_cases() {
        let v = Matrix::from_rows(&[&[3.0], &[4.0]]);
        assert_eq!(gram(&v), Matrix::from_rows(&[&[25.0]]));
        let a = lcg_matrix(4, 2, 5);
        let g = gram(&a);
        for i in 0..2 {
            for j in 0..2 {
                let d = dot(&a.column(i), &a.column(j));
                assert!((g.get(i, j) - d).abs() < 1e-14);
            }
        }
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let rot = Matrix::from_rows(&[&[c, -c], &[c, c]]);
        assert!(gram(&rot).max_abs_diff(&Matrix::identity(2)) < 1e-12);
    }

    #[test]
    fn angles_by_hand() {
        assert_eq!(
            pairwise_column_angles(&Matrix::identity(3)).unwrap(),
            vec![90.0, 90.0, 90.0]
        );
        let opp = Matrix::from_rows(&[&[1.0, -1.0], &[2.0, -2.0]]);
        assert!((pairwise_column_angles(&opp).unwrap()[0] - 180.0).abs() < 1e-12);
        let a = Matrix::from_rows(&[&[1.0, 1.0], &[0.0, 1.0]]);
        assert!((pairwise_column_angles(&a).unwrap()[0] - 45.0).abs() < 1e-12);
    }

    #[test]
    fn angles_reject_zero_column() {
        let a = Matrix::from_rows(&[&[1.0, 0.0, 1.0], &[1.0, 0.0, 2.0]]);
        match pairwise_column_angles(&a) {
            Err(AoftError::ZeroColumn { index }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(pairwise_column_angles(&Matrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        assert!(Matrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Vector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn mtx1_round_trip_and_rejects_garbage() {
        let m = lcg_matrix(3, 5, 11);
        let mut buf = Vec::new();
        write_mtx1(&mut buf, &m).unwrap();
        assert_eq!(buf.len(), 32 + 15 * 8);
        assert_eq!(&buf[0..4], b"MTX1");
        assert_eq!(read_mtx1(&mut buf.as_slice()).unwrap(), m);

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_mtx1(&mut bad.as_slice()).is_err());
        assert!(read_mtx1(&mut &buf[..40]).is_err());
    }

    fn arb_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
        prop::collection::vec(-2.0f64..2.0, rows * cols)
            .prop_map(move |d| Matrix::new(rows, cols, d).unwrap())
    }

    proptest! {
        #[test]
        fn matmul_is_associative(
            a in arb_matrix(3, 4),
            b in arb_matrix(4, 5),
            c in arb_matrix(5, 2),
        ) {
            let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
            let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
            prop_assert!(left.max_abs_diff(&right) < 1e-9);
        }

        #[test]
        fn spectral_norm_is_homogeneous(a in arb_matrix(5, 4), c in -3.0f64..3.0) {
            let tol = 1e-12;
            let base = spectral_norm(&a, tol, 100_000).unwrap().value;
            let scaled = spectral_norm(&a.scale(c), tol, 100_000).unwrap().value;
            prop_assert!((scaled - c.abs() * base).abs() <= 1e-8 * (1.0 + base));
        }

        #[test]
        fn gram_is_bitwise_symmetric(a in arb_matrix(6, 4)) {
            let g = gram(&a);
            for i in 0..4 {
                for j in 0..4 {
                    prop_assert_eq!(g.get(i, j).to_bits(), g.get(j, i).to_bits());
                }
            }
        }

        #[test]
        fn mtx1_round_trips(a in arb_matrix(2, 3)) {
            let mut buf = Vec::new();
            write_mtx1(&mut buf, &a).unwrap();
            prop_assert_eq!(read_mtx1(&mut buf.as_slice()).unwrap(), a);
        }
    }
}
