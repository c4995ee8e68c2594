//! Weight-geometry reports and a Monte-Carlo Rademacher estimator.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, CheckpointKind};
use crate::error::{invalid, Result};
use crate::linalg::{pairwise_column_angles, spectral_norm_default, Matrix, Vector};
use crate::model::{adapter_factors, prompt_matrices};
use crate::peft::Method;
use crate::seed;

/// Angles this close (in degrees) below a bin edge count toward the upper bin.
pub const EDGE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleHistogram {
    pub label: String,
    pub bin_width: f64,
    /// `counts.len() + 1` edges from 0 to 180.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub pairs: u64,
    pub mean: f64,
    /// Sample standard deviation (`n − 1` denominator).
    pub std: f64,
    #[serde(skip)]
    angles: Vec<f64>,
}

/// Histogram of the pairwise column angles of `w`.
pub fn angle_histogram(w: &Matrix, bin_width: f64) -> Result<AngleHistogram> {
    if w.cols() < 2 {
        return Err(invalid(format!("angle histogram needs at least 2 columns, got {}", w.cols())));
    }
    AngleHistogram::from_angles(pairwise_column_angles(w)?, bin_width)
}

impl AngleHistogram {
    pub fn from_angles(angles: Vec<f64>, bin_width: f64) -> Result<Self> {
        if !(bin_width.is_finite() && bin_width > 0.0 && bin_width <= 180.0) {
            return Err(invalid(format!("bin width {bin_width} outside (0, 180]")));
        }
        let bins = (180.0 / bin_width).ceil() as usize;
        let edges = (0..=bins).map(|i| (i as f64 * bin_width).min(180.0)).collect();
        let mut counts = vec![0u64; bins];
        for &a in &angles {
            let i = (((a + EDGE_TOL) / bin_width).floor().max(0.0) as usize).min(bins - 1);
            counts[i] += 1;
        }
        let n = angles.len() as f64;
        let mean = if angles.is_empty() { 0.0 } else { angles.iter().sum::<f64>() / n };
        let std = if angles.len() < 2 {
            0.0
        } else {
            (angles.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Ok(Self {
            label: String::new(),
            bin_width,
            edges,
            counts,
            pairs: angles.len() as u64,
            mean,
            std,
            angles,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    /// Pools the angles of several histograms with a common bin width.
    pub fn pooled<'a>(parts: impl IntoIterator<Item = &'a AngleHistogram>, label: &str) -> Result<Self> {
        let mut angles = Vec::new();
        let mut width = None;
        for h in parts {
            if width.is_some_and(|w| w != h.bin_width) {
                return Err(invalid("pooled histograms must share a bin width"));
            }
            width = Some(h.bin_width);
            angles.extend_from_slice(&h.angles);
        }
        let width = width.ok_or_else(|| invalid("nothing to pool"))?;
        Ok(Self::from_angles(angles, width)?.with_label(label))
    }

    /// Index of the fullest bin.
    pub fn mode_bin(&self) -> usize {
        self.counts
            .iter()
            .enumerate()
            .fold(0, |b, (i, &c)| if c > self.counts[b] { i } else { b })
    }

    /// `bin_start,bin_end,count` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_start,bin_end,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", self.edges[i], self.edges[i + 1], c);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormRow {
    pub layer: Option<usize>,
    pub name: String,
    pub spectral: f64,
    pub frobenius: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub label: String,
    pub rows: Vec<NormRow>,
}

fn layer_of(name: &str) -> Option<usize> {
    name.strip_prefix("blocks.")?.split('.').next()?.parse().ok()
}

impl NormReport {
    pub fn push(&mut self, name: impl Into<String>, m: &Matrix) {
        let name = name.into();
        self.rows.push(NormRow {
            layer: layer_of(&name),
            spectral: spectral_norm_default(m),
            frobenius: m.frobenius_norm(),
            name,
        });
    }

    /// `layer,name,spectral,frobenius` rows; the layer is blank for global matrices.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,name,spectral,frobenius\n");
        for r in &self.rows {
            let layer = r.layer.map(|l| l.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{layer},{},{},{}", r.name, r.spectral, r.frobenius);
        }
        out
    }
}

/// Norms of a checkpoint's adaptation matrices.
///
/// Adapter checkpoints report the factors as they enter the forward pass,
/// named `<site>.down` / `<site>.up` (AO-generated or trained directly) or
/// `blocks.<l>.prompt`. Backbone checkpoints report every weight matrix
/// with more than one row and column.
pub fn norm_report(ck: &Checkpoint) -> Result<NormReport> {
    let mut report = NormReport::default();
    match (ck.kind, &ck.peft) {
        (CheckpointKind::Adapter, Some(peft)) => {
            report.label = peft.method.name().to_string();
            match peft.method {
                Method::Vpt | Method::VptAoft => {
                    for (l, p) in prompt_matrices(&ck.params, &ck.model, peft)? {
                        report.push(format!("blocks.{l}.prompt"), &p);
                    }
                }
                Method::LinearProbe | Method::Full => {
                    for (name, m) in ck.params.iter() {
                        report.push(name.clone(), m);
                    }
                }
                _ => {
                    for (site, down, up) in adapter_factors(&ck.params, &ck.model, peft)? {
                        report.push(format!("{site}.down"), &down);
                        report.push(format!("{site}.up"), &up);
                    }
                }
            }
        }
        _ => {
            report.label = "backbone".into();
            for (name, m) in ck.params.iter().filter(|(_, m)| m.rows() > 1 && m.cols() > 1) {
                report.push(name.clone(), m);
            }
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowDelta {
    pub layer: Option<usize>,
    pub name: String,
    pub spectral_baseline: f64,
    pub spectral_candidate: f64,
    pub spectral_delta: f64,
    pub frobenius_delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunComparison {
    pub baseline: String,
    pub candidate: String,
    pub rows: Vec<RowDelta>,
    /// Rows where the candidate's spectral norm is at most the baseline's.
    pub spectral_not_larger: usize,
    pub verdict: String,
}

/// Row-by-row `candidate − baseline` over two reports with the same layout.
pub fn compare_runs(baseline: &NormReport, candidate: &NormReport) -> Result<RunComparison> {
    if baseline.rows.is_empty() || candidate.rows.is_empty() {
        return Err(invalid("cannot compare empty norm reports"));
    }
    if baseline.rows.len() != candidate.rows.len() {
        return Err(invalid(format!(
            "reports have {} and {} rows",
            baseline.rows.len(),
            candidate.rows.len()
        )));
    }
    let mut rows = Vec::with_capacity(baseline.rows.len());
    for (a, b) in baseline.rows.iter().zip(&candidate.rows) {
        if a.layer != b.layer || a.name != b.name {
            return Err(invalid(format!(
                "row `{}` (layer {:?}) does not line up with `{}` (layer {:?})",
                a.name, a.layer, b.name, b.layer
            )));
        }
        rows.push(RowDelta {
            layer: a.layer,
            name: a.name.clone(),
            spectral_baseline: a.spectral,
            spectral_candidate: b.spectral,
            spectral_delta: b.spectral - a.spectral,
            frobenius_delta: b.frobenius - a.frobenius,
        });
    }
    let k = rows.iter().filter(|r| r.spectral_candidate <= r.spectral_baseline).count();
    let name = |r: &NormReport, fallback: &str| {
        if r.label.is_empty() {
            fallback.to_string()
        } else {
            r.label.clone()
        }
    };
    let (bn, cn) = (name(baseline, "baseline"), name(candidate, "candidate"));
    Ok(RunComparison {
        verdict: format!("{cn} spectral norms <= {bn} in {k}/{} rows", rows.len()),
        baseline: bn,
        candidate: cn,
        rows,
        spectral_not_larger: k,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RademacherEstimate {
    pub m: usize,
    pub gamma: f64,
    pub trials: usize,
    pub estimate: f64,
    pub std_error: f64,
}

/// Monte-Carlo estimate of `E_ξ[(γ/m)·‖Σ ξᵢ xᵢ‖]` over Rademacher signs `ξ`.
///
/// The supremum over `‖W‖ ≤ γ` of `‖W v‖` is `γ‖v‖`, so no optimization
/// over `W` is needed. Trial `t` draws its signs from `sub_seed(seed, "trial/t")`.
pub fn rademacher_estimate(xs: &[Vector], gamma: f64, trials: usize, seed: u64) -> Result<RademacherEstimate> {
    let m = xs.len();
    if m == 0 {
        return Err(invalid("rademacher estimate needs at least one sample"));
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(invalid(format!("gamma must be finite and non-negative, got {gamma}")));
    }
    if trials == 0 {
        return Err(invalid("trials must be positive"));
    }
    let dim = xs[0].len();
    if xs.iter().any(|x| x.len() != dim) {
        return Err(invalid("samples must share one dimension"));
    }
    let mut values = Vec::with_capacity(trials);
    for t in 0..trials {
        let mut rng = seed::rng(seed, &format!("trial/{t}"));
        let mut v = vec![0.0; dim];
        for x in xs {
            let s = if rand::Rng::random::<bool>(&mut rng) { 1.0 } else { -1.0 };
            for (vi, xi) in v.iter_mut().zip(x.as_slice()) {
                *vi += s * xi;
            }
        }
        values.push(Vector::from(v).norm() / m as f64);
    }
    let n = trials as f64;
    let mean = values.iter().sum::<f64>() / n;
    let se = if trials < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    };
    Ok(RademacherEstimate {
        m,
        gamma,
        trials,
        estimate: gamma * mean,
        std_error: gamma * se,
    })
}
