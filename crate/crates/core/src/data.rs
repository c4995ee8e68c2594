//! Seeded synthetic image tasks built from Gaussian blobs.
//!
//! A class is a set of blob centres (in pixel units) and a blob width. A
//! sample draws every centre with isotropic jitter, renders
//! `amplitude·exp(−‖p − c‖² / 2w²)` per blob and adds pixel noise.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::Matrix;
use crate::model::{patchify, ModelConfig};
use crate::seed::{self, normal_vec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobClass {
    pub centers: Vec<[f64; 2]>,
    pub width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobTask {
    pub classes: Vec<BlobClass>,
    pub amplitude: f64,
    pub jitter: f64,
    pub noise: f64,
}

fn ring(k: usize, image_size: usize, radius: f64, phase: f64) -> Vec<[f64; 2]> {
    let c = (image_size as f64 - 1.0) / 2.0;
    (0..k)
        .map(|i| {
            let a = phase + std::f64::consts::TAU * i as f64 / k as f64;
            [c + radius * a.sin(), c + radius * a.cos()]
        })
        .collect()
}

impl BlobTask {
    /// `k` classes, one blob each, centred on a ring around the image centre.
    pub fn task_a(k: usize, image_size: usize) -> Self {
        let s = image_size as f64;
        let classes = ring(k, image_size, 0.3 * s, 0.0)
            .into_iter()
            .map(|c| BlobClass {
                centers: vec![c],
                width: 0.08 * s,
            })
            .collect();
        Self {
            classes,
            amplitude: 1.0,
            jitter: 0.05 * s,
            noise: 0.3,
        }
    }

    /// The shifted task: the ring of [`BlobTask::task_a`] turned by half the
    /// angular spacing, so every class sits between two of the original ones.
    pub fn task_b(k: usize, image_size: usize) -> Self {
        let mut t = Self::task_a(k, image_size);
        let shift = std::f64::consts::PI / k.max(1) as f64;
        for (c, p) in t.classes.iter_mut().zip(ring(k, image_size, 0.3 * image_size as f64, shift)) {
            c.centers = vec![p];
        }
        t
    }

    /// A task with a single class.
    pub fn degenerate(image_size: usize) -> Self {
        let mut t = Self::task_a(1, image_size);
        t.classes.truncate(1);
        t
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    fn render(&self, class: usize, cfg: &ModelConfig, rng: &mut seed::Rng) -> Vec<f64> {
        let s = cfg.image_size;
        let spec = &self.classes[class];
        let jit = normal_vec(rng, 2 * spec.centers.len(), self.jitter.max(0.0));
        let noise = normal_vec(rng, cfg.channels * s * s, self.noise.max(0.0));
        let inv = 1.0 / (2.0 * spec.width * spec.width);
        let mut img = noise;
        for (b, c) in spec.centers.iter().enumerate() {
            let (cy, cx) = (c[0] + jit[2 * b], c[1] + jit[2 * b + 1]);
            for ch in 0..cfg.channels {
                for y in 0..s {
                    for x in 0..s {
                        let r2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                        img[ch * s * s + y * s + x] += self.amplitude * (-r2 * inv).exp();
                    }
                }
            }
        }
        img
    }
}

/// Patch matrices and labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    patches: Vec<Matrix>,
    labels: Vec<usize>,
    classes: usize,
}

impl Dataset {
    pub fn new(patches: Vec<Matrix>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if patches.len() != labels.len() {
            return Err(invalid("dataset needs one label per sample"));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
            return Err(invalid(format!("label {l} out of range for {classes} classes")));
        }
        if let Some(first) = patches.first() {
            if patches.iter().any(|p| p.shape() != first.shape()) {
                return Err(invalid("samples must share one patch shape"));
            }
        }
        Ok(Self {
            patches,
            labels,
            classes,
        })
    }

    /// `n` samples with balanced labels (class `i mod K`), reproducible from
    /// `(seed, label)`.
    pub fn generate(task: &BlobTask, cfg: &ModelConfig, n: usize, seed: u64, label: &str) -> Result<Self> {
        let k = task.num_classes();
        if k == 0 {
            return Err(invalid("task has no classes"));
        }
        let mut rng = seed::rng(seed, label);
        let mut patches = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % k;
            let img = task.render(class, cfg, &mut rng);
            patches.push(patchify(&img, cfg)?);
            labels.push(class);
        }
        Self::new(patches, labels, k)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Stacked patches and labels of the selected samples.
    pub fn batch(&self, indices: &[usize]) -> Result<(Matrix, Vec<usize>)> {
        let first = indices
            .first()
            .ok_or_else(|| invalid("empty batch"))?;
        let (rows, cols) = self
            .patches
            .get(*first)
            .ok_or_else(|| invalid(format!("sample {first} out of range")))?
            .shape();
        let mut data = Vec::with_capacity(indices.len() * rows * cols);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            let p = self
                .patches
                .get(i)
                .ok_or_else(|| invalid(format!("sample {i} out of range")))?;
            data.extend_from_slice(p.data());
            labels.push(self.labels[i]);
        }
        Ok((Matrix::new(indices.len() * rows, cols, data)?, labels))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_reproducible_and_balanced() {
        let cfg = ModelConfig::default();
        let task = BlobTask::task_a(4, cfg.image_size);
        let a = Dataset::generate(&task, &cfg, 10, 3, "train").unwrap();
        let b = Dataset::generate(&task, &cfg, 10, 3, "train").unwrap();
        let c = Dataset::generate(&task, &cfg, 10, 3, "eval").unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.labels(), &[0, 1, 2, 3, 0, 1, 2, 3, 0, 1]);
    }

    #[test]
    fn batch_stacks_rows() {
        let cfg = ModelConfig::default();
        let ds = Dataset::generate(&BlobTask::task_b(3, 16), &cfg, 6, 0, "x").unwrap();
        let (m, l) = ds.batch(&[4, 1]).unwrap();
        assert_eq!(m.shape(), (2 * cfg.num_patches(), cfg.patch_dim()));
        assert_eq!(l, vec![1, 1]);
        assert!(ds.batch(&[]).is_err());
        assert!(ds.batch(&[6]).is_err());
    }

    #[test]
    fn degenerate_task_has_one_class() {
        let cfg = ModelConfig::default();
        let ds = Dataset::generate(&BlobTask::degenerate(16), &cfg, 5, 0, "x").unwrap();
        assert_eq!(ds.classes(), 1);
        assert!(ds.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn labels_are_range_checked() {
        assert!(Dataset::new(vec![Matrix::zeros(1, 1)], vec![2], 2).is_err());
    }
}
