//! AdamW with a warmup-plus-cosine schedule, the pre-training and
//! fine-tuning loops, and their metric logs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::ao::{ortho_deviation, GeneratorVector, EPS_POLE};
use crate::checkpoint::Checkpoint;
use crate::data::Dataset;
use crate::error::{invalid, AoftError, Result};
use crate::linalg::Matrix;
use crate::model::{init_backbone, reset_head, trainable_names, Dropout, Forward, ModelConfig, ParamStore};
use crate::peft::{init_adapter_params, is_generator_name, param_count, Method, ParamBudget, PeftConfig};
use crate::seed::{self, Rng};

/// Generators are kept at least this far from the pole after every step.
pub const POLE_MARGIN: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub seed: u64,
    /// Apply weight decay to generator vectors too.
    pub decay_generators: bool,
    /// Pre-training: epochs without a new best loss before giving up.
    pub patience: usize,
    /// Pre-training: required final train accuracy.
    pub target_accuracy: f64,
    pub peft: PeftConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 0.0,
            dropout: 0.0,
            batch_size: 32,
            epochs: 100,
            warmup_epochs: 10,
            seed: 0,
            decay_generators: false,
            patience: 20,
            target_accuracy: 0.95,
            peft: PeftConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(invalid("weight decay must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(invalid(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch size must be positive"));
        }
        if self.warmup_epochs > self.epochs {
            return Err(invalid(format!(
                "{} warmup epochs exceed {} epochs",
                self.warmup_epochs, self.epochs
            )));
        }
        if !(0.0..=1.0).contains(&self.target_accuracy) {
            return Err(invalid("target accuracy must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Linear warmup from 0 to `lr`, then `lr·½(1 + cos(π·progress))`.
///
/// `epoch` may be fractional so the rate can move every step.
pub fn cosine_lr(epoch: f64, cfg: &TrainConfig) -> f64 {
    let warm = cfg.warmup_epochs as f64;
    if epoch < warm {
        return cfg.lr * epoch / warm;
    }
    let span = (cfg.epochs - cfg.warmup_epochs) as f64;
    if span <= 0.0 {
        return cfg.lr;
    }
    let progress = ((epoch - warm) / span).clamp(0.0, 1.0);
    cfg.lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments of one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Matrix,
    pub v: Matrix,
    pub t: u64,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
            t: 0,
        }
    }
}

/// One AdamW step with decoupled weight decay: `p ← p·(1 − lr·wd) − lr·m̂/(√v̂ + ε)`.
pub fn adamw_step(
    param: &mut Matrix,
    grad: &Matrix,
    state: &mut AdamState,
    lr: f64,
    wd: f64,
    hp: &AdamHyper,
) -> Result<()> {
    if param.shape() != grad.shape() || state.m.shape() != param.shape() {
        return Err(AoftError::ShapeMismatch {
            op: "adamw_step",
            left: param.shape(),
            right: grad.shape(),
        });
    }
    if let Some(i) = grad.data().iter().position(|g| !g.is_finite()) {
        return Err(AoftError::NonFinite(format!(
            "gradient entry {i} is {}",
            grad.data()[i]
        )));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - hp.beta1.powi(t);
    let c2 = 1.0 - hp.beta2.powi(t);
    let shrink = 1.0 - lr * wd;
    let p = param.data_mut();
    let m = state.m.data_mut();
    let v = state.v.data_mut();
    for (i, &g) in grad.data().iter().enumerate() {
        m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
        v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g;
        let mh = m[i] / c1;
        let vh = v[i] / c2;
        p[i] = p[i] * shrink - lr * mh / (vh.sqrt() + hp.eps);
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub eval_accuracy: f64,
    /// `‖q‖` per generator vector.
    pub q_norms: BTreeMap<String, f64>,
    pub max_ortho_deviation: Option<f64>,
    pub wall_time_s: f64,
}

/// Epoch-per-row CSV. Wall time is left out so identical runs give
/// identical bytes.
pub fn metrics_csv(metrics: &[EpochMetrics]) -> String {
    let names: Vec<&String> = metrics.first().map(|m| m.q_norms.keys().collect()).unwrap_or_default();
    let mut out = String::from("epoch,lr,train_loss,train_accuracy,eval_accuracy,max_ortho_deviation");
    for n in &names {
        let _ = write!(out, ",q_norm[{n}]");
    }
    out.push('\n');
    for m in metrics {
        let dev = m.max_ortho_deviation.map(|d| d.to_string()).unwrap_or_default();
        let _ = write!(
            out,
            "{},{},{},{},{},{}",
            m.epoch, m.lr, m.train_loss, m.train_accuracy, m.eval_accuracy, dev
        );
        for n in &names {
            let _ = write!(out, ",{}", m.q_norms.get(*n).copied().unwrap_or(f64::NAN));
        }
        out.push('\n');
    }
    out
}

/// Fraction of samples whose arg-max logit (lowest index on ties) equals the label.
pub fn accuracy(logits: &Matrix, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let correct = labels
        .iter()
        .enumerate()
        .filter(|(i, &l)| {
            let row = logits.row(*i);
            let best = row
                .iter()
                .enumerate()
                .fold(0, |b, (j, &x)| if x > row[b] { j } else { b });
            best == l
        })
        .count();
    correct as f64 / labels.len() as f64
}

/// Accuracy of the model in `store` over `data`, evaluated in batches.
pub fn evaluate(store: &ParamStore, model: &ModelConfig, peft: &PeftConfig, data: &Dataset, batch: usize) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut correct = 0.0;
    for chunk in idx.chunks(batch.max(1)) {
        let (x, y) = data.batch(chunk)?;
        let logits = crate::model::logits(store, model, peft, &x)?;
        correct += accuracy(&logits, &y) * y.len() as f64;
    }
    Ok(correct / data.len() as f64)
}

fn generator_stats(store: &ParamStore, trainable: &BTreeSet<String>) -> Result<(BTreeMap<String, f64>, Option<f64>)> {
    let mut norms = BTreeMap::new();
    let mut worst: Option<f64> = None;
    for name in trainable.iter().filter(|n| is_generator_name(n)) {
        let g = GeneratorVector::new(store.get(name)?.data().to_vec())?;
        norms.insert(name.clone(), g.norm());
        let dev = ortho_deviation(&g)?;
        worst = Some(worst.map_or(dev, |w: f64| w.max(dev)));
    }
    Ok((norms, worst))
}

/// Parameters and trainable set at the start of fine-tuning.
pub struct FinetuneSetup {
    pub store: ParamStore,
    pub trainable: BTreeSet<String>,
    pub budget: ParamBudget,
}

/// Fresh head for `classes`, fresh adapters for `cfg.peft`, and a census check.
pub fn prepare_finetune(backbone: &Checkpoint, cfg: &TrainConfig, classes: usize) -> Result<FinetuneSetup> {
    let mut model = backbone.model.clone();
    model.classes = classes;
    cfg.peft.validate(&model)?;
    let mut store = ParamStore::new();
    for (name, m) in backbone.params.iter() {
        if crate::model::is_backbone_name(name) {
            store.insert(name.clone(), m.clone());
        }
    }
    reset_head(&mut store, model.dim, classes);
    store.extend(init_adapter_params(&model, &cfg.peft, seed::sub_seed(cfg.seed, "adapters"))?);
    let trainable = trainable_names(&store, cfg.peft.method);
    let budget = param_count(&model, &cfg.peft);
    let census = store.count(&trainable);
    if census != budget.trainable_count {
        return Err(invalid(format!(
            "trainable census {census} disagrees with the analytic budget {}",
            budget.trainable_count
        )));
    }
    Ok(FinetuneSetup {
        store,
        trainable,
        budget,
    })
}

struct Loop<'a> {
    model: &'a ModelConfig,
    cfg: &'a TrainConfig,
    peft: PeftConfig,
    store: ParamStore,
    trainable: BTreeSet<String>,
    moments: BTreeMap<String, AdamState>,
    shuffle_rng: Rng,
    dropout_rng: Rng,
    hyper: AdamHyper,
}

impl<'a> Loop<'a> {
    fn new(model: &'a ModelConfig, cfg: &'a TrainConfig, peft: PeftConfig, store: ParamStore, trainable: BTreeSet<String>) -> Self {
        Self {
            model,
            cfg,
            peft,
            store,
            trainable,
            moments: BTreeMap::new(),
            shuffle_rng: seed::rng(cfg.seed, "shuffle"),
            dropout_rng: seed::rng(cfg.seed, "dropout"),
            hyper: AdamHyper::default(),
        }
    }

    /// One pass over `data`; returns (mean loss, running accuracy, last lr).
    fn epoch(&mut self, epoch: usize, data: &Dataset) -> Result<(f64, f64, f64)> {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.shuffle_rng);
        let steps = order.len().div_ceil(self.cfg.batch_size);
        let (mut loss_sum, mut correct) = (0.0, 0.0);
        let mut lr = 0.0;
        for (s, chunk) in order.chunks(self.cfg.batch_size).enumerate() {
            lr = cosine_lr(epoch as f64 + s as f64 / steps as f64, self.cfg);
            let (x, y) = data.batch(chunk)?;
            let dropout = (self.cfg.dropout > 0.0).then(|| Dropout {
                rate: self.cfg.dropout,
                rng: &mut self.dropout_rng,
            });
            let mut fwd = Forward::build(&self.store, &self.trainable, self.model, &self.peft, &x, dropout)?;
            correct += accuracy(fwd.logits(), &y) * y.len() as f64;
            let loss = fwd.tape.cross_entropy(fwd.logits, &y)?;
            let lv = fwd.tape.value(loss).get(0, 0);
            if !lv.is_finite() {
                return Err(AoftError::Divergence(format!("loss became {lv} in epoch {epoch}")));
            }
            loss_sum += lv * y.len() as f64;
            let grads = fwd.tape.backward(loss)?;
            for (name, var) in &fwd.trainable {
                let param = self.store.get_mut(name).expect("trainable parameter present");
                let g = grads.get_or_zeros(*var, param.shape());
                let state = self
                    .moments
                    .entry(name.clone())
                    .or_insert_with(|| AdamState::new(param.rows(), param.cols()));
                let generator = is_generator_name(name);
                let wd = if generator && !self.cfg.decay_generators {
                    0.0
                } else {
                    self.cfg.weight_decay
                };
                adamw_step(param, &g, state, lr, wd, &self.hyper)
                    .map_err(|e| AoftError::NonFinite(format!("parameter `{name}`: {e}")))?;
                if generator {
                    let q0 = param.get(0, 0);
                    if 1.0 + q0 < POLE_MARGIN.max(EPS_POLE) {
                        param.set(0, 0, -1.0 + POLE_MARGIN);
                    }
                }
            }
        }
        let n = data.len() as f64;
        Ok((loss_sum / n, correct / n, lr))
    }
}

pub struct FinetuneResult {
    /// Adapter parameters and head (everything trainable).
    pub adapters: Checkpoint,
    pub metrics: Vec<EpochMetrics>,
    pub budget: ParamBudget,
    /// SHA-256 of the frozen parameters, identical before and after the run.
    pub frozen_checksum: String,
    pub initial_eval_accuracy: f64,
    /// Every parameter at the end of the run.
    pub store: ParamStore,
}

impl FinetuneResult {
    pub fn final_eval_accuracy(&self) -> f64 {
        self.metrics
            .last()
            .map_or(self.initial_eval_accuracy, |m| m.eval_accuracy)
    }

    /// JSON summary; wall times sit under `metadata`.
    pub fn summary(&self) -> serde_json::Value {
        let rows: Vec<_> = self
            .metrics
            .iter()
            .map(|m| {
                serde_json::json!({
                    "epoch": m.epoch,
                    "lr": m.lr,
                    "train_loss": m.train_loss,
                    "train_accuracy": m.train_accuracy,
                    "eval_accuracy": m.eval_accuracy,
                    "max_ortho_deviation": m.max_ortho_deviation,
                    "q_norms": m.q_norms,
                })
            })
            .collect();
        serde_json::json!({
            "method": self.adapters.peft.as_ref().map(|p| p.method),
            "initial_eval_accuracy": self.initial_eval_accuracy,
            "final_eval_accuracy": self.final_eval_accuracy(),
            "budget": self.budget,
            "frozen_checksum": self.frozen_checksum,
            "epochs": rows,
            "metadata": {
                "wall_time_s": self.metrics.iter().map(|m| m.wall_time_s).collect::<Vec<_>>(),
            },
        })
    }
}

/// Fine-tunes `backbone` on `train`, evaluating on `eval` after every epoch.
///
/// Frozen parameters are hashed before training and re-hashed after each
/// epoch; any change aborts with [`AoftError::FrozenMutation`].
pub fn finetune(backbone: &Checkpoint, cfg: &TrainConfig, train: &Dataset, eval: &Dataset) -> Result<FinetuneResult> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(invalid("empty training set"));
    }
    if eval.classes() != train.classes() {
        return Err(invalid("train and eval sets disagree on the class count"));
    }
    let mut model = backbone.model.clone();
    model.classes = train.classes();
    let setup = prepare_finetune(backbone, cfg, train.classes())?;
    let trainable = setup.trainable.clone();
    let is_frozen = |n: &str| !trainable.contains(n);
    let frozen_checksum = setup.store.checksum(is_frozen);
    let initial_eval_accuracy = evaluate(&setup.store, &model, &cfg.peft, eval, cfg.batch_size.max(64))?;

    let mut lp = Loop::new(&model, cfg, cfg.peft.clone(), setup.store, setup.trainable.clone());
    let mut metrics = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let (train_loss, train_accuracy, lr) = lp.epoch(epoch, train)?;
        let now = lp.store.checksum(is_frozen);
        if now != frozen_checksum {
            let culprit = lp
                .store
                .names()
                .find(|n| is_frozen(n) && backbone.params.get(n).ok() != lp.store.get(n).ok())
                .cloned()
                .unwrap_or_else(|| "<unknown>".into());
            return Err(AoftError::FrozenMutation(culprit));
        }
        let eval_accuracy = evaluate(&lp.store, &model, &cfg.peft, eval, cfg.batch_size.max(64))?;
        let (q_norms, max_ortho_deviation) = generator_stats(&lp.store, &setup.trainable)?;
        metrics.push(EpochMetrics {
            epoch,
            lr,
            train_loss,
            train_accuracy,
            eval_accuracy,
            q_norms,
            max_ortho_deviation,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
    }

    let mut adapter_params = ParamStore::new();
    for name in &setup.trainable {
        adapter_params.insert(name.clone(), lp.store.get(name)?.clone());
    }
    Ok(FinetuneResult {
        adapters: Checkpoint::adapter(model.clone(), cfg.peft.clone(), adapter_params),
        metrics,
        budget: setup.budget,
        frozen_checksum,
        initial_eval_accuracy,
        store: lp.store,
    })
}

pub struct PretrainResult {
    pub checkpoint: Checkpoint,
    pub metrics: Vec<EpochMetrics>,
    pub final_loss: f64,
    pub train_accuracy: f64,
}

/// Trains a fresh backbone (seeded by `model.seed`) on `train` with every
/// parameter free.
///
/// Fails with [`AoftError::Divergence`] if the loss turns non-finite, if it
/// stops improving for `cfg.patience` epochs while below target, or if the
/// final train accuracy misses `cfg.target_accuracy`.
pub fn pretrain(model: &ModelConfig, cfg: &TrainConfig, train: &Dataset) -> Result<PretrainResult> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(invalid("empty training set"));
    }
    let mut model = model.clone();
    model.classes = train.classes();
    let store = init_backbone(&model)?;
    let peft = PeftConfig::new(Method::Full, cfg.peft.d);
    let trainable = trainable_names(&store, Method::Full);
    let mut lp = Loop::new(&model, cfg, peft.clone(), store, trainable);
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let (mut best, mut since_best) = (f64::INFINITY, 0);
    let mut final_loss = f64::NAN;
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let (loss, running_acc, lr) = lp.epoch(epoch, train)?;
        final_loss = loss;
        if loss < best {
            best = loss;
            since_best = 0;
        } else {
            since_best += 1;
        }
        metrics.push(EpochMetrics {
            epoch,
            lr,
            train_loss: loss,
            train_accuracy: running_acc,
            eval_accuracy: f64::NAN,
            q_norms: BTreeMap::new(),
            max_ortho_deviation: None,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
        if since_best > cfg.patience && running_acc < cfg.target_accuracy {
            return Err(AoftError::Divergence(format!(
                "no loss improvement for {since_best} epochs (best {best}, accuracy {running_acc})"
            )));
        }
    }
    let train_accuracy = evaluate(&lp.store, &model, &peft, train, cfg.batch_size.max(64))?;
    if let Some(last) = metrics.last_mut() {
        last.eval_accuracy = train_accuracy;
    }
    if train_accuracy < cfg.target_accuracy {
        return Err(AoftError::Divergence(format!(
            "train accuracy {train_accuracy} below target {}",
            cfg.target_accuracy
        )));
    }
    Ok(PretrainResult {
        checkpoint: Checkpoint::backbone(model.clone(), lp.store),
        metrics,
        final_loss,
        train_accuracy,
    })
}

/// The hyper-parameter grid of the reference setup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub lr: Vec<f64>,
    pub weight_decay: Vec<f64>,
    pub dropout: Vec<f64>,
    pub batch_size: Vec<usize>,
}

impl SweepGrid {
    pub fn reference() -> Self {
        Self {
            lr: vec![0.2, 0.1, 0.05, 0.01, 0.005, 0.001, 0.0001],
            weight_decay: vec![0.05, 0.01, 0.005, 0.001, 0.0],
            dropout: vec![0.0, 0.1, 0.3, 0.5, 0.7],
            batch_size: vec![256, 128, 32],
        }
    }

    /// Varies one axis (`lr`, `weight_decay`, `dropout`, `batch_size`) of the
    /// reference grid and pins the others to `base`; `full` is the whole product.
    pub fn preset(name: &str, base: &TrainConfig) -> Result<Self> {
        let r = Self::reference();
        let pin = Self {
            lr: vec![base.lr],
            weight_decay: vec![base.weight_decay],
            dropout: vec![base.dropout],
            batch_size: vec![base.batch_size],
        };
        Ok(match name {
            "lr" => Self { lr: r.lr, ..pin },
            "weight_decay" | "wd" => Self { weight_decay: r.weight_decay, ..pin },
            "dropout" => Self { dropout: r.dropout, ..pin },
            "batch_size" | "batch" => Self { batch_size: r.batch_size, ..pin },
            "full" => r,
            other => return Err(invalid(format!("unknown sweep preset `{other}`"))),
        })
    }

    pub fn points(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        let mut out = Vec::new();
        for &lr in &self.lr {
            for &weight_decay in &self.weight_decay {
                for &dropout in &self.dropout {
                    for &batch_size in &self.batch_size {
                        out.push(TrainConfig {
                            lr,
                            weight_decay,
                            dropout,
                            batch_size,
                            ..base.clone()
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub batch_size: usize,
    /// `None` when the run failed numerically.
    pub final_eval_accuracy: Option<f64>,
    pub error: Option<String>,
}

/// Fine-tunes once per grid point. Numerical failures are recorded per row;
/// validation failures abort.
pub fn sweep(backbone: &Checkpoint, base: &TrainConfig, grid: &SweepGrid, train: &Dataset, eval: &Dataset) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for cfg in grid.points(base) {
        let (acc, error) = match finetune(backbone, &cfg, train, eval) {
            Ok(r) => (Some(r.final_eval_accuracy()), None),
            Err(e) if e.is_numerical() => (None, Some(e.to_string())),
            Err(e) => return Err(e),
        };
        rows.push(SweepRow {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            dropout: cfg.dropout,
            batch_size: cfg.batch_size,
            final_eval_accuracy: acc,
            error,
        });
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("lr,weight_decay,dropout,batch_size,final_eval_accuracy,error\n");
    for r in rows {
        let acc = r.final_eval_accuracy.map(|a| a.to_string()).unwrap_or_default();
        let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], " ");
        let _ = writeln!(out, "{},{},{},{},{},{}", r.lr, r.weight_decay, r.dropout, r.batch_size, acc, err);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(x: f64) -> Matrix {
        Matrix::row_vector(&[x])
    }

    #[test]
    fn zero_gradient_zero_decay_is_noop() {
        let mut p = Matrix::row_vector(&[0.5, -2.0]);
        let before = p.clone();
        let mut s = AdamState::new(1, 2);
        for _ in 0..3 {
            adamw_step(&mut p, &Matrix::zeros(1, 2), &mut s, 0.1, 0.0, &AdamHyper::default()).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn constant_gradient_matches_hand_recurrence() {
        let hp = AdamHyper::default();
        let (lr, wd) = (0.01, 0.0);
        let mut p = scalar(1.0);
        let mut s = AdamState::new(1, 1);
        let (mut m, mut v, mut x) = (0.0f64, 0.0f64, 1.0f64);
        for t in 1..=3 {
            adamw_step(&mut p, &scalar(1.0), &mut s, lr, wd, &hp).unwrap();
            m = 0.9 * m + 0.1;
            v = 0.999 * v + 0.001;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= lr * mh / (vh.sqrt() + 1e-8);
        }
        assert!((p.get(0, 0) - x).abs() < 1e-15);
        // bias-corrected moments of a constant gradient are exactly 1
        assert!((p.get(0, 0) - (1.0 - 3.0 * lr / (1.0 + 1e-8))).abs() < 1e-12);
    }

    #[test]
    fn decay_shrinks_geometrically() {
        let mut p = scalar(2.0);
        let mut s = AdamState::new(1, 1);
        for _ in 0..4 {
            adamw_step(&mut p, &scalar(0.0), &mut s, 0.1, 0.05, &AdamHyper::default()).unwrap();
        }
        assert!((p.get(0, 0) - 2.0 * (1.0f64 - 0.005).powi(4)).abs() < 1e-15);
    }

    #[test]
    fn nan_gradient_is_rejected_without_mutation() {
        let mut p = scalar(1.0);
        let mut s = AdamState::new(1, 1);
        let err = adamw_step(&mut p, &scalar(f64::NAN), &mut s, 0.1, 0.0, &AdamHyper::default()).unwrap_err();
        assert!(matches!(err, AoftError::NonFinite(_)));
        assert_eq!(p, scalar(1.0));
        assert_eq!(s.t, 0);
    }

    #[test]
    fn schedule_examples() {
        let cfg = TrainConfig {
            lr: 0.1,
            epochs: 100,
            warmup_epochs: 10,
            ..TrainConfig::default()
        };
        assert_eq!(cosine_lr(0.0, &cfg), 0.0);
        assert_eq!(cosine_lr(10.0, &cfg), 0.1);
        assert!((cosine_lr(5.0, &cfg) - 0.05).abs() < 1e-15);
        let expect = 0.1 * 0.5 * (1.0 + (std::f64::consts::PI * (1.0 - 1.0 / 90.0)).cos());
        assert!((cosine_lr(99.0, &cfg) - expect).abs() < 1e-15);
        let flat = TrainConfig { warmup_epochs: 0, ..cfg };
        assert_eq!(cosine_lr(0.0, &flat), 0.1);
    }

    #[test]
    fn config_validation_and_toml() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { warmup_epochs: 200, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { lr: 0.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { dropout: 1.0, ..TrainConfig::default() }.validate().is_err());
        let cfg = TrainConfig::from_toml("lr = 0.05\nepochs = 20\nwarmup_epochs = 2\n[peft]\nmethod = \"adapter-aoft\"\nd = 4\n").unwrap();
        assert_eq!(cfg.peft.method, Method::AdapterAoft);
        assert_eq!(TrainConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert!(TrainConfig::from_toml("learning_rate = 1").is_err());
    }

    #[test]
    fn accuracy_breaks_ties_low() {
        let l = Matrix::from_rows(&[&[1.0, 1.0], &[0.0, 2.0]]);
        assert_eq!(accuracy(&l, &[0, 1]), 1.0);
        assert_eq!(accuracy(&l, &[1, 1]), 0.5);
    }

    #[test]
    fn sweep_presets() {
        let base = TrainConfig::default();
        assert_eq!(SweepGrid::preset("lr", &base).unwrap().points(&base).len(), 7);
        assert_eq!(SweepGrid::reference().points(&base).len(), 7 * 5 * 5 * 3);
        assert!(SweepGrid::preset("momentum", &base).is_err());
    }
}
