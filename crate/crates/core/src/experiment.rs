//! The desk-scale pre-train / fine-tune experiment as one TOML-configurable unit.
//!
//! ```toml
//! [model]
//! dim = 32
//! layers = 2
//!
//! [data]
//! train_samples = 512
//!
//! [finetune]
//! lr = 0.01
//! [finetune.peft]
//! method = "lora-aoft"
//! d = 8
//! ```

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::data::{BlobTask, Dataset};
use crate::error::{invalid, Result};
use crate::model::ModelConfig;
use crate::peft::{Method, PeftConfig};
use crate::trainer::{finetune, pretrain, FinetuneResult, PretrainResult, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub classes: usize,
    pub train_samples: usize,
    pub eval_samples: usize,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            classes: 4,
            train_samples: 512,
            eval_samples: 512,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub data: DataConfig,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    /// Learning rate used instead of `finetune.lr` for full fine-tuning.
    pub full_lr: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let model = ModelConfig {
            dim: 32,
            layers: 2,
            heads: 4,
            ..ModelConfig::default()
        };
        let pretrain = TrainConfig {
            lr: 3e-3,
            epochs: 20,
            warmup_epochs: 2,
            peft: PeftConfig::new(Method::Full, 8),
            ..TrainConfig::default()
        };
        let finetune = TrainConfig {
            lr: 0.01,
            epochs: 30,
            warmup_epochs: 2,
            peft: PeftConfig::new(Method::LoraAoft, 8),
            ..TrainConfig::default()
        };
        Self {
            model,
            data: DataConfig::default(),
            pretrain,
            finetune,
            full_lr: 1e-3,
        }
    }
}

/// Task-A training data and task-B train/eval data.
pub struct Datasets {
    pub a_train: Dataset,
    pub b_train: Dataset,
    pub b_eval: Dataset,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.pretrain.validate()?;
        self.finetune.validate()?;
        self.finetune.peft.validate(&self.model)?;
        if self.data.classes == 0 || self.data.train_samples == 0 || self.data.eval_samples == 0 {
            return Err(invalid("data classes and sample counts must be positive"));
        }
        if !(self.full_lr.is_finite() && self.full_lr > 0.0) {
            return Err(invalid("full_lr must be positive"));
        }
        Ok(())
    }

    /// Parses `text` as overrides on top of [`RunConfig::default`]; tables
    /// merge key by key, so `[model]\ndim = 16` keeps the other model fields.
    pub fn from_toml(text: &str) -> Result<Self> {
        let over: toml::Table = toml::from_str(text).map_err(|e| invalid(format!("config: {e}")))?;
        let mut base = toml::Value::try_from(Self::default()).expect("config serializes");
        merge(&mut base, toml::Value::Table(over));
        let cfg: Self = base.try_into().map_err(|e| invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn datasets(&self) -> Result<Datasets> {
        let m = ModelConfig {
            classes: self.data.classes,
            ..self.model.clone()
        };
        let a = BlobTask::task_a(self.data.classes, m.image_size);
        let b = BlobTask::task_b(self.data.classes, m.image_size);
        let s = self.data.seed;
        Ok(Datasets {
            a_train: Dataset::generate(&a, &m, self.data.train_samples, s, "task-a/train")?,
            b_train: Dataset::generate(&b, &m, self.data.train_samples, s, "task-b/train")?,
            b_eval: Dataset::generate(&b, &m, self.data.eval_samples, s, "task-b/eval")?,
        })
    }

    /// Fine-tuning settings for `method`, keeping every other knob.
    pub fn finetune_config(&self, method: Method) -> TrainConfig {
        let mut cfg = self.finetune.clone();
        cfg.peft.method = method;
        if method == Method::Full {
            cfg.lr = self.full_lr;
        }
        cfg
    }

    pub fn pretrain(&self, data: &Datasets) -> Result<PretrainResult> {
        pretrain(&self.model, &self.pretrain, &data.a_train)
    }

    pub fn finetune(&self, backbone: &Checkpoint, method: Method, data: &Datasets) -> Result<FinetuneResult> {
        finetune(backbone, &self.finetune_config(method), &data.b_train, &data.b_eval)
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
