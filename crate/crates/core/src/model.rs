//! A desk-scale vision transformer.
//!
//! Pre-norm encoder layers
//!
//! ```text
//! X' = MHA(LN(X)) + X
//! X  = FFN(LN(X')) + X',   FFN(Z) = GELU(Z·W_FC1)·W_FC2
//! ```
//!
//! over a CLS token and learned positional embeddings. Attention and FFN
//! projections carry no bias. Every PEFT method hooks into the same forward
//! builder, [`Forward::build`].

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, AoftError, Result};
use crate::linalg::{matmul, matmul_nt, Matrix};
use crate::peft::{
    adapter_sites, dense_branch, lora_sites, prompt_layers, Method, PeftConfig, VptDepth,
};
use crate::seed::{self, normal_vec, Rng};
use crate::tape::{softmax_rows, Tape, Var};

pub const MLP_RATIO: usize = 4;

/// Standard deviation of the initial positional embedding.
pub const POS_INIT_STD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub channels: usize,
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub classes: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            image_size: 16,
            patch_size: 4,
            channels: 1,
            dim: 64,
            layers: 4,
            heads: 4,
            classes: 4,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("image_size", self.image_size),
            ("patch_size", self.patch_size),
            ("channels", self.channels),
            ("dim", self.dim),
            ("layers", self.layers),
            ("heads", self.heads),
            ("classes", self.classes),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(invalid(format!("model {name} must be positive")));
        }
        if self.image_size % self.patch_size != 0 {
            return Err(invalid(format!(
                "image size {} is not divisible by patch size {}",
                self.image_size, self.patch_size
            )));
        }
        if self.dim % self.heads != 0 {
            return Err(invalid(format!(
                "dim {} is not divisible by {} heads",
                self.dim, self.heads
            )));
        }
        Ok(())
    }

    pub fn num_patches(&self) -> usize {
        let side = self.image_size / self.patch_size;
        side * side
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * self.channels
    }

    /// Tokens per image, CLS included.
    pub fn seq_len(&self) -> usize {
        self.num_patches() + 1
    }

    pub fn mlp_dim(&self) -> usize {
        MLP_RATIO * self.dim
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    /// Everything except the classifier head.
    pub fn backbone_param_count(&self) -> usize {
        let d = self.dim;
        let embed = self.patch_dim() * d + d + d + self.seq_len() * d;
        let per_layer = 2 * d + 4 * d * d + 2 * d + 2 * d * self.mlp_dim();
        embed + self.layers * per_layer + 2 * d
    }
}

/// Named parameters, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Matrix>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Result<&Matrix> {
        self.params
            .get(name)
            .ok_or_else(|| invalid(format!("missing parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.params.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, m: Matrix) {
        self.params.insert(name.into(), m);
    }

    pub fn remove(&mut self, name: &str) -> Option<Matrix> {
        self.params.remove(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Matrix)> {
        self.params.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn extend(&mut self, other: BTreeMap<String, Matrix>) {
        self.params.extend(other);
    }

    /// Number of scalars held by the named parameters.
    pub fn count<'a>(&self, names: impl IntoIterator<Item = &'a String>) -> usize {
        names
            .into_iter()
            .filter_map(|n| self.params.get(n))
            .map(|m| m.rows() * m.cols())
            .sum()
    }

    /// SHA-256 over `(name, shape, payload)` of the selected parameters, in name order.
    pub fn checksum(&self, include: impl Fn(&str) -> bool) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for (name, m) in &self.params {
            if !include(name) {
                continue;
            }
            h.update(name.as_bytes());
            h.update((m.rows() as u64).to_le_bytes());
            h.update((m.cols() as u64).to_le_bytes());
            h.update(m.payload_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// True for parameters that belong to the pretrained backbone.
pub fn is_backbone_name(name: &str) -> bool {
    if name.starts_with("head.") {
        return false;
    }
    if let Some(rest) = name.strip_prefix("blocks.") {
        let leaf = rest.split_once('.').map_or("", |(_, l)| l);
        return matches!(
            leaf,
            "ln1.g" | "ln1.b" | "wq" | "wk" | "wv" | "wo" | "ln2.g" | "ln2.b" | "fc1" | "fc2"
        );
    }
    matches!(name, "patch.w" | "patch.b" | "cls" | "pos" | "norm.g" | "norm.b")
}

pub fn is_head_name(name: &str) -> bool {
    name == "head.w" || name == "head.b"
}

fn gaussian(seed: u64, name: &str, rows: usize, cols: usize, std: f64) -> Matrix {
    let mut rng = seed::rng(seed, name);
    Matrix::new(rows, cols, normal_vec(&mut rng, rows * cols, std)).expect("finite draws")
}

/// Randomly initialized backbone plus a zero classifier head.
pub fn init_backbone(cfg: &ModelConfig) -> Result<ParamStore> {
    cfg.validate()?;
    let s = cfg.seed;
    let d = cfg.dim;
    let mut p = ParamStore::new();
    let pd = cfg.patch_dim();
    p.insert("patch.w", gaussian(s, "patch.w", pd, d, 1.0 / (pd as f64).sqrt()));
    p.insert("patch.b", Matrix::zeros(1, d));
    p.insert("cls", gaussian(s, "cls", 1, d, 0.02));
    p.insert("pos", gaussian(s, "pos", cfg.seq_len(), d, POS_INIT_STD));
    let std_d = 1.0 / (d as f64).sqrt();
    let std_h = 1.0 / (cfg.mlp_dim() as f64).sqrt();
    for l in 0..cfg.layers {
        let pre = format!("blocks.{l}");
        for ln in ["ln1", "ln2"] {
            p.insert(format!("{pre}.{ln}.g"), Matrix::row_vector(&vec![1.0; d]));
            p.insert(format!("{pre}.{ln}.b"), Matrix::zeros(1, d));
        }
        for w in ["wq", "wk", "wv", "wo"] {
            let name = format!("{pre}.{w}");
            p.insert(name.clone(), gaussian(s, &name, d, d, std_d));
        }
        let fc1 = format!("{pre}.fc1");
        p.insert(fc1.clone(), gaussian(s, &fc1, d, cfg.mlp_dim(), std_d));
        let fc2 = format!("{pre}.fc2");
        p.insert(fc2.clone(), gaussian(s, &fc2, cfg.mlp_dim(), d, std_h));
    }
    p.insert("norm.g", Matrix::row_vector(&vec![1.0; d]));
    p.insert("norm.b", Matrix::zeros(1, d));
    reset_head(&mut p, d, cfg.classes);
    Ok(p)
}

/// Replaces the classifier head with a zero head for `classes` outputs.
pub fn reset_head(p: &mut ParamStore, dim: usize, classes: usize) {
    p.insert("head.w", Matrix::zeros(dim, classes));
    p.insert("head.b", Matrix::zeros(1, classes));
}

/// One encoder layer's frozen weights.
#[derive(Clone, Debug)]
pub struct EncoderLayerWeights {
    pub ln1_gamma: Matrix,
    pub ln1_beta: Matrix,
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub w_o: Matrix,
    pub ln2_gamma: Matrix,
    pub ln2_beta: Matrix,
    pub w_fc1: Matrix,
    pub w_fc2: Matrix,
}

impl EncoderLayerWeights {
    pub fn from_store(p: &ParamStore, layer: usize) -> Result<Self> {
        let g = |n: &str| p.get(&format!("blocks.{layer}.{n}")).cloned();
        Ok(Self {
            ln1_gamma: g("ln1.g")?,
            ln1_beta: g("ln1.b")?,
            w_q: g("wq")?,
            w_k: g("wk")?,
            w_v: g("wv")?,
            w_o: g("wo")?,
            ln2_gamma: g("ln2.g")?,
            ln2_beta: g("ln2.b")?,
            w_fc1: g("fc1")?,
            w_fc2: g("fc2")?,
        })
    }

    /// All-zero projections with identity layer norms.
    pub fn zeros(dim: usize) -> Self {
        Self {
            ln1_gamma: Matrix::row_vector(&vec![1.0; dim]),
            ln1_beta: Matrix::zeros(1, dim),
            w_q: Matrix::zeros(dim, dim),
            w_k: Matrix::zeros(dim, dim),
            w_v: Matrix::zeros(dim, dim),
            w_o: Matrix::zeros(dim, dim),
            ln2_gamma: Matrix::row_vector(&vec![1.0; dim]),
            ln2_beta: Matrix::zeros(1, dim),
            w_fc1: Matrix::zeros(dim, MLP_RATIO * dim),
            w_fc2: Matrix::zeros(MLP_RATIO * dim, dim),
        }
    }
}

/// A single attention head: `softmax((XW_q)(XW_k)ᵀ / √D_head)·XW_v`.
pub fn attention_head(x: &Matrix, w_q: &Matrix, w_k: &Matrix, w_v: &Matrix) -> Result<Matrix> {
    if w_q.shape() != w_k.shape() || w_q.rows() != w_v.rows() {
        return Err(AoftError::ShapeMismatch {
            op: "attention_head",
            left: w_q.shape(),
            right: w_k.shape(),
        });
    }
    let q = matmul(x, w_q)?;
    let k = matmul(x, w_k)?;
    let v = matmul(x, w_v)?;
    let scores = matmul_nt(&q, &k)?.scale(1.0 / (w_q.cols() as f64).sqrt());
    matmul(&softmax_rows(&scores), &v)
}

/// One pre-norm encoder layer applied to a single token sequence.
pub fn encoder_layer(x: &Matrix, w: &EncoderLayerWeights, heads: usize) -> Result<Matrix> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let c = |t: &mut Tape, m: &Matrix| t.constant(m.clone());
    let (g1, b1) = (c(&mut tape, &w.ln1_gamma), c(&mut tape, &w.ln1_beta));
    let (wq, wk, wv, wo) = (
        c(&mut tape, &w.w_q),
        c(&mut tape, &w.w_k),
        c(&mut tape, &w.w_v),
        c(&mut tape, &w.w_o),
    );
    let (g2, b2) = (c(&mut tape, &w.ln2_gamma), c(&mut tape, &w.ln2_beta));
    let (f1, f2) = (c(&mut tape, &w.w_fc1), c(&mut tape, &w.w_fc2));

    let h = tape.layer_norm(xv, g1, b1)?;
    let q = tape.matmul(h, wq)?;
    let k = tape.matmul(h, wk)?;
    let v = tape.matmul(h, wv)?;
    let att = tape.attention(q, k, v, x.rows(), heads)?;
    let a = tape.matmul(att, wo)?;
    let x1 = tape.add(xv, a)?;
    let h2 = tape.layer_norm(x1, g2, b2)?;
    let z = tape.matmul(h2, f1)?;
    let z = tape.gelu(z);
    let f = tape.matmul(z, f2)?;
    let out = tape.add(x1, f)?;
    Ok(tape.value(out).clone())
}

/// Splits a `channels×size×size` image (channel-major) into flattened patches,
/// one row per patch in raster order, entries ordered `(row, col, channel)`.
pub fn patchify(image: &[f64], cfg: &ModelConfig) -> Result<Matrix> {
    let (s, p, c) = (cfg.image_size, cfg.patch_size, cfg.channels);
    if image.len() != c * s * s {
        return Err(invalid(format!(
            "image has {} values, expected {}",
            image.len(),
            c * s * s
        )));
    }
    let side = s / p;
    let mut data = Vec::with_capacity(side * side * cfg.patch_dim());
    for pr in 0..side {
        for pc in 0..side {
            for r in 0..p {
                for col in 0..p {
                    for ch in 0..c {
                        data.push(image[ch * s * s + (pr * p + r) * s + pc * p + col]);
                    }
                }
            }
        }
    }
    Matrix::new(side * side, cfg.patch_dim(), data)
}

/// Dropout applied to adapter outputs during training.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut Rng,
}

/// A recorded forward pass.
pub struct Forward {
    pub tape: Tape,
    pub logits: Var,
    /// Tape leaves of the trainable parameters, by name.
    pub trainable: BTreeMap<String, Var>,
}

struct Builder<'a> {
    tape: Tape,
    store: &'a ParamStore,
    trainable_names: &'a BTreeSet<String>,
    vars: BTreeMap<String, Var>,
    dropout: Option<Dropout<'a>>,
    method: Method,
}

impl<'a> Builder<'a> {
    fn p(&mut self, name: &str) -> Result<Var> {
        if let Some(&v) = self.vars.get(name) {
            return Ok(v);
        }
        let m = self.store.get(name)?.clone();
        let v = if self.trainable_names.contains(name) {
            self.tape.param(m)
        } else {
            self.tape.constant(m)
        };
        self.vars.insert(name.to_string(), v);
        Ok(v)
    }

    fn maybe_p(&mut self, name: &str) -> Result<Option<Var>> {
        if self.store.contains(name) {
            self.p(name).map(Some)
        } else {
            Ok(None)
        }
    }

    fn dropout(&mut self, x: Var) -> Result<Var> {
        let Some(drop) = self.dropout.as_mut() else {
            return Ok(x);
        };
        if drop.rate <= 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - drop.rate;
        let (r, c) = self.tape.value(x).shape();
        let mask = Matrix::from_fn(r, c, |_, _| {
            if rand::Rng::random::<f64>(drop.rng) < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        self.tape.mul_const(x, mask)
    }

    /// The low-rank branch stored under `prefix`, if any, applied to `x`.
    fn branch(&mut self, prefix: &str, x: Var, d: usize) -> Result<Option<Var>> {
        let (down, up) = match self.method {
            Method::LoraAoft | Method::AdapterAoft => {
                let Some(qd) = self.maybe_p(&format!("{prefix}.q_down"))? else {
                    return Ok(None);
                };
                let qu = self.p(&format!("{prefix}.q_up"))?;
                (self.tape.ao(qd, d)?, self.tape.ao(qu, d)?)
            }
            Method::Lora => match self.maybe_p(&format!("{prefix}.lora_a"))? {
                Some(a) => (a, self.p(&format!("{prefix}.lora_b"))?),
                None => return Ok(None),
            },
            Method::Adapter => match self.maybe_p(&format!("{prefix}.down"))? {
                Some(a) => (a, self.p(&format!("{prefix}.up"))?),
                None => return Ok(None),
            },
            _ => return Ok(None),
        };
        let lambda = self.maybe_p(&format!("{prefix}.lambda"))?;
        let gate = self.maybe_p(&format!("{prefix}.gate"))?;
        let out = dense_branch(&mut self.tape, x, down, up, lambda, gate)?;
        self.dropout(out).map(Some)
    }

    /// `x·W` plus the LoRA branch registered for `W`.
    fn linear(&mut self, x: Var, weight: &str, d: usize) -> Result<Var> {
        let w = self.p(weight)?;
        let y = self.tape.matmul(x, w)?;
        match self.branch(weight, x, d)? {
            Some(b) => self.tape.add(y, b),
            None => Ok(y),
        }
    }

    /// Block output passed through its adapter, when one is registered.
    fn adapt(&mut self, prefix: &str, x: Var, d: usize, residual: bool) -> Result<Var> {
        match self.branch(prefix, x, d)? {
            Some(b) if residual => self.tape.add(x, b),
            Some(b) => Ok(b),
            None => Ok(x),
        }
    }

    fn prompts(&mut self, layer: usize, d: usize) -> Result<Option<Var>> {
        if self.method == Method::Vpt {
            return self.maybe_p(&format!("blocks.{layer}.prompt.p"));
        }
        match self.maybe_p(&format!("blocks.{layer}.prompt.q"))? {
            Some(q) => {
                let f = self.tape.ao(q, d)?;
                Ok(Some(self.tape.transpose(f)))
            }
            None => Ok(None),
        }
    }

    /// Keeps the first `keep` rows of each sequence and appends `prompts`.
    fn attach_prompts(&mut self, x: Var, batch: usize, seq: usize, keep: usize, prompts: Var) -> Result<Var> {
        let mut parts = Vec::with_capacity(2 * batch);
        for b in 0..batch {
            let rows = (b * seq..b * seq + keep).collect();
            parts.push(self.tape.gather_rows(x, rows)?);
            parts.push(prompts);
        }
        self.tape.concat_rows(&parts)
    }
}

impl Forward {
    /// Records the forward pass of `patches` (`(batch·num_patches)×patch_dim`).
    ///
    /// Parameters named in `trainable` become differentiable leaves; all
    /// others are constants. Adapter parameters of `peft.method` are picked up
    /// from `store` by name; parameters of other methods are ignored.
    pub fn build<'a>(
        store: &'a ParamStore,
        trainable: &'a BTreeSet<String>,
        model: &ModelConfig,
        peft: &PeftConfig,
        patches: &Matrix,
        dropout: Option<Dropout<'a>>,
    ) -> Result<Forward> {
        let np = model.num_patches();
        if patches.rows() % np != 0 || patches.cols() != model.patch_dim() || patches.rows() == 0 {
            return Err(invalid(format!(
                "patch batch {:?} does not match {} patches of {} values",
                patches.shape(),
                np,
                model.patch_dim()
            )));
        }
        let batch = patches.rows() / np;
        let mut b = Builder {
            tape: Tape::new(),
            store,
            trainable_names: trainable,
            vars: BTreeMap::new(),
            dropout,
            method: peft.method,
        };
        let d = peft.d;
        let residual = peft.residual;

        let px = b.tape.constant(patches.clone());
        let pw = b.p("patch.w")?;
        let pb = b.p("patch.b")?;
        let emb = b.tape.matmul(px, pw)?;
        let emb = b.tape.add_row(emb, pb)?;
        let cls = b.p("cls")?;
        let pos = b.p("pos")?;
        let mut parts = Vec::with_capacity(2 * batch);
        for s in 0..batch {
            parts.push(cls);
            parts.push(b.tape.gather_rows(emb, (s * np..(s + 1) * np).collect())?);
        }
        let tokens = b.tape.concat_rows(&parts)?;
        let pos_tiled = b.tape.concat_rows(&vec![pos; batch])?;
        let mut x = b.tape.add(tokens, pos_tiled)?;

        let base_seq = model.seq_len();
        let mut seq = base_seq;
        let prompting = matches!(peft.method, Method::Vpt | Method::VptAoft);

        for l in 0..model.layers {
            if prompting {
                let owns = prompt_layers(model, peft.vpt_depth).contains(&l);
                if owns {
                    if let Some(pr) = b.prompts(l, d)? {
                        x = b.attach_prompts(x, batch, seq, base_seq, pr)?;
                        seq = base_seq + b.tape.value(pr).rows();
                    }
                } else if peft.vpt_depth == VptDepth::Deep {
                    return Err(invalid(format!("deep prompt tuning is missing prompts for layer {l}")));
                }
            }
            let pre = format!("blocks.{l}");
            let g1 = b.p(&format!("{pre}.ln1.g"))?;
            let b1 = b.p(&format!("{pre}.ln1.b"))?;
            let h = b.tape.layer_norm(x, g1, b1)?;
            let q = b.linear(h, &format!("{pre}.wq"), d)?;
            let wk = b.p(&format!("{pre}.wk"))?;
            let k = b.tape.matmul(h, wk)?;
            let v = b.linear(h, &format!("{pre}.wv"), d)?;
            let att = b.tape.attention(q, k, v, seq, model.heads)?;
            let wo = b.p(&format!("{pre}.wo"))?;
            let a = b.tape.matmul(att, wo)?;
            let a = b.adapt(&format!("{pre}.mha_adapter"), a, d, residual)?;
            let x1 = b.tape.add(x, a)?;

            let g2 = b.p(&format!("{pre}.ln2.g"))?;
            let b2 = b.p(&format!("{pre}.ln2.b"))?;
            let h2 = b.tape.layer_norm(x1, g2, b2)?;
            let z = b.linear(h2, &format!("{pre}.fc1"), d)?;
            let z = b.tape.gelu(z);
            let f = b.linear(z, &format!("{pre}.fc2"), d)?;
            let f = b.adapt(&format!("{pre}.ffn_adapter"), f, d, residual)?;
            x = b.tape.add(x1, f)?;
        }

        let ng = b.p("norm.g")?;
        let nb = b.p("norm.b")?;
        let x = b.tape.layer_norm(x, ng, nb)?;
        let cls_rows = b.tape.gather_rows(x, (0..batch).map(|s| s * seq).collect())?;
        let hw = b.p("head.w")?;
        let hb = b.p("head.b")?;
        let logits = b.tape.matmul(cls_rows, hw)?;
        let logits = b.tape.add_row(logits, hb)?;

        let trainable = b
            .vars
            .iter()
            .filter(|(n, _)| trainable.contains(*n))
            .map(|(n, v)| (n.clone(), *v))
            .collect();
        Ok(Forward {
            tape: b.tape,
            logits,
            trainable,
        })
    }

    pub fn logits(&self) -> &Matrix {
        self.tape.value(self.logits)
    }
}

/// Inference logits for a batch of patch matrices.
pub fn logits(store: &ParamStore, model: &ModelConfig, peft: &PeftConfig, patches: &Matrix) -> Result<Matrix> {
    let none = BTreeSet::new();
    Ok(Forward::build(store, &none, model, peft, patches, None)?
        .logits()
        .clone())
}

/// Which parameters a method trains, given the store's contents.
pub fn trainable_names(store: &ParamStore, method: Method) -> BTreeSet<String> {
    store
        .names()
        .filter(|n| match method {
            Method::LinearProbe => is_head_name(n),
            Method::Full => true,
            _ => !is_backbone_name(n),
        })
        .cloned()
        .collect()
}

/// Per-adapted-weight factor matrices as they enter the forward pass:
/// `(name, down, up)` with AOFT* scaling applied to `down`.
pub fn adapter_factors(store: &ParamStore, model: &ModelConfig, peft: &PeftConfig) -> Result<Vec<(String, Matrix, Matrix)>> {
    use crate::ao::{ao_slab, GeneratorVector};
    let prefixes: Vec<String> = match peft.method {
        Method::Lora | Method::LoraAoft => lora_sites(model, peft.lora_targets)
            .iter()
            .map(|s| s.prefix())
            .collect(),
        Method::Adapter | Method::AdapterAoft => adapter_sites(model, peft.adapter_sites)
            .into_iter()
            .map(|(l, n)| format!("blocks.{l}.{n}"))
            .collect(),
        _ => Vec::new(),
    };
    let gen = |name: &str| -> Result<Matrix> {
        let g = GeneratorVector::new(store.get(name)?.data().to_vec())?;
        ao_slab(&g, peft.d)
    };
    let mut out = Vec::new();
    for p in prefixes {
        let (mut down, up) = if peft.method.is_aoft() {
            (gen(&format!("{p}.q_down"))?, gen(&format!("{p}.q_up"))?)
        } else if peft.method == Method::Lora {
            (store.get(&format!("{p}.lora_a"))?.clone(), store.get(&format!("{p}.lora_b"))?.clone())
        } else {
            (store.get(&format!("{p}.down"))?.clone(), store.get(&format!("{p}.up"))?.clone())
        };
        if let Ok(l) = store.get(&format!("{p}.lambda")) {
            for i in 0..down.rows() {
                for (x, s) in down.row_mut(i).iter_mut().zip(l.data()) {
                    *x *= s;
                }
            }
        }
        out.push((p, down, up));
    }
    Ok(out)
}

/// Prompt matrices (`n_prompts×D`) per prompted layer.
pub fn prompt_matrices(store: &ParamStore, model: &ModelConfig, peft: &PeftConfig) -> Result<Vec<(usize, Matrix)>> {
    use crate::ao::{ao_slab, GeneratorVector};
    let mut out = Vec::new();
    for l in prompt_layers(model, peft.vpt_depth) {
        let m = match peft.method {
            Method::VptAoft => {
                let g = GeneratorVector::new(store.get(&format!("blocks.{l}.prompt.q"))?.data().to_vec())?;
                ao_slab(&g, peft.d)?.transpose()
            }
            Method::Vpt => store.get(&format!("blocks.{l}.prompt.p"))?.clone(),
            _ => continue,
        };
        out.push((l, m));
    }
    Ok(out)
}
