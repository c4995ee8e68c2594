//! AOFT integrations with LoRA, Adapter and visual prompt tuning, plus the
//! bookkeeping (method configuration, parameter budgets, initialization)
//! shared with the model and the trainer.
//!
//! * LoRA:    `x·(W + AO(q_down)·AO(q_up)ᵀ)`
//! * Adapter: `h + h·AO(q_down)·AO(q_up)ᵀ` (residual), or without the `h +`
//! * VPT:     `[x; AO(q_prompt)ᵀ]` (prompt rows appended under the tokens)
//!
//! The AOFT* variant multiplies column `j` of the down factor by `λ_j`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ao::{ao_slab, GeneratorVector};
use crate::error::{invalid, AoftError, Result};
use crate::linalg::{matmul, matmul_nt, Matrix, Vector};
use crate::model::ModelConfig;
use crate::seed::{self, normal_vec};
use crate::tape::{Tape, Var};

/// Standard deviation of the noise added to `e₀` when initializing a generator.
pub const GENERATOR_INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    LoraAoft,
    AdapterAoft,
    VptAoft,
}

/// A frozen base weight plus an AOFT delta.
#[derive(Clone, Debug)]
pub struct AdaptedLayer {
    scheme: Scheme,
    base: Option<Matrix>,
    bias: Option<Vector>,
    q_down: GeneratorVector,
    q_up: Option<GeneratorVector>,
    d: usize,
    lambda: Option<Vector>,
    gate: Option<f64>,
    residual: bool,
}

/// Gradients of `⟨upstream, forward(x)⟩` with respect to the trainable parts.
#[derive(Clone, Debug)]
pub struct LayerGradients {
    pub q_down: Vector,
    pub q_up: Option<Vector>,
    pub lambda: Option<Vector>,
    pub gate: Option<f64>,
}

impl AdaptedLayer {
    /// LoRA+AOFT around `base` (`in×out`): `q_down` has length `in`, `q_up` length `out`.
    pub fn lora(base: Matrix, q_down: GeneratorVector, q_up: GeneratorVector, d: usize) -> Result<Self> {
        if q_down.len() != base.rows() || q_up.len() != base.cols() {
            return Err(invalid(format!(
                "LoRA generators of length {} and {} do not fit a {}x{} base",
                q_down.len(),
                q_up.len(),
                base.rows(),
                base.cols()
            )));
        }
        check_d(d, q_down.len().min(q_up.len()))?;
        Ok(Self {
            scheme: Scheme::LoraAoft,
            base: Some(base),
            bias: None,
            q_down,
            q_up: Some(q_up),
            d,
            lambda: None,
            gate: None,
            residual: false,
        })
    }

    /// Adapter+AOFT acting on a `tokens×D` block output; both generators have length `D`.
    pub fn adapter(q_down: GeneratorVector, q_up: GeneratorVector, d: usize, residual: bool) -> Result<Self> {
        if q_down.len() != q_up.len() {
            return Err(invalid(format!(
                "adapter generators must share the hidden size, got {} and {}",
                q_down.len(),
                q_up.len()
            )));
        }
        check_d(d, q_down.len())?;
        Ok(Self {
            scheme: Scheme::AdapterAoft,
            base: None,
            bias: None,
            q_down,
            q_up: Some(q_up),
            d,
            lambda: None,
            gate: None,
            residual,
        })
    }

    /// VPT+AOFT feeding a `D×out` projection `base` with optional bias.
    pub fn vpt(base: Matrix, bias: Option<Vector>, q_prompt: GeneratorVector, d: usize) -> Result<Self> {
        if q_prompt.len() != base.rows() {
            return Err(invalid(format!(
                "prompt generator of length {} does not fit a {}x{} projection",
                q_prompt.len(),
                base.rows(),
                base.cols()
            )));
        }
        if let Some(b) = &bias {
            if b.len() != base.cols() {
                return Err(invalid("VPT bias length must equal the projection width"));
            }
        }
        check_d(d, q_prompt.len())?;
        Ok(Self {
            scheme: Scheme::VptAoft,
            base: Some(base),
            bias,
            q_down: q_prompt,
            q_up: None,
            d,
            lambda: None,
            gate: None,
            residual: false,
        })
    }

    /// Enables AOFT*: column `j` of the down factor is scaled by `lambda[j]`.
    pub fn with_lambda(mut self, lambda: Vector) -> Result<Self> {
        if self.scheme == Scheme::VptAoft {
            return Err(invalid("the scaling vector applies to LoRA and Adapter schemes"));
        }
        if lambda.len() != self.d {
            return Err(invalid(format!(
                "scaling vector has length {}, bottleneck is {}",
                lambda.len(),
                self.d
            )));
        }
        self.lambda = Some(lambda);
        Ok(self)
    }

    /// Multiplies the delta by a trainable scalar.
    pub fn with_gate(mut self, gate: f64) -> Self {
        self.gate = Some(gate);
        self
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn base(&self) -> Option<&Matrix> {
        self.base.as_ref()
    }

    pub fn q_down(&self) -> &GeneratorVector {
        &self.q_down
    }

    pub fn q_up(&self) -> Option<&GeneratorVector> {
        self.q_up.as_ref()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn lambda(&self) -> Option<&Vector> {
        self.lambda.as_ref()
    }

    pub fn residual(&self) -> bool {
        self.residual
    }

    /// Names of the trainable pieces; the base is never among them.
    pub fn trainable_mask(&self) -> Vec<&'static str> {
        let mut out = vec!["q_down"];
        if self.q_up.is_some() {
            out.push("q_up");
        }
        if self.lambda.is_some() {
            out.push("lambda");
        }
        if self.gate.is_some() {
            out.push("gate");
        }
        out
    }

    fn expect(&self, scheme: Scheme) -> Result<()> {
        if self.scheme != scheme {
            return Err(invalid(format!(
                "layer uses {:?}, operation needs {:?}",
                self.scheme, scheme
            )));
        }
        Ok(())
    }

    /// Down factor with AOFT* scaling applied.
    pub fn down_factor(&self) -> Result<Matrix> {
        let mut down = ao_slab(&self.q_down, self.d)?;
        if let Some(l) = &self.lambda {
            for i in 0..down.rows() {
                for (x, s) in down.row_mut(i).iter_mut().zip(l.as_slice()) {
                    *x *= s;
                }
            }
        }
        Ok(down)
    }

    pub fn up_factor(&self) -> Result<Option<Matrix>> {
        self.q_up.as_ref().map(|q| ao_slab(q, self.d)).transpose()
    }

    /// `(AO(q_down) ⊙ λᵀ)·AO(q_up)ᵀ·gate`.
    pub fn delta(&self) -> Result<Matrix> {
        let up = self
            .up_factor()?
            .ok_or_else(|| invalid("prompt layers have no low-rank delta"))?;
        let delta = matmul_nt(&self.down_factor()?, &up)?;
        Ok(match self.gate {
            Some(g) => delta.scale(g),
            None => delta,
        })
    }
}

fn check_d(d: usize, max: usize) -> Result<()> {
    if d == 0 || d > max {
        return Err(invalid(format!("bottleneck d = {d} must lie in 1..={max}")));
    }
    Ok(())
}

/// `x·(W + Δ)`.
pub fn lora_aoft_forward(x: &Matrix, layer: &AdaptedLayer) -> Result<Matrix> {
    layer.expect(Scheme::LoraAoft)?;
    let base = layer.base.as_ref().expect("LoRA layers carry a base");
    matmul(x, &base.add(&layer.delta()?)?)
}

/// `h·Δ`, plus `h` when the residual flag is set.
pub fn adapter_aoft_forward(h: &Matrix, layer: &AdaptedLayer) -> Result<Matrix> {
    layer.expect(Scheme::AdapterAoft)?;
    let out = matmul(h, &layer.delta()?)?;
    if layer.residual {
        h.add(&out)
    } else {
        Ok(out)
    }
}

/// Appends `n_prompts` prompt rows `AO(q_prompt)ᵀ` under the tokens `x`.
pub fn vpt_aoft_prepend(x: &Matrix, layer: &AdaptedLayer, n_prompts: usize) -> Result<Matrix> {
    layer.expect(Scheme::VptAoft)?;
    if n_prompts == 0 {
        return Ok(x.clone());
    }
    if n_prompts != layer.d {
        return Err(invalid(format!(
            "{n_prompts} prompts requested from a factor with d = {}",
            layer.d
        )));
    }
    if x.cols() != layer.q_down.len() {
        return Err(AoftError::ShapeMismatch {
            op: "vpt_aoft_prepend",
            left: x.shape(),
            right: (layer.q_down.len(), layer.d),
        });
    }
    x.vstack(&ao_slab(&layer.q_down, layer.d)?.transpose())
}

/// `[x; AO(q_prompt)ᵀ]·W + b`.
pub fn vpt_aoft_forward(x: &Matrix, layer: &AdaptedLayer, n_prompts: usize) -> Result<Matrix> {
    let stacked = vpt_aoft_prepend(x, layer, n_prompts)?;
    let base = layer.base.as_ref().expect("VPT layers carry a base");
    let mut out = matmul(&stacked, base)?;
    if let Some(b) = &layer.bias {
        for i in 0..out.rows() {
            for (o, bj) in out.row_mut(i).iter_mut().zip(b.as_slice()) {
                *o += bj;
            }
        }
    }
    Ok(out)
}

/// Tape nodes for one AOFT layer's trainable pieces.
pub(crate) struct LayerVars {
    pub q_down: Var,
    pub q_up: Option<Var>,
    pub lambda: Option<Var>,
    pub gate: Option<Var>,
}

impl AdaptedLayer {
    fn register(&self, tape: &mut Tape) -> LayerVars {
        LayerVars {
            q_down: tape.param(self.q_down.vector().to_row_matrix()),
            q_up: self.q_up.as_ref().map(|q| tape.param(q.vector().to_row_matrix())),
            lambda: self.lambda.as_ref().map(|l| tape.param(l.to_row_matrix())),
            gate: self.gate.map(|g| tape.param(Matrix::row_vector(&[g]))),
        }
    }

    /// Builds this layer's forward on a tape with `x` already recorded.
    pub(crate) fn forward_on(&self, tape: &mut Tape, x: Var, vars: &LayerVars, n_prompts: usize) -> Result<Var> {
        match self.scheme {
            Scheme::LoraAoft => {
                let base = tape.constant(self.base.clone().expect("LoRA base"));
                let frozen = tape.matmul(x, base)?;
                let branch = lowrank_branch(tape, x, vars, self.d)?;
                tape.add(frozen, branch)
            }
            Scheme::AdapterAoft => {
                let branch = lowrank_branch(tape, x, vars, self.d)?;
                if self.residual {
                    tape.add(x, branch)
                } else {
                    Ok(branch)
                }
            }
            Scheme::VptAoft => {
                if n_prompts == 0 {
                    return Ok(x);
                }
                let factor = tape.ao(vars.q_down, self.d)?;
                let prompts = tape.transpose(factor);
                tape.concat_rows(&[x, prompts])
            }
        }
    }

    /// Analytic gradients of `⟨upstream, forward(x)⟩`, where forward is the
    /// scheme's own operation (`n_prompts` is used by VPT only).
    pub fn gradients(&self, x: &Matrix, upstream: &Matrix, n_prompts: usize) -> Result<LayerGradients> {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let vars = self.register(&mut tape);
        let out = self.forward_on(&mut tape, xv, &vars, n_prompts)?;
        let loss = tape.inner_const(out, upstream.clone())?;
        let grads = tape.backward(loss)?;
        let row = |v: Var, n: usize| Vector::from(grads.get_or_zeros(v, (1, n)).into_data());
        Ok(LayerGradients {
            q_down: row(vars.q_down, self.q_down.len()),
            q_up: vars.q_up.map(|v| row(v, self.q_up.as_ref().unwrap().len())),
            lambda: vars.lambda.map(|v| row(v, self.d)),
            gate: vars.gate.map(|v| grads.get_or_zeros(v, (1, 1)).get(0, 0)),
        })
    }
}

/// `((x·down) ⊙ λ)·upᵀ·gate` with AO-generated factors.
pub(crate) fn lowrank_branch(tape: &mut Tape, x: Var, vars: &LayerVars, d: usize) -> Result<Var> {
    let down = tape.ao(vars.q_down, d)?;
    let up_q = vars.q_up.ok_or_else(|| invalid("low-rank branch needs an up generator"))?;
    let up = tape.ao(up_q, d)?;
    dense_branch(tape, x, down, up, vars.lambda, vars.gate)
}

/// `((x·down) ⊙ λ)·upᵀ·gate` for factors already on the tape.
pub(crate) fn dense_branch(
    tape: &mut Tape,
    x: Var,
    down: Var,
    up: Var,
    lambda: Option<Var>,
    gate: Option<Var>,
) -> Result<Var> {
    let down = match lambda {
        Some(l) => tape.mul_cols(down, l)?,
        None => down,
    };
    let mid = tape.matmul(x, down)?;
    let up_t = tape.transpose(up);
    let out = tape.matmul(mid, up_t)?;
    match gate {
        Some(g) => tape.scale_by(out, g),
        None => Ok(out),
    }
}

// ---------------------------------------------------------------------------
// Method configuration and parameter budgets
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Classifier head only.
    LinearProbe,
    /// Every backbone weight plus the head.
    Full,
    Lora,
    LoraAoft,
    Adapter,
    AdapterAoft,
    Vpt,
    VptAoft,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::LinearProbe,
        Method::Full,
        Method::Lora,
        Method::LoraAoft,
        Method::Adapter,
        Method::AdapterAoft,
        Method::Vpt,
        Method::VptAoft,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::LinearProbe => "linear-probe",
            Method::Full => "full",
            Method::Lora => "lora",
            Method::LoraAoft => "lora-aoft",
            Method::Adapter => "adapter",
            Method::AdapterAoft => "adapter-aoft",
            Method::Vpt => "vpt",
            Method::VptAoft => "vpt-aoft",
        }
    }

    pub fn is_aoft(self) -> bool {
        matches!(self, Method::LoraAoft | Method::AdapterAoft | Method::VptAoft)
    }

    pub fn scheme(self) -> Option<Scheme> {
        match self {
            Method::LoraAoft => Some(Scheme::LoraAoft),
            Method::AdapterAoft => Some(Scheme::AdapterAoft),
            Method::VptAoft => Some(Scheme::VptAoft),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = AoftError;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| invalid(format!("unknown method `{s}`")))
    }
}

/// Which weights LoRA-style methods adapt.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoraTargets {
    /// `W_q`, `W_v`.
    #[default]
    Qv,
    /// `W_q`, `W_v`, `W_FC1`, `W_FC2`.
    QvFfn,
}

/// Where adapters sit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdapterSites {
    #[default]
    Ffn,
    FfnMha,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VptDepth {
    /// Prompts enter once, before the first encoder layer.
    Shallow,
    /// Every layer replaces the previous prompts with its own.
    #[default]
    Deep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeftConfig {
    pub method: Method,
    /// Bottleneck dimension, or the number of prompts for VPT methods.
    pub d: usize,
    pub lora_targets: LoraTargets,
    pub adapter_sites: AdapterSites,
    pub vpt_depth: VptDepth,
    /// AOFT*: per-column scaling vector on the down factor.
    pub aoft_star: bool,
    /// Trainable scalar gate on the AOFT delta, initialized to 0.
    pub zero_gate: bool,
    /// Adapter residual connection.
    pub residual: bool,
}

impl Default for PeftConfig {
    fn default() -> Self {
        Self {
            method: Method::LoraAoft,
            d: 8,
            lora_targets: LoraTargets::Qv,
            adapter_sites: AdapterSites::Ffn,
            vpt_depth: VptDepth::Deep,
            aoft_star: false,
            zero_gate: false,
            residual: true,
        }
    }
}

impl PeftConfig {
    pub fn new(method: Method, d: usize) -> Self {
        Self {
            method,
            d,
            ..Self::default()
        }
    }

    pub fn validate(&self, model: &ModelConfig) -> Result<()> {
        let needs_d = !matches!(self.method, Method::LinearProbe | Method::Full);
        if needs_d && (self.d == 0 || self.d > model.dim) {
            return Err(invalid(format!(
                "d = {} must lie in 1..={} for {}",
                self.d, model.dim, self.method
            )));
        }
        Ok(())
    }

    pub fn has_lambda(&self) -> bool {
        self.aoft_star && matches!(self.method, Method::LoraAoft | Method::AdapterAoft)
    }

    pub fn has_gate(&self) -> bool {
        self.zero_gate && matches!(self.method, Method::LoraAoft | Method::AdapterAoft)
    }
}

/// One weight adapted by a LoRA-style method.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LoraSite {
    pub layer: usize,
    /// `wq`, `wv`, `fc1` or `fc2`.
    pub matrix: &'static str,
    pub rows: usize,
    pub cols: usize,
}

impl LoraSite {
    pub fn prefix(&self) -> String {
        format!("blocks.{}.{}", self.layer, self.matrix)
    }
}

pub fn lora_sites(model: &ModelConfig, targets: LoraTargets) -> Vec<LoraSite> {
    let (dim, hidden) = (model.dim, model.mlp_dim());
    let mut out = Vec::new();
    for layer in 0..model.layers {
        out.push(LoraSite { layer, matrix: "wq", rows: dim, cols: dim });
        out.push(LoraSite { layer, matrix: "wv", rows: dim, cols: dim });
        if targets == LoraTargets::QvFfn {
            out.push(LoraSite { layer, matrix: "fc1", rows: dim, cols: hidden });
            out.push(LoraSite { layer, matrix: "fc2", rows: hidden, cols: dim });
        }
    }
    out
}

/// `(layer, "ffn_adapter" | "mha_adapter")` sites.
pub fn adapter_sites(model: &ModelConfig, sites: AdapterSites) -> Vec<(usize, &'static str)> {
    let mut out = Vec::new();
    for layer in 0..model.layers {
        if sites == AdapterSites::FfnMha {
            out.push((layer, "mha_adapter"));
        }
        out.push((layer, "ffn_adapter"));
    }
    out
}

/// Layers that own prompts.
pub fn prompt_layers(model: &ModelConfig, depth: VptDepth) -> Vec<usize> {
    match depth {
        VptDepth::Shallow => vec![0],
        VptDepth::Deep => (0..model.layers).collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BudgetEntry {
    pub layer: Option<usize>,
    pub name: String,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ParamBudget {
    /// Adapter (or backbone, for full fine-tuning) parameters plus the head.
    pub trainable_count: usize,
    pub frozen_count: usize,
    pub head_count: usize,
    /// Trainable parameters excluding the head.
    pub adapter_count: usize,
    pub entries: Vec<BudgetEntry>,
}

/// Analytic parameter census.
///
/// Per adapted `in×out` weight, plain LoRA trains `d·(in + out)` numbers and
/// LoRA+AOFT trains `in + out` (two generators), plus `d` with AOFT* and 1 with
/// the zero gate. Adapters count the same way with `in = out = D`. Prompt
/// tuning trains `d·D` per prompted layer, or `D` with AOFT.
pub fn param_count(model: &ModelConfig, peft: &PeftConfig) -> ParamBudget {
    let d = peft.d;
    let head_count = model.dim * model.classes + model.classes;
    let backbone = model.backbone_param_count();
    let extras = usize::from(peft.has_lambda()) * d + usize::from(peft.has_gate());
    let mut entries = Vec::new();
    match peft.method {
        Method::LinearProbe => {}
        Method::Full => entries.push(BudgetEntry {
            layer: None,
            name: "backbone".into(),
            count: backbone,
        }),
        Method::Lora | Method::LoraAoft => {
            for site in lora_sites(model, peft.lora_targets) {
                let generators = site.rows + site.cols;
                let count = if peft.method == Method::Lora {
                    d * generators
                } else {
                    generators + extras
                };
                entries.push(BudgetEntry {
                    layer: Some(site.layer),
                    name: site.matrix.into(),
                    count,
                });
            }
        }
        Method::Adapter | Method::AdapterAoft => {
            for (layer, name) in adapter_sites(model, peft.adapter_sites) {
                let count = if peft.method == Method::Adapter {
                    2 * d * model.dim
                } else {
                    2 * model.dim + extras
                };
                entries.push(BudgetEntry {
                    layer: Some(layer),
                    name: name.into(),
                    count,
                });
            }
        }
        Method::Vpt | Method::VptAoft => {
            for layer in prompt_layers(model, peft.vpt_depth) {
                let count = if peft.method == Method::Vpt {
                    d * model.dim
                } else {
                    model.dim
                };
                entries.push(BudgetEntry {
                    layer: Some(layer),
                    name: "prompt".into(),
                    count,
                });
            }
        }
    }
    let adapter_count: usize = entries.iter().map(|e| e.count).sum();
    let frozen_count = if peft.method == Method::Full { 0 } else { backbone };
    ParamBudget {
        trainable_count: adapter_count + head_count,
        frozen_count,
        head_count,
        adapter_count,
        entries,
    }
}

/// Fresh trainable adapter parameters for `peft`, keyed by parameter name.
///
/// Generators start at `e₀ + N(0, 0.02²)`; AOFT* scales and gates start at 0.
/// Plain LoRA/Adapter draw the down factor uniformly in `±1/sqrt(in)` and
/// zero the up factor; plain prompts are uniform in `±sqrt(6 / (patch_dim + D))`.
pub fn init_adapter_params(model: &ModelConfig, peft: &PeftConfig, seed: u64) -> Result<BTreeMap<String, Matrix>> {
    peft.validate(model)?;
    let d = peft.d;
    let mut out = BTreeMap::new();
    let add_generator = |out: &mut BTreeMap<String, Matrix>, name: String, n: usize| {
        let mut rng = seed::rng(seed, &name);
        let mut q = normal_vec(&mut rng, n, GENERATOR_INIT_STD);
        q[0] += 1.0;
        out.insert(name, Matrix::row_vector(&q));
    };
    let aoft_extras = |out: &mut BTreeMap<String, Matrix>, prefix: &str| {
        if peft.has_lambda() {
            out.insert(format!("{prefix}.lambda"), Matrix::zeros(1, d));
        }
        if peft.has_gate() {
            out.insert(format!("{prefix}.gate"), Matrix::zeros(1, 1));
        }
    };
    let kaiming = |name: &str, rows: usize, cols: usize| {
        let bound = 1.0 / (rows as f64).sqrt();
        let mut rng = seed::rng(seed, name);
        let data = (0..rows * cols)
            .map(|_| rand::Rng::random_range(&mut rng, -bound..bound))
            .collect();
        Matrix::new(rows, cols, data)
    };

    match peft.method {
        Method::LinearProbe | Method::Full => {}
        Method::LoraAoft => {
            for site in lora_sites(model, peft.lora_targets) {
                let p = site.prefix();
                add_generator(&mut out, format!("{p}.q_down"), site.rows);
                add_generator(&mut out, format!("{p}.q_up"), site.cols);
                aoft_extras(&mut out, &p);
            }
        }
        Method::Lora => {
            for site in lora_sites(model, peft.lora_targets) {
                let p = site.prefix();
                let a = kaiming(&format!("{p}.lora_a"), site.rows, d)?;
                out.insert(format!("{p}.lora_a"), a);
                out.insert(format!("{p}.lora_b"), Matrix::zeros(site.cols, d));
            }
        }
        Method::AdapterAoft => {
            for (layer, name) in adapter_sites(model, peft.adapter_sites) {
                let p = format!("blocks.{layer}.{name}");
                add_generator(&mut out, format!("{p}.q_down"), model.dim);
                add_generator(&mut out, format!("{p}.q_up"), model.dim);
                aoft_extras(&mut out, &p);
            }
        }
        Method::Adapter => {
            for (layer, name) in adapter_sites(model, peft.adapter_sites) {
                let p = format!("blocks.{layer}.{name}");
                let a = kaiming(&format!("{p}.down"), model.dim, d)?;
                out.insert(format!("{p}.down"), a);
                out.insert(format!("{p}.up"), Matrix::zeros(model.dim, d));
            }
        }
        Method::VptAoft => {
            for layer in prompt_layers(model, peft.vpt_depth) {
                add_generator(&mut out, format!("blocks.{layer}.prompt.q"), model.dim);
            }
        }
        Method::Vpt => {
            let bound = (6.0 / (model.patch_dim() + model.dim) as f64).sqrt();
            for layer in prompt_layers(model, peft.vpt_depth) {
                let name = format!("blocks.{layer}.prompt.p");
                let mut rng = seed::rng(seed, &name);
                let data = (0..d * model.dim)
                    .map(|_| rand::Rng::random_range(&mut rng, -bound..bound))
                    .collect();
                out.insert(name, Matrix::new(d, model.dim, data)?);
            }
        }
    }
    Ok(out)
}

/// Names of generator vectors among adapter parameters.
pub fn is_generator_name(name: &str) -> bool {
    name.ends_with(".q_down") || name.ends_with(".q_up") || name.ends_with(".prompt.q")
}
