//! Training and evaluation of the three sequence models.
//!
//! Every model keeps its parameters in one flat `f64` vector split into named
//! groups. The forward pass is generic over the scalar, so the same code runs
//! on `f64` for training and on [`crate::Dual`] for derivative checks.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use num_complex::Complex;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ansatz::{AnsatzParams, PhaseLayerParams};
use crate::classical::{
    lcsa_step_probability, linear_attention_layer, scsa_amplitude_fidelity, scsa_distributions, LcsaParams, ScsaParams,
};
use crate::data::{embed_sequence, record_seed, splitmix64, DatasetKind, EmbeddingMap, SequenceDataset};
use crate::encodings::encode_all;
use crate::error::{config, QsaError, Result};
use crate::linalg::{norm_sqr, vdot, CMatrix};
use crate::objectives::{renyi_alpha_loss, StepProbabilities, PROBABILITY_FLOOR};
use crate::qsa::{
    analytic_expectation_with, circuit_expectation_with, predict_token_state_with, QsaCircuit, QsaSequence,
};
use crate::scalar::{Real, C};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Qsa,
    Scsa,
    Lcsa,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Qsa => "qsa",
            ModelKind::Scsa => "scsa",
            ModelKind::Lcsa => "lcsa",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = QsaError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qsa" => Ok(ModelKind::Qsa),
            "scsa" => Ok(ModelKind::Scsa),
            "lcsa" => Ok(ModelKind::Lcsa),
            other => config(format!("unknown model kind {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    /// Shift rule for circuit angles, central differences elsewhere.
    ParameterShift,
    /// Central differences for every parameter.
    FiniteDifference,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpectationRoute {
    /// Closed-form branch sum; equal to the simulated circuit.
    Analytic,
    /// Full state-vector simulation of the circuit.
    Circuit,
}

/// Training configuration. Paths are carried for the command line but are
/// not part of the configuration hash.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub schema_version: u32,
    pub model_kind: ModelKind,
    pub epochs: usize,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub learning_rate: f64,
    pub embedding_learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub gradient_mode: GradientMode,
    pub expectation: ExpectationRoute,
    pub shots: Option<u64>,
    pub embedding_trainable: bool,
    pub token_dim: usize,
    pub ansatz_layers: usize,
    pub phase_layer: bool,
    pub real_ansatz: bool,
    pub gamma: f64,
    pub fd_step: f64,
    pub dataset: Option<String>,
    pub output: Option<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            model_kind: ModelKind::Qsa,
            epochs: 100,
            batch_size: None,
            learning_rate: 0.05,
            embedding_learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            gradient_mode: GradientMode::ParameterShift,
            expectation: ExpectationRoute::Analytic,
            shots: None,
            embedding_trainable: true,
            token_dim: 4,
            ansatz_layers: 5,
            phase_layer: true,
            real_ansatz: false,
            gamma: crate::data::DEFAULT_GAMMA,
            fd_step: 1e-4,
            dataset: None,
            output: None,
        }
    }
}

impl TrainConfig {
    pub fn for_model(kind: ModelKind) -> Self {
        Self { model_kind: kind, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return config(format!("config schema version {} is not {CONFIG_SCHEMA_VERSION}", self.schema_version));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.learning_rate) || !positive(self.embedding_learning_rate) {
            return config("learning rates must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !positive(self.epsilon) {
            return config("optimizer decay rates must lie in [0, 1) and epsilon must be positive");
        }
        if !positive(self.fd_step) {
            return config("finite-difference step must be positive");
        }
        if self.batch_size == Some(0) {
            return config("batch size must be at least 1");
        }
        if self.shots == Some(0) {
            return config("shot count must be at least 1");
        }
        if self.shots.is_some() && self.model_kind != ModelKind::Qsa {
            return config("shots only apply to the qsa model");
        }
        if self.token_dim < 2 || !self.gamma.is_finite() {
            return config("token dimension must be at least 2 and gamma finite");
        }
        Ok(())
    }

    /// The configuration with paths removed.
    pub fn without_paths(&self) -> Self {
        Self { dataset: None, output: None, ..self.clone() }
    }

    /// SHA-256 of the path-free configuration serialized as JSON.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(&self.without_paths()).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| QsaError::Parse(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Sizes that fix the parameter layout of a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelShape {
    pub kind: ModelKind,
    pub token_dim: usize,
    pub vocab: usize,
    pub seq_len: usize,
    pub layers: usize,
    pub phase_layer: bool,
    pub real_ansatz: bool,
    /// Complex-valued embedding and weights (quantum data).
    pub complex: bool,
    pub gamma: f64,
}

impl ModelShape {
    pub fn from_config(cfg: &TrainConfig, data: &SequenceDataset) -> Result<Self> {
        let shape = Self {
            kind: cfg.model_kind,
            token_dim: cfg.token_dim,
            vocab: data.vocab,
            seq_len: data.seq_len,
            layers: cfg.ansatz_layers,
            phase_layer: cfg.phase_layer,
            real_ansatz: cfg.real_ansatz,
            complex: data.kind() == DatasetKind::Quantum,
            gamma: cfg.gamma,
        };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<()> {
        if self.token_dim < 2 || self.token_dim >= self.vocab {
            return config(format!("token dimension d={} must satisfy 2 <= d < D={}", self.token_dim, self.vocab));
        }
        if self.seq_len < 1 {
            return config("sequences need at least one prediction step");
        }
        if self.kind == ModelKind::Qsa {
            if !self.token_dim.is_power_of_two() {
                return config(format!("qsa needs a power-of-two token dimension, got {}", self.token_dim));
            }
            if self.seq_len < 2 || !self.seq_len.is_power_of_two() {
                return config(format!("qsa needs T a power of two >= 2, got {}", self.seq_len));
            }
        }
        Ok(())
    }

    fn num_qubits(&self) -> usize {
        self.token_dim.trailing_zeros() as usize
    }

    fn c_qubits(&self) -> usize {
        self.seq_len.trailing_zeros() as usize
    }

    pub fn layout(&self) -> Vec<ParamGroup> {
        let d = self.token_dim;
        let mut groups = Vec::new();
        let mut offset = 0;
        let mut push = |name: &str, class, rows: usize, cols: usize, complex: bool| {
            let len = rows * cols * if complex { 2 } else { 1 };
            groups.push(ParamGroup { name: name.to_string(), class, rows, cols, complex, offset, len });
            offset += len;
        };
        push("embedding", ParamClass::Embedding, d, self.vocab, self.complex);
        match self.kind {
            ModelKind::Qsa => {
                let count = AnsatzParams::<f64>::angle_count(self.num_qubits(), self.layers);
                push("v_angles", ParamClass::CircuitAngle, count, 1, false);
                push("w_angles", ParamClass::CircuitAngle, count, 1, false);
                if self.phase_layer {
                    push("r_angles", ParamClass::CircuitAngle, self.c_qubits(), 1, false);
                }
            }
            ModelKind::Lcsa => {
                push("v_mat", ParamClass::Weight, d, d, self.complex);
                push("w_mat", ParamClass::Weight, d, d, self.complex);
            }
            ModelKind::Scsa => {
                let shapes = [(d, d), (d, d), (d, d), (4 * d, d), (4 * d, 1), (d, 4 * d), (d, 1), (self.vocab, d)];
                for (name, (r, c)) in crate::classical::SCSA_TENSORS.iter().zip(shapes) {
                    push(name, ParamClass::Weight, r, c, self.complex);
                }
            }
        }
        groups
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamClass {
    CircuitAngle,
    Embedding,
    Weight,
}

/// A named slice of the flat parameter vector. Complex tensors store
/// interleaved real and imaginary parts in row-major order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamGroup {
    pub name: String,
    pub class: ParamClass,
    pub rows: usize,
    pub cols: usize,
    pub complex: bool,
    pub offset: usize,
    pub len: usize,
}

impl ParamGroup {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    shape: ModelShape,
    groups: Vec<ParamGroup>,
    values: Vec<f64>,
}

fn flatten(m: &CMatrix<f64>, complex: bool) -> Vec<f64> {
    m.as_slice().iter().flat_map(|z| if complex { vec![z.re, z.im] } else { vec![z.re] }).collect()
}

fn matrix_from<R: Real>(vals: &[R], rows: usize, cols: usize, complex: bool) -> CMatrix<R> {
    if complex {
        CMatrix::from_fn(rows, cols, |r, c| {
            let k = 2 * (r * cols + c);
            Complex::new(vals[k], vals[k + 1])
        })
    } else {
        CMatrix::from_fn(rows, cols, |r, c| Complex::new(vals[r * cols + c], R::zero()))
    }
}

impl ModelParams {
    pub fn from_values(shape: ModelShape, values: Vec<f64>) -> Result<Self> {
        shape.validate()?;
        let groups = shape.layout();
        let total: usize = groups.iter().map(|g| g.len).sum();
        if values.len() != total {
            return config(format!("expected {total} parameter values, got {}", values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(QsaError::Numeric("parameters contain non-finite values".into()));
        }
        Ok(Self { shape, groups, values })
    }

    /// Seeded initialization: Gaussian embeddings, small ansatz angles,
    /// near-identity L-CSA maps and fan-in scaled S-CSA weights.
    pub fn init(shape: ModelShape, seed: u64) -> Result<Self> {
        shape.validate()?;
        let groups = shape.layout();
        let mut values = Vec::new();
        let sub = |k: u64| splitmix64(seed ^ splitmix64(k));
        for g in &groups {
            let part: Vec<f64> = match (g.class, g.name.as_str()) {
                (ParamClass::Embedding, _) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(sub(1));
                    let std = if shape.complex { std::f64::consts::FRAC_1_SQRT_2 } else { 1.0 };
                    (0..g.len).map(|_| std * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect::<Vec<f64>>()
                }
                (ParamClass::CircuitAngle, "v_angles") => {
                    AnsatzParams::<f64>::random(shape.num_qubits(), shape.layers, sub(2)).angles().to_vec()
                }
                (ParamClass::CircuitAngle, "w_angles") => {
                    AnsatzParams::<f64>::random(shape.num_qubits(), shape.layers, sub(3)).angles().to_vec()
                }
                (ParamClass::CircuitAngle, _) => PhaseLayerParams::<f64>::random(shape.c_qubits(), sub(4)).angles().to_vec(),
                (ParamClass::Weight, _) => Vec::new(),
            };
            values.extend(part);
        }
        match shape.kind {
            ModelKind::Lcsa => {
                let p = LcsaParams::<f64>::random(shape.token_dim, 0.1, shape.complex, sub(5));
                values.extend(flatten(&p.v_mat, shape.complex));
                values.extend(flatten(&p.w_mat, shape.complex));
            }
            ModelKind::Scsa => {
                let p = ScsaParams::<f64>::random(shape.token_dim, shape.vocab, shape.complex, sub(6));
                for t in p.tensors() {
                    values.extend(flatten(t, shape.complex));
                }
            }
            ModelKind::Qsa => {}
        }
        Self::from_values(shape, values)
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn kind(&self) -> ModelKind {
        self.shape.kind
    }

    pub fn groups(&self) -> &[ParamGroup] {
        &self.groups
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn group(&self, name: &str) -> Option<&[f64]> {
        self.groups.iter().find(|g| g.name == name).map(|g| &self.values[g.range()])
    }

    pub fn set_group(&mut self, name: &str, vals: &[f64]) -> Result<()> {
        let g = self.groups.iter().find(|g| g.name == name).ok_or_else(|| QsaError::Config(format!("no group {name}")))?;
        if vals.len() != g.len {
            return config(format!("group {name} has {} values, got {}", g.len, vals.len()));
        }
        self.values[g.range()].copy_from_slice(vals);
        Ok(())
    }

    /// Set a matrix-valued group from a complex matrix (imaginary parts
    /// dropped for real groups).
    pub fn set_matrix(&mut self, name: &str, m: &CMatrix<f64>) -> Result<()> {
        let g = self.groups.iter().find(|g| g.name == name).ok_or_else(|| QsaError::Config(format!("no group {name}")))?;
        if (m.rows(), m.cols()) != (g.rows, g.cols) {
            return config(format!("group {name} is {}x{}", g.rows, g.cols));
        }
        let flat = flatten(m, g.complex);
        self.set_group(name, &flat)
    }

    pub fn compile(&self) -> Result<CompiledModel<f64>> {
        compile(&self.shape, &self.values)
    }
}

/// Forward-ready model built from a flat parameter vector.
#[derive(Clone, Debug)]
pub enum CompiledModel<R> {
    Qsa { embedding: EmbeddingMap<R>, circuit: QsaCircuit<R> },
    Lcsa { embedding: EmbeddingMap<R>, params: LcsaParams<R> },
    Scsa { embedding: EmbeddingMap<R>, params: ScsaParams<R> },
}

impl<R: Real> CompiledModel<R> {
    pub fn embedding(&self) -> &EmbeddingMap<R> {
        match self {
            CompiledModel::Qsa { embedding, .. } | CompiledModel::Lcsa { embedding, .. } | CompiledModel::Scsa { embedding, .. } => {
                embedding
            }
        }
    }
}

pub fn compile<R: Real>(shape: &ModelShape, values: &[R]) -> Result<CompiledModel<R>> {
    let groups = shape.layout();
    let get = |name: &str| -> &[R] {
        let g = groups.iter().find(|g| g.name == name).expect("layout has group");
        &values[g.range()]
    };
    let mat = |name: &str| -> CMatrix<R> {
        let g = groups.iter().find(|g| g.name == name).expect("layout has group");
        matrix_from(&values[g.range()], g.rows, g.cols, g.complex)
    };
    let positions = shape.seq_len + 1;
    let gamma = R::lit(shape.gamma);
    Ok(match shape.kind {
        ModelKind::Qsa => {
            let n = shape.num_qubits();
            let mut v = AnsatzParams::new(n, shape.layers, get("v_angles").to_vec())?;
            let mut w = AnsatzParams::new(n, shape.layers, get("w_angles").to_vec())?;
            if shape.real_ansatz {
                v = v.into_real();
                w = w.into_real();
            }
            let r = if shape.phase_layer {
                PhaseLayerParams::new(get("r_angles").to_vec())?
            } else {
                PhaseLayerParams::zeros(shape.c_qubits())
            };
            CompiledModel::Qsa {
                embedding: EmbeddingMap::co_isometry(&mat("embedding"), positions, gamma)?,
                circuit: QsaCircuit::compile(&v, &w, &r)?,
            }
        }
        ModelKind::Lcsa => CompiledModel::Lcsa {
            embedding: EmbeddingMap::co_isometry(&mat("embedding"), positions, gamma)?,
            params: LcsaParams::new(mat("v_mat"), mat("w_mat"))?,
        },
        ModelKind::Scsa => {
            let params = ScsaParams {
                w_q: mat("w_q"),
                w_k: mat("w_k"),
                w_v: mat("w_v"),
                ffn_w1: mat("ffn_w1"),
                ffn_b1: mat("ffn_b1"),
                ffn_w2: mat("ffn_w2"),
                ffn_b2: mat("ffn_b2"),
                anti_embed: mat("anti_embed"),
            };
            params.validate()?;
            CompiledModel::Scsa { embedding: EmbeddingMap::new(mat("embedding"), positions, gamma)?, params }
        }
    })
}

/// Dataset records as `D`-dimensional input vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedData {
    pub kind: DatasetKind,
    pub vocab: usize,
    pub seq_len: usize,
    pub inputs: Vec<Vec<Vec<C<f64>>>>,
}

impl PreparedData {
    pub fn new(data: &SequenceDataset) -> Result<Self> {
        if data.is_empty() {
            return config("dataset has no records");
        }
        let inputs = (0..data.len()).map(|i| data.inputs::<f64>(i)).collect::<Result<_>>()?;
        Ok(Self { kind: data.kind(), vocab: data.vocab, seq_len: data.seq_len, inputs })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    fn check(&self, shape: &ModelShape) -> Result<()> {
        if self.vocab != shape.vocab || self.seq_len != shape.seq_len {
            return config(format!(
                "dataset (D={}, T={}) does not match model (D={}, T={})",
                self.vocab, self.seq_len, shape.vocab, shape.seq_len
            ));
        }
        if (self.kind == DatasetKind::Quantum) != shape.complex {
            return config("dataset kind does not match the model's real/complex parameterization");
        }
        Ok(())
    }
}

/// Finite-shot estimation of the all-zeros probability.
#[derive(Clone, Copy, Debug)]
pub struct ShotSampling {
    pub shots: u64,
    pub seed: u64,
}

/// Offset loss (`L½ − log T`) of one sequence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SequenceLoss<R> {
    pub offset: R,
    /// All-zeros probability, for the quantum model only.
    pub expectation: Option<R>,
    pub clamped: bool,
}

fn lit_inputs<R: Real>(inputs: &[Vec<C<f64>>]) -> Vec<Vec<C<R>>> {
    inputs.iter().map(|v| v.iter().map(|z| Complex::new(R::lit(z.re), R::lit(z.im))).collect()).collect()
}

fn normalize<R: Real>(v: &[C<R>]) -> Vec<C<R>> {
    let inv = R::one() / norm_sqr(v).sqrt();
    v.iter().map(|z| *z * inv).collect()
}

fn step_loss<R: Real>(probs: Vec<R>) -> Result<SequenceLoss<R>> {
    let probs = probs.into_iter().map(|p| p.min(R::one()).max(R::zero())).collect();
    let l = renyi_alpha_loss(&StepProbabilities::normalized(probs)?, 0.5)?;
    Ok(SequenceLoss { offset: l.value, expectation: None, clamped: l.clamped })
}

/// All-zeros probability of the quantum model for one sequence.
pub fn qsa_sequence_expectation<R: Real>(
    embedding: &EmbeddingMap<R>,
    circuit: &QsaCircuit<R>,
    inputs: &[Vec<C<f64>>],
    route: ExpectationRoute,
) -> Result<R> {
    let seq = qsa_sequence(embedding, inputs)?;
    match route {
        ExpectationRoute::Analytic => analytic_expectation_with(&seq, circuit),
        ExpectationRoute::Circuit => circuit_expectation_with(&seq, circuit),
    }
}

fn qsa_sequence<R: Real>(embedding: &EmbeddingMap<R>, inputs: &[Vec<C<f64>>]) -> Result<QsaSequence<R>> {
    let (x, xt) = embed_sequence(&lit_inputs(inputs), embedding)?;
    QsaSequence::new(encode_all(&x)?, encode_all(&xt[1..])?)
}

pub fn sequence_loss<R: Real>(
    model: &CompiledModel<R>,
    inputs: &[Vec<C<f64>>],
    route: ExpectationRoute,
    sampling: Option<ShotSampling>,
) -> Result<SequenceLoss<R>> {
    match model {
        CompiledModel::Qsa { embedding, circuit } => {
            let mut e = qsa_sequence_expectation(embedding, circuit, inputs, route)?;
            if let Some(s) = sampling {
                let p = e.value().clamp(0.0, 1.0);
                let hits = Binomial::new(s.shots, p)
                    .map_err(|err| QsaError::Numeric(err.to_string()))?
                    .sample(&mut ChaCha8Rng::seed_from_u64(s.seed));
                e = R::lit(hits as f64 / s.shots as f64);
            }
            let floor = R::lit(PROBABILITY_FLOOR);
            let clamped = !(e >= floor);
            let offset = -(if clamped { floor } else { e }).ln();
            Ok(SequenceLoss { offset, expectation: Some(e), clamped })
        }
        CompiledModel::Lcsa { embedding, params } => {
            let (x, xt) = embed_sequence(&lit_inputs(inputs), embedding)?;
            let xn: Vec<Vec<C<R>>> = x.iter().map(|v| normalize(v)).collect();
            let t = inputs.len() - 1;
            let probs = (1..=t).map(|j| lcsa_step_probability(&xn, &xt[1..], params, j)).collect::<Result<Vec<R>>>()?;
            step_loss(probs)
        }
        CompiledModel::Scsa { embedding, params } => {
            let lit = lit_inputs::<R>(inputs);
            let (x, _) = embed_sequence(&lit, embedding)?;
            let dists = scsa_distributions(&x, params)?;
            let probs = dists.iter().zip(&lit[1..]).map(|(d, w)| scsa_amplitude_fidelity(d, w)).collect();
            step_loss(probs)
        }
    }
}

/// Mean offset loss over the selected records, summed in index order.
pub fn dataset_loss<R: Real>(
    shape: &ModelShape,
    values: &[R],
    data: &PreparedData,
    indices: &[usize],
    route: ExpectationRoute,
) -> Result<R> {
    data.check(shape)?;
    let model = compile(shape, values)?;
    let mut total = R::zero();
    for &i in indices {
        total = total + sequence_loss(&model, &data.inputs[i], route, None)?.offset;
    }
    Ok(total / R::lit(indices.len() as f64))
}

/// Loss summary of one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetEvaluation {
    pub loss_offset: f64,
    pub loss: f64,
    pub perplexity: f64,
    pub clamped: usize,
}

/// Forward-only evaluation over one or more datasets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_kind: ModelKind,
    pub sets: Vec<SetEvaluation>,
    /// Mean of the per-set perplexities.
    pub mean: f64,
    /// Sample standard deviation of the per-set perplexities (0 for one set).
    pub stdev: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss_offset: f64,
    pub train_loss: f64,
    pub perplexity: f64,
    pub grad_norm: f64,
    pub seconds: f64,
    pub clamped: usize,
}

/// Per-epoch curve: row `e` holds the training loss after update epoch `e`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub model_kind: ModelKind,
    pub seq_len: usize,
    /// Offset loss before the first update.
    pub initial_loss_offset: f64,
    pub epochs: Vec<EpochRecord>,
    pub test: Option<EvalReport>,
}

pub const LOSS_CSV_HEADER: &str = "epoch,train_loss_offset,train_loss,perplexity,grad_norm,seconds";

impl LossReport {
    /// Offset loss after `epoch` updates (epoch 0 is the initial loss).
    pub fn loss_at(&self, epoch: usize) -> Option<f64> {
        if epoch == 0 {
            Some(self.initial_loss_offset)
        } else {
            self.epochs.get(epoch - 1).map(|r| r.train_loss_offset)
        }
    }

    pub fn final_loss_offset(&self) -> f64 {
        self.epochs.last().map_or(self.initial_loss_offset, |r| r.train_loss_offset)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(LOSS_CSV_HEADER);
        out.push('\n');
        for r in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.epoch, r.train_loss_offset, r.train_loss, r.perplexity, r.grad_norm, r.seconds
            );
        }
        out
    }
}

/// Runtime switches that do not change results.
#[derive(Clone, Copy, Debug, Default)]
pub struct TrainOptions {
    /// Record wall-clock seconds per epoch (otherwise 0).
    pub timing: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub report: LossReport,
}

fn mix(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5151_u64, |acc, p| splitmix64(acc ^ splitmix64(*p)))
}

struct Evaluator<'a> {
    cfg: &'a TrainConfig,
    shape: &'a ModelShape,
    data: &'a PreparedData,
}

impl Evaluator<'_> {
    fn sampling(&self, epoch: usize, record: usize, eval: u64) -> Option<ShotSampling> {
        self.cfg.shots.map(|shots| ShotSampling { shots, seed: mix(&[self.cfg.seed, epoch as u64, record as u64, eval]) })
    }

    /// Per-record losses, computed in parallel and returned in record order.
    fn losses(&self, values: &[f64], indices: &[usize], epoch: usize, eval: u64) -> Result<Vec<SequenceLoss<f64>>> {
        let model = compile(self.shape, values)?;
        indices
            .par_iter()
            .map(|&i| sequence_loss(&model, &self.data.inputs[i], self.cfg.expectation, self.sampling(epoch, i, eval)))
            .collect()
    }

    fn mean_loss(&self, values: &[f64], indices: &[usize], epoch: usize, eval: u64) -> Result<(f64, usize)> {
        let losses = self.losses(values, indices, epoch, eval)?;
        let total: f64 = losses.iter().map(|l| l.offset).sum();
        Ok((total / indices.len() as f64, losses.iter().filter(|l| l.clamped).count()))
    }

    /// Loss and gradient of the mean offset loss over `indices`.
    fn gradient(&self, values: &[f64], indices: &[usize], epoch: usize, groups: &[ParamGroup]) -> Result<(f64, Vec<f64>)> {
        let base = self.losses(values, indices, epoch, 0)?;
        let loss = base.iter().map(|l| l.offset).sum::<f64>() / indices.len() as f64;
        if !loss.is_finite() {
            return Err(QsaError::Numeric(format!("non-finite loss at epoch {epoch}")));
        }
        let mut tasks = Vec::new();
        for g in groups {
            if g.class == ParamClass::Embedding && !self.cfg.embedding_trainable {
                continue;
            }
            for k in g.range() {
                let inactive = self.shape.real_ansatz
                    && matches!(g.name.as_str(), "v_angles" | "w_angles")
                    && (k - g.offset) % 2 == crate::ansatz::Axis::Z as usize;
                if !inactive {
                    tasks.push((k, g.class));
                }
            }
        }
        let n = indices.len() as f64;
        let partials: Vec<(usize, f64)> = tasks
            .par_iter()
            .map(|&(k, class)| -> Result<(usize, f64)> {
                let model_at = |delta: f64| {
                    let mut v = values.to_vec();
                    v[k] += delta;
                    compile(self.shape, &v)
                };
                let eval_id = |sign: u64| 1 + 2 * k as u64 + sign;
                let g = if class == ParamClass::CircuitAngle && self.cfg.gradient_mode == GradientMode::ParameterShift {
                    let shift = std::f64::consts::FRAC_PI_2;
                    let (plus, minus) = (model_at(shift)?, model_at(-shift)?);
                    let mut acc = 0.0;
                    for (pos, &i) in indices.iter().enumerate() {
                        let b = &base[pos];
                        if b.clamped {
                            continue;
                        }
                        let inputs = &self.data.inputs[i];
                        let ep = sequence_loss(&plus, inputs, self.cfg.expectation, self.sampling(epoch, i, eval_id(0)))?;
                        let em = sequence_loss(&minus, inputs, self.cfg.expectation, self.sampling(epoch, i, eval_id(1)))?;
                        let de = (ep.expectation.unwrap_or(0.0) - em.expectation.unwrap_or(0.0)) / 2.0;
                        acc += -de / b.expectation.unwrap_or(1.0);
                    }
                    acc / n
                } else {
                    let h = self.cfg.fd_step;
                    let (plus, minus) = (model_at(h)?, model_at(-h)?);
                    let mut acc = 0.0;
                    for &i in indices {
                        let inputs = &self.data.inputs[i];
                        let lp = sequence_loss(&plus, inputs, self.cfg.expectation, self.sampling(epoch, i, eval_id(0)))?;
                        let lm = sequence_loss(&minus, inputs, self.cfg.expectation, self.sampling(epoch, i, eval_id(1)))?;
                        acc += (lp.offset - lm.offset) / (2.0 * h);
                    }
                    acc / n
                };
                Ok((k, g))
            })
            .collect::<Result<_>>()?;
        let mut grad = vec![0.0; values.len()];
        for (k, g) in partials {
            if !g.is_finite() {
                let name = groups.iter().find(|gr| gr.range().contains(&k)).map_or("?", |gr| gr.name.as_str());
                return Err(QsaError::Numeric(format!("non-finite gradient for {name}[{k}] at epoch {epoch}")));
            }
            grad[k] = g;
        }
        Ok((loss, grad))
    }
}

/// Adaptive-moment optimizer state.
#[derive(Clone, Debug)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], step: 0 }
    }

    pub fn update(&mut self, values: &mut [f64], grad: &[f64], lrs: &[f64], beta1: f64, beta2: f64, eps: f64) {
        self.step += 1;
        let c1 = 1.0 - beta1.powi(self.step);
        let c2 = 1.0 - beta2.powi(self.step);
        for k in 0..values.len() {
            self.m[k] = beta1 * self.m[k] + (1.0 - beta1) * grad[k];
            self.v[k] = beta2 * self.v[k] + (1.0 - beta2) * grad[k] * grad[k];
            let mh = self.m[k] / c1;
            let vh = self.v[k] / c2;
            values[k] -= lrs[k] * mh / (vh.sqrt() + eps);
        }
    }
}

/// Trains from a seeded initialization.
pub fn train(cfg: &TrainConfig, dataset: &SequenceDataset) -> Result<TrainOutcome> {
    train_with(cfg, dataset, None, TrainOptions::default())
}

/// Trains from `init` if given, otherwise from [`ModelParams::init`].
pub fn train_with(
    cfg: &TrainConfig,
    dataset: &SequenceDataset,
    init: Option<ModelParams>,
    options: TrainOptions,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let data = PreparedData::new(dataset)?;
    let params = match init {
        Some(p) => {
            if p.kind() != cfg.model_kind {
                return Err(QsaError::ModelMismatch {
                    expected: cfg.model_kind.as_str().into(),
                    found: p.kind().as_str().into(),
                });
            }
            p
        }
        None => ModelParams::init(ModelShape::from_config(cfg, dataset)?, cfg.seed)?,
    };
    data.check(&params.shape)?;
    let shape = params.shape.clone();
    let groups = params.groups.clone();
    let mut values = params.values.clone();
    let eval = Evaluator { cfg, shape: &shape, data: &data };

    let lrs: Vec<f64> = groups
        .iter()
        .flat_map(|g| {
            let lr = if g.class == ParamClass::Embedding { cfg.embedding_learning_rate } else { cfg.learning_rate };
            std::iter::repeat_n(lr, g.len)
        })
        .collect();
    let all: Vec<usize> = (0..data.len()).collect();
    let log_t = (shape.seq_len as f64).ln();
    let (initial, _) = eval.mean_loss(&values, &all, 0, 0)?;
    if !initial.is_finite() {
        return Err(QsaError::Numeric("initial loss is not finite".into()));
    }

    let mut adam = Adam::new(values.len());
    let mut order_rng = ChaCha8Rng::seed_from_u64(mix(&[cfg.seed, 0xBA7C]));
    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let batches: Vec<Vec<usize>> = match cfg.batch_size {
            None => vec![all.clone()],
            Some(b) => {
                let mut order = all.clone();
                order.shuffle(&mut order_rng);
                order.chunks(b).map(<[usize]>::to_vec).collect()
            }
        };
        let mut norm_total = 0.0;
        for batch in &batches {
            let (_, grad) = eval.gradient(&values, batch, epoch, &groups)?;
            norm_total += grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            adam.update(&mut values, &grad, &lrs, cfg.beta1, cfg.beta2, cfg.epsilon);
            if values.iter().any(|v| !v.is_finite()) {
                return Err(QsaError::Numeric(format!("parameters became non-finite at epoch {epoch}")));
            }
        }
        let (offset, clamped) = eval.mean_loss(&values, &all, epoch, 0)?;
        if !offset.is_finite() {
            return Err(QsaError::Numeric(format!("non-finite loss after epoch {epoch}")));
        }
        records.push(EpochRecord {
            epoch,
            train_loss_offset: offset,
            train_loss: offset + log_t,
            perplexity: offset.exp(),
            grad_norm: norm_total / batches.len() as f64,
            seconds: if options.timing { start.elapsed().as_secs_f64() } else { 0.0 },
            clamped,
        });
    }
    let report = LossReport {
        model_kind: shape.kind,
        seq_len: shape.seq_len,
        initial_loss_offset: initial,
        epochs: records,
        test: None,
    };
    Ok(TrainOutcome { params: ModelParams::from_values(shape, values)?, report })
}

/// Full-batch mean offset loss and its gradient at `params`, using the
/// configured gradient mode, route and shot sampling of the first epoch.
pub fn loss_gradient(cfg: &TrainConfig, params: &ModelParams, dataset: &SequenceDataset) -> Result<(f64, Vec<f64>)> {
    cfg.validate()?;
    let data = PreparedData::new(dataset)?;
    data.check(&params.shape)?;
    let eval = Evaluator { cfg, shape: &params.shape, data: &data };
    let all: Vec<usize> = (0..data.len()).collect();
    eval.gradient(&params.values, &all, 1, &params.groups)
}

/// Forward-only loss over each dataset with exact expectations.
pub fn evaluate(params: &ModelParams, datasets: &[SequenceDataset]) -> Result<EvalReport> {
    evaluate_with(params, datasets, ExpectationRoute::Analytic)
}

pub fn evaluate_with(params: &ModelParams, datasets: &[SequenceDataset], route: ExpectationRoute) -> Result<EvalReport> {
    if datasets.is_empty() {
        return config("evaluation needs at least one dataset");
    }
    let model = params.compile()?;
    let log_t = (params.shape.seq_len as f64).ln();
    let mut sets = Vec::with_capacity(datasets.len());
    for ds in datasets {
        let data = PreparedData::new(ds)?;
        data.check(&params.shape)?;
        let losses: Vec<SequenceLoss<f64>> =
            data.inputs.par_iter().map(|inp| sequence_loss(&model, inp, route, None)).collect::<Result<_>>()?;
        let offset = losses.iter().map(|l| l.offset).sum::<f64>() / losses.len() as f64;
        if !offset.is_finite() {
            return Err(QsaError::Numeric("non-finite evaluation loss".into()));
        }
        sets.push(SetEvaluation {
            loss_offset: offset,
            loss: offset + log_t,
            perplexity: offset.exp(),
            clamped: losses.iter().filter(|l| l.clamped).count(),
        });
    }
    let n = sets.len() as f64;
    let mean = sets.iter().map(|s| s.perplexity).sum::<f64>() / n;
    let stdev = if sets.len() > 1 {
        (sets.iter().map(|s| (s.perplexity - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(EvalReport { model_kind: params.kind(), sets, mean, stdev })
}

/// `|⟨t|u⟩|² / ‖t‖²` per candidate `t` against a unit vector `u`; zero candidates score 0.
fn overlap_scores(candidates: &[Vec<C<f64>>], unit: &[C<f64>]) -> Vec<f64> {
    candidates
        .iter()
        .map(|t| {
            let n = norm_sqr(t);
            if n > 1e-24 {
                vdot(t, unit).norm_sqr() / n
            } else {
                0.0
            }
        })
        .collect()
}

/// Vocabulary scores for the prediction after step `j` (1-based) of one record.
/// Quantum and linear models score each word by the squared overlap of its
/// normalized embedded token with the normalized prediction; the softmax
/// model returns its output distribution.
pub fn predict_scores(params: &ModelParams, inputs: &[Vec<C<f64>>], j: usize) -> Result<Vec<f64>> {
    let model = params.compile()?;
    let vocab = params.shape.vocab;
    let word_tokens = |emb: &EmbeddingMap<f64>| -> Vec<Vec<C<f64>>> { (0..vocab).map(|l| emb.matrix().column(l)).collect() };
    match &model {
        CompiledModel::Qsa { embedding, circuit } => {
            let seq = qsa_sequence(embedding, inputs)?;
            let (state, _) = predict_token_state_with(&seq, circuit, j)?;
            Ok(overlap_scores(&word_tokens(embedding), state.amplitudes()))
        }
        CompiledModel::Lcsa { embedding, params } => {
            let (x, _) = embed_sequence(&lit_inputs::<f64>(inputs), embedding)?;
            let xn: Vec<Vec<C<f64>>> = x.iter().map(|v| normalize(v)).collect();
            let z = linear_attention_layer(&xn, params, j)?;
            let nz = norm_sqr(&z);
            if !(nz > 1e-24) {
                return Err(QsaError::DegeneratePrediction(format!("step {j} prediction vanishes")));
            }
            let inv = 1.0 / nz.sqrt();
            let unit: Vec<C<f64>> = z.iter().map(|v| v * inv).collect();
            Ok(overlap_scores(&word_tokens(embedding), &unit))
        }
        CompiledModel::Scsa { embedding, params } => {
            let (x, _) = embed_sequence(&lit_inputs::<f64>(inputs), embedding)?;
            if j == 0 || j >= x.len() + 1 {
                return config(format!("prediction step {j} outside 1..={}", x.len()));
            }
            crate::classical::scsa_step_distribution(&x, params, j)
        }
    }
}

/// Named parameter array in a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamArray {
    pub shape: Vec<usize>,
    pub complex: bool,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub model_kind: ModelKind,
    pub config_hash: String,
    pub seed: u64,
    pub shape: ModelShape,
    pub params: BTreeMap<String, ParamArray>,
    pub config: TrainConfig,
}

impl Checkpoint {
    pub fn new(params: &ModelParams, cfg: &TrainConfig) -> Self {
        let arrays = params
            .groups
            .iter()
            .map(|g| {
                let shape = if g.cols == 1 { vec![g.rows] } else { vec![g.rows, g.cols] };
                (g.name.clone(), ParamArray { shape, complex: g.complex, values: params.values[g.range()].to_vec() })
            })
            .collect();
        Self {
            version: CHECKPOINT_VERSION,
            model_kind: params.kind(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            shape: params.shape.clone(),
            params: arrays,
            config: cfg.without_paths(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| QsaError::Parse(format!("checkpoint: {e}")))?;
        let version = value.get("version").and_then(serde_json::Value::as_u64).ok_or_else(|| QsaError::Parse("checkpoint has no version".into()))?;
        if version != u64::from(CHECKPOINT_VERSION) {
            return Err(QsaError::UnsupportedVersion { found: version as u32, expected: CHECKPOINT_VERSION });
        }
        serde_json::from_value(value).map_err(|e| QsaError::Parse(format!("checkpoint: {e}")))
    }

    pub fn params(&self) -> Result<ModelParams> {
        let groups = self.shape.layout();
        let mut values = Vec::new();
        for g in &groups {
            let arr = self.params.get(&g.name).ok_or_else(|| QsaError::Parse(format!("checkpoint lacks {}", g.name)))?;
            if arr.values.len() != g.len || arr.complex != g.complex {
                return Err(QsaError::Parse(format!("checkpoint array {} has the wrong size", g.name)));
            }
            values.extend_from_slice(&arr.values);
        }
        if self.params.len() != groups.len() {
            return Err(QsaError::Parse("checkpoint has unexpected parameter arrays".into()));
        }
        ModelParams::from_values(self.shape.clone(), values)
    }

    /// Parameters, rejecting checkpoints of another model kind.
    pub fn params_for(&self, kind: ModelKind) -> Result<ModelParams> {
        if self.model_kind != kind || self.shape.kind != kind {
            return Err(QsaError::ModelMismatch { expected: kind.as_str().into(), found: self.model_kind.as_str().into() });
        }
        self.params()
    }
}

/// Runs `f` on a local thread pool with at most `threads` workers.
pub fn with_thread_cap<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| QsaError::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Thread cap from the `QSALAB_THREADS` environment variable.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var("QSALAB_THREADS") {
        Ok(s) if s.trim().is_empty() => Ok(None),
        Ok(s) => s.trim().parse::<usize>().map(Some).map_err(|_| QsaError::Config(format!("QSALAB_THREADS={s:?} is not a count"))),
        Err(_) => Ok(None),
    }
}

/// Per-record seed helper re-exported for reproducible test-set generation.
pub fn test_set_seed(seed: u64, index: usize) -> u64 {
    record_seed(seed, index)
}
