//! The fused interval-prediction network.
//!
//! Four per-modality extractors feed an adaptive softmax weighting over the
//! concatenated feature nodes; the weighted representation passes through a
//! fusion layer and a relu trunk, the standardized Austin-formula result is
//! concatenated to the last hidden layer as a non-trainable node, and the
//! two outputs are de-normalized to meters inside the graph so losses act on
//! dimensional quantities.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::loss::{CorrelationHead, CORRELATION_B_INIT, CORRELATION_W_INIT};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tape::{Mode, NodeId, Tape, Value};

/// Canonical modality order; extractor widths and feature layout follow it.
pub const MODALITIES: [&str; 4] = [
    "hydrothermal",
    "pipeline",
    "product_properties",
    "initial_condition",
];

/// The network predicts the (lower, upper) limit pair.
pub const OUTPUT_WIDTH: usize = 2;

pub const CHECKPOINT_VERSION: &str = "1";

/// Uniform init range of the linear output layer.
pub const OUTPUT_INIT_LIMIT: f64 = 0.01;

/// Ordered grouping of feature columns into the four modalities.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(
    try_from = "IndexMap<String, Vec<String>>",
    into = "IndexMap<String, Vec<String>>"
)]
pub struct ModalityManifest {
    groups: IndexMap<String, Vec<String>>,
}

impl TryFrom<IndexMap<String, Vec<String>>> for ModalityManifest {
    type Error = Error;

    fn try_from(groups: IndexMap<String, Vec<String>>) -> Result<Self> {
        ModalityManifest::new(groups)
    }
}

impl From<ModalityManifest> for IndexMap<String, Vec<String>> {
    fn from(m: ModalityManifest) -> Self {
        m.groups
    }
}

impl ModalityManifest {
    /// Validates and canonicalizes: exactly the four known modalities, every
    /// group non-empty, feature names unique across groups. Group order is
    /// normalized to [`MODALITIES`] regardless of input order.
    pub fn new(groups: IndexMap<String, Vec<String>>) -> Result<Self> {
        for name in groups.keys() {
            if !MODALITIES.contains(&name.as_str()) {
                return Err(Error::Schema(format!(
                    "unknown modality `{name}` (expected one of {MODALITIES:?})"
                )));
            }
        }
        let mut canonical = IndexMap::new();
        for &name in &MODALITIES {
            let cols = groups
                .get(name)
                .ok_or_else(|| Error::Schema(format!("manifest is missing modality `{name}`")))?;
            if cols.is_empty() {
                return Err(Error::Schema(format!("modality `{name}` has no columns")));
            }
            canonical.insert(name.to_string(), cols.clone());
        }
        let mut seen = std::collections::HashSet::new();
        for col in canonical.values().flatten() {
            if !seen.insert(col.as_str()) {
                return Err(Error::Schema(format!("duplicate feature column `{col}`")));
            }
        }
        Ok(Self { groups: canonical })
    }

    pub fn parse(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(Error::from)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn group(&self, index: usize) -> (&str, &[String]) {
        let (name, cols) = self.groups.get_index(index).expect("modality index < 4");
        (name.as_str(), cols.as_slice())
    }

    /// Feature columns in layout order (group order, then column order).
    pub fn columns(&self) -> Vec<&str> {
        self.groups
            .values()
            .flatten()
            .map(String::as_str)
            .collect()
    }

    pub fn widths(&self) -> [usize; 4] {
        let mut w = [0; 4];
        for (i, cols) in self.groups.values().enumerate() {
            w[i] = cols.len();
        }
        w
    }

    pub fn feature_count(&self) -> usize {
        self.groups.values().map(Vec::len).sum()
    }
}

/// Normalization statistics, always computed on the training part only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub target_mean: [f64; 2],
    pub target_std: [f64; 2],
    pub ym_mean: f64,
    pub ym_std: f64,
}

impl NormStats {
    /// Neutral statistics (mean 0, std 1); useful for toy graphs.
    pub fn identity(feature_count: usize) -> Self {
        Self {
            feature_mean: vec![0.0; feature_count],
            feature_std: vec![1.0; feature_count],
            target_mean: [0.0, 0.0],
            target_std: [1.0, 1.0],
            ym_mean: 0.0,
            ym_std: 1.0,
        }
    }

    pub fn validate(&self, feature_count: usize) -> Result<()> {
        if self.feature_mean.len() != feature_count || self.feature_std.len() != feature_count {
            return Err(Error::Schema(format!(
                "norm stats cover {} features, manifest has {feature_count}",
                self.feature_mean.len()
            )));
        }
        let all_finite = self
            .feature_mean
            .iter()
            .chain(self.feature_std.iter())
            .chain(self.target_mean.iter())
            .chain(self.target_std.iter())
            .chain([&self.ym_mean, &self.ym_std])
            .all(|x| x.is_finite());
        if !all_finite {
            return Err(Error::Data("non-finite normalization statistics".into()));
        }
        let stds_positive = self
            .feature_std
            .iter()
            .chain(self.target_std.iter())
            .chain([&self.ym_std])
            .all(|&s| s > 0.0);
        if !stds_positive {
            return Err(Error::Data(
                "normalization stddevs must be strictly positive".into(),
            ));
        }
        Ok(())
    }
}

/// Module-1 settings: extractor widths (canonical modality order), fusion
/// layer width, and the dropout applied to the weighted representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub extractor_widths: [usize; 4],
    pub fusion_width: usize,
    pub dropout_rate: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            extractor_widths: [12, 8, 10, 5],
            fusion_width: 20,
            dropout_rate: 0.1,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.extractor_widths.contains(&0) || self.fusion_width == 0 {
            return Err(Error::Config("widths must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

/// Module-2 settings: trunk hidden widths and the mechanism-node switch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrunkConfig {
    pub hidden_widths: Vec<usize>,
    pub use_mechanism_node: bool,
}

impl Default for TrunkConfig {
    fn default() -> Self {
        Self {
            hidden_widths: vec![60, 10],
            use_mechanism_node: true,
        }
    }
}

impl TrunkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_widths.is_empty() || self.hidden_widths.contains(&0) {
            return Err(Error::Config("trunk widths must be at least 1".into()));
        }
        Ok(())
    }
}

/// Full architecture description plus the normalization constants baked into
/// the graph. The ablation flags are independent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub fusion: FusionConfig,
    pub trunk: TrunkConfig,
    pub use_fusion: bool,
    pub seed: u64,
    pub norm_stats: NormStats,
}

impl ModelConfig {
    pub fn new(norm_stats: NormStats, seed: u64) -> Self {
        Self {
            fusion: FusionConfig::default(),
            trunk: TrunkConfig::default(),
            use_fusion: true,
            seed,
            norm_stats,
        }
    }

    pub fn validate(&self, feature_count: usize) -> Result<()> {
        self.fusion.validate()?;
        self.trunk.validate()?;
        self.norm_stats.validate(feature_count)
    }
}

/// Named trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor<S> {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<S>,
}

impl<S: Scalar> ParamTensor<S> {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Tape-registered parameters for one forward/backward pass.
pub struct BoundModel {
    pub param_ids: Vec<NodeId>,
    pub head: CorrelationHead,
}

/// The network with its learned parameters.
#[derive(Debug, Clone)]
pub struct Model<S> {
    config: ModelConfig,
    manifest: ModalityManifest,
    params: Vec<ParamTensor<S>>,
}

/// (name, dims) of every trainable tensor, in registration order. The
/// correlation head rides at the end so one optimizer updates everything.
fn layer_plan(config: &ModelConfig, manifest: &ModalityManifest) -> Vec<(String, Vec<usize>)> {
    let mut plan = Vec::new();
    let widths = manifest.widths();
    let fusion_input = if config.use_fusion {
        for (m, &name) in MODALITIES.iter().enumerate() {
            let w = config.fusion.extractor_widths[m];
            plan.push((format!("extractor.{name}.weight"), vec![w, widths[m]]));
            plan.push((format!("extractor.{name}.bias"), vec![w]));
        }
        config.fusion.extractor_widths.iter().sum()
    } else {
        manifest.feature_count()
    };
    plan.push((
        "fusion.weight".into(),
        vec![config.fusion.fusion_width, fusion_input],
    ));
    plan.push(("fusion.bias".into(), vec![config.fusion.fusion_width]));
    let mut prev = config.fusion.fusion_width;
    for (i, &h) in config.trunk.hidden_widths.iter().enumerate() {
        plan.push((format!("trunk.{i}.weight"), vec![h, prev]));
        plan.push((format!("trunk.{i}.bias"), vec![h]));
        prev = h;
    }
    let out_in = prev + usize::from(config.trunk.use_mechanism_node);
    plan.push(("output.weight".into(), vec![OUTPUT_WIDTH, out_in]));
    plan.push(("output.bias".into(), vec![OUTPUT_WIDTH]));
    plan.push(("correlation.w_c".into(), vec![]));
    plan.push(("correlation.b_c".into(), vec![]));
    plan
}

impl<S: Scalar> Model<S> {
    /// Fresh model with seeded scaled-uniform fan-in initialization
    /// (`U(±√(6/fan_in))` on the relu layers, zero biases) and the
    /// correlation head at its (1, 0) starting point. The linear output
    /// layer starts near zero so initial predictions sit at the target
    /// means instead of scattering by the full target spread.
    pub fn init(config: ModelConfig, manifest: ModalityManifest) -> Result<Self> {
        config.validate(manifest.feature_count())?;
        let mut rng = Rng::derive(config.seed, 0x6d6f_64656c); // "model"
        let params = layer_plan(&config, &manifest)
            .into_iter()
            .map(|(name, dims)| {
                let data = match name.as_str() {
                    "correlation.w_c" => vec![S::of(CORRELATION_W_INIT)],
                    "correlation.b_c" => vec![S::of(CORRELATION_B_INIT)],
                    _ if dims.len() == 2 => {
                        let limit = if name == "output.weight" {
                            OUTPUT_INIT_LIMIT
                        } else {
                            (6.0 / dims[1] as f64).sqrt()
                        };
                        (0..dims[0] * dims[1])
                            .map(|_| S::of(rng.uniform(-limit, limit)))
                            .collect()
                    }
                    _ => vec![S::zero(); dims.iter().product()],
                };
                ParamTensor { name, dims, data }
            })
            .collect();
        Ok(Self {
            config,
            manifest,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn manifest(&self) -> &ModalityManifest {
        &self.manifest
    }

    pub fn params(&self) -> &[ParamTensor<S>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [ParamTensor<S>] {
        &mut self.params
    }

    pub fn param_named_mut(&mut self, name: &str) -> Option<&mut ParamTensor<S>> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    /// Total trainable scalar count.
    pub fn param_count(&self) -> usize {
        self.params.iter().map(ParamTensor::len).sum()
    }

    /// Register every parameter on the tape, in plan order.
    pub fn bind(&self, tape: &mut Tape<S>) -> BoundModel {
        let param_ids: Vec<NodeId> = self
            .params
            .iter()
            .map(|p| {
                let value = if p.dims.is_empty() {
                    Value::scalar(p.data[0])
                } else if p.dims.len() == 1 {
                    Value::vector(p.data.clone())
                } else {
                    Value::matrix(p.dims[0], p.dims[1], p.data.clone()).expect("shapes consistent")
                };
                tape.param(value)
            })
            .collect();
        let n = param_ids.len();
        BoundModel {
            head: CorrelationHead {
                w_c: param_ids[n - 2],
                b_c: param_ids[n - 1],
            },
            param_ids,
        }
    }

    /// Standardize the Austin-formula results (meters) into a non-trainable
    /// graph input.
    pub fn mechanism_node(&self, tape: &mut Tape<S>, ym: &[S]) -> Result<NodeId> {
        mechanism_node(tape, ym, &self.config.norm_stats)
    }

    /// Module 1 alone: per-modality extractors, softmax re-weighting of the
    /// concatenated representation, and dropout. Returns the weighted
    /// representation `V_w` (N × Σ extractor widths). With fusion ablated,
    /// this is just the raw standardized features as a constant node.
    pub fn fusion_forward(
        &self,
        tape: &mut Tape<S>,
        bound: &BoundModel,
        features: &Value<S>,
        mode: Mode,
    ) -> Result<NodeId> {
        let (n, width) = features.shape2().ok_or_else(|| {
            Error::Shape(format!(
                "fusion expects an N×F feature matrix, got {:?}",
                features.dims()
            ))
        })?;
        if !self.config.use_fusion {
            return Ok(tape.input(features.clone()));
        }
        let widths = self.manifest.widths();
        let mut cursor = 0usize;
        let mut offset = 0usize;
        let mut extracted = Vec::with_capacity(4);
        for &w in &widths {
            let mut block = vec![S::zero(); n * w];
            for r in 0..n {
                block[r * w..(r + 1) * w].copy_from_slice(
                    &features.data()[r * width + offset..r * width + offset + w],
                );
            }
            let x = tape.input(Value::matrix(n, w, block)?);
            let weight = bound.param_ids[cursor];
            let bias = bound.param_ids[cursor + 1];
            cursor += 2;
            let h = tape.affine(weight, x, bias)?;
            extracted.push(tape.relu(h));
            offset += w;
        }
        let holistic = tape.concat(&extracted)?;
        let weights = tape.softmax(holistic)?;
        let weighted = tape.mul(holistic, weights)?;
        tape.dropout(weighted, self.config.fusion.dropout_rate, mode)
    }

    /// Forward pass on a standardized feature batch (N×F). `ym` carries the
    /// raw Austin results in meters, one per row, and is required exactly
    /// when the mechanism node is enabled. Returns the N×2 prediction in
    /// meters.
    pub fn forward(
        &self,
        tape: &mut Tape<S>,
        bound: &BoundModel,
        features: &Value<S>,
        ym: Option<&[S]>,
        mode: Mode,
    ) -> Result<NodeId> {
        let (n, width) = features.shape2().ok_or_else(|| {
            Error::Shape(format!(
                "forward expects an N×F feature matrix, got {:?}",
                features.dims()
            ))
        })?;
        let feature_count = self.manifest.feature_count();
        if width != feature_count {
            return Err(Error::Shape(format!(
                "feature width {width} does not match manifest ({feature_count})"
            )));
        }
        if n == 0 {
            return Err(Error::Contract("forward on an empty batch".into()));
        }

        // The fusion block consumes one weight+bias pair per modality.
        let mut cursor = if self.config.use_fusion {
            2 * MODALITIES.len()
        } else {
            0
        };
        let take = |cursor: &mut usize| {
            let id = bound.param_ids[*cursor];
            *cursor += 1;
            id
        };

        let fused = self.fusion_forward(tape, bound, features, mode)?;

        let weight = take(&mut cursor);
        let bias = take(&mut cursor);
        let mut hidden = tape.affine(weight, fused, bias)?;
        hidden = tape.relu(hidden);
        for _ in &self.config.trunk.hidden_widths {
            let weight = take(&mut cursor);
            let bias = take(&mut cursor);
            hidden = tape.affine(weight, hidden, bias)?;
            hidden = tape.relu(hidden);
        }

        if self.config.trunk.use_mechanism_node {
            let ym = ym.ok_or_else(|| {
                Error::Contract("mechanism node enabled but no y_m values provided".into())
            })?;
            if ym.len() != n {
                return Err(Error::Shape(format!(
                    "got {} y_m values for a batch of {n}",
                    ym.len()
                )));
            }
            let node = self.mechanism_node(tape, ym)?;
            hidden = tape.concat(&[hidden, node])?;
        }

        let weight = take(&mut cursor);
        let bias = take(&mut cursor);
        let standardized = tape.affine(weight, hidden, bias)?;

        // Fixed de-normalization back to meters: a non-trainable diagonal
        // affine with the training-set target statistics.
        let stats = &self.config.norm_stats;
        let scale = tape.input(Value::matrix(
            2,
            2,
            vec![
                S::of(stats.target_std[0]),
                S::zero(),
                S::zero(),
                S::of(stats.target_std[1]),
            ],
        )?);
        let shift = tape.input(Value::vector(vec![
            S::of(stats.target_mean[0]),
            S::of(stats.target_mean[1]),
        ]));
        tape.affine(scale, standardized, shift)
    }

    /// Eval-mode forward on one batch, returning the (lower, upper) rows in
    /// meters. Deterministic: dropout is bypassed entirely.
    pub fn predict(&self, features: &Value<S>, ym: Option<&[S]>) -> Result<Vec<[S; 2]>> {
        let mut tape = Tape::new(0);
        let bound = self.bind(&mut tape);
        let out = self.forward(&mut tape, &bound, features, ym, Mode::Eval)?;
        let v = tape.value(out);
        let (n, _) = v.shape2().expect("forward yields N×2");
        Ok((0..n)
            .map(|r| [v.data()[2 * r], v.data()[2 * r + 1]])
            .collect())
    }

    /// Extractor parameter total: the trainable scalars that exist only when
    /// module 1 is enabled (per-modality extractor weights and biases).
    pub fn extractor_param_total(config: &ModelConfig, manifest: &ModalityManifest) -> usize {
        let widths = manifest.widths();
        config
            .fusion
            .extractor_widths
            .iter()
            .zip(widths.iter())
            .map(|(&w, &d)| w * d + w)
            .sum()
    }

    pub fn to_checkpoint(&self, meta: TrainMeta) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION.to_string(),
            config: self.config.clone(),
            manifest: self.manifest.clone(),
            params: self
                .params
                .iter()
                .map(|p| CheckpointTensor {
                    name: p.name.clone(),
                    dims: p.dims.clone(),
                    data: p.data.iter().map(|x| x.as_f64()).collect(),
                })
                .collect(),
            meta,
        }
    }

    pub fn from_checkpoint(cp: &Checkpoint) -> Result<Self> {
        if cp.version != CHECKPOINT_VERSION {
            return Err(Error::Load(format!(
                "unsupported checkpoint version `{}` (expected `{CHECKPOINT_VERSION}`)",
                cp.version
            )));
        }
        cp.config
            .validate(cp.manifest.feature_count())
            .map_err(|e| Error::Load(e.to_string()))?;
        let plan = layer_plan(&cp.config, &cp.manifest);
        if plan.len() != cp.params.len() {
            return Err(Error::Load(format!(
                "checkpoint has {} tensors, architecture needs {}",
                cp.params.len(),
                plan.len()
            )));
        }
        let mut params = Vec::with_capacity(plan.len());
        for ((name, dims), tensor) in plan.into_iter().zip(&cp.params) {
            if tensor.name != name {
                return Err(Error::Load(format!(
                    "unexpected tensor `{}` (expected `{name}`)",
                    tensor.name
                )));
            }
            let expected: usize = dims.iter().product();
            if tensor.dims != dims || tensor.data.len() != expected {
                return Err(Error::Load(format!(
                    "tensor `{name}` has shape {:?} with {} values, expected {:?}",
                    tensor.dims,
                    tensor.data.len(),
                    dims
                )));
            }
            if tensor.data.iter().any(|x| !x.is_finite()) {
                return Err(Error::Load(format!("tensor `{name}` has non-finite values")));
            }
            params.push(ParamTensor {
                name,
                dims,
                data: tensor.data.iter().map(|&x| S::of(x)).collect(),
            });
        }
        Ok(Self {
            config: cp.config.clone(),
            manifest: cp.manifest.clone(),
            params,
        })
    }
}

/// Standalone mechanism-node builder: `(y_m − mean)/std` as a constant
/// vector input.
pub fn mechanism_node<S: Scalar>(
    tape: &mut Tape<S>,
    ym: &[S],
    stats: &NormStats,
) -> Result<NodeId> {
    if ym.iter().any(|x| !x.is_finite()) {
        return Err(Error::Eval("non-finite y_m value".into()));
    }
    let mean = S::of(stats.ym_mean);
    let std = S::of(stats.ym_std);
    Ok(tape.input(Value::vector(
        ym.iter().map(|&y| (y - mean) / std).collect(),
    )))
}

/// Serialized tensor (always `f64`; JSON numbers round-trip exactly).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

/// Reproducibility stamp attached to every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
    pub version: String,
}

impl Provenance {
    pub fn new(seed: u64, config: &impl Serialize) -> Self {
        Self {
            seed,
            config_hash: config_hash(config),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn comment_line(&self) -> String {
        format!(
            "# seed={} config_hash={} version={}",
            self.seed, self.config_hash, self.version
        )
    }
}

/// Stable short hash of a serializable configuration.
pub fn config_hash(config: &impl Serialize) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    let digest = Sha256::digest(json.as_bytes());
    let mut hex = String::with_capacity(16);
    for byte in digest.iter().take(8) {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

/// Training summary stored alongside the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub epochs: usize,
    pub final_train_loss: Option<f64>,
    pub final_val_loss: Option<f64>,
    pub provenance: Provenance,
}

/// Versioned, self-describing parameter document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: String,
    pub config: ModelConfig,
    pub manifest: ModalityManifest,
    pub params: Vec<CheckpointTensor>,
    pub meta: TrainMeta,
}

impl Checkpoint {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json_str(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::Load(format!("malformed checkpoint: {e}")))
    }
}
