//! Feedforward ReLU networks, input boxes and verification tasks.
//!
//! A network is an ordered list of dense affine layers, each followed by an
//! activation (`relu` or `linear`). The last layer must be linear: the
//! specification matrix is applied to the raw logits.
//!
//! Layer indices used throughout the crate are 1-based: layer `i` produces
//! the pre-activation vector `z^(i)`, and layer 0 denotes the input.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while building or loading networks and tasks.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{file}: {source}")]
    Io {
        file: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: malformed JSON: {source}")]
    Parse {
        file: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{file}: {field}: {message}")]
    Invalid {
        file: PathBuf,
        field: String,
        message: String,
    },
    #[error("input dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("non-finite input value at index {index}")]
    NonFiniteInput { index: usize },
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Linear => "linear",
        }
    }
}

/// One dense layer: `z = W x + b`, followed by `activation`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// Row-major weight matrix, `out_dim` rows of `in_dim` columns.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn out_dim(&self) -> usize {
        self.bias.len()
    }

    pub fn in_dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    /// `W x + b`.
    pub fn affine(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| dot(row, x) + b)
            .collect()
    }

    /// `coeffs^T W`, the pull-back of a row vector through the weights.
    pub fn pull_back(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.in_dim()];
        for (row, &c) in self.weights.iter().zip(coeffs) {
            if c == 0.0 {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(row) {
                *o += c * w;
            }
        }
        out
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A validated feedforward network.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_dim: usize,
    layers: Vec<Layer>,
}

impl Network {
    /// Builds a network, checking dimension chaining, finiteness and the
    /// linear-output rule.
    pub fn new(input_dim: usize, layers: Vec<Layer>) -> std::result::Result<Self, String> {
        validate_layers(input_dim, &layers).map_err(|(field, msg)| format!("{field}: {msg}"))?;
        Ok(Self { input_dim, layers })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::out_dim)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Layer `i` (1-based).
    pub fn layer(&self, i: usize) -> &Layer {
        &self.layers[i - 1]
    }

    /// Number of affine layers `L`.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Number of hidden layers, `L - 1`.
    pub fn hidden_depth(&self) -> usize {
        self.layers.len() - 1
    }

    /// Width of every hidden layer, in order.
    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.hidden_depth()]
            .iter()
            .map(Layer::out_dim)
            .collect()
    }

    /// Whether hidden layer `i` (1-based) applies a ReLU.
    pub fn is_relu(&self, i: usize) -> bool {
        self.layers[i - 1].activation == Activation::Relu
    }

    /// Concrete evaluation. Returns the logits and every pre-activation
    /// vector `z^(1) .. z^(L)` (the last entry equals the logits).
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        if x.len() != self.input_dim {
            return Err(ModelError::DimensionMismatch {
                expected: self.input_dim,
                actual: x.len(),
            });
        }
        if let Some(index) = x.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteInput { index });
        }
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let mut preacts = Vec::with_capacity(self.layers.len());
        let mut post = x.to_vec();
        for layer in &self.layers {
            let z = layer.affine(&post);
            post = z.iter().map(|&v| layer.activation.apply(v)).collect();
            preacts.push(z);
        }
        (post, preacts)
    }

    /// `C · f(x)`.
    pub fn margin(&self, spec: &[Vec<f64>], x: &[f64]) -> Result<Vec<f64>> {
        let (logits, _) = self.forward(x)?;
        Ok(apply_spec(spec, &logits))
    }

    pub(crate) fn margin_unchecked(&self, spec: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        let (logits, _) = self.forward_unchecked(x);
        apply_spec(spec, &logits)
    }
}

pub(crate) fn apply_spec(spec: &[Vec<f64>], logits: &[f64]) -> Vec<f64> {
    spec.iter().map(|row| dot(row, logits)).collect()
}

fn validate_layers(
    input_dim: usize,
    layers: &[Layer],
) -> std::result::Result<(), (String, String)> {
    if input_dim == 0 {
        return Err(("input_dim".into(), "must be positive".into()));
    }
    if layers.is_empty() {
        return Err(("layers".into(), "at least one layer is required".into()));
    }
    let mut prev = input_dim;
    for (i, layer) in layers.iter().enumerate() {
        let out = layer.bias.len();
        if out == 0 {
            return Err((format!("layers[{i}].bias"), "layer has no neurons".into()));
        }
        if layer.weights.len() != out {
            return Err((
                format!("layers[{i}].weights"),
                format!("{} rows but bias has {out} entries", layer.weights.len()),
            ));
        }
        for (r, row) in layer.weights.iter().enumerate() {
            if row.len() != prev {
                return Err((
                    format!("layers[{i}].weights[{r}]"),
                    format!("{} columns, expected {prev}", row.len()),
                ));
            }
            if let Some(c) = row.iter().position(|v| !v.is_finite()) {
                return Err((format!("layers[{i}].weights[{r}][{c}]"), "not finite".into()));
            }
        }
        if let Some(c) = layer.bias.iter().position(|v| !v.is_finite()) {
            return Err((format!("layers[{i}].bias[{c}]"), "not finite".into()));
        }
        prev = out;
    }
    let last = layers.len() - 1;
    if layers[last].activation != Activation::Linear {
        return Err((
            format!("layers[{last}].activation"),
            "output layer must be linear".into(),
        ));
    }
    Ok(())
}

/// Axis-aligned input box `lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl InputBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        debug_assert_eq!(lower.len(), upper.len());
        Self { lower, upper }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).collect()
    }

    pub fn max_width(&self) -> f64 {
        self.widths().into_iter().fold(0.0, f64::max)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| l <= v && v <= u)
    }
}

/// Default wall-clock budget when a spec file does not carry one.
pub const DEFAULT_TIMEOUT_SECONDS: f64 = 300.0;
/// Default branch budget when a spec file does not carry one.
pub const DEFAULT_MAX_BRANCHES: u64 = 100_000;

/// A network, an input box, a specification matrix and a search budget.
///
/// The property holds iff every row of `C · f(x)` is strictly positive for
/// every `x` in the box.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationTask {
    pub network: Network,
    pub input_box: InputBox,
    pub spec: Vec<Vec<f64>>,
    pub timeout_seconds: f64,
    pub max_branches: u64,
}

impl VerificationTask {
    pub fn new(network: Network, input_box: InputBox, spec: Vec<Vec<f64>>) -> std::result::Result<Self, String> {
        let file = PathBuf::from("<memory>");
        let task = Self {
            network,
            input_box,
            spec,
            timeout_seconds: DEFAULT_TIMEOUT_SECONDS,
            max_branches: DEFAULT_MAX_BRANCHES,
        };
        task.validate(&file).map_err(|e| e.to_string())?;
        Ok(task)
    }

    pub fn with_budget(mut self, timeout_seconds: f64, max_branches: u64) -> Self {
        self.timeout_seconds = timeout_seconds;
        self.max_branches = max_branches;
        self
    }

    /// Concrete margin vector at `x`.
    pub fn margin(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.network.margin(&self.spec, x)
    }

    fn validate(&self, spec_file: &Path) -> Result<()> {
        let invalid = |field: String, message: String| ModelError::Invalid {
            file: spec_file.to_path_buf(),
            field,
            message,
        };
        let n0 = self.network.input_dim();
        if self.input_box.lower.len() != n0 {
            return Err(invalid(
                "input_lower".into(),
                format!("{} entries, network input_dim is {n0}", self.input_box.lower.len()),
            ));
        }
        if self.input_box.upper.len() != n0 {
            return Err(invalid(
                "input_upper".into(),
                format!("{} entries, network input_dim is {n0}", self.input_box.upper.len()),
            ));
        }
        for (k, (l, u)) in self.input_box.lower.iter().zip(&self.input_box.upper).enumerate() {
            if !l.is_finite() {
                return Err(invalid(format!("input_lower[{k}]"), "not finite".into()));
            }
            if !u.is_finite() {
                return Err(invalid(format!("input_upper[{k}]"), "not finite".into()));
            }
            if l > u {
                return Err(invalid(
                    format!("input_lower[{k}]"),
                    format!("lower bound {l} exceeds upper bound {u}"),
                ));
            }
        }
        if self.spec.is_empty() {
            return Err(invalid("C".into(), "specification needs at least one row".into()));
        }
        let n_out = self.network.output_dim();
        for (r, row) in self.spec.iter().enumerate() {
            if row.len() != n_out {
                return Err(invalid(
                    format!("C[{r}]"),
                    format!("{} columns, network output_dim is {n_out}", row.len()),
                ));
            }
            if let Some(c) = row.iter().position(|v| !v.is_finite()) {
                return Err(invalid(format!("C[{r}][{c}]"), "not finite".into()));
            }
        }
        if self.timeout_seconds.is_nan() || self.timeout_seconds <= 0.0 {
            return Err(invalid("timeout_seconds".into(), "must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    input_dim: usize,
    layers: Vec<LayerFile>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerFile {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    activation: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct SpecFile {
    input_lower: Vec<f64>,
    input_upper: Vec<f64>,
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    timeout_seconds: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_branches: Option<u64>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
        file: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ModelError::Parse {
        file: path.to_path_buf(),
        source,
    })
}

/// Parses and validates a model file.
pub fn load_network(path: &Path) -> Result<Network> {
    let raw: ModelFile = read_json(path)?;
    let mut layers = Vec::with_capacity(raw.layers.len());
    for (i, l) in raw.layers.into_iter().enumerate() {
        let activation = match l.activation.as_str() {
            "relu" => Activation::Relu,
            "linear" => Activation::Linear,
            other => {
                return Err(ModelError::Invalid {
                    file: path.to_path_buf(),
                    field: format!("layers[{i}].activation"),
                    message: format!("unsupported activation '{other}' (expected relu or linear)"),
                })
            }
        };
        layers.push(Layer {
            weights: l.weights,
            bias: l.bias,
            activation,
        });
    }
    validate_layers(raw.input_dim, &layers).map_err(|(field, message)| ModelError::Invalid {
        file: path.to_path_buf(),
        field,
        message,
    })?;
    Ok(Network {
        input_dim: raw.input_dim,
        layers,
    })
}

/// Loads a model file and a spec file into a validated task.
pub fn load_task(model_path: &Path, spec_path: &Path) -> Result<VerificationTask> {
    let network = load_network(model_path)?;
    let raw: SpecFile = read_json(spec_path)?;
    let task = VerificationTask {
        network,
        input_box: InputBox::new(raw.input_lower, raw.input_upper),
        spec: raw.c,
        timeout_seconds: raw.timeout_seconds.unwrap_or(DEFAULT_TIMEOUT_SECONDS),
        max_branches: raw.max_branches.unwrap_or(DEFAULT_MAX_BRANCHES),
    };
    task.validate(spec_path)?;
    Ok(task)
}

pub fn network_to_json(network: &Network) -> String {
    let file = ModelFile {
        input_dim: network.input_dim,
        layers: network
            .layers
            .iter()
            .map(|l| LayerFile {
                weights: l.weights.clone(),
                bias: l.bias.clone(),
                activation: l.activation.as_str().to_string(),
            })
            .collect(),
    };
    serde_json::to_string(&file).expect("model serialization cannot fail")
}

/// Spec JSON for a task. Budget fields are written only when they differ
/// from the defaults.
pub fn spec_to_json(task: &VerificationTask) -> String {
    let file = SpecFile {
        input_lower: task.input_box.lower.clone(),
        input_upper: task.input_box.upper.clone(),
        c: task.spec.clone(),
        timeout_seconds: (task.timeout_seconds != DEFAULT_TIMEOUT_SECONDS).then_some(task.timeout_seconds),
        max_branches: (task.max_branches != DEFAULT_MAX_BRANCHES).then_some(task.max_branches),
    };
    serde_json::to_string(&file).expect("spec serialization cannot fail")
}

pub fn save_task(task: &VerificationTask, model_path: &Path, spec_path: &Path) -> Result<()> {
    let write = |path: &Path, text: String| {
        fs::write(path, text).map_err(|source| ModelError::Io {
            file: path.to_path_buf(),
            source,
        })
    };
    write(model_path, network_to_json(&task.network))?;
    write(spec_path, spec_to_json(task))
}
