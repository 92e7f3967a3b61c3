use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
}

/// Architecture of a dense rectifier network.
///
/// `depth` counts hidden layers; a depth-0 spec is a plain linear map from
/// features to logits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub depth: usize,
    pub widths: Vec<usize>,
    pub input_dim: usize,
    pub num_classes: usize,
    #[serde(default)]
    pub activation: Activation,
    pub init_seed: u64,
}

impl ModelSpec {
    pub fn uniform(depth: usize, width: usize, input_dim: usize, num_classes: usize, init_seed: u64) -> Self {
        ModelSpec {
            depth,
            widths: vec![width; depth],
            input_dim,
            num_classes,
            activation: Activation::Relu,
            init_seed,
        }
    }

    pub fn with_init_seed(&self, init_seed: u64) -> Self {
        ModelSpec { init_seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() != self.depth {
            return Err(Error::config(format!(
                "model spec: widths has {} entries but depth is {}",
                self.widths.len(),
                self.depth
            )));
        }
        if self.input_dim == 0 || self.num_classes == 0 || self.widths.iter().any(|&w| w == 0) {
            return Err(Error::config("model spec: all dimensions must be >= 1"));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` for every layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.depth + 1);
        let mut prev = self.input_dim;
        for &w in &self.widths {
            dims.push((prev, w));
            prev = w;
        }
        dims.push((prev, self.num_classes));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// One affine layer. Weights are stored `fan_in x fan_out` so a batch maps as `x.dot(w) + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense { w: Array2::zeros((fan_in, fan_out)), b: Array1::zeros(fan_out) }
    }
}

/// All weight and bias arrays of a network, input layer first.
///
/// Also used to hold gradients, which share the parameter layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub layers: Vec<Dense>,
}

impl Params {
    pub fn zeros(spec: &ModelSpec) -> Self {
        Params { layers: spec.layer_dims().into_iter().map(|(i, o)| Dense::zeros(i, o)).collect() }
    }

    /// Fan-in scaled uniform initialisation: weights `U(-sqrt(6/fan_in), sqrt(6/fan_in))`,
    /// biases `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = seed::rng(spec.init_seed);
        let layers = spec
            .layer_dims()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let bound = (6.0 / fan_in as f64).sqrt();
                let w = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-bound..bound));
                let bb = 1.0 / (fan_in as f64).sqrt();
                let b = Array1::from_shape_simple_fn(fan_out, || rng.random_range(-bb..bb));
                Dense { w, b }
            })
            .collect();
        Ok(Params { layers })
    }

    pub fn check_shape(&self, spec: &ModelSpec) -> Result<()> {
        let dims = spec.layer_dims();
        let ok = dims.len() == self.layers.len()
            && dims
                .iter()
                .zip(&self.layers)
                .all(|(&(i, o), l)| l.w.dim() == (i, o) && l.b.len() == o);
        if ok {
            Ok(())
        } else {
            Err(Error::config("parameter shapes do not match model spec"))
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Squared L2 norm over weights only; biases are not decayed.
    pub fn weight_sq_norm(&self) -> f64 {
        self.layers.iter().map(|l| l.w.iter().map(|v| v * v).sum::<f64>()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().all(|v| v.is_finite()) && l.b.iter().all(|v| v.is_finite()))
    }
}

/// Result of a forward pass: logits plus the post-activation output of every hidden layer.
#[derive(Clone, Debug)]
pub struct Forward {
    pub logits: Array2<f64>,
    pub hidden: Vec<Array2<f64>>,
}

pub fn forward(params: &Params, spec: &ModelSpec, batch: ArrayView2<f64>) -> Result<Forward> {
    if batch.ncols() != spec.input_dim {
        return Err(Error::config(format!(
            "batch has {} features, model expects {}",
            batch.ncols(),
            spec.input_dim
        )));
    }
    params.check_shape(spec)?;
    Ok(forward_unchecked(params, batch))
}

pub(crate) fn forward_unchecked(params: &Params, batch: ArrayView2<f64>) -> Forward {
    let n_layers = params.layers.len();
    let mut hidden = Vec::with_capacity(n_layers - 1);
    let mut cur: Option<Array2<f64>> = None;
    for (li, layer) in params.layers.iter().enumerate() {
        let mut z = match &cur {
            Some(h) => h.dot(&layer.w),
            None => batch.dot(&layer.w),
        };
        z += &layer.b;
        if li + 1 < n_layers {
            z.mapv_inplace(|v| v.max(0.0));
            hidden.push(z.clone());
            cur = Some(z);
        } else {
            return Forward { logits: z, hidden };
        }
    }
    unreachable!("network always has an output layer")
}

/// Row-wise softmax at temperature `t`.
pub fn softmax_rows(logits: ArrayView2<f64>, t: f64) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = ((*v - m) / t).exp();
            sum += *v;
        }
        row /= sum;
    }
    out
}

/// Index of the largest entry; ties go to the smallest index.
pub fn argmax(row: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in row.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

pub fn predict_rows(logits: ArrayView2<f64>) -> Vec<usize> {
    logits.axis_iter(Axis(0)).map(|r| argmax(r.iter().copied())).collect()
}
