use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::model::{forward_unchecked, softmax_rows, Dense, ModelSpec, Params};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    OneHot,
    Distill,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::OneHot => "one_hot",
            LossKind::Distill => "distill",
        }
    }
}

/// Training objective. `distill_weight` and `temperature` are ignored for `OneHot`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    pub distill_weight: f64,
    pub temperature: f64,
}

impl LossSpec {
    pub fn one_hot() -> Self {
        LossSpec { kind: LossKind::OneHot, distill_weight: 0.0, temperature: 1.0 }
    }

    pub fn distill(weight: f64, temperature: f64) -> Self {
        LossSpec { kind: LossKind::Distill, distill_weight: weight, temperature }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == LossKind::Distill {
            if !(0.0..=1.0).contains(&self.distill_weight) {
                return Err(Error::config("distill_weight must lie in [0, 1]"));
            }
            if !(self.temperature > 0.0 && self.temperature.is_finite()) {
                return Err(Error::config("temperature must be positive"));
            }
        }
        Ok(())
    }
}

/// Mean batch objective and its gradient with respect to every parameter.
///
/// One-hot: `CE(y) + wd/2 |W|^2`. Distill:
/// `(1-w) CE(y) + w T^2 KL(softmax(teacher/T) || softmax(student/T)) + wd/2 |W|^2`.
/// A non-finite loss is reported as [`Error::NonFinite`] with epoch and step set to zero;
/// the trainer fills in its own position.
pub fn loss_and_grads(
    params: &Params,
    spec: &ModelSpec,
    batch: ArrayView2<f64>,
    labels: &[usize],
    loss: &LossSpec,
    teacher_logits: Option<ArrayView2<f64>>,
    weight_decay: f64,
) -> Result<(f64, Params)> {
    if batch.ncols() != spec.input_dim {
        return Err(Error::config("batch feature count does not match input_dim"));
    }
    if batch.nrows() != labels.len() || labels.is_empty() {
        return Err(Error::config("labels must be nonempty and match the batch rows"));
    }
    if labels.iter().any(|&y| y >= spec.num_classes) {
        return Err(Error::config("label out of range"));
    }
    params.check_shape(spec)?;
    loss.validate()?;
    let teacher = match loss.kind {
        LossKind::OneHot => None,
        LossKind::Distill => {
            let t = teacher_logits
                .ok_or_else(|| Error::config("distillation loss requires teacher logits"))?;
            if t.dim() != (batch.nrows(), spec.num_classes) {
                return Err(Error::config("teacher logits shape does not match student logits"));
            }
            Some(t)
        }
    };
    let (value, grads) = loss_and_grads_unchecked(params, batch, labels, loss, teacher, weight_decay);
    if !value.is_finite() {
        return Err(Error::NonFinite { epoch: 0, step: 0, loss: value });
    }
    Ok((value, grads))
}

pub(crate) fn loss_and_grads_unchecked(
    params: &Params,
    batch: ArrayView2<f64>,
    labels: &[usize],
    loss: &LossSpec,
    teacher_logits: Option<ArrayView2<f64>>,
    weight_decay: f64,
) -> (f64, Params) {
    let n = batch.nrows() as f64;
    let fwd = forward_unchecked(params, batch);
    let (data_loss, mut delta) = output_delta(fwd.logits.view(), labels, loss, teacher_logits);
    delta /= n;

    let mut value = data_loss / n;
    if weight_decay > 0.0 {
        value += 0.5 * weight_decay * params.weight_sq_norm();
    }

    let n_layers = params.layers.len();
    let mut grads: Vec<Dense> = Vec::with_capacity(n_layers);
    for li in (0..n_layers).rev() {
        let input = if li == 0 { batch } else { fwd.hidden[li - 1].view() };
        let mut gw = input.t().dot(&delta);
        if weight_decay > 0.0 {
            gw.scaled_add(weight_decay, &params.layers[li].w);
        }
        let gb = delta.sum_axis(Axis(0));
        if li > 0 {
            let mut back = delta.dot(&params.layers[li].w.t());
            back.zip_mut_with(&fwd.hidden[li - 1], |d, &h| {
                if h <= 0.0 {
                    *d = 0.0;
                }
            });
            delta = back;
        }
        grads.push(Dense { w: gw, b: gb });
    }
    grads.reverse();
    (value, Params { layers: grads })
}

/// Summed (not averaged) data loss and `dL/dlogits` per row.
fn output_delta(
    logits: ArrayView2<f64>,
    labels: &[usize],
    loss: &LossSpec,
    teacher_logits: Option<ArrayView2<f64>>,
) -> (f64, Array2<f64>) {
    let probs = softmax_rows(logits, 1.0);
    let mut total = 0.0;
    let mut ce_delta = probs;
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        total += log_sum_exp(row.iter().copied(), 1.0) - row[y];
        ce_delta[[i, y]] -= 1.0;
    }
    let teacher = match (loss.kind, teacher_logits) {
        (LossKind::Distill, Some(t)) => t,
        _ => return (total, ce_delta),
    };

    let w = loss.distill_weight;
    let temp = loss.temperature;
    let ps = softmax_rows(logits, temp);
    let pt = softmax_rows(teacher, temp);
    let mut kl_total = 0.0;
    for i in 0..logits.nrows() {
        let lse_s = log_sum_exp(logits.row(i).iter().copied(), temp);
        let lse_t = log_sum_exp(teacher.row(i).iter().copied(), temp);
        for c in 0..logits.ncols() {
            let p = pt[[i, c]];
            if p > 0.0 {
                let log_pt = teacher[[i, c]] / temp - lse_t;
                let log_ps = logits[[i, c]] / temp - lse_s;
                kl_total += p * (log_pt - log_ps);
            }
        }
    }
    let mut delta = ce_delta * (1.0 - w);
    // d/dz of T^2 KL(pt || ps) is T (ps - pt).
    delta.scaled_add(w * temp, &(ps - &pt));
    ((1.0 - w) * total + w * temp * temp * kl_total, delta)
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone, t: f64) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, |a, b| a.max(b / t));
    m + xs.map(|x| (x / t - m).exp()).sum::<f64>().ln()
}
