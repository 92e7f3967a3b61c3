use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;

use super::loss::{loss_and_grads_unchecked, LossKind, LossSpec};
use super::model::{forward_unchecked, predict_rows, softmax_rows, ModelSpec, Params};
use super::optim::{OptimizerConfig, Sgd};
use crate::data::{DataView, LabeledDataset};
use crate::error::{Error, Result};
use crate::seed;

/// A network after training, with its per-epoch true-label probability trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub params: Params,
    /// `trace[t][id]` is the probability of example `id`'s label at the `t`-th traced epoch,
    /// evaluated on the whole dataset the view was drawn from.
    pub trace: Vec<Vec<f32>>,
}

impl TrainedModel {
    /// Wrap parameters loaded from disk; the trace is left empty.
    pub fn from_params(spec: ModelSpec, params: Params) -> Result<Self> {
        spec.validate()?;
        params.check_shape(&spec)?;
        Ok(TrainedModel { spec, params, trace: Vec::new() })
    }

    pub fn logits(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(super::model::forward(&self.params, &self.spec, x)?.logits)
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        Ok(predict_rows(self.logits(x)?.view()))
    }

    /// Whether the argmax prediction matches the label, for every example in `data`.
    pub fn correctness(&self, data: &LabeledDataset) -> Result<Vec<bool>> {
        let preds = self.predict(data.features_f64().view())?;
        Ok(preds.iter().enumerate().map(|(i, &p)| p == data.label(i)).collect())
    }
}

fn true_label_probs(params: &Params, x: ArrayView2<f64>, labels: &[usize]) -> Vec<f32> {
    let logits = forward_unchecked(params, x).logits;
    let probs = softmax_rows(logits.view(), 1.0);
    labels.iter().enumerate().map(|(i, &y)| probs[[i, y]] as f32).collect()
}

/// Minibatch SGD on the examples of `data`.
///
/// Initial parameters come from `spec.init_seed`; minibatch order comes from `seed`.
/// `teacher` must be given exactly when `loss.kind` is `Distill`, and should have been
/// trained on the same view.
pub fn train(
    spec: &ModelSpec,
    opt: &OptimizerConfig,
    loss: &LossSpec,
    data: DataView<'_>,
    teacher: Option<&TrainedModel>,
    seed: u64,
) -> Result<TrainedModel> {
    spec.validate()?;
    opt.validate()?;
    loss.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset("training view has no examples".into()));
    }
    let ds = data.data;
    if ds.feature_dim() != spec.input_dim || ds.num_classes() != spec.num_classes {
        return Err(Error::config("dataset shape does not match model spec"));
    }
    if data.indices.iter().any(|&i| i >= ds.len()) {
        return Err(Error::config("view index out of range"));
    }
    match (loss.kind, teacher) {
        (LossKind::Distill, None) => return Err(Error::config("distillation requires a teacher")),
        (LossKind::OneHot, Some(_)) => return Err(Error::config("teacher given for one-hot loss")),
        _ => {}
    }

    let x_all = ds.features_f64();
    let labels: Vec<usize> = (0..ds.len()).map(|i| ds.label(i)).collect();
    let teacher_logits = match teacher {
        Some(t) => Some(t.logits(x_all.view())?),
        None => None,
    };

    let mut params = Params::init(spec)?;
    let mut sgd = Sgd::new(&params, opt.momentum, opt.nesterov);
    let mut rng = seed::rng(seed);
    let mut order = data.indices.to_vec();
    let mut trace = Vec::with_capacity(opt.epochs);
    let mut yb = Vec::with_capacity(opt.batch_size);

    for epoch in 0..opt.epochs {
        let lr = opt.lr_at(epoch);
        order.shuffle(&mut rng);
        for (step, chunk) in order.chunks(opt.batch_size).enumerate() {
            let xb = x_all.select(Axis(0), chunk);
            yb.clear();
            yb.extend(chunk.iter().map(|&i| labels[i]));
            let tb = teacher_logits.as_ref().map(|t| t.select(Axis(0), chunk));
            let (value, grads) = loss_and_grads_unchecked(
                &params,
                xb.view(),
                &yb,
                loss,
                tb.as_ref().map(|t| t.view()),
                opt.weight_decay,
            );
            if !value.is_finite() {
                return Err(Error::NonFinite { epoch, step, loss: value });
            }
            sgd.step(&mut params, &grads, lr);
        }
        if opt.traces_epoch(epoch) {
            trace.push(true_label_probs(&params, x_all.view(), &labels));
        }
    }
    Ok(TrainedModel { spec: spec.clone(), params, trace })
}
