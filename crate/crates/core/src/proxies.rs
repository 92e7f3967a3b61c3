//! Cheap stand-ins for memorisation: the C-score proxy (mean true-label probability over
//! training) and prediction depth from linear probes on hidden activations.

use std::io::Write;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{DataView, LabeledDataset};
use crate::error::{Error, Result};
use crate::nn::{forward, predict_rows, train, LossSpec, ModelSpec, OptimizerConfig, Schedule, TrainedModel};
use crate::seed;

/// Mean of one example's per-epoch true-label probabilities.
pub fn cprox(trace: &[f64]) -> Result<f64> {
    if trace.is_empty() {
        return Err(Error::EmptyDataset("cprox of an empty trace".into()));
    }
    Ok(trace.iter().sum::<f64>() / trace.len() as f64)
}

/// Averages per-run cprox over the runs that trained on each example.
#[derive(Clone, Debug)]
pub struct CproxAccumulator {
    sum: Vec<f64>,
    runs: Vec<usize>,
}

impl CproxAccumulator {
    pub fn new(n: usize) -> Self {
        CproxAccumulator { sum: vec![0.0; n], runs: vec![0; n] }
    }

    /// Add one run: `trace[t][id]` over the whole dataset, `members` the ids it trained on.
    pub fn add_run(&mut self, trace: &[Vec<f32>], members: &[usize]) -> Result<()> {
        if trace.is_empty() {
            return Err(Error::EmptyDataset("run has an empty trace".into()));
        }
        if trace.iter().any(|row| row.len() != self.sum.len()) {
            return Err(Error::config("trace width does not match the dataset"));
        }
        for &id in members {
            let per_epoch: Vec<f64> = trace.iter().map(|row| row[id] as f64).collect();
            self.sum[id] += cprox(&per_epoch)?;
            self.runs[id] += 1;
        }
        Ok(())
    }

    /// Per-example mean; NaN for examples no run trained on.
    pub fn finish(&self) -> Vec<f64> {
        self.sum.iter().zip(&self.runs).map(|(&s, &r)| if r == 0 { f64::NAN } else { s / r as f64 }).collect()
    }
}

/// A multinomial linear classifier over standardised activations of one hidden layer.
#[derive(Clone, Debug)]
pub struct LinearProbe {
    mean: Vec<f64>,
    scale: Vec<f64>,
    classifier: TrainedModel,
}

fn standardise(acts: ArrayView2<f64>, mean: &[f64], scale: &[f64]) -> Array2<f64> {
    let mut z = acts.to_owned();
    for mut row in z.axis_iter_mut(Axis(0)) {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - mean[j]) * scale[j];
        }
    }
    z
}

impl LinearProbe {
    pub fn predict(&self, acts: ArrayView2<f64>) -> Result<Vec<usize>> {
        self.classifier.predict(standardise(acts, &self.mean, &self.scale).view())
    }
}

/// Probes for every hidden layer; the output point is the network's own classifier.
#[derive(Clone, Debug)]
pub struct ProbeSet {
    pub hidden: Vec<LinearProbe>,
    /// The probe data held a single class, so every probe is constant.
    pub degenerate: bool,
}

impl ProbeSet {
    /// Probe points including the output.
    pub fn num_points(&self) -> usize {
        self.hidden.len() + 1
    }
}

/// Probe training: 50 epochs of Nesterov SGD at peak rate 0.1, no weight decay.
pub fn probe_optimizer() -> OptimizerConfig {
    OptimizerConfig {
        peak_lr: 0.1,
        warmup_epochs: 5,
        schedule: Schedule::Cosine,
        momentum: 0.9,
        nesterov: true,
        weight_decay: 0.0,
        batch_size: 32,
        epochs: 50,
        trace_every: 50,
    }
}

pub fn train_probes(model: &TrainedModel, probe_data: DataView<'_>, seed: u64) -> Result<ProbeSet> {
    if probe_data.is_empty() {
        return Err(Error::EmptyDataset("probe data has no examples".into()));
    }
    let ds = probe_data.data;
    let x = ds.features_f64().select(Axis(0), probe_data.indices);
    let labels: Vec<u32> = probe_data.indices.iter().map(|&i| ds.labels()[i]).collect();
    let degenerate = labels.iter().all(|&l| l == labels[0]);
    let acts = forward(&model.params, &model.spec, x.view())?.hidden;
    let opt = probe_optimizer();
    let hidden = acts
        .iter()
        .enumerate()
        .map(|(l, h)| {
            let n = h.nrows() as f64;
            let mean: Vec<f64> = h.axis_iter(Axis(1)).map(|c| c.sum() / n).collect();
            let scale: Vec<f64> = h
                .axis_iter(Axis(1))
                .zip(&mean)
                .map(|(c, m)| {
                    let sd = (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
                    if sd > 1e-12 { 1.0 / sd } else { 0.0 }
                })
                .collect();
            let z = standardise(h.view(), &mean, &scale);
            let features: Vec<f32> = z.iter().map(|&v| v as f32).collect();
            let probe_ds = LabeledDataset::new(features, labels.clone(), ds.num_classes(), h.ncols())?;
            let layer = l.to_string();
            let spec = ModelSpec::uniform(0, 0, h.ncols(), ds.num_classes(), seed::mix(seed, &["probe", &layer, "init"]));
            let ids = probe_ds.all_ids();
            let mut classifier =
                train(&spec, &opt, &LossSpec::one_hot(), probe_ds.view(&ids), None, seed::mix(seed, &["probe", &layer]))?;
            classifier.trace.clear();
            Ok(LinearProbe { mean, scale, classifier })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProbeSet { hidden, degenerate })
}

/// Smallest `d` such that every probe point from `d` on predicts the final prediction.
pub fn depth_from_predictions(preds: &[usize]) -> usize {
    let Some(&last) = preds.last() else {
        return 0;
    };
    let agreeing = preds.iter().rev().take_while(|&&p| p == last).count();
    preds.len() - agreeing
}

/// Per-probe-point predictions for every row of `x`: `out[i][point]`.
pub fn probe_predictions(probes: &ProbeSet, model: &TrainedModel, x: ArrayView2<f64>) -> Result<Vec<Vec<usize>>> {
    let fwd = forward(&model.params, &model.spec, x)?;
    if fwd.hidden.len() != probes.hidden.len() {
        return Err(Error::config("probe set was built for a different architecture"));
    }
    let mut per_point = Vec::with_capacity(probes.num_points());
    for (probe, h) in probes.hidden.iter().zip(&fwd.hidden) {
        per_point.push(probe.predict(h.view())?);
    }
    per_point.push(predict_rows(fwd.logits.view()));
    Ok((0..x.nrows()).map(|i| per_point.iter().map(|p| p[i]).collect()).collect())
}

pub fn prediction_depth(probes: &ProbeSet, model: &TrainedModel, example: &[f32]) -> Result<usize> {
    let x = Array2::from_shape_fn((1, example.len()), |(_, j)| example[j] as f64);
    Ok(depth_from_predictions(&probe_predictions(probes, model, x.view())?[0]))
}

pub fn prediction_depths(probes: &ProbeSet, model: &TrainedModel, data: &LabeledDataset) -> Result<Vec<usize>> {
    let preds = probe_predictions(probes, model, data.features_f64().view())?;
    Ok(preds.iter().map(|p| depth_from_predictions(p)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxyRecord {
    pub example_id: usize,
    /// Absent when no run trained on the example.
    pub cprox: Option<f64>,
    /// Mean prediction depth over the probed models; absent when none were probed.
    pub pred_depth: Option<f64>,
}

pub fn write_proxy_csv(mut w: impl Write, records: &[ProxyRecord]) -> Result<()> {
    writeln!(w, "example_id,cprox,pred_depth")?;
    for r in records {
        let field = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{}", r.example_id, field(r.cprox), field(r.pred_depth))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_toy2d, Toy2DParams};
    use proptest::prelude::*;

    fn toy() -> LabeledDataset {
        generate_toy2d(&Toy2DParams { n_inner: 40, n_outer: 40, n_outliers: 2, ..Default::default() }).unwrap()
    }

    fn trained(depth: usize) -> (LabeledDataset, TrainedModel) {
        let ds = toy();
        let ids = ds.all_ids();
        let opt = OptimizerConfig { epochs: 30, weight_decay: 0.0, ..Default::default() };
        let m = train(&ModelSpec::uniform(depth, 16, 2, 2, 1), &opt, &LossSpec::one_hot(), ds.view(&ids), None, 2).unwrap();
        (ds, m)
    }

    #[test]
    fn cprox_examples() {
        assert_eq!(cprox(&[1.0; 5]).unwrap(), 1.0);
        assert_eq!(cprox(&[0.0, 0.5, 1.0]).unwrap(), 0.5);
        assert!(cprox(&[]).is_err());
    }

    #[test]
    fn accumulator_averages_over_member_runs() {
        let mut acc = CproxAccumulator::new(3);
        acc.add_run(&[vec![0.2, 0.4, 0.6], vec![0.4, 0.6, 0.8]], &[0, 1]).unwrap();
        acc.add_run(&[vec![1.0, 0.0, 0.0]], &[0]).unwrap();
        let c = acc.finish();
        assert!((c[0] - 0.65).abs() < 1e-6 && (c[1] - 0.5).abs() < 1e-6 && c[2].is_nan());
        assert!(acc.add_run(&[vec![0.0; 2]], &[0]).is_err());
    }

    #[test]
    fn depth_examples() {
        assert_eq!(depth_from_predictions(&[1, 1, 1, 1]), 0);
        assert_eq!(depth_from_predictions(&[0, 1, 1, 1]), 1);
        assert_eq!(depth_from_predictions(&[1, 0, 1, 1]), 2);
        assert_eq!(depth_from_predictions(&[1, 1, 1, 0]), 3);
        assert_eq!(depth_from_predictions(&[2]), 0);
    }

    #[test]
    fn output_point_is_the_model_itself() {
        let (ds, m) = trained(2);
        let ids = ds.all_ids();
        let probes = train_probes(&m, ds.view(&ids), 9).unwrap();
        assert_eq!(probes.num_points(), 3);
        assert!(!probes.degenerate);
        let preds = probe_predictions(&probes, &m, ds.features_f64().view()).unwrap();
        let own = m.predict(ds.features_f64().view()).unwrap();
        assert!(preds.iter().zip(&own).all(|(p, &o)| p[2] == o));
        let depths = prediction_depths(&probes, &m, &ds).unwrap();
        assert!(depths.iter().all(|&d| d < probes.num_points()));
        assert_eq!(prediction_depth(&probes, &m, ds.features(5)).unwrap(), depths[5]);
    }

    #[test]
    fn probes_are_deterministic() {
        let (ds, m) = trained(1);
        let ids: Vec<usize> = (0..50).collect();
        let a = train_probes(&m, ds.view(&ids), 4).unwrap();
        let b = train_probes(&m, ds.view(&ids), 4).unwrap();
        assert_eq!(a.hidden[0].classifier.params, b.hidden[0].classifier.params);
    }

    #[test]
    fn depth_zero_model_has_one_probe_point() {
        let (ds, m) = trained(0);
        let ids = ds.all_ids();
        let probes = train_probes(&m, ds.view(&ids), 0).unwrap();
        assert_eq!(probes.num_points(), 1);
        assert!(prediction_depths(&probes, &m, &ds).unwrap().iter().all(|&d| d == 0));
    }

    #[test]
    fn single_class_probe_data_is_flagged() {
        let (ds, m) = trained(1);
        let class0: Vec<usize> = ds.all_ids().into_iter().filter(|&i| ds.label(i) == 0).collect();
        let probes = train_probes(&m, ds.view(&class0), 0).unwrap();
        assert!(probes.degenerate);
    }

    proptest! {
        #[test]
        fn cprox_ignores_epoch_order(mut t in proptest::collection::vec(0.0f64..=1.0, 1..40), rot in 0usize..40) {
            let a = cprox(&t).unwrap();
            let r = rot % t.len();
            t.rotate_left(r);
            t.reverse();
            prop_assert!((a - cprox(&t).unwrap()).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn agreeing_more_never_deepens(preds in proptest::collection::vec(0usize..3, 1..8), flip in 0usize..8) {
            let d = depth_from_predictions(&preds);
            let mut fixed = preds.clone();
            let i = flip % preds.len();
            fixed[i] = *preds.last().unwrap();
            prop_assert!(depth_from_predictions(&fixed) <= d);
        }
    }
}
