//! Score trajectories across the model-size ladder, bucket histograms, correlations, and
//! the Gaussian-corruption robustness probe.

use std::collections::BTreeMap;
use std::io::Write;

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memscore::MemRecord;
use crate::nn::TrainedModel;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Constant,
    Increasing,
    Decreasing,
    CapShaped,
    Other,
}

impl Category {
    pub const ALL: [Category; 5] =
        [Category::Constant, Category::Increasing, Category::Decreasing, Category::CapShaped, Category::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Constant => "constant",
            Category::Increasing => "increasing",
            Category::Decreasing => "decreasing",
            Category::CapShaped => "cap_shaped",
            Category::Other => "other",
        }
    }
}

/// Sign of each consecutive change, with changes of magnitude at most `alpha` dropped.
pub fn quantise(scores: &[f64], alpha: f64) -> Vec<i8> {
    scores
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| d.abs() > alpha)
        .map(|d| if d > 0.0 { 1 } else { -1 })
        .collect()
}

/// Category of a nonzero sign string (zeros already removed).
pub fn classify_signs(signs: &[i8]) -> Category {
    let Some(&first) = signs.first() else {
        return Category::Constant;
    };
    let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
    match (first, changes) {
        (1, 0) => Category::Increasing,
        (-1, 0) => Category::Decreasing,
        (1, 1) => Category::CapShaped,
        _ => Category::Other,
    }
}

pub fn classify_trajectory(scores: &[f64], alpha: f64) -> Category {
    classify_signs(&quantise(scores, alpha))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub example_id: usize,
    pub scores: Vec<f64>,
    pub category: Category,
    pub alpha: f64,
}

/// Trajectories of every example valid at every ladder entry. `ladder[l][i]` is the
/// record of example `i` at entry `l`.
pub fn trajectories(ladder: &[Vec<MemRecord>], alpha: f64) -> Result<Vec<TrajectoryRecord>> {
    if ladder.len() < 2 {
        return Err(Error::config("a trajectory needs at least two ladder entries"));
    }
    if !(alpha >= 0.0) {
        return Err(Error::config("alpha must be nonnegative"));
    }
    let n = ladder[0].len();
    if ladder.iter().any(|recs| recs.len() != n) {
        return Err(Error::config("ladder entries cover different example counts"));
    }
    Ok((0..n)
        .filter(|&i| ladder.iter().all(|recs| recs[i].valid))
        .map(|i| {
            let scores: Vec<f64> = ladder.iter().map(|recs| recs[i].mem).collect();
            TrajectoryRecord { example_id: ladder[0][i].example_id, category: classify_trajectory(&scores, alpha), scores, alpha }
        })
        .collect())
}

pub fn write_trajectories_csv(mut w: impl Write, records: &[TrajectoryRecord]) -> Result<()> {
    let len = records.first().map_or(0, |r| r.scores.len());
    let cols: Vec<String> = (0..len).map(|l| format!("s_{l}")).collect();
    writeln!(w, "example_id,{},category", cols.join(","))?;
    for r in records {
        let s: Vec<String> = r.scores.iter().map(|x| x.to_string()).collect();
        writeln!(w, "{},{},{}", r.example_id, s.join(","), r.category.as_str())?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Census {
    pub total: usize,
    pub counts: BTreeMap<Category, usize>,
    pub fractions: BTreeMap<Category, f64>,
}

impl Census {
    pub fn from_categories(cats: impl IntoIterator<Item = Category>) -> Result<Census> {
        let mut counts: BTreeMap<Category, usize> = Category::ALL.iter().map(|&c| (c, 0)).collect();
        let mut total = 0;
        for c in cats {
            *counts.get_mut(&c).expect("all categories present") += 1;
            total += 1;
        }
        if total == 0 {
            return Err(Error::NoValidRecords);
        }
        let fractions = counts.iter().map(|(&c, &k)| (c, k as f64 / total as f64)).collect();
        Ok(Census { total, counts, fractions })
    }

    pub fn fraction(&self, c: Category) -> f64 {
        self.fractions[&c]
    }

    /// The category with the largest count; ties go to the earlier category.
    pub fn plurality(&self) -> Category {
        let mut best = Category::Constant;
        for c in Category::ALL {
            if self.counts[&c] > self.counts[&best] {
                best = c;
            }
        }
        best
    }
}

pub fn category_census(records: &[TrajectoryRecord]) -> Result<Census> {
    Census::from_categories(records.iter().map(|r| r.category))
}

pub const BUCKETS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramReport {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
    pub total: usize,
    /// Scores outside `[lo, hi]` that were counted in an end bucket.
    pub clamped: usize,
    pub extreme_mass: f64,
}

/// Bucket index of `x` among `buckets` equal buckets over `[lo, hi]`; the last bucket is
/// closed on the right and out-of-range values land in the end buckets.
pub fn bucket_of(x: f64, lo: f64, hi: f64, buckets: usize) -> usize {
    let t = (x - lo) / (hi - lo) * buckets as f64;
    if !(t >= 0.0) {
        0
    } else {
        (t.floor() as usize).min(buckets - 1)
    }
}

/// Ten-bucket histogram of the finite values in `scores`.
pub fn histogram(scores: &[f64], lo: f64, hi: f64) -> Result<HistogramReport> {
    if !(lo < hi) {
        return Err(Error::config("histogram range needs lo < hi"));
    }
    let mut counts = vec![0; BUCKETS];
    let mut clamped = 0;
    for &x in scores.iter().filter(|x| x.is_finite()) {
        if x < lo || x > hi {
            clamped += 1;
        }
        counts[bucket_of(x, lo, hi, BUCKETS)] += 1;
    }
    let total: usize = counts.iter().sum();
    let extreme_mass = if total == 0 { 0.0 } else { (counts[0] + counts[BUCKETS - 1]) as f64 / total as f64 };
    Ok(HistogramReport { lo, hi, counts, total, clamped, extreme_mass })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub pearson: f64,
    pub spearman: f64,
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance"));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// One-based ranks with ties given their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut ranks = vec![0.0; xs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && xs[order[end]] == xs[order[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

pub fn correlate(a: &[f64], b: &[f64]) -> Result<Correlation> {
    if a.len() != b.len() {
        return Err(Error::config("correlated sequences differ in length"));
    }
    if a.len() < 3 {
        return Err(Error::UndefinedCorrelation("fewer than three points"));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::UndefinedCorrelation("non-finite value"));
    }
    Ok(Correlation { pearson: pearson(a, b)?, spearman: pearson(&average_ranks(a), &average_ranks(b))? })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessPoint {
    pub sigma: f64,
    pub accuracy: f64,
}

/// Fraction of Gaussian perturbations of `x` still predicted as `label`, per `sigma`.
///
/// The noise for the `j`-th sigma depends only on `seed` and `j`, so two models probed
/// with the same seed see the same perturbation directions.
pub fn robustness_probe(
    model: &TrainedModel,
    x: &[f32],
    label: usize,
    sigmas: &[f64],
    n_per_sigma: usize,
    seed: u64,
) -> Result<Vec<RobustnessPoint>> {
    if n_per_sigma == 0 {
        return Err(Error::config("n_per_sigma must be >= 1"));
    }
    if let Some(s) = sigmas.iter().find(|s| !(**s >= 0.0)) {
        return Err(Error::config(format!("sigma {s} must be nonnegative")));
    }
    let dim = x.len();
    sigmas
        .iter()
        .enumerate()
        .map(|(j, &sigma)| {
            let mut rng = seed::rng(seed::mix(seed, &["robustness", &j.to_string()]));
            let batch = Array2::from_shape_fn((n_per_sigma, dim), |(_, d)| {
                let e: f64 = StandardNormal.sample(&mut rng);
                x[d] as f64 + sigma * e
            });
            let preds = model.predict(batch.view())?;
            let hits = preds.iter().filter(|&&p| p == label).count();
            Ok(RobustnessPoint { sigma, accuracy: hits as f64 / n_per_sigma as f64 })
        })
        .collect()
}
