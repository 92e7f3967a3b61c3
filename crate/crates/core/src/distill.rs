//! One-hot versus distilled memorisation: per-example deltas, the joint density of the
//! two scores, and which trajectory categories the reductions come from.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memscore::MemRecord;
use crate::trajectory::{bucket_of, Census, TrajectoryRecord};

pub const DEFAULT_TAU: f64 = 0.1;
pub const JOINT_BUCKETS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaRecord {
    pub example_id: usize,
    pub mem_onehot: f64,
    pub mem_distilled: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistillComparison {
    pub teacher: usize,
    pub student: usize,
    pub tau: f64,
    /// Examples valid under both losses.
    pub pairs: Vec<DeltaRecord>,
}

impl DistillComparison {
    /// Examples whose memorisation fell by at least `tau`.
    pub fn reduced(&self) -> Vec<usize> {
        self.pairs.iter().filter(|p| p.delta <= -self.tau).map(|p| p.example_id).collect()
    }

    pub fn increased(&self) -> Vec<usize> {
        self.pairs.iter().filter(|p| p.delta >= self.tau).map(|p| p.example_id).collect()
    }

    pub fn mean_delta(&self) -> Result<f64> {
        if self.pairs.is_empty() {
            return Err(Error::NoValidRecords);
        }
        Ok(self.pairs.iter().map(|p| p.delta).sum::<f64>() / self.pairs.len() as f64)
    }

    /// `JOINT_BUCKETS x JOINT_BUCKETS` counts over `[0, 1]^2`, rows by one-hot score and
    /// columns by distilled score; negative scores land in the first bucket.
    pub fn joint_histogram(&self) -> Vec<Vec<usize>> {
        let mut h = vec![vec![0; JOINT_BUCKETS]; JOINT_BUCKETS];
        for p in &self.pairs {
            h[bucket_of(p.mem_onehot, 0.0, 1.0, JOINT_BUCKETS)][bucket_of(p.mem_distilled, 0.0, 1.0, JOINT_BUCKETS)] += 1;
        }
        h
    }
}

fn check_paired(onehot: &[MemRecord], distilled: &[MemRecord]) -> Result<()> {
    if onehot.len() != distilled.len() {
        return Err(Error::config("record lists cover different example counts"));
    }
    if onehot.iter().zip(distilled).any(|(a, b)| a.example_id != b.example_id) {
        return Err(Error::config("record lists are not aligned by example id"));
    }
    Ok(())
}

fn valid_pairs<'a>(onehot: &'a [MemRecord], distilled: &'a [MemRecord]) -> impl Iterator<Item = (&'a MemRecord, &'a MemRecord)> {
    onehot.iter().zip(distilled).filter(|(a, b)| a.valid && b.valid)
}

/// Deltas `distilled - onehot` over examples valid in both lists. Both lists must come
/// from the same subsample plan.
pub fn compare(onehot: &[MemRecord], distilled: &[MemRecord], teacher: usize, student: usize, tau: f64) -> Result<DistillComparison> {
    check_paired(onehot, distilled)?;
    if !(tau >= 0.0) {
        return Err(Error::config("tau must be nonnegative"));
    }
    let pairs = valid_pairs(onehot, distilled)
        .map(|(a, b)| DeltaRecord { example_id: a.example_id, mem_onehot: a.mem, mem_distilled: b.mem, delta: b.mem - a.mem })
        .collect();
    Ok(DistillComparison { teacher, student, tau, pairs })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyDelta {
    pub in_acc: f64,
    pub out_acc: f64,
    pub mem: f64,
}

/// Differences of mean in-sample and out-of-sample accuracy, distilled minus one-hot,
/// over examples valid in both lists.
pub fn accuracy_decomposition_delta(onehot: &[MemRecord], distilled: &[MemRecord]) -> Result<AccuracyDelta> {
    check_paired(onehot, distilled)?;
    let (mut n, mut d_in, mut d_out) = (0usize, 0.0, 0.0);
    for (a, b) in valid_pairs(onehot, distilled) {
        n += 1;
        d_in += b.in_acc - a.in_acc;
        d_out += b.out_acc - a.out_acc;
    }
    if n == 0 {
        return Err(Error::NoValidRecords);
    }
    let (d_in, d_out) = (d_in / n as f64, d_out / n as f64);
    Ok(AccuracyDelta { in_acc: d_in, out_acc: d_out, mem: d_in - d_out })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionBreakdown {
    pub reduced_count: usize,
    /// Category mix of the reduced set; absent when the set is empty.
    pub reduced: Option<Census>,
    pub increased: Option<Census>,
    /// Category mix over every example with a trajectory.
    pub baseline: Census,
}

pub fn reduction_breakdown(comparison: &DistillComparison, trajectories: &[TrajectoryRecord]) -> Result<ReductionBreakdown> {
    let category_of = |id: usize| {
        trajectories
            .iter()
            .find(|t| t.example_id == id)
            .map(|t| t.category)
            .ok_or_else(|| Error::config(format!("example {id} has no trajectory")))
    };
    let census_of = |ids: Vec<usize>| -> Result<Option<Census>> {
        if ids.is_empty() {
            return Ok(None);
        }
        let cats = ids.into_iter().map(category_of).collect::<Result<Vec<_>>>()?;
        Census::from_categories(cats).map(Some)
    };
    let reduced_ids = comparison.reduced();
    Ok(ReductionBreakdown {
        reduced_count: reduced_ids.len(),
        reduced: census_of(reduced_ids)?,
        increased: census_of(comparison.increased())?,
        baseline: Census::from_categories(trajectories.iter().map(|t| t.category))?,
    })
}

pub fn write_deltas_csv(mut w: impl Write, comparison: &DistillComparison) -> Result<()> {
    writeln!(w, "example_id,mem_onehot,mem_distilled,delta")?;
    for p in &comparison.pairs {
        writeln!(w, "{},{},{},{}", p.example_id, p.mem_onehot, p.mem_distilled, p.delta)?;
    }
    Ok(())
}
