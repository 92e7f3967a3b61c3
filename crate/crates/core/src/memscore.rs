//! Per-example memorisation: the subsample estimator, the point-mass C-score, the
//! in-/out-of-sample decomposition, and an exact leave-one-out oracle for tiny datasets.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::ensemble::SubsamplePlan;
use crate::error::{Error, Result};
use crate::jobs::run_indexed;
use crate::nn::{train, LossSpec, ModelSpec, OptimizerConfig};
use crate::seed;

/// `N x K` correctness indicators, one column per run, plus a usable-column mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorrectnessMatrix {
    n: usize,
    k: usize,
    bits: Vec<bool>,
    mask: Vec<bool>,
}

impl CorrectnessMatrix {
    pub fn new(n: usize, k: usize) -> Self {
        CorrectnessMatrix { n, k, bits: vec![false; n * k], mask: vec![false; k] }
    }

    /// Build from per-run columns; `None` marks a failed run.
    pub fn from_columns(n: usize, columns: &[Option<Vec<bool>>]) -> Result<Self> {
        let mut m = CorrectnessMatrix::new(n, columns.len());
        for (k, col) in columns.iter().enumerate() {
            if let Some(c) = col {
                m.set_column(k, c)?;
            }
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn set_column(&mut self, k: usize, col: &[bool]) -> Result<()> {
        if col.len() != self.n {
            return Err(Error::config(format!("column {k} has {} entries, expected {}", col.len(), self.n)));
        }
        for (i, &c) in col.iter().enumerate() {
            self.bits[i * self.k + k] = c;
        }
        self.mask[k] = true;
        Ok(())
    }

    pub fn mask_column(&mut self, k: usize) {
        self.mask[k] = false;
    }

    pub fn get(&self, i: usize, k: usize) -> bool {
        self.bits[i * self.k + k]
    }

    pub fn is_usable(&self, k: usize) -> bool {
        self.mask[k]
    }

    pub fn column(&self, k: usize) -> Vec<bool> {
        (0..self.n).map(|i| self.get(i, k)).collect()
    }

    pub fn usable_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Keep the listed columns, in order.
    pub fn select(&self, ks: &[usize]) -> CorrectnessMatrix {
        let mut out = CorrectnessMatrix::new(self.n, ks.len());
        for (j, &k) in ks.iter().enumerate() {
            for i in 0..self.n {
                out.bits[i * out.k + j] = self.get(i, k);
            }
            out.mask[j] = self.mask[k];
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemRecord {
    pub example_id: usize,
    pub in_acc: f64,
    pub out_acc: f64,
    pub mem: f64,
    pub n_in: usize,
    pub n_out: usize,
    pub valid: bool,
}

impl MemRecord {
    /// Binomial standard error of `mem`, treating the two terms as independent.
    pub fn std_err(&self) -> f64 {
        let v = |p: f64, n: usize| if n == 0 { f64::NAN } else { p * (1.0 - p) / n as f64 };
        (v(self.in_acc, self.n_in) + v(self.out_acc, self.n_out)).sqrt()
    }
}

fn check_dims(matrix: &CorrectnessMatrix, plan: &SubsamplePlan) -> Result<()> {
    if matrix.n != plan.n || matrix.k != plan.k {
        return Err(Error::config(format!(
            "matrix is {}x{}, plan is {}x{}",
            matrix.n, matrix.k, plan.n, plan.k
        )));
    }
    if matrix.usable_count() == 0 {
        return Err(Error::AllMasked);
    }
    Ok(())
}

/// In-sample minus out-of-sample accuracy per example, over unmasked runs.
///
/// A record with no usable in-runs or out-runs is returned with `valid = false` and NaN
/// in the missing term.
pub fn estimate_mem(matrix: &CorrectnessMatrix, plan: &SubsamplePlan) -> Result<Vec<MemRecord>> {
    check_dims(matrix, plan)?;
    Ok((0..plan.n)
        .map(|i| {
            let (mut n_in, mut c_in, mut n_out, mut c_out) = (0usize, 0usize, 0usize, 0usize);
            for k in (0..plan.k).filter(|&k| matrix.is_usable(k)) {
                let c = matrix.get(i, k) as usize;
                if plan.contains(k, i) {
                    n_in += 1;
                    c_in += c;
                } else {
                    n_out += 1;
                    c_out += c;
                }
            }
            let frac = |c: usize, n: usize| if n == 0 { f64::NAN } else { c as f64 / n as f64 };
            let in_acc = frac(c_in, n_in);
            let out_acc = frac(c_out, n_out);
            MemRecord {
                example_id: i,
                in_acc,
                out_acc,
                mem: in_acc - out_acc,
                n_in,
                n_out,
                valid: n_in > 0 && n_out > 0,
            }
        })
        .collect())
}

/// Point-mass C-score: the out-of-sample accuracy term alone.
pub fn cscore_point_mass(matrix: &CorrectnessMatrix, plan: &SubsamplePlan) -> Result<Vec<f64>> {
    Ok(estimate_mem(matrix, plan)?.into_iter().map(|r| r.out_acc).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub mean_in_acc: f64,
    pub mean_out_acc: f64,
    pub mean_mem: f64,
    pub n_valid: usize,
    pub n_invalid: usize,
}

pub fn avg_decomposition(records: &[MemRecord]) -> Result<Decomposition> {
    let valid: Vec<&MemRecord> = records.iter().filter(|r| r.valid).collect();
    if valid.is_empty() {
        return Err(Error::NoValidRecords);
    }
    let n = valid.len() as f64;
    let mean_in_acc = valid.iter().map(|r| r.in_acc).sum::<f64>() / n;
    let mean_out_acc = valid.iter().map(|r| r.out_acc).sum::<f64>() / n;
    Ok(Decomposition {
        mean_in_acc,
        mean_out_acc,
        mean_mem: valid.iter().map(|r| r.mem).sum::<f64>() / n,
        n_valid: valid.len(),
        n_invalid: records.len() - valid.len(),
    })
}

pub fn write_records_csv(mut w: impl Write, records: &[MemRecord]) -> Result<()> {
    writeln!(w, "example_id,in_acc,out_acc,mem,n_in,n_out,valid")?;
    for r in records {
        writeln!(w, "{},{},{},{},{},{},{}", r.example_id, r.in_acc, r.out_acc, r.mem, r.n_in, r.n_out, r.valid)?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Independent seeds per training condition.
    pub repeats: usize,
    pub max_n: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { repeats: 20, max_n: 512 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleRecord {
    pub example_id: usize,
    pub mem: f64,
    pub in_acc: f64,
    pub out_acc: f64,
    /// 95% normal-approximation half-width of `mem`.
    pub half_width: f64,
}

pub fn write_oracle_csv(mut w: impl Write, records: &[OracleRecord]) -> Result<()> {
    writeln!(w, "example_id,mem_exact,in_acc,out_acc,half_width")?;
    for r in records {
        writeln!(w, "{},{},{},{},{}", r.example_id, r.mem, r.in_acc, r.out_acc, r.half_width)?;
    }
    Ok(())
}

/// Exact leave-one-out memorisation by retraining.
///
/// Trains `repeats` models on the whole dataset and, per target, `repeats` models with
/// the target removed; probabilities are correctness frequencies over seeds.
pub fn exact_mem_oracle(
    spec: &ModelSpec,
    opt: &OptimizerConfig,
    data: &LabeledDataset,
    targets: &[usize],
    oracle: &OracleConfig,
    seed: u64,
    workers: usize,
) -> Result<Vec<OracleRecord>> {
    if data.len() > oracle.max_n {
        return Err(Error::TooLarge { n: data.len(), max_n: oracle.max_n });
    }
    if oracle.repeats == 0 {
        return Err(Error::config("oracle repeats must be >= 1"));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= data.len()) {
        return Err(Error::config(format!("oracle target {t} out of range")));
    }
    let r = oracle.repeats;
    let all = data.all_ids();

    // job j < r: full data; otherwise target (j - r) / r, repeat (j - r) % r
    let jobs = r * (targets.len() + 1);
    let results = run_indexed(jobs, workers, |j| -> Result<Vec<bool>> {
        let (label, view): (String, Vec<usize>) = if j < r {
            (format!("full/{j}"), all.clone())
        } else {
            let t = targets[(j - r) / r];
            (format!("drop{t}/{}", (j - r) % r), all.iter().copied().filter(|&i| i != t).collect())
        };
        let run_seed = seed::mix(seed, &["oracle", &label]);
        let s = spec.with_init_seed(seed::mix(run_seed, &["init"]));
        let model = train(&s, opt, &LossSpec::one_hot(), data.view(&view), None, run_seed)
            .map_err(|e| Error::Training { condition: format!("oracle {label}"), source: Box::new(e) })?;
        model.correctness(data)
    });
    let results: Vec<Vec<bool>> = results.into_iter().collect::<Result<_>>()?;

    targets
        .iter()
        .enumerate()
        .map(|(ti, &t)| oracle_record(t, &results[..r], &results[r + ti * r..r + (ti + 1) * r]))
        .collect()
}

/// Oracle score of one example from correctness vectors of models trained with it
/// (`with`) and without it (`without`).
pub fn oracle_record(example_id: usize, with: &[Vec<bool>], without: &[Vec<bool>]) -> Result<OracleRecord> {
    if with.is_empty() || without.is_empty() {
        return Err(Error::config(format!("oracle for example {example_id} needs runs with and without it")));
    }
    let freq = |runs: &[Vec<bool>]| runs.iter().filter(|c| c[example_id]).count() as f64 / runs.len() as f64;
    let (in_acc, out_acc) = (freq(with), freq(without));
    let var = in_acc * (1.0 - in_acc) / with.len() as f64 + out_acc * (1.0 - out_acc) / without.len() as f64;
    Ok(OracleRecord { example_id, mem: in_acc - out_acc, in_acc, out_acc, half_width: 1.96 * var.sqrt() })
}

/// Mean absolute difference between estimator and oracle over targets valid in both.
pub fn mean_abs_error(estimate: &[MemRecord], oracle: &[OracleRecord]) -> Result<f64> {
    let diffs: Vec<f64> = oracle
        .iter()
        .filter_map(|o| estimate.get(o.example_id).filter(|r| r.valid).map(|r| (r.mem - o.mem).abs()))
        .collect();
    if diffs.is_empty() {
        return Err(Error::NoValidRecords);
    }
    Ok(diffs.iter().sum::<f64>() / diffs.len() as f64)
}
