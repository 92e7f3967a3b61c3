//! Analyses of a finished artifact directory and the files they emit.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{ExperimentConfig, ReportKind, RobustnessConfig};
use crate::data::LabeledDataset;
use crate::distill::{self, AccuracyDelta, ReductionBreakdown};
use crate::ensemble::{
    correctness_matrix, exclusion_runs, load_manifest, load_plan, subsample_runs, ExperimentPlan, RunArtifact, RunStatus,
    SubsamplePlan, MANIFEST,
};
use crate::error::{Error, Result};
use crate::fsutil::{canonical_json_pretty, write_atomic};
use crate::memscore::{avg_decomposition, estimate_mem, oracle_record, Decomposition, MemRecord, OracleRecord};
use crate::nn::{LossKind, TrainedModel};
use crate::proxies::{prediction_depths, train_probes, CproxAccumulator, ProxyRecord};
use crate::seed;
use crate::trajectory::{self, category_census, histogram, Category, Census, Correlation, HistogramReport, RobustnessPoint};

pub const CONFIG_FILE: &str = "config.json";
pub const DATASET_FILE: &str = "dataset.csv";
pub const REPORTS_DIR: &str = "reports";
pub const SUMMARY_FILE: &str = "summary.json";
pub const ORACLE_DIR: &str = "oracle";

fn missing(what: impl Into<String>) -> Error {
    Error::MissingArtifacts(vec![what.into()])
}

/// An artifact directory with its config, dataset, plan and run table loaded.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub dir: PathBuf,
    pub config: ExperimentConfig,
    pub data: LabeledDataset,
    pub plan: ExperimentPlan,
    pub plan_hash: String,
    pub runs: Vec<RunArtifact>,
}

impl Experiment {
    pub fn open(dir: &Path) -> Result<Experiment> {
        for f in [CONFIG_FILE, DATASET_FILE, MANIFEST, crate::ensemble::PLAN_FILE] {
            if !dir.join(f).exists() {
                return Err(missing(dir.join(f).display().to_string()));
            }
        }
        let config = ExperimentConfig::from_json(&fs::read_to_string(dir.join(CONFIG_FILE))?)?;
        let data = LabeledDataset::read(&dir.join(DATASET_FILE))?;
        let plan = load_plan(dir)?;
        let (plan_hash, runs) = load_manifest(dir)?;
        let expected = plan.hash()?;
        if plan_hash != expected {
            return Err(Error::PlanMismatch { expected, found: plan_hash });
        }
        if data.fingerprint() != plan.dataset {
            return Err(Error::PlanMismatch { expected: plan.dataset.clone(), found: data.fingerprint() });
        }
        Ok(Experiment { dir: dir.to_path_buf(), config, data, plan, plan_hash, runs })
    }

    pub fn ladder_len(&self) -> usize {
        self.plan.ladder.len()
    }

    pub fn failed_runs(&self) -> Vec<&RunArtifact> {
        self.runs.iter().filter(|r| r.status == RunStatus::Failed).collect()
    }

    pub fn subsamples(&self) -> Result<&SubsamplePlan> {
        self.plan.subsamples.as_ref().ok_or_else(|| missing("subsample ensemble (subsample.k is 0)"))
    }

    pub fn mem_records(&self, ladder_index: usize, loss: LossKind) -> Result<Vec<MemRecord>> {
        let sp = self.subsamples()?;
        let m = correctness_matrix(&self.dir, &self.runs, sp, ladder_index, loss)?;
        estimate_mem(&m, sp)
    }

    /// One-hot memorisation records for every ladder entry.
    pub fn ladder_mem(&self) -> Result<Vec<Vec<MemRecord>>> {
        (0..self.ladder_len()).map(|l| self.mem_records(l, LossKind::OneHot)).collect()
    }

    /// Mean over in-sample one-hot runs of the per-run cprox.
    pub fn cprox(&self, ladder_index: usize) -> Result<Vec<f64>> {
        let sp = self.subsamples()?;
        // validates that every run is present
        correctness_matrix(&self.dir, &self.runs, sp, ladder_index, LossKind::OneHot)?;
        let mut acc = CproxAccumulator::new(self.data.len());
        for (k, run) in subsample_runs(&self.runs, ladder_index, LossKind::OneHot).into_iter().enumerate() {
            if run.is_done() {
                acc.add_run(&run.load_trace(&self.dir)?, &sp.members(k))?;
            }
        }
        Ok(acc.finish())
    }

    /// Index of the exclusion set that removes nothing.
    pub fn full_data_set(&self) -> Option<usize> {
        self.plan.exclusions.iter().position(|s| s.ids.is_empty())
    }

    /// Finished full-data models for one entry, in repeat order.
    pub fn full_data_models(&self, ladder_index: usize) -> Result<Vec<TrainedModel>> {
        let label = format!("full-data runs for ladder entry {ladder_index}");
        let set = self.full_data_set().ok_or_else(|| missing(label.clone()))?;
        let runs = exclusion_runs(&self.runs, ladder_index, set);
        if runs.is_empty() {
            return Err(missing(label));
        }
        let pending: Vec<String> = runs
            .iter()
            .filter(|r| r.status == RunStatus::Pending || (r.is_done() && !r.files.exist_under(&self.dir)))
            .map(|r| r.run_id.clone())
            .collect();
        if !pending.is_empty() {
            return Err(Error::MissingArtifacts(pending));
        }
        let models = runs.iter().filter(|r| r.is_done()).map(|r| r.load_model(&self.dir)).collect::<Result<Vec<_>>>()?;
        if models.is_empty() {
            return Err(Error::AllMasked);
        }
        Ok(models)
    }

    pub fn has_full_data(&self, ladder_index: usize) -> bool {
        self.full_data_set().is_some_and(|s| self.plan.exclusions[s].covers(ladder_index))
    }

    /// Prediction depth per example, averaged over the full-data models of one entry.
    pub fn depths(&self, ladder_index: usize) -> Result<Vec<f64>> {
        let models = self.full_data_models(ladder_index)?;
        let all = self.data.all_ids();
        let mut sum = vec![0.0; self.data.len()];
        for (r, model) in models.iter().enumerate() {
            let s = seed::mix(self.config.reports.probe_seed, &["depth", &ladder_index.to_string(), &r.to_string()]);
            let probes = train_probes(model, self.data.view(&all), s)?;
            for (acc, d) in sum.iter_mut().zip(prediction_depths(&probes, model, &self.data)?) {
                *acc += d as f64;
            }
        }
        Ok(sum.into_iter().map(|s| s / models.len() as f64).collect())
    }

    /// Probe points (hidden layers plus output) of one entry.
    pub fn probe_points(&self, ladder_index: usize) -> usize {
        self.plan.ladder[ladder_index].spec.depth + 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MemEntrySummary {
    pub ladder_index: usize,
    pub params: usize,
    pub decomposition: Decomposition,
    pub histogram: HistogramReport,
}

pub fn mem_summary(exp: &Experiment, ladder_index: usize, records: &[MemRecord]) -> Result<MemEntrySummary> {
    let valid: Vec<f64> = records.iter().filter(|r| r.valid).map(|r| r.mem).collect();
    Ok(MemEntrySummary {
        ladder_index,
        params: exp.plan.ladder[ladder_index].spec.param_count(),
        decomposition: avg_decomposition(records)?,
        histogram: histogram(&valid, 0.0, 1.0)?,
    })
}

/// Proxy scores of one entry next to its memorisation scores.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProxySummary {
    pub ladder_index: usize,
    pub mem_histogram: HistogramReport,
    /// Histogram of `1 - cprox`, the proxy's stand-in for memorisation.
    pub one_minus_cprox_histogram: Option<HistogramReport>,
    pub depth_histogram: Option<HistogramReport>,
    pub cprox_vs_mem: Option<Correlation>,
    pub depth_vs_mem: Option<Correlation>,
}

fn paired(xs: &[f64], records: &[MemRecord]) -> (Vec<f64>, Vec<f64>) {
    xs.iter().zip(records).filter(|(x, r)| x.is_finite() && r.valid).map(|(&x, r)| (x, r.mem)).unzip()
}

pub fn proxy_summary(
    exp: &Experiment,
    ladder_index: usize,
    records: &[MemRecord],
    cprox: Option<&[f64]>,
    depths: Option<&[f64]>,
) -> Result<ProxySummary> {
    let mem: Vec<f64> = records.iter().filter(|r| r.valid).map(|r| r.mem).collect();
    let corr = |xs: &[f64]| {
        let (a, b) = paired(xs, records);
        trajectory::correlate(&a, &b).ok()
    };
    let max_depth = (exp.probe_points(ladder_index) - 1).max(1) as f64;
    Ok(ProxySummary {
        ladder_index,
        mem_histogram: histogram(&mem, 0.0, 1.0)?,
        one_minus_cprox_histogram: cprox.map(|c| histogram(&c.iter().map(|v| 1.0 - v).collect::<Vec<_>>(), 0.0, 1.0)).transpose()?,
        depth_histogram: depths.map(|d| histogram(d, 0.0, max_depth)).transpose()?,
        cprox_vs_mem: cprox.and_then(corr),
        depth_vs_mem: depths.and_then(corr),
    })
}

pub fn proxy_records(n: usize, cprox: Option<&[f64]>, depths: Option<&[f64]>) -> Vec<ProxyRecord> {
    (0..n)
        .map(|i| ProxyRecord {
            example_id: i,
            cprox: cprox.map(|c| c[i]).filter(|v| v.is_finite()),
            pred_depth: depths.map(|d| d[i]),
        })
        .collect()
}

/// How strongly noise-flagged examples concentrate in one trajectory category.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NoiseEnrichment {
    pub base_rate: f64,
    /// Noise-flagged fraction within the category; absent when the category is empty.
    pub category_rate: Option<f64>,
    pub ratio: Option<f64>,
}

pub fn noise_enrichment(data: &LabeledDataset, records: &[trajectory::TrajectoryRecord], category: Category) -> NoiseEnrichment {
    let rate = |rs: Vec<&trajectory::TrajectoryRecord>| {
        (!rs.is_empty()).then(|| rs.iter().filter(|r| data.noise_flag(r.example_id)).count() as f64 / rs.len() as f64)
    };
    let base_rate = rate(records.iter().collect()).unwrap_or(0.0);
    let category_rate = rate(records.iter().filter(|r| r.category == category).collect());
    let ratio = category_rate.filter(|_| base_rate > 0.0).map(|c| c / base_rate);
    NoiseEnrichment { base_rate, category_rate, ratio }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectorySummary {
    pub alpha: f64,
    pub census: Census,
    pub increasing_noise: NoiseEnrichment,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlphaBreakdown {
    pub alpha: f64,
    pub breakdown: ReductionBreakdown,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistillSummary {
    pub teacher: usize,
    pub student: usize,
    pub tau: f64,
    pub weight: f64,
    pub temperature: f64,
    pub onehot: Decomposition,
    pub distilled: Decomposition,
    pub delta: AccuracyDelta,
    pub mean_delta: f64,
    pub reduced_count: usize,
    pub increased_count: usize,
    /// Rows by one-hot score, columns by distilled score, over `[0, 1]`.
    pub joint_histogram: Vec<Vec<usize>>,
    pub breakdowns: Vec<AlphaBreakdown>,
}

/// One comparison per distilled student, with category breakdowns at each `alpha`.
pub fn distill_reports(
    exp: &Experiment,
    ladder: &[Vec<MemRecord>],
    tau: f64,
    alphas: &[f64],
) -> Result<Vec<(distill::DistillComparison, DistillSummary)>> {
    let dp = exp.plan.distill.as_ref().ok_or_else(|| missing("distill block in the experiment config"))?;
    let trajectories = alphas.iter().map(|&a| trajectory::trajectories(ladder, a)).collect::<Result<Vec<_>>>()?;
    dp.students
        .iter()
        .map(|&s| {
            let onehot = &ladder[s];
            let distilled = exp.mem_records(s, LossKind::Distill)?;
            let cmp = distill::compare(onehot, &distilled, dp.teacher, s, tau)?;
            let breakdowns = alphas
                .iter()
                .zip(&trajectories)
                .map(|(&alpha, t)| Ok(AlphaBreakdown { alpha, breakdown: distill::reduction_breakdown(&cmp, t)? }))
                .collect::<Result<Vec<_>>>()?;
            let summary = DistillSummary {
                teacher: dp.teacher,
                student: s,
                tau,
                weight: dp.weight,
                temperature: dp.temperature,
                onehot: avg_decomposition(onehot)?,
                distilled: avg_decomposition(&distilled)?,
                delta: distill::accuracy_decomposition_delta(onehot, &distilled)?,
                mean_delta: cmp.mean_delta()?,
                reduced_count: cmp.reduced().len(),
                increased_count: cmp.increased().len(),
                joint_histogram: cmp.joint_histogram(),
                breakdowns,
            };
            Ok((cmp, summary))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RobustnessCurve {
    pub ladder_index: usize,
    pub models: usize,
    pub points: Vec<RobustnessPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RobustnessSummary {
    pub example: usize,
    pub label: usize,
    pub n_per_sigma: usize,
    pub curves: Vec<RobustnessCurve>,
}

/// Corruption accuracy on one example, averaged over the full-data models of every entry
/// that has them. All models see the same perturbations.
pub fn robustness_report(exp: &Experiment, rc: &RobustnessConfig) -> Result<RobustnessSummary> {
    if rc.example >= exp.data.len() {
        return Err(Error::config(format!("reports.robustness.example {} outside the dataset", rc.example)));
    }
    let x = exp.data.features(rc.example);
    let label = exp.data.label(rc.example);
    let entries: Vec<usize> = (0..exp.ladder_len()).filter(|&l| exp.has_full_data(l)).collect();
    if entries.is_empty() {
        return Err(missing("full-data runs (an exclusion set with no ids)"));
    }
    let curves = entries
        .into_iter()
        .map(|l| {
            let models = exp.full_data_models(l)?;
            let mut points: Vec<RobustnessPoint> =
                rc.sigmas.iter().map(|&sigma| RobustnessPoint { sigma, accuracy: 0.0 }).collect();
            for m in &models {
                let curve = trajectory::robustness_probe(m, x, label, &rc.sigmas, rc.n_per_sigma, rc.seed)?;
                for (p, c) in points.iter_mut().zip(curve) {
                    p.accuracy += c.accuracy / models.len() as f64;
                }
            }
            Ok(RobustnessCurve { ladder_index: l, models: models.len(), points })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RobustnessSummary { example: rc.example, label, n_per_sigma: rc.n_per_sigma, curves })
}

/// Exact scores for the targets of a leave-one-out experiment at one entry.
///
/// The oracle plan holds the full-data set first and then one single-id set per target.
pub fn oracle_records(exp: &Experiment, ladder_index: usize) -> Result<Vec<OracleRecord>> {
    let full = exp.full_data_set().ok_or_else(|| missing("full-data oracle runs"))?;
    let correctness = |set: usize| -> Result<Vec<Vec<bool>>> {
        let runs = exclusion_runs(&exp.runs, ladder_index, set);
        let pending: Vec<String> = runs.iter().filter(|r| r.status == RunStatus::Pending).map(|r| r.run_id.clone()).collect();
        if runs.is_empty() || !pending.is_empty() {
            return Err(Error::MissingArtifacts(if pending.is_empty() {
                vec![format!("oracle runs for set {set} at ladder entry {ladder_index}")]
            } else {
                pending
            }));
        }
        runs.iter().filter(|r| r.is_done()).map(|r| r.load_correctness(&exp.dir)).collect()
    };
    let with = correctness(full)?;
    exp.plan
        .exclusions
        .iter()
        .enumerate()
        .filter(|(s, set)| *s != full && set.ids.len() == 1)
        .map(|(s, set)| oracle_record(set.ids[0], &with, &correctness(s)?))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleEntrySummary {
    pub ladder_index: usize,
    pub targets: usize,
    pub repeats: usize,
    pub mean_half_width: f64,
    /// Mean |estimator - oracle| when the main experiment has a subsample ensemble.
    pub estimator_mae: Option<f64>,
}

/// Writes report files under `<dir>/reports`, prefixed by the plan hash. An existing file
/// with different content is never replaced; the new content gets the next free version.
pub struct ReportWriter {
    dir: PathBuf,
    prefix: String,
    pub written: Vec<PathBuf>,
}

impl ReportWriter {
    pub fn new(experiment_dir: &Path, plan_hash: &str) -> Result<ReportWriter> {
        let dir = experiment_dir.join(REPORTS_DIR);
        fs::create_dir_all(&dir)?;
        Ok(ReportWriter { dir, prefix: plan_hash.chars().take(12).collect(), written: vec![] })
    }

    pub fn emit(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let (stem, ext) = name.rsplit_once('.').unwrap_or((name, ""));
        let dot = if ext.is_empty() { "" } else { "." };
        for version in 1.. {
            let file = if version == 1 {
                format!("{}-{stem}{dot}{ext}", self.prefix)
            } else {
                format!("{}-{stem}.v{version}{dot}{ext}", self.prefix)
            };
            let path = self.dir.join(file);
            match fs::read(&path) {
                Ok(existing) if existing == bytes => {
                    self.written.push(path.clone());
                    return Ok(path);
                }
                Ok(_) => continue,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                    write_atomic(&path, bytes)?;
                    self.written.push(path.clone());
                    return Ok(path);
                }
                Err(e) => return Err(e.into()),
            }
        }
        unreachable!("versions are unbounded")
    }

    pub fn emit_json(&mut self, name: &str, value: &impl Serialize) -> Result<PathBuf> {
        self.emit(name, &canonical_json_pretty(value)?)
    }

    pub fn emit_csv(&mut self, name: &str, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<PathBuf> {
        let mut buf = Vec::new();
        write(&mut buf)?;
        self.emit(name, &buf)
    }
}

/// Options for [`emit_report`]; empty `alphas` and absent `tau` fall back to the config.
#[derive(Clone, Debug, Default)]
pub struct ReportOptions {
    pub alphas: Vec<f64>,
    pub tau: Option<f64>,
}

fn alpha_tag(a: f64) -> String {
    format!("a{a}")
}

/// Compute one report kind and write its files.
pub fn emit_report(exp: &Experiment, kind: ReportKind, opts: &ReportOptions, w: &mut ReportWriter) -> Result<()> {
    let cfg = &exp.config.reports;
    let alphas = if opts.alphas.is_empty() { cfg.alphas.clone() } else { opts.alphas.clone() };
    let tau = opts.tau.unwrap_or(cfg.tau);
    match kind {
        ReportKind::Mem => {
            let ladder = exp.ladder_mem()?;
            let mut entries = Vec::new();
            for (l, records) in ladder.iter().enumerate() {
                w.emit_csv(&format!("mem-e{l:02}.csv"), |b| crate::memscore::write_records_csv(b, records))?;
                let s = mem_summary(exp, l, records)?;
                w.emit_json(&format!("mem-e{l:02}-histogram.json"), &s.histogram)?;
                entries.push(s);
            }
            w.emit_json("mem-summary.json", &entries)?;
        }
        ReportKind::Cprox | ReportKind::Depth => {
            let entries: Vec<usize> = match kind {
                ReportKind::Cprox => (0..exp.ladder_len()).collect(),
                _ => (0..exp.ladder_len()).filter(|&l| exp.has_full_data(l)).collect(),
            };
            if entries.is_empty() {
                return Err(missing("full-data runs (an exclusion set with no ids)"));
            }
            let mut summaries = Vec::new();
            for l in entries {
                let records = exp.mem_records(l, LossKind::OneHot)?;
                let cprox = exp.cprox(l)?;
                let depths = if exp.has_full_data(l) { Some(exp.depths(l)?) } else { None };
                let rows = proxy_records(exp.data.len(), Some(&cprox), depths.as_deref());
                let name = kind.as_str();
                w.emit_csv(&format!("{name}-e{l:02}.csv"), |b| crate::proxies::write_proxy_csv(b, &rows))?;
                summaries.push(proxy_summary(exp, l, &records, Some(&cprox), depths.as_deref())?);
            }
            w.emit_json(&format!("{}-summary.json", kind.as_str()), &summaries)?;
        }
        ReportKind::Trajectory => {
            let ladder = exp.ladder_mem()?;
            for &alpha in &alphas {
                let records = trajectory::trajectories(&ladder, alpha)?;
                let tag = alpha_tag(alpha);
                w.emit_csv(&format!("trajectory-{tag}.csv"), |b| trajectory::write_trajectories_csv(b, &records))?;
                let summary = TrajectorySummary {
                    alpha,
                    census: category_census(&records)?,
                    increasing_noise: noise_enrichment(&exp.data, &records, Category::Increasing),
                };
                w.emit_json(&format!("trajectory-{tag}-census.json"), &summary)?;
            }
        }
        ReportKind::Distill => {
            if exp.plan.distill.is_none() {
                return Err(missing("distill block in the experiment config"));
            }
            let ladder = exp.ladder_mem()?;
            for (cmp, summary) in distill_reports(exp, &ladder, tau, &alphas)? {
                let tag = format!("t{:02}-s{:02}", cmp.teacher, cmp.student);
                w.emit_csv(&format!("distill-{tag}.csv"), |b| distill::write_deltas_csv(b, &cmp))?;
                w.emit_json(&format!("distill-{tag}-summary.json"), &summary)?;
            }
        }
        ReportKind::Robustness => {
            let rc = cfg.robustness.as_ref().ok_or_else(|| missing("robustness block in the experiment config"))?;
            w.emit_json("robustness.json", &robustness_report(exp, rc)?)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct Summary<'a> {
    plan_hash: &'a str,
    runs: usize,
    failed_runs: Vec<&'a str>,
    /// Relative path to sha256 of every file under the directory.
    files: std::collections::BTreeMap<String, String>,
}

fn collect_files(root: &Path, dir: &Path, out: &mut std::collections::BTreeMap<String, String>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).expect("walk stays under root");
            let rel = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            if rel != SUMMARY_FILE && !rel.contains(".tmp") {
                out.insert(rel, seed::sha256_hex(&fs::read(&path)?));
            }
        }
    }
    Ok(())
}

/// Rewrite `summary.json` listing every file under `dir` with its content hash.
pub fn write_summary(exp: &Experiment) -> Result<PathBuf> {
    let mut files = std::collections::BTreeMap::new();
    collect_files(&exp.dir, &exp.dir, &mut files)?;
    let s = Summary {
        plan_hash: &exp.plan_hash,
        runs: exp.runs.len(),
        failed_runs: exp.failed_runs().iter().map(|r| r.run_id.as_str()).collect(),
        files,
    };
    let path = exp.dir.join(SUMMARY_FILE);
    write_atomic(&path, &canonical_json_pretty(&s)?)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writer_versions_instead_of_overwriting() {
        let tmp = tempfile::tempdir().unwrap();
        let mut w = ReportWriter::new(tmp.path(), "abcdef0123456789").unwrap();
        let a = w.emit("mem-summary.json", b"one").unwrap();
        assert!(a.ends_with("abcdef012345-mem-summary.json"));
        assert_eq!(w.emit("mem-summary.json", b"one").unwrap(), a);
        let b = w.emit("mem-summary.json", b"two").unwrap();
        assert!(b.ends_with("abcdef012345-mem-summary.v2.json"));
        assert_eq!(fs::read(&a).unwrap(), b"one");
        assert_eq!(w.emit("mem-summary.json", b"two").unwrap(), b);
    }

    #[test]
    fn enrichment_counts_flags() {
        let data = LabeledDataset::with_flags(vec![0.0; 4], vec![0, 1, 0, 1], vec![true, false, false, false], 2, 1).unwrap();
        let rec = |id, category| trajectory::TrajectoryRecord { example_id: id, scores: vec![], category, alpha: 0.1 };
        let rs = vec![rec(0, Category::Increasing), rec(1, Category::Increasing), rec(2, Category::Constant), rec(3, Category::Constant)];
        let e = noise_enrichment(&data, &rs, Category::Increasing);
        assert_eq!((e.base_rate, e.category_rate, e.ratio), (0.25, Some(0.5), Some(2.0)));
        assert_eq!(noise_enrichment(&data, &rs, Category::CapShaped).category_rate, None);
    }
}
