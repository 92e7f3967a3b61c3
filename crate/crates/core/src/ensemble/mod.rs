//! Subsample ensembles: the experiment plan, resumable execution with per-run artifacts,
//! and assembly of correctness matrices for the estimator.

mod artifact;
mod subsample;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use artifact::{decode_correctness, encode_correctness, RunArtifact, RunFiles, RunRole, RunStatus};
pub use subsample::{draw_subsamples, subsample_size, SubsamplePlan};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::fsutil::{canonical_json, canonical_json_pretty, write_atomic};
use crate::jobs::run_indexed;
use crate::memscore::CorrectnessMatrix;
use crate::nn::{io, train, LossKind, LossSpec, ModelSpec, OptimizerConfig, TrainedModel};
use crate::seed;

pub const MANIFEST: &str = "manifest.json";
pub const PLAN_FILE: &str = "plan.json";

/// One model size and the optimizer used to train it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderEntry {
    /// Architecture; its `init_seed` is replaced per run.
    pub spec: ModelSpec,
    pub optimizer: OptimizerConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistillPlan {
    pub teacher: usize,
    pub students: Vec<usize>,
    pub weight: f64,
    pub temperature: f64,
}

impl DistillPlan {
    pub fn loss(&self) -> LossSpec {
        LossSpec::distill(self.weight, self.temperature)
    }
}

/// Examples left out of training, each condition repeated with independent seeds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionSet {
    pub ids: Vec<usize>,
    pub repeats: usize,
    /// Ladder entries to train; every entry when absent.
    #[serde(default)]
    pub ladder: Option<Vec<usize>>,
}

impl ExclusionSet {
    pub fn covers(&self, ladder_index: usize) -> bool {
        self.ladder.as_ref().is_none_or(|l| l.contains(&ladder_index))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    /// Fingerprint of the dataset the plan was built for.
    pub dataset: String,
    pub seed: u64,
    /// Absent when the experiment only runs exclusion studies.
    pub subsamples: Option<SubsamplePlan>,
    /// Ordered from smallest to largest.
    pub ladder: Vec<LadderEntry>,
    pub distill: Option<DistillPlan>,
    #[serde(default)]
    pub exclusions: Vec<ExclusionSet>,
    /// Extra attempts with fresh seeds after a numerical failure.
    pub retries: usize,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.ladder.is_empty() {
            return Err(Error::config("ladder must have at least one entry"));
        }
        for (i, e) in self.ladder.iter().enumerate() {
            e.spec.validate().map_err(|err| Error::config(format!("ladder[{i}]: {err}")))?;
            e.optimizer.validate().map_err(|err| Error::config(format!("ladder[{i}].optimizer: {err}")))?;
        }
        if self.ladder.windows(2).any(|w| w[0].spec.param_count() >= w[1].spec.param_count()) {
            return Err(Error::config("ladder must be strictly increasing in parameter count"));
        }
        let first = &self.ladder[0].spec;
        if self.ladder.iter().any(|e| e.spec.input_dim != first.input_dim || e.spec.num_classes != first.num_classes) {
            return Err(Error::config("ladder entries disagree on input or class count"));
        }
        if let Some(d) = &self.distill {
            let n = self.ladder.len();
            if d.teacher >= n {
                return Err(Error::config(format!("distill teacher index {} out of range", d.teacher)));
            }
            if d.students.is_empty() {
                return Err(Error::config("distill needs at least one student"));
            }
            if let Some(s) = d.students.iter().find(|&&s| s >= n || s == d.teacher) {
                return Err(Error::config(format!("distill student index {s} is out of range or the teacher")));
            }
            if d.students.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::config("distill students must be strictly increasing"));
            }
            d.loss().validate()?;
            if self.subsamples.is_none() {
                return Err(Error::config("distillation needs a subsample plan"));
            }
        }
        if let Some(p) = &self.subsamples {
            p.check_estimable()?;
        }
        for (i, x) in self.exclusions.iter().enumerate() {
            if x.repeats == 0 {
                return Err(Error::config(format!("exclusions[{i}].repeats must be >= 1")));
            }
            if x.ladder.as_ref().is_some_and(|l| l.is_empty() || l.iter().any(|&e| e >= self.ladder.len())) {
                return Err(Error::config(format!("exclusions[{i}].ladder must name existing entries")));
            }
        }
        if self.subsamples.is_none() && self.exclusions.is_empty() {
            return Err(Error::config("plan has no runs"));
        }
        Ok(())
    }

    /// Checks that also need the dataset.
    pub fn validate_for(&self, data: &LabeledDataset) -> Result<()> {
        self.validate()?;
        if self.dataset != data.fingerprint() {
            return Err(Error::config("dataset does not match the plan's fingerprint"));
        }
        if let Some(p) = &self.subsamples {
            if p.n != data.len() {
                return Err(Error::config(format!("subsample plan is for N = {}, dataset has {}", p.n, data.len())));
            }
        }
        let spec = &self.ladder[0].spec;
        if spec.input_dim != data.feature_dim() || spec.num_classes != data.num_classes() {
            return Err(Error::config("ladder input/class counts do not match the dataset"));
        }
        for (i, x) in self.exclusions.iter().enumerate() {
            if x.ids.iter().any(|&id| id >= data.len()) {
                return Err(Error::config(format!("exclusions[{i}] names an id outside the dataset")));
            }
            if x.ids.len() >= data.len() {
                return Err(Error::config(format!("exclusions[{i}] leaves nothing to train on")));
            }
        }
        Ok(())
    }

    /// Hex sha256 of the canonical JSON form.
    pub fn hash(&self) -> Result<String> {
        Ok(seed::sha256_hex(&canonical_json(self)?))
    }

    /// Every run the plan calls for, sorted by run id, all pending.
    pub fn runs(&self) -> Vec<RunArtifact> {
        let mut runs = Vec::new();
        let mut push = |role: RunRole, ladder_index: usize, loss: LossKind, teacher: Option<String>| {
            let run_id = run_id(role, ladder_index);
            let seed = match role {
                RunRole::Teacher { k } => seed::mix(self.seed, &["teacher", &k.to_string()]),
                _ => seed::mix(self.seed, &[&run_id]),
            };
            runs.push(RunArtifact {
                files: RunFiles::for_run(&run_id),
                run_id,
                role,
                ladder_index,
                loss,
                teacher,
                seed,
                status: RunStatus::Pending,
                attempts: 0,
                error: None,
            });
        };
        if let Some(p) = &self.subsamples {
            for k in 0..p.k {
                for l in 0..self.ladder.len() {
                    push(RunRole::Subsample { k }, l, LossKind::OneHot, None);
                }
                if let Some(d) = &self.distill {
                    let teacher = RunRole::Teacher { k };
                    push(teacher, d.teacher, LossKind::OneHot, None);
                    for &s in &d.students {
                        push(RunRole::Distill { k }, s, LossKind::Distill, Some(run_id(teacher, d.teacher)));
                    }
                }
            }
        }
        for (set, x) in self.exclusions.iter().enumerate() {
            for repeat in 0..x.repeats {
                for l in (0..self.ladder.len()).filter(|&l| x.covers(l)) {
                    push(RunRole::Exclusion { set, repeat }, l, LossKind::OneHot, None);
                }
            }
        }
        runs.sort_by(|a, b| a.run_id.cmp(&b.run_id));
        runs
    }

    /// Example ids a run trains on.
    pub fn training_ids(&self, role: RunRole, n: usize) -> Vec<usize> {
        match role {
            RunRole::Subsample { k } | RunRole::Teacher { k } | RunRole::Distill { k } => {
                self.subsamples.as_ref().expect("subsample roles imply a subsample plan").members(k)
            }
            RunRole::Exclusion { set, .. } => {
                let drop = &self.exclusions[set].ids;
                (0..n).filter(|i| !drop.contains(i)).collect()
            }
        }
    }
}

pub fn run_id(role: RunRole, ladder_index: usize) -> String {
    match role {
        RunRole::Subsample { k } => format!("e{ladder_index:02}-onehot-k{k:04}"),
        RunRole::Teacher { k } => format!("e{ladder_index:02}-teacher-k{k:04}"),
        RunRole::Distill { k } => format!("e{ladder_index:02}-distill-k{k:04}"),
        RunRole::Exclusion { set, repeat } => format!("e{ladder_index:02}-x{set:03}-r{repeat:03}"),
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    plan_hash: String,
    runs: Vec<RunArtifact>,
}

#[derive(Clone, Copy, Debug)]
pub struct ExecOptions {
    pub workers: usize,
    pub resume: bool,
    /// Print one line per finished run to stderr.
    pub progress: bool,
}

impl Default for ExecOptions {
    fn default() -> Self {
        ExecOptions { workers: 1, resume: false, progress: false }
    }
}

/// Read the run table of an artifact directory.
pub fn load_manifest(dir: &Path) -> Result<(String, Vec<RunArtifact>)> {
    let m: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST))?)?;
    Ok((m.plan_hash, m.runs))
}

pub fn load_plan(dir: &Path) -> Result<ExperimentPlan> {
    Ok(serde_json::from_slice(&fs::read(dir.join(PLAN_FILE))?)?)
}

struct Table<'a> {
    dir: &'a Path,
    plan_hash: String,
    runs: Mutex<Vec<RunArtifact>>,
    total: usize,
    done: Mutex<usize>,
    progress: bool,
}

impl Table<'_> {
    fn write(&self, runs: &[RunArtifact]) -> Result<()> {
        let m = Manifest { plan_hash: self.plan_hash.clone(), runs: runs.to_vec() };
        write_atomic(&self.dir.join(MANIFEST), &canonical_json_pretty(&m)?)
    }

    fn record(&self, update: RunArtifact, secs: f64) -> Result<()> {
        let mut runs = self.runs.lock().unwrap();
        let slot = runs.iter_mut().find(|r| r.run_id == update.run_id).expect("run belongs to the table");
        *slot = update;
        if self.progress {
            let mut done = self.done.lock().unwrap();
            *done += 1;
            eprintln!("[{}/{}] {} {:?} ({secs:.1}s)", *done, self.total, slot.run_id, slot.status);
        }
        self.write(&runs)
    }
}

/// Train every pending run of `plan`, writing artifacts under `dir`.
///
/// Artifact bytes depend only on the plan and dataset, never on `workers` or on the order
/// in which runs finish. With `resume`, runs already recorded as finished are kept.
pub fn execute(plan: &ExperimentPlan, data: &LabeledDataset, dir: &Path, opts: &ExecOptions) -> Result<Vec<RunArtifact>> {
    plan.validate_for(data)?;
    let plan_hash = plan.hash()?;
    let mut runs = plan.runs();
    let manifest_path = dir.join(MANIFEST);
    if manifest_path.exists() {
        if !opts.resume {
            return Err(Error::ExistingExperiment(dir.to_path_buf()));
        }
        let (found, previous) = load_manifest(dir)?;
        if found != plan_hash {
            return Err(Error::PlanMismatch { expected: plan_hash, found });
        }
        let previous: BTreeMap<String, RunArtifact> = previous.into_iter().map(|r| (r.run_id.clone(), r)).collect();
        for run in &mut runs {
            if let Some(p) = previous.get(&run.run_id) {
                let kept = p.status == RunStatus::Failed || (p.is_done() && p.files.exist_under(dir));
                if kept {
                    *run = p.clone();
                }
            }
        }
    } else {
        fs::create_dir_all(dir)?;
    }
    write_atomic(&dir.join(PLAN_FILE), &canonical_json_pretty(plan)?)?;

    let pending = runs.iter().filter(|r| r.status == RunStatus::Pending).count();
    let table = Table {
        dir,
        plan_hash,
        runs: Mutex::new(runs.clone()),
        total: pending,
        done: Mutex::new(0),
        progress: opts.progress,
    };
    table.write(&runs)?;

    // teachers have to exist before their students start
    let (first, second): (Vec<&RunArtifact>, Vec<&RunArtifact>) = runs
        .iter()
        .filter(|r| r.status == RunStatus::Pending)
        .partition(|r| r.loss != LossKind::Distill);
    for phase in [first, second] {
        let outcomes = run_indexed(phase.len(), opts.workers, |j| -> Result<()> {
            let start = Instant::now();
            let updated = execute_run(plan, data, dir, phase[j], &table)?;
            table.record(updated, start.elapsed().as_secs_f64())
        });
        outcomes.into_iter().collect::<Result<Vec<()>>>()?;
    }
    let runs = table.runs.into_inner().unwrap();
    Ok(runs)
}

fn execute_run(plan: &ExperimentPlan, data: &LabeledDataset, dir: &Path, run: &RunArtifact, table: &Table) -> Result<RunArtifact> {
    let mut out = run.clone();
    let entry = &plan.ladder[run.ladder_index];
    let (loss, teacher) = match (&run.teacher, &plan.distill) {
        (Some(tid), Some(d)) => {
            let t = table.runs.lock().unwrap().iter().find(|r| &r.run_id == tid).cloned();
            match t {
                Some(t) if t.is_done() => (d.loss(), Some(t.load_model(dir)?)),
                _ => {
                    out.status = RunStatus::Failed;
                    out.error = Some(format!("teacher {tid} did not finish"));
                    return Ok(out);
                }
            }
        }
        _ => (LossSpec::one_hot(), None),
    };
    let ids = plan.training_ids(run.role, data.len());
    let mut last_err = None;
    for attempt in 0..=plan.retries {
        out.attempts = attempt + 1;
        let run_seed = if attempt == 0 { run.seed } else { seed::mix(run.seed, &["retry", &attempt.to_string()]) };
        let spec = entry.spec.with_init_seed(seed::mix(run_seed, &["init"]));
        match train(&spec, &entry.optimizer, &loss, data.view(&ids), teacher.as_ref(), run_seed) {
            Ok(model) => {
                write_run_files(dir, &out.files, &model, data)?;
                out.status = RunStatus::Done;
                out.error = None;
                return Ok(out);
            }
            Err(e @ Error::NonFinite { .. }) => last_err = Some(e.to_string()),
            Err(e) => return Err(e),
        }
    }
    out.status = RunStatus::Failed;
    out.error = last_err;
    Ok(out)
}

fn write_run_files(dir: &Path, files: &RunFiles, model: &TrainedModel, data: &LabeledDataset) -> Result<()> {
    // correctness is judged by the stored single-precision parameters, so a model
    // reloaded from disk always reproduces it
    let (spec, params) = io::decode_params(&io::encode_params(&model.spec, &model.params)?)?;
    let stored = TrainedModel::from_params(spec, params)?;
    write_atomic(&dir.join(&files.trace), &io::encode_trace(&model.trace)?)?;
    write_atomic(&dir.join(&files.params), &io::encode_params(&model.spec, &model.params)?)?;
    write_atomic(&dir.join(&files.correctness), &encode_correctness(&stored.correctness(data)?))?;
    Ok(())
}

/// The runs a subsample-level analysis reads: one per `k` for this ladder entry and loss.
pub fn subsample_runs<'a>(runs: &'a [RunArtifact], ladder_index: usize, loss: LossKind) -> Vec<&'a RunArtifact> {
    let mut out: Vec<&RunArtifact> = runs
        .iter()
        .filter(|r| r.ladder_index == ladder_index && r.loss == loss)
        .filter(|r| matches!(r.role, RunRole::Subsample { .. } | RunRole::Distill { .. }))
        .collect();
    out.sort_by_key(|r| r.role);
    out
}

/// `N x K` correctness of the runs for one ladder entry and loss. Failed runs are masked;
/// pending or missing runs are an error naming them.
pub fn correctness_matrix(
    dir: &Path,
    runs: &[RunArtifact],
    plan: &SubsamplePlan,
    ladder_index: usize,
    loss: LossKind,
) -> Result<CorrectnessMatrix> {
    let selected = subsample_runs(runs, ladder_index, loss);
    if selected.len() != plan.k {
        let have: Vec<usize> = selected.iter().filter_map(|r| role_k(r.role)).collect();
        let missing = (0..plan.k)
            .filter(|k| !have.contains(k))
            .map(|k| {
                let role = if loss == LossKind::Distill { RunRole::Distill { k } } else { RunRole::Subsample { k } };
                run_id(role, ladder_index)
            })
            .collect();
        return Err(Error::MissingArtifacts(missing));
    }
    let unfinished: Vec<String> = selected
        .iter()
        .filter(|r| r.status == RunStatus::Pending || (r.is_done() && !r.files.exist_under(dir)))
        .map(|r| r.run_id.clone())
        .collect();
    if !unfinished.is_empty() {
        return Err(Error::MissingArtifacts(unfinished));
    }
    let columns = selected
        .iter()
        .map(|r| if r.is_done() { r.load_correctness(dir).map(Some) } else { Ok(None) })
        .collect::<Result<Vec<_>>>()?;
    let m = CorrectnessMatrix::from_columns(plan.n, &columns)?;
    if m.usable_count() == 0 {
        return Err(Error::AllMasked);
    }
    Ok(m)
}

fn role_k(role: RunRole) -> Option<usize> {
    match role {
        RunRole::Subsample { k } | RunRole::Teacher { k } | RunRole::Distill { k } => Some(k),
        RunRole::Exclusion { .. } => None,
    }
}

/// Finished exclusion runs of one set and ladder entry, in repeat order.
pub fn exclusion_runs<'a>(runs: &'a [RunArtifact], ladder_index: usize, set: usize) -> Vec<&'a RunArtifact> {
    let mut out: Vec<&RunArtifact> = runs
        .iter()
        .filter(|r| r.ladder_index == ladder_index && matches!(r.role, RunRole::Exclusion { set: s, .. } if s == set))
        .collect();
    out.sort_by_key(|r| r.role);
    out
}
