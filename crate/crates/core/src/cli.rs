//! Command implementations behind the `memladder` binary.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{ExperimentConfig, ReportKind};
use crate::data::LabeledDataset;
use crate::ensemble::{execute, load_manifest, ExecOptions, ExperimentPlan, MANIFEST};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::memscore::{mean_abs_error, write_oracle_csv};
use crate::report::{
    emit_report, oracle_records, write_summary, Experiment, OracleEntrySummary, ReportOptions, ReportWriter, CONFIG_FILE,
    DATASET_FILE, ORACLE_DIR,
};

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Parse { .. } | Error::EmptyDataset(_) => 2,
        Error::PlanMismatch { .. } | Error::ExistingExperiment(_) => 3,
        Error::MissingArtifacts(_) | Error::AllMasked => 4,
        Error::TooLarge { .. } => 5,
        _ => 1,
    }
}

/// Parse, validate and build everything a run needs, without touching the output dir.
pub fn load_experiment(config: &Path) -> Result<(ExperimentConfig, LabeledDataset, ExperimentPlan)> {
    let cfg = ExperimentConfig::load(config)?;
    cfg.validate()?;
    let data = cfg.build_dataset()?;
    let plan = cfg.build_plan(&data)?;
    Ok((cfg, data, plan))
}

/// Refuse to clobber an existing experiment, then write the config and dataset.
fn prepare(dir: &Path, cfg: &ExperimentConfig, data: &LabeledDataset, plan: &ExperimentPlan, resume: bool) -> Result<()> {
    if dir.join(MANIFEST).exists() {
        if !resume {
            return Err(Error::ExistingExperiment(dir.to_path_buf()));
        }
        let (found, _) = load_manifest(dir)?;
        let expected = plan.hash()?;
        if found != expected {
            return Err(Error::PlanMismatch { expected, found });
        }
    }
    fs::create_dir_all(dir)?;
    write_atomic(&dir.join(CONFIG_FILE), &cfg.canonical()?)?;
    data.write(&dir.join(DATASET_FILE))?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub failed_runs: Vec<String>,
    pub reports: Vec<PathBuf>,
}

pub fn cmd_run(config: &Path, out: &Path, workers: usize, resume: bool, progress: bool) -> Result<RunOutcome> {
    let (cfg, data, plan) = load_experiment(config)?;
    prepare(out, &cfg, &data, &plan, resume)?;
    execute(&plan, &data, out, &ExecOptions { workers, resume, progress })?;
    let exp = Experiment::open(out)?;
    let mut w = ReportWriter::new(out, &exp.plan_hash)?;
    let failed_runs: Vec<String> = exp.failed_runs().iter().map(|r| r.run_id.clone()).collect();
    let mut kinds = cfg.reports.kinds.clone();
    kinds.sort();
    kinds.dedup();
    for kind in kinds {
        emit_report(&exp, kind, &ReportOptions::default(), &mut w)?;
    }
    write_summary(&exp)?;
    Ok(RunOutcome { failed_runs, reports: w.written })
}

pub fn cmd_report(out: &Path, kinds: &[ReportKind], opts: &ReportOptions) -> Result<Vec<PathBuf>> {
    let exp = Experiment::open(out)?;
    let mut w = ReportWriter::new(out, &exp.plan_hash)?;
    for &kind in kinds {
        emit_report(&exp, kind, opts, &mut w)?;
    }
    write_summary(&exp)?;
    Ok(w.written)
}

/// Leave-one-out retraining under `<out>/oracle`, compared against the estimator of the
/// main experiment in `out` when one is present for the same dataset.
pub fn cmd_oracle(config: &Path, out: &Path, workers: usize, resume: bool, progress: bool) -> Result<Vec<PathBuf>> {
    let cfg = ExperimentConfig::load(config)?;
    cfg.validate()?;
    let data = cfg.build_dataset()?;
    let plan = cfg.build_oracle_plan(&data)?;
    let dir = out.join(ORACLE_DIR);
    prepare(&dir, &cfg, &data, &plan, resume)?;
    execute(&plan, &data, &dir, &ExecOptions { workers, resume, progress })?;
    let exp = Experiment::open(&dir)?;
    let main = Experiment::open(out).ok().filter(|m| m.plan.dataset == exp.plan.dataset && m.plan.subsamples.is_some());
    let repeats = cfg.oracle.as_ref().map_or(0, |o| o.repeats);
    let mut w = ReportWriter::new(&dir, &exp.plan_hash)?;
    let mut summaries = Vec::new();
    for l in cfg.oracle_ladder() {
        let records = oracle_records(&exp, l)?;
        w.emit_csv(&format!("oracle-e{l:02}.csv"), |b| write_oracle_csv(b, &records))?;
        let estimator_mae = match &main {
            Some(m) => Some(mean_abs_error(&m.mem_records(l, crate::nn::LossKind::OneHot)?, &records)?),
            None => None,
        };
        let mean_half_width = records.iter().map(|r| r.half_width).sum::<f64>() / records.len() as f64;
        summaries.push(OracleEntrySummary { ladder_index: l, targets: records.len(), repeats, mean_half_width, estimator_mae });
    }
    w.emit_json("oracle-summary.json", &summaries)?;
    write_summary(&exp)?;
    Ok(w.written)
}

/// One-line description of a valid config.
pub fn cmd_validate(config: &Path) -> Result<String> {
    let (cfg, data, plan) = load_experiment(config)?;
    let mut line = format!(
        "ok: N = {}, {} ladder entries, {} runs, plan {}",
        data.len(),
        plan.ladder.len(),
        plan.runs().len(),
        &plan.hash()?[..12]
    );
    if cfg.oracle.is_some() {
        match cfg.build_oracle_plan(&data) {
            Ok(o) => line.push_str(&format!(", oracle {} runs", o.runs().len())),
            Err(e @ Error::TooLarge { .. }) => line.push_str(&format!(", oracle unavailable ({e})")),
            Err(e) => return Err(e),
        }
    }
    Ok(line)
}
