//! JSON experiment configuration and its translation into an [`ExperimentPlan`].

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{generate_toy2d, generate_two_gaussians, load_csv_with_classes, LabeledDataset, Toy2DParams, TwoGaussiansParams};
use crate::ensemble::{draw_subsamples, subsample_size, DistillPlan, ExclusionSet, ExperimentPlan, LadderEntry};
use crate::error::{Error, Result};
use crate::fsutil::canonical_json_pretty;
use crate::nn::{ModelSpec, OptimizerConfig};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Toy2d(Toy2DParams),
    TwoGaussians(TwoGaussiansParams),
    /// Header `id,label,f0,...`; a relative path is resolved against the config file.
    Csv { path: PathBuf, num_classes: Option<usize> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub source: DataSource,
    #[serde(default)]
    pub noise_fraction: f64,
    #[serde(default)]
    pub noise_seed: u64,
    /// Ids of clean examples to copy once each, after noise injection.
    #[serde(default)]
    pub duplicates: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsampleConfig {
    /// Number of subsamples; 0 skips the subsample ensemble.
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_m_fraction")]
    pub m_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_k() -> usize {
    400
}

fn default_m_fraction() -> f64 {
    0.7
}

impl Default for SubsampleConfig {
    fn default() -> Self {
        SubsampleConfig { k: default_k(), m_fraction: default_m_fraction(), seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderEntryConfig {
    pub depth: usize,
    pub width: usize,
    /// Replaces the ladder-wide optimizer for this entry.
    #[serde(default)]
    pub optimizer: Option<OptimizerConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderConfig {
    pub entries: Vec<LadderEntryConfig>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillConfig {
    pub teacher: usize,
    /// Every entry below the teacher when absent.
    #[serde(default)]
    pub students: Option<Vec<usize>>,
    #[serde(default = "default_weight")]
    pub weight: f64,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
}

fn default_weight() -> f64 {
    1.0
}

fn default_temperature() -> f64 {
    3.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Mem,
    Cprox,
    Depth,
    Trajectory,
    Distill,
    Robustness,
}

impl ReportKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ReportKind::Mem => "mem",
            ReportKind::Cprox => "cprox",
            ReportKind::Depth => "depth",
            ReportKind::Trajectory => "trajectory",
            ReportKind::Distill => "distill",
            ReportKind::Robustness => "robustness",
        }
    }

    pub fn parse(s: &str) -> Result<ReportKind> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::config(format!("unknown report kind {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessConfig {
    pub example: usize,
    #[serde(default = "default_sigmas")]
    pub sigmas: Vec<f64>,
    #[serde(default = "default_n_per_sigma")]
    pub n_per_sigma: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_sigmas() -> Vec<f64> {
    vec![0.05, 0.1, 0.2, 0.4]
}

fn default_n_per_sigma() -> usize {
    500
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportsConfig {
    /// Reports written at the end of `run`.
    #[serde(default = "default_kinds")]
    pub kinds: Vec<ReportKind>,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub probe_seed: u64,
    #[serde(default)]
    pub robustness: Option<RobustnessConfig>,
}

fn default_kinds() -> Vec<ReportKind> {
    vec![ReportKind::Mem]
}

fn default_alphas() -> Vec<f64> {
    vec![0.05, 0.10]
}

fn default_tau() -> f64 {
    crate::distill::DEFAULT_TAU
}

impl Default for ReportsConfig {
    fn default() -> Self {
        ReportsConfig { kinds: default_kinds(), alphas: default_alphas(), tau: default_tau(), probe_seed: 0, robustness: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetSpec {
    /// `"all"`, `"noise"` or `"outliers"`.
    Named(String),
    Ids(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleBlock {
    #[serde(default = "default_targets")]
    pub targets: TargetSpec,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_max_n")]
    pub max_n: usize,
    /// Ladder entries to score; the largest when absent.
    #[serde(default)]
    pub ladder: Option<Vec<usize>>,
}

fn default_targets() -> TargetSpec {
    TargetSpec::Named("all".into())
}

fn default_repeats() -> usize {
    20
}

fn default_max_n() -> usize {
    512
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub subsample: SubsampleConfig,
    pub ladder: LadderConfig,
    #[serde(default)]
    pub distill: Option<DistillConfig>,
    #[serde(default)]
    pub exclusions: Vec<ExclusionSet>,
    #[serde(default)]
    pub reports: ReportsConfig,
    #[serde(default)]
    pub oracle: Option<OracleBlock>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_retries")]
    pub retries: usize,
}

fn default_retries() -> usize {
    1
}

fn field(path: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{path}: {msg}"))
}

impl ExperimentConfig {
    /// Parse JSON; errors name the offending field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            field(if path.is_empty() { "<root>" } else { &path }, e.into_inner())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let DataSource::Csv { path: p, .. } = &mut cfg.dataset.source {
            if p.is_relative() {
                *p = path.parent().unwrap_or(Path::new(".")).join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Sorted-key JSON with every default filled in.
    pub fn canonical(&self) -> Result<Vec<u8>> {
        canonical_json_pretty(self)
    }

    /// Structural checks that do not need the dataset.
    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        if !(0.0..1.0).contains(&d.noise_fraction) {
            return Err(field("dataset.noise_fraction", "must lie in [0, 1)"));
        }
        match &d.source {
            DataSource::Toy2d(p) => p.validate().map_err(|e| field("dataset.source", e))?,
            DataSource::TwoGaussians(p) if p.n_per_class == 0 || p.dim == 0 => {
                return Err(field("dataset.source", "two_gaussians needs n_per_class and dim >= 1"));
            }
            _ => {}
        }
        let s = &self.subsample;
        if !(s.m_fraction > 0.0 && s.m_fraction <= 1.0) {
            return Err(field("subsample.m_fraction", "must lie in (0, 1]"));
        }
        if self.ladder.entries.is_empty() {
            return Err(field("ladder.entries", "must not be empty"));
        }
        self.ladder.optimizer.validate().map_err(|e| field("ladder.optimizer", e))?;
        for (i, e) in self.ladder.entries.iter().enumerate() {
            if e.depth > 0 && e.width == 0 {
                return Err(field(&format!("ladder.entries[{i}].width"), "must be >= 1"));
            }
            if let Some(o) = &e.optimizer {
                o.validate().map_err(|err| field(&format!("ladder.entries[{i}].optimizer"), err))?;
            }
        }
        let n = self.ladder.entries.len();
        if let Some(dc) = &self.distill {
            if dc.teacher >= n {
                return Err(field("distill.teacher", format!("index {} out of range for {n} entries", dc.teacher)));
            }
            if self.subsample.k == 0 {
                return Err(field("distill", "needs a subsample ensemble (subsample.k >= 1)"));
            }
        }
        for r in &self.reports.alphas {
            if !(*r >= 0.0) {
                return Err(field("reports.alphas", "must be nonnegative"));
            }
        }
        if !(self.reports.tau >= 0.0) {
            return Err(field("reports.tau", "must be nonnegative"));
        }
        if let Some(o) = &self.oracle {
            if o.repeats == 0 {
                return Err(field("oracle.repeats", "must be >= 1"));
            }
            if let TargetSpec::Named(name) = &o.targets {
                if !["all", "noise", "outliers"].contains(&name.as_str()) {
                    return Err(field("oracle.targets", format!("unknown target set {name:?}")));
                }
            }
            if o.ladder.as_ref().is_some_and(|l| l.is_empty() || l.iter().any(|&e| e >= n)) {
                return Err(field("oracle.ladder", "must name existing entries"));
            }
        }
        Ok(())
    }

    pub fn build_dataset(&self) -> Result<LabeledDataset> {
        let d = &self.dataset;
        let base = match &d.source {
            DataSource::Toy2d(p) => generate_toy2d(p)?,
            DataSource::TwoGaussians(p) => generate_two_gaussians(p)?,
            DataSource::Csv { path, num_classes } => load_csv_with_classes(path, *num_classes)?,
        };
        let noisy = if d.noise_fraction > 0.0 { base.inject_label_noise(d.noise_fraction, d.noise_seed)? } else { base };
        if let Some(&id) = d.duplicates.iter().find(|&&id| id < noisy.len() && noisy.noise_flag(id)) {
            return Err(field("dataset.duplicates", format!("example {id} is noise-flagged; only clean examples are duplicated")));
        }
        noisy.with_duplicates(&d.duplicates).map_err(|e| field("dataset.duplicates", e))
    }

    fn ladder_entries(&self, data: &LabeledDataset) -> Vec<LadderEntry> {
        self.ladder
            .entries
            .iter()
            .map(|e| LadderEntry {
                spec: ModelSpec::uniform(e.depth, e.width, data.feature_dim(), data.num_classes(), 0),
                optimizer: e.optimizer.clone().unwrap_or_else(|| self.ladder.optimizer.clone()),
            })
            .collect()
    }

    /// The main experiment: subsample ensemble, distillation and exclusion studies.
    pub fn build_plan(&self, data: &LabeledDataset) -> Result<ExperimentPlan> {
        self.validate()?;
        let n = data.len();
        let subsamples = if self.subsample.k == 0 {
            None
        } else {
            let m = subsample_size(n, self.subsample.m_fraction);
            if m >= n {
                return Err(field("subsample.m_fraction", format!("gives M = N = {n}, leaving every out-of-sample set empty")));
            }
            Some(draw_subsamples(n, m, self.subsample.k, self.subsample.seed).map_err(|e| field("subsample", e))?)
        };
        let distill = self.distill.as_ref().map(|d| DistillPlan {
            teacher: d.teacher,
            students: d.students.clone().unwrap_or_else(|| (0..d.teacher).collect()),
            weight: d.weight,
            temperature: d.temperature,
        });
        let plan = ExperimentPlan {
            dataset: data.fingerprint(),
            seed: self.seed,
            subsamples,
            ladder: self.ladder_entries(data),
            distill,
            exclusions: self.exclusions.clone(),
            retries: self.retries,
        };
        plan.validate_for(data)?;
        Ok(plan)
    }

    /// Oracle target ids resolved against the dataset.
    pub fn oracle_targets(&self, data: &LabeledDataset) -> Result<Vec<usize>> {
        let o = self.oracle.as_ref().ok_or_else(|| field("oracle", "block is required for the oracle command"))?;
        let ids = match &o.targets {
            TargetSpec::Ids(ids) => ids.clone(),
            TargetSpec::Named(name) => match name.as_str() {
                "all" => data.all_ids(),
                "noise" => (0..data.len()).filter(|&i| data.noise_flag(i)).collect(),
                "outliers" => data.meta.outlier_ids.clone(),
                other => return Err(field("oracle.targets", format!("unknown target set {other:?}"))),
            },
        };
        if let Some(id) = ids.iter().find(|&&id| id >= data.len()) {
            return Err(field("oracle.targets", format!("id {id} outside the dataset")));
        }
        if ids.is_empty() {
            return Err(field("oracle.targets", "selects no examples"));
        }
        Ok(ids)
    }

    pub fn oracle_ladder(&self) -> Vec<usize> {
        let largest = self.ladder.entries.len() - 1;
        self.oracle.as_ref().and_then(|o| o.ladder.clone()).unwrap_or_else(|| vec![largest])
    }

    /// Leave-one-out retraining: one full-data condition plus one per target, each
    /// repeated with independent seeds.
    pub fn build_oracle_plan(&self, data: &LabeledDataset) -> Result<ExperimentPlan> {
        self.validate()?;
        let o = self.oracle.as_ref().ok_or_else(|| field("oracle", "block is required for the oracle command"))?;
        if data.len() > o.max_n {
            return Err(Error::TooLarge { n: data.len(), max_n: o.max_n });
        }
        let ladder = Some(self.oracle_ladder());
        let mut exclusions = vec![ExclusionSet { ids: vec![], repeats: o.repeats, ladder: ladder.clone() }];
        for t in self.oracle_targets(data)? {
            exclusions.push(ExclusionSet { ids: vec![t], repeats: o.repeats, ladder: ladder.clone() });
        }
        let plan = ExperimentPlan {
            dataset: data.fingerprint(),
            seed: seed::mix(self.seed, &["oracle"]),
            subsamples: None,
            ladder: self.ladder_entries(data),
            distill: None,
            exclusions,
            retries: self.retries,
        };
        plan.validate_for(data)?;
        Ok(plan)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "dataset": { "source": { "kind": "two_gaussians", "n_per_class": 10 } },
        "subsample": { "k": 4 },
        "ladder": { "entries": [ { "depth": 1, "width": 4 }, { "depth": 1, "width": 8 } ] }
    }"#;

    #[test]
    fn defaults_follow_the_protocol() {
        let c = ExperimentConfig::from_json(r#"{"dataset":{"source":{"kind":"toy2d"}},"ladder":{"entries":[{"depth":1,"width":4}]}}"#).unwrap();
        assert_eq!((c.subsample.k, c.subsample.m_fraction), (400, 0.7));
        assert_eq!(c.reports.alphas, vec![0.05, 0.10]);
        assert_eq!(c.reports.tau, 0.1);
    }

    #[test]
    fn canonical_form_is_a_fixed_point() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        let once = c.canonical().unwrap();
        let again = ExperimentConfig::from_json(std::str::from_utf8(&once).unwrap()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.canonical().unwrap(), once);
    }

    #[test]
    fn errors_carry_field_paths() {
        let bad = MINIMAL.replace(r#""width": 8"#, r#""width": "wide""#);
        let msg = ExperimentConfig::from_json(&bad).unwrap_err().to_string();
        assert!(msg.contains("ladder.entries[1].width"), "{msg}");
        let unknown = MINIMAL.replace(r#""k": 4"#, r#""k": 4, "kk": 1"#);
        assert!(ExperimentConfig::from_json(&unknown).unwrap_err().to_string().contains("subsample"));
        let bad_m = MINIMAL.replace(r#""k": 4"#, r#""k": 4, "m_fraction": 1.5"#);
        let c = ExperimentConfig::from_json(&bad_m).unwrap();
        assert!(c.validate().unwrap_err().to_string().contains("subsample.m_fraction"));
    }

    #[test]
    fn full_subsample_fraction_is_rejected_before_training() {
        let c = ExperimentConfig::from_json(&MINIMAL.replace(r#""k": 4"#, r#""k": 4, "m_fraction": 1.0"#)).unwrap();
        let data = c.build_dataset().unwrap();
        let err = c.build_plan(&data).unwrap_err();
        assert!(matches!(err, Error::Config(m) if m.contains("M = N")));
    }

    #[test]
    fn plan_reflects_config() {
        let mut c = ExperimentConfig::from_json(MINIMAL).unwrap();
        c.dataset.noise_fraction = 0.1;
        c.dataset.duplicates = vec![];
        c.distill = Some(DistillConfig { teacher: 1, students: None, weight: 1.0, temperature: 3.0 });
        let data = c.build_dataset().unwrap();
        assert_eq!(data.noise_flags().iter().filter(|&&f| f).count(), 2);
        let plan = c.build_plan(&data).unwrap();
        assert_eq!(plan.subsamples.as_ref().unwrap().m, 14);
        assert_eq!(plan.distill.as_ref().unwrap().students, vec![0]);
        assert_eq!(plan.hash().unwrap(), c.build_plan(&data).unwrap().hash().unwrap());
    }

    #[test]
    fn noisy_duplicates_are_refused() {
        let mut c = ExperimentConfig::from_json(MINIMAL).unwrap();
        c.dataset.noise_fraction = 0.5;
        let data = c.build_dataset().unwrap();
        let noisy = (0..data.len()).find(|&i| data.noise_flag(i)).unwrap();
        c.dataset.duplicates = vec![noisy];
        assert!(c.build_dataset().is_err());
    }

    #[test]
    fn oracle_plan_guards_size() {
        let mut c = ExperimentConfig::from_json(MINIMAL).unwrap();
        c.oracle = Some(OracleBlock { targets: TargetSpec::Ids(vec![0, 3]), repeats: 2, max_n: 10, ladder: None });
        let data = c.build_dataset().unwrap();
        assert!(matches!(c.build_oracle_plan(&data), Err(Error::TooLarge { n: 20, max_n: 10 })));
        c.oracle.as_mut().unwrap().max_n = 64;
        let plan = c.build_oracle_plan(&data).unwrap();
        assert_eq!(plan.exclusions.len(), 3);
        // 3 conditions x 2 repeats, largest entry only
        assert_eq!(plan.runs().len(), 6);
    }
}
