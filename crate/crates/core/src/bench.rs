//! Reference benchmarks small enough for a desk machine.
//!
//! `tiny` is a 64-point two-Gaussian problem with planted label noise and duplicates, sized
//! for brute-force leave-one-out. `toy_noisy` and `toy_clean` are the ring-and-disc toy
//! with and without label noise, over a ladder of eight dense networks.

use crate::config::{
    DataSource, DatasetConfig, DistillConfig, ExperimentConfig, LadderConfig, LadderEntryConfig, OracleBlock, ReportKind,
    ReportsConfig, RobustnessConfig, SubsampleConfig, TargetSpec,
};
use crate::data::{Toy2DParams, TwoGaussiansParams};
use crate::ensemble::ExclusionSet;
use crate::nn::{OptimizerConfig, Schedule};

/// Ring-and-disc outlier probed by the oracle and robustness studies.
pub const TOY_OUTLIER: usize = 404;
pub const TOY_SEED: u64 = 10;

fn sgd(epochs: usize, trace_every: usize) -> OptimizerConfig {
    OptimizerConfig {
        peak_lr: 0.05,
        warmup_epochs: 5,
        schedule: Schedule::Cosine,
        momentum: 0.9,
        nesterov: true,
        weight_decay: 0.0,
        batch_size: 32,
        epochs,
        trace_every,
    }
}

fn entries(shapes: &[(usize, usize)]) -> Vec<LadderEntryConfig> {
    shapes.iter().map(|&(depth, width)| LadderEntryConfig { depth, width, optimizer: None }).collect()
}

/// 30 points per class, 6 flipped labels, 4 duplicated clean points: N = 64.
pub fn tiny() -> ExperimentConfig {
    ExperimentConfig {
        dataset: DatasetConfig {
            source: DataSource::TwoGaussians(TwoGaussiansParams { n_per_class: 30, dim: 2, separation: 4.0, std: 1.0, seed: 1 }),
            noise_fraction: 0.1,
            noise_seed: 2,
            duplicates: vec![0, 15, 30, 45],
        },
        subsample: SubsampleConfig { k: 400, m_fraction: 0.7, seed: 3 },
        ladder: LadderConfig { entries: entries(&[(1, 4), (2, 32)]), optimizer: sgd(1000, 100) },
        distill: None,
        exclusions: vec![],
        reports: ReportsConfig { kinds: vec![ReportKind::Mem], ..ReportsConfig::default() },
        oracle: Some(OracleBlock { targets: TargetSpec::Named("all".into()), repeats: 20, max_n: 512, ladder: None }),
        seed: 4,
        retries: 1,
    }
}

const TOY_LADDER: [(usize, usize); 8] = [(2, 8), (3, 8), (2, 16), (3, 16), (2, 32), (3, 32), (2, 64), (3, 64)];

/// Outliers sit in a small clump at the centre of the disc.
const TOY_OUTLIER_RADIUS: f64 = 0.15;

fn toy_dataset(noise_fraction: f64) -> DatasetConfig {
    DatasetConfig {
        source: DataSource::Toy2d(Toy2DParams { seed: TOY_SEED, outlier_radius_frac: TOY_OUTLIER_RADIUS, ..Toy2DParams::default() }),
        noise_fraction,
        noise_seed: 11,
        duplicates: vec![],
    }
}

fn toy_ladder() -> LadderConfig {
    LadderConfig { entries: entries(&TOY_LADDER), optimizer: sgd(2000, 50) }
}

/// Toy with 10% label noise: K = 200 subsamples per entry, the largest entry distilled into
/// the second smallest, and full-data runs of the largest entry for prediction depth.
pub fn toy_noisy() -> ExperimentConfig {
    let largest = TOY_LADDER.len() - 1;
    ExperimentConfig {
        dataset: toy_dataset(0.1),
        subsample: SubsampleConfig { k: 200, m_fraction: 0.7, seed: 12 },
        ladder: toy_ladder(),
        distill: Some(DistillConfig { teacher: largest, students: Some(vec![1]), weight: 1.0, temperature: 3.0 }),
        exclusions: vec![ExclusionSet { ids: vec![], repeats: 3, ladder: Some(vec![largest]) }],
        reports: ReportsConfig {
            kinds: vec![ReportKind::Mem, ReportKind::Cprox, ReportKind::Depth, ReportKind::Trajectory, ReportKind::Distill],
            ..ReportsConfig::default()
        },
        oracle: None,
        seed: 13,
        retries: 1,
    }
}

/// Clean toy, outliers included: leave-one-out on the designated outlier at the two ends
/// of the ladder, whose full-data runs also feed the corruption-robustness curves.
pub fn toy_clean() -> ExperimentConfig {
    let largest = TOY_LADDER.len() - 1;
    ExperimentConfig {
        dataset: toy_dataset(0.0),
        subsample: SubsampleConfig { k: 0, m_fraction: 0.7, seed: 0 },
        ladder: toy_ladder(),
        distill: None,
        exclusions: vec![],
        reports: ReportsConfig {
            kinds: vec![],
            robustness: Some(RobustnessConfig {
                example: TOY_OUTLIER,
                sigmas: vec![0.05, 0.1, 0.2, 0.4],
                n_per_sigma: 500,
                seed: 14,
            }),
            ..ReportsConfig::default()
        },
        oracle: Some(OracleBlock { targets: TargetSpec::Ids(vec![TOY_OUTLIER]), repeats: 20, max_n: 512, ladder: Some(vec![0, largest]) }),
        seed: 15,
        retries: 1,
    }
}

/// Every recipe with its file stem.
pub fn all() -> Vec<(&'static str, ExperimentConfig)> {
    vec![("tiny", tiny()), ("toy_noisy", toy_noisy()), ("toy_clean", toy_clean())]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recipes_build() {
        for (name, cfg) in all() {
            cfg.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
            let data = cfg.build_dataset().unwrap();
            if cfg.subsample.k > 0 {
                cfg.build_plan(&data).unwrap();
            }
            if cfg.oracle.is_some() {
                cfg.build_oracle_plan(&data).unwrap();
            }
        }
    }

    #[test]
    fn tiny_has_64_points() {
        let data = tiny().build_dataset().unwrap();
        assert_eq!(data.len(), 64);
        assert_eq!(data.noise_flags().iter().filter(|&&f| f).count(), 6);
        assert_eq!(data.duplicated_ids().len(), 8);
    }

    #[test]
    fn toy_outlier_is_planted() {
        let data = toy_clean().build_dataset().unwrap();
        assert_eq!(data.len(), 405);
        assert!(data.meta.outlier_ids.contains(&TOY_OUTLIER));
        let noisy = toy_noisy().build_dataset().unwrap();
        assert_eq!(noisy.meta.original_labels.len(), 40);
    }

    #[test]
    fn shipped_configs_match() {
        let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        for (name, cfg) in all() {
            let path = dir.join(format!("{name}.json"));
            if std::env::var_os("UPDATE_CONFIGS").is_some() {
                std::fs::create_dir_all(&dir).unwrap();
                std::fs::write(&path, cfg.canonical().unwrap()).unwrap();
            }
            let text = std::fs::read_to_string(&path).unwrap();
            assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg, "{name}.json is stale");
        }
    }
}
