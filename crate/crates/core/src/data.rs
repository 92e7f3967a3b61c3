//! Labelled datasets, synthetic generators and CSV persistence.
//!
//! Example ids are positional: the example at index `i` has id `i`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Provenance carried alongside a dataset and persisted in its JSON sidecar.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    /// Original label of every example whose label was flipped by noise injection.
    #[serde(default)]
    pub original_labels: BTreeMap<usize, u32>,
    /// Opposite-class points planted by the toy generator.
    #[serde(default)]
    pub outlier_ids: Vec<usize>,
    /// `(copy, source)` pairs of planted duplicates.
    #[serde(default)]
    pub duplicates: Vec<(usize, usize)>,
    #[serde(default)]
    pub generator: Option<serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    features: Vec<f32>,
    labels: Vec<u32>,
    noise: Vec<bool>,
    num_classes: usize,
    feature_dim: usize,
    pub meta: DatasetMeta,
}

/// A subset of a dataset selected by example id.
#[derive(Clone, Copy, Debug)]
pub struct DataView<'a> {
    pub data: &'a LabeledDataset,
    pub indices: &'a [usize],
}

impl LabeledDataset {
    pub fn new(features: Vec<f32>, labels: Vec<u32>, num_classes: usize, feature_dim: usize) -> Result<Self> {
        let noise = vec![false; labels.len()];
        Self::with_flags(features, labels, noise, num_classes, feature_dim)
    }

    pub fn with_flags(
        features: Vec<f32>,
        labels: Vec<u32>,
        noise: Vec<bool>,
        num_classes: usize,
        feature_dim: usize,
    ) -> Result<Self> {
        if feature_dim == 0 || num_classes == 0 {
            return Err(Error::config("feature_dim and num_classes must be >= 1"));
        }
        if features.len() != labels.len() * feature_dim || noise.len() != labels.len() {
            return Err(Error::config("features, labels and flags disagree on N"));
        }
        if let Some(i) = labels.iter().position(|&y| y as usize >= num_classes) {
            return Err(Error::config(format!("example {i}: label {} >= num_classes {num_classes}", labels[i])));
        }
        Ok(LabeledDataset { features, labels, noise, num_classes, feature_dim, meta: DatasetMeta::default() })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn features(&self, id: usize) -> &[f32] {
        &self.features[id * self.feature_dim..(id + 1) * self.feature_dim]
    }

    pub fn label(&self, id: usize) -> usize {
        self.labels[id] as usize
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn noise_flag(&self, id: usize) -> bool {
        self.noise[id]
    }

    pub fn noise_flags(&self) -> &[bool] {
        &self.noise
    }

    pub fn all_ids(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }

    pub fn view<'a>(&'a self, indices: &'a [usize]) -> DataView<'a> {
        DataView { data: self, indices }
    }

    /// Feature matrix as `N x d` doubles, the layout the network consumes.
    pub fn features_f64(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.len(), self.feature_dim), |(i, j)| {
            self.features[i * self.feature_dim + j] as f64
        })
    }

    /// Content hash over shape, features, labels and noise flags.
    pub fn fingerprint(&self) -> String {
        let mut bytes = Vec::with_capacity(16 + self.features.len() * 4 + self.labels.len() * 5);
        bytes.extend((self.num_classes as u64).to_le_bytes());
        bytes.extend((self.feature_dim as u64).to_le_bytes());
        bytes.extend(self.features.iter().flat_map(|f| f.to_le_bytes()));
        bytes.extend(self.labels.iter().flat_map(|l| l.to_le_bytes()));
        bytes.extend(self.noise.iter().map(|&b| b as u8));
        seed::sha256_hex(&bytes)
    }

    /// Relabel `floor(fraction * N)` uniformly chosen clean examples with a label drawn
    /// uniformly from the other classes, flagging them as noise.
    pub fn inject_label_noise(&self, fraction: f64, seed: u64) -> Result<LabeledDataset> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::config("noise fraction must lie in [0, 1]"));
        }
        if self.num_classes < 2 {
            return Err(Error::config("label noise needs at least two classes"));
        }
        let count = (fraction * self.len() as f64).floor() as usize;
        let candidates: Vec<usize> = (0..self.len()).filter(|&i| !self.noise[i]).collect();
        if count > candidates.len() {
            return Err(Error::config("not enough clean examples to flip"));
        }
        let mut out = self.clone();
        let mut rng = seed::rng(seed);
        let mut chosen: Vec<usize> = sample(&mut rng, candidates.len(), count).into_iter().map(|j| candidates[j]).collect();
        chosen.sort_unstable();
        for id in chosen {
            let orig = out.labels[id];
            let mut new = rng.random_range(0..self.num_classes as u32 - 1);
            if new >= orig {
                new += 1;
            }
            out.labels[id] = new;
            out.noise[id] = true;
            out.meta.original_labels.insert(id, orig);
        }
        Ok(out)
    }

    /// Append exact copies of `sources` under fresh ids at the end of the dataset.
    pub fn with_duplicates(&self, sources: &[usize]) -> Result<LabeledDataset> {
        let mut out = self.clone();
        for &src in sources {
            if src >= self.len() {
                return Err(Error::config(format!("duplicate source {src} out of range")));
            }
            let copy = out.len();
            out.features.extend_from_slice(self.features(src));
            out.labels.push(self.labels[src]);
            out.noise.push(self.noise[src]);
            out.meta.duplicates.push((copy, src));
        }
        Ok(out)
    }

    /// Ids that have a planted twin (both the source and the copy).
    pub fn duplicated_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.meta.duplicates.iter().flat_map(|&(a, b)| [a, b]).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Write `id,label,f0,...` CSV plus a `<path>.meta.json` sidecar.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["id".to_string(), "label".to_string()];
        header.extend((0..self.feature_dim).map(|j| format!("f{j}")));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![i.to_string(), self.labels[i].to_string()];
            rec.extend(self.features(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        let side = Sidecar {
            num_classes: self.num_classes,
            noise_ids: (0..self.len()).filter(|&i| self.noise[i]).collect(),
            meta: self.meta.clone(),
        };
        fs::write(sidecar_path(path), serde_json::to_vec_pretty(&side)?)?;
        Ok(())
    }

    /// Read a CSV and, when present, its sidecar (restoring noise flags and metadata).
    pub fn read(path: &Path) -> Result<LabeledDataset> {
        let side_path = sidecar_path(path);
        if !side_path.exists() {
            return load_csv(path);
        }
        let side: Sidecar = serde_json::from_slice(&fs::read(&side_path)?)?;
        let mut ds = load_csv_with_classes(path, Some(side.num_classes))?;
        for id in side.noise_ids {
            if id >= ds.len() {
                return Err(Error::config(format!("sidecar noise id {id} out of range")));
            }
            ds.noise[id] = true;
        }
        ds.meta = side.meta;
        Ok(ds)
    }
}

impl<'a> DataView<'a> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    num_classes: usize,
    noise_ids: Vec<usize>,
    meta: DatasetMeta,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Parse a `id,label,f0,...,f{d-1}` CSV. Noise flags are all false; the class count is
/// inferred as the largest label plus one.
pub fn load_csv(path: &Path) -> Result<LabeledDataset> {
    load_csv_with_classes(path, None)
}

pub fn load_csv_with_classes(path: &Path, num_classes: Option<usize>) -> Result<LabeledDataset> {
    let perr = |row: usize, msg: String| Error::Parse { path: path.to_path_buf(), row, msg };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_path(path)?;
    let header = rdr.headers()?.clone();
    if header.len() < 3 || &header[0] != "id" || &header[1] != "label" {
        return Err(perr(1, "header must be id,label,f0,...".into()));
    }
    let dim = header.len() - 2;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        // header is row 1
        let row = r + 2;
        let rec = rec?;
        if rec.len() != dim + 2 {
            return Err(perr(row, format!("expected {} features, found {}", dim, rec.len().saturating_sub(2))));
        }
        let id: usize = rec[0].trim().parse().map_err(|_| perr(row, format!("bad id {:?}", &rec[0])))?;
        if id != labels.len() {
            return Err(perr(row, format!("ids must be 0..N-1 in order, found {id}")));
        }
        let label: u32 = rec[1]
            .trim()
            .parse()
            .map_err(|_| perr(row, format!("label out of range: {:?}", &rec[1])))?;
        if let Some(c) = num_classes {
            if label as usize >= c {
                return Err(perr(row, format!("label out of range: {label} >= {c}")));
            }
        }
        for j in 0..dim {
            let v: f32 = rec[j + 2]
                .trim()
                .parse()
                .map_err(|_| perr(row, format!("non-numeric feature f{j}: {:?}", &rec[j + 2])))?;
            features.push(v);
        }
        labels.push(label);
    }
    if labels.len() < 2 {
        return Err(Error::EmptyDataset(format!("{}: need at least 2 examples, found {}", path.display(), labels.len())));
    }
    let classes = num_classes.unwrap_or_else(|| labels.iter().max().map_or(1, |&m| m as usize + 1));
    LabeledDataset::new(features, labels, classes, dim)
}

/// Two-class toy: an inner disc (class 0) inside an annulus (class 1), plus a handful of
/// class-1 outliers deep inside the disc.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Toy2DParams {
    pub inner_radius: f64,
    pub outer_radius_min: f64,
    pub outer_radius_max: f64,
    pub n_inner: usize,
    pub n_outer: usize,
    pub n_outliers: usize,
    pub outlier_radius_frac: f64,
    pub seed: u64,
}

impl Default for Toy2DParams {
    fn default() -> Self {
        Toy2DParams {
            inner_radius: 1.0,
            outer_radius_min: 1.5,
            outer_radius_max: 2.0,
            n_inner: 200,
            n_outer: 200,
            n_outliers: 5,
            outlier_radius_frac: 0.5,
            seed: 0,
        }
    }
}

impl Toy2DParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.inner_radius > 0.0 && self.outer_radius_min > self.inner_radius) {
            return Err(Error::config("toy2d: need 0 < inner_radius < outer_radius_min"));
        }
        if self.outer_radius_max < self.outer_radius_min {
            return Err(Error::config("toy2d: outer_radius_max < outer_radius_min"));
        }
        if !(self.outlier_radius_frac > 0.0 && self.outlier_radius_frac < 1.0) {
            return Err(Error::config("toy2d: outlier_radius_frac must lie in (0, 1)"));
        }
        if self.n_inner + self.n_outer + self.n_outliers < 2 {
            return Err(Error::config("toy2d: need at least two points"));
        }
        Ok(())
    }
}

fn annulus_point(rng: &mut impl Rng, r_min: f64, r_max: f64) -> [f32; 2] {
    let u: f64 = rng.random();
    let r = (u * (r_max * r_max - r_min * r_min) + r_min * r_min).sqrt();
    let theta = rng.random::<f64>() * 2.0 * PI;
    [(r * theta.cos()) as f32, (r * theta.sin()) as f32]
}

/// Ids run inner disc, then annulus, then outliers; outliers are flagged as noise.
pub fn generate_toy2d(params: &Toy2DParams) -> Result<LabeledDataset> {
    params.validate()?;
    let mut rng = seed::rng(params.seed);
    let n = params.n_inner + params.n_outer + params.n_outliers;
    let mut features = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    let mut noise = Vec::with_capacity(n);
    for _ in 0..params.n_inner {
        features.extend(annulus_point(&mut rng, 0.0, params.inner_radius));
        labels.push(0);
        noise.push(false);
    }
    for _ in 0..params.n_outer {
        features.extend(annulus_point(&mut rng, params.outer_radius_min, params.outer_radius_max));
        labels.push(1);
        noise.push(false);
    }
    let r_out = params.outlier_radius_frac * params.inner_radius;
    for _ in 0..params.n_outliers {
        features.extend(annulus_point(&mut rng, 0.0, r_out));
        labels.push(1);
        noise.push(true);
    }
    let mut ds = LabeledDataset::with_flags(features, labels, noise, 2, 2)?;
    ds.meta.outlier_ids = (params.n_inner + params.n_outer..n).collect();
    ds.meta.generator = Some(serde_json::json!({ "toy2d": params }));
    Ok(ds)
}

/// Isotropic Gaussian blobs, one per class, centred at `±separation/2` along the first axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoGaussiansParams {
    pub n_per_class: usize,
    pub dim: usize,
    pub separation: f64,
    pub std: f64,
    pub seed: u64,
}

impl Default for TwoGaussiansParams {
    fn default() -> Self {
        TwoGaussiansParams { n_per_class: 30, dim: 2, separation: 3.0, std: 1.0, seed: 0 }
    }
}

pub fn generate_two_gaussians(params: &TwoGaussiansParams) -> Result<LabeledDataset> {
    if params.dim == 0 || params.n_per_class == 0 || !(params.std >= 0.0) {
        return Err(Error::config("two_gaussians: need dim >= 1, n_per_class >= 1, std >= 0"));
    }
    let mut rng = seed::rng(params.seed);
    let mut features = Vec::with_capacity(2 * params.n_per_class * params.dim);
    let mut labels = Vec::with_capacity(2 * params.n_per_class);
    for class in 0..2u32 {
        let centre = if class == 0 { -params.separation / 2.0 } else { params.separation / 2.0 };
        for _ in 0..params.n_per_class {
            for j in 0..params.dim {
                let z: f64 = StandardNormal.sample(&mut rng);
                let c = if j == 0 { centre } else { 0.0 };
                features.push((c + params.std * z) as f32);
            }
            labels.push(class);
        }
    }
    let mut ds = LabeledDataset::new(features, labels, 2, params.dim)?;
    ds.meta.generator = Some(serde_json::json!({ "two_gaussians": params }));
    Ok(ds)
}
