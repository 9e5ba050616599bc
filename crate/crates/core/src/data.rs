//! Toy dataset generators, CSV matrix I/O, splits and standardization.
//!
//! Generators mirror the usual scikit-learn shapes (circles, swiss roll,
//! moons) plus a pair of parallel 1-D strips ("bookshelf") whose exact W1 is
//! known in closed form. Some generators attach class labels (inner/outer
//! circle, moon id); labels are audit metadata carried out of band and are
//! never part of the feature matrix.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::rng::{seeded_rng, stream};

/// Named feature matrix (n samples x d features).
#[derive(Clone, Debug)]
pub struct Dataset {
    name: String,
    features: Tensor,
    feature_names: Vec<String>,
    seed: Option<u64>,
    labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, features: Tensor, feature_names: Vec<String>) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::Data("dataset must have at least one row".into()));
        }
        if feature_names.len() != features.cols() {
            return Err(Error::Shape(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                features.cols()
            )));
        }
        if !features.is_finite() {
            return Err(Error::Data("dataset contains non-finite values".into()));
        }
        Ok(Self { name: name.into(), features, feature_names, seed: None, labels: None })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.features.rows() {
            return Err(Error::Shape(format!(
                "{} labels for {} rows",
                labels.len(),
                self.features.rows()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Generator-supplied class labels (audit metadata, not features).
    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn n_samples(&self) -> usize {
        self.features.rows()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }
}

const XY_NAMES: [&str; 2] = ["x", "y"];

fn xy_names() -> Vec<String> {
    XY_NAMES.iter().map(|s| s.to_string()).collect()
}

/// Two parallel vertical strips: source x ~ U[0,1], target x ~ U[2,3], both
/// with y ~ N(0, 0.001^2). Exact W1 between the strips is 2.
pub fn gen_bookshelf(n: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    if n == 0 {
        return Err(Error::Config("bookshelf needs n >= 1".into()));
    }
    let strip = |rng: &mut rand_chacha::ChaCha8Rng, x_lo: f64, x_hi: f64| {
        let mut t = Tensor::zeros(n, 2);
        for i in 0..n {
            t.set(i, 0, rng.random_range(x_lo..x_hi));
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            t.set(i, 1, 0.001 * z);
        }
        t
    };
    let mut src_rng = seeded_rng(seed, stream::DATA_SOURCE);
    let mut tgt_rng = seeded_rng(seed, stream::DATA_TARGET);
    let source = Dataset::new("bookshelf_source", strip(&mut src_rng, 0.0, 1.0), xy_names())?
        .with_seed(seed);
    let target = Dataset::new("bookshelf_target", strip(&mut tgt_rng, 2.0, 3.0), xy_names())?
        .with_seed(seed);
    Ok((source, target))
}

/// Concentric circle pairs: source radii {0.5, 1.0}, target the same shape
/// scaled by 2, Gaussian `noise` on both coordinates. Rows are labeled
/// 0 = inner, 1 = outer. `n` must be even (n/2 points per circle).
pub fn gen_circles(n: usize, noise: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if n == 0 || n % 2 != 0 {
        return Err(Error::Config(format!("circles needs an even n >= 2, got {n}")));
    }
    let (s_src, s_tgt) = (1.0f64, 2.0f64);
    let make = |rng: &mut rand_chacha::ChaCha8Rng, scale: f64| {
        let half = n / 2;
        let mut t = Tensor::zeros(n, 2);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let (radius, label, idx) =
                if i < half { (0.5 * scale, 0usize, i) } else { (1.0 * scale, 1usize, i - half) };
            let angle = 2.0 * std::f64::consts::PI * idx as f64 / half as f64;
            let nx: f64 = rng.sample(rand_distr::StandardNormal);
            let ny: f64 = rng.sample(rand_distr::StandardNormal);
            t.set(i, 0, radius * angle.cos() + noise * nx);
            t.set(i, 1, radius * angle.sin() + noise * ny);
            labels.push(label);
        }
        (t, labels)
    };
    let mut src_rng = seeded_rng(seed, stream::DATA_SOURCE);
    let mut tgt_rng = seeded_rng(seed, stream::DATA_TARGET);
    let (sf, sl) = make(&mut src_rng, s_src);
    let (tf, tl) = make(&mut tgt_rng, s_tgt);
    let source = Dataset::new("circles_source", sf, xy_names())?
        .with_seed(seed)
        .with_labels(sl)?;
    let target = Dataset::new("circles_target", tf, xy_names())?
        .with_seed(seed)
        .with_labels(tl)?;
    Ok((source, target))
}

/// Source: standard 2-D Gaussian. Target: the (t cos t, t sin t) coordinates
/// of a swiss roll with t ~ U[1.5 pi, 4.5 pi], Gaussian noise 0.05, scaled
/// by 0.1 so both clouds have O(1) diameter.
pub fn gen_swiss_roll(n: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    if n == 0 {
        return Err(Error::Config("swiss_roll needs n >= 1".into()));
    }
    let mut src_rng = seeded_rng(seed, stream::DATA_SOURCE);
    let source_feats = Tensor::normal(n, 2, 0.0, 1.0, &mut src_rng);
    let mut tgt_rng = seeded_rng(seed, stream::DATA_TARGET);
    let mut target_feats = Tensor::zeros(n, 2);
    for i in 0..n {
        let t = tgt_rng.random_range(1.5 * std::f64::consts::PI..4.5 * std::f64::consts::PI);
        let nx: f64 = tgt_rng.sample(rand_distr::StandardNormal);
        let ny: f64 = tgt_rng.sample(rand_distr::StandardNormal);
        target_feats.set(i, 0, 0.1 * (t * t.cos() + 0.05 * nx));
        target_feats.set(i, 1, 0.1 * (t * t.sin() + 0.05 * ny));
    }
    let source = Dataset::new("swiss_roll_source", source_feats, xy_names())?.with_seed(seed);
    let target = Dataset::new("swiss_roll_target", target_feats, xy_names())?.with_seed(seed);
    Ok((source, target))
}

/// Two interleaving half circles; the source is the upper moon, the target
/// the lower moon, `n` points each with Gaussian `noise`.
pub fn gen_moons(n: usize, noise: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if n == 0 {
        return Err(Error::Config("moons needs n >= 1".into()));
    }
    let make = |rng: &mut rand_chacha::ChaCha8Rng, upper: bool| {
        let mut t = Tensor::zeros(n, 2);
        for i in 0..n {
            let angle = std::f64::consts::PI * i as f64 / (n.max(2) - 1) as f64;
            let (x, y) = if upper {
                (angle.cos(), angle.sin())
            } else {
                (1.0 - angle.cos(), 0.5 - angle.sin())
            };
            let nx: f64 = rng.sample(rand_distr::StandardNormal);
            let ny: f64 = rng.sample(rand_distr::StandardNormal);
            t.set(i, 0, x + noise * nx);
            t.set(i, 1, y + noise * ny);
        }
        t
    };
    let mut src_rng = seeded_rng(seed, stream::DATA_SOURCE);
    let mut tgt_rng = seeded_rng(seed, stream::DATA_TARGET);
    let source =
        Dataset::new("moons_source", make(&mut src_rng, true), xy_names())?.with_seed(seed);
    let target =
        Dataset::new("moons_target", make(&mut tgt_rng, false), xy_names())?.with_seed(seed);
    Ok((source, target))
}

/// Writes a dataset as CSV: header row of feature names, one row per sample,
/// floats in shortest round-trip formatting. The file is written to a
/// temporary sibling and renamed into place.
pub fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&ds.feature_names().join(","));
    out.push('\n');
    for i in 0..ds.n_samples() {
        let row: Vec<String> = ds.features().row(i).iter().map(|v| format!("{v}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Atomic file write: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(ext) => format!("{}.tmp", ext.to_string_lossy()),
        None => "tmp".to_string(),
    });
    {
        let mut f = fs::File::create(&tmp)
            .map_err(|e| Error::Data(format!("cannot create {}: {e}", tmp.display())))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
        .map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

/// Loads a CSV written by [`write_csv`] (or any rectangular numeric CSV with
/// a header row). Parse failures report the offending row and column.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Data(format!("{}: empty file", path.display())))?;
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    if names.iter().any(String::is_empty) {
        return Err(Error::Data(format!("{}: empty column name in header", path.display())));
    }
    let d = names.len();
    let mut data = Vec::new();
    let mut n = 0usize;
    for (row_idx, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != d {
            return Err(Error::Data(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                row_idx,
                cells.len(),
                d
            )));
        }
        for (col, cell) in cells.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::Data(format!(
                    "{}: row {}, column {} ({}): cannot parse {:?} as a number",
                    path.display(),
                    row_idx,
                    col,
                    names[col],
                    cell
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "{}: row {}, column {} ({}): non-finite value",
                    path.display(),
                    row_idx,
                    col,
                    names[col]
                )));
            }
            data.push(v);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    Dataset::new(name, Tensor::from_vec(n, d, data)?, names)
}

/// Seeded disjoint train/test split; the union of the parts is the input.
pub fn split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test_fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let n = ds.n_samples();
    if n < 2 {
        return Err(Error::InsufficientData(format!("cannot split {n} rows")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    use rand::seq::SliceRandom;
    idx.shuffle(&mut seeded_rng(seed, stream::SPLIT));
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let (test_idx, train_idx) = idx.split_at(n_test);
    let take = |sel: &[usize], suffix: &str| -> Result<Dataset> {
        let feats = ds.features().gather_rows(sel);
        let mut out = Dataset::new(format!("{}_{suffix}", ds.name()), feats, ds.feature_names().to_vec())?;
        if let Some(labels) = ds.labels() {
            out = out.with_labels(sel.iter().map(|&i| labels[i]).collect())?;
        }
        Ok(out)
    };
    Ok((take(train_idx, "train")?, take(test_idx, "test")?))
}

/// Per-feature mean/std record fitted on a training set.
#[derive(Clone, Debug)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Fits column statistics on `train` (std floored at 1e-8) and returns the
/// standardized training set plus the reusable transform.
pub fn standardize(train: &Dataset) -> Result<(Dataset, Standardizer)> {
    let feats = train.features();
    let mean = feats.col_means();
    let n = feats.rows() as f64;
    let mut var = vec![0.0; feats.cols()];
    for i in 0..feats.rows() {
        for (j, &v) in feats.row(i).iter().enumerate() {
            let d = v - mean[j];
            var[j] += d * d;
        }
    }
    let std: Vec<f64> = var.iter().map(|v| (v / n).sqrt().max(1e-8)).collect();
    let standardizer = Standardizer { mean, std };
    let transformed = standardizer.apply(train)?;
    Ok((transformed, standardizer))
}

impl Standardizer {
    /// Applies the stored train statistics to any dataset of the same width.
    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.dim() != self.mean.len() {
            return Err(Error::Shape(format!(
                "standardizer fitted on {} features, dataset has {}",
                self.mean.len(),
                ds.dim()
            )));
        }
        let feats = ds.features();
        let mut out = feats.clone();
        for i in 0..feats.rows() {
            for j in 0..feats.cols() {
                out.set(i, j, (feats.get(i, j) - self.mean[j]) / self.std[j]);
            }
        }
        let mut result = Dataset::new(ds.name().to_string(), out, ds.feature_names().to_vec())?;
        if let Some(labels) = ds.labels() {
            result = result.with_labels(labels.to_vec())?;
        }
        Ok(result)
    }
}
