//! Synthetic Gaussian mixtures and CSV feature matrices.

use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use scns_core::rng::{stream_rng, streams};
use scns_core::DatasetIndex;

use crate::config::{DatasetConfig, DatasetKind};
use crate::error::{HarnessError, Result};

/// Inputs with integer labels in `[0, num_classes)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Array2<f64>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    /// Class means for synthetic data.
    pub centroids: Option<Array2<f64>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn index(&self) -> Result<DatasetIndex> {
        Ok(DatasetIndex::with_classes(
            self.labels.clone(),
            self.num_classes,
        )?)
    }

    pub fn select(&self, rows: &[usize]) -> Array2<f64> {
        self.inputs.select(Axis(0), rows)
    }
}

/// Training split and optional held-out split.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitData {
    pub train: Dataset,
    pub eval: Option<Dataset>,
    /// One row per class for class-level sampling: the mixture centroids,
    /// or vectors supplied by the caller.
    pub label_embeddings: Option<Array2<f64>>,
}

/// `C` centroids at uniformly random directions scaled to norm
/// `separation`, then `n_per_class` unit-variance isotropic samples around
/// each, in class-major order.
pub fn generate_gaussian_mixture<R: Rng + ?Sized>(
    classes: usize,
    n_per_class: usize,
    dim: usize,
    separation: f64,
    rng: &mut R,
) -> Result<Dataset> {
    if classes < 2 {
        return Err(HarnessError::Config {
            key: "dataset.classes",
            message: format!("{classes} is out of range >= 2"),
        });
    }
    if dim < 2 {
        return Err(HarnessError::Config {
            key: "dataset.dim",
            message: format!("{dim} is out of range >= 2"),
        });
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(HarnessError::Config {
            key: "dataset.separation",
            message: format!("{separation} is out of range [0, inf)"),
        });
    }
    let mut centroids = Array2::zeros((classes, dim));
    for mut row in centroids.rows_mut() {
        loop {
            row.mapv_inplace(|_| rng.sample::<f64, _>(StandardNormal));
            let n = row.dot(&row).sqrt();
            if n > 1e-9 {
                row.mapv_inplace(|x| x * separation / n);
                break;
            }
        }
    }
    Ok(sample_mixture(&centroids, n_per_class, rng))
}

/// Draws `n_per_class` samples around each centroid.
pub fn sample_mixture<R: Rng + ?Sized>(
    centroids: &Array2<f64>,
    n_per_class: usize,
    rng: &mut R,
) -> Dataset {
    let (classes, dim) = centroids.dim();
    let n = classes * n_per_class;
    let mut inputs = Array2::zeros((n, dim));
    let mut labels = Vec::with_capacity(n);
    for c in 0..classes {
        for i in 0..n_per_class {
            let mut row = inputs.row_mut(c * n_per_class + i);
            for (x, mu) in row.iter_mut().zip(centroids.row(c)) {
                *x = mu + rng.sample::<f64, _>(StandardNormal);
            }
            labels.push(c);
        }
    }
    Dataset {
        inputs,
        labels,
        num_classes: classes,
        centroids: Some(centroids.clone()),
    }
}

/// Reads `label,x0,x1,...` rows (a header line is required and skipped).
pub fn load_feature_csv(path: &Path, num_classes: Option<usize>) -> Result<Dataset> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut dim = None;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let parse_err = |message: String| HarnessError::Parse {
            path: display.clone(),
            line,
            message,
        };
        let mut fields = record.iter();
        let label: usize = fields
            .next()
            .ok_or_else(|| parse_err("empty record".into()))?
            .trim()
            .parse()
            .map_err(|e| parse_err(format!("label: {e}")))?;
        let row: Vec<f64> = fields
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(format!("feature: {e}")))?;
        if row.iter().any(|x| !x.is_finite()) {
            return Err(parse_err("non-finite feature".into()));
        }
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(parse_err(format!(
                    "expected {d} features, found {}",
                    row.len()
                )))
            }
            _ => {}
        }
        labels.push(label);
        values.extend(row);
    }
    let dim = dim.filter(|&d| d > 0).ok_or_else(|| HarnessError::Parse {
        path: display.clone(),
        line: 1,
        message: "no feature rows".into(),
    })?;
    let observed = labels.iter().max().map_or(0, |m| m + 1);
    let num_classes = num_classes.unwrap_or(observed).max(observed);
    Ok(Dataset {
        inputs: Array2::from_shape_vec((labels.len(), dim), values).expect("shape checked"),
        labels,
        num_classes,
        centroids: None,
    })
}

/// Builds the train/eval split described by the config. Synthetic data
/// uses stream `DATA` for centroids and training samples and stream
/// `EVAL_DATA` for held-out samples.
pub fn load_dataset(cfg: &DatasetConfig, seed: u64) -> Result<SplitData> {
    match cfg.kind {
        DatasetKind::Mixture => {
            let mut rng = stream_rng(seed, streams::DATA);
            let train = generate_gaussian_mixture(
                cfg.classes,
                cfg.per_class,
                cfg.dim,
                cfg.separation,
                &mut rng,
            )?;
            let eval = (cfg.eval_per_class > 0).then(|| {
                let mut rng = stream_rng(seed, streams::EVAL_DATA);
                sample_mixture(
                    train.centroids.as_ref().expect("synthetic"),
                    cfg.eval_per_class,
                    &mut rng,
                )
            });
            let label_embeddings = train.centroids.clone();
            Ok(SplitData {
                train,
                eval,
                label_embeddings,
            })
        }
        DatasetKind::Csv => {
            let path = cfg.train_path.as_deref().ok_or(HarnessError::Config {
                key: "dataset.train_path",
                message: "required when kind = \"csv\"".into(),
            })?;
            let mut train = load_feature_csv(Path::new(path), None)?;
            let eval = match &cfg.eval_path {
                Some(p) => Some(load_feature_csv(Path::new(p), Some(train.num_classes))?),
                None => None,
            };
            if let Some(e) = &eval {
                train.num_classes = train.num_classes.max(e.num_classes);
                if e.dim() != train.dim() {
                    return Err(HarnessError::Config {
                        key: "dataset.eval_path",
                        message: format!("{} features, training data has {}", e.dim(), train.dim()),
                    });
                }
            }
            Ok(SplitData {
                train,
                eval,
                label_embeddings: None,
            })
        }
    }
}

/// Nearest-centroid label, for measuring the Bayes rule of a mixture.
pub fn nearest_centroid(centroids: &Array2<f64>, x: ArrayView1<'_, f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (c, mu) in centroids.rows().into_iter().enumerate() {
        let d: f64 = mu.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum();
        if d < best.1 {
            best = (c, d);
        }
    }
    best.0
}
