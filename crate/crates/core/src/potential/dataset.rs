//! Labelled datasets for the logistic experiments: CSV ingestion, standardisation,
//! splitting, feature perturbation and a seeded synthetic generator.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

/// Labels in `{−1, +1}` and a feature matrix with one row per datum.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<f64>,
}

/// Per-feature affine map applied at load time: `z = (raw − mean) / sd`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardization {
    pub fn fit(features: &Matrix) -> Self {
        let (s, p) = (features.rows(), features.cols());
        let mut means = vec![0.0; p];
        for i in 0..s {
            for (m, v) in means.iter_mut().zip(features.row(i)) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= s as f64);
        let mut sds = vec![0.0; p];
        for i in 0..s {
            for ((sd, v), m) in sds.iter_mut().zip(features.row(i)).zip(&means) {
                *sd += (v - m) * (v - m);
            }
        }
        // constant columns are centred but left unscaled
        sds.iter_mut().for_each(|sd| {
            *sd = (*sd / s as f64).sqrt();
            if *sd == 0.0 {
                *sd = 1.0;
            }
        });
        Self { means, sds }
    }

    pub fn apply(&self, features: &mut Matrix) {
        for i in 0..features.rows() {
            for ((v, m), sd) in features.row_mut(i).iter_mut().zip(&self.means).zip(&self.sds) {
                *v = (*v - m) / sd;
            }
        }
    }
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<f64>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Dataset(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if features.rows() == 0 || features.cols() == 0 {
            return Err(Error::Dataset("dataset must have at least one row and one feature".into()));
        }
        if let Some(bad) = labels.iter().find(|&&l| l != 1.0 && l != -1.0) {
            return Err(Error::Dataset(format!("label {bad} is not ±1")));
        }
        if !features.as_slice().iter().all(|v| v.is_finite()) {
            return Err(Error::Dataset("non-finite feature value".into()));
        }
        Ok(Self { features, labels })
    }

    /// Reads `label, feature_1, …, feature_p` rows. Labels `0/1` are remapped to `−1/+1`.
    /// A first row whose label field is not numeric is treated as a header. Features are
    /// standardised to zero mean and unit variance; the transform is returned.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<(Self, Standardization)> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut raw_labels = Vec::new();
        let mut width = None;
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            if record.iter().all(str::is_empty) {
                continue;
            }
            let first = record.get(0).unwrap_or("");
            let label: f64 = match first.parse() {
                Ok(v) => v,
                Err(_) if line == 0 => continue,
                Err(_) => {
                    return Err(Error::Dataset(format!("row {}: label {first:?} is not numeric", line + 1)))
                }
            };
            let feats = record
                .iter()
                .skip(1)
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| Error::Dataset(format!("row {}: feature {f:?} is not numeric", line + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            match width {
                None => width = Some(feats.len()),
                Some(w) if w != feats.len() => {
                    return Err(Error::Dataset(format!(
                        "row {}: expected {w} features, found {}",
                        line + 1,
                        feats.len()
                    )))
                }
                _ => {}
            }
            raw_labels.push(label);
            rows.push(feats);
        }
        if rows.is_empty() {
            return Err(Error::Dataset("no data rows".into()));
        }
        let zero_one = raw_labels.iter().all(|&l| l == 0.0 || l == 1.0);
        // anything other than ±1 is rejected by `Dataset::new`
        let labels = raw_labels
            .iter()
            .map(|&l| if zero_one { 2.0 * l - 1.0 } else { l })
            .collect::<Vec<_>>();
        let mut features = Matrix::from_rows(&rows);
        let transform = Standardization::fit(&features);
        transform.apply(&mut features);
        Ok((Self::new(features, labels)?, transform))
    }

    /// Seeded synthetic binary-classification data.
    ///
    /// Features share one latent factor `u` plus small idiosyncratic parts
    /// (`z_j = u + 0.3 e_j`). Labels are `sign(u + 0.3 (e_1 − e_2))`, so the classes are
    /// separable and a sharp classifier can lean on the fragile `z_1 − z_2` contrast while
    /// a robust one leans on the shared factor. Returned features are standardised.
    pub fn synthetic(rows: usize, features: usize, seed: u64) -> Result<Self> {
        if features < 2 {
            return Err(Error::Dataset("synthetic generator needs at least two features".into()));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut data = Vec::with_capacity(rows * features);
        let mut labels = Vec::with_capacity(rows);
        for _ in 0..rows {
            let u: f64 = StandardNormal.sample(&mut rng);
            let e: Vec<f64> = (0..features).map(|_| StandardNormal.sample(&mut rng)).collect();
            let score = u + 0.3 * (e[0] - e[1]);
            labels.push(if score >= 0.0 { 1.0 } else { -1.0 });
            data.extend(e.iter().map(|ej| u + 0.3 * ej));
        }
        let mut m = Matrix::from_row_major(rows, features, data);
        Standardization::fit(&m).apply(&mut m);
        Self::new(m, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Margin `y_k ⟨ω, z_k⟩` of datum `k`.
    pub fn margin(&self, k: usize, omega: &[f64]) -> f64 {
        self.labels[k] * dot(self.features.row(k), omega)
    }

    /// Seeded shuffle, then the first `train_fraction` of rows go to the training set.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&train_fraction) || train_fraction == 0.0 {
            return Err(Error::InvalidInput(format!("train fraction {train_fraction} not in (0, 1)")));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
        let cut = ((self.len() as f64) * train_fraction).round() as usize;
        let cut = cut.clamp(1, self.len().saturating_sub(1).max(1));
        Ok((self.subset(&idx[..cut])?, self.subset(&idx[cut..])?))
    }

    fn subset(&self, idx: &[usize]) -> Result<Dataset> {
        let rows: Vec<Vec<f64>> = idx.iter().map(|&i| self.features.row(i).to_vec()).collect();
        Dataset::new(Matrix::from_rows(&rows), idx.iter().map(|&i| self.labels[i]).collect())
    }

    /// Per-feature standard deviation of this dataset.
    pub fn feature_sds(&self) -> Vec<f64> {
        Standardization::fit(&self.features).sds
    }

    /// Copy with `level · sd_j · N(0, 1)` added to every feature `j`.
    pub fn perturbed<R: Rng + ?Sized>(&self, level: f64, sds: &[f64], rng: &mut R) -> Dataset {
        let mut features = self.features.clone();
        if level != 0.0 {
            for i in 0..features.rows() {
                for (v, sd) in features.row_mut(i).iter_mut().zip(sds) {
                    let z: f64 = StandardNormal.sample(rng);
                    *v += level * sd * z;
                }
            }
        }
        Dataset { features, labels: self.labels.clone() }
    }
}
