//! Dataset ingestion: MNIST IDX files, labeled CSV tables, min-max scaling
//! onto the search-line range and reproducible stratified splits.

mod csv_table;
mod idx;
mod scaler;
pub mod semg;
mod split;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use csv_table::{load_csv_labeled, LabelColumn};
pub use idx::{load_mnist_idx, write_idx_images, write_idx_labels};
pub use scaler::{fit_apply_scaler, FeatureScaler};
pub use split::{stratified_split, Split};

/// Dense row-major sample matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix<T> {
    values: Vec<T>,
    sample_count: usize,
    feature_count: usize,
}

impl<T: Scalar> FeatureMatrix<T> {
    pub fn new(values: Vec<T>, sample_count: usize, feature_count: usize) -> Result<Self> {
        if values.len() != sample_count * feature_count {
            return Err(Error::Consistency(format!(
                "matrix has {} values, expected {sample_count} x {feature_count}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Consistency(format!(
                "non-finite value at sample {}, feature {}",
                pos / feature_count.max(1),
                pos % feature_count.max(1)
            )));
        }
        Ok(Self {
            values,
            sample_count,
            feature_count,
        })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != width) {
            return Err(Error::Consistency(format!(
                "row {bad} has {} features, expected {width}",
                rows[bad].len()
            )));
        }
        Self::new(rows.concat(), rows.len(), width)
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn is_empty(&self) -> bool {
        self.sample_count == 0
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.feature_count..(i + 1) * self.feature_count]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        (0..self.sample_count).map(move |i| self.row(i))
    }

    pub fn get(&self, sample: usize, feature: usize) -> T {
        self.values[sample * self.feature_count + feature]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Rows picked by index, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.feature_count);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self {
            values,
            sample_count: indices.len(),
            feature_count: self.feature_count,
        }
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> FeatureMatrix<U> {
        FeatureMatrix {
            values: self.values.iter().map(|&v| f(v)).collect(),
            sample_count: self.sample_count,
            feature_count: self.feature_count,
        }
    }
}

/// Class indices `0..class_count`, with optional human-readable names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    labels: Vec<usize>,
    class_count: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    class_names: Vec<String>,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if class_count == 0 {
            return Err(Error::config("class count must be positive"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::Consistency(format!(
                "label {bad} out of range for {class_count} classes"
            )));
        }
        Ok(Self {
            labels,
            class_count,
            class_names: Vec::new(),
        })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.class_count {
            return Err(Error::Consistency(format!(
                "{} class names for {} classes",
                names.len(),
                self.class_count
            )));
        }
        self.class_names = names;
        Ok(self)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
            class_names: self.class_names.clone(),
        }
    }
}

/// Features paired with labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset<T> {
    pub features: FeatureMatrix<T>,
    pub labels: LabelVector,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(features: FeatureMatrix<T>, labels: LabelVector) -> Result<Self> {
        if features.sample_count() != labels.len() {
            return Err(Error::Consistency(format!(
                "{} samples but {} labels",
                features.sample_count(),
                labels.len()
            )));
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.labels.class_count()
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select(indices),
            labels: self.labels.select(indices),
        }
    }
}

/// Scaled train/test pair ready for training.
#[derive(Debug, Clone)]
pub struct PreparedSplit<T> {
    pub train: Dataset<T>,
    pub test: Dataset<T>,
    pub scaler: FeatureScaler<T>,
}

/// Stratified split followed by a scaler fitted on the training part.
pub fn prepare_split<T: Scalar>(data: &Dataset<T>, test_fraction: f64, seed: u64) -> Result<PreparedSplit<T>> {
    let split = stratified_split(&data.features, &data.labels, test_fraction, seed)?;
    let train = data.select(&split.train);
    let test = data.select(&split.test);
    let (train_x, others, scaler) = fit_apply_scaler(&train.features, &[&test.features])?;
    let test_x = others.into_iter().next().expect("one scaled matrix");
    Ok(PreparedSplit {
        train: Dataset::new(train_x, train.labels)?,
        test: Dataset::new(test_x, test.labels)?,
        scaler,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ragged_rows_rejected() {
        let rows = vec![vec![0.0f64, 1.0], vec![0.5]];
        assert!(matches!(FeatureMatrix::from_rows(&rows), Err(Error::Consistency(_))));
    }

    #[test]
    fn non_finite_rejected() {
        assert!(FeatureMatrix::new(vec![0.0f64, f64::NAN], 1, 2).is_err());
        assert!(FeatureMatrix::new(vec![f32::INFINITY], 1, 1).is_err());
    }

    #[test]
    fn labels_must_fit_class_count() {
        assert!(LabelVector::new(vec![0, 3], 3).is_err());
        assert_eq!(
            LabelVector::new(vec![0, 2, 2], 3).unwrap().class_counts(),
            vec![1, 0, 2]
        );
    }
}
