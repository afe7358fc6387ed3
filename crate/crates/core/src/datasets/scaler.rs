use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-feature min-max scaler onto `[0, 1]`.
///
/// Values outside the fitted range are clamped; constant features map to 0.5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler<T> {
    min: Vec<T>,
    max: Vec<T>,
    fitted: bool,
}

impl<T: Scalar> FeatureScaler<T> {
    pub fn fit(train: &FeatureMatrix<T>) -> Result<Self> {
        if train.is_empty() || train.feature_count() == 0 {
            return Err(Error::config("cannot fit a scaler on an empty training matrix"));
        }
        let f = train.feature_count();
        let mut min = train.row(0).to_vec();
        let mut max = min.clone();
        for row in train.rows().skip(1) {
            for j in 0..f {
                min[j] = min[j].min(row[j]);
                max[j] = max[j].max(row[j]);
            }
        }
        Ok(Self { min, max, fitted: true })
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted
    }

    pub fn feature_count(&self) -> usize {
        self.min.len()
    }

    pub fn scale_value(&self, feature: usize, x: T) -> T {
        let (lo, hi) = (self.min[feature], self.max[feature]);
        let span = hi - lo;
        if span <= T::zero() {
            return T::half();
        }
        ((x - lo) / span).max(T::zero()).min(T::one())
    }

    pub fn unscale_value(&self, feature: usize, s: T) -> T {
        let (lo, hi) = (self.min[feature], self.max[feature]);
        if hi <= lo {
            return lo;
        }
        lo + s * (hi - lo)
    }

    pub fn transform(&self, x: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>> {
        self.check_width(x)?;
        let f = x.feature_count();
        let values = x
            .values()
            .iter()
            .enumerate()
            .map(|(k, &v)| self.scale_value(k % f, v))
            .collect();
        FeatureMatrix::new(values, x.sample_count(), f)
    }

    pub fn inverse_transform(&self, x: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>> {
        self.check_width(x)?;
        let f = x.feature_count();
        let values = x
            .values()
            .iter()
            .enumerate()
            .map(|(k, &v)| self.unscale_value(k % f, v))
            .collect();
        FeatureMatrix::new(values, x.sample_count(), f)
    }

    fn check_width(&self, x: &FeatureMatrix<T>) -> Result<()> {
        if x.feature_count() != self.feature_count() {
            return Err(Error::Consistency(format!(
                "scaler fitted on {} features, got {}",
                self.feature_count(),
                x.feature_count()
            )));
        }
        Ok(())
    }
}

/// Fit on `train`, then scale `train` and every matrix in `others`.
pub fn fit_apply_scaler<T: Scalar>(
    train: &FeatureMatrix<T>,
    others: &[&FeatureMatrix<T>],
) -> Result<(FeatureMatrix<T>, Vec<FeatureMatrix<T>>, FeatureScaler<T>)> {
    let scaler = FeatureScaler::fit(train)?;
    let scaled_train = scaler.transform(train)?;
    let scaled_others = others.iter().map(|m| scaler.transform(m)).collect::<Result<Vec<_>>>()?;
    Ok((scaled_train, scaled_others, scaler))
}
