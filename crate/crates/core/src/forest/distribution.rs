use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Probability vector over classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassDistribution<T>(Vec<T>);

impl<T: Scalar> ClassDistribution<T> {
    pub fn new(probabilities: Vec<T>) -> Self {
        Self(probabilities)
    }

    pub fn uniform(class_count: usize) -> Self {
        let p = T::one() / T::from_usize_lossy(class_count);
        Self(vec![p; class_count])
    }

    pub fn one_hot(class: usize, class_count: usize) -> Self {
        let mut v = vec![T::zero(); class_count];
        v[class] = T::one();
        Self(v)
    }

    /// Normalized class frequencies.
    pub fn from_counts(counts: &[usize]) -> Self {
        let total: usize = counts.iter().sum();
        let total = T::from_usize_lossy(total.max(1));
        Self(counts.iter().map(|&c| T::from_usize_lossy(c) / total).collect())
    }

    /// Arithmetic mean, accumulated in iteration order.
    pub fn mean<'a>(items: impl IntoIterator<Item = &'a Self>, class_count: usize) -> Option<Self> {
        let mut acc = vec![T::zero(); class_count];
        let mut n = 0usize;
        for d in items {
            for (a, &p) in acc.iter_mut().zip(&d.0) {
                *a = *a + p;
            }
            n += 1;
        }
        if n == 0 {
            return None;
        }
        let n = T::from_usize_lossy(n);
        acc.iter_mut().for_each(|a| *a = *a / n);
        Some(Self(acc))
    }

    pub fn probabilities(&self) -> &[T] {
        &self.0
    }

    pub fn class_count(&self) -> usize {
        self.0.len()
    }

    /// Index of the largest probability; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate().skip(1) {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }

    pub fn sum(&self) -> T {
        self.0.iter().copied().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_of_identical_one_hots() {
        let a = ClassDistribution::<f64>::one_hot(1, 3);
        let m = ClassDistribution::mean([&a, &a, &a], 3).unwrap();
        assert_eq!(m, a);
    }

    #[test]
    fn argmax_ties_to_lowest() {
        let d = ClassDistribution::new(vec![0.25f64, 0.375, 0.375]);
        assert_eq!(d.argmax(), 1);
    }

    #[test]
    fn mean_of_nothing_is_none() {
        assert!(ClassDistribution::<f32>::mean([], 2).is_none());
    }
}
