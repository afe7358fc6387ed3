use rand::seq::SliceRandom;

use super::{FeatureMatrix, LabelVector};
use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::scalar::Scalar;

/// Sample indices of a train/test partition, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per-class shuffled split: each class contributes
/// `round(class_size * test_fraction)` samples to the test side.
pub fn stratified_split<T: Scalar>(
    x: &FeatureMatrix<T>,
    y: &LabelVector,
    test_fraction: f64,
    seed: u64,
) -> Result<Split> {
    if x.sample_count() != y.len() {
        return Err(Error::Consistency(format!(
            "{} samples but {} labels",
            x.sample_count(),
            y.len()
        )));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::config(format!("test fraction {test_fraction} outside (0, 1)")));
    }
    let mut by_class = vec![Vec::new(); y.class_count()];
    for (i, &l) in y.labels().iter().enumerate() {
        by_class[l].push(i);
    }
    let mut split = Split {
        train: Vec::with_capacity(y.len()),
        test: Vec::new(),
    };
    for (class, mut members) in by_class.into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            return Err(Error::config(format!(
                "class {class} has a single sample; stratified split needs at least 2"
            )));
        }
        let mut rng = rng::stream(seed, &[tag::SPLIT, class as u64]);
        members.shuffle(&mut rng);
        let k = (members.len() as f64 * test_fraction).round() as usize;
        split.test.extend_from_slice(&members[..k]);
        split.train.extend_from_slice(&members[k..]);
    }
    split.train.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn balanced(n: usize, classes: usize) -> (FeatureMatrix<f64>, LabelVector) {
        let x = FeatureMatrix::new((0..n).map(|i| i as f64).collect(), n, 1).unwrap();
        let y = LabelVector::new((0..n).map(|i| i % classes).collect(), classes).unwrap();
        (x, y)
    }

    #[test]
    fn eighty_twenty_with_ten_per_class() {
        let (x, y) = balanced(100, 2);
        let s = stratified_split(&x, &y, 0.2, 7).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (80, 20));
        let test_labels = y.select(&s.test);
        assert_eq!(test_labels.class_counts(), vec![10, 10]);
    }

    #[test]
    fn deterministic_for_seed() {
        let (x, y) = balanced(100, 2);
        let a = stratified_split(&x, &y, 0.2, 7).unwrap();
        let b = stratified_split(&x, &y, 0.2, 7).unwrap();
        assert_eq!(a, b);
        let c = stratified_split(&x, &y, 0.2, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn half_of_four_rounds_to_one_per_class() {
        let (x, y) = balanced(4, 2);
        let s = stratified_split(&x, &y, 0.5, 1).unwrap();
        assert_eq!(y.select(&s.test).class_counts(), vec![1, 1]);
    }

    #[test]
    fn singleton_class_rejected() {
        let x = FeatureMatrix::new(vec![0.0, 1.0, 2.0], 3, 1).unwrap();
        let y = LabelVector::new(vec![0, 0, 1], 2).unwrap();
        assert!(matches!(stratified_split(&x, &y, 0.3, 0), Err(Error::Config(_))));
    }
}
