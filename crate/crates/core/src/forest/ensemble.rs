use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::train_tree_on;
use super::{ClassDistribution, DecisionTree, Flavor, TreeParams};
use crate::datasets::{FeatureMatrix, LabelVector};
use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub tree: TreeParams,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 8,
            tree: TreeParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RandomForest<T: Scalar> {
    pub flavor: Flavor,
    pub class_count: usize,
    pub feature_count: usize,
    pub trees: Vec<DecisionTree<T>>,
}

impl<T: Scalar> RandomForest<T> {
    pub fn from_trees(trees: Vec<DecisionTree<T>>, flavor: Flavor) -> Result<Self> {
        let first = trees
            .first()
            .ok_or_else(|| Error::config("a forest needs at least one tree"))?;
        let (class_count, feature_count) = (first.class_count(), first.feature_count());
        if trees
            .iter()
            .any(|t| t.class_count() != class_count || t.feature_count() != feature_count)
        {
            return Err(Error::Consistency("trees disagree on shape".into()));
        }
        Ok(Self {
            flavor,
            class_count,
            feature_count,
            trees,
        })
    }

    /// Mean of the member trees' leaf distributions.
    pub fn predict(&self, x: &[T]) -> ClassDistribution<T> {
        ClassDistribution::mean(self.trees.iter().map(|t| t.predict(x)), self.class_count).expect("forest has trees")
    }

    /// Row-major `samples x class_count` prediction matrix.
    pub fn predict_matrix(&self, x: &FeatureMatrix<T>) -> Vec<T> {
        let mut out = Vec::with_capacity(x.sample_count() * self.class_count);
        for row in x.rows() {
            out.extend_from_slice(self.predict(row).probabilities());
        }
        out
    }

    pub fn leaf_count(&self) -> usize {
        self.trees.iter().map(DecisionTree::leaf_count).sum()
    }
}

/// Bootstrap resample (with replacement, same size) used for tree `tree_index`
/// of a forest trained with `seed`.
pub fn bootstrap_indices(sample_count: usize, seed: u64, tree_index: usize) -> Vec<usize> {
    let mut r = rng::stream(seed, &[tag::BOOTSTRAP, tree_index as u64]);
    (0..sample_count).map(|_| r.random_range(0..sample_count)).collect()
}

/// Train `params.n_trees` trees, each on its own bootstrap resample and with
/// its own derived seed.
pub fn train_forest<T: Scalar>(
    x: &FeatureMatrix<T>,
    y: &LabelVector,
    params: &ForestParams,
    seed: u64,
) -> Result<RandomForest<T>> {
    if params.n_trees == 0 {
        return Err(Error::config("n_trees must be at least 1"));
    }
    if x.sample_count() == 0 {
        return Err(Error::config("cannot train a forest on an empty dataset"));
    }
    let trees = (0..params.n_trees)
        .map(|i| {
            let sample = bootstrap_indices(x.sample_count(), seed, i);
            let mut r = rng::stream(seed, &[tag::TREE, i as u64]);
            train_tree_on(x, y, &sample, &params.tree, &mut r)
        })
        .collect::<Result<Vec<_>>>()?;
    RandomForest::from_trees(trees, params.tree.flavor)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(seed: u64) -> (FeatureMatrix<f64>, LabelVector) {
        let mut r = rng::stream(seed, &[]);
        let n = 120;
        let mut vals = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let c = i % 3;
            vals.push(c as f64 / 3.0 + r.random::<f64>() * 0.4);
            vals.push(r.random::<f64>());
            labels.push(c);
        }
        (
            FeatureMatrix::new(vals, n, 2).unwrap(),
            LabelVector::new(labels, 3).unwrap(),
        )
    }

    #[test]
    fn zero_trees_is_config_error() {
        let (x, y) = data(0);
        let p = ForestParams {
            n_trees: 0,
            ..ForestParams::default()
        };
        assert!(matches!(train_forest(&x, &y, &p, 1), Err(Error::Config(_))));
    }

    #[test]
    fn single_tree_forest_matches_tree() {
        let (x, y) = data(1);
        let p = ForestParams {
            n_trees: 1,
            ..ForestParams::default()
        };
        let f = train_forest(&x, &y, &p, 3).unwrap();
        for row in x.rows() {
            assert_eq!(&f.predict(row), f.trees[0].predict(row));
        }
    }

    #[test]
    fn forest_prediction_is_mean_of_trees() {
        let (x, y) = data(2);
        let f = train_forest(&x, &y, &ForestParams::default(), 5).unwrap();
        assert_eq!(f.trees.len(), 8);
        for row in x.rows().take(20) {
            let mut expect = [0.0f64; 3];
            for t in &f.trees {
                for (e, p) in expect.iter_mut().zip(t.predict(row).probabilities()) {
                    *e += p / 8.0;
                }
            }
            for (a, e) in f.predict(row).probabilities().iter().zip(expect) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn seeds_give_different_bootstraps() {
        let mut a = bootstrap_indices(100, 1, 0);
        let mut b = bootstrap_indices(100, 2, 0);
        a.sort_unstable();
        b.sort_unstable();
        assert_ne!(a, b);
        assert_eq!(bootstrap_indices(100, 1, 0), bootstrap_indices(100, 1, 0));
    }

    #[test]
    fn forest_training_is_deterministic() {
        let (x, y) = data(3);
        let a = train_forest(&x, &y, &ForestParams::default(), 11).unwrap();
        let b = train_forest(&x, &y, &ForestParams::default(), 11).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
