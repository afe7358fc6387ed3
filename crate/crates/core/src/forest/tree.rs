use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ClassDistribution;
use crate::datasets::{FeatureMatrix, LabelVector};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    /// Best Gini split over a random feature subset.
    Standard,
    /// Uniformly random feature and threshold.
    CompletelyRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeaturesPerSplit {
    Sqrt,
    All,
    Count(usize),
}

impl FeaturesPerSplit {
    pub fn resolve(self, feature_count: usize) -> Result<usize> {
        let k = match self {
            FeaturesPerSplit::Sqrt => ((feature_count as f64).sqrt() as usize).max(1),
            FeaturesPerSplit::All => feature_count,
            FeaturesPerSplit::Count(k) => k,
        };
        if k == 0 || k > feature_count {
            return Err(Error::config(format!(
                "features_per_split {k} invalid for {feature_count} features"
            )));
        }
        Ok(k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub features_per_split: FeaturesPerSplit,
    pub flavor: Flavor,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_leaf: 1,
            features_per_split: FeaturesPerSplit::Sqrt,
            flavor: Flavor::Standard,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node<T> {
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
    Leaf {
        distribution: ClassDistribution<T>,
        /// Training samples (with bootstrap multiplicity) that reached the leaf.
        samples: usize,
    },
}

/// Binary classification tree stored as an arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "TreeDoc<T>", try_from = "TreeDoc<T>", bound = "T: Scalar")]
pub struct DecisionTree<T: Scalar> {
    nodes: Vec<Node<T>>,
    feature_count: usize,
    class_count: usize,
}

impl<T: Scalar> DecisionTree<T> {
    /// Single-leaf tree.
    pub fn leaf(distribution: ClassDistribution<T>, feature_count: usize) -> Self {
        let class_count = distribution.class_count();
        Self {
            nodes: vec![Node::Leaf {
                distribution,
                samples: 0,
            }],
            feature_count,
            class_count,
        }
    }

    /// Build from an arena. Node 0 must be the root and every node must be
    /// reachable exactly once.
    pub fn from_nodes(nodes: Vec<Node<T>>, feature_count: usize, class_count: usize) -> Result<Self> {
        let tree = Self {
            nodes,
            feature_count,
            class_count,
        };
        tree.validate()?;
        Ok(tree)
    }

    fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Consistency("tree has no nodes".into()));
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if i >= self.nodes.len() || seen[i] {
                return Err(Error::Consistency(format!("node {i} dangling or shared")));
            }
            seen[i] = true;
            match &self.nodes[i] {
                Node::Split {
                    feature, left, right, ..
                } => {
                    if *feature >= self.feature_count {
                        return Err(Error::Consistency(format!(
                            "split on feature {feature} beyond width {}",
                            self.feature_count
                        )));
                    }
                    stack.push(*right);
                    stack.push(*left);
                }
                Node::Leaf { distribution, .. } => {
                    if distribution.class_count() != self.class_count {
                        return Err(Error::Consistency("leaf class count mismatch".into()));
                    }
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Consistency("unreachable nodes in tree".into()));
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Depth of the deepest leaf (a single-leaf tree has depth 0).
    pub fn max_depth(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, d)) = stack.pop() {
            match &self.nodes[i] {
                Node::Split { left, right, .. } => {
                    stack.push((*left, d + 1));
                    stack.push((*right, d + 1));
                }
                Node::Leaf { .. } => best = best.max(d),
            }
        }
        best
    }

    /// Arena index of the leaf reached by `x`.
    pub fn leaf_index(&self, x: &[T]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { .. } => return i,
            }
        }
    }

    pub fn predict(&self, x: &[T]) -> &ClassDistribution<T> {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf { distribution, .. } => distribution,
            Node::Split { .. } => unreachable!("leaf_index returns leaves"),
        }
    }

    /// Leaf arena indices in depth-first, left-before-right order.
    pub fn leaves_in_order(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            match &self.nodes[i] {
                Node::Split { left, right, .. } => {
                    stack.push(*right);
                    stack.push(*left);
                }
                Node::Leaf { .. } => out.push(i),
            }
        }
        out
    }

    /// Copy of the tree with every threshold rewritten by `f`.
    pub fn map_thresholds(&self, f: impl Fn(T) -> T) -> Self {
        let nodes = self
            .nodes
            .iter()
            .map(|n| match n {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => Node::Split {
                    feature: *feature,
                    threshold: f(*threshold),
                    left: *left,
                    right: *right,
                },
                leaf => leaf.clone(),
            })
            .collect();
        Self {
            nodes,
            feature_count: self.feature_count,
            class_count: self.class_count,
        }
    }
}

// Nested on-disk form.

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case", bound = "T: Scalar")]
enum NodeDoc<T: Scalar> {
    Split {
        feature: usize,
        threshold: T,
        left: Box<NodeDoc<T>>,
        right: Box<NodeDoc<T>>,
    },
    Leaf {
        distribution: ClassDistribution<T>,
        samples: usize,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct TreeDoc<T: Scalar> {
    feature_count: usize,
    class_count: usize,
    root: NodeDoc<T>,
}

impl<T: Scalar> From<DecisionTree<T>> for TreeDoc<T> {
    fn from(tree: DecisionTree<T>) -> Self {
        fn build<T: Scalar>(nodes: &[Node<T>], i: usize) -> NodeDoc<T> {
            match &nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => NodeDoc::Split {
                    feature: *feature,
                    threshold: *threshold,
                    left: Box::new(build(nodes, *left)),
                    right: Box::new(build(nodes, *right)),
                },
                Node::Leaf { distribution, samples } => NodeDoc::Leaf {
                    distribution: distribution.clone(),
                    samples: *samples,
                },
            }
        }
        TreeDoc {
            feature_count: tree.feature_count,
            class_count: tree.class_count,
            root: build(&tree.nodes, 0),
        }
    }
}

impl<T: Scalar> TryFrom<TreeDoc<T>> for DecisionTree<T> {
    type Error = Error;

    fn try_from(doc: TreeDoc<T>) -> Result<Self> {
        fn flatten<T: Scalar>(doc: NodeDoc<T>, nodes: &mut Vec<Node<T>>) -> usize {
            let at = nodes.len();
            match doc {
                NodeDoc::Leaf { distribution, samples } => nodes.push(Node::Leaf { distribution, samples }),
                NodeDoc::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    nodes.push(Node::Leaf {
                        distribution: ClassDistribution::new(Vec::new()),
                        samples: 0,
                    });
                    let l = flatten(*left, nodes);
                    let r = flatten(*right, nodes);
                    nodes[at] = Node::Split {
                        feature,
                        threshold,
                        left: l,
                        right: r,
                    };
                }
            }
            at
        }
        let mut nodes = Vec::new();
        flatten(doc.root, &mut nodes);
        DecisionTree::from_nodes(nodes, doc.feature_count, doc.class_count)
    }
}

// Training.

struct Task {
    node: usize,
    start: usize,
    end: usize,
    depth: usize,
}

struct Builder<'a, T: Scalar, R: Rng> {
    x: &'a FeatureMatrix<T>,
    y: &'a [usize],
    class_count: usize,
    params: TreeParams,
    mtry: usize,
    rng: &'a mut R,
    // scratch
    pairs: Vec<(T, usize)>,
    features: Vec<usize>,
}

struct Candidate<T> {
    feature: usize,
    threshold: T,
    score: f64,
}

impl<T: Scalar, R: Rng> Builder<'_, T, R> {
    fn counts(&self, samples: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.class_count];
        for &s in samples {
            c[self.y[s]] += 1;
        }
        c
    }

    /// Best Gini split of `samples` on `feature`, maximizing
    /// `sum_l c^2 / n_l + sum_r c^2 / n_r` (equivalent to minimizing the
    /// weighted child impurity).
    fn best_on_feature(&mut self, samples: &[usize], feature: usize, totals: &[usize]) -> Option<Candidate<T>> {
        let msl = self.params.min_samples_leaf.max(1);
        let n = samples.len();
        self.pairs.clear();
        self.pairs
            .extend(samples.iter().map(|&s| (self.x.get(s, feature), self.y[s])));
        self.pairs
            .sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));
        if self.pairs[0].0 == self.pairs[n - 1].0 {
            return None;
        }
        let mut left = vec![0usize; self.class_count];
        let mut right = totals.to_vec();
        let mut sq_left = 0.0f64;
        let mut sq_right: f64 = totals.iter().map(|&c| (c * c) as f64).sum();
        let mut best: Option<Candidate<T>> = None;
        for i in 0..n - 1 {
            let k = self.pairs[i].1;
            sq_left += (2 * left[k] + 1) as f64;
            sq_right -= (2 * right[k] - 1) as f64;
            left[k] += 1;
            right[k] -= 1;
            let nl = i + 1;
            let nr = n - nl;
            let (a, b) = (self.pairs[i].0, self.pairs[i + 1].0);
            if a == b || nl < msl || nr < msl {
                continue;
            }
            let score = sq_left / nl as f64 + sq_right / nr as f64;
            if best.as_ref().is_none_or(|c| score > c.score) {
                let mut t = (a + b) * T::half();
                if t >= b {
                    t = a;
                }
                best = Some(Candidate {
                    feature,
                    threshold: t,
                    score,
                });
            }
        }
        best
    }

    fn standard_split(&mut self, samples: &[usize], totals: &[usize]) -> Option<(usize, T)> {
        let f = self.x.feature_count();
        let mut chosen = index::sample(self.rng, f, self.mtry).into_vec();
        chosen.sort_unstable();
        let mut best: Option<Candidate<T>> = None;
        for &feat in &chosen {
            if let Some(c) = self.best_on_feature(samples, feat, totals) {
                if best.as_ref().is_none_or(|b| c.score > b.score) {
                    best = Some(c);
                }
            }
        }
        if best.is_none() && self.mtry < f {
            // every sampled feature was constant here; widen to the rest
            let mut in_subset = vec![false; f];
            chosen.iter().for_each(|&c| in_subset[c] = true);
            for feat in (0..f).filter(|&j| !in_subset[j]) {
                if let Some(c) = self.best_on_feature(samples, feat, totals) {
                    if best.as_ref().is_none_or(|b| c.score > b.score) {
                        best = Some(c);
                    }
                }
            }
        }
        best.map(|c| (c.feature, c.threshold))
    }

    fn random_split(&mut self, samples: &[usize]) -> Option<(usize, T)> {
        let f = self.x.feature_count();
        let msl = self.params.min_samples_leaf.max(1);
        self.features.clear();
        self.features.extend(0..f);
        for drawn in 0..f {
            let j = self.rng.random_range(drawn..f);
            self.features.swap(drawn, j);
            let feat = self.features[drawn];
            let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
            for &s in samples {
                let v = self.x.get(s, feat);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if lo >= hi {
                continue;
            }
            let u: f64 = self.rng.random();
            let mut t = T::from_f64_lossy(lo.to_f64_lossy() + u * (hi - lo).to_f64_lossy());
            if t >= hi || t < lo {
                t = lo;
            }
            let nl = samples.iter().filter(|&&s| self.x.get(s, feat) <= t).count();
            if nl < msl || samples.len() - nl < msl {
                return None;
            }
            return Some((feat, t));
        }
        None
    }
}

/// Grow one tree on the rows listed in `samples` (duplicates allowed, as in
/// a bootstrap resample).
pub fn train_tree_on<T: Scalar, R: Rng>(
    x: &FeatureMatrix<T>,
    y: &LabelVector,
    samples: &[usize],
    params: &TreeParams,
    rng: &mut R,
) -> Result<DecisionTree<T>> {
    if x.sample_count() != y.len() {
        return Err(Error::Consistency("features and labels differ in length".into()));
    }
    if samples.is_empty() || x.feature_count() == 0 {
        return Err(Error::config("cannot train a tree on an empty sample set"));
    }
    let mtry = params.features_per_split.resolve(x.feature_count())?;
    let class_count = y.class_count();
    let mut builder = Builder {
        x,
        y: y.labels(),
        class_count,
        params: *params,
        mtry,
        rng,
        pairs: Vec::with_capacity(samples.len()),
        features: Vec::with_capacity(x.feature_count()),
    };

    let mut order = samples.to_vec();
    let mut nodes: Vec<Node<T>> = vec![Node::Leaf {
        distribution: ClassDistribution::new(Vec::new()),
        samples: 0,
    }];
    let mut stack = vec![Task {
        node: 0,
        start: 0,
        end: order.len(),
        depth: 0,
    }];
    let mut left_buf = Vec::new();
    let mut right_buf = Vec::new();
    while let Some(task) = stack.pop() {
        let here = &order[task.start..task.end];
        if here.is_empty() {
            return Err(Error::Internal("empty node during tree growth".into()));
        }
        let totals = builder.counts(here);
        let pure = totals.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_capped = params.max_depth.is_some_and(|d| task.depth >= d);
        let too_small = here.len() < 2 * params.min_samples_leaf.max(1);
        let split = if pure || depth_capped || too_small {
            None
        } else {
            match params.flavor {
                Flavor::Standard => builder.standard_split(here, &totals),
                Flavor::CompletelyRandom => builder.random_split(here),
            }
        };
        let Some((feature, threshold)) = split else {
            nodes[task.node] = Node::Leaf {
                distribution: ClassDistribution::from_counts(&totals),
                samples: here.len(),
            };
            continue;
        };
        left_buf.clear();
        right_buf.clear();
        for &s in here {
            if x.get(s, feature) <= threshold {
                left_buf.push(s);
            } else {
                right_buf.push(s);
            }
        }
        let mid = task.start + left_buf.len();
        order[task.start..mid].copy_from_slice(&left_buf);
        order[mid..task.end].copy_from_slice(&right_buf);
        let placeholder = || Node::Leaf {
            distribution: ClassDistribution::new(Vec::new()),
            samples: 0,
        };
        let left = nodes.len();
        nodes.push(placeholder());
        let right = nodes.len();
        nodes.push(placeholder());
        nodes[task.node] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        stack.push(Task {
            node: right,
            start: mid,
            end: task.end,
            depth: task.depth + 1,
        });
        stack.push(Task {
            node: left,
            start: task.start,
            end: mid,
            depth: task.depth + 1,
        });
    }
    DecisionTree::from_nodes(nodes, x.feature_count(), class_count)
}

/// Grow one tree on every row of `x`.
pub fn train_tree<T: Scalar, R: Rng>(
    x: &FeatureMatrix<T>,
    y: &LabelVector,
    params: &TreeParams,
    rng: &mut R,
) -> Result<DecisionTree<T>> {
    let all: Vec<usize> = (0..x.sample_count()).collect();
    train_tree_on(x, y, &all, params, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest, ProptestConfig};

    fn one_dim() -> (FeatureMatrix<f64>, LabelVector) {
        let x = FeatureMatrix::new(vec![0.1, 0.9], 2, 1).unwrap();
        let y = LabelVector::new(vec![0, 1], 2).unwrap();
        (x, y)
    }

    fn depth_one() -> TreeParams {
        TreeParams {
            max_depth: Some(1),
            ..TreeParams::default()
        }
    }

    #[test]
    fn unique_midpoint_split() {
        let (x, y) = one_dim();
        let tree = train_tree(&x, &y, &depth_one(), &mut rng::stream(0, &[])).unwrap();
        match &tree.nodes()[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 0.5);
            }
            other => panic!("expected split, got {other:?}"),
        }
        assert_eq!(tree.predict(&[0.1]).argmax(), 0);
        assert_eq!(tree.predict(&[0.9]).argmax(), 1);
    }

    #[test]
    fn boundary_goes_left() {
        let (x, y) = one_dim();
        let tree = train_tree(&x, &y, &depth_one(), &mut rng::stream(0, &[])).unwrap();
        assert_eq!(tree.predict(&[0.5]).probabilities(), &[1.0, 0.0]);
        assert_eq!(tree.predict(&[0.500001]).probabilities(), &[0.0, 1.0]);
    }

    #[test]
    fn pure_input_gives_single_leaf() {
        let x = FeatureMatrix::new(vec![0.1, 0.4, 0.7], 3, 1).unwrap();
        let y = LabelVector::new(vec![2, 2, 2], 3).unwrap();
        let tree = train_tree(&x, &y, &TreeParams::default(), &mut rng::stream(1, &[])).unwrap();
        assert_eq!(tree.leaf_count(), 1);
        assert_eq!(tree.predict(&[0.99]).probabilities(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn too_many_features_per_split_is_config_error() {
        let (x, y) = one_dim();
        let params = TreeParams {
            features_per_split: FeaturesPerSplit::Count(2),
            ..TreeParams::default()
        };
        assert!(matches!(
            train_tree(&x, &y, &params, &mut rng::stream(0, &[])),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn equal_gain_prefers_lowest_feature() {
        // two identical columns: both give the same perfect split
        let x = FeatureMatrix::new(vec![0.1, 0.1, 0.9, 0.9], 2, 2).unwrap();
        let y = LabelVector::new(vec![0, 1], 2).unwrap();
        let params = TreeParams {
            features_per_split: FeaturesPerSplit::All,
            ..TreeParams::default()
        };
        let tree = train_tree(&x, &y, &params, &mut rng::stream(5, &[])).unwrap();
        assert!(matches!(tree.nodes()[0], Node::Split { feature: 0, .. }));
    }

    fn random_data(seed: u64, n: usize, f: usize, c: usize) -> (FeatureMatrix<f64>, LabelVector) {
        let mut r = rng::stream(seed, &[99]);
        let vals = (0..n * f).map(|_| r.random::<f64>()).collect();
        let labels = (0..n).map(|_| r.random_range(0..c)).collect();
        (
            FeatureMatrix::new(vals, n, f).unwrap(),
            LabelVector::new(labels, c).unwrap(),
        )
    }

    #[test]
    fn training_is_deterministic() {
        let (x, y) = random_data(3, 200, 5, 3);
        for flavor in [Flavor::Standard, Flavor::CompletelyRandom] {
            let p = TreeParams {
                flavor,
                ..TreeParams::default()
            };
            let a = train_tree(&x, &y, &p, &mut rng::stream(9, &[])).unwrap();
            let b = train_tree(&x, &y, &p, &mut rng::stream(9, &[])).unwrap();
            assert_eq!(a, b);
            assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        }
    }

    #[test]
    fn min_samples_leaf_respected() {
        let (x, y) = random_data(4, 300, 4, 2);
        let p = TreeParams {
            min_samples_leaf: 7,
            ..TreeParams::default()
        };
        let tree = train_tree(&x, &y, &p, &mut rng::stream(2, &[])).unwrap();
        for n in tree.nodes() {
            if let Node::Leaf { samples, .. } = n {
                assert!(*samples >= 7);
            }
        }
    }

    #[test]
    fn json_round_trip_keeps_predictions() {
        let (x, y) = random_data(8, 150, 3, 4);
        let tree = train_tree(&x, &y, &TreeParams::default(), &mut rng::stream(1, &[])).unwrap();
        let json = serde_json::to_string(&tree).unwrap();
        let back: DecisionTree<f64> = serde_json::from_str(&json).unwrap();
        for row in x.rows() {
            assert_eq!(tree.predict(row), back.predict(row));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn leaves_partition_and_distributions_normalized(
            seed in 0u64..1000,
            crf in any::<bool>(),
        ) {
            let (x, y) = random_data(seed, 120, 4, 3);
            let p = TreeParams {
                flavor: if crf { Flavor::CompletelyRandom } else { Flavor::Standard },
                ..TreeParams::default()
            };
            let tree = train_tree(&x, &y, &p, &mut rng::stream(seed, &[1])).unwrap();
            for n in tree.nodes() {
                if let Node::Leaf { distribution, .. } = n {
                    prop_assert!((distribution.sum() - 1.0).abs() < 1e-9);
                    prop_assert!(distribution.probabilities().iter().all(|&v| v >= 0.0));
                }
            }
            // random probes each reach exactly one leaf, and that leaf is one
            // of the tree's leaves
            let leaves = tree.leaves_in_order();
            prop_assert_eq!(leaves.len(), tree.leaf_count());
            let mut r = rng::stream(seed, &[2]);
            for _ in 0..200 {
                let probe: Vec<f64> = (0..4).map(|_| r.random::<f64>()).collect();
                let leaf = tree.leaf_index(&probe);
                prop_assert!(leaves.contains(&leaf));
            }
        }
    }
}
