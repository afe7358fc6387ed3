use serde::{Deserialize, Serialize};

use super::{Interval, QuantizerSpec};
use crate::forest::{ClassDistribution, DecisionTree, Node};
use crate::scalar::Scalar;

/// Root-to-leaf path as per-feature bin intervals. Features absent from
/// `intervals` are don't-care.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BranchPlan<T: Scalar> {
    /// Arena index of the source leaf.
    pub leaf: usize,
    /// Position of the leaf in depth-first order.
    pub leaf_order: usize,
    /// Constrained features, sorted by feature index.
    pub intervals: Vec<(usize, Interval)>,
    pub distribution: ClassDistribution<T>,
    pub samples: usize,
}

impl<T: Scalar> BranchPlan<T> {
    pub fn interval(&self, feature: usize) -> Option<Interval> {
        self.intervals
            .binary_search_by_key(&feature, |&(f, _)| f)
            .ok()
            .map(|i| self.intervals[i].1)
    }

    /// Ideal containment test on a bin-space query.
    pub fn matches(&self, bins: &[u32]) -> bool {
        self.intervals.iter().all(|&(f, iv)| iv.contains(bins[f]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchSet<T: Scalar> {
    pub branches: Vec<BranchPlan<T>>,
    /// Leaves whose path became empty after quantization.
    pub dropped: Vec<BranchPlan<T>>,
}

impl<T: Scalar> BranchSet<T> {
    pub fn dropped_samples(&self) -> usize {
        self.dropped.iter().map(|b| b.samples).sum()
    }
}

/// One branch per leaf, in depth-first leaf order. Thresholds are cut with
/// `spec`, so quantized and unquantized trees give the same branches.
pub fn extract_branches<T: Scalar>(tree: &DecisionTree<T>, spec: QuantizerSpec) -> BranchSet<T> {
    let nodes = tree.nodes();
    let top = i64::from(spec.max_bin());
    let mut set = BranchSet {
        branches: Vec::new(),
        dropped: Vec::new(),
    };
    // (feature, went_left, cut) for each edge on the current path
    let mut path: Vec<(usize, bool, i64)> = Vec::new();
    let mut stack = vec![(0usize, 0usize, None::<(usize, bool, i64)>)];
    let mut leaf_order = 0;
    let mut scratch: Vec<(usize, i64, i64)> = Vec::new();
    while let Some((i, depth, edge)) = stack.pop() {
        path.truncate(depth.saturating_sub(1));
        if let Some(e) = edge {
            path.push(e);
        }
        match &nodes[i] {
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                let c = i64::from(spec.cut(threshold.to_f64_lossy()));
                stack.push((*right, depth + 1, Some((*feature, false, c))));
                stack.push((*left, depth + 1, Some((*feature, true, c))));
            }
            Node::Leaf { distribution, samples } => {
                scratch.clear();
                for &(f, left, c) in &path {
                    let (lo, hi) = if left { (0, c - 1) } else { (c, top) };
                    match scratch.iter_mut().find(|s| s.0 == f) {
                        Some(s) => {
                            s.1 = s.1.max(lo);
                            s.2 = s.2.min(hi);
                        }
                        None => scratch.push((f, lo, hi)),
                    }
                }
                scratch.sort_unstable_by_key(|s| s.0);
                let empty = scratch.iter().any(|s| s.1 > s.2);
                let intervals = if empty {
                    Vec::new()
                } else {
                    scratch
                        .iter()
                        .filter(|s| !(s.1 == 0 && s.2 == top))
                        .map(|s| (s.0, Interval::new(s.1 as u32, s.2 as u32)))
                        .collect()
                };
                let plan = BranchPlan {
                    leaf: i,
                    leaf_order,
                    intervals,
                    distribution: distribution.clone(),
                    samples: *samples,
                };
                leaf_order += 1;
                if empty {
                    set.dropped.push(plan);
                } else {
                    set.branches.push(plan);
                }
            }
        }
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::Node;

    fn leaf(class: usize) -> Node<f64> {
        Node::Leaf {
            distribution: ClassDistribution::one_hot(class, 3),
            samples: 1,
        }
    }

    /// x0 <= 0.5 -> A; else x1 <= 0.25 -> B else C
    fn example() -> DecisionTree<f64> {
        let nodes = vec![
            Node::Split {
                feature: 0,
                threshold: 0.5,
                left: 1,
                right: 2,
            },
            leaf(0),
            Node::Split {
                feature: 1,
                threshold: 0.25,
                left: 3,
                right: 4,
            },
            leaf(1),
            leaf(2),
        ];
        DecisionTree::from_nodes(nodes, 2, 3).unwrap()
    }

    #[test]
    fn hand_intersection() {
        let set = extract_branches(&example(), QuantizerSpec::new(2).unwrap());
        assert!(set.dropped.is_empty());
        let got: Vec<_> = set
            .branches
            .iter()
            .map(|b| (b.distribution.argmax(), b.intervals.clone()))
            .collect();
        assert_eq!(
            got,
            vec![
                (0, vec![(0, Interval::new(0, 1))]),
                (1, vec![(0, Interval::new(2, 3)), (1, Interval::new(0, 0))]),
                (2, vec![(0, Interval::new(2, 3)), (1, Interval::new(1, 3))]),
            ]
        );
    }

    #[test]
    fn single_leaf_is_all_dont_care() {
        let tree = DecisionTree::leaf(ClassDistribution::<f64>::one_hot(0, 2), 3);
        let set = extract_branches(&tree, QuantizerSpec::new(4).unwrap());
        assert_eq!(set.branches.len(), 1);
        assert!(set.branches[0].intervals.is_empty());
    }

    #[test]
    fn collapsed_split_is_dropped() {
        // at 1 bit both 0.3 and 0.45 cut at 1, so the middle leaf is empty
        let nodes = vec![
            Node::Split {
                feature: 0,
                threshold: 0.45,
                left: 1,
                right: 4,
            },
            Node::Split {
                feature: 0,
                threshold: 0.3,
                left: 2,
                right: 3,
            },
            leaf(0),
            leaf(1),
            leaf(2),
        ];
        let tree = DecisionTree::from_nodes(nodes, 1, 3).unwrap();
        let set = extract_branches(&tree, QuantizerSpec::new(1).unwrap());
        assert_eq!(set.dropped.len(), 1);
        assert_eq!(set.dropped[0].distribution.argmax(), 1);
        assert_eq!(set.dropped_samples(), 1);
        assert_eq!(set.branches.len(), 2);
    }
}
