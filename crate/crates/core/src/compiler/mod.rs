//! Tree-to-ACAM compilation in integer bin space.
//!
//! A feature value `x` in `[0, 1]` falls in bin `min(floor(x * 2^b), 2^b - 1)`;
//! a threshold `t` becomes cut `c = clamp(round(t * 2^b), 0, 2^b)`, sending
//! bins `[0, c - 1]` left and `[c, 2^b - 1]` right.

mod branches;
mod expand;
mod layout;
mod model;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{CascadeModel, DecisionTree};
use crate::scalar::Scalar;

pub use branches::{extract_branches, BranchPlan, BranchSet};
pub use expand::{expand_interval, expand_precision, ExpandedRow};
pub use layout::{
    map_tree, ArrayPlan, CellConfig, ColumnPart, ColumnSpec, Geometry, LeafEntry, PlacedCell, PlanStats, TreePlan, Word,
};
pub use model::{compile_model, CompileOptions, DroppedBranch, ModelPlan, PLAN_VERSION};

pub const MAX_BITS: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizerSpec {
    pub bits: u32,
}

impl QuantizerSpec {
    pub fn new(bits: u32) -> Result<Self> {
        if !(1..=MAX_BITS).contains(&bits) {
            return Err(Error::config(format!("quantizer bits {bits} outside 1..={MAX_BITS}")));
        }
        Ok(Self { bits })
    }

    pub fn bin_count(self) -> u32 {
        1 << self.bits
    }

    pub fn max_bin(self) -> u32 {
        self.bin_count() - 1
    }

    pub fn bin(self, x: f64) -> u32 {
        let scaled = (x * f64::from(self.bin_count())).floor();
        if scaled <= 0.0 {
            0
        } else {
            (scaled as u32).min(self.max_bin())
        }
    }

    pub fn cut(self, t: f64) -> u32 {
        let scaled = (t * f64::from(self.bin_count())).round();
        if scaled <= 0.0 {
            0
        } else {
            (scaled as u32).min(self.bin_count())
        }
    }

    /// Boundary value `c / 2^b` stored in a quantized tree.
    pub fn cut_value(self, c: u32) -> f64 {
        f64::from(c) / f64::from(self.bin_count())
    }

    pub fn bin_center(self, q: u32) -> f64 {
        (f64::from(q) + 0.5) / f64::from(self.bin_count())
    }

    /// Replace `x` by the center of its bin.
    pub fn snap<T: Scalar>(self, x: T) -> T {
        T::from_f64_lossy(self.bin_center(self.bin(x.to_f64_lossy())))
    }
}

/// Inclusive bin interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub lo: u32,
    pub hi: u32,
}

impl Interval {
    pub fn new(lo: u32, hi: u32) -> Self {
        debug_assert!(lo <= hi);
        Self { lo, hi }
    }

    pub fn contains(self, q: u32) -> bool {
        self.lo <= q && q <= self.hi
    }

    pub fn is_full(self, bits: u32) -> bool {
        self.lo == 0 && self.hi == (1 << bits) - 1
    }
}

/// Tree with every threshold replaced by its cut value `c / 2^b`.
pub fn quantize_thresholds<T: Scalar>(tree: &DecisionTree<T>, spec: QuantizerSpec) -> DecisionTree<T> {
    tree.map_thresholds(|t| T::from_f64_lossy(spec.cut_value(spec.cut(t.to_f64_lossy()))))
}

/// Quantize every tree of a cascade; the result records `spec.bits`.
pub fn quantize_model<T: Scalar>(model: &CascadeModel<T>, spec: QuantizerSpec) -> CascadeModel<T> {
    let mut q = model.clone();
    for forest in q.layers.iter_mut().flatten() {
        for tree in forest.trees.iter_mut() {
            *tree = quantize_thresholds(tree, spec);
        }
    }
    q.quantizer_bits = Some(spec.bits);
    q
}

/// Reference prediction of a quantized model: every layer input is snapped
/// to its bin center before traversal.
pub fn predict_quantized<T: Scalar>(
    quantized: &CascadeModel<T>,
    spec: QuantizerSpec,
    x: &[T],
) -> crate::forest::ClassDistribution<T> {
    quantized.predict_mapped(x, &|v: &mut [T]| v.iter_mut().for_each(|e| *e = spec.snap(*e)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cut_rule_examples() {
        let b3 = QuantizerSpec::new(3).unwrap();
        assert_eq!(b3.cut(0.37), 3);
        assert_eq!(b3.cut_value(3), 0.375);
        let b1 = QuantizerSpec::new(1).unwrap();
        assert_eq!(b1.cut(0.5), 1);
        assert_eq!(b1.bin(0.49), 0);
        assert_eq!(b1.bin(0.5), 1);
    }

    #[test]
    fn bins_cover_unit_interval() {
        let s = QuantizerSpec::new(4).unwrap();
        assert_eq!(s.bin(0.0), 0);
        assert_eq!(s.bin(1.0), 15);
        assert_eq!(s.bin(-0.1), 0);
        assert_eq!(s.cut(1.7), 16);
        for q in 0..16 {
            assert_eq!(s.bin(s.bin_center(q)), q);
        }
    }

    #[test]
    fn zero_bits_rejected() {
        assert!(matches!(QuantizerSpec::new(0), Err(Error::Config(_))));
    }
}
