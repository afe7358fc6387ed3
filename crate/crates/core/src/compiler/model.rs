use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{
    expand_precision, extract_branches, map_tree, ColumnPart, ColumnSpec, Geometry, LeafEntry, PlanStats,
    QuantizerSpec, TreePlan, Word,
};
use crate::error::{Error, Result};
use crate::forest::{CascadeModel, DecisionTree};
use crate::scalar::Scalar;

pub const PLAN_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompileOptions {
    /// Feature quantizer bits. With `msb_lsb` set this must equal `n + m`.
    pub bits: u32,
    /// Split every constrained feature into `n` MSB and `m` LSB columns.
    pub msb_lsb: Option<(u32, u32)>,
    pub geometry: Geometry,
}

impl Default for CompileOptions {
    fn default() -> Self {
        Self {
            bits: 3,
            msb_lsb: None,
            geometry: Geometry::default(),
        }
    }
}

impl CompileOptions {
    pub fn validate(&self) -> Result<QuantizerSpec> {
        let spec = QuantizerSpec::new(self.bits)?;
        self.geometry.validate()?;
        if let Some((n, m)) = self.msb_lsb {
            if n < 1 || m < 1 {
                return Err(Error::config("MSB and LSB widths must be at least 1 bit"));
            }
            if n + m != self.bits {
                return Err(Error::config(format!(
                    "msb_lsb ({n}, {m}) does not add up to {} bits",
                    self.bits
                )));
            }
        }
        Ok(spec)
    }

    /// Precision each device must resolve.
    pub fn cell_bits(&self) -> u32 {
        self.msb_lsb.map_or(self.bits, |(n, m)| n.max(m))
    }

    pub fn columns(&self, feature_count: usize) -> Vec<ColumnSpec> {
        match self.msb_lsb {
            None => (0..feature_count)
                .map(|feature| ColumnSpec {
                    feature,
                    part: ColumnPart::Whole,
                    bits: self.bits,
                })
                .collect(),
            Some((n, m)) => (0..feature_count)
                .flat_map(|feature| {
                    [
                        ColumnSpec {
                            feature,
                            part: ColumnPart::Msb,
                            bits: n,
                        },
                        ColumnSpec {
                            feature,
                            part: ColumnPart::Lsb,
                            bits: m,
                        },
                    ]
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedBranch {
    pub layer: usize,
    pub forest: usize,
    pub tree: usize,
    pub leaf: usize,
    pub samples: usize,
}

/// Compiled cascade: `layers[l][f][t]` is the plan of tree `t` of forest `f`
/// in layer `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ModelPlan<T: Scalar> {
    pub version: u32,
    pub options: CompileOptions,
    pub original_feature_count: usize,
    pub class_count: usize,
    pub carried_features: Vec<usize>,
    pub layers: Vec<Vec<Vec<TreePlan<T>>>>,
    pub dropped: Vec<DroppedBranch>,
}

fn compile_tree<T: Scalar>(
    tree: &DecisionTree<T>,
    width: usize,
    opts: &CompileOptions,
    spec: QuantizerSpec,
) -> Result<(TreePlan<T>, Vec<(usize, usize)>)> {
    let set = extract_branches(tree, spec);
    let mut words: Vec<Word> = Vec::new();
    let mut rows = Vec::new();
    for b in &set.branches {
        let leaf = LeafEntry {
            leaf: b.leaf,
            distribution: b.distribution.clone(),
            samples: b.samples,
        };
        match opts.msb_lsb {
            None => {
                words.push(b.intervals.clone());
                rows.push(leaf);
            }
            Some((n, m)) => {
                for w in expand_precision(b, n, m)? {
                    words.push(w);
                    rows.push(leaf.clone());
                }
            }
        }
    }
    let plan = map_tree(
        &words,
        rows,
        opts.columns(width),
        tree.leaf_count(),
        spec.bits,
        opts.geometry,
    )?;
    let dropped = set.dropped.iter().map(|b| (b.leaf, b.samples)).collect();
    Ok((plan, dropped))
}

/// Compile every tree of `model`. Thresholds are cut at `opts.bits`
/// regardless of whether the model was quantized beforehand.
pub fn compile_model<T: Scalar>(model: &CascadeModel<T>, opts: &CompileOptions) -> Result<ModelPlan<T>> {
    let spec = opts.validate()?;
    model.validate()?;
    let mut layers = Vec::with_capacity(model.layers.len());
    let mut dropped = Vec::new();
    for (l, layer) in model.layers.iter().enumerate() {
        let width = model.layer_input_width(l);
        let mut forests = Vec::with_capacity(layer.len());
        for (f, forest) in layer.iter().enumerate() {
            let mut trees = Vec::with_capacity(forest.trees.len());
            for (t, tree) in forest.trees.iter().enumerate() {
                let (plan, lost) = compile_tree(tree, width, opts, spec)?;
                dropped.extend(lost.into_iter().map(|(leaf, samples)| DroppedBranch {
                    layer: l,
                    forest: f,
                    tree: t,
                    leaf,
                    samples,
                }));
                trees.push(plan);
            }
            forests.push(trees);
        }
        layers.push(forests);
    }
    Ok(ModelPlan {
        version: PLAN_VERSION,
        options: *opts,
        original_feature_count: model.original_feature_count,
        class_count: model.class_count,
        carried_features: model.carried_features.clone(),
        layers,
        dropped,
    })
}

impl<T: Scalar> ModelPlan<T> {
    pub fn quantizer(&self) -> QuantizerSpec {
        QuantizerSpec {
            bits: self.options.bits,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != PLAN_VERSION {
            return Err(Error::Format(format!("unsupported plan version {}", self.version)));
        }
        self.options.validate()?;
        for (l, layer) in self.layers.iter().enumerate() {
            let width = self.layer_input_width(l);
            for plan in layer.iter().flatten() {
                plan.validate()?;
                if plan.columns.iter().any(|c| c.feature >= width) {
                    return Err(Error::Consistency(format!("layer {l} plan reads past its input")));
                }
            }
        }
        Ok(())
    }

    pub fn layer_input_width(&self, l: usize) -> usize {
        if l == 0 {
            self.original_feature_count
        } else {
            self.carried_features.len() + self.layers[l - 1].len() * self.class_count
        }
    }

    pub fn trees(&self) -> impl Iterator<Item = &TreePlan<T>> {
        self.layers.iter().flatten().flatten()
    }

    pub fn stats(&self) -> PlanStats {
        let mut s = PlanStats::default();
        for p in self.trees() {
            s += p.stats();
        }
        s
    }

    pub fn layer_stats(&self, l: usize) -> PlanStats {
        let mut s = PlanStats::default();
        for p in self.layers[l].iter().flatten() {
            s += p.stats();
        }
        s
    }

    pub fn dropped_samples(&self) -> usize {
        self.dropped.iter().map(|d| d.samples).sum()
    }

    /// Per-tree CSV summary.
    pub fn write_report_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let to_err = |e: csv::Error| Error::Format(e.to_string());
        w.write_record([
            "layer",
            "forest",
            "tree",
            "source_leaves",
            "logical_rows",
            "dropped_branches",
            "arrays",
            "interval_cells",
            "utilized_cells",
            "padding_cells",
            "unused_cells",
            "dont_care_fraction",
        ])
        .map_err(to_err)?;
        for (l, layer) in self.layers.iter().enumerate() {
            for (f, forest) in layer.iter().enumerate() {
                for (t, plan) in forest.iter().enumerate() {
                    let s = plan.stats();
                    let dropped = self
                        .dropped
                        .iter()
                        .filter(|d| (d.layer, d.forest, d.tree) == (l, f, t))
                        .count();
                    w.write_record([
                        l.to_string(),
                        f.to_string(),
                        t.to_string(),
                        s.source_leaves.to_string(),
                        s.logical_rows.to_string(),
                        dropped.to_string(),
                        s.arrays.to_string(),
                        s.interval_cells.to_string(),
                        s.utilized_cells.to_string(),
                        s.padding_cells.to_string(),
                        s.unused_cells.to_string(),
                        format!("{:.6}", s.dont_care_fraction()),
                    ])
                    .map_err(to_err)?;
                }
            }
        }
        w.flush().map_err(|e| Error::io("plan report", e))?;
        Ok(())
    }
}
