use serde::{Deserialize, Serialize};

use super::{program_tree, Mode, ProgrammedTree, SearchBuffers, Variation};
use crate::compiler::ModelPlan;
use crate::datasets::{FeatureMatrix, LabelVector};
use crate::device::DeviceParams;
use crate::error::{Error, Result};
use crate::forest::ClassDistribution;
use crate::scalar::Scalar;

/// Every tree of a model plan programmed once (one chip instance).
#[derive(Debug, Clone)]
pub struct ProgrammedModel<T: Scalar> {
    pub mode: Mode,
    pub layers: Vec<Vec<Vec<ProgrammedTree<T>>>>,
}

pub fn program_model<T: Scalar>(
    plan: &ModelPlan<T>,
    mode: Mode,
    params: &DeviceParams,
    variation: Option<Variation>,
) -> ProgrammedModel<T> {
    let mut tree_id = 0;
    let layers = plan
        .layers
        .iter()
        .map(|layer| {
            layer
                .iter()
                .map(|forest| {
                    forest
                        .iter()
                        .map(|p| {
                            tree_id += 1;
                            program_tree(p, mode, params, variation, tree_id - 1)
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    ProgrammedModel { mode, layers }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct InferenceTrace<T: Scalar> {
    /// Forest outputs of every layer.
    pub layer_outputs: Vec<Vec<ClassDistribution<T>>>,
    pub distribution: ClassDistribution<T>,
    pub tree_searches: usize,
    pub abstentions: usize,
    /// Forests in which every tree abstained (replaced by a uniform vote).
    pub forest_fallbacks: usize,
    pub arrays_activated: usize,
}

/// Run the cascade on the chip: each layer's input (carried original
/// features plus previous forest outputs) is quantized and searched.
pub fn infer_cascade_mapped<T: Scalar>(
    plan: &ModelPlan<T>,
    chip: &ProgrammedModel<T>,
    x: &[T],
    params: &DeviceParams,
) -> InferenceTrace<T> {
    let spec = plan.quantizer();
    let c = plan.class_count;
    let mut buf = SearchBuffers::default();
    let mut trace = InferenceTrace {
        layer_outputs: Vec::with_capacity(plan.layers.len()),
        distribution: ClassDistribution::uniform(c),
        tree_searches: 0,
        abstentions: 0,
        forest_fallbacks: 0,
        arrays_activated: 0,
    };
    let mut bins: Vec<u32> = Vec::new();
    for (l, layer) in plan.layers.iter().enumerate() {
        bins.clear();
        if l == 0 {
            bins.extend(x.iter().map(|v| spec.bin(v.to_f64_lossy())));
        } else {
            bins.extend(plan.carried_features.iter().map(|&f| spec.bin(x[f].to_f64_lossy())));
            for d in &trace.layer_outputs[l - 1] {
                let d: &ClassDistribution<T> = d;
                bins.extend(d.probabilities().iter().map(|v: &T| spec.bin(v.to_f64_lossy())));
            }
        }
        let mut outputs = Vec::with_capacity(layer.len());
        for (f, forest) in layer.iter().enumerate() {
            let mut votes = Vec::with_capacity(forest.len());
            for (t, tree_plan) in forest.iter().enumerate() {
                let chip_tree = &chip.layers[l][f][t];
                trace.tree_searches += 1;
                trace.arrays_activated += chip_tree.arrays;
                match chip_tree.infer(tree_plan, &bins, params, &mut buf) {
                    Some(d) => votes.push(d),
                    None => trace.abstentions += 1,
                }
            }
            let out = ClassDistribution::mean(&votes, c).unwrap_or_else(|| {
                trace.forest_fallbacks += 1;
                ClassDistribution::uniform(c)
            });
            outputs.push(out);
        }
        trace.layer_outputs.push(outputs);
    }
    if let Some(last) = trace.layer_outputs.last() {
        trace.distribution = ClassDistribution::mean(last, c).expect("non-empty layer");
    }
    trace
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub samples: usize,
    pub accuracy: f64,
    /// Abstaining tree searches over all tree searches.
    pub abstention_rate: f64,
    pub forest_fallbacks: usize,
    /// Arrays searched per classification.
    pub arrays_activated: f64,
    pub predictions: Vec<usize>,
}

pub fn evaluate<T: Scalar>(
    plan: &ModelPlan<T>,
    chip: &ProgrammedModel<T>,
    x: &FeatureMatrix<T>,
    y: &LabelVector,
    params: &DeviceParams,
) -> Result<EvalSummary> {
    if x.sample_count() == 0 {
        return Err(Error::config("evaluation set is empty"));
    }
    if x.sample_count() != y.len() {
        return Err(Error::Consistency("features and labels differ in length".into()));
    }
    if x.feature_count() != plan.original_feature_count {
        return Err(Error::Consistency(format!(
            "plan expects {} features, data has {}",
            plan.original_feature_count,
            x.feature_count()
        )));
    }
    let (mut hits, mut searches, mut abstained, mut fallbacks, mut arrays) = (0, 0, 0, 0, 0);
    let mut predictions = Vec::with_capacity(y.len());
    for (row, &label) in x.rows().zip(y.labels()) {
        let t = infer_cascade_mapped(plan, chip, row, params);
        let p = t.distribution.argmax();
        hits += usize::from(p == label);
        predictions.push(p);
        searches += t.tree_searches;
        abstained += t.abstentions;
        fallbacks += t.forest_fallbacks;
        arrays += t.arrays_activated;
    }
    let n = y.len() as f64;
    Ok(EvalSummary {
        samples: y.len(),
        accuracy: hits as f64 / n,
        abstention_rate: abstained as f64 / searches.max(1) as f64,
        forest_fallbacks: fallbacks,
        arrays_activated: arrays as f64 / n,
        predictions,
    })
}
