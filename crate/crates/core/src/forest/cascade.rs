use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{train_forest, ClassDistribution, Flavor, ForestParams, RandomForest, TreeParams};
use crate::datasets::{stratified_split, FeatureMatrix, LabelVector};
use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CascadeParams {
    /// One entry per forest in every layer.
    pub forests_per_layer: Vec<Flavor>,
    pub n_trees: usize,
    pub tree: TreeParams,
    pub max_layers: usize,
    /// Layers without validation improvement tolerated before stopping.
    pub patience: usize,
    pub cv_folds: usize,
    pub validation_fraction: f64,
    /// Fraction of the original features concatenated into layers after the first.
    pub carry_fraction: f64,
    /// Retrain the selected depth on training plus validation data.
    pub refit_full: bool,
}

impl Default for CascadeParams {
    fn default() -> Self {
        Self {
            forests_per_layer: vec![
                Flavor::Standard,
                Flavor::Standard,
                Flavor::CompletelyRandom,
                Flavor::CompletelyRandom,
            ],
            n_trees: 8,
            tree: TreeParams::default(),
            max_layers: 5,
            patience: 1,
            cv_folds: 3,
            validation_fraction: 0.2,
            carry_fraction: 1.0,
            refit_full: true,
        }
    }
}

impl CascadeParams {
    pub fn validate(&self) -> Result<()> {
        if self.forests_per_layer.is_empty() {
            return Err(Error::config("forests_per_layer is empty"));
        }
        if self.n_trees == 0 {
            return Err(Error::config("n_trees must be at least 1"));
        }
        if self.max_layers == 0 {
            return Err(Error::config("max_layers must be at least 1"));
        }
        if self.cv_folds < 2 {
            return Err(Error::config("cv_folds must be at least 2"));
        }
        if self.patience == 0 {
            return Err(Error::config("patience must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.carry_fraction) {
            return Err(Error::config("carry_fraction outside [0, 1]"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::config("validation_fraction outside (0, 1)"));
        }
        Ok(())
    }
}

/// Trained deep random forest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CascadeModel<T: Scalar> {
    pub original_feature_count: usize,
    pub class_count: usize,
    /// Original feature indices concatenated into layers after the first.
    pub carried_features: Vec<usize>,
    /// Bits of the threshold quantizer applied to this model, if any.
    pub quantizer_bits: Option<u32>,
    pub layers: Vec<Vec<RandomForest<T>>>,
}

impl<T: Scalar> CascadeModel<T> {
    pub fn new(
        layers: Vec<Vec<RandomForest<T>>>,
        original_feature_count: usize,
        class_count: usize,
        carried_features: Vec<usize>,
    ) -> Result<Self> {
        let model = Self {
            original_feature_count,
            class_count,
            carried_features,
            quantizer_bits: None,
            layers,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() || self.layers.iter().any(Vec::is_empty) {
            return Err(Error::Consistency("cascade needs non-empty layers".into()));
        }
        if self.carried_features.iter().any(|&f| f >= self.original_feature_count) {
            return Err(Error::Consistency("carried feature out of range".into()));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let width = self.layer_input_width(l);
            for forest in layer {
                if forest.feature_count != width || forest.class_count != self.class_count {
                    return Err(Error::Consistency(format!(
                        "layer {l} forest expects {} features, layer provides {width}",
                        forest.feature_count
                    )));
                }
            }
        }
        Ok(())
    }

    /// Input width of layer `l`.
    pub fn layer_input_width(&self, l: usize) -> usize {
        if l == 0 {
            self.original_feature_count
        } else {
            self.carried_features.len() + self.layers[l - 1].len() * self.class_count
        }
    }

    pub fn forest_count(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    pub fn tree_count(&self) -> usize {
        self.layers.iter().flatten().map(|f| f.trees.len()).sum()
    }

    pub fn leaf_count(&self) -> usize {
        self.layers.iter().flatten().map(RandomForest::leaf_count).sum()
    }

    /// Build layer `l`'s input from the original features and the previous
    /// layer's forest outputs.
    pub fn layer_input(&self, l: usize, original: &[T], previous: &[ClassDistribution<T>]) -> Vec<T> {
        if l == 0 {
            return original.to_vec();
        }
        let mut v = Vec::with_capacity(self.layer_input_width(l));
        v.extend(self.carried_features.iter().map(|&f| original[f]));
        for d in previous {
            v.extend_from_slice(d.probabilities());
        }
        v
    }

    pub fn predict(&self, x: &[T]) -> ClassDistribution<T> {
        self.predict_mapped(x, &|_| {})
    }

    /// Cascade prediction with `map` applied to every layer's input vector
    /// before traversal (used to evaluate on quantized inputs).
    pub fn predict_mapped(&self, x: &[T], map: &dyn Fn(&mut [T])) -> ClassDistribution<T> {
        let mut outputs: Vec<ClassDistribution<T>> = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut input = self.layer_input(l, x, &outputs);
            map(&mut input);
            outputs = layer.iter().map(|f| f.predict(&input)).collect();
        }
        ClassDistribution::mean(&outputs, self.class_count).expect("non-empty layer")
    }

    /// Fraction of samples whose argmax equals the label.
    pub fn accuracy(&self, x: &FeatureMatrix<T>, y: &LabelVector) -> f64 {
        let hits = x
            .rows()
            .zip(y.labels())
            .filter(|(row, &l)| self.predict(row).argmax() == l)
            .count();
        hits as f64 / y.len().max(1) as f64
    }
}

pub fn predict_cascade<T: Scalar>(model: &CascadeModel<T>, x: &[T]) -> ClassDistribution<T> {
    model.predict(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub layer: usize,
    pub validation_accuracy: f64,
    pub forest_validation_accuracy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    /// Layers grown during the validation-driven search.
    pub layers: Vec<LayerReport>,
    pub selected_layers: usize,
    pub best_validation_accuracy: f64,
    pub refit_full: bool,
    /// Accuracy of the returned model on the evaluation set, when one was given.
    pub eval_accuracy: Option<f64>,
}

/// Train a cascade on `(x, y)`.
pub fn train_cascade<T: Scalar>(
    x: &FeatureMatrix<T>,
    y: &LabelVector,
    params: &CascadeParams,
    seed: u64,
) -> Result<(CascadeModel<T>, TrainingReport)> {
    train_cascade_with_eval(x, y, None, params, seed)
}

/// As [`train_cascade`], additionally scoring the returned model on `eval`
/// with the layer-by-layer batch path.
pub fn train_cascade_with_eval<T: Scalar>(
    x: &FeatureMatrix<T>,
    y: &LabelVector,
    eval: Option<(&FeatureMatrix<T>, &LabelVector)>,
    params: &CascadeParams,
    seed: u64,
) -> Result<(CascadeModel<T>, TrainingReport)> {
    params.validate()?;
    if x.sample_count() != y.len() {
        return Err(Error::Consistency("features and labels differ in length".into()));
    }
    let carried = carried_features(x.feature_count(), params.carry_fraction, seed);

    let split = stratified_split(x, y, params.validation_fraction, rng::derive_seed(seed, &[tag::SPLIT]))?;
    if split.test.is_empty() || split.train.is_empty() {
        return Err(Error::config("validation split is empty"));
    }
    let (fx, fy) = (x.select(&split.train), y.select(&split.train));
    let (vx, vy) = (x.select(&split.test), y.select(&split.test));

    let grown = grow(&fx, &fy, Some((&vx, &vy)), &carried, params, params.max_layers, seed)?;
    let selected = grown.best_layers;

    let mut model = if params.refit_full {
        grow(x, y, None, &carried, params, selected, seed)?.model
    } else {
        let mut m = grown.model;
        m.layers.truncate(selected);
        m
    };
    model.layers.truncate(selected);
    model.validate()?;

    let eval_accuracy = eval.map(|(ex, ey)| batch_accuracy(&model, ex, ey));
    let report = TrainingReport {
        layers: grown.reports,
        selected_layers: selected,
        best_validation_accuracy: grown.best_accuracy,
        refit_full: params.refit_full,
        eval_accuracy,
    };
    Ok((model, report))
}

fn carried_features(feature_count: usize, fraction: f64, seed: u64) -> Vec<usize> {
    let keep = (feature_count as f64 * fraction).round() as usize;
    if keep >= feature_count {
        return (0..feature_count).collect();
    }
    let mut all: Vec<usize> = (0..feature_count).collect();
    all.shuffle(&mut rng::stream(seed, &[tag::CARRY]));
    let mut kept = all[..keep].to_vec();
    kept.sort_unstable();
    kept
}

struct Grown<T: Scalar> {
    model: CascadeModel<T>,
    reports: Vec<LayerReport>,
    best_layers: usize,
    best_accuracy: f64,
}

/// Stratified fold id per sample.
fn fold_assignment(y: &LabelVector, folds: usize, seed: u64) -> Vec<usize> {
    let mut by_class = vec![Vec::new(); y.class_count()];
    for (i, &l) in y.labels().iter().enumerate() {
        by_class[l].push(i);
    }
    let mut fold = vec![0; y.len()];
    let mut offset = 0;
    for (c, members) in by_class.iter_mut().enumerate() {
        members.shuffle(&mut rng::stream(seed, &[tag::FOLD, c as u64]));
        for (k, &i) in members.iter().enumerate() {
            fold[i] = (offset + k) % folds;
        }
        offset += members.len();
    }
    fold
}

fn augment<T: Scalar>(
    original: &FeatureMatrix<T>,
    carried: &[usize],
    outputs: &[Vec<T>],
    class_count: usize,
) -> Result<FeatureMatrix<T>> {
    let n = original.sample_count();
    let width = carried.len() + outputs.len() * class_count;
    let mut v = Vec::with_capacity(n * width);
    for i in 0..n {
        let row = original.row(i);
        v.extend(carried.iter().map(|&f| row[f]));
        for out in outputs {
            v.extend_from_slice(&out[i * class_count..(i + 1) * class_count]);
        }
    }
    FeatureMatrix::new(v, n, width)
}

fn argmax_accuracy<T: Scalar>(probs: &[T], y: &LabelVector) -> f64 {
    let c = y.class_count();
    let hits = y
        .labels()
        .iter()
        .enumerate()
        .filter(|(i, &l)| ClassDistribution::new(probs[i * c..(i + 1) * c].to_vec()).argmax() == l)
        .count();
    hits as f64 / y.len().max(1) as f64
}

fn mean_outputs<T: Scalar>(outputs: &[Vec<T>]) -> Vec<T> {
    let k = T::from_usize_lossy(outputs.len());
    let mut acc = vec![T::zero(); outputs[0].len()];
    for out in outputs {
        for (a, &p) in acc.iter_mut().zip(out) {
            *a = *a + p;
        }
    }
    acc.iter_mut().for_each(|a| *a = *a / k);
    acc
}

/// Evaluate a model by propagating whole matrices layer by layer.
fn batch_accuracy<T: Scalar>(model: &CascadeModel<T>, x: &FeatureMatrix<T>, y: &LabelVector) -> f64 {
    let mut input = x.clone();
    let mut outputs: Vec<Vec<T>> = Vec::new();
    for (l, layer) in model.layers.iter().enumerate() {
        if l > 0 {
            input = augment(x, &model.carried_features, &outputs, model.class_count).expect("finite probabilities");
        }
        outputs = layer.iter().map(|f| f.predict_matrix(&input)).collect();
    }
    argmax_accuracy(&mean_outputs(&outputs), y)
}

#[allow(clippy::too_many_arguments)]
fn grow<T: Scalar>(
    x: &FeatureMatrix<T>,
    y: &LabelVector,
    validation: Option<(&FeatureMatrix<T>, &LabelVector)>,
    carried: &[usize],
    params: &CascadeParams,
    layer_limit: usize,
    seed: u64,
) -> Result<Grown<T>> {
    let class_count = y.class_count();
    if params.cv_folds > y.len() {
        return Err(Error::config("more folds than training samples"));
    }
    let folds = fold_assignment(y, params.cv_folds, rng::derive_seed(seed, &[tag::FOLD]));
    let fold_members: Vec<Vec<usize>> = (0..params.cv_folds)
        .map(|j| (0..y.len()).filter(|&i| folds[i] == j).collect())
        .collect();

    let mut layers = Vec::new();
    let mut reports = Vec::new();
    let mut train_out: Vec<Vec<T>> = Vec::new();
    let mut val_out: Vec<Vec<T>> = Vec::new();
    let (mut best_layers, mut best_accuracy, mut stall) = (0usize, f64::NEG_INFINITY, 0usize);

    for l in 0..layer_limit {
        let train_in = if l == 0 {
            x.clone()
        } else {
            augment(x, carried, &train_out, class_count)?
        };
        let val_in = match validation {
            Some((vx, _)) if l > 0 => Some(augment(vx, carried, &val_out, class_count)?),
            Some((vx, _)) => Some(vx.clone()),
            None => None,
        };

        let mut layer = Vec::new();
        let mut next_train = Vec::new();
        let mut next_val = Vec::new();
        for (k, &flavor) in params.forests_per_layer.iter().enumerate() {
            let fp = ForestParams {
                n_trees: params.n_trees,
                tree: TreeParams { flavor, ..params.tree },
            };
            let forest_seed =
                |part: u64| rng::derive_seed(seed, &[tag::LAYER, l as u64, tag::FOREST, k as u64, tag::FOLD, part]);
            let last_layer = l + 1 == layer_limit;
            if !last_layer {
                // cross-fitted class vectors for the next layer's training input
                let mut crossfit = vec![T::zero(); y.len() * class_count];
                for (j, held) in fold_members.iter().enumerate() {
                    let fit: Vec<usize> = (0..y.len()).filter(|&i| folds[i] != j).collect();
                    let model = train_forest(&train_in.select(&fit), &y.select(&fit), &fp, forest_seed(j as u64))?;
                    let preds = model.predict_matrix(&train_in.select(held));
                    for (r, &i) in held.iter().enumerate() {
                        crossfit[i * class_count..(i + 1) * class_count]
                            .copy_from_slice(&preds[r * class_count..(r + 1) * class_count]);
                    }
                }
                next_train.push(crossfit);
            }
            let forest = train_forest(&train_in, y, &fp, forest_seed(params.cv_folds as u64))?;
            if let Some(vin) = &val_in {
                next_val.push(forest.predict_matrix(vin));
            }
            layer.push(forest);
        }
        layers.push(layer);

        if let Some((_, vy)) = validation {
            let accuracy = argmax_accuracy(&mean_outputs(&next_val), vy);
            reports.push(LayerReport {
                layer: l,
                validation_accuracy: accuracy,
                forest_validation_accuracy: next_val.iter().map(|o| argmax_accuracy(o, vy)).collect(),
            });
            if accuracy > best_accuracy {
                best_accuracy = accuracy;
                best_layers = l + 1;
                stall = 0;
            } else {
                stall += 1;
                if stall >= params.patience {
                    break;
                }
            }
        } else {
            best_layers = l + 1;
        }
        train_out = next_train;
        val_out = next_val;
    }

    let model = CascadeModel::new(layers, x.feature_count(), class_count, carried.to_vec())?;
    Ok(Grown {
        model,
        reports,
        best_layers,
        best_accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn blobs(seed: u64, n: usize) -> (FeatureMatrix<f64>, LabelVector) {
        let mut r = rng::stream(seed, &[]);
        let mut v = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let c = i % 3;
            for f in 0..4 {
                let centre = if f == c { 0.7 } else { 0.3 };
                v.push((centre + (r.random::<f64>() - 0.5) * 0.6).clamp(0.0, 1.0));
            }
            labels.push(c);
        }
        (
            FeatureMatrix::new(v, n, 4).unwrap(),
            LabelVector::new(labels, 3).unwrap(),
        )
    }

    fn small() -> CascadeParams {
        CascadeParams {
            n_trees: 3,
            max_layers: 3,
            ..CascadeParams::default()
        }
    }

    #[test]
    fn single_layer_is_plain_forest_layer() {
        let (x, y) = blobs(1, 150);
        let p = CascadeParams {
            max_layers: 1,
            ..small()
        };
        let (m, report) = train_cascade(&x, &y, &p, 4).unwrap();
        assert_eq!(m.layers.len(), 1);
        assert_eq!(report.selected_layers, 1);
        let row = x.row(0);
        let expect =
            ClassDistribution::mean(&m.layers[0].iter().map(|f| f.predict(row)).collect::<Vec<_>>(), 3).unwrap();
        assert_eq!(m.predict(row), expect);
    }

    #[test]
    fn layer_widths_follow_augmentation_rule() {
        let (x, y) = blobs(2, 150);
        let p = CascadeParams { patience: 3, ..small() };
        let (m, _) = train_cascade(&x, &y, &p, 9).unwrap();
        for l in 1..m.layers.len() {
            assert_eq!(m.layer_input_width(l), 4 + m.layers[l - 1].len() * 3);
        }
    }

    #[test]
    fn too_few_folds_rejected() {
        let (x, y) = blobs(3, 60);
        let p = CascadeParams { cv_folds: 1, ..small() };
        assert!(matches!(train_cascade(&x, &y, &p, 0), Err(Error::Config(_))));
    }

    #[test]
    fn reported_eval_accuracy_replays() {
        let (x, y) = blobs(4, 180);
        let (tx, ty) = blobs(5, 90);
        let (m, report) = train_cascade_with_eval(&x, &y, Some((&tx, &ty)), &small(), 2).unwrap();
        assert_eq!(report.eval_accuracy, Some(m.accuracy(&tx, &ty)));
        assert!(m.accuracy(&tx, &ty) > 0.8);
    }

    #[test]
    fn cascade_is_deterministic() {
        let (x, y) = blobs(6, 120);
        let a = train_cascade(&x, &y, &small(), 7).unwrap().0;
        let b = train_cascade(&x, &y, &small(), 7).unwrap().0;
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let row = x.row(3);
        assert_eq!(a.predict(row), a.predict(row));
    }

    #[test]
    fn carry_fraction_selects_subset() {
        let kept = carried_features(10, 0.3, 1);
        assert_eq!(kept.len(), 3);
        assert!(kept.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(carried_features(5, 1.0, 1), vec![0, 1, 2, 3, 4]);
    }
}
