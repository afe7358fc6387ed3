use acam_drf::compiler::{compile_model, predict_quantized, quantize_model, CompileOptions, ModelPlan};
use acam_drf::cost::{estimate_classification_cost, CostParams};
use acam_drf::datasets::{self, load_csv_labeled, semg, Dataset};
use acam_drf::device::DeviceParams;
use acam_drf::forest::{train_cascade, CascadeParams};
use acam_drf::simulator::{evaluate, program_model, Mode, Variation};

fn small_cascade() -> CascadeParams {
    CascadeParams {
        n_trees: 4,
        max_layers: 2,
        ..CascadeParams::default()
    }
}

#[test]
fn csv_to_chip_matches_quantized_traversal() {
    let synth = semg::synthesize_dataset(&semg::SemgSynthConfig::default(), 3).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("semg.csv");
    let names: Vec<String> = (0..synth.features.feature_count()).map(|i| format!("f{i}")).collect();
    semg::write_feature_csv(&path, &synth, &names).unwrap();

    let (x, y) = load_csv_labeled::<f64>(&path, "label").unwrap();
    assert_eq!(x.sample_count(), synth.len());
    let split = datasets::prepare_split(&Dataset::new(x, y).unwrap(), 0.2, 1).unwrap();
    let (model, report) = train_cascade(&split.train.features, &split.train.labels, &small_cascade(), 2).unwrap();
    assert_eq!(report.selected_layers, model.layers.len());

    let plan = compile_model(&model, &CompileOptions::default()).unwrap();
    let q = quantize_model(&model, plan.quantizer());
    let device = DeviceParams {
        sigma_frac: 0.0,
        ..DeviceParams::default()
    };
    for mode in [Mode::Ideal, Mode::Behavioral] {
        let chip = program_model(&plan, mode, &device, None);
        let e = evaluate(&plan, &chip, &split.test.features, &split.test.labels, &device).unwrap();
        for (row, &p) in split.test.features.rows().zip(&e.predictions) {
            assert_eq!(predict_quantized(&q, plan.quantizer(), row).argmax(), p, "{mode:?}");
        }
    }
}

#[test]
fn plan_survives_json_round_trip() {
    let data = semg::synthesize_dataset(&semg::SemgSynthConfig::default(), 0).unwrap();
    let split = datasets::prepare_split(&data, 0.2, 0).unwrap();
    let (model, _) = train_cascade(&split.train.features, &split.train.labels, &small_cascade(), 0).unwrap();
    let plan = compile_model(&model, &CompileOptions::default()).unwrap();
    let text = serde_json::to_string(&plan).unwrap();
    let back: ModelPlan<f64> = serde_json::from_str(&text).unwrap();
    assert_eq!(back, plan);
    back.validate().unwrap();
}

#[test]
fn variation_is_reproducible_per_seed() {
    let data = semg::synthesize_dataset(&semg::SemgSynthConfig::default(), 0).unwrap();
    let split = datasets::prepare_split(&data, 0.2, 0).unwrap();
    let (model, _) = train_cascade(&split.train.features, &split.train.labels, &small_cascade(), 0).unwrap();
    let plan = compile_model(&model, &CompileOptions::default()).unwrap();
    let device = DeviceParams {
        sigma_frac: 0.08,
        ..DeviceParams::default()
    };
    let run = |seed| {
        let chip = program_model(&plan, Mode::Behavioral, &device, Some(Variation { seed }));
        evaluate(&plan, &chip, &split.test.features, &split.test.labels, &device)
            .unwrap()
            .predictions
    };
    assert_eq!(run(4), run(4));
    assert_ne!(run(4), run(5));
}

#[test]
fn single_precision_pipeline_runs() {
    let data = semg::synthesize_dataset(&semg::SemgSynthConfig::default(), 0).unwrap();
    let data32 = Dataset::new(data.features.map(|v| v as f32), data.labels.clone()).unwrap();
    let split = datasets::prepare_split(&data32, 0.2, 0).unwrap();
    let (model, _) = train_cascade(&split.train.features, &split.train.labels, &small_cascade(), 0).unwrap();
    assert!(model.accuracy(&split.test.features, &split.test.labels) > 0.5);
    let plan = compile_model(&model, &CompileOptions::default()).unwrap();
    let fefet = CostParams::builtin("fefet").unwrap();
    let cpu = CostParams::builtin("cpu-baseline").unwrap();
    let cost = estimate_classification_cost(&plan, &fefet, Some(&cpu)).unwrap();
    assert!(cost.energy > 0.0 && cost.latency > 0.0);
    assert!(cost.comparison.unwrap().energy_ratio > 1.0);
}
