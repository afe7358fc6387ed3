use std::collections::BTreeMap;
use std::io::Write;

use acam_drf::compiler::{compile_model, predict_quantized, quantize_model, ModelPlan};
use acam_drf::cost::{estimate_classification_cost, CostParams, CostReport};
use acam_drf::datasets::{self, semg, Dataset, LabelColumn, PreparedSplit};
use acam_drf::forest::{train_cascade, CascadeModel, TrainingReport};
use acam_drf::rng::{derive_seed, tag};
use acam_drf::simulator::{evaluate, program_model, run_sweep, write_sweep_csv, Variation};
use serde::{Deserialize, Serialize};

use crate::artifacts::{csv_header, envelope, OutDir, COST, MODEL, PLAN, RESULTS};
use crate::config::{DatasetConfig, Loaded};
use crate::error::CliError;
use crate::svg::{self, Chart, Scale, Series};

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub model: CascadeModel<f64>,
    pub training: TrainingReport,
    /// Full-precision accuracy on the held-out split.
    pub test_accuracy: f64,
}

pub fn load_dataset(cfg: &Loaded) -> Result<Dataset<f64>, CliError> {
    Ok(match &cfg.config.dataset {
        DatasetConfig::SemgSynth { synth, dataset_seed } => semg::synthesize_dataset(synth, *dataset_seed)?,
        DatasetConfig::Csv { path, label_column } => {
            let col = match label_column.parse::<usize>() {
                Ok(i) => LabelColumn::Index(i),
                Err(_) => LabelColumn::Name(label_column.clone()),
            };
            let (x, y) = datasets::load_csv_labeled(path, col)?;
            Dataset::new(x, y)?
        }
        DatasetConfig::Mnist {
            images,
            labels,
            limit,
            binarize,
        } => {
            let (mut x, y) = datasets::load_mnist_idx(images, labels)?;
            if let Some(t) = *binarize {
                x = x.map(|v: f64| if v >= t { 1.0 } else { 0.0 });
            }
            let data = Dataset::new(x, y)?;
            match limit {
                Some(n) if *n < data.len() => data.select(&(0..*n).collect::<Vec<_>>()),
                _ => data,
            }
        }
    })
}

pub fn prepare(cfg: &Loaded) -> Result<PreparedSplit<f64>, CliError> {
    let data = load_dataset(cfg)?;
    Ok(datasets::prepare_split(
        &data,
        cfg.config.test_fraction,
        derive_seed(cfg.config.seed, &[tag::SPLIT]),
    )?)
}

fn load_model(cfg: &Loaded, out: &OutDir) -> Result<ModelArtifact, CliError> {
    Ok(out
        .read_json::<ModelArtifact>(MODEL, "train", &cfg.train_hash())?
        .payload)
}

fn load_plan(cfg: &Loaded, out: &OutDir) -> Result<ModelPlan<f64>, CliError> {
    let plan = out
        .read_json::<ModelPlan<f64>>(PLAN, "compile", &cfg.compile_hash())?
        .payload;
    plan.validate()?;
    Ok(plan)
}

pub fn train(cfg: &Loaded, out: &OutDir) -> Result<(), CliError> {
    let split = prepare(cfg)?;
    let seed = derive_seed(cfg.config.seed, &[tag::FOREST]);
    let (model, training) = train_cascade(&split.train.features, &split.train.labels, &cfg.config.cascade, seed)?;
    let test_accuracy = model.accuracy(&split.test.features, &split.test.labels);
    println!(
        "trained {} layer(s), {} trees, {} leaves; test accuracy {:.4}",
        model.layers.len(),
        model.tree_count(),
        model.leaf_count(),
        test_accuracy
    );
    let artifact = ModelArtifact {
        model,
        training,
        test_accuracy,
    };
    out.write_json(MODEL, &envelope("model", &cfg.hash(), &cfg.train_hash(), artifact))
}

pub fn compile(cfg: &Loaded, out: &OutDir) -> Result<(), CliError> {
    let model = load_model(cfg, out)?;
    let plan = compile_model(&model.model, &cfg.config.compile)?;
    let s = plan.stats();
    if !plan.dropped.is_empty() {
        eprintln!(
            "warning: {} branch(es) collapsed by quantization were dropped ({} training samples)",
            plan.dropped.len(),
            plan.dropped_samples()
        );
    }
    println!(
        "compiled {} trees into {} arrays ({} rows, don't-care fraction {:.3})",
        plan.trees().count(),
        s.arrays,
        s.logical_rows,
        s.dont_care_fraction()
    );
    out.write_with("plan-report.csv", |w| {
        csv_header(w, "plan-report", &cfg.hash())?;
        plan.write_report_csv(&mut *w)?;
        Ok(())
    })?;
    out.write_json(PLAN, &envelope("plan", &cfg.hash(), &cfg.compile_hash(), plan))
}

pub fn simulate(cfg: &Loaded, out: &OutDir) -> Result<(), CliError> {
    let plan = load_plan(cfg, out)?;
    let split = prepare(cfg)?;
    let device = cfg.device;
    let mode = cfg.config.mode;
    let variation = (device.sigma_frac > 0.0).then(|| Variation {
        seed: derive_seed(cfg.config.seed, &[tag::VARIATION]),
    });
    let chip = program_model(&plan, mode, &device, variation);
    let e = evaluate(&plan, &chip, &split.test.features, &split.test.labels, &device)?;

    let model = load_model(cfg, out)?;
    let q = quantize_model(&model.model, plan.quantizer());
    let oracle_hits = split
        .test
        .features
        .rows()
        .zip(split.test.labels.labels())
        .filter(|(x, &y)| predict_quantized(&q, plan.quantizer(), x).argmax() == y)
        .count();
    let quantized_accuracy = oracle_hits as f64 / split.test.len() as f64;
    println!(
        "{} mode: accuracy {:.4} (quantized traversal {:.4}, full precision {:.4}), abstention {:.4}",
        mode_name(mode),
        e.accuracy,
        quantized_accuracy,
        model.test_accuracy,
        e.abstention_rate
    );
    out.write_with(RESULTS, |w| {
        csv_header(w, "results", &cfg.hash())?;
        writeln!(
            w,
            "mode,bits,msb_lsb,sigma_frac,samples,accuracy,quantized_accuracy,full_precision_accuracy,abstention_rate,forest_fallbacks,arrays_activated"
        )?;
        let ml = match plan.options.msb_lsb {
            Some((n, m)) => format!("{n}+{m}"),
            None => String::new(),
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            mode_name(mode),
            plan.options.bits,
            ml,
            device.sigma_frac,
            e.samples,
            e.accuracy,
            quantized_accuracy,
            model.test_accuracy,
            e.abstention_rate,
            e.forest_fallbacks,
            e.arrays_activated
        )?;
        Ok(())
    })
}

fn mode_name(m: acam_drf::simulator::Mode) -> &'static str {
    match m {
        acam_drf::simulator::Mode::Ideal => "ideal",
        acam_drf::simulator::Mode::Behavioral => "behavioral",
    }
}

pub fn sweep(cfg: &Loaded, out: &OutDir) -> Result<(), CliError> {
    if cfg.config.sweeps.is_empty() {
        return Err(CliError::Config("no sweeps configured (add a \"sweeps\" list)".into()));
    }
    let split = prepare(cfg)?;
    for (i, spec) in cfg.config.sweeps.iter().enumerate() {
        let sc = cfg.sweep_config(spec);
        let r = run_sweep(&sc, &split.train, &split.test, &cfg.device)?;
        let stem = format!("sweep-{i}-{}", sc.axis.name());
        out.write_with(&format!("{stem}.csv"), |w| {
            csv_header(w, "sweep", &cfg.hash())?;
            write_sweep_csv(&r.rows, &mut *w)?;
            Ok(())
        })?;
        out.write_with(&format!("{stem}-summary.csv"), |w| {
            csv_header(w, "sweep-summary", &cfg.hash())?;
            writeln!(
                w,
                "axis,mode,bits,value,trials,accuracy_mean,accuracy_std,abstention_rate_mean"
            )?;
            for p in &r.summary {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{}",
                    sc.axis.name(),
                    mode_name(sc.mode),
                    sc.bits,
                    p.value,
                    p.trials,
                    p.accuracy_mean,
                    p.accuracy_std,
                    p.abstention_rate_mean
                )?;
            }
            Ok(())
        })?;
        for p in &r.summary {
            println!(
                "{} = {}: accuracy {:.4} +/- {:.4} over {} trial(s)",
                sc.axis.name(),
                p.value,
                p.accuracy_mean,
                p.accuracy_std,
                p.trials
            );
        }
    }
    Ok(())
}

pub fn cost(cfg: &Loaded, out: &OutDir) -> Result<(), CliError> {
    let plan = load_plan(cfg, out)?;
    let baseline = cfg.config.cost.baseline.as_deref().map(CostParams::load).transpose()?;
    let mut reports = Vec::new();
    for t in &cfg.config.cost.technologies {
        let p = CostParams::load(t)?;
        reports.push(estimate_classification_cost(&plan, &p, baseline.as_ref())?);
    }
    if let Some(b) = &baseline {
        reports.push(estimate_classification_cost(&plan, b, None)?);
    }
    for r in &reports {
        println!(
            "{}: {:.4e} J, {:.4e} s per classification, {} arrays",
            r.technology, r.energy, r.latency, r.arrays
        );
    }
    out.write_with("cost.csv", |w| {
        csv_header(w, "cost", &cfg.hash())?;
        writeln!(
            w,
            "technology,energy_j,latency_s,padding_energy_j,arrays,area_um2,energy_ratio,latency_ratio"
        )?;
        for r in &reports {
            let (er, lr) = r
                .comparison
                .as_ref()
                .map(|c| (c.energy_ratio.to_string(), c.latency_ratio.to_string()))
                .unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.technology, r.energy, r.latency, r.padding_energy, r.arrays, r.area_um2, er, lr
            )?;
        }
        Ok(())
    })?;
    out.write_json(COST, &envelope("cost", &cfg.hash(), &cfg.compile_hash(), reports))
}

/// Rows of a CSV artifact, comment lines skipped, keyed by header.
fn read_table(path: &std::path::Path) -> Result<Vec<BTreeMap<String, String>>, CliError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.is_empty());
    let header: Vec<&str> = match lines.next() {
        Some(h) => h.split(',').collect(),
        None => return Ok(Vec::new()),
    };
    Ok(lines
        .map(|l| {
            header
                .iter()
                .map(|h| h.to_string())
                .zip(l.split(',').map(str::to_string))
                .collect()
        })
        .collect())
}

fn num(row: &BTreeMap<String, String>, key: &str) -> f64 {
    row.get(key).and_then(|v| v.parse().ok()).unwrap_or(f64::NAN)
}

pub fn report(cfg: &Loaded, out: &OutDir) -> Result<(), CliError> {
    let mut summaries: Vec<(String, Vec<BTreeMap<String, String>>)> = Vec::new();
    let mut names: Vec<String> = std::fs::read_dir(&out.path)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("sweep-") && n.ends_with("-summary.csv"))
        .collect();
    names.sort();
    for n in names {
        summaries.push((n.clone(), read_table(&out.file(&n))?));
    }
    let cost: Option<Vec<CostReport>> = if out.file(COST).exists() {
        Some(
            out.read_json::<Vec<CostReport>>(COST, "cost", &cfg.compile_hash())?
                .payload,
        )
    } else {
        None
    };
    let results = if out.file(RESULTS).exists() {
        Some(read_table(&out.file(RESULTS))?)
    } else {
        None
    };
    if summaries.is_empty() && cost.is_none() && results.is_none() {
        return Err(CliError::MissingArtifact {
            artifact: out.path.display().to_string(),
            command: "sweep",
            detail: "no sweep, simulate or cost outputs to report on".into(),
        });
    }

    let mut md = String::new();
    md.push_str(&format!(
        "# acam-drf report\n\nconfig_sha256 `{}`, {}\n\n",
        cfg.hash(),
        crate::artifacts::TOOL
    ));
    if let Some(rows) = &results {
        md.push_str("## Simulation\n\n| mode | bits | sigma_frac | accuracy | quantized traversal | full precision | abstention |\n|---|---|---|---|---|---|---|\n");
        for r in rows {
            md.push_str(&format!(
                "| {} | {} | {} | {:.4} | {:.4} | {:.4} | {:.4} |\n",
                r.get("mode").map(String::as_str).unwrap_or(""),
                r.get("bits").map(String::as_str).unwrap_or(""),
                r.get("sigma_frac").map(String::as_str).unwrap_or(""),
                num(r, "accuracy"),
                num(r, "quantized_accuracy"),
                num(r, "full_precision_accuracy"),
                num(r, "abstention_rate")
            ));
        }
        md.push('\n');
    }

    let mut by_axis: BTreeMap<String, Vec<Series>> = BTreeMap::new();
    for (name, rows) in &summaries {
        let Some(axis) = rows.first().and_then(|r| r.get("axis")).cloned() else {
            continue;
        };
        md.push_str(&format!(
            "## Sweep `{name}`\n\n| {axis} | trials | accuracy | std | abstention |\n|---|---|---|---|---|\n"
        ));
        for r in rows {
            md.push_str(&format!(
                "| {} | {} | {:.4} | {:.4} | {:.4} |\n",
                r.get("value").map(String::as_str).unwrap_or(""),
                r.get("trials").map(String::as_str).unwrap_or(""),
                num(r, "accuracy_mean"),
                num(r, "accuracy_std"),
                num(r, "abstention_rate_mean")
            ));
        }
        md.push('\n');
        let label = rows
            .first()
            .map(|r| match axis.as_str() {
                "precision" => format!("{} mode", r.get("mode").map(String::as_str).unwrap_or("")),
                _ => format!(
                    "{} mode, {} bits",
                    r.get("mode").map(String::as_str).unwrap_or(""),
                    r.get("bits").map(String::as_str).unwrap_or("")
                ),
            })
            .unwrap_or_default();
        by_axis.entry(axis).or_default().push(Series {
            name: label,
            points: rows
                .iter()
                .map(|r| (num(r, "value"), num(r, "accuracy_mean"), num(r, "accuracy_std")))
                .collect(),
        });
    }
    for (axis, series) in by_axis {
        let (file, x_label) = match axis.as_str() {
            "precision" => ("accuracy-vs-bits.svg", "decision boundary precision (bits)"),
            "sigma" => ("accuracy-vs-sigma.svg", "Vth sigma / memory window"),
            _ => ("accuracy-vs-trees.svg", "trees per forest"),
        };
        let chart = Chart {
            title: format!("Accuracy vs {axis}"),
            x_label: x_label.into(),
            y_label: "test accuracy".into(),
            x_scale: Scale::Linear,
            y_scale: Scale::Linear,
            lines: true,
            series,
        };
        out.write_with(file, |w| Ok(w.write_all(svg::render(&chart).as_bytes())?))?;
        md.push_str(&format!("![{axis}]({file})\n\n"));
    }

    if let Some(reports) = &cost {
        md.push_str("## Cost per classification\n\nCalibrated technology files; relative positions, not first-principles predictions.\n\n| technology | energy (J) | latency (s) | arrays | area (um^2) | energy gain vs baseline | latency gain vs baseline |\n|---|---|---|---|---|---|---|\n");
        for r in reports {
            let (er, lr) = r
                .comparison
                .as_ref()
                .map(|c| (format!("{:.3e}", c.energy_ratio), format!("{:.3e}", c.latency_ratio)))
                .unwrap_or_else(|| ("-".into(), "-".into()));
            md.push_str(&format!(
                "| {} | {:.4e} | {:.4e} | {} | {:.1} | {er} | {lr} |\n",
                r.technology, r.energy, r.latency, r.arrays, r.area_um2
            ));
        }
        md.push('\n');
        let chart = Chart {
            title: "Energy vs latency per classification".into(),
            x_label: "latency (s)".into(),
            y_label: "energy (J)".into(),
            x_scale: Scale::Log10,
            y_scale: Scale::Log10,
            lines: false,
            series: reports
                .iter()
                .map(|r| Series {
                    name: r.technology.clone(),
                    points: vec![(r.latency, r.energy, 0.0)],
                })
                .collect(),
        };
        out.write_with("energy-vs-latency.svg", |w| {
            Ok(w.write_all(svg::render(&chart).as_bytes())?)
        })?;
        md.push_str("![cost](energy-vs-latency.svg)\n");
    }
    out.write_with("report.md", |w| Ok(w.write_all(md.as_bytes())?))?;
    println!("wrote {}", out.file("report.md").display());
    Ok(())
}

/// Write the synthetic sEMG features as a CSV usable by the `csv` dataset kind.
pub fn synth_semg(cfg: &Loaded, out: &OutDir) -> Result<(), CliError> {
    let (synth, seed) = match &cfg.config.dataset {
        DatasetConfig::SemgSynth { synth, dataset_seed } => (synth.clone(), *dataset_seed),
        _ => (semg::SemgSynthConfig::default(), 0),
    };
    let data = semg::synthesize_dataset(&synth, seed)?;
    let names = semg::feature_names(2, data.features.feature_count() / 4);
    let path = out.file("semg.csv");
    semg::write_feature_csv(&path, &data, &names)?;
    println!("wrote {} samples to {}", data.len(), path.display());
    Ok(())
}
