use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{evaluate, program_model, Mode, Variation};
use crate::compiler::{compile_model, CompileOptions, Geometry};
use crate::datasets::Dataset;
use crate::device::DeviceParams;
use crate::error::{Error, Result};
use crate::forest::{train_cascade, CascadeModel, CascadeParams};
use crate::rng::{derive_seed, tag};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Quantizer bits; one model per trial, recompiled at each value.
    Precision,
    /// Vth sigma as a fraction of the memory window; one model, one chip
    /// programming per trial.
    Sigma,
    /// Trees per forest; one model per value and trial.
    Trees,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Precision => "precision",
            SweepAxis::Sigma => "sigma",
            SweepAxis::Trees => "trees",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "ideal")]
    pub mode: Mode,
    /// Quantizer bits for the sigma and trees axes.
    #[serde(default = "three")]
    pub bits: u32,
    /// Vth sigma for the precision and trees axes.
    #[serde(default)]
    pub sigma_frac: f64,
    /// MSB/LSB split for the sigma and trees axes; `n + m` must equal `bits`.
    #[serde(default)]
    pub msb_lsb: Option<(u32, u32)>,
    #[serde(default)]
    pub geometry: Geometry,
    #[serde(default)]
    pub cascade: CascadeParams,
}

fn one() -> usize {
    1
}

fn three() -> u32 {
    3
}

fn ideal() -> Mode {
    Mode::Ideal
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("sweep trials must be at least 1"));
        }
        if self.values.is_empty() {
            return Err(Error::config("sweep values are empty"));
        }
        if let Some((n, m)) = self.msb_lsb {
            if n + m != self.bits {
                return Err(Error::config(format!(
                    "msb_lsb ({n}, {m}) does not add up to {} bits",
                    self.bits
                )));
            }
        }
        let integral = |v: f64| v >= 1.0 && v.fract() == 0.0;
        match self.axis {
            SweepAxis::Precision | SweepAxis::Trees if !self.values.iter().all(|&v| integral(v)) => Err(Error::config(
                format!("{} values must be positive integers", self.axis.name()),
            )),
            SweepAxis::Sigma if !self.values.iter().all(|&v| v >= 0.0) => {
                Err(Error::config("sigma values must be non-negative"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub trial: usize,
    pub accuracy: f64,
    pub abstention_rate: f64,
    pub arrays_activated: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub trials: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub abstention_rate_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn point(&self, value: f64) -> Option<&SweepPoint> {
        self.summary.iter().find(|p| p.value == value)
    }
}

struct Scored {
    accuracy: f64,
    abstention_rate: f64,
    arrays_activated: f64,
}

fn score<T: Scalar>(
    model: &CascadeModel<T>,
    bits: u32,
    msb_lsb: Option<(u32, u32)>,
    cfg: &SweepConfig,
    device: &DeviceParams,
    variation_seed: u64,
    test: &Dataset<T>,
) -> Result<Scored> {
    let opts = CompileOptions {
        bits,
        msb_lsb,
        geometry: cfg.geometry,
    };
    let plan = compile_model(model, &opts)?;
    let chip = program_model(&plan, cfg.mode, device, Some(Variation { seed: variation_seed }));
    let e = evaluate(&plan, &chip, &test.features, &test.labels, device)?;
    Ok(Scored {
        accuracy: e.accuracy,
        abstention_rate: e.abstention_rate,
        arrays_activated: e.arrays_activated,
    })
}

/// Sweep one axis. Trial `t` trains with seed `derive(seed, [TRIAL, t])` and
/// programs variation with `derive(seed, [VARIATION, t])`, so every value on
/// the axis sees the same models (precision) or the same normal draws (sigma).
pub fn run_sweep<T: Scalar>(
    cfg: &SweepConfig,
    train: &Dataset<T>,
    test: &Dataset<T>,
    device: &DeviceParams,
) -> Result<SweepResult> {
    cfg.validate()?;
    device.validate()?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::config("sweep needs non-empty training and test sets"));
    }
    let train_seed = |t: usize| derive_seed(cfg.seed, &[tag::TRIAL, t as u64]);
    let var_seed = |t: usize| derive_seed(cfg.seed, &[tag::VARIATION, t as u64]);
    let fixed_sigma = DeviceParams {
        sigma_frac: cfg.sigma_frac,
        ..*device
    };
    let mut rows = Vec::new();
    let mut push = |value: f64, trial: usize, s: Scored| {
        rows.push(SweepRow {
            axis: cfg.axis,
            value,
            trial,
            accuracy: s.accuracy,
            abstention_rate: s.abstention_rate,
            arrays_activated: s.arrays_activated,
        })
    };
    match cfg.axis {
        SweepAxis::Precision => {
            for t in 0..cfg.trials {
                let (model, _) = train_cascade(&train.features, &train.labels, &cfg.cascade, train_seed(t))?;
                for &v in &cfg.values {
                    push(
                        v,
                        t,
                        score(&model, v as u32, None, cfg, &fixed_sigma, var_seed(t), test)?,
                    );
                }
            }
        }
        SweepAxis::Trees => {
            for &v in &cfg.values {
                let params = CascadeParams {
                    n_trees: v as usize,
                    ..cfg.cascade.clone()
                };
                for t in 0..cfg.trials {
                    let (model, _) = train_cascade(&train.features, &train.labels, &params, train_seed(t))?;
                    push(
                        v,
                        t,
                        score(&model, cfg.bits, cfg.msb_lsb, cfg, &fixed_sigma, var_seed(t), test)?,
                    );
                }
            }
        }
        SweepAxis::Sigma => {
            let (model, _) = train_cascade(&train.features, &train.labels, &cfg.cascade, train_seed(0))?;
            for &v in &cfg.values {
                let dev = DeviceParams {
                    sigma_frac: v,
                    ..*device
                };
                for t in 0..cfg.trials {
                    push(
                        v,
                        t,
                        score(&model, cfg.bits, cfg.msb_lsb, cfg, &dev, var_seed(t), test)?,
                    );
                }
            }
        }
    }
    let index = |v: f64| cfg.values.iter().position(|&x| x == v).unwrap_or(usize::MAX);
    rows.sort_by_key(|r| (index(r.value), r.trial));
    let summary = summarize(&cfg.values, &rows);
    Ok(SweepResult {
        axis: cfg.axis,
        rows,
        summary,
    })
}

fn summarize(values: &[f64], rows: &[SweepRow]) -> Vec<SweepPoint> {
    let mut seen: Vec<f64> = Vec::new();
    for &v in values {
        if !seen.contains(&v) {
            seen.push(v);
        }
    }
    seen.into_iter()
        .map(|v| {
            let acc: Vec<f64> = rows.iter().filter(|r| r.value == v).map(|r| r.accuracy).collect();
            let abst: f64 = rows
                .iter()
                .filter(|r| r.value == v)
                .map(|r| r.abstention_rate)
                .sum::<f64>();
            let n = acc.len() as f64;
            let mean = acc.iter().sum::<f64>() / n;
            let std = if acc.len() > 1 {
                (acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            SweepPoint {
                value: v,
                trials: acc.len(),
                accuracy_mean: mean,
                accuracy_std: std,
                abstention_rate_mean: abst / n,
            }
        })
        .collect()
}

/// Rows as CSV: `axis,value,trial,accuracy,abstention_rate,arrays_activated`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let to_err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record([
        "axis",
        "value",
        "trial",
        "accuracy",
        "abstention_rate",
        "arrays_activated",
    ])
    .map_err(to_err)?;
    for r in rows {
        w.write_record([
            r.axis.name().to_string(),
            r.value.to_string(),
            r.trial.to_string(),
            format!("{:.6}", r.accuracy),
            format!("{:.6}", r.abstention_rate),
            format!("{:.3}", r.arrays_activated),
        ])
        .map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io("sweep csv", e))?;
    Ok(())
}
