//! Per-classification energy, latency and area estimates from compiled plans.
//!
//! The model is first order: every array of a layer is searched once, each
//! used row precharges its match line and fires a sense amplifier, and every
//! column of a used row is driven. Layers run back to back; arrays within a
//! layer run in parallel.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::compiler::ModelPlan;
use crate::device::{required_pulse_width, SwitchingParams};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const FEFET_JSON: &str = include_str!("../../params/fefet.json");
const RERAM_JSON: &str = include_str!("../../params/reram.json");
const CPU_JSON: &str = include_str!("../../params/cpu-baseline.json");

/// Names accepted by [`CostParams::builtin`].
pub const BUILTIN_TECHNOLOGIES: [&str; 3] = ["fefet", "reram", "cpu-baseline"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnScaling {
    /// Match-line discharge time shrinks as `sense_time / columns`.
    InverseColumns,
    /// Sense time independent of width.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgrammingParams {
    /// V
    pub write_voltage: f64,
    /// J per device write pulse.
    pub pulse_energy: f64,
    pub switching: SwitchingParams,
}

/// Technology description. All energies in J, times in s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostParams {
    pub version: u32,
    pub technology: String,
    /// Where the numbers come from.
    #[serde(default)]
    pub calibration: String,
    /// Per used row per search.
    pub ml_precharge_energy: f64,
    /// Per driven cell per search.
    pub sl_drive_energy: f64,
    /// Per used row per search.
    pub sense_amp_energy: f64,
    pub cell_area_um2: f64,
    /// Single-column reference discharge time `C_ML * dV / I_th`.
    pub sense_time: f64,
    pub sense_amp_delay: f64,
    pub column_scaling: ColumnScaling,
    /// Software-style costs, charged per tree evaluated.
    #[serde(default)]
    pub energy_per_tree: f64,
    #[serde(default)]
    pub latency_per_tree: f64,
    #[serde(default)]
    pub fixed_energy: f64,
    #[serde(default)]
    pub fixed_latency: f64,
    #[serde(default)]
    pub programming: Option<ProgrammingParams>,
}

impl CostParams {
    pub fn builtin(name: &str) -> Result<Self> {
        let text = match name {
            "fefet" => FEFET_JSON,
            "reram" => RERAM_JSON,
            "cpu-baseline" | "cpu" => CPU_JSON,
            other => {
                return Err(Error::config(format!(
                    "unknown technology '{other}' (expected one of {})",
                    BUILTIN_TECHNOLOGIES.join(", ")
                )))
            }
        };
        let p: CostParams = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: CostParams = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    /// A builtin name or a path to a JSON file.
    pub fn load(name_or_path: &str) -> Result<Self> {
        if BUILTIN_TECHNOLOGIES.contains(&name_or_path) || name_or_path == "cpu" {
            return Self::builtin(name_or_path);
        }
        let path = Path::new(name_or_path);
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("ml_precharge_energy", self.ml_precharge_energy),
            ("sl_drive_energy", self.sl_drive_energy),
            ("sense_amp_energy", self.sense_amp_energy),
            ("cell_area_um2", self.cell_area_um2),
            ("sense_time", self.sense_time),
            ("sense_amp_delay", self.sense_amp_delay),
            ("energy_per_tree", self.energy_per_tree),
            ("latency_per_tree", self.latency_per_tree),
            ("fixed_energy", self.fixed_energy),
            ("fixed_latency", self.fixed_latency),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(format!(
                    "cost parameter {name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if let Some(p) = &self.programming {
            p.switching.validate()?;
            if !(p.pulse_energy >= 0.0) || !p.write_voltage.is_finite() {
                return Err(Error::config(
                    "programming needs finite write_voltage and pulse_energy >= 0",
                ));
            }
        }
        Ok(())
    }

    /// Match-line sensing time for an array `columns` wide.
    pub fn sense_time_for_columns(&self, columns: usize) -> f64 {
        match self.column_scaling {
            ColumnScaling::InverseColumns => self.sense_time / columns.max(1) as f64,
            ColumnScaling::None => self.sense_time,
        }
    }

    /// Energy of searching one array with `rows` used rows, `width` columns.
    pub fn array_search_energy(&self, rows: usize, width: usize) -> f64 {
        rows as f64 * (self.ml_precharge_energy + self.sense_amp_energy + width as f64 * self.sl_drive_energy)
    }

    pub fn array_search_latency(&self, width: usize) -> f64 {
        self.sense_time_for_columns(width) + self.sense_amp_delay
    }
}

/// What one cascade layer asks of the hardware per classification.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerWorkload {
    pub arrays: usize,
    /// Sum over arrays of rows in use.
    pub physical_rows: usize,
    /// Physical array width.
    pub width: usize,
    pub trees: usize,
    /// Padding cells in used rows.
    pub padding_cells: usize,
    pub total_cells: usize,
}

impl LayerWorkload {
    pub fn from_plan<T: Scalar>(plan: &ModelPlan<T>) -> Vec<LayerWorkload> {
        (0..plan.layers.len())
            .map(|l| {
                let s = plan.layer_stats(l);
                LayerWorkload {
                    arrays: s.arrays,
                    physical_rows: s.physical_rows,
                    width: plan.options.geometry.width,
                    trees: plan.layers[l].iter().map(Vec::len).sum(),
                    padding_cells: s.padding_cells,
                    total_cells: s.total_cells,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerCost {
    pub arrays: usize,
    pub energy: f64,
    pub latency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProgrammingCost {
    pub pulse_width: f64,
    /// Row-serial writes, one pulse per row.
    pub time: f64,
    /// One pulse per programmed device, two devices per cell.
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: String,
    pub baseline_energy: f64,
    pub baseline_latency: f64,
    /// Baseline over this technology; above 1 means this one is cheaper.
    pub energy_ratio: f64,
    pub latency_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub technology: String,
    pub calibration: String,
    /// J per classification.
    pub energy: f64,
    /// s per classification.
    pub latency: f64,
    /// Share of `energy` spent driving padding columns.
    pub padding_energy: f64,
    pub arrays: usize,
    pub total_cells: usize,
    pub area_um2: f64,
    pub layers: Vec<LayerCost>,
    pub programming: Option<ProgrammingCost>,
    pub comparison: Option<Comparison>,
}

fn cost_layers(work: &[LayerWorkload], params: &CostParams) -> (Vec<LayerCost>, f64, f64) {
    let mut layers = Vec::with_capacity(work.len());
    let mut energy = params.fixed_energy;
    let mut latency = params.fixed_latency;
    for w in work {
        let search_e = params.array_search_energy(w.physical_rows, w.width);
        let search_t = if w.arrays > 0 {
            params.array_search_latency(w.width)
        } else {
            0.0
        };
        let e = search_e + w.trees as f64 * params.energy_per_tree;
        let t = search_t + w.trees as f64 * params.latency_per_tree;
        energy += e;
        latency += t;
        layers.push(LayerCost {
            arrays: w.arrays,
            energy: e,
            latency: t,
        });
    }
    (layers, energy, latency)
}

/// Cost of one classification over the given layer workloads.
pub fn estimate_workload_cost(
    work: &[LayerWorkload],
    params: &CostParams,
    baseline: Option<&CostParams>,
) -> Result<CostReport> {
    params.validate()?;
    let (layers, energy, latency) = cost_layers(work, params);
    let total_cells: usize = work.iter().map(|w| w.total_cells).sum();
    let padding_cells: usize = work.iter().map(|w| w.padding_cells).sum();
    let physical_rows: usize = work.iter().map(|w| w.physical_rows).sum();
    let programming = match &params.programming {
        Some(p) => {
            let pw = required_pulse_width(p.write_voltage, &p.switching)?;
            Some(ProgrammingCost {
                pulse_width: pw,
                time: physical_rows as f64 * pw,
                energy: 2.0 * total_cells as f64 * p.pulse_energy,
            })
        }
        None => None,
    };
    let comparison = match baseline {
        Some(b) => {
            b.validate()?;
            let (_, be, bt) = cost_layers(work, b);
            Some(Comparison {
                baseline: b.technology.clone(),
                baseline_energy: be,
                baseline_latency: bt,
                energy_ratio: be / energy,
                latency_ratio: bt / latency,
            })
        }
        None => None,
    };
    Ok(CostReport {
        technology: params.technology.clone(),
        calibration: params.calibration.clone(),
        energy,
        latency,
        padding_energy: padding_cells as f64 * params.sl_drive_energy,
        arrays: work.iter().map(|w| w.arrays).sum(),
        total_cells,
        area_um2: total_cells as f64 * params.cell_area_um2,
        layers,
        programming,
        comparison,
    })
}

pub fn estimate_classification_cost<T: Scalar>(
    plan: &ModelPlan<T>,
    params: &CostParams,
    baseline: Option<&CostParams>,
) -> Result<CostReport> {
    estimate_workload_cost(&LayerWorkload::from_plan(plan), params, baseline)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::{prop_assert, proptest};

    fn one_array() -> LayerWorkload {
        LayerWorkload {
            arrays: 1,
            physical_rows: 128,
            width: 128,
            trees: 1,
            padding_cells: 0,
            total_cells: 128 * 128,
        }
    }

    #[test]
    fn builtins_load() {
        for name in BUILTIN_TECHNOLOGIES {
            CostParams::builtin(name).unwrap();
        }
        assert!(CostParams::builtin("sram").is_err());
    }

    #[test]
    fn fefet_single_array_reference() {
        let p = CostParams::builtin("fefet").unwrap();
        let r = estimate_workload_cost(&[one_array()], &p, None).unwrap();
        assert_relative_eq!(r.energy, 2.9184e-12, max_relative = 1e-9);
        assert_relative_eq!(r.latency, 1.898125e-9, max_relative = 1e-9);
        assert_relative_eq!(r.area_um2, 983.04, max_relative = 1e-9);
    }

    #[test]
    fn reram_relative_position() {
        let f = CostParams::builtin("fefet").unwrap();
        let r = CostParams::builtin("reram").unwrap();
        let rep = estimate_workload_cost(&[one_array()], &r, Some(&f)).unwrap();
        let c = rep.comparison.unwrap();
        assert_relative_eq!(1.0 / c.energy_ratio, 16.0, max_relative = 1e-9);
        assert_relative_eq!(1.0 / c.latency_ratio, 2.5, max_relative = 1e-9);
    }

    #[test]
    fn sense_time_scales_inverse_with_columns() {
        let p = CostParams::builtin("fefet").unwrap();
        assert_relative_eq!(p.sense_time_for_columns(64), 2.0 * p.sense_time_for_columns(128));
    }

    #[test]
    fn negative_parameter_rejected() {
        let mut p = CostParams::builtin("fefet").unwrap();
        p.sl_drive_energy = -1.0;
        assert!(matches!(p.validate(), Err(Error::Config(_))));
        assert!(estimate_workload_cost(&[one_array()], &p, None).is_err());
    }

    #[test]
    fn unknown_field_rejected() {
        let text = FEFET_JSON.replace("\"version\": 1,", "\"version\": 1, \"bogus\": 2,");
        assert!(CostParams::from_json(&text).is_err());
    }

    #[test]
    fn programming_cost_uses_switching_law() {
        let p = CostParams::builtin("fefet").unwrap();
        let r = estimate_workload_cost(&[one_array()], &p, None).unwrap();
        let prog = r.programming.unwrap();
        let pw = 1e-9 * (62.17f64 / 9.0).exp();
        assert_relative_eq!(prog.pulse_width, pw, max_relative = 1e-12);
        assert_relative_eq!(prog.time, 128.0 * pw, max_relative = 1e-12);
    }

    proptest! {
        #[test]
        fn energy_linear_in_arrays(k in 1usize..50, rows in 1usize..128) {
            let p = CostParams::builtin("fefet").unwrap();
            let w = LayerWorkload { arrays: 1, physical_rows: rows, width: 128, trees: 1, padding_cells: 0, total_cells: 128 * 128 };
            let wk = LayerWorkload { arrays: k, physical_rows: rows * k, trees: k, total_cells: w.total_cells * k, ..w };
            let one = estimate_workload_cost(&[w], &p, None).unwrap();
            let many = estimate_workload_cost(&[wk], &p, None).unwrap();
            prop_assert!((many.energy - k as f64 * one.energy).abs() <= 1e-9 * many.energy);
            // Parallel arrays share one search window.
            prop_assert!((many.latency - one.latency).abs() <= 1e-18);
        }

        #[test]
        fn layers_add(a in 1usize..20, b in 1usize..20) {
            let p = CostParams::builtin("reram").unwrap();
            let la = LayerWorkload { arrays: a, physical_rows: 100 * a, width: 128, trees: a, padding_cells: 7 * a, total_cells: 16384 * a };
            let lb = LayerWorkload { arrays: b, physical_rows: 50 * b, ..la };
            let ra = estimate_workload_cost(&[la], &p, None).unwrap();
            let rb = estimate_workload_cost(&[lb], &p, None).unwrap();
            let rab = estimate_workload_cost(&[la, lb], &p, None).unwrap();
            prop_assert!((rab.energy - ra.energy - rb.energy).abs() <= 1e-9 * rab.energy);
            prop_assert!((rab.latency - ra.latency - rb.latency).abs() <= 1e-9 * rab.latency);
        }
    }
}
