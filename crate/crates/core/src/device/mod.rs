//! Behavioral FeFET model for the two-transistor ACAM cell.
//!
//! Each cell holds two FeFETs. F0 sees the search voltage directly and turns
//! on above its threshold, setting the upper matching bound. F1 sees the
//! complementary drive `sl_min + sl_max - V` and sets the lower bound. A row
//! matches while its summed current stays below `ith`.

mod switching;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::compiler::CellConfig;
use crate::error::{Error, Result};

pub use switching::{fit_switching, required_pulse_width, SwitchingParams};

pub const DEVICE_PARAMS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceParams {
    pub version: u32,
    /// Programmable bound levels per device (a power of two).
    pub level_count: u32,
    /// Lowest programmed threshold voltage (V).
    pub vth_low: f64,
    /// Memory window (V); the erased, highest-Vth state sits at `vth_low + memory_window`.
    pub memory_window: f64,
    pub sl_min: f64,
    pub sl_max: f64,
    /// Device-to-device Vth sigma as a fraction of the memory window.
    pub sigma_frac: f64,
    pub ion: f64,
    pub ioff: f64,
    /// Subthreshold swing (V/decade).
    pub ss: f64,
    /// Match-line current threshold (A).
    pub ith: f64,
    /// Single-cell sense time (s).
    pub sense_time: f64,
    /// Match-line swing the sense amplifier resolves (V).
    pub sense_swing: f64,
    /// Distance, in LSBs, by which a bound device's Ith crossing sits outside
    /// the programmed bound.
    pub crossing_margin_lsb: f64,
    pub switching: SwitchingParams,
}

impl Default for DeviceParams {
    fn default() -> Self {
        Self {
            version: DEVICE_PARAMS_VERSION,
            level_count: 8,
            vth_low: 0.25,
            memory_window: 1.2,
            sl_min: 0.0,
            sl_max: 1.0,
            sigma_frac: 0.04,
            ion: 1e-5,
            ioff: 1e-12,
            ss: 0.1,
            ith: 1e-7,
            sense_time: 10e-9,
            sense_swing: 0.5,
            crossing_margin_lsb: 0.4,
            switching: SwitchingParams::default(),
        }
    }
}

impl DeviceParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::config(m.to_string()));
        if self.version != DEVICE_PARAMS_VERSION {
            return fail("unsupported device parameter version");
        }
        if self.level_count < 2 || !self.level_count.is_power_of_two() {
            return fail("level_count must be a power of two >= 2");
        }
        if !(self.ioff > 0.0 && self.ioff < self.ith && self.ith < self.ion) {
            return fail("need 0 < ioff < ith < ion");
        }
        if !(self.ss > 0.0 && self.memory_window > 0.0 && self.sense_time > 0.0 && self.sense_swing > 0.0) {
            return fail("ss, memory_window, sense_time and sense_swing must be positive");
        }
        if !(self.sl_max > self.sl_min) {
            return fail("sl_max must exceed sl_min");
        }
        if !(0.0..0.5).contains(&self.crossing_margin_lsb) {
            return fail("crossing_margin_lsb must lie in [0, 0.5)");
        }
        if !(self.sigma_frac >= 0.0) {
            return fail("sigma_frac must be non-negative");
        }
        let levels = self.level_voltages(self.native_bits());
        if levels[0] < self.vth_low - 1e-12 || levels.windows(2).any(|w| w[1] <= w[0]) {
            return fail("Vth levels must be increasing and within the memory window");
        }
        self.switching.validate()
    }

    pub fn native_bits(&self) -> u32 {
        self.level_count.trailing_zeros()
    }

    pub fn sl_span(&self) -> f64 {
        self.sl_max - self.sl_min
    }

    /// Gate overdrive below Vth at which a device conducts exactly `ith`.
    pub fn crossing_offset(&self) -> f64 {
        self.ss * (self.ion / self.ith).log10()
    }

    pub fn vth_max(&self) -> f64 {
        self.vth_low + self.memory_window
    }

    pub fn sigma(&self) -> f64 {
        self.sigma_frac * self.memory_window
    }

    /// Nominal Vth of level `code` (1..=2^bits) at `bits` precision.
    pub fn vth_for_code(&self, code: u32, bits: u32) -> f64 {
        let top = 1u32 << bits;
        if code >= top {
            self.vth_max()
        } else {
            self.sl_min
                + (f64::from(code) + self.crossing_margin_lsb) / f64::from(top) * self.sl_span()
                + self.crossing_offset()
        }
    }

    /// Vth of the usable levels 1..=2^bits.
    pub fn level_voltages(&self, bits: u32) -> Vec<f64> {
        (1..=1u32 << bits).map(|c| self.vth_for_code(c, bits)).collect()
    }

    /// Search-line voltage for a query bin.
    pub fn query_voltage(&self, bin: u32, bits: u32) -> f64 {
        self.sl_min + (f64::from(bin) + 0.5) / f64::from(1u32 << bits) * self.sl_span()
    }

    pub fn lower_bound_voltage(&self, lo: u32, bits: u32) -> f64 {
        self.sl_min + f64::from(lo) / f64::from(1u32 << bits) * self.sl_span()
    }

    pub fn upper_bound_voltage(&self, hi: u32, bits: u32) -> f64 {
        self.sl_min + f64::from(hi + 1) / f64::from(1u32 << bits) * self.sl_span()
    }

    /// Voltage driven on padding columns that carry no feature.
    pub fn idle_voltage(&self) -> f64 {
        0.5 * (self.sl_min + self.sl_max)
    }

    /// Match-line capacitance that makes one leaking boundary cell discharge
    /// `sense_swing` in exactly `sense_time`.
    pub fn ml_capacitance(&self) -> f64 {
        self.ith * self.sense_time / self.sense_swing
    }

    fn device_current(&self, gate: f64, vth: f64) -> f64 {
        (self.ion * 10f64.powf((gate - vth) / self.ss)).clamp(self.ioff, self.ion)
    }

    /// Current of the upper-bound device.
    pub fn upper_current(&self, vth: f64, v: f64) -> f64 {
        self.device_current(v, vth)
    }

    /// Current of the lower-bound device under complementary drive.
    pub fn lower_current(&self, vth: f64, v: f64) -> f64 {
        self.device_current(self.sl_min + self.sl_max - v, vth)
    }
}

/// A cell after programming: nominal codes plus the thresholds actually written.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProgrammedCell {
    pub bits: u32,
    pub upper_code: u32,
    pub lower_code: u32,
    pub vth_upper: f64,
    pub vth_lower: f64,
}

impl ProgrammedCell {
    pub fn nominal(cfg: CellConfig, params: &DeviceParams) -> Self {
        let bits = cfg.bits();
        Self {
            bits,
            upper_code: cfg.upper_code(),
            lower_code: cfg.lower_code(),
            vth_upper: params.vth_for_code(cfg.upper_code(), bits),
            vth_lower: params.vth_for_code(cfg.lower_code(), bits),
        }
    }

    pub fn is_dont_care(&self) -> bool {
        let top = 1 << self.bits;
        self.upper_code == top && self.lower_code == top
    }
}

/// Program a cell, perturbing each device's Vth once by N(0, sigma_frac * MW).
pub fn sample_cell<R: Rng + ?Sized>(cfg: CellConfig, params: &DeviceParams, rng: &mut R) -> ProgrammedCell {
    let mut cell = ProgrammedCell::nominal(cfg, params);
    let sigma = params.sigma();
    if sigma > 0.0 {
        let du: f64 = rng.sample(StandardNormal);
        let dl: f64 = rng.sample(StandardNormal);
        cell.vth_upper += sigma * du;
        cell.vth_lower += sigma * dl;
    }
    cell
}

/// Total cell current at search voltage `v`.
pub fn cell_current(cell: &ProgrammedCell, v: f64, params: &DeviceParams) -> f64 {
    params.upper_current(cell.vth_upper, v) + params.lower_current(cell.vth_lower, v)
}

/// Lowest voltage in `[lo, hi]` where `f` reaches `ith`, by bisection on a
/// function assumed non-decreasing. `None` if it never does.
pub fn rising_crossing(f: impl Fn(f64) -> f64, ith: f64, lo: f64, hi: f64) -> Option<f64> {
    if f(hi) < ith {
        return None;
    }
    if f(lo) >= ith {
        return Some(lo);
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..80 {
        let m = 0.5 * (a + b);
        if f(m) >= ith {
            b = m;
        } else {
            a = m;
        }
    }
    Some(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::Interval;
    use crate::rng;

    fn cell(lo: u32, hi: u32, bits: u32) -> CellConfig {
        CellConfig::from_interval(Interval::new(lo, hi), bits)
    }

    #[test]
    fn defaults_validate() {
        DeviceParams::default().validate().unwrap();
        assert!((DeviceParams::default().ml_capacitance() - 2e-15).abs() < 1e-27);
    }

    #[test]
    fn bin_voltages() {
        let p = DeviceParams::default();
        assert_eq!(p.query_voltage(0, 3), 0.0625);
        assert_eq!(p.upper_bound_voltage(7, 3), 1.0);
        for q in 0..8 {
            let v = p.query_voltage(q, 3);
            assert!(p.lower_bound_voltage(q, 3) < v && v < p.upper_bound_voltage(q, 3));
        }
    }

    #[test]
    fn current_at_and_below_threshold() {
        let p = DeviceParams::default();
        assert_eq!(p.upper_current(0.7, 0.7), p.ion);
        assert!((p.upper_current(0.7, 0.4) - 1e-8).abs() < 1e-20);
    }

    #[test]
    fn upper_device_crosses_beyond_programmed_bound() {
        let p = DeviceParams::default();
        let lsb = p.sl_span() / 8.0;
        for hi in 0..7 {
            let c = ProgrammedCell::nominal(cell(0, hi, 3), &p);
            let x = rising_crossing(|v| cell_current(&c, v, &p), p.ith, p.sl_min, p.sl_max).unwrap();
            let expect = p.upper_bound_voltage(hi, 3) + p.crossing_margin_lsb * lsb;
            assert!((x - expect).abs() < 1e-3, "hi {hi}: {x}");
            // crossing falls between the last matching and first mismatching query
            assert!(p.query_voltage(hi, 3) < x && x < p.query_voltage(hi + 1, 3));
        }
    }

    #[test]
    fn lower_device_mismatches_below_bound() {
        let p = DeviceParams::default();
        let c = ProgrammedCell::nominal(cell(3, 7, 3), &p);
        assert!(cell_current(&c, p.query_voltage(2, 3), &p) > p.ith);
        assert!(cell_current(&c, p.query_voltage(3, 3), &p) < p.ith);
    }

    #[test]
    fn zero_sigma_keeps_nominal() {
        let p = DeviceParams {
            sigma_frac: 0.0,
            ..DeviceParams::default()
        };
        let cfg = cell(2, 5, 3);
        let c = sample_cell(cfg, &p, &mut rng::stream(1, &[]));
        assert_eq!(c, ProgrammedCell::nominal(cfg, &p));
    }

    #[test]
    fn same_stream_same_perturbation() {
        let p = DeviceParams::default();
        let a = sample_cell(cell(2, 5, 3), &p, &mut rng::stream(4, &[1]));
        let b = sample_cell(cell(2, 5, 3), &p, &mut rng::stream(4, &[1]));
        assert_eq!(a, b);
    }

    #[test]
    fn bad_currents_rejected() {
        let p = DeviceParams {
            ith: 1e-4,
            ..DeviceParams::default()
        };
        assert!(matches!(p.validate(), Err(Error::Config(_))));
    }
}
