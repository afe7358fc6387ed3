use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nucleation-limited switching: `PW = tau0 * exp(alpha / (Vw - voff)^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchingParams {
    pub tau0: f64,
    /// V^2
    pub alpha: f64,
    pub voff: f64,
}

impl Default for SwitchingParams {
    /// Illustrative values giving roughly 1 us at 4 V.
    fn default() -> Self {
        Self {
            tau0: 1e-9,
            alpha: 62.17,
            voff: 1.0,
        }
    }
}

impl SwitchingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau0 > 0.0 && self.alpha > 0.0) || !self.voff.is_finite() {
            return Err(Error::config("switching needs tau0 > 0, alpha > 0 and finite voff"));
        }
        Ok(())
    }
}

/// Write pulse width needed at amplitude `vw`.
pub fn required_pulse_width(vw: f64, sp: &SwitchingParams) -> Result<f64> {
    if !(vw > sp.voff) {
        return Err(Error::Domain(format!(
            "write voltage {vw} V must exceed voff {} V",
            sp.voff
        )));
    }
    Ok(sp.tau0 * (sp.alpha / (vw - sp.voff).powi(2)).exp())
}

/// Least-squares fit of `ln PW = ln tau0 + alpha / (Vw - voff)^2` to
/// measured `(Vw, PW)` points, scanning `voff` on a grid below the smallest
/// `Vw`.
pub fn fit_switching(points: &[(f64, f64)]) -> Result<SwitchingParams> {
    if points.len() < 3 {
        return Err(Error::config("switching fit needs at least 3 points"));
    }
    if points.iter().any(|&(v, pw)| !v.is_finite() || !(pw > 0.0)) {
        return Err(Error::config("switching points need finite Vw and positive PW"));
    }
    let v_min = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let steps = 2000;
    let floor = v_min - 10.0;
    let mut best: Option<(f64, SwitchingParams)> = None;
    for i in 0..steps {
        let voff = floor + (v_min - 1e-3 - floor) * f64::from(i) / f64::from(steps - 1);
        let xs: Vec<f64> = points.iter().map(|&(v, _)| (v - voff).powi(-2)).collect();
        let ys: Vec<f64> = points.iter().map(|&(_, pw)| pw.ln()).collect();
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        if sxx <= 0.0 {
            continue;
        }
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let alpha = sxy / sxx;
        if alpha <= 0.0 {
            continue;
        }
        let intercept = my - alpha * mx;
        let sse: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (y - intercept - alpha * x).powi(2))
            .sum();
        if best.as_ref().is_none_or(|(e, _)| sse < *e) {
            best = Some((
                sse,
                SwitchingParams {
                    tau0: intercept.exp(),
                    alpha,
                    voff,
                },
            ));
        }
    }
    best.map(|(_, p)| p)
        .ok_or_else(|| Error::Domain("no decreasing switching law fits the points".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let sp = SwitchingParams {
            tau0: 1e-9,
            alpha: 1.0,
            voff: 1.0,
        };
        let pw = required_pulse_width(3.0, &sp).unwrap();
        assert!((pw - 1e-9 * 0.25f64.exp()).abs() < 1e-15);
        assert!((pw - 1.284e-9).abs() < 1e-12);
    }

    #[test]
    fn below_voff_is_domain_error() {
        let sp = SwitchingParams::default();
        assert!(matches!(required_pulse_width(1.0, &sp), Err(Error::Domain(_))));
        assert!(matches!(required_pulse_width(0.5, &sp), Err(Error::Domain(_))));
    }

    #[test]
    fn higher_voltage_switches_faster() {
        let sp = SwitchingParams::default();
        assert!(required_pulse_width(4.0, &sp).unwrap() < required_pulse_width(3.0, &sp).unwrap());
        let far = required_pulse_width(sp.voff + 1e3, &sp).unwrap();
        assert!((far / sp.tau0 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn fit_recovers_known_law() {
        let truth = SwitchingParams {
            tau0: 2e-9,
            alpha: 30.0,
            voff: 0.8,
        };
        let pts: Vec<(f64, f64)> = [2.5, 3.0, 3.5, 4.0, 5.0, 6.0]
            .iter()
            .map(|&v| (v, required_pulse_width(v, &truth).unwrap()))
            .collect();
        let fit = fit_switching(&pts).unwrap();
        for &(v, pw) in &pts {
            let got = required_pulse_width(v, &fit).unwrap();
            assert!((got / pw - 1.0).abs() < 0.02, "{v}: {got} vs {pw}");
        }
    }
}
