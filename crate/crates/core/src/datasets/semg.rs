//! Synthetic surface-EMG hand-movement recordings and a windowed feature
//! extractor.
//!
//! The generator produces two-channel recordings for six grasp types
//! performed by several subjects. Each recording is band-limited Gaussian
//! noise (an AR(2) resonator around 80 Hz) modulated by a movement-specific
//! activation envelope. Subjects differ by per-channel electrode gain and
//! repetitions differ by amplitude, onset and duration jitter, so classes
//! overlap the way real recordings from different people do.
//!
//! [`extract_features`] turns a recording into windowed RMS and mean
//! absolute value per channel. It works on any multi-channel signal, not only
//! synthetic ones.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, FeatureMatrix, LabelVector};
use crate::error::{Error, Result};
use crate::rng::{self, tag};

pub const MOVEMENTS: [&str; 6] = ["spherical", "tip", "palmar", "lateral", "cylindrical", "hook"];

/// Activation pattern of one grasp.
#[derive(Debug, Clone, Copy)]
struct Signature {
    /// Plateau amplitude per channel (flexor, extensor).
    amplitude: [f64; 2],
    /// Relative amplitude of the late phase of the hold.
    late_ratio: [f64; 2],
    /// Hold duration in seconds.
    hold: f64,
    /// Rise time in seconds.
    rise: f64,
}

const SIGNATURES: [Signature; 6] = [
    Signature {
        amplitude: [1.00, 0.55],
        late_ratio: [0.85, 0.90],
        hold: 2.6,
        rise: 0.35,
    },
    Signature {
        amplitude: [0.55, 0.70],
        late_ratio: [1.00, 0.80],
        hold: 1.8,
        rise: 0.20,
    },
    Signature {
        amplitude: [0.80, 0.80],
        late_ratio: [0.70, 1.00],
        hold: 2.2,
        rise: 0.30,
    },
    Signature {
        amplitude: [0.65, 0.45],
        late_ratio: [0.95, 0.95],
        hold: 2.0,
        rise: 0.45,
    },
    Signature {
        amplitude: [1.15, 0.90],
        late_ratio: [0.90, 0.75],
        hold: 3.0,
        rise: 0.40,
    },
    Signature {
        amplitude: [0.90, 1.10],
        late_ratio: [0.80, 1.05],
        hold: 2.4,
        rise: 0.25,
    },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SemgSynthConfig {
    pub subjects: usize,
    pub repetitions: usize,
    pub sample_rate: f64,
    pub duration_s: f64,
    pub window_s: f64,
    /// Log-normal sigma of the per-subject, per-channel electrode gain.
    pub subject_gain_sigma: f64,
    /// Log-normal sigma of the per-repetition effort.
    pub repetition_gain_sigma: f64,
    /// Uniform jitter of movement onset, seconds.
    pub onset_jitter_s: f64,
    /// Relative jitter of hold duration.
    pub hold_jitter: f64,
    /// Standard deviation of the background noise relative to unit activation.
    pub noise_floor: f64,
    /// Emit natural-log amplitudes instead of raw RMS/MAV values.
    pub log_features: bool,
}

impl Default for SemgSynthConfig {
    fn default() -> Self {
        Self {
            subjects: 5,
            repetitions: 60,
            sample_rate: 500.0,
            duration_s: 6.0,
            window_s: 1.0,
            subject_gain_sigma: 0.25,
            repetition_gain_sigma: 0.20,
            onset_jitter_s: 0.4,
            hold_jitter: 0.2,
            noise_floor: 0.05,
            log_features: true,
        }
    }
}

/// One multi-channel recording.
#[derive(Debug, Clone)]
pub struct Recording {
    pub subject: usize,
    pub movement: usize,
    pub channels: Vec<Vec<f64>>,
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

fn envelope(t: f64, onset: f64, rise: f64, hold: f64, late: f64) -> f64 {
    let up = smoothstep((t - onset) / rise);
    let down = 1.0 - smoothstep((t - onset - rise - hold) / rise);
    let phase = ((t - onset - rise) / hold).clamp(0.0, 1.0);
    up * down * (1.0 + (late - 1.0) * phase)
}

fn carrier<R: Rng>(n: usize, sample_rate: f64, rng: &mut R) -> Vec<f64> {
    let r: f64 = 0.85;
    let theta = 2.0 * std::f64::consts::PI * 80.0 / sample_rate;
    let (a1, a2) = (2.0 * r * theta.cos(), -r * r);
    let white = Normal::new(0.0, 1.0).expect("unit normal");
    let (mut y1, mut y2) = (0.0, 0.0);
    let mut out = Vec::with_capacity(n);
    // burn-in so the resonator reaches steady state
    for i in 0..n + 200 {
        let y = a1 * y1 + a2 * y2 + white.sample(rng);
        y2 = y1;
        y1 = y;
        if i >= 200 {
            out.push(y);
        }
    }
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    out.iter_mut().for_each(|v| *v /= rms);
    out
}

/// Generate recordings for every (subject, movement, repetition).
pub fn synthesize_recordings(cfg: &SemgSynthConfig, seed: u64) -> Result<Vec<Recording>> {
    if cfg.subjects == 0 || cfg.repetitions == 0 || cfg.sample_rate <= 0.0 || cfg.duration_s <= 0.0 {
        return Err(Error::config(
            "sEMG synthesis needs subjects, repetitions and a positive duration",
        ));
    }
    let n = (cfg.sample_rate * cfg.duration_s).round() as usize;
    let subject_gain =
        LogNormal::new(0.0, cfg.subject_gain_sigma).map_err(|e| Error::config(format!("subject gain: {e}")))?;
    let effort =
        LogNormal::new(0.0, cfg.repetition_gain_sigma).map_err(|e| Error::config(format!("repetition gain: {e}")))?;
    let noise = Normal::new(0.0, cfg.noise_floor.max(0.0)).map_err(|e| Error::config(format!("noise floor: {e}")))?;

    let mut out = Vec::with_capacity(cfg.subjects * MOVEMENTS.len() * cfg.repetitions);
    for subject in 0..cfg.subjects {
        let mut srng = rng::stream(seed, &[tag::SYNTH, subject as u64]);
        let gains: [f64; 2] = [subject_gain.sample(&mut srng), subject_gain.sample(&mut srng)];
        for (movement, sig) in SIGNATURES.iter().enumerate() {
            for rep in 0..cfg.repetitions {
                let mut rrng = rng::stream(seed, &[tag::SYNTH, subject as u64, movement as u64, rep as u64]);
                let level = effort.sample(&mut rrng);
                let onset = 1.0 + rrng.random_range(-cfg.onset_jitter_s..=cfg.onset_jitter_s);
                let hold = sig.hold * (1.0 + rrng.random_range(-cfg.hold_jitter..=cfg.hold_jitter));
                let channels = (0..2)
                    .map(|c| {
                        let base = carrier(n, cfg.sample_rate, &mut rrng);
                        let amp = sig.amplitude[c] * gains[c] * level;
                        base.iter()
                            .enumerate()
                            .map(|(i, &z)| {
                                let t = i as f64 / cfg.sample_rate;
                                amp * envelope(t, onset, sig.rise, hold, sig.late_ratio[c]) * z
                                    + noise.sample(&mut rrng)
                            })
                            .collect()
                    })
                    .collect();
                out.push(Recording {
                    subject,
                    movement,
                    channels,
                });
            }
        }
    }
    Ok(out)
}

/// Windowed RMS and mean absolute value for each channel, ordered
/// channel-major then window then (rms, mav).
pub fn extract_features(channels: &[Vec<f64>], sample_rate: f64, window_s: f64) -> Vec<f64> {
    let win = ((sample_rate * window_s).round() as usize).max(1);
    let mut out = Vec::new();
    for ch in channels {
        for chunk in ch.chunks(win) {
            let len = chunk.len() as f64;
            let rms = (chunk.iter().map(|v| v * v).sum::<f64>() / len).sqrt();
            let mav = chunk.iter().map(|v| v.abs()).sum::<f64>() / len;
            out.push(rms);
            out.push(mav);
        }
    }
    out
}

pub fn feature_names(channel_count: usize, windows: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(channel_count * windows * 2);
    for c in 0..channel_count {
        for w in 0..windows {
            names.push(format!("ch{c}_w{w}_rms"));
            names.push(format!("ch{c}_w{w}_mav"));
        }
    }
    names
}

/// Synthesize and featurize in one step.
pub fn synthesize_dataset(cfg: &SemgSynthConfig, seed: u64) -> Result<Dataset<f64>> {
    let recordings = synthesize_recordings(cfg, seed)?;
    let rows: Vec<Vec<f64>> = recordings
        .iter()
        .map(|r| {
            let mut f = extract_features(&r.channels, cfg.sample_rate, cfg.window_s);
            if cfg.log_features {
                f.iter_mut().for_each(|v| *v = v.max(1e-12).ln());
            }
            f
        })
        .collect();
    let labels = recordings.iter().map(|r| r.movement).collect();
    let features = FeatureMatrix::from_rows(&rows)?;
    let labels =
        LabelVector::new(labels, MOVEMENTS.len())?.with_names(MOVEMENTS.iter().map(|s| s.to_string()).collect())?;
    Dataset::new(features, labels)
}

/// Write a featurized dataset as a headered CSV with a trailing `label` column.
pub fn write_feature_csv(path: impl AsRef<Path>, data: &Dataset<f64>, names: &[String]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str(&names.join(","));
    out.push_str(",label\n");
    let class_names = data.labels.class_names();
    for (row, &label) in data.features.rows().zip(data.labels.labels()) {
        for v in row {
            out.push_str(&format!("{v:.9e},"));
        }
        match class_names.get(label) {
            Some(n) => out.push_str(n),
            None => out.push_str(&label.to_string()),
        }
        out.push('\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}
