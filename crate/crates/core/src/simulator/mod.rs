//! Search compiled plans and run cascade inference on them.
//!
//! Ideal mode checks integer containment per cell. Behavioral mode sums
//! device currents per array segment and compares against the match
//! threshold. Either mode can run on a chip programmed with Vth variation.

mod cascade;
mod sweep;

use rand::rngs::SmallRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::compiler::{CellConfig, Interval, TreePlan};
use crate::device::{cell_current, sample_cell, DeviceParams, ProgrammedCell};
use crate::forest::ClassDistribution;
use crate::rng::{derive_seed, tag};
use crate::scalar::Scalar;

pub use cascade::{evaluate, infer_cascade_mapped, program_model, EvalSummary, InferenceTrace, ProgrammedModel};
pub use sweep::{run_sweep, write_sweep_csv, SweepAxis, SweepConfig, SweepPoint, SweepResult, SweepRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Ideal,
    Behavioral,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ideal" => Ok(Mode::Ideal),
            "behavioral" => Ok(Mode::Behavioral),
            other => Err(format!("unknown mode '{other}' (expected ideal or behavioral)")),
        }
    }
}

/// Variation instance: one programming of the whole chip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Variation {
    pub seed: u64,
}

/// Cell programmed for ideal search: effective bin bounds, possibly empty
/// after variation (`lo > hi`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdealCell {
    pub col: u32,
    pub lo: i64,
    pub hi: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    /// First global column of the segment.
    pub col_start: usize,
    /// Physical columns (real plus padding).
    pub width: usize,
    /// Non-don't-care cells by local column.
    pub cells: Vec<(u32, ProgrammedCell)>,
    /// Thresholds of every cell `(upper, lower)` when programmed with variation.
    pub dense: Option<Vec<(f64, f64)>>,
}

/// A logical row as programmed on the chip.
#[derive(Debug, Clone, PartialEq)]
pub enum ProgrammedRow {
    Ideal(Vec<IdealCell>),
    Behavioral(Vec<Segment>),
}

/// Per-query search inputs for one tree.
pub struct SearchQuery<'a> {
    /// Level seen by every real column.
    pub levels: &'a [u32],
    /// Voltage on every physical column (behavioral mode only).
    pub voltages: &'a [f64],
    /// Summed nominal don't-care current per segment (behavioral mode only).
    pub dont_care_current: &'a [f64],
}

/// Decide whether `row` matches.
pub fn search_word(row: &ProgrammedRow, q: &SearchQuery<'_>, params: &DeviceParams) -> bool {
    match row {
        ProgrammedRow::Ideal(cells) => cells.iter().all(|c| {
            let l = i64::from(q.levels[c.col as usize]);
            c.lo <= l && l <= c.hi
        }),
        ProgrammedRow::Behavioral(segments) => segments.iter().enumerate().all(|(s, seg)| {
            let v = &q.voltages[seg.col_start..seg.col_start + seg.width];
            let total = match &seg.dense {
                Some(vths) => vths
                    .iter()
                    .zip(v)
                    .map(|(&(u, l), &v)| params.upper_current(u, v) + params.lower_current(l, v))
                    .sum::<f64>(),
                None => {
                    let mut total = q.dont_care_current[s];
                    for (col, cell) in &seg.cells {
                        let v = v[*col as usize];
                        total += cell_current(cell, v, params) - dont_care_current(params, v);
                    }
                    total
                }
            };
            total < params.ith
        }),
    }
}

/// Current of a nominal don't-care cell.
pub fn dont_care_current(params: &DeviceParams, v: f64) -> f64 {
    let vth = params.vth_max();
    params.upper_current(vth, v) + params.lower_current(vth, v)
}

/// Integer bounds an ideal sensor would see from a programmed cell: a query
/// level `q` matches iff its voltage lies strictly between the bound voltages.
pub fn effective_interval(cell: &ProgrammedCell, params: &DeviceParams) -> (i64, i64) {
    let scale = f64::from(1u32 << cell.bits);
    let span = params.sl_span();
    let upper = (cell.vth_upper - params.crossing_offset() - params.sl_min) / span;
    let lower = (params.sl_max - cell.vth_lower + params.crossing_offset() - params.sl_min) / span;
    let hi = (upper * scale - 0.5).ceil() as i64 - 1;
    let lo = (lower * scale - 0.5).floor() as i64 + 1;
    (lo, hi)
}

/// A tree plan programmed onto the chip.
#[derive(Debug, Clone)]
pub struct ProgrammedTree<T: Scalar> {
    pub mode: Mode,
    pub rows: Vec<ProgrammedRow>,
    pub leaves: Vec<ClassDistribution<T>>,
    /// Physical columns across all column blocks.
    pub physical_columns: usize,
    pub arrays: usize,
}

fn cell_rng(seed: u64, tree: usize, row: usize, col: usize) -> SmallRng {
    SmallRng::seed_from_u64(derive_seed(
        seed,
        &[tag::VARIATION, tree as u64, row as u64, col as u64],
    ))
}

/// Program `plan` for searching in `mode`. `tree_id` keys the per-cell
/// variation streams; without `variation` (or with zero sigma) every cell
/// takes its nominal thresholds.
pub fn program_tree<T: Scalar>(
    plan: &TreePlan<T>,
    mode: Mode,
    params: &DeviceParams,
    variation: Option<Variation>,
    tree_id: usize,
) -> ProgrammedTree<T> {
    let variation = variation.filter(|_| params.sigma() > 0.0);
    let words = plan.words();
    let w = plan.geometry.width;
    let rows = words
        .iter()
        .enumerate()
        .map(|(r, word)| match (mode, variation) {
            (Mode::Ideal, None) => ProgrammedRow::Ideal(
                word.iter()
                    .map(|&(c, iv)| IdealCell {
                        col: c as u32,
                        lo: i64::from(iv.lo),
                        hi: i64::from(iv.hi),
                    })
                    .collect(),
            ),
            (Mode::Ideal, Some(var)) => {
                // every real column, since a perturbed don't-care can bite
                let mut k = 0;
                let mut cells = Vec::new();
                for (c, col) in plan.columns.iter().enumerate() {
                    let iv = if k < word.len() && word[k].0 == c {
                        k += 1;
                        word[k - 1].1
                    } else {
                        Interval::new(0, (1 << col.bits) - 1)
                    };
                    let cfg = CellConfig::from_interval(iv, col.bits);
                    let cell = sample_cell(cfg, params, &mut cell_rng(var.seed, tree_id, r, c));
                    let (lo, hi) = effective_interval(&cell, params);
                    if lo > 0 || hi < (1i64 << col.bits) - 1 {
                        cells.push(IdealCell { col: c as u32, lo, hi });
                    }
                }
                ProgrammedRow::Ideal(cells)
            }
            (Mode::Behavioral, _) => {
                let segments = (0..plan.col_blocks)
                    .map(|cb| {
                        let start = cb * w;
                        let cells: Vec<(u32, ProgrammedCell)> = word
                            .iter()
                            .filter(|(c, _)| *c >= start && *c < start + w)
                            .map(|&(c, iv)| {
                                let cfg = CellConfig::from_interval(iv, plan.columns[c].bits);
                                ((c - start) as u32, ProgrammedCell::nominal(cfg, params))
                            })
                            .collect();
                        let dense = variation.map(|var| {
                            let mut k = 0;
                            (0..w)
                                .map(|local| {
                                    let c = start + local;
                                    let bits = plan.columns.get(c).map_or(1, |col| col.bits);
                                    let cfg = if k < cells.len() && cells[k].0 as usize == local {
                                        k += 1;
                                        let p = cells[k - 1].1;
                                        CellConfig::Interval {
                                            lo: (1 << p.bits) - p.lower_code,
                                            hi: p.upper_code - 1,
                                            bits: p.bits,
                                        }
                                    } else {
                                        CellConfig::DontCare { bits }
                                    };
                                    let s = sample_cell(cfg, params, &mut cell_rng(var.seed, tree_id, r, c));
                                    (s.vth_upper, s.vth_lower)
                                })
                                .collect()
                        });
                        Segment {
                            col_start: start,
                            width: w,
                            cells,
                            dense,
                        }
                    })
                    .collect();
                ProgrammedRow::Behavioral(segments)
            }
        })
        .collect();
    ProgrammedTree {
        mode,
        rows,
        leaves: plan.rows.iter().map(|l| l.distribution.clone()).collect(),
        physical_columns: plan.col_blocks * w,
        arrays: plan.arrays.len(),
    }
}

/// Rows matched by one tree search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchResult {
    pub matched: Vec<usize>,
}

impl MatchResult {
    pub fn abstained(&self) -> bool {
        self.matched.is_empty()
    }
}

/// Scratch buffers reused across searches.
#[derive(Debug, Default)]
pub struct SearchBuffers {
    levels: Vec<u32>,
    voltages: Vec<f64>,
    dont_care: Vec<f64>,
}

impl<T: Scalar> ProgrammedTree<T> {
    /// Search every row for a query given as per-feature bins.
    pub fn search(
        &self,
        plan: &TreePlan<T>,
        feature_bins: &[u32],
        params: &DeviceParams,
        buf: &mut SearchBuffers,
    ) -> MatchResult {
        buf.levels.clear();
        buf.levels
            .extend(plan.columns.iter().map(|c| c.level(feature_bins[c.feature], plan.bits)));
        if self.mode == Mode::Behavioral {
            buf.voltages.clear();
            buf.voltages.extend(
                plan.columns
                    .iter()
                    .zip(&buf.levels)
                    .map(|(c, &l)| params.query_voltage(l, c.bits)),
            );
            buf.voltages.resize(self.physical_columns, params.idle_voltage());
            buf.dont_care.clear();
            buf.dont_care.extend(
                buf.voltages
                    .chunks(plan.geometry.width)
                    .map(|seg| seg.iter().map(|&v| dont_care_current(params, v)).sum::<f64>()),
            );
        }
        let q = SearchQuery {
            levels: &buf.levels,
            voltages: &buf.voltages,
            dont_care_current: &buf.dont_care,
        };
        MatchResult {
            matched: (0..self.rows.len())
                .filter(|&r| search_word(&self.rows[r], &q, params))
                .collect(),
        }
    }

    /// Mean leaf distribution over matched rows; `None` is an abstention.
    pub fn infer(
        &self,
        plan: &TreePlan<T>,
        feature_bins: &[u32],
        params: &DeviceParams,
        buf: &mut SearchBuffers,
    ) -> Option<ClassDistribution<T>> {
        let m = self.search(plan, feature_bins, params, buf);
        let class_count = self.leaves.first().map_or(0, ClassDistribution::class_count);
        ClassDistribution::mean(m.matched.iter().map(|&r| &self.leaves[r]), class_count)
    }
}

/// Infer one tree from scratch (convenience wrapper over [`program_tree`]).
pub fn infer_tree<T: Scalar>(
    plan: &TreePlan<T>,
    feature_bins: &[u32],
    mode: Mode,
    params: &DeviceParams,
    variation: Option<Variation>,
) -> Option<ClassDistribution<T>> {
    let programmed = program_tree(plan, mode, params, variation, 0);
    programmed.infer(plan, feature_bins, params, &mut SearchBuffers::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{map_tree, ColumnPart, ColumnSpec, Geometry, LeafEntry};

    fn plan(words: Vec<Vec<(usize, Interval)>>, features: usize, bits: u32) -> TreePlan<f64> {
        let n = words.len();
        let cols = (0..features)
            .map(|feature| ColumnSpec {
                feature,
                part: ColumnPart::Whole,
                bits,
            })
            .collect();
        let leaves = (0..n)
            .map(|i| LeafEntry {
                leaf: i,
                distribution: ClassDistribution::one_hot(i % 3, 3),
                samples: 1,
            })
            .collect();
        map_tree(&words, leaves, cols, n, bits, Geometry::default()).unwrap()
    }

    #[test]
    fn containment_examples() {
        let p = plan(vec![vec![(0, Interval::new(0, 2))]], 2, 3);
        let d = DeviceParams::default();
        for mode in [Mode::Ideal, Mode::Behavioral] {
            let t = program_tree(&p, mode, &d, None, 0);
            let mut buf = SearchBuffers::default();
            assert_eq!(t.search(&p, &[1, 7], &d, &mut buf).matched, vec![0]);
            assert!(t.search(&p, &[3, 7], &d, &mut buf).abstained());
        }
    }

    #[test]
    fn multiple_matches_average() {
        let p = plan(
            vec![vec![(0, Interval::new(0, 4))], vec![(0, Interval::new(3, 7))]],
            1,
            3,
        );
        let d = DeviceParams::default();
        let out = infer_tree(&p, &[3], Mode::Ideal, &d, None).unwrap();
        assert_eq!(out.probabilities(), &[0.5, 0.5, 0.0]);
        assert_eq!(infer_tree(&p, &[5], Mode::Ideal, &d, None).unwrap().argmax(), 1);
    }

    #[test]
    fn no_rows_abstains() {
        let p = plan(vec![], 2, 3);
        assert!(infer_tree(&p, &[0, 0], Mode::Ideal, &DeviceParams::default(), None).is_none());
    }

    #[test]
    fn nominal_effective_interval_is_programmed_interval() {
        let d = DeviceParams::default();
        for bits in [1, 3, 6] {
            let top = (1u32 << bits) - 1;
            for lo in 0..=top {
                for hi in lo..=top {
                    let cfg = CellConfig::from_interval(Interval::new(lo, hi), bits);
                    let (elo, ehi) = effective_interval(&ProgrammedCell::nominal(cfg, &d), &d);
                    assert!(elo <= i64::from(lo) && (elo == i64::from(lo) || lo == 0));
                    assert!(ehi >= i64::from(hi) && (ehi == i64::from(hi) || hi == top));
                }
            }
        }
    }

    #[test]
    fn variation_is_reproducible() {
        let p = plan(
            vec![vec![(0, Interval::new(1, 5))], vec![(1, Interval::new(0, 3))]],
            2,
            3,
        );
        let d = DeviceParams {
            sigma_frac: 0.1,
            ..DeviceParams::default()
        };
        let a = program_tree(&p, Mode::Ideal, &d, Some(Variation { seed: 3 }), 7);
        let b = program_tree(&p, Mode::Ideal, &d, Some(Variation { seed: 3 }), 7);
        assert_eq!(a.rows, b.rows);
        let c = program_tree(&p, Mode::Ideal, &d, Some(Variation { seed: 4 }), 7);
        assert_ne!(a.rows, c.rows);
    }
}
