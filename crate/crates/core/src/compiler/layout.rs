use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use super::Interval;
use crate::error::{Error, Result};
use crate::forest::ClassDistribution;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub width: usize,
    pub height: usize,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
        }
    }
}

impl Geometry {
    pub fn validate(self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::config("array geometry must be at least 1x1"));
        }
        Ok(())
    }

    pub fn cells(self) -> usize {
        self.width * self.height
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnPart {
    Whole,
    Msb,
    Lsb,
}

/// What a physical column searches: a feature, or one half of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub feature: usize,
    pub part: ColumnPart,
    pub bits: u32,
}

impl ColumnSpec {
    /// Level this column sees for a feature quantized at `total_bits`.
    pub fn level(self, bin: u32, total_bits: u32) -> u32 {
        match self.part {
            ColumnPart::Whole => bin,
            ColumnPart::Msb => bin >> (total_bits - self.bits),
            ColumnPart::Lsb => bin & ((1 << self.bits) - 1),
        }
    }
}

/// Nominal configuration of one ACAM cell at `bits` precision.
///
/// F0 programs the upper bound with code `hi + 1`; F1 programs the lower
/// bound with code `2^bits - lo`. Code `2^bits` is the highest-Vth state:
/// on F0 it fixes the upper bound at the top of the range, on F1 it fixes
/// the lower bound at the bottom. A don't-care cell has both at `2^bits`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellConfig {
    Interval { lo: u32, hi: u32, bits: u32 },
    DontCare { bits: u32 },
}

impl CellConfig {
    pub fn from_interval(iv: Interval, bits: u32) -> Self {
        if iv.is_full(bits) {
            CellConfig::DontCare { bits }
        } else {
            CellConfig::Interval {
                lo: iv.lo,
                hi: iv.hi,
                bits,
            }
        }
    }

    pub fn bits(self) -> u32 {
        match self {
            CellConfig::Interval { bits, .. } | CellConfig::DontCare { bits } => bits,
        }
    }

    pub fn bounds(self) -> Interval {
        match self {
            CellConfig::Interval { lo, hi, .. } => Interval::new(lo, hi),
            CellConfig::DontCare { bits } => Interval::new(0, (1 << bits) - 1),
        }
    }

    pub fn upper_code(self) -> u32 {
        self.bounds().hi + 1
    }

    pub fn lower_code(self) -> u32 {
        (1 << self.bits()) - self.bounds().lo
    }

    pub fn is_dont_care(self) -> bool {
        matches!(self, CellConfig::DontCare { .. })
    }
}

/// Non-don't-care cell at array-local coordinates, with its device codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "[u32; 6]", try_from = "[u32; 6]")]
pub struct PlacedCell {
    pub row: u32,
    pub col: u32,
    pub lo: u32,
    pub hi: u32,
    pub upper_code: u32,
    pub lower_code: u32,
}

impl From<PlacedCell> for [u32; 6] {
    fn from(c: PlacedCell) -> Self {
        [c.row, c.col, c.lo, c.hi, c.upper_code, c.lower_code]
    }
}

impl TryFrom<[u32; 6]> for PlacedCell {
    type Error = String;

    fn try_from(a: [u32; 6]) -> std::result::Result<Self, String> {
        if a[2] > a[3] {
            return Err(format!("cell interval {}..{} is empty", a[2], a[3]));
        }
        Ok(PlacedCell {
            row: a[0],
            col: a[1],
            lo: a[2],
            hi: a[3],
            upper_code: a[4],
            lower_code: a[5],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayPlan {
    pub row_block: usize,
    pub col_block: usize,
    pub rows_used: usize,
    pub cols_used: usize,
    /// Sorted by (row, col); every other cell in the used rows is don't-care.
    pub cells: Vec<PlacedCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LeafEntry<T: Scalar> {
    pub leaf: usize,
    pub distribution: ClassDistribution<T>,
    pub samples: usize,
}

/// Constrained cells of a logical row as `(column, interval)`, sorted by column.
pub type Word = Vec<(usize, Interval)>;

/// One tree laid out on a grid of `row_blocks x col_blocks` arrays. Logical
/// row `r` lives at local row `r % height` of row block `r / height` and
/// spans every column block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TreePlan<T: Scalar> {
    /// Bits of the feature quantizer the columns are derived from.
    pub bits: u32,
    pub geometry: Geometry,
    pub columns: Vec<ColumnSpec>,
    pub source_leaves: usize,
    /// Leaf payload of each logical row.
    pub rows: Vec<LeafEntry<T>>,
    pub row_blocks: usize,
    pub col_blocks: usize,
    /// Row-block-major.
    pub arrays: Vec<ArrayPlan>,
}

/// Lay logical rows out in fixed-size arrays. Columns keep their order;
/// overflow spills right (word decomposition) and down (row stacking).
pub fn map_tree<T: Scalar>(
    words: &[Word],
    rows: Vec<LeafEntry<T>>,
    columns: Vec<ColumnSpec>,
    source_leaves: usize,
    bits: u32,
    geometry: Geometry,
) -> Result<TreePlan<T>> {
    geometry.validate()?;
    if words.len() != rows.len() {
        return Err(Error::Internal("word and leaf counts differ".into()));
    }
    let (w, h) = (geometry.width, geometry.height);
    let row_blocks = words.len().div_ceil(h);
    let col_blocks = if words.is_empty() {
        0
    } else {
        columns.len().div_ceil(w).max(1)
    };
    let mut arrays = Vec::with_capacity(row_blocks * col_blocks);
    for rb in 0..row_blocks {
        let first = rb * h;
        let last = (first + h).min(words.len());
        for cb in 0..col_blocks {
            let col_lo = cb * w;
            let col_hi = (col_lo + w).min(columns.len());
            let mut cells = Vec::new();
            for (local_row, word) in words[first..last].iter().enumerate() {
                for &(col, iv) in word {
                    if col < col_lo || col >= col_hi {
                        continue;
                    }
                    let cfg = CellConfig::from_interval(iv, columns[col].bits);
                    if cfg.is_dont_care() {
                        continue;
                    }
                    cells.push(PlacedCell {
                        row: local_row as u32,
                        col: (col - col_lo) as u32,
                        lo: iv.lo,
                        hi: iv.hi,
                        upper_code: cfg.upper_code(),
                        lower_code: cfg.lower_code(),
                    });
                }
            }
            cells.sort_unstable_by_key(|c| (c.row, c.col));
            arrays.push(ArrayPlan {
                row_block: rb,
                col_block: cb,
                rows_used: last - first,
                cols_used: col_hi - col_lo,
                cells,
            });
        }
    }
    let plan = TreePlan {
        bits,
        geometry,
        columns,
        source_leaves,
        rows,
        row_blocks,
        col_blocks,
        arrays,
    };
    plan.validate()?;
    Ok(plan)
}

impl<T: Scalar> TreePlan<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Consistency(m));
        if self.arrays.len() != self.row_blocks * self.col_blocks {
            return bad("array grid incomplete".into());
        }
        if self.rows.len().div_ceil(self.geometry.height) != self.row_blocks {
            return bad("row block count does not match logical rows".into());
        }
        for (i, a) in self.arrays.iter().enumerate() {
            if a.row_block != i / self.col_blocks.max(1) || a.col_block != i % self.col_blocks.max(1) {
                return bad(format!("array {i} out of order"));
            }
            for c in &a.cells {
                let col = a.col_block * self.geometry.width + c.col as usize;
                if c.row as usize >= a.rows_used || col >= self.columns.len() {
                    return bad(format!("cell outside array {i}"));
                }
                let cfg = CellConfig::from_interval(Interval::new(c.lo, c.hi), self.columns[col].bits);
                if c.hi >> self.columns[col].bits != 0
                    || cfg.upper_code() != c.upper_code
                    || cfg.lower_code() != c.lower_code
                {
                    return bad(format!("cell codes inconsistent in array {i}"));
                }
            }
        }
        Ok(())
    }

    pub fn array(&self, row_block: usize, col_block: usize) -> &ArrayPlan {
        &self.arrays[row_block * self.col_blocks + col_block]
    }

    /// Constrained cells of every logical row, with global column indices.
    pub fn words(&self) -> Vec<Word> {
        let mut words = vec![Vec::new(); self.rows.len()];
        for a in &self.arrays {
            let base_row = a.row_block * self.geometry.height;
            let base_col = a.col_block * self.geometry.width;
            for c in &a.cells {
                words[base_row + c.row as usize].push((base_col + c.col as usize, Interval::new(c.lo, c.hi)));
            }
        }
        words.iter_mut().for_each(|w| w.sort_unstable_by_key(|&(c, _)| c));
        words
    }

    /// Column levels for a query whose features are quantized at `self.bits`.
    pub fn column_levels(&self, feature_bins: &[u32]) -> Vec<u32> {
        self.columns
            .iter()
            .map(|c| c.level(feature_bins[c.feature], self.bits))
            .collect()
    }

    pub fn stats(&self) -> PlanStats {
        let mut s = PlanStats {
            arrays: self.arrays.len(),
            logical_rows: self.rows.len(),
            source_leaves: self.source_leaves,
            columns: self.columns.len(),
            ..PlanStats::default()
        };
        for a in &self.arrays {
            s.total_cells += self.geometry.cells();
            s.physical_rows += a.rows_used;
            s.utilized_cells += a.rows_used * a.cols_used;
            s.interval_cells += a.cells.len();
            s.padding_cells += a.rows_used * (self.geometry.width - a.cols_used);
            s.unused_cells += (self.geometry.height - a.rows_used) * self.geometry.width;
        }
        s
    }
}

/// Cell accounting. `utilized + padding + unused = total`; utilized cells
/// are either interval cells or don't-care cells inside the word.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanStats {
    pub arrays: usize,
    pub logical_rows: usize,
    pub source_leaves: usize,
    /// Sum over arrays of rows in use.
    pub physical_rows: usize,
    pub columns: usize,
    pub total_cells: usize,
    pub utilized_cells: usize,
    pub interval_cells: usize,
    pub padding_cells: usize,
    pub unused_cells: usize,
}

impl PlanStats {
    /// Don't-care share of the cells in used rows (word and padding).
    pub fn dont_care_fraction(&self) -> f64 {
        let used = self.utilized_cells + self.padding_cells;
        if used == 0 {
            return 0.0;
        }
        (used - self.interval_cells) as f64 / used as f64
    }

    /// Logical rows per source leaf (above 1 after precision expansion).
    pub fn expansion_factor(&self) -> f64 {
        if self.source_leaves == 0 {
            return 1.0;
        }
        self.logical_rows as f64 / self.source_leaves as f64
    }
}

impl AddAssign for PlanStats {
    fn add_assign(&mut self, o: Self) {
        self.arrays += o.arrays;
        self.logical_rows += o.logical_rows;
        self.source_leaves += o.source_leaves;
        self.physical_rows += o.physical_rows;
        self.columns = self.columns.max(o.columns);
        self.total_cells += o.total_cells;
        self.utilized_cells += o.utilized_cells;
        self.interval_cells += o.interval_cells;
        self.padding_cells += o.padding_cells;
        self.unused_cells += o.unused_cells;
    }
}
