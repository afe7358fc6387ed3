use super::{BranchPlan, Interval};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Constrained cells of one expanded word, as `(column, interval)` with
/// column `2f` holding the MSB part of feature `f` and `2f + 1` its LSB part.
pub type ExpandedRow = Vec<(usize, Interval)>;

/// Split a `(n + m)`-bit interval into disjoint MSB/LSB rectangles whose
/// union is exactly the interval. `None` marks a don't-care part.
pub fn expand_interval(iv: Interval, n: u32, m: u32) -> Vec<(Option<Interval>, Option<Interval>)> {
    let lsb_top = (1u32 << m) - 1;
    let msb_top = (1u32 << n) - 1;
    let (lo_h, lo_l) = (iv.lo >> m, iv.lo & lsb_top);
    let (hi_h, hi_l) = (iv.hi >> m, iv.hi & lsb_top);
    let part = |iv: Interval, top: u32| (!(iv.lo == 0 && iv.hi == top)).then_some(iv);
    let msb = |lo, hi| part(Interval::new(lo, hi), msb_top);
    let lsb = |lo, hi| part(Interval::new(lo, hi), lsb_top);

    if lo_h == hi_h {
        return vec![(msb(lo_h, lo_h), lsb(lo_l, hi_l))];
    }
    let mut rows = Vec::with_capacity(3);
    // first and last partial MSB slices fold into the middle block when they
    // cover their whole LSB range
    let mid_lo = if lo_l == 0 { lo_h } else { lo_h + 1 };
    let mid_hi = if hi_l == lsb_top { hi_h } else { hi_h - 1 };
    if lo_l != 0 {
        rows.push((msb(lo_h, lo_h), lsb(lo_l, lsb_top)));
    }
    if mid_lo <= mid_hi {
        rows.push((msb(mid_lo, mid_hi), None));
    }
    if hi_l != lsb_top {
        rows.push((msb(hi_h, hi_h), lsb(0, hi_l)));
    }
    rows
}

/// Rows one leaf may expand into. The expansion is a cartesian product over
/// constrained features, so it grows as `3^k` in the worst case.
pub const MAX_EXPANDED_ROWS: usize = 4096;

/// Rewrite a branch quantized at `n + m` bits as MSB/LSB words. Rows
/// multiply across constrained features (Cartesian product).
pub fn expand_precision<T: Scalar>(branch: &BranchPlan<T>, n: u32, m: u32) -> Result<Vec<ExpandedRow>> {
    if n < 1 || m < 1 {
        return Err(Error::config("MSB and LSB widths must be at least 1 bit"));
    }
    let mut product = 1usize;
    for &(_, iv) in &branch.intervals {
        product = product.saturating_mul(expand_interval(iv, n, m).len());
    }
    if product > MAX_EXPANDED_ROWS {
        return Err(Error::config(format!(
            "leaf {} would expand into {product} rows (limit {MAX_EXPANDED_ROWS}); \
             use fewer constrained features per leaf or single-cell precision",
            branch.leaf
        )));
    }
    let mut rows: Vec<ExpandedRow> = vec![Vec::new()];
    for &(f, iv) in &branch.intervals {
        if iv.hi >> (n + m) != 0 {
            return Err(Error::Domain(format!("interval {iv:?} exceeds {} bits", n + m)));
        }
        let parts = expand_interval(iv, n, m);
        let mut next = Vec::with_capacity(rows.len() * parts.len());
        for row in &rows {
            for &(hi_part, lo_part) in &parts {
                let mut r = row.clone();
                if let Some(h) = hi_part {
                    r.push((2 * f, h));
                }
                if let Some(l) = lo_part {
                    r.push((2 * f + 1, l));
                }
                next.push(r);
            }
        }
        rows = next;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn accepts(parts: &[(Option<Interval>, Option<Interval>)], x: u32, m: u32) -> usize {
        let (h, l) = (x >> m, x & ((1 << m) - 1));
        parts
            .iter()
            .filter(|(ph, pl)| ph.is_none_or(|i| i.contains(h)) && pl.is_none_or(|i| i.contains(l)))
            .count()
    }

    #[test]
    fn less_than_six_example() {
        let parts = expand_interval(Interval::new(0, 5), 2, 2);
        assert_eq!(
            parts,
            vec![
                (Some(Interval::new(0, 0)), None),
                (Some(Interval::new(1, 1)), Some(Interval::new(0, 1))),
            ]
        );
        for x in 0..16 {
            assert_eq!(accepts(&parts, x, 2), usize::from(x < 6));
        }
    }

    #[test]
    fn empty_lsb_row_omitted() {
        // x < 8 with m = 2: kH = 2, kL = 0
        assert_eq!(
            expand_interval(Interval::new(0, 7), 2, 2),
            vec![(Some(Interval::new(0, 1)), None)]
        );
    }

    #[test]
    fn empty_msb_row_omitted() {
        // x < 3: kH = 0, kL = 3
        assert_eq!(
            expand_interval(Interval::new(0, 2), 2, 2),
            vec![(Some(Interval::new(0, 0)), Some(Interval::new(0, 2)))]
        );
    }

    #[test]
    fn all_intervals_partition_exactly() {
        for n in 1..=3 {
            for m in 1..=3 {
                let top = (1u32 << (n + m)) - 1;
                for lo in 0..=top {
                    for hi in lo..=top {
                        let parts = expand_interval(Interval::new(lo, hi), n, m);
                        assert!(parts.len() <= 3);
                        for x in 0..=top {
                            assert_eq!(accepts(&parts, x, m), usize::from(lo <= x && x <= hi));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn zero_width_rejected() {
        let b = BranchPlan::<f64> {
            leaf: 0,
            leaf_order: 0,
            intervals: vec![],
            distribution: crate::forest::ClassDistribution::one_hot(0, 2),
            samples: 0,
        };
        assert!(matches!(expand_precision(&b, 0, 2), Err(Error::Config(_))));
    }

    #[test]
    fn runaway_expansion_rejected() {
        // [1, 14] at 2+2 bits needs three rectangles; 3^8 > 4096.
        let b = BranchPlan::<f64> {
            leaf: 3,
            leaf_order: 0,
            intervals: (0..8).map(|f| (f, Interval::new(1, 14))).collect(),
            distribution: crate::forest::ClassDistribution::one_hot(0, 2),
            samples: 0,
        };
        assert!(matches!(expand_precision(&b, 2, 2), Err(Error::Config(_))));
        let b = BranchPlan::<f64> {
            intervals: (0..7).map(|f| (f, Interval::new(1, 14))).collect(),
            ..b
        };
        assert_eq!(expand_precision(&b, 2, 2).unwrap().len(), 2187);
    }
}
