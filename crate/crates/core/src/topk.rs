//! Top-T selection shared by every sparsification step.
//!
//! Entries are ranked by value, largest first. Equal values rank by lower
//! index. Only entries flagged `eligible` compete; the rest are never kept.

use crate::error::{Error, Result};

/// Mask of the `t` highest-ranked eligible entries.
pub fn top_t_mask(values: &[f64], eligible: &[bool], t: usize) -> Vec<bool> {
    debug_assert_eq!(values.len(), eligible.len());
    let mut order: Vec<usize> = (0..values.len()).filter(|&i| eligible[i]).collect();
    // Stable sort keeps ascending index order among equal values.
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut mask = vec![false; values.len()];
    for &i in order.iter().take(t) {
        mask[i] = true;
    }
    mask
}

/// Zeroes every entry outside the top `t`, leaving survivors untouched.
/// Repeating it is a no-op only for non-negative input; signed values need
/// a support mask (see [`crate::affinity::AffinityMatrix::sparsify`]).
pub fn sparsify_dense(values: &[f64], t: usize) -> Vec<f64> {
    let mask = top_t_mask(values, &vec![true; values.len()], t);
    values
        .iter()
        .zip(&mask)
        .map(|(&v, &keep)| if keep { v } else { 0.0 })
        .collect()
}

pub(crate) fn check_t(t: usize, max: usize, context: &str) -> Result<()> {
    if t == 0 || t > max {
        return Err(Error::TopOutOfRange {
            t,
            max,
            context: context.to_string(),
        });
    }
    Ok(())
}
