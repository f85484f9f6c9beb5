//! Block masking of the observables-to-latents weight matrices.
//!
//! Each weight matrix is split into four row blocks of equal size: the first
//! quarter may load only on price columns, the second only on category
//! columns, the third only on rating columns, and the last quarter loads on
//! nothing (those latents keep an independent prior). Masked entries are
//! structural zeros — they carry no parameters and no gradients.

use ndarray::Array2;

use super::observables::ObsLayout;
use crate::{Error, Result};

/// 0/1 mask of shape k × k_obs following the quarter rule.
pub fn block_mask(k: usize, layout: &ObsLayout) -> Result<Array2<f64>> {
    if k % 4 != 0 {
        return Err(Error::invalid(format!("mask rows {k} not divisible by 4")));
    }
    let mut m = Array2::<f64>::zeros((k, layout.n_cols()));
    let q = k / 4;
    for r in 0..k {
        let span = match r / q.max(1) {
            0 => layout.price.clone(),
            1 => layout.category.clone(),
            2 => layout.rating.clone(),
            _ => 0..0,
        };
        for c in span {
            m[(r, c)] = 1.0;
        }
    }
    Ok(m)
}

/// The unmasked (row, col) positions in row-major order — the entries that
/// actually exist as parameters.
pub fn free_entries(k: usize, layout: &ObsLayout) -> Result<Vec<(usize, usize)>> {
    let mask = block_mask(k, layout)?;
    let mut out = Vec::new();
    for r in 0..k {
        for c in 0..layout.n_cols() {
            if mask[(r, c)] == 1.0 {
                out.push((r, c));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout_price_cat_rating(p: usize, c: usize, r: usize) -> ObsLayout {
        // A layout with price columns first, matching the hand-constructed
        // expectations below. Spans are what matter; order is arbitrary.
        ObsLayout {
            price: 0..p,
            category: p..p + c,
            rating: p + c..p + c + r,
            categories: (0..c).map(|i| format!("c{i}")).collect(),
        }
    }

    #[test]
    fn quarter_rule_rows_match_hand_construction() {
        let layout = layout_price_cat_rating(1, 2, 3);
        let m = block_mask(4, &layout).unwrap();
        let rows: Vec<Vec<f64>> = (0..4).map(|r| m.row(r).to_vec()).collect();
        assert_eq!(rows[0], vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(rows[1], vec![0.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(rows[2], vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(rows[3], vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn last_quarter_rows_are_all_zero() {
        let layout = layout_price_cat_rating(2, 3, 4);
        let m = block_mask(8, &layout).unwrap();
        for r in 6..8 {
            assert_eq!(m.row(r).sum(), 0.0);
        }
    }

    #[test]
    fn each_column_feeds_at_most_one_row_block() {
        let layout = layout_price_cat_rating(2, 3, 4);
        let m = block_mask(8, &layout).unwrap();
        let q = 2;
        for c in 0..layout.n_cols() {
            let mut blocks = std::collections::BTreeSet::new();
            for r in 0..8 {
                if m[(r, c)] == 1.0 {
                    blocks.insert(r / q);
                }
            }
            assert!(blocks.len() <= 1, "column {c} feeds blocks {blocks:?}");
        }
    }

    #[test]
    fn rejects_k_not_divisible_by_four() {
        let layout = layout_price_cat_rating(1, 1, 1);
        assert!(block_mask(6, &layout).is_err());
    }

    #[test]
    fn free_entries_enumerate_unmasked_cells_in_row_major_order() {
        let layout = layout_price_cat_rating(1, 2, 3);
        let free = free_entries(4, &layout).unwrap();
        assert_eq!(free, vec![(0, 0), (1, 1), (1, 2), (2, 3), (2, 4), (2, 5)]);
    }
}
