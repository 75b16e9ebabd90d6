//! Discrete three-colorings of the quantile square and the
//! measure-preserving rearrangement that turns an ex-post monotone rule
//! into threshold form without changing either buyer's interim allocation.

use crate::error::{Error, Result};
use crate::num::Real;

/// N x N cells over [0,1]^2. Color 0 = seller, 1 = buyer 1, 2 = buyer 2.
/// Cell `(i1, i2)` covers `[i1/N, (i1+1)/N) x [i2/N, (i2+1)/N)`; the first
/// index is buyer 1's coordinate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorGrid {
    n: usize,
    cells: Vec<u8>,
}

impl ColorGrid {
    pub fn new(n: usize, cells: Vec<u8>) -> Result<Self> {
        if n == 0 || cells.len() != n * n {
            return Err(Error::InvalidInput(
                "color grid must be N x N with N >= 1".into(),
            ));
        }
        if cells.iter().any(|&c| c > 2) {
            return Err(Error::InvalidInput("colors must be 0, 1 or 2".into()));
        }
        Ok(ColorGrid { n, cells })
    }

    /// Sample an ex-post rule at cell centers.
    pub fn from_rule<R: Real>(n: usize, rule: impl Fn(R, R) -> usize) -> Result<Self> {
        let mut cells = vec![0u8; n * n];
        for i1 in 0..n {
            for i2 in 0..n {
                let q1 = R::of((i1 as f64 + 0.5) / n as f64);
                let q2 = R::of((i2 as f64 + 0.5) / n as f64);
                cells[i1 * n + i2] = rule(q1, q2) as u8;
            }
        }
        ColorGrid::new(n, cells)
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn color(&self, i1: usize, i2: usize) -> u8 {
        self.cells[i1 * self.n + i2]
    }

    /// Buyer-1 cells in column `i1` (fixed own coordinate).
    pub fn column_count(&self, i1: usize, color: u8) -> usize {
        (0..self.n)
            .filter(|&i2| self.color(i1, i2) == color)
            .count()
    }

    /// Buyer-2 cells in row `i2`.
    pub fn row_count(&self, i2: usize, color: u8) -> usize {
        (0..self.n)
            .filter(|&i1| self.color(i1, i2) == color)
            .count()
    }

    /// Fraction of the square holding `color`.
    pub fn measure(&self, color: u8) -> f64 {
        let cnt = self.cells.iter().filter(|&&c| c == color).count();
        cnt as f64 / (self.n * self.n) as f64
    }

    /// Ex-post monotonicity of the sampled rule: buyer 1's cells form a
    /// suffix along own coordinate in every row, buyer 2's in every column.
    fn check_monotone(&self) -> Result<()> {
        let n = self.n;
        for i2 in 0..n {
            let mut seen = false;
            for i1 in 0..n {
                let is1 = self.color(i1, i2) == 1;
                if seen && !is1 {
                    return Err(Error::InvalidInput(
                        "buyer 1's winning set is not an up-set in q1".into(),
                    ));
                }
                seen = is1;
            }
        }
        for i1 in 0..n {
            let mut seen = false;
            for i2 in 0..n {
                let is2 = self.color(i1, i2) == 2;
                if seen && !is2 {
                    return Err(Error::InvalidInput(
                        "buyer 2's winning set is not an up-set in q2".into(),
                    ));
                }
                seen = is2;
            }
        }
        Ok(())
    }
}

/// Rearrange a monotone coloring into threshold form: per column, buyer-1
/// cells drop to the bottom; then per row, buyer-2 cells shift to the left.
/// Per-buyer line counts are preserved exactly (the monotonicity
/// precondition rules out collisions).
pub fn rearrange_coloring(grid: &ColorGrid) -> Result<ColorGrid> {
    grid.check_monotone()?;
    let n = grid.n;
    let mut out = grid.clone();

    // move buyer 1 down within each column
    for i1 in 0..n {
        let cnt = grid.column_count(i1, 1);
        for i2 in 0..n {
            let cur = out.cells[i1 * n + i2];
            if i2 < cnt {
                debug_assert_ne!(cur, 2, "collision against buyer 2");
                out.cells[i1 * n + i2] = 1;
            } else if cur == 1 {
                out.cells[i1 * n + i2] = 0;
            }
        }
    }
    // move buyer 2 left within each row
    for i2 in 0..n {
        let cnt = (0..n).filter(|&i1| out.color(i1, i2) == 2).count();
        for i1 in 0..n {
            let cur = out.cells[i1 * n + i2];
            if i1 < cnt {
                debug_assert_ne!(cur, 1, "collision against buyer 1");
                out.cells[i1 * n + i2] = 2;
            } else if cur == 2 {
                out.cells[i1 * n + i2] = 0;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diagonal(n: usize) -> ColorGrid {
        // second-price split, ties to buyer 1
        ColorGrid::from_rule::<f64>(n, |q1, q2| if q1 >= q2 { 1 } else { 2 }).unwrap()
    }

    #[test]
    fn threshold_grid_is_fixed_point() {
        let g = ColorGrid::from_rule::<f64>(64, |q1, q2| {
            if q2 <= q1 * q1 {
                1
            } else if q1 <= q2 * q2 {
                2
            } else {
                0
            }
        })
        .unwrap();
        let r = rearrange_coloring(&g).unwrap();
        assert_eq!(g, r);
    }

    #[test]
    fn diagonal_grid_unchanged() {
        let g = diagonal(128);
        let r = rearrange_coloring(&g).unwrap();
        assert_eq!(g, r);
    }

    #[test]
    fn randomized_order_rule_counts_preserved() {
        // buyer 1 wins iff q1 > 0.5, else buyer 2 wins iff q2 > 0.5
        let g = ColorGrid::from_rule::<f64>(64, |q1, q2| {
            if q1 > 0.5 {
                1
            } else if q2 > 0.5 {
                2
            } else {
                0
            }
        })
        .unwrap();
        let r = rearrange_coloring(&g).unwrap();
        for i1 in 0..64 {
            assert_eq!(g.column_count(i1, 1), r.column_count(i1, 1), "column {i1}");
        }
        for i2 in 0..64 {
            assert_eq!(g.row_count(i2, 2), r.row_count(i2, 2), "row {i2}");
        }
        // output is in threshold form: buyer 1 fills column bottoms
        for i1 in 0..64 {
            let cnt = r.column_count(i1, 1);
            for i2 in 0..cnt {
                assert_eq!(r.color(i1, i2), 1);
            }
        }
    }

    #[test]
    fn non_monotone_input_rejected() {
        // buyer 1 wins at low q1 and loses at high q1
        let g = ColorGrid::from_rule::<f64>(16, |q1, _| if q1 < 0.5 { 1 } else { 0 }).unwrap();
        assert!(rearrange_coloring(&g).is_err());
    }
}
