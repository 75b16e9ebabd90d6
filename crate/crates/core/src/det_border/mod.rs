//! Deterministic implementability of interim allocations: the two-buyer
//! composition criterion `xhat_2(xhat_1(q)) <= q` with its always-sold
//! equality form, the threshold construction, the measure-preserving
//! coloring rearrangement, the randomized-vs-deterministic recurrence, and
//! the three-buyer constant-allocation characterization.

mod coloring;
mod sequence;
mod three;

pub use coloring::{rearrange_coloring, ColorGrid};
pub use sequence::{corollary_sequence, CorollarySequence};
pub use three::{three_buyer_check, three_buyer_construct, ThreeBuyerReport, TripleAllocation};

use crate::error::{Error, Result};
use crate::num::Real;
use crate::reduced_form::{uniform_grid, InterimCurve};
use crate::sim::WinnerRule;

/// Minimum grid slope for "strictly increasing"; flatter inputs are
/// rejected rather than regularized.
pub const MIN_SLOPE: f64 = 1e-6;

pub const CHECK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct TwoBuyerReport<R> {
    pub implementable: bool,
    pub worst_q: R,
    /// Largest violation: `max_q xhat_2(xhat_1(q)) - q`, or the largest
    /// absolute deviation in always-sold mode.
    pub margin: R,
}

fn require_strictly_increasing<R: Real>(curve: &InterimCurve<R>, name: &str) -> Result<()> {
    let min_slope = R::of(MIN_SLOPE);
    for (qs, vs) in curve.grid().windows(2).zip(curve.values().windows(2)) {
        let slope = (vs[1] - vs[0]) / (qs[1] - qs[0]);
        if slope < min_slope {
            return Err(Error::InvalidInput(format!(
                "{name} must be strictly increasing (slope >= {MIN_SLOPE})"
            )));
        }
    }
    Ok(())
}

/// Two-buyer deterministic implementability: `xhat_2(xhat_1(q)) <= q` for
/// all `q`, with equality when the item is always sold.
pub fn check_two_buyer<R: Real>(
    x1: &InterimCurve<R>,
    x2: &InterimCurve<R>,
    always_sold: bool,
) -> Result<TwoBuyerReport<R>> {
    require_strictly_increasing(x1, "x1")?;
    require_strictly_increasing(x2, "x2")?;
    let mut grid: Vec<R> = x1.grid().to_vec();
    grid.extend(uniform_grid::<R>(4096));
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();

    let mut worst_q = R::zero();
    let mut margin = R::neg_infinity();
    for &q in &grid {
        let comp = x2.eval(x1.eval(q)) - q;
        let score = if always_sold { comp.abs() } else { comp };
        if score > margin {
            margin = score;
            worst_q = q;
        }
    }
    Ok(TwoBuyerReport {
        implementable: margin <= R::of(CHECK_TOL),
        worst_q,
        margin,
    })
}

/// The threshold rule built from the two boundary curves: buyer 1 wins
/// below `q2 = xhat_1(q1)`, buyer 2 wins left of `q1 = xhat_2(q2)`.
#[derive(Debug, Clone)]
pub struct TwoBuyerRule<R> {
    x1: InterimCurve<R>,
    x2: InterimCurve<R>,
}

impl<R: Real> TwoBuyerRule<R> {
    pub fn winner(&self, q1: R, q2: R) -> usize {
        if q2 <= self.x1.eval(q1) {
            1
        } else if q1 <= self.x2.eval(q2) {
            2
        } else {
            0
        }
    }
}

impl<R: Real> WinnerRule<R> for TwoBuyerRule<R> {
    fn buyers(&self) -> usize {
        2
    }
    fn winner(&self, q: &[R]) -> usize {
        TwoBuyerRule::winner(self, q[0], q[1])
    }
}

/// Build the ex-post rule; requires the composition condition to hold.
pub fn construct_two_buyer<R: Real>(
    x1: &InterimCurve<R>,
    x2: &InterimCurve<R>,
) -> Result<TwoBuyerRule<R>> {
    let report = check_two_buyer(x1, x2, false)?;
    if !report.implementable {
        return Err(Error::InvalidInput(format!(
            "interim profile is not deterministically implementable \
             (violation {} at q = {})",
            report.margin.as_f64(),
            report.worst_q.as_f64()
        )));
    }
    Ok(TwoBuyerRule {
        x1: x1.clone(),
        x2: x2.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn curve(n: usize, f: impl Fn(f64) -> f64) -> InterimCurve<f64> {
        InterimCurve::from_fn(n, f).unwrap()
    }

    #[test]
    fn identity_curves_always_sold() {
        let c = curve(512, |q| q);
        let rep = check_two_buyer(&c, &c, true).unwrap();
        assert!(rep.implementable);
        assert!(rep.margin <= 1e-9);
    }

    #[test]
    fn squared_curves_implementable_not_always_sold() {
        let c = curve(512, |q| q * q);
        let rep = check_two_buyer(&c, &c, false).unwrap();
        assert!(rep.implementable);
        let sold = check_two_buyer(&c, &c, true).unwrap();
        assert!(!sold.implementable);
    }

    #[test]
    fn sqrt_curves_rejected_with_interior_witness() {
        let c = curve(512, |q| q.sqrt());
        let rep = check_two_buyer(&c, &c, false).unwrap();
        assert!(!rep.implementable);
        assert!(rep.worst_q > 0.0 && rep.worst_q < 1.0);
        // at q = 0.5 the composition is q^{1/4} = 0.8409...
        let comp = c.eval(c.eval(0.5));
        assert_abs_diff_eq!(comp, 0.5f64.powf(0.25), epsilon = 1e-3);
    }

    #[test]
    fn flat_curves_rejected() {
        let c = curve(64, |_| 0.5);
        assert!(check_two_buyer(&c, &c, false).is_err());
    }

    #[test]
    fn monotone_in_the_condition() {
        // pointwise lowering x2 never flips implementable -> not
        let x1 = curve(256, |q| q * q);
        let x2 = curve(256, |q| q * q);
        assert!(check_two_buyer(&x1, &x2, false).unwrap().implementable);
        let lower = curve(256, |q| 0.5 * q * q);
        assert!(check_two_buyer(&x1, &lower, false).unwrap().implementable);
    }

    #[test]
    fn construction_reproduces_identity_interim() {
        let c = curve(128, |q| q);
        let rule = construct_two_buyer(&c, &c).unwrap();
        // diagonal split
        assert_eq!(rule.winner(0.7, 0.3), 1);
        assert_eq!(rule.winner(0.3, 0.7), 2);
        // column measure of buyer 1 at q1 is xhat_1(q1)
        let n = 512;
        for q1 in [0.2, 0.5, 0.9] {
            let mut count = 0usize;
            for j in 0..n {
                let q2 = (j as f64 + 0.5) / n as f64;
                if rule.winner(q1, q2) == 1 {
                    count += 1;
                }
            }
            assert_abs_diff_eq!(count as f64 / n as f64, q1, epsilon = 2.0 / n as f64);
        }
    }

    #[test]
    fn construction_rejects_infeasible() {
        let c = curve(128, |q| q.sqrt());
        assert!(construct_two_buyer(&c, &c).is_err());
    }

    #[test]
    fn inverse_pair_sells_always() {
        // x2 the exact piecewise-linear inverse of x1: composition is q
        let x1 = curve(512, |q| q * q);
        let x2 = InterimCurve::new(x1.values().to_vec(), x1.grid().to_vec()).unwrap();
        let rep = check_two_buyer(&x1, &x2, true).unwrap();
        assert!(rep.margin <= 1e-9, "margin {}", rep.margin);
        let rule = construct_two_buyer(&x1, &x2).unwrap();
        // the no-sale region vanishes like O(1/N) across resolutions
        for n in [128usize, 256, 512] {
            let mut seller_cells = 0usize;
            for i in 0..n {
                for j in 0..n {
                    let q1 = (i as f64 + 0.5) / n as f64;
                    let q2 = (j as f64 + 0.5) / n as f64;
                    if rule.winner(q1, q2) == 0 {
                        seller_cells += 1;
                    }
                }
            }
            assert!(
                (seller_cells as f64) / (n * n) as f64 <= 4.0 / n as f64,
                "resolution {n}: {seller_cells} no-sale cells"
            );
        }
    }
}
