//! Three buyers with constant interim allocations: implementability holds
//! iff `1 - c1 - c2 - c3 >= 2 sqrt(c1 c2 c3)`, witnessed by a cyclic
//! two-threshold rule.

use crate::error::{Error, Result};
use crate::num::Real;
use crate::sim::WinnerRule;

pub const SLACK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ThreeBuyerReport<R> {
    pub implementable: bool,
    /// `(1 - c1 - c2 - c3) - 2 sqrt(c1 c2 c3)`.
    pub slack: R,
}

pub fn three_buyer_check<R: Real>(c: [R; 3]) -> Result<ThreeBuyerReport<R>> {
    for ci in c {
        if ci < R::zero() || ci > R::one() {
            return Err(Error::Domain("constants must lie in [0, 1]".into()));
        }
    }
    let sum = c[0] + c[1] + c[2];
    let slack = (R::one() - sum) - R::of(2.0) * (c[0] * c[1] * c[2]).sqrt();
    Ok(ThreeBuyerReport {
        implementable: slack >= -R::of(SLACK_TOL),
        slack,
    })
}

/// The constructed thresholds and the ex-post rule: buyer 1 wins iff
/// `v2 <= y1` and `v3 > y2`; buyer 2 iff `v3 <= y2` and `v1 > y3`; buyer 3
/// iff `v1 <= y3` and `v2 > y1` (values read as uniform quantiles). The
/// three win conditions are pairwise exclusive for any thresholds.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct TripleAllocation<R> {
    pub c: [R; 3],
    pub y: [R; 3],
    pub delta: R,
    /// Analytic interim allocations `y1(1-y2), y2(1-y3), y3(1-y1)`; each is
    /// at least its target `c_i`.
    pub achieved: [R; 3],
}

pub fn three_buyer_construct<R: Real>(c: [R; 3]) -> Result<TripleAllocation<R>> {
    let report = three_buyer_check(c)?;
    if !report.implementable {
        return Err(Error::InvalidInput(format!(
            "constants fail the implementability condition (slack {})",
            report.slack.as_f64()
        )));
    }
    let [c1, c2, c3] = c;
    let delta = {
        let s = c1 + c2 + c3 - R::one();
        s * s - R::of(4.0) * c1 * c2 * c3
    };
    let sqrt_delta = delta.max(R::zero()).sqrt();
    let one = R::one();
    let two = R::of(2.0);
    // degenerate denominators (c_next = 1) force the remaining threshold to
    // its upper endpoint
    let y_of = |num: R, den: R| if den <= R::of(1e-15) { one } else { num / den };
    let y1 = y_of(one + c1 - c2 - c3 + sqrt_delta, two * (one - c2));
    let y2 = y_of(one + c2 - c1 - c3 + sqrt_delta, two * (one - c3));
    let y3 = y_of(one + c3 - c1 - c2 + sqrt_delta, two * (one - c1));
    let y = [y1, y2, y3];
    for yi in y {
        if yi < -R::of(SLACK_TOL) || yi > one + R::of(SLACK_TOL) {
            return Err(Error::Internal(format!(
                "constructed threshold {} escaped [0, 1]",
                yi.as_f64()
            )));
        }
    }
    let achieved = [y1 * (one - y2), y2 * (one - y3), y3 * (one - y1)];
    Ok(TripleAllocation {
        c,
        y,
        delta,
        achieved,
    })
}

impl<R: Real> TripleAllocation<R> {
    pub fn winner(&self, v: &[R]) -> usize {
        let [y1, y2, y3] = self.y;
        if v[1] <= y1 && v[2] > y2 {
            1
        } else if v[2] <= y2 && v[0] > y3 {
            2
        } else if v[0] <= y3 && v[1] > y1 {
            3
        } else {
            0
        }
    }
}

impl<R: Real> WinnerRule<R> for TripleAllocation<R> {
    fn buyers(&self) -> usize {
        3
    }
    fn winner(&self, q: &[R]) -> usize {
        TripleAllocation::winner(self, q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn check_examples() {
        let rep = three_buyer_check([0.0, 0.0, 0.0]).unwrap();
        assert!(rep.implementable);
        assert_abs_diff_eq!(rep.slack, 1.0, epsilon = 1e-15);

        let rep = three_buyer_check([0.2, 0.2, 0.2]).unwrap();
        assert!(rep.implementable);
        assert_abs_diff_eq!(rep.slack, 0.4 - 2.0 * 0.008f64.sqrt(), epsilon = 1e-12);

        let third = 1.0 / 3.0;
        let rep = three_buyer_check([third, third, third]).unwrap();
        assert!(!rep.implementable);
        assert_abs_diff_eq!(rep.slack, -2.0 * (1.0f64 / 27.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn symmetric_point_two_construction() {
        let t = three_buyer_construct([0.2, 0.2, 0.2]).unwrap();
        assert_abs_diff_eq!(t.delta, 0.128, epsilon = 1e-12);
        let y = (0.8 + 0.128f64.sqrt()) / 1.6;
        for yi in t.y {
            assert_abs_diff_eq!(yi, y, epsilon = 1e-12);
        }
        for a in t.achieved {
            assert_abs_diff_eq!(a, 0.2, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_constants_construction() {
        let t = three_buyer_construct([0.0, 0.0, 0.0]).unwrap();
        assert_eq!(t.y, [1.0, 1.0, 1.0]);
        // nobody's win condition fires with positive measure
        assert_eq!(t.winner(&[0.3, 0.9, 0.99]), 0);
        for a in t.achieved {
            assert_abs_diff_eq!(a, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn dictator_half_construction() {
        let t = three_buyer_construct([0.5, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(t.delta, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(t.y[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.y[1], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(t.y[2], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.achieved[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(t.achieved[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.achieved[2], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_infeasible_constants() {
        let third = 1.0 / 3.0;
        assert!(three_buyer_construct([third, third, third]).is_err());
    }

    #[test]
    fn win_conditions_pairwise_exclusive_and_cover_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut tried = 0;
        while tried < 50 {
            let c = [
                rng.gen::<f64>() * 0.4,
                rng.gen::<f64>() * 0.4,
                rng.gen::<f64>() * 0.4,
            ];
            let Ok(rep) = three_buyer_check(c) else {
                continue;
            };
            if !rep.implementable {
                continue;
            }
            tried += 1;
            let t = three_buyer_construct(c).unwrap();
            for _ in 0..200 {
                let v = [rng.gen::<f64>(), rng.gen(), rng.gen()];
                let fires = [
                    v[1] <= t.y[0] && v[2] > t.y[1],
                    v[2] <= t.y[1] && v[0] > t.y[2],
                    v[0] <= t.y[2] && v[1] > t.y[0],
                ];
                let count = fires.iter().filter(|&&f| f).count();
                assert!(count <= 1, "win regions overlap at {v:?}");
            }
            for i in 0..3 {
                assert!(
                    t.achieved[i] >= c[i] - 1e-9,
                    "achieved {} below target {}",
                    t.achieved[i],
                    c[i]
                );
            }
        }
    }
}
