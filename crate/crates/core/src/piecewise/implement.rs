//! Deterministic DSIC implementations of piecewise auctions.
//!
//! The ex-post rules reproduce the piecewise auction's *total* interim
//! allocation `n * xhat(q)` exactly (per-buyer allocations differ by index,
//! the sum matches), which by the sum-equality principle preserves revenue
//! and welfare. Both rules are threshold-form in each buyer's own quantile.

use super::{Family, PiecewiseAuction};
use crate::error::{Error, Result};
use crate::num::Real;
use crate::sim::WinnerRule;

/// A piecewise auction together with the tie-breaking level `lambda` that
/// makes the middle-segment total come out to `n * k`.
#[derive(Debug, Clone, Copy)]
pub struct DeterministicImplementation<R> {
    pub pa: PiecewiseAuction<R>,
    pub lambda: R,
    high_k: bool,
}

const LAMBDA_SLOP: f64 = 1e-9;

/// Build the ex-post rule for a valid piecewise auction with `n >= 2`.
///
/// Family 1 solves `lambda` in closed form from the sum-matching equation:
/// with `nk >= r2^{n-1}`, `lambda = (nk - r2^{n-1}) / sum_{i=2}^n r1^{i-1}
/// r2^{n-i}`; otherwise `lambda = nk / r2^{n-1}`. Family 2 needs none.
pub fn deterministic_implement<R: Real>(
    pa: &PiecewiseAuction<R>,
) -> Result<DeterministicImplementation<R>> {
    pa.validate()?;
    if pa.n < 2 {
        return Err(Error::InvalidInput(
            "deterministic implementation needs at least two buyers".into(),
        ));
    }
    let (lambda, high_k) = match pa.family {
        Family::Two => (R::zero(), false),
        Family::One { k } => {
            let n = R::of_usize(pa.n);
            let tail_at_r2 = pa.r2.powi(pa.n as i32 - 1);
            let target = n * k;
            if target >= tail_at_r2 {
                let mut denom = R::zero();
                for i in 2..=pa.n {
                    denom = denom + pa.r1.powi(i as i32 - 1) * pa.r2.powi((pa.n - i) as i32);
                }
                if denom == R::zero() {
                    if (target - tail_at_r2).abs() > R::of(LAMBDA_SLOP) {
                        return Err(Error::Internal(
                            "sum-matching equation unsolvable: r1 = 0 with nk > r2^{n-1}".into(),
                        ));
                    }
                    (R::zero(), true)
                } else {
                    ((target - tail_at_r2) / denom, true)
                }
            } else {
                (target / tail_at_r2, false)
            }
        }
    };
    let slop = R::of(LAMBDA_SLOP);
    if lambda < -slop || lambda > R::one() + slop {
        return Err(Error::Internal(format!(
            "lambda = {} escaped [0, 1]; parameter validation is broken",
            lambda.as_f64()
        )));
    }
    Ok(DeterministicImplementation {
        pa: *pa,
        lambda: lambda.max(R::zero()).min(R::one()),
        high_k,
    })
}

impl<R: Real> DeterministicImplementation<R> {
    /// Ex-post winner at a quantile profile; 0 keeps the item.
    pub fn winner(&self, q: &[R]) -> usize {
        debug_assert_eq!(q.len(), self.pa.n);
        let r1 = self.pa.r1;
        let r2 = self.pa.r2;
        match self.pa.family {
            Family::Two => {
                // above the tail cutoff the *lowest index* wins
                if let Some(j) = q.iter().position(|&x| x > r2) {
                    return j + 1;
                }
                // in the band the highest quantile wins, ties to low index
                let mut best: Option<(usize, R)> = None;
                for (j, &x) in q.iter().enumerate() {
                    if x >= r1 && x <= r2 && best.is_none_or(|(_, bx)| x > bx) {
                        best = Some((j, x));
                    }
                }
                best.map_or(0, |(j, _)| j + 1)
            }
            Family::One { .. } => {
                // above r2 the highest quantile wins, ties to low index
                let mut best: Option<(usize, R)> = None;
                for (j, &x) in q.iter().enumerate() {
                    if x > r2 && best.is_none_or(|(_, bx)| x > bx) {
                        best = Some((j, x));
                    }
                }
                if let Some((j, _)) = best {
                    return j + 1;
                }
                let in_band = |x: R| x >= r1 && x <= r2;
                let any_band = q.iter().any(|&x| in_band(x));
                if !any_band {
                    return 0;
                }
                if self.high_k {
                    if in_band(q[0]) {
                        1
                    } else {
                        // q[0] < r1 here; the lambda sub-rule rations the
                        // lowest band member
                        let j = q.iter().position(|&x| in_band(x)).expect("band nonempty");
                        if q[0] <= self.lambda * r1 {
                            j + 1
                        } else {
                            0
                        }
                    }
                } else {
                    if in_band(q[0]) && q[1] <= self.lambda * r2 {
                        1
                    } else {
                        0
                    }
                }
            }
        }
    }

    /// Closed-form interim allocation of one (0-based) buyer, using the same
    /// left-closed segment convention as [`PiecewiseAuction::x_hat`].
    pub fn analytic_interim(&self, buyer: usize, q: R) -> R {
        let pa = &self.pa;
        let nm1 = pa.n as i32 - 1;
        if q <= pa.r1 {
            return R::zero();
        }
        match pa.family {
            Family::Two => {
                if q <= pa.r2 {
                    q.powi(nm1)
                } else {
                    pa.r2.powi(buyer as i32)
                }
            }
            Family::One { .. } => {
                if q > pa.r2 {
                    q.powi(nm1)
                } else if self.high_k {
                    if buyer == 0 {
                        pa.r2.powi(nm1)
                    } else {
                        self.lambda
                            * pa.r1.powi(buyer as i32)
                            * pa.r2.powi((pa.n - 1 - buyer) as i32)
                    }
                } else if buyer == 0 {
                    self.lambda * pa.r2.powi(nm1)
                } else {
                    R::zero()
                }
            }
        }
    }

    /// Total analytic interim allocation, which must equal `n * xhat(q)`.
    pub fn analytic_total(&self, q: R) -> R {
        (0..self.pa.n).fold(R::zero(), |acc, i| acc + self.analytic_interim(i, q))
    }
}

impl<R: Real> WinnerRule<R> for DeterministicImplementation<R> {
    fn buyers(&self) -> usize {
        self.pa.n
    }
    fn winner(&self, q: &[R]) -> usize {
        DeterministicImplementation::winner(self, q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn family2_tail_sum_telescopes() {
        // total interim on the tail is sum r2^{i-1} = n * kappa(r2)
        for (n, r2) in [(2usize, 0.6), (3, 0.4), (5, 0.9)] {
            let pa = PiecewiseAuction::family2(n, 0.1, r2).unwrap();
            let imp = deterministic_implement(&pa).unwrap();
            let q = 0.5 * (r2 + 1.0);
            let total = imp.analytic_total(q);
            assert_abs_diff_eq!(total, n as f64 * pa.kappa(), epsilon = 1e-12);
        }
    }

    #[test]
    fn family1_lambda_solves_sum_matching() {
        // r2^{n-1}/n = 0.3 > k = 0.2, so lambda = 2k/r2 = 2/3 and the
        // middle-band total is n*k
        let pa = PiecewiseAuction::family1(2, 0.2, 0.6, 0.2).unwrap();
        let imp = deterministic_implement(&pa).unwrap();
        assert!(!imp.high_k);
        assert_abs_diff_eq!(imp.lambda, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(imp.analytic_total(0.4), 0.4, epsilon = 1e-12);
    }

    #[test]
    fn family1_zero_level_keeps_middle_band() {
        let pa = PiecewiseAuction::family1(2, 0.3, 0.7, 0.0).unwrap();
        let imp = deterministic_implement(&pa).unwrap();
        assert_eq!(imp.lambda, 0.0);
        assert_eq!(imp.winner(&[0.5, 0.4]), 0);
        assert_eq!(imp.winner(&[0.8, 0.4]), 1);
    }

    #[test]
    fn totals_match_scaled_x_hat_on_grid() {
        let cases = [
            PiecewiseAuction::family1(2, 0.2, 0.6, 0.2).unwrap(),
            PiecewiseAuction::family1(3, 0.3, 0.8, 0.3).unwrap(), // high-k case
            PiecewiseAuction::family1(3, 0.2, 0.9, 0.05).unwrap(),
            PiecewiseAuction::family2(2, 0.25, 0.5).unwrap(),
            PiecewiseAuction::family2(3, 0.0, 1.0).unwrap(),
        ];
        for pa in cases {
            let imp = deterministic_implement(&pa).unwrap();
            for j in 0..=256 {
                let q = j as f64 / 256.0;
                let total = imp.analytic_total(q);
                let want = pa.n as f64 * pa.x_hat(q);
                assert!(
                    (total - want).abs() <= 1e-9,
                    "{pa:?} at q={q}: {total} vs {want}"
                );
            }
        }
    }

    #[test]
    fn rules_are_expost_monotone_in_own_quantile() {
        let cases = [
            PiecewiseAuction::family1(2, 0.2, 0.6, 0.2).unwrap(),
            PiecewiseAuction::family1(3, 0.3, 0.8, 0.3).unwrap(),
            PiecewiseAuction::family2(3, 0.25, 0.5).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for pa in cases {
            let imp = deterministic_implement(&pa).unwrap();
            for _ in 0..200 {
                let mut q: Vec<f64> = (0..pa.n).map(|_| rng.gen()).collect();
                for i in 0..pa.n {
                    let mut seen = false;
                    for step in 0..=100 {
                        q[i] = step as f64 / 100.0;
                        let wins = imp.winner(&q) == i + 1;
                        assert!(!(seen && !wins), "{pa:?}: buyer {i} lost after winning");
                        seen = wins;
                    }
                }
            }
        }
    }

    #[test]
    fn single_winner_always() {
        let pa = PiecewiseAuction::family1(3, 0.1, 0.5, 0.08).unwrap();
        let imp = deterministic_implement(&pa).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10_000 {
            let q: Vec<f64> = (0..3).map(|_| rng.gen()).collect();
            let w = imp.winner(&q);
            assert!(w <= 3);
        }
    }
}
