//! Piecewise auctions: symmetric BIC auctions whose cumulative tail
//! `P(q) = int_q^1 xhat` follows one of two three-segment forms. They are
//! the extreme points of the fixed-welfare revenue problem and each admits
//! a deterministic DSIC implementation with the same total interim
//! allocation.

mod fit;
mod implement;
mod objective2;
mod transfer;

pub use fit::{fit_piecewise, FitResult};
pub use implement::{deterministic_implement, DeterministicImplementation};
pub use objective2::{
    discrete_revenue, objective2_solve, pair_region, Objective2Solution, PairBand, PairRegion,
    DEFAULT_GRID_N,
};
pub use transfer::{canonical_reserve, piecewise_welfare, transfer_path, TransferPath};

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::num::Real;
use crate::priors::QuantileModel;
use crate::reduced_form::{rev_wel_from_curve, uniform_grid, InterimCurve, RevWel, QUAD_GRID};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family<R> {
    /// `xhat = (0, k, q^{n-1})` on the three segments.
    One { k: R },
    /// `xhat = (0, q^{n-1}, kappa(r2))` with the constant tail
    /// `kappa(r2) = (1 - r2^n)/(n (1 - r2))`.
    Two,
}

/// A piecewise auction with breakpoints `0 <= r1 < r2 <= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiecewiseAuction<R> {
    pub family: Family<R>,
    pub r1: R,
    pub r2: R,
    pub n: usize,
}

const PARAM_TOL: f64 = 1e-12;

impl<R: Real> PiecewiseAuction<R> {
    pub fn family1(n: usize, r1: R, r2: R, k: R) -> Result<Self> {
        let pa = PiecewiseAuction {
            family: Family::One { k },
            r1,
            r2,
            n,
        };
        pa.validate()?;
        Ok(pa)
    }

    pub fn family2(n: usize, r1: R, r2: R) -> Result<Self> {
        let pa = PiecewiseAuction {
            family: Family::Two,
            r1,
            r2,
            n,
        };
        pa.validate()?;
        Ok(pa)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidInput("buyer count must be positive".into()));
        }
        let tol = R::of(PARAM_TOL);
        if self.r1 < -tol || self.r2 > R::one() + tol || self.r1 >= self.r2 {
            return Err(Error::InvalidInput(
                "breakpoints must satisfy 0 <= r1 < r2 <= 1".into(),
            ));
        }
        if let Family::One { k } = self.family {
            let kmax = self.k_max();
            if k < -tol || k > kmax + tol {
                return Err(Error::InvalidInput(format!(
                    "allocation level k = {} outside [0, {}]",
                    k.as_f64(),
                    kmax.as_f64()
                )));
            }
        }
        Ok(())
    }

    /// Constant tail level of family 2; the `r2 = 1` limit is 1.
    /// Computed as the average of `1, r2, ..., r2^{n-1}`.
    pub fn kappa(&self) -> R {
        mean_power_sum(self.r2, self.n)
    }

    /// Upper bound for family 1's middle level:
    /// `(r2^n - r1^n)/(n (r2 - r1))`, the average of `q^{n-1}` over
    /// `[r1, r2]`, computed as `mean_i r1^i r2^{n-1-i}`.
    pub fn k_max(&self) -> R {
        let mut sum = R::zero();
        for i in 0..self.n {
            sum = sum + self.r1.powi(i as i32) * self.r2.powi((self.n - 1 - i) as i32);
        }
        sum / R::of_usize(self.n)
    }

    /// The symmetric interim allocation at `q` (left-closed segments).
    pub fn x_hat(&self, q: R) -> R {
        if q <= self.r1 {
            return R::zero();
        }
        match self.family {
            Family::One { k } => {
                if q <= self.r2 {
                    k
                } else {
                    q.powi(self.n as i32 - 1)
                }
            }
            Family::Two => {
                if q <= self.r2 {
                    q.powi(self.n as i32 - 1)
                } else {
                    self.kappa()
                }
            }
        }
    }

    /// Closed-form cumulative tail `P(q) = int_q^1 xhat`.
    pub fn p_of(&self, q: R) -> R {
        let n = R::of_usize(self.n);
        let bound = |x: R| (R::one() - x.powi(self.n as i32)) / n;
        match self.family {
            Family::One { k } => {
                if q > self.r2 {
                    bound(q)
                } else if q > self.r1 {
                    bound(self.r2) + k * (self.r2 - q)
                } else {
                    bound(self.r2) + k * (self.r2 - self.r1)
                }
            }
            Family::Two => {
                if q > self.r2 {
                    self.kappa() * (R::one() - q)
                } else if q > self.r1 {
                    bound(q)
                } else {
                    bound(self.r1)
                }
            }
        }
    }

    /// Sample the interim allocation onto a curve. Breakpoints enter the
    /// grid twice (knot and its upward nudge) so jumps survive the
    /// piecewise-linear representation with negligible integral error.
    pub fn interim_curve(&self, grid_intervals: usize) -> InterimCurve<R> {
        let mut grid: Vec<R> = uniform_grid(grid_intervals);
        for b in [self.r1, self.r2] {
            if b > R::zero() && b < R::one() {
                grid.push(b);
            }
            if b < R::one() {
                grid.push(nudge_up(b));
            }
        }
        grid.retain(|&q| q >= R::zero() && q <= R::one());
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        grid.dedup();
        let values: Vec<R> = grid.iter().map(|&q| self.x_hat(q)).collect();
        InterimCurve::new(grid, values).expect("piecewise interim is a valid curve")
    }

    /// (revenue, welfare) under the model: `n` identical curves through the
    /// quantile-space functionals.
    pub fn rev_wel(&self, model: &QuantileModel<R>) -> Result<RevWel<R>> {
        let curve = self.interim_curve(QUAD_GRID);
        let curves = vec![curve; self.n];
        rev_wel_from_curve(model, &curves)
    }

    pub fn to_json_value(&self) -> Value {
        match self.family {
            Family::One { k } => json!({
                "family": 1,
                "n": self.n,
                "r1": self.r1.as_f64(),
                "r2": self.r2.as_f64(),
                "k": k.as_f64(),
            }),
            Family::Two => json!({
                "family": 2,
                "n": self.n,
                "r1": self.r1.as_f64(),
                "r2": self.r2.as_f64(),
            }),
        }
    }

    pub fn from_json_value(v: &Value) -> Result<Self> {
        let family = v
            .get("family")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Config("missing integer field `family`".into()))?;
        let n = v
            .get("n")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Config("missing integer field `n`".into()))?
            as usize;
        let num = |name: &str| -> Result<R> {
            v.get(name)
                .and_then(Value::as_f64)
                .map(R::of)
                .ok_or_else(|| Error::Config(format!("missing numeric field `{name}`")))
        };
        let r1 = num("r1")?;
        let r2 = num("r2")?;
        match family {
            1 => PiecewiseAuction::family1(n, r1, r2, num("k")?),
            2 => PiecewiseAuction::family2(n, r1, r2),
            other => Err(Error::Config(format!("unknown family {other}"))),
        }
    }
}

fn mean_power_sum<R: Real>(r: R, n: usize) -> R {
    let mut sum = R::zero();
    for i in 0..n {
        sum = sum + r.powi(i as i32);
    }
    sum / R::of_usize(n)
}

/// Smallest representable increase; keeps duplicated jump knots strictly
/// ordered.
pub fn nudge_up<R: Real>(x: R) -> R {
    let bump = (x.abs() * R::of(f64::EPSILON)).max(R::of(1e-300));
    x + bump
}

/// Welfare of the reserve-type auction `xhat(q) = 1{q > rho} q^{n-1}`,
/// evaluated with the same quadrature as every other piecewise welfare.
pub fn reserve_welfare<R: Real>(model: &QuantileModel<R>, n: usize, rho: R) -> Result<R> {
    if rho >= R::one() {
        return Ok(R::zero());
    }
    let pa = if rho <= R::zero() {
        PiecewiseAuction::family2(n, R::zero(), R::one())?
    } else {
        PiecewiseAuction::family2(n, rho, R::one())?
    };
    Ok(pa.rev_wel(model)?.wel)
}

/// Welfare of the efficient (highest quantile wins) auction.
pub fn efficient_welfare<R: Real>(model: &QuantileModel<R>, n: usize) -> Result<R> {
    reserve_welfare(model, n, R::zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduced_form::border_check_symmetric;
    use approx::assert_abs_diff_eq;

    #[test]
    fn family2_efficient_is_identity() {
        let pa = PiecewiseAuction::family2(2, 0.0, 1.0).unwrap();
        for q in [0.1, 0.4, 0.99] {
            assert_abs_diff_eq!(pa.x_hat(q), q, epsilon = 1e-12);
        }
        let rw = pa.rev_wel(&QuantileModel::Uniform).unwrap();
        assert_abs_diff_eq!(rw.wel, 2.0 / 3.0, epsilon = 1e-6);
        assert_abs_diff_eq!(rw.rev, 1.0 / 3.0, epsilon = 1e-6);
    }

    #[test]
    fn family1_segments_and_k_cap() {
        let pa = PiecewiseAuction::family1(2, 0.2, 0.6, 0.2).unwrap();
        assert_abs_diff_eq!(pa.k_max(), 0.4, epsilon = 1e-12);
        assert_eq!(pa.x_hat(0.1), 0.0);
        assert_eq!(pa.x_hat(0.2), 0.0);
        assert_abs_diff_eq!(pa.x_hat(0.4), 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(pa.x_hat(0.8), 0.8, epsilon = 1e-15);
        assert!(PiecewiseAuction::family1(2, 0.2, 0.6, 0.41).is_err());
        assert!(PiecewiseAuction::family1(2, 0.6, 0.2, 0.1).is_err());
    }

    #[test]
    fn family2_tail_level() {
        let pa = PiecewiseAuction::family2(2, 0.1, 0.5).unwrap();
        assert_abs_diff_eq!(pa.kappa(), 0.75, epsilon = 1e-12);
        let pa1 = PiecewiseAuction::family2(3, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(pa1.kappa(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_allocation_family1() {
        let pa = PiecewiseAuction::family1(2, 0.0, 1.0, 0.0).unwrap();
        let rw = pa.rev_wel(&QuantileModel::Uniform).unwrap();
        assert_abs_diff_eq!(rw.rev, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(rw.wel, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn reserve_half_rev_wel() {
        let pa = PiecewiseAuction::family2(2, 0.5, 1.0).unwrap();
        let rw = pa.rev_wel(&QuantileModel::Uniform).unwrap();
        assert_abs_diff_eq!(rw.wel, 7.0 / 12.0, epsilon = 1e-6);
        assert_abs_diff_eq!(rw.rev, 5.0 / 12.0, epsilon = 1e-6);
    }

    #[test]
    fn interim_passes_border_and_is_tight_on_tail() {
        for pa in [
            PiecewiseAuction::family1(2, 0.2, 0.6, 0.2).unwrap(),
            PiecewiseAuction::family1(3, 0.1, 0.7, 0.1).unwrap(),
            PiecewiseAuction::family2(2, 0.3, 0.8).unwrap(),
            PiecewiseAuction::family2(3, 0.0, 0.5).unwrap(),
        ] {
            let curve = pa.interim_curve(1024);
            let rep = border_check_symmetric(&curve, pa.n, None);
            assert!(rep.feasible, "{pa:?}");
            // tight exactly on the q^{n-1} segment
            let seg = match pa.family {
                Family::One { .. } => (pa.r2, 1.0),
                Family::Two => (pa.r1, pa.r2),
            };
            let slack = curve.max_step() * curve.max_step();
            for &q in curve.grid() {
                let q: f64 = q;
                let p = curve.tail_integral(q);
                let rhs = (1.0 - q.powi(pa.n as i32)) / pa.n as f64;
                if q >= seg.0 && q <= seg.1 {
                    assert!((p - rhs).abs() <= slack, "{pa:?} not tight at {q}");
                }
            }
        }
    }

    #[test]
    fn closed_form_p_matches_curve_tail() {
        for pa in [
            PiecewiseAuction::family1(2, 0.2, 0.6, 0.2).unwrap(),
            PiecewiseAuction::family2(3, 0.25, 0.75).unwrap(),
        ] {
            let curve = pa.interim_curve(4096);
            for q in [0.0, 0.1, 0.21, 0.5, 0.61, 0.9] {
                assert_abs_diff_eq!(curve.tail_integral(q), pa.p_of(q), epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let pa = PiecewiseAuction::family1(3, 0.25, 0.5, 0.1).unwrap();
        let v = pa.to_json_value();
        let back = PiecewiseAuction::<f64>::from_json_value(&v).unwrap();
        assert_eq!(pa, back);
    }
}
