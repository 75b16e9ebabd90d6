//! Least-squares recovery of piecewise-auction parameters from a sampled
//! cumulative tail `P`, coarse grid over the breakpoints followed by local
//! pattern refinement. The middle level `k` of family 1 is linear in `P`,
//! so its optimum is closed-form given the breakpoints.

use super::PiecewiseAuction;
use crate::error::{Error, Result};
use crate::num::Real;

#[derive(Debug, Clone)]
pub struct FitResult<R> {
    pub pa: PiecewiseAuction<R>,
    pub sup_error: R,
}

const COARSE: usize = 48;
const REFINE_ROUNDS: usize = 42;

/// Fit both families to `P` on `grid`, returning the better one by
/// sum-of-squares; `sup_error` is the sup-norm residual on the grid.
pub fn fit_piecewise<R: Real>(p: &[R], grid: &[R], n: usize) -> Result<FitResult<R>> {
    if p.len() != grid.len() || p.len() < 2 {
        return Err(Error::InvalidInput(
            "P and grid must match and have length >= 2".into(),
        ));
    }
    let slack = R::of(1e-6);
    for w in p.windows(2) {
        if w[1] > w[0] + slack {
            return Err(Error::InvalidInput("P must be nonincreasing".into()));
        }
    }
    for i in 1..p.len() - 1 {
        let left = (p[i] - p[i - 1]) / (grid[i] - grid[i - 1]);
        let right = (p[i + 1] - p[i]) / (grid[i + 1] - grid[i]);
        if right > left + slack {
            return Err(Error::InvalidInput("P must be concave".into()));
        }
    }

    let step = R::one() / R::of_usize(COARSE);
    let mut best1: Option<(R, (R, R))> = None;
    let mut best2: Option<(R, (R, R))> = None;
    for i in 0..COARSE {
        for j in (i + 1)..=COARSE {
            let r1 = R::of_usize(i) * step;
            let r2 = R::of_usize(j) * step;
            let s1 = sse_family1(p, grid, n, r1, r2).0;
            if best1.as_ref().is_none_or(|(b, _)| s1 < *b) {
                best1 = Some((s1, (r1, r2)));
            }
            let s2 = sse_family2(p, grid, n, r1, r2);
            if best2.as_ref().is_none_or(|(b, _)| s2 < *b) {
                best2 = Some((s2, (r1, r2)));
            }
        }
    }

    let (_, start1) = best1.expect("coarse grid nonempty");
    let (sse1, params1) = refine(p, grid, n, start1, step, |p, g, n, a, b| {
        sse_family1(p, g, n, a, b).0
    });
    let (_, start2) = best2.expect("coarse grid nonempty");
    let (sse2, params2) = refine(p, grid, n, start2, step, sse_family2);

    // family 1 wins strict ties only when genuinely better
    if sse1 < sse2 {
        let (_, k) = sse_family1(p, grid, n, params1.0, params1.1);
        let pa = PiecewiseAuction::family1(n, params1.0, params1.1, k)?;
        Ok(FitResult {
            sup_error: sup_err(p, grid, &pa),
            pa,
        })
    } else {
        let pa = PiecewiseAuction::family2(n, params2.0, params2.1)?;
        Ok(FitResult {
            sup_error: sup_err(p, grid, &pa),
            pa,
        })
    }
}

fn refine<R: Real>(
    p: &[R],
    grid: &[R],
    n: usize,
    start: (R, R),
    step0: R,
    sse: impl Fn(&[R], &[R], usize, R, R) -> R,
) -> (R, (R, R)) {
    let mut best = start;
    let mut best_sse = sse(p, grid, n, best.0, best.1);
    let mut step = step0;
    let gap = R::of(1e-9);
    for _ in 0..REFINE_ROUNDS {
        let mut improved = false;
        for (da, db) in [
            (-R::one(), R::zero()),
            (R::one(), R::zero()),
            (R::zero(), -R::one()),
            (R::zero(), R::one()),
            (-R::one(), -R::one()),
            (R::one(), R::one()),
            (R::one(), -R::one()),
            (-R::one(), R::one()),
        ] {
            let a = (best.0 + da * step).max(R::zero()).min(R::one() - gap);
            let b = (best.1 + db * step).max(a + gap).min(R::one());
            if a >= b {
                continue;
            }
            let s = sse(p, grid, n, a, b);
            if s < best_sse {
                best_sse = s;
                best = (a, b);
                improved = true;
            }
        }
        if !improved {
            step = step / R::of(2.0);
        }
    }
    (best_sse, best)
}

/// SSE of family 1 after the closed-form optimal (clamped) `k`.
fn sse_family1<R: Real>(p: &[R], grid: &[R], n: usize, r1: R, r2: R) -> (R, R) {
    let nr = R::of_usize(n);
    let bound_r2 = (R::one() - r2.powi(n as i32)) / nr;
    // P = A(q) + k B(q)
    let a_of = |q: R| {
        if q > r2 {
            (R::one() - q.powi(n as i32)) / nr
        } else {
            bound_r2
        }
    };
    let b_of = |q: R| {
        if q > r2 {
            R::zero()
        } else if q > r1 {
            r2 - q
        } else {
            r2 - r1
        }
    };
    let mut num = R::zero();
    let mut den = R::zero();
    for (&q, &pv) in grid.iter().zip(p) {
        let b = b_of(q);
        num = num + b * (pv - a_of(q));
        den = den + b * b;
    }
    let kmax = {
        let mut s = R::zero();
        for i in 0..n {
            s = s + r1.powi(i as i32) * r2.powi((n - 1 - i) as i32);
        }
        s / nr
    };
    let k = if den > R::zero() {
        (num / den).max(R::zero()).min(kmax)
    } else {
        R::zero()
    };
    let mut sse = R::zero();
    for (&q, &pv) in grid.iter().zip(p) {
        let e = a_of(q) + k * b_of(q) - pv;
        sse = sse + e * e;
    }
    (sse, k)
}

fn sse_family2<R: Real>(p: &[R], grid: &[R], n: usize, r1: R, r2: R) -> R {
    let nr = R::of_usize(n);
    let kappa = {
        let mut s = R::zero();
        for i in 0..n {
            s = s + r2.powi(i as i32);
        }
        s / nr
    };
    let bound = |x: R| (R::one() - x.powi(n as i32)) / nr;
    let mut sse = R::zero();
    for (&q, &pv) in grid.iter().zip(p) {
        let model = if q > r2 {
            kappa * (R::one() - q)
        } else if q > r1 {
            bound(q)
        } else {
            bound(r1)
        };
        let e = model - pv;
        sse = sse + e * e;
    }
    sse
}

fn sup_err<R: Real>(p: &[R], grid: &[R], pa: &PiecewiseAuction<R>) -> R {
    grid.iter()
        .zip(p)
        .map(|(&q, &pv)| (pa.p_of(q) - pv).abs())
        .fold(R::zero(), |a, b| a.max(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::piecewise::Family;
    use crate::reduced_form::uniform_grid;

    #[test]
    fn border_tight_curve_fits_family2_exactly() {
        let grid: Vec<f64> = uniform_grid(200);
        let p: Vec<f64> = grid.iter().map(|&q| (1.0 - q * q) / 2.0).collect();
        let fit = fit_piecewise(&p, &grid, 2).unwrap();
        assert!(matches!(fit.pa.family, Family::Two), "{:?}", fit.pa);
        assert!(fit.pa.r1 <= 1.0 / 200.0);
        assert!(fit.pa.r2 >= 1.0 - 1e-9);
        assert!(fit.sup_error <= 1.0 / 200.0, "sup {}", fit.sup_error);
    }

    #[test]
    fn zero_curve_fits_family1_zero_level() {
        let grid: Vec<f64> = uniform_grid(100);
        let p = vec![0.0; grid.len()];
        let fit = fit_piecewise(&p, &grid, 2).unwrap();
        match fit.pa.family {
            Family::One { k } => assert_eq!(k, 0.0),
            Family::Two => panic!("expected family 1"),
        }
        assert_eq!(fit.sup_error, 0.0);
    }

    #[test]
    fn recovers_a_family1_middle_level() {
        let pa = PiecewiseAuction::family1(2, 0.2, 0.6, 0.25).unwrap();
        let grid: Vec<f64> = uniform_grid(400);
        let p: Vec<f64> = grid.iter().map(|&q| pa.p_of(q)).collect();
        let fit = fit_piecewise(&p, &grid, 2).unwrap();
        assert!(fit.sup_error <= 1e-6, "sup {}", fit.sup_error);
    }

    #[test]
    fn rejects_nonmonotone_input() {
        let grid: Vec<f64> = uniform_grid(8);
        let mut p = vec![0.5; grid.len()];
        p[4] = 0.9;
        assert!(fit_piecewise(&p, &grid, 2).is_err());
    }
}
