//! Constant-welfare transfer paths between piecewise auctions.
//!
//! Every auction first travels to the canonical reserve auction
//! `xhat(q) = 1{q > rho*} q^{n-1}` at its welfare level, then the second
//! endpoint's path is traversed backwards. Family 2 moves `r2` linearly to
//! 1 while `r1` is re-solved by bisection; family 1 moves `r2` linearly to
//! `rho*` while `k` follows from the affine welfare formula.
//!
//! The family-2 homotopy can run out of room: once every admissible `r1`
//! leaves more welfare than `c` (the plateau-and-tail floor rises above
//! `c`), no in-family step exists. At that boundary the auction coincides
//! with a family-1 auction (zero then constant allocation), so the path
//! switches representation and continues with the family-1 homotopy.

use super::{Family, PiecewiseAuction};
use crate::error::{Error, Result};
use crate::num::Real;
use crate::priors::QuantileModel;
use crate::reduced_form::{rev_wel_from_curve, QUAD_GRID};

/// Welfare of a piecewise auction through the standard quadrature; the
/// transfer machinery solves and verifies against this one functional.
pub fn piecewise_welfare<R: Real>(model: &QuantileModel<R>, pa: &PiecewiseAuction<R>) -> Result<R> {
    let curve = pa.interim_curve(QUAD_GRID);
    let one = rev_wel_from_curve(model, &[curve])?;
    Ok(one.wel * R::of_usize(pa.n))
}

#[derive(Debug, Clone)]
pub struct TransferPath<R> {
    pub steps: Vec<PiecewiseAuction<R>>,
    pub welfare_level: R,
    pub max_welfare_dev: R,
    pub max_param_jump: R,
}

pub const PATH_WELFARE_TOL: f64 = 1e-6;
const BISECT_TOL: f64 = 1e-12;
const BISECT_ITERS: usize = 200;

/// The reserve `rho*` with `W(rho*) = n int_rho^1 v q^{n-1} dq = c`.
pub fn canonical_reserve<R: Real>(model: &QuantileModel<R>, n: usize, c: R) -> Result<R> {
    let w_eff = super::reserve_welfare(model, n, R::zero())?;
    let tol = R::of(PATH_WELFARE_TOL) * (R::one() + c.abs());
    if c < -tol || c > w_eff + tol {
        return Err(Error::Domain(format!(
            "welfare level {} outside [0, {}]",
            c.as_f64(),
            w_eff.as_f64()
        )));
    }
    if c >= w_eff {
        return Ok(R::zero());
    }
    if c <= R::zero() {
        return Ok(R::one());
    }
    bisect(
        |rho| Ok(super::reserve_welfare(model, n, rho)? - c),
        R::zero(),
        R::one(),
    )
}

/// Welfare-preserving path `pa_a -> canonical -> pa_b`; `steps` is the
/// number of homotopy intervals per leg.
pub fn transfer_path<R: Real>(
    model: &QuantileModel<R>,
    pa_a: &PiecewiseAuction<R>,
    pa_b: &PiecewiseAuction<R>,
    steps: usize,
) -> Result<TransferPath<R>> {
    if pa_a.n != pa_b.n {
        return Err(Error::InvalidInput(
            "endpoints must share the buyer count".into(),
        ));
    }
    let steps = steps.max(1);
    let c = piecewise_welfare(model, pa_a)?;
    let cb = piecewise_welfare(model, pa_b)?;
    let tol = R::of(PATH_WELFARE_TOL) * (R::one() + c.abs());
    if (c - cb).abs() > tol {
        return Err(Error::InvalidInput(format!(
            "endpoint welfare mismatch: {} vs {}",
            c.as_f64(),
            cb.as_f64()
        )));
    }

    if pa_a == pa_b {
        let steps_vec = vec![*pa_a; steps + 1];
        return assemble(model, steps_vec, c);
    }

    let n = pa_a.n;
    let rho = canonical_reserve(model, n, c)?;
    let canonical = if rho < R::one() - R::of(1e-9) {
        PiecewiseAuction::family2(n, rho.max(R::zero()), R::one())?
    } else {
        PiecewiseAuction::family1(n, R::zero(), R::one(), R::zero())?
    };

    let mut forward = leg_to_canonical(model, pa_a, c, rho, steps)?;
    forward.push(canonical);
    let mut backward = leg_to_canonical(model, pa_b, c, rho, steps)?;
    backward.push(canonical);
    backward.reverse();

    let mut steps_vec = forward;
    steps_vec.extend(backward);
    steps_vec.dedup();
    assemble(model, steps_vec, c)
}

fn assemble<R: Real>(
    model: &QuantileModel<R>,
    steps_vec: Vec<PiecewiseAuction<R>>,
    c: R,
) -> Result<TransferPath<R>> {
    let mut max_dev = R::zero();
    for pa in &steps_vec {
        let w = piecewise_welfare(model, pa)?;
        max_dev = max_dev.max((w - c).abs());
    }
    let mut max_jump = R::zero();
    for w in steps_vec.windows(2) {
        max_jump = max_jump.max(param_jump(&w[0], &w[1]));
    }
    Ok(TransferPath {
        steps: steps_vec,
        welfare_level: c,
        max_welfare_dev: max_dev,
        max_param_jump: max_jump,
    })
}

/// Parameter distance between consecutive steps; a representation switch
/// is measured by the L1 gap between the interim allocations (the curves
/// agree up to vanishing slivers there, where a sup norm would only see
/// the sliver height).
fn param_jump<R: Real>(a: &PiecewiseAuction<R>, b: &PiecewiseAuction<R>) -> R {
    match (&a.family, &b.family) {
        (Family::One { k: ka }, Family::One { k: kb }) => {
            (a.r1 - b.r1).abs() + (a.r2 - b.r2).abs() + (*ka - *kb).abs()
        }
        (Family::Two, Family::Two) => (a.r1 - b.r1).abs() + (a.r2 - b.r2).abs(),
        _ => {
            let m = 4096;
            let mut acc = R::zero();
            for j in 0..m {
                let q = (R::of_usize(j) + R::of(0.5)) / R::of_usize(m);
                acc = acc + (a.x_hat(q) - b.x_hat(q)).abs();
            }
            acc / R::of_usize(m)
        }
    }
}

fn leg_to_canonical<R: Real>(
    model: &QuantileModel<R>,
    pa: &PiecewiseAuction<R>,
    c: R,
    rho: R,
    steps: usize,
) -> Result<Vec<PiecewiseAuction<R>>> {
    match pa.family {
        Family::One { .. } => leg_family1(model, pa, c, rho, steps),
        Family::Two => leg_family2(model, pa, c, rho, steps),
    }
}

fn leg_family2<R: Real>(
    model: &QuantileModel<R>,
    pa: &PiecewiseAuction<R>,
    c: R,
    rho: R,
    steps: usize,
) -> Result<Vec<PiecewiseAuction<R>>> {
    let n = pa.n;
    let mut out = vec![*pa];
    let mut r2_prev = pa.r2;
    let gap = R::of(1e-9);
    for s in 1..=steps {
        let t = R::of_usize(s) / R::of_usize(steps);
        let r2t = pa.r2 + t * (R::one() - pa.r2);
        let wel_at = |r1: R| -> Result<R> {
            let cand = PiecewiseAuction::family2(n, r1, r2t)?;
            piecewise_welfare(model, &cand)
        };
        let hi = r2t - (r2t * gap).max(R::of(1e-12));
        if wel_at(hi)? > c {
            // in-family room exhausted: locate the boundary r where the
            // near-degenerate family-2 welfare equals c, walk up to it in
            // sub-steps, switch to the family-1 representation (zero then
            // constant) and continue
            let boundary = bisect(
                |r| {
                    let edge = r - (r * gap).max(R::of(1e-12));
                    let cand = PiecewiseAuction::family2(n, edge, r)?;
                    Ok(piecewise_welfare(model, &cand)? - c)
                },
                r2_prev.max(gap),
                r2t,
            )?;
            let sub = (steps / 4).max(4);
            for u in 1..=sub {
                let r2u = r2_prev + (boundary - r2_prev) * R::of_usize(u) / R::of_usize(sub);
                let hi_u = r2u - (r2u * gap).max(R::of(1e-12));
                let r1u = bisect(
                    |r1| {
                        let cand = PiecewiseAuction::family2(n, r1, r2u)?;
                        Ok(piecewise_welfare(model, &cand)? - c)
                    },
                    R::zero(),
                    hi_u,
                )
                .unwrap_or(hi_u);
                out.push(PiecewiseAuction::family2(n, r1u, r2u)?);
            }
            let switch = family1_at_welfare(model, n, boundary, R::one(), c)?;
            out.push(switch);
            out.extend(leg_family1(
                model,
                &switch,
                c,
                rho,
                steps.saturating_sub(s) + 1,
            )?);
            return Ok(out);
        }
        let r1t = bisect(|r1| Ok(wel_at(r1)? - c), R::zero(), hi)?;
        out.push(PiecewiseAuction::family2(n, r1t, r2t)?);
        r2_prev = r2t;
    }
    Ok(out)
}

fn leg_family1<R: Real>(
    model: &QuantileModel<R>,
    pa: &PiecewiseAuction<R>,
    c: R,
    rho: R,
    steps: usize,
) -> Result<Vec<PiecewiseAuction<R>>> {
    let n = pa.n;
    let mut out = vec![*pa];
    // r2 >= rho always: the middle band only adds welfare on top of the tail
    let target = rho.max(pa.r1 + R::of(1e-12)).min(pa.r2);
    for s in 1..=steps {
        let t = R::of_usize(s) / R::of_usize(steps);
        let r2t = pa.r2 + t * (target - pa.r2);
        let mut step = family1_at_welfare(model, n, pa.r1, r2t, c)?;
        if s == steps {
            if let Family::One { k } = step.family {
                if k.abs() <= R::of(1e-7) {
                    step = PiecewiseAuction::family1(n, pa.r1, r2t, R::zero())?;
                }
            }
        }
        out.push(step);
    }
    Ok(out)
}

/// The family-1 auction with the given breakpoints whose welfare is `c`,
/// via the affine dependence of welfare on `k`.
fn family1_at_welfare<R: Real>(
    model: &QuantileModel<R>,
    n: usize,
    r1: R,
    r2: R,
    c: R,
) -> Result<PiecewiseAuction<R>> {
    let base = PiecewiseAuction::family1(n, r1, r2, R::zero())?;
    let w0 = piecewise_welfare(model, &base)?;
    let kmax = base.k_max();
    let probe = PiecewiseAuction::family1(n, r1, r2, kmax)?;
    let wmax = piecewise_welfare(model, &probe)?;
    let slack = R::of(PATH_WELFARE_TOL);
    if (wmax - w0).abs() <= R::of(1e-14) {
        if (c - w0).abs() > slack {
            return Err(Error::Internal(
                "family-1 welfare is flat in k but the target differs".into(),
            ));
        }
        return Ok(base);
    }
    let k = kmax * (c - w0) / (wmax - w0);
    if k < -slack || k > kmax + slack {
        return Err(Error::Internal(format!(
            "family-1 homotopy left the feasible band: k = {}, kmax = {}",
            k.as_f64(),
            kmax.as_f64()
        )));
    }
    PiecewiseAuction::family1(n, r1, r2, k.max(R::zero()).min(kmax))
}

/// Bisection for a sign change of `f` on `[lo, hi]`; tolerates a missing
/// sign change by returning the endpoint closer to a root.
fn bisect<R: Real>(f: impl Fn(R) -> Result<R>, mut lo: R, mut hi: R) -> Result<R> {
    let flo = f(lo)?;
    let fhi = f(hi)?;
    if flo == R::zero() {
        return Ok(lo);
    }
    if fhi == R::zero() {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::Internal(format!(
            "bisection bracket has no sign change: f({}) = {}, f({}) = {}",
            lo.as_f64(),
            flo.as_f64(),
            hi.as_f64(),
            fhi.as_f64()
        )));
    }
    let tol = R::of(BISECT_TOL);
    for _ in 0..BISECT_ITERS {
        if hi - lo <= tol {
            break;
        }
        let mid = (lo + hi) / R::of(2.0);
        let fm = f(mid)?;
        if fm == R::zero() {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) / R::of(2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn canonical_reserve_closed_form() {
        // W(rho) = 2 int_rho^1 q^2 = 2(1 - rho^3)/3; at rho = 1/2 that is 7/12
        let model = QuantileModel::<f64>::Uniform;
        let rho = canonical_reserve(&model, 2, 7.0 / 12.0).unwrap();
        assert_abs_diff_eq!(rho, 0.5, epsilon = 1e-6);
    }

    #[test]
    fn identical_endpoints_give_constant_path() {
        let model = QuantileModel::<f64>::Uniform;
        let pa = PiecewiseAuction::family2(2, 0.3, 0.7).unwrap();
        let path = transfer_path(&model, &pa, &pa, 10).unwrap();
        assert_eq!(path.steps.len(), 11);
        assert_eq!(path.max_welfare_dev, 0.0);
        assert_eq!(path.max_param_jump, 0.0);
    }

    #[test]
    fn family1_ends_with_zero_level() {
        let model = QuantileModel::<f64>::Uniform;
        let pa = PiecewiseAuction::family1(2, 0.1, 0.8, 0.2).unwrap();
        let c = piecewise_welfare(&model, &pa).unwrap();
        let rho = canonical_reserve(&model, 2, c).unwrap();
        let leg = leg_family1(&model, &pa, c, rho, 25).unwrap();
        match leg.last().unwrap().family {
            Family::One { k } => assert_eq!(k, 0.0),
            Family::Two => panic!("family-1 leg must stay in family 1"),
        }
        for step in &leg {
            let w = piecewise_welfare(&model, step).unwrap();
            assert!((w - c).abs() <= 1e-6, "step welfare {w} vs {c}");
        }
    }

    #[test]
    fn family2_transfers_to_family1_endpoint() {
        let model = QuantileModel::<f64>::Uniform;
        let pa_a = PiecewiseAuction::family2(2, 0.65, 0.8).unwrap();
        let c = piecewise_welfare(&model, &pa_a).unwrap();
        // build a family-1 endpoint at the same welfare
        let pa_b = family1_at_welfare(&model, 2, 0.0, 0.95, c).unwrap();
        let path = transfer_path(&model, &pa_a, &pa_b, 20).unwrap();
        assert!(path.max_welfare_dev <= 1e-6, "dev {}", path.max_welfare_dev);
        assert_eq!(path.steps.first().unwrap(), &pa_a);
        assert_eq!(path.steps.last().unwrap(), &pa_b);
    }

    #[test]
    fn jammed_family2_switches_representation() {
        // small r2 with r1 near it: raising r2 pushes the welfare floor
        // above c, so the leg must hop to family 1 and still hold welfare
        let model = QuantileModel::<f64>::Uniform;
        let pa = PiecewiseAuction::family2(2, 0.0, 0.01).unwrap();
        let c = piecewise_welfare(&model, &pa).unwrap();
        let rho = canonical_reserve(&model, 2, c).unwrap();
        let leg = leg_to_canonical(&model, &pa, c, rho, 15).unwrap();
        assert!(leg.iter().any(|s| matches!(s.family, Family::One { .. })));
        for step in &leg {
            let w = piecewise_welfare(&model, step).unwrap();
            assert!((w - c).abs() <= 1e-6, "step welfare {w} vs {c}");
        }
    }

    #[test]
    fn welfare_mismatch_rejected() {
        let model = QuantileModel::<f64>::Uniform;
        let a = PiecewiseAuction::family2(2, 0.0, 1.0).unwrap();
        let b = PiecewiseAuction::family2(2, 0.5, 1.0).unwrap();
        assert!(transfer_path(&model, &a, &b, 10).is_err());
    }
}
