//! Per-buyer concave-envelope reshaping of interim allocations.
//!
//! For buyer `i`, `h_i(q_i, q_-i) = 1 - prod_j q_j - sum_{j!=i}
//! int_{q_j}^1 xhat_j` is linear in `q_i` for fixed opponents, so its
//! pointwise minimum over opponents is a concave decreasing envelope with
//! slopes in [-1, 0] and `h(1) = 0`. Replacing `xhat_i` by the negative
//! envelope slope above a mass-matching threshold preserves the buyer's
//! total allocation and Border feasibility while pushing allocation toward
//! higher quantiles; under a regular prior this weakly improves both
//! welfare and revenue.

use crate::error::{Error, Result};
use crate::num::Real;
use crate::piecewise::nudge_up;
use crate::priors::{check_regular, QuantileModel};
use crate::reduced_form::{
    border_check_asymmetric, rev_wel_from_curve, uniform_grid, InterimCurve,
};

/// Inner minimization grid per opponent coordinate.
const INNER_GRID: usize = 64;
/// Cap on tensor combinations per envelope (the budget behind the inner
/// grid for three or more opponents).
const TENSOR_CAP: usize = 262_144;

#[derive(Debug, Clone)]
pub struct EnvelopeFunction<R> {
    pub grid: Vec<R>,
    /// Concave-hull values of the envelope on `grid`; nonincreasing with
    /// `values.last() = 0`.
    pub values: Vec<R>,
    /// Mass-matching threshold: `h(s*) = int_0^1 xhat_i`.
    pub s_star: R,
}

/// Pointwise envelope `min_{q_-i} h_i(q_i, q_-i)` on a uniform `q_i` grid
/// of `grid_points` intervals, then the concave hull of the samples.
pub fn envelope<R: Real>(
    curves: &[InterimCurve<R>],
    buyer: usize,
    grid_points: usize,
) -> Result<EnvelopeFunction<R>> {
    if curves.len() < 2 {
        return Err(Error::InvalidInput(
            "envelope needs at least two buyers".into(),
        ));
    }
    if buyer >= curves.len() {
        return Err(Error::InvalidInput("buyer index out of range".into()));
    }
    let others: Vec<&InterimCurve<R>> = curves
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != buyer)
        .map(|(_, c)| c)
        .collect();

    // candidate lines h = b - a * q_i, one per opponent-profile candidate
    let axes: Vec<Vec<R>> = others
        .iter()
        .map(|c| candidate_axis(c, others.len()))
        .collect();
    let mut lines: Vec<(R, R)> = Vec::new();
    let mut idx = vec![0usize; axes.len()];
    'outer: loop {
        let mut a = R::one();
        let mut b = R::one();
        for (axis, (&i, other)) in axes.iter().zip(idx.iter().zip(&others)) {
            let q = axis[i];
            a = a * q;
            b = b - other.tail_integral(q);
        }
        lines.push((a, b));
        let mut d = 0;
        loop {
            idx[d] += 1;
            if idx[d] < axes[d].len() {
                break;
            }
            idx[d] = 0;
            d += 1;
            if d == axes.len() {
                break 'outer;
            }
        }
    }

    let grid: Vec<R> = uniform_grid(grid_points.max(8));
    let mut values: Vec<R> = grid
        .iter()
        .map(|&qi| {
            let mut best = R::infinity();
            for &(a, b) in &lines {
                best = best.min(b - a * qi);
            }
            // with a single opponent the interior minimizer solves
            // xhat_j(q_j) = q_i exactly on a linear piece
            if others.len() == 1 {
                if let Some(qj) = inverse_on_curve(others[0], qi) {
                    let h = R::one() - qi * qj - others[0].tail_integral(qj);
                    best = best.min(h);
                }
            }
            best
        })
        .collect();

    concave_hull_in_place(&grid, &mut values);
    // the all-ones profile gives h(1) = 0 exactly for feasible inputs;
    // squash float residue so mass bookkeeping telescopes
    let last = values.len() - 1;
    if values[last].abs() <= R::of(1e-9) {
        values[last] = R::zero();
    }

    let mass = curves[buyer].mass();
    let s_star = solve_threshold(&grid, &values, mass)?;
    Ok(EnvelopeFunction {
        grid,
        values,
        s_star,
    })
}

fn candidate_axis<R: Real>(curve: &InterimCurve<R>, n_others: usize) -> Vec<R> {
    let per_coord = if n_others <= 1 {
        // exact per-piece refinement handles the interior; knots plus a
        // uniform grid cover the rest
        usize::MAX
    } else {
        let cap = (TENSOR_CAP as f64).powf(1.0 / n_others as f64) as usize;
        cap.clamp(8, 128)
    };
    let mut axis: Vec<R> = uniform_grid(INNER_GRID);
    let knots = curve.grid();
    if knots.len() <= per_coord {
        axis.extend_from_slice(knots);
    } else {
        let stride = knots.len().div_ceil(per_coord);
        axis.extend(knots.iter().step_by(stride).copied());
        axis.push(R::one());
    }
    axis.sort_by(|a, b| a.partial_cmp(b).unwrap());
    axis.dedup();
    axis
}

/// Piecewise-linear inverse of a nondecreasing curve; `None` when `y` is
/// outside the range or the curve is flat there.
fn inverse_on_curve<R: Real>(curve: &InterimCurve<R>, y: R) -> Option<R> {
    let vals = curve.values();
    let grid = curve.grid();
    let last = vals.len() - 1;
    if y < vals[0] || y > vals[last] {
        return None;
    }
    let mut lo = 0;
    let mut hi = last;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if vals[mid] <= y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if vals[hi] == vals[lo] {
        return Some(grid[lo]);
    }
    let t = (y - vals[lo]) / (vals[hi] - vals[lo]);
    Some(grid[lo] + t * (grid[hi] - grid[lo]))
}

/// Replace the samples by their concave majorant (upper hull), evaluated
/// back on the same grid.
fn concave_hull_in_place<R: Real>(grid: &[R], values: &mut [R]) {
    let n = grid.len();
    let mut hull: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let cross = (grid[b] - grid[a]) * (values[i] - values[a])
                - (values[b] - values[a]) * (grid[i] - grid[a]);
            // keep right turns only (concave cap)
            if cross >= R::zero() {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    let mut seg = 0;
    let snapshot: Vec<R> = values.to_vec();
    for i in 0..n {
        while seg + 1 < hull.len() && grid[hull[seg + 1]] < grid[i] {
            seg += 1;
        }
        let (a, b) = (hull[seg], hull[(seg + 1).min(hull.len() - 1)]);
        values[i] = if a == b || grid[b] == grid[a] {
            snapshot[a]
        } else {
            let t = (grid[i] - grid[a]) / (grid[b] - grid[a]);
            snapshot[a] + t * (snapshot[b] - snapshot[a])
        };
    }
}

fn solve_threshold<R: Real>(grid: &[R], values: &[R], mass: R) -> Result<R> {
    if mass > values[0] + R::of(1e-9) {
        return Err(Error::Infeasible(format!(
            "total mass {} exceeds the envelope ceiling {}; input profile \
             is not Border-feasible",
            mass.as_f64(),
            values[0].as_f64()
        )));
    }
    if mass >= values[0] {
        return Ok(grid[0]);
    }
    let last = values.len() - 1;
    if mass <= values[last] {
        return Ok(grid[last]);
    }
    // values are nonincreasing; bisect to the enclosing segment
    let mut lo = 0;
    let mut hi = last;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if values[mid] >= mass {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if values[hi] == values[lo] {
        return Ok(grid[lo]);
    }
    let t = (values[lo] - mass) / (values[lo] - values[hi]);
    Ok(grid[lo] + t * (grid[hi] - grid[lo]))
}

/// Reshape one buyer: zero below the mass-matching threshold, negative
/// envelope slope above it. Mass is conserved.
///
/// With a single opponent the envelope theorem gives the slope in closed
/// form: `-h'(q) = xhat_j^{-1}(q)` (generalized inverse, clamped to [0,1]),
/// so the transform is computed exactly and smooth inputs stay smooth. For
/// three or more buyers the hull-slope staircase on the evaluation grid is
/// used instead.
pub fn transform_buyer<R: Real>(
    curves: &[InterimCurve<R>],
    buyer: usize,
    grid_points: usize,
) -> Result<InterimCurve<R>> {
    if curves.len() == 2 {
        return transform_two_buyer(curves, buyer);
    }
    let env = envelope(curves, buyer, grid_points)?;
    let s = env.s_star;
    if s >= R::one() {
        return InterimCurve::new(vec![R::zero(), R::one()], vec![R::zero(), R::zero()]);
    }

    // slopes of the hull segments, clamped into [-1, 0]
    let mut knots: Vec<R> = vec![R::zero()];
    let mut vals: Vec<R> = vec![R::zero()];
    let push = |q: R, v: R, knots: &mut Vec<R>, vals: &mut Vec<R>| {
        if q > *knots.last().unwrap() && q <= R::one() {
            knots.push(q);
            vals.push(v.max(*vals.last().unwrap()));
        }
    };
    if s > R::zero() {
        push(s, R::zero(), &mut knots, &mut vals);
    }
    let mut prev_level: Option<R> = None;
    for w in 0..env.grid.len() - 1 {
        let (q0, q1) = (env.grid[w], env.grid[w + 1]);
        if q1 <= s {
            continue;
        }
        let slope = (env.values[w + 1] - env.values[w]) / (q1 - q0);
        let level = (-slope).max(R::zero()).min(R::one());
        let start = q0.max(s);
        if prev_level.is_none_or(|p| p < level) {
            push(nudge_up(start), level, &mut knots, &mut vals);
        }
        push(q1, level, &mut knots, &mut vals);
        prev_level = Some(level);
    }
    if *knots.last().unwrap() < R::one() {
        let v = *vals.last().unwrap();
        knots.push(R::one());
        vals.push(v);
    }
    InterimCurve::new(knots, vals)
}

/// Exact two-buyer transform. The envelope is
/// `h(q) = 1 - q qj*(q) - P_j(qj*(q))` at the interior minimizer
/// `qj*(q) = xhat_j^{-1}(q)` (0 below the opponent's range, 1 above), so
/// the reshaped curve is the opponent's generalized inverse cut at the
/// mass-matching threshold.
fn transform_two_buyer<R: Real>(
    curves: &[InterimCurve<R>],
    buyer: usize,
) -> Result<InterimCurve<R>> {
    let opp = &curves[1 - buyer];
    let mass = curves[buyer].mass();
    let h_of = |q: R| {
        let qj = generalized_inverse(opp, q);
        R::one() - q * qj - opp.tail_integral(qj)
    };
    let ceiling = h_of(R::zero());
    if mass > ceiling + R::of(1e-9) {
        return Err(Error::Infeasible(format!(
            "total mass {} exceeds the envelope ceiling {}; input profile \
             is not Border-feasible",
            mass.as_f64(),
            ceiling.as_f64()
        )));
    }
    if mass <= R::zero() {
        return InterimCurve::new(vec![R::zero(), R::one()], vec![R::zero(), R::zero()]);
    }
    // h is continuous and decreasing from the ceiling to h(1) = 0
    let s = if mass >= ceiling {
        R::zero()
    } else {
        let mut lo = R::zero();
        let mut hi = R::one();
        for _ in 0..120 {
            let mid = (lo + hi) / R::of(2.0);
            if h_of(mid) >= mass {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= R::of(1e-15) {
                break;
            }
        }
        (lo + hi) / R::of(2.0)
    };

    // the generalized inverse as an explicit piecewise-linear curve over
    // allocation levels r: value runs of the opponent become jumps, value
    // jumps become flats
    let (og, ov) = (opp.grid(), opp.values());
    let mut pts: Vec<(R, R)> = vec![(R::zero(), R::zero())];
    let push = |r: R, x: R, pts: &mut Vec<(R, R)>| {
        if r > pts.last().unwrap().0 && r <= R::one() {
            let x = x.max(pts.last().unwrap().1);
            pts.push((r, x.min(R::one())));
        }
    };
    let mut k = 0;
    while k < og.len() {
        let mut end = k;
        while end + 1 < og.len() && ov[end + 1] == ov[k] {
            end += 1;
        }
        if end > k {
            // flat run: the inverse jumps from the left edge to the right
            push(ov[k], og[k], &mut pts);
            push(nudge_up(ov[k]), og[end], &mut pts);
        } else {
            push(ov[k], og[k], &mut pts);
        }
        k = end + 1;
    }
    let vmax = ov[ov.len() - 1];
    if vmax < R::one() {
        // above the opponent's range the minimizer sits at q_j = 1
        push(nudge_up(vmax), R::one(), &mut pts);
        push(R::one(), R::one(), &mut pts);
    }
    let inv_grid: Vec<R> = pts.iter().map(|p| p.0).collect();
    let inv_vals: Vec<R> = pts.iter().map(|p| p.1).collect();
    let inverse = InterimCurve::new(inv_grid, inv_vals)?;

    // cut at the threshold
    let mut knots: Vec<R> = vec![R::zero()];
    let mut vals: Vec<R> = vec![R::zero()];
    if s > R::zero() {
        knots.push(s);
        vals.push(R::zero());
        let after = nudge_up(s);
        if after < R::one() {
            knots.push(after);
            vals.push(generalized_inverse(opp, after));
        }
    }
    for (&r, &x) in inverse.grid().iter().zip(inverse.values()) {
        if r > *knots.last().unwrap() {
            knots.push(r);
            vals.push(x.max(*vals.last().unwrap()));
        }
    }
    if *knots.last().unwrap() < R::one() {
        let v = *vals.last().unwrap();
        knots.push(R::one());
        vals.push(v);
    }
    InterimCurve::new(knots, vals)
}

/// `inf { q : xhat(q) >= y }`, clamped to 1 when the curve never reaches
/// `y` and to 0 at or below its starting value.
fn generalized_inverse<R: Real>(curve: &InterimCurve<R>, y: R) -> R {
    let vals = curve.values();
    let grid = curve.grid();
    let last = vals.len() - 1;
    if y <= vals[0] {
        return R::zero();
    }
    if y > vals[last] {
        return R::one();
    }
    let mut lo = 0;
    let mut hi = last;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if vals[mid] < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if vals[hi] == vals[lo] {
        return grid[lo];
    }
    let t = (y - vals[lo]) / (vals[hi] - vals[lo]);
    grid[lo] + t * (grid[hi] - grid[lo])
}

#[derive(Debug, Clone)]
pub struct TransformReport<R> {
    pub curves: Vec<InterimCurve<R>>,
    pub wel_delta: R,
    pub rev_delta: R,
    /// Per-buyer change in total allocation mass.
    pub mass_delta: Vec<R>,
    pub border_feasible_before: bool,
    pub border_feasible_after: bool,
    /// Whether the model passed the regularity check; the improvement
    /// guarantee only applies when it does.
    pub regular: bool,
}

pub const TRANSFORM_GRID: usize = 256;

/// Sequential per-buyer transform; each step sees the already-updated
/// predecessors.
pub fn transform_all<R: Real>(
    model: &QuantileModel<R>,
    curves: &[InterimCurve<R>],
) -> Result<TransformReport<R>> {
    let regular = check_regular(model, 256)?;
    let before = rev_wel_from_curve(model, curves)?;
    let border_before = border_check_asymmetric(curves, 64)?.feasible;
    let mut work: Vec<InterimCurve<R>> = curves.to_vec();
    for i in 0..work.len() {
        work[i] = transform_buyer(&work, i, TRANSFORM_GRID)?;
    }
    let after = rev_wel_from_curve(model, &work)?;
    let border_after = border_check_asymmetric(&work, 64)?.feasible;
    let mass_delta = curves
        .iter()
        .zip(&work)
        .map(|(a, b)| b.mass() - a.mass())
        .collect();
    Ok(TransformReport {
        curves: work,
        wel_delta: after.wel - before.wel,
        rev_delta: after.rev - before.rev,
        mass_delta,
        border_feasible_before: border_before,
        border_feasible_after: border_after,
        regular,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn identity(n: usize) -> InterimCurve<f64> {
        InterimCurve::from_fn(n, |q: f64| q).unwrap()
    }

    fn constant(n: usize, c: f64) -> InterimCurve<f64> {
        InterimCurve::from_fn(n, |_| c).unwrap()
    }

    #[test]
    fn envelope_of_identity_opponent() {
        // h1(q1) = min_q2 (1 - q1 q2 - (1 - q2^2)/2) = (1 - q1^2)/2
        let curves = [identity(256), identity(256)];
        let env = envelope(&curves, 0, 256).unwrap();
        for (&q, &v) in env.grid.iter().zip(&env.values) {
            assert_abs_diff_eq!(v, (1.0 - q * q) / 2.0, epsilon = 1e-6);
        }
        assert!(env.s_star <= 1e-6);
        assert_abs_diff_eq!(*env.values.last().unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn envelope_of_zero_opponent() {
        let curves = [constant(64, 0.4), constant(64, 0.0)];
        let env = envelope(&curves, 0, 128).unwrap();
        for (&q, &v) in env.grid.iter().zip(&env.values) {
            assert_abs_diff_eq!(v, 1.0 - q, epsilon = 1e-9);
        }
    }

    #[test]
    fn envelope_slopes_bounded() {
        let curves = [constant(64, 0.3), identity(64), constant(64, 0.1)];
        let env = envelope(&curves, 0, 128).unwrap();
        for w in 0..env.grid.len() - 1 {
            let slope = (env.values[w + 1] - env.values[w]) / (env.grid[w + 1] - env.grid[w]);
            assert!((-1.0 - 1e-9..=1e-9).contains(&slope), "slope {slope}");
        }
    }

    #[test]
    fn identity_profile_is_a_fixed_point() {
        let curves = [identity(512), identity(512)];
        let rep = transform_all(&QuantileModel::Uniform, &curves).unwrap();
        assert!(rep.wel_delta.abs() <= 1e-9);
        assert!(rep.rev_delta.abs() <= 1e-9);
        for (i, c) in rep.curves.iter().enumerate() {
            for q in [0.1, 0.5, 0.9] {
                assert_abs_diff_eq!(c.eval(q), q, epsilon = 1e-9);
            }
            assert!(rep.mass_delta[i].abs() <= 1e-8);
        }
    }

    #[test]
    fn constant_curve_becomes_posted_price_step() {
        let curves = [constant(64, 0.4), constant(64, 0.0)];
        let out = transform_buyer(&curves, 0, 256).unwrap();
        // h = 1 - q, mass 0.4 => step at 0.6
        assert_abs_diff_eq!(out.mass(), 0.4, epsilon = 1e-8);
        assert!(out.eval(0.55) <= 1e-9);
        assert!(out.eval(0.65) >= 1.0 - 1e-9);
    }

    #[test]
    fn zero_curve_stays_zero() {
        let curves = [constant(16, 0.0), identity(16)];
        let out = transform_buyer(&curves, 0, 64).unwrap();
        assert_eq!(out.mass(), 0.0);
    }

    #[test]
    fn welfare_improves_for_constant_profile() {
        // (constant c, 0) on uniform: welfare goes from c/2 to c - c^2/2
        let c = 0.4;
        let curves = [constant(128, c), constant(128, 0.0)];
        let rep = transform_all(&QuantileModel::Uniform, &curves).unwrap();
        let expect = (c - c * c / 2.0) - c / 2.0;
        assert_abs_diff_eq!(rep.wel_delta, expect, epsilon = 1e-4);
        assert!(rep.rev_delta >= -1e-9);
        assert!(rep.border_feasible_after);
    }

    #[test]
    fn mass_conservation_and_tail_dominance() {
        let curves = [constant(128, 0.3), constant(128, 0.2)];
        let rep = transform_all(&QuantileModel::Uniform, &curves).unwrap();
        for d in &rep.mass_delta {
            assert!(d.abs() <= 1e-8, "mass drift {d}");
        }
        // integrated-tail dominance: P*(q) >= P(q) everywhere
        for (orig, new) in curves.iter().zip(&rep.curves) {
            for j in 0..=64 {
                let q = j as f64 / 64.0;
                assert!(
                    new.tail_integral(q) >= orig.tail_integral(q) - 1e-9,
                    "tail dominance fails at {q}"
                );
            }
        }
    }

    #[test]
    fn transform_is_idempotent() {
        let curves = [constant(128, 0.3), constant(128, 0.2)];
        let once = transform_all(&QuantileModel::Uniform, &curves).unwrap();
        let twice = transform_all(&QuantileModel::Uniform, &once.curves).unwrap();
        for (a, b) in once.curves.iter().zip(&twice.curves) {
            for j in 0..=128 {
                let q = j as f64 / 128.0;
                assert!(
                    (a.eval(q) - b.eval(q)).abs() <= 1e-8,
                    "not idempotent at {q}"
                );
            }
        }
    }

    #[test]
    fn all_zero_profile_unchanged() {
        let curves = [constant(16, 0.0), constant(16, 0.0)];
        let rep = transform_all(&QuantileModel::Uniform, &curves).unwrap();
        assert_eq!(rep.wel_delta, 0.0);
        assert_eq!(rep.rev_delta, 0.0);
        for c in &rep.curves {
            assert_eq!(c.mass(), 0.0);
        }
    }

    #[test]
    fn infeasible_mass_rejected() {
        // buyer 0 demands mass 0.9 while buyer 1 already takes 0.5
        let curves = [constant(64, 0.9), identity(64)];
        assert!(transform_buyer(&curves, 0, 64).is_err());
    }
}
