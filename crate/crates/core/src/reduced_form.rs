//! Interim allocation curves and the randomized-BIC feasibility machinery:
//! Border checks in quantile space, (revenue, welfare) functionals, and the
//! sum-equality principle (equal total interim allocation implies equal
//! revenue and welfare).

use serde_json::Value;

use crate::error::{Error, Result};
use crate::num::Real;
use crate::priors::QuantileModel;

/// Default refinement for quadrature grids.
pub const QUAD_GRID: usize = 2048;

/// A nondecreasing interim allocation sampled on a quantile grid, read
/// between knots by linear interpolation. The grid spans [0, 1].
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct InterimCurve<R> {
    grid: Vec<R>,
    values: Vec<R>,
    #[serde(skip)]
    tails: Vec<R>,
}

pub const MONOTONE_TOL: f64 = 1e-12;

impl<R: Real> InterimCurve<R> {
    pub fn new(grid: Vec<R>, mut values: Vec<R>) -> Result<Self> {
        if grid.len() < 2 || grid.len() != values.len() {
            return Err(Error::InvalidInput(
                "curve needs matching grid/value arrays of length >= 2".into(),
            ));
        }
        let tol = R::of(MONOTONE_TOL);
        let last = grid.len() - 1;
        if grid[0].abs() > tol || (grid[last] - R::one()).abs() > tol {
            return Err(Error::InvalidInput("curve grid must span [0, 1]".into()));
        }
        for w in grid.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidInput(
                    "curve grid must be strictly increasing".into(),
                ));
            }
        }
        let mut grid = grid;
        grid[0] = R::zero();
        grid[last] = R::one();
        for v in values.iter_mut() {
            if *v < R::zero() {
                if *v < -tol {
                    return Err(Error::InvalidInput(
                        "curve values must lie in [0, 1]".into(),
                    ));
                }
                *v = R::zero();
            }
            if *v > R::one() {
                if *v > R::one() + tol {
                    return Err(Error::InvalidInput(
                        "curve values must lie in [0, 1]".into(),
                    ));
                }
                *v = R::one();
            }
        }
        for w in values.windows(2) {
            if w[1] < w[0] - tol {
                return Err(Error::InvalidInput(
                    "curve values must be nondecreasing".into(),
                ));
            }
        }
        let tails = tail_table(&grid, &values);
        Ok(InterimCurve {
            grid,
            values,
            tails,
        })
    }

    /// Sample `f` on a uniform grid with `n` intervals.
    pub fn from_fn(n: usize, f: impl Fn(R) -> R) -> Result<Self> {
        let grid = uniform_grid(n);
        let values = grid.iter().map(|&q| f(q)).collect();
        InterimCurve::new(grid, values)
    }

    pub fn grid(&self) -> &[R] {
        &self.grid
    }

    pub fn values(&self) -> &[R] {
        &self.values
    }

    pub fn eval(&self, q: R) -> R {
        let g = &self.grid;
        if q <= g[0] {
            return self.values[0];
        }
        let last = g.len() - 1;
        if q >= g[last] {
            return self.values[last];
        }
        let i = segment_index(g, q);
        let t = (q - g[i]) / (g[i + 1] - g[i]);
        self.values[i] + t * (self.values[i + 1] - self.values[i])
    }

    /// `P(q) = int_q^1 xhat(t) dt`; exact for the piecewise-linear curve.
    pub fn tail_integral(&self, q: R) -> R {
        let g = &self.grid;
        if q <= g[0] {
            return self.tails[0];
        }
        let last = g.len() - 1;
        if q >= g[last] {
            return R::zero();
        }
        let i = segment_index(g, q);
        let v_q = self.eval(q);
        let seg = (g[i + 1] - q) * (v_q + self.values[i + 1]) / R::of(2.0);
        seg + self.tails[i + 1]
    }

    /// Total allocation mass `int_0^1 xhat`.
    pub fn mass(&self) -> R {
        self.tails[0]
    }

    /// Largest knot spacing; drives tightness tolerances.
    pub fn max_step(&self) -> R {
        self.grid
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(R::zero(), |a, b| a.max(b))
    }

    /// Pointwise scaling by `c` in [0, 1].
    pub fn scaled(&self, c: R) -> Self {
        let values: Vec<R> = self.values.iter().map(|&v| v * c).collect();
        let tails = tail_table(&self.grid, &values);
        InterimCurve {
            grid: self.grid.clone(),
            values,
            tails,
        }
    }
}

fn segment_index<R: Real>(grid: &[R], q: R) -> usize {
    let mut lo = 0;
    let mut hi = grid.len() - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if grid[mid] <= q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn tail_table<R: Real>(grid: &[R], values: &[R]) -> Vec<R> {
    let n = grid.len();
    let mut tails = vec![R::zero(); n];
    for i in (0..n - 1).rev() {
        let seg = (grid[i + 1] - grid[i]) * (values[i] + values[i + 1]) / R::of(2.0);
        tails[i] = tails[i + 1] + seg;
    }
    tails
}

pub fn uniform_grid<R: Real>(n_intervals: usize) -> Vec<R> {
    let n = n_intervals.max(1);
    (0..=n).map(|j| R::of_usize(j) / R::of_usize(n)).collect()
}

/// Parse `{"grid":[...],"values":[[...],[...]]}` into one curve per row.
pub fn curves_from_json_value<R: Real>(v: &Value) -> Result<Vec<InterimCurve<R>>> {
    let grid: Vec<R> = json_numbers(v, "grid")?;
    let rows = v
        .get("values")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Config("missing or non-array field `values`".into()))?;
    rows.iter()
        .map(|row| {
            let vals: Vec<R> = row
                .as_array()
                .ok_or_else(|| Error::Config("`values` must be an array of arrays".into()))?
                .iter()
                .map(|x| {
                    x.as_f64()
                        .map(R::of)
                        .ok_or_else(|| Error::Config("non-numeric entry in `values`".into()))
                })
                .collect::<Result<_>>()?;
            InterimCurve::new(grid.clone(), vals)
        })
        .collect()
}

fn json_numbers<R: Real>(v: &Value, field: &str) -> Result<Vec<R>> {
    v.get(field)
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Config(format!("missing or non-array field `{field}`")))?
        .iter()
        .map(|x| {
            x.as_f64()
                .map(R::of)
                .ok_or_else(|| Error::Config(format!("non-numeric entry in `{field}`")))
        })
        .collect()
}

pub const BORDER_FEAS_TOL: f64 = 1e-9;

/// Outcome of a Border feasibility check. Thresholds are quantile profiles;
/// the symmetric check uses singletons.
#[derive(Debug, Clone, serde::Serialize)]
pub struct BorderReport<R> {
    pub feasible: bool,
    pub worst_threshold: Vec<R>,
    pub lhs: R,
    pub rhs: R,
    pub tight_set: Vec<Vec<R>>,
}

/// Symmetric Border check: `int_q^1 xhat <= (1 - q^n)/n` at every knot.
/// Tightness is classified against `tight_tol`, defaulting to the squared
/// knot spacing (the quadrature error scale). Feasibility gets the same
/// slack: sampling a convex allocation onto a piecewise-linear curve
/// overshoots the bound by O(step^2), which is representation error, not a
/// violation.
pub fn border_check_symmetric<R: Real>(
    curve: &InterimCurve<R>,
    n: usize,
    tight_tol: Option<R>,
) -> BorderReport<R> {
    let step = curve.max_step();
    let tol = (step * step).max(R::of(BORDER_FEAS_TOL));
    let tight = tight_tol.unwrap_or(tol);
    let nr = R::of_usize(n.max(1));
    let mut worst: Option<(R, R, R, R)> = None; // margin, q, lhs, rhs
    let mut tight_set = Vec::new();
    for (j, &q) in curve.grid().iter().enumerate() {
        let lhs = curve.tails[j];
        let rhs = (R::one() - q.powi(n as i32)) / nr;
        let margin = lhs - rhs;
        if worst.as_ref().is_none_or(|w| margin > w.0) {
            worst = Some((margin, q, lhs, rhs));
        }
        if margin.abs() <= tight {
            tight_set.push(vec![q]);
        }
    }
    let (margin, q, lhs, rhs) = worst.expect("curve has knots");
    BorderReport {
        feasible: margin <= tol,
        worst_threshold: vec![q],
        lhs,
        rhs,
        tight_set,
    }
}

const LATTICE_CAP: usize = 20_000_000;

/// Asymmetric Border check on a threshold lattice:
/// `sum_i int_{q_i}^1 xhat_i <= 1 - prod_i q_i` in quantile space. The
/// lattice is the tensor grid of each curve's knots plus a uniform
/// refinement of the given resolution.
pub fn border_check_asymmetric<R: Real>(
    curves: &[InterimCurve<R>],
    resolution: usize,
) -> Result<BorderReport<R>> {
    if resolution == 0 {
        return Err(Error::InvalidInput(
            "lattice resolution must be positive".into(),
        ));
    }
    if curves.is_empty() {
        return Err(Error::InvalidInput("need at least one curve".into()));
    }
    let axes: Vec<Vec<R>> = curves
        .iter()
        .map(|c| {
            let mut axis: Vec<R> = c.grid().to_vec();
            axis.extend(uniform_grid::<R>(resolution));
            axis.sort_by(|a, b| a.partial_cmp(b).unwrap());
            axis.dedup();
            axis
        })
        .collect();
    let total: usize = axes.iter().map(Vec::len).product();
    if total > LATTICE_CAP {
        return Err(Error::Resource(format!(
            "threshold lattice has {total} points, cap is {LATTICE_CAP}"
        )));
    }
    let tails: Vec<Vec<R>> = axes
        .iter()
        .zip(curves)
        .map(|(axis, c)| axis.iter().map(|&q| c.tail_integral(q)).collect())
        .collect();

    let max_step = curves
        .iter()
        .map(InterimCurve::max_step)
        .fold(R::zero(), |a, b| a.max(b));
    let tol = (max_step * max_step).max(R::of(BORDER_FEAS_TOL));
    let tight = tol;

    let n = curves.len();
    let mut idx = vec![0usize; n];
    let mut worst: Option<(R, Vec<R>, R, R)> = None;
    let mut tight_set = Vec::new();
    loop {
        let mut lhs = R::zero();
        let mut rhs_prod = R::one();
        for i in 0..n {
            lhs = lhs + tails[i][idx[i]];
            rhs_prod = rhs_prod * axes[i][idx[i]];
        }
        let rhs = R::one() - rhs_prod;
        let margin = lhs - rhs;
        if worst.as_ref().is_none_or(|w| margin > w.0) {
            let profile: Vec<R> = (0..n).map(|i| axes[i][idx[i]]).collect();
            worst = Some((margin, profile, lhs, rhs));
        }
        if margin.abs() <= tight {
            tight_set.push((0..n).map(|i| axes[i][idx[i]]).collect());
        }
        // odometer over the lattice
        let mut i = 0;
        loop {
            idx[i] += 1;
            if idx[i] < axes[i].len() {
                break;
            }
            idx[i] = 0;
            i += 1;
            if i == n {
                let (margin, profile, lhs, rhs) = worst.expect("lattice nonempty");
                return Ok(BorderReport {
                    feasible: margin <= tol,
                    worst_threshold: profile,
                    lhs,
                    rhs,
                    tight_set,
                });
            }
        }
    }
}

/// (revenue, welfare) of a profile of interim curves.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct RevWel<R> {
    pub rev: R,
    pub wel: R,
    /// Set when the model is unbounded with a divergent mean (power law with
    /// alpha <= 1): the integrals were computed on the truncated grid.
    pub truncated: bool,
}

/// `WEL = sum_i int v xhat_i dq`, `REV = sum_i int phihat xhat_i dq` by
/// composite trapezoid on each curve's own grid refined to [`QUAD_GRID`].
pub fn rev_wel_from_curve<R: Real>(
    model: &QuantileModel<R>,
    curves: &[InterimCurve<R>],
) -> Result<RevWel<R>> {
    let models: Vec<&QuantileModel<R>> = curves.iter().map(|_| model).collect();
    rev_wel_per_model(&models, curves)
}

/// Per-buyer models variant of [`rev_wel_from_curve`].
pub fn rev_wel_per_model<R: Real>(
    models: &[&QuantileModel<R>],
    curves: &[InterimCurve<R>],
) -> Result<RevWel<R>> {
    if models.len() != curves.len() {
        return Err(Error::InvalidInput("one model per curve required".into()));
    }
    let mut rev = R::zero();
    let mut wel = R::zero();
    let mut truncated = false;
    for (model, curve) in models.iter().zip(curves) {
        let grid = quad_grid(model, curve);
        truncated |= conditionally_convergent(model);
        let mut prev: Option<(R, R, R)> = None; // q, v*x, phi*x
        for &q in &grid {
            let x = curve.eval(q);
            let fv = model.value(q)? * x;
            let fr = model.virtual_q(q)? * x;
            if let Some((q0, fv0, fr0)) = prev {
                let w = (q - q0) / R::of(2.0);
                wel = wel + w * (fv0 + fv);
                rev = rev + w * (fr0 + fr);
            }
            prev = Some((q, fv, fr));
        }
    }
    Ok(RevWel {
        rev,
        wel,
        truncated,
    })
}

fn conditionally_convergent<R: Real>(model: &QuantileModel<R>) -> bool {
    matches!(model, QuantileModel::PowerLaw { alpha } if *alpha <= R::one())
}

/// Curve knots merged with a uniform refinement; unbounded models stop at
/// `1 - 1/(2 * QUAD_GRID)` instead of the pole.
fn quad_grid<R: Real>(model: &QuantileModel<R>, curve: &InterimCurve<R>) -> Vec<R> {
    let mut grid: Vec<R> = curve.grid().to_vec();
    grid.extend(uniform_grid::<R>(QUAD_GRID));
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();
    if model.has_pole_at_one() {
        let cut = R::one() - R::one() / R::of_usize(2 * QUAD_GRID);
        grid.retain(|&q| q <= cut);
        if *grid.last().unwrap() < cut {
            grid.push(cut);
        }
    }
    grid
}

pub const SUM_EQUAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct SumEqualReport<R> {
    pub sums_equal: bool,
    pub rev_delta: R,
    pub wel_delta: R,
}

/// Compare two profiles with the same grid: if the per-quantile totals
/// coincide, revenue and welfare coincide.
pub fn sum_equal_rev_wel<R: Real>(
    model: &QuantileModel<R>,
    curves_a: &[InterimCurve<R>],
    curves_b: &[InterimCurve<R>],
) -> Result<SumEqualReport<R>> {
    let grid = curves_a
        .first()
        .ok_or_else(|| Error::InvalidInput("empty curve profile".into()))?
        .grid();
    for c in curves_a.iter().chain(curves_b) {
        if c.grid() != grid {
            return Err(Error::GridMismatch("all curves must share one grid".into()));
        }
    }
    let tol = R::of(SUM_EQUAL_TOL);
    let mut sums_equal = true;
    for j in 0..grid.len() {
        let sa = curves_a.iter().fold(R::zero(), |a, c| a + c.values()[j]);
        let sb = curves_b.iter().fold(R::zero(), |a, c| a + c.values()[j]);
        if (sa - sb).abs() > tol {
            sums_equal = false;
            break;
        }
    }
    let a = rev_wel_from_curve(model, curves_a)?;
    let b = rev_wel_from_curve(model, curves_b)?;
    Ok(SumEqualReport {
        sums_equal,
        rev_delta: a.rev - b.rev,
        wel_delta: a.wel - b.wel,
    })
}
