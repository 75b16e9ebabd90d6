//! Discrete and continuous priors.
//!
//! Continuous models live in quantile space: `v(q) = F^{-1}(q)` together
//! with its first two derivatives and the quantile-space virtual value
//! `phihat(q) = v(q) - (1-q) v'(q)`. Closed-form families expose exact
//! derivatives; tabulated models use finite differences with step `h`.
//!
//! Support conventions differ per family: the uniform and tabulated
//! families are bounded (quantile 1 is a valid input), the power law lives
//! on [1, inf) with a pole at quantile 1, and evaluation grids stop short
//! of the pole. Downstream functionals flag power-law results with
//! `alpha <= 1` as conditionally convergent.

use serde_json::Value;

use crate::error::{Error, Result};
use crate::num::{Real, Scalar};

/// Finite type space: ascending money values with their probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePrior<T> {
    values: Vec<T>,
    probs: Vec<T>,
}

impl<T: Scalar> DiscretePrior<T> {
    pub fn new(values: Vec<T>, probs: Vec<T>) -> Result<Self> {
        if values.is_empty() || values.len() != probs.len() {
            return Err(Error::InvalidInput(
                "values and probs must be nonempty and of equal length".into(),
            ));
        }
        for w in values.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidInput(
                    "values must be strictly increasing".into(),
                ));
            }
        }
        if values[0] < T::zero() {
            return Err(Error::InvalidInput("values must be nonnegative".into()));
        }
        let mut total = T::zero();
        for p in &probs {
            if *p < T::zero() || *p > T::one() {
                return Err(Error::InvalidInput(
                    "probabilities must lie in [0, 1]".into(),
                ));
            }
            total = total + p.clone();
        }
        let tol = if T::EXACT {
            T::zero()
        } else {
            T::from_ratio(1, 1_000_000_000_000)
        };
        if (total - T::one()).abs() > tol {
            return Err(Error::InvalidInput("probabilities must sum to 1".into()));
        }
        Ok(DiscretePrior { values, probs })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    /// Parse `{"kind":"discrete","values":[...],"probs":[...]}`. Numbers go
    /// through the scalar's decimal parser, so rational mode reads `0.05`
    /// as exactly 1/20.
    pub fn from_json_value(v: &Value) -> Result<Self> {
        let values = scalar_array::<T>(v, "values")?;
        let probs = scalar_array::<T>(v, "probs")?;
        DiscretePrior::new(values, probs)
    }
}

fn scalar_array<T: Scalar>(v: &Value, field: &str) -> Result<Vec<T>> {
    let arr = v
        .get(field)
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Config(format!("missing or non-array field `{field}`")))?;
    arr.iter()
        .map(|x| match x {
            Value::Number(n) => T::from_decimal_str(&n.to_string())
                .ok_or_else(|| Error::Config(format!("unparsable number in `{field}`"))),
            Value::String(s) => T::from_decimal_str(s)
                .ok_or_else(|| Error::Config(format!("unparsable number string in `{field}`"))),
            _ => Err(Error::Config(format!("non-numeric entry in `{field}`"))),
        })
        .collect()
}

/// Continuous atomless prior in quantile space.
#[derive(Debug, Clone, PartialEq)]
pub enum QuantileModel<R> {
    /// Uniform on [0, 1]: `v(q) = q`.
    Uniform,
    /// `F(v) = 1 - v^{-alpha}` on [1, inf); `v(q) = (1-q)^{-1/alpha}`.
    PowerLaw { alpha: R },
    /// Piecewise-linear `v(q)` through the given knots; derivatives by
    /// finite differences with step `h`.
    Table { q: Vec<R>, v: Vec<R>, h: R },
}

pub const DEFAULT_FD_STEP: f64 = 1e-4;

impl<R: Real> QuantileModel<R> {
    pub fn table(q: Vec<R>, v: Vec<R>, h: Option<R>) -> Result<Self> {
        if q.len() < 2 || q.len() != v.len() {
            return Err(Error::InvalidInput(
                "table needs matching q/v arrays of length >= 2".into(),
            ));
        }
        for w in q.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidInput(
                    "table q grid must be strictly increasing".into(),
                ));
            }
        }
        for w in v.windows(2) {
            if w[1] < w[0] {
                return Err(Error::InvalidInput(
                    "table v values must be nondecreasing".into(),
                ));
            }
        }
        let h = h.unwrap_or_else(|| R::of(DEFAULT_FD_STEP));
        if h <= R::zero() {
            return Err(Error::InvalidInput(
                "derivative step h must be positive".into(),
            ));
        }
        Ok(QuantileModel::Table { q, v, h })
    }

    /// Whether `v(q)` blows up as `q -> 1` (unbounded support).
    pub fn has_pole_at_one(&self) -> bool {
        matches!(self, QuantileModel::PowerLaw { .. })
    }

    fn check_domain(&self, q: R) -> Result<()> {
        if q < R::zero() || q > R::one() {
            return Err(Error::Domain(format!(
                "quantile {} outside [0, 1]",
                Scalar::as_f64(&q)
            )));
        }
        if self.has_pole_at_one() && q == R::one() {
            return Err(Error::Domain(
                "q = 1 is a pole for unbounded supports".into(),
            ));
        }
        if let QuantileModel::Table { q: grid, .. } = self {
            if q < grid[0] || q > grid[grid.len() - 1] {
                return Err(Error::Domain("quantile outside the tabulated range".into()));
            }
        }
        Ok(())
    }

    /// `v(q) = F^{-1}(q)`.
    pub fn value(&self, q: R) -> Result<R> {
        self.check_domain(q)?;
        Ok(match self {
            QuantileModel::Uniform => q,
            QuantileModel::PowerLaw { alpha } => (R::one() - q).powf(-R::one() / *alpha),
            QuantileModel::Table { q: grid, v, .. } => interp(grid, v, q),
        })
    }

    /// `v'(q)`.
    pub fn deriv(&self, q: R) -> Result<R> {
        self.check_domain(q)?;
        Ok(match self {
            QuantileModel::Uniform => R::one(),
            QuantileModel::PowerLaw { alpha } => {
                let inv = R::one() / *alpha;
                inv * (R::one() - q).powf(-inv - R::one())
            }
            QuantileModel::Table { .. } => self.fd1(q, |m, x| m.value_unchecked(x))?,
        })
    }

    /// `v''(q)`.
    pub fn deriv2(&self, q: R) -> Result<R> {
        self.check_domain(q)?;
        Ok(match self {
            QuantileModel::Uniform => R::zero(),
            QuantileModel::PowerLaw { alpha } => {
                let inv = R::one() / *alpha;
                inv * (inv + R::one()) * (R::one() - q).powf(-inv - R::of(2.0))
            }
            QuantileModel::Table { .. } => self.fd2(q, |m, x| m.value_unchecked(x))?,
        })
    }

    /// Quantile-space virtual value `phihat(q) = v(q) - (1-q) v'(q)`.
    pub fn virtual_q(&self, q: R) -> Result<R> {
        match self {
            QuantileModel::Uniform => {
                self.check_domain(q)?;
                Ok(R::of(2.0) * q - R::one())
            }
            QuantileModel::PowerLaw { alpha } => {
                self.check_domain(q)?;
                let inv = R::one() / *alpha;
                Ok((R::one() - inv) * (R::one() - q).powf(-inv))
            }
            QuantileModel::Table { .. } => {
                let v = self.value(q)?;
                let dv = self.deriv(q)?;
                Ok(v - (R::one() - q) * dv)
            }
        }
    }

    /// `phihat'(q)`.
    pub fn virtual_q_d1(&self, q: R) -> Result<R> {
        match self {
            QuantileModel::Uniform => {
                self.check_domain(q)?;
                Ok(R::of(2.0))
            }
            QuantileModel::PowerLaw { alpha } => {
                self.check_domain(q)?;
                let inv = R::one() / *alpha;
                Ok((R::one() - inv) * inv * (R::one() - q).powf(-inv - R::one()))
            }
            QuantileModel::Table { .. } => self.fd1(q, |m, x| m.virtual_unchecked(x)),
        }
    }

    /// `phihat''(q)`.
    pub fn virtual_q_d2(&self, q: R) -> Result<R> {
        match self {
            QuantileModel::Uniform => {
                self.check_domain(q)?;
                Ok(R::zero())
            }
            QuantileModel::PowerLaw { alpha } => {
                self.check_domain(q)?;
                let inv = R::one() / *alpha;
                Ok((R::one() - inv)
                    * inv
                    * (inv + R::one())
                    * (R::one() - q).powf(-inv - R::of(2.0)))
            }
            QuantileModel::Table { .. } => self.fd2(q, |m, x| m.virtual_unchecked(x)),
        }
    }

    /// Value-space virtual value `phi(v) = v - (1-F(v))/f(v)`.
    pub fn virtual_value(&self, v: R) -> Result<R> {
        match self {
            QuantileModel::Uniform => Ok(R::of(2.0) * v - R::one()),
            QuantileModel::PowerLaw { alpha } => Ok(v * (R::one() - R::one() / *alpha)),
            QuantileModel::Table {
                q: grid, v: vals, ..
            } => {
                let q = inverse_interp(vals, grid, v)?;
                self.virtual_q(q)
            }
        }
    }

    fn value_unchecked(&self, q: R) -> R {
        match self {
            QuantileModel::Table { q: grid, v, .. } => interp(grid, v, q),
            _ => unreachable!("finite differences are table-only"),
        }
    }

    fn virtual_unchecked(&self, q: R) -> R {
        let v = self.value_unchecked(q);
        // inlined fd1 with clamping, since this feeds another difference
        let dv = self.fd1_raw(q, |m, x| m.value_unchecked(x));
        v - (R::one() - q) * dv
    }

    fn table_range(&self) -> (R, R) {
        match self {
            QuantileModel::Table { q, .. } => (q[0], q[q.len() - 1]),
            _ => (R::zero(), R::one()),
        }
    }

    fn step(&self) -> R {
        match self {
            QuantileModel::Table { h, .. } => *h,
            _ => R::of(DEFAULT_FD_STEP),
        }
    }

    /// Central difference, one-sided at the boundary.
    fn fd1_raw(&self, q: R, f: impl Fn(&Self, R) -> R) -> R {
        let h = self.step();
        let (lo, hi) = self.table_range();
        if q - h >= lo && q + h <= hi {
            (f(self, q + h) - f(self, q - h)) / (R::of(2.0) * h)
        } else if q + h <= hi {
            (f(self, q + h) - f(self, q)) / h
        } else {
            (f(self, q) - f(self, q - h)) / h
        }
    }

    fn fd1(&self, q: R, f: impl Fn(&Self, R) -> R) -> Result<R> {
        let h = self.step();
        let (lo, hi) = self.table_range();
        if hi - lo < R::of(2.0) * h {
            return Err(Error::Domain(
                "table too narrow for the derivative step".into(),
            ));
        }
        Ok(self.fd1_raw(q, f))
    }

    fn fd2(&self, q: R, f: impl Fn(&Self, R) -> R) -> Result<R> {
        let h = self.step();
        let (lo, hi) = self.table_range();
        if hi - lo < R::of(2.0) * h {
            return Err(Error::Domain(
                "table too narrow for the derivative step".into(),
            ));
        }
        let x = if q - h < lo {
            lo + h
        } else if q + h > hi {
            hi - h
        } else {
            q
        };
        Ok((f(self, x + h) - R::of(2.0) * f(self, x) + f(self, x - h)) / (h * h))
    }

    /// Parse `{"kind":"uniform"}`, `{"kind":"powerlaw","alpha":..}` or
    /// `{"kind":"table","q":[..],"v":[..],"h":..}`.
    pub fn from_json_value(val: &Value) -> Result<Self> {
        let kind = val
            .get("kind")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Config("missing string field `kind`".into()))?;
        match kind {
            "uniform" => Ok(QuantileModel::Uniform),
            "powerlaw" => {
                let alpha = val
                    .get("alpha")
                    .and_then(Value::as_f64)
                    .ok_or_else(|| Error::Config("powerlaw requires numeric `alpha`".into()))?;
                if alpha <= 0.0 {
                    return Err(Error::Config("powerlaw `alpha` must be positive".into()));
                }
                Ok(QuantileModel::PowerLaw {
                    alpha: R::of(alpha),
                })
            }
            "table" => {
                let q = scalar_array::<R>(val, "q")?;
                let v = scalar_array::<R>(val, "v")?;
                let h = val.get("h").and_then(Value::as_f64).map(R::of);
                QuantileModel::table(q, v, h)
            }
            other => Err(Error::Config(format!("unknown model kind `{other}`"))),
        }
    }
}

/// Evaluation grid `{j/N : 0 <= j <= N-1}` plus `1 - 1/(2N)`; never touches
/// the `q = 1` pole of unbounded supports.
pub fn eval_grid<R: Real>(n: usize) -> Vec<R> {
    let mut grid: Vec<R> = (0..n).map(|j| R::of_usize(j) / R::of_usize(n)).collect();
    grid.push(R::one() - R::one() / (R::of(2.0) * R::of_usize(n)));
    grid
}

pub const SIGN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, serde::Serialize)]
pub struct Condition1Report<R> {
    pub holds: bool,
    pub worst_q: R,
    /// Largest violation of `v'' >= 0` or `phihat'' <= 0` over the grid;
    /// negative means slack everywhere.
    pub worst_margin: R,
}

/// Check `v''(q) >= 0` and `phihat''(q) <= 0` over the evaluation grid.
pub fn check_condition1<R: Real>(
    model: &QuantileModel<R>,
    grid_size: usize,
) -> Result<Condition1Report<R>> {
    let mut worst_q = R::zero();
    let mut worst = R::neg_infinity();
    for q in eval_grid::<R>(grid_size.max(1)) {
        let d2v = model.deriv2(q)?;
        let d2phi = model.virtual_q_d2(q)?;
        let violation = (-d2v).max(d2phi);
        if violation > worst {
            worst = violation;
            worst_q = q;
        }
    }
    Ok(Condition1Report {
        holds: worst <= R::of(SIGN_TOL),
        worst_q,
        worst_margin: worst,
    })
}

/// True iff `phihat` is nondecreasing across the evaluation grid
/// (quantile-space regularity).
pub fn check_regular<R: Real>(model: &QuantileModel<R>, grid_size: usize) -> Result<bool> {
    let grid = eval_grid::<R>(grid_size.max(1));
    let mut prev = model.virtual_q(grid[0])?;
    for &q in &grid[1..] {
        let cur = model.virtual_q(q)?;
        if cur < prev - R::of(SIGN_TOL) {
            return Ok(false);
        }
        prev = cur;
    }
    Ok(true)
}

fn interp<R: Real>(grid: &[R], vals: &[R], x: R) -> R {
    if x <= grid[0] {
        return vals[0];
    }
    let last = grid.len() - 1;
    if x >= grid[last] {
        return vals[last];
    }
    let mut lo = 0;
    let mut hi = last;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if grid[mid] <= x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = (x - grid[lo]) / (grid[hi] - grid[lo]);
    vals[lo] + t * (vals[hi] - vals[lo])
}

/// Invert a nondecreasing table; flats resolve to their left edge.
fn inverse_interp<R: Real>(vals: &[R], grid: &[R], y: R) -> Result<R> {
    let last = vals.len() - 1;
    if y < vals[0] || y > vals[last] {
        return Err(Error::Domain("value outside the tabulated range".into()));
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
        return Ok(grid[lo]);
    }
    let t = (y - vals[lo]) / (vals[hi] - vals[lo]);
    Ok(grid[lo] + t * (grid[hi] - grid[lo]))
}
