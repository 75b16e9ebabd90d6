//! Discretized fixed-welfare revenue boundary problem.
//!
//! Variables are the cumulative tail values `P(q_j)` on a uniform grid.
//! The objective is `n phihat(0) P(0) + n sum_j w_j phihat'(q_j) P(q_j)`
//! with trapezoid weights; constraints pin welfare to `c` (within a small
//! band, see below), keep `P` under the Border bound, nonincreasing,
//! concave, and zero at 1.
//!
//! The welfare constraint is a two-sided band `|welfare - c| <= eps_w`
//! rather than a hard equality: the discrete trapezoid welfare of the
//! efficient auction sits a hair below the continuous maximum, and an exact
//! equality would spuriously reject boundary welfare levels.

use rayon::prelude::*;

use super::{fit_piecewise, FitResult, PiecewiseAuction};
use crate::error::{Error, Result};
use crate::lp::{solve, LpProblem, LpStatus, Rel, Sense};
use crate::num::Real;
use crate::priors::{check_condition1, QuantileModel};
use crate::reduced_form::uniform_grid;

pub const DEFAULT_GRID_N: usize = 200;

/// Relative half-width floor of the welfare band; the actual band adds the
/// squared grid step so that the trapezoid error of the efficient curve
/// never pushes boundary welfare levels out of the feasible set.
pub const WELFARE_BAND: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct Objective2Solution<R> {
    pub status: LpStatus,
    pub grid: Vec<R>,
    /// Optimal `P(q_j)`; empty unless optimal.
    pub p: Vec<R>,
    pub objective: R,
}

/// Solve the discretized boundary problem at welfare level `c`.
///
/// Runs two LP stages. The first optimizes revenue. When the virtual value
/// is affine (uniform priors), the optimum is attained on a whole face and
/// an arbitrary vertex need not look piecewise, so a second stage pins the
/// optimal revenue and pushes the first moment of `P` (leftward for max,
/// rightward for min), selecting the stochastic-order-extremal solution.
pub fn objective2_solve<R: Real>(
    model: &QuantileModel<R>,
    n: usize,
    c: R,
    sense: Sense,
    grid_n: usize,
) -> Result<Objective2Solution<R>> {
    if grid_n < 8 {
        return Err(Error::InvalidInput(
            "objective grid needs at least 8 intervals".into(),
        ));
    }
    let grid: Vec<R> = uniform_grid(grid_n);
    let nv = grid.len();
    let nr = R::of_usize(n);
    let dq = R::one() / R::of_usize(grid_n);

    // trapezoid weights; the j = N coefficient is irrelevant since P(1) = 0
    let weight = |j: usize| {
        if j == 0 || j == nv - 1 {
            dq / R::of(2.0)
        } else {
            dq
        }
    };

    let mut objective = vec![R::zero(); nv];
    let mut welfare_row = vec![R::zero(); nv];
    for j in 0..nv - 1 {
        let q = grid[j];
        objective[j] = nr * weight(j) * model.virtual_q_d1(q)?;
        welfare_row[j] = nr * weight(j) * model.deriv(q)?;
    }
    objective[0] = objective[0] + nr * model.virtual_q(R::zero())?;

    let mut lp = LpProblem::new(sense, objective.clone());
    for (j, &q) in grid.iter().enumerate() {
        let bound = (R::one() - q.powi(n as i32)) / nr;
        lp.set_bounds(j, Some(R::zero()), Some(bound));
    }
    lp.set_bounds(nv - 1, Some(R::zero()), Some(R::zero())); // P(1) = 0

    let eps = (R::of(WELFARE_BAND) + dq * dq) * (R::one() + c.abs());
    lp.constrain(welfare_row.clone(), Rel::Le, c + eps);
    lp.constrain(welfare_row, Rel::Ge, c - eps);

    // first differences <= 0
    for j in 0..nv - 1 {
        let mut row = vec![R::zero(); nv];
        row[j + 1] = R::one();
        row[j] = -R::one();
        lp.constrain(row, Rel::Le, R::zero());
    }
    // second differences <= 0
    for j in 1..nv - 1 {
        let mut row = vec![R::zero(); nv];
        row[j - 1] = R::one();
        row[j] = -R::of(2.0);
        row[j + 1] = R::one();
        lp.constrain(row, Rel::Le, R::zero());
    }

    let stage1 = solve(&lp)?;
    if stage1.status != LpStatus::Optimal {
        return Ok(Objective2Solution {
            status: stage1.status,
            p: Vec::new(),
            grid,
            objective: stage1.objective_value,
        });
    }
    let best = stage1.objective_value;

    // stage 2: same feasible set, revenue pinned, extremal first moment
    let mut lp2 = lp.clone();
    let pin = R::of(1e-9) * (R::one() + best.abs());
    lp2.constrain(objective.clone(), Rel::Le, best + pin);
    lp2.constrain(objective.clone(), Rel::Ge, best - pin);
    let moment: Vec<R> = grid
        .iter()
        .enumerate()
        .map(|(j, &q)| weight(j) * q)
        .collect();
    lp2.objective = moment;
    lp2.sense = match sense {
        Sense::Max => Sense::Min,
        Sense::Min => Sense::Max,
    };
    let stage2 = solve(&lp2)?;
    let p = if stage2.status == LpStatus::Optimal {
        stage2.values
    } else {
        stage1.values
    };
    let mut rev = R::zero();
    for (cj, pj) in objective.iter().zip(&p) {
        rev = rev + *cj * *pj;
    }
    Ok(Objective2Solution {
        status: LpStatus::Optimal,
        p,
        grid,
        objective: rev,
    })
}

#[derive(Debug, Clone)]
pub struct PairBand<R> {
    pub c: R,
    pub rev_min: R,
    pub rev_max: R,
    pub fit_min: FitResult<R>,
    pub fit_max: FitResult<R>,
}

#[derive(Debug, Clone)]
pub struct PairRegion<R> {
    pub condition1_holds: bool,
    pub bands: Vec<PairBand<R>>,
}

/// Revenue band `[R_min(c), R_max(c)]` across a welfare grid, each endpoint
/// with a fitted piecewise witness. Welfare levels whose program is
/// infeasible are skipped.
pub fn pair_region<R: Real>(
    model: &QuantileModel<R>,
    n: usize,
    welfare_grid: &[R],
    grid_n: usize,
) -> Result<PairRegion<R>> {
    let condition1_holds = check_condition1(model, 256)?.holds;
    let bands: Vec<Option<PairBand<R>>> = welfare_grid
        .par_iter()
        .map(|&c| -> Result<Option<PairBand<R>>> {
            let max = objective2_solve(model, n, c, Sense::Max, grid_n)?;
            let min = objective2_solve(model, n, c, Sense::Min, grid_n)?;
            if max.status != LpStatus::Optimal || min.status != LpStatus::Optimal {
                return Ok(None);
            }
            let fit_max = fit_piecewise(&max.p, &max.grid, n)?;
            let fit_min = fit_piecewise(&min.p, &min.grid, n)?;
            Ok(Some(PairBand {
                c,
                rev_min: min.objective,
                rev_max: max.objective,
                fit_min,
                fit_max,
            }))
        })
        .collect::<Result<_>>()?;
    Ok(PairRegion {
        condition1_holds,
        bands: bands.into_iter().flatten().collect(),
    })
}

/// The discretized revenue functional itself, for apples-to-apples
/// comparisons between a fitted auction and the LP objective.
pub fn discrete_revenue<R: Real>(
    model: &QuantileModel<R>,
    n: usize,
    grid_n: usize,
    pa: &PiecewiseAuction<R>,
) -> Result<R> {
    let grid: Vec<R> = uniform_grid(grid_n);
    let nv = grid.len();
    let nr = R::of_usize(n);
    let dq = R::one() / R::of_usize(grid_n);
    let mut rev = nr * model.virtual_q(R::zero())? * pa.p_of(R::zero());
    for j in 0..nv - 1 {
        let w = if j == 0 { dq / R::of(2.0) } else { dq };
        rev = rev + nr * w * model.virtual_q_d1(grid[j])? * pa.p_of(grid[j]);
    }
    Ok(rev)
}
