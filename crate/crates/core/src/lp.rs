//! Dense tableau simplex over an ordered field.
//!
//! Used as the independent oracle for the incentive-compatible payment
//! programs (exact, over rationals) and as the solver for the discretized
//! boundary problem (floats). Problems here stay small (≤ a few hundred
//! variables), so a dense two-phase tableau is the right tool: zero
//! dependencies and reproducible pivots.
//!
//! Pivot rule: Dantzig (most positive reduced cost, ties to the lowest
//! column index) with a permanent switch to Bland's rule after a stretch of
//! degenerate pivots, which guarantees termination.

use crate::error::{Error, Result};
use crate::num::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Constraint<T> {
    pub coeffs: Vec<T>,
    pub rel: Rel,
    pub rhs: T,
}

/// A dense linear program. Variable bounds are optional on both sides;
/// unbounded variables are split internally.
#[derive(Debug, Clone)]
pub struct LpProblem<T> {
    pub sense: Sense,
    pub objective: Vec<T>,
    pub constraints: Vec<Constraint<T>>,
    pub bounds: Vec<(Option<T>, Option<T>)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution<T> {
    pub status: LpStatus,
    pub values: Vec<T>,
    pub objective_value: T,
}

impl<T: Scalar> LpProblem<T> {
    /// A problem with all variables free; add rows and bounds afterwards.
    pub fn new(sense: Sense, objective: Vec<T>) -> Self {
        let n = objective.len();
        LpProblem {
            sense,
            objective,
            constraints: Vec::new(),
            bounds: vec![(None, None); n],
        }
    }

    pub fn constrain(&mut self, coeffs: Vec<T>, rel: Rel, rhs: T) {
        self.constraints.push(Constraint { coeffs, rel, rhs });
    }

    pub fn set_bounds(&mut self, var: usize, lower: Option<T>, upper: Option<T>) {
        self.bounds[var] = (lower, upper);
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.bounds.len() != n {
            return Err(Error::InvalidInput(format!(
                "bounds length {} does not match {} variables",
                self.bounds.len(),
                n
            )));
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return Err(Error::InvalidInput(format!(
                    "constraint {i} has width {}, expected {n}",
                    c.coeffs.len()
                )));
            }
        }
        Ok(())
    }

    /// Objective value of an assignment (original sense).
    pub fn objective_of(&self, x: &[T]) -> T {
        let mut acc = T::zero();
        for (c, v) in self.objective.iter().zip(x) {
            acc = acc + c.clone() * v.clone();
        }
        acc
    }

    /// Whether `x` satisfies every constraint and bound within `tol`.
    pub fn is_feasible(&self, x: &[T], tol: &T) -> bool {
        for c in &self.constraints {
            let mut lhs = T::zero();
            for (a, v) in c.coeffs.iter().zip(x) {
                lhs = lhs + a.clone() * v.clone();
            }
            let diff = lhs - c.rhs.clone();
            let ok = match c.rel {
                Rel::Le => diff <= tol.clone(),
                Rel::Ge => diff >= -tol.clone(),
                Rel::Eq => diff.abs() <= tol.clone(),
            };
            if !ok {
                return false;
            }
        }
        for ((lo, hi), v) in self.bounds.iter().zip(x) {
            if let Some(l) = lo {
                if v.clone() < l.clone() - tol.clone() {
                    return false;
                }
            }
            if let Some(h) = hi {
                if v.clone() > h.clone() + tol.clone() {
                    return false;
                }
            }
        }
        true
    }
}

/// How an original variable maps onto nonnegative standard-form variables.
enum ColMap<T> {
    /// x = shift + y
    Shift { col: usize, shift: T },
    /// x = shift - y
    NegShift { col: usize, shift: T },
    /// x = y_pos - y_neg
    Split { pos: usize, neg: usize },
}

/// Solve the program. Exact over rationals; tolerance [`Scalar::feas_tol`]
/// over floats. Equality rows are split into two inequalities in float mode
/// and kept as-is in exact mode.
pub fn solve<T: Scalar>(problem: &LpProblem<T>) -> Result<LpSolution<T>> {
    problem.validate()?;
    let n = problem.num_vars();
    let tol = T::feas_tol();

    // Map variables to nonnegative standard columns.
    let mut col_maps: Vec<ColMap<T>> = Vec::with_capacity(n);
    let mut extra_rows: Vec<Constraint<T>> = Vec::new();
    let mut nstd = 0usize;
    for (j, (lo, hi)) in problem.bounds.iter().enumerate() {
        match (lo, hi) {
            (Some(l), Some(h)) => {
                if h < l {
                    return Ok(LpSolution {
                        status: LpStatus::Infeasible,
                        values: Vec::new(),
                        objective_value: T::zero(),
                    });
                }
                // y <= h - l, emitted as a row on the original variable.
                let mut coeffs = vec![T::zero(); n];
                coeffs[j] = T::one();
                extra_rows.push(Constraint {
                    coeffs,
                    rel: Rel::Le,
                    rhs: h.clone(),
                });
                col_maps.push(ColMap::Shift {
                    col: nstd,
                    shift: l.clone(),
                });
                nstd += 1;
            }
            (Some(l), None) => {
                col_maps.push(ColMap::Shift {
                    col: nstd,
                    shift: l.clone(),
                });
                nstd += 1;
            }
            (None, Some(h)) => {
                col_maps.push(ColMap::NegShift {
                    col: nstd,
                    shift: h.clone(),
                });
                nstd += 1;
            }
            (None, None) => {
                col_maps.push(ColMap::Split {
                    pos: nstd,
                    neg: nstd + 1,
                });
                nstd += 2;
            }
        }
    }

    // Gather rows, splitting equalities in float mode.
    let mut rows: Vec<(Vec<T>, Rel, T)> = Vec::new();
    for c in problem.constraints.iter().chain(extra_rows.iter()) {
        if !T::EXACT && c.rel == Rel::Eq {
            rows.push((c.coeffs.clone(), Rel::Le, c.rhs.clone()));
            rows.push((c.coeffs.clone(), Rel::Ge, c.rhs.clone()));
        } else {
            rows.push((c.coeffs.clone(), c.rel, c.rhs.clone()));
        }
    }

    let m = rows.len();
    let nslack = rows.iter().filter(|(_, rel, _)| *rel != Rel::Eq).count();
    // Worst case one artificial per row; unused ones are dropped below.
    let width = nstd + nslack + m + 1; // +1 for rhs
    let rhs_col = width - 1;

    let mut tab: Vec<Vec<T>> = Vec::with_capacity(m);
    let mut basis: Vec<usize> = Vec::with_capacity(m);
    let artificial_start = nstd + nslack;
    let mut n_art = 0usize;

    let mut slack_cursor = nstd;
    for (coeffs, rel, rhs) in &rows {
        let mut row = vec![T::zero(); width];
        let mut b = rhs.clone();
        for (j, a) in coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            match &col_maps[j] {
                ColMap::Shift { col, shift } => {
                    row[*col] = row[*col].clone() + a.clone();
                    b = b - a.clone() * shift.clone();
                }
                ColMap::NegShift { col, shift } => {
                    row[*col] = row[*col].clone() - a.clone();
                    b = b - a.clone() * shift.clone();
                }
                ColMap::Split { pos, neg } => {
                    row[*pos] = row[*pos].clone() + a.clone();
                    row[*neg] = row[*neg].clone() - a.clone();
                }
            }
        }
        let slack_sign = match rel {
            Rel::Le => Some(T::one()),
            Rel::Ge => Some(-T::one()),
            Rel::Eq => None,
        };
        let slack_col = slack_sign.map(|s| {
            let col = slack_cursor;
            slack_cursor += 1;
            row[col] = s;
            col
        });
        let negate = b < T::zero();
        if negate {
            for v in row.iter_mut() {
                *v = -v.clone();
            }
            b = -b;
        }
        row[rhs_col] = b.clone();
        // A +1 slack in a nonnegative row can start basic; otherwise add an
        // artificial variable.
        let basic = match slack_col {
            Some(col) if row[col] == T::one() => col,
            _ => {
                let col = artificial_start + n_art;
                n_art += 1;
                row[col] = T::one();
                col
            }
        };
        basis.push(basic);
        tab.push(row);
    }
    let n_art_total = n_art;
    let art_range = artificial_start..artificial_start + n_art_total;

    let mut st = Tableau {
        tab,
        basis,
        rhs_col,
        allowed_cols: nstd + nslack,
        tol: tol.clone(),
    };

    // Phase 1: drive artificials to zero.
    if n_art_total > 0 {
        let mut cost = vec![T::zero(); width];
        for c in art_range.clone() {
            cost[c] = -T::one();
        }
        st.allowed_cols = artificial_start + n_art_total;
        let status = st.run(&cost)?;
        if status == LoopStatus::Unbounded {
            return Err(Error::Internal("phase-1 objective unbounded".into()));
        }
        let mut infeas = T::zero();
        for (r, b) in st.basis.iter().zip(st.tab.iter()) {
            if art_range.contains(r) {
                infeas = infeas + b[st.rhs_col].clone();
            }
        }
        let infeas_tol = if T::EXACT { T::zero() } else { T::feas_tol() };
        if infeas > infeas_tol {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                values: Vec::new(),
                objective_value: T::zero(),
            });
        }
        // Pivot remaining zero-level artificials out; drop redundant rows.
        let mut r = 0;
        while r < st.tab.len() {
            if art_range.contains(&st.basis[r]) {
                let piv = (0..artificial_start).find(|&j| st.tab[r][j].clone().abs() > tol.clone());
                match piv {
                    Some(j) => st.pivot(r, j),
                    None => {
                        st.tab.remove(r);
                        st.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
    }

    // Phase 2: the real objective over standard columns.
    let mut cost = vec![T::zero(); width];
    let minimize = problem.sense == Sense::Min;
    for (j, c) in problem.objective.iter().enumerate() {
        let c = if minimize { -c.clone() } else { c.clone() };
        match &col_maps[j] {
            ColMap::Shift { col, .. } => cost[*col] = cost[*col].clone() + c,
            ColMap::NegShift { col, .. } => cost[*col] = cost[*col].clone() - c,
            ColMap::Split { pos, neg } => {
                cost[*pos] = cost[*pos].clone() + c.clone();
                cost[*neg] = cost[*neg].clone() - c;
            }
        }
    }
    st.allowed_cols = artificial_start; // artificials may not re-enter
    let status = st.run(&cost)?;
    if status == LoopStatus::Unbounded {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            values: Vec::new(),
            objective_value: T::zero(),
        });
    }

    // Recover original variables.
    let mut std_vals = vec![T::zero(); width - 1];
    for (r, &b) in st.basis.iter().enumerate() {
        std_vals[b] = st.tab[r][st.rhs_col].clone();
    }
    let values: Vec<T> = col_maps
        .iter()
        .map(|cm| match cm {
            ColMap::Shift { col, shift } => shift.clone() + std_vals[*col].clone(),
            ColMap::NegShift { col, shift } => shift.clone() - std_vals[*col].clone(),
            ColMap::Split { pos, neg } => std_vals[*pos].clone() - std_vals[*neg].clone(),
        })
        .collect();
    let objective_value = problem.objective_of(&values);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        values,
        objective_value,
    })
}

#[derive(PartialEq, Eq)]
enum LoopStatus {
    Optimal,
    Unbounded,
}

struct Tableau<T> {
    tab: Vec<Vec<T>>,
    basis: Vec<usize>,
    rhs_col: usize,
    /// Columns eligible to enter the basis (prefix of the tableau).
    allowed_cols: usize,
    tol: T,
}

impl<T: Scalar> Tableau<T> {
    fn pivot(&mut self, r: usize, c: usize) {
        let piv = self.tab[r][c].clone();
        for v in self.tab[r].iter_mut() {
            *v = v.clone() / piv.clone();
        }
        let pivot_row = self.tab[r].clone();
        for (i, row) in self.tab.iter_mut().enumerate() {
            if i == r || row[c].is_zero() {
                continue;
            }
            let factor = row[c].clone();
            for (v, p) in row.iter_mut().zip(pivot_row.iter()) {
                *v = v.clone() - factor.clone() * p.clone();
            }
            row[c] = T::zero();
        }
        self.basis[r] = c;
    }

    /// Maximize `cost` from the current basis. Reduced costs are carried in
    /// an explicit row updated by the same pivots as the tableau.
    fn run(&mut self, cost: &[T]) -> Result<LoopStatus> {
        let width = self.rhs_col + 1;
        let mut obj = cost.to_vec();
        obj[self.rhs_col] = T::zero();
        for (r, &b) in self.basis.iter().enumerate() {
            if !cost[b].is_zero() {
                let f = cost[b].clone();
                for (o, v) in obj.iter_mut().zip(self.tab[r].iter()) {
                    *o = o.clone() - f.clone() * v.clone();
                }
            }
        }

        let stall_limit = 2 * (self.tab.len() + width) + 16;
        let mut stalled = 0usize;
        let mut bland = false;
        for _ in 0..200_000 {
            let entering = if bland {
                (0..self.allowed_cols).find(|&j| obj[j] > self.tol)
            } else {
                let mut best: Option<usize> = None;
                for j in 0..self.allowed_cols {
                    if obj[j] > self.tol && best.is_none_or(|b| obj[j] > obj[b]) {
                        best = Some(j);
                    }
                }
                best
            };
            let Some(c) = entering else {
                return Ok(LoopStatus::Optimal);
            };
            let mut leaving: Option<(usize, T)> = None;
            for r in 0..self.tab.len() {
                if self.tab[r][c] <= self.tol {
                    continue;
                }
                let ratio = self.tab[r][self.rhs_col].clone() / self.tab[r][c].clone();
                let better = match &leaving {
                    None => true,
                    Some((lr, lratio)) => {
                        ratio < *lratio || (ratio == *lratio && self.basis[r] < self.basis[*lr])
                    }
                };
                if better {
                    leaving = Some((r, ratio));
                }
            }
            let Some((r, ratio)) = leaving else {
                return Ok(LoopStatus::Unbounded);
            };
            if ratio.is_zero() {
                stalled += 1;
                if stalled > stall_limit {
                    bland = true;
                }
            } else {
                stalled = 0;
            }
            self.pivot(r, c);
            let factor = obj[c].clone();
            if !factor.is_zero() {
                let pr = &self.tab[r];
                for (o, v) in obj.iter_mut().zip(pr.iter()) {
                    *o = o.clone() - factor.clone() * v.clone();
                }
                obj[c] = T::zero();
            }
        }
        Err(Error::Internal("simplex iteration limit reached".into()))
    }
}
