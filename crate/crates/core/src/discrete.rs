//! Deterministic mechanisms over discrete i.i.d. priors: exhaustive
//! enumeration of ex-post allocation tables, BIC/DSIC classification,
//! revenue-optimal incentive-compatible payments and the (welfare, revenue)
//! Pareto frontier.
//!
//! Everything here is generic over the scalar; run it over [`crate::Rational`]
//! and the frontier coordinates are exact.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lp::{LpProblem, LpStatus, Rel, Sense};
use crate::num::Scalar;
use crate::priors::DiscretePrior;

/// Deterministic ex-post winner map over the profile grid `{0..m-1}^n`.
/// Entry 0 means the seller keeps the item; `i in 1..=n` means buyer `i`.
///
/// Profiles are indexed row-major with buyer 1 slowest: profile
/// `(k_1, ..., k_n)` lives at `((k_1 * m + k_2) * m + ...) + k_n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocationTable {
    pub n: usize,
    pub m: usize,
    pub winner: Vec<u8>,
}

impl AllocationTable {
    pub fn new(n: usize, m: usize, winner: Vec<u8>) -> Result<Self> {
        let expect = m.checked_pow(n as u32).ok_or_else(|| {
            Error::Resource(format!("profile grid m^n overflows for m={m}, n={n}"))
        })?;
        if winner.len() != expect {
            return Err(Error::InvalidInput(format!(
                "winner array has length {}, expected m^n = {expect}",
                winner.len()
            )));
        }
        if winner.iter().any(|&w| w as usize > n) {
            return Err(Error::InvalidInput(
                "winner entries must lie in 0..=n".into(),
            ));
        }
        Ok(AllocationTable { n, m, winner })
    }

    /// Decode a table from its base-(n+1) integer code; profile 0 is the
    /// least significant digit.
    pub fn from_code(n: usize, m: usize, code: u64) -> Self {
        let profiles = m.pow(n as u32);
        let base = (n + 1) as u64;
        let mut winner = Vec::with_capacity(profiles);
        let mut c = code;
        for _ in 0..profiles {
            winner.push((c % base) as u8);
            c /= base;
        }
        AllocationTable { n, m, winner }
    }

    pub fn code(&self) -> u64 {
        let base = (self.n + 1) as u64;
        let mut code = 0u64;
        for &w in self.winner.iter().rev() {
            code = code * base + w as u64;
        }
        code
    }

    fn profile_digits(&self, mut idx: usize) -> Vec<usize> {
        let mut digits = vec![0usize; self.n];
        for d in digits.iter_mut().rev() {
            *d = idx % self.m;
            idx /= self.m;
        }
        digits
    }

    /// Ex-post monotonicity in each buyer's own report: for every fixed
    /// opponent profile the winner indicator is a threshold in the own type.
    /// This is exactly deterministic DSIC implementability.
    pub fn is_dsic(&self) -> bool {
        let m = self.m;
        for i in 0..self.n {
            let stride = m.pow((self.n - 1 - i) as u32);
            let outer = m.pow(i as u32);
            let inner = stride;
            for o in 0..outer {
                for r in 0..inner {
                    let base = o * stride * m + r;
                    let mut seen_win = false;
                    for k in 0..m {
                        let wins = self.winner[base + k * stride] as usize == i + 1;
                        if seen_win && !wins {
                            return false;
                        }
                        seen_win = wins;
                    }
                }
            }
        }
        true
    }
}

/// Interim allocation of one buyer: win probability per own type, averaged
/// over opponents under the prior.
pub fn interim_alloc_discrete<T: Scalar>(
    prior: &DiscretePrior<T>,
    table: &AllocationTable,
    buyer: usize,
) -> Result<Vec<T>> {
    if prior.len() != table.m {
        return Err(Error::InvalidInput(
            "prior size does not match table type count".into(),
        ));
    }
    if buyer >= table.n {
        return Err(Error::InvalidInput("buyer index out of range".into()));
    }
    let ctx = EnumCtx::new(prior, table.n);
    Ok(ctx.interim(table, buyer))
}

/// Monotone interim allocations characterize BIC allocation rules.
pub fn is_bic_alloc<T: Scalar>(interims: &[Vec<T>]) -> bool {
    interims.iter().all(|x| x.windows(2).all(|w| w[1] >= w[0]))
}

/// Revenue-maximal BIC + IR payments for a monotone interim allocation:
/// `p(t^k) = sum_{j<=k} t^j (x(t^j) - x(t^{j-1}))`, `x(t^0) = 0`.
pub fn optimal_bic_payments<T: Scalar>(prior: &DiscretePrior<T>, interim: &[T]) -> Result<Vec<T>> {
    if interim.len() != prior.len() {
        return Err(Error::InvalidInput("interim vector length mismatch".into()));
    }
    if interim.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput(
            "interim allocation must be nondecreasing".into(),
        ));
    }
    let mut payments = Vec::with_capacity(interim.len());
    let mut prev_x = T::zero();
    let mut acc = T::zero();
    for (t, x) in prior.values().iter().zip(interim) {
        acc = acc + t.clone() * (x.clone() - prev_x.clone());
        prev_x = x.clone();
        payments.push(acc.clone());
    }
    Ok(payments)
}

/// Expected (revenue, welfare) of a mechanism given per-buyer interim
/// allocations and payments.
pub fn rev_wel<T: Scalar>(
    prior: &DiscretePrior<T>,
    interims: &[Vec<T>],
    payments: &[Vec<T>],
) -> (T, T) {
    let mut rev = T::zero();
    let mut wel = T::zero();
    for (x, p) in interims.iter().zip(payments) {
        for ((pi, t), (xi, pay)) in prior
            .probs()
            .iter()
            .zip(prior.values())
            .zip(x.iter().zip(p))
        {
            wel = wel + pi.clone() * t.clone() * xi.clone();
            rev = rev + pi.clone() * pay.clone();
        }
    }
    (rev, wel)
}

/// The explicit BIC + IR payment program; the simplex on this is the
/// independent oracle for [`optimal_bic_payments`].
pub fn bic_payment_lp<T: Scalar>(
    prior: &DiscretePrior<T>,
    interim: &[T],
    sense: Sense,
    nonnegative: bool,
) -> LpProblem<T> {
    let m = prior.len();
    let mut lp = LpProblem::new(sense, prior.probs().to_vec());
    for k in 0..m {
        // IR: t^k x_k - p_k >= 0
        lp.set_bounds(
            k,
            if nonnegative { Some(T::zero()) } else { None },
            Some(prior.values()[k].clone() * interim[k].clone()),
        );
        for j in 0..m {
            if j == k {
                continue;
            }
            // truth-telling beats reporting j: p_j - p_k >= t^k (x_j - x_k)
            let mut coeffs = vec![T::zero(); m];
            coeffs[j] = T::one();
            coeffs[k] = -T::one();
            let rhs = prior.values()[k].clone() * (interim[j].clone() - interim[k].clone());
            lp.constrain(coeffs, Rel::Ge, rhs);
        }
    }
    lp
}

/// Expected-revenue interval over all BIC + IR payment selections with
/// nonnegative payments (without the no-subsidy floor the minimum is
/// unbounded below).
pub fn payment_revenue_interval<T: Scalar>(
    prior: &DiscretePrior<T>,
    table: &AllocationTable,
) -> Result<(T, T)> {
    let ctx = EnumCtx::new(prior, table.n);
    let mut lo = T::zero();
    let mut hi = T::zero();
    for i in 0..table.n {
        let x = ctx.interim(table, i);
        for (sense, acc) in [(Sense::Min, &mut lo), (Sense::Max, &mut hi)] {
            let sol = crate::lp::solve(&bic_payment_lp(prior, &x, sense, true))?;
            if sol.status != LpStatus::Optimal {
                return Err(Error::Internal(format!(
                    "payment program unexpectedly {:?}",
                    sol.status
                )));
            }
            *acc = acc.clone() + sol.objective_value;
        }
    }
    Ok((lo, hi))
}

/// A classified mechanism: table plus everything derived from it.
#[derive(Debug, Clone)]
pub struct DiscreteMechanism<T> {
    pub table: AllocationTable,
    pub bic: bool,
    pub dsic: bool,
    pub interim: Vec<Vec<T>>,
    /// Revenue-maximal BIC payments; absent when the rule is not BIC.
    pub payments: Option<Vec<Vec<T>>>,
    pub rev: Option<T>,
    pub wel: Option<T>,
}

impl<T: Scalar> DiscreteMechanism<T> {
    pub fn build(prior: &DiscretePrior<T>, table: AllocationTable) -> Result<Self> {
        if prior.len() != table.m {
            return Err(Error::InvalidInput(
                "prior size does not match table type count".into(),
            ));
        }
        let ctx = EnumCtx::new(prior, table.n);
        let interim: Vec<Vec<T>> = (0..table.n).map(|i| ctx.interim(&table, i)).collect();
        let bic = is_bic_alloc(&interim);
        let dsic = table.is_dsic();
        let (payments, rev, wel) = if bic {
            let pays: Vec<Vec<T>> = interim
                .iter()
                .map(|x| optimal_bic_payments(prior, x))
                .collect::<Result<_>>()?;
            let (r, w) = rev_wel(prior, &interim, &pays);
            (Some(pays), Some(r), Some(w))
        } else {
            (None, None, None)
        };
        Ok(DiscreteMechanism {
            table,
            bic,
            dsic,
            interim,
            payments,
            rev,
            wel,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IcClass {
    Bic,
    Dsic,
}

/// One undominated (welfare, revenue) point with every table achieving it.
#[derive(Debug, Clone)]
pub struct ParetoPoint<T> {
    pub wel: T,
    pub rev: T,
    pub witnesses: Vec<u64>,
}

pub const DEFAULT_ENUM_CAP: u64 = 100_000_000;

/// Shared context: profile digits and leave-one-out probability products.
struct EnumCtx<T> {
    profiles: usize,
    /// digits[p][i] = type index of buyer i at profile p
    digits: Vec<Vec<usize>>,
    /// wexcl[i][p] = product of opponent probabilities at profile p
    wexcl: Vec<Vec<T>>,
}

impl<T: Scalar> EnumCtx<T> {
    fn new(prior: &DiscretePrior<T>, n: usize) -> Self {
        let m = prior.len();
        let profiles = m.pow(n as u32);
        let template = AllocationTable {
            n,
            m,
            winner: Vec::new(),
        };
        let digits: Vec<Vec<usize>> = (0..profiles).map(|p| template.profile_digits(p)).collect();
        let wexcl = (0..n)
            .map(|i| {
                digits
                    .iter()
                    .map(|d| {
                        let mut w = T::one();
                        for (j, &k) in d.iter().enumerate() {
                            if j != i {
                                w = w * prior.probs()[k].clone();
                            }
                        }
                        w
                    })
                    .collect()
            })
            .collect();
        EnumCtx {
            profiles,
            digits,
            wexcl,
        }
    }

    fn interim(&self, table: &AllocationTable, buyer: usize) -> Vec<T> {
        let mut x = vec![T::zero(); table.m];
        for p in 0..self.profiles {
            if table.winner[p] as usize == buyer + 1 {
                let k = self.digits[p][buyer];
                x[k] = x[k].clone() + self.wexcl[buyer][p].clone();
            }
        }
        x
    }
}

/// Enumerate every deterministic allocation table, keep the requested
/// incentive class, pair each with its revenue-maximal BIC payments, and
/// return the undominated (welfare, revenue) set with all witnesses.
pub fn enumerate_pareto<T: Scalar>(
    prior: &DiscretePrior<T>,
    n: usize,
    class: IcClass,
    cap: u64,
) -> Result<Vec<ParetoPoint<T>>> {
    let m = prior.len();
    let profiles = m
        .checked_pow(n as u32)
        .ok_or_else(|| Error::Resource("profile grid m^n overflows".into()))?;
    let count: u128 = ((n + 1) as u128)
        .checked_pow(profiles as u32)
        .ok_or_else(|| Error::Resource("table count (n+1)^(m^n) overflows".into()))?;
    if count > cap as u128 {
        return Err(Error::Resource(format!(
            "enumeration needs {count} tables, cap is {cap}"
        )));
    }
    let count = count as u64;
    let ctx = EnumCtx::new(prior, n);

    const CHUNK: u64 = 4096;
    let chunks: Vec<(u64, u64)> = (0..count)
        .step_by(CHUNK as usize)
        .map(|lo| (lo, (lo + CHUNK).min(count)))
        .collect();

    let partials: Vec<Vec<(T, T, Vec<u64>)>> = chunks
        .par_iter()
        .map(|&(lo, hi)| {
            let mut pts: Vec<(T, T, Vec<u64>)> = Vec::new();
            for code in lo..hi {
                let table = AllocationTable::from_code(n, m, code);
                let keep = match class {
                    IcClass::Dsic => table.is_dsic(),
                    IcClass::Bic => true,
                };
                if !keep {
                    continue;
                }
                let interims: Vec<Vec<T>> = (0..n).map(|i| ctx.interim(&table, i)).collect();
                if !is_bic_alloc(&interims) {
                    continue;
                }
                let pays: Vec<Vec<T>> = interims
                    .iter()
                    .map(|x| optimal_bic_payments(prior, x).expect("monotone by check"))
                    .collect();
                let (rev, wel) = rev_wel(prior, &interims, &pays);
                pts.push((wel, rev, vec![code]));
            }
            pareto_reduce(pts)
        })
        .collect();

    let mut merged: Vec<(T, T, Vec<u64>)> = Vec::new();
    for part in partials {
        merged.extend(part);
    }
    let mut frontier = pareto_reduce(merged);
    for p in frontier.iter_mut() {
        p.2.sort_unstable();
    }
    Ok(frontier
        .into_iter()
        .map(|(wel, rev, witnesses)| ParetoPoint {
            wel,
            rev,
            witnesses,
        })
        .collect())
}

/// Reduce candidate points to the antichain of undominated ones, merging
/// witnesses of coincident points.
fn pareto_reduce<T: Scalar>(mut pts: Vec<(T, T, Vec<u64>)>) -> Vec<(T, T, Vec<u64>)> {
    if pts.is_empty() {
        return pts;
    }
    pts.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then_with(|| b.1.partial_cmp(&a.1).unwrap())
    });
    let mut out: Vec<(T, T, Vec<u64>)> = Vec::new();
    let mut best_rev: Option<T> = None;
    let mut i = 0;
    while i < pts.len() {
        // points sharing this welfare, in descending revenue
        let wel = pts[i].0.clone();
        let rev = pts[i].1.clone();
        let mut witnesses = Vec::new();
        let mut j = i;
        while j < pts.len() && pts[j].0 == wel && pts[j].1 == rev {
            witnesses.append(&mut pts[j].2);
            j += 1;
        }
        let dominated = best_rev.as_ref().is_some_and(|b| *b >= rev);
        if !dominated {
            out.push((wel.clone(), rev.clone(), witnesses));
            best_rev = Some(rev);
        }
        // skip the rest of this welfare level: all have lower revenue
        while j < pts.len() && pts[j].0 == wel {
            j += 1;
        }
        i = j;
    }
    out
}
