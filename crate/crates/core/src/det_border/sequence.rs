//! The quantile recurrence behind the randomized-vs-deterministic interim
//! separation: mixing a second-price auction (probability `p`) with a free
//! gift to buyer 1 pins a sequence `u` of quantiles along the always-sold
//! composition identity; if some `u_n` exceeds 1, no deterministic DSIC
//! auction matches the total interim allocation.

use crate::error::{Error, Result};

#[derive(Debug, Clone, serde::Serialize)]
pub struct CorollarySequence {
    pub p: f64,
    /// `u_1, u_2, ...` with `u_1 = 0`, `u_2 = 1 - p`,
    /// `u_{n+2} = 2 p u_{n+1} + (1 - p) - u_n`.
    pub u: Vec<f64>,
    /// 1-based index of the first strict excess over 1, if any.
    pub first_violation: Option<usize>,
}

pub fn corollary_sequence(p: f64, max_n: usize) -> Result<CorollarySequence> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("p = {p} outside [0, 1]")));
    }
    let mut u = Vec::with_capacity(max_n);
    if max_n >= 1 {
        u.push(0.0);
    }
    if max_n >= 2 {
        u.push(1.0 - p);
    }
    while u.len() < max_n {
        let m = u.len();
        let next = 2.0 * p * u[m - 1] + (1.0 - p) - u[m - 2];
        u.push(next);
    }
    let first_violation = u.iter().position(|&x| x > 1.0).map(|i| i + 1);
    Ok(CorollarySequence {
        p,
        u,
        first_violation,
    })
}

impl CorollarySequence {
    /// Largest residual of `u_n + u_{n+2} - 2 p u_{n+1} - (1 - p)`.
    pub fn recurrence_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for w in self.u.windows(3) {
            let r = w[0] + w[2] - 2.0 * self.p * w[1] - (1.0 - self.p);
            worst = worst.max(r.abs());
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_three_quarters_violates_at_five() {
        let seq = corollary_sequence(0.75, 8).unwrap();
        assert_eq!(&seq.u[..5], &[0.0, 0.25, 0.625, 0.9375, 1.03125]);
        assert_eq!(seq.first_violation, Some(5));
        assert_eq!(seq.recurrence_residual(), 0.0);
    }

    #[test]
    fn pure_second_price_never_violates() {
        let seq = corollary_sequence(1.0, 12).unwrap();
        assert!(seq.u.iter().all(|&x| x == 0.0));
        assert_eq!(seq.first_violation, None);
    }

    #[test]
    fn p_half_is_the_boundary_case() {
        let seq = corollary_sequence(0.5, 10).unwrap();
        assert_eq!(&seq.u[..4], &[0.0, 0.5, 1.0, 1.0]);
        assert_eq!(seq.first_violation, None);
    }

    #[test]
    fn nondecreasing_while_below_one() {
        for p in [0.6, 0.75, 0.9] {
            let seq = corollary_sequence(p, 30).unwrap();
            let stop = seq.first_violation.unwrap_or(seq.u.len());
            for w in seq.u[..stop].windows(2) {
                assert!(w[1] >= w[0] - 1e-12, "p = {p}: {:?}", &seq.u[..stop]);
            }
        }
    }

    #[test]
    fn out_of_range_p_rejected() {
        assert!(corollary_sequence(1.5, 5).is_err());
    }
}
