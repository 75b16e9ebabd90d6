//! Monte-Carlo verification harness for ex-post rules in quantile space.
//!
//! Sampling is sharded over a fixed number of counter-based RNG streams
//! (seed + stream id), and shard tallies are merged in shard order, so a run
//! is byte-reproducible for a given seed regardless of thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::num::Real;
use crate::priors::QuantileModel;

pub const DEFAULT_BINS: usize = 64;
const SHARDS: u64 = 64;

/// Ex-post winner over a quantile profile: 0 keeps the item with the
/// seller, `1..=n` names the winning buyer.
pub trait WinnerRule<R>: Sync {
    fn buyers(&self) -> usize;
    fn winner(&self, q: &[R]) -> usize;
}

impl<R, F: Fn(&[R]) -> usize + Sync> WinnerRule<R> for (usize, F) {
    fn buyers(&self) -> usize {
        self.0
    }
    fn winner(&self, q: &[R]) -> usize {
        (self.1)(q)
    }
}

/// Estimated interim curves and outcome moments from simulation.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SimReport<R> {
    pub samples: u64,
    pub seed: u64,
    pub bins: usize,
    pub bin_centers: Vec<R>,
    /// Per buyer, per bin: estimated win probability given the own quantile
    /// falls in the bin.
    pub curve_est: Vec<Vec<R>>,
    /// Plug-in standard error per bin.
    pub curve_stderr: Vec<Vec<R>>,
    pub bin_counts: Vec<Vec<u64>>,
    pub rev_hat: R,
    pub wel_hat: R,
    pub rev_stderr: R,
    pub wel_stderr: R,
}

#[derive(Clone)]
struct Tally {
    wins: Vec<Vec<u64>>,
    counts: Vec<Vec<u64>>,
    wel_sum: f64,
    wel_sq: f64,
    rev_sum: f64,
    rev_sq: f64,
}

impl Tally {
    fn new(n: usize, bins: usize) -> Self {
        Tally {
            wins: vec![vec![0; bins]; n],
            counts: vec![vec![0; bins]; n],
            wel_sum: 0.0,
            wel_sq: 0.0,
            rev_sum: 0.0,
            rev_sq: 0.0,
        }
    }

    fn merge(&mut self, other: &Tally) {
        for (a, b) in self.wins.iter_mut().zip(&other.wins) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self.wel_sum += other.wel_sum;
        self.wel_sq += other.wel_sq;
        self.rev_sum += other.rev_sum;
        self.rev_sq += other.rev_sq;
    }
}

/// Draw i.i.d. uniform quantile profiles, tally wins into per-buyer bins and
/// estimate interim curves and (revenue, welfare) with standard errors.
pub fn simulate_expost<R: Real>(
    model: &QuantileModel<R>,
    rule: &dyn WinnerRule<R>,
    samples: u64,
    seed: u64,
    bins: usize,
) -> Result<SimReport<R>> {
    if samples < 10_000 {
        return Err(Error::InvalidInput("need at least 1e4 samples".into()));
    }
    if bins == 0 {
        return Err(Error::InvalidInput("need at least one bin".into()));
    }
    let n = rule.buyers();
    if n == 0 {
        return Err(Error::InvalidInput(
            "rule must cover at least one buyer".into(),
        ));
    }

    let per_shard = samples / SHARDS;
    let remainder = samples % SHARDS;
    let tallies: Vec<Tally> = (0..SHARDS)
        .into_par_iter()
        .map(|shard| {
            let shard_samples = per_shard + u64::from(shard < remainder);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(shard + 1);
            let mut t = Tally::new(n, bins);
            let mut q = vec![R::zero(); n];
            let mut qf = vec![0.0f64; n];
            for _ in 0..shard_samples {
                for i in 0..n {
                    let u: f64 = rng.gen();
                    qf[i] = u;
                    q[i] = R::of(u);
                }
                let w = rule.winner(&q);
                debug_assert!(w <= n);
                for i in 0..n {
                    let b = ((qf[i] * bins as f64) as usize).min(bins - 1);
                    t.counts[i][b] += 1;
                    if w == i + 1 {
                        t.wins[i][b] += 1;
                    }
                }
                let (wel, rev) = if w == 0 {
                    (0.0, 0.0)
                } else {
                    let qi = q[w - 1];
                    (
                        model.value(qi).map(|v| v.as_f64()).unwrap_or(0.0),
                        model.virtual_q(qi).map(|v| v.as_f64()).unwrap_or(0.0),
                    )
                };
                t.wel_sum += wel;
                t.wel_sq += wel * wel;
                t.rev_sum += rev;
                t.rev_sq += rev * rev;
            }
            t
        })
        .collect();

    let mut total = Tally::new(n, bins);
    for t in &tallies {
        total.merge(t);
    }

    let m = samples as f64;
    let wel_hat = total.wel_sum / m;
    let rev_hat = total.rev_sum / m;
    let wel_var = (total.wel_sq / m - wel_hat * wel_hat).max(0.0);
    let rev_var = (total.rev_sq / m - rev_hat * rev_hat).max(0.0);

    let bin_centers: Vec<R> = (0..bins)
        .map(|b| R::of((b as f64 + 0.5) / bins as f64))
        .collect();
    let mut curve_est = Vec::with_capacity(n);
    let mut curve_stderr = Vec::with_capacity(n);
    for i in 0..n {
        let mut est = Vec::with_capacity(bins);
        let mut se = Vec::with_capacity(bins);
        for b in 0..bins {
            let c = total.counts[i][b] as f64;
            let p = if c > 0.0 {
                total.wins[i][b] as f64 / c
            } else {
                0.0
            };
            est.push(R::of(p));
            se.push(R::of(if c > 0.0 {
                (p * (1.0 - p) / c).sqrt()
            } else {
                0.0
            }));
        }
        curve_est.push(est);
        curve_stderr.push(se);
    }

    Ok(SimReport {
        samples,
        seed,
        bins,
        bin_centers,
        curve_est,
        curve_stderr,
        bin_counts: total.counts,
        rev_hat: R::of(rev_hat),
        wel_hat: R::of(wel_hat),
        rev_stderr: R::of((wel_guard(rev_var) / m).sqrt()),
        wel_stderr: R::of((wel_guard(wel_var) / m).sqrt()),
    })
}

fn wel_guard(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

/// Conservative per-bin 3-sigma band for comparing a bin estimate against
/// its analytic value: uses the worst-case Bernoulli variance 1/4.
pub fn three_sigma_bound(samples: u64, bins: usize) -> f64 {
    let per_bin = samples as f64 / bins as f64;
    3.0 * (0.25 / per_bin).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::QuantileModel;

    struct HighestWins;
    impl WinnerRule<f64> for HighestWins {
        fn buyers(&self) -> usize {
            2
        }
        fn winner(&self, q: &[f64]) -> usize {
            if q[0] >= q[1] {
                1
            } else {
                2
            }
        }
    }

    #[test]
    fn highest_quantile_wins_matches_identity() {
        let rep = simulate_expost(&QuantileModel::Uniform, &HighestWins, 200_000, 7, 64).unwrap();
        let band = three_sigma_bound(200_000, 64);
        for i in 0..2 {
            for (b, &est) in rep.curve_est[i].iter().enumerate() {
                // analytic bin average of q^{n-1} = q over the bin
                let lo = b as f64 / 64.0;
                let hi = (b + 1) as f64 / 64.0;
                let avg = (lo + hi) / 2.0;
                assert!(
                    (est - avg).abs() <= band,
                    "buyer {i} bin {b}: {est} vs {avg}"
                );
            }
        }
        // second-price on U[0,1]: wel 2/3, rev 1/3
        assert!((rep.wel_hat - 2.0 / 3.0).abs() < 0.01);
        assert!((rep.rev_hat - 1.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn seller_keeps_always() {
        let rule = (2usize, |_: &[f64]| 0usize);
        let rep = simulate_expost(&QuantileModel::Uniform, &rule, 10_000, 3, 16).unwrap();
        assert!(rep.curve_est.iter().flatten().all(|&v| v == 0.0));
        assert_eq!(rep.wel_hat, 0.0);
        assert_eq!(rep.rev_hat, 0.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let rule = (2usize, |q: &[f64]| if q[0] > 0.5 { 1 } else { 2 });
        let a = simulate_expost(&QuantileModel::Uniform, &rule, 50_000, 42, 32).unwrap();
        let b = simulate_expost(&QuantileModel::Uniform, &rule, 50_000, 42, 32).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn stderr_shrinks_like_inverse_sqrt() {
        let rep1 = simulate_expost(&QuantileModel::Uniform, &HighestWins, 250_000, 11, 64).unwrap();
        let rep2 = simulate_expost(&QuantileModel::Uniform, &HighestWins, 500_000, 11, 64).unwrap();
        let ratio = rep2.rev_stderr / rep1.rev_stderr;
        let target = 1.0 / 2.0f64.sqrt();
        assert!(
            ratio > target * 0.8 && ratio < target * 1.2,
            "stderr ratio {ratio} not close to {target}"
        );
    }

    #[test]
    fn sample_floor_enforced() {
        let rule = (1usize, |_: &[f64]| 1usize);
        assert!(simulate_expost(&QuantileModel::Uniform, &rule, 9_999, 0, 8).is_err());
    }
}
