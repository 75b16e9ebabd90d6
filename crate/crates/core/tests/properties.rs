//! Property tests for the cross-module invariants.

use mechlab_core::discrete::{
    bic_payment_lp, enumerate_pareto, interim_alloc_discrete, is_bic_alloc, optimal_bic_payments,
    AllocationTable, IcClass,
};
use mechlab_core::lp::{solve, LpStatus, Sense};
use mechlab_core::num::Scalar;
use mechlab_core::piecewise::{deterministic_implement, PiecewiseAuction};
use mechlab_core::priors::{DiscretePrior, QuantileModel};
use mechlab_core::reduced_form::{border_check_asymmetric, InterimCurve};
use mechlab_core::transform::transform_all;
use mechlab_core::Rational;
use proptest::prelude::*;

fn r(n: i64, d: i64) -> Rational {
    Rational::from_ratio(n, d)
}

/// Ascending positive money values and a normalized probability vector.
fn discrete_prior_strategy() -> impl Strategy<Value = DiscretePrior<Rational>> {
    (2usize..=4)
        .prop_flat_map(|m| {
            (
                prop::collection::vec(1i64..400, m),
                prop::collection::vec(1i64..40, m),
            )
        })
        .prop_map(|(raw_values, weights)| {
            let mut values: Vec<i64> = raw_values;
            values.sort_unstable();
            values.dedup();
            while values.len() < 2 {
                values.push(values.last().copied().unwrap_or(1) + 1);
            }
            let m = values.len();
            let total: i64 = weights[..m].iter().sum();
            let probs: Vec<Rational> = weights[..m].iter().map(|&w| r(w, total)).collect();
            let values: Vec<Rational> = values.into_iter().map(|v| r(v, 1)).collect();
            DiscretePrior::new(values, probs).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// The closed-form revenue-maximal payments coincide with the LP oracle
    /// on the explicit BIC + IR system, exactly, for any monotone interim
    /// vector.
    #[test]
    fn payments_match_lp_oracle(
        prior in discrete_prior_strategy(),
        raw in prop::collection::vec(0i64..100, 8),
    ) {
        let m = prior.len();
        let mut interim: Vec<Rational> = raw[..m].iter().map(|&x| r(x, 100)).collect();
        interim.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let closed = optimal_bic_payments(&prior, &interim).unwrap();
        let sol = solve(&bic_payment_lp(&prior, &interim, Sense::Max, false)).unwrap();
        prop_assert_eq!(sol.status, LpStatus::Optimal);
        prop_assert_eq!(sol.values, closed);
    }

    /// Threshold (DSIC) tables always yield monotone interim allocations.
    #[test]
    fn dsic_implies_bic(prior in discrete_prior_strategy(), code in 0u64..6561) {
        let m = prior.len();
        let profiles = m * m;
        let table = AllocationTable::from_code(2, m, code % 3u64.pow(profiles as u32));
        if table.is_dsic() {
            let interims: Vec<Vec<Rational>> = (0..2)
                .map(|i| interim_alloc_discrete(&prior, &table, i).unwrap())
                .collect();
            prop_assert!(is_bic_alloc(&interims));
        }
    }

    /// The enumerated frontier is an antichain under coordinate dominance.
    #[test]
    fn frontier_is_antichain(prior in discrete_prior_strategy()) {
        if prior.len() > 2 {
            return Ok(()); // keep the table count small
        }
        for class in [IcClass::Bic, IcClass::Dsic] {
            let frontier = enumerate_pareto(&prior, 2, class, 100_000).unwrap();
            for a in &frontier {
                for b in &frontier {
                    if (a.wel.clone(), a.rev.clone()) == (b.wel.clone(), b.rev.clone()) {
                        continue;
                    }
                    prop_assert!(!(a.wel >= b.wel && a.rev >= b.rev));
                }
            }
        }
    }

    /// Quantile functions are nondecreasing and dominate the virtual value.
    #[test]
    fn quantile_monotone_and_dominates_virtual(alpha in 0.2f64..4.0, q in 0.0f64..0.99) {
        for model in [QuantileModel::Uniform, QuantileModel::PowerLaw { alpha }] {
            let v0 = model.value(q).unwrap();
            let v1 = model.value((q + 0.005).min(0.999)).unwrap();
            prop_assert!(v1 >= v0 - 1e-12);
            prop_assert!(model.virtual_q(q).unwrap() <= v0 + 1e-12);
        }
    }

    /// The deterministic implementation matches the symmetric allocation in
    /// total, for any valid parameters.
    #[test]
    fn implementation_total_matches(
        n in 2usize..=4,
        raw_r1 in 0.0f64..0.8,
        width in 0.05f64..0.9,
        kfrac in 0.0f64..1.0,
        family1 in any::<bool>(),
        q in 0.0f64..1.0,
    ) {
        let r1 = raw_r1;
        let r2 = (r1 + width).min(1.0);
        if r2 <= r1 + 1e-6 {
            return Ok(());
        }
        let pa = if family1 {
            let kmax = PiecewiseAuction::family1(n, r1, r2, 0.0).unwrap().k_max();
            PiecewiseAuction::family1(n, r1, r2, kfrac * kmax).unwrap()
        } else {
            PiecewiseAuction::family2(n, r1, r2).unwrap()
        };
        let imp = deterministic_implement(&pa).unwrap();
        let total = imp.analytic_total(q);
        prop_assert!((total - pa.n as f64 * pa.x_hat(q)).abs() <= 1e-9);
    }

    /// Scaled-identity profiles are Border-feasible; the transform preserves
    /// mass and feasibility and never hurts welfare or revenue under the
    /// uniform (regular) model.
    #[test]
    fn transform_improves_feasible_profiles(c1 in 0.02f64..1.0, c2 in 0.02f64..1.0) {
        let curves = [
            InterimCurve::from_fn(64, |q: f64| c1 * q).unwrap(),
            InterimCurve::from_fn(64, |q: f64| c2 * q).unwrap(),
        ];
        prop_assert!(border_check_asymmetric(&curves, 32).unwrap().feasible);
        let rep = transform_all(&QuantileModel::Uniform, &curves).unwrap();
        for d in &rep.mass_delta {
            prop_assert!(d.abs() <= 1e-8);
        }
        prop_assert!(rep.border_feasible_after);
        prop_assert!(rep.wel_delta >= -1e-9);
        prop_assert!(rep.rev_delta >= -1e-9);
        // integrated-tail dominance
        for (orig, new) in curves.iter().zip(&rep.curves) {
            for j in 0..=32 {
                let q = j as f64 / 32.0;
                prop_assert!(new.tail_integral(q) >= orig.tail_integral(q) - 1e-9);
            }
        }
    }
}
