//! mechlab: a laboratory for deterministic single-item auctions.
//!
//! The crate covers two complementary views of what deterministic auctions
//! can do: the attainable (revenue, welfare) pairs, and the implementable
//! interim allocations. Discrete enumeration and the payment programs run
//! over exact rationals; the continuous quantile-space machinery is generic
//! over the float width.

pub mod det_border;
pub mod discrete;
pub mod error;
pub mod lp;
pub mod num;
pub mod piecewise;
pub mod priors;
pub mod reduced_form;
pub mod sim;
pub mod transform;

pub use error::{Error, Result};
pub use num::{Real, Scalar};

/// Exact arithmetic scalar used by the discrete path.
pub type Rational = num_rational::BigRational;

/// `f64` instantiations of the continuous-side types, used by the CLI and
/// most tests.
pub type Model64 = priors::QuantileModel<f64>;
pub type Curve64 = reduced_form::InterimCurve<f64>;
pub type Auction64 = piecewise::PiecewiseAuction<f64>;
