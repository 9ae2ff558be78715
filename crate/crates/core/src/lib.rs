//! Monte Carlo toolkit for prospect-theory portfolio choice in markets with
//! superlinear trading frictions.
//!
//! The pieces, bottom up:
//!
//! - [`market`]: independent-increment driving paths, price maps and benchmarks.
//! - [`frictions`]: the cost `G(s, x) = H(s)|x|^alpha`, its conjugate and the
//!   pathwise market bound.
//! - [`portfolio`]: trading policies and the wealth recursion.
//! - [`cpt`]: empirical Choquet integrals and the well-posedness check.
//! - [`optimizer`]: cross-entropy search over strategies.
//! - [`experiment`]: config files, reproducible runs and CSV outputs.
//!
//! ```
//! use illiquid_cpt::frictions::{conjugate_cost, FrictionSpec};
//!
//! // quadratic cost with H = 1/2: G*(y) = y^2 / 2
//! let spec = FrictionSpec::constant(2.0, 0.5);
//! assert!((conjugate_cost(1.0, 3.0, &spec).unwrap() - 4.5).abs() < 1e-12);
//! ```

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cpt;
pub mod error;
pub mod experiment;
pub mod frictions;
pub mod market;
pub mod optimizer;
pub mod portfolio;
pub mod stats;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/frictions.md")]
    mod frictions {}
    #[doc = include_str!("../../../book/src/objective.md")]
    mod objective {}
    #[doc = include_str!("../../../book/src/search.md")]
    mod search {}
    #[doc = include_str!("../../../book/src/running.md")]
    mod running {}
}
