//! `profilest`: patterns, profiles, and high-profile distribution estimation.
//!
//! A sample of i.i.d. draws can be reduced to its *pattern* (the order in
//! which distinct symbols first appear) and further to its *profile* (how
//! many symbols appear once, twice, and so on). The profile is a sufficient
//! statistic: every distribution assigns the same probability to all
//! patterns sharing a profile. This crate computes
//!
//! - patterns and profiles of token sequences ([`patterns`]),
//! - the exact probability a distribution induces on a pattern, including
//!   distributions with a continuous ("always new symbol") component
//!   ([`probability`]),
//! - analytic certificates on any probability-maximizing distribution of a
//!   profile: support-size brackets, a cap on the continuous mass, forced
//!   discreteness ([`bounds`]),
//! - the *high-profile* distribution itself (the distribution maximizing
//!   the pattern probability) by closed form where one is known and by
//!   bounded numeric search otherwise ([`pml_exact`]), with an EM
//!   approximation for long patterns ([`pml_em`]),
//! - ordinary maximum-likelihood baselines and divergence comparisons
//!   ([`estimators`]).
//!
//! ```rust
//! use profilest::patterns::{pattern_of, profile_of, TokenSequence};
//!
//! let seq = TokenSequence::from_tokens("abracadabra".chars().map(String::from)).unwrap();
//! let pattern = pattern_of(&seq);
//! assert_eq!(pattern.to_string(), "1 2 3 1 4 1 5 1 2 3 1");
//! assert_eq!(profile_of(&pattern).to_text(), "1^2 2^2 5^1");
//! ```

#![forbid(unsafe_code)]

use thiserror::Error;

pub mod bounds;
pub mod enumerate;
pub mod estimators;
pub mod patterns;
pub mod pml_em;
pub mod pml_exact;
pub mod probability;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input (empty sequence, bad literal, nonintegral count, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A probability vector that cannot represent a distribution.
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    /// The operation is well-formed but does not apply to this argument
    /// (e.g. support-size bounds of a trivial profile).
    #[error("not applicable: {0}")]
    NotApplicable(String),

    /// Estimated work exceeds the configured cap.
    #[error("resource limit: estimated work {estimated:.3e} exceeds cap {cap:.3e}")]
    ResourceLimit { estimated: f64, cap: f64 },

    /// The candidate support range is unbounded and no explicit cap was given.
    #[error("unbounded search: {0}")]
    UnboundedSearch(String),

    /// No feasible latent assignment exists for the requested configuration.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A condition the underlying theory rules out was observed anyway.
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
