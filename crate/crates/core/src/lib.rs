//! Latent-option policy-gradient reinforcement learning.
//!
//! Implements four on-policy algorithms over a shared rollout substrate:
//!
//! * **PPO** — clipped-ratio policy gradient, no options (the `n = 1` special
//!   case of the machinery below).
//! * **PPOC** — option-critic with PPO sub-policy updates: one option is
//!   sampled per step, a termination network decides when to resample.
//! * **PPOEM** — options are never sampled; a forward-backward pass over the
//!   trajectory yields joint option posteriors that weight a clipped
//!   surrogate (an EM-style update).
//! * **SOAP** — same forward-only option distribution ζ at collection time,
//!   but the update back-propagates option advantages analytically through
//!   the ζ recursion (GOA: generalized option advantage).
//!
//! The latent machinery treats options as the hidden state of an HMM whose
//! transition and emission tables are produced by small MLPs; `inference`
//! holds the scaled forward-backward pass, `advantage` the option-conditioned
//! GAE and GOA recursions, and `oracle` independent brute-force checks for
//! both.
//!
//! Environments are a configurable memory corridor (a POMDP that requires
//! remembering the first observation) and classic cart-pole. The `harness`
//! module and the `optionrl` binary drive training, evaluation, score
//! normalization and SVG learning-curve plots.

pub mod advantage;
pub mod algo;
pub mod checkpoint;
pub mod env;
pub mod harness;
pub mod inference;
pub mod num;
pub mod oracle;
pub mod rollout;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration: bad dimensions, unknown names, out-of-range
    /// hyperparameters.
    #[error("config: {0}")]
    Config(String),
    /// API misuse, e.g. stepping a finished episode.
    #[error("usage: {0}")]
    Usage(String),
    /// Caller-provided data violates a precondition (unnormalized rows,
    /// length mismatches).
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// Numerical degeneracy: non-finite values, vanishing normalizers.
    #[error("numerical: {0}")]
    Numerical(String),
    /// An internal invariant failed; indicates a bug, not bad input.
    #[error("internal inconsistency: {0}")]
    Inconsistent(String),
    /// Malformed checkpoint or metrics file.
    #[error("parse: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
