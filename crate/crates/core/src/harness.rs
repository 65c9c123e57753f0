//! Experiment harness: configuration, training, evaluation, score tables,
//! plots, and the oracle suite dispatcher behind the command-line interface.

pub mod config;
pub mod eval;
pub mod plot;
pub mod scores;
pub mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::oracle::{self, SuiteReport};
use crate::{Error, Result};

/// One experiment seed fans out into independent RNG streams so that a change
/// in one consumer (say, an extra net init draw) cannot shift any other:
/// stream 0 initializes networks, 1 drives environments, 2 samples actions
/// and options, 3 shuffles minibatches.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub const ORACLE_SUITES: [&str; 3] = ["fb-enum", "goa-grad", "mlp-grad"];

/// Run one verification suite by name, or all of them.
pub fn oracle_check(suite: &str) -> Result<Vec<SuiteReport>> {
    match suite {
        "fb-enum" => Ok(vec![oracle::run_fb_enum_suite()?]),
        "goa-grad" => Ok(vec![oracle::run_goa_grad_suite()?]),
        "mlp-grad" => Ok(vec![oracle::run_mlp_grad_suite()?]),
        "all" => Ok(vec![
            oracle::run_fb_enum_suite()?,
            oracle::run_goa_grad_suite()?,
            oracle::run_mlp_grad_suite()?,
        ]),
        other => Err(Error::Usage(format!(
            "unknown suite '{other}': expected one of {}, or all",
            ORACLE_SUITES.join(", ")
        ))),
    }
}
