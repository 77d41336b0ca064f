//! Experiment harness for the SiPBA solver: JSON configuration, multi-seed
//! runs, ablation grids, baseline comparisons, gradient and asymptotic checks,
//! and CSV output.

// negated comparisons reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod instance;
pub mod output;

pub use commands::{cmd_ablate, cmd_asymptotics, cmd_compare, cmd_gradcheck, cmd_run, Context};
pub use config::RunConfig;
pub use error::{CliError, Result};

/// Environment variable that overrides `base_seed`.
pub const SEED_ENV: &str = "SIPBA_SEED";

/// Applies the `SIPBA_SEED` override, if set.
pub fn apply_seed_override(cfg: &mut RunConfig, value: Option<&str>) -> Result<()> {
    if let Some(v) = value {
        cfg.base_seed = v
            .trim()
            .parse()
            .map_err(|e| CliError::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer: {e}")))?;
    }
    Ok(())
}
