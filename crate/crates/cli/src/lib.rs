//! File formats and subcommands of the `csrg` command-line tool.

pub mod commands;
pub mod config;
pub mod modelfile;
pub mod output;
pub mod setfile;
pub mod trace;

use csrg::oinf::OinfError;

pub const EXIT_OK: u8 = 0;
pub const EXIT_INFEASIBLE: u8 = 1;
pub const EXIT_NOT_FINITELY_DETERMINED: u8 = 2;
/// Configuration, input or I/O problems.
pub const EXIT_USAGE: u8 = 3;

/// Exit code for an error, by the first set-construction failure in its chain.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<OinfError>() {
            return match e {
                OinfError::Infeasible | OinfError::AssumptionViolated { .. } => EXIT_INFEASIBLE,
                OinfError::NotFinitelyDetermined { .. } => EXIT_NOT_FINITELY_DETERMINED,
                _ => EXIT_USAGE,
            };
        }
    }
    EXIT_USAGE
}
