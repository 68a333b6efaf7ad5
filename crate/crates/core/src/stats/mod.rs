//! Statistics used by the audit and the evaluation: the Mann-Whitney U test,
//! Kendall's tau and box-whisker summaries.

use thiserror::Error;

mod kendall;
mod mann_whitney;
mod summary;

pub use kendall::{kendall_tau, kendall_tau_slices, kendall_tau_with, TauVariant};
pub use mann_whitney::{mann_whitney_u, mann_whitney_u_with, midranks, MwMethod, MwResult};
pub use summary::{five_number_summary, FiveNumberSummary};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("{0} sample is empty")]
    EmptySample(&'static str),
    #[error("sample contains a non-finite value")]
    NonFinite,
    #[error("rankings cover different items; only in one of them: {0:?}")]
    DomainMismatch(Vec<u32>),
    #[error("kendall tau needs at least 2 items, got {0}")]
    TooFewItems(usize),
    #[error("kendall tau-b is undefined when one ranking is entirely tied")]
    AllTied,
    #[error("samples of length {0} and {1} cannot be paired")]
    LengthMismatch(usize, usize),
    #[error("exact Mann-Whitney distribution requested for {0} values (limit 200)")]
    ExactTooLarge(usize),
}

fn check_finite(values: &[f64]) -> Result<(), StatsError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite)
    }
}
