//! Reputation-based item ranking with a disparate-reputation audit and a
//! per-class harmonization that removes the dependence of user reputations on
//! a sensitive attribute.
//!
//! The stages are independent and can be chained by hand:
//!
//! ```
//! use repute::dataset::{ItemId, MatrixBuilder, RatingScale, UserId};
//! use repute::reputation::{self, EngineConfig};
//!
//! let mut b = MatrixBuilder::new(RatingScale::five_star());
//! b.add(UserId(1), ItemId(10), 5)?
//!     .add(UserId(1), ItemId(11), 1)?
//!     .add(UserId(2), ItemId(10), 4)?;
//! let matrix = b.build();
//! let out = reputation::run(&matrix, &EngineConfig::default())?;
//! assert!(out.reputations.converged);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```
//!
//! or run end to end with [`pipeline::run_pipeline`].

pub mod dataset;
pub mod independence;
pub mod pipeline;
pub mod report;
pub mod reputation;
pub mod stats;

pub use dataset::{AttributeTable, ItemId, RatingScale, RatingsMatrix, UserId};
pub use independence::{AuditConfig, DrAuditReport, Harmonized};
pub use pipeline::{run_pipeline, PipelineError, RunConfig};
pub use report::print_report;
pub use reputation::{EngineConfig, RankingVector, ReputationVector, Variant};
