//! Estimation of short-term and delayed causal effects of time-varying
//! exposures on recurrent events in the presence of a correlated terminal
//! event.
//!
//! The library provides:
//! - panel data structures for longitudinal recurrent-event cohorts
//!   ([`panel`]),
//! - regression learners for nuisance functions ([`learners`]),
//! - time-varying exposure models fit on pseudo-data ([`exposure`]),
//! - terminal-event effect estimation and risk-set adjusting weights
//!   ([`terminal`]),
//! - the sequential exposure-model estimator ([`parametric`]) and the
//!   cross-fitted robust estimator ([`robust`]) of the lagged effects,
//! - bootstrap inference ([`bootstrap`]),
//! - a replication-grade study simulator ([`simulate`]),
//! - counterfactual events-averted evaluation under exposure caps
//!   ([`counterfactual`]),
//! - CSV/JSON interchange ([`io`]) and end-to-end pipelines ([`pipeline`]).

pub mod bootstrap;
pub mod counterfactual;
pub mod error;
mod estimating;
pub mod exposure;
pub mod io;
pub mod learners;
pub mod panel;
pub mod parametric;
pub mod pipeline;
pub mod robust;
mod rngutil;
pub mod simulate;
pub mod terminal;

pub use estimating::StepDiag;

pub use error::{Error, Result};
pub use panel::{Individual, Panel, TimeGrid};
