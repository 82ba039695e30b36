//! Measurement harness for preference leakage in agent-mediated shopping.
//!
//! A buyer agent shops on behalf of a consumer, instructed either with a
//! verbal profile or with a confidential numeric budget. A separate agent
//! reads only the resulting transcript and estimates the consumer's
//! willingness to pay. The statistics module measures how much of the
//! private valuation the transcripts give away.

pub mod agent;
pub mod error;
pub mod harness;
pub mod inference;
pub mod model;
pub mod money;
pub mod redaction;
pub mod stats;

pub use error::{Error, ErrorKind, Result};
pub use money::Cents;
