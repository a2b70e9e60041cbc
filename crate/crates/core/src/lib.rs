//! Contextual motif discovery for physiological time series.
//!
//! The crate covers the whole pipeline: signal preprocessing ([`signal`]),
//! contextless baselines ([`derived`], [`mmm`]), context discovery
//! ([`context`]), the joint contextual motif mixture model ([`cmmm`]),
//! simulation ([`simgen`]) and downstream evaluation ([`eval`]).

pub mod assignment;
pub mod cluster;
pub mod cmmm;
pub mod context;
pub mod derived;
pub mod error;
pub mod eval;
pub mod math;
pub mod mmm;
pub mod pipeline;
pub mod rng;
pub mod signal;
pub mod simgen;

pub use error::{Error, Result};
