//! Turn a register of offshore-owned property titles, each holding a
//! free-text and possibly nested address, into a one-property-per-row
//! dataset with geographic codes and a six-way use classification, then
//! compute areal and financial statistics over it.
//!
//! The stages run in order: label (regex weak supervision over the
//! address text, optionally denoised with an HMM), parse (spans to
//! structured rows, one per property), expand (numeric ranges like
//! "2 - 8 (even)"), classify (type 1 rule steps plus type 2 gazetteer
//! deduction, then contraction of non-domestic multi-row titles) and
//! geolocate (postcode directory, sale and rating gazetteers, sibling
//! inheritance). [`pipeline`] chains them; everything is also callable
//! on its own, see the examples directory.

pub mod analyze;
pub mod classify;
pub mod config;
pub mod denoise;
pub mod error;
pub mod evaluate;
pub mod expand;
pub mod geolocate;
pub mod ingest;
pub mod parse;
pub mod pipeline;
pub mod rules;

pub use config::Config;
pub use error::{Error, Result};
