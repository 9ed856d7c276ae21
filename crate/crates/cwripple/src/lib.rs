//! Ripple estimation for Cockcroft-Walton (CW) voltage multipliers.
//!
//! A CW multiplier turns a low AC voltage into a high DC voltage with a
//! ladder of diodes and capacitors. Under load the output carries a periodic
//! ripple that the classical closed-form model underestimates once diode
//! drops, capacitor ESR and waveform distortion matter. This crate combines
//! three ingredients into a corrected estimator:
//!
//! * [`theory`] — the classical closed-form output and ripple formulas,
//! * [`circuit`] — a fixed-step transient simulator for the non-ideal ladder,
//! * [`forest`] + [`hybrid`] — a from-scratch random forest that learns the
//!   residual between simulation and theory, and adds it back to the
//!   classical baseline.
//!
//! [`dataset`] generates the parametric sweep the model trains on, and
//! [`cli`] exposes the whole pipeline as the `cwripple` command-line tool.
//! The `book/` directory of the repository walks through each concept with
//! runnable snippets; those snippets compile as doctests of this crate.

pub mod circuit;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod features;
pub mod forest;
pub mod hybrid;
pub mod rng;
pub mod theory;

mod book;

pub use error::{Error, Result};
