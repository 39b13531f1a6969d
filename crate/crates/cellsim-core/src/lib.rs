//! Gate-level transient simulation of standard-cell circuits.
//!
//! Each cell (INV, NAND2, NOR2) is modeled as a current-source model: a
//! voltage-dependent output current source plus fixed input, coupling, and
//! output capacitors. The output current surface can be evaluated three ways:
//!
//! * analytically (closed-form smooth device surrogate, [`celllib`]),
//! * from a multilinear lookup table sampled on a grid ([`lut`]),
//! * from a trained single-hidden-layer network ([`mlp`]).
//!
//! [`characterize`] samples training/tables from the analytic surface,
//! [`netlist`] parses `.bench` circuits and maps them onto the cell library,
//! [`engine`] integrates node voltages interval by interval with an
//! event-driven active set, [`metrics`] scores waveform agreement, and
//! [`costmodel`] estimates per-interval evaluation cost on a multicore CPU
//! (table queries) versus a GPU (resident network instances).
//!
//! All randomized operations take explicit seeds and are deterministic; all
//! quantities are SI (volts, amperes, farads, seconds).

pub mod celllib;
pub mod characterize;
pub mod costmodel;
pub mod engine;
pub mod error;
pub mod lut;
pub mod metrics;
pub mod mlp;
pub mod netlist;
pub mod synth;

pub use celllib::{CellCaps, CellKind, CsmComponents, TechnologyParams};
pub use error::{Error, Result};
