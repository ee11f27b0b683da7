//! Algorithmic core of the curbscan roadside LiDAR pipeline.
//!
//! Everything in this crate is pure computation over per-cell state: no file
//! formats, no threads, no clocks. The companion `curbscan` crate wires these
//! pieces to files, a CLI and a thread pool.
//!
//! The processing chain, in stream order:
//!
//! 1. [`tensor`]: raw per-frame point sets are hashed into a fixed
//!    elevation x azimuth grid of cell observations.
//! 2. [`intensity`]: a small 1-D Gaussian mixture over per-cell intensity
//!    history turns each return into a confidence weight.
//! 3. [`dpgmm`] / [`adaptive`] / [`baseline`]: per-cell background models
//!    consume weighted observations and label new ones.
//! 4. [`detect`]: foreground points are fenced, denoised, clustered, boxed,
//!    classified and tracked.
//! 5. [`evaluate`]: point-, object- and path-level scoring.
//! 6. [`synth`]: a deterministic scene simulator that produces labelled
//!    streams for all of the above.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod adaptive;
pub mod baseline;
pub mod detect;
pub mod dpgmm;
pub mod evaluate;
pub mod geom;
pub mod intensity;
pub mod linalg;
pub mod model;
pub mod synth;
pub mod tensor;
