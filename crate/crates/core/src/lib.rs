//! Core of the low-cost VPC eye-tracker: Viola–Jones detection over integral
//! images, the calibration network for horizontal gaze, forehead PPG heart
//! rate and HRV, fixation detection, the VPC session protocol and the node
//! wire codec.
//!
//! The crate is `no_std` and only needs an allocator. File formats, transport
//! and the command line live in the `vpc` companion crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod fixation;
pub mod frame;
pub mod gaze;
pub mod geom;
pub mod haar;
pub mod pipeline;
pub mod ppg;
pub mod session;
pub mod synth;
pub mod wire;

pub use frame::{Channel, Frame, FrameError, StreamManifest};
pub use geom::{NormRect, Rect};
