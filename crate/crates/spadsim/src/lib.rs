//! Physically based simulator for SPAD-array direct time-of-flight lidar.
//!
//! The crate models the full measurement chain of a flash-lidar system built
//! around a Single-Photon Avalanche Detector (SPAD) array:
//!
//! 1. **Radiometry** ([`radiometry`]) — expected signal photons per pulse per
//!    pixel, solar background rate, and the signal-to-background-noise ratio
//!    of the optical link.
//! 2. **Arrival likelihood** ([`likelihood`]) — the per-pixel photon
//!    arrival-rate function over the TCSPC interval, its normalization, and
//!    the per-bin arrival probabilities.
//! 3. **Fisher information** ([`fisher`]) — numerical Fisher information per
//!    pulse with respect to the pulse-peak position, the Cramér-Rao bound on
//!    depth estimation, and the one-FWHM minimum distinguishability.
//! 4. **Depth-image generation** in two regimes:
//!    - [`crb_imager`] — fast mode that noises a ground-truth depth map with
//!      per-pixel Gaussian noise at the Cramér-Rao distinguishability limit;
//!    - [`spad_sampler`] — exact mode that Bernoulli-samples every histogram
//!      bin per laser pulse with first-photon-per-frame semantics, pulse
//!      jitter, and inter-pixel trigger skew.
//! 5. **Estimation** ([`estimation`]) — match-filter depth estimation from
//!    histograms, depth distributions, and distinguishability sweeps.
//! 6. **I/O** ([`scene_io`], [`config`]) — portable grid formats for scenes,
//!    depth images and histogram cubes, plus INI-style system configuration
//!    with shipped instrument presets.
//!
//! All sampling is driven by a counter-based keyed RNG ([`rng`]), so results
//! are bit-identical for a fixed seed regardless of thread count.

// Validation uses `!(x > 0.0)` so NaN fails closed; frozen oracle constants
// keep their full printed precision.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::excessive_precision)]

pub mod config;
pub mod constants;
pub mod crb_imager;
pub mod error;
pub mod estimation;
pub mod fisher;
pub mod likelihood;
pub mod quadrature;
pub mod radiometry;
pub mod rng;
pub mod scene;
pub mod scene_io;
pub mod spad_sampler;

pub use config::SystemConfig;
pub use error::SimError;
pub use likelihood::{LikelihoodModel, PulseResponse};
pub use radiometry::{AtmosphereSpec, LaserSpec, OpticsSpec, SensorSpec, TargetPatch};
pub use scene::{DepthImage, Scene};
pub use spad_sampler::{Histogram, HistogramCube};
