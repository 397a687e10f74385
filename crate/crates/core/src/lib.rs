//! Supervised speech-enhancement toolkit built around a loss that trades
//! speech distortion against a controlled residual-noise level.
//!
//! Modules, bottom-up:
//! - [`signal`]: waveforms, STFT/iSTFT (and its adjoint), masks, WAV I/O
//! - [`estimators`]: a priori SNR and the closed-form parametric gain family
//! - [`losses`]: generalized loss, components loss, MSE/TMSE/SI-SDR baselines
//! - [`oracle`]: Monte-Carlo and brute-force checks of the per-bin solutions
//! - [`model`]: a small causal mask estimator trained with Adam
//! - [`metrics`]: noise/speech attenuation, SDR and SI-SDR
//! - [`corpus`]: synthetic speech, noise, mixing and dataset builds
//! - [`pipeline`]: enhancement, evaluation, sweeps and the verification report

pub mod corpus;
pub mod error;
pub mod estimators;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod pipeline;
pub mod signal;

mod seeds;

pub use error::{Error, Result};
