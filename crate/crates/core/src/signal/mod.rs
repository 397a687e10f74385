//! Waveforms, spectrograms, masks, and the STFT machinery that moves between
//! them.
//!
//! The forward transform is unnormalized and the inverse carries the `1/fft_len`
//! factor. Synthesis is weighted overlap-add with the same window used for
//! analysis, followed by division by the constant overlap-add gain, so
//! `istft(stft(x))` reproduces `x` away from the first and last partial frames.

mod stft;
mod wav;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use stft::{apply_mask, istft, istft_adjoint, stft};
pub use wav::{quantize_sample, read_wav, write_wav, PCM_SCALE};

/// A mono signal with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Sum of squared samples.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }

    /// Copy of the first `len` samples (or the whole signal if shorter).
    pub fn truncated(&self, len: usize) -> Self {
        Self {
            samples: self.samples[..len.min(self.samples.len())].to_vec(),
            sample_rate: self.sample_rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Hann,
    SqrtHann,
}

impl WindowKind {
    /// Periodic window of length `len`.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        (0..len)
            .map(|n| {
                let hann =
                    0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos();
                match self {
                    WindowKind::Hann => hann,
                    WindowKind::SqrtHann => hann.sqrt(),
                }
            })
            .collect()
    }
}

/// Framing parameters shared by analysis and synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    frame_len: usize,
    hop: usize,
    fft_len: usize,
    window: WindowKind,
}

impl StftConfig {
    /// Validates the sizes and checks that the squared window overlap-adds to
    /// a constant at this hop.
    pub fn new(frame_len: usize, hop: usize, fft_len: usize, window: WindowKind) -> Result<Self> {
        if hop == 0 || hop > frame_len || frame_len > fft_len {
            return Err(Error::invalid(format!(
                "need 0 < hop <= frame_len <= fft_len, got hop={hop} frame_len={frame_len} fft_len={fft_len}"
            )));
        }
        let config = Self {
            frame_len,
            hop,
            fft_len,
            window,
        };
        let (min, max) = config.overlap_envelope_range();
        if max <= 0.0 || (max - min) > 1e-10 * max {
            return Err(Error::invalid(format!(
                "{window:?} window of length {frame_len} does not overlap-add to a constant at hop {hop}"
            )));
        }
        Ok(config)
    }

    /// 32 ms sqrt-Hann frames with 50% overlap.
    pub fn for_sample_rate(sample_rate: u32) -> Self {
        let frame_len = ((sample_rate as f64 * 0.032).round() as usize).max(2) & !1;
        Self::new(frame_len, frame_len / 2, frame_len, WindowKind::SqrtHann)
            .expect("sqrt-hann at 50% overlap is always valid")
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn fft_len(&self) -> usize {
        self.fft_len
    }

    pub fn window_kind(&self) -> WindowKind {
        self.window
    }

    pub fn window(&self) -> Vec<f64> {
        self.window.coefficients(self.frame_len)
    }

    /// Number of frequency bins, `fft_len / 2 + 1`.
    pub fn num_bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    /// Frames needed to cover `len` samples after zero-padding the tail to a
    /// whole number of hops. Zero when the signal is shorter than one frame.
    pub fn num_frames(&self, len: usize) -> usize {
        if len < self.frame_len {
            0
        } else {
            1 + (len - self.frame_len).div_ceil(self.hop)
        }
    }

    /// Length of the signal synthesized from `frames` frames.
    pub fn synthesis_len(&self, frames: usize) -> usize {
        if frames == 0 {
            0
        } else {
            (frames - 1) * self.hop + self.frame_len
        }
    }

    /// Sample range of a `frames`-frame synthesis where the overlap-add is
    /// complete (every sample is covered by the full set of overlapping frames).
    pub fn interior(&self, frames: usize) -> std::ops::Range<usize> {
        let total = self.synthesis_len(frames);
        let edge = self.frame_len - self.hop;
        if total < 2 * edge {
            0..0
        } else {
            edge..total - edge
        }
    }

    /// Constant value of the summed squared window in the interior.
    pub fn overlap_gain(&self) -> f64 {
        let sums = self.overlap_sums();
        sums.iter().sum::<f64>() / sums.len() as f64
    }

    /// Summed squared window seen by an interior sample, per phase within a hop.
    fn overlap_sums(&self) -> Vec<f64> {
        let w = self.window();
        (0..self.hop)
            .map(|offset| {
                w[offset..]
                    .iter()
                    .step_by(self.hop)
                    .map(|c| c * c)
                    .sum()
            })
            .collect()
    }

    fn overlap_envelope_range(&self) -> (f64, f64) {
        self.overlap_sums()
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
                (lo.min(s), hi.max(s))
            })
    }
}

impl Default for StftConfig {
    fn default() -> Self {
        Self::for_sample_rate(16_000)
    }
}

fn check_shape(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected != actual {
        return Err(Error::ShapeMismatch { expected, actual });
    }
    Ok(())
}

/// Frames × bins complex STFT values.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    values: Array2<Complex64>,
    config: StftConfig,
}

impl ComplexSpectrogram {
    pub fn new(values: Array2<Complex64>, config: StftConfig) -> Result<Self> {
        if values.ncols() != config.num_bins() {
            return Err(Error::ShapeMismatch {
                expected: (values.nrows(), config.num_bins()),
                actual: values.dim(),
            });
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::invalid("non-finite spectrogram value"));
        }
        Ok(Self { values, config })
    }

    pub fn zeros(frames: usize, config: StftConfig) -> Self {
        Self {
            values: Array2::zeros((frames, config.num_bins())),
            config,
        }
    }

    pub fn values(&self) -> &Array2<Complex64> {
        &self.values
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn num_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_bins(&self) -> usize {
        self.values.ncols()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn magnitude(&self) -> MagnitudeSpectrogram {
        MagnitudeSpectrogram {
            values: self.values.mapv(|v| v.norm()),
            config: self.config,
        }
    }

    /// Total power `Σ|X|²`.
    pub fn power(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Real inner product over real and imaginary parts.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        check_shape(self.dim(), other.dim())?;
        Ok(self
            .values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum())
    }
}

/// Frames × bins magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeSpectrogram {
    values: Array2<f64>,
    config: StftConfig,
}

impl MagnitudeSpectrogram {
    pub fn new(values: Array2<f64>, config: StftConfig) -> Result<Self> {
        if values.ncols() != config.num_bins() {
            return Err(Error::ShapeMismatch {
                expected: (values.nrows(), config.num_bins()),
                actual: values.dim(),
            });
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("magnitudes must be finite and nonnegative"));
        }
        Ok(Self { values, config })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn num_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_bins(&self) -> usize {
        self.values.ncols()
    }
}

/// Per-bin gains, every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMask {
    values: Array2<f64>,
}

impl GainMask {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("mask value {v} outside [0, 1]")));
        }
        Ok(Self { values })
    }

    /// Clamps into `[0, 1]`; NaN maps to 0.
    pub fn clamped(values: Array2<f64>) -> Self {
        Self {
            values: values.mapv(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) }),
        }
    }

    pub fn constant(dim: (usize, usize), value: f64) -> Result<Self> {
        Self::new(Array2::from_elem(dim, value))
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub(crate) fn check_dim(&self, dim: (usize, usize)) -> Result<()> {
        check_shape(dim, self.dim())
    }
}

pub(crate) fn ensure_same_dim(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    check_shape(a, b)
}
