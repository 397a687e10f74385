use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::{ComplexSpectrogram, GainMask, StftConfig, Waveform};
use crate::error::{Error, Result};

/// Forward STFT. The tail is zero-padded so the last frame is whole.
pub fn stft(wave: &Waveform, config: &StftConfig) -> Result<ComplexSpectrogram> {
    let frames = config.num_frames(wave.len());
    if frames == 0 {
        return Err(Error::EmptySignal {
            len: wave.len(),
            frame_len: config.frame_len(),
        });
    }
    let window = config.window();
    let n_fft = config.fft_len();
    let bins = config.num_bins();
    let fft = FftPlanner::new().plan_fft_forward(n_fft);
    let samples = wave.samples();

    let mut values = Array2::zeros((frames, bins));
    let mut buf = vec![Complex64::default(); n_fft];
    for (l, mut row) in values.rows_mut().into_iter().enumerate() {
        let start = l * config.hop();
        buf.fill(Complex64::default());
        for (n, w) in window.iter().enumerate() {
            let x = samples.get(start + n).copied().unwrap_or(0.0);
            buf[n] = Complex64::new(x * w, 0.0);
        }
        fft.process(&mut buf);
        for (dst, src) in row.iter_mut().zip(&buf[..bins]) {
            *dst = *src;
        }
    }
    Ok(ComplexSpectrogram {
        values,
        config: *config,
    })
}

/// Overlap-add synthesis. Output has `config.synthesis_len(frames)` samples;
/// the imaginary parts of the DC and Nyquist bins are ignored.
pub fn istft(spec: &ComplexSpectrogram, sample_rate: u32) -> Result<Waveform> {
    let config = spec.config();
    let n_fft = config.fft_len();
    let frame_len = config.frame_len();
    let window = config.window();
    let scale = 1.0 / (n_fft as f64 * config.overlap_gain());
    let ifft = FftPlanner::new().plan_fft_inverse(n_fft);

    let mut out = vec![0.0; config.synthesis_len(spec.num_frames())];
    let mut buf = vec![Complex64::default(); n_fft];
    for (l, row) in spec.values().rows().into_iter().enumerate() {
        hermitian_extend(row.as_slice().expect("standard layout"), &mut buf);
        ifft.process(&mut buf);
        let start = l * config.hop();
        for n in 0..frame_len {
            out[start + n] += buf[n].re * window[n] * scale;
        }
    }
    Waveform::new(out, sample_rate)
}

/// Adjoint of [`istft`] as a real-linear map, so that
/// `<istft(A), b> = <A, istft_adjoint(b)>` with the real inner product over
/// real and imaginary parts.
pub fn istft_adjoint(grad_wave: &[f64], config: &StftConfig) -> Result<ComplexSpectrogram> {
    let frame_len = config.frame_len();
    let hop = config.hop();
    let len = grad_wave.len();
    if len < frame_len || !(len - frame_len).is_multiple_of(hop) {
        let frames = config.num_frames(len).max(1);
        return Err(Error::LengthMismatch {
            expected: config.synthesis_len(frames),
            actual: len,
        });
    }
    let frames = 1 + (len - frame_len) / hop;
    let n_fft = config.fft_len();
    let bins = config.num_bins();
    let window = config.window();
    let scale = 1.0 / (n_fft as f64 * config.overlap_gain());
    let fft = FftPlanner::new().plan_fft_forward(n_fft);

    let mut values = Array2::zeros((frames, bins));
    let mut buf = vec![Complex64::default(); n_fft];
    for (l, mut row) in values.rows_mut().into_iter().enumerate() {
        let start = l * hop;
        buf.fill(Complex64::default());
        for n in 0..frame_len {
            buf[n] = Complex64::new(grad_wave[start + n] * window[n] * scale, 0.0);
        }
        fft.process(&mut buf);
        for (k, dst) in row.iter_mut().enumerate() {
            *dst = buf[k] * hermitian_weight(k, n_fft);
        }
    }
    Ok(ComplexSpectrogram {
        values,
        config: *config,
    })
}

/// Scales every bin by its gain; the noisy phase is kept.
pub fn apply_mask(noisy: &ComplexSpectrogram, mask: &GainMask) -> Result<ComplexSpectrogram> {
    mask.check_dim(noisy.dim())?;
    let mut values = noisy.values().clone();
    values.zip_mut_with(mask.values(), |x, m| *x *= *m);
    Ok(ComplexSpectrogram {
        values,
        config: *noisy.config(),
    })
}

/// Number of times bin `k` appears in the full Hermitian spectrum.
pub(crate) fn hermitian_weight(k: usize, n_fft: usize) -> f64 {
    if k == 0 || 2 * k == n_fft {
        1.0
    } else {
        2.0
    }
}

fn hermitian_extend(half: &[Complex64], full: &mut [Complex64]) {
    let n = full.len();
    full.fill(Complex64::default());
    full[..half.len()].copy_from_slice(half);
    for k in 1..half.len() {
        if n - k != k {
            full[n - k] = half[k].conj();
        }
    }
}
