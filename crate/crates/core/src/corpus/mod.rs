//! Synthetic desk-scale corpus: speech-like signals, noise generators and
//! SNR-controlled mixing.

mod dataset;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::derive_seed;
use crate::signal::Waveform;

pub use dataset::{
    build_dataset, generate_utterance, load_dataset, DatasetEntry, Manifest, Utterance,
    DATASET_INDEX,
};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Frame length used for activity decisions, in seconds.
pub const ACTIVITY_FRAME_S: f64 = 0.032;

/// Activity threshold below the loudest frame, in dB.
pub const ACTIVITY_THRESHOLD_DB: f64 = 40.0;

/// Largest absolute sample value in a generated mixture.
pub const PEAK_HEADROOM: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    White,
    Pink,
    Modulated,
    MultitoneBabble,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 4] = [
        NoiseKind::White,
        NoiseKind::Pink,
        NoiseKind::Modulated,
        NoiseKind::MultitoneBabble,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            NoiseKind::White => "white",
            NoiseKind::Pink => "pink",
            NoiseKind::Modulated => "modulated",
            NoiseKind::MultitoneBabble => "multitone-babble",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NoiseKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown noise kind `{s}`")))
    }
}

/// Recipe for one noisy utterance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    pub snr_db: f64,
    pub noise_kind: NoiseKind,
    /// Seed of the noise generator.
    pub seed: u64,
    pub speech_seed: u64,
    /// Length of the speech part, in seconds.
    pub duration_s: f64,
    /// Silence prepended to the speech, in seconds.
    pub leading_pause_s: f64,
}

impl MixSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::invalid(format!("duration_s must be > 0, got {}", self.duration_s)));
        }
        if !(self.leading_pause_s >= 0.0 && self.leading_pause_s.is_finite()) {
            return Err(Error::invalid(format!(
                "leading_pause_s must be >= 0, got {}",
                self.leading_pause_s
            )));
        }
        if self.snr_db.is_nan() {
            return Err(Error::invalid("snr_db is NaN"));
        }
        Ok(())
    }

    /// Total utterance length in seconds.
    pub fn total_duration_s(&self) -> f64 {
        self.leading_pause_s + self.duration_s
    }
}

fn num_samples(duration_s: f64, sample_rate: u32) -> usize {
    (duration_s * sample_rate as f64).round() as usize
}

/// Voice-like harmonic signal: words of a few hundred milliseconds with a
/// gliding fundamental in 100-300 Hz, drifting formant resonances and a 4 Hz
/// syllabic amplitude modulation, separated by exactly silent gaps. Every
/// partial stays below `0.45·sample_rate`. Peak-normalized to 0.5.
pub fn synth_speech(seed: u64, duration_s: f64, sample_rate: u32) -> Result<Waveform> {
    if !(duration_s >= 1.0 && duration_s.is_finite()) {
        return Err(Error::invalid(format!("speech duration must be >= 1 s, got {duration_s}")));
    }
    if sample_rate < 1000 {
        return Err(Error::invalid(format!("sample rate {sample_rate} too low")));
    }
    let sr = sample_rate as f64;
    let n = num_samples(duration_s, sample_rate);
    let mut out = vec![0.0; n];
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x5EEC));

    let f0_base: f64 = rng.random_range(110.0..220.0);
    let tract: f64 = rng.random_range(0.9..1.1);
    let nyquist_guard = 0.45 * sr;

    let mut pos = num_samples(rng.random_range(0.1..0.3), sample_rate);
    while pos < n {
        let word_len = num_samples(rng.random_range(0.18..0.45), sample_rate).min(n - pos);
        let f0_start = (f0_base * rng.random_range(0.85..1.15)).clamp(100.0, 300.0);
        let f0_end = (f0_base * rng.random_range(0.8..1.2)).clamp(100.0, 300.0);
        let vowel = |rng: &mut ChaCha8Rng| {
            [
                tract * rng.random_range(300.0..850.0),
                tract * rng.random_range(850.0..2300.0),
                tract * rng.random_range(2300.0..3300.0),
            ]
        };
        let (form_a, form_b) = (vowel(&mut rng), vowel(&mut rng));
        let mod_phase: f64 = rng.random_range(0.0..2.0 * PI);
        let f0_max = f0_start.max(f0_end);
        let partials = ((nyquist_guard / f0_max).floor() as usize).max(1);
        let mut phases: Vec<f64> = (0..partials).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        let mut amps = vec![0.0; partials];

        for i in 0..word_len {
            let frac = i as f64 / word_len.max(1) as f64;
            let f0 = f0_start + (f0_end - f0_start) * frac;
            if i % 32 == 0 {
                for (h, amp) in amps.iter_mut().enumerate() {
                    let freq = (h + 1) as f64 * f0;
                    let mut a = 0.02;
                    for (j, gain) in [1.0, 0.5, 0.25].into_iter().enumerate() {
                        let centre = form_a[j] + (form_b[j] - form_a[j]) * frac;
                        let bw = 80.0 + 0.06 * centre;
                        a += gain * (-0.5 * ((freq - centre) / bw).powi(2)).exp();
                    }
                    *amp = a / ((h + 1) as f64).sqrt();
                }
            }
            let t = i as f64 / sr;
            let envelope = (PI * frac).sin().powi(2) * (1.0 + 0.3 * (2.0 * PI * 4.0 * t + mod_phase).sin());
            let mut sample = 0.0;
            for (h, (phase, amp)) in phases.iter_mut().zip(&amps).enumerate() {
                *phase += 2.0 * PI * (h + 1) as f64 * f0 / sr;
                sample += amp * phase.sin();
            }
            out[pos + i] = envelope * sample;
        }
        for phase in phases.iter_mut() {
            *phase %= 2.0 * PI;
        }
        pos += word_len;
        pos += num_samples(rng.random_range(0.12..0.35), sample_rate);
    }

    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.5 / peak);
    }
    Waveform::new(out, sample_rate)
}

fn normalize_unit_variance(samples: &mut [f64]) {
    let n = samples.len().max(1) as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var > 0.0 {
        let scale = 1.0 / var.sqrt();
        samples.iter_mut().for_each(|v| *v = (*v - mean) * scale);
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Noise of the requested kind with zero mean and unit variance (white noise
/// is raw i.i.d. Gaussian).
pub fn synth_noise(kind: NoiseKind, seed: u64, duration_s: f64, sample_rate: u32) -> Result<Waveform> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::invalid(format!("noise duration must be > 0, got {duration_s}")));
    }
    let n = num_samples(duration_s, sample_rate);
    if n == 0 {
        return Err(Error::invalid("noise duration shorter than one sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x0015E));
    let samples = match kind {
        NoiseKind::White => gaussian(&mut rng, n),
        NoiseKind::Pink => {
            let mut spec: Vec<Complex64> = gaussian(&mut rng, n)
                .into_iter()
                .map(|v| Complex64::new(v, 0.0))
                .collect();
            let mut planner = FftPlanner::new();
            planner.plan_fft_forward(n).process(&mut spec);
            // Power ∝ 1/f: scale amplitude by 1/sqrt(f) on both halves.
            spec[0] = Complex64::default();
            for (k, c) in spec.iter_mut().enumerate().skip(1) {
                *c /= (k.min(n - k) as f64).sqrt();
            }
            planner.plan_fft_inverse(n).process(&mut spec);
            let mut out: Vec<f64> = spec.into_iter().map(|c| c.re).collect();
            normalize_unit_variance(&mut out);
            out
        }
        NoiseKind::Modulated => {
            let phase: f64 = rng.random_range(0.0..2.0 * PI);
            let mut out: Vec<f64> = gaussian(&mut rng, n)
                .into_iter()
                .enumerate()
                .map(|(i, v)| {
                    let t = i as f64 / sample_rate as f64;
                    v * (1.0 + 0.8 * (2.0 * PI * 4.0 * t + phase).sin())
                })
                .collect();
            normalize_unit_variance(&mut out);
            out
        }
        NoiseKind::MultitoneBabble => {
            let stream_len = duration_s.max(1.0);
            let mut out = vec![0.0; n];
            for talker in 0..8 {
                let speech = synth_speech(derive_seed(seed, 100 + talker), stream_len, sample_rate)?;
                out.iter_mut()
                    .zip(speech.samples())
                    .for_each(|(o, s)| *o += s);
            }
            normalize_unit_variance(&mut out);
            out
        }
    };
    Waveform::new(samples, sample_rate)
}

/// Per-frame activity of `wave` with non-overlapping 32 ms frames: a frame is
/// active when its energy is within 40 dB of the loudest frame.
pub fn frame_activity(wave: &Waveform) -> Vec<bool> {
    let frame = num_samples(ACTIVITY_FRAME_S, wave.sample_rate()).max(1);
    let energies: Vec<f64> = wave
        .samples()
        .chunks(frame)
        .map(|c| c.iter().map(|v| v * v).sum())
        .collect();
    let peak = energies.iter().copied().fold(0.0, f64::max);
    let floor = peak * 10f64.powf(-ACTIVITY_THRESHOLD_DB / 10.0);
    energies.iter().map(|&e| peak > 0.0 && e > floor).collect()
}

/// Mean power of `wave` over its active frames.
pub fn active_power(wave: &Waveform) -> f64 {
    let frame = num_samples(ACTIVITY_FRAME_S, wave.sample_rate()).max(1);
    let (mut energy, mut count) = (0.0, 0usize);
    for (chunk, active) in wave.samples().chunks(frame).zip(frame_activity(wave)) {
        if active {
            energy += chunk.iter().map(|v| v * v).sum::<f64>();
            count += chunk.len();
        }
    }
    if count == 0 {
        0.0
    } else {
        energy / count as f64
    }
}

/// Mean power over all samples.
pub fn mean_power(wave: &Waveform) -> f64 {
    wave.energy() / wave.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub noisy: Waveform,
    pub scaled_noise: Waveform,
    /// Factor applied to the input noise.
    pub noise_gain: f64,
}

/// Scales `noise` so that active-frame speech power over full-utterance noise
/// power equals `snr_db`, and adds it to `speech`. Noise longer than the
/// speech is trimmed.
pub fn mix_at_snr(speech: &Waveform, noise: &Waveform, snr_db: f64) -> Result<Mixture> {
    if speech.sample_rate() != noise.sample_rate() {
        return Err(Error::invalid(format!(
            "sample rates differ: {} vs {}",
            speech.sample_rate(),
            noise.sample_rate()
        )));
    }
    if noise.len() < speech.len() {
        return Err(Error::LengthMismatch {
            expected: speech.len(),
            actual: noise.len(),
        });
    }
    if snr_db.is_nan() {
        return Err(Error::invalid("snr_db is NaN"));
    }
    let noise = noise.truncated(speech.len());
    let speech_power = active_power(speech);
    let noise_power = mean_power(&noise);
    if speech_power == 0.0 {
        return Err(Error::DegenerateSignal("speech has zero energy".into()));
    }
    if noise_power == 0.0 {
        return Err(Error::DegenerateSignal("noise has zero energy".into()));
    }
    let noise_gain = (speech_power / (noise_power * 10f64.powf(snr_db / 10.0))).sqrt();
    let scaled: Vec<f64> = noise.samples().iter().map(|v| v * noise_gain).collect();
    let noisy: Vec<f64> = speech.samples().iter().zip(&scaled).map(|(s, d)| s + d).collect();
    Ok(Mixture {
        noisy: Waveform::new(noisy, speech.sample_rate())?,
        scaled_noise: Waveform::new(scaled, speech.sample_rate())?,
        noise_gain,
    })
}

/// `10·log10(active speech power / noise power)`.
pub fn measured_snr_db(speech: &Waveform, noise: &Waveform) -> f64 {
    10.0 * (active_power(speech) / mean_power(noise)).log10()
}
