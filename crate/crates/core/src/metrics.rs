//! Objective scores computed by shadow filtering: the estimated mask is applied
//! separately to the oracle speech and noise spectra.

use ndarray::Zip;

use crate::error::{Error, Result};
use crate::losses::si_sdr_with_grad;
use crate::signal::{ComplexSpectrogram, GainMask, Waveform};

/// Reported value when the masked (or residual) energy is exactly zero.
pub const METRIC_CAP_DB: f64 = 100.0;

/// Frames whose energy is more than this many dB below the loudest frame are
/// treated as speech pauses.
pub const DEFAULT_ACTIVITY_THRESHOLD_DB: f64 = 40.0;

fn ratio_db(reference: f64, processed: f64) -> f64 {
    if processed == 0.0 {
        METRIC_CAP_DB
    } else {
        (10.0 * (reference / processed).log10()).min(METRIC_CAP_DB)
    }
}

/// `10·log10(Σ|D|² / Σ|M·D|²)` over all bins.
pub fn noise_attenuation(noise: &ComplexSpectrogram, mask: &GainMask) -> Result<f64> {
    mask.check_dim(noise.dim())?;
    let mut before = 0.0;
    let mut after = 0.0;
    Zip::from(noise.values())
        .and(mask.values())
        .for_each(|d, &m| {
            let p = d.norm_sqr();
            before += p;
            after += m * m * p;
        });
    if before == 0.0 {
        return Err(Error::DegenerateSignal("noise spectrum has zero energy".into()));
    }
    Ok(ratio_db(before, after))
}

/// Frames of `spec` whose energy is within `threshold_db` of the loudest frame.
pub fn active_frames(spec: &ComplexSpectrogram, threshold_db: f64) -> Vec<bool> {
    let energies: Vec<f64> = spec
        .values()
        .rows()
        .into_iter()
        .map(|row| row.iter().map(|v| v.norm_sqr()).sum())
        .collect();
    let peak = energies.iter().copied().fold(0.0, f64::max);
    if peak == 0.0 {
        return vec![false; energies.len()];
    }
    let floor = peak * 10f64.powf(-threshold_db / 10.0);
    energies.iter().map(|&e| e > floor).collect()
}

/// Speech attenuation with the default −40 dB activity threshold.
pub fn speech_attenuation(clean: &ComplexSpectrogram, mask: &GainMask) -> Result<f64> {
    speech_attenuation_with_threshold(clean, mask, DEFAULT_ACTIVITY_THRESHOLD_DB)
}

/// `10·log10(Σ|S|² / Σ|M·S|²)` over speech-active frames.
pub fn speech_attenuation_with_threshold(
    clean: &ComplexSpectrogram,
    mask: &GainMask,
    threshold_db: f64,
) -> Result<f64> {
    mask.check_dim(clean.dim())?;
    let active = active_frames(clean, threshold_db);
    if !active.iter().any(|a| *a) {
        return Err(Error::NoSpeech);
    }
    let mut before = 0.0;
    let mut after = 0.0;
    for (l, is_active) in active.iter().enumerate() {
        if !is_active {
            continue;
        }
        for (s, m) in clean.values().row(l).iter().zip(mask.values().row(l)) {
            let p = s.norm_sqr();
            before += p;
            after += m * m * p;
        }
    }
    Ok(ratio_db(before, after))
}

/// `10·log10(‖s‖² / ‖s − ŝ‖²)`, capped at 100 dB.
pub fn sdr(clean: &Waveform, enhanced: &Waveform) -> Result<f64> {
    if clean.len() != enhanced.len() {
        return Err(Error::LengthMismatch {
            expected: clean.len(),
            actual: enhanced.len(),
        });
    }
    let reference = clean.energy();
    if reference == 0.0 {
        return Err(Error::DegenerateSignal("zero-energy reference".into()));
    }
    let error: f64 = clean
        .samples()
        .iter()
        .zip(enhanced.samples())
        .map(|(s, e)| (s - e) * (s - e))
        .sum();
    Ok(ratio_db(reference, error))
}

/// SI-SDR in dB, clamped to ±60 dB; the same computation as the SI-SDR loss.
pub fn si_sdr_metric(clean: &Waveform, enhanced: &Waveform) -> Result<f64> {
    Ok(si_sdr_with_grad(clean.samples(), enhanced.samples())?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::SI_SDR_CAP_DB;
    use crate::signal::{stft, StftConfig, WindowKind};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rustfft::num_complex::Complex64;

    fn random_spec(seed: u64, dim: (usize, usize)) -> ComplexSpectrogram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let config = StftConfig::new(2 * (dim.1 - 1), dim.1 - 1, 2 * (dim.1 - 1), WindowKind::SqrtHann).unwrap();
        ComplexSpectrogram::new(
            Array2::from_shape_fn(dim, |_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))),
            config,
        )
        .unwrap()
    }

    #[test]
    fn noise_attenuation_values() {
        let d = random_spec(1, (6, 9));
        assert_eq!(noise_attenuation(&d, &GainMask::constant((6, 9), 1.0).unwrap()).unwrap(), 0.0);
        let na = noise_attenuation(&d, &GainMask::constant((6, 9), 0.1).unwrap()).unwrap();
        assert!((na - 20.0).abs() < 1e-9);
        assert_eq!(noise_attenuation(&d, &GainMask::constant((6, 9), 0.0).unwrap()).unwrap(), METRIC_CAP_DB);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mask = GainMask::new(Array2::from_shape_fn((6, 9), |_| rng.random_range(0.0..1.0))).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for l in 0..6 {
            for k in 0..9 {
                let p = d.values()[[l, k]].re.powi(2) + d.values()[[l, k]].im.powi(2);
                num += p;
                den += p * mask.values()[[l, k]].powi(2);
            }
        }
        let direct = 10.0 * (num / den).log10();
        assert!((noise_attenuation(&d, &mask).unwrap() - direct).abs() < 1e-9);
    }

    #[test]
    fn scaling_covariance() {
        let d = random_spec(2, (5, 9));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let base = Array2::from_shape_fn((5, 9), |_| rng.random_range(0.1..1.0));
        let mask = GainMask::new(base.clone()).unwrap();
        for c in [0.9, 0.5, 0.01] {
            let scaled = GainMask::new(&base * c).unwrap();
            let shift = -20.0 * f64::log10(c);
            let na = noise_attenuation(&d, &scaled).unwrap() - noise_attenuation(&d, &mask).unwrap();
            let sa = speech_attenuation(&d, &scaled).unwrap() - speech_attenuation(&d, &mask).unwrap();
            assert!((na - shift).abs() < 1e-9 && (sa - shift).abs() < 1e-9);
        }
    }

    #[test]
    fn speech_attenuation_values() {
        let s = random_spec(3, (4, 9));
        assert_eq!(speech_attenuation(&s, &GainMask::constant((4, 9), 1.0).unwrap()).unwrap(), 0.0);
        let sa = speech_attenuation(&s, &GainMask::constant((4, 9), 0.5).unwrap()).unwrap();
        assert!((sa - 20.0 * 2f64.log10()).abs() < 1e-12);
        assert!((sa - 6.0206).abs() < 1e-4);

        let config = StftConfig::new(16, 8, 16, WindowKind::SqrtHann).unwrap();
        let silent = stft(&Waveform::zeros(64, 8000).unwrap(), &config).unwrap();
        assert!(matches!(
            speech_attenuation(&silent, &GainMask::constant(silent.dim(), 0.5).unwrap()),
            Err(Error::NoSpeech)
        ));
    }

    #[test]
    fn quiet_frames_are_ignored() {
        let mut values = random_spec(5, (3, 9)).values().clone();
        values.row_mut(2).mapv_inplace(|v| v * 1e-4);
        let spec = ComplexSpectrogram::new(values, *random_spec(5, (3, 9)).config()).unwrap();
        assert_eq!(active_frames(&spec, 40.0), vec![true, true, false]);
        let mut m = Array2::from_elem((3, 9), 1.0);
        m.row_mut(2).fill(0.0);
        assert_eq!(speech_attenuation(&spec, &GainMask::new(m).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn sdr_values() {
        let s = Waveform::new((0..100).map(|n| (n as f64 * 0.2).sin()).collect(), 8000).unwrap();
        assert_eq!(sdr(&s, &s).unwrap(), METRIC_CAP_DB);
        assert!(sdr(&s, &Waveform::zeros(100, 8000).unwrap()).unwrap().abs() < 1e-12);
        let e: Vec<f64> = (0..100).map(|n| if n % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let scale = (s.energy() / 100.0 / 100.0).sqrt();
        let noisy = Waveform::new(s.samples().iter().zip(&e).map(|(a, b)| a + scale * b).collect(), 8000).unwrap();
        assert!((sdr(&s, &noisy).unwrap() - 20.0).abs() < 1e-9);
        assert!(sdr(&s, &Waveform::zeros(99, 8000).unwrap()).is_err());
        assert!(sdr(&Waveform::zeros(100, 8000).unwrap(), &s).is_err());
    }

    #[test]
    fn si_sdr_metric_values() {
        let s = Waveform::new((0..128).map(|n| (n as f64 * 0.37).sin()).collect(), 8000).unwrap();
        let tripled = Waveform::new(s.samples().iter().map(|v| 3.0 * v).collect(), 8000).unwrap();
        assert_eq!(si_sdr_metric(&s, &tripled).unwrap(), SI_SDR_CAP_DB);
    }
}
