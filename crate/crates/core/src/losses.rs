//! Mask losses: the generalized loss with residual-noise control, its special
//! cases, and the magnitude-MSE, time-domain MSE and SI-SDR baselines.
//!
//! Spectral losses are averaged over all `L·K` bins so that the weight `mu`
//! keeps its meaning across utterance lengths. Each returns the value and the
//! gradient with respect to the gain mask.

use ndarray::{Array2, Zip};

use crate::error::{Error, Result};
use crate::signal::{
    apply_mask, ensure_same_dim, istft, istft_adjoint, stft, ComplexSpectrogram, GainMask,
    MagnitudeSpectrogram, StftConfig, Waveform,
};

/// Upper bound on reported SI-SDR, in dB. The lower bound is its negative.
pub const SI_SDR_CAP_DB: f64 = 60.0;

/// `(γ, α, μ, β₀)` with `β₀` as a linear amplitude factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParams {
    gamma: f64,
    alpha: f64,
    mu: f64,
    beta0: f64,
}

impl LossParams {
    pub fn new(gamma: f64, alpha: f64, mu: f64, beta0: f64) -> Result<Self> {
        if !(gamma >= 1.0 && gamma.is_finite()) {
            return Err(Error::invalid(format!("gamma must be >= 1, got {gamma}")));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be > 0, got {alpha}")));
        }
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::invalid(format!("mu must be >= 0, got {mu}")));
        }
        if !(0.0..=1.0).contains(&beta0) {
            return Err(Error::invalid(format!("beta0 must lie in [0, 1], got {beta0}")));
        }
        Ok(Self {
            gamma,
            alpha,
            mu,
            beta0,
        })
    }

    /// Same as [`LossParams::new`] with `β₀` given in dB (`-inf` maps to 0).
    pub fn with_beta0_db(gamma: f64, alpha: f64, mu: f64, beta0_db: f64) -> Result<Self> {
        Self::new(gamma, alpha, mu, db_to_amplitude(beta0_db))
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }
}

/// `10^(db/20)`
pub fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    pub grad_mask: Array2<f64>,
}

/// Loss value with the gradient taken with respect to an enhanced spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumLoss {
    pub value: f64,
    pub grad_spec: ComplexSpectrogram,
}

/// `x^e` with exact results for the exponents that occur in the reduction
/// cases, so reduced losses agree bit for bit with their direct forms.
#[inline]
fn pow(x: f64, e: f64) -> f64 {
    if e == 1.0 {
        x
    } else if e == 2.0 {
        x * x
    } else if e == 0.0 {
        1.0
    } else {
        x.powf(e)
    }
}

/// Smallest mask value used inside derivatives that have `M^(α−1)` with `α < 1`.
const MASK_DERIV_FLOOR: f64 = 1e-12;

#[inline]
fn mask_pow_deriv(m: f64, alpha: f64) -> f64 {
    if alpha < 1.0 {
        pow(m.max(MASK_DERIV_FLOOR), alpha - 1.0)
    } else {
        pow(m, alpha - 1.0)
    }
}

/// `((1 − M^α)|S|^α)^γ` and its derivative in `M`.
#[inline]
fn distortion_term(s: f64, m: f64, p: &LossParams) -> (f64, f64) {
    let sa = pow(s, p.alpha);
    let e = (1.0 - pow(m, p.alpha)) * sa;
    let value = pow(e, p.gamma);
    let grad = -p.gamma * pow(e, p.gamma - 1.0) * p.alpha * mask_pow_deriv(m, p.alpha) * sa;
    (value, grad)
}

/// `|(M|D|)^(αγ) − (β₀|D|)^(αγ)|` and its subgradient in `M` (zero at the kink).
#[inline]
fn residual_term(d: f64, m: f64, p: &LossParams) -> (f64, f64) {
    let order = p.alpha * p.gamma;
    let r = m * d;
    let diff = pow(r, order) - pow(p.beta0 * d, order);
    let sign = if diff > 0.0 {
        1.0
    } else if diff < 0.0 {
        -1.0
    } else {
        0.0
    };
    let grad = if sign == 0.0 {
        0.0
    } else {
        sign * order * pow(r, order - 1.0) * d
    };
    (diff.abs(), grad)
}

fn bins(dim: (usize, usize)) -> f64 {
    (dim.0 * dim.1).max(1) as f64
}

/// Compressed speech-distortion term.
pub fn loss_speech_distortion(
    clean_mag: &MagnitudeSpectrogram,
    mask: &GainMask,
    params: &LossParams,
) -> Result<LossResult> {
    mask.check_dim(clean_mag.dim())?;
    let n = bins(mask.dim());
    let mut total = 0.0;
    let mut grad = Array2::zeros(mask.dim());
    Zip::from(&mut grad)
        .and(clean_mag.values())
        .and(mask.values())
        .for_each(|g, &s, &m| {
            let (v, dv) = distortion_term(s, m, params);
            total += v;
            *g = dv / n;
        });
    Ok(LossResult {
        value: total / n,
        grad_mask: grad,
    })
}

/// Residual-noise term pulling `M|D|` toward the target level `β₀|D|`.
pub fn loss_residual_noise_controlled(
    noise_mag: &MagnitudeSpectrogram,
    mask: &GainMask,
    params: &LossParams,
) -> Result<LossResult> {
    mask.check_dim(noise_mag.dim())?;
    let n = bins(mask.dim());
    let mut total = 0.0;
    let mut grad = Array2::zeros(mask.dim());
    Zip::from(&mut grad)
        .and(noise_mag.values())
        .and(mask.values())
        .for_each(|g, &d, &m| {
            let (v, dv) = residual_term(d, m, params);
            total += v;
            *g = dv / n;
        });
    Ok(LossResult {
        value: total / n,
        grad_mask: grad,
    })
}

/// Speech distortion plus `mu` times the controlled residual-noise term.
pub fn loss_generalized(
    clean_mag: &MagnitudeSpectrogram,
    noise_mag: &MagnitudeSpectrogram,
    mask: &GainMask,
    params: &LossParams,
) -> Result<LossResult> {
    ensure_same_dim(clean_mag.dim(), noise_mag.dim())?;
    mask.check_dim(clean_mag.dim())?;
    let n = bins(mask.dim());
    let mu = params.mu;
    let (mut js, mut jd) = (0.0, 0.0);
    let mut grad = Array2::zeros(mask.dim());
    Zip::from(&mut grad)
        .and(clean_mag.values())
        .and(noise_mag.values())
        .and(mask.values())
        .for_each(|g, &s, &d, &m| {
            let (vs, gs) = distortion_term(s, m, params);
            let (vd, gd) = residual_term(d, m, params);
            js += vs;
            jd += vd;
            *g = (gs + mu * gd) / n;
        });
    Ok(LossResult {
        value: (js + mu * jd) / n,
        grad_mask: grad,
    })
}

/// `Σ((1−M)|S|)² + μ Σ(M|D|)²`, averaged over bins.
pub fn loss_components(
    clean_mag: &MagnitudeSpectrogram,
    noise_mag: &MagnitudeSpectrogram,
    mask: &GainMask,
    mu: f64,
) -> Result<LossResult> {
    ensure_same_dim(clean_mag.dim(), noise_mag.dim())?;
    mask.check_dim(clean_mag.dim())?;
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::invalid(format!("mu must be >= 0, got {mu}")));
    }
    let n = bins(mask.dim());
    let (mut js, mut jd) = (0.0, 0.0);
    let mut grad = Array2::zeros(mask.dim());
    Zip::from(&mut grad)
        .and(clean_mag.values())
        .and(noise_mag.values())
        .and(mask.values())
        .for_each(|g, &s, &d, &m| {
            let e = (1.0 - m) * s;
            let r = m * d;
            js += e * e;
            jd += r * r;
            *g = (-2.0 * e * s + mu * (2.0 * r * d)) / n;
        });
    Ok(LossResult {
        value: (js + mu * jd) / n,
        grad_mask: grad,
    })
}

/// `Σ(|S| − M|X|)²`, averaged over bins.
pub fn loss_mse_magnitude(
    clean_mag: &MagnitudeSpectrogram,
    noisy_mag: &MagnitudeSpectrogram,
    mask: &GainMask,
) -> Result<LossResult> {
    ensure_same_dim(clean_mag.dim(), noisy_mag.dim())?;
    mask.check_dim(clean_mag.dim())?;
    let n = bins(mask.dim());
    let mut total = 0.0;
    let mut grad = Array2::zeros(mask.dim());
    Zip::from(&mut grad)
        .and(clean_mag.values())
        .and(noisy_mag.values())
        .and(mask.values())
        .for_each(|g, &s, &x, &m| {
            let e = s - m * x;
            total += e * e;
            *g = -2.0 * e * x / n;
        });
    Ok(LossResult {
        value: total / n,
        grad_mask: grad,
    })
}

/// Samples compared by the time-domain losses: the complete overlap-add
/// region of the synthesis, limited to the reference length.
fn time_support(clean: &Waveform, spec: &ComplexSpectrogram) -> Result<std::ops::Range<usize>> {
    let config = spec.config();
    let synth_len = config.synthesis_len(spec.num_frames());
    if synth_len < clean.len() {
        return Err(Error::LengthMismatch {
            expected: clean.len(),
            actual: synth_len,
        });
    }
    let interior = config.interior(spec.num_frames());
    let range = interior.start..interior.end.min(clean.len());
    if range.is_empty() {
        return Err(Error::DegenerateSignal(
            "no complete overlap-add samples to compare".into(),
        ));
    }
    Ok(range)
}

fn spectrum_grad(grad_wave: Vec<f64>, config: &StftConfig) -> Result<ComplexSpectrogram> {
    istft_adjoint(&grad_wave, config)
}

/// Mean squared sample error between `clean` and the synthesis of `enhanced`.
pub fn time_mse(clean: &Waveform, enhanced: &ComplexSpectrogram) -> Result<SpectrumLoss> {
    let range = time_support(clean, enhanced)?;
    let estimate = istft(enhanced, clean.sample_rate())?;
    let (s, e) = (clean.samples(), estimate.samples());
    let count = range.len() as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; estimate.len()];
    for i in range {
        let diff = e[i] - s[i];
        value += diff * diff;
        grad[i] = 2.0 * diff / count;
    }
    Ok(SpectrumLoss {
        value: value / count,
        grad_spec: spectrum_grad(grad, enhanced.config())?,
    })
}

/// SI-SDR in dB, clamped to `±SI_SDR_CAP_DB`, with its gradient with respect
/// to `estimate` (zero where the clamp is active).
pub fn si_sdr_with_grad(reference: &[f64], estimate: &[f64]) -> Result<(f64, Vec<f64>)> {
    if reference.len() != estimate.len() {
        return Err(Error::LengthMismatch {
            expected: reference.len(),
            actual: estimate.len(),
        });
    }
    let ref_energy: f64 = reference.iter().map(|v| v * v).sum();
    if ref_energy == 0.0 {
        return Err(Error::DegenerateSignal("zero-energy reference".into()));
    }
    let est_energy: f64 = estimate.iter().map(|v| v * v).sum();
    if est_energy == 0.0 {
        return Err(Error::DegenerateSignal("zero-energy estimate".into()));
    }
    let dot: f64 = reference.iter().zip(estimate).map(|(s, e)| s * e).sum();
    let scale = dot / ref_energy;
    let target_energy = scale * scale * ref_energy;
    let error_energy: f64 = reference
        .iter()
        .zip(estimate)
        .map(|(s, e)| (scale * s - e).powi(2))
        .sum();
    let zero = || vec![0.0; estimate.len()];
    if error_energy == 0.0 {
        return Ok((SI_SDR_CAP_DB, zero()));
    }
    if target_energy == 0.0 {
        return Ok((-SI_SDR_CAP_DB, zero()));
    }
    let db = 10.0 * (target_energy / error_energy).log10();
    if db >= SI_SDR_CAP_DB {
        return Ok((SI_SDR_CAP_DB, zero()));
    }
    if db <= -SI_SDR_CAP_DB {
        return Ok((-SI_SDR_CAP_DB, zero()));
    }
    // target = dot²/‖s‖², error = ‖ŝ‖² − dot²/‖s‖²
    let k = 10.0 / std::f64::consts::LN_10;
    let grad = reference
        .iter()
        .zip(estimate)
        .map(|(s, e)| {
            let d_target = 2.0 * dot * s / ref_energy;
            let d_error = 2.0 * e - d_target;
            k * (d_target / target_energy - d_error / error_energy)
        })
        .collect();
    Ok((db, grad))
}

/// Negative SI-SDR of the synthesis of `enhanced` against `clean`.
pub fn si_sdr_loss(clean: &Waveform, enhanced: &ComplexSpectrogram) -> Result<SpectrumLoss> {
    let range = time_support(clean, enhanced)?;
    let estimate = istft(enhanced, clean.sample_rate())?;
    let (db, grad_db) = si_sdr_with_grad(
        &clean.samples()[range.clone()],
        &estimate.samples()[range.clone()],
    )?;
    let mut grad = vec![0.0; estimate.len()];
    for (dst, g) in grad[range].iter_mut().zip(grad_db) {
        *dst = -g;
    }
    Ok(SpectrumLoss {
        value: -db,
        grad_spec: spectrum_grad(grad, enhanced.config())?,
    })
}

/// Chains a gradient on `M·X` back to the real mask: `Re(conj(X)·G)`.
pub fn mask_grad_from_spectrum(
    noisy: &ComplexSpectrogram,
    grad_spec: &ComplexSpectrogram,
) -> Result<Array2<f64>> {
    ensure_same_dim(noisy.dim(), grad_spec.dim())?;
    Ok(Zip::from(noisy.values())
        .and(grad_spec.values())
        .map_collect(|x, g| x.re * g.re + x.im * g.im))
}

/// Time-domain MSE of the masked noisy spectrum, differentiated in the mask.
pub fn loss_time_mse(
    clean: &Waveform,
    noisy: &ComplexSpectrogram,
    mask: &GainMask,
) -> Result<LossResult> {
    let enhanced = apply_mask(noisy, mask)?;
    let loss = time_mse(clean, &enhanced)?;
    Ok(LossResult {
        value: loss.value,
        grad_mask: mask_grad_from_spectrum(noisy, &loss.grad_spec)?,
    })
}

/// Negative SI-SDR of the masked noisy spectrum, differentiated in the mask.
pub fn loss_si_sdr(
    clean: &Waveform,
    noisy: &ComplexSpectrogram,
    mask: &GainMask,
) -> Result<LossResult> {
    let enhanced = apply_mask(noisy, mask)?;
    let loss = si_sdr_loss(clean, &enhanced)?;
    Ok(LossResult {
        value: loss.value,
        grad_mask: mask_grad_from_spectrum(noisy, &loss.grad_spec)?,
    })
}

/// Terms of `Σ|S − M·X|²` with `X = S + D`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    /// `Σ|(1−M)S|²`
    pub distortion_power: f64,
    /// `Σ|M·D|²`
    pub residual_power: f64,
    /// `−2 Σ Re{(1−M)S · conj(M·D)}`
    pub cross_term: f64,
}

impl Decomposition {
    pub fn total(&self) -> f64 {
        self.distortion_power + self.residual_power + self.cross_term
    }
}

/// Splits the complex-spectrum squared error into speech distortion,
/// residual noise and their cross term.
pub fn decompose_complex_mse(
    clean: &ComplexSpectrogram,
    noise: &ComplexSpectrogram,
    mask: &GainMask,
) -> Result<Decomposition> {
    ensure_same_dim(clean.dim(), noise.dim())?;
    mask.check_dim(clean.dim())?;
    let mut out = Decomposition {
        distortion_power: 0.0,
        residual_power: 0.0,
        cross_term: 0.0,
    };
    Zip::from(clean.values())
        .and(noise.values())
        .and(mask.values())
        .for_each(|s, d, &m| {
            let distortion = s * (1.0 - m);
            let residual = d * m;
            out.distortion_power += distortion.norm_sqr();
            out.residual_power += residual.norm_sqr();
            out.cross_term -= 2.0 * (distortion * residual.conj()).re;
        });
    Ok(out)
}

/// Complex-spectrum squared error `Σ|S − M(S + D)|²`.
pub fn complex_mse(
    clean: &ComplexSpectrogram,
    noise: &ComplexSpectrogram,
    mask: &GainMask,
) -> Result<f64> {
    ensure_same_dim(clean.dim(), noise.dim())?;
    mask.check_dim(clean.dim())?;
    let mut total = 0.0;
    Zip::from(clean.values())
        .and(noise.values())
        .and(mask.values())
        .for_each(|s, d, &m| total += (s - (s + d) * m).norm_sqr());
    Ok(total)
}

/// Everything a loss may need about one training utterance.
#[derive(Debug, Clone)]
pub struct Supervision {
    pub noisy: ComplexSpectrogram,
    pub noisy_mag: MagnitudeSpectrogram,
    pub clean: ComplexSpectrogram,
    pub clean_mag: MagnitudeSpectrogram,
    pub noise: ComplexSpectrogram,
    pub noise_mag: MagnitudeSpectrogram,
    pub clean_wave: Waveform,
}

impl Supervision {
    /// Analyzes the clean and noise components; the noisy spectrum is their
    /// sum by linearity of the transform.
    pub fn from_components(clean: &Waveform, noise: &Waveform, config: &StftConfig) -> Result<Self> {
        if clean.len() != noise.len() {
            return Err(Error::LengthMismatch {
                expected: clean.len(),
                actual: noise.len(),
            });
        }
        let clean_spec = stft(clean, config)?;
        let noise_spec = stft(noise, config)?;
        let noisy = ComplexSpectrogram::new(
            clean_spec.values() + noise_spec.values(),
            *config,
        )?;
        Ok(Self {
            noisy_mag: noisy.magnitude(),
            noisy,
            clean_mag: clean_spec.magnitude(),
            clean: clean_spec,
            noise_mag: noise_spec.magnitude(),
            noise: noise_spec,
            clean_wave: clean.clone(),
        })
    }

    pub fn dim(&self) -> (usize, usize) {
        self.noisy.dim()
    }
}

/// Training objective selector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    /// Generalized loss with residual-noise control.
    Generalized(LossParams),
    /// Components loss with weight `mu`.
    Components { mu: f64 },
    /// Magnitude MSE of the masked noisy spectrum.
    MseMagnitude,
    /// Time-domain MSE after synthesis.
    TimeMse,
    /// Negative SI-SDR after synthesis.
    SiSdr,
}

impl LossKind {
    pub fn evaluate(&self, target: &Supervision, mask: &GainMask) -> Result<LossResult> {
        match self {
            LossKind::Generalized(p) => loss_generalized(&target.clean_mag, &target.noise_mag, mask, p),
            LossKind::Components { mu } => {
                loss_components(&target.clean_mag, &target.noise_mag, mask, *mu)
            }
            LossKind::MseMagnitude => loss_mse_magnitude(&target.clean_mag, &target.noisy_mag, mask),
            LossKind::TimeMse => loss_time_mse(&target.clean_wave, &target.noisy, mask),
            LossKind::SiSdr => loss_si_sdr(&target.clean_wave, &target.noisy, mask),
        }
    }

    pub fn short_name(&self) -> &'static str {
        match self {
            LossKind::Generalized(_) => "gl",
            LossKind::Components { .. } => "cl",
            LossKind::MseMagnitude => "mse",
            LossKind::TimeMse => "tmse",
            LossKind::SiSdr => "sisdr",
        }
    }
}
