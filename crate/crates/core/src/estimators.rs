//! Oracle a priori SNR and the closed-form gain family obtained from the
//! per-bin Lagrangian of speech distortion plus weighted residual noise.

use ndarray::{Array2, Zip};

use crate::error::{Error, Result};
use crate::signal::{ensure_same_dim, GainMask, MagnitudeSpectrogram};

pub const DEFAULT_SNR_FLOOR: f64 = 1e-12;

/// Per-bin a priori SNR `ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrField {
    values: Array2<f64>,
}

impl SnrField {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("SNR values must be finite and nonnegative"));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }
}

/// Parameters of the closed-form gain: multiplier `mu`, error exponent
/// `gamma` and spectral compression `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainParams {
    mu: f64,
    gamma: f64,
    alpha: f64,
}

impl GainParams {
    pub fn new(mu: f64, gamma: f64, alpha: f64) -> Result<Self> {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::invalid(format!("mu must be >= 0, got {mu}")));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be > 0, got {alpha}")));
        }
        if !gamma.is_finite() {
            return Err(Error::invalid(format!("gamma must be finite, got {gamma}")));
        }
        if gamma <= 1.0 {
            return Err(Error::SingularParameter(format!(
                "closed-form gain needs gamma > 1, got {gamma}"
            )));
        }
        Ok(Self { mu, gamma, alpha })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `αγ / (2γ − 2)`
    pub fn c1(&self) -> f64 {
        self.alpha * self.gamma / (2.0 * self.gamma - 2.0)
    }

    /// `1 / α`
    pub fn c2(&self) -> f64 {
        1.0 / self.alpha
    }

    /// Exponent applied to `mu` in the denominator, `2·c1·c2 − 1`.
    pub fn mu_exponent(&self) -> f64 {
        2.0 * self.c1() * self.c2() - 1.0
    }

    /// Gain for a single SNR value. With `mu = 0` nothing penalizes residual
    /// noise and the gain is 1 everywhere, including `ξ = 0`.
    pub fn gain(&self, xi: f64) -> f64 {
        if self.mu == 0.0 {
            return 1.0;
        }
        if xi <= 0.0 {
            return 0.0;
        }
        // (ξ^c1 / (μ^e + ξ^c1))^c2 written as (1 / (1 + μ^e ξ^-c1))^c2 so large
        // ξ cannot overflow.
        let ratio = self.mu.powf(self.mu_exponent()) * xi.powf(-self.c1());
        (1.0 / (1.0 + ratio)).powf(self.c2()).clamp(0.0, 1.0)
    }
}

/// `ξ = |S|² / max(|D|², floor)` from oracle magnitudes.
pub fn a_priori_snr(
    clean: &MagnitudeSpectrogram,
    noise: &MagnitudeSpectrogram,
    floor: f64,
) -> Result<SnrField> {
    ensure_same_dim(clean.dim(), noise.dim())?;
    if floor.is_nan() || floor < 0.0 {
        return Err(Error::invalid(format!("SNR floor must be >= 0, got {floor}")));
    }
    let values = Zip::from(clean.values())
        .and(noise.values())
        .map_collect(|s, d| {
            let denom = (d * d).max(floor);
            if denom == 0.0 {
                if *s == 0.0 {
                    0.0
                } else {
                    f64::MAX
                }
            } else {
                (s * s / denom).min(f64::MAX)
            }
        });
    SnrField::new(values)
}

/// `M = ξ / (ξ + μ)`; 1 everywhere when `mu = 0`.
pub fn wiener_gain(snr: &SnrField, mu: f64) -> Result<GainMask> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::invalid(format!("mu must be >= 0, got {mu}")));
    }
    Ok(GainMask::clamped(snr.values().mapv(|xi| {
        if mu == 0.0 {
            1.0
        } else if xi <= 0.0 {
            0.0
        } else {
            xi / (xi + mu)
        }
    })))
}

/// `M = (ξ^c1 / (μ^(2c1c2−1) + ξ^c1))^c2`, clamped to `[0, 1]`.
pub fn parametric_gain(snr: &SnrField, params: &GainParams) -> GainMask {
    GainMask::clamped(snr.values().mapv(|xi| params.gain(xi)))
}
