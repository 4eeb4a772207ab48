//! Fisher information and the Cramér-Rao bound on depth estimation.
//!
//! The information per pulse about the pulse-peak position has no closed
//! form: the integrand is a smooth bump over the constant floor, so it is
//! evaluated by adaptive quadrature refined around the peak. The per-pulse
//! information composes with the per-frame success probability and the frame
//! count into the Cramér-Rao lower bound on the standard deviation of any
//! unbiased peak estimator, and from there into the one-FWHM minimum
//! distinguishability.

use crate::constants::FWHM_FACTOR;
use crate::error::{Result, SimError};
use crate::likelihood::{total_alpha, LikelihoodModel};
use crate::quadrature;

/// Result of the per-pulse Fisher information quadrature.
#[derive(Debug, Clone, Copy)]
pub struct FisherResult {
    /// Fisher information per pulse with respect to the peak position (1/s^2).
    pub info_per_pulse: f64,
    /// Absolute quadrature error estimate (1/s^2).
    pub quadrature_abs_error: f64,
    /// Integrand evaluations used.
    pub evaluations: usize,
}

/// Histogram acquisition parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcquisitionSpec {
    /// Number of frames N accumulated per histogram.
    pub frames: u32,
    /// Exposure time per frame eta (s).
    pub exposure_s: f64,
    /// Laser repetition rate nu (Hz).
    pub rep_rate_hz: f64,
}

impl AcquisitionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.frames < 1 {
            return Err(SimError::domain("acquisition.frames", "must be >= 1"));
        }
        if !(self.exposure_s > 0.0) {
            return Err(SimError::domain("acquisition.exposure_s", "must be > 0"));
        }
        if !(self.rep_rate_hz > 0.0) {
            return Err(SimError::domain("acquisition.rep_rate_hz", "must be > 0"));
        }
        if self.pulses_per_frame() < 1.0 {
            return Err(SimError::domain(
                "acquisition",
                format!(
                    "exposure * rep rate must give at least one pulse per frame, got {}",
                    self.pulses_per_frame()
                ),
            ));
        }
        Ok(())
    }

    /// Pulses per frame eta * nu (real-valued, as it enters the bound).
    pub fn pulses_per_frame(&self) -> f64 {
        self.exposure_s * self.rep_rate_hz
    }

    /// Pulses per frame as the integer count the sampler fires.
    pub fn pulses_per_frame_count(&self) -> u32 {
        self.pulses_per_frame().round().max(1.0) as u32
    }
}

/// Quadrature controls for [`fisher_per_pulse`].
#[derive(Debug, Clone, Copy)]
pub struct FisherOptions {
    /// Relative tolerance on the integral.
    pub rel_tol: f64,
    /// Evaluation budget before reporting non-convergence.
    pub max_evaluations: usize,
}

impl Default for FisherOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            max_evaluations: 1_000_000,
        }
    }
}

/// Fisher information per pulse for the peak position, integrated over the
/// TCSPC interval.
///
/// The integrand is
/// `P_pp^2 (t-mu)^2 exp(-((t-mu)/sigma')^2) / (2 pi sigma'^6 alpha L(t))`,
/// refined within eight sigma' of the peak where all of its mass lives.
/// With no signal photons there is no depth information and F = 0.
pub fn fisher_per_pulse(model: &LikelihoodModel, opts: &FisherOptions) -> Result<FisherResult> {
    model.validate()?;
    let alpha = total_alpha(model);
    if !(alpha > 0.0) {
        return Err(SimError::domain(
            "model",
            "alpha must be > 0 for the Fisher information to be defined",
        ));
    }
    if model.signal_ppp == 0.0 {
        return Ok(FisherResult {
            info_per_pulse: 0.0,
            quadrature_abs_error: 0.0,
            evaluations: 0,
        });
    }

    let mu = model.pulse.peak_time_s;
    let sigma = model.pulse.sigma_s;
    let floor = model.floor_rate_hz();
    let ppp = model.signal_ppp;
    let norm = ppp / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let scale = ppp * ppp / (2.0 * std::f64::consts::PI * sigma.powi(6) * alpha);

    let integrand = move |t: f64| {
        let d = t - mu;
        let z = d / sigma;
        let g = (-0.5 * z * z).exp();
        if g == 0.0 {
            return 0.0;
        }
        let rate = floor + norm * g;
        if rate <= 0.0 {
            return 0.0;
        }
        scale * d * d * g * g / rate
    };

    let hints = [
        mu - 8.0 * sigma,
        mu - sigma,
        mu,
        mu + sigma,
        mu + 8.0 * sigma,
    ];
    let q = quadrature::integrate(
        integrand,
        0.0,
        model.tcspc_interval_s,
        &hints,
        opts.rel_tol,
        opts.max_evaluations,
    )?;
    Ok(FisherResult {
        info_per_pulse: q.value.max(0.0),
        quadrature_abs_error: q.abs_error_estimate,
        evaluations: q.evaluations,
    })
}

/// Probability of recording at least one photon in a frame:
/// `1 - (1 - alpha)^(eta nu)`.
///
/// Defined for expected counts per pulse below one; at or above one the
/// geometric form breaks down (see the saturated-regime note on
/// [`crate::likelihood::bin_probabilities`] clamping).
pub fn success_probability(alpha: f64, acq: &AcquisitionSpec) -> Result<f64> {
    acq.validate()?;
    if !(0.0..1.0).contains(&alpha) {
        return Err(SimError::domain(
            "alpha",
            format!(
                "success probability requires 0 <= alpha < 1, got {alpha}; at alpha >= 1 the \
                 per-pulse count saturates the single-photon limit and the geometric frame \
                 model does not apply"
            ),
        ));
    }
    // 1 - (1-a)^n via expm1/ln_1p keeps precision for the tiny alphas
    // typical of photon-starved links.
    Ok(-f64::exp_m1(acq.pulses_per_frame() * f64::ln_1p(-alpha)))
}

/// Cramér-Rao bound on the peak-position standard deviation, or the
/// statement that depth is not estimable from this configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CrbBound {
    /// `1 / sqrt(N [1-(1-alpha)^(eta nu)] F)`, in seconds.
    Finite(f64),
    /// Zero information or zero success probability: the bound diverges.
    NotEstimable,
}

impl CrbBound {
    /// The bound in seconds, infinite when not estimable.
    pub fn seconds(&self) -> f64 {
        match self {
            CrbBound::Finite(s) => *s,
            CrbBound::NotEstimable => f64::INFINITY,
        }
    }
}

/// Lower bound on the standard deviation of an unbiased estimate of the
/// histogram peak position accumulated over `acq.frames` frames.
pub fn crb_sigma_star(info_per_pulse: f64, alpha: f64, acq: &AcquisitionSpec) -> Result<CrbBound> {
    if !(info_per_pulse >= 0.0) {
        return Err(SimError::domain(
            "info_per_pulse",
            format!("must be >= 0, got {info_per_pulse}"),
        ));
    }
    let p = success_probability(alpha, acq)?;
    if info_per_pulse == 0.0 || p == 0.0 {
        return Ok(CrbBound::NotEstimable);
    }
    Ok(CrbBound::Finite(
        1.0 / (acq.frames as f64 * p * info_per_pulse).sqrt(),
    ))
}

/// Minimum distinguishability: two depths are resolvable when their estimate
/// distributions sit at least one FWHM apart, i.e.
/// `sigma_mu = 2 sqrt(2 ln 2) * sigma_mu_star`.
pub fn min_distinguishability(sigma_star_s: f64) -> f64 {
    sigma_star_s * FWHM_FACTOR
}
