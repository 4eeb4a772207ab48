//! Photon arrival-rate function over the TCSPC interval.
//!
//! A pixel's arrival process is a constant floor (dark counts plus solar
//! background) with a Gaussian signal bump of area P_pp centered on the
//! round-trip time. This module builds that rate function, its integral over
//! the interval (the expected counts per pulse, alpha), and the per-bin
//! arrival probabilities in closed erf form.
//!
//! Bins are half-open `[(i-1)w, i*w)`, 1-based in the math and 0-based in
//! storage: `probs[i]` covers `[i*w, (i+1)*w)`.

use crate::constants::FWHM_FACTOR;
use crate::error::{Result, SimError};

/// Gaussian impulse response of the combined laser pulse and detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseResponse {
    /// Peak arrival time mu (s), the round-trip time to the target.
    pub peak_time_s: f64,
    /// Standard deviation sigma' of the impulse response (s).
    pub sigma_s: f64,
}

impl PulseResponse {
    /// Build from a peak time and the impulse-response FWHM.
    pub fn from_fwhm(peak_time_s: f64, fwhm_s: f64) -> Result<Self> {
        Ok(Self {
            peak_time_s,
            sigma_s: sigma_from_fwhm(fwhm_s)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_s > 0.0) || !self.sigma_s.is_finite() {
            return Err(SimError::domain(
                "pulse.sigma_s",
                format!("must be > 0, got {}", self.sigma_s),
            ));
        }
        if !self.peak_time_s.is_finite() {
            return Err(SimError::domain("pulse.peak_time_s", "must be finite"));
        }
        Ok(())
    }
}

/// Standard deviation of a Gaussian with the given FWHM:
/// `sigma = fwhm / (2 sqrt(2 ln 2))`.
pub fn sigma_from_fwhm(fwhm_s: f64) -> Result<f64> {
    if !(fwhm_s > 0.0) || !fwhm_s.is_finite() {
        return Err(SimError::domain(
            "fwhm",
            format!("must be > 0, got {fwhm_s}"),
        ));
    }
    Ok(fwhm_s / FWHM_FACTOR)
}

/// Per-pixel arrival-rate model over the TCSPC interval `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodModel {
    /// Dark count rate C_dc (Hz).
    pub dark_rate_hz: f64,
    /// Solar background rate C_bckg (Hz).
    pub background_rate_hz: f64,
    /// Expected signal photons per pulse P_pp.
    pub signal_ppp: f64,
    /// Signal impulse response.
    pub pulse: PulseResponse,
    /// TCSPC interval T = b * omega (s).
    pub tcspc_interval_s: f64,
}

impl LikelihoodModel {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("model.dark_rate_hz", self.dark_rate_hz),
            ("model.background_rate_hz", self.background_rate_hz),
            ("model.signal_ppp", self.signal_ppp),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(SimError::domain(field, format!("must be >= 0, got {v}")));
            }
        }
        if !(self.tcspc_interval_s > 0.0) {
            return Err(SimError::domain(
                "model.tcspc_interval_s",
                format!("must be > 0, got {}", self.tcspc_interval_s),
            ));
        }
        self.pulse.validate()
    }

    /// Constant floor rate C_dc + C_bckg (Hz).
    pub fn floor_rate_hz(&self) -> f64 {
        self.dark_rate_hz + self.background_rate_hz
    }

    /// Distance of the pulse peak from the nearer window edge, in units of
    /// sigma'. Negative when the peak lies outside `[0, T]`. The closed-form
    /// alpha over-counts once this drops below about 5.
    pub fn edge_sigma_margin(&self) -> f64 {
        let mu = self.pulse.peak_time_s;
        mu.min(self.tcspc_interval_s - mu) / self.pulse.sigma_s
    }
}

/// Arrival-rate density at time `t` (counts/s):
/// `C_dc + C_bckg + P_pp/(sigma' sqrt(2 pi)) * exp(-((t-mu)/sigma')^2 / 2)`.
pub fn likelihood_at(model: &LikelihoodModel, t: f64) -> f64 {
    let z = (t - model.pulse.peak_time_s) / model.pulse.sigma_s;
    model.floor_rate_hz()
        + model.signal_ppp / (model.pulse.sigma_s * (2.0 * std::f64::consts::PI).sqrt())
            * (-0.5 * z * z).exp()
}

/// Expected counts per pulse over the whole interval:
/// `alpha = T (C_dc + C_bckg) + P_pp`.
///
/// Exact for a pulse peak well inside the window; within about five sigma'
/// of an edge it over-counts the truncated signal tail (see
/// [`LikelihoodModel::edge_sigma_margin`]).
pub fn total_alpha(model: &LikelihoodModel) -> f64 {
    model.tcspc_interval_s * model.floor_rate_hz() + model.signal_ppp
}

/// Per-bin arrival probabilities for one pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct BinProbabilityVector {
    /// Probability per bin, clamped into [0, 1]; `probs[i]` covers
    /// `[i*w, (i+1)*w)`.
    pub probs: Vec<f64>,
    /// True if any bin hit the single-photon ceiling and was clamped.
    pub clamped: bool,
}

/// Probability that a photon arrives in each bin during one pulse, with the
/// signal peak displaced by `shift_s` (pulse jitter plus pixel trigger skew).
///
/// Element i (1-based) is
/// `w (C_dc + C_bckg) + P_pp/2 [erf((mu + s - (i-1)w)/(sigma' sqrt 2))
///                             - erf((mu + s - i w)/(sigma' sqrt 2))]`,
/// clamped into [0, 1]. Requires `n_bins * bin_width == T` to one part in 1e9.
pub fn bin_probabilities(
    model: &LikelihoodModel,
    n_bins: usize,
    bin_width_s: f64,
    shift_s: f64,
) -> Result<BinProbabilityVector> {
    model.validate()?;
    if n_bins == 0 {
        return Err(SimError::domain("n_bins", "must be >= 1"));
    }
    if !(bin_width_s > 0.0) {
        return Err(SimError::domain("bin_width_s", "must be > 0"));
    }
    let t_total = n_bins as f64 * bin_width_s;
    let rel = ((t_total - model.tcspc_interval_s) / model.tcspc_interval_s).abs();
    if rel > 1e-9 {
        return Err(SimError::domain(
            "n_bins*bin_width",
            format!(
                "must equal the TCSPC interval {} s, got {} s (rel dev {rel:e})",
                model.tcspc_interval_s, t_total
            ),
        ));
    }

    let mut out = BinProbabilityVector {
        probs: vec![0.0; n_bins],
        clamped: false,
    };
    fill_bin_probabilities(model, bin_width_s, shift_s, 0, &mut out.probs, &mut out.clamped);
    Ok(out)
}

/// Fill `probs` with the bin probabilities for bins starting at 0-based
/// index `first_bin`. Shared by the full-vector path and the sampler's
/// signal-window path; does not re-validate the model.
pub(crate) fn fill_bin_probabilities(
    model: &LikelihoodModel,
    bin_width_s: f64,
    shift_s: f64,
    first_bin: usize,
    probs: &mut [f64],
    clamped: &mut bool,
) {
    let peak = model.pulse.peak_time_s + shift_s;
    let inv = 1.0 / (model.pulse.sigma_s * std::f64::consts::SQRT_2);
    let floor = bin_width_s * model.floor_rate_hz();
    let half_signal = 0.5 * model.signal_ppp;

    // erf at the leading edge of the first bin, then marching one edge per bin.
    let mut upper_edge = libm::erf((peak - first_bin as f64 * bin_width_s) * inv);
    for (k, p) in probs.iter_mut().enumerate() {
        let edge_next = libm::erf((peak - (first_bin + k + 1) as f64 * bin_width_s) * inv);
        let raw = floor + half_signal * (upper_edge - edge_next);
        upper_edge = edge_next;
        *p = if raw < 0.0 {
            // Floating-point cancellation in the far tails can leave a tiny
            // negative residue; a probability is never negative.
            0.0
        } else if raw > 1.0 {
            *clamped = true;
            1.0
        } else {
            raw
        };
    }
}
