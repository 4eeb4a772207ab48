//! Optical link budget of the lidar channel.
//!
//! Computes the expected number of signal photons detected per laser pulse
//! per pixel, the solar background rate seen through the same optical path,
//! the signal-to-background-noise ratio, and the step-by-step energy chain
//! (pulse energy density at the target → per-pixel energy → scattered energy
//! at the aperture → detected energy) that the per-pulse photon count
//! algebraically reduces to. The chain is retained as an independent route
//! for cross-checking the closed-form product.
//!
//! All quantities are SI. Functions are pure and thread-safe.

use crate::constants::{PhysicalConstants, LAMBERTIAN_SPLIT_FACTOR};
use crate::error::{Result, SimError};

/// Laser illuminator parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaserSpec {
    /// Energy per pulse E0 (J).
    pub pulse_energy_j: f64,
    /// Repetition rate nu (Hz).
    pub rep_rate_hz: f64,
    /// Wavelength lambda (m).
    pub wavelength_m: f64,
    /// FWHM of the combined laser/SPAD impulse response (s).
    pub pulse_fwhm_s: f64,
    /// Mean of the per-pulse timing jitter (s).
    pub jitter_mean_s: f64,
    /// Standard deviation of the per-pulse timing jitter (s).
    pub jitter_std_s: f64,
}

impl LaserSpec {
    pub fn validate(&self) -> Result<()> {
        ensure_nonneg("laser.pulse_energy_j", self.pulse_energy_j)?;
        ensure_nonneg("laser.rep_rate_hz", self.rep_rate_hz)?;
        ensure_pos("laser.wavelength_m", self.wavelength_m)?;
        ensure_pos("laser.pulse_fwhm_s", self.pulse_fwhm_s)?;
        ensure_nonneg("laser.jitter_mean_s", self.jitter_mean_s)?;
        ensure_nonneg("laser.jitter_std_s", self.jitter_std_s)?;
        Ok(())
    }
}

/// Atmospheric path parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtmosphereSpec {
    /// Attenuation length C_atm (m).
    pub attenuation_length_m: f64,
    /// Solar background irradiance at the laser wavelength (W/m^2).
    pub solar_irradiance_w_m2: f64,
}

impl AtmosphereSpec {
    pub fn validate(&self) -> Result<()> {
        ensure_pos("atmosphere.attenuation_length_m", self.attenuation_length_m)?;
        ensure_nonneg("atmosphere.solar_irradiance_w_m2", self.solar_irradiance_w_m2)?;
        Ok(())
    }
}

/// Collection optics parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticsSpec {
    /// f-number of the collecting lens.
    pub f_number: f64,
    /// Beam divergence half-angle theta (rad).
    pub divergence_rad: f64,
    /// Focal length of the collecting lens (m). Cancels out of the per-pulse
    /// photon count; only the explicit energy chain needs it.
    pub focal_length_m: Option<f64>,
}

impl OpticsSpec {
    pub fn validate(&self) -> Result<()> {
        ensure_pos("optics.f_number", self.f_number)?;
        if !(self.divergence_rad > 0.0 && self.divergence_rad < std::f64::consts::FRAC_PI_2) {
            return Err(SimError::domain(
                "optics.divergence_rad",
                format!("must be in (0, pi/2), got {}", self.divergence_rad),
            ));
        }
        if let Some(f) = self.focal_length_m {
            ensure_pos("optics.focal_length_m", f)?;
        }
        Ok(())
    }
}

/// SPAD sensor parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorSpec {
    /// Effective pixel width W_p (m), pixel dimension times fill factor.
    pub pixel_width_m: f64,
    /// Effective pixel height H_p (m).
    pub pixel_height_m: f64,
    /// Quantum efficiency q, in [0, 1].
    pub quantum_efficiency: f64,
    /// Dark count rate C_dc (Hz).
    pub dark_rate_hz: f64,
    /// Number of TCSPC bins b per pixel.
    pub n_bins: usize,
    /// Bin width omega (s).
    pub bin_width_s: f64,
    /// Sensor rows.
    pub rows: usize,
    /// Sensor columns.
    pub cols: usize,
    /// Trigger-skew standard deviation at column 0 (s).
    pub sigma_q_start_s: f64,
    /// Trigger-skew standard deviation at the last column (s).
    pub sigma_q_end_s: f64,
}

impl SensorSpec {
    pub fn validate(&self) -> Result<()> {
        ensure_pos("sensor.pixel_width_m", self.pixel_width_m)?;
        ensure_pos("sensor.pixel_height_m", self.pixel_height_m)?;
        if !(0.0..=1.0).contains(&self.quantum_efficiency) {
            return Err(SimError::domain(
                "sensor.quantum_efficiency",
                format!("must be in [0, 1], got {}", self.quantum_efficiency),
            ));
        }
        ensure_nonneg("sensor.dark_rate_hz", self.dark_rate_hz)?;
        if self.n_bins < 1 {
            return Err(SimError::domain("sensor.n_bins", "must be >= 1"));
        }
        ensure_pos("sensor.bin_width_s", self.bin_width_s)?;
        if self.rows < 1 || self.cols < 1 {
            return Err(SimError::domain("sensor.rows/cols", "must be >= 1"));
        }
        ensure_nonneg("sensor.sigma_q_start_s", self.sigma_q_start_s)?;
        ensure_nonneg("sensor.sigma_q_end_s", self.sigma_q_end_s)?;
        Ok(())
    }

    /// Total TCSPC interval T = b * omega (s).
    pub fn tcspc_interval_s(&self) -> f64 {
        self.n_bins as f64 * self.bin_width_s
    }
}

/// One resolved patch of the target: the piece of surface a pixel sees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetPatch {
    /// Range R to the patch (m).
    pub range_m: f64,
    /// Lambertian reflectivity Gamma, in [0, 1].
    pub reflectivity: f64,
}

impl TargetPatch {
    pub fn new(range_m: f64, reflectivity: f64) -> Self {
        Self {
            range_m,
            reflectivity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_pos("target.range_m", self.range_m)?;
        if !(0.0..=1.0).contains(&self.reflectivity) {
            return Err(SimError::domain(
                "target.reflectivity",
                format!("must be in [0, 1], got {}", self.reflectivity),
            ));
        }
        Ok(())
    }
}

/// Signal-to-background-noise ratio of the optical system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sbnr {
    /// Ratio of returned signal energy density to background irradiance.
    Finite(f64),
    /// No background irradiance at all.
    Infinite,
}

/// Intermediates of the explicit energy chain, ending in the detected
/// photons per pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyChain {
    /// Energy density at the target (J/m^2).
    pub rho_e_j_m2: f64,
    /// Energy available to one pixel's patch of the target (J).
    pub e1_j: f64,
    /// Scattered energy per unit aperture area back at the lens (J/m^2
    /// integrated over the aperture step below; kept as the chain's E2).
    pub e2_j: f64,
    /// Energy detected by the pixel (J).
    pub e3_j: f64,
    /// Detected photons per pulse, E3 * lambda / (h c).
    pub photons_per_pulse: f64,
}

fn validate_all(
    laser: &LaserSpec,
    atm: &AtmosphereSpec,
    optics: &OpticsSpec,
    sensor: &SensorSpec,
    target: &TargetPatch,
) -> Result<()> {
    laser.validate()?;
    atm.validate()?;
    optics.validate()?;
    sensor.validate()?;
    target.validate()
}

/// Expected signal photons detected per pulse per pixel.
///
/// `P_pp = (lambda E0 / h c) * (q Gamma e^(-2R/C_atm) / 8)
///        * (W_p H_p / (f_no^2 pi R^2 tan^2 theta))`
///
/// The value is not clamped here even if it exceeds one; the one-photon
/// ceiling is the sampler's concern.
pub fn photons_per_pulse(
    laser: &LaserSpec,
    atm: &AtmosphereSpec,
    optics: &OpticsSpec,
    sensor: &SensorSpec,
    target: &TargetPatch,
    constants: &PhysicalConstants,
) -> Result<f64> {
    validate_all(laser, atm, optics, sensor, target)?;
    let photon_count = laser.wavelength_m * laser.pulse_energy_j
        / (constants.planck_h * constants.light_speed_c);
    let surface = sensor.quantum_efficiency
        * target.reflectivity
        * (-2.0 * target.range_m / atm.attenuation_length_m).exp()
        / LAMBERTIAN_SPLIT_FACTOR;
    let geometry = sensor.pixel_width_m * sensor.pixel_height_m
        / (optics.f_number.powi(2)
            * std::f64::consts::PI
            * target.range_m.powi(2)
            * optics.divergence_rad.tan().powi(2));
    Ok(photon_count * surface * geometry)
}

/// Rate of solar background photons detected through the same channel (Hz).
///
/// `C_bckg = (lambda / h c) * (q Gamma e^(-R/C_atm) / (8 f_no^2))
///          * W_bckg W_p H_p`
///
/// Background photons traverse the target-to-sensor path only once, hence
/// the one-way attenuation exponent.
pub fn background_rate(
    laser: &LaserSpec,
    atm: &AtmosphereSpec,
    optics: &OpticsSpec,
    sensor: &SensorSpec,
    target: &TargetPatch,
    constants: &PhysicalConstants,
) -> Result<f64> {
    validate_all(laser, atm, optics, sensor, target)?;
    Ok(
        laser.wavelength_m / (constants.planck_h * constants.light_speed_c)
            * (sensor.quantum_efficiency
                * target.reflectivity
                * (-target.range_m / atm.attenuation_length_m).exp()
                / (LAMBERTIAN_SPLIT_FACTOR * optics.f_number.powi(2)))
            * atm.solar_irradiance_w_m2
            * sensor.pixel_width_m
            * sensor.pixel_height_m,
    )
}

/// Signal to background-noise ratio:
/// `[E0 exp(-R/C_atm)] / [W_bckg pi R^2 tan^2 theta]`.
pub fn sbnr(
    laser: &LaserSpec,
    atm: &AtmosphereSpec,
    optics: &OpticsSpec,
    target: &TargetPatch,
) -> Result<Sbnr> {
    laser.validate()?;
    atm.validate()?;
    optics.validate()?;
    target.validate()?;
    if atm.solar_irradiance_w_m2 == 0.0 {
        return Ok(Sbnr::Infinite);
    }
    let returned = laser.pulse_energy_j * (-target.range_m / atm.attenuation_length_m).exp();
    let background = atm.solar_irradiance_w_m2
        * std::f64::consts::PI
        * target.range_m.powi(2)
        * optics.divergence_rad.tan().powi(2);
    Ok(Sbnr::Finite(returned / background))
}

/// Step-by-step energy chain from the emitted pulse to the detected photon
/// count. Requires the focal length, which cancels from the final count.
pub fn energy_chain(
    laser: &LaserSpec,
    atm: &AtmosphereSpec,
    optics: &OpticsSpec,
    sensor: &SensorSpec,
    target: &TargetPatch,
    constants: &PhysicalConstants,
) -> Result<EnergyChain> {
    validate_all(laser, atm, optics, sensor, target)?;
    let focal = optics.focal_length_m.ok_or_else(|| {
        SimError::domain(
            "optics.focal_length_m",
            "required for the energy chain; not set",
        )
    })?;

    let one_way = (-target.range_m / atm.attenuation_length_m).exp();
    let illuminated_area = std::f64::consts::PI
        * target.range_m.powi(2)
        * optics.divergence_rad.tan().powi(2);

    // Pulse energy density arriving at the target plane.
    let rho_e = laser.pulse_energy_j * one_way / illuminated_area;
    // Energy falling on the patch of target that one pixel images.
    let e1 = rho_e * (target.range_m.powi(2) * sensor.pixel_width_m * sensor.pixel_height_m
        / focal.powi(2));
    // Lambertian return propagated back to the lens aperture.
    let e2 = target.reflectivity * e1 * one_way
        / (2.0 * std::f64::consts::PI * target.range_m.powi(2));
    // Fraction captured by the aperture and converted by the detector.
    let e3 = sensor.quantum_efficiency
        * e2
        * std::f64::consts::PI
        * (focal / (2.0 * optics.f_number)).powi(2);
    let photons =
        e3 * laser.wavelength_m / (constants.planck_h * constants.light_speed_c);

    Ok(EnergyChain {
        rho_e_j_m2: rho_e,
        e1_j: e1,
        e2_j: e2,
        e3_j: e3,
        photons_per_pulse: photons,
    })
}

fn ensure_pos(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(SimError::domain(field, format!("must be > 0, got {v}")))
    }
}

fn ensure_nonneg(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(SimError::domain(field, format!("must be >= 0, got {v}")))
    }
}
