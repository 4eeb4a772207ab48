//! Physical constants and fixed model factors.

/// Planck constant (J·s), CODATA 2018 exact value.
pub const PLANCK_H: f64 = 6.626_070_15e-34;

/// Speed of light in vacuum (m/s), CODATA 2018 exact value.
pub const LIGHT_SPEED_C: f64 = 299_792_458.0;

/// Denominator factor from treating Lambertian surface reflection and the
/// return-path scattering as two separate processes. A different scattering
/// model would replace this value.
pub const LAMBERTIAN_SPLIT_FACTOR: f64 = 8.0;

/// Conversion between a Gaussian FWHM and its standard deviation:
/// FWHM = `FWHM_FACTOR` · σ. Numerically 2·sqrt(2·ln 2).
pub const FWHM_FACTOR: f64 = 2.354_820_045_030_949_4;

/// Immutable bundle of the physical constants entering the radiometry chain.
///
/// Carried explicitly so unit-sanity tests can rescale the constants together
/// with the instrument quantities; production code uses [`PhysicalConstants::default`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// Planck constant (J·s).
    pub planck_h: f64,
    /// Speed of light (m/s).
    pub light_speed_c: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            planck_h: PLANCK_H,
            light_speed_c: LIGHT_SPEED_C,
        }
    }
}

/// Round-trip time of flight for a target at range `r` meters, in seconds.
pub fn range_to_time(r: f64) -> f64 {
    2.0 * r / LIGHT_SPEED_C
}

/// Range in meters corresponding to a round-trip time of flight `t` seconds.
pub fn time_to_range(t: f64) -> f64 {
    LIGHT_SPEED_C * t / 2.0
}
