//! System configuration: the full instrument description, INI-style file
//! format, shipped presets, and validation.
//!
//! The file format is flat sectioned key-value text with SI units throughout,
//! chosen to be diff-friendly and parseable from any language. All randomness
//! flows from the single required `seed` key; there is no auto-seeding.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::constants::{range_to_time, PhysicalConstants};
use crate::error::{Result, SimError};
use crate::fisher::AcquisitionSpec;
use crate::likelihood::{sigma_from_fwhm, LikelihoodModel, PulseResponse};
use crate::radiometry::{
    self, AtmosphereSpec, LaserSpec, OpticsSpec, SensorSpec, TargetPatch,
};

/// Numerical tolerances a run is allowed to tune.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceSpec {
    /// Relative tolerance of the Fisher quadrature.
    pub quadrature_rel: f64,
    /// Pulse peaks closer than this many sigma' to a window edge trigger an
    /// edge warning (the closed-form normalization over-counts there).
    pub edge_sigma_guard: f64,
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        Self {
            quadrature_rel: 1e-6,
            edge_sigma_guard: 5.0,
        }
    }
}

/// Acquisition keys as stored in the config file; the repetition rate lives
/// with the laser and joins them in [`SystemConfig::acquisition_spec`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcquisitionParams {
    /// Frames accumulated per histogram.
    pub frames: u32,
    /// Exposure time per frame (s).
    pub exposure_s: f64,
}

/// Complete description of one simulated instrument and run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemConfig {
    pub laser: LaserSpec,
    pub atmosphere: AtmosphereSpec,
    pub optics: OpticsSpec,
    pub sensor: SensorSpec,
    pub acquisition: AcquisitionParams,
    /// Master seed; every random draw in a run derives from it.
    pub seed: u64,
    pub tolerances: ToleranceSpec,
}

impl SystemConfig {
    /// Instrument preset for the resolution-test-target bench: 671 nm, 1 nJ,
    /// 2.25 MHz laser; 600 ps impulse FWHM; f/2 optics; 192x128-pixel SPAD
    /// with 4096 bins of 50 ps; dark floor 126 Hz; no solar background.
    pub fn table1_resolution_target() -> Self {
        SystemConfig {
            laser: LaserSpec {
                pulse_energy_j: 1e-9,
                rep_rate_hz: 2.25e6,
                wavelength_m: 671e-9,
                pulse_fwhm_s: 600e-12,
                jitter_mean_s: 0.0,
                jitter_std_s: 200e-12,
            },
            atmosphere: AtmosphereSpec {
                attenuation_length_m: 6200.0,
                solar_irradiance_w_m2: 0.0,
            },
            optics: OpticsSpec {
                f_number: 2.0,
                divergence_rad: 0.02,
                focal_length_m: Some(50e-3),
            },
            sensor: SensorSpec {
                pixel_width_m: 9.2e-6,
                pixel_height_m: 9.2e-6,
                quantum_efficiency: 0.26,
                dark_rate_hz: 126.0,
                n_bins: 4096,
                bin_width_s: 50e-12,
                rows: 128,
                cols: 192,
                sigma_q_start_s: 41e-12,
                sigma_q_end_s: 166e-12,
            },
            acquisition: AcquisitionParams {
                frames: 1000,
                exposure_s: 1e-3,
            },
            seed: 20260810,
            tolerances: ToleranceSpec::default(),
        }
    }

    /// Instrument preset for the long-range vehicle capture: 532 nm, 14 uJ,
    /// 33 kHz laser; 3.5 ns impulse FWHM; f/10 Cassegrain; same SPAD array;
    /// 0.5 W/m^2 solar background; 83 us frames.
    pub fn table2_landrover() -> Self {
        SystemConfig {
            laser: LaserSpec {
                pulse_energy_j: 14e-6,
                rep_rate_hz: 33e3,
                wavelength_m: 532e-9,
                pulse_fwhm_s: 3.5e-9,
                jitter_mean_s: 0.0,
                jitter_std_s: 1.5e-9,
            },
            atmosphere: AtmosphereSpec {
                attenuation_length_m: 6200.0,
                solar_irradiance_w_m2: 0.5,
            },
            optics: OpticsSpec {
                f_number: 10.0,
                divergence_rad: 1.07e-3,
                // The telescope's focal length cancels from every output;
                // any positive value keeps the explicit energy chain usable.
                focal_length_m: Some(1.0),
            },
            sensor: SensorSpec {
                pixel_width_m: 9.2e-6,
                pixel_height_m: 9.2e-6,
                quantum_efficiency: 0.26,
                dark_rate_hz: 126.0,
                n_bins: 4096,
                bin_width_s: 50e-12,
                rows: 128,
                cols: 192,
                sigma_q_start_s: 41e-12,
                sigma_q_end_s: 166e-12,
            },
            acquisition: AcquisitionParams {
                frames: 1000,
                exposure_s: 83e-6,
            },
            seed: 20260810,
            tolerances: ToleranceSpec::default(),
        }
    }

    /// Load a shipped preset by name.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "table1_resolution_target" => Ok(Self::table1_resolution_target()),
            "table2_landrover" => Ok(Self::table2_landrover()),
            other => Err(SimError::config(
                "preset",
                format!(
                    "unknown preset '{other}'; available: table1_resolution_target, \
                     table2_landrover"
                ),
            )),
        }
    }

    /// Acquisition spec with the repetition rate joined in.
    pub fn acquisition_spec(&self) -> AcquisitionSpec {
        AcquisitionSpec {
            frames: self.acquisition.frames,
            exposure_s: self.acquisition.exposure_s,
            rep_rate_hz: self.laser.rep_rate_hz,
        }
    }

    /// Per-pixel arrival model for a target patch at the configured
    /// instrument settings.
    pub fn likelihood_model(&self, target: &TargetPatch) -> Result<LikelihoodModel> {
        let constants = PhysicalConstants::default();
        let ppp = radiometry::photons_per_pulse(
            &self.laser,
            &self.atmosphere,
            &self.optics,
            &self.sensor,
            target,
            &constants,
        )?;
        let bckg = radiometry::background_rate(
            &self.laser,
            &self.atmosphere,
            &self.optics,
            &self.sensor,
            target,
            &constants,
        )?;
        Ok(LikelihoodModel {
            dark_rate_hz: self.sensor.dark_rate_hz,
            background_rate_hz: bckg,
            signal_ppp: ppp,
            pulse: PulseResponse {
                peak_time_s: range_to_time(target.range_m),
                sigma_s: sigma_from_fwhm(self.laser.pulse_fwhm_s)?,
            },
            tcspc_interval_s: self.sensor.tcspc_interval_s(),
        })
    }

    /// Structural validation of every component.
    pub fn validate(&self) -> Result<()> {
        self.laser.validate()?;
        self.atmosphere.validate()?;
        self.optics.validate()?;
        self.sensor.validate()?;
        self.acquisition_spec().validate()?;
        if !(self.tolerances.quadrature_rel > 0.0) {
            return Err(SimError::domain("run.quadrature_rel_tol", "must be > 0"));
        }
        if !(self.tolerances.edge_sigma_guard > 0.0) {
            return Err(SimError::domain("run.edge_sigma_guard", "must be > 0"));
        }
        Ok(())
    }

    /// Canonical text form; identical configs serialize identically.
    pub fn to_ini(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "[laser]\n\
             pulse_energy_j = {:e}\n\
             rep_rate_hz = {:e}\n\
             wavelength_m = {:e}\n\
             pulse_fwhm_s = {:e}\n\
             jitter_mean_s = {:e}\n\
             jitter_std_s = {:e}\n\
             \n\
             [atmosphere]\n\
             attenuation_length_m = {:e}\n\
             solar_irradiance_w_m2 = {:e}\n\
             \n\
             [optics]\n\
             f_number = {:e}\n\
             divergence_rad = {:e}\n",
            self.laser.pulse_energy_j,
            self.laser.rep_rate_hz,
            self.laser.wavelength_m,
            self.laser.pulse_fwhm_s,
            self.laser.jitter_mean_s,
            self.laser.jitter_std_s,
            self.atmosphere.attenuation_length_m,
            self.atmosphere.solar_irradiance_w_m2,
            self.optics.f_number,
            self.optics.divergence_rad,
        );
        if let Some(f) = self.optics.focal_length_m {
            let _ = writeln!(s, "focal_length_m = {f:e}");
        }
        let _ = write!(
            s,
            "\n\
             [sensor]\n\
             pixel_width_m = {:e}\n\
             pixel_height_m = {:e}\n\
             quantum_efficiency = {:e}\n\
             dark_rate_hz = {:e}\n\
             n_bins = {}\n\
             bin_width_s = {:e}\n\
             rows = {}\n\
             cols = {}\n\
             sigma_q_start_s = {:e}\n\
             sigma_q_end_s = {:e}\n\
             \n\
             [acquisition]\n\
             frames = {}\n\
             exposure_s = {:e}\n\
             \n\
             [run]\n\
             seed = {}\n\
             quadrature_rel_tol = {:e}\n\
             edge_sigma_guard = {:e}\n",
            self.sensor.pixel_width_m,
            self.sensor.pixel_height_m,
            self.sensor.quantum_efficiency,
            self.sensor.dark_rate_hz,
            self.sensor.n_bins,
            self.sensor.bin_width_s,
            self.sensor.rows,
            self.sensor.cols,
            self.sensor.sigma_q_start_s,
            self.sensor.sigma_q_end_s,
            self.acquisition.frames,
            self.acquisition.exposure_s,
            self.seed,
            self.tolerances.quadrature_rel,
            self.tolerances.edge_sigma_guard,
        );
        s
    }

    /// 64-bit digest of the canonical form, recorded in output provenance.
    pub fn digest(&self) -> u64 {
        let hash = Sha256::digest(self.to_ini().as_bytes());
        u64::from_le_bytes(hash[0..8].try_into().unwrap())
    }

    /// Parse the INI text form. Every key is mandatory except
    /// `optics.focal_length_m` and the `[run]` tolerance overrides.
    pub fn from_ini(text: &str, origin: &str) -> Result<Self> {
        let raw = parse_sections(text, origin)?;
        let mut cfg = RawConfig {
            origin,
            sections: raw,
        };

        let laser = LaserSpec {
            pulse_energy_j: cfg.take_f64("laser", "pulse_energy_j")?,
            rep_rate_hz: cfg.take_f64("laser", "rep_rate_hz")?,
            wavelength_m: cfg.take_f64("laser", "wavelength_m")?,
            pulse_fwhm_s: cfg.take_f64("laser", "pulse_fwhm_s")?,
            jitter_mean_s: cfg.take_f64("laser", "jitter_mean_s")?,
            jitter_std_s: cfg.take_f64("laser", "jitter_std_s")?,
        };
        let atmosphere = AtmosphereSpec {
            attenuation_length_m: cfg.take_f64("atmosphere", "attenuation_length_m")?,
            solar_irradiance_w_m2: cfg.take_f64("atmosphere", "solar_irradiance_w_m2")?,
        };
        let optics = OpticsSpec {
            f_number: cfg.take_f64("optics", "f_number")?,
            divergence_rad: cfg.take_f64("optics", "divergence_rad")?,
            focal_length_m: cfg.take_f64_opt("optics", "focal_length_m")?,
        };
        let sensor = SensorSpec {
            pixel_width_m: cfg.take_f64("sensor", "pixel_width_m")?,
            pixel_height_m: cfg.take_f64("sensor", "pixel_height_m")?,
            quantum_efficiency: cfg.take_f64("sensor", "quantum_efficiency")?,
            dark_rate_hz: cfg.take_f64("sensor", "dark_rate_hz")?,
            n_bins: cfg.take_usize("sensor", "n_bins")?,
            bin_width_s: cfg.take_f64("sensor", "bin_width_s")?,
            rows: cfg.take_usize("sensor", "rows")?,
            cols: cfg.take_usize("sensor", "cols")?,
            sigma_q_start_s: cfg.take_f64("sensor", "sigma_q_start_s")?,
            sigma_q_end_s: cfg.take_f64("sensor", "sigma_q_end_s")?,
        };
        let acquisition = AcquisitionParams {
            frames: cfg.take_u64("acquisition", "frames")? as u32,
            exposure_s: cfg.take_f64("acquisition", "exposure_s")?,
        };
        // Reproducibility is a hard contract: a config without a seed is an
        // error, never auto-seeded.
        let seed = cfg.take_u64("run", "seed")?;
        let defaults = ToleranceSpec::default();
        let tolerances = ToleranceSpec {
            quadrature_rel: cfg
                .take_f64_opt("run", "quadrature_rel_tol")?
                .unwrap_or(defaults.quadrature_rel),
            edge_sigma_guard: cfg
                .take_f64_opt("run", "edge_sigma_guard")?
                .unwrap_or(defaults.edge_sigma_guard),
        };
        cfg.finish()?;

        Ok(SystemConfig {
            laser,
            atmosphere,
            optics,
            sensor,
            acquisition,
            seed,
            tolerances,
        })
    }

    /// Read a config file from disk.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::io(path.display().to_string(), e))?;
        Self::from_ini(&text, &path.display().to_string())
    }

    /// Write the canonical form to disk.
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_ini()).map_err(|e| SimError::io(path.display().to_string(), e))
    }
}

/// Severity of a validation finding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    /// The configuration cannot be simulated.
    Error,
    /// Simulation proceeds but an assumption is strained.
    Warning,
}

/// One line of `validate` output.
#[derive(Debug, Clone)]
pub struct Finding {
    pub severity: Severity,
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for Finding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}: {}", self.path, self.message)
    }
}

/// Full invariant sweep of a configuration, optionally against a target
/// patch (enabling the per-pixel saturation and edge-guard checks).
pub fn validate_config(config: &SystemConfig, target: Option<&TargetPatch>) -> Vec<Finding> {
    let mut findings = Vec::new();
    if let Err(e) = config.validate() {
        findings.push(Finding {
            severity: Severity::Error,
            path: error_path(&e),
            message: e.to_string(),
        });
        return findings;
    }

    let Some(target) = target else {
        return findings;
    };
    if let Err(e) = target.validate() {
        findings.push(Finding {
            severity: Severity::Error,
            path: error_path(&e),
            message: e.to_string(),
        });
        return findings;
    }

    match config.likelihood_model(target) {
        Err(e) => findings.push(Finding {
            severity: Severity::Error,
            path: error_path(&e),
            message: e.to_string(),
        }),
        Ok(model) => {
            let alpha = crate::likelihood::total_alpha(&model);
            if alpha >= 1.0 {
                findings.push(Finding {
                    severity: Severity::Error,
                    path: "target".into(),
                    message: format!(
                        "expected counts per pulse alpha = {alpha:.4} >= 1: the link saturates \
                         the single-photon limit and the frame success model does not apply"
                    ),
                });
            }
            let margin = model.edge_sigma_margin();
            if margin < config.tolerances.edge_sigma_guard {
                findings.push(Finding {
                    severity: Severity::Warning,
                    path: "target.range_m".into(),
                    message: format!(
                        "pulse peak sits {margin:.2} sigma' from the TCSPC window edge \
                         (guard {}); the closed-form normalization over-counts the clipped \
                         tail",
                        config.tolerances.edge_sigma_guard
                    ),
                });
            }
        }
    }
    findings
}

fn error_path(e: &SimError) -> String {
    match e {
        SimError::Domain { field, .. } => field.clone(),
        SimError::Config { path, .. } => path.clone(),
        _ => "config".into(),
    }
}

// ---- INI machinery ----

type Sections = BTreeMap<String, BTreeMap<String, (usize, String)>>;

fn parse_sections(text: &str, origin: &str) -> Result<Sections> {
    let mut sections: Sections = BTreeMap::new();
    let mut current: Option<String> = None;
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(cut) => &raw_line[..cut],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let Some(name) = name.strip_suffix(']') else {
                return Err(SimError::Parse {
                    path: origin.into(),
                    line: line_no,
                    reason: format!("malformed section header '{line}'"),
                });
            };
            let name = name.trim().to_string();
            current = Some(name.clone());
            sections.entry(name).or_default();
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(SimError::Parse {
                path: origin.into(),
                line: line_no,
                reason: format!("expected 'key = value', got '{line}'"),
            });
        };
        let Some(section) = current.clone() else {
            return Err(SimError::Parse {
                path: origin.into(),
                line: line_no,
                reason: "key outside of any [section]".into(),
            });
        };
        let key = key.trim().to_string();
        let prev = sections
            .get_mut(&section)
            .unwrap()
            .insert(key.clone(), (line_no, value.trim().to_string()));
        if prev.is_some() {
            return Err(SimError::Parse {
                path: origin.into(),
                line: line_no,
                reason: format!("duplicate key '{section}.{key}'"),
            });
        }
    }
    Ok(sections)
}

struct RawConfig<'a> {
    origin: &'a str,
    sections: Sections,
}

impl RawConfig<'_> {
    fn take_raw(&mut self, section: &str, key: &str) -> Result<String> {
        self.sections
            .get_mut(section)
            .and_then(|s| s.remove(key))
            .map(|(_, v)| v)
            .ok_or_else(|| {
                SimError::config(
                    format!("{section}.{key}"),
                    format!("missing required field (in {})", self.origin),
                )
            })
    }

    fn take_f64(&mut self, section: &str, key: &str) -> Result<f64> {
        let raw = self.take_raw(section, key)?;
        raw.parse::<f64>().map_err(|_| {
            SimError::config(
                format!("{section}.{key}"),
                format!("expected a number, got '{raw}'"),
            )
        })
    }

    fn take_f64_opt(&mut self, section: &str, key: &str) -> Result<Option<f64>> {
        let Some((_, raw)) = self.sections.get_mut(section).and_then(|s| s.remove(key)) else {
            return Ok(None);
        };
        raw.parse::<f64>().map(Some).map_err(|_| {
            SimError::config(
                format!("{section}.{key}"),
                format!("expected a number, got '{raw}'"),
            )
        })
    }

    fn take_u64(&mut self, section: &str, key: &str) -> Result<u64> {
        let raw = self.take_raw(section, key)?;
        raw.parse::<u64>().map_err(|_| {
            SimError::config(
                format!("{section}.{key}"),
                format!("expected a non-negative integer, got '{raw}'"),
            )
        })
    }

    fn take_usize(&mut self, section: &str, key: &str) -> Result<usize> {
        Ok(self.take_u64(section, key)? as usize)
    }

    /// Reject unknown leftovers so typos surface instead of silently using
    /// defaults.
    fn finish(self) -> Result<()> {
        for (section, keys) in &self.sections {
            if let Some((key, (line, _))) = keys.iter().next() {
                return Err(SimError::Parse {
                    path: self.origin.into(),
                    line: *line,
                    reason: format!("unknown key '{section}.{key}'"),
                });
            }
        }
        Ok(())
    }
}
