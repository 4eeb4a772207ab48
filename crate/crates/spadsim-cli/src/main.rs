//! Batch front end for the SPAD lidar simulator.
//!
//! Subcommands:
//! - `fisher`   — link budget, Fisher information, and Cramér-Rao report for
//!   a single target point;
//! - `sim`      — depth-image generation from a scene, in CRB or histogram
//!   mode;
//! - `sweep`    — single-pixel distinguishability against frames summed;
//! - `validate` — full invariant sweep of a configuration.
//!
//! Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numerical
//! nonconvergence.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spadsim::config::{validate_config, Severity, SystemConfig};
use spadsim::error::SimError;
use spadsim::estimation::{
    depth_image_from_cube, distinguishability_sweep, MatchFilterSpec, SubBinRefinement, SweepPlan,
};
use spadsim::fisher::{
    crb_sigma_star, fisher_per_pulse, min_distinguishability, success_probability, CrbBound,
    FisherOptions,
};
use spadsim::likelihood::{sigma_from_fwhm, total_alpha};
use spadsim::radiometry::{self, Sbnr, TargetPatch};
use spadsim::scene_io::{self, GridFormat, INVALID_SENTINEL};
use spadsim::spad_sampler::{simulate_histogram_cube, BinLayout, JitterSpec, PixelShiftPolicy};

#[derive(Parser)]
#[command(name = "spadsim", version, about = "SPAD-array lidar simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Rayon worker threads (0 = default). Outputs are invariant to this.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
}

#[derive(Args)]
struct ConfigSource {
    /// Path to an INI configuration file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Name of a shipped preset (table1_resolution_target, table2_landrover).
    #[arg(long)]
    preset: Option<String>,
}

impl ConfigSource {
    fn load(&self) -> Result<SystemConfig, SimError> {
        match (&self.config, &self.preset) {
            (Some(path), None) => SystemConfig::load(path),
            (None, Some(name)) => SystemConfig::preset(name),
            _ => Err(SimError::config(
                "cli",
                "exactly one of --config or --preset is required",
            )),
        }
    }
}

#[derive(Args)]
struct TargetArgs {
    /// Target range R (m).
    #[arg(long)]
    range: f64,
    /// Target reflectivity Gamma in [0, 1].
    #[arg(long)]
    reflectivity: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Print the radiometry/information report for one target point.
    Fisher {
        #[command(flatten)]
        source: ConfigSource,
        #[command(flatten)]
        target: TargetArgs,
        /// Override the configured f-number.
        #[arg(long)]
        f_number: Option<f64>,
        /// Also write the report as key=value text.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate depth images from a scene.
    Sim {
        #[command(flatten)]
        source: ConfigSource,
        /// Depth map file (CSV or binary grid).
        #[arg(long)]
        depth: PathBuf,
        /// Reflectivity map file.
        #[arg(long)]
        reflectivity_map: PathBuf,
        /// Sentinel marking no-return pixels in the depth map.
        #[arg(long, default_value_t = INVALID_SENTINEL, allow_hyphen_values = true)]
        sentinel: f64,
        /// Generation regime.
        #[arg(long, value_parser = ["crb", "histogram"])]
        mode: String,
        /// Number of images (CRB mode only).
        #[arg(long, default_value_t = 1)]
        images: u32,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Output grid encoding.
        #[arg(long, value_parser = ["csv", "binary"], default_value = "csv")]
        format: String,
    },
    /// Single-pixel distinguishability sweep over frames summed.
    Sweep {
        #[command(flatten)]
        source: ConfigSource,
        #[command(flatten)]
        target: TargetArgs,
        /// Largest number of frames summed.
        #[arg(long, default_value_t = 1000)]
        frames_max: u32,
        /// Number of schedule points.
        #[arg(long, default_value_t = 100)]
        increments: u32,
        /// Independent histograms per point.
        #[arg(long, default_value_t = 100)]
        repeats: u32,
        /// Parabolic sub-bin peak refinement.
        #[arg(long, default_value_t = false)]
        sub_bin: bool,
        /// Per-frame trigger-skew sigma (s). The default 0 measures the
        /// uniform-sensor single-pixel regime.
        #[arg(long, default_value_t = 0.0)]
        skew_sigma: f64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a configuration (optionally against a target point).
    Validate {
        #[command(flatten)]
        source: ConfigSource,
        /// Target range R (m).
        #[arg(long)]
        range: Option<f64>,
        /// Target reflectivity Gamma.
        #[arg(long)]
        reflectivity: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: could not size the thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &SimError) -> u8 {
    match e {
        SimError::Domain { .. } | SimError::Config { .. } => 2,
        SimError::Io { .. } | SimError::Parse { .. } | SimError::Format { .. }
        | SimError::DimensionMismatch { .. } => 3,
        SimError::NonConvergence { .. } => 4,
    }
}

fn run(command: Command) -> Result<ExitCode, SimError> {
    match command {
        Command::Fisher {
            source,
            target,
            f_number,
            out,
        } => cmd_fisher(&source, &target, f_number, out.as_deref()),
        Command::Sim {
            source,
            depth,
            reflectivity_map,
            sentinel,
            mode,
            images,
            out,
            format,
        } => cmd_sim(
            &source,
            &depth,
            &reflectivity_map,
            sentinel,
            &mode,
            images,
            &out,
            &format,
        ),
        Command::Sweep {
            source,
            target,
            frames_max,
            increments,
            repeats,
            sub_bin,
            skew_sigma,
            out,
        } => cmd_sweep(
            &source, &target, frames_max, increments, repeats, sub_bin, skew_sigma, &out,
        ),
        Command::Validate {
            source,
            range,
            reflectivity,
        } => cmd_validate(&source, range, reflectivity),
    }
}

fn cmd_fisher(
    source: &ConfigSource,
    target: &TargetArgs,
    f_number: Option<f64>,
    out: Option<&Path>,
) -> Result<ExitCode, SimError> {
    let mut config = source.load()?;
    if let Some(fno) = f_number {
        config.optics.f_number = fno;
    }
    config.validate()?;
    let patch = TargetPatch::new(target.range, target.reflectivity);
    patch.validate()?;

    let model = config.likelihood_model(&patch)?;
    let alpha = total_alpha(&model);
    let sbnr = radiometry::sbnr(&config.laser, &config.atmosphere, &config.optics, &patch)?;
    let opts = FisherOptions {
        rel_tol: config.tolerances.quadrature_rel,
        ..FisherOptions::default()
    };
    let info = fisher_per_pulse(&model, &opts)?;
    let acq = config.acquisition_spec();

    let mut report = String::new();
    report.push_str(&format!("p_pp = {:.6e}\n", model.signal_ppp));
    report.push_str(&format!("c_bckg_hz = {:.6e}\n", model.background_rate_hz));
    report.push_str(&format!("c_dc_hz = {:.6e}\n", model.dark_rate_hz));
    report.push_str(&format!("alpha = {:.6e}\n", alpha));
    match sbnr {
        Sbnr::Finite(v) => report.push_str(&format!("sbnr = {v:.6e}\n")),
        Sbnr::Infinite => report.push_str("sbnr = inf\n"),
    }
    report.push_str(&format!("fisher_per_pulse_s2 = {:.6e}\n", info.info_per_pulse));
    report.push_str(&format!(
        "fisher_quadrature_error_s2 = {:.3e}\nfisher_evaluations = {}\n",
        info.quadrature_abs_error, info.evaluations
    ));

    if alpha < 1.0 {
        let p = success_probability(alpha, &acq)?;
        report.push_str(&format!("frame_success_probability = {p:.6e}\n"));
        match crb_sigma_star(info.info_per_pulse, alpha, &acq)? {
            CrbBound::Finite(star) => {
                let dist = min_distinguishability(star);
                report.push_str(&format!("crb_sigma_star_s = {star:.6e}\n"));
                report.push_str(&format!("min_distinguishability_s = {dist:.6e}\n"));
                report.push_str(&format!(
                    "min_distinguishability_m = {:.6e}\n",
                    spadsim::constants::time_to_range(dist)
                ));
            }
            CrbBound::NotEstimable => {
                report.push_str("crb_sigma_star_s = not_estimable\n");
                report.push_str("min_distinguishability_s = not_estimable\n");
            }
        }
    } else {
        report.push_str("frame_success_probability = saturated\n");
    }

    print!("{report}");
    if let Some(path) = out {
        std::fs::write(path, &report).map_err(|e| SimError::io(path.display().to_string(), e))?;
    }
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn cmd_sim(
    source: &ConfigSource,
    depth: &Path,
    reflectivity_map: &Path,
    sentinel: f64,
    mode: &str,
    images: u32,
    out: &Path,
    format: &str,
) -> Result<ExitCode, SimError> {
    let config = source.load()?;
    config.validate()?;
    let scene = scene_io::load_scene(depth, reflectivity_map, sentinel)?;
    let acq = config.acquisition_spec();
    let format = match format {
        "binary" => GridFormat::Binary,
        _ => GridFormat::Csv,
    };
    std::fs::create_dir_all(out).map_err(|e| SimError::io(out.display().to_string(), e))?;

    match mode {
        "crb" => {
            let batch =
                spadsim::crb_imager::simulate_crb_batch(&scene, &config, &acq, images, config.seed)?;
            let ext = if format == GridFormat::Binary { "bin" } else { "csv" };
            for (i, image) in batch.iter().enumerate() {
                let path = out.join(format!("depth_crb_{i:05}.{ext}"));
                scene_io::save_depth_image(image, &path, format, sentinel)?;
            }
            std::fs::write(
                out.join("provenance.txt"),
                scene_io::provenance_line(&batch[0].provenance),
            )
            .map_err(|e| SimError::io(out.display().to_string(), e))?;
            println!(
                "wrote {} crb-mode image(s) to {} ({} valid pixels each)",
                batch.len(),
                out.display(),
                batch[0].n_valid()
            );
        }
        "histogram" => {
            let cube = simulate_histogram_cube(&scene, &config, &acq, config.seed)?;
            scene_io::save_histogram_cube(&cube, &out.join("histograms.cube"))?;
            let sigma = sigma_from_fwhm(config.laser.pulse_fwhm_s)?;
            let spec = MatchFilterSpec::matched(sigma);
            let image = depth_image_from_cube(&cube, &spec)?;
            let ext = if format == GridFormat::Binary { "bin" } else { "csv" };
            scene_io::save_depth_image(
                &image,
                &out.join(format!("depth_histogram.{ext}")),
                format,
                sentinel,
            )?;
            std::fs::write(
                out.join("provenance.txt"),
                scene_io::provenance_line(&image.provenance),
            )
            .map_err(|e| SimError::io(out.display().to_string(), e))?;
            // Frame conservation is an invariant of every histogram.
            let conserved = cube
                .histograms
                .as_slice()
                .iter()
                .all(|h| h.frames_conserved());
            println!(
                "wrote histogram cube and depth image to {} ({} valid pixels, frames conserved: \
                 {conserved})",
                out.display(),
                image.n_valid()
            );
        }
        other => {
            return Err(SimError::config(
                "cli.mode",
                format!("unknown mode '{other}'"),
            ))
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    source: &ConfigSource,
    target: &TargetArgs,
    frames_max: u32,
    increments: u32,
    repeats: u32,
    sub_bin: bool,
    skew_sigma: f64,
    out: &Path,
) -> Result<ExitCode, SimError> {
    let config = source.load()?;
    config.validate()?;
    let patch = TargetPatch::new(target.range, target.reflectivity);
    patch.validate()?;
    let model = config.likelihood_model(&patch)?;

    let layout = BinLayout::from_sensor(&config.sensor);
    let jitter = JitterSpec {
        mean_s: config.laser.jitter_mean_s,
        std_s: config.laser.jitter_std_s,
    };
    let policy = if skew_sigma > 0.0 {
        PixelShiftPolicy::GaussianPerFrame {
            sigma_s: skew_sigma,
        }
    } else {
        PixelShiftPolicy::Fixed(0.0)
    };
    let plan = SweepPlan {
        total_frames: frames_max,
        increments,
        repeats,
    };
    let mut spec = MatchFilterSpec::matched(sigma_from_fwhm(config.laser.pulse_fwhm_s)?);
    if sub_bin {
        spec.sub_bin = SubBinRefinement::Parabolic;
    }
    let acq = config.acquisition_spec();

    let sweep = distinguishability_sweep(
        &model, layout, &acq, jitter, &policy, &plan, &spec, config.seed,
    )?;
    std::fs::create_dir_all(out).map_err(|e| SimError::io(out.display().to_string(), e))?;
    scene_io::save_sweep_csv(
        &sweep,
        &out.join("distinguishability_histogram.csv"),
        &out.join("distinguishability_crb.csv"),
    )?;
    let flagged = sweep
        .histogram
        .points
        .iter()
        .filter(|p| p.distinguishability_s.is_none())
        .count();
    println!(
        "wrote sweep curves to {} ({} points, {} ill-defined)",
        out.display(),
        sweep.histogram.points.len(),
        flagged
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(
    source: &ConfigSource,
    range: Option<f64>,
    reflectivity: Option<f64>,
) -> Result<ExitCode, SimError> {
    let config = source.load()?;
    let target = match (range, reflectivity) {
        (Some(r), Some(g)) => Some(TargetPatch::new(r, g)),
        (None, None) => None,
        _ => {
            return Err(SimError::config(
                "cli",
                "--range and --reflectivity must be given together",
            ))
        }
    };
    let findings = validate_config(&config, target.as_ref());
    for f in &findings {
        println!("{f}");
    }
    if findings.iter().any(|f| f.severity == Severity::Error) {
        return Ok(ExitCode::from(2));
    }
    println!("ok");
    Ok(ExitCode::SUCCESS)
}
