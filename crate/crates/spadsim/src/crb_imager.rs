//! Fast image mode: noising ground truth at the Cramér-Rao limit.
//!
//! Each valid pixel's range and reflectivity fix its link budget, and with it
//! the Fisher information and minimum distinguishability sigma_mu. A depth
//! image is generated by adding Normal(0, sigma_mu) noise (converted to
//! length) to the true depth — the best-case image of an estimator that
//! saturates the Cramér-Rao bound. This mode assumes such an estimator
//! exists; it models no estimator bias.
//!
//! The per-pixel Fisher quadrature dominates the cost, so F is memoized on
//! the (P_pp, C_bckg) pair quantized to 1e-3 relative: F varies smoothly in
//! both and scenes hold few distinct reflectivity/range regimes. The
//! inter-pixel trigger skew belongs to the histogram mode and is not part of
//! the CRB noise.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::config::SystemConfig;
use crate::constants::{time_to_range, PhysicalConstants};
use crate::error::Result;
use crate::fisher::{
    crb_sigma_star, fisher_per_pulse, min_distinguishability, AcquisitionSpec, CrbBound,
    FisherOptions,
};
use crate::likelihood::total_alpha;
use crate::radiometry::TargetPatch;
use crate::rng::{channel, StreamKey};
use crate::scene::{DepthImage, Grid, ImageMode, PixelStatus, Provenance, Scene};

/// Per-pixel minimum distinguishability in seconds, with the pixels that
/// have none.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaField {
    pub sigma_mu_s: Grid<f64>,
    pub status: Grid<PixelStatus>,
}

impl SigmaField {
    /// A field with every pixel at a fixed sigma; the zero field turns the
    /// imager into a pass-through of ground truth.
    pub fn constant(rows: usize, cols: usize, sigma_mu_s: f64) -> Self {
        Self {
            sigma_mu_s: Grid::filled(rows, cols, sigma_mu_s),
            status: Grid::filled(rows, cols, PixelStatus::Valid),
        }
    }
}

/// Relative quantization of the memoization buckets.
const MEMO_QUANTUM: f64 = 1e-3;

fn memo_bucket(x: f64) -> i64 {
    if x <= 0.0 {
        return i64::MIN;
    }
    (x.ln() / MEMO_QUANTUM.ln_1p()).round() as i64
}

/// Compute the per-pixel minimum distinguishability over a scene.
///
/// Pixels flagged invalid in the scene, and pixels with no signal return
/// (the information vanishes and the bound diverges), are marked rather
/// than given background-only noise.
pub fn sigma_mu_field(
    scene: &Scene,
    config: &SystemConfig,
    acq: &AcquisitionSpec,
    opts: &FisherOptions,
) -> Result<SigmaField> {
    config.validate()?;
    acq.validate()?;
    let constants = PhysicalConstants::default();
    let rows = scene.rows();
    let cols = scene.cols();

    // Gather the distinct information regimes first, then run the expensive
    // quadratures once each (in parallel), then fill the field.
    #[derive(Clone, Copy)]
    struct PixelLink {
        alpha: f64,
        bucket: (i64, i64),
    }

    let mut links: Vec<Option<PixelLink>> = Vec::with_capacity(rows * cols);
    let mut representatives: HashMap<(i64, i64), TargetPatch> = HashMap::new();
    for r in 0..rows {
        for c in 0..cols {
            if !scene.is_valid(r, c) {
                links.push(None);
                continue;
            }
            let target = TargetPatch::new(scene.range_m(r, c), scene.reflectivity(r, c));
            let ppp = crate::radiometry::photons_per_pulse(
                &config.laser,
                &config.atmosphere,
                &config.optics,
                &config.sensor,
                &target,
                &constants,
            )?;
            let bckg = crate::radiometry::background_rate(
                &config.laser,
                &config.atmosphere,
                &config.optics,
                &config.sensor,
                &target,
                &constants,
            )?;
            let model = config.likelihood_model(&target)?;
            let bucket = (memo_bucket(ppp), memo_bucket(bckg));
            representatives.entry(bucket).or_insert(target);
            links.push(Some(PixelLink {
                alpha: total_alpha(&model),
                bucket,
            }));
        }
    }

    let infos: HashMap<(i64, i64), f64> = representatives
        .into_par_iter()
        .map(|(bucket, target)| {
            let model = config.likelihood_model(&target)?;
            let f = fisher_per_pulse(&model, opts)?;
            Ok((bucket, f.info_per_pulse))
        })
        .collect::<Result<_>>()?;

    let mut sigma = Grid::filled(rows, cols, f64::INFINITY);
    let mut status = Grid::filled(rows, cols, PixelStatus::NoReturn);
    for (idx, link) in links.iter().enumerate() {
        let (r, c) = (idx / cols, idx % cols);
        let Some(link) = link else {
            continue; // stays NoReturn
        };
        let info = infos[&link.bucket];
        if link.alpha >= 1.0 {
            *status.get_mut(r, c) = PixelStatus::ModelError;
            continue;
        }
        match crb_sigma_star(info, link.alpha, acq)? {
            CrbBound::Finite(star) => {
                *sigma.get_mut(r, c) = min_distinguishability(star);
                *status.get_mut(r, c) = PixelStatus::Valid;
            }
            CrbBound::NotEstimable => {
                *status.get_mut(r, c) = PixelStatus::NotEstimable;
            }
        }
    }

    Ok(SigmaField {
        sigma_mu_s: sigma,
        status,
    })
}

/// Noise the scene's ground truth with the per-pixel distinguishability:
/// depth = truth + (c/2) * Normal(0, sigma_mu). Deterministic per
/// (seed, image_index, pixel); thread schedule cannot change the output.
pub fn apply_crb_noise(
    scene: &Scene,
    field: &SigmaField,
    seed: u64,
    image_index: u32,
    config_digest: u64,
) -> Result<DepthImage> {
    let rows = scene.rows();
    let cols = scene.cols();
    let mut depths = vec![f64::NAN; rows * cols];
    let mut status = vec![PixelStatus::NoReturn; rows * cols];

    depths
        .par_iter_mut()
        .zip(status.par_iter_mut())
        .enumerate()
        .for_each(|(idx, (depth, st))| {
            let (r, c) = (idx / cols, idx % cols);
            let s = *field.status.get(r, c);
            *st = s;
            if s != PixelStatus::Valid {
                return;
            }
            let sigma_s = *field.sigma_mu_s.get(r, c);
            let noise_m = if sigma_s == 0.0 {
                0.0
            } else {
                let mut rng = StreamKey::new(
                    seed,
                    r as u32,
                    c as u32,
                    image_index,
                    0,
                    channel::CRB_NOISE,
                )
                .stream();
                let z: f64 = rng.sample(StandardNormal);
                time_to_range(sigma_s * z)
            };
            *depth = scene.range_m(r, c) + noise_m;
        });

    DepthImage::new(
        Grid::from_vec(rows, cols, depths)?,
        Grid::from_vec(rows, cols, status)?,
        Provenance {
            mode: ImageMode::Crb,
            seed,
            config_digest,
        },
    )
}

/// One CRB-mode depth image.
pub fn simulate_crb_image(
    scene: &Scene,
    config: &SystemConfig,
    acq: &AcquisitionSpec,
    seed: u64,
) -> Result<DepthImage> {
    let opts = FisherOptions {
        rel_tol: config.tolerances.quadrature_rel,
        ..FisherOptions::default()
    };
    let field = sigma_mu_field(scene, config, acq, &opts)?;
    apply_crb_noise(scene, &field, seed, 0, config.digest())
}

/// A batch of CRB-mode depth images. The sigma field is computed once and
/// shared; images differ only in their noise draws and are deterministic per
/// (seed, image index).
pub fn simulate_crb_batch(
    scene: &Scene,
    config: &SystemConfig,
    acq: &AcquisitionSpec,
    n_images: u32,
    seed: u64,
) -> Result<Vec<DepthImage>> {
    if n_images < 1 {
        return Err(crate::error::SimError::domain("n_images", "must be >= 1"));
    }
    let opts = FisherOptions {
        rel_tol: config.tolerances.quadrature_rel,
        ..FisherOptions::default()
    };
    let field = sigma_mu_field(scene, config, acq, &opts)?;
    let digest = config.digest();
    (0..n_images)
        .into_par_iter()
        .map(|i| apply_crb_noise(scene, &field, seed, i, digest))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table1_acq(frames: u32) -> AcquisitionSpec {
        AcquisitionSpec {
            frames,
            exposure_s: 1e-3,
            rep_rate_hz: 2.25e6,
        }
    }

    #[test]
    fn zero_sigma_field_returns_ground_truth_exactly() {
        let scene = Scene::uniform(4, 5, 14.73, 0.09).unwrap();
        let field = SigmaField::constant(4, 5, 0.0);
        let img = apply_crb_noise(&scene, &field, 9, 0, 0).unwrap();
        for r in 0..4 {
            for c in 0..5 {
                assert_eq!(img.depth_m(r, c), 14.73);
            }
        }
    }

    #[test]
    fn same_seed_bit_identical_images() {
        let config = SystemConfig::table1_resolution_target();
        let scene = Scene::uniform(3, 3, 14.73, 0.09).unwrap();
        let a = simulate_crb_image(&scene, &config, &table1_acq(1000), 42).unwrap();
        let b = simulate_crb_image(&scene, &config, &table1_acq(1000), 42).unwrap();
        assert_eq!(a, b);
        let c = simulate_crb_image(&scene, &config, &table1_acq(1000), 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn emitted_noise_std_matches_sigma_field() {
        // 10k draws on a 1x1 scene against an independently coded bound.
        let config = SystemConfig::table1_resolution_target();
        let scene = Scene::uniform(1, 1, 14.73, 0.09).unwrap();
        let acq = table1_acq(1000);
        let opts = FisherOptions::default();
        let field = sigma_mu_field(&scene, &config, &acq, &opts).unwrap();

        // Separately coded sigma_mu: trapezoid rule over the information
        // integrand composed with the closed-form bound.
        let model = config
            .likelihood_model(&TargetPatch::new(14.73, 0.09))
            .unwrap();
        let oracle_sigma = {
            let mu = model.pulse.peak_time_s;
            let s = model.pulse.sigma_s;
            let alpha = total_alpha(&model);
            let norm = model.signal_ppp / (s * (2.0 * std::f64::consts::PI).sqrt());
            let scale = model.signal_ppp * model.signal_ppp
                / (2.0 * std::f64::consts::PI * s.powi(6) * alpha);
            let (a, b) = (mu - 12.0 * s, mu + 12.0 * s);
            let n = 400_000usize;
            let h = (b - a) / n as f64;
            let f = |t: f64| {
                let d = t - mu;
                let g = (-0.5 * (d / s) * (d / s)).exp();
                scale * d * d * g * g / (model.floor_rate_hz() + norm * g)
            };
            let mut acc = 0.5 * (f(a) + f(b));
            for i in 1..n {
                acc += f(a + i as f64 * h);
            }
            let info = acc * h;
            let p = crate::fisher::success_probability(alpha, &acq).unwrap();
            crate::constants::FWHM_FACTOR / (acq.frames as f64 * p * info).sqrt()
        };
        let field_sigma = *field.sigma_mu_s.get(0, 0);
        assert!(
            ((field_sigma - oracle_sigma) / oracle_sigma).abs() < 1e-3,
            "field sigma {field_sigma:e} vs oracle {oracle_sigma:e}"
        );

        let n = 10_000u32;
        let images = simulate_crb_batch(&scene, &config, &acq, n, 7).unwrap();
        let depths: Vec<f64> = images.iter().map(|im| im.depth_m(0, 0)).collect();
        let mean = depths.iter().sum::<f64>() / n as f64;
        let var = depths.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let expected_m = time_to_range(oracle_sigma);
        let got = var.sqrt();
        assert!(
            ((got - expected_m) / expected_m).abs() < 0.03,
            "sample std {got:e} m vs sigma {expected_m:e} m"
        );
    }

    #[test]
    fn batch_head_equals_single_image() {
        let config = SystemConfig::table1_resolution_target();
        let scene = Scene::uniform(2, 2, 14.73, 0.09).unwrap();
        let acq = table1_acq(500);
        let batch = simulate_crb_batch(&scene, &config, &acq, 3, 21).unwrap();
        let single = simulate_crb_image(&scene, &config, &acq, 21).unwrap();
        assert_eq!(batch[0], single);
        assert_ne!(batch[0], batch[1]);
    }

    #[test]
    fn batch_image_means_scatter_like_clt() {
        let config = SystemConfig::table1_resolution_target();
        let (rows, cols) = (8, 8);
        let scene = Scene::uniform(rows, cols, 14.73, 0.09).unwrap();
        let acq = table1_acq(1000);
        let field =
            sigma_mu_field(&scene, &config, &acq, &FisherOptions::default()).unwrap();
        let sigma_m = time_to_range(*field.sigma_mu_s.get(0, 0));

        let n = 100u32;
        let images = simulate_crb_batch(&scene, &config, &acq, n, 3).unwrap();
        let means: Vec<f64> = images
            .iter()
            .map(|im| im.valid_depths().sum::<f64>() / (rows * cols) as f64)
            .collect();
        let grand = means.iter().sum::<f64>() / n as f64;
        let std = (means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let expected = sigma_m / ((rows * cols) as f64).sqrt();
        assert!(
            (std - expected).abs() / expected < 0.5,
            "per-image mean std {std:e} vs CLT {expected:e}"
        );
        assert!((grand - 14.73).abs() < 5.0 * expected / (n as f64).sqrt());
    }

    #[test]
    fn noise_is_white_across_the_batch() {
        let config = SystemConfig::table1_resolution_target();
        let scene = Scene::uniform(2, 2, 14.73, 0.09).unwrap();
        let acq = table1_acq(1000);
        let n = 400u32;
        let images = simulate_crb_batch(&scene, &config, &acq, n, 99).unwrap();
        // Lag-1 autocorrelation over the image index, per pixel.
        for r in 0..2 {
            for c in 0..2 {
                let xs: Vec<f64> = images.iter().map(|im| im.depth_m(r, c)).collect();
                let mean = xs.iter().sum::<f64>() / n as f64;
                let var: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
                let cov: f64 = xs
                    .windows(2)
                    .map(|w| (w[0] - mean) * (w[1] - mean))
                    .sum::<f64>()
                    / (n - 1) as f64;
                let rho = cov / var;
                assert!(
                    rho.abs() < 3.0 / (n as f64).sqrt(),
                    "pixel ({r},{c}) lag-1 autocorrelation {rho}"
                );
            }
        }
    }

    #[test]
    fn darker_pixels_are_noisier() {
        let config = SystemConfig::table1_resolution_target();
        let mut refl = Grid::filled(1, 2, 0.9);
        *refl.get_mut(0, 1) = 0.005;
        let scene = Scene::new(
            Grid::filled(1, 2, 14.73),
            refl,
            Grid::filled(1, 2, false),
        )
        .unwrap();
        let field = sigma_mu_field(
            &scene,
            &config,
            &table1_acq(1000),
            &FisherOptions::default(),
        )
        .unwrap();
        let bright = *field.sigma_mu_s.get(0, 0);
        let dark = *field.sigma_mu_s.get(0, 1);
        assert!(
            dark > bright,
            "dark pixel sigma {dark:e} should exceed bright {bright:e}"
        );

        // Each pixel is noised with its own sigma, never its neighbor's:
        // over many images each pixel's scatter tracks its own field value.
        let images = simulate_crb_batch(&scene, &config, &table1_acq(1000), 400, 5).unwrap();
        let std_of = |r: usize, c: usize| {
            let xs: Vec<f64> = images.iter().map(|im| im.depth_m(r, c)).collect();
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
        };
        let bright_m = time_to_range(bright);
        let dark_m = time_to_range(dark);
        assert!(((std_of(0, 0) - bright_m) / bright_m).abs() < 0.15);
        assert!(((std_of(0, 1) - dark_m) / dark_m).abs() < 0.15);
        assert!(std_of(0, 1) > 2.0 * std_of(0, 0));
    }

    #[test]
    fn invalid_and_no_return_pixels_are_not_noised() {
        let config = SystemConfig::table1_resolution_target();
        let mut invalid = Grid::filled(1, 3, false);
        *invalid.get_mut(0, 0) = true;
        let mut refl = Grid::filled(1, 3, 0.09);
        *refl.get_mut(0, 1) = 0.0; // zero return: information is zero
        let scene = Scene::new(Grid::filled(1, 3, 14.73), refl, invalid).unwrap();
        let img = simulate_crb_image(&scene, &config, &table1_acq(1000), 8).unwrap();
        assert_eq!(img.status(0, 0), PixelStatus::NoReturn);
        assert_eq!(img.status(0, 1), PixelStatus::NotEstimable);
        assert_eq!(img.status(0, 2), PixelStatus::Valid);
        assert_eq!(img.n_valid(), 1);
    }

    #[test]
    fn memo_bucket_groups_within_tolerance() {
        let x = 7.5e-4;
        assert_eq!(memo_bucket(x), memo_bucket(x * (1.0 + 2e-4)));
        assert_ne!(memo_bucket(x), memo_bucket(x * 1.01));
        assert_eq!(memo_bucket(0.0), memo_bucket(-1.0));
    }
}
