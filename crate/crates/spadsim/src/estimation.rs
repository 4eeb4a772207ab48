//! Match-filter depth estimation and distinguishability measurement.
//!
//! The depth of a pixel is read off its histogram by cross-correlating the
//! counts with a Gaussian kernel and taking the position of highest response
//! — an unbiased estimator for a single Gaussian peak on a uniform
//! background, provided the peak sits well inside the record. Estimates are
//! bin-resolution by default; an optional three-point parabolic refinement
//! recovers sub-bin structure for sweeps whose scatter falls below one bin.

use rayon::prelude::*;

use crate::constants::{time_to_range, FWHM_FACTOR};
use crate::error::{Result, SimError};
use crate::fisher::{crb_sigma_star, fisher_per_pulse, AcquisitionSpec, FisherOptions};
use crate::likelihood::{total_alpha, LikelihoodModel};
use crate::scene::{DepthImage, Grid, ImageMode, PixelStatus, Provenance};
use crate::spad_sampler::{
    build_histogram, BinLayout, Histogram, HistogramCube, JitterSpec, PixelShiftPolicy,
};

/// Sub-bin refinement of the correlation argmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubBinRefinement {
    /// Bin-resolution estimates (the default).
    Off,
    /// Three-point parabolic interpolation around the peak.
    Parabolic,
}

/// Match-filter configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchFilterSpec {
    /// Standard deviation of the Gaussian kernel (s). Matched filtering in
    /// the literal sense sets this to the impulse-response sigma'.
    pub kernel_sigma_s: f64,
    /// Kernel support half-width in multiples of sigma.
    pub kernel_truncation: f64,
    pub sub_bin: SubBinRefinement,
}

impl MatchFilterSpec {
    /// Kernel matched to the configured pulse width.
    pub fn matched(sigma_prime_s: f64) -> Self {
        Self {
            kernel_sigma_s: sigma_prime_s,
            kernel_truncation: 4.0,
            sub_bin: SubBinRefinement::Off,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kernel_sigma_s > 0.0) {
            return Err(SimError::domain("match_filter.kernel_sigma_s", "must be > 0"));
        }
        if !(self.kernel_truncation >= 3.0) {
            return Err(SimError::domain(
                "match_filter.kernel_truncation",
                "must be >= 3 sigma",
            ));
        }
        Ok(())
    }
}

/// Peak arrival time of a histogram by Gaussian cross-correlation (s).
///
/// The kernel is sampled at bin centers and truncated; edge bins correlate
/// against the available support only, with no wraparound. Ties break toward
/// the lowest index. Returns the center time of the winning bin.
pub fn match_filter_peak(
    hist: &Histogram,
    bin_width_s: f64,
    spec: &MatchFilterSpec,
) -> Result<f64> {
    spec.validate()?;
    if !(bin_width_s > 0.0) {
        return Err(SimError::domain("bin_width_s", "must be > 0"));
    }
    if hist.total_counts() == 0 {
        return Err(SimError::domain(
            "histogram",
            "empty histogram: no photons to estimate a depth from",
        ));
    }

    let b = hist.counts.len();
    let half = ((spec.kernel_truncation * spec.kernel_sigma_s) / bin_width_s).ceil() as usize;
    let half = half.max(1);
    // Gaussian sampled at bin-center offsets -half..=half.
    let kernel: Vec<f64> = (-(half as isize)..=half as isize)
        .map(|m| {
            let z = m as f64 * bin_width_s / spec.kernel_sigma_s;
            (-0.5 * z * z).exp()
        })
        .collect();

    let mut best_idx = 0usize;
    let mut best = f64::NEG_INFINITY;
    let mut response = vec![0.0f64; b];
    for (i, r) in response.iter_mut().enumerate() {
        let mut acc = 0.0;
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(b - 1);
        for j in lo..=hi {
            let c = hist.counts[j];
            if c != 0 {
                acc += kernel[j + half - i] * c as f64;
            }
        }
        *r = acc;
        if acc > best {
            best = acc;
            best_idx = i;
        }
    }

    let refined = match spec.sub_bin {
        SubBinRefinement::Off => best_idx as f64,
        SubBinRefinement::Parabolic => {
            if best_idx == 0 || best_idx == b - 1 {
                best_idx as f64
            } else {
                let (y0, y1, y2) = (
                    response[best_idx - 1],
                    response[best_idx],
                    response[best_idx + 1],
                );
                let denom = y0 - 2.0 * y1 + y2;
                if denom.abs() < f64::EPSILON * y1.abs().max(1.0) {
                    best_idx as f64
                } else {
                    let delta = 0.5 * (y0 - y2) / denom;
                    best_idx as f64 + delta.clamp(-0.5, 0.5)
                }
            }
        }
    };
    Ok((refined + 0.5) * bin_width_s)
}

/// Depth image from a histogram cube: per-pixel match-filter peak converted
/// to meters. Pixels with empty histograms become invalid.
pub fn depth_image_from_cube(cube: &HistogramCube, spec: &MatchFilterSpec) -> Result<DepthImage> {
    spec.validate()?;
    let rows = cube.rows();
    let cols = cube.cols();
    let mut depths = vec![f64::NAN; rows * cols];
    let mut status = vec![PixelStatus::NoReturn; rows * cols];

    depths
        .par_iter_mut()
        .zip(status.par_iter_mut())
        .enumerate()
        .for_each(|(idx, (depth, st))| {
            let (r, c) = (idx / cols, idx % cols);
            let upstream = *cube.status.get(r, c);
            if upstream != PixelStatus::Valid {
                *st = upstream;
                return;
            }
            match match_filter_peak(cube.histograms.get(r, c), cube.bin_width_s, spec) {
                Ok(t) => {
                    *depth = time_to_range(t);
                    *st = PixelStatus::Valid;
                }
                Err(_) => *st = PixelStatus::EmptyHistogram,
            }
        });

    DepthImage::new(
        Grid::from_vec(rows, cols, depths)?,
        Grid::from_vec(rows, cols, status)?,
        Provenance {
            mode: ImageMode::Histogram,
            seed: cube.seed,
            config_digest: cube.config_digest,
        },
    )
}

/// Schedule and repetition structure of a distinguishability sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPlan {
    /// Largest frame count; the schedule is linear up to it.
    pub total_frames: u32,
    /// Number of points in the schedule.
    pub increments: u32,
    /// Independent histograms measured at each point.
    pub repeats: u32,
}

impl SweepPlan {
    pub fn validate(&self) -> Result<()> {
        if self.increments < 1 || self.total_frames < self.increments {
            return Err(SimError::domain(
                "sweep",
                "needs increments >= 1 and total_frames >= increments",
            ));
        }
        if self.repeats < 2 {
            return Err(SimError::domain(
                "sweep.repeats",
                "the scatter of at least two estimates defines a distinguishability",
            ));
        }
        Ok(())
    }

    /// Frame counts of the schedule: total_frames/increments, 2x that, ...
    /// up to total_frames (linear spacing, truncated to integers).
    pub fn schedule(&self) -> Vec<u32> {
        let step = self.total_frames / self.increments;
        (1..=self.increments).map(|m| m * step).collect()
    }
}

/// Which process produced a distinguishability curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveMode {
    Crb,
    Histogram,
    Measured,
}

/// One point of a distinguishability curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub n_frames: u32,
    /// One-FWHM distinguishability in seconds; None when ill-defined
    /// (fewer than two of the repeats produced a non-empty histogram).
    pub distinguishability_s: Option<f64>,
    /// Repeats that produced an estimate.
    pub n_valid: u32,
    /// Standard error of the distinguishability estimate, from the
    /// chi-distribution spread of a sample standard deviation.
    pub std_err_s: Option<f64>,
}

/// Distinguishability as a function of frames summed.
#[derive(Debug, Clone, PartialEq)]
pub struct DistinguishabilityCurve {
    pub mode: CurveMode,
    pub points: Vec<CurvePoint>,
}

/// A sweep produces the sampled histogram-mode curve and the matching
/// Cramér-Rao curve.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub histogram: DistinguishabilityCurve,
    pub crb: DistinguishabilityCurve,
}

/// Measure the distinguishability of a single pixel as a function of frames
/// summed: for each point of the schedule, build `repeats` independent
/// histograms, estimate each depth with the match filter, and record
/// 2 sqrt(2 ln 2) times the sample standard deviation of the estimates.
#[allow(clippy::too_many_arguments)]
pub fn distinguishability_sweep(
    model: &LikelihoodModel,
    layout: BinLayout,
    acq: &AcquisitionSpec,
    jitter: JitterSpec,
    policy: &PixelShiftPolicy,
    plan: &SweepPlan,
    spec: &MatchFilterSpec,
    seed: u64,
) -> Result<SweepResult> {
    let bin_width = layout.bin_width_s;
    distinguishability_sweep_with_estimator(
        model,
        layout,
        acq,
        jitter,
        policy,
        plan,
        seed,
        move |h| match_filter_peak(h, bin_width, spec),
    )
}

/// Sweep with a caller-supplied estimator, the hook that lets tests replace
/// the match filter with the true peak position.
#[allow(clippy::too_many_arguments)]
pub fn distinguishability_sweep_with_estimator<E>(
    model: &LikelihoodModel,
    layout: BinLayout,
    acq: &AcquisitionSpec,
    jitter: JitterSpec,
    policy: &PixelShiftPolicy,
    plan: &SweepPlan,
    seed: u64,
    estimator: E,
) -> Result<SweepResult>
where
    E: Fn(&Histogram) -> Result<f64> + Sync,
{
    model.validate()?;
    plan.validate()?;
    let schedule = plan.schedule();
    let pulses = acq.pulses_per_frame_count();

    // Each (point, repeat) task owns a disjoint block of frame indices so
    // every histogram in the sweep is statistically independent.
    let tasks: Vec<(usize, u32)> = schedule
        .iter()
        .enumerate()
        .flat_map(|(mi, _)| (0..plan.repeats).map(move |r| (mi, r)))
        .collect();

    let estimates: Vec<(usize, Option<f64>)> = tasks
        .par_iter()
        .map(|&(mi, rep)| {
            let n = schedule[mi];
            let task_index = mi as u32 * plan.repeats + rep;
            let frame_offset = task_index * plan.total_frames;
            let hist = build_histogram(
                model,
                layout,
                n,
                pulses,
                jitter,
                policy,
                seed,
                0,
                0,
                frame_offset,
            )?;
            let est = if hist.total_counts() == 0 {
                None
            } else {
                Some(estimator(&hist)?)
            };
            Ok((mi, est))
        })
        .collect::<Result<_>>()?;

    let mut per_point: Vec<Vec<f64>> = vec![Vec::new(); schedule.len()];
    for (mi, est) in estimates {
        if let Some(t) = est {
            per_point[mi].push(t);
        }
    }

    let hist_points: Vec<CurvePoint> = schedule
        .iter()
        .zip(per_point.iter())
        .map(|(&n, ests)| {
            let n_valid = ests.len() as u32;
            if n_valid < 2 {
                // All (or all but one) repeats came back empty: the
                // distinguishability is ill-defined at this point.
                return CurvePoint {
                    n_frames: n,
                    distinguishability_s: None,
                    n_valid,
                    std_err_s: None,
                };
            }
            let mean = ests.iter().sum::<f64>() / n_valid as f64;
            let var = ests.iter().map(|e| (e - mean).powi(2)).sum::<f64>()
                / (n_valid - 1) as f64;
            let std = var.sqrt();
            let dist = FWHM_FACTOR * std;
            // SE of a sample standard deviation: std / sqrt(2 (n-1)).
            let se = FWHM_FACTOR * std / (2.0 * (n_valid - 1) as f64).sqrt();
            CurvePoint {
                n_frames: n,
                distinguishability_s: Some(dist),
                n_valid,
                std_err_s: Some(se),
            }
        })
        .collect();

    // Matching Cramér-Rao curve for the same model and schedule.
    let info = fisher_per_pulse(model, &FisherOptions::default())?;
    let alpha = total_alpha(model);
    let crb_points: Vec<CurvePoint> = schedule
        .iter()
        .map(|&n| {
            let acq_n = AcquisitionSpec {
                frames: n,
                exposure_s: acq.exposure_s,
                rep_rate_hz: acq.rep_rate_hz,
            };
            let dist = crb_sigma_star(info.info_per_pulse, alpha, &acq_n)
                .ok()
                .map(|b| FWHM_FACTOR * b.seconds())
                .filter(|d| d.is_finite());
            CurvePoint {
                n_frames: n,
                distinguishability_s: dist,
                n_valid: plan.repeats,
                std_err_s: Some(0.0),
            }
        })
        .collect();

    Ok(SweepResult {
        histogram: DistinguishabilityCurve {
            mode: CurveMode::Histogram,
            points: hist_points,
        },
        crb: DistinguishabilityCurve {
            mode: CurveMode::Crb,
            points: crb_points,
        },
    })
}

/// Least-squares slope of log(distinguishability) against log(N) over the
/// well-defined points.
pub fn log_log_slope(curve: &DistinguishabilityCurve) -> Option<f64> {
    let pts: Vec<(f64, f64)> = curve
        .points
        .iter()
        .filter_map(|p| {
            p.distinguishability_s
                .filter(|d| *d > 0.0)
                .map(|d| ((p.n_frames as f64).ln(), d.ln()))
        })
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// Histogram of pixel counts against depth.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthDistribution {
    /// Lower edge of the first bar (m), anchored to a multiple of the bar
    /// width so distributions of the same width are alignable.
    pub origin_m: f64,
    pub bin_width_m: f64,
    pub counts: Vec<u64>,
}

impl DepthDistribution {
    pub fn n_bars(&self) -> usize {
        self.counts.len()
    }

    pub fn bar_center_m(&self, i: usize) -> f64 {
        self.origin_m + (i as f64 + 0.5) * self.bin_width_m
    }
}

/// Bin the valid depths of an image.
pub fn depth_distribution(image: &DepthImage, bin_width_m: f64) -> Result<DepthDistribution> {
    if !(bin_width_m > 0.0) {
        return Err(SimError::domain("bin_width_m", "must be > 0"));
    }
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut any = false;
    for d in image.valid_depths() {
        min = min.min(d);
        max = max.max(d);
        any = true;
    }
    if !any {
        return Err(SimError::domain(
            "image",
            "no valid pixels to build a depth distribution from",
        ));
    }
    let origin = (min / bin_width_m).floor() * bin_width_m;
    let n_bars = (((max - origin) / bin_width_m).floor() as usize) + 1;
    let mut counts = vec![0u64; n_bars];
    for d in image.valid_depths() {
        let mut i = ((d - origin) / bin_width_m).floor() as usize;
        if i >= n_bars {
            i = n_bars - 1; // top edge inclusion
        }
        counts[i] += 1;
    }
    Ok(DepthDistribution {
        origin_m: origin,
        bin_width_m,
        counts,
    })
}

/// Bar-by-bar agreement of two depth distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct PerBarAccuracy {
    /// min(a, b) / max(a, b) per bar over the union of occupied ranges;
    /// 1.0 where both bars are empty.
    pub per_bar: Vec<f64>,
    pub median: f64,
}

/// Compare two distributions with identical binning. The accuracy of a bar
/// is the symmetric bounded ratio min/max; the summary is the median bar.
pub fn per_bar_accuracy(a: &DepthDistribution, b: &DepthDistribution) -> Result<PerBarAccuracy> {
    let rel_w = ((a.bin_width_m - b.bin_width_m) / a.bin_width_m).abs();
    if rel_w > 1e-9 {
        return Err(SimError::domain(
            "distributions",
            format!(
                "bin widths differ: {} vs {}",
                a.bin_width_m, b.bin_width_m
            ),
        ));
    }
    // Origins must sit on the same lattice.
    let offset = (b.origin_m - a.origin_m) / a.bin_width_m;
    let steps = offset.round();
    if (offset - steps).abs() > 1e-6 {
        return Err(SimError::domain(
            "distributions",
            format!(
                "bin origins are not aligned: {} vs {} at width {}",
                a.origin_m, b.origin_m, a.bin_width_m
            ),
        ));
    }
    let steps = steps as i64;

    // Union of the two bar ranges, indexed on a's lattice.
    let lo = 0.min(steps);
    let hi = (a.counts.len() as i64).max(steps + b.counts.len() as i64);
    let mut per_bar = Vec::with_capacity((hi - lo) as usize);
    for i in lo..hi {
        let ca = if i >= 0 && (i as usize) < a.counts.len() {
            a.counts[i as usize]
        } else {
            0
        };
        let jb = i - steps;
        let cb = if jb >= 0 && (jb as usize) < b.counts.len() {
            b.counts[jb as usize]
        } else {
            0
        };
        let acc = if ca == 0 && cb == 0 {
            1.0
        } else {
            ca.min(cb) as f64 / ca.max(cb) as f64
        };
        per_bar.push(acc);
    }

    let mut sorted = per_bar.clone();
    sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    Ok(PerBarAccuracy { per_bar, median })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::PulseResponse;
    use crate::scene::Scene;

    fn hist(counts: Vec<u32>) -> Histogram {
        let total: u32 = counts.iter().sum();
        Histogram {
            n_frames: total,
            n_empty_frames: 0,
            counts,
        }
    }

    fn spec_for(bins_sigma: f64, w: f64) -> MatchFilterSpec {
        MatchFilterSpec {
            kernel_sigma_s: bins_sigma * w,
            kernel_truncation: 4.0,
            sub_bin: SubBinRefinement::Off,
        }
    }

    #[test]
    fn delta_input_returns_its_bin_center() {
        let w = 50e-12;
        let mut counts = vec![0u32; 64];
        counts[17] = 1;
        let t = match_filter_peak(&hist(counts), w, &spec_for(2.0, w)).unwrap();
        assert!((t - 17.5 * w).abs() < 1e-18);
    }

    #[test]
    fn tie_breaks_toward_lowest_index() {
        let w = 50e-12;
        let mut counts = vec![0u32; 64];
        counts[10] = 3;
        counts[20] = 3;
        let t = match_filter_peak(&hist(counts), w, &spec_for(1.5, w)).unwrap();
        assert!((t - 10.5 * w).abs() < 1e-18);
    }

    #[test]
    fn empty_histogram_is_an_error() {
        let w = 50e-12;
        assert!(match_filter_peak(&hist(vec![0; 16]), w, &spec_for(1.0, w)).is_err());
    }

    #[test]
    fn argmax_shift_covariance() {
        let w = 50e-12;
        let mut counts = vec![0u32; 128];
        for (i, c) in [(40usize, 2u32), (41, 7), (42, 12), (43, 6), (44, 1)] {
            counts[i] = c;
        }
        let spec = spec_for(1.5, w);
        let base = match_filter_peak(&hist(counts.clone()), w, &spec).unwrap();
        let shift = 23usize;
        let mut moved = vec![0u32; 128];
        for (i, &c) in counts.iter().enumerate() {
            if c > 0 {
                moved[i + shift] = c;
            }
        }
        let t = match_filter_peak(&hist(moved), w, &spec).unwrap();
        assert!(((t - base) - shift as f64 * w).abs() < 1e-18);
    }

    #[test]
    fn kernel_width_robustness_on_clean_peak() {
        // A clean Gaussian-ish peak: kernels from 0.5 to 2 sigma' agree
        // within one bin.
        let w = 50e-12;
        let sigma_bins = 5.0;
        let mut counts = vec![0u32; 256];
        for i in 0..256 {
            let z = (i as f64 - 130.0) / sigma_bins;
            counts[i] = (1000.0 * (-0.5 * z * z).exp()).round() as u32;
        }
        let h = hist(counts);
        let mut estimates = Vec::new();
        for k in [0.5, 1.0, 2.0] {
            let spec = spec_for(k * sigma_bins, w);
            estimates.push(match_filter_peak(&h, w, &spec).unwrap());
        }
        for e in &estimates {
            assert!((e - estimates[0]).abs() <= w, "estimates {estimates:?}");
        }
    }

    #[test]
    fn parabolic_refinement_moves_subbin_and_is_bounded() {
        let w = 50e-12;
        // Slightly asymmetric peak: refinement should lean toward the heavy
        // neighbor but never leave the half-bin interval.
        let mut counts = vec![0u32; 64];
        counts[30] = 40;
        counts[31] = 100;
        counts[32] = 80;
        let mut spec = spec_for(1.0, w);
        let coarse = match_filter_peak(&hist(counts.clone()), w, &spec).unwrap();
        spec.sub_bin = SubBinRefinement::Parabolic;
        let fine = match_filter_peak(&hist(counts), w, &spec).unwrap();
        assert!(fine > coarse, "should lean toward bin 32");
        assert!((fine - coarse).abs() <= 0.5 * w + 1e-18);
    }

    fn small_model(ppp: f64, floor_hz: f64) -> LikelihoodModel {
        LikelihoodModel {
            dark_rate_hz: floor_hz,
            background_rate_hz: 0.0,
            signal_ppp: ppp,
            pulse: PulseResponse {
                peak_time_s: 20e-9,
                sigma_s: 1.5e-9,
            },
            tcspc_interval_s: 64e-9,
        }
    }

    const SMALL_LAYOUT: BinLayout = BinLayout {
        n_bins: 64,
        bin_width_s: 1e-9,
    };

    #[test]
    fn monte_carlo_estimates_are_unbiased_high_sbnr() {
        // 1000 sampler histograms, no skew: the mean estimate lands on the
        // true peak within three standard errors. The flux is kept low
        // (P_pp = 0.01 per pulse) so first-photon pile-up distortion, which
        // shifts the histogram by about sigma' * P_pp / sqrt(2 pi), stays
        // below the Monte-Carlo resolution; the background floor is four
        // orders below the peak (high SbNR).
        let model = small_model(0.01, 1e4);
        let spec = MatchFilterSpec::matched(model.pulse.sigma_s);
        let mut estimates = Vec::new();
        for rep in 0..1000u32 {
            let h = build_histogram(
                &model,
                SMALL_LAYOUT,
                500,
                4,
                JitterSpec::none(),
                &PixelShiftPolicy::Fixed(0.0),
                1234,
                0,
                0,
                rep * 500,
            )
            .unwrap();
            if h.total_counts() > 0 {
                estimates.push(match_filter_peak(&h, SMALL_LAYOUT.bin_width_s, &spec).unwrap());
            }
        }
        assert!(estimates.len() > 990);
        let n = estimates.len() as f64;
        let mean = estimates.iter().sum::<f64>() / n;
        let std =
            (estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let bias = (mean - model.pulse.peak_time_s).abs();
        assert!(
            bias < 3.0 * std / n.sqrt() + 1e-13,
            "bias {bias:e} vs 3 SE {:e}",
            3.0 * std / n.sqrt()
        );
    }

    #[test]
    fn depth_image_from_cube_1x1_reduces_to_peak() {
        let config = crate::config::SystemConfig::table1_resolution_target();
        let scene = Scene::uniform(1, 1, 14.73, 0.09).unwrap();
        let acq = AcquisitionSpec {
            frames: 200,
            exposure_s: 1e-3,
            rep_rate_hz: 2.25e6,
        };
        let cube = crate::spad_sampler::simulate_histogram_cube(&scene, &config, &acq, 55).unwrap();
        let sigma = crate::likelihood::sigma_from_fwhm(config.laser.pulse_fwhm_s).unwrap();
        let spec = MatchFilterSpec::matched(sigma);
        let img = depth_image_from_cube(&cube, &spec).unwrap();
        let t = match_filter_peak(cube.histograms.get(0, 0), cube.bin_width_s, &spec).unwrap();
        assert_eq!(img.depth_m(0, 0), time_to_range(t));
        assert_eq!(img.provenance.mode, ImageMode::Histogram);
    }

    #[test]
    fn all_empty_cube_yields_all_invalid_image() {
        let mut config = crate::config::SystemConfig::table1_resolution_target();
        config.sensor.dark_rate_hz = 0.0;
        let scene = Scene::uniform(2, 2, 14.73, 0.0).unwrap(); // black target
        let acq = AcquisitionSpec {
            frames: 10,
            exposure_s: 1e-3,
            rep_rate_hz: 2.25e6,
        };
        let cube = crate::spad_sampler::simulate_histogram_cube(&scene, &config, &acq, 1).unwrap();
        let spec = MatchFilterSpec::matched(2.5e-10);
        let img = depth_image_from_cube(&cube, &spec).unwrap();
        assert_eq!(img.n_valid(), 0);
        assert!(
            (0..2).all(|r| (0..2).all(|c| img.status(r, c) == PixelStatus::EmptyHistogram))
        );
    }

    #[test]
    fn sweep_crb_curve_scales_inverse_sqrt_n() {
        let model = small_model(5e-3, 1e4);
        let acq = AcquisitionSpec {
            frames: 100,
            exposure_s: 10.0,
            rep_rate_hz: 1.0,
        };
        let plan = SweepPlan {
            total_frames: 100,
            increments: 5,
            repeats: 4,
        };
        let spec = MatchFilterSpec::matched(model.pulse.sigma_s);
        let sweep = distinguishability_sweep(
            &model,
            SMALL_LAYOUT,
            &acq,
            JitterSpec::none(),
            &PixelShiftPolicy::Fixed(0.0),
            &plan,
            &spec,
            3,
        )
        .unwrap();
        let pts = &sweep.crb.points;
        let d0 = pts[0].distinguishability_s.unwrap();
        for p in pts {
            let expected = d0 * (pts[0].n_frames as f64 / p.n_frames as f64).sqrt();
            let got = p.distinguishability_s.unwrap();
            assert!(((got - expected) / expected).abs() < 1e-9);
        }
    }

    #[test]
    fn sweep_with_true_peak_estimator_has_zero_scatter() {
        let model = small_model(0.2, 1e4);
        let acq = AcquisitionSpec {
            frames: 40,
            exposure_s: 4.0,
            rep_rate_hz: 1.0,
        };
        let plan = SweepPlan {
            total_frames: 40,
            increments: 4,
            repeats: 5,
        };
        let mu = model.pulse.peak_time_s;
        let sweep = distinguishability_sweep_with_estimator(
            &model,
            SMALL_LAYOUT,
            &acq,
            JitterSpec::none(),
            &PixelShiftPolicy::Fixed(0.0),
            &plan,
            17,
            move |_h| Ok(mu),
        )
        .unwrap();
        for p in &sweep.histogram.points {
            assert_eq!(p.distinguishability_s, Some(0.0), "N = {}", p.n_frames);
        }
    }

    #[test]
    fn sweep_flags_ill_defined_points_instead_of_fabricating() {
        // A link so dark that single-frame histograms are almost surely
        // empty: the early schedule points must be flagged, not invented.
        let model = small_model(1e-7, 10.0);
        let acq = AcquisitionSpec {
            frames: 4,
            exposure_s: 2.0,
            rep_rate_hz: 1.0,
        };
        let plan = SweepPlan {
            total_frames: 4,
            increments: 2,
            repeats: 3,
        };
        let spec = MatchFilterSpec::matched(model.pulse.sigma_s);
        let sweep = distinguishability_sweep(
            &model,
            SMALL_LAYOUT,
            &acq,
            JitterSpec::none(),
            &PixelShiftPolicy::Fixed(0.0),
            &plan,
            &spec,
            2,
        )
        .unwrap();
        for p in &sweep.histogram.points {
            assert!(p.distinguishability_s.is_none());
            assert!(p.n_valid < 2);
        }
    }

    #[test]
    fn log_log_slope_recovers_powers() {
        let mk = |pow: f64| DistinguishabilityCurve {
            mode: CurveMode::Measured,
            points: (1..=10)
                .map(|n| CurvePoint {
                    n_frames: n * 10,
                    distinguishability_s: Some(((n * 10) as f64).powf(pow)),
                    n_valid: 2,
                    std_err_s: None,
                })
                .collect(),
        };
        assert!((log_log_slope(&mk(-0.5)).unwrap() + 0.5).abs() < 1e-12);
        assert!((log_log_slope(&mk(-1.0)).unwrap() + 1.0).abs() < 1e-12);
    }

    fn image_from_depths(rows: usize, cols: usize, depths: Vec<f64>) -> DepthImage {
        DepthImage::new(
            Grid::from_vec(rows, cols, depths).unwrap(),
            Grid::filled(rows, cols, PixelStatus::Valid),
            Provenance {
                mode: ImageMode::Crb,
                seed: 0,
                config_digest: 0,
            },
        )
        .unwrap()
    }

    #[test]
    fn uniform_image_occupies_single_bar() {
        let img = image_from_depths(2, 3, vec![14.7301; 6]);
        let d = depth_distribution(&img, 0.01).unwrap();
        assert_eq!(d.counts.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(d.counts.iter().sum::<u64>(), 6);
    }

    #[test]
    fn two_plane_image_gives_area_ratio() {
        let mut depths = vec![10.0; 30];
        depths.extend(vec![10.5; 10]);
        let img = image_from_depths(4, 10, depths);
        let d = depth_distribution(&img, 0.1).unwrap();
        let occupied: Vec<u64> = d.counts.iter().copied().filter(|&c| c > 0).collect();
        assert_eq!(occupied, vec![30, 10]);
    }

    #[test]
    fn resolution_target_distribution_is_multimodal() {
        let heights = [0.09, 0.07, 0.05, 0.03, 0.01];
        let (scene, _) =
            Scene::resolution_target(24, 40, 14.73, &heights, 0.09, 4).unwrap();
        let field = crate::crb_imager::SigmaField::constant(24, 40, 0.0);
        let img = crate::crb_imager::apply_crb_noise(&scene, &field, 0, 0, 0).unwrap();
        let d = depth_distribution(&img, 0.005).unwrap();
        let occupied = d.counts.iter().filter(|&&c| c > 0).count();
        // Backplane plus five distinct post heights.
        assert_eq!(occupied, 6);
        // Mode at the backplane dominates.
        let max_bar = d.counts.iter().max().unwrap();
        let back_bar_idx = ((14.73 - d.origin_m) / 0.005).floor() as usize;
        assert_eq!(d.counts[back_bar_idx], *max_bar);
    }

    #[test]
    fn per_bar_accuracy_identity_and_definition() {
        let a = DepthDistribution {
            origin_m: 0.0,
            bin_width_m: 1.0,
            counts: vec![10, 0],
        };
        let same = per_bar_accuracy(&a, &a).unwrap();
        assert_eq!(same.median, 1.0);

        let b = DepthDistribution {
            origin_m: 0.0,
            bin_width_m: 1.0,
            counts: vec![5, 0],
        };
        let pb = per_bar_accuracy(&a, &b).unwrap();
        assert_eq!(pb.per_bar, vec![0.5, 1.0]);
        assert_eq!(pb.median, 0.75);
    }

    #[test]
    fn per_bar_accuracy_aligns_lattice_offsets() {
        let a = DepthDistribution {
            origin_m: 0.0,
            bin_width_m: 1.0,
            counts: vec![4, 8],
        };
        let b = DepthDistribution {
            origin_m: 1.0,
            bin_width_m: 1.0,
            counts: vec![8, 2],
        };
        // b's first bar lines up with a's second.
        let pb = per_bar_accuracy(&a, &b).unwrap();
        assert_eq!(pb.per_bar.len(), 3);
        assert_eq!(pb.per_bar[1], 1.0);
        assert_eq!(pb.per_bar[0], 0.0);
    }

    #[test]
    fn per_bar_accuracy_rejects_mismatched_binning() {
        let a = DepthDistribution {
            origin_m: 0.0,
            bin_width_m: 1.0,
            counts: vec![1],
        };
        let b = DepthDistribution {
            origin_m: 0.0,
            bin_width_m: 2.0,
            counts: vec![1],
        };
        assert!(per_bar_accuracy(&a, &b).is_err());
        let c = DepthDistribution {
            origin_m: 0.403,
            bin_width_m: 1.0,
            counts: vec![1],
        };
        assert!(per_bar_accuracy(&a, &c).is_err());
    }
}
