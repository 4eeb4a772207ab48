//! Exact per-bin photon sampling with first-photon-per-frame semantics.
//!
//! Each laser pulse offers every TCSPC bin an independent Bernoulli trial at
//! the probability given by the arrival likelihood; the detector records the
//! earliest success of a frame and discards everything after it. The
//! production sampler walks the bins of each pulse in time order and exits
//! at the first success. A reference sampler materializes the full
//! bin-by-pulse trial matrix and scans it, exactly matching the conceptual
//! data structure; both consume identical keyed random streams, so they
//! agree frame by frame, not merely in distribution.
//!
//! Per pulse, only the bins within eight sigma' of the (jittered, skewed)
//! peak carry signal above 1e-14 of the peak; outside that window the rate
//! is the uniform dark/background floor. Runs of identical-probability bins
//! advance with exact geometric skips, and the signal window itself is
//! sampled by thinning: candidates arrive at the constant per-bin bound
//! floor + P_pp * omega / (sigma' sqrt(2 pi)) and are accepted with the
//! erf-exact bin probability, so erf is only evaluated at candidate bins.
//! Both shortcuts reproduce the independent per-bin Bernoulli process
//! exactly.
//!
//! Randomness is keyed by (seed, row, col, frame, pulse), making every draw
//! a pure function of its coordinates: results do not depend on thread
//! scheduling, and the reference sampler can replay the identical streams.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::config::SystemConfig;
use crate::error::{Result, SimError};
use crate::fisher::AcquisitionSpec;
use crate::likelihood::{BinProbabilityVector, LikelihoodModel};
use crate::radiometry::{SensorSpec, TargetPatch};
use crate::rng::{channel, StreamKey};
use crate::scene::{Grid, PixelStatus, Scene};

/// Half-width of the per-pulse signal window in units of sigma'.
const SIGNAL_WINDOW_SIGMAS: f64 = 8.0;

/// Scale guard for the reference sampler's materialized matrix.
const REFERENCE_MAX_TRIALS: u64 = 1_000_000;

/// Per-pulse timing jitter of the impulse response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterSpec {
    pub mean_s: f64,
    pub std_s: f64,
}

impl JitterSpec {
    pub fn none() -> Self {
        Self {
            mean_s: 0.0,
            std_s: 0.0,
        }
    }
}

/// How the per-frame inter-pixel trigger skew k is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PixelShiftPolicy {
    /// Constant k for every frame (0 recovers the uniform-sensor single-pixel model).
    Fixed(f64),
    /// k drawn per frame from Normal(0, sigma).
    GaussianPerFrame { sigma_s: f64 },
}

/// Column-dependent trigger-skew profile: sigma_q interpolates linearly from
/// the first to the last sensor column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelNoiseProfile {
    pub sigma_start_s: f64,
    pub sigma_end_s: f64,
    pub cols: usize,
}

impl PixelNoiseProfile {
    pub fn from_sensor(sensor: &SensorSpec) -> Self {
        Self {
            sigma_start_s: sensor.sigma_q_start_s,
            sigma_end_s: sensor.sigma_q_end_s,
            cols: sensor.cols,
        }
    }

    /// Trigger-skew standard deviation at a column (s).
    pub fn sigma_at(&self, col: usize) -> f64 {
        if self.cols <= 1 {
            return self.sigma_start_s;
        }
        let f = col as f64 / (self.cols - 1) as f64;
        self.sigma_start_s + (self.sigma_end_s - self.sigma_start_s) * f
    }
}

/// TCSPC bin structure of one pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinLayout {
    pub n_bins: usize,
    pub bin_width_s: f64,
}

impl BinLayout {
    pub fn from_sensor(sensor: &SensorSpec) -> Self {
        Self {
            n_bins: sensor.n_bins,
            bin_width_s: sensor.bin_width_s,
        }
    }
}

/// Accumulated first-photon counts of one pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// First-photon count per bin.
    pub counts: Vec<u32>,
    /// Frames accumulated.
    pub n_frames: u32,
    /// Frames in which no photon was recorded.
    pub n_empty_frames: u32,
}

impl Histogram {
    /// Every frame contributes at most one photon:
    /// sum(counts) + empty frames == frames.
    pub fn frames_conserved(&self) -> bool {
        let total: u64 = self.counts.iter().map(|&c| c as u64).sum();
        total + self.n_empty_frames as u64 == self.n_frames as u64
    }

    pub fn total_counts(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }
}

/// Per-pixel histograms over the full sensor, with acquisition metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramCube {
    pub histograms: Grid<Histogram>,
    pub status: Grid<PixelStatus>,
    pub n_bins: usize,
    pub bin_width_s: f64,
    pub acquisition: AcquisitionSpec,
    pub seed: u64,
    pub config_digest: u64,
}

impl HistogramCube {
    pub fn rows(&self) -> usize {
        self.histograms.rows()
    }

    pub fn cols(&self) -> usize {
        self.histograms.cols()
    }
}

/// Identifies the frame whose keyed streams a sampler consumes.
#[derive(Debug, Clone, Copy)]
pub struct FrameContext {
    pub seed: u64,
    pub row: u32,
    pub col: u32,
    pub frame: u32,
}

impl FrameContext {
    fn stream(&self, pulse: u32, chan: u8) -> ChaCha8Rng {
        StreamKey::new(self.seed, self.row, self.col, self.frame, pulse, chan).stream()
    }
}

/// One Bernoulli trial per bin on an explicit probability vector; returns
/// the lowest successful bin, the first photon that would trigger the TDC.
pub fn sample_pulse(probs: &BinProbabilityVector, rng: &mut impl Rng) -> Option<usize> {
    probs
        .probs
        .iter()
        .position(|&p| rng.gen::<f64>() < p)
}

/// First success of a run of `len` floor bins of equal probability `q`,
/// advanced with a single exact geometric draw: the inversion
/// `m = floor(ln(1-u) / ln(1-q))` reproduces the per-bin Bernoulli process
/// without touching the bins it skips.
fn floor_run_first(rng: &mut ChaCha8Rng, q: f64, len: usize) -> Option<usize> {
    if len == 0 || q <= 0.0 {
        return None;
    }
    if q >= 1.0 {
        return Some(0);
    }
    let u: f64 = rng.gen();
    let m = (f64::ln_1p(-u) / f64::ln_1p(-q)).floor();
    if m < len as f64 {
        Some(m as usize)
    } else {
        None
    }
}

/// Streaming SPAD frame sampler.
pub struct FrameSampler<'a> {
    model: &'a LikelihoodModel,
    layout: BinLayout,
    pulses_per_frame: u32,
    jitter: JitterSpec,
    /// Per-bin probability of a floor-only bin.
    floor_q: f64,
    /// Constant upper bound on any bin's probability: the floor plus the
    /// peak signal density times the bin width. Drives the window thinning.
    bound_q: f64,
}

impl<'a> FrameSampler<'a> {
    pub fn new(
        model: &'a LikelihoodModel,
        layout: BinLayout,
        pulses_per_frame: u32,
        jitter: JitterSpec,
    ) -> Result<Self> {
        model.validate()?;
        if pulses_per_frame < 1 {
            return Err(SimError::domain("pulses_per_frame", "must be >= 1"));
        }
        let t_total = layout.n_bins as f64 * layout.bin_width_s;
        let rel = ((t_total - model.tcspc_interval_s) / model.tcspc_interval_s).abs();
        if rel > 1e-9 {
            return Err(SimError::domain(
                "layout",
                format!(
                    "n_bins * bin_width = {t_total} s does not match the model interval {} s",
                    model.tcspc_interval_s
                ),
            ));
        }
        let floor_q = (layout.bin_width_s * model.floor_rate_hz()).clamp(0.0, 1.0);
        let peak_density = model.signal_ppp
            / (model.pulse.sigma_s * (2.0 * std::f64::consts::PI).sqrt());
        let bound_q = (floor_q + layout.bin_width_s * peak_density).clamp(0.0, 1.0);
        Ok(Self {
            model,
            layout,
            pulses_per_frame,
            jitter,
            floor_q,
            bound_q,
        })
    }

    /// Bins whose signal contribution is non-negligible for a pulse whose
    /// peak (after jitter and skew) sits at `peak_s`. Empty when the whole
    /// window falls outside the TCSPC interval.
    fn signal_window(&self, peak_s: f64) -> Option<(usize, usize)> {
        let half = SIGNAL_WINDOW_SIGMAS * self.model.pulse.sigma_s;
        let lo_t = peak_s - half;
        let hi_t = peak_s + half;
        if hi_t < 0.0 || lo_t >= self.layout.n_bins as f64 * self.layout.bin_width_s {
            return None;
        }
        let lo = (lo_t / self.layout.bin_width_s).floor().max(0.0) as usize;
        let hi_raw = (hi_t / self.layout.bin_width_s).floor();
        let hi = (hi_raw as usize).min(self.layout.n_bins - 1);
        Some((lo, hi))
    }

    /// Exact arrival probability of one bin at the given peak displacement,
    /// the same quantity `likelihood::bin_probabilities` fills vector-wise.
    fn bin_probability(&self, bin: usize, shift_s: f64) -> f64 {
        let peak = self.model.pulse.peak_time_s + shift_s;
        let inv = 1.0 / (self.model.pulse.sigma_s * std::f64::consts::SQRT_2);
        let w = self.layout.bin_width_s;
        let upper = libm::erf((peak - bin as f64 * w) * inv);
        let lower = libm::erf((peak - (bin + 1) as f64 * w) * inv);
        let raw = self.floor_q + 0.5 * self.model.signal_ppp * (upper - lower);
        raw.clamp(0.0, 1.0)
    }

    /// Walk every detection of one pulse in bin-time order, consuming the
    /// pulse's stream (jitter first, then the trials). `visit` receives each
    /// firing bin and returns false to stop the walk — the streaming sampler
    /// stops at the first photon, the reference sampler never stops. Only
    /// the draws up to the stop point are consumed, so the two agree
    /// draw-for-draw up to the early exit.
    fn walk_pulse(
        &self,
        rng: &mut ChaCha8Rng,
        k_s: f64,
        visit: &mut impl FnMut(usize) -> bool,
    ) {
        let z: f64 = rng.sample(StandardNormal);
        let j = self.jitter.mean_s + self.jitter.std_s * z;
        let shift = j + k_s;
        let peak = self.model.pulse.peak_time_s + shift;
        let b = self.layout.n_bins;

        match self.signal_window(peak) {
            None => {
                Self::floor_walk(rng, self.floor_q, 0, b, visit);
            }
            Some((lo, hi)) => {
                if !Self::floor_walk(rng, self.floor_q, 0, lo, visit) {
                    return;
                }
                if !self.window_walk(rng, shift, lo, hi, visit) {
                    return;
                }
                Self::floor_walk(rng, self.floor_q, hi + 1, b, visit);
            }
        }
    }

    /// Bernoulli(q) trials over bins [start, end) via geometric skips.
    /// Returns false if `visit` stopped the walk.
    fn floor_walk(
        rng: &mut ChaCha8Rng,
        q: f64,
        start: usize,
        end: usize,
        visit: &mut impl FnMut(usize) -> bool,
    ) -> bool {
        let mut base = start;
        while base < end {
            match floor_run_first(rng, q, end - base) {
                Some(m) => {
                    if !visit(base + m) {
                        return false;
                    }
                    base += m + 1;
                }
                None => break,
            }
        }
        true
    }

    /// Bernoulli(p_i) trials over the signal window [lo, hi] by thinning:
    /// candidate bins arrive geometrically at the constant bound, and each
    /// candidate is accepted with p_i / bound, which needs erf only there.
    /// A candidate at bin i fires iff U < bound and W < p_i / bound, i.e.
    /// with probability exactly p_i, independently per bin.
    fn window_walk(
        &self,
        rng: &mut ChaCha8Rng,
        shift_s: f64,
        lo: usize,
        hi: usize,
        visit: &mut impl FnMut(usize) -> bool,
    ) -> bool {
        if self.bound_q <= 0.0 {
            return true;
        }
        let len = hi - lo + 1;
        let mut base = 0usize;
        while base < len {
            match floor_run_first(rng, self.bound_q, len - base) {
                Some(m) => {
                    let bin = lo + base + m;
                    let p = self.bin_probability(bin, shift_s);
                    let w: f64 = rng.gen();
                    if w < p / self.bound_q && !visit(bin) {
                        return false;
                    }
                    base += m + 1;
                }
                None => break,
            }
        }
        true
    }

    /// First-photon bin of one frame, streaming with early exit. `k_s` is
    /// the frame's trigger skew.
    pub fn sample_frame(&self, ctx: &FrameContext, k_s: f64) -> Option<usize> {
        for pulse in 0..self.pulses_per_frame {
            let mut rng = ctx.stream(pulse, channel::PULSE);
            let mut first: Option<usize> = None;
            self.walk_pulse(&mut rng, k_s, &mut |bin| {
                first = Some(bin);
                false
            });
            if first.is_some() {
                return first;
            }
        }
        None
    }

    /// First-photon bin of one frame by materializing the complete
    /// bins-by-pulses trial matrix and scanning it in time order. Test-scale
    /// equivalence oracle for [`FrameSampler::sample_frame`]: it replays the
    /// identical keyed streams, so outputs match frame by frame.
    pub fn sample_frame_reference(
        &self,
        ctx: &FrameContext,
        k_s: f64,
    ) -> Result<Option<usize>> {
        let trials = self.layout.n_bins as u64 * self.pulses_per_frame as u64;
        if trials > REFERENCE_MAX_TRIALS {
            return Err(SimError::domain(
                "reference_sampler",
                format!(
                    "bins x pulses = {trials} exceeds the materialization guard \
                     ({REFERENCE_MAX_TRIALS}); the reference sampler is test-scale only"
                ),
            ));
        }

        let b = self.layout.n_bins;
        let mut matrix = vec![0u8; b * self.pulses_per_frame as usize];
        for pulse in 0..self.pulses_per_frame {
            let mut rng = ctx.stream(pulse, channel::PULSE);
            let row = &mut matrix[pulse as usize * b..(pulse as usize + 1) * b];
            self.walk_pulse(&mut rng, k_s, &mut |bin| {
                row[bin] = 1;
                true
            });
        }

        // First non-zero in pulse order, bins scanned in time order.
        Ok(matrix
            .iter()
            .position(|&v| v != 0)
            .map(|flat| flat % b))
    }

    /// Frame trigger skew for `frame` under `policy`.
    pub fn draw_skew(&self, ctx: &FrameContext, policy: &PixelShiftPolicy) -> f64 {
        match *policy {
            PixelShiftPolicy::Fixed(k) => k,
            PixelShiftPolicy::GaussianPerFrame { sigma_s } => {
                if sigma_s == 0.0 {
                    return 0.0;
                }
                let mut rng = ctx.stream(0, channel::SKEW);
                let z: f64 = rng.sample(StandardNormal);
                sigma_s * z
            }
        }
    }
}

/// Accumulate `n_frames` independent frames into a histogram. The trigger
/// skew is redrawn per frame (inter-frame scale); jitter is redrawn per
/// pulse inside the sampler.
#[allow(clippy::too_many_arguments)]
pub fn build_histogram(
    model: &LikelihoodModel,
    layout: BinLayout,
    n_frames: u32,
    pulses_per_frame: u32,
    jitter: JitterSpec,
    policy: &PixelShiftPolicy,
    seed: u64,
    row: u32,
    col: u32,
    frame_offset: u32,
) -> Result<Histogram> {
    if n_frames < 1 {
        return Err(SimError::domain("n_frames", "must be >= 1"));
    }
    let sampler = FrameSampler::new(model, layout, pulses_per_frame, jitter)?;
    let mut counts = vec![0u32; layout.n_bins];
    let mut empty = 0u32;
    for f in 0..n_frames {
        let ctx = FrameContext {
            seed,
            row,
            col,
            frame: frame_offset + f,
        };
        let k = sampler.draw_skew(&ctx, policy);
        match sampler.sample_frame(&ctx, k) {
            Some(bin) => counts[bin] += 1,
            None => empty += 1,
        }
    }
    Ok(Histogram {
        counts,
        n_frames,
        n_empty_frames: empty,
    })
}

/// Simulate the whole sensor: per-pixel arrival models from the scene's
/// range and reflectivity, per-column trigger-skew profile, frames
/// accumulated into one histogram per pixel. Deterministic for a fixed seed
/// regardless of thread count.
pub fn simulate_histogram_cube(
    scene: &Scene,
    config: &SystemConfig,
    acq: &AcquisitionSpec,
    seed: u64,
) -> Result<HistogramCube> {
    config.validate()?;
    acq.validate()?;
    let layout = BinLayout::from_sensor(&config.sensor);
    let profile = PixelNoiseProfile::from_sensor(&config.sensor);
    let jitter = JitterSpec {
        mean_s: config.laser.jitter_mean_s,
        std_s: config.laser.jitter_std_s,
    };
    let pulses_per_frame = acq.pulses_per_frame_count();
    let digest = config.digest();

    let rows = scene.rows();
    let cols = scene.cols();
    let empty_hist = Histogram {
        counts: vec![0; layout.n_bins],
        n_frames: acq.frames,
        n_empty_frames: acq.frames,
    };

    let pixels: Vec<(Histogram, PixelStatus)> = (0..rows * cols)
        .into_par_iter()
        .map(|idx| {
            let (r, c) = (idx / cols, idx % cols);
            if !scene.is_valid(r, c) {
                return (empty_hist.clone(), PixelStatus::NoReturn);
            }
            let target = TargetPatch::new(scene.range_m(r, c), scene.reflectivity(r, c));
            let model = match config.likelihood_model(&target) {
                Ok(m) => m,
                Err(_) => return (empty_hist.clone(), PixelStatus::ModelError),
            };
            let policy = PixelShiftPolicy::GaussianPerFrame {
                sigma_s: profile.sigma_at(c),
            };
            match build_histogram(
                &model,
                layout,
                acq.frames,
                pulses_per_frame,
                jitter,
                &policy,
                seed,
                r as u32,
                c as u32,
                0,
            ) {
                Ok(h) => (h, PixelStatus::Valid),
                Err(_) => (empty_hist.clone(), PixelStatus::ModelError),
            }
        })
        .collect();

    let mut hists = Vec::with_capacity(pixels.len());
    let mut status = Vec::with_capacity(pixels.len());
    for (h, s) in pixels {
        hists.push(h);
        status.push(s);
    }

    Ok(HistogramCube {
        histograms: Grid::from_vec(rows, cols, hists)?,
        status: Grid::from_vec(rows, cols, status)?,
        n_bins: layout.n_bins,
        bin_width_s: layout.bin_width_s,
        acquisition: *acq,
        seed,
        config_digest: digest,
    })
}
