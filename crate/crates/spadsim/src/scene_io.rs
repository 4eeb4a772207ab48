//! Portable on-disk formats for grids, depth images, histogram cubes, and
//! sweep curves.
//!
//! Two grid encodings are supported: human-auditable CSV (comma-separated
//! columns, newline-separated rows, '#' comment lines, '.' decimal
//! separator, 9 significant digits) and a little-endian binary format with a
//! 64-byte fixed header that round-trips f64 values bit-exactly. Loaders
//! sniff the magic bytes, so any reader accepts either encoding. All headers
//! carry a format version; higher versions are rejected explicitly.
//!
//! Invalid pixels serialize as a caller-chosen sentinel (physical depths are
//! strictly positive, so the default -1.0 cannot collide).

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Result, SimError};
use crate::estimation::{DepthDistribution, DistinguishabilityCurve, SweepResult};
use crate::fisher::AcquisitionSpec;
use crate::scene::{DepthImage, Grid, ImageMode, PixelStatus, Provenance, Scene};
use crate::spad_sampler::{Histogram, HistogramCube};

/// Default sentinel marking invalid pixels in serialized grids.
pub const INVALID_SENTINEL: f64 = -1.0;

const GRID_MAGIC: &[u8; 8] = b"SPDGRID\0";
const CUBE_MAGIC: &[u8; 8] = b"SPDCUBE\0";
const GRID_VERSION: u16 = 1;
const CUBE_VERSION: u16 = 1;
const GRID_HEADER_LEN: usize = 64;
const CUBE_HEADER_LEN: usize = 80;

/// What the values of a grid mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ValueKind {
    DepthMeters = 0,
    Reflectivity = 1,
    Counts = 2,
}

impl ValueKind {
    fn from_code(code: u8, path: &str) -> Result<Self> {
        Ok(match code {
            0 => ValueKind::DepthMeters,
            1 => ValueKind::Reflectivity,
            2 => ValueKind::Counts,
            other => {
                return Err(SimError::Format {
                    path: path.into(),
                    reason: format!("unknown value kind {other}"),
                })
            }
        })
    }

    fn units(self) -> &'static str {
        match self {
            ValueKind::DepthMeters => "m",
            ValueKind::Reflectivity => "dimensionless",
            ValueKind::Counts => "counts",
        }
    }
}

/// Serialization format selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridFormat {
    Csv,
    Binary,
}

// ---- grid writing ----

/// Write a grid of f64 values.
pub fn save_grid(grid: &Grid<f64>, kind: ValueKind, path: &Path, format: GridFormat) -> Result<()> {
    match format {
        GridFormat::Csv => save_grid_csv(grid, kind, path),
        GridFormat::Binary => save_grid_binary(grid, kind, path),
    }
}

fn save_grid_csv(grid: &Grid<f64>, kind: ValueKind, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!(
        "# rows = {}\n# cols = {}\n# kind = {:?}\n# units = {}\n",
        grid.rows(),
        grid.cols(),
        kind,
        kind.units()
    ));
    for r in 0..grid.rows() {
        for c in 0..grid.cols() {
            if c > 0 {
                out.push(',');
            }
            // 9 significant digits.
            out.push_str(&format!("{:.8e}", grid.get(r, c)));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| SimError::io(path.display().to_string(), e))
}

fn save_grid_binary(grid: &Grid<f64>, kind: ValueKind, path: &Path) -> Result<()> {
    let mut header = [0u8; GRID_HEADER_LEN];
    header[0..8].copy_from_slice(GRID_MAGIC);
    header[8..10].copy_from_slice(&GRID_VERSION.to_le_bytes());
    header[10] = kind as u8;
    header[12..20].copy_from_slice(&(grid.rows() as u64).to_le_bytes());
    header[20..28].copy_from_slice(&(grid.cols() as u64).to_le_bytes());
    let units = kind.units().as_bytes();
    header[28..28 + units.len().min(16)].copy_from_slice(&units[..units.len().min(16)]);

    let mut file =
        fs::File::create(path).map_err(|e| SimError::io(path.display().to_string(), e))?;
    file.write_all(&header)
        .map_err(|e| SimError::io(path.display().to_string(), e))?;
    let mut payload = Vec::with_capacity(grid.rows() * grid.cols() * 8);
    for v in grid.as_slice() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    file.write_all(&payload)
        .map_err(|e| SimError::io(path.display().to_string(), e))
}

// ---- grid reading ----

/// Load a grid of f64 values, sniffing CSV vs binary from the content.
pub fn load_grid(path: &Path) -> Result<(Grid<f64>, ValueKind)> {
    let bytes = fs::read(path).map_err(|e| SimError::io(path.display().to_string(), e))?;
    if bytes.starts_with(GRID_MAGIC) {
        load_grid_binary(&bytes, &path.display().to_string())
    } else {
        load_grid_csv(&bytes, &path.display().to_string())
    }
}

fn load_grid_binary(bytes: &[u8], path: &str) -> Result<(Grid<f64>, ValueKind)> {
    if bytes.len() < GRID_HEADER_LEN {
        return Err(SimError::Format {
            path: path.into(),
            reason: format!(
                "truncated header: {} bytes, need {GRID_HEADER_LEN}",
                bytes.len()
            ),
        });
    }
    let version = u16::from_le_bytes(bytes[8..10].try_into().unwrap());
    if version > GRID_VERSION {
        return Err(SimError::Format {
            path: path.into(),
            reason: format!("grid format version {version} is newer than supported {GRID_VERSION}"),
        });
    }
    let kind = ValueKind::from_code(bytes[10], path)?;
    let rows = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[20..28].try_into().unwrap()) as usize;
    let expect = GRID_HEADER_LEN + rows * cols * 8;
    if bytes.len() != expect {
        return Err(SimError::Format {
            path: path.into(),
            reason: format!(
                "payload size mismatch: file {} bytes, {rows}x{cols} grid needs {expect}",
                bytes.len()
            ),
        });
    }
    let mut data = Vec::with_capacity(rows * cols);
    for chunk in bytes[GRID_HEADER_LEN..].chunks_exact(8) {
        data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    Ok((Grid::from_vec(rows, cols, data)?, kind))
}

fn load_grid_csv(bytes: &[u8], path: &str) -> Result<(Grid<f64>, ValueKind)> {
    let text = std::str::from_utf8(bytes).map_err(|_| SimError::Format {
        path: path.into(),
        reason: "not valid UTF-8 text (and not a binary grid)".into(),
    })?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut kind = ValueKind::DepthMeters;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            // Comment headers are informational; the kind tag is honored
            // when present.
            if let Some(k) = comment.split('=').nth(1) {
                match k.trim() {
                    "Reflectivity" => kind = ValueKind::Reflectivity,
                    "Counts" => kind = ValueKind::Counts,
                    "DepthMeters" => kind = ValueKind::DepthMeters,
                    _ => {}
                }
            }
            continue;
        }
        let mut row = Vec::new();
        for cell in line.split(',') {
            let v: f64 = cell.trim().parse().map_err(|_| SimError::Parse {
                path: path.into(),
                line: line_no,
                reason: format!("not a number: '{}'", cell.trim()),
            })?;
            row.push(v);
        }
        if let Some(prev) = rows.first() {
            if prev.len() != row.len() {
                return Err(SimError::Parse {
                    path: path.into(),
                    line: line_no,
                    reason: format!(
                        "ragged row: {} columns, expected {}",
                        row.len(),
                        prev.len()
                    ),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(SimError::Format {
            path: path.into(),
            reason: "no data rows".into(),
        });
    }
    let n_rows = rows.len();
    let n_cols = rows[0].len();
    let data: Vec<f64> = rows.into_iter().flatten().collect();
    Ok((Grid::from_vec(n_rows, n_cols, data)?, kind))
}

// ---- scene ----

/// Load a scene from a depth map and a reflectivity map. Cells whose depth
/// equals `invalid_sentinel` are masked invalid; reflectivities are
/// validated into [0, 1] with the offending cell named on failure.
pub fn load_scene(
    depth_path: &Path,
    reflectivity_path: &Path,
    invalid_sentinel: f64,
) -> Result<Scene> {
    let (depth, _) = load_grid(depth_path)?;
    let (refl, _) = load_grid(reflectivity_path)?;
    if !depth.same_shape(&refl) {
        return Err(SimError::DimensionMismatch {
            context: format!(
                "{} vs {}",
                depth_path.display(),
                reflectivity_path.display()
            ),
            left_rows: depth.rows(),
            left_cols: depth.cols(),
            right_rows: refl.rows(),
            right_cols: refl.cols(),
        });
    }
    let mut invalid = Grid::filled(depth.rows(), depth.cols(), false);
    for (r, c, &d) in depth.enumerate() {
        if d == invalid_sentinel {
            *invalid.get_mut(r, c) = true;
        }
    }
    for (r, c, &g) in refl.enumerate() {
        if !*invalid.get(r, c) && !(0.0..=1.0).contains(&g) {
            return Err(SimError::domain(
                format!("{}[{r}][{c}]", reflectivity_path.display()),
                format!("reflectivity must be in [0, 1], got {g}"),
            ));
        }
    }
    Scene::new(depth, refl, invalid)
}

// ---- depth images ----

/// Write a depth image; invalid pixels become the sentinel.
pub fn save_depth_image(
    image: &DepthImage,
    path: &Path,
    format: GridFormat,
    sentinel: f64,
) -> Result<()> {
    let mut grid = Grid::filled(image.rows(), image.cols(), sentinel);
    for r in 0..image.rows() {
        for c in 0..image.cols() {
            if image.is_valid(r, c) {
                *grid.get_mut(r, c) = image.depth_m(r, c);
            }
        }
    }
    save_grid(&grid, ValueKind::DepthMeters, path, format)
}

/// Read a depth image back; sentinel cells are invalid. Provenance is not
/// stored in grid files, so the caller supplies it.
pub fn load_depth_image(path: &Path, sentinel: f64, provenance: Provenance) -> Result<DepthImage> {
    let (grid, _) = load_grid(path)?;
    let mut status = Grid::filled(grid.rows(), grid.cols(), PixelStatus::Valid);
    for (r, c, &d) in grid.enumerate() {
        if d == sentinel {
            *status.get_mut(r, c) = PixelStatus::NoReturn;
        }
    }
    DepthImage::new(grid, status, provenance)
}

// ---- histogram cubes ----

/// Write a histogram cube, losslessly.
pub fn save_histogram_cube(cube: &HistogramCube, path: &Path) -> Result<()> {
    if cube.acquisition.frames == 0 {
        return Err(SimError::domain(
            "cube.acquisition.frames",
            "a cube of zero frames violates frame conservation and cannot be saved",
        ));
    }
    let rows = cube.rows();
    let cols = cube.cols();
    let mut header = [0u8; CUBE_HEADER_LEN];
    header[0..8].copy_from_slice(CUBE_MAGIC);
    header[8..10].copy_from_slice(&CUBE_VERSION.to_le_bytes());
    header[12..20].copy_from_slice(&(rows as u64).to_le_bytes());
    header[20..28].copy_from_slice(&(cols as u64).to_le_bytes());
    header[28..36].copy_from_slice(&(cube.n_bins as u64).to_le_bytes());
    header[36..40].copy_from_slice(&cube.acquisition.frames.to_le_bytes());
    header[40..48].copy_from_slice(&cube.seed.to_le_bytes());
    header[48..56].copy_from_slice(&cube.config_digest.to_le_bytes());
    header[56..64].copy_from_slice(&cube.acquisition.exposure_s.to_le_bytes());
    header[64..72].copy_from_slice(&cube.acquisition.rep_rate_hz.to_le_bytes());
    header[72..80].copy_from_slice(&cube.bin_width_s.to_le_bytes());

    let mut body: Vec<u8> =
        Vec::with_capacity(rows * cols * (1 + 4 + cube.n_bins * 4));
    for s in cube.status.as_slice() {
        body.push(*s as u8);
    }
    for h in cube.histograms.as_slice() {
        body.extend_from_slice(&h.n_empty_frames.to_le_bytes());
        for c in &h.counts {
            body.extend_from_slice(&c.to_le_bytes());
        }
    }

    let mut file =
        fs::File::create(path).map_err(|e| SimError::io(path.display().to_string(), e))?;
    file.write_all(&header)
        .map_err(|e| SimError::io(path.display().to_string(), e))?;
    file.write_all(&body)
        .map_err(|e| SimError::io(path.display().to_string(), e))
}

/// Read a histogram cube, verifying structure and frame conservation.
pub fn load_histogram_cube(path: &Path) -> Result<HistogramCube> {
    let display = path.display().to_string();
    let bytes = fs::read(path).map_err(|e| SimError::io(display.clone(), e))?;
    if bytes.len() < CUBE_HEADER_LEN || !bytes.starts_with(CUBE_MAGIC) {
        return Err(SimError::Format {
            path: display,
            reason: "not a histogram cube file".into(),
        });
    }
    let version = u16::from_le_bytes(bytes[8..10].try_into().unwrap());
    if version > CUBE_VERSION {
        return Err(SimError::Format {
            path: display,
            reason: format!("cube format version {version} is newer than supported {CUBE_VERSION}"),
        });
    }
    let rows = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[20..28].try_into().unwrap()) as usize;
    let n_bins = u64::from_le_bytes(bytes[28..36].try_into().unwrap()) as usize;
    let n_frames = u32::from_le_bytes(bytes[36..40].try_into().unwrap());
    let seed = u64::from_le_bytes(bytes[40..48].try_into().unwrap());
    let digest = u64::from_le_bytes(bytes[48..56].try_into().unwrap());
    let exposure_s = f64::from_le_bytes(bytes[56..64].try_into().unwrap());
    let rep_rate_hz = f64::from_le_bytes(bytes[64..72].try_into().unwrap());
    let bin_width_s = f64::from_le_bytes(bytes[72..80].try_into().unwrap());

    let n_px = rows * cols;
    let expect = CUBE_HEADER_LEN + n_px * (1 + 4 + n_bins * 4);
    if bytes.len() != expect {
        return Err(SimError::Format {
            path: display,
            reason: format!(
                "truncated or oversized cube: {} bytes, {rows}x{cols}x{n_bins} needs {expect}",
                bytes.len()
            ),
        });
    }

    let mut status = Vec::with_capacity(n_px);
    for &code in &bytes[CUBE_HEADER_LEN..CUBE_HEADER_LEN + n_px] {
        status.push(PixelStatus::from_code(code)?);
    }
    let mut hists = Vec::with_capacity(n_px);
    let mut off = CUBE_HEADER_LEN + n_px;
    for px in 0..n_px {
        let empty = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        off += 4;
        let mut counts = Vec::with_capacity(n_bins);
        for chunk in bytes[off..off + n_bins * 4].chunks_exact(4) {
            counts.push(u32::from_le_bytes(chunk.try_into().unwrap()));
        }
        off += n_bins * 4;
        let h = Histogram {
            counts,
            n_frames,
            n_empty_frames: empty,
        };
        if !h.frames_conserved() {
            return Err(SimError::Format {
                path: display,
                reason: format!(
                    "pixel {px}: counts + empty frames != frames ({} + {} != {})",
                    h.total_counts(),
                    h.n_empty_frames,
                    h.n_frames
                ),
            });
        }
        hists.push(h);
    }

    Ok(HistogramCube {
        histograms: Grid::from_vec(rows, cols, hists)?,
        status: Grid::from_vec(rows, cols, status)?,
        n_bins,
        bin_width_s,
        acquisition: AcquisitionSpec {
            frames: n_frames,
            exposure_s,
            rep_rate_hz,
        },
        seed,
        config_digest: digest,
    })
}

// ---- curves and distributions ----

/// Write one distinguishability curve as CSV.
pub fn save_curve_csv(curve: &DistinguishabilityCurve, path: &Path) -> Result<()> {
    let mut out = String::from(
        "# distinguishability curve\n\
         n_frames,distinguishability_s,distinguishability_m,n_valid,std_err_s,well_defined\n",
    );
    for p in &curve.points {
        match p.distinguishability_s {
            Some(d) => {
                let dm = crate::constants::time_to_range(d);
                let se = p.std_err_s.unwrap_or(0.0);
                out.push_str(&format!(
                    "{},{:.8e},{:.8e},{},{:.8e},1\n",
                    p.n_frames, d, dm, p.n_valid, se
                ));
            }
            None => out.push_str(&format!("{},,,{},,0\n", p.n_frames, p.n_valid)),
        }
    }
    fs::write(path, out).map_err(|e| SimError::io(path.display().to_string(), e))
}

/// Write both curves of a sweep.
pub fn save_sweep_csv(sweep: &SweepResult, hist_path: &Path, crb_path: &Path) -> Result<()> {
    save_curve_csv(&sweep.histogram, hist_path)?;
    save_curve_csv(&sweep.crb, crb_path)
}

/// Write a depth distribution as CSV.
pub fn save_distribution_csv(dist: &DepthDistribution, path: &Path) -> Result<()> {
    let mut out = String::from("# pixels per depth bar\nbar_center_m,count\n");
    for (i, &c) in dist.counts.iter().enumerate() {
        out.push_str(&format!("{:.8e},{}\n", dist.bar_center_m(i), c));
    }
    fs::write(path, out).map_err(|e| SimError::io(path.display().to_string(), e))
}

/// Short provenance line written next to generated outputs.
pub fn provenance_line(p: &Provenance) -> String {
    let mode = match p.mode {
        ImageMode::Crb => "crb",
        ImageMode::Histogram => "histogram",
    };
    format!(
        "mode = {mode}\nseed = {}\nconfig_digest = {:016x}\n",
        p.seed, p.config_digest
    )
}
