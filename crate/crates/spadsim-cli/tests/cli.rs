//! End-to-end tests of the command-line interface: flag handling, exit
//! codes, report contents, and the byte-level reproducibility contract.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn spadsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spadsim"))
        .args(args)
        .output()
        .expect("binary should run")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_toy_config(path: &Path, frames: u32) {
    // Small sensor, same 204.8 ns window as the bench preset so a 14.73 m
    // target sits mid-window.
    let text = format!(
        "[laser]\n\
         pulse_energy_j = 1e-9\nrep_rate_hz = 2.25e6\nwavelength_m = 671e-9\n\
         pulse_fwhm_s = 600e-12\njitter_mean_s = 0.0\njitter_std_s = 200e-12\n\
         [atmosphere]\nattenuation_length_m = 6200.0\nsolar_irradiance_w_m2 = 0.0\n\
         [optics]\nf_number = 2.0\ndivergence_rad = 0.02\n\
         [sensor]\npixel_width_m = 9.2e-6\npixel_height_m = 9.2e-6\n\
         quantum_efficiency = 0.26\ndark_rate_hz = 126.0\nn_bins = 64\n\
         bin_width_s = 3.2e-9\nrows = 4\ncols = 4\nsigma_q_start_s = 41e-12\n\
         sigma_q_end_s = 166e-12\n\
         [acquisition]\nframes = {frames}\nexposure_s = 1e-3\n\
         [run]\nseed = 77\n"
    );
    fs::write(path, text).unwrap();
}

fn write_toy_scene(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let depth = dir.join("depth.csv");
    let refl = dir.join("refl.csv");
    let mut d = String::new();
    for r in 0..4 {
        let row: Vec<String> = (0..4)
            .map(|c| format!("{}", 14.73 + 0.02 * ((r * 4 + c) % 3) as f64))
            .collect();
        d.push_str(&row.join(","));
        d.push('\n');
    }
    fs::write(&depth, d).unwrap();
    fs::write(&refl, "0.09,0.09,0.09,0.09\n".repeat(4)).unwrap();
    (depth, refl)
}

#[test]
fn fisher_report_on_preset() {
    let out = spadsim(&[
        "fisher",
        "--preset",
        "table1_resolution_target",
        "--range",
        "14.73",
        "--reflectivity",
        "0.09",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("p_pp = 7.629438e-4"), "{text}");
    assert!(text.contains("sbnr = inf"), "{text}");
    assert!(text.contains("fisher_per_pulse_s2 = 1.48"), "{text}");
    assert!(text.contains("min_distinguishability_m"), "{text}");
}

#[test]
fn fisher_f_number_override_changes_link() {
    let base = spadsim(&[
        "fisher",
        "--preset",
        "table1_resolution_target",
        "--range",
        "14.73",
        "--reflectivity",
        "0.09",
    ]);
    let f4 = spadsim(&[
        "fisher",
        "--preset",
        "table1_resolution_target",
        "--range",
        "14.73",
        "--reflectivity",
        "0.09",
        "--f-number",
        "4",
    ]);
    assert!(f4.status.success());
    assert_ne!(stdout(&base), stdout(&f4));
    assert!(stdout(&f4).contains("p_pp = 1.907359e-4"), "{}", stdout(&f4));
}

#[test]
fn fisher_zero_reflectivity_reports_not_estimable() {
    let out = spadsim(&[
        "fisher",
        "--preset",
        "table1_resolution_target",
        "--range",
        "14.73",
        "--reflectivity",
        "0",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("not_estimable"), "{}", stdout(&out));
}

#[test]
fn missing_config_field_exits_2_with_path() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("broken.ini");
    write_toy_config(&cfg, 10);
    let text = fs::read_to_string(&cfg)
        .unwrap()
        .replace("wavelength_m = 671e-9\n", "");
    fs::write(&cfg, text).unwrap();
    let out = spadsim(&[
        "fisher",
        "--config",
        cfg.to_str().unwrap(),
        "--range",
        "14.73",
        "--reflectivity",
        "0.09",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("laser.wavelength_m"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn validate_preset_ok_and_saturated_config_rejected() {
    let out = spadsim(&[
        "validate",
        "--preset",
        "table1_resolution_target",
        "--range",
        "14.73",
        "--reflectivity",
        "0.09",
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("ok"));

    // A millijoule pulse at 15 m saturates the single-photon limit.
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("hot.ini");
    write_toy_config(&cfg, 10);
    let text = fs::read_to_string(&cfg)
        .unwrap()
        .replace("pulse_energy_j = 1e-9", "pulse_energy_j = 1e-3");
    fs::write(&cfg, text).unwrap();
    let out = spadsim(&[
        "validate",
        "--config",
        cfg.to_str().unwrap(),
        "--range",
        "14.73",
        "--reflectivity",
        "0.09",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stdout(&out).contains("alpha"), "{}", stdout(&out));
}

#[test]
fn validate_warns_near_window_edge_but_passes() {
    // 30.67 m puts the round-trip time 0.8 sigma' short of the window end.
    let out = spadsim(&[
        "validate",
        "--preset",
        "table1_resolution_target",
        "--range",
        "30.66",
        "--reflectivity",
        "0.09",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("warning") && text.contains("edge"), "{text}");
}

#[test]
fn sim_crb_same_seed_identical_files() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("toy.ini");
    write_toy_config(&cfg, 100);
    let (depth, refl) = write_toy_scene(dir.path());
    let run = |out_dir: &Path| {
        let out = spadsim(&[
            "sim",
            "--config",
            cfg.to_str().unwrap(),
            "--depth",
            depth.to_str().unwrap(),
            "--reflectivity-map",
            refl.to_str().unwrap(),
            "--mode",
            "crb",
            "--images",
            "3",
            "--format",
            "binary",
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    };
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    run(&out_a);
    run(&out_b);
    for name in ["depth_crb_00000.bin", "depth_crb_00002.bin", "provenance.txt"] {
        let a = fs::read(out_a.join(name)).unwrap();
        let b = fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    // Different images within one run do differ.
    let first = fs::read(out_a.join("depth_crb_00000.bin")).unwrap();
    let second = fs::read(out_a.join("depth_crb_00001.bin")).unwrap();
    assert_ne!(first, second);
}

#[test]
fn sim_histogram_toy_scene_conserves_frames() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("toy.ini");
    write_toy_config(&cfg, 25);
    let (depth, refl) = write_toy_scene(dir.path());
    let out_dir = dir.path().join("out");
    let out = spadsim(&[
        "sim",
        "--config",
        cfg.to_str().unwrap(),
        "--depth",
        depth.to_str().unwrap(),
        "--reflectivity-map",
        refl.to_str().unwrap(),
        "--mode",
        "histogram",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("frames conserved: true"), "{}", stdout(&out));

    let cube = spadsim::scene_io::load_histogram_cube(&out_dir.join("histograms.cube")).unwrap();
    assert_eq!(cube.rows(), 4);
    assert_eq!(cube.cols(), 4);
    for h in cube.histograms.as_slice() {
        assert!(h.frames_conserved());
        assert_eq!(h.n_frames, 25);
    }
    assert!(out_dir.join("depth_histogram.csv").exists());
}

#[test]
fn sweep_writes_both_curves() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("toy.ini");
    write_toy_config(&cfg, 20);
    let out_dir = dir.path().join("sweep");
    let out = spadsim(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--range",
        "14.73",
        "--reflectivity",
        "0.09",
        "--frames-max",
        "20",
        "--increments",
        "2",
        "--repeats",
        "5",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let hist = fs::read_to_string(out_dir.join("distinguishability_histogram.csv")).unwrap();
    let crb = fs::read_to_string(out_dir.join("distinguishability_crb.csv")).unwrap();
    assert!(hist.lines().count() >= 4, "{hist}");
    assert!(crb.contains("n_frames"), "{crb}");
}

#[test]
fn unknown_preset_exits_2() {
    let out = spadsim(&[
        "fisher",
        "--preset",
        "nope",
        "--range",
        "1",
        "--reflectivity",
        "0.5",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("unknown preset"));
}

#[test]
fn missing_scene_file_exits_3() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("toy.ini");
    write_toy_config(&cfg, 10);
    let out = spadsim(&[
        "sim",
        "--config",
        cfg.to_str().unwrap(),
        "--depth",
        dir.path().join("missing.csv").to_str().unwrap(),
        "--reflectivity-map",
        dir.path().join("missing2.csv").to_str().unwrap(),
        "--mode",
        "crb",
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn threads_flag_does_not_change_output() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("toy.ini");
    write_toy_config(&cfg, 30);
    let (depth, refl) = write_toy_scene(dir.path());
    let run = |threads: &str, out_dir: &Path| {
        let out = spadsim(&[
            "sim",
            "--config",
            cfg.to_str().unwrap(),
            "--depth",
            depth.to_str().unwrap(),
            "--reflectivity-map",
            refl.to_str().unwrap(),
            "--mode",
            "histogram",
            "--out",
            out_dir.to_str().unwrap(),
            "--threads",
            threads,
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    };
    let one = dir.path().join("t1");
    let four = dir.path().join("t4");
    run("1", &one);
    run("4", &four);
    assert_eq!(
        fs::read(one.join("histograms.cube")).unwrap(),
        fs::read(four.join("histograms.cube")).unwrap()
    );
    assert_eq!(
        fs::read(one.join("depth_histogram.csv")).unwrap(),
        fs::read(four.join("depth_histogram.csv")).unwrap()
    );
}
