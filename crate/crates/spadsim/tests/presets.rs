//! The shipped preset files must stay in lockstep with the built-in presets
//! and pass the full validation sweep.

use std::path::Path;

use spadsim::config::{validate_config, Severity, SystemConfig};
use spadsim::radiometry::TargetPatch;

fn preset_path(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../presets")
        .join(name)
}

#[test]
fn table1_file_matches_builtin() {
    let file = SystemConfig::load(&preset_path("table1_resolution_target.ini")).unwrap();
    assert_eq!(file, SystemConfig::table1_resolution_target());
    assert_eq!(file.digest(), SystemConfig::table1_resolution_target().digest());
}

#[test]
fn table2_file_matches_builtin() {
    let file = SystemConfig::load(&preset_path("table2_landrover.ini")).unwrap();
    assert_eq!(file, SystemConfig::table2_landrover());
}

#[test]
fn presets_pass_validation() {
    for (name, target) in [
        ("table1_resolution_target.ini", TargetPatch::new(14.73, 0.09)),
        ("table2_landrover.ini", TargetPatch::new(1400.0, 0.065)),
    ] {
        let cfg = SystemConfig::load(&preset_path(name)).unwrap();
        let findings = validate_config(&cfg, None);
        assert!(findings.is_empty(), "{name}: {findings:?}");
        // With the documented target point, no hard errors either. The
        // long-range preset's pulse peak lies beyond the TCSPC window, so a
        // warning there is expected; errors are not.
        let findings = validate_config(&cfg, Some(&target));
        assert!(
            findings.iter().all(|f| f.severity != Severity::Error),
            "{name}: {findings:?}"
        );
    }
}

#[test]
fn preset_by_name_matches_files() {
    assert_eq!(
        SystemConfig::preset("table1_resolution_target").unwrap(),
        SystemConfig::table1_resolution_target()
    );
    assert_eq!(
        SystemConfig::preset("table2_landrover").unwrap(),
        SystemConfig::table2_landrover()
    );
    assert!(SystemConfig::preset("missing").is_err());
}
