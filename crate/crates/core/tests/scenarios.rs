use std::path::{Path, PathBuf};

use nearfield::{Error, Scenario};

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn load(name: &str) -> Scenario {
    Scenario::load(&scenarios_dir().join(name)).unwrap()
}

#[test]
fn shipped_scenarios_round_trip() {
    let mut seen = 0;
    for entry in std::fs::read_dir(scenarios_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("toml") {
            continue;
        }
        let s = Scenario::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let again = Scenario::from_str(&s.to_toml().unwrap(), path.parent().unwrap()).unwrap();
        assert_eq!(again.file, s.file, "{}", path.display());
        assert_eq!(again.scene, s.scene, "{}", path.display());
        seen += 1;
    }
    assert!(seen >= 4);
}

#[test]
fn two_target_scene_dimensions() {
    for name in ["two_targets.toml", "two_targets_reduced.toml"] {
        let s = load(name);
        assert_eq!(s.scene.tx.len(), 36);
        assert_eq!(s.scene.rx.len(), 36);
        assert_eq!(s.scene.targets.len(), 2);
        assert_eq!(s.snapshots().unwrap(), 52);
        assert_eq!(s.aco_config().unwrap().epsilon, 1e-5);
        let x = s.waveform().unwrap();
        let r = x.sample_covariance();
        let eye = nearfield::CMatrix::identity(36, 36);
        assert!((r - eye).norm() < 1e-10);
    }
}

#[test]
fn reduced_preset_is_coarser() {
    let full = load("two_targets.toml").aco_config().unwrap().grid;
    let reduced = load("two_targets_reduced.toml").aco_config().unwrap().grid;
    assert!(reduced.initial_pitch()[0] > full.initial_pitch()[0]);
    assert_eq!(load("two_targets_reduced.toml").sweep_config().unwrap().trials, 25);
    assert_eq!(load("two_targets.toml").sweep_config().unwrap().trials, 100);
}

#[test]
fn large_array_size() {
    let s = load("colocated_16x768.toml");
    assert_eq!(s.scene.rx.len(), 16 * 768);
    let (_, l) = s.tx_covariance().unwrap();
    assert!(l > 0);
}

#[test]
fn missing_section_is_a_config_error() {
    let text = std::fs::read_to_string(scenarios_dir().join("colocated_16x16.toml")).unwrap();
    let s = Scenario::from_str(&text, &scenarios_dir()).unwrap();
    match s.sweep_config() {
        Err(Error::Config { key, .. }) => assert_eq!(key, "sweep"),
        other => panic!("{other:?}"),
    }
}
