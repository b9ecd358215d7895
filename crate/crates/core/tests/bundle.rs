use std::path::Path;

use oss_survival::config::RunConfig;
use oss_survival::synth::{self, BundleSpec};

#[test]
fn bundled_dataset_regenerates_byte_for_byte() {
    let shipped = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic");
    let dir = tempfile::tempdir().unwrap();
    let bundle = synth::synthetic_bundle(&BundleSpec::default(), &RunConfig::default().study_window());
    synth::write_bundle(&bundle, dir.path()).unwrap();
    for name in ["revisions.csv", "releases.csv", "origins.csv"] {
        let a = std::fs::read(shipped.join(name)).unwrap();
        let b = std::fs::read(dir.path().join(name)).unwrap();
        assert!(a == b, "{name} differs from a fresh generation");
    }
    let cfg = std::fs::read_to_string(shipped.join("config.toml")).unwrap();
    assert_eq!(cfg, synth::bundle_config_toml());
}
