use std::path::{Path, PathBuf};

use turbine_core::config::RunConfig;

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn parse(name: &str) -> RunConfig {
    let text = std::fs::read_to_string(shipped(name)).unwrap();
    RunConfig::from_toml(&text, &[]).unwrap()
}

#[test]
fn surrogate_config_spells_out_the_defaults() {
    let cfg = parse("surrogate.toml");
    assert_eq!(cfg, RunConfig::default());
    assert_eq!(cfg.hash(), RunConfig::default().hash());
}

#[test]
fn quick_config_parses() {
    let cfg = parse("quick.toml");
    assert_eq!(cfg.data.synthetic.rows, 3000);
    assert_eq!(cfg.nn.train_config(turbine_core::neuralnet::ArchKind::Feedforward).max_epochs, 40);
    assert_ne!(cfg.hash(), RunConfig::default().hash());
}
