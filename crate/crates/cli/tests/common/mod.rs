#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use ligbind::encoder::ModelConfig;
use ligbind::physics::PhysicsConfig;
use ligbind::training::{save_checkpoint, CheckpointMeta, ModelCheckpoint, SIGMA_STAR};
use ligbind::Model;

pub fn ligbind(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ligbind"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub fn small_config() -> ModelConfig {
    ModelConfig {
        hidden_dim: 16,
        num_layers: 2,
        num_heads: 2,
        ..Default::default()
    }
}

/// Flags selecting [`small_config`].
pub const SMALL_FLAGS: [&str; 6] = [
    "--set",
    "model.hidden_dim=16",
    "--set",
    "model.num_layers=2",
    "--set",
    "model.num_heads=2",
];

/// A checkpoint whose predictions reproduce the synthetic oracle: the
/// offset bound squeezes `H` to nothing and σ is set to σ*.
pub fn oracle_checkpoint(path: &Path) {
    let physics = PhysicsConfig {
        offset_bound: Some(1e-300),
        sigma_init: SIGMA_STAR,
        ..Default::default()
    };
    let model = Model::new(small_config(), physics, 0).unwrap();
    save_checkpoint(&ModelCheckpoint::from_model(&model, CheckpointMeta::default()), path).unwrap();
}

/// Writes a synthetic dataset directory through the CLI.
pub fn synth(dir: &Path, seed: u64, n: usize, extra: &[&str]) {
    let (seed, n) = (seed.to_string(), n.to_string());
    let mut args = vec!["synth", "--seed", &seed, "--n", &n, "--out", p(dir)];
    args.extend_from_slice(extra);
    let o = ligbind(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

/// Parses a `metric,value` CSV into its value for `key`.
pub fn metric(csv: &str, key: &str) -> f64 {
    csv.lines()
        .find_map(|l| l.strip_prefix(&format!("{key},")))
        .unwrap_or_else(|| panic!("no {key} in {csv}"))
        .parse()
        .unwrap()
}
