#![allow(dead_code)]

use std::path::PathBuf;

use relayflow::config::load_config;
use relayflow::RelaySystem;

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

pub fn rotor() -> RelaySystem {
    load_config(&config_path("rotor.json")).unwrap().system
}

pub fn system_b() -> RelaySystem {
    load_config(&config_path("system_b.json")).unwrap().system
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}
