//! Bundled parameter sets.

use crate::config::{parse_config, ConfigError, RunConfig};

pub const NAMES: [&str; 3] = ["lagd", "gdlu", "gd2"];

pub fn text(name: &str) -> Result<&'static str, ConfigError> {
    match name {
        "lagd" => Ok(include_str!("../presets/lagd.toml")),
        "gdlu" => Ok(include_str!("../presets/gdlu.toml")),
        "gd2" => Ok(include_str!("../presets/gd2.toml")),
        other => Err(ConfigError::UnknownPreset(other.to_string())),
    }
}

pub fn load(name: &str) -> Result<RunConfig, ConfigError> {
    parse_config(text(name)?)
}
