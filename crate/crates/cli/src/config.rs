//! Strict TOML run configuration.
//!
//! Every physical quantity carries its unit in the key (`D_K`, `B_T`,
//! `nu_GHz`, …). Unknown keys are errors; a key that matches the stem of a
//! known key (`D` for `D_K`) is reported as a missing unit suffix.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use toml::{Table, Value};

use qudit_core::control::default_drive_direction;
use qudit_core::ensemble::EnsembleSpec;
use qudit_core::epr::SpectrometerSpec;
use qudit_core::pulse::{Nucleus, NutationOptions, Window};
use qudit_core::spin::{DimerParams, FieldSpec, SingleIonParams, SpinSystem};
use qudit_core::universality::UniversalityOptions;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("missing unit suffix on `{path}` (did you mean `{expected}`?)")]
    MissingUnitSuffix { path: String, expected: String },
    #[error("invalid value for `{path}`: {reason}")]
    Invalid { path: String, reason: String },
    #[error("unknown preset `{0}` (available: lagd, gdlu, gd2)")]
    UnknownPreset(String),
    #[error("bad override `{0}`: expected key=value")]
    BadOverride(String),
    #[error("override key `{key}` is ambiguous; use one of: {candidates}")]
    AmbiguousOverride { key: String, candidates: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    SingleIon,
    Dimer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IonConfig {
    #[serde(rename = "D_K")]
    pub d_k: f64,
    #[serde(rename = "E_K")]
    pub e_k: f64,
    pub g: f64,
    #[serde(rename = "S", default = "default_spin")]
    pub s: f64,
}

fn default_spin() -> f64 {
    SingleIonParams::GD_SPIN
}

impl IonConfig {
    fn params(&self) -> SingleIonParams {
        SingleIonParams::new(self.d_k, self.e_k, self.g).with_spin(self.s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub kind: SystemKind,
    #[serde(rename = "J_K", default, skip_serializing_if = "Option::is_none")]
    pub j_k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axes_rotation_deg: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ion: Option<IonConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub site1: Option<IonConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub site2: Option<IonConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldConfig {
    #[serde(rename = "B_T")]
    pub b_t: f64,
    pub direction: [f64; 3],
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self { b_t: 0.5, direction: [1.0, 1.0, 1.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrometerConfig {
    #[serde(rename = "nu_GHz")]
    pub nu_ghz: f64,
    #[serde(rename = "B_min_T")]
    pub b_min_t: f64,
    #[serde(rename = "B_max_T")]
    pub b_max_t: f64,
    #[serde(rename = "step_mT")]
    pub step_mt: f64,
    #[serde(rename = "linewidth_mT")]
    pub linewidth_mt: f64,
    #[serde(rename = "T_K")]
    pub t_k: f64,
    pub derivative: bool,
}

impl Default for SpectrometerConfig {
    fn default() -> Self {
        Self { nu_ghz: 9.886, b_min_t: 0.0, b_max_t: 1.0, step_mt: 0.5, linewidth_mt: 5.0, t_k: 5.0, derivative: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThermalConfig {
    #[serde(rename = "T_min_K")]
    pub t_min_k: f64,
    #[serde(rename = "T_max_K")]
    pub t_max_k: f64,
    pub n_points: usize,
    #[serde(rename = "probe_B_T")]
    pub probe_b_t: f64,
}

impl Default for ThermalConfig {
    fn default() -> Self {
        Self { t_min_k: 0.1, t_max_k: 300.0, n_points: 200, probe_b_t: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub n_orientations: usize,
    pub d_strain_frac: f64,
    pub e_strain_frac: f64,
    #[serde(rename = "J_strain_K")]
    pub j_strain_k: f64,
    pub n_strain_samples: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { n_orientations: 230, d_strain_frac: 0.0, e_strain_frac: 0.0, j_strain_k: 0.0, n_strain_samples: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UniversalityConfig {
    #[serde(rename = "threshold_MHz_per_mT")]
    pub threshold_mhz_per_mt: f64,
    #[serde(rename = "selectivity_GHz")]
    pub selectivity_ghz: f64,
    pub drive_direction: [f64; 3],
}

impl Default for UniversalityConfig {
    fn default() -> Self {
        let o = UniversalityOptions::default();
        Self { threshold_mhz_per_mt: o.threshold, selectivity_ghz: o.selectivity_ghz, drive_direction: default_drive_direction() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NutationConfig {
    pub window: String,
    pub zero_pad_factor: usize,
    pub noise_multiple: f64,
    pub min_relative_height: f64,
    pub nitrogen: String,
    #[serde(rename = "rabi_band_MHz")]
    pub rabi_band_mhz: [f64; 2],
}

impl Default for NutationConfig {
    fn default() -> Self {
        let o = NutationOptions::default();
        Self {
            window: "hann".into(),
            zero_pad_factor: o.zero_pad_factor,
            noise_multiple: o.noise_multiple,
            min_relative_height: o.min_relative_height,
            nitrogen: o.nitrogen.to_string(),
            rabi_band_mhz: [o.rabi_band.0, o.rabi_band.1],
        }
    }
}

fn default_out_dir() -> String {
    ".".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    pub system: SystemConfig,
    #[serde(default)]
    pub field: FieldConfig,
    #[serde(default)]
    pub spectrometer: SpectrometerConfig,
    #[serde(default)]
    pub thermal: ThermalConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub universality: UniversalityConfig,
    #[serde(default)]
    pub nutation: NutationConfig,
}

const ION_KEYS: &[&str] = &["D_K", "E_K", "g", "S"];

/// Allowed keys per table path. Kept in step with the structs above; a unit
/// test checks that every serialized key is listed.
const SCHEMA: &[(&str, &[&str])] = &[
    ("", &["preset", "seed", "out_dir", "system", "field", "spectrometer", "thermal", "ensemble", "universality", "nutation"]),
    ("system", &["kind", "J_K", "axes_rotation_deg", "ion", "site1", "site2"]),
    ("system.ion", ION_KEYS),
    ("system.site1", ION_KEYS),
    ("system.site2", ION_KEYS),
    ("field", &["B_T", "direction"]),
    ("spectrometer", &["nu_GHz", "B_min_T", "B_max_T", "step_mT", "linewidth_mT", "T_K", "derivative"]),
    ("thermal", &["T_min_K", "T_max_K", "n_points", "probe_B_T"]),
    ("ensemble", &["n_orientations", "d_strain_frac", "e_strain_frac", "J_strain_K", "n_strain_samples"]),
    ("universality", &["threshold_MHz_per_mT", "selectivity_GHz", "drive_direction"]),
    ("nutation", &["window", "zero_pad_factor", "noise_multiple", "min_relative_height", "nitrogen", "rabi_band_MHz"]),
];

fn schema_keys(path: &str) -> Option<&'static [&'static str]> {
    SCHEMA.iter().find(|(p, _)| *p == path).map(|(_, k)| *k)
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn check_keys(table: &Table, path: &str) -> Result<(), ConfigError> {
    let allowed = schema_keys(path).unwrap_or(&[]);
    for (key, value) in table {
        let full = join(path, key);
        if !allowed.contains(&key.as_str()) {
            if let Some(expected) = allowed.iter().find(|a| a.starts_with(&format!("{key}_"))) {
                return Err(ConfigError::MissingUnitSuffix { path: full, expected: join(path, expected) });
            }
            return Err(ConfigError::UnknownKey(full));
        }
        if let Value::Table(sub) = value {
            if schema_keys(&full).is_some() {
                check_keys(sub, &full)?;
            }
        }
    }
    Ok(())
}

fn invalid(path: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { path: path.to_string(), reason: reason.into() }
}

fn positive(path: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(path, format!("must be positive and finite, got {v}")))
    }
}

fn non_negative(path: &str, v: f64) -> Result<(), ConfigError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(path, format!("must be non-negative and finite, got {v}")))
    }
}

fn unit_vector(path: &str, v: [f64; 3]) -> Result<(), ConfigError> {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if n > 0.0 && n.is_finite() {
        Ok(())
    } else {
        Err(invalid(path, "must be a non-zero finite vector"))
    }
}

fn check_ion(path: &str, ion: &IonConfig) -> Result<(), ConfigError> {
    for (k, v) in [("D_K", ion.d_k), ("E_K", ion.e_k)] {
        if !v.is_finite() {
            return Err(invalid(&join(path, k), "must be finite"));
        }
    }
    positive(&join(path, "g"), ion.g)?;
    ion.params().validate().map_err(|e| invalid(&join(path, "S"), e.to_string()))
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.seed > i64::MAX as u64 {
            return Err(invalid("seed", "must be below 2^63"));
        }
        let s = &self.system;
        match s.kind {
            SystemKind::SingleIon => {
                let ion = s.ion.as_ref().ok_or_else(|| invalid("system.ion", "required for kind = \"single_ion\""))?;
                check_ion("system.ion", ion)?;
                for (name, present) in [("system.site1", s.site1.is_some()), ("system.site2", s.site2.is_some()), ("system.J_K", s.j_k.is_some())] {
                    if present {
                        return Err(invalid(name, "only valid for kind = \"dimer\""));
                    }
                }
            }
            SystemKind::Dimer => {
                let s1 = s.site1.as_ref().ok_or_else(|| invalid("system.site1", "required for kind = \"dimer\""))?;
                let s2 = s.site2.as_ref().ok_or_else(|| invalid("system.site2", "required for kind = \"dimer\""))?;
                check_ion("system.site1", s1)?;
                check_ion("system.site2", s2)?;
                let j = s.j_k.ok_or_else(|| invalid("system.J_K", "required for kind = \"dimer\""))?;
                if !j.is_finite() {
                    return Err(invalid("system.J_K", "must be finite"));
                }
                if s.ion.is_some() {
                    return Err(invalid("system.ion", "only valid for kind = \"single_ion\""));
                }
            }
        }
        if let Some(a) = s.axes_rotation_deg {
            if a.iter().any(|x| !x.is_finite()) {
                return Err(invalid("system.axes_rotation_deg", "must be finite"));
            }
        }
        non_negative("field.B_T", self.field.b_t)?;
        unit_vector("field.direction", self.field.direction)?;

        let sp = &self.spectrometer;
        positive("spectrometer.nu_GHz", sp.nu_ghz)?;
        non_negative("spectrometer.B_min_T", sp.b_min_t)?;
        if !(sp.b_max_t > sp.b_min_t && sp.b_max_t.is_finite()) {
            return Err(invalid("spectrometer.B_max_T", "must exceed B_min_T"));
        }
        positive("spectrometer.step_mT", sp.step_mt)?;
        positive("spectrometer.linewidth_mT", sp.linewidth_mt)?;
        positive("spectrometer.T_K", sp.t_k)?;

        let th = &self.thermal;
        positive("thermal.T_min_K", th.t_min_k)?;
        if !(th.t_max_k > th.t_min_k && th.t_max_k.is_finite()) {
            return Err(invalid("thermal.T_max_K", "must exceed T_min_K"));
        }
        if th.n_points < 2 {
            return Err(invalid("thermal.n_points", "must be at least 2"));
        }
        positive("thermal.probe_B_T", th.probe_b_t)?;

        let en = &self.ensemble;
        if en.n_orientations == 0 {
            return Err(invalid("ensemble.n_orientations", "must be at least 1"));
        }
        non_negative("ensemble.d_strain_frac", en.d_strain_frac)?;
        non_negative("ensemble.e_strain_frac", en.e_strain_frac)?;
        non_negative("ensemble.J_strain_K", en.j_strain_k)?;
        if en.n_strain_samples == 0 {
            return Err(invalid("ensemble.n_strain_samples", "must be at least 1"));
        }

        let un = &self.universality;
        non_negative("universality.threshold_MHz_per_mT", un.threshold_mhz_per_mt)?;
        non_negative("universality.selectivity_GHz", un.selectivity_ghz)?;
        unit_vector("universality.drive_direction", un.drive_direction)?;

        let nu = &self.nutation;
        nu.window.parse::<Window>().map_err(|e| invalid("nutation.window", e.to_string()))?;
        nu.nitrogen.parse::<Nucleus>().map_err(|e| invalid("nutation.nitrogen", e.to_string()))?;
        if nu.zero_pad_factor < 1 {
            return Err(invalid("nutation.zero_pad_factor", "must be at least 1"));
        }
        non_negative("nutation.noise_multiple", nu.noise_multiple)?;
        non_negative("nutation.min_relative_height", nu.min_relative_height)?;
        if !(nu.rabi_band_mhz[0] <= nu.rabi_band_mhz[1]) {
            return Err(invalid("nutation.rabi_band_MHz", "lower edge must not exceed upper edge"));
        }
        Ok(())
    }

    pub fn spin_system(&self) -> SpinSystem {
        let s = &self.system;
        match s.kind {
            SystemKind::SingleIon => SpinSystem::Single(s.ion.as_ref().expect("validated").params()),
            SystemKind::Dimer => {
                let mut p = DimerParams::collinear(
                    s.site1.as_ref().expect("validated").params(),
                    s.site2.as_ref().expect("validated").params(),
                    s.j_k.expect("validated"),
                );
                if let Some(a) = s.axes_rotation_deg {
                    p.axes_rotation = a.map(f64::to_radians);
                }
                SpinSystem::Dimer(p)
            }
        }
    }

    pub fn field(&self) -> FieldSpec {
        FieldSpec::new(self.field.b_t, self.field.direction).expect("validated")
    }

    pub fn ensemble(&self) -> EnsembleSpec {
        let e = &self.ensemble;
        EnsembleSpec {
            n_orientations: e.n_orientations,
            d_strain: e.d_strain_frac,
            e_strain: e.e_strain_frac,
            j_strain: e.j_strain_k,
            n_strain_samples: e.n_strain_samples,
            seed: self.seed,
        }
    }

    pub fn spectrometer(&self) -> qudit_core::Result<SpectrometerSpec> {
        let s = &self.spectrometer;
        SpectrometerSpec::uniform(s.nu_ghz, s.b_min_t, s.b_max_t, s.step_mt, s.linewidth_mt, s.t_k)
    }

    pub fn universality_options(&self) -> UniversalityOptions {
        let u = &self.universality;
        UniversalityOptions { threshold: u.threshold_mhz_per_mt, selectivity_ghz: u.selectivity_ghz, drive_direction: u.drive_direction }
    }

    pub fn nutation_options(&self) -> NutationOptions {
        let n = &self.nutation;
        NutationOptions {
            window: n.window.parse().expect("validated"),
            zero_pad_factor: n.zero_pad_factor,
            noise_multiple: n.noise_multiple,
            min_relative_height: n.min_relative_height,
            nitrogen: n.nitrogen.parse().expect("validated"),
            rabi_band: (n.rabi_band_mhz[0], n.rabi_band_mhz[1]),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}

fn parse_table(text: &str) -> Result<Table, ConfigError> {
    text.parse::<Table>().map_err(|e| ConfigError::Parse(e.to_string()))
}

fn from_table(table: Table) -> Result<RunConfig, ConfigError> {
    check_keys(&table, "")?;
    let cfg: RunConfig = Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    from_table(parse_table(text)?)
}

/// Parse, then apply `key=value` overrides before validation.
pub fn parse_config_with(text: &str, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let mut table = parse_table(text)?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    from_table(table)
}

fn resolve_key(key: &str) -> Result<String, ConfigError> {
    if key.contains('.') || schema_keys("").unwrap_or(&[]).contains(&key) {
        return Ok(key.to_string());
    }
    let find = |matches: &dyn Fn(&str) -> bool| -> Vec<String> {
        SCHEMA
            .iter()
            .filter(|(p, keys)| !p.is_empty() && keys.iter().any(|k| matches(k)))
            .map(|(p, _)| join(p, key))
            .collect()
    };
    let mut hits = find(&|k| k == key);
    if hits.is_empty() {
        // a bare stem such as `J`: place it where validation reports the missing suffix
        let stem = format!("{key}_");
        hits = find(&|k| k.strip_prefix(&stem).is_some_and(|unit| !unit.contains('_')));
    }
    match hits.len() {
        1 => Ok(hits[0].clone()),
        0 => Ok(key.to_string()),
        _ => Err(ConfigError::AmbiguousOverride { key: key.to_string(), candidates: hits.join(", ") }),
    }
}

/// Apply one `dotted.key=value` override. Values use TOML syntax; anything
/// that does not parse as TOML is taken as a bare string.
pub fn apply_override(table: &mut Table, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| ConfigError::BadOverride(spec.to_string()))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigError::BadOverride(spec.to_string()));
    }
    let value = format!("v = {}", raw.trim())
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.trim().to_string()));
    let path = resolve_key(key)?;
    let parts: Vec<&str> = path.split('.').collect();
    let mut cursor = table;
    for (i, part) in parts[..parts.len() - 1].iter().enumerate() {
        let entry = cursor.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| invalid(&parts[..=i].join("."), "is not a table"))?;
    }
    cursor.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
