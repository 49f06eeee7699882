//! Scenario files: TOML with one block per concern. Every field except
//! `oscillator.nu` has a default, and the resolved file written next to the
//! results spells all of them out.

use qnc_core::reconstruct::case2_term_count;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    TcPair,
    Broadband,
    NarrowbandCase1,
    NarrowbandCase2,
    Budget,
}

impl SchemeKind {
    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::TcPair => "tc_pair",
            SchemeKind::Broadband => "broadband",
            SchemeKind::NarrowbandCase1 => "narrowband_case1",
            SchemeKind::NarrowbandCase2 => "narrowband_case2",
            SchemeKind::Budget => "budget",
        }
    }

    pub fn is_narrowband(self) -> bool {
        matches!(
            self,
            SchemeKind::NarrowbandCase1 | SchemeKind::NarrowbandCase2
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scheme: SchemeKind,
    pub oscillator: OscillatorBlock,
    #[serde(default)]
    pub measurement: MeasurementBlock,
    #[serde(default)]
    pub force: ForceBlock,
    #[serde(default)]
    pub run: RunBlock,
    #[serde(default)]
    pub budget: BudgetBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillatorBlock {
    pub nu: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub n_thermal: f64,
    /// Effective frequency Ω of the narrowband schemes; defaults to ν/10.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_eff: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Observable {
    #[serde(rename = "X_plus")]
    XPlus,
    #[serde(rename = "X_minus")]
    XMinus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementBlock {
    #[serde(default)]
    pub k: f64,
    #[serde(default = "one")]
    pub eta: f64,
    #[serde(default = "default_observable")]
    pub observable: Observable,
}

impl Default for MeasurementBlock {
    fn default() -> Self {
        Self {
            k: 0.0,
            eta: 1.0,
            observable: Observable::XPlus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForceShape {
    Zero,
    /// `amplitude·cos(frequency·t + phase)`; a single spectral line in the
    /// frequency-domain schemes.
    Sinusoid,
    /// Gaussian bump of standard deviation `width` centred on `frequency`.
    Gaussian,
    /// Transform of `amplitude·width·e^{-width·t}·cos(frequency·t)` for `t ≥ 0`.
    DampedCosine,
    /// `n_lines` lines with seeded random phases inside `frequency ± width`.
    Lines,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForceTarget {
    Both,
    First,
    Second,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForceBlock {
    #[serde(default = "default_shape")]
    pub kind: ForceShape,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default)]
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default = "default_width")]
    pub width: f64,
    #[serde(default = "one_usize")]
    pub n_lines: usize,
    /// Spectrum is set to zero above this frequency.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support_max: Option<f64>,
    #[serde(default = "default_target")]
    pub target: ForceTarget,
}

impl Default for ForceBlock {
    fn default() -> Self {
        Self {
            kind: ForceShape::Zero,
            amplitude: 1.0,
            frequency: 0.0,
            phase: 0.0,
            width: 0.1,
            n_lines: 1,
            support_max: None,
            target: ForceTarget::Both,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    #[serde(default = "default_seed")]
    pub base_seed: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_steps")]
    pub n_steps: usize,
    #[serde(default = "default_trajectories")]
    pub n_trajectories: usize,
    /// Keep every `stride`-th time step in the time-series output.
    #[serde(default = "one_usize")]
    pub stride: usize,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Overrides the term count derived from `epsilon`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_terms: Option<usize>,
    /// Spectral grid spacing; defaults to ν/64 (broadband) or Ω/16 (narrowband).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_omega: Option<f64>,
    /// Largest grid frequency; defaults to a range covering every shifted sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_max: Option<f64>,
    #[serde(default = "default_residual")]
    pub residual_tolerance: f64,
}

impl Default for RunBlock {
    fn default() -> Self {
        Self {
            base_seed: default_seed(),
            dt: default_dt(),
            n_steps: default_steps(),
            n_trajectories: default_trajectories(),
            stride: 1,
            n_max: default_n_max(),
            epsilon: default_epsilon(),
            n_terms: None,
            d_omega: None,
            grid_max: None,
            residual_tolerance: default_residual(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetBlock {
    #[serde(default)]
    pub signal_power: f64,
    #[serde(default = "one")]
    pub kappa: f64,
}

impl Default for BudgetBlock {
    fn default() -> Self {
        Self {
            signal_power: 0.0,
            kappa: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    /// Not echoed in the resolved file, so runs into different directories
    /// produce identical outputs.
    #[serde(default = "default_directory", skip_serializing)]
    pub directory: String,
    #[serde(default = "yes")]
    pub time_series: bool,
    #[serde(default = "yes")]
    pub spectra: bool,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            time_series: true,
            spectra: true,
        }
    }
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn default_observable() -> Observable {
    Observable::XPlus
}
fn default_shape() -> ForceShape {
    ForceShape::Zero
}
fn default_target() -> ForceTarget {
    ForceTarget::Both
}
fn default_width() -> f64 {
    0.1
}
fn default_seed() -> u64 {
    1
}
fn default_dt() -> f64 {
    0.005
}
fn default_steps() -> usize {
    2000
}
fn default_trajectories() -> usize {
    1000
}
fn default_n_max() -> usize {
    3
}
fn default_epsilon() -> f64 {
    0.01
}
fn default_residual() -> f64 {
    1e-6
}
fn default_directory() -> String {
    "qnc-out".into()
}

/// Apply a dotted-path override such as `measurement.k=0.5` to a raw TOML table.
///
/// The value is parsed as a TOML literal when possible and as a bare string
/// otherwise. An integer written where the current value is a float becomes
/// a float.
pub fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (path, raw) = assignment.split_once('=').ok_or_else(|| {
        CliError::Validation(format!(
            "override `{assignment}` is not of the form key=value"
        ))
    })?;
    let path = path.trim();
    if path.is_empty() {
        return Err(CliError::Validation(format!(
            "override `{assignment}` has an empty key"
        )));
    }
    let mut value = parse_literal(raw.trim());
    let keys: Vec<&str> = path.split('.').collect();
    let (last, parents) = keys.split_last().expect("split of a non-empty path");
    let mut table = root;
    for key in parents {
        let entry = table
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| {
            CliError::Validation(format!("override `{path}`: `{key}` is not a table"))
        })?;
    }
    if let (Some(toml::Value::Float(_)), toml::Value::Integer(i)) = (table.get(*last), &value) {
        value = toml::Value::Float(*i as f64);
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn parse_literal(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl ScenarioConfig {
    /// Parse a scenario from TOML text after applying overrides.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Validation(format!("config: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: ScenarioConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Validation(format!("config: {e}")))?;
        Ok(config)
    }

    /// Fill scheme-dependent defaults so the resolved file is complete.
    pub fn resolve(mut self) -> Self {
        let nu = self.oscillator.nu;
        if self.scheme.is_narrowband() {
            let omega = *self.oscillator.omega_eff.get_or_insert(nu / 10.0);
            self.run.d_omega.get_or_insert(omega / 16.0);
            if self.force.kind != ForceShape::Zero && self.force.frequency == 0.0 {
                self.force.frequency = nu;
            }
        }
        if self.scheme == SchemeKind::Broadband {
            self.run.d_omega.get_or_insert(nu / 64.0);
            self.force.support_max.get_or_insert(3.0 * nu);
            let support = self.force.support_max.unwrap_or(3.0 * nu);
            let reach = (self.run.n_max as f64 + 2.0) * nu;
            self.run.grid_max.get_or_insert(support.max(reach) + nu);
        }
        if self.scheme.is_narrowband() {
            let omega = self.oscillator.omega_eff.unwrap_or(nu / 10.0);
            let support = *self.force.support_max.get_or_insert(nu + omega);
            let terms = match self.scheme {
                SchemeKind::NarrowbandCase2 => self.run.n_terms.unwrap_or_else(|| {
                    case2_term_count(self.oscillator.gamma, omega, self.run.epsilon).unwrap_or(1)
                }),
                _ => 1,
            };
            self.run
                .grid_max
                .get_or_insert(support.max(2.0 * terms as f64 * omega) + omega);
        }
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario configs always serialise")
    }
}
