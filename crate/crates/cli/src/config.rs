//! Presets, config files and the precedence `flags > config > preset`.

use std::path::Path;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use yamada::pulses::ClassifyOptions;
use yamada::ModelParams;

use crate::output::Format;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// A = 6.5, B = 5.8, a = 1.8, γ = 0.04, no feedback.
    WorkingPoint,
    /// Working point with κ = 0.01, τ = 100.
    Figure1,
}

impl Preset {
    pub fn params(self) -> ModelParams {
        let wp = ModelParams::working_point();
        match self {
            Preset::WorkingPoint => wp,
            Preset::Figure1 => wp.with_feedback(0.01, 100.0),
        }
    }
}

/// Per-field model overrides.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamArgs {
    /// Pump A
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub pump: Option<f64>,
    /// Absorption B
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub absorber: Option<f64>,
    /// Saturation ratio a
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub saturation: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub gamma_g: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub gamma_q: Option<f64>,
    /// Feedback strength
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub kappa: Option<f64>,
    /// Feedback delay
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub tau: Option<f64>,
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: Option<String>,
    pub preset: Option<Preset>,
    #[serde(default)]
    pub params: ParamArgs,
    /// Arguments of the experiment, keyed like the long flags with `_`.
    #[serde(default)]
    pub args: Map<String, Value>,
    pub options: Option<ClassifyOptions>,
    pub out: Option<String>,
    pub format: Option<Format>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::validation(format!("bad config {}: {e}", path.display())))
    }
}

/// Shallow overlay: non-null keys of `top` replace those of `base`.
pub fn overlay(base: &mut Map<String, Value>, top: Map<String, Value>) {
    for (k, v) in top {
        if !v.is_null() {
            base.insert(k, v);
        }
    }
}

fn to_map<T: Serialize>(x: &T) -> Map<String, Value> {
    match serde_json::to_value(x) {
        Ok(Value::Object(m)) => m,
        _ => Map::new(),
    }
}

pub fn resolve_params(preset: Preset, config: &ParamArgs, flags: &ParamArgs) -> Result<ModelParams, CliError> {
    let mut merged = to_map(&preset.params());
    overlay(&mut merged, to_map(config));
    overlay(&mut merged, to_map(flags));
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::validation(format!("bad parameters: {e}")))
}
