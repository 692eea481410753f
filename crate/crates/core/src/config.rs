//! JSON run configuration with dotted-key overrides.
//!
//! A file only needs the keys it changes; everything else falls back to the
//! reference network with `p_max = 0.5` and the uniform shape. Unknown keys
//! are rejected with their full dotted path.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::chaos::OrbitConfig;
use crate::classic::SystemParams;
use crate::error::{Error, Result};
use crate::gred::ControlParams;
use crate::special::BetaShape;
use crate::sweep::{ModelSpec, SweepAxis, SweepOrbit, SweepParam, WbifScan};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Overrides {
    #[serde(rename = "A1")]
    pub a1: Option<f64>,
    #[serde(rename = "A2")]
    pub a2: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OrbitSection {
    /// Initial state; the core midpoint when unset.
    pub x0: Option<f64>,
    #[serde(flatten)]
    pub sweep: SweepOrbit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSection {
    pub param: String,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            param: "x_min".into(),
            lo: 0.2,
            hi: 0.6,
            points: 2000,
        }
    }
}

impl SweepSection {
    pub fn axis(&self) -> Result<SweepAxis> {
        SweepAxis::new(self.param.parse::<SweepParam>()?, self.lo, self.hi, self.points)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSection {
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub beta_lo: f64,
    pub beta_hi: f64,
    pub points: usize,
    /// Connection counts to run the grid for; the system's `N` when empty.
    pub n_values: Vec<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            alpha_lo: 0.002,
            alpha_hi: 1.5,
            beta_lo: 0.002,
            beta_hi: 1.5,
            points: 40,
            n_values: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub system: SystemParams,
    pub control: ControlParams,
    pub overrides: Overrides,
    pub orbit: OrbitSection,
    pub scan: WbifScan,
    pub sweep: SweepSection,
    pub grid: GridSection,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            system: SystemParams::umh(),
            control: ControlParams::reference(0.5, BetaShape::uniform()),
            overrides: Overrides::default(),
            orbit: OrbitSection::default(),
            scan: WbifScan::default(),
            sweep: SweepSection::default(),
            grid: GridSection::default(),
        }
    }
}

impl Config {
    /// Defaults, then the JSON document `text` (if any), then `key=value` overrides.
    pub fn load(text: Option<&str>, sets: &[String]) -> Result<Config> {
        let mut tree = serde_json::to_value(Config::default())
            .map_err(|e| Error::Config(e.to_string()))?;
        if let Some(text) = text {
            let doc: Value = serde_json::from_str(text)
                .map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
            merge(&mut tree, doc, "")?;
        }
        for s in sets {
            apply_set(&mut tree, s)?;
        }
        let cfg: Config = serde_json::from_value(tree).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: Option<&std::path::Path>, sets: &[String]) -> Result<Config> {
        let text = match path {
            Some(p) => Some(std::fs::read_to_string(p).map_err(|e| {
                Error::Config(format!("cannot read config file {}: {e}", p.display()))
            })?),
            None => None,
        };
        Config::load(text.as_deref(), sets)
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.control.validate()?;
        self.scan.validate()?;
        if let Some(x0) = self.orbit.x0 {
            OrbitConfig::new(x0, 0, 1)?;
        }
        if self.orbit.sweep.samples == 0 {
            return Err(Error::Config("orbit.samples must be at least 1".into()));
        }
        Ok(())
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            system: self.system,
            control: self.control,
            a1: self.overrides.a1,
            a2: self.overrides.a2,
        }
    }
}

fn merge(base: &mut Value, patch: Value, path: &str) -> Result<()> {
    match (base, patch) {
        (Value::Object(base), Value::Object(patch)) => {
            for (k, v) in patch {
                let key = join(path, &k);
                match base.get_mut(&k) {
                    Some(slot) => merge(slot, v, &key)?,
                    None => return Err(Error::Config(format!("unknown key `{key}`"))),
                }
            }
            Ok(())
        }
        (Value::Object(_), other) if path.is_empty() => Err(Error::Config(format!(
            "configuration must be a JSON object, got {other}"
        ))),
        (Value::Object(_), other) => Err(Error::Config(format!(
            "key `{path}` is a section and cannot be set to {other}"
        ))),
        (slot, Value::Object(_)) if !slot.is_null() => {
            Err(Error::Config(format!("key `{path}` is not a section")))
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

/// Applies one `section.key=value` override. The value is parsed as JSON and
/// taken as a string when that fails.
fn apply_set(tree: &mut Value, set: &str) -> Result<()> {
    let (key, raw) = set
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{set}` is not of the form key=value")))?;
    let key = key.trim();
    let value = serde_json::from_str::<Value>(raw.trim())
        .unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    let mut patch = value;
    for part in key.rsplit('.') {
        if part.is_empty() {
            return Err(Error::Config(format!("empty key segment in `{key}`")));
        }
        let mut m = Map::new();
        m.insert(part.to_string(), patch);
        patch = Value::Object(m);
    }
    merge(tree, patch, "")
}
