//! Layered run configuration: preset defaults, then the config file, then
//! command-line flags.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value;
use sbl_lagrangian::dictionary::{DictionaryConfig, Formulation};
use sbl_lagrangian::sbl::Hyperparameters;
use sbl_lagrangian::systems::{preset_dictionary, SystemName, SystemSpec};

use crate::error::{CliResult, Failure};

/// Contents of a `--config` file. Every block is optional and partial.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    /// Partial [`SystemSpec`]; `name` selects the preset it is merged onto.
    pub system: Option<Value>,
    pub noise: Option<NoiseBlock>,
    /// Partial [`DictionaryConfig`] merged onto the preset dictionary.
    pub dictionary: Option<Value>,
    /// Partial [`Hyperparameters`].
    pub sbl: Option<Value>,
    pub sweep: Option<SweepBlock>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseBlock {
    pub level_zeta: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub systems: Option<Vec<String>>,
    pub zetas: Option<Vec<f64>>,
    pub seeds: Option<Vec<u64>>,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<FileConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        let parsed = if is_toml {
            toml::from_str(&text).map_err(|e| e.to_string())
        } else {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| Failure::config(format!("invalid config {}: {e}", path.display())))
    }

    pub fn system_name(&self) -> CliResult<Option<SystemName>> {
        let name = self.system.as_ref().and_then(|s| s.get("name")).and_then(Value::as_str);
        name.map(|n| n.parse().map_err(Failure::from)).transpose()
    }
}

/// Recursively overwrites `base` with the entries of `over`.
pub fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

fn layered<T: serde::Serialize + serde::de::DeserializeOwned>(base: &T, over: Option<&Value>, what: &str) -> CliResult<T> {
    let Some(over) = over else {
        return Ok(serde_json::from_value(serde_json::to_value(base).expect("serializable"))
            .expect("round trip of a default value"));
    };
    let mut v = serde_json::to_value(base).map_err(|e| Failure::config(e.to_string()))?;
    merge(&mut v, over);
    serde_json::from_value(v).map_err(|e| Failure::config(format!("invalid {what} block: {e}")))
}

/// Overrides that may come from command-line flags.
#[derive(Debug, Default, Clone)]
pub struct SystemOverrides {
    pub t_final: Option<f64>,
    pub dt: Option<f64>,
}

/// Effective settings for one run.
pub struct Resolved {
    pub seed: u64,
    pub out: PathBuf,
    pub file: FileConfig,
}

impl Resolved {
    pub fn new(config: Option<&Path>, seed: Option<u64>, out: Option<PathBuf>) -> CliResult<Resolved> {
        let file = match config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        Ok(Resolved {
            seed: seed.or(file.seed).unwrap_or(1),
            out: out.or_else(|| file.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out")),
            file,
        })
    }

    /// System name from the flag, else the config file.
    pub fn system_name(&self, flag: Option<&str>) -> CliResult<Option<SystemName>> {
        match flag {
            Some(s) => Ok(Some(s.parse()?)),
            None => self.file.system_name(),
        }
    }

    pub fn system(&self, name: SystemName, o: &SystemOverrides) -> CliResult<SystemSpec> {
        let mut over = self.file.system.clone().unwrap_or(Value::Object(Default::default()));
        if let Value::Object(m) = &mut over {
            m.remove("name");
        }
        let mut spec: SystemSpec = layered(&SystemSpec::paper(name), Some(&over), "system")?;
        spec.name = name;
        if let Some(t) = o.t_final {
            spec.t_final = t;
        }
        if let Some(dt) = o.dt {
            spec.dt = dt;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn noise(&self, flag: Option<f64>) -> f64 {
        flag.or(self.file.noise.as_ref().and_then(|n| n.level_zeta)).unwrap_or(0.0)
    }

    pub fn dictionary(&self, name: SystemName, formulation: Option<Formulation>) -> CliResult<DictionaryConfig> {
        let mut cfg = layered(&preset_dictionary(name), self.file.dictionary.as_ref(), "dictionary")?;
        if let Some(f) = formulation {
            cfg.formulation = f;
        }
        Ok(cfg)
    }

    pub fn hyperparameters(&self, samples: Option<usize>, burnin: Option<usize>) -> CliResult<Hyperparameters> {
        let mut hp = layered(&Hyperparameters::default(), self.file.sbl.as_ref(), "sbl")?;
        hp.seed = self.seed;
        if let Some(n) = samples {
            hp.n_samples = n;
        }
        if let Some(n) = burnin {
            hp.n_burnin = n;
        }
        hp.validate()?;
        Ok(hp)
    }
}
