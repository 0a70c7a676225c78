//! Flat key-value configuration files and experiment-config assembly.
//!
//! Lines are `key = value`; `#` starts a comment. Command-line flags
//! override file values by inserting into the map before building.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::baselines::Method;
use crate::error::{Error, Result};
use crate::sim::{effect_grid, AssociationModel, AssociationSpec, CorrelationSpec, ExperimentConfig};

#[derive(Debug, Clone, Default)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str_named(&text, &path.display().to_string())
    }

    pub fn from_str_named(text: &str, name: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::FileParse {
                    path: name.to_string(),
                    line: lineno + 1,
                    reason: format!("expected `key = value`, got `{line}`"),
                });
            };
            entries.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| Error::InvalidConfig { reason: format!("missing key `{key}`") })
    }

    pub fn get_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| Error::InvalidConfig {
                reason: format!("key `{key}`: cannot parse `{raw}`"),
            }),
        }
    }

    pub fn get_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get_parsed(key)?.unwrap_or(default))
    }

    pub fn get_bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some(raw) => match raw.to_ascii_lowercase().as_str() {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                other => Err(Error::InvalidConfig {
                    reason: format!("key `{key}`: expected a boolean, got `{other}`"),
                }),
            },
        }
    }

    /// Canonical `key = value` rendering; stable across insertion order.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}

/// Short hex digest identifying a configuration.
pub fn config_hash(canonical: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    let digest = hasher.finalize();
    digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
}

/// Parse an index set like `1,2,46-58` into 1-based indices.
pub fn parse_index_set(text: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        if let Some((a, b)) = part.split_once('-') {
            let lo: usize = a.trim().parse().map_err(|_| Error::InvalidConfig {
                reason: format!("bad index range `{part}`"),
            })?;
            let hi: usize = b.trim().parse().map_err(|_| Error::InvalidConfig {
                reason: format!("bad index range `{part}`"),
            })?;
            if lo == 0 || hi < lo {
                return Err(Error::InvalidConfig { reason: format!("bad index range `{part}`") });
            }
            out.extend(lo..=hi);
        } else {
            let idx: usize = part.parse().map_err(|_| Error::InvalidConfig {
                reason: format!("bad index `{part}`"),
            })?;
            if idx == 0 {
                return Err(Error::InvalidConfig { reason: "indices are 1-based".into() });
            }
            out.push(idx);
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidConfig { reason: "empty index set".into() });
    }
    Ok(out)
}

pub fn parse_method_list(text: &str) -> Result<Vec<Method>> {
    let mut out = Vec::new();
    for part in text.split(',') {
        if part.trim().is_empty() {
            continue;
        }
        let m = Method::parse(part)?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidConfig { reason: "empty method list".into() });
    }
    Ok(out)
}

fn parse_f64_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            p.trim().parse::<f64>().map_err(|_| Error::InvalidConfig {
                reason: format!("cannot parse `{p}` as a number"),
            })
        })
        .collect()
}

/// Assemble an [`ExperimentConfig`] from config keys.
///
/// Keys: `corr_kind` (cs|ar|file), `corr_rho`, `traits`, `corr_path`,
/// `model` (m1|m2), `m1_j`, `m2_indices`, `effect` or
/// `effect_min`/`effect_max`/`effect_count`, `n_replicates`,
/// `alpha_levels`, `power_alpha`, `seed`, `methods`, `reestimate_r`.
pub fn build_experiment(kv: &KvConfig) -> Result<ExperimentConfig> {
    let correlation = match kv.require("corr_kind")?.to_ascii_lowercase().as_str() {
        "cs" => {
            let rho: f64 = kv.get_parsed("corr_rho")?.ok_or_else(|| missing("corr_rho"))?;
            let t: usize = kv.get_parsed("traits")?.ok_or_else(|| missing("traits"))?;
            CorrelationSpec::cs(t, rho)
        }
        "ar" => {
            let rho: f64 = kv.get_parsed("corr_rho")?.ok_or_else(|| missing("corr_rho"))?;
            let t: usize = kv.get_parsed("traits")?.ok_or_else(|| missing("traits"))?;
            CorrelationSpec::ar(t, rho)
        }
        "file" => {
            let path: String = kv.require("corr_path")?.to_string();
            CorrelationSpec::from_file(PathBuf::from(path))
        }
        other => {
            return Err(Error::InvalidConfig { reason: format!("unknown corr_kind `{other}`") })
        }
    };

    let association = match kv.get("model").map(|m| m.to_ascii_lowercase()) {
        None => None,
        Some(model) => {
            let model = match model.as_str() {
                "m1" => AssociationModel::M1 {
                    top_j: kv.get_parsed("m1_j")?.ok_or_else(|| missing("m1_j"))?,
                },
                "m2" => AssociationModel::M2 {
                    indices: parse_index_set(kv.require("m2_indices")?)?,
                },
                other => {
                    return Err(Error::InvalidConfig {
                        reason: format!("unknown model `{other}` (expected m1 or m2)"),
                    })
                }
            };
            let grid = if let Some(effect) = kv.get_parsed::<f64>("effect")? {
                vec![effect]
            } else {
                let min: f64 = kv.get_parsed("effect_min")?.ok_or_else(|| missing("effect_min"))?;
                let max: f64 = kv.get_parsed("effect_max")?.ok_or_else(|| missing("effect_max"))?;
                let count: usize = kv.get_or("effect_count", 10)?;
                if count == 0 || max < min {
                    return Err(Error::InvalidConfig { reason: "bad effect grid".into() });
                }
                effect_grid(min, max, count)
            };
            Some(AssociationSpec { model, effect_grid: grid })
        }
    };

    let alpha_levels = match kv.get("alpha_levels") {
        Some(text) => parse_f64_list(text)?,
        None => vec![5e-2, 1e-2, 1e-3],
    };
    let methods = match kv.get("methods") {
        Some(text) => parse_method_list(text)?,
        None => Method::ALL.to_vec(),
    };

    Ok(ExperimentConfig {
        correlation,
        association,
        n_replicates: kv.get_or("n_replicates", 1000)?,
        alpha_levels,
        power_alpha: kv.get_or("power_alpha", 5e-5)?,
        seed: kv.get_or("seed", 0u64)?,
        methods,
        reestimate_r: kv.get_bool_or("reestimate_r", true)?,
    })
}

fn missing(key: &str) -> Error {
    Error::InvalidConfig { reason: format!("missing key `{key}`") }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_overrides() {
        let mut kv = KvConfig::from_str_named(
            "corr_kind = cs\ncorr_rho = 0.3\ntraits = 50\n# comment\nseed = 7\n",
            "test",
        )
        .unwrap();
        assert_eq!(kv.get("seed"), Some("7"));
        kv.set("seed", 9);
        let cfg = build_experiment(&kv).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.n_replicates, 1000);
        assert!(cfg.reestimate_r);
        assert_eq!(cfg.methods.len(), 6);
    }

    #[test]
    fn index_sets() {
        assert_eq!(parse_index_set("1,2").unwrap(), vec![1, 2]);
        assert_eq!(parse_index_set("46-49").unwrap(), vec![46, 47, 48, 49]);
        assert_eq!(parse_index_set("1, 3, 5-7").unwrap(), vec![1, 3, 5, 6, 7]);
        assert!(parse_index_set("0").is_err());
        assert!(parse_index_set("5-2").is_err());
        assert!(parse_index_set("").is_err());
    }

    #[test]
    fn experiment_with_model() {
        let kv = KvConfig::from_str_named(
            "corr_kind = ar\ncorr_rho = 0.7\ntraits = 50\nmodel = m2\nm2_indices = 25,26\n\
             effect_min = 2\neffect_max = 6\nmethods = mtafs,sum\n",
            "test",
        )
        .unwrap();
        let cfg = build_experiment(&kv).unwrap();
        let assoc = cfg.association.unwrap();
        assert_eq!(assoc.effect_grid.len(), 10);
        assert_eq!(assoc.effect_grid[0], 2.0);
        assert_eq!(assoc.effect_grid[9], 6.0);
        assert_eq!(cfg.methods, vec![Method::Mtafs, Method::Sum]);
    }

    #[test]
    fn hash_is_stable() {
        let kv1 = KvConfig::from_str_named("b = 2\na = 1\n", "x").unwrap();
        let kv2 = KvConfig::from_str_named("a = 1\nb = 2\n", "y").unwrap();
        assert_eq!(config_hash(&kv1.canonical()), config_hash(&kv2.canonical()));
        assert_eq!(config_hash(&kv1.canonical()).len(), 12);
    }
}
