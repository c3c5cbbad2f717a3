//! Flat TOML experiment config with `GROWTHLAB_<KEY>` environment overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::driving::{Model, NoiseTransform, MODEL_IDS};
use crate::engine::Dynamics;
use crate::error::{Error, Result};

pub const ENV_PREFIX: &str = "GROWTHLAB_";

/// Every recognized key. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// One of the built-in model ids, or `rsos_alternating`.
    pub model: String,
    pub d: usize,
    /// Polymer inverse temperature.
    pub beta: f64,
    /// `identity`, `gaussian_cdf` or `centered_cdf`.
    pub noise_transform: String,
    pub t_list: Vec<u64>,
    /// Recorded positions relative to the origin; empty means the origin only.
    pub probes: Vec<Vec<i64>>,
    /// Difference offsets `b`; empty means `2 e_1`.
    pub offsets: Vec<Vec<i64>>,
    pub n_replicas: u64,
    pub seed: u64,
    /// Worker threads; 0 means all available cores.
    pub parallelism: usize,
    pub out_dir: PathBuf,
    /// `simulate` also dumps the whole exact region at every step.
    pub retain_trajectory: bool,
    /// Tail thresholds in units of `L sqrt(t)`.
    pub tail_multiples: Vec<f64>,
    /// MGF parameters in units of `1 / (L sqrt(t))`.
    pub mgf_multiples: Vec<f64>,
    /// Standard errors allowed above a bound before a row is flagged.
    pub flag_sigmas: f64,
    pub axiom_samples: u64,
    pub walk_t: u64,
    pub walk_seeds: u64,
    pub fd_eps: f64,
    pub walk_rel_tol: f64,
    pub oracle_seeds: u64,
    pub lemma_instances: u64,
    /// Adds a deliberately non-monotone rule to the driving checks.
    pub inject_broken_fixture: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: "random_deposition".into(),
            d: 1,
            beta: 1.0,
            noise_transform: "identity".into(),
            t_list: vec![16, 64],
            probes: Vec::new(),
            offsets: Vec::new(),
            n_replicas: 1000,
            seed: 0,
            parallelism: 0,
            out_dir: PathBuf::from("out"),
            retain_trajectory: false,
            tail_multiples: vec![1.0, 2.0, 3.0],
            mgf_multiples: vec![-1.0, 1.0],
            flag_sigmas: 5.0,
            axiom_samples: 20_000,
            walk_t: 5,
            walk_seeds: 20,
            fd_eps: 1e-5,
            walk_rel_tol: 1e-4,
            oracle_seeds: 50,
            lemma_instances: 100_000,
            inject_broken_fixture: false,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

/// Parses an override value as a TOML value, falling back to a bare string.
fn parse_override(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(config_err)
    }

    /// Reads `path` (if any), then applies environment overrides from `vars`.
    pub fn load(path: Option<&Path>, vars: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                text.parse::<toml::Table>().map_err(config_err)?
            }
            None => toml::Table::new(),
        };
        let known = toml::Table::try_from(Self::default()).map_err(config_err)?;
        for (name, raw) in vars {
            let Some(key) = name.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let key = key.to_ascii_lowercase();
            if known.contains_key(&key) {
                table.insert(key, parse_override(&raw));
            }
        }
        table.try_into().map_err(config_err)
    }

    pub fn parallelism(&self) -> usize {
        if self.parallelism > 0 {
            self.parallelism
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }

    pub fn transform(&self) -> Result<NoiseTransform> {
        NoiseTransform::from_label(&self.noise_transform).map_err(config_err)
    }

    pub fn dynamics(&self) -> Result<Dynamics> {
        if self.model == "rsos_alternating" {
            if self.d < 1 {
                return Err(Error::Config("d must be at least 1".into()));
            }
            return Ok(Dynamics::RsosAlternating { d: self.d });
        }
        if !MODEL_IDS.contains(&self.model.as_str()) {
            return Err(Error::Config(format!(
                "unknown model `{}`; expected one of {:?} or rsos_alternating",
                self.model, MODEL_IDS
            )));
        }
        Model::from_id(&self.model, self.d, self.beta, self.transform()?)
            .map(Dynamics::Driven)
            .map_err(config_err)
    }

    pub fn probe_list(&self) -> Vec<Vec<i64>> {
        if self.probes.is_empty() {
            vec![vec![0; self.d]]
        } else {
            self.probes.clone()
        }
    }

    pub fn offset_list(&self) -> Vec<Vec<i64>> {
        if self.offsets.is_empty() {
            let mut b = vec![0; self.d];
            if let Some(first) = b.first_mut() {
                *first = 2;
            }
            vec![b]
        } else {
            self.offsets.clone()
        }
    }

    pub fn sorted_times(&self) -> Vec<u64> {
        let mut t = self.t_list.clone();
        t.sort_unstable();
        t.dedup();
        t
    }

    /// Checks everything shared by all commands.
    pub fn validate(&self) -> Result<()> {
        self.dynamics()?;
        if self.t_list.is_empty() {
            return Err(Error::Config("t_list must not be empty".into()));
        }
        for p in self.probe_list() {
            if p.len() != self.d {
                return Err(Error::Config(format!("probe {p:?} does not have dimension {}", self.d)));
            }
        }
        for b in self.offset_list() {
            if b.len() != self.d {
                return Err(Error::Config(format!("offset {b:?} does not have dimension {}", self.d)));
            }
            if b.iter().all(|&c| c == 0) {
                return Err(Error::Config("difference offsets must be nonzero".into()));
            }
        }
        if !(self.flag_sigmas >= 0.0) {
            return Err(Error::Config("flag_sigmas must be >= 0".into()));
        }
        Ok(())
    }

    /// Extra checks for commands that estimate statistics.
    pub fn validate_statistical(&self) -> Result<()> {
        self.validate()?;
        if self.n_replicas < 2 {
            return Err(Error::Config(format!(
                "n_replicas must be at least 2, got {}",
                self.n_replicas
            )));
        }
        if self.t_list.contains(&0) {
            return Err(Error::Config("statistical commands need t >= 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), c);
        c.validate_statistical().unwrap();
    }

    #[test]
    fn unknown_key_is_rejected() {
        assert!(ExperimentConfig::from_toml_str("modle = \"rsos\"").is_err());
    }

    #[test]
    fn env_overrides_take_precedence() {
        let vars = vec![
            ("GROWTHLAB_MODEL".to_string(), "ballistic".to_string()),
            ("GROWTHLAB_T_LIST".to_string(), "[4, 8]".to_string()),
            ("GROWTHLAB_SEED".to_string(), "17".to_string()),
            ("GROWTHLAB_NOT_A_KEY".to_string(), "1".to_string()),
            ("OTHER".to_string(), "x".to_string()),
        ];
        let c = ExperimentConfig::load(None, vars).unwrap();
        assert_eq!(c.model, "ballistic");
        assert_eq!(c.t_list, vec![4, 8]);
        assert_eq!(c.seed, 17);
    }

    #[test]
    fn validation_errors() {
        let mut c = ExperimentConfig::default();
        c.model = "kpz".into();
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.offsets = vec![vec![0]];
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.n_replicas = 1;
        assert!(c.validate().is_ok());
        assert!(c.validate_statistical().is_err());
        let mut c = ExperimentConfig::default();
        c.t_list.clear();
        assert!(c.validate().is_err());
    }
}
