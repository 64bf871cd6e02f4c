//! Harness configuration, read from a single TOML file.
//!
//! Relative paths resolve against the directory of the config file. Secrets
//! never live in the file: the API key is read from the environment variable
//! named by `backend.api_key_env`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backend::BackendConfig;
use crate::domain::{Catalog, Tier};
use crate::error::ConfigError;
use crate::experiment::{
    default_lexicon, default_strategies, GridSpec, ImpactCoefficients, Lexicon, StrategySpec,
    SurveyConditions, ValidationSettings,
};
use crate::ingest::Round;
use crate::sim::SimConfig;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Live,
    #[default]
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendSection {
    pub kind: BackendKind,
    /// Logit-scale noise of the mock backend.
    pub mock_noise: f64,
    #[serde(flatten)]
    pub live: BackendConfig,
}

impl Default for BackendSection {
    fn default() -> Self {
        BackendSection {
            kind: BackendKind::Mock,
            mock_noise: 0.3,
            live: BackendConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSection {
    /// Survey CSV. When absent a synthetic survey of `synthetic_r1` +
    /// `synthetic_r2` residents is generated from the master seed.
    pub survey: Option<PathBuf>,
    /// Name corpus, one name per line; the bundled corpus is used when absent.
    pub names: Option<PathBuf>,
    pub synthetic_r1: Option<usize>,
    pub synthetic_r2: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemplateSection {
    #[serde(rename = "static")]
    pub static_path: Option<PathBuf>,
    #[serde(rename = "dynamic")]
    pub dynamic_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSection {
    #[serde(flatten)]
    pub spec: GridSpec,
    /// Residents simulated under every grid condition.
    pub residents: usize,
    /// Round and tier filters for the resident pool.
    pub resident_rounds: Vec<Round>,
    pub resident_tiers: Vec<Tier>,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            spec: GridSpec::default(),
            residents: 30,
            resident_rounds: vec![Round::R1],
            resident_tiers: vec![Tier::RegularPC],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImpactSection {
    #[serde(flatten)]
    pub coefficients: ImpactCoefficients,
    pub population: f64,
}

impl Default for ImpactSection {
    fn default() -> Self {
        ImpactSection {
            coefficients: ImpactCoefficients::default(),
            population: 22_000_000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    /// Master seed; required for any run that claims reproducibility.
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    pub backend: BackendSection,
    pub sim: SimConfig,
    pub data: DataSection,
    pub templates: TemplateSection,
    /// Behaviour label overrides keyed by behaviour id.
    pub catalog: BTreeMap<String, String>,
    pub conditions: SurveyConditions,
    pub validation: ValidationSettings,
    pub strategies: Vec<StrategySpec>,
    pub grid: GridSection,
    pub impact: ImpactSection,
    pub themes: Lexicon,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            seed: None,
            output_dir: PathBuf::from("runs"),
            backend: BackendSection::default(),
            sim: SimConfig::default(),
            data: DataSection::default(),
            templates: TemplateSection::default(),
            catalog: BTreeMap::new(),
            conditions: SurveyConditions::default(),
            validation: ValidationSettings::default(),
            strategies: default_strategies(),
            grid: GridSection::default(),
            impact: ImpactSection::default(),
            themes: default_lexicon(),
        }
    }
}

impl HarnessConfig {
    pub fn parse(text: &str) -> Result<HarnessConfig, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))
    }

    /// Read, resolve paths against the file's directory and validate.
    pub fn load(path: &Path) -> Result<HarnessConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = HarnessConfig::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            self.data.survey.as_mut(),
            self.data.names.as_mut(),
            self.templates.static_path.as_mut(),
            self.templates.dynamic_path.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut self.output_dir);
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for p in [
            &self.data.survey,
            &self.data.names,
            &self.templates.static_path,
            &self.templates.dynamic_path,
        ]
        .into_iter()
        .flatten()
        {
            if !p.exists() {
                return Err(ConfigError::MissingPath(p.clone()));
            }
        }
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.sim.validate().map_err(|e| invalid(&e))?;
        self.conditions.validate().map_err(|e| invalid(&e))?;
        Catalog::with_labels(&self.catalog).map_err(|e| invalid(&e))?;
        if self.backend.kind == BackendKind::Live {
            self.backend.live.validate().map_err(|e| invalid(&e))?;
        }
        let mut names = std::collections::BTreeSet::new();
        for s in &self.strategies {
            s.validate().map_err(|e| invalid(&e))?;
            if !names.insert(s.name.as_str()) {
                return Err(ConfigError::Invalid(format!("duplicate strategy name {}", s.name)));
            }
        }
        for s in &self.strategies {
            if let Some(r) = s.requires.iter().find(|r| !names.contains(r.as_str())) {
                return Err(ConfigError::Invalid(format!(
                    "strategy {} requires unknown strategy {r}",
                    s.name
                )));
            }
        }
        if self.themes.is_empty() {
            return Err(ConfigError::Invalid("themes lexicon is empty".into()));
        }
        if self.grid.residents == 0 {
            return Err(ConfigError::Invalid("grid.residents must be at least 1".into()));
        }
        Ok(())
    }

    /// API key from the environment, when the named variable is set.
    pub fn api_key_from_env(&self) -> Option<String> {
        std::env::var(&self.backend.live.api_key_env).ok().filter(|k| !k.is_empty())
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        toml::to_string(self).map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = HarnessConfig::parse("").unwrap();
        assert_eq!(c, HarnessConfig::default());
        c.validate().unwrap();
        assert_eq!(c.strategies.len(), 6);
    }

    #[test]
    fn sections_parse() {
        let c = HarnessConfig::parse(
            r#"
seed = 42
[backend]
kind = "live"
model = "m"
max_concurrency = 4
[sim]
repetitions = 3
[grid]
cfr_percent = [1.5]
r0 = [3.0]
tiers = ["no_pc"]
residents = 5
[catalog]
hand_washing = "washing hands"
"#,
        )
        .unwrap();
        assert_eq!(c.seed, Some(42));
        assert_eq!(c.backend.kind, BackendKind::Live);
        assert_eq!(c.backend.live.model, "m");
        assert_eq!(c.backend.live.max_concurrency, 4);
        assert_eq!(c.sim.repetitions, 3);
        assert_eq!(c.grid.spec.len(), 1);
        assert_eq!(c.grid.residents, 5);
        c.validate().unwrap();
    }

    #[test]
    fn bundled_example_is_valid() {
        let c = HarnessConfig::parse(include_str!("../../../harness.example.toml")).unwrap();
        c.validate().unwrap();
        assert_eq!(c.seed, Some(42));
        assert_eq!(c.grid.spec.len(), 120);
    }

    #[test]
    fn snapshot_round_trips() {
        let c = HarnessConfig {
            seed: Some(3),
            ..HarnessConfig::default()
        };
        assert_eq!(HarnessConfig::parse(&c.to_toml().unwrap()).unwrap(), c);
    }

    #[test]
    fn missing_paths_and_bad_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.toml");
        std::fs::write(&path, "[data]\nsurvey = \"nope.csv\"\n").unwrap();
        assert!(matches!(HarnessConfig::load(&path), Err(ConfigError::MissingPath(_))));
        assert!(matches!(HarnessConfig::parse("seed = \"x\""), Err(ConfigError::Syntax(_))));
        let c = HarnessConfig::parse("[catalog]\nflying = \"x\"\n").unwrap();
        assert!(c.validate().is_err());
    }
}
