// SPDX-License-Identifier: MIT OR Apache-2.0

//! Run configuration: built-in defaults, then an optional TOML file, then
//! command-line flags. The output directory additionally falls back to
//! `CAUSELENS_OUT` when neither the file nor a flag sets it.

use std::path::{Path, PathBuf};

use causelens::condition::{Condition, Language, Order};
use causelens::simrep::DEFAULT_VARIANCE_KEEP;
use causelens::traceio::ANCHOR_FINAL_CHAIN;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const OUT_ENV: &str = "CAUSELENS_OUT";
pub const DEFAULT_MODEL: &str = "Qwen/Qwen1.5-1.8B-Chat";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// `None` selects the bundled lexicon.
    pub lexicon: Option<PathBuf>,
    pub languages: Vec<Language>,
    pub orders: Vec<Order>,
    pub traces: Option<PathBuf>,
    pub out: PathBuf,
    pub anchor: String,
    pub variance_keep: f64,
    pub correct_only: bool,
    /// Worker cap; `None` lets the thread pool decide.
    pub jobs: Option<usize>,
    /// Forwarded to trace extraction and recorded in tables.
    pub model: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            lexicon: None,
            languages: Language::ALL.to_vec(),
            orders: Order::ALL.to_vec(),
            traces: None,
            out: PathBuf::from("out"),
            anchor: ANCHOR_FINAL_CHAIN.to_string(),
            variance_keep: DEFAULT_VARIANCE_KEEP,
            correct_only: false,
            jobs: None,
            model: DEFAULT_MODEL.to_string(),
        }
    }
}

/// Config file contents; every key optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub lexicon: Option<PathBuf>,
    pub languages: Option<Vec<Language>>,
    pub orders: Option<Vec<Order>>,
    pub traces: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub anchor: Option<String>,
    pub variance_keep: Option<f64>,
    pub correct_only: Option<bool>,
    pub jobs: Option<usize>,
    pub model: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Flag values; `None` means "not given on the command line".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlagOverrides {
    pub lexicon: Option<PathBuf>,
    pub languages: Option<Vec<Language>>,
    pub orders: Option<Vec<Order>>,
    pub traces: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub anchor: Option<String>,
    pub variance_keep: Option<f64>,
    pub correct_only: bool,
    pub jobs: Option<usize>,
    pub model: Option<String>,
}

impl RunConfig {
    pub fn resolve(file: FileConfig, flags: FlagOverrides, env_out: Option<PathBuf>) -> Result<RunConfig, CliError> {
        let d = RunConfig::default();
        let cfg = RunConfig {
            lexicon: flags.lexicon.or(file.lexicon).or(d.lexicon),
            languages: flags.languages.or(file.languages).unwrap_or(d.languages),
            orders: flags.orders.or(file.orders).unwrap_or(d.orders),
            traces: flags.traces.or(file.traces).or(d.traces),
            out: flags.out.or(file.out).or(env_out).unwrap_or(d.out),
            anchor: flags.anchor.or(file.anchor).unwrap_or(d.anchor),
            variance_keep: flags.variance_keep.or(file.variance_keep).unwrap_or(d.variance_keep),
            correct_only: flags.correct_only || file.correct_only.unwrap_or(d.correct_only),
            jobs: flags.jobs.or(file.jobs).or(d.jobs),
            model: flags.model.or(file.model).unwrap_or(d.model),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.variance_keep > 0.0 && self.variance_keep <= 1.0) {
            return Err(CliError::Config(format!(
                "variance_keep must lie in (0, 1], got {}",
                self.variance_keep
            )));
        }
        if self.languages.is_empty() || self.orders.is_empty() {
            return Err(CliError::Config("languages and orders must be non-empty".into()));
        }
        if self.jobs == Some(0) {
            return Err(CliError::Config("jobs must be at least 1".into()));
        }
        if self.anchor.is_empty() {
            return Err(CliError::Config("anchor must be non-empty".into()));
        }
        let out = &self.out;
        for (name, p) in [("lexicon", &self.lexicon), ("traces", &self.traces)] {
            if p.as_ref().is_some_and(|p| p == out) {
                return Err(CliError::Config(format!("{name} path and output directory must differ")));
            }
        }
        if self.lexicon.is_some() && self.lexicon == self.traces {
            return Err(CliError::Config("lexicon and trace paths must differ".into()));
        }
        Ok(())
    }

    /// Requested conditions in canonical order, duplicates removed.
    pub fn conditions(&self) -> Vec<Condition> {
        Condition::ALL
            .into_iter()
            .filter(|c| self.languages.contains(&c.language) && self.orders.contains(&c.order))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_is_flag_then_file_then_env() {
        let file = FileConfig {
            out: Some("from-file".into()),
            variance_keep: Some(0.9),
            languages: Some(vec![Language::Zh]),
            ..FileConfig::default()
        };
        let flags = FlagOverrides {
            variance_keep: Some(0.5),
            ..FlagOverrides::default()
        };
        let cfg = RunConfig::resolve(file.clone(), flags, Some("from-env".into())).unwrap();
        assert_eq!(cfg.out, PathBuf::from("from-file"));
        assert_eq!(cfg.variance_keep, 0.5);
        assert_eq!(cfg.languages, vec![Language::Zh]);

        let no_out = FileConfig { out: None, ..file };
        let cfg = RunConfig::resolve(no_out.clone(), FlagOverrides::default(), Some("from-env".into())).unwrap();
        assert_eq!(cfg.out, PathBuf::from("from-env"));
        let cfg = RunConfig::resolve(no_out, FlagOverrides::default(), None).unwrap();
        assert_eq!(cfg.out, PathBuf::from("out"));
    }

    #[test]
    fn rejects_bad_values() {
        let bad = FlagOverrides {
            variance_keep: Some(0.0),
            ..FlagOverrides::default()
        };
        assert!(RunConfig::resolve(FileConfig::default(), bad, None).is_err());
        let clash = FlagOverrides {
            traces: Some("same".into()),
            out: Some("same".into()),
            ..FlagOverrides::default()
        };
        assert!(RunConfig::resolve(FileConfig::default(), clash, None).is_err());
    }

    #[test]
    fn file_parses_and_rejects_unknown_keys() {
        let f: FileConfig = toml::from_str("languages = [\"en\"]\norders = [\"reversed\"]\njobs = 2\n").unwrap();
        assert_eq!(f.orders, Some(vec![Order::Reversed]));
        assert!(toml::from_str::<FileConfig>("variance = 0.5\n").is_err());
    }
}
