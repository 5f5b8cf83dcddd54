//! Layered settings: command-line flags override a TOML config file, which
//! overrides the built-in defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::direction::{SnrOptions, DEFAULT_CLASS_SIZE, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::eval::{DEFAULT_DATASET_SIZE, DEFAULT_MIN_PEAK, DEFAULT_WINDOW};
use crate::traversal::TraversalConfig;

pub const CONFIG_ENV: &str = "GRADREC_CONFIG";

/// One layer of optional overrides. A config file deserializes into this;
/// command-line flags build another one.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub lambda: Option<f64>,
    pub rho: Option<f64>,
    pub k_reg: Option<usize>,
    pub k_rec: Option<usize>,
    pub steps: Option<usize>,
    pub n: Option<usize>,
    pub window: Option<usize>,
    pub epsilon: Option<f64>,
    pub min_peak: Option<usize>,
    pub class_size: Option<usize>,
}

impl Overrides {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// `self` with every field set in `higher` replaced.
    pub fn then(self, higher: Overrides) -> Overrides {
        Overrides {
            lambda: higher.lambda.or(self.lambda),
            rho: higher.rho.or(self.rho),
            k_reg: higher.k_reg.or(self.k_reg),
            k_rec: higher.k_rec.or(self.k_rec),
            steps: higher.steps.or(self.steps),
            n: higher.n.or(self.n),
            window: higher.window.or(self.window),
            epsilon: higher.epsilon.or(self.epsilon),
            min_peak: higher.min_peak.or(self.min_peak),
            class_size: higher.class_size.or(self.class_size),
        }
    }

    pub fn resolve(&self) -> Settings {
        let d = Settings::default();
        let t = d.traversal;
        Settings {
            traversal: TraversalConfig {
                lambda: self.lambda.unwrap_or(t.lambda),
                rho: self.rho.unwrap_or(t.rho),
                k_reg: self.k_reg.unwrap_or(t.k_reg),
                k_rec: self.k_rec.unwrap_or(t.k_rec),
                max_steps: self.steps.unwrap_or(t.max_steps),
                ..t
            },
            snr: SnrOptions {
                epsilon: self.epsilon.unwrap_or(d.snr.epsilon),
                ..d.snr
            },
            dataset_size: self.n.unwrap_or(d.dataset_size),
            window: self.window.unwrap_or(d.window),
            min_peak: self.min_peak.unwrap_or(d.min_peak),
            class_size: self.class_size.unwrap_or(d.class_size),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub traversal: TraversalConfig,
    pub snr: SnrOptions,
    pub dataset_size: usize,
    pub window: usize,
    pub min_peak: usize,
    pub class_size: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            traversal: TraversalConfig::default(),
            snr: SnrOptions::with_epsilon(DEFAULT_EPSILON),
            dataset_size: DEFAULT_DATASET_SIZE,
            window: DEFAULT_WINDOW,
            min_peak: DEFAULT_MIN_PEAK,
            class_size: DEFAULT_CLASS_SIZE,
        }
    }
}

/// Defaults, then the config file (if any), then `flags`.
pub fn layered(config_path: Option<&Path>, flags: Overrides) -> Result<Settings> {
    let file = match config_path {
        Some(p) => Overrides::load(p)?,
        None => Overrides::default(),
    };
    Ok(file.then(flags).resolve())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beat_defaults() {
        let file = Overrides::from_toml("lambda = 0.5\nrho = 0.2\nwindow = 20\n").unwrap();
        let flags = Overrides {
            lambda: Some(0.05),
            ..Default::default()
        };
        let s = file.then(flags).resolve();
        assert_eq!(s.traversal.lambda, 0.05);
        assert_eq!(s.traversal.rho, 0.2);
        assert_eq!(s.window, 20);
        assert_eq!(s.traversal.k_rec, 10);
        assert_eq!(s.dataset_size, 100);
    }

    #[test]
    fn unknown_keys_rejected() {
        let e = Overrides::from_toml("lamda = 0.5").unwrap_err();
        assert_eq!(e.code(), "InvalidConfig");
    }
}
