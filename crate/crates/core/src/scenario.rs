//! Run configuration: the in-memory [`Scenario`] driving a simulation and
//! the key-value scenario file format (`key = value`, one per line, `#`
//! comments). The full schema is documented in `docs/scenario.md`.

use thiserror::Error;

use crate::entities::{GREY_COOLDOWN_DEFAULT_US, GREY_THRESHOLD_DEFAULT};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("scenario file line {line}: {reason}")]
    BadScenarioLine { line: usize, reason: String },
    #[error("unknown scenario key '{0}'")]
    UnknownKey(String),
    #[error("invalid topology: {0}")]
    BadTopology(String),
    #[error("invalid scenario: {0}")]
    BadScenario(String),
    #[error("unknown attack scenario '{0}'")]
    UnknownAttack(String),
}

/// One scheduled region crossing for a vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Handover {
    pub at_us: u64,
    pub av: usize,
    pub to_rg: usize,
}

/// Everything one deterministic run needs besides the topology and the
/// master seed.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub noise_sigma: f64,
    pub i_max: u8,
    pub n_enrollments: usize,
    pub grey_threshold: u32,
    pub grey_cooldown_us: u64,
    /// When set, every vehicle initiates one authentication at this time.
    pub auth_at_us: Option<u64>,
    pub handovers: Vec<Handover>,
    pub time_limit_us: u64,
    pub reuse_enrollments: bool,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            noise_sigma: 0.0,
            i_max: 15,
            n_enrollments: 2,
            grey_threshold: GREY_THRESHOLD_DEFAULT,
            grey_cooldown_us: GREY_COOLDOWN_DEFAULT_US,
            auth_at_us: Some(0),
            handovers: Vec::new(),
            time_limit_us: 3_600_000_000,
            reuse_enrollments: false,
        }
    }
}

/// Raw values parsed from a scenario file. Everything is optional so CLI
/// flags can override file entries and defaults fill the rest.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScenarioFile {
    pub seed: Option<u64>,
    pub vehicles: Option<usize>,
    pub rsus: Option<usize>,
    pub rgs: Option<usize>,
    pub noise_sigma: Option<f64>,
    pub i_max: Option<u8>,
    pub n_enrollments: Option<usize>,
    pub grey_threshold: Option<u32>,
    pub grey_cooldown_s: Option<u64>,
    pub base_latency_us: Option<u64>,
    pub jitter_us: Option<u64>,
    pub attack: Option<String>,
    pub attempts: Option<u64>,
    pub handover_at_s: Option<u64>,
    pub handover_av: Option<usize>,
    pub handover_to_rg: Option<usize>,
}

impl ScenarioFile {
    /// Fold file values into a scenario; unset keys leave it untouched.
    /// A handover entry forms when `handover_at_s` is present (vehicle and
    /// target region default to 0 and 1).
    pub fn apply_to(&self, scenario: &mut Scenario) {
        if let Some(x) = self.noise_sigma {
            scenario.noise_sigma = x;
        }
        if let Some(x) = self.i_max {
            scenario.i_max = x;
        }
        if let Some(x) = self.n_enrollments {
            scenario.n_enrollments = x;
        }
        if let Some(x) = self.grey_threshold {
            scenario.grey_threshold = x;
        }
        if let Some(x) = self.grey_cooldown_s {
            scenario.grey_cooldown_us = x * 1_000_000;
        }
        if let Some(at_s) = self.handover_at_s {
            scenario.handovers.push(Handover {
                at_us: at_s * 1_000_000,
                av: self.handover_av.unwrap_or(0),
                to_rg: self.handover_to_rg.unwrap_or(1),
            });
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut out = ScenarioFile::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::BadScenarioLine {
                line: idx + 1,
                reason: "expected 'key = value'".into(),
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |reason: String| ConfigError::BadScenarioLine { line: idx + 1, reason };
            macro_rules! num {
                ($ty:ty) => {
                    value.parse::<$ty>().map_err(|e| bad(format!("{key}: {e}")))?
                };
            }
            match key {
                "seed" => out.seed = Some(num!(u64)),
                "vehicles" => out.vehicles = Some(num!(usize)),
                "rsus" => out.rsus = Some(num!(usize)),
                "rgs" => out.rgs = Some(num!(usize)),
                "noise_sigma" => out.noise_sigma = Some(num!(f64)),
                "i_max" => out.i_max = Some(num!(u8)),
                "n_enrollments" => out.n_enrollments = Some(num!(usize)),
                "grey_threshold" => out.grey_threshold = Some(num!(u32)),
                "grey_cooldown_s" => out.grey_cooldown_s = Some(num!(u64)),
                "base_latency_us" => out.base_latency_us = Some(num!(u64)),
                "jitter_us" => out.jitter_us = Some(num!(u64)),
                "attack" => out.attack = Some(value.to_string()),
                "attempts" => out.attempts = Some(num!(u64)),
                "handover_at_s" => out.handover_at_s = Some(num!(u64)),
                "handover_av" => out.handover_av = Some(num!(usize)),
                "handover_to_rg" => out.handover_to_rg = Some(num!(usize)),
                other => return Err(ConfigError::UnknownKey(other.to_string())),
            }
        }
        Ok(out)
    }
}
