//! Run configuration: `[run]` / `[schedule]` sections merged with flags.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hvsim_core::inequality::{ChshSettings, Method};
use hvsim_core::stations::{Schedule, SettingPolicy};
use hvsim_core::{FactorizationMode, Stations};

use crate::descriptor::{Descriptor, ScheduleSection};
use crate::error::{HarnessError, Result};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_TRIALS: u64 = 10_000;
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_PERTURBATIONS: usize = 3;

/// Options a config file may set under `[run]`. Flags win over the file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub angles: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perturbations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub apply: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub round: Option<bool>,
}

/// Fully resolved configuration, echoed into every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub model: String,
    pub seed: u64,
    pub tol: f64,
    pub trials: u64,
    /// `a, a', b, b'` in radians.
    pub angles: [f64; 4],
    pub method: String,
    pub policy: String,
    pub perturbations: usize,
    pub apply: Vec<String>,
    pub round: bool,
    pub deterministic: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSection>,
}

impl RunConfig {
    pub fn chsh_settings(&self) -> ChshSettings {
        let [a, a2, b, b2] = self.angles;
        ChshSettings::new(a, a2, b, b2)
    }

    pub fn method(&self) -> Result<Method> {
        match self.method.as_str() {
            "exact" => Ok(Method::Exact),
            "mc" | "monte_carlo" => Ok(Method::MonteCarlo),
            other => Err(HarnessError::Config(format!("unknown method `{other}`"))),
        }
    }

    pub fn check_tol(&self) -> Result<()> {
        if self.tol > 0.0 && self.tol.is_finite() {
            Ok(())
        } else {
            Err(HarnessError::Config(format!(
                "invalid tolerance {}: must be > 0",
                self.tol
            )))
        }
    }

    /// Schedule for `stations`: `[schedule]` values first, then run options.
    pub fn schedule<S: Stations + ?Sized>(&self, stations: &S) -> Result<Schedule> {
        let sched = self.schedule.clone().unwrap_or_default();
        let trials = sched.trials.unwrap_or(self.trials);
        let [a, a2, b, b2] = self.angles;
        let list_a = sched.a.clone().unwrap_or_else(|| vec![a, a2]);
        let list_b = sched.b.clone().unwrap_or_else(|| vec![b, b2]);
        let policy = match sched.policy.as_deref().unwrap_or(&self.policy) {
            "fixed" => SettingPolicy::Fixed {
                a: list_a[0],
                b: list_b[0],
            },
            "cycle" => SettingPolicy::Cycle {
                a: list_a,
                b: list_b,
            },
            "random" | "seeded-random" => SettingPolicy::SeededRandom {
                a: list_a,
                b: list_b,
            },
            other => return Err(HarnessError::Config(format!("unknown setting policy `{other}`"))),
        };
        let mut schedule = Schedule::new(stations, trials, policy, self.seed);
        if let Some(s) = sched.seed_source {
            schedule.seeds.source = s;
        }
        if let Some(s) = sched.seed_s1 {
            schedule.seeds.s1 = s;
        }
        if let Some(s) = sched.seed_s2 {
            schedule.seeds.s2 = s;
        }
        if let Some(s) = sched.seed_settings {
            schedule.seeds.settings = s;
        }
        Ok(schedule)
    }
}

/// Flags given on the command line; `None` means "not given".
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub model: Option<String>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub trials: Option<u64>,
    pub angles: Option<Vec<f64>>,
    pub method: Option<String>,
    pub policy: Option<String>,
    pub perturbations: Option<usize>,
    pub apply: Vec<String>,
    pub round: bool,
    pub deterministic: bool,
}

/// Merges flags over an optional config file. If the file itself describes a
/// model and no model is named elsewhere, the file is the model.
pub fn resolve(command: &str, flags: Overrides, config: Option<&Path>) -> Result<RunConfig> {
    let (file, file_path): (Descriptor, Option<PathBuf>) = match config {
        Some(path) => (Descriptor::load(path)?.0, Some(path.to_path_buf())),
        None => (Descriptor::default(), None),
    };
    let run = file.run.clone().unwrap_or_default();
    let model = flags
        .model
        .or(run.model)
        .or_else(|| {
            file_path
                .filter(|_| file.has_model())
                .map(|p| p.to_string_lossy().into_owned())
        })
        .ok_or_else(|| HarnessError::Config("no model given (use --model)".to_string()))?;
    let angles = flags.angles.or(run.angles);
    let angles = match angles {
        None => ChshSettings::optimal().angles(),
        Some(v) => <[f64; 4]>::try_from(v.as_slice()).map_err(|_| {
            HarnessError::Config(format!("expected four angles a,a',b,b', got {}", v.len()))
        })?,
    };
    if angles.iter().any(|x| !x.is_finite()) {
        return Err(HarnessError::Config("angles must be finite".to_string()));
    }
    let apply = if flags.apply.is_empty() {
        run.apply.unwrap_or_default()
    } else {
        flags.apply
    };
    let cfg = RunConfig {
        command: command.to_string(),
        model,
        seed: flags.seed.or(run.seed).unwrap_or(DEFAULT_SEED),
        tol: flags.tol.or(run.tol).unwrap_or(DEFAULT_TOL),
        trials: flags.trials.or(run.trials).unwrap_or(DEFAULT_TRIALS),
        angles,
        method: flags.method.or(run.method).unwrap_or_else(|| "exact".to_string()),
        policy: flags.policy.or(run.policy).unwrap_or_else(|| "random".to_string()),
        perturbations: flags
            .perturbations
            .or(run.perturbations)
            .unwrap_or(DEFAULT_PERTURBATIONS),
        apply,
        round: flags.round || run.round.unwrap_or(false),
        deterministic: flags.deterministic,
        schedule: file.schedule,
    };
    cfg.check_tol()?;
    cfg.method()?;
    Ok(cfg)
}

/// Angle literal: a number of radians, or `[k]pi[/d]` such as `3pi/4`.
pub fn parse_angle(text: &str) -> std::result::Result<f64, String> {
    let t = text.trim();
    if let Ok(x) = t.parse::<f64>() {
        return Ok(x);
    }
    let bad = || format!("cannot parse angle `{text}`");
    let (num, den) = match t.split_once('/') {
        Some((n, d)) => (n, d.trim().parse::<f64>().map_err(|_| bad())?),
        None => (t, 1.0),
    };
    let k = num.trim().strip_suffix("pi").ok_or_else(bad)?.trim();
    let k = match k {
        "" => 1.0,
        "-" => -1.0,
        k => k.parse::<f64>().map_err(|_| bad())?,
    };
    Ok(k * PI / den)
}

pub fn parse_mode(s: &str) -> Result<FactorizationMode> {
    FactorizationMode::parse(s)
        .ok_or_else(|| HarnessError::Config(format!("unknown factorization mode `{s}`")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn angle_literals() {
        assert_eq!(parse_angle("0.5").unwrap(), 0.5);
        assert_eq!(parse_angle("pi").unwrap(), PI);
        assert_eq!(parse_angle("pi/4").unwrap(), FRAC_PI_4);
        assert!((parse_angle("3pi/4").unwrap() - 3.0 * FRAC_PI_4).abs() < 1e-15);
        assert_eq!(parse_angle("-pi").unwrap(), -PI);
        assert!(parse_angle("tau").is_err());
    }

    #[test]
    fn flags_win_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "[run]\nmodel = \"constant_plus\"\ntrials = 50\nseed = 4\n",
        )
        .unwrap();
        let cfg = resolve(
            "simulate",
            Overrides {
                seed: Some(9),
                ..Overrides::default()
            },
            Some(&path),
        )
        .unwrap();
        assert_eq!(cfg.model, "constant_plus");
        assert_eq!(cfg.trials, 50);
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn negative_tolerance_is_config_error() {
        let err = resolve(
            "check",
            Overrides {
                model: Some("constant_plus".into()),
                tol: Some(-1.0),
                ..Overrides::default()
            },
            None,
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn wrong_angle_count() {
        let err = resolve(
            "chsh",
            Overrides {
                model: Some("constant_plus".into()),
                angles: Some(vec![0.0, 1.0]),
                ..Overrides::default()
            },
            None,
        )
        .unwrap_err();
        assert!(matches!(err, HarnessError::Config(_)));
    }
}
