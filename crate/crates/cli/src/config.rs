//! Flat `key = value` configuration. Blank lines and lines starting with `#`
//! are ignored. Command-line flags use the same keys and win over the file.

use std::path::PathBuf;

use serde::Serialize;
use stablelab::array::Variant;
use stablelab::simulate::{SmallMode, DEFAULT_BUDGET, DEFAULT_EPSILON_TAIL};

use crate::RunError;

/// Every key the runner accepts, in the order reports list them.
pub const KEYS: &[&str] = &[
    "alpha",
    "n_grid",
    "replicas",
    "variant",
    "mode",
    "parts",
    "master_seed",
    "epsilon_tail",
    "budget_draws",
    "output_dir",
    "workers",
    "tail_draws",
    "v_replicas",
    "stages",
    "k_max",
    "alphabet_cap",
    "prob_bits",
    "tower_n",
    "orbits",
    "oracle_samples",
    "validation_samples",
    "gof_input",
    "gof_column",
    "gof_sigma",
    "test_corrupt_z",
];

/// Short spellings accepted in files and on the command line.
pub fn canonical_key(key: &str) -> &str {
    match key {
        "n" => "n_grid",
        "seed" => "master_seed",
        other => other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PartsChoice {
    All,
    Medium,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub alpha: f64,
    pub n_grid: Vec<u64>,
    pub replicas: u64,
    pub variant: Variant,
    pub mode: SmallMode,
    pub parts: PartsChoice,
    pub master_seed: u64,
    pub epsilon_tail: f64,
    pub budget_draws: u128,
    /// Where artifacts go. Left out of reports so that runs written to
    /// different places stay byte-identical.
    #[serde(skip)]
    pub output_dir: PathBuf,
    /// Worker threads, `0` for the machine default. Left out of reports for
    /// the same reason.
    #[serde(skip)]
    pub workers: usize,
    pub tail_draws: u64,
    pub v_replicas: u64,
    pub stages: usize,
    pub k_max: u32,
    pub alphabet_cap: usize,
    pub prob_bits: u32,
    pub tower_n: u64,
    pub orbits: usize,
    pub oracle_samples: usize,
    pub validation_samples: usize,
    pub gof_input: Option<PathBuf>,
    pub gof_column: String,
    pub gof_sigma: Option<f64>,
    pub test_corrupt_z: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            n_grid: vec![1 << 8, 1 << 12, 1 << 16],
            replicas: 10_000,
            variant: Variant::Z,
            mode: SmallMode::Coupled,
            parts: PartsChoice::All,
            master_seed: 42,
            epsilon_tail: DEFAULT_EPSILON_TAIL,
            budget_draws: DEFAULT_BUDGET,
            output_dir: PathBuf::from("out"),
            workers: 0,
            tail_draws: 1_000_000,
            v_replicas: 200,
            stages: 7,
            k_max: 3,
            alphabet_cap: 9,
            prob_bits: 12,
            tower_n: 8,
            orbits: 1000,
            oracle_samples: 100_000,
            validation_samples: 100_000,
            gof_input: None,
            gof_column: "total".into(),
            gof_sigma: None,
            test_corrupt_z: false,
        }
    }
}

fn num<T: std::str::FromStr>(value: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse::<T>().map_err(|e| format!("{e}: {value:?}"))
}

/// Integers may be written as `1e6` or `2^16`.
fn count(value: &str) -> Result<u128, String> {
    let v = value.trim();
    if let Some((b, e)) = v.split_once('^') {
        let b: u128 = num(b)?;
        let e: u32 = num(e)?;
        return b.checked_pow(e).ok_or_else(|| format!("{v} overflows"));
    }
    if let Ok(x) = v.parse::<u128>() {
        return Ok(x);
    }
    let f: f64 = num(v)?;
    if f >= 0.0 && f.fract() == 0.0 && f < 1e38 {
        Ok(f as u128)
    } else {
        Err(format!("expected a nonnegative integer, got {v:?}"))
    }
}

fn small<T: TryFrom<u128>>(value: &str) -> Result<T, String> {
    T::try_from(count(value)?).map_err(|_| format!("{value:?} out of range"))
}

fn boolean(value: &str) -> Result<bool, String> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        v => Err(format!("expected true or false, got {v:?}")),
    }
}

impl RunConfig {
    /// Applies one `key = value` pair; `origin` says where it came from.
    pub fn set(&mut self, origin: &str, key: &str, value: &str) -> Result<(), RunError> {
        let key = canonical_key(key.trim());
        let value = value.trim();
        let res: Result<(), String> = (|| {
            match key {
                "alpha" => self.alpha = num(value)?,
                "n_grid" => {
                    self.n_grid = value
                        .split(',')
                        .filter(|s| !s.trim().is_empty())
                        .map(small::<u64>)
                        .collect::<Result<_, _>>()?
                }
                "replicas" => self.replicas = small(value)?,
                "variant" => self.variant = value.parse().map_err(|e| format!("{e}"))?,
                "mode" => self.mode = value.parse().map_err(|e| format!("{e}"))?,
                "parts" => {
                    self.parts = match value {
                        "all" => PartsChoice::All,
                        "medium" => PartsChoice::Medium,
                        v => return Err(format!("expected all or medium, got {v:?}")),
                    }
                }
                "master_seed" => self.master_seed = small(value)?,
                "epsilon_tail" => self.epsilon_tail = num(value)?,
                "budget_draws" => self.budget_draws = count(value)?,
                "output_dir" => self.output_dir = PathBuf::from(value),
                "workers" => self.workers = small(value)?,
                "tail_draws" => self.tail_draws = small(value)?,
                "v_replicas" => self.v_replicas = small(value)?,
                "stages" => self.stages = small(value)?,
                "k_max" => self.k_max = small(value)?,
                "alphabet_cap" => self.alphabet_cap = small(value)?,
                "prob_bits" => self.prob_bits = small(value)?,
                "tower_n" => self.tower_n = small(value)?,
                "orbits" => self.orbits = small(value)?,
                "oracle_samples" => self.oracle_samples = small(value)?,
                "validation_samples" => self.validation_samples = small(value)?,
                "gof_input" => self.gof_input = Some(PathBuf::from(value)),
                "gof_column" => self.gof_column = value.to_string(),
                "gof_sigma" => self.gof_sigma = Some(num(value)?),
                "test_corrupt_z" => self.test_corrupt_z = boolean(value)?,
                _ => return Err("unknown key".into()),
            }
            Ok(())
        })();
        res.map_err(|message| RunError::Config {
            origin: origin.to_string(),
            key: key.to_string(),
            message,
        })
    }

    /// Applies every line of a config file.
    pub fn apply_text(&mut self, text: &str) -> Result<(), RunError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let origin = format!("line {}", i + 1);
            let Some((key, value)) = line.split_once('=') else {
                return Err(RunError::Config {
                    origin,
                    key: line.to_string(),
                    message: "expected key = value".into(),
                });
            };
            self.set(&origin, key, value)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |key: &str, message: String| {
            Err(RunError::Config {
                origin: "validation".into(),
                key: key.into(),
                message,
            })
        };
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return bad("alpha", format!("{} outside (0,2)", self.alpha));
        }
        if self.n_grid.is_empty() {
            return bad("n_grid", "must not be empty".into());
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("n_grid", "must be strictly increasing".into());
        }
        if self.n_grid[0] < 2 {
            return bad("n_grid", "entries must be at least 2".into());
        }
        if self.replicas == 0 {
            return bad("replicas", "must be at least 1".into());
        }
        if !(self.epsilon_tail > 0.0 && self.epsilon_tail < 1.0) {
            return bad("epsilon_tail", format!("{} outside (0,1)", self.epsilon_tail));
        }
        if self.tail_draws == 0 || self.v_replicas == 0 || self.orbits == 0 || self.oracle_samples == 0 {
            return bad("tail_draws", "sample counts must be positive".into());
        }
        if self.tower_n == 0 {
            return bad("tower_n", "must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags() {
        let mut c = RunConfig::default();
        c.apply_text("# comment\nalpha = 1.5\n\nn = 256, 4096\nreplicas=1e3\nseed = 7\n")
            .unwrap();
        c.set("flag --alpha", "alpha", "0.5").unwrap();
        assert_eq!(c.alpha, 0.5);
        assert_eq!(c.n_grid, vec![256, 4096]);
        assert_eq!(c.replicas, 1000);
        assert_eq!(c.master_seed, 7);
        c.set("flag", "n_grid", "2^16").unwrap();
        assert_eq!(c.n_grid, vec![65536]);
    }

    #[test]
    fn errors_name_line_and_key() {
        let mut c = RunConfig::default();
        let e = c.apply_text("alpha = 1\nreplicas = many\n").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("line 2") && msg.contains("replicas"), "{msg}");
        let e = c.apply_text("bogus = 1\n").unwrap_err().to_string();
        assert!(e.contains("line 1") && e.contains("bogus"), "{e}");
        let e = c.apply_text("no equals sign\n").unwrap_err().to_string();
        assert!(e.contains("line 1"), "{e}");
    }

    #[test]
    fn validation() {
        let c = RunConfig {
            replicas: 0,
            ..RunConfig::default()
        };
        assert!(c.validate().unwrap_err().to_string().contains("replicas"));
        let c = RunConfig {
            n_grid: vec![4096, 256],
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(RunConfig::default().validate().is_ok());
    }

    #[test]
    fn every_key_is_settable() {
        let samples = [
            ("alpha", "1"),
            ("n_grid", "256"),
            ("variant", "X"),
            ("mode", "g_only"),
            ("parts", "medium"),
            ("output_dir", "x"),
            ("gof_input", "x.csv"),
            ("gof_column", "part_M"),
            ("gof_sigma", "1.0"),
            ("test_corrupt_z", "true"),
        ];
        for key in KEYS {
            let value = samples.iter().find(|(k, _)| k == key).map_or("3", |(_, v)| *v);
            RunConfig::default().set("test", key, value).unwrap();
        }
    }
}
