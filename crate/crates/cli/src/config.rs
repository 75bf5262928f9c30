//! Flat `key = value` configuration with dotted keys.
//!
//! One pair per line (or several separated by `;`), `#` starts a comment.
//! Later values win, so `--set` overrides are applied after the file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use bteb_core::eb_estimator::QZeroConvention;
use bteb_core::prior::{Prior, PriorKind};
use bteb_core::risk_engine::ExperimentConfig;

use crate::CliError;

const KEYS: &[&str] = &[
    "r",
    "n",
    "reps",
    "seed",
    "grid_m",
    "tail_eps",
    "cap",
    "qzero_convention",
    "prior.kind",
    "prior.a",
    "prior.b",
    "prior.v",
    "prior.w",
    "prior.atoms",
];

/// Raw pairs, validated against the known key set.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    pairs: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = RawConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("");
            for item in line.split(';') {
                let item = item.trim();
                if item.is_empty() {
                    continue;
                }
                let (k, v) = item.split_once('=').ok_or_else(|| {
                    CliError::Usage(format!("config line {}: expected key=value, got '{item}'", lineno + 1))
                })?;
                cfg.set(k.trim(), v.trim())?;
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        if !KEYS.contains(&key) {
            return Err(CliError::Usage(format!("unknown config key '{key}'")));
        }
        self.pairs.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies `key=value` override strings.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<(), CliError> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got '{o}'")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.pairs
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| CliError::Usage(format!("bad value for {key}: '{v}'")))
            })
            .transpose()
    }
}

/// Fully resolved settings shared by every subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub r: u64,
    pub prior: Prior,
    pub n: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub grid_m: usize,
    pub tail_eps: f64,
    pub cap: Option<u64>,
    pub qzero: QZeroConvention,
}

impl Default for Settings {
    fn default() -> Self {
        let study = ExperimentConfig::study(100);
        Settings {
            r: study.r,
            prior: study.prior,
            n: vec![100, 500],
            reps: study.reps,
            seed: study.seed,
            grid_m: study.grid_m,
            tail_eps: study.tail_eps,
            cap: None,
            qzero: study.qzero,
        }
    }
}

fn parse_prior(raw: &RawConfig, default: &Prior) -> Result<Prior, CliError> {
    let kind: Option<String> = raw.get("prior.kind")?;
    let prior = match kind.as_deref() {
        None => {
            if ["prior.a", "prior.b", "prior.v", "prior.w", "prior.atoms"]
                .iter()
                .any(|k| raw.pairs.contains_key(*k))
            {
                return Err(CliError::Usage("prior parameters given without prior.kind".into()));
            }
            return Ok(default.clone());
        }
        Some("uniform") => {
            let a = raw.get("prior.a")?.unwrap_or(0.0);
            let b = raw.get("prior.b")?.unwrap_or(1.0);
            Prior::uniform(a, b)
        }
        Some("beta") => {
            let v = raw.get("prior.v")?.ok_or_else(|| CliError::Usage("beta prior needs prior.v".into()))?;
            let w = raw.get("prior.w")?.ok_or_else(|| CliError::Usage("beta prior needs prior.w".into()))?;
            Prior::beta(v, w)
        }
        Some("grid") => {
            let spec: String = raw
                .get("prior.atoms")?
                .ok_or_else(|| CliError::Usage("grid prior needs prior.atoms".into()))?;
            let atoms = spec
                .split(',')
                .map(|atom| {
                    let (t, w) = atom
                        .split_once(':')
                        .ok_or_else(|| CliError::Usage(format!("grid atom '{atom}' is not theta:weight")))?;
                    let t: f64 = t.trim().parse().map_err(|_| CliError::Usage(format!("bad atom '{atom}'")))?;
                    let w: f64 = w.trim().parse().map_err(|_| CliError::Usage(format!("bad atom '{atom}'")))?;
                    Ok((t, w))
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            Prior::grid(atoms)
        }
        Some(other) => {
            return Err(CliError::Usage(format!(
                "unknown prior.kind '{other}' (expected uniform, beta or grid)"
            )))
        }
    };
    prior.map_err(|e| CliError::Usage(e.to_string()))
}

impl Settings {
    pub fn resolve(raw: &RawConfig) -> Result<Self, CliError> {
        let d = Settings::default();
        let n = match raw.pairs.get("n") {
            None => d.n,
            Some(list) => list
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<usize>()
                        .map_err(|_| CliError::Usage(format!("bad value for n: '{list}'")))
                })
                .collect::<Result<Vec<_>, _>>()?,
        };
        let qzero = match raw.pairs.get("qzero_convention") {
            None => d.qzero,
            Some(s) => s.parse().map_err(|e: bteb_core::Error| CliError::Usage(e.to_string()))?,
        };
        let s = Settings {
            r: raw.get("r")?.unwrap_or(d.r),
            prior: parse_prior(raw, &d.prior)?,
            n,
            reps: raw.get("reps")?.unwrap_or(d.reps),
            seed: raw.get("seed")?.unwrap_or(d.seed),
            grid_m: raw.get("grid_m")?.unwrap_or(d.grid_m),
            tail_eps: raw.get("tail_eps")?.unwrap_or(d.tail_eps),
            cap: raw.get("cap")?,
            qzero,
        };
        s.validate()?;
        Ok(s)
    }

    /// Every experiment the settings describe must pass the engine's checks
    /// before anything runs.
    fn validate(&self) -> Result<(), CliError> {
        if self.n.is_empty() {
            return Err(CliError::Usage("n needs at least one value".into()));
        }
        for &n in &self.n {
            self.experiment(n)
                .validate()
                .map_err(|e| CliError::Usage(e.to_string()))?;
        }
        Ok(())
    }

    pub fn experiment(&self, n: usize) -> ExperimentConfig {
        ExperimentConfig {
            r: self.r,
            prior: self.prior.clone(),
            n,
            reps: self.reps,
            seed: self.seed,
            grid_m: self.grid_m,
            tail_eps: self.tail_eps,
            qzero: self.qzero,
            cap: self.cap,
        }
    }

    /// The settings as `key=value` pairs joined by `; `, parseable by
    /// [`RawConfig::parse`].
    pub fn render(&self) -> String {
        let mut out = String::new();
        let n: Vec<String> = self.n.iter().map(|v| v.to_string()).collect();
        let _ = write!(out, "r={}; n={}; reps={}; seed={}; grid_m={}; tail_eps={:e}; ",
            self.r, n.join(","), self.reps, self.seed, self.grid_m, self.tail_eps);
        if let Some(cap) = self.cap {
            let _ = write!(out, "cap={cap}; ");
        }
        let _ = write!(out, "qzero_convention={}; ", self.qzero);
        match self.prior.kind() {
            PriorKind::Uniform { a, b } => {
                let _ = write!(out, "prior.kind=uniform; prior.a={a:?}; prior.b={b:?}");
            }
            PriorKind::Beta { v, w } => {
                let _ = write!(out, "prior.kind=beta; prior.v={v:?}; prior.w={w:?}");
            }
            PriorKind::Grid(atoms) => {
                let atoms: Vec<String> = atoms.iter().map(|(t, w)| format!("{t:?}:{w:?}")).collect();
                let _ = write!(out, "prior.kind=grid; prior.atoms={}", atoms.join(","));
            }
        }
        out
    }
}
