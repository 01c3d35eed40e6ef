//! Experiment configuration: one JSON document, overridable from flags.

use std::path::{Path, PathBuf};

use coded_mv::coding::{ClientRoster, Scheme};
use coded_mv::simulator::{CommModel, StragglerInjection, TimingModel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{field}: {msg}")]
pub struct ConfigError {
    pub field: String,
    pub msg: String,
}

fn err<T>(field: &str, msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError {
        field: field.into(),
        msg: msg.into(),
    })
}

/// A client as `(type index, multiplier)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientSpec {
    pub type_index: usize,
    pub multiplier: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RosterSpec {
    Homogeneous {
        k_a: usize,
        s: usize,
    },
    /// Types are assigned by multiplier rank, smallest first.
    Multipliers {
        active: Vec<usize>,
        passive: Vec<usize>,
    },
    Typed {
        active: Vec<ClientSpec>,
        passive: Vec<ClientSpec>,
    },
}

impl RosterSpec {
    pub fn build(&self) -> Result<ClientRoster, ConfigError> {
        let r = match self {
            RosterSpec::Homogeneous { k_a, s } => ClientRoster::homogeneous(*k_a, *s),
            RosterSpec::Multipliers { active, passive } => {
                ClientRoster::from_multipliers(active, passive)
            }
            RosterSpec::Typed { active, passive } => {
                let pairs =
                    |v: &[ClientSpec]| v.iter().map(|c| (c.type_index, c.multiplier)).collect();
                ClientRoster::new(pairs(active), pairs(passive))
            }
        };
        r.or_else(|e| err("roster", e.to_string()))
    }

    /// Parses the `"2,2,1,1,1|1,1"` shorthand.
    pub fn parse_shorthand(s: &str) -> Result<Self, ConfigError> {
        let (a, p) = s.split_once('|').unwrap_or((s, ""));
        let list = |t: &str| -> Result<Vec<usize>, ConfigError> {
            t.split(',')
                .map(str::trim)
                .filter(|x| !x.is_empty())
                .map(|x| {
                    x.parse()
                        .or_else(|_| err("roster", format!("bad multiplier {x:?}")))
                })
                .collect()
        };
        Ok(RosterSpec::Multipliers {
            active: list(a)?,
            passive: list(p)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MatrixSpec {
    /// `rows` is divided by the scale factor; each of the `k̄` blocks is
    /// `rows/scale × block_width`. Sparse storage when `zero_fraction > 0`.
    Synthetic {
        rows: usize,
        block_width: usize,
        #[serde(default)]
        zero_fraction: f64,
    },
    /// `.mtx` (Matrix Market) or headered CSV; columns are zero-padded to a
    /// multiple of `k̄`.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub zero_fractions: Vec<f64>,
    pub trials: usize,
    pub warmup: usize,
    pub max_workers: Option<usize>,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            zero_fractions: vec![0.95, 0.98, 0.99],
            trials: 11,
            warmup: 2,
            max_workers: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlData {
    /// Entries of `D` and `y` uniform on [-1, 1].
    Random,
    /// `D = I`; `rows` must equal `cols`.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlSpec {
    pub data: FlData,
    pub rows: usize,
    pub cols: usize,
    pub roster: RosterSpec,
    pub steps: usize,
    /// Defaults to half the largest stepsize the guard admits.
    pub stepsize: Option<f64>,
    pub stragglers_per_round: usize,
    /// Largest tolerated relative deviation from uncoded descent under `--check`.
    pub tolerance: f64,
}

impl Default for FlSpec {
    fn default() -> Self {
        Self {
            data: FlData::Random,
            rows: 60,
            cols: 21,
            roster: RosterSpec::Homogeneous { k_a: 7, s: 2 },
            steps: 100,
            stepsize: None,
            stragglers_per_round: 2,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub schemes: Vec<Scheme>,
    pub roster: RosterSpec,
    pub matrix: MatrixSpec,
    /// Divides the row count of synthetic matrices.
    pub scale: usize,
    pub timing: TimingModel,
    pub comm: CommModel,
    /// Simulated rounds per scheme.
    pub trials: usize,
    pub benchmark: Option<BenchmarkSpec>,
    pub fl: FlSpec,
    pub out_dir: PathBuf,
    /// Treat any undecodable round as an error.
    pub require_success: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            schemes: Scheme::ALL.to_vec(),
            roster: RosterSpec::Homogeneous { k_a: 10, s: 2 },
            matrix: MatrixSpec::Synthetic {
                rows: 1200,
                block_width: 10,
                zero_fraction: 0.0,
            },
            scale: 10,
            timing: TimingModel::default(),
            comm: CommModel::default(),
            trials: 5,
            benchmark: None,
            fl: FlSpec::default(),
            out_dir: PathBuf::from("out"),
            require_success: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(bytes: &[u8]) -> Result<Self, ConfigError> {
        serde_json::from_slice(bytes).or_else(|e| err("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let bytes =
            std::fs::read(path).or_else(|e| err("config", format!("{}: {e}", path.display())))?;
        Self::from_json(&bytes)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(
            serde_json::to_vec(self).expect("config serializes"),
        ))
    }

    /// Row count after scaling, for synthetic matrices.
    pub fn scaled_rows(&self) -> Option<usize> {
        match self.matrix {
            MatrixSpec::Synthetic { rows, .. } => Some(rows / self.scale.max(1)),
            MatrixSpec::File { .. } => None,
        }
    }

    /// Checks every field; the first problem is returned.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.roster.build()?;
        if self.schemes.is_empty() {
            return err("schemes", "at least one scheme is required");
        }
        if self.scale == 0 {
            return err("scale", "must be at least 1");
        }
        match &self.matrix {
            MatrixSpec::Synthetic {
                rows,
                block_width,
                zero_fraction,
            } => {
                if rows / self.scale == 0 {
                    return err(
                        "matrix.rows",
                        format!("{rows} rows scale to zero at scale {}", self.scale),
                    );
                }
                if *block_width == 0 {
                    return err("matrix.block_width", "must be at least 1");
                }
                if !(0.0..1.0).contains(zero_fraction) {
                    return err(
                        "matrix.zero_fraction",
                        format!("{zero_fraction} outside [0, 1)"),
                    );
                }
            }
            MatrixSpec::File { path } => {
                if path.as_os_str().is_empty() {
                    return err("matrix.path", "empty path");
                }
            }
        }
        self.timing.validate().or_else(|m| err("timing", m))?;
        self.comm.validate().or_else(|m| err("comm", m))?;
        if let Some(b) = &self.benchmark {
            if !matches!(self.matrix, MatrixSpec::Synthetic { .. }) {
                return err("benchmark", "requires a synthetic matrix");
            }
            if let Some(z) = b.zero_fractions.iter().find(|z| !(0.0..1.0).contains(*z)) {
                return err("benchmark.zero_fractions", format!("{z} outside [0, 1)"));
            }
            if b.max_workers == Some(0) {
                return err("benchmark.max_workers", "must be at least 1");
            }
        }
        let fl = &self.fl;
        let fl_roster = fl.roster.build().map_err(|e| ConfigError {
            field: "fl.roster".into(),
            msg: e.msg,
        })?;
        if fl.rows == 0 || fl.cols == 0 {
            return err("fl", "rows and cols must be positive");
        }
        if fl.data == FlData::Identity && fl.rows != fl.cols {
            return err("fl.data", "identity data needs rows == cols");
        }
        if let Some(mu) = fl.stepsize {
            if !(mu >= 0.0 && mu.is_finite()) {
                return err("fl.stepsize", format!("{mu} must be finite and >= 0"));
            }
        }
        if fl.stragglers_per_round > fl_roster.num_clients() {
            return err("fl.stragglers_per_round", "exceeds the number of clients");
        }
        if fl.tolerance.is_nan() || fl.tolerance <= 0.0 {
            return err("fl.tolerance", "must be positive");
        }
        Ok(())
    }

    pub fn fl_timing(&self) -> TimingModel {
        self.timing
            .clone()
            .with_stragglers(StragglerInjection::RandomCount {
                count: self.fl.stragglers_per_round,
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!(
            ExperimentConfig::from_json(c.to_json().as_bytes()).unwrap(),
            c
        );
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let c = ExperimentConfig::from_json(
            br#"{"seed": 9, "roster": {"kind": "homogeneous", "k_a": 18, "s": 2}}"#,
        )
        .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.trials, 5);
        assert_eq!(c.roster.build().unwrap().num_clients(), 20);
    }

    #[test]
    fn named_errors() {
        let c = ExperimentConfig {
            roster: RosterSpec::Homogeneous { k_a: 2, s: 2 },
            ..Default::default()
        };
        let e = c.validate().unwrap_err();
        assert_eq!(e.field, "roster");
        assert!(e.msg.contains("s < k_A"), "{}", e.msg);

        assert_eq!(
            ExperimentConfig::from_json(br#"{"sead": 1}"#)
                .unwrap_err()
                .field,
            "config"
        );
        let c = ExperimentConfig {
            scale: 0,
            ..Default::default()
        };
        assert_eq!(c.validate().unwrap_err().field, "scale");
        let mut c = ExperimentConfig::default();
        c.comm.link_latency = -1.0;
        assert_eq!(c.validate().unwrap_err().field, "comm");
    }

    #[test]
    fn shorthand() {
        let r = RosterSpec::parse_shorthand("2,2,1,1,1|1,1").unwrap();
        let roster = r.build().unwrap();
        assert_eq!((roster.num_active(), roster.num_passive()), (5, 2));
        assert!(RosterSpec::parse_shorthand("2,x").is_err());
    }
}
