//! Experiment configuration, readable from TOML and echoed into every report.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use afn_core::params::{ParamOverrides, DEFAULT_CONST_K, DEFAULT_CONST_M, DEFAULT_CONST_N, DEFAULT_C_N};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Where the dataset comes from. Written as `gaussian`, `clustered`,
/// `attack` or `file:<path>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DatasetKind {
    /// i.i.d. standard normal coordinates.
    Gaussian,
    /// Two unit-variance blobs centred at `+sigma 1` and `-sigma 1`.
    Clustered,
    /// `n/2` copies each of `-1` and `+1`.
    Attack,
    /// `AFND` binary or CSV, detected by the magic bytes.
    File(PathBuf),
}

impl FromStr for DatasetKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(DatasetKind::Gaussian),
            "clustered" => Ok(DatasetKind::Clustered),
            "attack" => Ok(DatasetKind::Attack),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(DatasetKind::File(PathBuf::from(p))),
                _ => Err(HarnessError::Config(format!(
                    "unknown dataset {s:?}; expected gaussian, clustered, attack or file:<path>"
                ))),
            },
        }
    }
}

impl TryFrom<String> for DatasetKind {
    type Error = HarnessError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DatasetKind> for String {
    fn from(k: DatasetKind) -> String {
        k.to_string()
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetKind::Gaussian => f.write_str("gaussian"),
            DatasetKind::Clustered => f.write_str("clustered"),
            DatasetKind::Attack => f.write_str("attack"),
            DatasetKind::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    #[default]
    Exact,
}

/// How `bench` draws its oblivious queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    /// `ct + N(0, I)`.
    #[default]
    Gaussian,
    /// Uniform in the non-trivial ball `B(ct, R)`.
    Ball,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub d: usize,
    pub c: f64,
    pub eps: f64,
    pub seed: u64,
    pub trials: usize,
    pub const_n: f64,
    pub const_k: f64,
    pub const_m: f64,
    pub c_n: usize,
    /// Direct overrides of the derived counts.
    pub n_proj: Option<usize>,
    pub k: Option<usize>,
    pub m: Option<usize>,
    pub oracle: OracleKind,
    pub dataset: DatasetKind,
    /// Blob offset for the clustered dataset.
    pub cluster_sigma: f64,
    pub query_dist: QueryKind,
    pub shortcut_enabled: bool,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: 1024,
            d: 64,
            c: 2.0,
            eps: 0.0,
            seed: 0,
            trials: 1000,
            const_n: DEFAULT_CONST_N,
            const_k: DEFAULT_CONST_K,
            const_m: DEFAULT_CONST_M,
            c_n: DEFAULT_C_N,
            n_proj: None,
            k: None,
            m: None,
            oracle: OracleKind::Exact,
            dataset: DatasetKind::Gaussian,
            cluster_sigma: 3.0,
            query_dist: QueryKind::Gaussian,
            shortcut_enabled: true,
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(HarnessError::file(path))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn overrides(&self) -> ParamOverrides {
        ParamOverrides {
            n_proj: self.n_proj,
            k: self.k,
            m: self.m,
            const_n: Some(self.const_n),
            const_k: Some(self.const_k),
            const_m: Some(self.const_m),
            c_n: Some(self.c_n),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(HarnessError::Config("d must be at least 1".into()));
        }
        if !matches!(self.dataset, DatasetKind::File(_)) && self.n < 2 {
            return Err(HarnessError::Config("n must be at least 2".into()));
        }
        if !(self.c > 1.0 && self.c.is_finite()) {
            return Err(HarnessError::Config(format!("c must exceed 1, got {}", self.c)));
        }
        if !(0.0..1.0).contains(&self.eps) {
            return Err(HarnessError::Config(format!("eps must lie in [0, 1), got {}", self.eps)));
        }
        if self.eps != 0.0 {
            return Err(HarnessError::Config("only the exact oracle is available; eps must be 0".into()));
        }
        if self.trials == 0 {
            return Err(HarnessError::Config("trials must be at least 1".into()));
        }
        Ok(())
    }
}
