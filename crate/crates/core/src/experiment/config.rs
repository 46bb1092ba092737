//! Experiment parameters and their text-file form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

/// Contents of an experiment config file. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub scenario: Option<String>,
    pub alpha: Option<OneOrMany<f64>>,
    pub theta: Option<f64>,
    pub m: Option<OneOrMany<u32>>,
    pub n_list: Option<Vec<usize>>,
    pub replications: Option<usize>,
    pub dt: Option<f64>,
    pub dt_pde: Option<f64>,
    pub t_end: Option<f64>,
    pub snapshot_times: Option<Vec<f64>>,
    pub grid_n: Option<usize>,
    pub domain_length: Option<f64>,
    pub seed: Option<u64>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).context(format!("config {}", path.display())))?;
        Self::parse(&text).map_err(|e| e.context(format!("config {}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub alpha: Vec<f64>,
    pub theta: f64,
    pub m: Vec<u32>,
    pub n_list: Vec<usize>,
    pub replications: usize,
    pub dt: f64,
    pub dt_pde: f64,
    pub t_end: f64,
    /// Empty means `[t_end]`.
    pub snapshot_times: Vec<f64>,
    pub grid_n: usize,
    pub domain_length: f64,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: "fractional_burgers".into(),
            alpha: vec![1.5],
            theta: 0.25,
            m: vec![1, 2],
            n_list: (8..=14).map(|k| 1usize << k).collect(),
            replications: 32,
            dt: 1e-3,
            dt_pde: 2.5e-4,
            t_end: 0.5,
            snapshot_times: Vec::new(),
            grid_n: 1024,
            domain_length: 20.0,
            seed: 20240601,
        }
    }
}

impl ExperimentConfig {
    /// Defaults overridden by the keys present in `file`.
    pub fn from_file(file: &ConfigFile) -> Self {
        let d = Self::default();
        Self {
            scenario: file.scenario.clone().unwrap_or(d.scenario),
            alpha: file.alpha.as_ref().map_or(d.alpha, OneOrMany::to_vec),
            theta: file.theta.unwrap_or(d.theta),
            m: file.m.as_ref().map_or(d.m, OneOrMany::to_vec),
            n_list: file.n_list.clone().unwrap_or(d.n_list),
            replications: file.replications.unwrap_or(d.replications),
            dt: file.dt.unwrap_or(d.dt),
            dt_pde: file.dt_pde.unwrap_or(d.dt_pde),
            t_end: file.t_end.unwrap_or(d.t_end),
            snapshot_times: file.snapshot_times.clone().unwrap_or(d.snapshot_times),
            grid_n: file.grid_n.unwrap_or(d.grid_n),
            domain_length: file.domain_length.unwrap_or(d.domain_length),
            seed: file.seed.unwrap_or(d.seed),
        }
    }

    /// Snapshot times with the default applied, sorted.
    pub fn snapshots(&self) -> Vec<f64> {
        let mut s = if self.snapshot_times.is_empty() { vec![self.t_end] } else { self.snapshot_times.clone() };
        s.sort_by(f64::total_cmp);
        s.dedup();
        s
    }

    /// Checks that do not depend on the scenario.
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.alpha.is_empty() {
            return Err(Error::invalid("alpha list is empty"));
        }
        if let Some(a) = self.alpha.iter().find(|a| !(**a > 1.0 && **a <= 2.0)) {
            return Err(Error::invalid(format!("alpha must lie in (1, 2], got {a}")));
        }
        let cap = 1.0 / (2.0 * dim as f64);
        if !(self.theta > 0.0 && self.theta < cap) {
            return Err(Error::invalid(format!("theta must lie in (0, {cap}), got {}", self.theta)));
        }
        if self.m.is_empty() || self.m.contains(&0) {
            return Err(Error::invalid("moment orders must be >= 1"));
        }
        if self.n_list.is_empty() || self.n_list[0] == 0 {
            return Err(Error::invalid("N list must be nonempty and positive"));
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!("N list must be strictly increasing, got {:?}", self.n_list)));
        }
        if self.replications == 0 {
            return Err(Error::invalid("replications must be >= 1"));
        }
        if !(self.dt > 0.0 && self.dt_pde > 0.0 && self.t_end > 0.0) {
            return Err(Error::invalid("dt, dt_pde and t_end must be positive"));
        }
        if !(self.domain_length > 0.0 && self.domain_length.is_finite()) {
            return Err(Error::invalid("domain_length must be positive"));
        }
        for &t in &self.snapshot_times {
            if !(t >= 0.0 && t <= self.t_end) {
                return Err(Error::invalid(format!("snapshot time {t} outside [0, {}]", self.t_end)));
            }
        }
        Ok(())
    }
}
