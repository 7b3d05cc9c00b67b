//! Experiment configuration read from TOML.
//!
//! ```toml
//! seed = 7
//! methods = ["cg", "accelerated", "subgradient"]
//!
//! [grid]
//! n = [128]
//! T = [4, 8, 16, 32]
//! p = [2.0, 4.0, inf]
//! kappa = [1.5, 2.0]
//! ```

use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    Cg,
    Accelerated,
    Subgradient,
}

impl MethodName {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodName::Cg => "cg",
            MethodName::Accelerated => "accelerated",
            MethodName::Subgradient => "subgradient",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cg" => Some(MethodName::Cg),
            "accelerated" => Some(MethodName::Accelerated),
            "subgradient" => Some(MethodName::Subgradient),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default, rename = "T")]
    pub horizon: Vec<usize>,
    #[serde(default)]
    pub p: Vec<f64>,
    #[serde(default = "default_kappa")]
    pub kappa: Vec<f64>,
    #[serde(default = "default_one", rename = "L")]
    pub lipschitz: Vec<f64>,
    #[serde(default = "default_one", rename = "R")]
    pub radius: Vec<f64>,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            n: Vec::new(),
            horizon: Vec::new(),
            p: Vec::new(),
            kappa: default_kappa(),
            lipschitz: default_one(),
            radius: default_one(),
        }
    }
}

fn default_kappa() -> Vec<f64> {
    vec![2.0]
}

fn default_one() -> Vec<f64> {
    vec![1.0]
}

fn default_methods() -> Vec<MethodName> {
    vec![MethodName::Cg]
}

fn default_polish() -> usize {
    400
}

fn default_probes() -> usize {
    10_000
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub grid: Grid,
    #[serde(default = "default_methods")]
    pub methods: Vec<MethodName>,
    #[serde(default)]
    pub seed: u64,
    /// Inner smoothing tolerance; `None` uses `1e-10 * max(1, |g(x)|)`.
    #[serde(default)]
    pub tol: Option<f64>,
    /// Iterations of each polishing run used to estimate the optimum.
    #[serde(default = "default_polish")]
    pub polish_iterations: usize,
    /// Probe directions for measuring section distortion (`p < 2` cells).
    #[serde(default = "default_probes")]
    pub probes: usize,
    /// Sampled pairs for the empirical Hölder ratio; 0 skips the check.
    #[serde(default)]
    pub membership_pairs: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            grid: Grid::default(),
            methods: default_methods(),
            seed: 0,
            tol: None,
            polish_iterations: default_polish(),
            probes: default_probes(),
            membership_pairs: 0,
            out: default_out(),
        }
    }
}

/// One point of the parameter grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub n: usize,
    pub horizon: usize,
    pub p: f64,
    pub kappa: f64,
    pub lipschitz: f64,
    pub radius: f64,
}

impl Cell {
    /// Order used for reports: `(p, kappa, n, T, L, R)`.
    pub fn key_cmp(&self, other: &Cell) -> Ordering {
        self.p
            .total_cmp(&other.p)
            .then(self.kappa.total_cmp(&other.kappa))
            .then(self.n.cmp(&other.n))
            .then(self.horizon.cmp(&other.horizon))
            .then(self.lipschitz.total_cmp(&other.lipschitz))
            .then(self.radius.total_cmp(&other.radius))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let Cell { n, horizon, p, kappa, lipschitz, radius } = *self;
        if p.is_nan() || p < 1.0 {
            bail!("p = {p} must be at least 1");
        }
        if horizon == 0 {
            bail!("T must be positive");
        }
        if p < 2.0 {
            if horizon > n / 20 {
                bail!("p = {p} < 2 needs T <= n / 20, got T = {horizon}, n = {n}");
            }
        } else if horizon > n {
            bail!("T = {horizon} exceeds n = {n}");
        }
        if !(kappa > 1.0 && kappa <= 2.0) {
            bail!("kappa = {kappa} must lie in (1, 2]");
        }
        if !(lipschitz > 0.0 && lipschitz.is_finite()) {
            bail!("L = {lipschitz} must be positive");
        }
        if !(radius > 0.0 && radius.is_finite()) {
            bail!("R = {radius} must be positive");
        }
        Ok(())
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> anyhow::Result<Self> {
        let cfg: Self = toml::from_str(text).context("parsing experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml_str(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                bail!("tol = {t} must be positive");
            }
        }
        if self.polish_iterations == 0 {
            bail!("polish_iterations must be positive");
        }
        if self.probes == 0 {
            bail!("probes must be positive");
        }
        for cell in self.cells() {
            cell.validate().with_context(|| format!("grid cell {cell:?}"))?;
        }
        Ok(())
    }

    /// Cartesian product of the grid, sorted by [`Cell::key_cmp`] with
    /// duplicates removed.
    pub fn cells(&self) -> Vec<Cell> {
        let g = &self.grid;
        let mut out = Vec::new();
        for &n in &g.n {
            for &horizon in &g.horizon {
                for &p in &g.p {
                    for &kappa in &g.kappa {
                        for &lipschitz in &g.lipschitz {
                            for &radius in &g.radius {
                                out.push(Cell { n, horizon, p, kappa, lipschitz, radius });
                            }
                        }
                    }
                }
            }
        }
        out.sort_by(|a, b| a.key_cmp(b));
        out.dedup_by(|a, b| a.key_cmp(b) == Ordering::Equal);
        out
    }

    pub fn methods_sorted(&self) -> Vec<MethodName> {
        let mut m = self.methods.clone();
        m.sort();
        m.dedup();
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_grid_with_infinity() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            seed = 3
            methods = ["subgradient", "cg"]
            [grid]
            n = [64]
            T = [4, 8]
            p = [inf, 2.0]
            "#,
        )
        .unwrap();
        let cells = cfg.cells();
        assert_eq!(cells.len(), 4);
        assert_eq!(cells[0].p, 2.0);
        assert!(cells[3].p.is_infinite());
        assert_eq!(cfg.methods_sorted(), vec![MethodName::Cg, MethodName::Subgradient]);
        assert_eq!(cells[0].kappa, 2.0);
    }

    #[test]
    fn empty_grid_has_no_cells() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert!(cfg.cells().is_empty());
    }

    #[test]
    fn rejects_invalid_cells() {
        let base = "[grid]\nn = [16]\np = [inf]\n";
        assert!(ExperimentConfig::from_toml_str(&format!("{base}T = [17]")).is_err());
        assert!(ExperimentConfig::from_toml_str("[grid]\nn = [100]\np = [1.0]\nT = [6]").is_err());
        assert!(ExperimentConfig::from_toml_str("[grid]\nn = [100]\np = [1.0]\nT = [5]").is_ok());
        assert!(ExperimentConfig::from_toml_str(&format!("{base}T = [4]\nkappa = [1.0]")).is_err());
        assert!(ExperimentConfig::from_toml_str("unknown = 1").is_err());
    }
}
