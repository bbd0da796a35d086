//! Run configuration (TOML).
//!
//! ```toml
//! reference = "100110"
//!
//! [model]
//! kind = "siam"
//! eps_c = -0.5
//! U = 1.0
//! eps_d = [-1.0, 1.0]
//! V = [1.0, 1.0]
//!
//! [[active]]
//! label = "emb"
//! occupied = [0]
//! virtuals = [1]
//!
//! [solver]
//! max_iter = 500
//! tol = 1e-10
//! mixing = 1.0
//! acceleration = { kind = "diis", depth = 6 }
//!
//! [grid]
//! start = -4.0
//! stop = 4.0
//! step = 0.01
//! eta = 0.05
//! ```

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ccgf::FrequencyGrid;
use crate::ccsolver::SolverConfig;
use crate::cluster::{ActiveSpace, SubsystemSpec};
use crate::error::{Error, Result};
use crate::fockspace::{Determinant, SecondQuantizedOp};
use crate::model::{CompositeSpec, Siam, SiamParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelConfig {
    Siam(SiamParams),
    Composite(CompositeSpec),
}

impl ModelConfig {
    pub fn n_orbitals(&self) -> Result<usize> {
        Ok(match self {
            ModelConfig::Siam(p) => Siam::new(p.clone())?.n_orbitals(),
            ModelConfig::Composite(c) => {
                Siam::new(c.a.clone())?.n_orbitals() + Siam::new(c.b.clone())?.n_orbitals()
            }
        })
    }

    pub fn hamiltonian(&self) -> Result<SecondQuantizedOp> {
        match self {
            ModelConfig::Siam(p) => Ok(Siam::new(p.clone())?.hamiltonian()),
            ModelConfig::Composite(c) => Ok(c.build()?.hamiltonian),
        }
    }

    /// The composite reference, when the model defines one.
    fn implied_reference(&self) -> Result<Option<Determinant>> {
        match self {
            ModelConfig::Siam(_) => Ok(None),
            ModelConfig::Composite(c) => Ok(Some(c.build()?.reference)),
        }
    }

    /// Impurity spin-orbitals (of subsystem A for a composite).
    pub fn impurity_orbitals(&self) -> Result<(usize, usize)> {
        use crate::fockspace::Spin;
        let p = match self {
            ModelConfig::Siam(p) => p,
            ModelConfig::Composite(c) => &c.a,
        };
        let s = Siam::new(p.clone())?;
        Ok((s.impurity(Spin::Up), s.impurity(Spin::Down)))
    }

    /// Same model with the impurity interaction replaced.
    pub fn with_u(&self, u: f64, symmetric: bool) -> Self {
        let set = |p: &SiamParams| {
            let mut p = p.clone();
            p.u = u;
            if symmetric {
                p.eps_c = -u / 2.0;
            }
            p
        };
        match self {
            ModelConfig::Siam(p) => ModelConfig::Siam(set(p)),
            ModelConfig::Composite(c) => ModelConfig::Composite(CompositeSpec { a: set(&c.a), ..c.clone() }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsystemConfig {
    pub label: String,
    pub occupied: Vec<usize>,
    pub virtuals: Vec<usize>,
    /// Probe orbitals of this center for Green's function blocks.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
    pub eta: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { start: -4.0, stop: 4.0, step: 0.01, eta: 0.05 }
    }
}

impl GridConfig {
    pub fn grid(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::uniform(self.start, self.stop, self.step, self.eta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OutputConfig {
    #[serde(default)]
    pub format: Format,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    /// Add one external subsystem per maximal external signature after the
    /// configured ones.
    #[serde(default = "enabled")]
    pub incremental: bool,
}

fn enabled() -> bool {
    true
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self { incremental: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub u_values: Vec<f64>,
    /// Keep `eps_c = -U/2`.
    #[serde(default)]
    pub symmetric: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { u_values: vec![0.5, 1.0, 2.0, 4.0], symmetric: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    /// Occupation bitstring; implied by a composite model when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub electrons: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_max: Option<usize>,
    #[serde(default)]
    pub active: Vec<SubsystemConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    /// Three-site model with the embedded pair `{0} -> {1}`.
    pub fn three_site() -> Self {
        Self {
            model: ModelConfig::Siam(SiamParams::three_site()),
            reference: Some("100110".into()),
            electrons: Some(3),
            rank_max: None,
            active: vec![SubsystemConfig { label: "emb".into(), occupied: vec![0], virtuals: vec![1], probes: vec![0, 1] }],
            solver: SolverConfig::default(),
            grid: GridConfig::default(),
            flow: FlowConfig::default(),
            sweep: SweepConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn reference(&self) -> Result<Determinant> {
        let implied = self.model.implied_reference().map_err(config_error)?;
        match (&self.reference, implied) {
            (Some(s), implied) => {
                let d = Determinant::parse(s).map_err(config_error)?;
                if implied.is_some_and(|i| i != d) {
                    return Err(Error::Config("reference disagrees with the composite subsystem references".into()));
                }
                Ok(d)
            }
            (None, Some(d)) => Ok(d),
            (None, None) => Err(Error::Config("a reference occupation string is required".into())),
        }
    }

    pub fn subsystems(&self) -> Result<Vec<SubsystemSpec>> {
        let r = self.reference()?;
        self.active
            .iter()
            .map(|a| Ok(SubsystemSpec::new(a.label.clone(), ActiveSpace::new(&r, &a.occupied, &a.virtuals).map_err(config_error)?)))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.model.n_orbitals().map_err(config_error)?;
        let r = self.reference()?;
        if r.n_orbitals() != m {
            return Err(Error::Config(format!("reference has {} orbitals, model has {m}", r.n_orbitals())));
        }
        if let Some(n) = self.electrons {
            if r.n_electrons() != n {
                return Err(Error::Config(format!("reference holds {} electrons, config declares {n}", r.n_electrons())));
            }
        }
        for a in &self.active {
            if let Some(p) = a.occupied.iter().chain(&a.virtuals).chain(&a.probes).find(|&&p| p >= m) {
                return Err(Error::Config(format!("subsystem '{}' uses orbital {p} outside 0..{m}", a.label)));
            }
        }
        let mut labels: Vec<&str> = self.active.iter().map(|a| a.label.as_str()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("subsystem labels must be unique".into()));
        }
        self.subsystems()?;
        self.solver.validate().map_err(config_error)?;
        self.grid.grid().map_err(config_error)?;
        if self.sweep.u_values.iter().any(|u| !u.is_finite()) {
            return Err(Error::Config("sweep values must be finite".into()));
        }
        Ok(())
    }
}

fn config_error(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_site_config_round_trips() {
        let cfg = RunConfig::three_site();
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
    }

    #[test]
    fn composite_config_round_trips() {
        let mut cfg = RunConfig::three_site();
        cfg.model = ModelConfig::Composite(CompositeSpec::nsl(0.0));
        cfg.reference = None;
        cfg.electrons = Some(5);
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.reference().unwrap().to_string(), "1001100110");
    }

    #[test]
    fn minimal_document_uses_defaults() {
        let cfg = RunConfig::from_toml(
            r#"
            reference = "100110"
            [model]
            kind = "siam"
            eps_c = -0.5
            U = 1.0
            eps_d = [-1.0, 1.0]
            V = [1.0, 1.0]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.model, ModelConfig::Siam(SiamParams::three_site()));
        assert_eq!(cfg.solver, SolverConfig::default());
        assert!(cfg.active.is_empty());
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = RunConfig::three_site();
        cfg.electrons = Some(4);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = RunConfig::three_site();
        cfg.active[0].virtuals = vec![7];
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = RunConfig::three_site();
        cfg.active[0].virtuals = vec![0];
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = RunConfig::three_site();
        cfg.reference = Some("1001".into());
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml("model = 3"), Err(Error::Config(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::three_site();
        let mut b = RunConfig::three_site();
        b.grid.eta = 0.1;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
        assert_eq!(a.hash().unwrap().len(), 64);
    }
}
