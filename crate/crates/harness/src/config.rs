//! Versioned JSON experiment configs and their per-experiment defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{HarnessError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    LassoCompare,
    DistregCompare,
    SaRate,
    ContractionTest,
    Bounds,
    ComplexitySweep,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::LassoCompare => "lasso-compare",
            ExperimentKind::DistregCompare => "distreg-compare",
            ExperimentKind::SaRate => "sa-rate",
            ExperimentKind::ContractionTest => "contraction-test",
            ExperimentKind::Bounds => "bounds",
            ExperimentKind::ComplexitySweep => "complexity-sweep",
        }
    }

    /// Stable id folded into every seed of the experiment.
    pub fn id(&self) -> u64 {
        match self {
            ExperimentKind::LassoCompare => 1,
            ExperimentKind::DistregCompare => 2,
            ExperimentKind::SaRate => 3,
            ExperimentKind::ContractionTest => 4,
            ExperimentKind::Bounds => 5,
            ExperimentKind::ComplexitySweep => 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Lasso,
    Distreg,
}

/// Proximal weight rule of SADM0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sadm0Eta {
    /// `scale * sqrt(k)`, reporting the last iterate.
    Sqrt,
    /// `mu_f * k`, reporting the uniform averages.
    Linear,
}

/// Config file contents; every field except the schema version is optional
/// and falls back to the experiment's default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub kind: Option<ExperimentKind>,
    pub seed: Option<u64>,
    pub replications: Option<usize>,
    pub out: Option<PathBuf>,
    pub problem: Option<ProblemKind>,
    pub n: Option<usize>,
    pub rho: Option<f64>,
    pub budget: Option<u64>,
    pub max_outer: Option<usize>,
    pub eta: Option<f64>,
    #[serde(rename = "T")]
    pub t: Option<f64>,
    pub gamma_bar: Option<f64>,
    pub sigma_l2: Option<f64>,
    pub sigma_s2: Option<f64>,
    pub bernoulli_p: Option<f64>,
    pub dsa_gammas: Option<Vec<f64>>,
    pub dsa_projection_free: Option<bool>,
    pub sadm0_eta: Option<Sadm0Eta>,
    pub sadm0_scale: Option<f64>,
    pub eps: Option<Vec<f64>>,
    pub max_dim: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        Self { schema_version: SCHEMA_VERSION, kind: Some(kind), ..Default::default() }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(HarnessError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Fills defaults and checks ranges.
    pub fn resolve(&self) -> Result<Settings> {
        let kind = self.kind.ok_or_else(|| HarnessError::Config("experiment kind is missing".into()))?;
        let problem = self.problem.unwrap_or(match kind {
            ExperimentKind::DistregCompare => ProblemKind::Distreg,
            _ => ProblemKind::Lasso,
        });
        if problem == ProblemKind::Distreg
            && matches!(kind, ExperimentKind::LassoCompare | ExperimentKind::ComplexitySweep)
        {
            return Err(HarnessError::Config(format!("{} runs on the LASSO only", kind.name())));
        }
        if problem == ProblemKind::Lasso && kind == ExperimentKind::DistregCompare {
            return Err(HarnessError::Config("distreg-compare runs on distributed regression only".into()));
        }
        let lasso = problem == ProblemKind::Lasso;
        let default_reps = match kind {
            ExperimentKind::SaRate => 10_000,
            ExperimentKind::ContractionTest => 100,
            _ => 10,
        };
        let default_rho = match (kind, lasso) {
            (ExperimentKind::Bounds, true) => 50.0,
            _ => 20.0,
        };
        let (default_budget, default_outer) = match (kind, lasso) {
            (ExperimentKind::ComplexitySweep, _) => (Some(5_000_000), 100_000),
            (_, true) => (Some(400_000), 100_000),
            (_, false) => (None, 100),
        };
        let s = Settings {
            kind,
            problem,
            seed: self.seed.unwrap_or(0),
            replications: self.replications.unwrap_or(default_reps),
            out: self.out.clone(),
            n: self.n.unwrap_or(if lasso { 10 } else { 50 }),
            rho: self.rho.unwrap_or(default_rho),
            budget: self.budget.or(default_budget),
            max_outer: self.max_outer.unwrap_or(default_outer),
            eta: self.eta,
            t: self.t.unwrap_or(1000.0),
            gamma_bar: self.gamma_bar.unwrap_or(siadmm::synthetic::DEFAULT_GAMMA_BAR),
            sigma_l2: self.sigma_l2.unwrap_or(siadmm::synthetic::DEFAULT_SIGMA2),
            sigma_s2: self.sigma_s2.unwrap_or(if kind == ExperimentKind::ComplexitySweep {
                0.0
            } else {
                siadmm::synthetic::DEFAULT_SIGMA2
            }),
            bernoulli_p: self.bernoulli_p.unwrap_or(siadmm::synthetic::DEFAULT_BERNOULLI_P),
            dsa_gammas: self.dsa_gammas.clone().unwrap_or_else(|| vec![5000.0, 500_000.0]),
            dsa_projection_free: self.dsa_projection_free.unwrap_or(true),
            sadm0_eta: self.sadm0_eta.unwrap_or(Sadm0Eta::Sqrt),
            sadm0_scale: self.sadm0_scale.unwrap_or(1000.0),
            eps: self.eps.clone().unwrap_or_else(|| vec![1e-1, 1e-2, 1e-3, 1e-4]),
            max_dim: self.max_dim.unwrap_or(20),
        };
        s.validate()?;
        Ok(s)
    }
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub kind: ExperimentKind,
    pub problem: ProblemKind,
    pub seed: u64,
    pub replications: usize,
    pub out: Option<PathBuf>,
    pub n: usize,
    pub rho: f64,
    pub budget: Option<u64>,
    pub max_outer: usize,
    /// `None` picks the problem's default schedule ratio.
    pub eta: Option<f64>,
    #[serde(rename = "T")]
    pub t: f64,
    pub gamma_bar: f64,
    pub sigma_l2: f64,
    pub sigma_s2: f64,
    pub bernoulli_p: f64,
    pub dsa_gammas: Vec<f64>,
    pub dsa_projection_free: bool,
    pub sadm0_eta: Sadm0Eta,
    pub sadm0_scale: f64,
    pub eps: Vec<f64>,
    pub max_dim: usize,
}

impl Settings {
    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.replications < 1 {
            return bad("replications must be >= 1".into());
        }
        if self.problem == ProblemKind::Lasso && self.n < 2 {
            return bad(format!("LASSO needs n >= 2, got {}", self.n));
        }
        if self.n < 1 {
            return bad("n must be >= 1".into());
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad(format!("rho = {} must be positive", self.rho));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0 && eta < 1.0) {
                return bad(format!("eta = {eta} must lie in (0, 1)"));
            }
        }
        if !(self.t >= 1.0) {
            return bad(format!("T = {} must be >= 1", self.t));
        }
        if self.budget == Some(0) {
            return bad("budget must be positive".into());
        }
        if self.max_outer < 1 {
            return bad("max_outer must be >= 1".into());
        }
        if !(self.gamma_bar >= 0.0 && self.sigma_l2 > 0.0 && self.sigma_s2 >= 0.0) {
            return bad("need gamma_bar >= 0, sigma_l2 > 0, sigma_s2 >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.bernoulli_p) {
            return bad(format!("bernoulli_p = {} must lie in [0, 1]", self.bernoulli_p));
        }
        if self.dsa_gammas.iter().any(|g| !(*g > 0.0)) {
            return bad("every DSA Gamma must be positive".into());
        }
        if self.eps.is_empty() || self.eps.iter().any(|e| !(*e > 0.0 && *e <= (-1.0f64).exp())) {
            return bad("eps values must lie in (0, 1/e]".into());
        }
        if !(1..=200).contains(&self.max_dim) {
            return bad("max_dim must lie in [1, 200]".into());
        }
        Ok(())
    }

    pub fn for_kind(kind: ExperimentKind) -> Result<Self> {
        ExperimentConfig::new(kind).resolve()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_fields_are_rejected() {
        let err = ExperimentConfig::from_json(r#"{"schema_version": 1, "rh0": 3}"#).unwrap_err();
        assert!(matches!(err, HarnessError::Config(_)));
    }

    #[test]
    fn wrong_schema_is_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"schema_version": 9}"#).is_err());
    }

    #[test]
    fn defaults_follow_the_experiment() {
        let s = Settings::for_kind(ExperimentKind::DistregCompare).unwrap();
        assert_eq!((s.n, s.rho, s.max_outer, s.budget), (50, 20.0, 100, None));
        let s = Settings::for_kind(ExperimentKind::Bounds).unwrap();
        assert_eq!((s.n, s.rho), (10, 50.0));
    }

    #[test]
    fn round_trip() {
        let mut c = ExperimentConfig::new(ExperimentKind::Bounds);
        c.t = Some(500.0);
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains("\"T\":500"));
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), c);
    }
}
