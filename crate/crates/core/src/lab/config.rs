//! Run configuration: `[problem]`, `[solver]`, `[spectra]` and `[experiment]` tables.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coeffs::{CoefficientSpec, MatrixKind, Regime};
use crate::error::{Error, Result};
use crate::linalg::{c, C64};
use crate::propagator::{Problem, SolverSettings};
use crate::spectra::{HadamardSettings, SpectraSettings};

const PROBLEM_KEYS: [&str; 10] = [
    "regime",
    "kind",
    "tau1",
    "p",
    "tau2",
    "sigma2",
    "q",
    "tau1_at_0",
    "tau2_at_0",
    "dtau2_at_0",
];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    #[serde(default)]
    pub regime: Regime,
    #[serde(default)]
    pub kind: MatrixKind,
    #[serde(flatten)]
    pub coefficients: CoefficientSpec,
}

/// A complex number written either as a real number or as `[re, im]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComplexInput {
    Real(f64),
    Pair([f64; 2]),
}

impl ComplexInput {
    pub fn value(self) -> C64 {
        match self {
            ComplexInput::Real(x) => c(x, 0.0),
            ComplexInput::Pair([re, im]) => c(re, im),
        }
    }
}

/// Rectangular `λ`-grid; a single node on an axis uses the lower bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub re: [f64; 2],
    pub im: [f64; 2],
    pub n_re: usize,
    pub n_im: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            re: [-500.0, 500.0],
            im: [10.0, 10.0],
            n_re: 11,
            n_im: 1,
        }
    }
}

impl GridConfig {
    pub fn points(&self) -> Vec<C64> {
        let axis = |r: [f64; 2], n: usize| -> Vec<f64> {
            if n <= 1 {
                vec![r[0]]
            } else {
                (0..n).map(|k| r[0] + (r[1] - r[0]) * k as f64 / (n - 1) as f64).collect()
            }
        };
        let mut out = Vec::new();
        for im in axis(self.im, self.n_im) {
            for re in axis(self.re, self.n_re) {
                out.push(c(re, im));
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seed for random `λ` samples.
    pub seed: u64,
    /// Number of `λ` samples for the identity suite.
    pub samples: usize,
    /// Radius of the disk the identity samples are drawn from.
    pub radius: f64,
    /// Relative tolerance for identity deviations.
    pub identity_tol: f64,
    /// Relative distance below which two eigenvalues count as equal.
    pub tol: f64,
    /// Matrix kinds compared by the cross-regularization run.
    pub kinds: Vec<MatrixKind>,
    /// Zeros per characteristic function for Hadamard reconstruction.
    pub n_zeros: usize,
    pub probes: Vec<ComplexInput>,
    pub hadamard: HadamardSettings,
    pub grid: GridConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            samples: 20,
            radius: 500.0,
            identity_tol: 1e-6,
            tol: 1e-6,
            kinds: vec![MatrixKind::Vladimirov, MatrixKind::CompanionL1],
            n_zeros: 128,
            probes: [0.0, -50.0, -100.0, -300.0]
                .into_iter()
                .map(ComplexInput::Real)
                .chain([ComplexInput::Pair([30.0, 20.0])])
                .collect(),
            hadamard: HadamardSettings::default(),
            grid: GridConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub spectra: SpectraSettings,
    #[serde(default)]
    pub experiment: ExperimentConfig,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let value: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        if let Some(toml::Value::Table(p)) = value.get("problem") {
            if let Some(k) = p.keys().find(|k| !PROBLEM_KEYS.contains(&k.as_str())) {
                return Err(Error::Config(format!(
                    "unknown key `{k}` in [problem]; expected one of {}",
                    PROBLEM_KEYS.join(", ")
                )));
            }
        }
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| e.context(format!("reading {}", path.display())))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        self.spectra.validate()?;
        let e = &self.experiment;
        if !(e.radius > 0.0 && e.identity_tol > 0.0 && e.tol > 0.0) {
            return Err(Error::Config("experiment radius and tolerances must be positive".into()));
        }
        Ok(())
    }

    /// The problem as configured, optionally under another regularization matrix.
    pub fn problem(&self, kind: Option<MatrixKind>) -> Result<Problem> {
        let kind = kind.unwrap_or(self.problem.kind);
        Problem::from_spec(&self.problem.coefficients, self.problem.regime, kind, self.solver.clone())
    }

    /// Content hash of everything that determines the computed spectra.
    pub fn hash(&self) -> String {
        let v = serde_json::json!({
            "problem": self.problem,
            "solver": self.solver,
            "spectra": self.spectra,
        });
        // serde_json maps are ordered by key, so this is canonical
        let text = serde_json::to_string(&v).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Same problem with `kind` replaced; the hash changes accordingly.
    pub fn with_kind(&self, kind: MatrixKind) -> Config {
        let mut c = self.clone();
        c.problem.kind = kind;
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMOOTH: &str = r#"
[problem]
tau1 = "2*sin(pi*x)"
tau2 = "5*x^2 - 3*x^3"

[spectra]
count = 5

[experiment]
probes = [0.0, [1.0, 2.0]]
"#;

    #[test]
    fn parses_and_defaults() {
        let cfg = Config::from_toml_str(SMOOTH).unwrap();
        assert_eq!(cfg.spectra.count, 5);
        assert_eq!(cfg.problem.kind, MatrixKind::Vladimirov);
        assert_eq!(cfg.experiment.probes[1].value(), c(1.0, 2.0));
        assert_eq!(cfg.solver, SolverSettings::default());
    }

    #[test]
    fn hash_survives_reserialization() {
        let cfg = Config::from_toml_str(SMOOTH).unwrap();
        let again = Config::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
        assert_eq!(cfg.hash().len(), 16);
        assert_ne!(cfg.hash(), cfg.with_kind(MatrixKind::SigmaForm).hash());
        // experiment settings do not change what is computed for the problem
        let mut other = cfg.clone();
        other.experiment.seed = 99;
        assert_eq!(cfg.hash(), other.hash());
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = SMOOTH.replace("tau1 =", "tua1 =");
        assert!(matches!(Config::from_toml_str(&bad), Err(Error::Config(m)) if m.contains("tua1")));
        let bad = SMOOTH.replace("count = 5", "cuont = 5");
        assert!(Config::from_toml_str(&bad).is_err());
        let bad = SMOOTH.replace("count = 5", "count = 5\ntol = -1.0");
        assert!(Config::from_toml_str(&bad).is_err());
    }

    #[test]
    fn unbounded_search_survives_reserialization() {
        let cfg = Config::from_toml_str(&SMOOTH.replace("count = 5", "count = 5\nlower_bound = -inf")).unwrap();
        assert_eq!(cfg.spectra.lower_bound, None);
        let again = Config::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(again.spectra.lower_bound, None);
        assert_eq!(cfg.hash(), again.hash());
        assert_ne!(cfg.hash(), Config::from_toml_str(SMOOTH).unwrap().hash());
    }

    #[test]
    fn malformed_expression_names_token() {
        let bad = SMOOTH.replace("2*sin(pi*x)", "2*sin(pi*x) + $");
        let cfg = Config::from_toml_str(&bad).unwrap();
        match cfg.problem(None) {
            Err(Error::Parse { token, .. }) => assert_eq!(token, "$"),
            other => panic!("{other:?}"),
        }
    }
}
