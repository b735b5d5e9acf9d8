//! Experiment configuration: one JSON document, overridable field by field.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use regcert_core::bloch::{BlochVector, HermitianBasis, DEFAULT_TOL_PSD};
use regcert_core::certify::{
    CertifyOptions, GridSpacing, LambdaGrid, DEFAULT_EULER_SUBSTEPS, DEFAULT_GRID_POINTS,
    DEFAULT_LAMBDA_MAX, DEFAULT_LAMBDA_MIN,
};
use regcert_core::hitrun::{ChainConfig, Prior};
use regcert_core::region::{DEFAULT_INFLATION, DEFAULT_START_ATTEMPTS};
use regcert_core::tomography::MleOptions;

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PovmKind {
    Pauli6,
    Sqrt,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TrueState {
    MaximallyMixed,
    PureRandom,
    Bloch { r: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PriorSpec {
    Uniform,
    /// Isotropic Gaussian in Bloch coordinates; the mean defaults to the
    /// maximally mixed state.
    Gaussian {
        sigma: f64,
        #[serde(default)]
        mean: Option<Vec<f64>>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub points: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub spacing: GridSpacing,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points: DEFAULT_GRID_POINTS,
            lambda_min: DEFAULT_LAMBDA_MIN,
            lambda_max: DEFAULT_LAMBDA_MAX,
            spacing: GridSpacing::LogTau,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSpec {
    pub k_samples: usize,
    /// `null` means `10·d`.
    pub burn_in: Option<usize>,
    pub thinning: usize,
    pub inflation: f64,
    pub max_shrink_iters: usize,
    pub failure_budget: f64,
    pub check_containment: bool,
    pub start_attempts: usize,
}

impl Default for SamplingSpec {
    fn default() -> Self {
        Self {
            k_samples: 20_000,
            burn_in: None,
            thinning: 1,
            inflation: DEFAULT_INFLATION,
            max_shrink_iters: 64,
            failure_budget: 0.01,
            check_containment: true,
            start_attempts: DEFAULT_START_ATTEMPTS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdeSpec {
    pub euler_substeps: usize,
    pub isotonic: bool,
}

impl Default for OdeSpec {
    fn default() -> Self {
        Self {
            euler_substeps: DEFAULT_EULER_SUBSTEPS,
            isotonic: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSpec {
    pub tol_grad_per_count: f64,
    pub max_iters: usize,
    pub tol_rank: f64,
}

impl Default for FitSpec {
    fn default() -> Self {
        let m = MleOptions::default();
        Self {
            tol_grad_per_count: m.tol_grad_per_count,
            max_iters: m.max_iters,
            tol_rank: m.tol_rank,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSpec {
    pub samples: u64,
    /// Grid points with fewer in-region oracle samples are not compared.
    pub min_yield: u64,
    pub z_max: f64,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self {
            samples: 10_000_000,
            min_yield: 100,
            z_max: 3.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub povm: u64,
    pub state: u64,
    pub simulation: u64,
    pub chain: u64,
    pub oracle: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            povm: 17,
            state: 19,
            simulation: 23,
            chain: 3,
            oracle: 29,
        }
    }
}

impl Seeds {
    /// All seeds derived from one master seed.
    pub fn from_master(seed: u64) -> Self {
        Self {
            povm: seed,
            state: seed.wrapping_add(1),
            simulation: seed.wrapping_add(2),
            chain: seed.wrapping_add(3),
            oracle: seed.wrapping_add(4),
        }
    }
}

impl std::fmt::Display for Seeds {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "povm={} state={} simulation={} chain={} oracle={}",
            self.povm, self.state, self.simulation, self.chain, self.oracle
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dim_hilbert: usize,
    /// Defaults to 6 for Pauli-6 and `D³` otherwise.
    pub n_outcomes: Option<usize>,
    /// Exactly one of `n_total` and `n_per_outcome` is set.
    pub n_total: Option<u64>,
    pub n_per_outcome: Option<u64>,
    pub povm: PovmKind,
    pub true_state: TrueState,
    pub prior: PriorSpec,
    pub grid: GridSpec,
    pub sampling: SamplingSpec,
    pub ode: OdeSpec,
    pub fit: FitSpec,
    pub tol_psd: f64,
    pub oracle: OracleSpec,
    pub seeds: Seeds,
    pub output_dir: PathBuf,
}

/// The qubit Pauli-6 experiment with 500 counts.
impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dim_hilbert: 2,
            n_outcomes: None,
            n_total: Some(500),
            n_per_outcome: None,
            povm: PovmKind::Pauli6,
            true_state: TrueState::MaximallyMixed,
            prior: PriorSpec::Uniform,
            grid: GridSpec::default(),
            sampling: SamplingSpec::default(),
            ode: OdeSpec::default(),
            fit: FitSpec::default(),
            tol_psd: DEFAULT_TOL_PSD,
            oracle: OracleSpec::default(),
            seeds: Seeds::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

impl ExperimentConfig {
    pub fn n_outcomes(&self) -> usize {
        match self.povm {
            PovmKind::Pauli6 => self.n_outcomes.unwrap_or(6),
            _ => self.n_outcomes.unwrap_or(self.dim_hilbert.pow(3)),
        }
    }

    pub fn n_total(&self) -> u64 {
        self.n_total
            .unwrap_or_else(|| self.n_per_outcome.unwrap_or(0) * self.n_outcomes() as u64)
    }

    /// Number of real parameters, `D² − 1`.
    pub fn d(&self) -> usize {
        self.dim_hilbert * self.dim_hilbert - 1
    }

    /// Checks every precondition the pipeline stages rely on.
    pub fn validate(&self) -> Result<()> {
        let dim = self.dim_hilbert;
        if dim < 2 {
            return Err(invalid(
                "dim_hilbert",
                format!("must be at least 2, got {dim}"),
            ));
        }
        let m = self.n_outcomes();
        match self.povm {
            PovmKind::Pauli6 if dim != 2 || m != 6 => {
                return Err(invalid(
                    "povm",
                    "pauli6 requires dim_hilbert = 2 and n_outcomes = 6",
                ));
            }
            _ if m < dim * dim => {
                return Err(invalid(
                    "n_outcomes",
                    format!("{m} outcomes cannot be informationally complete for D = {dim}"),
                ));
            }
            _ => {}
        }
        match (self.n_total, self.n_per_outcome) {
            (Some(_), Some(_)) => {
                return Err(invalid(
                    "n_total",
                    "set either n_total or n_per_outcome, not both",
                ))
            }
            (None, None) => {
                return Err(invalid(
                    "n_total",
                    "one of n_total and n_per_outcome is required",
                ))
            }
            _ => {}
        }
        if self.n_total() == 0 {
            return Err(invalid("n_total", "must be positive"));
        }
        if !(self.tol_psd >= 0.0) {
            return Err(invalid("tol_psd", "must be nonnegative"));
        }
        if let TrueState::Bloch { r } = &self.true_state {
            let basis = self.basis()?;
            if r.len() != basis.d() {
                return Err(invalid(
                    "true_state.r",
                    format!("expected {} coordinates, got {}", basis.d(), r.len()),
                ));
            }
            if !basis.is_physical(&BlochVector::from_vec(r.clone()), self.tol_psd) {
                return Err(invalid("true_state.r", "not a density matrix"));
            }
        }
        if let PriorSpec::Gaussian { sigma, mean } = &self.prior {
            if !(*sigma > 0.0 && sigma.is_finite()) {
                return Err(invalid("prior.sigma", "must be positive and finite"));
            }
            if let Some(mean) = mean {
                if mean.len() != self.d() {
                    return Err(invalid(
                        "prior.mean",
                        format!("expected {} coordinates, got {}", self.d(), mean.len()),
                    ));
                }
            }
        }
        self.lambda_grid()?;
        let s = &self.sampling;
        if s.k_samples == 0 {
            return Err(invalid("sampling.k_samples", "must be positive"));
        }
        if s.thinning == 0 {
            return Err(invalid("sampling.thinning", "must be positive"));
        }
        if !(s.inflation >= 1.0) {
            return Err(invalid("sampling.inflation", "must be at least 1"));
        }
        if s.max_shrink_iters == 0 {
            return Err(invalid("sampling.max_shrink_iters", "must be positive"));
        }
        if !(0.0..1.0).contains(&s.failure_budget) {
            return Err(invalid("sampling.failure_budget", "must lie in [0, 1)"));
        }
        if self.ode.euler_substeps == 0 {
            return Err(invalid("ode.euler_substeps", "must be positive"));
        }
        if !(self.fit.tol_grad_per_count > 0.0)
            || self.fit.max_iters == 0
            || !(self.fit.tol_rank > 0.0)
        {
            return Err(invalid(
                "fit",
                "tolerances and iteration limit must be positive",
            ));
        }
        if self.oracle.samples == 0 {
            return Err(invalid("oracle.samples", "must be positive"));
        }
        if !(self.oracle.z_max > 0.0) {
            return Err(invalid("oracle.z_max", "must be positive"));
        }
        Ok(())
    }

    pub fn basis(&self) -> Result<HermitianBasis> {
        HermitianBasis::new(self.dim_hilbert).map_err(|e| invalid("dim_hilbert", e))
    }

    pub fn lambda_grid(&self) -> Result<LambdaGrid> {
        let g = &self.grid;
        LambdaGrid::spaced(g.points, g.lambda_min, g.lambda_max, g.spacing)
            .map_err(|e| invalid("grid", e))
    }

    pub fn mle_options(&self) -> MleOptions {
        MleOptions {
            tol_grad_per_count: self.fit.tol_grad_per_count,
            max_iters: self.fit.max_iters,
            tol_rank: self.fit.tol_rank,
        }
    }

    pub fn certify_options(&self) -> Result<CertifyOptions> {
        let s = &self.sampling;
        let prior = match &self.prior {
            PriorSpec::Uniform => Prior::Uniform,
            PriorSpec::Gaussian { sigma, mean } => {
                let d = self.d();
                let mean = mean
                    .clone()
                    .map(DVector::from_vec)
                    .unwrap_or_else(|| DVector::zeros(d));
                Prior::gaussian(mean, &(DMatrix::identity(d, d) * (sigma * sigma)))
                    .map_err(|e| invalid("prior", e))?
            }
        };
        Ok(CertifyOptions {
            inflation: s.inflation,
            chain: ChainConfig {
                k_samples: s.k_samples,
                burn_in: s.burn_in,
                thinning: s.thinning,
                seed: self.seeds.chain,
                stream: 0,
                max_shrink_iters: s.max_shrink_iters,
                failure_budget: s.failure_budget,
                check_containment: s.check_containment,
            },
            prior,
            tol_psd: self.tol_psd,
            start_attempts: s.start_attempts,
            euler_substeps: self.ode.euler_substeps,
            isotonic: self.ode.isotonic,
        })
    }

    /// SHA-256 of the canonical JSON form, excluding the output directory.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(map) = &mut v {
            map.remove("output_dir");
        }
        let bytes = serde_json::to_vec(&v).expect("config serializes");
        format!("{:x}", Sha256::digest(&bytes))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Command-line adjustments applied on top of the config document.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    /// `dot.path=value` assignments; values parse as JSON, else as strings.
    pub sets: Vec<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// Reads the config (or the defaults), applies overrides and validates.
pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut doc = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(CliError::io(p))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => serde_json::to_value(ExperimentConfig::default()).expect("config serializes"),
    };
    for set in &overrides.sets {
        apply_set(&mut doc, set)?;
    }
    let mut cfg = from_value(doc)?;
    if let Some(seed) = overrides.seed {
        cfg.seeds = Seeds::from_master(seed);
    }
    if let Some(out) = &overrides.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Deserializes with the failing field's path in the diagnostic.
pub fn from_value(doc: Value) -> Result<ExperimentConfig> {
    serde_path_to_error::deserialize(doc).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("{path}: {}", e.into_inner()))
    })
}

/// Applies one `a.b.c=value` assignment, creating intermediate objects.
pub fn apply_set(doc: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment.split_once('=').ok_or_else(|| {
        CliError::Config(format!("--set {assignment}: expected <dot.path>=<value>"))
    })?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!(
            "--set {assignment}: empty path segment"
        )));
    }
    let mut node = doc;
    for (i, key) in keys.iter().enumerate() {
        let map = match node {
            Value::Object(map) => map,
            _ => {
                return Err(CliError::Config(format!(
                    "--set {assignment}: {} is not an object",
                    keys[..i].join(".")
                )))
            }
        };
        if i + 1 == keys.len() {
            map.insert(key.to_string(), value);
            return Ok(());
        }
        node = map
            .entry(key.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
    }
    unreachable!("path has at least one segment")
}
