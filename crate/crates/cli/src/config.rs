//! Experiment configuration files (TOML).
//!
//! ```toml
//! experiment = "counterexample"
//! output = "out/counterexample"
//! plot = true
//! seed = 7
//!
//! [parameters]
//! n_list = [8, 16, 32]
//!
//! [[assertions]]
//! metric = "RESOLVENT_WOT"
//! check = "max_below"
//! value = 1e-14
//! ```

use std::path::PathBuf;

use degsemi::linalg::{c64, C64};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Equivalence,
    Galerkin,
    Domains,
    Homogenize,
    Counterexample,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::Equivalence,
        ExperimentKind::Galerkin,
        ExperimentKind::Domains,
        ExperimentKind::Homogenize,
        ExperimentKind::Counterexample,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Equivalence => "equivalence",
            ExperimentKind::Galerkin => "galerkin",
            ExperimentKind::Domains => "domains",
            ExperimentKind::Homogenize => "homogenize",
            ExperimentKind::Counterexample => "counterexample",
        }
    }
}

/// Complex number written as `{ re = 1.0, im = 0.5 }`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub fn value(self) -> C64 {
        c64(self.re, self.im)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    /// Last value at most `value`.
    FinalBelow,
    /// Every value at most `value`.
    MaxBelow,
    /// Last value at least `value`.
    FinalAbove,
    /// Every value at least `value`.
    MinAbove,
    Nonincreasing,
    StrictlyDecreasing,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Assertion {
    /// Trace name; any trace carrying the metric when omitted.
    #[serde(default)]
    pub trace: Option<String>,
    pub metric: String,
    pub check: Check,
    #[serde(default)]
    pub value: Option<f64>,
}

impl Assertion {
    pub fn label(&self) -> String {
        let scope = self.trace.as_deref().map(|t| format!("{t}/")).unwrap_or_default();
        match self.value {
            Some(v) => format!("{scope}{} {:?} {v:e}", self.metric, self.check),
            None => format!("{scope}{} {:?}", self.metric, self.check),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub plot: bool,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub parameters: toml::Table,
    #[serde(default)]
    pub assertions: Vec<Assertion>,
}

fn default_thresholds() -> [f64; 2] {
    [1e-6, 1e-4]
}
fn one() -> f64 {
    1.0
}
fn default_delta() -> f64 {
    0.1
}
fn default_dim() -> usize {
    12
}
fn default_probes() -> usize {
    16
}
fn default_support() -> usize {
    4
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainKind {
    /// `A_n = A + B/n`, `A`, `B` random Hermitian PSD.
    RandomPsd,
    /// `A_n = A`.
    Constant,
    /// Cayley block-swap family against `A = I`.
    BlockSwap,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquivalenceParams {
    #[serde(default = "chain_default")]
    pub chain: ChainKind,
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub n_list: Vec<u64>,
    /// Nonreal point of the nonreal WOT metric.
    pub lambda: Complex,
    /// Points of the SOT/WOT resolvent metrics; `[1, 2+i]` by default.
    #[serde(default)]
    pub lambdas: Option<Vec<Complex>>,
    #[serde(default = "one")]
    pub t: f64,
    #[serde(default = "one")]
    pub horizon: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_probes")]
    pub probes: usize,
    #[serde(default = "default_support")]
    pub support: usize,
    #[serde(default)]
    pub ambient_dim: Option<usize>,
    #[serde(default = "default_thresholds")]
    pub thresholds: [f64; 2],
}

fn chain_default() -> ChainKind {
    ChainKind::RandomPsd
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FormChoice {
    Laplace1d,
    AdvectionDiffusion1d,
    Divform2d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceChoice {
    Fe,
    Fourier,
}

fn default_coarse() -> usize {
    8
}
fn default_refinements() -> usize {
    4
}
fn default_reference() -> usize {
    256
}
fn default_grid() -> usize {
    128
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GalerkinParams {
    #[serde(default = "form_default")]
    pub form: FormChoice,
    #[serde(default = "space_default")]
    pub chain: SpaceChoice,
    #[serde(default = "default_coarse")]
    pub coarse_cells: usize,
    #[serde(default = "default_refinements")]
    pub refinements: usize,
    #[serde(default = "default_reference")]
    pub reference_cells: usize,
    /// Mode counts of the Fourier chain.
    #[serde(default)]
    pub modes: Vec<usize>,
    #[serde(default)]
    pub drift: f64,
    #[serde(default)]
    pub shift: f64,
    #[serde(default = "one")]
    pub horizon: f64,
    #[serde(default = "default_grid")]
    pub grid: usize,
    pub lambda: Complex,
}

fn form_default() -> FormChoice {
    FormChoice::Laplace1d
}
fn space_default() -> SpaceChoice {
    SpaceChoice::Fe
}

fn default_one_usize() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainsParams {
    #[serde(default = "default_one_usize")]
    pub dimension: usize,
    #[serde(default = "default_reference")]
    pub cells: usize,
    pub n_list: Vec<usize>,
    #[serde(default = "one")]
    pub horizon: f64,
    /// Must be real and positive.
    pub lambda: Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldChoice {
    Piecewise,
    Sinusoidal,
    Laminate,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryChoice {
    Dirichlet,
    Neumann,
}

fn default_cell_resolution() -> usize {
    256
}
fn lo_default() -> f64 {
    1.0
}
fn hi_default() -> f64 {
    4.0
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomogenizeParams {
    #[serde(default = "field_default")]
    pub field: FieldChoice,
    /// CSV file for `field = "csv"`, relative to the config file.
    #[serde(default)]
    pub field_csv: Option<PathBuf>,
    #[serde(default = "default_one_usize")]
    pub dimension: usize,
    #[serde(default = "lo_default")]
    pub lo: f64,
    #[serde(default = "hi_default")]
    pub hi: f64,
    #[serde(default = "default_cell_resolution")]
    pub cell_resolution: usize,
    pub epsilons: Vec<f64>,
    #[serde(default = "one")]
    pub length: f64,
    #[serde(default = "boundary_default")]
    pub boundary: BoundaryChoice,
    pub lambda: Complex,
    /// Also run the parabolic comparison on `[delta, T]`.
    #[serde(default)]
    pub parabolic: bool,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "one")]
    pub horizon: f64,
}

fn field_default() -> FieldChoice {
    FieldChoice::Piecewise
}
fn boundary_default() -> BoundaryChoice {
    BoundaryChoice::Dirichlet
}

fn default_kato_nodes() -> usize {
    256
}
fn default_ce_probes() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleParams {
    pub n_list: Vec<usize>,
    #[serde(default = "default_support")]
    pub support: usize,
    #[serde(default)]
    pub ambient_dim: Option<usize>,
    #[serde(default = "default_ce_probes")]
    pub probes: usize,
    /// The family is only exact at `lambda = 1`; other values are rejected.
    #[serde(default)]
    pub lambda: Option<Complex>,
    #[serde(default = "default_kato_nodes")]
    pub kato_nodes: usize,
    #[serde(default)]
    pub kato_lambdas: Option<Vec<f64>>,
}

/// Validated parameters of one experiment kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Parameters {
    Equivalence(EquivalenceParams),
    Galerkin(GalerkinParams),
    Domains(DomainsParams),
    Homogenize(HomogenizeParams),
    Counterexample(CounterexampleParams),
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::ConfigInvalid(msg.into())
}

fn nonempty<T>(name: &str, v: &[T]) -> Result<(), CliError> {
    if v.is_empty() {
        return Err(invalid(format!("{name} must be nonempty")));
    }
    Ok(())
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(invalid(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| invalid(e.to_string()))
    }

    /// Typed parameters with the per-kind required keys checked.
    pub fn parameters(&self) -> Result<Parameters, CliError> {
        let table = toml::Value::Table(self.parameters.clone());
        let ctx = |e: toml::de::Error| invalid(format!("[parameters] for {}: {}", self.experiment.name(), e.message()));
        let p = match self.experiment {
            ExperimentKind::Equivalence => Parameters::Equivalence(table.try_into().map_err(ctx)?),
            ExperimentKind::Galerkin => Parameters::Galerkin(table.try_into().map_err(ctx)?),
            ExperimentKind::Domains => Parameters::Domains(table.try_into().map_err(ctx)?),
            ExperimentKind::Homogenize => Parameters::Homogenize(table.try_into().map_err(ctx)?),
            ExperimentKind::Counterexample => Parameters::Counterexample(table.try_into().map_err(ctx)?),
        };
        p.validate()?;
        for a in &self.assertions {
            let needs_value = !matches!(a.check, Check::Nonincreasing | Check::StrictlyDecreasing);
            if needs_value && a.value.is_none() {
                return Err(invalid(format!("assertion on {} needs a value", a.metric)));
            }
        }
        Ok(p)
    }
}

impl Parameters {
    fn validate(&self) -> Result<(), CliError> {
        match self {
            Parameters::Equivalence(p) => {
                nonempty("n_list", &p.n_list)?;
                if p.n_list.contains(&0) {
                    return Err(invalid("n_list entries must be >= 1"));
                }
                if p.lambda.im == 0.0 {
                    return Err(invalid("equivalence lambda must be nonreal"));
                }
                positive("t", p.t)?;
                positive("horizon", p.horizon)?;
                positive("delta", p.delta)?;
                if p.delta > p.horizon {
                    return Err(invalid("delta must not exceed horizon"));
                }
                if let Some(ls) = &p.lambdas {
                    nonempty("lambdas", ls)?;
                    if ls.iter().any(|l| !(l.re > 0.0)) {
                        return Err(invalid("lambdas need positive real part"));
                    }
                }
                if p.dim == 0 {
                    return Err(invalid("dim must be positive"));
                }
            }
            Parameters::Galerkin(p) => {
                positive("lambda.re", p.lambda.re)?;
                positive("horizon", p.horizon)?;
                if p.chain == SpaceChoice::Fourier {
                    nonempty("modes", &p.modes)?;
                }
            }
            Parameters::Domains(p) => {
                nonempty("n_list", &p.n_list)?;
                if p.lambda.im != 0.0 {
                    return Err(invalid("domains lambda must be real"));
                }
                positive("lambda.re", p.lambda.re)?;
                positive("horizon", p.horizon)?;
                if !(p.dimension == 1 || p.dimension == 2) {
                    return Err(invalid("dimension must be 1 or 2"));
                }
            }
            Parameters::Homogenize(p) => {
                nonempty("epsilons", &p.epsilons)?;
                for &e in &p.epsilons {
                    positive("epsilon", e)?;
                }
                positive("lambda.re", p.lambda.re)?;
                positive("length", p.length)?;
                if p.field == FieldChoice::Csv && p.field_csv.is_none() {
                    return Err(invalid("field = \"csv\" needs field_csv"));
                }
                if p.field == FieldChoice::Laminate && p.dimension != 2 {
                    return Err(invalid("the laminate field is two-dimensional"));
                }
            }
            Parameters::Counterexample(p) => {
                nonempty("n_list", &p.n_list)?;
                if let Some(l) = p.lambda {
                    if l.re != 1.0 || l.im != 0.0 {
                        return Err(invalid("the block-swap report is defined at lambda = 1"));
                    }
                }
                if let Some(ls) = &p.kato_lambdas {
                    nonempty("kato_lambdas", ls)?;
                }
            }
        }
        Ok(())
    }
}

/// Required and optional keys per experiment, for `degsemi list`.
pub fn key_docs() -> [(ExperimentKind, &'static str); 5] {
    let docs = [
        (
            ExperimentKind::Equivalence,
            "required: n_list (chain indices), lambda {re, im} (nonreal, dimensionless)\n\
             optional: chain = random_psd|constant|block_swap, dim (12), lambdas (list of {re, im}),\n\
             t (1, time), horizon (1, time), delta (0.1, time), probes (16), support (4),\n\
             ambient_dim (block_swap), thresholds ([1e-6, 1e-4])",
        ),
        (
            ExperimentKind::Galerkin,
            "required: lambda {re, im} (Re > 0)\n\
             optional: form = laplace1d|advection_diffusion1d|divform2d, chain = fe|fourier,\n\
             coarse_cells (8), refinements (4 levels incl. the coarse one), reference_cells (256), modes (fourier counts),\n\
             drift (0), shift (0), horizon (1, time), grid (128 time samples)",
        ),
        (
            ExperimentKind::Domains,
            "required: n_list (Omega_n = (0, 1 - 1/n)^d), lambda {re, im} (real, > 0)\n\
             optional: dimension (1), cells (256 per unit length), horizon (1, time)",
        ),
        (
            ExperimentKind::Homogenize,
            "required: epsilons (period lengths), lambda {re, im} (Re > 0)\n\
             optional: field = piecewise|sinusoidal|laminate|csv, field_csv (path), dimension (1),\n\
             lo (1), hi (4), cell_resolution (256 cells per axis), length (1, domain size),\n\
             boundary = dirichlet|neumann, parabolic (false), delta (0.1, time), horizon (1, time)",
        ),
        (
            ExperimentKind::Counterexample,
            "required: n_list (block sizes)\n\
             optional: support (4 coordinates), ambient_dim (2 max n + 6), probes (8),\n\
             lambda ({re = 1, im = 0} only), kato_nodes (256), kato_lambdas ([0.5, 1, 2])",
        ),
    ];
    docs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_lambda_is_invalid() {
        let cfg = ExperimentConfig::parse(
            "experiment = \"domains\"\n[parameters]\nn_list = [2, 4]\n",
        )
        .unwrap();
        assert!(matches!(cfg.parameters(), Err(CliError::ConfigInvalid(_))));
    }

    #[test]
    fn unknown_keys_rejected() {
        let cfg = ExperimentConfig::parse(
            "experiment = \"counterexample\"\n[parameters]\nn_list = [8]\nbogus = 1\n",
        )
        .unwrap();
        assert!(cfg.parameters().is_err());
        assert!(ExperimentConfig::parse("experiment = \"nope\"\n").is_err());
    }

    #[test]
    fn parses_full_config() {
        let cfg = ExperimentConfig::parse(
            r#"
experiment = "equivalence"
plot = true
seed = 3
[parameters]
n_list = [1, 4]
lambda = { re = 1.0, im = 1.0 }
[[assertions]]
metric = "RESOLVENT_SOT"
check = "final_below"
value = 1e-3
"#,
        )
        .unwrap();
        let Parameters::Equivalence(p) = cfg.parameters().unwrap() else {
            panic!("wrong kind")
        };
        assert_eq!(p.dim, 12);
        assert_eq!(cfg.assertions[0].check, Check::FinalBelow);
    }

    #[test]
    fn assertion_without_value_rejected() {
        let cfg = ExperimentConfig::parse(
            "experiment = \"counterexample\"\n[parameters]\nn_list = [8]\n[[assertions]]\nmetric = \"X\"\ncheck = \"max_below\"\n",
        )
        .unwrap();
        assert!(cfg.parameters().is_err());
    }
}
