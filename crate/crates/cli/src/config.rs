//! Run configuration: TOML with flat dotted keys (`grid.n = 32`), defaults
//! filled in, unknown keys rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use landau_core::estimates::ConstantsMode;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse configuration: {0}")]
    Parse(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Regime(String),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Conservation,
    Coercivity,
    Gronwall,
    Trap,
    Coulomb,
    Local,
    Growth,
    H1,
}

impl Check {
    pub const ALL: [Check; 8] = [
        Check::Conservation,
        Check::Coercivity,
        Check::Gronwall,
        Check::Trap,
        Check::Coulomb,
        Check::Local,
        Check::Growth,
        Check::H1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::Conservation => "conservation",
            Check::Coercivity => "coercivity",
            Check::Gronwall => "gronwall",
            Check::Trap => "trap",
            Check::Coulomb => "coulomb",
            Check::Local => "local",
            Check::Growth => "growth",
            Check::H1 => "h1",
        }
    }

    /// `Err` names the result whose range excludes `gamma`.
    pub fn admits(self, gamma: f64) -> Result<(), String> {
        let (ok, msg) = match self {
            Check::Gronwall => ((-2.0..0.0).contains(&gamma), "Theorem part 1 covers gamma in [-2, 0)"),
            Check::Trap => ((-3.0..=-2.0).contains(&gamma), "Theorem part 2 covers gamma in [-3, -2]"),
            Check::Coulomb => (gamma == -3.0, "Theorem part 2 (Coulomb case) needs gamma = -3"),
            Check::Local => (gamma > -3.0 && gamma < -2.0, "the local L2 estimate needs gamma in (-3, -2)"),
            Check::Growth => (gamma > -2.0 && gamma < 0.0, "the polynomial growth bound needs gamma in (-2, 0)"),
            Check::Conservation | Check::Coercivity | Check::H1 => (true, ""),
        };
        if ok {
            Ok(())
        } else {
            Err(format!("check '{}' rejected for gamma = {gamma}: {msg}", self.name()))
        }
    }

    /// Checks run when none are requested. The trap endpoints are routed to
    /// the envelope (`gamma = -2`) and to the Coulomb check (`gamma = -3`).
    pub fn defaults_for(gamma: f64) -> Vec<Check> {
        Check::ALL
            .into_iter()
            .filter(|c| c.admits(gamma).is_ok())
            .filter(|c| !(*c == Check::Trap && (gamma == -2.0 || gamma == -3.0)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Maxwellian,
    TwoMaxwellians,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub n: usize,
    /// Half-width of the box `[-extent, extent]^3`.
    pub extent: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { n: 32, extent: 6.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSection {
    pub kind: InitialKind,
    pub mass: f64,
    pub temperature: f64,
    pub bulk: [f64; 3],
    pub second_mass: f64,
    pub second_temperature: f64,
    pub second_bulk: [f64; 3],
    /// Whitespace-separated node values in `(i, j, k)` row-major order;
    /// `#` starts a comment.
    pub path: Option<PathBuf>,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            kind: InitialKind::Maxwellian,
            mass: 1.0,
            temperature: 1.0,
            bulk: [0.0; 3],
            second_mass: 0.5,
            second_temperature: 0.5,
            second_bulk: [-1.2, 0.0, 0.0],
            path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub t_end: f64,
    pub max_steps: Option<usize>,
    pub output_stride: usize,
    pub cfl_safety: f64,
    /// Fixed step; overrides the CFL policy when set.
    pub dt: Option<f64>,
    pub projection: bool,
    pub clamp_negative: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            t_end: 1.0,
            max_steps: None,
            output_stride: 2,
            cfl_safety: 0.4,
            dt: None,
            projection: true,
            clamp_negative: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GronwallSection {
    pub mode: ConstantsMode,
}

impl Default for GronwallSection {
    fn default() -> Self {
        Self { mode: ConstantsMode::Traced }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrapSection {
    /// Cut-off and delta share; both are tuned when either is missing.
    pub epsilon: Option<f64>,
    pub delta_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalSection {
    pub epsilon: f64,
}

impl Default for LocalSection {
    fn default() -> Self {
        Self { epsilon: 0.1 }
    }
}

/// Explicit certificate inputs; taken from the initial state when absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoercivitySection {
    pub m0: Option<f64>,
    pub e0: Option<f64>,
    pub h0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    pub count: usize,
    pub n: usize,
    pub extent: f64,
    pub pitt_gammas: Vec<f64>,
    pub pitt_count: usize,
    pub cubic_count: usize,
    pub small_set_count: usize,
    pub epsilons: Vec<f64>,
    pub sets_per_epsilon: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        let d = landau_core::bench::BenchConfig::default();
        Self {
            count: d.count,
            n: d.n,
            extent: d.extent,
            pitt_gammas: d.pitt_gammas,
            pitt_count: d.pitt_count,
            cubic_count: d.cubic_count,
            small_set_count: d.small_set_count,
            epsilons: d.epsilons,
            sets_per_epsilon: d.sets_per_epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub csv: String,
    pub json: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), csv: "timeseries.csv".into(), json: "report.json".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    gamma: f64,
    alpha: Option<f64>,
    seed: Option<u64>,
    checks: Option<Vec<Check>>,
    #[serde(default)]
    grid: GridSection,
    #[serde(default)]
    initial: InitialSection,
    #[serde(default)]
    solver: SolverSection,
    #[serde(default)]
    gronwall: GronwallSection,
    #[serde(default)]
    trap: TrapSection,
    #[serde(default)]
    local: LocalSection,
    #[serde(default)]
    coercivity: CoercivitySection,
    #[serde(default)]
    bench: BenchSection,
    #[serde(default)]
    ledger: BTreeMap<String, f64>,
    #[serde(default)]
    output: OutputSection,
}

/// Fully resolved configuration; serialized verbatim into every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub gamma: f64,
    pub alpha: f64,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub grid: GridSection,
    pub initial: InitialSection,
    pub solver: SolverSection,
    pub gronwall: GronwallSection,
    pub trap: TrapSection,
    pub local: LocalSection,
    pub coercivity: CoercivitySection,
    pub bench: BenchSection,
    /// Constants pinned by the user; recorded with `config` provenance.
    pub ledger: BTreeMap<String, f64>,
    pub output: OutputSection,
}

/// Default weight: the smallest admissible one in the trap regime.
pub fn default_alpha(gamma: f64) -> f64 {
    if gamma <= -2.0 {
        -1.0 - 1.5 * gamma
    } else {
        1.0
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let gamma = raw.gamma;
    if !(-3.0..0.0).contains(&gamma) {
        return Err(ConfigError::Invalid(format!("gamma must lie in [-3, 0), got {gamma}")));
    }
    let checks = match raw.checks {
        Some(list) => {
            for c in &list {
                c.admits(gamma).map_err(ConfigError::Regime)?;
            }
            let mut list = list;
            list.sort();
            list.dedup();
            list
        }
        None => Check::defaults_for(gamma),
    };
    let alpha = raw.alpha.unwrap_or_else(|| default_alpha(gamma));
    let needs_weight = checks.iter().any(|c| matches!(c, Check::Trap | Check::Coulomb));
    if needs_weight && alpha < -1.0 - 1.5 * gamma {
        return Err(ConfigError::Invalid(format!(
            "alpha = {alpha} violates alpha >= -1-3/2 gamma = {}",
            -1.0 - 1.5 * gamma
        )));
    }
    if raw.grid.n < 8 || raw.grid.n % 2 != 0 {
        return Err(ConfigError::Invalid(format!("grid.n must be even and at least 8, got {}", raw.grid.n)));
    }
    if raw.initial.kind == InitialKind::File && raw.initial.path.is_none() {
        return Err(ConfigError::Invalid("initial.kind = \"file\" needs initial.path".into()));
    }
    for (name, value) in &raw.ledger {
        if !(*value > 0.0 && value.is_finite()) {
            return Err(ConfigError::Invalid(format!("ledger.{name} must be positive, got {value}")));
        }
    }
    Ok(RunConfig {
        gamma,
        alpha,
        seed: raw.seed.unwrap_or(7),
        checks,
        grid: raw.grid,
        initial: raw.initial,
        solver: raw.solver,
        gronwall: raw.gronwall,
        trap: raw.trap,
        local: raw.local,
        coercivity: raw.coercivity,
        bench: raw.bench,
        ledger: raw.ledger,
        output: raw.output,
    })
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config(&text)
}
