//! Subcommands: build the initial state, run the solver and the checks, and
//! collect everything into one report.

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::Value;

use landau_core::bench::{run_bench, BenchConfig, BenchReport};
use landau_core::coercivity::{coercivity_constant, verify_coercivity, CoercivityCertificate};
use landau_core::estimates::*;
use landau_core::grid::{ScalarField, VelocityGrid};
use landau_core::kernel::KernelSpec;
use landau_core::ledger::{ConstantsLedger, Provenance, Verdict};
use landau_core::solver::{simulate_with, CollisionOperator, SolverConfig, TimeStepPolicy, Trajectory};
use landau_core::state::{maxwellian, moments, two_maxwellians, DistributionState};

use crate::config::{Check, InitialKind, RunConfig};

/// Relative drift of mass, momentum and energy allowed by the conservation check.
pub const CONSERVATION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Subcommand {
    Simulate,
    Coercivity,
    Verify,
    Bench,
}

#[derive(Debug, Clone, Serialize)]
pub struct Header {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: Subcommand,
    pub gamma: f64,
    pub n: usize,
    pub extent: f64,
}

/// Certificate fields under their report names.
#[derive(Debug, Clone, Serialize)]
pub struct CertificateSummary {
    pub gamma: f64,
    pub m0: f64,
    pub e0: f64,
    pub h0: f64,
    #[serde(rename = "H_tilde")]
    pub h_tilde: f64,
    #[serde(rename = "R_star")]
    pub r_star: f64,
    pub log_eta_quarter: f64,
    pub log_eta_eighth: f64,
    pub log_c_case1: f64,
    pub log_case1_conversion: f64,
    pub log_c_case2: f64,
    pub log_case2_conversion: f64,
    #[serde(rename = "log_C_coer")]
    pub log_c_coer: f64,
    #[serde(rename = "C_coer")]
    pub c_coer: f64,
}

impl From<&CoercivityCertificate> for CertificateSummary {
    fn from(c: &CoercivityCertificate) -> Self {
        Self {
            gamma: c.gamma,
            m0: c.m0,
            e0: c.e0,
            h0: c.h0,
            h_tilde: c.h_tilde,
            r_star: c.r_star,
            log_eta_quarter: c.log_eta_quarter,
            log_eta_eighth: c.log_eta_eighth,
            log_c_case1: c.log_c_case1,
            log_case1_conversion: c.log_case1_conversion,
            log_c_case2: c.log_c_case2,
            log_case2_conversion: c.log_case2_conversion,
            log_c_coer: c.log_c_coer,
            c_coer: c.c_coer(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub steps: usize,
    pub outputs: usize,
    pub t_final: f64,
    pub max_conservation_drift: f64,
    pub max_entropy_increase: f64,
    pub clamped_mass: f64,
    pub blow_up: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub verdict: Verdict,
    pub detail: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub header: Header,
    pub config: RunConfig,
    pub ledger: ConstantsLedger,
    pub certificate: Option<CertificateSummary>,
    pub run: Option<RunSummary>,
    pub checks: Vec<CheckOutcome>,
    pub bench: Option<BenchReport>,
    pub verdict: Verdict,
    pub exit_code: i32,
}

/// Per-output columns filled in by the checks.
#[derive(Debug, Clone, Default)]
pub struct CheckColumns {
    pub gronwall_rhs: Option<Vec<f64>>,
    pub trap_x_bar: Option<f64>,
    pub growth_envelope: Option<Vec<f64>>,
}

pub struct Outcome {
    pub report: Report,
    pub trajectory: Option<Trajectory>,
    pub columns: CheckColumns,
}

/// 0 when every asserted check passes, 2 when only hypotheses are unmet,
/// 1 on a violation.
pub fn exit_code(verdict: Verdict) -> i32 {
    match verdict {
        Verdict::Pass => 0,
        Verdict::HypothesesUnmet => 2,
        Verdict::Fail => 1,
    }
}

pub fn initial_state(config: &RunConfig) -> Result<DistributionState> {
    let grid = VelocityGrid::new(config.grid.n, config.grid.extent)?;
    let init = &config.initial;
    let state = match init.kind {
        InitialKind::Maxwellian => maxwellian(&grid, init.mass, init.temperature, init.bulk)?,
        InitialKind::TwoMaxwellians => two_maxwellians(
            &grid,
            (init.mass, init.temperature, init.bulk),
            (init.second_mass, init.second_temperature, init.second_bulk),
        )?,
        InitialKind::File => {
            let path = init.path.as_ref().context("initial.path is required")?;
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            let values = text
                .lines()
                .map(|l| l.split('#').next().unwrap_or(""))
                .flat_map(str::split_whitespace)
                .map(|t| t.parse::<f64>().with_context(|| format!("bad number '{t}' in {}", path.display())))
                .collect::<Result<Vec<_>>>()?;
            DistributionState::new(ScalarField::from_values(&grid, values)?, 0.0)?
        }
    };
    Ok(state)
}

fn solver_config(config: &RunConfig, extra_moment: Option<f64>) -> SolverConfig {
    let s = &config.solver;
    SolverConfig {
        time_step: match s.dt {
            Some(dt) => TimeStepPolicy::Fixed { dt },
            None => TimeStepPolicy::Cfl { safety: s.cfl_safety },
        },
        conservative_projection: s.projection,
        clamp_negative: s.clamp_negative,
        t_end: s.t_end,
        max_steps: s.max_steps,
        output_stride: s.output_stride,
        alpha: config.alpha,
        extra_moment,
    }
}

fn certificate(config: &RunConfig, state: Option<&DistributionState>) -> Result<CoercivityCertificate> {
    let c = &config.coercivity;
    let (m0, e0, h0) = match (c.m0, c.e0, c.h0, state) {
        (Some(m), Some(e), Some(h), _) => (m, e, h),
        (m, e, h, Some(s)) => {
            let q = moments(s)?;
            (m.unwrap_or(q.mass), e.unwrap_or(q.energy), h.unwrap_or(q.entropy))
        }
        _ => bail!("coercivity.m0, coercivity.e0 and coercivity.h0 are all needed without an initial state"),
    };
    Ok(coercivity_constant(m0, e0, h0, config.gamma)?)
}

/// Certificate for the class `{m = m(0), e <= sup e, H <= sup H}` that
/// contains every output; `coercivity.*` entries override.
fn trajectory_certificate(config: &RunConfig, tr: &Trajectory) -> Result<CoercivityCertificate> {
    let rows = &tr.diagnostics;
    let first = rows.first().context("empty trajectory")?;
    let c = &config.coercivity;
    let e_sup = rows.iter().map(|r| r.energy).fold(f64::NEG_INFINITY, f64::max);
    let h_sup = rows.iter().map(|r| r.entropy).fold(f64::NEG_INFINITY, f64::max);
    Ok(coercivity_constant(
        c.m0.unwrap_or(first.mass),
        c.e0.unwrap_or(e_sup),
        c.h0.unwrap_or(h_sup),
        config.gamma,
    )?)
}

/// Default constants plus the user's pins.
pub fn initial_ledger(config: &RunConfig) -> ConstantsLedger {
    let mut ledger = ConstantsLedger::new();
    ledger.set("c_pitt", 1.0, Provenance::Config, "empirical normalizer of the singular-weight bound");
    ledger.set("c_parseval", 1.0, Provenance::Traced, "unitary transform, pinned by the Parseval self-test");
    ledger.set("c_hardy", HARDY_CONSTANT, Provenance::Traced, "sharp 3-D Hardy constant");
    ledger.set("c_diss", DISSIPATION_FRACTION, Provenance::Config, "gradient share kept after the weight commutator");
    ledger.set("C_A", 1.0, Provenance::Config, "linear far-field term");
    for (name, value) in &config.ledger {
        ledger.set(name, *value, Provenance::Config, "pinned by the run configuration");
    }
    ledger
}

fn header(config: &RunConfig, subcommand: Subcommand) -> Header {
    Header {
        tool: "landau",
        version: env!("CARGO_PKG_VERSION"),
        subcommand,
        gamma: config.gamma,
        n: config.grid.n,
        extent: config.grid.extent,
    }
}

fn run_summary(tr: &Trajectory) -> RunSummary {
    RunSummary {
        steps: tr.steps.len(),
        outputs: tr.diagnostics.len(),
        t_final: tr.diagnostics.last().map_or(0.0, |r| r.t),
        max_conservation_drift: tr.max_conservation_drift(),
        max_entropy_increase: tr.max_entropy_increase(),
        clamped_mass: tr.steps.iter().map(|s| s.clamped_mass).sum(),
        blow_up: tr.blow_up,
    }
}

fn outcome(name: &'static str, verdict: Verdict, detail: impl Serialize) -> Result<CheckOutcome> {
    Ok(CheckOutcome { name, verdict, detail: serde_json::to_value(detail)? })
}

#[derive(Serialize)]
struct ConservationDetail {
    max_drift: f64,
    tolerance: f64,
    entropy_nonincreasing: bool,
    max_entropy_increase: f64,
}

#[derive(Serialize)]
struct CoercivityDetail {
    log_c_coer: f64,
    min_numerical_ratio: f64,
    states_checked: usize,
    verdicts: Vec<Verdict>,
}

#[derive(Serialize)]
struct TrapDetail {
    tuned: bool,
    best_ratio: Option<f64>,
    report: TrapReport,
}

/// Runs the solver and every configured check.
pub fn verify(config: &RunConfig) -> Result<Outcome> {
    run_trajectory(config, Subcommand::Verify, &config.checks)
}

/// Runs the solver only; the report carries the run summary.
pub fn simulate(config: &RunConfig) -> Result<Outcome> {
    run_trajectory(config, Subcommand::Simulate, &[])
}

fn run_trajectory(config: &RunConfig, subcommand: Subcommand, checks: &[Check]) -> Result<Outcome> {
    let state = initial_state(config)?;
    let grid = state.grid().clone();
    let gamma = config.gamma;
    let mu = if checks.contains(&Check::Growth) { Some(growth_moment_order(gamma)?) } else { None };
    let operator = CollisionOperator::new(&grid, KernelSpec::new(gamma, &grid)?)?;
    let tr = simulate_with(&operator, &state, &solver_config(config, mu))?;
    let cert = trajectory_certificate(config, &tr)?;
    let mut ledger = initial_ledger(config);
    ledger.set_ln("C_coer", cert.log_c_coer, Provenance::Traced, "coercivity certificate");
    let mut columns = CheckColumns::default();
    let mut results = Vec::new();

    for check in checks {
        let result = match check {
            Check::Conservation => {
                let drift = tr.max_conservation_drift();
                let monotone = tr.entropy_nonincreasing(&grid);
                let ok = !tr.blow_up && drift <= CONSERVATION_TOLERANCE && monotone;
                outcome(
                    "conservation",
                    Verdict::from_bool(ok),
                    ConservationDetail {
                        max_drift: drift,
                        tolerance: CONSERVATION_TOLERANCE,
                        entropy_nonincreasing: monotone,
                        max_entropy_increase: tr.max_entropy_increase(),
                    },
                )?
            }
            Check::Coercivity => {
                let mut verdicts = Vec::new();
                let mut min_ratio = f64::INFINITY;
                for s in &tr.states {
                    let r = verify_coercivity(s, &operator.compute_coefficients(s)?, &cert)?;
                    min_ratio = min_ratio.min(r.numerical_min_ratio);
                    verdicts.push(r.verdict);
                }
                let verdict = verdicts.iter().fold(Verdict::Pass, |a, b| a.combine(*b));
                outcome(
                    "coercivity",
                    verdict,
                    CoercivityDetail {
                        log_c_coer: cert.log_c_coer,
                        min_numerical_ratio: min_ratio,
                        states_checked: verdicts.len(),
                        verdicts,
                    },
                )?
            }
            Check::Gronwall => {
                let constants = derive_c1_c2(&cert, &tr.diagnostics, config.gronwall.mode, &mut ledger)?;
                let r = gronwall_check(&tr, &constants)?;
                columns.gronwall_rhs = Some(r.points.iter().map(|p| p.rhs).collect());
                outcome("gronwall", r.verdict, &r)?
            }
            Check::Trap | Check::Coulomb => {
                let (eps, share, best) = match (config.trap.epsilon, config.trap.delta_fraction) {
                    (Some(e), Some(s)) => (e, s, None),
                    _ => {
                        let (e, s, ratio) = tune_trap_parameters(&tr, &ledger)?;
                        (e, s, Some(ratio))
                    }
                };
                let r = if *check == Check::Coulomb {
                    coulomb_check(&tr, &mut ledger, eps, share)?
                } else {
                    weighted_trap_check(&tr, &mut ledger, eps, share)?
                };
                columns.trap_x_bar = Some(r.x_bar);
                let verdict = r.verdict;
                let name = if *check == Check::Coulomb { "coulomb" } else { "trap" };
                outcome(name, verdict, TrapDetail { tuned: best.is_some(), best_ratio: best, report: r })?
            }
            Check::Local => {
                let r = local_estimate_check(&tr, &mut ledger, config.local.epsilon)?;
                outcome("local", r.verdict, &r)?
            }
            Check::Growth => {
                let r = growth_check(&tr, mu)?;
                if let Some(c) = r.c_mu {
                    ledger.set("c_mu", c, Provenance::Fitted, "max of M_mu/(1+t)");
                }
                ledger.set("c_growth", r.c_growth, Provenance::Fitted, "max of ||f||^2/(1+t)^2");
                columns.growth_envelope = Some(r.envelope.clone());
                outcome("growth", r.verdict, &r)?
            }
            Check::H1 => {
                let r = h1_integrability(&tr)?;
                outcome("h1", r.verdict, &r)?
            }
        };
        results.push(result);
    }
    let verdict = if tr.blow_up {
        Verdict::Fail
    } else {
        results.iter().fold(Verdict::Pass, |a, c| a.combine(c.verdict))
    };
    let report = Report {
        header: header(config, subcommand),
        config: config.clone(),
        ledger,
        certificate: Some(CertificateSummary::from(&cert)),
        run: Some(run_summary(&tr)),
        checks: results,
        bench: None,
        verdict,
        exit_code: exit_code(verdict),
    };
    Ok(Outcome { report, trajectory: Some(tr), columns })
}

/// Certificate only. Uses the `coercivity.*` inputs, else the initial state.
pub fn coercivity(config: &RunConfig) -> Result<Outcome> {
    let c = &config.coercivity;
    let cert = if c.m0.is_some() && c.e0.is_some() && c.h0.is_some() {
        certificate(config, None)?
    } else {
        certificate(config, Some(&initial_state(config)?))?
    };
    let mut ledger = initial_ledger(config);
    ledger.set_ln("C_coer", cert.log_c_coer, Provenance::Traced, "coercivity certificate");
    let report = Report {
        header: header(config, Subcommand::Coercivity),
        config: config.clone(),
        ledger,
        certificate: Some(CertificateSummary::from(&cert)),
        run: None,
        checks: Vec::new(),
        bench: None,
        verdict: Verdict::Pass,
        exit_code: 0,
    };
    Ok(Outcome { report, trajectory: None, columns: CheckColumns::default() })
}

pub fn bench_config(config: &RunConfig) -> BenchConfig {
    let b = &config.bench;
    BenchConfig {
        seed: config.seed,
        count: b.count,
        n: b.n,
        extent: b.extent,
        gamma: config.gamma,
        alpha: config.alpha,
        pitt_gammas: b.pitt_gammas.clone(),
        pitt_count: b.pitt_count,
        cubic_count: b.cubic_count,
        small_set_count: b.small_set_count,
        epsilons: b.epsilons.clone(),
        sets_per_epsilon: b.sets_per_epsilon,
    }
}

pub fn bench(config: &RunConfig) -> Result<Outcome> {
    let report = run_bench(&bench_config(config))?;
    let verdict = Verdict::from_bool(report.pass);
    let mut ledger = initial_ledger(config);
    if let Some(s) = report.summaries.iter().find(|s| s.name == "mass lower bound constant") {
        ledger.set("c_mass_bench", s.min, Provenance::Fitted, "min over the family of A^2/(m^{11/2} e^{-7/2})");
    }
    let report = Report {
        header: header(config, Subcommand::Bench),
        config: config.clone(),
        ledger,
        certificate: None,
        run: None,
        checks: Vec::new(),
        bench: Some(report),
        verdict,
        exit_code: exit_code(verdict),
    };
    Ok(Outcome { report, trajectory: None, columns: CheckColumns::default() })
}

pub fn run(config: &RunConfig, subcommand: Subcommand) -> Result<Outcome> {
    match subcommand {
        Subcommand::Simulate => simulate(config),
        Subcommand::Coercivity => coercivity(config),
        Subcommand::Verify => verify(config),
        Subcommand::Bench => bench(config),
    }
}
