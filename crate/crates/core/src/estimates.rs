//! Checks of the a-priori estimates along a computed trajectory: the
//! exponential L² envelope, the weighted smallness trap (including the
//! Coulomb case), the local L² inequality, polynomial growth and time
//! integrability of the weighted H¹ norm.
//!
//! Constants the estimates leave generic are fitted to the trajectory and
//! stored in the ledger with a `fitted` tag.

use serde::{Deserialize, Serialize};

use crate::coercivity::CoercivityCertificate;
use crate::error::{LandauError, Result};
use crate::ledger::{ConstantsLedger, Provenance, Verdict};
use crate::solver::{DiagnosticsRow, Trajectory};

/// Relative tolerance on `sup X <= X_bar`.
pub const TRAP_TOLERANCE: f64 = 1e-3;
/// Relative tolerance of the two evaluations of the cubic Coulomb term.
pub const COULOMB_IDENTITY_TOLERANCE: f64 = 1e-10;
/// Largest admissible log-log slope of `M_{-3 gamma}` against `1 + t`.
pub const MOMENT_SLOPE_LIMIT: f64 = 1.1;
/// Largest admissible log-log slope of `||f||^2` against `1 + t`.
pub const GROWTH_SLOPE_LIMIT: f64 = 2.1;
/// Largest relative change of the H¹ time integral when every other output
/// is dropped.
pub const STRIDE_CHANGE_LIMIT: f64 = 0.01;

/// Default share of the weighted gradient kept by the dissipation bound
/// `I >= C_coer (c_diss G - c_w3 X)`.
pub const DISSIPATION_FRACTION: f64 = 1.0;
/// Sharp Hardy constant in three dimensions.
pub const HARDY_CONSTANT: f64 = 0.25;

fn invalid(msg: impl Into<String>) -> LandauError {
    LandauError::InvalidParameter(msg.into())
}

/// `ln(exp(a) + exp(b))` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let hi = a.max(b);
    hi + (-(a - b).abs()).exp().ln_1p()
}

/// Derivative of `values` sampled at strictly increasing `times`, using
/// three-point Lagrange stencils (second order on nonuniform spacing,
/// one-sided at the ends). Two samples give the secant slope.
pub fn time_derivative(times: &[f64], values: &[f64]) -> Result<Vec<f64>> {
    let n = times.len();
    if n != values.len() {
        return Err(invalid("times and values differ in length"));
    }
    if n < 2 {
        return Err(invalid("a time derivative needs at least two samples"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("output times must be strictly increasing"));
    }
    if n == 2 {
        let s = (values[1] - values[0]) / (times[1] - times[0]);
        return Ok(vec![s, s]);
    }
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        let h1 = times[i] - times[i - 1];
        let h2 = times[i + 1] - times[i];
        out[i] = -h2 / (h1 * (h1 + h2)) * values[i - 1]
            + (h2 - h1) / (h1 * h2) * values[i]
            + h1 / (h2 * (h1 + h2)) * values[i + 1];
    }
    let (h1, h2) = (times[1] - times[0], times[2] - times[1]);
    out[0] = -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * values[0] + (h1 + h2) / (h1 * h2) * values[1]
        - h1 / (h2 * (h1 + h2)) * values[2];
    let (h1, h2) = (times[n - 2] - times[n - 3], times[n - 1] - times[n - 2]);
    out[n - 1] = h2 / (h1 * (h1 + h2)) * values[n - 3] - (h1 + h2) / (h1 * h2) * values[n - 2]
        + (2.0 * h2 + h1) / (h2 * (h1 + h2)) * values[n - 1];
    Ok(out)
}

/// Least-squares slope of `ln y` against `ln(1 + t)` over the samples with
/// `t > 0`. Zero when there are fewer than two such samples.
pub fn log_log_slope(times: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(y)
        .filter(|(t, v)| **t > 0.0 && **v > 0.0)
        .map(|(t, v)| (t.ln_1p(), v.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

fn times_of(rows: &[DiagnosticsRow]) -> Vec<f64> {
    rows.iter().map(|r| r.t).collect()
}

fn l2_squared(rows: &[DiagnosticsRow]) -> Vec<f64> {
    rows.iter().map(|r| r.l2 * r.l2).collect()
}

// ---------------------------------------------------------------------------
// Exponential L² envelope, gamma in [-2, 0).

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantsMode {
    Traced,
    Fitted,
}

/// Constants of `||f(t)||^2 <= exp(C2 t) (||f0||^2 + C1 t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GronwallConstants {
    pub mode: ConstantsMode,
    /// `ln C1`; `-inf` when `C1 = 0`.
    pub ln_c1: f64,
    pub c2: f64,
    /// One line per factor.
    pub trace: Vec<String>,
}

fn check_gronwall_range(gamma: f64) -> Result<()> {
    if !(-2.0..0.0).contains(&gamma) {
        return Err(LandauError::Regime(format!(
            "the exponential L2 envelope needs gamma in [-2, 0) (Theorem part 1), got {gamma}"
        )));
    }
    Ok(())
}

/// Composes `C1` and `C2` from the certificate and the ledger's `c_pitt`
/// and `c_parseval`.
///
/// With `R = 1`, `c_gamma = 2^{-gamma/2}`, Young exponents
/// `p = 10/(6-gamma)`, `q = 10/(4+gamma)` and `eps` fixed by
/// `((6-gamma)/5) eps^2 = C_coer/2`:
/// `K = eps^{(gamma-6)/5} 3 c_gamma (gamma+3) (1+R^2)^{-gamma/2} c_pitt
/// 2 max(m^2, c_parseval) (m + 2e)`, `C1 = (2/q) K^q` and
/// `C2 = 2 (gamma+3) m + gamma^2 C_coer / 4`.
pub fn traced_gronwall_constants(
    cert: &CoercivityCertificate,
    ledger: &ConstantsLedger,
) -> Result<GronwallConstants> {
    let gamma = cert.gamma;
    check_gronwall_range(gamma)?;
    let c_pitt = ledger.value("c_pitt")?;
    let c_parseval = ledger.value("c_parseval")?;
    if !(c_pitt > 0.0 && c_parseval > 0.0) {
        return Err(invalid("c_pitt and c_parseval must be positive"));
    }
    let (m, e) = (cert.m0, cert.e0);
    let radius: f64 = 1.0;
    let q = 10.0 / (4.0 + gamma);
    let ln_c_coer = cert.log_c_coer;
    let ln_eps = 0.5 * (ln_c_coer - 2f64.ln() + 5f64.ln() - (6.0 - gamma).ln());
    let ln_c_gamma = -0.5 * gamma * 2f64.ln();
    let ln_weight = -0.5 * gamma * (1.0 + radius * radius).ln();
    let ln_split = 2f64.ln() + (m * m).max(c_parseval).ln();
    let ln_moment = (m + 2.0 * e).ln();
    let ln_k = (gamma - 6.0) / 5.0 * ln_eps
        + 3f64.ln()
        + ln_c_gamma
        + (gamma + 3.0).ln()
        + ln_weight
        + c_pitt.ln()
        + ln_split
        + ln_moment;
    let ln_c1 = (2.0 / q).ln() + q * ln_k;
    let c2 = 2.0 * (gamma + 3.0) * m + gamma * gamma * ln_c_coer.exp() / 4.0;
    let trace = vec![
        format!("gamma = {gamma}, m0 = {m}, e0 = {e}, R = {radius}"),
        format!("ln C_coer = {ln_c_coer:.17e}"),
        format!("Young exponents p = {:.17e}, q = {q:.17e}", 10.0 / (6.0 - gamma)),
        format!("ln eps = {ln_eps:.17e} from ((6-gamma)/5) eps^2 = C_coer/2"),
        format!("ln eps^((gamma-6)/5) = {:.17e}", (gamma - 6.0) / 5.0 * ln_eps),
        format!("ln c_gamma = ln 2^(-gamma/2) = {ln_c_gamma:.17e}"),
        format!("ln (gamma+3) = {:.17e}", (gamma + 3.0).ln()),
        format!("ln (1+R^2)^(-gamma/2) = {ln_weight:.17e}"),
        format!("ln c_pitt = {:.17e}", c_pitt.ln()),
        format!("ln 2 max(m^2, c_parseval) = {ln_split:.17e}"),
        format!("ln M_2 = ln(m + 2e) = {ln_moment:.17e}"),
        format!("ln K = {ln_k:.17e}"),
        format!("ln C1 = ln(2/q) + q ln K = {ln_c1:.17e}"),
        format!("C2 = 2 (gamma+3) m + gamma^2 C_coer / 4 = {c2:.17e}"),
    ];
    Ok(GronwallConstants { mode: ConstantsMode::Traced, ln_c1, c2, trace })
}

/// Smallest nonnegative `(C1, C2)` with `y_i <= C1 + C2 x_i` for all samples,
/// minimizing the total slack. The optimum sits on a vertex of the feasible
/// region, so candidate lines are enumerated exactly.
pub fn fit_upper_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let mut candidates: Vec<(f64, f64)> = vec![(y.iter().cloned().fold(0.0, f64::max), 0.0)];
    let slope_through_origin = x
        .iter()
        .zip(y)
        .filter(|(xi, _)| **xi > 0.0)
        .map(|(xi, yi)| yi / xi)
        .fold(0.0, f64::max);
    candidates.push((0.0, slope_through_origin));
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            if x[j] != x[i] {
                let slope = (y[j] - y[i]) / (x[j] - x[i]);
                candidates.push((y[i] - slope * x[i], slope));
            }
        }
    }
    let feasible = |c1: f64, c2: f64| {
        c1 >= 0.0
            && c2 >= 0.0
            && x.iter().zip(y).all(|(xi, yi)| yi - (c1 + c2 * xi) <= 1e-14 * yi.abs().max(c1))
    };
    let slack = |c1: f64, c2: f64| x.iter().zip(y).map(|(xi, yi)| c1 + c2 * xi - yi).sum::<f64>();
    let mut best = candidates[0];
    let mut best_slack = slack(best.0, best.1);
    for &(c1, c2) in &candidates[1..] {
        if feasible(c1, c2) {
            let s = slack(c1, c2);
            if s < best_slack {
                best = (c1, c2);
                best_slack = s;
            }
        }
    }
    // Lift the intercept over any rounding-level violation.
    let (mut c1, c2) = best;
    while let Some(excess) = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| yi - (c1 + c2 * xi))
        .filter(|gap| *gap > 0.0)
        .reduce(f64::max)
    {
        c1 += excess.max(c1 * f64::EPSILON).max(f64::MIN_POSITIVE);
    }
    (c1, c2)
}

/// Fits `C1, C2` so that `d/dt ||f||^2 <= C1 + C2 ||f||^2` (finite
/// differences in time) is tight along `rows`.
pub fn fitted_gronwall_constants(rows: &[DiagnosticsRow]) -> Result<GronwallConstants> {
    let x = l2_squared(rows);
    let y = time_derivative(&times_of(rows), &x)?;
    let (c1, c2) = fit_upper_line(&x, &y);
    Ok(GronwallConstants {
        mode: ConstantsMode::Fitted,
        ln_c1: c1.ln(),
        c2,
        trace: vec![
            format!("fitted over {} outputs: d/dt ||f||^2 <= C1 + C2 ||f||^2", rows.len()),
            format!("C1 = {c1:.17e}"),
            format!("C2 = {c2:.17e}"),
        ],
    })
}

/// Derives `C1, C2` in the requested mode and records them in `ledger`.
pub fn derive_c1_c2(
    cert: &CoercivityCertificate,
    rows: &[DiagnosticsRow],
    mode: ConstantsMode,
    ledger: &mut ConstantsLedger,
) -> Result<GronwallConstants> {
    check_gronwall_range(cert.gamma)?;
    let constants = match mode {
        ConstantsMode::Traced => traced_gronwall_constants(cert, ledger)?,
        ConstantsMode::Fitted => fitted_gronwall_constants(rows)?,
    };
    let provenance = match mode {
        ConstantsMode::Traced => Provenance::Traced,
        ConstantsMode::Fitted => Provenance::Fitted,
    };
    ledger.set_ln("C1", constants.ln_c1, provenance, "additive constant of the L2 envelope");
    ledger.set("C2", constants.c2, provenance, "exponential rate of the L2 envelope");
    Ok(constants)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GronwallPoint {
    pub t: f64,
    pub lhs: f64,
    pub ln_rhs: f64,
    /// `+inf` when the envelope exceeds the double range.
    pub rhs: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GronwallReport {
    pub constants: GronwallConstants,
    pub points: Vec<GronwallPoint>,
    pub verdict: Verdict,
}

/// `ln(exp(C2 t) (l0 + C1 t))`.
pub fn ln_gronwall_envelope(l0: f64, ln_c1: f64, c2: f64, t: f64) -> f64 {
    let additive = if t > 0.0 { ln_c1 + t.ln() } else { f64::NEG_INFINITY };
    c2 * t + log_add_exp(l0.ln(), additive)
}

/// Pointwise comparison of `||f(t)||^2` with the envelope. The margin at
/// `t = 0` is exactly zero.
pub fn gronwall_check(trajectory: &Trajectory, constants: &GronwallConstants) -> Result<GronwallReport> {
    check_gronwall_range(trajectory.gamma)?;
    let rows = &trajectory.diagnostics;
    let first = rows.first().ok_or_else(|| invalid("empty trajectory"))?;
    let l0 = first.l2 * first.l2;
    let t0 = first.t;
    let mut ok = !trajectory.blow_up;
    let points: Vec<GronwallPoint> = rows
        .iter()
        .map(|r| {
            let t = r.t - t0;
            let lhs = r.l2 * r.l2;
            let ln_rhs = ln_gronwall_envelope(l0, constants.ln_c1, constants.c2, t);
            let rhs = if t == 0.0 {
                l0
            } else if ln_rhs < 700.0 {
                (constants.c2 * t).exp() * (l0 + constants.ln_c1.exp() * t)
            } else {
                f64::INFINITY
            };
            ok &= lhs.ln() <= ln_rhs;
            GronwallPoint { t: r.t, lhs, ln_rhs, rhs, margin: rhs - lhs }
        })
        .collect();
    Ok(GronwallReport { constants: constants.clone(), points, verdict: Verdict::from_bool(ok) })
}

// ---------------------------------------------------------------------------
// Weighted smallness trap, gamma in [-3, -2].

/// Ball-splitting factors of the trap inequality for a cut-off radius `eps`:
/// `(S(eps), Phi(eps))` where `S` multiplies the nonlinear term
/// `E^{1/3} X^{1/3} G` and `Phi` the linear term `m X`.
pub fn trap_split_factors(gamma: f64, alpha: f64, eps: f64) -> (f64, f64) {
    let weight = (1.0 + eps * eps).powf(alpha);
    if gamma == -3.0 {
        (1.0 + weight * (2.0 * eps * eps + eps), 1.0 / eps + 1.0 / (eps * eps))
    } else {
        (eps.powf(3.0 + gamma) * weight, eps.powf(gamma))
    }
}

/// `X_tilde = ((c_diss C_coer - delta) / (c_nl S E^{1/3}))^3`.
pub fn x_tilde(c_diss_coer: f64, delta: f64, c_nl: f64, split: f64, e_moment: f64) -> f64 {
    let num = (c_diss_coer - delta).max(0.0);
    let den = c_nl * split * e_moment.cbrt();
    if den == 0.0 {
        return if num > 0.0 { f64::INFINITY } else { 0.0 };
    }
    (num / den).powi(3)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapReport {
    pub gamma: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub delta: f64,
    /// `E = M_2 = m + 2e`.
    pub e_moment: f64,
    pub x0: f64,
    pub x_tilde: f64,
    pub x_eq: f64,
    pub x_bar: f64,
    pub sup_x: f64,
    /// Residual of the differential trap inequality at every output, with
    /// a finite-difference `dX/dt`.
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    /// Set only for the Coulomb case.
    pub coulomb_identity_error: Option<f64>,
    pub verdict: Verdict,
    pub message: String,
}

fn set_fitted(ledger: &mut ConstantsLedger, name: &str, value: f64, note: &str) {
    if ledger.entry(name).map_or(true, |e| e.provenance != Provenance::Config) {
        ledger.set(name, value, Provenance::Fitted, note);
    }
}

fn check_trap_parameters(gamma: f64, alpha: f64, epsilon: f64, delta_fraction: f64) -> Result<()> {
    if !(-3.0..=-2.0).contains(&gamma) {
        return Err(LandauError::Regime(format!("the weighted trap needs gamma in [-3, -2], got {gamma}")));
    }
    if alpha < -1.0 - 1.5 * gamma {
        return Err(invalid(format!(
            "weight exponent alpha = {alpha} violates alpha >= -1 - 3/2 gamma = {}",
            -1.0 - 1.5 * gamma
        )));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(invalid("trap cut-off epsilon must be positive"));
    }
    if !(delta_fraction > 0.0 && delta_fraction < 1.0) {
        return Err(invalid("delta must lie strictly between 0 and c_diss C_coer"));
    }
    Ok(())
}

/// Fits the trap constants on `trajectory` and records them in `ledger`:
/// `C_coer_observed` (minimum eigenvalue ratio), `c_w3` (weight commutator),
/// `c_mass` (mass lower bound), `c_nl` (nonlinear remainder). Entries tagged
/// `config` are kept. `C_A`, `c_diss` and `c_hardy` get defaults when absent.
pub fn fit_trap_constants(trajectory: &Trajectory, ledger: &mut ConstantsLedger, epsilon: f64) -> Result<()> {
    let rows = &trajectory.diagnostics;
    if rows.is_empty() {
        return Err(invalid("empty trajectory"));
    }
    let gamma = trajectory.gamma;
    let alpha = trajectory.alpha;
    let c_coer = rows.iter().map(|r| r.coer_min_ratio).fold(f64::INFINITY, f64::min);
    if !(c_coer > 0.0) {
        return Err(invalid("observed coercivity ratio is not positive"));
    }
    set_fitted(ledger, "C_coer_observed", c_coer, "min over outputs of min_v lambda_min(a_bar)/<v>^gamma");
    if !ledger.contains("c_diss") {
        ledger.set("c_diss", DISSIPATION_FRACTION, Provenance::Config, "gradient share kept after the weight commutator");
    }
    let c_diss = ledger.value("c_diss")?;
    if !(c_diss > 0.0 && c_diss <= 1.0) {
        return Err(invalid(format!("c_diss must lie in (0, 1], got {c_diss}")));
    }
    if rows.len() < 2 {
        return Err(invalid("the trap check needs at least two outputs"));
    }
    if !ledger.contains("C_A") {
        ledger.set("C_A", 1.0, Provenance::Config, "linear far-field term");
    }
    if !ledger.contains("c_hardy") {
        ledger.set("c_hardy", HARDY_CONSTANT, Provenance::Traced, "sharp 3-D Hardy constant");
    }
    let c_a = ledger.value("C_A")?;

    let c_w3 = rows
        .iter()
        .map(|r| ((c_diss * r.h1_gamma_half_g - r.weighted_grad_g) / r.x).max(0.0))
        .fold(0.0, f64::max);
    set_fitted(ledger, "c_w3", c_w3, "max of (c_diss G - J)_+ / X");

    let c_mass = rows
        .iter()
        .map(|r| r.hardy_weighted / (r.mass.powf(5.5) * r.energy.powf(-3.5)))
        .fold(f64::INFINITY, f64::min);
    set_fitted(ledger, "c_mass", c_mass, "min of A^2 / (m^{11/2} e^{-7/2})");

    let (split, phi) = trap_split_factors(gamma, alpha, epsilon);
    let xs: Vec<f64> = rows.iter().map(|r| r.x).collect();
    let dxdt = time_derivative(&times_of(rows), &xs)?;
    let c_nl = rows
        .iter()
        .zip(&dxdt)
        .map(|(r, d)| {
            let remainder = d + r.dissipation_g - c_a * r.mass * phi * r.x;
            let scale = split * (r.mass + 2.0 * r.energy).cbrt() * r.x.cbrt() * r.h1_gamma_half_g;
            (remainder / scale).max(0.0)
        })
        .fold(0.0, f64::max);
    set_fitted(ledger, "c_nl", c_nl, "nonlinear remainder per S(eps) E^{1/3} X^{1/3} G");
    Ok(())
}

/// Trap check with cut-off `epsilon` and `delta = delta_fraction * c_diss *
/// C_coer_observed`. The trap constants are refitted for `epsilon` unless
/// the ledger pins them with a `config` tag.
pub fn weighted_trap_check(
    trajectory: &Trajectory,
    ledger: &mut ConstantsLedger,
    epsilon: f64,
    delta_fraction: f64,
) -> Result<TrapReport> {
    let gamma = trajectory.gamma;
    let alpha = trajectory.alpha;
    check_trap_parameters(gamma, alpha, epsilon, delta_fraction)?;
    fit_trap_constants(trajectory, ledger, epsilon)?;
    let rows = &trajectory.diagnostics;
    let first = &rows[0];
    let c_coer = ledger.value("C_coer_observed")?;
    let c_diss = ledger.value("c_diss")?;
    let c_a = ledger.value("C_A")?;
    let c_w3 = ledger.value("c_w3")?;
    let c_mass = ledger.value("c_mass")?;
    let c_nl = ledger.value("c_nl")?;
    let c_hardy = ledger.value("c_hardy")?;

    let delta = delta_fraction * c_diss * c_coer;
    let (m, e) = (first.mass, first.energy);
    let e_moment = m + 2.0 * e;
    let (split, phi) = trap_split_factors(gamma, alpha, epsilon);
    let xt = x_tilde(c_diss * c_coer, delta, c_nl, split, e_moment);
    let x_eq = c_hardy * c_mass * m.powf(5.5) * e.powf(-3.5) * delta / (c_w3 * c_coer + m * c_a * phi);
    let x_bar = xt.min(x_eq);

    let times = times_of(rows);
    let xs: Vec<f64> = rows.iter().map(|r| r.x).collect();
    let dxdt = time_derivative(&times, &xs)?;
    let residuals: Vec<f64> = rows
        .iter()
        .zip(&dxdt)
        .map(|(r, d)| {
            let rhs = -r.h1_gamma_half_g * (c_diss * c_coer - c_nl * split * e_moment.cbrt() * r.x.cbrt())
                + (c_w3 * c_coer + c_a * r.mass * phi) * r.x;
            d - rhs
        })
        .collect();
    let max_residual = residuals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let x0 = first.x;
    let sup_x = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (verdict, message) = if trajectory.blow_up {
        (Verdict::Fail, "trajectory blew up".to_string())
    } else if x0 > x_bar {
        (Verdict::HypothesesUnmet, format!("smallness unmet: X(0) = {x0:.6e} > X_bar = {x_bar:.6e}"))
    } else if sup_x <= x_bar * (1.0 + TRAP_TOLERANCE) {
        (Verdict::Pass, format!("sup X = {sup_x:.6e} <= X_bar = {x_bar:.6e}"))
    } else {
        (Verdict::Fail, format!("sup X = {sup_x:.6e} exceeds X_bar = {x_bar:.6e}"))
    };
    Ok(TrapReport {
        gamma,
        alpha,
        epsilon,
        delta,
        e_moment,
        x0,
        x_tilde: xt,
        x_eq,
        x_bar,
        sup_x,
        residuals,
        max_residual,
        coulomb_identity_error: None,
        verdict,
        message,
    })
}

/// Cut-off and delta share minimizing `X(0) / X_bar` over a fixed geometric
/// grid: 40 values of `eps` in `[0.02, 25]` and 30 shares in `[0.002, 0.99]`.
/// Returns `(eps, delta_fraction, X(0) / X_bar)`.
pub fn tune_trap_parameters(trajectory: &Trajectory, ledger: &ConstantsLedger) -> Result<(f64, f64, f64)> {
    let mut best = (f64::NAN, f64::NAN, f64::INFINITY);
    for i in 0..40 {
        let eps = 0.02 * 1.2f64.powi(i);
        for j in 0..30 {
            let share = (0.002 * 1.23f64.powi(j)).min(0.99);
            let mut scratch = ledger.clone();
            let report = weighted_trap_check(trajectory, &mut scratch, eps, share)?;
            let ratio = report.x0 / report.x_bar;
            if ratio < best.2 {
                best = (eps, share, ratio);
            }
        }
    }
    Ok(best)
}

/// Relative disagreement of `-(1/2) integral c_bar g^2` and
/// `4 pi integral <v>^{2 alpha} f^3`, which coincide when `c_bar = -8 pi f`.
pub fn coulomb_identity_error(row: &DiagnosticsRow) -> f64 {
    let direct = 4.0 * std::f64::consts::PI * row.cubic_alpha;
    let contraction = row.c_contraction_g;
    let scale = direct.abs().max(contraction.abs());
    if scale == 0.0 {
        0.0
    } else {
        (direct - contraction).abs() / scale
    }
}

/// Coulomb case: audits the cubic identity at every output (a mismatch is an
/// error, since it means the delta path of the kernel is broken), then runs
/// the trap logic with the Coulomb split factors.
pub fn coulomb_check(
    trajectory: &Trajectory,
    ledger: &mut ConstantsLedger,
    epsilon: f64,
    delta_fraction: f64,
) -> Result<TrapReport> {
    if trajectory.gamma != -3.0 {
        return Err(LandauError::Regime(format!("the Coulomb check needs gamma = -3, got {}", trajectory.gamma)));
    }
    let worst = trajectory.diagnostics.iter().map(coulomb_identity_error).fold(0.0, f64::max);
    if !(worst <= COULOMB_IDENTITY_TOLERANCE) {
        return Err(LandauError::CoulombIdentity(worst));
    }
    let mut report = weighted_trap_check(trajectory, ledger, epsilon, delta_fraction)?;
    report.coulomb_identity_error = Some(worst);
    Ok(report)
}

// ---------------------------------------------------------------------------
// Local L² inequality, gamma in (-3, -2).

/// `phi(t) = eps^{1/(3+gamma)} (1+t)^{-1/(3(3+gamma))}`.
pub fn local_cutoff(epsilon: f64, gamma: f64, t: f64) -> f64 {
    epsilon.powf(1.0 / (3.0 + gamma)) * (1.0 + t).powf(-1.0 / (3.0 * (3.0 + gamma)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalReport {
    pub gamma: f64,
    pub epsilon: f64,
    pub cutoff: Vec<f64>,
    /// `max_t M_{-3 gamma}(t) / (1 + t)`.
    pub c_moment: f64,
    pub moment_slope: f64,
    pub c_local: f64,
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    /// Residual on the second half of the outputs with `C` fitted on the
    /// first half only; informational.
    pub holdout_max_residual: Option<f64>,
    pub verdict: Verdict,
}

struct LocalTerms {
    lhs: Vec<f64>,
    dissipation: Vec<f64>,
    forcing: Vec<f64>,
}

fn local_terms(rows: &[DiagnosticsRow], gamma: f64, epsilon: f64, c_coer: f64) -> Result<LocalTerms> {
    let times = times_of(rows);
    let lhs = time_derivative(&times, &l2_squared(rows))?;
    let k = (18.0 + 4.0 * gamma) / 9.0;
    let p = -3.0 / gamma;
    let beta = -gamma / (3.0 * (3.0 + gamma));
    let t0 = times[0];
    let dissipation = rows
        .iter()
        .map(|r| (c_coer - epsilon / p * r.l2.powf(k)) * r.h1_gamma_half)
        .collect();
    let forcing = rows
        .iter()
        .map(|r| r.l2 * r.l2 + (1.0 + r.t - t0).powf(beta) * r.l2.powf(k))
        .collect();
    Ok(LocalTerms { lhs, dissipation, forcing })
}

fn fit_local(terms: &LocalTerms, range: std::ops::Range<usize>) -> f64 {
    let mut c = range
        .clone()
        .map(|i| ((terms.lhs[i] + terms.dissipation[i]) / terms.forcing[i]).max(0.0))
        .fold(0.0, f64::max);
    // The quotient can round down by an ulp.
    while c > 0.0 && range.clone().any(|i| terms.lhs[i] + terms.dissipation[i] - c * terms.forcing[i] > 0.0) {
        c *= 1.0 + 2.0 * f64::EPSILON;
    }
    c
}

/// Checks `d/dt ||f||^2 <= -(c - (eps/p) ||f||^k) G + C ||f||^2 +
/// C (1+t)^{-gamma/(3(3+gamma))} ||f||^k` with `k = (18+4 gamma)/9`,
/// `p = -3/gamma`, `G = integral |grad(<v>^{gamma/2} f)|^2`, `c` the
/// observed coercivity and `C` fitted; and that `M_{-3 gamma}` grows at most
/// linearly.
pub fn local_estimate_check(trajectory: &Trajectory, ledger: &mut ConstantsLedger, epsilon: f64) -> Result<LocalReport> {
    let gamma = trajectory.gamma;
    if !(gamma > -3.0 && gamma < -2.0) {
        return Err(LandauError::Regime(format!("the local L2 estimate needs gamma in (-3, -2), got {gamma}")));
    }
    if !(epsilon > 0.0) {
        return Err(invalid("epsilon must be positive"));
    }
    let rows = &trajectory.diagnostics;
    if rows.len() < 2 {
        return Err(invalid("the local estimate needs at least two outputs"));
    }
    let t0 = rows[0].t;
    let times = times_of(rows);
    let cutoff = times.iter().map(|t| local_cutoff(epsilon, gamma, t - t0)).collect();
    let moments: Vec<f64> = rows.iter().map(|r| r.m_neg3gamma).collect();
    let c_moment = rows
        .iter()
        .map(|r| r.m_neg3gamma / (1.0 + r.t - t0))
        .fold(0.0, f64::max);
    let shifted: Vec<f64> = times.iter().map(|t| t - t0).collect();
    let moment_slope = log_log_slope(&shifted, &moments);

    let c_coer = rows.iter().map(|r| r.coer_min_ratio).fold(f64::INFINITY, f64::min);
    set_fitted(ledger, "C_coer_observed", c_coer, "min over outputs of min_v lambda_min(a_bar)/<v>^gamma");
    let c_coer = ledger.value("C_coer_observed")?;
    let terms = local_terms(rows, gamma, epsilon, c_coer)?;
    set_fitted(ledger, "c_local", fit_local(&terms, 0..rows.len()), "forcing constant of the local L2 inequality");
    set_fitted(ledger, "c_moment", c_moment, "max of M_{-3 gamma}/(1+t)");
    let c_local = ledger.value("c_local")?;
    let residuals: Vec<f64> = (0..rows.len())
        .map(|i| terms.lhs[i] + terms.dissipation[i] - c_local * terms.forcing[i])
        .collect();
    let max_residual = residuals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let holdout_max_residual = (rows.len() >= 4).then(|| {
        let half = rows.len() / 2;
        let c = fit_local(&terms, 0..half);
        (half..rows.len())
            .map(|i| terms.lhs[i] + terms.dissipation[i] - c * terms.forcing[i])
            .fold(f64::NEG_INFINITY, f64::max)
    });
    let ok = !trajectory.blow_up
        && c_moment.is_finite()
        && moment_slope <= MOMENT_SLOPE_LIMIT
        && max_residual <= 0.0;
    Ok(LocalReport {
        gamma,
        epsilon,
        cutoff,
        c_moment,
        moment_slope,
        c_local,
        residuals,
        max_residual,
        holdout_max_residual,
        verdict: Verdict::from_bool(ok),
    })
}

// ---------------------------------------------------------------------------
// Polynomial growth, gamma in (-2, 0).

/// Moment order of the growth assumption, `-4 gamma (3 - gamma) / (3 (2 + gamma))`.
pub fn growth_moment_order(gamma: f64) -> Result<f64> {
    if !(gamma > -2.0 && gamma < 0.0) {
        return Err(LandauError::Regime(format!(
            "the growth bound needs gamma in (-2, 0); the moment order diverges as gamma -> -2, got {gamma}"
        )));
    }
    Ok(-4.0 * gamma * (3.0 - gamma) / (3.0 * (2.0 + gamma)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub gamma: f64,
    pub mu: f64,
    /// `max_t M_mu(t) / (1 + t)`; `None` when the trajectory lacks `M_mu`.
    pub c_mu: Option<f64>,
    /// `max_t ||f||^2 / (1 + t)^2`.
    pub c_growth: f64,
    pub envelope: Vec<f64>,
    pub slope: f64,
    pub verdict: Verdict,
}

/// Fits the quadratic envelope of `||f||^2` and checks its log-log slope.
/// `M_mu` is read from the trajectory's extra moment when it was recorded
/// at order `mu`.
pub fn growth_check(trajectory: &Trajectory, extra_moment_order: Option<f64>) -> Result<GrowthReport> {
    let gamma = trajectory.gamma;
    let mu = growth_moment_order(gamma)?;
    let rows = &trajectory.diagnostics;
    if rows.is_empty() {
        return Err(invalid("empty trajectory"));
    }
    let t0 = rows[0].t;
    let c_mu = match extra_moment_order {
        Some(s) if (s - mu).abs() <= 1e-12 * mu => Some(
            rows.iter()
                .filter_map(|r| r.m_extra.map(|m| m / (1.0 + r.t - t0)))
                .fold(0.0, f64::max),
        ),
        _ => None,
    };
    let l2sq = l2_squared(rows);
    let c_growth = rows
        .iter()
        .zip(&l2sq)
        .map(|(r, l)| l / (1.0 + r.t - t0).powi(2))
        .fold(0.0, f64::max);
    let envelope = rows.iter().map(|r| c_growth * (1.0 + r.t - t0).powi(2)).collect();
    let shifted: Vec<f64> = rows.iter().map(|r| r.t - t0).collect();
    let slope = log_log_slope(&shifted, &l2sq);
    Ok(GrowthReport {
        gamma,
        mu,
        c_mu,
        c_growth,
        envelope,
        slope,
        verdict: Verdict::from_bool(!trajectory.blow_up && slope <= GROWTH_SLOPE_LIMIT),
    })
}

// ---------------------------------------------------------------------------
// Time integrability of the weighted H¹ norm.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H1IntegralReport {
    pub alpha: f64,
    pub integral: f64,
    /// Same integral over every other output (the last output is kept).
    pub coarse_integral: f64,
    pub stride_change: f64,
    pub verdict: Verdict,
}

fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// `integral_0^T (||f||^2_{L^2_alpha} + integral |grad(<v>^alpha f)|^2) dt`
/// by the trapezoid rule over the outputs. The trajectory must have been
/// recorded with weight `alpha`.
pub fn h1_integrability(trajectory: &Trajectory) -> Result<H1IntegralReport> {
    let rows = &trajectory.diagnostics;
    if rows.is_empty() {
        return Err(invalid("empty trajectory"));
    }
    let times = times_of(rows);
    let values: Vec<f64> = rows.iter().map(|r| r.x + r.h1_alpha).collect();
    let integral = trapezoid(&times, &values);
    let mut keep: Vec<usize> = (0..rows.len()).step_by(2).collect();
    if *keep.last().unwrap() != rows.len() - 1 {
        keep.push(rows.len() - 1);
    }
    let ct: Vec<f64> = keep.iter().map(|&i| times[i]).collect();
    let cv: Vec<f64> = keep.iter().map(|&i| values[i]).collect();
    let coarse_integral = trapezoid(&ct, &cv);
    let stride_change = if integral == 0.0 { 0.0 } else { (integral - coarse_integral).abs() / integral.abs() };
    let ok = !trajectory.blow_up && integral.is_finite() && stride_change <= STRIDE_CHANGE_LIMIT;
    Ok(H1IntegralReport {
        alpha: trajectory.alpha,
        integral,
        coarse_integral,
        stride_change,
        verdict: Verdict::from_bool(ok),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn log_add_exp_matches_direct_sum() {
        assert_relative_eq!(log_add_exp(1.0, 2.0), (1f64.exp() + 2f64.exp()).ln(), max_relative = 1e-15);
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 3.0), 3.0);
        assert_relative_eq!(log_add_exp(1e5, 1e5), 1e5 + 2f64.ln(), max_relative = 1e-15);
    }

    #[test]
    fn derivative_is_exact_for_quadratics() {
        let t = [0.0, 0.1, 0.25, 0.3, 0.7, 1.0];
        let y: Vec<f64> = t.iter().map(|s| 3.0 * s * s - 2.0 * s + 1.0).collect();
        let d = time_derivative(&t, &y).unwrap();
        for (s, v) in t.iter().zip(d) {
            assert_relative_eq!(v, 6.0 * s - 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn derivative_converges_at_second_order() {
        let err = |n: usize| {
            let t: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).map(|s| s + 0.1 * s * s).collect();
            let y: Vec<f64> = t.iter().map(|s| s.sin()).collect();
            let d = time_derivative(&t, &y).unwrap();
            t.iter().zip(d).map(|(s, v)| (v - s.cos()).abs()).fold(0.0, f64::max)
        };
        let ratio = err(20) / err(40);
        assert!((3.5..4.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn derivative_rejects_bad_times() {
        assert!(time_derivative(&[0.0], &[1.0]).is_err());
        assert!(time_derivative(&[0.0, 0.0, 1.0], &[1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn upper_line_dominates_and_touches() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [2.0, 2.5, 3.5, 3.0];
        let (c1, c2) = fit_upper_line(&x, &y);
        assert!(c1 >= 0.0 && c2 >= 0.0);
        let gaps: Vec<f64> = x.iter().zip(&y).map(|(a, b)| c1 + c2 * a - b).collect();
        assert!(gaps.iter().all(|g| *g >= 0.0));
        assert!(gaps.iter().filter(|g| g.abs() < 1e-12).count() >= 1);
    }

    #[test]
    fn upper_line_of_decreasing_data_is_zero() {
        let (c1, c2) = fit_upper_line(&[1.0, 0.9, 0.8], &[-1.0, -0.5, -0.2]);
        assert_eq!((c1, c2), (0.0, 0.0));
    }

    #[test]
    fn envelope_at_time_zero_is_initial_norm() {
        assert_eq!(ln_gronwall_envelope(0.3, 1e5, 2.0, 0.0), 0.3f64.ln());
    }

    #[test]
    fn split_factors() {
        let (s, p) = trap_split_factors(-2.5, 2.75, 0.5);
        assert_relative_eq!(s, 0.5f64.sqrt() * 1.25f64.powf(2.75), max_relative = 1e-15);
        assert_relative_eq!(p, 0.5f64.powf(-2.5), max_relative = 1e-15);
        let (s, p) = trap_split_factors(-3.0, 3.5, 0.5);
        assert_relative_eq!(s, 1.0 + 1.25f64.powf(3.5) * 1.0, max_relative = 1e-15);
        assert_relative_eq!(p, 6.0, max_relative = 1e-15);
    }

    #[test]
    fn x_tilde_vanishes_as_delta_reaches_coercivity() {
        assert_eq!(x_tilde(0.2, 0.2, 1.0, 1.0, 1.0), 0.0);
        assert!(x_tilde(0.2, 0.1, 0.0, 1.0, 1.0).is_infinite());
    }

    #[test]
    fn local_cutoff_schedule() {
        assert_relative_eq!(local_cutoff(0.1, -2.5, 0.0), 0.1f64.powf(2.0), max_relative = 1e-15);
        let a = local_cutoff(0.1, -2.5, 1.0);
        let b = local_cutoff(0.1, -2.5, 3.0);
        assert!(b < a);
        assert_relative_eq!((a / b).ln() / (4f64 / 2.0).ln(), 2.0 / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn growth_order() {
        assert_relative_eq!(growth_moment_order(-1.0).unwrap(), 16.0 / 3.0, max_relative = 1e-15);
        let err = growth_moment_order(-2.0).unwrap_err().to_string();
        assert!(err.contains("diverges"));
        assert!(growth_moment_order(0.0).is_err());
    }

    #[test]
    fn log_log_slope_of_power_law() {
        let t: Vec<f64> = (0..10).map(|i| i as f64 * 0.7).collect();
        let y: Vec<f64> = t.iter().map(|s| 2.0 * (1.0 + s).powf(1.7)).collect();
        assert_relative_eq!(log_log_slope(&t, &y), 1.7, max_relative = 1e-12);
    }

    #[test]
    fn trapezoid_of_linear_function() {
        assert_relative_eq!(trapezoid(&[0.0, 0.5, 2.0], &[1.0, 2.0, 5.0]), 6.0, max_relative = 1e-15);
    }

    proptest! {
        #[test]
        fn x_tilde_is_monotone_in_delta(c in 0.01f64..1.0, a in 0.01f64..0.98, b in 0.01f64..0.98,
                                         nl in 0.1f64..10.0, e in 0.5f64..5.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(x_tilde(c, hi * c, nl, 1.0, e) <= x_tilde(c, lo * c, nl, 1.0, e));
        }

        #[test]
        fn upper_line_is_feasible(pts in proptest::collection::vec((0.1f64..10.0, -5.0f64..5.0), 2..12)) {
            let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let (c1, c2) = fit_upper_line(&x, &y);
            prop_assert!(c1 >= 0.0 && c2 >= 0.0);
            for (a, b) in x.iter().zip(&y) {
                prop_assert!(c1 + c2 * a >= *b);
            }
        }

        #[test]
        fn envelope_grows_with_c1(l0 in 1e-3f64..10.0, a in -50.0f64..50.0, d in 0.1f64..5.0,
                                  c2 in 0.0f64..3.0, t in 1e-3f64..10.0) {
            prop_assert!(ln_gronwall_envelope(l0, a + d, c2, t) >= ln_gronwall_envelope(l0, a, c2, t));
        }
    }
}
