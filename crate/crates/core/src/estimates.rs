//! Runtime audits of the ε-uniform bounds satisfied by regularized
//! trajectories, and of mass conservation and entropy admissibility for
//! limit trajectories.
//!
//! Each audit produces a [`Check`] keyed by the tag of the bound it tests:
//!
//! | id              | quantity                                              |
//! |-----------------|-------------------------------------------------------|
//! | `lm:cns`        | `max_t |mean u|`                                      |
//! | `lm:l2-u`       | [`l2_balance_residual`]                               |
//! | `lm:P-infty`    | `max_t ‖P‖∞` against the quartic root, plus the `‖P‖₂` identity |
//! | `lm:l-infty-u`  | `max_t ‖u‖∞·β^{1/3}` finite                           |
//! | `lm:bounded`    | the `L⁴` and `L²` families finite                     |
//! | `lm:501`        | the `ε∂ₓu`, `ε^{3/2}∂ₓₓu`, `β∂ₓu∂ₓₓu` families finite |
//! | `mass`          | `max_t |∫u dx|` (limit runs)                          |
//! | `def:sol`       | Kruzhkov entropy residual over 9 levels (limit runs)  |
//!
//! The single-run family checks only reject non-finite values; boundedness
//! in ε is judged across a sweep with [`bounded_across_sweep`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::limit::{entropy_residual_with, kruzhkov_levels, trajectory_potential, EntropyPair};
use crate::nonlocal::{compute_p, data_constant};
use crate::spectral::{derivative, Field};
use crate::trajectory::{RegParams, Trajectory, TrajectoryKind};

/// Pass thresholds for the audits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative L² balance residual.
    pub l2_balance: f64,
    /// Allowed overshoot of `max_t ‖P‖∞` over the quartic root.
    pub p_slack: f64,
    /// Relative residual of the `‖P‖₂²` identity.
    pub p_identity: f64,
    /// Absolute bound on `|mean u|`, scaled by `1 + ‖u₀‖∞`.
    pub mean: f64,
    /// Absolute bound on `|∫u dx|` for limit runs.
    pub mass: f64,
    /// Entropy tolerance per unit `‖u₀‖∞·T·L`.
    pub entropy: f64,
    /// A sweep family is bounded when its last value is at most this
    /// multiple of the sweep median.
    pub bounded_factor: f64,
    /// Minimum error ratio per ε-halving in convergence sweeps.
    pub min_ratio: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            l2_balance: 1e-6,
            p_slack: 0.1,
            p_identity: 1e-5,
            mean: 1e-12,
            mass: 1e-12,
            entropy: 1e-3,
            bounded_factor: 2.0,
            min_ratio: 1.2,
        }
    }
}

/// `max_t |‖u(t)‖₂² + 2ε∫₀ᵗ‖∂ₓu‖₂² − ‖u₀‖₂²| / max(1, ‖u₀‖₂²)`.
pub fn l2_balance_residual(traj: &Trajectory, eps: f64) -> f64 {
    let u0 = traj.initial().u.norm_l2_squared();
    let scale = u0.max(1.0);
    traj.states
        .iter()
        .zip(&traj.integrals)
        .map(|(s, i)| (s.u.norm_l2_squared() + 2.0 * eps * i.grad_l2 - u0).abs() / scale)
        .fold(0.0, f64::max)
}

/// `max_t |‖P(t)‖₂² − ‖P₀‖₂² + 2ε∫₀ᵗ‖u‖₂² + ∫₀ᵗ∫P u²| / max(1, ‖P₀‖₂²)`.
pub fn p_identity_residual(traj: &Trajectory, eps: f64) -> Result<f64> {
    let p0 = compute_p(&traj.initial().u)?.norm_l2_squared();
    let scale = p0.max(1.0);
    let mut worst: f64 = 0.0;
    for (s, i) in traj.states.iter().zip(&traj.integrals) {
        let p = compute_p(&s.u)?.norm_l2_squared();
        worst = worst.max((p - p0 + 2.0 * eps * i.u_l2 + i.p_u2).abs() / scale);
    }
    Ok(worst)
}

/// Positive root of `g(X) = X⁴ − A·X − B`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuarticBound {
    pub a: f64,
    pub b: f64,
    pub c_of_t: f64,
}

impl QuarticBound {
    pub fn g(&self, x: f64) -> f64 {
        x.powi(4) - self.a * x - self.b
    }
}

/// Bisection for the positive root with `A = 4C₀⁴T`, `B = 4C₀²‖P₀‖₂²`.
pub fn quartic_root(c0: f64, p0_l2: f64, t: f64) -> Result<QuarticBound> {
    if !(c0 >= 0.0) || !(p0_l2 >= 0.0) || !(t > 0.0) || !c0.is_finite() || !p0_l2.is_finite() || !t.is_finite() {
        return Err(Error::InvalidParams(format!("quartic bound for C0 = {c0}, |P0| = {p0_l2}, T = {t}")));
    }
    quartic_from_coefficients(4.0 * c0.powi(4) * t, 4.0 * c0 * c0 * p0_l2 * p0_l2)
}

/// Root of `X⁴ − A·X − B` for `A, B ≥ 0`, not both zero.
pub fn quartic_from_coefficients(a: f64, b: f64) -> Result<QuarticBound> {
    if a == 0.0 && b == 0.0 {
        return Err(Error::DegenerateBound);
    }
    let mut bound = QuarticBound { a, b, c_of_t: 0.0 };
    let mut hi = 1.0f64.max((2.0 * a).cbrt()).max((2.0 * b).powf(0.25));
    while bound.g(hi) <= 0.0 {
        hi *= 2.0;
    }
    // g < 0 on (0, root) and g > 0 beyond, since g(0) = −B ≤ 0 and g is convex on X > 0.
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if bound.g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    bound.c_of_t = 0.5 * (lo + hi);
    Ok(bound)
}

/// Sup and L² norms of `P` over the save times.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PAudit {
    pub linf_p: f64,
    pub l2_p: f64,
    /// `C(T)`, or 0 for a degenerate bound.
    pub bound: f64,
    pub pass: bool,
}

/// Compares `max_t ‖P‖∞` with `C(T)(1 + slack)`.
pub fn audit_p(traj: &Trajectory, bound: Option<&QuarticBound>, slack: f64) -> Result<PAudit> {
    let (mut linf_p, mut l2_p) = (0.0f64, 0.0f64);
    for s in &traj.states {
        let p = trajectory_potential(traj, &s.u)?;
        linf_p = linf_p.max(p.norm_linf());
        l2_p = l2_p.max(p.norm_l2());
    }
    let c = bound.map_or(0.0, |b| b.c_of_t);
    Ok(PAudit {
        linf_p,
        l2_p,
        bound: c,
        pass: linf_p <= c * (1.0 + slack),
    })
}

/// Quartic bound for a regularized trajectory, `None` when degenerate.
pub fn trajectory_bound(traj: &Trajectory, params: &RegParams) -> Result<Option<QuarticBound>> {
    let u0 = &traj.initial().u;
    let c0 = data_constant(u0, params.eps, params.beta);
    let p0 = compute_p(u0)?.norm_l2();
    match quartic_root(c0, p0, traj.t_end()) {
        Ok(b) => Ok(Some(b)),
        Err(Error::DegenerateBound) => Ok(None),
        Err(e) => Err(e),
    }
}

/// `sup ‖u‖∞·β^{1/3}` over `(β, ‖u‖∞)` pairs.
pub fn audit_supnorm_scaling(runs: &[(f64, f64)]) -> f64 {
    runs.iter().map(|&(beta, linf)| linf * beta.cbrt()).fold(0.0, f64::max)
}

/// `G = ¼∫u⁴ + 3β∫u(∂ₓu)² + (9/5)β²∫(∂ₓₓu)²`.
pub fn g_functional(u: &Field, beta: f64) -> f64 {
    let ux = derivative(u, 1);
    let uxx = derivative(u, 2);
    0.25 * u.norm_l4_fourth()
        + 3.0 * beta * u.zip_map(&ux, |v, d| v * d * d).integral()
        + 1.8 * beta * beta * uxx.norm_l2_squared()
}

/// Value at the last (smallest-ε) entry is at most `factor` times the
/// median. Sequences of length ≤ 1 are vacuously bounded.
pub fn bounded_across_sweep(values: &[f64], factor: f64) -> bool {
    if values.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let Some(&last) = values.last() else {
        return true;
    };
    last <= factor * median(values)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m == 0 {
        0.0
    } else if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// Family values whose ε-uniform boundedness the estimates assert.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FamilyBounds {
    /// `∫₀ᵀ‖u‖₄⁴`
    pub l4_int: f64,
    /// `ε∫₀ᵀ‖u∂ₓu‖₂²`
    pub eps_u_ux_int: f64,
    /// `β²ε∫₀ᵀ‖∂ₓₓₓu‖₂²`
    pub beta2_eps_uxxx_int: f64,
    /// `sup_t ε‖∂ₓu‖₂`
    pub sup_eps_grad: f64,
    /// `ε³∫₀ᵀ‖∂ₓₓu‖₂²`
    pub eps3_uxx_int: f64,
    /// `β²∫₀ᵀ‖∂ₓₓu‖₂² / ε`; `None` when `ε = 0`.
    pub beta2_uxx_int_over_eps: Option<f64>,
    /// `β∫₀ᵀ∫|∂ₓu∂ₓₓu|`
    pub beta_ux_uxx_int: f64,
    /// `sup_t β‖∂ₓu‖₂²·β^{1/3}`
    pub sup_beta_grad_scaled: f64,
}

impl FamilyBounds {
    pub const NAMES: [&'static str; 8] = [
        "l4_int",
        "eps_u_ux_int",
        "beta2_eps_uxxx_int",
        "sup_eps_grad",
        "eps3_uxx_int",
        "beta2_uxx_int_over_eps",
        "beta_ux_uxx_int",
        "sup_beta_grad_scaled",
    ];

    /// Values in [`Self::NAMES`] order; the ratio is `NaN` when `ε = 0`.
    pub fn to_array(&self) -> [f64; 8] {
        [
            self.l4_int,
            self.eps_u_ux_int,
            self.beta2_eps_uxxx_int,
            self.sup_eps_grad,
            self.eps3_uxx_int,
            self.beta2_uxx_int_over_eps.unwrap_or(f64::NAN),
            self.beta_ux_uxx_int,
            self.sup_beta_grad_scaled,
        ]
    }

    pub fn all_finite(&self) -> bool {
        let a = self.to_array();
        a.iter().enumerate().all(|(i, v)| v.is_finite() || (i == 5 && self.beta2_uxx_int_over_eps.is_none()))
    }
}

/// Family values at the final time of a regularized trajectory.
pub fn audit_families(traj: &Trajectory, params: &RegParams) -> FamilyBounds {
    let (eps, beta) = (params.eps, params.beta);
    let last = traj.integrals.last().copied().unwrap_or_default();
    let grads: Vec<f64> = traj.states.iter().map(|s| derivative(&s.u, 1).norm_l2_squared()).collect();
    let sup_grad = grads.iter().copied().fold(0.0, f64::max);
    FamilyBounds {
        l4_int: last.u_l4,
        eps_u_ux_int: eps * last.u_ux_l2,
        beta2_eps_uxxx_int: beta * beta * eps * last.uxxx_l2,
        sup_eps_grad: eps * sup_grad.sqrt(),
        eps3_uxx_int: eps.powi(3) * last.uxx_l2,
        beta2_uxx_int_over_eps: (eps > 0.0).then(|| beta * beta * last.uxx_l2 / eps),
        beta_ux_uxx_int: beta * last.ux_uxx_l1,
        sup_beta_grad_scaled: beta * sup_grad * beta.cbrt(),
    }
}

/// Norms of the five terms of the entropy balance of the regularized
/// equation, `‖εη'∂ₓu‖_{L²}`, `‖εη''(∂ₓu)²‖_{L¹}`, `‖βη'∂ₓₓu‖_{L²}`,
/// `‖βη''∂ₓu∂ₓₓu‖_{L¹}`, `‖γη'P‖_{L¹}`, over `(0, T) × torus`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DissipationTerms {
    pub k: f64,
    pub terms: [f64; 5],
}

/// Trapezoid weights for the save times.
pub(crate) fn trapezoid_weights(times: &[f64]) -> Vec<f64> {
    let m = times.len();
    (0..m)
        .map(|i| {
            let left = if i > 0 { times[i] - times[i - 1] } else { 0.0 };
            let right = if i + 1 < m { times[i + 1] - times[i] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect()
}

pub fn dissipation_breakdown(traj: &Trajectory, params: &RegParams, pair: EntropyPair) -> Result<DissipationTerms> {
    dissipation_breakdown_with(traj, params, pair, Execution::default())
}

pub fn dissipation_breakdown_with(
    traj: &Trajectory,
    params: &RegParams,
    pair: EntropyPair,
    exec: Execution,
) -> Result<DissipationTerms> {
    if matches!(pair, EntropyPair::Kruzhkov { .. }) {
        return Err(Error::InvalidParams("dissipation terms need a twice differentiable entropy".into()));
    }
    let (eps, beta, gamma) = (params.eps, params.beta, params.gamma);
    let per_state = exec.map(&traj.states, |s| -> Result<[f64; 5]> {
        let ux = derivative(&s.u, 1);
        let uxx = derivative(&s.u, 2);
        let p = compute_p(&s.u)?;
        let dx = s.u.grid().dx();
        let mut acc = [0.0; 5];
        for j in 0..s.u.grid().n() {
            let (v, d1, d2) = (s.u.values()[j], ux.values()[j], uxx.values()[j]);
            let (e1, e2) = (pair.eta_prime(v), pair.eta_second(v));
            acc[0] += (eps * e1 * d1).powi(2);
            acc[1] += (eps * e2 * d1 * d1).abs();
            acc[2] += (beta * e1 * d2).powi(2);
            acc[3] += (beta * e2 * d1 * d2).abs();
            acc[4] += (gamma * e1 * p.values()[j]).abs();
        }
        Ok(acc.map(|a| a * dx))
    });
    let weights = trapezoid_weights(&traj.times());
    let mut total = [0.0; 5];
    for (row, w) in per_state.into_iter().zip(weights) {
        let row = row?;
        for (t, r) in total.iter_mut().zip(row) {
            *t += w * r;
        }
    }
    total[0] = total[0].sqrt();
    total[2] = total[2].sqrt();
    Ok(DissipationTerms { k: pair.k(), terms: total })
}

/// Audited quantities at one save time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditSample {
    pub t: f64,
    pub l2_balance_residual: f64,
    pub p_identity_residual: f64,
    pub linf_p: f64,
    pub l2_p: f64,
    /// `‖u‖∞·β^{1/3}`
    pub linf_u_scaled: f64,
    pub g_value: f64,
    pub l4_u: f64,
    /// `β‖∂ₓu‖₂²`
    pub beta_grad: f64,
    /// `ε∫₀ᵗ‖u∂ₓu‖₂²`
    pub eps_u_ux_int: f64,
    /// `β²ε∫₀ᵗ‖∂ₓₓₓu‖₂²`
    pub beta2_eps_uxxx_int: f64,
    /// `β²∫₀ᵗ‖∂ₓₓu‖₂²/ε`; `None` when `ε = 0`.
    pub beta2_uxx_int_over_eps: Option<f64>,
}

/// Non-finite values travel through JSON as `null`.
pub(crate) mod nullable {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, ser: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            ser.serialize_f64(*v)
        } else {
            ser.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(de)?.unwrap_or(f64::NAN))
    }
}

/// One pass/fail verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub id: String,
    /// `NaN` (JSON `null`) when the check could not be evaluated.
    #[serde(with = "nullable")]
    pub value: f64,
    /// Upper bound on `value`; `None` for finiteness-only checks.
    pub limit: Option<f64>,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

impl Check {
    fn at_most(id: &str, value: f64, limit: f64) -> Self {
        Self {
            id: id.to_owned(),
            value,
            limit: Some(limit),
            pass: value.is_finite() && value <= limit,
            note: String::new(),
        }
    }

    fn finite(id: &str, value: f64, note: &str) -> Self {
        Self {
            id: id.to_owned(),
            value,
            limit: None,
            pass: value.is_finite(),
            note: note.to_owned(),
        }
    }
}

/// Everything the auditor measured on one trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub kind: TrajectoryKind,
    pub n: usize,
    pub length: f64,
    pub t_end: f64,
    pub pass: bool,
    pub checks: Vec<Check>,
    #[serde(default)]
    pub series: Vec<AuditSample>,
    #[serde(default)]
    pub quartic: Option<QuarticBound>,
    #[serde(default)]
    pub families: Option<FamilyBounds>,
    #[serde(default)]
    pub dissipation: Option<DissipationTerms>,
    #[serde(default)]
    pub max_tail_fraction: f64,
}

impl AuditReport {
    pub fn failures(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.pass).map(|c| c.id.as_str()).collect()
    }

    pub fn check(&self, id: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.id == id)
    }
}

/// Audit options beyond the tolerances.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditOptions {
    /// Level `k` of the smoothed entropy used for the dissipation terms;
    /// 0 is the midpoint of zero-mean data.
    pub dissipation_k: f64,
    /// Mollifier half-width for the entropy check of limit runs; defaults
    /// to four save spacings.
    pub entropy_width: Option<f64>,
    /// Number of Kruzhkov levels spanning `[min u₀, max u₀]`.
    pub entropy_levels: usize,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            dissipation_k: 0.0,
            entropy_width: None,
            entropy_levels: 9,
        }
    }
}

pub fn audit(traj: &Trajectory, tol: &Tolerances, opts: &AuditOptions) -> Result<AuditReport> {
    audit_with(traj, tol, opts, Execution::default())
}

pub fn audit_with(traj: &Trajectory, tol: &Tolerances, opts: &AuditOptions, exec: Execution) -> Result<AuditReport> {
    traj.validate()?;
    let mut report = AuditReport {
        kind: traj.kind,
        n: traj.grid.n(),
        length: traj.grid.length(),
        t_end: traj.t_end(),
        pass: true,
        checks: Vec::new(),
        series: Vec::new(),
        quartic: None,
        families: None,
        dissipation: None,
        max_tail_fraction: traj.max_tail_fraction,
    };
    match traj.kind {
        TrajectoryKind::Regularized { params } => audit_regularized(traj, &params, tol, opts, exec, &mut report)?,
        TrajectoryKind::Limit { .. } => audit_limit(traj, tol, opts, exec, &mut report)?,
    }
    report.pass = report.checks.iter().all(|c| c.pass);
    Ok(report)
}

fn audit_regularized(
    traj: &Trajectory,
    params: &RegParams,
    tol: &Tolerances,
    opts: &AuditOptions,
    exec: Execution,
    report: &mut AuditReport,
) -> Result<()> {
    let (eps, beta) = (params.eps, params.beta);
    let u0 = &traj.initial().u;
    let (u0_sq, p0_sq) = (u0.norm_l2_squared(), compute_p(u0)?.norm_l2_squared());
    let pairs: Vec<usize> = (0..traj.states.len()).collect();
    let samples = exec.map(&pairs, |&i| -> Result<AuditSample> {
        let (s, ints) = (&traj.states[i], &traj.integrals[i]);
        let p = compute_p(&s.u)?;
        let p_sq = p.norm_l2_squared();
        let grad = derivative(&s.u, 1).norm_l2_squared();
        Ok(AuditSample {
            t: s.t,
            l2_balance_residual: (s.u.norm_l2_squared() + 2.0 * eps * ints.grad_l2 - u0_sq).abs() / u0_sq.max(1.0),
            p_identity_residual: (p_sq - p0_sq + 2.0 * eps * ints.u_l2 + ints.p_u2).abs() / p0_sq.max(1.0),
            linf_p: p.norm_linf(),
            l2_p: p_sq.sqrt(),
            linf_u_scaled: s.u.norm_linf() * beta.cbrt(),
            g_value: g_functional(&s.u, beta),
            l4_u: s.u.norm_l4(),
            beta_grad: beta * grad,
            eps_u_ux_int: eps * ints.u_ux_l2,
            beta2_eps_uxxx_int: beta * beta * eps * ints.uxxx_l2,
            beta2_uxx_int_over_eps: (eps > 0.0).then(|| beta * beta * ints.uxx_l2 / eps),
        })
    });
    report.series = samples.into_iter().collect::<Result<_>>()?;
    let series = &report.series;
    let max_of = |f: fn(&AuditSample) -> f64| series.iter().map(f).fold(0.0, f64::max);

    let mean_dev = traj.states.iter().map(|s| s.u.mean().abs()).fold(0.0, f64::max);
    report.checks.push(Check::at_most("lm:cns", mean_dev, tol.mean * (1.0 + u0.norm_linf())));
    report.checks.push(Check::at_most("lm:l2-u", max_of(|s| s.l2_balance_residual), tol.l2_balance));

    let bound = trajectory_bound(traj, params)?;
    let linf_p = max_of(|s| s.linf_p);
    let c_of_t = bound.map_or(0.0, |b| b.c_of_t);
    let identity = max_of(|s| s.p_identity_residual);
    let bound_ok = linf_p <= c_of_t * (1.0 + tol.p_slack);
    report.checks.push(Check {
        id: "lm:P-infty".into(),
        value: linf_p,
        limit: Some(c_of_t * (1.0 + tol.p_slack)),
        pass: bound_ok && identity <= tol.p_identity,
        note: format!("identity residual {identity:.3e} (limit {:.1e})", tol.p_identity),
    });
    report.quartic = bound;

    report.checks.push(Check::finite(
        "lm:l-infty-u",
        max_of(|s| s.linf_u_scaled),
        "sup |u| beta^(1/3); epsilon-uniformity is judged across a sweep",
    ));
    let families = audit_families(traj, params);
    report.checks.push(Check::finite(
        "lm:bounded",
        families.l4_int + families.eps_u_ux_int + families.beta2_eps_uxxx_int,
        "L4 and L2 families; epsilon-uniformity is judged across a sweep",
    ));
    report.checks.push(Check::finite(
        "lm:501",
        families.sup_eps_grad
            + families.eps3_uxx_int
            + families.beta_ux_uxx_int
            + families.beta2_uxx_int_over_eps.unwrap_or(0.0),
        "epsilon-weighted derivative families; epsilon-uniformity is judged across a sweep",
    ));
    report.families = Some(families);
    report.dissipation = Some(dissipation_breakdown_with(
        traj,
        params,
        EntropyPair::smoothed(opts.dissipation_k),
        exec,
    )?);
    Ok(())
}

fn audit_limit(
    traj: &Trajectory,
    tol: &Tolerances,
    opts: &AuditOptions,
    exec: Execution,
    report: &mut AuditReport,
) -> Result<()> {
    let mass = traj.states.iter().map(|s| s.u.integral().abs()).fold(0.0, f64::max);
    report.checks.push(Check::at_most("mass", mass, tol.mass));

    let times = traj.times();
    let spacing = times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let width = opts.entropy_width.unwrap_or(4.0 * spacing);
    let u0 = &traj.initial().u;
    let limit = tol.entropy * u0.norm_linf() * traj.t_end() * traj.grid.length();
    let fits = width > 0.0 && 2.0 * width <= traj.t_end() && 2.0 * width <= traj.grid.length();
    if !fits {
        report.checks.push(Check {
            id: "def:sol".into(),
            value: f64::NAN,
            limit: Some(limit),
            pass: false,
            note: format!("mollifier width {width} does not fit the trajectory; save more densely or set entropy_width"),
        });
        return Ok(());
    }
    let levels = kruzhkov_levels(u0, opts.entropy_levels.max(1));
    let residuals = exec.map(&levels, |&k| entropy_residual_with(traj, EntropyPair::kruzhkov(k), width, Execution::Sequential));
    let mut worst = f64::NEG_INFINITY;
    let mut worst_k = 0.0;
    for (k, r) in levels.iter().zip(residuals) {
        let r = r?;
        if r > worst {
            worst = r;
            worst_k = *k;
        }
    }
    let mut check = Check::at_most("def:sol", worst, limit);
    check.note = format!("worst Kruzhkov level k = {worst_k:.4}, mollifier width {width}");
    report.checks.push(check);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlocal::{make_initial_data, Profile};
    use crate::regularized::simulate;
    use crate::spectral::make_grid;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn quartic_closed_forms() {
        let b = quartic_from_coefficients(0.0, 16.0).unwrap();
        assert!((b.c_of_t - 2.0).abs() < 1e-12);
        let a = quartic_from_coefficients(8.0, 0.0).unwrap();
        assert!((a.c_of_t - 2.0).abs() < 1e-12);
        let ab = quartic_from_coefficients(4.0, 4.0).unwrap();
        assert!(ab.g(ab.c_of_t).abs() <= 1e-10 * (4.0 * ab.c_of_t + 4.0));
        assert!(ab.g(ab.c_of_t - 1e-9) < 0.0 && ab.g(ab.c_of_t + 1e-9) > 0.0);
        assert!(matches!(quartic_root(0.0, 3.0, 1.0), Err(Error::DegenerateBound)));
        assert!(quartic_root(1.0, 1.0, 0.0).is_err());
        // C0 = 0 makes both coefficients vanish; C0 = 1, |P0| = 2, T = 1 gives A = 4, B = 16.
        let r = quartic_root(1.0, 2.0, 1.0).unwrap();
        assert_eq!((r.a, r.b), (4.0, 16.0));
    }

    #[test]
    fn g_of_sine() {
        let g = make_grid(64, 2.0 * PI).unwrap();
        let u = Field::from_fn(&g, f64::sin);
        assert!((g_functional(&u, 0.0) - 3.0 * PI / 16.0).abs() < 1e-12);
        assert!((g_functional(&u, 0.1) - (3.0 * PI / 16.0 + 0.018 * PI)).abs() < 1e-12);
        assert_eq!(g_functional(&Field::zeros(&g), 0.3), 0.0);
    }

    #[test]
    fn sweep_boundedness_rule() {
        assert!(bounded_across_sweep(&[], 2.0));
        assert!(bounded_across_sweep(&[5.0], 2.0));
        assert!(bounded_across_sweep(&[1.0, 1.2, 1.1, 1.3, 1.9], 2.0));
        assert!(!bounded_across_sweep(&[1.0, 1.0, 1.0, 1.0, 2.5], 2.0));
        assert!(!bounded_across_sweep(&[1.0, f64::NAN], 2.0));
        assert_eq!(median(&[3.0, 1.0, 2.0, 10.0]), 2.5);
    }

    #[test]
    fn supnorm_scaling() {
        assert_eq!(audit_supnorm_scaling(&[]), 0.0);
        assert_eq!(audit_supnorm_scaling(&[(0.125, 0.0)]), 0.0);
        assert!((audit_supnorm_scaling(&[(0.125, 2.0), (1.0, 0.5)]) - 1.0).abs() < 1e-15);
    }

    fn zero_run() -> Trajectory {
        let g = make_grid(32, 2.0 * PI).unwrap();
        let init = make_initial_data(&Profile::Zero, &g, 0.1, 0.01).unwrap();
        simulate(&init, RegParams::new(0.1, 0.01, 1.0).unwrap(), 1.0, 0.1, 0.4).unwrap()
    }

    #[test]
    fn zero_run_audits_clean() {
        let traj = zero_run();
        let params = traj.params().unwrap();
        assert_eq!(l2_balance_residual(&traj, 0.1), 0.0);
        let pa = audit_p(&traj, None, 0.1).unwrap();
        assert_eq!((pa.linf_p, pa.l2_p, pa.pass), (0.0, 0.0, true));
        assert_eq!(audit_families(&traj, &params), FamilyBounds {
            beta2_uxx_int_over_eps: Some(0.0),
            ..Default::default()
        });
        let d = dissipation_breakdown(&traj, &params, EntropyPair::smoothed(0.3)).unwrap();
        assert_eq!(d.terms, [0.0; 5]);
        let report = audit(&traj, &Tolerances::default(), &AuditOptions::default()).unwrap();
        assert!(report.pass, "{:?}", report.failures());
        assert!(report.quartic.is_none());
    }

    #[test]
    fn sine_run_passes_every_check() {
        let g = make_grid(256, 2.0 * PI).unwrap();
        let params = RegParams::new(0.05, 0.0025, 1.0).unwrap();
        let init = make_initial_data(&"sine:1,1".parse().unwrap(), &g, params.eps, params.beta).unwrap();
        let traj = simulate(&init, params, 1.0, 0.005, 0.4).unwrap();
        let report = audit(&traj, &Tolerances::default(), &AuditOptions::default()).unwrap();
        assert!(report.pass, "{:?}", report.checks);
        assert!(report.check("lm:l2-u").unwrap().value <= 1e-6);
        let json = serde_json::to_string(&report).unwrap();
        let back: AuditReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.checks, report.checks);
    }

    #[test]
    fn kruzhkov_pair_rejected_for_dissipation() {
        let traj = zero_run();
        assert!(dissipation_breakdown(&traj, &traj.params().unwrap(), EntropyPair::kruzhkov(0.0)).is_err());
    }

    proptest! {
        #[test]
        fn quartic_root_solves_g(c0 in 0.01f64..5.0, p0 in 0.0f64..5.0, t in 0.01f64..10.0) {
            let b = quartic_root(c0, p0, t).unwrap();
            prop_assert!(b.c_of_t > 0.0);
            prop_assert!(b.g(b.c_of_t).abs() <= 1e-10 * (b.a * b.c_of_t + b.b));
        }

        #[test]
        fn quartic_root_grows_with_time(c0 in 0.1f64..3.0, p0 in 0.0f64..3.0, t in 0.1f64..5.0) {
            let a = quartic_root(c0, p0, t).unwrap().c_of_t;
            let b = quartic_root(c0, p0, 2.0 * t).unwrap().c_of_t;
            prop_assert!(b >= a);
        }
    }
}
