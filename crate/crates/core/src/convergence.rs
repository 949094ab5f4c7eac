//! ε-sweeps with coupled dispersion `β = c·ε^p` and strong-norm comparison
//! of trajectories on a space-time window.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimates::{audit_with, bounded_across_sweep, AuditOptions, AuditReport, FamilyBounds, Tolerances};
use crate::exec::Execution;
use crate::limit::{entropy_residual_with, fv_simulate, trajectory_potential, EntropyPair};
use crate::nonlocal::{make_initial_data, Profile};
use crate::regularized::RegularizedSolver;
use crate::spectral::{make_grid, resample, Field};
use crate::trajectory::{Coupling, RegParams, Regime, Trajectory};

/// Space-time box `[t0, t1] × [x0, x1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub t0: f64,
    pub t1: f64,
    pub x0: f64,
    pub x1: f64,
}

impl Window {
    /// `[t0, t1]` × the whole torus of length `length`.
    pub fn full_torus(t0: f64, t1: f64, length: f64) -> Self {
        Self {
            t0,
            t1,
            x0: 0.0,
            x1: length,
        }
    }

    pub fn measure(&self) -> f64 {
        (self.t1 - self.t0) * (self.x1 - self.x0)
    }
}

/// Differences between two trajectories on a window.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub u_l1: f64,
    pub u_l2: f64,
    pub p_linf: f64,
    pub p_l2: f64,
    /// Sup of `∂ₓP_a − ∂ₓP_b = u_a − u_b`.
    pub px_linf: f64,
}

impl ErrorRecord {
    pub const NAMES: [&'static str; 5] = ["err_u_l1", "err_u_l2", "err_P_linf", "err_P_l2", "err_Px_linf"];

    pub fn to_array(&self) -> [f64; 5] {
        [self.u_l1, self.u_l2, self.p_linf, self.p_l2, self.px_linf]
    }
}

const TIME_SLACK: f64 = 1e-9;

/// State of `traj` at time `t` by linear interpolation between saves.
fn state_at(traj: &Trajectory, t: f64) -> Result<Field> {
    let times = traj.times();
    let scale = TIME_SLACK * traj.t_end().max(1.0);
    let idx = times.partition_point(|&s| s < t - scale);
    if idx == times.len() {
        return Err(Error::IncompatibleWindows(format!("t = {t} beyond the end {}", traj.t_end())));
    }
    if (times[idx] - t).abs() <= scale {
        return Ok(traj.states[idx].u.clone());
    }
    if idx == 0 {
        return Err(Error::IncompatibleWindows(format!("t = {t} before the first save")));
    }
    let (ta, tb) = (times[idx - 1], times[idx]);
    let w = (t - ta) / (tb - ta);
    Ok(&(&traj.states[idx - 1].u * (1.0 - w)) + &(&traj.states[idx].u * w))
}

/// Restricts `a − b` to the window and evaluates the stored norms. Save
/// times of `a` inside `[t0, t1]` are the quadrature nodes (trapezoid);
/// `b` is interpolated linearly in time onto them; the coarser grid is
/// resampled spectrally onto the finer one.
pub fn compare_trajectories(a: &Trajectory, b: &Trajectory, window: &Window) -> Result<ErrorRecord> {
    a.validate()?;
    b.validate()?;
    let length = a.grid.length();
    if (b.grid.length() - length).abs() > 1e-12 * length {
        return Err(Error::IncompatibleWindows(format!(
            "torus lengths {} and {}",
            length,
            b.grid.length()
        )));
    }
    let slack = TIME_SLACK * a.t_end().max(b.t_end()).max(1.0);
    let end = a.t_end().min(b.t_end());
    if !(window.t0 >= -slack && window.t1 <= end + slack && window.t0 <= window.t1)
        || !(window.x0 >= 0.0 && window.x1 <= length * (1.0 + 1e-12) && window.x0 < window.x1)
    {
        return Err(Error::IncompatibleWindows(format!(
            "window [{}, {}] x [{}, {}] against [0, {end}] x [0, {length}]",
            window.t0, window.t1, window.x0, window.x1
        )));
    }
    let fine = if a.grid.n() >= b.grid.n() { &a.grid } else { &b.grid };
    let nodes: Vec<usize> = (0..fine.n())
        .filter(|&j| {
            let x = fine.node(j);
            x >= window.x0 - 1e-12 * length && x < window.x1 - 1e-12 * length
        })
        .collect();
    let dx = fine.dx();

    let times: Vec<f64> = a
        .times()
        .into_iter()
        .filter(|&t| t >= window.t0 - slack && t <= window.t1 + slack)
        .collect();
    if times.is_empty() {
        return Err(Error::IncompatibleWindows("no save times inside the window".into()));
    }
    let weights = if times.len() == 1 {
        vec![1.0]
    } else {
        crate::estimates::trapezoid_weights(&times)
    };

    let mut rec = ErrorRecord::default();
    let (mut l2_u, mut l2_p) = (0.0, 0.0);
    for (&t, w) in times.iter().zip(&weights) {
        let (ua, ub) = (state_at(a, t)?, state_at(b, t)?);
        let (pa, pb) = (trajectory_potential(a, &ua)?, trajectory_potential(b, &ub)?);
        let lift = |f: Field| -> Result<Field> {
            if f.grid().n() == fine.n() {
                Ok(f)
            } else {
                resample(&f, fine)
            }
        };
        let (ua, ub, pa, pb) = (lift(ua)?, lift(ub)?, lift(pa)?, lift(pb)?);
        let (mut s1, mut s2, mut sp) = (0.0, 0.0, 0.0);
        for &j in &nodes {
            let du = (ua.values()[j] - ub.values()[j]).abs();
            let dp = (pa.values()[j] - pb.values()[j]).abs();
            s1 += du;
            s2 += du * du;
            sp += dp * dp;
            rec.px_linf = rec.px_linf.max(du);
            rec.p_linf = rec.p_linf.max(dp);
        }
        rec.u_l1 += w * dx * s1;
        l2_u += w * dx * s2;
        l2_p += w * dx * sp;
    }
    rec.u_l2 = l2_u.sqrt();
    rec.p_l2 = l2_p.sqrt();
    Ok(rec)
}

/// What the sweep rows are compared against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reference {
    /// A regularized run at half the smallest ε of the sweep, same grid.
    #[default]
    #[serde(rename = "self")]
    SelfRef,
    /// The finite-volume entropy solution on a 4× finer grid.
    Limit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub eps_list: Vec<f64>,
    pub coupling: Coupling,
    pub gamma: f64,
    pub t_end: f64,
    pub n: usize,
    pub length: f64,
    pub profile: Profile,
    #[serde(default)]
    pub reference: Reference,
    /// Defaults to `T/200`.
    #[serde(default)]
    pub save_every: Option<f64>,
    #[serde(default = "default_safety")]
    pub safety: f64,
    /// The window starts at this fraction of `T`.
    #[serde(default = "default_window_start")]
    pub window_start: f64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub audit: AuditOptions,
}

fn default_safety() -> f64 {
    0.4
}

fn default_window_start() -> f64 {
    0.1
}

impl SweepConfig {
    pub fn new(eps_list: Vec<f64>, coupling: Coupling, gamma: f64, t_end: f64, n: usize, length: f64, profile: Profile) -> Self {
        Self {
            eps_list,
            coupling,
            gamma,
            t_end,
            n,
            length,
            profile,
            reference: Reference::SelfRef,
            save_every: None,
            safety: default_safety(),
            window_start: default_window_start(),
            tolerances: Tolerances::default(),
            audit: AuditOptions::default(),
        }
    }

    pub fn save_every(&self) -> f64 {
        self.save_every.unwrap_or(self.t_end / 200.0)
    }

    pub fn window(&self) -> Window {
        Window::full_torus(self.window_start * self.t_end, self.t_end, self.length)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.eps_list.is_empty() {
            return bad("eps_list is empty".into());
        }
        if self.eps_list.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
            return bad(format!("eps_list {:?} must be positive", self.eps_list));
        }
        if self.eps_list.windows(2).any(|w| w[1] >= w[0]) {
            return bad(format!("eps_list {:?} must be strictly decreasing", self.eps_list));
        }
        if !(self.coupling.c > 0.0) || !(self.coupling.p > 0.0) {
            return bad(format!("coupling {:?} must be positive", self.coupling));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() || !self.gamma.is_finite() {
            return bad(format!("T = {}, gamma = {}", self.t_end, self.gamma));
        }
        if !(self.save_every() > 0.0) || !(self.safety > 0.0 && self.safety <= 1.0) {
            return bad(format!("save_every = {}, safety = {}", self.save_every(), self.safety));
        }
        if !(0.0..1.0).contains(&self.window_start) {
            return bad(format!("window_start = {} must lie in [0, 1)", self.window_start));
        }
        make_grid(self.n, self.length)?;
        Ok(())
    }
}

/// Outcome of one sweep row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum RowStatus {
    Ok,
    BlowUp { t: f64, sup_norm: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub beta: f64,
    pub status: RowStatus,
    /// Zero for rows that blew up.
    pub errors: ErrorRecord,
    /// `log₂` of the error ratio to the previous row, per norm; `None` for
    /// the first row, after a blow-up, or when an error vanishes.
    pub observed_order: Option<[f64; 5]>,
    /// Entropy residual of the smoothed pair at `audit.dissipation_k`,
    /// with the regularized `u` substituted into the limit inequality.
    pub entropy_residual: Option<f64>,
    pub max_tail_fraction: f64,
    pub audit: Option<AuditReport>,
}

/// Verdict of the monotone-decrease acceptance rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Acceptance {
    /// `err_u_l1` strictly decreasing with every ratio ≥ `min_ratio`.
    pub u_l1_monotone: bool,
    pub min_u_l1_ratio: Option<f64>,
    /// `err_P_linf` decreasing.
    pub p_linf_decreasing: bool,
    /// Family names failing [`bounded_across_sweep`].
    pub unbounded_families: Vec<String>,
    /// No more than half of the rows blew up.
    pub enough_rows: bool,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub coupling: Coupling,
    pub regime: Regime,
    pub reference: Reference,
    /// ε of the self reference, or `None` for the limit reference.
    pub reference_eps: Option<f64>,
    pub window: Window,
    pub rows: Vec<ConvergenceRow>,
    pub acceptance: Acceptance,
}

impl ConvergenceTable {
    pub fn ok_rows(&self) -> impl Iterator<Item = &ConvergenceRow> {
        self.rows.iter().filter(|r| r.status == RowStatus::Ok)
    }

    /// `(β, sup_t ‖u‖∞)` of the successful rows.
    pub fn families(&self) -> Vec<(f64, FamilyBounds)> {
        self.ok_rows()
            .filter_map(|r| Some((r.eps, r.audit.as_ref()?.families?)))
            .collect()
    }
}

fn regularized_run(cfg: &SweepConfig, eps: f64) -> Result<Trajectory> {
    let grid = make_grid(cfg.n, cfg.length)?;
    let params = RegParams::coupled(eps, cfg.gamma, cfg.coupling)?;
    let init = make_initial_data(&cfg.profile, &grid, eps, params.beta)?;
    RegularizedSolver::new(&grid, params)?.simulate(&init, cfg.t_end, cfg.save_every(), cfg.safety)
}

fn reference_run(cfg: &SweepConfig) -> Result<(Trajectory, Option<f64>)> {
    match cfg.reference {
        Reference::SelfRef => {
            let eps = 0.5 * cfg.eps_list.last().copied().unwrap_or(0.0);
            Ok((regularized_run(cfg, eps)?, Some(eps)))
        }
        Reference::Limit => {
            let grid = make_grid(4 * cfg.n, cfg.length)?;
            let init = make_initial_data(&cfg.profile, &grid, 0.0, 0.0)?;
            Ok((fv_simulate(&init.u0, cfg.gamma, cfg.t_end, cfg.save_every())?, None))
        }
    }
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<ConvergenceTable> {
    run_sweep_with(cfg, Execution::default())
}

/// Runs the reference and every row (in parallel under `exec`), then
/// assembles the table in ε order.
pub fn run_sweep_with(cfg: &SweepConfig, exec: Execution) -> Result<ConvergenceTable> {
    cfg.validate()?;
    let window = cfg.window();
    let jobs: Vec<Option<f64>> = std::iter::once(None).chain(cfg.eps_list.iter().map(|&e| Some(e))).collect();
    let mut runs = exec.map(&jobs, |job| match job {
        None => reference_run(cfg),
        Some(eps) => regularized_run(cfg, *eps).map(|t| (t, Some(*eps))),
    });
    let (reference, reference_eps) = runs.remove(0)?;

    let rows: Vec<Result<ConvergenceRow>> = exec.map_range(runs.len(), |i| {
        let eps = cfg.eps_list[i];
        let beta = cfg.coupling.beta(eps);
        match &runs[i] {
            Err(Error::BlowUp { t, sup_norm }) => Ok(ConvergenceRow {
                eps,
                beta,
                status: RowStatus::BlowUp { t: *t, sup_norm: *sup_norm },
                errors: ErrorRecord::default(),
                observed_order: None,
                entropy_residual: None,
                max_tail_fraction: 0.0,
                audit: None,
            }),
            Err(e) => Err(Error::InvalidParams(format!("row eps = {eps}: {e}"))),
            Ok((traj, _)) => {
                let errors = compare_trajectories(traj, &reference, &window)?;
                let audit = audit_with(traj, &cfg.tolerances, &cfg.audit, Execution::Sequential)?;
                let entropy = entropy_width(cfg)
                    .map(|w| {
                        entropy_residual_with(
                            traj,
                            EntropyPair::smoothed(cfg.audit.dissipation_k),
                            w,
                            Execution::Sequential,
                        )
                    })
                    .transpose()?;
                Ok(ConvergenceRow {
                    eps,
                    beta,
                    status: RowStatus::Ok,
                    errors,
                    observed_order: None,
                    entropy_residual: entropy,
                    max_tail_fraction: traj.max_tail_fraction,
                    audit: Some(audit),
                })
            }
        }
    });
    let mut rows: Vec<ConvergenceRow> = rows.into_iter().collect::<Result<_>>()?;
    for i in 1..rows.len() {
        if rows[i].status == RowStatus::Ok && rows[i - 1].status == RowStatus::Ok {
            let (a, b) = (rows[i - 1].errors.to_array(), rows[i].errors.to_array());
            if a.iter().chain(&b).all(|&e| e > 0.0) {
                rows[i].observed_order = Some(std::array::from_fn(|k| (a[k] / b[k]).log2()));
            }
        }
    }
    let acceptance = accept(&rows, &cfg.tolerances);
    Ok(ConvergenceTable {
        coupling: cfg.coupling,
        regime: cfg.coupling.regime(),
        reference: cfg.reference,
        reference_eps,
        window,
        rows,
        acceptance,
    })
}

/// Mollifier width for the per-row entropy residual: the largest of
/// `T/10` and four save spacings that still fits the trajectory.
fn entropy_width(cfg: &SweepConfig) -> Option<f64> {
    let w = (cfg.t_end / 10.0).max(4.0 * cfg.save_every());
    (2.0 * w <= cfg.t_end && 2.0 * w <= cfg.length).then_some(w)
}

fn accept(rows: &[ConvergenceRow], tol: &Tolerances) -> Acceptance {
    let ok: Vec<&ConvergenceRow> = rows.iter().filter(|r| r.status == RowStatus::Ok).collect();
    let enough_rows = 2 * ok.len() >= rows.len();
    let all_ok = ok.len() == rows.len();
    let u_l1: Vec<f64> = ok.iter().map(|r| r.errors.u_l1).collect();
    let ratios: Vec<f64> = u_l1.windows(2).map(|w| w[0] / w[1]).collect();
    let min_u_l1_ratio = ratios.iter().copied().reduce(f64::min);
    let u_l1_monotone = all_ok && u_l1.windows(2).all(|w| w[1] < w[0]) && ratios.iter().all(|&r| r >= tol.min_ratio);
    let p_linf_decreasing = all_ok && ok.windows(2).all(|w| w[1].errors.p_linf < w[0].errors.p_linf);

    let families: Vec<FamilyBounds> = ok.iter().filter_map(|r| r.audit.as_ref()?.families).collect();
    let mut unbounded_families = Vec::new();
    for (k, name) in FamilyBounds::NAMES.iter().enumerate() {
        let values: Vec<f64> = families.iter().map(|f| f.to_array()[k]).collect();
        if !bounded_across_sweep(&values, tol.bounded_factor) {
            unbounded_families.push((*name).to_owned());
        }
    }
    Acceptance {
        u_l1_monotone,
        min_u_l1_ratio,
        p_linf_decreasing,
        pass: enough_rows && u_l1_monotone && p_linf_decreasing,
        unbounded_families,
        enough_rows,
    }
}
