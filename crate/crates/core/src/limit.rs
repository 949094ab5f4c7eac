//! Finite-volume reference solver for the limit equation
//!
//! ```text
//! ∂ₜu + ∂ₓ(u²/2) = γP,    ∂ₓP = u
//! ```
//!
//! together with the Kruzhkov entropy machinery used to check that a
//! trajectory is entropic. Cell `j` is centred on the spectral node `x_j`, so
//! limit and regularized fields can be compared point by point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::nonlocal::compute_p;
use crate::spectral::{Field, Grid};
use crate::trajectory::{Integrals, State, Trajectory, TrajectoryKind};

/// CFL number of the explicit scheme.
pub const FV_CFL: f64 = 0.4;

const BLOWUP_GUARD: f64 = 1e6;

fn flux(u: f64) -> f64 {
    0.5 * u * u
}

/// Two-point interface flux.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FluxKind {
    /// Local Lax–Friedrichs; monotone, selects the entropy solution.
    #[default]
    Rusanov,
    /// Arithmetic mean of the physical fluxes; not monotone. Test hook.
    Central,
}

impl FluxKind {
    pub fn eval(self, a: f64, b: f64) -> f64 {
        let mean = 0.5 * (flux(a) + flux(b));
        match self {
            FluxKind::Rusanov => mean - 0.5 * a.abs().max(b.abs()) * (b - a),
            FluxKind::Central => mean,
        }
    }
}

/// Zero-mean midpoint cumulative sum: `P_j = dx(Σ_{i<j} u_i + u_j/2) − mean`.
pub fn cumulative_potential(u: &[f64], dx: f64) -> Vec<f64> {
    let mut acc = 0.0;
    let mut p: Vec<f64> = u
        .iter()
        .map(|&v| {
            let here = acc + 0.5 * v;
            acc += v;
            dx * here
        })
        .collect();
    let mean = p.iter().sum::<f64>() / p.len() as f64;
    p.iter_mut().for_each(|v| *v -= mean);
    p
}

fn pin_mean(u: &mut [f64]) {
    let mean = u.iter().sum::<f64>() / u.len() as f64;
    u.iter_mut().for_each(|v| *v -= mean);
}

fn rhs(u: &[f64], gamma: f64, dx: f64, kind: FluxKind) -> Vec<f64> {
    let n = u.len();
    let faces: Vec<f64> = (0..n).map(|j| kind.eval(u[j], u[(j + 1) % n])).collect();
    let source = if gamma != 0.0 {
        cumulative_potential(u, dx)
    } else {
        vec![0.0; n]
    };
    (0..n)
        .map(|j| -(faces[j] - faces[(j + n - 1) % n]) / dx + gamma * source[j])
        .collect()
}

/// Largest admissible step for `u`.
pub fn fv_cfl_dt(u: &Field) -> f64 {
    FV_CFL * u.grid().dx() / u.norm_linf().max(1e-12)
}

fn ssp_rk2(u: &[f64], gamma: f64, dt: f64, dx: f64, kind: FluxKind) -> Vec<f64> {
    let l0 = rhs(u, gamma, dx, kind);
    let mut u1: Vec<f64> = u.iter().zip(&l0).map(|(v, l)| v + dt * l).collect();
    pin_mean(&mut u1);
    let l1 = rhs(&u1, gamma, dx, kind);
    let mut out: Vec<f64> = (0..u.len()).map(|j| 0.5 * u[j] + 0.5 * (u1[j] + dt * l1[j])).collect();
    pin_mean(&mut out);
    out
}

fn checked(grid: &Grid, values: Vec<f64>, t: f64) -> Result<Field> {
    let sup_norm = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if !sup_norm.is_finite() || sup_norm > BLOWUP_GUARD {
        return Err(Error::BlowUp { t, sup_norm });
    }
    Ok(Field::from_trusted(grid, values))
}

/// One SSP-RK2 step with the given interface flux.
pub fn fv_step_with(state: &State, gamma: f64, dt: f64, kind: FluxKind) -> Result<State> {
    let limit = fv_cfl_dt(&state.u) * (1.0 + 1e-12);
    if !(dt > 0.0) || dt > limit {
        return Err(Error::InvalidParams(format!("dt = {dt} outside (0, {limit}]")));
    }
    let grid = state.u.grid();
    let t = state.t + dt;
    let next = ssp_rk2(state.u.values(), gamma, dt, grid.dx(), kind);
    Ok(State {
        t,
        u: checked(grid, next, t)?,
    })
}

/// One SSP-RK2 step with the Rusanov flux.
pub fn fv_step(state: &State, gamma: f64, dt: f64) -> Result<State> {
    fv_step_with(state, gamma, dt, FluxKind::Rusanov)
}

/// CFL-adaptive run with saves as in the regularized solver.
pub fn fv_simulate_with(u0: &Field, gamma: f64, t_end: f64, save_every: f64, kind: FluxKind) -> Result<Trajectory> {
    if !gamma.is_finite() || !(t_end > 0.0) || !(save_every > 0.0) {
        return Err(Error::InvalidParams(format!(
            "gamma = {gamma}, t_end = {t_end}, save_every = {save_every}"
        )));
    }
    let tol = crate::spectral::mean_tolerance(u0.values());
    if u0.mean().abs() > tol {
        return Err(Error::NonZeroMean { mean: u0.mean(), tol });
    }
    let grid = u0.grid().clone();
    let dx = grid.dx();
    let mut values = u0.values().to_vec();
    pin_mean(&mut values);
    let mut u = Field::from_trusted(&grid, values);
    let mut states = vec![State { t: 0.0, u: u.clone() }];
    let next_save = |m: usize| {
        let s = m as f64 * save_every;
        if s >= t_end || t_end - s < 1e-9 * save_every {
            t_end
        } else {
            s
        }
    };
    let (mut t, mut save_index) = (0.0, 1usize);
    let mut target = next_save(save_index);
    loop {
        let mut dt = fv_cfl_dt(&u);
        let hit = t + dt >= target - 1e-12 * target.max(1.0);
        if hit {
            dt = target - t;
        }
        let next = ssp_rk2(u.values(), gamma, dt, dx, kind);
        t = if hit { target } else { t + dt };
        u = checked(&grid, next, t)?;
        if hit {
            states.push(State { t, u: u.clone() });
            if target >= t_end {
                break;
            }
            save_index += 1;
            target = next_save(save_index);
        }
    }
    let integrals = vec![Integrals::default(); states.len()];
    Ok(Trajectory {
        kind: TrajectoryKind::Limit { gamma },
        grid,
        states,
        integrals,
        max_tail_fraction: 0.0,
    })
}

/// Rusanov run; the reference limit solution.
pub fn fv_simulate(u0: &Field, gamma: f64, t_end: f64, save_every: f64) -> Result<Trajectory> {
    fv_simulate_with(u0, gamma, t_end, save_every, FluxKind::Rusanov)
}

/// Entropy–flux pair for `f(u) = u²/2`, with `q' = η'f'`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EntropyPair {
    /// `η = |u − k|`.
    Kruzhkov { k: f64 },
    /// `η = √((u−k)² + δ²) − δ`; twice differentiable.
    Smoothed { k: f64, delta: f64 },
}

/// Smoothing width of the `C²` Kruzhkov surrogate.
pub const SMOOTHING_DELTA: f64 = 1e-3;

impl EntropyPair {
    pub fn kruzhkov(k: f64) -> Self {
        EntropyPair::Kruzhkov { k }
    }

    pub fn smoothed(k: f64) -> Self {
        EntropyPair::Smoothed {
            k,
            delta: SMOOTHING_DELTA,
        }
    }

    pub fn k(&self) -> f64 {
        match *self {
            EntropyPair::Kruzhkov { k } | EntropyPair::Smoothed { k, .. } => k,
        }
    }

    pub fn eta(&self, u: f64) -> f64 {
        match *self {
            EntropyPair::Kruzhkov { k } => (u - k).abs(),
            EntropyPair::Smoothed { k, delta } => (u - k).hypot(delta) - delta,
        }
    }

    /// `η'`; the Kruzhkov pair uses `sign(0) = 0`.
    pub fn eta_prime(&self, u: f64) -> f64 {
        match *self {
            EntropyPair::Kruzhkov { k } => sign(u - k),
            EntropyPair::Smoothed { k, delta } => (u - k) / (u - k).hypot(delta),
        }
    }

    /// `η''`; zero away from `k` for the Kruzhkov pair.
    pub fn eta_second(&self, u: f64) -> f64 {
        match *self {
            EntropyPair::Kruzhkov { .. } => 0.0,
            EntropyPair::Smoothed { k, delta } => {
                let s = (u - k).hypot(delta);
                delta * delta / (s * s * s)
            }
        }
    }

    /// Entropy flux normalised by `q(k) = 0`.
    pub fn q(&self, u: f64) -> f64 {
        match *self {
            EntropyPair::Kruzhkov { k } => sign(u - k) * (u * u - k * k) / 2.0,
            EntropyPair::Smoothed { k, delta } => {
                let w = u - k;
                let s = w.hypot(delta);
                0.5 * (w * s - delta * delta * (w / delta).asinh()) + k * (s - delta)
            }
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `b(s) = exp(1 − 1/(1 − s²))` on `|s| < 1`, normalised to `b(0) = 1`.
fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        return 0.0;
    }
    (1.0 - 1.0 / (1.0 - s * s)).exp()
}

/// Potential matching how the trajectory was produced.
pub fn trajectory_potential(traj: &Trajectory, u: &Field) -> Result<Field> {
    match traj.kind {
        TrajectoryKind::Regularized { .. } => compute_p(u),
        TrajectoryKind::Limit { .. } => Ok(Field::from_trusted(
            u.grid(),
            cumulative_potential(u.values(), u.grid().dx()),
        )),
    }
}

/// Weak-form entropy defect
/// `max_φ ∫∫ [−η(u)∂ₜφ − q(u)∂ₓφ − γη'(u)Pφ] dx dt`
/// over tensor bumps of half-width `width`, centred on a lattice of spacing
/// `width/2` inside `(0, T) × torus`. Entropic trajectories give values `≲ 0`.
pub fn entropy_residual(traj: &Trajectory, pair: EntropyPair, width: f64) -> Result<f64> {
    entropy_residual_with(traj, pair, width, Execution::default())
}

pub fn entropy_residual_with(traj: &Trajectory, pair: EntropyPair, width: f64, exec: Execution) -> Result<f64> {
    traj.validate()?;
    if !(width > 0.0) || 2.0 * width > traj.t_end() || 2.0 * width > traj.grid.length() {
        return Err(Error::InvalidParams(format!(
            "mollifier width {width} does not fit in [0, {}] x torus of length {}",
            traj.t_end(),
            traj.grid.length()
        )));
    }
    let times = traj.times();
    let spacing = times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    if spacing > width / 4.0 * (1.0 + 1e-9) {
        return Err(Error::InsufficientSampling {
            spacing,
            limit: width / 4.0,
        });
    }
    let grid = &traj.grid;
    let (n, dx, length) = (grid.n(), grid.dx(), grid.length());
    let gamma = traj.kind.gamma();

    // Per-sample fields η, q, γη'P.
    let samples: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = traj
        .states
        .iter()
        .map(|s| {
            let p = if gamma != 0.0 {
                trajectory_potential(traj, &s.u)?.into_values()
            } else {
                vec![0.0; n]
            };
            let u = s.u.values();
            Ok((
                u.iter().map(|&v| pair.eta(v)).collect(),
                u.iter().map(|&v| pair.q(v)).collect(),
                u.iter().zip(&p).map(|(&v, &pp)| gamma * pair.eta_prime(v) * pp).collect(),
            ))
        })
        .collect::<Result<_>>()?;

    // Dual-cell edges in time: midpoints between samples, closed by the ends.
    let m = times.len();
    let edges: Vec<f64> = (0..=m)
        .map(|i| match i {
            0 => times[0],
            i if i == m => times[m - 1],
            i => 0.5 * (times[i - 1] + times[i]),
        })
        .collect();

    let step = 0.5 * width;
    let t_end = traj.t_end();
    let n_t = ((t_end - 2.0 * width) / step + 1e-9).floor() as usize + 1;
    let n_x = ((length / step).round() as usize).max(1);
    let centres: Vec<(f64, f64)> = (0..n_t)
        .flat_map(|a| (0..n_x).map(move |b| (width + a as f64 * step, b as f64 * length / n_x as f64)))
        .collect();

    // Derivatives of φ enter as differences of φ across dual cells, so the
    // quadrature telescopes exactly on constant states.
    let residuals = exec.map(&centres, |&(tc, xc)| {
        let mut cells = Vec::new();
        for j in 0..n {
            let mut d = grid.node(j) - xc;
            d -= length * (d / length).round();
            let bx = bump(d / width);
            let jump = bump((d + 0.5 * dx) / width) - bump((d - 0.5 * dx) / width);
            if bx != 0.0 || jump != 0.0 {
                cells.push((j, dx * bx, jump));
            }
        }
        let mut total = 0.0;
        for (i, (eta, q, src)) in samples.iter().enumerate() {
            let bt = (edges[i + 1] - edges[i]) * bump((times[i] - tc) / width);
            let jump = bump((edges[i + 1] - tc) / width) - bump((edges[i] - tc) / width);
            if bt == 0.0 && jump == 0.0 {
                continue;
            }
            for &(j, bx, jx) in &cells {
                total -= eta[j] * jump * bx + q[j] * bt * jx + src[j] * bt * bx;
            }
        }
        total
    });
    Ok(residuals.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// `n_k` Kruzhkov levels evenly spanning `[min u₀, max u₀]`.
pub fn kruzhkov_levels(u0: &Field, n_k: usize) -> Vec<f64> {
    let lo = u0.values().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = u0.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if n_k == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n_k).map(|i| lo + (hi - lo) * i as f64 / (n_k - 1) as f64).collect()
}
