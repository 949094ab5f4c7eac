//! Integrating-factor RK4 solver for the viscous-dispersive Ostrovsky equation
//!
//! ```text
//! ∂ₜu + u∂ₓu − β∂ₓₓₓu = γP + ε∂ₓₓu,    ∂ₓP = u,    ∫P dx = 0
//! ```
//!
//! on a periodic grid. The linear symbol `β(ik)³ + ε(ik)²` is integrated
//! exactly; the transport term `−½∂ₓ(u²)` (2/3-rule dealiased) and the
//! rotation term `γP` are advanced by classical RK4 in the integrating-factor
//! frame. The quadratic functionals needed by the estimate audits are
//! integrated in time with the same RK4 stages, so their accumulated values
//! carry fourth-order time error rather than a left-endpoint O(dt) error.

use std::sync::Arc;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::nonlocal::InitialData;
use crate::spectral::{Field, Grid};
use crate::trajectory::{Integrals, RegParams, State, Trajectory, TrajectoryKind};

/// `‖u‖∞` above which a run is declared blown up.
pub const BLOWUP_GUARD: f64 = 1e6;

type Forcing = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Per-slot factor `exp((β(ik)³ + ε(ik)²)·dt)` under the `e^{-ikx}` forward
/// convention. Negative `dt` is only meaningful when `ε = 0`.
pub fn linear_propagator(grid: &Grid, params: &RegParams, dt: f64) -> Vec<Complex64> {
    (0..grid.n())
        .map(|j| {
            let symbol = grid.derivative_symbol(j, 3) * params.beta + grid.derivative_symbol(j, 2) * params.eps;
            (symbol * dt).exp()
        })
        .collect()
}

/// Stable step for the explicit part: `safety·dx / max(1, ‖u‖∞)`.
pub fn cfl_dt(u: &Field, safety: f64) -> f64 {
    safety * u.grid().dx() / u.norm_linf().max(1.0)
}

/// Fraction of non-mean energy in the upper third of the dealiased band.
fn spectral_tail(grid: &Grid, u_hat: &[Complex64]) -> f64 {
    let cutoff = grid.dealias_cutoff() as f64;
    let (mut total, mut tail) = (0.0, 0.0);
    for (j, c) in u_hat.iter().enumerate().skip(1) {
        let e = c.norm_sqr();
        total += e;
        let k = grid.mode(j).unsigned_abs() as f64;
        if k > 2.0 * cutoff / 3.0 && k <= cutoff {
            tail += e;
        }
    }
    if total > 0.0 {
        tail / total
    } else {
        0.0
    }
}

struct StageEval {
    rhs: Vec<Complex64>,
    rates: Integrals,
}

/// Configured solver. The toggles other than the tail limit are test hooks.
#[derive(Clone)]
pub struct RegularizedSolver {
    grid: Grid,
    params: RegParams,
    dealias: bool,
    transport: bool,
    rotation: bool,
    forcing: Option<Forcing>,
    max_tail_fraction: Option<f64>,
}

impl RegularizedSolver {
    pub fn new(grid: &Grid, params: RegParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            grid: grid.clone(),
            params,
            dealias: true,
            transport: true,
            rotation: true,
            forcing: None,
            max_tail_fraction: None,
        })
    }

    pub fn params(&self) -> &RegParams {
        &self.params
    }

    /// Disables the 2/3 rule on the quadratic term.
    pub fn without_dealiasing(mut self) -> Self {
        self.dealias = false;
        self
    }

    /// Drops both `−u∂ₓu` and `γP`, leaving the exactly integrated linear part.
    pub fn linear_only(mut self) -> Self {
        self.transport = false;
        self.rotation = false;
        self
    }

    /// Adds a source `f(t, x)` to the right-hand side.
    pub fn with_forcing(mut self, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.forcing = Some(Arc::new(f));
        self
    }

    /// Refuse runs whose spectral tail fraction exceeds `limit` at a save time.
    pub fn with_tail_limit(mut self, limit: f64) -> Self {
        self.max_tail_fraction = Some(limit);
        self
    }

    fn mask(&self, spec: &mut [Complex64]) {
        if self.dealias {
            for (j, c) in spec.iter_mut().enumerate() {
                if !self.grid.is_retained(j) {
                    *c = Complex64::new(0.0, 0.0);
                }
            }
        }
    }

    fn to_physical(&self, spec: &[Complex64], symbol_order: u32, scratch: &mut [Complex64]) -> Vec<f64> {
        let mut buf: Vec<Complex64> = if symbol_order == 0 {
            spec.to_vec()
        } else {
            spec.iter()
                .enumerate()
                .map(|(j, c)| c * self.grid.derivative_symbol(j, symbol_order))
                .collect()
        };
        self.grid.inverse_in_place(&mut buf, scratch);
        buf.iter().map(|c| c.re).collect()
    }

    /// Right-hand side `N(û, t)` in spectral space, plus the integrands of the
    /// audited functionals at this stage.
    fn evaluate(&self, u_hat: &[Complex64], t: f64, scratch: &mut [Complex64]) -> StageEval {
        let grid = &self.grid;
        let n = grid.n();
        let dx = grid.dx();
        let u = self.to_physical(u_hat, 0, scratch);
        let ux = self.to_physical(u_hat, 1, scratch);
        let uxx = self.to_physical(u_hat, 2, scratch);
        let uxxx = self.to_physical(u_hat, 3, scratch);
        let p_hat: Vec<Complex64> = u_hat
            .iter()
            .enumerate()
            .map(|(j, c)| {
                if j == 0 || grid.is_nyquist(j) {
                    Complex64::new(0.0, 0.0)
                } else {
                    c / Complex64::new(0.0, grid.wavenumber(j))
                }
            })
            .collect();
        let p = self.to_physical(&p_hat, 0, scratch);

        let mut rates = Integrals::default();
        for j in 0..n {
            let (v, d1, d2, d3) = (u[j], ux[j], uxx[j], uxxx[j]);
            rates.grad_l2 += d1 * d1;
            rates.u_l2 += v * v;
            rates.p_u2 += p[j] * v * v;
            rates.u_ux_l2 += (v * d1) * (v * d1);
            rates.uxx_l2 += d2 * d2;
            rates.uxxx_l2 += d3 * d3;
            rates.ux_uxx_l1 += (d1 * d2).abs();
            rates.u_l4 += (v * v) * (v * v);
        }
        let rates = rates * dx;

        let mut rhs = vec![Complex64::new(0.0, 0.0); n];
        if self.transport {
            let mut sq: Vec<Complex64> = u.iter().map(|&v| Complex64::new(v * v, 0.0)).collect();
            grid.forward_in_place(&mut sq, scratch);
            for (j, (r, s)) in rhs.iter_mut().zip(&sq).enumerate() {
                *r -= s * grid.derivative_symbol(j, 1) * 0.5;
            }
        }
        if self.rotation && self.params.gamma != 0.0 {
            for (r, ph) in rhs.iter_mut().zip(&p_hat) {
                *r += ph * self.params.gamma;
            }
        }
        if let Some(f) = &self.forcing {
            let mut src: Vec<Complex64> = grid.nodes().map(|x| Complex64::new(f(t, x), 0.0)).collect();
            grid.forward_in_place(&mut src, scratch);
            for (r, s) in rhs.iter_mut().zip(&src) {
                *r += s;
            }
        }
        self.mask(&mut rhs);
        rhs[0] = Complex64::new(0.0, 0.0);
        StageEval { rhs, rates }
    }

    /// One IFRK4 step in spectral space. Returns the new coefficients and the
    /// RK4-weighted increment of the running integrals.
    fn advance(&self, u_hat: &[Complex64], t: f64, dt: f64, scratch: &mut [Complex64]) -> (Vec<Complex64>, Integrals) {
        let e_half = linear_propagator(&self.grid, &self.params, 0.5 * dt);
        let e_full = linear_propagator(&self.grid, &self.params, dt);
        let h = 0.5 * dt;

        let s1 = self.evaluate(u_hat, t, scratch);
        let a: Vec<Complex64> = (0..u_hat.len()).map(|j| e_half[j] * (u_hat[j] + s1.rhs[j] * h)).collect();
        let s2 = self.evaluate(&a, t + h, scratch);
        let b: Vec<Complex64> = (0..u_hat.len()).map(|j| e_half[j] * u_hat[j] + s2.rhs[j] * h).collect();
        let s3 = self.evaluate(&b, t + h, scratch);
        let c: Vec<Complex64> = (0..u_hat.len())
            .map(|j| e_full[j] * u_hat[j] + e_half[j] * s3.rhs[j] * dt)
            .collect();
        let s4 = self.evaluate(&c, t + dt, scratch);

        let mut next: Vec<Complex64> = (0..u_hat.len())
            .map(|j| {
                e_full[j] * u_hat[j]
                    + (e_full[j] * s1.rhs[j] + e_half[j] * (s2.rhs[j] + s3.rhs[j]) * 2.0 + s4.rhs[j]) * (dt / 6.0)
            })
            .collect();
        next[0] = Complex64::new(0.0, 0.0);
        let increment = (s1.rates + (s2.rates + s3.rates) * 2.0 + s4.rates) * (dt / 6.0);
        (next, increment)
    }

    fn check_dt(&self, dt: f64) -> Result<()> {
        if dt == 0.0 || !dt.is_finite() || (dt < 0.0 && self.params.eps != 0.0) {
            return Err(Error::InvalidParams(format!(
                "time step {dt} (negative steps need eps = 0)"
            )));
        }
        Ok(())
    }

    fn physical(&self, u_hat: &[Complex64], t: f64, scratch: &mut [Complex64]) -> Result<Field> {
        let values = self.to_physical(u_hat, 0, scratch);
        let sup_norm = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if !sup_norm.is_finite() || sup_norm > BLOWUP_GUARD {
            return Err(Error::BlowUp { t, sup_norm });
        }
        Ok(Field::from_trusted(&self.grid, values))
    }

    /// Advances `state` by `dt`; the zero mode is pinned to zero.
    pub fn step(&self, state: &State, dt: f64) -> Result<State> {
        self.check_dt(dt)?;
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.grid.scratch_len()];
        let u_hat = state.u.spectrum();
        let (next, _) = self.advance(&u_hat, state.t, dt, &mut scratch);
        let t = state.t + dt;
        Ok(State {
            t,
            u: self.physical(&next, t, &mut scratch)?,
        })
    }

    /// Integrates with fixed `dt` (no CFL control) until `t_end`; used by
    /// order-of-accuracy checks.
    pub fn integrate_fixed(&self, u0: &Field, t0: f64, t_end: f64, steps: usize) -> Result<State> {
        let dt = (t_end - t0) / steps as f64;
        self.check_dt(dt)?;
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.grid.scratch_len()];
        let mut u_hat = u0.spectrum();
        let mut t = t0;
        for i in 0..steps {
            u_hat = self.advance(&u_hat, t, dt, &mut scratch).0;
            t = if i + 1 == steps { t_end } else { t + dt };
        }
        Ok(State {
            t,
            u: self.physical(&u_hat, t, &mut scratch)?,
        })
    }

    /// Runs from the initial datum to `t_end`, saving at multiples of
    /// `save_every` (and at `t_end`). The datum is first projected onto the
    /// dealiased band.
    pub fn simulate(&self, init: &InitialData, t_end: f64, save_every: f64, safety: f64) -> Result<Trajectory> {
        if !(t_end > 0.0) || !(save_every > 0.0) || !(safety > 0.0 && safety <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "t_end = {t_end}, save_every = {save_every}, safety = {safety}"
            )));
        }
        if *init.u0.grid() != self.grid {
            return Err(Error::InvalidParams("initial data lives on another grid".into()));
        }
        let grid = &self.grid;
        let mut scratch = vec![Complex64::new(0.0, 0.0); grid.scratch_len()];
        let mut u_hat = init.u0.spectrum();
        self.mask(&mut u_hat);
        u_hat[0] = Complex64::new(0.0, 0.0);
        let mut u = self.physical(&u_hat, 0.0, &mut scratch)?;

        let mut states = vec![State { t: 0.0, u: u.clone() }];
        let mut integrals = vec![Integrals::default()];
        let mut max_tail = spectral_tail(grid, &u_hat);
        let mut running = Integrals::default();
        let mut t = 0.0;
        let mut save_index = 1usize;
        let next_save = |m: usize| {
            let s = m as f64 * save_every;
            if s >= t_end || t_end - s < 1e-9 * save_every {
                t_end
            } else {
                s
            }
        };
        let mut target = next_save(save_index);
        loop {
            let mut dt = cfl_dt(&u, safety);
            let hit = t + dt >= target - 1e-12 * target.max(1.0);
            if hit {
                dt = target - t;
            }
            let (next, inc) = self.advance(&u_hat, t, dt, &mut scratch);
            u_hat = next;
            t = if hit { target } else { t + dt };
            running = running + inc;
            u = self.physical(&u_hat, t, &mut scratch)?;
            if hit {
                let tail = spectral_tail(grid, &u_hat);
                max_tail = max_tail.max(tail);
                if let Some(limit) = self.max_tail_fraction {
                    if tail > limit {
                        return Err(Error::UnderResolved { t, fraction: tail, limit });
                    }
                }
                states.push(State { t, u: u.clone() });
                integrals.push(running);
                if target >= t_end {
                    break;
                }
                save_index += 1;
                target = next_save(save_index);
            }
        }
        Ok(Trajectory {
            kind: TrajectoryKind::Regularized { params: self.params },
            grid: grid.clone(),
            states,
            integrals,
            max_tail_fraction: max_tail,
        })
    }
}

/// Convenience wrapper: default solver, no test hooks.
pub fn simulate(init: &InitialData, params: RegParams, t_end: f64, save_every: f64, safety: f64) -> Result<Trajectory> {
    RegularizedSolver::new(init.u0.grid(), params)?.simulate(init, t_end, save_every, safety)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlocal::{make_initial_data, Profile};
    use crate::spectral::make_grid;
    use std::f64::consts::PI;

    fn torus(n: usize) -> Grid {
        make_grid(n, 2.0 * PI).unwrap()
    }

    #[test]
    fn propagator_cases() {
        let g = torus(32);
        let dispersive = RegParams::new(0.0, 0.3, 1.0).unwrap();
        for m in linear_propagator(&g, &dispersive, 0.7) {
            assert!((m.norm() - 1.0).abs() < 1e-14);
        }
        let heat = RegParams::new(0.2, 0.0, 1.0).unwrap();
        let e = linear_propagator(&g, &heat, 0.5);
        for (j, m) in e.iter().enumerate() {
            let k = g.wavenumber(j);
            assert!((m.re - (-0.2 * k * k * 0.5).exp()).abs() < 1e-15);
            assert_eq!(m.im, 0.0);
        }
        // k_phys = ±1 on the 2π torus, ε = 0.1, β = 0.01, dt = 0.5 evaluated directly:
        // exponent at k = -1 is (β(-i)³ - ε)·dt = -0.05 + 0.005i, at k = +1 its conjugate.
        let p = RegParams::new(0.1, 0.01, 1.0).unwrap();
        let e = linear_propagator(&g, &p, 0.5);
        let (mag, phase) = ((-0.05f64).exp(), 0.005f64);
        let minus_one = g.n() - 1;
        assert!((e[minus_one].re - mag * phase.cos()).abs() < 1e-15);
        assert!((e[minus_one].im - mag * phase.sin()).abs() < 1e-15);
        assert!((e[1].im + mag * phase.sin()).abs() < 1e-15);
        for m in &e {
            assert!(m.norm() <= 1.0 + 1e-15);
        }
    }

    #[test]
    fn cfl_formula() {
        let g = make_grid(10, 1.0).unwrap();
        assert!((cfl_dt(&Field::zeros(&g), 0.4) - 0.04).abs() < 1e-15);
        let two = Field::from_fn(&g, |x| if x < 0.05 { 2.0 } else { 0.0 });
        assert!((cfl_dt(&two, 0.4) - 0.02).abs() < 1e-15);
        let half = Field::from_fn(&g, |_| 0.5);
        assert!((cfl_dt(&half, 0.4) - 0.04).abs() < 1e-15);
    }

    #[test]
    fn zero_is_fixed() {
        let g = torus(32);
        let s = RegularizedSolver::new(&g, RegParams::new(0.1, 0.01, 1.0).unwrap()).unwrap();
        let out = s.step(&State { t: 0.0, u: Field::zeros(&g) }, 0.1).unwrap();
        assert_eq!(out.u.norm_linf(), 0.0);
        assert!((out.t - 0.1).abs() < 1e-15);
    }

    #[test]
    fn linear_mode_decays_exactly() {
        let l = 3.0;
        let g = make_grid(32, l).unwrap();
        let (eps, t_end) = (0.05, 0.8);
        let s = RegularizedSolver::new(&g, RegParams::new(eps, 0.02, 1.0).unwrap())
            .unwrap()
            .linear_only();
        let u0 = Field::from_fn(&g, |x| (2.0 * PI * x / l).sin());
        let out = s.integrate_fixed(&u0, 0.0, t_end, 13).unwrap();
        let amp = |f: &Field| 2.0 * f.spectrum()[1].norm() / g.n() as f64;
        let k = 2.0 * PI / l;
        assert!((amp(&out.u) - (-eps * k * k * t_end).exp()).abs() < 1e-13);
    }

    #[test]
    fn negative_steps_rejected_with_viscosity() {
        let g = torus(16);
        let s = RegularizedSolver::new(&g, RegParams::new(0.1, 0.0, 0.0).unwrap()).unwrap();
        assert!(s.step(&State { t: 0.0, u: Field::zeros(&g) }, -0.1).is_err());
        assert!(s.step(&State { t: 0.0, u: Field::zeros(&g) }, 0.0).is_err());
    }

    #[test]
    fn reversible_without_viscosity() {
        let g = torus(64);
        let s = RegularizedSolver::new(&g, RegParams::new(0.0, 0.01, 0.0).unwrap()).unwrap();
        let u0 = Field::from_fn(&g, |x| 0.5 * x.sin());
        let fwd = s.integrate_fixed(&u0, 0.0, 0.3, 60).unwrap();
        let back = s.integrate_fixed(&fwd.u, 0.3, 0.0, 60).unwrap();
        assert!((&back.u - &u0).norm_linf() < 1e-6);
    }

    #[test]
    fn blow_up_is_reported() {
        let g = torus(16);
        let s = RegularizedSolver::new(&g, RegParams::new(0.0, 0.0, 0.0).unwrap()).unwrap();
        let huge = Field::from_fn(&g, |x| 1e7 * x.sin());
        assert!(matches!(
            s.step(&State { t: 0.0, u: huge }, 1e-12),
            Err(Error::BlowUp { .. })
        ));
    }

    #[test]
    fn zero_trajectory() {
        let g = torus(32);
        let init = make_initial_data(&Profile::Zero, &g, 0.1, 0.01).unwrap();
        let traj = simulate(&init, RegParams::new(0.1, 0.01, 1.0).unwrap(), 0.5, 0.1, 0.4).unwrap();
        assert_eq!(traj.states.len(), 6);
        assert!(traj.states.iter().all(|s| s.u.norm_linf() == 0.0));
        assert!(traj.integrals.iter().all(|i| *i == Integrals::default()));
        traj.validate().unwrap();
    }

    #[test]
    fn save_times_land_exactly() {
        let g = torus(32);
        let init = make_initial_data(&"sine".parse().unwrap(), &g, 0.1, 0.01).unwrap();
        let traj = simulate(&init, RegParams::new(0.1, 0.01, 1.0).unwrap(), 1.0, 0.3, 0.4).unwrap();
        let t = traj.times();
        assert_eq!(t.len(), 5);
        assert_eq!(*t.last().unwrap(), 1.0);
        for (i, ti) in t.iter().enumerate().take(4) {
            assert!((ti - 0.3 * i as f64).abs() < 1e-15);
        }
        for w in traj.integrals.windows(2) {
            assert!(w[1].grad_l2 >= w[0].grad_l2);
        }
        for s in &traj.states {
            assert!(s.u.mean().abs() < 1e-15);
        }
    }

    #[test]
    fn tail_limit_refuses_underresolved_runs() {
        let g = torus(32);
        let init = make_initial_data(&"sine".parse().unwrap(), &g, 0.005, 0.0).unwrap();
        let s = RegularizedSolver::new(&g, RegParams::new(0.005, 0.0, 0.0).unwrap())
            .unwrap()
            .with_tail_limit(1e-6);
        assert!(matches!(
            s.simulate(&init, 1.5, 0.1, 0.4),
            Err(Error::UnderResolved { .. })
        ));
    }

    fn manufactured_error(steps: usize) -> f64 {
        let g = torus(32);
        let (eps, beta, gamma) = (0.1, 0.01, 1.0);
        let s = RegularizedSolver::new(&g, RegParams::new(eps, beta, gamma).unwrap())
            .unwrap()
            .with_forcing(move |t, x| {
                let e = (-t).exp();
                -e * x.sin() + 0.5 * e * e * (2.0 * x).sin() + (beta + gamma) * e * x.cos() + eps * e * x.sin()
            });
        let u0 = Field::from_fn(&g, f64::sin);
        let t_end = 1.0;
        let out = s.integrate_fixed(&u0, 0.0, t_end, steps).unwrap();
        let exact = Field::from_fn(&g, |x| (-t_end).exp() * x.sin());
        (&out.u - &exact).norm_linf()
    }

    #[test]
    fn manufactured_solution_is_fourth_order() {
        let (coarse, fine) = (manufactured_error(10), manufactured_error(20));
        assert!(coarse < 1e-4, "coarse error {coarse}");
        assert!(coarse / fine >= 15.0, "ratio {}", coarse / fine);
    }

    #[test]
    fn energy_balances_hold_to_time_accuracy() {
        let g = torus(256);
        let init = make_initial_data(&"sine".parse().unwrap(), &g, 0.1, 0.01).unwrap();
        let traj = simulate(&init, RegParams::new(0.1, 0.01, 1.0).unwrap(), 1.0, 0.1, 0.4).unwrap();
        let (u0, p0) = (init.u0.norm_l2_squared(), init.p0.norm_l2_squared());
        for (s, i) in traj.states.iter().zip(&traj.integrals) {
            let l2 = s.u.norm_l2_squared() + 0.2 * i.grad_l2 - u0;
            assert!(l2.abs() < 1e-8, "L2 residual {l2} at t = {}", s.t);
            let p = crate::nonlocal::compute_p(&s.u).unwrap();
            let pr = p.norm_l2_squared() - p0 + 0.2 * i.u_l2 + i.p_u2;
            assert!(pr.abs() < 1e-8, "P residual {pr} at t = {}", s.t);
        }
    }

    #[test]
    fn inviscid_run_conserves_l2() {
        let g = torus(128);
        let init = make_initial_data(&"sine:0.5,1".parse().unwrap(), &g, 0.0, 0.01).unwrap();
        let traj = simulate(&init, RegParams::new(0.0, 0.01, 1.0).unwrap(), 0.5, 0.1, 0.4).unwrap();
        let drift = traj.last().u.norm_l2_squared() - init.u0.norm_l2_squared();
        assert!(drift.abs() < 1e-8, "drift {drift}");
    }

    #[test]
    fn l2_norm_decreases_with_viscosity() {
        let g = torus(128);
        let init = make_initial_data(&"sine".parse().unwrap(), &g, 0.05, 0.0025).unwrap();
        let traj = simulate(&init, RegParams::new(0.05, 0.0025, 1.0).unwrap(), 1.0, 0.01, 0.4).unwrap();
        for w in traj.states.windows(2) {
            assert!(w[1].u.norm_l2() <= w[0].u.norm_l2() + 1e-10);
        }
    }
}
