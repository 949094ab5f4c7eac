//! Time-stamped solution records shared by both solvers.

use std::ops::{Add, Mul};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{Field, Grid};

/// How `β` follows `ε`: `β = c·ε^p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub c: f64,
    pub p: f64,
}

/// Which convergence statement a coupling falls under.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `p < 2`: dispersion dominates, no convergence statement applies.
    OutsideTheory,
    /// `p = 2`: `β = O(ε²)`, convergence to a distributional solution.
    BigO,
    /// `p > 2`: `β = o(ε²)`, convergence to the entropy solution.
    LittleO,
}

impl Coupling {
    pub fn beta(&self, eps: f64) -> f64 {
        self.c * eps.powf(self.p)
    }

    pub fn regime(&self) -> Regime {
        if self.p < 2.0 {
            Regime::OutsideTheory
        } else if self.p == 2.0 {
            Regime::BigO
        } else {
            Regime::LittleO
        }
    }
}

/// Viscosity `ε`, dispersion `β` and rotation `γ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegParams {
    pub eps: f64,
    pub beta: f64,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<Coupling>,
}

impl RegParams {
    pub fn new(eps: f64, beta: f64, gamma: f64) -> Result<Self> {
        let p = Self {
            eps,
            beta,
            gamma,
            coupling: None,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameters with `β = c·ε^p`.
    pub fn coupled(eps: f64, gamma: f64, coupling: Coupling) -> Result<Self> {
        let p = Self {
            eps,
            beta: coupling.beta(eps),
            gamma,
            coupling: Some(coupling),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if !(self.eps >= 0.0) || !self.eps.is_finite() {
            return bad(format!("eps = {} must be finite and >= 0", self.eps));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return bad(format!("beta = {} must be finite and >= 0", self.beta));
        }
        if !self.gamma.is_finite() {
            return bad(format!("gamma = {} must be finite", self.gamma));
        }
        if let Some(c) = self.coupling {
            if !(c.c > 0.0) || !(c.p > 0.0) {
                return bad(format!("coupling c = {}, p = {} must be positive", c.c, c.p));
            }
            let expect = c.beta(self.eps);
            if (self.beta - expect).abs() > 1e-12 * expect.abs() {
                return bad(format!("beta = {} differs from c·eps^p = {expect}", self.beta));
            }
        }
        Ok(())
    }
}

/// Solution at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub t: f64,
    pub u: Field,
}

/// Running space-time integrals, `∫₀ᵗ (·) ds`, of the quantities the
/// a priori estimates bound. The same struct holds instantaneous rates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Integrals {
    /// `‖∂ₓu‖₂²`
    pub grad_l2: f64,
    /// `‖u‖₂²`
    pub u_l2: f64,
    /// `∫ P·u² dx`
    pub p_u2: f64,
    /// `‖u·∂ₓu‖₂²`
    pub u_ux_l2: f64,
    /// `‖∂ₓₓu‖₂²`
    pub uxx_l2: f64,
    /// `‖∂ₓₓₓu‖₂²`
    pub uxxx_l2: f64,
    /// `∫ |∂ₓu·∂ₓₓu| dx`
    pub ux_uxx_l1: f64,
    /// `‖u‖₄⁴`
    pub u_l4: f64,
}

impl Integrals {
    pub const NAMES: [&'static str; 8] = [
        "grad_l2_int",
        "u_l2_int",
        "p_u2_int",
        "u_ux_l2_int",
        "uxx_l2_int",
        "uxxx_l2_int",
        "ux_uxx_l1_int",
        "u_l4_int",
    ];

    pub fn to_array(&self) -> [f64; 8] {
        [
            self.grad_l2,
            self.u_l2,
            self.p_u2,
            self.u_ux_l2,
            self.uxx_l2,
            self.uxxx_l2,
            self.ux_uxx_l1,
            self.u_l4,
        ]
    }

    pub fn from_array(a: [f64; 8]) -> Self {
        Self {
            grad_l2: a[0],
            u_l2: a[1],
            p_u2: a[2],
            u_ux_l2: a[3],
            uxx_l2: a[4],
            uxxx_l2: a[5],
            ux_uxx_l1: a[6],
            u_l4: a[7],
        }
    }
}

impl Add for Integrals {
    type Output = Integrals;
    fn add(self, rhs: Integrals) -> Integrals {
        let (a, b) = (self.to_array(), rhs.to_array());
        Integrals::from_array(std::array::from_fn(|i| a[i] + b[i]))
    }
}

impl Mul<f64> for Integrals {
    type Output = Integrals;
    fn mul(self, s: f64) -> Integrals {
        let a = self.to_array();
        Integrals::from_array(std::array::from_fn(|i| a[i] * s))
    }
}

/// Which equation produced a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TrajectoryKind {
    Regularized { params: RegParams },
    Limit { gamma: f64 },
}

impl TrajectoryKind {
    pub fn gamma(&self) -> f64 {
        match self {
            TrajectoryKind::Regularized { params } => params.gamma,
            TrajectoryKind::Limit { gamma } => *gamma,
        }
    }
}

/// Saved states plus the running integrals at each save time.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub kind: TrajectoryKind,
    pub grid: Grid,
    pub states: Vec<State>,
    /// Cumulative integrals at each saved time; zero for limit runs.
    pub integrals: Vec<Integrals>,
    /// Largest spectral tail fraction seen at the save times.
    pub max_tail_fraction: f64,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    pub fn initial(&self) -> &State {
        &self.states[0]
    }

    pub fn last(&self) -> &State {
        self.states.last().expect("trajectory has at least one state")
    }

    pub fn t_end(&self) -> f64 {
        self.last().t
    }

    pub fn params(&self) -> Option<RegParams> {
        match self.kind {
            TrajectoryKind::Regularized { params } => Some(params),
            TrajectoryKind::Limit { .. } => None,
        }
    }

    /// Checks the structural invariants: shared grid, strictly increasing
    /// times, non-decreasing accumulated norms.
    pub fn validate(&self) -> Result<()> {
        if self.states.is_empty() {
            return Err(Error::MissingData("trajectory has no states".into()));
        }
        if self.integrals.len() != self.states.len() {
            return Err(Error::MissingData(format!(
                "{} integral records for {} states",
                self.integrals.len(),
                self.states.len()
            )));
        }
        for w in self.states.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(Error::MissingData(format!("times not increasing at t = {}", w[1].t)));
            }
        }
        if let Some(s) = self.states.iter().find(|s| *s.u.grid() != self.grid) {
            return Err(Error::MissingData(format!("state at t = {} is on another grid", s.t)));
        }
        Ok(())
    }
}
