//! The nonlocal primitives `P = ∂ₓ⁻¹u`, `F = ∂ₓ⁻¹P` and admissible initial data.
//!
//! Both antiderivatives use the zero-mean normalization, which on the torus
//! makes `∫ u·P dx` and `∫ P·F dx` vanish identically.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::spectral::{antiderivative_zero_mean, derivative, Field, Grid};

/// `P` with `∂ₓP = u` and `∫P dx = 0`.
pub fn compute_p(u: &Field) -> Result<Field> {
    antiderivative_zero_mean(u)
}

/// `F` with `∂ₓF = P` and `∫F dx = 0`.
pub fn compute_f(p: &Field) -> Result<Field> {
    antiderivative_zero_mean(p)
}

/// Named initial profiles, or raw samples.
#[derive(Clone, Debug, PartialEq)]
pub enum Profile {
    Zero,
    /// `a·sin(2πkx/L)`, integer `k >= 1`.
    Sine { amplitude: f64, k: f64 },
    TwoMode { a1: f64, k1: f64, a2: f64, k2: f64 },
    /// `a·∂ₓ exp(-((x-x0)/w)²)`, periodized. Defaults: `x0 = L/2`, `w = L/16`.
    GaussDeriv {
        amplitude: f64,
        center: Option<f64>,
        width: Option<f64>,
    },
    Samples(Vec<f64>),
}

fn parse_args(spec: &str, args: &str, count: usize) -> Result<Vec<f64>> {
    let vals: std::result::Result<Vec<f64>, _> = args.split(',').map(|s| s.trim().parse::<f64>()).collect();
    match vals {
        Ok(v) if v.len() == count && v.iter().all(|x| x.is_finite()) => Ok(v),
        _ => Err(Error::InvalidProfile(format!(
            "{spec}: expected {count} comma-separated finite numbers"
        ))),
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        match (name, args) {
            ("zero", None) => Ok(Profile::Zero),
            ("sine", None) => Ok(Profile::Sine { amplitude: 1.0, k: 1.0 }),
            ("sine", Some(a)) => {
                let v = parse_args(s, a, 2)?;
                Ok(Profile::Sine { amplitude: v[0], k: v[1] })
            }
            ("two-mode", None) => Ok(Profile::TwoMode { a1: 1.0, k1: 1.0, a2: 0.5, k2: 2.0 }),
            ("two-mode", Some(a)) => {
                let v = parse_args(s, a, 4)?;
                Ok(Profile::TwoMode { a1: v[0], k1: v[1], a2: v[2], k2: v[3] })
            }
            ("gauss-deriv" | "gaussian-derivative", None) => Ok(Profile::GaussDeriv {
                amplitude: 1.0,
                center: None,
                width: None,
            }),
            ("gauss-deriv" | "gaussian-derivative", Some(a)) => {
                let v = parse_args(s, a, 3)?;
                if !(v[2] > 0.0) {
                    return Err(Error::InvalidProfile(format!("{s}: width must be positive")));
                }
                Ok(Profile::GaussDeriv {
                    amplitude: v[0],
                    center: Some(v[1]),
                    width: Some(v[2]),
                })
            }
            _ => Err(Error::InvalidProfile(s.to_string())),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Zero => write!(f, "zero"),
            Profile::Sine { amplitude, k } => write!(f, "sine:{amplitude},{k}"),
            Profile::TwoMode { a1, k1, a2, k2 } => write!(f, "two-mode:{a1},{k1},{a2},{k2}"),
            Profile::GaussDeriv { amplitude, center, width } => match (center, width) {
                (Some(c), Some(w)) => write!(f, "gauss-deriv:{amplitude},{c},{w}"),
                _ => write!(f, "gaussian-derivative"),
            },
            Profile::Samples(v) => write!(f, "samples[{}]", v.len()),
        }
    }
}

/// Named profiles serialize as their string form, samples as a JSON array.
impl Serialize for Profile {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Profile::Samples(v) => v.serialize(ser),
            other => ser.serialize_str(&other.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for Profile {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Name(String),
            Samples(Vec<f64>),
        }
        match Repr::deserialize(de)? {
            Repr::Name(s) => s.parse().map_err(serde::de::Error::custom),
            Repr::Samples(v) => Ok(Profile::Samples(v)),
        }
    }
}

fn check_mode(k: f64) -> Result<()> {
    if k >= 1.0 && k.fract() == 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidProfile(format!("wave number {k} must be a positive integer")))
    }
}

impl Profile {
    /// Samples the profile at the grid nodes.
    pub fn sample(&self, grid: &Grid) -> Result<Vec<f64>> {
        let l = grid.length();
        let values: Vec<f64> = match self {
            Profile::Zero => vec![0.0; grid.n()],
            Profile::Sine { amplitude, k } => {
                check_mode(*k)?;
                grid.nodes().map(|x| amplitude * (2.0 * PI * k * x / l).sin()).collect()
            }
            Profile::TwoMode { a1, k1, a2, k2 } => {
                check_mode(*k1)?;
                check_mode(*k2)?;
                grid.nodes()
                    .map(|x| a1 * (2.0 * PI * k1 * x / l).sin() + a2 * (2.0 * PI * k2 * x / l).sin())
                    .collect()
            }
            Profile::GaussDeriv { amplitude, center, width } => {
                let x0 = center.unwrap_or(0.5 * l);
                let w = width.unwrap_or(l / 16.0);
                grid.nodes()
                    .map(|x| {
                        let s = (x - x0 + 0.5 * l).rem_euclid(l) - 0.5 * l;
                        amplitude * (-2.0 * s / (w * w)) * (-(s / w).powi(2)).exp()
                    })
                    .collect()
            }
            Profile::Samples(v) => {
                if v.len() != grid.n() {
                    return Err(Error::InvalidProfile(format!(
                        "{} samples for a grid of {} nodes",
                        v.len(),
                        grid.n()
                    )));
                }
                v.clone()
            }
        };
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProfile(format!("{self}: non-finite samples")));
        }
        Ok(values)
    }
}

/// Admissible initial datum with its primitive and data constant.
#[derive(Clone, Debug)]
pub struct InitialData {
    pub u0: Field,
    pub p0: Field,
    /// `‖u0‖₂² + ‖u0‖₄⁴ + (β+ε²)‖∂ₓu0‖₂² + β²‖∂ₓₓu0‖₂² + |β∫u0(∂ₓu0)²|`.
    pub c0: f64,
}

impl InitialData {
    pub fn p0_l2(&self) -> f64 {
        self.p0.norm_l2()
    }
}

/// The data constant attached to `u0` for the given `(ε, β)`.
pub fn data_constant(u0: &Field, eps: f64, beta: f64) -> f64 {
    let ux = derivative(u0, 1);
    let uxx = derivative(u0, 2);
    let cubic = u0.zip_map(&ux, |u, d| u * d * d).integral();
    u0.norm_l2_squared()
        + u0.norm_l4_fourth()
        + (beta + eps * eps) * ux.norm_l2_squared()
        + beta * beta * uxx.norm_l2_squared()
        + (beta * cubic).abs()
}

/// Samples `profile`, projects it to zero mean and computes `P0` and `C0`.
pub fn make_initial_data(profile: &Profile, grid: &Grid, eps: f64, beta: f64) -> Result<InitialData> {
    let mut values = profile.sample(grid)?;
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    for v in &mut values {
        *v -= mean;
    }
    let u0 = Field::new(grid, values)?;
    let p0 = compute_p(&u0)?;
    let p0_sq = p0.norm_l2_squared();
    if !p0_sq.is_finite() {
        return Err(Error::InvalidProfile(format!("{profile}: primitive has infinite L2 norm")));
    }
    let c0 = data_constant(&u0, eps, beta);
    Ok(InitialData { u0, p0, c0 })
}
