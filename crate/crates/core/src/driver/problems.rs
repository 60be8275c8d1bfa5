//! The model problems: domain, data, goal functional and known solutions.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::GoalFunctional;
use crate::field::{ConstantField, FnField, Point};
use crate::loss::{PenaltyParams, ProblemData, SharedField};
use crate::network::{Activation, ArchKind, Architecture};
use crate::sampling::Domain;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Problem {
    /// `−Δu = 1` on the L-shape, `J(u) = u(0.5, −0.5)`.
    LaplaceLShape,
    /// Stokes on the unit disc with a rotating analytic velocity,
    /// `J(v) = ∫_0^1 v_y(x, 0) dx`.
    StokesDisc,
    /// `−Δu = 2π² sin(πx) sin(πy)` on the unit square, `J(u)` = mean of `u`.
    LaplaceSquareManufactured,
}

impl Problem {
    pub const ALL: [Problem; 3] = [Problem::LaplaceLShape, Problem::StokesDisc, Problem::LaplaceSquareManufactured];

    pub fn domain(self) -> Domain {
        match self {
            Problem::LaplaceLShape => Domain::LShape,
            Problem::StokesDisc => Domain::UnitDisc,
            Problem::LaplaceSquareManufactured => Domain::UnitSquare,
        }
    }

    pub fn is_stokes(self) -> bool {
        self == Problem::StokesDisc
    }

    /// Solution components.
    pub fn components(self) -> usize {
        if self.is_stokes() {
            2
        } else {
            1
        }
    }

    pub fn goal(self, mollifier_radius: Option<f64>) -> GoalFunctional {
        match self {
            Problem::LaplaceLShape => GoalFunctional::PointValue { x: [0.5, -0.5], radius: mollifier_radius },
            Problem::StokesDisc => GoalFunctional::LineSegmentY { a: 0.0, b: 1.0 },
            Problem::LaplaceSquareManufactured => GoalFunctional::DomainAverage,
        }
    }

    pub fn forcing(self) -> SharedField {
        match self {
            Problem::LaplaceLShape => Arc::new(ConstantField(vec![1.0])),
            Problem::LaplaceSquareManufactured => Arc::new(FnField::new(1, |p: Point, o: &mut [f64]| {
                o[0] = 2.0 * PI * PI * (PI * p[0]).sin() * (PI * p[1]).sin();
            })),
            Problem::StokesDisc => Arc::new(FnField::new(2, stokes_forcing)),
        }
    }

    /// Analytic solution, where known.
    pub fn exact(self) -> Option<SharedField> {
        match self {
            Problem::LaplaceLShape => None,
            Problem::LaplaceSquareManufactured => Some(Arc::new(FnField::with_gradient(
                1,
                |p: Point, o: &mut [f64]| o[0] = (PI * p[0]).sin() * (PI * p[1]).sin(),
                |p: Point, g: &mut [f64]| {
                    g[0] = PI * (PI * p[0]).cos() * (PI * p[1]).sin();
                    g[1] = PI * (PI * p[0]).sin() * (PI * p[1]).cos();
                },
            ))),
            Problem::StokesDisc => Some(Arc::new(FnField::with_gradient(2, stokes_velocity, stokes_velocity_gradient))),
        }
    }

    pub fn data(self) -> ProblemData {
        ProblemData { f: self.forcing(), domain: self.domain(), exact: self.exact() }
    }

    pub fn default_arch(self) -> Architecture {
        match self {
            Problem::StokesDisc => Architecture {
                kind: ArchKind::FFNet,
                input_dim: 2,
                output_dim: 2,
                width: 10,
                depth: 20,
                activation: Activation::Elu,
            },
            _ => Architecture {
                kind: ArchKind::ResNet,
                input_dim: 2,
                output_dim: 1,
                width: 20,
                depth: 2,
                activation: Activation::ReluCubed,
            },
        }
    }

    pub fn default_penalty(self) -> PenaltyParams {
        if self.is_stokes() {
            PenaltyParams::stokes(500.0, 100.0)
        } else {
            PenaltyParams::laplace(500.0)
        }
    }

    pub fn default_adjoint_level(self) -> usize {
        if self.is_stokes() {
            3
        } else {
            2
        }
    }

    pub fn default_epochs(self) -> usize {
        if self.is_stokes() {
            25_000
        } else {
            8_000
        }
    }
}

/// `v = cos(π r²/2) (y, −x)`.
pub fn stokes_velocity(p: Point, o: &mut [f64]) {
    let c = (0.5 * PI * (p[0] * p[0] + p[1] * p[1])).cos();
    o[0] = c * p[1];
    o[1] = -c * p[0];
}

fn stokes_velocity_gradient(p: Point, g: &mut [f64]) {
    let [x, y] = p;
    let s = 0.5 * PI * (x * x + y * y);
    let (c, dc) = (s.cos(), -s.sin() * PI);
    // ∂_x c = dc·x, ∂_y c = dc·y
    g[0] = dc * x * y;
    g[1] = dc * y * y + c;
    g[2] = -(dc * x * x + c);
    g[3] = -dc * x * y;
}

/// `f = −Δv + ∇p` with `p = 4 cos(π r²/2)`.
pub fn stokes_forcing(p: Point, o: &mut [f64]) {
    let [x, y] = p;
    let r2 = x * x + y * y;
    let s = 0.5 * PI * r2;
    o[0] = PI * PI * r2 * y * s.cos() + 4.0 * PI * (y - x) * s.sin();
    o[1] = -PI * PI * r2 * x * s.cos() - 4.0 * PI * (x + y) * s.sin();
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Problem::LaplaceLShape => "LaplaceLShape",
            Problem::StokesDisc => "StokesDisc",
            Problem::LaplaceSquareManufactured => "LaplaceSquareManufactured",
        })
    }
}

impl FromStr for Problem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Problem::ALL
            .into_iter()
            .find(|p| p.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown problem `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Field;

    /// −Δv by a fourth-order stencil on the closed-form velocity.
    fn minus_laplacian(p: Point) -> [f64; 2] {
        let h = 1e-3;
        let mut out = [0.0; 2];
        let mut v = [0.0; 2];
        for k in 0..2 {
            let mut acc = 0.0;
            for (dx, dy) in [(1.0, 0.0), (0.0, 1.0)] {
                let at = |t: f64, v: &mut [f64; 2]| {
                    stokes_velocity([p[0] + t * dx * h, p[1] + t * dy * h], v);
                    v[k]
                };
                let d2 = (-at(2.0, &mut v) + 16.0 * at(1.0, &mut v) - 30.0 * at(0.0, &mut v) + 16.0 * at(-1.0, &mut v)
                    - at(-2.0, &mut v))
                    / (12.0 * h * h);
                acc += d2;
            }
            out[k] = -acc;
        }
        out
    }

    #[test]
    fn stokes_data_is_consistent() {
        for p in [[0.3, 0.1], [-0.5, 0.6], [0.0, -0.9], [0.7, 0.7]] {
            let lap = minus_laplacian(p);
            let s = 0.5 * PI * (p[0] * p[0] + p[1] * p[1]);
            let grad_p = [-4.0 * PI * p[0] * s.sin(), -4.0 * PI * p[1] * s.sin()];
            let mut f = [0.0; 2];
            stokes_forcing(p, &mut f);
            for k in 0..2 {
                assert!((f[k] - lap[k] - grad_p[k]).abs() < 1e-6, "{p:?}");
            }
            // Divergence free, exact gradient matches differences.
            let exact = Problem::StokesDisc.exact().unwrap();
            let (mut v, mut g) = ([0.0; 2], [0.0; 4]);
            exact.jet_into(p, &mut v, &mut g);
            assert!((g[0] + g[3]).abs() < 1e-14);
            let mut gd = [0.0; 4];
            crate::field::FnField::new(2, stokes_velocity).jet_into(p, &mut v, &mut gd);
            for k in 0..4 {
                assert!((g[k] - gd[k]).abs() < 1e-8);
            }
        }
        let mut v = [0.0; 2];
        stokes_velocity([0.6, 0.8], &mut v);
        assert!(v[0].abs() < 1e-15 && v[1].abs() < 1e-15);
    }

    #[test]
    fn names_roundtrip() {
        for p in Problem::ALL {
            assert_eq!(p.to_string().parse::<Problem>().unwrap(), p);
        }
        assert!("Heat".parse::<Problem>().is_err());
    }

    #[test]
    fn default_architectures_are_valid() {
        for p in Problem::ALL {
            let a = p.default_arch();
            a.validate().unwrap();
            assert_eq!(a.output_dim, p.components());
        }
        assert_eq!(Problem::LaplaceLShape.default_arch().param_count(), 921);
    }
}
