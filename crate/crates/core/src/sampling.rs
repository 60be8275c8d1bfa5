//! Computational domains and Monte-Carlo quadrature nodes.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::field::Point;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    /// `(0, 1)²`
    UnitSquare,
    /// `(-1, 1)² \ [0, 1]²`
    LShape,
    /// `{ |x| < 1 }`
    UnitDisc,
}

impl Domain {
    pub fn area(self) -> f64 {
        match self {
            Domain::UnitSquare => 1.0,
            Domain::LShape => 3.0,
            Domain::UnitDisc => PI,
        }
    }

    pub fn perimeter(self) -> f64 {
        match self {
            Domain::UnitSquare => 4.0,
            Domain::LShape => 8.0,
            Domain::UnitDisc => 2.0 * PI,
        }
    }

    /// Open-set membership.
    pub fn contains(self, p: Point) -> bool {
        let [x, y] = p;
        match self {
            Domain::UnitSquare => x > 0.0 && x < 1.0 && y > 0.0 && y < 1.0,
            Domain::LShape => x > -1.0 && x < 1.0 && y > -1.0 && y < 1.0 && !(x >= 0.0 && y >= 0.0),
            Domain::UnitDisc => x * x + y * y < 1.0,
        }
    }

    /// Boundary vertices in counter-clockwise order, for polygonal domains.
    pub fn polygon(self) -> Option<&'static [Point]> {
        const SQUARE: [Point; 4] = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        const LSHAPE: [Point; 6] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 0.0], [0.0, 0.0], [0.0, 1.0], [-1.0, 1.0]];
        match self {
            Domain::UnitSquare => Some(&SQUARE),
            Domain::LShape => Some(&LSHAPE),
            Domain::UnitDisc => None,
        }
    }

    /// Euclidean distance from `p` to ∂Ω.
    pub fn boundary_distance(self, p: Point) -> f64 {
        match self.polygon() {
            Some(poly) => (0..poly.len())
                .map(|i| segment_distance(p, poly[i], poly[(i + 1) % poly.len()]))
                .fold(f64::INFINITY, f64::min),
            None => ((p[0] * p[0] + p[1] * p[1]).sqrt() - 1.0).abs(),
        }
    }

    /// Point at arc-length fraction `t ∈ [0, 1)` along ∂Ω.
    pub fn boundary_point(self, t: f64) -> Point {
        match self.polygon() {
            Some(poly) => {
                let mut s = t * self.perimeter();
                for i in 0..poly.len() {
                    let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
                    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
                    if s <= len || i + 1 == poly.len() {
                        let r = (s / len).min(1.0);
                        return [a[0] + r * (b[0] - a[0]), a[1] + r * (b[1] - a[1])];
                    }
                    s -= len;
                }
                unreachable!()
            }
            None => {
                let th = 2.0 * PI * t;
                [th.cos(), th.sin()]
            }
        }
    }
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let t = (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
    let (qx, qy) = (a[0] + t * dx, a[1] + t * dy);
    ((p[0] - qx).powi(2) + (p[1] - qy).powi(2)).sqrt()
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::UnitSquare => "UnitSquare",
            Domain::LShape => "LShape",
            Domain::UnitDisc => "UnitDisc",
        })
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "unitsquare" | "square" => Ok(Domain::UnitSquare),
            "lshape" => Ok(Domain::LShape),
            "unitdisc" | "disc" => Ok(Domain::UnitDisc),
            _ => Err(Error::Config(format!("unknown domain `{s}`"))),
        }
    }
}

/// Interior and boundary quadrature nodes with the domain measures.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub interior: Vec<Point>,
    pub boundary: Vec<Point>,
    pub area: f64,
    pub perimeter: f64,
    pub seed: u64,
    /// Candidates drawn to produce `interior` (differs from its length only
    /// for rejection sampling).
    pub interior_draws: usize,
}

/// Draws `n_in` interior and `n_bnd` boundary points, uniform with respect
/// to area and arc length. Interior and boundary use separate streams.
pub fn sample(domain: Domain, n_in: usize, n_bnd: usize, seed: u64) -> Result<SampleSet> {
    if n_in == 0 || n_bnd == 0 {
        return Err(Error::Config("sample counts must be at least 1".into()));
    }
    let mut rin = rng::stream(seed, rng::INTERIOR_STREAM);
    let mut interior = Vec::with_capacity(n_in);
    let mut draws = 0;
    while interior.len() < n_in {
        draws += 1;
        let p = match domain {
            Domain::UnitSquare => [rin.random::<f64>(), rin.random::<f64>()],
            Domain::LShape => {
                let p = [2.0 * rin.random::<f64>() - 1.0, 2.0 * rin.random::<f64>() - 1.0];
                if !domain.contains(p) {
                    continue;
                }
                p
            }
            Domain::UnitDisc => {
                let r = rin.random::<f64>().sqrt();
                let th = 2.0 * PI * rin.random::<f64>();
                [r * th.cos(), r * th.sin()]
            }
        };
        // Half-open [0,1) draws can land exactly on ∂Ω; redraw those.
        if domain.contains(p) {
            interior.push(p);
        }
    }
    let mut rb = rng::stream(seed, rng::BOUNDARY_STREAM);
    let boundary = (0..n_bnd).map(|_| domain.boundary_point(rb.random::<f64>())).collect();
    Ok(SampleSet {
        interior,
        boundary,
        area: domain.area(),
        perimeter: domain.perimeter(),
        seed,
        interior_draws: draws,
    })
}

/// `(measure / N) Σ f(x_i)`, reduced in index order.
pub fn mc_integrate(points: &[Point], measure: f64, integrand: impl Fn(Point) -> f64) -> f64 {
    assert!(!points.is_empty(), "Monte-Carlo quadrature needs at least one node");
    let sum: f64 = points.iter().map(|&p| integrand(p)).sum();
    measure * sum / points.len() as f64
}

impl SampleSet {
    /// CSV dump with header `x,y,tag`, tag ∈ {in, bnd}.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,y,tag")?;
        for p in &self.interior {
            writeln!(w, "{:?},{:?},in", p[0], p[1])?;
        }
        for p in &self.boundary {
            writeln!(w, "{:?},{:?},bnd", p[0], p[1])?;
        }
        Ok(())
    }
}
