//! Goal functionals: evaluation on fields and discrete adjoint right-hand sides.

use std::fmt;
use std::str::FromStr;

use super::element::element_values;
use super::mesh::{locate_or_err, Mesh};
use super::quadrature::{cell_rule, edge_rule, gauss_legendre, RuleOrder};
use crate::error::{Error, Result};
use crate::field::{Field, Point};

/// The quantity of interest `J`.
///
/// Scalar fields are measured directly. For vector fields `LineSegmentY`
/// reads the y-component and all other kinds read the first component.
#[derive(Clone, Debug, PartialEq)]
pub enum GoalFunctional {
    /// `u(x)`, or its mean over the disc of the given radius around `x`.
    PointValue { x: Point, radius: Option<f64> },
    /// `(1/|Ω|) ∫_Ω u`
    DomainAverage,
    /// `∫_∂Ω ∂_n u`
    BoundaryFlux,
    /// `∫_a^b u(x, 0) dx`
    LineSegmentY { a: f64, b: f64 },
}

/// Gauss points per sub-segment of a line functional.
const LINE_POINTS: usize = 5;
/// Composite refinement used to integrate against a mollified point.
const MOLLIFIER_SUBDIVISIONS: usize = 8;

impl GoalFunctional {
    pub fn point(x: Point) -> Self {
        GoalFunctional::PointValue { x, radius: None }
    }

    fn target(&self, components: usize) -> usize {
        match self {
            GoalFunctional::LineSegmentY { .. } => components - 1,
            _ => 0,
        }
    }
}

impl fmt::Display for GoalFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GoalFunctional::PointValue { x, radius: None } => write!(f, "point({},{})", x[0], x[1]),
            GoalFunctional::PointValue { x, radius: Some(r) } => write!(f, "point({},{};{})", x[0], x[1], r),
            GoalFunctional::DomainAverage => f.write_str("average"),
            GoalFunctional::BoundaryFlux => f.write_str("flux"),
            GoalFunctional::LineSegmentY { a, b } => write!(f, "line({a},{b})"),
        }
    }
}

impl FromStr for GoalFunctional {
    type Err = Error;

    /// Accepts the `Display` forms.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse functional `{s}`"));
        let s = s.trim();
        let args = |prefix: &str| -> Option<&str> { s.strip_prefix(prefix)?.strip_suffix(')') };
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        match s {
            "average" => return Ok(GoalFunctional::DomainAverage),
            "flux" => return Ok(GoalFunctional::BoundaryFlux),
            _ => {}
        }
        if let Some(inner) = args("point(") {
            let (xy, r) = match inner.split_once(';') {
                Some((xy, r)) => (xy, Some(num(r)?)),
                None => (inner, None),
            };
            let (x, y) = xy.split_once(',').ok_or_else(bad)?;
            return Ok(GoalFunctional::PointValue { x: [num(x)?, num(y)?], radius: r });
        }
        if let Some(inner) = args("line(") {
            let (a, b) = inner.split_once(',').ok_or_else(bad)?;
            return Ok(GoalFunctional::LineSegmentY { a: num(a)?, b: num(b)? });
        }
        Err(bad())
    }
}

/// Sub-segments of `[a, b]` on `y = 0` split at every cell-edge crossing.
fn line_segments(mesh: &Mesh, a: f64, b: f64) -> Result<Vec<(f64, f64)>> {
    for x in [a, b, 0.5 * (a + b)] {
        locate_or_err(mesh, [x, 0.0])?;
    }
    let mut cuts = vec![a, b];
    let n = mesh.kind.nodes();
    for cell in mesh.cells() {
        for i in 0..n {
            let (p, q) = (mesh.nodes[cell[i]], mesh.nodes[cell[(i + 1) % n]]);
            if p[1] == 0.0 {
                cuts.push(p[0]);
            } else if p[1] * q[1] < 0.0 {
                cuts.push(p[0] + (q[0] - p[0]) * p[1] / (p[1] - q[1]));
            }
        }
    }
    cuts.retain(|&x| x >= a && x <= b);
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup_by(|x, y| (*x - *y).abs() < 1e-14);
    Ok(cuts.windows(2).map(|w| (w[0], w[1])).collect())
}

/// `J(u)` with quadrature on `mesh`.
pub fn eval_functional(j: &GoalFunctional, u: &dyn Field, mesh: &Mesh) -> Result<f64> {
    let nc = u.components();
    let k = j.target(nc);
    let (mut v, mut g) = (vec![0.0; nc], vec![0.0; 2 * nc]);
    match *j {
        GoalFunctional::PointValue { x, radius: None } => {
            locate_or_err(mesh, x)?;
            u.eval_into(x, &mut v);
            Ok(v[k])
        }
        GoalFunctional::PointValue { x, radius: Some(r) } => {
            let mut num = 0.0;
            let den = mollified(mesh, x, r, |_, ev, w| {
                u.eval_into(ev.x, &mut v);
                num += w * v[k];
            })?;
            Ok(num / den)
        }
        GoalFunctional::DomainAverage => {
            let rule = cell_rule(mesh.kind, RuleOrder::Standard, 1);
            let (mut num, mut den) = (0.0, 0.0);
            for c in 0..mesh.cell_count() {
                let coords = mesh.cell_coords(c);
                for q in &rule {
                    let ev = element_values(mesh.kind, &coords, q.xi);
                    u.eval_into(ev.x, &mut v);
                    num += q.weight * ev.det * v[k];
                    den += q.weight * ev.det;
                }
            }
            Ok(num / den)
        }
        GoalFunctional::BoundaryFlux => {
            let mut s = 0.0;
            for e in &mesh.boundary_edges {
                let (a, b) = (mesh.nodes[e.nodes[0]], mesh.nodes[e.nodes[1]]);
                for (t, w) in edge_rule() {
                    u.jet_into([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])], &mut v, &mut g);
                    s += w * e.length * (g[2 * k] * e.normal[0] + g[2 * k + 1] * e.normal[1]);
                }
            }
            Ok(s)
        }
        GoalFunctional::LineSegmentY { a, b } => {
            let rule = gauss_legendre(LINE_POINTS);
            let mut s = 0.0;
            for (x0, x1) in line_segments(mesh, a, b)? {
                for &(t, w) in &rule {
                    u.eval_into([x0 + t * (x1 - x0), 0.0], &mut v);
                    s += w * (x1 - x0) * v[k];
                }
            }
            Ok(s)
        }
    }
}

/// Visits `(cell, shape values, weight)` of the composite quadrature
/// restricted to the disc `|y − x| < r`; returns the disc's measured area.
fn mollified(
    mesh: &Mesh,
    x: Point,
    r: f64,
    mut visit: impl FnMut(usize, &super::element::ElementValues, f64),
) -> Result<f64> {
    if r <= 0.0 {
        return Err(Error::Config(format!("mollifier radius must be positive, got {r}")));
    }
    locate_or_err(mesh, x)?;
    let rule = cell_rule(mesh.kind, RuleOrder::Standard, MOLLIFIER_SUBDIVISIONS);
    let mut area = 0.0;
    for c in 0..mesh.cell_count() {
        let coords = mesh.cell_coords(c);
        let near = mesh.cell(c).iter().any(|&n| {
            let p = mesh.nodes[n];
            (p[0] - x[0]).hypot(p[1] - x[1]) < r + mesh.cell_diameter(c)
        });
        if !near {
            continue;
        }
        for q in &rule {
            let ev = element_values(mesh.kind, &coords, q.xi);
            if (ev.x[0] - x[0]).hypot(ev.x[1] - x[1]) < r {
                let w = q.weight * ev.det;
                area += w;
                visit(c, &ev, w);
            }
        }
    }
    if area == 0.0 {
        return Err(Error::Config(format!("mollifier radius {r} resolves no quadrature point")));
    }
    Ok(area)
}

/// Discrete functional `b_{i,k} = J(φ_i e_k)` for a `components`-valued
/// nodal space on `mesh`, interleaved like `FeFunction` coefficients.
pub fn rhs_vector(j: &GoalFunctional, mesh: &Mesh, components: usize) -> Result<Vec<f64>> {
    let k = j.target(components);
    let mut b = vec![0.0; mesh.nodes.len() * components];
    let mut add = |node: usize, v: f64| b[components * node + k] += v;
    match *j {
        GoalFunctional::PointValue { x, radius: None } => {
            let (c, xi) = locate_or_err(mesh, x)?;
            let ev = element_values(mesh.kind, &mesh.cell_coords(c), xi);
            for (a, &n) in mesh.cell(c).iter().enumerate() {
                add(n, ev.phi[a]);
            }
        }
        GoalFunctional::PointValue { x, radius: Some(r) } => {
            let mut acc: Vec<(usize, f64)> = Vec::new();
            let area = mollified(mesh, x, r, |c, ev, w| {
                for (a, &n) in mesh.cell(c).iter().enumerate() {
                    acc.push((n, w * ev.phi[a]));
                }
            })?;
            for (n, v) in acc {
                add(n, v / area);
            }
        }
        GoalFunctional::DomainAverage => {
            let rule = cell_rule(mesh.kind, RuleOrder::Standard, 1);
            let area = mesh.area();
            for c in 0..mesh.cell_count() {
                let coords = mesh.cell_coords(c);
                for q in &rule {
                    let ev = element_values(mesh.kind, &coords, q.xi);
                    for (a, &n) in mesh.cell(c).iter().enumerate() {
                        add(n, q.weight * ev.det * ev.phi[a] / area);
                    }
                }
            }
        }
        GoalFunctional::BoundaryFlux => {
            for e in &mesh.boundary_edges {
                let (pa, pb) = (mesh.nodes[e.nodes[0]], mesh.nodes[e.nodes[1]]);
                for (t, w) in edge_rule() {
                    let p = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
                    let (xi, _) =
                        super::element::inverse_map(mesh, e.cell, p).ok_or(Error::NotBoundaryEdge(e.nodes[0]))?;
                    let ev = element_values(mesh.kind, &mesh.cell_coords(e.cell), xi);
                    for (a, &n) in mesh.cell(e.cell).iter().enumerate() {
                        add(n, w * e.length * (ev.dphi[a][0] * e.normal[0] + ev.dphi[a][1] * e.normal[1]));
                    }
                }
            }
        }
        GoalFunctional::LineSegmentY { a, b: end } => {
            let rule = gauss_legendre(LINE_POINTS);
            for (x0, x1) in line_segments(mesh, a, end)? {
                let (c, _) = locate_or_err(mesh, [0.5 * (x0 + x1), 0.0])?;
                for &(t, w) in &rule {
                    let p = [x0 + t * (x1 - x0), 0.0];
                    let (xi, _) = super::element::inverse_map(mesh, c, p).ok_or(Error::PointOutsideMesh(p[0], p[1]))?;
                    let ev = element_values(mesh.kind, &mesh.cell_coords(c), xi);
                    for (i, &n) in mesh.cell(c).iter().enumerate() {
                        add(n, w * (x1 - x0) * ev.phi[i]);
                    }
                }
            }
        }
    }
    Ok(b)
}
