//! Dual-weighted-residual estimators of the goal-functional error of a
//! network solution, and effectivity indices.

use std::fmt;

use crate::error::{Error, Result};
use crate::fem::element::{element_values, inverse_map};
use crate::fem::quadrature::{cell_rule, edge_rule, RuleOrder};
use crate::fem::{FeFunction, Mesh};
use crate::field::{Field, Point};
use crate::sampling::SampleSet;

/// Errors below this magnitude make effectivities undefined.
pub const UNDEFINED_ERROR: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Effectivity {
    /// `η / (J_ref − J(u_N))`
    pub eq: Option<f64>,
    /// `(J_ref − J(u_N)) / η`, the reciprocal.
    pub table: Option<f64>,
}

pub fn effectivity(eta: f64, true_error: f64) -> Effectivity {
    if true_error.abs() < UNDEFINED_ERROR || !true_error.is_finite() || !eta.is_finite() {
        return Effectivity { eq: None, table: None };
    }
    Effectivity { eq: Some(eta / true_error), table: (eta != 0.0).then(|| true_error / eta) }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorReport {
    pub epoch: usize,
    pub loss: f64,
    pub eta: f64,
    pub j_net: f64,
    pub j_ref: Option<f64>,
    pub true_error: Option<f64>,
    pub eff_eq: Option<f64>,
    pub eff_table: Option<f64>,
    pub adjoint_level: usize,
}

/// Marker written for undefined CSV fields.
pub const UNDEFINED: &str = "undef";

impl EstimatorReport {
    pub fn new(epoch: usize, loss: f64, eta: f64, j_net: f64, j_ref: Option<f64>, adjoint_level: usize) -> Self {
        let true_error = j_ref.map(|r| r - j_net);
        let eff = true_error.map(|e| effectivity(eta, e));
        EstimatorReport {
            epoch,
            loss,
            eta,
            j_net,
            j_ref,
            true_error,
            eff_eq: eff.and_then(|e| e.eq),
            eff_table: eff.and_then(|e| e.table),
            adjoint_level,
        }
    }

    pub const CSV_HEADER: &'static str = "epoch,loss,J_net,J_ref,true_error,eta,eff_eq,eff_table";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| UNDEFINED.to_string(), |v| format!("{v:?}"));
        format!(
            "{},{:?},{:?},{},{},{:?},{},{}",
            self.epoch,
            self.loss,
            self.j_net,
            opt(self.j_ref),
            opt(self.true_error),
            self.eta,
            opt(self.eff_eq),
            opt(self.eff_table)
        )
    }

    /// Inverse of [`csv_row`](Self::csv_row); `adjoint_level` is not stored.
    pub fn parse_csv_row(line: &str) -> Result<Self> {
        let bad = |m: &str| Error::Parse { line: 0, msg: format!("{m}: `{line}`") };
        let cols: Vec<&str> = line.trim().split(',').collect();
        if cols.len() < 8 {
            return Err(bad("expected 8 columns"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
        let opt = |s: &str| if s == UNDEFINED { Ok(None) } else { num(s).map(Some) };
        Ok(EstimatorReport {
            epoch: cols[0].parse().map_err(|_| bad("bad epoch"))?,
            loss: num(cols[1])?,
            j_net: num(cols[2])?,
            j_ref: opt(cols[3])?,
            true_error: opt(cols[4])?,
            eta: num(cols[5])?,
            eff_eq: opt(cols[6])?,
            eff_table: opt(cols[7])?,
            adjoint_level: 0,
        })
    }
}

impl fmt::Display for EstimatorReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.csv_row())
    }
}

fn check_components(field: &dyn Field, expected: usize) -> Result<()> {
    if field.components() != expected {
        return Err(Error::DimensionMismatch { expected, actual: field.components() });
    }
    Ok(())
}

/// Visits every cell quadrature point of `mesh`: `(cell, values, weight)`.
fn for_each_cell_point(
    mesh: &Mesh,
    subdivisions: usize,
    mut visit: impl FnMut(usize, &crate::fem::element::ElementValues, f64),
) {
    let rule = cell_rule(mesh.kind, RuleOrder::Standard, subdivisions);
    for c in 0..mesh.cell_count() {
        let coords = mesh.cell_coords(c);
        for q in &rule {
            let ev = element_values(mesh.kind, &coords, q.xi);
            visit(c, &ev, q.weight * ev.det);
        }
    }
}

/// Visits every boundary quadrature point: `(cell, point, normal, weight)`.
fn for_each_edge_point(
    mesh: &Mesh,
    subdivisions: usize,
    mut visit: impl FnMut(usize, [f64; 2], Point, Point, f64),
) -> Result<()> {
    let m = subdivisions as f64;
    for e in &mesh.boundary_edges {
        let (a, b) = (mesh.nodes[e.nodes[0]], mesh.nodes[e.nodes[1]]);
        for piece in 0..subdivisions {
            for (t, w) in edge_rule() {
                let t = (piece as f64 + t) / m;
                let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
                let (xi, _) = inverse_map(mesh, e.cell, p).ok_or(Error::NotBoundaryEdge(e.nodes[0]))?;
                visit(e.cell, xi, p, e.normal, w * e.length / m);
            }
        }
    }
    Ok(())
}

/// `η = (f, z_H) − (∇u_N, ∇z_H) + ⟨∂_n z_H, u_N⟩_∂Ω` with the quadrature of
/// `z_H`'s mesh. `u` is typically the network but may be any scalar field.
pub fn estimate_laplace(u: &dyn Field, z: &FeFunction, f: &dyn Field) -> Result<f64> {
    estimate_laplace_refined(u, z, f, 1)
}

/// [`estimate_laplace`] with the cell rule repeated over
/// `subdivisions²` sub-cells and the edge rule over `subdivisions` pieces.
pub fn estimate_laplace_refined(u: &dyn Field, z: &FeFunction, f: &dyn Field, subdivisions: usize) -> Result<f64> {
    check_components(u, 1)?;
    check_components(z, 1)?;
    check_components(f, 1)?;
    let mesh = z.mesh();
    let (mut uv, mut ug, mut zv, mut zg, mut fv) = ([0.0], [0.0; 2], [0.0], [0.0; 2], [0.0]);
    let mut domain = 0.0;
    for_each_cell_point(mesh, subdivisions, |c, ev, w| {
        u.jet_into(ev.x, &mut uv, &mut ug);
        z.jet_from_values(c, ev, &mut zv, &mut zg);
        f.eval_into(ev.x, &mut fv);
        domain += w * (fv[0] * zv[0] - (ug[0] * zg[0] + ug[1] * zg[1]));
    });
    let mut boundary = 0.0;
    for_each_edge_point(mesh, subdivisions, |c, xi, p, n, w| {
        z.jet_in_cell(c, xi, &mut zv, &mut zg);
        u.eval_into(p, &mut uv);
        boundary += w * (zg[0] * n[0] + zg[1] * n[1]) * uv[0];
    })?;
    Ok(domain + boundary)
}

/// `η = (f, z_H) − (∇v_N, ∇z_H) − (div v_N, q_H) + ⟨∂_n z_H + q_H n, v_N⟩_∂Ω`.
pub fn estimate_stokes(v: &dyn Field, z: &FeFunction, q: &FeFunction, f: &dyn Field) -> Result<f64> {
    check_components(v, 2)?;
    check_components(z, 2)?;
    check_components(q, 1)?;
    check_components(f, 2)?;
    let mesh = z.mesh();
    if !std::sync::Arc::ptr_eq(mesh, q.mesh()) && mesh.nodes.len() != q.mesh().nodes.len() {
        return Err(Error::DimensionMismatch { expected: mesh.nodes.len(), actual: q.mesh().nodes.len() });
    }
    let (mut vv, mut vg, mut zv, mut zg, mut qv, mut qg, mut fv) =
        ([0.0; 2], [0.0; 4], [0.0; 2], [0.0; 4], [0.0], [0.0; 2], [0.0; 2]);
    let mut domain = 0.0;
    for_each_cell_point(mesh, 1, |c, ev, w| {
        v.jet_into(ev.x, &mut vv, &mut vg);
        z.jet_from_values(c, ev, &mut zv, &mut zg);
        q.jet_from_values(c, ev, &mut qv, &mut qg);
        f.eval_into(ev.x, &mut fv);
        let fz = fv[0] * zv[0] + fv[1] * zv[1];
        let grads: f64 = vg.iter().zip(&zg).map(|(a, b)| a * b).sum();
        let div = vg[0] + vg[3];
        domain += w * (fz - grads - div * qv[0]);
    });
    let mut boundary = 0.0;
    for_each_edge_point(mesh, 1, |c, xi, p, n, w| {
        z.jet_in_cell(c, xi, &mut zv, &mut zg);
        q.jet_in_cell(c, xi, &mut qv, &mut qg);
        v.eval_into(p, &mut vv);
        for k in 0..2 {
            let traction = zg[2 * k] * n[0] + zg[2 * k + 1] * n[1] + qv[0] * n[k];
            boundary += w * traction * vv[k];
        }
    })?;
    Ok(domain + boundary)
}

/// Adjoint data for the sampled estimator: values/gradients anywhere in Ω
/// and the normal derivative at boundary points.
pub trait SampledAdjoint {
    fn jet(&self, x: Point, value: &mut f64, grad: &mut [f64; 2]);
    fn normal_derivative(&self, x: Point) -> f64;
}

impl SampledAdjoint for FeFunction {
    fn jet(&self, x: Point, value: &mut f64, grad: &mut [f64; 2]) {
        let mut v = [0.0];
        self.jet_into(x, &mut v, grad);
        *value = v[0];
    }

    /// Gradient of the cell owning the nearest boundary edge, dotted with
    /// that edge's normal.
    fn normal_derivative(&self, x: Point) -> f64 {
        let mesh = self.mesh();
        let e = &mesh.boundary_edges[mesh.nearest_boundary_edge(x)];
        let xi = inverse_map(mesh, e.cell, x).map_or([0.5, 0.5], |(xi, _)| xi);
        let (mut v, mut g) = ([0.0], [0.0; 2]);
        self.jet_in_cell(e.cell, xi, &mut v, &mut g);
        g[0] * e.normal[0] + g[1] * e.normal[1]
    }
}

/// Monte-Carlo form of [`estimate_laplace`] over the nodes of `s`:
/// `(|Ω|/N) Σ (f z − ∇u·∇z) + (|∂Ω|/N_b) Σ ∂_n z · u`.
pub fn estimate_mc(u: &dyn Field, z: &dyn SampledAdjoint, s: &SampleSet, f: &dyn Field) -> Result<f64> {
    check_components(u, 1)?;
    check_components(f, 1)?;
    let (mut uv, mut ug, mut fv) = ([0.0], [0.0; 2], [0.0]);
    let (mut zv, mut zg) = (0.0, [0.0; 2]);
    let mut interior = 0.0;
    for &x in &s.interior {
        u.jet_into(x, &mut uv, &mut ug);
        z.jet(x, &mut zv, &mut zg);
        f.eval_into(x, &mut fv);
        interior += fv[0] * zv - (ug[0] * zg[0] + ug[1] * zg[1]);
    }
    let mut boundary = 0.0;
    for &x in &s.boundary {
        u.eval_into(x, &mut uv);
        boundary += z.normal_derivative(x) * uv[0];
    }
    Ok(s.area * interior / s.interior.len() as f64 + s.perimeter * boundary / s.boundary.len() as f64)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::fem::{build_mesh, solve_adjoint_laplace, solve_laplace_dirichlet, GoalFunctional};
    use crate::field::{ConstantField, FnField};
    use crate::sampling::{sample, Domain};

    #[test]
    fn effectivity_conventions() {
        let e = effectivity(0.3, 0.3);
        assert_eq!((e.eq, e.table), (Some(1.0), Some(1.0)));
        let e = effectivity(-0.004719, -0.004695);
        assert_eq!((e.table.unwrap() * 100.0).round() / 100.0, 0.99);
        let e = effectivity(-0.0425343, -0.0442546);
        assert_eq!((e.table.unwrap() * 100.0).round() / 100.0, 1.04);
        assert!((e.eq.unwrap() * e.table.unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(effectivity(1.0, 1e-15), Effectivity { eq: None, table: None });
        assert_eq!(effectivity(0.0, 1.0).table, None);
    }

    #[test]
    fn report_fields_and_csv() {
        let r = EstimatorReport::new(100, 0.5, -0.01, 0.11, Some(0.1), 2);
        assert!((r.true_error.unwrap() + 0.01).abs() < 1e-15);
        assert!((r.eff_eq.unwrap() - 1.0).abs() < 1e-12);
        let back = EstimatorReport::parse_csv_row(&r.csv_row()).unwrap();
        assert_eq!(back.eta, r.eta);
        assert_eq!(back.eff_table, r.eff_table);
        let r = EstimatorReport::new(0, 1.0, 0.0, 0.0, None, 2);
        assert!(r.csv_row().ends_with("undef,undef,0.0,undef,undef"));
        assert_eq!(EstimatorReport::CSV_HEADER.split(',').count(), r.csv_row().split(',').count());
    }

    #[test]
    fn zero_network_gives_load_term() {
        let m = Arc::new(build_mesh(Domain::LShape, 2));
        let z = solve_adjoint_laplace(&m, &GoalFunctional::point([0.5, -0.5])).unwrap();
        let one = ConstantField(vec![1.0]);
        let eta = estimate_laplace(&ConstantField(vec![0.0]), &z, &one).unwrap();
        assert!((eta - z.integral()[0]).abs() < 1e-15);
    }

    #[test]
    fn galerkin_orthogonality() {
        for level in 1..4 {
            let m = Arc::new(build_mesh(Domain::LShape, level));
            let one = ConstantField(vec![1.0]);
            let u = solve_laplace_dirichlet(&m, &one).unwrap();
            let z = solve_adjoint_laplace(&m, &GoalFunctional::point([0.5, -0.5])).unwrap();
            let eta = estimate_laplace(&u, &z, &one).unwrap();
            assert!(eta.abs() < 1e-10 * z.integral()[0].abs(), "{eta}");
        }
    }

    #[test]
    fn estimator_is_linear_in_the_field() {
        let m = Arc::new(build_mesh(Domain::LShape, 2));
        let z = solve_adjoint_laplace(&m, &GoalFunctional::point([0.5, -0.5])).unwrap();
        let zero = ConstantField(vec![0.0]);
        let g = |a: f64| FnField::new(1, move |p: Point, o: &mut [f64]| o[0] = a * (p[0] * p[0] + 0.3 * p[1]).sin());
        let base = estimate_laplace(&g(1.0), &z, &zero).unwrap();
        let scaled = estimate_laplace(&g(2.5), &z, &zero).unwrap();
        assert!((scaled - 2.5 * base).abs() < 1e-8 * base.abs().max(1.0));
    }

    #[test]
    fn constant_configuration_sampled_equals_quadrature() {
        let m = Arc::new(build_mesh(Domain::LShape, 2));
        let z = FeFunction::interpolate(m.clone(), &ConstantField(vec![1.0]));
        let one = ConstantField(vec![1.0]);
        let zero = ConstantField(vec![0.0]);
        let s = sample(Domain::LShape, 100, 10, 0).unwrap();
        let mc = estimate_mc(&zero, &z, &s, &one).unwrap();
        let quad = estimate_laplace(&zero, &z, &one).unwrap();
        assert!((mc - quad).abs() < 1e-13 && (mc - 3.0).abs() < 1e-13);
    }

    #[test]
    fn sampled_load_term_is_within_three_sigma() {
        let m = Arc::new(build_mesh(Domain::LShape, 2));
        let z = solve_adjoint_laplace(&m, &GoalFunctional::point([0.5, -0.5])).unwrap();
        let one = ConstantField(vec![1.0]);
        let zero = ConstantField(vec![0.0]);
        let n = 20_000;
        let s = sample(Domain::LShape, n, 10, 5).unwrap();
        let mc = estimate_mc(&zero, &z, &s, &one).unwrap();
        let quad = estimate_laplace(&zero, &z, &one).unwrap();
        let vals: Vec<f64> = s.interior.iter().map(|&p| 3.0 * crate::field::scalar_at(&z, p)).collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((mc - quad).abs() < 3.0 * sd / (n as f64).sqrt(), "{mc} {quad}");
    }

    #[test]
    fn component_mismatch_is_error() {
        let m = Arc::new(build_mesh(Domain::UnitDisc, 0));
        let z = FeFunction::zeros(m.clone(), 2);
        let q = FeFunction::zeros(m, 1);
        let f = ConstantField(vec![0.0, 0.0]);
        assert!(estimate_stokes(&ConstantField(vec![0.0]), &z, &q, &f).is_err());
        assert_eq!(estimate_stokes(&ConstantField(vec![0.0, 0.0]), &z, &q, &f).unwrap(), 0.0);
    }
}
