//! Nodal finite-element functions.

use std::io::Write;
use std::sync::Arc;

use super::element::{element_values, inverse_map, ElementValues};
use super::mesh::{CellKind, Mesh};
use super::quadrature::{cell_rule, edge_rule, RuleOrder};
use crate::error::{Error, Result};
use crate::field::{Field, Point};

/// Continuous piecewise (bi)linear function, possibly vector-valued.
/// Coefficients are interleaved: `coeffs[components * node + k]`.
#[derive(Clone, Debug)]
pub struct FeFunction {
    mesh: Arc<Mesh>,
    components: usize,
    coeffs: Vec<f64>,
}

impl FeFunction {
    pub fn new(mesh: Arc<Mesh>, components: usize, coeffs: Vec<f64>) -> Result<Self> {
        let expected = mesh.nodes.len() * components;
        if coeffs.len() != expected {
            return Err(Error::DimensionMismatch { expected, actual: coeffs.len() });
        }
        Ok(FeFunction { mesh, components, coeffs })
    }

    pub fn zeros(mesh: Arc<Mesh>, components: usize) -> Self {
        let n = mesh.nodes.len() * components;
        FeFunction { mesh, components, coeffs: vec![0.0; n] }
    }

    /// Nodal interpolant.
    pub fn interpolate(mesh: Arc<Mesh>, field: &dyn Field) -> Self {
        let c = field.components();
        let mut coeffs = vec![0.0; mesh.nodes.len() * c];
        for (i, p) in mesh.nodes.iter().enumerate() {
            field.eval_into(*p, &mut coeffs[c * i..c * (i + 1)]);
        }
        FeFunction { mesh, components: c, coeffs }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn kind(&self) -> CellKind {
        self.mesh.kind
    }

    /// Value and gradient inside cell `c` from precomputed shape values.
    pub fn jet_from_values(&self, c: usize, ev: &ElementValues, value: &mut [f64], grad: &mut [f64]) {
        let nc = self.components;
        value[..nc].fill(0.0);
        grad[..2 * nc].fill(0.0);
        for (a, &node) in self.mesh.cell(c).iter().enumerate() {
            for k in 0..nc {
                let u = self.coeffs[nc * node + k];
                value[k] += u * ev.phi[a];
                grad[2 * k] += u * ev.dphi[a][0];
                grad[2 * k + 1] += u * ev.dphi[a][1];
            }
        }
    }

    /// Value and gradient at reference point `xi` of cell `c`.
    pub fn jet_in_cell(&self, c: usize, xi: [f64; 2], value: &mut [f64], grad: &mut [f64]) {
        let ev = element_values(self.mesh.kind, &self.mesh.cell_coords(c), xi);
        self.jet_from_values(c, &ev, value, grad);
    }

    fn cell_of(&self, p: Point) -> (usize, [f64; 2]) {
        if let Some(hit) = self.mesh.locate(p) {
            return hit;
        }
        // Outside the mesh: extend the nearest boundary cell's polynomial.
        let c = self.mesh.boundary_edges[self.mesh.nearest_boundary_edge(p)].cell;
        let xi = inverse_map(&self.mesh, c, p).map_or([0.5, 0.5], |(xi, _)| xi);
        (c, xi)
    }

    /// Scalar component `k` as its own function.
    pub fn component(&self, k: usize) -> FeFunction {
        let coeffs = self.coeffs.iter().skip(k).step_by(self.components).copied().collect();
        FeFunction { mesh: self.mesh.clone(), components: 1, coeffs }
    }

    /// Integral of each component by cell quadrature.
    pub fn integral(&self) -> Vec<f64> {
        let nc = self.components;
        let mut out = vec![0.0; nc];
        let rule = cell_rule(self.mesh.kind, RuleOrder::Standard, 1);
        let (mut v, mut g) = (vec![0.0; nc], vec![0.0; 2 * nc]);
        for c in 0..self.mesh.cell_count() {
            let coords = self.mesh.cell_coords(c);
            for q in &rule {
                let ev = element_values(self.mesh.kind, &coords, q.xi);
                self.jet_from_values(c, &ev, &mut v, &mut g);
                for k in 0..nc {
                    out[k] += q.weight * ev.det * v[k];
                }
            }
        }
        out
    }

    /// CSV with header `node,value[,value2]`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = String::from("node,value");
        for k in 2..=self.components {
            header.push_str(&format!(",value{k}"));
        }
        writeln!(w, "{header}")?;
        for i in 0..self.mesh.nodes.len() {
            let vals: Vec<String> =
                self.coeffs[self.components * i..self.components * (i + 1)].iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{i},{}", vals.join(","))?;
        }
        Ok(())
    }
}

impl Field for FeFunction {
    fn components(&self) -> usize {
        self.components
    }

    fn eval_into(&self, x: Point, value: &mut [f64]) {
        let mut grad = vec![0.0; 2 * self.components];
        self.jet_into(x, value, &mut grad);
    }

    fn jet_into(&self, x: Point, value: &mut [f64], grad: &mut [f64]) {
        let (c, xi) = self.cell_of(x);
        self.jet_in_cell(c, xi, value, grad);
    }
}

/// `∂_n u` (per component) at the two Gauss points of the boundary edge
/// with endpoints `edge`, using the gradient of the adjacent cell.
pub fn normal_derivative(u: &FeFunction, edge: [usize; 2]) -> Result<Vec<[f64; 2]>> {
    let mesh = u.mesh();
    let e = mesh
        .boundary_edges
        .iter()
        .find(|e| e.nodes == edge || e.nodes == [edge[1], edge[0]])
        .ok_or(Error::NotBoundaryEdge(edge[0]))?;
    let nc = u.components;
    let mut out = vec![[0.0; 2]; nc];
    let (mut v, mut g) = (vec![0.0; nc], vec![0.0; 2 * nc]);
    let (a, b) = (mesh.nodes[e.nodes[0]], mesh.nodes[e.nodes[1]]);
    for (qi, (t, _)) in edge_rule().iter().enumerate() {
        let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
        let xi = inverse_map(mesh, e.cell, p).map(|(xi, _)| xi).ok_or(Error::NotBoundaryEdge(edge[0]))?;
        u.jet_in_cell(e.cell, xi, &mut v, &mut g);
        for k in 0..nc {
            out[k][qi] = g[2 * k] * e.normal[0] + g[2 * k + 1] * e.normal[1];
        }
    }
    Ok(out)
}

/// `(‖u − exact‖_{L²}, |u − exact|_{H¹})` summed over components, with
/// the higher-order cell rule.
pub fn error_norms(u: &FeFunction, exact: &dyn Field) -> Result<(f64, f64)> {
    let nc = u.components;
    if exact.components() != nc {
        return Err(Error::DimensionMismatch { expected: nc, actual: exact.components() });
    }
    let mesh = u.mesh();
    let rule = cell_rule(mesh.kind, RuleOrder::High, 1);
    let (mut v, mut g, mut ev_, mut eg) = (vec![0.0; nc], vec![0.0; 2 * nc], vec![0.0; nc], vec![0.0; 2 * nc]);
    let (mut l2, mut h1) = (0.0, 0.0);
    for c in 0..mesh.cell_count() {
        let coords = mesh.cell_coords(c);
        for q in &rule {
            let ev = element_values(mesh.kind, &coords, q.xi);
            u.jet_from_values(c, &ev, &mut v, &mut g);
            exact.jet_into(ev.x, &mut ev_, &mut eg);
            let w = q.weight * ev.det;
            l2 += w * v.iter().zip(&ev_).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            h1 += w * g.iter().zip(&eg).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
    }
    Ok((l2.sqrt(), h1.sqrt()))
}
