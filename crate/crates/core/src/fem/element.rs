//! Q1 and P1 shape functions and the reference-to-physical map.

use super::mesh::{CellKind, Mesh};
use crate::field::Point;

/// Shape functions of one cell evaluated at one reference point.
#[derive(Clone, Copy, Debug, Default)]
pub struct ElementValues {
    pub n: usize,
    pub phi: [f64; 4],
    /// Physical gradients.
    pub dphi: [[f64; 2]; 4],
    /// Jacobian determinant of the reference map.
    pub det: f64,
    /// Physical point.
    pub x: Point,
}

fn reference_shape(kind: CellKind, xi: [f64; 2]) -> ([f64; 4], [[f64; 2]; 4]) {
    let [s, t] = xi;
    match kind {
        CellKind::Quad => (
            [(1.0 - s) * (1.0 - t), s * (1.0 - t), s * t, (1.0 - s) * t],
            [[-(1.0 - t), -(1.0 - s)], [1.0 - t, -s], [t, s], [-t, 1.0 - s]],
        ),
        CellKind::Tri => ([1.0 - s - t, s, t, 0.0], [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]),
    }
}

/// Shape values, physical gradients, Jacobian determinant and physical
/// point at reference coordinates `xi`.
pub fn element_values(kind: CellKind, coords: &[Point; 4], xi: [f64; 2]) -> ElementValues {
    let n = kind.nodes();
    let (phi, dref) = reference_shape(kind, xi);
    let mut jac = [[0.0; 2]; 2];
    let mut x = [0.0; 2];
    for a in 0..n {
        for i in 0..2 {
            x[i] += coords[a][i] * phi[a];
            for j in 0..2 {
                jac[i][j] += coords[a][i] * dref[a][j];
            }
        }
    }
    let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
    // J^{-T}
    let inv_t = [[jac[1][1] / det, -jac[1][0] / det], [-jac[0][1] / det, jac[0][0] / det]];
    let mut dphi = [[0.0; 2]; 4];
    for a in 0..n {
        dphi[a] =
            [inv_t[0][0] * dref[a][0] + inv_t[0][1] * dref[a][1], inv_t[1][0] * dref[a][0] + inv_t[1][1] * dref[a][1]];
    }
    ElementValues { n, phi, dphi, det, x }
}

/// Reference coordinates of `p` in cell `c`, and how far (in reference
/// units) they lie outside the reference cell; `0` means inside.
pub fn inverse_map(mesh: &Mesh, c: usize, p: Point) -> Option<([f64; 2], f64)> {
    let coords = mesh.cell_coords(c);
    match mesh.kind {
        CellKind::Tri => {
            let (a, b, d) = (coords[0], coords[1], coords[2]);
            let (e1, e2) = ([b[0] - a[0], b[1] - a[1]], [d[0] - a[0], d[1] - a[1]]);
            let det = e1[0] * e2[1] - e1[1] * e2[0];
            if det == 0.0 {
                return None;
            }
            let r = [p[0] - a[0], p[1] - a[1]];
            let s = (r[0] * e2[1] - r[1] * e2[0]) / det;
            let t = (e1[0] * r[1] - e1[1] * r[0]) / det;
            let outside = (-s).max(-t).max(s + t - 1.0).max(0.0);
            Some(([s, t], outside))
        }
        CellKind::Quad => {
            let mut xi = [0.5, 0.5];
            for _ in 0..30 {
                let (phi, dref) = reference_shape(CellKind::Quad, xi);
                let mut x = [0.0; 2];
                let mut jac = [[0.0; 2]; 2];
                for a in 0..4 {
                    for i in 0..2 {
                        x[i] += coords[a][i] * phi[a];
                        for j in 0..2 {
                            jac[i][j] += coords[a][i] * dref[a][j];
                        }
                    }
                }
                let r = [p[0] - x[0], p[1] - x[1]];
                let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
                if det == 0.0 {
                    return None;
                }
                let d = [(jac[1][1] * r[0] - jac[0][1] * r[1]) / det, (jac[0][0] * r[1] - jac[1][0] * r[0]) / det];
                xi = [xi[0] + d[0], xi[1] + d[1]];
                if d[0].abs() + d[1].abs() < 1e-15 {
                    break;
                }
            }
            let outside = (-xi[0]).max(-xi[1]).max(xi[0] - 1.0).max(xi[1] - 1.0).max(0.0);
            Some((xi, outside))
        }
    }
}

/// Physical point of reference coordinates `xi` in cell `c`.
pub fn map_point(mesh: &Mesh, c: usize, xi: [f64; 2]) -> Point {
    element_values(mesh.kind, &mesh.cell_coords(c), xi).x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::mesh::build_mesh;
    use crate::sampling::Domain;

    #[test]
    fn partition_of_unity_and_gradients() {
        let quad = [[0.0, 0.0], [2.0, 0.2], [2.3, 1.5], [0.1, 1.0]];
        let tri = [[0.0, 0.0], [1.0, 0.3], [0.2, 0.9], [0.0, 0.0]];
        for (kind, coords) in [(CellKind::Quad, quad), (CellKind::Tri, tri)] {
            let v = element_values(kind, &coords, [0.3, 0.4]);
            let sum: f64 = v.phi[..v.n].iter().sum();
            assert!((sum - 1.0).abs() < 1e-15);
            for j in 0..2 {
                let g: f64 = v.dphi[..v.n].iter().map(|d| d[j]).sum();
                assert!(g.abs() < 1e-14);
            }
            // Interpolating x reproduces the coordinate gradient.
            let gx: [f64; 2] = [0, 1].map(|j| (0..v.n).map(|a| coords[a][0] * v.dphi[a][j]).sum());
            assert!((gx[0] - 1.0).abs() < 1e-13 && gx[1].abs() < 1e-13);
        }
    }

    #[test]
    fn inverse_map_roundtrip() {
        for d in [Domain::LShape, Domain::UnitDisc] {
            let m = build_mesh(d, 1);
            for c in 0..m.cell_count() {
                let x = map_point(&m, c, [0.2, 0.3]);
                let (xi, out) = inverse_map(&m, c, x).unwrap();
                assert_eq!(out, 0.0);
                assert!((xi[0] - 0.2).abs() < 1e-12 && (xi[1] - 0.3).abs() < 1e-12);
            }
        }
    }
}
