//! Equal-order stabilized Stokes: `(∇v,∇φ) − (p, div φ) = rhs(φ)`,
//! `(div v, ξ) + Σ_T h_T² (∇p, ∇ξ)_T = 0`.

use std::sync::Arc;

use super::element::element_values;
use super::functional::{rhs_vector, GoalFunctional};
use super::mesh::Mesh;
use super::quadrature::{cell_rule, RuleOrder};
use super::space::FeFunction;
use super::sparse::{minres, CsrMatrix, SolveStats};
use crate::error::{Error, Result};
use crate::field::Field;

pub const MINRES_TOL: f64 = 1e-10;

pub enum StokesRhs<'a> {
    /// Body force `f`, giving `rhs(φ) = (f, φ)`.
    Force(&'a dyn Field),
    /// Goal functional, giving `rhs(φ) = J(φ)`.
    Goal(&'a GoalFunctional),
}

#[derive(Clone, Debug)]
pub struct StokesSolution {
    pub velocity: FeFunction,
    /// Zero-mean pressure. For adjoint solves this is `q_H`.
    pub pressure: FeFunction,
    pub stats: SolveStats,
}

/// Symmetric saddle-point matrix `[[A, −Bᵀ], [−B, −S]]` with velocity dofs
/// `2·node + k` followed by pressure dofs `2·nodes + node`.
pub fn assemble_stokes(mesh: &Mesh) -> CsrMatrix {
    let nn = mesh.nodes.len();
    let n = mesh.kind.nodes();
    let cell_dofs: Vec<Vec<usize>> = mesh
        .cells()
        .map(|c| c.iter().flat_map(|&v| [2 * v, 2 * v + 1]).chain(c.iter().map(|&v| 2 * nn + v)).collect())
        .collect();
    let mut k = CsrMatrix::from_cells(3 * nn, cell_dofs.iter().map(|d| d.as_slice()));
    let rule = cell_rule(mesh.kind, RuleOrder::Standard, 1);
    for c in 0..mesh.cell_count() {
        let coords = mesh.cell_coords(c);
        let h2 = mesh.cell_diameter(c).powi(2);
        let nodes = mesh.cell(c);
        for q in &rule {
            let ev = element_values(mesh.kind, &coords, q.xi);
            let w = q.weight * ev.det;
            for a in 0..n {
                for b in 0..n {
                    let lap = w * (ev.dphi[a][0] * ev.dphi[b][0] + ev.dphi[a][1] * ev.dphi[b][1]);
                    let (va, vb) = (nodes[a], nodes[b]);
                    for comp in 0..2 {
                        k.add(2 * va + comp, 2 * vb + comp, lap);
                        // −(p_b, ∂_comp φ_a) in the velocity row, mirrored in the pressure row.
                        let coupling = -w * ev.phi[b] * ev.dphi[a][comp];
                        k.add(2 * va + comp, 2 * nn + vb, coupling);
                        k.add(2 * nn + vb, 2 * va + comp, coupling);
                    }
                    k.add(2 * nn + va, 2 * nn + vb, -h2 * lap);
                }
            }
        }
    }
    k
}

/// Nodal weights `∫ φ_i`.
fn lumped_mass(mesh: &Mesh) -> Vec<f64> {
    let mut m = vec![0.0; mesh.nodes.len()];
    let rule = cell_rule(mesh.kind, RuleOrder::Standard, 1);
    for c in 0..mesh.cell_count() {
        let coords = mesh.cell_coords(c);
        for q in &rule {
            let ev = element_values(mesh.kind, &coords, q.xi);
            for (a, &v) in mesh.cell(c).iter().enumerate() {
                m[v] += q.weight * ev.det * ev.phi[a];
            }
        }
    }
    m
}

fn velocity_load(mesh: &Mesh, f: &dyn Field) -> Result<Vec<f64>> {
    if f.components() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, actual: f.components() });
    }
    let mut b = vec![0.0; 2 * mesh.nodes.len()];
    let rule = cell_rule(mesh.kind, RuleOrder::Standard, 1);
    let mut fv = [0.0; 2];
    for c in 0..mesh.cell_count() {
        let coords = mesh.cell_coords(c);
        for q in &rule {
            let ev = element_values(mesh.kind, &coords, q.xi);
            f.eval_into(ev.x, &mut fv);
            for (a, &v) in mesh.cell(c).iter().enumerate() {
                for k in 0..2 {
                    b[2 * v + k] += q.weight * ev.det * fv[k] * ev.phi[a];
                }
            }
        }
    }
    Ok(b)
}

/// Solves the stabilized system with homogeneous velocity Dirichlet data.
///
/// With `adjoint` set the returned pressure is `q_H`, the multiplier of
/// the adjoint system `(∇z,∇φ) + (q, div φ) = J(φ)`, `(div z, ξ) = …`;
/// the velocity block is symmetric so only the pressure sign changes.
pub fn solve_stokes_stabilized(mesh: &Arc<Mesh>, rhs: StokesRhs<'_>, adjoint: bool) -> Result<StokesSolution> {
    let nn = mesh.nodes.len();
    let mut b = match rhs {
        StokesRhs::Force(f) => velocity_load(mesh, f)?,
        StokesRhs::Goal(j) => rhs_vector(j, mesh, 2)?,
    };
    b.resize(3 * nn, 0.0);
    let mut k = assemble_stokes(mesh);
    let mut fixed = vec![false; 3 * nn];
    for (v, &on) in mesh.is_boundary_node.iter().enumerate() {
        fixed[2 * v] = on;
        fixed[2 * v + 1] = on;
    }
    k.constrain(&fixed, &mut b);

    let mass = lumped_mass(mesh);
    let diag = k.diagonal();
    let precond: Vec<f64> = (0..3 * nn)
        .map(|i| if i < 2 * nn { diag[i].abs().max(f64::MIN_POSITIVE) } else { mass[i - 2 * nn] + diag[i].abs() })
        .collect();
    let mut x = vec![0.0; 3 * nn];
    let stats = minres(&k, &b, &mut x, &precond, MINRES_TOL, 50 * 3 * nn + 1000)?;

    let mut p = x.split_off(2 * nn);
    let total: f64 = mass.iter().sum();
    let mean = p.iter().zip(&mass).map(|(p, m)| p * m).sum::<f64>() / total;
    let sign = if adjoint { -1.0 } else { 1.0 };
    for v in &mut p {
        *v = sign * (*v - mean);
    }
    Ok(StokesSolution {
        velocity: FeFunction::new(mesh.clone(), 2, x)?,
        pressure: FeFunction::new(mesh.clone(), 1, p)?,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::mesh::build_mesh;
    use crate::field::ConstantField;
    use crate::sampling::Domain;

    #[test]
    fn zero_force_gives_zero() {
        let m = Arc::new(build_mesh(Domain::UnitDisc, 1));
        let s = solve_stokes_stabilized(&m, StokesRhs::Force(&ConstantField(vec![0.0, 0.0])), false).unwrap();
        assert!(s.velocity.coeffs().iter().all(|v| *v == 0.0));
        assert!(s.pressure.coeffs().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn matrix_is_symmetric() {
        let m = build_mesh(Domain::UnitDisc, 1);
        assert!(assemble_stokes(&m).is_symmetric(1e-14));
    }

    #[test]
    fn gradient_force_is_absorbed_by_pressure() {
        // f = ∇(x² + y²) has v = 0 and p = r² − mean; the stabilization
        // perturbs v by O(h²).
        let f = crate::field::FnField::new(2, |p: [f64; 2], o: &mut [f64]| {
            o[0] = 2.0 * p[0];
            o[1] = 2.0 * p[1];
        });
        let vmax: Vec<f64> = (1..3)
            .map(|l| {
                let m = Arc::new(build_mesh(Domain::UnitDisc, l));
                let s = solve_stokes_stabilized(&m, StokesRhs::Force(&f), false).unwrap();
                assert!(s.pressure.integral()[0].abs() < 1e-12);
                s.velocity.coeffs().iter().fold(0.0f64, |a, v| a.max(v.abs()))
            })
            .collect();
        assert!(vmax[1] < 0.02 && vmax[1] / vmax[0] < 0.45, "{vmax:?}");
    }
}
