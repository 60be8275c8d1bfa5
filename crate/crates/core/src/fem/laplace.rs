//! Primal and adjoint Poisson problems.

use std::sync::Arc;

use super::element::element_values;
use super::functional::{rhs_vector, GoalFunctional};
use super::mesh::Mesh;
use super::quadrature::{cell_rule, edge_rule, RuleOrder};
use super::space::FeFunction;
use super::sparse::{cg, CsrMatrix, SolveStats};
use crate::error::{Error, Result};
use crate::field::Field;

/// Relative residual required of every Laplace solve.
pub const CG_TOL: f64 = 1e-12;

/// Stiffness matrix `(∇φ_j, ∇φ_i)` without boundary conditions.
pub fn assemble_stiffness(mesh: &Mesh) -> CsrMatrix {
    let mut a = CsrMatrix::from_cells(mesh.nodes.len(), mesh.cells());
    let rule = cell_rule(mesh.kind, RuleOrder::Standard, 1);
    let n = mesh.kind.nodes();
    for c in 0..mesh.cell_count() {
        let coords = mesh.cell_coords(c);
        let mut local = [[0.0; 4]; 4];
        for q in &rule {
            let ev = element_values(mesh.kind, &coords, q.xi);
            let w = q.weight * ev.det;
            for i in 0..n {
                for j in 0..n {
                    local[i][j] += w * (ev.dphi[i][0] * ev.dphi[j][0] + ev.dphi[i][1] * ev.dphi[j][1]);
                }
            }
        }
        let nodes = mesh.cell(c);
        for i in 0..n {
            for j in 0..n {
                a.add(nodes[i], nodes[j], local[i][j]);
            }
        }
    }
    a
}

/// Load vector `(f, φ_i)` for a scalar `f`.
pub fn load_vector(mesh: &Mesh, f: &dyn Field) -> Result<Vec<f64>> {
    if f.components() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, actual: f.components() });
    }
    let mut b = vec![0.0; mesh.nodes.len()];
    let rule = cell_rule(mesh.kind, RuleOrder::Standard, 1);
    let mut fv = [0.0];
    for c in 0..mesh.cell_count() {
        let coords = mesh.cell_coords(c);
        for q in &rule {
            let ev = element_values(mesh.kind, &coords, q.xi);
            f.eval_into(ev.x, &mut fv);
            let w = q.weight * ev.det * fv[0];
            for (a, &node) in mesh.cell(c).iter().enumerate() {
                b[node] += w * ev.phi[a];
            }
        }
    }
    Ok(b)
}

/// Adds `λ ⟨φ_j, φ_i⟩_∂Ω` with the two-point edge rule.
pub fn add_boundary_mass(mesh: &Mesh, a: &mut CsrMatrix, lambda: f64) {
    for e in &mesh.boundary_edges {
        let mut local = [[0.0; 2]; 2];
        for (t, w) in edge_rule() {
            let phi = [1.0 - t, t];
            for i in 0..2 {
                for j in 0..2 {
                    local[i][j] += lambda * w * e.length * phi[i] * phi[j];
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                a.add(e.nodes[i], e.nodes[j], local[i][j]);
            }
        }
    }
}

fn max_iterations(n: usize) -> usize {
    20 * n + 1000
}

fn solve_dirichlet_system(
    mesh: &Arc<Mesh>,
    mut b: Vec<f64>,
    guess: Option<Vec<f64>>,
) -> Result<(FeFunction, SolveStats)> {
    let mut a = assemble_stiffness(mesh);
    a.constrain(&mesh.is_boundary_node, &mut b);
    let mut x = guess.unwrap_or_else(|| vec![0.0; b.len()]);
    for (xi, &fixed) in x.iter_mut().zip(&mesh.is_boundary_node) {
        if fixed {
            *xi = 0.0;
        }
    }
    let stats = cg(&a, &b, &mut x, CG_TOL, max_iterations(b.len()))?;
    Ok((FeFunction::new(mesh.clone(), 1, x)?, stats))
}

/// Galerkin solution of `−Δu = f`, `u = 0` on ∂Ω.
pub fn solve_laplace_dirichlet(mesh: &Arc<Mesh>, f: &dyn Field) -> Result<FeFunction> {
    solve_laplace_dirichlet_from(mesh, f, None).map(|(u, _)| u)
}

/// As [`solve_laplace_dirichlet`], starting CG from the interpolant of
/// `initial` (typically the solution on the next coarser mesh).
pub fn solve_laplace_dirichlet_from(
    mesh: &Arc<Mesh>,
    f: &dyn Field,
    initial: Option<&dyn Field>,
) -> Result<(FeFunction, SolveStats)> {
    let b = load_vector(mesh, f)?;
    let guess = initial.map(|g| FeFunction::interpolate(mesh.clone(), g).coeffs().to_vec());
    solve_dirichlet_system(mesh, b, guess)
}

/// Galerkin solution of `(∇u,∇v) + λ⟨u,v⟩_∂Ω = (f,v)` over the full space.
pub fn solve_laplace_robin(mesh: &Arc<Mesh>, f: &dyn Field, lambda: f64) -> Result<FeFunction> {
    if !(lambda > 0.0) {
        return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
    }
    let b = load_vector(mesh, f)?;
    let mut a = assemble_stiffness(mesh);
    add_boundary_mass(mesh, &mut a, lambda);
    let mut x = vec![0.0; b.len()];
    cg(&a, &b, &mut x, CG_TOL, max_iterations(b.len()))?;
    FeFunction::new(mesh.clone(), 1, x)
}

/// `z_H` with `(∇v, ∇z_H) = J(v)` for all `v` in the Dirichlet space.
pub fn solve_adjoint_laplace(mesh: &Arc<Mesh>, j: &GoalFunctional) -> Result<FeFunction> {
    let b = rhs_vector(j, mesh, 1)?;
    // The stiffness matrix is symmetric, so the adjoint uses the same system.
    solve_dirichlet_system(mesh, b, None).map(|(z, _)| z)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::fem::mesh::build_mesh;
    use crate::fem::space::error_norms;
    use crate::field::{ConstantField, FnField, Point};
    use crate::sampling::Domain;

    fn mesh(d: Domain, l: usize) -> Arc<Mesh> {
        Arc::new(build_mesh(d, l))
    }

    #[test]
    fn zero_forcing_gives_zero() {
        let u = solve_laplace_dirichlet(&mesh(Domain::LShape, 3), &ConstantField(vec![0.0])).unwrap();
        assert!(u.coeffs().iter().all(|v| *v == 0.0));
        let u = solve_laplace_robin(&mesh(Domain::UnitSquare, 3), &ConstantField(vec![0.0]), 10.0).unwrap();
        assert!(u.coeffs().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn stiffness_is_symmetric_with_zero_row_sums() {
        for d in [Domain::LShape, Domain::UnitDisc] {
            let m = mesh(d, 2);
            let a = assemble_stiffness(&m);
            assert!(a.is_symmetric(1e-14));
            let ones = vec![1.0; m.nodes.len()];
            let mut y = vec![0.0; m.nodes.len()];
            a.matvec(&ones, &mut y);
            assert!(y.iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn manufactured_solution_converges() {
        let f = FnField::new(1, |p: Point, o: &mut [f64]| o[0] = 2.0 * PI * PI * (PI * p[0]).sin() * (PI * p[1]).sin());
        let exact = FnField::with_gradient(
            1,
            |p: Point, o: &mut [f64]| o[0] = (PI * p[0]).sin() * (PI * p[1]).sin(),
            |p: Point, g: &mut [f64]| {
                g[0] = PI * (PI * p[0]).cos() * (PI * p[1]).sin();
                g[1] = PI * (PI * p[0]).sin() * (PI * p[1]).cos();
            },
        );
        let errs: Vec<(f64, f64)> = (2..5)
            .map(|l| error_norms(&solve_laplace_dirichlet(&mesh(Domain::UnitSquare, l), &f).unwrap(), &exact).unwrap())
            .collect();
        for w in errs.windows(2) {
            assert!((w[0].0 / w[1].0).log2() > 1.85);
            assert!((w[0].1 / w[1].1).log2() > 0.9);
        }
    }

    #[test]
    fn lshape_solution_is_symmetric() {
        let m = mesh(Domain::LShape, 4);
        let u = solve_laplace_dirichlet(&m, &ConstantField(vec![1.0])).unwrap();
        let mut a = [0.0];
        let mut b = [0.0];
        u.eval_into([0.5, -0.5], &mut a);
        u.eval_into([-0.5, 0.5], &mut b);
        assert!((a[0] - b[0]).abs() < 1e-10);
    }

    #[test]
    fn robin_tends_to_dirichlet() {
        let m = mesh(Domain::UnitSquare, 4);
        let one = ConstantField(vec![1.0]);
        let d = solve_laplace_dirichlet(&m, &one).unwrap();
        let r = solve_laplace_robin(&m, &one, 1e12).unwrap();
        let (l2, _) = error_norms(&r, &d).unwrap();
        assert!(l2 < 1e-6, "{l2}");
        let mut prev = f64::INFINITY;
        for lambda in [1e1, 1e2, 1e3, 1e4, 1e5, 1e6] {
            let (_, h1) = error_norms(&solve_laplace_robin(&m, &one, lambda).unwrap(), &d).unwrap();
            assert!(h1 < prev);
            prev = h1;
        }
        assert!(solve_laplace_robin(&m, &one, 0.0).is_err());
    }

    #[test]
    fn adjoint_average_is_symmetric() {
        let m = mesh(Domain::UnitSquare, 3);
        let z = solve_adjoint_laplace(&m, &GoalFunctional::DomainAverage).unwrap();
        let n = 9;
        let node = |i: usize, j: usize| m.nodes.iter().position(|p| *p == [i as f64 / 8.0, j as f64 / 8.0]).unwrap();
        let at = |i: usize, j: usize| z.coeffs()[node(i, j)];
        for j in 0..n {
            for i in 0..n {
                assert!((at(i, j) - at(j, i)).abs() < 1e-10);
                assert!((at(i, j) - at(n - 1 - i, j)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn adjoint_point_value_is_nonnegative() {
        for l in 1..5 {
            let z = solve_adjoint_laplace(&mesh(Domain::LShape, l), &GoalFunctional::point([0.5, -0.5])).unwrap();
            assert!(z.coeffs().iter().all(|v| *v >= -1e-14));
        }
    }

    #[test]
    fn functional_vanishing_on_the_space_gives_zero_adjoint() {
        // Point value on ∂Ω only touches eliminated boundary nodes.
        let z = solve_adjoint_laplace(&mesh(Domain::UnitSquare, 3), &GoalFunctional::point([1.0, 0.3])).unwrap();
        assert!(z.coeffs().iter().all(|v| *v == 0.0));
    }
}
