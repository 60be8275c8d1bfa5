use std::sync::Arc;

use deepritz::driver::{fem_verify, Problem};
use deepritz::dwr::{estimate_laplace, estimate_stokes};
use deepritz::fem::{build_mesh, solve_adjoint_laplace, solve_laplace_dirichlet, solve_stokes_stabilized, StokesRhs};

#[test]
fn square_rates_levels_3_to_6() {
    let rows = fem_verify(Problem::LaplaceSquareManufactured, &[3, 4, 5, 6]).unwrap();
    for r in &rows[1..] {
        assert!(r.rate_l2.unwrap() >= 1.9, "L2 rate {:?} at level {}", r.rate_l2, r.level);
        assert!(r.rate_h1.unwrap() >= 0.95, "H1 rate {:?} at level {}", r.rate_h1, r.level);
    }
    let j_err: Vec<f64> = rows.iter().map(|r| (r.j - 4.0 / std::f64::consts::PI.powi(2)).abs()).collect();
    assert!(j_err.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn stokes_velocity_converges() {
    let rows = fem_verify(Problem::StokesDisc, &[2, 3, 4]).unwrap();
    for r in &rows[1..] {
        assert!(r.rate_l2.unwrap() > 1.5, "{r:?}");
        assert!(r.rate_h1.unwrap() > 0.8, "{r:?}");
    }
    assert!((rows[2].j + 1.0 / std::f64::consts::PI).abs() < 5e-3);
}

#[test]
fn galerkin_orthogonality_laplace() {
    for p in [Problem::LaplaceLShape, Problem::LaplaceSquareManufactured] {
        for level in 1..=3 {
            let mesh = Arc::new(build_mesh(p.domain(), level));
            let f = p.forcing();
            let u = solve_laplace_dirichlet(&mesh, f.as_ref()).unwrap();
            let z = solve_adjoint_laplace(&mesh, &p.goal(None)).unwrap();
            let eta = estimate_laplace(&u, &z, f.as_ref()).unwrap();
            let scale = estimate_laplace(&deepritz::fem::FeFunction::zeros(mesh.clone(), 1), &z, f.as_ref()).unwrap();
            assert!(eta.abs() < 1e-10 * scale.abs(), "{p} level {level}: {eta:e} vs {scale:e}");
        }
    }
}

#[test]
fn galerkin_orthogonality_stokes() {
    let p = Problem::StokesDisc;
    let mesh = Arc::new(build_mesh(p.domain(), 2));
    let f = p.forcing();
    let primal = solve_stokes_stabilized(&mesh, StokesRhs::Force(f.as_ref()), false).unwrap();
    let dual = solve_stokes_stabilized(&mesh, StokesRhs::Goal(&p.goal(None)), true).unwrap();
    let zero = deepritz::fem::FeFunction::zeros(mesh.clone(), 2);
    let scale = estimate_stokes(&zero, &dual.velocity, &dual.pressure, f.as_ref()).unwrap();
    let eta = estimate_stokes(&primal.velocity, &dual.velocity, &dual.pressure, f.as_ref()).unwrap();
    // The pressure stabilization is not part of the residual, so this is
    // small but not at round-off.
    assert!(eta.abs() < 0.05 * scale.abs(), "{eta:e} vs {scale:e}");
}
