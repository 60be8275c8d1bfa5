//! Reference values and the verification studies behind the CLI.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use super::problems::Problem;
use crate::dwr::{estimate_laplace_refined, estimate_mc};
use crate::error::{Error, Result};
use crate::fem::element::element_values;
use crate::fem::laplace::solve_laplace_dirichlet_from;
use crate::fem::quadrature::{cell_rule, gauss_legendre, RuleOrder};
use crate::fem::{
    build_mesh, error_norms, eval_functional, solve_adjoint_laplace, solve_laplace_dirichlet, solve_laplace_robin,
    solve_stokes_stabilized, FeFunction, StokesRhs,
};
use crate::field::Field;
use crate::loss::{EnergyObjective, PenaltyParams};
use crate::network::Network;
use crate::sampling::sample;

/// Mesh levels used for the L-shape reference value.
pub const REFERENCE_LEVELS: [usize; 4] = [6, 7, 8, 9];

#[derive(Clone, Debug, PartialEq)]
pub struct Reference {
    pub value: f64,
    /// Error band: extrapolation correction plus the last level increment.
    /// Zero for closed-form values.
    pub band: f64,
    /// `(level, J_h)` for every mesh solved.
    pub levels: Vec<(usize, f64)>,
}

/// Goal value of the exact solution. Closed form for the disc and the
/// square; for the L-shape, nested Q1 solves on [`REFERENCE_LEVELS`] with
/// Richardson extrapolation when the observed contraction is regular.
pub fn reference(problem: Problem) -> Result<Reference> {
    match problem {
        Problem::StokesDisc => Ok(Reference { value: -1.0 / PI, band: 0.0, levels: vec![] }),
        Problem::LaplaceSquareManufactured => Ok(Reference { value: 4.0 / (PI * PI), band: 0.0, levels: vec![] }),
        Problem::LaplaceLShape => reference_from_levels(problem, &REFERENCE_LEVELS),
    }
}

/// Laplace reference from nested solves on `levels` (ascending).
pub fn reference_from_levels(problem: Problem, levels: &[usize]) -> Result<Reference> {
    if problem.is_stokes() || levels.is_empty() {
        return Err(Error::Unsupported(format!("mesh reference for {problem}")));
    }
    let f = problem.forcing();
    let goal = problem.goal(None);
    let mut values = Vec::new();
    let mut prev: Option<FeFunction> = None;
    for &level in levels {
        let mesh = Arc::new(build_mesh(problem.domain(), level));
        let (u, _) = solve_laplace_dirichlet_from(&mesh, f.as_ref(), prev.as_ref().map(|u| u as &dyn Field))?;
        values.push((level, eval_functional(&goal, &u, &mesh)?));
        prev = Some(u);
    }
    Ok(extrapolate(values))
}

fn extrapolate(levels: Vec<(usize, f64)>) -> Reference {
    let j: Vec<f64> = levels.iter().map(|l| l.1).collect();
    let n = j.len();
    let finest = j[n - 1];
    if n < 3 {
        let band = if n == 2 { (j[1] - j[0]).abs() } else { 0.0 };
        return Reference { value: finest, band, levels };
    }
    let (d1, d2) = (j[n - 2] - j[n - 3], j[n - 1] - j[n - 2]);
    let r = d2 / d1;
    let value = if d1 != 0.0 && (0.05..0.9).contains(&r) { finest + d2 * r / (1.0 - r) } else { finest };
    Reference { value, band: (value - finest).abs() + d2.abs(), levels }
}

static REFERENCES: [OnceLock<f64>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];

/// [`reference`]`.value`, computed once per process.
pub fn reference_value(problem: Problem) -> Result<f64> {
    let i = Problem::ALL.iter().position(|p| *p == problem).expect("listed");
    if let Some(v) = REFERENCES[i].get() {
        return Ok(*v);
    }
    let v = reference(problem)?.value;
    Ok(*REFERENCES[i].get_or_init(|| v))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FemRow {
    pub level: usize,
    pub h: f64,
    pub dofs: usize,
    /// Velocity errors for Stokes; `None` without a closed-form solution.
    pub l2: Option<f64>,
    pub h1: Option<f64>,
    pub j: f64,
    pub rate_l2: Option<f64>,
    pub rate_h1: Option<f64>,
    pub iterations: usize,
}

fn rate(prev: Option<(f64, f64)>, cur: Option<(f64, f64)>) -> Option<f64> {
    let ((e0, h0), (e1, h1)) = (prev?, cur?);
    (e0 > 0.0 && e1 > 0.0).then(|| (e0 / e1).ln() / (h0 / h1).ln())
}

/// Solves the problem with finite elements on each level and reports
/// errors against the closed-form solution with observed rates.
pub fn fem_verify(problem: Problem, levels: &[usize]) -> Result<Vec<FemRow>> {
    let f = problem.forcing();
    let goal = problem.goal(None);
    let exact = problem.exact();
    let mut rows: Vec<FemRow> = Vec::new();
    for &level in levels {
        let mesh = Arc::new(build_mesh(problem.domain(), level));
        let (u, iterations, dofs) = if problem.is_stokes() {
            let s = solve_stokes_stabilized(&mesh, StokesRhs::Force(f.as_ref()), false)?;
            (s.velocity, s.stats.iterations, 3 * mesh.nodes.len())
        } else {
            let (u, stats) = solve_laplace_dirichlet_from(&mesh, f.as_ref(), None)?;
            (u, stats.iterations, mesh.nodes.len())
        };
        let norms = exact.as_ref().map(|e| error_norms(&u, e.as_ref())).transpose()?;
        let j = eval_functional(&goal, &u, &mesh)?;
        let h = mesh.h;
        let (l2, h1) = (norms.map(|n| n.0), norms.map(|n| n.1));
        let prev = rows.last();
        let row = FemRow {
            level,
            h,
            dofs,
            l2,
            h1,
            j,
            rate_l2: rate(prev.and_then(|p| p.l2.map(|e| (e, p.h))), l2.map(|e| (e, h))),
            rate_h1: rate(prev.and_then(|p| p.h1.map(|e| (e, p.h))), h1.map(|e| (e, h))),
            iterations,
        };
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LambdaRow {
    pub lambda: f64,
    /// `|u_λ − u_D|_{H¹}` between the Robin and Dirichlet solutions.
    pub h1_distance: f64,
}

/// Default mesh level of the penalty sweep.
pub const LAMBDA_SWEEP_LEVEL: usize = 5;

/// Distance between the boundary-penalized and the Dirichlet Galerkin
/// solutions on one mesh, per penalty. Laplace problems only.
pub fn lambda_sweep(problem: Problem, lambdas: &[f64], level: usize) -> Result<Vec<LambdaRow>> {
    if problem.is_stokes() {
        return Err(Error::Unsupported("the penalty sweep is implemented for Laplace problems".into()));
    }
    let mesh = Arc::new(build_mesh(problem.domain(), level));
    let f = problem.forcing();
    let dirichlet = solve_laplace_dirichlet(&mesh, f.as_ref())?;
    lambdas
        .iter()
        .map(|&lambda| {
            let robin = solve_laplace_robin(&mesh, f.as_ref(), lambda)?;
            let (_, h1) = error_norms(&robin, &dirichlet)?;
            Ok(LambdaRow { lambda, h1_distance: h1 })
        })
        .collect()
}

/// Ratio of successive distances; a value near 0.1 per decade is first
/// order in 1/λ.
pub fn decade_ratios(rows: &[LambdaRow]) -> Vec<f64> {
    rows.windows(2).map(|w| w[1].h1_distance / w[0].h1_distance).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct McRow {
    pub n: usize,
    /// Mean over seeds of `|sampled − reference|`.
    pub mean_abs_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct McStudy {
    pub reference: f64,
    pub rows: Vec<McRow>,
    /// Least-squares slope of log error against log N.
    pub slope: Option<f64>,
}

/// Seed of the fixed network used by the Monte-Carlo studies.
pub const MC_NETWORK_SEED: u64 = 7;
/// Mesh level of the quadrature reference in [`mc_loss_rate`].
pub const MC_REFERENCE_LEVEL: usize = 5;

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        points.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if pts.len() < 2 || sxx == 0.0 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

fn laplace_only(problem: Problem) -> Result<()> {
    if problem.is_stokes() || problem.domain().polygon().is_none() {
        return Err(Error::Unsupported("Monte-Carlo studies are implemented for Laplace problems".into()));
    }
    Ok(())
}

/// Penalized energy of `u` by mesh quadrature: composite high-order cell
/// rule on a level-`level` mesh and Gauss-Legendre on the polygon sides.
pub fn energy_by_quadrature(problem: Problem, u: &dyn Field, penalty: PenaltyParams, level: usize) -> Result<f64> {
    laplace_only(problem)?;
    let mesh = build_mesh(problem.domain(), level);
    let f = problem.forcing();
    let rule = cell_rule(mesh.kind, RuleOrder::High, 2);
    let (mut v, mut g, mut fv) = ([0.0], [0.0; 2], [0.0]);
    let mut interior = 0.0;
    for c in 0..mesh.cell_count() {
        let coords = mesh.cell_coords(c);
        for q in &rule {
            let ev = element_values(mesh.kind, &coords, q.xi);
            u.jet_into(ev.x, &mut v, &mut g);
            f.eval_into(ev.x, &mut fv);
            interior += q.weight * ev.det * (0.5 * (g[0] * g[0] + g[1] * g[1]) - fv[0] * v[0]);
        }
    }
    let poly = problem.domain().polygon().expect("checked");
    let gl = gauss_legendre(8);
    let pieces = 1 << level;
    let mut boundary = 0.0;
    for (i, a) in poly.iter().enumerate() {
        let b = poly[(i + 1) % poly.len()];
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        for piece in 0..pieces {
            for &(t, w) in &gl {
                let t = (piece as f64 + t) / pieces as f64;
                u.eval_into([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])], &mut v);
                boundary += w * len / pieces as f64 * 0.5 * penalty.lambda * v[0] * v[0];
            }
        }
    }
    Ok(interior + boundary)
}

fn mc_study(
    ns: &[usize],
    seeds: usize,
    reference: f64,
    mut sampled: impl FnMut(usize, u64) -> Result<f64>,
) -> Result<McStudy> {
    if seeds == 0 || ns.is_empty() {
        return Err(Error::Config("need at least one sample size and one seed".into()));
    }
    let mut rows = Vec::new();
    for &n in ns {
        let mut total = 0.0;
        for seed in 0..seeds as u64 {
            total += (sampled(n, seed)? - reference).abs();
        }
        rows.push(McRow { n, mean_abs_error: total / seeds as f64 });
    }
    let slope = loglog_slope(&rows.iter().map(|r| (r.n as f64, r.mean_abs_error)).collect::<Vec<_>>());
    Ok(McStudy { reference, rows, slope })
}

/// Sampling error of the penalized energy of a fixed random network, with
/// `N` interior and `N` boundary nodes.
pub fn mc_loss_rate(problem: Problem, ns: &[usize], seeds: usize) -> Result<McStudy> {
    laplace_only(problem)?;
    let net = Network::init(problem.default_arch(), MC_NETWORK_SEED)?;
    mc_loss_rate_of(problem, &net, ns, seeds)
}

/// [`mc_loss_rate`] for an arbitrary scalar field.
pub fn mc_loss_rate_of(problem: Problem, u: &dyn Field, ns: &[usize], seeds: usize) -> Result<McStudy> {
    laplace_only(problem)?;
    let penalty = problem.default_penalty();
    let reference = energy_by_quadrature(problem, u, penalty, MC_REFERENCE_LEVEL)?;
    let data = problem.data();
    mc_study(ns, seeds, reference, |n, seed| {
        let s = sample(problem.domain(), n, n, seed)?;
        EnergyObjective::laplace(&s, &data, penalty)?.value_of_field(u)
    })
}

/// Sampling error of the Monte-Carlo estimator against the mesh-quadrature
/// estimator (refined 8×), for a fixed random network and the coarse adjoint.
pub fn mc_estimator_rate(problem: Problem, ns: &[usize], seeds: usize, adjoint_level: usize) -> Result<McStudy> {
    laplace_only(problem)?;
    let net = Network::init(problem.default_arch(), MC_NETWORK_SEED)?;
    let mesh = Arc::new(build_mesh(problem.domain(), adjoint_level));
    let z = solve_adjoint_laplace(&mesh, &problem.goal(None))?;
    let f = problem.forcing();
    let reference = estimate_laplace_refined(&net, &z, f.as_ref(), 8)?;
    mc_study(ns, seeds, reference, |n, seed| {
        let s = sample(problem.domain(), n, n, seed)?;
        estimate_mc(&net, &z, &s, f.as_ref())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FnField;

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [1.0, 10.0, 100.0].iter().map(|&x: &f64| (x, 3.0 * x.powf(-0.5))).collect();
        assert!((loglog_slope(&pts).unwrap() + 0.5).abs() < 1e-12);
        assert_eq!(loglog_slope(&pts[..1]), None);
    }

    #[test]
    fn richardson_on_geometric_sequence() {
        // J_l = 1 + 0.5^l: extrapolation recovers 1 exactly.
        let levels = (3..6).map(|l| (l, 1.0 + 0.5f64.powi(l as i32))).collect();
        let r = extrapolate(levels);
        assert!((r.value - 1.0).abs() < 1e-14);
        assert!(r.band > 0.0);
        // Irregular increments fall back to the finest value.
        let r = extrapolate(vec![(1, 1.0), (2, 1.1), (3, 1.0)]);
        assert_eq!(r.value, 1.0);
    }

    #[test]
    fn closed_form_references() {
        assert_eq!(reference_value(Problem::StokesDisc).unwrap(), -1.0 / PI);
        assert_eq!(reference(Problem::LaplaceSquareManufactured).unwrap().band, 0.0);
    }

    #[test]
    fn square_goal_converges() {
        let r = reference_from_levels(Problem::LaplaceSquareManufactured, &[3, 4, 5]).unwrap();
        let exact = 4.0 / (PI * PI);
        assert!((r.value - exact).abs() < (r.levels[2].1 - exact).abs());
    }

    #[test]
    fn fem_rates_on_square() {
        let rows = fem_verify(Problem::LaplaceSquareManufactured, &[2, 3, 4]).unwrap();
        assert_eq!(rows[0].rate_l2, None);
        assert!(rows[2].rate_l2.unwrap() > 1.9);
        assert!(rows[2].rate_h1.unwrap() > 0.95);
        let l = fem_verify(Problem::LaplaceLShape, &[2]).unwrap();
        assert_eq!(l[0].l2, None);
    }

    #[test]
    fn penalty_sweep_decreases() {
        let rows = lambda_sweep(Problem::LaplaceLShape, &[10.0, 100.0, 1000.0], 3).unwrap();
        assert!(decade_ratios(&rows).iter().all(|&r| r < 0.5));
        assert!(lambda_sweep(Problem::StokesDisc, &[10.0], 2).is_err());
    }

    #[test]
    fn quadrature_energy_of_polynomial() {
        // u = x y on the unit square, f = 2π² sin sin:
        // ∫½|∇u|² = 1/3, ∫ f u = 2π² (1/π)² = 2, ∮ u² = 2/3.
        let u = FnField::with_gradient(
            1,
            |p: [f64; 2], o: &mut [f64]| o[0] = p[0] * p[1],
            |p: [f64; 2], g: &mut [f64]| {
                g[0] = p[1];
                g[1] = p[0];
            },
        );
        let e = energy_by_quadrature(Problem::LaplaceSquareManufactured, &u, PenaltyParams::laplace(3.0), 3).unwrap();
        assert!((e - (1.0 / 3.0 - 2.0 + 1.0)).abs() < 1e-6, "{e}");
    }

    #[test]
    fn zero_field_has_no_sampling_error() {
        let zero = FnField::with_gradient(
            1,
            |_: [f64; 2], o: &mut [f64]| o[0] = 0.0,
            |_: [f64; 2], g: &mut [f64]| g.fill(0.0),
        );
        let s = mc_loss_rate_of(Problem::LaplaceLShape, &zero, &[10, 100], 2).unwrap();
        assert!(s.rows.iter().all(|r| r.mean_abs_error == 0.0));
        assert_eq!(s.slope, None);
    }

    #[test]
    fn mc_estimator_small() {
        let s = mc_estimator_rate(Problem::LaplaceLShape, &[100, 1000], 3, 1).unwrap();
        assert_eq!(s.rows.len(), 2);
        assert!(s.slope.unwrap() < 0.0);
        assert!(mc_loss_rate(Problem::StokesDisc, &[10], 1).is_err());
    }
}
