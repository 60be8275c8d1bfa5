//! Monte-Carlo loss functionals: penalized Deep Ritz energies for Laplace
//! and Stokes, and the collocation (strong residual) loss.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{Field, Point};
use crate::network::{Network, Objective, Site, SpatialJet};
use crate::sampling::{Domain, SampleSet};

pub type SharedField = Arc<dyn Field + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltyParams {
    /// Boundary penalty λ.
    pub lambda: f64,
    /// Divergence penalty α (Stokes only).
    pub alpha: f64,
}

impl PenaltyParams {
    pub fn laplace(lambda: f64) -> Self {
        PenaltyParams { lambda, alpha: 0.0 }
    }

    pub fn stokes(lambda: f64, alpha: f64) -> Self {
        PenaltyParams { lambda, alpha }
    }
}

#[derive(Clone)]
pub struct ProblemData {
    pub f: SharedField,
    pub domain: Domain,
    pub exact: Option<SharedField>,
}

/// Finite-difference step of the collocation Laplacian.
pub const STRONG_FORM_STEP: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Energy {
    Laplace,
    Stokes { alpha: f64 },
}

/// The penalized energy for one fixed node set, as an [`Objective`].
///
/// Right-hand-side values are evaluated once at construction so repeated
/// evaluation during training only touches the network.
pub struct EnergyObjective {
    energy: Energy,
    sites: Vec<Site>,
    n_interior: usize,
    f_values: Vec<f64>,
    components: usize,
    w_in: f64,
    w_bnd: f64,
    lambda: f64,
}

fn check_components(net_c: usize, want: usize) -> Result<()> {
    if net_c != want {
        return Err(Error::DimensionMismatch { expected: want, actual: net_c });
    }
    Ok(())
}

impl EnergyObjective {
    pub fn laplace(s: &SampleSet, data: &ProblemData, p: PenaltyParams) -> Result<Self> {
        if p.lambda <= 0.0 {
            return Err(Error::Config(format!("lambda must be positive, got {}", p.lambda)));
        }
        check_components(data.f.components(), 1)?;
        Ok(Self::build(Energy::Laplace, 1, s, data, p.lambda))
    }

    pub fn stokes(s: &SampleSet, data: &ProblemData, p: PenaltyParams) -> Result<Self> {
        if p.lambda <= 0.0 || p.alpha <= 0.0 {
            return Err(Error::Config(format!("lambda and alpha must be positive, got {} and {}", p.lambda, p.alpha)));
        }
        check_components(data.f.components(), 2)?;
        Ok(Self::build(Energy::Stokes { alpha: p.alpha }, 2, s, data, p.lambda))
    }

    fn build(energy: Energy, c: usize, s: &SampleSet, data: &ProblemData, lambda: f64) -> Self {
        let mut sites = Vec::with_capacity(s.interior.len() + s.boundary.len());
        let mut f_values = vec![0.0; c * s.interior.len()];
        for (k, p) in s.interior.iter().enumerate() {
            sites.push(Site { x: p.to_vec(), jet: true });
            data.f.eval_into(*p, &mut f_values[c * k..c * (k + 1)]);
        }
        sites.extend(s.boundary.iter().map(|p| Site { x: p.to_vec(), jet: false }));
        EnergyObjective {
            energy,
            sites,
            n_interior: s.interior.len(),
            f_values,
            components: c,
            w_in: s.area / s.interior.len() as f64,
            w_bnd: s.perimeter / s.boundary.len() as f64,
            lambda,
        }
    }

    /// Loss contribution of site `k` and, when `cot` is given, its
    /// derivative with respect to the site's jet.
    #[inline]
    fn site_term(&self, k: usize, jet: &SpatialJet, cot: Option<&mut SpatialJet>) -> f64 {
        let c = self.components;
        if k < self.n_interior {
            let f = &self.f_values[c * k..c * (k + 1)];
            let w = self.w_in;
            let grad_sq: f64 = jet.grad.iter().map(|g| g * g).sum();
            let fu: f64 = f.iter().zip(&jet.value).map(|(a, b)| a * b).sum();
            let (div, extra) = match self.energy {
                Energy::Laplace => (0.0, 0.0),
                Energy::Stokes { alpha } => {
                    let div = jet.grad[0] + jet.grad[3];
                    (div, 0.5 * alpha * div * div)
                }
            };
            if let Some(cot) = cot {
                for (cv, fv) in cot.value.iter_mut().zip(f) {
                    *cv = -w * fv;
                }
                for (cg, g) in cot.grad.iter_mut().zip(&jet.grad) {
                    *cg = w * g;
                }
                if let Energy::Stokes { alpha } = self.energy {
                    cot.grad[0] += w * alpha * div;
                    cot.grad[3] += w * alpha * div;
                }
            }
            w * (0.5 * grad_sq - fu + extra)
        } else {
            let w = self.w_bnd * self.lambda;
            if let Some(cot) = cot {
                for (cv, u) in cot.value.iter_mut().zip(&jet.value) {
                    *cv = w * u;
                }
            }
            0.5 * w * jet.value.iter().map(|u| u * u).sum::<f64>()
        }
    }

    /// Loss and exact parameter gradient in one sweep over the nodes.
    pub fn loss_and_gradient(&self, net: &Network) -> Result<(f64, Vec<f64>)> {
        check_components(net.arch().output_dim, self.components)?;
        let mut ws = net.workspace();
        let mut grad = vec![0.0; net.params().len()];
        let mut jet = SpatialJet::zeros(self.components, 2);
        let mut cot = SpatialJet::zeros(self.components, 2);
        let mut interior = 0.0;
        let mut boundary = 0.0;
        for (k, site) in self.sites.iter().enumerate() {
            let term = net.accumulate_site(&mut ws, &site.x, site.jet, &mut jet, &mut cot, &mut grad, |j, c| {
                self.site_term(k, j, Some(c))
            });
            if k < self.n_interior {
                interior += term;
            } else {
                boundary += term;
            }
        }
        Ok((interior + boundary, grad))
    }

    /// Loss of an arbitrary field (network or analytic test field).
    pub fn value_of_field(&self, u: &dyn Field) -> Result<f64> {
        check_components(u.components(), self.components)?;
        let c = self.components;
        let mut jet = SpatialJet::zeros(c, 2);
        let mut interior = 0.0;
        let mut boundary = 0.0;
        for (k, site) in self.sites.iter().enumerate() {
            let x: Point = [site.x[0], site.x[1]];
            if site.jet {
                u.jet_into(x, &mut jet.value, &mut jet.grad);
                interior += self.site_term(k, &jet, None);
            } else {
                u.eval_into(x, &mut jet.value);
                boundary += self.site_term(k, &jet, None);
            }
        }
        Ok(interior + boundary)
    }
}

impl Objective for EnergyObjective {
    fn sites(&self) -> &[Site] {
        &self.sites
    }

    fn value(&self, jets: &[SpatialJet]) -> f64 {
        let interior: f64 = (0..self.n_interior).map(|k| self.site_term(k, &jets[k], None)).sum();
        let boundary: f64 = (self.n_interior..self.sites.len()).map(|k| self.site_term(k, &jets[k], None)).sum();
        interior + boundary
    }

    fn pullback(&self, jets: &[SpatialJet], cotangents: &mut [SpatialJet]) {
        for (k, (jet, cot)) in jets.iter().zip(cotangents.iter_mut()).enumerate() {
            self.site_term(k, jet, Some(cot));
        }
    }
}

/// Penalized Laplace energy `(|Ω|/N) Σ (½|∇u|² - f u) + (|∂Ω|/N_b) Σ (λ/2) u²`.
pub fn laplace_energy_loss(u: &dyn Field, s: &SampleSet, data: &ProblemData, p: PenaltyParams) -> Result<f64> {
    EnergyObjective::laplace(s, data, p)?.value_of_field(u)
}

/// Penalized Stokes energy with divergence penalty α and boundary penalty λ.
pub fn stokes_energy_loss(u: &dyn Field, s: &SampleSet, data: &ProblemData, p: PenaltyParams) -> Result<f64> {
    EnergyObjective::stokes(s, data, p)?.value_of_field(u)
}

/// Collocation loss `(1/N) Σ |-Δ_h u - f|² + (λ/N_b) Σ u²`, with `Δ_h` the
/// five-point stencil of step [`STRONG_FORM_STEP`].
///
/// The stencil is applied as is near ∂Ω: networks are defined on all of R²,
/// so nodes within one step of the boundary need no special treatment.
pub struct StrongResidualObjective {
    sites: Vec<Site>,
    n_interior: usize,
    f_values: Vec<f64>,
    lambda: f64,
    step: f64,
}

impl StrongResidualObjective {
    pub fn new(s: &SampleSet, data: &ProblemData, p: PenaltyParams) -> Result<Self> {
        check_components(data.f.components(), 1)?;
        if p.lambda <= 0.0 {
            return Err(Error::Config(format!("lambda must be positive, got {}", p.lambda)));
        }
        let h = STRONG_FORM_STEP;
        let mut sites = Vec::with_capacity(5 * s.interior.len() + s.boundary.len());
        let mut f_values = Vec::with_capacity(s.interior.len());
        for p in &s.interior {
            let [x, y] = *p;
            for q in [[x, y], [x + h, y], [x - h, y], [x, y + h], [x, y - h]] {
                sites.push(Site { x: q.to_vec(), jet: false });
            }
            let mut f = [0.0];
            data.f.eval_into(*p, &mut f);
            f_values.push(f[0]);
        }
        sites.extend(s.boundary.iter().map(|p| Site { x: p.to_vec(), jet: false }));
        Ok(StrongResidualObjective { sites, n_interior: s.interior.len(), f_values, lambda: p.lambda, step: h })
    }

    fn residual(&self, k: usize, u: impl Fn(usize) -> f64) -> f64 {
        let b = 5 * k;
        let lap = (u(b + 1) + u(b + 2) + u(b + 3) + u(b + 4) - 4.0 * u(b)) / (self.step * self.step);
        -lap - self.f_values[k]
    }

    fn value_from(&self, u: impl Fn(usize) -> f64) -> f64 {
        let n_in = self.n_interior as f64;
        let n_bnd = (self.sites.len() - 5 * self.n_interior) as f64;
        let interior: f64 = (0..self.n_interior).map(|k| self.residual(k, &u).powi(2)).sum::<f64>() / n_in;
        let boundary: f64 = (5 * self.n_interior..self.sites.len()).map(|i| u(i).powi(2)).sum::<f64>();
        interior + self.lambda * boundary / n_bnd
    }

    pub fn value_of_field(&self, u: &dyn Field) -> Result<f64> {
        check_components(u.components(), 1)?;
        let vals: Vec<f64> = self
            .sites
            .iter()
            .map(|s| {
                let mut v = [0.0];
                u.eval_into([s.x[0], s.x[1]], &mut v);
                v[0]
            })
            .collect();
        Ok(self.value_from(|i| vals[i]))
    }
}

impl Objective for StrongResidualObjective {
    fn sites(&self) -> &[Site] {
        &self.sites
    }

    fn value(&self, jets: &[SpatialJet]) -> f64 {
        self.value_from(|i| jets[i].value[0])
    }

    fn pullback(&self, jets: &[SpatialJet], cotangents: &mut [SpatialJet]) {
        let n_in = self.n_interior as f64;
        let n_bnd = (self.sites.len() - 5 * self.n_interior) as f64;
        let inv_h2 = 1.0 / (self.step * self.step);
        for k in 0..self.n_interior {
            let r = self.residual(k, |i| jets[i].value[0]);
            let s = 2.0 * r / n_in;
            let b = 5 * k;
            cotangents[b].value[0] = 4.0 * s * inv_h2;
            for j in 1..5 {
                cotangents[b + j].value[0] = -s * inv_h2;
            }
        }
        for i in 5 * self.n_interior..self.sites.len() {
            cotangents[i].value[0] = 2.0 * self.lambda * jets[i].value[0] / n_bnd;
        }
    }
}

pub fn strong_residual_loss(u: &dyn Field, s: &SampleSet, data: &ProblemData, p: PenaltyParams) -> Result<f64> {
    StrongResidualObjective::new(s, data, p)?.value_of_field(u)
}
