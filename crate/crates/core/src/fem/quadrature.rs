//! Reference-cell quadrature rules.
//!
//! Quadrilaterals use the reference square `[0,1]²`, triangles the
//! reference triangle with vertices `(0,0), (1,0), (0,1)`, edges `[0,1]`.

use super::mesh::CellKind;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadPoint {
    pub xi: [f64; 2],
    pub weight: f64,
}

/// Accuracy class of a cell rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RuleOrder {
    /// 2×2 Gauss on quads, 3-point on triangles. Exact for the (bi)linear
    /// products arising in assembly.
    Standard,
    /// 3×3 Gauss on quads, 6-point (degree 4) on triangles.
    High,
}

const G2: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];

const G3: [(f64, f64); 3] =
    [(0.112_701_665_379_258_3, 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.887_298_334_620_741_7, 5.0 / 18.0)];

/// Two-point Gauss rule on `[0, 1]`: `(t, weight)`.
pub fn edge_rule() -> [(f64, f64); 2] {
    [(G2[0], 0.5), (G2[1], 0.5)]
}

/// Gauss–Legendre rule with `n` points on `[0, 1]` (Golub–Welsch free
/// Newton iteration on the Legendre polynomial).
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let pk = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = pk;
            }
            let p = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (1.0 - x), 0.5 * w));
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}

fn base_rule(kind: CellKind, order: RuleOrder) -> Vec<QuadPoint> {
    match (kind, order) {
        (CellKind::Quad, RuleOrder::Standard) => {
            G2.iter().flat_map(|&y| G2.iter().map(move |&x| QuadPoint { xi: [x, y], weight: 0.25 })).collect()
        }
        (CellKind::Quad, RuleOrder::High) => G3
            .iter()
            .flat_map(|&(y, wy)| G3.iter().map(move |&(x, wx)| QuadPoint { xi: [x, y], weight: wx * wy }))
            .collect(),
        (CellKind::Tri, RuleOrder::Standard) => {
            [[1.0 / 6.0, 1.0 / 6.0], [2.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 2.0 / 3.0]]
                .iter()
                .map(|&xi| QuadPoint { xi, weight: 1.0 / 6.0 })
                .collect()
        }
        (CellKind::Tri, RuleOrder::High) => {
            // Dunavant degree 4.
            let (a1, w1) = (0.445_948_490_915_965, 0.223_381_589_678_011);
            let (a2, w2) = (0.091_576_213_509_771, 0.109_951_743_655_322);
            let mut pts = Vec::with_capacity(6);
            for (a, w) in [(a1, w1), (a2, w2)] {
                let b = 1.0 - 2.0 * a;
                for xi in [[a, a], [b, a], [a, b]] {
                    pts.push(QuadPoint { xi, weight: 0.5 * w });
                }
            }
            pts
        }
    }
}

/// Cell rule, optionally composite over `subdivisions²` sub-cells.
pub fn cell_rule(kind: CellKind, order: RuleOrder, subdivisions: usize) -> Vec<QuadPoint> {
    let base = base_rule(kind, order);
    let s = subdivisions.max(1);
    if s == 1 {
        return base;
    }
    let h = 1.0 / s as f64;
    let scale = h * h;
    let mut out = Vec::new();
    match kind {
        CellKind::Quad => {
            for j in 0..s {
                for i in 0..s {
                    for q in &base {
                        out.push(QuadPoint {
                            xi: [(i as f64 + q.xi[0]) * h, (j as f64 + q.xi[1]) * h],
                            weight: q.weight * scale,
                        });
                    }
                }
            }
        }
        CellKind::Tri => {
            for j in 0..s {
                for i in 0..s - j {
                    let (x0, y0) = (i as f64 * h, j as f64 * h);
                    for q in &base {
                        out.push(QuadPoint { xi: [x0 + q.xi[0] * h, y0 + q.xi[1] * h], weight: q.weight * scale });
                    }
                    if i + j + 1 < s {
                        // Inverted sub-triangle with vertices (x0+h,y0), (x0+h,y0+h), (x0,y0+h).
                        for q in &base {
                            out.push(QuadPoint {
                                xi: [x0 + h - q.xi[1] * h, y0 + h - q.xi[0] * h],
                                weight: q.weight * scale,
                            });
                        }
                    }
                }
            }
        }
    }
    out
}
