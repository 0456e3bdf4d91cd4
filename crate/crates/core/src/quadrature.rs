//! Quadrature on triangles and segments, and their use on mesh cells
//! (through the pyramid subdivision) and faces.

use thiserror::Error;

use crate::mesh::{Point, PolytopalMesh};

/// Default degree for cell and face integrals.
pub const DEFAULT_DEGREE: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("no rule of degree {degree} (supported: {min}..={max})")]
    UnsupportedDegree {
        degree: usize,
        min: usize,
        max: usize,
    },
}

/// Points and positive weights on a reference element. Triangle rules live
/// on `(0,0), (1,0), (0,1)` (weights sum to 1/2), segment rules on `[0, 1]`.
#[derive(Clone, Debug)]
pub struct QuadratureRule<const D: usize> {
    pub points: Vec<[f64; D]>,
    pub weights: Vec<f64>,
    pub exact_degree: usize,
}

pub type TriangleRule = QuadratureRule<2>;
pub type SegmentRule = QuadratureRule<1>;

impl<const D: usize> QuadratureRule<D> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64; D], f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p1 = z;
                p0 = 1.0;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            z = 0.0;
            dp = 1.0;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Gauss rule on `[0, 1]` with `⌈(degree + 1)/2⌉` points.
pub fn segment_rule(degree: usize) -> Result<SegmentRule, QuadratureError> {
    if degree > 19 {
        return Err(QuadratureError::UnsupportedDegree {
            degree,
            min: 0,
            max: 19,
        });
    }
    let n = (degree + 2) / 2;
    let (x, w) = gauss_legendre(n);
    Ok(QuadratureRule {
        points: x.iter().map(|&t| [0.5 * (t + 1.0)]).collect(),
        weights: w.iter().map(|&wi| 0.5 * wi).collect(),
        exact_degree: 2 * n - 1,
    })
}

/// Triangle rule exact for total degree `degree` (1 to 10).
///
/// Degrees 1, 2 and 3–5 use the symmetric centroid, three-point and
/// seven-point (Radon) rules; higher degrees use a collapsed Gauss product.
pub fn triangle_rule(degree: usize) -> Result<TriangleRule, QuadratureError> {
    match degree {
        1 => Ok(QuadratureRule {
            points: vec![[1.0 / 3.0, 1.0 / 3.0]],
            weights: vec![0.5],
            exact_degree: 1,
        }),
        2 => {
            let (a, b) = (1.0 / 6.0, 2.0 / 3.0);
            Ok(QuadratureRule {
                points: vec![[a, a], [b, a], [a, b]],
                weights: vec![1.0 / 6.0; 3],
                exact_degree: 2,
            })
        }
        3..=5 => {
            let s = 15f64.sqrt();
            let a1 = (6.0 - s) / 21.0;
            let a2 = (6.0 + s) / 21.0;
            let w1 = (155.0 - s) / 2400.0;
            let w2 = (155.0 + s) / 2400.0;
            let b1 = 1.0 - 2.0 * a1;
            let b2 = 1.0 - 2.0 * a2;
            Ok(QuadratureRule {
                points: vec![
                    [1.0 / 3.0, 1.0 / 3.0],
                    [a1, a1],
                    [b1, a1],
                    [a1, b1],
                    [a2, a2],
                    [b2, a2],
                    [a2, b2],
                ],
                weights: vec![9.0 / 80.0, w1, w1, w1, w2, w2, w2],
                exact_degree: 5,
            })
        }
        6..=10 => {
            // (ξ, η) ↦ (ξ(1-η), η) with Jacobian 1-η, which raises the
            // η-degree by one.
            let n = (degree + 3) / 2;
            let (x, w) = gauss_legendre(n);
            let mut points = Vec::with_capacity(n * n);
            let mut weights = Vec::with_capacity(n * n);
            for (&xe, &we) in x.iter().zip(&w) {
                let eta = 0.5 * (xe + 1.0);
                for (&xx, &wx) in x.iter().zip(&w) {
                    let xi = 0.5 * (xx + 1.0);
                    points.push([xi * (1.0 - eta), eta]);
                    weights.push(0.25 * we * wx * (1.0 - eta));
                }
            }
            Ok(QuadratureRule {
                points,
                weights,
                exact_degree: 2 * n - 2,
            })
        }
        _ => Err(QuadratureError::UnsupportedDegree {
            degree,
            min: 1,
            max: 10,
        }),
    }
}

/// One cell quadrature node: the pyramid it belongs to, its position and weight.
#[derive(Clone, Copy, Debug)]
pub struct CellNode {
    pub pyramid: usize,
    pub x: Point,
    pub weight: f64,
}

/// Maps a triangle rule onto every pyramid `D_{K,σ}` of cell `c`.
pub fn cell_nodes(mesh: &PolytopalMesh, c: usize, rule: &TriangleRule) -> Vec<CellNode> {
    let mut nodes = Vec::with_capacity(rule.len() * mesh.cells[c].n_faces());
    for (k, pyr) in mesh.pyramids(c).enumerate() {
        let jac = 2.0 * pyr.area;
        for (p, w) in rule.iter() {
            nodes.push(CellNode {
                pyramid: k,
                x: pyr.map(p[0], p[1]),
                weight: w * jac,
            });
        }
    }
    nodes
}

/// Maps a segment rule onto face `f`; returns `(point, weight)` pairs.
pub fn face_nodes(mesh: &PolytopalMesh, f: usize, rule: &SegmentRule) -> Vec<(Point, f64)> {
    let face = &mesh.faces[f];
    let a = mesh.vertices[face.vertices[0]];
    let b = mesh.vertices[face.vertices[1]];
    rule.iter()
        .map(|(t, w)| (a + (b - a) * t[0], w * face.length))
        .collect()
}

/// `∫_K f` by summing the mapped triangle rule over the pyramids of `K`.
pub fn cell_integrate(
    mesh: &PolytopalMesh,
    c: usize,
    f: impl Fn(&Point) -> f64,
    degree: usize,
) -> Result<f64, QuadratureError> {
    let rule = triangle_rule(degree)?;
    Ok(cell_nodes(mesh, c, &rule)
        .iter()
        .map(|n| n.weight * f(&n.x))
        .sum())
}

/// `∫_σ f` with the mapped Gauss rule.
pub fn face_integrate(
    mesh: &PolytopalMesh,
    face: usize,
    f: impl Fn(&Point) -> f64,
    degree: usize,
) -> Result<f64, QuadratureError> {
    let rule = segment_rule(degree)?;
    Ok(face_nodes(mesh, face, &rule)
        .iter()
        .map(|(x, w)| w * f(x))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, gen_cartesian};
    use proptest::prelude::*;

    /// ∫ x^a y^b over the reference triangle = a! b! / (a + b + 2)!.
    fn monomial_exact(a: u32, b: u32) -> f64 {
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        fact(a) * fact(b) / fact(a + b + 2)
    }

    #[test]
    fn triangle_rules_are_exact() {
        for deg in 1..=10 {
            let rule = triangle_rule(deg).unwrap();
            assert!(rule.exact_degree >= deg);
            assert!(rule.weights.iter().all(|&w| w > 0.0));
            assert!((rule.weights.iter().sum::<f64>() - 0.5).abs() < 1e-15);
            for a in 0..=deg as u32 {
                for b in 0..=(deg as u32 - a) {
                    let q: f64 = rule
                        .iter()
                        .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                        .sum();
                    let e = monomial_exact(a, b);
                    assert!(
                        ((q - e) / e).abs() < 1e-13,
                        "deg {deg}: x^{a} y^{b}: {q} vs {e}"
                    );
                }
            }
        }
    }

    #[test]
    fn unsupported_degrees() {
        assert!(triangle_rule(0).is_err());
        assert!(triangle_rule(11).is_err());
        assert!(segment_rule(20).is_err());
    }

    #[test]
    fn centroid_rule() {
        let r = triangle_rule(1).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.weights[0], 0.5);
    }

    #[test]
    fn xy_on_reference_triangle() {
        for deg in 2..=10 {
            let r = triangle_rule(deg).unwrap();
            let q: f64 = r.iter().map(|(p, w)| w * p[0] * p[1]).sum();
            assert!((q - 1.0 / 24.0).abs() < 1e-15);
        }
    }

    #[test]
    fn segment_rules_are_exact() {
        for deg in 0..=19 {
            let r = segment_rule(deg).unwrap();
            assert_eq!(r.len(), deg / 2 + 1);
            for p in 0..=deg as i32 {
                let q: f64 = r.iter().map(|(t, w)| w * t[0].powi(p)).sum();
                let e = 1.0 / (p as f64 + 1.0);
                assert!(((q - e) / e).abs() < 1e-13, "deg {deg}, x^{p}");
            }
        }
        let r = segment_rule(3).unwrap();
        assert!((r.iter().map(|(t, w)| w * t[0].powi(3)).sum::<f64>() - 0.25).abs() < 1e-15);
        let r = segment_rule(6).unwrap();
        let q: f64 = r.iter().map(|(t, w)| w * t[0].powi(5) * (1.0 - t[0])).sum();
        assert!((q - 1.0 / 42.0).abs() < 1e-15);
    }

    #[test]
    fn cell_integrals() {
        let m = gen_cartesian(1).unwrap();
        assert!((cell_integrate(&m, 0, |_| 1.0, 6).unwrap() - 1.0).abs() < 1e-13);
        assert!((cell_integrate(&m, 0, |x| x.x, 6).unwrap() - 0.5).abs() < 1e-14);

        let m = gen_cartesian(8).unwrap();
        let pi = std::f64::consts::PI;
        let total: f64 = (0..m.n_cells())
            .map(|c| cell_integrate(&m, c, |x| (pi * x.x).sin() * (pi * x.y).sin(), 6).unwrap())
            .sum();
        assert!((total - 4.0 / (pi * pi)).abs() < 1e-6);
    }

    #[test]
    fn cell_integral_is_sum_over_pyramids() {
        let m = crate::mesh::gen_hexagonal(3).unwrap();
        let f = |x: &Point| (x.x * 3.0).exp() * x.y;
        let rule = triangle_rule(6).unwrap();
        for c in 0..m.n_cells() {
            let whole = cell_integrate(&m, c, f, 6).unwrap();
            let parts: f64 = m
                .pyramids(c)
                .map(|p| {
                    rule.iter()
                        .map(|(q, w)| w * 2.0 * p.area * f(&p.map(q[0], q[1])))
                        .sum::<f64>()
                })
                .sum();
            assert!((whole - parts).abs() <= 1e-15 * whole.abs().max(1.0));
        }
    }

    #[test]
    fn face_integrals() {
        let v = vec![
            Point::new(0.0, 0.0),
            Point::new(3.0, 4.0),
            Point::new(-4.0, 3.0),
        ];
        let m = build_mesh(v, vec![vec![0, 1, 2]], None).unwrap();
        // Face 0 runs from (0,0) to (3,4), length 5; t = arclength.
        let len = 5.0;
        assert!((face_integrate(&m, 0, |_| 1.0, 6).unwrap() - len).abs() < 1e-14);
        let t = |x: &Point| x.norm();
        assert!((face_integrate(&m, 0, t, 6).unwrap() - len * len / 2.0).abs() < 1e-13);
        let quad = |x: &Point| {
            let s = x.norm() / len;
            3.0 * s * s - s + 2.0
        };
        let exact = len * (1.0 - 0.5 + 2.0);
        assert!((face_integrate(&m, 0, quad, 2).unwrap() - exact).abs() < 1e-13);
    }

    proptest! {
        /// ∫_T L^k for affine L equals 2|T| k!/(k+2)! times the complete
        /// homogeneous symmetric polynomial of the vertex values.
        #[test]
        fn mapped_triangle_exactness(
            ax in -2.0f64..2.0, ay in -2.0f64..2.0,
            bx in -2.0f64..2.0, by in -2.0f64..2.0,
            cx in -2.0f64..2.0, cy in -2.0f64..2.0,
            al in -1.0f64..1.0, be in -1.0f64..1.0, ga in -1.0f64..1.0,
            deg in 1usize..=10,
        ) {
            let a = Point::new(ax, ay);
            let b = Point::new(bx, by);
            let c = Point::new(cx, cy);
            let det = crate::mesh::cross(&(b - a), &(c - a));
            prop_assume!(det.abs() > 1e-2);
            let lin = |x: &Point| al * x.x + be * x.y + ga;
            let (la, lb, lc) = (lin(&a), lin(&b), lin(&c));
            let k = deg as i32;
            let mut h = 0.0;
            for i in 0..=k {
                for j in 0..=(k - i) {
                    h += la.powi(i) * lb.powi(j) * lc.powi(k - i - j);
                }
            }
            let fact = |n: i32| (1..=n).map(f64::from).product::<f64>();
            let exact = det.abs() * fact(k) / fact(k + 2) * h;
            let rule = triangle_rule(deg).unwrap();
            let val: f64 = rule.iter()
                .map(|(r, w)| {
                    let x = a + (b - a) * r[0] + (c - a) * r[1];
                    w * det.abs() * lin(&x).powi(k)
                })
                .sum();
            let scale = det.abs() * (la.abs().max(lb.abs()).max(lc.abs())).powi(k).max(1e-300);
            prop_assert!((val - exact).abs() <= 1e-12 * scale.max(exact.abs()));
        }
    }
}
