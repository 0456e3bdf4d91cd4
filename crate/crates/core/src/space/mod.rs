//! The LEPNC space: on each cell, affine functions enriched by one bubble per
//! face.
//!
//! The bubble `φ_{K,σ}` lives on the pyramid `D_{K,σ}`; it is the product of
//! the distances to the two internal sides, scaled to have unit average on
//! `σ`. The nodal functions `φ_{K,i}` are the affine Lagrange functions of
//! three cell vertices `s_i` corrected by bubbles so that their face averages
//! vanish. A field is therefore described by its face averages and by three
//! vertex values per cell.

mod dofs;
mod interpolate;
mod lumping;

use thiserror::Error;

use crate::mesh::{cross, Point, PolytopalMesh, GEOM_TOL};
use crate::quadrature::{
    cell_nodes, face_nodes, segment_rule, triangle_rule, CellNode, QuadratureError, DEFAULT_DEGREE,
};

pub use dofs::{DiscreteField, DofMap, Slot};
pub use lumping::{masslump, MassLumping};

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("cell {0}: no vertex triple with positive area")]
    DegenerateVertexSet(usize),
    #[error("point ({x}, {y}) is outside cell {cell}")]
    PointOutsideCell { cell: usize, x: f64, y: f64 },
    #[error("point ({x}, {y}) is outside the domain")]
    PointOutsideDomain { x: f64, y: f64 },
    #[error("cell {0}: singular Gram matrix")]
    SingularGram(usize),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Per-cell basis data.
#[derive(Clone, Debug)]
pub struct CellBasis {
    /// Local (loop) indices of the chosen vertices `s_0, s_1, s_2`.
    pub vertex_choice: [usize; 3],
    pub s: [Point; 3],
    /// `cross(s_1 - s_0, s_2 - s_0)`; twice the signed area of the triple.
    det: f64,
    /// Bubble scaling `c_{K,σ}` per local face.
    pub bubble_coef: Vec<f64>,
    /// `ψ̄_{K,i,σ}`: average of the affine nodal function `i` on local face `σ`.
    pub psi_bar: Vec<[f64; 3]>,
}

impl CellBasis {
    /// Affine nodal functions at `x`: values and gradients.
    pub fn psi(&self, x: &Point) -> ([f64; 3], [Point; 3]) {
        let [s0, s1, s2] = self.s;
        let d = self.det;
        let v = [
            cross(&(s1 - x), &(s2 - x)) / d,
            cross(&(s2 - x), &(s0 - x)) / d,
            cross(&(s0 - x), &(s1 - x)) / d,
        ];
        let g = |a: &Point, b: &Point| Point::new(a.y - b.y, b.x - a.x) / d;
        (v, [g(&s1, &s2), g(&s2, &s0), g(&s0, &s1)])
    }
}

/// Values and gradients of a cell's local basis at one point, in local order
/// (`φ_{K,0..3}` then `φ_{K,σ}` per face).
#[derive(Clone, Debug)]
pub struct LocalBasis {
    pub values: Vec<f64>,
    pub grads: Vec<Point>,
}

/// Local basis tabulated at the quadrature nodes of one cell.
#[derive(Clone, Debug)]
pub struct CellTable {
    pub n_local: usize,
    pub nodes: Vec<CellNode>,
    values: Vec<f64>,
    grads: Vec<Point>,
}

impl CellTable {
    #[inline]
    pub fn value(&self, q: usize, a: usize) -> f64 {
        self.values[q * self.n_local + a]
    }

    #[inline]
    pub fn grad(&self, q: usize, a: usize) -> Point {
        self.grads[q * self.n_local + a]
    }

    /// Value and gradient at node `q` of the combination with local
    /// coefficients `coef`.
    pub fn combine(&self, q: usize, coef: &[f64]) -> (f64, Point) {
        let mut v = 0.0;
        let mut g = Point::zeros();
        for (a, &c) in coef.iter().enumerate() {
            v += c * self.value(q, a);
            g += self.grad(q, a) * c;
        }
        (v, g)
    }
}

pub struct LepncSpace<'m> {
    pub mesh: &'m PolytopalMesh,
    pub cells: Vec<CellBasis>,
    pub dofs: DofMap,
}

/// Unnormalized bubble of pyramid `(x_K, a, b)`: value and gradient.
fn raw_bubble(pyr: &crate::mesh::Pyramid, x: &Point) -> (f64, Point) {
    let [n1, n2] = pyr.internal_normals;
    let d = pyr.apex - x;
    let f1 = d.dot(&n1).max(0.0);
    let f2 = d.dot(&n2).max(0.0);
    (f1 * f2, -(n1 * f2) - n2 * f1)
}

/// Lexicographically first vertex triple of maximal area (relative ties).
fn choose_vertices(pts: &[Point]) -> ([usize; 3], f64) {
    let n = pts.len();
    let mut best = ([0, 1, 2], 0.0f64);
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let a = cross(&(pts[j] - pts[i]), &(pts[k] - pts[i])).abs();
                if a > best.1 * (1.0 + 1e-12) {
                    best = ([i, j, k], a);
                }
            }
        }
    }
    best
}

/// Builds the LEPNC space of `mesh`.
pub fn build_space(mesh: &PolytopalMesh) -> Result<LepncSpace<'_>, SpaceError> {
    let seg = segment_rule(DEFAULT_DEGREE)?;
    let mut cells = Vec::with_capacity(mesh.n_cells());
    for (c, cell) in mesh.cells.iter().enumerate() {
        let pts: Vec<Point> = cell.vertices.iter().map(|&v| mesh.vertices[v]).collect();
        let (choice, area2) = choose_vertices(&pts);
        if area2 <= GEOM_TOL * cell.diameter * cell.diameter {
            return Err(SpaceError::DegenerateVertexSet(c));
        }
        let s = [pts[choice[0]], pts[choice[1]], pts[choice[2]]];
        let det = cross(&(s[1] - s[0]), &(s[2] - s[0]));
        let mut basis = CellBasis {
            vertex_choice: choice,
            s,
            det,
            bubble_coef: Vec::with_capacity(cell.n_faces()),
            psi_bar: Vec::with_capacity(cell.n_faces()),
        };
        for (k, &f) in cell.faces.iter().enumerate() {
            let pyr = mesh.pyramid(c, k);
            let len = mesh.faces[f].length;
            let mut raw = 0.0;
            let mut avg = [0.0; 3];
            for (x, w) in face_nodes(mesh, f, &seg) {
                raw += w * raw_bubble(&pyr, &x).0;
                let (p, _) = basis.psi(&x);
                for i in 0..3 {
                    avg[i] += w * p[i];
                }
            }
            basis.bubble_coef.push(len / raw);
            basis.psi_bar.push(avg.map(|a| a / len));
        }
        cells.push(basis);
    }
    Ok(LepncSpace {
        mesh,
        cells,
        dofs: DofMap::new(mesh),
    })
}

impl<'m> LepncSpace<'m> {
    pub fn n_local(&self, c: usize) -> usize {
        3 + self.mesh.cells[c].n_faces()
    }

    /// Bubble of local face `k` of cell `c` at `x`, assuming `x` lies in the
    /// pyramid of that face.
    fn bubble_in_pyramid(&self, c: usize, k: usize, x: &Point) -> (f64, Point) {
        let (v, g) = raw_bubble(&self.mesh.pyramid(c, k), x);
        let s = self.cells[c].bubble_coef[k];
        (s * v, g * s)
    }

    /// `φ_{K,σ}` (local face `k` of cell `c`) at `x ∈ K`: value and gradient.
    pub fn eval_bubble(&self, c: usize, k: usize, x: &Point) -> Result<(f64, Point), SpaceError> {
        match self.mesh.locate_pyramid(c, x) {
            None => Err(SpaceError::PointOutsideCell {
                cell: c,
                x: x.x,
                y: x.y,
            }),
            Some(p) if p == k => Ok(self.bubble_in_pyramid(c, k, x)),
            Some(_) => Ok((0.0, Point::zeros())),
        }
    }

    /// Local basis of cell `c` at `x`, which lies in pyramid `p`.
    pub fn local_basis_in(&self, c: usize, p: usize, x: &Point) -> LocalBasis {
        let n = self.n_local(c);
        let cb = &self.cells[c];
        let (psi, dpsi) = cb.psi(x);
        let (b, db) = self.bubble_in_pyramid(c, p, x);
        let mut values = vec![0.0; n];
        let mut grads = vec![Point::zeros(); n];
        for i in 0..3 {
            let pb = cb.psi_bar[p][i];
            values[i] = psi[i] - pb * b;
            grads[i] = dpsi[i] - db * pb;
        }
        values[3 + p] = b;
        grads[3 + p] = db;
        LocalBasis { values, grads }
    }

    /// Local basis of cell `c` at `x ∈ K`.
    pub fn local_basis(&self, c: usize, x: &Point) -> Result<LocalBasis, SpaceError> {
        let p = self
            .mesh
            .locate_pyramid(c, x)
            .ok_or(SpaceError::PointOutsideCell {
                cell: c,
                x: x.x,
                y: x.y,
            })?;
        Ok(self.local_basis_in(c, p, x))
    }

    /// Tabulates the local basis at the nodes of the mapped rule of `degree`.
    pub fn tabulate(&self, c: usize, degree: usize) -> Result<CellTable, SpaceError> {
        let rule = triangle_rule(degree)?;
        let nodes = cell_nodes(self.mesh, c, &rule);
        let n = self.n_local(c);
        let mut values = Vec::with_capacity(n * nodes.len());
        let mut grads = Vec::with_capacity(n * nodes.len());
        for node in &nodes {
            let lb = self.local_basis_in(c, node.pyramid, &node.x);
            values.extend_from_slice(&lb.values);
            grads.extend_from_slice(&lb.grads);
        }
        Ok(CellTable {
            n_local: n,
            nodes,
            values,
            grads,
        })
    }

    /// Local coefficients of `field` on cell `c`, in local basis order.
    pub fn local_coeffs(&self, field: &DiscreteField, c: usize) -> Vec<f64> {
        self.dofs
            .cell_slots(self.mesh, c)
            .iter()
            .map(|&s| field.coeffs[s])
            .collect()
    }

    /// Value and broken gradient of `field` restricted to cell `c`.
    pub fn eval_in_cell(
        &self,
        field: &DiscreteField,
        c: usize,
        x: &Point,
    ) -> Result<(f64, Point), SpaceError> {
        let lb = self.local_basis(c, x)?;
        let coef = self.local_coeffs(field, c);
        let v = lb.values.iter().zip(&coef).map(|(a, b)| a * b).sum();
        let g = lb
            .grads
            .iter()
            .zip(&coef)
            .fold(Point::zeros(), |acc, (g, &b)| acc + g * b);
        Ok((v, g))
    }

    /// Value and broken gradient of `field` at `x`, in the first cell
    /// containing it.
    pub fn eval_field(&self, field: &DiscreteField, x: &Point) -> Result<(f64, Point), SpaceError> {
        let c = self
            .mesh
            .locate_cell(x)
            .ok_or(SpaceError::PointOutsideDomain { x: x.x, y: x.y })?;
        self.eval_in_cell(field, c, x)
    }

    /// `Σ_K ∫_K g(x, v(x), ∇v(x))` with the rule of `degree`.
    pub fn integrate_field(
        &self,
        field: &DiscreteField,
        degree: usize,
        g: impl Fn(&Point, f64, &Point) -> f64,
    ) -> Result<f64, SpaceError> {
        let mut total = 0.0;
        for c in 0..self.mesh.n_cells() {
            let table = self.tabulate(c, degree)?;
            let coef = self.local_coeffs(field, c);
            for (q, node) in table.nodes.iter().enumerate() {
                let (v, dv) = table.combine(q, &coef);
                total += node.weight * g(&node.x, v, &dv);
            }
        }
        Ok(total)
    }

    pub fn l2_norm(&self, field: &DiscreteField) -> f64 {
        self.integrate_field(field, 4, |_, v, _| v * v)
            .expect("degree 4 is supported")
            .sqrt()
    }

    /// `‖∇_M v‖_{L²}`.
    pub fn grad_norm(&self, field: &DiscreteField) -> f64 {
        self.integrate_field(field, 2, |_, _, g| g.norm_squared())
            .expect("degree 2 is supported")
            .sqrt()
    }

    /// `‖v − u‖_{L²}` for a pointwise function `u`.
    pub fn l2_error(&self, field: &DiscreteField, u: impl Fn(&Point) -> f64) -> f64 {
        self.integrate_field(field, DEFAULT_DEGREE, |x, v, _| (v - u(x)).powi(2))
            .expect("default degree is supported")
            .sqrt()
    }

    /// `‖∇_M v − ∇u‖_{L²}`.
    pub fn grad_error(&self, field: &DiscreteField, grad_u: impl Fn(&Point) -> Point) -> f64 {
        self.integrate_field(field, DEFAULT_DEGREE, |x, _, g| {
            (g - grad_u(x)).norm_squared()
        })
        .expect("default degree is supported")
        .sqrt()
    }

    /// Average of `field` on face `f` as seen from side `k` of the face.
    pub fn one_sided_face_average(
        &self,
        field: &DiscreteField,
        f: usize,
        k: usize,
    ) -> Result<f64, SpaceError> {
        let seg = segment_rule(DEFAULT_DEGREE)?;
        let side = &self.mesh.faces[f].sides[k];
        let mut s = 0.0;
        for (x, w) in face_nodes(self.mesh, f, &seg) {
            // The node is on the base of this face's pyramid.
            let lb = self.local_basis_in(side.cell, side.local, &x);
            let coef = self.local_coeffs(field, side.cell);
            s += w * lb.values.iter().zip(&coef).map(|(a, b)| a * b).sum::<f64>();
        }
        Ok(s / self.mesh.faces[f].length)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, gen_cartesian, gen_hexagonal, MeshFamily};
    use crate::quadrature::face_integrate;

    fn unit_square() -> PolytopalMesh {
        gen_cartesian(1).unwrap()
    }

    #[test]
    fn unit_square_bubble_constant_is_twelve() {
        let m = unit_square();
        let s = build_space(&m).unwrap();
        for &c in &s.cells[0].bubble_coef {
            assert!((c - 12.0).abs() < 1e-12, "{c}");
        }
    }

    #[test]
    fn bubble_at_face_midpoint() {
        let m = unit_square();
        let s = build_space(&m).unwrap();
        let (v, _) = s.eval_bubble(0, 0, &Point::new(0.5, 0.0)).unwrap();
        assert!((v - 1.5).abs() < 1e-12);
    }

    #[test]
    fn bubble_vanishes_at_center_and_vertices() {
        let m = gen_hexagonal(4).unwrap();
        let s = build_space(&m).unwrap();
        for c in 0..m.n_cells() {
            for k in 0..m.cells[c].n_faces() {
                assert_eq!(s.eval_bubble(c, k, &m.cells[c].center).unwrap().0, 0.0);
                for &v in &m.cells[c].vertices {
                    assert!(s.eval_bubble(c, k, &m.vertices[v]).unwrap().0.abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn bubble_gradient_matches_finite_differences() {
        let m = gen_hexagonal(3).unwrap();
        let s = build_space(&m).unwrap();
        let c = 4;
        let pyr = m.pyramid(c, 1);
        let x = pyr.map(0.3, 0.25);
        let (_, g) = s.eval_bubble(c, 1, &x).unwrap();
        let h = 1e-6;
        let f = |p: Point| s.eval_bubble(c, 1, &p).unwrap().0;
        let gx = (f(x + Point::new(h, 0.0)) - f(x - Point::new(h, 0.0))) / (2.0 * h);
        let gy = (f(x + Point::new(0.0, h)) - f(x - Point::new(0.0, h))) / (2.0 * h);
        assert!((g - Point::new(gx, gy)).norm() < 1e-6 * g.norm().max(1.0));
    }

    #[test]
    fn outside_point_is_rejected() {
        let m = gen_cartesian(2).unwrap();
        let s = build_space(&m).unwrap();
        assert!(matches!(
            s.eval_bubble(0, 0, &Point::new(0.9, 0.9)),
            Err(SpaceError::PointOutsideCell { .. })
        ));
        let f = DiscreteField::zeros(&s.dofs);
        assert!(matches!(
            s.eval_field(&f, &Point::new(1.5, 0.5)),
            Err(SpaceError::PointOutsideDomain { .. })
        ));
    }

    #[test]
    fn psi_bar_partition_of_unity() {
        for fam in MeshFamily::ALL {
            let m = fam.generate(4).unwrap();
            let s = build_space(&m).unwrap();
            for cb in &s.cells {
                for pb in &cb.psi_bar {
                    assert!((pb.iter().sum::<f64>() - 1.0).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn symmetric_cell_has_equal_bubble_constants() {
        let verts: Vec<Point> = (0..6)
            .map(|k| {
                let t = std::f64::consts::PI / 3.0 * k as f64;
                Point::new(t.cos(), t.sin())
            })
            .collect();
        let m = build_mesh(verts, vec![(0..6).collect()], Some(&[Point::zeros()])).unwrap();
        let s = build_space(&m).unwrap();
        let c0 = s.cells[0].bubble_coef[0];
        for &c in &s.cells[0].bubble_coef {
            assert!((c - c0).abs() < 1e-10 * c0);
        }
    }

    #[test]
    fn nodal_functions_have_zero_face_averages() {
        let m = gen_hexagonal(4).unwrap();
        let s = build_space(&m).unwrap();
        for c in 0..m.n_cells() {
            for (k, &f) in m.cells[c].faces.iter().enumerate() {
                for i in 0..3 {
                    let v = face_integrate(
                        &m,
                        f,
                        |x| s.local_basis_in(c, k, x).values[i],
                        DEFAULT_DEGREE,
                    )
                    .unwrap();
                    assert!(v.abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn vertex_choice_prefers_largest_triangle() {
        // Pentagon with a nearly flat vertex: the triple must avoid it.
        let verts = vec![
            Point::new(0.0, 0.0),
            Point::new(0.5, 0.01),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ];
        let m = build_mesh(verts, vec![(0..5).collect()], None).unwrap();
        let s = build_space(&m).unwrap();
        assert_eq!(s.cells[0].vertex_choice, [0, 2, 3]);
    }
}
