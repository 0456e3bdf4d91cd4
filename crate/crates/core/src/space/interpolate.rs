use nalgebra::{Matrix3, Vector3};

use super::{DiscreteField, LepncSpace, SpaceError};
use crate::mesh::Point;
use crate::quadrature::{face_nodes, segment_rule, DEFAULT_DEGREE};

impl<'m> LepncSpace<'m> {
    /// Face averages of `u` on every face, boundary faces included.
    pub fn face_averages(&self, u: &impl Fn(&Point) -> f64) -> Result<Vec<f64>, SpaceError> {
        let seg = segment_rule(DEFAULT_DEGREE)?;
        Ok((0..self.mesh.n_faces())
            .map(|f| {
                let s: f64 = face_nodes(self.mesh, f, &seg)
                    .iter()
                    .map(|(x, w)| w * u(x))
                    .sum();
                s / self.mesh.faces[f].length
            })
            .collect())
    }

    /// The natural interpolator `I_T`: face averages and values at the chosen
    /// cell vertices.
    pub fn interpolate_i(&self, u: impl Fn(&Point) -> f64) -> Result<DiscreteField, SpaceError> {
        let mut field = DiscreteField::zeros(&self.dofs);
        for (f, a) in self.face_averages(&u)?.into_iter().enumerate() {
            field.coeffs[self.dofs.face_slot(f)] = a;
        }
        for (c, cb) in self.cells.iter().enumerate() {
            for i in 0..3 {
                field.coeffs[self.dofs.cell_slot(c, i)] = u(&cb.s[i]);
            }
        }
        Ok(field)
    }

    /// The interpolator `J_T`: face averages, then the `L²(K)` projection of
    /// the remainder onto the nodal functions of each cell.
    pub fn interpolate_j(&self, u: impl Fn(&Point) -> f64) -> Result<DiscreteField, SpaceError> {
        let mut field = DiscreteField::zeros(&self.dofs);
        for (f, a) in self.face_averages(&u)?.into_iter().enumerate() {
            field.coeffs[self.dofs.face_slot(f)] = a;
        }
        for c in 0..self.mesh.n_cells() {
            let table = self.tabulate(c, DEFAULT_DEGREE)?;
            let faces = &self.mesh.cells[c].faces;
            let mut gram = Matrix3::<f64>::zeros();
            let mut rhs = Vector3::<f64>::zeros();
            for (q, node) in table.nodes.iter().enumerate() {
                let mut r = u(&node.x);
                for (k, &f) in faces.iter().enumerate() {
                    r -= field.coeffs[self.dofs.face_slot(f)] * table.value(q, 3 + k);
                }
                for i in 0..3 {
                    let pi = table.value(q, i);
                    rhs[i] += node.weight * r * pi;
                    for j in 0..3 {
                        gram[(i, j)] += node.weight * pi * table.value(q, j);
                    }
                }
            }
            let chol = gram.cholesky().ok_or(SpaceError::SingularGram(c))?;
            let x = chol.solve(&rhs);
            for i in 0..3 {
                field.coeffs[self.dofs.cell_slot(c, i)] = x[i];
            }
        }
        Ok(field)
    }
}

#[cfg(test)]
mod tests {
    use crate::mesh::{MeshFamily, Point};
    use crate::space::build_space;

    #[test]
    fn affine_reproduction() {
        let u = |x: &Point| 0.3 - 1.7 * x.x + 2.2 * x.y;
        let grad = Point::new(-1.7, 2.2);
        for fam in MeshFamily::ALL {
            let m = fam.generate(4).unwrap();
            let s = build_space(&m).unwrap();
            for field in [s.interpolate_i(u).unwrap(), s.interpolate_j(u).unwrap()] {
                for c in 0..m.n_cells() {
                    let x = m.pyramid(c, 0).map(0.2, 0.3);
                    let (v, g) = s.eval_in_cell(&field, c, &x).unwrap();
                    assert!((v - u(&x)).abs() < 1e-12, "{fam}");
                    assert!((g - grad).norm() < 1e-11, "{fam}");
                }
            }
        }
    }

    #[test]
    fn zero_function_gives_zero_field() {
        let m = MeshFamily::Hexagonal.generate(4).unwrap();
        let s = build_space(&m).unwrap();
        assert!(s
            .interpolate_j(|_| 0.0)
            .unwrap()
            .coeffs
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn constant_one() {
        let m = MeshFamily::Kershaw.generate(4).unwrap();
        let s = build_space(&m).unwrap();
        let f = s.interpolate_i(|_| 1.0).unwrap();
        for x in [
            Point::new(0.13, 0.71),
            Point::new(0.5, 0.5),
            Point::new(0.99, 0.01),
        ] {
            let (v, g) = s.eval_field(&f, &x).unwrap();
            assert!((v - 1.0).abs() < 1e-12 && g.norm() < 1e-11);
        }
    }

    #[test]
    fn boundary_slots_vanish_for_zero_trace() {
        let m = MeshFamily::Cartesian.generate(4).unwrap();
        let s = build_space(&m).unwrap();
        let pi = std::f64::consts::PI;
        let f = s
            .interpolate_i(|x| (pi * x.x).sin() * (pi * x.y).sin())
            .unwrap();
        for (k, face) in m.faces.iter().enumerate() {
            if face.is_boundary() {
                assert!(f.coeffs[k].abs() < 1e-15);
            }
        }
    }
}
