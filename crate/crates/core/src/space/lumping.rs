use super::{DiscreteField, LepncSpace};
use crate::mesh::Point;
use crate::quadrature::DEFAULT_DEGREE;

/// Mass-lumping data for the weight `ϖ`: a measure `|U_a|` and a
/// representative point `x_a` per slot.
///
/// A cell gives `(1 − ϖ)|K|/3` to each of its vertex slots and `ϖ|K|/Card(F_K)`
/// to each of its faces. Region shapes are never built.
#[derive(Clone, Debug)]
pub struct MassLumping {
    pub varpi: f64,
    pub measures: Vec<f64>,
    pub points: Vec<Point>,
}

pub fn masslump(space: &LepncSpace<'_>, varpi: f64) -> MassLumping {
    assert!(
        (0.0..=1.0).contains(&varpi),
        "mass-lumping weight {varpi} outside [0, 1]"
    );
    let mesh = space.mesh;
    let dofs = &space.dofs;
    let mut measures = vec![0.0; dofs.n_slots()];
    let mut points = vec![Point::zeros(); dofs.n_slots()];
    for (c, cell) in mesh.cells.iter().enumerate() {
        for i in 0..3 {
            let s = dofs.cell_slot(c, i);
            measures[s] = (1.0 - varpi) * cell.area / 3.0;
            points[s] = space.cells[c].s[i];
        }
        let share = varpi * cell.area / cell.n_faces() as f64;
        for &f in &cell.faces {
            measures[dofs.face_slot(f)] += share;
        }
    }
    for (f, face) in mesh.faces.iter().enumerate() {
        points[dofs.face_slot(f)] = face.centroid;
    }
    MassLumping {
        varpi,
        measures,
        points,
    }
}

impl MassLumping {
    /// Portion of `|U_a|` contributed by cell `c`, for its local slot `a`.
    pub fn cell_portion(&self, space: &LepncSpace<'_>, c: usize, local: usize) -> f64 {
        let cell = &space.mesh.cells[c];
        if local < 3 {
            (1.0 - self.varpi) * cell.area / 3.0
        } else {
            self.varpi * cell.area / cell.n_faces() as f64
        }
    }

    /// `Σ_a |U_a| v_a w_a` over the free slots.
    pub fn inner(&self, space: &LepncSpace<'_>, v: &DiscreteField, w: &DiscreteField) -> f64 {
        space
            .dofs
            .free_slots()
            .iter()
            .map(|&s| self.measures[s] * v.coeffs[s] * w.coeffs[s])
            .sum()
    }

    /// `‖Π v‖_{L²}` over the free slots.
    pub fn norm(&self, space: &LepncSpace<'_>, v: &DiscreteField) -> f64 {
        self.inner(space, v, v).sqrt()
    }

    /// `‖v − Π v‖_{L²}`. Within a cell the region of slot `a` is taken as a
    /// uniform share `|U_a ∩ K| / |K|` of the whole cell, which makes the value
    /// independent of any region shape.
    pub fn reconstruction_gap(&self, space: &LepncSpace<'_>, v: &DiscreteField) -> f64 {
        let mut total = 0.0;
        for c in 0..space.mesh.n_cells() {
            let table = space
                .tabulate(c, DEFAULT_DEGREE)
                .expect("default degree is supported");
            let coef = space.local_coeffs(v, c);
            let area = space.mesh.cells[c].area;
            let fractions: Vec<f64> = (0..coef.len())
                .map(|a| self.cell_portion(space, c, a) / area)
                .collect();
            for (q, node) in table.nodes.iter().enumerate() {
                let (val, _) = table.combine(q, &coef);
                let local: f64 = coef
                    .iter()
                    .zip(&fractions)
                    .map(|(&va, &t)| t * (val - va).powi(2))
                    .sum();
                total += node.weight * local;
            }
        }
        total.sqrt()
    }

    /// Piecewise-constant reconstruction `Π v` at `x`: the value of the
    /// positive-measure slot of the containing cell whose representative point
    /// is nearest to `x`. Only meant for visualisation.
    pub fn lumped_reconstruct(
        &self,
        space: &LepncSpace<'_>,
        v: &DiscreteField,
        x: &Point,
    ) -> Option<f64> {
        let c = space.mesh.locate_cell(x)?;
        let slots = space.dofs.cell_slots(space.mesh, c);
        slots
            .iter()
            .enumerate()
            .filter(|&(a, _)| self.cell_portion(space, c, a) > 0.0)
            .min_by(|&(_, &s1), &(_, &s2)| {
                let d1 = (self.points[s1] - x).norm();
                let d2 = (self.points[s2] - x).norm();
                d1.total_cmp(&d2)
            })
            .map(|(_, &s)| v.coeffs[s])
    }
}
