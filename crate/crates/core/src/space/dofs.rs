use crate::mesh::PolytopalMesh;

/// Role of a coefficient slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Face(usize),
    Cell(usize, usize),
}

/// Global numbering of the coefficient slots.
///
/// Slot `f` is face `f`, slot `n_faces + 3c + i` is the `i`-th vertex value
/// of cell `c`. Boundary-face slots hold prescribed averages and are never
/// free. Free unknowns list the interior faces first, then the cell slots.
#[derive(Clone, Debug)]
pub struct DofMap {
    n_faces: usize,
    n_cells: usize,
    free_of_slot: Vec<Option<usize>>,
    slot_of_free: Vec<usize>,
    n_free_faces: usize,
}

impl DofMap {
    pub fn new(mesh: &PolytopalMesh) -> Self {
        let n_faces = mesh.n_faces();
        let n_cells = mesh.n_cells();
        let n_slots = n_faces + 3 * n_cells;
        let mut free_of_slot = vec![None; n_slots];
        let mut slot_of_free = Vec::with_capacity(n_slots);
        for f in mesh.interior_faces() {
            free_of_slot[f] = Some(slot_of_free.len());
            slot_of_free.push(f);
        }
        let n_free_faces = slot_of_free.len();
        for s in n_faces..n_slots {
            free_of_slot[s] = Some(slot_of_free.len());
            slot_of_free.push(s);
        }
        DofMap {
            n_faces,
            n_cells,
            free_of_slot,
            slot_of_free,
            n_free_faces,
        }
    }

    pub fn n_slots(&self) -> usize {
        self.free_of_slot.len()
    }

    pub fn n_free(&self) -> usize {
        self.slot_of_free.len()
    }

    /// Number of free face unknowns (= interior faces); they come first.
    pub fn n_free_faces(&self) -> usize {
        self.n_free_faces
    }

    pub fn n_faces(&self) -> usize {
        self.n_faces
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn face_slot(&self, f: usize) -> usize {
        f
    }

    pub fn cell_slot(&self, c: usize, i: usize) -> usize {
        debug_assert!(i < 3);
        self.n_faces + 3 * c + i
    }

    pub fn slot(&self, s: usize) -> Slot {
        if s < self.n_faces {
            Slot::Face(s)
        } else {
            let r = s - self.n_faces;
            Slot::Cell(r / 3, r % 3)
        }
    }

    pub fn free_index(&self, slot: usize) -> Option<usize> {
        self.free_of_slot[slot]
    }

    pub fn is_fixed(&self, slot: usize) -> bool {
        self.free_of_slot[slot].is_none()
    }

    pub fn free_slot(&self, k: usize) -> usize {
        self.slot_of_free[k]
    }

    pub fn free_slots(&self) -> &[usize] {
        &self.slot_of_free
    }

    /// Slots of the local basis of cell `c`, in local order: the three vertex
    /// values, then the faces in loop order.
    pub fn cell_slots(&self, mesh: &PolytopalMesh, c: usize) -> Vec<usize> {
        let mut s = Vec::with_capacity(3 + mesh.cells[c].n_faces());
        s.extend((0..3).map(|i| self.cell_slot(c, i)));
        s.extend(mesh.cells[c].faces.iter().map(|&f| self.face_slot(f)));
        s
    }
}

/// Coefficients over all slots, boundary values included.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteField {
    pub coeffs: Vec<f64>,
}

impl DiscreteField {
    pub fn zeros(dofs: &DofMap) -> Self {
        DiscreteField {
            coeffs: vec![0.0; dofs.n_slots()],
        }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Free coefficients in free-unknown order.
    pub fn free_values(&self, dofs: &DofMap) -> Vec<f64> {
        dofs.free_slots().iter().map(|&s| self.coeffs[s]).collect()
    }

    pub fn set_free_values(&mut self, dofs: &DofMap, x: &[f64]) {
        assert_eq!(x.len(), dofs.n_free());
        for (k, &s) in dofs.free_slots().iter().enumerate() {
            self.coeffs[s] = x[k];
        }
    }

    /// Copy with every fixed slot set to zero.
    pub fn homogeneous_part(&self, dofs: &DofMap) -> Self {
        let mut out = self.clone();
        for (s, v) in out.coeffs.iter_mut().enumerate() {
            if dofs.is_fixed(s) {
                *v = 0.0;
            }
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        DiscreteField {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        DiscreteField {
            coeffs: self.coeffs.iter().map(|v| a * v).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
