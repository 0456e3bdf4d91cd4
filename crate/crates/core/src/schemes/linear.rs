use nalgebra::{DMatrix, DVector, Matrix2};
use rayon::prelude::*;

use super::sparse::{
    assemble_global, solve_spd_matrix, static_condense, CellBlock, Condensed, SolveMethod,
    SparseMatrix,
};
use super::SchemeError;
use crate::mesh::Point;
use crate::quadrature::DEFAULT_DEGREE;
use crate::space::{DiscreteField, DofMap, LepncSpace, MassLumping};

pub type ScalarFn = Box<dyn Fn(&Point) -> f64 + Send + Sync>;
pub type VectorFn = Box<dyn Fn(&Point) -> Point + Send + Sync>;
pub type TensorFn = Box<dyn Fn(&Point) -> Matrix2<f64> + Send + Sync>;

/// `−div(Λ∇u) = f + div F` with `u = g` on the boundary.
pub struct LinearProblem {
    pub lambda: TensorFn,
    /// Declared eigenvalue bounds of `Λ`, checked at the quadrature nodes.
    pub lambda_bounds: (f64, f64),
    pub source: ScalarFn,
    pub flux: VectorFn,
    pub dirichlet: ScalarFn,
}

impl LinearProblem {
    /// `Λ = Id`, `F = 0`, homogeneous boundary values.
    pub fn poisson(source: impl Fn(&Point) -> f64 + Send + Sync + 'static) -> Self {
        LinearProblem {
            lambda: Box::new(|_| Matrix2::identity()),
            lambda_bounds: (1.0, 1.0),
            source: Box::new(source),
            flux: Box::new(|_| Point::zeros()),
            dirichlet: Box::new(|_| 0.0),
        }
    }
}

fn sym_eigenvalues(m: &Matrix2<f64>) -> (f64, f64) {
    let tr = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    let d = 0.5 * (m[(0, 0)] - m[(1, 1)]);
    let r = (d * d + m[(0, 1)] * m[(1, 0)]).max(0.0).sqrt();
    (tr - r, tr + r)
}

/// Assembled linear scheme on the free unknowns.
pub struct SparseSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    /// Values of the fixed (boundary-face) slots.
    pub fixed: Vec<(usize, f64)>,
    pub blocks: Vec<CellBlock>,
    pub n_free_faces: usize,
}

/// Per-cell stiffness `∫_K Λ∇φ_a·∇φ_b`, and the load `∫_K fφ_a − F·∇φ_a`
/// when `load` is set.
pub(crate) fn cell_stiffness(
    space: &LepncSpace<'_>,
    c: usize,
    lambda: &TensorFn,
    bounds: Option<(f64, f64)>,
    load: Option<(&ScalarFn, &VectorFn)>,
) -> Result<(DMatrix<f64>, DVector<f64>), SchemeError> {
    let table = space.tabulate(c, DEFAULT_DEGREE)?;
    let n = table.n_local;
    let mut a = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    let mut flux_grads = vec![Point::zeros(); n];
    for (q, node) in table.nodes.iter().enumerate() {
        let lam = lambda(&node.x);
        if let Some((lo, hi)) = bounds {
            let (e1, e2) = sym_eigenvalues(&lam);
            let slack = 1e-12 * hi.abs().max(1.0);
            if (lam[(0, 1)] - lam[(1, 0)]).abs() > slack || e1 < lo - slack || e2 > hi + slack {
                return Err(SchemeError::InvalidDiffusion(c));
            }
        }
        for i in 0..n {
            flux_grads[i] = lam * table.grad(q, i);
        }
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] += node.weight * flux_grads[j].dot(&table.grad(q, i));
            }
        }
        if let Some((f, flux)) = load {
            let fv = f(&node.x);
            let fl = flux(&node.x);
            for i in 0..n {
                b[i] += node.weight * (fv * table.value(q, i) - fl.dot(&table.grad(q, i)));
            }
        }
    }
    Ok((a, b))
}

/// Moves the fixed columns of a local system to the right-hand side and
/// records free indices.
pub(crate) fn localize(
    dofs: &DofMap,
    slots: &[usize],
    fixed_values: &[f64],
    matrix: DMatrix<f64>,
    mut rhs: DVector<f64>,
) -> CellBlock {
    let free: Vec<Option<usize>> = slots.iter().map(|&s| dofs.free_index(s)).collect();
    for (b, &s) in slots.iter().enumerate() {
        if free[b].is_none() {
            let g = fixed_values[s];
            for a in 0..slots.len() {
                rhs[a] -= matrix[(a, b)] * g;
            }
        }
    }
    CellBlock { free, matrix, rhs }
}

pub(crate) fn check_symmetry(c: usize, a: &DMatrix<f64>) -> Result<(), SchemeError> {
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let asym = (a - a.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(SchemeError::NonSymmetric {
            cell: c,
            asymmetry: asym,
        });
    }
    Ok(())
}

/// Face averages of `g` on the boundary faces, zero elsewhere (slot vector).
pub(crate) fn boundary_values(
    space: &LepncSpace<'_>,
    g: &(dyn Fn(&Point) -> f64 + Sync),
) -> Result<Vec<f64>, SchemeError> {
    let mut v = vec![0.0; space.dofs.n_slots()];
    let avgs = space.face_averages(&|x: &Point| g(x))?;
    for (f, face) in space.mesh.faces.iter().enumerate() {
        if face.is_boundary() {
            v[space.dofs.face_slot(f)] = avgs[f];
        }
    }
    Ok(v)
}

/// Assembles the linear scheme: stiffness and load per cell, boundary-face
/// slots fixed to the face averages of the Dirichlet data.
pub fn assemble_linear(
    space: &LepncSpace<'_>,
    problem: &LinearProblem,
) -> Result<SparseSystem, SchemeError> {
    let dofs = &space.dofs;
    let fixed_values = boundary_values(space, &problem.dirichlet)?;
    let blocks = (0..space.mesh.n_cells())
        .into_par_iter()
        .map(|c| {
            let (a, b) = cell_stiffness(
                space,
                c,
                &problem.lambda,
                Some(problem.lambda_bounds),
                Some((&problem.source, &problem.flux)),
            )?;
            check_symmetry(c, &a)?;
            Ok(localize(
                dofs,
                &dofs.cell_slots(space.mesh, c),
                &fixed_values,
                a,
                b,
            ))
        })
        .collect::<Result<Vec<_>, SchemeError>>()?;
    let (matrix, rhs) = assemble_global(&blocks, dofs.n_free());
    let fixed = (0..dofs.n_slots())
        .filter(|&s| dofs.is_fixed(s))
        .map(|s| (s, fixed_values[s]))
        .collect();
    Ok(SparseSystem {
        matrix,
        rhs,
        fixed,
        blocks,
        n_free_faces: dofs.n_free_faces(),
    })
}

impl SparseSystem {
    pub fn n_free(&self) -> usize {
        self.rhs.len()
    }

    /// Adds a lumped mass `|U_a|` to the diagonal (free slots only).
    pub fn add_lumped_mass(&mut self, space: &LepncSpace<'_>, ml: &MassLumping) {
        for (c, blk) in self.blocks.iter_mut().enumerate() {
            for a in 0..blk.free.len() {
                blk.matrix[(a, a)] += ml.cell_portion(space, c, a);
            }
        }
        let (m, _) = assemble_global(&self.blocks, self.n_free());
        self.matrix = m;
    }

    /// Fills a field from free values plus the fixed slots.
    pub fn field(&self, dofs: &DofMap, free: &[f64]) -> DiscreteField {
        let mut f = DiscreteField::zeros(dofs);
        f.set_free_values(dofs, free);
        for &(s, v) in &self.fixed {
            f.coeffs[s] = v;
        }
        f
    }

    /// Schur complement on the interior faces.
    pub fn condense(&self) -> Result<Condensed, SchemeError> {
        static_condense(&self.blocks, self.n_free(), self.n_free_faces)
    }
}

/// Solves the full free system.
pub fn solve_spd(
    system: &SparseSystem,
    dofs: &DofMap,
    method: SolveMethod,
) -> Result<DiscreteField, SchemeError> {
    let x = solve_spd_matrix(&system.matrix, &system.rhs, method)?;
    Ok(system.field(dofs, &x))
}

/// Solves through static condensation and cell recovery.
pub fn solve_condensed(
    system: &SparseSystem,
    dofs: &DofMap,
    method: SolveMethod,
) -> Result<DiscreteField, SchemeError> {
    let cond = system.condense()?;
    let xf = solve_spd_matrix(&cond.matrix, &cond.rhs, method)?;
    Ok(system.field(dofs, &cond.recover(&xf)))
}
