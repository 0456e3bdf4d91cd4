//! Global assembly from cell blocks, static condensation and sparse solves.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use faer::Side;
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use super::SchemeError;

/// Local contribution of one cell.
///
/// `free[a]` is the free index of local slot `a` (`None` for fixed slots).
/// Contributions of fixed slots have already been moved into `rhs`.
#[derive(Clone, Debug)]
pub struct CellBlock {
    pub free: Vec<Option<usize>>,
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

pub type SparseMatrix = SparseColMat<usize, f64>;

/// Sums the free-free parts of the blocks into a sparse matrix and vector.
pub fn assemble_global(blocks: &[CellBlock], n: usize) -> (SparseMatrix, Vec<f64>) {
    let mut trip = Vec::new();
    let mut rhs = vec![0.0; n];
    for b in blocks {
        for (a, fa) in b.free.iter().enumerate() {
            let Some(i) = *fa else { continue };
            rhs[i] += b.rhs[a];
            for (c, fc) in b.free.iter().enumerate() {
                if let Some(j) = *fc {
                    trip.push(Triplet::new(i, j, b.matrix[(a, c)]));
                }
            }
        }
    }
    let m = SparseColMat::try_new_from_triplets(n, n, &trip).expect("indices are in range");
    (m, rhs)
}

pub fn matvec(a: &SparseMatrix, x: &[f64]) -> Vec<f64> {
    let r = a.as_ref();
    let mut y = vec![0.0; r.nrows()];
    for j in 0..r.ncols() {
        let xj = x[j];
        for (i, v) in r.row_idx_of_col(j).zip(r.val_of_col(j)) {
            y[i] += v * xj;
        }
    }
    y
}

pub fn diagonal(a: &SparseMatrix) -> Vec<f64> {
    let r = a.as_ref();
    let mut d = vec![0.0; r.nrows()];
    for j in 0..r.ncols() {
        for (i, v) in r.row_idx_of_col(j).zip(r.val_of_col(j)) {
            if i == j {
                d[i] += v;
            }
        }
    }
    d
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// How the free system is solved.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SolveMethod {
    /// Sparse Cholesky (symmetric) or LU (general).
    Direct,
    /// Jacobi-preconditioned conjugate gradient, stopped at the given relative
    /// residual.
    Cg { rel_tol: f64, max_iter: usize },
}

impl SolveMethod {
    pub fn cg() -> Self {
        SolveMethod::Cg {
            rel_tol: 1e-12,
            max_iter: 100_000,
        }
    }
}

/// Solves a symmetric positive-definite system.
pub fn solve_spd_matrix(
    a: &SparseMatrix,
    b: &[f64],
    method: SolveMethod,
) -> Result<Vec<f64>, SchemeError> {
    if b.is_empty() {
        return Ok(Vec::new());
    }
    match method {
        SolveMethod::Direct => {
            let chol = a
                .sp_cholesky(Side::Lower)
                .map_err(|e| SchemeError::SolverBreakdown(format!("sparse Cholesky: {e:?}")))?;
            let x = chol.solve(Col::<f64>::from_fn(b.len(), |i| b[i]));
            Ok((0..b.len()).map(|i| x[i]).collect())
        }
        SolveMethod::Cg { rel_tol, max_iter } => cg(a, b, rel_tol, max_iter),
    }
}

/// Solves a general square system by sparse LU.
pub fn solve_general(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>, SchemeError> {
    if b.is_empty() {
        return Ok(Vec::new());
    }
    let lu = a
        .sp_lu()
        .map_err(|e| SchemeError::SolverBreakdown(format!("sparse LU: {e:?}")))?;
    let x = lu.solve(Col::<f64>::from_fn(b.len(), |i| b[i]));
    let x: Vec<f64> = (0..b.len()).map(|i| x[i]).collect();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SchemeError::SolverBreakdown(
            "sparse LU produced non-finite values".into(),
        ));
    }
    Ok(x)
}

fn cg(a: &SparseMatrix, b: &[f64], rel_tol: f64, max_iter: usize) -> Result<Vec<f64>, SchemeError> {
    let n = b.len();
    let dinv: Vec<f64> = diagonal(a)
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let bn = norm(b);
    let mut x = vec![0.0; n];
    if bn == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&dinv).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..max_iter {
        let ap = matvec(a, &p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(SchemeError::SolverBreakdown(format!(
                "CG: non-positive curvature {pap}"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm(&r) <= rel_tol * bn {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * dinv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(SchemeError::SolverBreakdown(format!(
        "CG: no convergence in {max_iter} iterations"
    )))
}

/// Cell data needed to recover the cell unknowns after a condensed solve.
#[derive(Clone, Debug)]
struct Recovery {
    cell_free: [usize; 3],
    /// Free face indices of the block, with their local positions.
    faces: Vec<(usize, usize)>,
    inv_cc: Matrix3<f64>,
    a_cf: DMatrix<f64>,
    b_c: Vector3<f64>,
}

/// Face-only system obtained by eliminating the three cell unknowns of every
/// cell.
#[derive(Clone, Debug)]
pub struct Condensed {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    n_free: usize,
    recovery: Vec<Recovery>,
}

impl Condensed {
    pub fn n_faces(&self) -> usize {
        self.rhs.len()
    }

    /// Full free vector (faces then cells) from the face unknowns.
    pub fn recover(&self, x_faces: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n_free];
        x[..x_faces.len()].copy_from_slice(x_faces);
        for r in &self.recovery {
            let mut b = r.b_c;
            for (k, &(fi, _)) in r.faces.iter().enumerate() {
                for i in 0..3 {
                    b[i] -= r.a_cf[(i, k)] * x_faces[fi];
                }
            }
            let xc = r.inv_cc * b;
            for i in 0..3 {
                x[r.cell_free[i]] = xc[i];
            }
        }
        x
    }
}

/// Schur complement on the free face unknowns. Blocks must list the three
/// cell slots first; cell unknowns must be numbered after all face unknowns.
pub fn static_condense(
    blocks: &[CellBlock],
    n_free: usize,
    n_free_faces: usize,
) -> Result<Condensed, SchemeError> {
    let mut trip = Vec::new();
    let mut rhs = vec![0.0; n_free_faces];
    let mut recovery = Vec::with_capacity(blocks.len());
    for (c, blk) in blocks.iter().enumerate() {
        let cell_free = [0, 1, 2].map(|i| blk.free[i].expect("cell slots are free"));
        let faces: Vec<(usize, usize)> = blk
            .free
            .iter()
            .enumerate()
            .skip(3)
            .filter_map(|(a, f)| f.map(|fi| (fi, a)))
            .collect();
        let a_cc = Matrix3::from_fn(|i, j| blk.matrix[(i, j)]);
        let inv_cc = a_cc
            .try_inverse()
            .ok_or(SchemeError::SingularCellBlock(c))?;
        if !inv_cc.iter().all(|v| v.is_finite()) {
            return Err(SchemeError::SingularCellBlock(c));
        }
        let nf = faces.len();
        let a_cf = DMatrix::from_fn(3, nf, |i, k| blk.matrix[(i, faces[k].1)]);
        let a_fc = DMatrix::from_fn(nf, 3, |k, j| blk.matrix[(faces[k].1, j)]);
        let b_c = Vector3::from_fn(|i, _| blk.rhs[i]);
        let inv = DMatrix::from_fn(3, 3, |i, j| inv_cc[(i, j)]);
        let t = &a_fc * &inv;
        let s = DMatrix::from_fn(nf, nf, |k, l| blk.matrix[(faces[k].1, faces[l].1)]) - &t * &a_cf;
        let bc = DVector::from_fn(3, |i, _| b_c[i]);
        let g = DVector::from_fn(nf, |k, _| blk.rhs[faces[k].1]) - &t * bc;
        for k in 0..nf {
            rhs[faces[k].0] += g[k];
            for l in 0..nf {
                trip.push(Triplet::new(faces[k].0, faces[l].0, s[(k, l)]));
            }
        }
        recovery.push(Recovery {
            cell_free,
            faces,
            inv_cc,
            a_cf,
            b_c,
        });
    }
    let matrix = SparseColMat::try_new_from_triplets(n_free_faces, n_free_faces, &trip)
        .expect("indices are in range");
    Ok(Condensed {
        matrix,
        rhs,
        n_free,
        recovery,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push(Triplet::new(i, i, 2.0));
            if i + 1 < n {
                t.push(Triplet::new(i, i + 1, -1.0));
                t.push(Triplet::new(i + 1, i, -1.0));
            }
        }
        SparseColMat::try_new_from_triplets(n, n, &t).unwrap()
    }

    #[test]
    fn cg_matches_direct() {
        let a = laplacian_1d(50);
        let b: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let x1 = solve_spd_matrix(&a, &b, SolveMethod::Direct).unwrap();
        let x2 = solve_spd_matrix(&a, &b, SolveMethod::cg()).unwrap();
        for (p, q) in x1.iter().zip(&x2) {
            assert!((p - q).abs() < 1e-9);
        }
        let r: Vec<f64> = matvec(&a, &x1).iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(norm(&r) <= 1e-12 * norm(&b));
    }

    #[test]
    fn indefinite_matrix_breaks_cholesky() {
        let t = [Triplet::new(0, 0, 1.0), Triplet::new(1, 1, -1.0)];
        let a = SparseColMat::try_new_from_triplets(2, 2, &t).unwrap();
        assert!(matches!(
            solve_spd_matrix(&a, &[1.0, 1.0], SolveMethod::Direct),
            Err(SchemeError::SolverBreakdown(_))
        ));
    }

    #[test]
    fn lu_solves_nonsymmetric() {
        let t = [
            Triplet::new(0, 0, 2.0),
            Triplet::new(0, 1, 1.0),
            Triplet::new(1, 1, 3.0),
        ];
        let a = SparseColMat::try_new_from_triplets(2, 2, &t).unwrap();
        let x = solve_general(&a, &[4.0, 3.0]).unwrap();
        assert!((x[0] - 1.5).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn empty_system() {
        let a = SparseColMat::try_new_from_triplets(0, 0, &[]).unwrap();
        assert!(solve_spd_matrix(&a, &[], SolveMethod::Direct)
            .unwrap()
            .is_empty());
    }
}
