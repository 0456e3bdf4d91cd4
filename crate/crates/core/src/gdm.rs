//! Gradient-discretisation quality measures of the LEPNC space: discrete
//! Poincaré constant `C_D`, interpolation error `S_D` and conformity defect
//! `W_D`, all over the free (zero-boundary) unknowns.

use faer::prelude::*;
use faer::sparse::linalg::solvers::Llt;
use faer::Side;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::mesh::Point;
use crate::quadrature::DEFAULT_DEGREE;
use crate::schemes::sparse::{assemble_global, matvec};
use crate::schemes::{CellBlock, SchemeError, SparseMatrix};
use crate::space::{masslump, DiscreteField, LepncSpace, MassLumping, SpaceError};

#[derive(Debug, Error)]
pub enum GdmError {
    #[error("power iteration did not converge in {0} steps")]
    EigenFailure(usize),
    #[error("solver breakdown: {0}")]
    SolverBreakdown(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

impl From<SchemeError> for GdmError {
    fn from(e: SchemeError) -> Self {
        GdmError::SolverBreakdown(e.to_string())
    }
}

/// Function reconstruction `Π_D`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Reconstruction {
    /// `Π_D v = v`.
    Identity,
    /// Piecewise constant on the lumping regions of weight `varpi`. Inside a
    /// cell each region is spread uniformly, as in
    /// [`MassLumping::reconstruction_gap`].
    Lumped { varpi: f64 },
}

/// Mass and gradient Gram matrices over the free unknowns.
pub struct GdMatrices {
    pub m: SparseMatrix,
    pub g: SparseMatrix,
    pub lumping: Option<MassLumping>,
}

fn free_block(space: &LepncSpace<'_>, c: usize, matrix: DMatrix<f64>) -> CellBlock {
    let free = space
        .dofs
        .cell_slots(space.mesh, c)
        .iter()
        .map(|&s| space.dofs.free_index(s))
        .collect();
    let n = matrix.nrows();
    CellBlock {
        free,
        matrix,
        rhs: DVector::zeros(n),
    }
}

/// Cell-wise `∫ Π χ_a · p + ∇χ_a · q` for every free `a`, where `p` and `q`
/// are evaluated at the quadrature nodes.
fn load(
    space: &LepncSpace<'_>,
    lumping: Option<&MassLumping>,
    p: impl Fn(&Point) -> f64 + Sync,
    q: impl Fn(&Point) -> Point + Sync,
) -> Result<Vec<f64>, GdmError> {
    let blocks = (0..space.mesh.n_cells())
        .into_par_iter()
        .map(|c| {
            let table = space.tabulate(c, DEFAULT_DEGREE)?;
            let n = table.n_local;
            let mut b = DVector::zeros(n);
            let mut int_p = 0.0;
            for (k, node) in table.nodes.iter().enumerate() {
                let pv = p(&node.x);
                let qv = q(&node.x);
                int_p += node.weight * pv;
                for a in 0..n {
                    let mass = if lumping.is_some() {
                        0.0
                    } else {
                        pv * table.value(k, a)
                    };
                    b[a] += node.weight * (mass + qv.dot(&table.grad(k, a)));
                }
            }
            if let Some(ml) = lumping {
                let area = space.mesh.cells[c].area;
                for a in 0..n {
                    b[a] += ml.cell_portion(space, c, a) / area * int_p;
                }
            }
            let mut block = free_block(space, c, DMatrix::zeros(n, n));
            block.rhs = b;
            Ok(block)
        })
        .collect::<Result<Vec<_>, GdmError>>()?;
    Ok(assemble_global(&blocks, space.dofs.n_free()).1)
}

impl GdMatrices {
    pub fn assemble(space: &LepncSpace<'_>, recon: Reconstruction) -> Result<Self, GdmError> {
        let n = space.dofs.n_free();
        let local = (0..space.mesh.n_cells())
            .into_par_iter()
            .map(|c| {
                let table = space.tabulate(c, DEFAULT_DEGREE)?;
                let k = table.n_local;
                let mut g = DMatrix::zeros(k, k);
                let mut m = DMatrix::zeros(k, k);
                for (q, node) in table.nodes.iter().enumerate() {
                    for a in 0..k {
                        for b in 0..k {
                            g[(a, b)] += node.weight * table.grad(q, a).dot(&table.grad(q, b));
                            m[(a, b)] += node.weight * table.value(q, a) * table.value(q, b);
                        }
                    }
                }
                Ok((free_block(space, c, g), free_block(space, c, m)))
            })
            .collect::<Result<Vec<_>, GdmError>>()?;
        let (g_blocks, m_blocks): (Vec<_>, Vec<_>) = local.into_iter().unzip();
        let g = assemble_global(&g_blocks, n).0;
        let (m, lumping) = match recon {
            Reconstruction::Identity => (assemble_global(&m_blocks, n).0, None),
            Reconstruction::Lumped { varpi } => {
                let ml = masslump(space, varpi);
                let trip: Vec<_> = (0..n)
                    .map(|i| faer::sparse::Triplet::new(i, i, ml.measures[space.dofs.free_slot(i)]))
                    .collect();
                let m =
                    SparseMatrix::try_new_from_triplets(n, n, &trip).expect("indices are in range");
                (m, Some(ml))
            }
        };
        Ok(GdMatrices { m, g, lumping })
    }

    pub fn n_free(&self) -> usize {
        self.g.nrows()
    }
}

struct Factor(Llt<usize, f64>);

impl Factor {
    fn new(a: &SparseMatrix) -> Result<Self, GdmError> {
        a.sp_cholesky(Side::Lower)
            .map(Factor)
            .map_err(|e| GdmError::SolverBreakdown(format!("sparse Cholesky: {e:?}")))
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let x = self.0.solve(Col::<f64>::from_fn(b.len(), |i| b[i]));
        (0..b.len()).map(|i| x[i]).collect()
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub const EIGEN_TOL: f64 = 1e-8;
const EIGEN_MAX_ITER: usize = 100_000;

/// Largest `λ` with `M v = λ G v`, by power iteration on `G⁻¹M` from the
/// all-ones vector, stopped when the Rayleigh quotient changes by less than
/// [`EIGEN_TOL`] relatively.
pub fn largest_generalized_eigenvalue(g: &SparseMatrix, m: &SparseMatrix) -> Result<f64, GdmError> {
    let n = g.nrows();
    if n == 0 {
        return Err(GdmError::EigenFailure(0));
    }
    let chol = Factor::new(g)?;
    let mut v = vec![1.0; n];
    let mut lambda = f64::NAN;
    for it in 1..=EIGEN_MAX_ITER {
        let w = chol.solve(&matvec(m, &v));
        let gw = matvec(g, &w);
        let wgw = dot(&w, &gw);
        if wgw.is_nan() || wgw <= 0.0 {
            return Err(GdmError::EigenFailure(it));
        }
        let next = dot(&w, &matvec(m, &w)) / wgw;
        let scale = wgw.sqrt();
        v = w.iter().map(|x| x / scale).collect();
        if (next - lambda).abs() <= EIGEN_TOL * next.abs() {
            return Ok(next);
        }
        lambda = next;
    }
    Err(GdmError::EigenFailure(EIGEN_MAX_ITER))
}

/// `C_D = √λ_max(G⁻¹M)`.
pub fn poincare_cd(space: &LepncSpace<'_>, recon: Reconstruction) -> Result<f64, GdmError> {
    let mats = GdMatrices::assemble(space, recon)?;
    Ok(largest_generalized_eigenvalue(&mats.g, &mats.m)?.sqrt())
}

/// Estimate of the smallest eigenvalue of `G`, from power iteration on `G⁻¹`.
pub fn gram_min_eigenvalue(space: &LepncSpace<'_>) -> Result<f64, GdmError> {
    let mats = GdMatrices::assemble(space, Reconstruction::Identity)?;
    let n = mats.n_free();
    let id = SparseMatrix::try_new_from_triplets(
        n,
        n,
        &(0..n)
            .map(|i| faer::sparse::Triplet::new(i, i, 1.0))
            .collect::<Vec<_>>(),
    )
    .expect("indices are in range");
    Ok(1.0 / largest_generalized_eigenvalue(&mats.g, &id)?)
}

/// Components of the interpolation error at the minimiser of the squared
/// surrogate `‖v − φ‖² + ‖∇_M v − ∇φ‖²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Consistency {
    pub l2: f64,
    pub grad: f64,
}

impl Consistency {
    /// `‖v − φ‖ + ‖∇_M v − ∇φ‖`. Bounds `S_D(φ)` from above, and from below
    /// after division by `√2`.
    pub fn value(&self) -> f64 {
        self.l2 + self.grad
    }
}

/// `S_D(φ)` for the identity reconstruction, via `(M + G) v = r`.
pub fn consistency_sd(
    space: &LepncSpace<'_>,
    phi: impl Fn(&Point) -> f64 + Sync,
    grad_phi: impl Fn(&Point) -> Point + Sync,
) -> Result<Consistency, GdmError> {
    let mats = GdMatrices::assemble(space, Reconstruction::Identity)?;
    let r = load(space, None, &phi, &grad_phi)?;
    let a = &mats.m + &mats.g;
    let v = Factor::new(&a)?.solve(&r);
    let mut field = DiscreteField::zeros(&space.dofs);
    field.set_free_values(&space.dofs, &v);
    Ok(Consistency {
        l2: space.l2_error(&field, &phi),
        grad: space.grad_error(&field, &grad_phi),
    })
}

/// `W_D(ψ) = √(ℓᵀ G⁻¹ ℓ)` with `ℓ_a = ∫ Π χ_a div ψ + ∇_M χ_a · ψ`.
pub fn conformity_wd(
    space: &LepncSpace<'_>,
    psi: impl Fn(&Point) -> Point + Sync,
    div_psi: impl Fn(&Point) -> f64 + Sync,
    recon: Reconstruction,
) -> Result<f64, GdmError> {
    let mats = GdMatrices::assemble(space, recon)?;
    let l = load(space, mats.lumping.as_ref(), &div_psi, &psi)?;
    if l.is_empty() {
        return Ok(0.0);
    }
    let x = Factor::new(&mats.g)?.solve(&l);
    Ok(dot(&l, &x).max(0.0).sqrt())
}

/// Diagnostics of one mesh for the smooth field `sin(πx) sin(πy)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Diagnostics {
    pub cd: f64,
    /// `C_D` with the lumped reconstruction at `ϖ = 0`.
    pub cd_lumped: f64,
    pub sd: f64,
    /// `W_D(∇(sin sin))`.
    pub wd: f64,
    /// `W_D` of a constant field; zero up to round-off.
    pub wd_constant: f64,
}

pub fn diagnose(space: &LepncSpace<'_>) -> Result<Diagnostics, GdmError> {
    use std::f64::consts::PI;
    let u = |x: &Point| (PI * x.x).sin() * (PI * x.y).sin();
    let grad_u = |x: &Point| {
        Point::new(
            PI * (PI * x.x).cos() * (PI * x.y).sin(),
            PI * (PI * x.x).sin() * (PI * x.y).cos(),
        )
    };
    let lap_u = |x: &Point| -2.0 * PI * PI * u(x);
    Ok(Diagnostics {
        cd: poincare_cd(space, Reconstruction::Identity)?,
        cd_lumped: poincare_cd(space, Reconstruction::Lumped { varpi: 0.0 })?,
        sd: consistency_sd(space, u, grad_u)?.value(),
        wd: conformity_wd(space, grad_u, lap_u, Reconstruction::Identity)?,
        wd_constant: conformity_wd(
            space,
            |_| Point::new(1.0, 1.0),
            |_| 0.0,
            Reconstruction::Identity,
        )?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{MeshFamily, PolytopalMesh};
    use crate::space::build_space;
    use std::f64::consts::PI;

    fn sinsin(x: &Point) -> f64 {
        (PI * x.x).sin() * (PI * x.y).sin()
    }

    fn grad_sinsin(x: &Point) -> Point {
        Point::new(
            PI * (PI * x.x).cos() * (PI * x.y).sin(),
            PI * (PI * x.x).sin() * (PI * x.y).cos(),
        )
    }

    fn mesh(f: MeshFamily, n: usize) -> PolytopalMesh {
        f.generate(n).unwrap()
    }

    #[test]
    fn one_by_one_eigenproblem() {
        let one = |v: f64| {
            SparseMatrix::try_new_from_triplets(1, 1, &[faer::sparse::Triplet::new(0, 0, v)])
                .unwrap()
        };
        let l = largest_generalized_eigenvalue(&one(4.0), &one(3.0)).unwrap();
        assert!((l - 0.75).abs() < 1e-15);
    }

    #[test]
    fn poincare_constant_scales_with_length() {
        let m = mesh(MeshFamily::Hexagonal, 4);
        let big = m.transformed(|p| p * 2.0).unwrap();
        let c1 = poincare_cd(&build_space(&m).unwrap(), Reconstruction::Identity).unwrap();
        let c2 = poincare_cd(&build_space(&big).unwrap(), Reconstruction::Identity).unwrap();
        assert!((c2 / c1 - 2.0).abs() < 1e-6, "{c1} {c2}");
    }

    #[test]
    fn poincare_constant_near_continuous_value() {
        // λ_max = 1/(2π²) for the Dirichlet Laplacian on the unit square.
        let m = mesh(MeshFamily::Cartesian, 16);
        let c = poincare_cd(&build_space(&m).unwrap(), Reconstruction::Identity).unwrap();
        let exact = 1.0 / (2f64.sqrt() * PI);
        assert!((c / exact - 1.0).abs() < 0.02, "{c} vs {exact}");
    }

    #[test]
    fn lumped_poincare_approaches_identity() {
        let mut gaps = Vec::new();
        for n in [4, 8, 16] {
            let m = mesh(MeshFamily::Cartesian, n);
            let s = build_space(&m).unwrap();
            let a = poincare_cd(&s, Reconstruction::Identity).unwrap();
            let b = poincare_cd(&s, Reconstruction::Lumped { varpi: 0.0 }).unwrap();
            gaps.push((a - b).abs());
        }
        assert!(gaps[1] < gaps[0] && gaps[2] < gaps[1], "{gaps:?}");
    }

    #[test]
    fn gram_matrix_is_definite() {
        for f in MeshFamily::ALL {
            let m = mesh(f, 4);
            let s = build_space(&m).unwrap();
            assert!(gram_min_eigenvalue(&s).unwrap() > 0.0);
        }
    }

    #[test]
    fn affine_with_zero_boundary_averages_is_exact() {
        // On the unit square only the zero function is affine with zero
        // boundary averages; any v with Πv = 0 has S_D = 0.
        let m = mesh(MeshFamily::Kershaw, 4);
        let s = build_space(&m).unwrap();
        let c = consistency_sd(&s, |_| 0.0, |_| Point::zeros()).unwrap();
        assert!(c.value() <= 1e-10);
    }

    #[test]
    fn consistency_below_interpolation_error() {
        let m = mesh(MeshFamily::Hexagonal, 8);
        let s = build_space(&m).unwrap();
        let c = consistency_sd(&s, sinsin, grad_sinsin).unwrap();
        let j = s.interpolate_j(sinsin).unwrap();
        let squared = |l2: f64, g: f64| l2 * l2 + g * g;
        let jl = s.l2_error(&j, sinsin);
        let jg = s.grad_error(&j, grad_sinsin);
        assert!(squared(c.l2, c.grad) <= squared(jl, jg) * (1.0 + 1e-10));
        assert!(c.value() <= 2f64.sqrt() * (jl + jg));
    }

    #[test]
    fn constant_field_conforms() {
        for f in MeshFamily::ALL {
            let m = mesh(f, 6);
            let s = build_space(&m).unwrap();
            let w = conformity_wd(
                &s,
                |_| Point::new(0.3, -1.7),
                |_| 0.0,
                Reconstruction::Identity,
            )
            .unwrap();
            assert!(w <= 1e-10, "{f:?}: {w}");
        }
    }

    #[test]
    fn conformity_is_homogeneous() {
        let m = mesh(MeshFamily::LocallyRefined, 4);
        let s = build_space(&m).unwrap();
        let lap = |x: &Point| -2.0 * PI * PI * sinsin(x);
        let w1 = conformity_wd(&s, grad_sinsin, lap, Reconstruction::Identity).unwrap();
        let w2 = conformity_wd(
            &s,
            |x| grad_sinsin(x) * 2.0,
            |x| 2.0 * lap(x),
            Reconstruction::Identity,
        )
        .unwrap();
        assert!((w2 - 2.0 * w1).abs() <= 1e-12 * w1.max(1.0));
        let w0 = conformity_wd(&s, |_| Point::zeros(), |_| 0.0, Reconstruction::Identity).unwrap();
        assert_eq!(w0, 0.0);
    }

    #[test]
    fn conformity_load_matches_face_integrals() {
        // Cell-wise integration by parts: ℓ(v) = Σ_K ∫_∂K v|_K ψ·n_K.
        use crate::quadrature::{face_nodes, segment_rule};
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let rule = segment_rule(DEFAULT_DEGREE).unwrap();
        for f in MeshFamily::ALL {
            let m = mesh(f, 4);
            let s = build_space(&m).unwrap();
            // Polynomial ψ keeps both quadratures exact.
            let psi = |x: &Point| Point::new(x.x * x.x * x.y, x.x * x.y.powi(3));
            let div = |x: &Point| 2.0 * x.x * x.y + 3.0 * x.x * x.y * x.y;
            let l = load(&s, None, div, psi).unwrap();
            let x: Vec<f64> = (0..l.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut v = DiscreteField::zeros(&s.dofs);
            v.set_free_values(&s.dofs, &x);
            let mut boundary = 0.0;
            for (c, cell) in m.cells.iter().enumerate() {
                for (k, &face) in cell.faces.iter().enumerate() {
                    let n = m.face_normal(c, k);
                    for (p, w) in face_nodes(&m, face, &rule) {
                        let (val, _) = s.eval_in_cell(&v, c, &p).unwrap();
                        boundary += w * val * psi(&p).dot(&n);
                    }
                }
            }
            let direct = dot(&l, &x);
            assert!(
                (direct - boundary).abs() < 1e-12 * (1.0 + direct.abs()),
                "{f:?}: {direct} vs {boundary}"
            );
        }
    }
}
