use faer::sparse::{SparseColMat, Triplet};
use nalgebra::{DMatrix, DVector, Matrix2};
use rayon::prelude::*;

use super::linear::{boundary_values, cell_stiffness, localize, ScalarFn, TensorFn, VectorFn};
use super::sparse::{
    assemble_global, diagonal, matvec, norm, solve_general, solve_spd_matrix, static_condense,
    CellBlock, SolveMethod, SparseMatrix,
};
use super::SchemeError;
use crate::mesh::Point;
use crate::space::{DiscreteField, LepncSpace, MassLumping};

/// Monotone nonlinearity `ζ` with `ζ(0) = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Zeta {
    Linear,
    /// `ζ(s) = min(s, 0) + max(s − 1, 0)`: flat on `[0, 1]`.
    Stefan,
    /// `ζ(s) = |s|^{m−1} s`.
    Porous {
        m: f64,
    },
}

impl Zeta {
    pub fn value(&self, s: f64) -> f64 {
        match *self {
            Zeta::Linear => s,
            Zeta::Stefan => s.min(0.0) + (s - 1.0).max(0.0),
            Zeta::Porous { m } => s.abs().powf(m - 1.0) * s,
        }
    }

    /// Right derivative.
    pub fn derivative(&self, s: f64) -> f64 {
        match *self {
            Zeta::Linear => 1.0,
            Zeta::Stefan => {
                if (0.0..1.0).contains(&s) {
                    0.0
                } else {
                    1.0
                }
            }
            Zeta::Porous { m } => {
                if m == 1.0 {
                    1.0
                } else {
                    m * s.abs().powf(m - 1.0)
                }
            }
        }
    }

    pub fn has_plateau(&self) -> bool {
        matches!(self, Zeta::Stefan)
    }

    /// Inverse of the strictly increasing map `s ↦ m s + a ζ(s)` (`m > 0`,
    /// `a ≥ 0`).
    pub fn invert_shifted(&self, m: f64, a: f64, w: f64) -> f64 {
        match *self {
            Zeta::Linear => w / (m + a),
            Zeta::Stefan => {
                if w < 0.0 {
                    w / (m + a)
                } else if w <= m {
                    w / m
                } else {
                    (w + a) / (m + a)
                }
            }
            Zeta::Porous { .. } => {
                // Safeguarded Newton on [0, |w|/m] for the magnitude.
                let target = w.abs();
                let f = |s: f64| m * s + a * self.value(s);
                let (mut lo, mut hi) = (0.0, target / m);
                let mut s = hi.min((target / a.max(f64::MIN_POSITIVE)).powf(1.0 / self.exponent()));
                for _ in 0..200 {
                    let r = f(s) - target;
                    if r.abs() <= 4.0 * f64::EPSILON * target || hi - lo <= f64::EPSILON * hi {
                        break;
                    }
                    if r > 0.0 {
                        hi = s;
                    } else {
                        lo = s;
                    }
                    let d = m + a * self.derivative(s);
                    let next = s - r / d;
                    s = if next > lo && next < hi {
                        next
                    } else {
                        0.5 * (lo + hi)
                    };
                }
                w.signum() * s
            }
        }
    }

    fn exponent(&self) -> f64 {
        match *self {
            Zeta::Porous { m } => m,
            _ => 1.0,
        }
    }

    /// Smallest-magnitude `s` with `ζ(s) = z`.
    pub fn pseudo_inverse(&self, z: f64) -> f64 {
        match *self {
            Zeta::Linear => z,
            Zeta::Stefan => {
                if z > 0.0 {
                    z + 1.0
                } else {
                    z
                }
            }
            Zeta::Porous { m } => z.signum() * z.abs().powf(1.0 / m),
        }
    }
}

/// `u − div(Λ∇ζ(u)) = f + div F`, with boundary traces of `u` and `ζ(u)`.
pub struct NonlinearProblem {
    pub zeta: Zeta,
    pub lambda: TensorFn,
    pub source: ScalarFn,
    pub flux: VectorFn,
    pub u_trace: ScalarFn,
    pub z_trace: ScalarFn,
}

impl NonlinearProblem {
    /// `Λ = Id`, `F = 0`, homogeneous boundary values.
    pub fn new(zeta: Zeta, source: impl Fn(&Point) -> f64 + Send + Sync + 'static) -> Self {
        NonlinearProblem {
            zeta,
            lambda: Box::new(|_| Matrix2::identity()),
            source: Box::new(source),
            flux: Box::new(|_| Point::zeros()),
            u_trace: Box::new(|_| 0.0),
            z_trace: Box::new(|_| 0.0),
        }
    }
}

/// What a free unknown stores.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Carrier {
    /// `X = u`, `z = ζ(X)`.
    U,
    /// `X = ζ(u)`; only used where the slot has no lumped mass.
    Z,
}

/// Unknown convention: with `ϖ = 0` faces carry `ζ`-values, with `ϖ = 1`
/// cells do, otherwise every unknown is a `u`-value.
pub fn carrier_for(varpi: f64, is_face: bool) -> Carrier {
    if (varpi == 0.0 && is_face) || (varpi == 1.0 && !is_face) {
        Carrier::Z
    } else {
        Carrier::U
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonConfig {
    /// Absolute tolerance on the Euclidean norm of the scaled residual.
    pub tol: f64,
    pub max_iter: usize,
    pub min_damping: f64,
    /// Solve each Newton step through static condensation.
    pub condense: bool,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            tol: 1e-8,
            max_iter: 50,
            min_damping: 2f64.powi(-30),
            condense: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_residual: f64,
    /// Iterations whose accepted step was shorter than the full step.
    pub damping_events: usize,
    pub converged: bool,
    /// Scaled residual norm of each accepted iterate, initial state first.
    pub history: Vec<f64>,
}

pub struct NewtonSolution {
    pub u: DiscreteField,
    pub z: DiscreteField,
    pub x: Vec<f64>,
    pub report: SolveReport,
}

/// The mass-lumped scheme with its stiffness assembled once.
///
/// `R(X) = M u(X) + A z(X) − b`, with `M = diag(|U_a|)`, `A` the stiffness
/// on free unknowns and `b_a = |U_a| f(x_a) − ∫F·∇χ_a − (A z_fixed)_a`.
pub struct NonlinearScheme<'s, 'm> {
    pub space: &'s LepncSpace<'m>,
    pub ml: &'s MassLumping,
    pub zeta: Zeta,
    stiffness: Vec<CellBlock>,
    a_free: SparseMatrix,
    rhs: Vec<f64>,
    pub carriers: Vec<Carrier>,
    mass: Vec<f64>,
    a_diag: Vec<f64>,
    scale: Vec<f64>,
    fixed_u: Vec<f64>,
    fixed_z: Vec<f64>,
}

impl<'s, 'm> NonlinearScheme<'s, 'm> {
    pub fn new(
        space: &'s LepncSpace<'m>,
        ml: &'s MassLumping,
        problem: &NonlinearProblem,
    ) -> Result<Self, SchemeError> {
        let dofs = &space.dofs;
        let fixed_u = boundary_values(space, &problem.u_trace)?;
        let fixed_z = boundary_values(space, &problem.z_trace)?;
        let zero: ScalarFn = Box::new(|_| 0.0);
        let stiffness = (0..space.mesh.n_cells())
            .into_par_iter()
            .map(|c| {
                let (a, b) = cell_stiffness(
                    space,
                    c,
                    &problem.lambda,
                    None,
                    Some((&zero, &problem.flux)),
                )?;
                super::linear::check_symmetry(c, &a)?;
                Ok(localize(
                    dofs,
                    &dofs.cell_slots(space.mesh, c),
                    &fixed_z,
                    a,
                    b,
                ))
            })
            .collect::<Result<Vec<_>, SchemeError>>()?;
        let (a_free, mut rhs) = assemble_global(&stiffness, dofs.n_free());
        let mut mass = Vec::with_capacity(dofs.n_free());
        let mut carriers = Vec::with_capacity(dofs.n_free());
        for (k, &s) in dofs.free_slots().iter().enumerate() {
            let m = ml.measures[s];
            rhs[k] += m * (problem.source)(&ml.points[s]);
            mass.push(m);
            carriers.push(carrier_for(ml.varpi, k < dofs.n_free_faces()));
        }
        let a_diag = diagonal(&a_free);
        let scale = a_diag.iter().zip(&mass).map(|(a, m)| a + m).collect();
        Ok(NonlinearScheme {
            space,
            ml,
            zeta: problem.zeta,
            stiffness,
            a_free,
            rhs,
            carriers,
            mass,
            scale,
            a_diag,
            fixed_u,
            fixed_z,
        })
    }

    pub fn n_free(&self) -> usize {
        self.rhs.len()
    }

    /// `(u, z, du/dX, dz/dX)` of free unknown `k`.
    fn state(&self, k: usize, x: f64) -> (f64, f64, f64, f64) {
        match self.carriers[k] {
            Carrier::U => (x, self.zeta.value(x), 1.0, self.zeta.derivative(x)),
            Carrier::Z => (self.zeta.pseudo_inverse(x), x, 0.0, 1.0),
        }
    }

    fn to_w(&self, k: usize, x: f64) -> f64 {
        match self.carriers[k] {
            Carrier::U if self.mass[k] > 0.0 => {
                self.mass[k] * x + self.a_diag[k] * self.zeta.value(x)
            }
            _ => x,
        }
    }

    fn w_slope(&self, k: usize, x: f64) -> f64 {
        match self.carriers[k] {
            Carrier::U if self.mass[k] > 0.0 => {
                self.mass[k] + self.a_diag[k] * self.zeta.derivative(x)
            }
            _ => 1.0,
        }
    }

    fn unshift_w(&self, k: usize, w: f64) -> f64 {
        match self.carriers[k] {
            Carrier::U if self.mass[k] > 0.0 => {
                self.zeta.invert_shifted(self.mass[k], self.a_diag[k], w)
            }
            _ => w,
        }
    }

    pub fn residual(&self, x: &[f64]) -> Vec<f64> {
        let (u, z): (Vec<f64>, Vec<f64>) = x
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let (u, z, _, _) = self.state(k, v);
                (u, z)
            })
            .unzip();
        let az = matvec(&self.a_free, &z);
        (0..x.len())
            .map(|k| self.mass[k] * u[k] + az[k] - self.rhs[k])
            .collect()
    }

    /// `R_a / (A_aa + |U_a|)`.
    pub fn scaled(&self, r: &[f64]) -> Vec<f64> {
        r.iter().zip(&self.scale).map(|(r, s)| r / s).collect()
    }

    pub fn scaled_residual_norm(&self, x: &[f64]) -> f64 {
        norm(&self.scaled(&self.residual(x)))
    }

    pub fn jacobian(&self, x: &[f64]) -> Result<SparseMatrix, SchemeError> {
        let n = x.len();
        let mut du = Vec::with_capacity(n);
        let mut dz = Vec::with_capacity(n);
        for (k, &v) in x.iter().enumerate() {
            let (_, _, a, b) = self.state(k, v);
            du.push(a);
            dz.push(b);
        }
        let a = self.a_free.as_ref();
        let mut trip = Vec::with_capacity(a.compute_nnz() + n);
        let mut diag = vec![0.0; n];
        for j in 0..n {
            for (i, v) in a.row_idx_of_col(j).zip(a.val_of_col(j)) {
                let w = v * dz[j];
                if i == j {
                    diag[i] += w;
                }
                trip.push(Triplet::new(i, j, w));
            }
            trip.push(Triplet::new(j, j, self.mass[j] * du[j]));
            diag[j] += self.mass[j] * du[j];
        }
        if let Some(k) = diag.iter().position(|&d| d <= 0.0) {
            return Err(SchemeError::ConventionError(k));
        }
        Ok(SparseColMat::try_new_from_triplets(n, n, &trip).expect("indices are in range"))
    }

    /// Newton step `J δ = −R` through per-cell elimination of cell unknowns.
    fn condensed_step(&self, x: &[f64], r: &[f64]) -> Result<Vec<f64>, SchemeError> {
        let mesh = self.space.mesh;
        let mut blocks = Vec::with_capacity(self.stiffness.len());
        for (c, blk) in self.stiffness.iter().enumerate() {
            let n = blk.free.len();
            let mut m = DMatrix::zeros(n, n);
            let mut rhs = DVector::zeros(n);
            for a in 0..n {
                let Some(i) = blk.free[a] else { continue };
                let (_, _, du, _) = self.state(i, x[i]);
                m[(a, a)] += self.ml.cell_portion(self.space, c, a) * du;
                for b in 0..n {
                    if let Some(j) = blk.free[b] {
                        let (_, _, _, dz) = self.state(j, x[j]);
                        m[(a, b)] += blk.matrix[(a, b)] * dz;
                    }
                }
                let owner = a < 3 || mesh.faces[mesh.cells[c].faces[a - 3]].sides[0].cell == c;
                if owner {
                    rhs[a] = -r[i];
                }
            }
            blocks.push(CellBlock {
                free: blk.free.clone(),
                matrix: m,
                rhs,
            });
        }
        let cond = static_condense(&blocks, x.len(), self.space.dofs.n_free_faces())?;
        let xf = solve_general(&cond.matrix, &cond.rhs)?;
        Ok(cond.recover(&xf))
    }

    /// Free unknowns representing the given exact `u` and `ζ(u)`, following
    /// the carrier of each unknown.
    pub fn interpolated_state(
        &self,
        u: impl Fn(&Point) -> f64,
        z: impl Fn(&Point) -> f64,
    ) -> Result<Vec<f64>, SchemeError> {
        let iu = self.space.interpolate_i(u)?;
        let iz = self.space.interpolate_i(z)?;
        Ok(self
            .space
            .dofs
            .free_slots()
            .iter()
            .enumerate()
            .map(|(k, &s)| match self.carriers[k] {
                Carrier::U => iu.coeffs[s],
                Carrier::Z => iz.coeffs[s],
            })
            .collect())
    }

    /// Fields of `u` and `ζ(u)` over all slots.
    pub fn fields(&self, x: &[f64]) -> (DiscreteField, DiscreteField) {
        let dofs = &self.space.dofs;
        let mut u = DiscreteField {
            coeffs: self.fixed_u.clone(),
        };
        let mut z = DiscreteField {
            coeffs: self.fixed_z.clone(),
        };
        for (k, &s) in dofs.free_slots().iter().enumerate() {
            let (uv, zv, _, _) = self.state(k, x[k]);
            u.coeffs[s] = uv;
            z.coeffs[s] = zv;
        }
        (u, z)
    }

    /// Solves `(M + A) u = b`; only meaningful for `ζ = Id`.
    pub fn solve_linear_lumped(&self, method: SolveMethod) -> Result<Vec<f64>, SchemeError> {
        let n = self.n_free();
        let a = self.a_free.as_ref();
        let mut trip = Vec::with_capacity(a.compute_nnz() + n);
        for j in 0..n {
            for (i, v) in a.row_idx_of_col(j).zip(a.val_of_col(j)) {
                trip.push(Triplet::new(i, j, *v));
            }
            trip.push(Triplet::new(j, j, self.mass[j]));
        }
        let m = SparseColMat::try_new_from_triplets(n, n, &trip).expect("indices are in range");
        solve_spd_matrix(&m, &self.rhs, method)
    }

    /// Damped Newton from `x0`.
    pub fn newton(
        &self,
        config: &NewtonConfig,
        x0: Vec<f64>,
    ) -> Result<NewtonSolution, SchemeError> {
        let mut x = x0;
        let mut r = self.residual(&x);
        let mut rn = norm(&self.scaled(&r));
        let mut report = SolveReport {
            history: vec![rn],
            ..Default::default()
        };
        while rn > config.tol {
            if report.iterations == config.max_iter {
                report.final_residual = rn;
                return Err(SchemeError::NewtonDiverged(report));
            }
            let delta = if config.condense {
                self.condensed_step(&x, &r)?
            } else {
                let j = self.jacobian(&x)?;
                let neg: Vec<f64> = r.iter().map(|v| -v).collect();
                solve_general(&j, &neg)?
            };
            // Steps are measured in w_a = |U_a| u_a + A_aa ζ(u_a) for u-carrying
            // unknowns; across a kink of ζ the overshoot then follows the slope
            // of the new branch instead of the old one.
            let w: Vec<f64> = (0..x.len()).map(|k| self.to_w(k, x[k])).collect();
            let dw: Vec<f64> = (0..x.len())
                .map(|k| self.w_slope(k, x[k]) * delta[k])
                .collect();
            let mut t = 1.0;
            loop {
                let trial: Vec<f64> = (0..x.len())
                    .map(|k| self.unshift_w(k, w[k] + t * dw[k]))
                    .collect();
                let tr = self.residual(&trial);
                let tn = norm(&self.scaled(&tr));
                if tn < rn {
                    x = trial;
                    r = tr;
                    rn = tn;
                    break;
                }
                t *= 0.5;
                if t < config.min_damping {
                    report.final_residual = rn;
                    return Err(SchemeError::NewtonDiverged(report));
                }
            }
            if t < 1.0 {
                report.damping_events += 1;
            }
            report.iterations += 1;
            report.history.push(rn);
        }
        report.final_residual = rn;
        report.converged = true;
        let (u, z) = self.fields(&x);
        Ok(NewtonSolution { u, z, x, report })
    }
}

/// Builds the scheme and runs damped Newton; `x0 = None` starts from zero
/// free unknowns (the boundary-lifted zero state).
pub fn newton_solve(
    space: &LepncSpace<'_>,
    ml: &MassLumping,
    problem: &NonlinearProblem,
    config: &NewtonConfig,
    x0: Option<Vec<f64>>,
) -> Result<NewtonSolution, SchemeError> {
    let scheme = NonlinearScheme::new(space, ml, problem)?;
    let x0 = x0.unwrap_or_else(|| vec![0.0; scheme.n_free()]);
    scheme.newton(config, x0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{gen_cartesian, MeshFamily};
    use crate::space::{build_space, masslump};

    #[test]
    fn zeta_values() {
        let st = Zeta::Stefan;
        assert_eq!(st.value(-0.5), -0.5);
        assert_eq!(st.value(0.5), 0.0);
        assert_eq!(st.value(1.5), 0.5);
        assert_eq!(st.derivative(0.0), 0.0);
        assert_eq!(st.derivative(1.0), 1.0);
        assert_eq!(st.pseudo_inverse(0.5), 1.5);
        let p = Zeta::Porous { m: 3.0 };
        assert_eq!(p.value(-2.0), -8.0);
        assert_eq!(p.derivative(-2.0), 12.0);
        assert!((p.pseudo_inverse(-8.0) + 2.0).abs() < 1e-14);
        for z in [Zeta::Linear, Zeta::Stefan, Zeta::Porous { m: 2.0 }] {
            assert_eq!(z.value(0.0), 0.0);
            let mut prev = f64::NEG_INFINITY;
            for k in -300..=300 {
                let v = z.value(k as f64 / 100.0);
                assert!(v >= prev);
                prev = v;
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn invert_shifted_round_trips(
            s in -3.0f64..3.0,
            m in 1e-6f64..1.0,
            a in 0.0f64..10.0,
            k in 0usize..6,
        ) {
            let z = [
                Zeta::Linear,
                Zeta::Stefan,
                Zeta::Porous { m: 1.0 },
                Zeta::Porous { m: 2.0 },
                Zeta::Porous { m: 3.0 },
                Zeta::Porous { m: 4.0 },
            ][k];
            let w = m * s + a * z.value(s);
            let back = z.invert_shifted(m, a, w);
            let wb = m * back + a * z.value(back);
            proptest::prop_assert!((wb - w).abs() <= 1e-13 * (1.0 + w.abs()), "{z:?}: {w} -> {back} -> {wb}");
        }
    }

    #[test]
    fn conventions() {
        assert_eq!(carrier_for(0.0, true), Carrier::Z);
        assert_eq!(carrier_for(0.0, false), Carrier::U);
        assert_eq!(carrier_for(0.4, true), Carrier::U);
        assert_eq!(carrier_for(1.0, false), Carrier::Z);
        assert_eq!(carrier_for(1.0, true), Carrier::U);
    }

    #[test]
    fn linear_zeta_takes_one_step() {
        let m = MeshFamily::Hexagonal.generate(6).unwrap();
        let s = build_space(&m).unwrap();
        let ml = masslump(&s, 0.0);
        let p = NonlinearProblem::new(Zeta::Linear, |x| x.x + x.y * x.y);
        let scheme = NonlinearScheme::new(&s, &ml, &p).unwrap();
        let sol = scheme
            .newton(&NewtonConfig::default(), vec![0.0; scheme.n_free()])
            .unwrap();
        assert_eq!(sol.report.iterations, 1);
        let lin = scheme.solve_linear_lumped(SolveMethod::Direct).unwrap();
        let d = lin
            .iter()
            .zip(&sol.x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(d < 1e-10);
    }

    #[test]
    fn plateau_rows_stay_invertible() {
        let m = gen_cartesian(4).unwrap();
        let s = build_space(&m).unwrap();
        let ml = masslump(&s, 0.0);
        let p = NonlinearProblem::new(Zeta::Stefan, |_| 0.5);
        let scheme = NonlinearScheme::new(&s, &ml, &p).unwrap();
        // Every cell value on the plateau.
        let x = vec![0.5; scheme.n_free()];
        assert!(scheme.jacobian(&x).is_ok());
    }

    #[test]
    fn condensed_newton_matches_full() {
        let m = MeshFamily::Kershaw.generate(4).unwrap();
        let s = build_space(&m).unwrap();
        for varpi in [0.0, 0.5] {
            let ml = masslump(&s, varpi);
            let p = NonlinearProblem::new(Zeta::Porous { m: 2.0 }, |x| 1.0 + x.x);
            let full = newton_solve(&s, &ml, &p, &NewtonConfig::default(), None).unwrap();
            let cfg = NewtonConfig {
                condense: true,
                ..Default::default()
            };
            let cond = newton_solve(&s, &ml, &p, &cfg, None).unwrap();
            assert!(full.u.max_abs_diff(&cond.u) < 1e-8, "varpi {varpi}");
        }
    }

    #[test]
    fn residual_history_decreases() {
        let m = MeshFamily::Hexagonal.generate(5).unwrap();
        let s = build_space(&m).unwrap();
        let ml = masslump(&s, 0.0);
        let p = NonlinearProblem::new(Zeta::Stefan, |x| 3.0 * x.x - 1.0);
        let sol = newton_solve(&s, &ml, &p, &NewtonConfig::default(), None).unwrap();
        for w in sol.report.history.windows(2) {
            assert!(w[1] < w[0]);
        }
        assert!(sol.report.converged && sol.report.final_residual <= 1e-8);
    }
}
