use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::mesh::Point;
use crate::schemes::{LinearProblem, NonlinearProblem, Zeta};

pub type Scalar = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;
pub type Vector = Arc<dyn Fn(&Point) -> Point + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CaseKind {
    Linear,
    Stefan,
    Pme,
}

/// A manufactured solution of `u − Δζ(u) = f` (or `−Δu = f` for the linear
/// case) on the unit square, with `Λ = Id` and `F = 0`.
#[derive(Clone)]
pub struct TestCase {
    pub name: &'static str,
    pub kind: CaseKind,
    /// `None` for the linear case.
    pub zeta: Option<Zeta>,
    pub u: Scalar,
    pub grad_u: Vector,
    pub z: Scalar,
    pub grad_z: Vector,
    pub source: Scalar,
}

impl fmt::Debug for TestCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestCase")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("zeta", &self.zeta)
            .finish()
    }
}

fn wrap(f: &Scalar) -> Box<dyn Fn(&Point) -> f64 + Send + Sync> {
    let f = f.clone();
    Box::new(move |x| f(x))
}

impl TestCase {
    pub fn is_linear(&self) -> bool {
        self.kind == CaseKind::Linear
    }

    pub fn linear_problem(&self) -> LinearProblem {
        let mut p = LinearProblem::poisson(|_| 0.0);
        p.source = wrap(&self.source);
        p.dirichlet = wrap(&self.u);
        p
    }

    pub fn nonlinear_problem(&self) -> NonlinearProblem {
        let mut p = NonlinearProblem::new(self.zeta.unwrap_or(Zeta::Linear), |_| 0.0);
        p.source = wrap(&self.source);
        p.u_trace = wrap(&self.u);
        p.z_trace = wrap(&self.z);
        p
    }
}

/// Diagonal coordinate `s = (x + y)/√2`.
fn diag(x: &Point) -> f64 {
    (x.x + x.y) / 2f64.sqrt()
}

fn along_diag(d: f64) -> Point {
    Point::new(d, d) / 2f64.sqrt()
}

fn sinsin(x: &Point) -> f64 {
    (PI * x.x).sin() * (PI * x.y).sin()
}

fn grad_sinsin(x: &Point) -> Point {
    Point::new(
        PI * (PI * x.x).cos() * (PI * x.y).sin(),
        PI * (PI * x.x).sin() * (PI * x.y).cos(),
    )
}

pub fn linear() -> TestCase {
    TestCase {
        name: "linear",
        kind: CaseKind::Linear,
        zeta: None,
        u: Arc::new(sinsin),
        grad_u: Arc::new(grad_sinsin),
        z: Arc::new(sinsin),
        grad_z: Arc::new(grad_sinsin),
        source: Arc::new(|x| 2.0 * PI * PI * sinsin(x)),
    }
}

/// `ū = (s − 1/2)³`; it stays below 1, so `ζ(ū) = min(ū, 0)`.
pub fn stefan_s1() -> TestCase {
    let u = |x: &Point| (diag(x) - 0.5).powi(3);
    let du = |x: &Point| along_diag(3.0 * (diag(x) - 0.5).powi(2));
    TestCase {
        name: "s1",
        kind: CaseKind::Stefan,
        zeta: Some(Zeta::Stefan),
        u: Arc::new(u),
        grad_u: Arc::new(du),
        z: Arc::new(move |x| u(x).min(0.0)),
        grad_z: Arc::new(move |x| if diag(x) < 0.5 { du(x) } else { Point::zeros() }),
        source: Arc::new(move |x| {
            let s = diag(x);
            u(x) - if s < 0.5 { 6.0 * (s - 0.5) } else { 0.0 }
        }),
    }
}

/// `ū = cosh(s − 1/3)` beyond the line `s = 1/3`, zero before it.
pub fn stefan_s2() -> TestCase {
    const GAMMA: f64 = 1.0 / 3.0;
    TestCase {
        name: "s2",
        kind: CaseKind::Stefan,
        zeta: Some(Zeta::Stefan),
        u: Arc::new(|x| {
            let s = diag(x);
            if s >= GAMMA {
                (s - GAMMA).cosh()
            } else {
                0.0
            }
        }),
        grad_u: Arc::new(|x| {
            let s = diag(x);
            if s >= GAMMA {
                along_diag((s - GAMMA).sinh())
            } else {
                Point::zeros()
            }
        }),
        z: Arc::new(|x| {
            let s = diag(x);
            if s >= GAMMA {
                (s - GAMMA).cosh() - 1.0
            } else {
                0.0
            }
        }),
        grad_z: Arc::new(|x| {
            let s = diag(x);
            if s >= GAMMA {
                along_diag((s - GAMMA).sinh())
            } else {
                Point::zeros()
            }
        }),
        source: Arc::new(|_| 0.0),
    }
}

/// `ū = sin(πx) sin(πy)`, `ζ(s) = |s|^{m−1}s`.
pub fn pme_p1(m: u32) -> TestCase {
    assert!((1..=4).contains(&m));
    let mf = m as f64;
    let name = ["p1-m1", "p1-m2", "p1-m3", "p1-m4"][m as usize - 1];
    TestCase {
        name,
        kind: CaseKind::Pme,
        zeta: Some(Zeta::Porous { m: mf }),
        u: Arc::new(sinsin),
        grad_u: Arc::new(grad_sinsin),
        z: Arc::new(move |x| sinsin(x).powi(m as i32)),
        grad_z: Arc::new(move |x| grad_sinsin(x) * (mf * sinsin(x).powi(m as i32 - 1))),
        source: Arc::new(move |x| {
            let u = sinsin(x);
            let g2 = grad_sinsin(x).norm_squared();
            let first = if m >= 2 {
                mf * (mf - 1.0) * u.powi(m as i32 - 2) * g2
            } else {
                0.0
            };
            let lap_z = first + mf * u.powi(m as i32 - 1) * (-2.0 * PI * PI * u);
            u - lap_z
        }),
    }
}

/// `ū = max(ρ² − r², 0)` around the centre with `ρ = 0.3`, `m = 2`.
pub fn pme_p2() -> TestCase {
    const RHO2: f64 = 0.09;
    let r2 = |x: &Point| (x.x - 0.5).powi(2) + (x.y - 0.5).powi(2);
    let w = move |x: &Point| (RHO2 - r2(x)).max(0.0);
    let dw = move |x: &Point| {
        if r2(x) < RHO2 {
            Point::new(-2.0 * (x.x - 0.5), -2.0 * (x.y - 0.5))
        } else {
            Point::zeros()
        }
    };
    TestCase {
        name: "p2",
        kind: CaseKind::Pme,
        zeta: Some(Zeta::Porous { m: 2.0 }),
        u: Arc::new(w),
        grad_u: Arc::new(dw),
        z: Arc::new(move |x| w(x).powi(2)),
        grad_z: Arc::new(move |x| dw(x) * (2.0 * w(x))),
        source: Arc::new(move |x| {
            if r2(x) < RHO2 {
                9.0 * w(x) - 8.0 * r2(x)
            } else {
                0.0
            }
        }),
    }
}

/// All eight cases.
pub fn registry() -> Vec<TestCase> {
    vec![
        linear(),
        stefan_s1(),
        stefan_s2(),
        pme_p1(1),
        pme_p1(2),
        pme_p1(3),
        pme_p1(4),
        pme_p2(),
    ]
}

pub fn find_case(name: &str) -> Option<TestCase> {
    registry().into_iter().find(|c| c.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    /// Fourth-order finite-difference Laplacian.
    fn laplacian(f: &Scalar, x: &Point, h: f64) -> f64 {
        let mut s = 0.0;
        for e in [Point::new(h, 0.0), Point::new(0.0, h)] {
            s += (-f(&(x + 2.0 * e)) + 16.0 * f(&(x + e)) - 30.0 * f(x) + 16.0 * f(&(x - e))
                - f(&(x - 2.0 * e)))
                / (12.0 * h * h);
        }
        s
    }

    fn away_from_kinks(c: &TestCase, x: &Point) -> bool {
        let d = 0.02;
        match c.name {
            "s1" => (diag(x) - 0.5).abs() > d,
            "s2" => (diag(x) - 1.0 / 3.0).abs() > d,
            "p2" => (((x.x - 0.5).powi(2) + (x.y - 0.5).powi(2)).sqrt() - 0.3).abs() > d,
            _ => true,
        }
    }

    #[test]
    fn strong_form_residuals() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for c in registry() {
            let mut checked = 0;
            while checked < 100 {
                let x = Point::new(rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95));
                if !away_from_kinks(&c, &x) {
                    continue;
                }
                let lap = laplacian(&c.z, &x, 1e-3);
                let lhs = if c.is_linear() { -lap } else { (c.u)(&x) - lap };
                let r = lhs - (c.source)(&x);
                let scale = 1.0 + (c.source)(&x).abs() + lap.abs();
                assert!(r.abs() < 1e-8 * scale, "{}: residual {r} at {x:?}", c.name);
                checked += 1;
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        let h = 1e-6;
        for c in registry() {
            for _ in 0..50 {
                let x = Point::new(rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95));
                if !away_from_kinks(&c, &x) {
                    continue;
                }
                for (f, g) in [(&c.u, &c.grad_u), (&c.z, &c.grad_z)] {
                    let fd = Point::new(
                        (f(&(x + Point::new(h, 0.0))) - f(&(x - Point::new(h, 0.0)))) / (2.0 * h),
                        (f(&(x + Point::new(0.0, h))) - f(&(x - Point::new(0.0, h)))) / (2.0 * h),
                    );
                    assert!((fd - g(&x)).norm() < 1e-6 * (1.0 + fd.norm()), "{}", c.name);
                }
            }
        }
    }

    #[test]
    fn zeta_of_u_is_z() {
        for c in registry().into_iter().filter(|c| !c.is_linear()) {
            let zeta = c.zeta.unwrap();
            for k in 0..=20 {
                for l in 0..=20 {
                    let x = Point::new(k as f64 / 20.0, l as f64 / 20.0);
                    assert!(
                        (zeta.value((c.u)(&x)) - (c.z)(&x)).abs() < 1e-14,
                        "{}",
                        c.name
                    );
                }
            }
        }
    }

    #[test]
    fn s2_source_vanishes() {
        let c = stefan_s2();
        assert_eq!((c.source)(&Point::new(0.1, 0.2)), 0.0);
        assert_eq!((c.source)(&Point::new(0.8, 0.9)), 0.0);
    }

    #[test]
    fn s1_at_centre() {
        // s = 1/√2 > 1/2 there, so ū > 0 and ζ(ū) = 0 nearby: f = ū.
        let c = stefan_s1();
        let x = Point::new(0.5, 0.5);
        let u = (0.5f64.sqrt() - 0.5).powi(3);
        assert!(((c.u)(&x) - u).abs() < 1e-15);
        assert!(((c.source)(&x) - u).abs() < 1e-15);
    }

    #[test]
    fn p1_m1_is_identity() {
        assert_eq!(pme_p1(1).zeta, Some(Zeta::Porous { m: 1.0 }));
        assert_eq!(Zeta::Porous { m: 1.0 }.value(-0.7), -0.7);
    }

    #[test]
    fn names_are_unique() {
        let names: Vec<_> = registry().iter().map(|c| c.name).collect();
        assert_eq!(names.len(), 8);
        for n in &names {
            assert!(find_case(n).is_some());
        }
    }
}
