use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use super::cases::TestCase;
use crate::mesh::{MeshError, MeshFamily};
use crate::schemes::{
    assemble_linear, solve_condensed, solve_spd, NewtonConfig, NonlinearScheme, SchemeError,
    SolveMethod,
};
use crate::space::{build_space, masslump, DiscreteField, LepncSpace, MassLumping, SpaceError};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("interpolant norm vanishes for '{0}'")]
    ZeroDenominator(&'static str),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
}

/// Relative errors against the interpolant of the exact solution. Linear
/// cases fill `l2`/`h1`, nonlinear cases `l2_ml`/`energy`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Errors {
    pub l2: Option<f64>,
    pub h1: Option<f64>,
    pub l2_ml: Option<f64>,
    pub energy: Option<f64>,
}

fn ratio(num: f64, den: f64, what: &'static str) -> Result<f64, StudyError> {
    if den <= f64::MIN_POSITIVE {
        return Err(StudyError::ZeroDenominator(what));
    }
    Ok(num / den)
}

/// `E_{L²}` and `E_{H¹}` for a linear solution.
pub fn linear_errors(
    space: &LepncSpace<'_>,
    u: &DiscreteField,
    case: &TestCase,
) -> Result<Errors, StudyError> {
    let iu = space.interpolate_i(|x| (case.u)(x))?;
    let d = u.sub(&iu);
    Ok(Errors {
        l2: Some(ratio(space.l2_norm(&d), space.l2_norm(&iu), "L2")?),
        h1: Some(ratio(space.grad_norm(&d), space.grad_norm(&iu), "H1")?),
        ..Default::default()
    })
}

/// `E_{L²,ml}` on `u` and `E_{H¹,ζ}` on `ζ(u)`.
pub fn nonlinear_errors(
    space: &LepncSpace<'_>,
    ml: &MassLumping,
    u: &DiscreteField,
    z: &DiscreteField,
    case: &TestCase,
) -> Result<Errors, StudyError> {
    let iu = space.interpolate_i(|x| (case.u)(x))?;
    let iz = space.interpolate_i(|x| (case.z)(x))?;
    Ok(Errors {
        l2_ml: Some(ratio(
            ml.norm(space, &u.sub(&iu)),
            ml.norm(space, &iu),
            "L2ml",
        )?),
        energy: Some(ratio(
            space.grad_norm(&z.sub(&iz)),
            space.grad_norm(&iz),
            "energy",
        )?),
        ..Default::default()
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    Zero,
    Exact,
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub varpi: f64,
    pub condense: bool,
    pub init: Init,
    pub method: SolveMethod,
    pub newton: NewtonConfig,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            varpi: 0.0,
            condense: false,
            init: Init::Zero,
            method: SolveMethod::Direct,
            newton: NewtonConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub level: usize,
    pub h: f64,
    pub n_cells: usize,
    pub n_dofs: usize,
    pub errors: Errors,
    pub newton_iters: Option<usize>,
    pub damping_events: Option<usize>,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    pub case: String,
    pub family: MeshFamily,
    pub varpi: f64,
    pub rows: Vec<Row>,
    /// Levels that failed, with the error message.
    pub failures: Vec<(usize, String)>,
}

/// Error columns in CSV order.
pub const COLUMNS: [&str; 4] = ["L2error", "H1error", "L2error_ml", "EnergyError"];

impl Row {
    pub fn column(&self, name: &str) -> Option<f64> {
        match name {
            "L2error" => self.errors.l2,
            "H1error" => self.errors.h1,
            "L2error_ml" => self.errors.l2_ml,
            "EnergyError" => self.errors.energy,
            _ => None,
        }
    }
}

/// Slope of the least-squares line through `(log h, log e)`.
pub fn fitted_rate(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

impl ConvergenceReport {
    pub fn all_succeeded(&self) -> bool {
        self.failures.is_empty()
    }

    fn series(&self, col: &str) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter_map(|r| r.column(col).map(|e| (r.h, e)))
            .filter(|&(_, e)| e > 0.0)
            .collect()
    }

    /// Least-squares rate over the three finest levels.
    pub fn rate(&self, col: &str) -> Option<f64> {
        let s = self.series(col);
        let start = s.len().saturating_sub(3);
        fitted_rate(&s[start..])
    }

    /// Rates between consecutive levels.
    pub fn pairwise_rates(&self, col: &str) -> Vec<f64> {
        self.series(col)
            .windows(2)
            .map(|w| (w[1].1 / w[0].1).ln() / (w[1].0 / w[0].0).ln())
            .collect()
    }
}

fn solve_level(
    case: &TestCase,
    family: MeshFamily,
    level: usize,
    opts: &RunOptions,
) -> Result<Row, StudyError> {
    let start = Instant::now();
    let mesh = family.generate(level)?;
    let space = build_space(&mesh)?;
    let (errors, newton_iters, damping_events) = if case.is_linear() {
        let system = assemble_linear(&space, &case.linear_problem())?;
        let u = if opts.condense {
            solve_condensed(&system, &space.dofs, opts.method)?
        } else {
            solve_spd(&system, &space.dofs, opts.method)?
        };
        (linear_errors(&space, &u, case)?, None, None)
    } else {
        let ml = masslump(&space, opts.varpi);
        let problem = case.nonlinear_problem();
        let scheme = NonlinearScheme::new(&space, &ml, &problem)?;
        let x0 = match opts.init {
            Init::Zero => vec![0.0; scheme.n_free()],
            Init::Exact => scheme.interpolated_state(|x| (case.u)(x), |x| (case.z)(x))?,
        };
        let config = NewtonConfig {
            condense: opts.condense,
            ..opts.newton
        };
        let sol = scheme.newton(&config, x0)?;
        (
            nonlinear_errors(&space, &ml, &sol.u, &sol.z, case)?,
            Some(sol.report.iterations),
            Some(sol.report.damping_events),
        )
    };
    Ok(Row {
        level,
        h: mesh.h_max,
        n_cells: mesh.n_cells(),
        n_dofs: space.dofs.n_free(),
        errors,
        newton_iters,
        damping_events,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs `case` on every level of `family`, levels in parallel. A failing
/// level is recorded and the remaining levels still run.
pub fn run_family(
    case: &TestCase,
    family: MeshFamily,
    levels: &[usize],
    opts: &RunOptions,
) -> ConvergenceReport {
    let mut report = ConvergenceReport {
        case: case.name.to_string(),
        family,
        varpi: opts.varpi,
        rows: Vec::new(),
        failures: Vec::new(),
    };
    let results: Vec<_> = levels
        .par_iter()
        .map(|&level| (level, solve_level(case, family, level, opts)))
        .collect();
    for (level, result) in results {
        match result {
            Ok(row) => report.rows.push(row),
            Err(e) => report.failures.push((level, e.to_string())),
        }
    }
    report.rows.sort_by(|a, b| b.h.total_cmp(&a.h));
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::cases;

    #[test]
    fn rate_of_exact_power_law() {
        let pts: Vec<(f64, f64)> = [0.5, 0.25, 0.125]
            .iter()
            .map(|&h| (h, 3.0 * h * h))
            .collect();
        assert!((fitted_rate(&pts).unwrap() - 2.0).abs() < 1e-12);
        assert!(fitted_rate(&pts[..1]).is_none());
    }

    #[test]
    fn interpolant_has_zero_error() {
        let m = MeshFamily::Hexagonal.generate(4).unwrap();
        let s = build_space(&m).unwrap();
        let c = cases::linear();
        let iu = s.interpolate_i(|x| (c.u)(x)).unwrap();
        let e = linear_errors(&s, &iu, &c).unwrap();
        assert_eq!(e.l2, Some(0.0));
        assert_eq!(e.h1, Some(0.0));
        let c = cases::stefan_s1();
        let ml = masslump(&s, 0.0);
        let iu = s.interpolate_i(|x| (c.u)(x)).unwrap();
        let iz = s.interpolate_i(|x| (c.z)(x)).unwrap();
        let e = nonlinear_errors(&s, &ml, &iu, &iz, &c).unwrap();
        assert_eq!(e.l2_ml, Some(0.0));
        assert_eq!(e.energy, Some(0.0));
    }

    #[test]
    fn relative_errors_are_scale_free() {
        let m = MeshFamily::Cartesian.generate(4).unwrap();
        let s = build_space(&m).unwrap();
        let c = cases::linear();
        let sys = assemble_linear(&s, &c.linear_problem()).unwrap();
        let u = solve_spd(&sys, &s.dofs, SolveMethod::Direct).unwrap();
        let e1 = linear_errors(&s, &u, &c).unwrap();
        let mut c2 = c.clone();
        let u0 = c.u.clone();
        c2.u = std::sync::Arc::new(move |x| 2.0 * u0(x));
        let e2 = linear_errors(&s, &u.scaled(2.0), &c2).unwrap();
        assert!((e1.l2.unwrap() - e2.l2.unwrap()).abs() < 1e-14);
        assert!((e1.h1.unwrap() - e2.h1.unwrap()).abs() < 1e-14);
    }

    #[test]
    fn zero_interpolant_is_reported() {
        let m = MeshFamily::Cartesian.generate(2).unwrap();
        let s = build_space(&m).unwrap();
        let mut c = cases::linear();
        c.u = std::sync::Arc::new(|_| 0.0);
        let f = DiscreteField::zeros(&s.dofs);
        assert!(matches!(
            linear_errors(&s, &f, &c),
            Err(StudyError::ZeroDenominator(_))
        ));
    }

    #[test]
    fn failed_level_is_recorded() {
        let c = cases::linear();
        // Hexagonal meshes need n >= 2.
        let r = run_family(&c, MeshFamily::Hexagonal, &[1, 4], &RunOptions::default());
        assert_eq!(r.failures.len(), 1);
        assert_eq!(r.rows.len(), 1);
    }
}
