//! Laplacian growth at fixed exterior moments: sweep t0, re-solve the map,
//! check that boundaries nest, and bracket the loss of univalence.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conformal::{point_in_polygon, polygon_area, solve_droplet, solve_params, MapError, RationalMap};
use crate::moments::MomentData;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolveError {
    #[error("map solve failed at t0 = {t0}: {source}")]
    Solve { t0: f64, source: MapError },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Which sign of β the sweep hands to the correspondence solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// β enters the correspondence formulas as given.
    #[default]
    Literal,
    /// β is the charge of the weight |1 − z/a|^{2Nβ}.
    Droplet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    pub t0_start: f64,
    pub t0_end: f64,
    /// Number of t0 values, endpoints included.
    pub steps: usize,
    pub boundary_samples: usize,
    pub bisection_tol: f64,
    #[serde(default)]
    pub convention: Convention,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions { t0_start: 0.1, t0_end: 1.0, steps: 10, boundary_samples: 512, bisection_tol: 1e-6, convention: Convention::Literal }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveStep {
    pub t0: f64,
    pub map: RationalMap,
    pub univalent: bool,
    /// Area of the sampled boundary polygon.
    pub area: f64,
    pub newton_iterations: usize,
}

/// t0 interval of width ≤ the bisection tolerance: univalent at `lo`, not at `hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CuspBracket {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evolution {
    pub beta: f64,
    pub a: Complex64,
    pub steps: Vec<EvolveStep>,
    pub cusp: Option<CuspBracket>,
    /// Boundaries of the univalent steps are pairwise nested.
    pub nested: bool,
    /// First t0 at which the solver failed; the sweep stops there.
    pub stopped_at: Option<f64>,
}

fn solve_at(beta: f64, a: Complex64, t0: f64, convention: Convention) -> Result<(RationalMap, bool, usize), MapError> {
    let solved = match convention {
        Convention::Literal => solve_params(beta, a, t0)?,
        Convention::Droplet => {
            solve_droplet(&MomentData::geometric(t0, beta, a).map_err(|e| MapError::InvalidArgument(e.to_string()))?)?
        }
    };
    Ok((solved.map, solved.univalent, solved.newton_iterations))
}

/// Sweep t0 at fixed (β, a).
pub fn evolve(beta: f64, a: Complex64, opts: &EvolveOptions) -> Result<Evolution, EvolveError> {
    if opts.steps < 2 || !(opts.t0_start > 0.0 && opts.t0_end > opts.t0_start) {
        return Err(EvolveError::InvalidArgument("need steps ≥ 2 and 0 < t0_start < t0_end".into()));
    }
    if opts.boundary_samples < 16 || !(opts.bisection_tol > 0.0) {
        return Err(EvolveError::InvalidArgument("need boundary_samples ≥ 16 and a positive bisection tolerance".into()));
    }
    let mut steps = Vec::with_capacity(opts.steps);
    let mut stopped_at = None;
    for i in 0..opts.steps {
        let t0 = opts.t0_start + (opts.t0_end - opts.t0_start) * i as f64 / (opts.steps - 1) as f64;
        match solve_at(beta, a, t0, opts.convention) {
            Ok((map, univalent, newton_iterations)) => {
                let area = polygon_area(&map.boundary_polygon(opts.boundary_samples));
                steps.push(EvolveStep { t0, map, univalent, area, newton_iterations });
            }
            Err(e) if steps.is_empty() => return Err(EvolveError::Solve { t0, source: e }),
            Err(_) => {
                stopped_at = Some(t0);
                break;
            }
        }
    }

    let first_bad = steps.iter().position(|s| !s.univalent);
    let cusp = match first_bad {
        Some(0) => None,
        Some(j) => Some(bisect_univalence(beta, a, steps[j - 1].t0, steps[j].t0, opts)?),
        None => match stopped_at {
            Some(t_fail) => Some(bisect_univalence(beta, a, steps.last().unwrap().t0, t_fail, opts)?),
            None => None,
        },
    };

    let polys: Vec<Vec<Complex64>> =
        steps.iter().filter(|s| s.univalent).map(|s| s.map.boundary_polygon(opts.boundary_samples)).collect();
    let nested = pairwise_nested(&polys);
    Ok(Evolution { beta, a, steps, cusp, nested, stopped_at })
}

/// Bisect between a univalent `lo` and a non-univalent (or unsolvable) `hi`.
fn bisect_univalence(beta: f64, a: Complex64, mut lo: f64, mut hi: f64, opts: &EvolveOptions) -> Result<CuspBracket, EvolveError> {
    while hi - lo > opts.bisection_tol {
        let mid = 0.5 * (lo + hi);
        let ok = matches!(solve_at(beta, a, mid, opts.convention), Ok((_, true, _)));
        if ok {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(CuspBracket { lo, hi })
}

/// Each polygon lies strictly inside every later one.
pub fn pairwise_nested(polys: &[Vec<Complex64>]) -> bool {
    for i in 0..polys.len() {
        for j in i + 1..polys.len() {
            if !polys[i].iter().all(|z| point_in_polygon(*z, &polys[j])) {
                return false;
            }
        }
    }
    true
}
