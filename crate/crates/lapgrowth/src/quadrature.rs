//! Polar tensor quadrature for integrals against e^{-N W(z)} d²z and the
//! closed-form Gram oracle for integer Nβ.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::moments::{MomentError, MomentKind, Potential};
use crate::precision::{unit_phase, CDd, Dd};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("potential is not confining for degree {0}")]
    NotConfining(usize),
    #[error("Nβ = {0} is not a nonnegative integer")]
    NonIntegerBeta(f64),
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error("grid refinement changed the Gram matrix by {0:e} (relative)")]
    Unstable(f64),
}

/// Gauss–Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }
}

impl GaussLegendre {
    /// Nodes and weights polished to double-double by Newton steps.
    pub fn new_dd(n: usize) -> (Vec<Dd>, Vec<Dd>) {
        let base = GaussLegendre::new(n);
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for &x0 in &base.nodes {
            let mut x = Dd::from(x0);
            for _ in 0..3 {
                let (p, d) = legendre_dd(n, x);
                if d.0 != 0.0 {
                    x -= p / d;
                }
            }
            let (_, d) = legendre_dd(n, x);
            nodes.push(x);
            weights.push(Dd::from(2.0) / ((Dd::ONE - x * x) * d * d));
        }
        (nodes, weights)
    }
}

fn legendre_dd(n: usize, x: Dd) -> (Dd, Dd) {
    if n == 0 {
        return (Dd::ONE, Dd::ZERO);
    }
    let (mut p0, mut p1) = (Dd::ONE, x);
    for k in 2..=n {
        let p2 = (Dd::from((2 * k - 1) as f64) * x * p1 - Dd::from((k - 1) as f64) * p0) / Dd::from(k as f64);
        p0 = p1;
        p1 = p2;
    }
    (p1, Dd::from(n as f64) * (x * p1 - p0) / (x * x - Dd::ONE))
}

/// P_n(x) and P_n'(x) by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    (p1, n as f64 * (x * p1 - p0) / (x * x - 1.0))
}

/// ln Γ(k + 1) for integer k.
pub fn ln_factorial(k: usize) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// Description of a polar tensor grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScheme {
    pub radial_order: usize,
    pub radial_breaks: Vec<f64>,
    pub angular_nodes: usize,
    pub r_cut: f64,
    pub refine: u32,
}

/// Tensor grid of radial composite Gauss–Legendre nodes times an equispaced
/// periodic angular rule.
#[derive(Debug, Clone)]
pub struct PlanarGrid {
    pub scheme: GridScheme,
    pub n_big: f64,
    /// Radial nodes ρ_k.
    pub radii: Vec<f64>,
    /// Radial weights including the Jacobian ρ.
    pub radial_weights: Vec<f64>,
    /// Angular nodes θ_l = 2π l / M.
    pub angles: Vec<f64>,
    /// 2π / M.
    pub angular_weight: f64,
    /// -N (W(z) - |z|²) at every node, row-major in (radial, angular).
    pub log_deformation: Vec<f64>,
    /// The same grid carried in double-double, when requested.
    pub extended: Option<ExtendedNodes>,
}

/// Double-double copy of the grid data.
#[derive(Debug, Clone)]
pub struct ExtendedNodes {
    pub radii: Vec<Dd>,
    /// Radial weights including the Jacobian ρ.
    pub radial_weights: Vec<Dd>,
    pub angular_weight: Dd,
    /// e^{iθ_l}.
    pub phases: Vec<CDd>,
    pub log_deformation: Vec<Dd>,
}

/// Options controlling grid construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridOptions {
    /// Nodes per radial panel.
    pub radial_order: usize,
    /// Radial panel width in units of 1/√N.
    pub panel_width: f64,
    /// Extra angular nodes beyond 4(n+1) + 2⌈Nβ⌉.
    pub angular_margin: usize,
    /// Tail threshold on the log of the integrand.
    pub tail_log: f64,
    /// Refinement level: panels and angular nodes are doubled this many times.
    pub refine: u32,
    /// Also build the double-double node set.
    #[serde(default)]
    pub extended: bool,
}

/// Tail threshold used with double-double nodes.
pub const EXTENDED_TAIL_LOG: f64 = 80.0;

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions { radial_order: 24, panel_width: 1.5, angular_margin: 64, tail_log: 40.0, refine: 0, extended: false }
    }
}

impl GridOptions {
    pub fn refined(self) -> Self {
        GridOptions { refine: self.refine + 1, ..self }
    }

    /// Double-double nodes with the tail pushed out to match.
    pub fn extended(self) -> Self {
        GridOptions { extended: true, tail_log: self.tail_log.max(EXTENDED_TAIL_LOG), ..self }
    }
}

impl PlanarGrid {
    pub fn len(&self) -> usize {
        self.radii.len() * self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All nodes as (z, w), where w is the plain quadrature weight (no e^{-NW}).
    pub fn nodes(&self) -> impl Iterator<Item = (Complex64, f64)> + '_ {
        self.radii.iter().zip(&self.radial_weights).flat_map(move |(&rho, &wr)| {
            self.angles.iter().map(move |&t| (Complex64::from_polar(rho, t), wr * self.angular_weight))
        })
    }

    /// e^{-N W} at node (k, l).
    pub fn weight_factor(&self, k: usize, l: usize) -> f64 {
        let rho = self.radii[k];
        (-self.n_big * rho * rho + self.log_deformation[k * self.angles.len() + l]).exp()
    }
}

/// Largest |a| style scale of the deformation used for sizing the angular rule.
fn deformation_bandwidth(p: &Potential, n_big: f64, r_cut: f64) -> f64 {
    match &p.moments.kind {
        MomentKind::Geometric { beta, .. } => n_big * beta,
        MomentKind::Explicit { t, .. } => {
            n_big * t.iter().enumerate().map(|(k, c)| (k + 1) as f64 * c.norm() * r_cut.powi(k as i32 + 1)).sum::<f64>()
        }
    }
}

/// Upper bound of -N (W - |z|²) on the circle of radius ρ.
fn max_log_deformation(p: &Potential, n_big: f64, rho: f64) -> f64 {
    match &p.moments.kind {
        MomentKind::Geometric { beta, a } => 2.0 * n_big * beta * (1.0 + rho / a.norm()).ln(),
        MomentKind::Explicit { .. } => (0..64)
            .map(|l| {
                let z = Complex64::from_polar(rho, 2.0 * PI * l as f64 / 64.0);
                p.log_deformation(z, n_big).unwrap_or(f64::INFINITY)
            })
            .fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Radius beyond which every prewhitened ring integrand of degree ≤ n is
/// below e^{-tail_log} times its peak.
pub fn cutoff_radius(p: &Potential, n_big: f64, max_degree: usize, tail_log: f64) -> f64 {
    let h = 0.01 / n_big.sqrt();
    let mut r_cut: f64 = 0.0;
    let ln_n = n_big.ln();
    for j in 0..=max_degree {
        let c = (j as f64 + 1.0) * ln_n - PI.ln() - ln_factorial(j);
        let ell = |rho: f64| c + (2 * j + 1) as f64 * rho.ln() - n_big * rho * rho + max_log_deformation(p, n_big, rho);
        let mut rho = h;
        let mut peak = f64::NEG_INFINITY;
        let mut last_above = rho;
        let mut below_run = 0;
        while below_run < 200 {
            let v = ell(rho);
            peak = peak.max(v);
            if v >= peak - tail_log {
                last_above = rho;
                below_run = 0;
            } else {
                below_run += 1;
            }
            rho += h;
            if rho > 1e4 {
                break;
            }
        }
        r_cut = r_cut.max(last_above + h);
    }
    r_cut
}

/// Build the polar tensor grid for degree ≤ max_degree at coupling N.
pub fn build_grid(p: &Potential, n_big: f64, max_degree: usize, opts: GridOptions) -> Result<PlanarGrid, QuadError> {
    if !p.check_confinement(n_big, 2 * max_degree) {
        return Err(QuadError::NotConfining(max_degree));
    }
    let r_cut = cutoff_radius(p, n_big, max_degree, opts.tail_log);
    if r_cut > p.eval_radius {
        return Err(QuadError::Moment(MomentError::EvalOutsideDomain(Complex64::new(r_cut, 0.0), p.eval_radius)));
    }
    let scale = 2f64.powi(opts.refine as i32);
    let width = opts.panel_width / n_big.sqrt() / scale;
    let count = (r_cut / width).ceil().max(1.0) as usize;
    let mut breaks: Vec<f64> = (0..=count).map(|i| r_cut * i as f64 / count as f64).collect();
    if let Some(a) = p.moments.pole() {
        let ra = a.norm();
        if p.moments.beta() > 0.0 && ra < r_cut {
            // split the panel containing |a| at |a| and halve its neighbours
            let i = breaks.iter().position(|&b| b >= ra).unwrap_or(count);
            let lo = breaks[i.saturating_sub(1)];
            let hi = breaks[i.min(count)];
            let mut extra = vec![ra, 0.5 * (lo + ra), 0.5 * (ra + hi)];
            if i >= 2 {
                extra.push(0.5 * (breaks[i - 2] + lo));
            }
            if i < count {
                extra.push(0.5 * (hi + breaks[i + 1]));
            }
            breaks.extend(extra);
            breaks.sort_by(f64::total_cmp);
            breaks.dedup_by(|x, y| (*x - *y).abs() < 1e-14);
        }
    }
    let gl = GaussLegendre::new(opts.radial_order);
    let mut radii = Vec::new();
    let mut radial_weights = Vec::new();
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let half = 0.5 * (hi - lo);
        for (x, wt) in gl.nodes.iter().zip(&gl.weights) {
            let rho = lo + half * (x + 1.0);
            radii.push(rho);
            radial_weights.push(half * wt * rho);
        }
    }
    let band = deformation_bandwidth(p, n_big, r_cut).ceil() as usize;
    let m = (4 * (max_degree + 1) + 2 * band + opts.angular_margin).div_ceil(4) * 4 * scale as usize;
    let angles: Vec<f64> = (0..m).map(|l| 2.0 * PI * l as f64 / m as f64).collect();
    let log_deformation = radii
        .par_iter()
        .map(|&rho| {
            angles
                .iter()
                .map(|&t| p.log_deformation(Complex64::from_polar(rho, t), n_big))
                .collect::<Result<Vec<f64>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?
        .concat();
    let extended = if opts.extended { Some(extended_nodes(p, n_big, &breaks, opts.radial_order, m)?) } else { None };
    Ok(PlanarGrid {
        scheme: GridScheme { radial_order: opts.radial_order, radial_breaks: breaks, angular_nodes: m, r_cut, refine: opts.refine },
        n_big,
        radii,
        radial_weights,
        angles,
        angular_weight: 2.0 * PI / m as f64,
        log_deformation,
        extended,
    })
}

fn extended_nodes(p: &Potential, n_big: f64, breaks: &[f64], order: usize, m: usize) -> Result<ExtendedNodes, QuadError> {
    let (xs, ws) = GaussLegendre::new_dd(order);
    let mut radii = Vec::new();
    let mut radial_weights = Vec::new();
    for w in breaks.windows(2) {
        let lo = Dd::from(w[0]);
        let half = Dd::from(0.5) * (Dd::from(w[1]) - lo);
        for (&x, &wt) in xs.iter().zip(&ws) {
            let rho = lo + half * (x + Dd::ONE);
            radii.push(rho);
            radial_weights.push(half * wt * rho);
        }
    }
    let phases: Vec<CDd> = (0..m).map(|l| unit_phase(l, m)).collect();
    let log_deformation = radii
        .par_iter()
        .map(|&rho| {
            phases
                .iter()
                .map(|u| p.log_deformation_dd(CDd::new(rho * u.re, rho * u.im), n_big))
                .collect::<Result<Vec<Dd>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?
        .concat();
    Ok(ExtendedNodes {
        radii,
        radial_weights,
        angular_weight: Dd::from(2.0) * Dd::PI / Dd::from(m as f64),
        phases,
        log_deformation,
    })
}

/// Σ_j w_j f(z_j) e^{-N W(z_j)}, summed ring by ring in double-double and
/// then across rings in index order, so the result does not depend on the
/// number of worker threads.
pub fn integrate<F>(grid: &PlanarGrid, f: F) -> Complex64
where
    F: Fn(Complex64) -> Complex64 + Sync,
{
    let rings: Vec<(Dd, Dd)> = (0..grid.radii.len())
        .into_par_iter()
        .map(|k| {
            let rho = grid.radii[k];
            let wr = grid.radial_weights[k] * grid.angular_weight;
            let (mut re, mut im) = (Dd::from(0.0), Dd::from(0.0));
            for (l, &t) in grid.angles.iter().enumerate() {
                let val = f(Complex64::from_polar(rho, t)) * (wr * grid.weight_factor(k, l));
                re += Dd::from(val.re);
                im += Dd::from(val.im);
            }
            (re, im)
        })
        .collect();
    let (mut re, mut im) = (Dd::from(0.0), Dd::from(0.0));
    for (a, b) in rings {
        re += a;
        im += b;
    }
    Complex64::new(re.0 + re.1, im.0 + im.1)
}

/// Integer m = Nβ, or NonIntegerBeta.
pub fn integer_m(m: f64) -> Result<u32, QuadError> {
    let r = m.round();
    if m < 0.0 || (m - r).abs() > 1e-9 * m.abs().max(1.0) {
        return Err(QuadError::NonIntegerBeta(m));
    }
    Ok(r as u32)
}

fn ln_binomial(m: u32, p: u32) -> f64 {
    ln_factorial(m as usize) - ln_factorial(p as usize) - ln_factorial((m - p) as usize)
}

/// ∫ z^i z̄^j e^{-N|z|²} |1 − z/a|^{2m} d²z by binomial expansion and exact
/// Gaussian moments G(s, t) = δ_st π s!/N^{s+1}.
pub fn gram_oracle_integer_beta(i: usize, j: usize, m: f64, a: Complex64, n_big: f64) -> Result<Complex64, QuadError> {
    oracle_scaled(i, j, m, a, n_big, 0.0)
}

/// The oracle in the prewhitened basis e_k = z^k √(N^{k+1}/(π k!)).
pub fn gram_oracle_prewhitened(i: usize, j: usize, m: f64, a: Complex64, n_big: f64) -> Result<Complex64, QuadError> {
    let ln_pw = |k: usize| 0.5 * ((k as f64 + 1.0) * n_big.ln() - PI.ln() - ln_factorial(k));
    oracle_scaled(i, j, m, a, n_big, ln_pw(i) + ln_pw(j))
}

fn oracle_scaled(i: usize, j: usize, m: f64, a: Complex64, n_big: f64, ln_scale: f64) -> Result<Complex64, QuadError> {
    let m = integer_m(m)?;
    let inv_a = -1.0 / a;
    let mut acc = Complex64::new(0.0, 0.0);
    for p in 0..=m {
        // i + p = j + q
        let q = i as i64 + p as i64 - j as i64;
        if q < 0 || q > m as i64 {
            continue;
        }
        let q = q as u32;
        let s = i + p as usize;
        let ln_mag = ln_binomial(m, p) + ln_binomial(m, q) + PI.ln() + ln_factorial(s) - (s as f64 + 1.0) * n_big.ln() + ln_scale;
        let phase = inv_a.powu(p) / inv_a.norm().powi(p as i32) * (inv_a.conj().powu(q) / inv_a.norm().powi(q as i32));
        let ln_a = inv_a.norm().ln() * (p + q) as f64;
        acc += phase * (ln_mag + ln_a).exp();
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::MomentData;

    fn geo(beta: f64, a: f64) -> Potential {
        Potential::new(MomentData::geometric(1.0, beta, Complex64::new(a, 0.0)).unwrap())
    }

    #[test]
    fn gauss_legendre_exactness() {
        let gl = GaussLegendre::new(24);
        for k in 0..48 {
            let got: f64 = gl.nodes.iter().zip(&gl.weights).map(|(x, w)| w * x.powi(k)).sum();
            let want = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            assert!((got - want).abs() < 1e-14, "k={k} got={got}");
        }
        let gl = GaussLegendre::new(5);
        assert!(gl.nodes[2].abs() < 1e-16);
    }

    #[test]
    fn gauss_legendre_dd_exactness() {
        let (xs, ws) = GaussLegendre::new_dd(24);
        for k in 0..48 {
            let mut got = Dd::ZERO;
            for (&x, &w) in xs.iter().zip(&ws) {
                let mut p = Dd::ONE;
                for _ in 0..k {
                    p *= x;
                }
                got += w * p;
            }
            let want = if k % 2 == 1 { Dd::ZERO } else { Dd::from(2.0) / Dd::from(k as f64 + 1.0) };
            assert!((got - want).0.abs() < 1e-29, "k={k}");
        }
    }

    #[test]
    fn gaussian_moments() {
        let p = geo(0.0, 2.0);
        let g = build_grid(&p, 8.0, 8, GridOptions::default()).unwrap();
        let mass = integrate(&g, |_| Complex64::new(1.0, 0.0));
        assert!((mass.re / (PI / 8.0) - 1.0).abs() < 1e-13);
        let g44 = integrate(&g, |z| Complex64::new(z.norm_sqr().powi(4), 0.0));
        let want = PI * 24.0 / 8f64.powi(5);
        assert!((g44.re / want - 1.0).abs() < 1e-12);
        let first = integrate(&g, |z| z);
        assert!(first.norm() < 1e-15);
        let g = build_grid(&p, 4.0, 4, GridOptions::default()).unwrap();
        let second = integrate(&g, |z| Complex64::new(z.norm_sqr(), 0.0));
        assert!((second.re - PI / 16.0).abs() < 1e-14 && (PI / 16.0 - 0.19635).abs() < 1e-5);
    }

    #[test]
    fn oracle_examples() {
        let a = Complex64::new(2.0, 0.0);
        let g = gram_oracle_integer_beta(3, 3, 0.0, a, 2.0).unwrap();
        assert!((g.re - 3.0 * PI / 8.0).abs() < 1e-14);
        assert_eq!(gram_oracle_integer_beta(3, 2, 0.0, a, 2.0).unwrap(), Complex64::new(0.0, 0.0));
        let g = gram_oracle_integer_beta(0, 0, 1.0, a, 1.0).unwrap();
        assert!((g.re - 1.25 * PI).abs() < 1e-14);
        assert!(matches!(gram_oracle_integer_beta(0, 0, 1.5, a, 1.0), Err(QuadError::NonIntegerBeta(_))));
    }

    #[test]
    fn weighted_integral_matches_oracle() {
        let p = geo(0.5, 2.0);
        let g = build_grid(&p, 8.0, 8, GridOptions::default()).unwrap();
        let a = Complex64::new(2.0, 0.0);
        for (i, j) in [(0, 0), (2, 1), (5, 5), (8, 6)] {
            let got = integrate(&g, |z| z.powu(i as u32) * z.conj().powu(j as u32));
            let want = gram_oracle_integer_beta(i, j, 4.0, a, 8.0).unwrap();
            assert!((got - want).norm() <= 1e-12 * want.norm(), "({i},{j}) {got} {want}");
        }
    }

    #[test]
    fn not_confining_is_reported() {
        let t = vec![Complex64::new(0.0, 0.0), Complex64::new(0.6, 0.0)];
        let p = Potential::new(MomentData::explicit(1.0, t, false).unwrap());
        assert!(matches!(build_grid(&p, 4.0, 4, GridOptions::default()), Err(QuadError::NotConfining(_))));
    }
}
