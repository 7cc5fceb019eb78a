//! Rational exterior map f(ζ) = rζ + u + v/(ζ − A), its inverse, the
//! (β, a, t0) correspondence, regime classification and boundary sampling.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::moments::{MomentData, MomentKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("degenerate map: A = 0 with v != 0")]
    DegenerateMap,
    #[error("parameter solve did not converge (scaled residual {residual:e})")]
    NoConvergence { residual: f64 },
    #[error("parameters lie in the doubly connected regime (R1 = {}, R2 = {})", .0.r1, .0.r2)]
    RegimeViolation(Regime),
    #[error("point lies inside the droplet")]
    InteriorPoint,
    #[error("point is a branch point of the inverse map (double root ζ = {zeta})")]
    BranchPoint { zeta: Complex64 },
    #[error("conformal measure diverges at ζ = {zeta}")]
    CuspSingular { zeta: Complex64 },
    #[error("boundary polyline self-intersects")]
    SelfIntersection,
    #[error("point is not on the boundary (|ζ| = {0})")]
    NotOnBoundary(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegimeTag {
    SimplyConnected,
    DoublyConnected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub tag: RegimeTag,
    pub r1: f64,
    pub r2: f64,
}

/// Regime with R1 = √β and R2 = √((1+2β)/2).
pub fn classify_regime(beta: f64, a: Complex64) -> Regime {
    regime_from_radii(beta.sqrt(), ((1.0 + 2.0 * beta) / 2.0).sqrt(), a)
}

/// Regime for arbitrary area: the annulus radii are √β and √(t0 + β).
/// Coincides with [`classify_regime`] at t0 = 1/2.
pub fn classify_regime_at(beta: f64, a: Complex64, t0: f64) -> Regime {
    regime_from_radii(beta.sqrt(), (t0 + beta).sqrt(), a)
}

fn regime_from_radii(r1: f64, r2: f64, a: Complex64) -> Regime {
    let tag = if a.norm() + r1 <= r2 { RegimeTag::DoublyConnected } else { RegimeTag::SimplyConnected };
    Regime { tag, r1, r2 }
}

/// (β, a, t0) as given by the correspondence formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub beta: f64,
    pub a: Complex64,
    pub t0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RationalMap {
    pub r: f64,
    pub u: Complex64,
    pub v: Complex64,
    /// The parameter A (pole of f inside the unit disk).
    pub pole: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundarySample {
    pub theta: f64,
    pub z: Complex64,
    pub measure: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolvedMap {
    pub map: RationalMap,
    /// Both critical points inside the unit disk and the sampled boundary simple.
    pub univalent: bool,
    pub newton_iterations: usize,
    pub homotopy_steps: usize,
}

const ONE: Complex64 = Complex64::new(1.0, 0.0);

impl RationalMap {
    /// Map with u = v/A.
    pub fn new(r: f64, v: Complex64, pole: Complex64) -> Result<Self, MapError> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(MapError::InvalidArgument(format!("r must be positive, got {r}")));
        }
        if pole.norm() >= 1.0 {
            return Err(MapError::InvalidArgument(format!("|A| must be < 1, got {}", pole.norm())));
        }
        let u = if pole == Complex64::default() {
            if v != Complex64::default() {
                return Err(MapError::DegenerateMap);
            }
            Complex64::default()
        } else {
            v / pole
        };
        Ok(RationalMap { r, u, v, pole })
    }

    /// Disk of area π t0.
    pub fn disk(t0: f64) -> Self {
        RationalMap { r: t0.sqrt(), u: Complex64::default(), v: Complex64::default(), pole: Complex64::default() }
    }

    pub fn is_disk(&self) -> bool {
        self.v == Complex64::default()
    }

    pub fn eval(&self, zeta: Complex64) -> Complex64 {
        if self.is_disk() {
            return self.r * zeta + self.u;
        }
        self.r * zeta + self.u + self.v / (zeta - self.pole)
    }

    pub fn deriv(&self, zeta: Complex64) -> Complex64 {
        if self.is_disk() {
            return Complex64::new(self.r, 0.0);
        }
        let d = zeta - self.pole;
        self.r - self.v / (d * d)
    }

    pub fn second_deriv(&self, zeta: Complex64) -> Complex64 {
        if self.is_disk() {
            return Complex64::default();
        }
        let d = zeta - self.pole;
        2.0 * self.v / (d * d * d)
    }

    /// Roots of f'(ζ) = 0: A ± √(v/r).
    pub fn critical_points(&self) -> [Complex64; 2] {
        let s = (self.v / self.r).sqrt();
        [self.pole + s, self.pole - s]
    }

    pub fn critical_points_inside(&self) -> bool {
        self.critical_points().iter().all(|c| c.norm() < 1.0)
    }

    /// Area over π: r² − |v|²/(1−|A|²)².
    pub fn t0(&self) -> f64 {
        let d = 1.0 - self.pole.norm_sqr();
        self.r * self.r - self.v.norm_sqr() / (d * d)
    }

    /// Image of the reflected pole 1/Ā, where the Schwarz function has its pole.
    pub fn exterior_pole(&self) -> Option<Complex64> {
        if self.pole == Complex64::default() {
            None
        } else {
            Some(self.eval(ONE / self.pole.conj()))
        }
    }

    /// Residue of the Schwarz function S(z) = f̄(1/f⁻¹(z)) at the exterior pole.
    pub fn schwarz_residue(&self) -> Complex64 {
        if self.pole == Complex64::default() {
            return Complex64::default();
        }
        let ab = self.pole.conj();
        -self.v.conj() * self.deriv(ONE / ab) / (ab * ab)
    }

    /// The correspondence formulas, evaluated literally.
    pub fn forward_params(&self) -> Result<Correspondence, MapError> {
        let t0 = self.t0();
        if self.pole == Complex64::default() {
            if self.is_disk() {
                return Ok(Correspondence { beta: 0.0, a: Complex64::new(f64::INFINITY, 0.0), t0 });
            }
            return Err(MapError::DegenerateMap);
        }
        let ab = self.pole.conj();
        let d = 1.0 - self.pole.norm_sqr();
        let beta = t0 - self.r * self.r + self.r * self.v.conj() / (ab * ab);
        let a = self.r / ab + self.v / self.pole + self.v * ab / d;
        Ok(Correspondence { beta: beta.re, a, t0 })
    }

    /// β of the geometric moment sequence whose droplet this map bounds: the
    /// residue of the Schwarz function at z = a, which is minus the β of
    /// [`RationalMap::forward_params`].
    pub fn moment_beta(&self) -> f64 {
        self.schwarz_residue().re
    }

    /// Solve z = f(ζ) for the exterior preimage.
    pub fn inverse(&self, z: Complex64) -> Result<Complex64, MapError> {
        if self.is_disk() {
            let zeta = (z - self.u) / self.r;
            if zeta.norm() < 1.0 - 1e-10 {
                return Err(MapError::InteriorPoint);
            }
            return Ok(zeta);
        }
        let a = self.pole;
        let b = self.u - self.r * a - z;
        let c = self.v - self.u * a + z * a;
        let disc = b * b - 4.0 * self.r * c;
        let scale = b.norm_sqr().max((4.0 * self.r * c).norm());
        if disc.norm() <= 1e-13 * scale {
            return Err(MapError::BranchPoint { zeta: -b / (2.0 * self.r) });
        }
        let sq = disc.sqrt();
        let q = if (b + sq).norm() >= (b - sq).norm() { -(b + sq) / 2.0 } else { -(b - sq) / 2.0 };
        let z1 = q / self.r;
        let z2 = if q.norm() > 0.0 { c / q } else { z1 };
        let (m1, m2) = (z1.norm(), z2.norm());
        if m1 < 1.0 - 1e-10 && m2 < 1.0 - 1e-10 {
            return Err(MapError::InteriorPoint);
        }
        let pick = if (m1 - m2).abs() <= 1e-12 * m1.max(m2) {
            if z1.re >= z2.re { z1 } else { z2 }
        } else if m1 > m2 {
            z1
        } else {
            z2
        };
        Ok(pick)
    }

    /// |∂_z f⁻¹(z)| = 1/|f'(ζ)| for z on the boundary.
    pub fn conformal_measure(&self, z: Complex64) -> Result<f64, MapError> {
        let zeta = match self.inverse(z) {
            Ok(zeta) => zeta,
            Err(MapError::BranchPoint { zeta }) => zeta,
            Err(e) => return Err(e),
        };
        if (zeta.norm() - 1.0).abs() > 1e-8 {
            return Err(MapError::NotOnBoundary(zeta.norm()));
        }
        self.measure_at(zeta)
    }

    fn measure_at(&self, zeta: Complex64) -> Result<f64, MapError> {
        let fp = self.deriv(zeta).norm();
        if fp < 1e-12 * self.r {
            return Err(MapError::CuspSingular { zeta });
        }
        Ok(1.0 / fp)
    }

    /// M equispaced samples of the boundary f(e^{iθ}).
    pub fn sample_boundary(&self, m: usize) -> Result<Vec<BoundarySample>, MapError> {
        if m < 16 {
            return Err(MapError::InvalidArgument(format!("need at least 16 samples, got {m}")));
        }
        let out = (0..m)
            .map(|j| {
                let theta = 2.0 * PI * j as f64 / m as f64;
                let zeta = Complex64::from_polar(1.0, theta);
                Ok(BoundarySample { theta, z: self.eval(zeta), measure: self.measure_at(zeta)? })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let pts: Vec<Complex64> = out.iter().map(|s| s.z).collect();
        if polyline_self_intersects(&pts) {
            return Err(MapError::SelfIntersection);
        }
        Ok(out)
    }

    /// Boundary points only, without the simplicity check.
    pub fn boundary_polygon(&self, m: usize) -> Vec<Complex64> {
        (0..m).map(|j| self.eval(Complex64::from_polar(1.0, 2.0 * PI * j as f64 / m as f64))).collect()
    }

    /// Critical points inside the disk and a simple 4096-gon boundary.
    pub fn is_univalent(&self) -> bool {
        self.critical_points_inside() && !polyline_self_intersects(&self.boundary_polygon(4096))
    }

    /// Closed-form branch points v/A + A r ± 2√(r v), ordered by real then imaginary part.
    pub fn branch_points(&self) -> (Complex64, Complex64) {
        let base = if self.pole == Complex64::default() { Complex64::default() } else { self.v / self.pole };
        let c = base + self.pole * self.r;
        let s = 2.0 * (self.r * self.v).sqrt();
        let (p, q) = (c + s, c - s);
        let less = p.re < q.re || (p.re == q.re && p.im <= q.im);
        if less { (p, q) } else { (q, p) }
    }

    /// Rotate the map so that z → e^{iφ} z.
    pub fn rotated(&self, phi: f64) -> Self {
        let e = Complex64::from_polar(1.0, phi);
        RationalMap { r: self.r, u: self.u * e, v: self.v * e * e, pole: self.pole * e }
    }
}

/// True when two non-adjacent edges of the closed polyline intersect.
pub fn polyline_self_intersects(pts: &[Complex64]) -> bool {
    let m = pts.len();
    if m < 4 {
        return false;
    }
    let seg = |i: usize| (pts[i], pts[(i + 1) % m]);
    let bbox = |(p, q): (Complex64, Complex64)| (p.re.min(q.re), p.re.max(q.re), p.im.min(q.im), p.im.max(q.im));
    let boxes: Vec<_> = (0..m).map(|i| bbox(seg(i))).collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| boxes[i].0.total_cmp(&boxes[j].0));
    for (oi, &i) in order.iter().enumerate() {
        let bi = boxes[i];
        for &j in &order[oi + 1..] {
            let bj = boxes[j];
            if bj.0 > bi.1 {
                break;
            }
            if bj.2 > bi.3 || bj.3 < bi.2 {
                continue;
            }
            let d = if i > j { i - j } else { j - i };
            if d <= 1 || d == m - 1 {
                continue;
            }
            if segments_intersect(seg(i), seg(j)) {
                return true;
            }
        }
    }
    false
}

fn cross(o: Complex64, a: Complex64, b: Complex64) -> f64 {
    (a - o).re * (b - o).im - (a - o).im * (b - o).re
}

pub(crate) fn segments_intersect((p1, p2): (Complex64, Complex64), (q1, q2): (Complex64, Complex64)) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(z: Complex64, poly: &[Complex64]) -> bool {
    let m = poly.len();
    let mut inside = false;
    for i in 0..m {
        let (p, q) = (poly[i], poly[(i + 1) % m]);
        if (p.im > z.im) != (q.im > z.im) {
            let x = p.re + (z.im - p.im) * (q.re - p.re) / (q.im - p.im);
            if z.re < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Shoelace area of a closed polygon.
pub fn polygon_area(poly: &[Complex64]) -> f64 {
    let m = poly.len();
    0.5 * (0..m).map(|i| cross(Complex64::default(), poly[i], poly[(i + 1) % m])).sum::<f64>()
}

const MAX_NEWTON: usize = 50;
const MAX_HOMOTOPY: usize = 8;
const RESIDUAL_TOL: f64 = 1e-13;

/// Solve the correspondence formulas for (r, v, A) given (β, a, t0).
pub fn solve_params(beta: f64, a: Complex64, t0: f64) -> Result<SolvedMap, MapError> {
    check_inputs(beta, a, t0)?;
    let regime = classify_regime(beta, a);
    if regime.tag == RegimeTag::DoublyConnected {
        return Err(MapError::RegimeViolation(regime));
    }
    solve_signed(beta, a, t0)
}

/// The droplet bounded by the support of the equilibrium measure for the
/// weight e^{-N|z|²}|1 − z/a|^{2Nβ} at area t0. Its correspondence-β is −β.
pub fn solve_droplet(moments: &MomentData) -> Result<SolvedMap, MapError> {
    let MomentKind::Geometric { beta, a } = moments.kind else {
        return Err(MapError::InvalidArgument("droplet maps exist only for geometric moments".into()));
    };
    check_inputs(beta, a, moments.t0)?;
    let regime = classify_regime_at(beta, a, moments.t0);
    if regime.tag == RegimeTag::DoublyConnected {
        return Err(MapError::RegimeViolation(regime));
    }
    solve_signed(-beta, a, moments.t0)
}

fn check_inputs(beta: f64, a: Complex64, t0: f64) -> Result<(), MapError> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(MapError::InvalidArgument(format!("beta must be nonnegative, got {beta}")));
    }
    if !(a.norm() > 0.0 && a.norm().is_finite()) {
        return Err(MapError::InvalidArgument("a must be finite and nonzero".into()));
    }
    if !(t0 > 0.0 && t0.is_finite()) {
        return Err(MapError::InvalidArgument(format!("t0 must be positive, got {t0}")));
    }
    Ok(())
}

/// Solve with a correspondence-β of either sign: real system for |a|, then rotate.
pub fn solve_signed(beta: f64, a: Complex64, t0: f64) -> Result<SolvedMap, MapError> {
    let abs_a = a.norm();
    let phi = a.arg();
    let start = [t0.sqrt(), 0.0, (t0.sqrt() / abs_a).min(0.9)];
    let mut best = f64::INFINITY;
    let mut total_iters = 0;
    let mut steps = 1;
    while steps <= MAX_HOMOTOPY {
        let mut x = start;
        let mut ok = true;
        for s in 1..=steps {
            let b = beta * s as f64 / steps as f64;
            match newton_real(x, b, abs_a, t0) {
                Ok((xn, it)) => {
                    x = xn;
                    total_iters += it;
                }
                Err(res) => {
                    best = best.min(res);
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            let [r, v, aa] = x;
            let map = RationalMap::new(r, Complex64::new(v, 0.0), Complex64::new(aa, 0.0))?.rotated(phi);
            let map = if beta == 0.0 { RationalMap { v: Complex64::default(), u: Complex64::default(), ..map } } else { map };
            return Ok(SolvedMap { map, univalent: map.is_univalent(), newton_iterations: total_iters, homotopy_steps: steps });
        }
        steps *= 2;
    }
    Err(MapError::NoConvergence { residual: best })
}

fn residual(x: [f64; 3], beta: f64, abs_a: f64, t0: f64) -> [f64; 3] {
    let [r, v, a] = x;
    let d = 1.0 - a * a;
    let area = r * r - v * v / (d * d);
    let b = area - r * r + r * v / (a * a);
    let aa = r / a + v / a + v * a / d;
    [
        (area - t0) / t0.max(1.0),
        (b - beta) / beta.abs().max(1.0),
        (aa - abs_a) / abs_a.max(1.0),
    ]
}

fn jacobian(x: [f64; 3], beta: f64, abs_a: f64, t0: f64) -> [[f64; 3]; 3] {
    let [r, v, a] = x;
    let d = 1.0 - a * a;
    let (s0, s1, s2) = (t0.max(1.0), beta.abs().max(1.0), abs_a.max(1.0));
    let da_area = -4.0 * a * v * v / (d * d * d);
    [
        [2.0 * r / s0, -2.0 * v / (d * d) / s0, da_area / s0],
        [v / (a * a) / s1, (-2.0 * v / (d * d) + r / (a * a)) / s1, (da_area - 2.0 * r * v / (a * a * a)) / s1],
        [1.0 / a / s2, (1.0 / a + a / d) / s2, (-(r + v) / (a * a) + v * (1.0 + a * a) / (d * d)) / s2],
    ]
}

fn norm_inf(f: [f64; 3]) -> f64 {
    f.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn solve3(m: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&m);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let mut mc = m;
        for row in 0..3 {
            mc[row][c] = b[row];
        }
        *o = det(&mc) / d;
    }
    Some(out)
}

/// Damped Newton on the real system; Err carries the best residual reached.
fn newton_real(mut x: [f64; 3], beta: f64, abs_a: f64, t0: f64) -> Result<([f64; 3], usize), f64> {
    let mut f = residual(x, beta, abs_a, t0);
    let mut fnorm = norm_inf(f);
    for it in 0..MAX_NEWTON {
        if fnorm <= RESIDUAL_TOL {
            return Ok((x, it));
        }
        let Some(dx) = solve3(jacobian(x, beta, abs_a, t0), f) else { return Err(fnorm) };
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = [x[0] - lambda * dx[0], x[1] - lambda * dx[1], x[2] - lambda * dx[2]];
            if trial[0] > 0.0 && trial[2] > 0.0 && trial[2] < 1.0 {
                let ft = residual(trial, beta, abs_a, t0);
                let nt = norm_inf(ft);
                if nt.is_finite() && (nt < fnorm || nt <= RESIDUAL_TOL) {
                    x = trial;
                    f = ft;
                    fnorm = nt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return if fnorm <= 1e3 * RESIDUAL_TOL { Ok((x, it)) } else { Err(fnorm) };
        }
    }
    if fnorm <= RESIDUAL_TOL {
        Ok((x, MAX_NEWTON))
    } else {
        Err(fnorm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn example() -> RationalMap {
        RationalMap::new(1.0, c(0.25, 0.0), c(0.5, 0.0)).unwrap()
    }

    #[test]
    fn regime_examples() {
        let r = classify_regime(0.5, c(2.6667, 0.0));
        assert_eq!(r.tag, RegimeTag::SimplyConnected);
        assert!((r.r1 - 0.5f64.sqrt()).abs() < 1e-15 && (r.r2 - 1.0).abs() < 1e-15);
        let r = classify_regime(2.0, c(0.05, 0.0));
        assert_eq!(r.tag, RegimeTag::DoublyConnected);
        assert!((r.r2 - 2.5f64.sqrt()).abs() < 1e-15);
        let r = classify_regime(1e-12, c(0.5, 0.0));
        assert_eq!(r.tag, RegimeTag::DoublyConnected);
        let r = classify_regime(1e-12, c(0.8, 0.0));
        assert_eq!(r.tag, RegimeTag::SimplyConnected);
        assert_eq!(classify_regime_at(0.7, c(0.3, 0.0), 0.5), classify_regime(0.7, c(0.3, 0.0)));
    }

    #[test]
    fn forward_examples() {
        let p = example().forward_params().unwrap();
        assert!((p.t0 - 8.0 / 9.0).abs() < 1e-15);
        assert!((p.beta - 8.0 / 9.0).abs() < 1e-15);
        assert!((p.a - c(8.0 / 3.0, 0.0)).norm() < 1e-15);
        let m = RationalMap::new(1.2, c(0.3, 0.0), c(0.4, 0.0)).unwrap();
        let p = m.forward_params().unwrap();
        // independent evaluation
        let t0 = 1.44 - 0.09 / (0.84f64 * 0.84);
        assert!((p.t0 - t0).abs() < 1e-14 && (p.t0 - 1.312449).abs() < 1e-6);
        assert!((p.beta - (t0 - 1.44 + 1.2 * 0.3 / 0.16)).abs() < 1e-14);
        assert!((p.a.re - (3.0 + 0.75 + 0.12 / 0.84)).abs() < 1e-14);
        let d = RationalMap::disk(1.0).forward_params().unwrap();
        assert_eq!((d.beta, d.t0), (0.0, 1.0));
        let bad = RationalMap { r: 1.0, u: c(0.0, 0.0), v: c(0.1, 0.0), pole: c(0.0, 0.0) };
        assert_eq!(bad.forward_params(), Err(MapError::DegenerateMap));
    }

    #[test]
    fn solve_examples() {
        // The worked triple sits on the cusp fold, so the map is only
        // recoverable to about sqrt(machine epsilon).
        let s = solve_params(8.0 / 9.0, c(8.0 / 3.0, 0.0), 8.0 / 9.0).unwrap();
        let p = s.map.forward_params().unwrap();
        assert!((p.beta - 8.0 / 9.0).abs() < 1e-12 && (p.t0 - 8.0 / 9.0).abs() < 1e-12);
        assert!((p.a - c(8.0 / 3.0, 0.0)).norm() < 1e-12);
        assert!((s.map.r - 1.0).abs() < 1e-7);
        assert!((s.map.v - c(0.25, 0.0)).norm() < 1e-7);
        assert!((s.map.pole - c(0.5, 0.0)).norm() < 1e-7);
        let s = solve_params(8.0 / 9.0, c(0.0, 8.0 / 3.0), 8.0 / 9.0).unwrap();
        assert!((s.map.pole - c(0.0, 0.5)).norm() < 1e-7);
        assert!((s.map.v - c(-0.25, 0.0)).norm() < 1e-7);
        let s = solve_params(0.0, c(3.0, 0.0), 1.0).unwrap();
        assert!((s.map.r - 1.0).abs() < 1e-15 && s.map.v == c(0.0, 0.0));
        let s = solve_params(1e-6, c(3.0, 0.0), 1.0).unwrap();
        assert!((s.map.r - 1.0).abs() < 1e-5 && s.map.v.norm() < 1e-5);
        assert!(matches!(solve_params(2.0, c(0.05, 0.0), 1.0), Err(MapError::RegimeViolation(_))));
    }

    #[test]
    fn droplet_sign() {
        let m = MomentData::geometric(1.0, 0.5, c(3.0, 0.0)).unwrap();
        let s = solve_droplet(&m).unwrap();
        assert!((s.map.r - 1.00150441).abs() < 1e-7);
        assert!((s.map.v.re + 0.04940977).abs() < 1e-7);
        assert!((s.map.pole.re - 0.31554367).abs() < 1e-7);
        assert!((s.map.moment_beta() - 0.5).abs() < 1e-12);
        assert!((s.map.exterior_pole().unwrap() - c(3.0, 0.0)).norm() < 1e-12);
        assert!(s.univalent);
    }

    #[test]
    fn forward_and_inverse() {
        let m = example();
        assert!((m.eval(c(2.0, 0.0)) - c(8.0 / 3.0, 0.0)).norm() < 1e-15);
        assert!((m.eval(c(1.0, 0.0)) - c(2.0, 0.0)).norm() < 1e-15);
        assert!((m.inverse(c(8.0 / 3.0, 0.0)).unwrap() - c(2.0, 0.0)).norm() < 1e-14);
        match m.inverse(c(2.0, 0.0)) {
            Err(MapError::BranchPoint { zeta }) => assert!((zeta - c(1.0, 0.0)).norm() < 1e-12),
            other => panic!("{other:?}"),
        }
        let d = RationalMap::disk(1.0);
        let e = Complex64::from_polar(1.0, 0.7);
        assert!((d.eval(e) - e).norm() < 1e-15 && (d.inverse(e).unwrap() - e).norm() < 1e-15);
        assert_eq!(m.inverse(c(0.1, 0.0)), Err(MapError::InteriorPoint));
    }

    #[test]
    fn measure_examples() {
        let m = example();
        let z = m.eval(c(-1.0, 0.0));
        assert!((z.re + 2.0 / 3.0).abs() < 1e-15);
        assert!((m.conformal_measure(z).unwrap() - 1.125).abs() < 1e-12);
        assert!(matches!(m.conformal_measure(c(2.0, 0.0)), Err(MapError::CuspSingular { .. })));
        let d = RationalMap::disk(2.0);
        let z = Complex64::from_polar(2f64.sqrt(), 1.1);
        assert!((d.conformal_measure(z).unwrap() - 1.0 / 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn sampling() {
        let d = RationalMap::disk(1.0);
        let s = d.sample_boundary(16).unwrap();
        for (j, want) in [(0, c(1.0, 0.0)), (4, c(0.0, 1.0)), (8, c(-1.0, 0.0)), (12, c(0.0, -1.0))] {
            assert!((s[j].z - want).norm() < 1e-15);
            assert!((s[j].measure - 1.0).abs() < 1e-15);
        }
        assert!(matches!(example().sample_boundary(64), Err(MapError::CuspSingular { .. })));
        assert!(d.sample_boundary(8).is_err());
        let m = MomentData::geometric(1.0, 0.3, c(2.0, 0.0)).unwrap();
        let map = solve_droplet(&m).unwrap().map;
        let pts: Vec<_> = map.sample_boundary(256).unwrap().iter().map(|s| s.z).collect();
        assert!((polygon_area(&pts) / PI - 1.0).abs() < 1e-3);
    }

    #[test]
    fn branch_points_example() {
        let (z1, z2) = example().branch_points();
        assert!((z1 - c(0.0, 0.0)).norm() < 1e-15 && (z2 - c(2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn polygon_helpers() {
        let sq = [c(0.0, 0.0), c(1.0, 0.0), c(1.0, 1.0), c(0.0, 1.0)];
        assert!((polygon_area(&sq) - 1.0).abs() < 1e-15);
        assert!(point_in_polygon(c(0.5, 0.5), &sq));
        assert!(!point_in_polygon(c(1.5, 0.5), &sq));
        let bow = [c(0.0, 0.0), c(1.0, 1.0), c(1.0, 0.0), c(0.0, 1.0)];
        assert!(polyline_self_intersects(&bow));
        assert!(!polyline_self_intersects(&sq));
    }
}
