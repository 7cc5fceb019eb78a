//! The algebraic curve of the Cauchy transform, the branch jump, Φ and the
//! critical trajectory, plus the density and zero diagnostics built on them.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::{Complex, Complex64};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conformal::{point_in_polygon, MapError, RationalMap};
use crate::orthopoly::{polynomial_roots, OrthoBasis, OrthoError};
use crate::precision::{c64, cx, CDd, Dd};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("elimination degenerates: {0}")]
    DegenerateElimination(String),
    #[error("z = {0} is a branch point")]
    BranchPointHit(Complex64),
    #[error("path to z = {0} crosses a branch cut")]
    PathCrossesCut(Complex64),
    #[error("z = {0} is a pole of the jump")]
    PoleHit(Complex64),
    #[error("no Φ = 0 component joins the branch points inside the droplet ({} components found)", .0.len())]
    NoInteriorComponent(Vec<ComponentSummary>),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Ortho(#[from] OrthoError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Ratio of two polynomials in z, coefficients in ascending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rational {
    pub num: Vec<Complex64>,
    pub den: Vec<Complex64>,
}

impl Rational {
    fn polynomial(num: Vec<Complex64>) -> Self {
        Rational { num, den: vec![ONE] }
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        horner(&self.num, z) / horner(&self.den, z)
    }
}

/// A(z) y² + B(z) y + C(z) = 0 for y = S(z) − V'(z), where S is the Schwarz
/// function of the droplet and V'(z) = res/(z − a) its polar part.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlgebraicCurve {
    pub coeff_a: Rational,
    pub coeff_b: Rational,
    pub coeff_c: Rational,
    pub map: RationalMap,
    /// Pole of V'.
    pub pole: Complex64,
    /// Residue of V' at the pole.
    pub residue: Complex64,
    pub t0: f64,
    /// Branch points as returned by [`RationalMap::branch_points`].
    pub z1: Complex64,
    pub z2: Complex64,
    /// y_+ − y_- = h(z) √((z−z1)(z−z2)) / q(z).
    pub jump_num: Vec<Complex64>,
    pub jump_den: Vec<Complex64>,
    /// Poles of the jump.
    pub jump_poles: Vec<Complex64>,
    /// Re ∫ from z1 to the midpoint of the branch points.
    phi_mid: f64,
}

/// Sign memory for continuing the square root along a path.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BranchToken {
    pub last: Option<Complex64>,
}

fn horner(c: &[Complex64], z: Complex64) -> Complex64 {
    c.iter().rev().fold(ZERO, |acc, ci| acc * z + ci)
}

fn horner_abs(c: &[Complex64], z: Complex64) -> f64 {
    let r = z.norm();
    c.iter().rev().fold(0.0, |acc, ci| acc * r + ci.norm())
}

type Poly = Vec<CDd>;

fn dzero() -> CDd {
    cx(ZERO)
}

fn padd(a: &Poly, b: &Poly, sign: f64) -> Poly {
    let n = a.len().max(b.len());
    let s = Dd::from(sign);
    (0..n)
        .map(|i| {
            let x = a.get(i).copied().unwrap_or_else(dzero);
            let y = b.get(i).copied().unwrap_or_else(dzero);
            Complex::new(x.re + s * y.re, x.im + s * y.im)
        })
        .collect()
}

fn pmul(a: &Poly, b: &Poly) -> Poly {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![dzero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] = out[i + j] + *x * *y;
        }
    }
    out
}

fn pscale(a: &Poly, s: CDd) -> Poly {
    a.iter().map(|x| *x * s).collect()
}

fn peval(c: &Poly, z: CDd) -> CDd {
    c.iter().rev().fold(dzero(), |acc, ci| acc * z + *ci)
}

fn pabs(c: &Poly, z: Complex64) -> f64 {
    horner_abs(&to64(c), z)
}

fn to64(c: &Poly) -> Vec<Complex64> {
    c.iter().map(|x| c64(*x)).collect()
}

/// Drop trailing coefficients that are negligible against the largest one.
fn ptrim(mut c: Poly, rel: f64) -> Poly {
    let big = c.iter().map(|x| c64(*x).norm()).fold(0.0, f64::max);
    while c.len() > 1 && c64(*c.last().unwrap()).norm() <= rel * big {
        c.pop();
    }
    c
}

/// Synthetic division by (z − w); returns the quotient and the remainder.
fn pdiv_linear(c: &Poly, w: CDd) -> (Poly, CDd) {
    let n = c.len();
    if n == 0 {
        return (Vec::new(), dzero());
    }
    let mut q = vec![dzero(); n - 1];
    let mut acc = c[n - 1];
    for i in (0..n - 1).rev() {
        q[i] = acc;
        acc = c[i] + acc * w;
    }
    (q, acc)
}

/// Long division a = q b + r.
fn pdiv(a: &Poly, b: &Poly) -> (Poly, Poly) {
    let db = b.len() - 1;
    let lead = b[db];
    let mut r = a.clone();
    if a.len() < b.len() {
        return (vec![dzero()], r);
    }
    let mut q = vec![dzero(); a.len() - db];
    for k in (0..q.len()).rev() {
        let coef = r[k + db] / lead;
        q[k] = coef;
        for (j, bj) in b.iter().enumerate() {
            r[k + j] = r[k + j] - coef * *bj;
        }
    }
    r.truncate(db);
    (q, r)
}

/// Square root of a polynomial of even degree that is a perfect square.
fn psqrt(c: &Poly) -> Option<Poly> {
    let n = c.len() - 1;
    if n % 2 == 1 {
        return None;
    }
    let m = n / 2;
    // work in descending order
    let d: Vec<CDd> = c.iter().rev().copied().collect();
    let lead = c64(d[0]).sqrt();
    let mut h = vec![dzero(); m + 1];
    h[0] = cdd_sqrt(d[0], lead);
    let two = Dd::from(2.0);
    for k in 1..=m {
        let mut s = d[k];
        for i in 1..k {
            s = s - h[i] * h[k - i];
        }
        let den = h[0] * two;
        h[k] = s / den;
    }
    h.reverse();
    Some(h)
}

/// Double-double square root polished from a double seed by one Newton step.
fn cdd_sqrt(x: CDd, seed: Complex64) -> CDd {
    if seed == ZERO {
        return dzero();
    }
    let s: CDd = cx(seed);
    let half = Dd::from(0.5);
    let t = s + x / s;
    Complex::new(t.re * half, t.im * half)
}

/// Bivariate polynomial, entry [i][j] multiplies z^i S^j.
type Biv = Vec<Vec<CDd>>;

fn bnew(nz: usize, ns: usize) -> Biv {
    vec![vec![dzero(); ns]; nz]
}

fn bmul(a: &Biv, b: &Biv) -> Biv {
    let (az, as_) = (a.len(), a[0].len());
    let (bz, bs) = (b.len(), b[0].len());
    let mut out = bnew(az + bz - 1, as_ + bs - 1);
    for i in 0..az {
        for j in 0..as_ {
            for k in 0..bz {
                for l in 0..bs {
                    out[i + k][j + l] = out[i + k][j + l] + a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

fn bsub(a: &Biv, b: &Biv) -> Biv {
    let nz = a.len().max(b.len());
    let ns = a[0].len().max(b[0].len());
    let mut out = bnew(nz, ns);
    for (i, row) in out.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            let p = a.get(i).and_then(|r| r.get(j)).copied().unwrap_or_else(dzero);
            let q = b.get(i).and_then(|r| r.get(j)).copied().unwrap_or_else(dzero);
            *x = p - q;
        }
    }
    out
}

/// Bivariate constant c0 + cz z + cs S.
fn blin(c0: CDd, cz: CDd, cs: CDd) -> Biv {
    vec![vec![c0, cs], vec![cz, dzero()]]
}

/// Resultant in ζ of p2 ζ² + p1 ζ + p0 and q2 ζ² + q1 ζ + q0, expanded from
/// the 4×4 Sylvester determinant.
fn resultant2(p: [&Biv; 3], q: [&Biv; 3]) -> Biv {
    let [p2, p1, p0] = p;
    let [q2, q1, q0] = q;
    let t = bsub(&bmul(p2, q0), &bmul(p0, q2));
    let u = bsub(&bmul(p2, q1), &bmul(p1, q2));
    let w = bsub(&bmul(p1, q0), &bmul(p0, q1));
    bsub(&bmul(&t, &t), &bmul(&u, &w))
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// (z − a)^k.
fn ppow_linear(a: CDd, k: usize) -> Poly {
    let mut out = vec![cx::<Dd>(ONE)];
    let lin = vec![-a, cx::<Dd>(ONE)];
    for _ in 0..k {
        out = pmul(&out, &lin);
    }
    out
}

const FACTOR_TOL: f64 = 1e-8;

/// Eliminate ζ from z = f(ζ) and S = f̄(1/ζ), then shift S = y + res/(z − a).
pub fn build_curve(map: &RationalMap) -> Result<AlgebraicCurve, SpectralError> {
    if map.is_disk() || map.pole == ZERO {
        return Err(SpectralError::DegenerateElimination(
            "v = 0: the droplet is a disk and the transform is t0/z".into(),
        ));
    }
    let (z1, z2) = map.branch_points();
    if (z1 - z2).norm() <= 1e-12 * (z1.norm() + z2.norm()).max(1.0) {
        return Err(SpectralError::DegenerateElimination("branch points coincide".into()));
    }
    let r: CDd = cx(Complex64::new(map.r, 0.0));
    let a_: CDd = cx(map.pole);
    let ab: CDd = a_.conj();
    let u: CDd = cx(map.u);
    let ub = u.conj();
    let one: CDd = cx(ONE);
    let z0 = dzero();
    // z(ζ−A) − (rζ+u)(ζ−A) − v
    let p2 = blin(-r, z0, z0);
    let p1 = blin(r * a_ - u, one, z0);
    let p0 = blin(z0, -a_, z0);
    // S ζ(1−Āζ) − (r + ūζ)(1−Āζ) − v̄ζ²
    let q2 = blin(z0, z0, -ab);
    let q1 = blin(r * ab - ub, z0, one);
    let q0 = blin(-r, z0, z0);
    let res_zs = resultant2([&p2, &p1, &p0], [&q2, &q1, &q0]);

    let pole = map.exterior_pole().ok_or_else(|| SpectralError::DegenerateElimination("no exterior pole".into()))?;
    let residue = map.schwarz_residue();
    let (pd, rd): (CDd, CDd) = (cx(pole), cx(residue));
    // Σ r_ij z^i (y + ρ/(z−a))^j (z−a)^2
    let max_s = res_zs[0].len() - 1;
    let mut coeffs: Vec<Poly> = vec![Vec::new(); max_s + 1];
    for (i, row) in res_zs.iter().enumerate() {
        for (j, c) in row.iter().enumerate() {
            if c64(*c) == ZERO {
                continue;
            }
            for k in 0..=j {
                let mut factor = pscale(&ppow_linear(pd, max_s - (j - k)), *c * Dd::from(binomial(j, k)));
                for _ in 0..j - k {
                    factor = pscale(&factor, rd);
                }
                let mut shifted = vec![dzero(); i];
                shifted.extend(factor);
                coeffs[k] = padd(&coeffs[k], &shifted, 1.0);
            }
        }
    }
    if coeffs.len() < 3 {
        return Err(SpectralError::DegenerateElimination("resultant is not quadratic in y".into()));
    }
    let (mut ca, mut cb, mut cc) = (coeffs[2].clone(), coeffs[1].clone(), coeffs[0].clone());
    let norm = |p: &Poly| p.iter().map(|x| c64(*x).norm()).fold(0.0, f64::max);
    if norm(&ca) == 0.0 || norm(&ca) <= 1e-14 * (norm(&cb) + norm(&cc)) {
        return Err(SpectralError::DegenerateElimination("leading coefficient vanishes identically".into()));
    }
    // remove common factors (z − a)
    loop {
        let vanish = [&ca, &cb, &cc].iter().all(|p| {
            let scale = pabs(p, pole);
            scale == 0.0 || c64(peval(p, pd)).norm() <= FACTOR_TOL * scale
        });
        if !vanish || ca.len() <= 1 {
            break;
        }
        ca = pdiv_linear(&ca, pd).0;
        cb = pdiv_linear(&cb, pd).0;
        cc = pdiv_linear(&cc, pd).0;
    }
    let ca = ptrim(ca, 1e-14);
    let lead = *ca.last().unwrap();
    let inv = cx::<Dd>(ONE) / lead;
    let (ca, cb, cc) = (pscale(&ca, inv), ptrim(pscale(&cb, inv), 1e-14), ptrim(pscale(&cc, inv), 1e-14));

    // jump = √(B² − 4AC)/A = h √((z−z1)(z−z2)) / A
    let disc = padd(&pmul(&cb, &cb), &pscale(&pmul(&ca, &cc), cx(Complex64::new(4.0, 0.0))), -1.0);
    let quad = vec![cx::<Dd>(z1 * z2), cx::<Dd>(-(z1 + z2)), cx::<Dd>(ONE)];
    let (h2, rem) = pdiv(&disc, &quad);
    let rem_norm = norm(&rem);
    if rem_norm > FACTOR_TOL * norm(&disc).max(1e-300) * (1.0 + z1.norm() + z2.norm()).powi(2) {
        return Err(SpectralError::DegenerateElimination(format!(
            "discriminant does not vanish at the branch points (remainder {rem_norm:e})"
        )));
    }
    let h2 = ptrim(h2, 1e-13);
    let mut h = psqrt(&h2).ok_or_else(|| SpectralError::DegenerateElimination("discriminant is not a square times the branch factor".into()))?;
    let mut den = ca.clone();
    // cancel common roots of h and the denominator, starting with the pole
    loop {
        let hs = pabs(&h, pole);
        let ds = pabs(&den, pole);
        if h.len() > 1
            && den.len() > 1
            && c64(peval(&h, pd)).norm() <= FACTOR_TOL * hs
            && c64(peval(&den, pd)).norm() <= FACTOR_TOL * ds
        {
            h = pdiv_linear(&h, pd).0;
            den = pdiv_linear(&den, pd).0;
        } else {
            break;
        }
    }
    let mut poles = if den.len() > 1 { polynomial_roots(&den, 0)? } else { Vec::new() };
    let mut kept = Vec::new();
    for w in poles.drain(..) {
        let wd: CDd = cx(w);
        if h.len() > 1 && c64(peval(&h, wd)).norm() <= FACTOR_TOL * pabs(&h, w) {
            h = pdiv_linear(&h, wd).0;
            den = pdiv_linear(&den, wd).0;
        } else {
            kept.push(w);
        }
    }
    kept.sort_by(|p, q| p.re.total_cmp(&q.re).then(p.im.total_cmp(&q.im)));

    let mut curve = AlgebraicCurve {
        coeff_a: Rational::polynomial(to64(&ca)),
        coeff_b: Rational::polynomial(to64(&cb)),
        coeff_c: Rational::polynomial(to64(&cc)),
        map: map.clone(),
        pole,
        residue,
        t0: map.t0(),
        z1,
        z2,
        jump_num: to64(&h),
        jump_den: to64(&den),
        jump_poles: kept,
        phi_mid: 0.0,
    };
    // orientation: J(m)(z2 − z1)/(2πi) has positive real part
    let m = curve.midpoint();
    let flux = curve.jump_raw(m) * (z2 - z1) / Complex64::new(0.0, 2.0 * PI);
    if flux.re < 0.0 || (flux.re == 0.0 && flux.im < 0.0) {
        curve.jump_num.iter_mut().for_each(|c| *c = -*c);
    }
    curve.phi_mid = curve.segment_integral(z1, m).re;
    Ok(curve)
}

/// √w with its cut along the ray {t·dir : t > 0}.
fn sqrt_cut(w: Complex64, dir: Complex64) -> Complex64 {
    (w / -dir).sqrt() * (-dir).sqrt()
}

impl AlgebraicCurve {
    pub fn midpoint(&self) -> Complex64 {
        0.5 * (self.z1 + self.z2)
    }

    /// Unit direction of the cut ray leaving z1 (the ray leaving z2 points the other way).
    fn cut_direction(&self) -> Complex64 {
        let d = self.z1 - self.z2;
        d / d.norm()
    }

    fn separation(&self) -> f64 {
        (self.z2 - self.z1).norm()
    }

    /// A, B, C at z.
    pub fn coefficients(&self, z: Complex64) -> (Complex64, Complex64, Complex64) {
        (self.coeff_a.eval(z), self.coeff_b.eval(z), self.coeff_c.eval(z))
    }

    /// |A y² + B y + C| / (|A||y|² + |B||y| + |C|).
    pub fn residual(&self, z: Complex64, y: Complex64) -> f64 {
        let (a, b, c) = self.coefficients(z);
        let num = (a * y * y + b * y + c).norm();
        let den = a.norm() * y.norm_sqr() + b.norm() * y.norm() + c.norm();
        if den == 0.0 { 0.0 } else { num / den }
    }

    /// B² − 4AC at z.
    pub fn discriminant(&self, z: Complex64) -> Complex64 {
        let (a, b, c) = self.coefficients(z);
        b * b - 4.0 * a * c
    }

    /// Coefficients of the discriminant polynomial, ascending.
    pub fn discriminant_poly(&self) -> Vec<Complex64> {
        let (a, b, c) = (&self.coeff_a.num, &self.coeff_b.num, &self.coeff_c.num);
        let dd = |p: &Vec<Complex64>| p.iter().map(|x| cx::<Dd>(*x)).collect::<Poly>();
        let d = padd(&pmul(&dd(b), &dd(b)), &pscale(&pmul(&dd(a), &dd(c)), cx(Complex64::new(4.0, 0.0))), -1.0);
        to64(&d)
    }

    fn jump_raw(&self, z: Complex64) -> Complex64 {
        let d = self.cut_direction();
        horner(&self.jump_num, z) * sqrt_cut(z - self.z1, d) * sqrt_cut(z - self.z2, -d) / horner(&self.jump_den, z)
    }

    /// y_+ − y_- on the plane cut along the two outward rays of the line
    /// through the branch points.
    pub fn jump(&self, z: Complex64) -> Result<Complex64, SpectralError> {
        for p in &self.jump_poles {
            if z == *p {
                return Err(SpectralError::PoleHit(z));
            }
        }
        Ok(self.jump_raw(z))
    }

    /// Both roots (y_+, y_-) with y_+ − y_- = [`AlgebraicCurve::jump`].
    pub fn branches(&self, z: Complex64) -> Result<(Complex64, Complex64), SpectralError> {
        let (a, b, _) = self.coefficients(z);
        let j = self.jump(z)?;
        let mid = -b / (2.0 * a);
        Ok((mid + 0.5 * j, mid - 0.5 * j))
    }

    /// The branch that decays like t0/z at infinity.
    pub fn exterior_branch(&self, z: Complex64) -> Result<Complex64, SpectralError> {
        let (p, m) = self.branches(z)?;
        Ok(if p.norm() <= m.norm() { p } else { m })
    }

    /// Mean of z·y_-(z) over M points of the circle |z| = radius; equals t0
    /// whenever the circle encloses every singularity of y_-.
    pub fn exterior_moment(&self, radius: f64, m: usize) -> Result<Complex64, SpectralError> {
        let mut acc = ZERO;
        for j in 0..m {
            let z = Complex64::from_polar(radius, 2.0 * PI * (j as f64 + 0.5) / m as f64);
            acc += z * self.exterior_branch(z)?;
        }
        Ok(acc / m as f64)
    }

    /// y_+ − y_- continued from the token's last value; a fresh token takes
    /// the cut-plane value.
    pub fn branch_jump(&self, z: Complex64, token: &mut BranchToken) -> Result<Complex64, SpectralError> {
        let tol = 1e-14 * self.separation();
        if (z - self.z1).norm() <= tol || (z - self.z2).norm() <= tol {
            return Err(SpectralError::BranchPointHit(z));
        }
        let (a, _, _) = self.coefficients(z);
        if a == ZERO {
            return Err(SpectralError::PoleHit(z));
        }
        let s = self.discriminant(z).sqrt() / a;
        let value = match token.last {
            Some(prev) => {
                if (s - prev).norm() <= (s + prev).norm() {
                    s
                } else {
                    -s
                }
            }
            None => {
                let reference = self.jump(z)?;
                if (s - reference).norm() <= (s + reference).norm() { s } else { -s }
            }
        };
        token.last = Some(value);
        Ok(value)
    }

    /// True when the segment p→q meets one of the two cut rays.
    fn crosses_cut(&self, p: Complex64, q: Complex64) -> bool {
        let d = self.cut_direction();
        let len = self.separation();
        let side = |z: Complex64| ((z - self.z1) * d.conj()).im;
        let along = |z: Complex64| ((z - self.z1) * d.conj()).re;
        let tol = 1e-13 * len;
        let (sp, sq) = (side(p), side(q));
        let on_ray = |t: f64| t > tol || t < -len - tol;
        if sp.abs() <= tol && on_ray(along(p)) || sq.abs() <= tol && on_ray(along(q)) {
            return true;
        }
        if (sp > 0.0) == (sq > 0.0) || sp.abs() <= tol || sq.abs() <= tol {
            return false;
        }
        let t = sp / (sp - sq);
        on_ray(along(p + t * (q - p)))
    }

    /// ∫ J along the straight segment p→q.
    fn segment_integral(&self, p: Complex64, q: Complex64) -> Complex64 {
        let scale = self.jump_raw(self.midpoint()).norm() * self.separation() + 1e-300;
        let f = |t: f64| {
            let z = p + t * (q - p);
            self.jump_raw(z) * (q - p)
        };
        adaptive_gk(&f, 0.0, 1.0, 1e-13 * scale)
    }

    /// Default path from the midpoint to z, stepping around poles of J.
    fn path_from_mid(&self, z: Complex64) -> Vec<Complex64> {
        let m = self.midpoint();
        let delta = 0.05 * self.separation();
        let mut path = vec![m];
        if (z - m).norm() > 0.0 {
            let dir = (z - m) / (z - m).norm();
            let normal = Complex64::new(0.0, 1.0) * dir;
            let mut detours: Vec<(f64, Complex64)> = Vec::new();
            for &p in &self.jump_poles {
                let t = ((p - m) * dir.conj()).re;
                let along = (z - m).norm();
                if t <= 0.0 || t >= along {
                    continue;
                }
                let dist = ((p - m) * dir.conj()).im.abs();
                if dist < delta && (z - p).norm() >= delta && (m - p).norm() >= delta {
                    detours.push((t, p + delta * normal));
                }
            }
            detours.sort_by(|a, b| a.0.total_cmp(&b.0));
            path.extend(detours.into_iter().map(|(_, w)| w));
        }
        path.push(z);
        path
    }

    /// Φ(z) = Re ∫_{z1}^{z} (y_+ − y_-) dw through the midpoint of the branch points.
    pub fn phi(&self, z: Complex64) -> Result<f64, SpectralError> {
        self.phi_from_mid(&self.path_from_mid(z))
    }

    /// Φ along an explicit polyline that starts at z1.
    pub fn phi_along(&self, path: &[Complex64]) -> Result<f64, SpectralError> {
        if path.is_empty() || (path[0] - self.z1).norm() > 1e-12 * self.separation() {
            return Err(SpectralError::InvalidArgument("path must start at z1".into()));
        }
        self.integrate_path(path, 0.0)
    }

    fn phi_from_mid(&self, path: &[Complex64]) -> Result<f64, SpectralError> {
        self.integrate_path(path, self.phi_mid)
    }

    fn integrate_path(&self, path: &[Complex64], start: f64) -> Result<f64, SpectralError> {
        let end = *path.last().unwrap();
        if self.jump_poles.contains(&end) {
            return Err(SpectralError::PoleHit(end));
        }
        let mut acc = start;
        for w in path.windows(2) {
            if self.crosses_cut(w[0], w[1]) {
                return Err(SpectralError::PathCrossesCut(end));
            }
            acc += self.segment_integral(w[0], w[1]).re;
        }
        Ok(acc)
    }

    /// ∫ |J| |dz| / (2π) along a polyline.
    pub fn jump_mass(&self, pts: &[Complex64]) -> f64 {
        let (xs, ws) = gauss4();
        pts.windows(2)
            .map(|w| {
                let d = w[1] - w[0];
                xs.iter().zip(ws.iter()).map(|(x, wt)| wt * self.jump_raw(w[0] + x * d).norm()).sum::<f64>() * d.norm()
            })
            .sum::<f64>()
            / (2.0 * PI)
    }

    /// ∫_γ ρ_s(z') ln|z − z'|² |dz'| with ρ_s normalized to mass t0.
    pub fn log_potential(&self, traj: &Trajectory, z: Complex64) -> f64 {
        let (xs, ws) = gauss4();
        let scale = self.t0 / traj.raw_mass;
        traj.points
            .windows(2)
            .map(|w| {
                let d = w[1] - w[0];
                xs.iter()
                    .zip(ws.iter())
                    .map(|(x, wt)| {
                        let zp = w[0] + x * d;
                        wt * self.jump_raw(zp).norm() * (z - zp).norm_sqr().ln()
                    })
                    .sum::<f64>()
                    * d.norm()
            })
            .sum::<f64>()
            * scale
            / (2.0 * PI)
    }
}

/// Nodes and weights of 4-point Gauss–Legendre on [0, 1].
fn gauss4() -> ([f64; 4], [f64; 4]) {
    let a = 0.3399810435848563;
    let b = 0.8611363115940526;
    let wa = 0.6521451548625461;
    let wb = 0.3478548451374538;
    ([0.5 * (1.0 - b), 0.5 * (1.0 - a), 0.5 * (1.0 + a), 0.5 * (1.0 + b)], [0.5 * wb, 0.5 * wa, 0.5 * wa, 0.5 * wb])
}

const GK_NODES: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const G_WEIGHTS: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// 7/15-point Gauss–Kronrod on [a, b]: (Kronrod value, error estimate, Σ|f| scale).
fn gk15<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> (Complex64, f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kr = ZERO;
    let mut ga = ZERO;
    let mut mag = 0.0;
    for i in 0..8 {
        let x = GK_NODES[i];
        let s = if x == 0.0 { f(c) } else { f(c - h * x) + f(c + h * x) };
        mag += GK_WEIGHTS[i] * s.norm();
        kr += GK_WEIGHTS[i] * s;
        if i % 2 == 1 {
            ga += G_WEIGHTS[i / 2] * s;
        }
    }
    (kr * h, ((kr - ga) * h).norm(), mag * h.abs())
}

const GK_MAX_INTERVALS: usize = 400;

/// Adaptive Gauss–Kronrod on [a, b], bisecting the worst interval until the
/// summed error estimate is below tol or the interval budget runs out.
fn adaptive_gk<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64, tol: f64) -> Complex64 {
    let mut parts = vec![(a, b, gk15(f, a, b))];
    loop {
        let err: f64 = parts.iter().map(|p| p.2 .1).sum();
        let floor: f64 = parts.iter().map(|p| p.2 .2).sum::<f64>() * 1e-15;
        if err <= tol.max(floor) || parts.len() >= GK_MAX_INTERVALS {
            break;
        }
        let (worst, _) = parts.iter().enumerate().fold((0, -1.0), |acc, (i, p)| if p.2 .1 > acc.1 { (i, p.2 .1) } else { acc });
        let (lo, hi, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        parts.push((lo, mid, gk15(f, lo, mid)));
        parts.push((mid, hi, gk15(f, mid, hi)));
    }
    parts.iter().map(|p| p.2 .0).sum()
}

/// Summary of one Φ = 0 component found by the contour extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSummary {
    pub points: usize,
    pub start: Complex64,
    pub end: Complex64,
    pub closed: bool,
    /// Ends near z1 and z2.
    pub connects: bool,
    /// Every vertex lies inside the droplet.
    pub inside: bool,
    /// ∫ |J| |dz| / (2π) with the branch points appended.
    pub mass: f64,
}

/// The critical trajectory γ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Polyline from z1 to z2.
    pub points: Vec<Complex64>,
    /// Jump density |y_+ − y_-|/(2π), scaled to total mass t0, at each vertex.
    pub rho_s: Vec<f64>,
    pub arc_length: f64,
    /// Mass of the jump density before scaling.
    pub raw_mass: f64,
    pub endpoints: (Complex64, Complex64),
    /// Segments on which Re(J dz/(2πi)) has the minority sign.
    pub positivity_warnings: usize,
    pub components: Vec<ComponentSummary>,
}

/// Controls for [`trace_trajectory`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceOptions {
    /// Cells per side of the sampling grid.
    pub cells: usize,
    /// Chord tolerance relative to the droplet diameter.
    pub vertex_tol: f64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions { cells: 256, vertex_tol: 1e-4 }
    }
}

type EdgeKey = (u8, usize, usize);

/// Extract the Φ = 0 component joining the branch points inside the droplet.
pub fn trace_trajectory(curve: &AlgebraicCurve, droplet: &[Complex64], opts: TraceOptions) -> Result<Trajectory, SpectralError> {
    if droplet.len() < 3 {
        return Err(SpectralError::InvalidArgument("droplet polygon needs at least 3 vertices".into()));
    }
    if opts.cells < 4 {
        return Err(SpectralError::InvalidArgument("grid needs at least 4 cells per side".into()));
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for z in droplet {
        x0 = x0.min(z.re);
        x1 = x1.max(z.re);
        y0 = y0.min(z.im);
        y1 = y1.max(z.im);
    }
    let pad = 0.02 * (x1 - x0).max(y1 - y0);
    let n = opts.cells;
    // offset by an irrational fraction of a cell so no grid line sits on a symmetry axis
    let shift = 0.381966 / n as f64;
    let (x0, x1, y0, y1) = (x0 - pad - shift * (x1 - x0), x1 + pad, y0 - pad - shift * (y1 - y0), y1 + pad);
    let (hx, hy) = ((x1 - x0) / n as f64, (y1 - y0) / n as f64);
    let node = |i: usize, j: usize| Complex64::new(x0 + i as f64 * hx, y0 + j as f64 * hy);
    let values: Vec<Vec<Option<f64>>> = (0..=n)
        .into_par_iter()
        .map(|j| (0..=n).map(|i| curve.phi(node(i, j)).ok().filter(|v| v.is_finite())).collect())
        .collect();

    // cells cut by a ray or touching an undefined value are skipped
    let d = curve.cut_direction();
    let len = curve.separation();
    let masked = |i: usize, j: usize| -> bool {
        let corners = [node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)];
        if [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)].iter().any(|&(a, b)| values[b][a].is_none()) {
            return true;
        }
        let sides: Vec<f64> = corners.iter().map(|z| ((z - curve.z1) * d.conj()).im).collect();
        let straddles = sides.iter().any(|&s| s >= 0.0) && sides.iter().any(|&s| s <= 0.0);
        if !straddles {
            return false;
        }
        let along: Vec<f64> = corners.iter().map(|z| ((z - curve.z1) * d.conj()).re).collect();
        let hi = along.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = along.iter().copied().fold(f64::INFINITY, f64::min);
        hi >= 0.0 || lo <= -len
    };

    let positive = |i: usize, j: usize| values[j][i].unwrap() >= 0.0;
    let mut segments: Vec<(EdgeKey, EdgeKey)> = Vec::new();
    for j in 0..n {
        for i in 0..n {
            if masked(i, j) {
                continue;
            }
            let s = [positive(i, j), positive(i + 1, j), positive(i + 1, j + 1), positive(i, j + 1)];
            let edges: [EdgeKey; 4] = [(0, i, j), (1, i + 1, j), (0, i, j + 1), (1, i, j)];
            let crossing: Vec<usize> = (0..4).filter(|&e| s[e] != s[(e + 1) % 4]).collect();
            match crossing.len() {
                2 => segments.push((edges[crossing[0]], edges[crossing[1]])),
                4 => {
                    let centre = 0.25
                        * (values[j][i].unwrap() + values[j][i + 1].unwrap() + values[j + 1][i + 1].unwrap() + values[j + 1][i].unwrap());
                    if (centre >= 0.0) == s[0] {
                        segments.push((edges[0], edges[1]));
                        segments.push((edges[2], edges[3]));
                    } else {
                        segments.push((edges[3], edges[0]));
                        segments.push((edges[1], edges[2]));
                    }
                }
                _ => {}
            }
        }
    }

    // crossing location on each edge, refined on Φ itself
    let mut adjacency: BTreeMap<EdgeKey, Vec<EdgeKey>> = BTreeMap::new();
    for &(a, b) in &segments {
        adjacency.entry(a).or_default().push(b);
        adjacency.entry(b).or_default().push(a);
    }
    let keys: Vec<EdgeKey> = adjacency.keys().copied().collect();
    let located: Vec<Complex64> = keys
        .par_iter()
        .map(|&(kind, i, j)| {
            let (pi, pj) = if kind == 0 { (i + 1, j) } else { (i, j + 1) };
            let (p, q) = (node(i, j), node(pi, pj));
            refine_edge(curve, p, q, values[j][i].unwrap(), values[pj][pi].unwrap())
        })
        .collect();
    let position: BTreeMap<EdgeKey, Complex64> = keys.iter().copied().zip(located).collect();

    let chains = link_chains(&adjacency);
    let diag = (hx * hx + hy * hy).sqrt();
    let end_tol = 3.0 * diag;
    let pieces = split_at_branch_points(
        chains.iter().map(|(c, closed)| (c.iter().map(|k| position[k]).collect(), *closed)).collect(),
        &[curve.z1, curve.z2],
        1.5 * diag,
    );
    let mut summaries = Vec::new();
    let mut best: Option<(f64, Vec<Complex64>)> = None;
    for (mut pts, closed) in pieces {
        let (start, end) = (pts[0], *pts.last().unwrap());
        let near = |z: Complex64, b: Complex64| (z - b).norm() <= end_tol;
        let forward = near(start, curve.z1) && near(end, curve.z2);
        let backward = near(start, curve.z2) && near(end, curve.z1);
        let connects = !closed && (forward || backward);
        if backward && !forward {
            pts.reverse();
        }
        let inside = pts.iter().all(|z| point_in_polygon(*z, droplet));
        let mut full = pts.clone();
        if connects {
            full.insert(0, curve.z1);
            full.push(curve.z2);
        }
        let mass = curve.jump_mass(&full);
        summaries.push(ComponentSummary { points: pts.len(), start, end, closed, connects, inside, mass });
        if connects && inside {
            let gap = (mass - curve.t0).abs();
            if best.as_ref().is_none_or(|(g, _)| gap < *g) {
                best = Some((gap, full));
            }
        }
    }
    let Some((_, pts)) = best else {
        return Err(SpectralError::NoInteriorComponent(summaries));
    };
    let diam = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
    let pts = refine_polyline(curve, pts, opts.vertex_tol * diam);
    let raw_mass = curve.jump_mass(&pts);
    let scale = curve.t0 / raw_mass;
    let rho_s = pts.iter().map(|z| curve.jump_raw(*z).norm() / (2.0 * PI) * scale).collect();
    let arc_length = pts.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    let signs: Vec<bool> = pts
        .windows(2)
        .map(|w| (curve.jump_raw(0.5 * (w[0] + w[1])) * (w[1] - w[0]) / Complex64::new(0.0, 2.0 * PI)).re >= 0.0)
        .collect();
    let npos = signs.iter().filter(|s| **s).count();
    let positivity_warnings = npos.min(signs.len() - npos);
    Ok(Trajectory { points: pts, rho_s, arc_length, raw_mass, endpoints: (curve.z1, curve.z2), positivity_warnings, components: summaries })
}

/// Cut chains where they pass within `radius` of a branch point; several arcs
/// meet there and the contour graph cannot tell them apart.
fn split_at_branch_points(chains: Vec<(Vec<Complex64>, bool)>, branch: &[Complex64], radius: f64) -> Vec<(Vec<Complex64>, bool)> {
    let near = |z: &Complex64| branch.iter().any(|b| (z - b).norm() <= radius);
    let mut out = Vec::new();
    for (mut pts, closed) in chains {
        let Some(first_near) = pts.iter().position(near) else {
            out.push((pts, closed));
            continue;
        };
        if closed {
            pts.rotate_left(first_near);
        }
        let mut current = Vec::new();
        for z in pts {
            if near(&z) {
                if !current.is_empty() {
                    out.push((std::mem::take(&mut current), false));
                }
            } else {
                current.push(z);
            }
        }
        if !current.is_empty() {
            out.push((current, false));
        }
    }
    out
}

/// Root of Φ on the segment p→q by the Illinois variant of regula falsi.
fn refine_edge(curve: &AlgebraicCurve, p: Complex64, q: Complex64, fp: f64, fq: f64) -> Complex64 {
    let (mut a, mut b, mut fa, mut fb) = (0.0, 1.0, fp, fq);
    if fa == 0.0 {
        return p;
    }
    if fb == 0.0 {
        return q;
    }
    let mut side = 0;
    let mut t = 0.5;
    for _ in 0..80 {
        t = (a * fb - b * fa) / (fb - fa);
        if !(t > a && t < b) {
            t = 0.5 * (a + b);
        }
        let ft = match curve.phi(p + t * (q - p)) {
            Ok(v) => v,
            Err(_) => break,
        };
        if ft.abs() <= 1e-13 || (b - a) < 1e-15 {
            break;
        }
        if (ft > 0.0) == (fb > 0.0) {
            b = t;
            fb = ft;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        } else {
            a = t;
            fa = ft;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        }
    }
    p + t * (q - p)
}

/// Walk the contour graph into chains: open chains from their lowest end
/// key first, then closed loops.
fn link_chains(adjacency: &BTreeMap<EdgeKey, Vec<EdgeKey>>) -> Vec<(Vec<EdgeKey>, bool)> {
    let mut used: BTreeMap<(EdgeKey, EdgeKey), bool> = BTreeMap::new();
    let edge_id = |a: EdgeKey, b: EdgeKey| if a <= b { (a, b) } else { (b, a) };
    let mut visited: BTreeMap<EdgeKey, bool> = BTreeMap::new();
    let mut chains = Vec::new();
    let walk = |start: EdgeKey, used: &mut BTreeMap<(EdgeKey, EdgeKey), bool>, visited: &mut BTreeMap<EdgeKey, bool>| {
        let mut chain = vec![start];
        visited.insert(start, true);
        let mut cur = start;
        loop {
            let next = adjacency[&cur].iter().copied().find(|&nb| !used.contains_key(&edge_id(cur, nb)));
            match next {
                Some(nb) => {
                    used.insert(edge_id(cur, nb), true);
                    chain.push(nb);
                    visited.insert(nb, true);
                    cur = nb;
                    if nb == start {
                        break;
                    }
                }
                None => break,
            }
        }
        chain
    };
    for (&k, nbs) in adjacency {
        if nbs.len() == 1 && !visited.contains_key(&k) {
            let chain = walk(k, &mut used, &mut visited);
            chains.push((chain, false));
        }
    }
    for &k in adjacency.keys() {
        if !visited.contains_key(&k) {
            let mut chain = walk(k, &mut used, &mut visited);
            let closed = chain.len() > 2 && chain.first() == chain.last();
            if closed {
                chain.pop();
            }
            chains.push((chain, closed));
        }
    }
    chains
}

/// Newton projection onto Φ = 0 along ∇Φ = conj(J).
fn project(curve: &AlgebraicCurve, mut z: Complex64, limit: f64) -> Option<Complex64> {
    let start = z;
    for _ in 0..30 {
        let f = curve.phi(z).ok()?;
        if f.abs() <= 1e-12 {
            return Some(z);
        }
        let g = curve.jump(z).ok()?.conj();
        if g.norm_sqr() == 0.0 {
            return None;
        }
        z -= f * g / g.norm_sqr();
        if (z - start).norm() > limit {
            return None;
        }
    }
    let f = curve.phi(z).ok()?;
    if f.abs() <= 1e-9 { Some(z) } else { None }
}

/// Insert projected midpoints until every chord is within tol of the curve.
fn refine_polyline(curve: &AlgebraicCurve, mut pts: Vec<Complex64>, tol: f64) -> Vec<Complex64> {
    for _ in 0..12 {
        let mids: Vec<Option<Complex64>> = pts
            .par_windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                let len = (w[1] - w[0]).norm();
                project(curve, mid, len).filter(|z| (z - mid).norm() > tol)
            })
            .collect();
        if mids.iter().all(|m| m.is_none()) {
            break;
        }
        let mut out = Vec::with_capacity(2 * pts.len());
        for (i, z) in pts.iter().enumerate() {
            out.push(*z);
            if let Some(Some(m)) = mids.get(i) {
                out.push(*m);
            }
        }
        pts = out;
    }
    pts
}

/// Max and mean distance from each zero to the trajectory polyline, divided by |z2 − z1|.
pub fn zero_trajectory_distance(zeros: &[Complex64], traj: &Trajectory) -> Result<(f64, f64), SpectralError> {
    if zeros.is_empty() || traj.points.is_empty() {
        return Err(SpectralError::InvalidArgument("zeros and trajectory must be nonempty".into()));
    }
    let sep = (traj.endpoints.1 - traj.endpoints.0).norm();
    let scale = if sep > 0.0 { sep } else { 1.0 };
    let dist = |z: Complex64| -> f64 {
        if traj.points.len() == 1 {
            return (z - traj.points[0]).norm();
        }
        traj.points.windows(2).map(|w| point_segment_distance(z, w[0], w[1])).fold(f64::INFINITY, f64::min)
    };
    let ds: Vec<f64> = zeros.iter().map(|z| dist(*z) / scale).collect();
    let max = ds.iter().copied().fold(0.0, f64::max);
    let mean = ds.iter().sum::<f64>() / ds.len() as f64;
    Ok((max, mean))
}

fn point_segment_distance(z: Complex64, a: Complex64, b: Complex64) -> f64 {
    let d = b - a;
    let len2 = d.norm_sqr();
    if len2 == 0.0 {
        return (z - a).norm();
    }
    let t = (((z - a) * d.conj()).re / len2).clamp(0.0, 1.0);
    (z - (a + t * d)).norm()
}

/// One sample of the boundary density profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSample {
    pub theta: f64,
    pub z: Complex64,
    /// ln ρ_k(f(e^{iθ})).
    pub log_rho: f64,
    /// ln(1/|f'(e^{iθ})|).
    pub log_measure: f64,
}

/// ρ_k and the conformal measure at M equispaced points f(e^{iθ}).
pub fn density_profile(b: &OrthoBasis, k: usize, map: &RationalMap, m: usize) -> Result<Vec<ProfileSample>, SpectralError> {
    if m < 16 {
        return Err(SpectralError::InvalidArgument(format!("need at least 16 samples, got {m}")));
    }
    (0..m)
        .into_par_iter()
        .map(|j| {
            let theta = 2.0 * PI * j as f64 / m as f64;
            let zeta = Complex64::from_polar(1.0, theta);
            let z = map.eval(zeta);
            let fp = map.deriv(zeta).norm();
            if fp < 1e-12 * map.r {
                return Err(SpectralError::Map(MapError::CuspSingular { zeta }));
            }
            Ok(ProfileSample { theta, z, log_rho: b.log_density(k, z)?, log_measure: -fp.ln() })
        })
        .collect()
}

/// Relative entropy of the conformal measure against ρ_k on the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlDivergence {
    /// (1/2π)∫ (ln(1/|f'|) − ln ρ_k(f)) dθ.
    pub raw: f64,
    /// raw + ln[(1/2π)∫ ρ_k(f)|f'| dθ], the divergence after both densities
    /// are normalized to unit mass on the circle.
    pub mean_adjusted: f64,
}

pub fn kl_divergence(b: &OrthoBasis, k: usize, map: &RationalMap, m: usize) -> Result<KlDivergence, SpectralError> {
    if m < 128 {
        return Err(SpectralError::InvalidArgument(format!("need at least 128 samples, got {m}")));
    }
    let prof = density_profile(b, k, map, m)?;
    kl_from_profile(&prof)
}

/// KL from an existing profile.
pub fn kl_from_profile(prof: &[ProfileSample]) -> Result<KlDivergence, SpectralError> {
    if prof.is_empty() {
        return Err(SpectralError::InvalidArgument("empty profile".into()));
    }
    let m = prof.len() as f64;
    let raw = prof.iter().map(|s| s.log_measure - s.log_rho).sum::<f64>() / m;
    // ln mean(ρ |f'|) by log-sum-exp
    let terms: Vec<f64> = prof.iter().map(|s| s.log_rho - s.log_measure).collect();
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = top + (terms.iter().map(|t| (t - top).exp()).sum::<f64>() / m).ln();
    Ok(KlDivergence { raw, mean_adjusted: raw + lse })
}

/// sup_θ |ln ρ_k − ln(1/|f'|) − mean| over the profile.
pub fn profile_sup_error(prof: &[ProfileSample]) -> f64 {
    let d: Vec<f64> = prof.iter().map(|s| s.log_rho - s.log_measure).collect();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    d.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max)
}
