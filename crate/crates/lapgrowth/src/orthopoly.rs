//! Orthonormal polynomials for the weight e^{-N W(z)}: Gram assembly,
//! Cholesky orthogonalization, weighted densities and zeros.

use std::f64::consts::{LN_2, PI};

use num_complex::{Complex, Complex64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::moments::{MomentData, MomentKind, Potential};
use crate::precision::{c64, cdd, cx, dd_from_parts, dd_parts, from_cdd, CDd, Dd, Precision, Real};
use crate::quadrature::{build_grid, GridOptions, PlanarGrid, QuadError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrthoError {
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error("Gram matrix is not positive definite (pivot {index} = {pivot:e}); retry in extended precision")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("root finding for degree {degree} failed (backward error {residual:e})")]
    RootFindingFailure { degree: usize, residual: f64 },
    #[error("degree {0} exceeds the basis degree {1}")]
    DegreeOutOfRange(usize, usize),
    #[error("invalid basis document: {0}")]
    InvalidDocument(String),
}

/// Prewhitened Gram matrix, entries[i][j] = ∫ e_i ē_j e^{-NW} d²z.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    pub n: usize,
    pub n_big: f64,
    pub precision: Precision,
    /// Row-major (n+1) × (n+1).
    pub entries: Vec<CDd>,
}

impl GramMatrix {
    pub fn dim(&self) -> usize {
        self.n + 1
    }

    pub fn get(&self, i: usize, j: usize) -> CDd {
        self.entries[i * self.dim() + j]
    }

    pub fn get64(&self, i: usize, j: usize) -> Complex64 {
        c64(self.get(i, j))
    }

    pub fn identity(n: usize, n_big: f64, precision: Precision) -> Self {
        let d = n + 1;
        let mut entries = vec![cx::<Dd>(Complex64::new(0.0, 0.0)); d * d];
        for i in 0..d {
            entries[i * d + i] = cx(Complex64::new(1.0, 0.0));
        }
        GramMatrix { n, n_big, precision, entries }
    }

    /// Gram matrix from a 2-D array of f64 entries (for testing and Python use).
    pub fn from_rows(rows: &[Vec<Complex64>], n_big: f64, precision: Precision) -> Self {
        let d = rows.len();
        let entries = rows.iter().flat_map(|r| r.iter().map(|z| cx::<Dd>(*z))).collect::<Vec<_>>();
        assert_eq!(entries.len(), d * d, "Gram matrix must be square");
        GramMatrix { n: d - 1, n_big, precision, entries }
    }

    /// max_{i,j} |g_ij − h_ij| / √(g_ii g_jj).
    pub fn relative_distance(&self, other: &GramMatrix) -> f64 {
        let d = self.dim().min(other.dim());
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let scale = (self.get64(i, i).re * self.get64(j, j).re).sqrt();
                worst = worst.max((self.get64(i, j) - other.get64(i, j)).norm() / scale);
            }
        }
        worst
    }
}

/// Options for [`compute_gram`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GramOptions {
    pub grid: GridOptions,
    pub precision: Precision,
    /// Recompute on a refined grid and fail with QuadratureUnstable if the
    /// entries move by more than `tolerance` (relative to √(g_ii g_jj)).
    pub verify: bool,
    pub tolerance: f64,
}

impl GramOptions {
    pub fn for_degree(n: usize, force_extended: bool) -> Self {
        GramOptions { grid: GridOptions::default(), precision: Precision::for_degree(n, force_extended), verify: false, tolerance: 1e-10 }
    }
}

/// N on the scaling line N = n / t0.
pub fn scaling_n(n: usize, t0: f64) -> f64 {
    n.max(1) as f64 / t0
}

fn is_gaussian(p: &Potential) -> bool {
    match &p.moments.kind {
        MomentKind::Geometric { beta, .. } => *beta == 0.0,
        MomentKind::Explicit { t, .. } => t.iter().all(|c| *c == Complex64::new(0.0, 0.0)),
    }
}

/// Prewhitened Gram matrix of degree n at coupling N.
pub fn compute_gram(p: &Potential, n: usize, n_big: f64, opts: &GramOptions) -> Result<GramMatrix, OrthoError> {
    if is_gaussian(p) {
        return Ok(GramMatrix::identity(n, n_big, opts.precision));
    }
    let gopts = match opts.precision {
        Precision::Double => opts.grid,
        Precision::Extended => opts.grid.extended(),
    };
    let grid = build_grid(p, n_big, n, gopts)?;
    let g = gram_on_grid(&grid, n, opts.precision);
    if opts.verify {
        let fine = build_grid(p, n_big, n, gopts.refined())?;
        let h = gram_on_grid(&fine, n, opts.precision);
        let d = g.relative_distance(&h);
        if d > opts.tolerance {
            return Err(OrthoError::Quadrature(QuadError::Unstable(d)));
        }
    }
    Ok(g)
}

/// Assemble the prewhitened Gram matrix on an existing grid.
pub fn gram_on_grid(grid: &PlanarGrid, n: usize, precision: Precision) -> GramMatrix {
    let entries = match precision {
        Precision::Double => assemble::<f64>(grid, n).into_iter().map(cdd).collect(),
        Precision::Extended => assemble::<Dd>(grid, n),
    };
    GramMatrix { n, n_big: grid.n_big, precision, entries }
}

const RING_BLOCK: usize = 8;

/// G_ij = Σ_k s_i(ρ_k) s_j(ρ_k) F_k(i − j) with s_i(ρ) = ρ^i √(N^{i+1}/(π i!)) e^{-Nρ²/2}
/// and F_k(d) = Σ_l w_kl û_l^d, where û_l is the unit phase at θ_l.
fn assemble<T: Real>(grid: &PlanarGrid, n: usize) -> Vec<Complex<T>> {
    let d = n + 1;
    let m = grid.angles.len();
    let nb = T::of(grid.n_big);
    let sq_n_over_pi = (nb / T::of_dd(Dd::PI)).sqrt();
    let sq_n_over_i: Vec<T> = (0..d).map(|i| if i == 0 { T::one() } else { (nb / T::of(i as f64)).sqrt() }).collect();
    let nodes = NodeData::<T>::of(grid);
    // powers of the unit phases, one row per angle
    let powers: Vec<Complex<T>> = nodes
        .phases
        .iter()
        .flat_map(|&u| {
            let mut acc = Complex::new(T::one(), T::zero());
            (0..d)
                .map(move |_| {
                    let out = acc;
                    acc = acc * u;
                    out
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let n_rings = grid.radii.len();
    let blocks: Vec<Vec<Complex<T>>> = (0..n_rings.div_ceil(RING_BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![Complex::new(T::zero(), T::zero()); d * d];
            let mut f = vec![Complex::new(T::zero(), T::zero()); d];
            let mut s = vec![T::zero(); d];
            for k in b * RING_BLOCK..((b + 1) * RING_BLOCK).min(n_rings) {
                let r = nodes.radii[k];
                let wr = nodes.weights[k];
                f.iter_mut().for_each(|x| *x = Complex::new(T::zero(), T::zero()));
                for l in 0..m {
                    let w = wr * nodes.log_deformation[k * m + l].exp();
                    let row = &powers[l * d..(l + 1) * d];
                    for (fd, p) in f.iter_mut().zip(row) {
                        fd.re += w * p.re;
                        fd.im += w * p.im;
                    }
                }
                s[0] = sq_n_over_pi * (-T::of(0.5) * nb * r * r).exp();
                for i in 1..d {
                    s[i] = s[i - 1] * r * sq_n_over_i[i];
                }
                for i in 0..d {
                    for j in 0..=i {
                        let c = s[i] * s[j];
                        let fv = f[i - j];
                        let e = &mut acc[i * d + j];
                        e.re += c * fv.re;
                        e.im += c * fv.im;
                    }
                }
            }
            acc
        })
        .collect();
    let mut g = vec![Complex::new(T::zero(), T::zero()); d * d];
    for blk in blocks {
        for (x, y) in g.iter_mut().zip(blk) {
            x.re += y.re;
            x.im += y.im;
        }
    }
    for i in 0..d {
        g[i * d + i].im = T::zero();
        for j in 0..i {
            g[j * d + i] = g[i * d + j].conj();
        }
    }
    g
}

/// Grid data in the working precision.
struct NodeData<T> {
    radii: Vec<T>,
    /// Radial times angular weight.
    weights: Vec<T>,
    phases: Vec<Complex<T>>,
    log_deformation: Vec<T>,
}

impl<T: Real> NodeData<T> {
    fn of(grid: &PlanarGrid) -> Self {
        match &grid.extended {
            Some(e) => NodeData {
                radii: e.radii.iter().map(|&x| T::of_dd(x)).collect(),
                weights: e.radial_weights.iter().map(|&x| T::of_dd(x * e.angular_weight)).collect(),
                phases: e.phases.iter().map(|u| Complex::new(T::of_dd(u.re), T::of_dd(u.im))).collect(),
                log_deformation: e.log_deformation.iter().map(|&x| T::of_dd(x)).collect(),
            },
            None => NodeData {
                radii: grid.radii.iter().map(|&x| T::of(x)).collect(),
                weights: grid.radial_weights.iter().map(|&x| T::of(x * grid.angular_weight)).collect(),
                phases: grid
                    .angles
                    .iter()
                    .map(|&t| {
                        let u = Complex::new(T::of(t.cos()), T::of(t.sin()));
                        let norm = (u.re * u.re + u.im * u.im).sqrt();
                        Complex::new(u.re / norm, u.im / norm)
                    })
                    .collect(),
                log_deformation: grid.log_deformation.iter().map(|&x| T::of(x)).collect(),
            },
        }
    }
}

/// Orthonormal polynomials P_k = Σ_{j≤k} C[k][j] e_j with C[k][k] > 0.
#[derive(Debug, Clone)]
pub struct OrthoBasis {
    pub n: usize,
    pub n_big: f64,
    pub precision: Precision,
    pub moments: MomentData,
    /// Row k holds C[k][0..=k].
    pub coeffs: Vec<Vec<CDd>>,
}

/// C = L⁻¹ where G = L L^H.
pub fn orthogonalize(g: &GramMatrix, moments: &MomentData) -> Result<OrthoBasis, OrthoError> {
    let coeffs = match g.precision {
        Precision::Double => {
            let gm: Vec<Complex<f64>> = g.entries.iter().map(|z| from_cdd(*z)).collect();
            inverse_cholesky(&gm, g.dim())?.into_iter().map(|row| row.into_iter().map(cdd).collect()).collect()
        }
        Precision::Extended => inverse_cholesky(&g.entries, g.dim())?,
    };
    Ok(OrthoBasis { n: g.n, n_big: g.n_big, precision: g.precision, moments: moments.clone(), coeffs })
}

fn inverse_cholesky<T: Real>(g: &[Complex<T>], d: usize) -> Result<Vec<Vec<Complex<T>>>, OrthoError> {
    let zero = Complex::new(T::zero(), T::zero());
    let mut l = vec![zero; d * d];
    for j in 0..d {
        let mut diag = g[j * d + j].re;
        for k in 0..j {
            let x = l[j * d + k];
            diag -= x.re * x.re + x.im * x.im;
        }
        if !(diag > T::zero()) {
            return Err(OrthoError::NotPositiveDefinite { index: j, pivot: diag.to_f64() });
        }
        let ljj = diag.sqrt();
        l[j * d + j] = Complex::new(ljj, T::zero());
        for i in j + 1..d {
            let mut acc = g[i * d + j];
            for k in 0..j {
                acc = acc - l[i * d + k] * l[j * d + k].conj();
            }
            l[i * d + j] = Complex::new(acc.re / ljj, acc.im / ljj);
        }
    }
    let mut c: Vec<Vec<Complex<T>>> = (0..d).map(|i| vec![zero; i + 1]).collect();
    for i in 0..d {
        let lii = l[i * d + i].re;
        c[i][i] = Complex::new(T::one() / lii, T::zero());
        for j in 0..i {
            let mut acc = zero;
            for k in j..i {
                acc = acc + l[i * d + k] * c[k][j];
            }
            c[i][j] = Complex::new(-acc.re / lii, -acc.im / lii);
        }
    }
    Ok(c)
}

/// ln|Σ_j C_j e_j(z)|, with each e_j(z) carried as a mantissa and a power-of-two exponent.
fn log_abs_poly<T: Real>(coeffs: &[CDd], n_big: f64, z: Complex64) -> f64 {
    const BIG: f64 = 1.0e60;
    const SHIFT: i32 = 199;
    let zt: Complex<T> = cx(z);
    let nb = T::of(n_big);
    let mut q = Complex::new((nb / T::of_dd(Dd::PI)).sqrt(), T::zero());
    let mut e: i32 = 0;
    let mut terms: Vec<(Complex<T>, i32)> = Vec::with_capacity(coeffs.len());
    for (j, cj) in coeffs.iter().enumerate() {
        if j > 0 {
            q = q * zt * (nb / T::of(j as f64)).sqrt();
            let mag = q.re.to_f64().abs().max(q.im.to_f64().abs());
            if mag > BIG {
                let f = T::of(2f64.powi(-SHIFT));
                q = Complex::new(q.re * f, q.im * f);
                e += SHIFT;
            } else if mag < 1.0 / BIG && mag > 0.0 {
                let f = T::of(2f64.powi(SHIFT));
                q = Complex::new(q.re * f, q.im * f);
                e -= SHIFT;
            }
        }
        terms.push((from_cdd::<T>(*cj) * q, e));
    }
    let top = terms.iter().map(|t| t.1).max().unwrap_or(0);
    let mut s = Complex::new(T::zero(), T::zero());
    for (t, ej) in terms {
        let shift = ej - top;
        if shift < -1000 {
            continue;
        }
        let f = T::of(2f64.powi(shift));
        s = s + Complex::new(t.re * f, t.im * f);
    }
    let s64 = c64(s);
    s64.norm().ln() + top as f64 * LN_2
}

impl OrthoBasis {
    fn check_degree(&self, k: usize) -> Result<(), OrthoError> {
        if k > self.n {
            Err(OrthoError::DegreeOutOfRange(k, self.n))
        } else {
            Ok(())
        }
    }

    /// ln|P_k(z)|.
    pub fn log_abs(&self, k: usize, z: Complex64) -> Result<f64, OrthoError> {
        self.check_degree(k)?;
        Ok(match self.precision {
            Precision::Double => log_abs_poly::<f64>(&self.coeffs[k], self.n_big, z),
            Precision::Extended => log_abs_poly::<Dd>(&self.coeffs[k], self.n_big, z),
        })
    }

    /// ln ρ_k(z) = 2 ln|P_k(z)| − N W(z).
    pub fn log_density(&self, k: usize, z: Complex64) -> Result<f64, OrthoError> {
        let p = Potential::new(self.moments.clone());
        let lw = p.log_weight(z, self.n_big).map_err(QuadError::from)?;
        if lw == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(2.0 * self.log_abs(k, z)? + lw)
    }

    /// ρ_k(z) = |P_k(z)|² e^{-N W(z)}.
    pub fn eval_density(&self, k: usize, z: Complex64) -> Result<f64, OrthoError> {
        Ok(self.log_density(k, z)?.exp())
    }

    /// (1/N) ln ρ_k(z), clamped below at −1e6.
    pub fn log_density_potential(&self, k: usize, z: Complex64) -> Result<f64, OrthoError> {
        Ok((self.log_density(k, z)? / self.n_big).max(-1e6))
    }

    /// Monomial coefficients d_j = C[k][j] √(N^{j+1}/(π j!)) of P_k.
    pub fn monomial_coeffs(&self, k: usize) -> Result<Vec<CDd>, OrthoError> {
        self.check_degree(k)?;
        let nb = Dd::from(self.n_big);
        let mut pw = Real::sqrt(nb / Dd::PI);
        let mut out = Vec::with_capacity(k + 1);
        for (j, c) in self.coeffs[k].iter().enumerate() {
            if j > 0 {
                pw *= Real::sqrt(nb / Dd::from(j as f64));
            }
            out.push(Complex::new(c.re * pw, c.im * pw));
        }
        Ok(out)
    }

    /// The k zeros of P_k.
    pub fn zeros(&self, k: usize, seed: u64) -> Result<Vec<Complex64>, OrthoError> {
        let d = self.monomial_coeffs(k)?;
        match self.precision {
            Precision::Double => {
                let d: Vec<Complex<f64>> = d.into_iter().map(from_cdd).collect();
                polynomial_roots(&d, seed)
            }
            Precision::Extended => polynomial_roots(&d, seed),
        }
    }

    /// max |C G C^H − I| against the given Gram matrix, in double-double.
    pub fn orthonormality_residual(&self, g: &GramMatrix) -> f64 {
        let d = (self.n + 1).min(g.dim());
        let zero = cx::<Dd>(Complex64::new(0.0, 0.0));
        let mut worst: f64 = 0.0;
        // M = C G, then (M C^H)_{kl}
        for k in 0..d {
            let mut row = vec![zero; d];
            for (j, x) in row.iter_mut().enumerate() {
                for i in 0..=k {
                    *x = *x + self.coeffs[k][i] * g.get(i, j);
                }
            }
            for l in 0..d {
                let mut acc = zero;
                for j in 0..=l {
                    acc = acc + row[j] * self.coeffs[l][j].conj();
                }
                let target = if k == l { 1.0 } else { 0.0 };
                worst = worst.max((c64(acc) - Complex64::new(target, 0.0)).norm());
            }
        }
        worst
    }

    /// ∫ ρ_k d²z on a grid.
    pub fn density_mass(&self, k: usize, grid: &PlanarGrid) -> Result<f64, OrthoError> {
        self.check_degree(k)?;
        let rings: Vec<Result<Dd, OrthoError>> = (0..grid.radii.len())
            .into_par_iter()
            .map(|ki| {
                let mut acc = Dd::from(0.0);
                for (l, &t) in grid.angles.iter().enumerate() {
                    let z = Complex64::from_polar(grid.radii[ki], t);
                    let lw = -grid.n_big * grid.radii[ki] * grid.radii[ki] + grid.log_deformation[ki * grid.angles.len() + l];
                    let v = (2.0 * self.log_abs(k, z)? + lw).exp();
                    acc += Dd::from(v * grid.radial_weights[ki] * grid.angular_weight);
                }
                Ok(acc)
            })
            .collect();
        let mut total = Dd::from(0.0);
        for r in rings {
            total += r?;
        }
        Ok(total.to_f64())
    }

    pub fn to_document(&self) -> BasisDocument {
        BasisDocument {
            schema_version: BASIS_SCHEMA_VERSION,
            n: self.n,
            n_big: self.n_big,
            t0: self.moments.t0,
            precision: self.precision,
            moments: self.moments.clone(),
            coeffs: self.coeffs.iter().map(|row| row.iter().map(|c| [dd_parts(c.re).0, dd_parts(c.im).0]).collect()).collect(),
            coeffs_lo: self.coeffs.iter().map(|row| row.iter().map(|c| [dd_parts(c.re).1, dd_parts(c.im).1]).collect()).collect(),
        }
    }

    pub fn from_document(doc: &BasisDocument) -> Result<Self, OrthoError> {
        if doc.schema_version != BASIS_SCHEMA_VERSION {
            return Err(OrthoError::InvalidDocument(format!("unsupported schema_version {}", doc.schema_version)));
        }
        if doc.coeffs.len() != doc.n + 1 || doc.coeffs_lo.len() != doc.n + 1 {
            return Err(OrthoError::InvalidDocument("coefficient rows do not match n".into()));
        }
        let mut coeffs = Vec::with_capacity(doc.n + 1);
        for (k, (hi, lo)) in doc.coeffs.iter().zip(&doc.coeffs_lo).enumerate() {
            if hi.len() != k + 1 || lo.len() != k + 1 {
                return Err(OrthoError::InvalidDocument(format!("row {k} has the wrong length")));
            }
            coeffs.push(
                hi.iter().zip(lo).map(|(h, l)| Complex::new(dd_from_parts(h[0], l[0]), dd_from_parts(h[1], l[1]))).collect(),
            );
        }
        Ok(OrthoBasis { n: doc.n, n_big: doc.n_big, precision: doc.precision, moments: doc.moments.clone(), coeffs })
    }
}

pub const BASIS_SCHEMA_VERSION: u32 = 1;

/// Versioned JSON form of an [`OrthoBasis`]. `coeffs` holds [re, im] of each
/// coefficient; `coeffs_lo` holds the low double-double words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisDocument {
    pub schema_version: u32,
    pub n: usize,
    #[serde(rename = "N")]
    pub n_big: f64,
    pub t0: f64,
    pub precision: Precision,
    pub moments: MomentData,
    pub coeffs: Vec<Vec<[f64; 2]>>,
    pub coeffs_lo: Vec<Vec<[f64; 2]>>,
}

/// Build the basis of degree n for the potential at coupling N.
pub fn build_basis(p: &Potential, n: usize, n_big: f64, opts: &GramOptions) -> Result<(GramMatrix, OrthoBasis), OrthoError> {
    let g = compute_gram(p, n, n_big, opts)?;
    let b = orthogonalize(&g, &p.moments)?;
    Ok((g, b))
}

/// (1/N) Σ ln|z − z_i|².
pub fn zero_log_potential(zeros: &[Complex64], n_big: f64, z: Complex64) -> f64 {
    zeros.iter().map(|zi| (z - zi).norm_sqr().ln()).sum::<f64>() / n_big
}

fn horner<T: Real>(c: &[Complex<T>], z: Complex<T>) -> (Complex<T>, Complex<T>) {
    let mut p = Complex::new(T::zero(), T::zero());
    let mut dp = p;
    for ci in c.iter().rev() {
        dp = dp * z + p;
        p = p * z + *ci;
    }
    (p, dp)
}

/// |P(z)| / Σ |c_j| |z|^j.
pub fn backward_error<T: Real>(c: &[Complex<T>], z: Complex<T>) -> f64 {
    let (p, _) = horner(c, z);
    let az = c64(z).norm();
    let scale: f64 = c.iter().rev().fold(0.0, |acc, ci| acc * az + c64(*ci).norm());
    if scale == 0.0 {
        0.0
    } else {
        c64(p).norm() / scale
    }
}

const ROOT_BACKWARD_TOL: f64 = 1e-8;

/// All roots of Σ c_j z^j by Aberth–Ehrlich iteration with Newton polishing.
pub fn polynomial_roots<T: Real>(c: &[Complex<T>], seed: u64) -> Result<Vec<Complex64>, OrthoError> {
    let is_zero = |z: &Complex<T>| z.re == T::zero() && z.im == T::zero();
    let mut hi = c.len();
    while hi > 0 && is_zero(&c[hi - 1]) {
        hi -= 1;
    }
    if hi <= 1 {
        return Ok(Vec::new());
    }
    let low = c.iter().take_while(|z| is_zero(z)).count();
    let c = &c[low..hi];
    let degree = c.len() - 1;
    let mut roots = vec![Complex64::new(0.0, 0.0); low];
    if degree == 0 {
        return Ok(roots);
    }
    if degree == 1 {
        let r = -c[0] / c[1];
        roots.push(c64(r));
        return Ok(roots);
    }
    let lead = c64(c[degree]).norm();
    let radius = (c64(c[0]).norm() / lead).powf(1.0 / degree as f64);
    let tol = if std::mem::size_of::<T>() > 8 { 1e-28 } else { 1e-15 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::INFINITY;
    for _attempt in 0..6 {
        let offset: f64 = rng.gen_range(0.0..2.0 * PI);
        let mut w: Vec<Complex<T>> = (0..degree)
            .map(|i| {
                let jitter: f64 = rng.gen_range(0.9..1.1);
                cx(Complex64::from_polar(radius * jitter, offset + 2.0 * PI * i as f64 / degree as f64))
            })
            .collect();
        for _ in 0..1000 {
            let mut biggest: f64 = 0.0;
            for i in 0..degree {
                let (p, dp) = horner(c, w[i]);
                if c64(p).norm() == 0.0 {
                    continue;
                }
                let ratio = p / dp;
                let mut s = Complex::new(T::zero(), T::zero());
                for j in 0..degree {
                    if j != i {
                        s = s + Complex::new(T::one(), T::zero()) / (w[i] - w[j]);
                    }
                }
                let step = ratio / (Complex::new(T::one(), T::zero()) - ratio * s);
                w[i] = w[i] - step;
                let rel = c64(step).norm() / c64(w[i]).norm().max(radius * 1e-3);
                biggest = biggest.max(rel);
            }
            if biggest <= tol {
                break;
            }
        }
        for wi in w.iter_mut() {
            for _ in 0..3 {
                let (p, dp) = horner(c, *wi);
                if c64(dp).norm() == 0.0 || c64(p).norm() == 0.0 {
                    break;
                }
                *wi = *wi - p / dp;
            }
        }
        let worst = w.iter().map(|wi| backward_error(c, *wi)).fold(0.0, f64::max);
        if worst.is_finite() && worst <= ROOT_BACKWARD_TOL {
            roots.extend(w.into_iter().map(c64));
            return Ok(roots);
        }
        best = best.min(worst);
    }
    Err(OrthoError::RootFindingFailure { degree, residual: best })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn geo(beta: f64, a: f64, t0: f64) -> Potential {
        Potential::new(MomentData::geometric(t0, beta, c(a, 0.0)).unwrap())
    }

    #[test]
    fn gaussian_gram_is_identity() {
        let p = geo(0.0, 2.0, 1.0);
        let g = compute_gram(&p, 6, 6.0, &GramOptions::for_degree(6, false)).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                assert_eq!(g.get64(i, j), if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) });
            }
        }
        // and the grid reproduces it
        let grid = build_grid(&p, 6.0, 6, GridOptions::default()).unwrap();
        let h = gram_on_grid(&grid, 6, Precision::Double);
        assert!(g.relative_distance(&h) < 1e-13);
        let n0 = compute_gram(&p, 0, 3.0, &GramOptions::for_degree(0, false)).unwrap();
        assert_eq!(n0.dim(), 1);
    }

    #[test]
    fn orthogonalize_examples() {
        let p = geo(0.0, 2.0, 1.0);
        let b = orthogonalize(&GramMatrix::identity(3, 3.0, Precision::Double), &p.moments).unwrap();
        for k in 0..4 {
            for j in 0..=k {
                assert_eq!(c64(b.coeffs[k][j]), if j == k { c(1.0, 0.0) } else { c(0.0, 0.0) });
            }
        }
        let cc = c(0.3, -0.4);
        let g = GramMatrix::from_rows(&[vec![c(1.0, 0.0), cc], vec![cc.conj(), c(1.0, 0.0)]], 1.0, Precision::Extended);
        let b = orthogonalize(&g, &p.moments).unwrap();
        let s = (1.0 - cc.norm_sqr()).sqrt();
        assert!((c64(b.coeffs[1][0]) - (-cc.conj() / s)).norm() < 1e-15);
        assert!((c64(b.coeffs[1][1]) - c(1.0 / s, 0.0)).norm() < 1e-15);
        let bad = GramMatrix::from_rows(&[vec![c(1.0, 0.0), c(2.0, 0.0)], vec![c(2.0, 0.0), c(1.0, 0.0)]], 1.0, Precision::Double);
        assert!(matches!(orthogonalize(&bad, &p.moments), Err(OrthoError::NotPositiveDefinite { index: 1, .. })));
    }

    #[test]
    fn gaussian_density_closed_form() {
        let p = geo(0.0, 2.0, 1.0);
        let nb = 10.0;
        let (_, b) = build_basis(&p, 10, nb, &GramOptions::for_degree(10, false)).unwrap();
        for k in [0usize, 3, 10] {
            for z in [c(0.2, 0.1), c(-0.7, 0.5), c(1.5, -1.0)] {
                let ln_want = (k as f64 + 1.0) * nb.ln() - PI.ln() - crate::quadrature::ln_factorial(k)
                    + 2.0 * k as f64 * z.norm().ln()
                    - nb * z.norm_sqr();
                let got = b.log_density(k, z).unwrap();
                assert!((got - ln_want).abs() < 1e-12, "k={k} z={z} {got} {ln_want}");
            }
        }
        // far away: no overflow, value 0
        assert_eq!(b.eval_density(10, c(1e3, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn zeros_examples() {
        let p = geo(0.0, 2.0, 1.0);
        let (_, b) = build_basis(&p, 3, 3.0, &GramOptions::for_degree(3, false)).unwrap();
        let z = b.zeros(3, 1).unwrap();
        assert_eq!(z, vec![c(0.0, 0.0); 3]);
        let p = geo(0.5, 3.0, 1.0);
        let (_, b) = build_basis(&p, 4, 4.0, &GramOptions::for_degree(4, false)).unwrap();
        let d = b.monomial_coeffs(1).unwrap();
        let z1 = b.zeros(1, 1).unwrap();
        assert!((z1[0] - c64(-d[0] / d[1])).norm() < 1e-15);
        let z4 = b.zeros(4, 9).unwrap();
        assert_eq!(z4.len(), 4);
        for zi in &z4 {
            assert!(b.log_abs(4, *zi).unwrap() < b.log_abs(4, c(0.0, 0.0)).unwrap() - 15.0);
        }
    }

    #[test]
    fn roots_of_known_polynomial() {
        // (z-1)(z+2)(z-3i)
        let roots = [c(1.0, 0.0), c(-2.0, 0.0), c(0.0, 3.0)];
        let mut coeffs = vec![c(1.0, 0.0)];
        for r in roots {
            let mut next = vec![c(0.0, 0.0); coeffs.len() + 1];
            for (i, ci) in coeffs.iter().enumerate() {
                next[i + 1] += ci;
                next[i] -= ci * r;
            }
            coeffs = next;
        }
        let dd: Vec<CDd> = coeffs.iter().map(|z| cx(*z)).collect();
        let got = polynomial_roots(&dd, 3).unwrap();
        for r in roots {
            assert!(got.iter().any(|g| (g - r).norm() < 1e-14));
        }
    }

    #[test]
    fn document_roundtrip() {
        let p = geo(0.5, 3.0, 1.0);
        let (_, b) = build_basis(&p, 5, 5.0, &GramOptions::for_degree(5, true)).unwrap();
        let doc = b.to_document();
        let text = serde_json::to_string(&doc).unwrap();
        let back: BasisDocument = serde_json::from_str(&text).unwrap();
        let b2 = OrthoBasis::from_document(&back).unwrap();
        assert_eq!(b2.coeffs, b.coeffs);
        assert_eq!(b2.moments, b.moments);
    }
}
