//! Exterior harmonic moments, the external potential V and the confining potential W.

use num_complex::{Complex, Complex64};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::precision::{c64, cx, CDd, Dd};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MomentError {
    #[error("invalid moment data: {0}")]
    Invalid(String),
    #[error("z = {0} lies outside the evaluation radius {1} of the truncated moment list")]
    EvalOutsideDomain(Complex64, f64),
    #[error("V is singular at z = a = {0}")]
    SingularPoint(Complex64),
    #[error("potential is not confining for the requested degree")]
    NotConfining,
}

/// Shape of the moment sequence t_1, t_2, ...
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MomentKind {
    /// t_k given explicitly for k = 1..K. When `truncated` is false the list is
    /// the whole sequence and V is a polynomial.
    Explicit { t: Vec<Complex64>, truncated: bool },
    /// t_k = -beta/k * a^{-k}, i.e. V(z) = beta * log(1 - z/a).
    Geometric { beta: f64, a: Complex64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentData {
    pub t0: f64,
    #[serde(flatten)]
    pub kind: MomentKind,
}

impl MomentData {
    pub fn geometric(t0: f64, beta: f64, a: Complex64) -> Result<Self, MomentError> {
        let m = MomentData { t0, kind: MomentKind::Geometric { beta, a } };
        m.validate()?;
        Ok(m)
    }

    pub fn explicit(t0: f64, t: Vec<Complex64>, truncated: bool) -> Result<Self, MomentError> {
        let m = MomentData { t0, kind: MomentKind::Explicit { t, truncated } };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), MomentError> {
        if !(self.t0.is_finite() && self.t0 > 0.0) {
            return Err(MomentError::Invalid(format!("t0 must be positive, got {}", self.t0)));
        }
        match &self.kind {
            MomentKind::Geometric { beta, a } => {
                if !(beta.is_finite() && *beta >= 0.0) {
                    return Err(MomentError::Invalid(format!("beta must be nonnegative, got {beta}")));
                }
                if !(a.norm() > 0.0 && a.norm().is_finite()) {
                    return Err(MomentError::Invalid("a must be finite and nonzero".into()));
                }
            }
            MomentKind::Explicit { t, .. } => {
                if t.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                    return Err(MomentError::Invalid("explicit moments must be finite".into()));
                }
            }
        }
        Ok(())
    }

    /// The k-th exterior moment t_k (k >= 1).
    pub fn moment(&self, k: usize) -> Complex64 {
        assert!(k >= 1);
        match &self.kind {
            MomentKind::Explicit { t, .. } => t.get(k - 1).copied().unwrap_or_default(),
            MomentKind::Geometric { beta, a } => -*beta / k as f64 * a.powi(-(k as i32)),
        }
    }

    /// beta for geometric data, 0 otherwise.
    pub fn beta(&self) -> f64 {
        match &self.kind {
            MomentKind::Geometric { beta, .. } => *beta,
            MomentKind::Explicit { .. } => 0.0,
        }
    }

    pub fn pole(&self) -> Option<Complex64> {
        match &self.kind {
            MomentKind::Geometric { a, .. } => Some(*a),
            MomentKind::Explicit { .. } => None,
        }
    }
}

/// Tail threshold used to derive the evaluation radius of truncated lists.
pub const TAIL_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    pub moments: MomentData,
    pub eval_radius: f64,
}

impl Potential {
    pub fn new(moments: MomentData) -> Self {
        let eval_radius = match &moments.kind {
            MomentKind::Geometric { .. } => f64::INFINITY,
            MomentKind::Explicit { truncated: false, .. } => f64::INFINITY,
            MomentKind::Explicit { t, truncated: true } => truncation_radius(t),
        };
        Potential { moments, eval_radius }
    }

    pub fn t0(&self) -> f64 {
        self.moments.t0
    }

    fn check_domain(&self, z: Complex64) -> Result<(), MomentError> {
        if z.norm() > self.eval_radius {
            Err(MomentError::EvalOutsideDomain(z, self.eval_radius))
        } else {
            Ok(())
        }
    }

    /// V(z) = sum t_k z^k (principal branch of the logarithm for geometric data).
    pub fn eval_v(&self, z: Complex64) -> Result<Complex64, MomentError> {
        self.check_domain(z)?;
        match &self.moments.kind {
            MomentKind::Geometric { beta, a } => {
                if *beta == 0.0 {
                    return Ok(Complex64::new(0.0, 0.0));
                }
                if z == *a {
                    return Err(MomentError::SingularPoint(*a));
                }
                Ok(*beta * (Complex64::new(1.0, 0.0) - z / a).ln())
            }
            MomentKind::Explicit { t, .. } => {
                let mut acc = Complex64::new(0.0, 0.0);
                for c in t.iter().rev() {
                    acc = (acc + c) * z;
                }
                Ok(acc)
            }
        }
    }

    /// V'(z).
    pub fn eval_dv(&self, z: Complex64) -> Result<Complex64, MomentError> {
        self.check_domain(z)?;
        match &self.moments.kind {
            MomentKind::Geometric { beta, a } => {
                if *beta == 0.0 {
                    return Ok(Complex64::new(0.0, 0.0));
                }
                if z == *a {
                    return Err(MomentError::SingularPoint(*a));
                }
                Ok(*beta / (z - a))
            }
            MomentKind::Explicit { t, .. } => {
                let mut acc = Complex64::new(0.0, 0.0);
                for (k, c) in t.iter().enumerate().rev() {
                    acc = acc * z + c * (k + 1) as f64;
                }
                Ok(acc)
            }
        }
    }

    /// W(z) = |z|^2 - 2 Re V(z). Returns +inf at z = a for geometric data with
    /// beta > 0, so that the weight exp(-N W) is 0 there.
    pub fn eval_w(&self, z: Complex64) -> Result<f64, MomentError> {
        match &self.moments.kind {
            MomentKind::Geometric { beta, a } => {
                let r2 = z.norm_sqr();
                if *beta == 0.0 {
                    return Ok(r2);
                }
                if z == *a {
                    return Ok(f64::INFINITY);
                }
                Ok(r2 - 2.0 * beta * log_abs_one_minus(z / a))
            }
            MomentKind::Explicit { .. } => Ok(z.norm_sqr() - 2.0 * self.eval_v(z)?.re),
        }
    }

    /// log of the weight, -N W(z); -inf where the weight vanishes.
    pub fn log_weight(&self, z: Complex64, n_big: f64) -> Result<f64, MomentError> {
        let w = self.eval_w(z)?;
        Ok(if w == f64::INFINITY { f64::NEG_INFINITY } else { -n_big * w })
    }

    /// `log_deformation` in double-double at a double-double node.
    pub fn log_deformation_dd(&self, z: CDd, n_big: f64) -> Result<Dd, MomentError> {
        let nb = Dd::from(n_big);
        match &self.moments.kind {
            MomentKind::Geometric { beta, a } => {
                if *beta == 0.0 {
                    return Ok(Dd::ZERO);
                }
                let d = Complex::new(Dd::from(a.re) - z.re, Dd::from(a.im) - z.im);
                let num = d.re * d.re + d.im * d.im;
                if num.0 == 0.0 {
                    return Ok(Dd::NEG_INFINITY);
                }
                let den = Dd::from(a.re) * Dd::from(a.re) + Dd::from(a.im) * Dd::from(a.im);
                Ok(nb * Dd::from(*beta) * (num / den).ln())
            }
            MomentKind::Explicit { t, .. } => {
                self.check_domain(c64(z))?;
                let mut acc = Complex::new(Dd::ZERO, Dd::ZERO);
                for c in t.iter().rev() {
                    acc = (acc + cx::<Dd>(*c)) * z;
                }
                Ok(Dd::from(2.0) * nb * acc.re)
            }
        }
    }

    /// -N (W(z) - |z|^2), the non-Gaussian part of the log-weight.
    pub fn log_deformation(&self, z: Complex64, n_big: f64) -> Result<f64, MomentError> {
        match &self.moments.kind {
            MomentKind::Geometric { beta, a } => {
                if *beta == 0.0 {
                    return Ok(0.0);
                }
                if z == *a {
                    return Ok(f64::NEG_INFINITY);
                }
                Ok(2.0 * n_big * beta * log_abs_one_minus(z / a))
            }
            MomentKind::Explicit { .. } => Ok(2.0 * n_big * self.eval_v(z)?.re),
        }
    }

    /// Radial test: W(z) - (n_max/N) log|z|^2 must grow without bound along
    /// every test ray.
    pub fn check_confinement(&self, n_big: f64, n_max: usize) -> bool {
        if let MomentKind::Geometric { .. } = self.moments.kind {
            return true;
        }
        let r_max = self.eval_radius.min(1024.0);
        if r_max < 8.0 {
            return false;
        }
        let radii: Vec<f64> = (0..=10)
            .map(|j| 2f64.powf(3.0 + (r_max.log2() - 3.0) * j as f64 / 10.0))
            .collect();
        let c = n_max as f64 / n_big;
        for l in 0..64 {
            let theta = 2.0 * std::f64::consts::PI * l as f64 / 64.0;
            let dir = Complex64::from_polar(1.0, theta);
            let g = |r: f64| -> Option<f64> {
                let w = self.eval_w(dir * r).ok()?;
                Some(w - c * (r * r).ln())
            };
            let n = radii.len();
            match (g(radii[n - 3]), g(radii[n - 2]), g(radii[n - 1])) {
                (Some(g0), Some(g1), Some(g2)) => {
                    if !(g2 > g1 && g1 > g0 && g2 > 0.0) {
                        return false;
                    }
                }
                _ => return false,
            }
        }
        true
    }
}

/// log|1 - w|, accurate for small w.
pub fn log_abs_one_minus(w: Complex64) -> f64 {
    let x = w.norm_sqr() - 2.0 * w.re;
    if x.abs() < 0.5 {
        0.5 * x.ln_1p()
    } else {
        (Complex64::new(1.0, 0.0) - w).norm().ln()
    }
}

/// Radius where a geometric tail bound fitted to the last three moments drops
/// to TAIL_TOLERANCE.
fn truncation_radius(t: &[Complex64]) -> f64 {
    let k_len = t.len();
    if k_len == 0 {
        return f64::INFINITY;
    }
    let q = t
        .iter()
        .enumerate()
        .skip(k_len.saturating_sub(3))
        .map(|(i, c)| c.norm().powf(1.0 / (i + 1) as f64))
        .fold(0.0, f64::max);
    if q == 0.0 {
        return f64::INFINITY;
    }
    // tail(R) = (qR)^{K+1} / (1 - qR); bisect on x = qR in (0, 1).
    let tail = |x: f64| x.powi(k_len as i32 + 1) / (1.0 - x);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tail(mid) > TAIL_TOLERANCE {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo / q
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geo(beta: f64, a: f64) -> Potential {
        Potential::new(MomentData::geometric(1.0, beta, Complex64::new(a, 0.0)).unwrap())
    }

    #[test]
    fn v_examples() {
        let p = geo(0.5, 2.0);
        assert_eq!(p.eval_v(Complex64::new(0.0, 0.0)).unwrap(), Complex64::new(0.0, 0.0));
        let p = geo(1.0, 2.0);
        let v = p.eval_v(Complex64::new(1.0, 0.0)).unwrap();
        // independent check: partial sums of -sum 2^{-k}/k
        let series: f64 = (1..200).map(|k| -(0.5f64).powi(k) / k as f64).sum();
        assert!((v.re - series).abs() < 1e-12 && v.im.abs() < 1e-15);
        let z = Complex64::new(1e-3, 2e-3);
        let lin = -0.5 * z;
        assert!((p.eval_v(z).unwrap() - lin).norm() < 1e-5);
        assert!(matches!(p.eval_v(Complex64::new(2.0, 0.0)), Err(MomentError::SingularPoint(_))));
    }

    #[test]
    fn w_examples() {
        let p = geo(0.5, 2.0);
        assert_eq!(p.eval_w(Complex64::new(0.0, 0.0)).unwrap(), 0.0);
        let p = geo(1.0, 2.0);
        let w = p.eval_w(Complex64::new(1.0, 0.0)).unwrap();
        assert!((w - (1.0 + 2.0 * 2f64.ln())).abs() < 1e-14);
        assert_eq!(p.eval_w(Complex64::new(2.0, 0.0)).unwrap(), f64::INFINITY);
        let p = geo(0.0, 2.0);
        let z = Complex64::new(0.3, -1.7);
        assert_eq!(p.eval_w(z).unwrap(), z.norm_sqr());
    }

    #[test]
    fn confinement() {
        assert!(geo(0.5, 2.0).check_confinement(8.0, 16));
        assert!(geo(0.0, 2.0).check_confinement(8.0, 16));
        let t = vec![Complex64::new(0.0, 0.0), Complex64::new(0.6, 0.0)];
        let p = Potential::new(MomentData::explicit(1.0, t, false).unwrap());
        assert!(!p.check_confinement(8.0, 8));
        let t = vec![Complex64::new(0.1, 0.0), Complex64::new(0.2, 0.0)];
        let p = Potential::new(MomentData::explicit(1.0, t, false).unwrap());
        assert!(p.check_confinement(8.0, 8));
    }

    #[test]
    fn truncated_lists_refuse_far_points() {
        let t: Vec<Complex64> = (1..=20).map(|k| Complex64::new(0.5f64.powi(k), 0.0)).collect();
        let p = Potential::new(MomentData::explicit(1.0, t, true).unwrap());
        assert!(p.eval_radius > 0.5 && p.eval_radius < 2.0);
        assert!(p.eval_v(Complex64::new(0.1, 0.0)).is_ok());
        assert!(matches!(p.eval_v(Complex64::new(3.0, 0.0)), Err(MomentError::EvalOutsideDomain(..))));
    }

    #[test]
    fn invalid_data() {
        assert!(MomentData::geometric(0.0, 0.5, Complex64::new(2.0, 0.0)).is_err());
        assert!(MomentData::geometric(1.0, -0.5, Complex64::new(2.0, 0.0)).is_err());
        assert!(MomentData::geometric(1.0, 0.5, Complex64::new(0.0, 0.0)).is_err());
    }
}
