//! Reduced one-dimensional geometry of an isoparametric family: the interval
//! [0, D], the singular mean-curvature profile h(t) with derivatives, the
//! boundary exponents j0/j1, and the weight H = exp ∫ h that makes
//! d²/dt² + h·d/dt self-adjoint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which end of the interval [0, D] a boundary quantity refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Zero,
    D,
}

/// Local expansion of h at an endpoint, in the coordinate τ that measures
/// distance *into* the interval from that end:
/// h(τ) = j/τ + eta0 + eta1·τ + O(τ²).
///
/// For the D end this describes the mirrored profile −h(D−τ), which is the
/// mean-curvature profile seen when integrating away from D.
#[derive(Debug, Clone, Copy)]
pub struct EndpointSeries {
    pub j: f64,
    pub eta0: f64,
    pub eta1: f64,
}

/// Construction datum for a profile; serializes as the profile's JSON kind.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileKind {
    /// Cartan–Münzner datum on the round sphere: h(t) = (n−1)·cos(kt)/sin(kt)
    /// + c·k/(2·sin(kt)) on [0, π/k].
    Sphere { n: u32, k: u32, c: f64 },
    /// User-tabulated profile: interior samples of h plus the interval length
    /// and boundary exponents.
    Tabulated {
        d: f64,
        j0: u32,
        j1: u32,
        samples: Vec<[f64; 2]>,
    },
}

/// Natural cubic spline through strictly increasing knots.
#[derive(Debug, Clone)]
pub(crate) struct Spline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots (natural: zero at both ends).
    m: Vec<f64>,
}

impl Spline {
    pub(crate) fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 4 {
            return Err(Error::InvalidProfile(format!(
                "tabulated profile needs at least 4 samples, got {n}"
            )));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidProfile(
                "tabulated sample abscissae must be strictly increasing".into(),
            ));
        }
        // Solve the natural-spline tridiagonal system for second derivatives.
        let mut diag = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        let mut sub = vec![0.0; n];
        let mut sup = vec![0.0; n];
        diag[0] = 1.0;
        diag[n - 1] = 1.0;
        for i in 1..n - 1 {
            let h0 = x[i] - x[i - 1];
            let h1 = x[i + 1] - x[i];
            sub[i] = h0 / 6.0;
            diag[i] = (h0 + h1) / 3.0;
            sup[i] = h1 / 6.0;
            rhs[i] = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
        }
        // Thomas elimination (diagonally dominant, no pivoting needed).
        for i in 1..n {
            let w = sub[i] / diag[i - 1];
            diag[i] -= w * sup[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        let mut m = vec![0.0; n];
        m[n - 1] = rhs[n - 1] / diag[n - 1];
        for i in (0..n - 1).rev() {
            m[i] = (rhs[i] - sup[i] * m[i + 1]) / diag[i];
        }
        Ok(Self { x, y, m })
    }

    fn segment(&self, t: f64) -> usize {
        match self.x.partition_point(|&xi| xi <= t) {
            0 => 0,
            p => (p - 1).min(self.x.len() - 2),
        }
    }

    /// Value, first, and second derivative. Outside the knot range the spline
    /// is extended linearly from the nearest end segment.
    pub(crate) fn eval(&self, t: f64) -> (f64, f64, f64) {
        let n = self.x.len();
        if t < self.x[0] {
            let d = self.deriv_at_knot(0);
            return (self.y[0] + d * (t - self.x[0]), d, 0.0);
        }
        if t > self.x[n - 1] {
            let d = self.deriv_at_knot(n - 1);
            return (self.y[n - 1] + d * (t - self.x[n - 1]), d, 0.0);
        }
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        let val = a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0;
        let d1 = (self.y[i + 1] - self.y[i]) / h
            + ((3.0 * b * b - 1.0) * self.m[i + 1] - (3.0 * a * a - 1.0) * self.m[i]) * h / 6.0;
        let d2 = a * self.m[i] + b * self.m[i + 1];
        (val, d1, d2)
    }

    fn deriv_at_knot(&self, i: usize) -> f64 {
        let j = if i == self.x.len() - 1 { i - 1 } else { i };
        let h = self.x[j + 1] - self.x[j];
        if i == j {
            (self.y[j + 1] - self.y[j]) / h - h * (2.0 * self.m[j] + self.m[j + 1]) / 6.0
        } else {
            (self.y[j + 1] - self.y[j]) / h + h * (self.m[j] + 2.0 * self.m[j + 1]) / 6.0
        }
    }
}

/// The reduced geometry. Immutable after construction; cheap to clone and safe
/// to share across worker threads.
#[derive(Debug, Clone)]
pub struct Profile {
    kind: ProfileKind,
    d: f64,
    j0: u32,
    j1: u32,
    antisymmetric: bool,
    /// Spline of the regular part g(t) = h(t) − j0/t + j1/(D−t), tabulated
    /// profiles only.
    regular: Option<Spline>,
}

/// Accept a boundary exponent only if it is within this distance of an integer.
const J_INT_TOL: f64 = 1e-9;

fn as_boundary_exponent(x: f64, name: &str) -> Result<u32> {
    let r = x.round();
    if (x - r).abs() > J_INT_TOL || r < 1.0 {
        return Err(Error::InvalidProfile(format!(
            "boundary exponent {name} = {x} is not a positive integer"
        )));
    }
    Ok(r as u32)
}

impl Profile {
    /// Sphere profile from the Cartan–Münzner datum (n, k, c):
    /// h(t) = (n−1)·cos(kt)/sin(kt) + c·k/(2·sin(kt)) on [0, D], D = π/k.
    ///
    /// The boundary exponents are j0 = (n−1)/k + c/2, j1 = (n−1)/k − c/2;
    /// both must come out as positive integers for the datum to describe an
    /// isoparametric family. Antisymmetric about D/2 exactly when c = 0.
    pub fn sphere(n: u32, k: u32, c: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidProfile(format!("n = {n} must be at least 2")));
        }
        if ![1, 2, 3, 4, 6].contains(&k) {
            return Err(Error::InvalidProfile(format!(
                "k = {k} is not an isoparametric degree (1, 2, 3, 4, or 6)"
            )));
        }
        let base = f64::from(n - 1) / f64::from(k);
        let j0 = as_boundary_exponent(base + c / 2.0, "j0")?;
        let j1 = as_boundary_exponent(base - c / 2.0, "j1")?;
        Ok(Self {
            kind: ProfileKind::Sphere { n, k, c },
            d: std::f64::consts::PI / f64::from(k),
            j0,
            j1,
            antisymmetric: c == 0.0,
            regular: None,
        })
    }

    /// Profile from interior samples of h. The samples must lie strictly
    /// inside (0, D); evaluation splines the regular part
    /// g(t) = h(t) − j0/t + j1/(D−t) so the endpoint singularities are exact.
    pub fn tabulated(d: f64, j0: u32, j1: u32, samples: &[[f64; 2]]) -> Result<Self> {
        if !(d > 0.0) {
            return Err(Error::InvalidProfile(format!("D = {d} must be positive")));
        }
        if j0 < 1 || j1 < 1 {
            return Err(Error::InvalidProfile(
                "boundary exponents must be positive integers".into(),
            ));
        }
        if samples.iter().any(|s| s[0] <= 0.0 || s[0] >= d) {
            return Err(Error::InvalidProfile(
                "tabulated samples must lie strictly inside (0, D)".into(),
            ));
        }
        let x: Vec<f64> = samples.iter().map(|s| s[0]).collect();
        let g: Vec<f64> = samples
            .iter()
            .map(|s| s[1] - f64::from(j0) / s[0] + f64::from(j1) / (d - s[0]))
            .collect();
        let spline = Spline::new(x, g)?;
        let mut p = Self {
            kind: ProfileKind::Tabulated {
                d,
                j0,
                j1,
                samples: samples.to_vec(),
            },
            d,
            j0,
            j1,
            antisymmetric: false,
            regular: Some(spline),
        };
        p.antisymmetric = j0 == j1 && p.check_antisymmetry(64, 1e-8);
        Ok(p)
    }

    pub fn from_kind(kind: &ProfileKind) -> Result<Self> {
        match kind {
            ProfileKind::Sphere { n, k, c } => Self::sphere(*n, *k, *c),
            ProfileKind::Tabulated { d, j0, j1, samples } => {
                Self::tabulated(*d, *j0, *j1, samples)
            }
        }
    }

    pub fn kind(&self) -> &ProfileKind {
        &self.kind
    }

    /// Interval length D.
    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn j0(&self) -> u32 {
        self.j0
    }

    pub fn j1(&self) -> u32 {
        self.j1
    }

    pub fn antisymmetric(&self) -> bool {
        self.antisymmetric
    }

    /// Mean curvature h(t), singular at both endpoints.
    pub fn h(&self, t: f64) -> f64 {
        match &self.kind {
            ProfileKind::Sphere { n, k, c } => {
                let kf = f64::from(*k);
                let s = (kf * t).sin();
                (f64::from(*n - 1) * (kf * t).cos() + c * kf / 2.0) / s
            }
            ProfileKind::Tabulated { .. } => {
                let g = self.regular.as_ref().unwrap().eval(t).0;
                g + f64::from(self.j0) / t - f64::from(self.j1) / (self.d - t)
            }
        }
    }

    /// dh/dt.
    pub fn h_prime(&self, t: f64) -> f64 {
        match &self.kind {
            ProfileKind::Sphere { n, k, c } => {
                let kf = f64::from(*k);
                let csc = 1.0 / (kf * t).sin();
                let cot = (kf * t).cos() * csc;
                -f64::from(*n - 1) * kf * csc * csc - c * kf * kf / 2.0 * csc * cot
            }
            ProfileKind::Tabulated { .. } => {
                let g1 = self.regular.as_ref().unwrap().eval(t).1;
                g1 - f64::from(self.j0) / (t * t) - f64::from(self.j1) / ((self.d - t) * (self.d - t))
            }
        }
    }

    /// d²h/dt².
    pub fn h_second(&self, t: f64) -> f64 {
        match &self.kind {
            ProfileKind::Sphere { n, k, c } => {
                let kf = f64::from(*k);
                let csc = 1.0 / (kf * t).sin();
                let cot = (kf * t).cos() * csc;
                2.0 * f64::from(*n - 1) * kf * kf * csc * csc * cot
                    + c * kf * kf * kf / 2.0 * (csc * cot * cot + csc * csc * csc)
            }
            ProfileKind::Tabulated { .. } => {
                let g2 = self.regular.as_ref().unwrap().eval(t).2;
                g2 + 2.0 * f64::from(self.j0) / (t * t * t)
                    - 2.0 * f64::from(self.j1) / ((self.d - t) * (self.d - t) * (self.d - t))
            }
        }
    }

    /// Weight H(t) = exp ∫_{D/2}^t h(s) ds. Vanishes like t^j0 at 0 and
    /// (D−t)^j1 at D, equals 1 at the midpoint, and is positive in between.
    pub fn weight(&self, t: f64) -> Result<f64> {
        let slack = 1e-12 * self.d;
        if !(-slack..=self.d + slack).contains(&t) {
            return Err(Error::OutOfRange(format!(
                "t = {t} outside [0, {}]",
                self.d
            )));
        }
        if t <= 0.0 || t >= self.d {
            return Ok(0.0);
        }
        Ok(match &self.kind {
            ProfileKind::Sphere { n, k, c } => {
                let kf = f64::from(*k);
                // ln H = ((n−1)/k)·ln sin(kt) + (c/2)·ln tan(kt/2), with
                // tan(kt/2) rewritten via cos(kt/2) = sin(k(D−t)/2) so both
                // endpoint singularities are evaluated as small sines.
                let mut ln_h = f64::from(*n - 1) / kf * (kf * t).sin().ln();
                if *c != 0.0 {
                    ln_h += c / 2.0
                        * ((kf * t / 2.0).sin().ln() - (kf * (self.d - t) / 2.0).sin().ln());
                }
                ln_h.exp()
            }
            ProfileKind::Tabulated { .. } => {
                let half = self.d / 2.0;
                let ln_singular = f64::from(self.j0) * (t / half).ln()
                    + f64::from(self.j1) * ((self.d - t) / half).ln();
                (ln_singular + self.integral_of_regular(half, t)).exp()
            }
        })
    }

    /// Composite-Simpson integral of the spline-regular part over [a, b].
    fn integral_of_regular(&self, a: f64, b: f64) -> f64 {
        let spline = self.regular.as_ref().unwrap();
        let n = 256; // even panel count; spline is C², error ~ (len/n)^4
        let hstep = (b - a) / n as f64;
        let mut acc = spline.eval(a).0 + spline.eval(b).0;
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * spline.eval(a + i as f64 * hstep).0;
        }
        acc * hstep / 3.0
    }

    /// Endpoint expansion data for series starts: h(τ) = j/τ + eta0 + eta1·τ
    /// in the inward coordinate τ. For `Endpoint::D` this is the expansion of
    /// the mirrored profile −h(D−τ).
    pub fn endpoint_series(&self, end: Endpoint) -> EndpointSeries {
        match &self.kind {
            ProfileKind::Sphere { n, k, c } => {
                // (n−1)·cot(kt) = (n−1)/k·(1/t) − (n−1)k/3·t − …,
                // (ck/2)/sin(kt) = (c/2)·(1/t) + (ck²/12)·t + …; the D end is
                // the same datum with c negated.
                let kf = f64::from(*k);
                let base = -f64::from(*n - 1) * kf / 3.0;
                let (j, eta1) = match end {
                    Endpoint::Zero => (f64::from(self.j0), base + c * kf * kf / 12.0),
                    Endpoint::D => (f64::from(self.j1), base - c * kf * kf / 12.0),
                };
                EndpointSeries { j, eta0: 0.0, eta1 }
            }
            ProfileKind::Tabulated { .. } => {
                let spline = self.regular.as_ref().unwrap();
                let (j, far, g, g1) = match end {
                    Endpoint::Zero => {
                        let (g, g1, _) = spline.eval(0.0);
                        (f64::from(self.j0), f64::from(self.j1), g, g1)
                    }
                    Endpoint::D => {
                        let (g, g1, _) = spline.eval(self.d);
                        (f64::from(self.j1), f64::from(self.j0), -g, g1)
                    }
                };
                EndpointSeries {
                    j,
                    eta0: g - far / self.d,
                    eta1: g1 - far / (self.d * self.d),
                }
            }
        }
    }

    /// True iff |h(D/2 − t) + h(D/2 + t)| ≤ tol at `samples` interior points.
    pub fn check_antisymmetry(&self, samples: usize, tol: f64) -> bool {
        let half = self.d / 2.0;
        (1..=samples).all(|i| {
            // Keep clear of the endpoint singularities.
            let t = 0.96 * half * i as f64 / (samples as f64 + 1.0);
            (self.h(half - t) + self.h(half + t)).abs() <= tol
        })
    }

    /// JSON document describing the profile.
    pub fn descriptor_json(&self) -> serde_json::Value {
        let mut doc = serde_json::to_value(&self.kind).expect("profile kind serializes");
        let obj = doc.as_object_mut().unwrap();
        obj.insert("D".into(), self.d.into());
        obj.insert("j0".into(), self.j0.into());
        obj.insert("j1".into(), self.j1.into());
        obj.insert("antisymmetric".into(), self.antisymmetric.into());
        doc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn sphere_s3_k1_matches_cotangent() {
        let p = Profile::sphere(3, 1, 0.0).unwrap();
        assert_eq!(p.d(), PI);
        assert_eq!((p.j0(), p.j1()), (2, 2));
        assert!(p.antisymmetric());
        for t in [0.3, 1.0, 2.0, 2.8] {
            assert_relative_eq!(p.h(t), 2.0 * t.cos() / t.sin(), max_relative = 1e-14);
        }
    }

    #[test]
    fn sphere_s3_k2_matches_cotangent() {
        let p = Profile::sphere(3, 2, 0.0).unwrap();
        assert_eq!(p.d(), PI / 2.0);
        assert_eq!((p.j0(), p.j1()), (1, 1));
        for t in [0.2, 0.7, 1.3] {
            assert_relative_eq!(
                p.h(t),
                2.0 * (2.0 * t).cos() / (2.0 * t).sin(),
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn antisymmetry_forces_vanishing_at_midpoint() {
        let p = Profile::sphere(2, 1, 0.0).unwrap();
        assert!(p.h(PI / 2.0).abs() < 1e-15);
        assert!(p.check_antisymmetry(50, 1e-10));
    }

    #[test]
    fn asymmetric_datum_has_split_exponents() {
        let p = Profile::sphere(4, 2, 1.0).unwrap();
        assert_eq!((p.j0(), p.j1()), (2, 1));
        assert!(!p.antisymmetric());
        assert!(!p.check_antisymmetry(50, 1e-8));
    }

    #[test]
    fn fractional_exponent_datum_is_rejected() {
        assert!(Profile::sphere(4, 2, 0.0).is_err());
        assert!(Profile::sphere(3, 7, 0.0).is_err());
        assert!(Profile::sphere(1, 1, 0.0).is_err());
    }

    #[test]
    fn weight_endpoint_and_midpoint_values() {
        let p = Profile::sphere(3, 1, 0.0).unwrap();
        assert_eq!(p.weight(0.0).unwrap(), 0.0);
        assert_eq!(p.weight(PI).unwrap(), 0.0);
        assert_relative_eq!(p.weight(PI / 2.0).unwrap(), 1.0, max_relative = 1e-15);
        // Closed form sin²t at the quarter point.
        assert_relative_eq!(p.weight(PI / 4.0).unwrap(), 0.5, max_relative = 1e-14);
        assert!(p.weight(-0.1).is_err());
        assert!(p.weight(PI + 0.1).is_err());
    }

    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn recurse(
            f: &dyn Fn(f64) -> f64,
            a: f64,
            b: f64,
            fa: f64,
            fm: f64,
            fb: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                    + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
            }
        }
        let (fa, fb) = (f(a), f(b));
        let m = 0.5 * (a + b);
        let fm = f(m);
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        recurse(f, a, b, fa, fm, fb, whole, tol, 40)
    }

    #[test]
    fn weight_matches_quadrature_of_h() {
        for (n, k, c) in [(3u32, 1u32, 0.0), (4, 1, 0.0), (4, 2, 1.0)] {
            let p = Profile::sphere(n, k, c).unwrap();
            let half = p.d() / 2.0;
            for i in 1..100 {
                let t = p.d() * i as f64 / 100.0;
                let quad = adaptive_simpson(&|s| p.h(s), half, t, 1e-13).exp();
                assert_relative_eq!(p.weight(t).unwrap(), quad, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for (n, k, c) in [(3u32, 1u32, 0.0), (3, 2, 0.0), (4, 2, 1.0)] {
            let p = Profile::sphere(n, k, c).unwrap();
            let d = p.d();
            for i in 1..20 {
                let t = d * (0.1 + 0.8 * i as f64 / 20.0);
                let dt = 1e-5 * d;
                let fd1 = (p.h(t + dt) - p.h(t - dt)) / (2.0 * dt);
                let fd2 = (p.h(t + dt) - 2.0 * p.h(t) + p.h(t - dt)) / (dt * dt);
                assert_relative_eq!(p.h_prime(t), fd1, max_relative = 1e-6);
                assert_relative_eq!(
                    p.h_second(t),
                    fd2,
                    max_relative = 1e-4,
                    epsilon = 1e-6 * p.h_second(t).abs().max(1.0)
                );
            }
        }
    }

    #[test]
    fn endpoint_limits_recover_boundary_exponents() {
        for (n, k, c) in [(3u32, 1u32, 0.0), (3, 2, 0.0), (4, 2, 1.0), (4, 1, 0.0)] {
            let p = Profile::sphere(n, k, c).unwrap();
            let es0 = p.endpoint_series(Endpoint::Zero);
            let es1 = p.endpoint_series(Endpoint::D);
            for eps in [1e-2, 1e-3, 1e-4] {
                // t·h(t) → j0 and (D−t)·(−h(D−t))... → j1, first order in eps².
                let lhs0 = eps * p.h(eps);
                let lhs1 = -eps * p.h(p.d() - eps);
                assert!((lhs0 - es0.j).abs() <= 2.0 * (es0.eta1.abs() + 1.0) * eps * eps);
                assert!((lhs1 - es1.j).abs() <= 2.0 * (es1.eta1.abs() + 1.0) * eps * eps);
            }
            assert_eq!(es0.j, f64::from(p.j0()));
            assert_eq!(es1.j, f64::from(p.j1()));
        }
    }

    #[test]
    fn endpoint_series_matches_h_to_stated_order() {
        let p = Profile::sphere(4, 2, 1.0).unwrap();
        let es0 = p.endpoint_series(Endpoint::Zero);
        let es1 = p.endpoint_series(Endpoint::D);
        for eps in [1e-2, 5e-3] {
            let err0 = (p.h(eps) - es0.j / eps - es0.eta1 * eps).abs();
            let err1 = (-p.h(p.d() - eps) - es1.j / eps - es1.eta1 * eps).abs();
            // Next omitted term is eta3·τ³.
            assert!(err0 < 50.0 * eps * eps * eps, "err0 = {err0} at eps {eps}");
            assert!(err1 < 50.0 * eps * eps * eps, "err1 = {err1} at eps {eps}");
        }
    }

    #[test]
    fn tabulated_reproduces_sphere_profile() {
        let reference = Profile::sphere(3, 1, 0.0).unwrap();
        let d = reference.d();
        let samples: Vec<[f64; 2]> = (1..400)
            .map(|i| {
                let t = d * i as f64 / 400.0;
                [t, reference.h(t)]
            })
            .collect();
        let p = Profile::tabulated(d, 2, 2, &samples).unwrap();
        assert!(p.antisymmetric());
        for i in 1..60 {
            let t = d * i as f64 / 60.0;
            assert_relative_eq!(p.h(t), reference.h(t), max_relative = 1e-7);
            assert_relative_eq!(
                p.weight(t).unwrap(),
                reference.weight(t).unwrap(),
                max_relative = 1e-6,
                epsilon = 1e-9
            );
        }
        let es = p.endpoint_series(Endpoint::Zero);
        let es_ref = reference.endpoint_series(Endpoint::Zero);
        assert_eq!(es.j, es_ref.j);
        assert!((es.eta0 - es_ref.eta0).abs() < 1e-4);
        assert!((es.eta1 - es_ref.eta1).abs() < 1e-2);
    }

    #[test]
    fn descriptor_round_trips_fields() {
        let p = Profile::sphere(3, 2, 0.0).unwrap();
        let doc = p.descriptor_json();
        assert_eq!(doc["kind"], "sphere");
        assert_eq!(doc["n"], 3);
        assert_eq!(doc["j0"], 1);
        assert_eq!(doc["antisymmetric"], true);
    }
}
