//! Bifurcation analysis along one-parameter coefficient paths: locate the
//! parameter instants where the linearization at u ≡ 1 acquires a kernel,
//! then continue the emerging nontrivial branches by pseudo-arclength.
//!
//! The linearized operator factorizes through the weighted second-order
//! spectrum: a kernel appears exactly when φ(a(s), b(s), q) hits an
//! eigenvalue λ_i, where φ is the negative root of x² − ax − b(q−1).

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::json;

use crate::coeffs::{product_coefficients, EinsteinProductDatum, PaneitzCoefficients};
use crate::error::{Error, Result};
use crate::flow::{QualityReport, SolutionProfile};
use crate::profile::{Profile, Spline};
use crate::shooting;
use crate::sturm::Spectrum;

/// Negative root of x² − ax − b(q−1): the spectral level at which the
/// trivial solution's linearization degenerates. Negative whenever b > 0.
pub fn phi(a: f64, b: f64, q: f64) -> f64 {
    0.5 * (a - (a * a + 4.0 * b * (q - 1.0)).sqrt())
}

#[derive(Debug, Clone)]
enum PathKind {
    /// a(s) = s, b(s) = c·s².
    LinearQuadratic { c: f64 },
    /// Coefficients of the Einstein product family with the second factor's
    /// constant scaled as Λ1 = s·Λ0.
    EinsteinProduct { n: u32, m: u32, lambda0: f64 },
    /// Splined user samples of s ↦ (a, b).
    Tabulated { sa: Spline, sb: Spline },
}

/// One-parameter family s ↦ (a(s), b(s)) of equation coefficients with a
/// fixed exponent q.
#[derive(Debug, Clone)]
pub struct CoefficientPath {
    kind: PathKind,
    q: f64,
    domain: (f64, f64),
}

impl CoefficientPath {
    /// The built-in path a(s) = s, b(s) = c·s². The hypothesis a² > 4b
    /// pins c < 1/4.
    pub fn linear_quadratic(c: f64, q: f64) -> Result<Self> {
        if !(c > 0.0 && c < 0.25) {
            return Err(Error::InvalidPath(format!(
                "quadratic coefficient must lie in (0, 1/4), got {c}"
            )));
        }
        if !(q > 1.0) {
            return Err(Error::InvalidPath(format!("exponent must exceed 1, got {q}")));
        }
        Ok(Self {
            kind: PathKind::LinearQuadratic { c },
            q,
            domain: (1e-8, f64::INFINITY),
        })
    }

    /// Geometric path through the Einstein product family: the first factor
    /// is held at lambda0 while the second scales as Λ1 = s·lambda0, so the
    /// domain starts at s = 1 where the factors balance.
    pub fn einstein_product(n: u32, m: u32, lambda0: f64, q: f64) -> Result<Self> {
        let datum = EinsteinProductDatum::new(n, m, lambda0, lambda0)?;
        product_coefficients(&datum, q)?;
        Ok(Self {
            kind: PathKind::EinsteinProduct { n, m, lambda0 },
            q,
            domain: (1.0, f64::INFINITY),
        })
    }

    /// Path through user samples (s, a, b), splined componentwise.
    pub fn tabulated(samples: &[[f64; 3]], q: f64) -> Result<Self> {
        if !(q > 1.0) {
            return Err(Error::InvalidPath(format!("exponent must exceed 1, got {q}")));
        }
        let s: Vec<f64> = samples.iter().map(|r| r[0]).collect();
        let a: Vec<f64> = samples.iter().map(|r| r[1]).collect();
        let b: Vec<f64> = samples.iter().map(|r| r[2]).collect();
        let domain = (
            *s.first().ok_or_else(|| Error::InvalidPath("empty sample table".into()))?,
            *s.last().unwrap(),
        );
        if domain.0 <= 0.0 {
            return Err(Error::InvalidPath(
                "tabulated path parameters must be positive".into(),
            ));
        }
        let sa = Spline::new(s.clone(), a).map_err(|e| Error::InvalidPath(e.to_string()))?;
        let sb = Spline::new(s, b).map_err(|e| Error::InvalidPath(e.to_string()))?;
        Ok(Self {
            kind: PathKind::Tabulated { sa, sb },
            q,
            domain,
        })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    fn check_domain(&self, s: f64) -> Result<()> {
        if !(s >= self.domain.0 && s <= self.domain.1 && s.is_finite()) {
            return Err(Error::OutOfRange(format!(
                "path parameter {s} outside the domain [{}, {}]",
                self.domain.0, self.domain.1
            )));
        }
        Ok(())
    }

    /// a(s) and a′(s).
    pub fn a(&self, s: f64) -> Result<(f64, f64)> {
        self.check_domain(s)?;
        match &self.kind {
            PathKind::LinearQuadratic { .. } => Ok((s, 1.0)),
            PathKind::EinsteinProduct { .. } => {
                // α is affine in Λ1, so the central difference is exact.
                let h = 1e-4 * (1.0 + s);
                let c = self.coeffs(s)?;
                let cp = self.coeffs_unchecked(s + h)?;
                let cm = self.coeffs_unchecked(s - h)?;
                Ok((c.alpha, (cp.alpha - cm.alpha) / (2.0 * h)))
            }
            PathKind::Tabulated { sa, .. } => {
                let (v, d, _) = sa.eval(s);
                Ok((v, d))
            }
        }
    }

    /// b(s) and b′(s).
    pub fn b(&self, s: f64) -> Result<(f64, f64)> {
        self.check_domain(s)?;
        match &self.kind {
            PathKind::LinearQuadratic { c } => Ok((c * s * s, 2.0 * c * s)),
            PathKind::EinsteinProduct { .. } => {
                // β is an exact quadratic in Λ1, likewise exact centrally.
                let h = 1e-4 * (1.0 + s);
                let c = self.coeffs(s)?;
                let cp = self.coeffs_unchecked(s + h)?;
                let cm = self.coeffs_unchecked(s - h)?;
                Ok((c.beta, (cp.beta - cm.beta) / (2.0 * h)))
            }
            PathKind::Tabulated { sb, .. } => {
                let (v, d, _) = sb.eval(s);
                Ok((v, d))
            }
        }
    }

    /// Evaluate without the domain check (finite-difference probes may step
    /// marginally outside).
    fn coeffs_unchecked(&self, s: f64) -> Result<PaneitzCoefficients> {
        match &self.kind {
            PathKind::LinearQuadratic { c } => PaneitzCoefficients::new(s, c * s * s, self.q),
            PathKind::EinsteinProduct { n, m, lambda0 } => {
                let datum = EinsteinProductDatum::new(*n, *m, *lambda0, s * lambda0)?;
                product_coefficients(&datum, self.q)
            }
            PathKind::Tabulated { sa, sb } => {
                PaneitzCoefficients::new(sa.eval(s).0, sb.eval(s).0, self.q)
            }
        }
    }

    /// The equation coefficients at parameter s.
    pub fn coeffs(&self, s: f64) -> Result<PaneitzCoefficients> {
        self.check_domain(s)?;
        self.coeffs_unchecked(s)
    }

    pub fn phi_at(&self, s: f64) -> Result<f64> {
        let c = self.coeffs(s)?;
        Ok(phi(c.alpha, c.beta, self.q))
    }

    /// Exact instant for the built-in path: s = 2λ/(1 − √(1 + 4c(q−1))).
    pub fn closed_form_instant(&self, lambda: f64) -> Option<f64> {
        match &self.kind {
            PathKind::LinearQuadratic { c } => {
                Some(2.0 * lambda / (1.0 - (1.0 + 4.0 * c * (self.q - 1.0)).sqrt()))
            }
            _ => None,
        }
    }

    /// Sample [s_lo, s_hi] and check the structural hypotheses: both
    /// coefficients positive and strictly increasing, a² > 4b, and φ
    /// strictly decreasing. Any violation refuses the whole path.
    pub fn validate(&self, s_lo: f64, s_hi: f64) -> Result<()> {
        self.check_domain(s_lo)?;
        self.check_domain(s_hi)?;
        if !(s_hi > s_lo) {
            return Err(Error::OutOfRange(format!(
                "empty validation range [{s_lo}, {s_hi}]"
            )));
        }
        const SAMPLES: usize = 257;
        // Geometric spacing: the interesting behaviour near 0 is on a log
        // scale while the range can span several decades.
        let ratio = (s_hi / s_lo).powf(1.0 / (SAMPLES - 1) as f64);
        let mut prev: Option<(f64, f64, f64)> = None;
        let mut s = s_lo;
        for i in 0..SAMPLES {
            let (a, _) = self.a(s)?;
            let (b, _) = self.b(s)?;
            if !(a > 0.0 && b > 0.0) {
                return Err(Error::InvalidPath(format!(
                    "coefficients must be positive, got a = {a:.6e}, b = {b:.6e} at s = {s:.6e}"
                )));
            }
            if a * a <= 4.0 * b {
                return Err(Error::InvalidPath(format!(
                    "a² > 4b fails at s = {s:.6e} (a = {a:.6e}, b = {b:.6e})"
                )));
            }
            let p = phi(a, b, self.q);
            if let Some((pa, pb, pp)) = prev {
                if a <= pa || b <= pb {
                    return Err(Error::InvalidPath(format!(
                        "coefficients must be strictly increasing, violated near s = {s:.6e}"
                    )));
                }
                if p >= pp {
                    return Err(Error::InvalidPath(format!(
                        "spectral level φ must be strictly decreasing, violated near s = {s:.6e}"
                    )));
                }
            }
            prev = Some((a, b, p));
            s = if i + 2 == SAMPLES { s_hi } else { s * ratio };
        }
        Ok(())
    }

    pub fn descriptor_json(&self) -> serde_json::Value {
        match &self.kind {
            PathKind::LinearQuadratic { c } => json!({
                "kind": "linear_quadratic", "c": c, "q": self.q,
            }),
            PathKind::EinsteinProduct { n, m, lambda0 } => json!({
                "kind": "einstein_product", "n": n, "m": m, "lambda0": lambda0, "q": self.q,
            }),
            PathKind::Tabulated { .. } => json!({
                "kind": "tabulated", "q": self.q,
                "domain": [self.domain.0, self.domain.1],
            }),
        }
    }
}

/// A parameter value where the trivial solution's linearization degenerates.
#[derive(Debug, Clone, Serialize)]
pub struct BifurcationPoint {
    /// Eigenvalue index i ≥ 1 matched by φ(s).
    pub index: usize,
    pub s: f64,
    pub lambda: f64,
    /// Crossing speed −a′(s)λ + b′(s)(1−q); zero means the instant is
    /// degenerate and branch continuation is refused.
    pub tau: f64,
    /// Kernel direction of the shooting map in initial-data space,
    /// normalized with positive first component.
    pub tangent: (f64, f64),
    /// Exact instant where the path admits one (built-in path only).
    pub closed_form: Option<f64>,
    pub valid: bool,
}

/// Locate the instants φ(s) = λ_i for 1 ≤ i ≤ i_max by bracketed bisection,
/// after numerically validating the path hypotheses over the search range.
pub fn instants(
    path: &CoefficientPath,
    spec: &Spectrum,
    i_max: usize,
) -> Result<Vec<BifurcationPoint>> {
    if i_max < 1 {
        return Err(Error::OutOfRange("instant index must be at least 1".into()));
    }
    if spec.eigenvalues_extrapolated.len() <= i_max {
        return Err(Error::GridTooCoarse(format!(
            "spectrum holds {} eigenvalues, need at least {}",
            spec.eigenvalues_extrapolated.len(),
            i_max + 1
        )));
    }
    let lambda_deep = spec.eigenvalues_extrapolated[i_max];
    let margin = 1e-3 * (1.0 + lambda_deep.abs());
    let s_lo = path.domain().0;
    // Grow the right end until the deepest eigenvalue is bracketed.
    let mut s_hi = (2.0 * s_lo).max(1.0).min(path.domain().1);
    let mut grown = 0;
    while path.phi_at(s_hi)? > lambda_deep - margin {
        if s_hi >= path.domain().1 || grown > 70 {
            return Err(Error::Bracketing(format!(
                "φ never reaches {lambda_deep:.6e} on the path domain (φ({s_hi:.6e}) = {:.6e})",
                path.phi_at(s_hi)?
            )));
        }
        s_hi = (2.0 * s_hi).min(path.domain().1);
        grown += 1;
    }
    path.validate(s_lo, s_hi)?;
    if path.phi_at(s_lo)? <= spec.eigenvalues_extrapolated[1] {
        return Err(Error::Bracketing(format!(
            "φ at the domain start ({:.6e}) already lies below λ_1",
            path.phi_at(s_lo)?
        )));
    }

    let mut points = Vec::with_capacity(i_max);
    for i in 1..=i_max {
        let lambda = spec.eigenvalues_extrapolated[i];
        let (mut lo, mut hi) = (s_lo, s_hi);
        let mut mid = 0.5 * (lo + hi);
        for _ in 0..200 {
            mid = 0.5 * (lo + hi);
            let f = path.phi_at(mid)? - lambda;
            if f.abs() <= 1e-12 {
                break;
            }
            if f > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s = mid;
        if (path.phi_at(s)? - lambda).abs() > 1e-10 {
            return Err(Error::Bracketing(format!(
                "instant {i} did not converge: |φ − λ| = {:.3e}",
                (path.phi_at(s)? - lambda).abs()
            )));
        }
        let (_, da) = path.a(s)?;
        let (_, db) = path.b(s)?;
        let tau = -da * lambda + db * (1.0 - path.q());
        let closed_form = path.closed_form_instant(lambda);
        if let Some(cf) = closed_form {
            if (s - cf).abs() > 1e-10 * cf.abs() {
                return Err(Error::Bracketing(format!(
                    "instant {i} disagrees with the closed form: {s:.16e} vs {cf:.16e}"
                )));
            }
        }
        // Kernel direction in (a, b) space, built from the eigenfunction:
        // (φ_i(0), (1+j0)·φ_i″(0)). The endpoint relation of the eigenvalue
        // equation gives (1+j0)·φ_i″(0) = λ_i·φ_i(0), so the direction is
        // φ_i(0)·(1, λ_i); φ_i(0) > 0 fixes the orientation.
        let ef = &spec.eigenfunctions[i];
        let phi0 = (15.0 * ef[0] - 10.0 * ef[1] + 3.0 * ef[2]) / 8.0;
        let raw = (phi0, lambda * phi0);
        let norm = raw.0.hypot(raw.1);
        let sign = if raw.0 >= 0.0 { 1.0 } else { -1.0 };
        let tangent = (sign * raw.0 / norm, sign * raw.1 / norm);
        if let Some(last) = points.last() {
            let last: &BifurcationPoint = last;
            if s <= last.s {
                return Err(Error::Bracketing(format!(
                    "instants out of order: s_{i} = {s:.6e} ≤ s_{} = {:.6e}",
                    last.index, last.s
                )));
            }
        }
        points.push(BifurcationPoint {
            index: i,
            s,
            lambda,
            tau,
            tangent,
            closed_form,
            valid: tau.abs() > 1e-10,
        });
    }
    Ok(points)
}

/// Null direction of a (near-)singular 2×2 matrix: the rotation of its
/// larger row, normalized with nonnegative first component.
pub fn kernel_direction(j: &[[f64; 2]; 2]) -> (f64, f64) {
    let n0 = j[0][0].hypot(j[0][1]);
    let n1 = j[1][0].hypot(j[1][1]);
    let r = if n0 >= n1 { j[0] } else { j[1] };
    let v = (r[1], -r[0]);
    let n = v.0.hypot(v.1);
    if n == 0.0 {
        return (1.0, 0.0);
    }
    let sign = if v.0 > 0.0 || (v.0 == 0.0 && v.1 > 0.0) {
        1.0
    } else {
        -1.0
    };
    (sign * v.0 / n, sign * v.1 / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchStatus {
    /// Point budget exhausted while the branch was still continuable.
    Active,
    ReachedSMax,
    StepFailure,
    PositivityLost,
}

/// One accepted continuation point.
#[derive(Debug, Clone)]
pub struct BranchPoint {
    pub s: f64,
    pub a: f64,
    pub b: f64,
    pub profile: SolutionProfile,
    pub quality: QualityReport,
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub origin: BifurcationPoint,
    pub points: Vec<BranchPoint>,
    /// Common critical-point count of every stored profile: origin.index + 1.
    pub critical_point_count: usize,
    pub status: BranchStatus,
}

impl Branch {
    /// Smallest and largest parameter covered by stored points.
    pub fn s_range(&self) -> Option<(f64, f64)> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in &self.points {
            lo = lo.min(p.s);
            hi = hi.max(p.s);
        }
        self.points.first().map(|_| (lo, hi))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ContinuationOpts {
    /// Stop once the parameter reaches this (default 3·s_i).
    pub s_max: Option<f64>,
    /// First arclength step (default 1e−3·s_i).
    pub h0: Option<f64>,
    pub max_points: usize,
    pub tol: f64,
    /// Node count of assembled solution grids.
    pub grid: usize,
}

impl Default for ContinuationOpts {
    fn default() -> Self {
        Self {
            s_max: None,
            h0: None,
            max_points: 400,
            tol: 1e-9,
            grid: 801,
        }
    }
}

/// Pseudo-arclength continuation of the extended system
/// (r1, r3)(a, b; coeffs(s)) = 0 out of a bifurcation point.
///
/// The first predictor leaves (1, 0, s_i) along the kernel tangent; later
/// predictors are secants through the last two accepted points. Correctors
/// are Newton steps on the residual augmented with the hyperplane condition
/// orthogonal to the tangent, in coordinates scaled so that unit motion in
/// a, b/(1+|λ_i|), and s/(1+s_i) is comparable.
pub fn continue_branch(
    path: &CoefficientPath,
    p: &Profile,
    bp: &BifurcationPoint,
    opts: &ContinuationOpts,
) -> Result<Branch> {
    if !bp.valid {
        return Err(Error::InvalidConfig(format!(
            "instant {} has vanishing crossing speed; cannot continue",
            bp.index
        )));
    }
    let expected_count = bp.index + 1;
    let s_max = opts.s_max.unwrap_or(3.0 * bp.s);
    let scale_b = 1.0 + bp.lambda.abs();
    let scale_s = 1.0 + bp.s;
    let to_xi = |a: f64, b: f64, s: f64| [a, b / scale_b, s / scale_s];

    // Smooth residual of the extended system; escapes surface as large values.
    let residual = |a: f64, b: f64, s: f64| -> Result<(f64, f64)> {
        let coeffs = path.coeffs(s)?;
        let r = shooting::shoot_smooth(&coeffs, p, a, b)?;
        Ok((r.r1, r.r3))
    };

    let corrector = |pred: [f64; 3], tangent: [f64; 3]| -> Result<([f64; 3], usize)> {
        let from_xi = |xi: [f64; 3]| (xi[0], xi[1] * scale_b, xi[2] * scale_s);
        let mut xi = pred;
        let mut last_step = f64::INFINITY;
        for iter in 1..=16 {
            let (a, b, s) = from_xi(xi);
            let (r1, r3) = residual(a, b, s)?;
            let c = tangent
                .iter()
                .zip(xi.iter().zip(pred.iter()))
                .map(|(t, (x, pr))| t * (x - pr))
                .sum::<f64>();
            let nr = r1.hypot(r3);
            if nr <= opts.tol && c.abs() <= 1e-9 {
                return Ok((xi, iter));
            }
            // Central-difference Jacobian in the scaled coordinates. Near a
            // bifurcation point all columns are nearly parallel, and the
            // solve lives off transverse parts three orders of magnitude
            // below the column norms; one-sided differences bury those under
            // truncation error from the huge data-direction curvature. Even
            // centered, the stencil width is pinned from both sides: the
            // h²-weighted third-order terms grow along the branch until they
            // rival the transverse slope itself (a 1e−7 stencil degrades the
            // correction to linear past s ≈ 13), while integrator noise
            // divided by h pushes the other way. 1e−8 leaves both a couple
            // of orders below the transverse parts over the whole range.
            let mut jac = [[0.0; 3]; 3];
            for col in 0..3 {
                let h = 1e-8 * (1.0 + xi[col].abs());
                let (mut xp, mut xm) = (xi, xi);
                xp[col] += h;
                xm[col] -= h;
                let (pa, pb, ps) = from_xi(xp);
                let (p1, p3) = residual(pa, pb, ps)?;
                let (ma, mb, ms) = from_xi(xm);
                let (m1, m3) = residual(ma, mb, ms)?;
                jac[0][col] = (p1 - m1) / (2.0 * h);
                jac[1][col] = (p3 - m3) / (2.0 * h);
                jac[2][col] = tangent[col];
            }
            // The terminal sensitivity of the shooting map makes absolute
            // residuals below ‖J‖·ε unrepresentable, and the integrator
            // noise rides a few times above that rounding level; accept
            // once the residual reaches the noise band and the computed
            // correction no longer moves any digit we can trust. A tighter
            // floor just makes every point wait for a lucky noise draw.
            let jfro = jac[..2]
                .iter()
                .flatten()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            let xnorm = 1.0 + xi.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let floor = 32.0 * f64::EPSILON * jfro * xnorm;
            let dx = solve3(&jac, [-r1, -r3, -c]).ok_or_else(|| Error::Continuation(
                "singular corrector system".into(),
            ))?;
            let ndx = dx.iter().map(|v| v * v).sum::<f64>().sqrt();
            if nr <= floor
                && c.abs() <= 1e-9
                && (ndx <= 1e-8 * xnorm || last_step <= 1e-8 * xnorm)
            {
                return Ok((xi, iter));
            }
            let mut step = 1.0;
            // Keep a positive: the shooting map is only defined there.
            for _ in 0..40 {
                if xi[0] + step * dx[0] > 0.0 {
                    break;
                }
                step *= 0.5;
            }
            // Directional secant rescale: no fixed stencil keeps the FD
            // slope scale right over the whole branch (the curvature that
            // contaminates it keeps growing), but the solve direction stays
            // good. One probe evaluation along it measures the actual
            // directional slope, and the least-squares multiplier under a
            // linear model restores full Newton progress — exactly k when
            // the computed step is k times too short.
            let probe = [
                xi[0] + step * dx[0],
                xi[1] + step * dx[1],
                xi[2] + step * dx[2],
            ];
            let (pa, pb, ps) = from_xi(probe);
            let (g1, g3) = residual(pa, pb, ps)?;
            let (d1, d3) = (g1 - r1, g3 - r3);
            let gain = d1 * d1 + d3 * d3;
            let mut t = if gain > 0.0 {
                -(r1 * d1 + r3 * d3) / gain
            } else {
                1.0
            };
            if !t.is_finite() {
                t = 1.0;
            }
            t = t.clamp(0.25, 1e4);
            for _ in 0..60 {
                if xi[0] + t * step * dx[0] > 0.0 {
                    break;
                }
                t *= 0.5;
            }
            for (x, d) in xi.iter_mut().zip(dx.iter()) {
                *x += t * step * d;
            }
            last_step = t * step * ndx;
            if xi.iter().any(|v| !v.is_finite()) {
                return Err(Error::Continuation("corrector left the finite domain".into()));
            }
        }
        Err(Error::NoConvergence {
            iters: 16,
            residual: f64::NAN,
        })
    };

    let h0 = opts.h0.unwrap_or(1e-3 * bp.s) / scale_s;
    let h_max = 0.1;
    let mut h = h0;
    let mut cur = to_xi(1.0, 0.0, bp.s);
    let mut tangent = {
        let raw = [bp.tangent.0, bp.tangent.1 / scale_b, 0.0];
        let n = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        [raw[0] / n, raw[1] / n, raw[2] / n]
    };

    let mut points: Vec<BranchPoint> = Vec::new();
    let mut status = BranchStatus::Active;
    'outer: while points.len() < opts.max_points {
        let mut accepted: Option<([f64; 3], usize, SolutionProfile, QualityReport)> = None;
        let mut h_try = h;
        // Right at the bifurcation point the trivial line makes the
        // corrector system nearly singular, and a *larger* first step gets
        // clear of it; away from the origin only shrinking makes sense.
        let factors: &[f64] = if points.is_empty() {
            &[1.0, 2.0, 4.0, 0.5, 8.0, 16.0]
        } else {
            &[1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125]
        };
        // A rung only counts if the corrected point also assembles into a
        // solution with the branch's critical point structure; a knife-edge
        // artifact at one step size (overshoot past the positivity boundary,
        // a count flip inside the acceptance patch) gets retried at the next
        // rung instead of ending the branch.
        let mut saw_nonpositive = false;
        let mut last_fail = String::new();
        let trace = std::env::var_os("PANEITZ_TRACE").is_some();
        let ptn = points.len();
        for &f in factors {
            h_try = h * f;
            let pred = [
                cur[0] + h_try * tangent[0],
                cur[1] + h_try * tangent[1],
                cur[2] + h_try * tangent[2],
            ];
            let (xi, iters) = match corrector(pred, tangent) {
                Ok(v) => v,
                Err(e) => {
                    last_fail = format!("corrector: {e}");
                    if trace {
                        eprintln!("TRACE pt {ptn} h_try {h_try:.3e} {last_fail}");
                    }
                    continue;
                }
            };
            let (a, b, s) = (xi[0], xi[1] * scale_b, xi[2] * scale_s);
            if (a - 1.0).abs() + b.abs() <= 1e-8 {
                // Fell back onto the trivial line; treat as failure.
                last_fail = "converged to the trivial line".into();
                continue;
            }
            let coeffs = match path.coeffs(s) {
                Ok(c) => c,
                Err(e) => {
                    last_fail = format!("coefficients at s = {s:.6e}: {e}");
                    continue;
                }
            };
            // Assemble in place: re-solving here would wander at the
            // conditioning floor and poison the secant tangent.
            match shooting::assess(&coeffs, p, a, b, opts.grid) {
                Ok((profile, quality)) => {
                    if profile.critical_point_count != expected_count {
                        last_fail = format!(
                            "{} critical points instead of {expected_count} at s = {s:.6e}",
                            profile.critical_point_count
                        );
                        if trace {
                            eprintln!("TRACE pt {ptn} h_try {h_try:.3e} {last_fail}");
                        }
                        continue;
                    }
                    accepted = Some((xi, iters, profile, quality));
                    break;
                }
                Err(e) => {
                    saw_nonpositive = matches!(e, Error::NonPositive { .. });
                    last_fail = format!("assembly: {e}");
                    if trace {
                        eprintln!("TRACE pt {ptn} h_try {h_try:.3e} {last_fail}");
                    }
                    continue;
                }
            }
        }
        let Some((xi, iters, profile, quality)) = accepted else {
            if points.is_empty() {
                return Err(Error::Continuation(format!(
                    "no step produced an acceptable first point ({last_fail}); \
                     attempted tangent ({:.6e}, {:.6e})",
                    bp.tangent.0, bp.tangent.1
                )));
            }
            status = if saw_nonpositive {
                BranchStatus::PositivityLost
            } else {
                BranchStatus::StepFailure
            };
            break;
        };
        let (a, b, s) = (xi[0], xi[1] * scale_b, xi[2] * scale_s);
        let new_xi = xi;
        let diff = [
            new_xi[0] - cur[0],
            new_xi[1] - cur[1],
            new_xi[2] - cur[2],
        ];
        let n = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            tangent = [diff[0] / n, diff[1] / n, diff[2] / n];
        }
        cur = new_xi;
        points.push(BranchPoint {
            s,
            a,
            b,
            profile,
            quality,
        });
        if s >= s_max {
            status = BranchStatus::ReachedSMax;
            break 'outer;
        }
        // The predictor miss grows like ‖J‖·h², but Newton recovers
        // quadratically, so the iteration count barely depends on h: floor
        // grinding costs most of the budget at any step size. Grow on any
        // comfortable convergence; shrink only when the budget nearly ran
        // out.
        h = if iters <= 10 {
            (2.0 * h_try).min(h_max)
        } else if iters >= 14 {
            (0.5 * h_try).max(1e-12)
        } else {
            h_try
        };
    }
    Ok(Branch {
        origin: bp.clone(),
        points,
        critical_point_count: expected_count,
        status,
    })
}

fn solve3(m: &[[f64; 3]; 3], rhs: [f64; 3]) -> Option<[f64; 3]> {
    let mut a = *m;
    let mut b = rhs;
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()
        })?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut acc = b[row];
        for k in row + 1..3 {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
        if !x[row].is_finite() {
            return None;
        }
    }
    Some(x)
}

/// One branch's contribution to the solution count at a parameter value.
#[derive(Debug, Clone, Serialize)]
pub struct CensusEntry {
    pub branch_index: usize,
    pub critical_points: usize,
    /// Initial data interpolated at the census parameter.
    pub a: f64,
    pub b: f64,
    /// The mirrored profile is a genuinely different solution (antisymmetric
    /// profiles only).
    pub distinct_reflection: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CensusReport {
    pub s: f64,
    pub entries: Vec<CensusEntry>,
    /// Total distinct nontrivial solutions, reflections included.
    pub solutions: usize,
    /// critical-point count → number of distinct solutions with it.
    pub by_critical_points: BTreeMap<usize, usize>,
    /// Number of instants passed below s: the guaranteed solution count.
    pub floor: usize,
    pub meets_floor: bool,
}

/// Count the distinct nontrivial solutions the branches supply at parameter
/// s, grouped by critical-point count. On an antisymmetric profile the
/// mirror of a solution solves the same equation; it is counted as an extra
/// solution when it differs from the original by more than 1e−6.
pub fn census_at(p: &Profile, branches: &[Branch], s: f64) -> CensusReport {
    let mut entries = Vec::new();
    let mut by_critical_points: BTreeMap<usize, usize> = BTreeMap::new();
    let mut solutions = 0;
    for branch in branches {
        let Some(seg) = branch
            .points
            .windows(2)
            .find(|w| (w[0].s - s) * (w[1].s - s) <= 0.0)
        else {
            continue;
        };
        let (p0, p1) = (&seg[0], &seg[1]);
        let w = if (p1.s - p0.s).abs() < 1e-300 {
            0.0
        } else {
            (s - p0.s) / (p1.s - p0.s)
        };
        let a = p0.a + w * (p1.a - p0.a);
        let b = p0.b + w * (p1.b - p0.b);
        let near = if w < 0.5 { p0 } else { p1 };
        let distinct_reflection = p.antisymmetric() && {
            let u = &near.profile.u;
            let m = u.len();
            let dist = (0..m)
                .map(|k| (u[k] - u[m - 1 - k]).abs())
                .fold(0.0_f64, f64::max);
            dist > 1e-6
        };
        let count = branch.critical_point_count;
        let weight = 1 + usize::from(distinct_reflection);
        solutions += weight;
        *by_critical_points.entry(count).or_insert(0) += weight;
        entries.push(CensusEntry {
            branch_index: branch.origin.index,
            critical_points: count,
            a,
            b,
            distinct_reflection,
        });
    }
    let floor = branches
        .iter()
        .filter(|br| br.origin.s < s && branches_cover(br, s))
        .count();
    CensusReport {
        s,
        entries,
        solutions,
        meets_floor: solutions >= floor,
        by_critical_points,
        floor,
    }
}

fn branches_cover(br: &Branch, s: f64) -> bool {
    br.s_range().is_some_and(|(lo, hi)| s >= lo && s <= hi) || br.origin.s < s
}

/// H-weighted cosine between u − 1 and the given eigenmode, with u linearly
/// interpolated onto the spectral grid.
pub fn eigenmode_cosine(spec: &Spectrum, mode: usize, ts: &[f64], u: &[f64]) -> f64 {
    let ef = &spec.eigenfunctions[mode];
    let interp = |t: f64| -> f64 {
        let i = match ts.partition_point(|&x| x <= t) {
            0 => 0,
            p => (p - 1).min(ts.len() - 2),
        };
        let w = (t - ts[i]) / (ts[i + 1] - ts[i]);
        u[i] + w * (u[i + 1] - u[i])
    };
    let (mut dot, mut nu, mut ne) = (0.0, 0.0, 0.0);
    for (k, (&t, &h)) in spec.grid.iter().zip(spec.weights.iter()).enumerate() {
        let w = interp(t) - 1.0;
        dot += w * ef[k] * h;
        nu += w * w * h;
        ne += ef[k] * ef[k] * h;
    }
    if nu == 0.0 || ne == 0.0 {
        return 0.0;
    }
    dot.abs() / (nu.sqrt() * ne.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sturm::spectrum;
    use approx::assert_relative_eq;

    #[test]
    fn phi_matches_hand_evaluations() {
        // (4, 3.84, 5): √(16 + 61.44) = 8.8 exactly.
        assert_relative_eq!(phi(4.0, 3.84, 5.0), -2.4, max_relative = 1e-14);
        assert!(phi(4.0, 1e-12, 5.0).abs() < 1e-11);
        // On the built-in path φ is linear in s.
        for s in [1.0, 7.5, 40.0] {
            let expected = 0.5 * s * (1.0 - 2.6_f64.sqrt());
            assert_relative_eq!(phi(s, 0.2 * s * s, 3.0), expected, max_relative = 1e-13);
        }
    }

    #[test]
    fn builtin_instants_match_the_closed_form() {
        let p = Profile::sphere(3, 1, 0.0).unwrap();
        let spec = spectrum(&p, 5, 2000).unwrap();
        let path = CoefficientPath::linear_quadratic(0.2, 3.0).unwrap();
        let pts = instants(&path, &spec, 4).unwrap();
        assert_eq!(pts.len(), 4);
        // The first eigenvalue is −3 up to discretization, putting s_1 near
        // −6/(1 − √2.6) ≈ 9.7967.
        assert!((pts[0].s - 9.7967).abs() < 2e-3, "s_1 = {}", pts[0].s);
        let root = 2.6_f64.sqrt();
        for bp in &pts {
            let cf = bp.closed_form.unwrap();
            assert!(
                (bp.s - cf).abs() <= 1e-10 * cf,
                "instant {} drifted from its closed form",
                bp.index
            );
            // τ_i = λ_i·√(1 + 4c(q−1)) on this path.
            assert_relative_eq!(bp.tau, bp.lambda * root, max_relative = 1e-6);
            assert!(bp.valid);
            // Kernel direction ∝ (1, λ_i).
            let n = (1.0 + bp.lambda * bp.lambda).sqrt();
            let dot = bp.tangent.0 / n + bp.tangent.1 * bp.lambda / n;
            assert!(dot > 0.999_999, "tangent misaligned: {dot}");
        }
        assert!(pts.windows(2).all(|w| w[0].s < w[1].s));
        assert!((pts[0].tau + 4.8374).abs() < 2e-3);
    }

    #[test]
    fn einstein_path_instants_exist_and_increase() {
        let p = Profile::sphere(3, 1, 0.0).unwrap();
        let spec = spectrum(&p, 4, 1200).unwrap();
        let path = CoefficientPath::einstein_product(3, 3, 2.0, 5.0).unwrap();
        let pts = instants(&path, &spec, 3).unwrap();
        assert_eq!(pts.len(), 3);
        assert!(pts.windows(2).all(|w| w[0].s < w[1].s));
        for bp in &pts {
            assert!(bp.closed_form.is_none());
            assert!((path.phi_at(bp.s).unwrap() - bp.lambda).abs() <= 1e-10);
        }
        // Spot-check the path against the product formulas: at s = 1 the
        // factors balance and (α, β) = (4, 3.84) for this datum.
        let c = path.coeffs(1.0).unwrap();
        assert_relative_eq!(c.alpha, 4.0, max_relative = 1e-12);
        assert_relative_eq!(c.beta, 3.84, max_relative = 1e-12);
    }

    #[test]
    fn tabulated_path_reproduces_its_source() {
        let src = CoefficientPath::linear_quadratic(0.2, 3.0).unwrap();
        let samples: Vec<[f64; 3]> = (0..=120)
            .map(|k| {
                let s = 0.5 + k as f64 * 0.5;
                [s, s, 0.2 * s * s]
            })
            .collect();
        let tab = CoefficientPath::tabulated(&samples, 3.0).unwrap();
        let p = Profile::sphere(3, 1, 0.0).unwrap();
        let spec = spectrum(&p, 3, 1200).unwrap();
        let src_pts = instants(&src, &spec, 2).unwrap();
        let tab_pts = instants(&tab, &spec, 2).unwrap();
        for (a, b) in src_pts.iter().zip(tab_pts.iter()) {
            assert_relative_eq!(a.s, b.s, max_relative = 1e-6);
        }
    }

    #[test]
    fn hypothesis_violations_refuse_the_path() {
        assert!(CoefficientPath::linear_quadratic(0.3, 3.0).is_err());
        // A dip in b breaks monotonicity.
        let mut samples: Vec<[f64; 3]> = (0..130)
            .map(|k| {
                let s = 1.0 + k as f64 * 0.5;
                [s, s, 0.1 * s * s]
            })
            .collect();
        samples[20][2] = samples[17][2];
        let path = CoefficientPath::tabulated(&samples, 3.0).unwrap();
        let p = Profile::sphere(3, 1, 0.0).unwrap();
        let spec = spectrum(&p, 3, 800).unwrap();
        assert!(matches!(
            instants(&path, &spec, 2),
            Err(Error::InvalidPath(_))
        ));
    }

    #[test]
    fn kernel_direction_of_a_singular_matrix() {
        let j = [[1.0, 2.0], [2.0, 4.0]];
        let v = kernel_direction(&j);
        let expected = (2.0 / 5.0_f64.sqrt(), -1.0 / 5.0_f64.sqrt());
        assert_relative_eq!(v.0, expected.0, max_relative = 1e-14);
        assert_relative_eq!(v.1, expected.1, max_relative = 1e-14);
    }

    #[test]
    fn first_branch_leaves_along_the_eigenmode_and_stays_monotone() {
        let p = Profile::sphere(3, 1, 0.0).unwrap();
        let spec = spectrum(&p, 3, 1500).unwrap();
        let path = CoefficientPath::linear_quadratic(0.2, 3.0).unwrap();
        let pts = instants(&path, &spec, 1).unwrap();
        let opts = ContinuationOpts {
            s_max: Some(1.3 * pts[0].s),
            ..Default::default()
        };
        let branch = continue_branch(&path, &p, &pts[0], &opts).unwrap();
        assert_eq!(branch.status, BranchStatus::ReachedSMax);
        assert!(!branch.points.is_empty());
        for bp in &branch.points {
            assert_eq!(bp.profile.critical_point_count, 2);
            assert!(bp.quality.positive);
            assert!(bp.quality.crosses_one);
        }
        let first = &branch.points[0];
        assert!(
            (first.a - 1.0).abs() < 0.1,
            "first point should be near the trivial solution, a = {}",
            first.a
        );
        let cos = eigenmode_cosine(&spec, 1, &first.profile.ts, &first.profile.u);
        assert!(cos > 0.99, "first point misaligned with the mode: {cos}");

        let report = census_at(&p, std::slice::from_ref(&branch), 1.2 * pts[0].s);
        assert_eq!(report.entries.len(), 1);
        assert_eq!(report.floor, 1);
        assert!(report.meets_floor);
        // Branch-1 profiles are monotone, so the mirror is a second solution.
        assert!(report.entries[0].distinct_reflection);
        assert_eq!(report.solutions, 2);
        assert_eq!(report.by_critical_points.get(&2), Some(&2));
    }
}
