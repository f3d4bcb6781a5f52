//! Coefficients (α, β) and Q-curvature of Paneitz-type equations on products
//! of Einstein manifolds, the second-order factorization α = c + d, β = c·d,
//! and the discriminant positivity certificate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single (α, β, q) triple together with its factorization roots.
///
/// The roots satisfy c_factor + d_factor = α and c_factor·d_factor = β with
/// c_factor = (α + √(α²−4β))/2; they exist only when α² ≥ 4β.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PaneitzCoefficients {
    pub alpha: f64,
    pub beta: f64,
    pub q: f64,
    pub c_factor: Option<f64>,
    pub d_factor: Option<f64>,
}

impl PaneitzCoefficients {
    /// Build from raw (α, β, q); the factorization is populated when the
    /// discriminant is nonnegative.
    pub fn new(alpha: f64, beta: f64, q: f64) -> Result<Self> {
        if !(q > 1.0) {
            return Err(Error::InvalidCoefficients(format!("q = {q} must exceed 1")));
        }
        if !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::InvalidCoefficients(format!(
                "non-finite (alpha, beta) = ({alpha}, {beta})"
            )));
        }
        let disc = alpha * alpha - 4.0 * beta;
        let (c_factor, d_factor) = if disc >= 0.0 {
            let r = disc.sqrt();
            ((alpha + r) / 2.0, (alpha - r) / 2.0)
        } else {
            return Ok(Self {
                alpha,
                beta,
                q,
                c_factor: None,
                d_factor: None,
            });
        };
        Ok(Self {
            alpha,
            beta,
            q,
            c_factor: Some(c_factor),
            d_factor: Some(d_factor),
        })
    }

    pub fn discriminant(&self) -> f64 {
        self.alpha * self.alpha - 4.0 * self.beta
    }

    /// u ↦ u^q, extended oddly to u < 0 so the vector field stays defined;
    /// trajectories that go negative are flagged elsewhere.
    pub fn nonlinearity_pow(&self, u: f64) -> f64 {
        if u >= 0.0 {
            u.powf(self.q)
        } else {
            -(-u).powf(self.q)
        }
    }

    /// f(u) = u^q − u.
    pub fn f(&self, u: f64) -> f64 {
        self.nonlinearity_pow(u) - u
    }

    /// f′(u) = q·u^(q−1) − 1 (even extension of the derivative of the odd f).
    pub fn f_prime(&self, u: f64) -> f64 {
        self.q * u.abs().powf(self.q - 1.0) - 1.0
    }
}

/// Product of two Einstein factors (M₀ⁿ, Λ₀) × (M₁ᵐ, Λ₁); N = n + m.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EinsteinProductDatum {
    pub n: u32,
    pub m: u32,
    pub lambda0: f64,
    pub lambda1: f64,
}

impl EinsteinProductDatum {
    pub fn new(n: u32, m: u32, lambda0: f64, lambda1: f64) -> Result<Self> {
        if n < 3 || m < 3 {
            return Err(Error::InvalidCoefficients(format!(
                "factor dimensions (n, m) = ({n}, {m}) must both be at least 3"
            )));
        }
        if !(lambda0 > 0.0) || !(lambda1 > 0.0) {
            return Err(Error::InvalidCoefficients(format!(
                "Einstein constants must be positive, got ({lambda0}, {lambda1})"
            )));
        }
        Ok(Self {
            n,
            m,
            lambda0,
            lambda1,
        })
    }

    pub fn total_dim(&self) -> u32 {
        self.n + self.m
    }

    /// Critical exponent p* = (N+4)/(N−4).
    pub fn critical_exponent(&self) -> f64 {
        let nn = f64::from(self.total_dim());
        (nn + 4.0) / (nn - 4.0)
    }
}

/// Q-curvature of the product metric:
/// Q = −2(N−2)⁻²(nΛ₀² + mΛ₁²) + (N³−4N²+16N−16)/(8(N−1)²(N−2)²)·(nΛ₀+mΛ₁)².
///
/// Terms are grouped exactly as displayed so cancellation stays auditable.
pub fn q_curvature_product(d: &EinsteinProductDatum) -> f64 {
    let nn = f64::from(d.total_dim());
    let n = f64::from(d.n);
    let m = f64::from(d.m);
    let trace = n * d.lambda0 + m * d.lambda1;
    let first = -2.0 / ((nn - 2.0) * (nn - 2.0))
        * (n * d.lambda0 * d.lambda0 + m * d.lambda1 * d.lambda1);
    let second = (nn * nn * nn - 4.0 * nn * nn + 16.0 * nn - 16.0)
        / (8.0 * (nn - 1.0) * (nn - 1.0) * (nn - 2.0) * (nn - 2.0))
        * trace
        * trace;
    first + second
}

/// Coefficients of the reduced constant-coefficient equation on the product:
/// α = (N²−4N+8)/(2(N−1)(N−2))·(nΛ₀+mΛ₁) − 4Λ₀/(N−2), β = (N−4)/2·Q.
///
/// Errors when β comes out nonpositive (the equation leaves the analyzed
/// class); a negative discriminant is not an error — the factorization is
/// simply absent.
pub fn product_coefficients(d: &EinsteinProductDatum, q: f64) -> Result<PaneitzCoefficients> {
    let nn = f64::from(d.total_dim());
    if d.total_dim() < 6 {
        return Err(Error::InvalidCoefficients(format!(
            "total dimension N = {} must be at least 6",
            d.total_dim()
        )));
    }
    let n = f64::from(d.n);
    let m = f64::from(d.m);
    let alpha = (nn * nn - 4.0 * nn + 8.0) / (2.0 * (nn - 1.0) * (nn - 2.0))
        * (n * d.lambda0 + m * d.lambda1)
        - 4.0 * d.lambda0 / (nn - 2.0);
    let beta = (nn - 4.0) / 2.0 * q_curvature_product(d);
    if !(beta > 0.0) {
        return Err(Error::InvalidCoefficients(format!(
            "beta = {beta} is not positive for this datum"
        )));
    }
    PaneitzCoefficients::new(alpha, beta, q)
}

/// The three closed forms for the discriminant of the one-parameter family
/// t ↦ α(Λ₀, t)² − 4β(Λ₀, t) (t the second Einstein constant) at t = Λ₀,
/// plus the positivity flag.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DiscriminantCertificate {
    /// Value at t = Λ₀: Λ₀²(16N²−64N+64)/(4(N−1)²(N−2)²).
    pub h0: f64,
    /// First t-derivative at t = Λ₀: mΛ₀(8N³−40N²+48N)/(2(N−1)²(N−2)²).
    pub h0_prime: f64,
    /// Half the (constant) second t-derivative:
    /// m(16Nm+16(N−4)(N−1)²)/(4(N−1)²(N−2)²).
    pub quad_coeff: f64,
    pub all_positive: bool,
}

/// Closed forms for the discriminant of t ↦ α(Λ₀,t)² − 4β(Λ₀,t) at t = Λ₀.
/// The discriminant is an exact quadratic in t, so these three numbers
/// determine it completely; `all_positive` certifies positivity for all
/// t ≥ Λ₀ > 0.
pub fn appendix_certificate(n: u32, m: u32, lambda0: f64) -> Result<DiscriminantCertificate> {
    if n < 3 || m < 3 {
        return Err(Error::InvalidCoefficients(format!(
            "(n, m) = ({n}, {m}) must both be at least 3"
        )));
    }
    if !(lambda0 > 0.0) {
        return Err(Error::InvalidCoefficients(format!(
            "lambda0 = {lambda0} must be positive"
        )));
    }
    let nn = f64::from(n + m);
    let mf = f64::from(m);
    let denom = (nn - 1.0) * (nn - 1.0) * (nn - 2.0) * (nn - 2.0);
    let h0 = lambda0 * lambda0 * (16.0 * nn * nn - 64.0 * nn + 64.0) / (4.0 * denom);
    let h0_prime =
        mf * lambda0 * (8.0 * nn * nn * nn - 40.0 * nn * nn + 48.0 * nn) / (2.0 * denom);
    let quad_coeff =
        mf * (16.0 * nn * mf + 16.0 * (nn - 4.0) * (nn - 1.0) * (nn - 1.0)) / (4.0 * denom);
    Ok(DiscriminantCertificate {
        h0,
        h0_prime,
        quad_coeff,
        all_positive: h0 > 0.0 && h0_prime > 0.0 && quad_coeff > 0.0,
    })
}

/// Discriminant α² − 4β evaluated directly from the displayed formulas, as a
/// function of the second Einstein constant. β may be nonpositive here — this
/// helper is for certificate cross-checks, not for building coefficients.
pub fn discriminant_direct(n: u32, m: u32, lambda0: f64, lambda1: f64) -> f64 {
    let d = EinsteinProductDatum {
        n,
        m,
        lambda0,
        lambda1,
    };
    let nn = f64::from(d.total_dim());
    let nf = f64::from(n);
    let mf = f64::from(m);
    let alpha = (nn * nn - 4.0 * nn + 8.0) / (2.0 * (nn - 1.0) * (nn - 2.0))
        * (nf * lambda0 + mf * lambda1)
        - 4.0 * lambda0 / (nn - 2.0);
    let beta = (nn - 4.0) / 2.0 * q_curvature_product(&d);
    alpha * alpha - 4.0 * beta
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn s3_x_s3(s: f64) -> EinsteinProductDatum {
        EinsteinProductDatum::new(3, 3, 2.0, 2.0 * s).unwrap()
    }

    #[test]
    fn q_curvature_of_round_product() {
        // Both displayed terms checked independently at Λ0 = Λ1 = 2:
        // −(1/8)·24 + (152/3200)·144 = −3 + 6.84 = 3.84.
        let q = q_curvature_product(&s3_x_s3(1.0));
        assert_relative_eq!(q, 3.84, max_relative = 1e-14);
    }

    #[test]
    fn q_curvature_matches_one_parameter_closed_form() {
        // β = Q at N = 6; closed form −(3/2)(1+s²) + (171/100)(1+s)².
        for s in [1.0, 2.0, 5.0, 0.7, 3.3] {
            let q = q_curvature_product(&s3_x_s3(s));
            let closed = -1.5 * (1.0 + s * s) + 1.71 * (1.0 + s) * (1.0 + s);
            assert_relative_eq!(q, closed, max_relative = 1e-12);
        }
    }

    #[test]
    fn q_curvature_is_quadratic_under_scaling() {
        let d = EinsteinProductDatum::new(4, 5, 1.3, 2.1).unwrap();
        let scaled = EinsteinProductDatum::new(4, 5, 3.0 * 1.3, 3.0 * 2.1).unwrap();
        assert_relative_eq!(
            q_curvature_product(&scaled),
            9.0 * q_curvature_product(&d),
            max_relative = 1e-13
        );
    }

    #[test]
    fn coefficients_of_the_one_parameter_family() {
        // α(s) = 3s + 1, exactly representable for these s.
        for s in [1.0, 2.0, 5.0] {
            let c = product_coefficients(&s3_x_s3(s), 5.0).unwrap();
            assert_eq!(c.alpha, 3.0 * s + 1.0);
        }
        let c = product_coefficients(&s3_x_s3(1.0), 5.0).unwrap();
        assert_relative_eq!(c.beta, 3.84, max_relative = 1e-14);
        assert_relative_eq!(c.discriminant(), 0.64, max_relative = 1e-12);
    }

    #[test]
    fn critical_exponent_at_dimension_six() {
        assert_eq!(s3_x_s3(1.0).critical_exponent(), 5.0);
    }

    #[test]
    fn factorization_round_trip() {
        let c = PaneitzCoefficients::new(4.0, 3.84, 5.0).unwrap();
        let (cf, df) = (c.c_factor.unwrap(), c.d_factor.unwrap());
        assert_relative_eq!(cf + df, c.alpha, max_relative = 1e-12);
        assert_relative_eq!(cf * df, c.beta, max_relative = 1e-12);
        assert!(cf >= df);
    }

    #[test]
    fn negative_discriminant_leaves_factorization_empty() {
        let c = PaneitzCoefficients::new(1.0, 10.0, 3.0).unwrap();
        assert!(c.c_factor.is_none());
        assert!(c.discriminant() < 0.0);
    }

    #[test]
    fn invalid_data_are_rejected() {
        assert!(EinsteinProductDatum::new(2, 3, 1.0, 1.0).is_err());
        assert!(EinsteinProductDatum::new(3, 3, -1.0, 1.0).is_err());
        assert!(PaneitzCoefficients::new(4.0, 3.84, 1.0).is_err());
    }

    #[test]
    fn appendix_values_at_the_reference_datum() {
        // N=6, m=3, Λ0=1: 0.16, 2.16, 2.04.
        let cert = appendix_certificate(3, 3, 1.0).unwrap();
        assert_relative_eq!(cert.h0, 0.16, max_relative = 1e-13);
        assert_relative_eq!(cert.h0_prime, 2.16, max_relative = 1e-13);
        assert_relative_eq!(cert.quad_coeff, 2.04, max_relative = 1e-13);
        assert!(cert.all_positive);
    }

    #[test]
    fn appendix_closed_forms_match_direct_finite_differences() {
        // The discriminant is an exact quadratic in Λ1, so wide central
        // differences are exact up to roundoff.
        for (n, m) in [(3u32, 3u32), (3, 9), (7, 4), (12, 12)] {
            let l0 = 1.3;
            let step = 0.25 * l0;
            let cert = appendix_certificate(n, m, l0).unwrap();
            let g = |t: f64| discriminant_direct(n, m, l0, t);
            let fd0 = g(l0);
            let fd1 = (g(l0 + step) - g(l0 - step)) / (2.0 * step);
            let fd2 = (g(l0 + step) - 2.0 * g(l0) + g(l0 - step)) / (step * step) / 2.0;
            assert_relative_eq!(cert.h0, fd0, max_relative = 1e-10);
            assert_relative_eq!(cert.h0_prime, fd1, max_relative = 1e-10);
            assert_relative_eq!(cert.quad_coeff, fd2, max_relative = 1e-9);
        }
    }

    #[test]
    fn odd_extension_of_the_nonlinearity() {
        let c = PaneitzCoefficients::new(4.0, 3.84, 3.0).unwrap();
        assert_eq!(c.nonlinearity_pow(2.0), 8.0);
        assert_eq!(c.nonlinearity_pow(-2.0), -8.0);
        assert_eq!(c.f(1.0), 0.0);
        assert_relative_eq!(c.f_prime(1.0), 2.0, max_relative = 1e-14);
    }
}
