//! Weighted Sturm–Liouville spectrum of L(v) = v″ + h·v′ on [0, D]. The
//! discretization works on the self-adjoint form (H·v′)′ = λ·H·v: the weight
//! H vanishes at both ends, so the finite-volume fluxes encode the singular
//! Neumann conditions with no boundary rows. Eigenvalues come from
//! Sturm-count bisection on the symmetrically reduced tridiagonal matrix,
//! eigenvectors from shifted inverse iteration.

use crate::coeffs::PaneitzCoefficients;
use crate::error::{Error, Result};
use crate::profile::Profile;

/// Symmetric tridiagonal reduction of the finite-volume pencil A·v = λ·B·v.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub delta: f64,
    /// Cell centers t_i = (i − 1/2)·Δ.
    pub centers: Vec<f64>,
    /// H at the cell centers (the diagonal of B).
    pub weights: Vec<f64>,
    /// H at the cell faces; the first and last are exactly zero.
    pub face_weights: Vec<f64>,
    /// Diagonal of C = B^{−1/2}·A·B^{−1/2}.
    diag: Vec<f64>,
    /// Superdiagonal of C.
    off: Vec<f64>,
}

pub fn assemble_operator(p: &Profile, gridsize: usize) -> Result<DiscreteOperator> {
    if gridsize < 16 {
        return Err(Error::GridTooCoarse(format!(
            "eigenvalue grid needs at least 16 cells, got {gridsize}"
        )));
    }
    let m = gridsize;
    let delta = p.d() / m as f64;
    let centers: Vec<f64> = (0..m).map(|i| (i as f64 + 0.5) * delta).collect();
    let weights: Vec<f64> = centers
        .iter()
        .map(|&t| p.weight(t))
        .collect::<Result<_>>()?;
    let face_weights: Vec<f64> = (0..=m)
        .map(|i| p.weight(i as f64 * delta))
        .collect::<Result<_>>()?;
    let inv_sqrt: Vec<f64> = weights.iter().map(|&w| 1.0 / w.sqrt()).collect();
    let d2 = delta * delta;
    let diag: Vec<f64> = (0..m)
        .map(|i| -(face_weights[i] + face_weights[i + 1]) / d2 * inv_sqrt[i] * inv_sqrt[i])
        .collect();
    let off: Vec<f64> = (0..m - 1)
        .map(|i| face_weights[i + 1] / d2 * inv_sqrt[i] * inv_sqrt[i + 1])
        .collect();
    Ok(DiscreteOperator {
        delta,
        centers,
        weights,
        face_weights,
        diag,
        off,
    })
}

impl DiscreteOperator {
    pub fn size(&self) -> usize {
        self.diag.len()
    }

    /// Number of eigenvalues of C strictly below x (LDLT negative-pivot count).
    fn count_below(&self, x: f64) -> usize {
        let tiny = f64::MIN_POSITIVE;
        let mut count = 0;
        let mut d = self.diag[0] - x;
        if d < 0.0 {
            count += 1;
        }
        for i in 1..self.size() {
            if d.abs() < tiny {
                d = if d < 0.0 { -tiny } else { tiny };
            }
            d = (self.diag[i] - x) - self.off[i - 1] * self.off[i - 1] / d;
            if d < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin(&self) -> (f64, f64) {
        let m = self.size();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..m {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 }
                + if i < m - 1 { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// The k-th eigenvalue counted downward from the largest (k = 0 is the
    /// top of the spectrum).
    pub fn eigenvalue_from_top(&self, k: usize) -> f64 {
        let m = self.size();
        debug_assert!(k < m);
        // λ has exactly m−1−k eigenvalues strictly below it.
        let want = m - 1 - k;
        let (mut lo, mut hi) = self.gershgorin();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.count_below(mid) <= want {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-14 * (1.0 + lo.abs().max(hi.abs())) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// Solve (C − σ)·x = rhs by Gaussian elimination with partial pivoting.
    fn solve_shifted(&self, sigma: f64, rhs: &[f64]) -> Vec<f64> {
        let n = self.size();
        let mut d: Vec<f64> = self.diag.iter().map(|&v| v - sigma).collect();
        let mut up: Vec<f64> = self.off.clone();
        up.push(0.0);
        let mut fill = vec![0.0; n];
        let mut x = rhs.to_vec();
        for i in 0..n - 1 {
            let sub = self.off[i];
            if sub.abs() > d[i].abs() {
                // Swap rows i and i+1, then eliminate.
                let ratio = d[i] / sub;
                let (d_next, up_next) = (d[i + 1], up[i + 1]);
                d[i] = sub;
                let old_up = up[i];
                up[i] = d_next;
                fill[i] = up_next;
                d[i + 1] = old_up - ratio * d_next;
                up[i + 1] = -ratio * up_next;
                x.swap(i, i + 1);
                let xi = x[i];
                x[i + 1] -= ratio * xi;
            } else {
                let pivot = if d[i] != 0.0 { d[i] } else { f64::MIN_POSITIVE };
                let ratio = sub / pivot;
                d[i + 1] -= ratio * up[i];
                let xi = x[i];
                x[i + 1] -= ratio * xi;
            }
        }
        if d[n - 1] == 0.0 {
            d[n - 1] = f64::MIN_POSITIVE;
        }
        x[n - 1] /= d[n - 1];
        for i in (0..n - 1).rev() {
            let mut v = x[i] - up[i] * x[i + 1];
            if i + 2 < n {
                v -= fill[i] * x[i + 2];
            }
            x[i] = v / d[i];
        }
        x
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.size();
        (0..n)
            .map(|i| {
                let mut v = self.diag[i] * x[i];
                if i > 0 {
                    v += self.off[i - 1] * x[i - 1];
                }
                if i < n - 1 {
                    v += self.off[i] * x[i + 1];
                }
                v
            })
            .collect()
    }

    /// Eigenvector of C for the (well-separated) eigenvalue `lambda`,
    /// seeded with the Neumann cosine mode of the same index.
    fn eigenvector(&self, lambda: f64, mode: usize) -> Result<Vec<f64>> {
        let n = self.size();
        let scale = self
            .diag
            .iter()
            .fold(0.0f64, |m, &v| m.max(v.abs()));
        let sigma = lambda + 1e-12 * scale.max(1.0);
        let mut w: Vec<f64> = (0..n)
            .map(|l| (mode as f64 * std::f64::consts::PI * (l as f64 + 0.5) / n as f64).cos())
            .collect();
        for _ in 0..4 {
            let mut next = self.solve_shifted(sigma, &w);
            let norm = next.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !norm.is_finite() || norm == 0.0 {
                return Err(Error::Eigensolver(format!(
                    "inverse iteration broke down at eigenvalue {lambda}"
                )));
            }
            next.iter_mut().for_each(|v| *v /= norm);
            w = next;
        }
        let res: f64 = self
            .apply(&w)
            .iter()
            .zip(&w)
            .map(|(cw, wi)| (cw - lambda * wi).powi(2))
            .sum::<f64>()
            .sqrt();
        if res > 1e-7 * scale.max(1.0) {
            return Err(Error::Eigensolver(format!(
                "inverse iteration residual {res:.3e} too large at eigenvalue {lambda}"
            )));
        }
        Ok(w)
    }
}

/// Eigen-ladder of the weighted operator on one mesh, with a coarse companion
/// mesh for Richardson extrapolation.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Cell centers of the fine mesh.
    pub grid: Vec<f64>,
    /// H at the grid nodes.
    pub weights: Vec<f64>,
    pub delta: f64,
    /// λ_0 = 0 > λ_1 > λ_2 > … on the fine mesh (λ_0 clamped to exact zero).
    pub eigenvalues: Vec<f64>,
    /// Two-mesh Richardson extrapolation (4λ_h − λ_{2h})/3.
    pub eigenvalues_extrapolated: Vec<f64>,
    /// φ_i at the grid nodes, ∫φ_i²·H = 1, φ_i(0) > 0.
    pub eigenfunctions: Vec<Vec<f64>>,
    pub interior_zero_counts: Vec<usize>,
}

/// Dead-band for zero counting, relative to max |φ|.
const ZERO_DEADBAND: f64 = 1e-10;

fn count_sign_changes(phi: &[f64]) -> usize {
    let peak = phi.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let band = ZERO_DEADBAND * peak;
    let mut count = 0;
    let mut last = 0.0f64;
    for &v in phi {
        if v.abs() <= band {
            continue;
        }
        if last != 0.0 && v.signum() != last.signum() {
            count += 1;
        }
        last = v;
    }
    count
}

pub fn spectrum(p: &Profile, count: usize, gridsize: usize) -> Result<Spectrum> {
    if count < 1 {
        return Err(Error::InvalidConfig("eigenvalue count must be ≥ 1".into()));
    }
    let m = gridsize + gridsize % 2;
    if count > m / 10 {
        return Err(Error::InvalidConfig(format!(
            "count {count} not resolvable on a {m}-cell mesh (need count ≤ cells/10)"
        )));
    }
    let fine = assemble_operator(p, m)?;
    let coarse = assemble_operator(p, m / 2)?;

    let mut eigenvalues = Vec::with_capacity(count + 1);
    let mut extrapolated = Vec::with_capacity(count + 1);
    let mut eigenfunctions = Vec::with_capacity(count + 1);
    let mut zero_counts = Vec::with_capacity(count + 1);
    for i in 0..=count {
        let lam = fine.eigenvalue_from_top(i);
        let lam_coarse = coarse.eigenvalue_from_top(i);
        let w = fine.eigenvector(lam, i)?;
        // Undo the symmetric reduction: φ = w/√H, then normalize against the
        // discrete weighted measure and fix the sign near t = 0.
        let mut phi: Vec<f64> = w
            .iter()
            .zip(&fine.weights)
            .map(|(&wi, &hi)| wi / hi.sqrt())
            .collect();
        let ssq: f64 = phi
            .iter()
            .zip(&fine.weights)
            .map(|(&v, &h)| v * v * h)
            .sum::<f64>()
            * fine.delta;
        let mut scale = 1.0 / ssq.sqrt();
        if phi[0] * scale < 0.0 {
            scale = -scale;
        }
        phi.iter_mut().for_each(|v| *v *= scale);

        let (lam, lam_rich) = if i == 0 {
            // Row sums of the flux matrix vanish, so zero is exact; keep the
            // raw smallness as a sanity guard and clamp.
            if lam.abs() > 1e-6 {
                return Err(Error::Eigensolver(format!(
                    "top eigenvalue {lam:.3e} is not numerically zero"
                )));
            }
            (0.0, 0.0)
        } else {
            (lam, (4.0 * lam - lam_coarse) / 3.0)
        };
        eigenvalues.push(lam);
        extrapolated.push(lam_rich);
        zero_counts.push(count_sign_changes(&phi));
        eigenfunctions.push(phi);
    }
    for w in eigenvalues.windows(2) {
        if w[1] >= w[0] {
            return Err(Error::Eigensolver(format!(
                "eigenvalues out of order: {} then {}",
                w[0], w[1]
            )));
        }
    }
    Ok(Spectrum {
        grid: fine.centers,
        weights: fine.weights,
        delta: fine.delta,
        eigenvalues,
        eigenvalues_extrapolated: extrapolated,
        eigenfunctions,
        interior_zero_counts: zero_counts,
    })
}

/// Eigenvalue of L² − α·L on the i-th mode: λ_i² − α·λ_i.
pub fn fourth_order_eigenvalue(s: &Spectrum, i: usize, coeffs: &PaneitzCoefficients) -> f64 {
    let lam = s.eigenvalues[i];
    lam * lam - coeffs.alpha * lam
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn s3k1() -> Profile {
        Profile::sphere(3, 1, 0.0).unwrap()
    }

    #[test]
    fn s3_k1_ladder_matches_spherical_harmonics() {
        let s = spectrum(&s3k1(), 3, 2000).unwrap();
        assert_eq!(s.eigenvalues[0], 0.0);
        for (i, want) in [(1usize, -3.0), (2, -8.0), (3, -15.0)] {
            assert_relative_eq!(s.eigenvalues[i], want, max_relative = 1e-4);
        }
        assert_eq!(s.interior_zero_counts, vec![0, 1, 2, 3]);
    }

    #[test]
    fn s3_k2_ladder_matches_the_even_modes() {
        let p = Profile::sphere(3, 2, 0.0).unwrap();
        let s = spectrum(&p, 2, 1500).unwrap();
        assert_relative_eq!(s.eigenvalues[1], -8.0, max_relative = 1e-3);
        assert_relative_eq!(s.eigenvalues[2], -24.0, max_relative = 1e-3);
    }

    #[test]
    fn mesh_halving_shrinks_eigenvalue_error_fourfold() {
        let p = s3k1();
        let lam_fine = assemble_operator(&p, 1000).unwrap().eigenvalue_from_top(1);
        let lam_coarse = assemble_operator(&p, 500).unwrap().eigenvalue_from_top(1);
        let ratio = (lam_coarse + 3.0).abs() / (lam_fine + 3.0).abs();
        assert!(
            (3.0..5.5).contains(&ratio),
            "second-order convergence ratio was {ratio}"
        );
    }

    #[test]
    fn richardson_extrapolation_beats_the_raw_values() {
        let s = spectrum(&s3k1(), 2, 1000).unwrap();
        for i in 1..=2 {
            let exact = -((i * (i + 2)) as f64);
            let raw = (s.eigenvalues[i] - exact).abs();
            let rich = (s.eigenvalues_extrapolated[i] - exact).abs();
            assert!(
                rich < 0.1 * raw,
                "mode {i}: raw error {raw:.3e}, extrapolated {rich:.3e}"
            );
        }
    }

    #[test]
    fn eigenfunctions_are_weighted_orthonormal() {
        let s = spectrum(&s3k1(), 3, 1200).unwrap();
        for i in 0..=3 {
            for j in i..=3 {
                let dot: f64 = s.eigenfunctions[i]
                    .iter()
                    .zip(&s.eigenfunctions[j])
                    .zip(&s.weights)
                    .map(|((&a, &b), &h)| a * b * h)
                    .sum::<f64>()
                    * s.delta;
                let want = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (dot - want).abs() < 1e-8,
                    "<φ_{i}, φ_{j}>_H = {dot}"
                );
            }
        }
    }

    #[test]
    fn rayleigh_quotients_are_consistent() {
        let p = s3k1();
        let op = assemble_operator(&p, 1200).unwrap();
        let s = spectrum(&p, 2, 1200).unwrap();
        for i in 1..=2 {
            // Push φ back through the reduction and apply the pencil weakly.
            let w: Vec<f64> = s.eigenfunctions[i]
                .iter()
                .zip(&op.weights)
                .map(|(&v, &h)| v * h.sqrt())
                .collect();
            let cw = op.apply(&w);
            let num: f64 = cw.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() * op.delta;
            let den: f64 = w.iter().map(|v| v * v).sum::<f64>() * op.delta;
            assert!(
                (num - s.eigenvalues[i] * den).abs() <= 1e-8,
                "mode {i}: weak residual {}",
                (num - s.eigenvalues[i] * den).abs()
            );
        }
    }

    #[test]
    fn first_eigenfunction_sign_and_shape() {
        let s = spectrum(&s3k1(), 1, 1000).unwrap();
        let phi = &s.eigenfunctions[1];
        assert!(phi[0] > 0.0);
        // cos t up to normalization: decreasing through one sign change.
        assert!(phi.last().unwrap() < &0.0);
        assert_eq!(s.interior_zero_counts[1], 1);
    }

    #[test]
    fn asymmetric_profile_has_a_clean_ladder_too() {
        let p = Profile::sphere(4, 2, 1.0).unwrap();
        let s = spectrum(&p, 3, 1200).unwrap();
        assert_eq!(s.eigenvalues[0], 0.0);
        for w in s.eigenvalues.windows(2) {
            assert!(w[1] < w[0]);
        }
        assert_eq!(s.interior_zero_counts, vec![0, 1, 2, 3]);
    }

    #[test]
    fn fourth_order_eigenvalues_follow_the_quadratic() {
        let c = PaneitzCoefficients::new(4.0, 3.84, 5.0).unwrap();
        let s = spectrum(&s3k1(), 2, 1500).unwrap();
        assert_eq!(fourth_order_eigenvalue(&s, 0, &c), 0.0);
        assert_relative_eq!(fourth_order_eigenvalue(&s, 1, &c), 21.0, max_relative = 1e-3);
        assert_relative_eq!(fourth_order_eigenvalue(&s, 2, &c), 96.0, max_relative = 1e-3);
    }

    #[test]
    fn guards_reject_unusable_requests() {
        let p = s3k1();
        assert!(assemble_operator(&p, 8).is_err());
        assert!(spectrum(&p, 30, 200).is_err());
        assert!(spectrum(&p, 0, 200).is_err());
    }
}
