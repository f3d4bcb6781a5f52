//! First-order flow of the reduced fourth-order equation:
//!
//!   v0' = v1,  v1' = v2 − h·v1,  v2' = v3 + α·v1,  v3' = β(v0^q − v0) − h·v3,
//!
//! where v0 = u, v1 = u′, v2 = u″ + h·u′. The profile h is singular at both
//! interval ends, so trajectories start from a fourth-order series expansion a
//! small offset inside and certificates/event monitors watch the integration.

use serde::Serialize;

use crate::coeffs::PaneitzCoefficients;
use crate::dopri5::{DenseStep, Dopri5Opts, Integrator, V4};
use crate::error::{Error, Result};
use crate::profile::{Endpoint, EndpointSeries, Profile};

/// Phase point of the first-order system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    pub t: f64,
    pub v: V4,
}

impl State {
    pub fn new(t: f64, v: V4) -> Self {
        Self { t, v }
    }

    pub fn v0(&self) -> f64 {
        self.v[0]
    }

    pub fn v1(&self) -> f64 {
        self.v[1]
    }

    pub fn v2(&self) -> f64 {
        self.v[2]
    }

    pub fn v3(&self) -> f64 {
        self.v[3]
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.v.iter().all(|x| x.is_finite())
    }
}

/// Sign cones that no global nonnegative solution can enter: once the listed
/// strict inequalities hold at an interior time, the far-end boundary
/// conditions are unreachable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Cone {
    /// v0 < 1 with v1, v2, v3 all negative.
    Negative,
    /// v0 > 1 with v1, v2, v3 all positive.
    Positive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Certificate {
    pub cone: Cone,
    pub t: f64,
}

fn cone_of(v: &V4) -> Option<Cone> {
    if v[0] < 1.0 && v[1] < 0.0 && v[2] < 0.0 && v[3] < 0.0 {
        Some(Cone::Negative)
    } else if v[0] > 1.0 && v[1] > 0.0 && v[2] > 0.0 && v[3] > 0.0 {
        Some(Cone::Positive)
    } else {
        None
    }
}

/// The cone lemmas assume α ≥ 0 and β > 0; outside that regime a fired cone
/// proves nothing and the monitors stay silent.
fn cones_applicable(coeffs: &PaneitzCoefficients) -> bool {
    coeffs.alpha >= 0.0 && coeffs.beta > 0.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ReachedEnd,
    CertificateFired(Certificate),
    BlowUp { t: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct IntegrateOpts {
    pub rtol: f64,
    pub atol: f64,
    /// Stop as soon as a sign-cone certificate fires.
    pub certificates: bool,
    /// Record refined zero-crossing times of v1 (critical points of u).
    pub v1_events: bool,
    pub blow_up: f64,
    pub max_steps: usize,
}

impl Default for IntegrateOpts {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            certificates: true,
            v1_events: true,
            blow_up: 1e8,
            max_steps: 1_000_000,
        }
    }
}

/// Accepted steps with dense output, plus how the run ended.
#[derive(Debug, Clone)]
pub struct Trajectory {
    start: State,
    steps: Vec<DenseStep>,
    pub termination: Termination,
    /// Interior zeros of v1 in increasing order, refined on the dense output.
    pub v1_zeros: Vec<f64>,
}

impl Trajectory {
    pub fn t_start(&self) -> f64 {
        self.start.t
    }

    pub fn t_last(&self) -> f64 {
        self.steps.last().map_or(self.start.t, |s| s.t1())
    }

    pub fn final_state(&self) -> State {
        self.steps
            .last()
            .map_or(self.start, |s| State::new(s.t1(), s.y1))
    }

    pub fn steps(&self) -> &[DenseStep] {
        &self.steps
    }

    /// Dense-output evaluation; `t` is clamped into the covered range.
    pub fn state_at(&self, t: f64) -> V4 {
        if self.steps.is_empty() {
            return self.start.v;
        }
        let t = t.clamp(self.t_start(), self.t_last());
        let idx = self.steps.partition_point(|s| s.t1() < t);
        self.steps[idx.min(self.steps.len() - 1)].eval(t)
    }
}

/// Taylor data at a singular endpoint of the admissible solution with
/// v0 = a, v2 = b there (v1 and v3 vanish at the endpoint). In the inward
/// coordinate τ:
///
///   v0 = a + a2·τ² + a3·τ³ + a4·τ⁴,   v1 = v0′,
///   v2 = b + b2·τ² + b3·τ³ + b4·τ⁴,   v3 = c1·τ + c2·τ² + c3·τ³,
///
/// obtained by matching powers of τ against h(τ) = j/τ + η0 + η1·τ. The odd
/// v0/v2 coefficients vanish when η0 = 0 (parity-symmetric profiles).
#[derive(Debug, Clone, Copy)]
pub struct SeriesCoeffs {
    pub a: f64,
    pub b: f64,
    a2: f64,
    a3: f64,
    a4: f64,
    b2: f64,
    b3: f64,
    b4: f64,
    c1: f64,
    c2: f64,
    c3: f64,
}

impl SeriesCoeffs {
    pub fn new(es: &EndpointSeries, coeffs: &PaneitzCoefficients, a: f64, b: f64) -> Self {
        let (j, eta0, eta1) = (es.j, es.eta0, es.eta1);
        let (alpha, beta) = (coeffs.alpha, coeffs.beta);
        let a2 = b / (2.0 * (1.0 + j));
        let c1 = beta * coeffs.f(a) / (1.0 + j);
        let b2 = (c1 + 2.0 * alpha * a2) / 2.0;
        let a3 = -2.0 * a2 * eta0 / (3.0 * (2.0 + j));
        let c2 = -c1 * eta0 / (2.0 + j);
        let b3 = c2 / 3.0 + alpha * a3;
        let c3 = (beta * coeffs.f_prime(a) * a2 - c2 * eta0 - c1 * eta1) / (3.0 + j);
        let a4 = (b2 - 3.0 * a3 * eta0 - 2.0 * a2 * eta1) / (4.0 * (3.0 + j));
        let b4 = (c3 + 4.0 * alpha * a4) / 4.0;
        Self {
            a,
            b,
            a2,
            a3,
            a4,
            b2,
            b3,
            b4,
            c1,
            c2,
            c3,
        }
    }

    pub fn eval(&self, eps: f64) -> V4 {
        let e2 = eps * eps;
        let e3 = e2 * eps;
        let e4 = e3 * eps;
        [
            self.a + self.a2 * e2 + self.a3 * e3 + self.a4 * e4,
            2.0 * self.a2 * eps + 3.0 * self.a3 * e2 + 4.0 * self.a4 * e3,
            self.b + self.b2 * e2 + self.b3 * e3 + self.b4 * e4,
            self.c1 * eps + self.c2 * e2 + self.c3 * e3,
        ]
    }

    /// v0″ of the expansion (the plain second derivative, not v2).
    pub fn u_second(&self, eps: f64) -> f64 {
        2.0 * self.a2 + 6.0 * self.a3 * eps + 12.0 * self.a4 * eps * eps
    }

    /// v0 − a at offset eps; used to invert the series for (a, b).
    pub fn v0_correction(&self, eps: f64) -> f64 {
        let e2 = eps * eps;
        self.a2 * e2 + self.a3 * e2 * eps + self.a4 * e2 * e2
    }

    /// v2 − b at offset eps.
    pub fn v2_correction(&self, eps: f64) -> f64 {
        let e2 = eps * eps;
        self.b2 * e2 + self.b3 * e2 * eps + self.b4 * e2 * e2
    }
}

/// State at t = eps of the solution through the left endpoint with
/// v0(0) = a, v2(0) = b, v1(0) = v3(0) = 0. Truncation error O(eps⁴)
/// or better per component.
pub fn series_start(
    coeffs: &PaneitzCoefficients,
    p: &Profile,
    a: f64,
    b: f64,
    eps: f64,
) -> Result<State> {
    if !(eps > 0.0 && eps <= p.d() / 10.0) {
        return Err(Error::OutOfRange(format!(
            "series offset eps = {eps} outside (0, D/10]"
        )));
    }
    let es = p.endpoint_series(Endpoint::Zero);
    let sc = SeriesCoeffs::new(&es, coeffs, a, b);
    Ok(State::new(eps, sc.eval(eps)))
}

/// Adaptive integration of the system from `start` to `t_end` with optional
/// certificate and v1-zero monitors. Blow-up past `opts.blow_up` terminates
/// with a recorded reason rather than an error; a step failure with the state
/// already large (≥ 1% of the bound) is classified as blow-up too, since the
/// shrinking steps are then driven by the superlinear growth itself.
pub fn integrate(
    coeffs: &PaneitzCoefficients,
    p: &Profile,
    start: State,
    t_end: f64,
    opts: &IntegrateOpts,
) -> Result<Trajectory> {
    if !start.is_finite() {
        return Err(Error::OutOfRange("non-finite start state".into()));
    }
    if !(start.t > 0.0 && start.t < t_end && t_end < p.d()) {
        return Err(Error::OutOfRange(format!(
            "need 0 < start.t < t_end < D, got start.t = {}, t_end = {}, D = {}",
            start.t,
            t_end,
            p.d()
        )));
    }
    let watch_cones = opts.certificates && cones_applicable(coeffs);
    let mut traj = Trajectory {
        start,
        steps: Vec::new(),
        termination: Termination::ReachedEnd,
        v1_zeros: Vec::new(),
    };
    if let Some(cone) = cone_of(&start.v).filter(|_| watch_cones) {
        traj.termination = Termination::CertificateFired(Certificate { cone, t: start.t });
        return Ok(traj);
    }

    let field = move |t: f64, y: &V4| -> V4 {
        let h = p.h(t);
        [
            y[1],
            y[2] - h * y[1],
            y[3] + coeffs.alpha * y[1],
            coeffs.beta * (coeffs.nonlinearity_pow(y[0]) - y[0]) - h * y[3],
        ]
    };
    let dopts = Dopri5Opts {
        rtol: opts.rtol,
        atol: opts.atol,
        h_init: None,
        max_steps: opts.max_steps,
    };
    let mut integ = Integrator::new(&field, start.t, start.v, dopts);

    loop {
        let step = match integ.step(t_end) {
            Ok(s) => s,
            Err(Error::Integration { t, .. }) => {
                let scale = integ.y.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                if scale >= opts.blow_up / 100.0 {
                    traj.termination = Termination::BlowUp { t };
                    return Ok(traj);
                }
                return Err(Error::Integration {
                    t,
                    reason: "step failure away from blow-up".into(),
                });
            }
            Err(e) => return Err(e),
        };
        if opts.v1_events && step.y0[1] * step.y1[1] < 0.0 {
            traj.v1_zeros.push(refine_zero(&step, 1));
        }
        let y1 = step.y1;
        let t1 = step.t1();
        traj.steps.push(step);
        if y1.iter().any(|x| x.abs() > opts.blow_up) {
            traj.termination = Termination::BlowUp { t: t1 };
            return Ok(traj);
        }
        if watch_cones {
            if let Some(cone) = cone_of(&y1) {
                traj.termination = Termination::CertificateFired(Certificate { cone, t: t1 });
                return Ok(traj);
            }
        }
        if integ.t >= t_end {
            traj.termination = Termination::ReachedEnd;
            return Ok(traj);
        }
    }
}

/// Bisect a sign change of component `comp` inside one dense step.
fn refine_zero(step: &DenseStep, comp: usize) -> f64 {
    let (mut lo, mut hi) = (step.t0, step.t1());
    let mut flo = step.y0[comp];
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let fmid = step.eval(mid)[comp];
        if flo * fmid <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fmid;
        }
        if hi - lo < 1e-14 * step.h.abs().max(1e-300) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Post-hoc scan of a stored trajectory for a cone entry, independent of
/// whether the live monitors were enabled.
pub fn certificate_nonglobal(
    traj: &Trajectory,
    coeffs: &PaneitzCoefficients,
) -> Option<Certificate> {
    if !cones_applicable(coeffs) {
        return None;
    }
    if let Some(cone) = cone_of(&traj.start.v) {
        return Some(Certificate {
            cone,
            t: traj.start.t,
        });
    }
    for step in &traj.steps {
        if let Some(cone) = cone_of(&step.y1) {
            return Some(Certificate { cone, t: step.t1() });
        }
    }
    None
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CriticalPoint {
    pub t: f64,
    pub u: f64,
    pub u_second: f64,
}

/// A candidate solution assembled on a uniform grid over the whole closed
/// interval, endpoints included.
#[derive(Debug, Clone)]
pub struct SolutionProfile {
    pub ts: Vec<f64>,
    pub u: Vec<f64>,
    pub du: Vec<f64>,
    pub ddu: Vec<f64>,
    pub residual_norm: f64,
    /// Ordered, endpoints included.
    pub critical_points: Vec<CriticalPoint>,
    pub critical_point_count: usize,
    pub min_value: f64,
    /// min |u″| over critical points relative to max |u″| on the grid.
    pub nondegeneracy_margin: f64,
    pub degenerate: bool,
    /// Admissible data at the two endpoints: (u, v2) at 0 and at D.
    pub near_data: (f64, f64),
    pub far_data: (f64, f64),
}

/// Relative nondegeneracy floor below which a critical point is flagged.
pub const NONDEGENERACY_FLOOR: f64 = 1e-6;

/// Relative u′ excursion below which a recorded sign change is attributed to
/// matching noise rather than an extremum. True u′ vanishes linearly at the
/// far end while the accumulated integration error does not, so inside a thin
/// terminal layer the sign of u′ is not determined at solver tolerance and
/// raw crossing events there flip with ulp-level input changes. Genuine
/// extrema separate crossings by O(1) relative excursions at every amplitude
/// (both scale with the mode size near onset), three orders above the layer
/// noise, so the floor has wide margins on both sides.
pub const V1_PROMINENCE_FLOOR: f64 = 1e-3;

/// Drop v1 crossings bounding segments whose |v1| excursion never reaches
/// `V1_PROMINENCE_FLOOR` of the global maximum. A weak interior segment is a
/// noise blip: it goes together with both bounding crossings. A weak terminal
/// segment sheds its single inner crossing. Repeats until every segment is
/// prominent; the segment carrying the global maximum always survives, so
/// this terminates with a sign-consistent crossing list.
fn pruned_v1_zeros(traj: &Trajectory) -> Vec<f64> {
    let mut zs = traj.v1_zeros.clone();
    let seg_max = |lo: f64, hi: f64| -> f64 {
        (0..=16).fold(0.0f64, |m, i| {
            let t = lo + (hi - lo) * i as f64 / 16.0;
            m.max(traj.state_at(t)[1].abs())
        })
    };
    while !zs.is_empty() {
        let mut bounds = Vec::with_capacity(zs.len() + 2);
        bounds.push(traj.t_start());
        bounds.extend_from_slice(&zs);
        bounds.push(traj.t_last());
        let maxima: Vec<f64> = bounds.windows(2).map(|w| seg_max(w[0], w[1])).collect();
        let global = maxima.iter().fold(0.0f64, |m, &v| m.max(v));
        let weak = (0..maxima.len())
            .filter(|&k| maxima[k] < V1_PROMINENCE_FLOOR * global)
            .min_by(|&i, &j| maxima[i].total_cmp(&maxima[j]));
        let Some(k) = weak else { break };
        if k == 0 {
            zs.remove(0);
        } else if k == maxima.len() - 1 {
            zs.pop();
        } else {
            // zeros k-1 and k bound interior segment k
            zs.drain(k - 1..=k);
        }
    }
    zs
}

/// Sample a trajectory (plus its two endpoint series) onto a uniform grid and
/// attach the derived solution data. `grid` counts nodes and is bumped to odd
/// so the quadratures downstream can use composite Simpson.
pub fn assemble_solution(
    coeffs: &PaneitzCoefficients,
    p: &Profile,
    traj: &Trajectory,
    near: (f64, f64),
    far: (f64, f64),
    grid: usize,
) -> Result<SolutionProfile> {
    if grid < 401 {
        return Err(Error::GridTooCoarse(format!(
            "solution grid needs at least 401 nodes, got {grid}"
        )));
    }
    let n = if grid % 2 == 0 { grid + 1 } else { grid };
    let d = p.d();
    let dt = d / (n - 1) as f64;
    let sc_near = SeriesCoeffs::new(&p.endpoint_series(Endpoint::Zero), coeffs, near.0, near.1);
    let sc_far = SeriesCoeffs::new(&p.endpoint_series(Endpoint::D), coeffs, far.0, far.1);
    let (t_lo, t_hi) = (traj.t_start(), traj.t_last());

    let mut ts = Vec::with_capacity(n);
    let mut u = Vec::with_capacity(n);
    let mut du = Vec::with_capacity(n);
    let mut ddu = Vec::with_capacity(n);
    for i in 0..n {
        let t = if i == n - 1 { d } else { i as f64 * dt };
        let (ui, dui, ddui) = if t < t_lo {
            let v = sc_near.eval(t);
            (v[0], v[1], sc_near.u_second(t))
        } else if t > t_hi {
            // Mirrored expansion: u(t) = w0(τ), u′(t) = −w1(τ), u″(t) = w0″(τ).
            let tau = d - t;
            let v = sc_far.eval(tau);
            (v[0], -v[1], sc_far.u_second(tau))
        } else {
            let v = traj.state_at(t);
            (v[0], v[1], v[2] - p.h(t) * v[1])
        };
        ts.push(t);
        u.push(ui);
        du.push(dui);
        ddu.push(ddui);
    }

    let mut critical_points = vec![CriticalPoint {
        t: 0.0,
        u: near.0,
        u_second: near.1 / (1.0 + f64::from(p.j0())),
    }];
    for &tz in &pruned_v1_zeros(traj) {
        let v = traj.state_at(tz);
        critical_points.push(CriticalPoint {
            t: tz,
            u: v[0],
            // v1 vanishes here, so u″ equals v2.
            u_second: v[2],
        });
    }
    critical_points.push(CriticalPoint {
        t: d,
        u: far.0,
        u_second: far.1 / (1.0 + f64::from(p.j1())),
    });

    let max_ddu = ddu.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let (margin, degenerate) = if max_ddu < 1e-12 {
        (0.0, true)
    } else {
        let min_crit = critical_points
            .iter()
            .fold(f64::INFINITY, |m, c| m.min(c.u_second.abs()));
        let margin = min_crit / max_ddu;
        (margin, margin < NONDEGENERACY_FLOOR)
    };

    let mut sol = SolutionProfile {
        ts,
        u,
        du,
        ddu,
        residual_norm: 0.0,
        critical_point_count: critical_points.len(),
        critical_points,
        min_value: f64::INFINITY,
        nondegeneracy_margin: margin,
        degenerate,
        near_data: near,
        far_data: far,
    };
    sol.min_value = sol.u.iter().fold(f64::INFINITY, |m, &x| m.min(x));
    sol.residual_norm = residual(coeffs, p, &sol)?;
    Ok(sol)
}

fn check_uniform(ts: &[f64]) -> Result<f64> {
    let n = ts.len();
    if n < 202 {
        return Err(Error::GridTooCoarse(format!(
            "residual evaluation needs at least 200 interior nodes, got {}",
            n.saturating_sub(2)
        )));
    }
    let dt = ts[1] - ts[0];
    let uniform = ts
        .windows(2)
        .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt.abs());
    if !uniform {
        return Err(Error::GridTooCoarse("grid must be uniform".into()));
    }
    Ok(dt)
}

/// Max-norm residual of the scalar fourth-order equation
///
///   u⁗ + 2h·u‴ + (2h′ + h² − α)·u″ + (h″ + h·h′ − α·h)·u′ + β(u − u^q) = 0
///
/// on interior nodes via centered fourth-order stencils, decimated to a
/// spacing near D/200 so the stencils run above the roundoff floor. Inside a
/// 5%-of-D collar at each end the same equation is checked in system form:
/// v3′ + h·v3 = β(u^q − u) with v3 = (u″ + h·u′)′ − α·u′, which avoids
/// multiplying the large h-derivatives near the singular ends.
pub fn residual(coeffs: &PaneitzCoefficients, p: &Profile, sol: &SolutionProfile) -> Result<f64> {
    let dt = check_uniform(&sol.ts)?;
    let d = p.d();
    let stride = ((d / 200.0) / dt).round().max(1.0) as usize;
    let idx: Vec<usize> = (0..sol.ts.len()).step_by(stride).collect();
    let m = idx.len();
    let hh = stride as f64 * dt;
    let tt: Vec<f64> = idx.iter().map(|&i| sol.ts[i]).collect();
    let uu: Vec<f64> = idx.iter().map(|&i| sol.u[i]).collect();
    let dd: Vec<f64> = idx.iter().map(|&i| sol.du[i]).collect();
    let cc: Vec<f64> = idx.iter().map(|&i| sol.ddu[i]).collect();
    let collar = 0.05 * d;

    let mut worst = 0.0f64;
    // Interior: direct fourth-order stencils on u alone.
    for i in 3..m.saturating_sub(3) {
        let t = tt[i];
        if t < collar || t > d - collar {
            continue;
        }
        let u4 = (-uu[i - 3] + 12.0 * uu[i - 2] - 39.0 * uu[i - 1] + 56.0 * uu[i]
            - 39.0 * uu[i + 1]
            + 12.0 * uu[i + 2]
            - uu[i + 3])
            / (6.0 * hh.powi(4));
        let u3 = (uu[i - 3] - 8.0 * uu[i - 2] + 13.0 * uu[i - 1] - 13.0 * uu[i + 1]
            + 8.0 * uu[i + 2]
            - uu[i + 3])
            / (8.0 * hh.powi(3));
        let u2 = (-uu[i - 2] + 16.0 * uu[i - 1] - 30.0 * uu[i] + 16.0 * uu[i + 1] - uu[i + 2])
            / (12.0 * hh * hh);
        let u1 = (uu[i - 2] - 8.0 * uu[i - 1] + 8.0 * uu[i + 1] - uu[i + 2]) / (12.0 * hh);
        let (h, h1, h2) = (p.h(t), p.h_prime(t), p.h_second(t));
        let res = u4
            + 2.0 * h * u3
            + (2.0 * h1 + h * h - coeffs.alpha) * u2
            + (h2 + h * h1 - coeffs.alpha * h) * u1
            + coeffs.beta * (uu[i] - coeffs.nonlinearity_pow(uu[i]));
        worst = worst.max(res.abs());
    }
    // Collar: system form. v2 from the sampled derivatives, v3 by one centered
    // difference, then the v3 equation by another.
    let v2: Vec<f64> = (0..m)
        .map(|i| {
            if i == 0 || i == m - 1 {
                // Endpoint limits: v2 = (1 + j)·u″.
                let j = if i == 0 { p.j0() } else { p.j1() };
                (1.0 + f64::from(j)) * cc[i]
            } else {
                cc[i] + p.h(tt[i]) * dd[i]
            }
        })
        .collect();
    let deriv5 = |w: &[f64], i: usize| -> f64 {
        (w[i - 2] - 8.0 * w[i - 1] + 8.0 * w[i + 1] - w[i + 2]) / (12.0 * hh)
    };
    let v3: Vec<f64> = (0..m)
        .map(|i| {
            if (2..m - 2).contains(&i) {
                deriv5(&v2, i) - coeffs.alpha * dd[i]
            } else {
                f64::NAN
            }
        })
        .collect();
    for i in 4..m.saturating_sub(4) {
        let t = tt[i];
        if t >= collar && t <= d - collar {
            continue;
        }
        let res = deriv5(&v3, i) + p.h(t) * v3[i]
            - coeffs.beta * (coeffs.nonlinearity_pow(uu[i]) - uu[i]);
        worst = worst.max(res.abs());
    }
    Ok(worst)
}

/// Census and conservation diagnostics for an assembled solution.
#[derive(Debug, Clone, Serialize)]
pub struct QualityReport {
    /// |∫(u^q − u)·H| / ∫u^q·H — the weighted balance every global solution
    /// satisfies exactly.
    pub identity_rel: f64,
    /// max over the grid of v2 − c·v0 with c the larger factorization root;
    /// ≤ 0 (up to tolerance) for global nonnegative solutions. None when the
    /// coefficient quadratic has no real factorization.
    pub w2_max: Option<f64>,
    pub min_u: f64,
    pub max_u: f64,
    pub positive: bool,
    /// Nonconstant global solutions must cross the constant 1.
    pub crosses_one: bool,
    /// Within 1e−8 of the constant solution u ≡ 1 everywhere.
    pub constant: bool,
    pub critical_point_count: usize,
    pub nondegeneracy_margin: f64,
    pub degenerate: bool,
    pub residual_norm: f64,
}

/// Composite Simpson over a uniform odd-node grid.
fn simpson(values: &[f64], dt: f64) -> f64 {
    let n = values.len();
    debug_assert!(n >= 3 && n % 2 == 1);
    let mut acc = values[0] + values[n - 1];
    for (i, v) in values.iter().enumerate().take(n - 1).skip(1) {
        acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    acc * dt / 3.0
}

pub fn quality_checks(
    coeffs: &PaneitzCoefficients,
    p: &Profile,
    sol: &SolutionProfile,
) -> Result<QualityReport> {
    let dt = check_uniform(&sol.ts)?;
    if sol.ts.len() % 2 == 0 {
        return Err(Error::GridTooCoarse(
            "quality quadrature needs an odd node count".into(),
        ));
    }
    let weights: Result<Vec<f64>> = sol.ts.iter().map(|&t| p.weight(t)).collect();
    let weights = weights?;
    let fq: Vec<f64> = sol
        .u
        .iter()
        .zip(&weights)
        .map(|(&u, &w)| (coeffs.nonlinearity_pow(u) - u) * w)
        .collect();
    let uq: Vec<f64> = sol
        .u
        .iter()
        .zip(&weights)
        .map(|(&u, &w)| coeffs.nonlinearity_pow(u) * w)
        .collect();
    let num = simpson(&fq, dt).abs();
    let den = simpson(&uq, dt).abs().max(f64::MIN_POSITIVE);
    let identity_rel = num / den;

    let w2_max = coeffs.c_factor.map(|c| {
        let n = sol.ts.len();
        (0..n)
            .map(|i| {
                let v2 = if i == 0 {
                    sol.near_data.1
                } else if i == n - 1 {
                    sol.far_data.1
                } else {
                    sol.ddu[i] + p.h(sol.ts[i]) * sol.du[i]
                };
                v2 - c * sol.u[i]
            })
            .fold(f64::NEG_INFINITY, f64::max)
    });

    let min_u = sol.min_value;
    let max_u = sol.u.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let constant = sol.u.iter().all(|&x| (x - 1.0).abs() <= 1e-8);
    Ok(QualityReport {
        identity_rel,
        w2_max,
        min_u,
        max_u,
        positive: min_u > 0.0,
        crosses_one: max_u > 1.0 && min_u < 1.0,
        constant,
        critical_point_count: sol.critical_point_count,
        nondegeneracy_margin: sol.nondegeneracy_margin,
        degenerate: sol.degenerate,
        residual_norm: sol.residual_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn s3k1() -> Profile {
        Profile::sphere(3, 1, 0.0).unwrap()
    }

    fn round_coeffs() -> PaneitzCoefficients {
        PaneitzCoefficients::new(4.0, 3.84, 3.0).unwrap()
    }

    #[test]
    fn series_start_of_the_constant_is_exact() {
        let st = series_start(&round_coeffs(), &s3k1(), 1.0, 0.0, 1e-4).unwrap();
        assert_eq!(st.v, [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn series_start_slopes_match_the_boundary_relations() {
        let p = s3k1();
        let c = round_coeffs();
        // v3′(0) = β(a³ − a)/(1 + j0) = 3.84·6/3 at a = 2.
        let st = series_start(&c, &p, 2.0, 0.0, 1e-4).unwrap();
        assert_relative_eq!(st.v3() / 1e-4, 7.68, max_relative = 1e-6);
        // v1′(0) = b/(1 + j0) > 0 for b > 0.
        let st = series_start(&c, &p, 2.0, 0.9, 1e-4).unwrap();
        assert!(st.v1() > 0.0);
        assert_relative_eq!(st.v1() / 1e-4, 0.3, max_relative = 1e-5);
    }

    #[test]
    fn series_offset_outside_range_is_rejected() {
        let p = s3k1();
        let c = round_coeffs();
        assert!(series_start(&c, &p, 1.0, 0.0, 0.0).is_err());
        assert!(series_start(&c, &p, 1.0, 0.0, p.d()).is_err());
    }

    #[test]
    fn constant_trajectory_stays_constant() {
        let p = s3k1();
        let c = round_coeffs();
        let eps = 1e-6 * p.d();
        let start = series_start(&c, &p, 1.0, 0.0, eps).unwrap();
        let traj = integrate(&c, &p, start, p.d() - 1e-3 * p.d(), &IntegrateOpts::default())
            .unwrap();
        assert_eq!(traj.termination, Termination::ReachedEnd);
        assert_eq!(traj.final_state().v, [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(traj.state_at(1.3), [1.0, 0.0, 0.0, 0.0]);
        assert!(traj.v1_zeros.is_empty());
        assert!(certificate_nonglobal(&traj, &c).is_none());
    }

    #[test]
    fn endpoint_relations_recovered_by_extrapolation_toward_zero() {
        // (a, b) = (2, 1) starts inside the positive sign cone, so monitors
        // are disabled to observe the raw trajectory.
        let p = s3k1();
        let c = round_coeffs();
        let eps = 1e-6 * p.d();
        let opts = IntegrateOpts {
            certificates: false,
            ..Default::default()
        };
        let start = series_start(&c, &p, 2.0, 1.0, eps).unwrap();
        let traj = integrate(&c, &p, start, 2.0, &opts).unwrap();
        assert!(traj.t_last() > 0.03);
        // Richardson on q(t) = v(t)/t removes the t² correction.
        let extrap = |comp: usize| -> f64 {
            let q1 = traj.state_at(0.01)[comp] / 0.01;
            let q2 = traj.state_at(0.005)[comp] / 0.005;
            (4.0 * q2 - q1) / 3.0
        };
        assert_relative_eq!(extrap(1), 1.0 / 3.0, max_relative = 1e-7);
        assert_relative_eq!(extrap(3), 7.68, max_relative = 1e-7);
    }

    #[test]
    fn chained_integration_matches_single_run() {
        let p = s3k1();
        let c = round_coeffs();
        let eps = 1e-6 * p.d();
        let start = series_start(&c, &p, 1.4, -0.3, eps).unwrap();
        let opts = IntegrateOpts {
            certificates: false,
            ..Default::default()
        };
        let full = integrate(&c, &p, start, 1.5, &opts).unwrap();
        let first = integrate(&c, &p, start, 0.7, &opts).unwrap();
        let second = integrate(&c, &p, first.final_state(), 1.5, &opts).unwrap();
        assert_eq!(full.termination, Termination::ReachedEnd);
        assert_eq!(second.termination, Termination::ReachedEnd);
        let (a, b) = (full.final_state().v, second.final_state().v);
        for i in 0..4 {
            assert!(
                (a[i] - b[i]).abs() <= 1e-7,
                "component {i}: {} vs {}",
                a[i],
                b[i]
            );
        }
    }

    #[test]
    fn reflection_of_a_trajectory_solves_the_reflected_system() {
        // For profiles odd about D/2, t ↦ u(D−t) solves the same equation, so
        // mirroring the terminal state and integrating forward must land on
        // the mirror of the start.
        let p = s3k1();
        let c = round_coeffs();
        let d = p.d();
        let eps1 = 1e-3 * d;
        let opts = IntegrateOpts {
            certificates: false,
            ..Default::default()
        };
        let start = series_start(&c, &p, 1.05, -0.05, 1e-6 * d).unwrap();
        let t_top = 2.0;
        let fwd = integrate(&c, &p, start, t_top, &opts).unwrap();
        assert_eq!(fwd.termination, Termination::ReachedEnd);
        let y = fwd.final_state().v;
        let mirrored = State::new(d - t_top, [y[0], -y[1], y[2], -y[3]]);
        let back = integrate(&c, &p, mirrored, d - eps1, &opts).unwrap();
        assert_eq!(back.termination, Termination::ReachedEnd);
        // Compare on interior matched points; right at the singular ends the
        // indicial error mode dominates any trajectory comparison.
        for tau in [0.3, 0.8, 1.4, 1.9] {
            let got = back.state_at(d - tau);
            let src = fwd.state_at(tau);
            let want = [src[0], -src[1], src[2], -src[3]];
            for i in 0..4 {
                assert!(
                    (got[i] - want[i]).abs() <= 1e-7,
                    "τ = {tau}, component {i}: {} vs {}",
                    got[i],
                    want[i]
                );
            }
        }
    }

    #[test]
    fn cone_membership_is_detected_on_stored_trajectories() {
        let p = s3k1();
        let c = round_coeffs();
        let off = IntegrateOpts {
            certificates: false,
            ..Default::default()
        };
        let neg = State::new(1.0, [0.5, -0.1, -0.1, -0.1]);
        let traj = integrate(&c, &p, neg, 1.2, &off).unwrap();
        let cert = certificate_nonglobal(&traj, &c).unwrap();
        assert_eq!(cert.cone, Cone::Negative);
        assert_eq!(cert.t, 1.0);

        let pos = State::new(1.0, [2.0, 0.1, 0.1, 0.1]);
        let traj = integrate(&c, &p, pos, 1.2, &off).unwrap();
        assert_eq!(
            certificate_nonglobal(&traj, &c).unwrap().cone,
            Cone::Positive
        );
    }

    #[test]
    fn sign_cone_fires_before_the_far_end() {
        let p = s3k1();
        let c = round_coeffs();
        let eps = 1e-6 * p.d();
        let start = series_start(&c, &p, 0.5, -0.5, eps).unwrap();
        let traj = integrate(&c, &p, start, p.d() - 1e-3 * p.d(), &IntegrateOpts::default())
            .unwrap();
        match traj.termination {
            Termination::CertificateFired(cert) => {
                assert_eq!(cert.cone, Cone::Negative);
                assert!(cert.t < p.d() - 1e-3 * p.d());
            }
            other => panic!("expected a certificate, got {other:?}"),
        }
    }

    #[test]
    fn cones_stay_silent_for_inapplicable_coefficients() {
        let p = s3k1();
        let c = PaneitzCoefficients::new(4.0, -1.0, 3.0).unwrap();
        let neg = State::new(1.0, [0.5, -0.1, -0.1, -0.1]);
        let traj = integrate(&c, &p, neg, 1.05, &IntegrateOpts::default()).unwrap();
        assert!(certificate_nonglobal(&traj, &c).is_none());
        assert!(!matches!(traj.termination, Termination::CertificateFired(_)));
    }

    #[test]
    fn large_data_blow_up_is_reported_not_errored() {
        let p = s3k1();
        let c = round_coeffs();
        let eps = 1e-6 * p.d();
        let opts = IntegrateOpts {
            certificates: false,
            ..Default::default()
        };
        let start = series_start(&c, &p, 3.0, 30.0, eps).unwrap();
        let traj = integrate(&c, &p, start, p.d() - 1e-3 * p.d(), &opts).unwrap();
        match traj.termination {
            Termination::BlowUp { t } => assert!(t < p.d()),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn v1_zero_events_locate_critical_points() {
        // Start on a downhill slope; u dips, turns, and the turn is a v1 zero.
        let p = s3k1();
        let c = round_coeffs();
        let eps = 1e-6 * p.d();
        let opts = IntegrateOpts {
            certificates: false,
            ..Default::default()
        };
        let start = series_start(&c, &p, 1.2, -0.5, eps).unwrap();
        let traj = integrate(&c, &p, start, p.d() - 1e-3 * p.d(), &opts).unwrap();
        for &tz in &traj.v1_zeros {
            let v = traj.state_at(tz);
            assert!(v[1].abs() < 1e-9, "refined zero has v1 = {}", v[1]);
        }
    }

    fn constant_profile_solution(p: &Profile, value: f64, n: usize) -> SolutionProfile {
        let d = p.d();
        let ts: Vec<f64> = (0..n).map(|i| d * i as f64 / (n - 1) as f64).collect();
        SolutionProfile {
            ts,
            u: vec![value; n],
            du: vec![0.0; n],
            ddu: vec![0.0; n],
            residual_norm: 0.0,
            critical_points: vec![],
            critical_point_count: 2,
            min_value: value,
            nondegeneracy_margin: 0.0,
            degenerate: true,
            near_data: (value, 0.0),
            far_data: (value, 0.0),
        }
    }

    #[test]
    fn residual_of_constants_reduces_to_the_nonlinearity() {
        let p = s3k1();
        let c = round_coeffs();
        let one = constant_profile_solution(&p, 1.0, 801);
        assert!(residual(&c, &p, &one).unwrap() < 1e-10);
        let two = constant_profile_solution(&p, 2.0, 801);
        // β(u − u³) at u = 2.
        assert_relative_eq!(residual(&c, &p, &two).unwrap(), 6.0 * 3.84, max_relative = 1e-9);
    }

    #[test]
    fn residual_rejects_coarse_grids() {
        let p = s3k1();
        let c = round_coeffs();
        let sol = constant_profile_solution(&p, 1.0, 101);
        assert!(matches!(
            residual(&c, &p, &sol),
            Err(Error::GridTooCoarse(_))
        ));
    }

    #[test]
    fn quality_of_the_constant_solution() {
        let p = s3k1();
        let c = round_coeffs();
        let sol = constant_profile_solution(&p, 1.0, 801);
        let q = quality_checks(&c, &p, &sol).unwrap();
        assert!(q.identity_rel < 1e-14);
        // Factorization roots of x² − 4x + 3.84 are 2.4 and 1.6; w2 = −2.4.
        assert_relative_eq!(q.w2_max.unwrap(), -2.4, max_relative = 1e-12);
        assert!(q.positive);
        assert!(q.constant);
        assert!(!q.crosses_one);
    }
}
