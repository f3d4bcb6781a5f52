//! Dormand–Prince 5(4) with per-step quartic dense output, specialized to the
//! four-component first-order systems of this crate. The caller drives the
//! integrator one accepted step at a time, so event checks can inspect each
//! step's interpolant before the next one is taken.

use crate::error::{Error, Result};

pub type V4 = [f64; 4];

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Difference between the 5th- and embedded 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Dense-output weights for the quartic interpolant.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy)]
pub struct Dopri5Opts {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: Option<f64>,
    pub max_steps: usize,
}

impl Default for Dopri5Opts {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            h_init: None,
            max_steps: 1_000_000,
        }
    }
}

/// One accepted step with its dense-output interpolant
/// y(t0 + θh) = r0 + θ(r1 + (1−θ)(r2 + θ(r3 + (1−θ)r4))).
#[derive(Debug, Clone, Copy)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    pub y0: V4,
    pub y1: V4,
    rcont: [V4; 5],
}

impl DenseStep {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t0 - 1e-14 * self.h.abs() && t <= self.t1() + 1e-14 * self.h.abs()
    }

    pub fn eval(&self, t: f64) -> V4 {
        let theta = (t - self.t0) / self.h;
        let om = 1.0 - theta;
        let mut out = [0.0; 4];
        for i in 0..4 {
            out[i] = self.rcont[0][i]
                + theta
                    * (self.rcont[1][i]
                        + om * (self.rcont[2][i] + theta * (self.rcont[3][i] + om * self.rcont[4][i])));
        }
        out
    }
}

/// Step-at-a-time driver; `f` must be smooth on the interval being covered.
pub struct Integrator<'a> {
    f: &'a dyn Fn(f64, &V4) -> V4,
    pub t: f64,
    pub y: V4,
    h: f64,
    k1: V4,
    opts: Dopri5Opts,
    steps_taken: usize,
    just_rejected: bool,
}

fn scaled_err_norm(e: &V4, y0: &V4, y1: &V4, opts: &Dopri5Opts) -> f64 {
    let mut acc = 0.0;
    for i in 0..4 {
        let sc = opts.atol + opts.rtol * y0[i].abs().max(y1[i].abs());
        let r = e[i] / sc;
        acc += r * r;
    }
    (acc / 4.0).sqrt()
}

impl<'a> Integrator<'a> {
    pub fn new(f: &'a dyn Fn(f64, &V4) -> V4, t0: f64, y0: V4, opts: Dopri5Opts) -> Self {
        let k1 = f(t0, &y0);
        let h = opts.h_init.unwrap_or_else(|| {
            // Crude start; the controller settles within a few steps.
            let d0: f64 = y0.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-8);
            let d1: f64 = k1.iter().map(|v| v * v).sum::<f64>().sqrt();
            if d1 > 1e-10 {
                0.01 * d0 / d1
            } else {
                1e-4
            }
        });
        Self {
            f,
            t: t0,
            y: y0,
            h,
            k1,
            opts,
            steps_taken: 0,
            just_rejected: false,
        }
    }

    /// Advance exactly one accepted step, clipped so it never crosses `t_end`.
    pub fn step(&mut self, t_end: f64) -> Result<DenseStep> {
        let f = self.f;
        loop {
            self.steps_taken += 1;
            if self.steps_taken > self.opts.max_steps {
                return Err(Error::Integration {
                    t: self.t,
                    reason: format!("step budget {} exhausted", self.opts.max_steps),
                });
            }
            let span_left = t_end - self.t;
            if span_left <= 0.0 {
                return Err(Error::Integration {
                    t: self.t,
                    reason: "step requested past the end of the interval".into(),
                });
            }
            let clipped = self.h >= span_left;
            let h = if clipped { span_left } else { self.h };
            if h < 1e-14 * (self.t.abs() + 1.0) {
                return Err(Error::Integration {
                    t: self.t,
                    reason: "step size underflow".into(),
                });
            }
            let (t, y, k1) = (self.t, self.y, self.k1);

            let mut ytmp = [0.0; 4];
            for i in 0..4 {
                ytmp[i] = y[i] + h * A21 * k1[i];
            }
            let k2 = f(t + h / 5.0, &ytmp);
            for i in 0..4 {
                ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            let k3 = f(t + 3.0 * h / 10.0, &ytmp);
            for i in 0..4 {
                ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            let k4 = f(t + 4.0 * h / 5.0, &ytmp);
            for i in 0..4 {
                ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            let k5 = f(t + 8.0 * h / 9.0, &ytmp);
            for i in 0..4 {
                ytmp[i] = y[i]
                    + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            let k6 = f(t + h, &ytmp);
            let mut y1 = [0.0; 4];
            for i in 0..4 {
                y1[i] = y[i]
                    + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
            }
            let k7 = f(t + h, &y1);

            let mut e = [0.0; 4];
            for i in 0..4 {
                e[i] = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i]
                        + E7 * k7[i]);
            }
            let err = if y1.iter().chain(e.iter()).all(|v| v.is_finite()) {
                scaled_err_norm(&e, &y, &y1, &self.opts)
            } else {
                f64::INFINITY
            };

            if err <= 1.0 {
                let fac_max = if self.just_rejected { 1.0 } else { 10.0 };
                let fac = (0.9 * err.powf(-0.2)).clamp(0.2, fac_max);
                self.just_rejected = false;

                let mut rcont = [[0.0; 4]; 5];
                for i in 0..4 {
                    let ydiff = y1[i] - y[i];
                    let bspl = h * k1[i] - ydiff;
                    rcont[0][i] = y[i];
                    rcont[1][i] = ydiff;
                    rcont[2][i] = bspl;
                    rcont[3][i] = ydiff - h * k7[i] - bspl;
                    rcont[4][i] = h
                        * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i]
                            + D7 * k7[i]);
                }
                let step = DenseStep {
                    t0: t,
                    h,
                    y0: y,
                    y1,
                    rcont,
                };
                // Land exactly on t_end when this step was clipped to it, so
                // the caller's t >= t_end check terminates cleanly.
                self.t = if clipped { t_end } else { t + h };
                self.y = y1;
                self.k1 = k7;
                self.h = h * fac;
                return Ok(step);
            }

            self.just_rejected = true;
            let fac = if err.is_finite() {
                (0.9 * err.powf(-0.2)).clamp(0.2, 0.9)
            } else {
                0.2
            };
            self.h = h * fac;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Linear test system with closed-form solution: y' = A y for a rotation
    /// plus decay block.
    fn field(_t: f64, y: &V4) -> V4 {
        [y[1], -y[0], -0.5 * y[2], y[0] - y[3]]
    }

    #[test]
    fn integrates_linear_system_to_tolerance() {
        let opts = Dopri5Opts {
            rtol: 1e-11,
            atol: 1e-13,
            ..Default::default()
        };
        let f: &dyn Fn(f64, &V4) -> V4 = &field;
        let mut int = Integrator::new(f, 0.0, [1.0, 0.0, 2.0, 0.0], opts);
        while int.t < 3.0 {
            int.step(3.0).unwrap();
        }
        assert_relative_eq!(int.y[0], 3.0_f64.cos(), max_relative = 1e-9);
        assert_relative_eq!(int.y[1], -(3.0_f64.sin()), max_relative = 1e-9);
        assert_relative_eq!(int.y[2], 2.0 * (-1.5_f64).exp(), max_relative = 1e-9);
    }

    #[test]
    fn dense_output_matches_direct_integration() {
        let opts = Dopri5Opts::default();
        let f: &dyn Fn(f64, &V4) -> V4 = &field;
        let mut int = Integrator::new(f, 0.0, [1.0, 0.0, 2.0, 0.0], opts);
        let mut steps = Vec::new();
        while int.t < 2.0 {
            steps.push(int.step(2.0).unwrap());
        }
        for step in &steps {
            for frac in [0.0, 0.25, 0.5, 0.75, 1.0] {
                let t = step.t0 + frac * step.h;
                let y = step.eval(t);
                assert_relative_eq!(y[0], t.cos(), max_relative = 1e-8, epsilon = 1e-9);
                assert_relative_eq!(y[2], 2.0 * (-0.5 * t).exp(), max_relative = 1e-8);
            }
        }
        // Interpolant endpoints agree with the step states exactly.
        let s = &steps[3];
        assert_eq!(s.eval(s.t0), s.y0);
        for i in 0..4 {
            assert_relative_eq!(s.eval(s.t1())[i], s.y1[i], epsilon = 1e-13);
        }
    }

    #[test]
    fn last_step_lands_exactly_on_the_endpoint() {
        let f: &dyn Fn(f64, &V4) -> V4 = &field;
        let mut int = Integrator::new(f, 0.0, [1.0, 0.0, 2.0, 0.0], Dopri5Opts::default());
        while int.t < 1.0 {
            int.step(1.0).unwrap();
        }
        assert_eq!(int.t, 1.0);
    }

    #[test]
    fn divergent_field_reports_step_underflow() {
        let f: &dyn Fn(f64, &V4) -> V4 = &|_t, y| {
            let s = y[0] * y[0];
            [s * s, 0.0, 0.0, 0.0]
        };
        let mut int = Integrator::new(f, 0.0, [2.0, 0.0, 0.0, 0.0], Dopri5Opts::default());
        let mut failed = false;
        for _ in 0..100_000 {
            match int.step(10.0) {
                Ok(_) => {}
                Err(_) => {
                    failed = true;
                    break;
                }
            }
            if !int.y[0].is_finite() {
                break;
            }
        }
        assert!(failed, "blow-up must surface as an integration error");
    }
}
