// Temporary diagnostic: replicate the continuation corrector (with the
// directional secant rescale) at the point where the run step-failed.
use paneitz::bifurcation::CoefficientPath;
use paneitz::profile::Profile;
use paneitz::shooting;

fn solve3(a: &[[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let mut m = *a;
    let mut v = b;
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        m.swap(col, piv);
        v.swap(col, piv);
        if m[col][col] == 0.0 {
            return None;
        }
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            v[row] -= f * v[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut s = v[row];
        for k in row + 1..3 {
            s -= m[row][k] * x[k];
        }
        x[row] = s / m[row][row];
    }
    Some(x)
}

fn main() {
    let path = CoefficientPath::linear_quadratic(0.2, 3.0).unwrap();
    let p = Profile::sphere(3, 1, 0.0).unwrap();
    let (scale_b, scale_s) = (4.0, 1.0 + 9.79669331137745658);

    let p0 = [
        2.1162984349457017e0,
        -1.2869017385726909e1 / scale_b,
        1.6939484762521182e1 / scale_s,
    ];
    let p1 = [
        2.1171388094370305e0,
        -1.2897150752865286e1 / scale_b,
        1.6956622042921950e1 / scale_s,
    ];
    let mut tangent = [p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2]];
    let tn = tangent.iter().map(|v| v * v).sum::<f64>().sqrt();
    for t in tangent.iter_mut() {
        *t /= tn;
    }
    println!("secant step {tn:.3e}");

    let residual = |xi: [f64; 3]| -> Result<(f64, f64), paneitz::Error> {
        let (a, b, s) = (xi[0], xi[1] * scale_b, xi[2] * scale_s);
        let co = path.coeffs(s)?;
        let r = shooting::shoot_smooth(&co, &p, a, b)?;
        Ok((r.r1, r.r3))
    };

    for h in [3.630e-3f64, 3.60e-3] {
        println!("=== h = {h:.2e}");
        let pred = [
            p1[0] + h * tangent[0],
            p1[1] + h * tangent[1],
            p1[2] + h * tangent[2],
        ];
        let mut xi = pred;
        let mut last_step = f64::INFINITY;
        for iter in 1..=16 {
            let (r1, r3) = match residual(xi) {
                Ok(v) => v,
                Err(e) => {
                    println!("iter {iter:2}: residual error: {e}");
                    break;
                }
            };
            let nr = r1.hypot(r3);
            let c: f64 = tangent
                .iter()
                .zip(xi.iter().zip(pred.iter()))
                .map(|(t, (x, pr))| t * (x - pr))
                .sum();
            let mut jac = [[0.0; 3]; 3];
            let mut fd_err = None;
            for col in 0..3 {
                let hh = 1e-8 * (1.0 + xi[col].abs());
                let (mut xp, mut xm) = (xi, xi);
                xp[col] += hh;
                xm[col] -= hh;
                match (residual(xp), residual(xm)) {
                    (Ok((a1, a3)), Ok((b1, b3))) => {
                        jac[0][col] = (a1 - b1) / (2.0 * hh);
                        jac[1][col] = (a3 - b3) / (2.0 * hh);
                        jac[2][col] = tangent[col];
                    }
                    (e1, e2) => {
                        fd_err = Some(format!("col {col}: {e1:?} {e2:?}"));
                        break;
                    }
                }
            }
            if let Some(e) = fd_err {
                println!("iter {iter:2}: FD failure {e}");
                break;
            }
            let jfro = jac[..2]
                .iter()
                .flatten()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            let xnorm = 1.0 + xi.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let floor = 32.0 * f64::EPSILON * jfro * xnorm;
            let dx = solve3(&jac, [-r1, -r3, -c]).unwrap();
            let ndx = dx.iter().map(|v| v * v).sum::<f64>().sqrt();
            let accepted = nr <= floor
                && c.abs() <= 1e-9
                && (ndx <= 1e-8 * xnorm || last_step <= 1e-8 * xnorm);
            let mut step = 1.0;
            for _ in 0..40 {
                if xi[0] + step * dx[0] > 0.0 {
                    break;
                }
                step *= 0.5;
            }
            let probe = [
                xi[0] + step * dx[0],
                xi[1] + step * dx[1],
                xi[2] + step * dx[2],
            ];
            let (g1, g3) = match residual(probe) {
                Ok(v) => v,
                Err(e) => {
                    println!("iter {iter:2}: probe error: {e}");
                    break;
                }
            };
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
            println!(
                "iter {iter:2}: nr {nr:.3e} floor {floor:.3e} ndx {ndx:.3e} t* {t:.3e} {}",
                if accepted { "ACCEPT" } else { "" }
            );
            if accepted {
                let (a, b, s) = (xi[0], xi[1] * scale_b, xi[2] * scale_s);
                println!("  converged: a {a:.12} b {b:.12} s {s:.12}");
                let co = path.coeffs(s).unwrap();
                match shooting::assess(&co, &p, a, b, 801) {
                    Ok((prof, _q)) => {
                        println!(
                            "  assess: count {} min_u {:.4e} margin {:.3e} degen {}",
                            prof.critical_point_count,
                            prof.min_value,
                            prof.nondegeneracy_margin,
                            prof.degenerate
                        );
                        println!(
                            "  far_data: ({:.10e}, {:.10e})  D {:.6}",
                            prof.far_data.0,
                            prof.far_data.1,
                            p.d()
                        );
                        for cp in &prof.critical_points {
                            println!(
                                "    cp t {:.8} (t/D {:.5}) u {:.8} u'' {:.6e}",
                                cp.t,
                                cp.t / p.d(),
                                cp.u,
                                cp.u_second
                            );
                        }
                        let n = prof.ts.len();
                        for i in (0..n).rev().take(14).collect::<Vec<_>>().into_iter().rev() {
                            println!(
                                "    tail t/D {:.5} u {:.8e} du {:.6e} ddu {:.6e}",
                                prof.ts[i] / p.d(),
                                prof.u[i],
                                prof.du[i],
                                prof.ddu[i]
                            );
                        }
                    }
                    Err(e) => println!("  assess ERROR: {e}"),
                }
                break;
            }
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
        }
    }
}
