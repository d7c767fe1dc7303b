use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{uniform_point, Never, Step};
use crate::coverage::EvaluationCounter;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowellParams {
    pub xtol: f64,
    pub ftol: f64,
}

impl Default for PowellParams {
    fn default() -> Self {
        Self {
            xtol: 1e-4,
            ftol: 1e-4,
        }
    }
}

pub(crate) fn minimize(
    counter: &EvaluationCounter<'_>,
    rng: &mut impl Rng,
    p: &PowellParams,
) -> Step<Never> {
    let d = counter.dimension();
    loop {
        descend(counter, uniform_point(rng, d), p)?;
    }
}

/// Range of `t` with `x + t*dir` inside the unit box.
fn step_bounds(x: &[f64], dir: &[f64]) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for (&xi, &di) in x.iter().zip(dir) {
        if di > 0.0 {
            lo = lo.max(-xi / di);
            hi = hi.min((1.0 - xi) / di);
        } else if di < 0.0 {
            lo = lo.max((1.0 - xi) / di);
            hi = hi.min(-xi / di);
        }
    }
    (lo.min(0.0), hi.max(0.0))
}

fn point_along(x: &[f64], dir: &[f64], t: f64) -> Vec<f64> {
    x.iter()
        .zip(dir)
        .map(|(a, b)| (a + t * b).clamp(0.0, 1.0))
        .collect()
}

/// Bounded line minimization; keeps the current point unless a better one is found.
fn line_search(
    counter: &EvaluationCounter<'_>,
    x: &[f64],
    fx: f64,
    dir: &[f64],
    xtol: f64,
) -> Step<(Vec<f64>, f64)> {
    let (lo, hi) = step_bounds(x, dir);
    if hi - lo <= 0.0 {
        return Ok((x.to_vec(), fx));
    }
    let (t, ft) = fminbound(
        |t| counter.evaluate(&point_along(x, dir, t)),
        lo,
        hi,
        xtol,
        500,
    )?;
    if ft < fx {
        Ok((point_along(x, dir, t), ft))
    } else {
        Ok((x.to_vec(), fx))
    }
}

fn descend(counter: &EvaluationCounter<'_>, x0: Vec<f64>, p: &PowellParams) -> Step {
    let n = x0.len();
    let mut dirs: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut x = x0;
    let mut fx = counter.evaluate(&x)?;
    for _ in 0..1000 * n {
        let (x_start, f_start) = (x.clone(), fx);
        let (mut biggest, mut big_ind) = (0.0, 0);
        for (i, dir) in dirs.iter().enumerate() {
            let before = fx;
            (x, fx) = line_search(counter, &x, fx, dir, p.xtol)?;
            if before - fx > biggest {
                biggest = before - fx;
                big_ind = i;
            }
        }
        if 2.0 * (f_start - fx) <= p.ftol * (f_start.abs() + fx.abs()) + 1e-20 {
            return Ok(());
        }
        let delta: Vec<f64> = x.iter().zip(&x_start).map(|(a, b)| a - b).collect();
        let (_, hi) = step_bounds(&x, &delta);
        let x_ext = point_along(&x, &delta, hi.min(1.0));
        let f_ext = counter.evaluate(&x_ext)?;
        if f_start > f_ext {
            let t = 2.0 * (f_start + f_ext - 2.0 * fx) * (f_start - fx - biggest).powi(2)
                - biggest * (f_start - f_ext).powi(2);
            if t < 0.0 {
                (x, fx) = line_search(counter, &x, fx, &delta, p.xtol)?;
                if delta.iter().any(|v| *v != 0.0) {
                    dirs.swap(big_ind, n - 1);
                    dirs[n - 1] = delta;
                }
            }
        }
    }
    Ok(())
}

/// Brent's bounded scalar minimizer on `[a, b]`.
pub(crate) fn fminbound(
    mut f: impl FnMut(f64) -> Step<f64>,
    mut a: f64,
    mut b: f64,
    xatol: f64,
    maxfun: usize,
) -> Step<(f64, f64)> {
    let sqrt_eps = f64::EPSILON.sqrt();
    let golden_mean = 0.5 * (3.0 - 5f64.sqrt());
    let mut fulc = a + golden_mean * (b - a);
    let mut nfc = fulc;
    let mut xf = fulc;
    let (mut rat, mut e) = (0.0f64, 0.0f64);
    let mut fx = f(xf)?;
    let mut num = 1;
    let (mut ffulc, mut fnfc) = (fx, fx);
    let mut xm = 0.5 * (a + b);
    let mut tol1 = sqrt_eps * xf.abs() + xatol / 3.0;
    let mut tol2 = 2.0 * tol1;
    let sign = |v: f64| {
        if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            0.0
        }
    };

    while (xf - xm).abs() > tol2 - 0.5 * (b - a) {
        let mut golden = true;
        if e.abs() > tol1 {
            golden = false;
            let mut r = (xf - nfc) * (fx - ffulc);
            let mut q = (xf - fulc) * (fx - fnfc);
            let mut pp = (xf - fulc) * q - (xf - nfc) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                pp = -pp;
            }
            q = q.abs();
            r = e;
            e = rat;
            if pp.abs() < (0.5 * q * r).abs() && pp > q * (a - xf) && pp < q * (b - xf) {
                rat = pp / q;
                let x = xf + rat;
                if (x - a) < tol2 || (b - x) < tol2 {
                    let si = sign(xm - xf) + if xm == xf { 1.0 } else { 0.0 };
                    rat = tol1 * si;
                }
            } else {
                golden = true;
            }
        }
        if golden {
            e = if xf >= xm { a - xf } else { b - xf };
            rat = golden_mean * e;
        }
        let si = sign(rat) + if rat == 0.0 { 1.0 } else { 0.0 };
        let x = xf + si * rat.abs().max(tol1);
        let fu = f(x)?;
        num += 1;
        if fu <= fx {
            if x >= xf {
                a = xf;
            } else {
                b = xf;
            }
            fulc = nfc;
            ffulc = fnfc;
            nfc = xf;
            fnfc = fx;
            xf = x;
            fx = fu;
        } else {
            if x < xf {
                a = x;
            } else {
                b = x;
            }
            if fu <= fnfc || nfc == xf {
                fulc = nfc;
                ffulc = fnfc;
                nfc = x;
                fnfc = fu;
            } else if fu <= ffulc || fulc == xf || fulc == nfc {
                fulc = x;
                ffulc = fu;
            }
        }
        xm = 0.5 * (a + b);
        tol1 = sqrt_eps * xf.abs() + xatol / 3.0;
        tol2 = 2.0 * tol1;
        if num >= maxfun {
            break;
        }
    }
    Ok((xf, fx))
}
