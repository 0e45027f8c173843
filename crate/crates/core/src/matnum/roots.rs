use super::Matrix;
use crate::error::{Error, Result};

pub const DEFAULT_GRID: usize = 2000;

/// Every root of `f` on `[lo, hi]` that shows up as a sign change on a
/// uniform `n_grid`-point scan, refined by bisection to bracket width `tol`.
///
/// Roots are returned ascending. A grid point where `f` is exactly zero is
/// reported as a root. Tangential roots without a sign change are missed.
pub fn bracketed_roots<F>(mut f: F, lo: f64, hi: f64, n_grid: usize, tol: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(lo < hi) || n_grid < 2 || !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "root scan needs lo < hi, n_grid >= 2, tol > 0 (got [{lo}, {hi}], {n_grid}, {tol})"
        )));
    }
    let mut eval = |x: f64| -> Result<f64> {
        let v = f(x)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Evaluation(x))
        }
    };
    let step = (hi - lo) / (n_grid - 1) as f64;
    let grid_x = |i: usize| {
        if i == n_grid - 1 {
            hi
        } else {
            lo + step * i as f64
        }
    };

    let mut roots = Vec::new();
    let mut x_prev = grid_x(0);
    let mut f_prev = eval(x_prev)?;
    if f_prev == 0.0 {
        roots.push(x_prev);
    }
    for i in 1..n_grid {
        let x = grid_x(i);
        let fx = eval(x)?;
        if fx == 0.0 {
            roots.push(x);
        } else if f_prev != 0.0 && f_prev.signum() != fx.signum() {
            roots.push(bisect(&mut eval, x_prev, x, f_prev, tol)?);
        }
        x_prev = x;
        f_prev = fx;
    }
    Ok(roots)
}

fn bisect<F>(f: &mut F, mut a: f64, mut b: f64, mut fa: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    while (b - a).abs() > tol {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m)?;
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Bisection on a known sign-changing bracket.
pub fn bisect_root<F>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let fa = f(a)?;
    let fb = f(b)?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::InvalidParameter(format!(
            "no sign change on [{a}, {b}]"
        )));
    }
    bisect(&mut f, a, b, fa, tol)
}

/// Newton's method for a 2-D system with a central finite-difference
/// Jacobian (relative step 1e-6).
pub fn newton_2d<F>(mut f: F, x0: [f64; 2], tol: f64, max_iter: usize) -> Result<[f64; 2]>
where
    F: FnMut([f64; 2]) -> Result<[f64; 2]>,
{
    const REL_STEP: f64 = 1e-6;
    let norm = |v: [f64; 2]| v[0].abs().max(v[1].abs());
    let mut x = x0;
    let mut fx = f(x)?;
    let mut best = (x, norm(fx));
    for _ in 0..max_iter {
        if !(norm(fx) > tol) {
            if norm(fx).is_finite() {
                return Ok(x);
            }
            return Err(Error::Evaluation(x[0]));
        }
        let mut jac = Matrix::zeros(2, 2);
        for j in 0..2 {
            let h = if x[j] != 0.0 {
                REL_STEP * x[j].abs()
            } else {
                REL_STEP
            };
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let fp = f(xp)?;
            let fm = f(xm)?;
            for i in 0..2 {
                jac[(i, j)] = (fp[i] - fm[i]) / (xp[j] - xm[j]);
            }
        }
        let step = jac
            .solve_vec(&[-fx[0], -fx[1]])
            .map_err(|_| Error::Singular("newton_2d finite-difference Jacobian"))?;

        // Halve the step until the residual does not grow.
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let trial = [x[0] + lambda * step[0], x[1] + lambda * step[1]];
            if let Ok(ft) = f(trial) {
                if norm(ft).is_finite() && norm(ft) <= norm(fx) {
                    accepted = Some((trial, ft));
                    break;
                }
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((xn, fnew)) => {
                x = xn;
                fx = fnew;
            }
            None => break,
        }
        if norm(fx) < best.1 {
            best = (x, norm(fx));
        }
    }
    if norm(fx) <= tol {
        return Ok(x);
    }
    Err(Error::NewtonStalled {
        best: best.0,
        residual: best.1,
    })
}

/// Golden-section search for a local extremum of `f` on `[a, b]`; returns
/// the abscissa. `maximize` selects the direction.
pub fn golden_extremum<F>(mut f: F, mut a: f64, mut b: f64, tol: f64, maximize: bool) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let sgn = if maximize { -1.0 } else { 1.0 };
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = sgn * f(c)?;
    let mut fd = sgn * f(d)?;
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = sgn * f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = sgn * f(d)?;
        }
    }
    Ok(0.5 * (a + b))
}
