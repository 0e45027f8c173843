use super::Matrix;
use crate::error::{Error, Result};

// Diagonal [8/8] Pade approximant of exp(x); with ||A|| <= 1/2 the truncation
// error is far below f64 resolution.
const PADE_ORDER: usize = 8;
const SCALE_TARGET: f64 = 0.5;

fn pade_coefficients() -> [f64; PADE_ORDER + 1] {
    let q = PADE_ORDER;
    let mut c = [0.0; PADE_ORDER + 1];
    c[0] = 1.0;
    for k in 1..=q {
        c[k] = c[k - 1] * (q - k + 1) as f64 / (k * (2 * q - k + 1)) as f64;
    }
    c
}

/// Matrix exponential by scaling and squaring.
pub fn expm(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "expm of a {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    if !a.is_finite() {
        return Err(Error::Overflow("expm input"));
    }
    let n = a.rows();
    let norm = a.norm_inf();
    let squarings = if norm > SCALE_TARGET {
        (norm / SCALE_TARGET).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a.scale(0.5f64.powi(squarings));

    let c = pade_coefficients();
    let id = Matrix::identity(n);
    let mut num = id.scale(c[0]);
    let mut den = id.scale(c[0]);
    let mut power = id.clone();
    for (k, &ck) in c.iter().enumerate().skip(1) {
        power = &power * &scaled;
        let term = power.scale(ck);
        num = &num + &term;
        den = if k % 2 == 0 {
            &den + &term
        } else {
            &den - &term
        };
    }
    let mut e = den.solve(&num)?;
    for _ in 0..squarings {
        e = &e * &e;
    }
    if !e.is_finite() {
        return Err(Error::Overflow("matrix exponential"));
    }
    Ok(e)
}

/// Returns `(e^{At}, ∫_0^t e^{Aσ} dσ)`.
///
/// Both blocks come out of one exponential of the augmented generator
/// `[[A t, I t], [0, 0]]`, so a singular `A` needs no special handling.
pub fn expm_pair(a: &Matrix, t: f64) -> Result<(Matrix, Matrix)> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "expm_pair of a {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "propagation time must be finite and non-negative, got {t}"
        )));
    }
    let n = a.rows();
    let mut aug = Matrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            aug[(i, j)] = a[(i, j)] * t;
        }
        aug[(i, n + i)] = t;
    }
    let big = expm(&aug)?;
    let mut e = Matrix::zeros(n, n);
    let mut psi = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            e[(i, j)] = big[(i, j)];
            psi[(i, j)] = big[(i, n + j)];
        }
    }
    Ok((e, psi))
}
