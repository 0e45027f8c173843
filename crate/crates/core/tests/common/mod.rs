#![allow(dead_code)]

pub mod kernels;

use pwm_snb::cli::examples;
use pwm_snb::harmonic::{HarmonicConfig, HarmonicSetup};
use pwm_snb::matnum::{bisect_root, golden_extremum, Matrix};
use pwm_snb::model::ConverterModel;
use pwm_snb::plot::DutyGrid;
use pwm_snb::sdstab;
use pwm_snb::steady;
use pwm_snb::Result;

pub const FIXTURES: [&str; 5] = ["e1", "e2", "e3", "e4", "e5"];

pub fn fixture(name: &str) -> ConverterModel {
    examples::fixture(name).unwrap().model().unwrap()
}

/// Prints one verdict line per criterion so the suite log reads as a
/// checklist.
pub fn verdict(criterion: &str, what: &str, pass: bool, detail: impl std::fmt::Display) -> bool {
    println!(
        "{} criterion {criterion}: {what} [{detail}]",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

/// Every element of `a` has a partner in `b` within `tol`, and vice versa.
pub fn same_roots(a: &[f64], b: &[f64], tol: f64) -> bool {
    let covered = |x: &[f64], y: &[f64]| x.iter().all(|p| y.iter().any(|q| (p - q).abs() <= tol));
    covered(a, b) && covered(b, a)
}

pub fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .map(|p| {
            b.iter()
                .map(|q| (p - q).abs())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

fn det_i_minus_phi(m: &ConverterModel, duty: f64) -> Result<f64> {
    let orb = steady::orbit_at(m, duty * m.period())?;
    let phi = sdstab::jacobian(m, &orb)?;
    let n = phi.rows();
    let mut a = Matrix::identity(n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] -= phi[(i, j)];
        }
    }
    a.det()
}

fn grid(n: usize) -> Vec<f64> {
    let (lo, hi) = (1e-3, 1.0 - 1e-3);
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Duty ratios where `det(I - Φ)` vanishes. Sign changes across the poles
/// of the determinant (grazing switching) are discarded.
pub fn det_roots(m: &ConverterModel, n: usize) -> Vec<f64> {
    let xs = grid(n);
    let vals: Vec<Option<f64>> = xs.iter().map(|&x| det_i_minus_phi(m, x).ok()).collect();
    let mut out = Vec::new();
    for i in 1..n {
        let (Some(a), Some(b)) = (vals[i - 1], vals[i]) else {
            continue;
        };
        if a.signum() == b.signum() {
            continue;
        }
        let f = |x: f64| det_i_minus_phi(m, x);
        let Ok(r) = bisect_root(f, xs[i - 1], xs[i], 1e-13) else {
            continue;
        };
        // beside a root |f| shrinks below the bracket values; beside a pole it grows
        let delta = 1e-3 * (xs[i] - xs[i - 1]);
        let bound = a.abs().max(b.abs());
        let near = [r - delta, r + delta].map(|x| det_i_minus_phi(m, x).map(f64::abs));
        if near.iter().all(|v| matches!(v, Ok(v) if *v < bound)) {
            out.push(r);
        }
    }
    out
}

pub fn s_roots(m: &ConverterModel, n: usize) -> Vec<f64> {
    sdstab::snb_duties(m, n).unwrap()
}

/// Local extrema of the steady-state residual r(D), each refined by
/// golden-section search: the double roots at a merge.
pub fn double_roots(m: &ConverterModel, n: usize) -> Vec<f64> {
    let r = |x: f64| steady::residual(m, x * m.period());
    let xs = grid(n);
    let vals: Vec<Option<f64>> = xs.iter().map(|&x| r(x).ok()).collect();
    let mut out = Vec::new();
    for i in 1..n - 1 {
        let (Some(a), Some(b), Some(c)) = (vals[i - 1], vals[i], vals[i + 1]) else {
            continue;
        };
        let maximize = b > a && b >= c;
        let minimize = b < a && b <= c;
        if !(maximize || minimize) {
            continue;
        }
        if let Ok(x) = golden_extremum(r, xs[i - 1], xs[i + 1], 1e-10, maximize) {
            out.push(x);
        }
    }
    out
}

pub fn hb_roots(m: &ConverterModel, harmonics: usize, n: usize) -> Vec<f64> {
    let setup = HarmonicSetup::from_model(m, None).unwrap();
    setup
        .snb_duties(&HarmonicConfig::with_harmonics(harmonics), n)
        .unwrap()
}

/// Sup-norm distance between the harmonic L2 plot and its exact matrix form,
/// relative to the sup norm of the matrix form.
pub fn l2_relative_error(m: &ConverterModel, harmonics: usize, g: &DutyGrid) -> f64 {
    let setup = HarmonicSetup::from_model(m, None).unwrap();
    let (_, l2) = setup.l_plots(g, &HarmonicConfig::with_harmonics(harmonics));
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (x, v) in l2.grid.iter().zip(&l2.values) {
        let exact = pwm_snb::harmonic::l2_matrix_form(m, *x).unwrap();
        num = num.max((v - exact).abs());
        den = den.max(exact.abs());
    }
    num / den
}
