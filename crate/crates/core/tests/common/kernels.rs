#![allow(dead_code)]

use num_complex::Complex64;
use pwm_snb::matnum::{eigenvalues, expm_pair, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SAMPLES: usize = 100;

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let data: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    Matrix::from_vec(n, n, data).unwrap()
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.rows();
    let mut c = Matrix::zeros(n, b.cols());
    for i in 0..n {
        for j in 0..b.cols() {
            c[(i, j)] = (0..a.cols()).map(|k| a[(i, k)] * b[(k, j)]).sum();
        }
    }
    c
}

pub fn rel_diff(a: &Matrix, b: &Matrix) -> f64 {
    let mut num = 0.0f64;
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            num = num.max((a[(i, j)] - b[(i, j)]).abs());
        }
    }
    num / b.max_abs().max(f64::MIN_POSITIVE)
}

/// Scaled 60-term Taylor series, squared back up.
pub fn taylor_expm(a: &Matrix, t: f64) -> Matrix {
    let n = a.rows();
    let norm = a.norm_inf() * t.abs();
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a.scale(t / 2f64.powi(s));
    let mut term = Matrix::identity(n);
    let mut sum = Matrix::identity(n);
    for k in 1..=60 {
        term = matmul(&term, &scaled).scale(1.0 / k as f64);
        for i in 0..n {
            for j in 0..n {
                sum[(i, j)] += term[(i, j)];
            }
        }
    }
    for _ in 0..s {
        sum = matmul(&sum, &sum);
    }
    sum
}

/// Determinant of a complex matrix by partial-pivot elimination.
pub fn complex_det(mut a: Vec<Vec<Complex64>>) -> Complex64 {
    let n = a.len();
    let mut det = Complex64::new(1.0, 0.0);
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[i][k].norm().partial_cmp(&a[j][k].norm()).unwrap())
            .unwrap();
        if a[p][k].norm() == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        if p != k {
            a.swap(p, k);
            det = -det;
        }
        det *= a[k][k];
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            let pivot_row = a[k].clone();
            for (x, v) in a[i][k..n].iter_mut().zip(&pivot_row[k..n]) {
                *x -= f * v;
            }
        }
    }
    det
}

pub fn condition_1(a: &Matrix) -> f64 {
    match a.inverse() {
        Ok(inv) => a.norm1() * inv.norm1(),
        Err(_) => f64::INFINITY,
    }
}

/// Match each expected value to a distinct computed one, nearest first.
pub fn match_spectra(computed: &[Complex64], expected: &[Complex64]) -> f64 {
    let mut left: Vec<Complex64> = computed.to_vec();
    let mut worst = 0.0f64;
    for z in expected {
        let (k, d) = left
            .iter()
            .enumerate()
            .map(|(k, w)| (k, (w - z).norm()))
            .min_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
            .unwrap();
        worst = worst.max(d / z.norm().max(f64::MIN_POSITIVE));
        left.remove(k);
    }
    worst
}

/// Worst relative error of `expm` against the Taylor oracle, random 3x3,
/// t = 0.7.
pub fn taylor_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..SAMPLES)
        .map(|_| {
            let a = random_matrix(&mut rng, 3);
            let (e, _) = expm_pair(&a, 0.7).unwrap();
            rel_diff(&e, &taylor_expm(&a, 0.7))
        })
        .fold(0.0, f64::max)
}

/// Worst relative violation of `E(t1 + t2) = E(t1) E(t2)`, dimensions 1..8.
pub fn semigroup_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..SAMPLES)
        .map(|k| {
            let a = random_matrix(&mut rng, 1 + k % 8);
            let t1 = rng.gen_range(0.0..2.0);
            let t2 = rng.gen_range(0.0..2.0);
            let (e12, _) = expm_pair(&a, t1 + t2).unwrap();
            let (e1, _) = expm_pair(&a, t1).unwrap();
            let (e2, _) = expm_pair(&a, t2).unwrap();
            rel_diff(&matmul(&e1, &e2), &e12)
        })
        .fold(0.0, f64::max)
}

/// Worst relative gap between Psi and `A^-1 (E - I)` over well-conditioned
/// random A.
pub fn psi_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut tested = 0;
    while tested < SAMPLES {
        let a = random_matrix(&mut rng, 2 + tested % 7);
        if condition_1(&a) > 100.0 {
            continue;
        }
        let t = rng.gen_range(0.1..1.5);
        let (e, psi) = expm_pair(&a, t).unwrap();
        let mut e_minus_i = e.clone();
        for i in 0..a.rows() {
            e_minus_i[(i, i)] -= 1.0;
        }
        worst = worst.max(rel_diff(&psi, &a.solve(&e_minus_i).unwrap()));
        tested += 1;
    }
    worst
}

/// Worst `|det(A - λI)| / ‖A‖∞` over the eigenvalues of random 4x4 A.
pub fn eigen_det_residual(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..SAMPLES {
        let a = random_matrix(&mut rng, 4);
        let lams = eigenvalues(&a).unwrap();
        assert_eq!(lams.len(), 4);
        for lam in lams {
            let shifted: Vec<Vec<Complex64>> = (0..4)
                .map(|i| {
                    (0..4)
                        .map(|j| {
                            Complex64::new(a[(i, j)], 0.0)
                                - if i == j {
                                    lam
                                } else {
                                    Complex64::new(0.0, 0.0)
                                }
                        })
                        .collect()
                })
                .collect();
            worst = worst.max(complex_det(shifted).norm() / a.norm_inf());
        }
    }
    worst
}

/// Worst relative gap between eig(e^{At}) and exp(t eig(A)), t = 0.7.
pub fn exp_spectrum_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..SAMPLES)
        .map(|k| {
            let a = random_matrix(&mut rng, 2 + k % 7);
            let (e, _) = expm_pair(&a, 0.7).unwrap();
            let expected: Vec<Complex64> = eigenvalues(&a)
                .unwrap()
                .iter()
                .map(|l| (l * 0.7).exp())
                .collect();
            match_spectra(&eigenvalues(&e).unwrap(), &expected)
        })
        .fold(0.0, f64::max)
}
