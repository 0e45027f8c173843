//! Exact T-periodic steady states and the duty-time residual whose roots
//! are the periodic solutions.

use crate::error::{Error, Result};
use crate::matnum::{bracketed_roots, expm_pair, Matrix, DEFAULT_GRID};
use crate::model::{ConverterModel, Stage};

/// Fraction of the period excluded at each end of the duty scan.
pub const DUTY_MARGIN: f64 = 1e-4;

/// Stage propagators for one switching instant `d`.
#[derive(Debug, Clone)]
pub struct Propagators {
    /// `e^{A1 d}`
    pub e1: Matrix,
    /// `∫_0^d e^{A1 σ} dσ`
    pub psi1: Matrix,
    /// `e^{A2 (T-d)}`
    pub e2: Matrix,
    /// `∫_0^{T-d} e^{A2 σ} dσ`
    pub psi2: Matrix,
}

impl Propagators {
    pub fn new(m: &ConverterModel, d: f64) -> Result<Self> {
        check_duty_time(m, d)?;
        let (e1, psi1) = expm_pair(m.a1(), d)?;
        let (e2, psi2) = expm_pair(m.a2(), m.period() - d)?;
        Ok(Propagators { e1, psi1, e2, psi2 })
    }

    /// Monodromy of the open-loop cycle seen from the switching instant,
    /// `e^{A1 d} e^{A2 (T-d)}`.
    pub fn cycle_from_switch(&self) -> Matrix {
        &self.e1 * &self.e2
    }

    /// Monodromy seen from the clock instant, `e^{A2 (T-d)} e^{A1 d}`.
    pub fn cycle_from_clock(&self) -> Matrix {
        &self.e2 * &self.e1
    }
}

fn check_duty_time(m: &ConverterModel, d: f64) -> Result<()> {
    if !(d >= 0.0 && d <= m.period()) {
        return Err(Error::InvalidParameter(format!(
            "duty time {d:e} outside [0, {:e}]",
            m.period()
        )));
    }
    Ok(())
}

/// A candidate T-periodic solution switching at `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicOrbit {
    pub d: f64,
    pub duty: f64,
    /// State at the clock instant, `x0(0)`.
    pub x_clock: Vec<f64>,
    /// State at the switching instant, `x0(d)`.
    pub x_switch: Vec<f64>,
    /// `A1 x0(d) + B1 u`
    pub slope_before: Vec<f64>,
    /// `A2 x0(d) + B2 u`
    pub slope_after: Vec<f64>,
    /// Compensator output at the switching instant.
    pub y_switch: f64,
    pub residual: f64,
}

impl PeriodicOrbit {
    /// Scale for tolerance checks in the units of `y`.
    pub fn scale(&self, m: &ConverterModel) -> f64 {
        self.y_switch.abs().max(m.ramp().amplitude.abs()).max(1.0)
    }
}

/// `x0(d)` from the general two-stage boundary condition.
pub fn orbit_state_at_d(m: &ConverterModel, d: f64) -> Result<Vec<f64>> {
    let p = Propagators::new(m, d)?;
    orbit_state_with(m, &p, d)
}

pub(crate) fn orbit_state_with(m: &ConverterModel, p: &Propagators, d: f64) -> Result<Vec<f64>> {
    let n = m.dim();
    let bu1 = m.forcing(Stage::S1);
    let bu2 = m.forcing(Stage::S2);
    let drift2 = p.psi2.mul_vec(&bu2);
    let lhs = &Matrix::identity(n) - &p.cycle_from_switch();
    let rhs: Vec<f64> =
        p.e1.mul_vec(&drift2)
            .iter()
            .zip(p.psi1.mul_vec(&bu1))
            .map(|(a, b)| a + b)
            .collect();
    lhs.solve_vec(&rhs).map_err(|_| Error::DegenerateOrbit(d))
}

/// `x0(d)` from the buck specialisation
/// `(I - e^{A1 T})^{-1} A1^{-1}(e^{A1 d} - I) B11 vs - A1^{-1} B12 vr`.
pub fn orbit_state_buck(m: &ConverterModel, d: f64) -> Result<Vec<f64>> {
    if !m.has_buck_structure() {
        return Err(Error::Unsupported(
            "buck orbit form needs A1 = A2, B21 = 0, B12 = B22".into(),
        ));
    }
    check_duty_time(m, d)?;
    let n = m.dim();
    let (_, psi_d) = expm_pair(m.a1(), d)?;
    let (e_t, _) = expm_pair(m.a1(), m.period())?;
    let lhs = &Matrix::identity(n) - &e_t;
    let b11: Vec<f64> = m.b11().iter().map(|b| b * m.vs()).collect();
    let first = lhs
        .solve_vec(&psi_d.mul_vec(&b11))
        .map_err(|_| Error::DegenerateOrbit(d))?;
    let b12: Vec<f64> = m.b12().iter().map(|b| b * m.vr()).collect();
    let second = m
        .a1()
        .solve_vec(&b12)
        .map_err(|_| Error::Singular("buck A1"))?;
    Ok(first.iter().zip(&second).map(|(a, b)| a - b).collect())
}

/// `X(d)` of the boost specialisation, so that `x0(d) = X(d) B1 u`.
pub fn boost_state_operator(m: &ConverterModel, d: f64) -> Result<Matrix> {
    if !m.has_boost_structure() {
        return Err(Error::Unsupported("boost orbit form needs B1 = B2".into()));
    }
    let p = Propagators::new(m, d)?;
    boost_state_operator_with(m, &p, d)
}

pub(crate) fn boost_state_operator_with(
    m: &ConverterModel,
    p: &Propagators,
    d: f64,
) -> Result<Matrix> {
    let n = m.dim();
    let lhs = &Matrix::identity(n) - &p.cycle_from_switch();
    let rhs = &(&p.e1 * &p.psi2) + &p.psi1;
    lhs.solve(&rhs).map_err(|_| Error::DegenerateOrbit(d))
}

pub fn orbit_state_boost(m: &ConverterModel, d: f64) -> Result<Vec<f64>> {
    Ok(boost_state_operator(m, d)?.mul_vec(&m.forcing(Stage::S1)))
}

/// Steady-state residual `C x0(d) + D u - h(d)`; its roots are the
/// T-periodic solutions.
pub fn residual(m: &ConverterModel, d: f64) -> Result<f64> {
    let x = orbit_state_at_d(m, d)?;
    Ok(m.y(&x) - m.ramp_in_period(d))
}

/// Full orbit record at duty time `d`, whether or not `d` is a root.
pub fn orbit_at(m: &ConverterModel, d: f64) -> Result<PeriodicOrbit> {
    let p = Propagators::new(m, d)?;
    orbit_with(m, &p, d)
}

pub(crate) fn orbit_with(m: &ConverterModel, p: &Propagators, d: f64) -> Result<PeriodicOrbit> {
    let x_switch = orbit_state_with(m, p, d)?;
    let bu2 = m.forcing(Stage::S2);
    let x_clock: Vec<f64> =
        p.e2.mul_vec(&x_switch)
            .iter()
            .zip(p.psi2.mul_vec(&bu2))
            .map(|(a, b)| a + b)
            .collect();
    let y_switch = m.y(&x_switch);
    Ok(PeriodicOrbit {
        d,
        duty: d / m.period(),
        slope_before: m.slope(Stage::S1, &x_switch),
        slope_after: m.slope(Stage::S2, &x_switch),
        residual: y_switch - m.ramp_in_period(d),
        y_switch,
        x_switch,
        x_clock,
    })
}

/// Every periodic solution isolated by a sign change of the residual on
/// `d ∈ (εT, (1-ε)T)`, ascending in `d`.
pub fn periodic_solutions(m: &ConverterModel) -> Result<Vec<PeriodicOrbit>> {
    periodic_solutions_with(m, DEFAULT_GRID, DUTY_MARGIN)
}

pub fn periodic_solutions_with(
    m: &ConverterModel,
    n_grid: usize,
    margin: f64,
) -> Result<Vec<PeriodicOrbit>> {
    let t = m.period();
    let roots = bracketed_roots(
        |d| residual(m, d),
        margin * t,
        (1.0 - margin) * t,
        n_grid,
        1e-14 * t,
    )?;
    roots.into_iter().map(|d| orbit_at(m, d)).collect()
}

/// Buck steady-state SNB condition `T C (I - e^{A1 T})^{-1} e^{A1 d} B11 vs - Vh`,
/// which equals `T ∂r/∂d`.
pub fn buck_steadystate_snb_residual(m: &ConverterModel, d: f64) -> Result<f64> {
    if !m.has_buck_structure() {
        return Err(Error::Unsupported(
            "steady-state SNB closed form needs the buck structure".into(),
        ));
    }
    Ok(m.period() * buck_slope_term(m, d)? - m.ramp().amplitude)
}

/// `C (I - e^{A1 T})^{-1} e^{A1 d} B11 vs`.
pub(crate) fn buck_slope_term(m: &ConverterModel, d: f64) -> Result<f64> {
    check_duty_time(m, d)?;
    let n = m.dim();
    let (e_d, _) = expm_pair(m.a1(), d)?;
    let (e_t, _) = expm_pair(m.a1(), m.period())?;
    let lhs = &Matrix::identity(n) - &e_t;
    let v: Vec<f64> = e_d.mul_vec(&m.b11()).iter().map(|b| b * m.vs()).collect();
    let z = lhs.solve_vec(&v).map_err(|_| Error::DegenerateOrbit(d))?;
    Ok(m.c_row().dot_row(&z))
}

/// Propagate one stage for `dt` seconds from `x`.
pub fn propagate(m: &ConverterModel, stage: Stage, x: &[f64], dt: f64) -> Result<Vec<f64>> {
    let (e, psi) = expm_pair(m.generator(stage), dt)?;
    let bu = m.forcing(stage);
    Ok(e.mul_vec(x)
        .iter()
        .zip(psi.mul_vec(&bu))
        .map(|(a, b)| a + b)
        .collect())
}

/// Equilibrium of one stage that never meets the ramp: stage S1 with `y`
/// at or above the ramp maximum (always on), or stage S2 with `y` at or
/// below the ramp minimum (always off).
#[derive(Debug, Clone, PartialEq)]
pub struct SaturatedSolution {
    pub stage: Stage,
    pub x: Vec<f64>,
}

pub fn saturated_solutions(m: &ConverterModel) -> Vec<SaturatedSolution> {
    let ramp = m.ramp();
    let mut out = Vec::new();
    for stage in [Stage::S1, Stage::S2] {
        let b: Vec<f64> = m.forcing(stage).iter().map(|v| -v).collect();
        let Ok(x) = m.generator(stage).solve_vec(&b) else {
            continue;
        };
        let y = m.y(&x);
        let holds = match stage {
            Stage::S1 => y >= ramp.offset + ramp.amplitude,
            Stage::S2 => y <= ramp.offset,
        };
        if holds && x.iter().all(|v| v.is_finite()) {
            out.push(SaturatedSolution { stage, x });
        }
    }
    out
}
