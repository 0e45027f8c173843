//! State-space averaged model: equilibria, the averaged closed loop and
//! the averaged SNB condition with its boost closed forms.

use crate::error::{Error, Result};
use crate::matnum::{bracketed_roots, Matrix, DEFAULT_GRID};
use crate::model::{ControlScheme, ConverterModel, Topology};
use crate::plot::{DutyGrid, PlotKind, PlotSeries};
use crate::sdstab::SnbDuty;
use crate::steady::DUTY_MARGIN;

/// Relative agreement demanded between the general averaged residual and
/// its scheme-specialised forms.
pub const AVG_FORM_AGREEMENT: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct AveragedModel {
    pub duty: f64,
    /// `D A1 + (1-D) A2`
    pub a: Matrix,
    /// `D B1 + (1-D) B2`
    pub b: Matrix,
    /// Equilibrium `-A^{-1} B u`.
    pub x: Vec<f64>,
}

impl AveragedModel {
    pub fn new(m: &ConverterModel, duty: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&duty) {
            return Err(Error::InvalidParameter(format!(
                "duty ratio {duty} outside [0, 1]"
            )));
        }
        let a = &m.a1().scale(duty) + &m.a2().scale(1.0 - duty);
        let b = &m.b1().scale(duty) + &m.b2().scale(1.0 - duty);
        let bu = b.mul_vec(&m.u());
        let z = a
            .solve_vec(&bu)
            .map_err(|_| Error::Singular("averaged state matrix"))?;
        let x = z.iter().map(|v| -v).collect();
        Ok(AveragedModel { duty, a, b, x })
    }

    /// `(A1 - A2) X + (B1 - B2) u`, the duty-ratio input direction.
    pub fn duty_direction(&self, m: &ConverterModel) -> Vec<f64> {
        let ax = (m.a1() - m.a2()).mul_vec(&self.x);
        let bu = (m.b1() - m.b2()).mul_vec(&m.u());
        ax.iter().zip(bu).map(|(a, b)| a + b).collect()
    }
}

pub fn avg_equilibrium(m: &ConverterModel, duty: f64) -> Result<Vec<f64>> {
    Ok(AveragedModel::new(m, duty)?.x)
}

/// Averaged closed-loop matrix `A + ((A1-A2)X + (B1-B2)u) C / Vh`.
pub fn avg_closed_loop(m: &ConverterModel, duty: f64) -> Result<Matrix> {
    let vh = m.ramp().amplitude;
    if vh == 0.0 {
        return Err(Error::Unsupported(
            "averaged loop gain is infinite without a ramp (Vh = 0)".into(),
        ));
    }
    let avg = AveragedModel::new(m, duty)?;
    let dir = avg.duty_direction(m);
    let c = m.c_row().as_slice();
    let n = m.dim();
    let mut phi = avg.a.clone();
    for i in 0..n {
        for j in 0..n {
            phi[(i, j)] += dir[i] * c[j] / vh;
        }
    }
    Ok(phi)
}

/// Averaged SNB condition `Vh + C A^{-1}((A1-A2)X + (B1-B2)u)`.
pub fn avg_snb_residual(m: &ConverterModel, duty: f64) -> Result<f64> {
    let (value, scale) = general_residual(m, duty)?;
    for (name, form) in specialised_forms(m, duty)? {
        if (form - value).abs() > AVG_FORM_AGREEMENT * scale {
            return Err(Error::CrossCheck(format!(
                "averaged residual at D = {duty} is {value} but the {name} form gives {form}"
            )));
        }
    }
    Ok(value)
}

fn general_residual(m: &ConverterModel, duty: f64) -> Result<(f64, f64)> {
    let avg = AveragedModel::new(m, duty)?;
    let dir = avg.duty_direction(m);
    let z = avg
        .a
        .solve_vec(&dir)
        .map_err(|_| Error::Singular("averaged state matrix"))?;
    let term = m.c_row().dot_row(&z);
    let vh = m.ramp().amplitude;
    Ok((vh + term, vh.abs().max(term.abs()).max(f64::MIN_POSITIVE)))
}

/// Independent closed-form evaluations of the averaged residual, each
/// rescaled back to the residual's units.
fn specialised_forms(m: &ConverterModel, duty: f64) -> Result<Vec<(&'static str, f64)>> {
    let mut out = Vec::new();
    let vh = m.ramp().amplitude;
    if m.has_buck_structure() {
        let z = m
            .a1()
            .solve_vec(&m.b11())
            .map_err(|_| Error::Singular("buck A1"))?;
        out.push(("buck", vh + m.c_row().dot_row(&z) * m.vs()));
    }
    let Some(design) = m.design() else {
        return Ok(out);
    };
    if design.topology != Topology::Boost {
        return Ok(out);
    }
    let ps = design.power;
    let w = 1.0 - duty;
    let rho = ps.rho();
    match design.control.scheme {
        ControlScheme::Vmc { kp } if vh > 0.0 => {
            // (ρ + w²)² + κ vs (w² - ρ) = residual (ρ + w²)² / Vh
            let kappa = kp / vh;
            let g = rho + w * w;
            let quartic = g * g + kappa * ps.vs * (w * w - rho);
            out.push(("boost VMC quartic", quartic * vh / (g * g)));
        }
        ControlScheme::MultiLoop { ki, kv } if ps.parasitic == 0.0 && w > 0.0 => {
            // (Vh/vs) w² + 2 ki/(R w) + kv = residual w² / vs
            let f = vh / ps.vs * w * w + 2.0 * ki / (ps.load * w) + kv;
            out.push(("boost multi-loop", f * ps.vs / (w * w)));
        }
        _ => {}
    }
    Ok(out)
}

/// Duty ratios in `(ε, 1-ε)` where the averaged residual changes sign.
pub fn avg_snb_duties(m: &ConverterModel, n_grid: usize) -> Result<Vec<f64>> {
    bracketed_roots(
        |x| avg_snb_residual(m, x),
        DUTY_MARGIN,
        1.0 - DUTY_MARGIN,
        n_grid,
        1e-13,
    )
}

/// Averaged multi-loop boost condition `(Vh/vs) w² + 2ki/(R w) + kv = 0`
/// with `w = 1 - D`, solved as the cubic `(Vh/vs) w³ + kv w + 2ki/R = 0`.
/// All roots with `D ∈ (0, 1)` are returned, smallest D first.
pub fn boost_multiloop_avg_duty(vh: f64, vs: f64, ki: f64, kv: f64, load: f64) -> Result<SnbDuty> {
    if !(load > 0.0 && vs > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need R > 0 and vs > 0, got R = {load}, vs = {vs}"
        )));
    }
    if ki > 0.0 && kv > 0.0 && vh >= 0.0 {
        return Ok(SnbDuty::NoSnb(
            "ki and kv are both positive, so the condition cannot be met for D < 1".into(),
        ));
    }
    let cubic = |w: f64| Ok(vh / vs * w * w * w + kv * w + 2.0 * ki / load);
    let ws = bracketed_roots(cubic, 1e-9, 1.0 - 1e-9, DEFAULT_GRID, 1e-15)?;
    let mut ds: Vec<f64> = ws.into_iter().map(|w| 1.0 - w).collect();
    ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if ds.is_empty() {
        Ok(SnbDuty::NoSnb(
            "the cubic has no root with 0 < D < 1".into(),
        ))
    } else {
        Ok(SnbDuty::At(ds))
    }
}

/// Averaged residual sampled on a duty grid, compared against zero.
pub fn avg_plot(m: &ConverterModel, grid: &DutyGrid) -> PlotSeries {
    PlotSeries::sample(PlotKind::AvgResidual, grid, 0.0, |x| avg_snb_residual(m, x))
}
