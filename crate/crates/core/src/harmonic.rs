//! Harmonic-balance and loop-gain SNB prediction for the buck converter.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matnum::bracketed_roots;
use crate::model::{ControlScheme, ConverterModel, PowerStage, Topology};
use crate::plot::{DutyGrid, PlotKind, PlotSeries};
use crate::steady::{self, DUTY_MARGIN};

/// Rational function of `s`, coefficients in ascending powers.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

fn poly_eval(c: &[f64], s: Complex64) -> Complex64 {
    c.iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &k| acc * s + k)
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len().max(b.len())];
    for (i, x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, y) in b.iter().enumerate() {
        out[i] += y;
    }
    out
}

impl TransferFunction {
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        if num.is_empty() || den.iter().all(|&c| c == 0.0) {
            return Err(Error::InvalidParameter(
                "transfer function needs a numerator and a nonzero denominator".into(),
            ));
        }
        if num.iter().chain(&den).any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter(
                "non-finite transfer-function coefficient".into(),
            ));
        }
        Ok(TransferFunction { num, den })
    }

    pub fn constant(k: f64) -> Self {
        TransferFunction {
            num: vec![k],
            den: vec![1.0],
        }
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        poly_eval(&self.num, s) / poly_eval(&self.den, s)
    }

    /// Value on the imaginary axis, `G(jω)`.
    pub fn at_freq(&self, omega: f64) -> Complex64 {
        self.eval(Complex64::new(0.0, omega))
    }

    pub fn dc_gain(&self) -> f64 {
        self.num[0] / self.den[0]
    }

    pub fn mul(&self, other: &TransferFunction) -> TransferFunction {
        TransferFunction {
            num: poly_mul(&self.num, &other.num),
            den: poly_mul(&self.den, &other.den),
        }
    }

    pub fn add(&self, other: &TransferFunction) -> TransferFunction {
        TransferFunction {
            num: poly_add(
                &poly_mul(&self.num, &other.den),
                &poly_mul(&other.num, &self.den),
            ),
            den: poly_mul(&self.den, &other.den),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicConfig {
    pub n_harmonics: usize,
    /// Stop early once a term is smaller than this fraction of the sum.
    pub tail_tol: f64,
}

impl Default for HarmonicConfig {
    fn default() -> Self {
        HarmonicConfig {
            n_harmonics: 200,
            tail_tol: 1e-9,
        }
    }
}

impl HarmonicConfig {
    pub fn with_harmonics(n: usize) -> Self {
        HarmonicConfig {
            n_harmonics: n,
            ..Default::default()
        }
    }
}

/// Fourier coefficient `c_n` of the switch-node voltage, a pulse of height
/// `vs` and width `D T`.
pub fn vd_fourier(vs: f64, duty: f64, n: i64) -> Complex64 {
    if n == 0 {
        return Complex64::new(vs * duty, 0.0);
    }
    let nf = n as f64;
    let e = Complex64::from_polar(1.0, -2.0 * PI * nf * duty);
    (Complex64::new(1.0, 0.0) - e) * vs / Complex64::new(0.0, 2.0 * PI * nf)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuckTf {
    /// Switch-node voltage to output voltage.
    Gv,
    /// Switch-node voltage to inductor current.
    Gi,
}

/// Buck power-stage transfer functions including the capacitor ESR.
pub fn buck_tf(ps: &PowerStage, which: BuckTf) -> TransferFunction {
    let (l, c, r, rc) = (ps.inductance, ps.capacitance, ps.load, ps.esr);
    let den = vec![1.0, l / r + rc * c, l * c * (1.0 + rc / r)];
    let num = match which {
        BuckTf::Gv => vec![1.0, rc * c],
        BuckTf::Gi => vec![1.0 / r, (1.0 + rc / r) * c],
    };
    TransferFunction { num, den }
}

/// Harmonic-balance gain from the switch-node voltage to the compensator
/// output. `gc` overrides the proportional compensator.
pub fn hb_gain(
    ps: &PowerStage,
    scheme: ControlScheme,
    gc: Option<&TransferFunction>,
) -> Result<TransferFunction> {
    let gv = buck_tf(ps, BuckTf::Gv);
    let gi = buck_tf(ps, BuckTf::Gi);
    match scheme {
        ControlScheme::Vmc { kp } => {
            let c = gc
                .cloned()
                .unwrap_or_else(|| TransferFunction::constant(kp));
            Ok(c.mul(&gv))
        }
        ControlScheme::CmcOpen => Ok(gi),
        ControlScheme::CmcClosed { kp } => {
            let c = gc
                .cloned()
                .unwrap_or_else(|| TransferFunction::constant(kp));
            Ok(c.mul(&gv).add(&gi))
        }
        ControlScheme::MultiLoop { .. } => Err(Error::Unsupported(
            "no harmonic-balance gain is defined for multi-loop control".into(),
        )),
    }
}

fn check_duty(duty: f64) -> Result<()> {
    if !(duty > 0.0 && duty < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "duty ratio {duty} outside (0, 1)"
        )));
    }
    Ok(())
}

/// `H(D) = Σ_{n≥1} e^{j2πnD} G(jnωs)`, truncated per `cfg`.
pub fn h_value(g: &TransferFunction, duty: f64, omega_s: f64, cfg: &HarmonicConfig) -> Complex64 {
    let mut sum = Complex64::new(0.0, 0.0);
    for n in 1..=cfg.n_harmonics.max(1) {
        let gn = g.at_freq(n as f64 * omega_s);
        let term = Complex64::from_polar(1.0, 2.0 * PI * n as f64 * duty) * gn;
        sum += term;
        if n > 1 && gn.norm() < cfg.tail_tol * sum.norm() {
            break;
        }
    }
    sum
}

/// `G(0) + 2 Re Σ_{n≥1} e^{j2πnD} G(jnωs)`.
pub fn hb_sum(g: &TransferFunction, duty: f64, omega_s: f64, cfg: &HarmonicConfig) -> Result<f64> {
    check_duty(duty)?;
    Ok(g.dc_gain() + 2.0 * h_value(g, duty, omega_s, cfg).re)
}

/// The pieces a harmonic analysis of one buck model needs.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicSetup {
    pub g: TransferFunction,
    pub vs: f64,
    pub vh: f64,
    pub omega_s: f64,
    pub period: f64,
}

impl HarmonicSetup {
    pub fn from_model(m: &ConverterModel, gc: Option<&TransferFunction>) -> Result<Self> {
        let d = m.design().ok_or_else(|| {
            Error::Unsupported("harmonic balance needs a builder-made model".into())
        })?;
        if d.topology != Topology::Buck {
            return Err(Error::Unsupported(format!(
                "harmonic balance is derived for the buck only, not the {}",
                d.topology
            )));
        }
        Ok(HarmonicSetup {
            g: hb_gain(&d.power, d.control.scheme, gc)?,
            vs: d.power.vs,
            vh: d.ramp.amplitude,
            omega_s: d.power.omega_s(),
            period: d.power.period(),
        })
    }

    pub fn hb_sum(&self, duty: f64, cfg: &HarmonicConfig) -> Result<f64> {
        hb_sum(&self.g, duty, self.omega_s, cfg)
    }

    /// Harmonic-balance SNB residual `vs · hb_sum + Vh`.
    pub fn residual(&self, duty: f64, cfg: &HarmonicConfig) -> Result<f64> {
        Ok(self.vs * self.hb_sum(duty, cfg)? + self.vh)
    }

    /// Source voltage that puts the SNB at `duty`.
    pub fn critical_vs(&self, duty: f64, cfg: &HarmonicConfig) -> Result<f64> {
        let s = self.hb_sum(duty, cfg)?;
        if s == 0.0 {
            return Err(Error::NoCriticalVs(duty));
        }
        Ok(-self.vh / s)
    }

    /// Roots of the residual on `(ε, 1-ε)`.
    pub fn snb_duties(&self, cfg: &HarmonicConfig, n_grid: usize) -> Result<Vec<f64>> {
        bracketed_roots(
            |x| self.residual(x, cfg),
            DUTY_MARGIN,
            1.0 - DUTY_MARGIN,
            n_grid,
            1e-13,
        )
    }

    /// Re H against `-(Vh + vs G(0)) / (2 vs)`, with Im H and the
    /// first-harmonic approximation `Re[e^{j2πD} G(jωs)]` alongside.
    pub fn h_plot(&self, grid: &DutyGrid, cfg: &HarmonicConfig) -> PlotSeries {
        let reference = -(self.vh + self.vs * self.g.dc_gain()) / (2.0 * self.vs);
        let mut s = PlotSeries::sample(PlotKind::H, grid, reference, |x| {
            check_duty(x)?;
            Ok(h_value(&self.g, x, self.omega_s, cfg).re)
        });
        s.imag = Some(
            s.grid
                .iter()
                .map(|&x| h_value(&self.g, x, self.omega_s, cfg).im)
                .collect(),
        );
        let g1 = self.g.at_freq(self.omega_s);
        s.companion = Some(
            s.grid
                .iter()
                .map(|&x| (Complex64::from_polar(1.0, 2.0 * PI * x) * g1).re)
                .collect(),
        );
        s
    }

    pub fn hb_plot(&self, grid: &DutyGrid, cfg: &HarmonicConfig) -> PlotSeries {
        PlotSeries::sample(PlotKind::HbResidual, grid, 0.0, |x| self.residual(x, cfg))
    }

    /// L1 (only with a ramp) and L2 plots.
    pub fn l_plots(
        &self,
        grid: &DutyGrid,
        cfg: &HarmonicConfig,
    ) -> (Option<PlotSeries>, PlotSeries) {
        let l2 = PlotSeries::sample(PlotKind::L2, grid, -self.vh / self.vs, |x| {
            self.hb_sum(x, cfg)
        });
        let l1 = (self.vh > 0.0).then(|| PlotSeries {
            kind: PlotKind::L1,
            grid: l2.grid.clone(),
            values: l2.values.iter().map(|v| v * self.vs / self.vh).collect(),
            imag: None,
            companion: None,
            reference_level: -1.0,
            gaps: l2.gaps.clone(),
        });
        (l1, l2)
    }
}

/// Exact matrix form of the L2 plot, `-T C (I - e^{A1 T})^{-1} e^{A1 d} B11`.
pub fn l2_matrix_form(m: &ConverterModel, duty: f64) -> Result<f64> {
    check_duty(duty)?;
    if !m.has_buck_structure() {
        return Err(Error::Unsupported(
            "the L2 matrix form needs the buck structure".into(),
        ));
    }
    Ok(-m.period() * steady::buck_slope_term(m, duty * m.period())? / m.vs())
}
