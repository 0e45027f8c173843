//! Unified switched-linear converter model.
//!
//! Within each clock period the plant runs stage S1 (`ẋ = A1 x + B1 u`)
//! while the compensator output `y = C x + D u` stays above the ramp `h(t)`,
//! then switches to stage S2 (`ẋ = A2 x + B2 u`) for the rest of the period.
//! The input vector is `u = (vs, vr)`; in current-mode control the second
//! slot carries the current command `i_c`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::matnum::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    Buck,
    Boost,
    /// Built directly from matrices; no builder parameters to vary.
    Generic,
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Topology::Buck => "buck",
            Topology::Boost => "boost",
            Topology::Generic => "generic",
        })
    }
}

/// Power-stage component values, SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerStage {
    pub vs: f64,
    pub inductance: f64,
    pub capacitance: f64,
    pub load: f64,
    /// Inductor series resistance `r`.
    pub parasitic: f64,
    /// Capacitor ESR `Rc`; only the transfer functions use it.
    pub esr: f64,
    pub fs: f64,
}

impl PowerStage {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vs", self.vs),
            ("L", self.inductance),
            ("C", self.capacitance),
            ("R", self.load),
            ("fs", self.fs),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        for (name, v) in [("r", self.parasitic), ("Rc", self.esr)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        1.0 / self.fs
    }

    pub fn omega_s(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.fs
    }

    /// `K = 2L / (R T)`.
    pub fn conduction_parameter(&self) -> f64 {
        2.0 * self.inductance / (self.load * self.period())
    }

    /// `ρ = r / R`.
    pub fn rho(&self) -> f64 {
        self.parasitic / self.load
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlScheme {
    /// `y = kp (vr - vC)`.
    Vmc { kp: f64 },
    /// `y = i_c - i_L`.
    CmcOpen,
    /// `y = kp (vr - vC) - i_L`.
    CmcClosed { kp: f64 },
    /// `y = vr - ki i_L - kv vC`.
    MultiLoop { ki: f64, kv: f64 },
}

impl ControlScheme {
    pub fn name(&self) -> &'static str {
        match self {
            ControlScheme::Vmc { .. } => "vmc",
            ControlScheme::CmcOpen => "cmc_open",
            ControlScheme::CmcClosed { .. } => "cmc_closed",
            ControlScheme::MultiLoop { .. } => "multiloop",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Control {
    pub scheme: ControlScheme,
    /// Reference voltage, or current command `i_c` in CMC.
    pub vr: f64,
}

/// Positive-slope sawtooth `h(t) = offset + amplitude (t mod T) / T`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RampSpec {
    pub offset: f64,
    pub amplitude: f64,
}

impl RampSpec {
    pub fn new(offset: f64, amplitude: f64) -> Result<Self> {
        let r = RampSpec { offset, amplitude };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.offset.is_finite() || !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "ramp amplitude must be finite and non-negative, got {}",
                self.amplitude
            )));
        }
        Ok(())
    }
}

/// Everything a builder needs to regenerate a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Design {
    pub topology: Topology,
    pub power: PowerStage,
    pub control: Control,
    pub ramp: RampSpec,
}

impl Design {
    pub fn build(&self) -> Result<ConverterModel> {
        match self.topology {
            Topology::Buck => build_buck(&self.power, &self.control, &self.ramp),
            Topology::Boost => build_boost(&self.power, &self.control, &self.ramp),
            Topology::Generic => Err(Error::Unsupported("generic designs have no builder".into())),
        }
    }
}

/// Raw matrices for [`ConverterModel::from_parts`].
#[derive(Debug, Clone)]
pub struct ModelParts {
    pub a1: Matrix,
    pub a2: Matrix,
    pub b1: Matrix,
    pub b2: Matrix,
    pub c: Matrix,
    pub d: Matrix,
    pub e1: Matrix,
    pub e2: Matrix,
    pub ramp: RampSpec,
    pub period: f64,
    pub u: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConverterModel {
    a1: Matrix,
    a2: Matrix,
    b1: Matrix,
    b2: Matrix,
    c: Matrix,
    d: Matrix,
    e1: Matrix,
    e2: Matrix,
    ramp: RampSpec,
    period: f64,
    u: [f64; 2],
    topology: Topology,
    design: Option<Design>,
}

impl ConverterModel {
    /// Generic model of any dimension N <= 8.
    pub fn from_parts(parts: ModelParts) -> Result<Self> {
        Self::assemble(parts, Topology::Generic, None)
    }

    fn assemble(p: ModelParts, topology: Topology, design: Option<Design>) -> Result<Self> {
        let n = p.a1.rows();
        let shape = |m: &Matrix, r: usize, c: usize, name: &str| -> Result<()> {
            if m.rows() != r || m.cols() != c {
                return Err(Error::Dimension(format!(
                    "{name} is {}x{}, expected {r}x{c}",
                    m.rows(),
                    m.cols()
                )));
            }
            if !m.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} has non-finite entries"
                )));
            }
            Ok(())
        };
        shape(&p.a1, n, n, "A1")?;
        shape(&p.a2, n, n, "A2")?;
        shape(&p.b1, n, 2, "B1")?;
        shape(&p.b2, n, 2, "B2")?;
        shape(&p.c, 1, n, "C")?;
        shape(&p.d, 1, 2, "D")?;
        shape(&p.e1, 1, n, "E1")?;
        shape(&p.e2, 1, n, "E2")?;
        p.ramp.validate()?;
        if !(p.period.is_finite() && p.period > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "period must be positive, got {}",
                p.period
            )));
        }
        if p.u.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("inputs must be finite".into()));
        }
        let m = ConverterModel {
            a1: p.a1,
            a2: p.a2,
            b1: p.b1,
            b2: p.b2,
            c: p.c,
            d: p.d,
            e1: p.e1,
            e2: p.e2,
            ramp: p.ramp,
            period: p.period,
            u: p.u,
            topology,
            design,
        };
        m.check_topology()?;
        Ok(m)
    }

    fn check_topology(&self) -> Result<()> {
        match self.topology {
            Topology::Buck => {
                let b21_zero = self.b2.column(0).iter().all(|&v| v == 0.0);
                if self.a1 != self.a2 || !b21_zero || self.b1.column(1) != self.b2.column(1) {
                    return Err(Error::InvalidParameter(
                        "buck model requires A1 = A2, B21 = 0 and B12 = B22".into(),
                    ));
                }
            }
            Topology::Boost => {
                if self.b1 != self.b2 {
                    return Err(Error::InvalidParameter(
                        "boost model requires B1 = B2".into(),
                    ));
                }
            }
            Topology::Generic => {}
        }
        Ok(())
    }

    /// True when the buck structure (A1 = A2, B21 = 0, B12 = B22) holds,
    /// whatever the topology tag.
    pub fn has_buck_structure(&self) -> bool {
        self.a1 == self.a2
            && self.b2.column(0).iter().all(|&v| v == 0.0)
            && self.b1.column(1) == self.b2.column(1)
    }

    pub fn has_boost_structure(&self) -> bool {
        self.b1 == self.b2
    }

    pub fn dim(&self) -> usize {
        self.a1.rows()
    }
    pub fn a1(&self) -> &Matrix {
        &self.a1
    }
    pub fn a2(&self) -> &Matrix {
        &self.a2
    }
    pub fn b1(&self) -> &Matrix {
        &self.b1
    }
    pub fn b2(&self) -> &Matrix {
        &self.b2
    }
    pub fn c_row(&self) -> &Matrix {
        &self.c
    }
    pub fn d_row(&self) -> &Matrix {
        &self.d
    }
    pub fn e1(&self) -> &Matrix {
        &self.e1
    }
    pub fn e2(&self) -> &Matrix {
        &self.e2
    }
    pub fn ramp(&self) -> RampSpec {
        self.ramp
    }
    pub fn period(&self) -> f64 {
        self.period
    }
    pub fn omega_s(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.period
    }
    pub fn u(&self) -> [f64; 2] {
        self.u
    }
    pub fn vs(&self) -> f64 {
        self.u[0]
    }
    pub fn vr(&self) -> f64 {
        self.u[1]
    }
    pub fn topology(&self) -> Topology {
        self.topology
    }
    pub fn design(&self) -> Option<&Design> {
        self.design.as_ref()
    }

    /// First column of B1 (the source-voltage input direction in S1).
    pub fn b11(&self) -> Vec<f64> {
        self.b1.column(0)
    }

    pub fn b12(&self) -> Vec<f64> {
        self.b1.column(1)
    }

    /// Ramp slope `ḣ = Vh / T`.
    pub fn hdot(&self) -> f64 {
        self.ramp.amplitude / self.period
    }

    /// `B u` for stage 1 or 2.
    pub fn forcing(&self, stage: Stage) -> Vec<f64> {
        match stage {
            Stage::S1 => self.b1.mul_vec(&self.u),
            Stage::S2 => self.b2.mul_vec(&self.u),
        }
    }

    pub fn generator(&self, stage: Stage) -> &Matrix {
        match stage {
            Stage::S1 => &self.a1,
            Stage::S2 => &self.a2,
        }
    }

    /// State derivative in a stage.
    pub fn slope(&self, stage: Stage, x: &[f64]) -> Vec<f64> {
        let ax = self.generator(stage).mul_vec(x);
        let bu = self.forcing(stage);
        ax.iter().zip(&bu).map(|(a, b)| a + b).collect()
    }

    /// Compensator output `y = C x + D u`.
    pub fn y(&self, x: &[f64]) -> f64 {
        self.c.dot_row(x) + self.d.dot_row(&self.u)
    }

    /// Output voltage `v_o = E1 x`.
    pub fn output(&self, x: &[f64]) -> f64 {
        self.e1.dot_row(x)
    }

    /// Ramp value and slope at time `t`.
    pub fn ramp_at(&self, t: f64) -> (f64, f64) {
        let phase = t.rem_euclid(self.period);
        (
            self.ramp.offset + self.ramp.amplitude * phase / self.period,
            self.hdot(),
        )
    }

    /// Ramp value inside the current period, with `t = T` mapping to the end
    /// of the ramp rather than wrapping to the reset value.
    pub fn ramp_in_period(&self, t: f64) -> f64 {
        self.ramp.offset + self.ramp.amplitude * t / self.period
    }

    pub fn with_vs(&self, vs: f64) -> Result<Self> {
        self.with_param(Param::Vs, vs)
    }

    pub fn with_vr(&self, vr: f64) -> Result<Self> {
        self.with_param(Param::Vr, vr)
    }

    /// Copy of the model with one parameter replaced.
    ///
    /// Source, reference and ramp parameters work on any model; component
    /// and gain parameters need a builder-made model.
    pub fn with_param(&self, param: Param, value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::InvalidParameter(format!("{param} = {value}")));
        }
        if let Some(design) = self.design {
            let mut d = design;
            param.apply(&mut d, value)?;
            return d.build();
        }
        let mut m = self.clone();
        match param {
            Param::Vs => m.u[0] = value,
            Param::Vr => m.u[1] = value,
            Param::RampAmplitude => {
                m.ramp.amplitude = value;
                m.ramp.validate()?;
            }
            Param::RampOffset => m.ramp.offset = value,
            other => {
                return Err(Error::Unsupported(format!(
                    "parameter {other} needs a model made by a builder"
                )))
            }
        }
        Ok(m)
    }

    /// Current value of a parameter.
    pub fn param(&self, param: Param) -> Result<f64> {
        match (param, self.design.as_ref()) {
            (Param::Vs, _) => Ok(self.u[0]),
            (Param::Vr, _) => Ok(self.u[1]),
            (Param::RampAmplitude, _) => Ok(self.ramp.amplitude),
            (Param::RampOffset, _) => Ok(self.ramp.offset),
            (p, Some(d)) => p.read(d),
            (p, None) => Err(Error::Unsupported(format!(
                "parameter {p} needs a model made by a builder"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    S1,
    S2,
}

/// Model parameters a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    Vs,
    Vr,
    RampAmplitude,
    RampOffset,
    Inductance,
    Capacitance,
    Load,
    Parasitic,
    Esr,
    Fs,
    Kp,
    Ki,
    Kv,
}

impl Param {
    pub const ALL: [Param; 13] = [
        Param::Vs,
        Param::Vr,
        Param::RampAmplitude,
        Param::RampOffset,
        Param::Inductance,
        Param::Capacitance,
        Param::Load,
        Param::Parasitic,
        Param::Esr,
        Param::Fs,
        Param::Kp,
        Param::Ki,
        Param::Kv,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Param::Vs => "vs",
            Param::Vr => "vr",
            Param::RampAmplitude => "vh",
            Param::RampOffset => "h0",
            Param::Inductance => "L",
            Param::Capacitance => "C",
            Param::Load => "R",
            Param::Parasitic => "r",
            Param::Esr => "Rc",
            Param::Fs => "fs",
            Param::Kp => "kp",
            Param::Ki => "ki",
            Param::Kv => "kv",
        }
    }

    fn apply(&self, d: &mut Design, v: f64) -> Result<()> {
        let scheme = d.control.scheme.name();
        let missing = |p: &Param| {
            Error::Unsupported(format!(
                "{} is not a parameter of the {scheme} scheme",
                p.name()
            ))
        };
        match self {
            Param::Vs => d.power.vs = v,
            Param::Vr => d.control.vr = v,
            Param::RampAmplitude => d.ramp.amplitude = v,
            Param::RampOffset => d.ramp.offset = v,
            Param::Inductance => d.power.inductance = v,
            Param::Capacitance => d.power.capacitance = v,
            Param::Load => d.power.load = v,
            Param::Parasitic => d.power.parasitic = v,
            Param::Esr => d.power.esr = v,
            Param::Fs => d.power.fs = v,
            Param::Kp => match &mut d.control.scheme {
                ControlScheme::Vmc { kp } | ControlScheme::CmcClosed { kp } => *kp = v,
                _ => return Err(missing(self)),
            },
            Param::Ki => match &mut d.control.scheme {
                ControlScheme::MultiLoop { ki, .. } => *ki = v,
                _ => return Err(missing(self)),
            },
            Param::Kv => match &mut d.control.scheme {
                ControlScheme::MultiLoop { kv, .. } => *kv = v,
                _ => return Err(missing(self)),
            },
        }
        Ok(())
    }

    fn read(&self, d: &Design) -> Result<f64> {
        let v = match (self, d.control.scheme) {
            (Param::Vs, _) => d.power.vs,
            (Param::Vr, _) => d.control.vr,
            (Param::RampAmplitude, _) => d.ramp.amplitude,
            (Param::RampOffset, _) => d.ramp.offset,
            (Param::Inductance, _) => d.power.inductance,
            (Param::Capacitance, _) => d.power.capacitance,
            (Param::Load, _) => d.power.load,
            (Param::Parasitic, _) => d.power.parasitic,
            (Param::Esr, _) => d.power.esr,
            (Param::Fs, _) => d.power.fs,
            (Param::Kp, ControlScheme::Vmc { kp } | ControlScheme::CmcClosed { kp }) => kp,
            (Param::Ki, ControlScheme::MultiLoop { ki, .. }) => ki,
            (Param::Kv, ControlScheme::MultiLoop { kv, .. }) => kv,
            (p, s) => {
                return Err(Error::Unsupported(format!(
                    "{} is not a parameter of the {} scheme",
                    p.name(),
                    s.name()
                )))
            }
        };
        Ok(v)
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Param {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let alias = match s {
            "ic" | "i_c" | "v_r" => "vr",
            "v_s" => "vs",
            "Vh" | "amplitude" => "vh",
            "offset" => "h0",
            other => other,
        };
        Param::ALL
            .iter()
            .copied()
            .find(|p| p.name() == alias)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown parameter '{s}'")))
    }
}

fn control_rows(scheme: ControlScheme) -> (Matrix, Matrix) {
    let (c, d) = match scheme {
        ControlScheme::Vmc { kp } => ([0.0, -kp], [0.0, kp]),
        ControlScheme::CmcOpen => ([-1.0, 0.0], [0.0, 1.0]),
        ControlScheme::CmcClosed { kp } => ([-1.0, -kp], [0.0, kp]),
        ControlScheme::MultiLoop { ki, kv } => ([-ki, -kv], [0.0, 1.0]),
    };
    (Matrix::row_vector(&c), Matrix::row_vector(&d))
}

fn check_gains(scheme: ControlScheme) -> Result<()> {
    let gains: &[f64] = match &scheme {
        ControlScheme::Vmc { kp } | ControlScheme::CmcClosed { kp } => &[*kp],
        ControlScheme::MultiLoop { ki, kv } => &[*ki, *kv],
        ControlScheme::CmcOpen => &[],
    };
    if gains.iter().any(|g| !g.is_finite()) {
        return Err(Error::InvalidParameter(
            "controller gains must be finite".into(),
        ));
    }
    Ok(())
}

/// Buck converter with state `(i_L, v_C)`.
pub fn build_buck(ps: &PowerStage, ctl: &Control, ramp: &RampSpec) -> Result<ConverterModel> {
    ps.validate()?;
    ramp.validate()?;
    check_gains(ctl.scheme)?;
    if let ControlScheme::CmcClosed { .. } = ctl.scheme {
        return Err(Error::Unsupported(
            "current-mode control with closed voltage loop has no buck state model".into(),
        ));
    }
    if ps.parasitic != 0.0 {
        return Err(Error::Unsupported(
            "buck state model does not include the inductor resistance r".into(),
        ));
    }
    let (l, c, r) = (ps.inductance, ps.capacitance, ps.load);
    let a = Matrix::from_rows(&[[0.0, -1.0 / l], [1.0 / c, -1.0 / (r * c)]]);
    let b1 = Matrix::from_rows(&[[1.0 / l, 0.0], [0.0, 0.0]]);
    let b2 = Matrix::zeros(2, 2);
    let (crow, drow) = control_rows(ctl.scheme);
    let e = Matrix::row_vector(&[0.0, 1.0]);
    let design = Design {
        topology: Topology::Buck,
        power: *ps,
        control: *ctl,
        ramp: *ramp,
    };
    ConverterModel::assemble(
        ModelParts {
            a1: a.clone(),
            a2: a,
            b1,
            b2,
            c: crow,
            d: drow,
            e1: e.clone(),
            e2: e,
            ramp: *ramp,
            period: ps.period(),
            u: [ps.vs, ctl.vr],
        },
        Topology::Buck,
        Some(design),
    )
}

/// Boost converter with state `(i_L, v_C)` and inductor resistance `r`.
pub fn build_boost(ps: &PowerStage, ctl: &Control, ramp: &RampSpec) -> Result<ConverterModel> {
    ps.validate()?;
    ramp.validate()?;
    check_gains(ctl.scheme)?;
    let (l, c, r, rl) = (ps.inductance, ps.capacitance, ps.load, ps.parasitic);
    let a1 = Matrix::from_rows(&[[-rl / l, 0.0], [0.0, -1.0 / (r * c)]]);
    let a2 = Matrix::from_rows(&[[-rl / l, -1.0 / l], [1.0 / c, -1.0 / (r * c)]]);
    let b = Matrix::from_rows(&[[1.0 / l, 0.0], [0.0, 0.0]]);
    let (crow, drow) = control_rows(ctl.scheme);
    let e = Matrix::row_vector(&[0.0, 1.0]);
    let design = Design {
        topology: Topology::Boost,
        power: *ps,
        control: *ctl,
        ramp: *ramp,
    };
    ConverterModel::assemble(
        ModelParts {
            a1,
            a2,
            b1: b.clone(),
            b2: b,
            c: crow,
            d: drow,
            e1: e.clone(),
            e2: e,
            ramp: *ramp,
            period: ps.period(),
            u: [ps.vs, ctl.vr],
        },
        Topology::Boost,
        Some(design),
    )
}
