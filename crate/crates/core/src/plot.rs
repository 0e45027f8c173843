//! Duty-ratio grids and the sampled diagnostic curves evaluated on them.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Uniform grid of duty ratios written `lo:hi:step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DutyGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl DutyGrid {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        let g = DutyGrid { lo, hi, step };
        if !(lo > 0.0 && hi < 1.0 && lo <= hi && step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "duty grid {g} must satisfy 0 < lo <= hi < 1 and step > 0"
            )));
        }
        Ok(g)
    }

    pub fn points(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.lo + self.step * i as f64).collect()
    }
}

impl Default for DutyGrid {
    fn default() -> Self {
        DutyGrid {
            lo: 0.01,
            hi: 0.99,
            step: 0.002,
        }
    }
}

impl fmt::Display for DutyGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.lo, self.hi, self.step)
    }
}

impl FromStr for DutyGrid {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::InvalidParameter(format!("grid '{s}' is not lo:hi:step"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let v: Vec<f64> = parts
            .iter()
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        DutyGrid::new(v[0], v[1], v[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    S,
    H,
    L1,
    L2,
    AvgResidual,
    HbResidual,
}

/// A curve sampled on a duty grid and the level it is compared against.
///
/// Grid points where evaluation failed are dropped from `grid`/`values`
/// and listed in `gaps` with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub kind: PlotKind,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Imaginary parts, for complex curves.
    pub imag: Option<Vec<f64>>,
    /// A companion approximation sampled on the same grid.
    pub companion: Option<Vec<f64>>,
    pub reference_level: f64,
    pub gaps: Vec<(f64, String)>,
}

impl PlotSeries {
    /// Evaluate `f` on every grid point in parallel, keeping grid order.
    pub(crate) fn sample<F>(kind: PlotKind, grid: &DutyGrid, reference_level: f64, f: F) -> Self
    where
        F: Fn(f64) -> Result<f64> + Sync,
    {
        let pts = grid.points();
        let evals: Vec<Result<f64>> = pts.par_iter().map(|&x| f(x)).collect();
        let mut s = PlotSeries {
            kind,
            grid: Vec::with_capacity(pts.len()),
            values: Vec::with_capacity(pts.len()),
            imag: None,
            companion: None,
            reference_level,
            gaps: Vec::new(),
        };
        for (x, r) in pts.into_iter().zip(evals) {
            match r {
                Ok(v) if v.is_finite() => {
                    s.grid.push(x);
                    s.values.push(v);
                }
                Ok(v) => s.gaps.push((x, format!("non-finite value {v}"))),
                Err(e) => s.gaps.push((x, e.to_string())),
            }
        }
        s
    }

    /// Duty ratios where `values - reference_level` changes sign, linearly
    /// interpolated between adjacent samples.
    pub fn crossings(&self) -> Vec<f64> {
        crossings(&self.grid, &self.values, self.reference_level)
    }
}

pub fn crossings(grid: &[f64], values: &[f64], level: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 1..grid.len().min(values.len()) {
        let a = values[i - 1] - level;
        let b = values[i] - level;
        if a == 0.0 {
            out.push(grid[i - 1]);
        } else if a.signum() != b.signum() && b != 0.0 {
            out.push(grid[i - 1] + (grid[i] - grid[i - 1]) * a / (a - b));
        }
    }
    if let (Some(&x), Some(&v)) = (grid.last(), values.last()) {
        if v == level {
            out.push(x);
        }
    }
    out
}
