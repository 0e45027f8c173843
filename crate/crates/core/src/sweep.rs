//! Stroboscopic-map simulation, bifurcation sweeps over one parameter and
//! precise location of saddle-node points.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matnum::{expm_pair, newton_2d, Matrix};
use crate::model::{ConverterModel, Param, Stage};
use crate::sdstab::{self, Classification, DEFAULT_CLASSIFY_TOL};
use crate::steady::{self, periodic_solutions, PeriodicOrbit};

/// Subintervals of the period scanned for the first switching event.
pub const EVENT_SCAN_STEPS: usize = 64;
/// Switching-event bisection stops at this fraction of the period.
pub const EVENT_TOL: f64 = 1e-12;
/// Residual target for the SNB solve, in scaled units.
pub const SNB_TOL: f64 = 1e-8;

fn affine_step(e: &Matrix, psi_bu: &[f64], x: &[f64]) -> Vec<f64> {
    e.mul_vec(x)
        .iter()
        .zip(psi_bu)
        .map(|(a, b)| a + b)
        .collect()
}

fn finite(x: &[f64]) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Overflow("stroboscopic map"))
    }
}

/// One period of the switched dynamics from clock state `x`: stage S1 while
/// `y > h`, then S2 from the first crossing to the end of the period.
/// Returns the next clock state and the switching time.
pub fn strobe_step(m: &ConverterModel, x: &[f64]) -> Result<(Vec<f64>, f64)> {
    if x.len() != m.dim() {
        return Err(Error::Dimension(format!(
            "state has {} entries, model has {}",
            x.len(),
            m.dim()
        )));
    }
    finite(x)?;
    let t = m.period();
    let gap = |state: &[f64], time: f64| m.y(state) - m.ramp_in_period(time);

    let d_event;
    let x_switch;
    if gap(x, 0.0) <= 0.0 {
        d_event = 0.0;
        x_switch = x.to_vec();
    } else {
        let h = t / EVENT_SCAN_STEPS as f64;
        let (e, psi) = expm_pair(m.a1(), h)?;
        let drift = psi.mul_vec(&m.forcing(Stage::S1));
        let mut prev = x.to_vec();
        let mut found = None;
        for k in 1..=EVENT_SCAN_STEPS {
            let next = affine_step(&e, &drift, &prev);
            finite(&next)?;
            let tk = if k == EVENT_SCAN_STEPS {
                t
            } else {
                h * k as f64
            };
            if gap(&next, tk) <= 0.0 {
                found = Some((h * (k - 1) as f64, tk, prev.clone(), next));
                break;
            }
            prev = next;
        }
        match found {
            None => {
                d_event = t;
                x_switch = prev;
            }
            Some((ta, tb, xa, xb)) => {
                // bisection on [ta, tb] starting from the state at ta
                let (mut lo, mut hi) = (ta, tb);
                let mut x_hi = xb;
                while hi - lo > EVENT_TOL * t {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    let xm = steady::propagate(m, Stage::S1, &xa, mid - ta)?;
                    if gap(&xm, mid) <= 0.0 {
                        hi = mid;
                        x_hi = xm;
                    } else {
                        lo = mid;
                    }
                }
                // Newton polish: the bisection floor would otherwise show up as
                // noise in finite differences of the map
                let (mut tau, mut x_tau) = (hi, x_hi);
                for _ in 0..3 {
                    let dg = m.c_row().dot_row(&m.slope(Stage::S1, &x_tau)) - m.hdot();
                    let step = gap(&x_tau, tau) / dg;
                    let next = tau - step;
                    if !(dg != 0.0 && next > ta && next <= tb) {
                        break;
                    }
                    tau = next;
                    x_tau = steady::propagate(m, Stage::S1, &xa, tau - ta)?;
                    if step.abs() <= f64::EPSILON * t {
                        break;
                    }
                }
                d_event = tau;
                x_switch = x_tau;
            }
        }
    }
    let x_next = if d_event < t {
        steady::propagate(m, Stage::S2, &x_switch, t - d_event)?
    } else {
        x_switch
    };
    finite(&x_next)?;
    Ok((x_next, d_event))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimRecord {
    pub period: usize,
    /// State at the start of the period.
    pub x: Vec<f64>,
    /// Switching time within the period.
    pub d_event: f64,
}

pub fn simulate(m: &ConverterModel, x0: &[f64], n_periods: usize) -> Result<Vec<SimRecord>> {
    if n_periods == 0 {
        return Err(Error::InvalidParameter(
            "simulate needs at least one period".into(),
        ));
    }
    let mut x = x0.to_vec();
    let mut log = Vec::with_capacity(n_periods);
    for k in 0..n_periods {
        let (next, d) = strobe_step(m, &x)?;
        log.push(SimRecord {
            period: k,
            x,
            d_event: d,
        });
        x = next;
    }
    Ok(log)
}

/// Central-difference derivative of the stroboscopic map at the orbit's
/// clock state; step `eps · max(|x_j|, 1e-2 ‖x‖∞)` per coordinate.
pub fn fd_jacobian(m: &ConverterModel, orbit: &PeriodicOrbit, eps: f64) -> Result<Matrix> {
    if !(1e-8..=1e-3).contains(&eps) {
        return Err(Error::InvalidParameter(format!(
            "eps {eps} outside [1e-8, 1e-3]"
        )));
    }
    let x = &orbit.x_clock;
    let n = x.len();
    let norm = x
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let mut jac = Matrix::zeros(n, n);
    for j in 0..n {
        let h = eps * x[j].abs().max(1e-2 * norm);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let (fp, _) = strobe_step(m, &xp)?;
        let (fm, _) = strobe_step(m, &xm)?;
        for i in 0..n {
            jac[(i, j)] = (fp[i] - fm[i]) / (xp[j] - xm[j]);
        }
    }
    Ok(jac)
}

/// One periodic solution at one parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchRecord {
    pub param: f64,
    /// Position among the solutions at this parameter value, by duty ratio.
    pub branch: usize,
    pub d: f64,
    pub duty: f64,
    pub x_clock: Vec<f64>,
    pub v_o: f64,
    pub classification: Classification,
    pub max_multiplier: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// Two solutions appear or vanish between adjacent parameter values.
    BranchMerge,
    SaddleNode,
    PeriodDoubling,
    Neimark,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BifurcationEvent {
    pub kind: EventKind,
    /// Refined parameter value (for merges, the bracket midpoint).
    pub param: f64,
    /// Parameter bracket containing the event.
    pub bracket: (f64, f64),
    pub duty: f64,
    pub multiplier: Complex64,
    pub classification: Classification,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub param: Param,
    pub param_values: Vec<f64>,
    /// Sorted by parameter, then duty ratio.
    pub records: Vec<BranchRecord>,
    pub events: Vec<BifurcationEvent>,
    /// Parameter values or orbits that could not be evaluated.
    pub failures: Vec<(f64, String)>,
}

impl SweepResult {
    pub fn count_at(&self, index: usize) -> usize {
        let p = self.param_values[index];
        self.records.iter().filter(|r| r.param == p).count()
    }

    pub fn records_at(&self, p: f64) -> impl Iterator<Item = &BranchRecord> {
        self.records.iter().filter(move |r| r.param == p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub classify_tol: f64,
    /// Refine stability changes along a branch by parameter bisection.
    pub refine_events: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            classify_tol: DEFAULT_CLASSIFY_TOL,
            refine_events: true,
        }
    }
}

struct PointResult {
    records: Vec<BranchRecord>,
    failures: Vec<(f64, String)>,
}

fn dominant(multipliers: &[Complex64]) -> Complex64 {
    multipliers
        .iter()
        .copied()
        .fold(Complex64::new(0.0, 0.0), |a, z| {
            if z.norm() > a.norm() {
                z
            } else {
                a
            }
        })
}

fn evaluate_point(m: &ConverterModel, param: Param, p: f64, tol: f64) -> PointResult {
    let mut out = PointResult {
        records: Vec::new(),
        failures: Vec::new(),
    };
    let model = match m.with_param(param, p) {
        Ok(mm) => mm,
        Err(e) => {
            out.failures.push((p, e.to_string()));
            return out;
        }
    };
    let orbits = match periodic_solutions(&model) {
        Ok(o) => o,
        Err(e) => {
            out.failures.push((p, e.to_string()));
            return out;
        }
    };
    for (k, orb) in orbits.into_iter().enumerate() {
        match sdstab::stability(&model, &orb, tol) {
            Ok(rep) => out.records.push(BranchRecord {
                param: p,
                branch: k,
                d: orb.d,
                duty: orb.duty,
                v_o: model.output(&orb.x_clock),
                x_clock: orb.x_clock,
                classification: rep.classification,
                max_multiplier: dominant(&rep.multipliers),
            }),
            Err(e) => out
                .failures
                .push((p, format!("orbit at D = {}: {e}", orb.duty))),
        }
    }
    out
}

fn linspace(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    (0..steps)
        .map(|i| {
            if i + 1 == steps {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (steps - 1) as f64
            }
        })
        .collect()
}

/// Periodic solutions and their stability over `steps` evenly spaced
/// parameter values in `[lo, hi]`.
pub fn branch_sweep(
    m: &ConverterModel,
    param: Param,
    lo: f64,
    hi: f64,
    steps: usize,
    opts: &SweepOptions,
) -> Result<SweepResult> {
    if steps < 2 || !(lo.is_finite() && hi.is_finite()) || lo == hi {
        return Err(Error::InvalidParameter(format!(
            "sweep needs steps >= 2 and lo != hi (got {steps}, [{lo}, {hi}])"
        )));
    }
    m.param(param)?;
    let values = linspace(lo, hi, steps);
    let points: Vec<PointResult> = values
        .par_iter()
        .map(|&p| evaluate_point(m, param, p, opts.classify_tol))
        .collect();

    let mut events = Vec::new();
    for i in 1..points.len() {
        let (a, b) = (&points[i - 1], &points[i]);
        let (ca, cb) = (a.records.len(), b.records.len());
        if ca.abs_diff(cb) >= 2 {
            let side = if ca > cb { a } else { b };
            let duty = merging_pair(&side.records).map_or(f64::NAN, |(x, y)| 0.5 * (x + y));
            events.push(BifurcationEvent {
                kind: EventKind::BranchMerge,
                param: 0.5 * (values[i - 1] + values[i]),
                bracket: (values[i - 1], values[i]),
                duty,
                multiplier: Complex64::new(1.0, 0.0),
                classification: Classification::SaddleNodeCritical,
            });
        } else if ca == cb && opts.refine_events {
            for (ra, rb) in a.records.iter().zip(&b.records) {
                let sa = ra.max_multiplier.norm() < 1.0;
                let sb = rb.max_multiplier.norm() < 1.0;
                if sa != sb {
                    if let Some(ev) = refine_stability_change(m, param, opts.classify_tol, ra, rb) {
                        events.push(ev);
                    }
                }
            }
        }
    }
    // critical labels that landed directly on a grid point
    for rec in points.iter().flat_map(|p| &p.records) {
        let kind = match rec.classification {
            Classification::PeriodDoublingCritical => EventKind::PeriodDoubling,
            Classification::NeimarkCritical => EventKind::Neimark,
            Classification::SaddleNodeCritical => EventKind::SaddleNode,
            _ => continue,
        };
        let duplicate = events
            .iter()
            .any(|e| e.kind == kind && e.bracket.0 <= rec.param && rec.param <= e.bracket.1);
        if !duplicate {
            events.push(BifurcationEvent {
                kind,
                param: rec.param,
                bracket: (rec.param, rec.param),
                duty: rec.duty,
                multiplier: rec.max_multiplier,
                classification: rec.classification,
            });
        }
    }
    events.sort_by(|x, y| {
        x.param
            .partial_cmp(&y.param)
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for p in points {
        records.extend(p.records);
        failures.extend(p.failures);
    }
    Ok(SweepResult {
        param,
        param_values: values,
        records,
        events,
        failures,
    })
}

/// The adjacent pair of duty ratios closest together.
fn merging_pair(records: &[BranchRecord]) -> Option<(f64, f64)> {
    records
        .windows(2)
        .map(|w| (w[0].duty, w[1].duty))
        .min_by(|x, y| {
            (x.1 - x.0)
                .partial_cmp(&(y.1 - y.0))
                .unwrap_or(std::cmp::Ordering::Equal)
        })
}

/// Orbit at parameter `p` nearest to duty ratio `duty`.
fn orbit_near(
    m: &ConverterModel,
    param: Param,
    p: f64,
    duty: f64,
) -> Result<(ConverterModel, PeriodicOrbit)> {
    let model = m.with_param(param, p)?;
    let orbits = periodic_solutions(&model)?;
    let orb = orbits
        .into_iter()
        .min_by(|a, b| {
            (a.duty - duty)
                .abs()
                .partial_cmp(&(b.duty - duty).abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .ok_or(Error::NoConvergence {
            what: "orbit continuation",
            iterations: 0,
        })?;
    Ok((model, orb))
}

fn refine_stability_change(
    m: &ConverterModel,
    param: Param,
    tol: f64,
    ra: &BranchRecord,
    rb: &BranchRecord,
) -> Option<BifurcationEvent> {
    let stable_a = ra.max_multiplier.norm() < 1.0;
    let (mut lo, mut hi) = (ra.param, rb.param);
    let mut duty = ra.duty;
    let mut best: Option<(f64, f64, Vec<Complex64>)> = None;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let (model, orb) = orbit_near(m, param, mid, duty).ok()?;
        let rep = sdstab::stability(&model, &orb, tol).ok()?;
        let rho = rep.margin + 1.0;
        duty = orb.duty;
        best = Some((mid, orb.duty, rep.multipliers.clone()));
        if (rho < 1.0) == stable_a {
            lo = mid;
        } else {
            hi = mid;
        }
        if rep.margin.abs() < 1e-3 * tol || (hi - lo).abs() <= 1e-12 * hi.abs().max(1.0) {
            break;
        }
    }
    let (p, duty, mults) = best?;
    let z = dominant(&mults);
    let classification = sdstab::classify(&mults, tol);
    let kind = if z.im.abs() > 1e-9 * z.norm() {
        EventKind::Neimark
    } else if z.re < 0.0 {
        EventKind::PeriodDoubling
    } else {
        EventKind::SaddleNode
    };
    Some(BifurcationEvent {
        kind,
        param: p,
        bracket: (ra.param.min(rb.param), ra.param.max(rb.param)),
        duty,
        multiplier: z,
        classification,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnbMethod {
    Newton,
    Bisection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnbPoint {
    pub param_star: f64,
    pub duty_star: f64,
    /// `max(|r|, |T ∂r/∂d|)` over the orbit scale at the solution.
    pub residual_norm: f64,
    /// Output voltage at the clock instant of the critical orbit.
    pub v_o: f64,
    pub method: SnbMethod,
}

fn root_count(m: &ConverterModel, param: Param, p: f64) -> Result<(usize, Vec<f64>)> {
    let model = m.with_param(param, p)?;
    let duties: Vec<f64> = periodic_solutions(&model)?.iter().map(|o| o.duty).collect();
    Ok((duties.len(), duties))
}

/// Scaled SNB system `(r, T ∂r/∂d) / scale` at `(D, p)`, using the exact
/// identity `∂r/∂d = S - ḣ`.
fn snb_system(m: &ConverterModel, param: Param, duty: f64, p: f64, scale: f64) -> Result<[f64; 2]> {
    let model = m.with_param(param, p)?;
    let ev = sdstab::evaluate_s(&model, duty)?;
    let slope = sdstab::theorem1_residual(&model, duty)?;
    Ok([ev.orbit.residual / scale, model.period() * slope / scale])
}

/// Locate the parameter value and duty ratio where two periodic solutions
/// merge, somewhere in `[lo, hi]`.
pub fn locate_snb(
    m: &ConverterModel,
    param: Param,
    lo: f64,
    hi: f64,
    d_guess: Option<f64>,
) -> Result<SnbPoint> {
    if !(lo < hi) {
        return Err(Error::InvalidParameter(format!(
            "bracket [{lo}, {hi}] is empty"
        )));
    }
    // find a sub-bracket with a root-count drop of at least two
    const PROBES: usize = 17;
    let ps = linspace(lo, hi, PROBES);
    let counts: Vec<Result<(usize, Vec<f64>)>> =
        ps.par_iter().map(|&p| root_count(m, param, p)).collect();
    let counts: Vec<(usize, Vec<f64>)> = counts.into_iter().collect::<Result<_>>()?;
    let k = (1..PROBES)
        .find(|&k| counts[k - 1].0.abs_diff(counts[k].0) >= 2)
        .ok_or(Error::NoSnbInBracket {
            lo,
            hi,
            count_lo: counts[0].0,
            count_hi: counts[PROBES - 1].0,
        })?;
    let (mut a, mut b) = (ps[k - 1], ps[k]);
    let (mut ca, mut cb) = (counts[k - 1].clone(), counts[k].clone());

    // narrow on the root count until the merging pair is close
    let bisect_tol = 1e-6 * (hi - lo);
    let mut newton_result = None;
    for round in 0.. {
        let rich = if ca.0 > cb.0 { &ca } else { &cb };
        let pair = rich
            .1
            .windows(2)
            .map(|w| (w[0], w[1]))
            .min_by(|x, y| (x.1 - x.0).partial_cmp(&(y.1 - y.0)).unwrap());
        let p_rich = if ca.0 > cb.0 { a } else { b };
        if round >= 4 || (b - a).abs() <= bisect_tol {
            if let Some((x, y)) = pair {
                let d0 = d_guess.filter(|_| round == 0).unwrap_or(0.5 * (x + y));
                newton_result = try_newton(m, param, d0, p_rich).ok();
            }
            if newton_result.is_some() || (b - a).abs() <= bisect_tol {
                break;
            }
        }
        let mid = 0.5 * (a + b);
        let cm = root_count(m, param, mid)?;
        if cm.0.abs_diff(ca.0) >= 2 {
            b = mid;
            cb = cm;
        } else {
            a = mid;
            ca = cm;
        }
    }
    if let Some(pt) = newton_result {
        return Ok(pt);
    }
    // bisection fallback: report the closest merging pair
    let (rich, p_rich) = if ca.0 > cb.0 { (&ca, a) } else { (&cb, b) };
    let (x, y) = rich
        .1
        .windows(2)
        .map(|w| (w[0], w[1]))
        .min_by(|x, y| (x.1 - x.0).partial_cmp(&(y.1 - y.0)).unwrap())
        .ok_or(Error::NoConvergence {
            what: "SNB bisection",
            iterations: 0,
        })?;
    let duty = 0.5 * (x + y);
    let model = m.with_param(param, p_rich)?;
    let orb = steady::orbit_at(&model, duty * model.period())?;
    let scale = orb.scale(&model);
    let f = snb_system(m, param, duty, p_rich, scale)?;
    Ok(SnbPoint {
        param_star: p_rich,
        duty_star: duty,
        residual_norm: f[0].abs().max(f[1].abs()),
        v_o: model.output(&orb.x_clock),
        method: SnbMethod::Bisection,
    })
}

fn try_newton(m: &ConverterModel, param: Param, d0: f64, p0: f64) -> Result<SnbPoint> {
    let model = m.with_param(param, p0)?;
    let orb = steady::orbit_at(&model, d0 * model.period())?;
    let scale = orb.scale(&model);
    let sol = newton_2d(
        |z| snb_system(m, param, z[0], z[1], scale),
        [d0, p0],
        SNB_TOL * 1e-2,
        60,
    )?;
    let f = snb_system(m, param, sol[0], sol[1], scale)?;
    let model = m.with_param(param, sol[1])?;
    let orb = steady::orbit_at(&model, sol[0] * model.period())?;
    Ok(SnbPoint {
        param_star: sol[1],
        duty_star: sol[0],
        residual_norm: f[0].abs().max(f[1].abs()),
        v_o: model.output(&orb.x_clock),
        method: SnbMethod::Newton,
    })
}
