//! Built-in example fixtures and the end-to-end checks run against them.

use rayon::prelude::*;

use crate::average;
use crate::error::{Error, Result};
use crate::matnum::DEFAULT_GRID;
use crate::model::{ConverterModel, Param};
use crate::sdstab::{self, ClosedForm, SnbDuty};
use crate::steady::{periodic_solutions, saturated_solutions};
use crate::sweep::locate_snb;

use super::config::{parse_config, ConfigDocument, ExpectedDuty, ExpectedWindow};
use super::csv::num;

pub const FIXTURES: [(&str, &str); 5] = [
    ("e1", include_str!("../../fixtures/e1.json")),
    ("e2", include_str!("../../fixtures/e2.json")),
    ("e3", include_str!("../../fixtures/e3.json")),
    ("e4", include_str!("../../fixtures/e4.json")),
    ("e5", include_str!("../../fixtures/e5.json")),
];

pub fn fixture(name: &str) -> Result<ConfigDocument> {
    let text = FIXTURES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| Error::InvalidParameter(format!("no built-in example '{name}' (e1..e5)")))?;
    parse_config(text)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub expected: f64,
    pub tol: f64,
    pub got: Option<f64>,
    pub detail: Option<String>,
}

impl Check {
    fn new(name: impl Into<String>, expected: f64, tol: f64, got: Option<f64>) -> Self {
        Check {
            name: name.into(),
            expected,
            tol,
            got,
            detail: None,
        }
    }

    fn failed(name: impl Into<String>, expected: f64, tol: f64, why: String) -> Self {
        Check {
            name: name.into(),
            expected,
            tol,
            got: None,
            detail: Some(why),
        }
    }

    pub fn pass(&self) -> bool {
        self.got
            .is_some_and(|g| (g - self.expected).abs() <= self.tol)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExampleReport {
    pub name: String,
    pub note: Option<String>,
    pub checks: Vec<Check>,
}

impl ExampleReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(Check::pass)
    }

    pub fn render(&self) -> String {
        let mut s = format!("example {}\n", self.name);
        if let Some(n) = &self.note {
            s.push_str(&format!("  note: {n}\n"));
        }
        for c in &self.checks {
            let got = match (c.got, &c.detail) {
                (Some(g), _) => num(g),
                (None, Some(d)) => format!("error ({d})"),
                (None, None) => "none".into(),
            };
            let verdict = if c.pass() { "ok" } else { "MISMATCH" };
            s.push_str(&format!(
                "  {:<24} expected {} +/- {}  got {}  {}\n",
                c.name,
                num(c.expected),
                num(c.tol),
                got,
                verdict
            ));
        }
        let bad = self.checks.iter().filter(|c| !c.pass()).count();
        if bad == 0 {
            s.push_str(&format!("  all {} checks passed\n", self.checks.len()));
        } else {
            s.push_str(&format!(
                "  {bad} of {} checks mismatched\n",
                self.checks.len()
            ));
        }
        s
    }
}

fn nearest(values: &[f64], target: f64) -> Option<f64> {
    values.iter().copied().min_by(|a, b| {
        (a - target)
            .abs()
            .partial_cmp(&(b - target).abs())
            .unwrap_or(std::cmp::Ordering::Equal)
    })
}

fn with_override(
    m: &ConverterModel,
    param: &Option<String>,
    at: Option<f64>,
) -> Result<ConverterModel> {
    match (param, at) {
        (Some(p), Some(v)) => m.with_param(p.parse()?, v),
        (None, None) => Ok(m.clone()),
        _ => Err(Error::Config(
            "expected: 'param' and 'at' go together".into(),
        )),
    }
}

fn duty_check(name: &str, exp: &ExpectedDuty, f: impl FnOnce() -> Result<Vec<f64>>) -> Check {
    match f() {
        Ok(v) => Check::new(name, exp.duty, exp.tol, nearest(&v, exp.duty)),
        Err(e) => Check::failed(name, exp.duty, exp.tol, e.to_string()),
    }
}

/// Total solutions (periodic orbits plus saturated equilibria) at `p`.
pub fn solution_count(m: &ConverterModel, param: Param, p: f64) -> Result<usize> {
    let mm = m.with_param(param, p)?;
    Ok(periodic_solutions(&mm)?.len() + saturated_solutions(&mm).len())
}

fn window_checks(m: &ConverterModel, w: &ExpectedWindow) -> Vec<Check> {
    let run = || -> Result<(f64, f64)> {
        let param: Param = w.param.parse()?;
        let steps = w.steps.max(2);
        let inside: Vec<f64> = (0..steps)
            .into_par_iter()
            .map(|i| w.lo + (w.hi - w.lo) * i as f64 / (steps - 1) as f64)
            .filter_map(|p| match solution_count(m, param, p) {
                Ok(n) if n >= w.min_solutions => Some(Ok(p)),
                Ok(_) => None,
                Err(e) => Some(Err(e)),
            })
            .collect::<Result<_>>()?;
        match (inside.first(), inside.last()) {
            (Some(&a), Some(&b)) => Ok((a, b)),
            _ => Err(Error::InvalidParameter(
                "no coexistence found in the scanned range".into(),
            )),
        }
    };
    match run() {
        Ok((a, b)) => vec![
            Check::new("window.from", w.from, w.tol, Some(a)),
            Check::new("window.to", w.to, w.tol, Some(b)),
        ],
        Err(e) => vec![
            Check::failed("window.from", w.from, w.tol, e.to_string()),
            Check::failed("window.to", w.to, w.tol, e.to_string()),
        ],
    }
}

pub fn run_example(name: &str, doc: &ConfigDocument) -> Result<ExampleReport> {
    let m = doc.model()?;
    let exp = doc.expected.clone().unwrap_or_default();
    let mut checks = Vec::new();

    if let Some(s) = &exp.snb {
        let param: Param = s.param.parse()?;
        match locate_snb(&m, param, s.lo, s.hi, None) {
            Ok(pt) => {
                checks.push(Check::new(
                    format!("snb.{}", param.name()),
                    s.value,
                    s.value_tol,
                    Some(pt.param_star),
                ));
                checks.push(Check::new("snb.D", s.duty, s.duty_tol, Some(pt.duty_star)));
                if let (Some(vo), Some(rel)) = (s.vo, s.vo_rel_tol) {
                    checks.push(Check::new("snb.vo", vo, rel * vo.abs(), Some(pt.v_o)));
                }
            }
            Err(e) => checks.push(Check::failed(
                format!("snb.{}", param.name()),
                s.value,
                s.value_tol,
                e.to_string(),
            )),
        }
    }
    if let Some(c) = &exp.closed_form {
        checks.push(duty_check("closed_form.D", c, || {
            let mm = with_override(&m, &c.param, c.at)?;
            match sdstab::closed_form_snb_duty(&ClosedForm::for_model(&mm)?) {
                SnbDuty::At(v) => Ok(v),
                SnbDuty::NoSnb(why) => Err(Error::InvalidParameter(why)),
            }
        }));
    }
    if let Some(c) = &exp.s_crossing {
        checks.push(duty_check("s_crossing.D", c, || {
            sdstab::snb_duties(&with_override(&m, &c.param, c.at)?, DEFAULT_GRID)
        }));
    }
    if let Some(c) = &exp.avg_duty {
        checks.push(duty_check("avg.D", c, || {
            average::avg_snb_duties(&with_override(&m, &c.param, c.at)?, DEFAULT_GRID)
        }));
    }
    for r in &exp.roots {
        let found = r.param.parse().and_then(|p| {
            let mm = m.with_param(p, r.at)?;
            Ok(periodic_solutions(&mm)?
                .iter()
                .map(|o| o.duty)
                .collect::<Vec<_>>())
        });
        for (k, &want) in r.duties.iter().enumerate() {
            let name = format!("roots@{}={}[{k}]", r.param, num(r.at));
            checks.push(match &found {
                Ok(v) if v.len() == r.duties.len() => Check::new(name, want, r.tol, Some(v[k])),
                Ok(v) => Check::failed(name, want, r.tol, format!("{} roots found", v.len())),
                Err(e) => Check::failed(name, want, r.tol, e.to_string()),
            });
        }
    }
    if let Some(w) = &exp.window {
        checks.extend(window_checks(&m, w));
    }
    Ok(ExampleReport {
        name: name.to_string(),
        note: doc.note.clone(),
        checks,
    })
}
