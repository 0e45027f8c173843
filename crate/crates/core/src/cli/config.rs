//! JSON converter configuration: parsing with field-named errors and a
//! canonical writer.

use std::path::Path;

use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::harmonic::HarmonicConfig;
use crate::model::{
    Control, ControlScheme, ConverterModel, Design, Param, PowerStage, RampSpec, Topology,
};
use crate::plot::DutyGrid;

/// Per-config defaults for the plotting subcommands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisDefaults {
    pub grid: DutyGrid,
    pub harmonics: usize,
}

impl Default for AnalysisDefaults {
    fn default() -> Self {
        AnalysisDefaults {
            grid: DutyGrid::default(),
            harmonics: HarmonicConfig::default().n_harmonics,
        }
    }
}

/// Reference values a built-in example is checked against.
#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Expected {
    pub snb: Option<ExpectedSnb>,
    pub closed_form: Option<ExpectedDuty>,
    pub s_crossing: Option<ExpectedDuty>,
    pub avg_duty: Option<ExpectedDuty>,
    #[serde(default)]
    pub roots: Vec<ExpectedRoots>,
    pub window: Option<ExpectedWindow>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedSnb {
    pub param: String,
    pub lo: f64,
    pub hi: f64,
    pub value: f64,
    pub value_tol: f64,
    pub duty: f64,
    pub duty_tol: f64,
    pub vo: Option<f64>,
    pub vo_rel_tol: Option<f64>,
}

/// A duty ratio, optionally evaluated with one parameter overridden.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedDuty {
    pub duty: f64,
    pub tol: f64,
    pub param: Option<String>,
    pub at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedRoots {
    pub param: String,
    pub at: f64,
    pub duties: Vec<f64>,
    pub tol: f64,
}

/// Parameter range over which at least `min_solutions` solutions coexist,
/// counting saturated equilibria.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedWindow {
    pub param: String,
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
    pub from: f64,
    pub to: f64,
    pub tol: f64,
    #[serde(default = "two")]
    pub min_solutions: usize,
}

fn two() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigDocument {
    pub design: Design,
    pub analysis: AnalysisDefaults,
    pub note: Option<String>,
    pub expected: Option<Expected>,
}

impl ConfigDocument {
    pub fn from_model(m: &ConverterModel) -> Result<Self> {
        let design = *m
            .design()
            .ok_or_else(|| Error::Config("model was not built from a design".into()))?;
        Ok(ConfigDocument {
            design,
            analysis: AnalysisDefaults::default(),
            note: None,
            expected: None,
        })
    }

    pub fn model(&self) -> Result<ConverterModel> {
        self.design.build()
    }

    /// Canonical JSON: every field explicit, gains only where the scheme
    /// uses them, no reference values.
    pub fn to_canonical_json(&self) -> String {
        let d = &self.design;
        let mut control = Map::new();
        control.insert("type".into(), json!(d.control.scheme.name()));
        match d.control.scheme {
            ControlScheme::Vmc { kp } | ControlScheme::CmcClosed { kp } => {
                control.insert("kp".into(), json!(kp));
            }
            ControlScheme::MultiLoop { ki, kv } => {
                control.insert("ki".into(), json!(ki));
                control.insert("kv".into(), json!(kv));
            }
            ControlScheme::CmcOpen => {}
        }
        control.insert("vr".into(), json!(d.control.vr));
        let doc = json!({
            "topology": d.topology.to_string(),
            "power": {
                "vs": d.power.vs,
                "L": d.power.inductance,
                "C": d.power.capacitance,
                "R": d.power.load,
                "r": d.power.parasitic,
                "Rc": d.power.esr,
                "fs": d.power.fs,
            },
            "control": Value::Object(control),
            "ramp": { "offset": d.ramp.offset, "amplitude": d.ramp.amplitude },
            "analysis": {
                "grid": self.analysis.grid.to_string(),
                "harmonics": self.analysis.harmonics,
            },
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("config serializes");
        s.push('\n');
        s
    }
}

fn schema(path: &str, what: &str) -> Error {
    Error::Config(format!("{path}: {what}"))
}

fn object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>> {
    v.as_object()
        .ok_or_else(|| schema(path, "expected an object"))
}

fn reject_unknown(obj: &Map<String, Value>, path: &str, allowed: &[&str]) -> Result<()> {
    match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => {
            let full = if path.is_empty() {
                k.clone()
            } else {
                format!("{path}.{k}")
            };
            Err(schema(&full, "unknown field"))
        }
        None => Ok(()),
    }
}

fn number(obj: &Map<String, Value>, path: &str, key: &str) -> Result<Option<f64>> {
    let full = format!("{path}.{key}");
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => {
            let x = v
                .as_f64()
                .ok_or_else(|| schema(&full, "expected a number"))?;
            if !x.is_finite() {
                return Err(schema(&full, "must be finite"));
            }
            Ok(Some(x))
        }
    }
}

fn required(obj: &Map<String, Value>, path: &str, key: &str) -> Result<f64> {
    number(obj, path, key)?
        .ok_or_else(|| schema(&format!("{path}.{key}"), "missing required field"))
}

pub fn parse_config(text: &str) -> Result<ConfigDocument> {
    let root: Value = serde_json::from_str(text).map_err(|e| {
        Error::Config(format!(
            "parse error at line {} column {}: {e}",
            e.line(),
            e.column()
        ))
    })?;
    let top = object(&root, "document")?;
    reject_unknown(
        top,
        "",
        &[
            "topology", "power", "control", "ramp", "analysis", "note", "expected",
        ],
    )?;

    let topology = match top.get("topology").and_then(Value::as_str) {
        Some("buck") => Topology::Buck,
        Some("boost") => Topology::Boost,
        Some(other) => {
            return Err(schema(
                "topology",
                &format!("'{other}' is not one of buck, boost"),
            ))
        }
        None => return Err(schema("topology", "missing required field")),
    };

    let p = object(
        top.get("power")
            .ok_or_else(|| schema("power", "missing required field"))?,
        "power",
    )?;
    reject_unknown(p, "power", &["vs", "L", "C", "R", "r", "Rc", "fs"])?;
    let power = PowerStage {
        vs: required(p, "power", "vs")?,
        inductance: required(p, "power", "L")?,
        capacitance: required(p, "power", "C")?,
        load: required(p, "power", "R")?,
        parasitic: number(p, "power", "r")?.unwrap_or(0.0),
        esr: number(p, "power", "Rc")?.unwrap_or(0.0),
        fs: required(p, "power", "fs")?,
    };

    let c = object(
        top.get("control")
            .ok_or_else(|| schema("control", "missing required field"))?,
        "control",
    )?;
    reject_unknown(c, "control", &["type", "kp", "ki", "kv", "vr"])?;
    let kind = c
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| schema("control.type", "missing required field"))?;
    let scheme = match kind {
        "vmc" => ControlScheme::Vmc {
            kp: required(c, "control", "kp")?,
        },
        "cmc_open" => ControlScheme::CmcOpen,
        "cmc_closed" => ControlScheme::CmcClosed {
            kp: required(c, "control", "kp")?,
        },
        "multiloop" => ControlScheme::MultiLoop {
            ki: required(c, "control", "ki")?,
            kv: required(c, "control", "kv")?,
        },
        other => {
            return Err(schema(
                "control.type",
                &format!("'{other}' is not one of vmc, cmc_open, cmc_closed, multiloop"),
            ))
        }
    };
    let control = Control {
        scheme,
        vr: required(c, "control", "vr")?,
    };

    let r = object(
        top.get("ramp")
            .ok_or_else(|| schema("ramp", "missing required field"))?,
        "ramp",
    )?;
    reject_unknown(r, "ramp", &["offset", "amplitude"])?;
    let ramp = RampSpec {
        offset: required(r, "ramp", "offset")?,
        amplitude: required(r, "ramp", "amplitude")?,
    };
    if ramp.amplitude < 0.0 {
        return Err(schema("ramp.amplitude", "must be non-negative"));
    }

    let mut analysis = AnalysisDefaults::default();
    if let Some(a) = top.get("analysis") {
        let a = object(a, "analysis")?;
        reject_unknown(a, "analysis", &["grid", "harmonics"])?;
        if let Some(g) = a.get("grid") {
            let g = g
                .as_str()
                .ok_or_else(|| schema("analysis.grid", "expected a string lo:hi:step"))?;
            analysis.grid = g
                .parse()
                .map_err(|e: Error| schema("analysis.grid", &e.to_string()))?;
        }
        if let Some(n) = a.get("harmonics") {
            analysis.harmonics = n
                .as_u64()
                .filter(|&n| n > 0)
                .ok_or_else(|| schema("analysis.harmonics", "expected a positive integer"))?
                as usize;
        }
    }

    let note = match top.get("note") {
        None => None,
        Some(v) => Some(
            v.as_str()
                .ok_or_else(|| schema("note", "expected a string"))?
                .to_string(),
        ),
    };
    let expected = match top.get("expected") {
        None => None,
        Some(v) => Some(Expected::deserialize(v).map_err(|e| schema("expected", &e.to_string()))?),
    };

    let design = Design {
        topology,
        power,
        control,
        ramp,
    };
    // builder rejections surface verbatim
    design.build()?;
    Ok(ConfigDocument {
        design,
        analysis,
        note,
        expected,
    })
}

pub fn load_document(path: &Path) -> Result<ConfigDocument> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn load_config(path: &Path) -> Result<ConverterModel> {
    load_document(path)?.model()
}

pub fn parse_param(name: &str) -> Result<Param> {
    name.parse()
}
