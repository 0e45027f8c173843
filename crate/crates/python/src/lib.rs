//! Python bindings: a `Converter` wrapper over the core model with the main
//! analysis entry points.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use pwm_snb::cli::config::{parse_config, ConfigDocument};
use pwm_snb::cli::examples;
use pwm_snb::matnum::DEFAULT_GRID;
use pwm_snb::model::{ConverterModel, Param};
use pwm_snb::sdstab::{self, ClosedForm, SnbDuty, DEFAULT_CLASSIFY_TOL};
use pwm_snb::{steady, sweep};

fn py_err(e: pwm_snb::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn param(name: &str) -> PyResult<Param> {
    name.parse().map_err(py_err)
}

#[pyclass(frozen)]
struct Converter {
    model: ConverterModel,
}

#[pymethods]
impl Converter {
    /// Build from a JSON config string.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let model = parse_config(text).and_then(|d| d.model()).map_err(py_err)?;
        Ok(Converter { model })
    }

    /// One of the built-in examples, "e1" to "e5".
    #[staticmethod]
    fn example(name: &str) -> PyResult<Self> {
        let model = examples::fixture(name)
            .and_then(|d| d.model())
            .map_err(py_err)?;
        Ok(Converter { model })
    }

    fn with_param(&self, name: &str, value: f64) -> PyResult<Self> {
        let model = self.model.with_param(param(name)?, value).map_err(py_err)?;
        Ok(Converter { model })
    }

    fn param(&self, name: &str) -> PyResult<f64> {
        self.model.param(param(name)?).map_err(py_err)
    }

    #[getter]
    fn period(&self) -> f64 {
        self.model.period()
    }

    #[getter]
    fn hdot(&self) -> f64 {
        self.model.hdot()
    }

    fn to_json(&self) -> PyResult<String> {
        ConfigDocument::from_model(&self.model)
            .map(|d| d.to_canonical_json())
            .map_err(py_err)
    }

    /// Periodic orbits with their stability, sorted by duty ratio.
    fn periodic_solutions<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let orbits = steady::periodic_solutions(&self.model).map_err(py_err)?;
        orbits
            .iter()
            .map(|o| {
                let rep =
                    sdstab::stability(&self.model, o, DEFAULT_CLASSIFY_TOL).map_err(py_err)?;
                let dict = PyDict::new(py);
                dict.set_item("duty", o.duty)?;
                dict.set_item("x_clock", o.x_clock.clone())?;
                dict.set_item("v_o", self.model.output(&o.x_clock))?;
                dict.set_item("classification", rep.classification.label())?;
                let mults: Vec<(f64, f64)> = rep.multipliers.iter().map(|z| (z.re, z.im)).collect();
                dict.set_item("multipliers", mults)?;
                Ok(dict)
            })
            .collect()
    }

    fn s_value(&self, duty: f64) -> PyResult<f64> {
        sdstab::s_value(&self.model, duty).map_err(py_err)
    }

    /// Duty ratios where S crosses the ramp slope.
    fn snb_duties(&self) -> PyResult<Vec<f64>> {
        sdstab::snb_duties(&self.model, DEFAULT_GRID).map_err(py_err)
    }

    /// Closed-form critical duty ratios, or None when the form reports no SNB.
    fn closed_form(&self) -> PyResult<Option<Vec<f64>>> {
        let form = ClosedForm::for_model(&self.model).map_err(py_err)?;
        Ok(match sdstab::closed_form_snb_duty(&form) {
            SnbDuty::At(v) => Some(v),
            SnbDuty::NoSnb(_) => None,
        })
    }

    /// Saddle-node point in `[lo, hi]` of the named parameter.
    #[pyo3(signature = (name, lo, hi, duty=None))]
    fn locate_snb<'py>(
        &self,
        py: Python<'py>,
        name: &str,
        lo: f64,
        hi: f64,
        duty: Option<f64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let pt = sweep::locate_snb(&self.model, param(name)?, lo, hi, duty).map_err(py_err)?;
        let dict = PyDict::new(py);
        dict.set_item("param", pt.param_star)?;
        dict.set_item("duty", pt.duty_star)?;
        dict.set_item("v_o", pt.v_o)?;
        dict.set_item("residual", pt.residual_norm)?;
        Ok(dict)
    }

    /// Clock-instant states and switching times over `periods` periods.
    fn simulate(&self, x0: Vec<f64>, periods: usize) -> PyResult<Vec<(Vec<f64>, f64)>> {
        let recs = sweep::simulate(&self.model, &x0, periods).map_err(py_err)?;
        Ok(recs.into_iter().map(|r| (r.x, r.d_event)).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Converter({}, vs={}, vr={})",
            self.model.topology(),
            self.model.vs(),
            self.model.vr()
        )
    }
}

#[pymodule]
fn pysnb(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Converter>()?;
    Ok(())
}
