//! Python bindings. Functions are passed around as plain lists of vertex
//! values; reports come back as dictionaries.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use sgvar::critical::three_solutions as run_three_solutions;
use sgvar::energy::{energy as dirichlet_energy, harmonic_extension as extend};
use sgvar::io::{verify_solution as verify_record, GasketRecord, SolutionRecord, ThreeSolutionsRecord};
use sgvar::nonlinearity::power_problem;
use sgvar::thresholds::{compute_constants as constants, resolve_parameters};
use sgvar::{build_level, DiscreteFunction, Error, FunctionalContext, GasketLevel, ProblemSpec, SolveOptions};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Precondition(_) | Error::ResourceCap { .. } | Error::LevelMismatch(..) | Error::Expression { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Round-trips through JSON so every report shape maps onto dicts and lists.
fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: serde::de::DeserializeOwned>(py: Python<'_>, obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = py.import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// The vertex set `V_m` of the `N`-corner gasket.
#[pyclass(frozen, module = "sgvar")]
struct Gasket {
    level: Arc<GasketLevel>,
}

#[pymethods]
impl Gasket {
    #[new]
    #[pyo3(signature = (n, m))]
    fn new(n: usize, m: u32) -> PyResult<Self> {
        Ok(Self {
            level: Arc::new(build_level(n, m).map_err(py_err)?),
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.level.n()
    }

    #[getter]
    fn m(&self) -> u32 {
        self.level.m()
    }

    fn __len__(&self) -> usize {
        self.level.vertex_count()
    }

    fn __repr__(&self) -> String {
        format!("Gasket(n={}, m={})", self.level.n(), self.level.m())
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.level.edges().iter().map(|&[a, b]| (a, b)).collect()
    }

    fn weights(&self) -> Vec<f64> {
        self.level.weights().to_vec()
    }

    fn boundary(&self) -> Vec<usize> {
        self.level.boundary().collect()
    }

    /// Cartesian coordinates of every vertex.
    fn coordinates(&self) -> Vec<Vec<f64>> {
        self.level.cartesian()
    }

    /// The full export record: numerators, edges, cells, weights.
    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &GasketRecord::from_level(&self.level))
    }

    /// Discrete energy `W_m` of a function given by its vertex values.
    fn energy(&self, values: Vec<f64>) -> PyResult<f64> {
        Ok(dirichlet_energy(&self.function(values, false)?))
    }

    /// Energy-minimizing extension of `values` to level `m_fine`, one level
    /// at a time.
    fn harmonic_extension(&self, values: Vec<f64>, m_fine: u32) -> PyResult<Vec<f64>> {
        if m_fine < self.level.m() {
            return Err(PyValueError::new_err(format!(
                "target level {m_fine} is below the gasket level {}",
                self.level.m()
            )));
        }
        let mut u = self.function(values, false)?;
        for k in self.level.m() + 1..=m_fine {
            let fine = Arc::new(build_level(self.level.n(), k).map_err(py_err)?);
            u = extend(&u, &fine).map_err(py_err)?;
        }
        Ok(u.into_values())
    }
}

impl Gasket {
    fn function(&self, values: Vec<f64>, zero_boundary: bool) -> PyResult<DiscreteFunction> {
        DiscreteFunction::new(self.level.clone(), values, zero_boundary).map_err(py_err)
    }
}

/// `-Δu = λ|u|^(s-2)u - η|u|^(r-2)u + |u|^(q-2)u` with zero boundary values.
#[pyclass(frozen, module = "sgvar")]
struct Problem {
    spec: ProblemSpec,
    ctx: FunctionalContext,
}

impl Problem {
    fn from_spec(spec: ProblemSpec) -> PyResult<Self> {
        let level = Arc::new(build_level(spec.n, spec.m).map_err(py_err)?);
        let ctx = FunctionalContext::new(level, Arc::new(power_problem(&spec)));
        Ok(Self { spec, ctx })
    }

    fn function(&self, values: Vec<f64>) -> PyResult<DiscreteFunction> {
        DiscreteFunction::new(self.ctx.level().clone(), values, true).map_err(py_err)
    }
}

#[pymethods]
impl Problem {
    #[new]
    #[pyo3(signature = (n, m, r, s, q, lam, eta))]
    fn new(n: usize, m: u32, r: f64, s: f64, q: f64, lam: f64, eta: f64) -> PyResult<Self> {
        Self::from_spec(ProblemSpec::new(n, m, r, s, q, lam, eta).map_err(py_err)?)
    }

    /// Fills in `λ = Λ/2` and `η = η_λ/2` for whichever is left as `None`.
    #[staticmethod]
    #[pyo3(signature = (n, m, r, s, q, lam=None, eta=None))]
    fn auto(n: usize, m: u32, r: f64, s: f64, q: f64, lam: Option<f64>, eta: Option<f64>) -> PyResult<Self> {
        let base = ProblemSpec::new(n, m, r, s, q, 0.0, 0.0).map_err(py_err)?;
        let spec = resolve_parameters(&base, lam, eta, &SolveOptions::default()).map_err(py_err)?;
        Self::from_spec(spec)
    }

    #[getter]
    fn lam(&self) -> f64 {
        self.spec.lambda
    }

    #[getter]
    fn eta(&self) -> f64 {
        self.spec.eta
    }

    fn __repr__(&self) -> String {
        let p = &self.spec;
        format!(
            "Problem(n={}, m={}, r={}, s={}, q={}, lam={:e}, eta={:e})",
            p.n, p.m, p.r, p.s, p.q, p.lambda, p.eta
        )
    }

    fn gasket(&self) -> Gasket {
        Gasket {
            level: self.ctx.level().clone(),
        }
    }

    /// The energy functional `I(u)`.
    fn energy(&self, values: Vec<f64>) -> PyResult<f64> {
        self.ctx.eval(&self.function(values)?).map_err(py_err)
    }

    /// Energy-norm gradient of `I`; its norm is the residual.
    fn gradient(&self, values: Vec<f64>) -> PyResult<(Vec<f64>, f64)> {
        let g = self.ctx.energy_gradient(&self.function(values)?).map_err(py_err)?;
        Ok((g.direction.into_values(), g.norm))
    }

    /// Runs the three-solution construction; returns the full report.
    #[pyo3(signature = (abs_tol=None, rel_tol=None))]
    fn three_solutions<'py>(
        &self,
        py: Python<'py>,
        abs_tol: Option<f64>,
        rel_tol: Option<f64>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let defaults = SolveOptions::default();
        let opts = SolveOptions {
            abs_tol: abs_tol.unwrap_or(defaults.abs_tol),
            rel_tol: rel_tol.unwrap_or(defaults.rel_tol),
            ..defaults
        };
        let spec = self.spec;
        let run = py.detach(|| run_three_solutions(&spec, &opts)).map_err(py_err)?;
        to_py(py, &ThreeSolutionsRecord::new(&run, &opts))
    }
}

/// `c`, `R`, `m` and `Λ` for the given `N`, `q`, `s`.
#[pyfunction]
fn compute_constants<'py>(py: Python<'py>, n: usize, q: f64, s: f64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &constants(n, q, s).map_err(py_err)?)
}

/// Recomputes energy and residual of a stored solution dict.
#[pyfunction]
fn verify_solution<'py>(py: Python<'py>, record: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let record: SolutionRecord = from_py(py, record)?;
    let v = verify_record(&record).map_err(py_err)?;
    let out = to_py(py, &v)?;
    out.cast::<PyDict>()?.set_item("passed", v.passed())?;
    Ok(out)
}

#[pymodule]
#[pyo3(name = "sgvar")]
fn sgvar_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Gasket>()?;
    m.add_class::<Problem>()?;
    m.add_function(wrap_pyfunction!(compute_constants, m)?)?;
    m.add_function(wrap_pyfunction!(verify_solution, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn module_round_trip() {
        Python::attach(|py| {
            let g = Gasket::new(3, 1).unwrap();
            assert_eq!(g.__len__(), 6);
            assert_eq!(g.edges().len(), 9);
            let rec = g.to_dict(py).unwrap();
            assert_eq!(rec.get_item("denominator").unwrap().extract::<u64>().unwrap(), 2);

            let k = compute_constants(py, 3, 4.0, 1.8).unwrap();
            let r: f64 = k.get_item("R").unwrap().extract().unwrap();
            assert!((r - 1.0 / 81.0).abs() < 1e-15);

            let p = Problem::new(3, 1, 1.5, 1.8, 4.0, 0.0, 0.0).unwrap();
            assert_eq!(p.energy(vec![0.0; 6]).unwrap(), 0.0);
            assert!(p.energy(vec![1.0; 6]).is_err());
            assert!(Problem::new(1, 1, 1.5, 1.8, 4.0, 0.0, 0.0).is_err());
        });
    }

    #[test]
    fn pipeline_report_verifies() {
        Python::attach(|py| {
            let p = Problem::auto(3, 2, 1.5, 1.8, 4.0, None, None).unwrap();
            let report = p.three_solutions(py, None, None).unwrap();
            let solutions = report.get_item("solutions").unwrap();
            assert_eq!(solutions.len().unwrap(), 3);
            for k in 0..3 {
                let v = verify_solution(py, &solutions.get_item(k).unwrap()).unwrap();
                assert!(v.get_item("passed").unwrap().extract::<bool>().unwrap());
            }
        });
    }
}
