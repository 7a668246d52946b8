//! Python bindings. The module is importable as `mecmfg`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use mecmfg::des::{replicate, SimConfig, StoppingRule};
use mecmfg::mfg::{self, deploy, EquilibriumResult, InitialState};
use mecmfg::models::{self, ChainParams, ClassMap, TaskClass, UeProfile};

fn err(e: mecmfg::Error) -> PyErr {
    match e {
        mecmfg::Error::InvalidParameter { .. }
        | mecmfg::Error::InvalidConfig(_)
        | mecmfg::Error::InvalidSpec(_)
        | mecmfg::Error::IndexOutOfRange { .. }
        | mecmfg::Error::NoServicePath => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn triple<T: Copy>(m: &ClassMap<T>) -> (T, T, T) {
    (m.red, m.yellow, m.green)
}

#[pyclass(name = "Policy", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyPolicy(models::Policy);

#[pymethods]
impl PyPolicy {
    #[new]
    fn new(p_r: f64, p_y: f64, p_g: f64, mu0: f64) -> Self {
        Self(models::Policy::new(p_r, p_y, p_g, mu0))
    }

    #[getter]
    fn p(&self) -> (f64, f64, f64) {
        triple(&self.0.p)
    }

    #[getter]
    fn mu0(&self) -> f64 {
        self.0.mu0
    }

    fn is_feasible(&self, f_max: f64) -> bool {
        self.0.is_feasible(f_max)
    }

    fn __repr__(&self) -> String {
        let (r, y, g) = self.p();
        format!("Policy(p_r={r}, p_y={y}, p_g={g}, mu0={})", self.0.mu0)
    }
}

#[pyclass(name = "SystemConfig", frozen, from_py_object)]
#[derive(Clone)]
struct PySystemConfig(models::SystemConfig);

#[pymethods]
impl PySystemConfig {
    /// Single-profile system. Use `from_json` for several device types.
    #[new]
    #[pyo3(signature = (num_ues, es_rate, scalarization = 10.0, aoi_weights = (20.0, 5.0, 2.0), arrival_rates = (1.0, 3.0, 6.0), eta = 1.0, f_max = 2.0))]
    fn new(
        num_ues: usize,
        es_rate: f64,
        scalarization: f64,
        aoi_weights: (f64, f64, f64),
        arrival_rates: (f64, f64, f64),
        eta: f64,
        f_max: f64,
    ) -> Self {
        let (wr, wy, wg) = aoi_weights;
        let (lr, ly, lg) = arrival_rates;
        Self(models::SystemConfig {
            num_ues,
            es_rate,
            scalarization,
            aoi_weights: ClassMap::new(wr, wy, wg),
            profiles: vec![UeProfile {
                arrival_rates: ClassMap::new(lr, ly, lg),
                eta,
                f_max,
                weight: 1.0,
            }],
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        serde_json::from_str(text)
            .map(Self)
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.0).expect("config serializes")
    }

    #[getter]
    fn num_ues(&self) -> usize {
        self.0.num_ues
    }

    #[getter]
    fn es_rate(&self) -> f64 {
        self.0.es_rate
    }

    fn __repr__(&self) -> String {
        format!("SystemConfig({})", self.to_json())
    }
}

#[pyclass(name = "SolverSettings", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PySolverSettings(mfg::SolverSettings);

#[pymethods]
impl PySolverSettings {
    #[new]
    #[pyo3(signature = (**overrides))]
    fn new(overrides: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut value =
            serde_json::to_value(mfg::SolverSettings::default()).expect("settings serialize");
        if let Some(kw) = overrides {
            for (k, v) in kw.iter() {
                let key: String = k.extract()?;
                if value.get(&key).is_none() {
                    return Err(PyValueError::new_err(format!(
                        "unknown solver setting {key:?}"
                    )));
                }
                let v = if key.starts_with("max_") || key == "rng_seed" {
                    serde_json::Value::from(v.extract::<u64>()?)
                } else {
                    serde_json::Value::from(v.extract::<f64>()?)
                };
                value[&key] = v;
            }
        }
        let s: mfg::SolverSettings =
            serde_json::from_value(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
        s.validate().map_err(err)?;
        Ok(Self(s))
    }

    fn __repr__(&self) -> String {
        format!(
            "SolverSettings({})",
            serde_json::to_string(&self.0).expect("settings serialize")
        )
    }
}

#[pyclass(name = "Equilibrium", frozen)]
struct PyEquilibrium(EquilibriumResult);

#[pymethods]
impl PyEquilibrium {
    #[getter]
    fn policies(&self) -> Vec<PyPolicy> {
        self.0.policies.iter().copied().map(PyPolicy).collect()
    }

    #[getter]
    fn mean_field(&self) -> (f64, f64, f64) {
        triple(&self.0.mean_field.rho)
    }

    #[getter]
    fn costs(&self) -> Vec<f64> {
        self.0.costs.clone()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.0.converged
    }

    #[getter]
    fn outer_iterations(&self) -> usize {
        self.0.outer_iterations
    }

    /// `(iteration, rho, step)` per outer iteration.
    #[getter]
    fn trace(&self) -> Vec<(usize, (f64, f64, f64), f64)> {
        self.0
            .trace
            .iter()
            .map(|t| (t.iteration, triple(&t.rho.rho), t.step))
            .collect()
    }

    fn fixed_point_residual(&self, config: &PySystemConfig) -> f64 {
        self.0.fixed_point_residual(&config.0)
    }

    /// Largest relative gain of a unilateral deviation in the finite population.
    #[pyo3(signature = (config, settings = None))]
    fn exploitability(
        &self,
        config: &PySystemConfig,
        settings: Option<PySolverSettings>,
    ) -> PyResult<f64> {
        let s = settings.map_or_else(mfg::SolverSettings::default, |s| s.0);
        Ok(mfg::exploitability(&self.0, &config.0, &s)
            .map_err(err)?
            .max_normalized_gap)
    }

    fn __repr__(&self) -> String {
        format!(
            "Equilibrium(converged={}, outer_iterations={}, mean_field={:?})",
            self.0.converged,
            self.0.outer_iterations,
            self.mean_field()
        )
    }
}

/// Closed-form average age of red tasks.
#[pyfunction]
fn red_aoi(
    arrival: f64,
    local_prob: f64,
    same_class: f64,
    mu0: f64,
    es_rate: f64,
) -> PyResult<f64> {
    models::red_aoi_closed_form(&ChainParams::red(
        arrival, local_prob, same_class, mu0, es_rate,
    ))
    .map_err(err)
}

/// Average age of yellow or green tasks from the linear-solve pipeline.
#[pyfunction]
fn yg_aoi(
    arrival: f64,
    local_prob: f64,
    same_class: f64,
    higher_es: f64,
    higher_local: f64,
    mu0: f64,
    es_rate: f64,
) -> PyResult<f64> {
    models::yg_aoi(&ChainParams {
        arrival,
        local_prob,
        same_class,
        higher_es,
        higher_local,
        local_rate: mu0,
        es_rate,
    })
    .map_err(err)
}

/// Cost breakdown of one device when every device runs `policy`.
#[pyfunction]
fn evaluate<'py>(
    py: Python<'py>,
    config: &PySystemConfig,
    policy: PyPolicy,
) -> PyResult<Bound<'py, PyDict>> {
    let policies = vec![policy.0; config.0.profiles.len()];
    let c = models::evaluate_finite(&deploy(&config.0, &policies), 0, &config.0).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("aoi", triple(&c.aoi.per_class))?;
    d.set_item("weighted_aoi", c.aoi.weighted)?;
    d.set_item("power", c.power)?;
    d.set_item("cost", c.cost)?;
    Ok(d)
}

/// Mean-field equilibrium from a symmetric start.
#[pyfunction]
#[pyo3(signature = (config, initial, settings = None))]
fn solve(
    config: &PySystemConfig,
    initial: PyPolicy,
    settings: Option<PySolverSettings>,
) -> PyResult<PyEquilibrium> {
    let s = settings.map_or_else(mfg::SolverSettings::default, |s| s.0);
    mfg::solve_mfe(
        &config.0,
        &s,
        &InitialState::symmetric(&config.0, initial.0),
    )
    .map(PyEquilibrium)
    .map_err(err)
}

/// Replicated simulation with every device running `policy`. Values are
/// `(mean, std_error)` pairs averaged over devices.
#[pyfunction]
#[pyo3(signature = (config, policy, events, seed = 0, replications = 1))]
fn simulate<'py>(
    py: Python<'py>,
    config: &PySystemConfig,
    policy: PyPolicy,
    events: u64,
    seed: u64,
    replications: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = SimConfig::symmetric(
        config.0.clone(),
        policy.0,
        StoppingRule::Events(events),
        seed,
    );
    let rep = py.detach(|| replicate(&cfg, replications)).map_err(err)?;
    let d = PyDict::new(py);
    let aoi = PyDict::new(py);
    let busy = PyDict::new(py);
    for c in TaskClass::ALL {
        let a = rep.estimate(|s| s.device_mean(|u| u.classes[c].aoi));
        let b = rep.estimate(|s| s.device_mean(|u| u.busy[c]));
        aoi.set_item(c.name(), (a.mean, a.std_error))?;
        busy.set_item(c.name(), (b.mean, b.std_error))?;
    }
    let p = rep.estimate(|s| s.device_mean(|u| u.power));
    d.set_item("aoi", aoi)?;
    d.set_item("busy", busy)?;
    d.set_item("power", (p.mean, p.std_error))?;
    d.set_item("replications", replications)?;
    Ok(d)
}

#[pymodule(name = "mecmfg")]
fn init(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPolicy>()?;
    m.add_class::<PySystemConfig>()?;
    m.add_class::<PySolverSettings>()?;
    m.add_class::<PyEquilibrium>()?;
    m.add_function(wrap_pyfunction!(red_aoi, m)?)?;
    m.add_function(wrap_pyfunction!(yg_aoi, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
