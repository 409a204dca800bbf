use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use otc_core::io::RunConfig;
use otc_core::sim::{self, Population};
use otc_core::steady::{self, HeterogeneousOutcome, SteadySolution};
use otc_core::{
    HeterogeneousParams, MarketModel, ModelParams, NonSegmentedParams, PartiallySegmentedParams,
    StateDistribution,
};

fn value_error(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_error(e: impl ToString) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// A market model of any of the three classes.
#[pyclass(name = "Model", module = "otc_market", frozen)]
struct PyModel {
    inner: ModelParams,
}

impl PyModel {
    fn checked(inner: ModelParams) -> PyResult<Self> {
        inner.check_structure().map_err(value_error)?;
        Ok(Self { inner })
    }

    fn state(&self, values: Vec<f64>) -> StateDistribution {
        StateDistribution::new(self.inner.class(), values)
    }
}

fn solution_dict<'py>(
    py: Python<'py>,
    labels: &[String],
    sol: &SteadySolution,
) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("no_steady_state", false)?;
    d.set_item("method", sol.method.as_str())?;
    d.set_item("residual_inf_norm", sol.residual_inf_norm)?;
    d.set_item("certified_box_volume", sol.certified_box_volume)?;
    d.set_item("state", sol.state.values.clone())?;
    d.set_item("labels", labels.to_vec())?;
    Ok(d)
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    #[pyo3(signature = (lambda_, gamma_u, gamma_d, gamma_ui, gamma_di, m))]
    fn non_segmented(
        lambda_: Vec<f64>,
        gamma_u: f64,
        gamma_d: f64,
        gamma_ui: Vec<f64>,
        gamma_di: Vec<f64>,
        m: Vec<f64>,
    ) -> PyResult<Self> {
        Self::checked(ModelParams::NonSegmented(NonSegmentedParams {
            lambda: lambda_,
            gamma_u,
            gamma_d,
            gamma_ui,
            gamma_di,
            m,
        }))
    }

    #[staticmethod]
    #[pyo3(signature = (lambda_, gamma_ui, gamma_di, gamma_tilde_ui, gamma_tilde_di, m))]
    fn partially_segmented(
        lambda_: Vec<f64>,
        gamma_ui: Vec<f64>,
        gamma_di: Vec<f64>,
        gamma_tilde_ui: Vec<f64>,
        gamma_tilde_di: Vec<f64>,
        m: Vec<f64>,
    ) -> PyResult<Self> {
        Self::checked(ModelParams::PartiallySegmented(PartiallySegmentedParams {
            lambda: lambda_,
            gamma_ui,
            gamma_di,
            gamma_tilde_ui,
            gamma_tilde_di,
            m,
        }))
    }

    #[staticmethod]
    #[pyo3(signature = (a, b, c, d, s, lambda_ = 1.0))]
    fn heterogeneous(
        a: f64,
        b: f64,
        c: [f64; 3],
        d: [f64; 3],
        s: f64,
        lambda_: f64,
    ) -> PyResult<Self> {
        Self::checked(ModelParams::Heterogeneous(HeterogeneousParams {
            lambda: lambda_,
            a,
            b,
            c,
            d,
            s,
        }))
    }

    /// The non-existence family at supply `s`.
    #[staticmethod]
    fn counterexample(s: f64) -> PyResult<Self> {
        Self::checked(ModelParams::Heterogeneous(
            HeterogeneousParams::counterexample(s),
        ))
    }

    /// Parameters from the `[params]` block of a TOML config.
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let cfg = RunConfig::from_toml_str(text).map_err(value_error)?;
        Self::checked(cfg.params)
    }

    #[getter]
    fn model_class(&self) -> &'static str {
        self.inner.class().as_str()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn labels(&self) -> Vec<String> {
        self.inner.state_labels()
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(value_error)
    }

    fn rhs(&self, mu: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.rhs(&self.state(mu)).map_err(value_error)
    }

    /// Non-zero per-investor transition rates at `mu` as `(from, to, rate)`.
    fn kernel(&self, mu: Vec<f64>) -> PyResult<Vec<(usize, usize, f64)>> {
        let mu = self.state(mu);
        self.inner.check_shape(&mu).map_err(value_error)?;
        Ok(self
            .inner
            .kernel_at(&mu.values)
            .entries
            .iter()
            .map(|t| (t.from, t.to, t.rate))
            .collect())
    }

    #[pyo3(signature = (tol = 1e-10))]
    fn steady<'py>(&self, py: Python<'py>, tol: f64) -> PyResult<Bound<'py, PyDict>> {
        let labels = self.inner.state_labels();
        match &self.inner {
            ModelParams::NonSegmented(p) => solution_dict(
                py,
                &labels,
                &steady::solve_nonsegmented(p, tol).map_err(runtime_error)?,
            ),
            ModelParams::PartiallySegmented(p) => solution_dict(
                py,
                &labels,
                &steady::solve_partially_segmented(p, tol).map_err(runtime_error)?,
            ),
            ModelParams::Heterogeneous(p) => {
                match steady::solve_heterogeneous(p, tol).map_err(runtime_error)? {
                    HeterogeneousOutcome::Steady(sol) => {
                        let d = solution_dict(py, &labels, &sol.solution)?;
                        d.set_item(
                            "frozen_states",
                            sol.frozen_states
                                .iter()
                                .map(|s| s.to_vec())
                                .collect::<Vec<_>>(),
                        )?;
                        Ok(d)
                    }
                    HeterogeneousOutcome::NoSteadyState(r) => {
                        let d = PyDict::new(py);
                        d.set_item("no_steady_state", true)?;
                        d.set_item("conclusive", r.conclusive)?;
                        d.set_item("best_residual", r.best_residual)?;
                        d.set_item(
                            "frozen_states",
                            r.frozen_states
                                .iter()
                                .map(|s| s.to_vec())
                                .collect::<Vec<_>>(),
                        )?;
                        d.set_item("labels", labels)?;
                        Ok(d)
                    }
                }
            }
        }
    }

    /// Returns `(times, states)`.
    #[pyo3(signature = (state0, t_end, step = 1e-3, sample_every = 1.0))]
    fn integrate(
        &self,
        py: Python<'_>,
        state0: Vec<f64>,
        t_end: f64,
        step: f64,
        sample_every: f64,
    ) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let s0 = self.state(state0);
        let traj = py
            .detach(|| otc_core::integrate(&self.inner, &s0, t_end, step, sample_every))
            .map_err(runtime_error)?;
        Ok((
            traj.times,
            traj.states.into_iter().map(|s| s.values).collect(),
        ))
    }

    #[pyo3(signature = (state0, tol = 1e-10, t_max = 1e4, step = 1e-3))]
    fn relax<'py>(
        &self,
        py: Python<'py>,
        state0: Vec<f64>,
        tol: f64,
        t_max: f64,
        step: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let s0 = self.state(state0);
        let r = py
            .detach(|| otc_core::relax_to_steady(&self.inner, &s0, tol, t_max, step))
            .map_err(runtime_error)?;
        let d = PyDict::new(py);
        d.set_item("state", r.final_state.values)?;
        d.set_item("residual_inf_norm", r.residual_inf_norm)?;
        d.set_item("elapsed", r.elapsed_model_time)?;
        d.set_item("converged", r.converged)?;
        Ok(d)
    }

    /// Finite-population run from `initial` rounded to `n` investors.
    /// Returns `(times, empirical_states, event_count)`.
    #[pyo3(signature = (initial, n, t_end, sample_every = 1.0, seed = 1))]
    fn simulate(
        &self,
        py: Python<'_>,
        initial: Vec<f64>,
        n: usize,
        t_end: f64,
        sample_every: f64,
        seed: u64,
    ) -> PyResult<(Vec<f64>, Vec<Vec<f64>>, u64)> {
        let mu = self.state(initial);
        let res = py
            .detach(|| {
                let pop = Population::from_distribution(&self.inner, &mu, n)?;
                sim::simulate(&self.inner, pop, t_end, sample_every, seed)
            })
            .map_err(runtime_error)?;
        Ok((
            res.sample_times,
            res.empirical.into_iter().map(|s| s.values).collect(),
            res.event_count,
        ))
    }

    fn __repr__(&self) -> String {
        format!("Model({:?})", self.inner)
    }
}

/// Closed-form candidate for the non-existence family, or `None`.
#[pyfunction]
fn counterexample_root(s: f64) -> Option<f64> {
    steady::counterexample_root(s)
}

/// `"yes"`, `"boundary"` or `"no"`.
#[pyfunction]
fn counterexample_verdict(s: f64) -> &'static str {
    steady::counterexample_verdict(s).as_str()
}

/// Subdivision steps needed to shrink `[0,1]^n` to volume `eps`.
#[pyfunction]
fn iterations_needed(eps: f64, n: usize) -> PyResult<usize> {
    otc_core::iterations_needed(eps, n).map_err(value_error)
}

#[pymodule]
fn otc_market(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(counterexample_root, m)?)?;
    m.add_function(wrap_pyfunction!(counterexample_verdict, m)?)?;
    m.add_function(wrap_pyfunction!(iterations_needed, m)?)?;
    Ok(())
}
