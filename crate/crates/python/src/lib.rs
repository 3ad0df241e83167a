//! Python view of the sensing library: detector closed forms, scenario
//! solving, Monte-Carlo validation, and the element-count calculus. Powers
//! cross this boundary in watts; `dbm_to_watts` and `watts_to_dbm` convert.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use ris_sensing::harness::{run_monte_carlo, AlgorithmKind, MonteCarloEstimate, Scenario};
use ris_sensing::math::PowerValue;
use ris_sensing::sizing::{self, SizingInputs, Winner};
use ris_sensing::{channel, detector, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::Construction(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn parse_algorithm(name: &str) -> PyResult<AlgorithmKind> {
    match name {
        "no_ris" => Ok(AlgorithmKind::NoRis),
        "passive" => Ok(AlgorithmKind::Passive),
        "active_one_stage" => Ok(AlgorithmKind::ActiveOneStage),
        "active_two_stage" => Ok(AlgorithmKind::ActiveTwoStage),
        other => Err(PyValueError::new_err(format!(
            "unknown algorithm '{other}'; expected no_ris, passive, active_one_stage, \
             or active_two_stage"
        ))),
    }
}

/// Detector parameters; constructs with the experiment defaults.
#[pyclass(name = "SensingParams")]
#[derive(Clone)]
struct PyParams {
    inner: detector::SensingParams,
}

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (p=0.1, delta2=1e-10, sigma2=1e-10, tau=1e-3, fs=6e6,
                        pf_max=0.1, p_ris_max=1e-4, prob_h1=0.5))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        p: f64,
        delta2: f64,
        sigma2: f64,
        tau: f64,
        fs: f64,
        pf_max: f64,
        p_ris_max: f64,
        prob_h1: f64,
    ) -> PyResult<Self> {
        let inner = detector::SensingParams {
            p,
            delta2,
            sigma2,
            tau,
            fs,
            pf_max,
            p_ris_max,
            prob_h1,
        };
        inner.validate().map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn p(&self) -> f64 {
        self.inner.p
    }
    #[getter]
    fn delta2(&self) -> f64 {
        self.inner.delta2
    }
    #[getter]
    fn sigma2(&self) -> f64 {
        self.inner.sigma2
    }
    #[getter]
    fn tau(&self) -> f64 {
        self.inner.tau
    }
    #[getter]
    fn fs(&self) -> f64 {
        self.inner.fs
    }
    #[getter]
    fn pf_max(&self) -> f64 {
        self.inner.pf_max
    }
    #[getter]
    fn p_ris_max(&self) -> f64 {
        self.inner.p_ris_max
    }
    #[getter]
    fn prob_h1(&self) -> f64 {
        self.inner.prob_h1
    }

    /// Samples in the sensing window, `floor(tau * fs)`.
    fn samples(&self) -> u64 {
        self.inner.samples()
    }

    fn __repr__(&self) -> String {
        format!(
            "SensingParams(p={}, delta2={}, sigma2={}, tau={}, fs={}, pf_max={}, \
             p_ris_max={}, prob_h1={})",
            self.inner.p,
            self.inner.delta2,
            self.inner.sigma2,
            self.inner.tau,
            self.inner.fs,
            self.inner.pf_max,
            self.inner.p_ris_max,
            self.inner.prob_h1
        )
    }
}

/// One channel draw, opaque except for its dimensions and entries.
#[pyclass(name = "Channel")]
struct PyChannel {
    inner: channel::ChannelRealization,
}

#[pymethods]
impl PyChannel {
    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }
    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }
    /// Direct transmitter-to-terminal channel, length m.
    #[getter]
    fn h_d(&self) -> Vec<Complex64> {
        self.inner.h_d.iter().copied().collect()
    }
    /// Transmitter-to-surface channel, length n.
    #[getter]
    fn h_r(&self) -> Vec<Complex64> {
        self.inner.h_r.iter().copied().collect()
    }
    /// Surface-to-terminal matrix as m rows of n entries.
    #[getter]
    fn h_mat(&self) -> Vec<Vec<Complex64>> {
        (0..self.inner.m())
            .map(|i| (0..self.inner.n()).map(|j| self.inner.h_mat[[i, j]]).collect())
            .collect()
    }
}

/// A solved sensing configuration.
#[pyclass(name = "Solution")]
struct PySolution {
    inner: detector::SensingSolution,
}

#[pymethods]
impl PySolution {
    /// Unit-norm receive combiner, length m.
    #[getter]
    fn w(&self) -> Vec<Complex64> {
        self.inner.w.iter().copied().collect()
    }
    /// Surface phase shifts, radians.
    #[getter]
    fn theta(&self) -> Vec<f64> {
        self.inner.theta.clone()
    }
    /// Per-element amplification gains; all ones for a passive surface.
    #[getter]
    fn rho(&self) -> Vec<f64> {
        self.inner.rho.clone()
    }
    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon
    }
    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }
    #[getter]
    fn pd(&self) -> f64 {
        self.inner.pd
    }
    #[getter]
    fn pf(&self) -> f64 {
        self.inner.pf
    }
    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "Solution(pd={:.6}, pf={:.6}, gamma={:.3e}, epsilon={:.3e})",
            self.inner.pd, self.inner.pf, self.inner.gamma, self.inner.epsilon
        )
    }
}

/// Monte-Carlo rates and statistic moments.
#[pyclass(name = "MonteCarloEstimate")]
struct PyEstimate {
    inner: MonteCarloEstimate,
}

#[pymethods]
impl PyEstimate {
    #[getter]
    fn trials(&self) -> u64 {
        self.inner.trials
    }
    #[getter]
    fn pf(&self) -> f64 {
        self.inner.pf
    }
    #[getter]
    fn pd(&self) -> f64 {
        self.inner.pd
    }
    #[getter]
    fn stderr_pf(&self) -> f64 {
        self.inner.stderr_pf
    }
    #[getter]
    fn stderr_pd(&self) -> f64 {
        self.inner.stderr_pd
    }
    #[getter]
    fn t_mean_h0(&self) -> f64 {
        self.inner.t_mean_h0
    }
    #[getter]
    fn t_var_h0(&self) -> f64 {
        self.inner.t_var_h0
    }
    #[getter]
    fn t_mean_h1(&self) -> f64 {
        self.inner.t_mean_h1
    }
    #[getter]
    fn t_var_h1(&self) -> f64 {
        self.inner.t_var_h1
    }

    fn __repr__(&self) -> String {
        format!(
            "MonteCarloEstimate(trials={}, pf={:.4}, pd={:.4})",
            self.inner.trials, self.inner.pf, self.inner.pd
        )
    }
}

/// A deployment at the default geometry: array sizes, fading, design
/// algorithm, and seeds.
#[pyclass(name = "Scenario")]
struct PyScenario {
    inner: Scenario,
}

#[pymethods]
impl PyScenario {
    #[new]
    #[pyo3(signature = (m=8, n=6, algorithm="passive", channel_seed=1, noise_seed=2,
                        prm=None, fading="rayleigh", rician_k_db=3.0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        m: usize,
        n: usize,
        algorithm: &str,
        channel_seed: u64,
        noise_seed: u64,
        prm: Option<PyParams>,
        fading: &str,
        rician_k_db: f64,
    ) -> PyResult<Self> {
        let fading = match fading {
            "rayleigh" => channel::FadingModel::Rayleigh,
            "rician" => channel::FadingModel::Rician {
                k_factor_db: rician_k_db,
            },
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown fading '{other}'; expected rayleigh or rician"
                )))
            }
        };
        let inner = Scenario {
            m,
            n,
            algorithm: parse_algorithm(algorithm)?,
            channel_seed,
            noise_seed,
            prm: prm.map(|p| p.inner).unwrap_or_default(),
            fading,
            ..Default::default()
        };
        inner.validate().map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }
    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }
    #[getter]
    fn algorithm(&self) -> &'static str {
        self.inner.algorithm.label()
    }
    #[getter]
    fn prm(&self) -> PyParams {
        PyParams {
            inner: self.inner.prm.clone(),
        }
    }

    /// Draws the channel for one realization index.
    #[pyo3(signature = (realization=0))]
    fn sample(&self, realization: u64) -> PyResult<PyChannel> {
        Ok(PyChannel {
            inner: self.inner.sample(realization).map_err(py_err)?,
        })
    }

    /// Runs the configured design algorithm on a drawn channel.
    fn solve(&self, ch: &PyChannel) -> PyResult<PySolution> {
        Ok(PySolution {
            inner: self.inner.solve(&ch.inner).map_err(py_err)?,
        })
    }

    /// Simulates the detector trial by trial on a solved configuration.
    fn monte_carlo(
        &self,
        ch: &PyChannel,
        sol: &PySolution,
        trials: u64,
    ) -> PyResult<PyEstimate> {
        Ok(PyEstimate {
            inner: run_monte_carlo(&self.inner, &ch.inner, &sol.inner, trials).map_err(py_err)?,
        })
    }
}

/// Gaussian upper-tail probability.
#[pyfunction]
fn q_function(x: f64) -> f64 {
    ris_sensing::math::q_function(x)
}

/// Inverse of the Gaussian upper-tail probability; needs 0 < p < 1.
#[pyfunction]
fn q_inverse(p: f64) -> PyResult<f64> {
    ris_sensing::math::q_inverse(p).map_err(py_err)
}

/// Detection threshold meeting the false-alarm cap with equality.
#[pyfunction]
fn design_threshold(prm: &PyParams) -> PyResult<f64> {
    detector::design_threshold(&prm.inner).map_err(py_err)
}

#[pyfunction]
fn dbm_to_watts(dbm: f64) -> f64 {
    PowerValue::from_dbm(dbm).watts()
}

#[pyfunction]
fn watts_to_dbm(watts: f64) -> PyResult<f64> {
    Ok(PowerValue::from_watts(watts).map_err(py_err)?.dbm())
}

fn sizing_inputs(prm: &PyParams, h_min: f64, hr_min: f64) -> PyResult<SizingInputs> {
    SizingInputs::new(prm.inner.clone(), h_min, hr_min).map_err(py_err)
}

/// Smallest phase-only element count reaching the three-sigma detection bar
/// on the worst-element channel.
#[pyfunction]
fn min_elements_passive(prm: &PyParams, h_min: f64, hr_min: f64) -> PyResult<usize> {
    sizing::min_elements_passive(&sizing_inputs(prm, h_min, hr_min)?).map_err(py_err)
}

/// Smallest amplifying element count reaching the same bar at the
/// budget-exhausting uniform gain.
#[pyfunction]
fn min_elements_active(prm: &PyParams, h_min: f64, hr_min: f64) -> PyResult<usize> {
    sizing::min_elements_active(&sizing_inputs(prm, h_min, hr_min)?).map_err(py_err)
}

/// The uniform per-element gain that exhausts the amplification budget.
#[pyfunction]
fn optimal_uniform_amplification(
    prm: &PyParams,
    h_min: f64,
    hr_min: f64,
    n: usize,
) -> PyResult<f64> {
    sizing::optimal_uniform_amplification(&sizing_inputs(prm, h_min, hr_min)?, n).map_err(py_err)
}

/// Orders the two surface types at the given counts; returns the winner
/// ("active_wins" or "passive_wins") and whether the count-only shortcut
/// predicate held.
#[pyfunction]
fn compare_active_passive(
    prm: &PyParams,
    h_min: f64,
    hr_min: f64,
    n_act: usize,
    n_pas: usize,
) -> PyResult<(String, bool)> {
    let (winner, shortcut) =
        sizing::compare_active_passive(&sizing_inputs(prm, h_min, hr_min)?, n_act, n_pas)
            .map_err(py_err)?;
    let name = match winner {
        Winner::ActiveWins => "active_wins",
        Winner::PassiveWins => "passive_wins",
    };
    Ok((name.to_string(), shortcut))
}

/// Element counts affordable within a total deployment budget, watts in.
#[pyfunction]
fn elements_from_power_budget(
    p_total: f64,
    p_c: f64,
    p_dc: f64,
    p_ris_max: f64,
) -> PyResult<(usize, usize)> {
    let pw = |w: f64| PowerValue::from_watts(w).map_err(py_err);
    sizing::elements_from_power_budget(pw(p_total)?, pw(p_c)?, pw(p_dc)?, pw(p_ris_max)?)
        .map_err(py_err)
}

#[pymodule]
fn ris_sensing_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyParams>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyChannel>()?;
    m.add_class::<PySolution>()?;
    m.add_class::<PyEstimate>()?;
    m.add_function(wrap_pyfunction!(q_function, m)?)?;
    m.add_function(wrap_pyfunction!(q_inverse, m)?)?;
    m.add_function(wrap_pyfunction!(design_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(dbm_to_watts, m)?)?;
    m.add_function(wrap_pyfunction!(watts_to_dbm, m)?)?;
    m.add_function(wrap_pyfunction!(min_elements_passive, m)?)?;
    m.add_function(wrap_pyfunction!(min_elements_active, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_uniform_amplification, m)?)?;
    m.add_function(wrap_pyfunction!(compare_active_passive, m)?)?;
    m.add_function(wrap_pyfunction!(elements_from_power_budget, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_binding_solves_deterministically() {
        let sc = PyScenario::new(4, 3, "passive", 5, 6, None, "rayleigh", 3.0).unwrap();
        let ch = sc.sample(0).unwrap();
        let a = sc.solve(&ch).unwrap();
        let b = sc.solve(&ch).unwrap();
        assert_eq!(a.pd(), b.pd());
        assert_eq!(a.theta(), b.theta());
        assert_eq!(a.w().len(), 4);
        assert_eq!(ch.h_mat().len(), 4);
        assert_eq!(ch.h_mat()[0].len(), 3);
    }

    #[test]
    fn errors_surface_as_python_exceptions() {
        pyo3::Python::with_gil(|py| {
            let bad = PyParams::new(0.1, 1e-10, 1e-10, 1e-3, 6e6, 0.7, 1e-4, 0.5);
            let err = bad.err().expect("pf_max of 0.7 is out of range");
            assert!(err.is_instance_of::<PyValueError>(py));

            let alg = parse_algorithm("two_stage");
            assert!(alg.err().unwrap().is_instance_of::<PyValueError>(py));
        });
    }

    #[test]
    fn monte_carlo_binding_tracks_the_closed_forms() {
        let prm = PyParams::new(0.1, 1e-10, 1e-10, 1e-4, 6e6, 0.1, 1e-4, 0.5).unwrap();
        let sc = PyScenario::new(3, 2, "passive", 1, 2, Some(prm), "rayleigh", 3.0).unwrap();
        let ch = sc.sample(0).unwrap();
        let sol = sc.solve(&ch).unwrap();
        let est = sc.monte_carlo(&ch, &sol, 2000).unwrap();
        assert!((est.pf() - sol.pf()).abs() <= 3.0 * est.stderr_pf() + 0.01);
    }
}
