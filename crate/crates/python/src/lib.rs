//! Python bindings: model fitting, labeling, simulation, evaluation helpers
//! and the file-based pipeline stages.

use std::path::Path;

use motif_forge_core::cmmm::{self, CmmmDims, ContextualLabeling, FitCmmmConfig};
use motif_forge_core::context::expert::{expert_context as core_expert, ExpertRule};
use motif_forge_core::context::hmm::{hmm_decode, hmm_fit, HmmConfig};
use motif_forge_core::derived::{discover_derived as core_discover_derived, DerivedConfig};
use motif_forge_core::eval::simulation::{run_sim_experiment as core_sim_experiment, SimExperimentConfig};
use motif_forge_core::mmm::{self, MmmConfig};
use motif_forge_core::pipeline;
use motif_forge_core::signal::{sax_breakpoints as core_breakpoints, sax_discretize, SaxConfig};
use motif_forge_core::simgen::{gen_sim_dataset, random_truth_model, TruthSpec};
use motif_forge_core::{eval, rng, Error};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(motif_forge, MotifForgeError, PyException);

fn err(e: Error) -> PyErr {
    MotifForgeError::new_err(e.to_string())
}

fn json_err(e: serde_json::Error) -> PyErr {
    MotifForgeError::new_err(format!("invalid JSON: {e}"))
}

fn labeling_tuple(l: &ContextualLabeling) -> (Vec<usize>, Vec<usize>) {
    (l.contexts.clone(), l.motifs.clone())
}

/// A fitted contextual motif mixture model.
#[pyclass(module = "motif_forge", skip_from_py_object)]
#[derive(Clone)]
pub struct CmmmModel {
    inner: cmmm::CmmmModel,
}

#[pymethods]
impl CmmmModel {
    #[getter]
    fn alpha(&self) -> Vec<f64> {
        self.inner.alpha.clone()
    }

    #[getter]
    fn gamma(&self) -> Vec<Vec<f64>> {
        self.inner.gamma.clone()
    }

    #[getter]
    fn motif_means(&self) -> Vec<Vec<f64>> {
        self.inner.theta.means.clone()
    }

    #[getter]
    fn motif_variances(&self) -> Vec<Vec<f64>> {
        self.inner.theta.variances.clone()
    }

    #[getter]
    fn background(&self) -> (f64, f64) {
        (self.inner.theta.background_mean, self.inner.theta.background_var)
    }

    #[getter]
    fn dims(&self) -> (usize, usize, usize, usize) {
        let d = self.inner.dims;
        (d.n_contexts, d.n_motifs, d.motif_len, d.context_len)
    }

    /// Marginal log-likelihood of one segment.
    fn log_likelihood(&self, values: Vec<f64>) -> f64 {
        self.inner.log_likelihood(&values)
    }

    /// Joint maximum-likelihood `(contexts, motifs)` labels of one segment.
    fn assign(&self, values: Vec<f64>) -> (Vec<usize>, Vec<usize>) {
        labeling_tuple(&cmmm::assign_contextual(&self.inner, &values))
    }

    /// Draws a segment of `n_context_windows` windows: `(values, contexts, motifs)`.
    #[pyo3(signature = (n_context_windows, seed=0))]
    fn sample(&self, n_context_windows: usize, seed: u64) -> (Vec<f64>, Vec<usize>, Vec<usize>) {
        let (v, l) = cmmm::sample_cmmm(&self.inner, n_context_windows, &mut rng::from_seed(seed));
        (v, l.contexts, l.motifs)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(json_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: cmmm::CmmmModel = serde_json::from_str(text).map_err(json_err)?;
        inner.check_invariants().map_err(err)?;
        Ok(CmmmModel { inner })
    }

    fn __repr__(&self) -> String {
        let d = self.inner.dims;
        format!(
            "CmmmModel(n_contexts={}, n_motifs={}, motif_len={}, context_len={})",
            d.n_contexts, d.n_motifs, d.motif_len, d.context_len
        )
    }
}

/// A fitted contextless motif mixture model.
#[pyclass(module = "motif_forge", skip_from_py_object)]
#[derive(Clone)]
pub struct MotifModel {
    inner: mmm::MotifModel,
}

#[pymethods]
impl MotifModel {
    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.gamma.clone()
    }

    #[getter]
    fn motif_means(&self) -> Vec<Vec<f64>> {
        self.inner.theta.means.clone()
    }

    #[getter]
    fn log_likelihood_trace(&self) -> Vec<f64> {
        self.inner.fit.as_ref().map(|f| f.log_likelihood_trace.clone()).unwrap_or_default()
    }

    fn assign(&self, values: Vec<f64>) -> Vec<usize> {
        mmm::assign_motifs(&self.inner, &values).labels
    }

    fn log_likelihood(&self, values: Vec<f64>) -> f64 {
        mmm::mmm_log_likelihood(&self.inner, &values)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(json_err)
    }

    fn __repr__(&self) -> String {
        format!("MotifModel(n_motifs={}, motif_len={})", self.inner.n_motifs, self.inner.motif_len)
    }
}

/// Fits a CMMM by MCMC. Returns the model and the `(contexts, motifs)`
/// labels of every training segment.
#[pyfunction]
#[pyo3(signature = (segments, n_contexts=2, n_motifs=20, motif_len=8, context_len=72, n_samples=2000, burn_in=1000, seed=0))]
#[allow(clippy::too_many_arguments)]
fn fit_cmmm(
    py: Python<'_>,
    segments: Vec<Vec<f64>>,
    n_contexts: usize,
    n_motifs: usize,
    motif_len: usize,
    context_len: usize,
    n_samples: usize,
    burn_in: usize,
    seed: u64,
) -> PyResult<(CmmmModel, Vec<(Vec<usize>, Vec<usize>)>)> {
    let cfg = FitCmmmConfig {
        n_samples,
        burn_in,
        ..FitCmmmConfig::new(CmmmDims::new(n_contexts, n_motifs, motif_len, context_len), seed)
    };
    let fit = py.detach(|| cmmm::fit_cmmm(&segments, &cfg)).map_err(err)?;
    let labels = fit.labelings.iter().map(labeling_tuple).collect();
    Ok((CmmmModel { inner: fit.model }, labels))
}

/// Fits a motif mixture model by EM.
#[pyfunction]
#[pyo3(signature = (segments, n_motifs=20, motif_len=8, seed=0))]
fn fit_mmm(py: Python<'_>, segments: Vec<Vec<f64>>, n_motifs: usize, motif_len: usize, seed: u64) -> PyResult<MotifModel> {
    let cfg = MmmConfig {
        n_motifs,
        motif_len,
        seed,
        ..MmmConfig::default()
    };
    let inner = py.detach(|| mmm::fit_mmm(&segments, &cfg)).map_err(err)?;
    Ok(MotifModel { inner })
}

#[pyfunction]
#[pyo3(signature = (values, alphabet_size=5, paa_width=2))]
fn sax(values: Vec<f64>, alphabet_size: usize, paa_width: usize) -> PyResult<Vec<u32>> {
    let cfg = SaxConfig {
        alphabet_size,
        paa_width,
    };
    let word = sax_discretize(&values, &cfg).map_err(err)?;
    Ok(word.symbols.into_iter().map(u32::from).collect())
}

#[pyfunction]
fn sax_breakpoints(alphabet_size: usize) -> Vec<f64> {
    core_breakpoints(alphabet_size)
}

/// Per-sample expert-rule contexts (0 or 1).
#[pyfunction]
#[pyo3(signature = (values, k=6, tau=10.0, dilation=6))]
fn expert_context(values: Vec<f64>, k: usize, tau: f64, dilation: usize) -> PyResult<Vec<usize>> {
    Ok(core_expert(&values, &ExpertRule { k, tau, dilation }).map_err(err)?.labels)
}

/// Fits an HMM on all segments and returns the Viterbi state path of each.
#[pyfunction]
#[pyo3(signature = (segments, n_states=2, seed=0))]
fn hmm_contexts(py: Python<'_>, segments: Vec<Vec<f64>>, n_states: usize, seed: u64) -> PyResult<Vec<Vec<usize>>> {
    let cfg = HmmConfig {
        n_states,
        seed,
        ..HmmConfig::default()
    };
    py.detach(|| {
        let model = hmm_fit(&segments, &cfg)?;
        Ok(segments.iter().map(|s| hmm_decode(&model, s).labels).collect())
    })
    .map_err(err)
}

/// Data-derived motifs as a JSON array; `config` is an optional JSON object.
#[pyfunction]
#[pyo3(signature = (segments, config=None))]
fn discover_derived(py: Python<'_>, segments: Vec<Vec<f64>>, config: Option<&str>) -> PyResult<String> {
    let cfg: DerivedConfig = match config {
        Some(c) => serde_json::from_str(c).map_err(json_err)?,
        None => DerivedConfig::default(),
    };
    let motifs = py.detach(|| core_discover_derived(&segments, &cfg)).map_err(err)?;
    serde_json::to_string(&motifs).map_err(json_err)
}

/// Draws a truth model and labeled signals. Returns `(model, dict)` where
/// the dict holds signals, contexts, motifs, scores, probabilities, outcomes.
#[pyfunction]
#[pyo3(signature = (n_signals, windows_per_signal=4, beta=1.0, seed=0, n_motifs=20, motif_len=8, context_len=72, n_contexts=2))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    n_signals: usize,
    windows_per_signal: usize,
    beta: f64,
    seed: u64,
    n_motifs: usize,
    motif_len: usize,
    context_len: usize,
    n_contexts: usize,
) -> PyResult<(CmmmModel, Bound<'py, PyDict>)> {
    let spec = TruthSpec {
        n_motifs,
        motif_len,
        context_len,
        n_contexts,
        alpha: None,
        ..TruthSpec::default()
    };
    let sim = py
        .detach(|| {
            let truth = random_truth_model(&spec, seed)?;
            gen_sim_dataset(&truth, n_signals, windows_per_signal, beta, seed)
        })
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("signals", &sim.signals)?;
    d.set_item("contexts", sim.truth.iter().map(|l| l.contexts.clone()).collect::<Vec<_>>())?;
    d.set_item("motifs", sim.truth.iter().map(|l| l.motifs.clone()).collect::<Vec<_>>())?;
    d.set_item("values", &sim.values)?;
    d.set_item("scores", &sim.scores)?;
    d.set_item("probabilities", &sim.probabilities)?;
    d.set_item("outcomes", &sim.outcomes)?;
    Ok((CmmmModel { inner: sim.true_model }, d))
}

#[pyfunction]
fn auc(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    eval::auc(&scores, &labels).map_err(err)
}

/// Runs the simulation β-sweep; `config` is a JSON object (missing fields
/// take defaults). Returns rows `(method, beta, mean_auc, std_auc)`.
#[pyfunction]
#[pyo3(signature = (config="{}"))]
fn run_sim_experiment(py: Python<'_>, config: &str) -> PyResult<Vec<(String, f64, f64, f64)>> {
    let cfg: SimExperimentConfig = serde_json::from_str(config).map_err(json_err)?;
    let res = py.detach(|| core_sim_experiment(&cfg)).map_err(err)?;
    Ok(res.rows.into_iter().map(|r| (r.method, r.beta, r.mean_auc, r.std_auc)).collect())
}

fn stage<T: serde::de::DeserializeOwned>(config: &str) -> PyResult<T> {
    serde_json::from_str(config).map_err(json_err)
}

/// Pipeline stage `preprocess`; returns `(kept, excluded)` day counts.
#[pyfunction]
fn preprocess(py: Python<'_>, config: &str, out: &str) -> PyResult<(usize, usize)> {
    let cfg: pipeline::PreprocessConfig = stage(config)?;
    py.detach(|| pipeline::run_preprocess(&cfg, Path::new(out))).map_err(err)
}

/// Pipeline stage `discover`; returns the number of motif ids.
#[pyfunction]
fn discover(py: Python<'_>, config: &str, out: &str) -> PyResult<usize> {
    let cfg: pipeline::DiscoverConfig = stage(config)?;
    py.detach(|| pipeline::run_discover(&cfg, Path::new(out)))
        .map(|s| s.n_motifs)
        .map_err(err)
}

/// Pipeline stage `simulate`; returns the number of positive outcomes.
#[pyfunction]
fn simulate_to_dir(py: Python<'_>, config: &str, out: &str) -> PyResult<usize> {
    let cfg: pipeline::SimulateConfig = stage(config)?;
    py.detach(|| pipeline::run_simulate(&cfg, Path::new(out)))
        .map(|s| s.outcomes.iter().filter(|&&y| y).count())
        .map_err(err)
}

/// Pipeline stage `evaluate`; returns the number of result rows.
#[pyfunction]
fn evaluate(py: Python<'_>, config: &str, out: &str) -> PyResult<usize> {
    let cfg: pipeline::EvaluateConfig = stage(config)?;
    py.detach(|| pipeline::run_evaluate(&cfg, Path::new(out)))
        .map(|o| match o {
            pipeline::EvaluateOutput::Simulation(r) => r.rows.len(),
            pipeline::EvaluateOutput::Real(t) => t.entries.len(),
        })
        .map_err(err)
}

#[pyfunction]
fn report(dir: &str) -> PyResult<String> {
    pipeline::report(Path::new(dir)).map_err(err)
}

/// Adds every class and function to `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("MotifForgeError", m.py().get_type::<MotifForgeError>())?;
    m.add("__version__", pipeline::TOOL_VERSION)?;
    m.add_class::<CmmmModel>()?;
    m.add_class::<MotifModel>()?;
    m.add_function(wrap_pyfunction!(fit_cmmm, m)?)?;
    m.add_function(wrap_pyfunction!(fit_mmm, m)?)?;
    m.add_function(wrap_pyfunction!(sax, m)?)?;
    m.add_function(wrap_pyfunction!(sax_breakpoints, m)?)?;
    m.add_function(wrap_pyfunction!(expert_context, m)?)?;
    m.add_function(wrap_pyfunction!(hmm_contexts, m)?)?;
    m.add_function(wrap_pyfunction!(discover_derived, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(run_sim_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(preprocess, m)?)?;
    m.add_function(wrap_pyfunction!(discover, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_to_dir, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(report, m)?)?;
    Ok(())
}

#[pymodule]
fn motif_forge(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
