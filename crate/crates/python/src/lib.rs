//! Python bindings: configuration, the pipeline stages, the synthetic corpus
//! generator and the similarity helpers.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use lshdedup::compare::{sim_sig, DuplicatePair};
use lshdedup::config::parse_bytes;
use lshdedup::eval::cmd_eval_accuracy;
use lshdedup::graph::{components, union_pairs};
use lshdedup::lsh::BucketScale;
use lshdedup::minhash::{derive_family, signature_of_text};
use lshdedup::oracle::exact_jaccard as exact_jaccard_core;
use lshdedup::pipeline::{run_dedup, run_gather_compare, run_hash, run_union};
use lshdedup::synth::{cmd_gen_synthetic, SyntheticSpec};
use lshdedup::{Error, RunConfig, Threshold, Unit};

create_exception!(
    pylshdedup,
    DedupError,
    PyException,
    "Pipeline failure; `exit_code` matches the CLI."
);

fn to_py(e: Error) -> PyErr {
    let code = e.exit_code();
    let msg = e.to_string();
    match e {
        Error::Config(_) | Error::Domain(_) => PyValueError::new_err(msg),
        Error::Io { .. } => PyOSError::new_err(msg),
        _ => {
            let err = DedupError::new_err(msg);
            Python::with_gil(|py| {
                let _ = err.value(py).setattr("exit_code", code);
            });
            err
        }
    }
}

/// Converts any serializable value into plain Python objects through JSON.
fn to_object<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<PyObject> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn parse<T: std::str::FromStr<Err = Error>>(text: &str) -> PyResult<T> {
    text.parse().map_err(to_py)
}

/// Accepts `0.8`, `"0.8"` or `"4/5"`.
fn number_text(value: &Bound<'_, PyAny>) -> PyResult<String> {
    if let Ok(s) = value.extract::<String>() {
        Ok(s)
    } else {
        Ok(value.str()?.to_string())
    }
}

/// Run configuration. Every keyword defaults to the CLI default.
#[pyclass(name = "Config", module = "pylshdedup")]
#[derive(Clone)]
struct PyConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (
        inputs, workspace = None, *, hashes = None, bands = None, rows = None,
        shingle_len = None, unit = None, threshold = None, bucket_scale = None,
        min_chars = None, seed = None, workers = None, memory_budget = None,
        buckets_per_pass = None, text_field = None
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        inputs: Vec<PathBuf>,
        workspace: Option<PathBuf>,
        hashes: Option<usize>,
        bands: Option<usize>,
        rows: Option<usize>,
        shingle_len: Option<usize>,
        unit: Option<&str>,
        threshold: Option<&Bound<'_, PyAny>>,
        bucket_scale: Option<&Bound<'_, PyAny>>,
        min_chars: Option<usize>,
        seed: Option<u64>,
        workers: Option<usize>,
        memory_budget: Option<&Bound<'_, PyAny>>,
        buckets_per_pass: Option<u32>,
        text_field: Option<String>,
    ) -> PyResult<Self> {
        let mut cfg = RunConfig {
            inputs,
            ..RunConfig::default()
        };
        if let Some(v) = workspace {
            cfg.workspace = v;
        }
        if let Some(v) = hashes {
            cfg.hashes = v;
        }
        if let Some(v) = bands {
            cfg.bands = v;
        }
        if let Some(v) = rows {
            cfg.rows = v;
        }
        if let Some(v) = shingle_len {
            cfg.shingle_len = v;
        }
        if let Some(v) = unit {
            cfg.unit = parse::<Unit>(v)?;
        }
        if let Some(v) = threshold {
            cfg.threshold = parse::<Threshold>(&number_text(v)?)?;
        }
        if let Some(v) = bucket_scale {
            cfg.bucket_scale = parse::<BucketScale>(&number_text(v)?)?;
        }
        if let Some(v) = min_chars {
            cfg.min_chars = v;
        }
        if let Some(v) = seed {
            cfg.seed = v;
        }
        if let Some(v) = workers {
            cfg.workers = v;
        }
        if let Some(v) = memory_budget {
            cfg.memory_budget = match v.extract::<u64>() {
                Ok(n) => n,
                Err(_) => parse_bytes(&v.extract::<String>()?).map_err(to_py)?,
            };
        }
        cfg.buckets_per_pass = buckets_per_pass;
        if let Some(v) = text_field {
            cfg.text_field = v;
        }
        cfg.validate().map_err(to_py)?;
        Ok(PyConfig { inner: cfg })
    }

    #[getter]
    fn inputs(&self) -> Vec<PathBuf> {
        self.inner.inputs.clone()
    }

    #[getter]
    fn workspace(&self) -> PathBuf {
        self.inner.workspace.clone()
    }

    #[getter]
    fn hashes(&self) -> usize {
        self.inner.hashes
    }

    #[getter]
    fn bands(&self) -> usize {
        self.inner.bands
    }

    #[getter]
    fn rows(&self) -> usize {
        self.inner.rows
    }

    #[getter]
    fn threshold(&self) -> String {
        self.inner.threshold.to_string()
    }

    #[getter]
    fn workers(&self) -> usize {
        self.inner.workers
    }

    #[getter]
    fn memory_budget(&self) -> u64 {
        self.inner.memory_budget
    }

    /// Hex digest identifying the signature-affecting settings and inputs.
    fn signature_hash(&self) -> PyResult<String> {
        self.inner
            .signature_hash()
            .map(|h| format!("{h:016x}"))
            .map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(inputs={}, workspace={:?}, H={}, b={}, r={}, threshold={}, workers={})",
            self.inner.inputs.len(),
            self.inner.workspace,
            self.inner.hashes,
            self.inner.bands,
            self.inner.rows,
            self.inner.threshold,
            self.inner.workers
        )
    }
}

/// A seeded family of rolling window hashes.
#[pyclass(name = "HashFamily", module = "pylshdedup", frozen)]
struct PyHashFamily {
    inner: lshdedup::HashFamily,
}

#[pymethods]
impl PyHashFamily {
    #[new]
    #[pyo3(signature = (seed = 1234, hashes = 128, shingle_len = 5, unit = "byte"))]
    fn new(seed: u64, hashes: usize, shingle_len: usize, unit: &str) -> PyResult<Self> {
        let inner = derive_family(seed, hashes, shingle_len, parse(unit)?).map_err(to_py)?;
        Ok(PyHashFamily { inner })
    }

    /// `(p, q)` of every function.
    #[getter]
    fn params(&self) -> Vec<(u32, u32)> {
        self.inner.params.iter().map(|p| (p.p, p.q)).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// MinHash signature of a text that is already normalized.
    fn signature(&self, text: &str) -> PyResult<Vec<u32>> {
        signature_of_text(0, text, &self.inner)
            .map(|s| s.values)
            .map_err(to_py)
    }
}

/// Share of positions where two signatures agree.
#[pyfunction]
fn signature_similarity(a: Vec<u32>, b: Vec<u32>) -> PyResult<f64> {
    sim_sig(&a, &b).map(|s| s.as_f64()).map_err(to_py)
}

/// Jaccard similarity of the two texts' window sets.
#[pyfunction]
#[pyo3(signature = (a, b, shingle_len = 5, unit = "byte"))]
fn exact_jaccard(a: &str, b: &str, shingle_len: usize, unit: &str) -> PyResult<f64> {
    exact_jaccard_core(a, b, shingle_len, parse(unit)?)
        .map(|j| j.as_f64())
        .map_err(to_py)
}

/// Groups of connected ids, each sorted, ordered by smallest member.
#[pyfunction]
fn connected_components(pairs: Vec<(u64, u64)>) -> Vec<Vec<u64>> {
    let edges = pairs
        .into_iter()
        .filter(|(a, b)| a != b)
        .map(|(a, b)| DuplicatePair::canonical(a, b, 0));
    components(&mut union_pairs(edges))
        .into_iter()
        .map(|g| g.members)
        .collect()
}

/// Runs all three stages and returns the report with stage timings.
#[pyfunction]
fn dedup(py: Python<'_>, config: &PyConfig) -> PyResult<PyObject> {
    let cfg = config.inner.clone();
    let out = py.allow_threads(|| run_dedup(&cfg)).map_err(to_py)?;
    let dict = PyDict::new(py);
    dict.set_item("report", to_object(py, &out.report)?)?;
    dict.set_item("compare", to_object(py, &out.compare)?)?;
    dict.set_item("timings", to_object(py, &out.timings)?)?;
    Ok(dict.into_any().unbind())
}

/// Hash stage; returns the run manifest.
#[pyfunction]
fn hash(py: Python<'_>, config: &PyConfig) -> PyResult<PyObject> {
    let cfg = config.inner.clone();
    let out = py
        .allow_threads(|| run_hash(&cfg))
        .map_err(|e| to_py(e.in_stage("hash")))?;
    to_object(py, &out.run)
}

/// Gather-compare stage; returns the compare manifest.
#[pyfunction]
fn gather_compare(py: Python<'_>, config: &PyConfig) -> PyResult<PyObject> {
    let cfg = config.inner.clone();
    let out = py
        .allow_threads(|| run_gather_compare(&cfg))
        .map_err(|e| to_py(e.in_stage("gather-compare")))?;
    to_object(py, &out.manifest)
}

/// Union stage; returns the report.
#[pyfunction]
fn union(py: Python<'_>, config: &PyConfig) -> PyResult<PyObject> {
    let cfg = config.inner.clone();
    let out = py
        .allow_threads(|| run_union(&cfg))
        .map_err(|e| to_py(e.in_stage("union")))?;
    to_object(py, &out.report)
}

/// Pipeline against all-pairs MinHash on the same corpus.
#[pyfunction]
#[pyo3(signature = (config, allow_large = false))]
fn eval_accuracy(py: Python<'_>, config: &PyConfig, allow_large: bool) -> PyResult<PyObject> {
    let cfg = config.inner.clone();
    let report = py
        .allow_threads(|| cmd_eval_accuracy(&cfg, allow_large))
        .map_err(to_py)?;
    to_object(py, &report)
}

/// Writes a corpus with planted near-duplicate groups into `out`.
#[pyfunction]
#[pyo3(signature = (
    out, *, docs = None, groups = None, group_size = None, edit_rate = None,
    length = None, vocabulary = None, seed = None, shards = None
))]
#[allow(clippy::too_many_arguments)]
fn gen_synthetic(
    py: Python<'_>,
    out: PathBuf,
    docs: Option<usize>,
    groups: Option<usize>,
    group_size: Option<(usize, usize)>,
    edit_rate: Option<f64>,
    length: Option<(usize, usize)>,
    vocabulary: Option<usize>,
    seed: Option<u64>,
    shards: Option<usize>,
) -> PyResult<PyObject> {
    let d = SyntheticSpec::default();
    let spec = SyntheticSpec {
        docs: docs.unwrap_or(d.docs),
        groups: groups.unwrap_or(d.groups),
        group_size: group_size.unwrap_or(d.group_size),
        edit_rate: edit_rate.unwrap_or(d.edit_rate),
        length: length.unwrap_or(d.length),
        vocabulary: vocabulary.unwrap_or(d.vocabulary),
        seed: seed.unwrap_or(d.seed),
        shards: shards.unwrap_or(d.shards),
        shingle_len: d.shingle_len,
    };
    let (corpus, paths) = py
        .allow_threads(|| cmd_gen_synthetic(&spec, &out))
        .map_err(to_py)?;
    let dict = PyDict::new(py);
    dict.set_item("paths", paths)?;
    dict.set_item("documents", corpus.texts.len())?;
    dict.set_item("planted_pairs", corpus.pairs.len())?;
    dict.set_item("share_above_0_8", corpus.share_above(0.8))?;
    Ok(dict.into_any().unbind())
}

#[pymodule]
fn pylshdedup(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DedupError", m.py().get_type::<DedupError>())?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyHashFamily>()?;
    m.add_function(wrap_pyfunction!(signature_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(exact_jaccard, m)?)?;
    m.add_function(wrap_pyfunction!(connected_components, m)?)?;
    m.add_function(wrap_pyfunction!(dedup, m)?)?;
    m.add_function(wrap_pyfunction!(hash, m)?)?;
    m.add_function(wrap_pyfunction!(gather_compare, m)?)?;
    m.add_function(wrap_pyfunction!(union, m)?)?;
    m.add_function(wrap_pyfunction!(eval_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(gen_synthetic, m)?)?;
    Ok(())
}
