//! Python bindings for the coordination kernel: the kernel itself plus the
//! standalone text-processing operations.

use std::path::Path;
use std::sync::Arc;

use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyBytes, PyDict, PyFloat, PyList, PyString, PyTuple};
use serde_json::Value;

use cws_core::config::{build_kernel, load_config, ServeConfig};
use cws_core::envelope::{envelope_from_value, envelope_to_value, DocumentEnvelope};
use cws_core::kernel::Kernel as CoreKernel;
use cws_core::nlp;

fn value_to_py<'py>(py: Python<'py>, value: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match value {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => PyBool::new(py, *b).to_owned().into_any(),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.into_any()
            } else {
                PyFloat::new(py, n.as_f64().unwrap_or(f64::NAN)).into_any()
            }
        }
        Value::String(s) => PyString::new(py, s).into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(value_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, v) in map {
                dict.set_item(k, value_to_py(py, v)?)?;
            }
            dict.into_any()
        }
    })
}

fn py_to_value(obj: &Bound<'_, PyAny>) -> PyResult<Value> {
    if obj.is_none() {
        return Ok(Value::Null);
    }
    if let Ok(b) = obj.cast::<PyBool>() {
        return Ok(Value::Bool(b.is_true()));
    }
    if let Ok(i) = obj.extract::<i64>() {
        return Ok(Value::Number(i.into()));
    }
    if let Ok(f) = obj.extract::<f64>() {
        return serde_json::Number::from_f64(f)
            .map(Value::Number)
            .ok_or_else(|| PyValueError::new_err("non-finite floats are not representable"));
    }
    if let Ok(s) = obj.extract::<String>() {
        return Ok(Value::String(s));
    }
    if let Ok(list) = obj.cast::<PyList>() {
        let mut items = Vec::with_capacity(list.len());
        for item in list.iter() {
            items.push(py_to_value(&item)?);
        }
        return Ok(Value::Array(items));
    }
    if let Ok(tuple) = obj.cast::<PyTuple>() {
        let mut items = Vec::with_capacity(tuple.len());
        for item in tuple.iter() {
            items.push(py_to_value(&item)?);
        }
        return Ok(Value::Array(items));
    }
    if let Ok(dict) = obj.cast::<PyDict>() {
        let mut map = serde_json::Map::new();
        for (k, v) in dict.iter() {
            map.insert(k.extract::<String>()?, py_to_value(&v)?);
        }
        return Ok(Value::Object(map));
    }
    Err(PyValueError::new_err(format!(
        "cannot convert {} to an attribute-value document",
        obj.get_type().name()?
    )))
}

fn envelope_from_py(obj: &Bound<'_, PyAny>) -> PyResult<DocumentEnvelope> {
    if let Ok(text) = obj.extract::<String>() {
        return cws_core::decode_envelope(text.as_bytes()).map_err(to_value_error);
    }
    let value = py_to_value(obj)?;
    envelope_from_value(value).map_err(to_value_error)
}

fn envelope_to_py<'py>(py: Python<'py>, env: &DocumentEnvelope) -> PyResult<Bound<'py, PyAny>> {
    value_to_py(py, &envelope_to_value(env))
}

fn to_value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_key_error(e: impl std::fmt::Display) -> PyErr {
    PyKeyError::new_err(e.to_string())
}

/// One in-process coordination kernel, optionally configured from a config
/// file (the same format the `cws serve` command reads).
#[pyclass(name = "Kernel")]
struct PyKernel {
    inner: Arc<CoreKernel>,
}

impl PyKernel {
    fn vectors(&self) -> PyResult<&cws_core::VectorModel> {
        self.inner
            .vectors()
            .ok_or_else(|| PyValueError::new_err("no vector model is loaded"))
    }
}

#[pymethods]
impl PyKernel {
    #[new]
    #[pyo3(signature = (config=None))]
    fn new(config: Option<String>) -> PyResult<Self> {
        let kernel = match config {
            Some(path) => {
                let (config, base) = load_config(&path).map_err(to_value_error)?;
                build_kernel(&config, &base).map_err(to_value_error)?
            }
            None => {
                build_kernel(&ServeConfig::default(), Path::new(".")).map_err(to_value_error)?
            }
        };
        Ok(PyKernel {
            inner: Arc::new(kernel),
        })
    }

    /// Install the preset compositions; returns their names.
    fn load_presets(&self) -> PyResult<Vec<String>> {
        self.inner.load_presets().map_err(to_value_error)
    }

    fn register_service(&self, descriptor: &Bound<'_, PyAny>) -> PyResult<String> {
        let descriptor =
            serde_json::from_value(py_to_value(descriptor)?).map_err(to_value_error)?;
        self.inner
            .register_service(descriptor)
            .map_err(to_value_error)
    }

    fn define_composition(&self, definition: &Bound<'_, PyAny>) -> PyResult<String> {
        let def = serde_json::from_value(py_to_value(definition)?).map_err(to_value_error)?;
        self.inner.define_composition(def).map_err(to_value_error)
    }

    fn list_services<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let value = serde_json::to_value(
            self.inner
                .list_services()
                .iter()
                .map(|d| d.as_ref().clone())
                .collect::<Vec<_>>(),
        )
        .map_err(to_value_error)?;
        value_to_py(py, &value)
    }

    fn list_compositions<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let value = serde_json::to_value(
            self.inner
                .list_compositions()
                .iter()
                .map(|d| d.as_ref().clone())
                .collect::<Vec<_>>(),
        )
        .map_err(to_value_error)?;
        value_to_py(py, &value)
    }

    fn plan<'py>(&self, py: Python<'py>, name: &str) -> PyResult<Bound<'py, PyAny>> {
        let plan = self.inner.plan(name).map_err(to_key_error)?;
        value_to_py(py, &serde_json::to_value(plan).map_err(to_value_error)?)
    }

    /// Execute a composition on an envelope (a dict or a JSON string).
    /// Returns `{"run_id", "envelope", "trace"}`.
    fn execute<'py>(
        &self,
        py: Python<'py>,
        name: &str,
        envelope: &Bound<'_, PyAny>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let env = envelope_from_py(envelope)?;
        let inner = Arc::clone(&self.inner);
        let name = name.to_string();
        let run = py
            .detach(move || inner.execute(&name, env))
            .map_err(to_value_error)?;
        let value = serde_json::json!({
            "run_id": run.trace.run_id,
            "envelope": envelope_to_value(&run.envelope),
            "trace": serde_json::to_value(&run.trace).map_err(to_value_error)?,
        });
        value_to_py(py, &value)
    }

    /// Invoke a single service on an envelope.
    fn invoke<'py>(
        &self,
        py: Python<'py>,
        service: &str,
        envelope: &Bound<'_, PyAny>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let env = envelope_from_py(envelope)?;
        let inner = Arc::clone(&self.inner);
        let service_name = service.to_string();
        let result = py
            .detach(move || inner.invoke_atomic(&service_name, env))
            .map_err(to_value_error)?;
        envelope_to_py(py, &result)
    }

    fn run_trace<'py>(&self, py: Python<'py>, run_id: &str) -> PyResult<Bound<'py, PyAny>> {
        match self.inner.run_trace(run_id) {
            Some(trace) => value_to_py(py, &serde_json::to_value(trace).map_err(to_value_error)?),
            None => Ok(py.None().into_bound(py)),
        }
    }

    fn index_envelope<'py>(
        &self,
        py: Python<'py>,
        envelope: &Bound<'_, PyAny>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let env = envelope_from_py(envelope)?;
        let report = self.inner.index_envelope(&env).map_err(to_value_error)?;
        value_to_py(py, &serde_json::to_value(report).map_err(to_value_error)?)
    }

    #[pyo3(signature = (query, limit=10))]
    fn search(&self, query: &str, limit: usize) -> PyResult<Vec<(String, f64)>> {
        Ok(self
            .inner
            .search(query, limit)
            .map_err(to_value_error)?
            .into_iter()
            .map(|hit| (hit.doc, hit.score))
            .collect())
    }

    fn similarity(&self, term1: &str, term2: &str) -> PyResult<f64> {
        self.vectors()?
            .similarity(term1, term2)
            .map_err(to_key_error)
    }

    #[pyo3(signature = (term, k=10))]
    fn nearest(&self, term: &str, k: usize) -> PyResult<Vec<(String, f64)>> {
        self.vectors()?.nearest(term, k).map_err(to_key_error)
    }

    fn cluster_center(&self, terms: Vec<String>) -> PyResult<(String, f64)> {
        self.vectors()?.cluster_center(&terms).map_err(to_key_error)
    }

    fn set_similarity(&self, a: Vec<String>, b: Vec<String>) -> PyResult<f64> {
        self.vectors()?.set_similarity(&a, &b).map_err(to_key_error)
    }

    fn put_document<'py>(
        &self,
        py: Python<'py>,
        id: &str,
        body: &Bound<'_, PyAny>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let doc = self
            .inner
            .put_document(id, py_to_value(body)?)
            .map_err(to_value_error)?;
        value_to_py(py, &serde_json::to_value(doc).map_err(to_value_error)?)
    }

    fn get_document<'py>(&self, py: Python<'py>, id: &str) -> PyResult<Bound<'py, PyAny>> {
        let doc = self.inner.get_document(id).map_err(to_key_error)?;
        value_to_py(py, &serde_json::to_value(doc).map_err(to_value_error)?)
    }

    fn sync_export<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let bundle = self.inner.sync_export().map_err(to_value_error)?;
        value_to_py(py, &serde_json::to_value(bundle).map_err(to_value_error)?)
    }

    fn sync_import<'py>(
        &self,
        py: Python<'py>,
        bundle: &Bound<'_, PyAny>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let bundle = serde_json::from_value(py_to_value(bundle)?).map_err(to_value_error)?;
        let report = self.inner.sync_merge(&bundle).map_err(to_value_error)?;
        value_to_py(py, &serde_json::to_value(report).map_err(to_value_error)?)
    }
}

/// Canonical envelope encoding: sorted keys, UTF-8, no insignificant
/// whitespace. Equal envelopes encode to identical bytes.
#[pyfunction]
fn encode_envelope<'py>(py: Python<'py>, envelope: &Bound<'_, PyAny>) -> PyResult<Bound<'py, PyBytes>> {
    let env = envelope_from_py(envelope)?;
    Ok(PyBytes::new(py, &cws_core::encode_envelope(&env)))
}

/// Parse an envelope from bytes; unknown top-level keys land under `attrs`.
#[pyfunction]
fn decode_envelope<'py>(py: Python<'py>, data: &[u8]) -> PyResult<Bound<'py, PyAny>> {
    let env = cws_core::decode_envelope(data).map_err(to_value_error)?;
    envelope_to_py(py, &env)
}

/// Split text into tokens (dicts with `surface`, `lemma`, `pos`).
#[pyfunction]
fn tokenize<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    let tokens = nlp::tokenize(text);
    value_to_py(py, &serde_json::to_value(tokens).map_err(to_value_error)?)
}

/// Split text into sentences.
#[pyfunction]
#[pyo3(signature = (text, abbreviations=None))]
fn split_sentences(text: &str, abbreviations: Option<Vec<String>>) -> Vec<String> {
    nlp::split_sentences(text, &abbreviations.unwrap_or_default())
}

/// Encode UTF-8 text as WIN-1251 bytes. In lossy mode unmappable code
/// points become `?`.
#[pyfunction]
#[pyo3(signature = (text, strict=true))]
fn to_win1251<'py>(py: Python<'py>, text: &str, strict: bool) -> PyResult<Bound<'py, PyBytes>> {
    let mode = if strict {
        nlp::ConversionMode::Strict
    } else {
        nlp::ConversionMode::Lossy
    };
    let bytes = nlp::to_win1251(text, mode).map_err(to_value_error)?;
    Ok(PyBytes::new(py, &bytes))
}

/// Decode WIN-1251 bytes to text.
#[pyfunction]
fn from_win1251(data: &[u8]) -> String {
    nlp::from_win1251(data)
}

#[pymodule]
fn cws(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKernel>()?;
    m.add_function(wrap_pyfunction!(encode_envelope, m)?)?;
    m.add_function(wrap_pyfunction!(decode_envelope, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(split_sentences, m)?)?;
    m.add_function(wrap_pyfunction!(to_win1251, m)?)?;
    m.add_function(wrap_pyfunction!(from_win1251, m)?)?;
    Ok(())
}
