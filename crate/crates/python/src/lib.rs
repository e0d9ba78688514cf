//! Python bindings. Structured results (manuals, chunks, answers, reports)
//! come back as plain dicts and lists.

use std::path::PathBuf;
use std::sync::Arc;

use manualbridge_core::config::Settings;
use manualbridge_core::embed::{Embedder, HashingEmbedder as CoreEmbedder, DEFAULT_DIM};
use manualbridge_core::eval::{eval_retrieval, parse_gold};
use manualbridge_core::ingest::{chunk_pages, ChunkingConfig, PageText};
use manualbridge_core::lang::{detect_language as core_detect, LanguageRegistry};
use manualbridge_core::qa::QaEngine;
use manualbridge_core::store::{ManualStore, NewManual};
use manualbridge_core::ProviderMode;
use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn store_err(e: manualbridge_core::store::StoreError) -> PyErr {
    match e {
        manualbridge_core::store::StoreError::NotFound { .. } => PyKeyError::new_err(e.to_string()),
        other => value_err(other),
    }
}

/// Feature-hashing embedder producing unit-length vectors.
#[pyclass(frozen)]
struct HashingEmbedder(CoreEmbedder);

#[pymethods]
impl HashingEmbedder {
    #[new]
    #[pyo3(signature = (dim = DEFAULT_DIM))]
    fn new(dim: usize) -> PyResult<Self> {
        CoreEmbedder::new(dim).map(Self).map_err(value_err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn embed(&self, text: &str) -> PyResult<Vec<f32>> {
        Ok(self.0.embed(text).map_err(value_err)?.components().to_vec())
    }

    fn cosine(&self, a: &str, b: &str) -> PyResult<f64> {
        let va = self.0.embed(a).map_err(value_err)?;
        let vb = self.0.embed(b).map_err(value_err)?;
        Ok(va.cosine(&vb))
    }
}

/// Split `text` (one page) into overlapping token windows.
#[pyfunction]
#[pyo3(signature = (text, chunk_size = 64, overlap = 8, manual_id = "adhoc"))]
fn chunk_text(py: Python<'_>, text: &str, chunk_size: usize, overlap: usize, manual_id: &str) -> PyResult<Py<PyAny>> {
    let cfg = ChunkingConfig::new(chunk_size, overlap).map_err(value_err)?;
    let pages = [PageText {
        page_no: 1,
        text: text.to_string(),
    }];
    let chunks = chunk_pages(manual_id, &pages, &cfg).map_err(value_err)?;
    to_py(py, &chunks)
}

/// Returns `(language_code, confidence)`.
#[pyfunction]
#[pyo3(signature = (text, session_language = "pcm"))]
fn detect_language(text: &str, session_language: &str) -> PyResult<(String, f64)> {
    let registry = LanguageRegistry::default();
    let session = registry.tag(session_language).map_err(value_err)?;
    let d = core_detect(text, &registry, &session).map_err(value_err)?;
    Ok((d.language.code().to_string(), d.confidence))
}

/// A manual store plus the answer pipeline, configured like the service.
#[pyclass(frozen)]
struct ManualBridge {
    store: Arc<ManualStore>,
    engine: Arc<QaEngine>,
}

#[pymethods]
impl ManualBridge {
    /// `providers` is "stub" (offline) or "http" (endpoints from `MB_*` variables).
    #[new]
    #[pyo3(signature = (store_dir, providers = "stub"))]
    fn new(store_dir: PathBuf, providers: &str) -> PyResult<Self> {
        let mut settings = Settings::from_env().map_err(value_err)?;
        settings.store_dir = store_dir;
        settings.provider_mode = providers.parse::<ProviderMode>().map_err(PyValueError::new_err)?;
        let store = ManualStore::open(&settings.store_dir).map_err(store_err)?;
        let engine = settings.engine().map_err(value_err)?;
        Ok(Self {
            store: Arc::new(store),
            engine: Arc::new(engine),
        })
    }

    /// Register a manual from a file path; returns the manual record and whether it was new.
    #[pyo3(signature = (path, title = None))]
    fn ingest(&self, py: Python<'_>, path: PathBuf, title: Option<String>) -> PyResult<(Py<PyAny>, bool)> {
        let bytes = std::fs::read(&path).map_err(|e| value_err(format!("{}: {e}", path.display())))?;
        let filename = path.file_name().map(|n| n.to_string_lossy().into_owned());
        let (store, engine) = (self.store.clone(), self.engine.clone());
        let reg = py
            .detach(move || {
                let upload = NewManual {
                    bytes: &bytes,
                    title,
                    filename,
                    format: None,
                };
                store.register_manual(&upload, engine.providers.embedder.as_ref())
            })
            .map_err(store_err)?;
        Ok((to_py(py, &reg.manual)?, reg.created))
    }

    fn manual(&self, py: Python<'_>, manual_id: &str) -> PyResult<Py<PyAny>> {
        to_py(py, &self.store.get_manual(manual_id).map_err(store_err)?)
    }

    #[pyo3(signature = (offset = 0, limit = 20))]
    fn manuals(&self, py: Python<'_>, offset: usize, limit: usize) -> PyResult<(usize, Py<PyAny>)> {
        let (total, items) = self.store.list_manuals(offset, limit).map_err(store_err)?;
        Ok((total, to_py(py, &items)?))
    }

    fn chunks(&self, py: Python<'_>, manual_id: &str) -> PyResult<Py<PyAny>> {
        to_py(py, &self.store.load_chunks(manual_id).map_err(store_err)?)
    }

    /// Answer one question; `language` is the session language used when the
    /// question carries no language markers.
    #[pyo3(signature = (manual_id, question, language = "pcm"))]
    fn ask(&self, py: Python<'_>, manual_id: &str, question: &str, language: &str) -> PyResult<Py<PyAny>> {
        let tag = self.engine.registry.tag(language).map_err(value_err)?;
        let manual = self.store.indexed_manual(manual_id).map_err(store_err)?;
        let engine = self.engine.clone();
        let question = question.to_string();
        let answer = py
            .detach(move || engine.answer_question(&manual, &tag, &question))
            .map_err(value_err)?;
        to_py(py, &answer)
    }

    /// Retrieval metrics for a JSON Lines gold set.
    fn evaluate(&self, py: Python<'_>, manual_id: &str, gold_jsonl: &str) -> PyResult<Py<PyAny>> {
        let gold = parse_gold(gold_jsonl).map_err(value_err)?;
        let manual = self.store.indexed_manual(manual_id).map_err(store_err)?;
        let e = &self.engine;
        let report = eval_retrieval(&gold, &manual, &e.retrieval, &e.providers, &e.registry).map_err(value_err)?;
        to_py(py, &report)
    }
}

#[pymodule]
fn manualbridge(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<HashingEmbedder>()?;
    m.add_class::<ManualBridge>()?;
    m.add_function(wrap_pyfunction!(chunk_text, m)?)?;
    m.add_function(wrap_pyfunction!(detect_language, m)?)?;
    Ok(())
}
