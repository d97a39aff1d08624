//! Python bindings. Codes cross the boundary as hex strings, most
//! significant digit first, matching the CLI and HTTP service.

use std::sync::Arc;

use hamspace::bench::CorrelationModel;
use hamspace::{
    estimate_correlations, format_code_hex, kernighan_lin, parse_code_hex, BinaryCode, CodeDataset,
    Error, Permutation, SearchEngine, SearchResult, SearchStrategy, SubCodeLayout,
};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidArgument(_) | Error::Parse(_) => PyValueError::new_err(e.to_string()),
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn strategy_of(name: Option<&str>, engine: &SearchEngine) -> PyResult<SearchStrategy> {
    match name {
        Some(s) => s.parse().map_err(to_py),
        None => Ok(engine.default_strategy()),
    }
}

#[pyclass(name = "CodeDataset", module = "hamspace", frozen)]
struct PyDataset {
    inner: Arc<CodeDataset>,
}

#[pymethods]
impl PyDataset {
    /// Builds a dataset of `m`-bit codes from hex strings.
    #[staticmethod]
    fn from_hex(codes: Vec<String>, m: u32) -> PyResult<Self> {
        let codes = codes
            .iter()
            .map(|c| parse_code_hex(c, m))
            .collect::<hamspace::Result<Vec<BinaryCode>>>()
            .map_err(to_py)?;
        let inner = CodeDataset::from_codes(&codes).map_err(to_py)?;
        Ok(PyDataset {
            inner: Arc::new(inner),
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let inner = hamspace::code_store::load_any_dataset(path).map_err(to_py)?;
        Ok(PyDataset {
            inner: Arc::new(inner),
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        hamspace::save_dataset(&self.inner, path).map_err(to_py)
    }

    #[getter]
    fn m(&self) -> u32 {
        self.inner.code_len()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn code(&self, id: usize) -> PyResult<String> {
        if id >= self.inner.len() {
            return Err(PyValueError::new_err(format!("id {id} out of range")));
        }
        Ok(format_code_hex(&self.inner.code(id)))
    }

    fn __repr__(&self) -> String {
        format!(
            "CodeDataset(n={}, m={})",
            self.inner.len(),
            self.inner.code_len()
        )
    }
}

#[pyclass(name = "Engine", module = "hamspace", frozen)]
struct PyEngine {
    inner: Arc<SearchEngine>,
}

/// `(neighbors, candidate_count)` with neighbors as `(id, distance)` pairs.
type PyHits = (Vec<(u32, u32)>, usize);

fn hits(result: SearchResult) -> PyHits {
    (result.pairs(), result.candidate_count)
}

#[pymethods]
impl PyEngine {
    /// Builds every strategy. With `seed` the bit permutation is optimized
    /// for the filtered_permuted strategy; without it that strategy is off.
    #[new]
    #[pyo3(signature = (dataset, filter_width = 16, seed = None, term_match = true))]
    fn new(
        py: Python<'_>,
        dataset: &PyDataset,
        filter_width: u32,
        seed: Option<u64>,
        term_match: bool,
    ) -> PyResult<Self> {
        let ds = dataset.inner.clone();
        let engine = py
            .detach(move || {
                let builder = SearchEngine::builder(ds)
                    .filter_width(filter_width)
                    .term_match(term_match);
                match seed {
                    Some(seed) => builder.optimize_permutation(seed),
                    None => builder,
                }
                .build()
            })
            .map_err(to_py)?;
        Ok(PyEngine {
            inner: Arc::new(engine),
        })
    }

    #[getter]
    fn m(&self) -> u32 {
        self.inner.code_len()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn strategies(&self) -> Vec<&'static str> {
        self.inner
            .strategies()
            .into_iter()
            .map(|s| s.as_str())
            .collect()
    }

    #[pyo3(signature = (code, radius, strategy = None))]
    fn search(
        &self,
        py: Python<'_>,
        code: &str,
        radius: u32,
        strategy: Option<&str>,
    ) -> PyResult<PyHits> {
        let strategy = strategy_of(strategy, &self.inner)?;
        let q = parse_code_hex(code, self.inner.code_len()).map_err(to_py)?;
        let engine = self.inner.clone();
        py.detach(move || engine.search(strategy, &q, radius))
            .map(hits)
            .map_err(to_py)
    }

    #[pyo3(signature = (code, k, strategy = None))]
    fn knn(
        &self,
        py: Python<'_>,
        code: &str,
        k: usize,
        strategy: Option<&str>,
    ) -> PyResult<PyHits> {
        let strategy = strategy_of(strategy, &self.inner)?;
        let q = parse_code_hex(code, self.inner.code_len()).map_err(to_py)?;
        let engine = self.inner.clone();
        py.detach(move || engine.knn(strategy, &q, k))
            .map(hits)
            .map_err(to_py)
    }

    fn permutation(&self) -> Option<Vec<u32>> {
        self.inner.permutation().map(|p| p.mapping().to_vec())
    }
}

#[pyfunction]
#[pyo3(signature = (n, m, model = "uniform", block = 4, flip = 0.05, seed = 0))]
fn generate_synthetic(
    py: Python<'_>,
    n: usize,
    m: u32,
    model: &str,
    block: u32,
    flip: f64,
    seed: u64,
) -> PyResult<PyDataset> {
    let model = match model {
        "uniform" => CorrelationModel::Uniform,
        "clustered" => CorrelationModel::Clustered { block, flip },
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown model {other:?}, expected uniform or clustered"
            )))
        }
    };
    let ds = py
        .detach(|| hamspace::bench::generate_synthetic(n, m, model, seed))
        .map_err(to_py)?;
    Ok(PyDataset {
        inner: Arc::new(ds),
    })
}

/// Optimized bit permutation for a filter of the given segment width, as
/// the list mapping each output position to its source bit.
#[pyfunction]
#[pyo3(signature = (dataset, filter_width = 16, seed = 0))]
fn optimize_permutation(
    py: Python<'_>,
    dataset: &PyDataset,
    filter_width: u32,
    seed: u64,
) -> PyResult<Vec<u32>> {
    let ds = dataset.inner.clone();
    py.detach(move || {
        let layout = SubCodeLayout::with_width(ds.code_len(), filter_width)?;
        let mat = estimate_correlations(&ds, seed)?;
        kernighan_lin(&mat, &layout, seed).map(|p: Permutation| p.mapping().to_vec())
    })
    .map_err(to_py)
}

#[pyfunction]
fn hamming_distance(a: &str, b: &str, m: u32) -> PyResult<u32> {
    let a = parse_code_hex(a, m).map_err(to_py)?;
    let b = parse_code_hex(b, m).map_err(to_py)?;
    hamspace::hamming_distance(&a, &b).map_err(to_py)
}

#[pyfunction]
fn popcount64(x: u64) -> u32 {
    hamspace::hakmem_popcount64(x)
}

#[pymodule(name = "hamspace")]
fn hamspace_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyEngine>()?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_permutation, m)?)?;
    m.add_function(wrap_pyfunction!(hamming_distance, m)?)?;
    m.add_function(wrap_pyfunction!(popcount64, m)?)?;
    Ok(())
}
