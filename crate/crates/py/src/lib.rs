//! Python bindings. Images cross the boundary as square `bytes`, one
//! grayscale byte per pixel in row-major order; the side is inferred.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use chaoscrack::cipher;
use chaoscrack::eval;
use chaoscrack::image::GrayImage;
use chaoscrack::keysearch::{self, SearchBounds};
use chaoscrack::net::{DecryptionNet, NetError};
use chaoscrack::seed;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn net_err(e: NetError) -> PyErr {
    match e {
        NetError::Io(msg) => PyIOError::new_err(msg),
        other => value_err(other),
    }
}

fn image(pixels: &[u8], side: usize) -> PyResult<GrayImage> {
    GrayImage::new(side, pixels.to_vec()).map_err(value_err)
}

fn side_of(pixels: &[u8]) -> PyResult<usize> {
    let side = (pixels.len() as f64).sqrt().round() as usize;
    if side * side != pixels.len() {
        return Err(PyValueError::new_err(format!(
            "{} bytes is not a square image",
            pixels.len()
        )));
    }
    Ok(side)
}

#[pyclass(name = "CipherKey", module = "pychaoscrack", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyCipherKey {
    inner: cipher::CipherKey,
}

#[pymethods]
impl PyCipherKey {
    #[new]
    #[allow(clippy::too_many_arguments)]
    fn new(p: u32, q: u32, n: u32, x0: f64, y0: f64, z0: f64, a: f64, b: f64, c: f64) -> PyResult<Self> {
        let inner = cipher::CipherKey::new(p, q, n, x0, y0, z0, a, b, c).map_err(value_err)?;
        Ok(Self { inner })
    }

    /// `"p,q,n,x0,y0,z0,a,b,c"`
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: text.parse().map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn reference() -> Self {
        Self {
            inner: cipher::CipherKey::reference(),
        }
    }

    #[getter]
    fn p(&self) -> u32 {
        self.inner.p
    }
    #[getter]
    fn q(&self) -> u32 {
        self.inner.q
    }
    #[getter]
    fn n(&self) -> u32 {
        self.inner.n
    }
    #[getter]
    fn initial_state(&self) -> (f64, f64, f64) {
        (self.inner.x0, self.inner.y0, self.inner.z0)
    }
    #[getter]
    fn chen_params(&self) -> (f64, f64, f64) {
        (self.inner.a, self.inner.b, self.inner.c)
    }

    fn with_map(&self, p: u32, q: u32) -> Self {
        Self {
            inner: self.inner.with_map(p, q),
        }
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }

    fn __repr__(&self) -> String {
        format!("CipherKey.parse('{}')", self.inner)
    }
}

#[pyfunction]
fn encrypt<'py>(py: Python<'py>, pixels: &[u8], key: &PyCipherKey) -> PyResult<Bound<'py, PyBytes>> {
    let img = image(pixels, side_of(pixels)?)?;
    let out = cipher::encrypt(&img, &key.inner).map_err(value_err)?;
    Ok(PyBytes::new(py, out.pixels()))
}

#[pyfunction]
fn decrypt<'py>(py: Python<'py>, pixels: &[u8], key: &PyCipherKey) -> PyResult<Bound<'py, PyBytes>> {
    let img = image(pixels, side_of(pixels)?)?;
    let out = cipher::decrypt(&img, &key.inner).map_err(value_err)?;
    Ok(PyBytes::new(py, out.pixels()))
}

/// `side²` keystream bytes for `key`.
#[pyfunction]
fn keystream<'py>(py: Python<'py>, key: &PyCipherKey, side: usize) -> PyResult<Bound<'py, PyBytes>> {
    let ks = cipher::keystream(&key.inner, side).map_err(value_err)?;
    Ok(PyBytes::new(py, ks.as_bytes()))
}

/// Entries `(a, b, c, d)` of `[[a, b], [c, d]]`.
#[pyfunction]
fn cat_map_matrix(p: u32, q: u32, n: u32, modulus: u64) -> PyResult<(u64, u64, u64, u64)> {
    if modulus < 2 || p == 0 || q == 0 || n == 0 {
        return Err(PyValueError::new_err("p, q, n must be >= 1 and modulus >= 2"));
    }
    let [a, b, c, d] = cipher::cat_map_matrix(p, q, n, modulus).entries();
    Ok((a, b, c, d))
}

#[pyfunction]
#[pyo3(signature = (seed, name, indices = Vec::new()))]
fn derive_seed(seed: u64, name: &str, indices: Vec<u64>) -> u64 {
    seed::derive_seed(seed, name, &indices)
}

#[pyclass(name = "RecoveredKey", module = "pychaoscrack", frozen)]
struct PyRecoveredKey {
    inner: keysearch::RecoveredKey,
}

#[pymethods]
impl PyRecoveredKey {
    #[getter]
    fn p(&self) -> u32 {
        self.inner.p
    }
    #[getter]
    fn q(&self) -> u32 {
        self.inner.q
    }
    #[getter]
    fn n(&self) -> u32 {
        self.inner.n
    }
    #[getter]
    fn side(&self) -> usize {
        self.inner.side
    }
    #[getter]
    fn tried(&self) -> usize {
        self.inner.tried
    }

    fn decrypt<'py>(&self, py: Python<'py>, pixels: &[u8]) -> PyResult<Bound<'py, PyBytes>> {
        let img = image(pixels, side_of(pixels)?)?;
        let out = self.inner.decrypt(&img).map_err(value_err)?;
        Ok(PyBytes::new(py, out.pixels()))
    }

    fn to_record(&self) -> String {
        self.inner.to_record()
    }

    #[staticmethod]
    fn from_record(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: keysearch::RecoveredKey::from_record(text).map_err(value_err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("RecoveredKey({})", self.inner)
    }
}

/// Known-plaintext search over `p, q ∈ [1, max_pq]`, `n ∈ [1, max_n]`.
/// `pairs` holds `(cipher, plain)` byte strings; returns None when nothing validates.
#[pyfunction]
#[pyo3(signature = (pairs, max_pq = 9, max_n = 8))]
fn recover_key(py: Python<'_>, pairs: Vec<(Vec<u8>, Vec<u8>)>, max_pq: u32, max_n: u32) -> PyResult<Option<PyRecoveredKey>> {
    let mut images = Vec::with_capacity(pairs.len());
    for (c, p) in &pairs {
        images.push((image(c, side_of(c)?)?, image(p, side_of(p)?)?));
    }
    let range = |hi: u32| format!("1..{hi}").parse().map_err(value_err);
    let bounds = SearchBounds {
        p: range(max_pq)?,
        q: range(max_pq)?,
        n: range(max_n)?,
    };
    let found = py
        .detach(|| keysearch::recover(&images, &bounds))
        .map_err(value_err)?;
    Ok(found.map(|inner| PyRecoveredKey { inner }))
}

/// Trained learned decryptor loaded from a checkpoint.
#[pyclass(name = "Decryptor", module = "pychaoscrack", frozen)]
struct PyDecryptor {
    inner: DecryptionNet<f32>,
}

#[pymethods]
impl PyDecryptor {
    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: DecryptionNet::load(&path).map_err(net_err)?,
        })
    }

    #[getter]
    fn side(&self) -> usize {
        self.inner.config.side
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.inner.parameter_count()
    }

    fn decrypt<'py>(&self, py: Python<'py>, pixels: &[u8]) -> PyResult<Bound<'py, PyBytes>> {
        let img = image(pixels, side_of(pixels)?)?;
        let out = py.detach(|| self.inner.decrypt_learned(&img)).map_err(net_err)?;
        Ok(PyBytes::new(py, out.pixels()))
    }
}

/// Digit classifier loaded from a checkpoint written by `train-classifier`.
#[pyclass(name = "Classifier", module = "pychaoscrack", frozen)]
struct PyClassifier {
    inner: eval::Classifier,
}

#[pymethods]
impl PyClassifier {
    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: eval::Classifier::load(&path).map_err(net_err)?,
        })
    }

    fn predict(&self, py: Python<'_>, images: Vec<Vec<u8>>) -> PyResult<Vec<u8>> {
        let imgs = images
            .iter()
            .map(|p| image(p, side_of(p)?))
            .collect::<PyResult<Vec<_>>>()?;
        py.detach(|| self.inner.predict(&imgs)).map_err(net_err)
    }
}

#[pymodule]
fn pychaoscrack(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCipherKey>()?;
    m.add_class::<PyRecoveredKey>()?;
    m.add_class::<PyDecryptor>()?;
    m.add_class::<PyClassifier>()?;
    m.add_function(wrap_pyfunction!(encrypt, m)?)?;
    m.add_function(wrap_pyfunction!(decrypt, m)?)?;
    m.add_function(wrap_pyfunction!(keystream, m)?)?;
    m.add_function(wrap_pyfunction!(cat_map_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    m.add_function(wrap_pyfunction!(recover_key, m)?)?;
    Ok(())
}
