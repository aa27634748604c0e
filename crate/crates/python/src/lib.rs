//! Python bindings: load an acyclic join, count and sample inside
//! pseudo-cubes, build weighted coresets and train small models on them.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use relcoreset::aggtree::RadiusRule;
use relcoreset::loss::{Dataset, LossModel, Theta};
use relcoreset::pipeline::{run, CoresetConfig};
use relcoreset::train::{train as train_model, TrainOptions};
use relcoreset::{gonzalez as gonzalez_centers, materialize, pc_count, uniform_sample, Error, Points, PseudoCube, Table};

create_exception!(relcoreset_py, RelcoresetError, PyException);
create_exception!(relcoreset_py, CyclicJoinError, RelcoresetError);
create_exception!(relcoreset_py, EmptyRegionError, RelcoresetError);

fn py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Cyclic { .. } => CyclicJoinError::new_err(msg),
        Error::EmptyRegion => EmptyRegionError::new_err(msg),
        _ => RelcoresetError::new_err(format!("{}: {msg}", e.kind())),
    }
}

fn to_points(rows: &[Vec<f64>]) -> PyResult<Points> {
    let dim = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != dim) {
        return Err(PyValueError::new_err("all rows must have the same length"));
    }
    Ok(Points::from_rows(dim, rows))
}

/// `(index_set, center, radius)` triples as used by `count` and `sample`.
type CubeArg = (Vec<usize>, Vec<f64>, f64);

fn cubes(inst: &JoinInstance, args: Option<Vec<CubeArg>>) -> PyResult<Vec<PseudoCube>> {
    let cubes: Vec<PseudoCube> = args
        .unwrap_or_default()
        .into_iter()
        .map(|(set, center, radius)| PseudoCube::new(set, center, radius))
        .collect();
    for c in &cubes {
        c.validate(&inst.inner.partition).map_err(py_err)?;
    }
    Ok(cubes)
}

/// An acyclic join over in-memory tables.
#[pyclass(frozen)]
struct JoinInstance {
    inner: relcoreset::JoinInstance,
    index: relcoreset::JoinIndex,
}

impl JoinInstance {
    fn wrap(inner: relcoreset::JoinInstance) -> PyResult<Self> {
        let index = relcoreset::JoinIndex::new(&inner).map_err(py_err)?;
        Ok(Self { inner, index })
    }
}

#[pymethods]
impl JoinInstance {
    /// Builds a join from `(name, columns, rows)` triples.
    #[new]
    fn new(tables: Vec<(String, Vec<String>, Vec<Vec<f64>>)>) -> PyResult<Self> {
        let tables = tables
            .into_iter()
            .map(|(name, cols, rows)| {
                let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
                Table::from_rows(name, &cols, &rows)
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(py_err)?;
        Self::wrap(relcoreset::JoinInstance::new(tables).map_err(py_err)?)
    }

    /// Loads the tables listed in a TOML join file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Self::wrap(relcoreset::JoinInstance::load(&path).map_err(py_err)?)
    }

    #[getter]
    fn features(&self) -> Vec<String> {
        self.inner.partition.full.clone()
    }

    #[getter]
    fn tables(&self) -> Vec<String> {
        self.inner.tables.iter().map(|t| t.name().to_string()).collect()
    }

    /// Features owned by each table, in table order.
    #[getter]
    fn blocks(&self) -> Vec<Vec<String>> {
        self.inner.partition.disjoint.clone()
    }

    fn join_size(&self) -> u128 {
        self.index.join_size()
    }

    /// Number of join tuples inside every given cube.
    #[pyo3(signature = (cubes_arg))]
    fn count(&self, cubes_arg: Vec<CubeArg>) -> PyResult<u128> {
        let cubes = cubes(self, Some(cubes_arg))?;
        pc_count(&self.index, &cubes).map_err(py_err)
    }

    /// `m` uniform draws from the join, optionally restricted to cubes.
    #[pyo3(signature = (m, seed, cubes_arg=None))]
    fn sample(&self, m: usize, seed: u64, cubes_arg: Option<Vec<CubeArg>>) -> PyResult<Vec<Vec<f64>>> {
        let cubes = cubes(self, cubes_arg)?;
        let pts = uniform_sample(&self.index, &cubes, m, seed).map_err(py_err)?;
        Ok(pts.to_rows())
    }

    /// The full join, refused above `cap` rows.
    #[pyo3(signature = (cap=10_000_000))]
    fn materialize(&self, cap: u128) -> PyResult<Vec<Vec<f64>>> {
        Ok(materialize(&self.index, cap).map_err(py_err)?.points.to_rows())
    }

    /// Builds a weighted coreset of about `k` points per class.
    #[pyo3(signature = (k, seed, eps1=0.5, beta=0.0, lambda_=0.05, m_cap=None, label=None, subspace_radius=false))]
    #[allow(clippy::too_many_arguments)]
    fn coreset(
        &self,
        k: usize,
        seed: u64,
        eps1: f64,
        beta: f64,
        lambda_: f64,
        m_cap: Option<u64>,
        label: Option<String>,
        subspace_radius: bool,
    ) -> PyResult<Coreset> {
        let mut config = CoresetConfig::new(k, seed);
        config.eps1 = eps1;
        config.beta = beta;
        config.lambda = lambda_;
        if let Some(cap) = m_cap {
            config.m_cap = cap;
        }
        config.label = label;
        if subspace_radius {
            config.radius_rule = RadiusRule::SubspaceCount;
        }
        let c = run(&self.inner, &config).map_err(py_err)?.coreset;
        Ok(Coreset {
            features: c.features.clone(),
            points: c.points.to_rows(),
            weights: c.weights.clone(),
            final_radius: c.final_radius,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "JoinInstance(tables={}, dim={}, join_size={})",
            self.inner.tables(),
            self.inner.dim(),
            self.index.join_size()
        )
    }
}

/// Weighted points standing in for the join.
#[pyclass(frozen, get_all)]
struct Coreset {
    features: Vec<String>,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    final_radius: f64,
}

#[pymethods]
impl Coreset {
    fn __len__(&self) -> usize {
        self.points.len()
    }

    fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    fn __repr__(&self) -> String {
        format!(
            "Coreset(points={}, total_weight={}, final_radius={})",
            self.points.len(),
            self.total_weight(),
            self.final_radius
        )
    }
}

fn loss_model(model: &str, centers: usize, kmeans_eps: f64, l2: f64, svm_lambda: f64) -> PyResult<LossModel> {
    match model {
        "kmeans" => Ok(LossModel::KMeans { centers, eps: kmeans_eps }),
        "logistic" => Ok(LossModel::Logistic { l2 }),
        "svm" => Ok(LossModel::Svm { lambda_reg: svm_lambda }),
        other => Err(PyValueError::new_err(format!("unknown model {other:?}"))),
    }
}

fn dataset(x: &[Vec<f64>], y: Option<Vec<bool>>) -> PyResult<Dataset> {
    Ok(Dataset { x: to_points(x)?, y })
}

/// Parameters as `{"centers": [...]}` or `{"w": [...], "b": float}`.
fn theta_out(py: Python<'_>, theta: Theta) -> PyResult<Py<PyAny>> {
    let d = pyo3::types::PyDict::new(py);
    match theta {
        Theta::Centers(c) => d.set_item("centers", c)?,
        Theta::Linear { w, b } => {
            d.set_item("w", w)?;
            d.set_item("b", b)?;
        }
    }
    Ok(d.into_any().unbind())
}

fn theta_in(theta: &Bound<'_, PyAny>) -> PyResult<Theta> {
    if let Ok(c) = theta.get_item("centers") {
        return Ok(Theta::Centers(c.extract()?));
    }
    Ok(Theta::Linear {
        w: theta.get_item("w")?.extract()?,
        b: theta.get_item("b")?.extract()?,
    })
}

/// Fits `model` on (optionally weighted) points.
#[pyfunction]
#[pyo3(signature = (model, x, y=None, weights=None, seed=0, max_iter=300, centers=10, kmeans_eps=0.1, l2=0.0, svm_lambda=1.0))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    model: &str,
    x: Vec<Vec<f64>>,
    y: Option<Vec<bool>>,
    weights: Option<Vec<f64>>,
    seed: u64,
    max_iter: usize,
    centers: usize,
    kmeans_eps: f64,
    l2: f64,
    svm_lambda: f64,
) -> PyResult<Py<PyAny>> {
    let model = loss_model(model, centers, kmeans_eps, l2, svm_lambda)?;
    let data = dataset(&x, y)?;
    let options = TrainOptions {
        max_iter,
        ..TrainOptions::default()
    };
    let theta = train_model(&model, &data, weights.as_deref(), &options, seed).map_err(py_err)?;
    theta_out(py, theta)
}

/// Weighted training objective of `model` at `theta`.
#[pyfunction]
#[pyo3(signature = (model, theta, x, y=None, weights=None, kmeans_eps=0.1, l2=0.0, svm_lambda=1.0))]
#[allow(clippy::too_many_arguments)]
fn objective(
    model: &str,
    theta: &Bound<'_, PyAny>,
    x: Vec<Vec<f64>>,
    y: Option<Vec<bool>>,
    weights: Option<Vec<f64>>,
    kmeans_eps: f64,
    l2: f64,
    svm_lambda: f64,
) -> PyResult<f64> {
    let theta = theta_in(theta)?;
    let centers = theta.centers().map_or(1, <[Vec<f64>]>::len);
    let model = loss_model(model, centers, kmeans_eps, l2, svm_lambda)?;
    let data = dataset(&x, y)?;
    model.weighted_objective(&theta, &data, weights.as_deref()).map_err(py_err)
}

/// Greedy farthest-point k-center: `(centers, cover_radius)`.
#[pyfunction]
fn gonzalez(points: Vec<Vec<f64>>, k: usize, seed: u64) -> PyResult<(Vec<Vec<f64>>, f64)> {
    let set = gonzalez_centers(&to_points(&points)?, k, seed);
    Ok((set.centers.to_rows(), set.cover_radius()))
}

#[pymodule]
fn relcoreset_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<JoinInstance>()?;
    m.add_class::<Coreset>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(objective, m)?)?;
    m.add_function(wrap_pyfunction!(gonzalez, m)?)?;
    m.add("RelcoresetError", m.py().get_type::<RelcoresetError>())?;
    m.add("CyclicJoinError", m.py().get_type::<CyclicJoinError>())?;
    m.add("EmptyRegionError", m.py().get_type::<EmptyRegionError>())?;
    Ok(())
}
