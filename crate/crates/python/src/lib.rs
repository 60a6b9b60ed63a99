//! Python bindings: graphs, generators, equilibrium metrics, update
//! formulas, certification and experiment runs.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

use coevo_core::equilibrium::{self, DEFAULT_TOL};
use coevo_core::experiment::run_experiment as core_run_experiment;
use coevo_core::io;
use coevo_core::rng::{stream_rng, streams};
use coevo_core::synthesis::{self, CommunityAssignment, OpinionKind, OpinionVector};
use coevo_core::theory;
use coevo_core::{Edge, Error};

fn py_err(e: Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (None, Some(u)) => u.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn to_dict<'py, T: serde::Serialize>(py: Python<'py>, x: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(x).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py(py, &v)
}

fn edge(pair: (usize, usize)) -> PyResult<Edge> {
    Edge::new(pair.0, pair.1).map_err(py_err)
}

/// Undirected simple graph on nodes `0..n`.
#[pyclass(name = "Graph", module = "coevo", skip_from_py_object)]
#[derive(Clone)]
pub struct PyGraph {
    inner: coevo_core::Graph,
}

#[pymethods]
impl PyGraph {
    #[new]
    #[pyo3(signature = (n, edges = Vec::new()))]
    fn new(n: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        Ok(PyGraph {
            inner: coevo_core::Graph::from_pairs(n, edges).map_err(py_err)?,
        })
    }

    /// Reads a SNAP-style edge list.
    #[staticmethod]
    fn read_edge_list(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(PyGraph {
            inner: io::read_edge_list(path).map_err(py_err)?,
        })
    }

    fn write_edge_list(&self, path: std::path::PathBuf) -> PyResult<()> {
        io::write_edge_list(&self.inner, path).map_err(py_err)
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.inner.edge_count()
    }

    #[getter]
    fn fixed_count(&self) -> usize {
        self.inner.fixed_count()
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().iter().map(|e| e.endpoints()).collect()
    }

    fn labels(&self) -> Vec<u64> {
        self.inner.labels().to_vec()
    }

    fn degree(&self, v: usize) -> PyResult<usize> {
        self.check(v)?;
        Ok(self.inner.degree(v))
    }

    fn neighbors(&self, v: usize) -> PyResult<Vec<usize>> {
        self.check(v)?;
        Ok(self.inner.neighbors(v).to_vec())
    }

    fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.inner.node_count() && v < self.inner.node_count() && self.inner.has_edge(u, v)
    }

    fn add_edge(&mut self, u: usize, v: usize) -> PyResult<()> {
        self.inner.add_edge(edge((u, v))?).map_err(py_err)
    }

    fn remove_edge(&mut self, u: usize, v: usize) -> PyResult<()> {
        self.inner.remove_edge(edge((u, v))?).map_err(py_err)
    }

    #[pyo3(signature = (u, v, fixed = true))]
    fn set_fixed(&mut self, u: usize, v: usize, fixed: bool) -> PyResult<()> {
        self.inner.set_fixed(edge((u, v))?, fixed).map_err(py_err)
    }

    /// Nodes at distance exactly two from `v`, sorted.
    fn two_hop_set(&self, v: usize) -> PyResult<Vec<usize>> {
        self.check(v)?;
        let mut out = self.inner.two_hop_set(v);
        out.sort_unstable();
        Ok(out)
    }

    /// Largest connected component of the 2-core, relabeled to `0..n'`.
    fn preprocess(&self) -> PyResult<Self> {
        Ok(PyGraph {
            inner: self.inner.preprocess().map_err(py_err)?,
        })
    }

    fn laplacian_quad(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.laplacian_quad(&x).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.node_count()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!(
            "Graph(nodes={}, edges={})",
            self.inner.node_count(),
            self.inner.edge_count()
        )
    }
}

impl PyGraph {
    fn check(&self, v: usize) -> PyResult<()> {
        if v >= self.inner.node_count() {
            return Err(py_err(Error::NodeOutOfRange {
                node: v,
                n: self.inner.node_count(),
            }));
        }
        Ok(())
    }
}

fn opinions(g: &PyGraph, s: Vec<f64>) -> PyResult<OpinionVector> {
    if s.len() != g.inner.node_count() {
        return Err(py_err(Error::DimensionMismatch {
            expected: g.inner.node_count(),
            actual: s.len(),
        }));
    }
    Ok(OpinionVector::new(s))
}

fn solve(g: &PyGraph, s: &OpinionVector, tol: f64) -> PyResult<equilibrium::ExpressedOpinions> {
    equilibrium::solve_expressed(&g.inner, s, tol, None).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (n, p = None, seed = 0, degree = None))]
fn gen_er(n: usize, p: Option<f64>, seed: u64, degree: Option<f64>) -> PyResult<PyGraph> {
    let p = match (p, degree) {
        (Some(p), None) => p,
        (None, Some(d)) => synthesis::er_probability_for_degree(n, d),
        _ => return Err(PyValueError::new_err("give exactly one of p or degree")),
    };
    let mut rng = stream_rng(seed, streams::GRAPH);
    Ok(PyGraph {
        inner: synthesis::gen_er(n, p, &mut rng).map_err(py_err)?,
    })
}

#[pyfunction]
#[pyo3(signature = (n, m, seed = 0))]
fn gen_ba(n: usize, m: usize, seed: u64) -> PyResult<PyGraph> {
    let mut rng = stream_rng(seed, streams::GRAPH);
    Ok(PyGraph {
        inner: synthesis::gen_ba(n, m, &mut rng).map_err(py_err)?,
    })
}

/// Returns the graph and each node's block id.
#[pyfunction]
#[pyo3(signature = (n, blocks, p_in, p_out, seed = 0))]
fn gen_sbm(
    n: usize,
    blocks: usize,
    p_in: f64,
    p_out: f64,
    seed: u64,
) -> PyResult<(PyGraph, Vec<usize>)> {
    let mut rng = stream_rng(seed, streams::GRAPH);
    let (g, a) = synthesis::gen_sbm(n, blocks, p_in, p_out, &mut rng).map_err(py_err)?;
    let block_of = (0..n).map(|v| a.block_of(v)).collect();
    Ok((PyGraph { inner: g }, block_of))
}

/// Mean-centered innate opinions: `uniform`, `bimodal` or `split_uniform`
/// (the last needs `blocks`).
#[pyfunction]
#[pyo3(signature = (n, kind = "uniform", seed = 0, mu = 0.5, sigma = 0.2, blocks = None))]
fn gen_opinions(
    n: usize,
    kind: &str,
    seed: u64,
    mu: f64,
    sigma: f64,
    blocks: Option<Vec<usize>>,
) -> PyResult<Vec<f64>> {
    let kind = match kind {
        "uniform" => OpinionKind::Uniform,
        "bimodal" => OpinionKind::Bimodal { mu, sigma },
        "split_uniform" => OpinionKind::SplitUniform,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown opinion kind `{other}`"
            )))
        }
    };
    let assignment = blocks.map(|b| {
        let count = b.iter().max().map_or(0, |m| m + 1);
        CommunityAssignment::from_blocks(b, count)
    });
    let mut rng = stream_rng(seed, streams::OPINIONS);
    Ok(
        synthesis::gen_opinions(n, kind, assignment.as_ref(), &mut rng)
            .map_err(py_err)?
            .into_values(),
    )
}

/// Equilibrium `z = (I + L)^{-1} s`.
#[pyfunction]
#[pyo3(signature = (g, s, tol = DEFAULT_TOL))]
fn solve_expressed(g: &PyGraph, s: Vec<f64>, tol: f64) -> PyResult<Vec<f64>> {
    let s = opinions(g, s)?;
    Ok(solve(g, &s, tol)?.into_values())
}

/// Polarization, disagreement and their sum at equilibrium, raw and
/// normalized, plus the per-node MSE.
#[pyfunction]
#[pyo3(signature = (g, s, tol = DEFAULT_TOL))]
fn metrics<'py>(
    py: Python<'py>,
    g: &PyGraph,
    s: Vec<f64>,
    tol: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let s = opinions(g, s)?;
    let z = solve(g, &s, tol)?;
    to_dict(
        py,
        &equilibrium::compute_metrics(&g.inner, &s, &z).map_err(py_err)?,
    )
}

/// The same three quadratic forms from a dense inverse (small graphs only).
#[pyfunction]
fn dense_metrics<'py>(py: Python<'py>, g: &PyGraph, s: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    let s = opinions(g, s)?;
    let d = equilibrium::dense_pd_oracle(&g.inner, &s).map_err(py_err)?;
    let dict = PyDict::new(py);
    dict.set_item("polarization", d.polarization)?;
    dict.set_item("disagreement", d.disagreement)?;
    dict.set_item("pd", d.pd)?;
    Ok(dict.into_any())
}

#[pyfunction]
#[pyo3(signature = (g, s, tol = DEFAULT_TOL))]
fn fixed_graph_pd(g: &PyGraph, s: Vec<f64>, tol: f64) -> PyResult<f64> {
    let s = opinions(g, s)?;
    equilibrium::fixed_graph_pd(&g.inner, &s, tol).map_err(py_err)
}

/// `b^T (I + L)^{-1} b` for the edge indicator `b = e_u - e_v`.
#[pyfunction]
#[pyo3(signature = (g, u, v, tol = 1e-12))]
fn resistance(g: &PyGraph, u: usize, v: usize, tol: f64) -> PyResult<f64> {
    theory::resistance_form(&g.inner, edge((u, v))?, tol).map_err(py_err)
}

/// Predicted PD after adding edge `(u, v)`.
#[pyfunction]
#[pyo3(signature = (g, s, u, v, tol = 1e-12))]
fn pd_after_add(g: &PyGraph, s: Vec<f64>, u: usize, v: usize, tol: f64) -> PyResult<f64> {
    let s = opinions(g, s)?;
    let z = solve(g, &s, tol)?;
    theory::pd_after_add(&g.inner, &s, &z, edge((u, v))?, tol).map_err(py_err)
}

/// Predicted PD after deleting edge `(u, v)`.
#[pyfunction]
#[pyo3(signature = (g, s, u, v, tol = 1e-12))]
fn pd_after_delete(g: &PyGraph, s: Vec<f64>, u: usize, v: usize, tol: f64) -> PyResult<f64> {
    let s = opinions(g, s)?;
    let z = solve(g, &s, tol)?;
    theory::pd_after_delete(&g.inner, &s, &z, edge((u, v))?, tol).map_err(py_err)
}

/// Swap quantities for adding `add` and removing `remove`, with the
/// improvement predicate under `improves`.
#[pyfunction]
#[pyo3(signature = (g, s, add, remove, tol = 1e-12))]
fn analyze_swap<'py>(
    py: Python<'py>,
    g: &PyGraph,
    s: Vec<f64>,
    add: (usize, usize),
    remove: (usize, usize),
    tol: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let s = opinions(g, s)?;
    let z = solve(g, &s, tol)?;
    let a =
        theory::analyze_swap(&g.inner, &s, &z, edge(add)?, edge(remove)?, tol).map_err(py_err)?;
    let dict = to_dict(py, &a)?;
    dict.set_item("alpha_bound", a.alpha_bound())?;
    dict.set_item("improves", theory::swap_improves(&a))?;
    Ok(dict)
}

/// Runs the update-formula certification and returns the report.
#[pyfunction]
#[pyo3(signature = (n = 50, p = 0.2, instances = 100, swaps = 10_000, seed = 0))]
fn certify<'py>(
    py: Python<'py>,
    n: usize,
    p: f64,
    instances: usize,
    swaps: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = theory::CertifyConfig {
        n,
        p,
        instances,
        swaps,
        seed,
        ..theory::CertifyConfig::default()
    };
    let report = py.detach(|| theory::certify(&cfg)).map_err(py_err)?;
    let dict = to_dict(py, &report)?;
    dict.set_item("passed", report.passed())?;
    Ok(dict)
}

#[pyfunction]
fn preset_names() -> Vec<&'static str> {
    coevo_core::presets::names()
}

#[pyfunction]
fn preset_toml(name: &str) -> PyResult<&'static str> {
    coevo_core::presets::find(name)
        .map(|p| p.toml)
        .ok_or_else(|| PyValueError::new_err(format!("unknown preset `{name}`")))
}

/// Runs an experiment described by TOML text (no sweep) and returns the
/// per-trial records and the trial-mean series. With `out`, the result
/// files are also written there.
#[pyfunction]
#[pyo3(signature = (config, out = None, parallel = None))]
fn run_experiment<'py>(
    py: Python<'py>,
    config: &str,
    out: Option<std::path::PathBuf>,
    parallel: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let plan = io::parse_config(config, std::path::Path::new("config.toml")).map_err(py_err)?;
    if !plan.sweep.is_empty() {
        return Err(PyValueError::new_err(
            "configs with a sweep are run one grid point at a time; use the CLI",
        ));
    }
    let cfg = plan.base;
    let result = py
        .detach(|| -> coevo_core::Result<_> {
            let result = core_run_experiment(&cfg, parallel)?;
            let manifest = match &out {
                Some(dir) => Some(io::write_outputs(&result, dir)?),
                None => None,
            };
            Ok((result, manifest))
        })
        .map_err(py_err)?;
    let (result, manifest) = result;
    let dict = PyDict::new(py);
    dict.set_item("name", &result.config.name)?;
    let trials = PyList::empty(py);
    for t in &result.trials {
        let td = PyDict::new(py);
        td.set_item("trial", t.trial)?;
        td.set_item("seed", t.seed)?;
        td.set_item("nodes", t.node_count)?;
        td.set_item("edges", t.edge_count)?;
        td.set_item("records", to_dict(py, &t.records)?)?;
        trials.append(td)?;
    }
    dict.set_item("trials", trials)?;
    dict.set_item("mean", to_dict(py, &result.series.aggregate)?)?;
    dict.set_item("audit", to_dict(py, &result.audit)?)?;
    if let Some(m) = manifest {
        dict.set_item("manifest", to_dict(py, &m)?)?;
    }
    Ok(dict.into_any())
}

#[pymodule]
fn coevo(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_function(wrap_pyfunction!(gen_er, m)?)?;
    m.add_function(wrap_pyfunction!(gen_ba, m)?)?;
    m.add_function(wrap_pyfunction!(gen_sbm, m)?)?;
    m.add_function(wrap_pyfunction!(gen_opinions, m)?)?;
    m.add_function(wrap_pyfunction!(solve_expressed, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(dense_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(fixed_graph_pd, m)?)?;
    m.add_function(wrap_pyfunction!(resistance, m)?)?;
    m.add_function(wrap_pyfunction!(pd_after_add, m)?)?;
    m.add_function(wrap_pyfunction!(pd_after_delete, m)?)?;
    m.add_function(wrap_pyfunction!(analyze_swap, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(preset_names, m)?)?;
    m.add_function(wrap_pyfunction!(preset_toml, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
