//! Python bindings: `import mmda`.
//!
//! Structured values (HITs, sessions, kept judgments, reports) cross the
//! boundary as plain dicts and lists with the same field names as the JSON
//! files the CLI writes.

use std::collections::{BTreeMap, BTreeSet};

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyModule;
use serde::de::DeserializeOwned;
use serde::Serialize;

use mmda_core::hitgen::{Condition, Hit};
use mmda_core::qc::{filter_campaign, KeptJudgment, Overrides, QcConfig, WorkerSession};
use mmda_core::ranking::{self, DEFAULT_LEVELS};
use mmda_core::sim::{self, PersonaParams};
use mmda_core::stats::{self, Alternative, WorkerScore};

create_exception!(mmda, MmdaError, PyValueError, "Invalid input or a failed computation.");

fn err(e: impl std::fmt::Display) -> PyErr {
    MmdaError::new_err(e.to_string())
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(err)
}

fn alternative(s: &str) -> PyResult<Alternative> {
    s.parse().map_err(err)
}

#[pyclass(module = "mmda", get_all, frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct RankSumResult {
    u_statistic: f64,
    p_value: f64,
    alternative: String,
    /// "exact" or "normal_approx".
    method: String,
    n_a: usize,
    n_b: usize,
}

#[pymethods]
impl RankSumResult {
    fn __repr__(&self) -> String {
        format!(
            "RankSumResult(u_statistic={}, p_value={}, alternative={:?}, method={:?}, n_a={}, n_b={})",
            self.u_statistic, self.p_value, self.alternative, self.method, self.n_a, self.n_b
        )
    }
}

/// Wilcoxon rank-sum test of `a` against `b`.
#[pyfunction]
#[pyo3(signature = (a, b, alternative = "greater"))]
fn rank_sum_test(a: Vec<f64>, b: Vec<f64>, alternative: &str) -> PyResult<RankSumResult> {
    let r = stats::rank_sum_test(&a, &b, self::alternative(alternative)?).map_err(err)?;
    Ok(RankSumResult {
        u_statistic: r.u_statistic,
        p_value: r.p_value,
        alternative: r.alternative.to_string(),
        method: match r.method {
            stats::RankSumMethod::Exact => "exact".into(),
            stats::RankSumMethod::NormalApprox => "normal_approx".into(),
        },
        n_a: r.n_a,
        n_b: r.n_b,
    })
}

/// Exact permutation p-value, ties allowed, pooled size up to 60.
#[pyfunction]
#[pyo3(signature = (a, b, alternative = "greater"))]
fn exact_rank_sum_p(a: Vec<f64>, b: Vec<f64>, alternative: &str) -> PyResult<f64> {
    stats::exact_rank_sum_p(&a, &b, self::alternative(alternative)?).map_err(err)
}

#[pyfunction]
fn midranks(values: Vec<f64>) -> Vec<f64> {
    stats::midranks(&values)
}

#[pyfunction]
fn pearson(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    stats::pearson(&x, &y).map_err(err)
}

#[pyfunction]
fn spearman(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    stats::spearman(&x, &y).map_err(err)
}

/// Per-worker z-scores.
///
/// `scores` maps worker id to a list of `(score, genuine)` pairs. Returns
/// `(worker_id, index, raw, z)` for genuine entries only; `index` points
/// into that worker's input list.
#[pyfunction]
fn standardize(scores: BTreeMap<String, Vec<(f64, bool)>>) -> PyResult<Vec<(String, usize, f64, f64)>> {
    let by_worker: BTreeMap<String, Vec<WorkerScore<usize>>> = scores
        .into_iter()
        .map(|(w, v)| {
            let items = v.into_iter().enumerate().map(|(i, (score, genuine))| WorkerScore { item: i, genuine, score });
            (w, items.collect())
        })
        .collect();
    let z = stats::standardize(&by_worker).map_err(err)?;
    Ok(z.into_iter().map(|j| (j.worker_id, j.item, j.raw, j.z)).collect())
}

#[pyfunction]
fn derive_seed(root: u64, label: &str) -> u64 {
    mmda_core::seeds::derive_seed(root, label)
}

#[pyclass(module = "mmda", get_all, set_all, from_py_object)]
#[derive(Clone)]
pub struct SystemScorecard {
    system_id: String,
    raw_avg: f64,
    z_avg: f64,
    n_judgments: usize,
    rank: usize,
}

#[pymethods]
impl SystemScorecard {
    #[new]
    #[pyo3(signature = (system_id, z_avg, raw_avg, n_judgments = 0, rank = 0))]
    fn new(system_id: String, z_avg: f64, raw_avg: f64, n_judgments: usize, rank: usize) -> Self {
        Self { system_id, raw_avg, z_avg, n_judgments, rank }
    }

    fn __repr__(&self) -> String {
        format!(
            "SystemScorecard(system_id={:?}, z_avg={}, raw_avg={}, n_judgments={}, rank={})",
            self.system_id, self.z_avg, self.raw_avg, self.n_judgments, self.rank
        )
    }
}

impl From<&SystemScorecard> for ranking::SystemScorecard {
    fn from(c: &SystemScorecard) -> Self {
        Self { system_id: c.system_id.clone(), raw_avg: c.raw_avg, z_avg: c.z_avg, n_judgments: c.n_judgments, rank: c.rank }
    }
}

impl From<ranking::SystemScorecard> for SystemScorecard {
    fn from(c: ranking::SystemScorecard) -> Self {
        Self { system_id: c.system_id, raw_avg: c.raw_avg, z_avg: c.z_avg, n_judgments: c.n_judgments, rank: c.rank }
    }
}

/// Sorted best first with 1-based ranks: z to two decimals, then raw average.
#[pyfunction]
fn rank_scorecards(cards: Vec<SystemScorecard>) -> Vec<SystemScorecard> {
    let mut core: Vec<ranking::SystemScorecard> = cards.iter().map(Into::into).collect();
    ranking::rank_scorecards(&mut core);
    core.into_iter().map(Into::into).collect()
}

/// Scorecards from kept judgments (dicts as in `kept_<campaign>.jsonl`).
#[pyfunction]
fn system_scores(kept: &Bound<'_, PyAny>, systems: BTreeSet<String>) -> PyResult<Vec<SystemScorecard>> {
    let kept: Vec<KeptJudgment> = from_py(kept)?;
    Ok(ranking::system_scores(&kept, &systems).map_err(err)?.into_iter().map(Into::into).collect())
}

#[pyclass(module = "mmda", get_all, frozen)]
pub struct SignificanceMatrix {
    systems: Vec<String>,
    levels: Vec<f64>,
    z_avg: Vec<f64>,
    n_judgments: Vec<usize>,
    diff: Vec<Vec<Option<f64>>>,
    p_value: Vec<Vec<Option<f64>>>,
    stars: Vec<Vec<Option<u8>>>,
}

impl SignificanceMatrix {
    fn core(&self) -> ranking::SignificanceMatrix {
        ranking::SignificanceMatrix {
            systems: self.systems.clone(),
            levels: self.levels.clone(),
            z_avg: self.z_avg.clone(),
            n_judgments: self.n_judgments.clone(),
            diff: self.diff.clone(),
            p_value: self.p_value.clone(),
            stars: self.stars.clone(),
        }
    }
}

#[pymethods]
impl SignificanceMatrix {
    /// Violated invariants as `(row, col, rule)`; empty for a well-formed matrix.
    fn violations(&self) -> Vec<(usize, usize, String)> {
        ranking::check_matrix(&self.core()).into_iter().map(|v| (v.row, v.col, v.rule.to_string())).collect()
    }

    fn appendix_csv(&self) -> String {
        mmda_core::report::appendix_csv(&self.core())
    }

    fn __repr__(&self) -> String {
        format!("SignificanceMatrix(systems={:?}, levels={:?})", self.systems, self.levels)
    }
}

/// Pairwise one-sided rank-sum matrix over per-system z pools.
#[pyfunction]
#[pyo3(signature = (pools, levels = None))]
fn significance_matrix(pools: BTreeMap<String, Vec<f64>>, levels: Option<Vec<f64>>) -> PyResult<SignificanceMatrix> {
    let levels = levels.unwrap_or_else(|| DEFAULT_LEVELS.to_vec());
    let m = ranking::significance_matrix(&pools, &levels).map_err(err)?;
    Ok(SignificanceMatrix {
        systems: m.systems,
        levels: m.levels,
        z_avg: m.z_avg,
        n_judgments: m.n_judgments,
        diff: m.diff,
        p_value: m.p_value,
        stars: m.stars,
    })
}

/// Pearson r of per-system z averages across two runs, plus scatter points.
#[pyfunction]
fn replication_correlation(py: Python<'_>, a: Vec<SystemScorecard>, b: Vec<SystemScorecard>) -> PyResult<(f64, Py<PyAny>)> {
    let a: Vec<ranking::SystemScorecard> = a.iter().map(Into::into).collect();
    let b: Vec<ranking::SystemScorecard> = b.iter().map(Into::into).collect();
    let rep = ranking::replication_correlation(&a, &b).map_err(err)?;
    Ok((rep.r, to_py(py, &rep.points)?))
}

/// Structural violations of a HIT dict against the default design.
#[pyfunction]
fn validate_hit(hit: &Bound<'_, PyAny>) -> PyResult<Vec<String>> {
    let hit: Hit = from_py(hit)?;
    Ok(mmda_core::hitgen::validate_hit(&hit).iter().map(ToString::to_string).collect())
}

/// A synthetic WMT-shaped corpus with planted system qualities, sampled and
/// packed into HITs.
#[pyclass(module = "mmda", frozen)]
pub struct Scenario {
    inner: sim::Scenario,
}

#[pymethods]
impl Scenario {
    #[new]
    #[pyo3(signature = (num_systems = 10, spacing = 2.0, target = 450, condition = "text_only", seed = 0))]
    fn new(num_systems: usize, spacing: f64, target: usize, condition: &str, seed: u64) -> PyResult<Self> {
        let condition: Condition = condition.parse().map_err(err)?;
        let inner = sim::planted_scenario(num_systems, spacing, target, condition, seed).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn qualities(&self) -> BTreeMap<String, f64> {
        self.inner.qualities.clone()
    }

    #[getter]
    fn num_hits(&self) -> usize {
        self.inner.hits.len()
    }

    #[getter]
    fn hits(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.hits)
    }

    /// Sessions (dicts) from simulated reliable, random and constant workers.
    #[pyo3(signature = (reliable = 0, random = 0, constant = 0, hits_per_worker = 1, seed = 0, noise_sd = 15.0))]
    fn simulate(
        &self,
        py: Python<'_>,
        reliable: usize,
        random: usize,
        constant: usize,
        hits_per_worker: usize,
        seed: u64,
        noise_sd: f64,
    ) -> PyResult<Py<PyAny>> {
        let workers = sim::population(reliable, random, constant);
        let params = PersonaParams { noise_sd, ..PersonaParams::default() };
        let sessions =
            sim::simulate_campaign(&self.inner.hits, &workers, &self.inner.qualities, &params, hits_per_worker, seed);
        to_py(py, &sessions)
    }

    /// Quality control over sessions of this scenario's HITs. Returns a dict
    /// with `reports`, `kept`, `rejected` and `summary`.
    #[pyo3(signature = (sessions, alpha = 0.05))]
    fn filter(&self, py: Python<'_>, sessions: &Bound<'_, PyAny>, alpha: f64) -> PyResult<Py<PyAny>> {
        let sessions: Vec<WorkerSession> = from_py(sessions)?;
        let hits: BTreeMap<String, Hit> = self.inner.hits.iter().map(|h| (h.hit_id.clone(), h.clone())).collect();
        let config = QcConfig { alpha, ..QcConfig::default() };
        let out = filter_campaign(&sessions, &hits, &config, &Overrides::new()).map_err(err)?;
        to_py(py, &out)
    }

    fn __repr__(&self) -> String {
        format!("Scenario(systems={}, hits={})", self.inner.qualities.len(), self.inner.hits.len())
    }
}

#[pymodule]
pub fn mmda(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("MmdaError", m.py().get_type::<MmdaError>())?;
    m.add_class::<RankSumResult>()?;
    m.add_class::<SystemScorecard>()?;
    m.add_class::<SignificanceMatrix>()?;
    m.add_class::<Scenario>()?;
    m.add_function(wrap_pyfunction!(rank_sum_test, m)?)?;
    m.add_function(wrap_pyfunction!(exact_rank_sum_p, m)?)?;
    m.add_function(wrap_pyfunction!(midranks, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(standardize, m)?)?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    m.add_function(wrap_pyfunction!(rank_scorecards, m)?)?;
    m.add_function(wrap_pyfunction!(system_scores, m)?)?;
    m.add_function(wrap_pyfunction!(significance_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(replication_correlation, m)?)?;
    m.add_function(wrap_pyfunction!(validate_hit, m)?)?;
    Ok(())
}
