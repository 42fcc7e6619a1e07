//! Python bindings. Rationals cross the boundary as `fractions.Fraction`;
//! allocations are lists of 0-based owners, one per chore.

use efx::cli::{run_method, Method};
use efx::fairness::{self, Factor, PoStatus};
use efx::framework::{find_certificate as find_cert, CertificateMode};
use efx::initializers::{PipelineOutput, DEFAULT_BUDGET};
use efx::market::mpb_price_feasibility;
use efx::model::{self, parse_rational, Allocation, Distribution, PriceVector, Rational};
use efx::oracle;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyList;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_rational(obj: &Bound<'_, PyAny>) -> PyResult<Rational> {
    let text = obj.str()?.to_string();
    parse_rational(&text).ok_or_else(|| PyValueError::new_err(format!("not an exact rational: {text:?}")))
}

fn fraction<'py>(py: Python<'py>, v: &Rational) -> PyResult<Bound<'py, PyAny>> {
    py.import("fractions")?.getattr("Fraction")?.call1((v.to_string(),))
}

fn factor<'py>(py: Python<'py>, f: &Factor) -> PyResult<Bound<'py, PyAny>> {
    match f {
        Factor::Finite(v) => fraction(py, v),
        Factor::Infinite => py.import("math")?.getattr("inf"),
    }
}

fn fractions<'py>(py: Python<'py>, vs: &[Rational]) -> PyResult<Bound<'py, PyList>> {
    PyList::new(py, vs.iter().map(|v| fraction(py, v)).collect::<PyResult<Vec<_>>>()?)
}

fn allocation(inst: &model::Instance, owners: Vec<usize>) -> PyResult<Allocation> {
    if owners.len() != inst.m() {
        return Err(PyValueError::new_err(format!("expected {} owners, got {}", inst.m(), owners.len())));
    }
    Allocation::from_owners(inst.n(), &owners).map_err(value_err)
}

fn prices(values: &[Bound<'_, PyAny>]) -> PyResult<PriceVector> {
    PriceVector::new(values.iter().map(to_rational).collect::<PyResult<_>>()?).map_err(value_err)
}

fn owners_of(x: &Allocation) -> Vec<usize> {
    x.owners().iter().map(|o| o.expect("pipelines return complete allocations")).collect()
}

/// Chore disutilities, one row per agent.
#[pyclass(frozen, module = "efx_chores")]
struct Instance {
    inner: model::Instance,
}

#[pymethods]
impl Instance {
    #[new]
    fn new(rows: Vec<Vec<Bound<'_, PyAny>>>) -> PyResult<Self> {
        let d = rows
            .iter()
            .map(|r| r.iter().map(to_rational).collect::<PyResult<Vec<_>>>())
            .collect::<PyResult<Vec<_>>>()?;
        Ok(Instance {
            inner: model::Instance::new(d).map_err(value_err)?,
        })
    }

    /// Reads the text format: a header `n m`, then `n` rows.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(Instance {
            inner: model::parse_instance(text).map_err(value_err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (seed, n, m, dist = "uniform-int:1..10"))]
    fn generate(seed: u64, n: usize, m: usize, dist: &str) -> PyResult<Self> {
        let dist: Distribution = dist.parse().map_err(value_err)?;
        Ok(Instance {
            inner: model::generate_random(seed, n, m, &dist).map_err(value_err)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    fn rows<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyList>>> {
        self.inner.rows().iter().map(|r| fractions(py, r)).collect()
    }

    /// `k` when every row takes values in `{a, k*a}`, else None.
    fn bivalued_ratio<'py>(&self, py: Python<'py>) -> PyResult<Option<Bound<'py, PyAny>>> {
        self.inner.bivalued_ratio().map(|k| fraction(py, &k)).transpose()
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn __repr__(&self) -> String {
        format!("Instance(n={}, m={})", self.inner.n(), self.inner.m())
    }
}

/// Output of a pipeline run.
#[pyclass(frozen, get_all, module = "efx_chores")]
struct Solution {
    method: String,
    owners: Vec<usize>,
    bundles: Vec<Vec<usize>>,
    factor: Py<PyAny>,
    target: Py<PyAny>,
    swaps: usize,
    cert_mode: String,
    prices: Option<Py<PyList>>,
    flags: Vec<String>,
    trace: String,
}

#[pymethods]
impl Solution {
    fn __repr__(&self, py: Python<'_>) -> PyResult<String> {
        Ok(format!(
            "Solution(method={:?}, owners={:?}, factor={})",
            self.method,
            self.owners,
            self.factor.bind(py).str()?
        ))
    }
}

impl Solution {
    fn from_output(py: Python<'_>, method: Method, out: &PipelineOutput) -> PyResult<Self> {
        Ok(Solution {
            method: method.to_string(),
            owners: owners_of(&out.allocation),
            bundles: out.allocation.bundles(),
            factor: factor(py, &out.factor)?.unbind(),
            target: fraction(py, &out.lambda)?.unbind(),
            swaps: out.swap_count(),
            cert_mode: out.cert_mode(),
            prices: out.prices.as_ref().map(|p| fractions(py, p.as_slice()).map(Bound::unbind)).transpose()?,
            flags: out.flags.clone(),
            trace: out.trace.to_log(),
        })
    }
}

fn parse_method(name: &str) -> PyResult<Method> {
    Ok(match name {
        "auto" => Method::Auto,
        "pef1" => Method::Pef1,
        "bivalued" => Method::Bivalued,
        "small-m" => Method::SmallM,
        "er4" => Method::Er4,
        other => return Err(PyValueError::new_err(format!("unknown method {other:?}"))),
    })
}

/// Runs a pipeline. `er4` needs the rounded `owners` and `prices`.
#[pyfunction]
#[pyo3(signature = (instance, method = "auto", owners = None, prices = None, budget = DEFAULT_BUDGET))]
fn solve(
    py: Python<'_>,
    instance: &Instance,
    method: &str,
    owners: Option<Vec<usize>>,
    prices: Option<Vec<Bound<'_, PyAny>>>,
    budget: u64,
) -> PyResult<Solution> {
    let inst = &instance.inner;
    let method = parse_method(method)?.resolve(inst);
    let rounded = match (owners, prices) {
        (Some(o), Some(p)) => Some((allocation(inst, o)?, self::prices(&p)?)),
        (None, None) => None,
        _ => return Err(PyValueError::new_err("owners and prices go together")),
    };
    let out = py
        .detach(|| run_method(inst, method, rounded.as_ref().map(|(x, p)| (x, p)), budget))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Solution::from_output(py, method, &out)
}

/// Smallest alpha with the allocation alpha-EFX; `math.inf` if none.
#[pyfunction]
fn efx_factor<'py>(py: Python<'py>, instance: &Instance, owners: Vec<usize>) -> PyResult<Bound<'py, PyAny>> {
    let x = allocation(&instance.inner, owners)?;
    factor(py, &fairness::efx_factor(&instance.inner, &x).map_err(value_err)?)
}

/// Returns None when the allocation is Pareto optimal, else a dominating
/// allocation as owners.
#[pyfunction]
#[pyo3(signature = (instance, owners, budget = DEFAULT_BUDGET))]
fn pareto_witness(instance: &Instance, owners: Vec<usize>, budget: u64) -> PyResult<Option<Vec<usize>>> {
    let x = allocation(&instance.inner, owners)?;
    match fairness::is_po_bruteforce(&instance.inner, &x, budget).map_err(value_err)? {
        PoStatus::Po => Ok(None),
        PoStatus::Dominated(w) => Ok(Some(owners_of(&w))),
        PoStatus::BudgetExceeded => Err(PyValueError::new_err("n^m exceeds the budget")),
    }
}

/// Searches for `N_H` making the allocation lambda-EFX friendly. `mode` is
/// strict, weak or weak-global.
#[pyfunction]
#[pyo3(signature = (instance, owners, lam, mode = "strict"))]
fn find_certificate(instance: &Instance, owners: Vec<usize>, lam: &Bound<'_, PyAny>, mode: &str) -> PyResult<Option<Vec<usize>>> {
    let mode = match mode {
        "strict" => CertificateMode::Strict,
        "weak" => CertificateMode::Weak { global_minimum: false },
        "weak-global" => CertificateMode::Weak { global_minimum: true },
        other => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
    };
    let x = allocation(&instance.inner, owners)?;
    let cert = find_cert(&instance.inner, &x, &to_rational(lam)?, mode).map_err(value_err)?;
    Ok(cert.map(|c| c.nh))
}

/// MPB prices supporting the allocation, or None.
#[pyfunction]
fn mpb_prices<'py>(py: Python<'py>, instance: &Instance, owners: Vec<usize>) -> PyResult<Option<Bound<'py, PyList>>> {
    let x = allocation(&instance.inner, owners)?;
    match mpb_price_feasibility(&instance.inner, &x).map_err(value_err)? {
        Ok(p) => Ok(Some(fractions(py, p.as_slice())?)),
        Err(_) => Ok(None),
    }
}

/// Best EFX factor over all allocations, by enumeration.
#[pyfunction]
#[pyo3(signature = (instance, budget = DEFAULT_BUDGET))]
fn best_efx_factor<'py>(py: Python<'py>, instance: &Instance, budget: u64) -> PyResult<Bound<'py, PyAny>> {
    let inst = &instance.inner;
    let best = py.detach(|| oracle::best_efx_factor(inst, budget)).map_err(value_err)?;
    fraction(py, &best)
}

#[pymodule]
fn efx_chores(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Instance>()?;
    m.add_class::<Solution>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(efx_factor, m)?)?;
    m.add_function(wrap_pyfunction!(pareto_witness, m)?)?;
    m.add_function(wrap_pyfunction!(find_certificate, m)?)?;
    m.add_function(wrap_pyfunction!(mpb_prices, m)?)?;
    m.add_function(wrap_pyfunction!(best_efx_factor, m)?)?;
    m.add("DEFAULT_BUDGET", DEFAULT_BUDGET)?;
    Ok(())
}
