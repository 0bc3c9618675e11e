//! Python bindings for the Carnot group toolkit.
//!
//! Exposes the group descriptor with its arithmetic, the multiexponential
//! diagnostics, the step-two chain solver, the distance oracle and the
//! convexity probes. Scalar data crosses the boundary as floats; structured
//! reports come back as plain dicts/lists (JSON-shaped).

use carnot_kit_core::convexity::{
    cone_probe, default_cone_s_grid, derivative_sign_check, filiform_witness, free32_axis_check,
    hconvex_scan, ConeProbeOptions, ImplicitSet,
};
use carnot_kit_core::distance::{distance_estimate, homogeneous_norm, norm_distance_equivalence};
use carnot_kit_core::groups::{metivier_check, parse_group_shorthand, GroupDescriptor};
use carnot_kit_core::multiexp::{
    endpoint_map, filiform_m, gamma, openness_probe, submersion_test_f64,
};
use carnot_kit_core::pansu::{
    pansu_slope, steptwo_pansu_slope, ResidualOptions, DEFAULT_LAMBDA_GRID,
};
use carnot_kit_core::scalar::{f64_to_rat, rat_to_f64, Rat};
use carnot_kit_core::steptwo_solver::{choose_p, solve_full};
use carnot_kit_core::CarnotError;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py_err(e: CarnotError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json_obj<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let s = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let json = py.import("json")?;
    Ok(json.call_method1("loads", (s,))?.unbind())
}

fn rats(v: &[f64]) -> Vec<Rat> {
    v.iter().map(|&x| f64_to_rat(x)).collect()
}

fn floats(v: &[Rat]) -> Vec<f64> {
    v.iter().map(rat_to_f64).collect()
}

/// A Carnot group descriptor: "heisenberg", "filiform:p", "free32", or an
/// inline JSON descriptor {"family": ...}.
#[pyclass(name = "CarnotGroup")]
struct CarnotGroup {
    inner: GroupDescriptor,
}

#[pymethods]
impl CarnotGroup {
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        let inner = if spec.trim_start().starts_with('{') {
            serde_json::from_str(spec)
                .map_err(|e| PyValueError::new_err(format!("bad descriptor: {e}")))?
        } else {
            parse_group_shorthand(spec).map_err(to_py_err)?
        };
        Ok(CarnotGroup { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn step(&self) -> usize {
        self.inner.step()
    }

    #[getter]
    fn layer_dims(&self) -> Vec<usize> {
        self.inner.layer_dims()
    }

    fn descriptor_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn identity(&self) -> Vec<f64> {
        self.inner.identity()
    }

    /// Exact under the hood: inputs are taken as dyadic rationals.
    fn multiply(&self, a: Vec<f64>, b: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(floats(&self.inner.multiply(&rats(&a), &rats(&b)).map_err(to_py_err)?))
    }

    fn inverse(&self, a: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(floats(&self.inner.inverse(&rats(&a)).map_err(to_py_err)?))
    }

    fn dilate(&self, lam: f64, a: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.dilate(&lam, &a).map_err(to_py_err)
    }

    fn exp_horizontal(&self, w: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(floats(&self.inner.exp_horizontal(&rats(&w)).map_err(to_py_err)?))
    }

    fn flow(&self, w: Vec<f64>, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(floats(&self.inner.flow(&rats(&w), &rats(&x)).map_err(to_py_err)?))
    }

    fn horizontal_field(&self, j: usize, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.horizontal_field(j, &x).map_err(to_py_err)
    }

    /// Γ^(p) of a chain of horizontal vectors.
    fn gamma(&self, chain: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        gamma(&self.inner, &chain).map_err(to_py_err)
    }

    /// End-point of a piecewise-constant control grid on [0, 1].
    fn endpoint(&self, controls: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        endpoint_map(&self.inner, &controls).map_err(to_py_err)
    }

    fn homogeneous_norm(&self, x: Vec<f64>) -> PyResult<f64> {
        homogeneous_norm(&self.inner, &x).map_err(to_py_err)
    }

    /// Rank report of dΓ^(p) at the constant chain (ξ, …, ξ). Exact rank
    /// when the coordinates are read as dyadic rationals.
    fn submersion(&self, py: Python<'_>, xi: Vec<f64>, p: usize) -> PyResult<Py<PyAny>> {
        let report = submersion_test_f64(&self.inner, &xi, p).map_err(to_py_err)?;
        json_obj(py, &report)
    }

    #[pyo3(signature = (xi, p, eps, targets=8, seed=0))]
    fn openness(
        &self,
        py: Python<'_>,
        xi: Vec<f64>,
        p: usize,
        eps: f64,
        targets: usize,
        seed: u64,
    ) -> PyResult<Py<PyAny>> {
        let report =
            openness_probe(&self.inner, &xi, p, eps, targets, seed).map_err(to_py_err)?;
        json_obj(py, &report)
    }

    #[pyo3(signature = (a, b, segments=64, restarts=16, seed=0))]
    fn distance(
        &self,
        py: Python<'_>,
        a: Vec<f64>,
        b: Vec<f64>,
        segments: usize,
        restarts: usize,
        seed: u64,
    ) -> PyResult<Py<PyAny>> {
        let est = distance_estimate(&self.inner, &a, &b, segments, restarts, seed)
            .map_err(to_py_err)?;
        json_obj(py, &est)
    }

    #[pyo3(signature = (trials=10_000, seed=0))]
    fn metivier(&self, py: Python<'_>, trials: usize, seed: u64) -> PyResult<Py<PyAny>> {
        let GroupDescriptor::StepTwo(s2) = &self.inner else {
            return Err(PyValueError::new_err("metivier needs a step-two descriptor"));
        };
        let report = metivier_check(s2, trials, seed).map_err(to_py_err)?;
        json_obj(py, &report)
    }

    /// Constructive step-two chain solver; the reconstruction is verified
    /// exactly before anything is returned.
    #[pyo3(signature = (z, t, xi=None))]
    fn solve_step2(
        &self,
        py: Python<'_>,
        z: Vec<f64>,
        t: Vec<f64>,
        xi: Option<Vec<f64>>,
    ) -> PyResult<Py<PyAny>> {
        let GroupDescriptor::StepTwo(s2) = &self.inner else {
            return Err(PyValueError::new_err("solve_step2 needs a step-two descriptor"));
        };
        let xi = rats(&xi.unwrap_or_else(|| vec![0.0; s2.m()]));
        let full = solve_full(s2, &xi, &rats(&z), &rats(&t)).map_err(to_py_err)?;
        let xi_f = floats(&full.xi);
        let chain: Vec<Vec<f64>> = full
            .correction
            .u_f64()
            .into_iter()
            .map(|row| row.iter().zip(&xi_f).map(|(u, x)| u + x).collect())
            .collect();
        let payload = serde_json::json!({
            "p": choose_p(s2),
            "chain": chain,
            "residual": full.residual_f64(s2),
            "bound": full.chain_bound(),
            "bound_ratio": full.correction.bound_ratio(),
            "exact_verified": true,
        });
        json_obj(py, &payload)
    }

    /// Residual decay of the distance expansion along δ_λ x0.
    #[pyo3(signature = (w, x0, lambdas=None, estimate=false, segments=48, restarts=8, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn pansu_slope(
        &self,
        py: Python<'_>,
        w: Vec<f64>,
        x0: Vec<f64>,
        lambdas: Option<Vec<f64>>,
        estimate: bool,
        segments: usize,
        restarts: usize,
        seed: u64,
    ) -> PyResult<Py<PyAny>> {
        let grid = lambdas.unwrap_or_else(|| DEFAULT_LAMBDA_GRID.to_vec());
        let opts = ResidualOptions {
            p: None,
            estimate: estimate.then_some((segments, restarts, seed)),
        };
        let report = pansu_slope(&self.inner, &w, &x0, &grid, &opts).map_err(to_py_err)?;
        json_obj(py, &report)
    }

    /// Step-two residual decay under (z, t) → (λz, λ²t); works at abnormal
    /// directions.
    #[pyo3(signature = (w, z0, t0, lambdas=None))]
    fn steptwo_pansu_slope(
        &self,
        py: Python<'_>,
        w: Vec<f64>,
        z0: Vec<f64>,
        t0: Vec<f64>,
        lambdas: Option<Vec<f64>>,
    ) -> PyResult<Py<PyAny>> {
        let GroupDescriptor::StepTwo(s2) = &self.inner else {
            return Err(PyValueError::new_err("needs a step-two descriptor"));
        };
        let grid = lambdas.unwrap_or_else(|| DEFAULT_LAMBDA_GRID.to_vec());
        let report = steptwo_pansu_slope(s2, &w, &z0, &t0, &grid).map_err(to_py_err)?;
        json_obj(py, &report)
    }

    /// Jacobian matrix M(ζ) of the filiform (p+1)-fold multiexponential
    /// with its exact determinant (as a float) and the reduced Vandermonde
    /// determinant.
    fn filiform_m(&self, py: Python<'_>, zeta: Vec<f64>) -> PyResult<Py<PyAny>> {
        let GroupDescriptor::Filiform(f) = &self.inner else {
            return Err(PyValueError::new_err("filiform_m needs a filiform descriptor"));
        };
        let m = filiform_m(f.p(), &[f64_to_rat(zeta[0]), f64_to_rat(zeta[1])])
            .map_err(to_py_err)?;
        let payload = serde_json::json!({
            "matrix": m.matrix.iter().map(|row| floats(row)).collect::<Vec<_>>(),
            "det": rat_to_f64(&m.det),
            "det_is_zero": num_traits::Zero::is_zero(&m.det),
            "reduced": m.reduced.iter().map(|row| floats(row)).collect::<Vec<_>>(),
            "reduced_det": rat_to_f64(&m.reduced_det),
        });
        json_obj(py, &payload)
    }

    #[pyo3(signature = (samples=20, seed=0))]
    fn norm_distance_equivalence(
        &self,
        py: Python<'_>,
        samples: usize,
        seed: u64,
    ) -> PyResult<Py<PyAny>> {
        let report = norm_distance_equivalence(&self.inner, samples, seed).map_err(to_py_err)?;
        json_obj(py, &report)
    }
}

/// Implicit candidate set; built from a named tag or an expression.
#[pyclass(name = "Set")]
struct PySet {
    inner: ImplicitSet,
}

#[pymethods]
impl PySet {
    #[new]
    #[pyo3(signature = (tag, group=None, closed=false))]
    fn new(tag: &str, group: Option<&CarnotGroup>, closed: bool) -> PyResult<Self> {
        if let Ok(inner) = ImplicitSet::from_tag(tag) {
            return Ok(PySet { inner });
        }
        let g = group.ok_or_else(|| PyValueError::new_err("expression sets need group="))?;
        let inner = ImplicitSet::from_expr(&g.inner, tag, closed).map_err(to_py_err)?;
        Ok(PySet { inner })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    /// "interior" | "exterior" | "boundary" (float mode with kink band).
    fn membership(&self, x: Vec<f64>) -> String {
        format!("{:?}", self.inner.membership_f64(&x)).to_lowercase()
    }

    /// Exact sign on dyadic-rational coordinates.
    fn membership_exact(&self, x: Vec<f64>) -> PyResult<String> {
        let m = self.inner.membership_exact(&rats(&x)).map_err(to_py_err)?;
        Ok(format!("{m:?}").to_lowercase())
    }

    #[pyo3(signature = (samples=500, seed=0))]
    fn derivative_sign_check(&self, py: Python<'_>, samples: usize, seed: u64) -> PyResult<Py<PyAny>> {
        let report = derivative_sign_check(&self.inner, samples, seed).map_err(to_py_err)?;
        json_obj(py, &report)
    }

    #[pyo3(signature = (lines=1000, grid=17, seed=0))]
    fn hconvex_scan(&self, py: Python<'_>, lines: usize, grid: usize, seed: u64) -> PyResult<Py<PyAny>> {
        let report = hconvex_scan(&self.inner, lines, grid, seed).map_err(to_py_err)?;
        json_obj(py, &report)
    }

    #[pyo3(signature = (vertex, direction, eps, samples=8, seed=0, max_violations=2))]
    #[allow(clippy::too_many_arguments)]
    fn cone_probe(
        &self,
        py: Python<'_>,
        vertex: Vec<f64>,
        direction: Vec<f64>,
        eps: f64,
        samples: usize,
        seed: u64,
        max_violations: usize,
    ) -> PyResult<Py<PyAny>> {
        let opts = ConeProbeOptions { max_violations, ..Default::default() };
        let report = cone_probe(
            &self.inner,
            &rats(&vertex),
            &rats(&direction),
            &f64_to_rat(eps),
            &default_cone_s_grid(),
            samples,
            seed,
            &opts,
        )
        .map_err(to_py_err)?;
        json_obj(py, &report)
    }
}

/// Certified inner-cone failure witness for the filiform indicator set.
#[pyfunction]
#[pyo3(signature = (p, eps, s, segments=32, restarts=8, seed=0))]
fn witness(
    py: Python<'_>,
    p: usize,
    eps: f64,
    s: f64,
    segments: usize,
    restarts: usize,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let report = filiform_witness(p, &f64_to_rat(eps), &f64_to_rat(s), segments, restarts, seed)
        .map_err(to_py_err)?;
    json_obj(py, &report)
}

/// Membership sign table along the free32 axis curve.
#[pyfunction]
fn free32_axis(
    py: Python<'_>,
    xi: Vec<f64>,
    eps: f64,
    c: f64,
    s_grid: Vec<f64>,
) -> PyResult<Py<PyAny>> {
    let grid: Vec<Rat> = s_grid.iter().map(|&s| f64_to_rat(s)).collect();
    let report = free32_axis_check(
        &[f64_to_rat(xi[0]), f64_to_rat(xi[1])],
        &f64_to_rat(eps),
        &f64_to_rat(c),
        &grid,
    )
    .map_err(to_py_err)?;
    json_obj(py, &report)
}

#[pymodule]
fn carnot_kit(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<CarnotGroup>()?;
    m.add_class::<PySet>()?;
    m.add_function(wrap_pyfunction!(witness, m)?)?;
    m.add_function(wrap_pyfunction!(free32_axis, m)?)?;
    Ok(())
}
