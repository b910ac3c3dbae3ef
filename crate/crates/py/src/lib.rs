//! Python bindings: kernel construction, moments, e_k, certification,
//! sweeps and Wigner sampling.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use kernel_positivity::band::{build_band_matrix, moments_band, truncation_dim, DEFAULT_TRUNCATION_TOL};
use kernel_positivity::certify::{self, CertifyOptions, Engine, Verdict, Witness};
use kernel_positivity::config::KernelConfig;
use kernel_positivity::kernel;
use kernel_positivity::newton::{newton_ek, MomentVector};
use kernel_positivity::nystrom::{discretize, moments_nystrom, oracle_eigenvalues};
use kernel_positivity::spectrum::derive_spectrum;
use kernel_positivity::sweep::{run_sweep, SweepParam, SweepSpec};
use kernel_positivity::wigner::{wigner_forward, WignerGeometry};
use kernel_positivity::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter(_) | Error::Config(_) | Error::ConstantLinearFactor => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

#[pyclass(name = "GaussianParams", frozen, from_py_object)]
#[derive(Clone)]
struct PyGaussian {
    inner: kernel_positivity::GaussianParams,
}

#[pymethods]
impl PyGaussian {
    #[new]
    #[pyo3(signature = (a, c, b = 0.0, d = 0.0, e = 0.0))]
    fn new(a: f64, c: f64, b: f64, d: f64, e: f64) -> PyResult<Self> {
        Ok(Self { inner: kernel_positivity::GaussianParams::new(a, b, c, d, e).map_err(py_err)? })
    }

    /// (A, B, C, D, E)
    fn params(&self) -> (f64, f64, f64, f64, f64) {
        let g = &self.inner;
        (g.a(), g.b(), g.c(), g.d(), g.e())
    }

    /// (ε₀, ε, r, s)
    fn spectrum(&self) -> (f64, f64, f64, f64) {
        let s = derive_spectrum(&self.inner);
        (s.eps0, s.eps, s.r, s.s)
    }

    fn eigenvalues(&self, n: usize) -> Vec<f64> {
        derive_spectrum(&self.inner).eigenvalues(n)
    }

    fn __repr__(&self) -> String {
        let (a, b, c, d, e) = self.params();
        format!("GaussianParams(A={a}, B={b}, C={c}, D={d}, E={e})")
    }
}

#[pyclass(name = "PolyCoeffs", frozen, from_py_object)]
#[derive(Clone)]
struct PyPoly {
    inner: kernel_positivity::PolyCoeffs,
}

#[pymethods]
impl PyPoly {
    #[new]
    #[pyo3(signature = (alpha2 = 0.0, beta2 = 0.0, gamma2 = 0.0, alpha1 = 0.0, beta1 = 0.0, gamma0 = 1.0))]
    fn new(alpha2: f64, beta2: f64, gamma2: f64, alpha1: f64, beta1: f64, gamma0: f64) -> PyResult<Self> {
        let inner = kernel_positivity::PolyCoeffs { alpha2, beta2, gamma2, alpha1, beta1, gamma0 };
        inner.validate().map_err(py_err)?;
        Ok(Self { inner })
    }

    /// (α₂, β₂, γ₂, α₁, β₁, γ₀)
    fn coeffs(&self) -> [f64; 6] {
        self.inner.as_array()
    }

    fn __repr__(&self) -> String {
        let [a2, b2, g2, a1, b1, g0] = self.inner.as_array();
        format!("PolyCoeffs(alpha2={a2}, beta2={b2}, gamma2={g2}, alpha1={a1}, beta1={b1}, gamma0={g0})")
    }
}

#[pyclass(name = "Certificate", frozen)]
struct PyCertificate {
    inner: certify::Certificate,
}

#[pymethods]
impl PyCertificate {
    #[getter]
    fn is_positive(&self) -> bool {
        self.inner.verdict.is_positive()
    }

    /// "PositiveUpTo" or "NonPositive".
    #[getter]
    fn verdict(&self) -> &'static str {
        match self.inner.verdict {
            Verdict::PositiveUpTo { .. } => "PositiveUpTo",
            Verdict::NonPositive(_) => "NonPositive",
        }
    }

    #[getter]
    fn witness(&self) -> Option<&'static str> {
        self.inner.verdict.witness().map(|w| w.kind())
    }

    /// Order k of a NegativeEk witness.
    #[getter]
    fn witness_k(&self) -> Option<usize> {
        match self.inner.verdict {
            Verdict::NonPositive(Witness::NegativeEk { k, .. }) => Some(k),
            _ => None,
        }
    }

    #[getter]
    fn depth(&self) -> Option<usize> {
        match self.inner.verdict {
            Verdict::PositiveUpTo { depth, .. } => Some(depth),
            _ => None,
        }
    }

    #[getter]
    fn verified(&self) -> bool {
        self.inner.verified
    }

    #[getter]
    fn oracle_min_eigenvalue(&self) -> Option<f64> {
        self.inner.provenance.oracle_min_eigenvalue
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }
}

#[pyclass(name = "Kernel", frozen)]
struct PyKernel {
    inner: kernel_positivity::KernelSpec,
}

fn parse_engine(engine: &str) -> PyResult<Engine> {
    engine.parse().map_err(py_err)
}

impl PyKernel {
    fn moments(&self, k: usize, engine: Engine) -> PyResult<MomentVector> {
        match (self.inner.gauss_poly_parts(), engine) {
            (Some((g, p, normalize)), e) if e != Engine::Nystrom => {
                let dim = truncation_dim(derive_spectrum(&g).eps, DEFAULT_TRUNCATION_TOL);
                Ok(moments_band(&build_band_matrix(&g, &p, dim, normalize).map_err(py_err)?, k))
            }
            _ => {
                let op = discretize(&self.inner, None, None).map_err(py_err)?;
                Ok(moments_nystrom(&op, k).map_err(py_err)?.moments)
            }
        }
    }
}

#[pymethods]
impl PyKernel {
    #[new]
    #[pyo3(signature = (gauss, poly = None, normalize = true, hbar = 1.0))]
    fn new(gauss: PyGaussian, poly: Option<PyPoly>, normalize: bool, hbar: f64) -> PyResult<Self> {
        let p = poly.map_or(kernel_positivity::PolyCoeffs::constant(1.0), |p| p.inner);
        let spec = kernel_positivity::KernelSpec::gauss_poly(gauss.inner, p, normalize).and_then(|s| s.with_hbar(hbar)).map_err(py_err)?;
        Ok(Self { inner: spec })
    }

    /// Loads a TOML kernel config.
    #[staticmethod]
    fn from_config(path: &str) -> PyResult<Self> {
        let spec = KernelConfig::load(path).and_then(|c| c.kernel_spec()).map_err(py_err)?;
        Ok(Self { inner: spec })
    }

    fn eval(&self, x: f64, y: f64) -> PyResult<Complex64> {
        kernel::eval_kernel(&self.inner, x, y).map_err(py_err)
    }

    fn trace(&self) -> PyResult<f64> {
        Ok(kernel::trace(&self.inner).map_err(py_err)?.value)
    }

    /// (M_1..M_k, errors)
    #[pyo3(signature = (k, engine = "band"))]
    fn moments_with_errors(&self, k: usize, engine: &str) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let m = self.moments(k, parse_engine(engine)?)?;
        Ok((m.values_f64(), m.errors().to_vec()))
    }

    /// (e_1..e_k, errors)
    #[pyo3(signature = (k, engine = "band"))]
    fn ek(&self, k: usize, engine: &str) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let e = newton_ek(&self.moments(k, parse_engine(engine)?)?);
        Ok((e.values_f64(), e.errors().to_vec()))
    }

    /// Nyström eigenvalues, descending.
    #[pyo3(signature = (grid_size = None))]
    fn eigenvalues(&self, grid_size: Option<usize>) -> PyResult<Vec<f64>> {
        oracle_eigenvalues(&discretize(&self.inner, grid_size, None).map_err(py_err)?).map_err(py_err)
    }

    #[pyo3(signature = (depth = 20, engine = "auto", tol = 0.0, oracle = true, grid_size = None))]
    fn certify(&self, py: Python<'_>, depth: usize, engine: &str, tol: f64, oracle: bool, grid_size: Option<usize>) -> PyResult<PyCertificate> {
        let opts = CertifyOptions { depth, engine: parse_engine(engine)?, tol, grid_size, oracle, ..Default::default() };
        let cert = py.detach(|| certify::certify(&self.inner, &opts)).map_err(py_err)?;
        Ok(PyCertificate { inner: cert })
    }

    /// Z = σ_RS/ħ² − 1/4.
    fn rs_z(&self) -> PyResult<f64> {
        Ok(certify::rs_uncertainty(&self.inner).map_err(py_err)?.z)
    }

    /// (xs, ps, W) with W[i][j] = W(x_i, p_j).
    fn wigner(&self, nx: usize, np: usize, window: f64) -> PyResult<(Vec<f64>, Vec<f64>, Vec<Vec<f64>>)> {
        let w = wigner_forward(&self.inner, &WignerGeometry::new(nx, np, window)).map_err(py_err)?;
        let xs = (0..w.nx).map(|i| w.x(i)).collect();
        let ps = (0..w.np).map(|j| w.p(j)).collect();
        let vals = (0..w.nx).map(|i| (0..w.np).map(|j| w.get(i, j)).collect()).collect();
        Ok((xs, ps, vals))
    }
}

/// Sweeps one parameter; returns (csv_text, summary_text).
#[pyfunction]
#[pyo3(signature = (gauss, poly, param, lo, hi, count, depth = 20, normalize = true))]
#[allow(clippy::too_many_arguments)]
fn sweep(py: Python<'_>, gauss: PyGaussian, poly: PyPoly, param: &str, lo: f64, hi: f64, count: usize, depth: usize, normalize: bool) -> PyResult<(String, String)> {
    let param: SweepParam = param.parse().map_err(py_err)?;
    let s = SweepSpec::new(gauss.inner, poly.inner, normalize, param, lo, hi, count, depth);
    let r = py.detach(|| run_sweep(&s)).map_err(py_err)?;
    let mut csv = Vec::new();
    r.write_csv(&mut csv).map_err(py_err)?;
    Ok((String::from_utf8(csv).expect("csv is ascii"), r.summary()))
}

#[pymodule]
fn kernpos(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGaussian>()?;
    m.add_class::<PyPoly>()?;
    m.add_class::<PyKernel>()?;
    m.add_class::<PyCertificate>()?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    Ok(())
}
