//! Constant-coefficient kernel analysis: spherical averages and moments of
//! the homogeneous kernel limits, conormal ratios, the critical exponent
//! `α₀`, the transmission constant `M₀`, truncated moments, and the
//! compatibility predicate.
//!
//! All sphere integrals are written in the projective chart `y' ↦ (y', 1)`,
//! `y' ∈ R^{n-1}`; sphere data is supplied as callables on that chart.
//! Dimensions are capped at `n ≤ 3` (tensor quadrature of the chart).

use std::sync::Arc;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::quad::{adaptive_on_cells, power_endpoint_cell, QuadError, QuadratureConfig};
use crate::specfun::{a_ns, beta_tail, q_value_continued};

#[derive(Debug, Error)]
pub enum CoeffsError {
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error("no sign change of the exponent equation on ({lo}, {hi}): F(lo) = {flo:.3e}, F(hi) = {fhi:.3e}")]
    NoRoot { lo: f64, hi: f64, flo: f64, fhi: f64 },
    #[error("matrix is not symmetric positive-definite: {0}")]
    NotPositiveDefinite(String),
    #[error("dimension n = {0} unsupported (sphere quadrature capped at n <= 3)")]
    DimensionCap(usize),
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
}

/// Callable on the projective chart: given `y' ∈ R^{n-1}`, returns the
/// homogeneous kernel limit evaluated at the ray through `(y', 1)`.
pub type SphereFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Callable on point pairs `(x, z)` used by the decomposed kernel mode.
pub type PointPairFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;

/// Regularity class tags for nonlocal kernels.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KernelClasses {
    /// once differentiable with |Da| <= C/|y|
    pub l1: bool,
    /// twice differentiable with |D^2 a| <= C/|y|^2
    pub l2: bool,
    /// radial modulus toward a sphere limit
    pub l1_star: bool,
    /// antisymmetric part vanishing like |z|^α
    pub a_alpha: Option<f64>,
}

/// A nonlocal weight in one of three modes: a constant pair `(a₁, a₂)`, the
/// homogeneous limits `a⁰_{s,i}` as chart functions, or a full decomposition
/// into symmetric and antisymmetric parts `a_{s,i}(x,z)`, `a_{a,i}(x,z)`.
#[derive(Clone)]
pub enum KernelMode {
    ConstantPair {
        a1: f64,
        a2: f64,
    },
    HomogeneousLimit {
        a1: Arc<SphereFn>,
        a2: Arc<SphereFn>,
    },
    Decomposed {
        sym1: Arc<PointPairFn>,
        anti1: Arc<PointPairFn>,
        sym2: Arc<PointPairFn>,
        anti2: Arc<PointPairFn>,
    },
}

#[derive(Clone)]
pub struct KernelSpec {
    pub mode: KernelMode,
    pub lambda: f64,
    pub lambda_upper: f64,
    pub classes: KernelClasses,
    pub radial_modulus: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
}

impl std::fmt::Debug for KernelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mode = match &self.mode {
            KernelMode::ConstantPair { a1, a2 } => format!("ConstantPair({a1}, {a2})"),
            KernelMode::HomogeneousLimit { .. } => "HomogeneousLimit".into(),
            KernelMode::Decomposed { .. } => "Decomposed".into(),
        };
        f.debug_struct("KernelSpec")
            .field("mode", &mode)
            .field("lambda", &self.lambda)
            .field("lambda_upper", &self.lambda_upper)
            .finish()
    }
}

impl KernelSpec {
    pub fn constant_pair(a1: f64, a2: f64) -> Result<Self, CoeffsError> {
        let lambda = a1.min(a2);
        let upper = a1.max(a2);
        if !(lambda > 0.0) {
            return Err(CoeffsError::InvalidKernel(format!(
                "constant pair ({a1}, {a2}) must be strictly positive"
            )));
        }
        Ok(Self {
            mode: KernelMode::ConstantPair { a1, a2 },
            lambda,
            lambda_upper: upper,
            classes: KernelClasses {
                l1: true,
                l2: true,
                l1_star: true,
                a_alpha: Some(1.0),
            },
            radial_modulus: None,
        })
    }

    pub fn homogeneous_limit(
        a1: Arc<SphereFn>,
        a2: Arc<SphereFn>,
        lambda: f64,
        lambda_upper: f64,
    ) -> Result<Self, CoeffsError> {
        if !(lambda > 0.0 && lambda <= lambda_upper) {
            return Err(CoeffsError::InvalidKernel(format!(
                "ellipticity bounds 0 < λ <= Λ violated: ({lambda}, {lambda_upper})"
            )));
        }
        Ok(Self {
            mode: KernelMode::HomogeneousLimit { a1, a2 },
            lambda,
            lambda_upper,
            classes: KernelClasses {
                l1_star: true,
                ..Default::default()
            },
            radial_modulus: None,
        })
    }

    /// Chart function for `a⁰_{s,1}`; constant modes come back as constant
    /// closures, decomposed kernels are sampled at a small radius from the
    /// origin.
    pub fn sphere_limit_1(&self) -> Arc<SphereFn> {
        match &self.mode {
            KernelMode::ConstantPair { a1, .. } => {
                let v = *a1;
                Arc::new(move |_| v)
            }
            KernelMode::HomogeneousLimit { a1, .. } => a1.clone(),
            KernelMode::Decomposed { sym1, .. } => chart_from_pair_fn(sym1.clone()),
        }
    }

    pub fn sphere_limit_2(&self) -> Arc<SphereFn> {
        match &self.mode {
            KernelMode::ConstantPair { a2, .. } => {
                let v = *a2;
                Arc::new(move |_| v)
            }
            KernelMode::HomogeneousLimit { a2, .. } => a2.clone(),
            KernelMode::Decomposed { sym2, .. } => chart_from_pair_fn(sym2.clone()),
        }
    }

    /// Pointwise region weight `a^i(x, y)` for assembly: `region = 1` for
    /// pairs with both points on the nonlocal side, `region = 2` for cross
    /// pairs.
    pub fn eval(&self, region: u8, x: &[f64], y: &[f64]) -> f64 {
        match &self.mode {
            KernelMode::ConstantPair { a1, a2 } => {
                if region == 1 {
                    *a1
                } else {
                    *a2
                }
            }
            KernelMode::HomogeneousLimit { a1, a2 } => {
                let f = if region == 1 { a1 } else { a2 };
                let dim = x.len();
                let mut z: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
                // Degree-zero homogeneity plus evenness reduce evaluation to
                // the chart with positive last component.
                if z[dim - 1] < 0.0 {
                    for v in z.iter_mut() {
                        *v = -*v;
                    }
                }
                let zn = z[dim - 1].max(1e-14 * norm(&z).max(1e-300));
                let yp: Vec<f64> = z[..dim - 1].iter().map(|v| v / zn).collect();
                f(&yp)
            }
            KernelMode::Decomposed {
                sym1,
                anti1,
                sym2,
                anti2,
            } => {
                let z: Vec<f64> = y.iter().zip(x).map(|(b, a)| b - a).collect();
                let (sym, anti) = if region == 1 { (sym1, anti1) } else { (sym2, anti2) };
                sym(x, &z) + anti(x, &z)
            }
        }
    }
}

fn chart_from_pair_fn(f: Arc<PointPairFn>) -> Arc<SphereFn> {
    Arc::new(move |yp: &[f64]| {
        let mut z = yp.to_vec();
        z.push(1.0);
        let nrm = norm(&z);
        let zr: Vec<f64> = z.iter().map(|v| 1e-7 * v / nrm).collect();
        let origin = vec![0.0; zr.len()];
        f(&origin, &zr)
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Chart integral `∫_R g(t) (1+t^2)^{-(2+2s)/2} dt` (the n = 2 case) via the
/// substitution `t = tan θ`, peeling the `cos^{2s}` branch point at `π/2`
/// off as an exact power moment. Contributions from `±t` are paired so odd
/// integrands cancel exactly in floating point. `pole_order` is the growth
/// order of `g` at infinity (0 for averages, 1 for moment weights ~ t),
/// which lowers the cap exponent accordingly.
fn chart_integral_1d<G>(
    g: G,
    s: f64,
    pole_order: i32,
    cfg: &QuadratureConfig,
) -> Result<f64, QuadError>
where
    G: Fn(f64) -> f64,
{
    use std::f64::consts::FRAC_PI_2;
    let eps = 0.3;
    let f = |theta: f64| {
        let t = theta.tan();
        (g(t) + g(-t)) * theta.cos().powf(2.0 * s)
    };
    let body = adaptive_on_cells(&f, &[0.0, 0.8, FRAC_PI_2 - eps], cfg)?;
    // Near π/2 write cos^{2s}θ = φ^{2s} (sinφ/φ)^{2s} with φ = π/2 - θ and
    // absorb the growth of g into the analytic factor.
    let h = |phi: f64| {
        let sinc = if phi == 0.0 { 1.0 } else { phi.sin() / phi };
        let t = 1.0 / phi.tan();
        (g(t) + g(-t)) * phi.powi(pole_order) * sinc.powf(2.0 * s)
    };
    let cap = power_endpoint_cell(&h, 2.0 * s - pole_order as f64, eps, 12);
    Ok(body + cap)
}

/// Chart integral over `R^2` (the n = 3 case), polar in `y'` with angular
/// nodes paired across `ψ ↦ ψ + π`.
fn chart_integral_2d<G>(
    g: G,
    s: f64,
    pole_order: i32,
    cfg: &QuadratureConfig,
) -> Result<f64, QuadError>
where
    G: Fn(f64, f64) -> f64,
{
    use std::f64::consts::{FRAC_PI_2, PI};
    let m = 48usize;
    let dpsi = PI / m as f64;
    let mut total = 0.0;
    for k in 0..m {
        let psi = (k as f64 + 0.5) * dpsi;
        let (c, sn) = (psi.cos(), psi.sin());
        let eps = 0.3;
        // radial substitution r = tan θ: r (1+r^2)^{-(3+2s)/2} dr = sinθ cos^{2s}θ dθ
        let f = |theta: f64| {
            let r = theta.tan();
            (g(r * c, r * sn) + g(-r * c, -r * sn)) * theta.sin() * theta.cos().powf(2.0 * s)
        };
        let body = adaptive_on_cells(&f, &[0.0, 0.8, FRAC_PI_2 - eps], cfg)?;
        let h = |phi: f64| {
            let r = 1.0 / phi.tan();
            let sinc = if phi == 0.0 { 1.0 } else { phi.sin() / phi };
            (g(r * c, r * sn) + g(-r * c, -r * sn))
                * phi.powi(pole_order)
                * phi.cos()
                * sinc.powf(2.0 * s)
        };
        let cap = power_endpoint_cell(&h, 2.0 * s - pole_order as f64, eps, 12);
        total += (body + cap) * dpsi;
    }
    Ok(total)
}

/// Spherical average `A_{s,i} = ∫ a⁰(y',1) (1+|y'|^2)^{-(n+2s)/2} dy'`.
/// For `n = 1` this is the chart value at the pole.
pub fn spherical_average(
    a0: &SphereFn,
    n: usize,
    s: f64,
    cfg: &QuadratureConfig,
) -> Result<f64, CoeffsError> {
    match n {
        0 => Err(CoeffsError::DimensionCap(0)),
        1 => Ok(a0(&[])),
        2 => Ok(chart_integral_1d(|t| a0(&[t]), s, 0, cfg)?),
        3 => Ok(chart_integral_2d(|u, v| a0(&[u, v]), s, 0, cfg)?),
        _ => Err(CoeffsError::DimensionCap(n)),
    }
}

/// Spherical moment `M_{s,i} = ∫ a⁰(y',1) y' (1+|y'|^2)^{-(n+2s)/2} dy'`,
/// a vector in `R^{n-1}`; empty for `n = 1`. Odd contributions cancel
/// pairwise, so even chart data yields exact zeros.
pub fn spherical_moment(
    a0: &SphereFn,
    n: usize,
    s: f64,
    cfg: &QuadratureConfig,
) -> Result<Vec<f64>, CoeffsError> {
    match n {
        0 => Err(CoeffsError::DimensionCap(0)),
        1 => Ok(vec![]),
        2 => Ok(vec![chart_integral_1d(|t| a0(&[t]) * t, s, 1, cfg)?]),
        3 => Ok(vec![
            chart_integral_2d(|u, v| a0(&[u, v]) * u, s, 1, cfg)?,
            chart_integral_2d(|u, v| a0(&[u, v]) * v, s, 1, cfg)?,
        ]),
        _ => Err(CoeffsError::DimensionCap(n)),
    }
}

/// Conormal ratio `ν₁ = (A e_n)' / ⟨e_n, A e_n⟩` of a symmetric
/// positive-definite matrix.
pub fn conormal_ratio(a: &DMatrix<f64>) -> Result<Vec<f64>, CoeffsError> {
    let n = a.nrows();
    if a.ncols() != n || n == 0 {
        return Err(CoeffsError::NotPositiveDefinite("not square".into()));
    }
    let sym_err = (a - a.transpose()).amax();
    if sym_err > 1e-12 * a.amax().max(1.0) {
        return Err(CoeffsError::NotPositiveDefinite(format!(
            "asymmetry {sym_err:.3e}"
        )));
    }
    if a.clone().cholesky().is_none() {
        return Err(CoeffsError::NotPositiveDefinite(
            "Cholesky factorization failed".into(),
        ));
    }
    let denom = a[(n - 1, n - 1)];
    Ok((0..n - 1).map(|i| a[(i, n - 1)] / denom).collect())
}

/// Which formula produced a `ν₂` value: the printed definition (numerator
/// drift term `+ν₁ A_{s,1}/(2s)`) or the unique value solving the limit
/// cancellation `I₁(∞)/(2s-1) + I₂(∞)/(2s) = 0` used to justify it
/// (numerator drift term `-ν₁ A_{s,2}/(2s)`). The two coincide exactly when
/// `ν₁ = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nu2Variant {
    Definition,
    Derivation,
}

/// Effective nonlocal conormal ratio `ν₂`. Returns the zero vector for
/// `s ≤ 1/2` or a vanishing denominator (degenerate flag set).
pub fn effective_conormal(
    a_s1: f64,
    a_s2: f64,
    m_s1: &[f64],
    m_s2: &[f64],
    nu1: &[f64],
    s: f64,
    variant: Nu2Variant,
) -> (Vec<f64>, bool) {
    let dim = nu1.len();
    if s <= 0.5 {
        return (vec![0.0; dim], false);
    }
    let denom = 2.0 * a_s1 - (2.0 * s - 1.0) / (2.0 * s) * a_s2;
    if denom.abs() < 1e-12 * (a_s1.abs() + a_s2.abs()) {
        return (vec![0.0; dim], true);
    }
    let drift_weight = match variant {
        Nu2Variant::Definition => a_s1,
        Nu2Variant::Derivation => -a_s2,
    };
    let v = (0..dim)
        .map(|i| (nu1[i] * drift_weight / (2.0 * s) + m_s2[i] - 2.0 * m_s1[i]) / denom)
        .collect();
    (v, false)
}

/// Residual of the cancellation identity `I₁(∞)/(2s-1) + I₂(∞)/(2s) = 0`
/// for a given `ν₂`, using the closed forms
/// `I₁(∞) = -2M_{s,1} + M_{s,2} - 2A_{s,1}ν₂ - A_{s,2}ν₁` and
/// `I₂(∞) = A_{s,2}(ν₁ + ν₂)`.
pub fn cancellation_residual(
    a_s1: f64,
    a_s2: f64,
    m_s1: &[f64],
    m_s2: &[f64],
    nu1: &[f64],
    nu2: &[f64],
    s: f64,
) -> Vec<f64> {
    let dim = nu1.len();
    (0..dim)
        .map(|i| {
            let i1 = -2.0 * m_s1[i] + m_s2[i] - 2.0 * a_s1 * nu2[i] - a_s2 * nu1[i];
            let i2 = a_s2 * (nu1[i] + nu2[i]);
            i1 / (2.0 * s - 1.0) + i2 / (2.0 * s)
        })
        .collect()
}

/// Solve the critical-exponent equation
/// `2 [q(s, α₀) - 1/(2s)] A_{s,1} + A_{s,2}/(2s) = 0` (for `s ≠ 1/2`;
/// `= -α₀ ⟨b, e_n⟩` for `s = 1/2`) by bisection on `((2s-1)_+, 2s)`.
pub fn solve_alpha0(
    a_s1: f64,
    a_s2: f64,
    s: f64,
    drift_normal: f64,
    tol: f64,
    cfg: &QuadratureConfig,
) -> Result<f64, CoeffsError> {
    let equation = |alpha: f64| -> Result<f64, CoeffsError> {
        let q = q_value_continued(s, alpha, cfg)?;
        let mut v = 2.0 * (q - 1.0 / (2.0 * s)) * a_s1 + a_s2 / (2.0 * s);
        if (s - 0.5).abs() < 1e-14 {
            v += alpha * drift_normal;
        }
        Ok(v)
    };
    bisect_exponent(equation, s, tol)
}

/// Root of the constant-pair equation `q(s, α₀) = (1 - ν/2)/(2s)`; the
/// general equation reduces to this when `A_{s,1} = A(n,s)` and
/// `A_{s,2} = ν A(n,s)`.
pub fn solve_alpha0_constant_pair(
    s: f64,
    nu: f64,
    tol: f64,
    cfg: &QuadratureConfig,
) -> Result<f64, CoeffsError> {
    let target = (1.0 - nu / 2.0) / (2.0 * s);
    let equation =
        |alpha: f64| -> Result<f64, CoeffsError> { Ok(q_value_continued(s, alpha, cfg)? - target) };
    bisect_exponent(equation, s, tol)
}

fn bisect_exponent<F>(equation: F, s: f64, tol: f64) -> Result<f64, CoeffsError>
where
    F: Fn(f64) -> Result<f64, CoeffsError>,
{
    let lo0 = (2.0 * s - 1.0).max(0.0);
    // Keep the endpoints clear of α = 2s, where the q integrand's endpoint
    // exponent hits the log-divergent value -1.
    let margin = tol.max(1e-9);
    let mut lo = lo0 + margin;
    let mut hi = 2.0 * s - margin;
    let mut flo = equation(lo)?;
    let fhi = equation(hi)?;
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo * fhi > 0.0 {
        return Err(CoeffsError::NoRoot { lo, hi, flo, fhi });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = equation(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm * flo < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fm;
        }
        if hi - lo < tol {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Transmission constant
/// `M₀ = -ν A(n,s) / ((2+α₀-2s)(1+α₀-2s)) · ∫_0^∞ t^{α₀} (1+t)^{-1-2s} dt`,
/// strictly negative for `ν > 0`.
pub fn transmission_constant_m0(
    alpha0: f64,
    nu: f64,
    n: usize,
    s: f64,
    cfg: &QuadratureConfig,
) -> Result<f64, CoeffsError> {
    if !(nu > 0.0) {
        return Err(CoeffsError::InvalidKernel(format!(
            "transmission constant requires ν > 0, got {nu}"
        )));
    }
    let lo = (2.0 * s - 1.0).max(0.0);
    if !(alpha0 > lo && alpha0 < 2.0 * s) {
        return Err(CoeffsError::InvalidKernel(format!(
            "alpha0 = {alpha0} outside (({:.3})_+, {:.3})",
            2.0 * s - 1.0,
            2.0 * s
        )));
    }
    let denom = (2.0 + alpha0 - 2.0 * s) * (1.0 + alpha0 - 2.0 * s);
    if denom.abs() < 1e-12 {
        return Err(CoeffsError::InvalidKernel(
            "resonant denominator 1 + α₀ - 2s = 0".into(),
        ));
    }
    Ok(-nu / denom * a_ns(n, s)? * beta_tail(alpha0, s, cfg)?)
}

/// Ball-truncated moments
/// `I₁(R) = ∫_{|y'|<R} [2a⁰₁(y',1)(-y'-ν₂) + a⁰₂(y',1)(y'-ν₁)] w dy'` and
/// `I₂(R) = ∫_{|y'|<R} a⁰₂(y',1)(ν₁+ν₂) w dy'` with
/// `w = (1+|y'|^2)^{-(n+2s)/2}`, converging to the closed-form limits at
/// rate `R^{-2s}`. Implemented for `n = 2`.
#[allow(clippy::too_many_arguments)]
pub fn truncated_moments(
    a0_1: &SphereFn,
    a0_2: &SphereFn,
    nu1: &[f64],
    nu2: &[f64],
    r_ball: f64,
    n: usize,
    s: f64,
    cfg: &QuadratureConfig,
) -> Result<(Vec<f64>, Vec<f64>), CoeffsError> {
    if r_ball <= 0.0 {
        return Err(CoeffsError::InvalidKernel(
            "truncation radius must be positive".into(),
        ));
    }
    if n != 2 {
        return Err(CoeffsError::DimensionCap(n));
    }
    let weight = |t: f64| (1.0 + t * t).powf(-(n as f64 + 2.0 * s) / 2.0);
    let f1 = |t: f64| (2.0 * a0_1(&[t]) * (-t - nu2[0]) + a0_2(&[t]) * (t - nu1[0])) * weight(t);
    let f2 = |t: f64| a0_2(&[t]) * (nu1[0] + nu2[0]) * weight(t);
    let breaks: Vec<f64> = if r_ball > 1.0 {
        vec![0.0, 1.0, r_ball]
    } else {
        vec![0.0, r_ball]
    };
    let v1 = adaptive_on_cells(&|t: f64| f1(t) + f1(-t), &breaks, cfg)?;
    let v2 = adaptive_on_cells(&|t: f64| f2(t) + f2(-t), &breaks, cfg)?;
    Ok((vec![v1], vec![v2]))
}

/// Compatibility predicate: every component of
/// `ν₂ A_{s,2}/(2s) - ν₁ A_{s,2}(2s-1)/(2s) + M_{s,2}` below `tol`.
pub fn is_compatible(a_s2: f64, m_s2: &[f64], nu1: &[f64], nu2: &[f64], s: f64, tol: f64) -> bool {
    nu1.iter().zip(nu2).zip(m_s2).all(|((&n1, &n2), &m2)| {
        (n2 * a_s2 / (2.0 * s) - (2.0 * s - 1.0) / (2.0 * s) * n1 * a_s2 + m2).abs() < tol
    })
}

/// Diagnostic flags attached to a kernel analysis report.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReportFlags {
    /// the ν₂ denominator vanished and ν₂ was set to zero
    pub degenerate_nu2_denominator: bool,
    /// α₀ within 1e-3 of 1, where the transmission relation is expected to
    /// need a secondary compatibility condition
    pub alpha0_near_one: bool,
}

/// The full set of constant-coefficient transmission quantities for one
/// kernel/matrix pair.
#[derive(Debug, Clone)]
pub struct TransmissionConstants {
    pub n: usize,
    pub s: f64,
    pub a_s1: f64,
    pub a_s2: f64,
    pub m_s1: Vec<f64>,
    pub m_s2: Vec<f64>,
    pub nu1: Vec<f64>,
    pub nu2: Vec<f64>,
    pub alpha0: f64,
    /// populated for constant-pair kernels, where the one-dimensional
    /// profile construction applies
    pub m0: Option<f64>,
    pub compatible: bool,
    pub flags: ReportFlags,
}

/// Compute every transmission quantity for a kernel and local matrix:
/// averages, moments, conormal ratios, `α₀` (with the `s = 1/2` drift
/// correction), `M₀` for constant pairs, and the compatibility predicate.
pub fn analyze_kernel(
    kernel: &KernelSpec,
    a_matrix: &DMatrix<f64>,
    n: usize,
    s: f64,
    drift_normal: f64,
    cfg: &QuadratureConfig,
) -> Result<TransmissionConstants, CoeffsError> {
    let chart1 = kernel.sphere_limit_1();
    let chart2 = kernel.sphere_limit_2();
    let a_s1 = spherical_average(&*chart1, n, s, cfg)?;
    let a_s2 = spherical_average(&*chart2, n, s, cfg)?;
    let floor = a_ns(n, s)? * kernel.lambda;
    if a_s1 < floor - 1e-9 || a_s2 < floor - 1e-9 {
        return Err(CoeffsError::InvalidKernel(format!(
            "spherical averages ({a_s1:.6}, {a_s2:.6}) below the ellipticity floor {floor:.6}"
        )));
    }
    let m_s1 = spherical_moment(&*chart1, n, s, cfg)?;
    let m_s2 = spherical_moment(&*chart2, n, s, cfg)?;
    let nu1 = conormal_ratio(a_matrix)?;
    let alpha0 = solve_alpha0(a_s1, a_s2, s, drift_normal, 1e-10, cfg)?;
    let (nu2, degenerate) =
        effective_conormal(a_s1, a_s2, &m_s1, &m_s2, &nu1, s, Nu2Variant::Definition);
    let m0 = match &kernel.mode {
        KernelMode::ConstantPair { a2, .. } => {
            Some(transmission_constant_m0(alpha0, *a2, n, s, cfg)?)
        }
        _ => None,
    };
    let compatible = is_compatible(a_s2, &m_s2, &nu1, &nu2, s, 1e-9);
    Ok(TransmissionConstants {
        n,
        s,
        a_s1,
        a_s2,
        m_s1,
        m_s2,
        nu1,
        nu2,
        alpha0,
        m0,
        compatible,
        flags: ReportFlags {
            degenerate_nu2_denominator: degenerate,
            alpha0_near_one: (alpha0 - 1.0).abs() < 1e-3,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    #[test]
    fn spherical_average_of_constants() {
        for (n, s) in [(1usize, 0.5), (2, 0.5), (2, 0.75), (3, 0.6)] {
            let one = spherical_average(&|_: &[f64]| 1.0, n, s, &cfg()).unwrap();
            let ans = a_ns(n, s).unwrap();
            assert!((one - ans).abs() < 1e-9 * ans, "n={n} s={s}: {one} vs {ans}");
            let nu = spherical_average(&|_: &[f64]| 3.5, n, s, &cfg()).unwrap();
            assert!((nu - 3.5 * ans).abs() < 1e-8 * ans, "n={n} s={s}");
        }
    }

    #[test]
    fn spherical_average_against_dense_grid() {
        // Brute-force trapezoid oracle on a wide uniform grid plus a tail
        // bound; the integrand decays like 2|t|^{-3} here (n=2, s=0.5).
        let a0 = |y: &[f64]| 1.0 + y[0] * y[0] / (1.0 + y[0] * y[0]);
        let (n, s) = (2usize, 0.5);
        let big = 4e3;
        let m = 1_000_000usize;
        let hstep = 2.0 * big / m as f64;
        let mut oracle = 0.0;
        for k in 0..=m {
            let t = -big + k as f64 * hstep;
            let w = if k == 0 || k == m { 0.5 } else { 1.0 };
            oracle += w * a0(&[t]) * (1.0 + t * t).powf(-1.5) * hstep;
        }
        oracle += 2.0 * 2.0 / (2.0 * big * big);
        let v = spherical_average(&a0, n, s, &cfg()).unwrap();
        assert!((v - oracle).abs() < 1e-6, "{v} vs {oracle}");
    }

    #[test]
    fn spherical_moment_even_is_exactly_zero() {
        let even = |y: &[f64]| 1.0 + y[0] * y[0] / (1.0 + y[0].abs());
        let m = spherical_moment(&even, 2, 0.75, &cfg()).unwrap();
        assert_eq!(m[0], 0.0);
        let m1 = spherical_moment(&|_: &[f64]| 1.0, 1, 0.5, &cfg()).unwrap();
        assert!(m1.is_empty());
        let even3 = |y: &[f64]| 1.0 + (y[0] * y[0] + y[1] * y[1]) / (1.0 + y[0] * y[0]);
        let m3 = spherical_moment(&even3, 3, 0.6, &cfg()).unwrap();
        assert_eq!(m3, vec![0.0, 0.0]);
    }

    #[test]
    fn spherical_moment_against_dense_grid() {
        let a0 = |y: &[f64]| 1.0 + 0.5 * y[0] / (1.0 + y[0].abs());
        let (s, big, m) = (0.75, 4e3, 1_000_000usize);
        let hstep = 2.0 * big / m as f64;
        let mut oracle = 0.0;
        for k in 0..=m {
            let t = -big + k as f64 * hstep;
            let w = if k == 0 || k == m { 0.5 } else { 1.0 };
            oracle += w * a0(&[t]) * t * (1.0 + t * t).powf(-(2.0 + 2.0 * 0.75) / 2.0) * hstep;
        }
        // Leading tail beyond the grid: ∫_big^∞ (a0(t) - a0(-t)) t^{-2.5} dt.
        oracle += (a0(&[big]) - a0(&[-big])) * big.powf(-1.5) / 1.5;
        let v = spherical_moment(&a0, 2, s, &cfg()).unwrap();
        assert!((v[0] - oracle).abs() < 1e-7, "{} vs {oracle}", v[0]);
    }

    #[test]
    fn conormal_ratio_cases() {
        let eye = DMatrix::<f64>::identity(3, 3);
        assert_eq!(conormal_ratio(&eye).unwrap(), vec![0.0, 0.0]);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]);
        let v = conormal_ratio(&a).unwrap();
        assert!((v[0] - 0.3).abs() < 1e-15);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 3.0, 4.0]));
        assert_eq!(conormal_ratio(&d).unwrap(), vec![0.0, 0.0]);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(conormal_ratio(&bad).is_err());
    }

    #[test]
    fn effective_conormal_degenerate_cases() {
        let (v, deg) =
            effective_conormal(2.0, 2.0, &[0.0], &[0.0], &[0.0], 0.75, Nu2Variant::Definition);
        assert_eq!(v, vec![0.0]);
        assert!(!deg);
        // s <= 1/2 forces zero regardless of inputs.
        let (v, _) = effective_conormal(2.0, 1.0, &[0.3], &[0.4], &[0.2], 0.4, Nu2Variant::Definition);
        assert_eq!(v, vec![0.0]);
    }

    #[test]
    fn effective_conormal_direct_formula() {
        let (s, a1, a2) = (0.75, 2.0, 1.0);
        let (m1, m2, nu1) = (vec![0.1], vec![0.05], vec![0.3]);
        let (v, _) = effective_conormal(a1, a2, &m1, &m2, &nu1, s, Nu2Variant::Definition);
        let denom = 2.0 * a1 - (2.0 * s - 1.0) / (2.0 * s) * a2;
        let expect = (0.3 * a1 / 1.5 + 0.05 - 0.2) / denom;
        assert!((v[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn alpha0_special_value_nu6() {
        // Constant pair with ν = 6 at s = 3/4: (1 - ν/2)/(2s) = -4/3 equals
        // q(3/4, 1), so the root is exactly 1.
        let root = solve_alpha0_constant_pair(0.75, 6.0, 1e-10, &cfg()).unwrap();
        assert!((root - 1.0).abs() < 1e-8, "{root}");
        // The general form with A_{s,i} = A(n,s)(1, ν) gives the same root.
        let a = a_ns(2, 0.75).unwrap();
        let root2 = solve_alpha0(a, 6.0 * a, 0.75, 0.0, 1e-10, &cfg()).unwrap();
        assert!((root - root2).abs() < 1e-9, "{root} vs {root2}");
    }

    #[test]
    fn alpha0_monotone_in_nu_and_small_nu_limit() {
        let s = 0.75;
        let mut prev = 0.0;
        for nu in [0.5, 1.0, 2.0, 4.0] {
            let r = solve_alpha0_constant_pair(s, nu, 1e-10, &cfg()).unwrap();
            assert!(r > prev, "not increasing at nu={nu}");
            prev = r;
        }
        // ν → 0⁺ approaches (2s-1)_+ from above, monotonically.
        let mut prev_gap = f64::INFINITY;
        for nu in [1e-2, 1e-3, 1e-4] {
            let r = solve_alpha0_constant_pair(s, nu, 1e-12, &cfg()).unwrap();
            let gap = r - 0.5;
            assert!(gap > 0.0 && gap < prev_gap, "nu={nu}: gap={gap}");
            prev_gap = gap;
        }
    }

    #[test]
    fn alpha0_no_root_is_reported() {
        // Negative A_{s,2} keeps the equation negative on the whole bracket.
        let err = solve_alpha0(1.0, -1.0, 0.75, 0.0, 1e-10, &cfg());
        assert!(matches!(err, Err(CoeffsError::NoRoot { .. })));
    }

    #[test]
    fn drift_shifts_alpha0_per_equation_sign() {
        // At s = 1/2 the equation reads 2[q-1]A₁ + A₂ = -α₀ b_n; the left
        // side is decreasing in α, so a positive normal drift moves the
        // crossing up and a negative one moves it down.
        let (a1, a2) = (1.0, 1.0);
        let base = solve_alpha0(a1, a2, 0.5, 0.0, 1e-10, &cfg()).unwrap();
        let up = solve_alpha0(a1, a2, 0.5, 0.8, 1e-10, &cfg()).unwrap();
        let down = solve_alpha0(a1, a2, 0.5, -0.8, 1e-10, &cfg()).unwrap();
        assert!(up > base + 1e-6, "up={up} base={base}");
        assert!(down < base - 1e-6, "down={down} base={base}");
    }

    #[test]
    fn m0_is_negative_and_vanishes_with_nu() {
        let s = 0.75;
        for nu in [0.5, 1.0, 2.0, 6.0] {
            let alpha0 = solve_alpha0_constant_pair(s, nu, 1e-10, &cfg()).unwrap();
            let m0 = transmission_constant_m0(alpha0, nu, 1, s, &cfg()).unwrap();
            assert!(m0 < 0.0, "nu={nu}: {m0}");
        }
        // At fixed α₀ the formula is linear in ν.
        let m_small = transmission_constant_m0(0.8, 1e-6, 1, s, &cfg()).unwrap();
        let m_one = transmission_constant_m0(0.8, 1.0, 1, s, &cfg()).unwrap();
        assert!(m_small.abs() < 1e-5, "{m_small}");
        assert!((m_small - 1e-6 * m_one).abs() < 1e-18);
    }

    #[test]
    fn m0_composition_regression() {
        // n = 1, s = 1/2, ν = 1: compose the verified pieces directly.
        let s = 0.5;
        let alpha0 = solve_alpha0_constant_pair(s, 1.0, 1e-12, &cfg()).unwrap();
        let m0 = transmission_constant_m0(alpha0, 1.0, 1, s, &cfg()).unwrap();
        let expect =
            -1.0 / ((2.0 + alpha0 - 1.0) * alpha0) * beta_tail(alpha0, s, &cfg()).unwrap();
        assert!((m0 - expect).abs() < 1e-12);
        assert!(m0 < 0.0);
    }

    #[test]
    fn truncated_moments_isotropic_vanish() {
        let one = |_: &[f64]| 1.0;
        let (i1, i2) =
            truncated_moments(&one, &one, &[0.0], &[0.0], 8.0, 2, 0.75, &cfg()).unwrap();
        assert_eq!(i1[0], 0.0);
        assert_eq!(i2[0], 0.0);
    }

    #[test]
    fn truncated_moments_rate_and_limits() {
        let a0_1 = |y: &[f64]| 1.0 + 0.25 * y[0] / (1.0 + y[0].abs());
        let a0_2 =
            |y: &[f64]| 0.8 + 0.3 / (1.0 + y[0] * y[0]) + 0.2 * y[0] / (1.0 + y[0] * y[0]);
        let (n, s) = (2usize, 0.75);
        let c = cfg();
        let a1 = spherical_average(&a0_1, n, s, &c).unwrap();
        let a2 = spherical_average(&a0_2, n, s, &c).unwrap();
        let m1 = spherical_moment(&a0_1, n, s, &c).unwrap();
        let m2 = spherical_moment(&a0_2, n, s, &c).unwrap();
        let nu1 = vec![0.3];
        let (nu2, _) = effective_conormal(a1, a2, &m1, &m2, &nu1, s, Nu2Variant::Definition);
        let i1_inf = -2.0 * m1[0] + m2[0] - 2.0 * a1 * nu2[0] - a2 * nu1[0];
        let i2_inf = a2 * (nu1[0] + nu2[0]);
        let mut prev1 = f64::INFINITY;
        let mut prev2 = f64::INFINITY;
        for r in [4.0, 8.0, 16.0, 32.0] {
            let (i1, i2) = truncated_moments(&a0_1, &a0_2, &nu1, &nu2, r, n, s, &c).unwrap();
            let e1 = (i1[0] - i1_inf).abs();
            let e2 = (i2[0] - i2_inf).abs();
            assert!(e1 < prev1 && e2 < prev2, "r={r}: {e1} {e2}");
            assert!(e1 < 10.0 * r.powf(-2.0 * s), "r={r}: {e1}");
            prev1 = e1;
            prev2 = e2;
        }
    }

    #[test]
    fn compatibility_predicate() {
        assert!(is_compatible(2.0, &[0.0], &[0.0], &[0.0], 0.75, 1e-12));
        assert!(!is_compatible(2.0, &[0.1], &[0.0], &[0.0], 0.75, 1e-3));
        // Solve the relation for ν₂ exactly and confirm.
        let (s, a2, m2, nu1) = (0.75, 1.3, 0.07, 0.2);
        let nu2 = (2.0 * s - 1.0) * nu1 - 2.0 * s * m2 / a2;
        assert!(is_compatible(a2, &[m2], &[nu1], &[nu2], s, 1e-12));
    }

    #[test]
    fn nu2_cancellation_identifies_derivation_variant() {
        // On an anisotropic instance with A_{s,1} ≠ A_{s,2}, only the variant
        // with numerator ν₁ A_{s,2}/(2s) satisfies the limit cancellation.
        let a0_1 = |y: &[f64]| 1.0 + 0.25 * y[0] / (1.0 + y[0].abs());
        let a0_2 =
            |y: &[f64]| 0.8 + 0.3 / (1.0 + y[0] * y[0]) + 0.2 * y[0] / (1.0 + y[0] * y[0]);
        let (n, s) = (2usize, 0.75);
        let c = cfg();
        let a1 = spherical_average(&a0_1, n, s, &c).unwrap();
        let a2 = spherical_average(&a0_2, n, s, &c).unwrap();
        let m1 = spherical_moment(&a0_1, n, s, &c).unwrap();
        let m2 = spherical_moment(&a0_2, n, s, &c).unwrap();
        let nu1 = vec![0.3];
        let (def, _) = effective_conormal(a1, a2, &m1, &m2, &nu1, s, Nu2Variant::Definition);
        let (der, _) = effective_conormal(a1, a2, &m1, &m2, &nu1, s, Nu2Variant::Derivation);
        let r_def = cancellation_residual(a1, a2, &m1, &m2, &nu1, &def, s);
        let r_der = cancellation_residual(a1, a2, &m1, &m2, &nu1, &der, s);
        assert!(r_der[0].abs() < 1e-12, "derivation residual {}", r_der[0]);
        assert!(r_def[0].abs() > 1e-3, "definition residual {}", r_def[0]);
    }

    #[test]
    fn analyze_kernel_constant_pair_end_to_end() {
        let k = KernelSpec::constant_pair(1.0, 2.0).unwrap();
        let a = DMatrix::<f64>::identity(2, 2);
        let tc = analyze_kernel(&k, &a, 2, 0.75, 0.0, &cfg()).unwrap();
        assert!(tc.a_s1 > 0.0 && (tc.a_s2 - 2.0 * tc.a_s1).abs() < 1e-9);
        assert_eq!(tc.nu1, vec![0.0]);
        assert_eq!(tc.nu2, vec![0.0]);
        assert!(tc.compatible);
        assert!(tc.m0.unwrap() < 0.0);
        let simple = solve_alpha0_constant_pair(0.75, 2.0, 1e-10, &cfg()).unwrap();
        assert!((tc.alpha0 - simple).abs() < 1e-8);
    }
}
