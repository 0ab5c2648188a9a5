//! Pointwise evaluation of the nonlocal operators in their dimension-reduced
//! form.
//!
//! For data depending only on the normal coordinate, every n-dimensional
//! kernel integral collapses onto the line: integrating the kernel
//! `|x - y|^{-(n+2s)}` over the tangential variables leaves the 1D kernel
//! `|x_n - y_n|^{-(1+2s)}` times the transverse mass `A(n, s)` (or the
//! spherical averages `A_{s,i}` for anisotropic kernels). This module
//! provides the reduced operators for explicit fields and for tabulated grid
//! functions with far-field closures:
//!
//! * the principal-value action on all of `R`,
//! * one-sided region integrals over `{y < 0}` / `{y > 0}`,
//! * the interface equations assembled from them: the nonlocal-side operator
//!   `2∫ a_{s,1}(u(x)-u(y))K - ∫_{Ω₁}(2a_{s,1}-a_{s,2})(u(x)-u(y))K`
//!   and the local-side nonlocal source `ν ∫_{Ω₂}(u(x)-u(y))K`.

use thiserror::Error;

use crate::coeffs::{spherical_average, CoeffsError, KernelSpec};
use crate::quad::{adaptive_on_cells, fixed_gauss, graded_breaks, QuadError, QuadratureConfig};
use crate::specfun::{a_ns, rho_alpha};

#[derive(Debug, Error)]
pub enum FracOpsError {
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Coeffs(#[from] CoeffsError),
    #[error("evaluation point x = {0} lies on the interface or the wrong side")]
    OnInterface(f64),
    #[error("far-field growth exponent {exponent} is not below 2s = {two_s}; tail integral diverges")]
    DivergentTail { exponent: f64, two_s: f64 },
    #[error("invalid grid function: {0}")]
    InvalidGrid(String),
}

/// Far-field closure of a line field beyond its sampled window: `u(y)` is
/// modeled as the stated form for `y` beyond the window edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tail {
    Zero,
    Constant(f64),
    /// `u(y) ≈ coeff · |y|^exponent`, with `exponent < 2s` required
    Power { coeff: f64, exponent: f64 },
}

impl Tail {
    fn eval(&self, y: f64) -> f64 {
        match *self {
            Tail::Zero => 0.0,
            Tail::Constant(c) => c,
            Tail::Power { coeff, exponent } => coeff * y.abs().powf(exponent),
        }
    }

    fn growth(&self) -> f64 {
        match *self {
            Tail::Zero => f64::NEG_INFINITY,
            Tail::Constant(_) => 0.0,
            Tail::Power { exponent, .. } => exponent,
        }
    }
}

/// A line field assembled from closures: pointwise values, optional analytic
/// second derivative (for the principal-value correction), the points where
/// the field is merely piecewise smooth (plain cell boundaries), the points
/// with genuine power-type singular behavior (graded boundaries), the
/// sampled window, and far-field closures.
pub struct LineField<'a> {
    pub eval: &'a dyn Fn(f64) -> f64,
    pub second_derivative: Option<&'a dyn Fn(f64) -> f64>,
    pub kinks: &'a [f64],
    pub singular: &'a [f64],
    pub window: (f64, f64),
    pub left_tail: Tail,
    pub right_tail: Tail,
}

impl LineField<'_> {
    fn value(&self, y: f64) -> f64 {
        let (lo, hi) = self.window;
        if y < lo {
            self.left_tail.eval(y)
        } else if y > hi {
            self.right_tail.eval(y)
        } else {
            (self.eval)(y)
        }
    }
}

/// Piecewise-linear grid function on strictly increasing nodes with
/// far-field closures; the discrete field the reduced operators act on.
#[derive(Debug, Clone)]
pub struct GridFunction1D {
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
    pub left_tail: Tail,
    pub right_tail: Tail,
}

impl GridFunction1D {
    pub fn new(
        nodes: Vec<f64>,
        values: Vec<f64>,
        left_tail: Tail,
        right_tail: Tail,
    ) -> Result<Self, FracOpsError> {
        if nodes.len() < 3 {
            return Err(FracOpsError::InvalidGrid("need at least 3 nodes".into()));
        }
        if nodes.len() != values.len() {
            return Err(FracOpsError::InvalidGrid(
                "node and value counts differ".into(),
            ));
        }
        if !nodes.windows(2).all(|w| w[1] > w[0]) {
            return Err(FracOpsError::InvalidGrid(
                "nodes must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            nodes,
            values,
            left_tail,
            right_tail,
        })
    }

    /// Tabulate a closure on the given nodes.
    pub fn sample<F: Fn(f64) -> f64>(
        nodes: Vec<f64>,
        f: F,
        left_tail: Tail,
        right_tail: Tail,
    ) -> Result<Self, FracOpsError> {
        let values = nodes.iter().map(|&x| f(x)).collect();
        Self::new(nodes, values, left_tail, right_tail)
    }

    pub fn eval(&self, y: f64) -> f64 {
        let n = self.nodes.len();
        if y < self.nodes[0] {
            return self.left_tail.eval(y);
        }
        if y > self.nodes[n - 1] {
            return self.right_tail.eval(y);
        }
        let idx = match self.nodes.binary_search_by(|v| v.partial_cmp(&y).unwrap()) {
            Ok(i) => return self.values[i],
            Err(i) => i,
        };
        let (x0, x1) = (self.nodes[idx - 1], self.nodes[idx]);
        let t = (y - x0) / (x1 - x0);
        self.values[idx - 1] * (1.0 - t) + self.values[idx] * t
    }

    fn window(&self) -> (f64, f64) {
        (self.nodes[0], *self.nodes.last().unwrap())
    }

    fn as_line_field<'a>(&'a self, eval: &'a dyn Fn(f64) -> f64) -> LineField<'a> {
        LineField {
            eval,
            second_derivative: None,
            kinks: &self.nodes,
            singular: &[],
            window: self.window(),
            left_tail: self.left_tail,
            right_tail: self.right_tail,
        }
    }
}

fn check_tails(field: &LineField<'_>, s: f64) -> Result<(), FracOpsError> {
    for tail in [&field.left_tail, &field.right_tail] {
        if tail.growth() >= 2.0 * s {
            return Err(FracOpsError::DivergentTail {
                exponent: tail.growth(),
                two_s: 2.0 * s,
            });
        }
    }
    Ok(())
}

/// Cells of `(lo, hi)`: `plain` points become ordinary cell boundaries
/// (piecewise-smoothness joints), `graded` points additionally receive
/// geometric grading toward them (power singularities and excision edges).
fn build_cells(
    lo: f64,
    hi: f64,
    plain: &[f64],
    graded: &[f64],
    cfg: &QuadratureConfig,
) -> Vec<f64> {
    let sep = 1e-13 * (lo.abs().max(hi.abs()) + 1.0);
    let mut pts: Vec<f64> = vec![lo, hi];
    for &p in plain.iter().chain(graded) {
        if p > lo + sep && p < hi - sep {
            pts.push(p);
        }
    }
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| (*a - *b).abs() < sep);
    let is_graded = |x: f64| {
        graded.iter().any(|&p| (x - p).abs() <= sep)
            || (x == lo && graded.iter().any(|&p| p <= lo + sep))
            || (x == hi && graded.iter().any(|&p| p >= hi - sep))
    };
    let levels = 30usize.min(cfg.max_subdivisions);
    let mut out: Vec<f64> = Vec::new();
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if out.is_empty() {
            out.push(a);
        }
        let seg: Vec<f64> = match (is_graded(a), is_graded(b)) {
            (true, true) => crate::quad::graded_breaks_both(a, b, cfg.grading_strength, levels),
            (true, false) => graded_breaks(a, b, true, cfg.grading_strength, levels),
            (false, true) => graded_breaks(a, b, false, cfg.grading_strength, levels),
            (false, false) => vec![a, b],
        };
        out.extend_from_slice(&seg[1..]);
    }
    out
}

/// `PV ∫_R (u(x) - u(y)) |x - y|^{-1-2s} dy` for `x` strictly off the
/// interface, with symmetric excision around `x`, an analytic second-order
/// Taylor correction on the excised interval, kink-aware graded cells, and
/// closed-form or shell-quadrature tails.
pub fn pv_full_line(
    field: &LineField<'_>,
    s: f64,
    x: f64,
    cfg: &QuadratureConfig,
) -> Result<f64, FracOpsError> {
    check_tails(field, s)?;
    let (wlo, whi) = field.window;
    let big = whi.max(-wlo).max(1.0).max(2.0 * x.abs()) * 2.0;
    let ux = field.value(x);
    let scale = x.abs().max(1e-3).min(1.0);
    let h = 1e-5 * scale;
    let g = |y: f64| (ux - field.value(y)) / (x - y).abs().powf(1.0 + 2.0 * s);

    let mut total = 0.0;
    let mut graded = field.singular.to_vec();
    graded.push(x - h);
    graded.push(x + h);
    let cells = build_cells(-big, x - h, field.kinks, &graded, cfg);
    total += adaptive_on_cells(&g, &cells, cfg)?;
    let cells = build_cells(x + h, big, field.kinks, &graded, cfg);
    total += adaptive_on_cells(&g, &cells, cfg)?;
    // Excised interval: the odd Taylor term cancels; the even one integrates
    // to -u''(x) h^{2-2s} / (2-2s).
    let d2 = match field.second_derivative {
        Some(f) => f(x),
        None => {
            let e = 0.5 * h;
            (-(field.eval)(x - 2.0 * e) + 16.0 * (field.eval)(x - e) - 30.0 * (field.eval)(x)
                + 16.0 * (field.eval)(x + e)
                - (field.eval)(x + 2.0 * e))
                / (12.0 * e * e)
        }
    };
    total += -d2 * h.powf(2.0 - 2.0 * s) / (2.0 - 2.0 * s);
    total += tail_integral(field, s, x, -big, true)?;
    total += tail_integral(field, s, x, big, false)?;
    Ok(total)
}

/// `∫_{y<0} (u(x) - u(y)) |x - y|^{-1-2s} dy` (for `negative_side`) or the
/// mirror integral over `{y > 0}`; `x` must lie strictly on the other side,
/// so the integrand is proper.
pub fn halfline_integral(
    field: &LineField<'_>,
    s: f64,
    x: f64,
    negative_side: bool,
    cfg: &QuadratureConfig,
) -> Result<f64, FracOpsError> {
    check_tails(field, s)?;
    if x == 0.0 || (negative_side && x < 0.0) || (!negative_side && x > 0.0) {
        return Err(FracOpsError::OnInterface(x));
    }
    let (wlo, whi) = field.window;
    let big = whi.max(-wlo).max(1.0).max(2.0 * x.abs()) * 2.0;
    let ux = field.value(x);
    let g = |y: f64| (ux - field.value(y)) / (x - y).abs().powf(1.0 + 2.0 * s);
    let (lo, hi) = if negative_side { (-big, 0.0) } else { (0.0, big) };
    let cells = build_cells(lo, hi, field.kinks, field.singular, cfg);
    let mut total = adaptive_on_cells(&g, &cells, cfg)?;
    total += tail_integral(field, s, x, if negative_side { -big } else { big }, negative_side)?;
    Ok(total)
}

/// Integral of `(u(x) - tail(y)) |x-y|^{-1-2s}` over `(-∞, edge)` or
/// `(edge, ∞)`: the `u(x)` part in closed form, the tail part by geometric
/// shells until the increments vanish.
fn tail_integral(
    field: &LineField<'_>,
    s: f64,
    x: f64,
    edge: f64,
    left: bool,
) -> Result<f64, FracOpsError> {
    let dist = if left { x - edge } else { edge - x };
    debug_assert!(dist > 0.0);
    let mut total = field.value(x) * dist.powf(-2.0 * s) / (2.0 * s);
    let tail = if left { field.left_tail } else { field.right_tail };
    match tail {
        Tail::Zero => {}
        _ => {
            let mut lo = edge.abs();
            let sign = if left { -1.0 } else { 1.0 };
            let mut acc = 0.0;
            for _ in 0..400 {
                let hi = lo * 1.4;
                let term = fixed_gauss(
                    &|r: f64| tail.eval(r) * (x - sign * r).abs().powf(-1.0 - 2.0 * s),
                    lo,
                    hi,
                    12,
                );
                acc += term;
                lo = hi;
                if term.abs() < 1e-16 * acc.abs().max(1e-12) {
                    break;
                }
            }
            total -= acc;
        }
    }
    Ok(total)
}

/// Reduced fractional action on the one-sided power `ρ_α`:
/// `PV ∫_{R^n} (ρ_α(x_n) - ρ_α(y_n)) |x-y|^{-(n+2s)} dy
///  = A(n,s) · PV ∫_R (ρ_α(x_n) - ρ_α(t)) |x_n - t|^{-1-2s} dt
///  = q(s,α) A(n,s) x_n^{α-2s}`.
pub fn homogeneous_action(
    alpha: f64,
    s: f64,
    x_n: f64,
    n: usize,
    cfg: &QuadratureConfig,
) -> Result<f64, FracOpsError> {
    if !(alpha > 0.0 && alpha < 2.0 * s) {
        return Err(FracOpsError::DivergentTail {
            exponent: alpha,
            two_s: 2.0 * s,
        });
    }
    if x_n <= 0.0 {
        return Err(FracOpsError::OnInterface(x_n));
    }
    let eval = move |y: f64| rho_alpha(y, alpha);
    let d2 = move |y: f64| {
        if y > 0.0 {
            alpha * (alpha - 1.0) * y.powf(alpha - 2.0)
        } else {
            0.0
        }
    };
    let big = (4.0 * x_n).max(8.0);
    let field = LineField {
        eval: &eval,
        second_derivative: Some(&d2),
        kinks: &[],
        singular: &[0.0],
        window: (-big, big),
        left_tail: Tail::Zero,
        right_tail: Tail::Power {
            coeff: 1.0,
            exponent: alpha,
        },
    };
    Ok(a_ns(n, s)? * pv_full_line(&field, s, x_n, cfg)?)
}

/// Half-space source `∫_{y_n < 0} |y_n|^β |x - y|^{-(n+2s)} dy` for
/// `x_n > 0`, reduced to `A(n,s) ∫_0^∞ t^β (t + x_n)^{-1-2s} dt` and
/// integrated directly (endpoint moment at 0, graded cells, shell tail); it
/// equals `A(n,s) x_n^{β-2s} B(β+1, 2s-β)`.
pub fn halfspace_source(
    beta: f64,
    s: f64,
    x_n: f64,
    n: usize,
    cfg: &QuadratureConfig,
) -> Result<f64, FracOpsError> {
    if beta <= -1.0 || beta >= 2.0 * s {
        return Err(FracOpsError::DivergentTail {
            exponent: beta,
            two_s: 2.0 * s,
        });
    }
    if x_n <= 0.0 {
        return Err(FracOpsError::OnInterface(x_n));
    }
    let kernel = |t: f64| (t + x_n).powf(-1.0 - 2.0 * s);
    let eps = (0.25 * x_n).min(0.25);
    let mut total = crate::quad::power_endpoint_cell(&kernel, beta, eps, 12);
    let body_hi = (8.0 * x_n).max(8.0);
    let f = |t: f64| t.powf(beta) * kernel(t);
    total += adaptive_on_cells(&f, &build_cells(eps, body_hi, &[], &[eps], cfg), cfg)?;
    let mut lo = body_hi;
    for _ in 0..400 {
        let hi = lo * 1.4;
        let term = fixed_gauss(&f, lo, hi, 12);
        total += term;
        lo = hi;
        if term.abs() < 1e-16 * total.abs().max(1e-12) {
            break;
        }
    }
    Ok(a_ns(n, s)? * total)
}

/// Reduced kernel weights `(w₁, w₂)` of a kernel: the spherical averages
/// `A_{s,1}, A_{s,2}` that multiply the 1D kernel after tangential
/// integration (for constant pairs, `a_i · A(n,s)`).
pub fn reduced_weights(
    kernel: &KernelSpec,
    n: usize,
    s: f64,
    cfg: &QuadratureConfig,
) -> Result<(f64, f64), FracOpsError> {
    let w1 = spherical_average(&*kernel.sphere_limit_1(), n, s, cfg)?;
    let w2 = spherical_average(&*kernel.sphere_limit_2(), n, s, cfg)?;
    Ok((w1, w2))
}

/// Nonlocal-side classical operator at `x ∈ Ω₂` (`x > 0`) on a grid
/// function:
/// `2 w₁ PV∫_R (u(x)-u(y)) K dy - (2w₁ - w₂) ∫_{y<0} (u(x)-u(y)) K dy`
/// with `K = |x-y|^{-1-2s}` and `(w₁, w₂)` the reduced kernel weights.
pub fn apply_or(
    u: &GridFunction1D,
    kernel: &KernelSpec,
    n: usize,
    s: f64,
    x: f64,
    cfg: &QuadratureConfig,
) -> Result<f64, FracOpsError> {
    if x <= 0.0 {
        return Err(FracOpsError::OnInterface(x));
    }
    let (w1, w2) = reduced_weights(kernel, n, s, cfg)?;
    let eval = |y: f64| u.eval(y);
    let field = u.as_line_field(&eval);
    let pv = pv_full_line(&field, s, x, cfg)?;
    let left = halfline_integral(&field, s, x, true, cfg)?;
    Ok(2.0 * w1 * pv - (2.0 * w1 - w2) * left)
}

/// Local-side nonlocal source at `x ∈ Ω₁` (`x < 0`):
/// `ν A(n,s) ∫_{y>0} (u(x)-u(y)) K dy`, a proper integral since the
/// singularity sits outside the region.
pub fn apply_ol_nonlocal(
    u: &GridFunction1D,
    n: usize,
    s: f64,
    nu: f64,
    x: f64,
    cfg: &QuadratureConfig,
) -> Result<f64, FracOpsError> {
    if x >= 0.0 {
        return Err(FracOpsError::OnInterface(x));
    }
    let eval = |y: f64| u.eval(y);
    let field = u.as_line_field(&eval);
    let right = halfline_integral(&field, s, x, false, cfg)?;
    Ok(nu * a_ns(n, s)? * right)
}
