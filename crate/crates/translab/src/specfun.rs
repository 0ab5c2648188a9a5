//! Scalar special functions underlying the transmission analysis.
//!
//! The central object is the 1D kernel symbol `q(s, α)`: the principal-value
//! action of the kernel `|t - r|^{-1-2s}` on the one-sided power
//! `ρ_α(t) = 1_{t≥0} t^α` is homogeneous of degree `α - 2s` with coefficient
//! `q(s, α)`. It admits the simplified form
//!
//! ```text
//! q(s, α) = 1/(2s) - ∫_0^1 (t^α - 1)(1 - t^{2s-1-α}) / (1 - t)^{1+2s} dt
//! ```
//!
//! which this module evaluates by graded composite quadrature with exact
//! power-moment treatment of both endpoint cells. Alongside it live the
//! transverse kernel mass `A(n, s)`, Beta-type tail integrals, and a shared
//! principal-value line quadrature.

use crate::quad::{
    adaptive_on_cells, graded_breaks, graded_breaks_both, power_endpoint_cell, QuadError,
    QuadratureConfig,
};

/// One-sided power profile `ρ_α(t) = 1_{t≥0} t^α`.
#[inline]
pub fn rho_alpha(t: f64, alpha: f64) -> f64 {
    if t > 0.0 {
        t.powf(alpha)
    } else {
        0.0
    }
}

/// A fractional order `s ∈ (0,1)` paired with a homogeneity exponent
/// `α ∈ (0, 2s)`, the domain on which `q(s, ·)` is concave.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentPair {
    pub s: f64,
    pub alpha: f64,
}

impl ExponentPair {
    pub fn new(s: f64, alpha: f64) -> Result<Self, QuadError> {
        if !(s > 0.0 && s < 1.0) {
            return Err(QuadError::Domain(format!("s = {s} outside (0, 1)")));
        }
        if !(alpha > 0.0 && alpha < 2.0 * s) {
            return Err(QuadError::Domain(format!(
                "alpha = {alpha} outside (0, 2s) = (0, {})",
                2.0 * s
            )));
        }
        Ok(Self { s, alpha })
    }
}

/// Numerator `(t^α - 1)(1 - t^δ)` of the `q` integrand, written as the exact
/// four-power identity `t^α + t^δ - t^{α+δ} - 1` and evaluated through
/// `expm1` so the quadratic vanishing at `t = 1` survives in floating point.
fn q_numerator(t: f64, alpha: f64, delta: f64) -> f64 {
    let l = (-(1.0 - t)).ln_1p(); // ln t, accurate near t = 1
    (alpha * l).exp_m1() + (delta * l).exp_m1() - ((alpha + delta) * l).exp_m1()
}

fn q_integral(s: f64, alpha: f64, cfg: &QuadratureConfig) -> Result<f64, QuadError> {
    let delta = 2.0 * s - 1.0 - alpha;
    let sigma = 2.0 * s - 1.0;
    let eps = 1e-3;

    // (0, eps): four exact power moments of t^γ against (1-t)^{-1-2s}.
    // This is the Hadamard finite part when γ < -1, which coincides with the
    // analytic continuation of the integral in α.
    let smooth = |t: f64| (1.0 - t).powf(-1.0 - 2.0 * s);
    let mut head = 0.0;
    for (gamma, sign) in [(alpha, 1.0), (delta, 1.0), (sigma, -1.0), (0.0, -1.0)] {
        if (gamma + 1.0).abs() < 1e-13 {
            return Err(QuadError::Domain(format!(
                "q endpoint exponent {gamma} too close to the log-divergent value -1"
            )));
        }
        head += sign * power_endpoint_cell(&smooth, gamma, eps, 10);
    }

    // (1-eps, 1): the numerator vanishes quadratically, so integrate
    // u^{1-2s} against the analytic factor N(1-u)/u^2.
    let h_tail = |u: f64| q_numerator(1.0 - u, alpha, delta) / (u * u);
    let tail = power_endpoint_cell(&h_tail, 1.0 - 2.0 * s, eps, 10);

    // Middle part: smooth integrand, graded toward both endpoints.
    let f = |t: f64| q_numerator(t, alpha, delta) * (1.0 - t).powf(-1.0 - 2.0 * s);
    let breaks = graded_breaks_both(eps, 1.0 - eps, cfg.grading_strength, 12);
    let mid = adaptive_on_cells(&f, &breaks, cfg)?;

    Ok(head + mid + tail)
}

/// The kernel symbol `q(s, α)` on its natural domain `α ∈ (0, 2s)`.
pub fn q_value(p: ExponentPair, cfg: &QuadratureConfig) -> Result<f64, QuadError> {
    Ok(1.0 / (2.0 * p.s) - q_integral(p.s, p.alpha, cfg)?)
}

/// `q(s, α)` extended by analytic continuation (Hadamard finite part of the
/// endpoint moment) to exponents `α ≥ 2s - 1 - α_max`, in particular to
/// `α = 1` when `s < 1/2` where the defining integral diverges.
pub fn q_value_continued(s: f64, alpha: f64, cfg: &QuadratureConfig) -> Result<f64, QuadError> {
    if !(s > 0.0 && s < 1.0) {
        return Err(QuadError::Domain(format!("s = {s} outside (0, 1)")));
    }
    if !(alpha > 0.0) {
        return Err(QuadError::Domain(format!("alpha = {alpha} must be > 0")));
    }
    Ok(1.0 / (2.0 * s) - q_integral(s, alpha, cfg)?)
}

/// Transverse kernel mass `A(n, s) = ∫_{R^{n-1}} (1 + |y'|^2)^{-(n+2s)/2} dy'`,
/// reduced to the radial integral `σ_{n-2} ∫_0^∞ r^{n-2} (1+r^2)^{-(n+2s)/2} dr`
/// and evaluated with the substitution `r = tan θ`. For `n = 1` the empty
/// integral is 1.
pub fn a_ns(n: usize, s: f64) -> Result<f64, QuadError> {
    if n == 0 {
        return Err(QuadError::Domain("dimension n must be >= 1".into()));
    }
    if !(s > 0.0 && s < 1.0) {
        return Err(QuadError::Domain(format!("s = {s} outside (0, 1)")));
    }
    if n == 1 {
        return Ok(1.0);
    }
    let sphere_area = unit_sphere_area(n - 2)?;
    // r = tan θ turns the radial integral into ∫_0^{π/2} sin^{n-2}θ cos^{2s}θ dθ.
    // cos^{2s} has a branch point at π/2; peel that endpoint off as an exact
    // power moment in φ = π/2 - θ, where the integrand is φ^{2s} · analytic.
    use std::f64::consts::FRAC_PI_2;
    let eps = 0.3;
    let f = |theta: f64| theta.sin().powi(n as i32 - 2) * theta.cos().powf(2.0 * s);
    let body = crate::quad::fixed_gauss(&f, 0.0, FRAC_PI_2 - eps, 40);
    let h = |phi: f64| {
        let sinc = if phi == 0.0 { 1.0 } else { phi.sin() / phi };
        phi.cos().powi(n as i32 - 2) * sinc.powf(2.0 * s)
    };
    let cap = power_endpoint_cell(&h, 2.0 * s, eps, 12);
    Ok(sphere_area * (body + cap))
}

/// Surface area of the unit sphere `S^d ⊂ R^{d+1}`; `S^0` is two points with
/// counting measure 2.
fn unit_sphere_area(d: usize) -> Result<f64, QuadError> {
    use std::f64::consts::PI;
    // 2 π^{(d+1)/2} / Γ((d+1)/2), with Γ at integer/half-integer arguments.
    let half_arg_twice = d + 1; // argument of Γ is half_arg_twice / 2
    let gamma = gamma_half_integer(half_arg_twice)?;
    Ok(2.0 * PI.powf((d as f64 + 1.0) / 2.0) / gamma)
}

/// Γ(k/2) for integer k ≥ 1, by the recurrence from Γ(1/2) = √π and Γ(1) = 1.
fn gamma_half_integer(k: usize) -> Result<f64, QuadError> {
    if k == 0 {
        return Err(QuadError::Domain("gamma pole at 0".into()));
    }
    let mut val = if k % 2 == 1 {
        std::f64::consts::PI.sqrt()
    } else {
        1.0
    };
    let mut arg = if k % 2 == 1 { 1 } else { 2 }; // numerator of current argument /2
    while arg < k {
        val *= arg as f64 / 2.0;
        arg += 2;
    }
    Ok(val)
}

/// Tail integral `∫_0^∞ t^α (1 + t)^{-1-2s} dt`, convergent for
/// `-1 < α < 2s`; equals `B(α+1, 2s-α)`.
pub fn beta_tail(alpha: f64, s: f64, cfg: &QuadratureConfig) -> Result<f64, QuadError> {
    if !(s > 0.0 && s < 1.0) {
        return Err(QuadError::Domain(format!("s = {s} outside (0, 1)")));
    }
    if alpha <= -1.0 || alpha >= 2.0 * s {
        return Err(QuadError::Divergent(format!(
            "beta_tail requires -1 < alpha < 2s, got alpha = {alpha}, s = {s}"
        )));
    }
    let eps = 0.25;
    // ∫_0^1 t^α (1+t)^{-1-2s}: endpoint moment on (0, eps), quadrature after.
    let near = |t: f64| (1.0 + t).powf(-1.0 - 2.0 * s);
    let mut total = power_endpoint_cell(&near, alpha, eps, 12);
    let f01 = |t: f64| t.powf(alpha) * (1.0 + t).powf(-1.0 - 2.0 * s);
    total += adaptive_on_cells(&f01, &[eps, 1.0], cfg)?;
    // ∫_1^∞ maps under t = 1/u to ∫_0^1 u^{2s-α-1} (1+u)^{-1-2s} du.
    let beta2 = 2.0 * s - alpha - 1.0;
    total += power_endpoint_cell(&near, beta2, eps, 12);
    let f1inf = |u: f64| u.powf(beta2) * (1.0 + u).powf(-1.0 - 2.0 * s);
    total += adaptive_on_cells(&f1inf, &[eps, 1.0], cfg)?;
    Ok(total)
}

/// Principal-value integral `PV ∫_a^b f(r) / |r - x|^{k} dr` where `f`
/// vanishes (at least linearly) at the singular point `x` and `k = 1 + 2s`.
///
/// The singularity is excised symmetrically; on the excised interval the odd
/// first Taylor term cancels and the even second-order term is added back
/// analytically as `f''(x) h^{3-k} / (3-k)`, with `f''` from central
/// differences.
pub fn pv_line_integral<F: Fn(f64) -> f64>(
    f: &F,
    singularity: f64,
    interval: (f64, f64),
    kernel_order: f64,
    cfg: &QuadratureConfig,
) -> Result<f64, QuadError> {
    let (a, b) = interval;
    if !(a < b) {
        return Err(QuadError::Domain("empty interval".into()));
    }
    if !(kernel_order > 1.0 && kernel_order < 3.0) {
        return Err(QuadError::Domain(format!(
            "kernel_order = {kernel_order} outside (1, 3)"
        )));
    }
    let x = singularity;
    let g = |r: f64| f(r) / (r - x).abs().powf(kernel_order);
    if x <= a || x >= b {
        let levels = cfg.max_subdivisions.min(50);
        let toward_a = x <= a;
        let breaks = graded_breaks(a, b, toward_a, cfg.grading_strength, levels);
        return adaptive_on_cells(&g, &breaks, cfg);
    }

    // Excision radius relative to the local scale at x, not the (possibly
    // huge) interval, so the O(h^{2-2s})-order Taylor remainder stays tiny.
    let scale = (x - a).min(b - x).min(x.abs().max(1.0));
    let h = (1e-4 * scale).max(1e-12);
    // Mirrored graded cells on both sides of the excision so odd parts cancel
    // pairwise in floating point.
    let levels = cfg.max_subdivisions.min(50);
    let mut total = 0.0;
    let left_breaks = graded_breaks(a, x - h, false, cfg.grading_strength, levels);
    total += adaptive_on_cells(&g, &left_breaks, cfg)?;
    let right_breaks = graded_breaks(x + h, b, true, cfg.grading_strength, levels);
    total += adaptive_on_cells(&g, &right_breaks, cfg)?;

    // Second-order correction on (x-h, x+h).
    let e = 0.5 * h;
    let fxx = (-f(x - 2.0 * e) + 16.0 * f(x - e) - 30.0 * f(x) + 16.0 * f(x + e)
        - f(x + 2.0 * e))
        / (12.0 * e * e);
    total += fxx * h.powf(3.0 - kernel_order) / (3.0 - kernel_order);
    Ok(total)
}
