//! Symmetric α-stable primitives.
//!
//! A symmetric α-stable law `SαS(σ)` has characteristic function
//! `exp(-σ^α |θ|^α)`. Everything here is a pure function of its inputs; the
//! only source of randomness is a [`RandomKey`] passed in by the caller.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gof::{ecf, EmpiricalSample};
use crate::quad::{integrate_panels, NotConverged};
use crate::rng::{KeyedRng, RandomKey, StreamTag};

/// Absolute accuracy promised by [`cdf_sas`].
pub const CDF_TOLERANCE: f64 = 1e-8;

// Quadrature targets sit well below the promised tolerance.
const GP_TOL: f64 = 1e-10;
const GP_DECAY: f64 = 30.0;
const GP_MAX_PANELS: usize = 2000;
const GP_MAX_PANELS_NEAR_CAUCHY: usize = 20_000;

/// Parameters of `SαS(σ)` with `0 < α < 2` and `σ > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct AlphaStableParams {
    alpha: f64,
    sigma: f64,
}

#[derive(Deserialize)]
struct RawParams {
    alpha: f64,
    sigma: f64,
}

impl TryFrom<RawParams> for AlphaStableParams {
    type Error = Error;
    fn try_from(raw: RawParams) -> Result<Self> {
        make_params(raw.alpha, raw.sigma)
    }
}

/// Validates and builds [`AlphaStableParams`].
pub fn make_params(alpha: f64, sigma: f64) -> Result<AlphaStableParams> {
    check_alpha(alpha)?;
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::param("sigma", format!("{sigma} must be finite and > 0")));
    }
    Ok(AlphaStableParams { alpha, sigma })
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 && alpha < 2.0 {
        Ok(())
    } else {
        Err(Error::param(
            "alpha",
            format!("alpha out of open interval (0,2): got {alpha}"),
        ))
    }
}

impl AlphaStableParams {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `σ^α`, the dispersion raised to the stability index.
    pub fn scale_alpha(&self) -> f64 {
        self.sigma.powf(self.alpha)
    }

    /// Same α, different σ.
    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        make_params(self.alpha, sigma)
    }
}

// ---------------------------------------------------------------------------
// Sampling

/// A uniform angle on (-π/2, π/2) stored by its distance to the nearest
/// endpoint, plus the uniform that feeds the exponential.
///
/// `edge` is `h = min(u, 1-u)` for the underlying uniform `u`, so the angle is
/// `±(π/2 - πh)`. Keeping `h` instead of the angle preserves relative
/// precision right where the transform blows up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleDraw {
    pub upper: bool,
    pub edge: f64,
    pub u_exp: f64,
}

impl AngleDraw {
    pub fn from_uniforms(u_angle: f64, u_exp: f64) -> Self {
        let upper = u_angle >= 0.5;
        let edge = if upper { 1.0 - u_angle } else { u_angle };
        Self { upper, edge, u_exp }
    }

    pub(crate) fn draw(rng: &mut KeyedRng) -> Self {
        let u = rng.open01();
        let v = rng.open01();
        Self::from_uniforms(u, v)
    }

    /// Signed angle `U` in (-π/2, π/2).
    pub fn angle(&self) -> f64 {
        let mag = FRAC_PI_2 - PI * self.edge;
        if self.upper {
            mag
        } else {
            -mag
        }
    }
}

/// Chambers–Mallows–Stuck transform for the symmetric case.
///
/// `angle` is uniform on (-π/2, π/2) and `exp1` is a unit-mean exponential.
pub fn cms_transform(alpha: f64, sigma: f64, angle: f64, exp1: f64) -> f64 {
    let edge = (FRAC_PI_2 - angle.abs()) / PI;
    cms_core(alpha, sigma, angle >= 0.0, edge, exp1)
}

pub(crate) fn cms_from_draw(alpha: f64, sigma: f64, draw: &AngleDraw) -> f64 {
    cms_core(alpha, sigma, draw.upper, draw.edge, -draw.u_exp.ln())
}

#[inline]
pub(crate) fn cms_core(alpha: f64, sigma: f64, positive: bool, edge: f64, exp1: f64) -> f64 {
    let edge_angle = PI * edge;
    let mag = FRAC_PI_2 - edge_angle;
    let x = if alpha == 1.0 {
        // tan(π/2 - a) = cos(a)/sin(a), used near the poles only
        if edge >= 0.25 {
            mag.tan()
        } else {
            edge_angle.cos() / edge_angle.sin()
        }
    } else {
        let cos_u = edge_angle.sin();
        let lead = (alpha * mag).sin() / cos_u.powf(1.0 / alpha);
        let tail = (((1.0 - alpha) * mag).cos() / exp1).powf((1.0 - alpha) / alpha);
        lead * tail
    };
    let x = sigma * x;
    if positive {
        x
    } else {
        -x
    }
}

/// One `SαS(σ)` variate, a pure function of `key`.
pub fn sample_sas(params: &AlphaStableParams, key: RandomKey) -> f64 {
    let mut rng = key.rng();
    sample_with(params, &mut rng)
}

/// `count` i.i.d. draws keyed by `(Sampler, j, replica)` for `j < count`.
pub fn sample_iid(params: &AlphaStableParams, master_seed: u64, replica: u64, count: u64) -> Vec<f64> {
    use rayon::prelude::*;
    (0..count)
        .into_par_iter()
        .map(|j| sample_sas(params, RandomKey::new(master_seed, StreamTag::Sampler, 0, j, replica)))
        .collect()
}

pub(crate) fn sample_with(params: &AlphaStableParams, rng: &mut KeyedRng) -> f64 {
    cms_from_draw(params.alpha, params.sigma, &AngleDraw::draw(rng))
}

// ---------------------------------------------------------------------------
// Characteristic function and distribution function

/// `E exp(iθX) = exp(-σ^α |θ|^α)`.
pub fn cf_value(params: &AlphaStableParams, theta: f64) -> f64 {
    (-params.scale_alpha() * theta.abs().powf(params.alpha)).exp()
}

/// Distribution function of `SαS(σ)`.
///
/// Uses Gil-Pelaez inversion, `F(x) = 1/2 + (1/π) ∫₀^∞ sin(θx) φ(θ)/θ dθ`,
/// split into half-period panels of width `π / max(|x|, 1)`. When that
/// needs too many panels (large `|x|`), the non-oscillatory Zolotarev integral
/// takes over (or the Cauchy closed form when α = 1). Only `x ≥ 0` is computed
/// and negative arguments are reflected, so `F(0) = 1/2` exactly.
pub fn cdf_sas(params: &AlphaStableParams, x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::param("x", "NaN"));
    }
    if x == 0.0 {
        return Ok(0.5);
    }
    let z = x.abs() / params.sigma;
    let two_sided = standard_tail(params.alpha, z)?;
    let upper = 0.5 * two_sided;
    Ok(if x > 0.0 { 1.0 - upper } else { upper })
}

/// `P(|X| ≥ t)` for `X ~ SαS(σ)`.
pub fn tail_sas(params: &AlphaStableParams, t: f64) -> Result<f64> {
    if t <= 0.0 {
        return Ok(1.0);
    }
    if t.is_infinite() {
        return Ok(0.0);
    }
    standard_tail(params.alpha, t / params.sigma)
}

/// Which integral [`cdf_sas`] uses at a standardized point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdfRoute {
    GilPelaez,
    Zolotarev,
    CauchyClosedForm,
}

pub fn cdf_route(alpha: f64, z: f64) -> CdfRoute {
    let panels = gp_panel_count(alpha, z);
    let cap = if (alpha - 1.0).abs() < 0.05 {
        GP_MAX_PANELS_NEAR_CAUCHY
    } else {
        GP_MAX_PANELS
    };
    if panels <= cap {
        CdfRoute::GilPelaez
    } else if alpha == 1.0 {
        CdfRoute::CauchyClosedForm
    } else {
        CdfRoute::Zolotarev
    }
}

fn gp_cutoff(alpha: f64) -> f64 {
    GP_DECAY.powf(1.0 / alpha)
}

fn gp_panel_count(alpha: f64, z: f64) -> usize {
    (gp_cutoff(alpha) * z.abs().max(1.0) / PI).ceil() as usize
}

/// Two-sided tail `P(|X| ≥ z)` for `σ = 1`, `z > 0`.
fn standard_tail(alpha: f64, z: f64) -> Result<f64> {
    match cdf_route(alpha, z) {
        CdfRoute::GilPelaez => gil_pelaez_tail(alpha, z),
        CdfRoute::Zolotarev => zolotarev_tail(alpha, z),
        CdfRoute::CauchyClosedForm => Ok(2.0 / PI * (1.0 / z).atan()),
    }
}

/// `1 - (2/π) ∫₀^Θ sin(θz) e^{-θ^α}/θ dθ`. The neglected tail beyond Θ is
/// below `e^{-30}`.
pub(crate) fn gil_pelaez_tail(alpha: f64, z: f64) -> Result<f64> {
    let cutoff = gp_cutoff(alpha);
    let width = PI / z.max(1.0);
    let panels = (cutoff / width).ceil() as usize;
    let mut breaks: Vec<f64> = (0..panels).map(|i| i as f64 * width).collect();
    breaks.push(cutoff);
    let integrand = |theta: f64| (theta * z).sin() * (-theta.powf(alpha)).exp() / theta;
    let r = integrate_panels(integrand, &breaks, GP_TOL, panels * 8 + 64)
        .map_err(|e| numeric("Gil-Pelaez inversion", e))?;
    Ok((1.0 - 2.0 / PI * r.value).clamp(0.0, 1.0))
}

/// Zolotarev's integral for the symmetric case, written in the variable
/// `ψ = π/2 - φ` so the endpoint where the integrand concentrates stays
/// well resolved. Valid for α ≠ 1, `z > 0`; accurate in relative terms.
pub(crate) fn zolotarev_tail(alpha: f64, z: f64) -> Result<f64> {
    let p = alpha / (alpha - 1.0);
    let lz = p * z.ln();
    let log_v = move |psi: f64| {
        let phi = FRAC_PI_2 - psi;
        let cos_phi = psi.sin();
        p * (cos_phi.ln() - (alpha * phi).sin().ln()) + ((alpha - 1.0) * phi).cos().ln() - cos_phi.ln()
    };
    let integrand = move |psi: f64| {
        let e = (lz + log_v(psi)).exp();
        if alpha > 1.0 {
            (-e).exp()
        } else {
            -(-e).exp_m1()
        }
    };
    let mut breaks: Vec<f64> = (0..60).map(|i| FRAC_PI_2 * 0.5f64.powi(i)).collect();
    breaks.push(0.0);
    breaks.reverse();
    let coarse = integrate_panels(integrand, &breaks, 1e-13, 4000).map_err(|e| numeric("Zolotarev integral", e))?;
    let tol = (coarse.value.abs() * 1e-11).max(1e-300);
    let fine = if coarse.error <= tol {
        coarse
    } else {
        integrate_panels(integrand, &breaks, tol, 20_000).map_err(|e| numeric("Zolotarev integral", e))?
    };
    Ok((2.0 / PI * fine.value).clamp(0.0, 1.0))
}

fn numeric(what: &'static str, e: NotConverged) -> Error {
    Error::Numeric {
        what,
        residual: e.error,
    }
}

// ---------------------------------------------------------------------------
// Tail bound

/// Calibrated constant for `P(|X| ≥ t) ≤ C_α σ^α t^{-α}` (σ ≤ 1, t ≥ 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailBoundCert {
    pub alpha: f64,
    /// The constant used by [`tail_bound`].
    pub c_alpha: f64,
    /// Supremum of `P(|X| ≥ t) t^α` over `grid` at σ = 1.
    pub grid_sup: f64,
    /// Limit of `P(|X| ≥ t) t^α` as `t → ∞`: `(2/π) Γ(α) sin(πα/2)`.
    pub asymptotic_c: f64,
    pub valid_from_t: f64,
    pub grid: Vec<f64>,
}

impl TailBoundCert {
    /// Default grid `t = 2^{i/4}`, `i = 0..=64`, i.e. `[1, 2^16]`.
    pub fn default_grid() -> Vec<f64> {
        (0..=64).map(|i| 2f64.powf(i as f64 / 4.0)).collect()
    }

    pub fn calibrate(alpha: f64) -> Result<Self> {
        Self::calibrate_on(alpha, Self::default_grid())
    }

    /// `C_α = max(sup_grid P(|X| ≥ t) t^α, asymptotic constant)`.
    pub fn calibrate_on(alpha: f64, grid: Vec<f64>) -> Result<Self> {
        check_alpha(alpha)?;
        if grid.is_empty() || grid.iter().any(|&t| t < 1.0) {
            return Err(Error::param("grid", "needs points t >= 1"));
        }
        let mut grid_sup: f64 = 0.0;
        for &t in &grid {
            let tail = standard_tail(alpha, t)?;
            grid_sup = grid_sup.max(tail * t.powf(alpha));
        }
        let asymptotic_c = asymptotic_tail_constant(alpha);
        Ok(Self {
            alpha,
            c_alpha: grid_sup.max(asymptotic_c),
            grid_sup,
            asymptotic_c,
            valid_from_t: 1.0,
            grid,
        })
    }
}

pub fn asymptotic_tail_constant(alpha: f64) -> f64 {
    2.0 / PI * libm::tgamma(alpha) * (PI * alpha / 2.0).sin()
}

/// `C_α σ^α t^{-α}`.
// Negated comparisons below also reject NaN.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn tail_bound(params: &AlphaStableParams, t: f64, cert: &TailBoundCert) -> Result<f64> {
    if cert.alpha != params.alpha {
        return Err(Error::Domain(format!(
            "certificate calibrated for alpha={}, params have alpha={}",
            cert.alpha, params.alpha
        )));
    }
    if params.sigma > 1.0 {
        return Err(Error::Domain(format!("sigma={} > 1", params.sigma)));
    }
    if !(t >= cert.valid_from_t) {
        return Err(Error::Domain(format!("t={t} below {}", cert.valid_from_t)));
    }
    Ok(cert.c_alpha * params.scale_alpha() * t.powf(-params.alpha))
}

// ---------------------------------------------------------------------------
// Truncated variance

/// `Var(X 1[|X| ≤ K])` for `X ~ SαS(σ)`; the mean is zero by symmetry.
///
/// Computed from the tail as `∫₀^K 2y P(|X|>y) dy - K² P(|X|>K)`.
// Negated comparisons below also reject NaN.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn truncated_variance(params: &AlphaStableParams, k_cut: f64) -> Result<f64> {
    if !(k_cut >= 1.0) {
        return Err(Error::Domain(format!("K={k_cut} < 1")));
    }
    if params.sigma > 1.0 {
        return Err(Error::Domain(format!("sigma={} > 1", params.sigma)));
    }
    let s = params.sigma;
    let curve = standard_truncated_moments(params.alpha, &[k_cut / s])?;
    Ok(s * s * curve[0])
}

/// `E[X² 1[|X| ≤ L]]` at σ = 1 for each (sorted ascending) `L`, by cumulative
/// integration.
pub fn standard_truncated_moments(alpha: f64, cuts: &[f64]) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    let mut out = Vec::with_capacity(cuts.len());
    let mut acc = 0.0;
    let mut from = 0.0f64;
    for &cut in cuts {
        if cut < from {
            return Err(Error::param("cuts", "must be sorted ascending"));
        }
        acc += moment_piece(alpha, from, cut)?;
        from = cut;
        let tail = standard_tail(alpha, cut)?;
        out.push((acc - cut * cut * tail).max(0.0));
    }
    Ok(out)
}

fn moment_piece(alpha: f64, a: f64, b: f64) -> Result<f64> {
    if b <= a {
        return Ok(0.0);
    }
    // Dyadic breakpoints keep each panel within one scale.
    let mut breaks = vec![a];
    let mut t = if a > 0.0 { a } else { b.min(1.0) / 64.0 };
    while t * 2.0 < b {
        t *= 2.0;
        if t > a {
            breaks.push(t);
        }
    }
    breaks.push(b);
    // The piece grows like b^{2-α}; ask for nine digits of that scale.
    let tol = 1e-9 * b.max(1.0).powf(2.0 - alpha);
    let failed = std::cell::Cell::new(None);
    let f = |y: f64| match standard_tail(alpha, y) {
        Ok(s) => 2.0 * y * s,
        Err(e) => {
            failed.set(Some(e));
            0.0
        }
    };
    let r = integrate_panels(f, &breaks, tol, 2000).map_err(|e| numeric("truncated second moment", e))?;
    if let Some(e) = failed.take() {
        return Err(e);
    }
    Ok(r.value)
}

/// Calibrated `c` in `Var(X 1[|X| ≤ K]) ≤ c K^{2-α} σ^α`: the larger of the
/// grid supremum and the large-`K` limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncVarCert {
    pub alpha: f64,
    pub c: f64,
    /// Supremum of `Var(X 1[|X| ≤ K]) / K^{2-α}` over `grid` at σ = 1.
    pub grid_sup: f64,
    /// Limit of the same ratio as `K → ∞`: `α C / (2 - α)` with `C` the
    /// asymptotic tail constant.
    pub asymptotic_c: f64,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl TruncVarCert {
    /// Default grid `K ∈ {1, 2, 4, ..., 2^20}`.
    pub fn default_grid() -> Vec<f64> {
        (0..=20).map(|i| 2f64.powi(i)).collect()
    }

    pub fn calibrate(alpha: f64) -> Result<Self> {
        Self::calibrate_on(alpha, Self::default_grid())
    }

    pub fn calibrate_on(alpha: f64, grid: Vec<f64>) -> Result<Self> {
        let values = standard_truncated_moments(alpha, &grid)?;
        let grid_sup = grid
            .iter()
            .zip(&values)
            .map(|(k, v)| v / k.powf(2.0 - alpha))
            .fold(0.0, f64::max);
        let asymptotic_c = alpha * asymptotic_tail_constant(alpha) / (2.0 - alpha);
        Ok(Self {
            alpha,
            c: grid_sup.max(asymptotic_c),
            grid_sup,
            asymptotic_c,
            grid,
            values,
        })
    }

    pub fn bound(&self, sigma: f64, k_cut: f64) -> f64 {
        self.c * k_cut.powf(2.0 - self.alpha) * sigma.powf(self.alpha)
    }
}

// ---------------------------------------------------------------------------
// Dispersion

/// Estimates `σ^α` from `-ln|φ̂(θ)| / |θ|^α`, averaged over `theta_grid`.
pub fn dispersion_estimate(sample: &EmpiricalSample, alpha: f64, theta_grid: &[f64]) -> Result<f64> {
    check_alpha(alpha)?;
    if sample.is_empty() {
        return Err(Error::param("sample", "empty"));
    }
    if theta_grid.is_empty() {
        return Err(Error::param("theta_grid", "empty"));
    }
    if let Some(&t) = theta_grid.iter().find(|t| **t == 0.0 || !t.is_finite()) {
        return Err(Error::param(
            "theta_grid",
            format!("theta={t} must be nonzero and finite"),
        ));
    }
    let mut total = 0.0;
    for (theta, magnitude) in ecf(sample, theta_grid) {
        if magnitude <= 0.1 {
            return Err(Error::Grid { theta, magnitude });
        }
        total += -magnitude.ln() / theta.abs().powf(alpha);
    }
    Ok(total / theta_grid.len() as f64)
}
