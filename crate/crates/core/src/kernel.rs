//! Correlation kernels `f`, the heat kernel `G`, the Gaussian factor
//! `T_ν`, the function `k(t) = E f(B_t)` and the homogeneous solution `J_0`.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::quadrature::{
    gauss_legendre, integrate, integrate_singular, radial_integral, QuadOptions, QuadratureError, RadialOptions,
    SingularWeight,
};
use crate::special::{erfcx, ln_gamma, normal_cdf};

pub type Point = Vec<f64>;

/// Largest dimension for which quadrature-backed evaluations are allowed.
pub const MAX_QUADRATURE_DIM: usize = 6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("invalid kernel parameters: {0}")]
    InvalidParameters(String),
    #[error("kernel is singular at the origin")]
    SingularAtOrigin,
    #[error("white noise has no pointwise value")]
    NotPointwise,
    #[error("time must be positive, got {0}")]
    NonpositiveTime(f64),
    #[error("point has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("quadrature-backed evaluation limited to d <= {MAX_QUADRATURE_DIM}, got d = {0}")]
    DimensionTooLarge(usize),
    #[error("integral diverges: {0}")]
    DivergentIntegral(String),
    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),
    #[error("table error: {0}")]
    Table(String),
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
}

impl From<QuadratureError> for KernelError {
    fn from(e: QuadratureError) -> Self {
        match e {
            QuadratureError::DivergentIntegral { .. } => KernelError::DivergentIntegral(e.to_string()),
            other => KernelError::QuadratureFailure(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelVariant {
    /// `|x|^{-α}`
    Riesz { alpha: f64 },
    /// `exp(-c |x|^α)`
    OrnsteinUhlenbeck { alpha: f64, c: f64 },
    /// `(1 + |x|^2)^{-(d+1)/2}`
    Poisson,
    /// `Π_j (1 + x_j^2)^{-1}`
    Cauchy,
    /// `f ≡ level`
    Constant { level: f64 },
    /// `δ_0` in one dimension
    WhiteNoise1D,
    /// Indicator of the cube `[-a, a]^d`
    BoxIndicator { a: f64 },
    /// Radial profile sampled at strictly increasing radii, linear in between
    /// and zero beyond the last radius.
    TabulatedRadial { radii: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationKernel {
    variant: KernelVariant,
    dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatParams {
    nu: f64,
    dim: usize,
}

impl HeatParams {
    pub fn new(nu: f64, dim: usize) -> Result<Self, KernelError> {
        if !(nu > 0.0 && nu.is_finite()) || dim == 0 {
            return Err(KernelError::InvalidParameters(format!(
                "heat parameters need nu > 0 and dim >= 1 (nu = {nu}, dim = {dim})"
            )));
        }
        Ok(Self { nu, dim })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn with_nu(&self, nu: f64) -> Result<Self, KernelError> {
        Self::new(nu, self.dim)
    }
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn check_time(t: f64) -> Result<(), KernelError> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(KernelError::NonpositiveTime(t))
    }
}

/// `G(t, x) = (2πνt)^{-d/2} exp(-|x|^2 / (2νt))`.
pub fn heat_kernel(p: &HeatParams, t: f64, x: &[f64]) -> Result<f64, KernelError> {
    check_time(t)?;
    if x.len() != p.dim {
        return Err(KernelError::DimensionMismatch {
            expected: p.dim,
            got: x.len(),
        });
    }
    Ok(heat_kernel_r2(p.nu, p.dim, t, norm2(x)))
}

/// Heat kernel from the squared distance; no argument checks.
pub fn heat_kernel_r2(nu: f64, dim: usize, t: f64, r2: f64) -> f64 {
    let var = nu * t;
    (2.0 * PI * var).powf(-(dim as f64) / 2.0) * (-r2 / (2.0 * var)).exp()
}

/// `T_ν(t, x) = exp(-|x|^2 / (ν t))`.
pub fn gauss_factor(p: &HeatParams, t: f64, x: &[f64]) -> Result<f64, KernelError> {
    check_time(t)?;
    Ok((-norm2(x) / (p.nu * t)).exp())
}

/// `T_ν(t, x)` from the squared norm; `T_ν(0, x) = 1{x = 0}`.
pub fn gauss_factor_r2(nu: f64, t: f64, r2: f64) -> f64 {
    if r2 == 0.0 {
        1.0
    } else if t <= 0.0 {
        0.0
    } else {
        (-r2 / (nu * t)).exp()
    }
}

impl CorrelationKernel {
    pub fn new(variant: KernelVariant, dim: usize) -> Result<Self, KernelError> {
        let bad = |msg: String| Err(KernelError::InvalidParameters(msg));
        if dim == 0 {
            return bad("dimension must be at least 1".into());
        }
        match &variant {
            KernelVariant::Riesz { alpha } => {
                if !(*alpha > 0.0 && *alpha < 2.0f64.min(dim as f64)) {
                    return bad(format!("Riesz needs 0 < alpha < min(2, d); alpha = {alpha}, d = {dim}"));
                }
            }
            KernelVariant::OrnsteinUhlenbeck { alpha, c } => {
                if !(*alpha > 0.0 && *alpha <= 2.0) || !(*c > 0.0 && c.is_finite()) {
                    return bad(format!("OU needs 0 < alpha <= 2 and c > 0; alpha = {alpha}, c = {c}"));
                }
            }
            KernelVariant::Constant { level } => {
                if !(*level > 0.0 && level.is_finite()) {
                    return bad(format!("constant level must be positive, got {level}"));
                }
            }
            KernelVariant::WhiteNoise1D => {
                if dim != 1 {
                    return bad(format!("white noise is one-dimensional, got d = {dim}"));
                }
            }
            KernelVariant::BoxIndicator { a } => {
                if !(*a > 0.0 && a.is_finite()) {
                    return bad(format!("box half-width must be positive, got {a}"));
                }
            }
            KernelVariant::TabulatedRadial { radii, values } => {
                if radii.len() < 2 || radii.len() != values.len() {
                    return bad("tabulated kernel needs at least two (radius, value) rows".into());
                }
                if radii[0] < 0.0 || radii.windows(2).any(|w| !(w[1] > w[0])) {
                    return bad("tabulated radii must be nonnegative and strictly increasing".into());
                }
                if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                    return bad("tabulated values must be finite and nonnegative".into());
                }
            }
            KernelVariant::Poisson | KernelVariant::Cauchy => {}
        }
        Ok(Self { variant, dim })
    }

    pub fn riesz(alpha: f64, dim: usize) -> Result<Self, KernelError> {
        Self::new(KernelVariant::Riesz { alpha }, dim)
    }

    pub fn ou(alpha: f64, c: f64, dim: usize) -> Result<Self, KernelError> {
        Self::new(KernelVariant::OrnsteinUhlenbeck { alpha, c }, dim)
    }

    pub fn poisson(dim: usize) -> Result<Self, KernelError> {
        Self::new(KernelVariant::Poisson, dim)
    }

    pub fn cauchy(dim: usize) -> Result<Self, KernelError> {
        Self::new(KernelVariant::Cauchy, dim)
    }

    pub fn constant(level: f64, dim: usize) -> Result<Self, KernelError> {
        Self::new(KernelVariant::Constant { level }, dim)
    }

    pub fn white_noise() -> Self {
        Self {
            variant: KernelVariant::WhiteNoise1D,
            dim: 1,
        }
    }

    pub fn box_indicator(a: f64, dim: usize) -> Result<Self, KernelError> {
        Self::new(KernelVariant::BoxIndicator { a }, dim)
    }

    pub fn tabulated(radii: Vec<f64>, values: Vec<f64>, dim: usize) -> Result<Self, KernelError> {
        Self::new(KernelVariant::TabulatedRadial { radii, values }, dim)
    }

    /// Loads a two-column CSV `(radius, value)`; a non-numeric first row is
    /// treated as a header.
    pub fn tabulated_from_csv(path: &Path, dim: usize) -> Result<Self, KernelError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| KernelError::Table(format!("{}: {e}", path.display())))?;
        let mut radii = Vec::new();
        let mut values = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| KernelError::Table(e.to_string()))?;
            if rec.len() != 2 {
                return Err(KernelError::Table(format!(
                    "row {} has {} columns, expected 2",
                    i + 1,
                    rec.len()
                )));
            }
            let parsed = (rec[0].parse::<f64>(), rec[1].parse::<f64>());
            match parsed {
                (Ok(r), Ok(v)) => {
                    radii.push(r);
                    values.push(v);
                }
                _ if i == 0 => continue,
                _ => return Err(KernelError::Table(format!("row {} is not numeric", i + 1))),
            }
        }
        Self::tabulated(radii, values, dim)
    }

    pub fn variant(&self) -> &KernelVariant {
        &self.variant
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> &'static str {
        match self.variant {
            KernelVariant::Riesz { .. } => "riesz",
            KernelVariant::OrnsteinUhlenbeck { .. } => "ou",
            KernelVariant::Poisson => "poisson",
            KernelVariant::Cauchy => "cauchy",
            KernelVariant::Constant { .. } => "constant",
            KernelVariant::WhiteNoise1D => "white",
            KernelVariant::BoxIndicator { .. } => "box",
            KernelVariant::TabulatedRadial { .. } => "tabulated",
        }
    }

    pub fn is_white_noise(&self) -> bool {
        matches!(self.variant, KernelVariant::WhiteNoise1D)
    }

    pub fn is_radial(&self) -> bool {
        !matches!(self.variant, KernelVariant::Cauchy | KernelVariant::BoxIndicator { .. })
    }

    /// Power `e` with `k(t) ~ t^e` as `t -> 0`.
    pub fn k_singularity(&self) -> f64 {
        match self.variant {
            KernelVariant::Riesz { alpha } => -alpha / 2.0,
            KernelVariant::WhiteNoise1D => -0.5,
            _ => 0.0,
        }
    }

    /// Radial profile `f̃(r)` for radial kernels.
    pub fn radial_profile(&self, r: f64) -> Option<f64> {
        let d = self.dim as f64;
        match &self.variant {
            KernelVariant::Riesz { alpha } => Some(r.powf(-alpha)),
            KernelVariant::OrnsteinUhlenbeck { alpha, c } => Some((-c * r.powf(*alpha)).exp()),
            KernelVariant::Poisson => Some((1.0 + r * r).powf(-(d + 1.0) / 2.0)),
            KernelVariant::Constant { level } => Some(*level),
            KernelVariant::TabulatedRadial { radii, values } => Some(interpolate_table(radii, values, r)),
            _ => None,
        }
    }

    /// Pointwise value `f(x)`.
    pub fn eval_f(&self, x: &[f64]) -> Result<f64, KernelError> {
        if x.len() != self.dim {
            return Err(KernelError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        match &self.variant {
            KernelVariant::WhiteNoise1D => Err(KernelError::NotPointwise),
            KernelVariant::Riesz { .. } if x.iter().all(|v| *v == 0.0) => Err(KernelError::SingularAtOrigin),
            KernelVariant::Cauchy => Ok(x.iter().map(|v| 1.0 / (1.0 + v * v)).product()),
            KernelVariant::BoxIndicator { a } => Ok(if x.iter().all(|v| v.abs() <= *a) { 1.0 } else { 0.0 }),
            _ => Ok(self
                .radial_profile(norm2(x).sqrt())
                .expect("remaining variants are radial")),
        }
    }

    /// Definition-consistent Riesz constant: `k(t) = C t^{-α/2}` with
    /// `C = ν^{-α/2} 2^{-α/2} Γ((d-α)/2) / Γ(d/2)`.
    pub fn riesz_constant(alpha: f64, nu: f64, dim: usize) -> f64 {
        let d = dim as f64;
        (-alpha / 2.0 * nu.ln() - alpha / 2.0 * 2f64.ln() + ln_gamma((d - alpha) / 2.0) - ln_gamma(d / 2.0)).exp()
    }

    /// Constant under the ball-volume normalisation,
    /// `ν^{-α/2} 2^{-1-α/2} Γ((d-α)/2) / Γ(1+d/2)`; equals
    /// [`Self::riesz_constant`] divided by `d`.
    pub fn riesz_constant_alt(alpha: f64, nu: f64, dim: usize) -> f64 {
        let d = dim as f64;
        (-alpha / 2.0 * nu.ln() - (1.0 + alpha / 2.0) * 2f64.ln() + ln_gamma((d - alpha) / 2.0)
            - ln_gamma(1.0 + d / 2.0))
        .exp()
    }

    /// `k(t)` for `f = exp(-|x|^2)` under the ball-volume normalisation: `d^{-1} (1 + 2νt)^{-d/2}`.
    pub fn ou2_k_alt(nu: f64, dim: usize, t: f64) -> f64 {
        (1.0 + 2.0 * nu * t).powf(-(dim as f64) / 2.0) / dim as f64
    }

    /// Closed form of `k(t)` when the variant has one.
    pub fn k_closed_form(&self, p: &HeatParams, t: f64) -> Option<f64> {
        let nu = p.nu;
        let d = self.dim as f64;
        match &self.variant {
            KernelVariant::Constant { level } => Some(*level),
            KernelVariant::WhiteNoise1D => Some((2.0 * PI * nu * t).powf(-0.5)),
            KernelVariant::Riesz { alpha } => Some(Self::riesz_constant(*alpha, nu, self.dim) * t.powf(-alpha / 2.0)),
            KernelVariant::OrnsteinUhlenbeck { alpha, c } if *alpha == 2.0 => {
                Some((1.0 + 2.0 * c * nu * t).powf(-d / 2.0))
            }
            KernelVariant::Cauchy => Some(cauchy_k1d(nu * t).powi(self.dim as i32)),
            KernelVariant::BoxIndicator { a } => {
                Some((2.0 * normal_cdf(a / (nu * t).sqrt()) - 1.0).powi(self.dim as i32))
            }
            _ => None,
        }
    }

    /// `k(t) = E f(B_t)` with `B` a Brownian motion of variance `ν t` per
    /// coordinate; closed form when available, quadrature otherwise.
    pub fn k_of_t(&self, p: &HeatParams, t: f64) -> Result<f64, KernelError> {
        check_time(t)?;
        self.check_params(p)?;
        if let Some(v) = self.k_closed_form(p, t) {
            return Ok(v);
        }
        self.k_quadrature(p, t)
    }

    /// `k(t)` by quadrature of `∫ f(z) G(t, z) dz`, ignoring closed forms.
    pub fn k_quadrature(&self, p: &HeatParams, t: f64) -> Result<f64, KernelError> {
        check_time(t)?;
        self.check_params(p)?;
        self.smoothed_quadrature(p, t, &vec![0.0; self.dim], &QuadOptions::default())
    }

    fn check_params(&self, p: &HeatParams) -> Result<(), KernelError> {
        if p.dim != self.dim {
            return Err(KernelError::DimensionMismatch {
                expected: self.dim,
                got: p.dim,
            });
        }
        Ok(())
    }

    /// `h_1(t) = ∫_0^t k(s) ds` in closed form when available.
    pub fn h1_closed_form(&self, p: &HeatParams, t: f64) -> Option<f64> {
        let nu = p.nu;
        let d = self.dim as f64;
        match &self.variant {
            KernelVariant::Constant { level } => Some(level * t),
            KernelVariant::WhiteNoise1D => Some((2.0 * t / (PI * nu)).sqrt()),
            KernelVariant::Riesz { alpha } => {
                let e = 1.0 - alpha / 2.0;
                Some(Self::riesz_constant(*alpha, nu, self.dim) * t.powf(e) / e)
            }
            KernelVariant::OrnsteinUhlenbeck { alpha, c } if *alpha == 2.0 => {
                let b = 2.0 * c * nu;
                if self.dim == 2 {
                    Some((b * t).ln_1p() / b)
                } else {
                    let e = 1.0 - d / 2.0;
                    Some(((1.0 + b * t).powf(e) - 1.0) / (e * b))
                }
            }
            _ => None,
        }
    }

    /// `h_1(t) = ∫_0^t k(s) ds`.
    pub fn h1(&self, p: &HeatParams, t: f64) -> Result<f64, KernelError> {
        if t == 0.0 {
            return Ok(0.0);
        }
        check_time(t)?;
        if let Some(v) = self.h1_closed_form(p, t) {
            return Ok(v);
        }
        let w = SingularWeight::new(self.k_singularity())?;
        let e = self.k_singularity();
        let r = integrate_singular(
            |s| self.k_of_t(p, s).map_or(f64::NAN, |k| k * s.powf(-e)),
            0.0,
            t,
            w,
            &QuadOptions::default(),
        )?;
        Ok(r.value)
    }

    /// `∫ f(z) G(τ, z + m) dz = E f(X - m)`, `X ~ N(0, ντ I)`: the kernel
    /// smoothed by the heat semigroup and displaced by `m`.
    pub fn smoothed(&self, p: &HeatParams, tau: f64, m: &[f64]) -> Result<f64, KernelError> {
        check_time(tau)?;
        self.check_params(p)?;
        if m.len() != self.dim {
            return Err(KernelError::DimensionMismatch {
                expected: self.dim,
                got: m.len(),
            });
        }
        let nu = p.nu;
        let var = nu * tau;
        let r2 = norm2(m);
        match &self.variant {
            KernelVariant::Constant { level } => Ok(*level),
            KernelVariant::WhiteNoise1D => Ok(heat_kernel_r2(nu, 1, tau, r2)),
            KernelVariant::OrnsteinUhlenbeck { alpha, c } if *alpha == 2.0 => {
                let s = 1.0 + 2.0 * c * var;
                Ok(s.powf(-(self.dim as f64) / 2.0) * (-c * r2 / s).exp())
            }
            KernelVariant::BoxIndicator { a } => {
                let sd = var.sqrt();
                Ok(m.iter()
                    .map(|mi| normal_cdf((a - mi) / sd) - normal_cdf((-a - mi) / sd))
                    .product())
            }
            KernelVariant::Riesz { alpha } => Ok(riesz_smoothed(*alpha, self.dim, var, r2)),
            KernelVariant::Cauchy => {
                let mut prod = 1.0;
                for mi in m {
                    prod *= cauchy_smoothed_1d(var, *mi)?;
                }
                Ok(prod)
            }
            _ => self.smoothed_quadrature(p, tau, m, &QuadOptions::default()),
        }
    }

    fn smoothed_quadrature(&self, p: &HeatParams, tau: f64, m: &[f64], opts: &QuadOptions) -> Result<f64, KernelError> {
        if self.dim > MAX_QUADRATURE_DIM {
            return Err(KernelError::DimensionTooLarge(self.dim));
        }
        let var = p.nu * tau;
        let sd = var.sqrt();
        match &self.variant {
            KernelVariant::WhiteNoise1D => Err(KernelError::NotPointwise),
            KernelVariant::Cauchy => {
                let mut prod = 1.0;
                for mi in m {
                    prod *= gaussian_expectation_1d(|x| 1.0 / (1.0 + x * x), sd, *mi, &[], opts)?;
                }
                Ok(prod)
            }
            KernelVariant::BoxIndicator { a } => {
                let mut prod = 1.0;
                for mi in m {
                    prod *=
                        gaussian_expectation_1d(|x| if x.abs() <= *a { 1.0 } else { 0.0 }, sd, *mi, &[-a, *a], opts)?;
                }
                Ok(prod)
            }
            _ => {
                let r2 = norm2(m);
                let origin_exponent = match self.variant {
                    KernelVariant::Riesz { alpha } => -alpha,
                    _ => 0.0,
                };
                let kinks: Vec<f64> = match &self.variant {
                    KernelVariant::TabulatedRadial { radii, .. } => radii.clone(),
                    _ => Vec::new(),
                };
                let profile = |r: f64| self.radial_profile(r).expect("radial variant");
                if r2 == 0.0 {
                    let d = self.dim;
                    if !kinks.is_empty() {
                        // piecewise-linear profiles: integrate knot to knot
                        return Ok(radial_piecewise(&profile, &kinks, var, d, opts)?);
                    }
                    let norm = (2.0 * PI * var).powf(-(d as f64) / 2.0);
                    // k shrinks like the normalization once the Gaussian outgrows f
                    let ropts = RadialOptions {
                        origin_exponent,
                        scale: sd,
                        quad: QuadOptions::with_tolerances(opts.abs_tol * norm.min(1.0), opts.rel_tol),
                    };
                    let r = radial_integral(profile, |r| norm * (-r * r / (2.0 * var)).exp(), d, &ropts)?;
                    return Ok(r.value);
                }
                let shift = r2.sqrt();
                if self.dim == 1 {
                    let mut breaks: Vec<f64> = kinks.iter().flat_map(|k| [*k, -*k]).collect();
                    if origin_exponent != 0.0 {
                        breaks.push(0.0);
                    }
                    return gaussian_expectation_1d(|x| profile(x.abs()), sd, shift, &breaks, opts);
                }
                if origin_exponent != 0.0 {
                    return Err(KernelError::QuadratureFailure(
                        "displaced smoothing of singular radial kernels needs a closed form".into(),
                    ));
                }
                // split X into the component along m and the orthogonal part
                let perp_dim = self.dim - 1;
                let perp_norm = (2.0 * PI * var).powf(-(perp_dim as f64) / 2.0);
                let inner = |x1: f64| -> f64 {
                    let along = x1 + shift;
                    let ropts = RadialOptions {
                        origin_exponent: 0.0,
                        scale: sd,
                        quad: QuadOptions::with_tolerances(opts.abs_tol * 1e-2, opts.rel_tol),
                    };
                    radial_integral(
                        |r| profile((along * along + r * r).sqrt()),
                        |r| perp_norm * (-r * r / (2.0 * var)).exp(),
                        perp_dim,
                        &ropts,
                    )
                    .map_or(f64::NAN, |q| q.value)
                };
                gaussian_expectation_1d(inner, sd, 0.0, &[-shift], opts)
            }
        }
    }
}

fn radial_piecewise<F: Fn(f64) -> f64>(
    profile: &F,
    knots: &[f64],
    var: f64,
    d: usize,
    opts: &QuadOptions,
) -> Result<f64, QuadratureError> {
    let area = crate::quadrature::unit_sphere_area(d);
    let norm = (2.0 * PI * var).powf(-(d as f64) / 2.0);
    let g = |r: f64| profile(r) * norm * (-r * r / (2.0 * var)).exp() * r.powi(d as i32 - 1);
    let mut total = 0.0;
    let mut lo = 0.0;
    for &k in knots.iter().filter(|k| **k > 0.0) {
        total += integrate(g, lo, k, opts)?.value;
        lo = k;
    }
    Ok(area * total)
}

/// `E g(X + shift)` for `X ~ N(0, sd^2)`, with optional break points of `g`.
fn gaussian_expectation_1d<F: Fn(f64) -> f64>(
    g: F,
    sd: f64,
    shift: f64,
    breaks: &[f64],
    opts: &QuadOptions,
) -> Result<f64, KernelError> {
    // substitute y = x + shift so that break points of g stay fixed
    let density = |y: f64| {
        let z = (y - shift) / sd;
        (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt())
    };
    let lo = shift - 12.0 * sd;
    let hi = shift + 12.0 * sd;
    let mut cuts: Vec<f64> = breaks.iter().copied().filter(|b| *b > lo && *b < hi).collect();
    cuts.push(shift);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut pts = vec![lo];
    pts.extend(cuts);
    pts.push(hi);
    let mut total = 0.0;
    for w in pts.windows(2) {
        if w[1] > w[0] {
            total += integrate(|y| g(y) * density(y), w[0], w[1], opts)?.value;
        }
    }
    Ok(total)
}

/// One-dimensional Cauchy factor `E (1 + X^2)^{-1}` for `X ~ N(0, var)`.
fn cauchy_k1d(var: f64) -> f64 {
    let sd = var.sqrt();
    (PI / 2.0).sqrt() / sd * erfcx(1.0 / (sd * std::f64::consts::SQRT_2))
}

fn cauchy_smoothed_1d(var: f64, m: f64) -> Result<f64, KernelError> {
    if m == 0.0 {
        return Ok(cauchy_k1d(var));
    }
    gaussian_expectation_1d(|x| 1.0 / (1.0 + x * x), var.sqrt(), m, &[0.0], &QuadOptions::default())
}

/// `E |X + m|^{-α}` for `X ~ N(0, var I_d)` via the noncentral moment
/// `σ^{-α} 2^{-α/2} Γ((d-α)/2)/Γ(d/2) e^{-x} ₁F₁((d-α)/2; d/2; x)`,
/// `x = |m|^2 / (2 var)`.
fn riesz_smoothed(alpha: f64, dim: usize, var: f64, r2: f64) -> f64 {
    let d = dim as f64;
    let x = r2 / (2.0 * var);
    let base =
        var.powf(-alpha / 2.0) * (-alpha / 2.0 * 2f64.ln() + ln_gamma((d - alpha) / 2.0) - ln_gamma(d / 2.0)).exp();
    if x == 0.0 {
        return base;
    }
    if x > 5e4 {
        // far field: |m|^{-α} (1 + α(α + 2 - d) var / (2|m|^2))
        let r = r2.sqrt();
        return r.powf(-alpha) * (1.0 + alpha * (alpha + 2.0 - d) * var / (2.0 * r2));
    }
    let a = (d - alpha) / 2.0;
    let b = d / 2.0;
    base * (ln_kummer_positive(a, b, x) - x).exp()
}

/// `ln ₁F₁(a; b; x)` for `a, b, x > 0` by log-space summation of the
/// positive series.
fn ln_kummer_positive(a: f64, b: f64, x: f64) -> f64 {
    let lnx = x.ln();
    let mut ln_term = 0.0f64;
    let mut ln_scale = 0.0f64;
    let mut acc = 1.0;
    let mut n = 0.0;
    loop {
        ln_term += (a + n).ln() - (b + n).ln() + lnx - (n + 1.0).ln();
        n += 1.0;
        if ln_term > ln_scale {
            acc = acc * (ln_scale - ln_term).exp() + 1.0;
            ln_scale = ln_term;
        } else {
            acc += (ln_term - ln_scale).exp();
        }
        if n > x && ln_term < ln_scale + acc.ln() - 40.0 {
            break;
        }
        if n > 1e7 {
            break;
        }
    }
    ln_scale + acc.ln()
}

fn interpolate_table(radii: &[f64], values: &[f64], r: f64) -> f64 {
    let last = radii.len() - 1;
    if r > radii[last] {
        return 0.0;
    }
    if r <= radii[0] {
        return values[0];
    }
    let j = radii.partition_point(|&x| x <= r).min(last).max(1);
    let (r0, r1) = (radii[j - 1], radii[j]);
    let w = (r - r0) / (r1 - r0);
    values[j - 1] * (1.0 - w) + values[j] * w
}

/// Exponential-moment metadata: `∫ e^{β|x|} μ(dx) = value`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct ExpMoment {
    pub beta: f64,
    pub value: f64,
}

type DensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Nonnegative density supported in an axis-aligned box.
#[derive(Clone)]
pub struct Density {
    func: DensityFn,
    bounds: Vec<(f64, f64)>,
}

impl fmt::Debug for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Density").field("bounds", &self.bounds).finish()
    }
}

impl PartialEq for Density {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.func, &other.func) && self.bounds == other.bounds
    }
}

impl Density {
    pub fn from_fn<F>(bounds: Vec<(f64, f64)>, f: F) -> Result<Self, KernelError>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if bounds.is_empty() || bounds.iter().any(|(a, b)| !(b > a) || !a.is_finite() || !b.is_finite()) {
            return Err(KernelError::InvalidMeasure(
                "density bounds must be finite, nonempty boxes".into(),
            ));
        }
        Ok(Self {
            func: Arc::new(f),
            bounds,
        })
    }

    /// One-dimensional density from `(x, value)` samples, linear in between
    /// and zero outside.
    pub fn from_table_1d(xs: Vec<f64>, values: Vec<f64>) -> Result<Self, KernelError> {
        if xs.len() < 2 || xs.len() != values.len() || xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(KernelError::InvalidMeasure(
                "density table needs >= 2 rows with strictly increasing x".into(),
            ));
        }
        if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(KernelError::InvalidMeasure("density values must be nonnegative".into()));
        }
        let bounds = vec![(xs[0], xs[xs.len() - 1])];
        Self::from_fn(bounds, move |x: &[f64]| {
            let v = x[0];
            if v < xs[0] || v > xs[xs.len() - 1] {
                return 0.0;
            }
            let j = xs.partition_point(|&a| a <= v).clamp(1, xs.len() - 1);
            let w = (v - xs[j - 1]) / (xs[j] - xs[j - 1]);
            values[j - 1] * (1.0 - w) + values[j] * w
        })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        if x.iter().zip(&self.bounds).any(|(v, (a, b))| v < a || v > b) {
            return 0.0;
        }
        (self.func)(x)
    }

    /// Tensor Gauss-Legendre nodes covering `window` (per-axis intervals),
    /// panels no wider than `panel`, 8 nodes per panel.
    pub fn tensor_nodes(&self, window: &[(f64, f64)], panel: f64, max_per_dim: usize) -> Vec<(Point, f64)> {
        let (gx, gw) = gauss_legendre(8);
        let axes: Vec<Vec<(f64, f64)>> = self
            .bounds
            .iter()
            .zip(window)
            .map(|(&(a, b), &(wa, wb))| {
                let lo = a.max(wa);
                let hi = b.min(wb);
                if !(hi > lo) {
                    return Vec::new();
                }
                let panels = (((hi - lo) / panel).ceil() as usize).clamp(1, (max_per_dim / 8).max(1));
                let h = (hi - lo) / panels as f64;
                let mut out = Vec::with_capacity(panels * 8);
                for k in 0..panels {
                    let c = lo + (k as f64 + 0.5) * h;
                    for (x, w) in gx.iter().zip(&gw) {
                        out.push((c + 0.5 * h * x, 0.5 * h * w));
                    }
                }
                out
            })
            .collect();
        let mut nodes: Vec<(Point, f64)> = vec![(Vec::new(), 1.0)];
        for axis in &axes {
            let mut next = Vec::with_capacity(nodes.len() * axis.len());
            for (p, w) in &nodes {
                for (x, wx) in axis {
                    let mut q = p.clone();
                    q.push(*x);
                    next.push((q, w * wx));
                }
            }
            nodes = next;
        }
        nodes
            .into_iter()
            .map(|(p, w)| {
                let v = self.eval(&p);
                (p, w * v)
            })
            .filter(|(_, w)| *w != 0.0)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeasureVariant {
    DiracAt(Point),
    Atoms(Vec<(Point, f64)>),
    Density(Density),
    LebesgueScaled(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialMeasure {
    variant: MeasureVariant,
    dim: usize,
    exp_moment: Option<ExpMoment>,
}

impl InitialMeasure {
    pub fn new(variant: MeasureVariant, dim: usize) -> Result<Self, KernelError> {
        let bad = |m: &str| Err(KernelError::InvalidMeasure(m.to_string()));
        match &variant {
            MeasureVariant::DiracAt(z) => {
                if z.len() != dim {
                    return bad("Dirac location has the wrong dimension");
                }
            }
            MeasureVariant::Atoms(atoms) => {
                if atoms.is_empty() {
                    return bad("atom list is empty");
                }
                for (z, w) in atoms {
                    if z.len() != dim {
                        return bad("atom location has the wrong dimension");
                    }
                    if !(*w > 0.0 && w.is_finite()) {
                        return bad("atom weights must be positive");
                    }
                }
            }
            MeasureVariant::Density(dens) => {
                if dens.dim() != dim {
                    return bad("density has the wrong dimension");
                }
            }
            MeasureVariant::LebesgueScaled(c) => {
                if !(*c > 0.0 && c.is_finite()) {
                    return bad("Lebesgue scale must be positive");
                }
            }
        }
        Ok(Self {
            variant,
            dim,
            exp_moment: None,
        })
    }

    pub fn dirac(z0: Point) -> Result<Self, KernelError> {
        let d = z0.len();
        Self::new(MeasureVariant::DiracAt(z0), d)
    }

    pub fn atoms(atoms: Vec<(Point, f64)>) -> Result<Self, KernelError> {
        let d = atoms.first().map_or(0, |a| a.0.len());
        Self::new(MeasureVariant::Atoms(atoms), d)
    }

    pub fn lebesgue(c: f64, dim: usize) -> Result<Self, KernelError> {
        Self::new(MeasureVariant::LebesgueScaled(c), dim)
    }

    pub fn density(d: Density) -> Result<Self, KernelError> {
        let dim = d.dim();
        Self::new(MeasureVariant::Density(d), dim)
    }

    pub fn with_exp_moment(mut self, m: ExpMoment) -> Result<Self, KernelError> {
        if !(m.beta > 0.0 && m.value > 0.0 && m.value.is_finite()) {
            return Err(KernelError::InvalidMeasure(
                "exponential moment needs beta > 0 and a finite positive value".into(),
            ));
        }
        self.exp_moment = Some(m);
        Ok(self)
    }

    pub fn variant(&self) -> &MeasureVariant {
        &self.variant
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Atoms of a discrete measure (a Dirac mass counts as one atom).
    pub fn as_atoms(&self) -> Option<Vec<(Point, f64)>> {
        match &self.variant {
            MeasureVariant::DiracAt(z) => Some(vec![(z.clone(), 1.0)]),
            MeasureVariant::Atoms(a) => Some(a.clone()),
            _ => None,
        }
    }

    /// `∫ e^{β|x|} μ(dx)`: exact for discrete measures, from metadata
    /// otherwise (`None` when unknown or infinite).
    pub fn exp_moment(&self, beta: f64) -> Option<f64> {
        if let Some(atoms) = self.as_atoms() {
            return Some(atoms.iter().map(|(z, w)| w * (beta * norm2(z).sqrt()).exp()).sum());
        }
        match self.exp_moment {
            Some(m) if m.beta >= beta => Some(m.value),
            _ => None,
        }
    }

    pub fn exp_moment_meta(&self) -> Option<ExpMoment> {
        self.exp_moment
    }

    /// `J_0(t, x) = (μ * G(t, ·))(x)`.
    pub fn j0(&self, p: &HeatParams, t: f64, x: &[f64]) -> Result<f64, KernelError> {
        check_time(t)?;
        if x.len() != self.dim || p.dim != self.dim {
            return Err(KernelError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let g = |z: &[f64]| {
            let r2: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
            heat_kernel_r2(p.nu, p.dim, t, r2)
        };
        match &self.variant {
            MeasureVariant::DiracAt(z) => Ok(g(z)),
            MeasureVariant::Atoms(atoms) => Ok(atoms.iter().map(|(z, w)| w * g(z)).sum()),
            MeasureVariant::LebesgueScaled(c) => Ok(*c),
            MeasureVariant::Density(dens) => {
                if self.dim > 3 {
                    return Err(KernelError::QuadratureFailure(
                        "density initial data supported for d <= 3".into(),
                    ));
                }
                let sd = (p.nu * t).sqrt();
                let window: Vec<(f64, f64)> = x.iter().map(|v| (v - 10.0 * sd, v + 10.0 * sd)).collect();
                let nodes = dens.tensor_nodes(&window, sd.max(1e-3), 512);
                let v: f64 = nodes.iter().map(|(z, w)| w * g(z)).sum();
                if !v.is_finite() {
                    return Err(KernelError::QuadratureFailure("non-finite density integral".into()));
                }
                Ok(v)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eval_examples() {
        let k = CorrelationKernel::riesz(1.0, 3).unwrap();
        assert_eq!(k.eval_f(&[2.0, 0.0, 0.0]).unwrap(), 0.5);
        assert_eq!(k.eval_f(&[0.0, 0.0, 0.0]), Err(KernelError::SingularAtOrigin));
        let ou = CorrelationKernel::ou(2.0, 1.0, 2).unwrap();
        assert_relative_eq!(ou.eval_f(&[0.6, 0.8]).unwrap(), (-1.0f64).exp(), max_relative = 1e-15);
        assert_eq!(
            CorrelationKernel::white_noise().eval_f(&[0.0]),
            Err(KernelError::NotPointwise)
        );
        assert_eq!(
            CorrelationKernel::constant(1.0, 4)
                .unwrap()
                .eval_f(&[1.0, 2.0, 3.0, 4.0])
                .unwrap(),
            1.0
        );
    }

    #[test]
    fn invalid_kernels_rejected() {
        assert!(CorrelationKernel::riesz(1.0, 1).is_err());
        assert!(CorrelationKernel::riesz(2.0, 3).is_err());
        assert!(CorrelationKernel::ou(2.5, 1.0, 1).is_err());
        assert!(CorrelationKernel::ou(1.0, 0.0, 1).is_err());
        assert!(CorrelationKernel::tabulated(vec![0.0, 0.0], vec![1.0, 1.0], 1).is_err());
    }

    #[test]
    fn heat_kernel_examples() {
        let p = HeatParams::new(1.0, 1).unwrap();
        assert_relative_eq!(
            heat_kernel(&p, 1.0 / (2.0 * PI), &[0.0]).unwrap(),
            1.0,
            max_relative = 1e-15
        );
        let p2 = HeatParams::new(2.0, 2).unwrap();
        let expected = (-0.5f64).exp() / (4.0 * PI);
        assert_relative_eq!(
            heat_kernel(&p2, 1.0, &[1.0, 1.0]).unwrap(),
            expected,
            max_relative = 1e-15
        );
        assert!(heat_kernel(&p, 0.0, &[0.0]).is_err());
    }

    #[test]
    fn gauss_factor_doubling() {
        let p = HeatParams::new(1.3, 2).unwrap();
        let half = HeatParams::new(0.65, 2).unwrap();
        let quarter = HeatParams::new(0.325, 2).unwrap();
        let x = [0.4, -0.7];
        let a = gauss_factor(&half, 0.8, &x).unwrap();
        assert_relative_eq!(a * a, gauss_factor(&quarter, 0.8, &x).unwrap(), max_relative = 1e-14);
        assert_eq!(gauss_factor(&p, 2.0, &[0.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn riesz_quadrature_matches_closed_form() {
        let p = HeatParams::new(1.0, 3).unwrap();
        for alpha in [0.5, 1.0, 1.5] {
            let k = CorrelationKernel::riesz(alpha, 3).unwrap();
            for t in [1e-3, 0.1, 1.0, 100.0] {
                let q = k.k_quadrature(&p, t).unwrap();
                let c = k.k_closed_form(&p, t).unwrap();
                assert_relative_eq!(q, c, max_relative = 1e-7);
            }
        }
    }

    #[test]
    fn alt_constants_are_one_over_d() {
        for d in 1..=5 {
            let ratio =
                CorrelationKernel::riesz_constant_alt(0.5, 1.7, d) / CorrelationKernel::riesz_constant(0.5, 1.7, d);
            assert_relative_eq!(ratio, 1.0 / d as f64, max_relative = 1e-13);
        }
    }

    #[test]
    fn box_and_cauchy_closed_forms_match_quadrature() {
        let p = HeatParams::new(0.7, 2).unwrap();
        let b = CorrelationKernel::box_indicator(0.8, 2).unwrap();
        let c = CorrelationKernel::cauchy(2).unwrap();
        for t in [0.01, 1.0, 30.0] {
            assert_relative_eq!(
                b.k_quadrature(&p, t).unwrap(),
                b.k_of_t(&p, t).unwrap(),
                max_relative = 1e-7
            );
            assert_relative_eq!(
                c.k_quadrature(&p, t).unwrap(),
                c.k_of_t(&p, t).unwrap(),
                max_relative = 1e-7
            );
        }
    }

    #[test]
    fn displaced_smoothing_paths_agree() {
        // OU(2) closed form vs the generic nested quadrature used for OU(α)
        let p = HeatParams::new(1.0, 3).unwrap();
        let closed = CorrelationKernel::ou(2.0, 1.0, 3).unwrap();
        let generic = CorrelationKernel::tabulated(
            (0..=4000).map(|i| i as f64 * 0.002).collect(),
            (0..=4000).map(|i| (-(i as f64 * 0.002).powi(2)).exp()).collect(),
            3,
        )
        .unwrap();
        let m = [0.3, -0.4, 0.0];
        let a = closed.smoothed(&p, 0.5, &m).unwrap();
        let b = generic.smoothed(&p, 0.5, &m).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-5);
    }

    #[test]
    fn riesz_displaced_matches_direct_quadrature_in_3d() {
        // E|X+m|^{-1} in d=3 has the closed form erf(|m|/√(2v))/|m|
        let p = HeatParams::new(1.0, 3).unwrap();
        let k = CorrelationKernel::riesz(1.0, 3).unwrap();
        let m = [1.0, 0.5, 0.0];
        let r = norm2(&m).sqrt();
        let v: f64 = 0.4;
        let expected = crate::special::erf(r / (2.0 * v).sqrt()) / r;
        assert_relative_eq!(k.smoothed(&p, v, &m).unwrap(), expected, max_relative = 1e-10);
    }

    #[test]
    fn j0_examples() {
        let p = HeatParams::new(1.0, 1).unwrap();
        let mu = InitialMeasure::atoms(vec![(vec![-1.0], 0.5), (vec![1.0], 0.5)]).unwrap();
        let x = 0.3;
        let expected =
            0.5 * heat_kernel(&p, 0.7, &[x + 1.0]).unwrap() + 0.5 * heat_kernel(&p, 0.7, &[x - 1.0]).unwrap();
        assert_relative_eq!(mu.j0(&p, 0.7, &[x]).unwrap(), expected, max_relative = 1e-15);
        let leb = InitialMeasure::lebesgue(2.5, 1).unwrap();
        assert_eq!(leb.j0(&p, 3.0, &[1.0]).unwrap(), 2.5);
        let dens = Density::from_fn(vec![(-50.0, 50.0)], |_| 1.0).unwrap();
        let dm = InitialMeasure::density(dens).unwrap();
        assert_relative_eq!(dm.j0(&p, 1.0, &[0.0]).unwrap(), 1.0, max_relative = 1e-10);
    }

    #[test]
    fn tabulated_interpolation() {
        let k = CorrelationKernel::tabulated(vec![0.0, 1.0, 2.0], vec![1.0, 0.5, 0.25], 1).unwrap();
        assert_relative_eq!(k.eval_f(&[0.5]).unwrap(), 0.75);
        assert_eq!(k.eval_f(&[-2.5]).unwrap(), 0.0);
    }
}
