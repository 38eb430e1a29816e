//! `Υ(β) = (2π)^{-d} ∫ f̂(dξ) / (β + |ξ|^2)`, Dalang's condition and the
//! three equivalent conditions for a phase transition: `Υ(0) < ∞`,
//! `∫ f(z) |z|^{2-d} dz < ∞` and `lim_{t→∞} h_1(t) < ∞`.
//!
//! `Υ` is computed from `k` through the Laplace identity
//! `Υ(2β/ν) = (ν/2) ∫_0^∞ e^{-βt} k(t) dt`.

use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::kernel::{CorrelationKernel, HeatParams, KernelError, KernelVariant};
use crate::quadrature::{
    integrate_singular, integrate_to_infinity, radial_integral, unit_sphere_area, QuadOptions, QuadratureError,
    RadialOptions, SingularWeight,
};
use crate::special::{erf, erfcx, gamma, ln_gamma, upper_incomplete_gamma};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("beta must be positive, got {0}")]
    InvalidBeta(f64),
    #[error("lim h_1 disagrees: direct {direct}, via Upsilon(0) {via_upsilon}")]
    InconsistentLimits { direct: Limit, via_upsilon: Limit },
    #[error("phase-transition conditions disagree for {}", .0.kernel)]
    EquivalenceViolation(Box<SpectralReport>),
}

/// A finite value or a divergence verdict.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Limit {
    Finite(f64),
    Divergent,
}

impl Limit {
    pub fn is_finite(&self) -> bool {
        matches!(self, Limit::Finite(_))
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Limit::Finite(v) => Some(*v),
            Limit::Divergent => None,
        }
    }
}

impl fmt::Display for Limit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Limit::Finite(v) => write!(f, "{v:.10e}"),
            Limit::Divergent => write!(f, "DIVERGENT"),
        }
    }
}

/// Heuristics for declaring a monotone limit divergent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceRule {
    /// Values above `cap` that still grow by more than `growth` per step
    /// are divergent.
    pub cap: f64,
    pub growth: f64,
    /// Convergence needs the geometric tail estimate below `rel_tol`.
    pub rel_tol: f64,
    /// Increments that fail to shrink this many halvings in a row mean
    /// divergence.
    pub growing_run: usize,
    pub max_halvings: usize,
}

impl Default for DivergenceRule {
    fn default() -> Self {
        Self {
            cap: 1e12,
            growth: 0.01,
            rel_tol: 1e-6,
            growing_run: 8,
            max_halvings: 90,
        }
    }
}

fn laplace_quad() -> QuadOptions {
    QuadOptions::with_tolerances(1e-15, 1e-10)
}

/// `Υ(β)` from a closed form when one exists for the variant.
pub fn upsilon_closed_form(kernel: &CorrelationKernel, beta: f64) -> Option<f64> {
    let d = kernel.dim() as f64;
    match kernel.variant() {
        KernelVariant::WhiteNoise1D => Some(0.5 / beta.sqrt()),
        KernelVariant::Constant { level } => Some(level / beta),
        KernelVariant::OrnsteinUhlenbeck { alpha, c } if *alpha == 2.0 => {
            // f(z) = exp(-c|z|^2)
            let x = beta / (4.0 * c);
            let g = upper_incomplete_gamma(1.0 - d / 2.0, x).ok()?;
            Some(2f64.powf(-d) * c.powf(-d / 2.0) * x.exp() * beta.powf(d / 2.0 - 1.0) * g)
        }
        _ => None,
    }
}

/// Brownian (constant kernel) value under the alternative Fourier normalisation, `(2π)^{-d} β^{-1}`.
pub fn upsilon_constant_alt(beta: f64, d: usize) -> f64 {
    (2.0 * std::f64::consts::PI).powi(-(d as i32)) / beta
}

/// `Υ(β)` by Laplace quadrature of `k`, ignoring closed forms.
pub fn upsilon_laplace(kernel: &CorrelationKernel, p: &HeatParams, beta: f64) -> Result<Limit, SpectralError> {
    if !(beta > 0.0) {
        return Err(SpectralError::InvalidBeta(beta));
    }
    let nu = p.nu();
    let b = 0.5 * nu * beta;
    let opts = laplace_quad();
    let e = kernel.k_singularity();
    let k = |t: f64| kernel.k_of_t(p, t).unwrap_or(f64::NAN);
    // [0, 1] with the k singularity stripped, then [1, ∞) as t = e^u
    let head = integrate_singular(
        |t| k(t) * (-b * t).exp() * t.powf(-e),
        0.0,
        1.0,
        SingularWeight::new(e).map_err(q)?,
        &opts,
    );
    let tail = integrate_to_infinity(
        |u| {
            let t = u.exp();
            let damp = -b * t + u;
            if damp < -745.0 {
                0.0
            } else {
                k(t) * damp.exp()
            }
        },
        0.0,
        1.0,
        &opts,
    );
    match (head, tail) {
        (Ok(h), Ok(t)) => Ok(Limit::Finite(0.5 * nu * (h.value + t.value))),
        (Err(QuadratureError::DivergentIntegral { .. }), _) | (_, Err(QuadratureError::DivergentIntegral { .. })) => {
            Ok(Limit::Divergent)
        }
        (Err(err), _) | (_, Err(err)) => Err(q(err)),
    }
}

fn q(e: QuadratureError) -> SpectralError {
    SpectralError::Kernel(e.into())
}

/// `Υ(β)`: closed form when available, Laplace quadrature otherwise.
pub fn upsilon(kernel: &CorrelationKernel, p: &HeatParams, beta: f64) -> Result<Limit, SpectralError> {
    if !(beta > 0.0) {
        return Err(SpectralError::InvalidBeta(beta));
    }
    if let Some(v) = upsilon_closed_form(kernel, beta) {
        return Ok(if v.is_finite() {
            Limit::Finite(v)
        } else {
            Limit::Divergent
        });
    }
    upsilon_laplace(kernel, p, beta)
}

/// Classifies a nondecreasing sequence `v_0, v_1, ...` produced by `next`.
fn monotone_limit<F>(mut next: F, rule: &DivergenceRule) -> Result<Limit, SpectralError>
where
    F: FnMut(usize) -> Result<Limit, SpectralError>,
{
    let mut prev: Option<f64> = None;
    let mut prev_inc: Option<f64> = None;
    let mut shrinking = 0;
    let mut growing = 0;
    for k in 0..rule.max_halvings {
        let v = match next(k)? {
            Limit::Finite(v) => v,
            Limit::Divergent => return Ok(Limit::Divergent),
        };
        if let Some(pv) = prev {
            let inc = (v - pv).max(0.0);
            if v > rule.cap && inc > rule.growth * pv {
                return Ok(Limit::Divergent);
            }
            if inc == 0.0 {
                return Ok(Limit::Finite(v));
            }
            if let Some(pi) = prev_inc {
                let r = inc / pi;
                if r < 0.9 {
                    shrinking += 1;
                } else {
                    shrinking = 0;
                }
                growing = if r >= 1.0 { growing + 1 } else { 0 };
                if growing >= rule.growing_run {
                    return Ok(Limit::Divergent);
                }
                if shrinking >= 3 && inc * r / (1.0 - r) <= rule.rel_tol * v {
                    return Ok(Limit::Finite(v + inc * r / (1.0 - r)));
                }
            }
            prev_inc = Some(inc);
        }
        prev = Some(v);
    }
    Ok(Limit::Divergent)
}

/// `Υ(0) = lim_{β→0} Υ(β)` along `β = 2^{-k}`.
pub fn upsilon_zero(kernel: &CorrelationKernel, p: &HeatParams) -> Result<Limit, SpectralError> {
    upsilon_zero_with(kernel, p, &DivergenceRule::default())
}

pub fn upsilon_zero_with(
    kernel: &CorrelationKernel,
    p: &HeatParams,
    rule: &DivergenceRule,
) -> Result<Limit, SpectralError> {
    monotone_limit(|k| upsilon(kernel, p, 2f64.powi(-(k as i32))), rule)
}

/// `∫_{R^d} f(z) |z|^{2-d} dz`; divergent for `d ≤ 2`.
pub fn iff2_integral(kernel: &CorrelationKernel) -> Result<Limit, SpectralError> {
    let d = kernel.dim();
    if d <= 2 {
        return Ok(Limit::Divergent);
    }
    let df = d as f64;
    let opts = QuadOptions::with_tolerances(1e-14, 1e-10);
    let result = match kernel.variant() {
        KernelVariant::Cauchy | KernelVariant::BoxIndicator { .. } => {
            // |z|^{2-d} = Γ(d/2-1)^{-1} ∫_0^∞ s^{d/2-2} e^{-s|z|^2} ds and the
            // Gaussian factorizes over coordinates
            let one_d = |s: f64| -> f64 {
                match kernel.variant() {
                    KernelVariant::Cauchy => std::f64::consts::PI * erfcx(s.sqrt()),
                    KernelVariant::BoxIndicator { a } => {
                        if s == 0.0 {
                            2.0 * a
                        } else {
                            (std::f64::consts::PI / s).sqrt() * erf(a * s.sqrt())
                        }
                    }
                    _ => unreachable!(),
                }
            };
            let e = df / 2.0 - 2.0;
            let g = |s: f64| one_d(s).powi(d as i32);
            let head = integrate_singular(g, 0.0, 1.0, SingularWeight::new(e).map_err(q)?, &opts);
            let tail = integrate_to_infinity(|s| s.powf(e) * g(s), 1.0, 1.0, &opts);
            match (head, tail) {
                (Ok(h), Ok(t)) => Ok((h.value + t.value) / gamma(df / 2.0 - 1.0).unwrap_or(f64::NAN)),
                (Err(e), _) | (_, Err(e)) => Err(e),
            }
        }
        KernelVariant::WhiteNoise1D => return Ok(Limit::Divergent),
        _ => {
            let origin = match kernel.variant() {
                KernelVariant::Riesz { alpha } => -alpha + 2.0 - df,
                _ => 2.0 - df,
            };
            radial_integral(
                |r| kernel.radial_profile(r).unwrap_or(f64::NAN),
                |r| r.powf(2.0 - df),
                d,
                &RadialOptions {
                    origin_exponent: origin,
                    scale: 1.0,
                    quad: opts,
                },
            )
            .map(|r| r.value)
        }
    };
    match result {
        Ok(v) if v.is_finite() => Ok(Limit::Finite(v)),
        Ok(_) | Err(QuadratureError::DivergentIntegral { .. }) => Ok(Limit::Divergent),
        Err(e) => Err(q(e)),
    }
}

/// `lim_{t→∞} h_1(t) = ∫_0^∞ k`, by doubling chunks.
pub fn h1_limit_direct(kernel: &CorrelationKernel, p: &HeatParams) -> Result<Limit, SpectralError> {
    let head = kernel.h1(p, 1.0)?;
    let tail = integrate_to_infinity(
        |t| kernel.k_of_t(p, t).unwrap_or(f64::NAN),
        1.0,
        1.0,
        &QuadOptions::with_tolerances(1e-14, 1e-9),
    );
    match tail {
        Ok(t) => Ok(Limit::Finite(head + t.value)),
        Err(QuadratureError::DivergentIntegral { .. }) => Ok(Limit::Divergent),
        Err(e) => Err(q(e)),
    }
}

/// `lim h_1` computed directly and as `(2/ν) Υ(0)`; both routes must agree
/// within 1% when finite.
pub fn h1_limit(kernel: &CorrelationKernel, p: &HeatParams) -> Result<Limit, SpectralError> {
    let direct = h1_limit_direct(kernel, p)?;
    let via = match upsilon_zero(kernel, p)? {
        Limit::Finite(v) => Limit::Finite(2.0 / p.nu() * v),
        Limit::Divergent => Limit::Divergent,
    };
    match (direct, via) {
        (Limit::Finite(a), Limit::Finite(b)) if (a - b).abs() <= 0.01 * a.abs().max(b.abs()) => Ok(direct),
        (Limit::Divergent, Limit::Divergent) => Ok(direct),
        _ => Err(SpectralError::InconsistentLimits {
            direct,
            via_upsilon: via,
        }),
    }
}

/// Summary of `Υ` and the three phase-transition conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    pub kernel: String,
    pub dim: usize,
    pub nu: f64,
    pub upsilon_at: Vec<(f64, Limit)>,
    pub upsilon_zero: Limit,
    pub iff2_value: Limit,
    pub h1_limit: Limit,
    pub h1_limit_via_upsilon: Limit,
    pub dalang_ok: bool,
    pub monotone: bool,
    pub consistent: bool,
    pub notes: Vec<String>,
}

impl SpectralReport {
    /// `key = value` lines.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("kernel = {}\n", self.kernel));
        s.push_str(&format!("dim = {}\n", self.dim));
        s.push_str(&format!("nu = {}\n", self.nu));
        s.push_str(&format!("dalang_ok = {}\n", self.dalang_ok));
        s.push_str(&format!("upsilon_zero = {}\n", self.upsilon_zero));
        s.push_str(&format!("iff2_value = {}\n", self.iff2_value));
        s.push_str(&format!("h1_limit = {}\n", self.h1_limit));
        s.push_str(&format!("h1_limit_via_upsilon = {}\n", self.h1_limit_via_upsilon));
        s.push_str(&format!("upsilon_monotone = {}\n", self.monotone));
        s.push_str(&format!("conditions_agree = {}\n", self.consistent));
        for n in &self.notes {
            s.push_str(&format!("note = {n}\n"));
        }
        s
    }

    /// `beta,upsilon` rows.
    pub fn beta_table_csv(&self) -> String {
        let mut s = String::from("beta,upsilon\n");
        for (b, v) in &self.upsilon_at {
            s.push_str(&format!("{b:e},{v}\n"));
        }
        s
    }
}

/// Default `β` table: `2^{-8}, ..., 2^{8}`.
pub fn default_beta_grid() -> Vec<f64> {
    (-8..=8).map(|k| 2f64.powi(k)).collect()
}

/// Assembles the report; disagreement among the three finite/divergent
/// verdicts is an error.
pub fn equivalence_report(kernel: &CorrelationKernel, p: &HeatParams) -> Result<SpectralReport, SpectralError> {
    equivalence_report_on(kernel, p, &default_beta_grid())
}

pub fn equivalence_report_on(
    kernel: &CorrelationKernel,
    p: &HeatParams,
    betas: &[f64],
) -> Result<SpectralReport, SpectralError> {
    let table: Result<Vec<(f64, Limit)>, SpectralError> =
        betas.par_iter().map(|&b| Ok((b, upsilon(kernel, p, b)?))).collect();
    let table = table?;
    let monotone = table.windows(2).all(|w| match (w[0].1, w[1].1) {
        (Limit::Finite(a), Limit::Finite(b)) => (w[1].0 > w[0].0) == (b < a) || a == b,
        _ => true,
    });
    let dalang_ok = upsilon(kernel, p, 1.0)?.is_finite();
    let u0 = upsilon_zero(kernel, p)?;
    let iff2 = iff2_integral(kernel)?;
    let direct = h1_limit_direct(kernel, p)?;
    let via = match u0 {
        Limit::Finite(v) => Limit::Finite(2.0 / p.nu() * v),
        Limit::Divergent => Limit::Divergent,
    };
    let mut notes = Vec::new();
    if let KernelVariant::Constant { .. } = kernel.variant() {
        notes.push(format!(
            "alternative normalisation gives Upsilon(1) = (2pi)^-d = {:.6e}; the definition gives {}",
            upsilon_constant_alt(1.0, kernel.dim()),
            upsilon(kernel, p, 1.0)?
        ));
    }
    let flags = [u0.is_finite(), iff2.is_finite(), direct.is_finite()];
    let mut consistent = flags.iter().all(|&f| f == flags[0]);
    if let (Limit::Finite(a), Limit::Finite(b)) = (direct, via) {
        if (a - b).abs() > 0.01 * a.abs().max(b.abs()) {
            consistent = false;
            notes.push(format!("lim h_1 routes differ: direct {a:.6e}, via Upsilon(0) {b:.6e}"));
        }
    }
    let report = SpectralReport {
        kernel: kernel.name().to_string(),
        dim: kernel.dim(),
        nu: p.nu(),
        upsilon_at: table,
        upsilon_zero: u0,
        iff2_value: iff2,
        h1_limit: direct,
        h1_limit_via_upsilon: via,
        dalang_ok,
        monotone,
        consistent,
        notes,
    };
    if !consistent {
        return Err(SpectralError::EquivalenceViolation(Box::new(report)));
    }
    Ok(report)
}

/// `Υ(β) = (ν/2) C Γ(1-α/2) (νβ/2)^{α/2-1}` for Riesz kernels, from
/// `k(t) = C t^{-α/2}`.
pub fn upsilon_riesz(alpha: f64, nu: f64, dim: usize, beta: f64) -> f64 {
    let c = CorrelationKernel::riesz_constant(alpha, nu, dim);
    let e = 1.0 - alpha / 2.0;
    0.5 * nu * c * (ln_gamma(e) - e * (0.5 * nu * beta).ln()).exp()
}

/// `∫ exp(-c|z|^2) |z|^{2-d} dz = |S^{d-1}| / (2c)`.
pub fn iff2_ou2(c: f64, dim: usize) -> f64 {
    unit_sphere_area(dim) / (2.0 * c)
}

/// Laplace integral `∫_0^∞ e^{-βt} k(t) dt` by plain adaptive quadrature on
/// `[0, T]` with `T` large; a check on [`upsilon_laplace`].
pub fn laplace_of_k_truncated(
    kernel: &CorrelationKernel,
    p: &HeatParams,
    beta: f64,
    t_max: f64,
) -> Result<f64, SpectralError> {
    let e = kernel.k_singularity();
    let r = integrate_singular(
        |t| kernel.k_of_t(p, t).unwrap_or(f64::NAN) * (-beta * t).exp() * t.powf(-e),
        0.0,
        t_max,
        SingularWeight::new(e).map_err(q)?,
        &laplace_quad(),
    )
    .map_err(q)?;
    Ok(r.value)
}
