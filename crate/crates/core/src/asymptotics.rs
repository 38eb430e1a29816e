//! Growth rates: `θ` from `Υ`, `θ*` from `H*`, the exponential bounds on
//! `H`, phase classification and the growth-index interval.

use std::f64::consts::{E, PI};

use thiserror::Error;

use crate::kernel::{heat_kernel, CorrelationKernel, HeatParams, InitialMeasure, KernelError};
use crate::moments::{ln_h_star_with, lower_gamma_factor, H1Table, HFamily, HOptions, MomentError};
use crate::spectral::{h1_limit_direct, upsilon, upsilon_zero, Limit, SpectralError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AsymptoticsError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("bound violated at t = {t}: H = {value:.9e} exceeds {bound:.9e}")]
    BoundViolated { t: f64, value: f64, bound: f64 },
    #[error("initial measure carries no exponential-moment metadata")]
    MissingExpMoment,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

type Result<T> = std::result::Result<T, AsymptoticsError>;

const THETA_REL_TOL: f64 = 1e-10;

fn upsilon_value(kernel: &CorrelationKernel, p: &HeatParams, beta: f64) -> Result<f64> {
    Ok(upsilon(kernel, p, beta)?.value().unwrap_or(f64::INFINITY))
}

/// `θ(ν, γ) = inf{β > 0 : Υ(2β/ν) < ν/(2γ)}`, by bracketing and bisection.
pub fn theta(p: &HeatParams, gamma: f64, kernel: &CorrelationKernel) -> Result<f64> {
    if !(gamma >= 0.0) {
        return Err(AsymptoticsError::InvalidInput(format!("gamma = {gamma}")));
    }
    if gamma == 0.0 {
        return Ok(0.0);
    }
    let nu = p.nu();
    let target = nu / (2.0 * gamma);
    if let Limit::Finite(u0) = upsilon_zero(kernel, p)? {
        if u0 < target {
            return Ok(0.0);
        }
    }
    let below = |beta: f64| -> Result<bool> { Ok(upsilon_value(kernel, p, 2.0 * beta / nu)? < target) };
    let mut hi = 1.0;
    while !below(hi)? {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(AsymptoticsError::InvalidInput("theta bracket failed".into()));
        }
    }
    let mut lo = hi / 2.0;
    while below(lo)? {
        lo /= 2.0;
        if lo < 1e-300 {
            return Ok(0.0);
        }
    }
    while hi - lo > THETA_REL_TOL * hi {
        let mid = 0.5 * (lo + hi);
        if below(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// `θ` for white noise under the alternative normalisation,
/// `λ^4 / ν` (with `γ = λ^2`).
pub fn theta_white_noise_alt(gamma: f64, nu: f64) -> f64 {
    gamma * gamma / nu
}

/// Node-by-node comparison of `H(t; γ)` with `e^{θt}` and, in the bounded
/// regime `2γΥ(0) < ν`, with `ν / (ν - 2γΥ(0))`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstHtRecord {
    pub gamma: f64,
    pub theta: f64,
    pub nodes: usize,
    /// `max_t H(t) / e^{θt}`.
    pub max_ratio_exp: f64,
    pub worst_t_exp: f64,
    /// Nodes with `H > e^{θt} (1 + 1e-6)`.
    pub exp_violations: usize,
    pub bounded_constant: Option<f64>,
    pub max_ratio_bounded: Option<f64>,
}

impl EstHtRecord {
    pub fn exp_bound_holds(&self) -> bool {
        self.exp_violations == 0
    }
}

pub const ESTHT_SLACK: f64 = 1e-6;

pub fn est_ht_bounds(
    fam: &mut HFamily,
    gamma: f64,
    kernel: &CorrelationKernel,
    p: &HeatParams,
    opts: &HOptions,
) -> Result<EstHtRecord> {
    if fam.y().iter().any(|v| *v != 0.0) {
        return Err(AsymptoticsError::InvalidInput(
            "est_ht_bounds needs the family at y = 0".into(),
        ));
    }
    let th = theta(p, gamma, kernel)?;
    let hs = fam.h_series_all(gamma, opts)?;
    let grid = fam.grid().clone();
    let mut max_ratio = 0.0f64;
    let mut worst_t = 0.0;
    let mut violations = 0;
    for (j, h) in hs.iter().enumerate() {
        let t = grid.node(j);
        let ratio = h.value / (th * t).exp();
        if ratio > max_ratio {
            max_ratio = ratio;
            worst_t = t;
        }
        if ratio > 1.0 + ESTHT_SLACK {
            violations += 1;
        }
    }
    let nu = p.nu();
    let (bounded_constant, max_ratio_bounded) = match upsilon_zero(kernel, p)? {
        Limit::Finite(u0) if 2.0 * gamma * u0 < nu => {
            let c = nu / (nu - 2.0 * gamma * u0);
            let mut worst = 0.0f64;
            for (j, h) in hs.iter().enumerate() {
                let ratio = h.value / c;
                if ratio > 1.0 + ESTHT_SLACK {
                    return Err(AsymptoticsError::BoundViolated {
                        t: grid.node(j),
                        value: h.value,
                        bound: c,
                    });
                }
                worst = worst.max(ratio);
            }
            (Some(c), Some(worst))
        }
        _ => (None, None),
    };
    Ok(EstHtRecord {
        gamma,
        theta: th,
        nodes: hs.len(),
        max_ratio_exp: max_ratio,
        worst_t_exp: worst_t,
        exp_violations: violations,
        bounded_constant,
        max_ratio_bounded,
    })
}

/// `θ*` two ways: the fitted growth rate of `log H*` and the rigorous lower
/// bound `1/a` with `h_1(a) = e / γ'`, `γ' = (2√3)^{-d} γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaStar {
    pub gamma_eff: f64,
    pub numeric_limit: Option<f64>,
    pub analytic_lower_bound: f64,
    /// `false` when `h_1(∞) ≤ e/γ'`, so the analytic bound gives nothing.
    pub analytic_solvable: bool,
    pub horizon: f64,
    pub stabilized: bool,
}

/// Root of `h_1(a) = target`, or `None` when `sup h_1 ≤ target`.
pub fn h1_inverse(kernel: &CorrelationKernel, p: &HeatParams, target: f64) -> Result<Option<f64>> {
    if let Limit::Finite(sup) = h1_limit_direct(kernel, p)? {
        if sup <= target {
            return Ok(None);
        }
    }
    let mut hi = 1.0;
    while kernel.h1(p, hi)? < target {
        hi *= 2.0;
        if hi > 1e300 {
            return Ok(None);
        }
    }
    let mut lo = hi / 2.0;
    while kernel.h1(p, lo)? >= target {
        lo /= 2.0;
    }
    while hi - lo > 1e-13 * hi {
        let mid = 0.5 * (lo + hi);
        if kernel.h1(p, mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

fn ln_h1_fn<'a>(kernel: &'a CorrelationKernel, p: &'a HeatParams) -> Result<Box<dyn Fn(f64) -> f64 + Sync + 'a>> {
    if kernel.h1_closed_form(p, 1.0).is_some() {
        return Ok(Box::new(move |t| {
            kernel.h1_closed_form(p, t).map_or(f64::NEG_INFINITY, f64::ln)
        }));
    }
    let table = H1Table::build(kernel, p, &vec![0.0; kernel.dim()], 1e-8, 1e8, 641)?;
    Ok(Box::new(move |t| table.ln_eval(t)))
}

fn slope(ts: &[f64], ys: &[f64]) -> f64 {
    let n = ts.len() as f64;
    let mt = ts.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = ts.iter().zip(ys).map(|(t, y)| (t - mt) * (y - my)).sum();
    let den: f64 = ts.iter().map(|t| (t - mt) * (t - mt)).sum();
    num / den
}

/// Least-squares slope of `f(t)` on nine equispaced points of `[a, b]`.
pub fn fitted_slope<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let ts: Vec<f64> = (0..9).map(|i| a + (b - a) * i as f64 / 8.0).collect();
    let ys: Vec<f64> = ts.iter().map(|&t| f(t)).collect();
    slope(&ts, &ys)
}

const THETA_STAR_MAX_HORIZON: f64 = 16_777_216.0;

pub fn theta_star(p: &HeatParams, gamma: f64, kernel: &CorrelationKernel) -> Result<ThetaStar> {
    let d = kernel.dim();
    let g = lower_gamma_factor(d) * gamma;
    if g == 0.0 {
        return Ok(ThetaStar {
            gamma_eff: 0.0,
            numeric_limit: Some(0.0),
            analytic_lower_bound: 0.0,
            analytic_solvable: false,
            horizon: 0.0,
            stabilized: true,
        });
    }
    let (analytic, solvable) = match h1_inverse(kernel, p, E / g)? {
        Some(a) => (1.0 / a, true),
        None => (0.0, false),
    };
    let ln_h1 = ln_h1_fn(kernel, p)?;
    let ln_hs = |t: f64| ln_h_star_with(&ln_h1, g, t);
    let mut horizon = 1.0;
    let mut prev = fitted_slope(ln_hs, horizon, 4.0 * horizon);
    let mut stabilized = false;
    while horizon < THETA_STAR_MAX_HORIZON {
        horizon *= 2.0;
        let s = fitted_slope(ln_hs, horizon, 4.0 * horizon);
        let settled = (s - prev).abs() <= 0.01 * s.abs() + 1e-12;
        prev = s;
        if settled {
            stabilized = true;
            break;
        }
    }
    Ok(ThetaStar {
        gamma_eff: g,
        numeric_limit: stabilized.then_some(prev.max(0.0)),
        analytic_lower_bound: analytic,
        analytic_solvable: solvable,
        horizon,
        stabilized,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    PhaseTransition {
        lambda_c_lower: f64,
        lambda_c_upper_estimate: Option<f64>,
    },
    FullyIntermittentAllLambda,
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::PhaseTransition { .. } => "PHASE_TRANSITION",
            Verdict::FullyIntermittentAllLambda => "FULLY_INTERMITTENT_ALL_LAMBDA",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseReport {
    pub kernel: String,
    pub dim: usize,
    pub nu: f64,
    pub lip: f64,
    pub lip_upper: f64,
    pub upsilon_zero: Limit,
    pub upsilon_zero_finite: bool,
    /// `(ν / (4Υ(0)))^{1/2}`.
    pub lambda_c_lower: Option<f64>,
    /// `2^{-1} (2π)^{d/2} ν^{1/2} Υ(0)^{-1/2}` (alternative normalisation).
    pub lambda_c_lower_alt: Option<f64>,
    /// `4Υ(0)/ν`: `H ≤ 1/(1 - θ λ^2)` for `λ^2 θ < 1`.
    pub theta_subcritical_bound: Option<f64>,
    pub theta_subcritical_alt: Option<f64>,
    /// `((2√3)^d e / h_1(∞))^{1/2}`; an estimate only.
    pub lambda_c_upper_estimate: Option<f64>,
    pub verdict: Verdict,
    /// Second moments bounded for `Lip` below `lambda_c_lower`.
    pub bounded_regime: bool,
    pub notes: Vec<String>,
}

impl PhaseReport {
    pub fn to_key_value(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("NONE".to_string(), |x| format!("{x:.10e}"));
        let mut s = String::new();
        s.push_str(&format!("kernel = {}\n", self.kernel));
        s.push_str(&format!("dim = {}\n", self.dim));
        s.push_str(&format!("nu = {}\n", self.nu));
        s.push_str(&format!("lip = {}\n", self.lip));
        s.push_str(&format!("Lip = {}\n", self.lip_upper));
        s.push_str(&format!("upsilon_zero = {}\n", self.upsilon_zero));
        s.push_str(&format!("verdict = {}\n", self.verdict.label()));
        s.push_str(&format!("lambda_c_lower = {}\n", opt(self.lambda_c_lower)));
        s.push_str(&format!("lambda_c_lower_alt = {}\n", opt(self.lambda_c_lower_alt)));
        s.push_str(&format!(
            "lambda_c_upper_estimate = {}\n",
            opt(self.lambda_c_upper_estimate)
        ));
        s.push_str(&format!(
            "theta_subcritical_bound = {}\n",
            opt(self.theta_subcritical_bound)
        ));
        s.push_str(&format!(
            "theta_subcritical_alt = {}\n",
            opt(self.theta_subcritical_alt)
        ));
        s.push_str(&format!("bounded_regime = {}\n", self.bounded_regime));
        for n in &self.notes {
            s.push_str(&format!("note = {n}\n"));
        }
        s
    }
}

pub fn phase_classify(kernel: &CorrelationKernel, p: &HeatParams, lip: f64, lip_upper: f64) -> Result<PhaseReport> {
    if !(lip >= 0.0 && lip_upper >= lip) {
        return Err(AsymptoticsError::InvalidInput(format!(
            "need 0 <= lip <= Lip, got {lip}, {lip_upper}"
        )));
    }
    let d = kernel.dim();
    let nu = p.nu();
    let u0 = upsilon_zero(kernel, p)?;
    let mut notes = Vec::new();
    let report = match u0 {
        Limit::Divergent => PhaseReport {
            kernel: kernel.name().to_string(),
            dim: d,
            nu,
            lip,
            lip_upper,
            upsilon_zero: u0,
            upsilon_zero_finite: false,
            lambda_c_lower: None,
            lambda_c_lower_alt: None,
            theta_subcritical_bound: None,
            theta_subcritical_alt: None,
            lambda_c_upper_estimate: None,
            verdict: Verdict::FullyIntermittentAllLambda,
            bounded_regime: false,
            notes,
        },
        Limit::Finite(u) => {
            let lc = (nu / (4.0 * u)).sqrt();
            let lc_alt = 0.5 * (2.0 * PI).powf(d as f64 / 2.0) * nu.sqrt() / u.sqrt();
            let h1_inf = h1_limit_direct(kernel, p)?.value();
            let upper = h1_inf.map(|h| ((2.0 * 3f64.sqrt()).powi(d as i32) * E / h).sqrt());
            notes.push(format!(
                "alternative critical constant 2^-1 (2pi)^(d/2) nu^(1/2) Upsilon(0)^(-1/2) = {lc_alt:.6e}; definition-consistent (nu/(4 Upsilon(0)))^(1/2) = {lc:.6e}"
            ));
            notes.push("lambda_c_upper_estimate is the solvability threshold of h_1(a) = e/gamma', an estimate".into());
            PhaseReport {
                kernel: kernel.name().to_string(),
                dim: d,
                nu,
                lip,
                lip_upper,
                upsilon_zero: u0,
                upsilon_zero_finite: true,
                lambda_c_lower: Some(lc),
                lambda_c_lower_alt: Some(lc_alt),
                theta_subcritical_bound: Some(4.0 * u / nu),
                theta_subcritical_alt: Some(4.0 * u / (nu * (2.0 * PI).powi(d as i32))),
                lambda_c_upper_estimate: upper,
                verdict: Verdict::PhaseTransition {
                    lambda_c_lower: lc,
                    lambda_c_upper_estimate: upper,
                },
                bounded_regime: lip_upper < lc,
                notes,
            }
        }
    };
    Ok(report)
}

/// `(1 + ct)^{-d/2}` and the lower bound for its time integral, with
/// `c = νπ / (2a^2)`.
pub fn lowind(a: f64, p: &HeatParams, t: f64) -> Result<(f64, f64)> {
    if !(a > 0.0 && t >= 0.0) {
        return Err(AsymptoticsError::InvalidInput(format!("a = {a}, t = {t}")));
    }
    let d = p.dim();
    let c = p.nu() * PI / (2.0 * a * a);
    let mass = (1.0 + c * t).powf(-(d as f64) / 2.0);
    let time = match d {
        1 => 2.0 / c * ((c * t + 1.0).sqrt() - 1.0),
        2 => (c * t).ln_1p() / c,
        _ => 2.0 / (c * (d as f64 - 2.0)) * (1.0 - (1.0 + c * t).powf(1.0 - d as f64 / 2.0)),
    };
    Ok((mass, time))
}

/// `C^2 (2πνt)^{-d} exp(-(2β/√d)|x| + νβ^2 t)` with `C = ∫ e^{β|x|} μ(dx)`.
pub fn j0_exp_bound(mu: &InitialMeasure, p: &HeatParams, t: f64, x: &[f64]) -> Result<f64> {
    let m = mu.exp_moment_meta().ok_or(AsymptoticsError::MissingExpMoment)?;
    if !(t > 0.0) {
        return Err(KernelError::NonpositiveTime(t).into());
    }
    let d = p.dim() as f64;
    let nu = p.nu();
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(m.value
        * m.value
        * (2.0 * PI * nu * t).powf(-d)
        * (-(2.0 * m.beta / d.sqrt()) * r + nu * m.beta * m.beta * t).exp())
}

/// `G(t, x)^2`, the Dirac case of [`j0_exp_bound`]'s left side.
pub fn dirac_j0_squared(p: &HeatParams, t: f64, x: &[f64]) -> Result<f64> {
    Ok(heat_kernel(p, t, x)?.powi(2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontReport {
    pub kernel: String,
    pub dim: usize,
    pub nu: f64,
    pub lip: f64,
    pub lip_upper: f64,
    pub theta: f64,
    pub theta_star: ThetaStar,
    pub beta_used: f64,
    /// `√(ν / a)` from the analytic bound on `θ*`.
    pub lower_index: f64,
    /// `√(ν θ*)` from the fitted growth rate of `H*`.
    pub lower_index_numeric: Option<f64>,
    pub upper_index: f64,
    pub optimized_upper: Option<f64>,
    pub degenerate: bool,
    pub notes: Vec<String>,
}

/// `(√d/2)(νβ + θ/β)`.
pub fn upper_index(d: usize, nu: f64, beta: f64, theta: f64) -> f64 {
    0.5 * (d as f64).sqrt() * (nu * beta + theta / beta)
}

pub fn growth_indices(
    kernel: &CorrelationKernel,
    p: &HeatParams,
    lip: f64,
    lip_upper: f64,
    beta: f64,
    all_exp_moments: bool,
) -> Result<FrontReport> {
    if !(lip >= 0.0 && lip_upper >= lip && beta > 0.0) {
        return Err(AsymptoticsError::InvalidInput(format!(
            "need 0 <= lip <= Lip and beta > 0, got {lip}, {lip_upper}, {beta}"
        )));
    }
    let d = kernel.dim();
    let nu = p.nu();
    let th = theta(p, lip_upper * lip_upper, kernel)?;
    let ts = theta_star(p, lip * lip, kernel)?;
    let lower = (nu * ts.analytic_lower_bound).sqrt();
    let lower_numeric = ts.numeric_limit.map(|v| (nu * v).sqrt());
    let upper = upper_index(d, nu, beta, th);
    let mut notes = Vec::new();
    if kernel.is_white_noise() {
        let alt = theta_white_noise_alt(lip_upper * lip_upper, nu);
        notes.push(format!(
            "alternative white-noise theta = Lip^4/nu = {alt:.6e} gives upper index {:.6e}; bisected theta = {th:.6e} gives {upper:.6e}",
            upper_index(d, nu, beta, alt)
        ));
    }
    if !ts.stabilized {
        notes.push(format!("theta_* slope not stabilized by t = {}", ts.horizon));
    }
    if !ts.analytic_solvable && lip > 0.0 {
        notes.push("h_1(a) = e/gamma' has no root; analytic bound is 0".into());
    }
    let degenerate = lip == 0.0;
    if degenerate {
        notes.push("lip = 0: no noise in the lower envelope, lower index is 0".into());
    }
    Ok(FrontReport {
        kernel: kernel.name().to_string(),
        dim: d,
        nu,
        lip,
        lip_upper,
        theta: th,
        theta_star: ts,
        beta_used: beta,
        lower_index: lower,
        lower_index_numeric: lower_numeric,
        upper_index: upper,
        optimized_upper: all_exp_moments.then(|| (d as f64).sqrt() * (nu * th).sqrt()),
        degenerate,
        notes,
    })
}

impl FrontReport {
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("kernel = {}\n", self.kernel));
        s.push_str(&format!("dim = {}\n", self.dim));
        s.push_str(&format!("nu = {}\n", self.nu));
        s.push_str(&format!("lip = {}\n", self.lip));
        s.push_str(&format!("Lip = {}\n", self.lip_upper));
        s.push_str(&format!("beta = {}\n", self.beta_used));
        s.push_str(&format!("theta = {:.10e}\n", self.theta));
        s.push_str(&format!(
            "theta_star_numeric = {}\n",
            self.theta_star
                .numeric_limit
                .map_or("NONE".to_string(), |v| format!("{v:.10e}"))
        ));
        s.push_str(&format!(
            "theta_star_analytic = {:.10e}\n",
            self.theta_star.analytic_lower_bound
        ));
        s.push_str(&format!("lower_index = {:.10e}\n", self.lower_index));
        s.push_str(&format!(
            "lower_index_numeric = {}\n",
            self.lower_index_numeric
                .map_or("NONE".to_string(), |v| format!("{v:.10e}"))
        ));
        s.push_str(&format!("upper_index = {:.10e}\n", self.upper_index));
        if let Some(o) = self.optimized_upper {
            s.push_str(&format!("optimized_upper = {o:.10e}\n"));
        }
        s.push_str(&format!("degenerate = {}\n", self.degenerate));
        for n in &self.notes {
            s.push_str(&format!("note = {n}\n"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::compute_h_family;
    use crate::quadrature::TimeGrid;
    use approx::assert_relative_eq;

    #[test]
    fn theta_examples() {
        let p = HeatParams::new(1.0, 1).unwrap();
        let c = CorrelationKernel::constant(1.0, 1).unwrap();
        assert_relative_eq!(theta(&p, 0.8, &c).unwrap(), 0.8, max_relative = 1e-8);
        let w = CorrelationKernel::white_noise();
        for nu in [0.5, 1.0, 3.0] {
            let p = HeatParams::new(nu, 1).unwrap();
            assert_relative_eq!(theta(&p, 1.7, &w).unwrap(), 1.7 * 1.7 / (2.0 * nu), max_relative = 1e-8);
        }
        let p3 = HeatParams::new(1.0, 3).unwrap();
        let ou = CorrelationKernel::ou(2.0, 1.0, 3).unwrap();
        // Υ(0) = 1/2, subcritical for γ < 1
        assert_eq!(theta(&p3, 0.5, &ou).unwrap(), 0.0);
        assert!(theta(&p3, 3.0, &ou).unwrap() > 0.0);
    }

    #[test]
    fn white_noise_theta_star_analytic() {
        let p = HeatParams::new(1.0, 1).unwrap();
        let ts = theta_star(&p, 1.0, &CorrelationKernel::white_noise()).unwrap();
        assert_relative_eq!(ts.analytic_lower_bound, 1.0 / (6.0 * PI * E * E), max_relative = 1e-10);
        let fitted = ts.numeric_limit.unwrap();
        assert!(fitted >= ts.analytic_lower_bound);
        // saddle point of n ↦ γ'^n h_1(t/n)^n gives γ'^2 / (π ν e)
        assert_relative_eq!(fitted, 1.0 / (12.0 * PI * E), max_relative = 0.02);
    }

    #[test]
    fn constant_theta_star_analytic() {
        let p = HeatParams::new(1.0, 2).unwrap();
        let ts = theta_star(&p, 3.0, &CorrelationKernel::constant(1.0, 2).unwrap()).unwrap();
        assert_relative_eq!(
            ts.analytic_lower_bound,
            lower_gamma_factor(2) * 3.0 / E,
            max_relative = 1e-10
        );
    }

    #[test]
    fn est_ht_constant_is_tight() {
        let k = CorrelationKernel::constant(1.0, 1).unwrap();
        let p = HeatParams::new(1.0, 1).unwrap();
        let grid = TimeGrid::new(2.0, 256).unwrap();
        let mut fam = compute_h_family(&k, &p, &[0.0], &grid, 16).unwrap();
        let r = est_ht_bounds(&mut fam, 1.0, &k, &p, &HOptions::default()).unwrap();
        assert_relative_eq!(r.max_ratio_exp, 1.0, max_relative = 1e-4);
    }

    #[test]
    fn est_ht_bounded_regime_holds() {
        let k = CorrelationKernel::ou(2.0, 1.0, 3).unwrap();
        let p = HeatParams::new(1.0, 3).unwrap();
        let grid = TimeGrid::new(20.0, 2048).unwrap();
        let mut fam = compute_h_family(&k, &p, &[0.0; 3], &grid, 16).unwrap();
        let r = est_ht_bounds(&mut fam, 0.5, &k, &p, &HOptions::default()).unwrap();
        assert_relative_eq!(r.bounded_constant.unwrap(), 2.0, max_relative = 1e-5);
        assert!(r.max_ratio_bounded.unwrap() <= 1.0);
    }

    #[test]
    fn phase_examples() {
        let p3 = HeatParams::new(1.0, 3).unwrap();
        let r = phase_classify(&CorrelationKernel::riesz(1.0, 3).unwrap(), &p3, 1.0, 1.0).unwrap();
        assert_eq!(r.verdict, Verdict::FullyIntermittentAllLambda);
        let r = phase_classify(&CorrelationKernel::ou(2.0, 1.0, 3).unwrap(), &p3, 1.0, 1.0).unwrap();
        assert!(matches!(r.verdict, Verdict::PhaseTransition { .. }));
        assert_relative_eq!(r.lambda_c_lower.unwrap(), (1.0f64 / 2.0).sqrt(), max_relative = 1e-5);
        let p1 = HeatParams::new(1.0, 1).unwrap();
        let r = phase_classify(&CorrelationKernel::ou(2.0, 1.0, 1).unwrap(), &p1, 1.0, 1.0).unwrap();
        assert_eq!(r.verdict, Verdict::FullyIntermittentAllLambda);
    }

    #[test]
    fn lowind_examples() {
        let p = HeatParams::new(1.0, 3).unwrap();
        // c = 1 when a^2 = π/2
        let a = (PI / 2.0).sqrt();
        let (m, ti) = lowind(a, &p, 3.0).unwrap();
        assert_relative_eq!(ti, 1.0, max_relative = 1e-14);
        assert_relative_eq!(m, 0.125, max_relative = 1e-14);
        assert_eq!(lowind(a, &p, 0.0).unwrap().0, 1.0);
        let p1 = HeatParams::new(1.0, 1).unwrap();
        for &(a, t) in &[(0.5, 0.1), (1.0, 1.0), (2.0, 10.0), (0.3, 5.0)] {
            let mass = crate::special::erf(a / (2.0f64 * t).sqrt());
            assert!(mass >= lowind(a, &p1, t).unwrap().0);
        }
    }

    #[test]
    fn j0_bound_dirac() {
        let p = HeatParams::new(1.0, 1).unwrap();
        let mu = InitialMeasure::dirac(vec![0.0])
            .unwrap()
            .with_exp_moment(crate::kernel::ExpMoment { beta: 1.0, value: 1.0 })
            .unwrap();
        for &(t, x) in &[(0.5, 0.0), (1.0, 2.0), (3.0, -4.0)] {
            let b = j0_exp_bound(&mu, &p, t, &[x]).unwrap();
            assert!(b >= dirac_j0_squared(&p, t, &[x]).unwrap());
        }
    }

    #[test]
    fn white_noise_front_indices() {
        let p = HeatParams::new(1.0, 1).unwrap();
        let r = growth_indices(&CorrelationKernel::white_noise(), &p, 1.0, 1.0, 1.0, false).unwrap();
        assert_relative_eq!(r.lower_index, 1.0 / (E * (6.0 * PI).sqrt()), max_relative = 1e-9);
        assert!(r.lower_index_numeric.unwrap() <= r.upper_index);
        assert_relative_eq!(r.upper_index, 0.75, max_relative = 1e-8);
    }
}
