//! Adaptive 1-D quadrature, radial reduction and product integration on
//! uniform time grids.

use std::collections::BinaryHeap;

use rayon::prelude::*;
use thiserror::Error;

use crate::special::ln_gamma;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadratureError {
    #[error("tolerance not met: estimate {estimate:.6e}, error bound {error:.3e}")]
    ToleranceNotMet { estimate: f64, error: f64 },
    #[error("integral diverges or tail does not stabilize (partial value {partial:.6e})")]
    DivergentIntegral { partial: f64 },
    #[error("grid mismatch: expected {expected} values, got {got}")]
    GridMismatch { expected: usize, got: usize },
    #[error("invalid quadrature input: {0}")]
    InvalidInput(String),
    #[error("integrand returned a non-finite value at {at}")]
    NonFinite { at: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            max_subdivisions: 4000,
        }
    }
}

impl QuadOptions {
    pub fn with_tolerances(abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            abs_tol,
            rel_tol,
            ..Self::default()
        }
    }

    fn target(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod_15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<(f64, f64), QuadratureError> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    if !fc.is_finite() {
        return Err(QuadratureError::NonFinite { at: center });
    }
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let (x1, x2) = (center - dx, center + dx);
        let (f1, f2) = (f(x1), f(x2));
        if !f1.is_finite() {
            return Err(QuadratureError::NonFinite { at: x1 });
        }
        if !f2.is_finite() {
            return Err(QuadratureError::NonFinite { at: x2 });
        }
        kronrod += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let value = kronrod * half;
    let err = ((kronrod - gauss) * half).abs();
    Ok((value, err.max(f64::EPSILON * 50.0 * value.abs())))
}

#[derive(Debug, PartialEq)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Adaptive Gauss-Kronrod (7/15) quadrature on a finite interval, bisecting
/// the segment with the largest error estimate until
/// `error <= max(abs_tol, rel_tol |value|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: &QuadOptions) -> Result<QuadResult, QuadratureError> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(QuadratureError::InvalidInput(format!("bounds [{a}, {b}]")));
    }
    if a == b {
        return Ok(QuadResult { value: 0.0, error: 0.0 });
    }
    if a > b {
        let r = integrate(f, b, a, opts)?;
        return Ok(QuadResult {
            value: -r.value,
            error: r.error,
        });
    }
    let (v, e) = gauss_kronrod_15(&f, a, b)?;
    let mut heap = BinaryHeap::new();
    heap.push(Segment {
        a,
        b,
        value: v,
        error: e,
    });
    let mut total = v;
    let mut total_err = e;
    let mut splits = 0;
    while total_err > opts.target(total) {
        if splits >= opts.max_subdivisions {
            return Err(QuadratureError::ToleranceNotMet {
                estimate: total,
                error: total_err,
            });
        }
        let seg = heap.pop().expect("heap holds every segment");
        let mid = 0.5 * (seg.a + seg.b);
        if !(mid > seg.a && mid < seg.b) {
            return Err(QuadratureError::ToleranceNotMet {
                estimate: total,
                error: total_err,
            });
        }
        let (v1, e1) = gauss_kronrod_15(&f, seg.a, mid)?;
        let (v2, e2) = gauss_kronrod_15(&f, mid, seg.b)?;
        total += v1 + v2 - seg.value;
        total_err += e1 + e2 - seg.error;
        heap.push(Segment {
            a: seg.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: seg.b,
            value: v2,
            error: e2,
        });
        splits += 1;
        if splits % 64 == 0 {
            // resum to shed accumulated rounding in the running totals
            total = heap.iter().map(|s| s.value).sum();
            total_err = heap.iter().map(|s| s.error).sum();
        }
    }
    Ok(QuadResult {
        value: total,
        error: total_err,
    })
}

/// Endpoint behaviour `(s - a)^exponent` with `exponent > -1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularWeight {
    exponent: f64,
}

impl SingularWeight {
    pub fn new(exponent: f64) -> Result<Self, QuadratureError> {
        if !(exponent > -1.0) || !exponent.is_finite() {
            return Err(QuadratureError::InvalidInput(format!(
                "singular exponent must exceed -1, got {exponent}"
            )));
        }
        Ok(Self { exponent })
    }

    pub fn none() -> Self {
        Self { exponent: 0.0 }
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }
}

/// `∫_a^b (s - a)^e g(s) ds` with the substitution `s = a + u^{1/(1+e)}`,
/// which turns the weight into a constant.
pub fn integrate_singular<G: Fn(f64) -> f64>(
    g: G,
    a: f64,
    b: f64,
    w: SingularWeight,
    opts: &QuadOptions,
) -> Result<QuadResult, QuadratureError> {
    if !(b > a) {
        if a == b {
            return Ok(QuadResult { value: 0.0, error: 0.0 });
        }
        return Err(QuadratureError::InvalidInput(format!(
            "integrate_singular needs a < b, got [{a}, {b}]"
        )));
    }
    let e = w.exponent;
    if e == 0.0 {
        return integrate(g, a, b, opts);
    }
    let p = 1.0 / (1.0 + e);
    let upper = (b - a).powf(1.0 + e);
    integrate(|u: f64| p * g(a + u.powf(p)), 0.0, upper, opts)
}

/// `∫_a^∞ f(s) ds`, integrated over doubling chunks starting from `scale`
/// until a chunk contributes less than the tolerance twice in a row.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    scale: f64,
    opts: &QuadOptions,
) -> Result<QuadResult, QuadratureError> {
    if !(scale > 0.0) {
        return Err(QuadratureError::InvalidInput(format!("scale {scale}")));
    }
    let first = integrate(&f, a, a + scale, opts)?;
    let mut total = first.value;
    let mut err = first.error;
    let mut lo = a + scale;
    let mut width = scale;
    let mut quiet = 0;
    let mut prev = first.value.abs();
    let mut growing = 0;
    for _ in 0..64 {
        let chunk = match integrate(&f, lo, lo + width, opts) {
            Ok(c) => c,
            // chunks of doubling width that stopped shrinking sum to infinity
            Err(QuadratureError::ToleranceNotMet { .. }) if growing >= 4 => {
                return Err(QuadratureError::DivergentIntegral { partial: total });
            }
            Err(e) => return Err(e),
        };
        growing = if chunk.value.abs() >= prev { growing + 1 } else { 0 };
        prev = chunk.value.abs();
        total += chunk.value;
        err += chunk.error;
        if chunk.value.abs() <= opts.target(total) {
            quiet += 1;
            if quiet >= 2 {
                return Ok(QuadResult {
                    value: total,
                    error: err,
                });
            }
        } else {
            quiet = 0;
        }
        lo += width;
        width *= 2.0;
    }
    Err(QuadratureError::DivergentIntegral { partial: total })
}

/// Surface area of the unit sphere in `R^d`: `d π^{d/2} / Γ(1 + d/2)`.
pub fn unit_sphere_area(d: usize) -> f64 {
    let d = d as f64;
    (d.ln() + 0.5 * d * std::f64::consts::PI.ln() - ln_gamma(1.0 + 0.5 * d)).exp()
}

/// Volume of the unit ball in `R^d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    unit_sphere_area(d) / d as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialOptions {
    /// Power of `r` of the integrand `f w` at the origin (e.g. `-α` for Riesz).
    pub origin_exponent: f64,
    /// Length scale of the decaying factor, typically `sqrt(ν t)`.
    pub scale: f64,
    pub quad: QuadOptions,
}

impl Default for RadialOptions {
    fn default() -> Self {
        Self {
            origin_exponent: 0.0,
            scale: 1.0,
            quad: QuadOptions::default(),
        }
    }
}

/// Gaussian-tail radius factor: `exp(-r^2 / 2) = 1e-18`.
const GAUSS_TAIL: f64 = 9.101_731_695_642_51;

/// `∫_{R^d} f(|z|) w(|z|) dz` as a 1-D integral with the surface-measure
/// factor. The interval `[0, 9.1 scale]` is integrated first (Gaussian
/// weight below 1e-18 beyond it), then doubling tail chunks until stable.
pub fn radial_integral<F, W>(
    f_radial: F,
    weight: W,
    d: usize,
    opts: &RadialOptions,
) -> Result<QuadResult, QuadratureError>
where
    F: Fn(f64) -> f64,
    W: Fn(f64) -> f64,
{
    if d == 0 {
        return Err(QuadratureError::InvalidInput("dimension 0".into()));
    }
    let area = unit_sphere_area(d);
    let origin = opts.origin_exponent + d as f64 - 1.0;
    if !(origin > -1.0) {
        return Err(QuadratureError::DivergentIntegral { partial: f64::INFINITY });
    }
    // non-integer powers at the origin are removed by the power substitution
    let (sing, strip) = if origin.fract() != 0.0 {
        (origin, origin)
    } else {
        (0.0, 0.0)
    };
    let w = SingularWeight::new(sing)?;
    let integrand = |r: f64| {
        let base = f_radial(r) * weight(r) * r.powi(d as i32 - 1);
        if strip != 0.0 {
            base * r.powf(-strip)
        } else {
            base
        }
    };
    let r0 = GAUSS_TAIL * opts.scale;
    let plain = |r: f64| f_radial(r) * weight(r) * r.powi(d as i32 - 1);
    // a wide Gaussian must not hide unit-scale structure of f near the origin
    let splits = if r0 > 0.25 {
        ((r0 / 0.25).log(4.0).ceil() as i32).min(16)
    } else {
        0
    };
    let r_in = r0 * 4f64.powi(-splits);
    let core = integrate_singular(integrand, 0.0, r_in, w, &opts.quad)?;
    let mut total = core.value;
    let mut err = core.error;
    for k in (0..splits).rev() {
        let a = r0 * 4f64.powi(-k - 1);
        let panel = integrate(plain, a, 4.0 * a, &opts.quad)?;
        total += panel.value;
        err += panel.error;
    }
    let mut lo = r0;
    let mut width = r0;
    let mut quiet = 0;
    for _ in 0..60 {
        let chunk = integrate(plain, lo, lo + width, &opts.quad)?;
        total += chunk.value;
        err += chunk.error;
        if chunk.value.abs() <= opts.quad.target(total) {
            quiet += 1;
            if quiet >= 2 {
                return Ok(QuadResult {
                    value: area * total,
                    error: area * err,
                });
            }
        } else {
            quiet = 0;
        }
        lo += width;
        width *= 2.0;
    }
    Err(QuadratureError::DivergentIntegral { partial: area * total })
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` (Newton iteration on the
/// Legendre recurrence).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Uniform time grid `t_j = j Δt`, `j = 0..=n_steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    t_max: f64,
    n_steps: usize,
}

pub const DEFAULT_STEPS_PER_UNIT: usize = 512;
pub const MAX_DEFAULT_STEPS: usize = 8192;

impl TimeGrid {
    pub fn new(t_max: f64, n_steps: usize) -> Result<Self, QuadratureError> {
        if !(t_max > 0.0 && t_max.is_finite()) || n_steps == 0 {
            return Err(QuadratureError::InvalidInput(format!(
                "time grid needs t_max > 0 and n_steps > 0 (got {t_max}, {n_steps})"
            )));
        }
        Ok(Self { t_max, n_steps })
    }

    /// `512` steps per unit time, rounded up to an even count (so `t_max/2`
    /// is a node), at least 64 and at most 8192 steps.
    pub fn with_default_resolution(t_max: f64) -> Result<Self, QuadratureError> {
        let raw = (t_max * DEFAULT_STEPS_PER_UNIT as f64).ceil() as usize;
        let mut n = raw.clamp(64, MAX_DEFAULT_STEPS);
        if n % 2 == 1 {
            n += 1;
        }
        Self::new(t_max, n)
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.t_max / self.n_steps as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        if j == self.n_steps {
            self.t_max
        } else {
            j as f64 * self.dt()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|j| self.node(j)).collect()
    }

    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of `t` if it is a node up to rounding.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = t / self.dt();
        let j = x.round();
        if j < 0.0 || j as usize > self.n_steps {
            return None;
        }
        if (x - j).abs() <= 1e-9 * x.abs().max(1.0) {
            Some(j as usize)
        } else {
            None
        }
    }

    /// Linear interpolation of node values at `t`, clamped to the grid.
    pub fn interpolate(&self, values: &[f64], t: f64) -> f64 {
        let x = (t / self.dt()).clamp(0.0, self.n_steps as f64);
        let j = (x.floor() as usize).min(self.n_steps - 1);
        let frac = x - j as f64;
        values[j] * (1.0 - frac) + values[j + 1] * frac
    }
}

/// Product-integration weights for `∫_0^{t_j} K(τ) R(t_j - τ) dτ`, with `K`
/// integrated exactly against the linear interpolant of `R` on each cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionWeights {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl ConvolutionWeights {
    /// Weights for a kernel given as a function. `singular` describes the
    /// behaviour of `K` at `τ = 0`; the first cell is integrated with the
    /// power substitution.
    pub fn from_fn<K>(
        grid: &TimeGrid,
        kernel: K,
        singular: SingularWeight,
        opts: &QuadOptions,
    ) -> Result<Self, QuadratureError>
    where
        K: Fn(f64) -> f64 + Sync,
    {
        let dt = grid.dt();
        let e = singular.exponent();
        let cells: Result<Vec<(f64, f64)>, QuadratureError> = (0..grid.n_steps())
            .into_par_iter()
            .map(|m| {
                let lo = m as f64 * dt;
                let hi = lo + dt;
                let hat_b = |tau: f64| (tau - lo) / dt;
                if m == 0 && e != 0.0 {
                    let smooth = |tau: f64| kernel(tau) * tau.powf(-e);
                    let a = integrate_singular(|t| smooth(t) * (1.0 - hat_b(t)), lo, hi, singular, opts)?;
                    let b = integrate_singular(|t| smooth(t) * hat_b(t), lo, hi, singular, opts)?;
                    Ok((a.value, b.value))
                } else {
                    let a = integrate(|t| kernel(t) * (1.0 - hat_b(t)), lo, hi, opts)?;
                    let b = integrate(|t| kernel(t) * hat_b(t), lo, hi, opts)?;
                    Ok((a.value, b.value))
                }
            })
            .collect();
        let (a, b) = cells?.into_iter().unzip();
        Ok(Self { a, b })
    }

    /// Weights for a kernel known only at the nodes, modelled as
    /// `τ^e φ(τ)` with `φ` piecewise linear. The singular moments
    /// `∫ τ^e τ^k dτ` are exact.
    pub fn from_samples(
        grid: &TimeGrid,
        samples: &[f64],
        singular: Option<SingularWeight>,
    ) -> Result<Self, QuadratureError> {
        if samples.len() != grid.len() {
            return Err(QuadratureError::GridMismatch {
                expected: grid.len(),
                got: samples.len(),
            });
        }
        let dt = grid.dt();
        let e = singular.map_or(0.0, |w| w.exponent());
        let n = grid.n_steps();
        // φ at the nodes; φ_0 is not recoverable from a singular sample and
        // is taken from the first interior node
        let phi: Vec<f64> = (0..=n)
            .map(|j| {
                if e == 0.0 {
                    samples[j]
                } else if j == 0 {
                    samples[1] / dt.powf(e)
                } else {
                    samples[j] / grid.node(j).powf(e)
                }
            })
            .collect();
        // moments of τ^e on [lo, hi]: ∫ τ^{e+k}
        let moment = |k: i32, lo: f64, hi: f64| {
            let p = e + k as f64 + 1.0;
            (hi.powf(p) - lo.powf(p)) / p
        };
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        for m in 0..n {
            let lo = m as f64 * dt;
            let hi = lo + dt;
            let (p0, p1) = (phi[m], phi[m + 1]);
            // φ(τ) = p0 + (p1 - p0)(τ - lo)/dt ; hat_b(τ) = (τ - lo)/dt
            let m0 = moment(0, lo, hi);
            let m1 = moment(1, lo, hi) - lo * m0;
            let m2 = moment(2, lo, hi) - 2.0 * lo * moment(1, lo, hi) + lo * lo * m0;
            let slope = (p1 - p0) / dt;
            let kb = p0 * m1 / dt + slope * m2 / dt;
            let ktot = p0 * m0 + slope * m1;
            a.push(ktot - kb);
            b.push(kb);
        }
        Ok(Self { a, b })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn are_nonnegative(&self) -> bool {
        self.a.iter().chain(&self.b).all(|&w| w >= 0.0)
    }

    /// Applies the weights to `right` sampled on the grid.
    pub fn apply(&self, right: &[f64]) -> Result<Vec<f64>, QuadratureError> {
        let n = self.a.len();
        if right.len() != n + 1 {
            return Err(QuadratureError::GridMismatch {
                expected: n + 1,
                got: right.len(),
            });
        }
        Ok((0..=n)
            .into_par_iter()
            .map(|j| {
                let mut acc = 0.0;
                for m in 0..j {
                    acc += self.a[m] * right[j - m] + self.b[m] * right[j - m - 1];
                }
                acc
            })
            .collect())
    }
}

/// `out(t_j) = ∫_0^{t_j} left(t_j - s) right(s) ds` for node samples, with
/// an optional power singularity of `left` at zero.
pub fn convolve_on_grid(
    grid: &TimeGrid,
    left: &[f64],
    left_weight: Option<SingularWeight>,
    right: &[f64],
) -> Result<Vec<f64>, QuadratureError> {
    if right.len() != grid.len() {
        return Err(QuadratureError::GridMismatch {
            expected: grid.len(),
            got: right.len(),
        });
    }
    ConvolutionWeights::from_samples(grid, left, left_weight)?.apply(right)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn singular_moment() {
        let w = SingularWeight::new(-0.5).unwrap();
        let r = integrate_singular(|_| 1.0, 0.0, 1.0, w, &QuadOptions::default()).unwrap();
        assert_relative_eq!(r.value, 2.0, max_relative = 1e-12);
        let r = integrate_singular(|s| s, 0.0, 2.0, SingularWeight::none(), &QuadOptions::default()).unwrap();
        assert_relative_eq!(r.value, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn singular_weight_rejects_nonintegrable() {
        assert!(SingularWeight::new(-1.0).is_err());
    }

    #[test]
    fn gaussian_mass_radial() {
        for d in 1..=6 {
            let opts = RadialOptions::default();
            let norm = (2.0 * std::f64::consts::PI).powf(-(d as f64) / 2.0);
            let r = radial_integral(|r| norm * (-r * r / 2.0).exp(), |_| 1.0, d, &opts).unwrap();
            assert_relative_eq!(r.value, 1.0, max_relative = 1e-9);
        }
    }

    #[test]
    fn tail_divergence_detected() {
        let r = radial_integral(|r| 1.0 / (1.0 + r), |_| 1.0, 1, &RadialOptions::default());
        assert!(matches!(r, Err(QuadratureError::DivergentIntegral { .. })));
    }

    #[test]
    fn half_line_exponential() {
        let r = integrate_to_infinity(|t| (-t).exp(), 0.0, 1.0, &QuadOptions::default()).unwrap();
        assert_relative_eq!(r.value, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn convolution_examples() {
        let grid = TimeGrid::new(2.0, 200).unwrap();
        let ones = vec![1.0; grid.len()];
        let out = convolve_on_grid(&grid, &ones, None, &ones).unwrap();
        for (j, v) in out.iter().enumerate() {
            assert_relative_eq!(*v, grid.node(j), max_relative = 1e-12, epsilon = 1e-15);
        }
        let twice = convolve_on_grid(&grid, &ones, None, &out).unwrap();
        for (j, v) in twice.iter().enumerate() {
            let t = grid.node(j);
            assert!((v - t * t / 2.0).abs() < 1e-8);
        }
        let w = SingularWeight::new(-0.5).unwrap();
        let left: Vec<f64> = grid
            .nodes()
            .iter()
            .map(|&t| if t == 0.0 { f64::INFINITY } else { t.powf(-0.5) })
            .collect();
        let out = convolve_on_grid(&grid, &left, Some(w), &ones).unwrap();
        for (j, v) in out.iter().enumerate() {
            assert_relative_eq!(*v, 2.0 * grid.node(j).sqrt(), max_relative = 1e-12, epsilon = 1e-15);
        }
    }

    #[test]
    fn weights_from_fn_match_samples_for_linear_kernel() {
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let samples: Vec<f64> = grid.nodes().iter().map(|t| 1.0 + 2.0 * t).collect();
        let a = ConvolutionWeights::from_samples(&grid, &samples, None).unwrap();
        let b = ConvolutionWeights::from_fn(
            &grid,
            |t| 1.0 + 2.0 * t,
            SingularWeight::none(),
            &QuadOptions::default(),
        )
        .unwrap();
        for (x, y) in a.a.iter().zip(&b.a) {
            assert_relative_eq!(x, y, max_relative = 1e-12);
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert_relative_eq!(s, 2.0 / 15.0, max_relative = 1e-13);
        let (x, w) = gauss_legendre(64);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.cos()).sum();
        assert_relative_eq!(s, 2.0 * 1f64.sin(), max_relative = 1e-13);
    }

    #[test]
    fn grid_mismatch() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        assert!(matches!(
            convolve_on_grid(&grid, &[1.0; 5], None, &[1.0; 3]),
            Err(QuadratureError::GridMismatch { .. })
        ));
    }
}
