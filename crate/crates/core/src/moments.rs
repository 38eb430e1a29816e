//! The `h_n` family, the series `H` and `H*`, the `L_0`/`L_1` kernels, the
//! `K_λ` envelopes and two-point second-moment bounds.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::kernel::{
    heat_kernel_r2, CorrelationKernel, HeatParams, InitialMeasure, KernelError, MeasureVariant, Point,
};
use crate::quadrature::{
    gauss_legendre, integrate, integrate_singular, ConvolutionWeights, QuadOptions, QuadratureError, SingularWeight,
    TimeGrid,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MomentError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("H series not converged at order {order}: partial value {value:.6e}, tail bound {bound:.3e}")]
    TruncationNotConverged { value: f64, bound: f64, order: usize },
    #[error("time {0} is outside the grid")]
    NotOnGrid(f64),
    #[error("unsupported measure: {0}")]
    UnsupportedMeasure(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("csv error: {0}")]
    Csv(String),
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn norm2(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum()
}

/// Options for building and summing `h_n` families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HOptions {
    pub initial_order: usize,
    pub max_order: usize,
    /// Relative tail-bound target for `H`.
    pub rel_tol: f64,
    pub quad: QuadOptions,
}

impl Default for HOptions {
    fn default() -> Self {
        Self {
            initial_order: 64,
            max_order: 2048,
            rel_tol: 1e-8,
            quad: QuadOptions::default(),
        }
    }
}

/// `K_y(τ) = k(τ) T_{ν/4}(τ, y)`, the convolution kernel of the recursion.
pub fn recursion_kernel(kernel: &CorrelationKernel, p: &HeatParams, tau: f64, y2: f64) -> Result<f64, KernelError> {
    let t = crate::kernel::gauss_factor_r2(p.nu() / 4.0, tau, y2);
    if t == 0.0 {
        return Ok(0.0);
    }
    Ok(kernel.k_of_t(p, tau)? * t)
}

/// Memoized `h_n(t_j, y)` for `n = 0..=N` on a uniform grid.
#[derive(Debug, Clone)]
pub struct HFamily {
    kernel: Option<CorrelationKernel>,
    p: Option<HeatParams>,
    y: Point,
    grid: TimeGrid,
    weights: Option<ConvolutionWeights>,
    rows: Vec<Vec<f64>>,
}

/// `h_n(t, y) = ∫_0^t h_{n-1}(s, y) k(t-s) T_{ν/4}(t-s, y) ds`, `h_0 = 1`,
/// by product integration with exact kernel moments on each cell.
pub fn compute_h_family(
    kernel: &CorrelationKernel,
    p: &HeatParams,
    y: &[f64],
    grid: &TimeGrid,
    n_max: usize,
) -> Result<HFamily, MomentError> {
    compute_h_family_with(kernel, p, y, grid, n_max, &QuadOptions::default())
}

pub fn compute_h_family_with(
    kernel: &CorrelationKernel,
    p: &HeatParams,
    y: &[f64],
    grid: &TimeGrid,
    n_max: usize,
    quad: &QuadOptions,
) -> Result<HFamily, MomentError> {
    if n_max == 0 {
        return Err(MomentError::InvalidInput("order N must be at least 1".into()));
    }
    if y.len() != kernel.dim() {
        return Err(KernelError::DimensionMismatch {
            expected: kernel.dim(),
            got: y.len(),
        }
        .into());
    }
    let y2 = norm2(y);
    let singular = if y2 == 0.0 {
        SingularWeight::new(kernel.k_singularity())?
    } else {
        SingularWeight::none()
    };
    let weights = ConvolutionWeights::from_fn(
        grid,
        |tau| recursion_kernel(kernel, p, tau, y2).unwrap_or(f64::NAN),
        singular,
        quad,
    )?;
    let mut fam = HFamily {
        kernel: Some(kernel.clone()),
        p: Some(*p),
        y: y.to_vec(),
        grid: grid.clone(),
        weights: Some(weights),
        rows: vec![vec![1.0; grid.len()]],
    };
    fam.extend_to(n_max)?;
    Ok(fam)
}

/// Value of `H` with its truncation diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HValue {
    pub value: f64,
    pub tail_bound: f64,
    pub order: usize,
}

impl HFamily {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Highest computed order `N`.
    pub fn order(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.rows[n]
    }

    pub fn h(&self, n: usize, j: usize) -> f64 {
        self.rows[n][j]
    }

    /// `h_n(t)` with linear interpolation between nodes.
    pub fn h_at(&self, n: usize, t: f64) -> Result<f64, MomentError> {
        if !(0.0..=self.grid.t_max() * (1.0 + 1e-12)).contains(&t) {
            return Err(MomentError::NotOnGrid(t));
        }
        Ok(self.grid.interpolate(&self.rows[n], t))
    }

    /// Computes further rows up to order `n_max`.
    pub fn extend_to(&mut self, n_max: usize) -> Result<(), MomentError> {
        if self.order() >= n_max {
            return Ok(());
        }
        let weights = self
            .weights
            .as_ref()
            .ok_or_else(|| MomentError::InvalidInput("family loaded from CSV cannot be extended".into()))?;
        while self.rows.len() <= n_max {
            let next = weights.apply(self.rows.last().expect("h_0 present"))?;
            self.rows.push(next);
        }
        Ok(())
    }

    /// `H(t_j; γ) = Σ γ^n h_n(t_j)`, extending the family until the geometric
    /// tail bound from the last two terms is below `opts.rel_tol` relative.
    pub fn h_series_at_node(&mut self, gamma: f64, j: usize, opts: &HOptions) -> Result<HValue, MomentError> {
        if gamma < 0.0 {
            return Err(MomentError::InvalidInput(format!(
                "gamma must be nonnegative, got {gamma}"
            )));
        }
        if j >= self.grid.len() {
            return Err(MomentError::NotOnGrid(j as f64 * self.grid.dt()));
        }
        if gamma == 0.0 {
            return Ok(HValue {
                value: 1.0,
                tail_bound: 0.0,
                order: 0,
            });
        }
        let mut n_target = self.order().max(opts.initial_order.min(opts.max_order)).max(2);
        loop {
            if self.weights.is_some() {
                self.extend_to(n_target)?;
            }
            let n_top = self.order();
            let (sum, last, prev) = partial_sum(&self.rows, gamma, j, n_top);
            let bound = tail_bound(last, prev);
            if bound <= opts.rel_tol * sum {
                return Ok(HValue {
                    value: sum,
                    tail_bound: bound,
                    order: n_top,
                });
            }
            if self.weights.is_none() || n_top >= opts.max_order {
                return Err(MomentError::TruncationNotConverged {
                    value: sum,
                    bound,
                    order: n_top,
                });
            }
            n_target = (2 * n_top).min(opts.max_order);
        }
    }

    /// `H(t; γ)` at any `t` in the grid range; off-node values interpolate
    /// the node sums linearly.
    pub fn h_series(&mut self, gamma: f64, t: f64, opts: &HOptions) -> Result<HValue, MomentError> {
        if let Some(j) = self.grid.index_of(t) {
            return self.h_series_at_node(gamma, j, opts);
        }
        if !(t >= 0.0 && t <= self.grid.t_max()) {
            return Err(MomentError::NotOnGrid(t));
        }
        let x = t / self.grid.dt();
        let j = x.floor() as usize;
        let w = x - j as f64;
        let a = self.h_series_at_node(gamma, j, opts)?;
        let b = self.h_series_at_node(gamma, j + 1, opts)?;
        Ok(HValue {
            value: a.value * (1.0 - w) + b.value * w,
            tail_bound: a.tail_bound.max(b.tail_bound),
            order: a.order.max(b.order),
        })
    }

    /// `H` at every node for fixed `γ`.
    pub fn h_series_all(&mut self, gamma: f64, opts: &HOptions) -> Result<Vec<HValue>, MomentError> {
        // converge at the last node first; h_n is nondecreasing in t so the
        // same order suffices everywhere
        self.h_series_at_node(gamma, self.grid.n_steps(), opts)?;
        (0..self.grid.len())
            .map(|j| self.h_series_at_node(gamma, j, opts))
            .collect()
    }

    /// Writes `n,t,value` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), MomentError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["n", "t", "value"])
            .map_err(|e| MomentError::Csv(e.to_string()))?;
        for (n, row) in self.rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                out.write_record([n.to_string(), format!("{}", self.grid.node(j)), format!("{v:e}")])
                    .map_err(|e| MomentError::Csv(e.to_string()))?;
            }
        }
        out.flush().map_err(|e| MomentError::Csv(e.to_string()))
    }

    /// Reads a family written by [`HFamily::write_csv`]. The result can be
    /// summed but not extended.
    pub fn read_csv<R: Read>(r: R, y: Point) -> Result<Self, MomentError> {
        let mut reader = csv::Reader::from_reader(r);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut times: Vec<f64> = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| MomentError::Csv(e.to_string()))?;
            let parse = |i: usize| -> Result<f64, MomentError> {
                rec.get(i)
                    .ok_or_else(|| MomentError::Csv("missing column".into()))?
                    .parse::<f64>()
                    .map_err(|e| MomentError::Csv(e.to_string()))
            };
            let n = parse(0)? as usize;
            let t = parse(1)?;
            let v = parse(2)?;
            if n == rows.len() {
                rows.push(Vec::new());
            } else if n + 1 != rows.len() {
                return Err(MomentError::Csv("rows must be grouped by increasing n".into()));
            }
            if n == 0 {
                times.push(t);
            }
            rows[n].push(v);
        }
        if rows.is_empty() || times.len() < 2 || rows.iter().any(|r| r.len() != times.len()) {
            return Err(MomentError::Csv("ragged or empty family".into()));
        }
        let grid = TimeGrid::new(times[times.len() - 1], times.len() - 1)?;
        for (j, t) in times.iter().enumerate() {
            if (grid.node(j) - t).abs() > 1e-9 * grid.t_max() {
                return Err(MomentError::Csv("time column is not a uniform grid".into()));
            }
        }
        Ok(Self {
            kernel: None,
            p: None,
            y,
            grid,
            weights: None,
            rows,
        })
    }

    pub fn kernel(&self) -> Option<&CorrelationKernel> {
        self.kernel.as_ref()
    }

    pub fn heat_params(&self) -> Option<&HeatParams> {
        self.p.as_ref()
    }
}

fn partial_sum(rows: &[Vec<f64>], gamma: f64, j: usize, n_top: usize) -> (f64, f64, f64) {
    let mut sum = 0.0;
    let mut gpow = 1.0;
    let mut last = 0.0;
    let mut prev = 0.0;
    for row in rows.iter().take(n_top + 1) {
        let term = gpow * row[j];
        sum += term;
        prev = last;
        last = term;
        gpow *= gamma;
    }
    (sum, last, prev)
}

/// Geometric tail bound `a_N r / (1 - r)` with `r = a_N / a_{N-1}`.
fn tail_bound(last: f64, prev: f64) -> f64 {
    if last == 0.0 {
        return 0.0;
    }
    if prev <= 0.0 {
        return f64::INFINITY;
    }
    let r = last / prev;
    if r >= 1.0 {
        f64::INFINITY
    } else {
        last * r / (1.0 - r)
    }
}

/// Builds the family on a default grid over `[0, t]` and returns `H(t; γ)`.
pub fn h_value(
    kernel: &CorrelationKernel,
    p: &HeatParams,
    y: &[f64],
    t: f64,
    gamma: f64,
    n_steps: usize,
    opts: &HOptions,
) -> Result<HValue, MomentError> {
    if t == 0.0 || gamma == 0.0 {
        return Ok(HValue {
            value: 1.0,
            tail_bound: 0.0,
            order: 0,
        });
    }
    let grid = TimeGrid::new(t, n_steps)?;
    let mut fam = compute_h_family_with(kernel, p, y, &grid, opts.initial_order.min(16), &opts.quad)?;
    fam.h_series_at_node(gamma, grid.n_steps(), opts)
}

/// `ln H(t; γ)` from the Mittag-Leffler closed form when `k(t) = C t^{-a}`
/// (constant, white noise, Riesz) and `y = 0`:
/// `H = E_{1-a,1}(γ C Γ(1-a) t^{1-a})`.
pub fn ln_h_closed_form(kernel: &CorrelationKernel, p: &HeatParams, gamma: f64, t: f64) -> Option<f64> {
    use crate::kernel::KernelVariant;
    use crate::special::{ln_gamma, ln_mittag_leffler, MittagLefflerParams};
    let a = -kernel.k_singularity();
    let c = match kernel.variant() {
        KernelVariant::Constant { level } => *level,
        KernelVariant::WhiteNoise1D | KernelVariant::Riesz { .. } => kernel.k_closed_form(p, 1.0)?,
        _ => return None,
    };
    if gamma == 0.0 || t == 0.0 {
        return Some(0.0);
    }
    let alpha = 1.0 - a;
    let z = gamma * c * ln_gamma(alpha).exp() * t.powf(alpha);
    let params = MittagLefflerParams::calibrated(alpha, 1.0).ok()?;
    ln_mittag_leffler(&params, z).ok()
}

/// `h_1(t, y) = ∫_0^t k(s) T_{ν/4}(s, y) ds`.
pub fn h1_offset(
    kernel: &CorrelationKernel,
    p: &HeatParams,
    t: f64,
    y: &[f64],
    quad: &QuadOptions,
) -> Result<f64, MomentError> {
    let y2 = norm2(y);
    if y2 == 0.0 {
        return Ok(kernel.h1(p, t)?);
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    Ok(integrate(|s| recursion_kernel(kernel, p, s, y2).unwrap_or(f64::NAN), 0.0, t, quad)?.value)
}

/// Interpolation table of `h_1(·, y)` on a logarithmic time grid, linear in
/// `(ln t, ln h_1)`, for bulk evaluation of `H*`.
#[derive(Debug, Clone)]
pub struct H1Table {
    ln_t: Vec<f64>,
    ln_h: Vec<f64>,
    small_slope: f64,
}

impl H1Table {
    pub fn build(
        kernel: &CorrelationKernel,
        p: &HeatParams,
        y: &[f64],
        t_min: f64,
        t_max: f64,
        points: usize,
    ) -> Result<Self, MomentError> {
        if !(t_min > 0.0 && t_max > t_min) || points < 3 {
            return Err(MomentError::InvalidInput(
                "H1Table needs 0 < t_min < t_max and >= 3 points".into(),
            ));
        }
        let y2 = norm2(y);
        let quad = QuadOptions::with_tolerances(1e-14, 1e-10);
        let ratio = (t_max / t_min).ln() / (points - 1) as f64;
        let ts: Vec<f64> = (0..points).map(|i| t_min * (ratio * i as f64).exp()).collect();
        let first = if y2 == 0.0 {
            kernel.h1(p, t_min)?
        } else {
            h1_offset(kernel, p, t_min, y, &quad)?
        };
        let pieces: Result<Vec<f64>, MomentError> = ts
            .par_windows(2)
            .map(|w| {
                Ok(integrate(
                    |s| recursion_kernel(kernel, p, s, y2).unwrap_or(f64::NAN),
                    w[0],
                    w[1],
                    &quad,
                )?
                .value)
            })
            .collect();
        let mut h = Vec::with_capacity(points);
        h.push(first);
        for piece in pieces? {
            h.push(h.last().expect("nonempty") + piece);
        }
        let ln_t: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
        let ln_h: Vec<f64> = h.iter().map(|v| v.max(1e-300).ln()).collect();
        let small_slope = if y2 == 0.0 {
            1.0 + kernel.k_singularity()
        } else {
            (ln_h[1] - ln_h[0]) / (ln_t[1] - ln_t[0])
        };
        Ok(Self {
            ln_t,
            ln_h,
            small_slope,
        })
    }

    pub fn ln_eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let x = t.ln();
        let n = self.ln_t.len();
        if x <= self.ln_t[0] {
            return self.ln_h[0] + self.small_slope * (x - self.ln_t[0]);
        }
        if x >= self.ln_t[n - 1] {
            let slope = (self.ln_h[n - 1] - self.ln_h[n - 2]) / (self.ln_t[n - 1] - self.ln_t[n - 2]);
            return self.ln_h[n - 1] + slope * (x - self.ln_t[n - 1]);
        }
        let j = self.ln_t.partition_point(|&v| v <= x).clamp(1, n - 1);
        let w = (x - self.ln_t[j - 1]) / (self.ln_t[j] - self.ln_t[j - 1]);
        self.ln_h[j - 1] * (1.0 - w) + self.ln_h[j] * w
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.ln_eval(t).exp()
    }
}

const H_STAR_CUTOFF: f64 = 1e-16;
const H_STAR_QUIET: usize = 10;
const H_STAR_MAX_TERMS: usize = 10_000_000;

/// `ln H*(t; γ)` with `H* = Σ γ^n h_1(t/n)^n`, terms supplied through
/// `ln_h1`. Summation stops once terms stay below `1e-16` of the running
/// maximum for ten consecutive orders.
pub fn ln_h_star_with<F: Fn(f64) -> f64>(ln_h1: F, gamma: f64, t: f64) -> f64 {
    if gamma == 0.0 || t == 0.0 {
        return 0.0;
    }
    let lg = gamma.ln();
    let cutoff = H_STAR_CUTOFF.ln();
    let mut ln_scale = 0.0f64;
    let mut acc = 1.0;
    let mut ln_max = 0.0f64;
    let mut quiet = 0;
    for n in 1..H_STAR_MAX_TERMS {
        let nf = n as f64;
        let ln_term = nf * (lg + ln_h1(t / nf));
        if ln_term > ln_scale {
            acc = acc * (ln_scale - ln_term).exp() + 1.0;
            ln_scale = ln_term;
        } else {
            acc += (ln_term - ln_scale).exp();
        }
        ln_max = ln_max.max(ln_term);
        if ln_term < ln_max + cutoff {
            quiet += 1;
            if quiet >= H_STAR_QUIET {
                break;
            }
        } else {
            quiet = 0;
        }
    }
    ln_scale + acc.ln()
}

/// `H*(t, y; γ)` with direct `h_1` evaluations.
pub fn h_star(kernel: &CorrelationKernel, p: &HeatParams, gamma: f64, t: f64, y: &[f64]) -> Result<f64, MomentError> {
    let quad = QuadOptions::default();
    let failure = std::cell::Cell::new(None);
    let ln = ln_h_star_with(
        |s| match h1_offset(kernel, p, s, y, &quad) {
            Ok(v) => v.ln(),
            Err(e) => {
                failure.set(Some(e));
                f64::NEG_INFINITY
            }
        },
        gamma,
        t,
    );
    if let Some(e) = failure.take() {
        return Err(e);
    }
    Ok(ln.exp())
}

/// `L_0(t, x, x') = G(t, x) G(t, x')`.
pub fn l0(p: &HeatParams, t: f64, x: &[f64], xp: &[f64]) -> Result<f64, MomentError> {
    Ok(crate::kernel::heat_kernel(p, t, x)? * crate::kernel::heat_kernel(p, t, xp)?)
}

/// `L_1(t, x, x'; y) = G(t,x) G(t,x') ∫_0^t ds ∫ f(z) G(2s(t-s)/t, z + y - (s/t)(x - x')) dz`.
pub fn l1_exact(
    kernel: &CorrelationKernel,
    p: &HeatParams,
    t: f64,
    x: &[f64],
    xp: &[f64],
    y: &[f64],
) -> Result<f64, MomentError> {
    let prefactor = l0(p, t, x, xp)?;
    Ok(prefactor * l1_time_integral(kernel, p, t, x, xp, y, &QuadOptions::with_tolerances(1e-13, 1e-9))?)
}

/// The time integral in [`l1_exact`] without the `G G` prefactor.
pub fn l1_time_integral(
    kernel: &CorrelationKernel,
    p: &HeatParams,
    t: f64,
    x: &[f64],
    xp: &[f64],
    y: &[f64],
    quad: &QuadOptions,
) -> Result<f64, MomentError> {
    let d = kernel.dim();
    if x.len() != d || xp.len() != d || y.len() != d {
        return Err(KernelError::DimensionMismatch {
            expected: d,
            got: x.len(),
        }
        .into());
    }
    let diff: Vec<f64> = x.iter().zip(xp).map(|(a, b)| a - b).collect();
    let shift = |s: f64| -> Vec<f64> { y.iter().zip(&diff).map(|(yi, di)| yi - s / t * di).collect() };
    let inner = |s: f64| -> f64 {
        let tau = 2.0 * s * (t - s) / t;
        if tau <= 0.0 {
            return f64::NAN;
        }
        kernel.smoothed(p, tau, &shift(s)).unwrap_or(f64::NAN)
    };
    let e = kernel.k_singularity();
    let weight_at = |m2: f64| {
        if e != 0.0 && m2 < 1e-24 {
            SingularWeight::new(e).expect("exponent > -1")
        } else {
            SingularWeight::none()
        }
    };
    let w0 = weight_at(norm2(&shift(0.0)));
    let w1 = weight_at(norm2(&shift(t)));
    let half = 0.5 * t;
    let left = integrate_singular(|s| inner(s) * s.powf(-w0.exponent()), 0.0, half, w0, quad)?;
    let right = integrate_singular(|u| inner(t - u) * u.powf(-w1.exponent()), 0.0, half, w1, quad)?;
    Ok(left.value + right.value)
}

/// `K_upper = L_0(t, x, x') H(t; 2λ^2)`, an upper bound for `λ^{-2} K_λ`.
pub fn k_upper(
    fam0: &mut HFamily,
    p: &HeatParams,
    lam: f64,
    t: f64,
    x: &[f64],
    xp: &[f64],
    opts: &HOptions,
) -> Result<f64, MomentError> {
    if norm2(fam0.y()) != 0.0 {
        return Err(MomentError::InvalidInput("K_upper needs the family at y = 0".into()));
    }
    let h = fam0.h_series(2.0 * lam * lam, t, opts)?;
    Ok(l0(p, t, x, xp)? * h.value)
}

/// `K_lower = L_0(t, x, x') T_ν(t, x - x') H(t/2, y; (2√3)^{-d} λ^2)`,
/// a lower bound for `λ^{-2} K_λ` taken from the family at offset `y`.
pub fn k_lower(
    fam_y: &mut HFamily,
    p: &HeatParams,
    lam: f64,
    t: f64,
    x: &[f64],
    xp: &[f64],
    opts: &HOptions,
) -> Result<f64, MomentError> {
    let d = p.dim();
    let gamma = lower_gamma_factor(d) * lam * lam;
    let h = fam_y.h_series(gamma, 0.5 * t, opts)?;
    let tf = crate::kernel::gauss_factor_r2(p.nu(), t, sq_dist(x, xp));
    Ok(l0(p, t, x, xp)? * tf * h.value)
}

/// `(2√3)^{-d}`.
pub fn lower_gamma_factor(d: usize) -> f64 {
    (2.0 * 3f64.sqrt()).powi(-(d as i32))
}

/// Envelope on `E[u(t,x) u(t,x')]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentBound {
    pub lower: f64,
    pub upper: f64,
    pub t: f64,
    pub x: Point,
    pub xp: Point,
    pub lam_lower: f64,
    pub lam_upper: f64,
    pub mode: BoundMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundMode {
    ExactLinear,
    Envelope,
}

impl BoundMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundMode::ExactLinear => "exact_linear",
            BoundMode::Envelope => "envelope",
        }
    }
}

/// Resolution controls for [`two_point_bounds`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundOptions {
    /// Time steps for each `h_n` family (over `[0, t]` or `[0, t/2]`).
    pub n_steps: usize,
    /// Offset nodes `|y|` for tabulating `H(t/2, |y|)` (continuous measures).
    pub offset_nodes: usize,
    /// Gauss-Legendre nodes per axis for spatial integrals.
    pub spatial_nodes: usize,
    pub h: HOptions,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self {
            n_steps: 512,
            offset_nodes: 48,
            spatial_nodes: 96,
            h: HOptions::default(),
        }
    }
}

/// `H(t/2, ρ; γ) - 1` tabulated on `ρ ∈ [0, ρ_max]`, linear in between.
struct OffsetTable {
    rho: Vec<f64>,
    excess: Vec<f64>,
}

impl OffsetTable {
    fn build(
        kernel: &CorrelationKernel,
        p: &HeatParams,
        t_half: f64,
        gamma: f64,
        rho_max: f64,
        opts: &BoundOptions,
    ) -> Result<Self, MomentError> {
        let n = opts.offset_nodes.max(2);
        // nodes clustered toward 0, where H varies fastest
        let rho: Vec<f64> = (0..n).map(|i| rho_max * (i as f64 / (n - 1) as f64).powi(2)).collect();
        let excess: Result<Vec<f64>, MomentError> = rho
            .par_iter()
            .map(|&r| {
                let mut y = vec![0.0; kernel.dim()];
                y[0] = r;
                let h = h_value(kernel, p, &y, t_half, gamma, opts.n_steps, &opts.h)?;
                Ok((h.value - 1.0).max(0.0))
            })
            .collect();
        Ok(Self { rho, excess: excess? })
    }

    fn eval(&self, r: f64) -> f64 {
        let n = self.rho.len();
        if r >= self.rho[n - 1] {
            return self.excess[n - 1];
        }
        let j = self.rho.partition_point(|&v| v <= r).clamp(1, n - 1);
        let w = (r - self.rho[j - 1]) / (self.rho[j] - self.rho[j - 1]);
        self.excess[j - 1] * (1.0 - w) + self.excess[j] * w
    }
}

/// Two-point bounds for nonnegative initial measures:
///
/// - upper `= J_0(t,x) J_0(t,x') H(t; 2 Lip^2)`;
/// - lower `= J_0(t,x) J_0(t,x') + ∬ μ(dz) μ(dz') L_0 T_ν (H(t/2, z'-z; (2√3)^{-d} lip^2) - 1)`,
///   evaluated at `(t, x - z, x' - z')`.
///
/// Keeping the `n = 0` term exact makes the lower bound reduce to `J_1`
/// at `lip = 0`.
#[allow(clippy::too_many_arguments)]
pub fn two_point_bounds(
    mu: &InitialMeasure,
    kernel: &CorrelationKernel,
    p: &HeatParams,
    lip: f64,
    lip_upper: f64,
    t: f64,
    x: &[f64],
    xp: &[f64],
    opts: &BoundOptions,
) -> Result<MomentBound, MomentError> {
    if !(lip >= 0.0 && lip_upper >= lip) {
        return Err(MomentError::InvalidInput(format!(
            "need 0 <= lip <= Lip, got lip = {lip}, Lip = {lip_upper}"
        )));
    }
    if !(t > 0.0) {
        return Err(KernelError::NonpositiveTime(t).into());
    }
    let d = p.dim();
    if mu.dim() != d || kernel.dim() != d || x.len() != d || xp.len() != d {
        return Err(KernelError::DimensionMismatch {
            expected: d,
            got: mu.dim(),
        }
        .into());
    }
    let j1 = mu.j0(p, t, x)? * mu.j0(p, t, xp)?;
    let h_up = if lip_upper == 0.0 {
        1.0
    } else {
        h_value(
            kernel,
            p,
            &vec![0.0; d],
            t,
            2.0 * lip_upper * lip_upper,
            opts.n_steps,
            &opts.h,
        )?
        .value
    };
    let upper = j1 * h_up;
    let gamma_low = lower_gamma_factor(d) * lip * lip;
    let lower = if gamma_low == 0.0 {
        j1
    } else {
        j1 + lower_excess(mu, kernel, p, gamma_low, t, x, xp, opts)?
    };
    let mode = if lip == lip_upper {
        BoundMode::ExactLinear
    } else {
        BoundMode::Envelope
    };
    Ok(MomentBound {
        lower,
        upper,
        t,
        x: x.to_vec(),
        xp: xp.to_vec(),
        lam_lower: lip,
        lam_upper: lip_upper,
        mode,
    })
}

/// `∬ μ(dz) μ(dz') L_0(t, x-z, x'-z') T_ν(t, (x-z)-(x'-z')) (H(t/2, z'-z; γ) - 1)`.
#[allow(clippy::too_many_arguments)]
fn lower_excess(
    mu: &InitialMeasure,
    kernel: &CorrelationKernel,
    p: &HeatParams,
    gamma: f64,
    t: f64,
    x: &[f64],
    xp: &[f64],
    opts: &BoundOptions,
) -> Result<f64, MomentError> {
    let d = p.dim();
    let nu = p.nu();
    let th = 0.5 * t;
    let pair = |zx: &[f64], zp: &[f64]| -> f64 {
        // L_0 T_ν at (t, x - z, x' - z')
        let a: Vec<f64> = x.iter().zip(zx).map(|(u, v)| u - v).collect();
        let b: Vec<f64> = xp.iter().zip(zp).map(|(u, v)| u - v).collect();
        heat_kernel_r2(nu, d, t, norm2(&a))
            * heat_kernel_r2(nu, d, t, norm2(&b))
            * crate::kernel::gauss_factor_r2(nu, t, sq_dist(&a, &b))
    };
    match mu.variant() {
        MeasureVariant::DiracAt(_) | MeasureVariant::Atoms(_) => {
            let atoms = mu.as_atoms().expect("discrete measure");
            // exact offsets, grouped by |z' - z|
            let mut total = 0.0;
            let mut cache: Vec<(f64, f64)> = Vec::new();
            for (zi, wi) in &atoms {
                for (zj, wj) in &atoms {
                    let r = sq_dist(zj, zi).sqrt();
                    let excess = match cache.iter().find(|(rr, _)| (rr - r).abs() <= 1e-14 * r.max(1.0)) {
                        Some((_, v)) => *v,
                        None => {
                            let mut y = vec![0.0; d];
                            y[0] = r;
                            let v = (h_value(kernel, p, &y, th, gamma, opts.n_steps, &opts.h)?.value - 1.0).max(0.0);
                            cache.push((r, v));
                            v
                        }
                    };
                    total += wi * wj * pair(zi, zj) * excess;
                }
            }
            Ok(total)
        }
        MeasureVariant::LebesgueScaled(c) => {
            // ∫ du φ(|u|) F(|u - a|), a = x' - x, φ(|u|) = G(2t, u) T_ν(t, u)
            let a: Vec<f64> = xp.iter().zip(x).map(|(u, v)| u - v).collect();
            let a_norm = norm2(&a).sqrt();
            let sd = (0.4 * nu * t).sqrt();
            let table = OffsetTable::build(kernel, p, th, gamma, a_norm + 10.0 * sd, opts)?;
            let phi = |r2: f64| heat_kernel_r2(nu, d, 2.0 * t, r2) * crate::kernel::gauss_factor_r2(nu, t, r2);
            let v = if d == 1 {
                let (gx, gw) = gauss_legendre(opts.spatial_nodes);
                let half = 10.0 * sd;
                gx.iter()
                    .zip(&gw)
                    .map(|(g, w)| {
                        let u = half * g;
                        half * w * phi(u * u) * table.eval((u - a_norm).abs())
                    })
                    .sum::<f64>()
            } else {
                cylinder_integral(d, sd, a_norm, opts.spatial_nodes, |r2, dist| phi(r2) * table.eval(dist))
            };
            Ok(c * c * v)
        }
        MeasureVariant::Density(dens) => {
            if d > 3 {
                return Err(MomentError::UnsupportedMeasure(
                    "density x density bounds are limited to d <= 3".into(),
                ));
            }
            let sd = (nu * t).sqrt();
            let per_dim = match d {
                1 => opts.spatial_nodes.max(32),
                2 => 48,
                _ => 16,
            };
            let win = |c: &[f64]| -> Vec<(f64, f64)> { c.iter().map(|v| (v - 9.0 * sd, v + 9.0 * sd)).collect() };
            let panel = (18.0 * sd / (per_dim as f64 / 8.0)).max(1e-9);
            let zs = dens.tensor_nodes(&win(x), panel, per_dim);
            let zps = dens.tensor_nodes(&win(xp), panel, per_dim);
            if zs.is_empty() || zps.is_empty() {
                return Ok(0.0);
            }
            let rho_max = zs
                .iter()
                .flat_map(|(z, _)| zps.iter().map(move |(zp, _)| sq_dist(z, zp)))
                .fold(0.0f64, f64::max)
                .sqrt();
            let table = OffsetTable::build(kernel, p, th, gamma, rho_max.max(1e-12), opts)?;
            let total: f64 = zs
                .par_iter()
                .map(|(z, wz)| {
                    zps.iter()
                        .map(|(zp, wzp)| wz * wzp * pair(z, zp) * table.eval(sq_dist(z, zp).sqrt()))
                        .sum::<f64>()
                })
                .sum();
            Ok(total)
        }
    }
}

/// `∫_{R^d} g(|u|^2, |u - a e_1|) du` for `d >= 2` with Gauss-Legendre nodes
/// along `e_1` and radially across it; `g` decays on the scale `sd`.
fn cylinder_integral<G: Fn(f64, f64) -> f64>(d: usize, sd: f64, a: f64, nodes: usize, g: G) -> f64 {
    let (gx, gw) = gauss_legendre(nodes);
    let half = 10.0 * sd;
    let area = crate::quadrature::unit_sphere_area(d - 1);
    let mut total = 0.0;
    for (x1, w1) in gx.iter().zip(&gw) {
        let u1 = half * x1;
        for (xr, wr) in gx.iter().zip(&gw) {
            let r = 0.5 * half * (xr + 1.0);
            let jac = if d == 2 { 1.0 } else { r.powi(d as i32 - 2) };
            let r2 = u1 * u1 + r * r;
            let dist = ((u1 - a) * (u1 - a) + r * r).sqrt();
            total += half * w1 * 0.5 * half * wr * area * jac * g(r2, dist);
        }
    }
    total
}

/// `J_1(t, x, x') = J_0(t, x) J_0(t, x')`.
pub fn j1(mu: &InitialMeasure, p: &HeatParams, t: f64, x: &[f64], xp: &[f64]) -> Result<f64, MomentError> {
    Ok(mu.j0(p, t, x)? * mu.j0(p, t, xp)?)
}

/// Exact second moment `e^{λ^2 level t}` for constant kernels, flat data.
pub fn flat_constant_second_moment(level: f64, lam: f64, t: f64) -> f64 {
    (lam * lam * level * t).exp()
}

/// `(2π)^{-d}` appears in the alternative (Fourier) normalisation; exposed for reports.
pub fn two_pi_power(d: usize) -> f64 {
    (2.0 * PI).powi(-(d as i32))
}
