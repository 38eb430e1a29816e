//! Monte Carlo solver for the one-dimensional equation: explicit Euler in
//! time, centered differences in space, reflecting ends, and spatially
//! correlated Gaussian increments.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::kernel::{CorrelationKernel, HeatParams, InitialMeasure, KernelError, KernelVariant, MeasureVariant};
use crate::moments::{two_point_bounds, BoundOptions, MomentError};
use crate::special::erfc;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("explicit scheme unstable: dt = {dt:e} exceeds dx^2/nu = {limit:e}")]
    StabilityViolated { dt: f64, limit: f64 },
    #[error("noise covariance not nonnegative-definite: clamped fraction {clamped_fraction:e} of the trace")]
    IndefiniteCovariance { clamped_fraction: f64 },
    #[error("non-finite value on path {path} at step {step}")]
    NaNDetected { path: usize, step: usize },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error("csv output: {0}")]
    Csv(String),
}

type Result<T> = std::result::Result<T, SimError>;

/// Largest clamped-eigenvalue mass, relative to the trace, accepted when
/// factoring the grid covariance.
pub const CLAMP_TOLERANCE: f64 = 1e-6;
pub const MIN_BATCHES: usize = 30;
const BOUNDARY_MASS_TOL: f64 = 1e-8;
const DENSE_FALLBACK_MAX: usize = 1024;

/// Uniform grid `x_i = x_min + i dx`, `i < n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    pub x_min: f64,
    pub dx: f64,
    pub n: usize,
}

impl UniformGrid {
    pub fn symmetric(half_width: f64, n: usize) -> Result<Self> {
        if !(half_width > 0.0 && n >= 3) {
            return Err(SimError::InvalidConfig(format!(
                "need L > 0 and n_x >= 3, got {half_width}, {n}"
            )));
        }
        Ok(Self {
            x_min: -half_width,
            dx: 2.0 * half_width / (n - 1) as f64,
            n,
        })
    }

    pub fn node(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx
    }

    pub fn x_max(&self) -> f64 {
        self.node(self.n - 1)
    }

    pub fn nearest(&self, x: f64) -> usize {
        (((x - self.x_min) / self.dx).round().max(0.0) as usize).min(self.n - 1)
    }

    /// Linear interpolation of nodal values at `x`.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let s = ((x - self.x_min) / self.dx).clamp(0.0, (self.n - 1) as f64);
        let i = (s.floor() as usize).min(self.n - 2);
        let w = s - i as f64;
        values[i] * (1.0 - w) + values[i + 1] * w
    }
}

/// Nonlinearity `ρ`.
#[derive(Debug, Clone, PartialEq)]
pub enum Rho {
    Linear(f64),
    /// Piecewise-linear through `(u_k, ρ_k)`, continued beyond the table
    /// with slope `(lip + Lip)/2`.
    Table {
        u: Vec<f64>,
        values: Vec<f64>,
        lip: f64,
        lip_upper: f64,
    },
}

impl Rho {
    pub fn table(u: Vec<f64>, values: Vec<f64>, lip: f64, lip_upper: f64) -> Result<Self> {
        if u.len() < 2 || u.len() != values.len() || !u.windows(2).all(|w| w[0] < w[1]) {
            return Err(SimError::InvalidConfig("rho table needs >= 2 increasing nodes".into()));
        }
        if !(lip >= 0.0 && lip_upper >= lip) {
            return Err(SimError::InvalidConfig(format!(
                "need 0 <= lip <= Lip, got {lip}, {lip_upper}"
            )));
        }
        for (&x, &r) in u.iter().zip(&values) {
            let a = r.abs();
            let tol = 1e-12 * (1.0 + x.abs());
            if a < lip * x.abs() - tol || a > lip_upper * x.abs() + tol {
                return Err(SimError::InvalidConfig(format!(
                    "rho({x}) = {r} violates lip|u| <= |rho(u)| <= Lip|u|"
                )));
            }
        }
        Ok(Rho::Table {
            u,
            values,
            lip,
            lip_upper,
        })
    }

    /// Tabulates `f` on `n` equispaced nodes of `[lo, hi]`.
    pub fn tabulate<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize, lip: f64, lip_upper: f64) -> Result<Self> {
        if n < 2 || !(hi > lo) {
            return Err(SimError::InvalidConfig(
                "rho tabulation needs n >= 2 and hi > lo".into(),
            ));
        }
        let u: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        let values = u.iter().map(|&x| f(x)).collect();
        Self::table(u, values, lip, lip_upper)
    }

    /// `(lip, Lip)`.
    pub fn constants(&self) -> (f64, f64) {
        match self {
            Rho::Linear(l) => (l.abs(), l.abs()),
            Rho::Table { lip, lip_upper, .. } => (*lip, *lip_upper),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Rho::Linear(l) => l * x,
            Rho::Table {
                u,
                values,
                lip,
                lip_upper,
            } => {
                let last = u.len() - 1;
                let s = 0.5 * (lip + lip_upper);
                if x <= u[0] {
                    values[0] + s * (x - u[0])
                } else if x >= u[last] {
                    values[last] + s * (x - u[last])
                } else {
                    let j = u.partition_point(|&v| v <= x).min(last);
                    let w = (x - u[j - 1]) / (u[j] - u[j - 1]);
                    values[j - 1] * (1.0 - w) + values[j] * w
                }
            }
        }
    }

    fn vanishes_at_zero(&self) -> bool {
        self.eval(0.0) == 0.0
    }
}

#[derive(Clone)]
enum Factor {
    White {
        sd: f64,
    },
    RankOne {
        sd: f64,
    },
    Circulant {
        sqrt_eig: Arc<Vec<f64>>,
        fft: Arc<dyn Fft<f64>>,
    },
    Dense {
        a: Arc<DMatrix<f64>>,
    },
}

/// Sampler of increment vectors with covariance `f(x_i - x_j) dt`.
#[derive(Clone)]
pub struct NoiseSampler {
    n: usize,
    factor: Factor,
    clamped_fraction: f64,
}

impl std::fmt::Debug for NoiseSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NoiseSampler")
            .field("n", &self.n)
            .field("method", &self.method())
            .field("clamped_fraction", &self.clamped_fraction)
            .finish()
    }
}

fn lag_covariance(kernel: &CorrelationKernel, dx: f64, k: usize) -> Result<f64> {
    if k == 0 {
        if let KernelVariant::Riesz { alpha } = kernel.variant() {
            // cell average of |x|^{-α} over [-dx/2, dx/2]
            return Ok((dx / 2.0).powf(-alpha) / (1.0 - alpha));
        }
    }
    Ok(kernel.eval_f(&[k as f64 * dx])?)
}

pub fn build_noise_sampler(kernel: &CorrelationKernel, grid: &UniformGrid, dt: f64) -> Result<NoiseSampler> {
    if kernel.dim() != 1 {
        return Err(SimError::InvalidConfig("the simulator is one-dimensional".into()));
    }
    if !(dt > 0.0) {
        return Err(SimError::InvalidConfig(format!("dt = {dt}")));
    }
    let n = grid.n;
    let factor = match kernel.variant() {
        KernelVariant::WhiteNoise1D => Factor::White {
            sd: (dt / grid.dx).sqrt(),
        },
        KernelVariant::Constant { level } => Factor::RankOne {
            sd: (level * dt).sqrt(),
        },
        _ => {
            let cov: Vec<f64> = (0..n)
                .map(|k| lag_covariance(kernel, grid.dx, k).map(|c| c * dt))
                .collect::<Result<_>>()?;
            let (factor, frac) = circulant_factor(&cov);
            if frac <= CLAMP_TOLERANCE {
                return Ok(NoiseSampler {
                    n,
                    factor,
                    clamped_fraction: frac,
                });
            }
            if n > DENSE_FALLBACK_MAX {
                return Err(SimError::IndefiniteCovariance { clamped_fraction: frac });
            }
            let (factor, frac) = dense_factor(&cov);
            if frac > CLAMP_TOLERANCE {
                return Err(SimError::IndefiniteCovariance { clamped_fraction: frac });
            }
            return Ok(NoiseSampler {
                n,
                factor,
                clamped_fraction: frac,
            });
        }
    };
    Ok(NoiseSampler {
        n,
        factor,
        clamped_fraction: 0.0,
    })
}

fn circulant_factor(cov: &[f64]) -> (Factor, f64) {
    let n = cov.len();
    let m = 2 * (n - 1);
    let mut row: Vec<Complex<f64>> = (0..m)
        .map(|k| Complex::new(cov[if k < n { k } else { m - k }], 0.0))
        .collect();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(m);
    fft.process(&mut row);
    let trace: f64 = row.iter().map(|c| c.re).sum();
    let neg: f64 = row.iter().map(|c| (-c.re).max(0.0)).sum();
    let sqrt_eig = row.iter().map(|c| (c.re.max(0.0) / m as f64).sqrt()).collect();
    (
        Factor::Circulant {
            sqrt_eig: Arc::new(sqrt_eig),
            fft,
        },
        neg / trace.abs().max(f64::MIN_POSITIVE),
    )
}

fn dense_factor(cov: &[f64]) -> (Factor, f64) {
    let n = cov.len();
    let c = DMatrix::from_fn(n, n, |i, j| cov[i.abs_diff(j)]);
    let eig = SymmetricEigen::new(c);
    let trace: f64 = eig.eigenvalues.iter().sum();
    let neg: f64 = eig.eigenvalues.iter().map(|v| (-v).max(0.0)).sum();
    let mut a = eig.eigenvectors;
    for (j, v) in eig.eigenvalues.iter().enumerate() {
        let s = v.max(0.0).sqrt();
        a.column_mut(j).scale_mut(s);
    }
    (
        Factor::Dense { a: Arc::new(a) },
        neg / trace.abs().max(f64::MIN_POSITIVE),
    )
}

impl NoiseSampler {
    pub fn method(&self) -> &'static str {
        match self.factor {
            Factor::White { .. } => "independent-cells",
            Factor::RankOne { .. } => "rank-one",
            Factor::Circulant { .. } => "circulant-embedding",
            Factor::Dense { .. } => "dense-eigen",
        }
    }

    pub fn clamped_fraction(&self) -> f64 {
        self.clamped_fraction
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Independent stream for work unit `index`.
    pub fn stream(&self, seed: u64, index: u64) -> NoiseStream<'_> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        NoiseStream {
            sampler: self,
            rng,
            buffer: Vec::new(),
            spare: None,
        }
    }
}

/// Deterministic sequence of increment vectors.
pub struct NoiseStream<'a> {
    sampler: &'a NoiseSampler,
    rng: ChaCha8Rng,
    buffer: Vec<Complex<f64>>,
    spare: Option<Vec<f64>>,
}

impl NoiseStream<'_> {
    fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn next_into(&mut self, out: &mut [f64]) {
        let n = self.sampler.n;
        match &self.sampler.factor {
            Factor::White { sd } => {
                let sd = *sd;
                for v in out.iter_mut() {
                    *v = sd * self.normal();
                }
            }
            Factor::RankOne { sd } => {
                let v = sd * self.normal();
                out.fill(v);
            }
            Factor::Dense { a } => {
                let z: Vec<f64> = (0..n).map(|_| self.normal()).collect();
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..n).map(|j| a[(i, j)] * z[j]).sum();
                }
            }
            Factor::Circulant { sqrt_eig, fft } => {
                if let Some(spare) = self.spare.take() {
                    out.copy_from_slice(&spare);
                    return;
                }
                let sqrt_eig = Arc::clone(sqrt_eig);
                let fft = Arc::clone(fft);
                let m = sqrt_eig.len();
                let mut buf = std::mem::take(&mut self.buffer);
                buf.clear();
                for s in sqrt_eig.iter() {
                    let re = self.normal();
                    let im = self.normal();
                    buf.push(Complex::new(s * re, s * im));
                }
                fft.process(&mut buf);
                debug_assert_eq!(buf.len(), m);
                for (o, c) in out.iter_mut().zip(&buf) {
                    *o = c.re;
                }
                self.spare = Some(buf[..n].iter().map(|c| c.im).collect());
                self.buffer = buf;
            }
        }
    }
}

/// Two-point moment target `E[u(t,x) u(t,x')]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub t: f64,
    pub x: f64,
    pub xp: f64,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub kernel: CorrelationKernel,
    pub p: HeatParams,
    pub rho: Rho,
    pub mu: InitialMeasure,
    pub half_width: f64,
    pub n_x: usize,
    pub t_max: f64,
    pub n_t: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub antithetic: bool,
    pub targets: Vec<Target>,
}

impl SimConfig {
    pub fn grid(&self) -> Result<UniformGrid> {
        UniformGrid::symmetric(self.half_width, self.n_x)
    }

    pub fn dt(&self) -> f64 {
        self.t_max / self.n_t as f64
    }

    fn units(&self) -> usize {
        if self.antithetic {
            self.n_paths / 2
        } else {
            self.n_paths
        }
    }

    fn target_steps(&self) -> Result<Vec<usize>> {
        let dt = self.dt();
        self.targets
            .iter()
            .map(|tg| {
                let k = (tg.t / dt).round();
                if !(tg.t > 0.0 && tg.t <= self.t_max * (1.0 + 1e-12)) || (k * dt - tg.t).abs() > 1e-9 * tg.t {
                    return Err(SimError::InvalidConfig(format!(
                        "target time {} is not a positive grid time",
                        tg.t
                    )));
                }
                if tg.x.abs() > self.half_width || tg.xp.abs() > self.half_width {
                    return Err(SimError::InvalidConfig(format!(
                        "target ({}, {}) outside the domain",
                        tg.x, tg.xp
                    )));
                }
                Ok(k as usize)
            })
            .collect()
    }

    /// Checks every precondition of [`simulate`].
    pub fn validate(&self) -> Result<()> {
        if self.p.dim() != 1 || self.kernel.dim() != 1 || self.mu.dim() != 1 {
            return Err(SimError::InvalidConfig("the simulator is one-dimensional".into()));
        }
        let grid = self.grid()?;
        if !(self.t_max > 0.0 && self.n_t >= 1) {
            return Err(SimError::InvalidConfig(format!(
                "t_max = {}, n_t = {}",
                self.t_max, self.n_t
            )));
        }
        if self.antithetic && !self.n_paths.is_multiple_of(2) {
            return Err(SimError::InvalidConfig(
                "antithetic sampling needs an even path count".into(),
            ));
        }
        if self.units() < MIN_BATCHES {
            return Err(SimError::InvalidConfig(format!(
                "need at least {MIN_BATCHES} independent units for batch errors"
            )));
        }
        let limit = grid.dx * grid.dx / self.p.nu();
        if self.dt() > limit {
            return Err(SimError::StabilityViolated { dt: self.dt(), limit });
        }
        let sd = (self.p.nu() * self.t_max).sqrt();
        let tail = |z: f64, w: f64| {
            let left = z - grid.x_min;
            let right = grid.x_max() - z;
            w * 0.5 * (erfc(left / (sd * 2f64.sqrt())) + erfc(right / (sd * 2f64.sqrt())))
        };
        let leak = match self.mu.variant() {
            MeasureVariant::LebesgueScaled(_) => 0.0,
            MeasureVariant::DiracAt(z) => tail(z[0], 1.0),
            MeasureVariant::Atoms(atoms) => {
                let total: f64 = atoms.iter().map(|(_, w)| w).sum();
                atoms.iter().map(|(z, w)| tail(z[0], w / total)).sum()
            }
            MeasureVariant::Density(dens) => {
                let (a, b) = dens.bounds()[0];
                tail(a, 0.5) + tail(b, 0.5)
            }
        };
        if leak >= BOUNDARY_MASS_TOL {
            return Err(SimError::InvalidConfig(format!(
                "domain too small: boundary mass {leak:e} of the heat kernel at t_max"
            )));
        }
        self.target_steps()?;
        Ok(())
    }

    fn initial_profile(&self, grid: &UniformGrid) -> Vec<f64> {
        let mut u = vec![0.0; grid.n];
        match self.mu.variant() {
            MeasureVariant::LebesgueScaled(c) => u.fill(*c),
            MeasureVariant::DiracAt(z) => u[grid.nearest(z[0])] += 1.0 / grid.dx,
            MeasureVariant::Atoms(atoms) => {
                for (z, w) in atoms {
                    u[grid.nearest(z[0])] += w / grid.dx;
                }
            }
            MeasureVariant::Density(dens) => {
                for (i, v) in u.iter_mut().enumerate() {
                    *v = dens.eval(&[grid.node(i)]);
                }
            }
        }
        u
    }
}

/// Estimate with its batch standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetEstimate {
    pub target: Target,
    pub estimate: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub grid: UniformGrid,
    pub dt: f64,
    pub n_t: usize,
    /// `E u(t_max, x_i)` and its standard error.
    pub first_moment: Vec<f64>,
    pub first_moment_stderr: Vec<f64>,
    pub targets: Vec<TargetEstimate>,
    pub n_paths: usize,
    pub n_batches: usize,
    pub seed: u64,
    pub sampler: &'static str,
    pub clamped_fraction: f64,
    /// Nodes that went negative beyond round-off while `μ ≥ 0`, `ρ(0) = 0`.
    pub positivity_flags: usize,
    pub min_value: f64,
}

struct BatchSums {
    field: Vec<f64>,
    targets: Vec<f64>,
    units: usize,
    positivity_flags: usize,
    min_value: f64,
}

struct PathRecord {
    field: Vec<f64>,
    targets: Vec<f64>,
    positivity_flags: usize,
    min_value: f64,
}

fn laplacian_step(u: &[f64], out: &mut [f64], coef: f64) {
    let n = u.len();
    out[0] = u[0] + coef * 2.0 * (u[1] - u[0]);
    out[n - 1] = u[n - 1] + coef * 2.0 * (u[n - 2] - u[n - 1]);
    for i in 1..n - 1 {
        out[i] = u[i] + coef * (u[i + 1] - 2.0 * u[i] + u[i - 1]);
    }
}

struct Stepper<'a> {
    cfg: &'a SimConfig,
    grid: UniformGrid,
    u0: Vec<f64>,
    steps: Vec<usize>,
    check_sign: bool,
}

impl Stepper<'_> {
    fn run(&self, stream: &mut NoiseStream<'_>, sign: f64, path: usize) -> Result<PathRecord> {
        let n = self.grid.n;
        let dt = self.cfg.dt();
        let coef = 0.5 * self.cfg.p.nu() * dt / (self.grid.dx * self.grid.dx);
        let scale = self.u0.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
        let mut u = self.u0.clone();
        let mut next = vec![0.0; n];
        let mut dw = vec![0.0; n];
        let mut targets = vec![0.0; self.cfg.targets.len()];
        let mut flags = 0;
        let mut min_value = u.iter().copied().fold(f64::INFINITY, f64::min);
        for step in 1..=self.cfg.n_t {
            stream.next_into(&mut dw);
            laplacian_step(&u, &mut next, coef);
            for i in 0..n {
                next[i] += sign * self.cfg.rho.eval(u[i]) * dw[i];
            }
            std::mem::swap(&mut u, &mut next);
            if u.iter().any(|v| !v.is_finite()) {
                return Err(SimError::NaNDetected { path, step });
            }
            if self.check_sign {
                let floor = -10.0 * f64::EPSILON * step as f64 * scale;
                for &v in &u {
                    min_value = min_value.min(v);
                    if v < floor {
                        flags += 1;
                    }
                }
            }
            for (k, tg) in self.cfg.targets.iter().enumerate() {
                if self.steps[k] == step {
                    targets[k] = self.grid.interpolate(&u, tg.x) * self.grid.interpolate(&u, tg.xp);
                }
            }
        }
        Ok(PathRecord {
            field: u,
            targets,
            positivity_flags: flags,
            min_value,
        })
    }
}

fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        v.iter().sum()
    } else {
        let (a, b) = v.split_at(v.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

fn mean_and_stderr(batch_totals: &[f64], batch_units: &[usize]) -> (f64, f64) {
    let total_units: usize = batch_units.iter().sum();
    let mean = pairwise_sum(batch_totals) / total_units as f64;
    let means: Vec<f64> = batch_totals
        .iter()
        .zip(batch_units)
        .map(|(s, &k)| s / k as f64)
        .collect();
    let b = means.len() as f64;
    let dev: Vec<f64> = means.iter().map(|m| (m - mean).powi(2)).collect();
    let var = pairwise_sum(&dev) / (b - 1.0);
    (mean, (var / b).sqrt())
}

pub fn simulate(cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let sampler = build_noise_sampler(&cfg.kernel, &grid, cfg.dt())?;
    let mu_nonneg = match cfg.mu.variant() {
        MeasureVariant::LebesgueScaled(c) => *c >= 0.0,
        MeasureVariant::Atoms(a) => a.iter().all(|(_, w)| *w >= 0.0),
        _ => true,
    };
    let stepper = Stepper {
        cfg,
        grid,
        u0: cfg.initial_profile(&grid),
        steps: cfg.target_steps()?,
        check_sign: mu_nonneg && cfg.rho.vanishes_at_zero(),
    };
    let units = cfg.units();
    let n_batches = MIN_BATCHES.max(units / 100).min(units);
    let batches: Vec<BatchSums> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let lo = b * units / n_batches;
            let hi = (b + 1) * units / n_batches;
            let mut acc = BatchSums {
                field: vec![0.0; grid.n],
                targets: vec![0.0; cfg.targets.len()],
                units: hi - lo,
                positivity_flags: 0,
                min_value: f64::INFINITY,
            };
            for unit in lo..hi {
                let signs: &[f64] = if cfg.antithetic { &[1.0, -1.0] } else { &[1.0] };
                let w = 1.0 / signs.len() as f64;
                for (s, &sign) in signs.iter().enumerate() {
                    let mut stream = sampler.stream(cfg.seed, unit as u64);
                    let rec = stepper.run(&mut stream, sign, unit * signs.len() + s)?;
                    for (a, v) in acc.field.iter_mut().zip(&rec.field) {
                        *a += w * v;
                    }
                    for (a, v) in acc.targets.iter_mut().zip(&rec.targets) {
                        *a += w * v;
                    }
                    acc.positivity_flags += rec.positivity_flags;
                    acc.min_value = acc.min_value.min(rec.min_value);
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let batch_units: Vec<usize> = batches.iter().map(|b| b.units).collect();
    let (first_moment, first_moment_stderr): (Vec<f64>, Vec<f64>) = (0..grid.n)
        .map(|i| {
            let totals: Vec<f64> = batches.iter().map(|b| b.field[i]).collect();
            mean_and_stderr(&totals, &batch_units)
        })
        .unzip();
    let targets = cfg
        .targets
        .iter()
        .enumerate()
        .map(|(k, tg)| {
            let totals: Vec<f64> = batches.iter().map(|b| b.targets[k]).collect();
            let (estimate, stderr) = mean_and_stderr(&totals, &batch_units);
            TargetEstimate {
                target: *tg,
                estimate,
                stderr,
            }
        })
        .collect();
    Ok(SimResult {
        grid,
        dt: cfg.dt(),
        n_t: cfg.n_t,
        first_moment,
        first_moment_stderr,
        targets,
        n_paths: cfg.n_paths,
        n_batches,
        seed: cfg.seed,
        sampler: sampler.method(),
        clamped_fraction: sampler.clamped_fraction(),
        positivity_flags: batches.iter().map(|b| b.positivity_flags).sum(),
        min_value: batches.iter().map(|b| b.min_value).fold(f64::INFINITY, f64::min),
    })
}

fn csv_err(e: impl std::fmt::Display) -> SimError {
    SimError::Csv(e.to_string())
}

impl SimResult {
    /// Columns `t,x,x_prime,estimate,stderr`.
    pub fn write_targets_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "x", "x_prime", "estimate", "stderr"])
            .map_err(csv_err)?;
        for e in &self.targets {
            out.write_record(&[
                fmt_num(e.target.t),
                fmt_num(e.target.x),
                fmt_num(e.target.xp),
                fmt_num(e.estimate),
                fmt_num(e.stderr),
            ])
            .map_err(csv_err)?;
        }
        out.flush().map_err(csv_err)
    }

    /// Columns `x,mean_u,stderr` at `t_max`.
    pub fn write_first_moment_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x", "mean_u", "stderr"]).map_err(csv_err)?;
        for i in 0..self.grid.n {
            out.write_record(&[
                fmt_num(self.grid.node(i)),
                fmt_num(self.first_moment[i]),
                fmt_num(self.first_moment_stderr[i]),
            ])
            .map_err(csv_err)?;
        }
        out.flush().map_err(csv_err)
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v:.12e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRow {
    pub target: Target,
    pub estimate: f64,
    pub stderr: f64,
    /// `|m_fine - m_coarse|` between the two spatial resolutions.
    pub bias_allowance: f64,
    pub lower: f64,
    pub upper: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub rows: Vec<ValidationRow>,
    pub fine: SimResult,
    pub coarse: SimResult,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    /// Columns `t,x,x_prime,estimate,stderr,bias_allowance,bound_lower,bound_upper,pass`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "t",
            "x",
            "x_prime",
            "estimate",
            "stderr",
            "bias_allowance",
            "bound_lower",
            "bound_upper",
            "pass",
        ])
        .map_err(csv_err)?;
        for r in &self.rows {
            out.write_record(&[
                fmt_num(r.target.t),
                fmt_num(r.target.x),
                fmt_num(r.target.xp),
                fmt_num(r.estimate),
                fmt_num(r.stderr),
                fmt_num(r.bias_allowance),
                fmt_num(r.lower),
                fmt_num(r.upper),
                r.pass.to_string(),
            ])
            .map_err(csv_err)?;
        }
        out.flush().map_err(csv_err)
    }
}

/// Monte Carlo against the analytic envelope.  A row passes when
/// `[est - 3 se - bias, est + 3 se + bias]` meets `[lower, upper]`, with the
/// bias estimated from a second run at twice the mesh width.
pub fn validate_moments(cfg: &SimConfig, targets: &[Target], bounds: &BoundOptions) -> Result<ValidationReport> {
    if cfg.n_x.is_multiple_of(2) {
        return Err(SimError::InvalidConfig(
            "validation needs an odd n_x so the coarse grid nests".into(),
        ));
    }
    let mut fine_cfg = cfg.clone();
    fine_cfg.targets = targets.to_vec();
    let mut coarse_cfg = fine_cfg.clone();
    coarse_cfg.n_x = (cfg.n_x - 1) / 2 + 1;
    let fine = simulate(&fine_cfg)?;
    let coarse = simulate(&coarse_cfg)?;
    let (lip, lip_upper) = cfg.rho.constants();
    let rows = fine
        .targets
        .iter()
        .zip(&coarse.targets)
        .map(|(f, c)| {
            let tg = f.target;
            let b = two_point_bounds(
                &cfg.mu,
                &cfg.kernel,
                &cfg.p,
                lip,
                lip_upper,
                tg.t,
                &[tg.x],
                &[tg.xp],
                bounds,
            )?;
            let bias = (f.estimate - c.estimate).abs();
            let lo = f.estimate - 3.0 * f.stderr - bias;
            let hi = f.estimate + 3.0 * f.stderr + bias;
            Ok(ValidationRow {
                target: tg,
                estimate: f.estimate,
                stderr: f.stderr,
                bias_allowance: bias,
                lower: b.lower,
                upper: b.upper,
                pass: lo <= b.upper && hi >= b.lower,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ValidationReport { rows, fine, coarse })
}
