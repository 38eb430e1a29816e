//! Brute-force evaluation of the `▷` operator in one space dimension:
//!
//! `(h ▷ w)(t,x,x';y) = ∫_0^t ds ∬ dz dz' h(t-s, x-z, x'-z'; y-(z-z')) w(s,z,z';y) f(y-(z-z'))`.
//!
//! Time is integrated with Gauss-Legendre nodes; space with the trapezoid
//! rule on windows that follow the Brownian-bridge location of the
//! integrand, so the heat-kernel factors stay resolved near both ends of
//! the time interval.

use rayon::prelude::*;
use thiserror::Error;

use crate::kernel::{heat_kernel_r2, CorrelationKernel, HeatParams, InitialMeasure, KernelError};
use crate::moments::{l1_time_integral, MomentError};
use crate::quadrature::{gauss_legendre, QuadOptions};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RhdError {
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("the discrete operator is implemented for d = 1 only, got d = {0}")]
    UnsupportedDimension(usize),
    #[error("field evaluation failed: {0}")]
    Field(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Moment(#[from] MomentError),
}

/// A function `(t, x, x', y) ↦ value` on `R_+ × R × R × R`.
pub trait TwoPointField: Sync {
    fn eval(&self, t: f64, x: f64, xp: f64, y: f64) -> Result<f64, RhdError>;

    /// Spatial point `(a, a')` around which the field's mass sits.
    fn anchor(&self) -> (f64, f64) {
        (0.0, 0.0)
    }

    /// Weighted components, when the field is a finite sum of anchored
    /// pieces; `▷` is linear in its second argument so each piece gets
    /// its own integration window.
    fn components(&self) -> Option<Vec<(f64, &dyn TwoPointField)>> {
        None
    }

    fn axes(&self) -> Option<&GridAxes> {
        None
    }
}

/// `L_0(t, x, x') = G(t, x) G(t, x')`.
#[derive(Debug, Clone, Copy)]
pub struct L0Field {
    pub p: HeatParams,
}

impl TwoPointField for L0Field {
    fn eval(&self, t: f64, x: f64, xp: f64, _y: f64) -> Result<f64, RhdError> {
        let nu = self.p.nu();
        Ok(heat_kernel_r2(nu, 1, t, x * x) * heat_kernel_r2(nu, 1, t, xp * xp))
    }
}

/// `G(t, x - a) G(t, x' - a')`.
#[derive(Debug, Clone, Copy)]
pub struct ShiftedL0Field {
    pub p: HeatParams,
    pub a: f64,
    pub ap: f64,
}

impl TwoPointField for ShiftedL0Field {
    fn eval(&self, t: f64, x: f64, xp: f64, _y: f64) -> Result<f64, RhdError> {
        let nu = self.p.nu();
        let (u, v) = (x - self.a, xp - self.ap);
        Ok(heat_kernel_r2(nu, 1, t, u * u) * heat_kernel_r2(nu, 1, t, v * v))
    }

    fn anchor(&self) -> (f64, f64) {
        (self.a, self.ap)
    }
}

/// `L_1` from the closed time-integral representation.
#[derive(Debug, Clone)]
pub struct L1ExactField {
    pub kernel: CorrelationKernel,
    pub p: HeatParams,
    pub quad: QuadOptions,
}

impl L1ExactField {
    pub fn new(kernel: CorrelationKernel, p: HeatParams) -> Self {
        Self {
            kernel,
            p,
            quad: QuadOptions::with_tolerances(1e-14, 1e-7),
        }
    }
}

impl TwoPointField for L1ExactField {
    fn eval(&self, t: f64, x: f64, xp: f64, y: f64) -> Result<f64, RhdError> {
        let nu = self.p.nu();
        let gg = heat_kernel_r2(nu, 1, t, x * x) * heat_kernel_r2(nu, 1, t, xp * xp);
        if gg == 0.0 {
            return Ok(0.0);
        }
        Ok(gg * l1_time_integral(&self.kernel, &self.p, t, &[x], &[xp], &[y], &self.quad)?)
    }
}

/// Finite weighted sum of fields.
pub struct MixtureField {
    parts: Vec<(f64, Box<dyn TwoPointField + Send>)>,
}

impl MixtureField {
    pub fn new(parts: Vec<(f64, Box<dyn TwoPointField + Send>)>) -> Self {
        Self { parts }
    }

    /// `J_1(t, z, z') = J_0(t, z) J_0(t, z')` for an atomic measure, as a
    /// sum over atom pairs.
    pub fn j1_atoms(mu: &InitialMeasure, p: &HeatParams) -> Result<Self, RhdError> {
        if p.dim() != 1 {
            return Err(RhdError::UnsupportedDimension(p.dim()));
        }
        let atoms = mu
            .as_atoms()
            .ok_or_else(|| RhdError::Field("J_1 mixture needs an atomic measure".into()))?;
        let mut parts: Vec<(f64, Box<dyn TwoPointField + Send>)> = Vec::new();
        for (zi, wi) in &atoms {
            for (zj, wj) in &atoms {
                parts.push((
                    wi * wj,
                    Box::new(ShiftedL0Field {
                        p: *p,
                        a: zi[0],
                        ap: zj[0],
                    }),
                ));
            }
        }
        Ok(Self { parts })
    }
}

impl TwoPointField for MixtureField {
    fn eval(&self, t: f64, x: f64, xp: f64, y: f64) -> Result<f64, RhdError> {
        let mut total = 0.0;
        for (w, f) in &self.parts {
            total += w * f.eval(t, x, xp, y)?;
        }
        Ok(total)
    }

    fn components(&self) -> Option<Vec<(f64, &dyn TwoPointField)>> {
        Some(
            self.parts
                .iter()
                .map(|(w, f)| (*w, f.as_ref() as &dyn TwoPointField))
                .collect(),
        )
    }
}

/// Tensor axes `times × xs × xps × ys`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAxes {
    pub times: Vec<f64>,
    pub xs: Vec<f64>,
    pub xps: Vec<f64>,
    pub ys: Vec<f64>,
}

impl GridAxes {
    pub fn point(t: f64, x: f64, xp: f64, y: f64) -> Self {
        Self {
            times: vec![t],
            xs: vec![x],
            xps: vec![xp],
            ys: vec![y],
        }
    }

    pub fn len(&self) -> usize {
        self.times.len() * self.xs.len() * self.xps.len() * self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn index(&self, i: usize) -> (f64, f64, f64, f64) {
        let ny = self.ys.len();
        let nxp = self.xps.len();
        let nx = self.xs.len();
        let iy = i % ny;
        let ixp = (i / ny) % nxp;
        let ix = (i / (ny * nxp)) % nx;
        let it = i / (ny * nxp * nx);
        (self.times[it], self.xs[ix], self.xps[ixp], self.ys[iy])
    }
}

/// Sampled field; evaluation interpolates multilinearly and vanishes
/// outside the sampled box.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub axes: GridAxes,
    pub values: Vec<f64>,
    /// Output points whose integration window edges carried more than
    /// `1e-6` of the integrand mass.
    pub truncation_warnings: usize,
}

impl GridField {
    pub fn value(&self, it: usize, ix: usize, ixp: usize, iy: usize) -> f64 {
        let a = &self.axes;
        self.values[((it * a.xs.len() + ix) * a.xps.len() + ixp) * a.ys.len() + iy]
    }
}

fn bracket(axis: &[f64], v: f64) -> Option<(usize, usize, f64)> {
    let n = axis.len();
    if n == 1 {
        return Some((0, 0, 0.0));
    }
    if v < axis[0] || v > axis[n - 1] {
        return None;
    }
    let j = axis.partition_point(|&a| a <= v).clamp(1, n - 1);
    let w = (v - axis[j - 1]) / (axis[j] - axis[j - 1]);
    Some((j - 1, j, w))
}

impl TwoPointField for GridField {
    fn eval(&self, t: f64, x: f64, xp: f64, y: f64) -> Result<f64, RhdError> {
        let a = &self.axes;
        let (Some(bt), Some(bx), Some(bxp), Some(by)) = (
            bracket(&a.times, t),
            bracket(&a.xs, x),
            bracket(&a.xps, xp),
            bracket(&a.ys, y),
        ) else {
            return Ok(0.0);
        };
        let mut total = 0.0;
        for (it, wt) in [(bt.0, 1.0 - bt.2), (bt.1, bt.2)] {
            for (ix, wx) in [(bx.0, 1.0 - bx.2), (bx.1, bx.2)] {
                for (ixp, wxp) in [(bxp.0, 1.0 - bxp.2), (bxp.1, bxp.2)] {
                    for (iy, wy) in [(by.0, 1.0 - by.2), (by.1, by.2)] {
                        let w = wt * wx * wxp * wy;
                        if w != 0.0 {
                            total += w * self.value(it, ix, ixp, iy);
                        }
                    }
                }
            }
        }
        Ok(total)
    }

    fn axes(&self) -> Option<&GridAxes> {
        Some(&self.axes)
    }
}

/// Resolution of the discrete operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhdOptions {
    pub time_nodes: usize,
    pub space_nodes: usize,
    /// Window half-width in bridge standard deviations.
    pub half_width: f64,
}

impl Default for RhdOptions {
    fn default() -> Self {
        Self {
            time_nodes: 64,
            space_nodes: 64,
            half_width: 7.0,
        }
    }
}

/// `h ▷ w` at every point of `axes`.
pub fn discrete_rhd(
    h: &dyn TwoPointField,
    w: &dyn TwoPointField,
    kernel: &CorrelationKernel,
    p: &HeatParams,
    axes: &GridAxes,
    opts: &RhdOptions,
) -> Result<GridField, RhdError> {
    if p.dim() != 1 || kernel.dim() != 1 {
        return Err(RhdError::UnsupportedDimension(p.dim().max(kernel.dim())));
    }
    if let (Some(ah), Some(aw)) = (h.axes(), w.axes()) {
        if ah.times != aw.times {
            return Err(RhdError::GridMismatch);
        }
    }
    let parts = w.components().unwrap_or_else(|| vec![(1.0, w)]);
    let results: Result<Vec<(f64, bool)>, RhdError> = (0..axes.len())
        .into_par_iter()
        .map(|i| {
            let (t, x, xp, y) = axes.index(i);
            let mut total = 0.0;
            let mut flagged = false;
            for (weight, part) in &parts {
                let (v, edge) = rhd_point(h, *part, kernel, p, t, x, xp, y, opts)?;
                total += weight * v;
                flagged |= edge;
            }
            Ok((total, flagged))
        })
        .collect();
    let results = results?;
    Ok(GridField {
        axes: axes.clone(),
        truncation_warnings: results.iter().filter(|r| r.1).count(),
        values: results.into_iter().map(|r| r.0).collect(),
    })
}

/// `h ▷ w` at the listed `(t, x, x', y)` points.
pub fn discrete_rhd_at(
    h: &dyn TwoPointField,
    w: &dyn TwoPointField,
    kernel: &CorrelationKernel,
    p: &HeatParams,
    points: &[(f64, f64, f64, f64)],
    opts: &RhdOptions,
) -> Result<Vec<f64>, RhdError> {
    points
        .iter()
        .map(|&(t, x, xp, y)| Ok(discrete_rhd(h, w, kernel, p, &GridAxes::point(t, x, xp, y), opts)?.values[0]))
        .collect()
}

fn trapezoid(center: f64, half: f64, n: usize) -> (Vec<f64>, f64) {
    let step = 2.0 * half / (n - 1) as f64;
    ((0..n).map(|i| center - half + step * i as f64).collect(), step)
}

#[allow(clippy::too_many_arguments)]
fn rhd_point(
    h: &dyn TwoPointField,
    w: &dyn TwoPointField,
    kernel: &CorrelationKernel,
    p: &HeatParams,
    t: f64,
    x: f64,
    xp: f64,
    y: f64,
    opts: &RhdOptions,
) -> Result<(f64, bool), RhdError> {
    if !(t > 0.0) {
        return Ok((0.0, false));
    }
    let n = opts.space_nodes.max(3);
    let (gx, gw) = gauss_legendre(opts.time_nodes);
    let (a, ap) = w.anchor();
    let nu = p.nu();
    let white = kernel.is_white_noise();
    let mut total = 0.0;
    let mut edge = 0.0;
    for (u, wt) in gx.iter().zip(&gw) {
        let s = 0.5 * t * (u + 1.0);
        let ds = 0.5 * t * wt;
        let sd = (nu * s * (t - s) / t).sqrt();
        let half = opts.half_width * sd;
        let cz = a + s / t * (x - a);
        let czp = ap + s / t * (xp - ap);
        let mut inner = 0.0;
        let mut inner_edge = 0.0;
        if white {
            // f = δ forces z' = z - y
            let gap = cz - (czp + y);
            let (zs, step) = trapezoid(0.5 * (cz + czp + y), half + 0.5 * gap.abs(), n);
            for (i, z) in zs.iter().enumerate() {
                let zp = z - y;
                let v = h.eval(t - s, x - z, xp - zp, 0.0)? * w.eval(s, *z, zp, y)?;
                let wi = if i == 0 || i == n - 1 { 0.5 } else { 1.0 } * step;
                inner += wi * v;
                if i < 2 || i >= n - 2 {
                    inner_edge += wi * v.abs();
                }
            }
        } else {
            let (zs, step) = trapezoid(cz, half, n);
            let (zps, stepp) = trapezoid(czp, half, n);
            for (i, z) in zs.iter().enumerate() {
                let wi = if i == 0 || i == n - 1 { 0.5 } else { 1.0 } * step;
                for (j, zp) in zps.iter().enumerate() {
                    let wj = if j == 0 || j == n - 1 { 0.5 } else { 1.0 } * stepp;
                    let off = y - (z - zp);
                    let f = kernel.eval_f(&[off])?;
                    if f == 0.0 {
                        continue;
                    }
                    let v = h.eval(t - s, x - z, xp - zp, off)? * w.eval(s, *z, *zp, y)? * f;
                    inner += wi * wj * v;
                    if i < 2 || i >= n - 2 || j < 2 || j >= n - 2 {
                        inner_edge += wi * wj * v.abs();
                    }
                }
            }
        }
        total += ds * inner;
        edge += ds * inner_edge;
    }
    Ok((total, edge > 1e-6 * total.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::l1_exact;
    use approx::assert_relative_eq;

    fn setup() -> (CorrelationKernel, HeatParams) {
        (
            CorrelationKernel::ou(2.0, 1.0, 1).unwrap(),
            HeatParams::new(1.0, 1).unwrap(),
        )
    }

    #[test]
    fn l0_rhd_l0_matches_exact_l1() {
        let (k, p) = setup();
        let l0 = L0Field { p };
        for &(t, x, xp, y) in &[(1.0, 0.0, 0.0, 0.0), (0.7, 0.3, -0.5, 0.4), (2.0, 1.0, 0.5, -1.0)] {
            let d = discrete_rhd_at(&l0, &l0, &k, &p, &[(t, x, xp, y)], &RhdOptions::default()).unwrap()[0];
            let e = l1_exact(&k, &p, t, &[x], &[xp], &[y]).unwrap();
            assert_relative_eq!(d, e, max_relative = 1e-3);
        }
    }

    #[test]
    fn zero_field_gives_zero() {
        let (k, p) = setup();
        let zero = MixtureField::new(vec![]);
        let v = discrete_rhd_at(
            &L0Field { p },
            &zero,
            &k,
            &p,
            &[(1.0, 0.0, 0.0, 0.0)],
            &RhdOptions::default(),
        )
        .unwrap();
        assert_eq!(v[0], 0.0);
    }

    #[test]
    fn white_noise_collapse_matches_exact_l1() {
        let k = CorrelationKernel::white_noise();
        let p = HeatParams::new(1.0, 1).unwrap();
        let l0 = L0Field { p };
        let d = discrete_rhd_at(&l0, &l0, &k, &p, &[(1.0, 0.2, -0.1, 0.5)], &RhdOptions::default()).unwrap()[0];
        let e = l1_exact(&k, &p, 1.0, &[0.2], &[-0.1], &[0.5]).unwrap();
        assert_relative_eq!(d, e, max_relative = 1e-3);
    }

    #[test]
    fn grid_field_interpolates() {
        let axes = GridAxes {
            times: vec![1.0],
            xs: vec![0.0, 1.0],
            xps: vec![0.0],
            ys: vec![0.0],
        };
        let g = GridField {
            axes,
            values: vec![1.0, 3.0],
            truncation_warnings: 0,
        };
        assert_eq!(g.eval(1.0, 0.25, 0.0, 0.0).unwrap(), 1.5);
        assert_eq!(g.eval(1.0, 2.0, 0.0, 0.0).unwrap(), 0.0);
    }
}
