//! Divergences between densities on `[0, 1]`.
//!
//! The KL divergence uses the orientation `K(h‖f) = ∫ h log(h/f)`, which is
//! nonnegative. Its negative, `∫ h log(f/h)`, is the same quantity with the
//! ratio inverted.

use std::fmt;
use std::sync::Arc;

use crate::dist::{to_piecewise_linear, PiecewiseLinear, PolygonalParams};
use crate::error::{Error, Result};
use crate::quadrature::{integrate_unit, panel_edges, QuadratureConfig};

/// Densities handed to the divergences must integrate to 1 within this.
pub const DENSITY_MASS_TOL: f64 = 1e-6;

/// An evaluable function on `[0, 1]` together with the points where it may
/// fail to be smooth. Quadrature panels and sup-distance grids always split
/// at these breakpoints.
#[derive(Clone)]
pub struct DensityFn {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    breakpoints: Vec<f64>,
}

impl fmt::Debug for DensityFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DensityFn")
            .field("breakpoints", &self.breakpoints)
            .finish_non_exhaustive()
    }
}

impl DensityFn {
    pub fn new<F>(f: F, breakpoints: Vec<f64>) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let breakpoints = panel_edges(&breakpoints);
        Self {
            f: Arc::new(f),
            breakpoints,
        }
    }

    pub fn from_piecewise_linear(pl: PiecewiseLinear) -> Self {
        let knots = pl.knots().to_vec();
        Self::new(move |x| pl.eval(x), knots)
    }

    pub fn from_params(params: &PolygonalParams) -> Self {
        Self::from_piecewise_linear(to_piecewise_linear(params))
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    /// Sorted breakpoints, always including 0 and 1.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn integral(&self, cfg: &QuadratureConfig) -> f64 {
        integrate_unit(|x| self.eval(x), &self.breakpoints, cfg)
    }

    fn check_normalized(&self, cfg: &QuadratureConfig) -> Result<()> {
        let integral = self.integral(cfg);
        if (integral - 1.0).abs() > DENSITY_MASS_TOL {
            return Err(Error::DensityNotNormalized { integral });
        }
        Ok(())
    }
}

impl From<&PolygonalParams> for DensityFn {
    fn from(p: &PolygonalParams) -> Self {
        Self::from_params(p)
    }
}

fn joint_breakpoints(a: &DensityFn, b: &DensityFn) -> Vec<f64> {
    let mut all = a.breakpoints.clone();
    all.extend_from_slice(&b.breakpoints);
    panel_edges(&all)
}

/// `∫ h log(h/f)`; `+∞` when `f` vanishes on a region where `h` has mass.
pub fn kl_divergence(h: &DensityFn, f: &DensityFn, cfg: &QuadratureConfig) -> Result<f64> {
    cfg.validate()?;
    h.check_normalized(cfg)?;
    f.check_normalized(cfg)?;
    let edges = joint_breakpoints(h, f);
    let v = integrate_unit(
        |x| {
            let hv = h.eval(x);
            if hv <= 0.0 {
                return 0.0;
            }
            let fv = f.eval(x);
            if fv <= 0.0 {
                return f64::INFINITY;
            }
            hv * (hv.ln() - fv.ln())
        },
        &edges,
        cfg,
    );
    Ok(v)
}

/// Squared Hellinger divergence `∫(√f − √h)² = 2 − 2∫√(fh)`, in `[0, 2]`.
pub fn hellinger_sq(f: &DensityFn, h: &DensityFn, cfg: &QuadratureConfig) -> Result<f64> {
    cfg.validate()?;
    f.check_normalized(cfg)?;
    h.check_normalized(cfg)?;
    let edges = joint_breakpoints(f, h);
    let affinity = integrate_unit(
        |x| (f.eval(x).max(0.0) * h.eval(x).max(0.0)).sqrt(),
        &edges,
        cfg,
    );
    Ok((2.0 - 2.0 * affinity).clamp(0.0, 2.0))
}

pub const SUP_GRID_POINTS: usize = 10_000;

/// `max |f − h|` over a grid of [`SUP_GRID_POINTS`] per panel, panels split
/// at both breakpoint lists, followed by one finer pass around the argmax.
/// Exact when both inputs are linear between the joint breakpoints.
pub fn sup_distance(f: &DensityFn, h: &DensityFn) -> f64 {
    sup_distance_with(f, h, SUP_GRID_POINTS)
}

pub fn sup_distance_with(f: &DensityFn, h: &DensityFn, points_per_panel: usize) -> f64 {
    let m = points_per_panel.max(1);
    let gap = |x: f64| (f.eval(x) - h.eval(x)).abs();
    let edges = joint_breakpoints(f, h);
    let (mut best, mut best_x, mut best_step) = (gap(0.0), 0.0, 0.0);
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        let step = (b - a) / m as f64;
        for i in 0..=m {
            let x = if i == m { b } else { a + i as f64 * step };
            let v = gap(x);
            if v > best {
                best = v;
                best_x = x;
                best_step = step;
            }
        }
    }
    if best_step > 0.0 {
        let lo = (best_x - best_step).max(0.0);
        let hi = (best_x + best_step).min(1.0);
        let step = (hi - lo) / m as f64;
        for i in 0..=m {
            best = best.max(gap(lo + i as f64 * step));
        }
    }
    best
}

/// Exact L2 norm: each panel contributes `w (a² + ab + b²) / 3`.
pub fn l2_norm_piecewise_linear(f: &PiecewiseLinear) -> f64 {
    f.knots()
        .windows(2)
        .zip(f.values().windows(2))
        .map(|(k, v)| (k[1] - k[0]) * (v[0] * v[0] + v[0] * v[1] + v[1] * v[1]) / 3.0)
        .sum::<f64>()
        .sqrt()
}
