//! Polygonal approximation of nonnegative concave functions.
//!
//! On the uniform nodes `t_i = (i − 1)/g`, `i = 1..=g+1`, the chord
//! interpolant of `h` is reproduced exactly by a mixture of `g + 1`
//! triangles with modes at the nodes. Its weights are half the end values of
//! `h` and, in the interior, a scaled negative second difference of `h`, so
//! concavity of `h` is exactly what makes them nonnegative.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Serialize, Serializer};

use crate::dist::{PiecewiseLinear, PolygonalParams};
use crate::divergence::{l2_norm_piecewise_linear, sup_distance, DensityFn, DENSITY_MASS_TOL};
use crate::error::{Error, Result};
use crate::quadrature::QuadratureConfig;
use crate::rng::rng_from_seed;

/// Weights above `−WEIGHT_TOL` are clamped to zero; anything lower means the
/// target was not concave.
pub const WEIGHT_TOL: f64 = 1e-12;
const SPOT_GRID: usize = 1000;
const SPOT_PAIRS: usize = 1000;
const SPOT_SEED: u64 = 0x5eed_c0ca;
const NONNEG_TOL: f64 = 1e-12;
const MIDPOINT_TOL: f64 = 1e-10;

/// A function on `[0, 1]` the caller asserts to be nonnegative and concave,
/// optionally with a known bound on `|h''|`.
#[derive(Clone)]
pub struct ConcaveTarget {
    h: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    sup_h2: Option<f64>,
    breakpoints: Vec<f64>,
}

impl fmt::Debug for ConcaveTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConcaveTarget")
            .field("sup_h2", &self.sup_h2)
            .field("breakpoints", &self.breakpoints)
            .finish_non_exhaustive()
    }
}

impl ConcaveTarget {
    pub fn new<F>(h: F, sup_h2: Option<f64>) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            h: Arc::new(h),
            sup_h2,
            breakpoints: Vec::new(),
        }
    }

    /// Points where `h` may have a kink; used when `h` is integrated or
    /// compared on a grid.
    pub fn with_breakpoints(mut self, breakpoints: Vec<f64>) -> Self {
        self.breakpoints = breakpoints;
        self
    }

    pub fn from_piecewise_linear(pl: PiecewiseLinear) -> Self {
        let knots = pl.knots().to_vec();
        Self::new(move |x| pl.eval(x), Some(0.0)).with_breakpoints(knots)
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.h)(x)
    }

    pub fn sup_second_derivative(&self) -> Option<f64> {
        self.sup_h2
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn to_density(&self) -> DensityFn {
        let h = Arc::clone(&self.h);
        DensityFn::new(move |x| h(x), self.breakpoints.clone())
    }

    /// `√h`, which is concave whenever `h` is. No curvature bound carries over.
    pub fn sqrt(&self) -> Self {
        let h = Arc::clone(&self.h);
        Self::new(move |x| h(x).max(0.0).sqrt(), None).with_breakpoints(self.breakpoints.clone())
    }

    /// Checks nonnegativity on a uniform grid and midpoint concavity on
    /// seeded random pairs. A spot check, not a proof.
    pub fn spot_check(&self) -> Result<()> {
        for i in 0..=SPOT_GRID {
            let x = i as f64 / SPOT_GRID as f64;
            let v = self.eval(x);
            if !v.is_finite() || v < -NONNEG_TOL {
                return Err(Error::NotConcave(format!("h({x}) = {v}")));
            }
        }
        let mut rng = rng_from_seed(SPOT_SEED);
        for _ in 0..SPOT_PAIRS {
            let a: f64 = rng.random();
            let b: f64 = rng.random();
            let mid = self.eval(0.5 * (a + b));
            let chord = 0.5 * (self.eval(a) + self.eval(b));
            if mid < chord - MIDPOINT_TOL {
                return Err(Error::NotConcave(format!(
                    "h at the midpoint of {a} and {b} is {mid}, below the chord value {chord}"
                )));
            }
        }
        Ok(())
    }
}

/// The `g + 1` uniform nodes `(i − 1)/g`.
pub fn nodes(g: usize) -> Vec<f64> {
    (0..=g).map(|i| i as f64 / g as f64).collect()
}

/// Chord interpolant of `h` on the uniform nodes.
pub fn linear_interpolant(h: &ConcaveTarget, g: usize) -> Result<PiecewiseLinear> {
    if g == 0 {
        return Err(Error::Precondition("g must be at least 1".into()));
    }
    let t = nodes(g);
    let v = t.iter().map(|&x| h.eval(x)).collect();
    PiecewiseLinear::new(t, v)
}

/// `sup|h''| / (8g²)`, the interpolation error bound on a uniform grid.
pub fn approx_error_bound(sup_h2: f64, g: usize) -> Result<f64> {
    if !(sup_h2 >= 0.0) || !sup_h2.is_finite() {
        return Err(Error::Precondition(format!(
            "sup |h''| must be a nonnegative number, got {sup_h2}"
        )));
    }
    if g == 0 {
        return Err(Error::Precondition("g must be at least 1".into()));
    }
    Ok(sup_h2 / (8.0 * (g * g) as f64))
}

/// A member of the relaxed mixture space with `g + 1` components that
/// interpolates a concave target.
#[derive(Debug, Clone)]
pub struct ApproxResult {
    pub g: usize,
    pub params: PolygonalParams,
    pub interpolant: PiecewiseLinear,
    pub bound: Option<f64>,
    pub sup_error: f64,
}

impl ApproxResult {
    pub fn mass(&self) -> f64 {
        self.params.total_mass()
    }

    pub fn to_density(&self) -> DensityFn {
        let p = self.params.clone();
        DensityFn::new(move |x| p.density(x), self.interpolant.knots().to_vec())
    }
}

#[derive(Serialize)]
struct ApproxReport<'a> {
    g: usize,
    weights: &'a [f64],
    mass: f64,
    bound: Option<f64>,
    sup_error: f64,
}

impl Serialize for ApproxResult {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ApproxReport {
            g: self.g,
            weights: self.params.weights(),
            mass: self.mass(),
            bound: self.bound,
            sup_error: self.sup_error,
        }
        .serialize(s)
    }
}

/// Mixture weights reproducing the interpolant of `h` on `g + 1` nodes.
pub fn interpolating_weights(h: &ConcaveTarget, g: usize) -> Vec<f64> {
    let t = nodes(g);
    let hv: Vec<f64> = t.iter().map(|&x| h.eval(x)).collect();
    let gf = g as f64;
    let mut w = vec![0.0; g + 1];
    w[0] = 0.5 * hv[0];
    w[g] = 0.5 * hv[g];
    for k in 1..g {
        // 1-based i = k + 1: (g − i + 1)(i − 1)/(2g) = (g − k)k/(2g).
        let scale = (gf - k as f64) * k as f64 / (2.0 * gf);
        w[k] = scale * (2.0 * hv[k] - hv[k + 1] - hv[k - 1]);
    }
    w
}

pub fn polygonal_from_concave(h: &ConcaveTarget, g: usize) -> Result<ApproxResult> {
    if g < 2 {
        return Err(Error::Precondition(format!(
            "g must be at least 2, got {g}"
        )));
    }
    h.spot_check()?;
    let mut weights = interpolating_weights(h, g);
    for (i, w) in weights.iter_mut().enumerate() {
        if !w.is_finite() || *w < -WEIGHT_TOL {
            return Err(Error::NotConcave(format!("weight {i} is {w}")));
        }
        *w = w.max(0.0);
    }
    let params = PolygonalParams::sub_probability(weights, nodes(g))?;
    let interpolant = linear_interpolant(h, g)?;
    let bound = h.sup_h2.map(|s| approx_error_bound(s, g)).transpose()?;
    let mut result = ApproxResult {
        g,
        params,
        interpolant,
        bound,
        sup_error: f64::NAN,
    };
    result.sup_error = measured_sup_error(h, &result);
    Ok(result)
}

/// `sup |h − f|` for the mixture `f` of `result`, on a grid refined at the
/// nodes and at the breakpoints of `h`.
pub fn measured_sup_error(h: &ConcaveTarget, result: &ApproxResult) -> f64 {
    sup_distance(&h.to_density(), &result.to_density())
}

/// Squared polygonal density `s = û²`, where `û` is the interpolating
/// mixture of `√h` scaled to unit L2 norm.
#[derive(Debug, Clone)]
pub struct SquaredPolygonal {
    /// Approximation of `√h` before scaling.
    pub root: ApproxResult,
    /// `û`, with unit L2 norm.
    pub unit: PiecewiseLinear,
    pub density: DensityFn,
}

pub fn squared_polygonal(
    h: &ConcaveTarget,
    g: usize,
    cfg: &QuadratureConfig,
) -> Result<SquaredPolygonal> {
    cfg.validate()?;
    let integral = h.to_density().integral(cfg);
    if (integral - 1.0).abs() > DENSITY_MASS_TOL {
        return Err(Error::DensityNotNormalized { integral });
    }
    let root = polygonal_from_concave(&h.sqrt(), g)?;
    let norm = l2_norm_piecewise_linear(&root.interpolant);
    if !(norm > 0.0) {
        return Err(Error::Precondition(
            "square root of the target is identically zero".into(),
        ));
    }
    let unit = root.interpolant.scaled(1.0 / norm);
    let u = unit.clone();
    let density = DensityFn::new(
        move |x| {
            let v = u.eval(x);
            v * v
        },
        unit.knots().to_vec(),
    );
    Ok(SquaredPolygonal {
        root,
        unit,
        density,
    })
}
