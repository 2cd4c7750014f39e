//! Triangular components and polygonal mixtures on the unit interval.
//!
//! A triangular component with mode `θ` has density `2x/θ` left of the mode
//! and `2(1-x)/(1-θ)` from the mode onward; the peak value is always 2. A
//! polygonal density is a finite mixture of such components, which makes it
//! a continuous, concave, piecewise-linear function with knots at the modes.

use std::io::Read;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Default distance by which observations at exactly 0 or 1 are moved inward.
pub const BOUNDARY_NUDGE: f64 = 1e-12;

/// Tolerance on `|Σπ - 1|` for parameters that claim to be normalized.
pub const NORMALIZATION_TOL: f64 = 1e-12;

fn check_unit(what: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Domain { what, value })
    }
}

/// Mode location of a single triangular component.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct TriangularMode(f64);

impl TriangularMode {
    pub fn new(theta: f64) -> Result<Self> {
        check_unit("theta", theta)?;
        Ok(Self(theta))
    }

    #[inline]
    pub fn theta(self) -> f64 {
        self.0
    }

    /// Density at `x`, which must already lie in `[0, 1]`.
    #[inline]
    pub fn density(self, x: f64) -> f64 {
        let t = self.0;
        if x < t {
            2.0 * x / t
        } else if t < 1.0 {
            2.0 * (1.0 - x) / (1.0 - t)
        } else {
            // t == 1 and x == 1: the peak.
            2.0 * x
        }
    }

    #[inline]
    pub fn cdf(self, x: f64) -> f64 {
        let t = self.0;
        if x <= t {
            if t == 0.0 {
                0.0
            } else {
                x * x / t
            }
        } else {
            1.0 - (1.0 - x) * (1.0 - x) / (1.0 - t)
        }
    }

    #[inline]
    pub fn quantile(self, u: f64) -> f64 {
        let t = self.0;
        if u <= t {
            (u * t).sqrt()
        } else {
            1.0 - ((1.0 - u) * (1.0 - t)).sqrt()
        }
    }
}

impl TryFrom<f64> for TriangularMode {
    type Error = Error;
    fn try_from(theta: f64) -> Result<Self> {
        Self::new(theta)
    }
}

impl From<TriangularMode> for f64 {
    fn from(m: TriangularMode) -> f64 {
        m.0
    }
}

pub fn tri_pdf(x: f64, comp: TriangularMode) -> Result<f64> {
    check_unit("x", x)?;
    Ok(comp.density(x))
}

pub fn tri_cdf(x: f64, comp: TriangularMode) -> Result<f64> {
    check_unit("x", x)?;
    Ok(comp.cdf(x))
}

pub fn tri_quantile(u: f64, comp: TriangularMode) -> Result<f64> {
    check_unit("u", u)?;
    Ok(comp.quantile(u))
}

#[derive(Deserialize)]
struct RawParams {
    weights: Vec<f64>,
    modes: Vec<f64>,
    #[serde(default = "default_true")]
    normalized: bool,
}

fn default_true() -> bool {
    true
}

/// Weights and modes of a g-component polygonal mixture.
///
/// With `normalized == true` the weights lie on the probability simplex.
/// Otherwise they are only required to be nonnegative, which is the relaxed
/// parameter space used by the concave-function approximations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct PolygonalParams {
    weights: Vec<f64>,
    modes: Vec<TriangularMode>,
    normalized: bool,
}

impl TryFrom<RawParams> for PolygonalParams {
    type Error = Error;
    fn try_from(raw: RawParams) -> Result<Self> {
        Self::build(raw.weights, raw.modes, raw.normalized)
    }
}

impl PolygonalParams {
    /// Parameters on the probability simplex.
    pub fn new(weights: Vec<f64>, modes: Vec<f64>) -> Result<Self> {
        Self::build(weights, modes, true)
    }

    /// Parameters with nonnegative, not necessarily normalized, weights.
    pub fn sub_probability(weights: Vec<f64>, modes: Vec<f64>) -> Result<Self> {
        Self::build(weights, modes, false)
    }

    fn build(weights: Vec<f64>, modes: Vec<f64>, normalized: bool) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParams(
                "at least one component is required".into(),
            ));
        }
        if weights.len() != modes.len() {
            return Err(Error::InvalidParams(format!(
                "{} weights but {} modes",
                weights.len(),
                modes.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidParams(format!(
                "weight {w} is not a nonnegative number"
            )));
        }
        let modes = modes
            .into_iter()
            .map(TriangularMode::new)
            .collect::<Result<Vec<_>>>()?;
        if normalized {
            let sum: f64 = weights.iter().sum();
            if (sum - 1.0).abs() > NORMALIZATION_TOL {
                return Err(Error::NotNormalized { sum });
            }
        }
        Ok(Self {
            weights,
            modes,
            normalized,
        })
    }

    /// The uniform density written as the mixture `½·tri(0) + ½·tri(1)`.
    pub fn uniform() -> Self {
        Self::new(vec![0.5, 0.5], vec![0.0, 1.0]).expect("uniform mixture is valid")
    }

    pub fn single(theta: f64) -> Result<Self> {
        Self::new(vec![1.0], vec![theta])
    }

    pub fn g(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn modes(&self) -> &[TriangularMode] {
        &self.modes
    }

    pub fn mode_values(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.theta()).collect()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Mixture density at `x ∈ [0, 1]` without the domain check.
    #[inline]
    pub fn density(&self, x: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.modes)
            .map(|(w, m)| w * m.density(x))
            .sum()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.modes)
            .map(|(w, m)| w * m.cdf(x))
            .sum()
    }

    /// Same mixture with the components reordered by `perm`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.g() {
            return Err(Error::DimensionMismatch {
                left: perm.len(),
                right: self.g(),
            });
        }
        let mut seen = vec![false; perm.len()];
        for &p in perm {
            if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidParams("not a permutation".into()));
            }
        }
        Ok(Self {
            weights: perm.iter().map(|&i| self.weights[i]).collect(),
            modes: perm.iter().map(|&i| self.modes[i]).collect(),
            normalized: self.normalized,
        })
    }
}

/// A continuous piecewise-linear function on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiecewiseLinear {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 || knots.len() != values.len() {
            return Err(Error::InvalidParams(
                "piecewise-linear function needs matching knots and values, at least two".into(),
            ));
        }
        if knots[0] != 0.0 || knots[knots.len() - 1] != 1.0 {
            return Err(Error::InvalidParams(
                "knots must start at 0 and end at 1".into(),
            ));
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParams(
                "knots must be strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("knot values must be finite".into()));
        }
        Ok(Self { knots, values })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Chord interpolation at `x`; arguments outside `[0, 1]` are clamped.
    pub fn eval(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        let k = self.knots.partition_point(|&t| t <= x);
        if k >= self.knots.len() {
            return self.values[self.values.len() - 1];
        }
        let (x0, x1) = (self.knots[k - 1], self.knots[k]);
        let (y0, y1) = (self.values[k - 1], self.values[k]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    pub fn slopes(&self) -> Vec<f64> {
        self.knots
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(k, v)| (v[1] - v[0]) / (k[1] - k[0]))
            .collect()
    }

    /// Exact integral (trapezoid rule is exact on each linear panel).
    pub fn integral(&self) -> f64 {
        self.knots
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(k, v)| 0.5 * (k[1] - k[0]) * (v[0] + v[1]))
            .sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            knots: self.knots.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }
}

pub fn poly_pdf(x: f64, params: &PolygonalParams) -> Result<f64> {
    check_unit("x", x)?;
    Ok(params.density(x))
}

/// Knots at `{0, 1}` and every mode; values are the mixture density there.
pub fn to_piecewise_linear(params: &PolygonalParams) -> PiecewiseLinear {
    let mut knots: Vec<f64> = params.mode_values();
    knots.push(0.0);
    knots.push(1.0);
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let values = knots.iter().map(|&x| params.density(x)).collect();
    PiecewiseLinear { knots, values }
}

pub fn exact_integral(f: &PiecewiseLinear) -> f64 {
    f.integral()
}

/// Slope tolerance before the rounding allowance for short panels.
pub const CONCAVITY_TOL: f64 = 1e-10;

/// Panel slopes must be non-increasing from left to right.
///
/// Knot values carry rounding error of a few ulps, which turns into slope
/// error inversely proportional to panel width, so the 1e-10 tolerance is
/// widened by that amount on very short panels.
pub fn is_concave(f: &PiecewiseLinear) -> bool {
    let slopes = f.slopes();
    let vmax = f.values.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let ulp_slack = 8.0 * f64::EPSILON * vmax;
    slopes.windows(2).enumerate().all(|(k, s)| {
        let h_left = f.knots[k + 1] - f.knots[k];
        let h_right = f.knots[k + 2] - f.knots[k + 1];
        let tol = CONCAVITY_TOL + ulp_slack * (1.0 / h_left + 1.0 / h_right);
        s[1] - s[0] <= tol
    })
}

pub fn poly_cdf(x: f64, params: &PolygonalParams) -> Result<f64> {
    check_unit("x", x)?;
    Ok(params.cdf(x))
}

/// Solves `poly_cdf(x) = u` by bisection.
pub fn poly_quantile(u: f64, params: &PolygonalParams) -> Result<f64> {
    check_unit("u", u)?;
    if !params.is_normalized() {
        return Err(Error::InvalidParams(
            "quantile requires normalized weights".into(),
        ));
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let c = params.cdf(mid);
        if (c - u).abs() <= 1e-12 {
            return Ok(mid);
        }
        if c < u {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * 0.5 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Observations on the unit interval, with exact boundary values nudged inward.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    points: Vec<f64>,
    nudged: usize,
}

impl Sample {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        Self::with_nudge(points, BOUNDARY_NUDGE)
    }

    pub fn with_nudge(mut points: Vec<f64>, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 0.5) {
            return Err(Error::Config(format!(
                "boundary nudge {eps} must lie in (0, 0.5)"
            )));
        }
        if points.is_empty() {
            return Err(Error::InvalidSample("sample is empty".into()));
        }
        let mut nudged = 0;
        for (i, x) in points.iter_mut().enumerate() {
            if !(0.0..=1.0).contains(x) {
                return Err(Error::InvalidSample(format!(
                    "observation {i} = {x} lies outside [0, 1]"
                )));
            }
            if *x == 0.0 {
                *x = eps;
                nudged += 1;
            } else if *x == 1.0 {
                *x = 1.0 - eps;
                nudged += 1;
            }
        }
        if nudged > 0 {
            log::debug!("moved {nudged} boundary observations inward by {eps}");
        }
        Ok(Self { points, nudged })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of observations that sat exactly on 0 or 1.
    pub fn nudged(&self) -> usize {
        self.nudged
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let points: Vec<f64> = serde_json::from_str(s)?;
        Self::new(points)
    }

    /// Single-column CSV with header `x`.
    pub fn from_csv_reader<R: Read>(rdr: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(rdr);
        let headers = rdr.headers()?.clone();
        if headers.len() != 1 || &headers[0] != "x" {
            return Err(Error::InvalidSample(format!(
                "expected a single column with header \"x\", found {headers:?}"
            )));
        }
        let mut points = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let v: f64 = rec[0].parse().map_err(|_| {
                Error::InvalidSample(format!("row {} value {:?} is not a number", i + 1, &rec[0]))
            })?;
            points.push(v);
        }
        Self::new(points)
    }

    /// Reads a JSON array or a CSV file, chosen by the first non-blank byte.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if text.trim_start().starts_with('[') {
            Self::from_json_str(&text)
        } else {
            Self::from_csv_reader(text.as_bytes())
        }
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(self.points.len() * 20 + 2);
        out.push_str("x\n");
        for x in &self.points {
            out.push_str(&format!("{x:?}\n"));
        }
        out
    }
}

/// Composition sampling: pick a component by weight, then invert its CDF.
pub fn poly_sample(params: &PolygonalParams, n: usize, seed: u64) -> Result<Sample> {
    if n == 0 {
        return Err(Error::InvalidSample(
            "sample size must be at least 1".into(),
        ));
    }
    if !params.is_normalized() {
        return Err(Error::InvalidParams(
            "sampling requires normalized weights".into(),
        ));
    }
    let mut cum = Vec::with_capacity(params.g());
    let mut acc = 0.0;
    for w in params.weights() {
        acc += w;
        cum.push(acc);
    }
    let total = acc;
    let mut rng = rng_from_seed(seed);
    let points = (0..n)
        .map(|_| {
            let pick = rng.random::<f64>() * total;
            let k = cum.partition_point(|&c| c <= pick).min(params.g() - 1);
            params.modes()[k].quantile(rng.random::<f64>())
        })
        .collect();
    Sample::new(points)
}

/// `Σ log f(x_j)`, or `-∞` when some observation has zero density.
pub fn log_likelihood(params: &PolygonalParams, sample: &Sample) -> f64 {
    let mut total = 0.0;
    for &x in sample.points() {
        let d = params.density(x);
        if d <= 0.0 {
            return f64::NEG_INFINITY;
        }
        total += d.ln();
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m(t: f64) -> TriangularMode {
        TriangularMode::new(t).unwrap()
    }

    // Composite Simpson rule, independent of the closed forms under test.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn tri_pdf_examples() {
        assert_eq!(tri_pdf(0.25, m(0.5)).unwrap(), 1.0);
        assert_eq!(tri_pdf(0.25, m(0.0)).unwrap(), 1.5);
        assert_eq!(tri_pdf(0.5, m(0.5)).unwrap(), 2.0);
        assert_eq!(tri_pdf(1.0, m(1.0)).unwrap(), 2.0);
        assert_eq!(tri_pdf(0.0, m(0.0)).unwrap(), 2.0);
        assert_eq!(tri_pdf(0.25, m(1.0)).unwrap(), 0.5);
        assert!(matches!(tri_pdf(1.5, m(0.5)), Err(Error::Domain { .. })));
        assert!(TriangularMode::new(-0.1).is_err());
    }

    #[test]
    fn tri_cdf_matches_quadrature() {
        // Oracle: the kink sits on a panel boundary, so Simpson is exact up to rounding.
        let q = simpson(|x| m(0.5).density(x), 0.0, 0.25, 64);
        assert_abs_diff_eq!(q, 0.125, epsilon = 1e-14);
        assert_abs_diff_eq!(tri_cdf(0.25, m(0.5)).unwrap(), 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(tri_cdf(0.5, m(0.5)).unwrap(), 0.5, epsilon = 1e-15);
        for t in [0.0, 0.3, 1.0] {
            assert_eq!(tri_cdf(0.0, m(t)).unwrap(), 0.0);
            assert_abs_diff_eq!(tri_cdf(1.0, m(t)).unwrap(), 1.0, epsilon = 1e-15);
        }
        assert!(tri_cdf(-0.1, m(0.5)).is_err());
    }

    #[test]
    fn tri_quantile_examples() {
        assert_eq!(tri_quantile(0.5, m(0.5)).unwrap(), 0.5);
        assert_abs_diff_eq!(tri_quantile(0.125, m(0.5)).unwrap(), 0.25, epsilon = 1e-15);
        assert_eq!(tri_quantile(0.0, m(0.3)).unwrap(), 0.0);
        assert!(tri_quantile(1.1, m(0.3)).is_err());
        for t in [0.0, 0.2, 0.7, 1.0] {
            for i in 0..=100 {
                let u = i as f64 / 100.0;
                let x = tri_quantile(u, m(t)).unwrap();
                assert_abs_diff_eq!(m(t).cdf(x), u, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn poly_pdf_examples() {
        let uni = PolygonalParams::uniform();
        for x in [0.0, 0.1, 0.5, 0.77, 1.0] {
            assert_eq!(poly_pdf(x, &uni).unwrap(), 1.0);
        }
        let single = PolygonalParams::single(0.5).unwrap();
        assert_eq!(poly_pdf(0.5, &single).unwrap(), 2.0);
        let twin = PolygonalParams::new(vec![0.4, 0.6], vec![0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(
            poly_pdf(0.25, &twin).unwrap(),
            tri_pdf(0.25, m(0.5)).unwrap(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn params_validation() {
        assert!(PolygonalParams::new(vec![0.5, 0.4], vec![0.1, 0.2]).is_err());
        assert!(PolygonalParams::new(vec![1.0], vec![0.1, 0.2]).is_err());
        assert!(PolygonalParams::new(vec![], vec![]).is_err());
        assert!(PolygonalParams::new(vec![1.5, -0.5], vec![0.1, 0.2]).is_err());
        assert!(PolygonalParams::sub_probability(vec![0.75], vec![0.5]).is_ok());
    }

    #[test]
    fn params_json_shape() {
        let p = PolygonalParams::new(vec![0.25, 0.75], vec![0.2, 0.8]).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(
            s,
            r#"{"weights":[0.25,0.75],"modes":[0.2,0.8],"normalized":true}"#
        );
        let back: PolygonalParams = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        let bad = r#"{"weights":[0.5,0.6],"modes":[0.2,0.8],"normalized":true}"#;
        assert!(serde_json::from_str::<PolygonalParams>(bad).is_err());
        let bad_mode = r#"{"weights":[1.0],"modes":[1.2]}"#;
        assert!(serde_json::from_str::<PolygonalParams>(bad_mode).is_err());
    }

    #[test]
    fn piecewise_linear_examples() {
        let u = to_piecewise_linear(&PolygonalParams::uniform());
        assert_eq!(u.knots(), &[0.0, 1.0]);
        assert_eq!(u.values(), &[1.0, 1.0]);
        let t = to_piecewise_linear(&PolygonalParams::single(0.5).unwrap());
        assert_eq!(t.knots(), &[0.0, 0.5, 1.0]);
        assert_eq!(t.values(), &[0.0, 2.0, 0.0]);
        assert_eq!(t.eval(0.25), 1.0);
        assert_eq!(exact_integral(&u), 1.0);
        assert_eq!(exact_integral(&t), 1.0);
        let sub = PolygonalParams::sub_probability(vec![0.75], vec![0.5]).unwrap();
        assert_abs_diff_eq!(
            exact_integral(&to_piecewise_linear(&sub)),
            0.75,
            epsilon = 1e-15
        );
    }

    #[test]
    fn piecewise_linear_validation() {
        assert!(PiecewiseLinear::new(vec![0.0, 0.5], vec![1.0, 1.0]).is_err());
        assert!(PiecewiseLinear::new(vec![0.0, 0.5, 0.5, 1.0], vec![1.0; 4]).is_err());
        assert!(PiecewiseLinear::new(vec![0.0, 1.0], vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn concavity_examples() {
        let convex = PiecewiseLinear::new(vec![0.0, 0.5, 1.0], vec![0.0, 1.0, 3.0]).unwrap();
        assert!(!is_concave(&convex));
        assert!(is_concave(
            &to_piecewise_linear(&PolygonalParams::uniform())
        ));
        let p = PolygonalParams::new(vec![0.2, 0.3, 0.5], vec![0.0, 0.4, 1.0]).unwrap();
        assert!(is_concave(&to_piecewise_linear(&p)));
    }

    #[test]
    fn cdf_and_quantile() {
        let uni = PolygonalParams::uniform();
        for i in 0..=20 {
            let x = i as f64 / 20.0;
            assert_abs_diff_eq!(poly_cdf(x, &uni).unwrap(), x, epsilon = 1e-15);
        }
        let single = PolygonalParams::single(0.5).unwrap();
        assert_abs_diff_eq!(poly_quantile(0.5, &single).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(poly_cdf(0.25, &single).unwrap(), 0.125, epsilon = 1e-15);
        let sub = PolygonalParams::sub_probability(vec![0.5], vec![0.5]).unwrap();
        assert!(poly_quantile(0.3, &sub).is_err());
    }

    #[test]
    fn sampling_moments_and_determinism() {
        let single = PolygonalParams::single(0.5).unwrap();
        let n = 100_000;
        let s = poly_sample(&single, n, 11).unwrap();
        // Oracle moments by quadrature of x·f and x²·f.
        let mean = simpson(|x| x * single.density(x), 0.0, 1.0, 2000);
        let second = simpson(|x| x * x * single.density(x), 0.0, 1.0, 2000);
        assert_abs_diff_eq!(mean, (1.0 + 0.5) / 3.0, epsilon = 1e-12);
        let sd = (second - mean * mean).sqrt();
        let emp = s.points().iter().sum::<f64>() / n as f64;
        assert!((emp - mean).abs() < 4.0 * sd / (n as f64).sqrt());

        let again = poly_sample(&single, n, 11).unwrap();
        assert_eq!(s, again);
        assert!(s.points().iter().all(|&x| x > 0.0 && x < 1.0));

        let uni = poly_sample(&PolygonalParams::uniform(), n, 3).unwrap();
        let mut pts = uni.points().to_vec();
        pts.sort_by(f64::total_cmp);
        let ks = pts
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                ((i + 1) as f64 / n as f64 - x)
                    .abs()
                    .max((x - i as f64 / n as f64).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "KS distance {ks}");
    }

    #[test]
    fn sample_rejects_bad_input() {
        assert!(poly_sample(&PolygonalParams::uniform(), 0, 1).is_err());
        let sub = PolygonalParams::sub_probability(vec![0.5], vec![0.5]).unwrap();
        assert!(poly_sample(&sub, 10, 1).is_err());
        assert!(Sample::new(vec![]).is_err());
        assert!(Sample::new(vec![0.5, 1.2]).is_err());
        assert!(Sample::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn boundary_nudge() {
        let s = Sample::new(vec![0.0, 0.5, 1.0]).unwrap();
        assert_eq!(s.nudged(), 2);
        assert_eq!(s.points(), &[1e-12, 0.5, 1.0 - 1e-12]);
        let single = PolygonalParams::single(0.5).unwrap();
        assert!(log_likelihood(&single, &s).is_finite());
    }

    #[test]
    fn sample_io() {
        let s = Sample::from_csv_reader("x\n0.1\n0.5\n 0.9\n".as_bytes()).unwrap();
        assert_eq!(s.points(), &[0.1, 0.5, 0.9]);
        assert!(Sample::from_csv_reader("y\n0.1\n".as_bytes()).is_err());
        assert!(Sample::from_csv_reader("x\nabc\n".as_bytes()).is_err());
        let j = Sample::from_json_str("[0.25, 0.75]").unwrap();
        assert_eq!(j.points(), &[0.25, 0.75]);
        let round = Sample::from_csv_reader(s.to_csv_string().as_bytes()).unwrap();
        assert_eq!(round, s);
    }

    #[test]
    fn log_likelihood_examples() {
        let uni = PolygonalParams::uniform();
        let s = Sample::new(vec![0.1, 0.4, 0.9]).unwrap();
        assert_eq!(log_likelihood(&uni, &s), 0.0);
        let single = PolygonalParams::single(0.5).unwrap();
        let one = Sample::new(vec![0.5]).unwrap();
        assert_abs_diff_eq!(log_likelihood(&single, &one), 2f64.ln(), epsilon = 1e-15);
        let two = Sample::new(vec![0.25, 0.5]).unwrap();
        assert_abs_diff_eq!(log_likelihood(&single, &two), 2f64.ln(), epsilon = 1e-15);
        let dead = PolygonalParams::sub_probability(vec![0.0], vec![0.5]).unwrap();
        assert_eq!(log_likelihood(&dead, &one), f64::NEG_INFINITY);
    }
}
