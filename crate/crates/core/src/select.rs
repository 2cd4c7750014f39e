//! Penalized choice of the number of components.
//!
//! The criterion is `crit(g) = −L_g/n + κ′·shape(g, n)`, minimized over
//! `g = 1..=γ`, where `L_g` is the maximized log-likelihood of the g-component
//! fit. The penalty shape is known only up to the multiplier `κ′`, which is
//! calibrated from the data by the dimension jump: `ĝ(κ′)` is traced over a
//! log grid, the value of `κ′` where `ĝ` falls the furthest is taken as the
//! minimal penalty, and twice that is returned.
//!
//! The shape is `δ_g² + g/n`, where `δ_g` solves `√n·δ² = J_g(δ)` with the
//! entropy integral `J_g` of the g-component square-root class. A closed-form
//! approximation of `δ_g` is available for comparison.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::FitResult;

/// Unknown constants of the entropy bounds and the penalty, all positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PenaltyConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub kappa: f64,
}

impl Default for PenaltyConstants {
    fn default() -> Self {
        Self {
            c1: 1.0,
            c2: 1.0,
            c3: 1.0,
            kappa: 1.0,
        }
    }
}

impl PenaltyConstants {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("c1", self.c1),
            ("c2", self.c2),
            ("c3", self.c3),
            ("kappa", self.kappa),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "penalty constant {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// `(4/3^{4/3})·√(2^{1/4}c3 + 1)`.
    pub fn c5(&self) -> f64 {
        j_lead() * (2f64.powf(0.25) * self.c3 + 1.0).sqrt()
    }
}

fn j_lead() -> f64 {
    4.0 / 3f64.powf(4.0 / 3.0)
}

fn check_g(g: usize) -> Result<()> {
    if g == 0 {
        return Err(Error::Precondition("g must be at least 1".into()));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::Precondition(format!(
            "{name} must be positive, got {v}"
        )));
    }
    Ok(())
}

/// `ln g + g·ln(2πe)/2`.
pub fn c4(g: usize) -> Result<f64> {
    check_g(g)?;
    let g = g as f64;
    Ok(g.ln() + 0.5 * g * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln())
}

/// Bracketing entropy bound `2^{1/4}·c2·ε^{−1/2}` for square roots of
/// bounded concave densities.
pub fn entropy_bound_concave(epsilon: f64, consts: &PenaltyConstants) -> Result<f64> {
    check_positive("epsilon", epsilon)?;
    Ok(2f64.powf(0.25) * consts.c2 / epsilon.sqrt())
}

/// Bracketing entropy bound `g(2^{1/4}c3 + 1)(3/ε)^{1/2} + c4(g)` for square
/// roots of g-component mixtures.
pub fn entropy_bound_mixture(g: usize, epsilon: f64, consts: &PenaltyConstants) -> Result<f64> {
    check_positive("epsilon", epsilon)?;
    Ok(g as f64 * (2f64.powf(0.25) * consts.c3 + 1.0) * (3.0 / epsilon).sqrt() + c4(g)?)
}

/// `max{δ, (2^{17/8}√c2/3)·δ^{3/4}}` on `0 < δ ≤ 1`.
pub fn j_concave(delta: f64, consts: &PenaltyConstants) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Precondition(format!(
            "delta must lie in (0, 1], got {delta}"
        )));
    }
    let curved = 2f64.powf(17.0 / 8.0) * consts.c2.sqrt() / 3.0 * delta.powf(0.75);
    Ok(delta.max(curved))
}

/// `(4/3^{4/3})·√(g(2^{1/4}c3 + 1))·δ^{3/4} + δ·√c4(g)`.
pub fn j_mixture(delta: f64, g: usize, consts: &PenaltyConstants) -> Result<f64> {
    check_positive("delta", delta)?;
    let a = (g as f64 * (2f64.powf(0.25) * consts.c3 + 1.0)).sqrt();
    Ok(j_lead() * a * delta.powf(0.75) + delta * c4(g)?.sqrt())
}

const DELTA_LO: f64 = 1e-12;
const DELTA_HI: f64 = 1e3;

/// The unique root of `√n·δ² = J_g(δ)` on `(1e-12, 1e3]`, by bisection in
/// `ln δ` to a relative width of `1e-14`. `J_g(δ)/δ²` decreases strictly, so
/// the difference changes sign exactly once.
pub fn solve_delta_g(n: usize, g: usize, consts: &PenaltyConstants) -> Result<f64> {
    if n == 0 {
        return Err(Error::Precondition("n must be at least 1".into()));
    }
    consts.validate()?;
    let sn = (n as f64).sqrt();
    let resid = |d: f64| -> Result<f64> { Ok(sn * d * d - j_mixture(d, g, consts)?) };
    let (r_lo, r_hi) = (resid(DELTA_LO)?, resid(DELTA_HI)?);
    if !(r_lo < 0.0 && r_hi > 0.0) {
        return Err(Error::Bracket(format!(
            "n = {n}, g = {g}: residual {r_lo} at {DELTA_LO} and {r_hi} at {DELTA_HI}"
        )));
    }
    let (mut lo, mut hi) = (DELTA_LO.ln(), DELTA_HI.ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if resid(mid.exp())? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

fn gap(n: usize, g: usize) -> Result<f64> {
    check_g(g)?;
    let gap = (n as f64).sqrt() - c4(g)?.sqrt();
    if !(gap > 0.0) {
        return Err(Error::Precondition(format!(
            "√n must exceed √c4(g); n = {n}, g = {g}, c4(g) = {}",
            c4(g)?
        )));
    }
    Ok(gap)
}

/// The closed form `(c5·√g / [√n − √c4(g)]³)^{4/3}`. It does not solve
/// `√n·δ² = J_g(δ)` and is kept for comparison with [`solve_delta_g`].
pub fn closed_form_delta_g(n: usize, g: usize, consts: &PenaltyConstants) -> Result<f64> {
    let gap = gap(n, g)?;
    Ok((consts.c5() * (g as f64).sqrt() / gap.powi(3)).powf(4.0 / 3.0))
}

/// How the first term of the penalty shape is computed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeMode {
    /// `δ_g²` with `δ_g` from [`solve_delta_g`].
    #[default]
    Solved,
    /// `(√g/[√n − √c4(g)]³)^{8/3}`.
    ClosedForm,
}

/// Penalty shape without its multiplier: first term plus `g/n`.
/// Requires `√n > √c4(g)` in both modes.
pub fn pen_shape(g: usize, n: usize, mode: ShapeMode, consts: &PenaltyConstants) -> Result<f64> {
    let gap = gap(n, g)?;
    let first = match mode {
        ShapeMode::Solved => solve_delta_g(n, g, consts)?.powi(2),
        ShapeMode::ClosedForm => ((g as f64).sqrt() / gap.powi(3)).powf(8.0 / 3.0),
    };
    Ok(first + g as f64 / n as f64)
}

/// `(e^{−1} − e^{−γ−1}) / (1 − e^{−1})`, which equals `Σ_{g=1}^{γ} e^{−g}`.
pub fn sigma_gamma(gamma: usize) -> Result<f64> {
    if gamma == 0 {
        return Err(Error::Precondition("gamma must be at least 1".into()));
    }
    let e1 = (-1.0f64).exp();
    Ok((e1 - (-(gamma as f64) - 1.0).exp()) / (1.0 - e1))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectOptions {
    pub shape: ShapeMode,
    pub consts: PenaltyConstants,
}

/// One candidate model in a selection. Models whose penalty shape is
/// undefined at this `n` carry no shape or criterion and cannot be chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub g: usize,
    pub loglik: f64,
    pub pen_shape: Option<f64>,
    pub crit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub n: usize,
    pub kappa_prime: f64,
    pub chosen_g: usize,
    pub models: Vec<ModelScore>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fits: Vec<FitResult>,
}

impl SelectionResult {
    pub fn chosen_fit(&self) -> Option<&FitResult> {
        self.fits.get(self.chosen_g - 1)
    }
}

/// Log-likelihoods and penalty shapes of a nested family of fits, the only
/// inputs the criterion needs.
#[derive(Debug, Clone, PartialEq)]
pub struct CriterionInputs {
    pub n: usize,
    pub loglik: Vec<f64>,
    pub shape: Vec<Option<f64>>,
}

impl CriterionInputs {
    pub fn from_fits(fits: &[FitResult], n: usize, opts: &SelectOptions) -> Result<Self> {
        let loglik: Vec<f64> = fits.iter().map(|f| f.loglik).collect();
        for (i, f) in fits.iter().enumerate() {
            if f.params.g() != i + 1 {
                return Err(Error::Config(format!(
                    "fit {i} has {} components, expected {}",
                    f.params.g(),
                    i + 1
                )));
            }
        }
        Self::new(loglik, n, opts)
    }

    /// `loglik[i]` belongs to the model with `i + 1` components.
    pub fn new(loglik: Vec<f64>, n: usize, opts: &SelectOptions) -> Result<Self> {
        if loglik.is_empty() {
            return Err(Error::Config("no fits to select from".into()));
        }
        if n == 0 {
            return Err(Error::Precondition("n must be at least 1".into()));
        }
        opts.consts.validate()?;
        let shape = (1..=loglik.len())
            .map(|g| match pen_shape(g, n, opts.shape, &opts.consts) {
                Ok(s) => Some(s),
                Err(e) => {
                    log::warn!("excluding g = {g} from selection: {e}");
                    None
                }
            })
            .collect::<Vec<_>>();
        if shape.iter().all(Option::is_none) {
            return Err(Error::Precondition(format!(
                "no candidate model has a defined penalty at n = {n}"
            )));
        }
        Ok(Self { n, loglik, shape })
    }

    pub fn crit(&self, kappa_prime: f64) -> Vec<Option<f64>> {
        let n = self.n as f64;
        self.loglik
            .iter()
            .zip(&self.shape)
            .map(|(l, s)| s.map(|s| -l / n + kappa_prime * s))
            .collect()
    }

    /// Minimizer of the criterion; the smallest `g` wins ties.
    pub fn argmin(&self, kappa_prime: f64) -> usize {
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in self.crit(kappa_prime).into_iter().enumerate() {
            if let Some(c) = c {
                if best.is_none_or(|(_, b)| c < b) {
                    best = Some((i + 1, c));
                }
            }
        }
        best.expect("at least one candidate has a penalty").0
    }

    pub fn scores(&self, kappa_prime: f64) -> Vec<ModelScore> {
        self.crit(kappa_prime)
            .into_iter()
            .enumerate()
            .map(|(i, crit)| ModelScore {
                g: i + 1,
                loglik: self.loglik[i],
                pen_shape: self.shape[i],
                crit,
            })
            .collect()
    }
}

/// Chooses `g` for a nested family `fits[g − 1]`, all fitted to the same
/// sample of size `n`.
pub fn select_g(
    fits: &[FitResult],
    n: usize,
    kappa_prime: f64,
    opts: &SelectOptions,
) -> Result<SelectionResult> {
    if !(kappa_prime >= 0.0) || kappa_prime.is_nan() {
        return Err(Error::Precondition(format!(
            "kappa' must be nonnegative, got {kappa_prime}"
        )));
    }
    let inputs = CriterionInputs::from_fits(fits, n, opts)?;
    Ok(SelectionResult {
        n,
        kappa_prime,
        chosen_g: inputs.argmin(kappa_prime),
        models: inputs.scores(kappa_prime),
        fits: fits.to_vec(),
    })
}

/// Grid and scaling of the dimension-jump calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub points: usize,
    /// Ratio of the working multiplier to the jump location.
    pub factor: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            kappa_min: 1e-6,
            kappa_max: 1e6,
            points: 1000,
            factor: 2.0,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa_min > 0.0 && self.kappa_max > self.kappa_min && self.kappa_max.is_finite())
        {
            return Err(Error::Config("kappa grid needs 0 < min < max".into()));
        }
        if self.points < 2 {
            return Err(Error::Config("kappa grid needs at least two points".into()));
        }
        if !(self.factor > 0.0) {
            return Err(Error::Config("calibration factor must be positive".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        let (a, b) = (self.kappa_min.ln(), self.kappa_max.ln());
        let m = (self.points - 1) as f64;
        (0..self.points)
            .map(|i| (a + (b - a) * i as f64 / m).exp())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Working multiplier, `factor × jump_kappa`.
    pub kappa_prime: f64,
    /// First grid value after the selected drop in `ĝ`.
    pub jump_kappa: f64,
    pub jump_size: usize,
    /// `(κ′, ĝ(κ′))` over the grid.
    pub path: Vec<(f64, usize)>,
}

impl Calibration {
    pub fn write_path_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["kappa_prime", "g_hat"])?;
        for (k, g) in &self.path {
            wtr.write_record([k.to_string(), g.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Dimension-jump calibration of `κ′`. The jump is the largest drop of `ĝ`
/// between consecutive grid points, equal drops going to the larger `κ′`.
/// Drops landing on the smallest model of the path count only when there is
/// no other drop: that last transition is driven by the bias of the smallest
/// model, not by the overfitting the jump is meant to locate.
pub fn calibrate_kappa(inputs: &CriterionInputs, cfg: &CalibrationConfig) -> Result<Calibration> {
    cfg.validate()?;
    let path: Vec<(f64, usize)> = cfg
        .grid()
        .into_iter()
        .map(|k| (k, inputs.argmin(k)))
        .collect();
    let floor = path.iter().map(|p| p.1).min().ok_or(Error::NoJump)?;
    let drops: Vec<(usize, usize)> = path
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0].1 > w[1].1)
        .map(|(i, w)| (i + 1, w[0].1 - w[1].1))
        .collect();
    let inner: Vec<(usize, usize)> = drops
        .iter()
        .copied()
        .filter(|&(at, _)| path[at].1 > floor)
        .collect();
    let candidates = if inner.is_empty() { &drops } else { &inner };
    let (at, jump_size) = candidates
        .iter()
        .copied()
        .max_by_key(|&(at, d)| (d, at))
        .ok_or(Error::NoJump)?;
    let jump_kappa = path[at].0;
    Ok(Calibration {
        kappa_prime: cfg.factor * jump_kappa,
        jump_kappa,
        jump_size,
        path,
    })
}

/// Calibrates `κ′` on `fits` and selects with it. With a single admissible
/// model there is nothing to calibrate and that model is returned.
pub fn select_calibrated(
    fits: &[FitResult],
    n: usize,
    opts: &SelectOptions,
    cal: &CalibrationConfig,
) -> Result<(SelectionResult, Option<Calibration>)> {
    let inputs = CriterionInputs::from_fits(fits, n, opts)?;
    let admissible = inputs.shape.iter().filter(|s| s.is_some()).count();
    let calibration = if admissible > 1 {
        Some(calibrate_kappa(&inputs, cal)?)
    } else {
        None
    };
    let k = calibration.as_ref().map_or(0.0, |c| c.kappa_prime);
    let result = SelectionResult {
        n,
        kappa_prime: k,
        chosen_g: inputs.argmin(k),
        models: inputs.scores(k),
        fits: fits.to_vec(),
    };
    Ok((result, calibration))
}
