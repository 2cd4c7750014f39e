//! Maximum-likelihood fitting of polygonal mixtures by EM.
//!
//! The E-step is the usual posterior allocation. The M-step splits into a
//! closed-form weight update and, per component, an exact weighted-ML mode
//! search: between consecutive observations the weighted triangular
//! log-likelihood is `const − W_left·ln θ − W_right·ln(1−θ)`, which is convex
//! in `θ`, so its maximum over `[0, 1]` sits at an observation or at an
//! endpoint. Scanning those candidates with prefix sums makes every iteration
//! a true maximization, and the log-likelihood trace is monotone.

use std::f64::consts::LN_2;

use itertools::Itertools;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{PolygonalParams, Sample};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, SimRng};

/// Responsibility mass below which a component counts as dead.
pub const DEGENERATE_MASS: f64 = 1e-12;
/// Weight given to a component revived after dying.
pub const RESET_WEIGHT: f64 = 1e-6;
/// Objective differences below this are treated as ties in the mode search.
pub const MODE_TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitStrategy {
    /// Modes at the `i/(g+1)` empirical quantiles, equal weights.
    Quantile,
    /// Uniform modes, flat-Dirichlet weights.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub g: usize,
    pub max_iterations: usize,
    /// Stop once `|ΔL| ≤ tolerance · max(|L|, 1)`.
    pub tolerance: f64,
    pub restarts: usize,
    /// Strategy of the first run; later restarts always start at random.
    pub init: InitStrategy,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            g: 1,
            max_iterations: 500,
            tolerance: 1e-8,
            restarts: 10,
            init: InitStrategy::Quantile,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn new(g: usize) -> Self {
        Self {
            g,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.g == 0 {
            return Err(Error::Config("g must be at least 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        if self.restarts == 0 || self.max_iterations == 0 {
            return Err(Error::Config(
                "restarts and max_iterations must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: PolygonalParams,
    pub loglik: f64,
    /// Log-likelihood at the start point and after every EM update.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Index of the winning run among the restarts.
    pub restart: usize,
    /// Dead components revived during the winning run.
    pub resets: usize,
}

/// Posterior component probabilities, one row per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    g: usize,
    data: Vec<f64>,
}

impl Responsibilities {
    pub fn n(&self) -> usize {
        self.data.len() / self.g
    }

    pub fn g(&self) -> usize {
        self.g
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.g..(j + 1) * self.g]
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.data.iter().skip(i).step_by(self.g).copied().collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.g];
        for row in self.data.chunks_exact(self.g) {
            for (s, r) in sums.iter_mut().zip(row) {
                *s += r;
            }
        }
        sums
    }
}

/// Entry `(j, i)` is `π_i f(x_j; θ_i) / Σ_k π_k f(x_j; θ_k)`.
pub fn e_step(params: &PolygonalParams, sample: &Sample) -> Result<Responsibilities> {
    let g = params.g();
    let mut data = Vec::with_capacity(sample.len() * g);
    for (j, &x) in sample.points().iter().enumerate() {
        let start = data.len();
        let mut total = 0.0;
        for (w, m) in params.weights().iter().zip(params.modes()) {
            let v = w * m.density(x);
            total += v;
            data.push(v);
        }
        if !(total > 0.0) {
            return Err(Error::ZeroDensity { index: j, x });
        }
        data[start..].iter_mut().for_each(|v| *v /= total);
    }
    Ok(Responsibilities { g, data })
}

/// Weighted-ML mode of a single triangular component.
///
/// The candidates are 0, 1 and every point with positive weight; ties within
/// [`MODE_TIE_TOL`] go to the smaller candidate.
pub fn m_step_mode(points: &[f64], weights: &[f64]) -> Result<f64> {
    if points.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            left: points.len(),
            right: weights.len(),
        });
    }
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(points.len());
    for (&x, &w) in points.iter().zip(weights) {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain {
                what: "x",
                value: x,
            });
        }
        if !(w >= 0.0) || !w.is_finite() {
            return Err(Error::InvalidSample(format!(
                "weight {w} is not a nonnegative number"
            )));
        }
        if w > 0.0 {
            pairs.push((x, w));
        }
    }
    if pairs.is_empty() {
        return Err(Error::EmptyEffectiveSample);
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ws: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let ln_left: Vec<f64> = xs.iter().map(|x| (2.0 * x).ln()).collect();
    let ln_right: Vec<f64> = xs.iter().map(|x| (2.0 * (1.0 - x)).ln()).collect();
    Ok(best_mode(&xs, &ws, &ln_left, &ln_right).0)
}

/// Mode search over sorted points with precomputed `ln(2x)` and `ln(2(1-x))`.
/// Zero weights are allowed only where the logs are finite.
fn best_mode(xs: &[f64], ws: &[f64], ln_left: &[f64], ln_right: &[f64]) -> (f64, f64) {
    let n = xs.len();
    // Suffix sums over the points strictly right of a group.
    let mut suf_r = vec![0.0; n + 1];
    let mut suf_v = vec![0.0; n + 1];
    for j in (0..n).rev() {
        suf_r[j] = suf_r[j + 1] + ws[j] * ln_right[j];
        suf_v[j] = suf_v[j + 1] + ws[j];
    }
    let left_term = |l: f64, w: f64, c: f64| if w > 0.0 { l - w * c.ln() } else { 0.0 };
    let right_term = |r: f64, v: f64, c: f64| if v > 0.0 { r - v * (1.0 - c).ln() } else { 0.0 };

    let mut best: Option<(f64, f64)> = None;
    let mut consider = |c: f64, obj: f64| match best {
        None => best = Some((c, obj)),
        Some((_, b)) if obj > b + MODE_TIE_TOL => best = Some((c, obj)),
        _ => {}
    };

    if xs[0] > 0.0 {
        consider(0.0, suf_r[0]);
    }
    let (mut l_sum, mut w_sum) = (0.0, 0.0);
    let mut i = 0;
    while i < n {
        let c = xs[i];
        let mut j = i;
        let (mut eq_w, mut eq_l) = (0.0, 0.0);
        while j < n && xs[j] == c {
            eq_w += ws[j];
            eq_l += ws[j] * ln_left[j];
            j += 1;
        }
        if eq_w > 0.0 {
            let obj = left_term(l_sum, w_sum, c) + eq_w * LN_2 + right_term(suf_r[j], suf_v[j], c);
            consider(c, obj);
        }
        l_sum += eq_l;
        w_sum += eq_w;
        i = j;
    }
    if xs[n - 1] < 1.0 {
        consider(1.0, l_sum);
    }
    best.expect("at least one candidate")
}

/// Sample sorted once, with the per-point logs the mode search needs.
struct Prepared {
    xs: Vec<f64>,
    order: Vec<usize>,
    ln_left: Vec<f64>,
    ln_right: Vec<f64>,
}

impl Prepared {
    fn new(sample: &Sample) -> Self {
        let order: Vec<usize> = (0..sample.len())
            .sorted_by(|&a, &b| sample.points()[a].total_cmp(&sample.points()[b]))
            .collect();
        let xs: Vec<f64> = order.iter().map(|&i| sample.points()[i]).collect();
        let ln_left = xs.iter().map(|x| (2.0 * x).ln()).collect();
        let ln_right = xs.iter().map(|x| (2.0 * (1.0 - x)).ln()).collect();
        Self {
            xs,
            order,
            ln_left,
            ln_right,
        }
    }

    fn n(&self) -> usize {
        self.xs.len()
    }

    /// Log-likelihood and column-major responsibilities at `params`.
    fn e_step(&self, params: &PolygonalParams, resp: &mut [f64]) -> Result<f64> {
        let n = self.n();
        let g = params.g();
        let mut totals = vec![0.0; n];
        for (i, (w, m)) in params.weights().iter().zip(params.modes()).enumerate() {
            let col = &mut resp[i * n..(i + 1) * n];
            for ((r, t), &x) in col.iter_mut().zip(totals.iter_mut()).zip(&self.xs) {
                let v = w * m.density(x);
                *r = v;
                *t += v;
            }
        }
        let mut ll = 0.0;
        for (j, t) in totals.iter().enumerate() {
            if !(*t > 0.0) {
                return Err(Error::ZeroDensity {
                    index: self.order[j],
                    x: self.xs[j],
                });
            }
            ll += t.ln();
        }
        for i in 0..g {
            for (r, t) in resp[i * n..(i + 1) * n].iter_mut().zip(&totals) {
                *r /= t;
            }
        }
        Ok(ll)
    }

    fn m_step(&self, current: &PolygonalParams, resp: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.n();
        let g = current.g();
        let mut masses = Vec::with_capacity(g);
        let mut modes = Vec::with_capacity(g);
        for i in 0..g {
            let col = &resp[i * n..(i + 1) * n];
            let mass: f64 = col.iter().sum();
            masses.push(mass);
            if mass > 0.0 {
                modes.push(best_mode(&self.xs, col, &self.ln_left, &self.ln_right).0);
            } else {
                modes.push(current.modes()[i].theta());
            }
        }
        let total: f64 = masses.iter().sum();
        let weights = masses.iter().map(|m| m / total).collect();
        (weights, modes, masses)
    }
}

fn random_simplex(rng: &mut SimRng, g: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..g).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    if s > 0.0 {
        e.iter().map(|v| v / s).collect()
    } else {
        vec![1.0 / g as f64; g]
    }
}

fn initial_params(
    prep: &Prepared,
    g: usize,
    init: InitStrategy,
    rng: &mut SimRng,
) -> PolygonalParams {
    let (weights, modes) = match init {
        InitStrategy::Quantile => {
            let n = prep.n();
            let modes = (1..=g)
                .map(|i| {
                    let p = i as f64 / (g + 1) as f64;
                    let pos = p * (n - 1) as f64;
                    let lo = pos.floor() as usize;
                    let hi = (lo + 1).min(n - 1);
                    let frac = pos - lo as f64;
                    prep.xs[lo] + frac * (prep.xs[hi] - prep.xs[lo])
                })
                .collect();
            (vec![1.0 / g as f64; g], modes)
        }
        InitStrategy::Random => {
            let modes = (0..g).map(|_| rng.random::<f64>()).collect();
            (random_simplex(rng, g), modes)
        }
    };
    normalized(weights, modes)
}

fn normalized(mut weights: Vec<f64>, modes: Vec<f64>) -> PolygonalParams {
    let s: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= s);
    PolygonalParams::new(weights, modes).expect("weights renormalized onto the simplex")
}

fn is_converged(prev: f64, next: f64, tol: f64) -> bool {
    (next - prev).abs() <= tol * prev.abs().max(1.0)
}

fn run_em(
    prep: &Prepared,
    init: PolygonalParams,
    cfg: &FitConfig,
    rng: &mut SimRng,
    restart: usize,
) -> Result<FitResult> {
    let n = prep.n();
    let g = init.g();
    let mut resp = vec![0.0; n * g];
    let mut params = init;
    let mut ll = prep.e_step(&params, &mut resp)?;
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    let mut resets = 0;

    for it in 1..=cfg.max_iterations {
        let (weights, modes, masses) = prep.m_step(&params, &resp);
        let mut next = normalized(weights, modes);
        let mut next_ll = prep.e_step(&next, &mut resp)?;

        if let Some(dead) = masses.iter().position(|&m| m < DEGENERATE_MASS) {
            let mut w: Vec<f64> = next.weights().to_vec();
            let mut th = next.mode_values();
            let rest: f64 = w
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != dead)
                .map(|(_, v)| v)
                .sum();
            w.iter_mut().for_each(|v| *v *= (1.0 - RESET_WEIGHT) / rest);
            w[dead] = RESET_WEIGHT;
            th[dead] = rng.random::<f64>();
            let revived = normalized(w, th);
            let mut trial = vec![0.0; n * g];
            match prep.e_step(&revived, &mut trial) {
                Ok(trial_ll) if trial_ll >= next_ll => {
                    log::debug!("run {restart}: revived component {dead} at iteration {it}");
                    next = revived;
                    next_ll = trial_ll;
                    resp = trial;
                    resets += 1;
                }
                _ => log::debug!(
                    "run {restart}: component {dead} is degenerate; revival would lower the likelihood"
                ),
            }
        }

        params = next;
        trace.push(next_ll);
        iterations = it;
        if is_converged(ll, next_ll, cfg.tolerance) {
            ll = next_ll;
            converged = true;
            break;
        }
        ll = next_ll;
    }

    Ok(FitResult {
        params,
        loglik: ll,
        trace,
        iterations,
        converged,
        restart,
        resets,
    })
}

fn check_sample(sample: &Sample, g: usize) -> Result<()> {
    if sample.len() < g {
        return Err(Error::Precondition(format!(
            "sample of size {} is smaller than g = {g}",
            sample.len()
        )));
    }
    Ok(())
}

/// Best of `cfg.restarts` EM runs. The first run uses `cfg.init`, the rest
/// start at random from seeds derived from `cfg.seed`.
pub fn em_fit(sample: &Sample, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    check_sample(sample, cfg.g)?;
    let prep = Prepared::new(sample);
    let runs: Vec<Result<FitResult>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from_seed(derive_seed(cfg.seed, &[r as u64]));
            let strategy = if r == 0 {
                cfg.init
            } else {
                InitStrategy::Random
            };
            let init = initial_params(&prep, cfg.g, strategy, &mut rng);
            run_em(&prep, init, cfg, &mut rng, r)
        })
        .collect();
    pick_best(runs)
}

fn pick_best(runs: Vec<Result<FitResult>>) -> Result<FitResult> {
    let mut best: Option<FitResult> = None;
    let mut first_err = None;
    for run in runs {
        match run {
            Ok(fit) => {
                if best.as_ref().is_none_or(|b| fit.loglik > b.loglik) {
                    best = Some(fit);
                }
            }
            Err(e) => {
                log::warn!("EM run failed: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.expect("at least one run"))
}

/// A single EM run from the given starting point.
pub fn em_from(sample: &Sample, init: &PolygonalParams, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    check_sample(sample, init.g())?;
    if !init.is_normalized() {
        return Err(Error::InvalidParams(
            "EM start point must be normalized".into(),
        ));
    }
    let prep = Prepared::new(sample);
    let mut rng = rng_from_seed(cfg.seed);
    run_em(&prep, init.clone(), cfg, &mut rng, 0)
}

/// Fits for `g = 1..=gamma`. Besides the restarts, each `g > 1` also runs EM
/// from the `g − 1` solution with its heaviest component duplicated, which
/// represents the same density, so the log-likelihood never decreases in `g`.
pub fn fit_nested(sample: &Sample, gamma: usize, cfg: &FitConfig) -> Result<Vec<FitResult>> {
    if gamma == 0 {
        return Err(Error::Config("gamma must be at least 1".into()));
    }
    let mut fits: Vec<FitResult> = Vec::with_capacity(gamma);
    for g in 1..=gamma {
        let cfg_g = FitConfig {
            g,
            seed: derive_seed(cfg.seed, &[g as u64]),
            ..cfg.clone()
        };
        let mut fit = em_fit(sample, &cfg_g)?;
        if let Some(prev) = fits.last() {
            let warm_start = duplicate_heaviest(&prev.params);
            let mut warm = em_from(sample, &warm_start, &cfg_g)?;
            if warm.loglik > fit.loglik {
                warm.restart = cfg_g.restarts;
                fit = warm;
            }
        }
        fits.push(fit);
    }
    Ok(fits)
}

fn duplicate_heaviest(p: &PolygonalParams) -> PolygonalParams {
    let k = p
        .weights()
        .iter()
        .position_max_by(|a, b| a.total_cmp(b))
        .expect("non-empty");
    let mut w = p.weights().to_vec();
    let mut th = p.mode_values();
    w[k] *= 0.5;
    w.push(w[k]);
    th.push(th[k]);
    normalized(w, th)
}

/// Minimum over relabelings of the Euclidean distance between the stacked
/// `(π, θ)` vectors. Exhaustive for `g ≤ 7`, optimal assignment beyond.
pub fn permutation_distance(a: &PolygonalParams, b: &PolygonalParams) -> Result<f64> {
    if a.g() != b.g() {
        return Err(Error::DimensionMismatch {
            left: a.g(),
            right: b.g(),
        });
    }
    let cost = pair_costs(a, b);
    let total = if a.g() <= 7 {
        exhaustive_min_cost(&cost)
    } else {
        assignment_min_cost(&cost)
    };
    Ok(total.max(0.0).sqrt())
}

fn pair_costs(a: &PolygonalParams, b: &PolygonalParams) -> Vec<Vec<f64>> {
    let (ta, tb) = (a.mode_values(), b.mode_values());
    (0..a.g())
        .map(|i| {
            (0..b.g())
                .map(|j| (a.weights()[i] - b.weights()[j]).powi(2) + (ta[i] - tb[j]).powi(2))
                .collect()
        })
        .collect()
}

fn exhaustive_min_cost(cost: &[Vec<f64>]) -> f64 {
    let g = cost.len();
    (0..g)
        .permutations(g)
        .map(|perm| {
            perm.iter()
                .enumerate()
                .map(|(i, &j)| cost[i][j])
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Hungarian algorithm with potentials, O(g³).
pub(crate) fn assignment_min_cost(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| cost[p[j] - 1][j - 1]).sum()
}
