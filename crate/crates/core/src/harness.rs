//! Seeded simulation experiments producing long-format tables.
//!
//! Each row is one metric of one replicate (or a summary over replicates):
//! `experiment,replicate,n,metric,value,ms`. Summary rows leave `replicate`
//! empty; rows summarizing across the whole n-grid use `n = 0`. In the
//! approximation report `n` holds the number of nodes `g`.
//!
//! Replicate `r` at the `k`-th grid size draws everything from
//! `derive_seed(seed, [r, k])`, so rows do not depend on scheduling.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx::{polygonal_from_concave, squared_polygonal};
use crate::dist::{log_likelihood, poly_sample, PolygonalParams};
use crate::divergence::{hellinger_sq, kl_divergence, DensityFn};
use crate::error::{Error, Result};
use crate::fit::{em_fit, fit_nested, permutation_distance, FitConfig, InitStrategy};
use crate::quadrature::QuadratureConfig;
use crate::rng::derive_seed;
use crate::select::{select_calibrated, CalibrationConfig, SelectOptions};
use crate::targets::Target;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Consistency,
    Hellinger,
    Selection,
    ApproxReport,
}

impl Experiment {
    pub fn id(self) -> &'static str {
        match self {
            Self::Consistency => "consistency",
            Self::Hellinger => "hellinger",
            Self::Selection => "selection",
            Self::ApproxReport => "approx-report",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// Exceedance thresholds for the Hellinger experiment.
pub const HELLINGER_THRESHOLDS: [f64; 3] = [0.05, 0.1, 0.2];

fn two_triangles() -> PolygonalParams {
    PolygonalParams::new(vec![0.5, 0.5], vec![0.2, 0.8]).expect("valid mixture")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub truth: PolygonalParams,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub gamma: usize,
    pub g_grid: Vec<usize>,
    /// Built-in target names for the approximation report.
    pub targets: Vec<String>,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
    pub restarts: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Record wall-clock milliseconds; off by default so tables are
    /// reproducible byte for byte.
    pub timing: bool,
    pub selection: SelectOptions,
    pub calibration: CalibrationConfig,
    pub quadrature: QuadratureConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let fit = FitConfig::default();
        Self {
            experiment: Experiment::Consistency,
            truth: two_triangles(),
            n_grid: vec![200, 2000, 20000],
            replicates: 50,
            gamma: 5,
            g_grid: vec![2, 4, 8, 16],
            targets: vec!["quad6".into(), "uniform".into(), "sine".into()],
            seed: 0,
            output: None,
            format: OutputFormat::Csv,
            restarts: fit.restarts,
            max_iterations: fit.max_iterations,
            tolerance: fit.tolerance,
            timing: false,
            selection: SelectOptions::default(),
            calibration: CalibrationConfig::default(),
            quadrature: QuadratureConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.experiment == Experiment::ApproxReport {
            if self.g_grid.is_empty() || self.targets.is_empty() {
                return Err(Error::Config(
                    "approximation report needs g values and targets".into(),
                ));
            }
            for t in &self.targets {
                t.parse::<Target>()?;
            }
        } else {
            if self.n_grid.is_empty() || self.n_grid.contains(&0) {
                return Err(Error::Config(
                    "n-grid must be non-empty with positive sizes".into(),
                ));
            }
            if !self.truth.is_normalized() {
                return Err(Error::Config("truth must be a normalized mixture".into()));
            }
        }
        if self.experiment == Experiment::Selection && self.gamma == 0 {
            return Err(Error::Config("gamma must be at least 1".into()));
        }
        self.fit_config(1, 0).validate()?;
        self.calibration.validate()?;
        self.quadrature.validate()
    }

    fn fit_config(&self, g: usize, seed: u64) -> FitConfig {
        FitConfig {
            g,
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            restarts: self.restarts,
            init: InitStrategy::Quantile,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub experiment: String,
    /// Empty for summary rows.
    pub replicate: Option<usize>,
    pub n: usize,
    pub metric: String,
    pub value: f64,
    pub ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub records: Vec<ReplicateRecord>,
}

impl Table {
    /// Per-replicate values of `metric` at `n`, in replicate order.
    pub fn values(&self, n: usize, metric: &str) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.n == n && r.replicate.is_some() && r.metric == metric)
            .map(|r| r.value)
            .collect()
    }

    pub fn summary(&self, n: usize, metric: &str) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.n == n && r.replicate.is_none() && r.metric == metric)
            .map(|r| r.value)
    }

    /// Orders rows by `n`, then replicate with summaries last, keeping the
    /// emission order of metrics within a replicate.
    pub fn canonicalize(&mut self) {
        self.records
            .sort_by_key(|r| (r.n, r.replicate.map_or(usize::MAX, |k| k)));
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["experiment", "replicate", "n", "metric", "value", "ms"])?;
        for r in &self.records {
            wtr.write_record([
                r.experiment.clone(),
                r.replicate.map(|k| k.to_string()).unwrap_or_default(),
                r.n.to_string(),
                r.metric.clone(),
                r.value.to_string(),
                r.ms.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, &self.records)?;
        Ok(())
    }

    pub fn write<W: Write>(&self, format: OutputFormat, w: W) -> Result<()> {
        match format {
            OutputFormat::Csv => self.write_csv(w),
            OutputFormat::Json => self.write_json(w),
        }
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<Table> {
    match cfg.experiment {
        Experiment::Consistency => run_consistency(cfg),
        Experiment::Hellinger => run_hellinger(cfg),
        Experiment::Selection => run_selection(cfg),
        Experiment::ApproxReport => run_approx_report(cfg),
    }
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    replicate: usize,
    n: usize,
    seed: u64,
    start: Instant,
    rows: Vec<ReplicateRecord>,
}

impl Ctx<'_> {
    fn push(&mut self, metric: &str, value: f64) {
        let ms = if self.cfg.timing {
            self.start.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        };
        self.rows.push(ReplicateRecord {
            experiment: self.cfg.experiment.id().into(),
            replicate: Some(self.replicate),
            n: self.n,
            metric: metric.into(),
            value,
            ms,
        });
    }

    fn sample(&self) -> Result<crate::dist::Sample> {
        poly_sample(&self.cfg.truth, self.n, derive_seed(self.seed, &[0]))
    }

    fn fit_seed(&self) -> u64 {
        derive_seed(self.seed, &[1])
    }
}

/// Runs `body` for every `(n, replicate)` pair in parallel. A failing
/// replicate contributes a `failed` row and a log entry instead of aborting.
fn replicates<F>(cfg: &ExperimentConfig, body: F) -> Result<Table>
where
    F: Fn(&mut Ctx<'_>) -> Result<()> + Sync,
{
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.n_grid.len())
        .flat_map(|k| (0..cfg.replicates).map(move |r| (k, r)))
        .collect();
    let rows: Vec<Vec<ReplicateRecord>> = jobs
        .into_par_iter()
        .map(|(k, r)| {
            let mut ctx = Ctx {
                cfg,
                replicate: r,
                n: cfg.n_grid[k],
                seed: derive_seed(cfg.seed, &[r as u64, k as u64]),
                start: Instant::now(),
                rows: Vec::new(),
            };
            if let Err(e) = body(&mut ctx) {
                log::warn!(
                    "{} replicate {r} at n = {}: {e}",
                    cfg.experiment.id(),
                    ctx.n
                );
                ctx.push("failed", 1.0);
            }
            ctx.rows
        })
        .collect();
    let mut table = Table {
        records: rows.into_iter().flatten().collect(),
    };
    table.canonicalize();
    Ok(table)
}

fn summary(cfg: &ExperimentConfig, n: usize, metric: &str, value: f64) -> ReplicateRecord {
    ReplicateRecord {
        experiment: cfg.experiment.id().into(),
        replicate: None,
        n,
        metric: metric.into(),
        value,
        ms: 0.0,
    }
}

/// Linear-interpolation quantile of a non-empty slice.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Least-squares slope of `y` against `x`.
fn slope(points: &[(f64, f64)]) -> f64 {
    let m = points.len() as f64;
    let (mx, my) = (
        points.iter().map(|p| p.0).sum::<f64>() / m,
        points.iter().map(|p| p.1).sum::<f64>() / m,
    );
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Fits with the true number of components and records the label-free
/// distance to the truth together with both log-likelihoods.
pub fn run_consistency(cfg: &ExperimentConfig) -> Result<Table> {
    let mut table = replicates(cfg, |ctx| {
        let sample = ctx.sample()?;
        let fit = em_fit(&sample, &cfg.fit_config(cfg.truth.g(), ctx.fit_seed()))?;
        ctx.push("distance", permutation_distance(&fit.params, &cfg.truth)?);
        ctx.push("loglik", fit.loglik);
        ctx.push("loglik_truth", log_likelihood(&cfg.truth, &sample));
        Ok(())
    })?;
    for &n in &cfg.n_grid {
        let d = table.values(n, "distance");
        if !d.is_empty() {
            table
                .records
                .push(summary(cfg, n, "median_distance", quantile(&d, 0.5)));
            table
                .records
                .push(summary(cfg, n, "p90_distance", quantile(&d, 0.9)));
        }
    }
    table.canonicalize();
    Ok(table)
}

/// Records the Hellinger distance `H = √H²` between the fit and the truth,
/// then the fraction of replicates with `H ≥ δ` for each threshold.
pub fn run_hellinger(cfg: &ExperimentConfig) -> Result<Table> {
    let truth = DensityFn::from_params(&cfg.truth);
    let mut table = replicates(cfg, |ctx| {
        let sample = ctx.sample()?;
        let fit = em_fit(&sample, &cfg.fit_config(cfg.truth.g(), ctx.fit_seed()))?;
        let h2 = hellinger_sq(
            &truth,
            &DensityFn::from_params(&fit.params),
            &cfg.quadrature,
        )?;
        ctx.push("hellinger", h2.sqrt());
        Ok(())
    })?;
    let mut decay: Vec<Vec<(f64, f64)>> = vec![Vec::new(); HELLINGER_THRESHOLDS.len()];
    for &n in &cfg.n_grid {
        let h = table.values(n, "hellinger");
        if h.is_empty() {
            continue;
        }
        table
            .records
            .push(summary(cfg, n, "mean_hellinger", mean(&h)));
        for (i, &d) in HELLINGER_THRESHOLDS.iter().enumerate() {
            let frac = h.iter().filter(|&&v| v >= d).count() as f64 / h.len() as f64;
            table
                .records
                .push(summary(cfg, n, &format!("exceed_{d}"), frac));
            if frac > 0.0 {
                decay[i].push((n as f64, frac.ln()));
            }
        }
    }
    for (i, &d) in HELLINGER_THRESHOLDS.iter().enumerate() {
        if decay[i].len() >= 2 {
            table.records.push(summary(
                cfg,
                0,
                &format!("log_exceed_slope_{d}"),
                slope(&decay[i]),
            ));
        }
    }
    table.canonicalize();
    Ok(table)
}

/// Fits `g = 1..=γ`, calibrates `κ′` by the dimension jump and records the
/// selected `g` and the squared Hellinger divergence of the selected fit.
pub fn run_selection(cfg: &ExperimentConfig) -> Result<Table> {
    let truth = DensityFn::from_params(&cfg.truth);
    let mut table = replicates(cfg, |ctx| {
        let sample = ctx.sample()?;
        let fits = fit_nested(&sample, cfg.gamma, &cfg.fit_config(1, ctx.fit_seed()))?;
        let (sel, cal) = select_calibrated(&fits, sample.len(), &cfg.selection, &cfg.calibration)?;
        let chosen = &fits[sel.chosen_g - 1];
        let h2 = hellinger_sq(
            &truth,
            &DensityFn::from_params(&chosen.params),
            &cfg.quadrature,
        )?;
        ctx.push("g_hat", sel.chosen_g as f64);
        if let Some(cal) = cal {
            ctx.push("kappa_prime", cal.kappa_prime);
        }
        ctx.push("hellinger_sq", h2);
        Ok(())
    })?;
    for &n in &cfg.n_grid {
        let g = table.values(n, "g_hat");
        let failed = table.values(n, "failed").len();
        table.records.push(summary(cfg, n, "failed", failed as f64));
        if g.is_empty() {
            continue;
        }
        for k in 1..=cfg.gamma {
            let count = g.iter().filter(|&&v| v == k as f64).count();
            table
                .records
                .push(summary(cfg, n, &format!("count_g_{k}"), count as f64));
        }
        table.records.push(summary(
            cfg,
            n,
            "mean_hellinger_sq",
            mean(&table.values(n, "hellinger_sq")),
        ));
    }
    table.canonicalize();
    Ok(table)
}

/// Per target and `g`: measured sup error, its bound, the mass defect
/// `|Σπ − 1|`, whether the bound holds, and `K(h‖s)` for the squared
/// polygonal density `s`.
pub fn run_approx_report(cfg: &ExperimentConfig) -> Result<Table> {
    cfg.validate()?;
    let jobs: Vec<(String, usize)> = cfg
        .targets
        .iter()
        .flat_map(|t| cfg.g_grid.iter().map(move |&g| (t.clone(), g)))
        .collect();
    let rows: Vec<Result<Vec<ReplicateRecord>>> = jobs
        .into_par_iter()
        .map(|(name, g)| {
            let target: Target = name.parse()?;
            let h = target.concave();
            let start = Instant::now();
            let approx = polygonal_from_concave(&h, g)?;
            let kl = kl_divergence(
                &target.density(),
                &squared_polygonal(&h, g, &cfg.quadrature)?.density,
                &cfg.quadrature,
            )?;
            let ms = if cfg.timing {
                start.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            };
            let mut metrics = vec![
                ("sup_error", approx.sup_error),
                ("mass_defect", (approx.mass() - 1.0).abs()),
                ("kl_squared", kl),
            ];
            if let Some(b) = approx.bound {
                let ok = approx.sup_error <= b + 1e-10;
                if !ok {
                    log::warn!(
                        "{name}, g = {g}: sup error {} exceeds bound {b}",
                        approx.sup_error
                    );
                }
                metrics.push(("bound", b));
                metrics.push(("within_bound", if ok { 1.0 } else { 0.0 }));
            }
            Ok(metrics
                .into_iter()
                .map(|(m, value)| ReplicateRecord {
                    experiment: cfg.experiment.id().into(),
                    replicate: None,
                    n: g,
                    metric: format!("{name}:{m}"),
                    value,
                    ms,
                })
                .collect())
        })
        .collect();
    let mut table = Table {
        records: rows
            .into_iter()
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect(),
    };
    table.canonicalize();
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(experiment: Experiment) -> ExperimentConfig {
        ExperimentConfig {
            n_grid: vec![100, 400],
            replicates: 3,
            restarts: 2,
            gamma: 3,
            ..ExperimentConfig::new(experiment)
        }
    }

    fn csv(t: &Table) -> String {
        let mut out = Vec::new();
        t.write_csv(&mut out).unwrap();
        String::from_utf8(out).unwrap()
    }

    #[test]
    fn quantiles() {
        assert_eq!(quantile(&[3.0, 1.0, 2.0], 0.5), 2.0);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
        assert!((quantile(&(0..=10).map(f64::from).collect::<Vec<_>>(), 0.9) - 9.0).abs() < 1e-12);
        assert!((slope(&[(0.0, 1.0), (1.0, 3.0), (2.0, 5.0)]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn consistency_table_is_deterministic_and_summarized() {
        let cfg = small(Experiment::Consistency);
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(csv(&a), csv(&b));
        assert_eq!(a.values(100, "distance").len(), 3);
        let d = a.values(400, "distance");
        assert_eq!(a.summary(400, "median_distance"), Some(quantile(&d, 0.5)));
        let text = csv(&a);
        assert!(text.starts_with("experiment,replicate,n,metric,value,ms\n"));
        assert!(text.contains("consistency,,400,median_distance,"));
    }

    #[test]
    fn replicate_rows_do_not_depend_on_the_replicate_count() {
        let a = run(&small(Experiment::Hellinger)).unwrap();
        let more = ExperimentConfig {
            replicates: 5,
            ..small(Experiment::Hellinger)
        };
        let b = run(&more).unwrap();
        assert_eq!(
            a.values(400, "hellinger"),
            b.values(400, "hellinger")[..3].to_vec()
        );
        let h = b.values(400, "hellinger");
        assert!(h.iter().all(|&v| (0.0..=2f64.sqrt()).contains(&v)));
    }

    #[test]
    fn selection_with_one_model_picks_it() {
        let cfg = ExperimentConfig {
            gamma: 1,
            ..small(Experiment::Selection)
        };
        let t = run(&cfg).unwrap();
        assert_eq!(t.summary(100, "failed"), Some(0.0));
        assert_eq!(t.values(100, "g_hat"), vec![1.0; 3]);
        assert_eq!(t.summary(400, "count_g_1"), Some(3.0));
    }

    #[test]
    fn approx_report_rows() {
        let cfg = ExperimentConfig::new(Experiment::ApproxReport);
        let t = run(&cfg).unwrap();
        for g in [2usize, 4, 8, 16] {
            let row = |m: &str| {
                t.records
                    .iter()
                    .find(|r| r.n == g && r.metric == m)
                    .unwrap()
                    .value
            };
            assert!((row("quad6:sup_error") - 1.5 / (g * g) as f64).abs() < 1e-10);
            assert_eq!(row("uniform:sup_error"), 0.0);
            assert_eq!(row("sine:within_bound"), 1.0);
        }
    }

    #[test]
    fn config_json_defaults() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"experiment":"approx-report","seed":7}"#).unwrap();
        assert_eq!(cfg.experiment, Experiment::ApproxReport);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.n_grid, vec![200, 2000, 20000]);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"replicate":3}"#).is_err());
        let bad = ExperimentConfig {
            replicates: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
